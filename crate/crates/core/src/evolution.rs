//! Time propagation and the experiments that drive the diffusion speed up.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::chain::{build_q, Variant};
use crate::error::{Error, Result};
use crate::expm::expm;
use crate::fem::assemble_forms_with;
use crate::fv::{assemble_dual_fv, TraceOrder};
use crate::generator::DiscreteGenerator;
use crate::graph::MetricGraph;
use crate::grid::{DiscreteFunction, EdgeGrid, Layout, PiecewiseConstant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    /// Dense scaling-and-squaring exponential.
    #[default]
    Expm,
    /// Crank–Nicolson with a backward-Euler start, halving the step until
    /// two successive step sizes agree.
    CrankNicolson,
}

/// Relative accuracy targeted by [`Method::CrankNicolson`].
pub const CN_TOLERANCE: f64 = 1e-8;
const CN_MAX_STEPS: usize = 1 << 16;

pub fn propagate(
    gen: &DiscreteGenerator,
    phi0: &DiscreteFunction,
    t: f64,
    method: Method,
) -> Result<DiscreteFunction> {
    gen.check_function(phi0)?;
    check_time(t)?;
    if t == 0.0 {
        return Ok(phi0.clone());
    }
    match method {
        Method::Expm => Propagator::new(gen, t)?.apply(phi0),
        Method::CrankNicolson => {
            let x = crank_nicolson(&gen.matrix, &DVector::from_column_slice(&phi0.values), t)?;
            Ok(gen.function(x.iter().copied().collect()))
        }
    }
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "time must be nonnegative, got {t}"
        )))
    }
}

/// States at `0, dt, 2dt, …, steps·dt`, reusing one step operator.
pub fn trajectory(
    gen: &DiscreteGenerator,
    phi0: &DiscreteFunction,
    dt: f64,
    steps: usize,
    method: Method,
) -> Result<Vec<DiscreteFunction>> {
    gen.check_function(phi0)?;
    check_time(dt)?;
    let mut states = vec![phi0.clone()];
    match method {
        Method::Expm => {
            let step = Propagator::new(gen, dt)?;
            for k in 0..steps {
                let next = step.apply(&states[k])?;
                states.push(next);
            }
        }
        Method::CrankNicolson => {
            for k in 0..steps {
                let next = propagate(gen, &states[k], dt, method)?;
                states.push(next);
            }
        }
    }
    Ok(states)
}

/// The dense operator `e^{tA}`.
///
/// For mass-conserving generators the exponential is taken in coordinates
/// where one unknown is the total mass `wᵀu`: its row of the generator is
/// then exactly zero, so rounding in the squaring phase cannot create or
/// destroy mass. In the original coordinates that rounding grows like
/// `2^s ε` over `s` squarings, which for stiff grids reaches `1e-9`.
#[derive(Debug, Clone)]
pub struct Propagator {
    matrix: DMatrix<f64>,
    mass_row: Option<(usize, Vec<f64>)>,
    template: DiscreteGenerator,
}

impl Propagator {
    pub fn new(gen: &DiscreteGenerator, t: f64) -> Result<Self> {
        check_time(t)?;
        let template = DiscreteGenerator {
            matrix: DMatrix::zeros(0, 0),
            gram: None,
            ..gen.clone()
        };
        if !gen.conserves_mass {
            return Ok(Self {
                matrix: expm(&(&gen.matrix * t))?,
                mass_row: None,
                template,
            });
        }
        let w = &gen.weights;
        let p = (0..w.len())
            .max_by(|&a, &b| w[a].total_cmp(&w[b]))
            .expect("nonempty generator");
        let n = gen.dim();
        // T = identity with row p replaced by wᵀ/w_p; entries stay ≤ 1 so
        // the transformed generator is no larger than the original
        let mut to_mass = DMatrix::identity(n, n);
        let mut from_mass = DMatrix::identity(n, n);
        for k in 0..n {
            if k != p {
                to_mass[(p, k)] = w[k] / w[p];
                from_mass[(p, k)] = -w[k] / w[p];
            }
        }
        let mut reduced = &to_mass * &gen.matrix * &from_mass * t;
        reduced.row_mut(p).fill(0.0);
        let mut e = expm(&reduced)?;
        e.row_mut(p).fill(0.0);
        e[(p, p)] = 1.0;
        Ok(Self {
            matrix: e,
            mass_row: Some((p, w.clone())),
            template,
        })
    }

    pub fn apply(&self, phi: &DiscreteFunction) -> Result<DiscreteFunction> {
        self.template.check_function(phi)?;
        let x = DVector::from_column_slice(&phi.values);
        let out = match &self.mass_row {
            None => &self.matrix * x,
            Some((p, w)) => {
                let mut y = x;
                y[*p] = w
                    .iter()
                    .zip(phi.values.iter())
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    / w[*p];
                let mut z = &self.matrix * y;
                let rest: f64 = (0..z.len()).filter(|k| k != p).map(|k| w[k] * z[k]).sum();
                z[*p] -= rest / w[*p];
                z
            }
        };
        Ok(self.template.function(out.iter().copied().collect()))
    }
}

fn cn_run(a: &DMatrix<f64>, x0: &DVector<f64>, t: f64, steps: usize) -> Result<DVector<f64>> {
    let n = a.nrows();
    let dt = t / steps as f64;
    let id = DMatrix::<f64>::identity(n, n);
    // two backward-Euler half steps damp the stiff modes CN would only flip
    let euler = (&id - a * (dt / 2.0)).lu();
    let mut x = x0.clone();
    for _ in 0..2 {
        x = euler
            .solve(&x)
            .ok_or(Error::Singular("backward Euler step"))?;
    }
    let implicit = (&id - a * (dt / 2.0)).lu();
    let explicit = &id + a * (dt / 2.0);
    for _ in 1..steps {
        x = implicit
            .solve(&(&explicit * &x))
            .ok_or(Error::Singular("Crank–Nicolson step"))?;
    }
    Ok(x)
}

fn crank_nicolson(a: &DMatrix<f64>, x0: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    let mut steps = 16;
    let mut coarse = cn_run(a, x0, t, steps)?;
    while steps < CN_MAX_STEPS {
        steps *= 2;
        let fine = cn_run(a, x0, t, steps)?;
        let scale = fine.norm().max(f64::MIN_POSITIVE);
        // second order: the fine error is about a third of the difference
        if (&fine - &coarse).norm() / 3.0 <= CN_TOLERANCE * scale {
            return Ok(fine);
        }
        coarse = fine;
    }
    Err(Error::StepControl {
        tolerance: CN_TOLERANCE,
        steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l1: f64,
    pub l2: f64,
    pub min: f64,
    pub mass: f64,
}

/// Quadrature norms `Σ w|φ|`, `(Σ wφ²)^{1/2}`, the minimum and `Σ wφ`.
pub fn norms(values: &[f64], weights: &[f64]) -> Result<Norms> {
    if values.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            got: values.len(),
        });
    }
    let pairs = || values.iter().zip(weights);
    Ok(Norms {
        l1: pairs().map(|(v, w)| w * v.abs()).sum(),
        l2: pairs().map(|(v, w)| w * v * v).sum::<f64>().sqrt(),
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        mass: pairs().map(|(v, w)| w * v).sum(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Discretization {
    Fv(TraceOrder),
    Fem { lumped: bool },
}

impl Discretization {
    pub fn layout(self) -> Layout {
        match self {
            Discretization::Fv(_) => Layout::Cells,
            Discretization::Fem { .. } => Layout::Nodes,
        }
    }

    pub fn assemble(
        self,
        graph: &MetricGraph,
        grid: &EdgeGrid,
        kappa: f64,
    ) -> Result<DiscreteGenerator> {
        match self {
            Discretization::Fv(order) => assemble_dual_fv(graph, grid, kappa, order),
            Discretization::Fem { lumped } => {
                assemble_forms_with(graph, grid, kappa, lumped)?.generator()
            }
        }
    }
}

/// Initial data described per edge in local coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    /// 1 on one edge, 0 elsewhere.
    Indicator(usize),
    Constant(f64),
    /// `x / d_i` on every edge.
    Ramp,
}

impl InitialData {
    pub fn sample(
        &self,
        graph: &MetricGraph,
        grid: &EdgeGrid,
        layout: Layout,
    ) -> Result<DiscreteFunction> {
        grid.check(graph)?;
        let lengths = graph.lengths();
        Ok(match *self {
            InitialData::Indicator(j) => {
                if j >= graph.num_edges() {
                    return Err(Error::UnknownEdge(j));
                }
                grid.sample(layout, |i, _| if i == j { 1.0 } else { 0.0 })
            }
            InitialData::Constant(c) => grid.constant(layout, c),
            InitialData::Ramp => grid.sample(layout, |i, x| x / lengths[i]),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    pub kappa: f64,
    pub t: f64,
    pub err_l1: f64,
    pub err_l2: f64,
    /// `‖P e^{tA}φ0 − e^{tQ}Pφ0‖` in the discretization's norm on edge constants.
    pub err_projected: f64,
    pub mass_drift: f64,
    pub min_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub discretization: Discretization,
    pub records: Vec<SweepRecord>,
    /// Norm of the initial data in the discretization's norm.
    pub initial_norm: f64,
}

impl SweepResult {
    /// The error the discretization is judged by: `L¹` for finite volumes,
    /// `L²` for elements.
    pub fn primary_error(&self, rec: &SweepRecord) -> f64 {
        match self.discretization {
            Discretization::Fv(_) => rec.err_l1,
            Discretization::Fem { .. } => rec.err_l2,
        }
    }

    /// Primary errors at time `t`, in increasing `κ`.
    pub fn errors_at(&self, t: f64) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.t == t)
            .map(|r| self.primary_error(r))
            .collect()
    }

    pub fn times(&self) -> Vec<f64> {
        let mut ts: Vec<f64> = self.records.iter().map(|r| r.t).collect();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        ts
    }

    /// Whether the error at every sampled time decreases along the sweep;
    /// `slack` allows ties up to rounding when nonstrict.
    pub fn is_monotone(&self, strict: bool, slack: f64) -> bool {
        self.times().into_iter().all(|t| {
            self.errors_at(t).windows(2).all(|w| {
                if strict {
                    w[1] < w[0]
                } else {
                    w[1] <= w[0] + slack
                }
            })
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("kappa,t,err_l1,err_l2,err_projected,mass_drift,min_value\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.kappa, r.t, r.err_l1, r.err_l2, r.err_projected, r.mass_drift, r.min_value
            );
        }
        out
    }
}

/// Thread count from `GRAPHDIFF_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var("GRAPHDIFF_THREADS")
        .ok()?
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
}

/// Runs the κ sweep, comparing `e^{tA(κ)}φ0` against the lifted limit
/// `e^{tQ}Pφ0` for every pair `(κ, t)`.
pub fn kappa_sweep(
    graph: &MetricGraph,
    grid: &EdgeGrid,
    kappas: &[f64],
    times: &[f64],
    phi0: &InitialData,
    discretization: Discretization,
    method: Method,
) -> Result<SweepResult> {
    if kappas.is_empty() || times.is_empty() {
        return Err(Error::InvalidArgument(
            "κ and t lists must be nonempty".into(),
        ));
    }
    if kappas.windows(2).any(|w| w[1] <= w[0]) || kappas[0] <= 0.0 {
        return Err(Error::InvalidArgument(
            "κ values must be positive and strictly increasing".into(),
        ));
    }
    if times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(Error::InvalidArgument("times must be nonnegative".into()));
    }
    let layout = discretization.layout();
    let u0 = phi0.sample(graph, grid, layout)?;
    let q = build_q(graph, Variant::Dual)?;
    let p0 = u0.project();
    let limits = times
        .iter()
        .map(|&t| q.propagate(&p0, t))
        .collect::<Result<Vec<PiecewiseConstant>>>()?;
    let mass0 = u0.mass();
    let piecewise_norm = |p: &PiecewiseConstant| match discretization {
        Discretization::Fv(_) => p.l1_norm(),
        Discretization::Fem { .. } => p.l2_norm(),
    };

    let run_kappa = |kappa: f64| -> Result<Vec<SweepRecord>> {
        let gen = discretization.assemble(graph, grid, kappa)?;
        times
            .iter()
            .zip(&limits)
            .map(|(&t, limit)| {
                let u = propagate(&gen, &u0, t, method)?;
                let diff = u.sub(&grid.lift(layout, &limit.values))?;
                let projected = PiecewiseConstant::new(
                    u.project()
                        .values
                        .iter()
                        .zip(&limit.values)
                        .map(|(a, b)| a - b)
                        .collect(),
                    graph.lengths(),
                )?;
                Ok(SweepRecord {
                    kappa,
                    t,
                    err_l1: diff.l1_norm(),
                    err_l2: diff.l2_norm(),
                    err_projected: piecewise_norm(&projected),
                    mass_drift: u.mass() - mass0,
                    min_value: u.min_value(),
                })
            })
            .collect()
    };

    let per_kappa: Vec<Result<Vec<SweepRecord>>> = match thread_cap() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(|| kappas.par_iter().map(|&k| run_kappa(k)).collect()),
        None => kappas.par_iter().map(|&k| run_kappa(k)).collect(),
    };
    let mut records = Vec::with_capacity(kappas.len() * times.len());
    for r in per_kappa {
        records.extend(r?);
    }
    // deterministic (κ, t) order regardless of the order of `times`
    records.sort_by(|a, b| a.kappa.total_cmp(&b.kappa).then(a.t.total_cmp(&b.t)));
    let initial_norm = match discretization {
        Discretization::Fv(_) => u0.l1_norm(),
        Discretization::Fem { .. } => u0.l2_norm(),
    };
    Ok(SweepResult {
        discretization,
        records,
        initial_norm,
    })
}
