//! Finite-volume discretization of the membrane diffusion on integrable
//! functions, and a nodal finite-difference discretization of the diffusion
//! on continuous functions for duality checks.
//!
//! The finite-volume scheme stores cell averages. Interior faces carry the
//! flux `κσ_i(φ_{k+1} − φ_k)/h_i`; the two end faces of edge `i` carry the
//! membrane fluxes `σ_i F_{L,i}φ` and `σ_i F_{R,i}φ`. Every flux leaving one
//! cell enters another, so the total-mass rate telescopes to
//! `Σ_i σ_i (F_{R,i} − F_{L,i})φ`, which vanishes for conservative graphs.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{ensure, Error, Result};
use crate::generator::{DiscreteGenerator, GeneratorKind};
use crate::graph::{EndpointRef, MetricGraph, Side};
use crate::grid::{DiscreteFunction, EdgeGrid, Layout};

/// How endpoint traces are read off cell averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraceOrder {
    /// Value of the adjacent cell. Keeps the generator Metzler.
    #[default]
    Nearest,
    /// Linear extrapolation from the two cells next to the end. Second
    /// order, but may introduce small negative off-diagonals.
    Linear,
}

impl TraceOrder {
    pub fn from_order(order: u8) -> Result<Self> {
        match order {
            1 => Ok(TraceOrder::Nearest),
            2 => Ok(TraceOrder::Linear),
            _ => Err(Error::InvalidArgument(format!(
                "trace order must be 1 or 2, got {order}"
            ))),
        }
    }
}

/// `(cell index, weight)` pairs expressing the trace at `at`.
fn trace_stencil(
    grid: &EdgeGrid,
    offsets: &[usize],
    at: EndpointRef,
    order: TraceOrder,
) -> Vec<(usize, f64)> {
    let (first, inward) = match at.side {
        Side::Left => (offsets[at.edge], 1isize),
        Side::Right => (offsets[at.edge] + grid.cells(at.edge) - 1, -1isize),
    };
    match order {
        TraceOrder::Nearest => vec![(first, 1.0)],
        TraceOrder::Linear => vec![(first, 1.5), ((first as isize + inward) as usize, -0.5)],
    }
}

fn check_kappa(kappa: f64) -> Result<()> {
    ensure(kappa.is_finite() && kappa > 0.0, || {
        format!("κ must be positive, got {kappa}")
    })
}

pub fn assemble_dual_fv(
    graph: &MetricGraph,
    grid: &EdgeGrid,
    kappa: f64,
    trace_order: TraceOrder,
) -> Result<DiscreteGenerator> {
    let table = graph.trace_functionals()?;
    grid.check(graph)?;
    check_kappa(kappa)?;
    let layout = Layout::Cells;
    let offsets = grid.offsets(layout);
    let n = grid.len(layout);
    let mut a = DMatrix::zeros(n, n);
    for (i, edge) in graph.edges.iter().enumerate() {
        let h = grid.spacing(i);
        let m = grid.cells(i);
        let o = offsets[i];
        let coef = kappa * edge.sigma / (h * h);
        for k in 0..m - 1 {
            a[(o + k, o + k)] -= coef;
            a[(o + k, o + k + 1)] += coef;
            a[(o + k + 1, o + k + 1)] -= coef;
            a[(o + k + 1, o + k)] += coef;
        }
        // flux σ_i F_{L,i}φ leaves the first cell, σ_i F_{R,i}φ enters the last
        for (side, row, sign) in [(Side::Left, o, -1.0), (Side::Right, o + m - 1, 1.0)] {
            let functional = table.at(EndpointRef::new(i, side));
            for &(at, c) in &functional.terms {
                for (col, w) in trace_stencil(grid, &offsets, at, trace_order) {
                    a[(row, col)] += sign * edge.sigma * c * w / h;
                }
            }
        }
    }
    Ok(DiscreteGenerator {
        matrix: a,
        layout,
        grid: grid.clone(),
        weights: grid.weights(layout),
        kappa,
        kind: GeneratorKind::DualFv,
        gram: None,
        conserves_mass: graph.is_conservative(),
    })
}

/// Node-centered differences for `κσ f''` with the membrane conditions
/// `f'(L_i) = κ⁻¹[l_i f(L_i) − Σ_j l_ij f(V_j)]` and
/// `−f'(R_i) = κ⁻¹[r_i f(R_i) − Σ_j r_ij f(V_j)]`, imposed through ghost
/// points.
pub fn assemble_primal_fd(
    graph: &MetricGraph,
    grid: &EdgeGrid,
    kappa: f64,
) -> Result<DiscreteGenerator> {
    graph.ensure_valid()?;
    grid.check(graph)?;
    check_kappa(kappa)?;
    let layout = Layout::Nodes;
    let offsets = grid.offsets(layout);
    let n = grid.len(layout);
    let mut a = DMatrix::zeros(n, n);
    for (i, edge) in graph.edges.iter().enumerate() {
        let h = grid.spacing(i);
        let m = grid.cells(i);
        let o = offsets[i];
        let coef = kappa * edge.sigma / (h * h);
        for k in 1..m {
            a[(o + k, o + k - 1)] += coef;
            a[(o + k, o + k)] -= 2.0 * coef;
            a[(o + k, o + k + 1)] += coef;
        }
        for (side, row, inner) in [(Side::Left, o, o + 1), (Side::Right, o + m, o + m - 1)] {
            a[(row, row)] -= 2.0 * coef;
            a[(row, inner)] += 2.0 * coef;
            let robin = 2.0 * edge.sigma / h;
            a[(row, row)] -= robin * edge.total(side);
            for (&j, &c) in edge.couplings(side) {
                let target_side = if graph.edges[j].vertex(Side::Left) == edge.vertex(side) {
                    Side::Left
                } else {
                    Side::Right
                };
                let col = grid.endpoint_dof(layout, EndpointRef::new(j, target_side));
                a[(row, col)] += robin * c;
            }
        }
    }
    Ok(DiscreteGenerator {
        matrix: a,
        layout,
        grid: grid.clone(),
        weights: grid.weights(layout),
        kappa,
        kind: GeneratorKind::PrimalFd,
        gram: None,
        conserves_mass: false,
    })
}

/// Rate of change of total mass for cell values `phi`, in closed form:
/// `Σ_j σ_j [(Σ_i l_ji − l_j) φ(L_j) + (Σ_i r_ji − r_j) φ(R_j)]`, the traces
/// read with `trace_order`. Zero for conservative graphs, nonpositive for
/// nonnegative `phi` under nearest-cell traces.
pub fn boundary_leak(
    graph: &MetricGraph,
    phi: &DiscreteFunction,
    trace_order: TraceOrder,
) -> Result<f64> {
    graph.ensure_valid()?;
    phi.grid.check(graph)?;
    if phi.layout != Layout::Cells {
        return Err(Error::GridMismatch(
            "boundary leak needs cell values".into(),
        ));
    }
    let offsets = phi.grid.offsets(Layout::Cells);
    let trace = |at: EndpointRef| -> f64 {
        trace_stencil(&phi.grid, &offsets, at, trace_order)
            .iter()
            .map(|&(k, w)| w * phi.values[k])
            .sum()
    };
    Ok(graph
        .edges
        .iter()
        .enumerate()
        .map(|(j, e)| {
            let passed = |side: Side| e.couplings(side).values().sum::<f64>() - e.total(side);
            e.sigma
                * (passed(Side::Left) * trace(EndpointRef::left(j))
                    + passed(Side::Right) * trace(EndpointRef::right(j)))
        })
        .sum())
}

/// Solves `(λ − A) u = rhs`.
pub fn resolvent_solve(
    gen: &DiscreteGenerator,
    lambda: f64,
    rhs: &DiscreteFunction,
) -> Result<DiscreteFunction> {
    gen.check_function(rhs)?;
    let n = gen.dim();
    let shifted = DMatrix::identity(n, n) * lambda - &gen.matrix;
    let u = shifted
        .lu()
        .solve(&DVector::from_column_slice(&rhs.values))
        .ok_or(Error::Singular("resolvent"))?;
    Ok(gen.function(u.iter().copied().collect()))
}

/// `Σ_k h c_k (n_k + n_{k+1}) / 2`: the integral of a cell function times
/// a nodal (piecewise linear) function.
pub fn cell_node_pairing(cells: &DiscreteFunction, nodes: &DiscreteFunction) -> Result<f64> {
    if cells.layout != Layout::Cells || nodes.layout != Layout::Nodes || cells.grid != nodes.grid {
        return Err(Error::GridMismatch(
            "pairing needs a cell and a nodal function on one grid".into(),
        ));
    }
    let mut total = 0.0;
    for i in 0..cells.grid.num_edges() {
        let h = cells.grid.spacing(i);
        let c = cells.edge_values(i);
        let v = nodes.edge_values(i);
        total += c
            .iter()
            .zip(v.windows(2))
            .map(|(c, p)| h * c * 0.5 * (p[0] + p[1]))
            .sum::<f64>();
    }
    Ok(total)
}

/// `|⟨φ, A f⟩ − ⟨A* φ, f⟩|` where `A` is the nodal primal generator acting
/// on `f` and `A*` the finite-volume dual generator acting on `φ`.
///
/// With [`TraceOrder::Nearest`] the defect of smooth functions is `O(h)`,
/// with a leading coefficient that can be arbitrarily small for particular
/// functions; [`TraceOrder::Linear`] makes it `O(h²)`.
pub fn duality_defect(
    graph: &MetricGraph,
    grid: &EdgeGrid,
    kappa: f64,
    trace_order: TraceOrder,
    f: &DiscreteFunction,
    phi: &DiscreteFunction,
) -> Result<f64> {
    if f.grid != *grid || phi.grid != *grid {
        return Err(Error::GridMismatch(
            "f and φ must live on the given grid".into(),
        ));
    }
    let primal = assemble_primal_fd(graph, grid, kappa)?;
    let dual = assemble_dual_fv(graph, grid, kappa, trace_order)?;
    let af = primal.apply(f)?;
    let aphi = dual.apply(phi)?;
    Ok((cell_node_pairing(phi, &af)? - cell_node_pairing(&aphi, f)?).abs())
}

/// A constant plus `(amplitude, wavenumber, phase)` cosine modes on one edge.
pub type EdgeModes = (f64, Vec<(f64, f64, f64)>);

/// A smooth function on the graph, `g_i + α_i b_L + β_i b_R` on edge `i`,
/// where `g_i` is a short cosine series and the bumps `b_L(x) = x(1 − x/d)²`,
/// `b_R(x) = −(d − x)(x/d)²` adjust the end slopes without moving the end
/// values.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothGraphFunction {
    lengths: Vec<f64>,
    /// Per edge `(amplitude, wavenumber, phase)` triples plus a constant.
    modes: Vec<EdgeModes>,
    slope_fix: Vec<(f64, f64)>,
}

/// Which end-slope conditions [`SmoothGraphFunction::enforce`] imposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditions {
    /// `f'(L_i) = κ⁻¹[l_i f(L_i) − Σ l_ij f(V_j)]`, `−f'(R_i) = κ⁻¹[r_i f(R_i) − Σ r_ij f(V_j)]`.
    Primal,
    /// `κ φ'(L_i) = F_{L,i}φ`, `κ φ'(R_i) = F_{R,i}φ`.
    Dual,
}

impl SmoothGraphFunction {
    pub fn cosines(graph: &MetricGraph, modes: Vec<EdgeModes>) -> Result<Self> {
        if modes.len() != graph.num_edges() {
            return Err(Error::DimensionMismatch {
                expected: graph.num_edges(),
                got: modes.len(),
            });
        }
        Ok(Self {
            lengths: graph.lengths(),
            slope_fix: vec![(0.0, 0.0); modes.len()],
            modes,
        })
    }

    /// Random offset plus cosines of wavenumbers `π/2, π, 3π/2` with
    /// decaying random amplitudes and random phases, on every edge.
    pub fn random(graph: &MetricGraph, rng: &mut impl Rng) -> Self {
        let modes = (0..graph.num_edges())
            .map(|_| {
                let terms = (1..=3)
                    .map(|k| {
                        let amp = rng.gen_range(-1.0..1.0) / k as f64;
                        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                        (amp, k as f64 * std::f64::consts::FRAC_PI_2, phase)
                    })
                    .collect();
                (rng.gen_range(0.5..1.5), terms)
            })
            .collect();
        Self {
            lengths: graph.lengths(),
            slope_fix: vec![(0.0, 0.0); graph.num_edges()],
            modes,
        }
    }

    fn base(&self, i: usize, x: f64) -> [f64; 3] {
        let (c0, terms) = &self.modes[i];
        let mut out = [*c0, 0.0, 0.0];
        for &(amp, k, ph) in terms {
            let (s, c) = (k * x + ph).sin_cos();
            out[0] += amp * c;
            out[1] -= amp * k * s;
            out[2] -= amp * k * k * c;
        }
        out
    }

    /// Value, first and second derivative on edge `i` at local coordinate `x`.
    pub fn jet(&self, i: usize, x: f64) -> [f64; 3] {
        let d = self.lengths[i];
        let [g, g1, g2] = self.base(i, x);
        let (alpha, beta) = self.slope_fix[i];
        let u = x / d;
        let bl = [
            x * (1.0 - u).powi(2),
            (1.0 - u) * (1.0 - 3.0 * u),
            (6.0 * u - 4.0) / d,
        ];
        let br = [-(d - x) * u * u, u * (3.0 * u - 2.0), (6.0 * u - 2.0) / d];
        [
            g + alpha * bl[0] + beta * br[0],
            g1 + alpha * bl[1] + beta * br[1],
            g2 + alpha * bl[2] + beta * br[2],
        ]
    }

    pub fn value(&self, i: usize, x: f64) -> f64 {
        self.jet(i, x)[0]
    }

    fn end_value(&self, at: EndpointRef) -> f64 {
        let x = match at.side {
            Side::Left => 0.0,
            Side::Right => self.lengths[at.edge],
        };
        self.value(at.edge, x)
    }

    /// Adjusts the end slopes so that the chosen conditions hold exactly.
    pub fn enforce(
        mut self,
        graph: &MetricGraph,
        kappa: f64,
        conditions: Conditions,
    ) -> Result<Self> {
        let table = graph.trace_functionals()?;
        let n = graph.num_edges();
        let mut fix = Vec::with_capacity(n);
        for i in 0..n {
            let edge = &graph.edges[i];
            let d = self.lengths[i];
            let targets = match conditions {
                Conditions::Primal => {
                    let side_sum = |side: Side| -> f64 {
                        edge.couplings(side)
                            .iter()
                            .map(|(&j, &c)| {
                                let js = if graph.edges[j].left_vertex == edge.vertex(side) {
                                    Side::Left
                                } else {
                                    Side::Right
                                };
                                c * self.end_value(EndpointRef::new(j, js))
                            })
                            .sum()
                    };
                    let fl = self.end_value(EndpointRef::left(i));
                    let fr = self.end_value(EndpointRef::right(i));
                    (
                        (edge.l * fl - side_sum(Side::Left)) / kappa,
                        -(edge.r * fr - side_sum(Side::Right)) / kappa,
                    )
                }
                Conditions::Dual => (
                    table.left[i].apply(|at| self.end_value(at)) / kappa,
                    table.right[i].apply(|at| self.end_value(at)) / kappa,
                ),
            };
            let g_left = self.base(i, 0.0)[1];
            let g_right = self.base(i, d)[1];
            fix.push((targets.0 - g_left, targets.1 - g_right));
        }
        self.slope_fix = fix;
        Ok(self)
    }

    pub fn sample(&self, grid: &EdgeGrid, layout: Layout) -> DiscreteFunction {
        grid.sample(layout, |i, x| self.value(i, x))
    }
}

/// One level of a refinement study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementRow {
    pub h: f64,
    pub defect: f64,
}

/// Duality defects of two smooth functions on successively halved grids.
pub fn duality_refinement(
    graph: &MetricGraph,
    grid: &EdgeGrid,
    kappa: f64,
    trace_order: TraceOrder,
    f: &SmoothGraphFunction,
    phi: &SmoothGraphFunction,
    levels: usize,
) -> Result<Vec<RefinementRow>> {
    let mut grid = grid.clone();
    let mut rows = Vec::with_capacity(levels);
    for _ in 0..levels {
        let fd = f.sample(&grid, Layout::Nodes);
        let pd = phi.sample(&grid, Layout::Cells);
        let defect = duality_defect(graph, &grid, kappa, trace_order, &fd, &pd)?;
        rows.push(RefinementRow {
            h: grid.max_spacing(),
            defect,
        });
        grid = grid.refined();
    }
    Ok(rows)
}
