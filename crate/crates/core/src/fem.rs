//! Galerkin discretization of the diffusion on square-integrable functions,
//! built from the forms
//!
//! ```text
//! b(u, v) = κ Σ_i σ_i ∫ u_i' v_i'
//! c(u, v) = Σ_i σ_i [ (F_{L,i}u) v_i(L_i) − (F_{R,i}u) v_i(R_i) ]
//! ```
//!
//! with continuous piecewise-linear elements on each edge (edges do not
//! share nodes). The generator is `A = −M⁻¹(B + C)`, so that
//! `⟨Au, v⟩_M = −(b + c)(u, v)` on the discrete space.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use crate::error::{Error, Result};
use crate::evolution::{propagate, Method};
use crate::generator::{DiscreteGenerator, GeneratorKind};
use crate::graph::{EndpointRef, MetricGraph, Side};
use crate::grid::{DiscreteFunction, EdgeGrid, Layout};

#[derive(Debug, Clone)]
pub struct FemSystem {
    pub grid: EdgeGrid,
    pub kappa: f64,
    pub mass: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    pub coupling: DMatrix<f64>,
    pub lumped: bool,
    pub conservative: bool,
}

pub fn assemble_forms(graph: &MetricGraph, grid: &EdgeGrid, kappa: f64) -> Result<FemSystem> {
    assemble_forms_with(graph, grid, kappa, false)
}

/// As [`assemble_forms`]; `lumped` replaces the mass matrix by its row sums.
pub fn assemble_forms_with(
    graph: &MetricGraph,
    grid: &EdgeGrid,
    kappa: f64,
    lumped: bool,
) -> Result<FemSystem> {
    let table = graph.trace_functionals()?;
    grid.check(graph)?;
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "κ must be positive, got {kappa}"
        )));
    }
    let layout = Layout::Nodes;
    let offsets = grid.offsets(layout);
    let n = grid.len(layout);
    let mut mass = DMatrix::zeros(n, n);
    let mut stiffness = DMatrix::zeros(n, n);
    let mut coupling = DMatrix::zeros(n, n);
    for (i, edge) in graph.edges.iter().enumerate() {
        let h = grid.spacing(i);
        let s = kappa * edge.sigma / h;
        for e in 0..grid.cells(i) {
            let (p, q) = (offsets[i] + e, offsets[i] + e + 1);
            if lumped {
                mass[(p, p)] += h / 2.0;
                mass[(q, q)] += h / 2.0;
            } else {
                mass[(p, p)] += h / 3.0;
                mass[(q, q)] += h / 3.0;
                mass[(p, q)] += h / 6.0;
                mass[(q, p)] += h / 6.0;
            }
            stiffness[(p, p)] += s;
            stiffness[(q, q)] += s;
            stiffness[(p, q)] -= s;
            stiffness[(q, p)] -= s;
        }
        for (side, sign) in [(Side::Left, 1.0), (Side::Right, -1.0)] {
            let row = grid.endpoint_dof(layout, EndpointRef::new(i, side));
            for &(at, c) in &table.at(EndpointRef::new(i, side)).terms {
                coupling[(row, grid.endpoint_dof(layout, at))] += sign * edge.sigma * c;
            }
        }
    }
    Ok(FemSystem {
        grid: grid.clone(),
        kappa,
        mass,
        stiffness,
        coupling,
        lumped,
        conservative: graph.is_conservative(),
    })
}

impl FemSystem {
    pub fn dim(&self) -> usize {
        self.mass.nrows()
    }

    /// `B + C`, the matrix of `(u, v) ↦ (b + c)(u, v)` with `v` indexing rows.
    pub fn form_matrix(&self) -> DMatrix<f64> {
        &self.stiffness + &self.coupling
    }

    fn vector(&self, u: &DiscreteFunction) -> Result<DVector<f64>> {
        if u.layout != Layout::Nodes || u.grid != self.grid {
            return Err(Error::GridMismatch(
                "function does not live on the element grid".into(),
            ));
        }
        Ok(DVector::from_column_slice(&u.values))
    }

    /// `b(u, u)`.
    pub fn b_form(&self, u: &DiscreteFunction) -> Result<f64> {
        let x = self.vector(u)?;
        Ok(x.dot(&(&self.stiffness * &x)))
    }

    /// `(b + c)(u, v)` for real `u`, `v`.
    pub fn a_form(&self, u: &DiscreteFunction, v: &DiscreteFunction) -> Result<f64> {
        let (x, y) = (self.vector(u)?, self.vector(v)?);
        Ok(y.dot(&(self.form_matrix() * x)))
    }

    pub fn generator(&self) -> Result<DiscreteGenerator> {
        let chol = Cholesky::new(self.mass.clone()).ok_or(Error::Singular("mass matrix"))?;
        let matrix = -chol.solve(&self.form_matrix());
        let weights = (0..self.dim()).map(|k| self.mass.row(k).sum()).collect();
        Ok(DiscreteGenerator {
            matrix,
            layout: Layout::Nodes,
            grid: self.grid.clone(),
            weights,
            kappa: self.kappa,
            kind: GeneratorKind::Galerkin,
            gram: Some(self.mass.clone()),
            conserves_mass: self.conservative,
        })
    }

    /// Largest eigenvalue of the symmetric pencil `(K, M)` where `M` is the
    /// mass matrix (or its `copies`-fold block diagonal).
    fn pencil_max(&self, k: &DMatrix<f64>, copies: usize) -> Result<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n * copies, n * copies);
        for c in 0..copies {
            m.view_mut((c * n, c * n), (n, n)).copy_from(&self.mass);
        }
        let chol: Cholesky<f64, Dyn> = Cholesky::new(m).ok_or(Error::Singular("mass matrix"))?;
        let l = chol.l();
        let half = l
            .solve_lower_triangular(k)
            .ok_or(Error::Singular("mass factor"))?;
        let whole = l
            .solve_lower_triangular(&half.transpose())
            .ok_or(Error::Singular("mass factor"))?;
        let sym = (&whole + whole.transpose()) * 0.5;
        Ok(sym.symmetric_eigenvalues().max())
    }

    /// The smallest `γ` with `(b + c)(u, u) + γ‖u‖² ≥ 0` for every discrete
    /// `u`; equivalently the growth bound `‖e^{tA}‖_M ≤ e^{γt}`.
    pub fn growth_bound(&self) -> Result<f64> {
        let k = self.form_matrix();
        let ksym = -(&k + k.transpose()) * 0.5;
        self.pencil_max(&ksym, 1)
    }

    /// The smallest `γ` with `|Im a(u)| ≤ Re a(u) + γ‖u‖²` for every complex
    /// discrete `u = x + iy`, computed from the real embedding
    /// `Re a = xᵀKx + yᵀKy`, `Im a = xᵀ(K − Kᵀ)y`.
    pub fn sector_shift(&self) -> Result<f64> {
        let k = self.form_matrix();
        let n = self.dim();
        let ksym = (&k + k.transpose()) * 0.5;
        let kskew = (&k - k.transpose()) * 0.5;
        let mut g = DMatrix::zeros(2 * n, 2 * n);
        g.view_mut((0, 0), (n, n)).copy_from(&(-&ksym));
        g.view_mut((n, n), (n, n)).copy_from(&(-&ksym));
        g.view_mut((0, n), (n, n)).copy_from(&kskew);
        g.view_mut((n, 0), (n, n)).copy_from(&kskew.transpose());
        self.pencil_max(&g, 2)
    }

    /// Largest observed `|Im a(u)| / (Re a(u) + γ‖u‖²)` over random complex `u`.
    pub fn sector_ratio(&self, gamma: f64, samples: usize, rng: &mut impl Rng) -> f64 {
        let k = self.form_matrix();
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let x = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let y = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let re = x.dot(&(&k * &x)) + y.dot(&(&k * &y));
            let im = x.dot(&(&k * &y)) - y.dot(&(&k * &x));
            let norm = x.dot(&(&self.mass * &x)) + y.dot(&(&self.mass * &y));
            worst = worst.max(im.abs() / (re + gamma * norm));
        }
        worst
    }
}

/// Solution of `M u' = −(B + C) u` at time `t`.
pub fn evolve_l2(
    sys: &FemSystem,
    u0: &DiscreteFunction,
    t: f64,
    method: Method,
) -> Result<DiscreteFunction> {
    propagate(&sys.generator()?, u0, t, method)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{build_q, Variant};
    use crate::graph::fixtures::*;
    use rand::SeedableRng;

    #[test]
    fn hand_assembled_single_edge() {
        let g = single_edge(1.0);
        let grid = EdgeGrid::with_cells(&g, vec![2]).unwrap();
        let sys = assemble_forms(&g, &grid, 1.0).unwrap();
        let b = DMatrix::from_row_slice(3, 3, &[2.0, -2.0, 0.0, -2.0, 4.0, -2.0, 0.0, -2.0, 2.0]);
        assert_eq!(sys.stiffness, b);
        assert_eq!(sys.coupling, DMatrix::zeros(3, 3));
        let m =
            DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 4.0, 1.0, 0.0, 1.0, 2.0]) / 12.0;
        assert!((sys.mass - m).abs().max() < 1e-15);
        let a = assemble_forms(&g, &grid, 1.0).unwrap().generator().unwrap();
        let ones = grid.constant(Layout::Nodes, 1.0);
        assert!(a
            .apply(&ones)
            .unwrap()
            .values
            .iter()
            .all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn chain_coupling_touches_only_the_junction() {
        let g = chain((1.0, 1.0), (1.0, 1.0));
        let grid = EdgeGrid::with_cells(&g, vec![2, 2]).unwrap();
        let sys = assemble_forms(&g, &grid, 1.0).unwrap();
        // nodes 0..=2 on e1, 3..=5 on e2; the junction is R_1 = node 2 and
        // L_2 = node 3. F_{R,1}φ = φ(L_2) − φ(R_1), F_{L,2}φ = φ(L_2) − φ(R_1).
        let mut expected = DMatrix::zeros(6, 6);
        expected[(2, 2)] = 1.0;
        expected[(2, 3)] = -1.0;
        expected[(3, 3)] = 1.0;
        expected[(3, 2)] = -1.0;
        assert_eq!(sys.coupling, expected);
    }

    #[test]
    fn mass_is_conserved_on_conservative_graphs() {
        let g = star();
        let grid = EdgeGrid::uniform(&g, 0.1).unwrap();
        for lumped in [false, true] {
            let a = assemble_forms_with(&g, &grid, 5.0, lumped)
                .unwrap()
                .generator()
                .unwrap();
            assert!(a.mass_rate_row().iter().all(|r| r.abs() < 1e-12));
        }
    }

    #[test]
    fn b_form_is_accretive_and_kills_edge_constants() {
        let g = star();
        let grid = EdgeGrid::uniform(&g, 0.1).unwrap();
        let sys = assemble_forms(&g, &grid, 2.0).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        for _ in 0..20 {
            let values = (0..grid.len(Layout::Nodes))
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let u = DiscreteFunction::new(Layout::Nodes, grid.clone(), values).unwrap();
            assert!(sys.b_form(&u).unwrap() >= 0.0);
        }
        let step = grid.lift(Layout::Nodes, &[1.0, -2.0, 0.5]);
        assert!(sys.b_form(&step).unwrap().abs() < 1e-12);
        let top = |kappa: f64| {
            let s = assemble_forms(&g, &grid, kappa).unwrap();
            let l = Cholesky::new(s.mass.clone()).unwrap().l();
            let half = l.solve_lower_triangular(&s.stiffness).unwrap();
            let whole = l.solve_lower_triangular(&half.transpose()).unwrap();
            ((&whole + whole.transpose()) * 0.5)
                .symmetric_eigenvalues()
                .max()
        };
        assert!((top(20.0) / top(2.0) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn restricted_coupling_is_the_dual_chain() {
        for g in [star(), chain((2.0, 1.0), (1.0, 2.0))] {
            let q = build_q(&g, Variant::Dual).unwrap().q;
            let grid = EdgeGrid::uniform(&g, 0.125).unwrap();
            for lumped in [false, true] {
                let sys = assemble_forms_with(&g, &grid, 1.0, lumped).unwrap();
                let mc = Cholesky::new(sys.mass.clone())
                    .unwrap()
                    .solve(&sys.coupling);
                let n = g.num_edges();
                let mut restricted = DMatrix::zeros(n, n);
                for j in 0..n {
                    let mut basis = vec![0.0; n];
                    basis[j] = 1.0;
                    let lifted = grid.lift(Layout::Nodes, &basis);
                    let out = -(&mc * DVector::from_column_slice(&lifted.values));
                    let f = DiscreteFunction::new(
                        Layout::Nodes,
                        grid.clone(),
                        out.iter().copied().collect(),
                    )
                    .unwrap();
                    for (i, v) in f.project().values.iter().enumerate() {
                        restricted[(i, j)] = *v;
                    }
                }
                assert!((restricted - &q).abs().max() < 1e-12);
            }
        }
    }

    #[test]
    fn cosine_decays_at_the_neumann_rate() {
        let g = single_edge(1.0);
        // the P1 eigenvalue error π⁴h²/12 needs h ≲ 1/700 for 1e-6
        let grid = EdgeGrid::uniform(&g, 1.0 / 1000.0).unwrap();
        let sys = assemble_forms(&g, &grid, 1.0).unwrap();
        let u0 = grid.sample(Layout::Nodes, |_, x| (std::f64::consts::PI * x).cos());
        let u = evolve_l2(&sys, &u0, 0.1, Method::Expm).unwrap();
        let decay = (-std::f64::consts::PI.powi(2) * 0.1).exp();
        let exact = grid.sample(Layout::Nodes, |_, x| {
            decay * (std::f64::consts::PI * x).cos()
        });
        let err = u.sub(&exact).unwrap().l2_norm();
        assert!(err < 1e-6, "{err}");
        let coarse = EdgeGrid::uniform(&g, 1.0 / 50.0).unwrap();
        let c = coarse.constant(Layout::Nodes, 2.5);
        let same = evolve_l2(
            &assemble_forms(&g, &coarse, 1.0).unwrap(),
            &c,
            3.0,
            Method::Expm,
        )
        .unwrap();
        let dev = same
            .sub(&c)
            .unwrap()
            .values
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(dev < 1e-10, "{dev}");
    }

    #[test]
    fn growth_and_sector_bounds() {
        let g = star();
        let grid = EdgeGrid::uniform(&g, 0.1).unwrap();
        let sys = assemble_forms(&g, &grid, 1.0).unwrap();
        let growth = sys.growth_bound().unwrap();
        let sector = sys.sector_shift().unwrap();
        assert!(growth.is_finite() && sector >= growth - 1e-12);
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        assert!(sys.sector_ratio(sector + 1e-9, 200, &mut rng) <= 1.0 + 1e-9);

        let gen = sys.generator().unwrap();
        let u0 = grid.sample(Layout::Nodes, |i, x| (i as f64 + 1.0) * (3.0 * x).sin());
        for t in [0.1, 0.5, 1.0] {
            let u = propagate(&gen, &u0, t, Method::Expm).unwrap();
            assert!(u.l2_norm() <= (growth * t).exp() * u0.l2_norm() * (1.0 + 1e-10));
        }
    }

    #[test]
    fn rejects_bad_input() {
        let g = star();
        let grid = EdgeGrid::uniform(&g, 0.1).unwrap();
        assert!(assemble_forms(&g, &grid, -1.0).is_err());
        let sys = assemble_forms(&g, &grid, 1.0).unwrap();
        let cells = grid.constant(Layout::Cells, 1.0);
        assert!(matches!(sys.b_form(&cells), Err(Error::GridMismatch(_))));
    }
}
