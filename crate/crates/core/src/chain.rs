//! The limit Markov chain on the line graph.
//!
//! As the diffusion speed grows, each edge equilibrates instantly and the
//! dynamics collapse onto edge-wise constant functions: first the
//! projection `P` replaces a function by its edge averages, then the chain
//! generated by `Q` moves mass between edges.
//!
//! Two versions of `Q` exist. The one for the integrable-function picture
//! weights the jump rate into edge `i` by the *source* edge's coefficient,
//! `q_ij = σ_j d_i⁻¹ (l_ji + r_ji)`. The one for continuous functions uses
//! the target edge's, `q_ij = σ_i d_i⁻¹ (l_ij + r_ij)`. Diagonals agree:
//! `q_ii = −σ_i d_i⁻¹ (l_i + r_i)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expm::expm;
use crate::graph::MetricGraph;
use crate::grid::{DiscreteFunction, PiecewiseConstant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Generator of the limit on integrable functions.
    Dual,
    /// Generator of the limit on continuous functions.
    Primal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    pub q: DMatrix<f64>,
    pub variant: Variant,
}

impl GeneratorMatrix {
    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    /// `e^{tQ}`.
    pub fn exp(&self, t: f64) -> Result<DMatrix<f64>> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "time must be nonnegative, got {t}"
            )));
        }
        expm(&(&self.q * t))
    }

    /// `e^{tQ} v` for an edge-wise constant `v`.
    pub fn propagate(&self, v: &PiecewiseConstant, t: f64) -> Result<PiecewiseConstant> {
        if v.values.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: v.values.len(),
            });
        }
        let out = self.exp(t)? * DVector::from_column_slice(&v.values);
        Ok(PiecewiseConstant {
            values: out.iter().copied().collect(),
            lengths: v.lengths.clone(),
        })
    }
}

/// Edge averages of `phi`, checked against `graph`.
pub fn project(graph: &MetricGraph, phi: &DiscreteFunction) -> Result<PiecewiseConstant> {
    phi.grid.check(graph)?;
    Ok(phi.project())
}

pub fn build_q(graph: &MetricGraph, variant: Variant) -> Result<GeneratorMatrix> {
    graph.ensure_valid()?;
    let n = graph.num_edges();
    let mut q = DMatrix::zeros(n, n);
    for (i, ei) in graph.edges.iter().enumerate() {
        q[(i, i)] = -ei.sigma / ei.length * (ei.l + ei.r);
        for (j, ej) in graph.edges.iter().enumerate() {
            if i == j {
                continue;
            }
            q[(i, j)] = match variant {
                Variant::Dual => ej.sigma / ei.length * ej.coupling_total(i),
                Variant::Primal => ei.sigma / ei.length * ei.coupling_total(j),
            };
        }
    }
    Ok(GeneratorMatrix { q, variant })
}

/// `e^{tQ}`; errors for negative `t`.
pub fn expm_q(q: &GeneratorMatrix, t: f64) -> Result<DMatrix<f64>> {
    q.exp(t)
}

/// Weighted column sums `Σ_i d_i q_ij` of the dual generator: the rate at
/// which mass sitting on edge `j` leaks out of the system.
pub fn mass_rate(q: &GeneratorMatrix, lengths: &[f64]) -> Result<Vec<f64>> {
    if q.variant != Variant::Dual {
        return Err(Error::InvalidArgument(
            "mass rate is defined for the dual generator".into(),
        ));
    }
    if lengths.len() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: q.dim(),
            got: lengths.len(),
        });
    }
    Ok((0..q.dim())
        .map(|j| (0..q.dim()).map(|i| lengths[i] * q.q[(i, j)]).sum())
        .collect())
}

/// `σ_j (Σ_{i≠j} (l_ji + r_ji) − l_j − r_j)`, the closed form of
/// [`mass_rate`].
pub fn mass_rate_closed_form(graph: &MetricGraph) -> Vec<f64> {
    graph
        .edges
        .iter()
        .map(|e| {
            let passed: f64 = e.l_to.values().chain(e.r_to.values()).sum();
            e.sigma * (passed - e.l - e.r)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::*;
    use crate::grid::{EdgeGrid, Layout};

    /// Truncated exponential series, the oracle for small matrices.
    fn taylor(a: &DMatrix<f64>, terms: usize) -> DMatrix<f64> {
        let n = a.nrows();
        let mut sum = DMatrix::identity(n, n);
        let mut term = DMatrix::identity(n, n);
        for k in 1..=terms {
            term = &term * a / k as f64;
            sum += &term;
        }
        sum
    }

    #[test]
    fn zero_permeability_gives_zero_generator() {
        let q = build_q(&single_edge(1.0), Variant::Dual).unwrap();
        assert_eq!(q.q, DMatrix::zeros(1, 1));
        assert_eq!(mass_rate(&q, &[1.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn chain_generators_by_hand() {
        let g = chain((1.0, 1.0), (1.0, 2.0));
        let expected = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.5, -0.5]);
        assert_eq!(build_q(&g, Variant::Dual).unwrap().q, expected);
        assert_eq!(build_q(&g, Variant::Primal).unwrap().q, expected);

        let g = chain((2.0, 1.0), (1.0, 2.0));
        let dual = build_q(&g, Variant::Dual).unwrap().q;
        let primal = build_q(&g, Variant::Primal).unwrap().q;
        // q_12: σ_2 d_1⁻¹ l_21 = 1 versus σ_1 d_1⁻¹ r_12 = 2
        assert_eq!(dual[(0, 1)], 1.0);
        assert_eq!(primal[(0, 1)], 2.0);
        assert_eq!(dual[(1, 0)], 1.0);
        assert_eq!(primal[(1, 0)], 0.5);
        assert_eq!(dual[(0, 0)], -2.0);
        assert_eq!(primal[(0, 0)], -2.0);
    }

    #[test]
    fn exponential_limits() {
        let q = build_q(&chain((1.0, 1.0), (1.0, 2.0)), Variant::Dual).unwrap();
        assert_eq!(expm_q(&q, 0.0).unwrap(), DMatrix::identity(2, 2));
        let e = expm_q(&q, 1.0).unwrap();
        let oracle = taylor(&q.q, 50);
        assert!((e - oracle).abs().max() < 1e-14);
        assert!(expm_q(&q, -1.0).is_err());
    }

    #[test]
    fn diagonal_generator() {
        let q = GeneratorMatrix {
            q: DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -0.5]),
            variant: Variant::Dual,
        };
        let e = q.exp(1.0).unwrap();
        assert!((e[(0, 0)] - (-1f64).exp()).abs() < 1e-15);
        assert!((e[(1, 1)] - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn mass_rate_of_conservative_and_leaky_graphs() {
        let g = star();
        let q = build_q(&g, Variant::Dual).unwrap();
        for r in mass_rate(&q, &g.lengths()).unwrap() {
            assert!(r.abs() < 1e-14);
        }
        let mut leaky = star();
        leaky.edges[1].l_to.insert(0, 0.125);
        let q = build_q(&leaky, Variant::Dual).unwrap();
        let rate = mass_rate(&q, &leaky.lengths()).unwrap();
        assert!(rate[1] < 0.0);
        assert!(rate[0].abs() < 1e-14 && rate[2].abs() < 1e-14);
        for (a, b) in rate.iter().zip(mass_rate_closed_form(&leaky)) {
            assert!((a - b).abs() < 1e-14);
        }
        let primal = build_q(&g, Variant::Primal).unwrap();
        assert!(mass_rate(&primal, &g.lengths()).is_err());
    }

    #[test]
    fn generator_sign_structure() {
        for variant in [Variant::Dual, Variant::Primal] {
            let q = build_q(&star(), variant).unwrap().q;
            for i in 0..3 {
                for j in 0..3 {
                    if i == j {
                        assert!(q[(i, j)] <= 0.0);
                    } else {
                        assert!(q[(i, j)] >= 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn project_checks_graph() {
        let g = star();
        let grid = EdgeGrid::uniform(&g, 0.1).unwrap();
        let f = grid.constant(Layout::Cells, 1.0);
        assert!(project(&g, &f).is_ok());
        assert!(matches!(
            project(&single_edge(1.0), &f),
            Err(Error::GridMismatch(_))
        ));
    }
}
