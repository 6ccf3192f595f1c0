//! Assembled discrete generators and their export format.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{DiscreteFunction, EdgeGrid, Layout};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    /// Finite volumes for the diffusion on integrable functions.
    DualFv,
    /// Nodal finite differences for the diffusion on continuous functions.
    PrimalFd,
    /// `−M⁻¹(B + C)` from the Galerkin forms.
    Galerkin,
}

/// A matrix realization of a generator together with the quadrature that
/// turns grid vectors into integrals.
#[derive(Debug, Clone)]
pub struct DiscreteGenerator {
    pub matrix: DMatrix<f64>,
    pub layout: Layout,
    pub grid: EdgeGrid,
    /// `∫ φ ≈ Σ w_k φ_k`; exact for the layout's reconstruction.
    pub weights: Vec<f64>,
    pub kappa: f64,
    pub kind: GeneratorKind,
    /// Gram matrix of the basis when the `L²` pairing is not diagonal.
    pub gram: Option<DMatrix<f64>>,
    /// `wᵀA = 0` holds by construction (conservative graph). Propagation
    /// then keeps the total mass exact instead of merely accurate.
    pub conserves_mass: bool,
}

impl DiscreteGenerator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub(crate) fn check_function(&self, phi: &DiscreteFunction) -> Result<()> {
        if phi.layout != self.layout || phi.grid != self.grid {
            return Err(Error::GridMismatch(
                "function does not live on the generator's grid".into(),
            ));
        }
        Ok(())
    }

    pub fn apply(&self, phi: &DiscreteFunction) -> Result<DiscreteFunction> {
        self.check_function(phi)?;
        let out = &self.matrix * DVector::from_column_slice(&phi.values);
        Ok(self.function(out.iter().copied().collect()))
    }

    pub(crate) fn function(&self, values: Vec<f64>) -> DiscreteFunction {
        DiscreteFunction {
            layout: self.layout,
            grid: self.grid.clone(),
            values,
        }
    }

    /// `wᵀA`: the rate of change of total mass contributed by each unknown.
    pub fn mass_rate_row(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|c| {
                self.matrix
                    .column(c)
                    .iter()
                    .zip(&self.weights)
                    .map(|(a, w)| a * w)
                    .sum()
            })
            .collect()
    }

    /// `wᵀA` summed over the unknowns of each edge.
    pub fn mass_rate_by_edge(&self) -> Vec<f64> {
        let row = self.mass_rate_row();
        let offsets = self.grid.offsets(self.layout);
        offsets
            .windows(2)
            .map(|w| row[w[0]..w[1]].iter().sum())
            .collect()
    }

    /// Smallest off-diagonal entry (nonnegative for a Metzler matrix).
    pub fn min_off_diagonal(&self) -> f64 {
        let n = self.dim();
        let mut min = f64::INFINITY;
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    min = min.min(self.matrix[(i, j)]);
                }
            }
        }
        min
    }

    pub fn nonzeros(&self) -> usize {
        self.matrix.iter().filter(|x| **x != 0.0).count()
    }

    /// Writes the matrix as coordinate triplets:
    ///
    /// ```text
    /// % graphdiff coordinate <kind> kappa=<κ>
    /// <rows> <cols> <nnz>
    /// <row> <col> <value>      (zero-based, column-major order)
    /// ```
    pub fn write_triplets(&self, mut out: impl Write) -> std::io::Result<()> {
        let kind = match self.kind {
            GeneratorKind::DualFv => "dual-fv",
            GeneratorKind::PrimalFd => "primal-fd",
            GeneratorKind::Galerkin => "galerkin",
        };
        writeln!(
            out,
            "% graphdiff coordinate {kind} kappa={:.16e}",
            self.kappa
        )?;
        writeln!(out, "{} {} {}", self.dim(), self.dim(), self.nonzeros())?;
        for j in 0..self.dim() {
            for i in 0..self.dim() {
                let v = self.matrix[(i, j)];
                if v != 0.0 {
                    writeln!(out, "{i} {j} {v:.16e}")?;
                }
            }
        }
        Ok(())
    }
}

/// Reads back the output of [`DiscreteGenerator::write_triplets`].
pub fn read_triplets(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text
        .lines()
        .filter(|l| !l.starts_with('%') && !l.trim().is_empty());
    let parse_err = |what: &str| Error::Parse(format!("triplet file: {what}"));
    let header: Vec<usize> = lines
        .next()
        .ok_or_else(|| parse_err("missing size line"))?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err("bad size line")))
        .collect::<Result<_>>()?;
    if header.len() != 3 {
        return Err(parse_err("size line needs rows cols nnz"));
    }
    let mut m = DMatrix::zeros(header[0], header[1]);
    let mut count = 0;
    for line in lines {
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 3 {
            return Err(parse_err("entry needs row col value"));
        }
        let i: usize = t[0].parse().map_err(|_| parse_err("bad row"))?;
        let j: usize = t[1].parse().map_err(|_| parse_err("bad col"))?;
        let v: f64 = t[2].parse().map_err(|_| parse_err("bad value"))?;
        if i >= header[0] || j >= header[1] {
            return Err(parse_err("index out of range"));
        }
        m[(i, j)] = v;
        count += 1;
    }
    if count != header[2] {
        return Err(parse_err("entry count differs from header"));
    }
    Ok(m)
}
