//! Per-edge grids and grid functions on the disjoint union of edges.

use crate::error::{ensure, Error, Result};
use crate::graph::{EndpointRef, MetricGraph, Side};

/// Uniform subdivision of every edge into `cells[i]` pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeGrid {
    cells: Vec<usize>,
    lengths: Vec<f64>,
}

/// Where the unknowns of a grid function live.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// One value per cell (cell averages, finite volumes).
    Cells,
    /// One value per cell face including both edge ends (nodal values).
    Nodes,
}

impl EdgeGrid {
    /// `m_i = ceil(d_i / h_target)`, at least 2.
    pub fn uniform(graph: &MetricGraph, h_target: f64) -> Result<Self> {
        ensure(h_target.is_finite() && h_target > 0.0, || {
            format!("grid spacing must be positive, got {h_target}")
        })?;
        let cells = graph
            .edges
            .iter()
            .map(|e| ((e.length / h_target) * (1.0 - 1e-12)).ceil().max(2.0) as usize)
            .collect();
        Self::with_cells(graph, cells)
    }

    pub fn with_cells(graph: &MetricGraph, cells: Vec<usize>) -> Result<Self> {
        if cells.len() != graph.num_edges() {
            return Err(Error::DimensionMismatch {
                expected: graph.num_edges(),
                got: cells.len(),
            });
        }
        if let Some(i) = cells.iter().position(|&m| m < 2) {
            return Err(Error::InvalidArgument(format!(
                "edge {i} needs at least 2 cells"
            )));
        }
        Ok(Self {
            cells,
            lengths: graph.lengths(),
        })
    }

    pub fn num_edges(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self, edge: usize) -> usize {
        self.cells[edge]
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn spacing(&self, edge: usize) -> f64 {
        self.lengths[edge] / self.cells[edge] as f64
    }

    pub fn max_spacing(&self) -> f64 {
        (0..self.num_edges())
            .map(|i| self.spacing(i))
            .fold(0.0, f64::max)
    }

    /// Every cell split in two.
    pub fn refined(&self) -> Self {
        Self {
            cells: self.cells.iter().map(|m| 2 * m).collect(),
            lengths: self.lengths.clone(),
        }
    }

    pub fn matches(&self, graph: &MetricGraph) -> bool {
        self.lengths == graph.lengths()
    }

    pub(crate) fn check(&self, graph: &MetricGraph) -> Result<()> {
        if self.matches(graph) {
            Ok(())
        } else {
            Err(Error::GridMismatch(
                "edge lengths differ from the graph".into(),
            ))
        }
    }

    pub fn dofs_on_edge(&self, layout: Layout, edge: usize) -> usize {
        match layout {
            Layout::Cells => self.cells[edge],
            Layout::Nodes => self.cells[edge] + 1,
        }
    }

    /// Start index of each edge's block, plus the total as last entry.
    pub fn offsets(&self, layout: Layout) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.num_edges() + 1);
        let mut acc = 0;
        out.push(0);
        for i in 0..self.num_edges() {
            acc += self.dofs_on_edge(layout, i);
            out.push(acc);
        }
        out
    }

    pub fn len(&self, layout: Layout) -> usize {
        (0..self.num_edges())
            .map(|i| self.dofs_on_edge(layout, i))
            .sum()
    }

    /// Local coordinates in `[0, d_i]` of the unknowns on `edge`.
    pub fn positions(&self, layout: Layout, edge: usize) -> Vec<f64> {
        let h = self.spacing(edge);
        match layout {
            Layout::Cells => (0..self.cells[edge])
                .map(|k| (k as f64 + 0.5) * h)
                .collect(),
            Layout::Nodes => (0..=self.cells[edge]).map(|k| k as f64 * h).collect(),
        }
    }

    /// Quadrature weights: cell widths, or the trapezoid rule on nodes.
    pub fn weights(&self, layout: Layout) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.len(layout));
        for i in 0..self.num_edges() {
            let h = self.spacing(i);
            let m = self.cells[i];
            match layout {
                Layout::Cells => w.extend(std::iter::repeat_n(h, m)),
                Layout::Nodes => {
                    w.push(h / 2.0);
                    w.extend(std::iter::repeat_n(h, m - 1));
                    w.push(h / 2.0);
                }
            }
        }
        w
    }

    /// Global index of the unknown sitting at (or nearest to) an edge end.
    pub fn endpoint_dof(&self, layout: Layout, at: EndpointRef) -> usize {
        let offsets = self.offsets(layout);
        match at.side {
            Side::Left => offsets[at.edge],
            Side::Right => offsets[at.edge + 1] - 1,
        }
    }

    pub fn sample(&self, layout: Layout, f: impl Fn(usize, f64) -> f64) -> DiscreteFunction {
        let mut values = Vec::with_capacity(self.len(layout));
        for i in 0..self.num_edges() {
            values.extend(self.positions(layout, i).into_iter().map(|x| f(i, x)));
        }
        DiscreteFunction {
            layout,
            grid: self.clone(),
            values,
        }
    }

    pub fn constant(&self, layout: Layout, c: f64) -> DiscreteFunction {
        self.sample(layout, |_, _| c)
    }

    /// Edge-wise constant function taking `values[i]` on edge `i`.
    pub fn lift(&self, layout: Layout, values: &[f64]) -> DiscreteFunction {
        self.sample(layout, |i, _| values[i])
    }
}

/// A grid function with its layout and grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteFunction {
    pub layout: Layout,
    pub grid: EdgeGrid,
    pub values: Vec<f64>,
}

impl DiscreteFunction {
    pub fn new(layout: Layout, grid: EdgeGrid, values: Vec<f64>) -> Result<Self> {
        let expected = grid.len(layout);
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: values.len(),
            });
        }
        Ok(Self {
            layout,
            grid,
            values,
        })
    }

    pub fn edge_values(&self, edge: usize) -> &[f64] {
        let o = self.grid.offsets(self.layout);
        &self.values[o[edge]..o[edge + 1]]
    }

    /// `∫_{E_i} φ_i` with the layout's natural reconstruction (piecewise
    /// constant on cells, piecewise linear between nodes).
    pub fn edge_integral(&self, edge: usize) -> f64 {
        let h = self.grid.spacing(edge);
        let v = self.edge_values(edge);
        match self.layout {
            Layout::Cells => h * v.iter().sum::<f64>(),
            Layout::Nodes => h * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[v.len() - 1])),
        }
    }

    /// Edge averages `d_i⁻¹ ∫_{E_i} φ_i`.
    pub fn project(&self) -> PiecewiseConstant {
        let lengths = self.grid.lengths().to_vec();
        let values = (0..self.grid.num_edges())
            .map(|i| self.edge_integral(i) / lengths[i])
            .collect();
        PiecewiseConstant { values, lengths }
    }

    pub fn mass(&self) -> f64 {
        (0..self.grid.num_edges())
            .map(|i| self.edge_integral(i))
            .sum()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Exact `L¹(S)` norm of the reconstruction.
    pub fn l1_norm(&self) -> f64 {
        let mut total = 0.0;
        for i in 0..self.grid.num_edges() {
            let h = self.grid.spacing(i);
            let v = self.edge_values(i);
            total += match self.layout {
                Layout::Cells => h * v.iter().map(|x| x.abs()).sum::<f64>(),
                Layout::Nodes => v.windows(2).map(|p| h * abs_linear_mean(p[0], p[1])).sum(),
            };
        }
        total
    }

    /// Exact `L²(S)` norm of the reconstruction.
    pub fn l2_norm(&self) -> f64 {
        let mut total = 0.0;
        for i in 0..self.grid.num_edges() {
            let h = self.grid.spacing(i);
            let v = self.edge_values(i);
            total += match self.layout {
                Layout::Cells => h * v.iter().map(|x| x * x).sum::<f64>(),
                Layout::Nodes => v
                    .windows(2)
                    .map(|p| h * (p[0] * p[0] + p[0] * p[1] + p[1] * p[1]) / 3.0)
                    .sum(),
            };
        }
        total.sqrt()
    }

    pub fn same_shape(&self, other: &DiscreteFunction) -> Result<()> {
        if self.layout != other.layout || self.grid != other.grid {
            return Err(Error::GridMismatch(
                "grid functions live on different grids".into(),
            ));
        }
        Ok(())
    }

    pub fn sub(&self, other: &DiscreteFunction) -> Result<DiscreteFunction> {
        self.same_shape(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(DiscreteFunction {
            layout: self.layout,
            grid: self.grid.clone(),
            values,
        })
    }

    /// Cell averages of a nodal (piecewise linear) function; identity on
    /// cell layouts.
    pub fn to_cells(&self) -> DiscreteFunction {
        match self.layout {
            Layout::Cells => self.clone(),
            Layout::Nodes => {
                let mut values = Vec::with_capacity(self.grid.len(Layout::Cells));
                for i in 0..self.grid.num_edges() {
                    values.extend(self.edge_values(i).windows(2).map(|p| 0.5 * (p[0] + p[1])));
                }
                DiscreteFunction {
                    layout: Layout::Cells,
                    grid: self.grid.clone(),
                    values,
                }
            }
        }
    }
}

/// Mean of `|x|` over a linear segment with end values `a`, `b`.
fn abs_linear_mean(a: f64, b: f64) -> f64 {
    if a * b >= 0.0 {
        0.5 * (a.abs() + b.abs())
    } else {
        0.5 * (a * a + b * b) / (a.abs() + b.abs())
    }
}

/// A function constant on each edge, identified with a vector in `ℝ^N`
/// carrying the edge lengths as weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstant {
    pub values: Vec<f64>,
    pub lengths: Vec<f64>,
}

impl PiecewiseConstant {
    pub fn new(values: Vec<f64>, lengths: Vec<f64>) -> Result<Self> {
        if values.len() != lengths.len() {
            return Err(Error::DimensionMismatch {
                expected: lengths.len(),
                got: values.len(),
            });
        }
        ensure(values.iter().all(|v| v.is_finite()), || {
            "non-finite value".into()
        })?;
        ensure(lengths.iter().all(|d| d.is_finite() && *d > 0.0), || {
            "lengths must be positive".into()
        })?;
        Ok(Self { values, lengths })
    }

    /// `Σ d_i |v_i|`
    pub fn l1_norm(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.lengths)
            .map(|(v, d)| d * v.abs())
            .sum()
    }

    /// `(Σ d_i v_i²)^{1/2}`
    pub fn l2_norm(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.lengths)
            .map(|(v, d)| d * v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn mass(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.lengths)
            .map(|(v, d)| d * v)
            .sum()
    }
}
