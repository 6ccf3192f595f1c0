//! Closed-form resolvent of the Neumann Laplacian on a single interval.
//!
//! For `λ > 0` and `μ = √λ`, the solution of `λψ − ψ'' = φ` on `(a, b)` with
//! `ψ'(a) = ψ'(b) = 0` is
//!
//! ```text
//! ψ(x) = J(x) + c e^{μx} + d e^{−μx},   J(x) = (2μ)⁻¹ ∫_a^b e^{−μ|x−y|} φ(y) dy,
//! ```
//!
//! with `c`, `d` fixed by the boundary conditions through the two boundary
//! moments `ξ = ½∫ e^{−μ(y−a)} φ` and `ζ = ½∫ e^{−μ(b−y)} φ`. An equivalent
//! representation sums the free-space kernel over mirror images of the
//! source, `ψ(x) = (2μ)⁻¹ Σ_k ∫ [e^{−μ|2kL+x−y|} + e^{−μ|2kL+x+y−2a|}] φ(y) dy`
//! with `L = b − a`.
//!
//! Sources are piecewise polynomials and every integral against an
//! exponential is evaluated exactly, so both representations are accurate
//! to round-off.

use crate::error::{ensure, Error, Result};

/// A polynomial `Σ c_k x^k`, coefficients in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| k as f64 * c)
                .collect(),
        )
    }

    /// The polynomial `t ↦ p(x0 + sign·t)`.
    pub fn recentered(&self, x0: f64, sign: f64) -> Self {
        // Taylor expansion at x0: coefficient k is p^{(k)}(x0)/k! · sign^k
        let mut out = Vec::with_capacity(self.coeffs.len());
        let mut deriv = self.clone();
        let mut factorial = 1.0;
        let mut sign_power = 1.0;
        for k in 0..self.coeffs.len() {
            if k > 0 {
                factorial *= k as f64;
                sign_power *= sign;
            }
            out.push(deriv.eval(x0) / factorial * sign_power);
            deriv = deriv.derivative();
        }
        Self::new(out)
    }

    /// An upper bound for `max |p|` on `[α, β]`.
    fn sup_bound(&self, alpha: f64, beta: f64) -> f64 {
        let mid = 0.5 * (alpha + beta);
        let half = 0.5 * (beta - alpha);
        self.recentered(mid, 1.0)
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c.abs() * half.powi(k as i32))
            .sum()
    }

    /// `∫_α^β p`
    fn integral(&self, alpha: f64, beta: f64) -> f64 {
        let anti = |x: f64| {
            self.coeffs
                .iter()
                .enumerate()
                .rev()
                .fold(0.0, |acc, (k, c)| acc * x + c / (k as f64 + 1.0))
                * x
        };
        anti(beta) - anti(alpha)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Piece {
    start: f64,
    end: f64,
    poly: Polynomial,
}

/// A source term `φ` on an interval, stored as a piecewise polynomial.
#[derive(Debug, Clone, PartialEq)]
pub struct Source {
    pieces: Vec<Piece>,
}

impl Source {
    pub fn polynomial(a: f64, b: f64, poly: Polynomial) -> Result<Self> {
        ensure(a < b, || format!("empty interval ({a}, {b})"))?;
        Ok(Self {
            pieces: vec![Piece {
                start: a,
                end: b,
                poly,
            }],
        })
    }

    /// Consecutive polynomial pieces given by their breakpoints.
    pub fn piecewise(breaks: &[f64], polys: Vec<Polynomial>) -> Result<Self> {
        ensure(breaks.len() == polys.len() + 1 && !polys.is_empty(), || {
            "need one more breakpoint than pieces".into()
        })?;
        ensure(breaks.windows(2).all(|w| w[0] < w[1]), || {
            "breakpoints must increase".into()
        })?;
        let pieces = polys
            .into_iter()
            .enumerate()
            .map(|(i, poly)| Piece {
                start: breaks[i],
                end: breaks[i + 1],
                poly,
            })
            .collect();
        Ok(Self { pieces })
    }

    /// Linear interpolant of grid samples.
    pub fn piecewise_linear(nodes: &[f64], values: &[f64]) -> Result<Self> {
        ensure(nodes.len() == values.len() && nodes.len() >= 2, || {
            "need at least two matching nodes and values".into()
        })?;
        let polys = nodes
            .windows(2)
            .zip(values.windows(2))
            .map(|(x, v)| {
                let slope = (v[1] - v[0]) / (x[1] - x[0]);
                Polynomial::new(vec![v[0] - slope * x[0], slope])
            })
            .collect();
        Self::piecewise(nodes, polys)
    }

    /// Samples `f` on `n` uniform intervals and interpolates linearly.
    pub fn sampled(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        ensure(n >= 1, || "need at least one interval".into())?;
        let nodes: Vec<f64> = (0..=n).map(|k| a + (b - a) * k as f64 / n as f64).collect();
        let values: Vec<f64> = nodes.iter().map(|&x| f(x)).collect();
        Self::piecewise_linear(&nodes, &values)
    }

    pub fn start(&self) -> f64 {
        self.pieces[0].start
    }

    pub fn end(&self) -> f64 {
        self.pieces[self.pieces.len() - 1].end
    }

    pub fn eval(&self, x: f64) -> f64 {
        let piece = self
            .pieces
            .iter()
            .find(|p| x < p.end)
            .unwrap_or(&self.pieces[self.pieces.len() - 1]);
        piece.poly.eval(x)
    }

    pub fn integral(&self) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.poly.integral(p.start, p.end))
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.integral() / (self.end() - self.start())
    }

    /// An upper bound for `‖φ‖_{L¹}`.
    pub fn l1_bound(&self) -> f64 {
        self.pieces
            .iter()
            .map(|p| (p.end - p.start) * p.poly.sup_bound(p.start, p.end))
            .sum()
    }

    /// `(∫_{y<z} e^{−μ(z−y)} φ, ∫_{y>z} e^{−μ(y−z)} φ)`, valid for any real
    /// `z`.
    fn kernel_split(&self, mu: f64, z: f64) -> (f64, f64) {
        let mut below = 0.0;
        let mut above = 0.0;
        for p in &self.pieces {
            if z >= p.end {
                below += (-mu * (z - p.end)).exp()
                    * exp_poly_integral(&p.poly.recentered(p.end, -1.0), mu, p.end - p.start);
            } else if z <= p.start {
                above += (-mu * (p.start - z)).exp()
                    * exp_poly_integral(&p.poly.recentered(p.start, 1.0), mu, p.end - p.start);
            } else {
                below += exp_poly_integral(&p.poly.recentered(z, -1.0), mu, z - p.start);
                above += exp_poly_integral(&p.poly.recentered(z, 1.0), mu, p.end - z);
            }
        }
        (below, above)
    }

    /// `∫ e^{−μ|z−y|} φ(y) dy`
    fn kernel(&self, mu: f64, z: f64) -> f64 {
        let (below, above) = self.kernel_split(mu, z);
        below + above
    }
}

/// `F_k(z) = ∫_0^1 e^{−zt} t^k dt` for `z ≥ 0`, free of cancellation.
fn exp_moment_unit(k: usize, z: f64) -> f64 {
    if z <= 40.0 {
        // k! e^{−z} Σ_m z^m / (m+k+1)!
        let mut term = 1.0 / (k + 1) as f64;
        let mut sum = 0.0;
        let mut m = 0;
        loop {
            sum += term;
            m += 1;
            term *= z / (m + k + 1) as f64;
            if term <= 1e-18 * sum || m > 400 {
                break;
            }
        }
        (-z).exp() * sum
    } else {
        let k_fact: f64 = (2..=k).map(|j| j as f64).product();
        // k!/z^{k+1} (1 − e^{−z} Σ_{j≤k} z^j/j!)
        let mut partial = 0.0;
        let mut term = 1.0;
        for j in 0..=k {
            if j > 0 {
                term *= z / j as f64;
            }
            partial += term;
        }
        k_fact / z.powi(k as i32 + 1) * (1.0 - (-z).exp() * partial)
    }
}

/// `∫_0^s e^{−μt} q(t) dt`
fn exp_poly_integral(q: &Polynomial, mu: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let z = mu * s;
    q.coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| c * s.powi(k as i32 + 1) * exp_moment_unit(k, z))
        .sum()
}

/// The resolvent `(λ − G)⁻¹ φ` of the Neumann Laplacian `G` on `(a, b)`.
#[derive(Debug, Clone)]
pub struct NeumannResolvent {
    pub a: f64,
    pub b: f64,
    pub lambda: f64,
    pub mu: f64,
    /// Coefficient of `e^{μx}`; may overflow for very large `μ(b − a)`,
    /// evaluation does not use it directly.
    pub c: f64,
    /// Coefficient of `e^{−μx}`.
    pub d: f64,
    pub xi: f64,
    pub zeta: f64,
    source: Source,
}

impl NeumannResolvent {
    pub fn new(a: f64, b: f64, lambda: f64, source: &Source) -> Result<Self> {
        check_args(a, b, lambda)?;
        ensure(
            (source.start() - a).abs() <= 1e-12 * (b - a)
                && (source.end() - b).abs() <= 1e-12 * (b - a),
            || "source must cover exactly (a, b)".into(),
        )?;
        let mu = lambda.sqrt();
        let len = b - a;
        let mut xi = 0.0;
        let mut zeta = 0.0;
        for p in &source.pieces {
            let w = p.end - p.start;
            xi += 0.5
                * (-mu * (p.start - a)).exp()
                * exp_poly_integral(&p.poly.recentered(p.start, 1.0), mu, w);
            zeta += 0.5
                * (-mu * (b - p.end)).exp()
                * exp_poly_integral(&p.poly.recentered(p.end, -1.0), mu, w);
        }
        let denom = mu * ((mu * len).exp() - (-mu * len).exp());
        let c = (xi * (-mu * b).exp() + zeta * (-mu * a).exp()) / denom;
        let d = (xi * (mu * b).exp() + zeta * (mu * a).exp()) / denom;
        Ok(Self {
            a,
            b,
            lambda,
            mu,
            c,
            d,
            xi,
            zeta,
            source: source.clone(),
        })
    }

    /// `ψ(x)`; also defined slightly outside `[a, b]` by the same formula.
    pub fn eval(&self, x: f64) -> f64 {
        let (a, b, mu) = (self.a, self.b, self.mu);
        let j = self.source.kernel(mu, x) / (2.0 * mu);
        // c e^{μx} and d e^{−μx} rewritten with nonpositive exponents
        let damp = -(-2.0 * mu * (b - a)).exp_m1();
        let grow = (self.xi * (-mu * (2.0 * b - a - x)).exp() + self.zeta * (-mu * (b - x)).exp())
            / (mu * damp);
        let decay = (self.xi * (-mu * (x - a)).exp() + self.zeta * (-mu * (x + b - 2.0 * a)).exp())
            / (mu * damp);
        j + grow + decay
    }

    pub fn eval_many(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.eval(x)).collect()
    }

    /// `ψ'(x)` from the closed form.
    pub fn derivative(&self, x: f64) -> f64 {
        let (a, b, mu) = (self.a, self.b, self.mu);
        let (below, above) = self.source.kernel_split(mu, x);
        let dj = 0.5 * (above - below);
        let damp = -(-2.0 * mu * (b - a)).exp_m1();
        let grow =
            (self.xi * (-mu * (2.0 * b - a - x)).exp() + self.zeta * (-mu * (b - x)).exp()) / damp;
        let decay =
            (self.xi * (-mu * (x - a)).exp() + self.zeta * (-mu * (x + b - 2.0 * a)).exp()) / damp;
        dj + grow - decay
    }

    /// Difference quotient of `ψ` with step `h = 1e−6 (b − a)`: central
    /// inside the interval, the second-order one-sided stencil within `h` of
    /// an end (the source vanishes outside `[a, b]`, so `ψ''` jumps there).
    pub fn derivative_fd(&self, x: f64) -> f64 {
        let h = 1e-6 * (self.b - self.a);
        if x - h < self.a {
            (-3.0 * self.eval(x) + 4.0 * self.eval(x + h) - self.eval(x + 2.0 * h)) / (2.0 * h)
        } else if x + h > self.b {
            (3.0 * self.eval(x) - 4.0 * self.eval(x - h) + self.eval(x - 2.0 * h)) / (2.0 * h)
        } else {
            (self.eval(x + h) - self.eval(x - h)) / (2.0 * h)
        }
    }

    pub fn source(&self) -> &Source {
        &self.source
    }
}

fn check_args(a: f64, b: f64, lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "λ must be positive, got {lambda}"
        )));
    }
    ensure(a < b && a.is_finite() && b.is_finite(), || {
        format!("empty interval ({a}, {b})")
    })
}

/// `ψ(x)` on `(a, b)` evaluated with the closed form.
pub fn resolvent_apply(
    a: f64,
    b: f64,
    lambda: f64,
    source: &Source,
    xs: &[f64],
) -> Result<Vec<f64>> {
    Ok(NeumannResolvent::new(a, b, lambda, source)?.eval_many(xs))
}

/// Values of the mirror-image series together with the truncation used.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSeries {
    pub values: Vec<f64>,
    /// Terms `|k| ≤ max_k` were summed.
    pub max_k: usize,
    /// Bound on the discarded tail.
    pub tail_bound: f64,
}

/// Bound on the image terms `|k| > max_k` for a source of `L¹` norm at most
/// `l1`: `(1 + e^{−μL})² e^{−2μKL} / (1 − e^{−2μL}) · l1 / (2μ)`.
pub fn image_tail_bound(len: f64, mu: f64, l1: f64, max_k: usize) -> f64 {
    let damp = -(-2.0 * mu * len).exp_m1();
    let near = 1.0 + (-mu * len).exp();
    near * near * (-2.0 * mu * max_k as f64 * len).exp() / damp * l1 / (2.0 * mu)
}

/// Smallest truncation meeting `tolerance`.
pub fn image_series_terms(a: f64, b: f64, lambda: f64, l1: f64, tolerance: f64) -> Result<usize> {
    check_args(a, b, lambda)?;
    ensure(tolerance > 0.0, || {
        format!("tolerance must be positive, got {tolerance}")
    })?;
    let mu = lambda.sqrt();
    let mut k = 0;
    while image_tail_bound(b - a, mu, l1, k) >= tolerance {
        k += 1;
        if k > 10_000_000 {
            return Err(Error::InvalidArgument("tolerance unreachable".into()));
        }
    }
    Ok(k)
}

/// `ψ(x)` by summing mirror images of the free-space kernel.
pub fn resolvent_image_series(
    a: f64,
    b: f64,
    lambda: f64,
    source: &Source,
    xs: &[f64],
    tolerance: f64,
) -> Result<ImageSeries> {
    let l1 = source.l1_bound();
    let max_k = image_series_terms(a, b, lambda, l1, tolerance)?;
    let mu = lambda.sqrt();
    let len = b - a;
    let values = xs
        .iter()
        .map(|&x| {
            let mut sum = 0.0;
            for k in -(max_k as i64)..=(max_k as i64) {
                let shift = 2.0 * k as f64 * len;
                sum += source.kernel(mu, x + shift) + source.kernel(mu, 2.0 * a - x - shift);
            }
            sum / (2.0 * mu)
        })
        .collect();
    Ok(ImageSeries {
        values,
        max_k,
        tail_bound: image_tail_bound(len, mu, l1, max_k),
    })
}

/// One row of [`averaging_limit_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AveragingRow {
    pub lambda: f64,
    /// `‖λψ_λ − mean(φ)‖_{L¹(a,b)}`
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragingTable {
    pub mean: f64,
    pub rows: Vec<AveragingRow>,
}

impl AveragingTable {
    /// Each distance at most `(1 + slack)` times the previous one.
    pub fn is_nonincreasing(&self, slack: f64) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].distance <= (1.0 + slack) * w[0].distance + 1e-15)
    }
}

/// Distances between `λψ_λ` and the mean of `φ` along a decreasing `λ`
/// sequence; they tend to zero as `λ → 0`.
pub fn averaging_limit_check(source: &Source, lambdas: &[f64]) -> Result<AveragingTable> {
    ensure(lambdas.windows(2).all(|w| w[1] < w[0]), || {
        "λ sequence must decrease".into()
    })?;
    let (a, b) = (source.start(), source.end());
    let mean = source.mean();
    let rows = lambdas
        .iter()
        .map(|&lambda| {
            let r = NeumannResolvent::new(a, b, lambda, source)?;
            let breaks: Vec<f64> = std::iter::once(a)
                .chain(source.pieces.iter().map(|p| p.end))
                .collect();
            let distance = gauss_l1(&breaks, 64, |x| lambda * r.eval(x) - mean);
            Ok(AveragingRow { lambda, distance })
        })
        .collect::<Result<_>>()?;
    Ok(AveragingTable { mean, rows })
}

const GAUSS5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

/// `∫f` by composite 5-point Gauss rules, `panels` per interval between
/// consecutive breakpoints.
pub(crate) fn gauss_integral(breaks: &[f64], panels: usize, f: impl Fn(f64) -> f64) -> f64 {
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let h = (w[1] - w[0]) / panels as f64;
        for p in 0..panels {
            let mid = w[0] + (p as f64 + 0.5) * h;
            total += GAUSS5
                .iter()
                .map(|(x, wt)| wt * f(mid + 0.5 * h * x))
                .sum::<f64>()
                * 0.5
                * h;
        }
    }
    total
}

pub(crate) fn gauss_l1(breaks: &[f64], panels: usize, f: impl Fn(f64) -> f64) -> f64 {
    gauss_integral(breaks, panels, |x| f(x).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn linear() -> Source {
        Source::polynomial(0.0, 1.0, Polynomial::new(vec![0.0, 1.0])).unwrap()
    }

    /// Second-order finite differences for `λψ − ψ'' = φ` with ghost-point
    /// Neumann rows, solved by the Thomas algorithm.
    fn fd_oracle(lambda: f64, n: usize, phi: impl Fn(f64) -> f64) -> (Vec<f64>, Vec<f64>) {
        let h = 1.0 / n as f64;
        let xs: Vec<f64> = (0..=n).map(|k| k as f64 * h).collect();
        let m = n + 1;
        let diag = vec![lambda + 2.0 / (h * h); m];
        let mut lower = vec![-1.0 / (h * h); m];
        let mut upper = vec![-1.0 / (h * h); m];
        upper[0] = -2.0 / (h * h);
        lower[m - 1] = -2.0 / (h * h);
        let mut rhs: Vec<f64> = xs.iter().map(|&x| phi(x)).collect();
        let mut c = vec![0.0; m];
        let mut d = diag.clone();
        c[0] = upper[0] / d[0];
        rhs[0] /= d[0];
        for k in 1..m {
            d[k] = diag[k] - lower[k] * c[k - 1];
            c[k] = upper[k] / d[k];
            rhs[k] = (rhs[k] - lower[k] * rhs[k - 1]) / d[k];
        }
        for k in (0..m - 1).rev() {
            rhs[k] -= c[k] * rhs[k + 1];
        }
        (xs, rhs)
    }

    #[test]
    fn exp_moments_match_quadrature() {
        for k in 0..5 {
            for z in [0.0, 1e-8, 0.3, 2.0, 7.5, 39.0, 41.0, 300.0] {
                let n = 20000;
                let h = 1.0 / n as f64;
                // Simpson
                let f = |t: f64| (-z * t).exp() * t.powi(k as i32);
                let mut s = f(0.0) + f(1.0);
                for j in 1..n {
                    s += if j % 2 == 1 { 4.0 } else { 2.0 } * f(j as f64 * h);
                }
                s *= h / 3.0;
                let got = exp_moment_unit(k, z);
                assert!(
                    (got - s).abs() <= 1e-9 * s.abs().max(1e-12),
                    "k={k} z={z}: {got} vs {s}"
                );
            }
        }
    }

    #[test]
    fn recentered_polynomial() {
        let p = Polynomial::new(vec![1.0, -2.0, 0.5, 3.0]);
        let q = p.recentered(0.7, -1.0);
        for t in [0.0, 0.3, 1.1] {
            assert!((q.eval(t) - p.eval(0.7 - t)).abs() < 1e-13);
        }
    }

    #[test]
    fn constant_source_gives_constant_resolvent() {
        let src = Source::polynomial(0.0, 1.0, Polynomial::constant(1.0)).unwrap();
        for lambda in [1e-3, 0.5, 1.0, 30.0, 1e4] {
            let psi = resolvent_apply(0.0, 1.0, lambda, &src, &[0.0, 0.25, 0.5, 1.0]).unwrap();
            for v in psi {
                assert!((v * lambda - 1.0).abs() < 1e-12, "λ={lambda}: {v}");
            }
        }
    }

    #[test]
    fn cosine_is_an_eigenfunction() {
        let src = Source::sampled(0.0, 1.0, 4000, |x| (PI * x).cos()).unwrap();
        let r = NeumannResolvent::new(0.0, 1.0, 1.0, &src).unwrap();
        for x in [0.0, 0.1, 0.5, 0.9, 1.0] {
            let exact = (PI * x).cos() / (1.0 + PI * PI);
            assert!((r.eval(x) - exact).abs() < 1e-7, "x={x}");
        }
    }

    #[test]
    fn linear_source_matches_finite_differences() {
        let r = NeumannResolvent::new(0.0, 1.0, 1.0, &linear()).unwrap();
        let (xs, fd) = fd_oracle(1.0, 10_000, |x| x);
        let err = xs
            .iter()
            .zip(&fd)
            .map(|(&x, v)| (r.eval(x) - v).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn neumann_conditions_and_resolvent_equation() {
        let src =
            Source::polynomial(-0.5, 2.0, Polynomial::new(vec![0.3, -1.0, 0.2, 0.4])).unwrap();
        for lambda in [1e-2, 1.0, 25.0] {
            let r = NeumannResolvent::new(-0.5, 2.0, lambda, &src).unwrap();
            // difference quotients lose ε·|ψ|/h to round-off
            let scale = r.eval(0.5).abs().max(1.0);
            assert!(r.derivative_fd(-0.5).abs() < 1e-8 * scale);
            assert!(r.derivative_fd(2.0).abs() < 1e-8 * scale);
            assert!(r.derivative(-0.5).abs() < 1e-10);
            assert!(r.derivative(2.0).abs() < 1e-10);
            let h = 1e-3;
            for x in [0.0, 0.7, 1.5] {
                let second = (r.eval(x + h) - 2.0 * r.eval(x) + r.eval(x - h)) / (h * h);
                let residual = lambda * r.eval(x) - second - src.eval(x);
                assert!(residual.abs() < 1e-5, "λ={lambda} x={x}: {residual}");
            }
        }
    }

    #[test]
    fn image_series_examples() {
        let one = Source::polynomial(0.0, 1.0, Polynomial::constant(1.0)).unwrap();
        let s = resolvent_image_series(0.0, 1.0, 1.0, &one, &[0.0, 0.3, 1.0], 1e-13).unwrap();
        for v in &s.values {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let xs: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
        let series = resolvent_image_series(0.0, 1.0, 4.0, &linear(), &xs, 1e-13).unwrap();
        let closed = resolvent_apply(0.0, 1.0, 4.0, &linear(), &xs).unwrap();
        for (u, v) in series.values.iter().zip(&closed) {
            assert!((u - v).abs() < 1e-10);
        }
        // λ = 100: the bound decays like e^{−20K}
        assert!(image_series_terms(0.0, 1.0, 100.0, 1.0, 1e-12).unwrap() <= 2);
        assert!(resolvent_image_series(0.0, 1.0, 0.0, &one, &xs, 1e-3).is_err());
    }

    #[test]
    fn argument_errors() {
        let one = Source::polynomial(0.0, 1.0, Polynomial::constant(1.0)).unwrap();
        assert!(NeumannResolvent::new(0.0, 1.0, -1.0, &one).is_err());
        assert!(NeumannResolvent::new(1.0, 1.0, 1.0, &one).is_err());
        assert!(Source::polynomial(1.0, 0.0, Polynomial::constant(1.0)).is_err());
    }

    #[test]
    fn averaging_limit_examples() {
        let one = Source::polynomial(0.0, 1.0, Polynomial::constant(2.0)).unwrap();
        let t = averaging_limit_check(&one, &[1e-1, 1e-2]).unwrap();
        assert!(t.rows.iter().all(|r| r.distance < 1e-12));

        let t = averaging_limit_check(&linear(), &[1e-1, 1e-2, 1e-3, 1e-4]).unwrap();
        assert!((t.mean - 0.5).abs() < 1e-15);
        assert!(t.is_nonincreasing(0.0));
        assert!(t.rows[3].distance <= 0.05);

        let sign = Source::piecewise(
            &[0.0, 0.5, 1.0],
            vec![Polynomial::constant(-1.0), Polynomial::constant(1.0)],
        )
        .unwrap();
        let t = averaging_limit_check(&sign, &[1.0, 1e-1, 1e-2, 1e-3, 1e-4]).unwrap();
        assert!(t.mean.abs() < 1e-15);
        assert!(t.is_nonincreasing(0.05));
        assert!(t.rows[4].distance < 1e-3);
        assert!(averaging_limit_check(&sign, &[1e-2, 1e-1]).is_err());
    }

    #[test]
    fn positivity_and_uniform_bound() {
        let src = Source::piecewise(
            &[0.0, 0.2, 0.6, 1.0],
            vec![
                Polynomial::constant(0.0),
                Polynomial::new(vec![0.0, 3.0]),
                Polynomial::constant(0.0),
            ],
        )
        .unwrap();
        let xs: Vec<f64> = (0..=200).map(|k| k as f64 / 200.0).collect();
        let l1 = src.integral();
        for lambda in [1e-4, 1e-2, 1.0, 1e2, 1e4] {
            let r = NeumannResolvent::new(0.0, 1.0, lambda, &src).unwrap();
            let vals = r.eval_many(&xs);
            assert!(vals.iter().all(|v| *v >= -1e-12));
            let norm = gauss_l1(&[0.0, 0.2, 0.6, 1.0], 64, |x| lambda * r.eval(x));
            assert!(norm <= 2.0 * l1, "λ={lambda}: {norm}");
        }
    }
}
