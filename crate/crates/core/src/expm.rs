//! Dense matrix exponential by scaling and squaring with diagonal Padé
//! approximants (degrees 3, 5, 7, 9, 13), following Higham's 2005 variant.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[allow(clippy::excessive_precision)]
const THETA: [(usize, f64); 5] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
    (13, 5.371920351148152e0),
];

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Maximum absolute column sum.
pub fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `e^{a}` for a square matrix.
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.ncols(),
        });
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(
            "matrix has non-finite entries".into(),
        ));
    }
    let norm = norm1(a);
    let ident = DMatrix::<f64>::identity(n, n);
    if norm == 0.0 {
        return Ok(ident);
    }

    let a2 = a * a;
    for &(m, theta) in &THETA[..4] {
        if norm <= theta {
            let (u, v) = match m {
                3 => low_degree(a, &a2, &ident, &B3),
                5 => low_degree(a, &a2, &ident, &B5),
                7 => low_degree(a, &a2, &ident, &B7),
                _ => low_degree(a, &a2, &ident, &B9),
            };
            return solve_pade(&u, &v);
        }
    }

    let theta13 = THETA[4].1;
    let s = if norm > theta13 {
        (norm / theta13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scale = 2f64.powi(-s);
    let a = a * scale;
    let a2 = a2 * (scale * scale);
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &B13;
    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = &a * (inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1]);
    let inner_v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];
    let mut r = solve_pade(&u, &v)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

/// Odd (`u`) and even (`v`) parts of a Padé numerator of degree ≤ 9.
fn low_degree(
    a: &DMatrix<f64>,
    a2: &DMatrix<f64>,
    ident: &DMatrix<f64>,
    b: &[f64],
) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut odd = ident * b[1];
    let mut even = ident * b[0];
    let mut power = ident.clone();
    for k in 1..b.len() / 2 {
        power = &power * a2;
        odd += &power * b[2 * k + 1];
        even += &power * b[2 * k];
    }
    (a * odd, even)
}

fn solve_pade(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = v + u;
    let q = v - u;
    q.lu().solve(&p).ok_or(Error::Singular("Padé denominator"))
}

#[cfg(test)]
mod tests {
    use super::*;

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

    fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        norm1(&(a - b)) / norm1(b)
    }

    #[test]
    fn zero_matrix_gives_identity() {
        let z = DMatrix::zeros(3, 3);
        assert_eq!(expm(&z).unwrap(), DMatrix::identity(3, 3));
    }

    #[test]
    fn diagonal_matrix() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, -0.5]));
        let e = expm(&a).unwrap();
        assert!((e[(0, 0)] - (-1f64).exp()).abs() < 1e-15);
        assert!((e[(1, 1)] - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn matches_taylor_across_degree_regimes() {
        let base =
            DMatrix::from_row_slice(3, 3, &[-1.0, 0.5, 0.25, 0.3, -0.8, 0.1, 0.2, 0.4, -0.6]);
        for scale in [1e-3, 0.1, 0.5, 1.5, 3.0] {
            let a = &base * scale;
            let e = expm(&a).unwrap();
            assert!(rel_err(&e, &taylor(&a, 60)) < 1e-13, "scale {scale}");
        }
    }

    #[test]
    fn scaled_regime_matches_squared_taylor() {
        let base = DMatrix::from_row_slice(2, 2, &[-4.0, 3.0, 2.0, -5.0]);
        let a = &base * 4.0;
        // e^{A} = (e^{A/64})^64, each factor by a converged series
        let mut r = taylor(&(&a / 64.0), 40);
        for _ in 0..6 {
            r = &r * &r;
        }
        assert!(rel_err(&expm(&a).unwrap(), &r) < 1e-12);
    }

    #[test]
    fn rejects_non_square() {
        assert!(expm(&DMatrix::zeros(2, 3)).is_err());
    }
}
