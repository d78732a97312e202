//! Eigenvalues of small real matrices via Hessenberg reduction followed by
//! Francis double-shift QR iteration, plus the dense linear solves used by
//! the Lyapunov and frequency-response routines.
//!
//! The iteration runs on the real Hessenberg form and deflates 1x1 and 2x2
//! diagonal blocks, so complex conjugate pairs come out exactly. An
//! exceptional (ad hoc) shift is injected every ten stalled iterations to
//! break the rare cycling patterns of the standard shift. The total
//! iteration budget is 500*n; exceeding it is reported as a hard error
//! rather than returning unconverged values.

// Index-based loops mirror the textbook formulations throughout.
#![allow(clippy::needless_range_loop)]

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numcore::Mat;

/// Largest matrix the eigensolver accepts; everything in this toolkit is
/// a stacked system of at most 15 states.
pub const MAX_EIG_DIM: usize = 15;

/// All eigenvalues (with multiplicity), sorted by (re, im).
pub fn eigenvalues(a: &Mat) -> Result<Vec<Complex64>> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            op: "eigenvalues",
            expected: "square matrix".into(),
            got: format!("{}x{}", a.rows(), a.cols()),
        });
    }
    let n = a.rows();
    if n == 0 || n > MAX_EIG_DIM {
        return Err(Error::InvalidParams(format!(
            "eigenvalues: dimension must be in 1..={MAX_EIG_DIM}, got {n}"
        )));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite {
            context: "eigenvalues: matrix entries".into(),
        });
    }

    let mut h = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in 0..n {
            h[i][j] = a[(i, j)];
        }
    }

    if n == 1 {
        return Ok(vec![Complex64::new(h[0][0], 0.0)]);
    }

    hessenberg(&mut h);
    let mut eig = francis_qr(&mut h)?;
    eig.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(eig)
}

/// Max real part over the spectrum; the matrix is Hurwitz iff this is < 0.
pub fn hurwitz_margin(a: &Mat) -> Result<f64> {
    let eig = eigenvalues(a)?;
    Ok(eig.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Householder reduction to upper Hessenberg form (in place).
fn hessenberg(h: &mut [Vec<f64>]) {
    let n = h.len();
    for k in 0..n.saturating_sub(2) {
        let norm: f64 = (k + 1..n).map(|i| h[i][k] * h[i][k]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if h[k + 1][k] >= 0.0 { -norm } else { norm };
        let m = n - k - 1;
        let mut v = vec![0.0; m];
        v[0] = h[k + 1][k] - alpha;
        for i in 1..m {
            v[i] = h[k + 1 + i][k];
        }
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        if vtv == 0.0 {
            continue;
        }
        let beta = 2.0 / vtv;
        // Left: rows k+1..n, all columns.
        for j in 0..n {
            let s: f64 = (0..m).map(|i| v[i] * h[k + 1 + i][j]).sum();
            let f = beta * s;
            for i in 0..m {
                h[k + 1 + i][j] -= f * v[i];
            }
        }
        // Right: columns k+1..n, all rows.
        for i in 0..n {
            let s: f64 = (0..m).map(|j| v[j] * h[i][k + 1 + j]).sum();
            let f = beta * s;
            for j in 0..m {
                h[i][k + 1 + j] -= f * v[j];
            }
        }
        h[k + 1][k] = alpha;
        for i in k + 2..n {
            h[i][k] = 0.0;
        }
    }
}

/// Reflector for a 3-vector: returns (v, beta) with (I - beta v v^T) x = -+|x| e1.
fn house3(x: f64, y: f64, z: f64) -> ([f64; 3], f64) {
    let norm = (x * x + y * y + z * z).sqrt();
    if norm == 0.0 {
        return ([1.0, 0.0, 0.0], 0.0);
    }
    let alpha = if x >= 0.0 { -norm } else { norm };
    let v = [x - alpha, y, z];
    let vtv = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    if vtv == 0.0 {
        return ([1.0, 0.0, 0.0], 0.0);
    }
    (v, 2.0 / vtv)
}

fn house2(x: f64, y: f64) -> ([f64; 2], f64) {
    let norm = (x * x + y * y).sqrt();
    if norm == 0.0 {
        return ([1.0, 0.0], 0.0);
    }
    let alpha = if x >= 0.0 { -norm } else { norm };
    let v = [x - alpha, y];
    let vtv = v[0] * v[0] + v[1] * v[1];
    if vtv == 0.0 {
        return ([1.0, 0.0], 0.0);
    }
    (v, 2.0 / vtv)
}

/// Eigenvalues of [[a, b], [c, d]] from trace/determinant, with the stable
/// real-pair split (larger root by sign of the mean, mate via the product).
fn eig2(a: f64, b: f64, c: f64, d: f64) -> (Complex64, Complex64) {
    let p = 0.5 * (a + d);
    let det = a * d - b * c;
    let disc = p * p - det;
    if disc >= 0.0 {
        let r = disc.sqrt();
        let l1 = if p >= 0.0 { p + r } else { p - r };
        let l2 = if l1 != 0.0 { det / l1 } else { 0.0 };
        (Complex64::new(l1, 0.0), Complex64::new(l2, 0.0))
    } else {
        let q = (-disc).sqrt();
        (Complex64::new(p, q), Complex64::new(p, -q))
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix (eigenvalues only).
fn francis_qr(h: &mut [Vec<f64>]) -> Result<Vec<Complex64>> {
    let n = h.len();
    let eps = f64::EPSILON;
    let anorm: f64 = (0..n)
        .map(|i| (i.saturating_sub(1)..n).map(|j| h[i][j].abs()).sum::<f64>())
        .sum();
    let budget = 500 * n;

    let mut eig = Vec::with_capacity(n);
    let mut hi = n - 1;
    let mut total_iters = 0usize;
    let mut stalled = 0usize;

    loop {
        // Find the start of the irreducible block ending at `hi`.
        let mut lo = 0;
        for l in (1..=hi).rev() {
            let mut tst = h[l - 1][l - 1].abs() + h[l][l].abs();
            if tst == 0.0 {
                tst = anorm.max(f64::MIN_POSITIVE);
            }
            if h[l][l - 1].abs() <= eps * tst {
                h[l][l - 1] = 0.0;
                lo = l;
                break;
            }
        }

        if lo == hi {
            eig.push(Complex64::new(h[hi][hi], 0.0));
            if hi == 0 {
                return Ok(eig);
            }
            hi -= 1;
            stalled = 0;
            continue;
        }
        if lo + 1 == hi {
            let (l1, l2) = eig2(h[lo][lo], h[lo][hi], h[hi][lo], h[hi][hi]);
            eig.push(l1);
            eig.push(l2);
            if lo == 0 {
                return Ok(eig);
            }
            hi = lo - 1;
            stalled = 0;
            continue;
        }

        total_iters += 1;
        stalled += 1;
        if total_iters > budget {
            return Err(Error::NoConvergence {
                iterations: total_iters,
            });
        }
        let exceptional = stalled.is_multiple_of(10);
        francis_step(h, lo, hi, exceptional);
    }
}

/// One implicit double-shift sweep on the active window [lo..=hi].
fn francis_step(h: &mut [Vec<f64>], lo: usize, hi: usize, exceptional: bool) {
    let m = hi - 1;
    let (s, t) = if exceptional {
        // Ad hoc real shift pair to break cycling (LAPACK dlahqr style).
        let a = h[hi][hi] + 0.75 * h[hi][hi - 1].abs();
        (2.0 * a, a * a)
    } else {
        (
            h[m][m] + h[hi][hi],
            h[m][m] * h[hi][hi] - h[m][hi] * h[hi][m],
        )
    };

    let mut x = h[lo][lo] * h[lo][lo] + h[lo][lo + 1] * h[lo + 1][lo] - s * h[lo][lo] + t;
    let mut y = h[lo + 1][lo] * (h[lo][lo] + h[lo + 1][lo + 1] - s);
    let mut z = h[lo + 1][lo] * h[lo + 2][lo + 1];

    for k in lo..=hi - 2 {
        let (v, beta) = house3(x, y, z);
        if beta != 0.0 {
            let q = if k > lo { k - 1 } else { lo };
            for j in q..=hi {
                let sum = v[0] * h[k][j] + v[1] * h[k + 1][j] + v[2] * h[k + 2][j];
                let f = beta * sum;
                h[k][j] -= f * v[0];
                h[k + 1][j] -= f * v[1];
                h[k + 2][j] -= f * v[2];
            }
            let r = (k + 3).min(hi);
            for row in h.iter_mut().take(r + 1).skip(lo) {
                let sum = v[0] * row[k] + v[1] * row[k + 1] + v[2] * row[k + 2];
                let f = beta * sum;
                row[k] -= f * v[0];
                row[k + 1] -= f * v[1];
                row[k + 2] -= f * v[2];
            }
        }
        x = h[k + 1][k];
        y = h[k + 2][k];
        z = if k + 3 <= hi { h[k + 3][k] } else { 0.0 };
    }

    let (v, beta) = house2(x, y);
    if beta != 0.0 {
        for j in hi - 2..=hi {
            let sum = v[0] * h[hi - 1][j] + v[1] * h[hi][j];
            let f = beta * sum;
            h[hi - 1][j] -= f * v[0];
            h[hi][j] -= f * v[1];
        }
        for row in h.iter_mut().take(hi + 1).skip(lo) {
            let sum = v[0] * row[hi - 1] + v[1] * row[hi];
            let f = beta * sum;
            row[hi - 1] -= f * v[0];
            row[hi] -= f * v[1];
        }
    }
}

/// Dense real linear solve (Gaussian elimination, partial pivoting).
pub(crate) fn solve_real(a: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    if !a.is_square() || a.rows() != b.len() {
        return Err(Error::DimensionMismatch {
            op: "solve_real",
            expected: "square matrix with matching rhs".into(),
            got: format!("{}x{} with rhs {}", a.rows(), a.cols(), b.len()),
        });
    }
    let n = a.rows();
    let mut m = vec![vec![0.0f64; n + 1]; n];
    let mut amax: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            m[i][j] = a[(i, j)];
            amax = amax.max(m[i][j].abs());
        }
        m[i][n] = b[i];
    }
    let tiny = (amax * 1e-14).max(f64::MIN_POSITIVE);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if m[piv][col].abs() <= tiny {
            return Err(Error::SolveFailed {
                context: format!("pivot {} ~ 0 at column {col}", m[piv][col]),
            });
        }
        m.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for j in col..=n {
                m[row][j] -= f * m[col][j];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut acc = m[i][n];
        for j in i + 1..n {
            acc -= m[i][j] * x[j];
        }
        x[i] = acc / m[i][i];
    }
    Ok(x)
}

/// Dense complex linear solve, used for resolvent evaluations
/// (s I - A) z = b.
pub(crate) fn solve_complex(a: &[Vec<Complex64>], b: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = a.len();
    if n == 0 || a.iter().any(|r| r.len() != n) || b.len() != n {
        return Err(Error::DimensionMismatch {
            op: "solve_complex",
            expected: "square matrix with matching rhs".into(),
            got: format!("{n} rows"),
        });
    }
    let mut m: Vec<Vec<Complex64>> = a.to_vec();
    let mut rhs = b.to_vec();
    let amax = m
        .iter()
        .flat_map(|r| r.iter().map(|z| z.norm()))
        .fold(0.0f64, f64::max);
    let tiny = (amax * 1e-14).max(f64::MIN_POSITIVE);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].norm().total_cmp(&m[j][col].norm()))
            .unwrap();
        if m[piv][col].norm() <= tiny {
            return Err(Error::SolveFailed {
                context: format!("complex pivot ~ 0 at column {col}"),
            });
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for j in col..n {
                let sub = f * m[col][j];
                m[row][j] -= sub;
            }
            let sub = f * rhs[col];
            rhs[row] -= sub;
        }
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for i in (0..n).rev() {
        let mut acc = rhs[i];
        for j in i + 1..n {
            acc -= m[i][j] * x[j];
        }
        x[i] = acc / m[i][i];
    }
    Ok(x)
}
