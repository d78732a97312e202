//! Direct solver for the 2x2 continuous-time Lyapunov equation
//! A^T P + P A + Q = 0.
//!
//! At this size the symmetric unknowns (p11, p12, p22) satisfy a 3x3
//! linear system, solved directly; the residual and positive-definiteness
//! of P are verified before the result is accepted.

use crate::error::{Error, Result};
use crate::numcore::eig::{hurwitz_margin, solve_real};
use crate::numcore::Mat;

/// Residual bound every accepted solution satisfies.
pub const LYAPUNOV_RESIDUAL_TOL: f64 = 1e-10;

/// Eigenvalues of a symmetric 2x2 matrix, closed form.
pub fn symmetric_2x2_eigenvalues(m: &Mat) -> (f64, f64) {
    let mean = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let half_diff = 0.5 * (m[(0, 0)] - m[(1, 1)]);
    let off = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let r = (half_diff * half_diff + off * off).sqrt();
    (mean - r, mean + r)
}

fn check_2x2(m: &Mat, name: &str) -> Result<()> {
    if m.rows() != 2 || m.cols() != 2 {
        return Err(Error::DimensionMismatch {
            op: "solve_lyapunov_2x2",
            expected: "2x2".into(),
            got: format!("{name} is {}x{}", m.rows(), m.cols()),
        });
    }
    Ok(())
}

/// Unique symmetric positive-definite P with A^T P + P A + Q = 0, for
/// Hurwitz A and symmetric positive-definite Q.
pub fn solve_lyapunov_2x2(a_m: &Mat, q: &Mat) -> Result<Mat> {
    check_2x2(a_m, "A_m")?;
    check_2x2(q, "Q")?;

    let sym_tol = 1e-12 * q.frobenius_norm().max(1.0);
    if (q[(0, 1)] - q[(1, 0)]).abs() > sym_tol {
        return Err(Error::InvalidParams(format!(
            "Q must be symmetric (q01 = {}, q10 = {})",
            q[(0, 1)],
            q[(1, 0)]
        )));
    }
    let (q_min, _) = symmetric_2x2_eigenvalues(q);
    if q_min <= 0.0 {
        return Err(Error::InvalidParams(format!(
            "Q must be positive-definite (min eigenvalue {q_min})"
        )));
    }

    let margin = hurwitz_margin(a_m)?;
    if margin >= 0.0 {
        return Err(Error::NotHurwitz { margin });
    }

    let (a, b) = (a_m[(0, 0)], a_m[(0, 1)]);
    let (c, d) = (a_m[(1, 0)], a_m[(1, 1)]);
    // Rows: the (1,1), (1,2), (2,2) entries of A^T P + P A = -Q in the
    // unknowns (p11, p12, p22).
    let sys = Mat::from_rows(&[
        &[2.0 * a, 2.0 * c, 0.0],
        &[b, a + d, c],
        &[0.0, 2.0 * b, 2.0 * d],
    ])?;
    let rhs = [-q[(0, 0)], -0.5 * (q[(0, 1)] + q[(1, 0)]), -q[(1, 1)]];
    let p = solve_real(&sys, &rhs)?;
    let p_mat = Mat::from_rows(&[&[p[0], p[1]], &[p[1], p[2]]])?;

    let residual = a_m
        .transpose()
        .matmul(&p_mat)?
        .add(&p_mat.matmul(a_m)?)?
        .add(q)?
        .frobenius_norm();
    if residual >= LYAPUNOV_RESIDUAL_TOL {
        return Err(Error::SolveFailed {
            context: format!("Lyapunov residual {residual} exceeds {LYAPUNOV_RESIDUAL_TOL}"),
        });
    }
    let (p_min, _) = symmetric_2x2_eigenvalues(&p_mat);
    if p_min <= 0.0 {
        return Err(Error::SolveFailed {
            context: format!("computed P is not positive-definite (min eigenvalue {p_min})"),
        });
    }
    Ok(p_mat)
}
