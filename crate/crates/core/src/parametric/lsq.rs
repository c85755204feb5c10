//! Dense tall-matrix least squares by Householder QR.
//!
//! The spline deconvolution needs one small solve (tens of rows, ~10
//! unknowns) per fit, plus an honest rank check: a near-singular design
//! means the count data cannot distinguish the basis functions and the fit
//! must be refused rather than returned with garbage coefficients.

use crate::error::Error;
use crate::scalar::Scalar;
use crate::Result;

/// Designs whose `R` diagonal spread exceeds this are rejected as
/// ill-conditioned.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Minimum-residual solution of an overdetermined linear system.
#[derive(Debug, Clone, PartialEq)]
pub struct LsqSolution<S: Scalar = f64> {
    pub x: Vec<S>,
    /// `max |R_jj| / min |R_jj|` — a cheap proxy for the condition number,
    /// exact enough to catch rank collapse.
    pub condition: S,
    /// `‖A·x − b‖₂`.
    pub residual_norm: S,
}

/// Solve `min ‖A·x − b‖₂` for a row-major matrix with `rows.len() ≥`
/// unknowns, via Householder QR with column-by-column reflection.
pub fn householder_lsq<S: Scalar>(rows: &[Vec<S>], rhs: &[S]) -> Result<LsqSolution<S>> {
    let m = rows.len();
    if m == 0 {
        return Err(Error::InvalidParam { name: "rows", message: "empty system".into() });
    }
    let p = rows[0].len();
    if p == 0 {
        return Err(Error::InvalidParam { name: "rows", message: "no unknowns".into() });
    }
    if m < p {
        return Err(Error::InvalidParam {
            name: "rows",
            message: format!("underdetermined system: {m} rows for {p} unknowns"),
        });
    }
    if rhs.len() != m {
        return Err(Error::InvalidParam {
            name: "rhs",
            message: format!("right-hand side has {} entries for {m} rows", rhs.len()),
        });
    }

    // Column-major working copy; reflections overwrite it in place.
    let mut a = vec![S::zero(); m * p];
    for (i, row) in rows.iter().enumerate() {
        if row.len() != p {
            return Err(Error::InvalidParam {
                name: "rows",
                message: format!("ragged matrix: row {i} has {} entries, expected {p}", row.len()),
            });
        }
        for (jj, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite("least-squares design"));
            }
            a[jj * m + i] = v;
        }
    }
    let mut b = rhs.to_vec();
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("least-squares right-hand side"));
    }

    // Householder triangularization; column k of `a` below the diagonal
    // holds the (scaled) reflection vector afterwards, the strict upper
    // triangle holds R, and `rdiag` holds R's diagonal.
    let mut rdiag = vec![S::zero(); p];
    for k in 0..p {
        let mut nrm = S::zero();
        for i in k..m {
            let v = a[k * m + i];
            nrm = (nrm * nrm + v * v).sqrt();
        }
        if nrm != S::zero() {
            if a[k * m + k] < S::zero() {
                nrm = -nrm;
            }
            for i in k..m {
                a[k * m + i] /= nrm;
            }
            a[k * m + k] += S::one();
            for jc in (k + 1)..p {
                let mut s = S::zero();
                for i in k..m {
                    s += a[k * m + i] * a[jc * m + i];
                }
                s = -s / a[k * m + k];
                for i in k..m {
                    let h = a[k * m + i];
                    a[jc * m + i] += s * h;
                }
            }
            let mut s = S::zero();
            for i in k..m {
                s += a[k * m + i] * b[i];
            }
            s = -s / a[k * m + k];
            for i in k..m {
                b[i] += s * a[k * m + i];
            }
        }
        rdiag[k] = -nrm;
    }

    let mut hi = S::zero();
    let mut lo = S::infinity();
    for &d in &rdiag {
        let d = d.abs();
        hi = hi.max(d);
        lo = lo.min(d);
    }
    let condition = if lo > S::zero() { hi / lo } else { S::infinity() };
    if !(condition.is_finite() && condition.to_f64_lossy() <= CONDITION_LIMIT) {
        return Err(Error::IllConditioned { cond: condition.to_f64_lossy() });
    }

    // Back substitution: R x = (Qᵀb)[..p]; the tail of Qᵀb is the residual.
    let mut x = vec![S::zero(); p];
    for k in (0..p).rev() {
        let mut v = b[k];
        for jc in (k + 1)..p {
            v -= a[jc * m + k] * x[jc];
        }
        x[k] = v / rdiag[k];
    }
    let residual_norm = b[p..].iter().map(|&v| v * v).sum::<S>().sqrt();
    Ok(LsqSolution { x, condition, residual_norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn mat(rows: &[&[f64]]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| r.to_vec()).collect()
    }

    #[test]
    fn solves_square_system_exactly() {
        // [2 1; 1 3]·x = [5; 10] → x = (1, 3)
        let a = mat(&[&[2.0, 1.0], &[1.0, 3.0]]);
        let sol = householder_lsq(&a, &[5.0, 10.0]).unwrap();
        assert_relative_eq!(sol.x[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(sol.x[1], 3.0, epsilon = 1e-12);
        assert!(sol.residual_norm < 1e-12);
    }

    #[test]
    fn consistent_overdetermined_system_has_zero_residual() {
        // b lies in the column span, so the residual vanishes and x is exact.
        let truth = [1.5, -2.0, 0.25];
        let mut rng = crate::rng::stream_rng(404, 0);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let rhs: Vec<f64> = rows
            .iter()
            .map(|r| r.iter().zip(&truth).map(|(a, x)| a * x).sum())
            .collect();
        let sol = householder_lsq(&rows, &rhs).unwrap();
        for (&got, &want) in sol.x.iter().zip(&truth) {
            assert_relative_eq!(got, want, epsilon = 1e-10);
        }
        assert!(sol.residual_norm < 1e-10);
    }

    #[test]
    fn residual_norm_matches_direct_computation() {
        let mut rng = crate::rng::stream_rng(405, 0);
        let rows: Vec<Vec<f64>> = (0..25)
            .map(|_| (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let rhs: Vec<f64> = (0..25).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sol = householder_lsq(&rows, &rhs).unwrap();
        let direct: f64 = rows
            .iter()
            .zip(&rhs)
            .map(|(r, &b)| {
                let pred: f64 = r.iter().zip(&sol.x).map(|(a, x)| a * x).sum();
                (pred - b) * (pred - b)
            })
            .sum::<f64>()
            .sqrt();
        assert_relative_eq!(sol.residual_norm, direct, epsilon = 1e-10);
    }

    #[test]
    fn agrees_with_reference_svd_solver() {
        for trial in 0..20 {
            let mut rng = crate::rng::stream_rng(406, trial);
            let (m, p) = (30, 6);
            let rows: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let rhs: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let sol = householder_lsq(&rows, &rhs).unwrap();

            let na = nalgebra::DMatrix::from_fn(m, p, |i, jj| rows[i][jj]);
            let nb = nalgebra::DVector::from_column_slice(&rhs);
            let nx = na.svd(true, true).solve(&nb, 1e-14).unwrap();
            for (&got, &want) in sol.x.iter().zip(nx.iter()) {
                assert_relative_eq!(got, want, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn duplicate_column_is_rejected_as_ill_conditioned() {
        let mut rng = crate::rng::stream_rng(407, 0);
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|_| {
                let v: f64 = rng.gen_range(-1.0..1.0);
                let w: f64 = rng.gen_range(-1.0..1.0);
                vec![v, w, v]
            })
            .collect();
        let rhs: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
        match householder_lsq(&rows, &rhs) {
            Err(Error::IllConditioned { cond }) => assert!(cond > CONDITION_LIMIT || cond.is_infinite()),
            other => panic!("expected ill-conditioned error, got {other:?}"),
        }
    }

    #[test]
    fn shape_validation() {
        assert!(householder_lsq::<f64>(&[], &[]).is_err());
        assert!(householder_lsq(&mat(&[&[1.0, 2.0]]), &[1.0]).is_err()); // underdetermined
        assert!(householder_lsq(&mat(&[&[1.0], &[2.0]]), &[1.0]).is_err()); // rhs mismatch
        let ragged = vec![vec![1.0, 2.0], vec![1.0]];
        assert!(householder_lsq(&ragged, &[1.0, 2.0]).is_err());
        let nan = mat(&[&[f64::NAN], &[1.0]]);
        assert!(householder_lsq(&nan, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn f32_path_solves_small_system() {
        let rows: Vec<Vec<f32>> = vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![1.0, 1.0]];
        let rhs = vec![1.0f32, 4.0, 3.0];
        let sol = householder_lsq(&rows, &rhs).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-5);
        assert!((sol.x[1] - 2.0).abs() < 1e-5);
    }
}
