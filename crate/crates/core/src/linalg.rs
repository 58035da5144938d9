//! Dense least-squares and decomposition helpers shared by the fitting modules.

use nalgebra::{DMatrix, DVector, SVD};

const SVD_EPS: f64 = 1e-15;
const SVD_MAX_ITER: usize = 10_000;

/// Economy SVD `a = u · diag(s) · vᵀ` with `s` sorted descending.
pub struct Thin {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

/// Economy SVD of an arbitrary dense matrix. Tall inputs are reduced by a
/// thin QR first so the iterative stage only sees a square factor.
pub fn thin_svd(a: &DMatrix<f64>) -> Option<Thin> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Some(Thin {
            u: DMatrix::zeros(m, 0),
            s: Vec::new(),
            v: DMatrix::zeros(n, 0),
        });
    }
    if m < n {
        let t = thin_svd(&a.transpose())?;
        return Some(Thin { u: t.v, s: t.s, v: t.u });
    }
    let (q, r) = if m > n {
        let qr = a.clone().qr();
        (Some(qr.q()), qr.r())
    } else {
        (None, a.clone())
    };
    let svd = SVD::try_new(r, true, true, SVD_EPS, SVD_MAX_ITER)?;
    let (ur, s, vt) = (svd.u?, svd.singular_values, svd.v_t?);
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]).then(i.cmp(&j)));
    let ur = ur.select_columns(&order);
    let v = vt.transpose().select_columns(&order);
    let s: Vec<f64> = order.iter().map(|&i| s[i].max(0.0)).collect();
    let u = match q {
        Some(q) => q * ur,
        None => ur,
    };
    Some(Thin { u, s, v })
}

/// Moore–Penrose pseudoinverse; singular values at or below
/// `rel_cutoff · σ_max` are treated as zero.
pub fn pinv(a: &DMatrix<f64>, rel_cutoff: f64) -> Option<DMatrix<f64>> {
    let t = thin_svd(a)?;
    let smax = t.s.first().copied().unwrap_or(0.0);
    let (m, n) = a.shape();
    let mut out = DMatrix::zeros(n, m);
    for (k, &sk) in t.s.iter().enumerate() {
        if sk <= rel_cutoff * smax || sk == 0.0 {
            continue;
        }
        let vk = t.v.column(k);
        let uk = t.u.column(k);
        out += (vk * uk.transpose()) / sk;
    }
    Some(out)
}

/// Outcome of [`lstsq`].
pub struct LeastSquares {
    /// Solution, `x.ncols() × y.ncols()`.
    pub coef: DMatrix<f64>,
    /// Numerical rank of the design matrix.
    pub rank: usize,
}

/// Least squares `min ‖X·C − Y‖_F` with optional ridge weight `alpha`
/// (`min ‖X·C − Y‖² + alpha‖C‖²`), solved by Householder QR of the stacked
/// system. Rank-deficient designs fall back to the minimum-norm solution.
pub fn lstsq(x: &DMatrix<f64>, y: &DMatrix<f64>, alpha: f64) -> Option<LeastSquares> {
    let (m, n) = x.shape();
    debug_assert_eq!(y.nrows(), m);
    if n == 0 {
        return Some(LeastSquares {
            coef: DMatrix::zeros(0, y.ncols()),
            rank: 0,
        });
    }
    let (a, b) = if alpha > 0.0 {
        let mut a = DMatrix::zeros(m + n, n);
        a.view_mut((0, 0), (m, n)).copy_from(x);
        let w = alpha.sqrt();
        for i in 0..n {
            a[(m + i, i)] = w;
        }
        let mut b = DMatrix::zeros(m + n, y.ncols());
        b.view_mut((0, 0), (m, y.ncols())).copy_from(y);
        (a, b)
    } else {
        (x.clone(), y.clone())
    };
    if a.nrows() < n {
        return min_norm(&a, &b);
    }
    let rows = a.nrows();
    let qr = a.clone().qr();
    let r = qr.r();
    let rmax = (0..n).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let tol = rmax * (n.max(rows) as f64) * f64::EPSILON;
    if rmax == 0.0 || (0..n).any(|i| r[(i, i)].abs() <= tol) {
        return min_norm(&a, &b);
    }
    let mut qtb = b;
    qr.q_tr_mul(&mut qtb);
    let qtb = qtb.rows(0, n).into_owned();
    let coef = r.solve_upper_triangular(&qtb)?;
    Some(LeastSquares { coef, rank: n })
}

fn min_norm(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<LeastSquares> {
    let t = thin_svd(a)?;
    let smax = t.s.first().copied().unwrap_or(0.0);
    let tol = smax * (a.nrows().max(a.ncols()) as f64) * f64::EPSILON;
    let mut coef = DMatrix::zeros(a.ncols(), b.ncols());
    let mut rank = 0;
    for (k, &sk) in t.s.iter().enumerate() {
        if sk <= tol || sk == 0.0 {
            continue;
        }
        rank += 1;
        let proj = t.u.column(k).transpose() * b;
        coef += t.v.column(k) * proj / sk;
    }
    Some(LeastSquares { coef, rank })
}

/// Numerical rank via singular values relative to the largest.
pub fn numerical_rank(a: &DMatrix<f64>, rel_tol: f64) -> Option<usize> {
    let t = thin_svd(a)?;
    let smax = t.s.first().copied().unwrap_or(0.0);
    Some(t.s.iter().filter(|&&s| s > rel_tol * smax && s > 0.0).count())
}

pub fn frobenius(a: &DMatrix<f64>) -> f64 {
    a.norm()
}

pub fn column_vec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Mean and population standard deviation in one pass (Welford).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (k, &v) in values.iter().enumerate() {
        let d = v - mean;
        mean += d / (k + 1) as f64;
        m2 += d * (v - mean);
    }
    if values.is_empty() {
        return (0.0, 0.0);
    }
    (mean, (m2 / values.len() as f64).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn thin_svd_reconstructs() {
        let a = DMatrix::from_fn(7, 3, |i, j| ((i * 3 + j) as f64).sin() + j as f64);
        let t = thin_svd(&a).unwrap();
        let rec = &t.u * DMatrix::from_diagonal(&DVector::from_vec(t.s.clone())) * t.v.transpose();
        assert_relative_eq!(rec, a, epsilon = 1e-12);
        assert!(t.s.windows(2).all(|w| w[0] >= w[1]));
        let wide = a.transpose();
        let t = thin_svd(&wide).unwrap();
        let rec = &t.u * DMatrix::from_diagonal(&DVector::from_vec(t.s.clone())) * t.v.transpose();
        assert_relative_eq!(rec, wide, epsilon = 1e-12);
    }

    #[test]
    fn lstsq_exact_and_ridge() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = DMatrix::from_row_slice(4, 1, &[1.0, 3.0, 5.0, 7.0]);
        let s = lstsq(&x, &y, 0.0).unwrap();
        assert_relative_eq!(s.coef[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(s.coef[(1, 0)], 2.0, epsilon = 1e-12);
        let ridge = lstsq(&x, &y, 1.0).unwrap();
        let normal = (x.transpose() * &x + DMatrix::identity(2, 2)).try_inverse().unwrap() * x.transpose() * &y;
        assert_relative_eq!(ridge.coef, normal, epsilon = 1e-12);
    }

    #[test]
    fn lstsq_rank_deficient_is_min_norm() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 0.0, 3.0, 0.0]);
        let y = DMatrix::from_row_slice(3, 1, &[2.0, 4.0, 6.0]);
        let s = lstsq(&x, &y, 0.0).unwrap();
        assert_eq!(s.rank, 1);
        assert_relative_eq!(s.coef[(0, 0)], 2.0, epsilon = 1e-12);
        assert_eq!(s.coef[(1, 0)], 0.0);
    }

    #[test]
    fn pinv_of_invertible_is_inverse() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let p = pinv(&a, 1e-12).unwrap();
        assert_relative_eq!(&p * &a, DMatrix::identity(2, 2), epsilon = 1e-12);
    }

    #[test]
    fn welford_matches_two_pass() {
        let v = [1.0, 1.0, 1.0, 7.0];
        let (m, s) = mean_std(&v);
        assert_eq!(m, 2.5);
        let two_pass = (v.iter().map(|x| (x - 2.5) * (x - 2.5)).sum::<f64>() / 4.0).sqrt();
        assert_relative_eq!(s, two_pass, epsilon = 1e-15);
    }
}
