//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Complex, DMatrix, DVector};

/// Relative rank threshold used by the null-space and range helpers.
pub const RANK_RTOL: f64 = 1e-9;

/// Dense decompositions (SVD, general eigenvalues) come from faer: nalgebra
/// 0.35's SVD returned factors off by 1e-2 on some rank-deficient matrices and
/// its Schur iteration can cycle without converging.
fn to_faer(m: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn svd_values(s: faer::diag::DiagRef<'_, f64>) -> Vec<f64> {
    s.column_vector().iter().copied().collect()
}

/// Full singular value decomposition `m = U S Vᵀ` returning the singular values
/// (descending, length `min(rows, cols)`) and the complete `cols × cols` matrix `V`.
pub fn full_right_svd(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let (rows, cols) = m.shape();
    if cols == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    if rows == 0 {
        return (Vec::new(), DMatrix::identity(cols, cols));
    }
    let svd = to_faer(m).svd().expect("svd converges");
    (svd_values(svd.S()), from_faer(svd.V()))
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    to_faer(m).singular_values().expect("svd converges")
}

/// Eigenvalues of a square matrix, in no particular order.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex<f64>> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    to_faer(a).eigenvalues().expect("eigenvalue iteration converges")
}

/// Smallest and largest singular value of a complex matrix with `rows ≥ cols`,
/// together with the right singular vector of the smallest.
pub fn complex_min_singular(m: &DMatrix<Complex<f64>>) -> (f64, f64, DVector<Complex<f64>>) {
    let cols = m.ncols();
    let svd = faer::Mat::<faer::c64>::from_fn(m.nrows(), cols, |i, j| m[(i, j)])
        .svd()
        .expect("svd converges");
    let values: Vec<f64> = svd.S().column_vector().iter().map(|z| z.re).collect();
    let v = svd.V();
    let last = cols - 1;
    (values[last], values[0], DVector::from_fn(cols, |i, _| v[(i, last)]))
}

/// Numerical rank using singular values above `rtol * σ_max`.
pub fn rank_of(values: &[f64], rtol: f64) -> usize {
    let smax = values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    values.iter().filter(|&&s| s > rtol * smax).count()
}

/// Orthonormal basis of the null space of `m` (columns).
pub fn null_space(m: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    let cols = m.ncols();
    let (values, v) = full_right_svd(m);
    let r = rank_of(&values, rtol);
    v.columns(r, cols - r).into_owned()
}

/// Orthonormal bases of the row space and of the null space of `m`.
pub fn row_and_null_space(m: &DMatrix<f64>, rtol: f64) -> (DMatrix<f64>, DMatrix<f64>, Vec<f64>) {
    let cols = m.ncols();
    let (values, v) = full_right_svd(m);
    let r = rank_of(&values, rtol);
    (
        v.columns(0, r).into_owned(),
        v.columns(r, cols - r).into_owned(),
        values,
    )
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    singular_values(m).first().copied().unwrap_or(0.0)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn sym_eig_range(m: &DMatrix<f64>) -> (f64, f64) {
    if m.is_empty() {
        return (f64::INFINITY, f64::NEG_INFINITY);
    }
    let eig = symmetrize(m).symmetric_eigen();
    let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Largest eigenvalue of a symmetric matrix with a unit eigenvector.
pub fn sym_max_eig(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let eig = symmetrize(m).symmetric_eigen();
    let mut best = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    (eig.eigenvalues[best], eig.eigenvectors.column(best).into_owned())
}

/// Minimum-norm least-squares solution of `m x = b` via the SVD pseudo-inverse.
pub fn lstsq(m: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if m.ncols() == 0 {
        return DVector::zeros(0);
    }
    if m.nrows() == 0 {
        return DVector::zeros(m.ncols());
    }
    let svd = to_faer(m).thin_svd().expect("svd converges");
    let values = svd_values(svd.S());
    let (u, v) = (from_faer(svd.U()), from_faer(svd.V()));
    let cutoff = (RANK_RTOL * values[0]).max(f64::MIN_POSITIVE);
    let mut coeffs = u.transpose() * b;
    for (c, s) in coeffs.iter_mut().zip(&values) {
        *c = if *s > cutoff { *c / s } else { 0.0 };
    }
    v * coeffs
}

/// Block-diagonal stacking of two square matrices.
pub fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = (a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(n + m, n + m);
    out.view_mut((0, 0), (n, n)).copy_from(a);
    out.view_mut((n, n), (m, m)).copy_from(b);
    out
}

pub fn concat(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.len() + b.len());
    out.rows_mut(0, a.len()).copy_from(a);
    out.rows_mut(a.len(), b.len()).copy_from(b);
    out
}

/// Non-negative least squares `min ‖g μ − r‖` subject to `μ ≥ 0` (Lawson–Hanson).
pub fn nnls(g: &DMatrix<f64>, r: &DVector<f64>) -> DVector<f64> {
    let k = g.ncols();
    let mut mu = DVector::zeros(k);
    let mut passive = vec![false; k];
    let tol = 1e-12 * (1.0 + g.norm() * r.norm());
    for _outer in 0..(3 * k + 10) {
        let w = g.transpose() * (r - g * &mu);
        let candidate = (0..k)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&a, &b| w[a].partial_cmp(&w[b]).unwrap());
        let Some(j) = candidate else { break };
        passive[j] = true;
        loop {
            let idx: Vec<usize> = (0..k).filter(|&i| passive[i]).collect();
            let sub = g.select_columns(idx.iter());
            let z_sub = lstsq(&sub, r);
            if z_sub.iter().all(|&v| v > 0.0) {
                mu.fill(0.0);
                for (p, &i) in idx.iter().enumerate() {
                    mu[i] = z_sub[p];
                }
                break;
            }
            let mut alpha = 1.0f64;
            for (p, &i) in idx.iter().enumerate() {
                if z_sub[p] <= 0.0 {
                    let denom = mu[i] - z_sub[p];
                    if denom > 0.0 {
                        alpha = alpha.min(mu[i] / denom);
                    }
                }
            }
            for (p, &i) in idx.iter().enumerate() {
                mu[i] += alpha * (z_sub[p] - mu[i]);
                if mu[i] <= 1e-15 {
                    mu[i] = 0.0;
                    passive[i] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    mu
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn right_basis_of_rank_deficient_wide_matrix() {
        let b = DMatrix::from_row_slice(
            3,
            4,
            &[
                -0.137580608346556, 0.35840866679066125, 0.12087542038123242, 1.175960029769258,
                -1.8474825334144624, -0.13246726965267486, 1.663778626700498, -0.9105542699834193,
                0.4588073886385974, -0.8409465421298541, -0.406008487207711, -2.7251001340969987,
            ],
        );
        let (values, v) = full_right_svd(&b);
        let gram = (&b * b.transpose()).symmetric_eigen().eigenvalues;
        let mut expected: Vec<f64> = gram.iter().map(|l| l.max(0.0).sqrt()).collect();
        expected.sort_by(|x, y| y.partial_cmp(x).unwrap());
        for (got, want) in values.iter().zip(&expected).take(2) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        assert!((v.transpose() * &v - DMatrix::identity(4, 4)).amax() < 1e-12);
        assert!((&b * v.columns(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn eigenvalues_of_double_real_root() {
        // similar to diag(0.105, −1, 1, 1); a 2×2 Schur block holds the double root
        let a = DMatrix::from_column_slice(
            4,
            4,
            &[
                1.3550355405832324, -0.48854267413746144, -0.6713380925373045, -1.5238997243560368,
                1.7195026640834694, -0.3252009262824219, -0.9419931979668126, -4.666717185124877,
                -1.643335495429427, 0.3447994342908973, -0.14468608968948, 2.056967504360849,
                0.6328567669905959, -0.1281174751532565, 0.45117786324207254, 0.22001789648283343,
            ],
        );
        let eig = eigenvalues(&a);
        assert!(eig.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
        let near_one = eig.iter().filter(|z| (*z - Complex::new(1.0, 0.0)).norm() < 1e-6).count();
        assert_eq!(near_one, 2);
    }

    #[test]
    fn eigenvalues_of_planted_spectrum() {
        let a = DMatrix::from_column_slice(
            4,
            4,
            &[
                0.8940730940125485, -0.3202810953651209, -0.12859880469751878, -0.38215066710121703,
                0.19750357009191177, 1.5971727313082589, 0.23977593606218683, 0.7125302146976468,
                -0.04936165396824985, -0.14925013106545443, 0.9400733020658462, -0.17808118548672472,
                -0.23929354421527577, -0.7235290952815137, -0.290510361565387, 0.13670481826670644,
            ],
        );
        let eig = eigenvalues(&a);
        let sum: Complex<f64> = eig.iter().sum();
        let product: Complex<f64> = eig.iter().product();
        assert!((sum.re - a.trace()).abs() < 1e-9 && sum.im.abs() < 1e-9);
        assert!((product.re - a.determinant()).abs() < 1e-9);
        for z in &eig {
            assert!(z.im.abs() < 1e-6);
            let shifted = &a - DMatrix::identity(4, 4) * z.re;
            assert!(*singular_values(&shifted).last().unwrap() < 1e-7);
        }
    }

    #[test]
    fn eigenvalues_of_rotation_are_a_conjugate_pair() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -2.0, 2.0, 0.0]);
        let mut eig = eigenvalues(&a);
        eig.sort_by(|x, y| x.im.partial_cmp(&y.im).unwrap());
        assert!((eig[0] - Complex::new(0.0, -2.0)).norm() < 1e-12);
        assert!((eig[1] - Complex::new(0.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn null_space_of_wide_matrix() {
        // [-1 0] has kernel span{(0,1)}
        let m = DMatrix::from_row_slice(1, 2, &[-1.0, 0.0]);
        let ns = null_space(&m, RANK_RTOL);
        assert_eq!(ns.ncols(), 1);
        assert!((ns[(0, 0)]).abs() < 1e-14);
        assert!((ns[(1, 0)].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn nnls_clamps_negative_direction() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let r = DVector::from_vec(vec![2.0, -3.0]);
        let mu = nnls(&g, &r);
        assert!((mu[0] - 2.0).abs() < 1e-12);
        assert_eq!(mu[1], 0.0);
    }

    #[test]
    fn nnls_matches_unconstrained_when_positive() {
        let g = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.0, 1.0, 1.0, 0.0]);
        let truth = DVector::from_vec(vec![0.5, 1.5]);
        let r = &g * &truth;
        let mu = nnls(&g, &r);
        assert!((mu - truth).norm() < 1e-10);
    }
}
