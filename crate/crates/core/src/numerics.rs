//! Dense complex kernels.
//!
//! Thin contracts over nalgebra: inversion with a conditioning guard,
//! Hermitian and general eigenvalues, smallest singular value. All
//! tolerances are relative to the Frobenius norm of the input with an
//! absolute floor of `1e-14`.

use nalgebra::{DMatrix, Schur, SymmetricEigen};
use num_complex::Complex;
use thiserror::Error;

use crate::scalar::{is_finite, Real};

/// Dense complex matrix, column-major storage.
pub type CMat<T> = DMatrix<Complex<T>>;

/// Largest dimension accepted by [`general_eig_dense`].
pub const MAX_DENSE_DIM: usize = 4096;

const ABS_FLOOR: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("expected {expected} entries for a {rows}x{cols} matrix, got {got}")]
    Shape {
        rows: usize,
        cols: usize,
        expected: usize,
        got: usize,
    },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is numerically singular (condition estimate {condition:e})")]
    SingularMatrix { condition: f64 },
    #[error("matrix is not Hermitian (|M - M*| = {defect:e}, |M| = {norm:e})")]
    NotHermitian { defect: f64, norm: f64 },
    #[error("dimension {dim} exceeds dense limit {max}")]
    DimensionTooLarge { dim: usize, max: usize },
    #[error("dense eigensolver did not converge")]
    NoConvergence,
}

/// Builds a matrix from row-major entries, rejecting NaN and infinities.
pub fn cmatrix<T: Real>(
    rows: usize,
    cols: usize,
    entries: &[Complex<T>],
) -> Result<CMat<T>, NumericsError> {
    if entries.len() != rows * cols {
        return Err(NumericsError::Shape {
            rows,
            cols,
            expected: rows * cols,
            got: entries.len(),
        });
    }
    if !entries.iter().all(is_finite) {
        return Err(NumericsError::NonFinite);
    }
    Ok(DMatrix::from_row_slice(rows, cols, entries))
}

/// Real diagonal matrix.
pub fn diag<T: Real>(values: &[T]) -> CMat<T> {
    let n = values.len();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            Complex::new(values[i], T::zero())
        } else {
            Complex::new(T::zero(), T::zero())
        }
    })
}

pub fn frobenius<T: Real>(m: &CMat<T>) -> T {
    m.norm()
}

fn rel_tol<T: Real>(rel: f64, scale: T) -> T {
    let t = T::tol(rel) * scale;
    let floor = T::lit(ABS_FLOOR);
    if t > floor {
        t
    } else {
        floor
    }
}

fn ensure_square<T: Real>(m: &CMat<T>) -> Result<usize, NumericsError> {
    if m.nrows() != m.ncols() {
        return Err(NumericsError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

/// Inverse of a well-conditioned square matrix.
///
/// The guard uses `|M|_F |M^-1|_F`, an upper bound on the 2-norm condition
/// number, so a matrix whose smallest singular value is below `1e-12 |M|` is
/// always rejected.
pub fn inv<T: Real>(m: &CMat<T>) -> Result<CMat<T>, NumericsError> {
    let n = ensure_square(m)?;
    if n == 0 {
        return Ok(m.clone());
    }
    let norm = frobenius(m);
    let singular = |condition: f64| NumericsError::SingularMatrix { condition };
    if norm == T::zero() {
        return Err(singular(f64::INFINITY));
    }
    let x = m.clone().lu().try_inverse().ok_or(singular(f64::INFINITY))?;
    let cond = norm * frobenius(&x);
    if !is_finite(&Complex::new(cond, T::zero())) || cond > T::lit(1e12) {
        return Err(singular(cond.to_f64_lossy()));
    }
    Ok(x)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEig<T: Real> {
    pub eigenvalues: Vec<T>,
    /// Orthonormal eigenvectors, one per column, in the order of `eigenvalues`.
    pub eigenvectors: CMat<T>,
}

fn check_hermitian<T: Real>(m: &CMat<T>) -> Result<(), NumericsError> {
    ensure_square(m)?;
    let norm = frobenius(m);
    let defect = (m - m.adjoint()).norm();
    if defect > rel_tol(1e-10, norm) {
        return Err(NumericsError::NotHermitian {
            defect: defect.to_f64_lossy(),
            norm: norm.to_f64_lossy(),
        });
    }
    Ok(())
}

fn real_part_if_real<T: Real>(m: &CMat<T>) -> Option<DMatrix<T>> {
    if m.iter().all(|z| z.im == T::zero()) {
        Some(m.map(|z| z.re))
    } else {
        None
    }
}

fn hermitian_part<T: Real>(m: &CMat<T>) -> CMat<T> {
    (m + m.adjoint()) * Complex::new(T::lit(0.5), T::zero())
}

/// Full Hermitian eigendecomposition. Real symmetric input takes the (much
/// faster) real path.
pub fn hermitian_eig<T: Real>(m: &CMat<T>) -> Result<HermitianEig<T>, NumericsError> {
    check_hermitian(m)?;
    let n = m.nrows();
    let (values, vectors): (Vec<T>, CMat<T>) = match real_part_if_real(m) {
        Some(re) => {
            let sym = (&re + re.transpose()) * T::lit(0.5);
            let eig = SymmetricEigen::try_new(sym, T::default_epsilon(), 0)
                .ok_or(NumericsError::NoConvergence)?;
            (
                eig.eigenvalues.iter().copied().collect(),
                eig.eigenvectors.map(|x| Complex::new(x, T::zero())),
            )
        }
        None => {
            let eig = SymmetricEigen::try_new(hermitian_part(m), T::default_epsilon(), 0)
                .ok_or(NumericsError::NoConvergence)?;
            (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
        }
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite eigenvalues"));
    let eigenvalues = order.iter().map(|&k| values[k]).collect();
    let eigenvectors = DMatrix::from_fn(n, n, |i, j| vectors[(i, order[j])]);
    Ok(HermitianEig {
        eigenvalues,
        eigenvectors,
    })
}

/// Ascending eigenvalues of a Hermitian matrix, without eigenvectors.
pub fn hermitian_eigenvalues<T: Real>(m: &CMat<T>) -> Result<Vec<T>, NumericsError> {
    check_hermitian(m)?;
    let mut values: Vec<T> = match real_part_if_real(m) {
        Some(re) => {
            let sym = (&re + re.transpose()) * T::lit(0.5);
            sym.symmetric_eigenvalues().iter().copied().collect()
        }
        None => hermitian_part(m)
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect(),
    };
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    Ok(values)
}

/// Triangular Schur factor of `m`, or of a unitary similarity `Q* m Q`.
///
/// Monomial inputs (weighted permutations) can stall the shifted QR
/// iteration; a deterministic pseudo-random `Q` keeps the eigenvalues but
/// gives the iteration a generic starting vector.
fn schur_form<T: Real>(m: &CMat<T>) -> Option<CMat<T>> {
    const ATTEMPTS: u64 = 4;
    let n = m.nrows();
    let budget = 100 * n.max(10);
    for attempt in 0..ATTEMPTS {
        let a = if attempt == 0 {
            m.clone()
        } else {
            let g = DMatrix::from_fn(n, n, |i, j| {
                let h = crate::rng::split_seed(attempt, (i * n + j) as u64);
                let u = |x: u64| T::lit((x >> 11) as f64 / (1u64 << 53) as f64 - 0.5);
                Complex::new(u(h), u(crate::rng::split_seed(h, 1)))
            });
            let q = g.qr().q();
            q.adjoint() * m * &q
        };
        if let Some(schur) = Schur::try_new(a, T::default_epsilon(), budget) {
            return Some(schur.unpack().1);
        }
    }
    None
}

/// All eigenvalues of a general square matrix (complex Schur form).
pub fn general_eig_dense<T: Real>(m: &CMat<T>) -> Result<Vec<Complex<T>>, NumericsError> {
    let n = ensure_square(m)?;
    if n > MAX_DENSE_DIM {
        return Err(NumericsError::DimensionTooLarge {
            dim: n,
            max: MAX_DENSE_DIM,
        });
    }
    match n {
        0 => return Ok(Vec::new()),
        1 => return Ok(vec![m[(0, 0)]]),
        _ => {}
    }
    let t = schur_form(m).ok_or(NumericsError::NoConvergence)?;
    // complex Schur form is triangular, but nalgebra may leave a 2x2 block
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    while k < n {
        if k + 1 < n && nalgebra::ComplexField::modulus(t[(k + 1, k)]) > T::default_epsilon() * frobenius(&t) {
            let (a, b, c, d) = (t[(k, k)], t[(k, k + 1)], t[(k + 1, k)], t[(k + 1, k + 1)]);
            let half = Complex::new(T::lit(0.5), T::zero());
            let mean = (a + d) * half;
            let disc = nalgebra::ComplexField::sqrt(((a - d) * half) * ((a - d) * half) + b * c);
            out.push(mean + disc);
            out.push(mean - disc);
            k += 2;
        } else {
            out.push(t[(k, k)]);
            k += 1;
        }
    }
    Ok(out)
}

/// Smallest singular value; zero for empty input.
pub fn min_singular_value<T: Real>(m: &CMat<T>) -> T {
    if m.nrows() == 0 || m.ncols() == 0 {
        return T::zero();
    }
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(T::max_value().unwrap_or(T::one()), |a, b| if b < a { b } else { a })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type C = Complex<f64>;

    fn random_matrix(n: usize, seed: u64) -> CMat<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, n, |_, _| {
            C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn random_hermitian(n: usize, seed: u64) -> CMat<f64> {
        let m = random_matrix(n, seed);
        (&m + m.adjoint()) * C::new(0.5, 0.0)
    }

    #[test]
    fn inverse_of_identity_and_diagonal() {
        let id = CMat::<f64>::identity(3, 3);
        assert_eq!(inv(&id).unwrap(), id);
        let x = inv(&diag(&[2.0, 4.0])).unwrap();
        assert!((x - diag(&[0.5, 0.25])).norm() < 1e-15);
    }

    #[test]
    fn inverse_residual_random() {
        let m = random_matrix(4, 7);
        let x = inv(&m).unwrap();
        let resid = (&m * &x - CMat::<f64>::identity(4, 4)).norm();
        assert!(resid < 1e-9, "{resid}");
        let back = inv(&x).unwrap();
        assert!((back - &m).norm() <= 1e-8 * m.norm());
    }

    #[test]
    fn singular_inverse_rejected() {
        let m = cmatrix(2, 2, &[C::new(1.0, 0.0), C::new(2.0, 0.0), C::new(2.0, 0.0), C::new(4.0, 0.0)])
            .unwrap();
        assert!(matches!(inv(&m), Err(NumericsError::SingularMatrix { .. })));
        let z = CMat::<f64>::zeros(2, 2);
        assert!(matches!(inv(&z), Err(NumericsError::SingularMatrix { .. })));
    }

    #[test]
    fn constructor_rejects_nan() {
        let e = cmatrix(1, 1, &[C::new(f64::NAN, 0.0)]);
        assert_eq!(e, Err(NumericsError::NonFinite));
        let e = cmatrix::<f64>(1, 2, &[C::new(1.0, 0.0)]);
        assert!(matches!(e, Err(NumericsError::Shape { .. })));
    }

    #[test]
    fn hermitian_small_cases() {
        let e = hermitian_eig(&diag(&[1.0, -1.0])).unwrap();
        assert_eq!(e.eigenvalues, vec![-1.0, 1.0]);
        let swap = cmatrix(2, 2, &[C::new(0.0, 0.0), C::new(1.0, 0.0), C::new(1.0, 0.0), C::new(0.0, 0.0)])
            .unwrap();
        let e = hermitian_eig(&swap).unwrap();
        assert!((e.eigenvalues[0] + 1.0).abs() < 1e-14 && (e.eigenvalues[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn hermitian_trace_and_residuals() {
        let m = random_hermitian(8, 3);
        let e = hermitian_eig(&m).unwrap();
        let trace: f64 = (0..8).map(|i| m[(i, i)].re).sum();
        let sum: f64 = e.eigenvalues.iter().sum();
        assert!((trace - sum).abs() < 1e-9);
        for k in 0..8 {
            let v = e.eigenvectors.column(k);
            let r = (&m * v - v * C::new(e.eigenvalues[k], 0.0)).norm();
            assert!(r <= 1e-8 * m.norm(), "residual {r}");
        }
        assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        let only = hermitian_eigenvalues(&m).unwrap();
        for (a, b) in only.iter().zip(&e.eigenvalues) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn non_hermitian_rejected() {
        let m = random_matrix(3, 1);
        assert!(matches!(hermitian_eig(&m), Err(NumericsError::NotHermitian { .. })));
    }

    #[test]
    fn unitary_conjugation_invariance() {
        let m = random_hermitian(6, 11);
        let q = random_matrix(6, 12).qr().q();
        let conj = &q * &m * q.adjoint();
        let a = hermitian_eigenvalues(&m).unwrap();
        let b = hermitian_eigenvalues(&conj).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn general_eig_small_cases() {
        let nil = cmatrix(2, 2, &[C::new(0.0, 0.0), C::new(1.0, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0)])
            .unwrap();
        let ev = general_eig_dense(&nil).unwrap();
        assert!(ev.iter().all(|z| z.norm() < 1e-12));

        let mut cyc = CMat::<f64>::zeros(3, 3);
        for i in 0..3 {
            cyc[(i, (i + 1) % 3)] = C::new(1.0, 0.0);
        }
        let mut ev = general_eig_dense(&cyc).unwrap();
        for z in &ev {
            assert!((z.powu(3) - C::new(1.0, 0.0)).norm() < 1e-10);
        }
        ev.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        assert!((ev[0].im + 3f64.sqrt() / 2.0).abs() < 1e-10);
        assert!((ev[1] - C::new(1.0, 0.0)).norm() < 1e-10);

        // companion matrix of x^2 - x - 1
        let comp = cmatrix(2, 2, &[C::new(1.0, 0.0), C::new(1.0, 0.0), C::new(1.0, 0.0), C::new(0.0, 0.0)])
            .unwrap();
        let mut ev: Vec<f64> = general_eig_dense(&comp).unwrap().iter().map(|z| z.re).collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((ev[1] - phi).abs() < 1e-12 && (ev[0] - (1.0 - phi)).abs() < 1e-12);
    }

    #[test]
    fn general_eig_trace_and_hermitian_agreement() {
        let m = random_matrix(20, 5);
        let ev = general_eig_dense(&m).unwrap();
        let tr: C = (0..20).map(|i| m[(i, i)]).sum();
        let s: C = ev.iter().sum();
        assert!((tr - s).norm() <= 1e-6 * 20.0 * m.norm());

        let h = random_hermitian(10, 9);
        let mut g: Vec<f64> = general_eig_dense(&h).unwrap().iter().map(|z| z.re).collect();
        g.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in g.iter().zip(hermitian_eigenvalues(&h).unwrap()) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn general_eig_cyclic_permutation() {
        let n = 8;
        let m = DMatrix::from_fn(n, n, |i, j| C::new(((i + 1) % n == j) as u8 as f64, 0.0));
        let ev = general_eig_dense(&m).unwrap();
        assert_eq!(ev.len(), n);
        for z in &ev {
            assert!((z.norm() - 1.0).abs() < 1e-10);
            assert!((z.powi(n as i32) - C::new(1.0, 0.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn general_eig_dimension_cap() {
        let m = CMat::<f64>::zeros(MAX_DENSE_DIM + 1, MAX_DENSE_DIM + 1);
        assert!(matches!(general_eig_dense(&m), Err(NumericsError::DimensionTooLarge { .. })));
    }

    #[test]
    fn min_singular_value_cases() {
        assert!((min_singular_value(&CMat::<f64>::identity(2, 2)) - 1.0).abs() < 1e-15);
        assert!(min_singular_value(&diag(&[1.0f64, 0.0])).abs() < 1e-15);
        let m = random_matrix(5, 21);
        let gram = m.adjoint() * &m;
        let lo = hermitian_eigenvalues(&gram).unwrap()[0].max(0.0).sqrt();
        let s = min_singular_value(&m);
        assert!((s - lo).abs() <= 1e-9 * lo.max(1e-3), "{s} vs {lo}");
    }

    #[test]
    fn single_precision_kernels() {
        let m = diag(&[3.0f32, -2.0]);
        let e = hermitian_eig(&m).unwrap();
        assert_eq!(e.eigenvalues, vec![-2.0f32, 3.0]);
        let x = inv(&m).unwrap();
        assert!((x[(0, 0)].re - 1.0 / 3.0).abs() < 1e-6);
    }
}
