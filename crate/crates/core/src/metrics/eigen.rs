//! Cyclic Jacobi eigensolver for real symmetric matrices, extended to
//! complex Hermitian matrices through the real embedding
//! `A + iB ↦ [[A, -B], [B, A]]`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Ascending eigenvalues with orthonormal eigenvectors stored as columns.
///
/// Each eigenvector is normalized so that its largest-magnitude component
/// is real and positive, which makes the output reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition<T = f64> {
    pub values: Vec<f64>,
    pub vectors: DMatrix<T>,
}

fn symmetry_defect(m: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for r in 0..m.nrows() {
        for c in (r + 1)..m.ncols() {
            worst = worst.max((m[(r, c)] - m[(c, r)]).abs());
        }
    }
    worst
}

fn hermitian_defect(m: &DMatrix<Complex64>) -> f64 {
    let mut worst: f64 = 0.0;
    for r in 0..m.nrows() {
        for c in r..m.ncols() {
            worst = worst.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    worst
}

fn tolerance_for(scale: f64) -> f64 {
    1e-12 * scale.max(1.0)
}

/// Eigen-decomposition of a real symmetric matrix.
pub fn sym_eig(matrix: &DMatrix<f64>) -> Result<EigenDecomposition> {
    if matrix.nrows() != matrix.ncols() {
        return Err(Error::Consistency(format!(
            "matrix is {}x{}, not square",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    let scale = matrix.amax();
    let asym = symmetry_defect(matrix);
    if asym > tolerance_for(scale) {
        return Err(Error::NotHermitian { asymmetry: asym });
    }
    let (values, mut vectors) = jacobi(matrix);
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let sorted_values: Vec<f64> = order.iter().map(|&k| values[k]).collect();
    vectors = DMatrix::from_fn(vectors.nrows(), vectors.ncols(), |r, c| vectors[(r, order[c])]);
    for c in 0..vectors.ncols() {
        let lead = (0..vectors.nrows()).fold(0, |best, r| {
            if vectors[(r, c)].abs() > vectors[(best, c)].abs() {
                r
            } else {
                best
            }
        });
        if vectors[(lead, c)] < 0.0 {
            vectors.column_mut(c).neg_mut();
        }
    }
    Ok(EigenDecomposition {
        values: sorted_values,
        vectors,
    })
}

/// Unsorted Jacobi diagonalization. Returns the diagonal and the
/// accumulated rotations.
fn jacobi(matrix: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = matrix.nrows();
    // column-major working copies: element (r, c) lives at c*n + r
    let mut a = matrix.as_slice().to_vec();
    // symmetrize so round-off asymmetry cannot leak in
    for r in 0..n {
        for c in (r + 1)..n {
            let avg = 0.5 * (a[c * n + r] + a[r * n + c]);
            a[c * n + r] = avg;
            a[r * n + c] = avg;
        }
    }
    let mut v = vec![0.0; n * n];
    for k in 0..n {
        v[k * n + k] = 1.0;
    }
    let total: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if total == 0.0 {
        return (vec![0.0; n], DMatrix::from_vec(n, n, v));
    }
    for sweep in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for c in 1..n {
            for r in 0..c {
                off += a[c * n + r] * a[c * n + r];
            }
        }
        let off = off.sqrt();
        if off <= f64::EPSILON * 1e-2 * total {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[q * n + p];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                // an element negligible against both diagonals is dropped
                let g = 100.0 * apq.abs();
                if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a[q * n + p] = 0.0;
                    a[p * n + q] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate_columns(&mut a, n, p, q, c, s);
                for k in 0..n {
                    let (ip, iq) = (k * n + p, k * n + q);
                    let (apk, aqk) = (a[ip], a[iq]);
                    a[ip] = c * apk - s * aqk;
                    a[iq] = s * apk + c * aqk;
                }
                a[q * n + p] = 0.0;
                a[p * n + q] = 0.0;
                rotate_columns(&mut v, n, p, q, c, s);
            }
        }
    }
    ((0..n).map(|k| a[k * n + k]).collect(), DMatrix::from_vec(n, n, v))
}

fn rotate_columns(m: &mut [f64], n: usize, p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = m.split_at_mut(q * n);
    let col_p = &mut left[p * n..(p + 1) * n];
    let col_q = &mut right[..n];
    for (xp, xq) in col_p.iter_mut().zip(col_q.iter_mut()) {
        let (a, b) = (*xp, *xq);
        *xp = c * a - s * b;
        *xq = s * a + c * b;
    }
}

fn is_real(m: &DMatrix<Complex64>) -> bool {
    m.iter().all(|z| z.im == 0.0)
}

fn embed(m: &DMatrix<Complex64>) -> DMatrix<f64> {
    let n = m.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |r, c| {
        let z = m[(r % n, c % n)];
        match (r < n, c < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

fn check_hermitian(m: &DMatrix<Complex64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Consistency("matrix is not square".into()));
    }
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let defect = hermitian_defect(m);
    if defect > tolerance_for(scale) {
        return Err(Error::NotHermitian { asymmetry: defect });
    }
    Ok(())
}

/// Ascending eigenvalues of a Hermitian matrix.
pub fn herm_eigenvalues(m: &DMatrix<Complex64>) -> Result<Vec<f64>> {
    check_hermitian(m)?;
    if is_real(m) {
        let re = m.map(|z| z.re);
        let (mut vals, _) = jacobi(&re);
        vals.sort_by(f64::total_cmp);
        return Ok(vals);
    }
    let (mut vals, _) = jacobi(&embed(m));
    vals.sort_by(f64::total_cmp);
    // every eigenvalue of the embedding appears twice
    Ok(vals.chunks(2).map(|pair| 0.5 * (pair[0] + pair[1])).collect())
}

/// Eigen-decomposition of a Hermitian matrix.
pub fn herm_eig(m: &DMatrix<Complex64>) -> Result<EigenDecomposition<Complex64>> {
    check_hermitian(m)?;
    let n = m.nrows();
    if is_real(m) {
        let real = sym_eig(&m.map(|z| z.re))?;
        return Ok(EigenDecomposition {
            values: real.values,
            vectors: real.vectors.map(|x| Complex64::new(x, 0.0)),
        });
    }
    let doubled = sym_eig(&embed(m))?;
    let scale = doubled.values.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let cluster_tol = 1e-9 * scale;

    let candidate = |c: usize| {
        nalgebra::DVector::from_fn(n, |r, _| {
            Complex64::new(doubled.vectors[(r, c)], doubled.vectors[(r + n, c)])
        })
    };
    let mut values = Vec::with_capacity(n);
    let mut accepted: Vec<nalgebra::DVector<Complex64>> = Vec::with_capacity(n);
    let mut start = 0;
    while start < 2 * n {
        let mut end = start + 1;
        while end < 2 * n && doubled.values[end] - doubled.values[end - 1] <= cluster_tol {
            end += 1;
        }
        let want = (end - start) / 2;
        let mean = doubled.values[start..end].iter().sum::<f64>() / (end - start) as f64;
        let mut pool: Vec<_> = (start..end).map(candidate).collect();
        for _ in 0..want {
            // project out what we already have and keep the strongest survivor
            for vec in pool.iter_mut() {
                for prev in &accepted {
                    let overlap = prev.dotc(vec);
                    *vec -= prev * overlap;
                }
            }
            let best = (0..pool.len())
                .max_by(|&a, &b| pool[a].norm().total_cmp(&pool[b].norm()))
                .expect("cluster has members");
            let chosen = pool.swap_remove(best);
            accepted.push(chosen.unscale(chosen.norm()));
            values.push(mean);
        }
        start = end;
    }
    let mut vectors = DMatrix::from_columns(&accepted);
    for c in 0..n {
        let lead = (0..n).fold(0, |best, r| {
            if vectors[(r, c)].norm() > vectors[(best, c)].norm() {
                r
            } else {
                best
            }
        });
        let z = vectors[(lead, c)];
        let phase = z.conj() / z.norm();
        for r in 0..n {
            vectors[(r, c)] *= phase;
        }
    }
    Ok(EigenDecomposition { values, vectors })
}

/// Applies `f` to the spectrum of a Hermitian matrix.
pub fn herm_function(m: &DMatrix<Complex64>, f: impl Fn(f64) -> f64) -> Result<DMatrix<Complex64>> {
    let eig = herm_eig(m)?;
    let n = m.nrows();
    let mut out = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for (k, &lambda) in eig.values.iter().enumerate() {
        let w = f(lambda);
        if w == 0.0 {
            continue;
        }
        let col = eig.vectors.column(k);
        for r in 0..n {
            for c in 0..n {
                out[(r, c)] += col[r] * col[c].conj() * w;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let mut m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        m = &m + m.transpose();
        m
    }

    fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
        let m = DMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        &m + m.adjoint()
    }

    #[test]
    fn identity_and_pauli() {
        let eye = sym_eig(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(eye.values, vec![1.0, 1.0, 1.0]);
        let x = sym_eig(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        assert_abs_diff_eq!(x.values[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x.values[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.0]);
        assert!(matches!(sym_eig(&m), Err(Error::NotHermitian { .. })));
        let z = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 1.0),
                Complex64::new(0.0, 1.0),
                Complex64::new(0.0, 0.0),
            ],
        );
        assert!(herm_eig(&z).is_err());
        assert!(sym_eig(&DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn reconstruction_of_random_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &n in &[1, 2, 4, 10, 30] {
            let m = random_symmetric(n, &mut rng);
            let eig = sym_eig(&m).unwrap();
            let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(eig.values.clone()));
            let rebuilt = &eig.vectors * lambda * eig.vectors.transpose();
            assert!((rebuilt - &m).amax() < 1e-10 * m.amax().max(1.0));
            let gram = eig.vectors.transpose() * &eig.vectors;
            assert!((gram - DMatrix::identity(n, n)).amax() < 1e-10);
            assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn agrees_with_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_symmetric(12, &mut rng);
        let ours = sym_eig(&m).unwrap().values;
        let mut theirs: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        theirs.sort_by(f64::total_cmp);
        for (a, b) in ours.iter().zip(&theirs) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn sign_convention_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_symmetric(6, &mut rng);
        let a = sym_eig(&m).unwrap();
        let b = sym_eig(&m).unwrap();
        assert_eq!(a, b);
        for c in 0..6 {
            let col = a.vectors.column(c);
            let lead = col
                .iter()
                .fold(0.0f64, |best, &x| if x.abs() > best.abs() { x } else { best });
            assert!(lead > 0.0);
        }
    }

    #[test]
    fn hermitian_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &n in &[1, 2, 3, 4, 8] {
            let m = random_hermitian(n, &mut rng);
            let eig = herm_eig(&m).unwrap();
            let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                n,
                eig.values.iter().map(|&v| Complex64::new(v, 0.0)),
            ));
            let rebuilt = &eig.vectors * lambda * eig.vectors.adjoint();
            assert!((rebuilt - &m).iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-10);
            let gram = eig.vectors.adjoint() * &eig.vectors;
            let err = (gram - DMatrix::<Complex64>::identity(n, n))
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-10);
            let vals = herm_eigenvalues(&m).unwrap();
            for (a, b) in vals.iter().zip(&eig.values) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn degenerate_hermitian() {
        // σ_y ⊕ σ_y has doubly degenerate ±1
        let i = Complex64::new(0.0, 1.0);
        let o = Complex64::new(0.0, 0.0);
        let m = DMatrix::from_row_slice(4, 4, &[o, -i, o, o, i, o, o, o, o, o, o, -i, o, o, i, o]);
        let eig = herm_eig(&m).unwrap();
        for (a, b) in eig.values.iter().zip([-1.0, -1.0, 1.0, 1.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        let gram = eig.vectors.adjoint() * &eig.vectors;
        let err = (gram - DMatrix::<Complex64>::identity(4, 4))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn matrix_square_root() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_hermitian(4, &mut rng);
        let psd = &a * a.adjoint();
        let root = herm_function(&psd, |x| x.max(0.0).sqrt()).unwrap();
        let err = (&root * &root - &psd).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }
}
