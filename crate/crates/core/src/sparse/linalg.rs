//! Dense complex helpers for the per-frequency systems of the ADMM solvers.
//! Matrices are row-major `n × n` slices.

use rustfft::num_complex::Complex64;

/// Inverts a small Hermitian positive definite matrix in place by
/// Gauss-Jordan elimination with partial pivoting. Returns `false` when the
/// matrix is numerically singular.
pub(crate) fn invert_in_place(a: &mut [Complex64], n: usize, work: &mut Vec<Complex64>) -> bool {
    debug_assert_eq!(a.len(), n * n);
    work.clear();
    work.resize(n * n, Complex64::new(0.0, 0.0));
    for i in 0..n {
        work[i * n + i] = Complex64::new(1.0, 0.0);
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x * n + col].norm().total_cmp(&a[y * n + col].norm()))
            .expect("non-empty range");
        if a[pivot * n + col].norm() < 1e-300 {
            return false;
        }
        if pivot != col {
            for j in 0..n {
                a.swap(pivot * n + j, col * n + j);
                work.swap(pivot * n + j, col * n + j);
            }
        }
        let inv = a[col * n + col].inv();
        for j in 0..n {
            a[col * n + j] *= inv;
            work[col * n + j] *= inv;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = a[row * n + col];
            if f == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..n {
                let (ac, wc) = (a[col * n + j], work[col * n + j]);
                a[row * n + j] -= f * ac;
                work[row * n + j] -= f * wc;
            }
        }
    }
    a.copy_from_slice(work);
    true
}

/// Lower Cholesky factor `L` (with `A = L Lᴴ`) of a Hermitian positive
/// definite matrix, written over `a`.
pub(crate) fn cholesky_in_place(a: &mut [Complex64], n: usize) -> bool {
    for j in 0..n {
        let mut diag = a[j * n + j].re;
        for k in 0..j {
            diag -= a[j * n + k].norm_sqr();
        }
        if !(diag > 0.0) {
            return false;
        }
        let ljj = diag.sqrt();
        a[j * n + j] = Complex64::new(ljj, 0.0);
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k].conj();
            }
            a[i * n + j] = s / ljj;
        }
        for k in j + 1..n {
            a[j * n + k] = Complex64::new(0.0, 0.0);
        }
    }
    true
}

/// Solves `L Lᴴ x = b` in place given the factor from [`cholesky_in_place`].
pub(crate) fn cholesky_solve(l: &[Complex64], n: usize, b: &mut [Complex64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i].re;
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i].conj() * b[k];
        }
        b[i] = s / l[i * n + i].re;
    }
}
