//! Frequency-domain utilities: 2-D FFT plans, circular convolution and the
//! Tikhonov low/high frequency split.
//!
//! All boundary handling is circular, which keeps every quadratic solve
//! diagonal in the Fourier domain.

mod fft;
mod tikhonov;

pub use fft::FrequencyPlan;
pub use tikhonov::{
    gradient_gain, tikhonov_decompose, tikhonov_split, FrequencySplit, TikhonovConfig,
};

use ndarray::Array2;

use crate::error::{shape_mismatch, Result};

fn check_kernel(a: &Array2<f64>, kernel: &Array2<f64>) -> Result<()> {
    let (h, w) = a.dim();
    let (kh, kw) = kernel.dim();
    if kh > h || kw > w || kh == 0 || kw == 0 {
        return Err(shape_mismatch(
            format!("non-empty kernel no larger than {h}x{w}"),
            format!("{kh}x{kw}"),
        ));
    }
    Ok(())
}

/// Circular convolution `(a * k)[i, j] = Σ_{p,q} k[p, q] a[i-p, j-q]`
/// (indices modulo the shape of `a`), evaluated through the FFT.
pub fn circular_convolve(a: &Array2<f64>, kernel: &Array2<f64>) -> Result<Array2<f64>> {
    check_kernel(a, kernel)?;
    let (h, w) = a.dim();
    let (kh, kw) = kernel.dim();
    let plan = FrequencyPlan::new(h, w);
    let a_std = a.as_standard_layout();
    let k_std = kernel.as_standard_layout();
    let mut spec = plan.forward(a_std.as_slice().expect("standard layout"));
    let kspec = plan.kernel_spectrum(k_std.as_slice().expect("standard layout"), kh, kw);
    for (s, k) in spec.iter_mut().zip(&kspec) {
        *s *= k;
    }
    Ok(Array2::from_shape_vec((h, w), plan.inverse_real(&spec)).expect("plan shape"))
}

/// Circular cross-correlation `Σ_{p,q} k[p, q] a[i+p, j+q]`, the adjoint of
/// [`circular_convolve`] in its first argument.
pub fn circular_correlate(a: &Array2<f64>, kernel: &Array2<f64>) -> Result<Array2<f64>> {
    check_kernel(a, kernel)?;
    let (h, w) = a.dim();
    let (kh, kw) = kernel.dim();
    let plan = FrequencyPlan::new(h, w);
    let a_std = a.as_standard_layout();
    let k_std = kernel.as_standard_layout();
    let mut spec = plan.forward(a_std.as_slice().expect("standard layout"));
    let kspec = plan.kernel_spectrum(k_std.as_slice().expect("standard layout"), kh, kw);
    for (s, k) in spec.iter_mut().zip(&kspec) {
        *s *= k.conj();
    }
    Ok(Array2::from_shape_vec((h, w), plan.inverse_real(&spec)).expect("plan shape"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Array2<f64> {
        Array2::from_shape_fn((h, w), |_| rng.gen_range(-1.0..1.0))
    }

    /// Direct double-loop spatial sum.
    fn direct_convolve(a: &Array2<f64>, k: &Array2<f64>) -> Array2<f64> {
        let (h, w) = a.dim();
        let (kh, kw) = k.dim();
        Array2::from_shape_fn((h, w), |(i, j)| {
            let mut acc = 0.0;
            for p in 0..kh {
                for q in 0..kw {
                    acc += k[[p, q]] * a[[(i + h - p) % h, (j + w - q) % w]];
                }
            }
            acc
        })
    }

    #[test]
    fn delta_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random(&mut rng, 6, 5);
        let out = circular_convolve(&a, &array![[1.0]]).unwrap();
        for (x, y) in a.iter().zip(out.iter()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn shifted_delta_shifts_one_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(&mut rng, 4, 6);
        let out = circular_convolve(&a, &array![[0.0, 1.0]]).unwrap();
        for i in 0..4 {
            for j in 0..6 {
                assert!((out[[i, j]] - a[[i, (j + 5) % 6]]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn matches_direct_sum_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let a = random(&mut rng, 8, 8);
            let k = random(&mut rng, 3, 3);
            let fast = circular_convolve(&a, &k).unwrap();
            let slow = direct_convolve(&a, &k);
            for (x, y) in fast.iter().zip(slow.iter()) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn correlation_is_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random(&mut rng, 7, 9);
        let b = random(&mut rng, 7, 9);
        let k = random(&mut rng, 3, 2);
        let lhs: f64 = (circular_convolve(&a, &k).unwrap() * &b).sum();
        let rhs: f64 = (circular_correlate(&b, &k).unwrap() * &a).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn oversized_kernel_rejected() {
        let a = Array2::zeros((4, 4));
        assert!(circular_convolve(&a, &Array2::zeros((5, 1))).is_err());
    }
}
