use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Forward and inverse 2-D transforms for a fixed `height × width` grid.
///
/// Buffers are row-major. The inverse is normalized so that
/// `inverse(forward(x)) == x` up to rounding.
#[derive(Clone)]
pub struct FrequencyPlan {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for FrequencyPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FrequencyPlan")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish()
    }
}

impl FrequencyPlan {
    pub fn new(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "empty frequency grid");
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&self, real: &[f64]) -> Vec<Complex64> {
        assert_eq!(real.len(), self.len());
        let mut buf: Vec<Complex64> = real.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward_in_place(&mut buf);
        buf
    }

    /// Inverse transform keeping only the real part.
    pub fn inverse_real(&self, spectrum: &[Complex64]) -> Vec<f64> {
        let mut buf = spectrum.to_vec();
        self.inverse_in_place(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// Like [`inverse_real`](Self::inverse_real) but reuses scratch and output storage.
    pub fn inverse_real_into(
        &self,
        spectrum: &[Complex64],
        scratch: &mut Vec<Complex64>,
        out: &mut [f64],
    ) {
        scratch.clear();
        scratch.extend_from_slice(spectrum);
        self.inverse_in_place(scratch);
        for (o, c) in out.iter_mut().zip(scratch.iter()) {
            *o = c.re;
        }
    }

    pub fn forward_into(&self, real: &[f64], out: &mut [Complex64]) {
        assert_eq!(real.len(), self.len());
        for (o, &v) in out.iter_mut().zip(real) {
            *o = Complex64::new(v, 0.0);
        }
        self.forward_in_place(out);
    }

    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        self.transform(buf, &self.row_fwd, &self.col_fwd);
    }

    pub fn inverse_in_place(&self, buf: &mut [Complex64]) {
        self.transform(buf, &self.row_inv, &self.col_inv);
        let scale = 1.0 / self.len() as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    fn transform(&self, buf: &mut [Complex64], rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        assert_eq!(buf.len(), self.len());
        let (h, w) = (self.height, self.width);
        rows.process(buf);
        if h > 1 {
            let mut t = vec![Complex64::new(0.0, 0.0); h * w];
            for i in 0..h {
                for j in 0..w {
                    t[j * h + i] = buf[i * w + j];
                }
            }
            cols.process(&mut t);
            for i in 0..h {
                for j in 0..w {
                    buf[i * w + j] = t[j * h + i];
                }
            }
        }
    }

    /// Spectrum of `kernel` zero-padded to the plan's grid with its
    /// `(0, 0)` tap at the origin.
    pub fn kernel_spectrum(&self, kernel: &[f64], kh: usize, kw: usize) -> Vec<Complex64> {
        assert!(kh <= self.height && kw <= self.width);
        let mut padded = vec![0.0; self.len()];
        for i in 0..kh {
            for j in 0..kw {
                padded[i * self.width + j] = kernel[i * kw + j];
            }
        }
        self.forward(&padded)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_relative_rms() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &(h, w) in &[(1, 5), (8, 8), (16, 12), (7, 9)] {
            let plan = FrequencyPlan::new(h, w);
            let x: Vec<f64> = (0..h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let back = plan.inverse_real(&plan.forward(&x));
            let err: f64 = x
                .iter()
                .zip(&back)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let norm: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(err / norm < 1e-12, "{h}x{w}: {}", err / norm);
        }
    }

    #[test]
    fn matches_direct_dft() {
        let (h, w) = (4, 6);
        let plan = FrequencyPlan::new(h, w);
        let x: Vec<f64> = (0..h * w).map(|v| ((v * 7) % 5) as f64 - 2.0).collect();
        let spec = plan.forward(&x);
        for u in 0..h {
            for v in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..h {
                    for j in 0..w {
                        let ang = -2.0
                            * std::f64::consts::PI
                            * ((u * i) as f64 / h as f64 + (v * j) as f64 / w as f64);
                        acc += Complex64::from_polar(x[i * w + j], ang);
                    }
                }
                assert!((acc - spec[u * w + v]).norm() < 1e-10);
            }
        }
    }
}
