//! Linear convolution via FFT with cached plans and cached kernel transforms.
//!
//! The polymer dynamic programs convolve a field against the same single-step
//! kernel thousands of times, and the walk pmf is built by convolution
//! doubling; both go through [`FixedKernel`]. One-shot convolutions use
//! [`convolve`].

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

pub fn next_pow2(n: usize) -> usize {
    n.next_power_of_two()
}

/// Full linear convolution, result length a.len() + b.len() - 1.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let out_len = a.len() + b.len() - 1;
    // Direct product is faster below the FFT crossover and exact.
    if a.len().min(b.len()) <= 32 {
        let mut out = vec![0.0; out_len];
        for (i, &x) in a.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (j, &y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        return out;
    }
    let size = next_pow2(out_len);
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut fa = to_complex(a, size);
    let mut fb = to_complex(b, size);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / size as f64;
    fa[..out_len].iter().map(|c| c.re * scale).collect()
}

fn to_complex(a: &[f64], size: usize) -> Vec<Complex64> {
    let mut v = vec![Complex64::default(); size];
    for (c, &x) in v.iter_mut().zip(a) {
        c.re = x;
    }
    v
}

/// A kernel whose transform is computed once and convolved against many
/// signals of length up to `max_signal_len`.
pub struct FixedKernel {
    size: usize,
    kernel_len: usize,
    kernel_hat: Vec<Complex64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl FixedKernel {
    pub fn new(kernel: &[f64], max_signal_len: usize) -> Self {
        let size = next_pow2(kernel.len() + max_signal_len - 1);
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(size);
        let inv = planner.plan_fft_inverse(size);
        let mut kernel_hat = to_complex(kernel, size);
        fwd.process(&mut kernel_hat);
        FixedKernel { size, kernel_len: kernel.len(), kernel_hat, fwd, inv }
    }

    /// Full linear convolution kernel * signal, length signal + kernel - 1.
    pub fn apply(&self, signal: &[f64]) -> Vec<f64> {
        assert!(
            signal.len() + self.kernel_len - 1 <= self.size,
            "signal length {} exceeds the planned budget",
            signal.len()
        );
        let mut fs = to_complex(signal, self.size);
        self.fwd.process(&mut fs);
        for (x, k) in fs.iter_mut().zip(&self.kernel_hat) {
            *x *= k;
        }
        self.inv.process(&mut fs);
        let scale = 1.0 / self.size as f64;
        let out_len = signal.len() + self.kernel_len - 1;
        fs[..out_len].iter().map(|c| c.re * scale).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn direct(a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for (i, &x) in a.iter().enumerate() {
            for (j, &y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        out
    }

    #[test]
    fn fft_conv_matches_direct() {
        let a: Vec<f64> = (0..200).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let b: Vec<f64> = (0..150).map(|i| ((i * 17) % 7) as f64 * 0.25).collect();
        let got = convolve(&a, &b);
        let want = direct(&a, &b);
        for (g, w) in got.iter().zip(&want) {
            assert_relative_eq!(g, w, epsilon = 1e-9);
        }
    }

    #[test]
    fn fixed_kernel_matches_one_shot() {
        let kernel: Vec<f64> = (0..65).map(|i| (-((i as f64 - 32.0) / 8.0).powi(2)).exp()).collect();
        let fixed = FixedKernel::new(&kernel, 256);
        let signal: Vec<f64> = (0..256).map(|i| (i as f64 * 0.1).sin()).collect();
        let got = fixed.apply(&signal);
        let want = convolve(&kernel, &signal);
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            assert_relative_eq!(g, w, epsilon = 1e-9);
        }
    }
}
