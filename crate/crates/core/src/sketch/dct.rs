//! Orthonormal DCT-II of arbitrary length, evaluated through a single
//! complex FFT of the same length (even/odd reordering plus a quarter-wave
//! twiddle). Lengths are used as-is; nothing is padded.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct Dct2 {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    /// exp(-i pi k / (2n)) premultiplied with the orthonormal weights.
    twiddle: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Clone for Dct2 {
    fn clone(&self) -> Self {
        Dct2 {
            n: self.n,
            fft: self.fft.clone(),
            twiddle: self.twiddle.clone(),
            scratch: vec![Complex64::default(); self.scratch.len()],
        }
    }
}

impl std::fmt::Debug for Dct2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dct2").field("n", &self.n).finish()
    }
}

impl Dct2 {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "transform length must be positive");
        let fft = FftPlanner::new().plan_fft_forward(n);
        let w0 = (1.0 / n as f64).sqrt();
        let wk = (2.0 / n as f64).sqrt();
        let twiddle = (0..n)
            .map(|k| {
                let w = if k == 0 { w0 } else { wk };
                w * Complex64::from_polar(1.0, -PI * k as f64 / (2.0 * n as f64))
            })
            .collect();
        let scratch_len = fft.get_inplace_scratch_len();
        Dct2 {
            n,
            fft,
            twiddle,
            scratch: vec![Complex64::default(); scratch_len],
        }
    }


    /// Orthonormal DCT-II of `x` into `out` (both length n).
    pub fn transform(&mut self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(out.len(), n);
        // Even entries ascend from the front, odd entries descend from the
        // back: v = [x0, x2, x4, ..., x5, x3, x1].
        let mut buf: Vec<Complex64> = vec![Complex64::default(); n];
        for t in 0..n.div_ceil(2) {
            buf[t] = Complex64::new(x[2 * t], 0.0);
        }
        for t in 0..n / 2 {
            buf[n - 1 - t] = Complex64::new(x[2 * t + 1], 0.0);
        }
        self.fft.process_with_scratch(&mut buf, &mut self.scratch);
        for (k, o) in out.iter_mut().enumerate() {
            *o = (self.twiddle[k] * buf[k]).re;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{naive_dct2, seeded_vector};

    #[test]
    fn matches_naive_transform_for_arbitrary_lengths() {
        for &n in &[1usize, 2, 3, 4, 5, 7, 8, 11, 13, 16, 17, 24, 60, 101, 128] {
            let x = seeded_vector(n, n as u64);
            let mut dct = Dct2::new(n);
            let mut got = vec![0.0; n];
            dct.transform(&x, &mut got);
            let want = naive_dct2(&x);
            let scale = want.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12 * scale, "n={n}: {g} vs {w}");
            }
        }
    }

    #[test]
    fn orthonormal_transform_preserves_norm() {
        let n = 250;
        let x = seeded_vector(n, 77);
        let mut dct = Dct2::new(n);
        let mut y = vec![0.0; n];
        dct.transform(&x, &mut y);
        let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ny: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((nx - ny).abs() < 1e-12 * nx);
    }
}
