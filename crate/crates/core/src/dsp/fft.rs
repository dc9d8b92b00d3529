//! Iterative radix-2 FFT with a direct-DFT fallback for other lengths.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::math;

/// Precomputed twiddles and bit-reversal table for one transform length.
#[derive(Clone, Debug)]
pub struct FftPlan {
    len: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
    bitrev: Vec<usize>,
}

impl FftPlan {
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "fft length must be positive");
        let half = len / 2;
        let cos = (0..half.max(1)).map(|k| math::cos(-2.0 * PI * k as f64 / len as f64)).collect();
        let sin = (0..half.max(1)).map(|k| math::sin(-2.0 * PI * k as f64 / len as f64)).collect();
        let bitrev = if len.is_power_of_two() {
            let bits = len.trailing_zeros();
            (0..len).map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) }).collect()
        } else {
            Vec::new()
        };
        Self { len, cos, sin, bitrev }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Power spectrum `|X_k|^2` for `k = 0..=len/2` of a real frame.
    pub fn power_spectrum(&self, frame: &[f64], out: &mut [f64]) {
        debug_assert_eq!(frame.len(), self.len);
        debug_assert_eq!(out.len(), self.len / 2 + 1);
        if !self.len.is_power_of_two() {
            return self.direct_power(frame, out);
        }
        let mut re = vec![0.0; self.len];
        let mut im = vec![0.0; self.len];
        for (i, &x) in frame.iter().enumerate() {
            re[self.bitrev[i]] = x;
        }
        let mut size = 2;
        while size <= self.len {
            let half = size / 2;
            let stride = self.len / size;
            for start in (0..self.len).step_by(size) {
                for k in 0..half {
                    let wr = self.cos[k * stride];
                    let wi = self.sin[k * stride];
                    let a = start + k;
                    let b = a + half;
                    let tr = re[b] * wr - im[b] * wi;
                    let ti = re[b] * wi + im[b] * wr;
                    re[b] = re[a] - tr;
                    im[b] = im[a] - ti;
                    re[a] += tr;
                    im[a] += ti;
                }
            }
            size *= 2;
        }
        for (k, o) in out.iter_mut().enumerate() {
            *o = re[k] * re[k] + im[k] * im[k];
        }
    }

    fn direct_power(&self, frame: &[f64], out: &mut [f64]) {
        let n = self.len as f64;
        for (k, o) in out.iter_mut().enumerate() {
            let (mut sr, mut si) = (0.0, 0.0);
            for (t, &x) in frame.iter().enumerate() {
                let ang = -2.0 * PI * ((k * t) % self.len) as f64 / n;
                sr += x * math::cos(ang);
                si += x * math::sin(ang);
            }
            *o = sr * sr + si * si;
        }
    }
}
