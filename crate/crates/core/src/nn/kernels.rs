//! Per-layer numeric kernels. Convolutions are lowered to GEMM through an
//! im2col buffer built a few output rows at a time.

use alloc::vec;
use alloc::vec::Vec;

use super::{Real, Shape};

/// Upper bound on im2col buffer elements per chunk.
const COL_CHUNK: usize = 1 << 18;

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub in_c: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub height: usize,
    pub width: usize,
}

impl ConvGeom {
    pub fn new(input: Shape, filters: usize, kernel: usize) -> Self {
        Self { in_c: input.channels, out_c: filters, kernel, height: input.height, width: input.width }
    }

    fn patch(&self) -> usize {
        self.in_c * self.kernel * self.kernel
    }

    fn plane(&self) -> usize {
        self.height * self.width
    }

    fn rows_per_chunk(&self) -> usize {
        (COL_CHUNK / (self.patch() * self.width).max(1)).clamp(1, self.height)
    }

    pub fn scratch_len(&self) -> usize {
        self.patch() * self.rows_per_chunk() * self.width
    }
}

/// Fills `col` (`patch x rows*width`) for output rows `y0..y0+rows`.
fn im2col<S: Real>(g: &ConvGeom, input: &[S], y0: usize, rows: usize, col: &mut [S]) {
    let (h, w, k) = (g.height as isize, g.width, g.kernel);
    let pad = (k / 2) as isize;
    let p = rows * w;
    for ci in 0..g.in_c {
        let plane = &input[ci * g.plane()..(ci + 1) * g.plane()];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut col[row * p..(row + 1) * p];
                let shift = kx as isize - pad;
                for r in 0..rows {
                    let sy = (y0 + r) as isize + ky as isize - pad;
                    let d = &mut dst[r * w..(r + 1) * w];
                    if sy < 0 || sy >= h {
                        d.fill(S::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    copy_shifted(src, d, shift);
                }
            }
        }
    }
}

/// `dst[x] = src[x + shift]`, zero outside the source row.
#[inline]
fn copy_shifted<S: Real>(src: &[S], dst: &mut [S], shift: isize) {
    let w = src.len() as isize;
    let lo = (-shift).clamp(0, w) as usize;
    let hi = (w - shift).clamp(0, w) as usize;
    dst[..lo].fill(S::zero());
    if hi > lo {
        let s0 = (lo as isize + shift) as usize;
        dst[lo..hi].copy_from_slice(&src[s0..s0 + (hi - lo)]);
    }
    dst[hi.max(lo)..].fill(S::zero());
}

/// Adds `dcol` back into the input gradient (inverse of [`im2col`]).
fn col2im<S: Real>(g: &ConvGeom, dcol: &[S], y0: usize, rows: usize, dinput: &mut [S]) {
    let (h, w, k) = (g.height as isize, g.width as isize, g.kernel);
    let pad = (k / 2) as isize;
    let p = rows * g.width;
    for ci in 0..g.in_c {
        let plane = &mut dinput[ci * g.plane()..(ci + 1) * g.plane()];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &dcol[row * p..(row + 1) * p];
                let shift = kx as isize - pad;
                let lo = (-shift).clamp(0, w) as usize;
                let hi = (w - shift).clamp(0, w) as usize;
                if hi <= lo {
                    continue;
                }
                for r in 0..rows {
                    let sy = (y0 + r) as isize + ky as isize - pad;
                    if sy < 0 || sy >= h {
                        continue;
                    }
                    let s = &src[r * g.width..(r + 1) * g.width];
                    let base = sy as usize * g.width;
                    let s0 = (lo as isize + shift) as usize;
                    let d = &mut plane[base + s0..base + s0 + (hi - lo)];
                    for (dv, sv) in d.iter_mut().zip(&s[lo..hi]) {
                        *dv = *dv + *sv;
                    }
                }
            }
        }
    }
}

/// One sample: `output (out_c x h x w) = conv(input) + bias`.
pub(crate) fn conv_forward<S: Real>(
    g: &ConvGeom,
    weights: &[S],
    bias: &[S],
    input: &[S],
    output: &mut [S],
    scratch: &mut Vec<S>,
) {
    let patch = g.patch();
    let plane = g.plane();
    let chunk = g.rows_per_chunk();
    scratch.resize(g.scratch_len(), S::zero());
    let mut y0 = 0;
    while y0 < g.height {
        let rows = chunk.min(g.height - y0);
        let p = rows * g.width;
        im2col(g, input, y0, rows, &mut scratch[..patch * p]);
        S::gemm(
            g.out_c,
            patch,
            p,
            S::one(),
            weights,
            (patch, 1),
            &scratch[..patch * p],
            (p, 1),
            S::zero(),
            &mut output[y0 * g.width..],
            (plane, 1),
        );
        y0 += rows;
    }
    for (co, &b) in bias.iter().enumerate() {
        output[co * plane..(co + 1) * plane].iter_mut().for_each(|v| *v = *v + b);
    }
}

/// One sample of the convolution backward pass. Accumulates into `dweights`
/// and `dbias` when given; writes `dinput` (zeroed here) when given.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward<S: Real>(
    g: &ConvGeom,
    weights: &[S],
    input: &[S],
    doutput: &[S],
    mut dweights: Option<(&mut [S], &mut [S])>,
    mut dinput: Option<&mut [S]>,
    scratch: &mut Vec<S>,
    dcol: &mut Vec<S>,
) {
    let patch = g.patch();
    let plane = g.plane();
    let chunk = g.rows_per_chunk();
    scratch.resize(g.scratch_len(), S::zero());
    if let Some(d) = dinput.as_deref_mut() {
        d.fill(S::zero());
        dcol.resize(g.scratch_len(), S::zero());
    }
    if let Some((_, db)) = dweights.as_mut() {
        for (co, b) in db.iter_mut().enumerate() {
            let s = doutput[co * plane..(co + 1) * plane].iter().fold(S::zero(), |a, &v| a + v);
            *b = *b + s;
        }
    }
    let mut y0 = 0;
    while y0 < g.height {
        let rows = chunk.min(g.height - y0);
        let p = rows * g.width;
        let dout = &doutput[y0 * g.width..];
        if let Some((dw, _)) = dweights.as_mut() {
            im2col(g, input, y0, rows, &mut scratch[..patch * p]);
            // dW (out_c x patch) += dOut (out_c x p) . col^T (p x patch)
            S::gemm(
                g.out_c,
                p,
                patch,
                S::one(),
                dout,
                (plane, 1),
                &scratch[..patch * p],
                (1, p),
                S::one(),
                dw,
                (patch, 1),
            );
        }
        if let Some(din) = dinput.as_deref_mut() {
            // dcol (patch x p) = W^T (patch x out_c) . dOut (out_c x p)
            S::gemm(
                patch,
                g.out_c,
                p,
                S::one(),
                weights,
                (1, patch),
                dout,
                (plane, 1),
                S::zero(),
                &mut dcol[..patch * p],
                (p, 1),
            );
            col2im(g, &dcol[..patch * p], y0, rows, din);
        }
        y0 += rows;
    }
}

/// 2x2 max pooling with stride 2 for one sample; records flat argmax
/// indices into `argmax`.
pub(crate) fn maxpool_forward<S: Real>(input: Shape, x: &[S], out: &mut [S], argmax: &mut [u32]) {
    let (oh, ow) = (input.height / 2, input.width / 2);
    let plane = input.height * input.width;
    for c in 0..input.channels {
        for y in 0..oh {
            for xo in 0..ow {
                let base = c * plane + 2 * y * input.width + 2 * xo;
                let cands = [base, base + 1, base + input.width, base + input.width + 1];
                let mut best = cands[0];
                for &i in &cands[1..] {
                    if x[i] > x[best] {
                        best = i;
                    }
                }
                let o = c * oh * ow + y * ow + xo;
                out[o] = x[best];
                argmax[o] = best as u32;
            }
        }
    }
}

/// Dense forward for a whole batch: `out (n x units) = x (n x in) W^T + b`.
pub(crate) fn dense_forward<S: Real>(
    n: usize,
    inputs: usize,
    units: usize,
    weights: &[S],
    bias: &[S],
    x: &[S],
    out: &mut [S],
) {
    for row in out.chunks_mut(units).take(n) {
        row.copy_from_slice(bias);
    }
    S::gemm(n, inputs, units, S::one(), x, (inputs, 1), weights, (1, inputs), S::one(), out, (units, 1));
}

/// Dense backward for a whole batch.
#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_backward<S: Real>(
    n: usize,
    inputs: usize,
    units: usize,
    weights: &[S],
    x: &[S],
    dout: &[S],
    dweights: Option<(&mut [S], &mut [S])>,
    dinput: Option<&mut [S]>,
) {
    if let Some((dw, db)) = dweights {
        S::gemm(units, n, inputs, S::one(), dout, (1, units), x, (inputs, 1), S::one(), dw, (inputs, 1));
        for row in dout.chunks(units).take(n) {
            for (b, &g) in db.iter_mut().zip(row) {
                *b = *b + g;
            }
        }
    }
    if let Some(dx) = dinput {
        S::gemm(n, units, inputs, S::one(), dout, (units, 1), weights, (inputs, 1), S::zero(), dx, (inputs, 1));
    }
}

/// Numerically stable softmax of one row.
pub(crate) fn softmax_row<S: Real>(x: &[S], out: &mut [S]) {
    let max = x.iter().fold(S::neg_infinity(), |m, &v| m.max(v));
    let mut sum = S::zero();
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - max).exp();
        sum = sum + *o;
    }
    out.iter_mut().for_each(|o| *o = *o / sum);
}

pub(crate) fn zeros<S: Real>(n: usize) -> Vec<S> {
    vec![S::zero(); n]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(g: &ConvGeom, w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
        let (h, wd, k) = (g.height as isize, g.width as isize, g.kernel as isize);
        let pad = k / 2;
        let mut out = vec![0.0; g.out_c * g.plane()];
        for co in 0..g.out_c {
            for y in 0..h {
                for xx in 0..wd {
                    let mut s = b[co];
                    for ci in 0..g.in_c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let sy = y + ky - pad;
                                let sx = xx + kx - pad;
                                if sy < 0 || sy >= h || sx < 0 || sx >= wd {
                                    continue;
                                }
                                let wi = ((co * g.in_c + ci) * g.kernel + ky as usize) * g.kernel + kx as usize;
                                s += w[wi] * x[ci * g.plane() + (sy * wd + sx) as usize];
                            }
                        }
                    }
                    out[co * g.plane() + (y * wd + xx) as usize] = s;
                }
            }
        }
        out
    }

    #[test]
    fn im2col_conv_matches_naive_loop() {
        let g = ConvGeom { in_c: 3, out_c: 4, kernel: 5, height: 7, width: 9 };
        let w: Vec<f64> = (0..4 * 3 * 25).map(|i| ((i * 37 % 101) as f64 - 50.0) / 50.0).collect();
        let b = vec![0.1, -0.2, 0.3, 0.0];
        let x: Vec<f64> = (0..3 * 63).map(|i| ((i * 13 % 17) as f64 - 8.0) / 8.0).collect();
        let mut out = vec![0.0; 4 * 63];
        let mut scratch = Vec::new();
        conv_forward(&g, &w, &b, &x, &mut out, &mut scratch);
        let expect = naive_conv(&g, &w, &b, &x);
        for (a, e) in out.iter().zip(&expect) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn shifted_copy_edges() {
        let src = [1.0, 2.0, 3.0, 4.0];
        let mut dst = [9.0; 4];
        copy_shifted(&src, &mut dst, 2);
        assert_eq!(dst, [3.0, 4.0, 0.0, 0.0]);
        copy_shifted(&src, &mut dst, -1);
        assert_eq!(dst, [0.0, 1.0, 2.0, 3.0]);
        copy_shifted(&src, &mut dst, 5);
        assert_eq!(dst, [0.0; 4]);
    }
}
