//! Layer kernels on flat, channel-major buffers.
//!
//! Convolutions are lowered to a patch matrix (`im2col`) so both the forward
//! pass and the weight gradient run as long contiguous inner loops.

use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Element type of parameters and activations.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + Default
    + Debug
    + Send
    + Sync
    + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[inline]
fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    // Eight independent partial sums let the compiler vectorise the loop.
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut lanes = [T::zero(); 8];
    let (ac, bc) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail = ac
        .remainder()
        .iter()
        .zip(bc.remainder())
        .fold(T::zero(), |acc, (&x, &y)| acc + x * y);
    for (x, y) in ac.zip(bc) {
        for i in 0..8 {
            lanes[i] += x[i] * y[i];
        }
    }
    lanes.iter().fold(tail, |acc, &v| acc + v)
}

/// Square-kernel, stride-1 convolution geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub padding: usize,
    pub in_height: usize,
    pub in_width: usize,
}

impl Conv2d {
    pub fn out_height(&self) -> usize {
        self.in_height + 2 * self.padding + 1 - self.kernel
    }

    pub fn out_width(&self) -> usize {
        self.in_width + 2 * self.padding + 1 - self.kernel
    }

    pub fn out_len(&self) -> usize {
        self.out_channels * self.out_height() * self.out_width()
    }

    pub fn in_len(&self) -> usize {
        self.in_channels * self.in_height * self.in_width
    }

    /// Rows of the patch matrix (= weights per output channel).
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn weight_len(&self) -> usize {
        self.out_channels * self.patch_len()
    }

    pub fn fan_in(&self) -> usize {
        self.patch_len()
    }

    /// Fills `cols` (`patch_len × out_h·out_w`) with zero-padded input patches.
    pub fn im2col<T: Scalar>(&self, input: &[T], cols: &mut [T]) {
        let (oh, ow) = (self.out_height(), self.out_width());
        let (h, w, k, pad) = (
            self.in_height as isize,
            self.in_width as isize,
            self.kernel,
            self.padding as isize,
        );
        let plane = oh * ow;
        for ch in 0..self.in_channels {
            let src = &input[ch * self.in_height * self.in_width..];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ch * k + ky) * k + kx;
                    let dst = &mut cols[row * plane..(row + 1) * plane];
                    for y in 0..oh {
                        let sy = y as isize + ky as isize - pad;
                        let line = &mut dst[y * ow..(y + 1) * ow];
                        if sy < 0 || sy >= h {
                            line.fill(T::zero());
                            continue;
                        }
                        for (x, out) in line.iter_mut().enumerate() {
                            let sx = x as isize + kx as isize - pad;
                            *out = if sx < 0 || sx >= w {
                                T::zero()
                            } else {
                                src[(sy * w + sx) as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    /// Scatter-adds patch gradients back onto the (unpadded) input gradient.
    pub fn col2im<T: Scalar>(&self, dcols: &[T], dinput: &mut [T]) {
        let (oh, ow) = (self.out_height(), self.out_width());
        let (h, w, k, pad) = (
            self.in_height as isize,
            self.in_width as isize,
            self.kernel,
            self.padding as isize,
        );
        let plane = oh * ow;
        dinput.fill(T::zero());
        for ch in 0..self.in_channels {
            let base = ch * self.in_height * self.in_width;
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ch * k + ky) * k + kx;
                    let src = &dcols[row * plane..(row + 1) * plane];
                    for y in 0..oh {
                        let sy = y as isize + ky as isize - pad;
                        if sy < 0 || sy >= h {
                            continue;
                        }
                        for x in 0..ow {
                            let sx = x as isize + kx as isize - pad;
                            if sx >= 0 && sx < w {
                                dinput[base + (sy * w + sx) as usize] += src[y * ow + x];
                            }
                        }
                    }
                }
            }
        }
    }

    /// `out = weights · cols + bias`, given precomputed patches.
    pub fn forward<T: Scalar>(&self, cols: &[T], weights: &[T], bias: &[T], out: &mut [T]) {
        let plane = self.out_height() * self.out_width();
        let patch = self.patch_len();
        for o in 0..self.out_channels {
            let dst = &mut out[o * plane..(o + 1) * plane];
            dst.fill(bias[o]);
            for p in 0..patch {
                let wv = weights[o * patch + p];
                if wv != T::zero() {
                    axpy(wv, &cols[p * plane..(p + 1) * plane], dst);
                }
            }
        }
    }

    /// Accumulates weight and bias gradients; writes patch gradients into `dcols` when given.
    pub fn backward<T: Scalar>(
        &self,
        cols: &[T],
        weights: &[T],
        dout: &[T],
        dweights: &mut [T],
        dbias: &mut [T],
        dcols: Option<&mut [T]>,
    ) {
        let plane = self.out_height() * self.out_width();
        let patch = self.patch_len();
        for o in 0..self.out_channels {
            let g = &dout[o * plane..(o + 1) * plane];
            dbias[o] += g.iter().fold(T::zero(), |a, &v| a + v);
            for p in 0..patch {
                dweights[o * patch + p] += dot(g, &cols[p * plane..(p + 1) * plane]);
            }
        }
        if let Some(dcols) = dcols {
            dcols.fill(T::zero());
            for o in 0..self.out_channels {
                let g = &dout[o * plane..(o + 1) * plane];
                for p in 0..patch {
                    let wv = weights[o * patch + p];
                    axpy(wv, g, &mut dcols[p * plane..(p + 1) * plane]);
                }
            }
        }
    }
}

/// 2×2, stride-2 max pooling; `argmax` records the winning input offset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaxPool2 {
    pub channels: usize,
    pub in_height: usize,
    pub in_width: usize,
}

impl MaxPool2 {
    pub fn out_height(&self) -> usize {
        self.in_height / 2
    }

    pub fn out_width(&self) -> usize {
        self.in_width / 2
    }

    pub fn out_len(&self) -> usize {
        self.channels * self.out_height() * self.out_width()
    }

    /// Ties resolve to the first element in row-major window order.
    pub fn forward<T: Scalar>(&self, input: &[T], out: &mut [T], argmax: &mut [usize]) {
        let (oh, ow, w) = (self.out_height(), self.out_width(), self.in_width);
        let plane = self.in_height * w;
        for ch in 0..self.channels {
            for y in 0..oh {
                for x in 0..ow {
                    let top = ch * plane + 2 * y * w + 2 * x;
                    let mut best = top;
                    for cand in [top + 1, top + w, top + w + 1] {
                        if input[cand] > input[best] {
                            best = cand;
                        }
                    }
                    let o = (ch * oh + y) * ow + x;
                    out[o] = input[best];
                    argmax[o] = best;
                }
            }
        }
    }

    pub fn backward<T: Scalar>(&self, dout: &[T], argmax: &[usize], dinput: &mut [T]) {
        dinput.fill(T::zero());
        for (&g, &src) in dout.iter().zip(argmax) {
            dinput[src] += g;
        }
    }
}

/// Fully connected layer with row-major `[out][in]` weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn weight_len(&self) -> usize {
        self.inputs * self.outputs
    }

    pub fn forward<T: Scalar>(&self, weights: &[T], bias: &[T], input: &[T], out: &mut [T]) {
        for (o, y) in out.iter_mut().enumerate().take(self.outputs) {
            *y = bias[o] + dot(&weights[o * self.inputs..(o + 1) * self.inputs], input);
        }
    }

    pub fn backward<T: Scalar>(
        &self,
        weights: &[T],
        input: &[T],
        dout: &[T],
        dweights: &mut [T],
        dbias: &mut [T],
        dinput: Option<&mut [T]>,
    ) {
        for o in 0..self.outputs {
            dbias[o] += dout[o];
            axpy(
                dout[o],
                input,
                &mut dweights[o * self.inputs..(o + 1) * self.inputs],
            );
        }
        if let Some(dinput) = dinput {
            dinput.fill(T::zero());
            for o in 0..self.outputs {
                axpy(
                    dout[o],
                    &weights[o * self.inputs..(o + 1) * self.inputs],
                    dinput,
                );
            }
        }
    }
}

pub fn relu_inplace<T: Scalar>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zeroes gradient entries whose forward activation was clipped.
pub fn relu_backward<T: Scalar>(activated: &[T], grad: &mut [T]) {
    for (g, &a) in grad.iter_mut().zip(activated) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Numerically stable softmax, evaluated in f64.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<f64> {
    let vals: Vec<f64> = logits
        .iter()
        .map(|v| v.to_f64().unwrap_or(f64::NAN))
        .collect();
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = vals.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
