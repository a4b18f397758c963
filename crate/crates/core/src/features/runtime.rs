//! Forward evaluation of the convolution/rectification/pooling stages.

use crate::features::backbone::{ConvStage, PoolStage, Stage};

/// Channel-major `(channels, height, width)` float map.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Tensor {
    fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }
}

pub(crate) fn run_stage(stage: &Stage, x: Tensor) -> Tensor {
    match stage {
        Stage::Conv(c) => conv2d(&x, c),
        Stage::Relu => {
            let mut x = x;
            for v in &mut x.data {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            x
        }
        Stage::MaxPool(p) => pool(&x, p, true),
        Stage::AvgPool(p) => pool(&x, p, false),
    }
}

fn conv_out(size: usize, pad_a: usize, pad_b: usize, k: usize, s: usize) -> usize {
    let padded = size + pad_a + pad_b;
    if padded < k {
        0
    } else {
        (padded - k) / s + 1
    }
}

/// Convolution as one matrix product per kernel offset:
/// `out[o, p] += Σ_i W[o, i, ky, kx] · shifted_{ky,kx}[i, p]`.
fn conv2d(x: &Tensor, c: &ConvStage) -> Tensor {
    let (kh, kw) = c.kernel;
    let (sh, sw) = c.stride;
    let [pt, pl, pb, pr] = c.pads;
    let oh = conv_out(x.height, pt, pb, kh, sh);
    let ow = conv_out(x.width, pl, pr, kw, sw);
    let np = oh * ow;
    let mut out = vec![0.0f32; c.out_channels * np];
    for (o, chunk) in out.chunks_mut(np.max(1)).enumerate().take(c.out_channels) {
        chunk.fill(c.bias[o]);
    }
    if np == 0 {
        return Tensor { channels: c.out_channels, height: oh, width: ow, data: out };
    }
    let mut shifted = vec![0.0f32; c.in_channels * np];
    for ky in 0..kh {
        for kx in 0..kw {
            shifted.fill(0.0);
            for ci in 0..c.in_channels {
                let src = x.plane(ci);
                let dst = &mut shifted[ci * np..(ci + 1) * np];
                for oy in 0..oh {
                    let iy = (oy * sh + ky) as isize - pt as isize;
                    if iy < 0 || iy >= x.height as isize {
                        continue;
                    }
                    let row = &src[iy as usize * x.width..(iy as usize + 1) * x.width];
                    let drow = &mut dst[oy * ow..(oy + 1) * ow];
                    // valid ox: 0 <= ox*sw + kx - pl < width
                    let lo = pl.saturating_sub(kx).div_ceil(sw);
                    for (ox, d) in drow.iter_mut().enumerate().skip(lo) {
                        let ix = ox * sw + kx - pl;
                        if ix >= x.width {
                            break;
                        }
                        *d = row[ix];
                    }
                }
            }
            let per_out = c.in_channels * kh * kw;
            // SAFETY: all strides and extents stay inside the three buffers:
            // A is Cout×Cin over `weights` starting at offset ky*kw+kx with row
            // stride Cin*kh*kw and column stride kh*kw; B is Cin×np; C is Cout×np.
            unsafe {
                matrixmultiply::sgemm(
                    c.out_channels,
                    c.in_channels,
                    np,
                    1.0,
                    c.weights.as_ptr().add(ky * kw + kx),
                    per_out as isize,
                    (kh * kw) as isize,
                    shifted.as_ptr(),
                    np as isize,
                    1,
                    1.0,
                    out.as_mut_ptr(),
                    np as isize,
                    1,
                );
            }
        }
    }
    Tensor { channels: c.out_channels, height: oh, width: ow, data: out }
}

fn pool_out(size: usize, pad_a: usize, pad_b: usize, k: usize, s: usize, ceil: bool) -> usize {
    let padded = size + pad_a + pad_b;
    if padded < k {
        return 0;
    }
    let span = padded - k;
    let mut n = if ceil { span.div_ceil(s) } else { span / s } + 1;
    // the last window must start inside the image or the leading pad
    if ceil && (n - 1) * s >= size + pad_a {
        n -= 1;
    }
    n
}

fn pool(x: &Tensor, p: &PoolStage, max: bool) -> Tensor {
    let (kh, kw) = p.kernel;
    let (sh, sw) = p.stride;
    let [pt, pl, pb, pr] = p.pads;
    let oh = pool_out(x.height, pt, pb, kh, sh, p.ceil_mode);
    let ow = pool_out(x.width, pl, pr, kw, sw, p.ceil_mode);
    let mut out = Vec::with_capacity(x.channels * oh * ow);
    for ch in 0..x.channels {
        let src = x.plane(ch);
        for oy in 0..oh {
            let y0 = (oy * sh) as isize - pt as isize;
            for ox in 0..ow {
                let x0 = (ox * sw) as isize - pl as isize;
                let mut acc = if max { f32::NEG_INFINITY } else { 0.0 };
                let mut count = 0usize;
                let mut padded_count = 0usize;
                for dy in 0..kh as isize {
                    let yy = y0 + dy;
                    for dx in 0..kw as isize {
                        let xx = x0 + dx;
                        if yy < (x.height + pb) as isize && xx < (x.width + pr) as isize {
                            padded_count += 1;
                        }
                        if yy < 0 || xx < 0 || yy >= x.height as isize || xx >= x.width as isize {
                            continue;
                        }
                        let v = src[yy as usize * x.width + xx as usize];
                        count += 1;
                        if max {
                            acc = acc.max(v);
                        } else {
                            acc += v;
                        }
                    }
                }
                let v = if max {
                    acc
                } else {
                    let denom = if p.count_include_pad { padded_count } else { count };
                    acc / denom.max(1) as f32
                };
                out.push(v);
            }
        }
    }
    Tensor { channels: x.channels, height: oh, width: ow, data: out }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(x: &Tensor, c: &ConvStage) -> Tensor {
        let (kh, kw) = c.kernel;
        let (sh, sw) = c.stride;
        let [pt, pl, pb, pr] = c.pads;
        let oh = conv_out(x.height, pt, pb, kh, sh);
        let ow = conv_out(x.width, pl, pr, kw, sw);
        let mut data = vec![0.0f32; c.out_channels * oh * ow];
        for o in 0..c.out_channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut s = c.bias[o] as f64;
                    for i in 0..c.in_channels {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * sh + ky) as isize - pt as isize;
                                let ix = (ox * sw + kx) as isize - pl as isize;
                                if iy < 0 || ix < 0 || iy >= x.height as isize || ix >= x.width as isize {
                                    continue;
                                }
                                let w = c.weights[((o * c.in_channels + i) * kh + ky) * kw + kx];
                                s += w as f64 * x.data[(i * x.height + iy as usize) * x.width + ix as usize] as f64;
                            }
                        }
                    }
                    data[(o * oh + oy) * ow + ox] = s as f32;
                }
            }
        }
        Tensor { channels: c.out_channels, height: oh, width: ow, data }
    }

    fn lcg(n: usize, seed: u32) -> Vec<f32> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(1664525).wrapping_add(1013904223);
                (s >> 8) as f32 / (1u32 << 24) as f32 - 0.5
            })
            .collect()
    }

    #[test]
    fn conv_matches_direct_summation() {
        for (stride, pads, k) in [((1, 1), [1, 1, 1, 1], 3), ((2, 2), [0, 1, 2, 0], 3), ((1, 2), [0, 0, 0, 0], 2)] {
            let x = Tensor { channels: 3, height: 9, width: 11, data: lcg(3 * 99, 7) };
            let c = ConvStage {
                out_channels: 4,
                in_channels: 3,
                kernel: (k, k),
                stride,
                pads,
                weights: lcg(4 * 3 * k * k, 11),
                bias: vec![0.1, -0.2, 0.3, 0.0],
            };
            let fast = conv2d(&x, &c);
            let slow = naive_conv(&x, &c);
            assert_eq!((fast.height, fast.width), (slow.height, slow.width));
            for (a, b) in fast.data.iter().zip(&slow.data) {
                assert!((a - b).abs() < 1e-5, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn ceil_mode_pool_keeps_partial_window() {
        let x = Tensor { channels: 1, height: 5, width: 5, data: (0..25).map(|v| v as f32).collect() };
        let p = PoolStage { kernel: (2, 2), stride: (2, 2), pads: [0; 4], ceil_mode: true, count_include_pad: false };
        let y = pool(&x, &p, true);
        assert_eq!((y.height, y.width), (3, 3));
        assert_eq!(y.data, vec![6.0, 8.0, 9.0, 16.0, 18.0, 19.0, 21.0, 23.0, 24.0]);
        let floor = PoolStage { ceil_mode: false, ..p.clone() };
        assert_eq!(pool(&x, &floor, true).height, 2);
        let avg = pool(&x, &p, false);
        assert_eq!(avg.data[0], 3.0);
        assert_eq!(avg.data[8], 24.0);
    }
}
