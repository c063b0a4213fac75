//! Numeric kernels: 2D convolution, elementwise math, pooling, the linear
//! classifier head and bilinear resizing.
//!
//! All operations are pure: inputs are borrowed immutably and a fresh output
//! tensor is returned. `conv2d` runs an im2col + GEMM path; `conv2d_reference`
//! is the direct 6-loop form kept as the semantic reference, and the two must
//! agree within 1e-5.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::opcount;
use crate::tensor::Tensor;

static THREADS: AtomicUsize = AtomicUsize::new(1);

/// Set the worker-thread count used by `conv2d` to split batch rows.
/// Results are identical for any value; 1 (the default) runs inline.
pub fn set_threads(n: usize) {
    THREADS.store(n.max(1), Ordering::Relaxed);
}

pub fn threads() -> usize {
    THREADS.load(Ordering::Relaxed)
}

pub(crate) fn conv_out_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

fn conv_check(
    x: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    pad: usize,
) -> Result<(usize, usize, usize, usize, usize, usize, usize, usize, usize)> {
    if stride == 0 {
        return Err(Error::Arg("conv2d stride must be positive".into()));
    }
    let (n, c_in, h, w) = x.dims4()?;
    let (c_out, wc_in, kh, kw) = weight.dims4()?;
    if wc_in != c_in {
        return Err(Error::Dim(format!(
            "conv2d input has {c_in} channels but weight expects {wc_in}"
        )));
    }
    if kh > h + 2 * pad || kw > w + 2 * pad {
        return Err(Error::Dim(format!(
            "kernel {kh}x{kw} larger than padded input {}x{}",
            h + 2 * pad,
            w + 2 * pad
        )));
    }
    if let Some(b) = bias {
        if b.dims() != [c_out] {
            return Err(Error::Dim(format!(
                "bias dims {:?} do not match {c_out} output channels",
                b.dims()
            )));
        }
    }
    let oh = conv_out_extent(h, kh, stride, pad);
    let ow = conv_out_extent(w, kw, stride, pad);
    Ok((n, c_in, h, w, c_out, kh, kw, oh, ow))
}

/// Direct convolution over `[N, C_in, H, W]` with zero padding.
///
/// `weight` is `[C_out, C_in, kH, kW]`; output is `[N, C_out, H', W']` with
/// `H' = (H + 2*pad - kH)/stride + 1`.
pub fn conv2d(
    x: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let (n, c_in, h, w, c_out, kh, kw, oh, ow) = conv_check(x, weight, bias, stride, pad)?;
    let plane = oh * ow;
    let k = c_in * kh * kw;
    let mut out = vec![0.0f32; n * c_out * plane];

    let run_rows = |rows: std::ops::Range<usize>, out_chunk: &mut [f32]| {
        let mut cols = vec![0.0f32; k * plane];
        for (ri, r) in rows.enumerate() {
            let x_row = &x.data()[r * c_in * h * w..(r + 1) * c_in * h * w];
            im2col(x_row, c_in, h, w, kh, kw, stride, pad, oh, ow, &mut cols);
            let out_row = &mut out_chunk[ri * c_out * plane..(ri + 1) * c_out * plane];
            unsafe {
                matrixmultiply::sgemm(
                    c_out,
                    k,
                    plane,
                    1.0,
                    weight.data().as_ptr(),
                    k as isize,
                    1,
                    cols.as_ptr(),
                    plane as isize,
                    1,
                    0.0,
                    out_row.as_mut_ptr(),
                    plane as isize,
                    1,
                );
            }
            if let Some(b) = bias {
                for (oc, &bv) in b.data().iter().enumerate() {
                    for v in &mut out_row[oc * plane..(oc + 1) * plane] {
                        *v += bv;
                    }
                }
            }
        }
    };

    let threads = threads().min(n);
    if threads <= 1 {
        run_rows(0..n, &mut out);
    } else {
        let chunk_rows = n.div_ceil(threads);
        std::thread::scope(|scope| {
            for (i, out_chunk) in out.chunks_mut(chunk_rows * c_out * plane).enumerate() {
                let start = i * chunk_rows;
                let end = (start + chunk_rows).min(n);
                scope.spawn(move || run_rows(start..end, out_chunk));
            }
        });
    }

    opcount::record(2 * (n * c_out * k * plane) as u64);
    Tensor::new(vec![n, c_out, oh, ow], out)
}

#[allow(clippy::too_many_arguments)]
fn im2col(
    x: &[f32],
    c_in: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    cols: &mut [f32],
) {
    let plane = oh * ow;
    let mut row_idx = 0;
    for ic in 0..c_in {
        let src = &x[ic * h * w..(ic + 1) * h * w];
        for ki in 0..kh {
            for kj in 0..kw {
                let dst = &mut cols[row_idx * plane..(row_idx + 1) * plane];
                for oy in 0..oh {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    let drow = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        drow.fill(0.0);
                        continue;
                    }
                    let srow = &src[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, d) in drow.iter_mut().enumerate() {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        *d = if ix < 0 || ix >= w as isize {
                            0.0
                        } else {
                            srow[ix as usize]
                        };
                    }
                }
                row_idx += 1;
            }
        }
    }
}

/// The naive 6-loop convolution; semantics reference for `conv2d`.
pub fn conv2d_reference(
    x: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let (n, c_in, h, w, c_out, kh, kw, oh, ow) = conv_check(x, weight, bias, stride, pad)?;
    let mut out = vec![0.0f32; n * c_out * oh * ow];
    for ni in 0..n {
        for oc in 0..c_out {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut sum = 0.0f32;
                    for ic in 0..c_in {
                        for ki in 0..kh {
                            let iy = (oy * stride + ki) as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kj in 0..kw {
                                let ix = (ox * stride + kj) as isize - pad as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let xi = ((ni * c_in + ic) * h + iy as usize) * w + ix as usize;
                                let wi = ((oc * c_in + ic) * kh + ki) * kw + kj;
                                sum += x.data()[xi] * weight.data()[wi];
                            }
                        }
                    }
                    if let Some(b) = bias {
                        sum += b.data()[oc];
                    }
                    out[((ni * c_out + oc) * oh + oy) * ow + ox] = sum;
                }
            }
        }
    }
    opcount::record(2 * (n * c_out * c_in * kh * kw * oh * ow) as u64);
    Tensor::new(vec![n, c_out, oh, ow], out)
}

pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    opcount::record(x.len() as u64);
    Tensor::new(x.dims().to_vec(), data).expect("same dims")
}

pub fn add(x: &Tensor, y: &Tensor) -> Result<Tensor> {
    if x.dims() != y.dims() {
        return Err(Error::Dim(format!(
            "add dims {:?} vs {:?}",
            x.dims(),
            y.dims()
        )));
    }
    let data = x.data().iter().zip(y.data()).map(|(a, b)| a + b).collect();
    opcount::record(x.len() as u64);
    Tensor::new(x.dims().to_vec(), data)
}

/// Max pooling along the temporal axis of `[N, C, T, H, W]` with fixed
/// temporal padding 1 filled at negative infinity, so an 8-frame clip pools
/// to 4 frames at the default kernel 3 / stride 2.
pub fn temporal_max_pool(x: &Tensor, kernel: usize, stride: usize) -> Result<Tensor> {
    if kernel == 0 || stride == 0 {
        return Err(Error::Arg("temporal_max_pool kernel and stride must be >= 1".into()));
    }
    let (n, c, t, h, w) = x.dims5()?;
    let t_out = pooled_frames(t, kernel, stride)
        .ok_or_else(|| Error::Dim(format!("temporal_max_pool kernel {kernel} too large for T={t}")))?;
    let plane = h * w;
    let mut out = vec![f32::NEG_INFINITY; n * c * t_out * plane];
    for ni in 0..n {
        for ci in 0..c {
            for to in 0..t_out {
                let start = (to * stride) as isize - 1;
                let dst_base = ((ni * c + ci) * t_out + to) * plane;
                for ti in start..start + kernel as isize {
                    if ti < 0 || ti >= t as isize {
                        continue;
                    }
                    let src_base = ((ni * c + ci) * t + ti as usize) * plane;
                    for p in 0..plane {
                        let v = x.data()[src_base + p];
                        if v > out[dst_base + p] {
                            out[dst_base + p] = v;
                        }
                    }
                }
            }
        }
    }
    opcount::record((n * c * t_out * plane * kernel) as u64);
    Tensor::new(vec![n, c, t_out, h, w], out)
}

/// Frames remaining after temporal max pooling with padding 1:
/// `floor((T + 2 - kernel)/stride) + 1`.
pub fn pooled_frames(t: usize, kernel: usize, stride: usize) -> Option<usize> {
    (t + 2 >= kernel).then(|| (t + 2 - kernel) / stride + 1)
}

/// Mean over the temporal and both spatial axes: `[N, C, T, H, W] -> [N, C]`.
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    let (n, c, t, h, w) = x.dims5()?;
    let span = t * h * w;
    let mut out = Vec::with_capacity(n * c);
    for ni in 0..n {
        for ci in 0..c {
            let base = (ni * c + ci) * span;
            let sum: f64 = x.data()[base..base + span].iter().map(|&v| v as f64).sum();
            out.push((sum / span as f64) as f32);
        }
    }
    opcount::record((n * c * span) as u64);
    Tensor::new(vec![n, c], out)
}

/// Mean over the spatial axes of a folded activation: `[R, C, H, W] -> [R, C]`.
pub(crate) fn spatial_avg_pool(x: &Tensor) -> Result<Tensor> {
    let (r, c, h, w) = x.dims4()?;
    let span = h * w;
    let mut out = Vec::with_capacity(r * c);
    for ri in 0..r {
        for ci in 0..c {
            let base = (ri * c + ci) * span;
            let sum: f64 = x.data()[base..base + span].iter().map(|&v| v as f64).sum();
            out.push((sum / span as f64) as f32);
        }
    }
    opcount::record((r * c * span) as u64);
    Tensor::new(vec![r, c], out)
}

/// `y = x * weight^T + bias` with `x: [N, C]`, `weight: [K, C]`, `bias: [K]`.
pub fn fully_connected(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n, c) = x.dims2()?;
    let (k, wc) = weight.dims2()?;
    if wc != c {
        return Err(Error::Dim(format!(
            "fully_connected input has {c} features but weight expects {wc}"
        )));
    }
    if bias.dims() != [k] {
        return Err(Error::Dim(format!(
            "bias dims {:?} do not match {k} classes",
            bias.dims()
        )));
    }
    let mut out = Vec::with_capacity(n * k);
    for ni in 0..n {
        let row = &x.data()[ni * c..(ni + 1) * c];
        for ki in 0..k {
            let wrow = &weight.data()[ki * c..(ki + 1) * c];
            let mut sum = bias.data()[ki];
            for (a, b) in row.iter().zip(wrow) {
                sum += a * b;
            }
            out.push(sum);
        }
    }
    opcount::record(2 * (n * k * c) as u64);
    Tensor::new(vec![n, k], out)
}

/// Bilinear resize of the spatial axes of `[N, K, T, h, w]` using the
/// half-pixel-center convention (align corners false).
pub fn bilinear_resize_spatial(x: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Arg("bilinear output extents must be >= 1".into()));
    }
    let (n, k, t, h, w) = x.dims5()?;
    let scale_y = h as f64 / out_h as f64;
    let scale_x = w as f64 / out_w as f64;

    // Sample positions and lerp weights are shared by every plane.
    let axis = |out_len: usize, in_len: usize, scale: f64| -> Vec<(usize, usize, f32)> {
        (0..out_len)
            .map(|d| {
                let src = (d as f64 + 0.5) * scale - 0.5;
                let i0 = src.floor();
                let frac = (src - i0) as f32;
                let lo = (i0.max(0.0) as usize).min(in_len - 1);
                let hi = ((i0 + 1.0).max(0.0) as usize).min(in_len - 1);
                (lo, hi, frac)
            })
            .collect()
    };
    let ys = axis(out_h, h, scale_y);
    let xs = axis(out_w, w, scale_x);

    let mut out = Vec::with_capacity(n * k * t * out_h * out_w);
    for plane_idx in 0..n * k * t {
        let src = &x.data()[plane_idx * h * w..(plane_idx + 1) * h * w];
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
                let bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
                out.push(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    opcount::record(8 * (n * k * t * out_h * out_w) as u64);
    Tensor::new(vec![n, k, t, out_h, out_w], out)
}
