//! Forward and reverse kernels for the primitive set.
//!
//! Every kernel runs a fixed loop order so repeated evaluation is
//! bit-identical; reductions accumulate row-major sequentially.

use crate::detmath;
use crate::error::{Error, Result};
use crate::grad::Array;

/// Interval probability floor (also the mass floor of coded CDF tables).
pub const PROB_FLOOR: f64 = 1.0 / 65536.0;

/// Lower bound added to the softplus-mapped scale of entropy models.
pub const SCALE_MIN: f64 = 0.11;

/// Cumulative model family for the interval negative-log-likelihood.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum CdfModel {
    Gaussian,
    Logistic,
}

impl CdfModel {
    #[inline]
    fn cdf(self, x: f64) -> f64 {
        match self {
            CdfModel::Gaussian => detmath::normal_cdf(x),
            CdfModel::Logistic => detmath::logistic_cdf(x),
        }
    }

    #[inline]
    fn pdf(self, x: f64) -> f64 {
        match self {
            CdfModel::Gaussian => detmath::normal_pdf(x),
            CdfModel::Logistic => detmath::logistic_pdf(x),
        }
    }
}

#[inline]
fn conv_out_extent(n: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = n + 2 * pad;
    if padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

/// Output column range `[lo, hi]` with `ix = ox*stride + kx - pad` in `[0, w)`.
#[inline]
fn ox_bounds(w: usize, ow: usize, kx: usize, stride: usize, pad: usize) -> Option<(usize, usize)> {
    let kx = kx as isize;
    let pad = pad as isize;
    let s = stride as isize;
    let lo_num = pad - kx;
    let lo = if lo_num <= 0 { 0 } else { (lo_num + s - 1) / s };
    let hi_num = w as isize - 1 - kx + pad;
    if hi_num < 0 {
        return None;
    }
    let hi = (hi_num / s).min(ow as isize - 1);
    if lo > hi {
        return None;
    }
    Some((lo as usize, hi as usize))
}

/// 2-D convolution with zero padding. `x: [ci,h,w]`, `k: [co,ci,kh,kw]`,
/// `b: [co]`, stride 1 or 2.
pub fn conv2d(x: &Array, k: &Array, b: &Array, stride: usize, pad: usize) -> Result<Array> {
    let (ci, h, w) = x.dims3("conv2d input")?;
    let (co, kci, kh, kw) = k.dims4("conv2d kernel")?;
    if kci != ci {
        return Err(Error::shape("conv2d in-channels", &[ci], &[kci]));
    }
    if b.shape() != [co] {
        return Err(Error::shape("conv2d bias", &[co], b.shape()));
    }
    if stride != 1 && stride != 2 {
        return Err(Error::Invalid(format!("conv2d stride {stride} not in {{1,2}}")));
    }
    let (oh, ow) = match (
        conv_out_extent(h, kh, stride, pad),
        conv_out_extent(w, kw, stride, pad),
    ) {
        (Some(oh), Some(ow)) => (oh, ow),
        _ => return Err(Error::shape("conv2d extents vs kernel", &[kh, kw], &[h, w])),
    };

    let mut out = Array::zeros(&[co, oh, ow]);
    let xd = x.data();
    let kd = k.data();
    let bd = b.data();
    let od = out.data_mut();
    for oc in 0..co {
        let obase = oc * oh * ow;
        od[obase..obase + oh * ow].fill(bd[oc]);
        for ic in 0..ci {
            let xbase = ic * h * w;
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = kd[((oc * ci + ic) * kh + ky) * kw + kx];
                    let Some((xlo, xhi)) = ox_bounds(w, ow, kx, stride, pad) else {
                        continue;
                    };
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let xrow = xbase + iy as usize * w;
                        let orow = obase + oy * ow;
                        if stride == 1 {
                            let off = kx as isize - pad as isize;
                            let src = &xd[(xrow as isize + off + xlo as isize) as usize
                                ..(xrow as isize + off + xhi as isize) as usize + 1];
                            let dst = &mut od[orow + xlo..orow + xhi + 1];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += wv * s;
                            }
                        } else {
                            for ox in xlo..=xhi {
                                let ix = (ox * 2 + kx) as isize - pad as isize;
                                od[orow + ox] += wv * xd[xrow + ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of `conv2d` w.r.t. input, kernel and bias.
pub fn conv2d_backward(
    x: &Array,
    k: &Array,
    stride: usize,
    pad: usize,
    gout: &Array,
) -> (Array, Array, Array) {
    let (ci, h, w) = x.dims3("conv2d input").expect("validated in forward");
    let (co, _, kh, kw) = k.dims4("conv2d kernel").expect("validated in forward");
    let (_, oh, ow) = gout.dims3("conv2d gout").expect("validated in forward");

    let mut dx = Array::zeros(&[ci, h, w]);
    let mut dk = Array::zeros(k.shape());
    let mut db = Array::zeros(&[co]);
    let xd = x.data();
    let kd = k.data();
    let gd = gout.data();
    {
        let dxd = dx.data_mut();
        let dkd = dk.data_mut();
        for oc in 0..co {
            let obase = oc * oh * ow;
            for ic in 0..ci {
                let xbase = ic * h * w;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let kidx = ((oc * ci + ic) * kh + ky) * kw + kx;
                        let wv = kd[kidx];
                        let Some((xlo, xhi)) = ox_bounds(w, ow, kx, stride, pad) else {
                            continue;
                        };
                        let mut acc = 0.0;
                        for oy in 0..oh {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let xrow = xbase + iy as usize * w;
                            let grow = obase + oy * ow;
                            if stride == 1 {
                                let base =
                                    (xrow as isize + xlo as isize + kx as isize - pad as isize) as usize;
                                for (i, ox) in (xlo..=xhi).enumerate() {
                                    let g = gd[grow + ox];
                                    dxd[base + i] += wv * g;
                                    acc += g * xd[base + i];
                                }
                            } else {
                                for ox in xlo..=xhi {
                                    let ix = ((ox * 2 + kx) as isize - pad as isize) as usize;
                                    let g = gd[grow + ox];
                                    dxd[xrow + ix] += wv * g;
                                    acc += g * xd[xrow + ix];
                                }
                            }
                        }
                        dkd[kidx] += acc;
                    }
                }
            }
        }
    }
    {
        let dbd = db.data_mut();
        for oc in 0..co {
            let obase = oc * oh * ow;
            let mut acc = 0.0;
            for v in &gd[obase..obase + oh * ow] {
                acc += v;
            }
            dbd[oc] = acc;
        }
    }
    (dx, dk, db)
}

/// Transposed 2-D convolution, fixed 3x3 kernel, stride 2, output exactly
/// doubled: the adjoint of `conv2d(k=3, stride=2, pad=1)`.
/// `x: [ci,h,w]`, `k: [ci,co,3,3]`, `b: [co]` -> `[co, 2h, 2w]`.
pub fn deconv2d(x: &Array, k: &Array, b: &Array) -> Result<Array> {
    let (ci, h, w) = x.dims3("deconv2d input")?;
    let (kci, co, kh, kw) = k.dims4("deconv2d kernel")?;
    if kci != ci || kh != 3 || kw != 3 {
        return Err(Error::shape("deconv2d kernel", &[ci, 0, 3, 3], k.shape()));
    }
    if b.shape() != [co] {
        return Err(Error::shape("deconv2d bias", &[co], b.shape()));
    }
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = Array::zeros(&[co, oh, ow]);
    let xd = x.data();
    let kd = k.data();
    let bd = b.data();
    let od = out.data_mut();
    for oc in 0..co {
        let obase = oc * oh * ow;
        od[obase..obase + oh * ow].fill(bd[oc]);
        for ic in 0..ci {
            let xbase = ic * h * w;
            for ky in 0..3usize {
                for kx in 0..3usize {
                    let wv = kd[((ic * co + oc) * 3 + ky) * 3 + kx];
                    // oy = 2*iy + ky - 1; only ky=0/kx=0 fall off the top/left
                    let iy_lo = if ky == 0 { 1 } else { 0 };
                    let ix_lo = if kx == 0 { 1 } else { 0 };
                    for iy in iy_lo..h {
                        let oy = 2 * iy + ky - 1;
                        let xrow = xbase + iy * w;
                        let orow = obase + oy * ow;
                        for ix in ix_lo..w {
                            let ox = 2 * ix + kx - 1;
                            od[orow + ox] += wv * xd[xrow + ix];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of `deconv2d` w.r.t. input, kernel and bias.
pub fn deconv2d_backward(x: &Array, k: &Array, gout: &Array) -> (Array, Array, Array) {
    let (ci, h, w) = x.dims3("deconv2d input").expect("validated in forward");
    let (_, co, _, _) = k.dims4("deconv2d kernel").expect("validated in forward");
    let (_, oh, ow) = gout.dims3("deconv2d gout").expect("validated in forward");

    let mut dx = Array::zeros(&[ci, h, w]);
    let mut dk = Array::zeros(k.shape());
    let mut db = Array::zeros(&[co]);
    let xd = x.data();
    let kd = k.data();
    let gd = gout.data();
    {
        let dxd = dx.data_mut();
        let dkd = dk.data_mut();
        for ic in 0..ci {
            let xbase = ic * h * w;
            for oc in 0..co {
                let obase = oc * oh * ow;
                for ky in 0..3usize {
                    for kx in 0..3usize {
                        let kidx = ((ic * co + oc) * 3 + ky) * 3 + kx;
                        let wv = kd[kidx];
                        let iy_lo = if ky == 0 { 1 } else { 0 };
                        let ix_lo = if kx == 0 { 1 } else { 0 };
                        let mut acc = 0.0;
                        for iy in iy_lo..h {
                            let oy = 2 * iy + ky - 1;
                            let xrow = xbase + iy * w;
                            let grow = obase + oy * ow;
                            for ix in ix_lo..w {
                                let ox = 2 * ix + kx - 1;
                                let g = gd[grow + ox];
                                dxd[xrow + ix] += wv * g;
                                acc += g * xd[xrow + ix];
                            }
                        }
                        dkd[kidx] += acc;
                    }
                }
            }
        }
    }
    {
        let dbd = db.data_mut();
        for oc in 0..co {
            let obase = oc * oh * ow;
            let mut acc = 0.0;
            for v in &gd[obase..obase + oh * ow] {
                acc += v;
            }
            dbd[oc] = acc;
        }
    }
    (dx, dk, db)
}

pub fn leaky_relu(x: &Array, slope: f64) -> Array {
    x.map(|v| if v > 0.0 { v } else { slope * v })
}

pub fn leaky_relu_backward(x: &Array, slope: f64, gout: &Array) -> Array {
    let mut dx = gout.clone();
    for (d, &v) in dx.data_mut().iter_mut().zip(x.data()) {
        if v <= 0.0 {
            *d *= slope;
        }
    }
    dx
}

fn check_same_shape(context: &'static str, a: &Array, b: &Array) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(context, a.shape(), b.shape()));
    }
    Ok(())
}

pub fn add(a: &Array, b: &Array) -> Result<Array> {
    check_same_shape("add", a, b)?;
    let mut out = a.clone();
    out.add_assign(b);
    Ok(out)
}

pub fn sub(a: &Array, b: &Array) -> Result<Array> {
    check_same_shape("sub", a, b)?;
    let mut out = a.clone();
    for (o, &v) in out.data_mut().iter_mut().zip(b.data()) {
        *o -= v;
    }
    Ok(out)
}

pub fn mul(a: &Array, b: &Array) -> Result<Array> {
    check_same_shape("mul", a, b)?;
    let mut out = a.clone();
    for (o, &v) in out.data_mut().iter_mut().zip(b.data()) {
        *o *= v;
    }
    Ok(out)
}

pub fn scale(x: &Array, c: f64) -> Array {
    x.map(|v| c * v)
}

/// Channel concatenation of `[ci,h,w]` arrays sharing `h, w`.
pub fn concat(parts: &[&Array]) -> Result<Array> {
    debug_assert!(!parts.is_empty());
    let (_, h, w) = parts[0].dims3("concat")?;
    let mut ctot = 0;
    for p in parts {
        let (c, ph, pw) = p.dims3("concat")?;
        if (ph, pw) != (h, w) {
            return Err(Error::shape("concat spatial extents", &[h, w], &[ph, pw]));
        }
        ctot += c;
    }
    let mut data = Vec::with_capacity(ctot * h * w);
    for p in parts {
        data.extend_from_slice(p.data());
    }
    Array::from_vec(&[ctot, h, w], data)
}

pub fn concat_backward(parts: &[&Array], gout: &Array) -> Vec<Array> {
    let gd = gout.data();
    let mut grads = Vec::with_capacity(parts.len());
    let mut off = 0;
    for p in parts {
        let n = p.elems();
        let mut g = Array::zeros(p.shape());
        g.data_mut().copy_from_slice(&gd[off..off + n]);
        grads.push(g);
        off += n;
    }
    grads
}

/// Bilinear tap positions for 2x upsampling of an extent `n` -> `2n`
/// (half-pixel centers, border clamped).
fn up2_taps(n: usize) -> Vec<(usize, usize, f64)> {
    (0..2 * n)
        .map(|o| {
            let s = (o as f64 + 0.5) / 2.0 - 0.5;
            let s = s.clamp(0.0, (n - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

/// Bilinear 2x upsampling, `[c,h,w]` -> `[c,2h,2w]`.
pub fn upsample2x(x: &Array) -> Result<Array> {
    let (c, h, w) = x.dims3("upsample2x input")?;
    let ty = up2_taps(h);
    let tx = up2_taps(w);
    let mut out = Array::zeros(&[c, 2 * h, 2 * w]);
    let xd = x.data();
    let od = out.data_mut();
    for ch in 0..c {
        let xb = ch * h * w;
        let ob = ch * 4 * h * w;
        for (oy, &(y0, y1, wy)) in ty.iter().enumerate() {
            let r0 = xb + y0 * w;
            let r1 = xb + y1 * w;
            let orow = ob + oy * 2 * w;
            for (ox, &(x0, x1, wx)) in tx.iter().enumerate() {
                let top = (1.0 - wx) * xd[r0 + x0] + wx * xd[r0 + x1];
                let bot = (1.0 - wx) * xd[r1 + x0] + wx * xd[r1 + x1];
                od[orow + ox] = (1.0 - wy) * top + wy * bot;
            }
        }
    }
    Ok(out)
}

pub fn upsample2x_backward(in_shape: &[usize], gout: &Array) -> Array {
    let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
    let ty = up2_taps(h);
    let tx = up2_taps(w);
    let mut dx = Array::zeros(in_shape);
    let gd = gout.data();
    let dd = dx.data_mut();
    for ch in 0..c {
        let xb = ch * h * w;
        let ob = ch * 4 * h * w;
        for (oy, &(y0, y1, wy)) in ty.iter().enumerate() {
            let r0 = xb + y0 * w;
            let r1 = xb + y1 * w;
            let orow = ob + oy * 2 * w;
            for (ox, &(x0, x1, wx)) in tx.iter().enumerate() {
                let g = gd[orow + ox];
                dd[r0 + x0] += g * (1.0 - wy) * (1.0 - wx);
                dd[r0 + x1] += g * (1.0 - wy) * wx;
                dd[r1 + x0] += g * wy * (1.0 - wx);
                dd[r1 + x1] += g * wy * wx;
            }
        }
    }
    dx
}

/// 2x average pooling; extents must be even.
pub fn avgpool2(x: &Array) -> Result<Array> {
    let (c, h, w) = x.dims3("avgpool2 input")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Indivisible {
            context: "avgpool2",
            got: vec![h, w],
            divisor: 2,
        });
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Array::zeros(&[c, oh, ow]);
    let xd = x.data();
    let od = out.data_mut();
    for ch in 0..c {
        let xb = ch * h * w;
        let ob = ch * oh * ow;
        for oy in 0..oh {
            let r0 = xb + 2 * oy * w;
            let r1 = r0 + w;
            let orow = ob + oy * ow;
            for ox in 0..ow {
                od[orow + ox] =
                    0.25 * (xd[r0 + 2 * ox] + xd[r0 + 2 * ox + 1] + xd[r1 + 2 * ox] + xd[r1 + 2 * ox + 1]);
            }
        }
    }
    Ok(out)
}

pub fn avgpool2_backward(in_shape: &[usize], gout: &Array) -> Array {
    let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
    let (oh, ow) = (h / 2, w / 2);
    let mut dx = Array::zeros(in_shape);
    let gd = gout.data();
    let dd = dx.data_mut();
    for ch in 0..c {
        let xb = ch * h * w;
        let ob = ch * oh * ow;
        for oy in 0..oh {
            let r0 = xb + 2 * oy * w;
            let r1 = r0 + w;
            let orow = ob + oy * ow;
            for ox in 0..ow {
                let g = 0.25 * gd[orow + ox];
                dd[r0 + 2 * ox] += g;
                dd[r0 + 2 * ox + 1] += g;
                dd[r1 + 2 * ox] += g;
                dd[r1 + 2 * ox + 1] += g;
            }
        }
    }
    dx
}

/// Backward bilinear warp with border clamping: `out(x,y)` samples `src` at
/// `(x + flow[0](x,y), y + flow[1](x,y))`. `src: [c,h,w]`, `flow: [2,h,w]`.
pub fn warp(src: &Array, flow: &Array) -> Result<Array> {
    let (c, h, w) = src.dims3("warp source")?;
    let (fc, fh, fw) = flow.dims3("warp flow")?;
    if fc != 2 || fh != h || fw != w {
        return Err(Error::shape("warp flow vs source", &[2, h, w], flow.shape()));
    }
    let mut out = Array::zeros(&[c, h, w]);
    let sd = src.data();
    let fd = flow.data();
    let od = out.data_mut();
    let plane = h * w;
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let sx = (x as f64 + fd[p]).clamp(0.0, (w - 1) as f64);
            let sy = (y as f64 + fd[plane + p]).clamp(0.0, (h - 1) as f64);
            let x0 = sx.floor() as usize;
            let y0 = sy.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let y1 = (y0 + 1).min(h - 1);
            let wx = sx - x0 as f64;
            let wy = sy - y0 as f64;
            for ch in 0..c {
                let b = ch * plane;
                let top = (1.0 - wx) * sd[b + y0 * w + x0] + wx * sd[b + y0 * w + x1];
                let bot = (1.0 - wx) * sd[b + y1 * w + x0] + wx * sd[b + y1 * w + x1];
                od[b + p] = (1.0 - wy) * top + wy * bot;
            }
        }
    }
    Ok(out)
}

/// Gradients of `warp` w.r.t. source and flow. Clamped sample coordinates
/// contribute zero flow gradient.
pub fn warp_backward(src: &Array, flow: &Array, gout: &Array) -> (Array, Array) {
    let (c, h, w) = src.dims3("warp source").expect("validated in forward");
    let mut dsrc = Array::zeros(src.shape());
    let mut dflow = Array::zeros(flow.shape());
    let sd = src.data();
    let fd = flow.data();
    let gd = gout.data();
    let dsd = dsrc.data_mut();
    let dfd = dflow.data_mut();
    let plane = h * w;
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let rx = x as f64 + fd[p];
            let ry = y as f64 + fd[plane + p];
            let x_clamped = rx < 0.0 || rx > (w - 1) as f64;
            let y_clamped = ry < 0.0 || ry > (h - 1) as f64;
            let sx = rx.clamp(0.0, (w - 1) as f64);
            let sy = ry.clamp(0.0, (h - 1) as f64);
            let x0 = sx.floor() as usize;
            let y0 = sy.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let y1 = (y0 + 1).min(h - 1);
            let wx = sx - x0 as f64;
            let wy = sy - y0 as f64;
            let mut gx = 0.0;
            let mut gy = 0.0;
            for ch in 0..c {
                let b = ch * plane;
                let g = gd[b + p];
                let s00 = sd[b + y0 * w + x0];
                let s01 = sd[b + y0 * w + x1];
                let s10 = sd[b + y1 * w + x0];
                let s11 = sd[b + y1 * w + x1];
                dsd[b + y0 * w + x0] += g * (1.0 - wy) * (1.0 - wx);
                dsd[b + y0 * w + x1] += g * (1.0 - wy) * wx;
                dsd[b + y1 * w + x0] += g * wy * (1.0 - wx);
                dsd[b + y1 * w + x1] += g * wy * wx;
                gx += g * ((1.0 - wy) * (s01 - s00) + wy * (s11 - s10));
                gy += g * ((1.0 - wx) * (s10 - s00) + wx * (s11 - s01));
            }
            if !x_clamped {
                dfd[p] += gx;
            }
            if !y_clamped {
                dfd[plane + p] += gy;
            }
        }
    }
    (dsrc, dflow)
}

/// Resolve the model-parameter index for element `e` of `v`: parameters are
/// either full-shape or per-channel `[c]`.
#[inline]
fn param_index(full: bool, e: usize, plane: usize) -> usize {
    if full {
        e
    } else {
        e / plane
    }
}

fn nll_param_layout(v: &Array, loc: &Array, raw_scale: &Array) -> Result<(bool, usize)> {
    if loc.shape() != raw_scale.shape() {
        return Err(Error::shape("interval_nll loc vs scale", loc.shape(), raw_scale.shape()));
    }
    if loc.shape() == v.shape() {
        let plane = if v.shape().len() == 3 {
            v.shape()[1] * v.shape()[2]
        } else {
            1
        };
        Ok((true, plane))
    } else if v.shape().len() == 3 && loc.shape() == [v.shape()[0]] {
        Ok((false, v.shape()[1] * v.shape()[2]))
    } else {
        Err(Error::shape("interval_nll params", v.shape(), loc.shape()))
    }
}

/// Elementwise code length in bits of `v` under a parameterized cumulative
/// model: −log2 of the interval mass on `[v−0.5, v+0.5]`, floored at
/// `PROB_FLOOR`. The model scale is `SCALE_MIN + softplus(raw_scale)`;
/// `loc`/`raw_scale` are either full-shape or per-channel `[c]`.
/// Returns the bits array and the count of floored intervals.
pub fn interval_nll(
    v: &Array,
    loc: &Array,
    raw_scale: &Array,
    model: CdfModel,
) -> Result<(Array, usize)> {
    let (full, plane) = nll_param_layout(v, loc, raw_scale)?;
    let vd = v.data();
    let ld = loc.data();
    let sd = raw_scale.data();
    let mut floored = 0usize;
    let mut out = Array::zeros(v.shape());
    let od = out.data_mut();
    for e in 0..vd.len() {
        let pi = param_index(full, e, plane);
        let sigma = SCALE_MIN + detmath::softplus(sd[pi]);
        let centered = vd[e] - ld[pi];
        let hi = (centered + 0.5) / sigma;
        let lo = (centered - 0.5) / sigma;
        let p = model.cdf(hi) - model.cdf(lo);
        if p <= PROB_FLOOR {
            floored += 1;
            od[e] = -detmath::log2(PROB_FLOOR);
        } else {
            od[e] = -detmath::log2(p);
        }
    }
    Ok((out, floored))
}

/// Gradients of `interval_nll` w.r.t. value, loc and raw scale.
pub fn interval_nll_backward(
    v: &Array,
    loc: &Array,
    raw_scale: &Array,
    model: CdfModel,
    gout: &Array,
) -> (Array, Array, Array) {
    let (full, plane) = nll_param_layout(v, loc, raw_scale).expect("validated in forward");
    let vd = v.data();
    let ld = loc.data();
    let sd = raw_scale.data();
    let gd = gout.data();
    let mut dv = Array::zeros(v.shape());
    let mut dloc = Array::zeros(loc.shape());
    let mut draw = Array::zeros(raw_scale.shape());
    let dvd = dv.data_mut();
    let dld = dloc.data_mut();
    let drd = draw.data_mut();
    const INV_LN2: f64 = std::f64::consts::LOG2_E;
    for e in 0..vd.len() {
        let pi = param_index(full, e, plane);
        let sigma = SCALE_MIN + detmath::softplus(sd[pi]);
        let centered = vd[e] - ld[pi];
        let hi = (centered + 0.5) / sigma;
        let lo = (centered - 0.5) / sigma;
        let p = model.cdf(hi) - model.cdf(lo);
        if p <= PROB_FLOOR {
            continue; // constant region: floored intervals carry no gradient
        }
        let dbits_dp = -INV_LN2 / p;
        let fhi = model.pdf(hi);
        let flo = model.pdf(lo);
        let dp_dv = (fhi - flo) / sigma;
        let dp_dsigma = -(fhi * hi - flo * lo) / sigma;
        let g = gd[e] * dbits_dp;
        dvd[e] += g * dp_dv;
        dld[pi] += g * -dp_dv;
        drd[pi] += g * dp_dsigma * detmath::softplus_grad(sd[pi]);
    }
    (dv, dloc, draw)
}

pub fn sqrt(x: &Array) -> Array {
    x.map(f64::sqrt)
}

pub fn sqrt_backward(x: &Array, gout: &Array) -> Array {
    let mut dx = gout.clone();
    for (d, &v) in dx.data_mut().iter_mut().zip(x.data()) {
        *d *= 0.5 / v.sqrt();
    }
    dx
}

/// Row-major sequential sum (fixed order for bit-exact determinism).
pub fn sum(x: &Array) -> Array {
    let mut acc = 0.0;
    for v in x.data() {
        acc += v;
    }
    Array::scalar(acc)
}

pub fn mean(x: &Array) -> Array {
    Array::scalar(sum(x).item() / x.elems() as f64)
}
