//! Raw loops behind the graph ops. Buffers are NCHW, row-major.

use crate::error::{AutodiffError, Result};

/// Zero padding on each side of the two spatial axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    pub const NONE: Padding = Padding {
        top: 0,
        bottom: 0,
        left: 0,
        right: 0,
    };

    pub fn uniform(p: usize) -> Self {
        Padding {
            top: p,
            bottom: p,
            left: p,
            right: p,
        }
    }

    /// Padding that keeps extents unchanged for a stride-1 `k`×`k` kernel.
    /// Even kernels put the extra row/column after.
    pub fn same(k: usize) -> Self {
        let before = (k - 1) / 2;
        let after = k - 1 - before;
        Padding {
            top: before,
            bottom: after,
            left: before,
            right: after,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dAttrs {
    pub stride: usize,
    pub padding: Padding,
    pub groups: usize,
}

impl Default for Conv2dAttrs {
    fn default() -> Self {
        Conv2dAttrs {
            stride: 1,
            padding: Padding::NONE,
            groups: 1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub oh: usize,
    pub ow: usize,
    pub stride: usize,
    pub pad: Padding,
    pub groups: usize,
}

impl ConvGeom {
    pub fn new(layer: &str, x: &[usize], wt: &[usize], attrs: &Conv2dAttrs) -> Result<Self> {
        let invalid = |reason: String| AutodiffError::InvalidAttrs {
            layer: layer.to_string(),
            reason,
        };
        if x.len() != 4 {
            return Err(AutodiffError::ShapeMismatch {
                layer: layer.to_string(),
                expected: vec![0, 0, 0, 0],
                got: x.to_vec(),
            });
        }
        if wt.len() != 4 {
            return Err(AutodiffError::ShapeMismatch {
                layer: layer.to_string(),
                expected: vec![0, 0, 0, 0],
                got: wt.to_vec(),
            });
        }
        if attrs.stride == 0 || attrs.groups == 0 {
            return Err(invalid("stride and groups must be positive".into()));
        }
        let (n, cin, h, w) = (x[0], x[1], x[2], x[3]);
        let (cout, cin_g, kh, kw) = (wt[0], wt[1], wt[2], wt[3]);
        let groups = attrs.groups;
        if cin % groups != 0 || cout % groups != 0 || cin / groups != cin_g {
            return Err(AutodiffError::ShapeMismatch {
                layer: layer.to_string(),
                expected: vec![cout, cin / groups, kh, kw],
                got: wt.to_vec(),
            });
        }
        let p = attrs.padding;
        let ph = h + p.top + p.bottom;
        let pw = w + p.left + p.right;
        if ph < kh || pw < kw {
            return Err(invalid(format!(
                "kernel {kh}x{kw} larger than padded input {ph}x{pw}"
            )));
        }
        Ok(ConvGeom {
            n,
            cin,
            h,
            w,
            cout,
            kh,
            kw,
            oh: (ph - kh) / attrs.stride + 1,
            ow: (pw - kw) / attrs.stride + 1,
            stride: attrs.stride,
            pad: p,
            groups,
        })
    }

    pub fn out_shape(&self) -> Vec<usize> {
        vec![self.n, self.cout, self.oh, self.ow]
    }
}

/// Output index range `[lo, hi)` for which `o*stride + k - pad` lands in `[0, len_in)`.
fn valid_range(k: usize, pad: usize, stride: usize, len_in: usize, len_out: usize) -> (usize, usize) {
    let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
    let top = len_in as isize - 1 + pad as isize - k as isize;
    if top < 0 {
        return (0, 0);
    }
    let hi = (top as usize / stride + 1).min(len_out);
    (lo.min(hi), hi)
}

pub(crate) fn conv_forward(g: &ConvGeom, x: &[f64], wt: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; g.n * g.cout * g.oh * g.ow];
    let cin_g = g.cin / g.groups;
    let cout_g = g.cout / g.groups;
    let s = g.stride;
    for n in 0..g.n {
        for oc in 0..g.cout {
            let grp = oc / cout_g;
            let obase = (n * g.cout + oc) * g.oh * g.ow;
            for icg in 0..cin_g {
                let ic = grp * cin_g + icg;
                let xin = &x[(n * g.cin + ic) * g.h * g.w..][..g.h * g.w];
                for ki in 0..g.kh {
                    let (rlo, rhi) = valid_range(ki, g.pad.top, s, g.h, g.oh);
                    for kj in 0..g.kw {
                        let wv = wt[((oc * cin_g + icg) * g.kh + ki) * g.kw + kj];
                        let (clo, chi) = valid_range(kj, g.pad.left, s, g.w, g.ow);
                        if clo >= chi {
                            continue;
                        }
                        for oh in rlo..rhi {
                            let ih = oh * s + ki - g.pad.top;
                            let orow = &mut out[obase + oh * g.ow..][..g.ow];
                            let irow = &xin[ih * g.w..][..g.w];
                            if s == 1 {
                                let off = clo + kj - g.pad.left;
                                for (o, &i) in orow[clo..chi].iter_mut().zip(&irow[off..]) {
                                    *o += wv * i;
                                }
                            } else {
                                for ow in clo..chi {
                                    orow[ow] += wv * irow[ow * s + kj - g.pad.left];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn conv_backward(
    g: &ConvGeom,
    x: &[f64],
    wt: &[f64],
    gout: &[f64],
    need_dx: bool,
    need_dw: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    let mut dx = need_dx.then(|| vec![0.0; x.len()]);
    let mut dw = need_dw.then(|| vec![0.0; wt.len()]);
    let cin_g = g.cin / g.groups;
    let cout_g = g.cout / g.groups;
    let s = g.stride;
    for n in 0..g.n {
        for oc in 0..g.cout {
            let grp = oc / cout_g;
            let obase = (n * g.cout + oc) * g.oh * g.ow;
            for icg in 0..cin_g {
                let ic = grp * cin_g + icg;
                let xbase = (n * g.cin + ic) * g.h * g.w;
                for ki in 0..g.kh {
                    let (rlo, rhi) = valid_range(ki, g.pad.top, s, g.h, g.oh);
                    for kj in 0..g.kw {
                        let widx = ((oc * cin_g + icg) * g.kh + ki) * g.kw + kj;
                        let wv = wt[widx];
                        let (clo, chi) = valid_range(kj, g.pad.left, s, g.w, g.ow);
                        if clo >= chi {
                            continue;
                        }
                        let mut acc = 0.0;
                        for oh in rlo..rhi {
                            let ih = oh * s + ki - g.pad.top;
                            let grow = &gout[obase + oh * g.ow..][..g.ow];
                            let rbase = xbase + ih * g.w;
                            if let Some(dx) = dx.as_mut() {
                                let drow = &mut dx[rbase..][..g.w];
                                for ow in clo..chi {
                                    drow[ow * s + kj - g.pad.left] += wv * grow[ow];
                                }
                            }
                            if need_dw {
                                let irow = &x[rbase..][..g.w];
                                for ow in clo..chi {
                                    acc += grow[ow] * irow[ow * s + kj - g.pad.left];
                                }
                            }
                        }
                        if let Some(dw) = dw.as_mut() {
                            dw[widx] += acc;
                        }
                    }
                }
            }
        }
    }
    (dx, dw)
}

pub(crate) fn upsample2x_forward(shape: &[usize], x: &[f64]) -> Vec<f64> {
    let (planes, h, w) = (shape[0] * shape[1], shape[2], shape[3]);
    let mut out = vec![0.0; planes * 4 * h * w];
    for p in 0..planes {
        let src = &x[p * h * w..][..h * w];
        let dst = &mut out[p * 4 * h * w..][..4 * h * w];
        for r in 0..2 * h {
            let srow = &src[(r / 2) * w..][..w];
            let drow = &mut dst[r * 2 * w..][..2 * w];
            for (c, d) in drow.iter_mut().enumerate() {
                *d = srow[c / 2];
            }
        }
    }
    out
}

pub(crate) fn upsample2x_backward(shape: &[usize], gout: &[f64]) -> Vec<f64> {
    let (planes, h, w) = (shape[0] * shape[1], shape[2], shape[3]);
    let mut dx = vec![0.0; planes * h * w];
    for p in 0..planes {
        let src = &gout[p * 4 * h * w..][..4 * h * w];
        let dst = &mut dx[p * h * w..][..h * w];
        for r in 0..2 * h {
            let srow = &src[r * 2 * w..][..2 * w];
            let drow = &mut dst[(r / 2) * w..][..w];
            for (c, g) in srow.iter().enumerate() {
                drow[c / 2] += g;
            }
        }
    }
    dx
}

/// `(batch, channels, spatial)` view of a tensor with channels on axis 1.
pub(crate) fn channel_view(shape: &[usize]) -> (usize, usize, usize) {
    let spatial: usize = shape[2..].iter().product();
    (shape[0], shape[1], spatial)
}

pub(crate) const BN_EPS: f64 = 1e-5;

pub(crate) struct BnForward {
    pub out: Vec<f64>,
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Normalizes with the supplied statistics, or with batch statistics when `stats` is `None`.
pub(crate) fn batch_norm_forward(
    shape: &[usize],
    x: &[f64],
    gamma: &[f64],
    beta: &[f64],
    stats: Option<(&[f64], &[f64])>,
) -> BnForward {
    let (n, c, s) = channel_view(shape);
    let (mean, var) = match stats {
        Some((m, v)) => (m.to_vec(), v.to_vec()),
        None => {
            let count = (n * s) as f64;
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for ch in 0..c {
                let mut sum = 0.0;
                for b in 0..n {
                    sum += x[(b * c + ch) * s..][..s].iter().sum::<f64>();
                }
                let m = sum / count;
                let mut sq = 0.0;
                for b in 0..n {
                    sq += x[(b * c + ch) * s..][..s]
                        .iter()
                        .map(|v| (v - m) * (v - m))
                        .sum::<f64>();
                }
                mean[ch] = m;
                var[ch] = sq / count;
            }
            (mean, var)
        }
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut xhat = vec![0.0; x.len()];
    let mut out = vec![0.0; x.len()];
    for b in 0..n {
        for ch in 0..c {
            let base = (b * c + ch) * s;
            for i in base..base + s {
                let xh = (x[i] - mean[ch]) * inv_std[ch];
                xhat[i] = xh;
                out[i] = gamma[ch] * xh + beta[ch];
            }
        }
    }
    BnForward {
        out,
        xhat,
        inv_std,
        mean,
        var,
    }
}

pub(crate) struct BnBackward {
    pub dx: Vec<f64>,
    pub dgamma: Vec<f64>,
    pub dbeta: Vec<f64>,
}

pub(crate) fn batch_norm_backward(
    shape: &[usize],
    gout: &[f64],
    gamma: &[f64],
    xhat: &[f64],
    inv_std: &[f64],
    batch_stats: bool,
) -> BnBackward {
    let (n, c, s) = channel_view(shape);
    let count = (n * s) as f64;
    let mut dx = vec![0.0; gout.len()];
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for ch in 0..c {
        let mut sum_dy = 0.0;
        let mut sum_dy_xhat = 0.0;
        for b in 0..n {
            let base = (b * c + ch) * s;
            for i in base..base + s {
                sum_dy += gout[i];
                sum_dy_xhat += gout[i] * xhat[i];
            }
        }
        dgamma[ch] = sum_dy_xhat;
        dbeta[ch] = sum_dy;
        let gk = gamma[ch] * inv_std[ch];
        for b in 0..n {
            let base = (b * c + ch) * s;
            for i in base..base + s {
                dx[i] = if batch_stats {
                    gk * (gout[i] - sum_dy / count - xhat[i] * sum_dy_xhat / count)
                } else {
                    gk * gout[i]
                };
            }
        }
    }
    BnBackward { dx, dgamma, dbeta }
}
