//! Forward and vector-Jacobian kernels on `(n, c, h, w)` arrays.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, Array4, ArrayView2, ArrayView3, ArrayViewMut3, Axis};

pub(crate) fn conv_out_dim(size: usize, k: usize, stride: usize, pad: usize) -> usize {
    (size + 2 * pad - k) / stride + 1
}

/// Unfolds one `(c, h, w)` image into `(c * k * k, ho * wo)` columns.
fn im2col(x: ArrayView3<f64>, k: usize, stride: usize, pad: usize, ho: usize, wo: usize) -> Array2<f64> {
    let (c, h, w) = x.dim();
    let mut cols = Array2::<f64>::zeros((c * k * k, ho * wo));
    for ci in 0..c {
        let plane = x.index_axis(Axis(0), ci);
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let mut dst = cols.row_mut(row);
                let dst = dst.as_slice_mut().expect("row contiguous");
                for oy in 0..ho {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = plane.row(iy as usize);
                    let line = &mut dst[oy * wo..(oy + 1) * wo];
                    for (ox, d) in line.iter_mut().enumerate() {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            *d = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters columns back, accumulating into `dx`.
fn col2im(cols: &Array2<f64>, mut dx: ArrayViewMut3<f64>, k: usize, stride: usize, pad: usize, ho: usize, wo: usize) {
    let (c, h, w) = dx.dim();
    for ci in 0..c {
        let mut plane = dx.index_axis_mut(Axis(0), ci);
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let src = cols.row(row);
                let src = src.as_slice().expect("row contiguous");
                for oy in 0..ho {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let mut dst = plane.row_mut(iy as usize);
                    for ox in 0..wo {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}

fn flat_weight(w: &Array4<f64>) -> ArrayView2<'_, f64> {
    let (co, ci, k, _) = w.dim();
    w.view().into_shape_with_order((co, ci * k * k)).expect("contiguous weight")
}

/// Cross-correlation `y = w * x + b` with zero padding.
pub(crate) fn conv2d_forward(
    x: &Array4<f64>,
    w: &Array4<f64>,
    b: Option<&Array4<f64>>,
    stride: usize,
    pad: usize,
) -> Array4<f64> {
    let (n, _, h, wd) = x.dim();
    let (co, _, k, _) = w.dim();
    let (ho, wo) = (conv_out_dim(h, k, stride, pad), conv_out_dim(wd, k, stride, pad));
    let wf = flat_weight(w);
    let mut y = Array4::<f64>::zeros((n, co, ho, wo));
    for bi in 0..n {
        let cols = im2col(x.index_axis(Axis(0), bi), k, stride, pad, ho, wo);
        let mut out = y.index_axis_mut(Axis(0), bi);
        let mut out2 = out.view_mut().into_shape_with_order((co, ho * wo)).expect("contiguous");
        general_mat_mul(1.0, &wf, &cols, 0.0, &mut out2);
        if let Some(b) = b {
            for o in 0..co {
                let bv = b[[0, o, 0, 0]];
                out.index_axis_mut(Axis(0), o).mapv_inplace(|v| v + bv);
            }
        }
    }
    y
}

/// Returns `(dx, dw, db)` for [`conv2d_forward`].
pub(crate) fn conv2d_backward(
    x: &Array4<f64>,
    w: &Array4<f64>,
    dy: &Array4<f64>,
    stride: usize,
    pad: usize,
    need_dx: bool,
) -> (Option<Array4<f64>>, Array4<f64>, Array4<f64>) {
    let (n, ci, h, wd) = x.dim();
    let (co, _, k, _) = w.dim();
    let (_, _, ho, wo) = dy.dim();
    let wf = flat_weight(w);
    let mut dw = Array4::<f64>::zeros(w.dim());
    let mut db = Array4::<f64>::zeros((1, co, 1, 1));
    let mut dx = need_dx.then(|| Array4::<f64>::zeros((n, ci, h, wd)));
    let mut dcols = Array2::<f64>::zeros((ci * k * k, ho * wo));
    for bi in 0..n {
        let cols = im2col(x.index_axis(Axis(0), bi), k, stride, pad, ho, wo);
        let g = dy.index_axis(Axis(0), bi);
        let g2 = g.into_shape_with_order((co, ho * wo)).expect("contiguous");
        {
            let mut dwf = dw.view_mut().into_shape_with_order((co, ci * k * k)).expect("contiguous");
            general_mat_mul(1.0, &g2, &cols.t(), 1.0, &mut dwf);
        }
        for o in 0..co {
            db[[0, o, 0, 0]] += g2.row(o).sum();
        }
        if let Some(dx) = dx.as_mut() {
            general_mat_mul(1.0, &wf.t(), &g2, 0.0, &mut dcols);
            col2im(&dcols, dx.index_axis_mut(Axis(0), bi), k, stride, pad, ho, wo);
        }
    }
    (dx, dw, db)
}

/// Transposed convolution with a 2x2 kernel and stride 2; doubles `h` and `w`.
/// Weight layout `(c_in, c_out, 2, 2)`.
pub(crate) fn conv_t2_forward(x: &Array4<f64>, w: &Array4<f64>, b: Option<&Array4<f64>>) -> Array4<f64> {
    let (n, ci, h, wd) = x.dim();
    let co = w.dim().1;
    let wf = w.view().into_shape_with_order((ci, co * 4)).expect("contiguous");
    let mut y = Array4::<f64>::zeros((n, co, 2 * h, 2 * wd));
    let mut m = Array2::<f64>::zeros((co * 4, h * wd));
    for bi in 0..n {
        let xb = x.index_axis(Axis(0), bi);
        let xf = xb.into_shape_with_order((ci, h * wd)).expect("contiguous");
        general_mat_mul(1.0, &wf.t(), &xf, 0.0, &mut m);
        for o in 0..co {
            let bv = b.map_or(0.0, |b| b[[0, o, 0, 0]]);
            for a in 0..2 {
                for c in 0..2 {
                    let row = m.row(o * 4 + a * 2 + c);
                    let mut dst = y.slice_mut(s![bi, o, a..;2, c..;2]);
                    for i in 0..h {
                        for j in 0..wd {
                            dst[[i, j]] = row[i * wd + j] + bv;
                        }
                    }
                }
            }
        }
    }
    y
}

pub(crate) fn conv_t2_backward(
    x: &Array4<f64>,
    w: &Array4<f64>,
    dy: &Array4<f64>,
    need_dx: bool,
) -> (Option<Array4<f64>>, Array4<f64>, Array4<f64>) {
    let (n, ci, h, wd) = x.dim();
    let co = w.dim().1;
    let wf = w.view().into_shape_with_order((ci, co * 4)).expect("contiguous");
    let mut dw = Array4::<f64>::zeros(w.dim());
    let mut db = Array4::<f64>::zeros((1, co, 1, 1));
    let mut dx = need_dx.then(|| Array4::<f64>::zeros(x.dim()));
    let mut gm = Array2::<f64>::zeros((co * 4, h * wd));
    for bi in 0..n {
        for o in 0..co {
            for a in 0..2 {
                for c in 0..2 {
                    let src = dy.slice(s![bi, o, a..;2, c..;2]);
                    let mut row = gm.row_mut(o * 4 + a * 2 + c);
                    for i in 0..h {
                        for j in 0..wd {
                            row[i * wd + j] = src[[i, j]];
                        }
                    }
                }
            }
            db[[0, o, 0, 0]] += dy.slice(s![bi, o, .., ..]).sum();
        }
        let xb = x.index_axis(Axis(0), bi);
        let xf = xb.into_shape_with_order((ci, h * wd)).expect("contiguous");
        {
            let mut dwf = dw.view_mut().into_shape_with_order((ci, co * 4)).expect("contiguous");
            general_mat_mul(1.0, &xf, &gm.t(), 1.0, &mut dwf);
        }
        if let Some(dx) = dx.as_mut() {
            let mut d = dx.index_axis_mut(Axis(0), bi);
            let mut df = d.view_mut().into_shape_with_order((ci, h * wd)).expect("contiguous");
            general_mat_mul(1.0, &wf, &gm, 0.0, &mut df);
        }
    }
    (dx, dw, db)
}

pub(crate) const GRN_EPS: f64 = 1e-6;

/// Global response normalization, per sample:
/// `g_c = ||x_c||_2`, `n_c = g_c / (mean(g) + eps)`,
/// `out = gamma * (x * n) + beta + x`.
pub(crate) fn grn_forward(x: &Array4<f64>, gamma: &Array4<f64>, beta: &Array4<f64>) -> Array4<f64> {
    let (n, c, _, _) = x.dim();
    let mut out = x.clone();
    for bi in 0..n {
        let norms = grn_norms(x, bi);
        for ch in 0..c {
            let scale = gamma[[0, ch, 0, 0]] * norms.1[ch] + 1.0;
            let shift = beta[[0, ch, 0, 0]];
            out.slice_mut(s![bi, ch, .., ..]).mapv_inplace(|v| v * scale + shift);
        }
    }
    out
}

/// `(g, n, mean(g) + eps)` for sample `bi`.
fn grn_norms(x: &Array4<f64>, bi: usize) -> (Vec<f64>, Vec<f64>, f64) {
    let c = x.dim().1;
    let g: Vec<f64> = (0..c)
        .map(|ch| x.slice(s![bi, ch, .., ..]).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let denom = g.iter().sum::<f64>() / c as f64 + GRN_EPS;
    let nrm = g.iter().map(|gc| gc / denom).collect();
    (g, nrm, denom)
}

/// Returns `(dx, dgamma, dbeta)`.
pub(crate) fn grn_backward(
    x: &Array4<f64>,
    gamma: &Array4<f64>,
    dy: &Array4<f64>,
) -> (Array4<f64>, Array4<f64>, Array4<f64>) {
    let (n, c, _, _) = x.dim();
    let mut dx = Array4::<f64>::zeros(x.dim());
    let mut dgamma = Array4::<f64>::zeros((1, c, 1, 1));
    let mut dbeta = Array4::<f64>::zeros((1, c, 1, 1));
    for bi in 0..n {
        let (g, nrm, denom) = grn_norms(x, bi);
        // a_c = dL/dn_c
        let mut a = vec![0.0; c];
        for ch in 0..c {
            let xs = x.slice(s![bi, ch, .., ..]);
            let gs = dy.slice(s![bi, ch, .., ..]);
            let gx: f64 = xs.iter().zip(gs.iter()).map(|(p, q)| p * q).sum();
            a[ch] = gamma[[0, ch, 0, 0]] * gx;
            dgamma[[0, ch, 0, 0]] += gx * nrm[ch];
            dbeta[[0, ch, 0, 0]] += gs.sum();
        }
        let cross: f64 = a.iter().zip(&g).map(|(ac, gc)| ac * gc).sum::<f64>() / (c as f64 * denom * denom);
        for ch in 0..c {
            let dg = a[ch] / denom - cross;
            let direct = gamma[[0, ch, 0, 0]] * nrm[ch] + 1.0;
            let via_norm = if g[ch] > 0.0 { dg / g[ch] } else { 0.0 };
            let xs = x.slice(s![bi, ch, .., ..]);
            let gs = dy.slice(s![bi, ch, .., ..]);
            let mut d = dx.slice_mut(s![bi, ch, .., ..]);
            ndarray::Zip::from(&mut d)
                .and(&xs)
                .and(&gs)
                .for_each(|d, &xv, &gv| *d = gv * direct + via_norm * xv);
        }
    }
    (dx, dgamma, dbeta)
}

/// `(n, c r^2, h, w) -> (n, c, h r, w r)`; input channel `c r^2 + (y % r) r + x % r`.
pub(crate) fn pixel_shuffle4(x: &Array4<f64>, r: usize) -> Array4<f64> {
    let (n, cr, h, w) = x.dim();
    let c = cr / (r * r);
    Array4::from_shape_fn((n, c, h * r, w * r), |(b, ch, y, xx)| {
        x[[b, ch * r * r + (y % r) * r + xx % r, y / r, xx / r]]
    })
}

pub(crate) fn pixel_unshuffle4(x: &Array4<f64>, r: usize) -> Array4<f64> {
    let (n, c, h, w) = x.dim();
    Array4::from_shape_fn((n, c * r * r, h / r, w / r), |(b, ch, i, j)| {
        let (base, off) = (ch / (r * r), ch % (r * r));
        x[[b, base, i * r + off / r, j * r + off % r]]
    })
}
