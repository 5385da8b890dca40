//! Raw numeric kernels behind the graph ops: GEMM, im2col convolution,
//! nearest upsampling and per-sample depthwise convolution.

/// `c = alpha * a·b + beta * c` over strided row/column layouts.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (isize, isize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let span = |rows: usize, cols: usize, rs: isize, cs: isize| {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows as isize - 1) * rs + (cols as isize - 1) * cs + 1
        }
    };
    assert!(a.len() as isize >= span(m, k, rsa, csa));
    assert!(b.len() as isize >= span(k, n, rsb, csb));
    assert!(c.len() as isize >= span(m, n, rsc, csc));
    // SAFETY: the asserts above bound every strided access inside the slices,
    // all strides are non-negative, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub h_out: usize,
    pub w_out: usize,
}

impl ConvGeom {
    pub fn new(c_in: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize) -> Self {
        assert!(h + 2 * pad >= k && w + 2 * pad >= k, "kernel larger than padded input");
        Self {
            c_in,
            h,
            w,
            k,
            stride,
            pad,
            h_out: (h + 2 * pad - k) / stride + 1,
            w_out: (w + 2 * pad - k) / stride + 1,
        }
    }

    pub fn col_rows(&self) -> usize {
        self.c_in * self.k * self.k
    }

    pub fn col_cols(&self) -> usize {
        self.h_out * self.w_out
    }
}

/// Unfolds one `[c, h, w]` image into `[c*k*k, h_out*w_out]` patch columns.
pub(crate) fn im2col(x: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let hw_out = g.col_cols();
    for c in 0..g.c_in {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let dst = &mut cols[row * hw_out..(row + 1) * hw_out];
                for oi in 0..g.h_out {
                    let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                    let line = &mut dst[oi * g.w_out..(oi + 1) * g.w_out];
                    if ii < 0 || ii >= g.h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[ii as usize * g.w..(ii as usize + 1) * g.w];
                    for (oj, v) in line.iter_mut().enumerate() {
                        let jj = (oj * g.stride + kj) as isize - g.pad as isize;
                        *v = if jj < 0 || jj >= g.w as isize {
                            0.0
                        } else {
                            src[jj as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch columns back, accumulating into `x`.
pub(crate) fn col2im(cols: &[f64], g: &ConvGeom, x: &mut [f64]) {
    let hw_out = g.col_cols();
    for c in 0..g.c_in {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let src = &cols[row * hw_out..(row + 1) * hw_out];
                for oi in 0..g.h_out {
                    let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                    if ii < 0 || ii >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[ii as usize * g.w..(ii as usize + 1) * g.w];
                    for oj in 0..g.w_out {
                        let jj = (oj * g.stride + kj) as isize - g.pad as isize;
                        if jj >= 0 && jj < g.w as isize {
                            dst[jj as usize] += src[oi * g.w_out + oj];
                        }
                    }
                }
            }
        }
    }
}

/// Batched 2-d convolution. `x: [n, c_in, h, w]`, `weight: [c_out, c_in, k, k]`.
pub(crate) fn conv2d_forward(
    x: &[f64],
    n: usize,
    g: &ConvGeom,
    weight: &[f64],
    bias: &[f64],
    c_out: usize,
) -> Vec<f64> {
    let (rows, hw) = (g.col_rows(), g.col_cols());
    let in_sz = g.c_in * g.h * g.w;
    let out_sz = c_out * hw;
    let mut out = vec![0.0; n * out_sz];
    let mut cols = vec![0.0; rows * hw];
    for s in 0..n {
        im2col(&x[s * in_sz..(s + 1) * in_sz], g, &mut cols);
        let o = &mut out[s * out_sz..(s + 1) * out_sz];
        for (co, chunk) in o.chunks_mut(hw).enumerate() {
            chunk.fill(bias[co]);
        }
        gemm(
            c_out,
            rows,
            hw,
            1.0,
            weight,
            (rows as isize, 1),
            &cols,
            (hw as isize, 1),
            1.0,
            o,
            (hw as isize, 1),
        );
    }
    out
}

/// Gradients of [`conv2d_forward`]; `None` slots are skipped.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward(
    x: &[f64],
    n: usize,
    g: &ConvGeom,
    weight: &[f64],
    c_out: usize,
    dout: &[f64],
    mut dx: Option<&mut [f64]>,
    mut dw: Option<&mut [f64]>,
    mut db: Option<&mut [f64]>,
) {
    let (rows, hw) = (g.col_rows(), g.col_cols());
    let in_sz = g.c_in * g.h * g.w;
    let out_sz = c_out * hw;
    let mut cols = vec![0.0; rows * hw];
    let mut dcols = vec![0.0; rows * hw];
    for s in 0..n {
        let dy = &dout[s * out_sz..(s + 1) * out_sz];
        if let Some(db) = db.as_deref_mut() {
            for (co, chunk) in dy.chunks(hw).enumerate() {
                db[co] += chunk.iter().sum::<f64>();
            }
        }
        if let Some(dw) = dw.as_deref_mut() {
            im2col(&x[s * in_sz..(s + 1) * in_sz], g, &mut cols);
            // dW += dY · colsᵀ
            gemm(
                c_out,
                hw,
                rows,
                1.0,
                dy,
                (hw as isize, 1),
                &cols,
                (1, hw as isize),
                1.0,
                dw,
                (rows as isize, 1),
            );
        }
        if let Some(dx) = dx.as_deref_mut() {
            // dcols = Wᵀ · dY
            gemm(
                rows,
                c_out,
                hw,
                1.0,
                weight,
                (1, rows as isize),
                dy,
                (hw as isize, 1),
                0.0,
                &mut dcols,
                (hw as isize, 1),
            );
            col2im(&dcols, g, &mut dx[s * in_sz..(s + 1) * in_sz]);
        }
    }
}

pub(crate) fn upsample2x(x: &[f64], planes: usize, h: usize, w: usize) -> Vec<f64> {
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = vec![0.0; planes * h2 * w2];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * h2 * w2..(p + 1) * h2 * w2];
        for i in 0..h2 {
            for j in 0..w2 {
                dst[i * w2 + j] = src[(i / 2) * w + j / 2];
            }
        }
    }
    out
}

pub(crate) fn upsample2x_backward(dout: &[f64], planes: usize, h: usize, w: usize) -> Vec<f64> {
    let (h2, w2) = (2 * h, 2 * w);
    let mut dx = vec![0.0; planes * h * w];
    for p in 0..planes {
        let src = &dout[p * h2 * w2..(p + 1) * h2 * w2];
        let dst = &mut dx[p * h * w..(p + 1) * h * w];
        for i in 0..h2 {
            for j in 0..w2 {
                dst[(i / 2) * w + j / 2] += src[i * w2 + j];
            }
        }
    }
    dx
}

/// Per-sample grouped depthwise 3×3 convolution (zero padding 1). Channel `c`
/// of sample `s` is filtered by kernel `c / (channels / groups)` of sample `s`.
pub(crate) fn dyn_depthwise(
    x: &[f64],
    (n, ch, h, w): (usize, usize, usize, usize),
    kernels: &[f64],
    groups: usize,
) -> Vec<f64> {
    let per_group = ch / groups;
    let mut out = vec![0.0; x.len()];
    for s in 0..n {
        for c in 0..ch {
            let kern = &kernels[(s * groups + c / per_group) * 9..][..9];
            let base = (s * ch + c) * h * w;
            let src = &x[base..base + h * w];
            let dst = &mut out[base..base + h * w];
            for i in 0..h {
                for j in 0..w {
                    let mut acc = 0.0;
                    for di in 0..3 {
                        let ii = i as isize + di as isize - 1;
                        if ii < 0 || ii >= h as isize {
                            continue;
                        }
                        for dj in 0..3 {
                            let jj = j as isize + dj as isize - 1;
                            if jj >= 0 && jj < w as isize {
                                acc += kern[di * 3 + dj] * src[ii as usize * w + jj as usize];
                            }
                        }
                    }
                    dst[i * w + j] = acc;
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn dyn_depthwise_backward(
    x: &[f64],
    (n, ch, h, w): (usize, usize, usize, usize),
    kernels: &[f64],
    groups: usize,
    dout: &[f64],
    mut dx: Option<&mut [f64]>,
    mut dk: Option<&mut [f64]>,
) {
    let per_group = ch / groups;
    for s in 0..n {
        for c in 0..ch {
            let kidx = (s * groups + c / per_group) * 9;
            let base = (s * ch + c) * h * w;
            for i in 0..h {
                for j in 0..w {
                    let g = dout[base + i * w + j];
                    if g == 0.0 {
                        continue;
                    }
                    for di in 0..3 {
                        let ii = i as isize + di as isize - 1;
                        if ii < 0 || ii >= h as isize {
                            continue;
                        }
                        for dj in 0..3 {
                            let jj = j as isize + dj as isize - 1;
                            if jj < 0 || jj >= w as isize {
                                continue;
                            }
                            let src = base + ii as usize * w + jj as usize;
                            if let Some(dx) = dx.as_deref_mut() {
                                dx[src] += kernels[kidx + di * 3 + dj] * g;
                            }
                            if let Some(dk) = dk.as_deref_mut() {
                                dk[kidx + di * 3 + dj] += x[src] * g;
                            }
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(
        x: &[f64],
        g: &ConvGeom,
        weight: &[f64],
        bias: &[f64],
        c_out: usize,
    ) -> Vec<f64> {
        let mut out = vec![0.0; c_out * g.h_out * g.w_out];
        for co in 0..c_out {
            for oi in 0..g.h_out {
                for oj in 0..g.w_out {
                    let mut acc = bias[co];
                    for c in 0..g.c_in {
                        for ki in 0..g.k {
                            for kj in 0..g.k {
                                let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                                let jj = (oj * g.stride + kj) as isize - g.pad as isize;
                                if ii >= 0 && jj >= 0 && (ii as usize) < g.h && (jj as usize) < g.w {
                                    acc += weight[((co * g.c_in + c) * g.k + ki) * g.k + kj]
                                        * x[(c * g.h + ii as usize) * g.w + jj as usize];
                                }
                            }
                        }
                    }
                    out[(co * g.h_out + oi) * g.w_out + oj] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn im2col_conv_matches_direct_loops() {
        for &(k, stride, pad) in &[(3, 1, 1), (4, 2, 1), (3, 2, 0), (1, 1, 0)] {
            let g = ConvGeom::new(3, 9, 8, k, stride, pad);
            let x: Vec<f64> = (0..3 * 9 * 8).map(|i| ((i * 37 % 17) as f64 - 8.0) / 7.0).collect();
            let c_out = 5;
            let wlen = c_out * g.col_rows();
            let weight: Vec<f64> = (0..wlen).map(|i| ((i * 13 % 11) as f64 - 5.0) / 9.0).collect();
            let bias = vec![0.1, -0.2, 0.3, 0.0, 0.5];
            let fast = conv2d_forward(&x, 1, &g, &weight, &bias, c_out);
            let slow = naive_conv(&x, &g, &weight, &bias, c_out);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let g = ConvGeom::new(2, 7, 6, 3, 2, 1);
        let x: Vec<f64> = (0..2 * 7 * 6).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..g.col_rows() * g.col_cols()).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut cols = vec![0.0; y.len()];
        im2col(&x, &g, &mut cols);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; x.len()];
        col2im(&y, &g, &mut back);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
