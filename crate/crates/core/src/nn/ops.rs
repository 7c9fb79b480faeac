//! Batched kernels. Activations are `[batch, channels, height, width]`
//! (or `[batch, features]`) row-major.

/// `C ← A·B + beta·C` for an (m×k)·(k×n) product with explicit strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    if k > 0 {
        assert!(a.len() > (m - 1) * rsa + (k - 1) * csa, "gemm: A out of bounds");
        assert!(b.len() > (k - 1) * rsb + (n - 1) * csb, "gemm: B out of bounds");
    }
    assert!(c.len() > (m - 1) * rsc + (n - 1) * csc, "gemm: C out of bounds");
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

pub(crate) const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn new(in_c: usize, in_h: usize, in_w: usize, out_c: usize, k: usize, stride: usize) -> Option<Self> {
        let pad = k / 2;
        if in_h + 2 * pad < k || in_w + 2 * pad < k || stride == 0 {
            return None;
        }
        let out_h = (in_h + 2 * pad - k) / stride + 1;
        let out_w = (in_w + 2 * pad - k) / stride + 1;
        Some(ConvGeom {
            in_c,
            in_h,
            in_w,
            out_c,
            k,
            stride,
            pad,
            out_h,
            out_w,
        })
    }

    pub fn patch(&self) -> usize {
        self.in_c * self.k * self.k
    }

    pub fn in_len(&self) -> usize {
        self.in_c * self.in_h * self.in_w
    }

    pub fn out_plane(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn out_len(&self) -> usize {
        self.out_c * self.out_plane()
    }

    pub fn weight_len(&self) -> usize {
        self.out_c * self.patch()
    }
}

/// Unfolds `n` inputs into a `[patch, n·out_plane]` matrix.
fn im2col(g: &ConvGeom, n: usize, input: &[f64]) -> Vec<f64> {
    let plane = g.out_plane();
    let width = n * plane;
    let mut cols = vec![0.0; g.patch() * width];
    for b in 0..n {
        let img = &input[b * g.in_len()..(b + 1) * g.in_len()];
        for c in 0..g.in_c {
            for ky in 0..g.k {
                for kx in 0..g.k {
                    let row = (c * g.k + ky) * g.k + kx;
                    let dst = &mut cols[row * width + b * plane..row * width + (b + 1) * plane];
                    for oy in 0..g.out_h {
                        let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.in_h as isize {
                            continue;
                        }
                        let src = &img[(c * g.in_h + iy as usize) * g.in_w..][..g.in_w];
                        for ox in 0..g.out_w {
                            let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                            if ix >= 0 && ix < g.in_w as isize {
                                dst[oy * g.out_w + ox] = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`].
fn col2im(g: &ConvGeom, n: usize, cols: &[f64]) -> Vec<f64> {
    let plane = g.out_plane();
    let width = n * plane;
    let mut out = vec![0.0; n * g.in_len()];
    for b in 0..n {
        let img = &mut out[b * g.in_len()..(b + 1) * g.in_len()];
        for c in 0..g.in_c {
            for ky in 0..g.k {
                for kx in 0..g.k {
                    let row = (c * g.k + ky) * g.k + kx;
                    let src = &cols[row * width + b * plane..row * width + (b + 1) * plane];
                    for oy in 0..g.out_h {
                        let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.in_h as isize {
                            continue;
                        }
                        let dst = &mut img[(c * g.in_h + iy as usize) * g.in_w..][..g.in_w];
                        for ox in 0..g.out_w {
                            let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                            if ix >= 0 && ix < g.in_w as isize {
                                dst[ix as usize] += src[oy * g.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Returns `(cols, output)`; output is `[n, out_c, out_h, out_w]`.
pub(crate) fn conv_forward(
    g: &ConvGeom,
    n: usize,
    input: &[f64],
    w: &[f64],
    bias: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let cols = im2col(g, n, input);
    let plane = g.out_plane();
    let width = n * plane;
    let mut tmp = vec![0.0; g.out_c * width];
    gemm(
        g.out_c,
        g.patch(),
        width,
        w,
        (g.patch(), 1),
        &cols,
        (width, 1),
        0.0,
        &mut tmp,
        (width, 1),
    );
    let mut out = vec![0.0; n * g.out_len()];
    for o in 0..g.out_c {
        let bo = bias[o];
        for b in 0..n {
            let src = &tmp[o * width + b * plane..o * width + (b + 1) * plane];
            let dst = &mut out[b * g.out_len() + o * plane..b * g.out_len() + (o + 1) * plane];
            for (d, s) in dst.iter_mut().zip(src) {
                *d = s + bo;
            }
        }
    }
    (cols, out)
}

/// Accumulates weight and bias gradients; returns the input gradient when
/// `want_input` is set.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    g: &ConvGeom,
    n: usize,
    cols: &[f64],
    w: &[f64],
    dout: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    want_input: bool,
) -> Option<Vec<f64>> {
    let plane = g.out_plane();
    let width = n * plane;
    // [n, out_c, plane] → [out_c, n·plane]
    let mut d = vec![0.0; g.out_c * width];
    for b in 0..n {
        for o in 0..g.out_c {
            let src = &dout[b * g.out_len() + o * plane..b * g.out_len() + (o + 1) * plane];
            d[o * width + b * plane..o * width + (b + 1) * plane].copy_from_slice(src);
        }
    }
    for o in 0..g.out_c {
        db[o] += d[o * width..(o + 1) * width].iter().sum::<f64>();
    }
    // dW += d · colsᵀ
    gemm(
        g.out_c,
        width,
        g.patch(),
        &d,
        (width, 1),
        cols,
        (1, width),
        1.0,
        dw,
        (g.patch(), 1),
    );
    if !want_input {
        return None;
    }
    // dcols = Wᵀ · d
    let mut dcols = vec![0.0; g.patch() * width];
    gemm(
        g.patch(),
        g.out_c,
        width,
        w,
        (1, g.patch()),
        &d,
        (width, 1),
        0.0,
        &mut dcols,
        (width, 1),
    );
    Some(col2im(g, n, &dcols))
}

/// `Y = X·Wᵀ + b` with X `[n, inputs]` and W `[outputs, inputs]`.
pub(crate) fn dense_forward(
    n: usize,
    inputs: usize,
    outputs: usize,
    x: &[f64],
    w: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let mut y = vec![0.0; n * outputs];
    for row in y.chunks_mut(outputs) {
        row.copy_from_slice(bias);
    }
    gemm(n, inputs, outputs, x, (inputs, 1), w, (1, inputs), 1.0, &mut y, (outputs, 1));
    y
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_backward(
    n: usize,
    inputs: usize,
    outputs: usize,
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    want_input: bool,
) -> Option<Vec<f64>> {
    for row in dy.chunks(outputs) {
        for (g, d) in db.iter_mut().zip(row) {
            *g += d;
        }
    }
    // dW += dYᵀ · X
    gemm(outputs, n, inputs, dy, (1, outputs), x, (inputs, 1), 1.0, dw, (inputs, 1));
    if !want_input {
        return None;
    }
    let mut dx = vec![0.0; n * inputs];
    gemm(n, outputs, inputs, dy, (outputs, 1), w, (inputs, 1), 0.0, &mut dx, (inputs, 1));
    Some(dx)
}
