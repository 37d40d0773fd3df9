//! Zero-padded ("same") 2-D convolution by im2col + GEMM.
//!
//! Shapes are per image: activations `[channels, height, width]`, weights
//! `[out, in, k, k]`, all row-major. The operation is cross-correlation, as in
//! every mainstream deep-learning framework.

/// `C = alpha·op(A)·op(B) + beta·C` for row-major operands, with optional
/// transposition expressed through strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_trans { (1, m) } else { (k, 1) };
    let (rsb, csb) = if b_trans { (1, k) } else { (n, 1) };
    // SAFETY: bounds asserted above; strides describe exactly the m×k, k×n and
    // m×n row-major (or transposed) views of the slices.
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
            n as isize,
            1,
        );
    }
}

/// Unfolds `[channels, h, w]` into `[channels·k·k, h·w]` with zero padding.
pub(crate) fn im2col(input: &[f64], channels: usize, h: usize, w: usize, k: usize) -> Vec<f64> {
    let half = k / 2;
    let hw = h * w;
    let mut col = vec![0.0; channels * k * k * hw];
    for ch in 0..channels {
        let plane = &input[ch * hw..(ch + 1) * hw];
        for ki in 0..k {
            for kj in 0..k {
                let row = &mut col[((ch * k + ki) * k + kj) * hw..][..hw];
                // Valid output rows/cols for this tap.
                let r0 = half.saturating_sub(ki);
                let r1 = (h + half).saturating_sub(ki).min(h);
                let c0 = half.saturating_sub(kj);
                let c1 = (w + half).saturating_sub(kj).min(w);
                for r in r0..r1 {
                    let sr = r + ki - half;
                    let src = &plane[sr * w..(sr + 1) * w];
                    let dst = &mut row[r * w..(r + 1) * w];
                    let sc0 = c0 + kj - half;
                    dst[c0..c1].copy_from_slice(&src[sc0..sc0 + (c1 - c0)]);
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: folds `[channels·k·k, h·w]` back, summing overlaps.
pub(crate) fn col2im(col: &[f64], channels: usize, h: usize, w: usize, k: usize) -> Vec<f64> {
    let half = k / 2;
    let hw = h * w;
    let mut out = vec![0.0; channels * hw];
    for ch in 0..channels {
        let plane = &mut out[ch * hw..(ch + 1) * hw];
        for ki in 0..k {
            for kj in 0..k {
                let row = &col[((ch * k + ki) * k + kj) * hw..][..hw];
                let r0 = half.saturating_sub(ki);
                let r1 = (h + half).saturating_sub(ki).min(h);
                let c0 = half.saturating_sub(kj);
                let c1 = (w + half).saturating_sub(kj).min(w);
                for r in r0..r1 {
                    let sr = r + ki - half;
                    let dst = &mut plane[sr * w..(sr + 1) * w];
                    let src = &row[r * w..(r + 1) * w];
                    let sc0 = c0 + kj - half;
                    for (d, s) in dst[sc0..sc0 + (c1 - c0)].iter_mut().zip(&src[c0..c1]) {
                        *d += s;
                    }
                }
            }
        }
    }
    out
}

/// Forward convolution; returns `(output [out, h·w], im2col buffer)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_forward(
    input: &[f64],
    in_ch: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    bias: &[f64],
    out_ch: usize,
    k: usize,
) -> (Vec<f64>, Vec<f64>) {
    let hw = h * w;
    let col = im2col(input, in_ch, h, w, k);
    let mut out = vec![0.0; out_ch * hw];
    for (o, &b) in bias.iter().enumerate() {
        out[o * hw..(o + 1) * hw].fill(b);
    }
    gemm(out_ch, in_ch * k * k, hw, weights, false, &col, false, 1.0, &mut out);
    (out, col)
}

/// Backward convolution. Accumulates weight and bias gradients and returns
/// the gradient with respect to the input.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    grad_out: &[f64],
    col: &[f64],
    in_ch: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    out_ch: usize,
    k: usize,
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    need_input_grad: bool,
) -> Option<Vec<f64>> {
    let hw = h * w;
    let kk = in_ch * k * k;
    // dW += dOut · colᵀ
    gemm(out_ch, hw, kk, grad_out, false, col, true, 1.0, grad_w);
    for (o, gb) in grad_b.iter_mut().enumerate() {
        *gb += crate::stats::pairwise_sum(&grad_out[o * hw..(o + 1) * hw]);
    }
    if !need_input_grad {
        return None;
    }
    // dCol = Wᵀ · dOut
    let mut grad_col = vec![0.0; kk * hw];
    gemm(kk, out_ch, hw, weights, true, grad_out, false, 0.0, &mut grad_col);
    Some(col2im(&grad_col, in_ch, h, w, k))
}
