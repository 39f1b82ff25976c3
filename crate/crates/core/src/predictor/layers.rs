//! Dense f64 kernels: 3x3 stride-2 convolution (padding 1), linear layers, ReLU.

/// Spatial size after one strided block.
pub fn conv_out_size(n: usize) -> usize {
    n.div_ceil(2)
}

/// `input` is `c_in x n x n`, `weight` is `c_out x c_in x 3 x 3`; returns `c_out x n' x n'`.
pub fn conv_forward(input: &[f64], c_in: usize, n: usize, weight: &[f64], bias: &[f64], c_out: usize) -> Vec<f64> {
    let no = conv_out_size(n);
    let mut out = vec![0.0; c_out * no * no];
    for co in 0..c_out {
        let plane = &mut out[co * no * no..(co + 1) * no * no];
        plane.iter_mut().for_each(|v| *v = bias[co]);
        for ci in 0..c_in {
            let src = &input[ci * n * n..(ci + 1) * n * n];
            let w = &weight[(co * c_in + ci) * 9..(co * c_in + ci + 1) * 9];
            for oy in 0..no {
                for ky in 0..3 {
                    let iy = (2 * oy + ky) as isize - 1;
                    if iy < 0 || iy >= n as isize {
                        continue;
                    }
                    let row = &src[iy as usize * n..(iy as usize + 1) * n];
                    for ox in 0..no {
                        let mut acc = 0.0;
                        for kx in 0..3 {
                            let ix = (2 * ox + kx) as isize - 1;
                            if ix >= 0 && ix < n as isize {
                                acc += w[ky * 3 + kx] * row[ix as usize];
                            }
                        }
                        plane[oy * no + ox] += acc;
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight/bias gradients and returns d(input) (skipped when `need_input` is false).
#[allow(clippy::too_many_arguments)]
pub fn conv_backward(
    input: &[f64],
    c_in: usize,
    n: usize,
    weight: &[f64],
    c_out: usize,
    d_out: &[f64],
    d_weight: &mut [f64],
    d_bias: &mut [f64],
    need_input: bool,
) -> Vec<f64> {
    let no = conv_out_size(n);
    let mut d_in = if need_input { vec![0.0; c_in * n * n] } else { Vec::new() };
    for co in 0..c_out {
        let g = &d_out[co * no * no..(co + 1) * no * no];
        d_bias[co] += g.iter().sum::<f64>();
        for ci in 0..c_in {
            let src = &input[ci * n * n..(ci + 1) * n * n];
            let widx = (co * c_in + ci) * 9;
            for oy in 0..no {
                for ky in 0..3 {
                    let iy = (2 * oy + ky) as isize - 1;
                    if iy < 0 || iy >= n as isize {
                        continue;
                    }
                    let iy = iy as usize;
                    for ox in 0..no {
                        let go = g[oy * no + ox];
                        if go == 0.0 {
                            continue;
                        }
                        for kx in 0..3 {
                            let ix = (2 * ox + kx) as isize - 1;
                            if ix >= 0 && ix < n as isize {
                                let ix = ix as usize;
                                d_weight[widx + ky * 3 + kx] += go * src[iy * n + ix];
                                if need_input {
                                    d_in[ci * n * n + iy * n + ix] += go * weight[widx + ky * 3 + kx];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    d_in
}

/// y = W x + b with `weight` row-major `n_out x n_in`; `bias` may be empty.
pub fn linear_forward(x: &[f64], weight: &[f64], bias: &[f64], n_out: usize) -> Vec<f64> {
    let n_in = x.len();
    (0..n_out)
        .map(|o| {
            let row = &weight[o * n_in..(o + 1) * n_in];
            let b = if bias.is_empty() { 0.0 } else { bias[o] };
            b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        })
        .collect()
}

/// Accumulates dW (and db when non-empty); returns dx.
pub fn linear_backward(x: &[f64], weight: &[f64], d_y: &[f64], d_weight: &mut [f64], d_bias: &mut [f64]) -> Vec<f64> {
    let n_in = x.len();
    let mut d_x = vec![0.0; n_in];
    for (o, &g) in d_y.iter().enumerate() {
        if !d_bias.is_empty() {
            d_bias[o] += g;
        }
        if g == 0.0 {
            continue;
        }
        let row = &weight[o * n_in..(o + 1) * n_in];
        let d_row = &mut d_weight[o * n_in..(o + 1) * n_in];
        for i in 0..n_in {
            d_row[i] += g * x[i];
            d_x[i] += g * row[i];
        }
    }
    d_x
}

pub fn relu_inplace(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Zeroes gradient entries whose forward activation was clipped.
pub fn relu_backward(activation: &[f64], grad: &mut [f64]) {
    for (g, &a) in grad.iter_mut().zip(activation) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}
