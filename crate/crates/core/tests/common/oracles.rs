//! Brute-force reference implementations written with plain loops over
//! `Vec<f64>`, independent of the tape.

#![allow(dead_code)]

pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(data: &[f64], rows: usize, cols: usize) -> Mat {
    (0..rows).map(|r| data[r * cols..(r + 1) * cols].to_vec()).collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Zero-padded sliding-window convolution: `weight` is `[out][in][k]`.
pub fn conv_same(x: &Mat, weight: &[Mat], bias: &[f64]) -> Mat {
    let t_len = x.len();
    let c_in = x[0].len();
    let k_len = weight[0][0].len();
    let pad = k_len / 2;
    let mut padded = vec![vec![0.0; c_in]; t_len + 2 * pad];
    for (i, row) in x.iter().enumerate() {
        padded[i + pad] = row.clone();
    }
    let mut out = vec![vec![0.0; weight.len()]; t_len];
    for t in 0..t_len {
        for (o, w_o) in weight.iter().enumerate() {
            let mut acc = bias[o];
            for (c, w_oc) in w_o.iter().enumerate() {
                for (k, &w) in w_oc.iter().enumerate() {
                    acc += w * padded[t + k][c];
                }
            }
            out[t][o] = acc;
        }
    }
    out
}

/// Concatenation of several [`conv_same`] branches along the feature axis.
pub fn conv_bank(x: &Mat, branches: &[(Vec<Mat>, Vec<f64>)]) -> Mat {
    let outs: Vec<Mat> = branches.iter().map(|(w, b)| conv_same(x, w, b)).collect();
    (0..x.len())
        .map(|t| outs.iter().flat_map(|o| o[t].iter().copied()).collect())
        .collect()
}

/// Step-by-step LSTM with per-gate scalar arithmetic. `u` is `[4H][in]`,
/// `w` is `[4H][H]`, gate order input/forget/cell/output.
pub fn lstm(x: &Mat, u: &Mat, w: &Mat, b: &[f64]) -> Mat {
    let h_dim = w[0].len();
    let mut h = vec![0.0; h_dim];
    let mut c = vec![0.0; h_dim];
    let mut out = Vec::with_capacity(x.len());
    for xt in x {
        let mut pre = vec![0.0; 4 * h_dim];
        for (g, p) in pre.iter_mut().enumerate() {
            let mut acc = b[g];
            for (j, &xv) in xt.iter().enumerate() {
                acc += u[g][j] * xv;
            }
            for (j, &hv) in h.iter().enumerate() {
                acc += w[g][j] * hv;
            }
            *p = acc;
        }
        let mut h_new = vec![0.0; h_dim];
        for j in 0..h_dim {
            let i_g = sigmoid(pre[j]);
            let f_g = sigmoid(pre[h_dim + j]);
            let g_g = pre[2 * h_dim + j].tanh();
            let o_g = sigmoid(pre[3 * h_dim + j]);
            c[j] = f_g * c[j] + i_g * g_g;
            h_new[j] = o_g * c[j].tanh();
        }
        h = h_new;
        out.push(h.clone());
    }
    out
}

pub fn blstm(x: &Mat, fwd: (&Mat, &Mat, &[f64]), bwd: (&Mat, &Mat, &[f64])) -> Mat {
    let s = lstm(x, fwd.0, fwd.1, fwd.2);
    let rev: Mat = x.iter().rev().cloned().collect();
    let mut s_back = lstm(&rev, bwd.0, bwd.1, bwd.2);
    s_back.reverse();
    s.into_iter()
        .zip(s_back)
        .map(|(mut a, b)| {
            a.extend(b);
            a
        })
        .collect()
}

/// Per-channel root mean squared error by direct summation.
pub fn rmse(pred: &Mat, target: &Mat) -> Vec<f64> {
    let cols = pred[0].len();
    (0..cols)
        .map(|c| {
            let mut s = 0.0;
            for (p, t) in pred.iter().zip(target) {
                s += (p[c] - t[c]) * (p[c] - t[c]);
            }
            (s / pred.len() as f64).sqrt()
        })
        .collect()
}

/// Per-channel Pearson correlation via the textbook two-pass formula.
pub fn pcc(pred: &Mat, target: &Mat) -> Vec<f64> {
    let cols = pred[0].len();
    let n = pred.len() as f64;
    (0..cols)
        .map(|c| {
            let mp = pred.iter().map(|r| r[c]).sum::<f64>() / n;
            let mt = target.iter().map(|r| r[c]).sum::<f64>() / n;
            let mut sxy = 0.0;
            let mut sxx = 0.0;
            let mut syy = 0.0;
            for (p, t) in pred.iter().zip(target) {
                sxy += (p[c] - mp) * (t[c] - mt);
                sxx += (p[c] - mp) * (p[c] - mp);
                syy += (t[c] - mt) * (t[c] - mt);
            }
            sxy / (sxx * syy).sqrt()
        })
        .collect()
}
