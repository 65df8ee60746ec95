//! Dense kernels with hand-derived backward passes. Vectors are rows:
//! a layer computes `x · W + b` with `W` stored input-major.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2};

use super::NeuralError;

/// Dot product with eight independent accumulators so the loop vectorizes.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

fn axpy(k: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += k * xi;
    }
}

/// `out += x · W`.
pub fn vm_acc(x: &[f64], w: ArrayView2<f64>, out: &mut [f64]) {
    debug_assert_eq!(x.len(), w.nrows());
    let w = w.as_slice().expect("row-major weights");
    let cols = out.len();
    for (i, &xi) in x.iter().enumerate() {
        if xi != 0.0 {
            axpy(xi, &w[i * cols..(i + 1) * cols], out);
        }
    }
}

/// `out += W · x`, i.e. `x · Wᵀ`.
pub fn mv_acc(w: ArrayView2<f64>, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(x.len(), w.ncols());
    let ws = w.as_slice().expect("row-major weights");
    let cols = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o += dot(&ws[i * cols..(i + 1) * cols], x);
    }
}

/// `c += aᵀ · b`.
pub fn gemm_tn_acc(a: ArrayView2<f64>, b: ArrayView2<f64>, c: &mut ArrayViewMut2<f64>) {
    general_mat_mul(1.0, &a.t(), &b, 1.0, c);
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Numerically stable softmax in place.
pub fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        z += *x;
    }
    for x in v.iter_mut() {
        *x /= z;
    }
}

pub fn log_softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    v.iter().map(|x| x - lse).collect()
}

/// First index of the maximum.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Activations of one LSTM step, gate order input, forget, cell, output.
#[derive(Debug, Clone)]
pub struct LstmStep {
    pub gates: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

/// One LSTM step given the pre-activation `z = x·Wx + h_prev·Wh + b`.
pub fn lstm_step(mut z: Vec<f64>, c_prev: &[f64]) -> LstmStep {
    let hd = c_prev.len();
    debug_assert_eq!(z.len(), 4 * hd);
    for (k, v) in z.iter_mut().enumerate() {
        *v = if k / hd == 2 { v.tanh() } else { sigmoid(*v) };
    }
    let mut c = vec![0.0; hd];
    let mut tanh_c = vec![0.0; hd];
    let mut h = vec![0.0; hd];
    for j in 0..hd {
        let (i, f, g, o) = (z[j], z[hd + j], z[2 * hd + j], z[3 * hd + j]);
        c[j] = f * c_prev[j] + i * g;
        tanh_c[j] = c[j].tanh();
        h[j] = o * tanh_c[j];
    }
    LstmStep { gates: z, c, tanh_c, h }
}

/// Backward through one step: returns the pre-activation gradient `dz` and
/// the gradient for the previous cell.
pub fn lstm_step_back(s: &LstmStep, c_prev: &[f64], dh: &[f64], dc: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let hd = c_prev.len();
    let mut dz = vec![0.0; 4 * hd];
    let mut dc_prev = vec![0.0; hd];
    for j in 0..hd {
        let (i, f, g, o) = (s.gates[j], s.gates[hd + j], s.gates[2 * hd + j], s.gates[3 * hd + j]);
        let tc = s.tanh_c[j];
        let dct = dc[j] + dh[j] * o * (1.0 - tc * tc);
        dz[j] = dct * g * i * (1.0 - i);
        dz[hd + j] = dct * c_prev[j] * f * (1.0 - f);
        dz[2 * hd + j] = dct * i * (1.0 - g * g);
        dz[3 * hd + j] = dh[j] * tc * o * (1.0 - o);
        dc_prev[j] = dct * f;
    }
    (dz, dc_prev)
}

/// Dot-product attention of `query` over the rows of `states`. Returns the
/// context vector and the attention weights.
pub fn attend(states: ArrayView2<f64>, query: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NeuralError> {
    if states.ncols() != query.len() || states.nrows() == 0 {
        return Err(NeuralError::DimensionMismatch {
            what: "attention query",
            expected: states.ncols(),
            got: query.len(),
        });
    }
    Ok(attend_unchecked(states, query))
}

pub(crate) fn attend_unchecked(states: ArrayView2<f64>, query: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut w = vec![0.0; states.nrows()];
    mv_acc(states, query, &mut w);
    softmax_in_place(&mut w);
    let mut ctx = vec![0.0; states.ncols()];
    vm_acc(&w, states, &mut ctx);
    (ctx, w)
}

/// Backward through attention given the context gradient. Returns the
/// score gradient `ds` and the query gradient; the state gradient is
/// `outer(weights, d_ctx) + outer(ds, query)`, which callers batch.
pub fn attend_back(states: ArrayView2<f64>, weights: &[f64], d_ctx: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut dw = vec![0.0; weights.len()];
    mv_acc(states, d_ctx, &mut dw);
    let mean: f64 = weights.iter().zip(&dw).map(|(a, b)| a * b).sum();
    let ds: Vec<f64> = weights.iter().zip(&dw).map(|(a, g)| a * (g - mean)).collect();
    let mut dq = vec![0.0; states.ncols()];
    vm_acc(&ds, states, &mut dq);
    (ds, dq)
}

/// Per-token char-CNN state kept for the backward pass.
#[derive(Debug, Clone)]
pub struct CnnTrace {
    /// Character ids after right-padding, per width.
    pub padded: Vec<Vec<usize>>,
    pub ngrams: Vec<Array2<f64>>,
    pub argmax: Vec<Vec<usize>>,
}

/// Convolves each width's filter bank over the character n-grams of one
/// token and max-pools every filter over positions. `banks[k]` is the
/// `(width·dim × filters)` weight and `(1 × filters)` bias for `widths[k]`.
pub fn char_cnn_token(
    chars: &[usize],
    table: ArrayView2<f64>,
    widths: &[usize],
    banks: &[(ArrayView2<f64>, ArrayView2<f64>)],
    pad: usize,
) -> (Vec<f64>, CnnTrace) {
    let dim = table.ncols();
    let mut out = Vec::new();
    let mut trace = CnnTrace {
        padded: Vec::new(),
        ngrams: Vec::new(),
        argmax: Vec::new(),
    };
    for (&w, (weight, bias)) in widths.iter().zip(banks) {
        let mut ids = chars.to_vec();
        while ids.len() < w {
            ids.push(pad);
        }
        let positions = ids.len() - w + 1;
        let mut ngrams = Array2::<f64>::zeros((positions, w * dim));
        for p in 0..positions {
            for j in 0..w {
                ngrams
                    .slice_mut(ndarray::s![p, j * dim..(j + 1) * dim])
                    .assign(&table.row(ids[p + j]));
            }
        }
        let mut feats = ngrams.dot(weight);
        feats += bias;
        let nf = weight.ncols();
        let mut arg = vec![0usize; nf];
        for (k, slot) in arg.iter_mut().enumerate() {
            let col = feats.column(k);
            let mut best = 0;
            for p in 1..positions {
                if col[p] > col[best] {
                    best = p;
                }
            }
            *slot = best;
            out.push(col[best]);
        }
        trace.padded.push(ids);
        trace.ngrams.push(ngrams);
        trace.argmax.push(arg);
    }
    (out, trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn kernels_agree_with_ndarray() {
        let w = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let mut out = vec![0.0; 3];
        vm_acc(&[1.0, -1.0], w.view(), &mut out);
        assert_eq!(out, vec![-3.0, -3.0, -3.0]);
        let mut out2 = vec![0.0; 2];
        mv_acc(w.view(), &[1.0, 0.0, 1.0], &mut out2);
        assert_eq!(out2, vec![4.0, 10.0]);
        let a: Vec<f64> = (0..19).map(|i| i as f64).collect();
        assert_eq!(dot(&a, &a), (0..19).map(|i| (i * i) as f64).sum::<f64>());
    }

    #[test]
    fn identical_rows_give_uniform_weights() {
        let states = array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0], [1.0, 2.0]];
        let (ctx, w) = attend(states.view(), &[0.3, -0.7]).unwrap();
        assert!(w.iter().all(|x| (x - 0.25).abs() < 1e-12));
        assert!((ctx[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_row_gets_all_weight() {
        let states = array![[0.5, -1.5, 2.0]];
        let (ctx, w) = attend(states.view(), &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(w, vec![1.0]);
        assert_eq!(ctx, vec![0.5, -1.5, 2.0]);
    }

    #[test]
    fn orthogonal_query_is_uniform() {
        let states = array![[1.0, 0.0], [2.0, 0.0], [-3.0, 0.0]];
        let (_, w) = attend(states.view(), &[0.0, 1.0]).unwrap();
        assert!(w.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn attention_dimension_checked() {
        let states = array![[1.0, 0.0]];
        assert!(matches!(
            attend(states.view(), &[1.0]),
            Err(NeuralError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cnn_counts_ngrams_and_pads() {
        let table = Array2::from_shape_fn((6, 2), |(i, j)| (i * 2 + j) as f64 * 0.1);
        let w2 = Array2::from_elem((4, 3), 0.1);
        let b2 = Array2::zeros((1, 3));
        let w3 = Array2::from_elem((6, 3), 0.1);
        let b3 = Array2::zeros((1, 3));
        let banks = [(w2.view(), b2.view()), (w3.view(), b3.view())];
        // "have" as four character ids: three bigrams
        let (out, trace) = char_cnn_token(&[2, 1, 3, 4], table.view(), &[2, 3], &banks, 0);
        assert_eq!(out.len(), 6);
        assert_eq!(trace.ngrams[0].nrows(), 3);
        assert_eq!(trace.ngrams[1].nrows(), 2);
        // a one-character token is padded up to each width
        let (_, t) = char_cnn_token(&[5], table.view(), &[2, 3], &banks, 0);
        assert_eq!(t.padded[1], vec![5, 0, 0]);
        assert_eq!(t.ngrams[1].nrows(), 1);
    }

    #[test]
    fn zero_filters_give_zero_features() {
        let table = Array2::from_elem((4, 3), 0.7);
        let w = Array2::zeros((3, 5));
        let b = Array2::zeros((1, 5));
        let (out, _) = char_cnn_token(&[1, 2, 3], table.view(), &[1], &[(w.view(), b.view())], 0);
        assert_eq!(out, vec![0.0; 5]);
    }

    #[test]
    fn softmax_and_log_softmax_agree() {
        let z = [1.0, 2.0, -3.0, 1000.0];
        let mut p = z.to_vec();
        softmax_in_place(&mut p);
        let lp = log_softmax(&z);
        for (a, b) in p.iter().zip(&lp) {
            assert!((a.ln() - b).abs() < 1e-9 || *a < 1e-300);
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }
}
