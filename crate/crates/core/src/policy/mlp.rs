//! Two-hidden-layer tanh MLP with hand-written reverse pass.
//!
//! Parameter layout (flat, in this order): `w1[in][hidden]`, `b1[hidden]`,
//! `w2[hidden][hidden]` (row = output unit), `b2[hidden]`,
//! `w3[out][hidden]`, `b3[out]`. The first layer is stored input-major so
//! one-hot inputs touch contiguous rows only.

use rand::Rng as _;

use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpShape {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl MlpShape {
    pub fn num_params(&self) -> usize {
        let (i, h, o) = (self.input, self.hidden, self.output);
        i * h + h + h * h + h + o * h + o
    }

    fn offsets(&self) -> [usize; 6] {
        let (i, h, o) = (self.input, self.hidden, self.output);
        let w1 = 0;
        let b1 = w1 + i * h;
        let w2 = b1 + h;
        let b2 = w2 + h * h;
        let w3 = b2 + h;
        let b3 = w3 + o * h;
        debug_assert_eq!(b3 + o, self.num_params());
        [w1, b1, w2, b2, w3, b3]
    }
}

/// Hidden activations kept for the reverse pass.
#[derive(Debug, Clone)]
pub struct Activations {
    h1: Vec<f64>,
    h2: Vec<f64>,
}

pub fn init_params(shape: MlpShape, scale: f64, rng: &mut Rng) -> Vec<f64> {
    (0..shape.num_params()).map(|_| rng.gen_range(-scale..=scale)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for k in 0..4 {
            acc[k] += a[4 * c + k] * b[4 * c + k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Hidden activations for input `x`.
pub fn hidden(shape: MlpShape, params: &[f64], x: &[f64]) -> Activations {
    let [w1, b1, w2, b2, _, _] = shape.offsets();
    let h = shape.hidden;
    let mut z1 = params[b1..b1 + h].to_vec();
    for (j, &xj) in x.iter().enumerate() {
        if xj != 0.0 {
            axpy(xj, &params[w1 + j * h..w1 + (j + 1) * h], &mut z1);
        }
    }
    let h1: Vec<f64> = z1.into_iter().map(f64::tanh).collect();
    let h2: Vec<f64> =
        (0..h).map(|r| (params[b2 + r] + dot(&params[w2 + r * h..w2 + (r + 1) * h], &h1)).tanh()).collect();
    Activations { h1, h2 }
}

/// Output units `rows` given hidden activations.
pub fn outputs(shape: MlpShape, params: &[f64], act: &Activations, rows: &[usize]) -> Vec<f64> {
    let [_, _, _, _, w3, b3] = shape.offsets();
    let h = shape.hidden;
    rows.iter().map(|&o| params[b3 + o] + dot(&params[w3 + o * h..w3 + (o + 1) * h], &act.h2)).collect()
}

/// Accumulates `d(loss)/d(params)` into `grad` given upstream gradients
/// `dout[k]` on output unit `rows[k]`.
pub fn backward(
    shape: MlpShape,
    params: &[f64],
    x: &[f64],
    act: &Activations,
    rows: &[usize],
    dout: &[f64],
    grad: &mut [f64],
) {
    let [w1, b1, w2, b2, w3, b3] = shape.offsets();
    let h = shape.hidden;
    let mut dh2 = vec![0.0; h];
    for (&o, &d) in rows.iter().zip(dout) {
        if d == 0.0 {
            continue;
        }
        grad[b3 + o] += d;
        axpy(d, &act.h2, &mut grad[w3 + o * h..w3 + (o + 1) * h]);
        axpy(d, &params[w3 + o * h..w3 + (o + 1) * h], &mut dh2);
    }
    let dz2: Vec<f64> = dh2.iter().zip(&act.h2).map(|(d, a)| d * (1.0 - a * a)).collect();
    let mut dh1 = vec![0.0; h];
    for (r, &d) in dz2.iter().enumerate() {
        grad[b2 + r] += d;
        if d != 0.0 {
            axpy(d, &act.h1, &mut grad[w2 + r * h..w2 + (r + 1) * h]);
            axpy(d, &params[w2 + r * h..w2 + (r + 1) * h], &mut dh1);
        }
    }
    let dz1: Vec<f64> = dh1.iter().zip(&act.h1).map(|(d, a)| d * (1.0 - a * a)).collect();
    axpy(1.0, &dz1, &mut grad[b1..b1 + h]);
    for (j, &xj) in x.iter().enumerate() {
        if xj != 0.0 {
            axpy(xj, &dz1, &mut grad[w1 + j * h..w1 + (j + 1) * h]);
        }
    }
}
