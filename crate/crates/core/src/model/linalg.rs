//! Dense row-major kernels used by the encoder and their adjoints.

/// Row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y = W x + b` for a single row; `W` is `b.len() × x.len()`.
pub fn affine(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    b.iter()
        .enumerate()
        .map(|(o, bo)| bo + dot(&w[o * n_in..(o + 1) * n_in], x))
        .collect()
}

/// Adjoint of [`affine`]: accumulates `dW`, `db` and adds `Wᵀ dy` into `dx`.
pub fn affine_backward(x: &[f64], w: &[f64], dy: &[f64], dw: &mut [f64], db: &mut [f64], dx: &mut [f64]) {
    let n_in = x.len();
    for (o, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        db[o] += g;
        let w_row = &w[o * n_in..(o + 1) * n_in];
        let dw_row = &mut dw[o * n_in..(o + 1) * n_in];
        for i in 0..n_in {
            dw_row[i] += g * x[i];
            dx[i] += g * w_row[i];
        }
    }
}

/// Row-wise [`affine`].
pub fn linear(x: &Mat, w: &[f64], b: &[f64]) -> Mat {
    let out = b.len();
    let mut y = Mat::zeros(x.rows, out);
    for t in 0..x.rows {
        y.row_mut(t).copy_from_slice(&affine(x.row(t), w, b));
    }
    y
}

/// Row-wise [`affine_backward`], returning `dx`.
pub fn linear_backward(x: &Mat, w: &[f64], dy: &Mat, dw: &mut [f64], db: &mut [f64]) -> Mat {
    let mut dx = Mat::zeros(x.rows, x.cols);
    for t in 0..x.rows {
        let (xr, dyr) = (x.row(t), dy.row(t));
        affine_backward(xr, w, dyr, dw, db, dx.row_mut(t));
    }
    dx
}

pub const LN_EPS: f64 = 1e-5;

pub struct LnCache {
    pub xhat: Mat,
    pub inv_std: Vec<f64>,
}

pub fn layer_norm(x: &Mat, gain: &[f64], bias: &[f64]) -> (Mat, LnCache) {
    let d = x.cols as f64;
    let mut y = Mat::zeros(x.rows, x.cols);
    let mut xhat = Mat::zeros(x.rows, x.cols);
    let mut inv_std = Vec::with_capacity(x.rows);
    for t in 0..x.rows {
        let row = x.row(t);
        let mean = row.iter().sum::<f64>() / d;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        inv_std.push(inv);
        let xh = xhat.row_mut(t);
        for i in 0..x.cols {
            xh[i] = (row[i] - mean) * inv;
        }
        let yr = y.row_mut(t);
        for i in 0..x.cols {
            yr[i] = gain[i] * xh[i] + bias[i];
        }
    }
    (y, LnCache { xhat, inv_std })
}

pub fn layer_norm_backward(dy: &Mat, cache: &LnCache, gain: &[f64], dgain: &mut [f64], dbias: &mut [f64]) -> Mat {
    let d = dy.cols as f64;
    let mut dx = Mat::zeros(dy.rows, dy.cols);
    for t in 0..dy.rows {
        let (dyr, xh) = (dy.row(t), cache.xhat.row(t));
        let dxhat: Vec<f64> = (0..dy.cols).map(|i| dyr[i] * gain[i]).collect();
        for i in 0..dy.cols {
            dgain[i] += dyr[i] * xh[i];
            dbias[i] += dyr[i];
        }
        let mean_dxhat = dxhat.iter().sum::<f64>() / d;
        let mean_dxhat_xhat = dot(&dxhat, xh) / d;
        let inv = cache.inv_std[t];
        let dxr = dx.row_mut(t);
        for i in 0..dy.cols {
            dxr[i] = inv * (dxhat[i] - mean_dxhat - xh[i] * mean_dxhat_xhat);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// `ln Σ exp(z)`, stable.
pub fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(z);
    z.iter().map(|v| (v - lse).exp()).collect()
}

/// Index of the first maximum.
pub fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in z.iter().enumerate() {
        if *v > z[best] {
            best = i;
        }
    }
    best
}
