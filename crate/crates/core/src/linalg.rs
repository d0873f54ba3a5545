//! Small dense helpers. All accumulation happens in f64 with a fixed
//! summation order.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Indices of the nonzero entries of `x` when at most half are nonzero.
pub fn sparse_support(x: &[f64]) -> Option<Vec<usize>> {
    let idx: Vec<usize> = (0..x.len()).filter(|i| x[*i] != 0.0).collect();
    (2 * idx.len() <= x.len()).then_some(idx)
}

/// `dot(a, b)` over the entries in `support`, or all entries when `None`.
/// Skipping zeros of `b` keeps the order of the remaining terms.
pub fn dot_on(a: &[f64], b: &[f64], support: Option<&[usize]>) -> f64 {
    match support {
        Some(idx) => idx.iter().map(|i| a[*i] * b[*i]).sum(),
        None => dot(a, b),
    }
}

/// `axpy` restricted to `support`.
pub fn axpy_on(alpha: f64, x: &[f64], y: &mut [f64], support: Option<&[usize]>) {
    match support {
        Some(idx) => idx.iter().for_each(|i| y[*i] += alpha * x[*i]),
        None => axpy(alpha, x, y),
    }
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the first maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Row-major `rows x cols` matrix times vector.
pub fn matvec(matrix: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(matrix.chunks_exact(cols)) {
        *o = dot(row, x);
    }
}

/// `out += matrix^T * v` for a row-major `rows x cols` matrix.
pub fn matvec_t_acc(matrix: &[f64], cols: usize, v: &[f64], out: &mut [f64]) {
    for (vi, row) in v.iter().zip(matrix.chunks_exact(cols)) {
        if *vi != 0.0 {
            axpy(*vi, row, out);
        }
    }
}

