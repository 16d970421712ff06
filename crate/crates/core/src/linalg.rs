pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Row vector times row-major `n x n` matrix.
pub(crate) fn row_times(v: &[f64], m: &[f64], out: &mut [f64]) {
    let n = v.len();
    for (c, o) in out.iter_mut().enumerate() {
        *o = (0..n).map(|k| v[k] * m[k * n + c]).sum();
    }
}
