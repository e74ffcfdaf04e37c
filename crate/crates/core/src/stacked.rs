//! Arithmetic on stacked node vectors: `m` blocks of dimension `p`.

/// Block mean `(1/m) sum_i a_i`.
pub fn mean(blocks: &[Vec<f64>]) -> Vec<f64> {
    let m = blocks.len();
    let p = blocks.first().map_or(0, Vec::len);
    let mut out = vec![0.0; p];
    for b in blocks {
        out.iter_mut().zip(b).for_each(|(o, v)| *o += v);
    }
    out.iter_mut().for_each(|o| *o /= m as f64);
    out
}

pub fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `||a - 1 ⊗ mean(a)||^2`.
pub fn consensus_sq(blocks: &[Vec<f64>]) -> f64 {
    let avg = mean(blocks);
    blocks.iter().map(|b| dist_sq(b, &avg)).sum()
}

/// `||a||^2` over all blocks.
pub fn stacked_norm_sq(blocks: &[Vec<f64>]) -> f64 {
    blocks.iter().map(|b| norm_sq(b)).sum()
}

/// `||a - b||^2` over all blocks.
pub fn stacked_dist_sq(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| dist_sq(x, y)).sum()
}

/// Largest absolute componentwise difference.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}
