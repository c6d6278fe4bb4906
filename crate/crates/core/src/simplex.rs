/// Tolerance used for every "lies on the simplex" check.
pub const SIMPLEX_TOL: f64 = 1e-9;

pub fn is_on_simplex(w: &[f64]) -> bool {
    !w.is_empty()
        && w.iter().all(|x| x.is_finite() && *x >= 0.0)
        && (w.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// All capital in cash (index 0).
pub fn all_cash(len: usize) -> Vec<f64> {
    let mut w = vec![0.0; len];
    w[0] = 1.0;
    w
}
