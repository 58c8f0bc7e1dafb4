//! Distribution comparison, energy fluctuation and histogram helpers.

use crate::error::{Error, Result};

/// `e(t) = max_x |v − ṽ| / max_x |v|` per snapshot.
pub fn relative_error_series(v: &[Vec<f64>], v_tilde: &[Vec<f64>]) -> Result<Vec<f64>> {
    if v.len() != v_tilde.len() {
        return Err(Error::Dimension(format!("{} vs {} snapshots", v.len(), v_tilde.len())));
    }
    v.iter()
        .zip(v_tilde)
        .map(|(a, b)| {
            if a.len() != b.len() {
                return Err(Error::Dimension(format!("{} vs {} cells", a.len(), b.len())));
            }
            let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            let den = a.iter().map(|x| x.abs()).fold(0.0, f64::max);
            if den == 0.0 {
                return Err(Error::NoData("reference distribution is zero".into()));
            }
            Ok(num / den)
        })
        .collect()
}

/// `½ Σ |p − q|`; the shorter vector is padded with zeros.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    0.5 * (0..n)
        .map(|i| (p.get(i).copied().unwrap_or(0.0) - q.get(i).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

/// Distribution restricted to bins `from..` and renormalized; `None` if that tail is empty.
pub fn conditional_tail(p: &[f64], from: usize) -> Option<Vec<f64>> {
    let tail = p.get(from..)?;
    let mass: f64 = tail.iter().sum();
    (mass > 0.0).then(|| tail.iter().map(|x| x / mass).collect())
}

/// `V = ∫ (E(t) − E(0))² dt` by the trapezoid rule on a uniform grid.
pub fn energy_fluctuation(e_left: &[f64], dt_s: f64) -> f64 {
    let Some(&e0) = e_left.first() else { return 0.0 };
    let n = e_left.len();
    e_left
        .iter()
        .enumerate()
        .map(|(j, &e)| {
            let w = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
            w * (e - e0).powi(2)
        })
        .sum::<f64>()
        * dt_s
}

/// Fractions of samples with `0, 1, 2, …` events.
pub fn count_histogram(counts: &[usize]) -> Vec<f64> {
    let max = counts.iter().copied().max().unwrap_or(0);
    let mut h = vec![0.0; max + 1];
    counts.iter().for_each(|&c| h[c] += 1.0);
    let n = counts.len().max(1) as f64;
    h.iter_mut().for_each(|x| *x /= n);
    h
}

/// Two samples binned on shared equal-width bins over `[0, max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedHistogram {
    /// Left bin edges.
    pub edges: Vec<f64>,
    pub width: f64,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

pub fn paired_histogram(a: &[f64], b: &[f64], bins: usize) -> Result<PairedHistogram> {
    if a.is_empty() || b.is_empty() || bins == 0 {
        return Err(Error::NoData("empty sample or zero bins".into()));
    }
    let lo = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min).min(0.0);
    let hi = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let fill = |x: &[f64]| {
        let mut h = vec![0.0; bins];
        for &v in x {
            let i = (((v - lo) / width) as usize).min(bins - 1);
            h[i] += 1.0 / x.len() as f64;
        }
        h
    };
    Ok(PairedHistogram {
        edges: (0..bins).map(|i| lo + i as f64 * width).collect(),
        width,
        first: fill(a),
        second: fill(b),
    })
}

pub fn median(x: &[f64]) -> Option<f64> {
    if x.is_empty() {
        return None;
    }
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) })
}

/// Fraction of `x` strictly above `threshold`.
pub fn mass_above(x: &[f64], threshold: f64) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().filter(|&&v| v > threshold).count() as f64 / x.len() as f64
}
