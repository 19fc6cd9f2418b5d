//! Maximization of a scalar function on a closed interval.

use serde::{Deserialize, Serialize};

/// Dense grid followed by golden-section refinement around each grid-local
/// maximum. The objective may be multimodal; the grid decides which basins
/// get refined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupSearch {
    pub grid_points: usize,
    pub refine: bool,
}

impl Default for SupSearch {
    fn default() -> Self {
        SupSearch { grid_points: 2001, refine: true }
    }
}

fn golden_section<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// `(argmax, max)` of `f` over `[lo, hi]`.
pub fn maximize_on_interval<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, search: SupSearch) -> (f64, f64) {
    let n = search.grid_points.max(2);
    let xs: Vec<f64> = (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect();
    let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut best = (xs[0], vals[0]);
    for k in 0..n {
        if vals[k] > best.1 {
            best = (xs[k], vals[k]);
        }
    }
    if !search.refine {
        return best;
    }
    for k in 0..n {
        let left_ok = k == 0 || vals[k] >= vals[k - 1];
        let right_ok = k == n - 1 || vals[k] >= vals[k + 1];
        if !(left_ok && right_ok) {
            continue;
        }
        let a = xs[k.saturating_sub(1)];
        let b = xs[(k + 1).min(n - 1)];
        let cand = golden_section(&f, a, b);
        if cand.1 > best.1 {
            best = cand;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_and_endpoint_maxima() {
        let (x, v) = maximize_on_interval(|x| -(x - 0.3137).powi(2), -1.0, 1.0, SupSearch::default());
        assert!((x - 0.3137).abs() < 1e-7 && v.abs() < 1e-14);
        let (x, v) = maximize_on_interval(|x| 1.0 / (1.0 + 0.9 * x).powi(2), -0.98, 0.98, SupSearch::default());
        assert_eq!(x, -0.98);
        assert_eq!(v, 1.0 / (1.0 - 0.9 * 0.98f64).powi(2));
    }

    #[test]
    fn refinement_beats_a_coarse_grid_on_a_narrow_peak() {
        let f = |x: f64| (-(x - 0.123456).powi(2) / 1e-4).exp() + 0.5 * (-(x + 0.5).powi(2) / 1e-3).exp();
        let coarse = maximize_on_interval(f, -1.0, 1.0, SupSearch { grid_points: 201, refine: false });
        let fine = maximize_on_interval(f, -1.0, 1.0, SupSearch { grid_points: 201, refine: true });
        assert!(fine.1 >= coarse.1);
        assert!((fine.0 - 0.123456).abs() < 1e-6);
    }
}
