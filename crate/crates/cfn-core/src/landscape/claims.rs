//! Randomized checks of the algebraic facts about `q` that the Hessian
//! bounds rest on. Each check draws inputs satisfying the hypotheses,
//! biased towards the ends of their ranges where the bounds are tight, and
//! records the smallest slack seen.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rng;

use super::blocks::block_product;
use super::search::{maximize_on_interval, SupSearch};

/// Outcome of one randomized property check. `worst_slack` is the minimum of
/// `bound − value` (scaled as documented per check); a violation is a slack
/// below `−tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimCheck {
    pub name: String,
    pub trials: usize,
    pub violations: usize,
    pub worst_slack: f64,
    pub tolerance: f64,
}

impl ClaimCheck {
    fn new(name: &str, tolerance: f64) -> Self {
        ClaimCheck { name: name.into(), trials: 0, violations: 0, worst_slack: f64::INFINITY, tolerance }
    }

    fn record(&mut self, slack: f64) {
        self.trials += 1;
        if !(slack >= -self.tolerance) {
            self.violations += 1;
        }
        self.worst_slack = self.worst_slack.min(slack);
    }

    pub fn passed(&self) -> bool {
        self.trials > 0 && self.violations == 0
    }
}

#[inline]
fn q(x: f64, y: f64) -> f64 {
    (x + y) / (1.0 + x * y)
}

/// Uniform on `[lo, hi]`, but each end is returned exactly with probability 1/8.
fn edgy(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    match rng.random_range(0..8) {
        0 => lo,
        1 => hi,
        _ => rng.random_range(lo..=hi),
    }
}

fn sign(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

fn check_rng(seed: u64, label: u64) -> ChaCha8Rng {
    rng::stream(seed, rng::PARAM_STREAM_BASE | 0xc1a1_0000 | label)
}

/// For `ε ∈ [0, 1/2)` and `s, t ∈ [1−ε, 1]`: `q(s,t) ≥ 1 − (4/5)ε²` and
/// `q(−s,−t) ≤ −1 + (4/5)ε²`.
pub fn check_two_strong_signals(trials: usize, seed: u64) -> ClaimCheck {
    let mut rng = check_rng(seed, 1);
    let mut c = ClaimCheck::new("q two strong signals", 4.0 * f64::EPSILON);
    for _ in 0..trials {
        let eps = rng.random_range(0.0..0.5);
        let s = edgy(&mut rng, 1.0 - eps, 1.0);
        let t = edgy(&mut rng, 1.0 - eps, 1.0);
        let floor = 1.0 - 0.8 * eps * eps;
        c.record((q(s, t) - floor).min(-q(-s, -t) - floor));
    }
    c
}

/// Hypotheses `0 < a < A/2`, `B > 0`, `δ < a/2`, `(2A²/a + B)δ < 1/2`,
/// `s_1 ∈ [−1+aδ, 1]`, `s_2, s_3 ∈ [1−Aδ, 1]`, `t_1, t_2 ∈ [1−Bδ, 1]` give
/// `t_2 q(t_1 q(s_1, s_2), s_3) ≥ 1 − (2A²/a + B)δ`.
pub fn check_corruption_at_distance_three(trials: usize, seed: u64) -> ClaimCheck {
    let mut rng = check_rng(seed, 2);
    let mut c = ClaimCheck::new("q corruption at distance 3", 1e-14);
    for _ in 0..trials {
        let a: f64 = rng.random_range(0.01..4.0);
        let big_a = 2.0 * a * (1.0 + rng.random_range(1e-3..3.0));
        let b = rng.random_range(1e-3..6.0);
        let k = 2.0 * big_a * big_a / a + b;
        let dmax = (0.5 * a).min(0.5 / k).min(1.0);
        let delta = dmax * rng.random_range(1e-4..1.0);
        let s1 = edgy(&mut rng, -1.0 + a * delta, 1.0);
        let s2 = edgy(&mut rng, 1.0 - big_a * delta, 1.0);
        let s3 = edgy(&mut rng, 1.0 - big_a * delta, 1.0);
        let t1 = edgy(&mut rng, 1.0 - b * delta, 1.0);
        let t2 = edgy(&mut rng, 1.0 - b * delta, 1.0);
        let v = t2 * q(t1 * q(s1, s2), s3);
        c.record(v - (1.0 - k * delta));
    }
    c
}

/// For `0 < a < A`, `Aδ < 1`: `s, t ∈ [1−Aδ, 1−aδ]` give
/// `|q(s, −t)| ≤ 1 − a/A`, and `t ∈ [1−Aδ, 1−aδ]`, `|s| ≤ 1−aδ` give
/// `q(t, s) ≥ −1 + a/A`.
pub fn check_opposite_signs(trials: usize, seed: u64) -> Vec<ClaimCheck> {
    let mut rng = check_rng(seed, 3);
    let mut strong = ClaimCheck::new("q opposite strong signals", 1e-12);
    let mut general = ClaimCheck::new("q strong against any signal", 1e-12);
    for _ in 0..trials {
        let a: f64 = rng.random_range(0.01..4.0);
        let big_a: f64 = a * (1.0 + rng.random_range(1e-3..10.0));
        let delta = rng.random_range(1e-4..1.0) / big_a;
        let (lo, hi) = (1.0 - big_a * delta, 1.0 - a * delta);
        let s = edgy(&mut rng, lo, hi);
        let t = edgy(&mut rng, lo, hi);
        let cap = 1.0 - a / big_a;
        strong.record(cap - q(s, -t).abs().max(q(-s, t).abs()));
        let any = edgy(&mut rng, -hi, hi);
        general.record(q(t, any) - (-cap));
    }
    vec![strong, general]
}

/// With `ξ_2 = θ̂ q(η_1, ξ_1)`, `η̃_2 = η_2` and `η̃_1 = q(θ̂η̃_2, η_1)`:
/// (i) `(1+ξ_2η_2)(1+ξ_1η_1) = (1+θ̂η_1η̃_2)(1+ξ_1η̃_1)` and
/// (ii) `(1+θ̂η_1η̃_2)²(1−η̃_1²) = (1−η_1²)(1−(θ̂η̃_2)²)`. Slack is minus the
/// absolute difference.
pub fn check_swap_identities(trials: usize, seed: u64) -> Vec<ClaimCheck> {
    let mut rng = check_rng(seed, 4);
    let mut first = ClaimCheck::new("swap identity (i)", 1e-12);
    let mut second = ClaimCheck::new("swap identity (ii)", 1e-12);
    let open = 1.0 - 1e-12;
    for _ in 0..trials {
        let xi1 = rng.random_range(-open..open);
        let eta1 = rng.random_range(-open..open);
        let eta2 = edgy(&mut rng, -1.0, 1.0);
        let th = rng.random_range(1e-12..open);
        let xi2 = th * q(eta1, xi1);
        let et1 = q(th * eta2, eta1);
        let lhs = (1.0 + xi2 * eta2) * (1.0 + xi1 * eta1);
        let rhs = (1.0 + th * eta1 * eta2) * (1.0 + xi1 * et1);
        first.record(-(lhs - rhs).abs());
        let lhs = (1.0 + th * eta1 * eta2).powi(2) * (1.0 - et1 * et1);
        let rhs = (1.0 - eta1 * eta1) * (1.0 - (th * eta2).powi(2));
        second.record(-(lhs - rhs).abs());
    }
    vec![first, second]
}

/// `F = (1−η_1²)(1−η_2²)/((1+ξ_2η_2)²(1+ξ_1η_1)²)` with `ξ_2 = θ̂ q(η_1, ξ_1)`.
pub fn pairwise_f(theta1: f64, eta1: f64, eta2: f64, xi1: f64) -> f64 {
    block_product(&[eta1, eta2], &[theta1, 0.0], xi1, None)
}

/// For `A > a > 0`, `B > a`, `Aδ, Bδ < 1` and `θ̂ ∈ [1−Aδ, 1−aδ]`, the
/// sup of `F` over `|ξ_1| ≤ 1−aδ` is at most `(16 ∨ 8/a)/δ` when
/// `|η_j| ≤ 1−aδ`, and at most `4B⁴/(a²(B−a)²)` when
/// `|η_j| ∈ [1−Bδ, 1−aδ]`. Slack is `1 − sup/ceiling`.
pub fn check_pairwise_ceilings(trials: usize, seed: u64) -> Vec<ClaimCheck> {
    let mut rng = check_rng(seed, 5);
    let mut generic = ClaimCheck::new("pairwise ceiling, generic signals", 1e-12);
    let mut strong = ClaimCheck::new("pairwise ceiling, strong signals", 1e-12);
    let search = SupSearch { grid_points: 201, refine: true };
    for _ in 0..trials {
        let a: f64 = rng.random_range(0.05..4.0);
        let big_a: f64 = a * (1.0 + rng.random_range(1e-3..4.0));
        let b: f64 = a * (1.0 + rng.random_range(1e-2..6.0));
        let dmax: f64 = 0.999 / big_a.max(b);
        let delta = (rng.random_range(1e-4f64.ln()..dmax.ln())).exp();
        let th = edgy(&mut rng, 1.0 - big_a * delta, 1.0 - a * delta);
        let hi = 1.0 - a * delta;
        let (e1, e2) = (edgy(&mut rng, -hi, hi), edgy(&mut rng, -hi, hi));
        let sup = maximize_on_interval(|x| pairwise_f(th, e1, e2, x), -hi, hi, search).1;
        generic.record(1.0 - sup * delta / 16f64.max(8.0 / a));
        let lo = 1.0 - b * delta;
        let (s1, s2) = (edgy(&mut rng, lo, hi) * sign(&mut rng), edgy(&mut rng, lo, hi) * sign(&mut rng));
        let sup = maximize_on_interval(|x| pairwise_f(th, s1, s2, x), -hi, hi, search).1;
        let ceiling = 4.0 * b.powi(4) / (a * a * (b - a).powi(2));
        strong.record(1.0 - sup / ceiling);
    }
    vec![generic, strong]
}

/// Inside the estimate box (signals bounded by `1 − 2ĉδ`),
/// `W_4 ≤ (2ĉδ)^{−2} Π_{j≤4}(1−η_j²) / Π_{j≤3}(1+θ̂_jη_jη̃_{j+1})²` with
/// `η̃_4 = η_4`, `η̃_j = q(θ̂_jη̃_{j+1}, η_j)`. Slack is `1 − W_4/ceiling`.
pub fn check_four_term_bound(trials: usize, seed: u64) -> ClaimCheck {
    let mut rng = check_rng(seed, 6);
    let mut c = ClaimCheck::new("four-term block ceiling", 1e-9);
    let search = SupSearch { grid_points: 201, refine: true };
    for _ in 0..trials {
        let c_hat = rng.random_range(0.1..2.0);
        let big_c_hat = c_hat * (2.0 + rng.random_range(0.0..4.0));
        let delta = rng.random_range(1e-3..0.5 / big_c_hat);
        let bound = 1.0 - 2.0 * c_hat * delta;
        let eta: Vec<f64> = (0..4).map(|_| edgy(&mut rng, -bound, bound)).collect();
        let theta: Vec<f64> = (0..4).map(|_| edgy(&mut rng, 1.0 - 2.0 * big_c_hat * delta, bound)).collect();
        let w4 = maximize_on_interval(|x| block_product(&eta, &theta, x, None), -bound, bound, search).1;
        let mut et = eta[3];
        let mut den = 1.0;
        for j in (0..3).rev() {
            den *= (1.0 + theta[j] * eta[j] * et).powi(2);
            et = q(theta[j] * et, eta[j]);
        }
        let num: f64 = eta.iter().map(|h| 1.0 - h * h).product();
        let ceiling = num / den / (2.0 * c_hat * delta).powi(2);
        c.record(1.0 - w4 / ceiling);
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass_on_a_small_budget() {
        let mut checks = vec![
            check_two_strong_signals(5000, 1),
            check_corruption_at_distance_three(5000, 1),
            check_four_term_bound(2000, 1),
        ];
        checks.extend(check_opposite_signs(5000, 1));
        checks.extend(check_swap_identities(5000, 1));
        checks.extend(check_pairwise_ceilings(2000, 1));
        for c in &checks {
            assert!(c.passed(), "{c:?}");
        }
    }

    #[test]
    fn a_wrong_constant_is_caught() {
        // Tightening the two-strong-signals constant from 4/5 to 1/2 must fail near ε = 1/2.
        let mut rng = check_rng(2, 99);
        let mut c = ClaimCheck::new("negative control", 4.0 * f64::EPSILON);
        for _ in 0..2000 {
            let eps = rng.random_range(0.4..0.5);
            let s = 1.0 - eps;
            c.record(q(s, s) - (1.0 - 0.5 * eps * eps));
        }
        assert!(!c.passed());
    }

    #[test]
    fn pairwise_f_matches_its_definition() {
        let (th, e1, e2, x): (f64, f64, f64, f64) = (0.93, 0.4, -0.8, 0.2);
        let xi2 = th * (e1 + x) / (1.0 + e1 * x);
        let direct = (1.0 - e1 * e1) * (1.0 - e2 * e2) / ((1.0 + xi2 * e2).powi(2) * (1.0 + x * e1).powi(2));
        assert!((pairwise_f(th, e1, e2, x) - direct).abs() < 1e-15);
    }
}
