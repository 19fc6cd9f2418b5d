//! Four-term blocks of the per-sample off-diagonal Hessian bound.
//!
//! Along the path between `f` and `e` the ceiling
//! `(1 + ξ_{N+1}η_{N+1})^{−2} Π_{j≤N} (1 − η_j²)/(1 + η_j ξ_j)²`
//! is split into groups of four consecutive factors. Each group except the
//! one touching `f` has its incoming `ξ` replaced by the worst value in
//! `[−(1−2ĉδ), 1−2ĉδ]`, which decouples the groups:
//!
//! * `W̃_N`: factors `N−3..=N` plus the `(1 + ξ_{N+1}η_{N+1})^{−2}` prefactor;
//! * `W_i` for `i = N−4, N−8, …, r+3`: factors `i−3..=i`;
//! * `R_r` with `r = (N+1) mod 4`: factors `0..r` at the true `ξ_0`.
//!
//! For `N ≤ 2` there is no adversarial block and the bound is the ceiling
//! itself.

use serde::{Deserialize, Serialize};

use crate::error::{CfnError, Result};
use crate::likelihood::PathSignals;
use crate::magnetization::directed_magnetizations;
use crate::model::{restrict_to_leaves, sample_edge_params, sample_spins, RegimeBox, Role};
use crate::parallel::ordered_map;
use crate::stats::{log_log_slope, mean_and_se};
use crate::tree::Tree;

use super::search::{maximize_on_interval, SupSearch};

/// Product of the factors for `η = eta[0..4]` with the recursion
/// `ξ_{k+1} = θ̂_k q(η_k, ξ_k)` started at `ξ_0 = x`. With `tail = Some(η')`
/// the result is also divided by `(1 + ξ_4 η')²`.
pub fn block_product(eta: &[f64], theta: &[f64], x: f64, tail: Option<f64>) -> f64 {
    let mut xi = x;
    let mut prod = 1.0;
    for (k, &h) in eta.iter().enumerate() {
        let den = 1.0 + xi * h;
        prod *= (1.0 - h * h) / (den * den);
        if k + 1 < eta.len() || tail.is_some() {
            xi = theta[k] * (h + xi) / den;
        }
    }
    if let Some(t) = tail {
        let den = 1.0 + xi * t;
        prod /= den * den;
    }
    prod
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockTerms {
    pub n: usize,
    pub r: usize,
    /// `W_i` values in the order `i = N−4, N−8, …`.
    pub w: Vec<f64>,
    pub w_index: Vec<usize>,
    pub w_argmax: Vec<f64>,
    /// `None` when `N ≤ 2`.
    pub w_tilde: Option<f64>,
    pub w_tilde_argmax: Option<f64>,
    /// For `N ≤ 2` this already includes the `(1 + ξ_{N+1}η_{N+1})^{−2}` prefactor.
    pub r_value: f64,
    pub bound: f64,
    /// The per-sample `∂²ℓ/∂θ̂_e∂θ̂_f` being bounded.
    pub hessian_entry: f64,
}

impl BlockTerms {
    pub fn block_count(&self) -> usize {
        self.w.len()
    }

    /// `bound / |∂²ℓ|`; infinite when the entry vanishes.
    pub fn dominance_ratio(&self) -> f64 {
        self.bound / self.hessian_entry.abs()
    }
}

/// Block terms for one sample given its path signals.
pub fn blocks_from_signals(s: &PathSignals, x_bound: f64, search: SupSearch) -> Result<BlockTerms> {
    let n = s.n;
    let r = (n + 1) % 4;
    let hessian_entry = s.hessian_entry()?;
    let factor = |j: usize| (1.0 - s.eta[j] * s.eta[j]) / (1.0 + s.eta[j] * s.xi[j]).powi(2);
    if n <= 2 {
        let r_value = s.product_bound();
        return Ok(BlockTerms {
            n,
            r,
            w: vec![],
            w_index: vec![],
            w_argmax: vec![],
            w_tilde: None,
            w_tilde_argmax: None,
            r_value,
            bound: r_value,
            hessian_entry,
        });
    }
    let sup = |lo: usize, tail: Option<f64>| {
        let eta = &s.eta[lo..lo + 4];
        let theta = &s.theta_path[lo..lo + 4];
        maximize_on_interval(|x| block_product(eta, theta, x, tail), -x_bound, x_bound, search)
    };
    let (wt_x, wt) = sup(n - 3, Some(s.eta[n + 1]));
    let (w_index, w_argmax, w) = w_blocks(s, x_bound, search);
    let r_value: f64 = (0..r).map(factor).product();
    let bound = wt * w.iter().product::<f64>() * r_value;
    Ok(BlockTerms {
        n,
        r,
        w,
        w_index,
        w_argmax,
        w_tilde: Some(wt),
        w_tilde_argmax: Some(wt_x),
        r_value,
        bound,
        hessian_entry,
    })
}

/// Indices `i = N−4, N−8, …, r+3`, maximizers and values of the `W_i`.
fn w_blocks(s: &PathSignals, x_bound: f64, search: SupSearch) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = s.n;
    let r = (n + 1) % 4;
    let (mut idx, mut arg, mut val) = (Vec::new(), Vec::new(), Vec::new());
    let mut i = n as isize - 4;
    while i >= r as isize + 3 {
        let lo = i as usize - 3;
        let eta = &s.eta[lo..lo + 4];
        let theta = &s.theta_path[lo..lo + 4];
        let (x, v) = maximize_on_interval(|x| block_product(eta, theta, x, None), -x_bound, x_bound, search);
        idx.push(i as usize);
        arg.push(x);
        val.push(v);
        i -= 4;
    }
    (idx, arg, val)
}

/// Block decomposition for the edge pair `(e, f)` on one leaf configuration.
/// `x_bound` is the adversarial range, normally `1 − 2ĉδ`.
pub fn block_decomposition(
    tree: &Tree,
    theta_hat: &[f64],
    cfg: &[i8],
    e: usize,
    f: usize,
    x_bound: f64,
    search: SupSearch,
) -> Result<BlockTerms> {
    if !(0.0..1.0).contains(&x_bound) {
        return Err(CfnError::InvalidInput(format!("adversarial bound {x_bound} must lie in [0, 1)")));
    }
    let pd = tree.path_decomposition(e, f)?;
    let table = directed_magnetizations(tree, theta_hat, cfg)?;
    blocks_from_signals(&PathSignals::from_table(tree, theta_hat, &table, &pd), x_bound, search)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WTierConfig {
    pub e: usize,
    pub f: usize,
    pub m: usize,
    pub seed: u64,
    pub deltas: Vec<f64>,
    pub search: SupSearch,
    /// `κ` in the extra tail count `P(W > κ/δ)`.
    pub tail_constant: f64,
}

/// Band counts for one `δ`: `[0, Kδ²]`, `(Kδ², K]`, `(K, K/δ]`, `(K/δ, K/δ²]`, above.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WTierRow {
    pub delta: f64,
    pub values: usize,
    pub bands: [usize; 5],
    pub mean: f64,
    pub mean_se: f64,
    pub max: f64,
    pub median: f64,
    /// Fraction of values above `κ/δ`.
    pub p_tail: f64,
    /// Largest `W_i` over the `a.s.` ceiling `((16 ∨ 8/(2ĉ))/δ)²`, as a ratio.
    pub ceiling_ratio: f64,
}

impl WTierRow {
    /// `P(W > Kδ²), P(W > K), P(W > K/δ), P(W > K/δ²)`.
    pub fn exceedance(&self) -> [f64; 4] {
        let v = self.values as f64;
        let mut out = [0.0; 4];
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.bands[k + 1..].iter().sum::<usize>() as f64 / v;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WTierReport {
    pub n: usize,
    pub k: f64,
    pub rows: Vec<WTierRow>,
    /// Log-log slopes in `δ` of the four exceedance probabilities; `None`
    /// when some frequency is zero.
    pub slopes: [Option<f64>; 4],
    pub tail_constant: f64,
    /// Log-log slope of `P(W > κ/δ)`.
    pub tail_slope: Option<f64>,
    /// Correlation of `ln W` between the first two blocks and its standard
    /// error `1/√m`, per `δ`; empty with fewer than two blocks.
    pub block_correlation: Vec<(f64, f64)>,
}

impl WTierReport {
    pub fn mean_within_k_squared_delta(&self) -> bool {
        self.rows.iter().all(|r| r.mean <= self.k * self.k * r.delta)
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("delta,values,band0,band1,band2,band3,band4,mean,mean_se,median,max,ceiling_ratio,p_gt_k_delta2,p_gt_k,p_gt_k_over_delta,p_gt_k_over_delta2,p_gt_tail\n");
        for r in &self.rows {
            let x = r.exceedance();
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.delta,
                r.values,
                r.bands[0],
                r.bands[1],
                r.bands[2],
                r.bands[3],
                r.bands[4],
                r.mean,
                r.mean_se,
                r.median,
                r.max,
                r.ceiling_ratio,
                x[0],
                x[1],
                x[2],
                x[3],
                r.p_tail
            ));
        }
        s
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

fn slope_if_positive(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if ys.iter().any(|&y| y <= 0.0) {
        return None;
    }
    log_log_slope(xs, ys)
}

/// Distribution of the `W_i` blocks between `e` and `f` across a `δ` sweep.
///
/// `θ*` and `θ̂` are drawn from their boxes with the same seed at every `δ`.
/// All `W_i` of a sample are pooled. The band constant is
/// `K = 2 · max_δ median(W)/δ²`, so the typical value sits in the first band.
/// Only the `W_i` are evaluated; `W̃_N` and `R_r` are not needed here.
pub fn w_tier_experiment(tree: &Tree, rbox: &RegimeBox, cfg: &WTierConfig) -> Result<WTierReport> {
    let n = tree.edge_distance(cfg.e, cfg.f)?;
    if n < 7 {
        return Err(CfnError::InvalidInput(format!(
            "edges {} and {} are at distance {n}; W blocks need N >= 7",
            cfg.e, cfg.f
        )));
    }
    if cfg.m < 2 {
        return Err(CfnError::InvalidInput("m must be at least 2".into()));
    }
    if !(cfg.tail_constant > 0.0) {
        return Err(CfnError::InvalidInput(format!("tail constant {} must be positive", cfg.tail_constant)));
    }
    let pd = tree.path_decomposition(cfg.e, cfg.f)?;
    let mut per_delta = Vec::with_capacity(cfg.deltas.len());
    for &delta in &cfg.deltas {
        let b = rbox.with_delta(delta)?;
        let truth = sample_edge_params(tree, &b, Role::Truth, cfg.seed).theta;
        let est = sample_edge_params(tree, &b, Role::Estimate, cfg.seed).theta;
        let xb = b.signal_bound();
        let blocks: Vec<Vec<f64>> = ordered_map(cfg.m, |j| {
            let spins = sample_spins(tree, &truth, cfg.seed, j as u64);
            let table = directed_magnetizations(tree, &est, &restrict_to_leaves(tree, &spins))?;
            let s = PathSignals::from_table(tree, &est, &table, &pd);
            Ok(w_blocks(&s, xb, cfg.search).2)
        })?;
        per_delta.push((delta, b, blocks));
    }
    let k = 2.0
        * per_delta
            .iter()
            .map(|(d, _, blocks)| {
                let mut all: Vec<f64> = blocks.iter().flatten().copied().collect();
                median(&mut all) / (d * d)
            })
            .fold(0.0, f64::max);
    let mut rows = Vec::new();
    let mut block_correlation = Vec::new();
    for (delta, b, blocks) in &per_delta {
        let mut all: Vec<f64> = blocks.iter().flatten().copied().collect();
        let cuts = [k * delta * delta, k, k / delta, k / (delta * delta)];
        let mut bands = [0usize; 5];
        for &w in &all {
            bands[cuts.iter().filter(|&&c| w > c).count()] += 1;
        }
        let (mean, mean_se) = mean_and_se(all.iter().sum(), all.iter().map(|w| w * w).sum(), all.len());
        let a = 2.0 * b.c_hat;
        let ceiling = ((16f64).max(8.0 / a) / delta).powi(2);
        let max = all.iter().copied().fold(0.0, f64::max);
        let p_tail = all.iter().filter(|&&w| w > cfg.tail_constant / delta).count() as f64 / all.len() as f64;
        rows.push(WTierRow {
            delta: *delta,
            values: all.len(),
            bands,
            mean,
            mean_se,
            max,
            median: median(&mut all),
            p_tail,
            ceiling_ratio: max / ceiling,
        });
        if blocks[0].len() >= 2 {
            let x: Vec<f64> = blocks.iter().map(|w| w[0].ln()).collect();
            let y: Vec<f64> = blocks.iter().map(|w| w[1].ln()).collect();
            block_correlation.push((correlation(&x, &y), 1.0 / (blocks.len() as f64).sqrt()));
        }
    }
    let ds: Vec<f64> = rows.iter().map(|r| r.delta).collect();
    let mut slopes = [None; 4];
    for (k, s) in slopes.iter_mut().enumerate() {
        let ys: Vec<f64> = rows.iter().map(|r| r.exceedance()[k]).collect();
        *s = slope_if_positive(&ds, &ys);
    }
    let tails: Vec<f64> = rows.iter().map(|r| r.p_tail).collect();
    let tail_slope = slope_if_positive(&ds, &tails);
    Ok(WTierReport { n, k, rows, slopes, tail_constant: cfg.tail_constant, tail_slope, block_correlation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::magnetization::q_combine;
    use crate::model::SampleBatch;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Closed form of a block: by repeatedly reversing the recursion the
    /// product equals `Π(1−η_j²)/Π(1+θ̂_jη_jη̃_{j+1})²/(1+xη̃_0)²`, with
    /// `η̃` built backwards from the last factor, so the sup over `x` sits at
    /// `x = −sign(η̃_0)·bound`.
    fn closed_form_sup(eta: &[f64], theta: &[f64], tail: Option<f64>, bound: f64) -> f64 {
        let len = eta.len();
        let mut et = vec![0.0; len + 1];
        let mut num: f64 = eta.iter().map(|h| 1.0 - h * h).product();
        let (start, mut den) = match tail {
            Some(t) => {
                et[len] = t;
                (len, 1.0)
            }
            None => {
                et[len - 1] = eta[len - 1];
                (len - 1, 1.0)
            }
        };
        for j in (0..start).rev() {
            let a = theta[j] * et[j + 1];
            den *= (1.0 + eta[j] * a).powi(2);
            et[j] = q_combine(a, eta[j]).unwrap();
        }
        num /= den;
        num / (1.0 - bound * et[0].abs()).powi(2)
    }

    fn random_signals(rng: &mut ChaCha8Rng, bound: f64) -> (Vec<f64>, Vec<f64>, f64) {
        let eta: Vec<f64> = (0..4).map(|_| rng.random_range(-bound..=bound)).collect();
        let theta: Vec<f64> = (0..4).map(|_| rng.random_range(0.5..=bound)).collect();
        (eta, theta, rng.random_range(-1.0..=1.0))
    }

    #[test]
    fn grid_sup_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let bound = 1.0 - rng.random_range(0.002..0.2);
            let (eta, theta, tail) = random_signals(&mut rng, bound);
            for t in [None, Some(tail)] {
                let (_, grid) =
                    maximize_on_interval(|x| block_product(&eta, &theta, x, t), -bound, bound, SupSearch::default());
                let exact = closed_form_sup(&eta, &theta, t, bound);
                assert!((grid - exact).abs() <= 1e-9 * exact, "{grid} vs {exact}");
            }
        }
    }

    #[test]
    fn doubling_the_grid_changes_little() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let fine = SupSearch { grid_points: 4001, refine: true };
        for _ in 0..200 {
            let bound = 0.98;
            let (eta, theta, _) = random_signals(&mut rng, bound);
            let a =
                maximize_on_interval(|x| block_product(&eta, &theta, x, None), -bound, bound, SupSearch::default()).1;
            let b = maximize_on_interval(|x| block_product(&eta, &theta, x, None), -bound, bound, fine).1;
            assert!((a - b).abs() <= 1e-6 * b);
        }
    }

    #[test]
    fn block_layout_covers_every_factor_once() {
        let t = Tree::caterpillar(16).unwrap();
        let rbox = RegimeBox::with_defaults(0.02).unwrap();
        let theta = sample_edge_params(&t, &rbox, Role::Estimate, 1).theta;
        let cfg = SampleBatch::simulate(&t, &theta, 1, 2).configs.remove(0);
        let e = 0;
        for f in 1..t.edge_count() {
            let bt = block_decomposition(&t, &theta, &cfg, e, f, rbox.signal_bound(), SupSearch::default()).unwrap();
            let n = t.edge_distance(e, f).unwrap();
            assert_eq!(bt.n, n);
            assert_eq!(bt.r, (n + 1) % 4);
            if n >= 3 {
                assert_eq!(bt.block_count(), (n - 3) / 4);
                let covered = 4 * (bt.block_count() + 1) + bt.r;
                assert_eq!(covered, n + 1);
                assert!(bt.w_index.windows(2).all(|w| w[0] == w[1] + 4));
            } else {
                assert!(bt.w_tilde.is_none());
            }
            assert!(bt.bound >= bt.hessian_entry.abs() * (1.0 - 1e-12));
        }
    }

    #[test]
    fn adversarial_bound_is_validated() {
        let t = Tree::caterpillar(8).unwrap();
        let cfg = vec![1; 8];
        assert!(block_decomposition(&t, &[0.9; 13], &cfg, 0, 7, 1.0, SupSearch::default()).is_err());
    }

    #[test]
    fn w_tier_mean_matches_enumeration() {
        // On a caterpillar every off-path signal is ±θ̂ of a pendant edge, so
        // the pooled mean of W can be computed by summing over all leaf patterns.
        let t = Tree::caterpillar(10).unwrap();
        let (e, f) = (0, 9);
        let delta = 0.05;
        let rbox = RegimeBox::with_defaults(delta).unwrap();
        let truth = sample_edge_params(&t, &rbox, Role::Truth, 4).theta;
        let est = sample_edge_params(&t, &rbox, Role::Estimate, 4).theta;
        let search = SupSearch { grid_points: 401, refine: true };
        let mut exact = 0.0;
        for cfg in crate::model::enumerate_leaf_configs(&t, 12).unwrap() {
            let p = crate::model::log_leaf_config_probability(&t, &truth, &cfg).exp();
            let bt = block_decomposition(&t, &est, &cfg, e, f, rbox.signal_bound(), search).unwrap();
            exact += p * bt.w.iter().sum::<f64>() / bt.w.len() as f64;
        }
        let cfg = WTierConfig { e, f, m: 20000, seed: 4, deltas: vec![delta], search, tail_constant: 0.1 };
        let report = w_tier_experiment(&t, &rbox, &cfg).unwrap();
        let row = &report.rows[0];
        assert_eq!(report.n, 7);
        assert_eq!(row.values, 20000);
        assert!((row.mean - exact).abs() < 4.0 * row.mean_se, "{} vs {exact} (se {})", row.mean, row.mean_se);
        assert_eq!(row.bands.iter().sum::<usize>(), row.values);
    }

    #[test]
    fn w_tier_requires_distance_seven() {
        let t = Tree::caterpillar(8).unwrap();
        let rbox = RegimeBox::with_defaults(0.02).unwrap();
        let cfg = WTierConfig {
            e: 0,
            f: 1,
            m: 10,
            seed: 0,
            deltas: vec![0.02],
            search: SupSearch::default(),
            tail_constant: 0.1,
        };
        assert!(w_tier_experiment(&t, &rbox, &cfg).is_err());
    }
}
