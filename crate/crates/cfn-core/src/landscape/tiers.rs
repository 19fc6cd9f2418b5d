//! Good / moderate / severe reconstruction at a single vertex.

use serde::{Deserialize, Serialize};

use crate::error::{CfnError, Result};
use crate::magnetization::upward_magnetizations;
use crate::model::{restrict_to_leaves, sample_edge_params, sample_spins, RegimeBox, Role};
use crate::parallel::chunked_sum;
use crate::stats::log_log_slope;
use crate::tree::Tree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Good,
    Moderate,
    Severe,
}

/// Cutoffs for the three tiers.
///
/// `moderate_multiplier` only affects the auxiliary "moderate within band"
/// count: values in `(−c_severe, 1 − multiplier·K_good·δ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierThresholds {
    pub k_good: f64,
    pub c_severe: f64,
    pub moderate_multiplier: f64,
}

impl Default for TierThresholds {
    fn default() -> Self {
        TierThresholds { k_good: 10.0, c_severe: 0.5, moderate_multiplier: 1.0 }
    }
}

/// Good iff `σZ ≥ 1 − K_good δ²`, severe iff `σZ ≤ −c_severe`.
pub fn classify_tier(signed_mag: f64, delta: f64, k_good: f64, c_severe: f64) -> Tier {
    if signed_mag >= 1.0 - k_good * delta * delta {
        Tier::Good
    } else if signed_mag <= -c_severe {
        Tier::Severe
    } else {
        Tier::Moderate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionConfig {
    /// The vertex `u` whose magnetization is classified.
    pub node: usize,
    /// Neighbour of `u` that plays the role of its parent; the descendant
    /// subtree is everything on `u`'s side of the edge between them.
    pub parent: usize,
    pub m: usize,
    pub seed: u64,
    pub deltas: Vec<f64>,
    pub thresholds: TierThresholds,
    /// Use `θ̂ = θ*` instead of an independent draw from the estimate box.
    pub estimate_at_truth: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierReport {
    pub delta: f64,
    pub node: usize,
    pub m: usize,
    pub thresholds: TierThresholds,
    pub good: usize,
    pub moderate: usize,
    pub severe: usize,
    pub moderate_within_band: usize,
    /// For each child `x` of `u`: samples with `σ_u Z_x < 0`.
    pub child_negative: Vec<usize>,
    /// Samples where the first two children both have `σ_u Z_x < 0`.
    pub both_children_negative: usize,
}

impl TierReport {
    fn freq(&self, count: usize) -> f64 {
        count as f64 / self.m as f64
    }

    pub fn frequencies(&self) -> [f64; 3] {
        [self.freq(self.good), self.freq(self.moderate), self.freq(self.severe)]
    }

    pub fn failure_frequency(&self) -> f64 {
        self.freq(self.moderate + self.severe)
    }

    pub fn csv_header() -> &'static str {
        "delta,node,m,good,moderate,severe,moderate_within_band,freq_good,freq_moderate,freq_severe,child0_negative,child1_negative,both_children_negative"
    }

    pub fn csv_row(&self) -> String {
        let f = self.frequencies();
        let child = |i: usize| self.child_negative.get(i).copied().unwrap_or(0);
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.delta,
            self.node,
            self.m,
            self.good,
            self.moderate,
            self.severe,
            self.moderate_within_band,
            f[0],
            f[1],
            f[2],
            child(0),
            child(1),
            self.both_children_negative
        )
    }
}

/// Log-log slopes in `δ` and the smallest `K` with `P(not good) ≤ K δ` at
/// every `δ` of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierSlopes {
    pub failure_slope: Option<f64>,
    pub severe_slope: Option<f64>,
    pub child_negative_slope: Option<f64>,
    pub both_children_slope: Option<f64>,
    pub fitted_good_constant: f64,
}

pub fn tier_slopes(reports: &[TierReport]) -> TierSlopes {
    let ds: Vec<f64> = reports.iter().map(|r| r.delta).collect();
    let fail: Vec<f64> = reports.iter().map(TierReport::failure_frequency).collect();
    let severe: Vec<f64> = reports.iter().map(|r| r.freq(r.severe)).collect();
    let child: Vec<f64> = reports
        .iter()
        .map(|r| r.child_negative.iter().sum::<usize>() as f64 / (r.m * r.child_negative.len().max(1)) as f64)
        .collect();
    let both: Vec<f64> = reports.iter().map(|r| r.freq(r.both_children_negative)).collect();
    let k = ds.iter().zip(&fail).map(|(d, f)| f / d).fold(0.0, f64::max);
    TierSlopes {
        failure_slope: log_log_slope(&ds, &fail),
        severe_slope: log_log_slope(&ds, &severe),
        child_negative_slope: log_log_slope(&ds, &child),
        both_children_slope: log_log_slope(&ds, &both),
        fitted_good_constant: k,
    }
}

/// Simulate `m` broadcasts per `δ` and classify `σ_u Z_u`.
///
/// Parameter draws and broadcasts reuse the same seed at every `δ`, so the
/// sweep compares nested flip events rather than independent samples.
pub fn reconstruction_experiment(tree: &Tree, rbox: &RegimeBox, cfg: &ReconstructionConfig) -> Result<Vec<TierReport>> {
    let u = cfg.node;
    if u >= tree.vertex_count() || tree.is_leaf(u) {
        return Err(CfnError::InvalidInput(format!("node {u} must be an internal vertex")));
    }
    if tree.edge_between(u, cfg.parent).is_none() {
        return Err(CfnError::InvalidInput(format!("{} is not adjacent to {u}", cfg.parent)));
    }
    if cfg.m == 0 {
        return Err(CfnError::InvalidInput("m must be positive".into()));
    }
    let children: Vec<usize> = tree.incident(u).iter().map(|&(c, _)| c).filter(|&c| c != cfg.parent).collect();
    let th = cfg.thresholds;
    let mut out = Vec::with_capacity(cfg.deltas.len());
    for &delta in &cfg.deltas {
        let b = rbox.with_delta(delta)?;
        let truth = sample_edge_params(tree, &b, Role::Truth, cfg.seed);
        let estimate = if cfg.estimate_at_truth {
            truth.theta.clone()
        } else {
            sample_edge_params(tree, &b, Role::Estimate, cfg.seed).theta
        };
        let band_top = 1.0 - th.moderate_multiplier * th.k_good * delta * delta;
        let width = 5 + children.len();
        let sums = chunked_sum(cfg.m, width, |j, acc| {
            let spins = sample_spins(tree, &truth.theta, cfg.seed, j as u64);
            let leaves = restrict_to_leaves(tree, &spins);
            let z = upward_magnetizations(tree, &estimate, &leaves, cfg.parent)?;
            let su = f64::from(spins[u]);
            let signed = su * z[u];
            let tier = classify_tier(signed, delta, th.k_good, th.c_severe);
            acc[tier as usize] = 1.0;
            if tier == Tier::Moderate && signed < band_top {
                acc[3] = 1.0;
            }
            let neg: Vec<bool> = children.iter().map(|&c| su * z[c] < 0.0).collect();
            if neg.len() >= 2 && neg[0] && neg[1] {
                acc[4] = 1.0;
            }
            for (k, &n) in neg.iter().enumerate() {
                acc[5 + k] = f64::from(u8::from(n));
            }
            Ok(())
        })?;
        let count = |x: f64| x.round() as usize;
        out.push(TierReport {
            delta,
            node: u,
            m: cfg.m,
            thresholds: th,
            good: count(sums[0]),
            moderate: count(sums[1]),
            severe: count(sums[2]),
            moderate_within_band: count(sums[3]),
            child_negative: sums[5..].iter().map(|&s| count(s)).collect(),
            both_children_negative: count(sums[4]),
        });
    }
    Ok(out)
}
