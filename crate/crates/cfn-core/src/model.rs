//! CFN parameterization, regime boxes, broadcast simulation and exact leaf
//! pattern probabilities.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{CfnError, Result};
use crate::magnetization::partial_likelihoods;
use crate::parallel::ordered_map;
use crate::rng::{self, PARAM_STREAM_BASE};
use crate::tree::{ParamKind, RawEdgeValue, Tree};

/// ±1 spins of the leaves, ordered as [`Tree::leaves`].
pub type LeafConfig = Vec<i8>;

/// ±1 spin of every vertex, indexed by vertex id.
pub type SpinConfig = Vec<i8>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Truth,
    Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeParams {
    pub theta: Vec<f64>,
    pub role: Role,
}

impl EdgeParams {
    pub fn new(theta: Vec<f64>, role: Role) -> Result<Self> {
        if let Some((e, t)) = theta.iter().enumerate().find(|(_, t)| !(-1.0..=1.0).contains(*t)) {
            return Err(CfnError::InvalidParameter(format!("theta[{e}] = {t} outside [-1, 1]")));
        }
        Ok(EdgeParams { theta, role })
    }

    /// Convert raw file values; every edge must carry one.
    pub fn from_raw(raw: &[Option<RawEdgeValue>], role: Role) -> Result<Self> {
        let theta = raw
            .iter()
            .enumerate()
            .map(|(e, r)| {
                let r = r.ok_or_else(|| CfnError::InvalidParameter(format!("edge {e} has no theta/p/len value")))?;
                convert_edge_parameter(r.value, r.kind)
            })
            .collect::<Result<Vec<_>>>()?;
        EdgeParams::new(theta, role)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }
}

/// `θ = 1 − 2p` for `p`, `θ = e^{−2l}` for a branch length, identity for `θ`.
pub fn convert_edge_parameter(value: f64, kind: ParamKind) -> Result<f64> {
    let bad = |what: &str| Err(CfnError::InvalidParameter(format!("{what} = {value} out of range")));
    match kind {
        ParamKind::Theta if (-1.0..=1.0).contains(&value) => Ok(value),
        ParamKind::Theta => bad("theta"),
        ParamKind::P if (0.0..=1.0).contains(&value) => Ok(1.0 - 2.0 * value),
        ParamKind::P => bad("p"),
        ParamKind::Len if value >= 0.0 => Ok((-2.0 * value).exp()),
        ParamKind::Len => bad("len"),
    }
}

/// Truth box `p* ∈ [c_p δ, C_p δ]` and estimate box `p̂ ∈ [ĉ δ, Ĉ δ]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeBox {
    pub delta: f64,
    pub c_p: f64,
    pub big_c_p: f64,
    pub c_hat: f64,
    pub big_c_hat: f64,
}

impl RegimeBox {
    pub fn new(delta: f64, c_p: f64, big_c_p: f64, c_hat: f64, big_c_hat: f64) -> Result<Self> {
        let b = RegimeBox { delta, c_p, big_c_p, c_hat, big_c_hat };
        if !(delta > 0.0 && delta < 1.0) {
            return Err(CfnError::InvalidParameter(format!("delta = {delta} not in (0, 1)")));
        }
        if !(big_c_hat > big_c_p && big_c_p > c_p && c_p > c_hat && c_hat > 0.0) {
            return Err(CfnError::InvalidParameter(format!(
                "box constants must satisfy Ĉ > C_p > c_p > ĉ > 0, got ({c_p}, {big_c_p}, {c_hat}, {big_c_hat})"
            )));
        }
        if big_c_hat < 2.0 * c_hat {
            return Err(CfnError::InvalidParameter("box constants need Ĉ ≥ 2ĉ".into()));
        }
        if big_c_hat * delta > 0.5 {
            return Err(CfnError::InvalidParameter(format!(
                "Ĉδ = {} exceeds 1/2; p must stay below one half",
                big_c_hat * delta
            )));
        }
        Ok(b)
    }

    /// Default constants `(c_p, C_p, ĉ, Ĉ) = (1, 2, 0.5, 4)`.
    pub fn with_defaults(delta: f64) -> Result<Self> {
        RegimeBox::new(delta, 1.0, 2.0, 0.5, 4.0)
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        RegimeBox::new(delta, self.c_p, self.big_c_p, self.c_hat, self.big_c_hat)
    }

    /// Interval for `p` under the given role.
    pub fn p_interval(&self, role: Role) -> (f64, f64) {
        match role {
            Role::Truth => (self.c_p * self.delta, self.big_c_p * self.delta),
            Role::Estimate => (self.c_hat * self.delta, self.big_c_hat * self.delta),
        }
    }

    /// Interval for `θ = 1 − 2p` under the given role.
    pub fn theta_interval(&self, role: Role) -> (f64, f64) {
        let (lo, hi) = self.p_interval(role);
        (1.0 - 2.0 * hi, 1.0 - 2.0 * lo)
    }

    /// `1 − 2ĉδ`, the bound on every signal `|ξ_j|, |η_j|` inside the estimate box.
    pub fn signal_bound(&self) -> f64 {
        1.0 - 2.0 * self.c_hat * self.delta
    }
}

/// Draw `p_e` uniformly from the role's interval for each edge.
///
/// The uniform for edge `e` is slot `e` of a stream that depends only on
/// `(seed, role)`, so changing `δ` rescales the same relative positions.
pub fn sample_edge_params(tree: &Tree, rbox: &RegimeBox, role: Role, seed: u64) -> EdgeParams {
    let stream = PARAM_STREAM_BASE | if role == Role::Truth { 0 } else { 1 };
    let (lo, hi) = rbox.p_interval(role);
    let theta =
        rng::uniforms(seed, stream, tree.edge_count()).into_iter().map(|u| 1.0 - 2.0 * (lo + (hi - lo) * u)).collect();
    EdgeParams { theta, role }
}

/// Per-edge box check; the violation list is empty iff the boolean is true.
pub fn check_box_membership(params: &EdgeParams, rbox: &RegimeBox, role: Role) -> (bool, Vec<usize>) {
    let (lo, hi) = rbox.theta_interval(role);
    // One ulp of slack so values produced by `1 − 2p` at the interval ends pass.
    let tol = 4.0 * f64::EPSILON;
    let violations: Vec<usize> =
        params.theta.iter().enumerate().filter(|(_, &t)| t < lo - tol || t > hi + tol).map(|(e, _)| e).collect();
    (violations.is_empty(), violations)
}

/// Broadcast from the lowest-id vertex. Slot 0 of the `(seed, index)` stream
/// draws the root spin, slot `1 + e` decides whether edge `e` flips.
pub fn sample_spins(tree: &Tree, theta: &[f64], seed: u64, index: u64) -> SpinConfig {
    let u = rng::uniforms(seed, index, 1 + tree.edge_count());
    let root_spin = if u[0] < 0.5 { 1 } else { -1 };
    broadcast(tree, theta, root_spin, &u[1..])
}

/// Broadcast with an explicit root spin and per-edge uniforms.
pub fn broadcast(tree: &Tree, theta: &[f64], root_spin: i8, edge_uniforms: &[f64]) -> SpinConfig {
    let rooting = tree.rooting(0);
    let mut spins = vec![0i8; tree.vertex_count()];
    spins[0] = root_spin;
    for &v in &rooting.order[1..] {
        let (parent, e) = rooting.parent[v].expect("non-root has a parent");
        let flip_p = (1.0 - theta[e]) / 2.0;
        spins[v] = if edge_uniforms[e] < flip_p { -spins[parent] } else { spins[parent] };
    }
    spins
}

pub fn restrict_to_leaves(tree: &Tree, spins: &SpinConfig) -> LeafConfig {
    tree.leaves().iter().map(|&v| spins[v]).collect()
}

/// `m` independent leaf configurations; sample `j` uses stream `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub configs: Vec<LeafConfig>,
    pub leaf_count: usize,
    pub seed: Option<u64>,
}

impl SampleBatch {
    pub fn new(configs: Vec<LeafConfig>, leaf_count: usize) -> Result<Self> {
        for (j, c) in configs.iter().enumerate() {
            if c.len() != leaf_count {
                return Err(CfnError::InvalidInput(format!("sample {j} has {} spins, expected {leaf_count}", c.len())));
            }
            if c.iter().any(|&s| s != 1 && s != -1) {
                return Err(CfnError::InvalidInput(format!("sample {j} has a spin other than ±1")));
            }
        }
        Ok(SampleBatch { configs, leaf_count, seed: None })
    }

    pub fn simulate(tree: &Tree, theta: &[f64], m: usize, seed: u64) -> SampleBatch {
        let configs = ordered_map(m, |j| Ok(restrict_to_leaves(tree, &sample_spins(tree, theta, seed, j as u64))))
            .expect("simulation cannot fail");
        SampleBatch { configs, leaf_count: tree.leaf_count(), seed: Some(seed) }
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    /// Text form: header `m n seed`, then one row of ±1 per sample.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let seed = self.seed.map_or_else(|| "-".to_string(), |s| s.to_string());
        let _ = writeln!(out, "{} {} {}", self.len(), self.leaf_count, seed);
        for c in &self.configs {
            let row: Vec<String> = c.iter().map(|s| s.to_string()).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }

    /// CSV form: a header row of leaf names, then one row per sample.
    pub fn to_csv(&self, tree: &Tree) -> String {
        let mut out = String::new();
        let header: Vec<String> =
            tree.leaves().iter().map(|&v| tree.label(v).map_or_else(|| format!("v{v}"), str::to_string)).collect();
        let _ = writeln!(out, "{}", header.join(","));
        for c in &self.configs {
            let row: Vec<String> = c.iter().map(|s| s.to_string()).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    /// Parse either the text form or the CSV form.
    pub fn parse(text: &str) -> Result<SampleBatch> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(CfnError::Parse { line: 1, msg: "empty sample file".into() })?;
        let spin = |tok: &str, line: usize| -> Result<i8> {
            match tok.trim() {
                "1" | "+1" | "+" => Ok(1),
                "-1" | "-" => Ok(-1),
                other => Err(CfnError::Parse { line, msg: format!("'{other}' is not a ±1 spin") }),
            }
        };
        if first.contains(',') {
            let n = first.split(',').count();
            let mut configs = Vec::new();
            for (i, l) in lines {
                configs.push(l.split(',').map(|t| spin(t, i + 1)).collect::<Result<Vec<_>>>()?);
            }
            return SampleBatch::new(configs, n);
        }
        let head: Vec<&str> = first.split_whitespace().collect();
        if head.len() != 3 {
            return Err(CfnError::Parse { line: 1, msg: "header must be `m n seed`".into() });
        }
        let num = |t: &str| -> Result<usize> {
            t.parse().map_err(|_| CfnError::Parse { line: 1, msg: format!("'{t}' is not an integer") })
        };
        let (m, n) = (num(head[0])?, num(head[1])?);
        let seed = if head[2] == "-" { None } else { Some(num(head[2])? as u64) };
        let mut configs = Vec::with_capacity(m);
        for (i, l) in lines {
            configs.push(l.split_whitespace().map(|t| spin(t, i + 1)).collect::<Result<Vec<_>>>()?);
        }
        if configs.len() != m {
            return Err(CfnError::Parse { line: 1, msg: format!("header says {m} samples, found {}", configs.len()) });
        }
        let mut batch = SampleBatch::new(configs, n)?;
        batch.seed = seed;
        Ok(batch)
    }
}

/// All `2^n` leaf configurations. Configuration `k` gives leaf `i` spin −1
/// iff bit `n − 1 − i` of `k` is set, so the first is all-plus and the order
/// is lexicographic with `+ < −`.
pub fn enumerate_leaf_configs(tree: &Tree, cap: usize) -> Result<Vec<LeafConfig>> {
    let n = tree.leaf_count();
    if n > cap {
        return Err(CfnError::CapExceeded { what: "leaf enumeration", n, cap });
    }
    Ok((0..1usize << n).map(|k| (0..n).map(|i| if k >> (n - 1 - i) & 1 == 1 { -1 } else { 1 }).collect()).collect())
}

/// Natural log of the marginal probability of a leaf pattern.
pub fn log_leaf_config_probability(tree: &Tree, theta: &[f64], cfg: &[i8]) -> f64 {
    let root = tree.default_root();
    let pl = partial_likelihoods(tree, theta, cfg, root);
    pl.log_marginal(root)
}

/// Marginal probability of a leaf pattern.
pub fn leaf_config_probability(tree: &Tree, theta: &[f64], cfg: &[i8]) -> f64 {
    log_leaf_config_probability(tree, theta, cfg).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute force over all internal spin assignments.
    fn brute_probability(tree: &Tree, theta: &[f64], cfg: &[i8]) -> f64 {
        let internal: Vec<usize> = (0..tree.vertex_count()).filter(|&v| !tree.is_leaf(v)).collect();
        let mut total = 0.0;
        for mask in 0..1usize << internal.len() {
            let mut spins = vec![0i8; tree.vertex_count()];
            for (i, &v) in tree.leaves().iter().enumerate() {
                spins[v] = cfg[i];
            }
            for (i, &v) in internal.iter().enumerate() {
                spins[v] = if mask >> i & 1 == 1 { -1 } else { 1 };
            }
            let mut p = 0.5;
            for (e, &(a, b)) in tree.edges().iter().enumerate() {
                let agree = spins[a] == spins[b];
                p *= if agree { (1.0 + theta[e]) / 2.0 } else { (1.0 - theta[e]) / 2.0 };
            }
            total += p;
        }
        total
    }

    #[test]
    fn conversions() {
        assert_eq!(convert_edge_parameter(0.5, ParamKind::P).unwrap(), 0.0);
        assert_eq!(convert_edge_parameter(0.0, ParamKind::Len).unwrap(), 1.0);
        assert!((convert_edge_parameter(0.1, ParamKind::Len).unwrap() - 0.818_730_753_077_981_9).abs() < 1e-15);
        assert!(convert_edge_parameter(1.5, ParamKind::P).is_err());
        assert!(convert_edge_parameter(-0.1, ParamKind::Len).is_err());
        assert!(convert_edge_parameter(1.01, ParamKind::Theta).is_err());
    }

    #[test]
    fn box_validation() {
        assert!(RegimeBox::with_defaults(0.01).is_ok());
        assert!(RegimeBox::new(0.01, 1.0, 2.0, 1.5, 4.0).is_err());
        assert!(RegimeBox::new(0.01, 1.0, 2.0, 0.5, 0.9).is_err());
        assert!(RegimeBox::new(0.2, 1.0, 2.0, 0.5, 4.0).is_err());
    }

    #[test]
    fn sampled_params_stay_in_box_and_are_deterministic() {
        let t = Tree::caterpillar(8).unwrap();
        let b = RegimeBox::with_defaults(0.01).unwrap();
        let truth = sample_edge_params(&t, &b, Role::Truth, 3);
        assert!(truth.theta.iter().all(|&x| (0.96..=0.98).contains(&x)));
        let est = sample_edge_params(&t, &b, Role::Estimate, 3);
        assert!(est.theta.iter().all(|&x| (0.92..=0.99).contains(&x)));
        assert_eq!(truth, sample_edge_params(&t, &b, Role::Truth, 3));
        assert!(check_box_membership(&truth, &b, Role::Truth).0);
        assert!(check_box_membership(&est, &b, Role::Estimate).0);
    }

    #[test]
    fn box_membership_lists_violations() {
        let t = Tree::quartet();
        let b = RegimeBox::with_defaults(0.01).unwrap();
        let good = EdgeParams::new(vec![0.97; 5], Role::Truth).unwrap();
        assert_eq!(check_box_membership(&good, &b, Role::Truth), (true, vec![]));
        let bad = EdgeParams::new(vec![0.5; t.edge_count()], Role::Truth).unwrap();
        assert_eq!(check_box_membership(&bad, &b, Role::Truth), (false, vec![0, 1, 2, 3, 4]));
    }

    #[test]
    fn deterministic_broadcasts() {
        let t = Tree::caterpillar(7).unwrap();
        let ones = vec![1.0; t.edge_count()];
        for j in 0..20 {
            let s = sample_spins(&t, &ones, 1, j);
            assert!(s.iter().all(|&x| x == s[0]));
        }
        let neg = vec![-1.0; t.edge_count()];
        let s = sample_spins(&t, &neg, 1, 0);
        for &(a, b) in t.edges() {
            assert_eq!(s[a], -s[b]);
        }
    }

    #[test]
    fn root_flip_flips_everything() {
        let t = Tree::caterpillar(6).unwrap();
        let theta = vec![0.3; t.edge_count()];
        let u = rng::uniforms(9, 4, t.edge_count());
        let plus = broadcast(&t, &theta, 1, &u);
        let minus = broadcast(&t, &theta, -1, &u);
        assert!(plus.iter().zip(&minus).all(|(a, b)| *a == -*b));
    }

    #[test]
    fn single_edge_disagreement_rate() {
        let t = Tree::caterpillar(2).unwrap();
        let m = 100_000;
        let batch = SampleBatch::simulate(&t, &[0.5], m, 42);
        let disagree = batch.configs.iter().filter(|c| c[0] != c[1]).count() as f64 / m as f64;
        let se = (0.25f64 * 0.75 / m as f64).sqrt();
        assert!((disagree - 0.25).abs() < 3.0 * se, "rate {disagree}");
    }

    #[test]
    fn probabilities() {
        let t = Tree::caterpillar(2).unwrap();
        assert!((leaf_config_probability(&t, &[0.5], &[1, 1]) - 0.375).abs() < 1e-15);

        let q = Tree::quartet();
        let b = RegimeBox::with_defaults(0.01).unwrap();
        let theta = sample_edge_params(&q, &b, Role::Truth, 1).theta;
        let p = leaf_config_probability(&q, &theta, &[1, 1, 1, 1]);
        assert!((p - brute_probability(&q, &theta, &[1, 1, 1, 1])).abs() < 1e-15);

        let theta = [0.3, -0.2, 0.8, 0.1, 0.55];
        for cfg in enumerate_leaf_configs(&q, 16).unwrap() {
            let flipped: Vec<i8> = cfg.iter().map(|s| -s).collect();
            let p = leaf_config_probability(&q, &theta, &cfg);
            assert!((p - leaf_config_probability(&q, &theta, &flipped)).abs() < 1e-16);
            assert!((p - brute_probability(&q, &theta, &cfg)).abs() < 1e-15);
        }
    }

    #[test]
    fn normalization_up_to_eight_leaves() {
        for n in 2..=8 {
            let t = Tree::caterpillar(n).unwrap();
            let theta: Vec<f64> = (0..t.edge_count()).map(|e| 0.9 - 0.13 * e as f64 % 1.7).collect();
            let configs = enumerate_leaf_configs(&t, 16).unwrap();
            assert_eq!(configs.len(), 1 << n);
            let total: f64 = configs.iter().map(|c| leaf_config_probability(&t, &theta, c)).sum();
            assert!((total - 1.0).abs() < 1e-12, "n={n}: {total}");
        }
        assert!(enumerate_leaf_configs(&Tree::caterpillar(17).unwrap(), 16).is_err());
    }

    #[test]
    fn empirical_frequencies_match_probabilities() {
        let q = Tree::quartet();
        let b = RegimeBox::with_defaults(0.05).unwrap();
        let theta = sample_edge_params(&q, &b, Role::Truth, 8).theta;
        let m = 200_000;
        let batch = SampleBatch::simulate(&q, &theta, m, 77);
        for cfg in enumerate_leaf_configs(&q, 16).unwrap() {
            let p = leaf_config_probability(&q, &theta, &cfg);
            let freq = batch.configs.iter().filter(|c| **c == cfg).count() as f64 / m as f64;
            let se = (p * (1.0 - p) / m as f64).sqrt().max(1e-12);
            assert!((freq - p).abs() <= 4.0 * se + 1e-9, "{cfg:?}: {freq} vs {p}");
        }
    }

    #[test]
    fn batch_text_and_csv_parse() {
        let t = Tree::quartet();
        let batch = SampleBatch::simulate(&t, &[0.9; 5], 5, 2);
        let back = SampleBatch::parse(&batch.to_text()).unwrap();
        assert_eq!(back, batch);
        let csv = SampleBatch::parse(&batch.to_csv(&t)).unwrap();
        assert_eq!(csv.configs, batch.configs);
        assert!(SampleBatch::parse("2 2 1\n1 1\n").is_err());
        assert!(SampleBatch::parse("1 2 1\n1 0\n").is_err());
    }
}
