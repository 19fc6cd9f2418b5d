//! Maximum-likelihood fitting of edge parameters.
//!
//! Both fitters work on a weighted set of leaf patterns: a sample batch
//! (uniform weights) or every pattern weighted by its probability under `θ*`
//! (the population objective). The per-edge update solves the score equation
//! of one edge exactly. With the other parameters fixed, each pattern's
//! likelihood is affine in `θ_e`, `P ∝ 1 + θ_e Z_x Z_y`, so the slice
//! `θ ↦ Σ w log(1 + θ a)` is concave and has at most one stationary point.
//! The Newton-with-bisection solver is our choice; nothing prescribes it.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::error::{CfnError, Result};
use crate::likelihood::sample_gradient;
use crate::magnetization::directed_magnetizations;
use crate::model::{
    enumerate_leaf_configs, leaf_config_probability, log_leaf_config_probability, LeafConfig, SampleBatch,
};
use crate::parallel::{chunked_sum, ordered_map};
use crate::tree::Tree;

/// Distance kept from `±1` by the feasible intervals.
pub const EDGE_EPS: f64 = 1e-9;
const NEWTON_ITERS: usize = 60;
const NEWTON_RESIDUAL: f64 = 1e-14;

/// Weighted leaf patterns whose weighted mean log-probability is maximized.
#[derive(Debug, Clone)]
pub struct Objective<'a> {
    configs: Cow<'a, [LeafConfig]>,
    weights: Vec<f64>,
}

impl<'a> Objective<'a> {
    pub fn batch(batch: &'a SampleBatch) -> Result<Self> {
        if batch.is_empty() {
            return Err(CfnError::InvalidInput("empty sample batch".into()));
        }
        let w = 1.0 / batch.len() as f64;
        Ok(Objective { configs: Cow::Borrowed(&batch.configs), weights: vec![w; batch.len()] })
    }

    /// Population objective `E_θ*[log P_θ(σ_L)]`; patterns of probability
    /// zero under `θ*` are dropped.
    pub fn exact(tree: &Tree, theta_star: &[f64], cap: usize) -> Result<Objective<'static>> {
        if theta_star.len() != tree.edge_count() {
            return Err(CfnError::InvalidInput("θ* length does not match the edge count".into()));
        }
        let mut configs = Vec::new();
        let mut weights = Vec::new();
        for c in enumerate_leaf_configs(tree, cap)? {
            let p = leaf_config_probability(tree, theta_star, &c);
            if p > 0.0 {
                configs.push(c);
                weights.push(p);
            }
        }
        Ok(Objective { configs: Cow::Owned(configs), weights })
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn value(&self, tree: &Tree, theta: &[f64]) -> Result<f64> {
        let s = chunked_sum(self.len(), 1, |k, out| {
            let lp = log_leaf_config_probability(tree, theta, &self.configs[k]);
            if lp == f64::NEG_INFINITY {
                return Err(CfnError::ZeroProbability(k));
            }
            out[0] = self.weights[k] * lp;
            Ok(())
        })?;
        Ok(s[0])
    }

    pub fn gradient(&self, tree: &Tree, theta: &[f64]) -> Result<Vec<f64>> {
        chunked_sum(self.len(), tree.edge_count(), |k, out| {
            let table = directed_magnetizations(tree, theta, &self.configs[k])?;
            sample_gradient(theta, &table, out)?;
            out.iter_mut().for_each(|g| *g *= self.weights[k]);
            Ok(())
        })
    }

    /// `(weight, Z_x Z_y)` per pattern for edge `e`; neither factor depends on `θ_e`.
    fn edge_products(&self, tree: &Tree, theta: &[f64], e: usize) -> Result<Vec<(f64, f64)>> {
        let products = ordered_map(self.len(), |k| {
            let (zx, zy) = directed_magnetizations(tree, theta, &self.configs[k])?.pair(e);
            Ok(zx * zy)
        })?;
        Ok(self.weights.iter().copied().zip(products).collect())
    }
}

/// Feasible values for one coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    /// `[0, 1 − ε]`.
    pub fn ferromagnetic() -> Self {
        Interval { lo: 0.0, hi: 1.0 - EDGE_EPS }
    }

    /// `[−1 + ε, 1 − ε]`.
    pub fn widened() -> Self {
        Interval { lo: -1.0 + EDGE_EPS, hi: 1.0 - EDGE_EPS }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lo < self.hi && self.lo > -1.0 && self.hi < 1.0) {
            return Err(CfnError::InvalidInput(format!(
                "interval [{}, {}] must be nonempty and inside (-1, 1)",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    fn on_boundary(&self, x: f64) -> bool {
        x <= self.lo || x >= self.hi
    }
}

impl Default for Interval {
    fn default() -> Self {
        Interval::ferromagnetic()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoordinateStep {
    pub value: f64,
    /// Every pattern has `Z_x Z_y = 0`, so the slice is constant and the
    /// current value is returned.
    pub flat: bool,
}

fn slice_score(terms: &[(f64, f64)], t: f64) -> (f64, f64) {
    let mut g = 0.0;
    let mut h = 0.0;
    for &(w, a) in terms {
        let d = 1.0 + t * a;
        g += w * a / d;
        h -= w * a * a / (d * d);
    }
    (g, h)
}

/// Maximize the slice `t ↦ Σ w log(1 + t a)` over `interval`, starting at `start`.
fn maximize_slice(terms: &[(f64, f64)], start: f64, interval: Interval) -> f64 {
    let (g_lo, _) = slice_score(terms, interval.lo);
    if g_lo <= 0.0 {
        return interval.lo;
    }
    let (g_hi, _) = slice_score(terms, interval.hi);
    if g_hi >= 0.0 {
        return interval.hi;
    }
    // The score is decreasing, positive at `lo` and negative at `hi`.
    let (mut lo, mut hi) = (interval.lo, interval.hi);
    let mut t = interval.clamp(start);
    for _ in 0..NEWTON_ITERS {
        let (g, h) = slice_score(terms, t);
        if g.abs() < NEWTON_RESIDUAL {
            break;
        }
        if g > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let newton = t - g / h;
        t = if h < 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
    }
    t
}

/// Exact maximization of the objective over `θ_e` with the other edges fixed.
pub fn coordinate_update(
    tree: &Tree,
    theta: &[f64],
    objective: &Objective,
    e: usize,
    interval: Interval,
) -> Result<CoordinateStep> {
    interval.validate()?;
    if theta.len() != tree.edge_count() {
        return Err(CfnError::InvalidInput("θ length does not match the edge count".into()));
    }
    if e >= theta.len() {
        return Err(CfnError::UnknownEdge(e));
    }
    let terms = objective.edge_products(tree, theta, e)?;
    if terms.iter().all(|&(_, a)| a == 0.0) {
        return Ok(CoordinateStep { value: theta[e], flat: true });
    }
    Ok(CoordinateStep { value: maximize_slice(&terms, theta[e], interval), flat: false })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Tolerance,
    MaxIter,
    /// Converged with at least one coordinate pinned at the edge of its interval.
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta: Vec<f64>,
    /// Objective at the start and after each iteration.
    pub objective: Vec<f64>,
    /// `‖θ − θ*‖_∞` at the start and after each iteration; empty without `θ*`.
    pub error: Vec<f64>,
    pub iterations: usize,
    pub stop: StopReason,
    /// Edges whose slice was flat at their last update.
    pub flat_edges: Vec<usize>,
}

impl FitResult {
    pub fn final_error(&self) -> Option<f64> {
        self.error.last().copied()
    }

    /// `error[t+1] / error[t]` over the recorded iterations.
    pub fn error_ratios(&self) -> Vec<f64> {
        self.error.windows(2).map(|w| w[1] / w[0]).collect()
    }

    pub fn objective_nondecreasing(&self, tol: f64) -> bool {
        self.objective.windows(2).all(|w| w[1] >= w[0] - tol)
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("iteration,objective,error\n");
        for (i, obj) in self.objective.iter().enumerate() {
            let err = self.error.get(i).map(f64::to_string).unwrap_or_default();
            s.push_str(&format!("{i},{obj},{err}\n"));
        }
        s
    }
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn check_start(tree: &Tree, theta0: &[f64], theta_star: Option<&[f64]>) -> Result<()> {
    if theta0.len() != tree.edge_count() {
        return Err(CfnError::InvalidInput("θ̂₀ length does not match the edge count".into()));
    }
    if let Some(ts) = theta_star {
        if ts.len() != tree.edge_count() {
            return Err(CfnError::InvalidInput("θ* length does not match the edge count".into()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AscentOptions {
    pub sweeps: usize,
    /// Stop once a sweep moves no coordinate by more than this.
    pub tol: f64,
    pub interval: Interval,
}

impl Default for AscentOptions {
    fn default() -> Self {
        AscentOptions { sweeps: 200, tol: 1e-12, interval: Interval::default() }
    }
}

/// Cyclic coordinate ascent in edge-id order. One iteration is one sweep.
pub fn coordinate_ascent(
    tree: &Tree,
    theta0: &[f64],
    objective: &Objective,
    opts: AscentOptions,
    theta_star: Option<&[f64]>,
) -> Result<FitResult> {
    check_start(tree, theta0, theta_star)?;
    opts.interval.validate()?;
    let mut theta = theta0.to_vec();
    let mut values = vec![objective.value(tree, &theta)?];
    let mut error: Vec<f64> = theta_star.iter().map(|ts| linf(&theta, ts)).collect();
    let mut flat = vec![false; theta.len()];
    let mut stop = StopReason::MaxIter;
    let mut iterations = 0;
    for _ in 0..opts.sweeps {
        let before = theta.clone();
        for e in 0..theta.len() {
            let step = coordinate_update(tree, &theta, objective, e, opts.interval)?;
            theta[e] = step.value;
            flat[e] = step.flat;
        }
        iterations += 1;
        values.push(objective.value(tree, &theta)?);
        if let Some(ts) = theta_star {
            error.push(linf(&theta, ts));
        }
        if linf(&theta, &before) < opts.tol {
            stop = if theta.iter().any(|&t| opts.interval.on_boundary(t)) {
                StopReason::Boundary
            } else {
                StopReason::Tolerance
            };
            break;
        }
    }
    let flat_edges = flat.iter().enumerate().filter(|(_, &f)| f).map(|(e, _)| e).collect();
    Ok(FitResult { theta, objective: values, error, iterations, stop, flat_edges })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientOptions {
    pub step: f64,
    /// The box `[lo, hi]^E` every iterate is projected onto.
    pub bounds: Interval,
    pub iters: usize,
    /// Stop once `‖(Proj(θ + s∇) − θ)/s‖_∞` falls below this.
    pub tol: f64,
}

/// `θ ← Proj_box(θ + step · ∇ℓ(θ))`.
pub fn projected_gradient_ascent(
    tree: &Tree,
    theta0: &[f64],
    objective: &Objective,
    opts: GradientOptions,
    theta_star: Option<&[f64]>,
) -> Result<FitResult> {
    if !(opts.step > 0.0) {
        return Err(CfnError::InvalidInput(format!("step {} must be positive", opts.step)));
    }
    check_start(tree, theta0, theta_star)?;
    opts.bounds.validate()?;
    if theta0.iter().any(|&t| t < opts.bounds.lo || t > opts.bounds.hi) {
        return Err(CfnError::InvalidInput("θ̂₀ lies outside the box".into()));
    }
    let mut theta = theta0.to_vec();
    let mut values = vec![objective.value(tree, &theta)?];
    let mut error: Vec<f64> = theta_star.iter().map(|ts| linf(&theta, ts)).collect();
    let mut stop = StopReason::MaxIter;
    let mut iterations = 0;
    for _ in 0..opts.iters {
        let g = objective.gradient(tree, &theta)?;
        let next: Vec<f64> = theta.iter().zip(&g).map(|(t, d)| opts.bounds.clamp(t + opts.step * d)).collect();
        let residual = linf(&next, &theta) / opts.step;
        if residual < opts.tol {
            stop = if theta.iter().any(|&t| opts.bounds.on_boundary(t)) {
                StopReason::Boundary
            } else {
                StopReason::Tolerance
            };
            break;
        }
        theta = next;
        iterations += 1;
        values.push(objective.value(tree, &theta)?);
        if let Some(ts) = theta_star {
            error.push(linf(&theta, ts));
        }
    }
    Ok(FitResult { theta, objective: values, error, iterations, stop, flat_edges: vec![] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::steel_example;
    use crate::landscape::steel_fixture;
    use crate::model::{sample_edge_params, RegimeBox, Role};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single_edge() -> Tree {
        Tree::new(2, vec![(0, 1)], vec![None, None]).unwrap()
    }

    #[test]
    fn single_edge_update_recovers_truth() {
        let t = single_edge();
        for &ts in &[0.0, 0.3, 0.9, 0.99] {
            let obj = Objective::exact(&t, &[ts], 4).unwrap();
            for &start in &[0.0, 0.5, 0.95] {
                let step = coordinate_update(&t, &[start], &obj, 0, Interval::default()).unwrap();
                assert!((step.value - ts).abs() < 1e-13, "{} vs {ts}", step.value);
                assert!(!step.flat);
            }
        }
        // Anti-ferromagnetic truth: the default interval clamps at 0, the wide one finds it.
        let obj = Objective::exact(&t, &[-0.4], 4).unwrap();
        assert_eq!(coordinate_update(&t, &[0.2], &obj, 0, Interval::default()).unwrap().value, 0.0);
        let wide = coordinate_update(&t, &[0.2], &obj, 0, Interval::widened()).unwrap().value;
        assert!((wide + 0.4).abs() < 1e-13);
    }

    #[test]
    fn agreeing_samples_hit_the_upper_clamp() {
        let t = single_edge();
        let batch = SampleBatch::new(vec![vec![1, 1], vec![-1, -1], vec![1, 1]], 2).unwrap();
        let obj = Objective::batch(&batch).unwrap();
        let step = coordinate_update(&t, &[0.3], &obj, 0, Interval::default()).unwrap();
        assert_eq!(step.value, 1.0 - EDGE_EPS);
    }

    #[test]
    fn flat_slice_keeps_the_current_value() {
        // Edge u-v of the quartet with θ_A = 0: Z on A's side of u-v is zero.
        let t = Tree::quartet();
        let batch = SampleBatch::simulate(&t, &[0.8; 5], 50, 1);
        let obj = Objective::batch(&batch).unwrap();
        let theta = [0.0, 0.0, 0.7, 0.7, 0.4];
        let step = coordinate_update(&t, &theta, &obj, 4, Interval::default()).unwrap();
        assert!(step.flat);
        assert_eq!(step.value, 0.4);
    }

    #[test]
    fn update_ignores_sample_order() {
        let t = Tree::quartet();
        let batch = SampleBatch::simulate(&t, &[0.9, 0.8, 0.85, 0.95, 0.7], 300, 2);
        let mut reversed = batch.clone();
        reversed.configs.reverse();
        let theta = [0.5; 5];
        for e in 0..5 {
            let a = coordinate_update(&t, &theta, &Objective::batch(&batch).unwrap(), e, Interval::default()).unwrap();
            let b =
                coordinate_update(&t, &theta, &Objective::batch(&reversed).unwrap(), e, Interval::default()).unwrap();
            assert!((a.value - b.value).abs() < 1e-14);
        }
    }

    #[test]
    fn update_solves_the_score_equation() {
        let t = Tree::quartet();
        let batch = SampleBatch::simulate(&t, &[0.9, 0.8, 0.85, 0.95, 0.7], 400, 3);
        let obj = Objective::batch(&batch).unwrap();
        let theta = vec![0.85, 0.75, 0.8, 0.9, 0.6];
        let mut interior = 0;
        for e in 0..5 {
            let step = coordinate_update(&t, &theta, &obj, e, Interval::default()).unwrap();
            let mut moved = theta.clone();
            moved[e] = step.value;
            let g = obj.gradient(&t, &moved).unwrap()[e];
            // Either stationary or pinned at a clamp with the score pointing outward.
            let pinned = (step.value == 1.0 - EDGE_EPS && g > 0.0) || (step.value == 0.0 && g < 0.0);
            assert!(g.abs() < 1e-9 || pinned, "edge {e}: θ {} score {g}", step.value);
            if !pinned {
                interior += 1;
            }
        }
        assert!(interior >= 2);
    }

    #[test]
    fn truth_is_a_fixed_point_of_both_fitters() {
        let t = Tree::quartet();
        let rbox = RegimeBox::with_defaults(0.01).unwrap();
        let ts = sample_edge_params(&t, &rbox, Role::Truth, 6).theta;
        let obj = Objective::exact(&t, &ts, 8).unwrap();
        let g = obj.gradient(&t, &ts).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-10), "{g:?}");
        let ca = coordinate_ascent(&t, &ts, &obj, AscentOptions::default(), Some(&ts)).unwrap();
        assert!(ca.final_error().unwrap() < 1e-10);
        let (lo, hi) = rbox.theta_interval(Role::Estimate);
        let opts = GradientOptions { step: 0.005, bounds: Interval { lo, hi }, iters: 10, tol: 1e-10 };
        let pga = projected_gradient_ascent(&t, &ts, &obj, opts, Some(&ts)).unwrap();
        assert_eq!(pga.stop, StopReason::Tolerance);
        assert_eq!(pga.iterations, 0);
    }

    #[test]
    fn coordinate_ascent_is_monotone_and_converges() {
        let t = Tree::quartet();
        let rbox = RegimeBox::with_defaults(0.05).unwrap();
        let ts = sample_edge_params(&t, &rbox, Role::Truth, 8).theta;
        let obj = Objective::exact(&t, &ts, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (lo, hi) = rbox.theta_interval(Role::Estimate);
        for _ in 0..5 {
            let start: Vec<f64> = (0..5).map(|_| rng.random_range(lo..=hi)).collect();
            let fit = coordinate_ascent(&t, &start, &obj, AscentOptions::default(), Some(&ts)).unwrap();
            assert!(fit.objective_nondecreasing(1e-12));
            assert!(fit.final_error().unwrap() < 1e-8, "{:?}", fit.error);
            assert_eq!(fit.stop, StopReason::Tolerance);
        }
    }

    #[test]
    fn projected_gradient_stays_in_the_box() {
        let t = Tree::quartet();
        let rbox = RegimeBox::with_defaults(0.05).unwrap();
        let ts = sample_edge_params(&t, &rbox, Role::Truth, 8).theta;
        let obj = Objective::exact(&t, &ts, 8).unwrap();
        let (lo, hi) = rbox.theta_interval(Role::Estimate);
        let bounds = Interval { lo, hi };
        let opts = GradientOptions { step: 0.025, bounds, iters: 400, tol: 1e-9 };
        let fit = projected_gradient_ascent(&t, &[lo; 5], &obj, opts, Some(&ts)).unwrap();
        assert!(fit.theta.iter().all(|&x| (lo..=hi).contains(&x)));
        assert!(fit.final_error().unwrap() < 1e-8);
        assert!(projected_gradient_ascent(&t, &[lo; 5], &obj, GradientOptions { step: 0.0, ..opts }, None).is_err());
        assert!(projected_gradient_ascent(&t, &[0.1; 5], &obj, opts, None).is_err());
    }

    #[test]
    fn steel_batch_converges_to_a_boundary_maximum() {
        let (t, batch) = steel_fixture();
        let obj = Objective::batch(&batch).unwrap();
        let best = steel_example(0.25).unwrap().polished_best;
        let fit = coordinate_ascent(&t, &[0.5, 0.6, 0.4, 0.55, 0.7], &obj, AscentOptions::default(), None).unwrap();
        assert!(fit.objective_nondecreasing(1e-12));
        assert_eq!(fit.stop, StopReason::Boundary);
        assert!((fit.objective.last().unwrap() - best).abs() < 1e-6, "{:?} vs {best}", fit.objective.last());
    }
}
