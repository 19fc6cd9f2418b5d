//! Leaf log-likelihood and its closed-form derivatives.
//!
//! For an edge `e = {x, y}` write `Z_x = Z(x→y)` and `Z_y = Z(y→x)`. The
//! per-sample score is `Z_x Z_y / (1 + θ̂_e Z_x Z_y)` and the diagonal of the
//! Hessian is minus its square. Off-diagonal entries follow the path between
//! the two edges; see [`PathSignals`].

use serde::{Deserialize, Serialize};

use crate::error::{CfnError, Result};
use crate::linalg::SymMatrix;
use crate::magnetization::{directed_magnetizations, partial_likelihoods, q_combine, MagnetizationTable};
use crate::model::{enumerate_leaf_configs, leaf_config_probability, restrict_to_leaves, sample_spins, SampleBatch};
use crate::parallel::chunked_sum;
use crate::stats::mean_and_se;
use crate::tree::{PathDecomposition, Tree};

/// Floor on `1 + θ̂_e Z_x Z_y`. Inside the estimate box it is at least `2ĉδ`.
pub const DENOM_FLOOR: f64 = 1e-12;

/// Default cap on the number of leaves for exact enumeration.
pub const EXACT_CAP: usize = 14;

fn check_lengths(tree: &Tree, theta: &[f64], batch: &SampleBatch) -> Result<()> {
    if theta.len() != tree.edge_count() {
        return Err(CfnError::InvalidInput(format!("{} parameters for {} edges", theta.len(), tree.edge_count())));
    }
    if batch.leaf_count != tree.leaf_count() {
        return Err(CfnError::InvalidInput(format!(
            "samples cover {} leaves, tree has {}",
            batch.leaf_count,
            tree.leaf_count()
        )));
    }
    if batch.is_empty() {
        return Err(CfnError::InvalidInput("empty sample batch".into()));
    }
    Ok(())
}

/// `(1/m) Σ_j ln P_θ̂(σ^{(j)})`, with the pruning pass hung from `root`.
pub fn log_likelihood_rooted(tree: &Tree, theta: &[f64], batch: &SampleBatch, root: usize) -> Result<f64> {
    check_lengths(tree, theta, batch)?;
    let sum = chunked_sum(batch.len(), 1, |j, out| {
        let lp = partial_likelihoods(tree, theta, &batch.configs[j], root).log_marginal(root);
        if !lp.is_finite() {
            return Err(CfnError::ZeroProbability(j));
        }
        out[0] = lp;
        Ok(())
    })?;
    Ok(sum[0] / batch.len() as f64)
}

/// Average log-likelihood of the batch.
pub fn log_likelihood(tree: &Tree, theta: &[f64], batch: &SampleBatch) -> Result<f64> {
    log_likelihood_rooted(tree, theta, batch, tree.default_root())
}

#[inline]
fn score_denominator(theta_e: f64, prod: f64, e: usize) -> Result<f64> {
    let den = 1.0 + theta_e * prod;
    if den < DENOM_FLOOR {
        return Err(CfnError::DenominatorFloor { edge: e, value: den });
    }
    Ok(den)
}

/// Per-sample score written into `out` (length `|E|`).
pub fn sample_gradient(theta: &[f64], table: &MagnetizationTable, out: &mut [f64]) -> Result<()> {
    for (e, g) in out.iter_mut().enumerate() {
        let (za, zb) = table.pair(e);
        let prod = za * zb;
        *g = prod / score_denominator(theta[e], prod, e)?;
    }
    Ok(())
}

pub fn gradient(tree: &Tree, theta: &[f64], batch: &SampleBatch) -> Result<Vec<f64>> {
    check_lengths(tree, theta, batch)?;
    let ne = tree.edge_count();
    let sum = chunked_sum(batch.len(), ne, |j, out| {
        let table = directed_magnetizations(tree, theta, &batch.configs[j])?;
        sample_gradient(theta, &table, out)
    })?;
    Ok(sum.into_iter().map(|s| s / batch.len() as f64).collect())
}

/// Signals along the path from `f = {y_0, y_{−1}}` to `e = {y_N, y_{N+1}}`.
///
/// `ξ_0 = θ̂_f Z(y_{−1}→y_0)`, `ξ_{j+1} = θ̂_j q(η_j, ξ_j)` with
/// `θ̂_j = θ̂_{y_j y_{j+1}}`, `η_j = θ̂_{y_j w_j} Z(w_j→y_j)` for `j ≤ N` and
/// `η_{N+1} = Z_x`. Hence `ξ_{N+1} = θ̂_e Z_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSignals {
    pub n: usize,
    /// `ξ_0 ..= ξ_{N+1}`.
    pub xi: Vec<f64>,
    /// `η_0 ..= η_{N+1}`.
    pub eta: Vec<f64>,
    /// `θ̂_0 ..= θ̂_N`; the last one is `θ̂_e`.
    pub theta_path: Vec<f64>,
    pub theta_f: f64,
    pub z_x: f64,
    pub z_y: f64,
    pub z_v: f64,
}

impl PathSignals {
    pub fn from_table(tree: &Tree, theta: &[f64], table: &MagnetizationTable, pd: &PathDecomposition) -> Self {
        let n = pd.n;
        let mut xi = Vec::with_capacity(n + 2);
        let mut eta = Vec::with_capacity(n + 2);
        let mut theta_path = Vec::with_capacity(n + 1);
        let z_v = table.along(tree, pd.f, pd.v());
        let theta_f = theta[pd.f];
        xi.push(theta_f * z_v);
        for j in 0..=n {
            let yj = pd.y(j as isize);
            let ew = pd.off_path_edges[j];
            eta.push(theta[ew] * table.along(tree, ew, pd.off_path[j]));
            let step = pd.step_edge(j as isize);
            theta_path.push(theta[step]);
            xi.push(theta[step] * table.along(tree, step, yj));
        }
        let z_x = table.along(tree, pd.e, pd.x());
        let z_y = table.along(tree, pd.e, pd.y(n as isize));
        eta.push(z_x);
        PathSignals { n, xi, eta, theta_path, theta_f, z_x, z_y, z_v }
    }

    /// `θ̂_e`.
    pub fn theta_e(&self) -> f64 {
        self.theta_path[self.n]
    }

    /// `Π_{j=0}^{N} (1 − η_j²)/(1 + η_j ξ_j)²`.
    pub fn chain_product(&self) -> f64 {
        (0..=self.n).map(|j| (1.0 - self.eta[j] * self.eta[j]) / (1.0 + self.eta[j] * self.xi[j]).powi(2)).product()
    }

    /// `∂Z_y/∂θ̂_f = Z_v · Π_{j<N} θ̂_j · Π_{j≤N} (1 − η_j²)/(1 + η_j ξ_j)²`.
    pub fn dzy_dtheta_f(&self) -> f64 {
        let path: f64 = self.theta_path[..self.n].iter().product();
        self.z_v * path * self.chain_product()
    }

    /// Per-sample `∂²ℓ/∂θ̂_e∂θ̂_f = Z_x · ∂Z_y/∂θ̂_f / (1 + θ̂_e Z_x Z_y)²`.
    pub fn hessian_entry(&self) -> Result<f64> {
        let den = score_denominator(self.theta_e(), self.z_x * self.z_y, usize::MAX)?;
        Ok(self.z_x * self.dzy_dtheta_f() / (den * den))
    }

    /// Ceiling `(1 + ξ_{N+1} η_{N+1})^{−2} · Π_{j≤N} (1 − η_j²)/(1 + η_j ξ_j)²`
    /// on `|∂²ℓ/∂θ̂_e∂θ̂_f|`.
    pub fn product_bound(&self) -> f64 {
        let last = 1.0 + self.xi[self.n + 1] * self.eta[self.n + 1];
        self.chain_product() / (last * last)
    }

    /// Recompute `ξ_1..ξ_{N+1}` from `ξ_0` by the defining recursion.
    pub fn recursed_xi(&self) -> Result<Vec<f64>> {
        let mut out = vec![self.xi[0]];
        for j in 0..=self.n {
            let next = self.theta_path[j] * q_combine(self.eta[j], out[j])?;
            out.push(next);
        }
        Ok(out)
    }
}

pub fn path_signals(tree: &Tree, theta: &[f64], cfg: &[i8], e: usize, f: usize) -> Result<PathSignals> {
    let pd = tree.path_decomposition(e, f)?;
    let table = directed_magnetizations(tree, theta, cfg)?;
    Ok(PathSignals::from_table(tree, theta, &table, &pd))
}

/// Path decompositions for every unordered edge pair, computed once per tree.
#[derive(Debug, Clone)]
pub struct HessianPlan {
    pub pairs: Vec<PathDecomposition>,
}

impl HessianPlan {
    pub fn new(tree: &Tree) -> Result<Self> {
        let ne = tree.edge_count();
        let mut pairs = Vec::with_capacity(ne * ne.saturating_sub(1) / 2);
        for e in 0..ne {
            for f in e + 1..ne {
                pairs.push(tree.path_decomposition(e, f)?);
            }
        }
        Ok(HessianPlan { pairs })
    }
}

/// Per-sample Hessian written row-major into `out` (length `|E|²`).
pub fn sample_hessian(
    tree: &Tree,
    theta: &[f64],
    table: &MagnetizationTable,
    plan: &HessianPlan,
    out: &mut [f64],
) -> Result<()> {
    let ne = tree.edge_count();
    for e in 0..ne {
        let (za, zb) = table.pair(e);
        let prod = za * zb;
        let den = score_denominator(theta[e], prod, e)?;
        out[e * ne + e] = -(prod * prod) / (den * den);
    }
    for pd in &plan.pairs {
        let signals = PathSignals::from_table(tree, theta, table, pd);
        let v = signals.hessian_entry().map_err(|err| match err {
            CfnError::DenominatorFloor { value, .. } => CfnError::DenominatorFloor { edge: pd.e, value },
            other => other,
        })?;
        out[pd.e * ne + pd.f] = v;
        out[pd.f * ne + pd.e] = v;
    }
    Ok(())
}

pub fn hessian(tree: &Tree, theta: &[f64], batch: &SampleBatch) -> Result<SymMatrix> {
    check_lengths(tree, theta, batch)?;
    let plan = HessianPlan::new(tree)?;
    let ne = tree.edge_count();
    let sum = chunked_sum(batch.len(), ne * ne, |j, out| {
        let table = directed_magnetizations(tree, theta, &batch.configs[j])?;
        sample_hessian(tree, theta, &table, &plan, out)
    })?;
    let m = batch.len() as f64;
    SymMatrix::from_row_major(ne, sum.into_iter().map(|s| s / m).collect())
}

/// Central differences of an arbitrary function: gradient with step `hg`,
/// Hessian from mixed second differences with step `hh`.
pub fn central_differences<F>(f: F, x: &[f64], hg: f64, hh: f64) -> Result<(Vec<f64>, SymMatrix)>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let n = x.len();
    let mut pt = x.to_vec();
    let eval = |pt: &mut Vec<f64>, moves: &[(usize, f64)]| -> Result<f64> {
        for &(i, d) in moves {
            pt[i] += d;
        }
        let v = f(pt);
        for &(i, _) in moves {
            pt[i] = x[i];
        }
        v
    };
    let mut grad = vec![0.0; n];
    for i in 0..n {
        let up = eval(&mut pt, &[(i, hg)])?;
        let down = eval(&mut pt, &[(i, -hg)])?;
        grad[i] = (up - down) / (2.0 * hg);
    }
    let f0 = eval(&mut pt, &[])?;
    let mut hess = SymMatrix::zeros(n);
    for i in 0..n {
        let up = eval(&mut pt, &[(i, hh)])?;
        let down = eval(&mut pt, &[(i, -hh)])?;
        hess.set(i, i, (up - 2.0 * f0 + down) / (hh * hh));
        for j in 0..i {
            let pp = eval(&mut pt, &[(i, hh), (j, hh)])?;
            let pm = eval(&mut pt, &[(i, hh), (j, -hh)])?;
            let mp = eval(&mut pt, &[(i, -hh), (j, hh)])?;
            let mm = eval(&mut pt, &[(i, -hh), (j, -hh)])?;
            hess.set(i, j, (pp - pm - mp + mm) / (4.0 * hh * hh));
        }
    }
    Ok((grad, hess))
}

/// Finite-difference gradient and Hessian of [`log_likelihood`].
pub fn fd_oracle(tree: &Tree, theta: &[f64], batch: &SampleBatch, hg: f64, hh: f64) -> Result<(Vec<f64>, SymMatrix)> {
    check_lengths(tree, theta, batch)?;
    let h = hg.max(hh);
    if !(h > 0.0) || theta.iter().any(|t| t.abs() + h >= 1.0) {
        return Err(CfnError::InvalidInput(format!("step {h} leaves the open interval (-1, 1)")));
    }
    central_differences(|t| log_likelihood(tree, t, batch), theta, hg, hh)
}

/// Unnormalized pruning polynomial `P_θ(σ)`, valid for any real `θ`.
fn pattern_polynomial(tree: &Tree, theta: &[f64], cfg: &[i8]) -> f64 {
    let root = tree.default_root();
    let rooting = tree.rooting(root);
    let mut lp = vec![(0.0, 0.0); tree.vertex_count()];
    for &v in rooting.order.iter().rev() {
        let mut acc = match tree.leaf_position(v) {
            Some(i) if cfg[i] > 0 => (1.0, 0.0),
            Some(_) => (0.0, 1.0),
            None => (1.0, 1.0),
        };
        let parent = rooting.parent[v].map(|(p, _)| p);
        for &(c, e) in tree.incident(v) {
            if Some(c) != parent {
                let (keep, flip) = ((1.0 + theta[e]) / 2.0, (1.0 - theta[e]) / 2.0);
                acc.0 *= keep * lp[c].0 + flip * lp[c].1;
                acc.1 *= flip * lp[c].0 + keep * lp[c].1;
            }
        }
        lp[v] = acc;
    }
    0.5 * (lp[root].0 + lp[root].1)
}

/// Finite differences of the pattern probability rather than its log.
///
/// `P_θ(σ)` is affine in each `θ_e`, so central differences with any step `h`
/// give `∂_e P` and `∂_e∂_f P` with no truncation error; the log-likelihood
/// derivatives then follow from `∂_e ℓ = ∂_e P / P` and
/// `∂_e∂_f ℓ = ∂_e∂_f P / P − ∂_e ℓ ∂_f ℓ`. Rounding error stays near machine
/// precision relative to the gradient scale, which makes this the oracle of
/// choice for very small Hessian entries.
pub fn affine_fd_oracle(tree: &Tree, theta: &[f64], batch: &SampleBatch, h: f64) -> Result<(Vec<f64>, SymMatrix)> {
    check_lengths(tree, theta, batch)?;
    if !(h > 0.0) {
        return Err(CfnError::InvalidInput(format!("step {h} must be positive")));
    }
    let ne = tree.edge_count();
    let sums = chunked_sum(batch.len(), ne + ne * ne, |j, out| {
        let cfg = &batch.configs[j];
        let mut pt = theta.to_vec();
        let p0 = pattern_polynomial(tree, &pt, cfg);
        if p0 <= 0.0 {
            return Err(CfnError::ZeroProbability(j));
        }
        let mut shifted = |moves: &[(usize, f64)]| {
            for &(i, d) in moves {
                pt[i] = theta[i] + d;
            }
            let v = pattern_polynomial(tree, &pt, cfg);
            for &(i, _) in moves {
                pt[i] = theta[i];
            }
            v
        };
        let (grad, hess) = out.split_at_mut(ne);
        for i in 0..ne {
            grad[i] = (shifted(&[(i, h)]) - shifted(&[(i, -h)])) / (2.0 * h) / p0;
        }
        for i in 0..ne {
            hess[i * ne + i] = -grad[i] * grad[i];
            for k in 0..i {
                let pij = (shifted(&[(i, h), (k, h)]) - shifted(&[(i, h), (k, -h)]) - shifted(&[(i, -h), (k, h)])
                    + shifted(&[(i, -h), (k, -h)]))
                    / (4.0 * h * h);
                let v = pij / p0 - grad[i] * grad[k];
                hess[i * ne + k] = v;
                hess[k * ne + i] = v;
            }
        }
        Ok(())
    })?;
    let m = batch.len() as f64;
    let grad = sums[..ne].iter().map(|s| s / m).collect();
    let hess = SymMatrix::from_row_major(ne, sums[ne..].iter().map(|s| s / m).collect())?;
    Ok((grad, hess))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    Loglik,
    Gradient,
    Hessian,
}

/// A population expectation. Matrices are stored row-major in `values`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub quantity: Quantity,
    pub values: Vec<f64>,
    pub std_err: Option<Vec<f64>>,
}

impl Estimate {
    pub fn matrix(&self) -> Result<SymMatrix> {
        let n = (self.values.len() as f64).sqrt().round() as usize;
        SymMatrix::from_row_major(n, self.values.clone())
    }

    pub fn std_err_matrix(&self) -> Option<Vec<Vec<f64>>> {
        let se = self.std_err.as_ref()?;
        let n = (se.len() as f64).sqrt().round() as usize;
        Some(se.chunks(n).map(<[f64]>::to_vec).collect())
    }
}

fn width(tree: &Tree, quantity: Quantity) -> usize {
    match quantity {
        Quantity::Loglik => 1,
        Quantity::Gradient => tree.edge_count(),
        Quantity::Hessian => tree.edge_count() * tree.edge_count(),
    }
}

fn sample_quantity(
    tree: &Tree,
    theta_hat: &[f64],
    cfg: &[i8],
    quantity: Quantity,
    plan: Option<&HessianPlan>,
    out: &mut [f64],
) -> Result<()> {
    match quantity {
        Quantity::Loglik => {
            let root = tree.default_root();
            out[0] = partial_likelihoods(tree, theta_hat, cfg, root).log_marginal(root);
            if !out[0].is_finite() {
                return Err(CfnError::ZeroProbability(0));
            }
            Ok(())
        }
        Quantity::Gradient => {
            let table = directed_magnetizations(tree, theta_hat, cfg)?;
            sample_gradient(theta_hat, &table, out)
        }
        Quantity::Hessian => {
            let table = directed_magnetizations(tree, theta_hat, cfg)?;
            sample_hessian(tree, theta_hat, &table, plan.expect("plan built for Hessian"), out)
        }
    }
}

/// `Σ_cfg P_θ*(cfg) · (per-sample quantity at θ̂)` over all `2^n` patterns.
pub fn expected_exact(
    tree: &Tree,
    theta_star: &[f64],
    theta_hat: &[f64],
    quantity: Quantity,
    cap: usize,
) -> Result<Estimate> {
    let n = tree.leaf_count();
    if n > cap {
        return Err(CfnError::CapExceeded { what: "exact expectation", n, cap });
    }
    let configs = enumerate_leaf_configs(tree, cap)?;
    let plan = if quantity == Quantity::Hessian { Some(HessianPlan::new(tree)?) } else { None };
    let w = width(tree, quantity);
    let values = chunked_sum(configs.len(), w, |k, out| {
        let p = leaf_config_probability(tree, theta_star, &configs[k]);
        if p == 0.0 {
            return Ok(());
        }
        sample_quantity(tree, theta_hat, &configs[k], quantity, plan.as_ref(), out)?;
        out.iter_mut().for_each(|x| *x *= p);
        Ok(())
    })?;
    Ok(Estimate { quantity, values, std_err: None })
}

/// Monte Carlo estimate over `m` broadcasts from `θ*`; sample `j` uses stream `j`.
pub fn expected_mc(
    tree: &Tree,
    theta_star: &[f64],
    theta_hat: &[f64],
    m: usize,
    seed: u64,
    quantity: Quantity,
) -> Result<Estimate> {
    if m < 2 {
        return Err(CfnError::InvalidInput("Monte Carlo needs m >= 2".into()));
    }
    let plan = if quantity == Quantity::Hessian { Some(HessianPlan::new(tree)?) } else { None };
    let w = width(tree, quantity);
    let sums = chunked_sum(m, 2 * w, |j, out| {
        let cfg = restrict_to_leaves(tree, &sample_spins(tree, theta_star, seed, j as u64));
        let (vals, sq) = out.split_at_mut(w);
        sample_quantity(tree, theta_hat, &cfg, quantity, plan.as_ref(), vals)?;
        for (s, v) in sq.iter_mut().zip(vals.iter()) {
            *s = v * v;
        }
        Ok(())
    })?;
    let (values, std_err): (Vec<f64>, Vec<f64>) = (0..w).map(|i| mean_and_se(sums[i], sums[w + i], m)).unzip();
    Ok(Estimate { quantity, values, std_err: Some(std_err) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::magnetization::upward_magnetizations;
    use crate::model::{sample_edge_params, RegimeBox, Role};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single(cfg: Vec<i8>, n: usize) -> SampleBatch {
        SampleBatch::new(vec![cfg], n).unwrap()
    }

    #[test]
    fn single_edge_closed_forms() {
        let t = Tree::caterpillar(2).unwrap();
        let b = single(vec![1, 1], 2);
        assert!((log_likelihood(&t, &[0.5], &b).unwrap() - 0.375f64.ln()).abs() < 1e-15);
        assert!((gradient(&t, &[0.5], &b).unwrap()[0] - 1.0 / 1.5).abs() < 1e-15);
        assert!((hessian(&t, &[0.5], &b).unwrap().get(0, 0) + 1.0 / 2.25).abs() < 1e-15);
        let b = single(vec![1, -1], 2);
        assert!((gradient(&t, &[0.5], &b).unwrap()[0] + 2.0).abs() < 1e-15);
        assert!(matches!(gradient(&t, &[1.0], &b), Err(CfnError::DenominatorFloor { edge: 0, .. })));
        assert!(matches!(log_likelihood(&t, &[1.0], &b), Err(CfnError::ZeroProbability(0))));
    }

    #[test]
    fn fd_recovers_single_edge_gradient() {
        let t = Tree::caterpillar(2).unwrap();
        let b = single(vec![1, 1], 2);
        let (g, _) = fd_oracle(&t, &[0.5], &b, 1e-5, 1e-4).unwrap();
        assert!((g[0] - 1.0 / 1.5).abs() < 1e-9);
        assert!(fd_oracle(&t, &[0.99999], &b, 1e-5, 1e-4).is_err());
    }

    #[test]
    fn affine_differences_match_closed_forms() {
        let t = Tree::quartet();
        let theta = [0.7, 0.4, 0.9, 0.55, 0.8];
        let b = SampleBatch::new(vec![vec![1, -1, 1, 1], vec![-1, -1, 1, -1], vec![1, 1, 1, 1]], 4).unwrap();
        let (g, h) = affine_fd_oracle(&t, &theta, &b, 0.5).unwrap();
        let (g2, h2) = affine_fd_oracle(&t, &theta, &b, 0.05).unwrap();
        let ga = gradient(&t, &theta, &b).unwrap();
        let ha = hessian(&t, &theta, &b).unwrap();
        for e in 0..5 {
            assert!((g[e] - ga[e]).abs() < 1e-13 && (g2[e] - ga[e]).abs() < 1e-12);
            for f in 0..5 {
                assert!((h.get(e, f) - ha.get(e, f)).abs() < 1e-12, "({e},{f})");
                assert!((h2.get(e, f) - ha.get(e, f)).abs() < 1e-11);
            }
        }
        assert!(affine_fd_oracle(&t, &theta, &b, 0.0).is_err());
    }

    #[test]
    fn central_differences_exact_on_quadratics() {
        let f = |x: &[f64]| Ok(3.0 * x[0] * x[0] - 2.0 * x[0] * x[1] + 0.5 * x[1] * x[1] + x[1]);
        let (g, h) = central_differences(f, &[0.3, -0.7], 1e-3, 1e-2).unwrap();
        assert!((g[0] - (6.0 * 0.3 + 1.4)).abs() < 1e-10);
        assert!((g[1] - (-0.6 - 0.7 + 1.0)).abs() < 1e-10);
        assert!((h.get(0, 0) - 6.0).abs() < 1e-8);
        assert!((h.get(0, 1) + 2.0).abs() < 1e-8);
        assert!((h.get(1, 1) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn fd_gradient_error_is_second_order() {
        let t = Tree::quartet();
        let theta = [0.4, 0.7, 0.5, 0.6, 0.3];
        let b = single(vec![1, -1, 1, 1], 4);
        let exact = gradient(&t, &theta, &b).unwrap();
        let err = |h: f64| {
            let (g, _) = fd_oracle(&t, &theta, &b, h, 1e-3).unwrap();
            g.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let ratio = err(2e-3) / err(1e-3);
        assert!((ratio - 4.0).abs() < 0.4, "ratio {ratio}");
    }

    #[test]
    fn rooting_invariance() {
        let t = Tree::caterpillar(6).unwrap();
        let theta: Vec<f64> = (0..t.edge_count()).map(|e| 0.2 + 0.07 * e as f64).collect();
        let b = SampleBatch::simulate(&t, &theta, 50, 3);
        let base = log_likelihood(&t, &theta, &b).unwrap();
        for root in 0..t.vertex_count() {
            assert!((log_likelihood_rooted(&t, &theta, &b, root).unwrap() - base).abs() < 1e-12);
        }
    }

    #[test]
    fn quartet_all_patterns_against_brute_force() {
        let t = Tree::quartet();
        let theta = [0.3, 0.6, 0.45, 0.8, 0.1];
        let configs = enumerate_leaf_configs(&t, 16).unwrap();
        let batch = SampleBatch::new(configs.clone(), 4).unwrap();
        let brute: f64 = configs
            .iter()
            .map(|cfg| {
                let mut total = 0.0f64;
                for mask in 0..4 {
                    let su: i8 = if mask & 1 == 1 { -1 } else { 1 };
                    let sv: i8 = if mask & 2 == 2 { -1 } else { 1 };
                    let spins = [cfg[0], cfg[1], cfg[2], cfg[3], su, sv];
                    let mut p = 0.5;
                    for (e, &(a, b)) in t.edges().iter().enumerate() {
                        let agree = spins[a] == spins[b];
                        p *= if agree { 1.0 + theta[e] } else { 1.0 - theta[e] } / 2.0;
                    }
                    total += p;
                }
                total.ln()
            })
            .sum::<f64>()
            / 16.0;
        assert!((log_likelihood(&t, &theta, &batch).unwrap() - brute).abs() < 1e-13);
    }

    #[test]
    fn quartet_signals_by_hand() {
        let t = Tree::quartet();
        let s = path_signals(&t, &[0.9; 5], &[1, 1, 1, 1], 0, 2).unwrap();
        assert_eq!(s.n, 1);
        assert!((s.eta[0] - 0.9).abs() < 1e-15);
        assert!((s.xi[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn signal_recursion_and_symmetry_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..40 {
            let n = rng.random_range(3..=9);
            let t = Tree::random(n, &mut rng).unwrap();
            let theta: Vec<f64> = (0..t.edge_count()).map(|_| rng.random_range(-0.9..0.95)).collect();
            let cfg: Vec<i8> = (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
            let table = directed_magnetizations(&t, &theta, &cfg).unwrap();
            for e in 0..t.edge_count() {
                for f in 0..t.edge_count() {
                    if e == f {
                        continue;
                    }
                    let ef = PathSignals::from_table(&t, &theta, &table, &t.path_decomposition(e, f).unwrap());
                    let fe = PathSignals::from_table(&t, &theta, &table, &t.path_decomposition(f, e).unwrap());
                    for (a, b) in ef.recursed_xi().unwrap().iter().zip(&ef.xi) {
                        assert!((a - b).abs() < 1e-13);
                    }
                    assert!((ef.xi[ef.n + 1] - ef.theta_e() * ef.z_y).abs() < 1e-15);
                    let (h1, h2) = (ef.hessian_entry().unwrap(), fe.hessian_entry().unwrap());
                    assert!((h1 - h2).abs() <= 1e-10 * h1.abs().max(1.0), "{h1} vs {h2}");
                    assert!(h1.abs() <= ef.product_bound() * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn magnetization_derivative_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..30 {
            let n = rng.random_range(3..=8);
            let t = Tree::random(n, &mut rng).unwrap();
            let theta: Vec<f64> = (0..t.edge_count()).map(|_| rng.random_range(-0.8..0.9)).collect();
            let cfg: Vec<i8> = (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
            let e = rng.random_range(0..t.edge_count());
            let f = (e + 1 + rng.random_range(0..t.edge_count() - 1)) % t.edge_count();
            let pd = t.path_decomposition(e, f).unwrap();
            let s = path_signals(&t, &theta, &cfg, e, f).unwrap();
            // Z_y is the magnetization at y of the subtree away from x: root at x.
            let zy = |th: &[f64]| upward_magnetizations(&t, th, &cfg, pd.x()).unwrap()[pd.y(pd.n as isize)];
            let h = 1e-6;
            let mut up = theta.clone();
            up[f] += h;
            let mut down = theta.clone();
            down[f] -= h;
            let fd = (zy(&up) - zy(&down)) / (2.0 * h);
            let an = s.dzy_dtheta_f();
            assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-3), "{fd} vs {an}");
        }
    }

    #[test]
    fn in_box_signals_are_bounded() {
        let t = Tree::caterpillar(10).unwrap();
        let b = RegimeBox::with_defaults(0.01).unwrap();
        let est = sample_edge_params(&t, &b, Role::Estimate, 5).theta;
        let truth = sample_edge_params(&t, &b, Role::Truth, 5).theta;
        let batch = SampleBatch::simulate(&t, &truth, 30, 9);
        for cfg in &batch.configs {
            let s = path_signals(&t, &est, cfg, 0, 9).unwrap();
            for j in 0..=s.n {
                assert!(s.eta[j].abs() <= b.signal_bound() + 1e-15);
                assert!(s.xi[j].abs() <= b.signal_bound() + 1e-15);
            }
        }
    }

    #[test]
    fn hessian_diagonal_is_nonpositive() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = Tree::random(7, &mut rng).unwrap();
        let theta: Vec<f64> = (0..t.edge_count()).map(|_| rng.random_range(-0.9..0.9)).collect();
        let b = SampleBatch::simulate(&t, &theta, 40, 1);
        let h = hessian(&t, &theta, &b).unwrap();
        assert!(h.diagonal().iter().all(|&d| d <= 0.0));
    }

    #[test]
    fn score_vanishes_at_truth() {
        for t in [Tree::quartet(), Tree::caterpillar(6).unwrap(), Tree::caterpillar(8).unwrap()] {
            let b = RegimeBox::with_defaults(0.02).unwrap();
            let truth = sample_edge_params(&t, &b, Role::Truth, 12).theta;
            let g = expected_exact(&t, &truth, &truth, Quantity::Gradient, EXACT_CAP).unwrap();
            assert!(g.values.iter().all(|x| x.abs() < 1e-12), "{:?}", g.values);
        }
    }

    #[test]
    fn monte_carlo_matches_exact_within_four_se() {
        let t = Tree::quartet();
        let b = RegimeBox::with_defaults(0.05).unwrap();
        let truth = sample_edge_params(&t, &b, Role::Truth, 4).theta;
        let est = sample_edge_params(&t, &b, Role::Estimate, 4).theta;
        for q in [Quantity::Loglik, Quantity::Gradient, Quantity::Hessian] {
            let ex = expected_exact(&t, &truth, &est, q, EXACT_CAP).unwrap();
            let mc = expected_mc(&t, &truth, &est, 50_000, 6, q).unwrap();
            let se = mc.std_err.as_ref().unwrap();
            for i in 0..ex.values.len() {
                assert!(
                    (ex.values[i] - mc.values[i]).abs() <= 4.0 * se[i] + 1e-12,
                    "{q:?}[{i}]: {} vs {} (se {})",
                    ex.values[i],
                    mc.values[i],
                    se[i]
                );
            }
        }
    }

    #[test]
    fn monte_carlo_se_shrinks_and_is_deterministic() {
        let t = Tree::quartet();
        let truth = [0.9, 0.85, 0.8, 0.9, 0.7];
        let a = expected_mc(&t, &truth, &truth, 10_000, 1, Quantity::Gradient).unwrap();
        let b = expected_mc(&t, &truth, &truth, 40_000, 1, Quantity::Gradient).unwrap();
        for (x, y) in a.std_err.as_ref().unwrap().iter().zip(b.std_err.as_ref().unwrap()) {
            assert!((x / y - 2.0).abs() < 0.4, "{x} / {y}");
        }
        assert_eq!(a, expected_mc(&t, &truth, &truth, 10_000, 1, Quantity::Gradient).unwrap());
    }
}
