//! A quartet with two samples whose likelihood on `[0, 1]^5` has two
//! boundary maximizers.
//!
//! Leaves A and C read `+1` in the first sample and `−1` in the second; B and
//! D read the opposite. With edge order A-u, B-u, C-v, D-v, u-v the maximizers
//! are `θ¹ = (0,1,0,1,1)`, which ties B to D and ignores A and C, and its
//! mirror image `θ² = (1,0,1,0,1)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CfnError, Result};
use crate::model::{log_leaf_config_probability, SampleBatch};
use crate::tree::Tree;

use super::search::{maximize_on_interval, SupSearch};

pub const STEEL_THETA_1: [f64; 5] = [0.0, 1.0, 0.0, 1.0, 1.0];
pub const STEEL_THETA_2: [f64; 5] = [1.0, 0.0, 1.0, 0.0, 1.0];

const BOUNDARY_TOL: f64 = 1e-6;
const POLISH_STARTS: usize = 32;

pub fn steel_fixture() -> (Tree, SampleBatch) {
    let batch = SampleBatch::new(vec![vec![1, -1, 1, -1], vec![-1, 1, -1, 1]], 4).expect("valid fixture");
    (Tree::quartet(), batch)
}

/// Average log-likelihood allowing `θ_e ∈ {0, 1}`; impossible patterns give `−∞`.
fn boundary_loglik(tree: &Tree, batch: &SampleBatch, theta: &[f64]) -> f64 {
    batch.configs.iter().map(|c| log_leaf_config_probability(tree, theta, c)).sum::<f64>() / batch.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteelReport {
    pub loglik_theta_1: f64,
    pub loglik_theta_2: f64,
    pub grid_step: f64,
    pub grid_best: f64,
    pub grid_best_theta: Vec<f64>,
    pub polished_best: f64,
    /// Distinct polished points within `1e−9` of the best value found.
    pub argmax: Vec<Vec<f64>>,
    /// `max(grid, polish) − ℓ(θ¹)`.
    pub max_excess: f64,
}

impl SteelReport {
    pub fn maximizers_on_boundary(&self) -> bool {
        self.argmax.iter().all(|t| t.iter().any(|&x| x <= BOUNDARY_TOL || x >= 1.0 - BOUNDARY_TOL))
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("kind,value,theta\n");
        let fmt = |t: &[f64]| t.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
        s.push_str(&format!("theta_1,{},{}\n", self.loglik_theta_1, fmt(&STEEL_THETA_1)));
        s.push_str(&format!("theta_2,{},{}\n", self.loglik_theta_2, fmt(&STEEL_THETA_2)));
        s.push_str(&format!("grid_best,{},{}\n", self.grid_best, fmt(&self.grid_best_theta)));
        for t in &self.argmax {
            s.push_str(&format!("argmax,{},{}\n", self.polished_best, fmt(t)));
        }
        s
    }
}

fn polish(tree: &Tree, batch: &SampleBatch, start: &[f64]) -> (Vec<f64>, f64) {
    let mut x = start.to_vec();
    let mut val = boundary_loglik(tree, batch, &x);
    let search = SupSearch { grid_points: 101, refine: true };
    for _ in 0..100 {
        let before = val;
        for e in 0..x.len() {
            let (arg, v) = maximize_on_interval(
                |t| {
                    let mut trial = x.clone();
                    trial[e] = t;
                    boundary_loglik(tree, batch, &trial)
                },
                0.0,
                1.0,
                search,
            );
            if v > val {
                x[e] = arg;
                val = v;
            }
        }
        if val - before <= 1e-15 {
            break;
        }
    }
    (x, val)
}

/// Evaluate the two claimed maximizers, search a grid over `[0, 1]^5` and
/// polish the best grid points by coordinate-wise maximization.
pub fn steel_example(grid_step: f64) -> Result<SteelReport> {
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(CfnError::InvalidInput(format!("grid step {grid_step} must lie in (0, 1]")));
    }
    let (tree, batch) = steel_fixture();
    let l1 = boundary_loglik(&tree, &batch, &STEEL_THETA_1);
    let l2 = boundary_loglik(&tree, &batch, &STEEL_THETA_2);
    let k = (1.0 / grid_step).round() as usize;
    let axis: Vec<f64> = (0..=k).map(|i| (i as f64 / k as f64).min(1.0)).collect();
    let side = axis.len();
    let total = side.pow(5);
    let point = |idx: usize| -> Vec<f64> {
        let mut rest = idx;
        let mut t = vec![0.0; 5];
        for slot in t.iter_mut().rev() {
            *slot = axis[rest % side];
            rest /= side;
        }
        t
    };
    let values: Vec<f64> = (0..total).into_par_iter().map(|i| boundary_loglik(&tree, &batch, &point(i))).collect();
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let grid_best = values[order[0]];
    let grid_best_theta = point(order[0]);
    let polished: Vec<(Vec<f64>, f64)> =
        order[..POLISH_STARTS.min(total)].par_iter().map(|&i| polish(&tree, &batch, &point(i))).collect();
    let polished_best = polished.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let mut argmax: Vec<Vec<f64>> = Vec::new();
    for (t, v) in &polished {
        if *v >= polished_best - 1e-9 && !argmax.iter().any(|a| a.iter().zip(t).all(|(x, y)| (x - y).abs() < 1e-4)) {
            argmax.push(t.clone());
        }
    }
    Ok(SteelReport {
        loglik_theta_1: l1,
        loglik_theta_2: l2,
        grid_step,
        grid_best,
        grid_best_theta,
        polished_best,
        argmax,
        max_excess: grid_best.max(polished_best) - l1,
    })
}
