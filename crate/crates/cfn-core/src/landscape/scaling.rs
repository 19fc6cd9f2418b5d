//! Expected-Hessian experiments: diagonal growth like `1/δ`, off-diagonal
//! decay along the tree, and the resulting spectrum.

use serde::{Deserialize, Serialize};

use crate::error::{CfnError, Result};
use crate::likelihood::{expected_exact, expected_mc, Quantity, EXACT_CAP};
use crate::linalg::{gershgorin_bounds, symmetric_eigenvalues, Gershgorin, SymMatrix};
use crate::model::{sample_edge_params, RegimeBox, Role};
use crate::stats::{linear_fit, log_log_slope};
use crate::tree::Tree;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum Mode {
    Exact,
    Mc { m: usize, seed: u64 },
}

/// Where the Hessian is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatePoint {
    /// `θ̂ = θ*`.
    Truth,
    /// `θ̂` drawn from the estimate box with the experiment seed.
    Drawn,
}

/// Expected Hessian at `θ̂` under `θ*`, with standard errors in Monte Carlo mode.
pub fn expected_hessian(
    tree: &Tree,
    theta_star: &[f64],
    theta_hat: &[f64],
    mode: Mode,
) -> Result<(SymMatrix, Option<Vec<Vec<f64>>>)> {
    let est = match mode {
        Mode::Exact => expected_exact(tree, theta_star, theta_hat, Quantity::Hessian, EXACT_CAP)?,
        Mode::Mc { m, seed } => expected_mc(tree, theta_star, theta_hat, m, seed, Quantity::Hessian)?,
    };
    Ok((est.matrix()?, est.std_err_matrix()))
}

fn draw(tree: &Tree, b: &RegimeBox, seed: u64, point: EstimatePoint) -> (Vec<f64>, Vec<f64>) {
    let truth = sample_edge_params(tree, b, Role::Truth, seed).theta;
    let est = match point {
        EstimatePoint::Truth => truth.clone(),
        EstimatePoint::Drawn => sample_edge_params(tree, b, Role::Estimate, seed).theta,
    };
    (truth, est)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianReport {
    pub delta: f64,
    pub matrix: SymMatrix,
    pub std_err: Option<Vec<Vec<f64>>>,
    pub gershgorin: Gershgorin,
    pub eigenvalues: Vec<f64>,
    /// `C = δ · min_e |H_ee|` and `C̃ = δ · max_e |H_ee|`.
    pub c_fit: f64,
    pub c_tilde_fit: f64,
    /// `(−C̃/δ − 26, −C/δ + 26)`.
    pub lambda_window: (f64, f64),
}

impl HessianReport {
    pub fn eigenvalues_in_disks(&self) -> bool {
        self.eigenvalues.iter().all(|&l| self.gershgorin.in_union(l))
    }

    pub fn eigenvalues_in_window(&self) -> bool {
        let (lo, hi) = self.lambda_window;
        self.eigenvalues.iter().all(|&l| l >= lo && l <= hi)
    }

    pub fn negative_definite(&self) -> bool {
        self.eigenvalues.iter().all(|&l| l < 0.0)
    }

    pub fn csv(&self) -> String {
        let n = self.matrix.dim();
        let mut s = String::from("row,col,value,std_err\n");
        for i in 0..n {
            for j in 0..n {
                let se = self.std_err.as_ref().map_or(String::new(), |m| m[i][j].to_string());
                s.push_str(&format!("{i},{j},{},{se}\n", self.matrix.get(i, j)));
            }
        }
        s
    }
}

pub fn hessian_report(matrix: SymMatrix, std_err: Option<Vec<Vec<f64>>>, delta: f64) -> Result<HessianReport> {
    let gershgorin = gershgorin_bounds(&matrix)?;
    let eigenvalues = symmetric_eigenvalues(&matrix)?;
    let mags: Vec<f64> = matrix.diagonal().iter().map(|d| d.abs()).collect();
    let c_fit = delta * mags.iter().copied().fold(f64::INFINITY, f64::min);
    let c_tilde_fit = delta * mags.iter().copied().fold(0.0, f64::max);
    Ok(HessianReport {
        delta,
        matrix,
        std_err,
        gershgorin,
        eigenvalues,
        c_fit,
        c_tilde_fit,
        lambda_window: (-c_tilde_fit / delta - 26.0, -c_fit / delta + 26.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagRow {
    pub delta: f64,
    pub diagonal: Vec<f64>,
    pub std_err: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagScaling {
    pub rows: Vec<DiagRow>,
    /// Slope of `ln(−H_ee)` against `ln δ` for each edge.
    pub edge_slopes: Vec<Option<f64>>,
    /// Slope of the mean over edges of `ln(−H_ee)`.
    pub pooled_slope: Option<f64>,
    pub all_negative: bool,
}

impl DiagScaling {
    pub fn csv(&self) -> String {
        let mut s = String::from("delta,edge,h_ee,std_err\n");
        for r in &self.rows {
            for (e, d) in r.diagonal.iter().enumerate() {
                let se = r.std_err.as_ref().map_or(String::new(), |v| v[e].to_string());
                s.push_str(&format!("{},{e},{d},{se}\n", r.delta));
            }
        }
        s
    }
}

/// Expected diagonal at each `δ`, with `θ*` (and `θ̂` if drawn) from the
/// same seed so the sweep rescales one configuration.
pub fn diag_scaling_experiment(
    tree: &Tree,
    rbox: &RegimeBox,
    deltas: &[f64],
    mode: Mode,
    point: EstimatePoint,
    seed: u64,
) -> Result<DiagScaling> {
    if deltas.len() < 2 {
        return Err(CfnError::InvalidInput("need at least two delta values".into()));
    }
    let mut rows = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let b = rbox.with_delta(delta)?;
        let (truth, est) = draw(tree, &b, seed, point);
        let (h, se) = expected_hessian(tree, &truth, &est, mode)?;
        rows.push(DiagRow {
            delta,
            diagonal: h.diagonal(),
            std_err: se.map(|m| (0..m.len()).map(|i| m[i][i]).collect()),
        });
    }
    let all_negative = rows.iter().all(|r| r.diagonal.iter().all(|&d| d < 0.0));
    let ne = tree.edge_count();
    let edge_slopes = (0..ne)
        .map(|e| {
            let ys: Vec<f64> = rows.iter().map(|r| -r.diagonal[e]).collect();
            log_log_slope(deltas, &ys)
        })
        .collect();
    let pooled: Vec<f64> =
        rows.iter().map(|r| (r.diagonal.iter().map(|d| (-d).ln()).sum::<f64>() / ne as f64).exp()).collect();
    let pooled_slope = if all_negative { log_log_slope(deltas, &pooled) } else { None };
    Ok(DiagScaling { rows, edge_slopes, pooled_slope, all_negative })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffDiagEntry {
    pub e: usize,
    pub f: usize,
    pub distance: usize,
    pub value: f64,
    pub std_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRow {
    pub distance: usize,
    pub count: usize,
    pub max_abs: f64,
    pub mean_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffDiagReport {
    pub delta: f64,
    pub entries: Vec<OffDiagEntry>,
    pub by_distance: Vec<DistanceRow>,
    /// `exp(slope)` of the least-squares fit of `ln max|H_ef|` against
    /// `⌊(max(N−1, 0))/4⌋`, over entries of magnitude at least `1e−13`.
    pub envelope_base: Option<f64>,
    pub max_offdiag: f64,
    pub min_abs_diag: f64,
    pub hessian: HessianReport,
}

/// Entries below this are dominated by rounding and left out of the envelope fit.
const ENVELOPE_FLOOR: f64 = 1e-13;

impl OffDiagReport {
    pub fn csv(&self) -> String {
        let mut s = String::from("e,f,distance,value,std_err\n");
        for x in &self.entries {
            let se = x.std_err.map_or(String::new(), |v| v.to_string());
            s.push_str(&format!("{},{},{},{},{se}\n", x.e, x.f, x.distance, x.value));
        }
        s
    }
}

pub fn offdiag_decay_experiment(
    tree: &Tree,
    rbox: &RegimeBox,
    delta: f64,
    mode: Mode,
    point: EstimatePoint,
    seed: u64,
) -> Result<OffDiagReport> {
    let b = rbox.with_delta(delta)?;
    let (truth, est) = draw(tree, &b, seed, point);
    let (h, se) = expected_hessian(tree, &truth, &est, mode)?;
    let ne = tree.edge_count();
    let mut entries = Vec::with_capacity(ne * ne.saturating_sub(1) / 2);
    for e in 0..ne {
        for f in e + 1..ne {
            entries.push(OffDiagEntry {
                e,
                f,
                distance: tree.edge_distance(e, f)?,
                value: h.get(e, f),
                std_err: se.as_ref().map(|m| m[e][f]),
            });
        }
    }
    let max_n = entries.iter().map(|x| x.distance).max().unwrap_or(0);
    let by_distance: Vec<DistanceRow> = (0..=max_n)
        .filter_map(|n| {
            let group: Vec<f64> = entries.iter().filter(|x| x.distance == n).map(|x| x.value.abs()).collect();
            (!group.is_empty()).then(|| DistanceRow {
                distance: n,
                count: group.len(),
                max_abs: group.iter().copied().fold(0.0, f64::max),
                mean_abs: group.iter().sum::<f64>() / group.len() as f64,
            })
        })
        .collect();
    let mut envelope: Vec<(f64, f64)> = Vec::new();
    for row in &by_distance {
        if row.max_abs < ENVELOPE_FLOOR {
            continue;
        }
        let k = (row.distance.saturating_sub(1) / 4) as f64;
        match envelope.iter_mut().find(|(kk, _)| *kk == k) {
            Some(p) => p.1 = p.1.max(row.max_abs),
            None => envelope.push((k, row.max_abs)),
        }
    }
    let envelope_base = (envelope.len() >= 2).then(|| {
        let (ks, ys): (Vec<f64>, Vec<f64>) = envelope.iter().map(|&(k, y)| (k, y.ln())).unzip();
        linear_fit(&ks, &ys).0.exp()
    });
    let max_offdiag = entries.iter().map(|x| x.value.abs()).fold(0.0, f64::max);
    let min_abs_diag = h.diagonal().iter().map(|d| d.abs()).fold(f64::INFINITY, f64::min);
    let hessian = hessian_report(h, se, delta)?;
    Ok(OffDiagReport { delta, entries, by_distance, envelope_base, max_offdiag, min_abs_diag, hessian })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartet_diagonal_scales_like_inverse_delta() {
        let t = Tree::quartet();
        let rbox = RegimeBox::with_defaults(0.01).unwrap();
        let d = diag_scaling_experiment(&t, &rbox, &[0.02, 0.01, 0.005], Mode::Exact, EstimatePoint::Truth, 4).unwrap();
        assert!(d.all_negative);
        for s in &d.edge_slopes {
            let s = s.unwrap();
            assert!((s + 1.0).abs() < 0.15, "slope {s}");
        }
    }

    #[test]
    fn mc_diagonal_agrees_with_exact() {
        let t = Tree::quartet();
        let rbox = RegimeBox::with_defaults(0.05).unwrap();
        let ex = diag_scaling_experiment(&t, &rbox, &[0.05, 0.1], Mode::Exact, EstimatePoint::Drawn, 8).unwrap();
        let mc =
            diag_scaling_experiment(&t, &rbox, &[0.05, 0.1], Mode::Mc { m: 40000, seed: 2 }, EstimatePoint::Drawn, 8)
                .unwrap();
        for (a, b) in ex.rows.iter().zip(&mc.rows) {
            let se = b.std_err.as_ref().unwrap();
            for e in 0..5 {
                assert!((a.diagonal[e] - b.diagonal[e]).abs() < 4.0 * se[e], "edge {e}");
            }
        }
    }

    #[test]
    fn caterpillar_offdiagonal_is_small_and_decays() {
        let t = Tree::caterpillar(10).unwrap();
        let rbox = RegimeBox::with_defaults(0.01).unwrap();
        let r = offdiag_decay_experiment(&t, &rbox, 0.01, Mode::Exact, EstimatePoint::Truth, 1).unwrap();
        assert!(r.max_offdiag < 0.5 * r.min_abs_diag);
        assert!(r.hessian.gershgorin.upper < 0.0);
        assert!(r.hessian.eigenvalues_in_disks());
        assert!(r.hessian.eigenvalues_in_window());
        let coarse = offdiag_decay_experiment(&t, &rbox, 0.02, Mode::Exact, EstimatePoint::Truth, 1).unwrap();
        let fine = offdiag_decay_experiment(&t, &rbox, 0.005, Mode::Exact, EstimatePoint::Truth, 1).unwrap();
        assert!(fine.envelope_base.unwrap() < coarse.envelope_base.unwrap());
    }

    #[test]
    fn report_window_uses_fitted_constants() {
        let m = SymMatrix::from_rows(&[vec![-100.0, 1.0], vec![1.0, -50.0]]).unwrap();
        let r = hessian_report(m, None, 0.01).unwrap();
        assert!((r.c_fit - 0.5).abs() < 1e-15 && (r.c_tilde_fit - 1.0).abs() < 1e-15);
        assert_eq!(r.lambda_window, (-126.0, -24.0));
        assert!(r.negative_definite() && r.eigenvalues_in_disks());
    }
}
