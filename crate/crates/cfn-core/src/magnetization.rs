//! Magnetizations: posterior mean spins given the leaves below a vertex.
//!
//! Children combine via `q(x, y) = (x + y)/(1 + xy)`, applied to each child
//! magnetization scaled by its edge `θ̂`. The pruning tables in
//! [`partial_likelihoods`] compute the same quantity from likelihood pairs and
//! serve as a cross-check.

use crate::error::{CfnError, Result};
use crate::tree::Tree;

/// Denominators `1 + xy` at or below this are rejected.
pub const Q_FLOOR: f64 = 1e-300;

/// `q(x, y) = (x + y)/(1 + xy)`.
#[inline]
pub fn q_combine(x: f64, y: f64) -> Result<f64> {
    let den = 1.0 + x * y;
    if den <= Q_FLOOR {
        return Err(CfnError::QDomain(den));
    }
    Ok((x + y) / den)
}

#[inline]
fn spin_of(tree: &Tree, cfg: &[i8], v: usize) -> f64 {
    f64::from(cfg[tree.leaf_position(v).expect("vertex is a leaf")])
}

/// Magnetization of every vertex with respect to its descendant subtree
/// when the tree hangs from `root`. Leaves report their observed spin.
pub fn upward_magnetizations(tree: &Tree, theta: &[f64], cfg: &[i8], root: usize) -> Result<Vec<f64>> {
    let rooting = tree.rooting(root);
    let mut z = vec![0.0; tree.vertex_count()];
    for &v in rooting.order.iter().rev() {
        if tree.is_leaf(v) {
            z[v] = spin_of(tree, cfg, v);
            continue;
        }
        let parent = rooting.parent[v].map(|(p, _)| p);
        let mut acc = 0.0;
        for &(c, e) in tree.incident(v) {
            if Some(c) != parent {
                acc = q_combine(acc, theta[e] * z[c])?;
            }
        }
        z[v] = acc;
    }
    Ok(z)
}

/// `Z(a→b)` for every ordered adjacent pair.
///
/// Entry `2e` holds `Z(a→b)` and `2e + 1` holds `Z(b→a)` for `edges[e] = (a, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnetizationTable {
    z: Vec<f64>,
}

impl MagnetizationTable {
    #[inline]
    fn slot(tree: &Tree, e: usize, from: usize) -> usize {
        if tree.edges()[e].0 == from {
            2 * e
        } else {
            2 * e + 1
        }
    }

    /// `Z(from→other end of e)`.
    #[inline]
    pub fn along(&self, tree: &Tree, e: usize, from: usize) -> f64 {
        self.z[Self::slot(tree, e, from)]
    }

    /// `Z(from→to)` for adjacent vertices.
    pub fn get(&self, tree: &Tree, from: usize, to: usize) -> f64 {
        let e = tree.edge_between(from, to).expect("vertices are adjacent");
        self.along(tree, e, from)
    }

    /// `(Z(a→b), Z(b→a))` for `edges[e] = (a, b)`.
    #[inline]
    pub fn pair(&self, e: usize) -> (f64, f64) {
        (self.z[2 * e], self.z[2 * e + 1])
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn entries(&self) -> &[f64] {
        &self.z
    }

    /// Debug dump: `from,to,edge,z`.
    pub fn to_csv(&self, tree: &Tree) -> String {
        let mut out = String::from("from,to,edge,z\n");
        for (e, &(a, b)) in tree.edges().iter().enumerate() {
            out.push_str(&format!("{a},{b},{e},{}\n", self.z[2 * e]));
            out.push_str(&format!("{b},{a},{e},{}\n", self.z[2 * e + 1]));
        }
        out
    }
}

/// Two-pass message passing: an upward pass from the default root fills
/// child→parent entries, a downward pass fills parent→child entries.
pub fn directed_magnetizations(tree: &Tree, theta: &[f64], cfg: &[i8]) -> Result<MagnetizationTable> {
    let rooting = tree.rooting(tree.default_root());
    let mut table = MagnetizationTable { z: vec![0.0; 2 * tree.edge_count()] };

    let outgoing = |table: &MagnetizationTable, v: usize, exclude: usize| -> Result<f64> {
        if tree.is_leaf(v) {
            return Ok(spin_of(tree, cfg, v));
        }
        let mut acc = 0.0;
        for &(nb, e) in tree.incident(v) {
            if nb != exclude {
                acc = q_combine(acc, theta[e] * table.along(tree, e, nb))?;
            }
        }
        Ok(acc)
    };

    for &v in rooting.order.iter().rev() {
        if let Some((p, e)) = rooting.parent[v] {
            let val = outgoing(&table, v, p)?;
            table.z[MagnetizationTable::slot(tree, e, v)] = val;
        }
    }
    for &v in &rooting.order {
        let parent = rooting.parent[v].map(|(p, _)| p);
        for &(c, e) in tree.incident(v) {
            if Some(c) != parent {
                let val = outgoing(&table, v, c)?;
                table.z[MagnetizationTable::slot(tree, e, v)] = val;
            }
        }
    }
    Ok(table)
}

/// Pruning tables. The true conditional likelihoods are
/// `L±(v) = exp(log_scale[v]) · (plus[v], minus[v])` with `plus + minus = 1`.
#[derive(Debug, Clone)]
pub struct PartialLikelihoods {
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
    pub log_scale: Vec<f64>,
}

impl PartialLikelihoods {
    /// `(L⁺ − L⁻)/(L⁺ + L⁻)` at `v`.
    pub fn ratio(&self, v: usize) -> f64 {
        (self.plus[v] - self.minus[v]) / (self.plus[v] + self.minus[v])
    }

    /// `ln((L⁺ + L⁻)/2)` at the root: the log marginal of the leaf pattern.
    pub fn log_marginal(&self, root: usize) -> f64 {
        self.log_scale[root] + (0.5 * (self.plus[root] + self.minus[root])).ln()
    }
}

/// Conditional leaf likelihoods given each vertex's spin, for the tree hung
/// from `root`, renormalized per vertex.
pub fn partial_likelihoods(tree: &Tree, theta: &[f64], cfg: &[i8], root: usize) -> PartialLikelihoods {
    let nv = tree.vertex_count();
    let rooting = tree.rooting(root);
    let mut pl = PartialLikelihoods { plus: vec![0.0; nv], minus: vec![0.0; nv], log_scale: vec![0.0; nv] };
    for &v in rooting.order.iter().rev() {
        let (mut a_plus, mut a_minus) = if tree.is_leaf(v) {
            if spin_of(tree, cfg, v) > 0.0 {
                (1.0, 0.0)
            } else {
                (0.0, 1.0)
            }
        } else {
            (1.0, 1.0)
        };
        let parent = rooting.parent[v].map(|(p, _)| p);
        let mut scale = 0.0;
        for &(c, e) in tree.incident(v) {
            if Some(c) == parent {
                continue;
            }
            let keep = (1.0 + theta[e]) / 2.0;
            let flip = (1.0 - theta[e]) / 2.0;
            a_plus *= keep * pl.plus[c] + flip * pl.minus[c];
            a_minus *= flip * pl.plus[c] + keep * pl.minus[c];
            scale += pl.log_scale[c];
        }
        let s = a_plus + a_minus;
        if s > 0.0 {
            pl.plus[v] = a_plus / s;
            pl.minus[v] = a_minus / s;
            pl.log_scale[v] = scale + s.ln();
        } else {
            pl.plus[v] = 0.5;
            pl.minus[v] = 0.5;
            pl.log_scale[v] = f64::NEG_INFINITY;
        }
    }
    pl
}
