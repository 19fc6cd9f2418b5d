//! Dense symmetric matrices, Gershgorin disks and cyclic Jacobi eigenvalues.

use serde::{Deserialize, Serialize};

use crate::error::{CfnError, Result};

/// Square matrix stored row-major; used for Hessians indexed by edge id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix { n, data: vec![0.0; n * n] }
    }

    /// Wrap row-major data; fails unless the result is exactly symmetric.
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(CfnError::InvalidInput(format!("{} entries for a {n}x{n} matrix", data.len())));
        }
        let m = SymMatrix { n, data };
        m.check_symmetric(0.0)?;
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(CfnError::InvalidInput("matrix is not square".into()));
        }
        SymMatrix::from_row_major(n, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Set both `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn check_symmetric(&self, tol: f64) -> Result<()> {
        for i in 0..self.n {
            for j in 0..i {
                let (a, b) = (self.get(i, j), self.get(j, i));
                if (a - b).abs() > tol * a.abs().max(b.abs()).max(1.0) {
                    return Err(CfnError::InvalidInput(format!("matrix not symmetric at ({i},{j}): {a} vs {b}")));
                }
            }
        }
        Ok(())
    }
}

/// Row disk `[H_ee − r_e, H_ee + r_e]` with `r_e = Σ_{f≠e} |H_ef|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: f64,
    pub radius: f64,
}

impl Disk {
    pub fn lower(&self) -> f64 {
        self.center - self.radius
    }

    pub fn upper(&self) -> f64 {
        self.center + self.radius
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower() && x <= self.upper()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gershgorin {
    pub disks: Vec<Disk>,
    pub lower: f64,
    pub upper: f64,
}

impl Gershgorin {
    /// Strict row diagonal dominance: `r_e < |H_ee|` for every row.
    pub fn diagonally_dominant(&self) -> bool {
        self.disks.iter().all(|d| d.radius < d.center.abs())
    }

    pub fn in_union(&self, x: f64) -> bool {
        self.disks.iter().any(|d| d.contains(x))
    }
}

pub fn gershgorin_bounds(h: &SymMatrix) -> Result<Gershgorin> {
    h.check_symmetric(1e-12)?;
    let disks: Vec<Disk> = (0..h.dim())
        .map(|i| Disk {
            center: h.get(i, i),
            radius: (0..h.dim()).filter(|&j| j != i).map(|j| h.get(i, j).abs()).sum(),
        })
        .collect();
    let lower = disks.iter().map(Disk::lower).fold(f64::INFINITY, f64::min);
    let upper = disks.iter().map(Disk::upper).fold(f64::NEG_INFINITY, f64::max);
    Ok(Gershgorin { disks, lower, upper })
}

/// Eigenvalues by cyclic Jacobi rotations, sorted ascending.
///
/// Sweeps stop once the off-diagonal Frobenius norm drops below
/// `1e-12 · max(1, ‖H‖_F)`.
pub fn symmetric_eigenvalues(h: &SymMatrix) -> Result<Vec<f64>> {
    const MAX_SWEEPS: usize = 1000;
    h.check_symmetric(1e-12)?;
    let n = h.dim();
    let mut a = h.rows();
    let scale = h.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    let off = |a: &Vec<Vec<f64>>| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i][j] * a[i][j];
                }
            }
        }
        s.sqrt()
    };
    let mut sweeps = 0;
    while off(&a) >= 1e-12 * scale {
        if sweeps == MAX_SWEEPS {
            return Err(CfnError::NoConvergence(format!("Jacobi did not converge in {MAX_SWEEPS} sweeps")));
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let tau = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let t = if tau == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_diagonal() {
        let mut id = SymMatrix::zeros(5);
        for i in 0..5 {
            id.set(i, i, 1.0);
        }
        assert_eq!(symmetric_eigenvalues(&id).unwrap(), vec![1.0; 5]);
        let d = SymMatrix::from_rows(&[vec![2.0, 0.0, 0.0], vec![0.0, -3.0, 0.0], vec![0.0, 0.0, -1.0]]).unwrap();
        assert_eq!(symmetric_eigenvalues(&d).unwrap(), vec![-3.0, -1.0, 2.0]);
        let g = gershgorin_bounds(&d).unwrap();
        assert!(g.disks.iter().all(|disk| disk.radius == 0.0));
        assert_eq!((g.lower, g.upper), (-3.0, 2.0));
    }

    #[test]
    fn two_by_two_against_quadratic_formula() {
        let m = SymMatrix::from_rows(&[vec![-10.0, 1.0], vec![1.0, -10.0]]).unwrap();
        let g = gershgorin_bounds(&m).unwrap();
        assert_eq!((g.lower, g.upper), (-11.0, -9.0));
        let e = symmetric_eigenvalues(&m).unwrap();
        assert!((e[0] + 11.0).abs() < 1e-12 && (e[1] + 9.0).abs() < 1e-12);

        let mut seed = 0.37f64;
        for _ in 0..200 {
            let mut next = || {
                seed = (seed * 9301.0 + 49297.0) % 233280.0;
                seed / 233280.0 * 20.0 - 10.0
            };
            let (a, b, c) = (next(), next(), next());
            let m = SymMatrix::from_rows(&[vec![a, b], vec![b, c]]).unwrap();
            let mean = 0.5 * (a + c);
            let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            let e = symmetric_eigenvalues(&m).unwrap();
            assert!((e[0] - (mean - rad)).abs() < 1e-10);
            assert!((e[1] - (mean + rad)).abs() < 1e-10);
        }
    }

    #[test]
    fn eigenvalues_lie_in_disk_union() {
        let n = 7;
        let mut m = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let v = ((i * 7 + j * 3) as f64).sin() * if i == j { 5.0 } else { 1.0 };
                m.set(i, j, v);
            }
        }
        let g = gershgorin_bounds(&m).unwrap();
        for ev in symmetric_eigenvalues(&m).unwrap() {
            assert!(g.in_union(ev));
        }
        let trace: f64 = m.diagonal().iter().sum();
        let sum: f64 = symmetric_eigenvalues(&m).unwrap().iter().sum();
        assert!((trace - sum).abs() < 1e-10);
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        assert!(SymMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 1.0]]).is_err());
    }
}
