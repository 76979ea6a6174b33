//! FIM post-processing: eigen-analysis, design determinants, level sets
//! and parameter-grid phase diagrams.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod phase;

pub use phase::{phase_diagram, PhaseDiagram, PhasePoint};

const JACOBI_TOLERANCE: f64 = 1e-12;
const DEGENERACY_GAP: f64 = 1e-8;
const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenReport {
    /// Descending.
    pub values: Vec<f64>,
    /// Unit eigenvectors, `vectors[i]` paired with `values[i]`.
    pub vectors: Vec<Vec<f64>>,
    /// False where the eigenvalue is within the degeneracy gap of a
    /// neighbour, so its direction is not determined.
    pub unique: Vec<bool>,
    /// FNV-1a hash of the symmetrised input matrix.
    pub source_digest: String,
}

impl EigenReport {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Eigenvector of the largest eigenvalue.
    pub fn most_sensitive(&self) -> (&[f64], f64) {
        (&self.vectors[0], self.values[0])
    }

    /// Eigenvector of the smallest eigenvalue.
    pub fn least_sensitive(&self) -> (&[f64], f64) {
        let last = self.values.len() - 1;
        (&self.vectors[last], self.values[last])
    }

    /// V Λ Vᵀ.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let k = self.dim();
        DMatrix::from_fn(k, k, |i, j| {
            (0..k).map(|m| self.values[m] * self.vectors[m][i] * self.vectors[m][j]).sum()
        })
    }
}

fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn digest(m: &DMatrix<f64>) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in m.iter() {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix.
///
/// Eigenvalues are sorted descending; each eigenvector is signed so its
/// largest-magnitude component (first one on ties) is positive.
pub fn eigen_sym(f: &DMatrix<f64>) -> Result<EigenReport> {
    let k = f.nrows();
    if k == 0 || f.ncols() != k {
        return Err(Error::DimensionMismatch {
            what: "eigen_sym input",
            expected: k,
            found: f.ncols(),
        });
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "matrix passed to eigen_sym".into(),
        });
    }
    let norm = frobenius(f);
    let asym = frobenius(&(f - f.transpose()));
    if asym > 1e-8 * norm {
        return Err(Error::InvalidParameter(format!(
            "matrix is not symmetric (asymmetry {asym:e} vs norm {norm:e})"
        )));
    }
    let mut a = (f + f.transpose()) * 0.5;
    let source_digest = digest(&a);
    let mut v = DMatrix::<f64>::identity(k, k);
    let off = |a: &DMatrix<f64>| {
        let mut s = 0.0;
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    s += a[(i, j)] * a[(i, j)];
                }
            }
        }
        s.sqrt()
    };
    let mut sweeps = 0;
    while norm > 0.0 && off(&a) > JACOBI_TOLERANCE * norm {
        if sweeps == MAX_SWEEPS {
            return Err(Error::Inconsistent("Jacobi iteration did not converge".into()));
        }
        sweeps += 1;
        for p in 0..k {
            for q in p + 1..k {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..k {
                    let (arp, arq) = (a[(r, p)], a[(r, q)]);
                    a[(r, p)] = c * arp - s * arq;
                    a[(r, q)] = s * arp + c * arq;
                }
                for r in 0..k {
                    let (apr, aqr) = (a[(p, r)], a[(q, r)]);
                    a[(p, r)] = c * apr - s * aqr;
                    a[(q, r)] = s * apr + c * aqr;
                }
                for r in 0..k {
                    let (vrp, vrq) = (v[(r, p)], v[(r, q)]);
                    v[(r, p)] = c * vrp - s * vrq;
                    v[(r, q)] = s * vrp + c * vrq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| {
            let mut col: Vec<f64> = v.column(i).iter().copied().collect();
            let lead = (0..k).fold(0, |best, r| if col[r].abs() > col[best].abs() { r } else { best });
            if col[lead] < 0.0 {
                col.iter_mut().for_each(|x| *x = -*x);
            }
            col
        })
        .collect();
    let gap = DEGENERACY_GAP * norm;
    let unique = (0..k)
        .map(|i| {
            let below = i + 1 < k && values[i] - values[i + 1] < gap;
            let above = i > 0 && values[i - 1] - values[i] < gap;
            !(below || above)
        })
        .collect();
    Ok(EigenReport {
        values,
        vectors,
        unique,
        source_digest,
    })
}

/// det F as the product of the eigenvalues of [`eigen_sym`]. Also known as
/// the D-optimality criterion.
pub fn a_optimality(f: &DMatrix<f64>) -> Result<f64> {
    Ok(eigen_sym(f)?.values.iter().product())
}

/// Points ε on the contour ½ εᵀ F_{ij} ε = `level` in the (i, j) parameter
/// plane, where F_{ij} is the 2×2 sub-block.
pub fn level_set(f: &DMatrix<f64>, i: usize, j: usize, level: f64, points: usize) -> Result<Vec<[f64; 2]>> {
    let k = f.nrows();
    if i >= k || j >= k || i == j {
        return Err(Error::InvalidConfig(format!("bad parameter pair ({i}, {j}) for k={k}")));
    }
    let sub = DMatrix::from_row_slice(2, 2, &[f[(i, i)], f[(i, j)], f[(j, i)], f[(j, j)]]);
    let e = eigen_sym(&sub)?;
    if !(e.values[1] > 0.0) || !(level > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "level set of ({i}, {j}) block is unbounded (eigenvalues {:?})",
            e.values
        )));
    }
    let r: Vec<f64> = e.values.iter().map(|l| (2.0 * level / l).sqrt()).collect();
    Ok((0..points)
        .map(|n| {
            let phi = 2.0 * std::f64::consts::PI * n as f64 / points as f64;
            let (c, s) = (phi.cos() * r[0], phi.sin() * r[1]);
            [c * e.vectors[0][0] + s * e.vectors[1][0], c * e.vectors[0][1] + s * e.vectors[1][1]]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use proptest::prelude::*;

    #[test]
    fn diagonal() {
        let e = eigen_sym(&DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(e.values, vec![3.0, 1.0]);
        assert_eq!(e.vectors, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let e = eigen_sym(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0])).unwrap();
        assert_eq!(e.vectors, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn textbook() {
        let e = eigen_sym(&DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.vectors[0][0] - r).abs() < 1e-14 && (e.vectors[0][1] - r).abs() < 1e-14);
        // (1,-1)/√2 and (-1,1)/√2 tie on magnitude; the first component wins
        assert!((e.vectors[1][0] - r).abs() < 1e-14 && (e.vectors[1][1] + r).abs() < 1e-14);
    }

    #[test]
    fn determinant() {
        assert!((a_optimality(&DMatrix::identity(3, 3)).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(a_optimality(&DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 5.0])).unwrap(), 10.0);
    }

    #[test]
    fn degeneracy_flagged() {
        let e = eigen_sym(&DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(e.unique, vec![false, false, true]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(eigen_sym(&DMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, 0.0, 1.0])).is_err());
        assert!(eigen_sym(&DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0])).is_err());
    }

    #[test]
    fn level_set_lies_on_contour() {
        let f = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 2.0, 0.5, 0.0, 0.5, 1.0]);
        for p in level_set(&f, 0, 1, 0.01, 16).unwrap() {
            let q = 0.5 * (4.0 * p[0] * p[0] + 2.0 * p[0] * p[1] + 2.0 * p[1] * p[1]);
            assert!((q - 0.01).abs() < 1e-14);
        }
        assert!(level_set(&DMatrix::zeros(2, 2), 0, 1, 0.01, 8).is_err());
    }

    fn random_symmetric(k: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = RngStream::new(seed, 0);
        let m = DMatrix::from_fn(k, k, |_, _| rng.uniform_range(-1.0, 1.0));
        &m + m.transpose()
    }

    proptest! {
        #[test]
        fn reconstruction_and_orthogonality(seed in 0u64..10_000, k in 1usize..7) {
            let f = random_symmetric(k, seed);
            let e = eigen_sym(&f).unwrap();
            let norm = frobenius(&f);
            prop_assert!(frobenius(&(e.reconstruct() - &f)) < 1e-10 * norm.max(1e-300));
            for a in 0..k {
                for b in 0..k {
                    let d: f64 = (0..k).map(|i| e.vectors[a][i] * e.vectors[b][i]).sum();
                    let want = if a == b { 1.0 } else { 0.0 };
                    prop_assert!((d - want).abs() < 1e-10);
                }
            }
            let trace: f64 = (0..k).map(|i| f[(i, i)]).sum();
            let sum: f64 = e.values.iter().sum();
            prop_assert!((sum - trace).abs() <= 1e-10 * norm);
            prop_assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn top_direction_is_scale_invariant(seed in 0u64..10_000, s in 0.01f64..100.0) {
            let f = random_symmetric(4, seed);
            let a = eigen_sym(&f).unwrap();
            let b = eigen_sym(&(&f * s)).unwrap();
            prop_assume!(a.unique[0]);
            for i in 0..4 {
                prop_assert!((a.vectors[0][i] - b.vectors[0][i]).abs() < 1e-8);
            }
        }
    }
}
