use serde::Serialize;

use super::matrix::DistMatrix;
use crate::error::{invalid, Error, Result};

/// Default tolerance: `1e-9` times the largest entry.
pub fn default_tol(d: &DistMatrix) -> f64 {
    1e-9 * d.max_entry()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    /// `D(i,j) - max(D(i,k), D(k,j))`.
    pub excess: f64,
}

impl Violation {
    pub fn into_error(self) -> Error {
        Error::NotUltrametric { i: self.i, j: self.j, k: self.k, excess: self.excess }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct UltrametricReport {
    pub pass: bool,
    /// Triple with the largest excess, if any excess exceeds `tol`.
    pub worst: Option<Violation>,
}

/// Largest subdominant ultrametric `u <= d` (minimax path distances), by
/// Prim's algorithm in `O(n^2)`.
fn subdominant_gap(d: &DistMatrix) -> f64 {
    let n = d.n();
    if n < 3 {
        return 0.0;
    }
    let mut order = Vec::with_capacity(n);
    let mut in_tree = vec![false; n];
    let mut best = d.row(0).to_vec();
    let mut link = vec![0usize; n];
    let mut u = vec![0.0; n * n];
    in_tree[0] = true;
    order.push(0);
    let mut gap = 0.0f64;
    for _ in 1..n {
        let mut pick = usize::MAX;
        for j in 0..n {
            if !in_tree[j] && (pick == usize::MAX || best[j] < best[pick]) {
                pick = j;
            }
        }
        let (w, p) = (best[pick], link[pick]);
        for &x in &order {
            let v = if x == p { w } else { w.max(u[p * n + x]) };
            u[pick * n + x] = v;
            u[x * n + pick] = v;
            gap = gap.max(d.get(pick, x) - v);
        }
        in_tree[pick] = true;
        order.push(pick);
        let row = d.row(pick);
        for j in 0..n {
            if !in_tree[j] && row[j] < best[j] {
                best[j] = row[j];
                link[j] = pick;
            }
        }
    }
    gap
}

/// Checks the strong triangle inequality over all triples. A matrix within
/// `tol` of its subdominant ultrametric passes without the cubic scan.
pub fn check_ultrametric(d: &DistMatrix, tol: f64) -> Result<UltrametricReport> {
    let n = d.n();
    for i in 0..n {
        if d.get(i, i) != 0.0 {
            return Err(invalid(format!("nonzero diagonal entry at {i}")));
        }
        for j in i + 1..n {
            if d.get(i, j) != d.get(j, i) {
                return Err(invalid(format!("asymmetric entries at ({i},{j})")));
            }
        }
    }
    if subdominant_gap(d) <= tol {
        return Ok(UltrametricReport { pass: true, worst: None });
    }
    let mut worst: Option<Violation> = None;
    for i in 0..n {
        let ri = d.row(i);
        for j in i + 1..n {
            let rj = d.row(j);
            let target = ri[j];
            // min over k of max(D(i,k), D(k,j)); k = i or j gives D(i,j) itself.
            let (mut best, mut best_k) = (f64::INFINITY, i);
            for (k, (&a, &b)) in ri.iter().zip(rj).enumerate() {
                let m = a.max(b);
                if m < best {
                    best = m;
                    best_k = k;
                }
            }
            let excess = target - best;
            if excess > tol && worst.map_or(true, |w| excess > w.excess) {
                worst = Some(Violation { i, j, k: best_k, excess });
            }
        }
    }
    Ok(UltrametricReport { pass: worst.is_none(), worst })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m3(d12: f64, d13: f64, d23: f64) -> DistMatrix {
        DistMatrix::from_rows(&[vec![0.0, d12, d13], vec![d12, 0.0, d23], vec![d13, d23, 0.0]]).unwrap()
    }

    #[test]
    fn examples() {
        assert!(check_ultrametric(&DistMatrix::zeros(4), 0.0).unwrap().pass);
        assert!(check_ultrametric(&m3(2.0, 5.0, 5.0), 0.0).unwrap().pass);

        let r = check_ultrametric(&m3(2.0, 5.0, 3.0), 0.0).unwrap();
        assert!(!r.pass);
        let w = r.worst.unwrap();
        assert_eq!((w.i, w.j, w.k), (0, 2, 1));
        assert_eq!(w.excess, 2.0);
    }

    #[test]
    fn tolerance_absorbs_rounding() {
        let d = m3(2.0, 5.0 + 1e-12, 5.0);
        assert!(!check_ultrametric(&d, 0.0).unwrap().pass);
        assert!(check_ultrametric(&d, default_tol(&d)).unwrap().pass);
    }

    #[test]
    fn fast_path_agrees_with_the_triple_scan() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.random_range(3..9);
            let mut d = DistMatrix::zeros(n);
            for i in 0..n {
                for j in i + 1..n {
                    d.set(i, j, rng.random_range(0..4) as f64);
                }
            }
            let gap = subdominant_gap(&d);
            let mut brute = 0.0f64;
            for i in 0..n {
                for j in 0..n {
                    let best = (0..n).map(|k| d.get(i, k).max(d.get(k, j))).fold(f64::INFINITY, f64::min);
                    brute = brute.max(d.get(i, j) - best);
                }
            }
            assert_eq!(gap == 0.0, brute == 0.0);
        }
    }

    #[test]
    fn malformed_input_is_rejected() {
        let mut rows = vec![vec![0.0, 1.0], vec![2.0, 0.0]];
        assert!(check_ultrametric(&DistMatrix::from_rows(&rows).unwrap(), 0.0).is_err());
        rows = vec![vec![1.0, 1.0], vec![1.0, 0.0]];
        assert!(check_ultrametric(&DistMatrix::from_rows(&rows).unwrap(), 0.0).is_err());
    }
}
