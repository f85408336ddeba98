use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Dense symmetric matrix of pairwise distances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    /// Builds a matrix from rows; the input must be square.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(invalid("distance matrix must be square"));
        }
        Ok(Self { n, data: rows.iter().flatten().copied().collect() })
    }

    /// Symmetric matrix from its strict upper triangle, row-major.
    pub fn from_upper(n: usize, upper: &[f64]) -> Result<Self> {
        if upper.len() != n * n.saturating_sub(1) / 2 {
            return Err(invalid(format!("expected {} upper-triangle entries, got {}", n * n.saturating_sub(1) / 2, upper.len())));
        }
        let mut m = Self::zeros(n);
        let mut it = upper.iter();
        for i in 0..n {
            for j in i + 1..n {
                let v = *it.next().expect("length checked");
                m.set(i, j, v);
            }
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn upper_triangle(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * self.n.saturating_sub(1) / 2);
        for i in 0..self.n {
            out.extend_from_slice(&self.row(i)[i + 1..]);
        }
        out
    }

    pub fn max_entry(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// Restriction to the given levels, in the given order.
    pub fn restrict(&self, levels: &[usize]) -> Self {
        let k = levels.len();
        let mut out = Self::zeros(k);
        for (a, &i) in levels.iter().enumerate() {
            for (b, &j) in levels.iter().enumerate().skip(a + 1) {
                out.set(a, b, self.get(i, j));
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &DistMatrix) -> f64 {
        assert_eq!(self.n, other.n);
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Genealogical distances of `n` levels, stored as the original-time instant
/// of the most recent common ancestor of every pair. The distance of `i != j`
/// is `2 * (clock - mrca(i, j))`, so uniform growth of all distances is a
/// clock update and event updates only permute or copy entries.
#[derive(Clone, Debug, PartialEq)]
pub struct Genealogy {
    n: usize,
    clock: f64,
    mrca: Vec<f64>,
}

impl Genealogy {
    /// All pairs at distance zero at original time `clock`.
    pub fn zero(n: usize, clock: f64) -> Self {
        Self { n, clock, mrca: vec![clock; n * n] }
    }

    pub fn from_distances(d: &DistMatrix, clock: f64) -> Self {
        let n = d.n();
        let mut mrca = vec![clock; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    mrca[i * n + j] = clock - 0.5 * d.get(i, j);
                }
            }
        }
        Self { n, clock, mrca }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn set_clock(&mut self, t: f64) {
        self.clock = t;
    }

    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            2.0 * (self.clock - self.mrca[i * self.n + j])
        }
    }

    pub fn to_matrix(&self) -> DistMatrix {
        let mut d = DistMatrix::zeros(self.n);
        for i in 0..self.n {
            for j in i + 1..self.n {
                d.set(i, j, self.distance(i, j));
            }
        }
        d
    }

    /// Neutral arrow `src -> dst`: levels `>= dst` move up by one, the top
    /// level is dropped, and `dst` becomes a copy of `src` at distance zero.
    pub fn apply_arrow(&mut self, src: usize, dst: usize) {
        let n = self.n;
        debug_assert!(src < dst && dst < n);
        let clock = self.clock;
        let a = &mut self.mrca;
        // Rows above dst take the shifted old row below them; descending order
        // reads every source row before it is overwritten.
        for l in (dst + 1..n).rev() {
            let (from, to) = ((l - 1) * n, l * n);
            let at_src = a[from + src];
            a.copy_within(from..from + dst, to);
            a.copy_within(from + dst..from + n - 1, to + dst + 1);
            a[to + dst] = at_src;
        }
        {
            let (from, to) = (src * n, dst * n);
            a.copy_within(from..from + dst, to);
            a.copy_within(from + dst..from + n - 1, to + dst + 1);
            a[to + src] = clock;
            a[to + dst] = clock;
        }
        for l in 0..dst {
            let row = l * n;
            a.copy_within(row + dst..row + n - 1, row + dst + 1);
            a[row + dst] = if l == src { clock } else { a[row + src] };
        }
    }

    /// Selective replacement: `level` becomes a copy of `parent` at distance
    /// zero; all other pairs keep their distances.
    pub fn replace(&mut self, level: usize, parent: usize) {
        if level == parent {
            return;
        }
        let n = self.n;
        for l in 0..n {
            let v = self.mrca[l * n + parent];
            self.mrca[l * n + level] = v;
            self.mrca[level * n + l] = v;
        }
        self.mrca[level * n + parent] = self.clock;
        self.mrca[parent * n + level] = self.clock;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Reference relabeling written directly from the five cases of the
    /// neutral update (0-based).
    fn arrow_reference(d: &DistMatrix, i: usize, j: usize) -> DistMatrix {
        let n = d.n();
        let mut out = DistMatrix::zeros(n);
        for l in 0..n {
            for m in l + 1..n {
                let v = if m < j {
                    d.get(l, m)
                } else if m == j {
                    d.get(l, i)
                } else if l < j {
                    d.get(l, m - 1)
                } else if l == j {
                    d.get(i, m - 1)
                } else {
                    d.get(l - 1, m - 1)
                };
                out.set(l, m, v);
            }
        }
        out
    }

    fn sample_ultrametric(n: usize) -> DistMatrix {
        // distances from a caterpillar: D(a,b) = 2 * (1 + max(a,b))
        let mut d = DistMatrix::zeros(n);
        for a in 0..n {
            for b in a + 1..n {
                d.set(a, b, 2.0 * (1.0 + b as f64) + (a % 2) as f64 * 0.0);
            }
        }
        d
    }

    #[test]
    fn arrow_matches_case_table() {
        let d = sample_ultrametric(6);
        for i in 0..6 {
            for j in i + 1..6 {
                let mut g = Genealogy::from_distances(&d, 3.0);
                g.apply_arrow(i, j);
                let got = g.to_matrix();
                let want = arrow_reference(&d, i, j);
                assert!(got.max_abs_diff(&want) < 1e-12, "arrow ({i},{j})");
            }
        }
    }

    #[test]
    fn arrow_worked_example() {
        let d = DistMatrix::from_rows(&[vec![0.0, 4.0, 6.0], vec![4.0, 0.0, 6.0], vec![6.0, 6.0, 0.0]]).unwrap();
        let mut g = Genealogy::from_distances(&d, 0.0);
        g.apply_arrow(0, 1);
        assert_eq!(g.distance(0, 1), 0.0);
        assert_eq!(g.distance(0, 2), 4.0);
        assert_eq!(g.distance(1, 2), 4.0);

        let mut z = Genealogy::zero(4, 1.0);
        z.apply_arrow(0, 1);
        assert_eq!(z.to_matrix(), DistMatrix::zeros(4));
    }

    #[test]
    fn replace_copies_parent_row() {
        let d = sample_ultrametric(4);
        let mut g = Genealogy::from_distances(&d, 0.0);
        g.replace(1, 0);
        assert_eq!(g.distance(1, 0), 0.0);
        assert_eq!(g.distance(1, 2), d.get(0, 2));
        assert_eq!(g.distance(1, 3), d.get(0, 3));
        assert_eq!(g.distance(2, 3), d.get(2, 3));
    }

    #[test]
    fn clock_growth_shifts_off_diagonal() {
        let mut g = Genealogy::zero(3, 0.0);
        g.set_clock(0.5);
        let d = g.to_matrix();
        assert_eq!(d.get(0, 1), 1.0);
        assert_eq!(d.get(1, 2), 1.0);
        assert_eq!(d.get(2, 2), 0.0);
    }

    #[test]
    fn upper_triangle_round_trip() {
        let d = sample_ultrametric(5);
        let back = DistMatrix::from_upper(5, &d.upper_triangle()).unwrap();
        assert_eq!(back, d);
        assert!(DistMatrix::from_upper(5, &[1.0]).is_err());
        assert!(DistMatrix::from_rows(&[vec![0.0, 1.0]]).is_err());
    }
}
