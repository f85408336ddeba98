use super::function::{MarkedView, TestFunction};
use crate::error::{invalid, Result};
use crate::genealogy::{DistMatrix, Genealogy};
use crate::lookdown::{LookdownState, A, B};

/// Where pairwise distances of the levels come from.
#[derive(Clone, Copy, Debug)]
pub enum Distances<'a> {
    Matrix(&'a DistMatrix),
    Genealogy(&'a Genealogy),
    /// No distances; only distance-free functions can be evaluated.
    Untracked,
}

impl Distances<'_> {
    #[inline]
    fn get(&self, a: usize, b: usize) -> f64 {
        match self {
            Distances::Matrix(d) => d.get(a, b),
            Distances::Genealogy(g) => g.distance(a, b),
            Distances::Untracked => f64::NAN,
        }
    }

    fn is_tracked(&self) -> bool {
        !matches!(self, Distances::Untracked)
    }
}

/// Types and distances of all `n` levels.
#[derive(Clone, Copy, Debug)]
pub struct Levels<'a> {
    pub distances: Distances<'a>,
    pub types: &'a [u8],
}

impl<'a> Levels<'a> {
    pub fn new(r: &'a DistMatrix, g: &'a [u8]) -> Result<Self> {
        if r.n() != g.len() {
            return Err(invalid(format!("{} distances rows but {} types", r.n(), g.len())));
        }
        Ok(Self { distances: Distances::Matrix(r), types: g })
    }

    pub fn of_state(state: &'a LookdownState) -> Self {
        let distances = state.genealogy.as_ref().map_or(Distances::Untracked, Distances::Genealogy);
        Self { distances, types: state.types.types() }
    }

    pub fn n(&self) -> usize {
        self.types.len()
    }

    fn freq_a(&self) -> f64 {
        self.types.iter().filter(|&&h| h == A).count() as f64 / self.n() as f64
    }
}

/// The first `idx.len()` slots of a test function, read through a map into
/// the levels of a state.
#[derive(Clone, Debug)]
pub(crate) struct View<'a> {
    levels: Levels<'a>,
    pub(crate) idx: Vec<usize>,
    /// Type overrides per slot (set by selective jumps).
    ty: Vec<u8>,
}

impl<'a> View<'a> {
    pub(crate) fn new(levels: Levels<'a>, idx: Vec<usize>) -> Self {
        let ty = idx.iter().map(|&l| levels.types[l]).collect();
        Self { levels, idx, ty }
    }

    /// Neutral jump: slot `j` copies slot `i`, slots above `j` move up.
    fn neutral(&self, i: usize, j: usize) -> Self {
        let mut out = self.clone();
        for l in (j + 1..self.idx.len()).rev() {
            out.idx[l] = self.idx[l - 1];
            out.ty[l] = self.ty[l - 1];
        }
        out.idx[j] = self.idx[i];
        out.ty[j] = self.ty[i];
        out
    }

    /// Selective jump: slot `j` takes the place of level `theta`.
    fn selective(&self, j: usize, theta: usize) -> Self {
        let mut out = self.clone();
        out.idx[j] = theta;
        out.ty[j] = self.levels.types[theta];
        out
    }
}

impl MarkedView for View<'_> {
    #[inline]
    fn dist(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.idx[i], self.idx[j]);
        if a == b {
            0.0
        } else {
            self.levels.distances.get(a, b)
        }
    }

    #[inline]
    fn ty(&self, i: usize) -> u8 {
        self.ty[i]
    }
}

/// Generator of the stopped two-type process `(zeta, R, G)` on lookdown time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Generator {
    pub b: f64,
    pub c: f64,
    pub m: f64,
}

impl Generator {
    pub fn new(b: f64, c: f64, m: f64) -> Result<Self> {
        if !(b >= 0.0 && c >= 0.0 && b.is_finite() && c.is_finite()) {
            return Err(invalid(format!("rates must be finite and nonnegative, got b = {b}, c = {c}")));
        }
        if !(m > 1.0) {
            return Err(invalid(format!("M must exceed 1, got {m}")));
        }
        Ok(Self { b, c, m })
    }

    fn in_band(&self, v: f64) -> bool {
        v > 1.0 / self.m && v < self.m
    }

    /// `AF(v, r, g)` with the first `degree` slots at the first levels.
    /// Zero outside the band `(1/M, M)`.
    pub fn eval(&self, f: &TestFunction, v: f64, levels: Levels<'_>) -> Result<f64> {
        let deg = f.degree();
        self.check(f, deg, &levels)?;
        if !self.in_band(v) {
            return Ok(0.0);
        }
        Ok(self.eval_view(f, v, &View::new(levels, (0..deg).collect())))
    }

    /// `AF` at a running state; 0 once the state has stopped.
    pub fn eval_state(&self, f: &TestFunction, state: &LookdownState) -> Result<f64> {
        if state.is_stopped() {
            return Ok(0.0);
        }
        self.eval(f, state.zeta, Levels::of_state(state))
    }

    pub(crate) fn check(&self, f: &TestFunction, deg: usize, levels: &Levels<'_>) -> Result<()> {
        if deg > levels.n() {
            return Err(invalid(format!("test function of degree {deg} needs at least {deg} levels, got {}", levels.n())));
        }
        if f.uses_distances() && !levels.distances.is_tracked() {
            return Err(invalid(format!("test function {:?} reads distances, which are not tracked", f.id)));
        }
        Ok(())
    }

    pub(crate) fn eval_view(&self, f: &TestFunction, v: f64, view: &View<'_>) -> f64 {
        let deg = view.idx.len();
        let n = view.levels.n();
        let mu_a = view.levels.freq_a();
        let mu_b = 1.0 - mu_a;
        let d = f.mass_derivatives(v, view);
        let f0 = d.value;

        let mut out = 0.5 * v * v * d.d_vv;
        out += (self.b * v * v * mu_a - 2.0 * self.c * v * v * v * mu_a * mu_b) * d.d_v;
        if f.uses_distances() {
            out += 2.0 * v * f.sum_d_r(v, view);
        }
        for j in 1..deg {
            for i in 0..j {
                out += f.value(v, &view.neutral(i, j)) - f0;
            }
        }
        if deg == 0 || n == 0 {
            return out;
        }
        let inv_n = 1.0 / n as f64;
        let types = view.levels.types;
        for j in 0..deg {
            let rate_d = match view.ty(j) {
                B => self.c * v * v * mu_a,
                _ => self.c * v * v * mu_b,
            };
            let (mut sum_all, mut sum_a) = (0.0, 0.0);
            if rate_d > 0.0 || self.b > 0.0 {
                for (theta, &h) in types.iter().enumerate() {
                    let delta = f.value(v, &view.selective(j, theta)) - f0;
                    sum_all += delta;
                    if h == A {
                        sum_a += delta;
                    }
                }
            }
            out += rate_d * inv_n * sum_all + self.b * v * inv_n * sum_a;
        }
        out
    }
}

/// `AF` on a distance matrix and type vector (`A` = 0, `B` = 1).
pub fn eval_generator(f: &TestFunction, v: f64, r: &DistMatrix, g: &[u8], b: f64, c: f64, m: f64) -> Result<f64> {
    if let Some(&h) = g.iter().find(|&&h| h > B) {
        return Err(invalid(format!("two-type configuration holds type index {h}")));
    }
    Generator::new(b, c, m)?.eval(f, v, Levels::new(r, g)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mgcheck::function::{BumpWindow, DistanceFactor, MassFactor, Term, TypeFactor};

    fn ab_levels(n: usize, n_a: usize) -> Vec<u8> {
        (0..n).map(|i| if i < n_a { A } else { B }).collect()
    }

    #[test]
    fn constant_function_is_annihilated() {
        let r = DistMatrix::from_rows(&[vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 2.0], vec![2.0, 2.0, 0.0]]).unwrap();
        let g = vec![A, B, A];
        let v = eval_generator(&TestFunction::constant(3.0), 1.3, &r, &g, 0.7, 0.4, 10.0).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn linear_mass_drift_example() {
        let r = DistMatrix::zeros(4);
        let g = ab_levels(4, 2);
        let f = TestFunction::mass_power(1);
        let v = eval_generator(&f, 1.0, &r, &g, 1.0, 0.0, 10.0).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn soft_cap_neutral_example() {
        let rr = 0.8;
        let r = DistMatrix::from_rows(&[vec![0.0, rr], vec![rr, 0.0]]).unwrap();
        let g = vec![A, B];
        let v = 1.7;
        let got = eval_generator(&TestFunction::soft_cap(0, 1), v, &r, &g, 0.0, 0.0, 10.0).unwrap();
        let psi = |x: f64| x / (1.0 + x);
        let dpsi = 1.0 / ((1.0 + rr) * (1.0 + rr));
        let want = 2.0 * v * dpsi + (psi(0.0) - psi(rr));
        assert!((got - want).abs() < 1e-14, "{got} vs {want}");
    }

    #[test]
    fn zero_outside_the_band() {
        let r = DistMatrix::zeros(2);
        let f = TestFunction::mass_power(2);
        assert_eq!(eval_generator(&f, 0.05, &r, &[A, B], 1.0, 1.0, 10.0).unwrap(), 0.0);
        assert_eq!(eval_generator(&f, 11.0, &r, &[A, B], 1.0, 1.0, 10.0).unwrap(), 0.0);
        assert!(eval_generator(&TestFunction::soft_cap(0, 2), 1.0, &r, &[A, B], 1.0, 1.0, 10.0).is_err());
    }

    #[test]
    fn selective_terms_by_hand() {
        // degree 1, F = 1{g(1) = A}; only selective jumps of slot 1 matter
        let w = BumpWindow::for_band(10.0).unwrap();
        let f = TestFunction::bump_indicator_g1(w, A);
        let r = DistMatrix::zeros(4);
        let (b, c, v) = (0.6, 0.9, 1.0);
        // g(1) = B: beta jumps to A-levels switch F from 0 to 1, delta at rate c v^2 mu_A
        let g = vec![B, A, A, B];
        let got = eval_generator(&f, v, &r, &g, b, c, 10.0).unwrap();
        let want = c * v * v * 0.5 * (2.0 / 4.0) + b * v * (2.0 / 4.0);
        assert!((got - want).abs() < 1e-14, "{got} vs {want}");
        // g(1) = A: delta at rate c v^2 mu_B toward B-levels lowers F
        let g = vec![A, A, B, B];
        let got = eval_generator(&f, v, &r, &g, b, c, 10.0).unwrap();
        let want = c * v * v * 0.5 * (-2.0 / 4.0);
        assert!((got - want).abs() < 1e-14, "{got} vs {want}");
    }

    #[test]
    fn neutral_jump_shifts_slots() {
        // F = r(2,3)/(1+r(2,3)); jump (1,2) puts old level 1 at slot 2 and
        // old level 2 at slot 3.
        let rows = vec![
            vec![0.0, 1.0, 3.0, 3.0],
            vec![1.0, 0.0, 3.0, 3.0],
            vec![3.0, 3.0, 0.0, 2.0],
            vec![3.0, 3.0, 2.0, 0.0],
        ];
        let r = DistMatrix::from_rows(&rows).unwrap();
        let levels = Levels::new(&r, &[A, A, A, A]).unwrap();
        let view = View::new(levels, vec![0, 1, 2]);
        let j12 = view.neutral(0, 1);
        assert_eq!(j12.idx, vec![0, 0, 1]);
        assert_eq!(j12.dist(1, 2), 1.0);
        let j13 = view.neutral(0, 2);
        assert_eq!(j13.idx, vec![0, 1, 0]);
        let j23 = view.neutral(1, 2);
        assert_eq!(j23.idx, vec![0, 1, 1]);
        assert_eq!(j23.dist(1, 2), 0.0);
    }

    #[test]
    fn linear_in_the_function() {
        let w = BumpWindow::for_band(10.0).unwrap();
        let f = TestFunction::bump_soft_cap_r12(w);
        let g = TestFunction::bump_indicator_g12(w, A, B);
        let h = TestFunction::new("mixed", vec![Term {
            coeff: 0.3,
            mass: MassFactor { power: 2, window: Some(w) },
            distance: DistanceFactor::SoftCap { i: 0, j: 2 },
            types: TypeFactor::Indicator(vec![(1, B)]),
        }])
        .unwrap();
        let rows = vec![
            vec![0.0, 1.0, 3.0, 3.0, 3.0],
            vec![1.0, 0.0, 3.0, 3.0, 3.0],
            vec![3.0, 3.0, 0.0, 2.0, 0.5],
            vec![3.0, 3.0, 2.0, 0.0, 2.0],
            vec![3.0, 3.0, 0.5, 2.0, 0.0],
        ];
        let r = DistMatrix::from_rows(&rows).unwrap();
        let types = [A, B, B, A, B];
        let gen = |x: &TestFunction, v| eval_generator(x, v, &r, &types, 0.8, 0.3, 10.0).unwrap();
        for v in [0.3, 1.0, 4.2, 9.8] {
            let lhs = gen(&f.scaled(2.5).plus(&g.scaled(-1.5)).plus(&h), v);
            let rhs = 2.5 * gen(&f, v) - 1.5 * gen(&g, v) + gen(&h, v);
            assert!((lhs - rhs).abs() < 1e-12 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
        }
    }
}
