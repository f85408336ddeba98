use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// `psi(x) = exp(-1/x)` for `x > 0`, else 0, with its first two derivatives.
fn psi(x: f64) -> (f64, f64, f64) {
    if x <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let p = (-1.0 / x).exp();
    let x2 = x * x;
    (p, p / x2, p * (1.0 / (x2 * x2) - 2.0 / (x2 * x)))
}

/// Smooth step from 0 (at `x <= 0`) to 1 (at `x >= 1`), infinitely
/// differentiable, with first and second derivatives.
pub fn smoothstep(x: f64) -> (f64, f64, f64) {
    if x <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if x >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let (g, g1, g2) = psi(x);
    let (h, hm1, hm2) = psi(1.0 - x);
    let (h1, h2) = (-hm1, hm2);
    let d = g + h;
    let (d1, d2) = (g1 + h1, g2 + h2);
    let s = g / d;
    let num1 = g1 * d - g * d1;
    let s1 = num1 / (d * d);
    let s2 = (g2 * d - g * d2) / (d * d) - 2.0 * d1 * num1 / (d * d * d);
    (s, s1, s2)
}

/// Smooth window equal to 1 well inside `(1/M, M)` and 0 near its ends: it
/// rises over `[1/M + margin, 1/M + margin + width]` and falls symmetrically.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpWindow {
    pub lo: f64,
    pub hi: f64,
    pub width: f64,
}

impl BumpWindow {
    /// Window for the band `(1/M, M)` with ramp width `width` and a gap of
    /// `width / 4` to each end of the band.
    pub fn new(m: f64, width: f64) -> Result<Self> {
        if !(m > 1.0) {
            return Err(invalid(format!("M must exceed 1, got {m}")));
        }
        let span = m - 1.0 / m;
        if !(width > 0.0) || 2.5 * width > span {
            return Err(invalid(format!("window width {width} does not fit in (1/M, M)")));
        }
        let margin = 0.25 * width;
        Ok(Self { lo: 1.0 / m + margin, hi: m - margin, width })
    }

    /// Default ramp width `0.05 * (M - 1/M)`.
    pub fn for_band(m: f64) -> Result<Self> {
        Self::new(m, 0.05 * (m - 1.0 / m))
    }

    pub fn eval(&self, v: f64) -> (f64, f64, f64) {
        let w = self.width;
        let (a, a1, a2) = smoothstep((v - self.lo) / w);
        let (b, b1, b2) = smoothstep((self.hi - v) / w);
        let (a1, a2) = (a1 / w, a2 / (w * w));
        let (b1, b2) = (-b1 / w, b2 / (w * w));
        (a * b, a1 * b + a * b1, a2 * b + 2.0 * a1 * b1 + a * b2)
    }
}

/// Factor in the mass: `window(v) * v^power` (no window when `None`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassFactor {
    pub power: i32,
    pub window: Option<BumpWindow>,
}

impl MassFactor {
    pub const ONE: MassFactor = MassFactor { power: 0, window: None };

    pub fn eval(&self, v: f64) -> (f64, f64, f64) {
        let k = self.power as f64;
        let (p, p1, p2) = match self.power {
            0 => (1.0, 0.0, 0.0),
            1 => (v, 1.0, 0.0),
            _ => (v.powi(self.power), k * v.powi(self.power - 1), k * (k - 1.0) * v.powi(self.power - 2)),
        };
        match &self.window {
            None => (p, p1, p2),
            Some(w) => {
                let (b, b1, b2) = w.eval(v);
                (b * p, b1 * p + b * p1, b2 * p + 2.0 * b1 * p1 + b * p2)
            }
        }
    }
}

/// Factor in one distance entry `r(i, j)`, `i < j`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceFactor {
    One,
    /// `r / (1 + r)`.
    SoftCap { i: usize, j: usize },
}

impl DistanceFactor {
    pub fn slot(&self) -> Option<(usize, usize)> {
        match *self {
            DistanceFactor::One => None,
            DistanceFactor::SoftCap { i, j } => Some((i, j)),
        }
    }

    fn eval<V: MarkedView + ?Sized>(&self, view: &V) -> (f64, f64) {
        match *self {
            DistanceFactor::One => (1.0, 0.0),
            DistanceFactor::SoftCap { i, j } => {
                let r = view.dist(i, j);
                (r / (1.0 + r), 1.0 / ((1.0 + r) * (1.0 + r)))
            }
        }
    }
}

/// Product of indicators `1{g(level) = type}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TypeFactor {
    One,
    Indicator(Vec<(usize, u8)>),
}

impl TypeFactor {
    fn eval<V: MarkedView + ?Sized>(&self, view: &V) -> f64 {
        match self {
            TypeFactor::One => 1.0,
            TypeFactor::Indicator(req) => {
                if req.iter().all(|&(l, h)| view.ty(l) == h) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// `coeff * mass(v) * distance(r) * types(g)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: f64,
    pub mass: MassFactor,
    pub distance: DistanceFactor,
    pub types: TypeFactor,
}

impl Term {
    fn degree(&self) -> usize {
        let d = self.distance.slot().map_or(0, |(i, j)| i.max(j) + 1);
        let t = match &self.types {
            TypeFactor::One => 0,
            TypeFactor::Indicator(req) => req.iter().map(|&(l, _)| l + 1).max().unwrap_or(0),
        };
        d.max(t)
    }
}

/// Distances and types as seen by a test function.
pub trait MarkedView {
    fn dist(&self, i: usize, j: usize) -> f64;
    fn ty(&self, i: usize) -> u8;
}

/// Partial derivatives of `F` at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Derivatives {
    pub value: f64,
    pub d_v: f64,
    pub d_vv: f64,
}

/// A finite sum of product-form terms, depending on the levels below its
/// degree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub id: String,
    pub terms: Vec<Term>,
}

impl TestFunction {
    pub fn new(id: impl Into<String>, terms: Vec<Term>) -> Result<Self> {
        for t in &terms {
            if let Some((i, j)) = t.distance.slot() {
                if i >= j {
                    return Err(invalid(format!("distance slot ({i}, {j}) needs i < j")));
                }
            }
            if !t.coeff.is_finite() {
                return Err(invalid("term coefficient must be finite"));
            }
        }
        Ok(Self { id: id.into(), terms })
    }

    /// Number of leading levels the function reads.
    pub fn degree(&self) -> usize {
        self.terms.iter().map(Term::degree).max().unwrap_or(0)
    }

    pub fn uses_distances(&self) -> bool {
        self.terms.iter().any(|t| t.distance.slot().is_some())
    }

    pub fn value<V: MarkedView + ?Sized>(&self, v: f64, view: &V) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let g = t.types.eval(view);
                if g == 0.0 {
                    return 0.0;
                }
                t.coeff * t.mass.eval(v).0 * t.distance.eval(view).0 * g
            })
            .sum()
    }

    /// Value and mass derivatives.
    pub fn mass_derivatives<V: MarkedView + ?Sized>(&self, v: f64, view: &V) -> Derivatives {
        let mut out = Derivatives::default();
        for t in &self.terms {
            let g = t.types.eval(view);
            if g == 0.0 {
                continue;
            }
            let (p, p1, p2) = t.mass.eval(v);
            let k = t.coeff * t.distance.eval(view).0 * g;
            out.value += k * p;
            out.d_v += k * p1;
            out.d_vv += k * p2;
        }
        out
    }

    /// `dF / dr(i, j)`, `i < j`.
    pub fn d_r<V: MarkedView + ?Sized>(&self, i: usize, j: usize, v: f64, view: &V) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.distance.slot() == Some((i, j)))
            .map(|t| t.coeff * t.mass.eval(v).0 * t.distance.eval(view).1 * t.types.eval(view))
            .sum()
    }

    /// `sum over used slots of dF / dr(slot)`.
    pub fn sum_d_r<V: MarkedView + ?Sized>(&self, v: f64, view: &V) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.distance.slot().is_some())
            .map(|t| t.coeff * t.mass.eval(v).0 * t.distance.eval(view).1 * t.types.eval(view))
            .sum()
    }

    /// `c * F`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut f = self.clone();
        for t in &mut f.terms {
            t.coeff *= c;
        }
        f
    }

    /// `F + G`.
    pub fn plus(&self, other: &TestFunction) -> Self {
        let mut f = self.clone();
        f.id = format!("{}+{}", self.id, other.id);
        f.terms.extend(other.terms.iter().cloned());
        f
    }

    pub fn constant(c: f64) -> Self {
        Self {
            id: "constant".into(),
            terms: vec![Term { coeff: c, mass: MassFactor::ONE, distance: DistanceFactor::One, types: TypeFactor::One }],
        }
    }

    /// `v^power` without window.
    pub fn mass_power(power: i32) -> Self {
        Self {
            id: format!("v^{power}"),
            terms: vec![Term {
                coeff: 1.0,
                mass: MassFactor { power, window: None },
                distance: DistanceFactor::One,
                types: TypeFactor::One,
            }],
        }
    }

    /// `r(i, j) / (1 + r(i, j))` without mass factor (0-based levels).
    pub fn soft_cap(i: usize, j: usize) -> Self {
        Self {
            id: format!("softcap_r{}{}", i + 1, j + 1),
            terms: vec![Term {
                coeff: 1.0,
                mass: MassFactor::ONE,
                distance: DistanceFactor::SoftCap { i, j },
                types: TypeFactor::One,
            }],
        }
    }

    /// `window(v) * v`.
    pub fn bump_v(window: BumpWindow) -> Self {
        Self {
            id: "bump_v".into(),
            terms: vec![Term {
                coeff: 1.0,
                mass: MassFactor { power: 1, window: Some(window) },
                distance: DistanceFactor::One,
                types: TypeFactor::One,
            }],
        }
    }

    /// `window(v) * r(1,2) / (1 + r(1,2))`.
    pub fn bump_soft_cap_r12(window: BumpWindow) -> Self {
        Self {
            id: "bump_softcap_r12".into(),
            terms: vec![Term {
                coeff: 1.0,
                mass: MassFactor { power: 0, window: Some(window) },
                distance: DistanceFactor::SoftCap { i: 0, j: 1 },
                types: TypeFactor::One,
            }],
        }
    }

    /// `window(v) * 1{g(1) = h}`.
    pub fn bump_indicator_g1(window: BumpWindow, h: u8) -> Self {
        Self::bump_indicators(window, vec![(0, h)], "bump_ind_g1")
    }

    /// `window(v) * 1{g(1) = h1} * 1{g(2) = h2}`.
    pub fn bump_indicator_g12(window: BumpWindow, h1: u8, h2: u8) -> Self {
        Self::bump_indicators(window, vec![(0, h1), (1, h2)], "bump_ind_g12")
    }

    fn bump_indicators(window: BumpWindow, req: Vec<(usize, u8)>, id: &str) -> Self {
        Self {
            id: id.into(),
            terms: vec![Term {
                coeff: 1.0,
                mass: MassFactor { power: 0, window: Some(window) },
                distance: DistanceFactor::One,
                types: TypeFactor::Indicator(req),
            }],
        }
    }

    /// Built-in function by name: `bump_v`, `bump_softcap_r12`, `bump_ind_g1`
    /// (type `A`), `bump_ind_g12` (types `A`, `A`), `v`, `softcap_r12`,
    /// `constant`.
    pub fn builtin(name: &str, window: BumpWindow) -> Result<Self> {
        Ok(match name {
            "bump_v" => Self::bump_v(window),
            "bump_softcap_r12" => Self::bump_soft_cap_r12(window),
            "bump_ind_g1" => Self::bump_indicator_g1(window, 0),
            "bump_ind_g12" => Self::bump_indicator_g12(window, 0, 0),
            "v" => Self::mass_power(1),
            "softcap_r12" => Self::soft_cap(0, 1),
            "constant" => Self::constant(1.0),
            _ => return Err(invalid(format!("unknown test function {name:?}"))),
        })
    }
}
