use super::{TypeConfig, A};
use crate::events::{Mark, PotentialAtom};
use crate::sde::mass_drift;

/// Thinning rule: `z <= threshold`, where a zero threshold never accepts.
#[inline]
pub(crate) fn accepts(z: f64, threshold: f64) -> bool {
    threshold > 0.0 && z <= threshold
}

/// What an activated potential atom does to its level.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Resolution {
    Reject,
    /// The level becomes a copy of `parent` (type and genealogy).
    Replace { parent: usize },
    /// The level switches type in place; distances are untouched.
    Mutate { to: u8 },
}

/// Type-dependent rates of a lookdown run.
pub trait Dynamics {
    fn n_types(&self) -> usize;

    /// Marks whose atoms can ever be active.
    fn marks(&self) -> Vec<Mark>;

    /// Rate cap of the potential events for stopping bound `m`.
    fn cap(&self, m: f64) -> f64;

    /// Upper bound of the activation threshold of `mark` while the mass stays
    /// below `m`. Atoms above it are never active.
    fn threshold_bound(&self, mark: Mark, m: f64) -> f64;

    /// Per-capita drift `f` of the mass: `dz = f z ds + z dW`.
    fn growth_rate(&self, zeta: f64, types: &TypeConfig) -> f64;

    /// Outcome of `atom` against the left limit `(zeta, types)`.
    fn resolve(&self, atom: &PotentialAtom, zeta: f64, types: &TypeConfig) -> Resolution;
}

/// Two types `A` (fecundity `b`) and `B`, with competition `c` between them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoType {
    pub b: f64,
    pub c: f64,
}

impl TwoType {
    pub fn new(b: f64, c: f64) -> Self {
        Self { b, c }
    }

    pub fn beta_threshold(&self, zeta: f64, types: &TypeConfig) -> f64 {
        self.b * types.freq(A) * zeta
    }

    /// Death threshold at a level of type `h`: competition from the other type.
    pub fn delta_threshold(&self, h: u8, zeta: f64, types: &TypeConfig) -> f64 {
        let other = if h == A { 1.0 - types.freq(A) } else { types.freq(A) };
        self.c * other * zeta * zeta
    }
}

impl Dynamics for TwoType {
    fn n_types(&self) -> usize {
        2
    }

    fn marks(&self) -> Vec<Mark> {
        vec![Mark::Beta, Mark::Delta]
    }

    fn cap(&self, m: f64) -> f64 {
        self.b.max(self.c) * m * m
    }

    fn threshold_bound(&self, mark: Mark, m: f64) -> f64 {
        match mark {
            Mark::Beta => self.b * m,
            Mark::Delta => self.c * m * m,
            Mark::Lambda => 0.0,
        }
    }

    fn growth_rate(&self, zeta: f64, types: &TypeConfig) -> f64 {
        mass_drift(zeta, types.freq(A), self.b, self.c)
    }

    fn resolve(&self, atom: &PotentialAtom, zeta: f64, types: &TypeConfig) -> Resolution {
        match atom.mark {
            Mark::Beta if accepts(atom.z, self.beta_threshold(zeta, types)) => types
                .quantile_level_of_type(atom.w, A)
                .map_or(Resolution::Reject, |parent| Resolution::Replace { parent }),
            Mark::Delta if accepts(atom.z, self.delta_threshold(types.get(atom.level), zeta, types)) => {
                Resolution::Replace { parent: types.quantile_level(atom.w) }
            }
            _ => Resolution::Reject,
        }
    }
}
