use super::dynamics::{accepts, Dynamics, Resolution, TwoType};
use super::{LookdownState, TypeConfig, A, B};
use crate::error::{invalid, Result};
use crate::events::{Mark, PotentialAtom};

/// Arrow from level `i` to level `j`: `j` receives a copy of `i`, the levels
/// at and above `j` move up by one and the top level is dropped.
pub fn apply_neutral_event(state: &mut LookdownState, i: usize, j: usize) -> Result<()> {
    state.ensure_running()?;
    let n = state.n();
    if !(i < j && j < n) {
        return Err(invalid(format!("arrow ({i}, {j}) needs i < j < {n}")));
    }
    state.types.arrow(i, j);
    if let Some(g) = state.genealogy.as_mut() {
        g.apply_arrow(i, j);
    }
    Ok(())
}

/// Whether a two-type potential atom is active against the current state.
pub fn activation_check(state: &LookdownState, atom: &PotentialAtom, b: f64, c: f64) -> bool {
    let dyn_ = TwoType::new(b, c);
    match atom.mark {
        Mark::Beta => accepts(atom.z, dyn_.beta_threshold(state.zeta, &state.types)),
        Mark::Delta => accepts(atom.z, dyn_.delta_threshold(state.types.get(atom.level), state.zeta, &state.types)),
        Mark::Lambda => false,
    }
}

/// Level picked by the quantile map of `w`, among all levels or only the
/// `A` levels.
pub fn sample_individual(state: &LookdownState, w: f64, condition_on_a: bool) -> Result<usize> {
    if !(0.0..=1.0).contains(&w) {
        return Err(invalid(format!("sampling seed must lie in [0, 1], got {w}")));
    }
    if condition_on_a {
        state
            .types
            .quantile_level_of_type(w, A)
            .ok_or_else(|| invalid("cannot sample an A level: no level carries type A"))
    } else {
        Ok(state.types.quantile_level(w))
    }
}

/// Applies a two-type potential atom; returns whether it was active.
pub fn apply_potential_event(state: &mut LookdownState, atom: &PotentialAtom, b: f64, c: f64) -> Result<bool> {
    state.ensure_running()?;
    if atom.level >= state.n() {
        return Err(invalid(format!("atom level {} outside 0..{}", atom.level, state.n())));
    }
    let res = TwoType::new(b, c).resolve(atom, state.zeta, &state.types);
    apply_resolution(state, atom.level, res);
    Ok(res != Resolution::Reject)
}

pub(crate) fn apply_resolution(state: &mut LookdownState, level: usize, res: Resolution) {
    match res {
        Resolution::Reject => {}
        Resolution::Replace { parent } => {
            let h = state.types.get(parent);
            state.types.set(level, h);
            if let Some(g) = state.genealogy.as_mut() {
                g.replace(level, parent);
            }
        }
        Resolution::Mutate { to } => state.types.set(level, to),
    }
}

/// Lets lookdown time run for `dt_s` at the current mass: the original clock
/// and every off-diagonal distance grow by `zeta * dt_s` and `2 * zeta * dt_s`.
pub fn grow_distances(state: &mut LookdownState, dt_s: f64) -> Result<()> {
    if !(dt_s >= 0.0) {
        return Err(invalid(format!("time step must be >= 0, got {dt_s}")));
    }
    state.s += dt_s;
    state.t_accum += state.zeta * dt_s;
    if let Some(g) = state.genealogy.as_mut() {
        g.set_clock(state.t_accum);
    }
    Ok(())
}

/// `(zeta * muA, zeta * muB)`.
pub fn project_masses(state: &LookdownState) -> (f64, f64) {
    let p = state.mu_a();
    (state.zeta * p, state.zeta * (1.0 - p))
}

/// The two-type update rule: the type that a level of type `h` carries after
/// an atom `(z, w, mark)` at mass `v` and configuration `types`.
#[allow(clippy::too_many_arguments)]
pub fn q_two_type(h: u8, types: &TypeConfig, v: f64, z: f64, w: f64, mark: Mark, b: f64, c: f64) -> u8 {
    let mu_a = types.freq(A);
    match mark {
        Mark::Beta if accepts(z, b * mu_a * v) => A,
        Mark::Delta => {
            let other = if h == A { 1.0 - mu_a } else { mu_a };
            if accepts(z, c * other * v * v) {
                types.get(types.quantile_level(w))
            } else {
                h
            }
        }
        _ => {
            debug_assert!(h == A || h == B);
            h
        }
    }
}
