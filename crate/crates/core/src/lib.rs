//! Lookdown construction of a two-type branching diffusion with selection and
//! competition: total mass, type configuration and genealogical distances on
//! finitely many levels, together with direct integrators of the population
//! sizes, generator evaluation for martingale checks, a multitype extension
//! and the statistics used to compare ensembles.

pub mod ensemble;
pub mod error;
pub mod events;
pub mod genealogy;
pub mod lookdown;
pub mod mgcheck;
pub mod multitype;
pub mod sde;
pub mod seed;
pub mod stats;

pub use error::{Error, Result};

/// Parses JSON into `T`, rejecting the document if it holds keys that `T`
/// does not know. All offending keys are listed in the error.
pub fn from_json_strict<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let mut unknown = Vec::new();
    let de = &mut serde_json::Deserializer::from_str(text);
    let value: T = serde_ignored::deserialize(&mut *de, |path| unknown.push(path.to_string().replace("?.", "")))
        .map_err(|e| error::invalid(format!("malformed config: {e}")))?;
    de.end().map_err(|e| error::invalid(format!("malformed config: {e}")))?;
    if !unknown.is_empty() {
        return Err(error::invalid(format!("unknown keys: {}", unknown.join(", "))));
    }
    Ok(value)
}

/// Float formatting used in every CSV output: 17 significant digits, so a
/// parse of the text gives back the same value.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
