//! Browser bindings: a lookdown trajectory, direct paths and a Newick
//! genealogy, each returned as a string the page can parse.

use lookdown_core::genealogy::ultrametric_to_tree;
use lookdown_core::lookdown::{project_masses, run_replica, two_type_labels, NullObserver, RunConfig, Target, TwoType};
use lookdown_core::sde::{simulate_direct, DirectConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize, PartialEq)]
pub struct TrajectoryPoint {
    pub s: f64,
    pub t: f64,
    pub zeta: f64,
    pub mu_a: f64,
    pub xi_a: f64,
    pub xi_b: f64,
}

/// Lookdown run sampled at `points` equally spaced lookdown times.
pub fn lookdown_trajectory(config_json: &str, points: usize) -> lookdown_core::Result<Vec<TrajectoryPoint>> {
    let mut cfg: RunConfig = lookdown_core::from_json_strict(config_json)?;
    cfg.track_genealogy = false;
    let points = points.max(1);
    let targets: Vec<Target> = (1..=points).map(|k| Target::S(cfg.horizon_s * k as f64 / points as f64)).collect();
    let tr = run_replica(&cfg, &TwoType::new(cfg.b, cfg.c), &two_type_labels(), &targets, &mut NullObserver)?;
    Ok(tr
        .snapshots
        .iter()
        .map(|st| {
            let (xi_a, xi_b) = project_masses(st);
            TrajectoryPoint { s: st.s, t: st.t_accum, zeta: st.zeta, mu_a: st.mu_a(), xi_a, xi_b }
        })
        .collect())
}

#[derive(Debug, Serialize)]
pub struct Paths {
    pub t: Vec<Vec<f64>>,
    pub xi_a: Vec<Vec<f64>>,
    pub xi_b: Vec<Vec<f64>>,
}

/// `replicas` direct paths, each thinned to at most `points + 1` samples.
pub fn direct_paths(config_json: &str, replicas: usize, seed: u64, points: usize) -> lookdown_core::Result<Paths> {
    let cfg: DirectConfig = lookdown_core::from_json_strict(config_json)?;
    let stride = (cfg.n_steps() / points.max(1)).max(1);
    let mut out = Paths { t: Vec::new(), xi_a: Vec::new(), xi_b: Vec::new() };
    for r in 0..replicas {
        let p = simulate_direct(&cfg, lookdown_core::seed::replica_seed(seed, r as u64))?;
        let thin = |v: &[f64]| v.iter().step_by(stride).copied().collect::<Vec<f64>>();
        out.t.push(thin(&p.times_t));
        out.xi_a.push(thin(&p.xi_a));
        out.xi_b.push(thin(&p.xi_b));
    }
    Ok(out)
}

/// Genealogy of the levels at the end of the run, labelled `L<level>_<type>`.
pub fn genealogy_newick(config_json: &str) -> lookdown_core::Result<String> {
    let mut cfg: RunConfig = lookdown_core::from_json_strict(config_json)?;
    cfg.track_genealogy = true;
    let labels = two_type_labels();
    let tr = run_replica(&cfg, &TwoType::new(cfg.b, cfg.c), &labels, &[Target::S(cfg.horizon_s)], &mut NullObserver)?;
    let st = tr.final_state;
    let d = st.distances().expect("genealogy is tracked");
    let tree = ultrametric_to_tree(&d)?;
    Ok(tree.to_newick_with(|i| format!("L{}_{}", i + 1, labels[st.types.get(i) as usize])))
}

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

#[wasm_bindgen(js_name = lookdownTrajectory)]
pub fn lookdown_trajectory_js(config_json: &str, points: usize) -> Result<String, JsValue> {
    let pts = lookdown_trajectory(config_json, points).map_err(js_err)?;
    serde_json::to_string(&pts).map_err(js_err)
}

#[wasm_bindgen(js_name = directPaths)]
pub fn direct_paths_js(config_json: &str, replicas: usize, seed: u64, points: usize) -> Result<String, JsValue> {
    let paths = direct_paths(config_json, replicas, seed, points).map_err(js_err)?;
    serde_json::to_string(&paths).map_err(js_err)
}

#[wasm_bindgen(js_name = genealogyNewick)]
pub fn genealogy_newick_js(config_json: &str) -> Result<String, JsValue> {
    genealogy_newick(config_json).map_err(js_err)
}
