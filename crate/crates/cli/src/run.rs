//! Mode runners: compute, write the data files, return the report.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use lookdown_core::ensemble::try_map_replicas;
use lookdown_core::events::{EventGenerator, Mark};
use lookdown_core::fmt_f64;
use lookdown_core::genealogy::{check_ultrametric, default_tol, fragment_masses, parse_newick, ultrametric_to_tree};
use lookdown_core::lookdown::{
    project_masses, run_replica, two_type_labels, AppliedEvent, Dynamics, LookdownState, NullObserver, Observer,
    Resolution, RunConfig, Target, TwoType, A,
};
use lookdown_core::mgcheck::{martingale_residual_from, BumpWindow, ResidualReport, TestFunction};
use lookdown_core::sde::DirectConfig;
use lookdown_core::stats::ks_two_sample;
use serde::Serialize;

use crate::config::{At, Experiment, Mode};
use crate::experiments::{
    bracket_test, compare_moments, direct_at_times, direct_ends, invariant_suite, lookdown_projection,
};
use crate::report::{Report, StatReport};

/// Output directory of one invocation.
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn write(&self, name: &str, contents: &str) -> anyhow::Result<()> {
        let path = self.root.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }
}

/// Runs `exp` and writes its files, `report.json` and the effective
/// `config.json` into `out`.
pub fn run_experiment(exp: &Experiment, out: &OutDir) -> anyhow::Result<Report> {
    exp.validate()?;
    out.write_json("config.json", exp)?;
    let report = match exp.mode {
        Mode::Direct => run_direct(exp, out)?,
        Mode::Lookdown | Mode::Multitype => run_lookdown(exp, out)?,
        Mode::ProjectCompare => run_project(exp, out)?,
        Mode::Mgtest => run_mgtest(exp, out)?,
        Mode::ExportTree => run_export_tree(exp, out)?,
        Mode::Fragments => run_fragments(exp, out)?,
    };
    out.write_json("report.json", &report)?;
    Ok(report)
}

fn direct_times(exp: &Experiment, cfg: &DirectConfig) -> Vec<f64> {
    let mut times = exp.outputs_t.clone();
    if times.last() != Some(&cfg.horizon) {
        times.push(cfg.horizon);
    }
    times
}

fn run_direct(exp: &Experiment, out: &OutDir) -> anyhow::Result<Report> {
    let cfg = exp.direct.as_ref().expect("validated");
    let times = direct_times(exp, cfg);
    let runs = direct_at_times(cfg, exp.replicas, exp.seed, &times)?;
    let mut csv = String::from("replica,t,xiA,xiB\n");
    for (r, path) in runs.iter().enumerate() {
        for (t, &(a, b)) in times.iter().zip(path) {
            let _ = writeln!(csv, "{r},{},{},{}", fmt_f64(*t), fmt_f64(a), fmt_f64(b));
        }
    }
    out.write("paths.csv", &csv)?;
    let mut report = Report::new(exp.mode.as_str(), exp.seed, exp.replicas);
    for (k, t) in times.iter().enumerate() {
        let a: Vec<f64> = runs.iter().map(|p| p[k].0).collect();
        let b: Vec<f64> = runs.iter().map(|p| p[k].1).collect();
        let ab: Vec<f64> = runs.iter().map(|p| p[k].0 * p[k].1).collect();
        let ea: Vec<f64> = a.iter().map(|&x| (x == 0.0) as u8 as f64).collect();
        let eb: Vec<f64> = b.iter().map(|&x| (x == 0.0) as u8 as f64).collect();
        report.push(StatReport::mean(format!("mean_xiA@t={t}"), &a));
        report.push(StatReport::mean(format!("mean_xiB@t={t}"), &b));
        report.push(StatReport::mean(format!("mean_xiA_xiB@t={t}"), &ab));
        report.push(StatReport::mean(format!("extinct_A@t={t}"), &ea));
        report.push(StatReport::mean(format!("extinct_B@t={t}"), &eb));
    }
    Ok(report)
}

fn lookdown_targets(exp: &Experiment, cfg: &RunConfig) -> Vec<Target> {
    if !exp.outputs_t.is_empty() {
        exp.outputs_t.iter().map(|&t| Target::T(t)).collect()
    } else if !exp.outputs_s.is_empty() {
        exp.outputs_s.iter().map(|&s| Target::S(s)).collect()
    } else {
        vec![Target::S(cfg.horizon_s)]
    }
}

/// Records applied events.
struct EventLog<'a> {
    labels: &'a [String],
    rows: Vec<String>,
}

impl Observer for EventLog<'_> {
    fn on_event(&mut self, event: &AppliedEvent, _state: &LookdownState) {
        let row = match event {
            AppliedEvent::Neutral(a) => format!("neutral,{},{},{},,,,,,", fmt_f64(a.time_s), a.src + 1, a.dst + 1),
            AppliedEvent::Potential { atom, resolution } => {
                let (parent, to) = match resolution {
                    Resolution::Replace { parent } => ((parent + 1).to_string(), String::new()),
                    Resolution::Mutate { to } => (String::new(), self.labels[*to as usize].clone()),
                    Resolution::Reject => (String::new(), String::new()),
                };
                format!(
                    "potential,{},,,{},{},{},{},{parent},{to}",
                    fmt_f64(atom.time_s),
                    atom.level + 1,
                    fmt_f64(atom.z),
                    fmt_f64(atom.w),
                    atom.mark.as_str()
                )
            }
        };
        self.rows.push(row);
    }
}

#[derive(Serialize)]
struct Snapshot {
    replica: usize,
    s: f64,
    t: f64,
    zeta: f64,
    stop: &'static str,
    types: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    distances: Option<Vec<Vec<f64>>>,
}

impl Snapshot {
    fn of(replica: usize, st: &LookdownState, labels: &[String]) -> Self {
        Self {
            replica,
            s: st.s,
            t: st.t_accum,
            zeta: st.zeta,
            stop: st.stop.as_str(),
            types: st.types.types().iter().map(|&h| labels[h as usize].clone()).collect(),
            distances: st.distances().map(|d| d.to_rows()),
        }
    }
}

struct ReplicaRun {
    snapshots: Vec<LookdownState>,
    events: Option<Vec<String>>,
}

fn run_replicas<D: Dynamics + Sync>(
    exp: &Experiment,
    cfg: &RunConfig,
    dynamics: &D,
    labels: &[String],
    targets: &[Target],
) -> anyhow::Result<Vec<ReplicaRun>> {
    Ok(try_map_replicas(exp.replicas, exp.seed, |r, s| {
        let mut c = cfg.clone();
        c.seed = s;
        if r < exp.trace_replicas {
            let mut log = EventLog { labels, rows: Vec::new() };
            let tr = run_replica(&c, dynamics, labels, targets, &mut log)?;
            Ok(ReplicaRun { snapshots: tr.snapshots, events: Some(log.rows) })
        } else {
            let tr = run_replica(&c, dynamics, labels, targets, &mut NullObserver)?;
            Ok(ReplicaRun { snapshots: tr.snapshots, events: None })
        }
    })?)
}

fn model_parts(exp: &Experiment) -> anyhow::Result<(Vec<String>, Option<lookdown_core::multitype::MultitypeDynamics>)> {
    match (&exp.model, exp.mode) {
        (Some(m), mode) if mode != Mode::Lookdown => Ok((m.types.clone(), Some(m.compile()?))),
        _ => Ok((two_type_labels(), None)),
    }
}

fn run_lookdown(exp: &Experiment, out: &OutDir) -> anyhow::Result<Report> {
    let cfg = exp.run_config()?;
    let targets = lookdown_targets(exp, &cfg);
    let (labels, multi) = model_parts(exp)?;
    let runs = match &multi {
        Some(d) => run_replicas(exp, &cfg, d, &labels, &targets)?,
        None => run_replicas(exp, &cfg, &TwoType::new(cfg.b, cfg.c), &labels, &targets)?,
    };
    let two = multi.is_none();
    let mut csv = if two {
        String::from("replica,s,t,zeta,muA,xiA,xiB,stop\n")
    } else {
        let mut h = String::from("replica,s,t,zeta,stop");
        for l in &labels {
            let _ = write!(h, ",mu_{l}");
        }
        h.push('\n');
        h
    };
    let mut events = String::from("replica,kind,time_s,i,j,level,z,w,mark,parent,new_type\n");
    let mut snaps = Vec::new();
    for (r, run) in runs.iter().enumerate() {
        for st in &run.snapshots {
            if two {
                let (xa, xb) = project_masses(st);
                let _ = writeln!(
                    csv,
                    "{r},{},{},{},{},{},{},{}",
                    fmt_f64(st.s),
                    fmt_f64(st.t_accum),
                    fmt_f64(st.zeta),
                    fmt_f64(st.mu_a()),
                    fmt_f64(xa),
                    fmt_f64(xb),
                    st.stop.as_str()
                );
            } else {
                let _ = write!(csv, "{r},{},{},{},{}", fmt_f64(st.s), fmt_f64(st.t_accum), fmt_f64(st.zeta), st.stop.as_str());
                for h in 0..labels.len() {
                    let _ = write!(csv, ",{}", fmt_f64(st.types.freq(h as u8)));
                }
                csv.push('\n');
            }
            if r < exp.trace_replicas {
                snaps.push(Snapshot::of(r, st, &labels));
            }
        }
        if let Some(rows) = &run.events {
            for row in rows {
                let _ = writeln!(events, "{r},{row}");
            }
        }
    }
    out.write("trajectory.csv", &csv)?;
    out.write("events.csv", &events)?;
    out.write_json("snapshots.json", &snaps)?;

    let mut report = Report::new(exp.mode.as_str(), exp.seed, exp.replicas);
    for (k, target) in targets.iter().enumerate() {
        let at = match target {
            Target::S(s) => format!("s={s}"),
            Target::T(t) => format!("t={t}"),
        };
        let states: Vec<&LookdownState> = runs.iter().map(|r| &r.snapshots[k]).collect();
        let zeta: Vec<f64> = states.iter().map(|s| s.zeta).collect();
        report.push(StatReport::mean(format!("mean_zeta@{at}"), &zeta));
        for (h, l) in labels.iter().enumerate() {
            let mu: Vec<f64> = states.iter().map(|s| s.types.freq(h as u8)).collect();
            report.push(StatReport::mean(format!("mean_mu_{l}@{at}"), &mu));
        }
        let stopped: Vec<f64> = states.iter().map(|s| s.is_stopped() as u8 as f64).collect();
        report.push(StatReport::mean(format!("stopped@{at}"), &stopped));
    }
    Ok(report)
}

fn run_project(exp: &Experiment, out: &OutDir) -> anyhow::Result<Report> {
    let spec = exp.project.as_ref().expect("validated");
    let base = exp.run_config()?;
    let mu0 = match &base.initial_types {
        lookdown_core::lookdown::InitialTypes::Exact(f) | lookdown_core::lookdown::InitialTypes::Iid(f) => f[0],
        lookdown_core::lookdown::InitialTypes::Explicit(_) => {
            bail!("project-compare needs initial types given by frequencies")
        }
    };
    let dcfg = DirectConfig::new(base.v0 * mu0, base.v0 * (1.0 - mu0), base.b, base.c, spec.dt_t, spec.t);
    let direct = direct_ends(&dcfg, exp.replicas, exp.seed)?;
    let levels = if spec.levels.is_empty() { vec![base.n_levels] } else { spec.levels.clone() };
    let mut report = Report::new(exp.mode.as_str(), exp.seed, exp.replicas);
    let mut csv = String::from("n_levels,moment,lookdown,lookdown_se,direct,direct_se,z,pass\n");
    let mut per_level = Vec::new();
    for &n in &levels {
        let mut cfg = base.clone();
        cfg.n_levels = n;
        cfg.track_genealogy = false;
        let ld = lookdown_projection(&cfg, spec.t, exp.replicas)?;
        let cmp = compare_moments(&ld, &direct, spec.sigmas)?;
        for c in &cmp {
            let _ = writeln!(
                csv,
                "{n},{},{},{},{},{},{},{}",
                c.name,
                fmt_f64(c.lookdown),
                fmt_f64(c.lookdown_se),
                fmt_f64(c.direct),
                fmt_f64(c.direct_se),
                fmt_f64(c.test.z),
                c.test.pass
            );
            report.push(StatReport {
                name: format!("{}_diff@n={n}", c.name),
                estimate: c.test.mean,
                se: c.test.se,
                target: Some(0.0),
                pass: Some(c.test.pass),
            });
        }
        per_level.push(cmp);
    }
    let qv = bracket_test(&direct, spec.sigmas)?;
    report.push(StatReport::from_test("bracket_A_direct", &qv));
    if per_level.len() >= 2 {
        for k in 0..3 {
            let name = &per_level[0][k].name;
            let gaps: Vec<f64> = per_level.windows(2).map(|w| (w[1][k].lookdown - w[0][k].lookdown).abs()).collect();
            let monotone = gaps.windows(2).all(|g| g[1] <= g[0]);
            let last = per_level.last().unwrap()[k].lookdown_se;
            let gap = *gaps.last().unwrap();
            report.push(StatReport {
                name: format!("{name}_truncation_gap"),
                estimate: gap,
                se: last,
                target: None,
                pass: Some(monotone && gap < last),
            });
        }
    }
    out.write("moments.csv", &csv)?;
    Ok(report)
}

/// The built-in test functions named in `names`.
pub fn test_functions(names: &[String], m: f64, width: Option<f64>) -> anyhow::Result<Vec<TestFunction>> {
    let window = match width {
        Some(w) => BumpWindow::new(m, w)?,
        None => BumpWindow::for_band(m)?,
    };
    names.iter().map(|n| Ok(TestFunction::builtin(n, window)?)).collect()
}

fn run_mgtest(exp: &Experiment, out: &OutDir) -> anyhow::Result<Report> {
    let spec = exp.mgtest.as_ref().expect("validated");
    let cfg = exp.run_config()?;
    let fs = test_functions(&spec.functions, cfg.m, spec.window_width)?;
    let mut reports: Vec<ResidualReport> = Vec::new();
    for f in &fs {
        reports.push(martingale_residual_from(&cfg, f, spec.start_s, spec.delta, exp.replicas)?);
    }
    out.write_json("residuals.json", &reports)?;
    let mut report = Report::new(exp.mode.as_str(), exp.seed, exp.replicas);
    for r in &reports {
        report.push(StatReport {
            name: format!("residual_{}", r.function_id),
            estimate: r.mean,
            se: r.se,
            target: Some(0.0),
            pass: Some(r.pass),
        });
    }
    Ok(report)
}

fn at_target(at: At) -> Target {
    match at {
        At::S(s) => Target::S(s),
        At::T(t) => Target::T(t),
    }
}

fn run_export_tree(exp: &Experiment, out: &OutDir) -> anyhow::Result<Report> {
    let spec = exp.tree.as_ref().expect("validated");
    let mut cfg = exp.run_config()?;
    cfg.track_genealogy = true;
    let (labels, multi) = model_parts(exp)?;
    let target = at_target(spec.at);
    let finals = match &multi {
        Some(d) => crate::experiments::final_states(&cfg, d, &labels, target, exp.replicas)?,
        None => crate::experiments::final_states(&cfg, &TwoType::new(cfg.b, cfg.c), &labels, target, exp.replicas)?,
    };
    let (mut ultra, mut parsed) = (0, 0);
    for (r, st) in finals.iter().enumerate() {
        let d = st.distances().expect("tracked");
        if check_ultrametric(&d, default_tol(&d))?.pass {
            ultra += 1;
        }
        let tree = ultrametric_to_tree(&d)?;
        let text = tree.to_newick_with(|i| format!("L{}_{}", i + 1, labels[st.types.get(i) as usize]));
        if parse_newick(&text).is_ok() {
            parsed += 1;
        }
        out.write(&format!("tree_r{r}.nwk"), &format!("{text}\n"))?;
    }
    let mut report = Report::new(exp.mode.as_str(), exp.seed, exp.replicas);
    report.push(StatReport::check("ultrametric", ultra, finals.len()));
    report.push(StatReport::check("newick_parses", parsed, finals.len()));
    Ok(report)
}

fn run_fragments(exp: &Experiment, out: &OutDir) -> anyhow::Result<Report> {
    let spec = exp.fragments.as_ref().expect("validated");
    let cfg = exp.run_config()?;
    let dynamics = TwoType::new(cfg.b, cfg.c);
    let marks: Vec<Mark> = dynamics.marks();
    let all = try_map_replicas(exp.replicas, exp.seed, |_, s| {
        let ev = EventGenerator::new(cfg.n_levels, spec.window_end, cfg.cap(), &marks, s)?.collect_stream();
        fragment_masses(&ev, spec.window_end, &spec.probes)
    })?;
    let mut csv = String::from("replica,probe_s,root_time_s,root_level,mass\n");
    let mut sums_ok = 0;
    let mut total = 0;
    let mut counts: Vec<Vec<f64>> = vec![Vec::new(); spec.probes.len()];
    for (r, fm) in all.iter().enumerate() {
        for (k, (p, masses)) in fm.probes.iter().zip(&fm.masses).enumerate() {
            total += 1;
            let sum: f64 = masses.iter().map(|m| m.1).sum();
            if (sum - 1.0).abs() < 1e-9 {
                sums_ok += 1;
            }
            counts[k].push(masses.len() as f64);
            for (root, m) in masses {
                let _ = writeln!(csv, "{r},{},{},{},{}", fmt_f64(*p), fmt_f64(root.time_s), root.level + 1, fmt_f64(*m));
            }
        }
    }
    out.write("fragments.csv", &csv)?;
    let mut report = Report::new(exp.mode.as_str(), exp.seed, exp.replicas);
    for (k, p) in spec.probes.iter().enumerate() {
        report.push(StatReport::mean(format!("fragments@s={p}"), &counts[k]));
    }
    report.push(StatReport::check("masses_sum_to_one", sums_ok, total));
    Ok(report)
}

/// Invariant suite: structural checks along every replica, plus a
/// permutation check of levels 1, 2, 3 when there are enough replicas.
pub fn run_validate(exp: &Experiment, out: &OutDir) -> anyhow::Result<Report> {
    exp.validate()?;
    out.write_json("config.json", exp)?;
    let mut cfg = exp.run_config()?;
    cfg.track_genealogy = true;
    let targets = lookdown_targets(exp, &cfg);
    let (labels, multi) = model_parts(exp)?;
    let (counts, finals) = match &multi {
        Some(d) => invariant_suite(&cfg, d, &labels, &targets, exp.replicas)?,
        None => invariant_suite(&cfg, &TwoType::new(cfg.b, cfg.c), &labels, &targets, exp.replicas)?,
    };
    let mut report = Report::new("validate", exp.seed, exp.replicas);
    report.push(StatReport::check("ultrametric_after_events", counts.ultrametric_passed, counts.ultrametric_checked));
    report.push(StatReport::check("zero_distance_to_parent", counts.parent_passed, counts.parent_checked));
    report.push(StatReport::check("clock_quadrature", counts.clock_passed, counts.clock_checked));
    report.push(StatReport::check("distance_growth_windows", counts.windows_passed, counts.windows_checked));
    if counts.monotype_checked > 0 {
        report.push(StatReport::check("monotype_absorption", counts.monotype_passed, counts.monotype_checked));
    }
    let half = finals.len() / 2;
    if half >= 30 && cfg.n_levels >= 3 {
        let r12: Vec<f64> = finals[..half].iter().map(|s| s.distance(0, 1).unwrap()).collect();
        let r23: Vec<f64> = finals[half..2 * half].iter().map(|s| s.distance(1, 2).unwrap()).collect();
        let ks = ks_two_sample(&r12, &r23)?;
        report.push(StatReport {
            name: "exchangeable_R12_R23_ks".into(),
            estimate: ks.statistic,
            se: 0.0,
            target: None,
            pass: Some(ks.p_value > 0.01),
        });
        let g1: Vec<f64> = finals[..half].iter().map(|s| (s.types.get(0) == A) as u8 as f64).collect();
        let g3: Vec<f64> = finals[half..2 * half].iter().map(|s| (s.types.get(2) == A) as u8 as f64).collect();
        let ks = ks_two_sample(&g1, &g3)?;
        report.push(StatReport {
            name: "exchangeable_G1_G3_ks".into(),
            estimate: ks.statistic,
            se: 0.0,
            target: None,
            pass: Some(ks.p_value > 0.01),
        });
    }
    out.write_json("invariants.json", &counts)?;
    out.write_json("report.json", &report)?;
    Ok(report)
}
