use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::events::{Atom, EventStream};

/// Level at time `s` of the neutral ancestor of level `j` at time `t`,
/// following the arrows in `(s, t]` backward.
pub fn ancestor_level(events: &EventStream, t: f64, s: f64, j: usize) -> Result<usize> {
    if j >= events.n_levels {
        return Err(invalid(format!("level {j} outside 0..{}", events.n_levels)));
    }
    if !(s <= t) || t > events.horizon {
        return Err(Error::OutOfRange(format!("need s <= t <= {}, got s = {s}, t = {t}", events.horizon)));
    }
    let mut level = j;
    for a in events.atoms.iter().rev() {
        if let Atom::Neutral(a) = a {
            if a.time_s > t {
                continue;
            }
            if a.time_s <= s {
                break;
            }
            if level > a.dst {
                level -= 1;
            } else if level == a.dst {
                level = a.src;
            }
        }
    }
    Ok(level)
}

/// Start of a fragment: a potential atom, or a level at time 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Root {
    pub time_s: f64,
    pub level: usize,
}

/// Level fractions per root at each probe time; roots are listed in
/// increasing `(time, level)` order and only with positive mass.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FragmentMasses {
    pub probes: Vec<f64>,
    pub masses: Vec<Vec<(Root, f64)>>,
}

/// Assigns every level at every probe time to the most recent root on its
/// neutral ancestral lineage.
pub fn fragment_masses(events: &EventStream, window_end: f64, probes: &[f64]) -> Result<FragmentMasses> {
    let n = events.n_levels;
    if window_end > events.horizon {
        return Err(Error::OutOfRange(format!("window end {window_end} beyond the horizon {}", events.horizon)));
    }
    if let Some(&p) = probes.iter().find(|&&p| !(0.0..=window_end).contains(&p)) {
        return Err(Error::OutOfRange(format!("probe time {p} outside [0, {window_end}]")));
    }
    let mut masses = Vec::with_capacity(probes.len());
    for &p in probes {
        let end = events.atoms.partition_point(|a| a.time() <= p);
        let mut roots: Vec<Root> = Vec::with_capacity(n);
        for j in 0..n {
            let mut level = j;
            let mut found = None;
            for a in events.atoms[..end].iter().rev() {
                match a {
                    Atom::Potential(q) if q.level == level => {
                        found = Some(Root { time_s: q.time_s, level });
                        break;
                    }
                    Atom::Neutral(q) => {
                        if level > q.dst {
                            level -= 1;
                        } else if level == q.dst {
                            level = q.src;
                        }
                    }
                    _ => {}
                }
            }
            roots.push(found.unwrap_or(Root { time_s: 0.0, level }));
        }
        roots.sort_by(|a, b| a.time_s.total_cmp(&b.time_s).then(a.level.cmp(&b.level)));
        let mut out: Vec<(Root, f64)> = Vec::new();
        for r in roots {
            match out.last_mut() {
                Some((last, m)) if *last == r => *m += 1.0 / n as f64,
                _ => out.push((r, 1.0 / n as f64)),
            }
        }
        masses.push(out);
    }
    Ok(FragmentMasses { probes: probes.to_vec(), masses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{gen_neutral_events, Mark, NeutralAtom, PotentialAtom};

    fn stream(atoms: Vec<Atom>, n: usize) -> EventStream {
        EventStream { atoms, horizon: 10.0, n_levels: n, cap: 1.0, marks: vec![Mark::Beta] }
    }

    #[test]
    fn ancestor_examples() {
        let empty = stream(vec![], 4);
        assert_eq!(ancestor_level(&empty, 5.0, 1.0, 2).unwrap(), 2);
        let one = stream(vec![Atom::Neutral(NeutralAtom { time_s: 2.0, src: 0, dst: 1 })], 4);
        assert_eq!(ancestor_level(&one, 5.0, 1.0, 1).unwrap(), 0);
        assert_eq!(ancestor_level(&one, 5.0, 1.0, 2).unwrap(), 1);
        assert_eq!(ancestor_level(&one, 5.0, 3.0, 2).unwrap(), 2);
        assert!(ancestor_level(&one, 5.0, 1.0, 4).is_err());
        assert!(ancestor_level(&one, 11.0, 1.0, 0).is_err());
    }

    #[test]
    fn ancestor_map_explains_neutral_types() {
        let ev = gen_neutral_events(6, 2.0, 8).unwrap();
        let g0: Vec<usize> = (0..6).collect();
        for probe in [0.3, 1.0, 2.0] {
            let mut g = g0.clone();
            for a in ev.neutral().filter(|a| a.time_s <= probe) {
                g.copy_within(a.dst..5, a.dst + 1);
                g[a.dst] = g[a.src];
            }
            for (j, &label) in g.iter().enumerate() {
                assert_eq!(ancestor_level(&ev, probe, 0.0, j).unwrap(), label);
            }
        }
    }

    #[test]
    fn fragment_examples() {
        let empty = stream(vec![], 4);
        let fm = fragment_masses(&empty, 5.0, &[0.0, 3.0]).unwrap();
        for m in &fm.masses {
            assert_eq!(m.len(), 4);
            assert!(m.iter().all(|(_, x)| (*x - 0.25).abs() < 1e-15));
        }

        let pot = stream(
            vec![Atom::Potential(PotentialAtom { time_s: 1.0, level: 0, z: 0.5, w: 0.5, mark: Mark::Beta })],
            4,
        );
        let fm = fragment_masses(&pot, 5.0, &[0.5, 2.0]).unwrap();
        assert!(fm.masses[0].iter().all(|(r, _)| r.time_s == 0.0));
        let late = &fm.masses[1];
        assert!(late.contains(&(Root { time_s: 1.0, level: 0 }, 0.25)));
        assert!(!late.iter().any(|(r, _)| *r == Root { time_s: 0.0, level: 0 }));
    }

    #[test]
    fn fragment_masses_sum_to_one() {
        let neu = gen_neutral_events(8, 3.0, 1).unwrap();
        let pot = crate::events::gen_potential_events(8, 3.0, 0.2, &[Mark::Beta, Mark::Delta], 1).unwrap();
        let ev = crate::events::merge_streams(&neu, &pot).unwrap();
        let fm = fragment_masses(&ev, 3.0, &[0.5, 1.5, 3.0]).unwrap();
        for m in &fm.masses {
            let total: f64 = m.iter().map(|(_, x)| x).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        assert!(fragment_masses(&ev, 3.0, &[4.0]).is_err());
    }
}
