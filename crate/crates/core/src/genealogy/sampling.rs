use rand::seq::index;
use serde::Serialize;

use super::matrix::DistMatrix;
use crate::error::{invalid, Result};
use crate::lookdown::LookdownState;
use crate::seed::{stream_rng, StreamKind};

/// Distances and types of `k` distinct levels.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarkedMatrixSample {
    pub k: usize,
    pub d: DistMatrix,
    pub types: Vec<u8>,
    pub source_levels: Vec<usize>,
}

/// `m` independent draws of `k` distinct levels, uniformly without
/// replacement and in random order, restricted from the state's distances
/// and types.
pub fn sample_marked_matrices(state: &LookdownState, k: usize, m: usize, seed: u64) -> Result<Vec<MarkedMatrixSample>> {
    let n = state.n();
    if k > n {
        return Err(invalid(format!("sample size {k} exceeds the {n} levels")));
    }
    let full = state.distances().ok_or_else(|| invalid("the state does not track its genealogy"))?;
    let mut rng = stream_rng(seed, StreamKind::Sampling, 0);
    Ok((0..m)
        .map(|_| {
            let levels = index::sample(&mut rng, n, k).into_vec();
            MarkedMatrixSample {
                k,
                d: full.restrict(&levels),
                types: levels.iter().map(|&l| state.types.get(l)).collect(),
                source_levels: levels,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genealogy::{check_ultrametric, Genealogy};
    use crate::lookdown::{A, B};

    fn state() -> LookdownState {
        let d = DistMatrix::from_rows(&[
            vec![0.0, 2.0, 6.0, 6.0],
            vec![2.0, 0.0, 6.0, 6.0],
            vec![6.0, 6.0, 0.0, 4.0],
            vec![6.0, 6.0, 4.0, 0.0],
        ])
        .unwrap();
        let mut st = LookdownState::two_type(1.0, vec![A, B, B, A]).unwrap();
        st.genealogy = Some(Genealogy::from_distances(&d, 0.0));
        st
    }

    #[test]
    fn full_draw_is_a_relabeling() {
        let st = state();
        for s in sample_marked_matrices(&st, 4, 5, 1).unwrap() {
            let mut lv = s.source_levels.clone();
            lv.sort();
            assert_eq!(lv, vec![0, 1, 2, 3]);
            for a in 0..4 {
                assert_eq!(s.types[a], st.types.get(s.source_levels[a]));
                for b in 0..4 {
                    assert_eq!(s.d.get(a, b), st.distance(s.source_levels[a], s.source_levels[b]).unwrap());
                }
            }
            assert!(check_ultrametric(&s.d, 0.0).unwrap().pass);
        }
    }

    #[test]
    fn single_draws_estimate_the_frequency() {
        let st = state();
        let samples = sample_marked_matrices(&st, 1, 4000, 2).unwrap();
        let p = samples.iter().filter(|s| s.types[0] == A).count() as f64 / 4000.0;
        assert!((p - 0.5).abs() < 3.0 * (0.25f64 / 4000.0).sqrt());
        assert!(samples.iter().all(|s| s.d.get(0, 0) == 0.0));
    }

    #[test]
    fn monotype_and_errors() {
        let st = LookdownState::two_type(1.0, vec![B; 5]).unwrap();
        assert!(sample_marked_matrices(&st, 3, 10, 3).unwrap().iter().all(|s| s.types.iter().all(|&t| t == B)));
        assert!(sample_marked_matrices(&st, 6, 1, 3).is_err());
        let mut no_tree = st.clone();
        no_tree.genealogy = None;
        assert!(sample_marked_matrices(&no_tree, 2, 1, 3).is_err());
    }
}
