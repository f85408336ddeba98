use std::collections::VecDeque;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::seed::{stream_rng, StreamKind};

/// Brownian motion sampled lazily: values on the grid `k * dt` come from one
/// stream, values in between from Brownian bridges on a second stream. Two
/// runs with the same seed and `dt` share the grid values whatever times they
/// query in between.
#[derive(Clone, Debug)]
pub struct BrownianNoise {
    grid: ChaCha8Rng,
    bridge: ChaCha8Rng,
    dt: f64,
    next_k: u64,
    cur: (f64, f64),
    known: VecDeque<(f64, f64)>,
}

impl BrownianNoise {
    /// Motion started at `W(s0) = 0`.
    pub fn new(seed: u64, dt: f64, s0: f64) -> Self {
        assert!(dt > 0.0, "grid step must be positive");
        let next_k = (s0 / dt).floor() as u64 + 1;
        Self {
            grid: stream_rng(seed, StreamKind::Brownian, 0),
            bridge: stream_rng(seed, StreamKind::Bridge, 0),
            dt,
            next_k,
            cur: (s0, 0.0),
            known: VecDeque::new(),
        }
    }

    pub fn time(&self) -> f64 {
        self.cur.0
    }

    pub fn value(&self) -> f64 {
        self.cur.1
    }

    /// Earliest already-determined time after the current one.
    pub fn next_known(&mut self) -> f64 {
        self.ensure_known();
        self.known[0].0
    }

    /// `W(s)` for `s > time()`, without moving forward. Values already
    /// determined are reused; new ones are bridged between their neighbours.
    pub fn value_at(&mut self, s: f64) -> f64 {
        debug_assert!(s > self.cur.0);
        self.ensure_known();
        while self.known.back().expect("nonempty").0 < s {
            self.extend_grid();
        }
        let idx = self.known.partition_point(|&(t, _)| t < s);
        let (s1, w1) = self.known[idx];
        if s1 == s {
            return w1;
        }
        let (s0, w0) = if idx == 0 { self.cur } else { self.known[idx - 1] };
        let span = s1 - s0;
        let a = (s - s0) / span;
        let sd = ((s - s0) * (s1 - s) / span).max(0.0).sqrt();
        let z: f64 = StandardNormal.sample(&mut self.bridge);
        let w = w0 + a * (w1 - w0) + sd * z;
        self.known.insert(idx, (s, w));
        w
    }

    /// Moves the current time to `s`, which must be a known point.
    pub fn commit(&mut self, s: f64) {
        while let Some(&(t, w)) = self.known.front() {
            if t > s {
                break;
            }
            self.cur = (t, w);
            self.known.pop_front();
        }
        debug_assert_eq!(self.cur.0, s);
    }

    fn ensure_known(&mut self) {
        if self.known.is_empty() {
            self.extend_grid();
        }
    }

    /// Appends the next grid point. The last known point is always a grid
    /// point or the start, so the increment spans exactly to the new point.
    fn extend_grid(&mut self) {
        let (s0, w0) = self.known.back().copied().unwrap_or(self.cur);
        let s = self.next_k as f64 * self.dt;
        let z: f64 = StandardNormal.sample(&mut self.grid);
        self.next_k += 1;
        self.known.push_back((s, w0 + (s - s0).sqrt() * z));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_values_do_not_depend_on_queries() {
        let mut a = BrownianNoise::new(7, 0.01, 0.0);
        let mut b = BrownianNoise::new(7, 0.01, 0.0);
        let mut grid_a = Vec::new();
        for _ in 0..50 {
            let s = a.next_known();
            grid_a.push(a.value_at(s));
            a.commit(s);
        }
        let mut grid_b = Vec::new();
        for k in 0..50 {
            let g = b.next_known();
            let mid = b.time() + 0.3 * (g - b.time());
            b.value_at(mid);
            b.commit(mid);
            if k % 3 == 0 {
                let mid2 = b.time() + 0.5 * (g - b.time());
                b.value_at(mid2);
                b.commit(mid2);
            }
            let s = b.next_known();
            assert_eq!(s, g);
            grid_b.push(b.value_at(s));
            b.commit(s);
        }
        assert_eq!(grid_a, grid_b);
    }

    #[test]
    fn increments_have_unit_variance_rate() {
        let mut n = BrownianNoise::new(11, 0.1, 0.0);
        let mut sum2 = 0.0;
        let k = 20_000;
        let mut prev = 0.0;
        for _ in 0..k {
            let g = n.next_known();
            let mid = n.time() + 0.25 * (g - n.time());
            let w = n.value_at(mid);
            sum2 += (w - prev) * (w - prev);
            n.commit(mid);
            let w2 = n.value_at(g);
            sum2 += (w2 - w) * (w2 - w);
            n.commit(g);
            prev = w2;
        }
        let rate = sum2 / (k as f64 * 0.1);
        assert!((rate - 1.0).abs() < 0.03, "{rate}");
    }
}
