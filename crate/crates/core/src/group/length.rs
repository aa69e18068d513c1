//! Word length in the lamplighter group for the generating set
//! `{a, a⁻¹, t_i^{±1}}`.
//!
//! Writing `g = (f, γ)` as a word means walking from the origin to `γ` while
//! standing at `-s` for every lit site `s` and spending `min(v, L - v)` lamp
//! moves there. The shortest word is therefore the cheapest `ℓ¹` path
//! `0 → (visit all of -supp f) → γ` plus the switch costs, which is a small
//! path-TSP solved exactly by Held–Karp when the support is small.

use super::{l1_distance, l1_norm, Lamplighter, LamplighterElement, Site};

/// Largest support handled by the exact subset DP.
pub const EXACT_LENGTH_MAX_SITES: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LengthResult {
    pub value: u64,
    /// False when the cheapest-insertion heuristic produced `value`.
    pub exact: bool,
}

impl Lamplighter {
    pub fn word_length(&self, g: &LamplighterElement) -> LengthResult {
        let l = self.modulus();
        let switches: u64 = g
            .lamps()
            .values()
            .map(|&v| u64::from(v.min(l - v)))
            .sum();
        let stops: Vec<Site> = g.support().map(|s| s.iter().map(|x| -x).collect()).collect();
        let origin = self.origin();
        let end = g.pos();
        if stops.is_empty() {
            return LengthResult {
                value: l1_norm(end),
                exact: true,
            };
        }
        if stops.len() <= EXACT_LENGTH_MAX_SITES {
            LengthResult {
                value: held_karp_path(&origin, &stops, end) + switches,
                exact: true,
            }
        } else {
            LengthResult {
                value: cheapest_insertion_path(&origin, &stops, end) + switches,
                exact: false,
            }
        }
    }
}

/// Minimum `ℓ¹` length of a path from `start` through every stop to `end`.
fn held_karp_path(start: &[i64], stops: &[Site], end: &[i64]) -> u64 {
    let k = stops.len();
    let full = (1usize << k) - 1;
    let dist: Vec<Vec<u64>> = stops
        .iter()
        .map(|a| stops.iter().map(|b| l1_distance(a, b)).collect())
        .collect();
    // best[mask * k + j]: shortest path from start covering `mask`, ending at stop j.
    let mut best = vec![u64::MAX; (full + 1) * k];
    for (j, s) in stops.iter().enumerate() {
        best[(1 << j) * k + j] = l1_distance(start, s);
    }
    for mask in 1..=full {
        for j in 0..k {
            let cur = best[mask * k + j];
            if cur == u64::MAX || mask & (1 << j) == 0 {
                continue;
            }
            for (next, d) in dist[j].iter().enumerate() {
                if mask & (1 << next) != 0 {
                    continue;
                }
                let slot = &mut best[(mask | (1 << next)) * k + next];
                *slot = (*slot).min(cur + d);
            }
        }
    }
    (0..k)
        .map(|j| best[full * k + j] + l1_distance(&stops[j], end))
        .min()
        .expect("at least one stop")
}

/// Repeatedly inserts the stop whose cheapest insertion is smallest.
fn cheapest_insertion_path(start: &[i64], stops: &[Site], end: &[i64]) -> u64 {
    let mut path: Vec<&[i64]> = vec![start, end];
    let mut remaining: Vec<&Site> = stops.iter().collect();
    while !remaining.is_empty() {
        let mut choice = (u64::MAX, 0, 0);
        for (r, s) in remaining.iter().enumerate() {
            for i in 0..path.len() - 1 {
                let extra = l1_distance(path[i], s) + l1_distance(s, path[i + 1])
                    - l1_distance(path[i], path[i + 1]);
                if extra < choice.0 {
                    choice = (extra, r, i + 1);
                }
            }
        }
        let s = remaining.swap_remove(choice.1);
        path.insert(choice.2, s);
    }
    path.windows(2).map(|w| l1_distance(w[0], w[1])).sum()
}
