//! Long-range site percolation on `Z^d`.
//!
//! An underlying i.i.d. field `Q` marks each site open with probability
//! `q = (1-p)^{1/m^d}`. A site `γ` belongs to the drawn set `R` iff every
//! site of the box `γ + F_m`, `F_m = {0,…,m-1}^d`, is `Q`-open, so that
//! `P(γ ∉ R) = p` exactly.
//!
//! `Q` is never stored. The state of a site is a hash of the seed and its
//! coordinates: `h₀ = mix(seed ⊕ SALT)`, `h_{i+1} = mix(h_i ⊕ x_i)`, mapped to
//! `[0, 1)` by its top 53 bits and compared with `q`. Hashing coordinate by
//! coordinate lets box scans reuse prefixes.

mod irs;

pub use irs::{conjugate_site_set, first_axis_pair, sample_site_set, IrsError, IrsSpec};

use std::collections::HashMap;
use std::fmt;
use std::sync::Mutex;

use rayon::prelude::*;

use crate::group::Site;
use crate::numeric::{derive_seed, mix64, unit_interval};

const SALT: u64 = 0x005e_ed0f_9e4c_01a7;

/// Entries kept by the `r_open` cache before it is cleared.
const MEMO_CAPACITY: usize = 1 << 16;

/// Largest box, in sites, that [`PercolationSample::region_status`] scans
/// in one pass.
const REGION_SCAN_LIMIT: u64 = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PercolationParams {
    p: f64,
    m: u32,
    dim: usize,
}

impl PercolationParams {
    pub fn new(p: f64, m: u32, dim: usize) -> Result<Self, String> {
        if !(p > 0.0 && p < 1.0) {
            return Err(format!("percolation needs 0 < p < 1, got {p}"));
        }
        if m == 0 || dim == 0 {
            return Err(format!("percolation needs m ≥ 1 and d ≥ 1, got m={m}, d={dim}"));
        }
        let params = PercolationParams { p, m, dim };
        if !(params.q() > 0.0 && params.q() < 1.0) {
            return Err(format!("q underflows for p={p}, m={m}, d={dim}"));
        }
        Ok(params)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `|F_m| = m^d`.
    pub fn box_volume(&self) -> u64 {
        (self.m as u64).pow(self.dim as u32)
    }

    /// Open probability of the underlying field, `(1-p)^{1/m^d}`.
    pub fn q(&self) -> f64 {
        (1.0 - self.p).powf(1.0 / self.box_volume() as f64)
    }
}

/// Whether a window lies entirely inside `R`, entirely outside, or neither.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegionStatus {
    Open,
    Closed,
    Mixed,
}

/// One draw `R ~ λ_{p,m}`, answered lazily.
pub struct PercolationSample {
    params: PercolationParams,
    seed: u64,
    q: f64,
    memo: Mutex<HashMap<Site, bool>>,
}

impl fmt::Debug for PercolationSample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PercolationSample")
            .field("params", &self.params)
            .field("seed", &self.seed)
            .finish()
    }
}

impl PercolationSample {
    pub fn new(params: PercolationParams, seed: u64) -> Self {
        PercolationSample {
            params,
            seed,
            q: params.q(),
            memo: Mutex::new(HashMap::new()),
        }
    }

    pub fn params(&self) -> &PercolationParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn root(&self) -> u64 {
        mix64(self.seed ^ SALT)
    }

    fn open_hash(&self, h: u64) -> bool {
        unit_interval(h) < self.q
    }

    /// State of `site` in the underlying i.i.d. field.
    pub fn q_underlying(&self, site: &[i64]) -> bool {
        let h = site
            .iter()
            .fold(self.root(), |h, &x| mix64(h ^ x as u64));
        self.open_hash(h)
    }

    /// Calls `visit` on every `Q`-closed site of the box `lo + [0, extent)`,
    /// stopping early when it returns `false`.
    fn scan_closed(&self, lo: &[i64], extent: &[i64], visit: &mut impl FnMut(&[i64]) -> bool) {
        let mut cur: Site = lo.iter().copied().collect();
        self.scan_axis(0, self.root(), lo, extent, &mut cur, visit);
    }

    fn scan_axis(
        &self,
        axis: usize,
        prefix: u64,
        lo: &[i64],
        extent: &[i64],
        cur: &mut Site,
        visit: &mut impl FnMut(&[i64]) -> bool,
    ) -> bool {
        let last = axis + 1 == lo.len();
        for k in 0..extent[axis] {
            let x = lo[axis] + k;
            cur[axis] = x;
            let h = mix64(prefix ^ x as u64);
            if last {
                if !self.open_hash(h) && !visit(cur) {
                    return false;
                }
            } else if !self.scan_axis(axis + 1, h, lo, extent, cur, visit) {
                return false;
            }
        }
        true
    }

    fn box_open(&self, site: &[i64]) -> bool {
        let extent = vec![self.params.m as i64; site.len()];
        let mut open = true;
        self.scan_closed(site, &extent, &mut |_| {
            open = false;
            false
        });
        open
    }

    /// `site ∈ R`: every site of `site + F_m` is `Q`-open. Answers are cached.
    pub fn r_open(&self, site: &[i64]) -> bool {
        if let Some(&v) = self.memo.lock().expect("memo lock").get(site) {
            return v;
        }
        let v = self.box_open(site);
        let mut memo = self.memo.lock().expect("memo lock");
        if memo.len() >= MEMO_CAPACITY {
            memo.clear();
        }
        memo.insert(site.iter().copied().collect(), v);
        v
    }

    /// Number of underlying sites a window query inspects.
    pub fn window_cost(&self, window: &[Site]) -> u64 {
        match self.window_box(window) {
            Some((_, extent)) => extent.iter().map(|&e| e as u64).product(),
            None => 0,
        }
    }

    fn window_box(&self, window: &[Site]) -> Option<(Vec<i64>, Vec<i64>)> {
        let first = window.first()?;
        let m = self.params.m as i64;
        let mut lo: Vec<i64> = first.to_vec();
        let mut hi = lo.clone();
        for s in window {
            for i in 0..lo.len() {
                lo[i] = lo[i].min(s[i]);
                hi[i] = hi[i].max(s[i]);
            }
        }
        let extent = lo.iter().zip(&hi).map(|(l, h)| h - l + m).collect();
        Some((lo, extent))
    }

    /// `R`-membership of every window site. Small windows are answered by a
    /// single scan of their bounding box.
    pub fn open_mask(&self, window: &[Site]) -> Vec<bool> {
        let Some((lo, extent)) = self.window_box(window) else {
            return Vec::new();
        };
        let volume = extent
            .iter()
            .try_fold(1u64, |acc, &e| acc.checked_mul(e as u64));
        let m = self.params.m as i64;
        match volume {
            Some(v) if v <= REGION_SCAN_LIMIT => {
                let mut closed = Vec::new();
                self.scan_closed(&lo, &extent, &mut |s| {
                    closed.push(Site::from_slice(s));
                    true
                });
                window
                    .iter()
                    .map(|w| {
                        !closed
                            .iter()
                            .any(|c| c.iter().zip(w).all(|(c, w)| *c >= *w && *c < *w + m))
                    })
                    .collect()
            }
            _ => window.iter().map(|w| self.r_open(w)).collect(),
        }
    }

    /// Status of a finite window. The empty window counts as open.
    pub fn region_status(&self, window: &[Site]) -> RegionStatus {
        let open = self.open_mask(window);
        match (open.iter().all(|&o| o), open.iter().any(|&o| o)) {
            (true, _) => RegionStatus::Open,
            (false, false) => RegionStatus::Closed,
            (false, true) => RegionStatus::Mixed,
        }
    }
}

/// Frequency of a condition over independent samples with derived seeds,
/// together with its binomial standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frequency {
    pub hits: u64,
    pub trials: u64,
}

impl Frequency {
    pub fn value(&self) -> f64 {
        self.hits as f64 / self.trials as f64
    }

    /// `√(p(1-p)/N)` evaluated at the given reference probability.
    pub fn binomial_se(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

fn count_parallel(trials: u64, seed: u64, hit: impl Fn(u64) -> bool + Sync) -> Frequency {
    let hits = (0..trials)
        .into_par_iter()
        .map(|i| hit(derive_seed(seed, i)) as u64)
        .sum();
    Frequency { hits, trials }
}

/// Fraction of `Q`-open sites among `sites` consecutive sites along the
/// first axis of one sample.
pub fn underlying_open_frequency(params: PercolationParams, sites: u64, seed: u64) -> Frequency {
    let sample = PercolationSample::new(params, seed);
    let hits = (0..sites)
        .into_par_iter()
        .map(|i| {
            let mut s = Site::from_elem(0, params.dim());
            s[0] = i as i64;
            sample.q_underlying(&s) as u64
        })
        .sum();
    Frequency { hits, trials: sites }
}

/// Fraction of independent samples in which the origin is closed in `R`.
pub fn closed_frequency(params: PercolationParams, samples: u64, seed: u64) -> Frequency {
    let origin = Site::from_elem(0, params.dim());
    count_parallel(samples, seed, |s| {
        !PercolationSample::new(params, s).box_open(&origin)
    })
}

/// Fraction of independent samples in which `window` is mixed.
pub fn mixed_frequency(
    params: PercolationParams,
    window: &[Site],
    samples: u64,
    seed: u64,
) -> Frequency {
    count_parallel(samples, seed, |s| {
        PercolationSample::new(params, s).region_status(window) == RegionStatus::Mixed
    })
}
