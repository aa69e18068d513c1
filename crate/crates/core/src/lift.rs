//! Finite-index subgroups: hitting times, hitting measures, conjugated
//! measures and lifts of invariant random subgroups.

use std::collections::HashMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::coset::coset_law;
use crate::entropy::EntropyError;
use crate::group::{
    GroupContext, GroupElement, GroupError, Lamplighter, LengthResult, Site,
};
use crate::measure::{Budget, FiniteMeasure, MeasureError, WalkSampler};
use crate::numeric::{compensated_sum, derive_seed, mean_and_stderr};
use crate::percolation::{conjugate_site_set, IrsSpec};

/// Default number of steps after which a hitting walk is abandoned.
pub const DEFAULT_TAU_CAP: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LiftError {
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Entropy(#[from] EntropyError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Membership {
    Whole,
    EvenFirstCoord,
}

/// A subgroup `Γ` of known finite index with a right transversal whose
/// first element is the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteIndexSubgroup {
    ctx: GroupContext,
    membership: Membership,
    transversal: Vec<GroupElement>,
}

impl FiniteIndexSubgroup {
    /// `Γ = G`.
    pub fn whole(ctx: &GroupContext) -> Self {
        FiniteIndexSubgroup {
            ctx: ctx.clone(),
            membership: Membership::Whole,
            transversal: vec![ctx.identity()],
        }
    }

    /// `{(f, γ) : γ₁ even}`, of index 2 with transversal `{e, t₁}`.
    pub fn even_first_coord(l: &Lamplighter) -> Self {
        FiniteIndexSubgroup {
            ctx: GroupContext::Lamplighter(l.clone()),
            membership: Membership::EvenFirstCoord,
            transversal: vec![l.identity().into(), l.step(0, 1).into()],
        }
    }

    /// `whole` or `even-first-coord`.
    pub fn preset(name: &str, ctx: &GroupContext) -> Result<Self, String> {
        match (name, ctx) {
            ("whole", _) => Ok(Self::whole(ctx)),
            ("even-first-coord", GroupContext::Lamplighter(l)) => Ok(Self::even_first_coord(l)),
            _ => Err(format!("subgroup preset `{name}` is not available on {ctx}")),
        }
    }

    pub fn ctx(&self) -> &GroupContext {
        &self.ctx
    }

    pub fn index(&self) -> usize {
        self.transversal.len()
    }

    pub fn transversal(&self) -> &[GroupElement] {
        &self.transversal
    }

    /// Base positions of the transversal, which is all a conjugation of
    /// site sets depends on.
    pub fn transversal_shifts(&self) -> Result<Vec<Site>, GroupError> {
        self.transversal
            .iter()
            .map(|g| {
                g.as_lamp()
                    .map(|e| e.pos().clone())
                    .ok_or_else(|| GroupError::ContextMismatch("lifts need a lamplighter".into()))
            })
            .collect()
    }

    pub fn contains(&self, g: &GroupElement) -> bool {
        match self.membership {
            Membership::Whole => true,
            Membership::EvenFirstCoord => g
                .as_lamp()
                .is_some_and(|e| e.pos()[0].rem_euclid(2) == 0),
        }
    }
}

impl fmt::Display for FiniteIndexSubgroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self.membership {
            Membership::Whole => "whole",
            Membership::EvenFirstCoord => "even-first-coord",
        })
    }
}

/// Word length in the standard generators.
pub fn word_length(ctx: &GroupContext, g: &GroupElement) -> LengthResult {
    match (ctx, g) {
        (GroupContext::Lamplighter(l), GroupElement::Lamp(e)) => l.word_length(e),
        (_, GroupElement::Free(w)) => LengthResult {
            value: w.len() as u64,
            exact: true,
        },
        (GroupContext::Free(_), GroupElement::Lamp(_)) => unreachable!("context checked"),
    }
}

/// One first entry `Z_τ` into the subgroup.
#[derive(Clone, Debug, PartialEq)]
pub struct HittingSample {
    pub tau: usize,
    pub element: GroupElement,
    pub length: LengthResult,
}

#[derive(Clone, Copy, Debug, Error, PartialEq, Eq)]
#[error("the walk did not enter the subgroup within {cap} steps")]
pub struct CapExceeded {
    pub cap: usize,
}

/// Walks from the identity until the first `n ≥ 1` with `Z_n ∈ Γ`.
fn hit<R: rand::Rng>(
    sampler: &WalkSampler,
    gamma: &FiniteIndexSubgroup,
    rng: &mut R,
    cap: usize,
    mut on_step: impl FnMut(&GroupElement, &GroupElement),
) -> Result<(usize, GroupElement), CapExceeded> {
    let ctx = sampler.ctx();
    let mut z = ctx.identity();
    for tau in 1..=cap {
        let next = ctx.mul(&z, sampler.step(rng)).expect("sampler atoms belong to its context");
        on_step(&z, &next);
        z = next;
        if gamma.contains(&z) {
            return Ok((tau, z));
        }
    }
    Err(CapExceeded { cap })
}

pub fn hitting_sample(
    mu: &FiniteMeasure,
    gamma: &FiniteIndexSubgroup,
    seed: u64,
    cap: usize,
) -> Result<HittingSample, CapExceeded> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (tau, element) = hit(&mu.sampler(), gamma, &mut rng, cap, |_, _| {})?;
    let length = word_length(mu.ctx(), &element);
    Ok(HittingSample {
        tau,
        element,
        length,
    })
}

/// `C₁ = Σ μ(g)·|g|`.
pub fn first_moment(mu: &FiniteMeasure) -> f64 {
    compensated_sum(
        mu.atoms()
            .iter()
            .map(|(g, p)| p * word_length(mu.ctx(), g).value as f64),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct HittingReport {
    pub index: usize,
    pub samples: usize,
    pub mean_tau: f64,
    pub se_tau: f64,
    /// Mean and standard error of `|Z_τ|` over samples with exact lengths.
    pub mean_len: f64,
    pub se_len: f64,
    pub c1: f64,
    /// `mean_len ≤ index·C₁ + 3·se_len`.
    pub bound_ok: bool,
    pub capped_frac: f64,
    pub inexact_len_frac: f64,
    /// Mean and standard error of `|Z_{k+1}| − |Z_k|` over all steps taken
    /// before `τ` with exact lengths at both ends.
    pub mean_increment: f64,
    pub se_increment: f64,
    /// `−C₁ ≤ mean_increment ≤ C₁`.
    pub increment_ok: bool,
}

struct HitRecord {
    outcome: Result<HittingSample, CapExceeded>,
    increments: Vec<f64>,
}

fn run_hits(
    mu: &FiniteMeasure,
    gamma: &FiniteIndexSubgroup,
    samples: usize,
    seed: u64,
    cap: usize,
    track_increments: bool,
) -> Vec<HitRecord> {
    let sampler = mu.sampler();
    let ctx = mu.ctx();
    (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
            let mut increments = Vec::new();
            let outcome = hit(&sampler, gamma, &mut rng, cap, |from, to| {
                if track_increments {
                    let (a, b) = (word_length(ctx, from), word_length(ctx, to));
                    if a.exact && b.exact {
                        increments.push(b.value as f64 - a.value as f64);
                    }
                }
            })
            .map(|(tau, element)| HittingSample {
                length: word_length(ctx, &element),
                tau,
                element,
            });
            HitRecord {
                outcome,
                increments,
            }
        })
        .collect()
}

/// Hitting-time and first-moment statistics over `samples` seeded walks.
pub fn empirical_hitting_stats(
    mu: &FiniteMeasure,
    gamma: &FiniteIndexSubgroup,
    samples: usize,
    seed: u64,
    cap: usize,
) -> Result<HittingReport, LiftError> {
    if samples < 2 {
        return Err(LiftError::Invalid("hitting statistics need at least two samples".into()));
    }
    let records = run_hits(mu, gamma, samples, seed, cap, true);
    let hits: Vec<&HittingSample> = records.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
    let taus: Vec<f64> = hits.iter().map(|h| h.tau as f64).collect();
    let lens: Vec<f64> = hits
        .iter()
        .filter(|h| h.length.exact)
        .map(|h| h.length.value as f64)
        .collect();
    let increments: Vec<f64> = records.iter().flat_map(|r| r.increments.iter().copied()).collect();
    let (mean_tau, se_tau) = mean_and_stderr(&taus);
    let (mean_len, se_len) = mean_and_stderr(&lens);
    let (mean_increment, se_increment) = mean_and_stderr(&increments);
    let c1 = first_moment(mu);
    let index = gamma.index();
    Ok(HittingReport {
        index,
        samples,
        mean_tau,
        se_tau,
        mean_len,
        se_len,
        c1,
        bound_ok: mean_len <= index as f64 * c1 + 3.0 * se_len,
        capped_frac: (samples - hits.len()) as f64 / samples as f64,
        inexact_len_frac: (hits.len() - lens.len()) as f64 / samples as f64,
        mean_increment,
        se_increment,
        increment_ok: mean_increment.abs() <= c1,
    })
}

/// Empirical law of `Z_τ` over the walks that entered `Γ` before the cap.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaEstimate {
    pub theta: FiniteMeasure,
    pub samples: usize,
    pub capped: usize,
}

pub fn empirical_theta(
    mu: &FiniteMeasure,
    gamma: &FiniteIndexSubgroup,
    samples: usize,
    seed: u64,
    cap: usize,
) -> Result<ThetaEstimate, LiftError> {
    let records = run_hits(mu, gamma, samples, seed, cap, false);
    let mut counts: HashMap<GroupElement, usize> = HashMap::new();
    let mut hits = 0usize;
    for r in &records {
        if let Ok(h) = &r.outcome {
            *counts.entry(h.element.clone()).or_insert(0) += 1;
            hits += 1;
        }
    }
    if hits == 0 {
        return Err(LiftError::Invalid("no walk entered the subgroup".into()));
    }
    let theta = FiniteMeasure::new(
        mu.ctx().clone(),
        counts.into_iter().map(|(g, c)| (g, c as f64 / hits as f64)),
    )?;
    Ok(ThetaEstimate {
        theta,
        samples,
        capped: samples - hits,
    })
}

/// `ν_g(γ) = ν(gγg⁻¹)`: the atom `h` of `ν` moves to `g⁻¹hg`.
pub fn conjugated_measure(nu: &FiniteMeasure, g: &GroupElement) -> Result<FiniteMeasure, LiftError> {
    let ctx = nu.ctx();
    let g_inv = ctx.inv(g)?;
    Ok(nu.map_atoms(ctx.clone(), |h| {
        Ok(ctx.mul(&ctx.mul(&g_inv, h)?, g)?)
    })?)
}

/// The lift of `λ` along the transversal of `Γ`.
pub fn lift_irs(lambda: &IrsSpec, gamma: &FiniteIndexSubgroup) -> Result<IrsSpec, LiftError> {
    IrsSpec::lifted(lambda.clone(), gamma.transversal_shifts()?)
        .map_err(|e| LiftError::Invalid(e.to_string()))
}

/// One row of the conjugate exchange: `H(K^g Z_n)` against
/// `H(K Z_n^{g⁻¹})` for an atom `K` of `λ` and a representative `g`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExchangeRow {
    pub rep: GroupElement,
    pub sites: String,
    pub conjugated_subgroup: f64,
    pub conjugated_walk: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LiftReport {
    pub rows: Vec<ExchangeRow>,
    /// `E_{K∼η∗λ} H(K Z_n)`.
    pub lifted_average: f64,
    /// `(1/index)·Σ_g E_{K∼λ} H(K Z_n^{g⁻¹})`.
    pub decomposed_average: f64,
    pub max_exchange_deviation: f64,
    pub average_deviation: f64,
}

impl LiftReport {
    pub fn max_deviation(&self) -> f64 {
        self.max_exchange_deviation.max(self.average_deviation)
    }
}

/// Checks the exchange `H(K^g Z_n) = H(K Z_n^{g⁻¹})` for every atom `K` of
/// `λ` and every representative `g`, and the resulting decomposition of the
/// lifted average. Here `K^g = g⁻¹Kg`, so `K_S^g = K_{S+γ}`.
pub fn lifting_identity_check(
    lambda: &IrsSpec,
    mu: &FiniteMeasure,
    gamma: &FiniteIndexSubgroup,
    n: usize,
    budget: Budget,
) -> Result<LiftReport, LiftError> {
    let atoms = lambda
        .atoms()
        .ok_or_else(|| LiftError::Invalid(format!("{lambda} has infinitely many atoms")))?;
    let ctx = mu.ctx();
    let law = mu.power(n, budget)?;
    let mut rows = Vec::new();
    let mut decomposed = Vec::new();
    for g in gamma.transversal() {
        let walk = conjugated_measure(mu, &ctx.inv(g)?)?.power(n, budget)?;
        let mut per_rep = Vec::new();
        for (s, w) in &atoms {
            let conjugated_subgroup = coset_law(&law, &conjugate_site_set(s, g)?)?.entropy();
            let conjugated_walk = coset_law(&walk, s)?.entropy();
            per_rep.push(w * conjugated_walk);
            rows.push(ExchangeRow {
                rep: g.clone(),
                sites: s.to_string(),
                conjugated_subgroup,
                conjugated_walk,
            });
        }
        decomposed.push(compensated_sum(per_rep));
    }
    let decomposed_average = compensated_sum(decomposed) / gamma.index() as f64;
    let lifted = lift_irs(lambda, gamma)?
        .atoms()
        .expect("lifts of finite laws are finite");
    let lifted_terms = lifted
        .iter()
        .map(|(s, w)| Ok(w * coset_law(&law, s)?.entropy()))
        .collect::<Result<Vec<f64>, LiftError>>()?;
    let lifted_average = compensated_sum(lifted_terms);
    let max_exchange_deviation = rows
        .iter()
        .map(|r| (r.conjugated_subgroup - r.conjugated_walk).abs())
        .fold(0.0, f64::max);
    Ok(LiftReport {
        rows,
        lifted_average,
        decomposed_average,
        max_exchange_deviation,
        average_deviation: (lifted_average - decomposed_average).abs(),
    })
}

/// Soft comparison of entropy increments of the hitting-measure walk with
/// those of the original walk over `index` times as many steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AbramovReport {
    pub n: usize,
    pub index: usize,
    pub theta_increment: f64,
    pub theta_increment_se: f64,
    pub mu_increment: f64,
    pub ratio: f64,
    pub ratio_se: f64,
    pub capped: usize,
}

/// Batches used for the standard error of the θ-walk entropy.
const ABRAMOV_BATCHES: usize = 10;

pub fn abramov_ratio_check(
    mu: &FiniteMeasure,
    gamma: &FiniteIndexSubgroup,
    n: usize,
    samples: usize,
    seed: u64,
    cap: usize,
    budget: Budget,
) -> Result<AbramovReport, LiftError> {
    if n == 0 || samples < ABRAMOV_BATCHES * 1000 {
        return Err(LiftError::Invalid(format!(
            "the ratio check needs n ≥ 1 and at least {} samples",
            ABRAMOV_BATCHES * 1000
        )));
    }
    let index = gamma.index();
    let h = |k: usize| -> Result<f64, LiftError> {
        Ok(if k == 0 { 0.0 } else { mu.power(k, budget)?.entropy() })
    };
    let mu_increment = h(index * n)? - h(index * n - 1)?;
    let sampler = mu.sampler();
    let ctx = mu.ctx();
    let per_batch = samples / ABRAMOV_BATCHES;
    let batches = (0..ABRAMOV_BATCHES)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, b as u64));
            let mut last: HashMap<GroupElement, usize> = HashMap::new();
            let mut prev: HashMap<GroupElement, usize> = HashMap::new();
            let mut capped = 0;
            let mut kept = 0;
            'walk: for _ in 0..per_batch {
                let mut w = ctx.identity();
                let mut before = w.clone();
                for _ in 0..n {
                    before = w.clone();
                    match hit(&sampler, gamma, &mut rng, cap, |_, _| {}) {
                        Ok((_, step)) => w = ctx.mul(&w, &step).expect("same context"),
                        Err(_) => {
                            capped += 1;
                            continue 'walk;
                        }
                    }
                }
                kept += 1;
                *last.entry(w).or_insert(0) += 1;
                *prev.entry(before).or_insert(0) += 1;
            }
            let entropy = |m: HashMap<GroupElement, usize>| {
                let mut c: Vec<usize> = m.into_values().collect();
                c.sort_unstable();
                let total = kept as f64;
                compensated_sum(c.iter().map(|&c| {
                    let p = c as f64 / total;
                    -p * p.ln()
                })) + (c.len() as f64 - 1.0) / (2.0 * total)
            };
            let h_prev = if n == 1 { 0.0 } else { entropy(prev) };
            (entropy(last) - h_prev, capped)
        })
        .collect::<Vec<(f64, usize)>>();
    let increments: Vec<f64> = batches.iter().map(|(d, _)| *d).collect();
    let capped = batches.iter().map(|(_, c)| c).sum();
    let (theta_increment, theta_increment_se) = mean_and_stderr(&increments);
    Ok(AbramovReport {
        n,
        index,
        theta_increment,
        theta_increment_se,
        mu_increment,
        ratio: theta_increment / mu_increment,
        ratio_se: theta_increment_se / mu_increment.abs(),
        capped,
    })
}
