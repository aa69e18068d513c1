//! Finite-support probability measures on group elements.
//!
//! Atoms are kept sorted by canonical element order so that every reduction
//! (mass, entropy, pushforward) runs in a fixed order and is bit-reproducible
//! regardless of how many threads took part in building the measure.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::coset::{self, SiteSet};
use crate::group::{GroupContext, GroupElement, GroupError, Lamplighter, LamplighterElement};
use crate::numeric::{compensated_sum, format_hex_float, parse_hex_float, NeumaierSum};

/// Tolerance on the total mass of a measure.
pub const MASS_TOLERANCE: f64 = 1e-9;

pub const DEFAULT_ATOM_BUDGET: usize = 50_000_000;

/// Environment variable overriding the atom budget.
pub const BUDGET_ENV: &str = "ENTROPYFORGE_BUDGET";

/// Left atoms per convolution work unit. Fixed so that the merge order does
/// not depend on the thread count.
const CONVOLUTION_CHUNK: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error("support of {atoms} atoms exceeds the budget of {cap}")]
    BudgetExceeded { atoms: usize, cap: usize },
    #[error("invalid probability {0}")]
    InvalidProbability(f64),
    #[error("total mass {0} is not within 1e-9 of 1")]
    MassNotNormalized(f64),
    #[error("invalid mixture weights: {0}")]
    InvalidMixture(String),
    #[error("homomorphism does not apply: {0}")]
    Inapplicable(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Cap on the number of atoms any exact computation may produce.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Budget {
    pub max_atoms: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_atoms: DEFAULT_ATOM_BUDGET,
        }
    }
}

impl Budget {
    pub fn new(max_atoms: usize) -> Self {
        Budget { max_atoms }
    }

    /// The default budget, overridden by `ENTROPYFORGE_BUDGET` when set.
    pub fn from_env() -> Result<Self, String> {
        match std::env::var(BUDGET_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map(Budget::new)
                .map_err(|_| format!("{BUDGET_ENV}={v} is not a positive integer")),
            Err(_) => Ok(Budget::default()),
        }
    }

    fn check(&self, atoms: usize) -> Result<(), MeasureError> {
        if atoms > self.max_atoms {
            Err(MeasureError::BudgetExceeded {
                atoms,
                cap: self.max_atoms,
            })
        } else {
            Ok(())
        }
    }
}

/// A group homomorphism along which measures can be pushed forward.
#[derive(Clone, Debug)]
pub enum Homomorphism {
    /// `π(f, γ) = γ`. The image is kept inside the lamplighter as the base
    /// section `(∅, γ)`, which is also the coset representative for `S = Z^d`.
    Projection,
    /// The fixed map from a free group of rank ≥ 4 onto a lamplighter.
    Phi(Lamplighter),
    /// `g ↦ K_S g`, the coset canonicalizer of [`crate::coset`].
    Coset(SiteSet),
}

/// A probability measure with finite support.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMeasure {
    ctx: GroupContext,
    atoms: Vec<(GroupElement, f64)>,
}

impl FiniteMeasure {
    /// Validates, merges duplicate elements and sorts.
    pub fn new(
        ctx: GroupContext,
        atoms: impl IntoIterator<Item = (GroupElement, f64)>,
    ) -> Result<Self, MeasureError> {
        let mut merged: HashMap<GroupElement, f64> = HashMap::new();
        for (g, p) in atoms {
            ctx.check(&g)?;
            if !(p.is_finite() && p > 0.0) {
                return Err(MeasureError::InvalidProbability(p));
            }
            *merged.entry(g).or_insert(0.0) += p;
        }
        let m = Self::from_map(ctx, merged);
        let total = m.total_mass();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(MeasureError::MassNotNormalized(total));
        }
        Ok(m)
    }

    fn from_map(ctx: GroupContext, map: HashMap<GroupElement, f64>) -> Self {
        let mut atoms: Vec<_> = map.into_iter().collect();
        atoms.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        FiniteMeasure { ctx, atoms }
    }

    pub fn dirac(ctx: GroupContext, g: GroupElement) -> Result<Self, MeasureError> {
        Self::new(ctx, [(g, 1.0)])
    }

    /// Uniform measure on the given (distinct) elements.
    pub fn uniform(
        ctx: GroupContext,
        elements: impl IntoIterator<Item = GroupElement>,
    ) -> Result<Self, MeasureError> {
        let elements: Vec<_> = elements.into_iter().collect();
        let p = 1.0 / elements.len() as f64;
        Self::new(ctx, elements.into_iter().map(|g| (g, p)))
    }

    pub fn ctx(&self) -> &GroupContext {
        &self.ctx
    }

    /// Atoms in canonical element order.
    pub fn atoms(&self) -> &[(GroupElement, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mass(&self, g: &GroupElement) -> f64 {
        self.atoms
            .binary_search_by(|(x, _)| x.cmp(g))
            .map(|i| self.atoms[i].1)
            .unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        compensated_sum(self.atoms.iter().map(|(_, p)| *p))
    }

    /// Exact convolution `μ ∗ ν`: the mass of `g` is `Σ_{ab=g} μ(a)ν(b)`.
    pub fn convolve(&self, other: &FiniteMeasure, budget: Budget) -> Result<Self, MeasureError> {
        if self.ctx != other.ctx {
            return Err(GroupError::ContextMismatch(format!(
                "cannot convolve measures on {} and {}",
                self.ctx, other.ctx
            ))
            .into());
        }
        let partials: Vec<HashMap<GroupElement, f64>> = self
            .atoms
            .par_chunks(CONVOLUTION_CHUNK)
            .map(|chunk| {
                let mut acc: HashMap<GroupElement, f64> = HashMap::new();
                for (a, pa) in chunk {
                    for (b, pb) in &other.atoms {
                        let ab = self.ctx.mul(a, b)?;
                        *acc.entry(ab).or_insert(0.0) += pa * pb;
                    }
                    budget.check(acc.len())?;
                }
                Ok(acc)
            })
            .collect::<Result<_, MeasureError>>()?;
        let mut iter = partials.into_iter();
        let mut merged = iter.next().unwrap_or_default();
        for part in iter {
            for (g, p) in part {
                *merged.entry(g).or_insert(0.0) += p;
            }
            budget.check(merged.len())?;
        }
        Ok(Self::from_map(self.ctx.clone(), merged))
    }

    /// `μⁿ`, with `μ⁰ = δ_e`.
    pub fn power(&self, n: usize, budget: Budget) -> Result<Self, MeasureError> {
        let mut acc = Self::dirac(self.ctx.clone(), self.ctx.identity())?;
        for _ in 0..n {
            acc = acc.convolve(self, budget)?;
        }
        Ok(acc)
    }

    /// The image measure under `f`, landing in `target`. Masses of atoms
    /// with equal images are summed in canonical source order.
    pub fn map_atoms(
        &self,
        target: GroupContext,
        mut f: impl FnMut(&GroupElement) -> Result<GroupElement, MeasureError>,
    ) -> Result<Self, MeasureError> {
        let mut acc: HashMap<GroupElement, f64> = HashMap::with_capacity(self.atoms.len());
        for (g, p) in &self.atoms {
            let image = f(g)?;
            *acc.entry(image).or_insert(0.0) += p;
        }
        Ok(Self::from_map(target, acc))
    }

    pub fn pushforward(&self, hom: &Homomorphism) -> Result<Self, MeasureError> {
        match hom {
            Homomorphism::Projection => {
                let l = self
                    .ctx
                    .as_lamplighter()
                    .map_err(|_| MeasureError::Inapplicable("π needs a lamplighter context".into()))?
                    .clone();
                self.map_atoms(self.ctx.clone(), |g| {
                    let e = g.as_lamp().expect("checked at construction");
                    Ok(LamplighterElement::base(l.project_base(e)?).into())
                })
            }
            Homomorphism::Phi(target) => {
                let free = self
                    .ctx
                    .as_free()
                    .map_err(|_| MeasureError::Inapplicable("φ needs a free context".into()))?
                    .clone();
                self.map_atoms(GroupContext::Lamplighter(target.clone()), |g| {
                    let w = g.as_free().expect("checked at construction");
                    Ok(free.phi(target, w)?.into())
                })
            }
            Homomorphism::Coset(sites) => {
                let target = coset::coset_context(&self.ctx)?;
                self.map_atoms(target, |g| {
                    Ok(coset::canonicalize(&self.ctx, g, sites)?.into_element())
                })
            }
        }
    }

    /// `η = Σ α(n)·μⁿ`.
    pub fn support_transform(
        &self,
        alpha: &MixtureWeights,
        budget: Budget,
    ) -> Result<Self, MeasureError> {
        self.mixture_of_powers(alpha.weights(), budget)
    }

    /// `Σ w(n)·μⁿ` for arbitrary nonnegative weights, without the mean-one
    /// constraint of [`MixtureWeights`].
    pub fn mixture_of_powers(
        &self,
        weights: &[(usize, f64)],
        budget: Budget,
    ) -> Result<Self, MeasureError> {
        let max_n = weights.iter().map(|(n, _)| *n).max().unwrap_or(0);
        let mut acc: HashMap<GroupElement, f64> = HashMap::new();
        let mut power = Self::dirac(self.ctx.clone(), self.ctx.identity())?;
        for n in 0..=max_n {
            if n > 0 {
                power = power.convolve(self, budget)?;
            }
            for (_, w) in weights.iter().filter(|(k, _)| *k == n) {
                for (g, p) in &power.atoms {
                    *acc.entry(g.clone()).or_insert(0.0) += w * p;
                }
            }
            budget.check(acc.len())?;
        }
        acc.retain(|_, p| *p > 0.0);
        Ok(Self::from_map(self.ctx.clone(), acc))
    }

    /// Shannon entropy `-Σ p log p` in nats.
    pub fn entropy(&self) -> f64 {
        let mut acc = NeumaierSum::default();
        for (_, p) in &self.atoms {
            acc.add(-p * p.ln());
        }
        acc.value().max(0.0)
    }

    pub fn sampler(&self) -> WalkSampler {
        WalkSampler::new(self)
    }

    /// Line-oriented text: a `# <context>` header, then one
    /// `element<TAB>probability` line per atom. With `hex` the probabilities
    /// are hexadecimal float literals and read back bit-exactly.
    pub fn to_text(&self, hex: bool) -> String {
        let mut out = format!("# {}\n", self.ctx);
        for (g, p) in &self.atoms {
            if hex {
                let _ = writeln!(out, "{g}\t{}", format_hex_float(*p));
            } else {
                let _ = writeln!(out, "{g}\t{p:?}");
            }
        }
        out
    }

    pub fn from_text(ctx: GroupContext, text: &str) -> Result<Self, MeasureError> {
        let mut atoms = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if let Some(header) = line.strip_prefix('#') {
                if i == 0 && header.trim() != ctx.to_string() {
                    return Err(MeasureError::Parse {
                        line: 1,
                        reason: format!("measure is on {}, expected {ctx}", header.trim()),
                    });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let (el, p) = line.split_once('\t').ok_or_else(|| MeasureError::Parse {
                line: i + 1,
                reason: "expected element<TAB>probability".into(),
            })?;
            let g = ctx.parse_element(el).map_err(|e| MeasureError::Parse {
                line: i + 1,
                reason: e.to_string(),
            })?;
            let p = parse_hex_float(p).ok_or_else(|| MeasureError::Parse {
                line: i + 1,
                reason: format!("bad probability `{p}`"),
            })?;
            atoms.push((g, p));
        }
        Self::new(ctx, atoms)
    }
}

/// Weights `α` of the full-support transform `η = Σ α(n)μⁿ`.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureWeights {
    weights: Vec<(usize, f64)>,
}

impl Default for MixtureWeights {
    /// `α = ¼δ₀ + ½δ₁ + ¼δ₂`.
    fn default() -> Self {
        MixtureWeights {
            weights: vec![(0, 0.25), (1, 0.5), (2, 0.25)],
        }
    }
}

impl MixtureWeights {
    /// Requires positive weights summing to one, `α(1) > 0` and mean one.
    pub fn new(weights: Vec<(usize, f64)>) -> Result<Self, MeasureError> {
        let mut merged: std::collections::BTreeMap<usize, f64> = Default::default();
        for (n, w) in weights {
            if !(w.is_finite() && w > 0.0) {
                return Err(MeasureError::InvalidMixture(format!("weight {w} at n={n}")));
            }
            *merged.entry(n).or_insert(0.0) += w;
        }
        let weights: Vec<_> = merged.into_iter().collect();
        let total = compensated_sum(weights.iter().map(|(_, w)| *w));
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(MeasureError::InvalidMixture(format!("weights sum to {total}")));
        }
        if !weights.iter().any(|(n, _)| *n == 1) {
            return Err(MeasureError::InvalidMixture("α(1) must be positive".into()));
        }
        let mean = compensated_sum(weights.iter().map(|(n, w)| *n as f64 * w));
        if (mean - 1.0).abs() > MASS_TOLERANCE {
            return Err(MeasureError::InvalidMixture(format!("Σ n·α(n) = {mean}, expected 1")));
        }
        Ok(MixtureWeights { weights })
    }

    pub fn weights(&self) -> &[(usize, f64)] {
        &self.weights
    }

    /// Integer convolution `α ∗ α`.
    pub fn self_convolution(&self) -> Vec<(usize, f64)> {
        let mut out: std::collections::BTreeMap<usize, f64> = Default::default();
        for (n, a) in &self.weights {
            for (m, b) in &self.weights {
                *out.entry(n + m).or_insert(0.0) += a * b;
            }
        }
        out.into_iter().collect()
    }
}

/// Draws i.i.d. increments from a measure.
#[derive(Clone, Debug)]
pub struct WalkSampler {
    ctx: GroupContext,
    elements: Vec<GroupElement>,
    index: WeightedIndex<f64>,
}

impl WalkSampler {
    pub fn new(mu: &FiniteMeasure) -> Self {
        let index = WeightedIndex::new(mu.atoms.iter().map(|(_, p)| *p))
            .expect("a validated measure has positive weights");
        WalkSampler {
            ctx: mu.ctx.clone(),
            elements: mu.atoms.iter().map(|(g, _)| g.clone()).collect(),
            index,
        }
    }

    pub fn ctx(&self) -> &GroupContext {
        &self.ctx
    }

    pub fn step<R: Rng + ?Sized>(&self, rng: &mut R) -> &GroupElement {
        &self.elements[self.index.sample(rng)]
    }

    /// `Z_n` after `n` steps from the identity.
    pub fn endpoint<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> GroupElement {
        let mut z = self.ctx.identity();
        for _ in 0..n {
            z = self
                .ctx
                .mul(&z, self.step(rng))
                .expect("sampler atoms belong to its context");
        }
        z
    }

    /// The path `Z_1, …, Z_n`.
    pub fn path<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<GroupElement> {
        let mut z = self.ctx.identity();
        (0..n)
            .map(|_| {
                z = self
                    .ctx
                    .mul(&z, self.step(rng))
                    .expect("sampler atoms belong to its context");
                z.clone()
            })
            .collect()
    }
}

/// Deterministic walk path `Z_1..Z_n` for a given seed.
pub fn sample_walk(mu: &FiniteMeasure, n: usize, seed: u64) -> Vec<GroupElement> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    mu.sampler().path(n, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{FreeWord, Lamplighter};
    use crate::presets;

    fn sws7() -> FiniteMeasure {
        presets::switch_walk_step(&Lamplighter::z2_wr_z3())
    }

    #[test]
    fn construction_validates() {
        let ctx = GroupContext::lamplighter(1, 2).unwrap();
        let e = ctx.identity();
        assert!(matches!(
            FiniteMeasure::new(ctx.clone(), [(e.clone(), 0.5)]),
            Err(MeasureError::MassNotNormalized(_))
        ));
        assert!(matches!(
            FiniteMeasure::new(ctx.clone(), [(e.clone(), -1.0), (e.clone(), 2.0)]),
            Err(MeasureError::InvalidProbability(_))
        ));
        let merged = FiniteMeasure::new(ctx, [(e.clone(), 0.5), (e.clone(), 0.5)]).unwrap();
        assert_eq!(merged.len(), 1);
    }

    #[test]
    fn dirac_identity_is_neutral() {
        let mu = sws7();
        let delta = FiniteMeasure::dirac(mu.ctx().clone(), mu.ctx().identity()).unwrap();
        assert_eq!(delta.convolve(&mu, Budget::default()).unwrap(), mu);
        assert_eq!(mu.power(0, Budget::default()).unwrap(), delta);
        assert_eq!(mu.power(1, Budget::default()).unwrap(), mu);
    }

    #[test]
    fn free_square_of_a_symmetric_letter() {
        let ctx = GroupContext::free(1).unwrap();
        let mu = FiniteMeasure::uniform(
            ctx.clone(),
            [FreeWord::letter(1).into(), FreeWord::letter(-1).into()],
        )
        .unwrap();
        let sq = mu.convolve(&mu, Budget::default()).unwrap();
        assert_eq!(sq.len(), 3);
        assert_eq!(sq.mass(&FreeWord::empty().into()), 0.5);
        assert_eq!(sq.mass(&FreeWord::new(vec![1, 1]).unwrap().into()), 0.25);
        assert_eq!(sq.mass(&FreeWord::new(vec![-1, -1]).unwrap().into()), 0.25);
    }

    #[test]
    fn budget_is_enforced() {
        let mu = sws7();
        let err = mu.power(3, Budget::new(50)).unwrap_err();
        assert!(matches!(err, MeasureError::BudgetExceeded { cap: 50, .. }));
    }

    #[test]
    fn mismatched_contexts_do_not_convolve() {
        let mu = sws7();
        let d1 = presets::switch_walk_step(&Lamplighter::new(1, 2).unwrap());
        assert!(mu.convolve(&d1, Budget::default()).is_err());
        assert!(mu.pushforward(&Homomorphism::Phi(Lamplighter::z2_wr_z3())).is_err());
    }

    #[test]
    fn projection_of_the_switch_walk_is_uniform() {
        let mu = sws7();
        let proj = mu.pushforward(&Homomorphism::Projection).unwrap();
        assert_eq!(proj.len(), 7);
        for (g, p) in proj.atoms() {
            assert!(g.as_lamp().unwrap().lamps().is_empty());
            assert!((p - 1.0 / 7.0).abs() < 1e-15);
        }
        let g = mu.atoms()[0].0.clone();
        let delta = FiniteMeasure::dirac(mu.ctx().clone(), g.clone()).unwrap();
        let pd = delta.pushforward(&Homomorphism::Projection).unwrap();
        assert_eq!(pd.len(), 1);
    }

    #[test]
    fn entropy_examples() {
        let mu = sws7();
        assert!((mu.entropy() - 7f64.ln()).abs() < 1e-12);
        let delta = FiniteMeasure::dirac(mu.ctx().clone(), mu.ctx().identity()).unwrap();
        assert_eq!(delta.entropy(), 0.0);
    }

    #[test]
    fn mixture_weights_validation() {
        assert!(MixtureWeights::new(vec![(0, 0.25), (1, 0.5), (2, 0.25)]).is_ok());
        assert!(MixtureWeights::new(vec![(0, 0.5), (2, 0.5)]).is_err());
        assert!(MixtureWeights::new(vec![(1, 0.5), (2, 0.5)]).is_err());
        assert!(MixtureWeights::new(vec![(1, 1.0)]).is_ok());
        assert_eq!(
            MixtureWeights::default().self_convolution(),
            vec![(0, 0.0625), (1, 0.25), (2, 0.375), (3, 0.25), (4, 0.0625)]
        );
    }

    #[test]
    fn transform_with_unit_weight_is_identity() {
        let mu = sws7();
        let alpha = MixtureWeights::new(vec![(1, 1.0)]).unwrap();
        assert_eq!(mu.support_transform(&alpha, Budget::default()).unwrap(), mu);
    }

    #[test]
    fn transform_identity_mass() {
        let mu = sws7();
        let eta = mu
            .support_transform(&MixtureWeights::default(), Budget::default())
            .unwrap();
        let e = mu.ctx().identity();
        assert!((eta.mass(&e) - (0.25 + 0.25 * 7.0 / 49.0)).abs() < 1e-15);
        assert!((eta.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let mu = sws7().power(3, Budget::default()).unwrap();
        let back = FiniteMeasure::from_text(mu.ctx().clone(), &mu.to_text(true)).unwrap();
        assert_eq!(back, mu);
        let other = GroupContext::lamplighter(1, 2).unwrap();
        assert!(FiniteMeasure::from_text(other, &mu.to_text(true)).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let mu = sws7();
        assert!(sample_walk(&mu, 0, 1).is_empty());
        assert_eq!(sample_walk(&mu, 20, 99), sample_walk(&mu, 20, 99));
        assert_ne!(sample_walk(&mu, 20, 99), sample_walk(&mu, 20, 100));
    }

    #[test]
    fn one_step_frequencies_match_within_three_se() {
        let mu = sws7();
        let sampler = mu.sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 100_000;
        let mut counts: HashMap<GroupElement, usize> = HashMap::new();
        for _ in 0..n {
            *counts.entry(sampler.step(&mut rng).clone()).or_default() += 1;
        }
        for (g, p) in mu.atoms() {
            let freq = counts[g] as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((freq - p).abs() <= 3.0 * se, "{g}: {freq} vs {p}");
        }
    }
}
