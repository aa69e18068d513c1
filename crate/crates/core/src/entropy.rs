//! Entropy series, random-walk and Bowen-space entropy estimates.
//!
//! All exact quantities are Shannon entropies in nats of exactly computed
//! finite laws. Monte Carlo estimates run independent tasks on seeds derived
//! from `(seed, task index)` and reduce them in task order, so results do not
//! depend on the number of threads.

use std::collections::HashMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::coset::{canonicalize, coset_law, lamp_window, SiteSet};
use crate::measure::{Budget, FiniteMeasure, MeasureError};
use crate::numeric::{derive_seed, mean_and_stderr};
use crate::percolation::{sample_site_set, IrsSpec};

/// Default cap on underlying percolation sites inspected per `K` sample.
pub const DEFAULT_SITE_QUERY_CAP: u64 = 50_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EntropyError {
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("a K sample needs {needed} site queries, over the cap of {cap}")]
    SiteQueryBudget { needed: u64, cap: u64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl From<crate::group::GroupError> for EntropyError {
    fn from(e: crate::group::GroupError) -> Self {
        EntropyError::Measure(e.into())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Exact,
    MonteCarlo,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Exact => "exact",
            Method::MonteCarlo => "mc",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesPoint {
    pub n: usize,
    pub value: f64,
    pub method: Method,
    pub stderr: f64,
}

/// `H_n` for `n = 1, 2, …`. `truncated` is set when the atom budget stopped
/// the series early.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct EntropySeries {
    pub points: Vec<SeriesPoint>,
    pub truncated: bool,
}

impl EntropySeries {
    /// An exact series from plain values `H_1, H_2, …`.
    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Self {
        EntropySeries {
            points: values
                .into_iter()
                .enumerate()
                .map(|(i, value)| SeriesPoint {
                    n: i + 1,
                    value,
                    method: Method::Exact,
                    stderr: 0.0,
                })
                .collect(),
            truncated: false,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }
}

/// Exact `H(K_S Z_n)`, or `H(μⁿ)` without `S`, for `n = 1..=n_max`.
pub fn entropy_series(
    mu: &FiniteMeasure,
    sites: Option<&SiteSet>,
    n_max: usize,
    budget: Budget,
) -> Result<EntropySeries, MeasureError> {
    let mut series = EntropySeries::default();
    let mut power = FiniteMeasure::dirac(mu.ctx().clone(), mu.ctx().identity())?;
    for n in 1..=n_max {
        power = match power.convolve(mu, budget) {
            Ok(p) => p,
            Err(MeasureError::BudgetExceeded { .. }) => {
                series.truncated = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let value = match sites {
            Some(s) => coset_law(&power, s)?.entropy(),
            None => power.entropy(),
        };
        series.points.push(SeriesPoint {
            n,
            value,
            method: Method::Exact,
            stderr: 0.0,
        });
    }
    Ok(series)
}

/// Finite-horizon surrogates for the entropy rate of a series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateEstimate {
    /// `min_n H_n / n`, an upper bound on the rate for subadditive series.
    pub inf_ratio: f64,
    /// The `n` attaining the minimum.
    pub argmin: usize,
    /// `H_N − H_{N−1}` at the last computed `N`, with `H_0 = 0`.
    pub last_increment: f64,
    pub n: usize,
}

pub fn rw_entropy_estimate(series: &EntropySeries) -> Option<RateEstimate> {
    let last = series.points.last()?;
    let (argmin, inf_ratio) = series
        .points
        .iter()
        .map(|p| (p.n, p.value / p.n as f64))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
    let prev = series
        .points
        .iter()
        .rev()
        .nth(1)
        .filter(|p| p.n + 1 == last.n)
        .map_or(0.0, |p| p.value);
    Some(RateEstimate {
        inf_ratio,
        argmin,
        last_increment: last.value - prev,
        n: last.n,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Estimator {
    /// Exact value, no sampling.
    Exact,
    /// Exact inner entropies averaged over sampled subgroups.
    BowenAverage,
    /// Plug-in entropy with the Miller–Madow correction.
    MillerMadow,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Exact => "exact",
            Estimator::BowenAverage => "bowen-average",
            Estimator::MillerMadow => "miller-madow",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropyEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
    pub replications: usize,
    pub estimator: Estimator,
    /// Whether `value` is in nats per step rather than nats.
    pub per_step: bool,
}

/// Exact `H(K_S Z_n)/n` for one site set, restricting lazy sets to the lamp
/// window of `law = μⁿ` first.
fn coset_entropy_rate(
    law: &FiniteMeasure,
    window: &[crate::group::Site],
    sites: &SiteSet,
    n: usize,
) -> Result<f64, MeasureError> {
    let restricted = sites.restricted(window);
    Ok(coset_law(law, &restricted)?.entropy() / n as f64)
}

/// `(1/n)·E_{K∼λ} H(K Z_n)` estimated from `k` sampled subgroups with exact
/// inner entropies. Point masses are evaluated once, with zero error.
pub fn bowen_entropy_estimate(
    spec: &IrsSpec,
    mu: &FiniteMeasure,
    n: usize,
    k: usize,
    seed: u64,
    budget: Budget,
    site_query_cap: u64,
) -> Result<EntropyEstimate, EntropyError> {
    if n == 0 || k == 0 {
        return Err(EntropyError::InvalidArgument("Bowen estimates need n ≥ 1 and k ≥ 1".into()));
    }
    let law = mu.power(n, budget)?;
    let window = lamp_window(&law)?;
    if let IrsSpec::PointMass(s) = spec {
        return Ok(EntropyEstimate {
            value: coset_entropy_rate(&law, &window, s, n)?,
            stderr: 0.0,
            n,
            replications: 1,
            estimator: Estimator::Exact,
            per_step: true,
        });
    }
    let values = (0..k)
        .into_par_iter()
        .map(|i| {
            let s = sample_site_set(spec, derive_seed(seed, i as u64));
            let needed = s.restriction_cost(&window);
            if needed > site_query_cap {
                return Err(EntropyError::SiteQueryBudget {
                    needed,
                    cap: site_query_cap,
                });
            }
            Ok(coset_entropy_rate(&law, &window, &s, n)?)
        })
        .collect::<Result<Vec<f64>, EntropyError>>()?;
    let (value, stderr) = mean_and_stderr(&values);
    Ok(EntropyEstimate {
        value,
        stderr,
        n,
        replications: k,
        estimator: Estimator::BowenAverage,
        per_step: true,
    })
}

/// `(1/n)·Σ_K λ(K)·H(K Z_n)` for a finitely supported law.
pub fn bowen_entropy_exact(
    spec: &IrsSpec,
    mu: &FiniteMeasure,
    n: usize,
    budget: Budget,
) -> Result<f64, EntropyError> {
    let atoms = spec
        .atoms()
        .ok_or_else(|| EntropyError::InvalidArgument(format!("{spec} has infinitely many atoms")))?;
    if n == 0 {
        return Err(EntropyError::InvalidArgument("n must be positive".into()));
    }
    let law = mu.power(n, budget)?;
    let window = lamp_window(&law)?;
    let mut total = 0.0;
    for (s, w) in atoms {
        total += w * coset_entropy_rate(&law, &window, &s, n)?;
    }
    Ok(total)
}

/// Result of [`mc_entropy`]. `caveat` is set when the observed support
/// came close to the sample size, where plug-in entropy is biased low.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEntropy {
    pub estimate: EntropyEstimate,
    pub max_support: usize,
    pub caveat: bool,
}

/// Fraction of the sample size above which the support caveat is raised.
const SUPPORT_CAVEAT_FRACTION: f64 = 0.1;

/// Miller–Madow estimate of `H(K_S Z_n)` (or `H(μⁿ)`) from `reps`
/// independent batches of `samples` walks each.
pub fn mc_entropy(
    mu: &FiniteMeasure,
    n: usize,
    sites: Option<&SiteSet>,
    samples: usize,
    reps: usize,
    seed: u64,
) -> Result<McEntropy, EntropyError> {
    if samples < 1000 || reps == 0 {
        return Err(EntropyError::InvalidArgument(
            "Monte Carlo entropy needs at least 1000 samples and one replication".into(),
        ));
    }
    let sampler = mu.sampler();
    let per_rep = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, r as u64));
            let mut counts: HashMap<crate::group::GroupElement, usize> = HashMap::new();
            for _ in 0..samples {
                let z = sampler.endpoint(n, &mut rng);
                let key = match sites {
                    Some(s) => canonicalize(mu.ctx(), &z, s)?.into_element(),
                    None => z,
                };
                *counts.entry(key).or_insert(0) += 1;
            }
            let mut freq: Vec<usize> = counts.into_values().collect();
            freq.sort_unstable();
            Ok((plug_in_miller_madow(&freq, samples), freq.len()))
        })
        .collect::<Result<Vec<(f64, usize)>, EntropyError>>()?;
    let values: Vec<f64> = per_rep.iter().map(|(h, _)| *h).collect();
    let max_support = per_rep.iter().map(|(_, k)| *k).max().unwrap_or(0);
    let (value, stderr) = mean_and_stderr(&values);
    Ok(McEntropy {
        estimate: EntropyEstimate {
            value,
            stderr,
            n,
            replications: reps,
            estimator: Estimator::MillerMadow,
            per_step: false,
        },
        max_support,
        caveat: max_support as f64 > SUPPORT_CAVEAT_FRACTION * samples as f64,
    })
}

/// Plug-in entropy of counts plus `(K − 1)/(2N)`.
fn plug_in_miller_madow(counts: &[usize], total: usize) -> f64 {
    let n = total as f64;
    let plug_in = crate::numeric::compensated_sum(counts.iter().map(|&c| {
        let p = c as f64 / n;
        -p * p.ln()
    }));
    plug_in + (counts.len() as f64 - 1.0) / (2.0 * n)
}

/// `p·H_full + (1−p)·H_base`: closed windows keep the full walk entropy and
/// open windows reduce to the projected walk.
pub fn mixture_prediction(p: f64, h_full: f64, h_base: f64) -> Result<f64, EntropyError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(EntropyError::InvalidArgument(format!("p = {p} is not a probability")));
    }
    if h_base < 0.0 || h_base > h_full {
        return Err(EntropyError::InvalidArgument(format!(
            "need 0 ≤ H_base ≤ H_full, got H_base = {h_base}, H_full = {h_full}"
        )));
    }
    Ok(p * h_full + (1.0 - p) * h_base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{GroupContext, Lamplighter};
    use crate::measure::Homomorphism;
    use crate::percolation::PercolationParams;
    use crate::presets;

    fn sws7() -> FiniteMeasure {
        presets::switch_walk_step(&Lamplighter::z2_wr_z3())
    }

    #[test]
    fn series_start() {
        let s = entropy_series(&sws7(), None, 2, Budget::default()).unwrap();
        assert!((s.points[0].value - 7f64.ln()).abs() < 1e-12);
        assert!((s.points[1].value - 3.274_332_474_1).abs() < 1e-9);
        assert!(!s.truncated);
        let s = entropy_series(&sws7(), Some(&SiteSet::everything(3)), 2, Budget::default()).unwrap();
        assert!((s.points[1].value - 3.104_582_144_2).abs() < 1e-9);
        assert!(entropy_series(&sws7(), None, 0, Budget::default()).unwrap().points.is_empty());
    }

    #[test]
    fn series_truncates_on_budget() {
        let s = entropy_series(&sws7(), None, 5, Budget::new(100)).unwrap();
        assert!(s.truncated);
        assert_eq!(s.points.len(), 2);
    }

    #[test]
    fn rate_surrogates() {
        let ctx = GroupContext::lamplighter(1, 2).unwrap();
        let g = ctx.generators()[1].1.clone();
        let point = FiniteMeasure::dirac(ctx, g).unwrap();
        let r = rw_entropy_estimate(&entropy_series(&point, None, 4, Budget::default()).unwrap()).unwrap();
        assert_eq!((r.inf_ratio, r.last_increment), (0.0, 0.0));
        let r = rw_entropy_estimate(&EntropySeries::from_values([0.5, 1.0, 1.5])).unwrap();
        assert!((r.inf_ratio - 0.5).abs() < 1e-15 && (r.last_increment - 0.5).abs() < 1e-15);
        let s = entropy_series(&sws7(), None, 4, Budget::default()).unwrap();
        let r = rw_entropy_estimate(&s).unwrap();
        assert!(r.inf_ratio <= 7f64.ln());
        assert!(s.points[1].value / 2.0 < s.points[0].value);
        assert!(rw_entropy_estimate(&EntropySeries::default()).is_none());
    }

    #[test]
    fn bowen_point_masses_are_exact() {
        let mu = sws7();
        let b = Budget::default();
        let full = mu.power(2, b).unwrap().entropy() / 2.0;
        let base = mu
            .pushforward(&Homomorphism::Projection)
            .unwrap()
            .power(2, b)
            .unwrap()
            .entropy()
            / 2.0;
        let e = bowen_entropy_estimate(&IrsSpec::PointMass(SiteSet::empty(3)), &mu, 2, 10, 1, b, u64::MAX).unwrap();
        assert_eq!((e.value, e.stderr), (full, 0.0));
        let e = bowen_entropy_estimate(&IrsSpec::PointMass(SiteSet::everything(3)), &mu, 2, 10, 1, b, u64::MAX).unwrap();
        assert!((e.value - base).abs() < 1e-12);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn bowen_even_odd_matches_the_exact_average() {
        let mu = sws7();
        let b = Budget::default();
        let spec = IrsSpec::EvenOdd { dim: 3 };
        let exact = bowen_entropy_exact(&spec, &mu, 2, b).unwrap();
        let even = coset_law(&mu.power(2, b).unwrap(), &SiteSet::parity(3, false)).unwrap().entropy();
        let odd = coset_law(&mu.power(2, b).unwrap(), &SiteSet::parity(3, true)).unwrap().entropy();
        assert!((exact - 0.25 * (even + odd)).abs() < 1e-12);
        let e = bowen_entropy_estimate(&spec, &mu, 2, 400, 7, b, u64::MAX).unwrap();
        assert!((e.value - exact).abs() <= 3.0 * e.stderr + 1e-12);
    }

    #[test]
    fn bowen_is_deterministic_and_sandwiched() {
        let mu = sws7();
        let b = Budget::default();
        let spec = IrsSpec::LongRange(PercolationParams::new(0.5, 2, 3).unwrap());
        let a = bowen_entropy_estimate(&spec, &mu, 2, 50, 3, b, u64::MAX).unwrap();
        let c = bowen_entropy_estimate(&spec, &mu, 2, 50, 3, b, u64::MAX).unwrap();
        assert_eq!(a.value.to_bits(), c.value.to_bits());
        let full = mu.power(2, b).unwrap().entropy() / 2.0;
        let base = entropy_series(&mu, Some(&SiteSet::everything(3)), 2, b).unwrap().points[1].value / 2.0;
        assert!(a.value >= base - 1e-12 && a.value <= full + 1e-12);
        assert!(matches!(
            bowen_entropy_estimate(&spec, &mu, 2, 5, 3, b, 10),
            Err(EntropyError::SiteQueryBudget { .. })
        ));
    }

    #[test]
    fn restriction_preserves_coset_laws() {
        let mu = sws7();
        let law = mu.power(3, Budget::default()).unwrap();
        let window = lamp_window(&law).unwrap();
        let params = PercolationParams::new(0.5, 2, 3).unwrap();
        for seed in 0..20 {
            let s = sample_site_set(&IrsSpec::LongRange(params), seed);
            assert_eq!(
                coset_law(&law, &s).unwrap(),
                coset_law(&law, &s.restricted(&window)).unwrap()
            );
        }
    }

    #[test]
    fn mc_entropy_checks() {
        let ctx = GroupContext::lamplighter(3, 2).unwrap();
        let g = ctx.generators()[0].1.clone();
        let point = FiniteMeasure::dirac(ctx, g).unwrap();
        let e = mc_entropy(&point, 3, None, 1000, 4, 1).unwrap();
        assert_eq!((e.estimate.value, e.estimate.stderr), (0.0, 0.0));
        let mu = sws7();
        let e = mc_entropy(&mu, 1, None, 20_000, 10, 2).unwrap();
        assert!((e.estimate.value - 7f64.ln()).abs() <= 3.0 * e.estimate.stderr);
        assert!(!e.caveat);
        assert!(mc_entropy(&mu, 1, None, 999, 2, 0).is_err());
    }

    #[test]
    fn mixture_prediction_cases() {
        assert_eq!(mixture_prediction(1.0, 3.0, 2.0).unwrap(), 3.0);
        assert_eq!(mixture_prediction(0.0, 3.0, 2.0).unwrap(), 2.0);
        let m = mixture_prediction(0.5, 3.274_332_474_1, 3.104_582_144_2).unwrap();
        assert!((m - 3.189_457_309_2).abs() < 1e-9);
        assert!(mixture_prediction(0.5, 2.0, 3.0).is_err());
        assert!(mixture_prediction(1.5, 3.0, 2.0).is_err());
    }
}
