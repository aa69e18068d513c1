//! The induced Markov chain on right cosets `K_S \ G`.
//!
//! `K_S` is the subgroup of lamp configurations supported on `S` with the
//! walker at the origin. Since `(f_k, 0)·(f, γ) = (f_k + f, γ)`, the right
//! coset `K_S g` is determined by `g` with every lamp inside `S` erased; that
//! erased element is the canonical representative. For free groups the
//! subgroup is `φ⁻¹(K_S)` and cosets are represented through `φ`.

use std::fmt;
use std::sync::Arc;

use crate::group::{
    add_sites, l1_norm, sub_sites, FreeGroup, GroupContext, GroupElement, GroupError, Lamplighter,
    LamplighterElement, Site,
};
use crate::measure::{Budget, FiniteMeasure, Homomorphism, MeasureError};
use crate::numeric::compensated_sum;
use crate::percolation::PercolationSample;

/// A subset of the base lattice `Z^d`.
#[derive(Clone, Debug, PartialEq)]
pub enum SiteSet {
    Finite { dim: usize, sites: Vec<Site> },
    Cofinite { dim: usize, complement: Vec<Site> },
    Lazy(LazySiteSet),
}

/// An infinite, co-infinite site set answered on demand, translated by
/// `offset`: `s ∈ set ⇔ s - offset ∈ oracle`.
#[derive(Clone, Debug, PartialEq)]
pub struct LazySiteSet {
    dim: usize,
    offset: Site,
    oracle: SiteOracle,
}

#[derive(Clone, Debug)]
pub enum SiteOracle {
    /// Sites whose coordinate sum has the given parity.
    Parity { odd: bool },
    /// The open set `R` of a long-range percolation sample.
    Percolation(Arc<PercolationSample>),
}

impl PartialEq for SiteOracle {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (SiteOracle::Parity { odd: a }, SiteOracle::Parity { odd: b }) => a == b,
            (SiteOracle::Percolation(a), SiteOracle::Percolation(b)) => {
                a.params() == b.params() && a.seed() == b.seed()
            }
            _ => false,
        }
    }
}

fn sorted(mut sites: Vec<Site>) -> Vec<Site> {
    sites.sort();
    sites.dedup();
    sites
}

impl SiteSet {
    pub fn finite(dim: usize, sites: impl IntoIterator<Item = Site>) -> Self {
        SiteSet::Finite {
            dim,
            sites: sorted(sites.into_iter().collect()),
        }
    }

    pub fn cofinite(dim: usize, complement: impl IntoIterator<Item = Site>) -> Self {
        SiteSet::Cofinite {
            dim,
            complement: sorted(complement.into_iter().collect()),
        }
    }

    pub fn empty(dim: usize) -> Self {
        SiteSet::finite(dim, [])
    }

    /// All of `Z^d`.
    pub fn everything(dim: usize) -> Self {
        SiteSet::cofinite(dim, [])
    }

    pub fn origin(dim: usize) -> Self {
        SiteSet::finite(dim, [Site::from_elem(0, dim)])
    }

    /// The closed `ℓ¹` ball of the given radius around the origin.
    pub fn ball(dim: usize, radius: u64) -> Self {
        SiteSet::finite(dim, ball_sites(dim, radius))
    }

    /// Even (`odd = false`) or odd coordinate-sum sites.
    pub fn parity(dim: usize, odd: bool) -> Self {
        SiteSet::Lazy(LazySiteSet {
            dim,
            offset: Site::from_elem(0, dim),
            oracle: SiteOracle::Parity { odd },
        })
    }

    pub fn percolation(sample: Arc<PercolationSample>) -> Self {
        let dim = sample.params().dim();
        SiteSet::Lazy(LazySiteSet {
            dim,
            offset: Site::from_elem(0, dim),
            oracle: SiteOracle::Percolation(sample),
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            SiteSet::Finite { dim, .. } | SiteSet::Cofinite { dim, .. } => *dim,
            SiteSet::Lazy(l) => l.dim,
        }
    }

    pub fn contains(&self, s: &[i64]) -> bool {
        match self {
            SiteSet::Finite { sites, .. } => sites.binary_search_by(|x| x.as_slice().cmp(s)).is_ok(),
            SiteSet::Cofinite { complement, .. } => complement
                .binary_search_by(|x| x.as_slice().cmp(s))
                .is_err(),
            SiteSet::Lazy(l) => {
                let local: Site = s.iter().zip(&l.offset).map(|(x, o)| x - o).collect();
                match &l.oracle {
                    SiteOracle::Parity { odd } => (local.iter().sum::<i64>().rem_euclid(2) == 1) == *odd,
                    SiteOracle::Percolation(sample) => sample.r_open(&local),
                }
            }
        }
    }

    /// The translate `S + v`.
    pub fn shifted(&self, v: &[i64]) -> SiteSet {
        match self {
            SiteSet::Finite { dim, sites } => {
                SiteSet::finite(*dim, sites.iter().map(|s| add_sites(s, v)))
            }
            SiteSet::Cofinite { dim, complement } => {
                SiteSet::cofinite(*dim, complement.iter().map(|s| add_sites(s, v)))
            }
            SiteSet::Lazy(LazySiteSet {
                dim,
                oracle: SiteOracle::Parity { odd },
                ..
            }) => SiteSet::parity(*dim, *odd ^ (v.iter().sum::<i64>().rem_euclid(2) == 1)),
            SiteSet::Lazy(l) => SiteSet::Lazy(LazySiteSet {
                dim: l.dim,
                offset: add_sites(&l.offset, v),
                oracle: l.oracle.clone(),
            }),
        }
    }

    /// `S ∩ window` as an explicit finite set. Canonicalizing an element
    /// whose lit sites all lie in `window` gives the same class for both.
    pub fn restricted(&self, window: &[Site]) -> SiteSet {
        let keep: Vec<bool> = match self {
            SiteSet::Lazy(LazySiteSet {
                offset,
                oracle: SiteOracle::Percolation(sample),
                ..
            }) => {
                let local: Vec<Site> = window.iter().map(|s| sub_sites(s, offset)).collect();
                sample.open_mask(&local)
            }
            _ => window.iter().map(|s| self.contains(s)).collect(),
        };
        SiteSet::finite(
            self.dim(),
            window.iter().zip(keep).filter(|(_, k)| *k).map(|(s, _)| s.clone()),
        )
    }

    /// Underlying-field sites inspected by [`SiteSet::restricted`].
    pub fn restriction_cost(&self, window: &[Site]) -> u64 {
        match self {
            SiteSet::Lazy(LazySiteSet {
                offset,
                oracle: SiteOracle::Percolation(sample),
                ..
            }) => {
                let local: Vec<Site> = window.iter().map(|s| sub_sites(s, offset)).collect();
                sample.window_cost(&local)
            }
            _ => window.len() as u64,
        }
    }

    /// Subset test for explicit (finite/cofinite) sets; `None` when a lazy
    /// set is involved.
    pub fn is_subset_of(&self, other: &SiteSet) -> Option<bool> {
        use SiteSet::*;
        match (self, other) {
            (Finite { sites: a, .. }, _) if !matches!(other, Lazy(_)) => {
                Some(a.iter().all(|s| other.contains(s)))
            }
            (Cofinite { complement: a, .. }, Cofinite { complement: b, .. }) => {
                Some(b.iter().all(|s| a.binary_search(s).is_ok()))
            }
            (Cofinite { .. }, Finite { .. }) => Some(false),
            _ => None,
        }
    }
}

impl fmt::Display for SiteSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn list(f: &mut fmt::Formatter<'_>, sites: &[Site]) -> fmt::Result {
            for (i, s) in sites.iter().enumerate() {
                if i > 0 {
                    f.write_str(";")?;
                }
                let coords: Vec<String> = s.iter().map(|x| x.to_string()).collect();
                write!(f, "({})", coords.join(","))?;
            }
            Ok(())
        }
        match self {
            SiteSet::Finite { sites, .. } if sites.is_empty() => f.write_str("empty"),
            SiteSet::Cofinite { complement, .. } if complement.is_empty() => f.write_str("all"),
            SiteSet::Finite { sites, .. } => {
                f.write_str("finite:")?;
                list(f, sites)
            }
            SiteSet::Cofinite { complement, .. } => {
                f.write_str("cofinite:")?;
                list(f, complement)
            }
            SiteSet::Lazy(l) => {
                match &l.oracle {
                    SiteOracle::Parity { odd } => {
                        write!(f, "{}", if *odd { "odd" } else { "even" })?
                    }
                    SiteOracle::Percolation(s) => write!(
                        f,
                        "percolation(p={},m={},seed={})",
                        s.params().p(),
                        s.params().m(),
                        s.seed()
                    )?,
                }
                if l.offset.iter().any(|&x| x != 0) {
                    f.write_str("+")?;
                    list(f, std::slice::from_ref(&l.offset))?;
                }
                Ok(())
            }
        }
    }
}

/// Sites of the `ℓ¹` ball of radius `r` in `Z^dim`, sorted.
pub fn ball_sites(dim: usize, radius: u64) -> Vec<Site> {
    let r = radius as i64;
    let mut out = Vec::new();
    let mut cur = Site::from_elem(-r, dim);
    loop {
        if l1_norm(&cur) <= radius {
            out.push(cur.clone());
        }
        let mut axis = dim;
        loop {
            if axis == 0 {
                return out;
            }
            axis -= 1;
            if cur[axis] < r {
                cur[axis] += 1;
                for x in cur.iter_mut().skip(axis + 1) {
                    *x = -r;
                }
                break;
            }
        }
    }
}

/// A right coset `K_S g`, held through its canonical representative.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CosetClass {
    rep: LamplighterElement,
}

impl CosetClass {
    pub fn rep(&self) -> &LamplighterElement {
        &self.rep
    }

    pub fn into_element(self) -> GroupElement {
        GroupElement::Lamp(self.rep)
    }

    /// The coset `K_S` itself.
    pub fn identity(l: &Lamplighter) -> Self {
        CosetClass { rep: l.identity() }
    }
}

impl fmt::Display for CosetClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.rep.fmt(f)
    }
}

/// The lamplighter in which coset representatives for `ctx` live.
pub fn coset_context(ctx: &GroupContext) -> Result<GroupContext, GroupError> {
    Ok(GroupContext::Lamplighter(target_lamplighter(ctx)?))
}

fn target_lamplighter(ctx: &GroupContext) -> Result<Lamplighter, GroupError> {
    match ctx {
        GroupContext::Lamplighter(l) => Ok(l.clone()),
        GroupContext::Free(f) if f.rank() >= 4 => Ok(Lamplighter::z2_wr_z3()),
        GroupContext::Free(f) => Err(GroupError::RankTooSmall(f.rank())),
    }
}

/// The lamplighter image of `g`: itself, or `φ(g)` for a free word.
fn lamplighter_image(
    ctx: &GroupContext,
    target: &Lamplighter,
    g: &GroupElement,
) -> Result<LamplighterElement, GroupError> {
    match (ctx, g) {
        (GroupContext::Lamplighter(l), GroupElement::Lamp(e)) => {
            l.check(e)?;
            Ok(e.clone())
        }
        (GroupContext::Free(f), GroupElement::Free(w)) => phi(f, target, w),
        _ => Err(GroupError::ContextMismatch(format!("{g} is not in {ctx}"))),
    }
}

fn phi(f: &FreeGroup, target: &Lamplighter, w: &crate::group::FreeWord) -> Result<LamplighterElement, GroupError> {
    f.phi(target, w)
}

fn erase(rep: &LamplighterElement, sites: &SiteSet) -> CosetClass {
    CosetClass {
        rep: rep.retain_lamps(|s| !sites.contains(s)),
    }
}

fn check_dim(l: &Lamplighter, sites: &SiteSet) -> Result<(), GroupError> {
    if sites.dim() != l.dim() {
        return Err(GroupError::ContextMismatch(format!(
            "site set of dimension {} for a dimension-{} lamplighter",
            sites.dim(),
            l.dim()
        )));
    }
    Ok(())
}

/// Canonical representative of `K_S g`. Membership in `S` is only queried at
/// the lit sites of `g`.
pub fn canonicalize(
    ctx: &GroupContext,
    g: &GroupElement,
    sites: &SiteSet,
) -> Result<CosetClass, GroupError> {
    let target = target_lamplighter(ctx)?;
    check_dim(&target, sites)?;
    let image = lamplighter_image(ctx, &target, g)?;
    Ok(erase(&image, sites))
}

/// The exact law of `K_S Z_n` for the `μ` walk started at the identity.
pub fn coset_distribution(
    mu: &FiniteMeasure,
    n: usize,
    sites: &SiteSet,
    budget: Budget,
) -> Result<FiniteMeasure, MeasureError> {
    coset_law(&mu.power(n, budget)?, sites)
}

/// Pushes an already computed law of `Z_n` down to `K_S \ G`.
pub fn coset_law(law: &FiniteMeasure, sites: &SiteSet) -> Result<FiniteMeasure, MeasureError> {
    law.pushforward(&Homomorphism::Coset(sites.clone()))
}

/// One row of the coset chain: the law of `K_S (rep(from)·X)` with `X ~ μ`.
pub fn transition_row(
    sites: &SiteSet,
    from: &CosetClass,
    mu: &FiniteMeasure,
) -> Result<FiniteMeasure, MeasureError> {
    let target = target_lamplighter(mu.ctx())?;
    check_dim(&target, sites)?;
    target.check(&from.rep)?;
    mu.map_atoms(GroupContext::Lamplighter(target.clone()), |h| {
        let step = lamplighter_image(mu.ctx(), &target, h)?;
        let next = target.mul(&from.rep, &step)?;
        Ok(erase(&next, sites).into_element())
    })
}

/// `P_{K_S}(from, to) = Σ_h μ(h)·[K_S rep(from) h = to]`.
pub fn transition_probability(
    sites: &SiteSet,
    from: &CosetClass,
    to: &CosetClass,
    mu: &FiniteMeasure,
) -> Result<f64, MeasureError> {
    let row = transition_row(sites, from, mu)?;
    Ok(row.mass(&GroupElement::Lamp(to.rep.clone())))
}

/// Every site lit by some atom of `law`, after mapping into the coset
/// lamplighter. Coset classes of `law` only depend on `S` inside this window.
pub fn lamp_window(law: &FiniteMeasure) -> Result<Vec<Site>, GroupError> {
    let target = target_lamplighter(law.ctx())?;
    let mut sites = Vec::new();
    for (g, _) in law.atoms() {
        sites.extend(lamplighter_image(law.ctx(), &target, g)?.support().cloned());
    }
    Ok(sorted(sites))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionRow {
    pub atom: GroupElement,
    pub base: Site,
    /// `P_{K_S}(K_S, K_S g)` for the atom `g`.
    pub transition: f64,
    /// `μ̄(ḡ)`.
    pub projected: f64,
    pub deviation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionReport {
    pub rows: Vec<ProjectionRow>,
    pub max_deviation: f64,
}

/// Compares `P_{K_S}(K_S, K_S g)` with `μ̄(ḡ)` for every atom `g` of `μ`.
/// The two agree exactly once `S` contains every lamp site used by `supp μ`.
pub fn stabilized_projection_check(
    sites: &SiteSet,
    mu: &FiniteMeasure,
) -> Result<ProjectionReport, MeasureError> {
    let l = mu.ctx().as_lamplighter()?.clone();
    check_dim(&l, sites)?;
    let row = transition_row(sites, &CosetClass::identity(&l), mu)?;
    let projected = mu.pushforward(&Homomorphism::Projection)?;
    let mut rows = Vec::with_capacity(mu.len());
    for (g, _) in mu.atoms() {
        let e = g.as_lamp().expect("lamplighter measure");
        let coset = erase(e, sites);
        let transition = row.mass(&coset.into_element());
        let base = e.pos().clone();
        let proj = projected.mass(&LamplighterElement::base(base.clone()).into());
        rows.push(ProjectionRow {
            atom: g.clone(),
            base,
            transition,
            projected: proj,
            deviation: (transition - proj).abs(),
        });
    }
    let max_deviation = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    Ok(ProjectionReport { rows, max_deviation })
}

/// `Σ_g μⁿ(g)·(−log Pⁿ(K_S, K_S g))`, the upper bound on `H(K_S Z_n)` used
/// in the proof that coset entropies approach the base entropy.
pub fn coset_entropy_upper_bound(
    law: &FiniteMeasure,
    coset_law: &FiniteMeasure,
    sites: &SiteSet,
) -> Result<f64, MeasureError> {
    let terms = law
        .atoms()
        .iter()
        .map(|(g, p)| {
            let c = canonicalize(law.ctx(), g, sites)?;
            Ok(-p * coset_law.mass(&c.into_element()).ln())
        })
        .collect::<Result<Vec<_>, MeasureError>>()?;
    Ok(compensated_sum(terms))
}
