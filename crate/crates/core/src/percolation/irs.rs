//! Invariant random subgroups of lamplighter groups, described through the
//! site sets `S` of the subgroups `K_S`.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use super::{PercolationParams, PercolationSample};
use crate::coset::SiteSet;
use crate::group::{site, unit, GroupElement, GroupError, Site};
use crate::numeric::{derive_seed, mix64, unit_interval};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IrsError {
    #[error("cannot parse IRS `{0}`")]
    Parse(String),
    #[error("invalid IRS: {0}")]
    Invalid(String),
    #[error(transparent)]
    Group(#[from] GroupError),
}

/// A law on site sets, hence on subgroups `K_S`.
#[derive(Clone, Debug, PartialEq)]
pub enum IrsSpec {
    PointMass(SiteSet),
    /// `½δ_{K_E} + ½δ_{K_O}` for the even and odd coordinate-sum sites.
    EvenOdd { dim: usize },
    /// The long-range percolation law `λ_{p,m}`.
    LongRange(PercolationParams),
    /// Conjugates of draws from `inner` by a uniformly chosen transversal
    /// element, recorded by its base position.
    Lifted { inner: Box<IrsSpec>, reps: Vec<Site> },
}

impl IrsSpec {
    pub fn dim(&self) -> usize {
        match self {
            IrsSpec::PointMass(s) => s.dim(),
            IrsSpec::EvenOdd { dim } => *dim,
            IrsSpec::LongRange(p) => p.dim(),
            IrsSpec::Lifted { inner, .. } => inner.dim(),
        }
    }

    pub fn lifted(inner: IrsSpec, reps: Vec<Site>) -> Result<Self, IrsError> {
        if reps.is_empty() {
            return Err(IrsError::Invalid("a lift needs at least one representative".into()));
        }
        if let Some(r) = reps.iter().find(|r| r.len() != inner.dim()) {
            return Err(IrsError::Invalid(format!(
                "representative of dimension {} for a dimension-{} IRS",
                r.len(),
                inner.dim()
            )));
        }
        Ok(IrsSpec::Lifted {
            inner: Box::new(inner),
            reps,
        })
    }

    /// The atoms of a finitely supported law, with equal sets merged in
    /// order of first appearance. `None` for percolation laws.
    pub fn atoms(&self) -> Option<Vec<(SiteSet, f64)>> {
        let raw = match self {
            IrsSpec::PointMass(s) => vec![(s.clone(), 1.0)],
            IrsSpec::EvenOdd { dim } => vec![
                (SiteSet::parity(*dim, false), 0.5),
                (SiteSet::parity(*dim, true), 0.5),
            ],
            IrsSpec::LongRange(_) => return None,
            IrsSpec::Lifted { inner, reps } => {
                let w = 1.0 / reps.len() as f64;
                let inner = inner.atoms()?;
                reps.iter()
                    .flat_map(|r| inner.iter().map(move |(s, p)| (s.shifted(r), p * w)))
                    .collect()
            }
        };
        let mut merged: Vec<(SiteSet, f64)> = Vec::with_capacity(raw.len());
        for (s, p) in raw {
            match merged.iter_mut().find(|(t, _)| *t == s) {
                Some((_, q)) => *q += p,
                None => merged.push((s, p)),
            }
        }
        Some(merged)
    }

    /// Parses `pointmass:<set>`, `evenodd`, `longrange:p=…,m=…` or
    /// `lifted:<inner>;reps=<word>,<word>,…` in dimension `dim`.
    ///
    /// Sets are `empty`, `all`, `origin`, `ball=<r>`, `even`, `odd`,
    /// `finite:(x,…);(x,…)` or `cofinite:(x,…);…`. Representatives are words
    /// in `t<i>`/`T<i>` (or `e`) and are recorded by their base position.
    pub fn parse(s: &str, dim: usize) -> Result<Self, IrsError> {
        let s = s.trim();
        let err = || IrsError::Parse(s.to_string());
        if let Some(rest) = s.strip_prefix("lifted:") {
            let (inner, reps) = rest.rsplit_once(";reps=").ok_or_else(err)?;
            let inner = IrsSpec::parse(inner, dim)?;
            let reps = reps
                .split(',')
                .map(|w| parse_shift_word(w.trim(), dim).ok_or_else(err))
                .collect::<Result<Vec<_>, _>>()?;
            return IrsSpec::lifted(inner, reps);
        }
        if s == "evenodd" {
            return Ok(IrsSpec::EvenOdd { dim });
        }
        if let Some(rest) = s.strip_prefix("pointmass:") {
            return Ok(IrsSpec::PointMass(parse_site_set(rest, dim).ok_or_else(err)?));
        }
        if let Some(rest) = s.strip_prefix("longrange:") {
            let mut p = None;
            let mut m = None;
            for kv in rest.split(',') {
                match kv.split_once('=').map(|(k, v)| (k.trim(), v.trim())) {
                    Some(("p", v)) => p = Some(v.parse::<f64>().map_err(|_| err())?),
                    Some(("m", v)) => m = Some(v.parse::<u32>().map_err(|_| err())?),
                    _ => return Err(err()),
                }
            }
            let params = PercolationParams::new(p.ok_or_else(err)?, m.ok_or_else(err)?, dim)
                .map_err(IrsError::Invalid)?;
            return Ok(IrsSpec::LongRange(params));
        }
        Err(err())
    }
}

fn parse_site_set(s: &str, dim: usize) -> Option<SiteSet> {
    let list = |body: &str| -> Option<Vec<Site>> {
        body.split(';')
            .filter(|x| !x.trim().is_empty())
            .map(|x| {
                let inner = x.trim().strip_prefix('(')?.strip_suffix(')')?;
                let coords: Option<Vec<i64>> =
                    inner.split(',').map(|c| c.trim().parse().ok()).collect();
                let coords = coords?;
                (coords.len() == dim).then(|| site(&coords))
            })
            .collect()
    };
    match s.trim() {
        "empty" => Some(SiteSet::empty(dim)),
        "all" => Some(SiteSet::everything(dim)),
        "origin" => Some(SiteSet::origin(dim)),
        "even" => Some(SiteSet::parity(dim, false)),
        "odd" => Some(SiteSet::parity(dim, true)),
        other => {
            if let Some(r) = other.strip_prefix("ball=") {
                Some(SiteSet::ball(dim, r.parse().ok()?))
            } else if let Some(body) = other.strip_prefix("finite:") {
                Some(SiteSet::finite(dim, list(body)?))
            } else {
                other
                    .strip_prefix("cofinite:")
                    .and_then(|body| Some(SiteSet::cofinite(dim, list(body)?)))
            }
        }
    }
}

fn parse_shift_word(w: &str, dim: usize) -> Option<Site> {
    let mut pos = Site::from_elem(0, dim);
    if w == "e" {
        return Some(pos);
    }
    let mut rest = w;
    while !rest.is_empty() {
        let sign = match rest.as_bytes()[0] {
            b't' => 1,
            b'T' => -1,
            _ => return None,
        };
        let digits = rest[1..].bytes().take_while(u8::is_ascii_digit).count();
        let axis: usize = rest[1..1 + digits].parse().ok()?;
        if axis == 0 || axis > dim {
            return None;
        }
        pos[axis - 1] += sign;
        rest = &rest[1 + digits..];
    }
    (!w.is_empty()).then_some(pos)
}

fn shift_word(s: &[i64]) -> String {
    let mut out = String::new();
    for (axis, &x) in s.iter().enumerate() {
        let c = if x > 0 { 't' } else { 'T' };
        for _ in 0..x.unsigned_abs() {
            out.push(c);
            out.push_str(&(axis + 1).to_string());
        }
    }
    if out.is_empty() {
        out.push('e');
    }
    out
}

impl fmt::Display for IrsSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IrsSpec::PointMass(s) => write!(f, "pointmass:{s}"),
            IrsSpec::EvenOdd { .. } => f.write_str("evenodd"),
            IrsSpec::LongRange(p) => write!(f, "longrange:p={},m={}", p.p(), p.m()),
            IrsSpec::Lifted { inner, reps } => {
                let words: Vec<String> = reps.iter().map(|r| shift_word(r)).collect();
                write!(f, "lifted:{inner};reps={}", words.join(","))
            }
        }
    }
}

/// Draws `S ~ spec`. Deterministic in `seed`.
pub fn sample_site_set(spec: &IrsSpec, seed: u64) -> SiteSet {
    match spec {
        IrsSpec::PointMass(s) => s.clone(),
        IrsSpec::EvenOdd { dim } => SiteSet::parity(*dim, unit_interval(mix64(seed)) >= 0.5),
        IrsSpec::LongRange(params) => {
            SiteSet::percolation(Arc::new(PercolationSample::new(*params, seed)))
        }
        IrsSpec::Lifted { inner, reps } => {
            let pick = (unit_interval(derive_seed(seed, 0)) * reps.len() as f64) as usize;
            let rep = &reps[pick.min(reps.len() - 1)];
            sample_site_set(inner, derive_seed(seed, 1)).shifted(rep)
        }
    }
}

/// The site set of `g⁻¹ K_S g`, namely `S + γ` for `g = (f, γ)`. The lamp
/// part of `g` plays no role.
pub fn conjugate_site_set(sites: &SiteSet, g: &GroupElement) -> Result<SiteSet, GroupError> {
    let e = g
        .as_lamp()
        .ok_or_else(|| GroupError::ContextMismatch("site sets conjugate by lamplighter elements".into()))?;
    if e.dim() != sites.dim() {
        return Err(GroupError::ContextMismatch(format!(
            "element of dimension {} for a dimension-{} site set",
            e.dim(),
            sites.dim()
        )));
    }
    Ok(sites.shifted(e.pos()))
}

/// The transversal `{e, t₁}` of the even-first-coordinate subgroup, by base
/// position.
pub fn first_axis_pair(dim: usize) -> Vec<Site> {
    vec![Site::from_elem(0, dim), unit(dim, 0, 1)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{Lamplighter, LamplighterElement};

    #[test]
    fn parse_and_display_round_trip() {
        for s in [
            "pointmass:empty",
            "pointmass:all",
            "pointmass:finite:(0,0,0);(1,0,0)",
            "evenodd",
            "longrange:p=0.5,m=4",
            "lifted:evenodd;reps=e,t1",
            "lifted:pointmass:finite:(0,0,0);reps=e,t1T3",
        ] {
            let spec = IrsSpec::parse(s, 3).unwrap();
            assert_eq!(spec.to_string(), s);
            assert_eq!(IrsSpec::parse(&spec.to_string(), 3).unwrap(), spec);
        }
        assert_eq!(
            IrsSpec::parse("pointmass:origin", 3).unwrap(),
            IrsSpec::PointMass(SiteSet::origin(3))
        );
        for bad in ["", "longrange:p=2,m=1", "longrange:p=0.5", "lifted:evenodd;reps=x", "pointmass:(0,0)"] {
            assert!(IrsSpec::parse(bad, 3).is_err(), "{bad}");
        }
    }

    #[test]
    fn point_mass_ignores_seed() {
        let spec = IrsSpec::PointMass(SiteSet::ball(3, 1));
        for seed in 0..10 {
            assert_eq!(sample_site_set(&spec, seed), SiteSet::ball(3, 1));
        }
    }

    #[test]
    fn even_odd_is_a_fair_coin() {
        let spec = IrsSpec::EvenOdd { dim: 3 };
        let n = 10_000u64;
        let odd = (0..n)
            .filter(|&s| sample_site_set(&spec, s) == SiteSet::parity(3, true))
            .count() as f64;
        let se = (0.25 / n as f64).sqrt();
        assert!((odd / n as f64 - 0.5).abs() <= 3.0 * se);
    }

    #[test]
    fn conjugation_shifts_by_the_base_position() {
        let s = SiteSet::finite(1, [site(&[0]), site(&[2])]);
        let g: GroupElement = LamplighterElement::from_parts([(site(&[7]), 1)], site(&[3])).into();
        assert_eq!(
            conjugate_site_set(&s, &g).unwrap(),
            SiteSet::finite(1, [site(&[3]), site(&[5])])
        );
        let lamp_only: GroupElement = LamplighterElement::from_parts([(site(&[1]), 1)], site(&[0])).into();
        assert_eq!(conjugate_site_set(&s, &lamp_only).unwrap(), s);
    }

    #[test]
    fn conjugated_subgroup_acts_trivially_on_shifted_cosets() {
        use crate::coset::canonicalize;
        use crate::group::GroupContext;
        use rand::{Rng, SeedableRng};
        let ctx = GroupContext::lamplighter(1, 2).unwrap();
        let l = Lamplighter::new(1, 2).unwrap();
        let s = SiteSet::finite(1, [site(&[0]), site(&[2])]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let random = |rng: &mut rand_chacha::ChaCha8Rng| -> GroupElement {
            let pos = site(&[rng.random_range(-5..=5)]);
            LamplighterElement::from_parts(
                (-4..=4).filter(|_| rng.random_bool(0.3)).map(|x| (site(&[x]), 1)),
                pos,
            )
            .into()
        };
        for _ in 0..300 {
            let g = random(&mut rng);
            let k: GroupElement = LamplighterElement::from_parts(
                [0, 2].into_iter().filter(|_| rng.random_bool(0.5)).map(|x| (site(&[x]), 1)),
                l.origin(),
            )
            .into();
            let h = random(&mut rng);
            let shifted = conjugate_site_set(&s, &g).unwrap();
            let g_inv = ctx.inv(&g).unwrap();
            let conj = ctx.mul(&ctx.mul(&g_inv, &k).unwrap(), &g).unwrap();
            let moved = ctx.mul(&conj, &h).unwrap();
            assert_eq!(
                canonicalize(&ctx, &moved, &shifted).unwrap(),
                canonicalize(&ctx, &h, &shifted).unwrap()
            );
        }
    }

    #[test]
    fn lifted_point_mass_table() {
        let spec = IrsSpec::lifted(IrsSpec::PointMass(SiteSet::origin(3)), first_axis_pair(3)).unwrap();
        let atoms = spec.atoms().unwrap();
        assert_eq!(
            atoms,
            vec![
                (SiteSet::origin(3), 0.5),
                (SiteSet::finite(3, [unit(3, 0, 1)]), 0.5)
            ]
        );
    }

    #[test]
    fn lifted_even_odd_is_invariant() {
        let spec = IrsSpec::lifted(IrsSpec::EvenOdd { dim: 3 }, first_axis_pair(3)).unwrap();
        let atoms = spec.atoms().unwrap();
        assert_eq!(atoms.len(), 2);
        assert!(atoms.iter().all(|(_, p)| *p == 0.5));
        let l = Lamplighter::z2_wr_z3();
        for (_, g) in l.generators() {
            let g: GroupElement = g.into();
            let moved: Vec<(SiteSet, f64)> = atoms
                .iter()
                .map(|(s, p)| (conjugate_site_set(s, &g).unwrap(), *p))
                .collect();
            for (s, p) in &atoms {
                let q: f64 = moved.iter().filter(|(t, _)| t == s).map(|(_, q)| q).sum();
                assert_eq!(q, *p);
            }
        }
        let n = 4000u64;
        let even = (0..n)
            .filter(|&s| sample_site_set(&spec, s) == SiteSet::parity(3, false))
            .count() as f64;
        assert!((even / n as f64 - 0.5).abs() <= 3.0 * (0.25 / n as f64).sqrt());
    }

    #[test]
    fn sampling_then_conjugating_point_masses() {
        let s = SiteSet::ball(3, 1);
        let spec = IrsSpec::PointMass(s.clone());
        let g: GroupElement = Lamplighter::z2_wr_z3().step(1, -1).into();
        let direct = conjugate_site_set(&sample_site_set(&spec, 3), &g).unwrap();
        let shifted_spec = IrsSpec::PointMass(conjugate_site_set(&s, &g).unwrap());
        assert_eq!(direct, sample_site_set(&shifted_spec, 8));
    }
}
