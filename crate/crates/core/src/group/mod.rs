//! Exact arithmetic for lamplighter groups `L ≀ Z^d` and free groups `F_n`.
//!
//! Elements are immutable values in canonical form, so structural equality,
//! ordering and hashing coincide with group equality. All operations are
//! pure and can be called concurrently.

mod free;
mod lamplighter;
mod length;
mod text;

use std::fmt;
use std::str::FromStr;

use smallvec::SmallVec;
use thiserror::Error;

pub use free::{FreeGroup, FreeWord};
pub use lamplighter::{Lamplighter, LamplighterElement};
pub use length::{LengthResult, EXACT_LENGTH_MAX_SITES};

/// A point of the base lattice `Z^d`.
pub type Site = SmallVec<[i64; 3]>;

/// Builds a site from a coordinate slice.
pub fn site(coords: &[i64]) -> Site {
    SmallVec::from_slice(coords)
}

/// The `axis`-th unit vector of `Z^dim`, scaled by `sign`.
pub fn unit(dim: usize, axis: usize, sign: i64) -> Site {
    let mut s: Site = SmallVec::from_elem(0, dim);
    s[axis] = sign;
    s
}

pub fn add_sites(a: &[i64], b: &[i64]) -> Site {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn sub_sites(a: &[i64], b: &[i64]) -> Site {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn l1_norm(a: &[i64]) -> u64 {
    a.iter().map(|x| x.unsigned_abs()).sum()
}

pub fn l1_distance(a: &[i64], b: &[i64]) -> u64 {
    a.iter().zip(b).map(|(x, y)| x.abs_diff(*y)).sum()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroupError {
    #[error("context mismatch: {0}")]
    ContextMismatch(String),
    #[error("free word is not reduced at position {0}")]
    Unreduced(usize),
    #[error("letter {letter} is outside a free group of rank {rank}")]
    LetterOutOfRange { letter: i32, rank: usize },
    #[error("free group rank {0} is too small for the lamplighter map (need at least 4)")]
    RankTooSmall(usize),
    #[error("invalid group parameters: {0}")]
    InvalidParameters(String),
    #[error("cannot parse `{0}`")]
    Parse(String),
}

/// An element of either supported group family.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GroupElement {
    Lamp(LamplighterElement),
    Free(FreeWord),
}

impl GroupElement {
    pub fn as_lamp(&self) -> Option<&LamplighterElement> {
        match self {
            GroupElement::Lamp(e) => Some(e),
            GroupElement::Free(_) => None,
        }
    }

    pub fn as_free(&self) -> Option<&FreeWord> {
        match self {
            GroupElement::Free(w) => Some(w),
            GroupElement::Lamp(_) => None,
        }
    }
}

impl From<LamplighterElement> for GroupElement {
    fn from(e: LamplighterElement) -> Self {
        GroupElement::Lamp(e)
    }
}

impl From<FreeWord> for GroupElement {
    fn from(w: FreeWord) -> Self {
        GroupElement::Free(w)
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupElement::Lamp(e) => e.fmt(f),
            GroupElement::Free(w) => w.fmt(f),
        }
    }
}

/// The group an element lives in.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum GroupContext {
    Lamplighter(Lamplighter),
    Free(FreeGroup),
}

impl GroupContext {
    pub fn lamplighter(dim: usize, modulus: u32) -> Result<Self, GroupError> {
        Ok(GroupContext::Lamplighter(Lamplighter::new(dim, modulus)?))
    }

    pub fn free(rank: usize) -> Result<Self, GroupError> {
        Ok(GroupContext::Free(FreeGroup::new(rank)?))
    }

    pub fn as_lamplighter(&self) -> Result<&Lamplighter, GroupError> {
        match self {
            GroupContext::Lamplighter(l) => Ok(l),
            GroupContext::Free(_) => Err(GroupError::ContextMismatch(
                "expected a lamplighter context".into(),
            )),
        }
    }

    pub fn as_free(&self) -> Result<&FreeGroup, GroupError> {
        match self {
            GroupContext::Free(f) => Ok(f),
            GroupContext::Lamplighter(_) => {
                Err(GroupError::ContextMismatch("expected a free context".into()))
            }
        }
    }

    pub fn identity(&self) -> GroupElement {
        match self {
            GroupContext::Lamplighter(l) => l.identity().into(),
            GroupContext::Free(_) => FreeWord::empty().into(),
        }
    }

    /// Checks that `g` belongs to this context.
    pub fn check(&self, g: &GroupElement) -> Result<(), GroupError> {
        match (self, g) {
            (GroupContext::Lamplighter(l), GroupElement::Lamp(e)) => l.check(e),
            (GroupContext::Free(f), GroupElement::Free(w)) => f.check(w),
            _ => Err(GroupError::ContextMismatch(format!(
                "element {g} does not belong to {self}"
            ))),
        }
    }

    pub fn mul(&self, a: &GroupElement, b: &GroupElement) -> Result<GroupElement, GroupError> {
        match (self, a, b) {
            (GroupContext::Lamplighter(l), GroupElement::Lamp(x), GroupElement::Lamp(y)) => {
                Ok(l.mul(x, y)?.into())
            }
            (GroupContext::Free(f), GroupElement::Free(x), GroupElement::Free(y)) => {
                Ok(f.mul(x, y)?.into())
            }
            _ => Err(GroupError::ContextMismatch(format!(
                "cannot multiply {a} and {b} in {self}"
            ))),
        }
    }

    pub fn inv(&self, a: &GroupElement) -> Result<GroupElement, GroupError> {
        match (self, a) {
            (GroupContext::Lamplighter(l), GroupElement::Lamp(x)) => Ok(l.inv(x)?.into()),
            (GroupContext::Free(f), GroupElement::Free(x)) => Ok(f.inv(x)?.into()),
            _ => Err(GroupError::ContextMismatch(format!(
                "cannot invert {a} in {self}"
            ))),
        }
    }

    /// `h·g·h⁻¹`.
    pub fn conjugate(&self, g: &GroupElement, h: &GroupElement) -> Result<GroupElement, GroupError> {
        let hg = self.mul(h, g)?;
        self.mul(&hg, &self.inv(h)?)
    }

    /// The standard symmetric generating set, with display names.
    pub fn generators(&self) -> Vec<(String, GroupElement)> {
        match self {
            GroupContext::Lamplighter(l) => l
                .generators()
                .into_iter()
                .map(|(n, g)| (n, g.into()))
                .collect(),
            GroupContext::Free(f) => f
                .generators()
                .into_iter()
                .map(|(n, g)| (n, g.into()))
                .collect(),
        }
    }

    /// Parses an element from its canonical text form.
    pub fn parse_element(&self, s: &str) -> Result<GroupElement, GroupError> {
        let g: GroupElement = match self {
            GroupContext::Lamplighter(_) => LamplighterElement::from_str(s)?.into(),
            GroupContext::Free(_) => FreeWord::from_str(s)?.into(),
        };
        self.check(&g)?;
        Ok(g)
    }
}

impl fmt::Display for GroupContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupContext::Lamplighter(l) => write!(f, "lamplighter:L={},d={}", l.modulus(), l.dim()),
            GroupContext::Free(g) => write!(f, "free:rank={}", g.rank()),
        }
    }
}

impl FromStr for GroupContext {
    type Err = GroupError;

    /// Accepts `lamplighter:L=<modulus>,d=<dim>` and `free:rank=<n>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (kind, params) = s.split_once(':').unwrap_or((s, ""));
        let mut lamp = None;
        let mut dim = None;
        let mut rank = None;
        for kv in params.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| GroupError::Parse(s.to_string()))?;
            let v: u64 = v.trim().parse().map_err(|_| GroupError::Parse(s.to_string()))?;
            match k.trim() {
                "L" => lamp = Some(v as u32),
                "d" => dim = Some(v as usize),
                "rank" => rank = Some(v as usize),
                _ => return Err(GroupError::Parse(s.to_string())),
            }
        }
        match kind {
            "lamplighter" if rank.is_none() => {
                GroupContext::lamplighter(dim.unwrap_or(3), lamp.unwrap_or(2))
            }
            "free" if lamp.is_none() && dim.is_none() => GroupContext::free(rank.unwrap_or(4)),
            _ => Err(GroupError::Parse(s.to_string())),
        }
    }
}
