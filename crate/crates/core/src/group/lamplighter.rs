use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use super::{add_sites, sub_sites, unit, GroupError, Site};

/// The lamplighter group `(Z/L) ≀ Z^d`.
///
/// Multiplication follows `(f₁, γ₁)(f₂, γ₂) = (f₁ + γ₁·f₂, γ₁ + γ₂)` where the
/// base acts on configurations by `(γ·f)(x) = f(x + γ)`. Under this action a
/// walker standing at `γ` that applies the lamp generator switches the lamp at
/// site `-γ`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Lamplighter {
    dim: usize,
    modulus: u32,
}

/// A pair `(f, γ)` with `f` finitely supported. Zero lamps are never stored.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LamplighterElement {
    lamps: BTreeMap<Site, u32>,
    pos: Site,
}

impl LamplighterElement {
    /// Builds an element from raw parts. Lamp values are taken as given and
    /// zero values are dropped; reduce mod `L` with [`Lamplighter::normalize`]
    /// when the values may exceed the modulus.
    pub fn from_parts(lamps: impl IntoIterator<Item = (Site, u32)>, pos: Site) -> Self {
        let lamps = lamps.into_iter().filter(|(_, v)| *v != 0).collect();
        LamplighterElement { lamps, pos }
    }

    pub fn base(pos: Site) -> Self {
        LamplighterElement {
            lamps: BTreeMap::new(),
            pos,
        }
    }

    pub fn lamps(&self) -> &BTreeMap<Site, u32> {
        &self.lamps
    }

    pub fn pos(&self) -> &Site {
        &self.pos
    }

    pub fn dim(&self) -> usize {
        self.pos.len()
    }

    /// Lit sites in lexicographic order.
    pub fn support(&self) -> impl Iterator<Item = &Site> {
        self.lamps.keys()
    }

    pub fn is_identity(&self) -> bool {
        self.lamps.is_empty() && self.pos.iter().all(|&x| x == 0)
    }

    /// Keeps only the lamps whose site satisfies `keep`.
    pub fn retain_lamps(&self, mut keep: impl FnMut(&Site) -> bool) -> Self {
        LamplighterElement {
            lamps: self
                .lamps
                .iter()
                .filter(|(s, _)| keep(s))
                .map(|(s, v)| (s.clone(), *v))
                .collect(),
            pos: self.pos.clone(),
        }
    }
}

impl Lamplighter {
    pub fn new(dim: usize, modulus: u32) -> Result<Self, GroupError> {
        if dim == 0 {
            return Err(GroupError::InvalidParameters("base dimension must be ≥ 1".into()));
        }
        if modulus < 2 {
            return Err(GroupError::InvalidParameters("lamp modulus must be ≥ 2".into()));
        }
        Ok(Lamplighter { dim, modulus })
    }

    /// `(Z/2) ≀ Z³`.
    pub fn z2_wr_z3() -> Self {
        Lamplighter { dim: 3, modulus: 2 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modulus(&self) -> u32 {
        self.modulus
    }

    pub fn origin(&self) -> Site {
        Site::from_elem(0, self.dim)
    }

    pub fn identity(&self) -> LamplighterElement {
        LamplighterElement::base(self.origin())
    }

    /// `a = (δ₀, 0)`.
    pub fn lamp_generator(&self) -> LamplighterElement {
        self.lamp_power(1)
    }

    /// `aᵏ`, the element with lamp value `k mod L` at the origin.
    pub fn lamp_power(&self, k: i64) -> LamplighterElement {
        let v = k.rem_euclid(self.modulus as i64) as u32;
        LamplighterElement::from_parts([(self.origin(), v)], self.origin())
    }

    /// `t_axis^{sign}`.
    pub fn step(&self, axis: usize, sign: i64) -> LamplighterElement {
        LamplighterElement::base(unit(self.dim, axis, sign))
    }

    /// `{a, a⁻¹ (if L > 2), t_i^{±1}}` with names `a`, `A`, `t1`, `T1`, ...
    pub fn generators(&self) -> Vec<(String, LamplighterElement)> {
        let mut gens = vec![("a".to_string(), self.lamp_generator())];
        if self.modulus > 2 {
            gens.push(("A".to_string(), self.lamp_power(-1)));
        }
        for axis in 0..self.dim {
            gens.push((format!("t{}", axis + 1), self.step(axis, 1)));
            gens.push((format!("T{}", axis + 1), self.step(axis, -1)));
        }
        gens
    }

    pub fn check(&self, e: &LamplighterElement) -> Result<(), GroupError> {
        if e.pos.len() != self.dim {
            return Err(GroupError::ContextMismatch(format!(
                "element of dimension {} in a dimension-{} lamplighter",
                e.pos.len(),
                self.dim
            )));
        }
        for (s, v) in &e.lamps {
            if s.len() != self.dim {
                return Err(GroupError::ContextMismatch(format!(
                    "lamp site of dimension {} in a dimension-{} lamplighter",
                    s.len(),
                    self.dim
                )));
            }
            if *v == 0 || *v >= self.modulus {
                return Err(GroupError::ContextMismatch(format!(
                    "lamp value {v} is not a nonzero residue mod {}",
                    self.modulus
                )));
            }
        }
        Ok(())
    }

    /// Reduces lamp values mod `L` and prunes zeros.
    pub fn normalize(&self, e: LamplighterElement) -> LamplighterElement {
        let m = self.modulus;
        LamplighterElement::from_parts(e.lamps.into_iter().map(|(s, v)| (s, v % m)), e.pos)
    }

    fn check_dims(&self, a: &LamplighterElement) -> Result<(), GroupError> {
        if a.pos.len() != self.dim {
            return Err(GroupError::ContextMismatch(format!(
                "element of dimension {} in a dimension-{} lamplighter",
                a.pos.len(),
                self.dim
            )));
        }
        Ok(())
    }

    pub fn mul(
        &self,
        a: &LamplighterElement,
        b: &LamplighterElement,
    ) -> Result<LamplighterElement, GroupError> {
        self.check_dims(a)?;
        self.check_dims(b)?;
        Ok(self.mul_unchecked(a, b))
    }

    pub(crate) fn mul_unchecked(
        &self,
        a: &LamplighterElement,
        b: &LamplighterElement,
    ) -> LamplighterElement {
        let mut lamps = a.lamps.clone();
        for (s, v) in &b.lamps {
            match lamps.entry(sub_sites(s, &a.pos)) {
                Entry::Occupied(mut o) => {
                    let nv = (*o.get() + v) % self.modulus;
                    if nv == 0 {
                        o.remove();
                    } else {
                        *o.get_mut() = nv;
                    }
                }
                Entry::Vacant(slot) => {
                    slot.insert(*v);
                }
            }
        }
        LamplighterElement {
            lamps,
            pos: add_sites(&a.pos, &b.pos),
        }
    }

    /// `(f, γ)⁻¹ = (γ⁻¹·f⁻¹, -γ)`.
    pub fn inv(&self, a: &LamplighterElement) -> Result<LamplighterElement, GroupError> {
        self.check_dims(a)?;
        let lamps = a
            .lamps
            .iter()
            .map(|(s, v)| (add_sites(s, &a.pos), self.modulus - v))
            .collect();
        Ok(LamplighterElement {
            lamps,
            pos: a.pos.iter().map(|x| -x).collect(),
        })
    }

    /// `h·g·h⁻¹`.
    pub fn conjugate(
        &self,
        g: &LamplighterElement,
        h: &LamplighterElement,
    ) -> Result<LamplighterElement, GroupError> {
        let hg = self.mul(h, g)?;
        self.mul(&hg, &self.inv(h)?)
    }

    /// The projection `π(f, γ) = γ`.
    pub fn project_base(&self, g: &LamplighterElement) -> Result<Site, GroupError> {
        self.check_dims(g)?;
        Ok(g.pos.clone())
    }
}
