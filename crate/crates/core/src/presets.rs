//! Named measures and subgroups used by the experiments.

use crate::group::{FreeGroup, FreeWord, GroupContext, GroupElement, Lamplighter, LamplighterElement};
use crate::measure::FiniteMeasure;

/// Uniform measure on the standard symmetric generators `{a, (a⁻¹), t_i^{±1}}`.
/// On `(Z/2) ≀ Z³` this is the seven-atom switch-walk-step measure.
pub fn switch_walk_step(l: &Lamplighter) -> FiniteMeasure {
    FiniteMeasure::uniform(
        GroupContext::Lamplighter(l.clone()),
        l.generators().into_iter().map(|(_, g)| g.into()),
    )
    .expect("generators are distinct")
}

/// [`switch_walk_step`] with an extra atom at the identity.
pub fn lazy_switch_walk_step(l: &Lamplighter) -> FiniteMeasure {
    FiniteMeasure::uniform(
        GroupContext::Lamplighter(l.clone()),
        std::iter::once(l.identity().into()).chain(l.generators().into_iter().map(|(_, g)| g.into())),
    )
    .expect("generators are distinct")
}

/// Uniform on `{x₁, x₂^{±1}, x₃^{±1}, x₄^{±1}}` in `F_rank`; its image under
/// the lamplighter map is [`switch_walk_step`] on `(Z/2) ≀ Z³`.
pub fn free_switch_walk_step(rank: usize) -> FiniteMeasure {
    let f = FreeGroup::new(rank.max(4)).expect("rank ≥ 4");
    let letters = [1, 2, -2, 3, -3, 4, -4];
    FiniteMeasure::uniform(
        GroupContext::Free(f),
        letters.iter().map(|&l| GroupElement::Free(FreeWord::letter(l))),
    )
    .expect("letters are distinct")
}

/// On `(Z/2) ≀ Z`: uniform on `{e, (δ₁, 0), t, t⁻¹}`. The lamp atom sits at
/// site 1 and shares its base point with the identity, so the coset chain
/// for `S = {0}` does not reproduce the projected walk.
pub fn offset_lamp_step() -> FiniteMeasure {
    let l = Lamplighter::new(1, 2).expect("valid");
    let lamp = LamplighterElement::from_parts([(crate::group::site(&[1]), 1)], l.origin());
    FiniteMeasure::uniform(
        GroupContext::Lamplighter(l.clone()),
        [
            l.identity().into(),
            lamp.into(),
            l.step(0, 1).into(),
            l.step(0, -1).into(),
        ],
    )
    .expect("distinct atoms")
}

/// Resolves a measure preset name against a group context.
///
/// * `sws` – [`switch_walk_step`] (lamplighter) or [`free_switch_walk_step`] (free)
/// * `lazy-sws` – [`lazy_switch_walk_step`]
/// * `offset-lamp` – [`offset_lamp_step`], only on `(Z/2) ≀ Z`
pub fn measure_preset(name: &str, ctx: &GroupContext) -> Result<FiniteMeasure, String> {
    match (name, ctx) {
        ("sws" | "sws7", GroupContext::Lamplighter(l)) => {
            if name == "sws7" && (l.dim() != 3 || l.modulus() != 2) {
                return Err("sws7 needs the group lamplighter:L=2,d=3".into());
            }
            Ok(switch_walk_step(l))
        }
        ("sws" | "sws7", GroupContext::Free(f)) if f.rank() >= 4 => {
            Ok(free_switch_walk_step(f.rank()))
        }
        ("lazy-sws", GroupContext::Lamplighter(l)) => Ok(lazy_switch_walk_step(l)),
        ("offset-lamp", GroupContext::Lamplighter(l)) if l.dim() == 1 && l.modulus() == 2 => {
            Ok(offset_lamp_step())
        }
        _ => Err(format!("measure preset `{name}` is not available on {ctx}")),
    }
}
