use super::{GroupError, Lamplighter, LamplighterElement};

/// The free group on `rank` generators `x₁ … x_rank`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FreeGroup {
    rank: usize,
}

/// A freely reduced word. Letter `k > 0` is `x_k`, letter `-k` is `x_k⁻¹`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FreeWord {
    letters: Vec<i32>,
}

impl FreeWord {
    pub fn empty() -> Self {
        FreeWord::default()
    }

    /// Rejects zero letters and adjacent letter/inverse pairs.
    pub fn new(letters: Vec<i32>) -> Result<Self, GroupError> {
        for (i, w) in letters.windows(2).enumerate() {
            if w[0] == -w[1] {
                return Err(GroupError::Unreduced(i));
            }
        }
        if let Some(&bad) = letters.iter().find(|&&l| l == 0) {
            return Err(GroupError::LetterOutOfRange { letter: bad, rank: 0 });
        }
        Ok(FreeWord { letters })
    }

    /// Reduces an arbitrary letter sequence.
    pub fn reduce(letters: impl IntoIterator<Item = i32>) -> Self {
        let mut out: Vec<i32> = Vec::new();
        for l in letters {
            if out.last() == Some(&-l) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        FreeWord { letters: out }
    }

    pub fn letter(l: i32) -> Self {
        FreeWord { letters: vec![l] }
    }

    pub fn letters(&self) -> &[i32] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }
}

impl FreeGroup {
    pub fn new(rank: usize) -> Result<Self, GroupError> {
        if rank == 0 {
            return Err(GroupError::InvalidParameters("free rank must be ≥ 1".into()));
        }
        Ok(FreeGroup { rank })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn check(&self, w: &FreeWord) -> Result<(), GroupError> {
        for &l in &w.letters {
            if l == 0 || l.unsigned_abs() as usize > self.rank {
                return Err(GroupError::LetterOutOfRange {
                    letter: l,
                    rank: self.rank,
                });
            }
        }
        for (i, pair) in w.letters.windows(2).enumerate() {
            if pair[0] == -pair[1] {
                return Err(GroupError::Unreduced(i));
            }
        }
        Ok(())
    }

    pub fn generators(&self) -> Vec<(String, FreeWord)> {
        (1..=self.rank as i32)
            .flat_map(|k| {
                [
                    (format!("x{k}"), FreeWord::letter(k)),
                    (format!("X{k}"), FreeWord::letter(-k)),
                ]
            })
            .collect()
    }

    pub fn mul(&self, a: &FreeWord, b: &FreeWord) -> Result<FreeWord, GroupError> {
        self.check(a)?;
        self.check(b)?;
        let cancel = a
            .letters
            .iter()
            .rev()
            .zip(&b.letters)
            .take_while(|(x, y)| **x == -**y)
            .count();
        let mut letters = Vec::with_capacity(a.len() + b.len() - 2 * cancel);
        letters.extend_from_slice(&a.letters[..a.len() - cancel]);
        letters.extend_from_slice(&b.letters[cancel..]);
        Ok(FreeWord { letters })
    }

    pub fn inv(&self, a: &FreeWord) -> Result<FreeWord, GroupError> {
        self.check(a)?;
        Ok(FreeWord {
            letters: a.letters.iter().rev().map(|l| -l).collect(),
        })
    }

    /// The homomorphism onto the lamplighter `target` fixed by
    /// `x₁ ↦ a`, `x₂ ↦ t₁`, `x₃ ↦ t₂`, `x₄ ↦ t₃`; higher generators map to
    /// the identity. Needs rank ≥ 4 and a target of dimension ≥ 3.
    pub fn phi(&self, target: &Lamplighter, w: &FreeWord) -> Result<LamplighterElement, GroupError> {
        if self.rank < 4 {
            return Err(GroupError::RankTooSmall(self.rank));
        }
        if target.dim() < 3 {
            return Err(GroupError::ContextMismatch(
                "the lamplighter map needs a base of dimension ≥ 3".into(),
            ));
        }
        self.check(w)?;
        let images: Vec<LamplighterElement> = (1..=4)
            .flat_map(|k| {
                let (plus, minus) = match k {
                    1 => (target.lamp_power(1), target.lamp_power(-1)),
                    _ => (target.step(k - 2, 1), target.step(k - 2, -1)),
                };
                [plus, minus]
            })
            .collect();
        let mut acc = target.identity();
        for &l in &w.letters {
            let k = l.unsigned_abs() as usize;
            if k > 4 {
                continue;
            }
            let idx = 2 * (k - 1) + usize::from(l < 0);
            acc = target.mul_unchecked(&acc, &images[idx]);
        }
        Ok(acc)
    }
}
