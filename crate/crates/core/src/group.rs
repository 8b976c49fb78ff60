//! Words in finitely generated groups and their normal forms.
//!
//! A [`GroupWord`] is stored as a list of syllables `(generator, exponent)`;
//! the public letter view uses signed 1-based generator indices, so
//! `[1, 1, -2]` is `a²b⁻¹`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The flavour of group a model represents.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Free group; words are freely reduced.
    Free,
    /// Free abelian group; words are sorted exponent vectors.
    FreeAbelian,
    /// A group given only through its finite quotients. Words are freely
    /// reduced words in the free group on the generators; the relators are
    /// used to check that quotient maps are homomorphisms.
    Presented { relators: Vec<Vec<i32>> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupModel {
    kind: ModelKind,
    rank: usize,
}

impl GroupModel {
    pub fn free(rank: usize) -> Self {
        Self { kind: ModelKind::Free, rank }
    }

    pub fn free_abelian(rank: usize) -> Self {
        Self { kind: ModelKind::FreeAbelian, rank }
    }

    /// A presented group. Relators are given as letter arrays and validated
    /// against `rank`.
    pub fn presented(rank: usize, relators: Vec<Vec<i32>>) -> Result<Self> {
        for r in &relators {
            check_letters(r, rank)?;
        }
        Ok(Self { kind: ModelKind::Presented { relators }, rank })
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_abelian(&self) -> bool {
        matches!(self.kind, ModelKind::FreeAbelian)
    }

    /// Whether `w == e` can be decided inside the model itself.
    pub fn decides_identity(&self) -> bool {
        !matches!(self.kind, ModelKind::Presented { .. })
    }

    pub fn relators(&self) -> Vec<GroupWord> {
        match &self.kind {
            ModelKind::Presented { relators } => relators
                .iter()
                .map(|r| GroupWord::from_letters(r, self).expect("validated at construction"))
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Exact identity test. Fails for presented models unless the reduced word
    /// is empty.
    pub fn is_identity(&self, w: &GroupWord) -> Result<bool> {
        if w.is_identity() {
            return Ok(true);
        }
        if self.decides_identity() {
            Ok(false)
        } else {
            Err(Error::UndecidableIdentity)
        }
    }

    pub fn generator(&self, index: usize) -> Result<GroupWord> {
        if index >= self.rank {
            return Err(Error::GeneratorOutOfRange { letter: index as i64 + 1, rank: self.rank });
        }
        Ok(GroupWord { syllables: vec![(index as u32, 1)] })
    }

    fn check(&self, w: &GroupWord) -> Result<()> {
        match w.syllables.iter().find(|(g, _)| *g as usize >= self.rank) {
            Some((g, _)) => Err(Error::GeneratorOutOfRange { letter: *g as i64 + 1, rank: self.rank }),
            None => Ok(()),
        }
    }

    fn normalize(&self, syllables: Vec<(u32, i64)>) -> GroupWord {
        match self.kind {
            ModelKind::FreeAbelian => {
                let mut exps = vec![0i64; self.rank];
                for (g, e) in syllables {
                    exps[g as usize] += e;
                }
                GroupWord::from_exponents(&exps)
            }
            _ => GroupWord { syllables: free_reduce(syllables) },
        }
    }
}

fn check_letters(letters: &[i32], rank: usize) -> Result<()> {
    for &l in letters {
        if l == 0 || l.unsigned_abs() as usize > rank {
            return Err(Error::GeneratorOutOfRange { letter: l as i64, rank });
        }
    }
    Ok(())
}

/// Stack-based free reduction over syllables.
fn free_reduce(syllables: Vec<(u32, i64)>) -> Vec<(u32, i64)> {
    let mut out: Vec<(u32, i64)> = Vec::with_capacity(syllables.len());
    for (g, e) in syllables {
        if e == 0 {
            continue;
        }
        match out.last_mut() {
            Some((h, f)) if *h == g => {
                *f += e;
                if *f == 0 {
                    out.pop();
                }
            }
            _ => out.push((g, e)),
        }
    }
    out
}

/// An element of the group, kept in the model's normal form.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct GroupWord {
    syllables: Vec<(u32, i64)>,
}

impl GroupWord {
    pub fn identity() -> Self {
        Self::default()
    }

    /// Parses a letter array (signed, 1-based generator indices) and brings it
    /// into normal form.
    pub fn from_letters(letters: &[i32], model: &GroupModel) -> Result<Self> {
        check_letters(letters, model.rank)?;
        let syl = letters
            .iter()
            .map(|&l| ((l.unsigned_abs() - 1), if l > 0 { 1 } else { -1 }))
            .collect();
        Ok(model.normalize(syl))
    }

    /// Normal form for an exponent vector in a free abelian group.
    pub fn from_exponents(exps: &[i64]) -> Self {
        let syllables = exps
            .iter()
            .enumerate()
            .filter(|(_, e)| **e != 0)
            .map(|(g, e)| (g as u32, *e))
            .collect();
        Self { syllables }
    }

    pub fn is_identity(&self) -> bool {
        self.syllables.is_empty()
    }

    pub fn syllables(&self) -> &[(u32, i64)] {
        &self.syllables
    }

    /// Word length in letters.
    pub fn len(&self) -> usize {
        self.syllables.iter().map(|(_, e)| e.unsigned_abs() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.syllables.is_empty()
    }

    pub fn letters(&self) -> Vec<i32> {
        let mut out = Vec::with_capacity(self.len());
        for &(g, e) in &self.syllables {
            let l = g as i32 + 1;
            let l = if e > 0 { l } else { -l };
            out.extend(std::iter::repeat_n(l, e.unsigned_abs() as usize));
        }
        out
    }

    /// Exponent sum of each generator (the image in the abelianization).
    pub fn exponent_sums(&self, rank: usize) -> Vec<i64> {
        let mut v = vec![0; rank];
        for &(g, e) in &self.syllables {
            if (g as usize) < rank {
                v[g as usize] += e;
            }
        }
        v
    }
}

impl fmt::Debug for GroupWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for GroupWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.syllables.is_empty() {
            return write!(f, "e");
        }
        for (i, &(g, e)) in self.syllables.iter().enumerate() {
            if i > 0 {
                write!(f, "·")?;
            }
            let name = generator_name(g);
            if e == 1 {
                write!(f, "{name}")?;
            } else {
                write!(f, "{name}^{e}")?;
            }
        }
        Ok(())
    }
}

fn generator_name(g: u32) -> String {
    if g < 26 {
        ((b'a' + g as u8) as char).to_string()
    } else {
        format!("x{}", g + 1)
    }
}

pub fn word_mul(w1: &GroupWord, w2: &GroupWord, model: &GroupModel) -> Result<GroupWord> {
    model.check(w1)?;
    model.check(w2)?;
    Ok(mul_unchecked(w1, w2, model))
}

pub(crate) fn mul_unchecked(w1: &GroupWord, w2: &GroupWord, model: &GroupModel) -> GroupWord {
    if w1.is_identity() {
        return w2.clone();
    }
    if w2.is_identity() {
        return w1.clone();
    }
    if model.is_abelian() {
        // Both sorted by generator: merge.
        let (a, b) = (&w1.syllables, &w2.syllables);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            if j == b.len() || (i < a.len() && a[i].0 < b[j].0) {
                out.push(a[i]);
                i += 1;
            } else if i == a.len() || b[j].0 < a[i].0 {
                out.push(b[j]);
                j += 1;
            } else {
                let e = a[i].1 + b[j].1;
                if e != 0 {
                    out.push((a[i].0, e));
                }
                i += 1;
                j += 1;
            }
        }
        return GroupWord { syllables: out };
    }
    let mut syl = w1.syllables.clone();
    for &s in &w2.syllables {
        match syl.last_mut() {
            Some((h, f)) if *h == s.0 => {
                *f += s.1;
                if *f == 0 {
                    syl.pop();
                }
            }
            _ => syl.push(s),
        }
    }
    GroupWord { syllables: syl }
}

pub fn word_inv(w: &GroupWord, model: &GroupModel) -> GroupWord {
    if model.is_abelian() {
        GroupWord { syllables: w.syllables.iter().map(|&(g, e)| (g, -e)).collect() }
    } else {
        GroupWord { syllables: w.syllables.iter().rev().map(|&(g, e)| (g, -e)).collect() }
    }
}

/// Re-normalizes a word; idempotent on words that are already in normal form.
pub fn normal_form(w: &GroupWord, model: &GroupModel) -> GroupWord {
    model.normalize(w.syllables.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w(letters: &[i32], m: &GroupModel) -> GroupWord {
        GroupWord::from_letters(letters, m).unwrap()
    }

    #[test]
    fn free_cancellation() {
        let f2 = GroupModel::free(2);
        assert!(word_mul(&w(&[1], &f2), &w(&[-1], &f2), &f2).unwrap().is_identity());
        let p = word_mul(&w(&[1, 1, 2], &f2), &w(&[-2, 1], &f2), &f2).unwrap();
        assert_eq!(p.letters(), vec![1, 1, 1]);
    }

    #[test]
    fn abelian_commutes() {
        let z2 = GroupModel::free_abelian(2);
        let p = word_mul(&w(&[1, 2], &z2), &w(&[-1], &z2), &z2).unwrap();
        assert_eq!(p.letters(), vec![2]);
        // b a normalizes to a b
        assert_eq!(w(&[2, 1], &z2).letters(), vec![1, 2]);
    }

    #[test]
    fn inverses() {
        let f2 = GroupModel::free(2);
        assert_eq!(word_inv(&w(&[1, 2], &f2), &f2).letters(), vec![-2, -1]);
        assert!(word_inv(&GroupWord::identity(), &f2).is_identity());
        let z2 = GroupModel::free_abelian(2);
        assert_eq!(word_inv(&w(&[1, 1, -2], &z2), &z2).letters(), vec![-1, -1, 2]);
    }

    #[test]
    fn out_of_range_letters_rejected() {
        let f2 = GroupModel::free(2);
        assert!(matches!(
            GroupWord::from_letters(&[3], &f2),
            Err(Error::GeneratorOutOfRange { .. })
        ));
        assert!(GroupWord::from_letters(&[0], &f2).is_err());
        let f3 = GroupModel::free(3);
        let c = w(&[3], &f3);
        assert!(word_mul(&c, &GroupWord::identity(), &f2).is_err());
    }

    #[test]
    fn presented_identity_is_undecidable() {
        let m = GroupModel::presented(2, vec![vec![-1, 2, 1, -2, -2]]).unwrap();
        assert!(m.is_identity(&GroupWord::identity()).unwrap());
        assert!(m.is_identity(&w(&[1], &m)).is_err());
    }

    #[test]
    fn display() {
        let f2 = GroupModel::free(2);
        assert_eq!(w(&[1, 1, -2], &f2).to_string(), "a^2·b^-1");
        assert_eq!(GroupWord::identity().to_string(), "e");
    }

    fn letters_strategy(rank: i32) -> impl Strategy<Value = Vec<i32>> {
        proptest::collection::vec(
            (1..=rank, any::<bool>()).prop_map(|(g, s)| if s { g } else { -g }),
            0..12,
        )
    }

    proptest! {
        #[test]
        fn normal_form_idempotent(l in letters_strategy(3), abelian in any::<bool>()) {
            let m = if abelian { GroupModel::free_abelian(3) } else { GroupModel::free(3) };
            let x = w(&l, &m);
            prop_assert_eq!(normal_form(&x, &m), x.clone());
            // letters round-trip
            prop_assert_eq!(w(&x.letters(), &m), x);
        }

        #[test]
        fn group_axioms(a in letters_strategy(2), b in letters_strategy(2), c in letters_strategy(2), abelian in any::<bool>()) {
            let m = if abelian { GroupModel::free_abelian(2) } else { GroupModel::free(2) };
            let (a, b, c) = (w(&a, &m), w(&b, &m), w(&c, &m));
            let ab_c = word_mul(&word_mul(&a, &b, &m).unwrap(), &c, &m).unwrap();
            let a_bc = word_mul(&a, &word_mul(&b, &c, &m).unwrap(), &m).unwrap();
            prop_assert_eq!(ab_c, a_bc);
            prop_assert!(word_mul(&a, &word_inv(&a, &m), &m).unwrap().is_identity());
            // concatenation agrees with multiplication
            let mut cat = a.letters();
            cat.extend(b.letters());
            prop_assert_eq!(w(&cat, &m), word_mul(&a, &b, &m).unwrap());
        }
    }
}
