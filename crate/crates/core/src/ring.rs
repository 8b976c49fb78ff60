//! Sparse arithmetic in the group ring `Q[π]` and matrices over it.
//!
//! Coefficients are exact rationals throughout. Terms are kept in a
//! `BTreeMap` keyed by normal-form words, so iteration (and therefore every
//! serialized document) is deterministic.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{mul_unchecked, word_inv, GroupModel, GroupWord};
use crate::poly::Polynomial;
use crate::quotient::QuotientSpec;

pub type Rational = BigRational;

pub fn rat(n: i64, d: i64) -> Rational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Rational {
    BigRational::from_integer(BigInt::from(n))
}

/// ε₀ = 2⁻²⁰, the floor margin that keeps `K > 1`.
pub fn k_floor() -> Rational {
    BigRational::new(BigInt::from((1u64 << 20) + 1), BigInt::from(1u64 << 20))
}

#[derive(Clone, PartialEq, Eq, Default)]
pub struct RingElement {
    terms: BTreeMap<GroupWord, Rational>,
}

impl RingElement {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn one() -> Self {
        Self::monomial(int(1), GroupWord::identity())
    }

    pub fn monomial(coef: Rational, word: GroupWord) -> Self {
        let mut terms = BTreeMap::new();
        if !coef.is_zero() {
            terms.insert(word, coef);
        }
        Self { terms }
    }

    /// Integer-coefficient element from `(coefficient, letters)` pairs.
    pub fn from_int_terms(terms: &[(i64, &[i32])], model: &GroupModel) -> Result<Self> {
        let mut out = Self::zero();
        for (c, letters) in terms {
            out.add_term(GroupWord::from_letters(letters, model)?, int(*c));
        }
        Ok(out)
    }

    pub fn add_term(&mut self, word: GroupWord, coef: Rational) {
        if coef.is_zero() {
            return;
        }
        match self.terms.entry(word) {
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += coef;
                if e.get().is_zero() {
                    e.remove();
                }
            }
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(coef);
            }
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&GroupWord, &Rational)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, w: &GroupWord) -> Rational {
        self.terms.get(w).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn identity_coefficient(&self) -> Rational {
        self.coefficient(&GroupWord::identity())
    }

    pub fn is_integral(&self) -> bool {
        self.terms.values().all(|c| c.is_integer())
    }

    /// Sum of coefficients (image under the augmentation `g ↦ 1`).
    pub fn augmentation(&self) -> Rational {
        self.terms.values().fold(Rational::zero(), |a, c| a + c)
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (w, c) in &other.terms {
            out.add_term(w.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (w, c) in &other.terms {
            out.add_term(w.clone(), -c.clone());
        }
        out
    }

    pub fn scale(&self, s: &Rational) -> Self {
        if s.is_zero() {
            return Self::zero();
        }
        Self { terms: self.terms.iter().map(|(w, c)| (w.clone(), c * s)).collect() }
    }

    /// Convolution product `(u·v)_w = Σ_{g·h=w} u_g v_h`.
    pub fn mul(&self, other: &Self, model: &GroupModel) -> Self {
        let mut out = Self::zero();
        for (g, a) in &self.terms {
            for (h, b) in &other.terms {
                out.add_term(mul_unchecked(g, h, model), a * b);
            }
        }
        out
    }

    /// The involution `λ·g ↦ λ·g⁻¹` (coefficients are real).
    pub fn conjugate(&self, model: &GroupModel) -> Self {
        Self { terms: self.terms.iter().map(|(w, c)| (word_inv(w, model), c.clone())).collect() }
    }

    pub fn l1_norm_exact(&self) -> Rational {
        self.terms.values().fold(Rational::zero(), |a, c| a + c.abs())
    }

    pub fn l1_norm(&self) -> f64 {
        self.l1_norm_exact().to_f64().unwrap_or(f64::INFINITY)
    }

    /// Sum of the coefficients whose word maps to the identity of `q`.
    pub fn trivial_part_coefficient(&self, q: &QuotientSpec) -> Result<Rational> {
        let mut acc = Rational::zero();
        for (w, c) in &self.terms {
            if q.is_trivial(w)? {
                acc += c;
            }
        }
        Ok(acc)
    }
}

pub fn ring_mul(u: &RingElement, v: &RingElement, model: &GroupModel) -> RingElement {
    u.mul(v, model)
}

pub fn l1_norm(u: &RingElement) -> f64 {
    u.l1_norm()
}

impl fmt::Debug for RingElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for RingElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (w, c)) in self.terms.iter().enumerate() {
            let neg = c.is_negative();
            if i > 0 {
                write!(f, " {} ", if neg { '-' } else { '+' })?;
            } else if neg {
                write!(f, "-")?;
            }
            let a = c.abs();
            if w.is_identity() {
                write!(f, "{a}")?;
            } else if a.is_one() {
                write!(f, "{w}")?;
            } else {
                write!(f, "{a}·{w}")?;
            }
        }
        Ok(())
    }
}

/// A sparse matrix with entries in the group ring of `model`.
#[derive(Clone, PartialEq, Eq)]
pub struct RingMatrix {
    rows: usize,
    cols: usize,
    entries: BTreeMap<(usize, usize), RingElement>,
    model: GroupModel,
    self_adjoint: bool,
}

impl fmt::Debug for RingMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RingMatrix {}×{} [", self.rows, self.cols)?;
        for ((r, c), e) in &self.entries {
            write!(f, " ({r},{c}): {e};")?;
        }
        write!(f, " ]")
    }
}

impl RingMatrix {
    pub fn zeros(rows: usize, cols: usize, model: GroupModel) -> Self {
        Self { rows, cols, entries: BTreeMap::new(), model, self_adjoint: false }
    }

    pub fn identity(n: usize, model: GroupModel) -> Self {
        let mut m = Self::zeros(n, n, model);
        for i in 0..n {
            m.set(i, i, RingElement::one());
        }
        m.self_adjoint = true;
        m
    }

    /// Builds a matrix from dense rows of elements.
    pub fn from_rows(rows: Vec<Vec<RingElement>>, model: GroupModel) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        let mut m = Self::zeros(r, c, model);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != c {
                return Err(Error::Shape("ragged rows".into()));
            }
            for (j, e) in row.into_iter().enumerate() {
                m.set(i, j, e);
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn model(&self) -> &GroupModel {
        &self.model
    }

    pub fn is_self_adjoint_flagged(&self) -> bool {
        self.self_adjoint
    }

    pub fn set(&mut self, r: usize, c: usize, e: RingElement) {
        assert!(r < self.rows && c < self.cols, "entry ({r},{c}) outside {}×{}", self.rows, self.cols);
        self.self_adjoint = false;
        if e.is_zero() {
            self.entries.remove(&(r, c));
        } else {
            self.entries.insert((r, c), e);
        }
    }

    pub fn get(&self, r: usize, c: usize) -> Option<&RingElement> {
        self.entries.get(&(r, c))
    }

    pub fn entry(&self, r: usize, c: usize) -> RingElement {
        self.get(r, c).cloned().unwrap_or_default()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(usize, usize), &RingElement)> {
        self.entries.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_integral(&self) -> bool {
        self.entries.values().all(RingElement::is_integral)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.model != other.model {
            return Err(Error::ModelMismatch);
        }
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}×{} by {}×{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut by_row: BTreeMap<usize, Vec<(usize, &RingElement)>> = BTreeMap::new();
        for (&(r, c), e) in &other.entries {
            by_row.entry(r).or_default().push((c, e));
        }
        let mut out = Self::zeros(self.rows, other.cols, self.model.clone());
        let mut acc: BTreeMap<(usize, usize), RingElement> = BTreeMap::new();
        for (&(i, j), a) in &self.entries {
            if let Some(row) = by_row.get(&j) {
                for &(k, b) in row {
                    let p = a.mul(b, &self.model);
                    let slot = acc.entry((i, k)).or_default();
                    *slot = slot.add(&p);
                }
            }
        }
        acc.retain(|_, e| !e.is_zero());
        out.entries = acc;
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.model != other.model {
            return Err(Error::ModelMismatch);
        }
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::Shape("cannot add matrices of different shapes".into()));
        }
        let mut out = self.clone();
        out.self_adjoint = false;
        for (&k, e) in &other.entries {
            let s = out.entries.entry(k).or_default().add(e);
            if s.is_zero() {
                out.entries.remove(&k);
            } else {
                out.entries.insert(k, s);
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: &Rational) -> Self {
        let mut out = Self::zeros(self.rows, self.cols, self.model.clone());
        for (&(r, c), e) in &self.entries {
            out.set(r, c, e.scale(s));
        }
        out.self_adjoint = self.self_adjoint;
        out
    }

    /// Transpose with each entry conjugated.
    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows, self.model.clone());
        for (&(r, c), e) in &self.entries {
            out.entries.insert((c, r), e.conjugate(&self.model));
        }
        out.self_adjoint = self.self_adjoint;
        out
    }

    /// Sets the self-adjoint flag after checking `M = M*` exactly.
    pub fn into_self_adjoint(mut self) -> Result<Self> {
        if !self.is_square() || self.adjoint().entries != self.entries {
            return Err(Error::NotSelfAdjoint);
        }
        self.self_adjoint = true;
        Ok(self)
    }

    /// `Σ_j M_jj` as a single group-ring element.
    pub fn diagonal_sum(&self) -> RingElement {
        let mut out = RingElement::zero();
        for i in 0..self.rows.min(self.cols) {
            if let Some(e) = self.get(i, i) {
                out = out.add(e);
            }
        }
        out
    }

    pub fn first_nonzero(&self) -> Option<((usize, usize), &RingElement)> {
        self.entries.iter().next().map(|(k, e)| (*k, e))
    }

    pub fn to_doc(&self) -> RingMatrixDoc {
        RingMatrixDoc {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .map(|(&(r, c), e)| EntryDoc { r, c, elem: element_doc(e) })
                .collect(),
        }
    }

    pub fn from_doc(doc: &RingMatrixDoc, model: &GroupModel) -> Result<Self> {
        let mut m = Self::zeros(doc.rows, doc.cols, model.clone());
        for e in &doc.entries {
            if e.r >= doc.rows || e.c >= doc.cols {
                return Err(Error::Schema(format!("entry ({}, {}) outside {}×{}", e.r, e.c, doc.rows, doc.cols)));
            }
            let elem = element_from_doc(&e.elem, model)?;
            let merged = m.entry(e.r, e.c).add(&elem);
            m.set(e.r, e.c, merged);
        }
        Ok(m)
    }
}

/// `K = max(1 + ε₀, a · Σ_j max_i |B_ij|₁)` with `a` the row count; `K²`
/// bounds the operator norm of the Laplacian and of every quotient of it.
pub fn norm_bound_k(b: &RingMatrix) -> Rational {
    let mut sum = Rational::zero();
    for j in 0..b.cols() {
        let mut best = Rational::zero();
        for i in 0..b.rows() {
            if let Some(e) = b.get(i, j) {
                let n = e.l1_norm_exact();
                if n > best {
                    best = n;
                }
            }
        }
        sum += best;
    }
    let bound = int(b.rows() as i64) * sum;
    let floor = k_floor();
    if bound > floor {
        bound
    } else {
        floor
    }
}

/// `p(B)` by Horner's rule. The polynomial is scaled to integer coefficients
/// first so that integral matrices stay integral until the final division.
pub fn matrix_poly_apply(b: &RingMatrix, p: &Polynomial) -> Result<RingMatrix> {
    if !b.is_square() {
        return Err(Error::Shape("polynomial of a non-square matrix".into()));
    }
    let n = b.rows();
    let model = b.model().clone();
    let Some(deg) = p.coefficients().len().checked_sub(1) else {
        return Ok(RingMatrix::zeros(n, n, model));
    };
    // With B = B'/D and c_i = c'_i/E: D^deg·E·p(B) = Σ c'_i D^(deg-i) B'^i, all integral.
    let e = p.coefficients().iter().fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
    let d = b.entries.values().flat_map(|x| x.terms.values()).fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
    let bi: Vec<Vec<IntElement>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    b.get(i, j)
                        .map(|x| x.terms.iter().map(|(w, c)| (w.clone(), (c * BigRational::from_integer(d.clone())).to_integer())).collect())
                        .unwrap_or_default()
                })
                .collect()
        })
        .collect();
    let coef = |i: usize| -> BigInt {
        let c = &p.coefficients()[i] * BigRational::from_integer(e.clone());
        c.to_integer() * num_traits::pow(d.clone(), deg - i)
    };
    let mut acc: Vec<Vec<IntElement>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { int_constant(coef(deg)) } else { IntElement::default() }).collect())
        .collect();
    for i in (0..deg).rev() {
        acc = int_matmul(&acc, &bi, &model);
        let c = coef(i);
        if !c.is_zero() {
            for (r, row) in acc.iter_mut().enumerate() {
                int_add_term(&mut row[r], GroupWord::identity(), c.clone());
            }
        }
    }
    let denom = BigRational::from_integer(num_traits::pow(d, deg) * e);
    let mut out = RingMatrix::zeros(n, n, model);
    for (r, row) in acc.into_iter().enumerate() {
        for (c, x) in row.into_iter().enumerate() {
            let terms: BTreeMap<GroupWord, Rational> =
                x.into_iter().map(|(w, v)| (w, BigRational::from_integer(v) / &denom)).collect();
            out.set(r, c, RingElement { terms });
        }
    }
    out.self_adjoint = b.is_self_adjoint_flagged();
    Ok(out)
}

type IntElement = std::collections::HashMap<GroupWord, BigInt>;

fn int_constant(c: BigInt) -> IntElement {
    let mut x = IntElement::default();
    int_add_term(&mut x, GroupWord::identity(), c);
    x
}

fn int_add_term(x: &mut IntElement, w: GroupWord, c: BigInt) {
    if c.is_zero() {
        return;
    }
    match x.entry(w) {
        std::collections::hash_map::Entry::Occupied(mut e) => {
            *e.get_mut() += c;
            if e.get().is_zero() {
                e.remove();
            }
        }
        std::collections::hash_map::Entry::Vacant(e) => {
            e.insert(c);
        }
    }
}

fn int_matmul(a: &[Vec<IntElement>], b: &[Vec<IntElement>], model: &GroupModel) -> Vec<Vec<IntElement>> {
    let n = a.len();
    let m = b.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| {
            (0..m)
                .map(|k| {
                    let mut out = IntElement::default();
                    for (j, brow) in b.iter().enumerate() {
                        for (g, x) in &a[i][j] {
                            for (h, y) in &brow[k] {
                                int_add_term(&mut out, mul_unchecked(g, h, model), x * y);
                            }
                        }
                    }
                    out
                })
                .collect()
        })
        .collect()
}

/// `Tr_π p(B)`: the identity coefficient of `Σ_j p(B)_jj`.
pub fn vn_trace_pi(b: &RingMatrix, p: &Polynomial) -> Result<Rational> {
    if !b.model().decides_identity() {
        return Err(Error::UndecidableIdentity);
    }
    Ok(matrix_poly_apply(b, p)?.diagonal_sum().identity_coefficient())
}

/// Smallest 1-based level from which no non-identity word of `Σ_j p(B)_jj`
/// becomes trivial in any remaining level of `tower`. `None` when even the
/// last level kills one of them.
pub fn stabilization_level(b: &RingMatrix, p: &Polynomial, tower: &[QuotientSpec]) -> Result<Option<usize>> {
    let diag = matrix_poly_apply(b, p)?.diagonal_sum();
    stabilization_level_of(&diag, tower)
}

pub fn stabilization_level_of(diag: &RingElement, tower: &[QuotientSpec]) -> Result<Option<usize>> {
    let words: Vec<&GroupWord> = diag.terms().map(|(w, _)| w).filter(|w| !w.is_identity()).collect();
    let mut bad = Vec::with_capacity(tower.len());
    for q in tower {
        let mut killed = false;
        for w in &words {
            if q.is_trivial(w)? {
                killed = true;
                break;
            }
        }
        bad.push(killed);
    }
    if tower.is_empty() || *bad.last().unwrap() {
        return Ok(None);
    }
    let last_bad = bad.iter().rposition(|&b| b);
    Ok(Some(last_bad.map_or(1, |i| i + 2)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RingMatrixDoc {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<EntryDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryDoc {
    pub r: usize,
    pub c: usize,
    pub elem: Vec<TermDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermDoc {
    pub coef: [Num; 2],
    pub word: Vec<i32>,
}

/// A JSON integer, or a decimal string when it does not fit in `i64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Num {
    Int(i64),
    Big(String),
}

impl Num {
    fn from_bigint(n: &BigInt) -> Self {
        n.to_i64().map_or_else(|| Num::Big(n.to_string()), Num::Int)
    }

    fn to_bigint(&self) -> Result<BigInt> {
        match self {
            Num::Int(i) => Ok(BigInt::from(*i)),
            Num::Big(s) => s.parse().map_err(|_| Error::Schema(format!("`{s}` is not an integer"))),
        }
    }
}

pub fn element_doc(e: &RingElement) -> Vec<TermDoc> {
    e.terms()
        .map(|(w, c)| TermDoc { coef: [Num::from_bigint(c.numer()), Num::from_bigint(c.denom())], word: w.letters() })
        .collect()
}

pub fn element_from_doc(doc: &[TermDoc], model: &GroupModel) -> Result<RingElement> {
    let mut out = RingElement::zero();
    for t in doc {
        let den = t.coef[1].to_bigint()?;
        if den.is_zero() {
            return Err(Error::Schema("zero denominator".into()));
        }
        let c = BigRational::new(t.coef[0].to_bigint()?, den);
        out.add_term(GroupWord::from_letters(&t.word, model)?, c);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn circle_laplacian() -> RingMatrix {
        let z = GroupModel::free_abelian(1);
        let e = RingElement::from_int_terms(&[(2, &[]), (-1, &[1]), (-1, &[-1])], &z).unwrap();
        RingMatrix::from_rows(vec![vec![e]], z).unwrap().into_self_adjoint().unwrap()
    }

    #[test]
    fn products_expand() {
        let z = GroupModel::free_abelian(1);
        let u = RingElement::from_int_terms(&[(1, &[1]), (-1, &[])], &z).unwrap();
        let v = u.conjugate(&z);
        let expected = RingElement::from_int_terms(&[(2, &[]), (-1, &[1]), (-1, &[-1])], &z).unwrap();
        assert_eq!(ring_mul(&u, &v, &z), expected);
        assert_eq!(u.mul(&RingElement::one(), &z), u);

        let f2 = GroupModel::free(2);
        let a1 = RingElement::from_int_terms(&[(1, &[1]), (-1, &[])], &f2).unwrap();
        let b1 = RingElement::from_int_terms(&[(1, &[2]), (-1, &[])], &f2).unwrap();
        let ab = RingElement::from_int_terms(&[(1, &[1, 2]), (-1, &[1]), (-1, &[2]), (1, &[])], &f2).unwrap();
        assert_eq!(a1.mul(&b1, &f2), ab);
    }

    #[test]
    fn adjoints() {
        let z = GroupModel::free_abelian(1);
        let u = RingElement::from_int_terms(&[(1, &[1]), (-1, &[])], &z).unwrap();
        let m = RingMatrix::from_rows(vec![vec![u]], z.clone()).unwrap();
        let expected = RingElement::from_int_terms(&[(1, &[-1]), (-1, &[])], &z).unwrap();
        assert_eq!(m.adjoint().entry(0, 0), expected);
        let lap = circle_laplacian();
        assert_eq!(lap.adjoint(), lap);
    }

    #[test]
    fn l1_norms() {
        let z = GroupModel::free_abelian(1);
        assert_eq!(circle_laplacian().entry(0, 0).l1_norm(), 4.0);
        assert_eq!(RingElement::zero().l1_norm(), 0.0);
        let mut u = RingElement::monomial(rat(3, 2), GroupWord::from_letters(&[1], &z).unwrap());
        u.add_term(GroupWord::from_letters(&[1, 1], &z).unwrap(), rat(-1, 2));
        assert_eq!(l1_norm(&u), 2.0);
    }

    #[test]
    fn norm_bounds() {
        assert_eq!(norm_bound_k(&circle_laplacian()), int(4));
        let z = GroupModel::free_abelian(1);
        assert_eq!(norm_bound_k(&RingMatrix::zeros(1, 1, z)), k_floor());
        let f2 = GroupModel::free(2);
        let w = RingElement::from_int_terms(&[(4, &[]), (-1, &[1]), (-1, &[-1]), (-1, &[2]), (-1, &[-2])], &f2).unwrap();
        let b = RingMatrix::from_rows(vec![vec![w]], f2).unwrap();
        assert_eq!(norm_bound_k(&b), int(8));
    }

    #[test]
    fn polynomial_application() {
        let lap = circle_laplacian();
        let z = lap.model().clone();
        let sq = matrix_poly_apply(&lap, &Polynomial::monomial(2)).unwrap();
        let expected = RingElement::from_int_terms(
            &[(6, &[]), (-4, &[1]), (-4, &[-1]), (1, &[1, 1]), (1, &[-1, -1])],
            &z,
        )
        .unwrap();
        assert_eq!(sq.entry(0, 0), expected);
        assert_eq!(matrix_poly_apply(&lap, &Polynomial::constant(int(1))).unwrap(), RingMatrix::identity(1, z));
        assert_eq!(matrix_poly_apply(&lap, &Polynomial::monomial(1)).unwrap(), lap);
        let half = Polynomial::new(vec![rat(1, 3), rat(-1, 2)]);
        let m = matrix_poly_apply(&lap, &half).unwrap();
        assert_eq!(m.entry(0, 0).identity_coefficient(), rat(1, 3) - int(1));
    }

    #[test]
    fn traces() {
        let lap = circle_laplacian();
        assert_eq!(vn_trace_pi(&lap, &Polynomial::monomial(1)).unwrap(), int(2));
        assert_eq!(vn_trace_pi(&lap, &Polynomial::monomial(2)).unwrap(), int(6));
        assert_eq!(vn_trace_pi(&lap, &Polynomial::constant(int(1))).unwrap(), int(1));
        let bs = GroupModel::presented(2, vec![vec![-1, 2, 1, -2, -2]]).unwrap();
        let m = RingMatrix::identity(1, bs);
        assert!(matches!(vn_trace_pi(&m, &Polynomial::monomial(1)), Err(Error::UndecidableIdentity)));
    }

    #[test]
    fn stabilization() {
        let lap = circle_laplacian();
        let tower: Vec<QuotientSpec> =
            (1..=6).map(|n| QuotientSpec::mod_lattice(format!("Z/{n}"), vec![n]).unwrap()).collect();
        assert_eq!(stabilization_level(&lap, &Polynomial::monomial(1), &tower).unwrap(), Some(2));
        assert_eq!(stabilization_level(&lap, &Polynomial::constant(int(1)), &tower).unwrap(), Some(1));
        assert_eq!(stabilization_level(&lap, &Polynomial::monomial(2), &tower).unwrap(), Some(3));
        assert_eq!(stabilization_level(&lap, &Polynomial::monomial(2), &tower[..2]).unwrap(), None);
    }

    #[test]
    fn doc_round_trip() {
        let lap = circle_laplacian();
        let doc = lap.to_doc();
        let json = serde_json::to_string(&doc).unwrap();
        assert!(json.contains(r#"{"coef":[2,1],"word":[]}"#));
        let back: RingMatrixDoc = serde_json::from_str(&json).unwrap();
        let m = RingMatrix::from_doc(&back, lap.model()).unwrap();
        assert_eq!(m.entry(0, 0), lap.entry(0, 0));
    }

    fn element_strategy() -> impl Strategy<Value = Vec<(i64, Vec<i32>)>> {
        proptest::collection::vec(
            (-3i64..=3, proptest::collection::vec(prop_oneof![Just(1), Just(-1), Just(2), Just(-2)], 0..4)),
            0..4,
        )
    }

    fn build(terms: &[(i64, Vec<i32>)], m: &GroupModel) -> RingElement {
        let refs: Vec<(i64, &[i32])> = terms.iter().map(|(c, w)| (*c, w.as_slice())).collect();
        RingElement::from_int_terms(&refs, m).unwrap()
    }

    proptest! {
        #[test]
        fn adjoint_reverses_products(
            a in proptest::collection::vec(element_strategy(), 4),
            b in proptest::collection::vec(element_strategy(), 4),
        ) {
            let f2 = GroupModel::free(2);
            let ma = RingMatrix::from_rows(a.chunks(2).map(|r| r.iter().map(|t| build(t, &f2)).collect()).collect(), f2.clone()).unwrap();
            let mb = RingMatrix::from_rows(b.chunks(2).map(|r| r.iter().map(|t| build(t, &f2)).collect()).collect(), f2.clone()).unwrap();
            let lhs = ma.mul(&mb).unwrap().adjoint();
            let rhs = mb.adjoint().mul(&ma.adjoint()).unwrap();
            prop_assert_eq!(lhs, rhs);
            prop_assert_eq!(ma.adjoint().adjoint(), ma);
        }

        #[test]
        fn l1_submultiplicative(a in element_strategy(), b in element_strategy()) {
            let f2 = GroupModel::free(2);
            let (u, v) = (build(&a, &f2), build(&b, &f2));
            prop_assert!(u.mul(&v, &f2).l1_norm_exact() <= u.l1_norm_exact() * v.l1_norm_exact());
        }
    }
}
