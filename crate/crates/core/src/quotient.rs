//! Quotient homomorphisms `π → π/Γ`, realized on generators.
//!
//! Images act on the right: the word `x₁x₂` maps to "apply `img(x₁)`, then
//! `img(x₂)`". For permutations this means `(p·q)[i] = q[p[i]]`; for matrices
//! it is the ordinary product `P·Q`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{GroupModel, GroupWord};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum QuotientKind {
    /// Generator images as permutations of `0..n`.
    Permutations { images: Vec<Vec<u32>> },
    /// Generator images as invertible square matrices over `Z/m`.
    ModMatrices { modulus: u64, dim: usize, images: Vec<Vec<u64>> },
    /// Exponent sums reduced modulo `m_i`, one modulus per generator.
    ModLattice { moduli: Vec<u64> },
    /// `π ↠ Z^d` through an exponent-sum matrix (d rows, one column per generator).
    Abelianization { matrix: Vec<Vec<i64>> },
}

/// A named quotient map. Construct through [`QuotientSpec::new`] (or serde),
/// which checks the shape of the images.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawQuotientSpec", into = "RawQuotientSpec")]
pub struct QuotientSpec {
    pub name: String,
    kind: QuotientKind,
}

/// Canonical, hashable form of a quotient element.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QuotientElement {
    /// Image array of a permutation.
    Perm(Vec<u32>),
    /// Row-major residues of a matrix, or a residue vector.
    Residues(Vec<u64>),
    /// Point of `Z^d`.
    Lattice(Vec<i64>),
}

impl QuotientSpec {
    pub fn new(name: impl Into<String>, kind: QuotientKind) -> Result<Self> {
        let name = name.into();
        let bad = |reason: String| Error::InvalidQuotient { name: name.clone(), reason };
        match &kind {
            QuotientKind::Permutations { images } => {
                let n = images.first().map_or(1, |p| p.len());
                for p in images {
                    if p.len() != n {
                        return Err(bad("permutations of different sizes".into()));
                    }
                    let mut seen = vec![false; n];
                    for &x in p {
                        if x as usize >= n || seen[x as usize] {
                            return Err(bad(format!("{p:?} is not a permutation")));
                        }
                        seen[x as usize] = true;
                    }
                }
            }
            QuotientKind::ModMatrices { modulus, dim, images } => {
                if *modulus == 0 || *dim == 0 {
                    return Err(bad("modulus and dimension must be positive".into()));
                }
                for m in images {
                    if m.len() != dim * dim {
                        return Err(bad("matrix image with wrong number of entries".into()));
                    }
                    let det = determinant_mod(m, *dim, *modulus);
                    if num_integer::gcd(det, *modulus) != 1 && *modulus != 1 {
                        return Err(bad(format!("matrix {m:?} is not invertible mod {modulus}")));
                    }
                }
            }
            QuotientKind::ModLattice { moduli } => {
                if moduli.contains(&0) {
                    return Err(bad("moduli must be positive".into()));
                }
            }
            QuotientKind::Abelianization { matrix } => {
                let cols = matrix.first().map_or(0, |r| r.len());
                if matrix.iter().any(|r| r.len() != cols) {
                    return Err(bad("ragged exponent-sum matrix".into()));
                }
            }
        }
        let kind = match kind {
            QuotientKind::ModMatrices { modulus, dim, images } => QuotientKind::ModMatrices {
                modulus,
                dim,
                images: images.into_iter().map(|m| m.into_iter().map(|x| x % modulus).collect()).collect(),
            },
            k => k,
        };
        Ok(Self { name, kind })
    }

    /// `Z^d → Z/m₁ × … × Z/m_d` on exponent sums.
    pub fn mod_lattice(name: impl Into<String>, moduli: Vec<u64>) -> Result<Self> {
        Self::new(name, QuotientKind::ModLattice { moduli })
    }

    pub fn permutations(name: impl Into<String>, images: Vec<Vec<u32>>) -> Result<Self> {
        Self::new(name, QuotientKind::Permutations { images })
    }

    /// 2×2 (or larger) matrices over `Z/m`; images given as nested rows with
    /// possibly negative entries.
    pub fn mod_matrices(name: impl Into<String>, modulus: u64, images: &[Vec<Vec<i64>>]) -> Result<Self> {
        let dim = images.first().map_or(1, |m| m.len());
        let mut flat = Vec::with_capacity(images.len());
        for m in images {
            if m.len() != dim || m.iter().any(|r| r.len() != dim) {
                return Err(Error::InvalidQuotient { name: "matrices".into(), reason: "non-square image".into() });
            }
            flat.push(m.iter().flatten().map(|&x| x.rem_euclid(modulus as i64) as u64).collect());
        }
        Self::new(name, QuotientKind::ModMatrices { modulus, dim, images: flat })
    }

    /// Full abelianization `π ↠ Z^rank`.
    pub fn abelianization(name: impl Into<String>, rank: usize) -> Result<Self> {
        let matrix = (0..rank).map(|i| (0..rank).map(|j| i64::from(i == j)).collect()).collect();
        Self::new(name, QuotientKind::Abelianization { matrix })
    }

    /// The quotient onto the trivial group.
    pub fn trivial(rank: usize) -> Self {
        Self { name: "trivial".into(), kind: QuotientKind::Permutations { images: vec![vec![0]; rank] } }
    }

    pub fn kind(&self) -> &QuotientKind {
        &self.kind
    }

    pub fn is_finite(&self) -> bool {
        !matches!(self.kind, QuotientKind::Abelianization { .. })
    }

    /// Checks that the images cover the model's generators and kill its
    /// relators.
    pub fn validate_for(&self, model: &GroupModel) -> Result<()> {
        let n = self.generator_count();
        if let Some(n) = n {
            if n != model.rank() {
                return Err(Error::InvalidQuotient {
                    name: self.name.clone(),
                    reason: format!("{n} generator images for a rank-{} model", model.rank()),
                });
            }
        }
        for r in model.relators() {
            if !self.is_trivial(&r)? {
                return Err(Error::InvalidQuotient {
                    name: self.name.clone(),
                    reason: format!("relator {r} has nontrivial image"),
                });
            }
        }
        Ok(())
    }

    /// Number of generator images (`None` for an empty abelianization matrix).
    pub fn generator_count(&self) -> Option<usize> {
        match &self.kind {
            QuotientKind::Permutations { images } => Some(images.len()),
            QuotientKind::ModMatrices { images, .. } => Some(images.len()),
            QuotientKind::ModLattice { moduli } => Some(moduli.len()),
            QuotientKind::Abelianization { matrix } => matrix.first().map(|r| r.len()),
        }
    }

    pub fn identity(&self) -> QuotientElement {
        match &self.kind {
            QuotientKind::Permutations { images } => {
                let n = images.first().map_or(1, |p| p.len());
                QuotientElement::Perm((0..n as u32).collect())
            }
            QuotientKind::ModMatrices { modulus, dim, .. } => {
                let mut m = vec![0; dim * dim];
                for i in 0..*dim {
                    m[i * dim + i] = 1 % modulus;
                }
                QuotientElement::Residues(m)
            }
            QuotientKind::ModLattice { moduli } => QuotientElement::Residues(vec![0; moduli.len()]),
            QuotientKind::Abelianization { matrix } => QuotientElement::Lattice(vec![0; matrix.len()]),
        }
    }

    /// Image of generator `g` (0-based) raised to `exp`.
    pub fn generator_power(&self, g: usize, exp: i64) -> Result<QuotientElement> {
        let count = self.generator_count().unwrap_or(0);
        if g >= count {
            return Err(Error::GeneratorOutOfRange { letter: g as i64 + 1, rank: count });
        }
        match &self.kind {
            QuotientKind::ModLattice { moduli } => {
                let mut v = vec![0; moduli.len()];
                v[g] = exp.rem_euclid(moduli[g] as i64) as u64;
                Ok(QuotientElement::Residues(v))
            }
            QuotientKind::Abelianization { matrix } => Ok(QuotientElement::Lattice(
                matrix
                    .iter()
                    .map(|row| row[g].checked_mul(exp).ok_or(Error::Overflow("abelianization image")))
                    .collect::<Result<_>>()?,
            )),
            QuotientKind::Permutations { images } => {
                Ok(self.power(&QuotientElement::Perm(images[g].clone()), exp))
            }
            QuotientKind::ModMatrices { images, .. } => {
                Ok(self.power(&QuotientElement::Residues(images[g].clone()), exp))
            }
        }
    }

    fn power(&self, base: &QuotientElement, exp: i64) -> QuotientElement {
        let mut b = if exp < 0 { self.inverse(base) } else { base.clone() };
        let mut e = exp.unsigned_abs();
        let mut acc = self.identity();
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(&acc, &b);
            }
            e >>= 1;
            if e > 0 {
                b = self.mul(&b, &b);
            }
        }
        acc
    }

    /// Group law of the quotient.
    pub fn mul(&self, a: &QuotientElement, b: &QuotientElement) -> QuotientElement {
        use QuotientElement::*;
        match (&self.kind, a, b) {
            (QuotientKind::Permutations { .. }, Perm(p), Perm(q)) => {
                Perm(p.iter().map(|&i| q[i as usize]).collect())
            }
            (QuotientKind::ModMatrices { modulus, dim, .. }, Residues(p), Residues(q)) => {
                Residues(mat_mul_mod(p, q, *dim, *modulus))
            }
            (QuotientKind::ModLattice { moduli }, Residues(p), Residues(q)) => Residues(
                p.iter().zip(q).zip(moduli).map(|((x, y), m)| ((*x as u128 + *y as u128) % *m as u128) as u64).collect(),
            ),
            (QuotientKind::Abelianization { .. }, Lattice(p), Lattice(q)) => {
                Lattice(p.iter().zip(q).map(|(x, y)| x.saturating_add(*y)).collect())
            }
            _ => panic!("quotient element does not belong to `{}`", self.name),
        }
    }

    pub fn inverse(&self, a: &QuotientElement) -> QuotientElement {
        use QuotientElement::*;
        match (&self.kind, a) {
            (QuotientKind::Permutations { .. }, Perm(p)) => {
                let mut inv = vec![0; p.len()];
                for (i, &x) in p.iter().enumerate() {
                    inv[x as usize] = i as u32;
                }
                Perm(inv)
            }
            (QuotientKind::ModMatrices { modulus, dim, .. }, Residues(p)) => Residues(mat_inv_mod(p, *dim, *modulus)),
            (QuotientKind::ModLattice { moduli }, Residues(p)) => {
                Residues(p.iter().zip(moduli).map(|(x, m)| (m - x % m) % m).collect())
            }
            (QuotientKind::Abelianization { .. }, Lattice(p)) => Lattice(p.iter().map(|x| -x).collect()),
            _ => panic!("quotient element does not belong to `{}`", self.name),
        }
    }

    /// Homomorphic image of a word: the ordered product of generator images.
    pub fn image(&self, w: &GroupWord) -> Result<QuotientElement> {
        if let QuotientKind::Abelianization { matrix } = &self.kind {
            let cols = matrix.first().map_or(0, |r| r.len());
            let sums = w.exponent_sums(cols);
            if w.syllables().iter().any(|(g, _)| *g as usize >= cols) {
                return Err(Error::GeneratorOutOfRange { letter: cols as i64 + 1, rank: cols });
            }
            let mut out = Vec::with_capacity(matrix.len());
            for row in matrix {
                let mut acc: i64 = 0;
                for (c, s) in row.iter().zip(&sums) {
                    acc = c
                        .checked_mul(*s)
                        .and_then(|v| acc.checked_add(v))
                        .ok_or(Error::Overflow("abelianization image"))?;
                }
                out.push(acc);
            }
            return Ok(QuotientElement::Lattice(out));
        }
        let mut acc = self.identity();
        for &(g, e) in w.syllables() {
            let p = self.generator_power(g as usize, e)?;
            acc = self.mul(&acc, &p);
        }
        Ok(acc)
    }

    /// `w ∈ Γ` exactly when its image is the quotient identity.
    pub fn is_trivial(&self, w: &GroupWord) -> Result<bool> {
        Ok(self.image(w)? == self.identity())
    }
}

pub fn quotient_image(w: &GroupWord, q: &QuotientSpec) -> Result<QuotientElement> {
    q.image(w)
}

pub fn is_trivial_in_quotient(w: &GroupWord, q: &QuotientSpec) -> Result<bool> {
    q.is_trivial(w)
}

fn mat_mul_mod(p: &[u64], q: &[u64], n: usize, m: u64) -> Vec<u64> {
    let mut out = vec![0u64; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc: u128 = 0;
            for k in 0..n {
                acc += p[i * n + k] as u128 * q[k * n + j] as u128;
            }
            out[i * n + j] = (acc % m as u128) as u64;
        }
    }
    out
}

fn minor(a: &[u64], n: usize, row: usize, col: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity((n - 1) * (n - 1));
    for i in (0..n).filter(|&i| i != row) {
        for j in (0..n).filter(|&j| j != col) {
            out.push(a[i * n + j]);
        }
    }
    out
}

/// Cofactor expansion; image matrices are tiny.
fn determinant_mod(a: &[u64], n: usize, m: u64) -> u64 {
    if n == 1 {
        return a[0] % m;
    }
    let mut acc: u128 = 0;
    let m128 = m as u128;
    for j in 0..n {
        let term = a[j] as u128 * determinant_mod(&minor(a, n, 0, j), n - 1, m) as u128 % m128;
        acc = if j % 2 == 0 { (acc + term) % m128 } else { (acc + m128 - term) % m128 };
    }
    acc as u64
}

fn inv_mod(x: u64, m: u64) -> u64 {
    let (g, s, _) = ext_gcd(x as i128, m as i128);
    debug_assert_eq!(g, 1);
    s.rem_euclid(m as i128) as u64
}

fn ext_gcd(a: i128, b: i128) -> (i128, i128, i128) {
    if b == 0 {
        (a, 1, 0)
    } else {
        let (g, x, y) = ext_gcd(b, a % b);
        (g, y, x - (a / b) * y)
    }
}

fn mat_inv_mod(a: &[u64], n: usize, m: u64) -> Vec<u64> {
    if m == 1 {
        return vec![0; n * n];
    }
    let det_inv = inv_mod(determinant_mod(a, n, m), m) as u128;
    let mut out = vec![0u64; n * n];
    let m128 = m as u128;
    for i in 0..n {
        for j in 0..n {
            let cof = if n == 1 { 1 } else { determinant_mod(&minor(a, n, j, i), n - 1, m) };
            let signed = if (i + j) % 2 == 0 { cof as u128 } else { (m128 - cof as u128) % m128 };
            out[i * n + j] = (signed * det_inv % m128) as u64;
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
struct RawQuotientSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    modulus: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    images: Option<RawImages>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    moduli: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrix: Option<Vec<Vec<i64>>>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawImages {
    Permutations(Vec<Vec<u32>>),
    Matrices(Vec<Vec<Vec<i64>>>),
}

impl TryFrom<RawQuotientSpec> for QuotientSpec {
    type Error = Error;

    fn try_from(raw: RawQuotientSpec) -> Result<Self> {
        let name = raw.name.unwrap_or_else(|| raw.kind.clone());
        let label = name.clone();
        let missing = |field: &str| Error::Schema(format!("quotient `{label}` needs `{field}`"));
        match raw.kind.as_str() {
            "finite_images" => match raw.images.ok_or_else(|| missing("images"))? {
                RawImages::Permutations(images) if raw.modulus.is_none() => Self::permutations(name, images),
                RawImages::Permutations(images) => {
                    // scalar (1×1) matrices written as plain lists
                    let mats: Vec<Vec<Vec<i64>>> =
                        images.into_iter().map(|r| vec![r.into_iter().map(i64::from).collect()]).collect();
                    Self::mod_matrices(name, raw.modulus.unwrap(), &mats)
                }
                RawImages::Matrices(mats) => {
                    let m = raw.modulus.ok_or_else(|| missing("modulus"))?;
                    Self::mod_matrices(name, m, &mats)
                }
            },
            "mod_lattice" => Self::mod_lattice(name, raw.moduli.ok_or_else(|| missing("moduli"))?),
            "free_abelianization" => match raw.matrix {
                Some(matrix) => Self::new(name, QuotientKind::Abelianization { matrix }),
                None => Err(missing("matrix")),
            },
            other => Err(Error::Schema(format!("unknown quotient kind `{other}`"))),
        }
    }
}

impl From<QuotientSpec> for RawQuotientSpec {
    fn from(q: QuotientSpec) -> Self {
        let mut raw = RawQuotientSpec {
            name: Some(q.name),
            kind: String::new(),
            modulus: None,
            images: None,
            moduli: None,
            matrix: None,
        };
        match q.kind {
            QuotientKind::Permutations { images } => {
                raw.kind = "finite_images".into();
                raw.images = Some(RawImages::Permutations(images));
            }
            QuotientKind::ModMatrices { modulus, dim, images } => {
                raw.kind = "finite_images".into();
                raw.modulus = Some(modulus);
                raw.images = Some(RawImages::Matrices(
                    images
                        .iter()
                        .map(|m| m.chunks(dim).map(|r| r.iter().map(|&x| x as i64).collect()).collect())
                        .collect(),
                ));
            }
            QuotientKind::ModLattice { moduli } => {
                raw.kind = "mod_lattice".into();
                raw.moduli = Some(moduli);
            }
            QuotientKind::Abelianization { matrix } => {
                raw.kind = "free_abelianization".into();
                raw.matrix = Some(matrix);
            }
        }
        raw
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sl2_mod(m: u64) -> QuotientSpec {
        QuotientSpec::mod_matrices("sl2", m, &[vec![vec![1, 2], vec![0, 1]], vec![vec![1, 0], vec![2, 1]]]).unwrap()
    }

    #[test]
    fn cyclic_residue() {
        let z = GroupModel::free_abelian(1);
        let q = QuotientSpec::mod_lattice("z5", vec![5]).unwrap();
        let t7 = GroupWord::from_exponents(&[7]);
        assert_eq!(q.image(&t7).unwrap(), QuotientElement::Residues(vec![2]));
        assert!(q.is_trivial(&GroupWord::from_exponents(&[5])).unwrap());
        assert!(!q.is_trivial(&GroupWord::from_letters(&[1], &z).unwrap()).unwrap());
    }

    #[test]
    fn matrix_image_mod_3() {
        let f2 = GroupModel::free(2);
        let q = sl2_mod(3);
        let a2 = GroupWord::from_letters(&[1, 1], &f2).unwrap();
        // [[1,2],[0,1]]² = [[1,4],[0,1]] ≡ [[1,1],[0,1]] mod 3
        assert_eq!(q.image(&a2).unwrap(), QuotientElement::Residues(vec![1, 1, 0, 1]));
        let ainv = GroupWord::from_letters(&[-1], &f2).unwrap();
        assert_eq!(q.image(&ainv).unwrap(), QuotientElement::Residues(vec![1, 1, 0, 1]));
    }

    #[test]
    fn trivial_quotient_kills_everything() {
        let f2 = GroupModel::free(2);
        let q = QuotientSpec::trivial(2);
        let w = GroupWord::from_letters(&[1, 2, -1, 2, 2], &f2).unwrap();
        assert!(q.is_trivial(&w).unwrap());
    }

    #[test]
    fn abelianization_kills_commutator() {
        let f2 = GroupModel::free(2);
        let q = QuotientSpec::abelianization("ab", 2).unwrap();
        let c = GroupWord::from_letters(&[1, 2, -1, -2], &f2).unwrap();
        assert!(is_trivial_in_quotient(&c, &q).unwrap());
        let a = GroupWord::from_letters(&[1, 1, 2], &f2).unwrap();
        assert_eq!(quotient_image(&a, &q).unwrap(), QuotientElement::Lattice(vec![2, 1]));
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(QuotientSpec::permutations("p", vec![vec![0, 0]]).is_err());
        assert!(QuotientSpec::mod_matrices("m", 4, &[vec![vec![2, 0], vec![0, 1]]]).is_err());
        let f2 = GroupModel::free(2);
        assert!(QuotientSpec::mod_lattice("l", vec![3]).unwrap().validate_for(&f2).is_err());
    }

    #[test]
    fn relator_check() {
        // BS(1,2): a⁻¹ b a = b², a ↦ ×2, b ↦ +1 on Z/7
        let m = GroupModel::presented(2, vec![vec![-1, 2, 1, -2, -2]]).unwrap();
        let a: Vec<u32> = (0..7).map(|x| (2 * x) % 7).collect();
        let b: Vec<u32> = (0..7).map(|x| (x + 1) % 7).collect();
        let q = QuotientSpec::permutations("bs7", vec![a.clone(), b.clone()]).unwrap();
        q.validate_for(&m).unwrap();
        let wrong = QuotientSpec::permutations("swap", vec![b, a]).unwrap();
        assert!(wrong.validate_for(&m).is_err());
    }

    #[test]
    fn json_schema() {
        let q: QuotientSpec = serde_json::from_str(
            r#"{"kind":"finite_images","modulus":3,"images":[[[1,2],[0,1]],[[1,0],[2,1]]]}"#,
        )
        .unwrap();
        assert_eq!(q, QuotientSpec { name: "finite_images".into(), ..sl2_mod(3) });
        let p: QuotientSpec = serde_json::from_str(r#"{"kind":"finite_images","images":[[1,2,0]]}"#).unwrap();
        assert!(matches!(p.kind(), QuotientKind::Permutations { .. }));
        let l: QuotientSpec = serde_json::from_str(r#"{"kind":"mod_lattice","moduli":[4,4]}"#).unwrap();
        let back: QuotientSpec = serde_json::from_str(&serde_json::to_string(&l).unwrap()).unwrap();
        assert_eq!(back, l);
        assert!(serde_json::from_str::<QuotientSpec>(r#"{"kind":"todd_coxeter"}"#).is_err());
    }

    proptest! {
        #[test]
        fn image_is_homomorphism(
            x in proptest::collection::vec(prop_oneof![Just(1), Just(-1), Just(2), Just(-2)], 0..10),
            y in proptest::collection::vec(prop_oneof![Just(1), Just(-1), Just(2), Just(-2)], 0..10),
            m in 2u64..9,
        ) {
            let f2 = GroupModel::free(2);
            let q = sl2_mod(m);
            let (u, v) = (GroupWord::from_letters(&x, &f2).unwrap(), GroupWord::from_letters(&y, &f2).unwrap());
            let uv = crate::group::word_mul(&u, &v, &f2).unwrap();
            prop_assert_eq!(q.image(&uv).unwrap(), q.mul(&q.image(&u).unwrap(), &q.image(&v).unwrap()));
        }
    }
}
