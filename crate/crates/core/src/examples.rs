//! Built-in complexes with quotient towers and their known invariants.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::complex::{presentation_complex, ComplexDoc, EquivariantComplex, LoadOptions};
use crate::error::{Error, Result};
use crate::group::{GroupModel, GroupWord};
use crate::quotient::QuotientSpec;
use crate::ring::{RingElement, RingMatrix};

/// A closed-form or documented value for a built-in example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnownInvariant {
    pub quantity: String,
    pub value: String,
    pub note: String,
}

#[derive(Clone, Debug)]
pub struct NamedExample {
    pub name: &'static str,
    pub description: &'static str,
    pub complex: EquivariantComplex,
    pub default_tower: &'static str,
    /// Why each tower is nested with trivial intersection.
    pub tower_notes: BTreeMap<String, String>,
    pub known: Vec<KnownInvariant>,
}

pub const NAMES: [&str; 5] = ["circle", "torus", "wedge2", "bs12", "identity"];

fn known(quantity: &str, value: &str, note: &str) -> KnownInvariant {
    KnownInvariant { quantity: quantity.into(), value: value.into(), note: note.into() }
}

fn notes(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

fn cyclic_tower(ns: impl IntoIterator<Item = u64>) -> Result<Vec<QuotientSpec>> {
    ns.into_iter().map(|n| QuotientSpec::mod_lattice(format!("Z/{n}"), vec![n])).collect()
}

fn factorials(count: u64) -> Vec<u64> {
    (1..=count).scan(1u64, |acc, n| {
        *acc *= n;
        Some(*acc)
    }).collect()
}

/// `S¹` with `π = Z`: `d₁ = [t − 1]`.
pub fn example_circle() -> Result<NamedExample> {
    let model = GroupModel::free_abelian(1);
    let towers = BTreeMap::from([
        ("cyclic".to_string(), cyclic_tower(1..=12)?),
        ("factorial".to_string(), cyclic_tower(factorials(5))?),
        ("dyadic".to_string(), cyclic_tower((0..=9).map(|i| 1u64 << i))?),
    ]);
    let complex = presentation_complex("circle", model, &[], towers)?;
    Ok(NamedExample {
        name: "circle",
        description: "the circle, universal cover the real line",
        complex,
        default_tower: "factorial",
        tower_notes: notes(&[
            ("cyclic", "Z/n for n = 1..12; not nested, used for per-level closed forms"),
            ("factorial", "Γ_n = n!Z, nested since n!Z ⊇ (n+1)!Z, intersection trivial"),
            ("dyadic", "Γ_i = 2^i Z, nested with trivial intersection; deep enough to pass the stabilization level of high-degree polynomials"),
        ]),
        known: vec![
            known("b0", "0", "Z is infinite"),
            known("b1", "0", "F_n(0) = 1/n on Z/n"),
            known("logdet_1", "0", "∫ log(2 − 2cos θ) dθ/2π = 0; level value (2/n)·log n"),
            known("K", "4", "ℓ¹ norm of 2 − t − t⁻¹"),
            known("F_1(2)", "1/2", "arccos(1 − λ/2)/π"),
        ],
    })
}

/// `T²` with `π = Z²`, cells `(1, 2, 1)`.
pub fn example_torus() -> Result<NamedExample> {
    let model = GroupModel::free_abelian(2);
    let el = |terms: &[(i64, &[i32])]| RingElement::from_int_terms(terms, &model);
    let d1 = RingMatrix::from_rows(vec![vec![el(&[(1, &[1]), (-1, &[])])?, el(&[(1, &[2]), (-1, &[])])?]], model.clone())?;
    let d2 = RingMatrix::from_rows(
        vec![vec![el(&[(1, &[]), (-1, &[2])])?], vec![el(&[(1, &[1]), (-1, &[])])?]],
        model.clone(),
    )?;
    let square = [1u64, 2, 4, 8, 16]
        .iter()
        .map(|&n| QuotientSpec::mod_lattice(format!("(Z/{n})^2"), vec![n, n]))
        .collect::<Result<Vec<_>>>()?;
    let towers = BTreeMap::from([("square".to_string(), square)]);
    let complex = EquivariantComplex::new("torus", model, vec![1, 2, 1], vec![d1, d2], towers, LoadOptions::default())?;
    Ok(NamedExample {
        name: "torus",
        description: "the 2-torus, universal cover the plane",
        complex,
        default_tower: "square",
        tower_notes: notes(&[("square", "Γ_n = (nZ)² for n = 2^i, nested with trivial intersection")]),
        known: vec![
            known("b0", "0", ""),
            known("b1", "0", "F_n(0) = 2/n² on (Z/n)²"),
            known("b2", "0", "F_n(0) = 1/n²"),
            known("euler", "0", "1 − 2 + 1"),
        ],
    })
}

/// The wedge of two circles, `π = F₂`, cells `(1, 2)`.
pub fn example_wedge2() -> Result<NamedExample> {
    let model = GroupModel::free(2);
    let a = vec![vec![1, 2], vec![0, 1]];
    let b = vec![vec![1, 0], vec![2, 1]];
    let sl2 = [3u64, 4, 5]
        .iter()
        .map(|&m| QuotientSpec::mod_matrices(format!("<A,B> mod {m}"), m, &[a.clone(), b.clone()]))
        .collect::<Result<Vec<_>>>()?;
    let towers = BTreeMap::from([("sl2".to_string(), sl2)]);
    let complex = presentation_complex("wedge2", model, &[], towers)?;
    Ok(NamedExample {
        name: "wedge2",
        description: "wedge of two circles; free group on a, b",
        complex,
        default_tower: "sl2",
        tower_notes: notes(&[(
            "sl2",
            "a ↦ [[1,2],[0,1]], b ↦ [[1,0],[2,1]] generate a free subgroup of SL(2,Z) (Sanov); levels are its reductions mod m = 3, 4, 5. \
             Faithfulness is a modeling assumption, not machine-verified; the levels are not nested as a chain. \
             Both matrices are involutions mod 4, so the m = 4 level has order 4",
        )]),
        known: vec![
            known("b0", "0", ""),
            known("b1", "1", "χ = −1 gives b₁(Y_n) = |G| + 1, normalized 1 + 1/|G|"),
            known("orders", "24, 4, 120", "BFS closure counts for m = 3, 4, 5"),
            known("gap_0", "4 − 2√3 ≈ 0.536", "bottom of the spectrum of Δ₀ on F₂ (Kesten)"),
        ],
    })
}

/// Affine permutations of `Z/m`: `a ↦ (x ↦ 2x)`, `b ↦ (x ↦ x + 1)`.
pub fn affine_quotient(m: u64) -> Result<QuotientSpec> {
    if m.is_multiple_of(2) || m < 3 {
        return Err(Error::InvalidQuotient { name: format!("affine {m}"), reason: "m must be odd and at least 3".into() });
    }
    let a = (0..m).map(|x| ((2 * x) % m) as u32).collect();
    let b = (0..m).map(|x| ((x + 1) % m) as u32).collect();
    QuotientSpec::permutations(format!("Z/{m} ⋊ <2>"), vec![a, b])
}

/// Presentation complex of `BS(1,2) = <a, b | a⁻¹bab⁻²>`.
pub fn example_bs12() -> Result<NamedExample> {
    let relator = vec![-1, 2, 1, -2, -2];
    let model = GroupModel::presented(2, vec![relator])?;
    let rel = model.relators();
    let affine = [3u64, 5, 7, 9, 11, 13].iter().map(|&m| affine_quotient(m)).collect::<Result<Vec<_>>>()?;
    for q in &affine {
        if !q.is_trivial(&rel[0])? {
            return Err(Error::InvalidQuotient { name: q.name.clone(), reason: "relator survives".into() });
        }
    }
    let towers = BTreeMap::from([("affine".to_string(), affine)]);
    let complex = presentation_complex("bs12", model, &rel, towers)?;
    Ok(NamedExample {
        name: "bs12",
        description: "Baumslag–Solitar group BS(1,2), solvable and residually finite",
        complex,
        default_tower: "affine",
        tower_notes: notes(&[(
            "affine",
            "odd m = 3..13 acting on Z/m by b: x ↦ x + 1 and a: x ↦ 2x; order m·ord_m(2). \
             The relation holds in every level (checked when building); nesting and trivial intersection are not certified",
        )]),
        known: vec![
            known("b0", "0", "the group is infinite"),
            known("orders", "6, 20, 21, 54, 110, 156", "m·ord_m(2)"),
            known("b1, b2", "reported empirically", "no closed form asserted"),
        ],
    })
}

/// `Z` with `d₁ = [1]`: both Laplacians are the identity.
pub fn example_identity() -> Result<NamedExample> {
    let model = GroupModel::free_abelian(1);
    let d1 = RingMatrix::from_rows(vec![vec![RingElement::monomial(crate::ring::int(1), GroupWord::identity())]], model.clone())?;
    let towers = BTreeMap::from([("cyclic".to_string(), cyclic_tower(1..=6)?)]);
    let complex = EquivariantComplex::new("identity", model, vec![1, 1], vec![d1], towers, LoadOptions::default())?;
    Ok(NamedExample {
        name: "identity",
        description: "contractible complex whose Laplacians are the identity",
        complex,
        default_tower: "cyclic",
        tower_notes: notes(&[("cyclic", "Z/n for n = 1..6")]),
        known: vec![
            known("b0", "0", ""),
            known("b1", "0", ""),
            known("logdet", "0", "identity operator"),
            known("gap", "just below 1", "spectrum {1}"),
        ],
    })
}

pub fn example(name: &str) -> Result<NamedExample> {
    match name {
        "circle" => example_circle(),
        "torus" => example_torus(),
        "wedge2" => example_wedge2(),
        "bs12" => example_bs12(),
        "identity" => example_identity(),
        other => Err(Error::Unknown { kind: "example", name: other.into() }),
    }
}

/// `(name, description, default tower)` for every built-in example.
pub fn list() -> Vec<(&'static str, &'static str, &'static str)> {
    NAMES
        .iter()
        .filter_map(|n| example(n).ok())
        .map(|e| (e.name, e.description, e.default_tower))
        .collect()
}

/// The loadable JSON document of an example.
pub fn export(name: &str) -> Result<ComplexDoc> {
    Ok(example(name)?.complex.to_doc())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{assemble_laplacian, load_complex};
    use crate::finite::enumerate_quotient;
    use crate::ring::{int, norm_bound_k};

    #[test]
    fn all_examples_build_and_round_trip() {
        for name in NAMES {
            let e = example(name).unwrap();
            let doc = export(name).unwrap();
            let json = serde_json::to_string(&doc).unwrap();
            let back = load_complex(&serde_json::from_str(&json).unwrap(), LoadOptions::default()).unwrap();
            assert_eq!(back.cells(), e.complex.cells());
            assert!(e.complex.towers().contains_key(e.default_tower));
        }
        assert!(matches!(example("bs23"), Err(Error::Unknown { .. })));
        assert_eq!(list().len(), NAMES.len());
    }

    #[test]
    fn tower_orders() {
        let orders = |name: &str, tower: &str| -> Vec<usize> {
            let e = example(name).unwrap();
            e.complex.tower(tower).unwrap().iter().map(|q| enumerate_quotient(q).unwrap().order()).collect()
        };
        assert_eq!(orders("wedge2", "sl2"), vec![24, 4, 120]);
        assert_eq!(orders("bs12", "affine"), vec![6, 20, 21, 54, 110, 156]);
        assert_eq!(orders("circle", "factorial"), vec![1, 2, 6, 24, 120]);
        assert_eq!(orders("torus", "square"), vec![1, 4, 16, 64, 256]);
    }

    #[test]
    fn norm_bounds() {
        let c = example_circle().unwrap().complex;
        assert_eq!(norm_bound_k(&assemble_laplacian(&c, 1).unwrap()), int(4));
        let id = example_identity().unwrap().complex;
        assert_eq!(assemble_laplacian(&id, 0).unwrap(), RingMatrix::identity(1, GroupModel::free_abelian(1)).into_self_adjoint().unwrap());
        assert_eq!(c.euler_characteristic(), 0);
        assert_eq!(example_wedge2().unwrap().complex.euler_characteristic(), -1);
        assert_eq!(example_torus().unwrap().complex.euler_characteristic(), 0);
    }

    #[test]
    fn affine_rejects_even() {
        assert!(affine_quotient(4).is_err());
    }
}
