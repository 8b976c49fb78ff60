//! Finite free `Z[π]` cochain complexes and their combinatorial Laplacians.
//!
//! Boundary maps `d_j : C_j → C_{j-1}` are stored as `a_{j-1} × a_j`
//! matrices over the group ring; the cochain Laplacian is
//! `Δ_j = d_j* d_j + d_{j+1} d_{j+1}*`.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{mul_unchecked, GroupModel, GroupWord, ModelKind};
use crate::quotient::{QuotientElement, QuotientSpec};
use crate::ring::{int, Rational, RingElement, RingMatrix, RingMatrixDoc};

#[derive(Clone, Debug)]
pub struct EquivariantComplex {
    pub name: String,
    model: GroupModel,
    cells: Vec<usize>,
    boundaries: Vec<RingMatrix>,
    towers: BTreeMap<String, Vec<QuotientSpec>>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct LoadOptions {
    /// Require every boundary column of `d_j` to have exactly `j + 1` terms,
    /// each with coefficient ±1.
    pub strict_simplicial: bool,
}

/// The JSON document consumed by [`load_complex`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub generators: usize,
    pub model: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub relators: Vec<Vec<i32>>,
    pub cells: Vec<usize>,
    pub boundaries: Vec<RingMatrixDoc>,
    #[serde(default)]
    pub towers: BTreeMap<String, Vec<QuotientSpec>>,
}

impl EquivariantComplex {
    /// Validating constructor.
    pub fn new(
        name: impl Into<String>,
        model: GroupModel,
        cells: Vec<usize>,
        boundaries: Vec<RingMatrix>,
        towers: BTreeMap<String, Vec<QuotientSpec>>,
        opts: LoadOptions,
    ) -> Result<Self> {
        let c = Self { name: name.into(), model, cells, boundaries, towers };
        c.validate(opts)?;
        Ok(c)
    }

    pub fn model(&self) -> &GroupModel {
        &self.model
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    /// Top dimension `N`.
    pub fn dimension(&self) -> usize {
        self.cells.len().saturating_sub(1)
    }

    /// `d_j` for `1 ≤ j ≤ N`.
    pub fn boundary(&self, j: usize) -> Option<&RingMatrix> {
        j.checked_sub(1).and_then(|i| self.boundaries.get(i))
    }

    pub fn towers(&self) -> &BTreeMap<String, Vec<QuotientSpec>> {
        &self.towers
    }

    pub fn tower(&self, name: &str) -> Result<&[QuotientSpec]> {
        self.towers
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Unknown { kind: "tower", name: name.into() })
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.cells
            .iter()
            .enumerate()
            .map(|(j, &a)| if j % 2 == 0 { a as i64 } else { -(a as i64) })
            .sum()
    }

    fn validate(&self, opts: LoadOptions) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::Schema("a complex needs at least one cell dimension".into()));
        }
        if self.boundaries.len() != self.cells.len() - 1 {
            return Err(Error::Schema(format!(
                "{} cell dimensions need {} boundary matrices, got {}",
                self.cells.len(),
                self.cells.len() - 1,
                self.boundaries.len()
            )));
        }
        for (i, d) in self.boundaries.iter().enumerate() {
            let j = i + 1;
            if d.model() != &self.model {
                return Err(Error::ModelMismatch);
            }
            if d.rows() != self.cells[j - 1] || d.cols() != self.cells[j] {
                return Err(Error::Schema(format!(
                    "d_{j} is {}×{}, expected {}×{}",
                    d.rows(),
                    d.cols(),
                    self.cells[j - 1],
                    self.cells[j]
                )));
            }
            if !d.is_integral() {
                return Err(Error::NonIntegral(format!("boundary d_{j}")));
            }
            if opts.strict_simplicial {
                check_simplicial(d, j)?;
            }
        }
        for q in self.towers.values().flatten() {
            q.validate_for(&self.model)?;
        }
        for j in 2..self.cells.len() {
            let prod = self.boundaries[j - 2].mul(&self.boundaries[j - 1])?;
            self.check_vanishes(&prod, j)?;
        }
        Ok(())
    }

    /// Exact vanishing for models with a decidable identity; for presented
    /// models, vanishing of the image in `Z[G]` for every finite tower level.
    fn check_vanishes(&self, prod: &RingMatrix, j: usize) -> Result<()> {
        if self.model.decides_identity() {
            if let Some(((row, col), e)) = prod.first_nonzero() {
                return Err(Error::ChainCondition { j, row, col, residual: e.to_string() });
            }
            return Ok(());
        }
        let finite: Vec<&QuotientSpec> = self.towers.values().flatten().filter(|q| q.is_finite()).collect();
        if finite.is_empty() && !prod.is_zero() {
            return Err(Error::Schema(
                "chain condition of a presented model can only be checked inside finite quotients; none supplied".into(),
            ));
        }
        for q in finite {
            for (&(row, col), e) in prod.entries() {
                let mut images: BTreeMap<QuotientElement, Rational> = BTreeMap::new();
                for (w, c) in e.terms() {
                    *images.entry(q.image(w)?).or_insert_with(Rational::zero) += c;
                }
                if images.values().any(|c| !c.is_zero()) {
                    return Err(Error::ChainCondition {
                        j,
                        row,
                        col,
                        residual: format!("{e} (nonzero in quotient `{}`)", q.name),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn to_doc(&self) -> ComplexDoc {
        let (model, relators) = match self.model.kind() {
            ModelKind::Free => ("free", Vec::new()),
            ModelKind::FreeAbelian => ("free_abelian", Vec::new()),
            ModelKind::Presented { relators } => ("presented", relators.clone()),
        };
        ComplexDoc {
            name: Some(self.name.clone()),
            generators: self.model.rank(),
            model: model.into(),
            relators,
            cells: self.cells.clone(),
            boundaries: self.boundaries.iter().map(RingMatrix::to_doc).collect(),
            towers: self.towers.clone(),
        }
    }
}

fn check_simplicial(d: &RingMatrix, j: usize) -> Result<()> {
    for c in 0..d.cols() {
        let mut count = 0;
        for r in 0..d.rows() {
            if let Some(e) = d.get(r, c) {
                for (_, coef) in e.terms() {
                    if coef.abs() != int(1) {
                        return Err(Error::Schema(format!("d_{j} column {c}: coefficient {coef} is not ±1")));
                    }
                    count += 1;
                }
            }
        }
        if count != j + 1 {
            return Err(Error::Schema(format!("d_{j} column {c} has {count} faces, a {j}-simplex has {}", j + 1)));
        }
    }
    Ok(())
}

pub fn parse_model(kind: &str, rank: usize, relators: Vec<Vec<i32>>) -> Result<GroupModel> {
    match kind {
        "free" => Ok(GroupModel::free(rank)),
        "free_abelian" => Ok(GroupModel::free_abelian(rank)),
        "presented" | "presented_by_quotients" => GroupModel::presented(rank, relators),
        other => Err(Error::Schema(format!("unknown model `{other}`"))),
    }
}

pub fn load_complex(doc: &ComplexDoc, opts: LoadOptions) -> Result<EquivariantComplex> {
    let model = parse_model(&doc.model, doc.generators, doc.relators.clone())?;
    let boundaries = doc
        .boundaries
        .iter()
        .map(|b| RingMatrix::from_doc(b, &model))
        .collect::<Result<Vec<_>>>()?;
    EquivariantComplex::new(
        doc.name.clone().unwrap_or_else(|| "complex".into()),
        model,
        doc.cells.clone(),
        boundaries,
        doc.towers.clone(),
        opts,
    )
}

pub fn load_complex_json(s: &str, opts: LoadOptions) -> Result<EquivariantComplex> {
    let doc: ComplexDoc = serde_json::from_str(s)?;
    load_complex(&doc, opts)
}

/// `Δ_j = d_j* d_j + d_{j+1} d_{j+1}*`, flagged self-adjoint after an exact check.
pub fn assemble_laplacian(c: &EquivariantComplex, j: usize) -> Result<RingMatrix> {
    if j > c.dimension() {
        return Err(Error::DimensionOutOfRange { j, max: c.dimension() });
    }
    let a = c.cells[j];
    let mut lap = RingMatrix::zeros(a, a, c.model.clone());
    if let Some(d) = c.boundary(j) {
        lap = lap.add(&d.adjoint().mul(d)?)?;
    }
    if let Some(d) = c.boundary(j + 1) {
        lap = lap.add(&d.mul(&d.adjoint())?)?;
    }
    lap.into_self_adjoint()
}

/// Right Fox derivative: the unique `∂'_x w` with `w − 1 = Σ_x (x − 1)·∂'_x w`.
pub fn right_fox_derivative(w: &GroupWord, generator: usize, model: &GroupModel) -> RingElement {
    let letters = w.letters();
    let mut out = RingElement::zero();
    let gen = generator as i32 + 1;
    for (m, &l) in letters.iter().enumerate() {
        if l.abs() != gen {
            continue;
        }
        let suffix = GroupWord::from_letters(&letters[m + 1..], model).expect("letters of a valid word");
        if l > 0 {
            out.add_term(suffix, Rational::one());
        } else {
            let x_inv = GroupWord::from_letters(&[-gen], model).expect("valid generator");
            out.add_term(mul_unchecked(&x_inv, &suffix, model), -Rational::one());
        }
    }
    out
}

/// The presentation complex: one 0-cell, a 1-cell per generator and a
/// 2-cell per relator, with `d₁ = (x_i − 1)` and `d₂` the right Fox
/// derivatives of the relators.
pub fn presentation_complex(
    name: &str,
    model: GroupModel,
    relators: &[GroupWord],
    towers: BTreeMap<String, Vec<QuotientSpec>>,
) -> Result<EquivariantComplex> {
    let r = model.rank();
    let mut d1 = RingMatrix::zeros(1, r, model.clone());
    for i in 0..r {
        let mut e = RingElement::monomial(int(1), model.generator(i)?);
        e.add_term(GroupWord::identity(), int(-1));
        d1.set(0, i, e);
    }
    let mut cells = vec![1, r];
    let mut boundaries = vec![d1];
    if !relators.is_empty() {
        let mut d2 = RingMatrix::zeros(r, relators.len(), model.clone());
        for (k, rel) in relators.iter().enumerate() {
            for i in 0..r {
                d2.set(i, k, right_fox_derivative(rel, i, &model));
            }
        }
        cells.push(relators.len());
        boundaries.push(d2);
    }
    EquivariantComplex::new(name, model, cells, boundaries, towers, LoadOptions::default())
}
