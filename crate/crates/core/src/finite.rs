//! Exact backend for finite quotients `G = π/Γ`: enumeration by BFS closure,
//! the right-regular representation, exact kernel dimensions and full spectra.

use std::collections::{HashMap, VecDeque};

use nalgebra::DMatrix;
use num_traits::ToPrimitive;

use crate::error::{Error, Result};
use crate::group::GroupWord;
use crate::linalg::{rank_exact, IntMatrix};
use crate::poly::Polynomial;
use crate::quotient::{QuotientElement, QuotientSpec};
use crate::ring::{matrix_poly_apply, rat, Rational, RingMatrix};

pub const DEFAULT_CLOSURE_CAP: usize = 200_000;
/// Largest dense matrix dimension handed to the eigensolver or the exact rank.
pub const DENSE_CAP: usize = 6000;

/// An enumerated finite quotient. Element 0 is the identity; the remaining
/// elements are in BFS discovery order (generators tried as `g₁, g₁⁻¹, g₂, …`).
#[derive(Clone, Debug)]
pub struct FiniteQuotient {
    spec: QuotientSpec,
    elements: Vec<QuotientElement>,
    index: HashMap<QuotientElement, u32>,
    /// `actions[g][x] = x·g`
    actions: Vec<Vec<u32>>,
    inverse_actions: Vec<Vec<u32>>,
}

impl FiniteQuotient {
    pub fn spec(&self) -> &QuotientSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[QuotientElement] {
        &self.elements
    }

    pub fn index_of(&self, e: &QuotientElement) -> Option<usize> {
        self.index.get(e).map(|&i| i as usize)
    }

    /// Right multiplication by generator `g`, as a permutation of element indices.
    pub fn generator_action(&self, g: usize) -> &[u32] {
        &self.actions[g]
    }

    /// The permutation `x ↦ x·w` of element indices.
    pub fn right_multiplication(&self, w: &GroupWord) -> Result<Vec<u32>> {
        let mut perm: Vec<u32> = (0..self.order() as u32).collect();
        for &(g, e) in w.syllables() {
            let g = g as usize;
            if g >= self.actions.len() {
                return Err(Error::GeneratorOutOfRange { letter: g as i64 + 1, rank: self.actions.len() });
            }
            let act = if e > 0 { &self.actions[g] } else { &self.inverse_actions[g] };
            for _ in 0..e.unsigned_abs() {
                for x in perm.iter_mut() {
                    *x = act[*x as usize];
                }
            }
        }
        Ok(perm)
    }

    /// Index of the image of `w`.
    pub fn element_of(&self, w: &GroupWord) -> Result<usize> {
        let e = self.spec.image(w)?;
        self.index_of(&e).ok_or_else(|| Error::InvalidQuotient {
            name: self.spec.name.clone(),
            reason: "image outside the enumerated closure".into(),
        })
    }

    /// `(index, canonical form)` rows, for debugging.
    pub fn element_table(&self) -> String {
        let mut out = String::from("index,element\n");
        for (i, e) in self.elements.iter().enumerate() {
            out.push_str(&format!("{i},\"{}\"\n", serde_json::to_string(e).unwrap_or_default()));
        }
        out
    }
}

pub fn enumerate_quotient(q: &QuotientSpec) -> Result<FiniteQuotient> {
    enumerate_quotient_capped(q, DEFAULT_CLOSURE_CAP)
}

pub fn enumerate_quotient_capped(q: &QuotientSpec, cap: usize) -> Result<FiniteQuotient> {
    if !q.is_finite() {
        return Err(Error::InvalidQuotient { name: q.name.clone(), reason: "quotient is infinite".into() });
    }
    let rank = q.generator_count().unwrap_or(0);
    let gens: Vec<(QuotientElement, QuotientElement)> = (0..rank)
        .map(|g| Ok((q.generator_power(g, 1)?, q.generator_power(g, -1)?)))
        .collect::<Result<_>>()?;
    let id = q.identity();
    let mut elements = vec![id.clone()];
    let mut index = HashMap::from([(id, 0u32)]);
    let mut actions: Vec<Vec<u32>> = vec![Vec::new(); rank];
    let mut inverse_actions: Vec<Vec<u32>> = vec![Vec::new(); rank];
    let mut queue = VecDeque::from([0u32]);
    while let Some(x) = queue.pop_front() {
        for (g, (fwd, back)) in gens.iter().enumerate() {
            for (dir, h) in [(0, fwd), (1, back)] {
                let y = q.mul(&elements[x as usize], h);
                let iy = match index.get(&y) {
                    Some(&i) => i,
                    None => {
                        if elements.len() >= cap {
                            return Err(Error::ClosureCap { cap });
                        }
                        let i = elements.len() as u32;
                        index.insert(y.clone(), i);
                        elements.push(y);
                        queue.push_back(i);
                        i
                    }
                };
                let table = if dir == 0 { &mut actions[g] } else { &mut inverse_actions[g] };
                if table.len() <= x as usize {
                    table.resize(x as usize + 1, u32::MAX);
                }
                table[x as usize] = iy;
            }
        }
    }
    Ok(FiniteQuotient { spec: q.clone(), elements, index, actions, inverse_actions })
}

/// A group-ring matrix pushed to `⊕ l²(G)` by the right-regular
/// representation: the term `λ·g` contributes `λ·R(g)` with `R(g)[x][x·g] = 1`.
#[derive(Clone, Debug)]
pub struct QuotientMatrix {
    block_rows: usize,
    block_cols: usize,
    order: usize,
    dense: DMatrix<f64>,
    exact: Option<IntMatrix>,
    quotient: String,
}

/// Pushed Laplacians are square, symmetric `QuotientMatrix` values.
pub type QuotientLaplacian = QuotientMatrix;

impl QuotientMatrix {
    pub fn block_size(&self) -> usize {
        self.block_rows
    }

    pub fn block_cols(&self) -> usize {
        self.block_cols
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dense.nrows()
    }

    pub fn dense(&self) -> &DMatrix<f64> {
        &self.dense
    }

    /// Integer entries, when every coefficient was an integer.
    pub fn exact(&self) -> Option<&IntMatrix> {
        self.exact.as_ref()
    }

    pub fn quotient_name(&self) -> &str {
        &self.quotient
    }

    pub fn is_symmetric(&self) -> bool {
        match &self.exact {
            Some(m) => m.is_symmetric(),
            None => self.dense == self.dense.transpose(),
        }
    }

    pub fn trace(&self) -> f64 {
        self.dense.trace()
    }
}

/// Pushes any (rectangular) group-ring matrix.
pub fn push_ring_matrix(m: &RingMatrix, g: &FiniteQuotient) -> Result<QuotientMatrix> {
    let n = g.order();
    let (rows, cols) = (m.rows() * n, m.cols() * n);
    if rows.max(cols) > DENSE_CAP {
        return Err(Error::SizeCap { size: rows.max(cols), cap: DENSE_CAP });
    }
    let mut dense = DMatrix::zeros(rows, cols);
    let mut exact = Some(IntMatrix::zeros(rows, cols));
    let mut cache: HashMap<&GroupWord, Vec<u32>> = HashMap::new();
    for (&(r, c), e) in m.entries() {
        for (w, coef) in e.terms() {
            if !cache.contains_key(w) {
                cache.insert(w, g.right_multiplication(w)?);
            }
            let perm = &cache[w];
            let as_int = if coef.is_integer() { coef.to_integer().to_i64() } else { None };
            if as_int.is_none() {
                exact = None;
            }
            let v = coef.to_f64().unwrap_or(f64::NAN);
            for (x, &px) in perm.iter().enumerate() {
                let (i, j) = (r * n + x, c * n + px as usize);
                dense[(i, j)] += v;
                if let (Some(mat), Some(k)) = (exact.as_mut(), as_int) {
                    mat.add_to(i, j, k).ok_or(Error::Overflow("pushed matrix entry"))?;
                }
            }
        }
    }
    Ok(QuotientMatrix { block_rows: m.rows(), block_cols: m.cols(), order: n, dense, exact, quotient: g.name().into() })
}

/// Pushes a self-adjoint square matrix; the result is symmetric.
pub fn push_matrix(m: &RingMatrix, g: &FiniteQuotient) -> Result<QuotientLaplacian> {
    if !m.is_square() || !m.is_self_adjoint_flagged() {
        return Err(Error::NotSelfAdjoint);
    }
    let out = push_ring_matrix(m, g)?;
    debug_assert!(out.is_symmetric());
    Ok(out)
}

/// Exact kernel count `a·|G| − rank` of an integer matrix.
pub fn kernel_count_exact(l: &QuotientLaplacian) -> Result<usize> {
    let m = l.exact.as_ref().ok_or_else(|| Error::NonIntegral("pushed matrix".into()))?;
    if m.rows() > DENSE_CAP {
        return Err(Error::SizeCap { size: m.rows(), cap: DENSE_CAP });
    }
    Ok(m.cols() - rank_exact(m))
}

/// `F_n(0) = (a·|G| − rank)/|G|`, rank by exact elimination.
pub fn kernel_dim_exact(l: &QuotientLaplacian) -> Result<Rational> {
    Ok(rat(kernel_count_exact(l)? as i64, l.order as i64))
}

/// Sorted eigenvalues with exact kernel snapping.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub kernel_count: usize,
    pub order: usize,
    /// Largest absolute value among the snapped eigenvalues before snapping.
    pub snapped_residual: f64,
}

pub fn spectrum(l: &QuotientLaplacian) -> Result<Spectrum> {
    let kernel = kernel_count_exact(l)?;
    spectrum_with_kernel(l, kernel)
}

pub fn spectrum_with_kernel(l: &QuotientLaplacian, kernel_count: usize) -> Result<Spectrum> {
    let n = l.dim();
    if n > DENSE_CAP {
        return Err(Error::SizeCap { size: n, cap: DENSE_CAP });
    }
    if l.dense.nrows() != l.dense.ncols() {
        return Err(Error::Shape("spectrum of a non-square matrix".into()));
    }
    let mut ev: Vec<f64> = if n == 0 {
        Vec::new()
    } else {
        l.dense.clone().symmetric_eigenvalues().iter().copied().collect()
    };
    if ev.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("eigensolver produced non-finite values".into()));
    }
    ev.sort_by(f64::total_cmp);
    let mut residual: f64 = 0.0;
    for x in ev.iter_mut().take(kernel_count) {
        residual = residual.max(x.abs());
        *x = 0.0;
    }
    Ok(Spectrum { eigenvalues: ev, kernel_count, order: l.order, snapped_residual: residual })
}

/// `Tr_G p(M)`: the coefficient sum of words of `Σ_j p(M)_jj` trivial in `G`.
pub fn vn_trace_quotient(m: &RingMatrix, p: &Polynomial, g: &FiniteQuotient) -> Result<Rational> {
    let diag = matrix_poly_apply(m, p)?.diagonal_sum();
    diag.trivial_part_coefficient(g.spec())
}

/// CSV rows `level,index,eigenvalue`.
pub fn spectrum_csv(rows: &[(usize, &Spectrum)]) -> String {
    let mut out = String::from("level,index,eigenvalue\n");
    for (level, s) in rows {
        for (i, x) in s.eigenvalues.iter().enumerate() {
            out.push_str(&format!("{level},{i},{x:.17e}\n"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::GroupModel;
    use crate::ring::{int, RingElement};

    fn circle_lap() -> RingMatrix {
        let z = GroupModel::free_abelian(1);
        let e = RingElement::from_int_terms(&[(2, &[]), (-1, &[1]), (-1, &[-1])], &z).unwrap();
        RingMatrix::from_rows(vec![vec![e]], z).unwrap().into_self_adjoint().unwrap()
    }

    fn cyclic(n: u64) -> FiniteQuotient {
        enumerate_quotient(&QuotientSpec::mod_lattice(format!("Z/{n}"), vec![n]).unwrap()).unwrap()
    }

    #[test]
    fn orders() {
        let five: Vec<u32> = (0..5).map(|x| (x + 1) % 5).collect();
        let q = QuotientSpec::permutations("c5", vec![five]).unwrap();
        assert_eq!(enumerate_quotient(&q).unwrap().order(), 5);
        let sl = QuotientSpec::mod_matrices("sl", 3, &[vec![vec![1, 2], vec![0, 1]], vec![vec![1, 0], vec![2, 1]]])
            .unwrap();
        assert_eq!(enumerate_quotient(&sl).unwrap().order(), 24);
        assert_eq!(enumerate_quotient(&QuotientSpec::trivial(2)).unwrap().order(), 1);
        let g = cyclic(7);
        assert_eq!(g.elements()[0], g.spec().identity());
    }

    #[test]
    fn closure_cap() {
        let sl = QuotientSpec::mod_matrices("sl", 5, &[vec![vec![1, 2], vec![0, 1]], vec![vec![1, 0], vec![2, 1]]])
            .unwrap();
        assert!(matches!(enumerate_quotient_capped(&sl, 50), Err(Error::ClosureCap { cap: 50 })));
        let inf = QuotientSpec::abelianization("ab", 1).unwrap();
        assert!(enumerate_quotient(&inf).is_err());
    }

    #[test]
    fn circulant_push() {
        let g = cyclic(4);
        let l = push_matrix(&circle_lap(), &g).unwrap();
        let m = l.exact().unwrap();
        let at = |r: u64| g.index_of(&QuotientElement::Residues(vec![r % 4])).unwrap();
        for r in 0..4 {
            assert_eq!(m.get(at(r), at(r)), 2);
            assert_eq!(m.get(at(r), at(r + 1)), -1);
            assert_eq!(m.get(at(r), at(r + 3)), -1);
            assert_eq!(m.get(at(r), at(r + 2)), 0);
        }
        assert!(l.is_symmetric());
        let triv = enumerate_quotient(&QuotientSpec::trivial(1)).unwrap();
        assert_eq!(push_matrix(&circle_lap(), &triv).unwrap().exact().unwrap().get(0, 0), 0);
        let id = RingMatrix::identity(2, GroupModel::free_abelian(1));
        let pushed = push_matrix(&id, &cyclic(3)).unwrap();
        assert_eq!(pushed.dense(), &DMatrix::identity(6, 6));
    }

    #[test]
    fn kernels_and_spectra() {
        for n in [1u64, 2, 3, 7, 12] {
            let l = push_matrix(&circle_lap(), &cyclic(n)).unwrap();
            assert_eq!(kernel_dim_exact(&l).unwrap(), rat(1, n as i64));
        }
        let zero = RingMatrix::zeros(3, 3, GroupModel::free_abelian(1)).into_self_adjoint().unwrap();
        assert_eq!(kernel_dim_exact(&push_matrix(&zero, &cyclic(5)).unwrap()).unwrap(), int(3));

        let s = spectrum(&push_matrix(&circle_lap(), &cyclic(4)).unwrap()).unwrap();
        let expect = [0.0, 2.0, 2.0, 4.0];
        for (a, b) in s.eigenvalues.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(s.eigenvalues[0], 0.0);
        let s2 = spectrum(&push_matrix(&circle_lap(), &cyclic(2)).unwrap()).unwrap();
        assert!((s2.eigenvalues[1] - 4.0).abs() < 1e-12 && s2.eigenvalues[0] == 0.0);
        let triv = enumerate_quotient(&QuotientSpec::trivial(1)).unwrap();
        assert_eq!(spectrum(&push_matrix(&circle_lap(), &triv).unwrap()).unwrap().eigenvalues, vec![0.0]);
    }

    #[test]
    fn quotient_traces() {
        let lap = circle_lap();
        assert_eq!(vn_trace_quotient(&lap, &Polynomial::monomial(1), &cyclic(5)).unwrap(), int(2));
        let triv = enumerate_quotient(&QuotientSpec::trivial(1)).unwrap();
        assert_eq!(vn_trace_quotient(&lap, &Polynomial::monomial(1), &triv).unwrap(), int(0));
        let id2 = RingMatrix::identity(2, GroupModel::free_abelian(1));
        assert_eq!(vn_trace_quotient(&id2, &Polynomial::constant(int(1)), &cyclic(3)).unwrap(), int(2));
        // exact trace equals the normalized trace of the pushed p(M)
        for n in [1u64, 2, 3, 5] {
            let g = cyclic(n);
            for k in 1..=3 {
                let p = Polynomial::monomial(k);
                let exact = vn_trace_quotient(&lap, &p, &g).unwrap().to_f64().unwrap();
                let pushed = push_matrix(&matrix_poly_apply(&lap, &p).unwrap(), &g).unwrap();
                assert!((exact - pushed.trace() / n as f64).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn csv_export() {
        let s = spectrum(&push_matrix(&circle_lap(), &cyclic(2)).unwrap()).unwrap();
        let csv = spectrum_csv(&[(1, &s)]);
        assert!(csv.starts_with("level,index,eigenvalue\n1,0,"));
        assert_eq!(csv.lines().count(), 3);
        assert!(cyclic(3).element_table().contains("2,\"[2]\""));
    }
}
