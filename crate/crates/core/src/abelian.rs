//! Backend for free-abelian groups `Z^d`: the Fourier symbol on the torus,
//! quadrature for the spectral density and the log-determinant, and
//! Dirichlet compressions to Følner boxes.

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finite::DENSE_CAP;
use crate::group::{GroupModel, ModelKind};
use crate::quotient::{QuotientElement, QuotientKind, QuotientSpec};
use crate::ring::{rat, Rational, RingMatrix};

/// Eigenvalues below this are treated as kernel by the quadratures.
pub const KERNEL_THRESHOLD: f64 = 1e-12;

fn abelian_rank(model: &GroupModel) -> Result<usize> {
    match model.kind() {
        ModelKind::FreeAbelian => Ok(model.rank()),
        ModelKind::Free if model.rank() <= 1 => Ok(model.rank()),
        _ => Err(Error::NonAbelian),
    }
}

/// `θ ↦ Σ λ_g e^{i⟨g, θ⟩}` entrywise.
#[derive(Clone, Debug)]
pub struct TorusSymbol {
    dimension: usize,
    size: usize,
    terms: Vec<(usize, usize, Vec<i64>, f64)>,
}

impl TorusSymbol {
    pub fn new(m: &RingMatrix) -> Result<Self> {
        let d = abelian_rank(m.model())?;
        if !m.is_square() {
            return Err(Error::Shape("symbol of a non-square matrix".into()));
        }
        let mut terms = Vec::new();
        for (&(r, c), e) in m.entries() {
            for (w, coef) in e.terms() {
                terms.push((r, c, w.exponent_sums(d), coef.to_f64().unwrap_or(f64::NAN)));
            }
        }
        Ok(Self { dimension: d, size: m.rows(), terms })
    }

    /// The symbol of `M` pushed through a free-abelian quotient `π → Z^r`.
    pub fn through(m: &RingMatrix, q: &QuotientSpec) -> Result<Self> {
        let QuotientKind::Abelianization { matrix } = q.kind() else {
            return Err(Error::InvalidQuotient { name: q.name.clone(), reason: "not a free abelian quotient".into() });
        };
        if !m.is_square() {
            return Err(Error::Shape("symbol of a non-square matrix".into()));
        }
        let mut terms = Vec::new();
        for (&(r, c), e) in m.entries() {
            for (w, coef) in e.terms() {
                let QuotientElement::Lattice(v) = q.image(w)? else { unreachable!() };
                terms.push((r, c, v, coef.to_f64().unwrap_or(f64::NAN)));
            }
        }
        Ok(Self { dimension: matrix.len(), size: m.rows(), terms })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn at(&self, theta: &[f64]) -> Result<DMatrix<Complex64>> {
        if theta.len() != self.dimension {
            return Err(Error::Shape(format!("θ has {} coordinates, torus has {}", theta.len(), self.dimension)));
        }
        let mut out = DMatrix::zeros(self.size, self.size);
        for (r, c, exps, coef) in &self.terms {
            let phase: f64 = exps.iter().zip(theta).map(|(&e, &t)| e as f64 * t).sum();
            out[(*r, *c)] += Complex64::from_polar(*coef, phase);
        }
        Ok(out)
    }

    /// Sorted eigenvalues at `θ`.
    pub fn eigenvalues(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let s = self.at(theta)?;
        let mut ev: Vec<f64> = match self.size {
            0 => Vec::new(),
            1 => vec![s[(0, 0)].re],
            _ => s.symmetric_eigenvalues().iter().copied().collect(),
        };
        ev.sort_by(f64::total_cmp);
        Ok(ev)
    }
}

pub fn symbol_at(m: &RingMatrix, theta: &[f64]) -> Result<DMatrix<Complex64>> {
    TorusSymbol::new(m)?.at(theta)
}

/// Grid controls: start at `initial` points per axis and double until the
/// doubling difference is at most `tol` or the grid would exceed `max_points`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureOptions {
    pub initial: usize,
    pub tol: f64,
    pub max_points: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self { initial: 64, tol: 1e-4, max_points: 1 << 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureReport {
    pub value: f64,
    pub error_bound: f64,
    /// Points per axis of the finest grid used.
    pub grid: usize,
    pub points: usize,
    /// Fraction of eigenvalue slots below the kernel threshold (log-determinant only).
    pub excluded_measure: f64,
    pub converged: bool,
}

/// Per-point eigenvalues on the grid `θ_k = 2π(k + offset)/n`.
fn grid_eigenvalues(sym: &TorusSymbol, n: usize, offset: f64) -> Result<Vec<Vec<f64>>> {
    let d = sym.dimension;
    let total = n.checked_pow(d as u32).ok_or(Error::SizeCap { size: usize::MAX, cap: usize::MAX })?;
    (0..total)
        .into_par_iter()
        .map(|mut idx| {
            let mut theta = vec![0.0; d];
            for t in theta.iter_mut() {
                *t = 2.0 * std::f64::consts::PI * ((idx % n) as f64 + offset) / n as f64;
                idx /= n;
            }
            sym.eigenvalues(&theta)
        })
        .collect()
}

/// Refines `point_value` averaged over the half-cell-offset grid until two
/// consecutive grids agree. The error estimate also compares against the
/// quarter-cell-shifted grid of the same size, so a chance agreement of two
/// grids (common for indicator integrands) is not reported as exact.
fn refine(
    sym: &TorusSymbol,
    opts: &QuadratureOptions,
    cell_floor: bool,
    point_value: impl Fn(&[f64]) -> (f64, usize) + Sync,
) -> Result<QuadratureReport> {
    let d = sym.dimension.max(1) as u32;
    let slots = sym.size.max(1);
    let eval_at = |n: usize, offset: f64| -> Result<(f64, f64)> {
        let ev = grid_eigenvalues(sym, n, offset)?;
        let parts: Vec<(f64, usize)> = ev.iter().map(|e| point_value(e)).collect();
        let count = parts.len().max(1) as f64;
        let value = parts.iter().map(|p| p.0).sum::<f64>() / count;
        let excluded = parts.iter().map(|p| p.1).sum::<usize>() as f64 / (count * slots as f64);
        Ok((value, excluded))
    };
    let eval = |n: usize| eval_at(n, 0.5);
    let points = |n: usize| if sym.dimension == 0 { 1 } else { n.pow(d) };
    let mut n = opts.initial.max(2);
    let (mut prev, _) = eval(n)?;
    loop {
        let next_n = 2 * n;
        if points(next_n) > opts.max_points {
            return Ok(QuadratureReport {
                value: prev,
                error_bound: f64::INFINITY,
                grid: n,
                points: points(n),
                excluded_measure: eval(n)?.1,
                converged: false,
            });
        }
        let (cur, excluded) = eval(next_n)?;
        let mut err = (cur - prev).abs();
        if err <= opts.tol && sym.dimension > 0 {
            err = err.max((cur - eval_at(next_n, 0.25)?.0).abs());
        }
        n = next_n;
        if err <= opts.tol || sym.dimension == 0 {
            // A counted indicator cannot resolve its level set below one cell per axis.
            let floor = if cell_floor && sym.dimension > 0 { 1.0 / n as f64 } else { 0.0 };
            return Ok(QuadratureReport {
                value: cur,
                error_bound: err.max(floor),
                grid: n,
                points: points(n),
                excluded_measure: excluded,
                converged: true,
            });
        }
        prev = cur;
    }
}

/// `F(λ) = ∫ #{eigenvalues of the symbol ≤ λ} dθ/(2π)^d`.
pub fn sdf_quadrature(m: &RingMatrix, lambda: f64, opts: &QuadratureOptions) -> Result<QuadratureReport> {
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("spectral density needs λ ≥ 0, got {lambda}")));
    }
    sdf_quadrature_symbol(&TorusSymbol::new(m)?, lambda, opts)
}

pub fn sdf_quadrature_symbol(sym: &TorusSymbol, lambda: f64, opts: &QuadratureOptions) -> Result<QuadratureReport> {
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("spectral density needs λ ≥ 0, got {lambda}")));
    }
    refine(sym, opts, true, |ev| (ev.iter().filter(|&&x| x <= lambda + KERNEL_THRESHOLD).count() as f64, 0))
}

/// `∫ Σ_{λ_i(θ) > 10⁻¹²} log λ_i(θ) dθ/(2π)^d`.
pub fn fk_logdet_quadrature(m: &RingMatrix, opts: &QuadratureOptions) -> Result<QuadratureReport> {
    if !m.is_self_adjoint_flagged() {
        return Err(Error::NotSelfAdjoint);
    }
    fk_logdet_symbol(&TorusSymbol::new(m)?, opts)
}

pub fn fk_logdet_symbol(sym: &TorusSymbol, opts: &QuadratureOptions) -> Result<QuadratureReport> {
    refine(sym, opts, false, |ev| {
        let mut sum = 0.0;
        let mut excluded = 0;
        for &x in ev {
            if x < KERNEL_THRESHOLD {
                excluded += 1;
            } else {
                sum += x.ln();
            }
        }
        (sum, excluded)
    })
}

/// CSV `theta_index,theta,eig_0,…` on an `n`-point grid; circle-type (d = 1) only.
pub fn symbol_csv(m: &RingMatrix, n: usize) -> Result<String> {
    let sym = TorusSymbol::new(m)?;
    if sym.dimension != 1 {
        return Err(Error::Domain("symbol CSV export is for d = 1".into()));
    }
    let ev = grid_eigenvalues(&sym, n, 0.5)?;
    let mut out = String::from("theta_index,theta");
    for i in 0..sym.size {
        out.push_str(&format!(",eig_{i}"));
    }
    out.push('\n');
    for (k, e) in ev.iter().enumerate() {
        let theta = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / n as f64;
        out.push_str(&format!("{k},{theta:.17e}"));
        for x in e {
            out.push_str(&format!(",{x:.17e}"));
        }
        out.push('\n');
    }
    Ok(out)
}

/// The box `Π [0, L_i)` in `Z^d`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FolnerBox {
    pub sides: Vec<usize>,
}

impl FolnerBox {
    pub fn new(sides: Vec<usize>) -> Self {
        Self { sides }
    }

    pub fn cube(d: usize, l: usize) -> Self {
        Self { sides: vec![l; d] }
    }

    pub fn dimension(&self) -> usize {
        self.sides.len()
    }

    pub fn volume(&self) -> usize {
        self.sides.iter().product()
    }

    fn linear_index(&self, p: &[i64]) -> Option<usize> {
        let mut idx = 0usize;
        for (&x, &l) in p.iter().zip(&self.sides).rev() {
            if x < 0 || x as usize >= l {
                return None;
            }
            idx = idx * l + x as usize;
        }
        Some(idx)
    }

    fn point(&self, mut idx: usize) -> Vec<i64> {
        self.sides
            .iter()
            .map(|&l| {
                let x = idx % l;
                idx /= l;
                x as i64
            })
            .collect()
    }
}

/// `P_Λ M P_Λ` with zero truncation outside the box: the term `λ·g` in block
/// `(r, c)` adds `λ` at `((r, x), (c, x + g))` whenever both points lie in `Λ`.
pub fn folner_compression(m: &RingMatrix, bx: &FolnerBox) -> Result<DMatrix<f64>> {
    let d = abelian_rank(m.model())?;
    if bx.dimension() != d {
        return Err(Error::Shape(format!("box of dimension {} for Z^{d}", bx.dimension())));
    }
    let vol = bx.volume();
    let (rows, cols) = (m.rows() * vol, m.cols() * vol);
    if rows.max(cols) > DENSE_CAP {
        return Err(Error::SizeCap { size: rows.max(cols), cap: DENSE_CAP });
    }
    let mut out = DMatrix::zeros(rows, cols);
    for (&(r, c), e) in m.entries() {
        for (w, coef) in e.terms() {
            let g = w.exponent_sums(d);
            let v = coef.to_f64().unwrap_or(f64::NAN);
            for x in 0..vol {
                let p = bx.point(x);
                let shifted: Vec<i64> = p.iter().zip(&g).map(|(a, b)| a + b).collect();
                if let Some(y) = bx.linear_index(&shifted) {
                    out[(r * vol + x, c * vol + y)] += v;
                }
            }
        }
    }
    Ok(out)
}

/// `#{eigenvalues ≤ λ}/|Λ|` for several `λ`, from one eigendecomposition.
pub fn compression_density(m: &RingMatrix, bx: &FolnerBox, lambdas: &[f64]) -> Result<Vec<f64>> {
    if !m.is_self_adjoint_flagged() {
        return Err(Error::NotSelfAdjoint);
    }
    let c = folner_compression(m, bx)?;
    let ev: Vec<f64> = if c.nrows() == 0 { Vec::new() } else { c.symmetric_eigenvalues().iter().copied().collect() };
    let vol = bx.volume().max(1) as f64;
    Ok(lambdas
        .iter()
        .map(|&l| ev.iter().filter(|&&x| x <= l + KERNEL_THRESHOLD).count() as f64 / vol)
        .collect())
}

/// `#∂_δΛ / #Λ`, counting lattice points at ℓ¹ distance at most `⌊δ⌋` from
/// both `Λ` and its complement. `δ < 1` gives the empty set.
pub fn boundary_ratio(bx: &FolnerBox, delta: f64) -> Rational {
    let vol = bx.volume();
    if vol == 0 || !(delta >= 1.0) {
        return rat(0, 1);
    }
    let r = delta.floor().min(1e6) as i64;
    let d = bx.dimension();
    let widths: Vec<i64> = bx.sides.iter().map(|&l| l as i64 + 2 * r).collect();
    let total: i64 = widths.iter().product();
    let mut count: i64 = 0;
    let mut p = vec![0i64; d];
    for mut idx in 0..total {
        for (i, x) in p.iter_mut().enumerate() {
            *x = idx % widths[i] - r;
            idx /= widths[i];
        }
        let inside = p.iter().zip(&bx.sides).all(|(&x, &l)| x >= 0 && x < l as i64);
        let hit = if inside {
            let to_outside = p.iter().zip(&bx.sides).map(|(&x, &l)| (x + 1).min(l as i64 - x)).min().unwrap_or(0);
            to_outside <= r
        } else {
            let to_box: i64 = p.iter().zip(&bx.sides).map(|(&x, &l)| (-x).max(x - (l as i64 - 1)).max(0)).sum();
            to_box <= r
        };
        if hit {
            count += 1;
        }
    }
    BigRational::new(count.into(), (vol as i64).into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::{int, RingElement};
    use std::f64::consts::PI;

    fn circle_lap() -> RingMatrix {
        let z = GroupModel::free_abelian(1);
        let e = RingElement::from_int_terms(&[(2, &[]), (-1, &[1]), (-1, &[-1])], &z).unwrap();
        RingMatrix::from_rows(vec![vec![e]], z).unwrap().into_self_adjoint().unwrap()
    }

    fn torus_lap0() -> RingMatrix {
        let z2 = GroupModel::free_abelian(2);
        let e = RingElement::from_int_terms(&[(4, &[]), (-1, &[1]), (-1, &[-1]), (-1, &[2]), (-1, &[-2])], &z2).unwrap();
        RingMatrix::from_rows(vec![vec![e]], z2).unwrap().into_self_adjoint().unwrap()
    }

    #[test]
    fn symbols() {
        let s = symbol_at(&circle_lap(), &[1.0]).unwrap();
        assert!((s[(0, 0)].re - (2.0 - 2.0 * 1f64.cos())).abs() < 1e-14 && s[(0, 0)].im.abs() < 1e-14);
        assert!(symbol_at(&circle_lap(), &[0.0]).unwrap()[(0, 0)].norm() < 1e-15);
        assert!((symbol_at(&torus_lap0(), &[PI, PI]).unwrap()[(0, 0)].re - 8.0).abs() < 1e-12);
        let free = RingMatrix::identity(1, GroupModel::free(2));
        assert!(matches!(symbol_at(&free, &[0.0, 0.0]), Err(Error::NonAbelian)));
    }

    #[test]
    fn circle_density() {
        let o = QuadratureOptions::default();
        let half = sdf_quadrature(&circle_lap(), 2.0, &o).unwrap();
        assert!((half.value - 0.5).abs() < 1e-3 && half.converged);
        assert_eq!(sdf_quadrature(&circle_lap(), 4.0, &o).unwrap().value, 1.0);
        assert_eq!(sdf_quadrature(&circle_lap(), 0.0, &o).unwrap().value, 0.0);
        for l in [0.5, 1.0, 3.0] {
            let v = sdf_quadrature(&circle_lap(), l, &o).unwrap().value;
            assert!((v - (1.0 - l / 2.0).acos() / PI).abs() < 2e-3, "{l}: {v}");
        }
        assert!(sdf_quadrature(&circle_lap(), -1.0, &o).is_err());
    }

    #[test]
    fn density_monotone_and_total() {
        let o = QuadratureOptions { initial: 16, tol: 1e-2, max_points: 1 << 12 };
        let mut last = 0.0;
        for i in 0..=16 {
            let v = sdf_quadrature(&torus_lap0(), i as f64 * 0.5, &o).unwrap().value;
            assert!(v >= last);
            last = v;
        }
        assert_eq!(last, 1.0);
    }

    #[test]
    fn log_determinants() {
        let o = QuadratureOptions { initial: 64, tol: 1e-5, max_points: 1 << 20 };
        let c = fk_logdet_quadrature(&circle_lap(), &o).unwrap();
        assert!(c.value.abs() < 1e-3 && c.converged, "{c:?}");
        let z = GroupModel::free_abelian(1);
        let e = RingElement::from_int_terms(&[(5, &[]), (-2, &[1]), (-2, &[-1])], &z).unwrap();
        let m = RingMatrix::from_rows(vec![vec![e]], z).unwrap().into_self_adjoint().unwrap();
        let v = fk_logdet_quadrature(&m, &o).unwrap();
        assert!((v.value - 4f64.ln()).abs() < 1e-3);
        let id = RingMatrix::identity(2, GroupModel::free_abelian(1));
        assert_eq!(fk_logdet_quadrature(&id, &o).unwrap().value, 0.0);
    }

    #[test]
    fn compressions() {
        let c = folner_compression(&circle_lap(), &FolnerBox::new(vec![6])).unwrap();
        for i in 0..6 {
            assert_eq!(c[(i, i)], 2.0);
            if i + 1 < 6 {
                assert_eq!(c[(i, i + 1)], -1.0);
                assert_eq!(c[(i + 1, i)], -1.0);
            }
        }
        let mut ev: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        for (k, x) in ev.iter().enumerate() {
            assert!((x - (2.0 - 2.0 * ((k + 1) as f64 * PI / 7.0).cos())).abs() < 1e-12);
        }
        assert_eq!(folner_compression(&circle_lap(), &FolnerBox::new(vec![1])).unwrap()[(0, 0)], 2.0);
        let id = RingMatrix::identity(1, GroupModel::free_abelian(2));
        assert_eq!(folner_compression(&id, &FolnerBox::cube(2, 3)).unwrap(), DMatrix::identity(9, 9));
    }

    #[test]
    fn folner_convergence() {
        let lambdas = [0.5, 1.0, 2.0, 3.0];
        let f = compression_density(&circle_lap(), &FolnerBox::new(vec![100]), &lambdas).unwrap();
        for (l, v) in lambdas.iter().zip(f) {
            assert!((v - (1.0 - l / 2.0).acos() / PI).abs() <= 5.0 / 100.0);
        }
    }

    #[test]
    fn boundary_ratios() {
        assert_eq!(boundary_ratio(&FolnerBox::new(vec![100]), 1.0), rat(4, 100));
        assert_eq!(boundary_ratio(&FolnerBox::new(vec![100]), 0.0), int(0));
        // a 3×3 square with δ = 1: 8 rim cells inside, 12 cells outside
        assert_eq!(boundary_ratio(&FolnerBox::cube(2, 3), 1.0), rat(20, 9));
        let mut last = boundary_ratio(&FolnerBox::new(vec![10]), 2.0);
        for l in [20, 40, 80] {
            let r = boundary_ratio(&FolnerBox::new(vec![l]), 2.0);
            assert!(r < last);
            last = r;
        }
    }

    #[test]
    fn symbol_through_abelianization() {
        // the free group of rank 2 mapped onto Z²: Δ₀ of the wedge becomes Δ₀ of the torus
        let f2 = GroupModel::free(2);
        let e = RingElement::from_int_terms(&[(4, &[]), (-1, &[1]), (-1, &[-1]), (-1, &[2]), (-1, &[-2])], &f2).unwrap();
        let m = RingMatrix::from_rows(vec![vec![e]], f2).unwrap().into_self_adjoint().unwrap();
        let q = QuotientSpec::abelianization("ab", 2).unwrap();
        let sym = TorusSymbol::through(&m, &q).unwrap();
        assert!((sym.at(&[PI, PI]).unwrap()[(0, 0)].re - 8.0).abs() < 1e-12);
        let o = QuadratureOptions { initial: 16, tol: 1e-2, max_points: 1 << 12 };
        assert_eq!(sdf_quadrature_symbol(&sym, 0.0, &o).unwrap().value, 0.0);
    }

    #[test]
    fn csv() {
        let s = symbol_csv(&circle_lap(), 4).unwrap();
        assert_eq!(s.lines().count(), 5);
        assert!(s.starts_with("theta_index,theta,eig_0\n0,"));
        assert!(symbol_csv(&torus_lap0(), 4).is_err());
    }
}
