//! Spectral density functions and the tower machinery built on them: empirical
//! limits, the decay bound, sandwich traces, determinant integrals, gap
//! detection and the per-tower report.

use num_traits::{Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abelian::{fk_logdet_symbol, sdf_quadrature_symbol, QuadratureOptions, TorusSymbol};
use crate::complex::{assemble_laplacian, EquivariantComplex};
use crate::error::{Error, Result};
use crate::finite::{enumerate_quotient_capped, push_matrix, spectrum, Spectrum, DEFAULT_CLOSURE_CAP};
use crate::poly::{ChebyshevSeries, Polynomial};
use crate::quotient::QuotientSpec;
use crate::ring::{int, matrix_poly_apply, norm_bound_k, rat, stabilization_level_of, Rational, RingMatrix};

/// Eigenvalues within this distance above `λ` count as `≤ λ`.
pub const EIGEN_TOL: f64 = 1e-10;

/// Default λ-grid for the decay check.
pub const DECAY_GRID: [f64; 4] = [0.01, 0.1, 0.5, 0.9];

fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// A right-continuous step function `F(λ) = F(0) + Σ_{0 < λ_i ≤ λ} w_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDensity {
    zero_value: Rational,
    /// `(λ_i, w_i)` with `λ_i > 0` increasing and `w_i > 0`.
    jumps: Vec<(f64, Rational)>,
    /// `prefix[i] = F(0) + w_0 + … + w_i`.
    prefix: Vec<Rational>,
    normalization: usize,
    k_squared: Rational,
}

impl StepDensity {
    pub fn new(zero_value: Rational, mut jumps: Vec<(f64, Rational)>, normalization: usize, k_squared: Rational) -> Result<Self> {
        if zero_value.is_negative() {
            return Err(Error::InvalidDensity("negative F(0)".into()));
        }
        if let Some((l, w)) = jumps.iter().find(|(l, w)| !(*l > 0.0) || !l.is_finite() || !w.is_positive()) {
            return Err(Error::InvalidDensity(format!("jump of weight {w} at λ = {l}")));
        }
        jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, Rational)> = Vec::with_capacity(jumps.len());
        for (l, w) in jumps {
            match merged.last_mut() {
                Some(last) if l - last.0 <= 1e-12 * l.max(1.0) => last.1 += w,
                _ => merged.push((l, w)),
            }
        }
        let mut prefix = Vec::with_capacity(merged.len());
        let mut acc = zero_value.clone();
        for (_, w) in &merged {
            acc += w;
            prefix.push(acc.clone());
        }
        if acc > int(normalization as i64) {
            return Err(Error::InvalidDensity(format!("total mass {acc} exceeds {normalization}")));
        }
        Ok(Self { zero_value, jumps: merged, prefix, normalization, k_squared })
    }

    /// The density of a pushed Laplacian: weight `1/|G|` per eigenvalue.
    pub fn from_spectrum(s: &Spectrum, normalization: usize, k_squared: Rational) -> Result<Self> {
        let unit = rat(1, s.order as i64);
        let zero = rat(s.kernel_count as i64, s.order as i64);
        let jumps = s.eigenvalues[s.kernel_count..].iter().map(|&l| (l, unit.clone())).collect();
        Self::new(zero, jumps, normalization, k_squared)
    }

    pub fn zero_value(&self) -> &Rational {
        &self.zero_value
    }

    pub fn jumps(&self) -> &[(f64, Rational)] {
        &self.jumps
    }

    pub fn normalization(&self) -> usize {
        self.normalization
    }

    pub fn k_squared(&self) -> &Rational {
        &self.k_squared
    }

    /// Exact value at `λ`; `0` below zero.
    pub fn value(&self, lambda: f64) -> Rational {
        if lambda < 0.0 {
            return Rational::zero();
        }
        let count = self.jumps.partition_point(|(l, _)| *l <= lambda + EIGEN_TOL);
        if count == 0 {
            self.zero_value.clone()
        } else {
            self.prefix[count - 1].clone()
        }
    }

    pub fn value_f64(&self, lambda: f64) -> f64 {
        to_f64(&self.value(lambda))
    }

    /// `F(∞)`.
    pub fn total(&self) -> Rational {
        self.prefix.last().cloned().unwrap_or_else(|| self.zero_value.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub lambda: f64,
    pub value: f64,
    pub error: f64,
}

/// Quadrature estimates on a λ-grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledDensity {
    points: Vec<SamplePoint>,
    normalization: usize,
    zero_value: Option<f64>,
}

impl SampledDensity {
    pub fn new(mut points: Vec<SamplePoint>, normalization: usize, zero_value: Option<f64>) -> Result<Self> {
        if points.iter().any(|p| !p.lambda.is_finite() || p.lambda < 0.0) {
            return Err(Error::InvalidDensity("sample outside [0, ∞)".into()));
        }
        points.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
        Ok(Self { points, normalization, zero_value })
    }

    pub fn points(&self) -> &[SamplePoint] {
        &self.points
    }

    /// The sample at the nearest grid point at or above `λ` (the last one past the grid).
    pub fn sample(&self, lambda: f64) -> Option<SamplePoint> {
        let i = self.points.partition_point(|p| p.lambda < lambda);
        self.points.get(i).or(self.points.last()).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectralDensity {
    Step(StepDensity),
    Sampled(SampledDensity),
}

impl SpectralDensity {
    pub fn normalization(&self) -> usize {
        match self {
            Self::Step(s) => s.normalization,
            Self::Sampled(s) => s.normalization,
        }
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        sdf_eval(self, lambda).0
    }

    pub fn zero_value(&self) -> f64 {
        match self {
            Self::Step(s) => to_f64(&s.zero_value),
            Self::Sampled(s) => s.zero_value.unwrap_or_else(|| self.eval(0.0)),
        }
    }

    pub fn as_step(&self) -> Option<&StepDensity> {
        match self {
            Self::Step(s) => Some(s),
            Self::Sampled(_) => None,
        }
    }
}

/// `(value, error bound)`; the error is zero for step densities.
pub fn sdf_eval(f: &SpectralDensity, lambda: f64) -> (f64, f64) {
    match f {
        SpectralDensity::Step(s) => (s.value_f64(lambda), 0.0),
        SpectralDensity::Sampled(s) => s.sample(lambda).map_or((0.0, 0.0), |p| (p.value, p.error)),
    }
}

/// Tail statistics of a tower of densities at one `λ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitPoint {
    pub lambda: f64,
    /// `F̄(λ)`: largest value over the window.
    pub upper: f64,
    /// `F̲(λ)`: smallest value over the window.
    pub lower: f64,
    /// `F̄(λ + 2⁻²⁰)`, the last term of the monotone sequence `F̄(λ + 2⁻ⁱ)`.
    pub upper_plus: f64,
    pub lower_plus: f64,
    /// `F̄⁺(λ)` lies in `[upper, upper_plus]`.
    pub upper_plus_bracket: (f64, f64),
    pub lower_plus_bracket: (f64, f64),
    /// `F̄(λ + 2⁻ⁱ)` for `i = 1..=20`.
    pub upper_plus_sequence: Vec<f64>,
}

pub fn tower_limits(fs: &[SpectralDensity], grid: &[f64], window: Option<usize>) -> Result<Vec<LimitPoint>> {
    if fs.len() < 2 {
        return Err(Error::Domain(format!("tower limits need at least 2 levels, got {}", fs.len())));
    }
    let w = window.unwrap_or(fs.len()).clamp(1, fs.len());
    let tail = &fs[fs.len() - w..];
    let extremes = |l: f64| {
        tail.iter().map(|f| f.eval(l)).fold((f64::NEG_INFINITY, f64::INFINITY), |(hi, lo), v| (hi.max(v), lo.min(v)))
    };
    Ok(grid
        .iter()
        .map(|&lambda| {
            let (upper, lower) = extremes(lambda);
            let seq: Vec<(f64, f64)> = (1..=20).map(|i| extremes(lambda + 0.5f64.powi(i))).collect();
            let (up, lp) = *seq.last().unwrap();
            LimitPoint {
                lambda,
                upper,
                lower,
                upper_plus: up,
                lower_plus: lp,
                upper_plus_bracket: (upper, up),
                lower_plus_bracket: (lower, lp),
                upper_plus_sequence: seq.iter().map(|p| p.0).collect(),
            }
        })
        .collect())
}

/// `s(λ) = a_j · log K² / (−log λ)` on `0 < λ < 1`.
pub fn decay_bound(a_j: usize, k_squared: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Domain(format!("decay bound is stated for 0 < λ < 1, got {lambda}")));
    }
    if !(k_squared > 1.0) {
        return Err(Error::Domain(format!("decay bound needs K > 1, got K² = {k_squared}")));
    }
    Ok(a_j as f64 * k_squared.ln() / -lambda.ln())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub level: usize,
    pub lambda: f64,
    pub increment: f64,
    pub bound: f64,
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub rows: Vec<DecayRow>,
    pub min_margin: f64,
    /// Grid points outside `(0, 1)`; no assertion is made there.
    pub skipped: Vec<f64>,
    pub pass: bool,
}

/// Margin `s(λ) − (F_n(λ) − F_n(0))` for every level and grid point in `(0, 1)`.
pub fn check_uniform_decay(fs: &[SpectralDensity], a_j: usize, k_squared: f64, grid: &[f64]) -> Result<DecayReport> {
    let (inside, skipped): (Vec<f64>, Vec<f64>) = grid.iter().partition(|&&l| l > 0.0 && l < 1.0);
    let mut rows = Vec::new();
    for (level, f) in fs.iter().enumerate() {
        let zero = f.zero_value();
        for &lambda in &inside {
            let bound = decay_bound(a_j, k_squared, lambda)?;
            let increment = f.eval(lambda) - zero;
            rows.push(DecayRow { level: level + 1, lambda, increment, bound, margin: bound - increment });
        }
    }
    let min_margin = rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    Ok(DecayReport { pass: rows.iter().all(|r| r.margin >= -1e-12), rows, min_margin, skipped })
}

/// A density with a single jump of `a_j` at `λ = 10⁻⁶`, which breaks the decay bound.
pub fn synthetic_decay_violation(a_j: usize, k_squared: Rational) -> Result<StepDensity> {
    StepDensity::new(Rational::zero(), vec![(1e-6, int(a_j as i64))], a_j, k_squared)
}

/// `∫_{0⁺}^{K²} (F(λ) − F(0))/λ dλ = Σ_{0 < λ_i ≤ K²} w_i log(K²/λ_i)`.
pub fn detclass_integral(f: &StepDensity) -> Result<f64> {
    let k2 = to_f64(&f.k_squared);
    let mut sum = 0.0;
    for (l, w) in &f.jumps {
        if *l <= 0.0 {
            return Err(Error::InvalidDensity(format!("jump at λ = {l} ≤ 0")));
        }
        if *l <= k2 + EIGEN_TOL {
            sum += to_f64(w) * (k2 / l).ln();
        }
    }
    Ok(sum)
}

/// `log det′ = Σ_{λ_i > 0} w_i log λ_i`.
pub fn fk_logdet_step(f: &StepDensity) -> f64 {
    f.jumps.iter().map(|(l, w)| to_f64(w) * l.ln()).sum::<f64>() + 0.0
}

/// `|log det′ − [(log K²)(F(K²) − F(0)) − ∫ (F − F(0))/λ]|`.
pub fn parts_identity_check(f: &StepDensity) -> Result<f64> {
    let k2 = to_f64(&f.k_squared);
    let mass = to_f64(&(f.value(k2) - &f.zero_value));
    Ok((fk_logdet_step(f) - (k2.ln() * mass - detclass_integral(f)?)).abs())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapVerdict {
    pub gap: bool,
    /// Largest grid point below which every tail increment is within tolerance.
    pub lambda_star: Option<f64>,
    /// `(λ, max_n F_n(λ) − F_n(0))` over the window.
    pub tail_max: Vec<(f64, f64)>,
}

/// Finds the largest grid `λ` such that `F_n(μ) − F_n(0) ≤ tol` for every
/// tail level and every grid `μ ≤ λ` (grid taken in increasing order).
pub fn gap_criterion(fs: &[SpectralDensity], grid: &[f64], tol: f64, window: Option<usize>) -> Result<GapVerdict> {
    if fs.len() < 3 {
        return Err(Error::Domain(format!("gap criterion needs at least 3 levels, got {}", fs.len())));
    }
    let w = window.unwrap_or(fs.len()).clamp(1, fs.len());
    let tail = &fs[fs.len() - w..];
    let mut sorted: Vec<f64> = grid.iter().copied().filter(|l| *l > 0.0).collect();
    sorted.sort_by(f64::total_cmp);
    let tail_max: Vec<(f64, f64)> = sorted
        .iter()
        .map(|&l| (l, tail.iter().map(|f| f.eval(l) - f.zero_value()).fold(f64::NEG_INFINITY, f64::max)))
        .collect();
    let lambda_star = tail_max.iter().take_while(|(_, m)| *m <= tol).last().map(|p| p.0);
    Ok(GapVerdict { gap: lambda_star.is_some(), lambda_star, tail_max })
}

/// Controls for building the sandwich polynomial.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichOptions {
    pub initial_degree: usize,
    pub max_degree: usize,
    /// Interior certification points on `[0, K²]`.
    pub grid_points: usize,
    /// Required strict margin on both sides.
    pub slack: f64,
}

impl Default for SandwichOptions {
    fn default() -> Self {
        Self { initial_degree: 8, max_degree: 600, grid_points: 10_000, slack: 1e-9 }
    }
}

/// `f_k`: `1 + 1/k` up to `λ`, linear down to `1/k` at `λ + 1/k`, then flat.
pub fn sandwich_ceiling(lambda: f64, k: usize, mu: f64) -> f64 {
    let kf = k as f64;
    if mu <= lambda {
        1.0 + 1.0 / kf
    } else if mu <= lambda + 1.0 / kf {
        1.0 + 1.0 / kf - kf * (mu - lambda)
    } else {
        1.0 / kf
    }
}

/// Smallest margins `min (p − χ)` and `min (f_k − p)` over the certification
/// sample of `[0, K²]`, which includes the breakpoints `λ` and `λ + 1/k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichMargins {
    pub lower: f64,
    pub upper: f64,
}

impl SandwichMargins {
    pub fn certified(&self, slack: f64) -> bool {
        self.lower > slack && self.upper > slack
    }
}

pub fn sandwich_margins(p: impl Fn(f64) -> f64, lambda: f64, k: usize, k_squared: f64, grid_points: usize) -> SandwichMargins {
    let n = grid_points.max(1);
    let mut samples: Vec<f64> = (0..=n).map(|i| k_squared * i as f64 / n as f64).collect();
    for b in [lambda, lambda + 1.0 / k as f64] {
        for x in [b, b - 1e-12, b + 1e-12] {
            if (0.0..=k_squared).contains(&x) {
                samples.push(x);
            }
        }
    }
    let mut m = SandwichMargins { lower: f64::INFINITY, upper: f64::INFINITY };
    for mu in samples {
        let v = p(mu);
        let chi = if mu <= lambda { 1.0 } else { 0.0 };
        m.lower = m.lower.min(v - chi);
        m.upper = m.upper.min(sandwich_ceiling(lambda, k, mu) - v);
    }
    m
}

#[derive(Clone, Debug, PartialEq)]
pub struct SandwichPolynomial {
    pub series: ChebyshevSeries,
    pub polynomial: Polynomial,
    pub margins: SandwichMargins,
}

impl SandwichPolynomial {
    pub fn degree(&self) -> usize {
        self.series.degree()
    }
}

/// Interpolates the band centre `f_k − 1/(2k)` at growing degree until the
/// sandwich `χ_[0,λ] < p < f_k` is certified on `[0, K²]`.
pub fn sandwich_polynomial(lambda: f64, k: usize, k_squared: &Rational, opts: &SandwichOptions) -> Result<SandwichPolynomial> {
    if !(lambda >= 0.0) || k == 0 {
        return Err(Error::Domain(format!("sandwich needs λ ≥ 0 and k ≥ 1, got λ = {lambda}, k = {k}")));
    }
    let ks = to_f64(k_squared);
    let centre = |mu: f64| sandwich_ceiling(lambda, k, mu) - 0.5 / k as f64;
    let mut degree = if lambda >= ks { 0 } else { opts.initial_degree };
    loop {
        let series = ChebyshevSeries::interpolate(centre, degree, k_squared);
        let margins = sandwich_margins(|mu| series.eval(mu), lambda, k, ks, opts.grid_points);
        if margins.certified(opts.slack) {
            return Ok(SandwichPolynomial { polynomial: series.to_polynomial(), series, margins });
        }
        if degree >= opts.max_degree {
            return Err(Error::DegreeCap { cap: opts.max_degree });
        }
        degree = (((degree.max(1)) as f64 * 1.15).ceil() as usize).max(degree + 1).min(opts.max_degree);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichLevel {
    pub level: usize,
    pub quotient: String,
    pub order: usize,
    /// `Tr_{π/Γ_n} p_k(Δ_n)`, exact.
    pub trace: String,
    pub trace_value: f64,
    pub f_lambda: f64,
    pub f_lambda_plus: f64,
    /// `Tr_n − F_n(λ)`.
    pub lower_slack: f64,
    /// `F_n(λ + 1/k) + a_j/k − Tr_n`.
    pub upper_slack: f64,
    /// The same two slacks with `Tr_π` in place of `Tr_n`; present for `n ≥ n₀`.
    pub pi_slacks: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub lambda: f64,
    pub k: usize,
    pub degree: usize,
    pub k_squared: String,
    pub margins: SandwichMargins,
    /// `Tr_π p_k(Δ)`, exact.
    pub trace_pi: String,
    pub trace_pi_value: f64,
    /// 1-based stabilization level of the tower.
    pub n0: Option<usize>,
    pub levels: Vec<SandwichLevel>,
}

impl SandwichReport {
    /// Worst slack among all sandwich inequalities at levels `n ≥ n₀`.
    pub fn min_slack_past_n0(&self) -> Option<f64> {
        let n0 = self.n0?;
        self.levels
            .iter()
            .filter(|l| l.level >= n0)
            .flat_map(|l| {
                let (a, b) = l.pi_slacks.unwrap_or((f64::INFINITY, f64::INFINITY));
                [l.lower_slack, l.upper_slack, a, b]
            })
            .reduce(f64::min)
    }
}

/// One finite level: the pushed spectrum and its density.
pub fn finite_level(b: &RingMatrix, q: &QuotientSpec, k_squared: &Rational, cap: usize) -> Result<(usize, Spectrum, StepDensity)> {
    let g = enumerate_quotient_capped(q, cap)?;
    let s = spectrum(&push_matrix(b, &g)?)?;
    let d = StepDensity::from_spectrum(&s, b.rows(), k_squared.clone())?;
    Ok((g.order(), s, d))
}

/// Certified `p_k`, its exact traces along the tower and both sandwich
/// inequalities at every finite level.
pub fn sandwich_trace(b: &RingMatrix, lambda: f64, k: usize, tower: &[QuotientSpec], opts: &SandwichOptions) -> Result<SandwichReport> {
    if !b.is_self_adjoint_flagged() {
        return Err(Error::NotSelfAdjoint);
    }
    let kk = norm_bound_k(b);
    let k_squared = &kk * &kk;
    let sp = sandwich_polynomial(lambda, k, &k_squared, opts)?;
    let diag = matrix_poly_apply(b, &sp.polynomial)?.diagonal_sum();
    if !b.model().decides_identity() {
        return Err(Error::UndecidableIdentity);
    }
    let trace_pi = diag.identity_coefficient();
    let pi = to_f64(&trace_pi);
    let n0 = stabilization_level_of(&diag, tower)?;
    let a_over_k = b.rows() as f64 / k as f64;
    let levels = tower
        .par_iter()
        .enumerate()
        .filter(|(_, q)| q.is_finite())
        .map(|(i, q)| {
            let (order, _, dens) = finite_level(b, q, &k_squared, DEFAULT_CLOSURE_CAP)?;
            let trace = diag.trivial_part_coefficient(q)?;
            let t = to_f64(&trace);
            let fl = dens.value_f64(lambda);
            let fp = dens.value_f64(lambda + 1.0 / k as f64);
            let past_n0 = n0.is_some_and(|n| i + 1 >= n);
            Ok(SandwichLevel {
                level: i + 1,
                quotient: q.name.clone(),
                order,
                trace: trace.to_string(),
                trace_value: t,
                f_lambda: fl,
                f_lambda_plus: fp,
                lower_slack: t - fl,
                upper_slack: fp + a_over_k - t,
                pi_slacks: past_n0.then_some((pi - fl, fp + a_over_k - pi)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SandwichReport {
        lambda,
        k,
        degree: sp.degree(),
        k_squared: k_squared.to_string(),
        margins: sp.margins,
        trace_pi: trace_pi.to_string(),
        trace_pi_value: pi,
        n0,
        levels,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub size: usize,
    pub kernel: usize,
    pub smallest_positive: Option<f64>,
    pub largest: Option<f64>,
    pub snapped_residual: f64,
}

impl SpectrumSummary {
    fn of(s: &Spectrum) -> Self {
        Self {
            size: s.eigenvalues.len(),
            kernel: s.kernel_count,
            smallest_positive: s.eigenvalues.get(s.kernel_count).copied(),
            largest: s.eigenvalues.last().copied(),
            snapped_residual: s.snapped_residual,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Finite,
    Abelian,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub level: usize,
    pub quotient: String,
    pub backend: Backend,
    pub order: Option<usize>,
    /// `F_n(0)` as an exact fraction (finite backend).
    pub f0: Option<String>,
    pub f0_value: Option<f64>,
    pub f0_error: Option<f64>,
    pub logdet: Option<f64>,
    pub detclass: Option<f64>,
    pub decay_margin: Option<f64>,
    /// `F_n(K²) = a_j` held exactly.
    pub total_ok: Option<bool>,
    pub parts_residual: Option<f64>,
    pub spectrum: Option<SpectrumSummary>,
    pub error: Option<String>,
}

impl LevelRow {
    fn failed(level: usize, quotient: &str, e: &Error) -> Self {
        Self {
            level,
            quotient: quotient.into(),
            backend: Backend::Failed,
            order: None,
            f0: None,
            f0_value: None,
            f0_error: None,
            logdet: None,
            detclass: None,
            decay_margin: None,
            total_ok: None,
            parts_residual: None,
            spectrum: None,
            error: Some(e.to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    /// Largest `F_n(0)` over the window.
    pub f0_upper: Option<f64>,
    pub f0_lower: Option<f64>,
    /// The last successful level's `F_n(0)`, with `|last − previous|` as bracket.
    pub extrapolated: Option<f64>,
    pub bracket: Option<f64>,
    pub detclass_liminf: Option<f64>,
    pub detclass_limsup: Option<f64>,
    pub determinant: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TowerReport {
    pub complex: String,
    pub j: usize,
    pub tower: String,
    pub a_j: usize,
    pub k_squared: String,
    pub levels: Vec<LevelRow>,
    /// Abelian-backend row for free-abelian models (the group itself).
    pub abelian: Option<LevelRow>,
    pub limit: LimitRow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TowerOptions {
    pub decay_grid: Vec<f64>,
    pub quadrature: QuadratureOptions,
    pub closure_cap: usize,
    /// Levels used for the limit row, counted from the end; `None` uses all.
    pub window: Option<usize>,
    /// Evaluate the group itself with the abelian backend when possible.
    pub abelian_row: bool,
}

impl Default for TowerOptions {
    fn default() -> Self {
        Self {
            decay_grid: DECAY_GRID.to_vec(),
            quadrature: QuadratureOptions::default(),
            closure_cap: DEFAULT_CLOSURE_CAP,
            window: None,
            abelian_row: true,
        }
    }
}

/// A report together with the per-level densities it was built from.
#[derive(Clone, Debug)]
pub struct TowerRun {
    pub report: TowerReport,
    pub laplacian: RingMatrix,
    pub k_squared: Rational,
    pub densities: Vec<Option<SpectralDensity>>,
    pub spectra: Vec<Option<Spectrum>>,
}

fn min_decay_margin(d: &SpectralDensity, a_j: usize, k2: f64, grid: &[f64]) -> Option<f64> {
    check_uniform_decay(std::slice::from_ref(d), a_j, k2, grid).ok().map(|r| r.min_margin).filter(|m| m.is_finite())
}

fn finite_row(
    level: usize,
    q: &QuotientSpec,
    lap: &RingMatrix,
    k2: &Rational,
    opts: &TowerOptions,
) -> Result<(LevelRow, SpectralDensity, Spectrum)> {
    let (order, s, d) = finite_level(lap, q, k2, opts.closure_cap)?;
    let a_j = lap.rows();
    let k2f = to_f64(k2);
    let logdet = fk_logdet_step(&d);
    let row = LevelRow {
        level,
        quotient: q.name.clone(),
        backend: Backend::Finite,
        order: Some(order),
        f0: Some(d.zero_value().to_string()),
        f0_value: Some(to_f64(d.zero_value())),
        f0_error: Some(0.0),
        logdet: Some(logdet),
        detclass: Some(detclass_integral(&d)?),
        decay_margin: min_decay_margin(&SpectralDensity::Step(d.clone()), a_j, k2f, &opts.decay_grid),
        total_ok: Some(d.value(k2f) == int(a_j as i64)),
        parts_residual: Some(parts_identity_check(&d)?),
        spectrum: Some(SpectrumSummary::of(&s)),
        error: None,
    };
    Ok((row, SpectralDensity::Step(d), s))
}

fn abelian_row(level: usize, q: &QuotientSpec, lap: &RingMatrix, k2: &Rational, opts: &TowerOptions) -> Result<LevelRow> {
    let sym = TorusSymbol::through(lap, q)?;
    let f0 = sdf_quadrature_symbol(&sym, 0.0, &opts.quadrature)?;
    let ld = fk_logdet_symbol(&sym, &opts.quadrature)?;
    let a_j = lap.rows();
    let k2f = to_f64(k2);
    let mut points = Vec::new();
    for &l in opts.decay_grid.iter().filter(|l| **l > 0.0 && **l < 1.0) {
        let r = sdf_quadrature_symbol(&sym, l, &opts.quadrature)?;
        points.push(SamplePoint { lambda: l, value: r.value, error: r.error_bound });
    }
    let sampled = SpectralDensity::Sampled(SampledDensity::new(points, a_j, Some(f0.value))?);
    let converged = f0.converged && ld.converged;
    Ok(LevelRow {
        level,
        quotient: q.name.clone(),
        backend: Backend::Abelian,
        order: None,
        f0: None,
        f0_value: Some(f0.value),
        f0_error: Some(f0.error_bound),
        logdet: Some(ld.value),
        detclass: Some(k2f.ln() * (a_j as f64 - f0.value) - ld.value),
        decay_margin: min_decay_margin(&sampled, a_j, k2f, &opts.decay_grid),
        total_ok: None,
        parts_residual: None,
        spectrum: None,
        error: (!converged).then(|| format!("quadrature not converged at grid {}", ld.grid.max(f0.grid))),
    })
}

/// Runs every level of `tower` on the matching backend. Levels fail
/// independently; failures are recorded in their rows.
pub fn run_tower(c: &EquivariantComplex, j: usize, tower_name: &str, tower: &[QuotientSpec], opts: &TowerOptions) -> Result<TowerRun> {
    let lap = assemble_laplacian(c, j)?;
    let kk = norm_bound_k(&lap);
    let k2 = &kk * &kk;
    let results: Vec<(LevelRow, Option<SpectralDensity>, Option<Spectrum>)> = tower
        .par_iter()
        .enumerate()
        .map(|(i, q)| {
            let level = i + 1;
            if q.is_finite() {
                match finite_row(level, q, &lap, &k2, opts) {
                    Ok((row, d, s)) => (row, Some(d), Some(s)),
                    Err(e) => (LevelRow::failed(level, &q.name, &e), None, None),
                }
            } else {
                match abelian_row(level, q, &lap, &k2, opts) {
                    Ok(row) => (row, None, None),
                    Err(e) => (LevelRow::failed(level, &q.name, &e), None, None),
                }
            }
        })
        .collect();
    let mut levels = Vec::with_capacity(results.len());
    let mut densities = Vec::with_capacity(results.len());
    let mut spectra = Vec::with_capacity(results.len());
    for (r, d, s) in results {
        levels.push(r);
        densities.push(d);
        spectra.push(s);
    }
    let abelian = (opts.abelian_row && c.model().is_abelian()).then(|| {
        let q = QuotientSpec::abelianization(format!("Z^{}", c.model().rank()), c.model().rank())?;
        abelian_row(0, &q, &lap, &k2, opts)
    });
    let abelian = match abelian {
        Some(Ok(row)) => Some(row),
        Some(Err(e)) => Some(LevelRow::failed(0, "abelian", &e)),
        None => None,
    };
    let limit = limit_row(&levels, opts.window);
    let report = TowerReport {
        complex: c.name.clone(),
        j,
        tower: tower_name.into(),
        a_j: lap.rows(),
        k_squared: k2.to_string(),
        levels,
        abelian,
        limit,
    };
    Ok(TowerRun { report, laplacian: lap, k_squared: k2, densities, spectra })
}

fn limit_row(levels: &[LevelRow], window: Option<usize>) -> LimitRow {
    let ok: Vec<&LevelRow> = levels.iter().filter(|r| r.backend != Backend::Failed).collect();
    let w = window.unwrap_or(ok.len()).min(ok.len());
    let tail = &ok[ok.len() - w..];
    let f0: Vec<f64> = tail.iter().filter_map(|r| r.f0_value).collect();
    let dc: Vec<f64> = tail.iter().filter_map(|r| r.detclass).collect();
    let max = |v: &[f64]| v.iter().copied().reduce(f64::max);
    let min = |v: &[f64]| v.iter().copied().reduce(f64::min);
    let all_f0: Vec<f64> = ok.iter().filter_map(|r| r.f0_value).collect();
    let n = all_f0.len();
    let nonneg = ok.iter().filter(|r| r.backend == Backend::Finite).all(|r| r.logdet.is_some_and(|l| l >= -1e-9));
    let determinant = if dc.is_empty() {
        "no data".to_string()
    } else if nonneg {
        format!("bounded: determinant-class integrals ≤ {:.6} and log det′ ≥ 0 on all finite levels", max(&dc).unwrap())
    } else {
        "evidence against: negative log det′ on a finite level".to_string()
    };
    LimitRow {
        f0_upper: max(&f0),
        f0_lower: min(&f0),
        extrapolated: all_f0.last().copied(),
        bracket: (n >= 2).then(|| (all_f0[n - 1] - all_f0[n - 2]).abs()),
        detclass_liminf: min(&dc),
        detclass_limsup: max(&dc),
        determinant,
    }
}

/// Report only; see [`run_tower`].
pub fn approximate_invariants(c: &EquivariantComplex, j: usize, tower_name: &str, opts: &TowerOptions) -> Result<TowerReport> {
    let tower = c.tower(tower_name)?.to_vec();
    Ok(run_tower(c, j, tower_name, &tower, opts)?.report)
}

fn csv_opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or(String::new(), |x| x.to_string())
}

impl TowerReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// One row per level, then the abelian row (level 0) and a `limit` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "level,quotient,backend,order,f0,f0_value,f0_error,logdet,detclass,decay_margin,total_ok,parts_residual,kernel,smallest_positive,largest,error\n",
        );
        let row = |r: &LevelRow| {
            let s = r.spectrum.as_ref();
            format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},\"{}\"\n",
                r.level,
                r.quotient.replace(',', ";"),
                serde_json::to_value(r.backend).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                csv_opt(&r.order),
                csv_opt(&r.f0),
                csv_opt(&r.f0_value),
                csv_opt(&r.f0_error),
                csv_opt(&r.logdet),
                csv_opt(&r.detclass),
                csv_opt(&r.decay_margin),
                csv_opt(&r.total_ok),
                csv_opt(&r.parts_residual),
                csv_opt(&s.map(|s| s.kernel)),
                csv_opt(&s.and_then(|s| s.smallest_positive)),
                csv_opt(&s.and_then(|s| s.largest)),
                r.error.clone().unwrap_or_default().replace('"', "'"),
            )
        };
        for r in self.levels.iter().chain(self.abelian.iter()) {
            out.push_str(&row(r));
        }
        let l = &self.limit;
        out.push_str(&format!(
            "limit,,,,,{},{},,{},,,,,,,\"{}\"\n",
            csv_opt(&l.extrapolated),
            csv_opt(&l.bracket),
            csv_opt(&l.detclass_liminf),
            l.determinant
        ));
        out
    }
}

/// `Σ p(λ_i)/|G|` over a pushed spectrum, an independent float check of exact traces.
pub fn trace_from_spectrum(s: &Spectrum, p: &ChebyshevSeries) -> f64 {
    s.eigenvalues.iter().map(|&l| p.eval(l)).sum::<f64>() / s.order as f64
}
