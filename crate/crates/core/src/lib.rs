//! Approximation of L²-invariants of free `π`-CW complexes through towers of
//! finite and abelian quotients.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abelian;
pub mod complex;
pub mod error;
pub mod examples;
pub mod finite;
pub mod group;
pub mod linalg;
pub mod poly;
pub mod quotient;
pub mod ring;
pub mod spectral;

pub use complex::{assemble_laplacian, load_complex, load_complex_json, EquivariantComplex, LoadOptions};
pub use error::{Error, Result};
pub use finite::{enumerate_quotient, push_matrix, FiniteQuotient, QuotientLaplacian, QuotientMatrix};
pub use group::{normal_form, word_inv, word_mul, GroupModel, GroupWord, ModelKind};
pub use poly::{ChebyshevSeries, Polynomial};
pub use quotient::{is_trivial_in_quotient, quotient_image, QuotientElement, QuotientKind, QuotientSpec};
pub use ring::{l1_norm, matrix_poly_apply, norm_bound_k, ring_mul, vn_trace_pi, Rational, RingElement, RingMatrix};
pub use spectral::{
    approximate_invariants, check_uniform_decay, decay_bound, detclass_integral, fk_logdet_step, gap_criterion,
    parts_identity_check, sandwich_trace, sdf_eval, tower_limits, SpectralDensity, StepDensity, TowerReport,
};
pub use abelian::{boundary_ratio, fk_logdet_quadrature, folner_compression, sdf_quadrature, symbol_at, FolnerBox};
