use l2approx::examples::{self, NAMES};
use l2approx::ring::rat;
use l2approx::spectral::{run_tower, Backend, TowerOptions};
use l2approx::{approximate_invariants, load_complex, load_complex_json, LoadOptions, SpectralDensity, TowerReport};

fn zero_values(name: &str, tower: &str, j: usize) -> Vec<String> {
    let ex = examples::example(name).unwrap();
    let opts = TowerOptions { abelian_row: false, ..TowerOptions::default() };
    let report = approximate_invariants(&ex.complex, j, tower, &opts).unwrap();
    report.levels.iter().map(|r| r.f0.clone().unwrap()).collect()
}

#[test]
fn exported_documents_reload_to_the_same_reports() {
    for name in NAMES {
        let ex = examples::example(name).unwrap();
        let json = serde_json::to_string(&examples::export(name).unwrap()).unwrap();
        let reloaded = load_complex_json(&json, LoadOptions::default()).unwrap();
        assert_eq!(reloaded.cells(), ex.complex.cells());
        let opts = TowerOptions { abelian_row: false, ..TowerOptions::default() };
        let a = approximate_invariants(&ex.complex, 0, ex.default_tower, &opts).unwrap();
        let b = approximate_invariants(&reloaded, 0, ex.default_tower, &opts).unwrap();
        assert_eq!(a, b, "{name}");
        let doc = reloaded.to_doc();
        assert!(load_complex(&doc, LoadOptions::default()).is_ok());
    }
}

#[test]
fn baumslag_solitar_covers_have_first_betti_one() {
    // BS(1,2) abelianizes to Z, so each finite cover (with χ = 0) has b₀ = b₁ = 1 and b₂ = 0.
    let orders = [6i64, 20, 21, 54, 110, 156];
    let inverse: Vec<String> = orders.iter().map(|n| rat(1, *n).to_string()).collect();
    assert_eq!(zero_values("bs12", "affine", 0), inverse);
    assert_eq!(zero_values("bs12", "affine", 1), inverse);
    assert!(zero_values("bs12", "affine", 2).iter().all(|v| v == "0"));
}

#[test]
fn identity_has_no_kernel_and_unit_spectrum() {
    let ex = examples::example("identity").unwrap();
    let run = run_tower(&ex.complex, 0, "cyclic", ex.complex.tower("cyclic").unwrap(), &TowerOptions::default()).unwrap();
    for d in run.densities.iter().flatten() {
        assert_eq!(d.eval(0.999), 0.0);
        assert_eq!(d.eval(1.0), 1.0);
    }
    assert!(run.report.levels.iter().all(|r| r.logdet == Some(0.0)));
}

#[test]
fn torus_abelian_row_sees_no_kernel() {
    let ex = examples::example("torus").unwrap();
    let report = approximate_invariants(&ex.complex, 1, "square", &TowerOptions::default()).unwrap();
    let row = report.abelian.as_ref().expect("free abelian model gets an abelian row");
    assert_eq!(row.backend, Backend::Abelian);
    assert_eq!(row.f0_value, Some(0.0));
    assert!(row.error.is_none());
    assert_eq!(report.limit.f0_upper, Some(2.0));
    assert_eq!(report.limit.f0_lower, Some(2.0 / 256.0));
    assert_eq!(report.limit.extrapolated, Some(2.0 / 256.0));
    let back = TowerReport::from_json(&report.to_json().unwrap()).unwrap();
    assert_eq!(back, report);
}

#[test]
fn wedge_betti_decreases_to_one() {
    let values = zero_values("wedge2", "sl2", 1);
    assert_eq!(values, ["25/24", "5/4", "121/120"]);
    let ex = examples::example("wedge2").unwrap();
    let run = run_tower(&ex.complex, 0, "sl2", ex.complex.tower("sl2").unwrap(), &TowerOptions::default()).unwrap();
    for d in run.densities.iter().flatten() {
        let SpectralDensity::Step(s) = d else { panic!("finite levels give step densities") };
        assert!(s.jumps().iter().all(|(l, _)| *l > 0.5 || *l <= 1e-12));
    }
}
