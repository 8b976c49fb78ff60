use criterion::{criterion_group, criterion_main, Criterion};
use l2approx::finite::{kernel_count_exact, spectrum};
use l2approx::linalg::{rank_bareiss, rank_exact};
use l2approx::spectral::{sandwich_polynomial, SandwichOptions};
use l2approx::{enumerate_quotient, matrix_poly_apply, norm_bound_k, push_matrix, Polynomial};
use l2approx_bench::{laplacian, level};

fn enumeration(c: &mut Criterion) {
    let sl5 = level("wedge2", "sl2", 2);
    c.bench_function("enumerate SL(2) mod 5", |b| b.iter(|| enumerate_quotient(&sl5).unwrap()));
    let affine = level("bs12", "affine", 5);
    c.bench_function("enumerate BS(1,2) affine mod 13", |b| b.iter(|| enumerate_quotient(&affine).unwrap()));
}

fn kernels(c: &mut Criterion) {
    let lap = laplacian("torus", 1);
    let g = enumerate_quotient(&level("torus", "square", 4)).unwrap();
    let pushed = push_matrix(&lap, &g).unwrap();
    let exact = pushed.exact().unwrap().clone();
    let mut group = c.benchmark_group("torus (Z/16)^2 j=1");
    group.sample_size(10);
    group.bench_function("push", |b| b.iter(|| push_matrix(&lap, &g).unwrap()));
    group.bench_function("modular rank", |b| b.iter(|| rank_exact(&exact)));
    group.bench_function("kernel count", |b| b.iter(|| kernel_count_exact(&pushed).unwrap()));
    group.bench_function("spectrum", |b| b.iter(|| spectrum(&pushed).unwrap()));
    group.finish();
    let small = push_matrix(&lap, &enumerate_quotient(&level("torus", "square", 3)).unwrap()).unwrap();
    let small_exact = small.exact().unwrap().clone();
    c.bench_function("Bareiss rank (Z/8)^2 j=1", |b| b.iter(|| rank_bareiss(&small_exact)));
}

fn polynomials(c: &mut Criterion) {
    let lap = laplacian("circle", 0);
    let kk = norm_bound_k(&lap);
    let k2 = &kk * &kk;
    let opts = SandwichOptions::default();
    c.bench_function("sandwich polynomial λ=0.5 k=4", |b| b.iter(|| sandwich_polynomial(0.5, 4, &k2, &opts).unwrap()));
    let p = sandwich_polynomial(0.5, 4, &k2, &opts).unwrap().polynomial;
    c.bench_function("circle p(Δ) in the group ring", |b| b.iter(|| matrix_poly_apply(&lap, &p).unwrap()));
    let wedge = laplacian("wedge2", 1);
    let sixth = Polynomial::monomial(6);
    c.bench_function("wedge Δ₁⁶ in the group ring", |b| b.iter(|| matrix_poly_apply(&wedge, &sixth).unwrap()));
}

criterion_group!(benches, enumeration, kernels, polynomials);
criterion_main!(benches);
