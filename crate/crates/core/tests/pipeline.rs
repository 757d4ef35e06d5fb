use asfw_core::aasm::{aasm_minimize, brute_force_pl_min, AasmOptions, AasmStatus, FlipRule};
use asfw_core::bench::{self, BenchmarkInstance, LassoVariant, MaxqSet};
use asfw_core::linalg::Matrix;
use asfw_core::rng::NormalRng;
use asfw_core::testgen::midpoint_convexity_violation;
use asfw_core::{abs_linearize, AbsLinearForm, Polyhedron, SignatureVector};

fn random_feasible(inst: &BenchmarkInstance, rng: &mut NormalRng) -> Vec<f64> {
    (0..inst.n()).map(|j| rng.uniform_in(inst.poly.lo[j], inst.poly.hi[j])).collect()
}

fn assert_convex_models(inst: &BenchmarkInstance, seed: u64) {
    let mut rng = NormalRng::new(seed);
    let window = Polyhedron::cube(inst.n(), -2.0, 2.0);
    for _ in 0..20 {
        let xbar = random_feasible(inst, &mut rng);
        let form = abs_linearize(&inst.tape, &xbar).unwrap();
        let worst = midpoint_convexity_violation(&form, &window, &mut rng, 200);
        assert!(worst <= 1e-10, "{} at {xbar:?}: violation {worst:e}", inst.name);
    }
}

#[test]
fn convex_benchmarks_have_convex_models() {
    for set in [MaxqSet::C1, MaxqSet::C3] {
        assert_convex_models(&bench::maxq(6, set), 1);
    }
    assert_convex_models(&bench::chained_lq(6), 2);
    assert_convex_models(&bench::constrained_lasso(10, 20, 1.0, 3, LassoVariant::Box), 3);
}

/// `2x + 3y + |x| + |y|` (or `2x + 2y + ...`) on `[-1, 1]²`.
fn two_kinks(a: [f64; 2]) -> (AbsLinearForm, Polyhedron) {
    let form = AbsLinearForm::new(
        Matrix::identity(2),
        Matrix::zeros(2, 2),
        Matrix::zeros(2, 2),
        a.to_vec(),
        vec![0.0; 2],
        vec![1.0; 2],
        vec![0.0; 2],
        0.0,
    );
    (form, Polyhedron::cube(2, -1.0, 1.0))
}

fn second_signature(a: [f64; 2], rule: FlipRule) -> SignatureVector {
    let (form, c) = two_kinks(a);
    let opts = AasmOptions { flip_rule: rule, ..AasmOptions::default() };
    let res = aasm_minimize(&form, &c, &[0.5, 0.5], &opts).unwrap();
    assert_eq!(res.visited_signatures[0], SignatureVector::new(vec![1, 1]));
    let global = -a[0] - a[1] + 2.0;
    assert!((res.psi_star - global).abs() <= 1e-12, "psi*={}", res.psi_star);
    res.visited_signatures[1].clone()
}

#[test]
fn flip_rules_pick_different_kinks() {
    assert_eq!(second_signature([2.0, 3.0], FlipRule::MostNegativeDual), SignatureVector::new(vec![1, -1]));
    assert_eq!(second_signature([2.0, 3.0], FlipRule::LowestIndex), SignatureVector::new(vec![-1, 1]));
    assert_eq!(second_signature([2.0, 2.0], FlipRule::MostNegativeDual), SignatureVector::new(vec![-1, 1]));
}

#[test]
fn two_kink_global_minimum_by_enumeration() {
    let (form, c) = two_kinks([2.0, 3.0]);
    let (x, psi) = brute_force_pl_min(&form, &c).unwrap();
    assert!((psi + 3.0).abs() <= 1e-12);
    assert!((x[0] + 1.0).abs() <= 1e-12 && (x[1] + 1.0).abs() <= 1e-12);
}

#[test]
fn rn2_small_cases() {
    let inst = bench::rosenbrock_nesterov2(2);
    let form = abs_linearize(&inst.tape, &[0.0; 2]).unwrap();
    let res = aasm_minimize(&form, &inst.poly, &inst.x0, &AasmOptions::default()).unwrap();
    assert_eq!(res.polyhedra_visited, 2);
    assert_eq!(res.status, AasmStatus::LocalMin);

    let inst = bench::rosenbrock_nesterov2(3);
    let form = abs_linearize(&inst.tape, &[0.0; 3]).unwrap();
    let (x, psi) = brute_force_pl_min(&form, &inst.poly).unwrap();
    assert!(psi.abs() <= 1e-10, "psi={psi}");
    for xi in x {
        assert!((xi - 1.0).abs() <= 1e-10);
    }
}

#[test]
fn every_start_is_feasible() {
    let mut all = Vec::new();
    for n in [2usize, 5, 10] {
        for set in [MaxqSet::C1, MaxqSet::C2, MaxqSet::C3] {
            all.push(bench::maxq(n, set));
        }
        all.push(bench::chained_lq(n));
        all.push(bench::rosenbrock_nesterov1(n));
        all.push(bench::rosenbrock_nesterov2(n));
        all.push(bench::chained_crescent1(n));
        all.push(bench::active_faces(n));
        all.push(bench::chained_mifflin2(n));
        all.push(bench::chained_crescent2(n));
        for v in [LassoVariant::Box, LassoVariant::Ordered] {
            all.push(bench::constrained_lasso(n, 2 * n, 1.0, 9, v));
        }
    }
    all.push(bench::mifflin2());
    for inst in &all {
        assert!(inst.poly.contains(&inst.x0, 1e-12), "{} n={} x0 infeasible", inst.name, inst.n());
        assert!(inst.tape.value(&inst.x0).unwrap().is_finite());
    }
}
