//! Seeded property suites over the whole stack.
//!
//! (a) quadratic decay of the linearization error, (b) directional
//! derivatives of the model against finite differences, (c) collapse to
//! classical Frank-Wolfe on smooth functions, (d) LP duality certificates,
//! (e) the active signature method against exhaustive enumeration.

use std::fmt;
use std::time::{Duration, Instant};

use crate::aasm::{aasm_minimize, brute_force_pl_min, local_optimality_test, solve_piece, AasmOptions, AasmStatus};
use crate::asfw::{asfw_run_with_callback, AsfwOptions, StepKind, StepRule};
use crate::linalg::{dot, norm2};
use crate::lp::{self, check_certificate, LpStatus};
use crate::plmodel::AbsLinearForm;
use crate::polyhedron::{LinearConstraint, Polyhedron};
use crate::rng::NormalRng;
use crate::tape::{abs_linearize, directional_fd, Tape};
use crate::testgen::{self, Quadratic};

#[derive(Clone, Debug)]
pub struct SelftestOptions {
    pub seed: u64,
    /// Fault injection: perturb `L` of every linearization with `s ≥ 2`.
    pub corrupt_l: bool,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        SelftestOptions { seed: 20240501, corrupt_l: false }
    }
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub failures: Vec<String>,
    pub elapsed: Duration,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.cases > 0
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<26} cases={:<4} failures={:<3} {:.2}s",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.failures.len(),
            self.elapsed.as_secs_f64()
        )?;
        if let Some(first) = self.failures.first() {
            write!(f, "  first: {first}")?;
        }
        Ok(())
    }
}

fn linearize(tape: &Tape, x: &[f64], opts: &SelftestOptions) -> AbsLinearForm {
    let mut form = abs_linearize(tape, x).expect("random tapes evaluate on the sample box");
    if opts.corrupt_l && form.s() >= 2 {
        let s = form.s();
        form.perturb_l(s - 1, 0, 0.5);
    }
    form
}

fn unit(rng: &mut NormalRng, n: usize) -> Vec<f64> {
    let d = rng.normals(n);
    let nd = norm2(&d);
    d.iter().map(|v| v / nd).collect()
}

fn suite<F: FnOnce(&mut NormalRng, &mut Vec<String>) -> usize>(name: &'static str, seed: u64, body: F) -> SuiteReport {
    let start = Instant::now();
    let mut rng = NormalRng::new(seed);
    let mut failures = Vec::new();
    let cases = body(&mut rng, &mut failures);
    SuiteReport { name, cases, failures, elapsed: start.elapsed() }
}

/// (a) `e(h/2) ≤ 0.3·e(h) + 1e−12` whenever `e(h) > 1e−10`, plus exact
/// reproduction of `f(x̄)` and strict triangularity, on 100 random tapes.
pub fn linearization_decay(opts: &SelftestOptions) -> SuiteReport {
    suite("linearization-decay", opts.seed, |rng, fails| {
        let h = 1e-3;
        for k in 0..100 {
            let n = 1 + rng.below(5);
            let size = 6 + rng.below(11);
            let tape = testgen::random_tape(rng, n, size);
            let xbar: Vec<f64> = (0..n).map(|_| rng.uniform_in(-1.5, 1.5)).collect();
            let form = linearize(&tape, &xbar, opts);
            let fbar = tape.value(&xbar).unwrap();
            if !(form.m_mat().is_strictly_lower() && form.l_mat().is_strictly_lower()) {
                fails.push(format!("tape {k}: M or L not strictly lower"));
            }
            let at0 = form.eval_pl(&vec![0.0; n]).0;
            if (at0 - fbar).abs() > 1e-12 * (1.0 + fbar.abs()) {
                fails.push(format!("tape {k}: model at 0 is {at0}, f = {fbar}"));
                continue;
            }
            let d = unit(rng, n);
            let err = |r: f64| {
                let dx: Vec<f64> = d.iter().map(|v| r * v).collect();
                let xp: Vec<f64> = xbar.iter().zip(&dx).map(|(a, b)| a + b).collect();
                (tape.value(&xp).unwrap() - form.eval_pl(&dx).0).abs()
            };
            let (e1, e2) = (err(h), err(h / 2.0));
            if e1 > 1e-10 && e2 > 0.3 * e1 + 1e-12 {
                fails.push(format!("tape {k}: e(h)={e1:e}, e(h/2)={e2:e}"));
            }
        }
        100
    })
}

/// (b) On kink-free samples, `Δf(x̄; d)/‖d‖` matches the one-sided finite
/// difference to `1e−6·(1 + |fd|)`.
pub fn directional_derivatives(opts: &SelftestOptions) -> SuiteReport {
    suite("directional-derivative", opts.seed ^ 0xb, |rng, fails| {
        let r = 1e-7;
        let mut checked = 0;
        let mut attempts = 0;
        while checked < 100 && attempts < 1000 {
            attempts += 1;
            let n = 1 + rng.below(5);
            let size = 6 + rng.below(11);
            let tape = testgen::random_tape(rng, n, size);
            let xbar: Vec<f64> = (0..n).map(|_| rng.uniform_in(-1.5, 1.5)).collect();
            let form = linearize(&tape, &xbar, opts);
            let fbar = tape.value(&xbar).unwrap();
            let zero = vec![0.0; n];
            let sig0 = form.signature(&zero, 1e-3);
            if sig0.has_zero() {
                continue;
            }
            let d = unit(rng, n);
            let dx: Vec<f64> = d.iter().map(|v| r * v).collect();
            if form.signature(&dx, 0.0) != form.signature(&zero, 0.0) {
                continue;
            }
            checked += 1;
            let model = form.delta_eval(fbar, &dx) / r;
            let fd = directional_fd(&tape, &xbar, &d, r).unwrap();
            if (model - fd).abs() > 1e-6 * (1.0 + fd.abs()) {
                fails.push(format!("sample {attempts}: model slope {model}, finite difference {fd}"));
            }
        }
        checked
    })
}

/// (c) ASFW on 20 smooth quadratics over random boxes against a plain
/// Frank-Wolfe loop with the sign-rule oracle on the gradient.
pub fn smooth_collapse(opts: &SelftestOptions) -> SuiteReport {
    suite("smooth-collapse", opts.seed ^ 0xc, |rng, fails| {
        for k in 0..20 {
            let n = 2 + rng.below(7);
            let q = Quadratic::random(rng, n);
            let tape = q.tape();
            let c = testgen::random_box(rng, n);
            let x0: Vec<f64> = (0..n).map(|j| rng.uniform_in(c.lo[j], c.hi[j])).collect();
            let kind = if k % 2 == 0 { StepKind::OpenLoopSqrt } else { StepKind::OpenLoopHarmonic };
            let run_opts = AsfwOptions {
                rule: StepRule::new(kind),
                max_iters: 40,
                gap_tol: 0.0,
                ..AsfwOptions::default()
            };
            let mut x_ref = x0.clone();
            let mut bad: Option<String> = None;
            let res = asfw_run_with_callback(&tape, &c, &x0, &run_opts, &mut |row, x, v| {
                if bad.is_some() {
                    return;
                }
                let g = q.gradient(&x_ref);
                let v_ref: Vec<f64> = (0..n).map(|j| if g[j] > 0.0 { c.lo[j] } else { c.hi[j] }).collect();
                let diff: Vec<f64> = v_ref.iter().zip(&x_ref).map(|(a, b)| a - b).collect();
                let gap_ref = -dot(&g, &diff);
                let dx = x.iter().zip(&x_ref).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                let dv = v.iter().zip(&v_ref).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                if dx > 1e-10 || dv > 1e-10 || (row.gap - gap_ref).abs() > 1e-10 * (1.0 + gap_ref.abs()) {
                    bad = Some(format!(
                        "quadratic {k}, t={}: |x−x_ref|={dx:e}, |v−v_ref|={dv:e}, gap {} vs {gap_ref}",
                        row.t, row.gap
                    ));
                }
                x_ref = x_ref.iter().zip(&v_ref).map(|(a, b)| (1.0 - row.alpha) * a + row.alpha * b).collect();
            });
            match res {
                Err(e) => fails.push(format!("quadratic {k}: {e}")),
                Ok(_) => fails.extend(bad),
            }
        }
        20
    })
}

/// (d) Optimal status, strong duality and complementary slackness on 200
/// random LPs.
pub fn lp_duality(opts: &SelftestOptions) -> SuiteReport {
    suite("lp-duality", opts.seed ^ 0xd, |rng, fails| {
        for k in 0..200 {
            let p = testgen::random_lp(rng);
            match lp::solve(&p, lp::DEFAULT_LP_TOL) {
                Err(e) => fails.push(format!("lp {k}: {e}")),
                Ok(sol) if sol.status != LpStatus::Optimal => fails.push(format!("lp {k}: status {:?}", sol.status)),
                Ok(sol) => {
                    let rep = check_certificate(&p, &sol);
                    if !rep.passes(sol.objective, 1e-7) {
                        fails.push(format!("lp {k}: {rep:?}"));
                    }
                }
            }
        }
        200
    })
}

fn random_feasible_set(rng: &mut NormalRng, n: usize) -> Polyhedron {
    let c = testgen::random_box(rng, n);
    if rng.below(2) == 0 {
        return c;
    }
    // Rows through a neighbourhood of 0, which the box always contains.
    let rows = (0..1 + rng.below(3)).map(|_| LinearConstraint::le(rng.normals(n), rng.uniform_in(0.2, 1.0)));
    c.intersect(rows.collect::<Vec<_>>())
}

fn random_start(rng: &mut NormalRng, c: &Polyhedron) -> Vec<f64> {
    let x: Vec<f64> = (0..c.dim()).map(|j| rng.uniform_in(c.lo[j], c.hi[j])).collect();
    if c.contains(&x, 0.0) {
        x
    } else {
        vec![0.0; c.dim()]
    }
}

/// (e) AASM against exhaustive enumeration: equal optima on 50 convex
/// instances, and on 50 nonconvex ones a point no better than the oracle
/// that passes the local optimality test.
pub fn aasm_oracle(opts: &SelftestOptions) -> SuiteReport {
    suite("aasm-oracle", opts.seed ^ 0xe, |rng, fails| {
        let aopts = AasmOptions::default();
        for k in 0..100 {
            let convex = k < 50;
            let n = 1 + rng.below(6);
            let form = if convex {
                testgen::random_convex_pl(rng, n, 8)
            } else {
                let s = 1 + rng.below(8);
                testgen::random_pl(rng, n, s)
            };
            let c = random_feasible_set(rng, n);
            let start = random_start(rng, &c);
            let tag = if convex { "convex" } else { "nonconvex" };
            let res = match aasm_minimize(&form, &c, &start, &aopts) {
                Ok(r) => r,
                Err(e) => {
                    fails.push(format!("{tag} {k}: {e}"));
                    continue;
                }
            };
            let (_, best) = match brute_force_pl_min(&form, &c) {
                Ok(b) => b,
                Err(e) => {
                    fails.push(format!("{tag} {k}: oracle {e}"));
                    continue;
                }
            };
            let tol = 1e-8 * (1.0 + best.abs());
            if res.status != AasmStatus::LocalMin {
                fails.push(format!("{tag} {k}: status {:?}", res.status));
            } else if convex {
                if (res.psi_star - best).abs() > tol {
                    fails.push(format!("convex {k}: aasm {} vs oracle {best}", res.psi_star));
                }
            } else {
                if res.psi_star < best - tol {
                    fails.push(format!("nonconvex {k}: aasm {} below oracle {best}", res.psi_star));
                }
                let sigma = res.visited_signatures.last().expect("at least one polyhedron");
                let locally_optimal = solve_piece(&form, &c, sigma, &aopts)
                    .and_then(|piece| Ok(local_optimality_test(&form, &c, &piece, &aopts)?.0));
                match locally_optimal {
                    Ok(true) => {}
                    Ok(false) => fails.push(format!("nonconvex {k}: final point fails the local test")),
                    Err(e) => fails.push(format!("nonconvex {k}: {e}")),
                }
            }
        }
        100
    })
}

pub fn run_all(opts: &SelftestOptions) -> Vec<SuiteReport> {
    vec![
        linearization_decay(opts),
        directional_derivatives(opts),
        smooth_collapse(opts),
        lp_duality(opts),
        aasm_oracle(opts),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corrupted_l_is_caught() {
        let opts = SelftestOptions { corrupt_l: true, ..SelftestOptions::default() };
        assert!(!linearization_decay(&opts).passed());
    }
}
