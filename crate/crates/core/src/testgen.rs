//! Seeded random instances for property checks: tapes, LPs and
//! piecewise-linear forms.

use crate::linalg::{dot, Matrix};
use crate::lp::LpProblem;
use crate::plmodel::AbsLinearForm;
use crate::polyhedron::{LinearConstraint, Polyhedron};
use crate::rng::NormalRng;
use crate::tape::{abs_linearize, Tape, TapeBuilder, Var};

/// Random abs-smooth tape over `n` inputs with about `size` operations and
/// at least two `abs` nodes. Values stay moderate on `[-2, 2]^n`.
pub fn random_tape(rng: &mut NormalRng, n: usize, size: usize) -> Tape {
    let mut b = TapeBuilder::new(n);
    let mut pool: Vec<Var> = b.inputs();
    let mut abs_count = 0;
    let pick = |rng: &mut NormalRng, pool: &[Var]| pool[pool.len() - 1 - rng.below(pool.len().min(6))];
    for k in 0..size.max(2) {
        let u = pick(rng, &pool);
        let v = pick(rng, &pool);
        let force_abs = k + 2 >= size.max(2) && abs_count < 2;
        let op = if force_abs { 7 } else { rng.below(11) };
        let w = match op {
            0 => b.add(u, v),
            1 => b.sub(u, v),
            2 => {
                let m = b.mul(u, v);
                b.scale(m, 0.5)
            }
            3 => {
                let s = b.sin(u);
                b.scale(s, 1.0 + rng.uniform())
            }
            4 => b.cos(u),
            5 => {
                let s = b.sin(u);
                b.exp(s)
            }
            6 => {
                let sq = b.square(u);
                let t = b.add_const(sq, 1.0);
                b.ln(t)
            }
            7 => {
                let shifted = b.add_const(u, rng.uniform_in(-1.0, 1.0));
                abs_count += 1;
                b.abs(shifted)
            }
            8 => {
                abs_count += 1;
                b.max(u, v)
            }
            9 => {
                abs_count += 1;
                b.min(u, v)
            }
            _ => {
                let sq = b.square(u);
                b.scale(sq, 0.25)
            }
        };
        pool.push(w);
    }
    let tail: Vec<Var> = pool.iter().rev().take(3).copied().collect();
    let out = b.sum(&tail);
    b.finish(out)
}

/// Random smooth quadratic `Σ_k (b_kᵀx + e_k)² + qᵀx` and its data.
pub struct Quadratic {
    pub rows: Vec<Vec<f64>>,
    pub e: Vec<f64>,
    pub q: Vec<f64>,
}

impl Quadratic {
    pub fn random(rng: &mut NormalRng, n: usize) -> Quadratic {
        let k = 1 + rng.below(n + 1);
        Quadratic {
            rows: (0..k).map(|_| rng.normals(n)).collect(),
            e: rng.normals(k),
            q: rng.normals(n),
        }
    }

    pub fn tape(&self) -> Tape {
        let n = self.q.len();
        let mut b = TapeBuilder::new(n);
        let x = b.inputs();
        let mut terms = Vec::new();
        for (row, &e) in self.rows.iter().zip(&self.e) {
            let r = b.dot(row, &x);
            let r = b.add_const(r, e);
            terms.push(b.square(r));
        }
        terms.push(b.dot(&self.q, &x));
        let out = b.sum(&terms);
        b.finish(out)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.q.clone();
        for (row, &e) in self.rows.iter().zip(&self.e) {
            let r = 2.0 * (dot(row, x) + e);
            for (gj, rj) in g.iter_mut().zip(row) {
                *gj += r * rj;
            }
        }
        g
    }
}

/// Random box with corners in `[-3, -0.5] × [0.5, 3]`.
pub fn random_box(rng: &mut NormalRng, n: usize) -> Polyhedron {
    let lo = (0..n).map(|_| rng.uniform_in(-3.0, -0.5)).collect();
    let hi = (0..n).map(|_| rng.uniform_in(0.5, 3.0)).collect();
    Polyhedron::with_bounds(lo, hi)
}

/// Random feasible, bounded LP. Some inequality rows are tight at a known
/// feasible point and some are duplicated, so degenerate vertices occur.
pub fn random_lp(rng: &mut NormalRng) -> LpProblem {
    let n = 2 + rng.below(11);
    let mut poly = random_box(rng, n);
    let x_feas: Vec<f64> = (0..n)
        .map(|j| poly.lo[j] + (poly.hi[j] - poly.lo[j]) * rng.uniform())
        .collect();
    let m_in = rng.below(9);
    let m_eq = rng.below(3.min(n));
    let mut rows = Vec::new();
    for _ in 0..m_in {
        let a = rng.normals(n);
        let slack = if rng.below(3) == 0 { 0.0 } else { rng.uniform() };
        let rhs = dot(&a, &x_feas) + slack;
        if rng.below(6) == 0 {
            rows.push(LinearConstraint::le(a.clone(), rhs));
        }
        rows.push(LinearConstraint::le(a, rhs));
    }
    for _ in 0..m_eq {
        let a = rng.normals(n);
        let rhs = dot(&a, &x_feas);
        rows.push(LinearConstraint::eq(a, rhs));
    }
    if rng.below(4) == 0 {
        // A singleton row exercises the presolve.
        let j = rng.below(n);
        let mut a = vec![0.0; n];
        a[j] = rng.uniform_in(0.5, 2.0);
        rows.push(LinearConstraint::ge(a.clone(), a[j] * (x_feas[j] - rng.uniform())));
    }
    poly = poly.intersect(rows);
    LpProblem::new(rng.normals(n), poly)
}

/// Convex piecewise-linear form built from sums of `|ℓ|`, `max(ℓ, ℓ')`,
/// `max(max(ℓ, ℓ'), ℓ'')` and `max(|ℓ|, ℓ')` with nonnegative weights, plus
/// a linear term. Returns a form with `1 ≤ s ≤ s_max` switching variables.
pub fn random_convex_pl(rng: &mut NormalRng, n: usize, s_max: usize) -> AbsLinearForm {
    assert!(s_max >= 2);
    let mut b = TapeBuilder::new(n);
    let x = b.inputs();
    let affine = |b: &mut TapeBuilder, rng: &mut NormalRng| {
        let d = b.dot(&rng.normals(n), &x);
        b.add_const(d, rng.normal())
    };
    let mut used = 0;
    let mut terms = vec![affine(&mut b, rng)];
    loop {
        let kind = rng.below(4);
        let cost = if kind >= 2 { 2 } else { 1 };
        if used + cost > s_max {
            break;
        }
        let l1 = affine(&mut b, rng);
        let l2 = affine(&mut b, rng);
        let t = match kind {
            0 => b.abs(l1),
            1 => b.max(l1, l2),
            2 => {
                let m = b.max(l1, l2);
                let l3 = affine(&mut b, rng);
                b.max(m, l3)
            }
            _ => {
                let a = b.abs(l1);
                b.max(a, l2)
            }
        };
        used += cost;
        terms.push(b.scale(t, rng.uniform_in(0.1, 2.0)));
        if rng.below(4) == 0 {
            break;
        }
    }
    let out = b.sum(&terms);
    let tape = b.finish(out);
    let xbar: Vec<f64> = (0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
    abs_linearize(&tape, &xbar).expect("piecewise-linear tapes evaluate everywhere")
}

/// Dense random form: no structure, usually nonconvex.
pub fn random_pl(rng: &mut NormalRng, n: usize, s: usize) -> AbsLinearForm {
    let z = Matrix::from_rows(&(0..s).map(|_| rng.normals(n)).collect::<Vec<_>>(), n);
    let mut m = Matrix::zeros(s, s);
    let mut l = Matrix::zeros(s, s);
    for i in 0..s {
        for j in 0..i {
            if rng.below(2) == 0 {
                m[(i, j)] = 0.5 * rng.normal();
            }
            if rng.below(2) == 0 {
                l[(i, j)] = 0.5 * rng.normal();
            }
        }
    }
    AbsLinearForm::new(z, m, l, rng.normals(n), rng.normals(s), rng.normals(s), rng.normals(s), rng.normal())
}

/// Largest `ψ((u+v)/2) − (ψ(u)+ψ(v))/2` over random pairs in the box of
/// `c`; nonpositive up to rounding for convex forms.
pub fn midpoint_convexity_violation(form: &AbsLinearForm, c: &Polyhedron, rng: &mut NormalRng, samples: usize) -> f64 {
    let n = form.n();
    let point = |rng: &mut NormalRng| -> Vec<f64> {
        (0..n).map(|j| rng.uniform_in(c.lo[j].max(-10.0), c.hi[j].min(10.0))).collect()
    };
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let u = point(rng);
        let v = point(rng);
        let mid: Vec<f64> = u.iter().zip(&v).map(|(a, b)| 0.5 * (a + b)).collect();
        let (fu, fv, fm) = (form.eval_pl(&u).0, form.eval_pl(&v).0, form.eval_pl(&mid).0);
        let scale = 1.0 + fu.abs() + fv.abs();
        worst = worst.max((fm - 0.5 * (fu + fv)) / scale);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp;

    #[test]
    fn tapes_are_reproducible_and_kinked() {
        let a = random_tape(&mut NormalRng::new(3), 3, 12);
        let b = random_tape(&mut NormalRng::new(3), 3, 12);
        assert_eq!(a.to_text(), b.to_text());
        assert!(a.num_switch() >= 2);
    }

    #[test]
    fn random_lps_are_solvable() {
        let mut rng = NormalRng::new(11);
        for _ in 0..20 {
            let p = random_lp(&mut rng);
            let sol = lp::solve(&p, 1e-9).unwrap();
            assert_eq!(sol.status, lp::LpStatus::Optimal);
        }
    }

    #[test]
    fn convex_generator_is_convex() {
        let mut rng = NormalRng::new(5);
        for _ in 0..20 {
            let f = random_convex_pl(&mut rng, 3, 8);
            assert!(f.s() >= 1 && f.s() <= 8);
            let c = random_box(&mut rng, 3);
            assert!(midpoint_convexity_violation(&f, &c, &mut rng, 200) <= 1e-12);
        }
    }

    #[test]
    fn quadratic_gradient_matches_tape() {
        let mut rng = NormalRng::new(2);
        let q = Quadratic::random(&mut rng, 4);
        let x = rng.normals(4);
        let form = abs_linearize(&q.tape(), &x).unwrap();
        for (g, a) in q.gradient(&x).iter().zip(form.a()) {
            assert!((g - a).abs() <= 1e-12 * (1.0 + g.abs()));
        }
    }
}
