//! Linear programs over a [`Polyhedron`]: `min cᵀx` with primal solution and
//! dual certificate.
//!
//! Dual sign convention (all multipliers reported by [`LpSolution`]):
//!
//! ```text
//! c = Aeqᵀ·dual_eq − Ainᵀ·dual_in + dual_lo − dual_hi,   dual_in, dual_lo, dual_hi ≥ 0
//! ```

mod presolve;
mod simplex;

use std::fmt::Write as _;

use thiserror::Error;

use crate::linalg::dot;
use crate::polyhedron::Polyhedron;

pub const DEFAULT_LP_TOL: f64 = 1e-9;
pub const DEFAULT_PIVOT_TOL: f64 = 1e-11;

#[derive(Clone, Debug)]
pub struct LpProblem {
    pub c: Vec<f64>,
    pub poly: Polyhedron,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub dual_eq: Vec<f64>,
    pub dual_in: Vec<f64>,
    pub dual_lo: Vec<f64>,
    pub dual_hi: Vec<f64>,
    /// Basic columns of the reduced problem after presolve, mapped to
    /// structural indices `0..n`; row slots are reported as `n + row`, with
    /// equality rows first.
    pub basis: Vec<usize>,
    pub simplex_iters: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("basis matrix became numerically singular")]
    NumericalBreakdown,
    #[error("simplex iteration limit reached after {0} iterations")]
    IterationLimit(usize),
    #[error("objective has length {got}, polyhedron has dimension {want}")]
    Dimension { got: usize, want: usize },
}

#[derive(Clone, Debug)]
pub struct LpOptions {
    pub tol: f64,
    pub pivot_tol: f64,
    pub presolve: bool,
    pub max_iters: Option<usize>,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions {
            tol: DEFAULT_LP_TOL,
            pivot_tol: DEFAULT_PIVOT_TOL,
            presolve: true,
            max_iters: None,
        }
    }
}

impl LpProblem {
    pub fn new(c: Vec<f64>, poly: Polyhedron) -> Self {
        LpProblem { c, poly }
    }

    /// Plain-text dump: objective row, then `=` rows, `<=` rows and bounds.
    pub fn to_text(&self) -> String {
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        let p = &self.poly;
        let mut s = format!("min {}\n", fmt(&self.c));
        for r in 0..p.num_eq() {
            let _ = writeln!(s, "eq {} = {:?}", fmt(p.aeq.row(r)), p.beq[r]);
        }
        for r in 0..p.num_in() {
            let _ = writeln!(s, "le {} <= {:?}", fmt(p.ain.row(r)), p.bin[r]);
        }
        let _ = writeln!(s, "lo {}", fmt(&p.lo));
        let _ = writeln!(s, "hi {}", fmt(&p.hi));
        s
    }
}

pub fn solve(lp: &LpProblem, tol: f64) -> Result<LpSolution, LpError> {
    solve_with(
        lp,
        &LpOptions {
            tol,
            ..LpOptions::default()
        },
    )
}

pub fn solve_with(lp: &LpProblem, opts: &LpOptions) -> Result<LpSolution, LpError> {
    assert!(opts.tol > 0.0, "tolerance must be positive");
    let p = &lp.poly;
    let n = p.dim();
    if lp.c.len() != n {
        return Err(LpError::Dimension {
            got: lp.c.len(),
            want: n,
        });
    }
    let infeasible = |x: Vec<f64>| LpSolution {
        status: LpStatus::Infeasible,
        objective: f64::NAN,
        x,
        dual_eq: vec![0.0; p.num_eq()],
        dual_in: vec![0.0; p.num_in()],
        dual_lo: vec![0.0; n],
        dual_hi: vec![0.0; n],
        basis: vec![],
        simplex_iters: 0,
    };

    let pre = if opts.presolve {
        match presolve::presolve(p, opts.tol) {
            Some(st) => st,
            None => return Ok(infeasible(vec![0.0; n])),
        }
    } else {
        presolve::Presolved {
            lo: p.lo.clone(),
            hi: p.hi.clone(),
            lo_src: vec![presolve::BoundSource::Box; n],
            hi_src: vec![presolve::BoundSource::Box; n],
            fixed: vec![false; n],
            fix_order: vec![],
            eq_keep: vec![true; p.num_eq()],
            in_keep: vec![true; p.num_in()],
        }
    };
    let red = pre.reduce(&lp.c, p);

    let (status, xr, yr, mur, basis, iters) = if red.eq_rows.is_empty() && red.in_rows.is_empty() {
        // Only bounds remain: each variable goes to the bound its cost prefers.
        let mut status = LpStatus::Optimal;
        let xr: Vec<f64> = (0..red.vars.len())
            .map(|k| {
                let (c, lo, hi) = (red.c[k], red.lo[k], red.hi[k]);
                let target = if c > 0.0 {
                    lo
                } else if c < 0.0 {
                    hi
                } else if lo.is_finite() {
                    lo
                } else if hi.is_finite() {
                    hi
                } else {
                    0.0
                };
                if !target.is_finite() {
                    status = LpStatus::Unbounded;
                    return if lo.is_finite() { lo } else if hi.is_finite() { hi } else { 0.0 };
                }
                target
            })
            .collect();
        (status, xr, vec![], vec![], vec![], 0)
    } else {
        let out = simplex::solve_reduced(
            &red.c, &red.aeq, &red.beq, &red.ain, &red.bin, &red.lo, &red.hi, opts,
        )?;
        let k = red.vars.len();
        let basis = out
            .basis
            .iter()
            .map(|&b| if b < k { red.vars[b] } else { n + (b - k) })
            .collect();
        (out.status, out.x, out.y_eq, out.mu, basis, out.iters)
    };

    let mut x = pre.lo.clone();
    for (k, &j) in red.vars.iter().enumerate() {
        x[j] = xr[k];
    }
    if status == LpStatus::Infeasible {
        let mut s = infeasible(x);
        s.simplex_iters = iters;
        return Ok(s);
    }

    let mut dual_eq = vec![0.0; p.num_eq()];
    let mut dual_in = vec![0.0; p.num_in()];
    if status == LpStatus::Optimal {
        for (k, &r) in red.eq_rows.iter().enumerate() {
            dual_eq[r] = yr[k];
        }
        for (k, &r) in red.in_rows.iter().enumerate() {
            dual_in[r] = mur[k];
        }
    }
    let (dual_lo, dual_hi) = if status == LpStatus::Optimal {
        pre.postsolve_duals(&lp.c, p, &mut dual_eq, &mut dual_in)
    } else {
        (vec![0.0; n], vec![0.0; n])
    };
    let objective = if status == LpStatus::Unbounded {
        f64::NEG_INFINITY
    } else {
        dot(&lp.c, &x)
    };
    Ok(LpSolution {
        status,
        x,
        objective,
        dual_eq,
        dual_in,
        dual_lo,
        dual_hi,
        basis,
        simplex_iters: iters,
    })
}

/// Residuals of the optimality certificate of a solution.
#[derive(Clone, Debug, Default)]
pub struct CertificateReport {
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub stationarity: f64,
    pub complementarity: f64,
    pub duality_gap: f64,
    pub dual_objective: f64,
}

impl CertificateReport {
    /// All residuals within `tol`, the gap within `tol·(1+|obj|)`.
    pub fn passes(&self, objective: f64, tol: f64) -> bool {
        self.primal_infeasibility <= tol
            && self.dual_infeasibility <= tol
            && self.stationarity <= tol
            && self.complementarity <= tol
            && self.duality_gap <= tol * (1.0 + objective.abs())
    }
}

/// Checks an optimal solution against its own dual multipliers. Infinite
/// bounds count only when their multiplier is nonzero.
pub fn check_certificate(lp: &LpProblem, sol: &LpSolution) -> CertificateReport {
    let p = &lp.poly;
    let n = p.dim();
    let mut rep = CertificateReport {
        primal_infeasibility: p.max_violation(&sol.x),
        ..Default::default()
    };
    let neg = |v: f64| (-v).max(0.0);
    rep.dual_infeasibility = sol
        .dual_in
        .iter()
        .chain(&sol.dual_lo)
        .chain(&sol.dual_hi)
        .fold(0.0f64, |a, &v| a.max(neg(v)));

    let mut resid = lp.c.clone();
    for r in 0..p.num_eq() {
        crate::linalg::axpy(-sol.dual_eq[r], p.aeq.row(r), &mut resid);
    }
    for r in 0..p.num_in() {
        crate::linalg::axpy(sol.dual_in[r], p.ain.row(r), &mut resid);
    }
    for j in 0..n {
        resid[j] -= sol.dual_lo[j] - sol.dual_hi[j];
    }
    rep.stationarity = crate::linalg::norm_inf(&resid);

    let bound_term = |mult: f64, bound: f64| if mult == 0.0 { 0.0 } else { mult * bound };
    let mut dual_obj = dot(&p.beq, &sol.dual_eq) - dot(&p.bin, &sol.dual_in);
    let mut comp: f64 = 0.0;
    for r in 0..p.num_in() {
        let slack = p.bin[r] - dot(p.ain.row(r), &sol.x);
        comp = comp.max((sol.dual_in[r] * slack).abs());
    }
    for j in 0..n {
        dual_obj += bound_term(sol.dual_lo[j], p.lo[j]) - bound_term(sol.dual_hi[j], p.hi[j]);
        if sol.dual_lo[j] != 0.0 {
            comp = comp.max((sol.dual_lo[j] * (sol.x[j] - p.lo[j])).abs());
        }
        if sol.dual_hi[j] != 0.0 {
            comp = comp.max((sol.dual_hi[j] * (p.hi[j] - sol.x[j])).abs());
        }
    }
    rep.complementarity = if comp.is_nan() { f64::INFINITY } else { comp };
    rep.dual_objective = dual_obj;
    rep.duality_gap = (sol.objective - dual_obj).abs();
    if rep.duality_gap.is_nan() {
        rep.duality_gap = f64::INFINITY;
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyhedron::LinearConstraint;

    fn certify(lp: &LpProblem, sol: &LpSolution) {
        let rep = check_certificate(lp, sol);
        assert!(rep.passes(sol.objective, 1e-8), "{rep:?}");
    }

    #[test]
    fn dominant_coefficient_example() {
        let poly = Polyhedron::with_bounds(vec![0.0; 2], vec![f64::INFINITY; 2])
            .intersect(vec![LinearConstraint::le(vec![1.0, 1.0], 1.0)]);
        let lp = LpProblem::new(vec![-2.0, -1.0], poly);
        let sol = solve(&lp, 1e-9).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-12 && sol.x[1].abs() < 1e-12);
        assert!((sol.objective + 2.0).abs() < 1e-12);
        certify(&lp, &sol);
    }

    #[test]
    fn infeasible_example() {
        let poly = Polyhedron::with_bounds(vec![0.0], vec![f64::INFINITY])
            .intersect(vec![LinearConstraint::le(vec![1.0], -1.0)]);
        let sol = solve(&LpProblem::new(vec![1.0], poly.clone()), 1e-9).unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
        let opts = LpOptions {
            presolve: false,
            ..LpOptions::default()
        };
        let sol = solve_with(&LpProblem::new(vec![1.0], poly), &opts).unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_example() {
        let poly = Polyhedron::with_bounds(vec![0.0, 0.0], vec![f64::INFINITY; 2])
            .intersect(vec![LinearConstraint::le(vec![1.0, -1.0], 1.0)]);
        let sol = solve(&LpProblem::new(vec![-1.0, -1.0], poly), 1e-9).unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn box_vertex_matches_enumeration() {
        let c = [0.3, -1.2, 2.5, -0.1, 0.7];
        let poly = Polyhedron::cube(5, -5.0, 5.0);
        let sol = solve(&LpProblem::new(c.to_vec(), poly), 1e-9).unwrap();
        let mut best = f64::INFINITY;
        for mask in 0..32u32 {
            let v: f64 = (0..5)
                .map(|i| c[i] * if mask >> i & 1 == 1 { 5.0 } else { -5.0 })
                .sum();
            best = best.min(v);
        }
        assert_eq!(sol.objective, best);
        for i in 0..5 {
            assert_eq!(sol.x[i], -5.0 * c[i].signum());
        }
        assert_eq!(sol.simplex_iters, 0);
    }

    #[test]
    fn presolve_and_plain_simplex_agree() {
        let poly = Polyhedron::cube(3, -2.0, 3.0).intersect(vec![
            LinearConstraint::le(vec![1.0, 1.0, 1.0], 2.0),
            LinearConstraint::ge(vec![1.0, -1.0, 0.0], -1.0),
            LinearConstraint::eq(vec![0.0, 1.0, 2.0], 1.0),
            LinearConstraint::ge(vec![0.0, 0.0, 1.0], -0.5),
        ]);
        let lp = LpProblem::new(vec![-1.0, -2.0, 0.5], poly);
        let a = solve(&lp, 1e-9).unwrap();
        let opts = LpOptions {
            presolve: false,
            ..LpOptions::default()
        };
        let b = solve_with(&lp, &opts).unwrap();
        assert_eq!(a.status, LpStatus::Optimal);
        assert!((a.objective - b.objective).abs() < 1e-10);
        certify(&lp, &a);
        certify(&lp, &b);
    }

    #[test]
    fn kink_row_dual_survives_presolve() {
        // min v over [-5,5] with v ≥ 0 as a row: the row carries the multiplier.
        let poly = Polyhedron::cube(1, -5.0, 5.0)
            .intersect(vec![LinearConstraint::ge(vec![1.0], 0.0)]);
        let lp = LpProblem::new(vec![1.0], poly);
        let sol = solve(&lp, 1e-9).unwrap();
        assert_eq!(sol.x, vec![0.0]);
        assert_eq!(sol.dual_in, vec![1.0]);
        assert_eq!(sol.dual_lo, vec![0.0]);
        certify(&lp, &sol);
    }

    #[test]
    fn equality_chain_duals() {
        let poly = Polyhedron::cube(3, -10.0, 10.0).intersect(vec![
            LinearConstraint::eq(vec![1.0, 0.0, 0.0], 1.0),
            LinearConstraint::eq(vec![1.0, 1.0, 0.0], 3.0),
            LinearConstraint::le(vec![0.0, 1.0, 1.0], 4.0),
        ]);
        let lp = LpProblem::new(vec![1.0, 1.0, -1.0], poly);
        let sol = solve(&lp, 1e-9).unwrap();
        assert_eq!(sol.x, vec![1.0, 2.0, 2.0]);
        certify(&lp, &sol);
    }

    #[test]
    fn degenerate_instance_terminates() {
        // A classical cycling example for the textbook largest-coefficient rule.
        let poly = Polyhedron::with_bounds(vec![0.0; 4], vec![f64::INFINITY; 4]).intersect(vec![
            LinearConstraint::le(vec![0.5, -5.5, -2.5, 9.0], 0.0),
            LinearConstraint::le(vec![0.5, -1.5, -0.5, 1.0], 0.0),
            LinearConstraint::le(vec![1.0, 0.0, 0.0, 0.0], 1.0),
        ]);
        let lp = LpProblem::new(vec![-10.0, 57.0, 9.0, 24.0], poly);
        for presolve in [true, false] {
            let opts = LpOptions {
                presolve,
                ..LpOptions::default()
            };
            let sol = solve_with(&lp, &opts).unwrap();
            assert_eq!(sol.status, LpStatus::Optimal);
            assert!((sol.objective + 1.0).abs() < 1e-9);
            certify(&lp, &sol);
        }
    }

    #[test]
    fn deterministic_output() {
        let poly = Polyhedron::cube(3, -1.0, 1.0).intersect(vec![
            LinearConstraint::le(vec![1.0, 2.0, -1.0], 0.5),
            LinearConstraint::le(vec![-1.0, 1.0, 1.0], 0.25),
        ]);
        let lp = LpProblem::new(vec![-1.0, -1.0, -1.0], poly);
        let a = solve(&lp, 1e-9).unwrap();
        let b = solve(&lp, 1e-9).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.dual_in, b.dual_in);
        assert_eq!(a.basis, b.basis);
    }

    #[test]
    fn text_dump_lists_rows() {
        let poly = Polyhedron::cube(1, 0.0, 1.0).intersect(vec![LinearConstraint::le(vec![1.0], 0.5)]);
        let t = LpProblem::new(vec![1.0], poly).to_text();
        assert!(t.starts_with("min 1.0\n"));
        assert!(t.contains("le 1.0 <= 0.5"));
    }
}
