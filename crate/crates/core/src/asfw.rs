//! The abs-smooth Frank-Wolfe loop.
//!
//! Each iteration linearizes the tape at `x_t`, minimizes the model
//! `Δf(x_t; α_t(v − x_t))` over `v ∈ C` with [`aasm_minimize`] started at
//! `x_t`, and moves to `(1 − α_t)x_t + α_t v_t`.

use std::time::Instant;

use thiserror::Error;

use crate::aasm::{aasm_minimize, AasmError, AasmOptions};
use crate::linalg::norm2;
use crate::plmodel::AbsLinearForm;
use crate::polyhedron::Polyhedron;
use crate::tape::{abs_linearize, Tape, TapeError};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepKind {
    /// `1/√(1+t)`
    OpenLoopSqrt,
    /// `2/(t+2)`
    OpenLoopHarmonic,
    /// Constant `1/√T`.
    FixedHorizon(usize),
    /// `min{1, −Δf(x; v−x) / (2γ‖v−x‖²)}` with `v` from the `α = 1` model.
    ShortStep(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRule {
    pub kind: StepKind,
    pub monotone: bool,
}

impl StepRule {
    pub fn new(kind: StepKind) -> Self {
        match kind {
            StepKind::FixedHorizon(t) => assert!(t >= 1, "horizon must be at least 1"),
            StepKind::ShortStep(g) => assert!(g > 0.0, "gamma must be positive"),
            _ => {}
        }
        StepRule { kind, monotone: false }
    }

    pub fn monotone(mut self, on: bool) -> Self {
        self.monotone = on;
        self
    }

    /// Open-loop step for iteration `t` (ShortStep returns 1, the value used
    /// to compute its direction).
    pub fn open_loop_alpha(&self, t: usize) -> f64 {
        match self.kind {
            StepKind::OpenLoopSqrt => 1.0 / ((1 + t) as f64).sqrt(),
            StepKind::OpenLoopHarmonic => 2.0 / (t as f64 + 2.0),
            StepKind::FixedHorizon(h) => 1.0 / (h as f64).sqrt(),
            StepKind::ShortStep(_) => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub alpha: f64,
    pub gap: f64,
    pub fval: f64,
    pub inner_polyhedra: usize,
    pub lp_calls: usize,
    pub elapsed_ms: u64,
}

#[derive(Clone, Debug, Default)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
}

impl RunTrace {
    /// `min_{k ≤ t} gap_k` for every row.
    pub fn running_min_gap(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.rows
            .iter()
            .map(|r| {
                best = best.min(r.gap);
                best
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    GapTolReached,
    MaxIters,
    ExactGapZero,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub x_final: Vec<f64>,
    pub f_final: f64,
    pub status: RunStatus,
    pub trace: RunTrace,
}

#[derive(Debug, Error)]
pub enum AsfwErrorKind {
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Aasm(#[from] AasmError),
}

/// A failed run together with the rows recorded before the failure.
#[derive(Debug, Error)]
#[error("iteration {iteration}: {kind}")]
pub struct AsfwError {
    pub iteration: usize,
    #[source]
    pub kind: AsfwErrorKind,
    pub trace: RunTrace,
}

#[derive(Clone, Debug)]
pub struct AsfwOptions {
    pub rule: StepRule,
    pub max_iters: usize,
    pub gap_tol: f64,
    pub aasm: AasmOptions,
}

impl Default for AsfwOptions {
    fn default() -> Self {
        AsfwOptions {
            rule: StepRule::new(StepKind::OpenLoopSqrt),
            max_iters: 500,
            gap_tol: 1e-10,
            aasm: AasmOptions::default(),
        }
    }
}

/// `−Δf(x; α(v − x)) / α` for the linearization `form` at `x`.
pub fn generalized_gap(form: &AbsLinearForm, fbar: f64, x: &[f64], v: &[f64], alpha: f64) -> f64 {
    assert!(alpha > 0.0 && alpha <= 1.0, "alpha must lie in (0, 1]");
    let dx: Vec<f64> = v.iter().zip(x).map(|(vi, xi)| alpha * (vi - xi)).collect();
    -form.delta_eval(fbar, &dx) / alpha
}

pub fn asfw_run(
    tape: &Tape,
    c: &Polyhedron,
    x0: &[f64],
    opts: &AsfwOptions,
) -> Result<RunResult, AsfwError> {
    asfw_run_with_callback(tape, c, x0, opts, &mut |_, _, _| {})
}

/// Like [`asfw_run`], calling `on_row(row, x_t, v_t)` as each row is recorded.
pub fn asfw_run_with_callback(
    tape: &Tape,
    c: &Polyhedron,
    x0: &[f64],
    opts: &AsfwOptions,
    on_row: &mut dyn FnMut(&TraceRow, &[f64], &[f64]),
) -> Result<RunResult, AsfwError> {
    assert!(opts.gap_tol >= 0.0, "gap tolerance must be nonnegative");
    assert!(c.contains(x0, crate::polyhedron::DEFAULT_FEAS_TOL), "x0 must lie in C");
    let start = Instant::now();
    let mut trace = RunTrace::default();
    let mut x = x0.to_vec();
    let fail = |t: usize, kind: AsfwErrorKind, trace: &RunTrace| AsfwError {
        iteration: t,
        kind,
        trace: trace.clone(),
    };

    for t in 0..opts.max_iters {
        let form = abs_linearize(tape, &x).map_err(|e| fail(t, e.into(), &trace))?;
        let fbar = tape.value(&x).map_err(|e| fail(t, e.into(), &trace))?;

        let mut alpha = opts.rule.open_loop_alpha(t);
        let shift: Vec<f64> = x.iter().map(|xi| -alpha * xi).collect();
        let sub = form.affine_substitute(alpha, &shift);
        let inner = aasm_minimize(&sub, c, &x, &opts.aasm).map_err(|e| fail(t, e.into(), &trace))?;
        let mut v = inner.v_star;
        c.clip_to_box(&mut v);

        if let StepKind::ShortStep(gamma) = opts.rule.kind {
            let d: Vec<f64> = v.iter().zip(&x).map(|(a, b)| a - b).collect();
            let dd = norm2(&d).powi(2);
            let df = form.delta_eval(fbar, &d);
            if dd > 0.0 && df < 0.0 {
                alpha = (-df / (2.0 * gamma * dd)).min(1.0);
            }
        }
        let gap = generalized_gap(&form, fbar, &x, &v, alpha);
        let row = TraceRow {
            t,
            alpha,
            gap,
            fval: fbar,
            inner_polyhedra: inner.polyhedra_visited,
            lp_calls: inner.lp_calls,
            elapsed_ms: start.elapsed().as_millis() as u64,
        };
        on_row(&row, &x, &v);
        trace.rows.push(row);

        let status = if gap == 0.0 {
            Some(RunStatus::ExactGapZero)
        } else if gap <= opts.gap_tol {
            Some(RunStatus::GapTolReached)
        } else {
            None
        };
        if let Some(status) = status {
            return Ok(RunResult {
                x_final: x,
                f_final: fbar,
                status,
                trace,
            });
        }

        let mut next: Vec<f64> = x
            .iter()
            .zip(&v)
            .map(|(xi, vi)| (1.0 - alpha) * xi + alpha * vi)
            .collect();
        c.clip_to_box(&mut next);
        if opts.rule.monotone {
            let fnext = tape.value(&next).map_err(|e| fail(t, e.into(), &trace))?;
            if fnext < fbar {
                x = next;
            }
        } else {
            x = next;
        }
    }
    let f_final = tape
        .value(&x)
        .map_err(|e| fail(opts.max_iters, e.into(), &trace))?;
    Ok(RunResult {
        x_final: x,
        f_final,
        status: RunStatus::MaxIters,
        trace,
    })
}

/// Least-squares slope of `log g` against `log t` over rows with
/// `t ∈ [t_from, t_to]` and positive `g`.
pub fn loglog_slope(t: &[usize], g: &[f64], t_from: usize, t_to: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(g)
        .filter(|(&ti, &gi)| ti >= t_from && ti <= t_to && ti > 0 && gi > 0.0)
        .map(|(&ti, &gi)| ((ti as f64).ln(), gi.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::TapeBuilder;

    fn square_tape() -> Tape {
        let mut b = TapeBuilder::new(1);
        let x = b.input(0);
        let y = b.square(x);
        b.finish(y)
    }

    fn abs_tape() -> Tape {
        let mut b = TapeBuilder::new(1);
        let x = b.input(0);
        let y = b.abs(x);
        b.finish(y)
    }

    #[test]
    fn gap_examples() {
        let sq = square_tape();
        let form = abs_linearize(&sq, &[0.5]).unwrap();
        for alpha in [1.0, 0.5, 0.1] {
            let g = generalized_gap(&form, 0.25, &[0.5], &[-1.0], alpha);
            assert!((g - 1.5).abs() < 1e-15);
        }
        assert_eq!(generalized_gap(&form, 0.25, &[0.5], &[0.5], 0.3), 0.0);

        let ab = abs_tape();
        let form = abs_linearize(&ab, &[1.0]).unwrap();
        assert_eq!(generalized_gap(&form, 1.0, &[1.0], &[-1.0], 1.0), 0.0);
        assert_eq!(generalized_gap(&form, 1.0, &[1.0], &[-1.0], 0.5), 2.0);
    }

    #[test]
    fn step_rules() {
        let r = StepRule::new(StepKind::OpenLoopSqrt);
        assert_eq!(r.open_loop_alpha(0), 1.0);
        assert_eq!(r.open_loop_alpha(3), 0.5);
        let h = StepRule::new(StepKind::OpenLoopHarmonic);
        assert_eq!(h.open_loop_alpha(0), 1.0);
        assert_eq!(h.open_loop_alpha(2), 0.5);
        assert_eq!(StepRule::new(StepKind::FixedHorizon(4)).open_loop_alpha(9), 0.5);
    }

    #[test]
    #[should_panic]
    fn short_step_needs_positive_gamma() {
        StepRule::new(StepKind::ShortStep(0.0));
    }

    #[test]
    fn abs_on_box_stops_at_zero() {
        let tape = abs_tape();
        let c = Polyhedron::cube(1, -1.0, 1.0);
        let res = asfw_run(&tape, &c, &[0.7], &AsfwOptions::default()).unwrap();
        assert_eq!(res.x_final, vec![0.0]);
        assert_eq!(res.status, RunStatus::ExactGapZero);
    }

    #[test]
    fn monotone_never_increases() {
        let tape = square_tape();
        let c = Polyhedron::cube(1, -1.0, 1.0);
        let opts = AsfwOptions {
            rule: StepRule::new(StepKind::OpenLoopSqrt).monotone(true),
            max_iters: 50,
            ..AsfwOptions::default()
        };
        let res = asfw_run(&tape, &c, &[1.0], &opts).unwrap();
        for w in res.trace.rows.windows(2) {
            assert!(w[1].fval <= w[0].fval + 1e-12);
        }
    }

    #[test]
    fn short_step_solves_quadratic() {
        let tape = square_tape();
        let c = Polyhedron::cube(1, -1.0, 1.0);
        let opts = AsfwOptions {
            rule: StepRule::new(StepKind::ShortStep(1.0)),
            max_iters: 5,
            ..AsfwOptions::default()
        };
        let res = asfw_run(&tape, &c, &[1.0], &opts).unwrap();
        // γ = 1 is the exact curvature of x², so the first step lands on 0.
        assert_eq!(res.trace.rows[0].alpha, 0.5);
        assert_eq!(res.x_final, vec![0.0]);
    }

    #[test]
    fn slope_of_power_law() {
        let t: Vec<usize> = (1..200).collect();
        let g: Vec<f64> = t.iter().map(|&k| 3.0 / (k as f64).sqrt()).collect();
        let s = loglog_slope(&t, &g, 10, 199).unwrap();
        assert!((s + 0.5).abs() < 1e-12);
    }
}
