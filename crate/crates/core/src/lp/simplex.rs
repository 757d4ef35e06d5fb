//! Dense bounded-variable revised simplex with an explicit basis inverse.
//!
//! Columns are stored sparsely; the inverse is updated in product form and
//! rebuilt by Gauss-Jordan elimination every `REFACTOR_EVERY` pivots.

use super::{LpError, LpOptions, LpStatus};
use crate::linalg::Matrix;

const REFACTOR_EVERY: usize = 100;
const STALL_LIMIT: usize = 50;

pub(crate) struct SimplexOutput {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub y_eq: Vec<f64>,
    pub mu: Vec<f64>,
    /// Basic columns: structurals `0..n`, then one slot per row (`n + r`).
    pub basis: Vec<usize>,
    pub iters: usize,
}

struct Tableau {
    m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    basis: Vec<usize>,
    pos: Vec<usize>,
    binv: Matrix,
    since_refactor: usize,
    iters: usize,
}

const NONBASIC: usize = usize::MAX;

enum PhaseEnd {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        // Gauss-Jordan on [B | I] with partial pivoting.
        let mut bm = Matrix::zeros(m, m);
        for (k, &j) in self.basis.iter().enumerate() {
            for &(r, v) in &self.cols[j] {
                bm[(r, k)] = v;
            }
        }
        let mut inv = Matrix::identity(m);
        for col in 0..m {
            let mut piv = col;
            let mut best = bm[(col, col)].abs();
            for r in col + 1..m {
                let v = bm[(r, col)].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < 1e-12 {
                return Err(LpError::NumericalBreakdown);
            }
            if piv != col {
                for k in 0..m {
                    let t = bm[(col, k)];
                    bm[(col, k)] = bm[(piv, k)];
                    bm[(piv, k)] = t;
                    let t = inv[(col, k)];
                    inv[(col, k)] = inv[(piv, k)];
                    inv[(piv, k)] = t;
                }
            }
            let p = bm[(col, col)];
            for k in 0..m {
                bm[(col, k)] /= p;
                inv[(col, k)] /= p;
            }
            for r in 0..m {
                if r == col {
                    continue;
                }
                let f = bm[(r, col)];
                if f != 0.0 {
                    for k in 0..m {
                        bm[(r, k)] -= f * bm[(col, k)];
                        inv[(r, k)] -= f * inv[(col, k)];
                    }
                }
            }
        }
        // Rows of `inv` correspond to basis positions already, since row
        // swaps were applied to both halves.
        self.binv = inv;
        self.since_refactor = 0;
        self.recompute_basic_values();
        Ok(())
    }

    fn recompute_basic_values(&mut self) {
        let mut rhs = self.b.clone();
        for (j, col) in self.cols.iter().enumerate() {
            if self.pos[j] == NONBASIC && self.x[j] != 0.0 {
                for &(r, v) in col {
                    rhs[r] -= v * self.x[j];
                }
            }
        }
        let xb = self.binv.mul_vec(&rhs);
        for (k, &j) in self.basis.iter().enumerate() {
            self.x[j] = xb[k];
        }
    }

    /// `B⁻¹ A_j`
    fn ftran(&self, j: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.m];
        for &(r, v) in &self.cols[j] {
            for (k, wk) in w.iter_mut().enumerate() {
                *wk += self.binv[(k, r)] * v;
            }
        }
        w
    }

    /// Row duals `y = B⁻ᵀ c_B`.
    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.m];
        for (k, &j) in self.basis.iter().enumerate() {
            let cb = cost[j];
            if cb != 0.0 {
                crate::linalg::axpy(cb, self.binv.row(k), &mut y);
            }
        }
        y
    }

    fn reduced_cost(&self, cost: &[f64], y: &[f64], j: usize) -> f64 {
        let mut d = cost[j];
        for &(r, v) in &self.cols[j] {
            d -= y[r] * v;
        }
        d
    }

    fn pivot(&mut self, r: usize, w: &[f64]) {
        let m = self.m;
        let p = w[r];
        for k in 0..m {
            self.binv[(r, k)] /= p;
        }
        let pivot_row = self.binv.row(r).to_vec();
        for (i, &wi) in w.iter().enumerate() {
            if i != r && wi != 0.0 {
                crate::linalg::axpy(-wi, &pivot_row, self.binv.row_mut(i));
            }
        }
    }

    fn run(&mut self, cost: &[f64], opts: &LpOptions, cap: usize) -> Result<PhaseEnd, LpError> {
        let cmax = cost.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        let opt_tol = opts.tol * cmax.max(1.0);
        let feas_tol = opts.tol;
        let mut degenerate_run = 0usize;
        let mut bland = false;
        loop {
            if self.iters >= cap {
                return Err(LpError::IterationLimit(self.iters));
            }
            let y = self.duals(cost);

            // Pricing.
            let mut enter: Option<(usize, f64, f64)> = None; // (j, dir, |d|)
            for j in 0..self.cols.len() {
                if self.pos[j] != NONBASIC || self.lo[j] == self.hi[j] {
                    continue;
                }
                let d = self.reduced_cost(cost, &y, j);
                let (at_lo, at_hi) = (self.x[j] <= self.lo[j], self.x[j] >= self.hi[j]);
                let dir = if d < -opt_tol && !at_hi {
                    1.0
                } else if d > opt_tol && !at_lo {
                    -1.0
                } else {
                    continue;
                };
                if bland {
                    enter = Some((j, dir, d.abs()));
                    break;
                }
                if enter.is_none_or(|(_, _, best)| d.abs() > best) {
                    enter = Some((j, dir, d.abs()));
                }
            }
            let Some((j, dir, _)) = enter else {
                return Ok(PhaseEnd::Optimal);
            };

            // Ratio test.
            let w = self.ftran(j);
            let flip_len = self.hi[j] - self.lo[j];
            let ratio = |k: usize| -> Option<f64> {
                if w[k].abs() <= opts.pivot_tol {
                    return None;
                }
                let bv = self.basis[k];
                let rate = -dir * w[k];
                let room = if rate < 0.0 {
                    self.x[bv] - self.lo[bv]
                } else {
                    self.hi[bv] - self.x[bv]
                };
                room.is_finite().then(|| room.max(0.0) / rate.abs())
            };
            let mut t_min = f64::INFINITY;
            let mut t_relaxed = f64::INFINITY;
            for k in 0..self.m {
                if let Some(t) = ratio(k) {
                    t_min = t_min.min(t);
                    t_relaxed = t_relaxed.min(t + feas_tol / w[k].abs());
                }
            }
            let mut leave: Option<usize> = None;
            if t_min.is_finite() {
                for k in 0..self.m {
                    let Some(t) = ratio(k) else { continue };
                    let take = if bland {
                        t <= t_min
                            && leave.is_none_or(|l| self.basis[k] < self.basis[l])
                    } else {
                        t <= t_relaxed && leave.is_none_or(|l| w[k].abs() > w[l].abs())
                    };
                    if take {
                        leave = Some(k);
                    }
                }
            }
            let t_leave = leave.and_then(ratio).unwrap_or(f64::INFINITY);
            let (t, flip) = if flip_len <= t_leave { (flip_len, true) } else { (t_leave, false) };
            if !t.is_finite() {
                return Ok(PhaseEnd::Unbounded);
            }

            self.x[j] += dir * t;
            for (k, &bv) in self.basis.iter().enumerate() {
                if w[k] != 0.0 {
                    self.x[bv] -= dir * t * w[k];
                }
            }
            if flip {
                self.x[j] = if dir > 0.0 { self.hi[j] } else { self.lo[j] };
            } else {
                let r = leave.expect("finite step has a leaving row");
                let bv = self.basis[r];
                self.x[bv] = if -dir * w[r] < 0.0 { self.lo[bv] } else { self.hi[bv] };
                self.pivot(r, &w);
                self.pos[bv] = NONBASIC;
                self.pos[j] = r;
                self.basis[r] = j;
                self.since_refactor += 1;
            }
            self.iters += 1;

            if t <= 1e-12 {
                degenerate_run += 1;
                if degenerate_run >= STALL_LIMIT {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
                bland = false;
            }
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
        }
    }
}

/// Solves `min cᵀx` s.t. `aeq·x = beq`, `ain·x ≤ bin`, `lo ≤ x ≤ hi`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn solve_reduced(
    c: &[f64],
    aeq: &Matrix,
    beq: &[f64],
    ain: &Matrix,
    bin: &[f64],
    lo: &[f64],
    hi: &[f64],
    opts: &LpOptions,
) -> Result<SimplexOutput, LpError> {
    let n = c.len();
    let (meq, min) = (aeq.rows(), ain.rows());
    let m = meq + min;

    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for r in 0..meq {
        for (j, &v) in aeq.row(r).iter().enumerate() {
            if v != 0.0 {
                cols[j].push((r, v));
            }
        }
    }
    for r in 0..min {
        for (j, &v) in ain.row(r).iter().enumerate() {
            if v != 0.0 {
                cols[j].push((meq + r, v));
            }
        }
    }
    let mut clo = lo.to_vec();
    let mut chi = hi.to_vec();
    let mut x: Vec<f64> = (0..n)
        .map(|j| {
            if lo[j].is_finite() {
                lo[j]
            } else if hi[j].is_finite() {
                hi[j]
            } else {
                0.0
            }
        })
        .collect();
    let mut b = beq.to_vec();
    b.extend_from_slice(bin);
    // Slacks for inequality rows.
    for r in 0..min {
        cols.push(vec![(meq + r, 1.0)]);
        clo.push(0.0);
        chi.push(f64::INFINITY);
        x.push(0.0);
    }
    let mut resid = b.clone();
    for (j, col) in cols.iter().enumerate().take(n) {
        for &(r, v) in col {
            resid[r] -= v * x[j];
        }
    }
    let mut basis = Vec::with_capacity(m);
    let mut artificials = Vec::new();
    for r in 0..m {
        if r >= meq && resid[r] >= 0.0 {
            let s = n + (r - meq);
            basis.push(s);
            x[s] = resid[r];
        } else {
            let sign = if resid[r] >= 0.0 { 1.0 } else { -1.0 };
            let a = cols.len();
            cols.push(vec![(r, sign)]);
            clo.push(0.0);
            chi.push(f64::INFINITY);
            x.push(resid[r].abs());
            basis.push(a);
            artificials.push(a);
        }
    }
    let ncol = cols.len();
    let mut pos = vec![NONBASIC; ncol];
    for (k, &j) in basis.iter().enumerate() {
        pos[j] = k;
    }
    let mut tab = Tableau {
        m,
        cols,
        b,
        lo: clo,
        hi: chi,
        x,
        basis,
        pos,
        binv: Matrix::identity(m),
        since_refactor: 0,
        iters: 0,
    };
    // The starting basis is a signed identity; refactor to get its inverse.
    tab.refactor()?;

    let cap = opts
        .max_iters
        .unwrap_or(20_000 + 50 * (m + ncol));
    let bnorm = tab.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));

    let infeasible_sum = |t: &Tableau| artificials.iter().map(|&a| t.x[a]).sum::<f64>();
    if infeasible_sum(&tab) > 0.0 {
        let mut cost1 = vec![0.0; ncol];
        for &a in &artificials {
            cost1[a] = 1.0;
        }
        tab.run(&cost1, opts, cap)?;
        tab.refactor()?;
        if infeasible_sum(&tab) > opts.tol * (1.0 + bnorm) {
            return Ok(SimplexOutput {
                status: LpStatus::Infeasible,
                x: tab.x[..n].to_vec(),
                y_eq: vec![0.0; meq],
                mu: vec![0.0; min],
                basis: vec![],
                iters: tab.iters,
            });
        }
    }
    for &a in &artificials {
        tab.hi[a] = 0.0;
        if tab.pos[a] == NONBASIC {
            tab.x[a] = 0.0;
        }
    }
    let mut cost2 = c.to_vec();
    cost2.resize(ncol, 0.0);
    let end = tab.run(&cost2, opts, cap)?;
    tab.refactor()?;

    let y = tab.duals(&cost2);
    let status = match end {
        PhaseEnd::Optimal => LpStatus::Optimal,
        PhaseEnd::Unbounded => LpStatus::Unbounded,
    };
    let mut basis_out: Vec<usize> = tab
        .basis
        .iter()
        .map(|&j| {
            if j < n {
                j
            } else if j < n + min {
                n + meq + (j - n)
            } else {
                n + tab.cols[j][0].0
            }
        })
        .collect();
    basis_out.sort_unstable();
    Ok(SimplexOutput {
        status,
        x: tab.x[..n].to_vec(),
        y_eq: y[..meq].to_vec(),
        mu: y[meq..].iter().map(|v| -v).collect(),
        basis: basis_out,
        iters: tab.iters,
    })
}
