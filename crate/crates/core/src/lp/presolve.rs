//! Row-singleton presolve and the matching dual postsolve.
//!
//! Singleton rows become bounds, empty and dominated rows are dropped, and
//! fixed variables are substituted out. Every bound remembers the row that
//! produced it so that reduced costs can be handed back to that row's dual.

use crate::linalg::Matrix;
use crate::polyhedron::Polyhedron;

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum BoundSource {
    Box,
    EqRow(usize, f64),
    InRow(usize, f64),
}

#[derive(Debug)]
pub(crate) struct Presolved {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub lo_src: Vec<BoundSource>,
    pub hi_src: Vec<BoundSource>,
    pub fixed: Vec<bool>,
    pub fix_order: Vec<usize>,
    pub eq_keep: Vec<bool>,
    pub in_keep: Vec<bool>,
}

/// Reduced problem over the non-fixed variables and the kept rows.
#[derive(Debug)]
pub(crate) struct Reduced {
    pub vars: Vec<usize>,
    pub eq_rows: Vec<usize>,
    pub in_rows: Vec<usize>,
    pub c: Vec<f64>,
    pub aeq: Matrix,
    pub beq: Vec<f64>,
    pub ain: Matrix,
    pub bin: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

fn residual_rhs(row: &[f64], rhs: f64, fixed: &[bool], val: &[f64]) -> (f64, Vec<usize>) {
    let mut r = rhs;
    let mut free = Vec::new();
    for (j, &a) in row.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        if fixed[j] {
            r -= a * val[j];
        } else {
            free.push(j);
        }
    }
    (r, free)
}

/// Returns `None` when the presolve proves infeasibility.
pub(crate) fn presolve(p: &Polyhedron, tol: f64) -> Option<Presolved> {
    let n = p.dim();
    let mut st = Presolved {
        lo: p.lo.clone(),
        hi: p.hi.clone(),
        lo_src: vec![BoundSource::Box; n],
        hi_src: vec![BoundSource::Box; n],
        fixed: vec![false; n],
        fix_order: Vec::new(),
        eq_keep: vec![true; p.num_eq()],
        in_keep: vec![true; p.num_in()],
    };
    for j in 0..n {
        if st.lo[j] > st.hi[j] {
            return None;
        }
        if st.lo[j] == st.hi[j] {
            st.fixed[j] = true;
            st.fix_order.push(j);
        }
    }

    let mut changed = true;
    while changed {
        changed = false;
        for r in 0..p.num_eq() {
            if !st.eq_keep[r] {
                continue;
            }
            let row = p.aeq.row(r);
            let (rhs, free) = residual_rhs(row, p.beq[r], &st.fixed, &st.lo);
            match free.len() {
                0 => {
                    if rhs.abs() > tol * (1.0 + p.beq[r].abs()) {
                        return None;
                    }
                }
                1 => {
                    let j = free[0];
                    let a = row[j];
                    // Feasibility is judged on the row residual, as in phase 1.
                    let v = (rhs / a).clamp(st.lo[j], st.hi[j]);
                    if (a * v - rhs).abs() > tol * (1.0 + p.beq[r].abs()) {
                        return None;
                    }
                    st.lo[j] = v;
                    st.hi[j] = v;
                    st.lo_src[j] = BoundSource::EqRow(r, a);
                    st.hi_src[j] = BoundSource::EqRow(r, a);
                    st.fixed[j] = true;
                    st.fix_order.push(j);
                }
                _ => continue,
            }
            st.eq_keep[r] = false;
            changed = true;
        }
        for r in 0..p.num_in() {
            if !st.in_keep[r] {
                continue;
            }
            let row = p.ain.row(r);
            let (rhs, free) = residual_rhs(row, p.bin[r], &st.fixed, &st.lo);
            match free.len() {
                0 => {
                    if rhs < -tol * (1.0 + p.bin[r].abs()) {
                        return None;
                    }
                }
                1 => {
                    let j = free[0];
                    let a = row[j];
                    let bound = rhs / a;
                    if a > 0.0 {
                        if bound <= st.hi[j] {
                            st.hi[j] = bound;
                            st.hi_src[j] = BoundSource::InRow(r, a);
                        }
                    } else if bound >= st.lo[j] {
                        st.lo[j] = bound;
                        st.lo_src[j] = BoundSource::InRow(r, a);
                    }
                    if a.abs() * (st.lo[j] - st.hi[j]) > tol * (1.0 + p.bin[r].abs()) {
                        return None;
                    }
                    if st.lo[j] >= st.hi[j] {
                        // Bounds met (or crossed within tolerance): fix at the tightened one.
                        if a > 0.0 {
                            st.lo[j] = st.hi[j];
                        } else {
                            st.hi[j] = st.lo[j];
                        }
                        st.fixed[j] = true;
                        st.fix_order.push(j);
                    }
                }
                _ => {
                    let mut max_act = 0.0;
                    for &j in &free {
                        let a = row[j];
                        max_act += if a > 0.0 { a * st.hi[j] } else { a * st.lo[j] };
                    }
                    if !(max_act.is_finite() && max_act <= rhs) {
                        continue;
                    }
                }
            }
            st.in_keep[r] = false;
            changed = true;
        }
    }
    Some(st)
}

impl Presolved {
    pub(crate) fn reduce(&self, c: &[f64], p: &Polyhedron) -> Reduced {
        let vars: Vec<usize> = (0..p.dim()).filter(|&j| !self.fixed[j]).collect();
        let eq_rows: Vec<usize> = (0..p.num_eq()).filter(|&r| self.eq_keep[r]).collect();
        let in_rows: Vec<usize> = (0..p.num_in()).filter(|&r| self.in_keep[r]).collect();
        let k = vars.len();
        let pick = |a: &Matrix, b: &[f64], rows: &[usize]| {
            let mut m = Matrix::zeros(0, k);
            let mut rhs = Vec::with_capacity(rows.len());
            for &r in rows {
                let full = a.row(r);
                let (res, _) = residual_rhs(full, b[r], &self.fixed, &self.lo);
                let sub: Vec<f64> = vars.iter().map(|&j| full[j]).collect();
                m.push_row(&sub);
                rhs.push(res);
            }
            (m, rhs)
        };
        let (aeq, beq) = pick(&p.aeq, &p.beq, &eq_rows);
        let (ain, bin) = pick(&p.ain, &p.bin, &in_rows);
        Reduced {
            c: vars.iter().map(|&j| c[j]).collect(),
            lo: vars.iter().map(|&j| self.lo[j]).collect(),
            hi: vars.iter().map(|&j| self.hi[j]).collect(),
            vars,
            eq_rows,
            in_rows,
            aeq,
            beq,
            ain,
            bin,
        }
    }

    /// Completes the duals: every variable's reduced cost is pushed onto the
    /// source of the bound it sits at. Non-fixed variables go first, fixed ones
    /// in reverse order of fixing, so each row is settled before the variables
    /// fixed ahead of it read its dual.
    pub(crate) fn postsolve_duals(
        &self,
        c: &[f64],
        p: &Polyhedron,
        y_eq: &mut [f64],
        mu: &mut [f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let n = p.dim();
        let mut z_lo = vec![0.0; n];
        let mut z_hi = vec![0.0; n];
        let order = (0..n)
            .filter(|&j| !self.fixed[j])
            .chain(self.fix_order.iter().rev().copied());
        for j in order {
            let mut d = c[j];
            for r in 0..p.num_eq() {
                d -= p.aeq[(r, j)] * y_eq[r];
            }
            for r in 0..p.num_in() {
                d += p.ain[(r, j)] * mu[r];
            }
            if d == 0.0 {
                continue;
            }
            let src = if d > 0.0 { self.lo_src[j] } else { self.hi_src[j] };
            match src {
                BoundSource::Box => {
                    if d > 0.0 {
                        z_lo[j] += d;
                    } else {
                        z_hi[j] -= d;
                    }
                }
                BoundSource::EqRow(r, a) => y_eq[r] += d / a,
                BoundSource::InRow(r, a) => mu[r] -= d / a,
            }
        }
        (z_lo, z_hi)
    }
}
