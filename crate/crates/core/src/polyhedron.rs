//! Feasible sets: `Aeq·x = beq`, `Ain·x ≤ bin`, `lo ≤ x ≤ hi`.

use crate::linalg::{dot, Matrix};

pub const DEFAULT_FEAS_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

/// `coeffs · x (sense) rhs`
#[derive(Clone, Debug, PartialEq)]
pub struct LinearConstraint {
    pub coeffs: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn le(coeffs: Vec<f64>, rhs: f64) -> Self {
        LinearConstraint { coeffs, sense: Sense::Le, rhs }
    }
    pub fn ge(coeffs: Vec<f64>, rhs: f64) -> Self {
        LinearConstraint { coeffs, sense: Sense::Ge, rhs }
    }
    pub fn eq(coeffs: Vec<f64>, rhs: f64) -> Self {
        LinearConstraint { coeffs, sense: Sense::Eq, rhs }
    }

    /// Signed violation; nonpositive when satisfied.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = dot(&self.coeffs, x);
        match self.sense {
            Sense::Le => lhs - self.rhs,
            Sense::Ge => self.rhs - lhs,
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Polyhedron {
    pub aeq: Matrix,
    pub beq: Vec<f64>,
    pub ain: Matrix,
    pub bin: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Polyhedron {
    /// All of `R^n`.
    pub fn free(n: usize) -> Self {
        Polyhedron::with_bounds(vec![f64::NEG_INFINITY; n], vec![f64::INFINITY; n])
    }

    pub fn with_bounds(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        assert!(lo.iter().zip(&hi).all(|(l, h)| l <= h), "lo must not exceed hi");
        let n = lo.len();
        Polyhedron {
            aeq: Matrix::zeros(0, n),
            beq: vec![],
            ain: Matrix::zeros(0, n),
            bin: vec![],
            lo,
            hi,
        }
    }

    /// `lo ≤ x_i ≤ hi` for every coordinate.
    pub fn cube(n: usize, lo: f64, hi: f64) -> Self {
        Polyhedron::with_bounds(vec![lo; n], vec![hi; n])
    }

    /// `lo ≤ x_1 ≤ x_2 ≤ … ≤ x_n ≤ hi`: box bounds plus `x_i − x_{i+1} ≤ 0`.
    pub fn ordered_chain(n: usize, lo: f64, hi: f64) -> Self {
        let mut p = Polyhedron::cube(n, lo, hi);
        let rows = (0..n.saturating_sub(1)).map(|i| {
            let mut row = vec![0.0; n];
            row[i] = 1.0;
            row[i + 1] = -1.0;
            LinearConstraint::le(row, 0.0)
        });
        p = p.intersect(rows);
        p
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn num_eq(&self) -> usize {
        self.aeq.rows()
    }

    pub fn num_in(&self) -> usize {
        self.ain.rows()
    }

    /// True when every variable has finite bounds on both sides.
    pub fn is_boxed(&self) -> bool {
        self.lo.iter().chain(&self.hi).all(|v| v.is_finite())
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        assert_eq!(x.len(), self.dim(), "dimension mismatch");
        self.max_violation(x) <= tol
    }

    /// Largest violation over all rows and bounds, zero if feasible.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        if x.iter().any(|v| v.is_nan()) {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for (i, &b) in self.beq.iter().enumerate() {
            worst = worst.max((dot(self.aeq.row(i), x) - b).abs());
        }
        for (i, &b) in self.bin.iter().enumerate() {
            worst = worst.max(dot(self.ain.row(i), x) - b);
        }
        for ((&xi, &l), &h) in x.iter().zip(&self.lo).zip(&self.hi) {
            worst = worst.max(l - xi).max(xi - h);
        }
        if worst.is_nan() {
            f64::INFINITY
        } else {
            worst
        }
    }

    /// Appends the constraints as rows; `Ge` rows are negated into `Le`.
    pub fn intersect<I>(&self, constraints: I) -> Polyhedron
    where
        I: IntoIterator<Item = LinearConstraint>,
    {
        let mut p = self.clone();
        for c in constraints {
            assert_eq!(c.coeffs.len(), self.dim(), "constraint dimension mismatch");
            match c.sense {
                Sense::Eq => {
                    p.aeq.push_row(&c.coeffs);
                    p.beq.push(c.rhs);
                }
                Sense::Le => {
                    p.ain.push_row(&c.coeffs);
                    p.bin.push(c.rhs);
                }
                Sense::Ge => {
                    let neg: Vec<f64> = c.coeffs.iter().map(|v| -v).collect();
                    p.ain.push_row(&neg);
                    p.bin.push(-c.rhs);
                }
            }
        }
        p
    }

    /// Intersection with another polyhedron of the same dimension.
    pub fn intersect_poly(&self, other: &Polyhedron) -> Polyhedron {
        assert_eq!(self.dim(), other.dim());
        let mut p = self.clone();
        for i in 0..other.num_eq() {
            p.aeq.push_row(other.aeq.row(i));
            p.beq.push(other.beq[i]);
        }
        for i in 0..other.num_in() {
            p.ain.push_row(other.ain.row(i));
            p.bin.push(other.bin[i]);
        }
        for j in 0..p.dim() {
            p.lo[j] = p.lo[j].max(other.lo[j]);
            p.hi[j] = p.hi[j].min(other.hi[j]);
        }
        p
    }

    /// Euclidean projection onto the box part only.
    pub fn clip_to_box(&self, x: &mut [f64]) {
        for ((xi, &l), &h) in x.iter_mut().zip(&self.lo).zip(&self.hi) {
            *xi = xi.clamp(l, h);
        }
    }
}
