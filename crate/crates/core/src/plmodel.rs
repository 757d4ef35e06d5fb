//! Abs-linear forms: the piecewise-linear model of an abs-smooth function.
//!
//! ```text
//! z     = c + Z·Δx + M·z + L·|z|
//! value = d + aᵀΔx + bᵀz + b_absᵀ|z|
//! ```
//!
//! `M` and `L` are strictly lower triangular, so `z` follows by forward
//! substitution. The output may depend on `|z|` directly through `b_abs`,
//! which lets an `abs` node be the last operation of a tape.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::linalg::{dot, Matrix};
use crate::polyhedron::LinearConstraint;

/// Default relative tolerance for classifying a switching variable as zero.
pub const DEFAULT_TOL_Z: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct AbsLinearForm {
    z: Matrix,
    m: Matrix,
    l: Matrix,
    a: Vec<f64>,
    b: Vec<f64>,
    b_abs: Vec<f64>,
    c: Vec<f64>,
    d: f64,
}

/// Sign pattern `σ ∈ {−1, 0, +1}^s` of the switching variables.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SignatureVector(Vec<i8>);

impl SignatureVector {
    pub fn new(sigma: Vec<i8>) -> Self {
        assert!(
            sigma.iter().all(|&s| (-1..=1).contains(&s)),
            "signature entries must be -1, 0 or +1"
        );
        SignatureVector(sigma)
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Copy with entry `i` replaced by `value`.
    pub fn with(&self, i: usize, value: i8) -> SignatureVector {
        let mut v = self.0.clone();
        v[i] = value;
        SignatureVector::new(v)
    }

    pub fn has_zero(&self) -> bool {
        self.0.contains(&0)
    }

    /// FNV-1a hash, stable across runs; used in trace logs.
    pub fn stable_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for &s in &self.0 {
            h ^= (s as u8) as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }
}

impl std::fmt::Display for SignatureVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for &s in &self.0 {
            f.write_str(match s {
                1 => "+",
                -1 => "-",
                _ => "0",
            })?;
        }
        Ok(())
    }
}

/// The model restricted to one signature domain: `z(Δx) = R·Δx + r` and
/// `value = gᵀΔx + h`.
#[derive(Clone, Debug)]
pub struct AffineRestriction {
    pub sigma: SignatureVector,
    pub r_mat: Matrix,
    pub r_vec: Vec<f64>,
    pub g: Vec<f64>,
    pub h: f64,
}

impl AffineRestriction {
    pub fn value(&self, dx: &[f64]) -> f64 {
        dot(&self.g, dx) + self.h
    }

    pub fn z_at(&self, i: usize, dx: &[f64]) -> f64 {
        dot(self.r_mat.row(i), dx) + self.r_vec[i]
    }
}

#[derive(Debug, Error)]
pub enum FormParseError {
    #[error("abs-linear form text ended early while reading {0}")]
    Truncated(&'static str),
    #[error("bad number `{0}`")]
    Number(String),
    #[error("trailing data after the form")]
    Trailing,
    #[error("inconsistent form: {0}")]
    Inconsistent(String),
}

impl AbsLinearForm {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        z: Matrix,
        m: Matrix,
        l: Matrix,
        a: Vec<f64>,
        b: Vec<f64>,
        b_abs: Vec<f64>,
        c: Vec<f64>,
        d: f64,
    ) -> Self {
        let (s, n) = (z.rows(), z.cols());
        assert_eq!((m.rows(), m.cols()), (s, s), "M must be s×s");
        assert_eq!((l.rows(), l.cols()), (s, s), "L must be s×s");
        assert!(m.is_strictly_lower(), "M must be strictly lower triangular");
        assert!(l.is_strictly_lower(), "L must be strictly lower triangular");
        assert_eq!(a.len(), n);
        assert_eq!(b.len(), s);
        assert_eq!(b_abs.len(), s);
        assert_eq!(c.len(), s);
        AbsLinearForm {
            z,
            m,
            l,
            a,
            b,
            b_abs,
            c,
            d,
        }
    }

    /// An affine function `d + aᵀΔx` with no switching variables.
    pub fn affine(a: Vec<f64>, d: f64) -> Self {
        let n = a.len();
        AbsLinearForm::new(
            Matrix::zeros(0, n),
            Matrix::zeros(0, 0),
            Matrix::zeros(0, 0),
            a,
            vec![],
            vec![],
            vec![],
            d,
        )
    }

    pub fn n(&self) -> usize {
        self.z.cols()
    }
    pub fn s(&self) -> usize {
        self.z.rows()
    }
    pub fn z_mat(&self) -> &Matrix {
        &self.z
    }
    pub fn m_mat(&self) -> &Matrix {
        &self.m
    }
    pub fn l_mat(&self) -> &Matrix {
        &self.l
    }
    pub fn a(&self) -> &[f64] {
        &self.a
    }
    pub fn b(&self) -> &[f64] {
        &self.b
    }
    pub fn b_abs(&self) -> &[f64] {
        &self.b_abs
    }
    pub fn c(&self) -> &[f64] {
        &self.c
    }
    pub fn d(&self) -> f64 {
        self.d
    }

    /// Mutable access to `L`, used to inject faults in self-tests. Keeps the
    /// strictly-lower structure.
    pub fn perturb_l(&mut self, i: usize, j: usize, delta: f64) {
        assert!(j < i, "L must stay strictly lower triangular");
        self.l[(i, j)] += delta;
    }

    /// Switching variables at `dx` by forward substitution.
    pub fn switching(&self, dx: &[f64]) -> Vec<f64> {
        assert_eq!(dx.len(), self.n(), "dx has wrong length");
        let s = self.s();
        let mut z = vec![0.0; s];
        for i in 0..s {
            let mut zi = self.c[i] + dot(self.z.row(i), dx);
            let (mi, li) = (self.m.row(i), self.l.row(i));
            for j in 0..i {
                if mi[j] != 0.0 {
                    zi += mi[j] * z[j];
                }
                if li[j] != 0.0 {
                    zi += li[j] * z[j].abs();
                }
            }
            z[i] = zi;
        }
        z
    }

    /// Model value and switching vector at `dx`.
    pub fn eval_pl(&self, dx: &[f64]) -> (f64, Vec<f64>) {
        let z = self.switching(dx);
        let mut v = self.d + dot(&self.a, dx);
        for (i, &zi) in z.iter().enumerate() {
            v += self.b[i] * zi + self.b_abs[i] * zi.abs();
        }
        (v, z)
    }

    /// `Δf(x̄; dx) = f_PL(x̄; dx) − f(x̄)`.
    pub fn delta_eval(&self, fbar: f64, dx: &[f64]) -> f64 {
        self.eval_pl(dx).0 - fbar
    }

    /// Shifts `d` so that the model value at `Δx = 0` equals `fbar` in
    /// floating point, not just mathematically.
    pub(crate) fn pin_value_at_origin(&mut self, fbar: f64) {
        let zero = vec![0.0; self.n()];
        for _ in 0..4 {
            let v0 = self.eval_pl(&zero).0;
            if v0 == fbar {
                break;
            }
            self.d += fbar - v0;
        }
    }

    pub fn signature(&self, dx: &[f64], tol_z: f64) -> SignatureVector {
        assert!(tol_z >= 0.0);
        let z = self.switching(dx);
        SignatureVector(
            z.iter()
                .zip(&self.c)
                .map(|(&zi, &ci)| {
                    if zi.abs() <= tol_z * (1.0 + ci.abs()) {
                        0
                    } else if zi > 0.0 {
                        1
                    } else {
                        -1
                    }
                })
                .collect(),
        )
    }

    /// Affine piece on the signature domain of `sigma`: solves
    /// `(I − M − L·diag(σ)) z = c + Z·dx` symbolically in `dx`.
    pub fn restrict(&self, sigma: &SignatureVector) -> AffineRestriction {
        let (s, n) = (self.s(), self.n());
        assert_eq!(sigma.len(), s, "signature has wrong length");
        let sg = sigma.as_slice();
        let mut r_mat = self.z.clone();
        let mut r_vec = self.c.clone();
        for i in 0..s {
            for j in 0..i {
                let coef = self.m[(i, j)] + self.l[(i, j)] * sg[j] as f64;
                if coef != 0.0 {
                    r_vec[i] += coef * r_vec[j];
                    let (head, tail) = split_rows(&mut r_mat, j, i);
                    for (t, h) in tail.iter_mut().zip(head) {
                        *t += coef * h;
                    }
                }
            }
        }
        let weights: Vec<f64> = (0..s).map(|i| self.b[i] + sg[i] as f64 * self.b_abs[i]).collect();
        let mut g = self.a.clone();
        let mut h = self.d;
        for (i, &w) in weights.iter().enumerate() {
            if w != 0.0 {
                crate::linalg::axpy(w, r_mat.row(i), &mut g);
                h += w * r_vec[i];
            }
        }
        debug_assert_eq!(g.len(), n);
        AffineRestriction {
            sigma: sigma.clone(),
            r_mat,
            r_vec,
            g,
            h,
        }
    }

    /// Linear description of the closure of the signature domain: `σ_i z_i ≥ 0`
    /// for nonzero entries and `z_i = 0` otherwise.
    pub fn signature_constraints(&self, sigma: &SignatureVector) -> Vec<LinearConstraint> {
        constraints_from_restriction(&self.restrict(sigma))
    }

    /// Change of variables `dx = scale·v + shift`; the returned form, evaluated
    /// at `v`, equals this form evaluated at `scale·v + shift`.
    pub fn affine_substitute(&self, scale: f64, shift: &[f64]) -> AbsLinearForm {
        assert!(scale != 0.0, "scale must be nonzero");
        assert_eq!(shift.len(), self.n());
        let zs = self.z.mul_vec(shift);
        AbsLinearForm {
            z: self.z.scaled(scale),
            m: self.m.clone(),
            l: self.l.clone(),
            a: self.a.iter().map(|v| scale * v).collect(),
            b: self.b.clone(),
            b_abs: self.b_abs.clone(),
            c: self.c.iter().zip(&zs).map(|(c, z)| c + z).collect(),
            d: self.d + dot(&self.a, shift),
        }
    }

    /// Text form: header `n s`, then `Z`, `M`, `L` row by row, then the
    /// vectors `a`, `b`, `b_abs`, `c` and the scalar `d`, one line each.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n(), self.s());
        let line = |out: &mut String, v: &[f64]| {
            let parts: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
            let _ = writeln!(out, "{}", parts.join(" "));
        };
        for mat in [&self.z, &self.m, &self.l] {
            for i in 0..mat.rows() {
                line(&mut out, mat.row(i));
            }
        }
        for v in [&self.a, &self.b, &self.b_abs, &self.c] {
            line(&mut out, v);
        }
        let _ = writeln!(out, "{:?}", self.d);
        out
    }
}

fn split_rows(m: &mut Matrix, j: usize, i: usize) -> (Vec<f64>, &mut [f64]) {
    debug_assert!(j < i);
    let head = m.row(j).to_vec();
    (head, m.row_mut(i))
}

pub(crate) fn constraints_from_restriction(r: &AffineRestriction) -> Vec<LinearConstraint> {
    r.sigma
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &sg)| {
            let row = r.r_mat.row(i);
            if sg == 0 {
                LinearConstraint::eq(row.to_vec(), -r.r_vec[i])
            } else {
                let s = sg as f64;
                LinearConstraint::ge(row.iter().map(|v| s * v).collect(), -s * r.r_vec[i])
            }
        })
        .collect()
}

impl FromStr for AbsLinearForm {
    type Err = FormParseError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut toks = text.split_whitespace();
        let mut num = |what: &'static str| -> Result<f64, FormParseError> {
            let t = toks.next().ok_or(FormParseError::Truncated(what))?;
            t.parse::<f64>().map_err(|_| FormParseError::Number(t.to_string()))
        };
        let n = num("n")? as usize;
        let s = num("s")? as usize;
        let mut read_mat = |rows: usize, cols: usize, what: &'static str| {
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                data.push(num(what)?);
            }
            Ok::<_, FormParseError>(Matrix::from_row_major(rows, cols, data))
        };
        let z = read_mat(s, n, "Z")?;
        let m = read_mat(s, s, "M")?;
        let l = read_mat(s, s, "L")?;
        let a = read_mat(1, n, "a")?.as_slice().to_vec();
        let b = read_mat(1, s, "b")?.as_slice().to_vec();
        let b_abs = read_mat(1, s, "b_abs")?.as_slice().to_vec();
        let c = read_mat(1, s, "c")?.as_slice().to_vec();
        let d = read_mat(1, 1, "d")?.as_slice()[0];
        if toks.next().is_some() {
            return Err(FormParseError::Trailing);
        }
        if !m.is_strictly_lower() || !l.is_strictly_lower() {
            return Err(FormParseError::Inconsistent(
                "M and L must be strictly lower triangular".into(),
            ));
        }
        Ok(AbsLinearForm::new(z, m, l, a, b, b_abs, c, d))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::{abs_linearize, TapeBuilder};

    fn abs_form_at_one() -> AbsLinearForm {
        let mut b = TapeBuilder::new(1);
        let x = b.input(0);
        let y = b.abs(x);
        abs_linearize(&b.finish(y), &[1.0]).unwrap()
    }

    fn example1_form() -> AbsLinearForm {
        let mut b = TapeBuilder::new(1);
        let x = b.input(0);
        let z1 = b.add_const(x, 1.0);
        let a1 = b.abs(z1);
        let x3 = b.scale(x, 3.0);
        let x31 = b.add_const(x3, 1.0);
        let z2 = b.add(x31, a1);
        let a2 = b.abs(z2);
        let z3 = b.add(a1, a2);
        let a3 = b.abs(z3);
        let t = b.add(x31, a3);
        let f = b.scale(t, 0.25);
        abs_linearize(&b.finish(f), &[0.0]).unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(example1_form().eval_pl(&[0.0]).0, 1.0);
        // |1 + dx| at dx = -3 is f(-2) = 2.
        assert_eq!(abs_form_at_one().eval_pl(&[-3.0]).0, 2.0);
        assert_eq!(abs_form_at_one().delta_eval(1.0, &[-3.0]), 1.0);
        let f = abs_form_at_one();
        assert_eq!(f.delta_eval(1.0, &[0.0]), 0.0);
        assert_eq!(f.delta_eval(1.0, &[0.5]), 0.5);
    }

    #[test]
    fn example1_model_is_exact() {
        // The function is piecewise linear, so its model at 0 reproduces it.
        let form = example1_form();
        for &x in &[-2.0, -0.75, -0.5, -0.1, 0.0, 1.5] {
            let want = 0.0f64.max(x).max(2.0 * x + 1.0);
            assert!((form.eval_pl(&[x]).0 - want).abs() < 1e-14);
        }
    }

    #[test]
    fn signature_examples() {
        let form = example1_form();
        assert_eq!(form.signature(&[-0.5], DEFAULT_TOL_Z).as_slice(), &[1, 0, 1]);
        let f = abs_form_at_one();
        assert_eq!(f.signature(&[0.0], DEFAULT_TOL_Z).as_slice(), &[1]);
        assert_eq!(f.signature(&[-1.0], 1e-12).as_slice(), &[0]);
    }

    #[test]
    fn restrict_examples() {
        let f = abs_form_at_one();
        let r = f.restrict(&SignatureVector::new(vec![1]));
        assert_eq!(r.r_mat[(0, 0)], 1.0);
        assert_eq!(r.r_vec[0], 1.0);
        assert_eq!(r.g, vec![1.0]);
        assert_eq!(r.h, 1.0);

        let form = example1_form();
        let r = form.restrict(&SignatureVector::new(vec![1, 1, 1]));
        // 2x + 1 on the piece x > 0.
        assert!((r.g[0] - 2.0).abs() < 1e-15);
        assert!((r.h - 1.0).abs() < 1e-15);
        // z = (x+1, 4x+2, 5x+3)
        assert_eq!(r.r_mat.as_slice(), &[1.0, 4.0, 5.0]);
        assert_eq!(r.r_vec, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn signature_constraint_examples() {
        let f = abs_form_at_one();
        let cs = f.signature_constraints(&SignatureVector::new(vec![1]));
        assert_eq!(cs, vec![LinearConstraint::ge(vec![1.0], -1.0)]);
        let cs = f.signature_constraints(&SignatureVector::new(vec![0]));
        assert_eq!(cs, vec![LinearConstraint::eq(vec![1.0], -1.0)]);

        let form = example1_form();
        let cs = form.signature_constraints(&SignatureVector::new(vec![1, 1, 1]));
        assert_eq!(
            cs,
            vec![
                LinearConstraint::ge(vec![1.0], -1.0),
                LinearConstraint::ge(vec![4.0], -2.0),
                LinearConstraint::ge(vec![5.0], -3.0),
            ]
        );
    }

    #[test]
    fn substitute_examples() {
        let f = abs_form_at_one();
        assert_eq!(f.affine_substitute(1.0, &[0.0]), f);
        let alpha = 0.3;
        let g = f.affine_substitute(alpha, &[-alpha * 1.0]);
        for &v in &[-5.0, -1.0, 0.0, 1.0, 4.0] {
            let dx = alpha * (v - 1.0);
            assert!((g.eval_pl(&[v]).0 - f.eval_pl(&[dx]).0).abs() < 1e-15);
        }
    }

    #[test]
    fn text_round_trip_is_exact() {
        let form = example1_form().affine_substitute(0.1, &[1.0 / 3.0]);
        let back: AbsLinearForm = form.to_text().parse().unwrap();
        assert_eq!(back, form);
        assert!("1 1\n1".parse::<AbsLinearForm>().is_err());
    }
}
