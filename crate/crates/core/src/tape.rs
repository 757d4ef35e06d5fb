//! Recording of abs-smooth functions and their abs-linearization.
//!
//! A [`Tape`] is a straight-line program over smooth primitives plus `abs`.
//! Every `abs` node receives a switching index in recording order, so the
//! switching variable `z_i` (the argument of the `i`-th `abs`) can only depend
//! on `z_j` with `j < i`.
//!
//! [`abs_linearize`] propagates, node by node, an affine record in the
//! variables `(Δx, z, |z|)`. Smooth operations are replaced by their tangent
//! at the development point while `abs` is kept exact. When an `abs` node is
//! reached the record of its argument becomes row `i` of `(Z | M | L)` with
//! constant `c_i`; afterwards the argument node is represented by `z_i` and the
//! `abs` node by `|z_i|`.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

use crate::linalg::Matrix;
use crate::plmodel::AbsLinearForm;

/// Index of a node on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub usize);

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Op {
    Input(usize),
    Const(f64),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    Square(Var),
    Sin(Var),
    Cos(Var),
    Exp(Var),
    /// Natural logarithm; only used by the extended benchmark set.
    Ln(Var),
    Abs(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::Const(_) => "const",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Neg(_) => "neg",
            Op::Scale(..) => "scale",
            Op::Square(_) => "square",
            Op::Sin(_) => "sin",
            Op::Cos(_) => "cos",
            Op::Exp(_) => "exp",
            Op::Ln(_) => "ln",
            Op::Abs(_) => "abs",
        }
    }

    fn operands(&self) -> [Option<Var>; 2] {
        match *self {
            Op::Input(_) | Op::Const(_) => [None, None],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => [Some(a), Some(b)],
            Op::Neg(a)
            | Op::Scale(a, _)
            | Op::Square(a)
            | Op::Sin(a)
            | Op::Cos(a)
            | Op::Exp(a)
            | Op::Ln(a)
            | Op::Abs(a) => [Some(a), None],
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TapeError {
    #[error("expected {expected} inputs, got {got}")]
    InputLength { expected: usize, got: usize },
    #[error("evaluation produced a non-finite value at node {node} ({op})")]
    NonFinite { node: usize, op: &'static str },
    #[error("malformed tape text at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid tape: {0}")]
    Invalid(String),
}

/// An immutable recorded abs-smooth function `f: R^n -> R`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tape {
    nodes: Vec<Op>,
    num_inputs: usize,
    /// Node index of every `abs`, in switching order.
    abs_nodes: Vec<usize>,
    output: usize,
}

/// Result of a forward sweep.
#[derive(Clone, Debug)]
pub struct EvalRecord {
    pub values: Vec<f64>,
    /// Arguments of the `abs` nodes, in switching order.
    pub z: Vec<f64>,
    pub y: f64,
}

impl Tape {
    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    pub fn num_switch(&self) -> usize {
        self.abs_nodes.len()
    }

    pub fn nodes(&self) -> &[Op] {
        &self.nodes
    }

    pub fn output(&self) -> usize {
        self.output
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn from_parts(nodes: Vec<Op>, num_inputs: usize, output: usize) -> Result<Tape, TapeError> {
        let mut abs_nodes = Vec::new();
        for (k, op) in nodes.iter().enumerate() {
            for a in op.operands().into_iter().flatten() {
                if a.0 >= k {
                    return Err(TapeError::Invalid(format!(
                        "node {k} references node {} which is not earlier",
                        a.0
                    )));
                }
            }
            match *op {
                Op::Input(j) if j >= num_inputs => {
                    return Err(TapeError::Invalid(format!(
                        "node {k} reads input {j} but the tape has {num_inputs} inputs"
                    )))
                }
                Op::Abs(_) => abs_nodes.push(k),
                _ => {}
            }
        }
        if output >= nodes.len() {
            return Err(TapeError::Invalid("output node out of range".into()));
        }
        Ok(Tape {
            nodes,
            num_inputs,
            abs_nodes,
            output,
        })
    }

    /// Forward evaluation at `x`.
    pub fn evaluate(&self, x: &[f64]) -> Result<EvalRecord, TapeError> {
        if x.len() != self.num_inputs {
            return Err(TapeError::InputLength {
                expected: self.num_inputs,
                got: x.len(),
            });
        }
        let mut values: Vec<f64> = Vec::with_capacity(self.nodes.len());
        let mut z = Vec::with_capacity(self.abs_nodes.len());
        for (k, op) in self.nodes.iter().enumerate() {
            let v = match *op {
                Op::Input(j) => x[j],
                Op::Const(c) => c,
                Op::Add(a, b) => values[a.0] + values[b.0],
                Op::Sub(a, b) => values[a.0] - values[b.0],
                Op::Mul(a, b) => values[a.0] * values[b.0],
                Op::Neg(a) => -values[a.0],
                Op::Scale(a, s) => s * values[a.0],
                Op::Square(a) => values[a.0] * values[a.0],
                Op::Sin(a) => values[a.0].sin(),
                Op::Cos(a) => values[a.0].cos(),
                Op::Exp(a) => values[a.0].exp(),
                Op::Ln(a) => values[a.0].ln(),
                Op::Abs(a) => {
                    z.push(values[a.0]);
                    values[a.0].abs()
                }
            };
            if !v.is_finite() {
                return Err(TapeError::NonFinite {
                    node: k,
                    op: op.name(),
                });
            }
            values.push(v);
        }
        let y = values[self.output];
        Ok(EvalRecord { values, z, y })
    }

    /// Convenience: just the function value.
    pub fn value(&self, x: &[f64]) -> Result<f64, TapeError> {
        Ok(self.evaluate(x)?.y)
    }

    /// Line-oriented text form: header `n=<int> s=<int>` followed by one
    /// `idx op arg1 [arg2|value]` line per node. The last node is the output.
    pub fn to_text(&self) -> String {
        let mut out = format!("n={} s={}\n", self.num_inputs, self.num_switch());
        let last = self.nodes.len() - 1;
        for (k, op) in self.nodes.iter().enumerate() {
            let _ = match *op {
                Op::Input(j) => writeln!(out, "{k} input {j}"),
                Op::Const(c) => writeln!(out, "{k} const {c:?}"),
                Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                    writeln!(out, "{k} {} {} {}", op.name(), a.0, b.0)
                }
                Op::Scale(a, s) => writeln!(out, "{k} scale {} {s:?}", a.0),
                Op::Neg(a) | Op::Square(a) | Op::Sin(a) | Op::Cos(a) | Op::Exp(a) | Op::Ln(a) | Op::Abs(a) => {
                    writeln!(out, "{k} {} {}", op.name(), a.0)
                }
            };
        }
        debug_assert_eq!(self.output, last, "tapes always end with their output");
        out
    }
}

impl fmt::Display for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl FromStr for Tape {
    type Err = TapeError;

    fn from_str(text: &str) -> Result<Tape, TapeError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hl, header) = lines.next().ok_or(TapeError::Parse {
            line: 1,
            msg: "empty input".into(),
        })?;
        let perr = |line: usize, msg: &str| TapeError::Parse {
            line,
            msg: msg.to_string(),
        };
        let mut n = None;
        let mut s = None;
        for tok in header.split_whitespace() {
            if let Some(v) = tok.strip_prefix("n=") {
                n = Some(v.parse::<usize>().map_err(|_| perr(hl, "bad n"))?);
            } else if let Some(v) = tok.strip_prefix("s=") {
                s = Some(v.parse::<usize>().map_err(|_| perr(hl, "bad s"))?);
            } else {
                return Err(perr(hl, "unexpected header token"));
            }
        }
        let n = n.ok_or_else(|| perr(hl, "missing n="))?;
        let s = s.ok_or_else(|| perr(hl, "missing s="))?;

        let mut nodes = Vec::new();
        for (ln, line) in lines {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() < 3 {
                return Err(perr(ln, "expected `idx op arg`"));
            }
            let idx: usize = toks[0].parse().map_err(|_| perr(ln, "bad index"))?;
            if idx != nodes.len() {
                return Err(perr(ln, "node indices must be consecutive"));
            }
            let var = |t: &str| t.parse::<usize>().map(Var).map_err(|_| perr(ln, "bad operand"));
            let num = |t: &str| t.parse::<f64>().map_err(|_| perr(ln, "bad value"));
            let second = || toks.get(3).copied().ok_or_else(|| perr(ln, "missing second operand"));
            let op = match toks[1] {
                "input" => Op::Input(toks[2].parse().map_err(|_| perr(ln, "bad input index"))?),
                "const" => Op::Const(num(toks[2])?),
                "add" => Op::Add(var(toks[2])?, var(second()?)?),
                "sub" => Op::Sub(var(toks[2])?, var(second()?)?),
                "mul" => Op::Mul(var(toks[2])?, var(second()?)?),
                "scale" => Op::Scale(var(toks[2])?, num(second()?)?),
                "neg" => Op::Neg(var(toks[2])?),
                "square" => Op::Square(var(toks[2])?),
                "sin" => Op::Sin(var(toks[2])?),
                "cos" => Op::Cos(var(toks[2])?),
                "exp" => Op::Exp(var(toks[2])?),
                "ln" => Op::Ln(var(toks[2])?),
                "abs" => Op::Abs(var(toks[2])?),
                other => return Err(perr(ln, &format!("unknown op `{other}`"))),
            };
            nodes.push(op);
        }
        if nodes.is_empty() {
            return Err(perr(hl, "tape has no nodes"));
        }
        let output = nodes.len() - 1;
        let tape = Tape::from_parts(nodes, n, output)?;
        if tape.num_switch() != s {
            return Err(perr(hl, "header s= does not match the number of abs nodes"));
        }
        Ok(tape)
    }
}

/// Expression-builder for tapes. Inputs `0..n` are created up front.
#[derive(Clone, Debug)]
pub struct TapeBuilder {
    nodes: Vec<Op>,
    num_inputs: usize,
}

impl TapeBuilder {
    pub fn new(num_inputs: usize) -> Self {
        TapeBuilder {
            nodes: (0..num_inputs).map(Op::Input).collect(),
            num_inputs,
        }
    }

    pub fn input(&self, j: usize) -> Var {
        assert!(j < self.num_inputs, "input {j} out of range");
        Var(j)
    }

    pub fn inputs(&self) -> Vec<Var> {
        (0..self.num_inputs).map(Var).collect()
    }

    fn push(&mut self, op: Op) -> Var {
        for a in op.operands().into_iter().flatten() {
            assert!(a.0 < self.nodes.len(), "operand {} not yet recorded", a.0);
        }
        self.nodes.push(op);
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, c: f64) -> Var {
        self.push(Op::Const(c))
    }
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Add(a, b))
    }
    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Sub(a, b))
    }
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Mul(a, b))
    }
    pub fn neg(&mut self, a: Var) -> Var {
        self.push(Op::Neg(a))
    }
    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.push(Op::Scale(a, s))
    }
    pub fn square(&mut self, a: Var) -> Var {
        self.push(Op::Square(a))
    }
    pub fn sin(&mut self, a: Var) -> Var {
        self.push(Op::Sin(a))
    }
    pub fn cos(&mut self, a: Var) -> Var {
        self.push(Op::Cos(a))
    }
    pub fn exp(&mut self, a: Var) -> Var {
        self.push(Op::Exp(a))
    }
    pub fn ln(&mut self, a: Var) -> Var {
        self.push(Op::Ln(a))
    }
    pub fn abs(&mut self, a: Var) -> Var {
        self.push(Op::Abs(a))
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let k = self.constant(c);
        self.add(a, k)
    }

    /// `max(u, v) = (u + v + |u - v|) / 2`
    pub fn max(&mut self, u: Var, v: Var) -> Var {
        let s = self.add(u, v);
        let d = self.sub(u, v);
        let ad = self.abs(d);
        let t = self.add(s, ad);
        self.scale(t, 0.5)
    }

    /// `min(u, v) = (u + v - |u - v|) / 2`
    pub fn min(&mut self, u: Var, v: Var) -> Var {
        let s = self.add(u, v);
        let d = self.sub(u, v);
        let ad = self.abs(d);
        let t = self.sub(s, ad);
        self.scale(t, 0.5)
    }

    /// Maximum of several terms as a balanced tree of pairwise maxima.
    pub fn max_all(&mut self, terms: &[Var]) -> Var {
        self.reduce_balanced(terms, Self::max)
    }

    /// Sum of several terms as a balanced tree, which keeps linearization
    /// records short.
    pub fn sum(&mut self, terms: &[Var]) -> Var {
        if terms.is_empty() {
            return self.constant(0.0);
        }
        self.reduce_balanced(terms, Self::add)
    }

    /// `Σ coeffs[j] · vars[j]`
    pub fn dot(&mut self, coeffs: &[f64], vars: &[Var]) -> Var {
        assert_eq!(coeffs.len(), vars.len());
        let terms: Vec<Var> = coeffs
            .iter()
            .zip(vars)
            .map(|(&c, &v)| self.scale(v, c))
            .collect();
        self.sum(&terms)
    }

    fn reduce_balanced(&mut self, terms: &[Var], f: fn(&mut Self, Var, Var) -> Var) -> Var {
        assert!(!terms.is_empty(), "reduction over an empty set");
        let mut layer = terms.to_vec();
        while layer.len() > 1 {
            let mut next = Vec::with_capacity(layer.len().div_ceil(2));
            for pair in layer.chunks(2) {
                next.push(if pair.len() == 2 { f(self, pair[0], pair[1]) } else { pair[0] });
            }
            layer = next;
        }
        layer[0]
    }

    /// Finalizes the tape with `output` as the function value.
    pub fn finish(mut self, output: Var) -> Tape {
        if output.0 + 1 != self.nodes.len() {
            // Keep the "output is the last node" convention of the text format.
            self.push(Op::Scale(output, 1.0));
        }
        let out = self.nodes.len() - 1;
        Tape::from_parts(self.nodes, self.num_inputs, out).expect("builder produces valid tapes")
    }
}

/// `(f(xbar + h·d) − f(xbar)) / h`
pub fn directional_fd(tape: &Tape, xbar: &[f64], d: &[f64], h: f64) -> Result<f64, TapeError> {
    assert!(h > 0.0, "step must be positive");
    assert_eq!(d.len(), xbar.len());
    let f0 = tape.value(xbar)?;
    let xp: Vec<f64> = xbar.iter().zip(d).map(|(x, di)| x + h * di).collect();
    let f1 = tape.value(&xp)?;
    Ok((f1 - f0) / h)
}

/// Sparse affine record: constant plus sorted `(variable, coefficient)` terms
/// over `Δx` (ids `0..n`), `z` (`n..n+s`) and `|z|` (`n+s..n+2s`).
#[derive(Clone, Debug, Default)]
struct Record {
    cst: f64,
    terms: Vec<(u32, f64)>,
}

impl Record {
    fn unit(id: usize) -> Record {
        Record {
            cst: 0.0,
            terms: vec![(id as u32, 1.0)],
        }
    }

    fn scaled(&self, s: f64) -> Record {
        Record {
            cst: s * self.cst,
            terms: self.terms.iter().map(|&(k, v)| (k, s * v)).collect(),
        }
    }

    /// `p·a + q·b`
    fn combine(p: f64, a: &Record, q: f64, b: &Record) -> Record {
        let mut terms = Vec::with_capacity(a.terms.len() + b.terms.len());
        let (mut i, mut j) = (0, 0);
        while i < a.terms.len() || j < b.terms.len() {
            let ka = a.terms.get(i).map_or(u32::MAX, |t| t.0);
            let kb = b.terms.get(j).map_or(u32::MAX, |t| t.0);
            if ka < kb {
                terms.push((ka, p * a.terms[i].1));
                i += 1;
            } else if kb < ka {
                terms.push((kb, q * b.terms[j].1));
                j += 1;
            } else {
                terms.push((ka, p * a.terms[i].1 + q * b.terms[j].1));
                i += 1;
                j += 1;
            }
        }
        Record {
            cst: p * a.cst + q * b.cst,
            terms,
        }
    }
}

/// Abs-linearization of `tape` at `xbar`.
///
/// The constants are pinned so that the model reproduces `f(xbar)` at
/// `Δx = 0`.
pub fn abs_linearize(tape: &Tape, xbar: &[f64]) -> Result<AbsLinearForm, TapeError> {
    let rec = tape.evaluate(xbar)?;
    let n = tape.num_inputs;
    let s = tape.num_switch();
    let vals = &rec.values;

    let mut z_mat = Matrix::zeros(s, n);
    let mut m_mat = Matrix::zeros(s, s);
    let mut l_mat = Matrix::zeros(s, s);
    let mut c = vec![0.0; s];

    let mut records: Vec<Record> = Vec::with_capacity(tape.nodes.len());
    let mut next_switch = 0usize;
    // The tangent of a unary map φ: record' = φ'(v)·record, shifted so the
    // constant stays consistent with φ(v).
    let tangent = |r: &Record, v: f64, fv: f64, dfv: f64| {
        let mut out = r.scaled(dfv);
        out.cst = fv + dfv * (r.cst - v);
        out
    };
    for (k, op) in tape.nodes.iter().enumerate() {
        let r = match *op {
            Op::Input(j) => Record {
                cst: xbar[j],
                terms: vec![(j as u32, 1.0)],
            },
            Op::Const(v) => Record {
                cst: v,
                terms: Vec::new(),
            },
            Op::Add(a, b) => Record::combine(1.0, &records[a.0], 1.0, &records[b.0]),
            Op::Sub(a, b) => Record::combine(1.0, &records[a.0], -1.0, &records[b.0]),
            Op::Mul(a, b) => {
                let (va, vb) = (vals[a.0], vals[b.0]);
                let mut r = Record::combine(vb, &records[a.0], va, &records[b.0]);
                r.cst -= va * vb;
                r
            }
            Op::Neg(a) => records[a.0].scaled(-1.0),
            Op::Scale(a, sc) => records[a.0].scaled(sc),
            Op::Square(a) => {
                let v = vals[a.0];
                tangent(&records[a.0], v, v * v, 2.0 * v)
            }
            Op::Sin(a) => {
                let v = vals[a.0];
                tangent(&records[a.0], v, v.sin(), v.cos())
            }
            Op::Cos(a) => {
                let v = vals[a.0];
                tangent(&records[a.0], v, v.cos(), -v.sin())
            }
            Op::Exp(a) => {
                let v = vals[a.0];
                let e = v.exp();
                tangent(&records[a.0], v, e, e)
            }
            Op::Ln(a) => {
                let v = vals[a.0];
                tangent(&records[a.0], v, v.ln(), 1.0 / v)
            }
            Op::Abs(a) => {
                let i = next_switch;
                next_switch += 1;
                let arg = &records[a.0];
                c[i] = arg.cst;
                for &(id, coef) in &arg.terms {
                    let id = id as usize;
                    if id < n {
                        z_mat[(i, id)] = coef;
                    } else if id < n + s {
                        m_mat[(i, id - n)] = coef;
                    } else {
                        l_mat[(i, id - n - s)] = coef;
                    }
                }
                records[a.0] = Record::unit(n + i);
                Record::unit(n + s + i)
            }
        };
        debug_assert_eq!(records.len(), k);
        records.push(r);
    }

    let out = &records[tape.output];
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; s];
    let mut b_abs = vec![0.0; s];
    for &(id, coef) in &out.terms {
        let id = id as usize;
        if id < n {
            a[id] = coef;
        } else if id < n + s {
            b[id - n] = coef;
        } else {
            b_abs[id - n - s] = coef;
        }
    }
    let mut form = AbsLinearForm::new(z_mat, m_mat, l_mat, a, b, b_abs, c, out.cst);
    form.pin_value_at_origin(rec.y);
    Ok(form)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `max(0, x, 2x+1)` recorded with three switching variables:
    /// z1 = x+1, z2 = 3x+1+|z1|, z3 = |z1|+|z2|, f = (3x+1+|z3|)/4.
    pub(crate) fn example1() -> Tape {
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
        b.finish(f)
    }

    #[test]
    fn example1_values() {
        let tape = example1();
        assert_eq!(tape.num_switch(), 3);
        let r = tape.evaluate(&[0.0]).unwrap();
        assert_eq!(r.z, vec![1.0, 2.0, 3.0]);
        assert_eq!(r.y, 1.0);
        let r = tape.evaluate(&[-0.5]).unwrap();
        assert_eq!(r.z, vec![0.5, 0.0, 0.5]);
        assert_eq!(r.y, 0.0);
        for &x in &[-3.0, -0.7, -0.2, 0.4, 2.0] {
            let want = 0.0f64.max(x).max(2.0 * x + 1.0);
            assert!((tape.value(&[x]).unwrap() - want).abs() < 1e-14);
        }
    }

    #[test]
    fn pure_smooth_square() {
        let mut b = TapeBuilder::new(1);
        let x = b.input(0);
        let y = b.square(x);
        let tape = b.finish(y);
        assert_eq!(tape.num_switch(), 0);
        assert_eq!(tape.value(&[3.0]).unwrap(), 9.0);
    }

    #[test]
    fn non_finite_reports_node() {
        let mut b = TapeBuilder::new(1);
        let x = b.input(0);
        let e = b.exp(x);
        let tape = b.finish(e);
        match tape.evaluate(&[1000.0]) {
            Err(TapeError::NonFinite { node, op }) => {
                assert_eq!(node, 1);
                assert_eq!(op, "exp");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(tape.evaluate(&[1.0, 2.0]), Err(TapeError::InputLength { .. })));
    }

    #[test]
    fn abs_at_one() {
        let mut b = TapeBuilder::new(1);
        let x = b.input(0);
        let y = b.abs(x);
        let tape = b.finish(y);
        let form = abs_linearize(&tape, &[1.0]).unwrap();
        assert_eq!(form.s(), 1);
        assert_eq!(form.c(), &[1.0]);
        assert_eq!(form.z_mat()[(0, 0)], 1.0);
        let f1 = 1.0;
        assert_eq!(form.delta_eval(f1, &[0.5]), 0.5);
        assert_eq!(form.delta_eval(f1, &[-3.0]), 1.0);
    }

    #[test]
    fn smooth_linearization_is_gradient() {
        let mut b = TapeBuilder::new(1);
        let x = b.input(0);
        let y = b.square(x);
        let tape = b.finish(y);
        let form = abs_linearize(&tape, &[3.0]).unwrap();
        assert_eq!(form.delta_eval(9.0, &[1.0]), 6.0);
        assert_eq!(form.delta_eval(9.0, &[-0.25]), -1.5);
    }

    #[test]
    fn mifflin_linearization_matches_hand_formula() {
        let tape = crate::bench::mifflin2().tape;
        let xbar = [-1.8, 1.8];
        let fbar = tape.value(&xbar).unwrap();
        let form = abs_linearize(&tape, &xbar).unwrap();
        let hand = |dx: [f64; 2]| {
            let q = xbar[0] * xbar[0] + xbar[1] * xbar[1] - 1.0;
            let lin = 2.0 * xbar[0] * dx[0] + 2.0 * xbar[1] * dx[1];
            -dx[0] + 2.0 * lin + 1.75 * ((q + lin).abs() - q.abs())
        };
        assert!((form.delta_eval(fbar, &[0.1, 0.0]) - (-1.45)).abs() < 1e-12);
        for dx in [[0.1, 0.0], [-2.0, 0.3], [1.0, -1.5], [0.9, -0.9]] {
            assert!((form.delta_eval(fbar, &dx) - hand(dx)).abs() < 1e-12);
        }
    }

    #[test]
    fn strictly_lower_and_consistent_at_zero() {
        let tape = example1();
        for &x in &[0.0, -0.5, -1.0, 0.3] {
            let form = abs_linearize(&tape, &[x]).unwrap();
            assert!(form.m_mat().is_strictly_lower());
            assert!(form.l_mat().is_strictly_lower());
            let f = tape.value(&[x]).unwrap();
            assert!((form.eval_pl(&[0.0]).0 - f).abs() <= 1e-12 * (1.0 + f.abs()));
        }
    }

    #[test]
    fn directional_fd_examples() {
        let mut b = TapeBuilder::new(1);
        let x = b.input(0);
        let y = b.abs(x);
        let abs = b.finish(y);
        assert!((directional_fd(&abs, &[0.0], &[1.0], 1e-6).unwrap() - 1.0).abs() < 1e-12);
        assert!((directional_fd(&abs, &[0.0], &[-1.0], 1e-6).unwrap() - 1.0).abs() < 1e-12);
        let mut b = TapeBuilder::new(1);
        let x = b.input(0);
        let y = b.square(x);
        let sq = b.finish(y);
        assert!((directional_fd(&sq, &[3.0], &[1.0], 1e-6).unwrap() - 6.0).abs() < 1e-5);
    }

    #[test]
    fn text_round_trip() {
        let mut b = TapeBuilder::new(2);
        let x = b.input(0);
        let y = b.input(1);
        let p = b.mul(x, y);
        let s = b.sin(p);
        let k = b.constant(0.1);
        let t = b.sub(s, k);
        let a = b.abs(t);
        let o = b.scale(a, std::f64::consts::PI / 7.0);
        let tape = b.finish(o);
        let text = tape.to_text();
        assert!(text.starts_with("n=2 s=1\n"));
        let back: Tape = text.parse().unwrap();
        assert_eq!(back, tape);
    }

    #[test]
    fn parse_errors() {
        assert!("".parse::<Tape>().is_err());
        assert!("n=1 s=0\n0 input 0\n1 frob 0\n".parse::<Tape>().is_err());
        assert!("n=1 s=1\n0 input 0\n1 neg 0\n".parse::<Tape>().is_err());
        assert!("n=1 s=0\n0 input 0\n1 neg 3\n".parse::<Tape>().is_err());
    }
}
