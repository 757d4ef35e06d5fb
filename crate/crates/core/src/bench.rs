//! Benchmark instances: tape, feasible set and starting point.

use std::fmt;

use crate::linalg::norm_inf;
use crate::polyhedron::Polyhedron;
use crate::rng::{NormalRng, GENERATOR_NAME};
use crate::tape::{Tape, TapeBuilder, Var};

#[derive(Clone, Debug)]
pub struct KnownOptimum {
    pub x: Option<Vec<f64>>,
    pub f: f64,
}

#[derive(Clone, Debug)]
pub struct BenchmarkInstance {
    pub name: String,
    pub tape: Tape,
    pub poly: Polyhedron,
    pub x0: Vec<f64>,
    pub known_optimum: Option<KnownOptimum>,
    /// Key/value pairs written next to traces.
    pub meta: Vec<(String, String)>,
}

impl BenchmarkInstance {
    fn new(name: &str, tape: Tape, poly: Polyhedron, x0: Vec<f64>) -> Self {
        let n = x0.len();
        BenchmarkInstance {
            name: name.to_string(),
            tape,
            poly,
            x0,
            known_optimum: None,
            meta: vec![("name".into(), name.into()), ("n".into(), n.to_string())],
        }
    }

    fn with_optimum(mut self, x: Option<Vec<f64>>, f: f64) -> Self {
        self.known_optimum = Some(KnownOptimum { x, f });
        self
    }

    fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn n(&self) -> usize {
        self.x0.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaxqSet {
    C1,
    C2,
    C3,
}

impl fmt::Display for MaxqSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaxqSet::C1 => "C1",
            MaxqSet::C2 => "C2",
            MaxqSet::C3 => "C3",
        })
    }
}

impl std::str::FromStr for MaxqSet {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "C1" => Ok(MaxqSet::C1),
            "C2" => Ok(MaxqSet::C2),
            "C3" => Ok(MaxqSet::C3),
            _ => Err(format!("unknown feasible set `{s}` (expected C1, C2 or C3)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LassoVariant {
    Box,
    Ordered,
}

impl fmt::Display for LassoVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LassoVariant::Box => "box",
            LassoVariant::Ordered => "ordered",
        })
    }
}

impl std::str::FromStr for LassoVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "box" => Ok(LassoVariant::Box),
            "ordered" => Ok(LassoVariant::Ordered),
            _ => Err(format!("unknown lasso variant `{s}` (expected box or ordered)")),
        }
    }
}

/// Raw MAXQ starting point: `i` for the first half, `−i` for the rest (1-based).
pub fn maxq_x0(n: usize) -> Vec<f64> {
    let half = n / 2;
    (1..=n)
        .map(|i| if i <= half { i as f64 } else { -(i as f64) })
        .collect()
}

pub fn maxq_set(n: usize, set: MaxqSet) -> Polyhedron {
    let half = n / 2;
    let mut lo = vec![0.0; n];
    let mut hi = vec![0.0; n];
    for i in 1..=n {
        let fi = i as f64;
        let (l, h) = match (set, i <= half) {
            (MaxqSet::C1, true) => (-5.0, 2.0 * fi - 2.0),
            (MaxqSet::C1, false) => (-2.0 * fi + 2.0, 5.0),
            (MaxqSet::C2, true) => (0.0, 2.0 * fi - 2.0),
            (MaxqSet::C2, false) => (-2.0 * fi + 2.0, 0.0),
            (MaxqSet::C3, true) => (1.0, 2.0 * fi - 1.0),
            (MaxqSet::C3, false) => (-2.0 * fi + 1.0, -1.0),
        };
        lo[i - 1] = l;
        hi[i - 1] = h;
    }
    Polyhedron::with_bounds(lo, hi)
}

/// `max_i x_i²` over one of the three MAXQ feasible sets. The starting point
/// is the raw one clipped into the set (the first coordinate lies outside
/// `C1` and `C2`).
pub fn maxq(n: usize, set: MaxqSet) -> BenchmarkInstance {
    assert!(n >= 2, "maxq needs n >= 2");
    let mut b = TapeBuilder::new(n);
    let sq: Vec<Var> = b.inputs().into_iter().map(|x| b.square(x)).collect();
    let f = b.max_all(&sq);
    let poly = maxq_set(n, set);
    let mut x0 = maxq_x0(n);
    poly.clip_to_box(&mut x0);
    let half = n / 2;
    let (xs, fs) = match set {
        MaxqSet::C1 | MaxqSet::C2 => (vec![0.0; n], 0.0),
        MaxqSet::C3 => (
            (1..=n).map(|i| if i <= half { 1.0 } else { -1.0 }).collect(),
            1.0,
        ),
    };
    BenchmarkInstance::new("maxq", b.finish(f), poly, x0)
        .with_optimum(Some(xs), fs)
        .with_meta("set", set)
}

fn pair_terms(n: usize, mut term: impl FnMut(&mut TapeBuilder, Var, Var) -> Var) -> (TapeBuilder, Vec<Var>) {
    let mut b = TapeBuilder::new(n);
    let x = b.inputs();
    let terms = (0..n - 1).map(|i| term(&mut b, x[i], x[i + 1])).collect();
    (b, terms)
}

/// `Σ max{−x_i − x_{i+1}, −x_i − x_{i+1} + x_i² + x_{i+1}² − 1}`, box ±5.
pub fn chained_lq(n: usize) -> BenchmarkInstance {
    assert!(n >= 2, "chained_lq needs n >= 2");
    let (mut b, terms) = pair_terms(n, |b, u, v| {
        let s = b.add(u, v);
        let lin = b.neg(s);
        let (u2, v2) = (b.square(u), b.square(v));
        let q = b.add(u2, v2);
        let q1 = b.add_const(q, -1.0);
        let quad = b.add(lin, q1);
        b.max(lin, quad)
    });
    let f = b.sum(&terms);
    let fstar = -((n - 1) as f64) * std::f64::consts::SQRT_2;
    BenchmarkInstance::new("chained_lq", b.finish(f), Polyhedron::cube(n, -5.0, 5.0), vec![-0.5; n])
        .with_optimum(None, fstar)
}

/// `¼(x_1 − 1)² + Σ |x_{i+1} − 2x_i² + 1|`, box ±5.
pub fn rosenbrock_nesterov1(n: usize) -> BenchmarkInstance {
    assert!(n >= 2, "rosenbrock_nesterov1 needs n >= 2");
    let mut b = TapeBuilder::new(n);
    let x = b.inputs();
    let x1m = b.add_const(x[0], -1.0);
    let sq = b.square(x1m);
    let mut terms = vec![b.scale(sq, 0.25)];
    for i in 0..n - 1 {
        let xi2 = b.square(x[i]);
        let t = b.scale(xi2, -2.0);
        let u = b.add(x[i + 1], t);
        let u1 = b.add_const(u, 1.0);
        terms.push(b.abs(u1));
    }
    let f = b.sum(&terms);
    let x0 = (1..=n).map(|i| if i % 2 == 1 { -0.5 } else { 0.5 }).collect();
    BenchmarkInstance::new("rosenbrock_nesterov1", b.finish(f), Polyhedron::cube(n, -5.0, 5.0), x0)
        .with_optimum(Some(vec![1.0; n]), 0.0)
}

/// `¼|x_1 − 1| + Σ |x_{i+1} − 2|x_i| + 1|`, box ±20, start `(−1, 1, …, 1)`.
/// Piecewise linear with `2n − 1` switching variables.
pub fn rosenbrock_nesterov2(n: usize) -> BenchmarkInstance {
    assert!(n >= 1, "rosenbrock_nesterov2 needs n >= 1");
    let mut b = TapeBuilder::new(n);
    let x = b.inputs();
    let x1m = b.add_const(x[0], -1.0);
    let a = b.abs(x1m);
    let mut terms = vec![b.scale(a, 0.25)];
    for i in 0..n.saturating_sub(1) {
        let ax = b.abs(x[i]);
        let t = b.scale(ax, -2.0);
        let u = b.add(x[i + 1], t);
        let u1 = b.add_const(u, 1.0);
        terms.push(b.abs(u1));
    }
    let f = b.sum(&terms);
    let mut x0 = vec![1.0; n];
    x0[0] = -1.0;
    BenchmarkInstance::new("rosenbrock_nesterov2", b.finish(f), Polyhedron::cube(n, -20.0, 20.0), x0)
        .with_optimum(Some(vec![1.0; n]), 0.0)
}

fn alternating(n: usize, odd: f64, even: f64) -> Vec<f64> {
    (1..=n).map(|i| if i % 2 == 1 { odd } else { even }).collect()
}

fn crescent_parts(b: &mut TapeBuilder, u: Var, v: Var) -> (Var, Var) {
    let u2 = b.square(u);
    let vm = b.add_const(v, -1.0);
    let vm2 = b.square(vm);
    let q = b.add(u2, vm2);
    let p1 = b.add(q, v);
    let f1 = b.add_const(p1, -1.0);
    let nq = b.neg(q);
    let p2 = b.add(nq, v);
    let f2 = b.add_const(p2, 1.0);
    (f1, f2)
}

/// `max{f_1, f_2}` with the two chained crescent sums, box ±5.
pub fn chained_crescent1(n: usize) -> BenchmarkInstance {
    assert!(n >= 2, "chained_crescent1 needs n >= 2");
    let mut b = TapeBuilder::new(n);
    let x = b.inputs();
    let mut f1s = Vec::new();
    let mut f2s = Vec::new();
    for i in 0..n - 1 {
        let (f1, f2) = crescent_parts(&mut b, x[i], x[i + 1]);
        f1s.push(f1);
        f2s.push(f2);
    }
    let f1 = b.sum(&f1s);
    let f2 = b.sum(&f2s);
    let f = b.max(f1, f2);
    BenchmarkInstance::new(
        "chained_crescent1",
        b.finish(f),
        Polyhedron::cube(n, -5.0, 5.0),
        alternating(n, -1.5, 2.0),
    )
    .with_optimum(None, 0.0)
}

fn mifflin_term(b: &mut TapeBuilder, u: Var, v: Var) -> Var {
    let (u2, v2) = (b.square(u), b.square(v));
    let q = b.add(u2, v2);
    let q1 = b.add_const(q, -1.0);
    let aq = b.abs(q1);
    let t1 = b.scale(q1, 2.0);
    let t2 = b.scale(aq, 1.75);
    let s = b.add(t1, t2);
    b.sub(s, u)
}

/// `−x_1 + 2(x_1² + x_2² − 1) + 1.75|x_1² + x_2² − 1|`, box ±5, start `(−1.8, 1.8)`.
pub fn mifflin2() -> BenchmarkInstance {
    let mut b = TapeBuilder::new(2);
    let (u, v) = (b.input(0), b.input(1));
    let f = mifflin_term(&mut b, u, v);
    BenchmarkInstance::new("mifflin2", b.finish(f), Polyhedron::cube(2, -5.0, 5.0), vec![-1.8, 1.8])
        .with_optimum(Some(vec![1.0, 0.0]), -1.0)
}

/// `ln(1 + max{|Σ x_i|, |x_1|, …, |x_n|})`, box ±5, start all ones.
pub fn active_faces(n: usize) -> BenchmarkInstance {
    assert!(n >= 2);
    let mut b = TapeBuilder::new(n);
    let x = b.inputs();
    let s = b.sum(&x);
    let mut terms = vec![b.abs(s)];
    for &xi in &x {
        terms.push(b.abs(xi));
    }
    let m = b.max_all(&terms);
    let m1 = b.add_const(m, 1.0);
    let f = b.ln(m1);
    BenchmarkInstance::new("active_faces", b.finish(f), Polyhedron::cube(n, -5.0, 5.0), vec![1.0; n])
        .with_optimum(Some(vec![0.0; n]), 0.0)
        .with_meta("extended", true)
}

/// Chained Mifflin 2: `Σ −x_i + 2(x_i² + x_{i+1}² − 1) + 1.75|x_i² + x_{i+1}² − 1|`.
pub fn chained_mifflin2(n: usize) -> BenchmarkInstance {
    assert!(n >= 2);
    let (mut b, terms) = pair_terms(n, mifflin_term);
    let f = b.sum(&terms);
    BenchmarkInstance::new("chained_mifflin2", b.finish(f), Polyhedron::cube(n, -5.0, 5.0), vec![-1.0; n])
        .with_meta("extended", true)
}

/// Chained Crescent 2: `Σ max{f_1 term, f_2 term}` pairwise.
pub fn chained_crescent2(n: usize) -> BenchmarkInstance {
    assert!(n >= 2);
    let (mut b, terms) = pair_terms(n, |b, u, v| {
        let (f1, f2) = crescent_parts(b, u, v);
        b.max(f1, f2)
    });
    let f = b.sum(&terms);
    BenchmarkInstance::new(
        "chained_crescent2",
        b.finish(f),
        Polyhedron::cube(n, -5.0, 5.0),
        alternating(n, -1.5, 2.0),
    )
    .with_optimum(None, 0.0)
    .with_meta("extended", true)
}

/// Seeded LASSO data: `A` row-major (`p×n`), then `y`, then the box start.
#[derive(Clone, Debug)]
pub struct LassoData {
    pub a: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub x0_normal: Vec<f64>,
}

pub fn lasso_data(n: usize, p: usize, seed: u64) -> LassoData {
    let mut g = NormalRng::new(seed);
    let a = (0..p).map(|_| g.normals(n)).collect();
    let y = g.normals(p);
    let x0_normal = g.normals(n);
    LassoData { a, y, x0_normal }
}

/// `‖Aᵀy‖_∞`: for `rho` at or above this value `x = 0` minimizes the objective
/// on any feasible set containing 0.
pub fn lasso_zero_threshold(data: &LassoData) -> f64 {
    let n = data.x0_normal.len();
    let mut g = vec![0.0; n];
    for (row, &yk) in data.a.iter().zip(&data.y) {
        crate::linalg::axpy(yk, row, &mut g);
    }
    norm_inf(&g)
}

/// Multiple of [`lasso_zero_threshold`] used when `rho` is left to the data.
pub const LASSO_AUTO_RHO_FACTOR: f64 = 1.5;

/// `rho` placing the minimizer strictly at `x = 0`.
pub fn lasso_auto_rho(data: &LassoData) -> f64 {
    LASSO_AUTO_RHO_FACTOR * lasso_zero_threshold(data)
}

/// `½‖Ax − y‖² + ρ‖x‖₁` over the ±5 box or the ordered chain.
pub fn constrained_lasso(n: usize, p: usize, rho: f64, seed: u64, variant: LassoVariant) -> BenchmarkInstance {
    assert!(n >= 1 && p >= 1, "lasso needs n, p >= 1");
    assert!(rho >= 0.0, "rho must be nonnegative");
    let data = lasso_data(n, p, seed);
    lasso_from_data(&data, rho, variant).with_meta("seed", seed)
}

pub fn lasso_from_data(data: &LassoData, rho: f64, variant: LassoVariant) -> BenchmarkInstance {
    let n = data.x0_normal.len();
    let p = data.y.len();
    let mut b = TapeBuilder::new(n);
    let x = b.inputs();
    let mut sq = Vec::with_capacity(p);
    for (row, &yk) in data.a.iter().zip(&data.y) {
        let r = b.dot(row, &x);
        let r = b.add_const(r, -yk);
        sq.push(b.square(r));
    }
    let ls = b.sum(&sq);
    let half_ls = b.scale(ls, 0.5);
    let abs: Vec<Var> = x.iter().map(|&xi| b.abs(xi)).collect();
    let l1 = b.sum(&abs);
    let pen = b.scale(l1, rho);
    let f = b.add(half_ls, pen);
    let (poly, mut x0) = match variant {
        LassoVariant::Box => (Polyhedron::cube(n, -5.0, 5.0), data.x0_normal.clone()),
        LassoVariant::Ordered => (
            Polyhedron::ordered_chain(n, -5.0, 5.0),
            (1..=n)
                .map(|i| if n == 1 { 0.0 } else { -1.0 + 2.0 * (i - 1) as f64 / (n - 1) as f64 })
                .collect(),
        ),
    };
    poly.clip_to_box(&mut x0);
    BenchmarkInstance::new("lasso", b.finish(f), poly, x0)
        .with_meta("p", p)
        .with_meta("rho", rho)
        .with_meta("variant", variant)
        .with_meta("generator", GENERATOR_NAME)
}

/// Problem names; the last three are the extended set.
pub const NAMES: &[&str] = &[
    "maxq",
    "chained_lq",
    "rosenbrock_nesterov1",
    "rosenbrock_nesterov2",
    "chained_crescent1",
    "mifflin2",
    "lasso",
    "active_faces",
    "chained_mifflin2",
    "chained_crescent2",
];

pub fn is_extended(name: &str) -> bool {
    matches!(name, "active_faces" | "chained_mifflin2" | "chained_crescent2")
}
