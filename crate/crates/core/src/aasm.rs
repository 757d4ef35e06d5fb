//! Active signature method for piecewise-linear functions over polyhedra.
//!
//! Each step solves one LP over the closure of a signature domain
//! intersected with `C`. At the LP optimum every active kink is examined:
//! flipping kink `i` from `σ_i` to `σ'` changes the affine piece by a
//! multiple of `z_i`, and the current LP multipliers give a certificate that
//! the flipped piece has no local descent (`σ'·ρ ≥ 0`). Flips that are not
//! certified are probed with an LP on the flipped domain; a probe that lowers
//! `ψ` becomes the next polyhedron.

use std::collections::HashSet;

use thiserror::Error;

use crate::linalg::norm_inf;
use crate::lp::{self, LpError, LpOptions, LpProblem, LpSolution, LpStatus};
use crate::plmodel::{constraints_from_restriction, AbsLinearForm, AffineRestriction, SignatureVector};
use crate::polyhedron::{Polyhedron, DEFAULT_FEAS_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlipRule {
    MostNegativeDual,
    LowestIndex,
}

#[derive(Clone, Debug)]
pub struct AasmOptions {
    /// `None` means `2^min(s, 20)`.
    pub max_polyhedra: Option<usize>,
    pub tol_z: f64,
    pub tol_lp: f64,
    pub flip_rule: FlipRule,
    pub partial_inner_limit: Option<usize>,
}

impl Default for AasmOptions {
    fn default() -> Self {
        AasmOptions {
            max_polyhedra: None,
            tol_z: crate::plmodel::DEFAULT_TOL_Z,
            tol_lp: lp::DEFAULT_LP_TOL,
            flip_rule: FlipRule::MostNegativeDual,
            partial_inner_limit: None,
        }
    }
}

impl AasmOptions {
    pub fn max_polyhedra_for(&self, s: usize) -> usize {
        let m = self.max_polyhedra.unwrap_or(1usize << s.min(20));
        assert!(m >= 1, "max_polyhedra must be at least 1");
        m
    }

    fn lp_options(&self) -> LpOptions {
        LpOptions {
            tol: self.tol_lp,
            ..LpOptions::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AasmStatus {
    LocalMin,
    InnerLimit,
    PolyhedraExhausted,
}

#[derive(Clone, Debug)]
pub struct AasmResult {
    pub v_star: Vec<f64>,
    pub psi_star: f64,
    pub status: AasmStatus,
    pub polyhedra_visited: usize,
    pub lp_calls: usize,
    pub visited_signatures: Vec<SignatureVector>,
    /// LP optimum on each visited polyhedron, in order.
    pub psi_history: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum AasmError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("the start point's own signature polyhedron is infeasible; is the start in C?")]
    InfeasibleStart,
    #[error("LP over a signature domain is unbounded; C must be bounded")]
    Unbounded,
}

/// Where a kink constraint landed in the LP's polyhedron.
#[derive(Clone, Copy, Debug)]
enum KinkRow {
    Eq(usize),
    In(usize),
}

/// LP solution over one signature domain closure.
#[derive(Clone, Debug)]
pub struct PieceSolution {
    pub sigma: SignatureVector,
    pub restriction: AffineRestriction,
    pub lp: LpSolution,
    kink_rows: Vec<KinkRow>,
}

impl PieceSolution {
    pub fn status(&self) -> LpStatus {
        self.lp.status
    }

    pub fn v(&self) -> &[f64] {
        &self.lp.x
    }

    /// Affine value of the piece at the LP optimum.
    pub fn psi(&self) -> f64 {
        self.restriction.value(&self.lp.x)
    }

    /// Multiplier of kink `i` in the stationarity identity
    /// `g = Σ w_i ∇z_i + (multipliers of C)`.
    pub fn kink_weight(&self, i: usize) -> f64 {
        match self.kink_rows[i] {
            KinkRow::Eq(r) => self.lp.dual_eq[r],
            KinkRow::In(r) => self.sigma.as_slice()[i] as f64 * self.lp.dual_in[r],
        }
    }
}

/// Minimizes the affine piece of `sigma` over `cl(P_σ) ∩ C` with one LP.
pub fn solve_piece(
    form: &AbsLinearForm,
    c: &Polyhedron,
    sigma: &SignatureVector,
    opts: &AasmOptions,
) -> Result<PieceSolution, LpError> {
    let restriction = form.restrict(sigma);
    let cons = constraints_from_restriction(&restriction);
    let (mut ne, mut ni) = (c.num_eq(), c.num_in());
    let kink_rows = sigma
        .as_slice()
        .iter()
        .map(|&sg| {
            if sg == 0 {
                ne += 1;
                KinkRow::Eq(ne - 1)
            } else {
                ni += 1;
                KinkRow::In(ni - 1)
            }
        })
        .collect();
    let poly = c.intersect(cons);
    let lp = lp::solve_with(&LpProblem::new(restriction.g.clone(), poly), &opts.lp_options())?;
    Ok(PieceSolution {
        sigma: sigma.clone(),
        restriction,
        lp,
        kink_rows,
    })
}

/// One candidate flip `σ_i → new_sign` and its certificate score `σ'·ρ`.
#[derive(Clone, Debug)]
pub struct FlipCandidate {
    pub index: usize,
    pub new_sign: i8,
    pub score: f64,
}

/// Kinks with `z_i(v) ≈ 0` at the piece optimum, plus all zero entries of σ.
pub fn active_kinks(piece: &PieceSolution, tol: f64) -> Vec<usize> {
    let v = piece.v();
    let r = &piece.restriction;
    (0..piece.sigma.len())
        .filter(|&i| {
            if piece.sigma.as_slice()[i] == 0 {
                return true;
            }
            let row = r.r_mat.row(i);
            let scale = 1.0 + r.r_vec[i].abs() + row.iter().zip(v).map(|(a, b)| (a * b).abs()).sum::<f64>();
            r.z_at(i, v).abs() <= tol * scale
        })
        .collect()
}

/// Certificate scores for every flip of an active kink, in probing order.
pub fn flip_candidates(form: &AbsLinearForm, piece: &PieceSolution, opts: &AasmOptions) -> Vec<FlipCandidate> {
    let s = form.s();
    let sg = piece.sigma.as_slice();
    let (m, l) = (form.m_mat(), form.l_mat());
    let w: Vec<f64> = (0..s).map(|i| piece.kink_weight(i)).collect();
    let mut out = Vec::new();
    let mut kappa = vec![0.0; s];
    for i in active_kinks(piece, opts.tol_lp) {
        let flips: &[i8] = match sg[i] {
            0 => &[1, -1],
            1 => &[-1],
            _ => &[1],
        };
        let l_col_zero = (i + 1..s).all(|j| l[(j, i)] == 0.0);
        for &new in flips {
            let delta = (new - sg[i]) as f64;
            let mut k_psi = form.b_abs()[i] * delta;
            let mut cross = 0.0;
            if !l_col_zero {
                kappa.iter_mut().for_each(|k| *k = 0.0);
                for j in i + 1..s {
                    let mut kj = delta * l[(j, i)];
                    for k in i + 1..j {
                        if kappa[k] != 0.0 {
                            kj += (m[(j, k)] + l[(j, k)] * sg[k] as f64) * kappa[k];
                        }
                    }
                    kappa[j] = kj;
                    if kj != 0.0 {
                        k_psi += (form.b()[j] + sg[j] as f64 * form.b_abs()[j]) * kj;
                        cross += w[j] * kj;
                    }
                }
            }
            let rho = w[i] + k_psi - cross;
            out.push(FlipCandidate {
                index: i,
                new_sign: new,
                score: new as f64 * rho,
            });
        }
    }
    let key = |c: &FlipCandidate| (c.index, -(c.new_sign as i32));
    match opts.flip_rule {
        FlipRule::LowestIndex => out.sort_by_key(key),
        FlipRule::MostNegativeDual => {
            out.sort_by(|a, b| a.score.total_cmp(&b.score).then_with(|| key(a).cmp(&key(b))))
        }
    }
    out
}

fn certify_tol(piece: &PieceSolution, opts: &AasmOptions) -> f64 {
    opts.tol_lp * (1.0 + norm_inf(&piece.restriction.g))
}

fn descent_margin(psi: f64, opts: &AasmOptions) -> f64 {
    psi - opts.tol_lp * (1.0 + psi.abs())
}

/// Outcome of examining one candidate.
#[derive(Clone, Debug)]
pub struct FlipCheck {
    pub candidate: FlipCandidate,
    pub certified: bool,
    /// Probe on the flipped domain when the certificate did not apply.
    pub probe_psi: Option<f64>,
    pub descends: bool,
}

/// Local optimality at the optimum of `piece`: every flip of an active kink
/// is either certified by the multipliers or probed without strict descent.
pub fn local_optimality_test(
    form: &AbsLinearForm,
    c: &Polyhedron,
    piece: &PieceSolution,
    opts: &AasmOptions,
) -> Result<(bool, Vec<FlipCheck>), LpError> {
    let psi = piece.psi();
    let tol = certify_tol(piece, opts);
    let mut checks = Vec::new();
    let mut ok = true;
    for cand in flip_candidates(form, piece, opts) {
        let mut check = FlipCheck {
            certified: cand.score >= -tol,
            candidate: cand,
            probe_psi: None,
            descends: false,
        };
        if !check.certified {
            let sig = piece.sigma.with(check.candidate.index, check.candidate.new_sign);
            let probe = solve_piece(form, c, &sig, opts)?;
            if probe.status() == LpStatus::Optimal {
                let p = probe.psi();
                check.probe_psi = Some(p);
                check.descends = p < descent_margin(psi, opts);
            }
        }
        ok &= !check.descends;
        checks.push(check);
    }
    Ok((ok, checks))
}

pub enum NextPolyhedron {
    Move(Box<PieceSolution>),
    LocalMin,
    Exhausted,
}

/// Picks the next polyhedron by probing uncertified flips in `flip_rule`
/// order. `lp_calls` is incremented once per probe.
pub fn choose_next_polyhedron(
    form: &AbsLinearForm,
    c: &Polyhedron,
    piece: &PieceSolution,
    visited: &HashSet<SignatureVector>,
    opts: &AasmOptions,
    lp_calls: &mut usize,
) -> Result<NextPolyhedron, LpError> {
    let psi = piece.psi();
    let tol = certify_tol(piece, opts);
    let mut blocked = false;
    for cand in flip_candidates(form, piece, opts) {
        if cand.score >= -tol {
            continue;
        }
        let sig = piece.sigma.with(cand.index, cand.new_sign);
        let probe = solve_piece(form, c, &sig, opts)?;
        *lp_calls += 1;
        if probe.status() != LpStatus::Optimal || probe.psi() >= descent_margin(psi, opts) {
            continue;
        }
        if visited.contains(&sig) {
            blocked = true;
            continue;
        }
        return Ok(NextPolyhedron::Move(Box::new(probe)));
    }
    Ok(if blocked {
        NextPolyhedron::Exhausted
    } else {
        NextPolyhedron::LocalMin
    })
}

/// One line per visited polyhedron.
#[derive(Clone, Debug)]
pub struct AasmTraceLine {
    pub signature_hash: u64,
    pub psi: f64,
    pub lp_status: LpStatus,
}

pub fn aasm_minimize(
    form: &AbsLinearForm,
    c: &Polyhedron,
    start: &[f64],
    opts: &AasmOptions,
) -> Result<AasmResult, AasmError> {
    aasm_minimize_traced(form, c, start, opts, &mut |_| {})
}

pub fn aasm_minimize_traced(
    form: &AbsLinearForm,
    c: &Polyhedron,
    start: &[f64],
    opts: &AasmOptions,
    sink: &mut dyn FnMut(&AasmTraceLine),
) -> Result<AasmResult, AasmError> {
    debug_assert!(c.contains(start, 1e3 * DEFAULT_FEAS_TOL), "start must lie in C");
    let max_poly = opts.max_polyhedra_for(form.s());
    let mut sigma = form.signature(start, opts.tol_z);
    let mut piece = solve_piece(form, c, &sigma, opts)?;
    let mut lp_calls = 1;
    if piece.status() == LpStatus::Infeasible && sigma.has_zero() {
        // Near-zero kinks pinned as equalities can be inconsistent with C at
        // tiny scales; the exact signs always contain the start.
        sigma = form.signature(start, 0.0);
        piece = solve_piece(form, c, &sigma, opts)?;
        lp_calls += 1;
    }
    sink(&AasmTraceLine {
        signature_hash: sigma.stable_hash(),
        psi: piece.psi(),
        lp_status: piece.status(),
    });
    match piece.status() {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(AasmError::InfeasibleStart),
        LpStatus::Unbounded => return Err(AasmError::Unbounded),
    }
    let mut visited = HashSet::from([sigma.clone()]);
    let mut order = vec![sigma];
    let mut history = vec![piece.psi()];

    let status = loop {
        if opts.partial_inner_limit.is_some_and(|k| order.len() >= k) {
            break AasmStatus::InnerLimit;
        }
        match choose_next_polyhedron(form, c, &piece, &visited, opts, &mut lp_calls)? {
            NextPolyhedron::LocalMin => break AasmStatus::LocalMin,
            NextPolyhedron::Exhausted => break AasmStatus::PolyhedraExhausted,
            NextPolyhedron::Move(next) => {
                if order.len() >= max_poly {
                    break AasmStatus::PolyhedraExhausted;
                }
                piece = *next;
                sink(&AasmTraceLine {
                    signature_hash: piece.sigma.stable_hash(),
                    psi: piece.psi(),
                    lp_status: piece.status(),
                });
                visited.insert(piece.sigma.clone());
                order.push(piece.sigma.clone());
                history.push(piece.psi());
            }
        }
    };
    let v_star = piece.v().to_vec();
    Ok(AasmResult {
        psi_star: form.eval_pl(&v_star).0,
        v_star,
        status,
        polyhedra_visited: order.len(),
        lp_calls,
        visited_signatures: order,
        psi_history: history,
    })
}

/// Global minimum over `C` by enumerating every full signature (`s ≤ 16`).
pub fn brute_force_pl_min(form: &AbsLinearForm, c: &Polyhedron) -> Result<(Vec<f64>, f64), AasmError> {
    let s = form.s();
    assert!(s <= 16, "brute force is limited to s <= 16");
    let opts = AasmOptions::default();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for mask in 0u32..(1u32 << s) {
        let sig = SignatureVector::new((0..s).map(|i| if mask >> i & 1 == 1 { 1 } else { -1 }).collect());
        let piece = solve_piece(form, c, &sig, &opts)?;
        match piece.status() {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => return Err(AasmError::Unbounded),
            LpStatus::Optimal => {}
        }
        let psi = piece.psi();
        if best.as_ref().is_none_or(|(_, b)| psi < *b) {
            best = Some((piece.v().to_vec(), psi));
        }
    }
    best.ok_or(AasmError::InfeasibleStart)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench;
    use crate::tape::{abs_linearize, TapeBuilder};

    fn form_1d(neg: bool) -> AbsLinearForm {
        let mut b = TapeBuilder::new(1);
        let x = b.input(0);
        let a = b.abs(x);
        let y = if neg { b.neg(a) } else { a };
        abs_linearize(&b.finish(y), &[0.0]).unwrap()
    }

    fn box1() -> Polyhedron {
        Polyhedron::cube(1, -5.0, 5.0)
    }

    #[test]
    fn abs_from_three() {
        let res = aasm_minimize(&form_1d(false), &box1(), &[3.0], &AasmOptions::default()).unwrap();
        assert_eq!(res.status, AasmStatus::LocalMin);
        assert_eq!(res.v_star, vec![0.0]);
        assert_eq!(res.psi_star, 0.0);
        let (v, psi) = brute_force_pl_min(&form_1d(false), &box1()).unwrap();
        assert_eq!((v, psi), (vec![0.0], 0.0));
    }

    #[test]
    fn local_test_examples() {
        let opts = AasmOptions::default();
        let sig = SignatureVector::new(vec![1]);
        let f = form_1d(false);
        let piece = solve_piece(&f, &box1(), &sig, &opts).unwrap();
        assert_eq!(piece.v(), &[0.0]);
        assert!(local_optimality_test(&f, &box1(), &piece, &opts).unwrap().0);

        let g = form_1d(true);
        // -|v| on the σ=+1 piece at v = 0 (the piece's maximum, forced by a
        // box [-5, 0] ∩ closure).
        let c = Polyhedron::cube(1, -5.0, 0.0);
        let piece = solve_piece(&g, &c, &sig, &opts).unwrap();
        assert_eq!(piece.v(), &[0.0]);
        let (ok, checks) = local_optimality_test(&g, &c, &piece, &opts).unwrap();
        assert!(!ok);
        assert!(checks.iter().any(|c| c.descends));

        // Interior of a piece: no active kinks.
        let c = Polyhedron::cube(1, 1.0, 5.0);
        let piece = solve_piece(&f, &c, &sig, &opts).unwrap();
        assert_eq!(piece.v(), &[1.0]);
        let (ok, checks) = local_optimality_test(&f, &c, &piece, &opts).unwrap();
        assert!(ok && checks.is_empty());
    }

    #[test]
    fn neg_abs_both_flips_descend_from_zero() {
        let g = form_1d(true);
        let opts = AasmOptions::default();
        let piece = solve_piece(&g, &box1(), &SignatureVector::new(vec![0]), &opts).unwrap();
        let (ok, checks) = local_optimality_test(&g, &box1(), &piece, &opts).unwrap();
        assert!(!ok);
        assert_eq!(checks.len(), 2);
        assert!(checks.iter().all(|c| c.descends));
    }

    #[test]
    fn choose_next_flips_to_other_side() {
        let g = form_1d(true);
        let opts = AasmOptions::default();
        let sig = SignatureVector::new(vec![1]);
        // Minimizing -v on {v >= 0} ∩ [-5,5] gives v=5; restrict the box to
        // make 0 the optimum of the +1 piece.
        let c0 = Polyhedron::cube(1, -5.0, 0.0);
        let piece = solve_piece(&g, &c0, &sig, &opts).unwrap();
        let visited = HashSet::from([sig.clone()]);
        let mut calls = 0;
        match choose_next_polyhedron(&g, &c0, &piece, &visited, &opts, &mut calls).unwrap() {
            NextPolyhedron::Move(p) => assert_eq!(p.sigma.as_slice(), &[-1]),
            _ => panic!("expected a move"),
        }
        let visited = HashSet::from([sig.clone(), SignatureVector::new(vec![-1])]);
        assert!(matches!(
            choose_next_polyhedron(&g, &c0, &piece, &visited, &opts, &mut calls).unwrap(),
            NextPolyhedron::Exhausted
        ));
    }

    #[test]
    fn affine_is_single_lp() {
        let form = AbsLinearForm::affine(vec![1.0, -2.0], 0.5);
        let c = Polyhedron::cube(2, -1.0, 1.0);
        let res = aasm_minimize(&form, &c, &[0.0, 0.0], &AasmOptions::default()).unwrap();
        assert_eq!(res.lp_calls, 1);
        assert_eq!(res.status, AasmStatus::LocalMin);
        assert_eq!(res.v_star, vec![-1.0, 1.0]);
        let (v, psi) = brute_force_pl_min(&form, &c).unwrap();
        assert_eq!(v, res.v_star);
        assert_eq!(psi, res.psi_star);
    }

    #[test]
    fn sum_of_abs_brute_force() {
        let mut b = TapeBuilder::new(2);
        let x = b.inputs();
        let (a0, a1) = (b.abs(x[0]), b.abs(x[1]));
        let y = b.add(a0, a1);
        let form = abs_linearize(&b.finish(y), &[0.0, 0.0]).unwrap();
        let (v, psi) = brute_force_pl_min(&form, &Polyhedron::cube(2, -5.0, 5.0)).unwrap();
        assert_eq!(psi, 0.0);
        assert!(v.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn rosenbrock_nesterov2_small() {
        for n in 1..=4 {
            let inst = bench::rosenbrock_nesterov2(n);
            let form = abs_linearize(&inst.tape, &vec![0.0; n]).unwrap();
            let res = aasm_minimize(&form, &inst.poly, &inst.x0, &AasmOptions::default()).unwrap();
            assert_eq!(res.status, AasmStatus::LocalMin, "n={n}");
            for v in &res.v_star {
                assert!((v - 1.0).abs() < 1e-8, "n={n} {:?}", res.v_star);
            }
            assert!(res.psi_star.abs() < 1e-8);
            assert!(res.polyhedra_visited <= 1 << n);
            for w in res.psi_history.windows(2) {
                assert!(w[1] < w[0]);
            }
        }
    }

    #[test]
    fn partial_limit_keeps_descent() {
        let inst = bench::rosenbrock_nesterov2(3);
        let form = abs_linearize(&inst.tape, &[0.0; 3]).unwrap();
        let opts = AasmOptions {
            partial_inner_limit: Some(1),
            ..AasmOptions::default()
        };
        let res = aasm_minimize(&form, &inst.poly, &inst.x0, &opts).unwrap();
        assert_eq!(res.status, AasmStatus::InnerLimit);
        assert_eq!(res.polyhedra_visited, 1);
        assert!(res.psi_star <= form.eval_pl(&inst.x0).0 + 1e-12);
    }
}
