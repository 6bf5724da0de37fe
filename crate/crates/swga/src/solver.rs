//! Policy iteration on the assembled Galerkin system, value-function and
//! feedback-control evaluation, and the weak-residual fixed-point check.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::assembly::GalerkinSystem;
use crate::error::{Error, Result};
use crate::so3::{Mat3, Rotation, Vec3};
use crate::wigner::{Basis, BasisEval, BasisId, Part};

/// Galerkin coefficients of one value function, length `2N`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyCoefficients(pub DVector<f64>);

impl PolicyCoefficients {
    pub fn zeros(dim: usize) -> Self {
        PolicyCoefficients(DVector::zeros(dim))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}

/// One policy-iteration step as recorded in the history.
#[derive(Clone, Debug)]
pub struct IterationRecord {
    pub iteration: usize,
    pub theta: DVector<f64>,
    /// `|theta_new - theta_old|_inf`.
    pub update_norm: f64,
    /// Sup-norm residual of the deflated linear solve.
    pub solve_residual: f64,
}

pub type IterationHistory = Vec<IterationRecord>;

/// Solver knobs: initial coefficients, the sup-norm convergence tolerance,
/// the iteration cap, and an optional damping factor.
///
/// `damping = 1` is the plain successive approximation; smaller values relax
/// the update `theta <- theta + damping (theta_solve - theta)`, which rescues
/// configurations where the undamped map limit-cycles. Fixed points coincide
/// for every damping value.
#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub theta0: Option<DVector<f64>>,
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { theta0: None, tol: 1e-8, max_iter: 100, damping: 1.0 }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!("tol = {} must be positive", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "damping = {} must lie in (0, 1]",
                self.damping
            )));
        }
        Ok(())
    }
}

/// Successful solver outcome; `converged` is false when the iteration cap was
/// reached first.
#[derive(Clone, Debug)]
pub struct SolveResult {
    pub theta: PolicyCoefficients,
    pub history: IterationHistory,
    pub converged: bool,
}

/// Failure modes of the policy iteration, with the history intact for
/// diagnosis.
#[derive(Debug)]
pub struct SolverError {
    pub kind: SolverErrorKind,
    pub iteration: usize,
    pub history: IterationHistory,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverErrorKind {
    /// `A1 + A2` was numerically singular.
    Singular,
    /// Coefficients left the trust region or went non-finite.
    Diverged,
}

impl fmt::Display for SolverError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            SolverErrorKind::Singular => {
                write!(f, "linear system singular at iteration {}", self.iteration)
            }
            SolverErrorKind::Diverged => {
                write!(f, "policy iteration diverged at iteration {}", self.iteration)
            }
        }
    }
}

impl std::error::Error for SolverError {}

/// `A2 = -1/2 sum_gamma theta_gamma M^gamma` and
/// `b2 = -1/4 sum_{alpha,gamma} theta_alpha theta_gamma M^gamma[.,alpha]`,
/// so that `b2 = 1/2 A2 theta`.
pub fn a2_b2(sys: &GalerkinSystem, theta: &PolicyCoefficients) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let dim = sys.dim();
    if theta.len() != dim {
        return Err(Error::Dimension { expected: dim, got: theta.len() });
    }
    let mut a2 = DMatrix::zeros(dim, dim);
    for (g, mg) in sys.m().iter().enumerate() {
        let tg = theta.0[g];
        if tg != 0.0 {
            a2 += mg * (-0.5 * tg);
        }
    }
    let b2 = (&a2 * &theta.0) * 0.5;
    Ok((a2, b2))
}

/// Structural classification of the real basis functions.
///
/// The flip symmetry makes the two real functions of the index pair
/// `(p, p_flip)` exact signed copies of each other, the imaginary parts of
/// self-conjugate indices vanish identically, and the constant function is a
/// pure gauge mode whose coefficient only the `epsilon`-row determines. The
/// solver eliminates these exact redundancies and factorizes only the
/// remaining well-conditioned block; otherwise their null directions,
/// amplified by `1/epsilon`, put a roundoff floor far above `tol` on the
/// update norm.
#[derive(Clone, Copy, Debug)]
enum Mode {
    Canonical(usize),
    Duplicate { slot: usize, sign: f64 },
    Zero,
    Gauge,
}

struct Deflation {
    kind: Vec<Mode>,
    canon: Vec<usize>,
    gauge: Option<usize>,
}

impl Deflation {
    fn new(basis: &Basis, dim: usize) -> Self {
        let mut kind = vec![Mode::Zero; dim];
        let mut canon = Vec::new();
        let mut gauge = None;
        // first pass stores the partner's full id, second resolves its slot
        for k in 0..dim {
            let id = BasisId::new(k + 1);
            let (p, part) = basis.index_of(id);
            let (pf, sign) = crate::wigner::flip(p);
            kind[k] = if p == crate::wigner::WignerIndex::new(0, 0, 0) {
                match part {
                    Part::Re => {
                        gauge = Some(k);
                        Mode::Gauge
                    }
                    Part::Im => Mode::Zero,
                }
            } else if p == pf {
                match part {
                    Part::Re => {
                        canon.push(k);
                        Mode::Canonical(canon.len() - 1)
                    }
                    Part::Im => Mode::Zero,
                }
            } else if basis.rank(p) < basis.rank(pf) {
                canon.push(k);
                Mode::Canonical(canon.len() - 1)
            } else {
                let partner = match part {
                    Part::Re => 2 * basis.rank(pf),
                    Part::Im => 2 * basis.rank(pf) + 1,
                };
                let sign = match part {
                    Part::Re => sign,
                    Part::Im => -sign,
                };
                Mode::Duplicate { slot: partner, sign }
            }
        }
        let slot_of: Vec<Option<usize>> = kind
            .iter()
            .map(|m| match m {
                Mode::Canonical(s) => Some(*s),
                _ => None,
            })
            .collect();
        for k in 0..dim {
            if let Mode::Duplicate { slot, sign } = kind[k] {
                let resolved = slot_of[slot].expect("duplicate partner precedes it in rank");
                kind[k] = Mode::Duplicate { slot: resolved, sign };
            }
        }
        Deflation { kind, canon, gauge }
    }

    /// Folds the full system onto canonical coordinates by substituting the
    /// signed copies and dropping the zero and gauge modes.
    fn fold(&self, k_full: &DMatrix<f64>, rhs_full: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let red = self.canon.len();
        let dim = rhs_full.len();
        let mut k_red = DMatrix::zeros(red, red);
        let mut r_red = DVector::zeros(red);
        for (i, &ci) in self.canon.iter().enumerate() {
            r_red[i] = rhs_full[ci];
            for j in 0..dim {
                match self.kind[j] {
                    Mode::Canonical(s) => k_red[(i, s)] += k_full[(ci, j)],
                    Mode::Duplicate { slot, sign } => k_red[(i, slot)] += sign * k_full[(ci, j)],
                    _ => {}
                }
            }
        }
        (k_red, r_red)
    }

    /// Reconstructs the full coefficient vector: exact signed copies for
    /// duplicates, zeros for vanishing functions, and the gauge coefficient
    /// from its own scalar equation.
    fn unfold(
        &self,
        sol: &DVector<f64>,
        k_full: &DMatrix<f64>,
        rhs_full: &DVector<f64>,
    ) -> Option<DVector<f64>> {
        let dim = rhs_full.len();
        let mut full = DVector::zeros(dim);
        for k in 0..dim {
            match self.kind[k] {
                Mode::Canonical(s) => full[k] = sol[s],
                Mode::Duplicate { slot, sign } => full[k] = sign * sol[slot],
                Mode::Zero | Mode::Gauge => {}
            }
        }
        if let Some(g) = self.gauge {
            let pivot = k_full[(g, g)];
            if pivot == 0.0 {
                return None;
            }
            let mut acc = rhs_full[g];
            for j in 0..dim {
                if j != g && full[j] != 0.0 {
                    acc -= k_full[(g, j)] * full[j];
                }
            }
            full[g] = acc / pivot;
        }
        Some(full)
    }
}

/// Runs the successive approximation: repeatedly solves
/// `(A1 + A2) theta = b1 + b2` for the current policy until the sup-norm
/// update drops below tolerance.
///
/// Each sweep eliminates the exact flip-symmetry copies, identically-zero
/// functions and the constant gauge mode before the dense partially-pivoted
/// LU factorization; in exact arithmetic the computed iterate equals the
/// solution of the full regularized system.
pub fn policy_iteration(
    sys: &GalerkinSystem,
    cfg: &SolverConfig,
) -> std::result::Result<SolveResult, SolverError> {
    cfg.validate().map_err(|_| SolverError {
        kind: SolverErrorKind::Diverged,
        iteration: 0,
        history: Vec::new(),
    })?;
    let dim = sys.dim();
    let deflation = Deflation::new(sys.basis(), dim);
    let mut theta = match &cfg.theta0 {
        Some(t0) => PolicyCoefficients(t0.clone()),
        None => PolicyCoefficients::zeros(dim),
    };
    let mut history: IterationHistory = Vec::new();

    for iteration in 1..=cfg.max_iter {
        let (a2, b2) = a2_b2(sys, &theta).expect("dimensions checked above");
        let lhs = sys.a1() + &a2;
        let rhs = sys.b1() + &b2;
        let (k_red, r_red) = deflation.fold(&lhs, &rhs);
        let (sol, solve_residual) = if k_red.nrows() == 0 {
            (DVector::zeros(0), 0.0)
        } else {
            let Some(sol) = k_red.clone().lu().solve(&r_red) else {
                return Err(SolverError { kind: SolverErrorKind::Singular, iteration, history });
            };
            let residual = (&k_red * &sol - &r_red).amax();
            (sol, residual)
        };
        let Some(mut theta_new) = deflation.unfold(&sol, &lhs, &rhs) else {
            return Err(SolverError { kind: SolverErrorKind::Singular, iteration, history });
        };
        if cfg.damping != 1.0 {
            theta_new = &theta.0 + (theta_new - &theta.0) * cfg.damping;
        }
        let update_norm = (&theta_new - &theta.0).amax();
        history.push(IterationRecord {
            iteration,
            theta: theta_new.clone(),
            update_norm,
            solve_residual,
        });
        if !theta_new.iter().all(|v| v.is_finite()) || theta_new.amax() > 1e12 {
            return Err(SolverError { kind: SolverErrorKind::Diverged, iteration, history });
        }
        theta = PolicyCoefficients(theta_new);
        if update_norm < cfg.tol {
            return Ok(SolveResult { theta, history, converged: true });
        }
    }
    Ok(SolveResult { theta, history, converged: false })
}

/// `V(R) = sum_alpha theta_alpha phi_alpha(R)`.
pub fn value(basis: &Basis, theta: &PolicyCoefficients, r: &Rotation) -> Result<f64> {
    if theta.len() > basis.len() {
        return Err(Error::Dimension { expected: basis.len(), got: theta.len() });
    }
    let eval = BasisEval::new(basis, r)?;
    Ok(eval.weighted_sum(theta.as_slice()))
}

/// Feedback law `u(R) = -1/2 W^{-1} sum_alpha theta_alpha grad phi_alpha(R)`.
pub fn control(basis: &Basis, theta: &PolicyCoefficients, w: &Mat3, r: &Rotation) -> Result<Vec3> {
    if theta.len() > basis.len() {
        return Err(Error::Dimension { expected: basis.len(), got: theta.len() });
    }
    let w_inv = w.try_inverse().ok_or_else(|| Error::NotSpd {
        what: "control weight is not invertible".into(),
    })?;
    let eval = BasisEval::new(basis, r)?;
    Ok(-0.5 * (w_inv * eval.weighted_grad(theta.as_slice())))
}

/// Reusable feedback policy with the weight inverse precomputed.
#[derive(Clone, Debug)]
pub struct FeedbackPolicy {
    basis: Basis,
    theta: Vec<f64>,
    w_inv: Mat3,
}

impl FeedbackPolicy {
    pub fn new(basis: Basis, theta: &PolicyCoefficients, w: &Mat3) -> Result<Self> {
        if theta.len() > basis.len() {
            return Err(Error::Dimension { expected: basis.len(), got: theta.len() });
        }
        let w_inv = w.try_inverse().ok_or_else(|| Error::NotSpd {
            what: "control weight is not invertible".into(),
        })?;
        Ok(FeedbackPolicy { basis, theta: theta.as_slice().to_vec(), w_inv })
    }

    pub fn control(&self, r: &Rotation) -> Result<Vec3> {
        let eval = BasisEval::new(&self.basis, r)?;
        Ok(-0.5 * (self.w_inv * eval.weighted_grad(&self.theta)))
    }
}

/// Component `beta` of the projected stationary equation
/// `<1/2 Delta_sigma V + l - 1/4 grad V^T W^{-1} grad V, phi_beta>`,
/// assembled as `A1 theta - b1 + b2(theta)` with the regularized `A1`; all
/// components vanish at a fixed point of the iteration.
pub fn weak_hjb_residual(sys: &GalerkinSystem, theta: &PolicyCoefficients) -> Result<DVector<f64>> {
    let (_, b2) = a2_b2(sys, theta)?;
    Ok(sys.a1() * &theta.0 - sys.b1() + b2)
}

const POLICY_HEADER: &str = "swga-policy v1";

/// Writes coefficients plus convergence metadata as structured text with 17
/// significant digits per float.
pub fn save_policy(
    path: &Path,
    sys: &GalerkinSystem,
    result: &SolveResult,
    tol: f64,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{POLICY_HEADER}")?;
    writeln!(out, "l_max {}", sys.basis().l_max())?;
    writeln!(out, "epsilon {:.16e}", sys.epsilon())?;
    writeln!(out, "tol {tol:.16e}")?;
    writeln!(out, "converged {}", result.converged)?;
    writeln!(out, "iterations {}", result.history.len())?;
    let last_update = result.history.last().map_or(0.0, |r| r.update_norm);
    writeln!(out, "final_update {last_update:.16e}")?;
    for row in 0..3 {
        let s = sys.sigma().row(row);
        writeln!(out, "sigma {:.16e} {:.16e} {:.16e}", s[0], s[1], s[2])?;
    }
    for row in 0..3 {
        let w = sys.w().row(row);
        writeln!(out, "w {:.16e} {:.16e} {:.16e}", w[0], w[1], w[2])?;
    }
    writeln!(out, "theta {}", result.theta.len())?;
    for v in result.theta.0.iter() {
        writeln!(out, "{v:.16e}")?;
    }
    out.flush()?;
    Ok(())
}

/// Stored policy file contents.
#[derive(Clone, Debug)]
pub struct PolicyFile {
    pub l_max: u32,
    pub epsilon: f64,
    pub tol: f64,
    pub converged: bool,
    pub iterations: usize,
    pub final_update: f64,
    pub sigma: Mat3,
    pub w: Mat3,
    pub theta: PolicyCoefficients,
}

pub fn load_policy(path: &Path) -> Result<PolicyFile> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let bad = |msg: &str| Error::Format(format!("policy file: {msg}"));

    let header = lines.next().ok_or_else(|| bad("empty file"))??;
    if header.trim() != POLICY_HEADER {
        return Err(bad(&format!("unexpected header {header:?}")));
    }
    let mut l_max = None;
    let mut epsilon = None;
    let mut tol = None;
    let mut converged = None;
    let mut iterations = None;
    let mut final_update = None;
    let mut sigma_rows: Vec<[f64; 3]> = Vec::new();
    let mut w_rows: Vec<[f64; 3]> = Vec::new();
    let mut theta_len = None;

    for line in lines.by_ref() {
        let line = line?;
        let mut parts = line.split_whitespace();
        let Some(key) = parts.next() else { continue };
        let rest: Vec<&str> = parts.collect();
        let scalar = |rest: &[&str]| -> Result<f64> {
            rest.first()
                .ok_or_else(|| bad("missing value"))?
                .parse()
                .map_err(|_| bad("bad float"))
        };
        match key {
            "l_max" => l_max = Some(scalar(&rest)? as u32),
            "epsilon" => epsilon = Some(scalar(&rest)?),
            "tol" => tol = Some(scalar(&rest)?),
            "converged" => converged = Some(rest.first() == Some(&"true")),
            "iterations" => iterations = Some(scalar(&rest)? as usize),
            "final_update" => final_update = Some(scalar(&rest)?),
            "sigma" | "w" => {
                if rest.len() != 3 {
                    return Err(bad("matrix row needs three entries"));
                }
                let mut row = [0.0; 3];
                for (i, v) in rest.iter().enumerate() {
                    row[i] = v.parse().map_err(|_| bad("bad float"))?;
                }
                if key == "sigma" {
                    sigma_rows.push(row);
                } else {
                    w_rows.push(row);
                }
            }
            "theta" => {
                theta_len = Some(scalar(&rest)? as usize);
                break;
            }
            _ => return Err(bad(&format!("unknown key {key:?}"))),
        }
    }
    let theta_len = theta_len.ok_or_else(|| bad("missing theta section"))?;
    let mut theta = DVector::zeros(theta_len);
    for i in 0..theta_len {
        let line = lines.next().ok_or_else(|| bad("truncated theta"))??;
        theta[i] = line.trim().parse().map_err(|_| bad("bad theta entry"))?;
    }
    if sigma_rows.len() != 3 || w_rows.len() != 3 {
        return Err(bad("sigma and w need three rows each"));
    }
    let as_mat = |rows: &[[f64; 3]]| {
        Mat3::from_fn(|i, j| rows[i][j])
    };
    Ok(PolicyFile {
        l_max: l_max.ok_or_else(|| bad("missing l_max"))?,
        epsilon: epsilon.ok_or_else(|| bad("missing epsilon"))?,
        tol: tol.ok_or_else(|| bad("missing tol"))?,
        converged: converged.ok_or_else(|| bad("missing converged"))?,
        iterations: iterations.ok_or_else(|| bad("missing iterations"))?,
        final_update: final_update.ok_or_else(|| bad("missing final_update"))?,
        sigma: as_mat(&sigma_rows),
        w: as_mat(&w_rows),
        theta: PolicyCoefficients(theta),
    })
}
