//! Solvers for the variational inequality, its penalized relaxation and the
//! frictional quasi-variational inequality.
//!
//! Two iteration schemes are available:
//!
//! * [`SolveMethod::FixedPoint`]: the Banach iteration
//!   `u ← prox_{ρj + I_K}(u − ρ(Au − f))`, a contraction with factor
//!   `sqrt(1 − 2ρm + ρ²M²)` for `0 < ρ < 2m/M²`. Works for any strongly
//!   monotone Lipschitz operator.
//! * [`SolveMethod::CoordinateDescent`]: exact coordinatewise minimization of
//!   the energy `½(Au,u) − (f,u) + j(u) (+ penalty energy)` over the box, for
//!   symmetric matrices with separable `j`, `K` and penalty. Its rate does not
//!   degrade with `M/m` the way the fixed point does, which matters for stiff
//!   FEM operators and small penalty parameters.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{ConvexFunctional, Kink};
use crate::linalg::{self, Matrix};
use crate::operator::{CoordPenalty, MonotoneOperator, OperatorKind, PenaltyOperator};
use crate::problem::VIProblem;
use crate::sets::ConvexSet;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    #[default]
    FixedPoint,
    CoordinateDescent,
    /// Coordinate descent when the problem structure admits it, otherwise the
    /// fixed point.
    Auto,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    /// Relaxation step; `None` means `m/M²`.
    pub rho: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub method: SolveMethod,
    /// Starting point; zero when absent.
    pub initial: Option<Vec<f64>>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            rho: None,
            tol: 1e-10,
            max_iter: 200_000,
            method: SolveMethod::FixedPoint,
            initial: None,
        }
    }
}

impl SolveConfig {
    pub fn coordinate_descent() -> Self {
        Self {
            method: SolveMethod::CoordinateDescent,
            ..Self::default()
        }
    }

    pub fn auto() -> Self {
        Self {
            method: SolveMethod::Auto,
            ..Self::default()
        }
    }

    pub fn with_tol(&self, tol: f64) -> Self {
        Self {
            tol,
            ..self.clone()
        }
    }

    pub fn with_initial(&self, initial: Vec<f64>) -> Self {
        Self {
            initial: Some(initial),
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub u: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub contraction_estimate: f64,
    pub final_step: f64,
    /// Constants of the operator actually iterated on.
    pub m: f64,
    pub big_m: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub outer_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub outer_ratio: Option<f64>,
}

/// Upper bound on the fixed-point contraction factor for step `rho`.
pub fn contraction_factor(rho: f64, m: f64, big_m: f64) -> f64 {
    (1.0 - 2.0 * rho * m + rho * rho * big_m * big_m).max(0.0).sqrt()
}

/// Stop once the successive step is below `tol` and the a-posteriori error
/// bound `step·q/(1−q)` is too; the factor is floored at 1e−3 so that nearly
/// non-contractive maps still terminate at floating-point resolution.
fn stop_threshold(tol: f64, q: f64) -> f64 {
    if q <= 0.5 {
        tol
    } else {
        tol * ((1.0 - q) / q).max(1e-3)
    }
}

const BURN_IN: usize = 5;

pub fn solve_vi(problem: &VIProblem, config: &SolveConfig) -> Result<SolveReport> {
    problem.validate()?;
    if !(config.tol > 0.0) {
        return Err(Error::Invalid("tolerance must be positive".into()));
    }
    if !problem.ip().is_euclidean() {
        return Err(Error::IncompatibleStructure(
            "solvers work in the euclidean coefficient space".into(),
        ));
    }
    let u0 = match &config.initial {
        Some(x) if x.len() != problem.dim() => {
            return Err(Error::DimensionMismatch {
                expected: problem.dim(),
                got: x.len(),
            })
        }
        Some(x) => x.clone(),
        None => vec![0.0; problem.dim()],
    };
    match config.method {
        SolveMethod::FixedPoint => fixed_point(problem, config, u0),
        SolveMethod::CoordinateDescent => coordinate_descent(problem, config, u0),
        SolveMethod::Auto => {
            let eligible = separable_parts(&problem.operator)
                .map(|p| p.matrix.diag().iter().all(|&d| d > 0.0))
                .unwrap_or(false);
            if eligible {
                coordinate_descent(problem, config, u0)
            } else {
                fixed_point(problem, config, u0)
            }
        }
    }
}

fn fixed_point(problem: &VIProblem, config: &SolveConfig, mut u: Vec<f64>) -> Result<SolveReport> {
    let (m, big_m) = (problem.m(), problem.big_m());
    let upper = 2.0 * m / (big_m * big_m);
    let rho = config.rho.unwrap_or(m / (big_m * big_m));
    if !(rho > 0.0 && rho < upper) {
        return Err(Error::NonContraction { rho, upper });
    }
    let q = contraction_factor(rho, m, big_m);
    let threshold = stop_threshold(config.tol, q);
    let ip = problem.ip();
    let mut prev_step = f64::NAN;
    let mut worst_ratio: f64 = 0.0;
    let mut step = f64::INFINITY;
    for k in 1..=config.max_iter {
        let au = problem.apply(&u);
        let x: Vec<f64> = (0..u.len())
            .map(|i| u[i] - rho * (au[i] - problem.rhs[i]))
            .collect();
        let next = problem.functional.combined_prox(&problem.set, ip, rho, &x)?;
        step = ip.dist(&next, &u);
        u = next;
        if k > BURN_IN && prev_step > 1e3 * f64::EPSILON * (1.0 + ip.norm(&u)) {
            worst_ratio = worst_ratio.max(step / prev_step);
        }
        prev_step = step;
        if step <= threshold {
            return Ok(SolveReport {
                u,
                iterations: k,
                converged: true,
                contraction_estimate: worst_ratio,
                final_step: step,
                m,
                big_m,
                outer_iterations: None,
                outer_ratio: None,
            });
        }
    }
    Err(Error::MaxIterExceeded {
        max_iter: config.max_iter,
        last_step: step,
        best: u,
    })
}

/// Matrix, shift and penalty of an operator that coordinate descent can handle.
struct Separable<'a> {
    matrix: &'a Matrix,
    shift: Option<&'a [f64]>,
    penalty: Option<(&'a PenaltyOperator, f64)>,
}

fn separable_parts(op: &MonotoneOperator) -> Result<Separable<'_>> {
    let (base, penalty) = match op.kind() {
        OperatorKind::Penalized {
            base,
            penalty,
            weight,
        } => (base.as_ref(), Some((penalty, *weight))),
        _ => (op, None),
    };
    let (matrix, shift) = base.affine_parts().ok_or_else(|| {
        Error::IncompatibleStructure("coordinate descent needs a linear or affine base".into())
    })?;
    if !matrix.is_symmetric(1e-12) {
        return Err(Error::IncompatibleStructure(
            "coordinate descent needs a symmetric matrix".into(),
        ));
    }
    Ok(Separable {
        matrix,
        shift,
        penalty,
    })
}

/// Minimizes `½a t² − c t + pen(t) + kink(t)` over `[lo, hi]` (`a > 0`) by
/// locating the sign change of the piecewise-linear derivative.
pub(crate) fn minimize_coordinate(
    a: f64,
    c: f64,
    pen: CoordPenalty,
    kink: Kink,
    lo: f64,
    hi: f64,
) -> f64 {
    if lo == hi {
        return lo;
    }
    let mut cuts: Vec<f64> = Vec::with_capacity(3);
    if !kink.is_zero() {
        cuts.push(0.0);
    }
    if let CoordPenalty::Interval { lo: pl, hi: ph, .. } = pen {
        cuts.extend([pl, ph].into_iter().filter(|v| v.is_finite()));
    }
    cuts.retain(|&t| t > lo && t < hi);
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(lo);
    edges.extend(cuts);
    edges.push(hi);

    // derivative on the open piece containing `mid` is `alpha·t + beta`
    let coeffs = |mid: f64| -> (f64, f64) {
        let (pc, pl) = match pen {
            CoordPenalty::None => (0.0, 0.0),
            CoordPenalty::Quadratic { target, q } => (q, -q * target),
            CoordPenalty::Interval { lo: il, hi: ih, q } => {
                if mid < il {
                    (q, -q * il)
                } else if mid > ih {
                    (q, -q * ih)
                } else {
                    (0.0, 0.0)
                }
            }
        };
        (a + pc, -c + pl + kink.slope_at(mid))
    };

    for w in edges.windows(2) {
        let (pl, pr) = (w[0], w[1]);
        let mid = match (pl.is_finite(), pr.is_finite()) {
            (true, true) => 0.5 * (pl + pr),
            (false, true) => pr - 1.0,
            (true, false) => pl + 1.0,
            (false, false) => 1.0,
        };
        let (alpha, beta) = coeffs(mid);
        let t = -beta / alpha;
        if t < pl {
            // derivative already positive at the left edge of this piece
            return pl;
        }
        if t <= pr {
            return t;
        }
    }
    hi
}

fn coordinate_descent(problem: &VIProblem, config: &SolveConfig, mut u: Vec<f64>) -> Result<SolveReport> {
    let parts = separable_parts(&problem.operator)?;
    let n = problem.dim();
    let diag = parts.matrix.diag();
    if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::NonSpd(format!("non-positive diagonal entry at {i}")));
    }
    let kinks = problem.functional.kinks(n);
    let intervals: Vec<(f64, f64)> = (0..n).map(|i| problem.set.coord_interval(i)).collect();
    let penalties: Vec<CoordPenalty> = (0..n)
        .map(|i| {
            parts
                .penalty
                .map_or(CoordPenalty::None, |(g, w)| g.coord_penalty(i, w))
        })
        .collect();
    // start from a feasible point so the first sweep is a descent step
    for i in 0..n {
        u[i] = u[i].clamp(intervals[i].0, intervals[i].1);
    }

    let mut prev_step = f64::NAN;
    let mut worst_ratio: f64 = 0.0;
    let mut recent_ratio: f64 = 1.0;
    let mut step = f64::INFINITY;
    for k in 1..=config.max_iter {
        let mut sq = 0.0;
        for i in 0..n {
            let mut off = 0.0;
            parts.matrix.for_each_in_row(i, |j, v| {
                if j != i {
                    off += v * u[j];
                }
            });
            let c = problem.rhs[i] - parts.shift.map_or(0.0, |s| s[i]) - off;
            let t = minimize_coordinate(diag[i], c, penalties[i], kinks[i], intervals[i].0, intervals[i].1);
            sq += (t - u[i]) * (t - u[i]);
            u[i] = t;
        }
        step = sq.sqrt();
        if prev_step > 1e3 * f64::EPSILON * (1.0 + linalg::norm2(&u)) {
            recent_ratio = step / prev_step;
            if k > BURN_IN {
                worst_ratio = worst_ratio.max(recent_ratio);
            }
        }
        prev_step = step;
        if step == 0.0 || (step <= stop_threshold(config.tol, recent_ratio.min(0.999_999)) && k > 1) {
            return Ok(SolveReport {
                u,
                iterations: k,
                converged: true,
                contraction_estimate: worst_ratio,
                final_step: step,
                m: problem.m(),
                big_m: problem.big_m(),
                outer_iterations: None,
                outer_ratio: None,
            });
        }
    }
    Err(Error::MaxIterExceeded {
        max_iter: config.max_iter,
        last_step: step,
        best: u,
    })
}

/// Smallest admissible penalty parameter.
pub const MIN_LAMBDA: f64 = 1e-12;

/// Solves the unconstrained inequality with operator `A + (1/λ)G`, same `j`
/// and `f`, over the whole space.
pub fn solve_penalized(
    problem: &VIProblem,
    penalty: &PenaltyOperator,
    lambda: f64,
    config: &SolveConfig,
) -> Result<SolveReport> {
    if !(lambda.is_finite() && lambda >= MIN_LAMBDA) {
        return Err(Error::Invalid(format!(
            "penalty parameter {lambda:e} below {MIN_LAMBDA:e}; solve the constrained problem instead"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9);
    penalty.check_kernel(&problem.set, problem.ip(), problem.dim(), &mut rng)?;
    let penalized = penalized_problem(problem, penalty, lambda)?;
    solve_vi(&penalized, config)
}

/// The penalized problem `(A + G/λ, j, X, f)`.
pub fn penalized_problem(problem: &VIProblem, penalty: &PenaltyOperator, lambda: f64) -> Result<VIProblem> {
    let op = MonotoneOperator::penalized(problem.operator.clone(), penalty.clone(), 1.0 / lambda)?;
    VIProblem::with_space(
        problem.space.clone(),
        op,
        problem.functional.clone(),
        ConvexSet::WholeSpace,
        problem.rhs.clone(),
    )
}

/// Data of the friction smallness guard `d0²·max μ·max F < m_F`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Smallness {
    pub d0: f64,
    pub mu_max: f64,
    pub f_max: f64,
    pub m_f: f64,
}

impl Smallness {
    pub fn lhs(&self) -> f64 {
        self.d0 * self.d0 * self.mu_max * self.f_max
    }

    pub fn holds(&self) -> bool {
        self.lhs() < self.m_f
    }
}

/// Quasi-variational inequality whose nonsmooth term is
/// `j(v) + Σ_i coupling_i · (u_{normal_i})⁺ · |v_{tangential_i}|`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrictionQvi {
    pub base: VIProblem,
    pub normal: Vec<usize>,
    pub tangential: Vec<usize>,
    /// Per contact node: friction coefficient × yield limit × boundary weight.
    pub coupling: Vec<f64>,
    pub smallness: Smallness,
}

impl FrictionQvi {
    /// Friction weights frozen at `eta`.
    pub fn frozen_weights(&self, eta: &[f64]) -> Vec<f64> {
        self.normal
            .iter()
            .zip(&self.coupling)
            .map(|(&i, &c)| c * eta[i].max(0.0))
            .collect()
    }

    /// The inner inequality with friction frozen at `eta`.
    pub fn frozen_problem(&self, eta: &[f64]) -> Result<VIProblem> {
        let weights = self.frozen_weights(eta);
        if weights.iter().all(|&w| w == 0.0) {
            return Ok(self.base.clone());
        }
        let friction = ConvexFunctional::weighted_abs(self.tangential.clone(), weights)?;
        self.base
            .with_functional(ConvexFunctional::sum(vec![self.base.functional.clone(), friction]))
    }
}

const MAX_OUTER: usize = 500;

/// Outer fixed point `η ← solve(j + φ(η, ·))`, warm-starting each inner solve
/// from the previous outer iterate.
pub fn solve_qvi_friction(
    qvi: &FrictionQvi,
    config: &SolveConfig,
    outer_tol: f64,
) -> Result<SolveReport> {
    if !(outer_tol > 0.0) {
        return Err(Error::Invalid("outer tolerance must be positive".into()));
    }
    if !qvi.smallness.holds() {
        return Err(Error::SmallnessViolated {
            lhs: qvi.smallness.lhs(),
            rhs: qvi.smallness.m_f,
        });
    }
    if qvi.normal.len() != qvi.tangential.len() || qvi.normal.len() != qvi.coupling.len() {
        return Err(Error::Invalid("friction index arrays differ in length".into()));
    }
    let n = qvi.base.dim();
    let mut eta = config.initial.clone().unwrap_or_else(|| vec![0.0; n]);
    let mut weights = qvi.frozen_weights(&eta);
    let mut inner_total = 0;
    let mut prev_diff = f64::NAN;
    let mut worst_ratio: f64 = 0.0;
    let mut last: Option<SolveReport> = None;
    for s in 1..=MAX_OUTER {
        let inner_cfg = match &last {
            Some(_) => config.with_initial(eta.clone()),
            None => config.clone(),
        };
        let report = solve_vi(&qvi.frozen_problem(&eta)?, &inner_cfg)?;
        inner_total += report.iterations;
        let diff = linalg::dist2(&report.u, &eta);
        if prev_diff > 0.0 {
            worst_ratio = worst_ratio.max(diff / prev_diff);
        }
        prev_diff = diff;
        eta = report.u.clone();
        let next_weights = qvi.frozen_weights(&eta);
        let frozen_again = next_weights == weights;
        weights = next_weights;
        last = Some(report);
        if diff <= outer_tol || frozen_again {
            let mut r = last.unwrap();
            r.iterations = inner_total;
            r.outer_iterations = Some(s);
            r.outer_ratio = Some(worst_ratio);
            return Ok(r);
        }
    }
    Err(Error::MaxIterExceeded {
        max_iter: MAX_OUTER,
        last_step: prev_diff,
        best: eta,
    })
}
