//! Parameter ladders for the penalty, data-perturbation and constraint-set
//! (Mosco) regimes, and the convergence tables they produce.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::criterion::{reference_solution, CandidateSequence, ResidualEstimator, ResidualMode};
use crate::error::{Error, Result};
use crate::functional::ConvexFunctional;
use crate::linalg::{self, Matrix};
use crate::operator::{MonotoneOperator, PenaltyOperator};
use crate::problem::{scalar_interval_problem, VIProblem};
use crate::sets::ConvexSet;
use crate::solver::{solve_penalized, solve_vi, SolveConfig};

#[derive(Clone, Debug, PartialEq)]
pub enum LadderKind {
    Penalty {
        lambdas: Vec<f64>,
        penalty: PenaltyOperator,
    },
    Data {
        rhs: Vec<Vec<f64>>,
    },
    Mosco {
        sets: Vec<ConvexSet>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyLadder {
    pub kind: LadderKind,
    pub base_problem: VIProblem,
}

pub const MIN_LADDER_LEN: usize = 4;

impl StudyLadder {
    pub fn penalty(base: VIProblem, penalty: PenaltyOperator, lambdas: Vec<f64>) -> Result<Self> {
        Self::new(LadderKind::Penalty { lambdas, penalty }, base)
    }

    pub fn data(base: VIProblem, rhs: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(LadderKind::Data { rhs }, base)
    }

    pub fn mosco(base: VIProblem, sets: Vec<ConvexSet>) -> Result<Self> {
        Self::new(LadderKind::Mosco { sets }, base)
    }

    pub fn new(kind: LadderKind, base_problem: VIProblem) -> Result<Self> {
        let l = Self { kind, base_problem };
        l.validate()?;
        Ok(l)
    }

    pub fn len(&self) -> usize {
        match &self.kind {
            LadderKind::Penalty { lambdas, .. } => lambdas.len(),
            LadderKind::Data { rhs } => rhs.len(),
            LadderKind::Mosco { sets } => sets.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            LadderKind::Penalty { .. } => "penalty",
            LadderKind::Data { .. } => "data",
            LadderKind::Mosco { .. } => "mosco",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.len() < MIN_LADDER_LEN {
            return Err(Error::Invalid(format!(
                "ladder needs at least {MIN_LADDER_LEN} rows, got {}",
                self.len()
            )));
        }
        let n = self.base_problem.dim();
        match &self.kind {
            LadderKind::Penalty { lambdas, penalty } => {
                penalty.validate(Some(n))?;
                if lambdas.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
                    return Err(Error::Invalid("penalty parameters must be positive".into()));
                }
                if lambdas.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(Error::Invalid("penalty parameters must strictly decrease".into()));
                }
            }
            LadderKind::Data { rhs } => {
                for f in rhs {
                    if f.len() != n {
                        return Err(Error::DimensionMismatch {
                            expected: n,
                            got: f.len(),
                        });
                    }
                }
            }
            LadderKind::Mosco { sets } => {
                for s in sets {
                    s.validate(Some(n))?;
                }
            }
        }
        Ok(())
    }

    /// Scalar ladder value reported in the `parameter` column.
    fn parameter(&self, k: usize) -> f64 {
        match &self.kind {
            LadderKind::Penalty { lambdas, .. } => lambdas[k],
            LadderKind::Data { rhs } => linalg::dist2(&rhs[k], &self.base_problem.rhs),
            LadderKind::Mosco { sets } => {
                let n = self.base_problem.dim();
                let (lo, hi) = sets[k].bounds(n);
                let (blo, bhi) = self.base_problem.set.bounds(n);
                lo.iter()
                    .zip(&blo)
                    .chain(hi.iter().zip(&bhi))
                    .filter(|(a, b)| a.is_finite() && b.is_finite())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            }
        }
    }
}

/// `λₙ = 2⁻ⁿ` for `n = 0..=last`.
pub fn geometric_lambdas(last: u32) -> Vec<f64> {
    (0..=last).map(|n| 0.5f64.powi(n as i32)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub n: usize,
    pub parameter: f64,
    pub error: f64,
    pub distance: f64,
    pub eps_hat: f64,
    pub iterations: usize,
    /// Study-specific check: the largest `(Guₙ, v − uₙ)` over probes of `K`
    /// (penalty), `‖fₙ − f‖` (data), `‖P_{Kₙ}u − u‖` (Mosco), or the
    /// distance bound `|1 − k/kₙ|·‖uₙ‖` (contact).
    pub witness: f64,
    pub status: String,
}

impl StudyRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }

    fn failed(n: usize, parameter: f64, err: &Error) -> Self {
        Self {
            n,
            parameter,
            error: f64::NAN,
            distance: f64::NAN,
            eps_hat: f64::NAN,
            iterations: 0,
            witness: f64::NAN,
            status: err.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub study: String,
    pub rows: Vec<StudyRow>,
    pub reference_u: Vec<f64>,
    #[serde(skip)]
    pub solutions: Vec<Vec<f64>>,
    /// Final-row error threshold used by [`ConvergenceTable::passed`].
    pub threshold: f64,
}

impl ConvergenceTable {
    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.error).collect()
    }

    pub fn any_failed(&self) -> bool {
        self.rows.iter().any(|r| !r.ok())
    }

    pub fn final_error(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.error)
    }

    /// Final error at or below the threshold and no failed row.
    pub fn passed(&self) -> bool {
        !self.any_failed() && self.final_error() <= self.threshold
    }

    /// Error column averaged over adjacent pairs is non-increasing.
    pub fn monotone_trend(&self, slack: f64) -> bool {
        let e = self.errors();
        let s: Vec<f64> = e.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        s.windows(2).all(|w| w[1] <= w[0] + slack)
    }

    /// The computed solutions as a candidate sequence for the criterion.
    pub fn sequence(&self) -> Result<CandidateSequence> {
        CandidateSequence::new(self.study.clone(), self.solutions.clone())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn manifest(&self, parameters: serde_json::Value) -> StudyManifest {
        StudyManifest {
            study: self.study.clone(),
            parameters,
            rows: self.rows.len(),
            reference_sha256: hash_vector(&self.reference_u),
            final_error: self.final_error(),
            threshold: self.threshold,
            passed: self.passed(),
            failed_rows: self.rows.iter().filter(|r| !r.ok()).map(|r| r.n).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyManifest {
    pub study: String,
    pub parameters: serde_json::Value,
    pub rows: usize,
    pub reference_sha256: String,
    pub final_error: f64,
    pub threshold: f64,
    pub passed: bool,
    pub failed_rows: Vec<usize>,
}

/// Hex SHA-256 of the little-endian bytes of `v`.
pub fn hash_vector(v: &[f64]) -> String {
    let mut h = Sha256::new();
    for x in v {
        h.update(x.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    pub solve: SolveConfig,
    pub probe_budget: usize,
    pub seed: u64,
    /// Final-row error threshold.
    pub threshold: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            solve: SolveConfig::auto(),
            probe_budget: 16,
            seed: 0x5eed,
            threshold: 1e-3,
        }
    }
}

struct RowSolve {
    u: Vec<f64>,
    iterations: usize,
    witness: f64,
}

fn run_rows(
    ladder: &StudyLadder,
    config: &StudyConfig,
    reference: Option<Vec<f64>>,
    mut solve_row: impl FnMut(usize) -> Result<RowSolve>,
) -> Result<ConvergenceTable> {
    ladder.validate()?;
    let base = &ladder.base_problem;
    let u = match reference {
        Some(u) => u,
        None => reference_solution(base)?,
    };
    let est = ResidualEstimator::with_reference(base, u.clone(), config.probe_budget, config.seed)?;
    let mut rows = Vec::with_capacity(ladder.len());
    let mut solutions = Vec::with_capacity(ladder.len());
    for k in 0..ladder.len() {
        let parameter = ladder.parameter(k);
        let row = solve_row(k).and_then(|r| {
            Ok((
                StudyRow {
                    n: k + 1,
                    parameter,
                    error: base.ip().dist(&r.u, &u),
                    distance: base.distance(&r.u)?,
                    eps_hat: est.estimate(&r.u, ResidualMode::OnePlusNorm)?,
                    iterations: r.iterations,
                    witness: r.witness,
                    status: "ok".into(),
                },
                r.u,
            ))
        });
        match row {
            Ok((row, un)) => {
                rows.push(row);
                solutions.push(un);
            }
            Err(e) => rows.push(StudyRow::failed(k + 1, parameter, &e)),
        }
    }
    Ok(ConvergenceTable {
        study: ladder.name().into(),
        rows,
        reference_u: u,
        solutions,
        threshold: config.threshold,
    })
}

/// Probe points of `K` used for the `(Guₙ, v − uₙ) ≤ 0` spot check.
fn spot_probes(problem: &VIProblem, center: &[f64], seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes = problem.set.vertices(problem.dim(), 64).unwrap_or_default();
    let radius = 1.0 + linalg::norm2(center);
    probes.extend((0..32).map(|_| problem.set.sample(&mut rng, center, radius)));
    probes
}

pub fn run_penalty_study(ladder: &StudyLadder, config: &StudyConfig) -> Result<ConvergenceTable> {
    let LadderKind::Penalty { lambdas, penalty } = &ladder.kind else {
        return Err(Error::Invalid("expected a penalty ladder".into()));
    };
    let base = &ladder.base_problem;
    let reference = reference_solution(base)?;
    let probes = spot_probes(base, &reference, config.seed);
    let mut warm: Option<Vec<f64>> = None;
    run_rows(ladder, config, Some(reference), |k| {
        let cfg = match &warm {
            Some(u) => config.solve.with_initial(u.clone()),
            None => config.solve.clone(),
        };
        let r = solve_penalized(base, penalty, lambdas[k], &cfg)?;
        let gu = penalty.apply(base.ip(), &r.u)?;
        let witness = probes
            .iter()
            .map(|v| base.ip().inner(&gu, &linalg::sub(v, &r.u)))
            .fold(f64::NEG_INFINITY, f64::max);
        warm = Some(r.u.clone());
        Ok(RowSolve {
            u: r.u,
            iterations: r.iterations,
            witness,
        })
    })
}

pub fn run_data_study(ladder: &StudyLadder, config: &StudyConfig) -> Result<ConvergenceTable> {
    let LadderKind::Data { rhs } = &ladder.kind else {
        return Err(Error::Invalid("expected a data ladder".into()));
    };
    let base = &ladder.base_problem;
    run_rows(ladder, config, None, |k| {
        let r = solve_vi(&base.with_rhs(rhs[k].clone())?, &config.solve)?;
        Ok(RowSolve {
            u: r.u,
            iterations: r.iterations,
            witness: base.ip().dist(&rhs[k], &base.rhs),
        })
    })
}

pub fn run_mosco_study(ladder: &StudyLadder, config: &StudyConfig) -> Result<ConvergenceTable> {
    let LadderKind::Mosco { sets } = &ladder.kind else {
        return Err(Error::Invalid("expected a Mosco ladder".into()));
    };
    let base = &ladder.base_problem;
    let reference = reference_solution(base)?;
    let witness_at = reference.clone();
    run_rows(ladder, config, Some(reference), |k| {
        let r = solve_vi(&base.with_set(sets[k].clone())?, &config.solve)?;
        let clamp = sets[k].project_in(base.ip(), &witness_at)?;
        Ok(RowSolve {
            u: r.u,
            iterations: r.iterations,
            witness: base.ip().dist(&clamp, &witness_at),
        })
    })
}

/// Dispatches on the ladder kind.
pub fn run_study(ladder: &StudyLadder, config: &StudyConfig) -> Result<ConvergenceTable> {
    match ladder.kind {
        LadderKind::Penalty { .. } => run_penalty_study(ladder, config),
        LadderKind::Data { .. } => run_data_study(ladder, config),
        LadderKind::Mosco { .. } => run_mosco_study(ladder, config),
    }
}

/// `K = [0,1]`, `A = I`, `f = 2`, `G = I − P_K`, `λₙ = 2⁻ⁿ` for `n = 0..=12`.
pub fn scalar_penalty_ladder() -> StudyLadder {
    let base = scalar_interval_problem(0.0, 1.0, 2.0);
    let g = PenaltyOperator::proj_residual(base.set.clone());
    StudyLadder::penalty(base, g, geometric_lambdas(12)).expect("valid preset")
}

/// `K = [0,1]`, `A = I`, `f = 2`, `Kₙ = [0, 1 + 1/n]` for `n = 1..=len`.
pub fn interval_mosco_ladder(len: usize) -> Result<StudyLadder> {
    let base = scalar_interval_problem(0.0, 1.0, 2.0);
    let sets = (1..=len)
        .map(|n| ConvexSet::interval(0.0, 1.0 + 1.0 / n as f64))
        .collect::<Result<Vec<_>>>()?;
    StudyLadder::mosco(base, sets)
}

/// `K = [0,1]`, `A = I`, `fₙ = 2 + 1/n` against `f = 2`.
pub fn scalar_data_ladder(len: usize) -> Result<StudyLadder> {
    let base = scalar_interval_problem(0.0, 1.0, 2.0);
    StudyLadder::data(base, (1..=len).map(|n| vec![2.0 + 1.0 / n as f64]).collect())
}

/// `fₙ = f + r/n` with a fixed seeded direction `r` of unit norm.
pub fn harmonic_data_ladder(base: VIProblem, len: usize, seed: u64) -> Result<StudyLadder> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r: Vec<f64> = (0..base.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let nr = linalg::norm2(&r).max(f64::MIN_POSITIVE);
    let rhs = (1..=len)
        .map(|n| linalg::axpy(1.0 / (n as f64 * nr), &r, &base.rhs))
        .collect();
    StudyLadder::data(base, rhs)
}

/// Boxes `[lo, hi·(1 + 1/n)]` (finite upper bounds enlarged) around the base
/// box; Mosco convergent to the base set by construction.
pub fn harmonic_mosco_ladder(base: VIProblem, len: usize) -> Result<StudyLadder> {
    let (lo, hi) = base.set.bounds(base.dim());
    let sets = (1..=len)
        .map(|n| {
            let t = 1.0 / n as f64;
            let up = hi
                .iter()
                .map(|&h| if h.is_finite() { h + t * (1.0 + h.abs()) } else { h })
                .collect();
            ConvexSet::boxed(lo.clone(), up)
        })
        .collect::<Result<Vec<_>>>()?;
    StudyLadder::mosco(base, sets)
}

/// Seeded random instance: SPD `A = BᵀB + cI`, a box with a mix of finite and
/// infinite bounds, and a weighted positive part on a random subset.
pub fn random_problem(seed: u64, n: usize) -> Result<VIProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let shift = rng.random_range(0.5..1.5);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let s: f64 = (0..n).map(|k| b[k][i] * b[k][j]).sum();
                    s + if i == j { shift } else { 0.0 }
                })
                .collect()
        })
        .collect();
    let a = MonotoneOperator::linear(Matrix::from_rows(&rows)?)?;
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    for _ in 0..n {
        let lo: f64 = rng.random_range(-1.5..0.0);
        let hi: f64 = rng.random_range(0.0..1.5);
        lower.push(if rng.random_bool(0.2) { f64::NEG_INFINITY } else { lo });
        upper.push(if rng.random_bool(0.2) { f64::INFINITY } else { hi });
    }
    let mut idx = Vec::new();
    let mut w = Vec::new();
    for i in 0..n {
        if rng.random_bool(0.5) {
            idx.push(i);
            w.push(rng.random_range(0.0..1.0));
        }
    }
    let j = if idx.is_empty() {
        ConvexFunctional::Zero
    } else {
        ConvexFunctional::positive_part(idx, w)?
    };
    let f: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    VIProblem::new(a, j, ConvexSet::boxed(lower, upper)?, f)
}
