//! Convergence criterion for candidate sequences: distance to `K`, the
//! ε-perturbed inequality, the a-priori boundedness bound, and the
//! approximating-sequence classifiers built on top of them.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::Kink;
use crate::linalg;
use crate::problem::VIProblem;
use crate::solver::{solve_vi, SolveConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ResidualMode {
    /// Slack `ε(1 + ‖v − uₙ‖)`.
    OnePlusNorm,
    /// Slack `ε‖v − uₙ‖`.
    Norm,
}

impl ResidualMode {
    fn offset(self) -> f64 {
        match self {
            ResidualMode::OnePlusNorm => 1.0,
            ResidualMode::Norm => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateSequence {
    pub items: Vec<Vec<f64>>,
    pub label: String,
}

impl CandidateSequence {
    pub fn new(label: impl Into<String>, items: Vec<Vec<f64>>) -> Result<Self> {
        let s = Self {
            items,
            label: label.into(),
        };
        s.validate()?;
        Ok(s)
    }

    /// `uₙ = gen(n)` for `n = 1..=len`.
    pub fn from_fn(label: impl Into<String>, len: usize, gen: impl Fn(usize) -> Vec<f64>) -> Result<Self> {
        Self::new(label, (1..=len).map(gen).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .items
            .first()
            .ok_or_else(|| Error::Invalid("candidate sequence is empty".into()))?;
        for (k, u) in self.items.iter().enumerate() {
            if u.len() != first.len() {
                return Err(Error::DimensionMismatch {
                    expected: first.len(),
                    got: u.len(),
                });
            }
            if u.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(k));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.items.first().map_or(0, Vec::len)
    }

    /// One vector per CSV row. A first row that does not parse as numbers is
    /// treated as a header.
    pub fn read_csv<R: Read>(label: impl Into<String>, reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let mut items = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(v) => items.push(v),
                Err(_) if k == 0 => continue,
                Err(e) => return Err(Error::Invalid(format!("row {}: {e}", k + 1))),
            }
        }
        Self::new(label, items)
    }
}

/// Finite-sample proxy for "→ 0".
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayTest {
    /// Largest admissible log-log slope over the last half.
    pub max_slope: f64,
    /// Final value (and tail maximum) threshold.
    pub threshold: f64,
    /// Final values at or below this pass without a slope fit.
    pub outright: f64,
}

impl Default for DecayTest {
    fn default() -> Self {
        Self {
            max_slope: -0.5,
            threshold: 1e-3,
            outright: 1e-8,
        }
    }
}

impl DecayTest {
    /// Least-squares slope of `log v` against `log n` over the last half.
    pub fn fitted_slope(values: &[f64]) -> Option<f64> {
        let len = values.len();
        if len < 2 {
            return None;
        }
        let start = len / 2;
        let pts: Vec<(f64, f64)> = (start..len)
            .map(|k| (((k + 1) as f64).ln(), values[k].max(1e-300).ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        Some(sxy / sxx)
    }

    pub fn decays(&self, values: &[f64]) -> bool {
        let Some(&last) = values.last() else {
            return false;
        };
        if last <= self.outright {
            return true;
        }
        last <= self.threshold && Self::fitted_slope(values).is_some_and(|s| s <= self.max_slope)
    }

    /// Maximum over the last quarter is at or below the threshold.
    pub fn tail_below(&self, values: &[f64]) -> bool {
        tail_max(values) <= self.threshold
    }
}

fn tail_max(values: &[f64]) -> f64 {
    let len = values.len();
    let start = len - len.div_ceil(4).max(1).min(len);
    values[start..].iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionConfig {
    pub probe_budget: usize,
    pub seed: u64,
    pub decay: DecayTest,
}

impl Default for CriterionConfig {
    fn default() -> Self {
        Self {
            probe_budget: 16,
            seed: 0x5eed,
            decay: DecayTest::default(),
        }
    }
}

const MAX_VERTICES: usize = 64;
const ASCENT_SWEEPS: usize = 20;

/// Probe-based lower bound for the smallest admissible slack
/// `sup_{v ∈ K} [(f − Auₙ, v − uₙ) + j(uₙ) − j(v)] / denom(v)`, floored at 0.
///
/// The probe set holds the reference solution, `P_K(uₙ)`, the projected
/// gradient step from `uₙ`, the box vertices when there are at most 64, and
/// `probe_budget` seeded random points of `K`. In euclidean coordinates every
/// probe is then refined by coordinatewise ascent, each line search being
/// exact up to golden-section resolution (the ratio is quasiconcave wherever
/// it is non-negative). Points are drawn in a fixed order, so raising the
/// budget never lowers the estimate.
#[derive(Clone, Debug)]
pub struct ResidualEstimator<'a> {
    problem: &'a VIProblem,
    reference: Vec<f64>,
    kinks: Vec<Kink>,
    intervals: Vec<(f64, f64)>,
    probe_budget: usize,
    seed: u64,
}

impl<'a> ResidualEstimator<'a> {
    pub fn new(problem: &'a VIProblem, probe_budget: usize, seed: u64) -> Result<Self> {
        let reference = reference_solution(problem)?;
        Self::with_reference(problem, reference, probe_budget, seed)
    }

    pub fn with_reference(
        problem: &'a VIProblem,
        reference: Vec<f64>,
        probe_budget: usize,
        seed: u64,
    ) -> Result<Self> {
        if probe_budget < 8 {
            return Err(Error::Invalid("probe budget must be at least 8".into()));
        }
        if reference.len() != problem.dim() {
            return Err(Error::DimensionMismatch {
                expected: problem.dim(),
                got: reference.len(),
            });
        }
        let n = problem.dim();
        Ok(Self {
            problem,
            reference,
            kinks: problem.functional.kinks(n),
            intervals: (0..n).map(|i| problem.set.coord_interval(i)).collect(),
            probe_budget,
            seed,
        })
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    pub fn estimate(&self, un: &[f64], mode: ResidualMode) -> Result<f64> {
        let p = self.problem;
        if un.len() != p.dim() {
            return Err(Error::DimensionMismatch {
                expected: p.dim(),
                got: un.len(),
            });
        }
        let au = p.apply(un);
        let g: Vec<f64> = p.rhs.iter().zip(&au).map(|(f, a)| f - a).collect();
        let ctx = Ctx {
            un,
            g: &g,
            j_un: p.functional.eval(un),
            mode,
            est: self,
        };

        let mut probes = vec![self.reference.clone(), p.project(un)?];
        let rho = p.m() / (p.big_m() * p.big_m());
        probes.push(p.project(&linalg::axpy(rho, &g, un))?);
        if let Some(vs) = p.set.vertices(p.dim(), MAX_VERTICES) {
            probes.extend(vs);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let radius = 1.0
            + linalg::norm2(&self.reference)
            + 2.0 * linalg::dist2(un, &self.reference);
        for _ in 0..self.probe_budget {
            probes.push(p.set.sample(&mut rng, &self.reference, radius));
        }

        let euclid = p.ip().is_euclidean();
        let mut best: f64 = 0.0;
        for v in probes {
            let value = if euclid {
                ctx.ascend(v)
            } else {
                ctx.ratio_general(&v)
            };
            best = best.max(value);
        }
        Ok(best)
    }
}

struct Ctx<'c, 'a> {
    un: &'c [f64],
    g: &'c [f64],
    j_un: f64,
    mode: ResidualMode,
    est: &'c ResidualEstimator<'a>,
}

impl Ctx<'_, '_> {
    fn ratio_general(&self, v: &[f64]) -> f64 {
        let p = self.est.problem;
        let d = linalg::sub(v, self.un);
        let num = p.ip().inner(self.g, &d) + self.j_un - p.functional.eval(v);
        let den = self.mode.offset() + p.ip().norm(&d);
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }

    /// Numerator and squared distance at `v`, summed from scratch.
    fn exact(&self, v: &[f64]) -> (f64, f64) {
        let kinks = &self.est.kinks;
        let mut num = self.j_un;
        let mut r2 = 0.0;
        for i in 0..v.len() {
            let d = v[i] - self.un[i];
            num += self.g[i] * d - kinks[i].eval(v[i]);
            r2 += d * d;
        }
        (num, r2)
    }

    fn ratio(&self, num: f64, r2: f64) -> f64 {
        let den = self.mode.offset() + r2.sqrt();
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }

    /// Coordinatewise ascent from `v`; returns the best value seen, including
    /// one-sided limits that no single point attains.
    fn ascend(&self, mut v: Vec<f64>) -> f64 {
        let n = v.len();
        let (mut num, mut r2) = self.exact(&v);
        let mut best = self.ratio(num, r2);
        for _ in 0..ASCENT_SWEEPS {
            let before = best;
            for i in 0..n {
                let (n0, rest) = self.without(i, &v, num, r2);
                let line = self.line_max(i, n0, rest);
                best = best.max(line.limit);
                if let Some((t, val)) = line.point {
                    if val > self.ratio(num, r2) {
                        v[i] = t;
                        let d = t - self.un[i];
                        num = n0 + self.g[i] * d - self.est.kinks[i].eval(t);
                        r2 = rest + d * d;
                        best = best.max(self.ratio(num, r2));
                    }
                }
            }
            if best <= before + 1e-15 * (1.0 + before.abs()) {
                break;
            }
        }
        best
    }

    /// Numerator and squared distance with coordinate `i` removed. Probes can
    /// travel far along unbounded coordinates; when the removed term dwarfs
    /// the remainder the subtraction would cancel, so the sums are rebuilt.
    fn without(&self, i: usize, v: &[f64], num: f64, r2: f64) -> (f64, f64) {
        let d = v[i] - self.un[i];
        let term = self.g[i] * d - self.est.kinks[i].eval(v[i]);
        let n0 = num - term;
        let rest = r2 - d * d;
        if term.abs() <= 1e6 * n0.abs().max(1e-300) && d * d <= 1e6 * rest.max(1e-300) {
            return (n0, rest.max(0.0));
        }
        let mut n0 = self.j_un;
        let mut rest = 0.0;
        for k in (0..v.len()).filter(|&k| k != i) {
            let dk = v[k] - self.un[k];
            n0 += self.g[k] * dk - self.est.kinks[k].eval(v[k]);
            rest += dk * dk;
        }
        (n0, rest)
    }

    /// Maximizes the ratio along coordinate `i` with the other coordinates
    /// frozen; `n0` and `rest` are their numerator and squared distance.
    fn line_max(&self, i: usize, n0: f64, rest: f64) -> LineMax {
        let ui = self.un[i];
        let gi = self.g[i];
        let kink = self.est.kinks[i];
        let (lo, hi) = self.est.intervals[i];
        let c = self.mode.offset();
        let value = |t: f64| {
            let den = c + (rest + (t - ui).powi(2)).sqrt();
            let nt = n0 + gi * (t - ui) - kink.eval(t);
            if den > 0.0 {
                nt / den
            } else {
                f64::NEG_INFINITY
            }
        };

        let mut out = LineMax {
            point: None,
            limit: f64::NEG_INFINITY,
        };
        let mut consider = |t: f64| {
            let val = value(t);
            if t.is_finite() && val.is_finite() && out.point.is_none_or(|(_, b)| val > b) {
                out.point = Some((t, val));
            }
        };

        let mut cuts = vec![lo];
        for b in [0.0, ui] {
            if b > lo && b < hi {
                cuts.push(b);
            }
        }
        cuts.push(hi);
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup();
        if cuts.len() == 1 {
            consider(lo);
            return out;
        }
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mid = match (a.is_finite(), b.is_finite()) {
                (true, true) => 0.5 * (a + b),
                (false, true) => b - 1.0,
                (true, false) => a + 1.0,
                (false, false) => ui + 1.0,
            };
            // on this piece the numerator is alpha + slope·(t − uᵢ)
            let slope = gi - kink.slope_at(mid);
            let alpha = n0 + gi * (mid - ui) - kink.eval(mid) - slope * (mid - ui);

            // one-sided limits at uₙ when the denominator vanishes there
            if c == 0.0 && rest == 0.0 && n0 == 0.0 {
                if a == ui && b > ui {
                    out.limit = out.limit.max(slope);
                }
                if b == ui && a < ui {
                    out.limit = out.limit.max(-slope);
                }
            }

            // restrict to where the numerator is non-negative
            let (mut a2, mut b2) = (a, b);
            let root = if slope != 0.0 { ui - alpha / slope } else { f64::NAN };
            if slope > 0.0 {
                a2 = a2.max(root);
            } else if slope < 0.0 {
                b2 = b2.min(root);
            } else if alpha < 0.0 {
                continue;
            }
            if !(a2 <= b2) {
                continue;
            }
            if b2 == f64::INFINITY {
                out.limit = out.limit.max(slope);
            }
            if a2 == f64::NEG_INFINITY {
                out.limit = out.limit.max(-slope);
            }
            consider(a2);
            consider(b2);
            for s in stationary_offsets(alpha, slope, rest, c) {
                let t = ui + s;
                if t > a2 && t < b2 {
                    consider(t);
                }
            }
        }
        out
    }
}

struct LineMax {
    point: Option<(f64, f64)>,
    limit: f64,
}

/// Offsets `s` where `(α + βs)/(c + √(ρ + s²))` is stationary.
///
/// Setting the derivative to zero gives `βc√(ρ + s²) = αs − βρ`; squaring
/// yields a quadratic whose real roots include every stationary point.
fn stationary_offsets(alpha: f64, beta: f64, rho: f64, c: f64) -> Vec<f64> {
    if c == 0.0 {
        return if alpha != 0.0 { vec![beta * rho / alpha] } else { vec![] };
    }
    let qa = alpha * alpha - beta * beta * c * c;
    let qb = -2.0 * alpha * beta * rho;
    let qc = beta * beta * rho * rho - beta * beta * c * c * rho;
    let scale = qa.abs().max(qb.abs()).max(qc.abs());
    if scale == 0.0 {
        return vec![];
    }
    if qa.abs() <= 1e-14 * scale {
        return if qb != 0.0 { vec![-qc / qb] } else { vec![] };
    }
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return vec![];
    }
    // numerically stable pair of roots
    let sq = disc.sqrt();
    let q = -0.5 * (qb + qb.signum() * sq);
    let mut roots = Vec::with_capacity(2);
    if q != 0.0 {
        roots.push(q / qa);
        roots.push(qc / q);
    } else {
        roots.push(0.0);
    }
    roots
}

/// Solution of `problem` to tight tolerance, used as the probe anchor and the
/// error reference.
pub fn reference_solution(problem: &VIProblem) -> Result<Vec<f64>> {
    Ok(solve_vi(problem, &SolveConfig::auto().with_tol(1e-12))?.u)
}

/// ε̂ at a single point; solves for the reference internally.
pub fn epsilon_residual(
    problem: &VIProblem,
    un: &[f64],
    mode: ResidualMode,
    probe_budget: usize,
) -> Result<f64> {
    ResidualEstimator::new(problem, probe_budget, CriterionConfig::default().seed)?.estimate(un, mode)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionRow {
    pub n: usize,
    pub distance: f64,
    pub eps_one_plus: f64,
    pub eps_norm: f64,
    pub lp_witness_norm: f64,
    pub err_to_solution: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Boundedness {
    /// `max ‖uₙ‖` over the whole sequence.
    pub d_max: f64,
    /// `max ‖uₙ‖` over the last quarter.
    pub tail_max: f64,
    /// A-priori bound for sequences whose slack has dropped to the decay
    /// threshold.
    pub bound: f64,
    /// Same bound evaluated with the largest measured ε̂.
    pub bound_at_max_eps: f64,
    pub within_bound: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    pub t_approximating: bool,
    pub tykhonov_approximating: bool,
    pub lp_approximating: bool,
    pub converging_trend: bool,
    /// `tykhonov ⇒ lp ⇒ converging_trend` holds for this sequence.
    pub implications_hold: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub label: String,
    pub rows: Vec<CriterionRow>,
    pub lp_witness: Vec<Vec<f64>>,
    pub reference: Vec<f64>,
    pub all_feasible: bool,
    pub boundedness: Boundedness,
    pub flags: Flags,
    pub config: CriterionConfig,
}

impl CriterionReport {
    pub fn distances(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.distance).collect()
    }

    pub fn eps_one_plus(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.eps_one_plus).collect()
    }

    pub fn eps_norm(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.eps_norm).collect()
    }

    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.err_to_solution).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// A priori bound on `‖uₙ‖` for any sequence satisfying the perturbed
/// inequality with slack `eps`, tested at the reference solution `u`.
pub fn a_priori_bound(problem: &VIProblem, u: &[f64], eps: f64) -> f64 {
    let ip = problem.ip();
    let (alpha, beta) = problem.functional.affine_minorant(problem.dim());
    let na = ip.norm(&alpha);
    let nu = ip.norm(u);
    let m = problem.m();
    let a = (na + ip.norm(&problem.apply(u)) + ip.norm(&problem.rhs) + eps) / m;
    let b = (problem.functional.eval(u).abs() + na * nu + beta.abs() + eps) / m;
    nu + a + b.sqrt()
}

/// `max ‖uₙ‖` over the sequence.
pub fn boundedness_check(problem: &VIProblem, seq: &CandidateSequence) -> Result<f64> {
    seq.validate()?;
    Ok(seq
        .items
        .iter()
        .map(|u| problem.norm(u))
        .fold(0.0, f64::max))
}

/// Distances, both residual modes, witnesses and all classification flags.
pub fn classify_sequence_with(
    problem: &VIProblem,
    seq: &CandidateSequence,
    config: &CriterionConfig,
) -> Result<CriterionReport> {
    seq.validate()?;
    if seq.dim() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: seq.dim(),
        });
    }
    let est = ResidualEstimator::new(problem, config.probe_budget, config.seed)?;
    let u = est.reference().to_vec();
    let mut rows = Vec::with_capacity(seq.len());
    let mut witnesses = Vec::with_capacity(seq.len());
    let mut all_feasible = true;
    for (k, un) in seq.items.iter().enumerate() {
        let pk = problem.project(un)?;
        let w = linalg::sub(&pk, un);
        let wn = problem.norm(&w);
        all_feasible &= problem.set.contains(un);
        rows.push(CriterionRow {
            n: k + 1,
            distance: wn,
            eps_one_plus: est.estimate(un, ResidualMode::OnePlusNorm)?,
            eps_norm: est.estimate(un, ResidualMode::Norm)?,
            lp_witness_norm: wn,
            err_to_solution: problem.ip().dist(un, &u),
        });
        witnesses.push(w);
    }

    let norms: Vec<f64> = seq.items.iter().map(|x| problem.norm(x)).collect();
    let max_eps = rows.iter().map(|r| r.eps_one_plus).fold(0.0, f64::max);
    let bound = a_priori_bound(problem, &u, config.decay.threshold);
    let tail = tail_max(&norms);
    let boundedness = Boundedness {
        d_max: norms.iter().copied().fold(0.0, f64::max),
        tail_max: tail,
        bound,
        bound_at_max_eps: a_priori_bound(problem, &u, max_eps),
        within_bound: tail <= bound,
    };

    let decay = &config.decay;
    let d: Vec<f64> = rows.iter().map(|r| r.distance).collect();
    let e1: Vec<f64> = rows.iter().map(|r| r.eps_one_plus).collect();
    let e2: Vec<f64> = rows.iter().map(|r| r.eps_norm).collect();
    let err: Vec<f64> = rows.iter().map(|r| r.err_to_solution).collect();
    let worst: Vec<f64> = d.iter().zip(&e1).map(|(a, b)| a.max(*b)).collect();
    let slack_ok = boundedness.within_bound;

    let t = slack_ok && decay.tail_below(&worst) && decay.decays(&d) && decay.decays(&e1);
    let tyk = slack_ok && all_feasible && decay.decays(&e2);
    let lp = slack_ok && decay.decays(&d) && decay.decays(&e2);
    let conv = decay.tail_below(&err);
    let flags = Flags {
        t_approximating: t,
        tykhonov_approximating: tyk,
        lp_approximating: lp,
        converging_trend: conv,
        implications_hold: (!tyk || lp) && (!lp || conv),
    };
    Ok(CriterionReport {
        label: seq.label.clone(),
        rows,
        lp_witness: witnesses,
        reference: u,
        all_feasible,
        boundedness,
        flags,
        config: *config,
    })
}

pub fn classify_sequence(problem: &VIProblem, seq: &CandidateSequence) -> Result<CriterionReport> {
    classify_sequence_with(problem, seq, &CriterionConfig::default())
}

/// Distance plus ε-residual test with the given probe budget.
pub fn check_criterion(
    problem: &VIProblem,
    seq: &CandidateSequence,
    probe_budget: usize,
) -> Result<CriterionReport> {
    let config = CriterionConfig {
        probe_budget,
        ..CriterionConfig::default()
    };
    classify_sequence_with(problem, seq, &config)
}
