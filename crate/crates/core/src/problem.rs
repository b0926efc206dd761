//! The variational inequality bundle `(A, j, K, f)` and its JSON form.
//!
//! Find `u ∈ K` with `(Au, v − u) + j(v) − j(u) ≥ (f, v − u)` for all `v ∈ K`.
//!
//! Wire schema (all fields required except `inner_product`, which defaults to
//! euclidean):
//!
//! ```json
//! {
//!   "inner_product": {"kind": "euclidean"},
//!   "operator": {"kind": "linear", "matrix": {"dense": [[1.0]]}},
//!   "set": {"kind": "box", "lower": [0.0], "upper": [1.0]},
//!   "functional": {"kind": "zero"},
//!   "rhs": [2.0]
//! }
//! ```
//!
//! Operator kinds: `linear {matrix}`, `affine {matrix, shift}`,
//! `penalized {base, penalty, weight}`. Matrices are `{"dense": rows}` or
//! `{"csr": {nrows, ncols, indptr, indices, values}}`. Infinite box bounds are
//! written as `null`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::ConvexFunctional;
use crate::linalg::{self, Matrix};
use crate::operator::{MonotoneOperator, OperatorKind, PenaltyOperator};
use crate::sets::ConvexSet;
use crate::space::{CoeffVector, HilbertSpace, InnerProduct};

#[derive(Clone, Debug, PartialEq)]
pub struct VIProblem {
    pub space: HilbertSpace,
    pub operator: MonotoneOperator,
    pub functional: ConvexFunctional,
    pub set: ConvexSet,
    pub rhs: Vec<f64>,
}

impl VIProblem {
    /// Euclidean problem on ℝⁿ with `n = rhs.len()`.
    pub fn new(
        operator: MonotoneOperator,
        functional: ConvexFunctional,
        set: ConvexSet,
        rhs: Vec<f64>,
    ) -> Result<Self> {
        Self::with_space(
            HilbertSpace::euclidean(rhs.len().max(1)),
            operator,
            functional,
            set,
            rhs,
        )
    }

    pub fn with_space(
        space: HilbertSpace,
        operator: MonotoneOperator,
        functional: ConvexFunctional,
        set: ConvexSet,
        rhs: Vec<f64>,
    ) -> Result<Self> {
        let p = Self {
            space,
            operator,
            functional,
            set,
            rhs,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.space.dim();
        if self.rhs.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.rhs.len(),
            });
        }
        if let Some(k) = self.rhs.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        if self.operator.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.operator.dim(),
            });
        }
        if !(self.operator.m() > 0.0) {
            return Err(Error::Invalid("operator must be strongly monotone (m > 0)".into()));
        }
        self.set.validate(Some(n))?;
        self.functional.validate(Some(n))?;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn ip(&self) -> &InnerProduct {
        self.space.inner_product()
    }

    pub fn m(&self) -> f64 {
        self.operator.m()
    }

    pub fn big_m(&self) -> f64 {
        self.operator.big_m()
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.operator
            .apply(self.ip(), u)
            .expect("operator was validated against this space")
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.set.project_in(self.ip(), x)
    }

    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        self.set.distance_in(self.ip(), x)
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        self.ip().norm(x)
    }

    pub fn vector(&self, coeffs: Vec<f64>) -> Result<CoeffVector> {
        self.space.vector(coeffs)
    }

    /// `(Au, v − u) + j(v) − j(u) − (f, v − u)`; non-negative for all `v ∈ K`
    /// exactly when `u` solves the inequality.
    pub fn gap_at(&self, u: &[f64], au: &[f64], v: &[f64]) -> f64 {
        let d = linalg::sub(v, u);
        let ip = self.ip();
        ip.inner(au, &d) + self.functional.eval(v) - self.functional.eval(u) - ip.inner(&self.rhs, &d)
    }

    /// Same problem with a different right-hand side.
    pub fn with_rhs(&self, rhs: Vec<f64>) -> Result<Self> {
        let mut p = self.clone();
        p.rhs = rhs;
        p.validate()?;
        Ok(p)
    }

    /// Same problem with a different constraint set.
    pub fn with_set(&self, set: ConvexSet) -> Result<Self> {
        let mut p = self.clone();
        p.set = set;
        p.validate()?;
        Ok(p)
    }

    pub fn with_functional(&self, functional: ConvexFunctional) -> Result<Self> {
        let mut p = self.clone();
        p.functional = functional;
        p.validate()?;
        Ok(p)
    }

    /// Energy `½(Au, u) − (f, u) + j(u)` for symmetric linear operators.
    pub fn energy(&self, u: &[f64]) -> Option<f64> {
        let (matrix, shift) = self.operator.affine_parts()?;
        let au = matrix.mul_vec(u);
        let ip = self.ip();
        let shift_term = shift.map_or(0.0, |s| ip.inner(s, u));
        Some(0.5 * ip.inner(&au, u) + shift_term - ip.inner(&self.rhs, u) + self.functional.eval(u))
    }

    pub fn to_spec(&self) -> ProblemSpec {
        ProblemSpec {
            inner_product: self.ip().clone(),
            operator: OperatorSpec::from_operator(&self.operator),
            set: self.set.clone(),
            functional: self.functional.clone(),
            rhs: self.rhs.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_spec())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: ProblemSpec = serde_json::from_str(s)?;
        spec.build()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    #[serde(default = "euclidean")]
    pub inner_product: InnerProduct,
    pub operator: OperatorSpec,
    pub set: ConvexSet,
    pub functional: ConvexFunctional,
    pub rhs: Vec<f64>,
}

fn euclidean() -> InnerProduct {
    InnerProduct::Euclidean
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    Linear {
        matrix: Matrix,
    },
    Affine {
        matrix: Matrix,
        shift: Vec<f64>,
    },
    Penalized {
        base: Box<OperatorSpec>,
        penalty: PenaltyOperator,
        weight: f64,
    },
}

impl OperatorSpec {
    pub fn from_operator(op: &MonotoneOperator) -> Self {
        match op.kind() {
            OperatorKind::Linear { matrix } => OperatorSpec::Linear {
                matrix: matrix.clone(),
            },
            OperatorKind::Affine { matrix, shift } => OperatorSpec::Affine {
                matrix: matrix.clone(),
                shift: shift.clone(),
            },
            OperatorKind::Penalized {
                base,
                penalty,
                weight,
            } => OperatorSpec::Penalized {
                base: Box::new(Self::from_operator(base)),
                penalty: penalty.clone(),
                weight: *weight,
            },
        }
    }

    pub fn build(&self) -> Result<MonotoneOperator> {
        match self {
            OperatorSpec::Linear { matrix } => MonotoneOperator::linear(matrix.clone()),
            OperatorSpec::Affine { matrix, shift } => {
                MonotoneOperator::affine(matrix.clone(), shift.clone())
            }
            OperatorSpec::Penalized {
                base,
                penalty,
                weight,
            } => MonotoneOperator::penalized(base.build()?, penalty.clone(), *weight),
        }
    }
}

impl ProblemSpec {
    pub fn build(&self) -> Result<VIProblem> {
        let space = HilbertSpace::new(self.rhs.len(), self.inner_product.clone())?;
        let operator = self.operator.build()?;
        VIProblem::with_space(
            space,
            operator,
            self.functional.clone(),
            self.set.clone(),
            self.rhs.clone(),
        )
    }
}

/// `X = ℝ`, `A = I`, `j = 0`, `K = [lo, hi]`, right-hand side `f`.
pub fn scalar_interval_problem(lo: f64, hi: f64, f: f64) -> VIProblem {
    VIProblem::new(
        MonotoneOperator::linear(Matrix::identity(1)).expect("identity is SPD"),
        ConvexFunctional::Zero,
        ConvexSet::interval(lo, hi).expect("valid interval"),
        vec![f],
    )
    .expect("scalar problem is valid")
}
