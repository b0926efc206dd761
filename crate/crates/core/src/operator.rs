//! Strongly monotone Lipschitz operators and penalty operators.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::sets::ConvexSet;
use crate::space::InnerProduct;

/// Penalty operator of a constraint set: monotone, Lipschitz, with kernel
/// exactly the set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PenaltyOperator {
    /// `G = I − P_K`.
    ProjResidual { set: ConvexSet },
    /// `(Gu)_i = w_i (u_i − b_i)` on the listed coordinates, zero elsewhere.
    BoundaryMass {
        indices: Vec<usize>,
        targets: Vec<f64>,
        weights: Vec<f64>,
    },
}

/// One coordinate's contribution to the penalty energy whose gradient is `G`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CoordPenalty {
    None,
    /// `(q/2)·dist(t, [lo, hi])²`
    Interval { lo: f64, hi: f64, q: f64 },
    /// `(q/2)·(t − target)²`
    Quadratic { target: f64, q: f64 },
}

impl PenaltyOperator {
    pub fn proj_residual(set: ConvexSet) -> Self {
        PenaltyOperator::ProjResidual { set }
    }

    pub fn boundary_mass(indices: Vec<usize>, targets: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let g = PenaltyOperator::BoundaryMass {
            indices,
            targets,
            weights,
        };
        g.validate(None)?;
        Ok(g)
    }

    pub fn validate(&self, dim: Option<usize>) -> Result<()> {
        match self {
            PenaltyOperator::ProjResidual { set } => set.validate(dim),
            PenaltyOperator::BoundaryMass {
                indices,
                targets,
                weights,
            } => {
                if indices.len() != targets.len() || indices.len() != weights.len() {
                    return Err(Error::Invalid("boundary mass arrays differ in length".into()));
                }
                if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                    return Err(Error::Invalid("boundary mass weights must be positive".into()));
                }
                if targets.iter().any(|t| !t.is_finite()) {
                    return Err(Error::Invalid("boundary mass targets must be finite".into()));
                }
                if let (Some(d), Some(&i)) = (dim, indices.iter().max()) {
                    if i >= d {
                        return Err(Error::Invalid(format!("penalty index {i} out of range")));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn apply(&self, ip: &InnerProduct, u: &[f64]) -> Result<Vec<f64>> {
        match self {
            PenaltyOperator::ProjResidual { set } => {
                Ok(linalg::sub(u, &set.project_in(ip, u)?))
            }
            PenaltyOperator::BoundaryMass {
                indices,
                targets,
                weights,
            } => {
                let mut g = vec![0.0; u.len()];
                for ((&i, &b), &w) in indices.iter().zip(targets).zip(weights) {
                    g[i] = w * (u[i] - b);
                }
                Ok(g)
            }
        }
    }

    /// Lipschitz constant: 1 for `I − P_K` (firm nonexpansiveness), the largest
    /// weight for the boundary mass.
    pub fn lipschitz(&self) -> f64 {
        match self {
            PenaltyOperator::ProjResidual { .. } => 1.0,
            PenaltyOperator::BoundaryMass { weights, .. } => {
                weights.iter().cloned().fold(0.0, f64::max)
            }
        }
    }

    /// The set `{u : Gu = 0}`.
    pub fn kernel_set(&self) -> ConvexSet {
        match self {
            PenaltyOperator::ProjResidual { set } => set.clone(),
            PenaltyOperator::BoundaryMass {
                indices, targets, ..
            } => ConvexSet::AffineSlice {
                indices: indices.clone(),
                values: targets.clone(),
            },
        }
    }

    pub fn coord_penalty(&self, i: usize, scale: f64) -> CoordPenalty {
        match self {
            PenaltyOperator::ProjResidual { set } => {
                let (lo, hi) = set.coord_interval(i);
                if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
                    CoordPenalty::None
                } else {
                    CoordPenalty::Interval { lo, hi, q: scale }
                }
            }
            PenaltyOperator::BoundaryMass {
                indices,
                targets,
                weights,
            } => indices
                .iter()
                .position(|&k| k == i)
                .map_or(CoordPenalty::None, |k| CoordPenalty::Quadratic {
                    target: targets[k],
                    q: scale * weights[k],
                }),
        }
    }

    /// Probe check that `ker G = K`: members of `K` are annihilated and every
    /// annihilated probe lies in `K`.
    pub fn check_kernel<R: Rng>(
        &self,
        set: &ConvexSet,
        ip: &InnerProduct,
        dim: usize,
        rng: &mut R,
    ) -> Result<()> {
        let center = vec![0.0; dim];
        let kernel = self.kernel_set();
        for _ in 0..32 {
            let v = set.sample(rng, &center, 4.0);
            let gv = self.apply(ip, &v)?;
            if linalg::norm2(&gv) > 1e-12 {
                return Err(Error::KernelMismatch(format!(
                    "G does not vanish at a member of K (|Gv| = {:e})",
                    linalg::norm2(&gv)
                )));
            }
            let w = kernel.sample(rng, &center, 4.0);
            if linalg::norm2(&self.apply(ip, &w)?) <= 1e-12 && !set.contains(&w) {
                return Err(Error::KernelMismatch(
                    "G vanishes at a point outside K".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OperatorKind {
    Linear {
        matrix: Matrix,
    },
    /// `u ↦ M u + shift`.
    Affine {
        matrix: Matrix,
        shift: Vec<f64>,
    },
    /// `u ↦ base(u) + weight·G(u)`.
    Penalized {
        base: Box<MonotoneOperator>,
        penalty: PenaltyOperator,
        weight: f64,
    },
}

/// Operator with certified strong-monotonicity constant `m` and Lipschitz
/// constant `big_m`.
#[derive(Clone, Debug, PartialEq)]
pub struct MonotoneOperator {
    kind: OperatorKind,
    m: f64,
    big_m: f64,
}

impl MonotoneOperator {
    /// Linear operator; `m` and `M` are the extreme spectral values of its
    /// symmetric part and its largest singular value.
    pub fn linear(matrix: Matrix) -> Result<Self> {
        let (m, big_m) = linalg::monotonicity_constants(&matrix)?;
        Ok(Self {
            kind: OperatorKind::Linear { matrix },
            m,
            big_m,
        })
    }

    pub fn affine(matrix: Matrix, shift: Vec<f64>) -> Result<Self> {
        if shift.len() != matrix.nrows() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                got: shift.len(),
            });
        }
        let (m, big_m) = linalg::monotonicity_constants(&matrix)?;
        Ok(Self {
            kind: OperatorKind::Affine { matrix, shift },
            m,
            big_m,
        })
    }

    /// `A + weight·G`. Keeps `m`, adds `weight·L_G` to `M`.
    pub fn penalized(base: MonotoneOperator, penalty: PenaltyOperator, weight: f64) -> Result<Self> {
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::Invalid("penalty weight must be positive".into()));
        }
        penalty.validate(Some(base.dim()))?;
        let (m, big_m) = (base.m, base.big_m + weight * penalty.lipschitz());
        Ok(Self {
            kind: OperatorKind::Penalized {
                base: Box::new(base),
                penalty,
                weight,
            },
            m,
            big_m,
        })
    }

    /// Caller-supplied constants; check them with [`Self::probe_constants`].
    pub fn with_constants(kind: OperatorKind, m: f64, big_m: f64) -> Result<Self> {
        if !(m > 0.0 && m <= big_m && big_m.is_finite()) {
            return Err(Error::Invalid(format!("need 0 < m <= M, got m={m}, M={big_m}")));
        }
        Ok(Self { kind, m, big_m })
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn big_m(&self) -> f64 {
        self.big_m
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            OperatorKind::Linear { matrix } | OperatorKind::Affine { matrix, .. } => matrix.nrows(),
            OperatorKind::Penalized { base, .. } => base.dim(),
        }
    }

    pub fn apply(&self, ip: &InnerProduct, u: &[f64]) -> Result<Vec<f64>> {
        match &self.kind {
            OperatorKind::Linear { matrix } => Ok(matrix.mul_vec(u)),
            OperatorKind::Affine { matrix, shift } => Ok(linalg::add(&matrix.mul_vec(u), shift)),
            OperatorKind::Penalized {
                base,
                penalty,
                weight,
            } => {
                let a = base.apply(ip, u)?;
                let g = penalty.apply(ip, u)?;
                Ok(linalg::axpy(*weight, &g, &a))
            }
        }
    }

    /// Matrix part and constant shift when the operator is linear or affine.
    pub fn affine_parts(&self) -> Option<(&Matrix, Option<&[f64]>)> {
        match &self.kind {
            OperatorKind::Linear { matrix } => Some((matrix, None)),
            OperatorKind::Affine { matrix, shift } => Some((matrix, Some(shift))),
            OperatorKind::Penalized { .. } => None,
        }
    }

    /// Checks the monotonicity and Lipschitz inequalities on random pairs.
    /// Returns the worst observed ratios `(min (Au−Av,u−v)/|u−v|², max |Au−Av|/|u−v|)`.
    pub fn probe_constants<R: Rng>(
        &self,
        ip: &InnerProduct,
        pairs: usize,
        radius: f64,
        rng: &mut R,
    ) -> Result<(f64, f64)> {
        let n = self.dim();
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for _ in 0..pairs {
            let u: Vec<f64> = (0..n).map(|_| rng.random_range(-radius..radius)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-radius..radius)).collect();
            let d = linalg::sub(&u, &v);
            let nd = ip.norm(&d);
            if nd == 0.0 {
                continue;
            }
            let ad = linalg::sub(&self.apply(ip, &u)?, &self.apply(ip, &v)?);
            lo = lo.min(ip.inner(&ad, &d) / (nd * nd));
            hi = hi.max(ip.norm(&ad) / nd);
        }
        let slack = 1e-9;
        if lo < self.m * (1.0 - slack) - 1e-12 {
            return Err(Error::Invalid(format!(
                "monotonicity probe {lo} falls below certified m = {}",
                self.m
            )));
        }
        if hi > self.big_m * (1.0 + slack) + 1e-12 {
            return Err(Error::Invalid(format!(
                "Lipschitz probe {hi} exceeds certified M = {}",
                self.big_m
            )));
        }
        Ok((lo, hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, SymmetricEigen};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let s = &b * b.transpose() + DMatrix::identity(n, n) * 0.5;
        Matrix::from_dense(&s)
    }

    #[test]
    fn certified_constants_match_eigen_oracle_and_probes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [2, 4, 7] {
            let a = random_spd(n, &mut rng);
            let op = MonotoneOperator::linear(a.clone()).unwrap();
            let eig = SymmetricEigen::new(a.to_dense()).eigenvalues;
            let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!((op.m() - lo).abs() <= 1e-8 * lo, "m {} vs {}", op.m(), lo);
            assert!((op.big_m() - hi).abs() <= 1e-8 * hi);
            op.probe_constants(&InnerProduct::Euclidean, 1000, 3.0, &mut rng)
                .unwrap();
        }
    }

    #[test]
    fn nonsymmetric_operator_constants() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![-1.0, 2.0]]).unwrap();
        let op = MonotoneOperator::linear(a).unwrap();
        assert!((op.m() - 2.0).abs() < 1e-10);
        assert!((op.big_m() - 5f64.sqrt()).abs() < 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        op.probe_constants(&InnerProduct::Euclidean, 500, 2.0, &mut rng)
            .unwrap();
    }

    #[test]
    fn penalty_operators_are_monotone_with_matching_kernels() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ip = InnerProduct::Euclidean;
        let k = ConvexSet::boxed(vec![0.0, -1.0, f64::NEG_INFINITY], vec![1.0, 2.0, 0.5]).unwrap();
        let g = PenaltyOperator::proj_residual(k.clone());
        g.check_kernel(&k, &ip, 3, &mut rng).unwrap();
        for _ in 0..500 {
            let u: Vec<f64> = (0..3).map(|_| rng.random_range(-4.0..4.0)).collect();
            let v: Vec<f64> = (0..3).map(|_| rng.random_range(-4.0..4.0)).collect();
            let gu = g.apply(&ip, &u).unwrap();
            let gv = g.apply(&ip, &v).unwrap();
            assert!(linalg::dot(&linalg::sub(&gu, &gv), &linalg::sub(&u, &v)) >= -1e-12);
            let d = k.distance_in(&ip, &u).unwrap();
            assert!((linalg::norm2(&gu) - d).abs() <= 1e-12);
        }
        let bm = PenaltyOperator::boundary_mass(vec![2], vec![1.5], vec![0.25]).unwrap();
        let slice = ConvexSet::affine_slice(vec![2], vec![1.5]).unwrap();
        bm.check_kernel(&slice, &ip, 3, &mut rng).unwrap();
        assert_eq!(bm.lipschitz(), 0.25);
        assert_eq!(bm.apply(&ip, &[9.0, 9.0, 1.5]).unwrap(), vec![0.0; 3]);
        assert!(bm.apply(&ip, &[0.0, 0.0, 1.5 + 1e-9]).unwrap()[2] != 0.0);
        // wrong set: kernel mismatch is reported
        let other = ConvexSet::interval(0.0, 1.0).unwrap();
        let g1 = PenaltyOperator::proj_residual(ConvexSet::interval(0.0, 2.0).unwrap());
        assert!(g1.check_kernel(&other, &ip, 1, &mut rng).is_err());
    }

    #[test]
    fn penalized_constants() {
        let base = MonotoneOperator::linear(Matrix::identity(1)).unwrap();
        let g = PenaltyOperator::proj_residual(ConvexSet::interval(0.0, 1.0).unwrap());
        let op = MonotoneOperator::penalized(base, g, 4.0).unwrap();
        assert!((op.m() - 1.0).abs() < 1e-12);
        assert!((op.big_m() - 5.0).abs() < 1e-9);
        assert_eq!(op.apply(&InnerProduct::Euclidean, &[2.0]).unwrap(), vec![6.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        op.probe_constants(&InnerProduct::Euclidean, 1000, 3.0, &mut rng)
            .unwrap();
    }
}
