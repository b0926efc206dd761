use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// Inner product on ℝⁿ: the coefficient (euclidean) one, or `(u, v) = uᵀ G v`
/// for a symmetric positive definite Gram matrix `G`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InnerProduct {
    Euclidean,
    Gram { matrix: Matrix },
}

impl InnerProduct {
    pub fn gram(matrix: Matrix) -> Result<Self> {
        let ip = InnerProduct::Gram { matrix };
        ip.validate(None)?;
        Ok(ip)
    }

    pub fn validate(&self, dim: Option<usize>) -> Result<()> {
        if let InnerProduct::Gram { matrix } = self {
            if !matrix.is_square() {
                return Err(Error::Invalid("gram matrix must be square".into()));
            }
            if let Some(n) = dim {
                if matrix.nrows() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: matrix.nrows(),
                    });
                }
            }
            if !matrix.is_symmetric(1e-12) {
                return Err(Error::NonSpd("gram matrix is not symmetric".into()));
            }
            if Cholesky::new(matrix.to_dense()).is_none() {
                return Err(Error::NonSpd("gram matrix is not positive definite".into()));
            }
        }
        Ok(())
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self, InnerProduct::Euclidean)
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        match self {
            InnerProduct::Euclidean => linalg::dot(u, v),
            InnerProduct::Gram { matrix } => linalg::dot(u, &matrix.mul_vec(v)),
        }
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).max(0.0).sqrt()
    }

    pub fn dist(&self, u: &[f64], v: &[f64]) -> f64 {
        self.norm(&linalg::sub(u, v))
    }
}

/// Identifier tying vectors to a particular (dimension, inner product) pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpaceId(pub u64);

/// The discrete Hilbert space ℝⁿ with its inner product.
#[derive(Clone, Debug, PartialEq)]
pub struct HilbertSpace {
    dim: usize,
    inner: InnerProduct,
    id: SpaceId,
}

impl HilbertSpace {
    pub fn euclidean(dim: usize) -> Self {
        Self::new(dim, InnerProduct::Euclidean).expect("euclidean space is always valid")
    }

    pub fn new(dim: usize, inner: InnerProduct) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("space dimension must be positive".into()));
        }
        inner.validate(Some(dim))?;
        let mut hasher = Sha256::new();
        hasher.update((dim as u64).to_le_bytes());
        hasher.update(serde_json::to_vec(&inner)?);
        let digest = hasher.finalize();
        let id = SpaceId(u64::from_le_bytes(digest[..8].try_into().unwrap()));
        Ok(Self { dim, inner, id })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn inner_product(&self) -> &InnerProduct {
        &self.inner
    }

    pub fn id(&self) -> SpaceId {
        self.id
    }

    pub fn vector(&self, coeffs: Vec<f64>) -> Result<CoeffVector> {
        if coeffs.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: coeffs.len(),
            });
        }
        if let Some(k) = coeffs.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        Ok(CoeffVector {
            coeffs,
            space: self.id,
        })
    }

    pub fn zeros(&self) -> CoeffVector {
        CoeffVector {
            coeffs: vec![0.0; self.dim],
            space: self.id,
        }
    }

    fn check(&self, v: &CoeffVector) -> Result<()> {
        if v.space != self.id {
            return Err(Error::SpaceMismatch {
                left: self.id.0,
                right: v.space.0,
            });
        }
        Ok(())
    }

    pub fn inner(&self, u: &CoeffVector, v: &CoeffVector) -> Result<f64> {
        self.check(u)?;
        self.check(v)?;
        Ok(self.inner.inner(&u.coeffs, &v.coeffs))
    }

    pub fn norm(&self, u: &CoeffVector) -> Result<f64> {
        self.check(u)?;
        Ok(self.inner.norm(&u.coeffs))
    }
}

/// Coefficient vector of an element of a [`HilbertSpace`].
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffVector {
    coeffs: Vec<f64>,
    space: SpaceId,
}

impl CoeffVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn space_id(&self) -> SpaceId {
        self.space
    }

    /// Same-space difference `self − other`.
    pub fn sub(&self, other: &CoeffVector) -> Result<CoeffVector> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch {
                left: self.space.0,
                right: other.space.0,
            });
        }
        Ok(CoeffVector {
            coeffs: linalg::sub(&self.coeffs, &other.coeffs),
            space: self.space,
        })
    }

    pub(crate) fn with_coeffs(&self, coeffs: Vec<f64>) -> CoeffVector {
        CoeffVector {
            coeffs,
            space: self.space,
        }
    }
}
