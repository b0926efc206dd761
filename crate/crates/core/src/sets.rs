//! Closed convex constraint sets with exact projection oracles.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::space::{CoeffVector, HilbertSpace, InnerProduct};

/// Serde helpers: infinite bounds are written as `null`.
mod bounds_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let opt: Vec<Option<f64>> = v
            .iter()
            .map(|&x| if x.is_finite() { Some(x) } else { None })
            .collect();
        opt.serialize(s)
    }

    fn read<'de, D: Deserializer<'de>>(d: D, missing: f64) -> Result<Vec<f64>, D::Error> {
        let opt: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(opt.into_iter().map(|x| x.unwrap_or(missing)).collect())
    }

    pub mod lower {
        pub use super::serialize;
        pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            super::read(d, f64::NEG_INFINITY)
        }
    }

    pub mod upper {
        pub use super::serialize;
        pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            super::read(d, f64::INFINITY)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConvexSet {
    WholeSpace,
    /// `lower_i ≤ x_i ≤ upper_i`; infinite bounds allowed.
    Box {
        #[serde(with = "bounds_serde::lower")]
        lower: Vec<f64>,
        #[serde(with = "bounds_serde::upper")]
        upper: Vec<f64>,
    },
    /// `x_i = values_k` for `i = indices_k`, other coordinates free.
    AffineSlice {
        indices: Vec<usize>,
        values: Vec<f64>,
    },
    /// Member of a family of boxes `scale · [lower, upper]`.
    ScaledBox {
        #[serde(with = "bounds_serde::lower")]
        lower: Vec<f64>,
        #[serde(with = "bounds_serde::upper")]
        upper: Vec<f64>,
        scale: f64,
    },
}

impl ConvexSet {
    pub fn whole_space() -> Self {
        ConvexSet::WholeSpace
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let s = ConvexSet::Box { lower, upper };
        s.validate(None)?;
        Ok(s)
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::boxed(vec![lo], vec![hi])
    }

    pub fn affine_slice(indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let s = ConvexSet::AffineSlice { indices, values };
        s.validate(None)?;
        Ok(s)
    }

    pub fn scaled_box(lower: Vec<f64>, upper: Vec<f64>, scale: f64) -> Result<Self> {
        let s = ConvexSet::ScaledBox {
            lower,
            upper,
            scale,
        };
        s.validate(None)?;
        Ok(s)
    }

    pub fn validate(&self, dim: Option<usize>) -> Result<()> {
        let check_dim = |n: usize| match dim {
            Some(d) if d != n => Err(Error::DimensionMismatch { expected: d, got: n }),
            _ => Ok(()),
        };
        match self {
            ConvexSet::WholeSpace => Ok(()),
            ConvexSet::Box { lower, upper } | ConvexSet::ScaledBox { lower, upper, .. } => {
                if lower.len() != upper.len() {
                    return Err(Error::Invalid("box bounds differ in length".into()));
                }
                check_dim(lower.len())?;
                for (i, (l, u)) in lower.iter().zip(upper).enumerate() {
                    if l.is_nan() || u.is_nan() || *l == f64::INFINITY || *u == f64::NEG_INFINITY {
                        return Err(Error::Invalid(format!("box bound {i} is not a valid bound")));
                    }
                    if l > u {
                        return Err(Error::Invalid(format!("empty box: lower[{i}] > upper[{i}]")));
                    }
                }
                if let ConvexSet::ScaledBox { scale, .. } = self {
                    if !(scale.is_finite() && *scale > 0.0) {
                        return Err(Error::Invalid("box scale must be positive".into()));
                    }
                }
                Ok(())
            }
            ConvexSet::AffineSlice { indices, values } => {
                if indices.len() != values.len() {
                    return Err(Error::Invalid("affine slice indices/values length mismatch".into()));
                }
                if let Some(k) = values.iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(k));
                }
                let mut seen = indices.clone();
                seen.sort_unstable();
                if seen.windows(2).any(|w| w[0] == w[1]) {
                    return Err(Error::Invalid("affine slice repeats an index".into()));
                }
                if let (Some(d), Some(&max)) = (dim, seen.last()) {
                    if max >= d {
                        return Err(Error::Invalid(format!("affine slice index {max} out of range")));
                    }
                }
                Ok(())
            }
        }
    }

    /// Coordinate interval `[lo, hi]` of coordinate `i`; every kind here is a
    /// product of such intervals.
    pub fn coord_interval(&self, i: usize) -> (f64, f64) {
        match self {
            ConvexSet::WholeSpace => (f64::NEG_INFINITY, f64::INFINITY),
            ConvexSet::Box { lower, upper } => (lower[i], upper[i]),
            ConvexSet::ScaledBox {
                lower,
                upper,
                scale,
            } => (lower[i] * scale, upper[i] * scale),
            ConvexSet::AffineSlice { indices, values } => indices
                .iter()
                .position(|&k| k == i)
                .map_or((f64::NEG_INFINITY, f64::INFINITY), |k| (values[k], values[k])),
        }
    }

    /// Box bounds as explicit vectors of length `dim`.
    pub fn bounds(&self, dim: usize) -> (Vec<f64>, Vec<f64>) {
        (0..dim).map(|i| self.coord_interval(i)).unzip()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        (0..x.len()).all(|i| {
            let (lo, hi) = self.coord_interval(i);
            lo <= x[i] && x[i] <= hi
        })
    }

    /// `P_K x` with respect to `ip`.
    pub fn project_in(&self, ip: &InnerProduct, x: &[f64]) -> Result<Vec<f64>> {
        match (self, ip) {
            (ConvexSet::WholeSpace, _) => Ok(x.to_vec()),
            (_, InnerProduct::Euclidean) => Ok((0..x.len())
                .map(|i| {
                    let (lo, hi) = self.coord_interval(i);
                    x[i].clamp(lo, hi)
                })
                .collect()),
            (ConvexSet::AffineSlice { indices, values }, InnerProduct::Gram { matrix }) => {
                Ok(gram_slice_projection(matrix, indices, values, x))
            }
            _ => Err(Error::UnsupportedProjection),
        }
    }

    pub fn distance_in(&self, ip: &InnerProduct, x: &[f64]) -> Result<f64> {
        let p = self.project_in(ip, x)?;
        Ok(ip.dist(x, &p))
    }

    pub fn project(&self, space: &HilbertSpace, x: &CoeffVector) -> Result<CoeffVector> {
        self.check(space, x)?;
        Ok(x.with_coeffs(self.project_in(space.inner_product(), x.as_slice())?))
    }

    pub fn distance(&self, space: &HilbertSpace, x: &CoeffVector) -> Result<f64> {
        self.check(space, x)?;
        self.distance_in(space.inner_product(), x.as_slice())
    }

    fn check(&self, space: &HilbertSpace, x: &CoeffVector) -> Result<()> {
        if x.space_id() != space.id() {
            return Err(Error::SpaceMismatch {
                left: space.id().0,
                right: x.space_id().0,
            });
        }
        self.validate(Some(space.dim()))
    }

    /// All vertices of a bounded box, when there are at most `max` of them.
    pub fn vertices(&self, dim: usize, max: usize) -> Option<Vec<Vec<f64>>> {
        let (lo, hi) = self.bounds(dim);
        if lo.iter().chain(&hi).any(|v| !v.is_finite()) || dim >= 64 || (1usize << dim) > max {
            return None;
        }
        Some(
            (0..1usize << dim)
                .map(|mask| {
                    (0..dim)
                        .map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] })
                        .collect()
                })
                .collect(),
        )
    }

    /// Uniform sample from `K ∩ (center + [−radius, radius]ⁿ)`, falling back to
    /// the nearest bound when the window misses a coordinate interval.
    pub fn sample<R: Rng>(&self, rng: &mut R, center: &[f64], radius: f64) -> Vec<f64> {
        (0..center.len())
            .map(|i| {
                let (lo, hi) = self.coord_interval(i);
                let a = lo.max(center[i] - radius);
                let b = hi.min(center[i] + radius);
                if a < b {
                    rng.random_range(a..=b)
                } else if lo == hi {
                    lo
                } else {
                    center[i].clamp(lo, hi)
                }
            })
            .collect()
    }

    /// Same set with every finite box bound multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> ConvexSet {
        match self {
            ConvexSet::Box { lower, upper } => ConvexSet::ScaledBox {
                lower: lower.clone(),
                upper: upper.clone(),
                scale: factor,
            },
            ConvexSet::ScaledBox {
                lower,
                upper,
                scale,
            } => ConvexSet::ScaledBox {
                lower: lower.clone(),
                upper: upper.clone(),
                scale: scale * factor,
            },
            other => other.clone(),
        }
    }
}

fn gram_slice_projection(g: &Matrix, fixed: &[usize], values: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut is_fixed = vec![false; n];
    fixed.iter().for_each(|&i| is_fixed[i] = true);
    let free: Vec<usize> = (0..n).filter(|&i| !is_fixed[i]).collect();
    let mut y = x.to_vec();
    for (&i, &b) in fixed.iter().zip(values) {
        y[i] = b;
    }
    if free.is_empty() {
        return y;
    }
    // d = x − y satisfies G_FF d_F = −G_FS d_S with d_S = x_S − b.
    let dense = g.to_dense();
    let gff = DMatrix::from_fn(free.len(), free.len(), |a, b| dense[(free[a], free[b])]);
    let rhs = DVector::from_fn(free.len(), |a, _| {
        -fixed
            .iter()
            .zip(values)
            .map(|(&s, &b)| dense[(free[a], s)] * (x[s] - b))
            .sum::<f64>()
    });
    let d_free = gff
        .cholesky()
        .expect("principal submatrix of an SPD gram matrix is SPD")
        .solve(&rhs);
    for (a, &i) in free.iter().enumerate() {
        y[i] = x[i] - d_free[a];
    }
    y
}

/// Convenience: euclidean distance from `x` to the box `[lo, hi]`.
pub fn box_distance(lo: &[f64], hi: &[f64], x: &[f64]) -> f64 {
    let p: Vec<f64> = (0..x.len()).map(|i| x[i].clamp(lo[i], hi[i])).collect();
    linalg::dist2(x, &p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid_argmin(lo: [f64; 2], hi: [f64; 2], x: [f64; 2], h: f64) -> [f64; 2] {
        let mut best = (f64::INFINITY, [0.0, 0.0]);
        let nx = ((hi[0] - lo[0]) / h).round() as usize;
        let ny = ((hi[1] - lo[1]) / h).round() as usize;
        for a in 0..=nx {
            for b in 0..=ny {
                let v = [lo[0] + a as f64 * h, lo[1] + b as f64 * h];
                let d = (v[0] - x[0]).powi(2) + (v[1] - x[1]).powi(2);
                if d < best.0 {
                    best = (d, v);
                }
            }
        }
        best.1
    }

    #[test]
    fn interval_projection_of_two_is_one() {
        let k = ConvexSet::interval(0.0, 1.0).unwrap();
        let ip = InnerProduct::Euclidean;
        assert_eq!(k.project_in(&ip, &[2.0]).unwrap(), vec![1.0]);
        assert_eq!(k.distance_in(&ip, &[2.0]).unwrap(), 1.0);
        assert_eq!(k.distance_in(&ip, &[0.4]).unwrap(), 0.0);
    }

    #[test]
    fn box_projection_matches_grid_search() {
        let k = ConvexSet::boxed(vec![0.0, -1.0], vec![1.0, 0.0]).unwrap();
        let p = k.project_in(&InnerProduct::Euclidean, &[2.0, -3.0]).unwrap();
        assert_eq!(p, vec![1.0, -1.0]);
        let g = grid_argmin([0.0, -1.0], [1.0, 0.0], [2.0, -3.0], 1e-3);
        assert!((g[0] - p[0]).abs() <= 1e-3 && (g[1] - p[1]).abs() <= 1e-3);
    }

    #[test]
    fn affine_slice_distance_matches_grid_search() {
        let k = ConvexSet::affine_slice(vec![1], vec![3.0]).unwrap();
        let d = k.distance_in(&InnerProduct::Euclidean, &[5.0, 1.0]).unwrap();
        assert_eq!(d, 2.0);
        let grid = (0..=20_000)
            .map(|a| {
                let v0 = a as f64 * 1e-3;
                ((v0 - 5.0).powi(2) + 4.0).sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        assert!((grid - d).abs() <= 1e-9);
    }

    #[test]
    fn gram_box_projection_is_rejected() {
        let g = InnerProduct::gram(Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap())
            .unwrap();
        let k = ConvexSet::boxed(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(k.project_in(&g, &[2.0, 2.0]), Err(Error::UnsupportedProjection));
        assert_eq!(
            ConvexSet::WholeSpace.project_in(&g, &[2.0, 2.0]).unwrap(),
            vec![2.0, 2.0]
        );
    }

    #[test]
    fn gram_slice_projection_is_orthogonal_in_the_gram_metric() {
        let gm = Matrix::from_rows(&[
            vec![3.0, 1.0, 0.5],
            vec![1.0, 2.0, 0.2],
            vec![0.5, 0.2, 1.5],
        ])
        .unwrap();
        let ip = InnerProduct::gram(gm).unwrap();
        let k = ConvexSet::affine_slice(vec![2], vec![1.0]).unwrap();
        let x = [0.3, -0.7, 4.0];
        let p = k.project_in(&ip, &x).unwrap();
        assert_eq!(p[2], 1.0);
        let r = linalg::sub(&x, &p);
        // Every direction inside the slice is gram-orthogonal to the residual.
        for e in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]] {
            assert!(ip.inner(&r, &e).abs() < 1e-12);
        }
    }

    #[test]
    fn json_round_trip_keeps_infinite_bounds() {
        let k = ConvexSet::boxed(vec![f64::NEG_INFINITY, 0.0], vec![1.0, f64::INFINITY]).unwrap();
        let s = serde_json::to_string(&k).unwrap();
        assert!(s.contains("null"));
        let back: ConvexSet = serde_json::from_str(&s).unwrap();
        assert_eq!(back, k);
    }

    #[test]
    fn invalid_boxes_are_rejected() {
        assert!(ConvexSet::boxed(vec![1.0], vec![0.0]).is_err());
        assert!(ConvexSet::affine_slice(vec![0, 0], vec![1.0, 1.0]).is_err());
        assert!(ConvexSet::scaled_box(vec![0.0], vec![1.0], 0.0).is_err());
    }

    #[test]
    fn samples_stay_inside() {
        let k = ConvexSet::boxed(vec![0.0, f64::NEG_INFINITY], vec![1.0, 2.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let v = k.sample(&mut rng, &[5.0, 0.0], 3.0);
            assert!(k.contains(&v));
        }
    }

    fn box_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
        (1usize..5).prop_flat_map(|n| {
            (
                prop::collection::vec(-3.0f64..0.0, n),
                prop::collection::vec(0.0f64..3.0, n),
                prop::collection::vec(-6.0f64..6.0, n),
                prop::collection::vec(-6.0f64..6.0, n),
                prop::collection::vec(0.0f64..1.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn projection_invariants((lo, hi, x, y, t) in box_strategy()) {
            let k = ConvexSet::boxed(lo.clone(), hi.clone()).unwrap();
            let ip = InnerProduct::Euclidean;
            let px = k.project_in(&ip, &x).unwrap();
            let py = k.project_in(&ip, &y).unwrap();
            prop_assert!(k.contains(&px));
            prop_assert_eq!(k.project_in(&ip, &px).unwrap(), px.clone());
            prop_assert!(linalg::dist2(&px, &py) <= linalg::dist2(&x, &y) + 1e-12);
            // (x − Px, v − Px) ≤ 0 for v in K
            let v: Vec<f64> = (0..lo.len()).map(|i| lo[i] + t[i] * (hi[i] - lo[i])).collect();
            let lhs = linalg::dot(&linalg::sub(&x, &px), &linalg::sub(&v, &px));
            prop_assert!(lhs <= 1e-12);
        }
    }
}
