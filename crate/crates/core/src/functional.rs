//! Convex, coordinate-separable nonsmooth terms `j` and their proximal maps.
//!
//! Every kind here is a sum of one-dimensional piecewise-linear functions with
//! a single kink at zero, `j_i(t) = r_i·t` for `t ≥ 0` and `l_i·t` for `t < 0`
//! with `l_i ≤ r_i`. That form is what the solvers consume.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sets::ConvexSet;
use crate::space::InnerProduct;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConvexFunctional {
    Zero,
    /// `Σ_k w_k · max(v_{i_k}, 0)`.
    WeightedPositivePart {
        indices: Vec<usize>,
        weights: Vec<f64>,
    },
    /// `Σ_k c_k · |v_{i_k}|`.
    TangentialWeightedAbs {
        indices: Vec<usize>,
        weights: Vec<f64>,
    },
    Sum {
        terms: Vec<ConvexFunctional>,
    },
}

/// Left and right slopes of one coordinate's piecewise-linear term.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Kink {
    pub left: f64,
    pub right: f64,
}

impl Kink {
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        if t >= 0.0 {
            self.right * t
        } else {
            self.left * t
        }
    }

    /// Slope on the open side containing `t` (`t ≠ 0`).
    #[inline]
    pub fn slope_at(&self, t: f64) -> f64 {
        if t > 0.0 {
            self.right
        } else {
            self.left
        }
    }

    pub fn is_zero(&self) -> bool {
        self.left == 0.0 && self.right == 0.0
    }

    /// `argmin_t ½(t − x)² + rho·j_i(t)` (soft thresholding against the kink).
    #[inline]
    pub fn prox(&self, rho: f64, x: f64) -> f64 {
        if x > rho * self.right {
            x - rho * self.right
        } else if x < rho * self.left {
            x - rho * self.left
        } else {
            0.0
        }
    }
}

impl ConvexFunctional {
    pub fn positive_part(indices: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        let j = ConvexFunctional::WeightedPositivePart { indices, weights };
        j.validate(None)?;
        Ok(j)
    }

    pub fn weighted_abs(indices: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        let j = ConvexFunctional::TangentialWeightedAbs { indices, weights };
        j.validate(None)?;
        Ok(j)
    }

    /// Sum of terms, flattening nested sums and dropping zeros.
    pub fn sum(terms: Vec<ConvexFunctional>) -> Self {
        let mut flat = Vec::new();
        for t in terms {
            match t {
                ConvexFunctional::Zero => {}
                ConvexFunctional::Sum { terms } => flat.extend(terms),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => ConvexFunctional::Zero,
            1 => flat.pop().unwrap(),
            _ => ConvexFunctional::Sum { terms: flat },
        }
    }

    pub fn validate(&self, dim: Option<usize>) -> Result<()> {
        match self {
            ConvexFunctional::Zero => Ok(()),
            ConvexFunctional::WeightedPositivePart { indices, weights }
            | ConvexFunctional::TangentialWeightedAbs { indices, weights } => {
                if indices.len() != weights.len() {
                    return Err(Error::Invalid("functional indices/weights length mismatch".into()));
                }
                if let Some(k) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
                    return Err(Error::Invalid(format!(
                        "functional weight {k} must be finite and non-negative"
                    )));
                }
                if let (Some(d), Some(&i)) = (dim, indices.iter().max()) {
                    if i >= d {
                        return Err(Error::Invalid(format!("functional index {i} out of range")));
                    }
                }
                Ok(())
            }
            ConvexFunctional::Sum { terms } => terms.iter().try_for_each(|t| t.validate(dim)),
        }
    }

    fn accumulate(&self, kinks: &mut [Kink]) {
        match self {
            ConvexFunctional::Zero => {}
            ConvexFunctional::WeightedPositivePart { indices, weights } => {
                for (&i, &w) in indices.iter().zip(weights) {
                    kinks[i].right += w;
                }
            }
            ConvexFunctional::TangentialWeightedAbs { indices, weights } => {
                for (&i, &w) in indices.iter().zip(weights) {
                    kinks[i].left -= w;
                    kinks[i].right += w;
                }
            }
            ConvexFunctional::Sum { terms } => terms.iter().for_each(|t| t.accumulate(kinks)),
        }
    }

    /// Per-coordinate representation on ℝⁿ.
    pub fn kinks(&self, dim: usize) -> Vec<Kink> {
        let mut k = vec![Kink::default(); dim];
        self.accumulate(&mut k);
        k
    }

    pub fn eval(&self, v: &[f64]) -> f64 {
        match self {
            ConvexFunctional::Zero => 0.0,
            ConvexFunctional::WeightedPositivePart { indices, weights } => indices
                .iter()
                .zip(weights)
                .map(|(&i, &w)| w * v[i].max(0.0))
                .sum(),
            ConvexFunctional::TangentialWeightedAbs { indices, weights } => indices
                .iter()
                .zip(weights)
                .map(|(&i, &w)| w * v[i].abs())
                .sum(),
            ConvexFunctional::Sum { terms } => terms.iter().map(|t| t.eval(v)).sum(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ConvexFunctional::Zero => true,
            ConvexFunctional::WeightedPositivePart { weights, .. }
            | ConvexFunctional::TangentialWeightedAbs { weights, .. } => {
                weights.iter().all(|&w| w == 0.0)
            }
            ConvexFunctional::Sum { terms } => terms.iter().all(ConvexFunctional::is_zero),
        }
    }

    /// `(α, β)` with `j(v) ≥ (α, v) + β`. Every kind here is non-negative, so
    /// the zero minorant works.
    pub fn affine_minorant(&self, dim: usize) -> (Vec<f64>, f64) {
        (vec![0.0; dim], 0.0)
    }

    /// Lipschitz constant of `j` on any ball (euclidean coordinates): the sum
    /// of the coordinate weights.
    pub fn local_lipschitz(&self, dim: usize, _radius: f64) -> f64 {
        self.kinks(dim)
            .iter()
            .map(|k| k.left.abs().max(k.right.abs()))
            .sum()
    }

    /// `argmin_{v ∈ K} ½‖v − x‖² + rho·j(v)`, coordinatewise in closed form.
    pub fn combined_prox(
        &self,
        set: &ConvexSet,
        ip: &InnerProduct,
        rho: f64,
        x: &[f64],
    ) -> Result<Vec<f64>> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::Invalid(format!("prox step must be positive, got {rho}")));
        }
        if !ip.is_euclidean() {
            return Err(Error::IncompatibleStructure(
                "combined prox needs the euclidean inner product".into(),
            ));
        }
        self.validate(Some(x.len()))?;
        set.validate(Some(x.len()))?;
        let kinks = self.kinks(x.len());
        Ok(x.iter()
            .zip(&kinks)
            .enumerate()
            .map(|(i, (&xi, k))| {
                let (lo, hi) = set.coord_interval(i);
                k.prox(rho, xi).clamp(lo, hi)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn prox_1d(j: &ConvexFunctional, set: &ConvexSet, rho: f64, x: f64) -> f64 {
        j.combined_prox(set, &InnerProduct::Euclidean, rho, &[x]).unwrap()[0]
    }

    #[test]
    fn prox_of_zero_is_identity_and_projection() {
        let whole = ConvexSet::WholeSpace;
        let x = [0.3, -2.0, 7.5];
        let p = ConvexFunctional::Zero
            .combined_prox(&whole, &InnerProduct::Euclidean, 0.7, &x)
            .unwrap();
        assert_eq!(p, x.to_vec());
        let unit = ConvexSet::interval(0.0, 1.0).unwrap();
        assert_eq!(prox_1d(&ConvexFunctional::Zero, &unit, 1.0, -0.3), 0.0);
    }

    #[test]
    fn positive_part_prox_pins_then_shifts() {
        let j = ConvexFunctional::positive_part(vec![0], vec![2.0]).unwrap();
        let whole = ConvexSet::WholeSpace;
        assert_eq!(prox_1d(&j, &whole, 1.0, 1.5), 0.0);
        assert_eq!(prox_1d(&j, &whole, 1.0, 3.0), 1.0);
        assert_eq!(prox_1d(&j, &whole, 1.0, -0.5), -0.5);
        // grid oracle for the x = 3 case
        let grid_min = (-20_000..=20_000)
            .map(|k| k as f64 * 1e-4)
            .map(|v| (0.5 * (v - 3.0f64).powi(2) + 2.0 * v.max(0.0), v))
            .fold((f64::INFINITY, 0.0), |a, b| if b.0 < a.0 { b } else { a });
        assert!((grid_min.1 - 1.0).abs() <= 1e-4);
    }

    #[test]
    fn abs_prox_is_soft_thresholding() {
        let j = ConvexFunctional::weighted_abs(vec![0], vec![0.5]).unwrap();
        let whole = ConvexSet::WholeSpace;
        assert_eq!(prox_1d(&j, &whole, 2.0, 3.0), 2.0);
        assert_eq!(prox_1d(&j, &whole, 2.0, -3.0), -2.0);
        assert_eq!(prox_1d(&j, &whole, 2.0, 0.9), 0.0);
    }

    #[test]
    fn gram_space_is_incompatible() {
        let g = crate::linalg::Matrix::identity(1).scaled(2.0);
        let ip = InnerProduct::gram(g).unwrap();
        let r = ConvexFunctional::Zero.combined_prox(&ConvexSet::WholeSpace, &ip, 1.0, &[1.0]);
        assert!(matches!(r, Err(Error::IncompatibleStructure(_))));
    }

    #[test]
    fn sums_flatten_and_evaluate() {
        let j = ConvexFunctional::sum(vec![
            ConvexFunctional::Zero,
            ConvexFunctional::positive_part(vec![0], vec![1.0]).unwrap(),
            ConvexFunctional::sum(vec![ConvexFunctional::weighted_abs(vec![1], vec![2.0]).unwrap()]),
        ]);
        assert!(matches!(&j, ConvexFunctional::Sum { terms } if terms.len() == 2));
        assert_eq!(j.eval(&[-1.0, -1.5]), 3.0);
        assert_eq!(j.local_lipschitz(2, 10.0), 3.0);
        assert!(ConvexFunctional::sum(vec![]).is_zero());
    }

    #[test]
    fn negative_weights_are_rejected() {
        assert!(ConvexFunctional::positive_part(vec![0], vec![-1.0]).is_err());
        assert!(ConvexFunctional::weighted_abs(vec![0, 1], vec![1.0]).is_err());
    }

    fn brute_force_prox(
        kinks: &[Kink],
        lo: &[f64],
        hi: &[f64],
        rho: f64,
        x: &[f64],
        h: f64,
    ) -> (f64, Vec<f64>) {
        // dense grid over the (bounded) box
        let n = x.len();
        let steps: Vec<usize> = (0..n).map(|i| ((hi[i] - lo[i]) / h).round() as usize).collect();
        let mut idx = vec![0usize; n];
        let mut best = (f64::INFINITY, vec![0.0; n]);
        loop {
            let v: Vec<f64> = (0..n).map(|i| lo[i] + idx[i] as f64 * h).collect();
            let obj: f64 = (0..n)
                .map(|i| 0.5 * (v[i] - x[i]).powi(2) + rho * kinks[i].eval(v[i]))
                .sum();
            if obj < best.0 {
                best = (obj, v);
            }
            let mut d = 0;
            loop {
                if d == n {
                    return best;
                }
                idx[d] += 1;
                if idx[d] <= steps[d] {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]
        #[test]
        fn prox_matches_grid_minimizer(
            n in 1usize..=3,
            seed in prop::collection::vec((-1.0f64..0.0, 0.0f64..1.0, 0.0f64..1.5, 0.0f64..1.5, -2.0f64..2.0), 3),
            rho in 0.2f64..2.0,
        ) {
            let lo: Vec<f64> = seed[..n].iter().map(|s| s.0).collect();
            let hi: Vec<f64> = seed[..n].iter().map(|s| s.1).collect();
            let x: Vec<f64> = seed[..n].iter().map(|s| s.4).collect();
            let j = ConvexFunctional::sum(vec![
                ConvexFunctional::positive_part((0..n).collect(), seed[..n].iter().map(|s| s.2).collect()).unwrap(),
                ConvexFunctional::weighted_abs(vec![0], vec![seed[0].3]).unwrap(),
            ]);
            let set = ConvexSet::boxed(lo.clone(), hi.clone()).unwrap();
            let p = j.combined_prox(&set, &InnerProduct::Euclidean, rho, &x).unwrap();
            let h = if n == 3 { 0.02 } else { 0.005 };
            let (_, g) = brute_force_prox(&j.kinks(n), &lo, &hi, rho, &x, h);
            for i in 0..n {
                prop_assert!((p[i] - g[i]).abs() <= h, "coord {} prox {} grid {}", i, p[i], g[i]);
            }
        }
    }
}
