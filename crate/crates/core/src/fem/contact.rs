//! Plane linear elasticity on a rectangle with unilateral contact on the
//! bottom side, a rigid-plastic layer of thickness `k` with yield limit `F`,
//! and optional Coulomb friction handled as a quasi-variational inequality.
//!
//! Geometry: Γ1 is the clamped left side, Γ2 the top and right sides (the
//! traction `f2` acts on the top side, the right side is traction free), Γ3
//! the bottom side with outward normal `ν = (0, −1)`. Unknowns are stored per
//! free node as `(u_x, −u_y)`, i.e. tangential then normal component on Γ3,
//! so `v_ν ≤ k` is a coordinate bound and both boundary functionals are
//! separable.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::criterion::{reference_solution, ResidualEstimator, ResidualMode};
use crate::error::{Error, Result};
use crate::fem::mesh::{BoundaryTag, Mesh, SideTags};
use crate::functional::ConvexFunctional;
use crate::linalg::{self, Matrix};
use crate::operator::MonotoneOperator;
use crate::problem::VIProblem;
use crate::sets::ConvexSet;
use crate::solver::{solve_qvi_friction, solve_vi, FrictionQvi, Smallness, SolveConfig, SolveReport};
use crate::studies::{ConvergenceTable, StudyConfig, StudyRow};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticMaterial {
    pub lame_lambda: f64,
    pub lame_mu: f64,
}

impl ElasticMaterial {
    pub fn new(lame_lambda: f64, lame_mu: f64) -> Result<Self> {
        if !(lame_lambda >= 0.0 && lame_mu > 0.0 && lame_lambda.is_finite() && lame_mu.is_finite()) {
            return Err(Error::Invalid("need lame_lambda ≥ 0 and lame_mu > 0".into()));
        }
        Ok(Self { lame_lambda, lame_mu })
    }

    pub fn m_f(&self) -> f64 {
        2.0 * self.lame_mu
    }

    /// Lipschitz constant of the stress map in two dimensions.
    pub fn big_m_f(&self) -> f64 {
        2.0 * self.lame_mu + 2.0 * self.lame_lambda
    }

    /// `Fε = 2με + λ tr(ε) I` for symmetric `ε = [[a, c], [c, b]]` given as `[a, b, c]`.
    pub fn stress(&self, eps: [f64; 3]) -> [f64; 3] {
        let tr = eps[0] + eps[1];
        [
            2.0 * self.lame_mu * eps[0] + self.lame_lambda * tr,
            2.0 * self.lame_mu * eps[1] + self.lame_lambda * tr,
            2.0 * self.lame_mu * eps[2],
        ]
    }
}

/// Frobenius inner product of symmetric 2×2 tensors stored as `[a, b, c]`.
pub fn tensor_dot(x: [f64; 3], y: [f64; 3]) -> f64 {
    x[0] * y[0] + x[1] * y[1] + 2.0 * x[2] * y[2]
}

/// Data of one contact problem: yield limit `F` per mesh node (used on Γ3),
/// friction coefficient `μ` per mesh node, body force `f0`, top traction
/// `f2` and layer thickness `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactLoads {
    pub yield_limit: Vec<f64>,
    pub friction: Vec<f64>,
    pub f0: [f64; 2],
    pub f2: [f64; 2],
    pub k: f64,
}

impl ContactLoads {
    pub fn uniform(nodes: usize, yield_limit: f64, friction: f64, f0: [f64; 2], f2: [f64; 2], k: f64) -> Self {
        Self {
            yield_limit: vec![yield_limit; nodes],
            friction: vec![friction; nodes],
            f0,
            f2,
            k,
        }
    }

    pub fn validate(&self, nodes: usize) -> Result<()> {
        if self.yield_limit.len() != nodes || self.friction.len() != nodes {
            return Err(Error::DimensionMismatch {
                expected: nodes,
                got: self.yield_limit.len().min(self.friction.len()),
            });
        }
        if self.yield_limit.iter().chain(&self.friction).any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::Invalid("yield limit and friction must be finite and ≥ 0".into()));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::Invalid("layer thickness must be positive".into()));
        }
        if self.f0.iter().chain(&self.f2).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("loads must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactProblemData {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub material: ElasticMaterial,
    pub base: ContactLoads,
}

impl ContactProblemData {
    /// Rectangle `2 × 1` with the given subdivision and a load that pushes
    /// part of Γ3 through the layer.
    pub fn standard(nx: usize, ny: usize) -> Result<Self> {
        let nodes = (nx + 1) * (ny + 1);
        Ok(Self {
            lx: 2.0,
            ly: 1.0,
            nx,
            ny,
            material: ElasticMaterial::new(1.0, 1.0)?,
            base: ContactLoads::uniform(nodes, 0.5, 0.0, [0.0, -0.5], [0.4, -1.5], 0.5),
        })
    }

    pub fn mesh(&self) -> Result<Mesh> {
        Mesh::rectangle(
            self.lx,
            self.ly,
            self.nx,
            self.ny,
            SideTags {
                left: BoundaryTag::Gamma1,
                right: BoundaryTag::Gamma2,
                bottom: BoundaryTag::Gamma3,
                top: BoundaryTag::Gamma2,
            },
        )
    }
}

/// Assembled stiffness and boundary data, shared by every load case.
#[derive(Clone, Debug, PartialEq)]
pub struct ContactModel {
    pub data: ContactProblemData,
    pub mesh: Mesh,
    pub operator: MonotoneOperator,
    /// Mesh node of each free node block `(2b, 2b + 1)`.
    pub dof_nodes: Vec<usize>,
    /// Free Γ3 nodes with their normal and tangential unknowns.
    pub gamma3_nodes: Vec<usize>,
    pub normal_dofs: Vec<usize>,
    pub tangential_dofs: Vec<usize>,
    /// Lumped Γ3 length per free Γ3 node.
    pub gamma3_weights: Vec<f64>,
    /// Discrete trace constant on Γ3 with respect to `‖ε(v)‖_{L²}`.
    pub d0: f64,
    body_unit: Vec<f64>,
    traction_unit: Vec<f64>,
}

fn elastic_stiffness(mesh: &Mesh, dof_of: &[Option<usize>], n: usize, mat: &ElasticMaterial) -> Matrix {
    let (lam, mu) = (mat.lame_lambda, mat.lame_mu);
    let d = [[lam + 2.0 * mu, lam, 0.0], [lam, lam + 2.0 * mu, 0.0], [0.0, 0.0, mu]];
    let mut trip = Vec::new();
    for (e, el) in mesh.elements().iter().enumerate() {
        let area = mesh.measure(e);
        let g = mesh.basis_gradients(e);
        // strain rows (xx, yy, 2xy) for unit displacements (node a, component c)
        let b = |a: usize, c: usize| -> [f64; 3] {
            if c == 0 {
                [g[a][0], 0.0, g[a][1]]
            } else {
                [0.0, g[a][1], g[a][0]]
            }
        };
        for (a, &na) in el.iter().enumerate() {
            let Some(ba) = dof_of[na] else { continue };
            for (c, &nc) in el.iter().enumerate() {
                let Some(bc) = dof_of[nc] else { continue };
                for ca in 0..2 {
                    for cc in 0..2 {
                        let (x, y) = (b(a, ca), b(c, cc));
                        let mut s = 0.0;
                        for r in 0..3 {
                            for t in 0..3 {
                                s += x[r] * d[r][t] * y[t];
                            }
                        }
                        // normal unknown is −u_y
                        let sign = if (ca == 1) ^ (cc == 1) { -1.0 } else { 1.0 };
                        trip.push((2 * ba + ca, 2 * bc + cc, sign * area * s));
                    }
                }
            }
        }
    }
    Matrix::from_triplets(n, n, &trip)
}

pub fn assemble_model(data: &ContactProblemData) -> Result<ContactModel> {
    let mesh = data.mesh()?;
    data.base.validate(mesh.num_nodes())?;
    let nn = mesh.num_nodes();
    let mut dof_of = vec![None; nn];
    let mut dof_nodes = Vec::new();
    for i in 0..nn {
        if mesh.node_tag(i) != Some(BoundaryTag::Gamma1) {
            dof_of[i] = Some(dof_nodes.len());
            dof_nodes.push(i);
        }
    }
    let n = 2 * dof_nodes.len();
    let stiffness = elastic_stiffness(&mesh, &dof_of, n, &data.material);
    let operator = MonotoneOperator::linear(stiffness).map_err(|e| match e {
        Error::NonSpd(s) => Error::NonSpd(format!("clamping insufficient: {s}")),
        other => other,
    })?;

    let w3 = mesh.lumped_boundary_mass(BoundaryTag::Gamma3);
    let mut gamma3_nodes = Vec::new();
    let mut normal_dofs = Vec::new();
    let mut tangential_dofs = Vec::new();
    let mut gamma3_weights = Vec::new();
    let mut trace_mass = vec![0.0; n];
    for (blk, &i) in dof_nodes.iter().enumerate() {
        if mesh.node_tag(i) == Some(BoundaryTag::Gamma3) {
            gamma3_nodes.push(i);
            tangential_dofs.push(2 * blk);
            normal_dofs.push(2 * blk + 1);
            gamma3_weights.push(w3[i]);
        }
        // trace mass over Γ3 facets, including corner nodes shared with Γ2
        trace_mass[2 * blk] = w3[i];
        trace_mass[2 * blk + 1] = w3[i];
    }
    // ‖ε(v)‖² is the elastic energy with λ = 0 and μ = 1/2
    let gram = elastic_stiffness(&mesh, &dof_of, n, &ElasticMaterial::new(0.0, 0.5)?);
    let d0 = linalg::generalized_max_eigenvalue(&Matrix::diagonal(&trace_mass), &gram)?.sqrt();

    let mut body_unit = vec![0.0; nn];
    for (e, el) in mesh.elements().iter().enumerate() {
        for &i in el {
            body_unit[i] += mesh.measure(e) / 3.0;
        }
    }
    let mut traction_unit = vec![0.0; nn];
    for f in mesh.boundary().iter().filter(|f| f.tag == BoundaryTag::Gamma2) {
        let on_top = f.nodes.iter().all(|&i| mesh.nodes()[i][1] == data.ly);
        if on_top {
            for &i in &f.nodes {
                traction_unit[i] += mesh.facet_measure(f) / 2.0;
            }
        }
    }
    Ok(ContactModel {
        data: data.clone(),
        mesh,
        operator,
        dof_nodes,
        gamma3_nodes,
        normal_dofs,
        tangential_dofs,
        gamma3_weights,
        d0,
        body_unit,
        traction_unit,
    })
}

/// Frictionless problem with the base data.
pub fn assemble_contact(data: &ContactProblemData) -> Result<VIProblem> {
    assemble_model(data)?.problem(&data.base)
}

impl ContactModel {
    pub fn dim(&self) -> usize {
        2 * self.dof_nodes.len()
    }

    pub fn load_vector(&self, f0: [f64; 2], f2: [f64; 2]) -> Vec<f64> {
        let mut f = vec![0.0; self.dim()];
        for (blk, &i) in self.dof_nodes.iter().enumerate() {
            f[2 * blk] = f0[0] * self.body_unit[i] + f2[0] * self.traction_unit[i];
            f[2 * blk + 1] = -(f0[1] * self.body_unit[i] + f2[1] * self.traction_unit[i]);
        }
        f
    }

    pub fn contact_set(&self, k: f64) -> Result<ConvexSet> {
        let n = self.dim();
        let mut upper = vec![f64::INFINITY; n];
        for &d in &self.normal_dofs {
            upper[d] = k;
        }
        ConvexSet::boxed(vec![f64::NEG_INFINITY; n], upper)
    }

    /// `j(v) = Σ F_i w_i (v_ν)_i⁺` over free Γ3 nodes.
    pub fn yield_functional(&self, yield_limit: &[f64]) -> Result<ConvexFunctional> {
        let w = self
            .gamma3_nodes
            .iter()
            .zip(&self.gamma3_weights)
            .map(|(&i, &w)| yield_limit[i] * w)
            .collect();
        ConvexFunctional::positive_part(self.normal_dofs.clone(), w)
    }

    /// Frictionless inequality for the given data (friction is ignored).
    pub fn problem(&self, loads: &ContactLoads) -> Result<VIProblem> {
        loads.validate(self.mesh.num_nodes())?;
        VIProblem::new(
            self.operator.clone(),
            self.yield_functional(&loads.yield_limit)?,
            self.contact_set(loads.k)?,
            self.load_vector(loads.f0, loads.f2),
        )
    }

    pub fn smallness(&self, loads: &ContactLoads) -> Smallness {
        let on_gamma3 = |v: &[f64]| self.gamma3_nodes.iter().map(|&i| v[i]).fold(0.0, f64::max);
        Smallness {
            d0: self.d0,
            mu_max: on_gamma3(&loads.friction),
            f_max: on_gamma3(&loads.yield_limit),
            m_f: self.data.material.m_f(),
        }
    }

    pub fn frictional_qvi(&self, loads: &ContactLoads) -> Result<FrictionQvi> {
        let coupling = self
            .gamma3_nodes
            .iter()
            .zip(&self.gamma3_weights)
            .map(|(&i, &w)| loads.friction[i] * loads.yield_limit[i] * w)
            .collect();
        Ok(FrictionQvi {
            base: self.problem(loads)?,
            normal: self.normal_dofs.clone(),
            tangential: self.tangential_dofs.clone(),
            coupling,
            smallness: self.smallness(loads),
        })
    }

    /// Nodal `(u_x, u_y)` including the clamped Γ1 nodes.
    pub fn displacements(&self, u: &[f64]) -> Vec<[f64; 2]> {
        let mut out = vec![[0.0; 2]; self.mesh.num_nodes()];
        for (blk, &i) in self.dof_nodes.iter().enumerate() {
            out[i] = [u[2 * blk], -u[2 * blk + 1]];
        }
        out
    }

    /// Free Γ3 nodes whose normal displacement reaches `k`.
    pub fn active_nodes(&self, u: &[f64], k: f64) -> Vec<usize> {
        self.gamma3_nodes
            .iter()
            .zip(&self.normal_dofs)
            .filter(|(_, &d)| u[d] >= k - 1e-12 * (1.0 + k.abs()))
            .map(|(&i, _)| i)
            .collect()
    }

    /// Columns `node, x, y, ux, uy, contact_active`.
    pub fn write_nodal_csv<W: Write>(&self, u: &[f64], k: f64, w: W) -> Result<()> {
        let disp = self.displacements(u);
        let active = self.active_nodes(u, k);
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["node", "x", "y", "ux", "uy", "contact_active"])?;
        for (i, p) in self.mesh.nodes().iter().enumerate() {
            wtr.write_record([
                i.to_string(),
                p[0].to_string(),
                p[1].to_string(),
                disp[i][0].to_string(),
                disp[i][1].to_string(),
                u8::from(active.contains(&i)).to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// `max{‖Fₙ − F‖_∞, ‖f0ₙ − f0‖ + ‖f2ₙ − f2‖, max μₙ · max Fₙ}` with
    /// `L²` norms of the constant load differences.
    pub fn perturbation_size(&self, loads: &ContactLoads) -> f64 {
        let base = &self.data.base;
        let on3 = |f: &dyn Fn(usize) -> f64| self.gamma3_nodes.iter().map(|&i| f(i)).fold(0.0, f64::max);
        let df = on3(&|i| (loads.yield_limit[i] - base.yield_limit[i]).abs());
        let area = self.data.lx * self.data.ly;
        let d0 = ((loads.f0[0] - base.f0[0]).powi(2) + (loads.f0[1] - base.f0[1]).powi(2)).sqrt() * area.sqrt();
        let d2 = ((loads.f2[0] - base.f2[0]).powi(2) + (loads.f2[1] - base.f2[1]).powi(2)).sqrt() * self.data.lx.sqrt();
        let fr = on3(&|i| loads.friction[i]) * on3(&|i| loads.yield_limit[i]);
        df.max(d0 + d2).max(fr)
    }
}

/// Frictional solve for perturbed data through the outer friction loop.
pub fn solve_contact_frictional(
    model: &ContactModel,
    loads: &ContactLoads,
    config: &SolveConfig,
    outer_tol: f64,
) -> Result<SolveReport> {
    if loads.k < model.data.base.k {
        return Err(Error::Invalid("perturbed layer thickness must not be below k".into()));
    }
    solve_qvi_friction(&model.frictional_qvi(loads)?, config, outer_tol)
}

/// `kₙ = k(1 + 1/n)`, `μₙ = μ₀/n`, `Fₙ = F(1 + 1/n)`, loads scaled by `(1 + 1/n)`.
pub fn harmonic_perturbation(base: &ContactLoads, mu0: f64, n: usize) -> ContactLoads {
    let t = 1.0 + 1.0 / n as f64;
    ContactLoads {
        yield_limit: base.yield_limit.iter().map(|f| f * t).collect(),
        friction: vec![mu0 / n as f64; base.friction.len()],
        f0: [base.f0[0] * t, base.f0[1] * t],
        f2: [base.f2[0] * t, base.f2[1] * t],
        k: base.k * t,
    }
}

/// Ladder indices `1, 2, 4, …, 2^last`.
pub fn dyadic_indices(last: u32) -> Vec<usize> {
    (0..=last).map(|p| 1usize << p).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactStudy {
    pub table: ConvergenceTable,
    /// Perturbation size per row (see [`ContactModel::perturbation_size`]).
    pub perturbation: Vec<f64>,
    /// Smallest `C` with `ε̂ₙ ≤ C · perturbationₙ` on every row.
    pub fitted_c: f64,
    pub outer_iterations: Vec<usize>,
}

/// Frictional solves along a ladder of perturbed data, measured against the
/// frictionless solution with the base data. The `parameter` column holds the
/// ladder index `n` and `witness` holds `|1 − k/kₙ|·‖uₙ‖`.
pub fn run_friction_ladder_study(
    model: &ContactModel,
    ladder: &[(usize, ContactLoads)],
    config: &StudyConfig,
    outer_tol: f64,
) -> Result<ContactStudy> {
    if ladder.len() < crate::studies::MIN_LADDER_LEN {
        return Err(Error::Invalid("contact ladder needs at least 4 rows".into()));
    }
    let base = model.problem(&model.data.base)?;
    let u = reference_solution(&base)?;
    let est = ResidualEstimator::with_reference(&base, u.clone(), config.probe_budget, config.seed)?;
    let k = model.data.base.k;
    let mut rows = Vec::new();
    let mut solutions = Vec::new();
    let mut perturbation = Vec::new();
    let mut outer = Vec::new();
    for (idx, (n, loads)) in ladder.iter().enumerate() {
        let size = model.perturbation_size(loads);
        let row = solve_contact_frictional(model, loads, &config.solve, outer_tol).and_then(|r| {
            let row = StudyRow {
                n: idx + 1,
                parameter: *n as f64,
                error: linalg::dist2(&r.u, &u),
                distance: base.distance(&r.u)?,
                eps_hat: est.estimate(&r.u, ResidualMode::OnePlusNorm)?,
                iterations: r.iterations,
                witness: (1.0 - k / loads.k).abs() * linalg::norm2(&r.u),
                status: "ok".into(),
            };
            Ok((row, r))
        });
        match row {
            Ok((row, r)) => {
                rows.push(row);
                outer.push(r.outer_iterations.unwrap_or(0));
                solutions.push(r.u);
            }
            Err(e) => {
                rows.push(StudyRow {
                    n: idx + 1,
                    parameter: *n as f64,
                    error: f64::NAN,
                    distance: f64::NAN,
                    eps_hat: f64::NAN,
                    iterations: 0,
                    witness: f64::NAN,
                    status: e.to_string(),
                });
                outer.push(0);
            }
        }
        perturbation.push(size);
    }
    let fitted_c = rows
        .iter()
        .zip(&perturbation)
        .filter(|(r, &p)| r.ok() && p > 0.0)
        .map(|(r, &p)| r.eps_hat / p)
        .fold(0.0, f64::max);
    let threshold = 1e-3 * linalg::norm2(&u);
    Ok(ContactStudy {
        table: ConvergenceTable {
            study: "contact".into(),
            rows,
            reference_u: u,
            solutions,
            threshold,
        },
        perturbation,
        fitted_c,
        outer_iterations: outer,
    })
}

/// Harmonic ladder over [`dyadic_indices`].
pub fn harmonic_ladder(base: &ContactLoads, mu0: f64, last: u32) -> Vec<(usize, ContactLoads)> {
    dyadic_indices(last)
        .into_iter()
        .map(|n| (n, harmonic_perturbation(base, mu0, n)))
        .collect()
}

/// Frictionless solve with the base data.
pub fn solve_contact(model: &ContactModel, config: &SolveConfig) -> Result<SolveReport> {
    solve_vi(&model.problem(&model.data.base)?, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn material_constants_hold_on_random_tensors() {
        let mat = ElasticMaterial::new(1.3, 0.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let e: [f64; 3] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let s = mat.stress(e);
            let ee = tensor_dot(e, e);
            assert!(tensor_dot(s, e) >= mat.m_f() * ee - 1e-12);
            assert!(tensor_dot(s, s).sqrt() <= mat.big_m_f() * ee.sqrt() + 1e-12);
        }
    }

    #[test]
    fn four_by_two_mesh_has_24_unknowns() {
        let model = assemble_model(&ContactProblemData::standard(4, 2).unwrap()).unwrap();
        assert_eq!(model.dim(), 24);
        assert_eq!(model.normal_dofs.len(), 4);
        assert!(model.d0 > 0.0);
        assert!(model.operator.m() > 0.0);
    }

    #[test]
    fn rigid_motion_free_stiffness_annihilates_nothing_but_zero() {
        // a rigid translation is not admissible once Γ1 is clamped, so the
        // energy of any nonzero field is positive
        let model = assemble_model(&ContactProblemData::standard(2, 1).unwrap()).unwrap();
        let u = vec![1.0; model.dim()];
        assert!(model.operator.apply(&crate::space::InnerProduct::Euclidean, &u).unwrap().iter().any(|&x| x != 0.0));
    }

    #[test]
    fn zero_loads_give_zero_displacement() {
        let mut data = ContactProblemData::standard(4, 2).unwrap();
        data.base.f0 = [0.0, 0.0];
        data.base.f2 = [0.0, 0.0];
        let model = assemble_model(&data).unwrap();
        let r = solve_contact(&model, &SolveConfig::auto()).unwrap();
        assert!(r.u.iter().all(|&x| x == 0.0));
        assert!(model.active_nodes(&r.u, data.base.k).is_empty());
    }

    fn tiny(mu: f64) -> (ContactModel, ContactLoads) {
        let mut data = ContactProblemData::standard(1, 1).unwrap();
        data.base.yield_limit = vec![1.0; 4];
        let model = assemble_model(&data).unwrap();
        let mut loads = data.base.clone();
        loads.friction = vec![mu; 4];
        (model, loads)
    }

    #[test]
    fn energy_is_below_random_feasible_fields() {
        let data = ContactProblemData::standard(4, 2).unwrap();
        let model = assemble_model(&data).unwrap();
        let p = model.problem(&data.base).unwrap();
        let u = solve_contact(&model, &SolveConfig::auto().with_tol(1e-12)).unwrap().u;
        let energy = |v: &[f64]| {
            let av = p.operator.apply(&crate::space::InnerProduct::Euclidean, v).unwrap();
            0.5 * linalg::dot(&av, v) + p.functional.eval(v) - linalg::dot(&p.rhs, v)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let eu = energy(&u);
        for _ in 0..100 {
            let v = p.set.sample(&mut rng, &u, 1.0);
            assert!(p.set.contains(&v));
            assert!(energy(&v) >= eu - 1e-10);
        }
    }

    #[test]
    fn zero_friction_is_bitwise_frictionless() {
        let data = ContactProblemData::standard(4, 2).unwrap();
        let model = assemble_model(&data).unwrap();
        let cfg = SolveConfig::auto();
        let plain = solve_contact(&model, &cfg).unwrap();
        let fr = solve_contact_frictional(&model, &data.base, &cfg, 1e-10).unwrap();
        assert_eq!(plain.u, fr.u);
    }

    #[test]
    fn friction_reduces_slip_at_active_nodes() {
        let data = ContactProblemData::standard(4, 2).unwrap();
        let model = assemble_model(&data).unwrap();
        let cfg = SolveConfig::auto().with_tol(1e-12);
        let plain = solve_contact(&model, &cfg).unwrap().u;
        let mut loads = data.base.clone();
        loads.friction = vec![0.05; loads.friction.len()];
        let fr = solve_contact_frictional(&model, &loads, &cfg, 1e-10).unwrap();
        let active = model.active_nodes(&plain, data.base.k);
        assert!(!active.is_empty());
        for (pos, &node) in model.gamma3_nodes.iter().enumerate() {
            if active.contains(&node) {
                let t = model.tangential_dofs[pos];
                assert!(fr.u[t].abs() < plain[t].abs(), "node {node}");
            }
        }
    }

    #[test]
    fn huge_friction_is_refused() {
        let data = ContactProblemData::standard(4, 2).unwrap();
        let model = assemble_model(&data).unwrap();
        let mut loads = data.base.clone();
        loads.friction = vec![1e6; loads.friction.len()];
        let err = solve_contact_frictional(&model, &loads, &SolveConfig::auto(), 1e-10).unwrap_err();
        assert!(matches!(err, Error::SmallnessViolated { .. }), "{err}");
    }

    #[test]
    fn tiny_instance_outer_loop_contracts_fast() {
        let (model, loads) = tiny(0.01);
        assert_eq!(model.dim(), 4);
        let r = solve_contact_frictional(&model, &loads, &SolveConfig::auto().with_tol(1e-12), 1e-10).unwrap();
        assert!(r.outer_iterations.unwrap() <= 10);
        assert!(r.outer_ratio.unwrap() < 0.1);
    }

    #[test]
    fn doubling_friction_moves_further_from_frictionless() {
        let cfg = SolveConfig::auto().with_tol(1e-13);
        let (model, _) = tiny(0.0);
        let plain = solve_contact(&model, &cfg).unwrap().u;
        let mut prev = 0.0;
        for mu in [0.01, 0.02, 0.04] {
            let (_, loads) = tiny(mu);
            assert!(model.smallness(&loads).holds());
            let u = solve_contact_frictional(&model, &loads, &cfg, 1e-12).unwrap().u;
            let gap = linalg::dist2(&u, &plain);
            assert!(gap > prev, "mu {mu}: {gap} vs {prev}");
            prev = gap;
        }
    }

    #[test]
    fn ladder_rows_respect_the_scaling_bound() {
        let data = ContactProblemData::standard(4, 2).unwrap();
        let model = assemble_model(&data).unwrap();
        let study = run_friction_ladder_study(&model, &harmonic_ladder(&data.base, 0.05, 6), &StudyConfig::default(), 1e-10).unwrap();
        for r in &study.table.rows {
            assert_eq!(r.status, "ok");
            assert!(r.distance <= r.witness + 1e-12);
        }
        assert!(study.fitted_c.is_finite() && study.fitted_c > 0.0);
    }

    #[test]
    fn thicker_layer_contains_base_set() {
        let data = ContactProblemData::standard(4, 2).unwrap();
        let model = assemble_model(&data).unwrap();
        let k = model.contact_set(data.base.k).unwrap();
        let kn = model.contact_set(data.base.k * 1.25).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let center = vec![data.base.k; model.dim()];
        for _ in 0..100 {
            let v = k.sample(&mut rng, &center, 2.0);
            assert!(k.contains(&v) && kn.contains(&v));
        }
    }

    #[test]
    fn smallness_guard_is_monotone_in_friction() {
        let data = ContactProblemData::standard(4, 2).unwrap();
        let model = assemble_model(&data).unwrap();
        let mut loads = data.base.clone();
        for mu in [1e-3, 0.01, 0.1, 0.2, 0.3, 1.0] {
            loads.friction = vec![mu; loads.friction.len()];
            if model.smallness(&loads).holds() {
                for t in [0.1, 0.5, 0.99] {
                    let mut scaled = loads.clone();
                    scaled.friction.iter_mut().for_each(|m| *m *= t);
                    assert!(model.smallness(&scaled).holds());
                }
            }
        }
    }

    #[test]
    fn constant_ladder_gives_zero_errors() {
        let data = ContactProblemData::standard(4, 2).unwrap();
        let model = assemble_model(&data).unwrap();
        let ladder: Vec<_> = (1..=4).map(|n| (n, data.base.clone())).collect();
        let mut cfg = StudyConfig::default();
        cfg.solve = SolveConfig::auto().with_tol(1e-13);
        let study = run_friction_ladder_study(&model, &ladder, &cfg, 1e-12).unwrap();
        for r in &study.table.rows {
            assert!(r.error < 1e-10, "{}", r.error);
            assert_eq!(r.witness, 0.0);
        }
    }
}
