//! P1 discretization of the stationary heat problem
//! `−Δu = g` in Ω, `u = 0` on Γ1, `−∂u/∂ν = q` on Γ2, and on Γ3 either the
//! prescribed temperature `u = b` or the transfer condition
//! `−∂u/∂ν = (u − b)/λ`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::mesh::{BoundaryTag, Mesh, SideTags};
use crate::functional::ConvexFunctional;
use crate::linalg::Matrix;
use crate::operator::{MonotoneOperator, PenaltyOperator};
use crate::problem::VIProblem;
use crate::sets::ConvexSet;
use crate::solver::{solve_penalized, solve_vi, SolveConfig, SolveReport};
use crate::studies::{run_penalty_study, ConvergenceTable, StudyConfig, StudyLadder};

#[derive(Clone, Debug, PartialEq)]
pub struct HeatModel {
    pub mesh: Mesh,
    pub g: Vec<f64>,
    pub q: Vec<f64>,
    pub b: Vec<f64>,
    /// Mesh node of each unknown (Γ1 nodes are eliminated).
    pub dof_nodes: Vec<usize>,
    pub stiffness: Matrix,
    pub load: Vec<f64>,
    /// Unknowns on Γ3, with their lumped boundary weights and targets.
    pub gamma3_dofs: Vec<usize>,
    pub gamma3_weights: Vec<f64>,
    pub gamma3_targets: Vec<f64>,
}

/// Assembles stiffness, load and Γ3 boundary data from nodal `g`, `q`, `b`.
pub fn assemble_heat(mesh: &Mesh, g: &[f64], q: &[f64], b: &[f64]) -> Result<HeatModel> {
    let nn = mesh.num_nodes();
    for (name, v) in [("g", g), ("q", q), ("b", b)] {
        if v.len() != nn {
            return Err(Error::Invalid(format!("{name} has {} values for {nn} nodes", v.len())));
        }
        if let Some(k) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(k));
        }
    }
    let mut dof_of = vec![None; nn];
    let mut dof_nodes = Vec::new();
    for i in 0..nn {
        if mesh.node_tag(i) != Some(BoundaryTag::Gamma1) {
            dof_of[i] = Some(dof_nodes.len());
            dof_nodes.push(i);
        }
    }
    let n = dof_nodes.len();
    if n == 0 {
        return Err(Error::Mesh("no unknowns left after eliminating Γ1".into()));
    }

    let mut triplets = Vec::new();
    let mut load = vec![0.0; n];
    let d1 = (mesh.dim() + 1) as f64;
    for (e, el) in mesh.elements().iter().enumerate() {
        let area = mesh.measure(e);
        let grads = mesh.basis_gradients(e);
        let g_mid = el.iter().map(|&i| g[i]).sum::<f64>() / d1;
        for (a, &ia) in el.iter().enumerate() {
            let Some(da) = dof_of[ia] else { continue };
            load[da] += g_mid * area / d1;
            for (c, &ic) in el.iter().enumerate() {
                if let Some(dc) = dof_of[ic] {
                    let k = area * (grads[a][0] * grads[c][0] + grads[a][1] * grads[c][1]);
                    triplets.push((da, dc, k));
                }
            }
        }
    }
    for f in mesh.boundary().iter().filter(|f| f.tag == BoundaryTag::Gamma2) {
        let len = f.nodes.len() as f64;
        let q_mid = f.nodes.iter().map(|&i| q[i]).sum::<f64>() / len;
        let share = mesh.facet_measure(f) / len;
        for &i in &f.nodes {
            if let Some(d) = dof_of[i] {
                load[d] -= q_mid * share;
            }
        }
    }
    let w3 = mesh.lumped_boundary_mass(BoundaryTag::Gamma3);
    let mut gamma3_dofs = Vec::new();
    let mut gamma3_weights = Vec::new();
    let mut gamma3_targets = Vec::new();
    for (d, &i) in dof_nodes.iter().enumerate() {
        if mesh.node_tag(i) == Some(BoundaryTag::Gamma3) {
            gamma3_dofs.push(d);
            gamma3_weights.push(w3[i]);
            gamma3_targets.push(b[i]);
        }
    }
    Ok(HeatModel {
        mesh: mesh.clone(),
        g: g.to_vec(),
        q: q.to_vec(),
        b: b.to_vec(),
        dof_nodes,
        stiffness: Matrix::from_triplets(n, n, &triplets),
        load,
        gamma3_dofs,
        gamma3_weights,
        gamma3_targets,
    })
}

/// Assembles with spatially constant data.
pub fn assemble_heat_uniform(mesh: &Mesh, g: f64, q: f64, b: f64) -> Result<HeatModel> {
    let nn = mesh.num_nodes();
    assemble_heat(mesh, &vec![g; nn], &vec![q; nn], &vec![b; nn])
}

/// Unit interval with Γ1 = {0} and Γ3 = {1}.
pub fn unit_interval(nx: usize) -> Result<Mesh> {
    Mesh::interval(1.0, nx, BoundaryTag::Gamma1, BoundaryTag::Gamma3)
}

/// Unit square with Γ1 the left side, Γ3 the right side, Γ2 top and bottom.
pub fn unit_square(nx: usize, ny: usize) -> Result<Mesh> {
    Mesh::rectangle(
        1.0,
        1.0,
        nx,
        ny,
        SideTags {
            left: BoundaryTag::Gamma1,
            right: BoundaryTag::Gamma3,
            bottom: BoundaryTag::Gamma2,
            top: BoundaryTag::Gamma2,
        },
    )
}

impl HeatModel {
    pub fn dim(&self) -> usize {
        self.dof_nodes.len()
    }

    pub fn operator(&self) -> Result<MonotoneOperator> {
        MonotoneOperator::linear(self.stiffness.clone())
    }

    /// Prescribed temperature on Γ3 as an affine-slice constraint.
    pub fn constrained_problem(&self) -> Result<VIProblem> {
        VIProblem::new(
            self.operator()?,
            ConvexFunctional::Zero,
            ConvexSet::affine_slice(self.gamma3_dofs.clone(), self.gamma3_targets.clone())?,
            self.load.clone(),
        )
    }

    /// `(Gu)_i = w_i(u_i − b_i)` on Γ3 unknowns.
    pub fn penalty(&self) -> Result<PenaltyOperator> {
        PenaltyOperator::boundary_mass(
            self.gamma3_dofs.clone(),
            self.gamma3_targets.clone(),
            self.gamma3_weights.clone(),
        )
    }

    pub fn solve_constrained(&self, config: &SolveConfig) -> Result<SolveReport> {
        solve_vi(&self.constrained_problem()?, config)
    }

    pub fn solve_penalized(&self, lambda: f64, config: &SolveConfig) -> Result<SolveReport> {
        solve_penalized(&self.constrained_problem()?, &self.penalty()?, lambda, config)
    }

    /// Nodal values including the eliminated Γ1 zeros.
    pub fn nodal(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.mesh.num_nodes()];
        for (d, &i) in self.dof_nodes.iter().enumerate() {
            out[i] = u[d];
        }
        out
    }

    /// Mean of `u` over the Γ3 unknowns.
    pub fn gamma3_mean(&self, u: &[f64]) -> f64 {
        if self.gamma3_dofs.is_empty() {
            return f64::NAN;
        }
        self.gamma3_dofs.iter().map(|&d| u[d]).sum::<f64>() / self.gamma3_dofs.len() as f64
    }

    /// `sqrt(∫|∇u|²)`.
    pub fn energy_norm(&self, u: &[f64]) -> f64 {
        crate::linalg::dot(&self.stiffness.mul_vec(u), u).max(0.0).sqrt()
    }

    /// Columns `node_id, x, y, u`.
    pub fn write_nodal_csv<W: Write>(&self, u: &[f64], w: W) -> Result<()> {
        let vals = self.nodal(u);
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["node_id", "x", "y", "u"])?;
        for (i, p) in self.mesh.nodes().iter().enumerate() {
            wtr.write_record([i.to_string(), p[0].to_string(), p[1].to_string(), vals[i].to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `λₙ = 10⁻ⁿ` for `n = 0..=8`.
pub fn default_heat_lambdas() -> Vec<f64> {
    (0..=8).map(|n| 10f64.powi(-n)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatStudy {
    pub table: ConvergenceTable,
    /// Mean Γ3 value of each penalized solution.
    pub traces: Vec<f64>,
}

impl HeatStudy {
    /// Convergence table with an extra `trace` column.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        wtr.write_record([
            "n", "parameter", "error", "distance", "eps_hat", "iterations", "witness", "status", "trace",
        ])?;
        for (r, t) in self.table.rows.iter().zip(&self.traces) {
            wtr.write_record([
                r.n.to_string(),
                r.parameter.to_string(),
                r.error.to_string(),
                r.distance.to_string(),
                r.eps_hat.to_string(),
                r.iterations.to_string(),
                r.witness.to_string(),
                r.status.clone(),
                t.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Penalized solves along a decreasing ladder ending at or below 1e−4,
/// measured against the constrained solution.
pub fn run_heat_penalty_study(model: &HeatModel, lambdas: &[f64], config: &StudyConfig) -> Result<HeatStudy> {
    if lambdas.last().is_none_or(|&l| l > 1e-4) {
        return Err(Error::Invalid("heat ladder must reach λ ≤ 1e−4".into()));
    }
    let ladder = StudyLadder::penalty(model.constrained_problem()?, model.penalty()?, lambdas.to_vec())?;
    let mut table = run_penalty_study(&ladder, config)?;
    table.study = "heat".into();
    let mut traces = Vec::with_capacity(table.rows.len());
    let mut sol = table.solutions.iter();
    for r in &table.rows {
        traces.push(if r.ok() {
            sol.next().map_or(f64::NAN, |u| model.gamma3_mean(u))
        } else {
            f64::NAN
        });
    }
    Ok(HeatStudy { table, traces })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SpdFactor;

    #[test]
    fn linear_solution_is_reproduced_in_one_dimension() {
        let m = unit_interval(2).unwrap();
        let model = assemble_heat_uniform(&m, 0.0, 0.0, 1.0).unwrap();
        let r = model.solve_constrained(&SolveConfig::auto()).unwrap();
        let nodal = model.nodal(&r.u);
        for (p, v) in m.nodes().iter().zip(&nodal) {
            assert!((v - p[0]).abs() <= 1e-10);
        }
    }

    #[test]
    fn zero_data_gives_zero() {
        let model = assemble_heat_uniform(&unit_square(3, 3).unwrap(), 0.0, 0.0, 0.0).unwrap();
        let r = model.solve_constrained(&SolveConfig::auto()).unwrap();
        assert!(r.u.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn patch_test_on_the_square() {
        let m = unit_square(5, 3).unwrap();
        let b: Vec<f64> = m.nodes().iter().map(|p| p[0]).collect();
        let nn = m.num_nodes();
        let model = assemble_heat(&m, &vec![0.0; nn], &vec![0.0; nn], &b).unwrap();
        let r = model.solve_constrained(&SolveConfig::auto()).unwrap();
        for (p, v) in m.nodes().iter().zip(model.nodal(&r.u)) {
            assert!((v - p[0]).abs() <= 1e-9, "{p:?}: {v}");
        }
    }

    #[test]
    fn penalized_trace_matches_ode_closed_form() {
        let model = assemble_heat_uniform(&unit_interval(64).unwrap(), 2.0, 0.0, 0.0).unwrap();
        for lambda in [1.0, 0.1, 0.01] {
            let r = model.solve_penalized(lambda, &SolveConfig::auto()).unwrap();
            let trace = model.gamma3_mean(&r.u);
            assert!((trace - lambda / (1.0 + lambda)).abs() <= 2e-3, "λ={lambda}: {trace}");
        }
        // direct solve of (K + W/λ)u = f as an independent check
        let lambda = 0.1;
        let n = model.dim();
        let mut k = model.stiffness.to_dense();
        for (&d, &w) in model.gamma3_dofs.iter().zip(&model.gamma3_weights) {
            k[(d, d)] += w / lambda;
        }
        let u = SpdFactor::new(&Matrix::from_dense(&k)).unwrap().solve(&model.load);
        let r = model.solve_penalized(lambda, &SolveConfig::auto()).unwrap();
        assert!((0..n).all(|i| (u[i] - r.u[i]).abs() <= 1e-8));
    }

    #[test]
    fn maximum_principle_in_one_dimension() {
        let model = assemble_heat_uniform(&unit_interval(16).unwrap(), 1.0, 0.0, 0.2).unwrap();
        let r = model.solve_constrained(&SolveConfig::auto()).unwrap();
        assert!(r.u.iter().all(|&x| x >= -1e-12));
    }

    #[test]
    fn warm_started_ladder_keeps_residuals_at_solver_level() {
        let model = assemble_heat_uniform(&unit_interval(64).unwrap(), 2.0, 0.0, 0.0).unwrap();
        let study = run_heat_penalty_study(&model, &default_heat_lambdas(), &StudyConfig::default()).unwrap();
        for r in &study.table.rows {
            assert!(r.eps_hat < 1e-8, "row {}: {}", r.n, r.eps_hat);
        }
        assert!((study.traces[1] - 0.1 / 1.1).abs() < 2e-3);
    }

    #[test]
    fn coarse_square_energy_is_close_to_fine_reference() {
        let cfg = SolveConfig::auto().with_tol(1e-12);
        let energy = |n: usize| {
            let model = assemble_heat_uniform(&unit_square(n, n).unwrap(), 1.0, 0.0, 0.0).unwrap();
            let u = model.solve_constrained(&cfg).unwrap().u;
            model.energy_norm(&u)
        };
        let (coarse, fine) = (energy(4), energy(32));
        assert!((coarse - fine).abs() <= 0.05 * fine, "{coarse} vs {fine}");
    }

    #[test]
    fn matching_target_makes_the_penalty_inactive() {
        let mesh = unit_square(6, 4).unwrap();
        let free = assemble_heat_uniform(&mesh, 1.0, 0.3, 0.0).unwrap();
        let whole = free.constrained_problem().unwrap().with_set(ConvexSet::whole_space()).unwrap();
        let w = solve_vi(&whole, &SolveConfig::auto().with_tol(1e-13)).unwrap().u;
        let b = free.nodal(&w);
        let n = mesh.num_nodes();
        let model = assemble_heat(&mesh, &vec![1.0; n], &vec![0.3; n], &b).unwrap();
        let p = model.constrained_problem().unwrap();
        let g = model.penalty().unwrap();
        assert!(g.apply(p.ip(), &w).unwrap().iter().all(|&x| x == 0.0));
        for lambda in [1.0, 1e-2, 1e-4] {
            let u = model.solve_penalized(lambda, &SolveConfig::auto().with_tol(1e-13)).unwrap().u;
            assert!(crate::linalg::dist2(&u, &w) < 1e-9, "λ={lambda}");
        }
    }

    #[test]
    fn penalty_vanishes_exactly_on_the_slice() {
        let model = assemble_heat_uniform(&unit_square(3, 3).unwrap(), 1.0, 0.0, 0.4).unwrap();
        let p = model.constrained_problem().unwrap();
        let g = model.penalty().unwrap();
        let mut v = vec![0.7; model.dim()];
        for &d in &model.gamma3_dofs {
            v[d] = 0.4;
        }
        assert!(g.apply(p.ip(), &v).unwrap().iter().all(|&x| x == 0.0));
        v[model.gamma3_dofs[0]] += 1e-9;
        assert!(g.apply(p.ip(), &v).unwrap().iter().any(|&x| x != 0.0));
    }

    #[test]
    fn constrained_energy_beats_feasible_probes() {
        use rand::SeedableRng;
        let model = assemble_heat_uniform(&unit_square(5, 4).unwrap(), 1.5, -0.2, 0.3).unwrap();
        let p = model.constrained_problem().unwrap();
        let u = model.solve_constrained(&SolveConfig::auto().with_tol(1e-12)).unwrap().u;
        let eu = p.energy(&u).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let v = p.set.sample(&mut rng, &u, 0.5);
            assert!(p.set.contains(&v));
            assert!(p.energy(&v).unwrap() >= eu - 1e-12);
        }
    }
}
