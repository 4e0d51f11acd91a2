//! The ε-rescaled reduced RT iteration.
//!
//! A connection `Γ` is restricted to the box `q + ε·B` (with `B` the domain
//! box centred at the origin) and re-expressed as scalars on `B`, giving `Γ*`.
//! The physical connection on `B` is then `εΓ*`. Each step solves, in order,
//! for `a`, `Ψ`, `y` and `u`; on convergence `J = I + εu` and `B = εa`.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::{codiff, devectorize, ext_d, left_mul, vectorize};
use crate::elliptic::{
    helmholtz_project, solve_dirichlet_masked, solve_grad_primitive, LinearSolverConfig,
};
use crate::error::{Error, Result};
use crate::forms::{Connection, MatrixForm, VectorForm};
use crate::geometry::{self, Diagnostics};
use crate::grid::Grid;
use crate::norms::{lp_norm, w1p_norm};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub p: f64,
    pub max_iter: usize,
    pub tol_iter: f64,
    pub linear: LinearSolverConfig,
    pub adaptive_epsilon: bool,
    /// Smallest admissible `|det J|`.
    pub det_floor: f64,
    /// Largest admissible curl of the field handed to the gradient primitive.
    pub curl_threshold: f64,
    pub max_halvings: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            p: 4.0,
            max_iter: 60,
            tol_iter: 1e-8,
            linear: LinearSolverConfig::default(),
            adaptive_epsilon: true,
            det_floor: 1e-8,
            curl_threshold: 1e-6,
            max_halvings: 6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::InvalidArgument(format!("epsilon {} outside (0, 1]", self.epsilon)));
        }
        if !(self.p > n as f64) {
            return Err(Error::InvalidArgument(format!("p = {} must exceed n = {n}", self.p)));
        }
        if !(self.tol_iter > 0.0) {
            return Err(Error::InvalidArgument("tol_iter must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        self.linear.validate()
    }
}

/// One row of the iteration log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub du_w1p: f64,
    pub da_lp: f64,
    pub ratio: f64,
    pub lin_res_a: f64,
    pub lin_res_psi: f64,
    pub lin_res_y: f64,
    pub lin_res_u: f64,
}

pub const CSV_HEADER: &str = "k,du_w1p,da_lp,ratio,lin_res_a,lin_res_psi,lin_res_y,lin_res_u";

pub fn write_history_csv<W: Write>(history: &[IterationRecord], mut out: W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in history {
        writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.k, r.du_w1p, r.da_lp, r.ratio, r.lin_res_a, r.lin_res_psi, r.lin_res_y, r.lin_res_u
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct RTState {
    pub k: usize,
    pub u: MatrixForm,
    pub a: MatrixForm,
    pub psi: VectorForm,
    pub y: VectorForm,
    pub history: Vec<IterationRecord>,
    /// Max gap between `Ψ` and the Helmholtz potential in the last step.
    pub potential_gap: f64,
}

impl RTState {
    pub fn zero(grid: &Grid) -> Self {
        Self {
            k: 0,
            u: MatrixForm::zeros(grid, 0),
            a: MatrixForm::zeros(grid, 0),
            psi: VectorForm::zeros(grid, 0),
            y: VectorForm::zeros(grid, 0),
            history: Vec::new(),
            potential_gap: 0.0,
        }
    }
}

/// Where the reference box sits inside the original domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rescaling {
    pub q: Vec<f64>,
    pub epsilon: f64,
    /// True when the box was restricted exactly rather than interpolated.
    pub exact: bool,
}

impl Rescaling {
    /// Physical point of reference coordinate `x`.
    pub fn to_physical(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.q).map(|(x, q)| q + self.epsilon * x).collect()
    }
}

/// Restricts `Γ` to the ε-box around `q` and re-expresses it on the reference box.
pub fn rescale(gamma: &Connection, q: &[f64], epsilon: f64) -> Result<(Connection, Grid, Rescaling)> {
    let g = gamma.grid();
    let n = g.dim();
    if gamma.degree() != 1 {
        return Err(Error::Degree("rescale needs a connection (1-form)".into()));
    }
    if q.len() != n {
        return Err(Error::InvalidArgument(format!("point has {} coordinates, expected {n}", q.len())));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} outside (0, 1]")));
    }
    let c = g.center();
    let lo_ref: Vec<f64> = (0..n).map(|a| g.lo()[a] - c[a]).collect();
    let hi_ref: Vec<f64> = (0..n).map(|a| g.hi()[a] - c[a]).collect();
    let tol = 1e-9;
    for a in 0..n {
        let (lo, hi) = (q[a] + epsilon * lo_ref[a], q[a] + epsilon * hi_ref[a]);
        let slack = tol * (g.hi()[a] - g.lo()[a]);
        if lo < g.lo()[a] - slack || hi > g.hi()[a] + slack {
            return Err(Error::Domain(format!(
                "ε-box [{lo}, {hi}] leaves the domain along axis {a}"
            )));
        }
    }
    let mut shape = Vec::with_capacity(n);
    let mut exact = true;
    let mut offset = Vec::with_capacity(n);
    for a in 0..n {
        let cells = epsilon * (g.shape()[a] - 1) as f64;
        let m = cells.round().max(2.0);
        let start = (q[a] + epsilon * lo_ref[a] - g.lo()[a]) / g.spacing()[a];
        if (cells - m).abs() > 1e-9 || (start - start.round()).abs() > 1e-9 {
            exact = false;
        }
        shape.push(m as usize + 1);
        offset.push(start.round().max(0.0) as usize);
    }
    let sub = Grid::new(&shape, &lo_ref, &hi_ref)?;
    let scaling = Rescaling {
        q: q.to_vec(),
        epsilon,
        exact,
    };
    let star = if exact {
        let mut out = MatrixForm::zeros(&sub, 1);
        let npts = sub.len();
        for c in 0..out.n_components() {
            let src = gamma.component(c);
            let dst = &mut out.data_mut()[c * npts..(c + 1) * npts];
            for (p, v) in dst.iter_mut().enumerate() {
                let m = sub.multi_index(p);
                let idx: Vec<usize> = (0..n).map(|a| m[a] + offset[a]).collect();
                *v = src[g.index(&idx)];
            }
        }
        out
    } else {
        let stencils: Vec<Vec<(usize, f64)>> = (0..sub.len())
            .into_par_iter()
            .map(|p| g.interpolation_stencil(&scaling.to_physical(&sub.point(p))))
            .collect();
        let mut out = MatrixForm::zeros(&sub, 1);
        let npts = sub.len();
        for c in 0..out.n_components() {
            let src = gamma.component(c);
            let dst = &mut out.data_mut()[c * npts..(c + 1) * npts];
            for (p, v) in dst.iter_mut().enumerate() {
                *v = stencils[p].iter().map(|&(q, w)| w * src[q]).sum();
            }
        }
        out
    };
    Ok((star, sub, scaling))
}

/// Right-hand sides of one step.
#[derive(Clone, Debug)]
pub struct Sources {
    /// `δ((I + εu_k)·Γ*)` as a matrix 0-form.
    pub s: MatrixForm,
    /// Its vectorization `w_k`, whose exterior derivative is the source of the `a`-equation.
    pub w: VectorForm,
    /// `δ((I + εu_k)·Γ*) − a_next`.
    pub f_u: MatrixForm,
}

pub fn assemble_sources(
    u_k: &MatrixForm,
    a_next: &MatrixForm,
    gamma_star: &Connection,
    epsilon: f64,
) -> Result<Sources> {
    let grid = gamma_star.grid();
    let mut j = MatrixForm::identity(grid);
    j.axpy(epsilon, u_k)?;
    let s = codiff(&left_mul(&j, gamma_star)?)?;
    let w = vectorize(&s)?;
    let f_u = s.sub(a_next)?;
    Ok(Sources { s, w, f_u })
}

/// Points held fixed in the `u`-solve: the boundary plus, for matrix column
/// `ν`, the last two layers along axis `ν`, where `ext_d y` is one-sided.
pub fn u_fixed(grid: &Grid, component: usize, p: usize) -> bool {
    let nu = component % grid.dim();
    grid.axis_index(p, nu) + 2 >= grid.shape()[nu]
}

pub fn step(state: &RTState, gamma_star: &Connection, epsilon: f64, cfg: &SolverConfig) -> Result<RTState> {
    let grid = gamma_star.grid();
    let n = grid.dim();
    let zero = MatrixForm::zeros(grid, 0);

    let src = assemble_sources(&state.u, &zero, gamma_star, epsilon).map_err(|e| e.in_stage("sources"))?;
    let (a_vec, phi, proj) = helmholtz_project(&src.w, &cfg.linear).map_err(|e| e.in_stage("a"))?;
    let a = devectorize(&a_vec)?;

    let exact_part = src.w.sub(&a_vec)?;
    let threshold = cfg.curl_threshold * exact_part.max_abs().max(1.0);
    let (psi, prim) =
        solve_grad_primitive(&exact_part, threshold, &cfg.linear).map_err(|e| e.in_stage("psi"))?;
    let potential_gap = psi.sub(&phi)?.max_abs();

    let zero_v = VectorForm::zeros(grid, 0);
    let (y, rep_y) = solve_dirichlet_masked(&psi, &zero_v, |_, _| false, Some(&state.y), &cfg.linear)
        .map_err(|e| e.in_stage("y"))?;

    let f_u = src.s.sub(&a)?;
    let bc = devectorize(&ext_d(&y)?)?;
    let (u, rep_u) = solve_dirichlet_masked(&f_u, &bc, |c, p| u_fixed(grid, c, p), Some(&state.u), &cfg.linear)
        .map_err(|e| e.in_stage("u"))?;

    let du = w1p_norm(&u.sub(&state.u)?, cfg.p)?;
    let da = lp_norm(&a.sub(&state.a)?, cfg.p)?;
    let ratio = match state.history.last() {
        Some(prev) if prev.du_w1p > 0.0 => du / prev.du_w1p,
        Some(_) => 0.0,
        None => f64::NAN,
    };
    let mut history = state.history.clone();
    history.push(IterationRecord {
        k: state.k + 1,
        du_w1p: du,
        da_lp: da,
        ratio,
        lin_res_a: proj.solve.residual,
        lin_res_psi: prim.solve.residual,
        lin_res_y: rep_y.residual,
        lin_res_u: rep_u.residual,
    });
    debug_assert_eq!(u.dim(), n);
    Ok(RTState {
        k: state.k + 1,
        u,
        a,
        psi,
        y,
        history,
        potential_gap,
    })
}

/// Result of iterating the rescaled system for a fixed ε.
#[derive(Clone, Debug)]
pub struct Iteration {
    pub state: RTState,
    pub converged: bool,
    pub diverged: bool,
}

fn diverging(history: &[IterationRecord]) -> bool {
    let Some(last) = history.last() else { return false };
    if !last.du_w1p.is_finite() {
        return true;
    }
    let first = history[0].du_w1p;
    if first > 0.0 && last.du_w1p > 1e6 * first {
        return true;
    }
    history.len() >= 3 && history[history.len() - 2..].iter().all(|r| r.ratio > 1.0)
}

/// Iterates `step` on a fixed rescaled connection until the W^{1,p} update
/// falls below `tol_iter`, divergence is detected, or `max_iter` is reached.
pub fn iterate(gamma_star: &Connection, epsilon: f64, cfg: &SolverConfig) -> Result<Iteration> {
    cfg.validate(gamma_star.dim())?;
    gamma_star.ensure_finite("rescaled connection")?;
    let mut state = RTState::zero(gamma_star.grid());
    while state.k < cfg.max_iter {
        state = step(&state, gamma_star, epsilon, cfg)?;
        let last = state.history.last().unwrap();
        if last.du_w1p < cfg.tol_iter {
            return Ok(Iteration { state, converged: true, diverged: false });
        }
        if diverging(&state.history) {
            return Ok(Iteration { state, converged: false, diverged: true });
        }
    }
    Ok(Iteration { state, converged: false, diverged: false })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Inverse {
    pub jinv: MatrixForm,
    pub min_det: f64,
    /// `max |J·J⁻¹ − I|` over points and entries.
    pub max_error: f64,
}

/// Pointwise inverse of a matrix 0-form.
pub fn invert_jacobian(j: &MatrixForm, det_floor: f64) -> Result<Inverse> {
    if j.degree() != 0 {
        return Err(Error::Degree("invert_jacobian needs a 0-form".into()));
    }
    let grid = j.grid();
    let npts = grid.len();
    let inverted: Vec<std::result::Result<(DMatrix<f64>, f64, f64), (usize, f64)>> = (0..npts)
        .into_par_iter()
        .map(|p| {
            let m = j.matrix_at(0, p);
            let det = m.determinant();
            if !(det.abs() > det_floor) {
                return Err((p, det));
            }
            let inv = m.clone().try_inverse().ok_or((p, det))?;
            let err = (&m * &inv - DMatrix::<f64>::identity(m.nrows(), m.ncols())).abs().max();
            Ok((inv, det.abs(), err))
        })
        .collect();
    let mut jinv = MatrixForm::zeros(grid, 0);
    let mut min_det = f64::INFINITY;
    let mut max_error: f64 = 0.0;
    for (p, r) in inverted.into_iter().enumerate() {
        match r {
            Ok((inv, det, err)) => {
                jinv.set_matrix(0, p, &inv);
                min_det = min_det.min(det);
                max_error = max_error.max(err);
            }
            Err((index, det)) => return Err(Error::SingularJacobian { index, det }),
        }
    }
    Ok(Inverse { jinv, min_det, max_error })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CurlReport {
    pub lp: f64,
    pub max: f64,
    /// `‖J⃗ − d(x + εy)‖_{L^p}` when a coordinate map is supplied.
    pub map_error: Option<f64>,
}

/// Integrability residual `d J⃗` of a Jacobian field.
pub fn check_curl(j: &MatrixForm, map: Option<(&VectorForm, f64)>, p: f64) -> Result<CurlReport> {
    let jv = vectorize(j)?;
    let curl = ext_d(&jv)?;
    let map_error = match map {
        Some((y, eps)) => {
            let mut x = VectorForm::coordinates(j.grid());
            x.axpy(eps, y)?;
            Some(lp_norm(&jv.sub(&ext_d(&x)?)?, p)?)
        }
        None => None,
    };
    Ok(CurlReport {
        lp: lp_norm(&curl, p)?,
        max: curl.max_abs(),
        map_error,
    })
}

#[derive(Clone, Debug)]
pub struct RTSolution {
    pub j: MatrixForm,
    pub jinv: MatrixForm,
    pub b: MatrixForm,
    pub y: VectorForm,
    /// Rescaled input `Γ*`; the physical connection on the reference box is `ε Γ*`.
    pub gamma_star: Connection,
    pub rescaling: Rescaling,
    pub converged: bool,
    pub iterations: usize,
    pub restarts: usize,
    pub history: Vec<IterationRecord>,
    pub inverse: Inverse,
    pub curl: CurlReport,
    pub potential_gap: f64,
    pub diagnostics: Diagnostics,
}

impl RTSolution {
    pub fn epsilon(&self) -> f64 {
        self.rescaling.epsilon
    }

    /// The physical connection `εΓ*` on the reference box.
    pub fn gamma(&self) -> Connection {
        self.gamma_star.scale(self.rescaling.epsilon)
    }
}

/// Assembles `J`, `J⁻¹`, `B` and the diagnostics from a finished iteration.
pub fn finish(
    gamma_star: Connection,
    rescaling: Rescaling,
    it: Iteration,
    restarts: usize,
    cfg: &SolverConfig,
) -> Result<RTSolution> {
    let eps = rescaling.epsilon;
    let grid = gamma_star.grid().clone();
    let mut j = MatrixForm::identity(&grid);
    j.axpy(eps, &it.state.u)?;
    let b = it.state.a.scale(eps);
    let inverse = invert_jacobian(&j, cfg.det_floor)?;
    let curl = check_curl(&j, Some((&it.state.y, eps)), cfg.p)?;
    let gamma = gamma_star.scale(eps);
    let gf = geometry::gauge_fields(&gamma, &j, &inverse.jinv, &b)?;
    let mut sol = RTSolution {
        jinv: inverse.jinv.clone(),
        j,
        b,
        y: it.state.y,
        gamma_star,
        rescaling,
        converged: it.converged,
        iterations: it.state.k,
        restarts,
        history: it.state.history,
        inverse,
        curl,
        potential_gap: it.state.potential_gap,
        diagnostics: Diagnostics::default(),
    };
    sol.diagnostics = geometry::rt_residuals(&gamma, &sol, &gf, cfg.p)?;
    Ok(sol)
}

/// Rescales at `q`, iterates, and assembles the solution; halves ε on divergence.
pub fn run(gamma: &Connection, q: &[f64], cfg: &SolverConfig) -> Result<RTSolution> {
    cfg.validate(gamma.dim())?;
    gamma.ensure_finite("connection")?;
    let mut eps = cfg.epsilon;
    let mut restarts = 0;
    let mut ratios = Vec::new();
    loop {
        let (star, _, rescaling) = rescale(gamma, q, eps)?;
        let it = iterate(&star, eps, cfg)?;
        if !it.diverged {
            return finish(star, rescaling, it, restarts, cfg);
        }
        ratios.extend(it.state.history.iter().map(|r| r.ratio));
        if !cfg.adaptive_epsilon || restarts >= cfg.max_halvings {
            return Err(Error::NonConvergence {
                restarts,
                ratios,
                history: it.state.history,
            });
        }
        restarts += 1;
        eps *= 0.5;
    }
}

/// Runs the rescaled system on a connection already living on the reference box.
pub fn run_rescaled(gamma_star: &Connection, epsilon: f64, cfg: &SolverConfig) -> Result<RTSolution> {
    let it = iterate(gamma_star, epsilon, cfg)?;
    if it.diverged {
        return Err(Error::NonConvergence {
            restarts: 0,
            ratios: it.state.history.iter().map(|r| r.ratio).collect(),
            history: it.state.history,
        });
    }
    let rescaling = Rescaling {
        q: gamma_star.grid().center(),
        epsilon,
        exact: true,
    };
    finish(gamma_star.clone(), rescaling, it, 0, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let mut c = SolverConfig::default();
        assert!(c.validate(2).is_ok());
        c.p = 2.0;
        assert!(c.validate(2).is_err());
        c.p = 4.0;
        c.epsilon = 1.5;
        assert!(c.validate(2).is_err());
    }

    #[test]
    fn csv_header_is_stable() {
        let mut buf = Vec::new();
        write_history_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim(), CSV_HEADER);
    }

    #[test]
    fn identity_inverts_to_identity() {
        let g = Grid::unit(3, 4).unwrap();
        let inv = invert_jacobian(&MatrixForm::identity(&g), 1e-8).unwrap();
        assert_eq!(inv.jinv, MatrixForm::identity(&g));
        assert_eq!(inv.min_det, 1.0);
        assert!(invert_jacobian(&MatrixForm::zeros(&g, 0), 1e-8).is_err());
    }
}
