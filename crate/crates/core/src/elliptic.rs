//! Poisson solvers (Dirichlet and Neumann), the gradient primitive and the
//! Helmholtz projection, all componentwise on forms.
//!
//! Operators are applied matrix-free. Every solve is symmetric positive
//! (semi)definite: Dirichlet rows become identity rows, Neumann problems use the
//! flux form with zero flux through the boundary.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::{codiff, ext_d, laplacian};
use crate::error::{Error, Result};
use crate::forms::{Form, Kind, VectorForm};
use crate::grid::Grid;
use crate::norms::trapezoid_weight;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ConjugateGradient,
    DirectSparse,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSolverConfig {
    pub method: Method,
    pub tol_rel: f64,
    pub max_iter: usize,
}

impl Default for LinearSolverConfig {
    fn default() -> Self {
        Self {
            method: Method::ConjugateGradient,
            tol_rel: 1e-10,
            max_iter: 20_000,
        }
    }
}

impl LinearSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_rel > 0.0) {
            return Err(Error::InvalidArgument("tol_rel must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outcome of a componentwise solve; worst case over components.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual: f64,
    /// Relative residual after every iteration of the slowest component.
    pub history: Vec<f64>,
}

impl SolveReport {
    fn merge(reports: Vec<SolveReport>) -> SolveReport {
        let mut out = SolveReport::default();
        for r in reports {
            if r.iterations >= out.iterations {
                out.history = r.history;
                out.iterations = r.iterations;
            }
            out.residual = out.residual.max(r.residual);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Closure {
    /// Free points see all neighbours; fixed points are identity rows.
    Dirichlet,
    /// Flux form with zero boundary flux, face weights from the trapezoid rule.
    NeumannWeighted,
    /// Flux form with unit face weights (the grid-graph Laplacian).
    NeumannFlux,
}

/// Negative stencil Laplacian as an SPD (or SPSD) operator on one component.
struct Operator<'a> {
    grid: &'a Grid,
    closure: Closure,
    fixed: Option<&'a [bool]>,
    inv_h2: Vec<f64>,
}

impl<'a> Operator<'a> {
    fn new(grid: &'a Grid, closure: Closure, fixed: Option<&'a [bool]>) -> Self {
        let inv_h2 = grid.spacing().iter().map(|h| 1.0 / (h * h)).collect();
        Self {
            grid,
            closure,
            fixed,
            inv_h2,
        }
    }

    #[inline]
    fn is_fixed(&self, p: usize) -> bool {
        self.fixed.is_some_and(|f| f[p])
    }

    /// Face weight of the edge leaving `p` along axis `a`.
    #[inline]
    fn weight(&self, p: usize, a: usize) -> f64 {
        match self.closure {
            Closure::NeumannWeighted => {
                let g = self.grid;
                let mut w = self.inv_h2[a];
                for b in 0..g.dim() {
                    if b == a {
                        continue;
                    }
                    let i = g.axis_index(p, b);
                    if i == 0 || i + 1 == g.shape()[b] {
                        w *= 0.5;
                    }
                }
                w
            }
            _ => self.inv_h2[a],
        }
    }

    /// Calls `f(q, c)` for every coupled neighbour `q` of `p` with weight `c`.
    #[inline]
    fn for_each_edge(&self, p: usize, mut f: impl FnMut(usize, f64)) {
        let g = self.grid;
        for a in 0..g.dim() {
            let s = g.strides()[a];
            let i = g.axis_index(p, a);
            let c = self.weight(p, a);
            if i > 0 {
                f(p - s, c);
            } else if self.closure == Closure::Dirichlet {
                f(usize::MAX, c);
            }
            if i + 1 < g.shape()[a] {
                f(p + s, c);
            } else if self.closure == Closure::Dirichlet {
                f(usize::MAX, c);
            }
        }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(p, o)| {
            if self.is_fixed(p) {
                *o = x[p];
                return;
            }
            let mut acc = 0.0;
            self.for_each_edge(p, |q, c| {
                acc += c * x[p];
                if q != usize::MAX && !self.is_fixed(q) {
                    acc -= c * x[q];
                }
            });
            *o = acc;
        });
    }

    fn singular(&self) -> bool {
        self.closure != Closure::Dirichlet
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Conjugate gradients with minimal-residual smoothing, so the reported
/// residual sequence is non-increasing.
fn cg(op: &Operator, b: &[f64], x0: Option<&[f64]>, cfg: &LinearSolverConfig) -> Result<(Vec<f64>, SolveReport)> {
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], SolveReport::default()));
    }
    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    if let Some(f) = op.fixed {
        for p in 0..n {
            if f[p] {
                x[p] = b[p];
            }
        }
    }
    let mut ax = vec![0.0; n];
    op.apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    if op.singular() {
        remove_mean(&mut r);
    }
    let mut y = x.clone();
    let mut s = r.clone();
    let mut snorm = dot(&s, &s).sqrt();
    let mut history = vec![snorm / bnorm];
    if snorm <= cfg.tol_rel * bnorm {
        return Ok((y, SolveReport { iterations: 0, residual: snorm / bnorm, history }));
    }
    let mut d = r.clone();
    let mut rr = dot(&r, &r);
    let mut ad = vec![0.0; n];
    let mut diff = vec![0.0; n];
    for it in 1..=cfg.max_iter {
        op.apply(&d, &mut ad);
        let dad = dot(&d, &ad);
        if !(dad > 0.0) {
            break;
        }
        let alpha = rr / dad;
        for p in 0..n {
            x[p] += alpha * d[p];
            r[p] -= alpha * ad[p];
        }
        if op.singular() {
            remove_mean(&mut r);
        }
        for p in 0..n {
            diff[p] = r[p] - s[p];
        }
        let dd = dot(&diff, &diff);
        if dd > 0.0 {
            let eta = -dot(&s, &diff) / dd;
            for p in 0..n {
                s[p] += eta * diff[p];
                y[p] += eta * (x[p] - y[p]);
            }
        }
        snorm = dot(&s, &s).sqrt();
        history.push(snorm / bnorm);
        if snorm <= cfg.tol_rel * bnorm {
            return Ok((y, SolveReport { iterations: it, residual: snorm / bnorm, history }));
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for p in 0..n {
            d[p] = r[p] + beta * d[p];
        }
    }
    Err(Error::SolverFailure {
        iterations: history.len() - 1,
        residual: snorm / bnorm,
    })
}

/// Banded Cholesky factorisation of the assembled operator; half bandwidth is
/// the stride of the slowest axis.
fn direct(op: &Operator, b: &[f64]) -> Result<(Vec<f64>, SolveReport)> {
    let g = op.grid;
    let n = b.len();
    let bw = g.strides()[0];
    // band[p][j] holds A[p][p - j].
    let mut band = vec![0.0; n * (bw + 1)];
    let pin = if op.singular() { Some(0usize) } else { None };
    for p in 0..n {
        if op.is_fixed(p) || pin == Some(p) {
            band[p * (bw + 1)] = 1.0;
            continue;
        }
        let mut diag = 0.0;
        op.for_each_edge(p, |q, c| {
            diag += c;
            if q != usize::MAX && q < p && !op.is_fixed(q) && pin != Some(q) {
                band[p * (bw + 1) + (p - q)] = -c;
            }
        });
        band[p * (bw + 1)] = diag;
    }
    for p in 0..n {
        let lo = p.saturating_sub(bw);
        for q in lo..=p {
            let mut sum = band[p * (bw + 1) + (p - q)];
            let klo = lo.max(q.saturating_sub(bw));
            for k in klo..q {
                sum -= band[p * (bw + 1) + (p - k)] * band[q * (bw + 1) + (q - k)];
            }
            if q == p {
                if !(sum > 0.0) {
                    return Err(Error::SolverFailure { iterations: 0, residual: f64::NAN });
                }
                band[p * (bw + 1)] = sum.sqrt();
            } else {
                band[p * (bw + 1) + (p - q)] = sum / band[q * (bw + 1)];
            }
        }
    }
    let mut rhs = b.to_vec();
    if let Some(p0) = pin {
        rhs[p0] = 0.0;
    }
    for p in 0..n {
        let lo = p.saturating_sub(bw);
        let mut sum = rhs[p];
        for k in lo..p {
            sum -= band[p * (bw + 1) + (p - k)] * rhs[k];
        }
        rhs[p] = sum / band[p * (bw + 1)];
    }
    for p in (0..n).rev() {
        let hi = (p + bw).min(n - 1);
        let mut sum = rhs[p];
        for k in p + 1..=hi {
            sum -= band[k * (bw + 1) + (k - p)] * rhs[k];
        }
        rhs[p] = sum / band[p * (bw + 1)];
    }
    let mut ax = vec![0.0; n];
    op.apply(&rhs, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    if op.singular() {
        remove_mean(&mut r);
    }
    let bnorm = dot(b, b).sqrt();
    let residual = if bnorm > 0.0 { dot(&r, &r).sqrt() / bnorm } else { 0.0 };
    Ok((rhs, SolveReport { iterations: 1, residual, history: vec![residual] }))
}

fn solve_one(op: &Operator, b: &[f64], x0: Option<&[f64]>, cfg: &LinearSolverConfig) -> Result<(Vec<f64>, SolveReport)> {
    match cfg.method {
        Method::ConjugateGradient => cg(op, b, x0, cfg),
        Method::DirectSparse => direct(op, b),
    }
}

/// Solves `Δ_h u = f` at free points with `u = g` at fixed points, component by
/// component. `fixed(c, p)` selects the fixed points of component `c`; it must
/// include every boundary point.
pub fn solve_dirichlet_masked<K: Kind>(
    f: &Form<K>,
    g: &Form<K>,
    fixed: impl Fn(usize, usize) -> bool + Sync,
    x0: Option<&Form<K>>,
    cfg: &LinearSolverConfig,
) -> Result<(Form<K>, SolveReport)> {
    cfg.validate()?;
    f.ensure_compatible(g)?;
    if let Some(x0) = x0 {
        f.ensure_compatible(x0)?;
    }
    let grid = f.grid();
    let npts = grid.len();
    let results: Vec<Result<(Vec<f64>, SolveReport)>> = (0..f.n_components())
        .into_par_iter()
        .map(|c| {
            let mask: Vec<bool> = (0..npts).map(|p| grid.on_boundary(p) || fixed(c, p)).collect();
            let op = Operator::new(grid, Closure::Dirichlet, Some(&mask));
            let gc = g.component(c);
            let fc = f.component(c);
            let st = grid.strides();
            let inv_h2: Vec<f64> = grid.spacing().iter().map(|h| 1.0 / (h * h)).collect();
            let mut b = vec![0.0; npts];
            for p in 0..npts {
                if mask[p] {
                    continue;
                }
                let mut v = -fc[p];
                for a in 0..grid.dim() {
                    for q in [p - st[a], p + st[a]] {
                        if mask[q] {
                            v += inv_h2[a] * gc[q];
                        }
                    }
                }
                b[p] = v;
            }
            let guess: Option<Vec<f64>> = x0.map(|x0| {
                let xc = x0.component(c);
                (0..npts).map(|p| if mask[p] { 0.0 } else { xc[p] }).collect()
            });
            let (mut x, rep) = solve_one(&op, &b, guess.as_deref(), cfg)?;
            for p in 0..npts {
                if mask[p] {
                    x[p] = gc[p];
                }
            }
            Ok((x, rep))
        })
        .collect();
    assemble(grid, f.degree(), npts, results)
}

fn assemble<K: Kind>(
    grid: &Grid,
    degree: usize,
    npts: usize,
    results: Vec<Result<(Vec<f64>, SolveReport)>>,
) -> Result<(Form<K>, SolveReport)> {
    let mut out = Form::<K>::zeros(grid, degree);
    let mut reports = Vec::with_capacity(results.len());
    for (c, r) in results.into_iter().enumerate() {
        let (x, rep) = r?;
        out.data_mut()[c * npts..(c + 1) * npts].copy_from_slice(&x);
        reports.push(rep);
    }
    Ok((out, SolveReport::merge(reports)))
}

/// `Δ_h u = f` in the interior, `u = g` on the boundary layer.
pub fn solve_poisson_dirichlet<K: Kind>(
    f: &Form<K>,
    g: &Form<K>,
    cfg: &LinearSolverConfig,
) -> Result<(Form<K>, SolveReport)> {
    solve_dirichlet_masked(f, g, |_, _| false, None, cfg)
}

/// Mean with respect to the trapezoid quadrature.
pub fn weighted_mean(grid: &Grid, v: &[f64]) -> f64 {
    let (mut s, mut w) = (0.0, 0.0);
    for (p, x) in v.iter().enumerate() {
        let m = trapezoid_weight(grid, p);
        s += m * x;
        w += m;
    }
    s / w
}

/// Zero-mean Neumann solve per component. With `target`, each component stops
/// once its residual 2-norm is below `target` (or `tol_rel`, whichever is tighter).
fn neumann<K: Kind>(
    rhs: &Form<K>,
    closure: Closure,
    target: Option<f64>,
    cfg: &LinearSolverConfig,
) -> Result<(Form<K>, SolveReport)> {
    cfg.validate()?;
    let grid = rhs.grid();
    let npts = grid.len();
    let results: Vec<Result<(Vec<f64>, SolveReport)>> = (0..rhs.n_components())
        .into_par_iter()
        .map(|c| {
            let op = Operator::new(grid, closure, None);
            let mut b: Vec<f64> = rhs.component(c).iter().map(|v| -v).collect();
            remove_mean(&mut b);
            let mut local = *cfg;
            if let Some(t) = target {
                let bnorm = dot(&b, &b).sqrt();
                if bnorm > 0.0 {
                    local.tol_rel = (t / bnorm).clamp(1e-15, cfg.tol_rel);
                }
            }
            let (mut x, rep) = solve_one(&op, &b, None, &local)?;
            let m = weighted_mean(grid, &x);
            x.iter_mut().for_each(|v| *v -= m);
            Ok((x, rep))
        })
        .collect();
    assemble(grid, rhs.degree(), npts, results)
}

/// `Δ_h u = f − mean(f)` with homogeneous Neumann rows and zero mean.
///
/// Boundary rows use the ghost-point reflection, which keeps second order.
pub fn solve_poisson_neumann_zero_mean<K: Kind>(
    f: &Form<K>,
    cfg: &LinearSolverConfig,
) -> Result<(Form<K>, SolveReport)> {
    let grid = f.grid();
    let mut rhs = f.clone();
    let npts = grid.len();
    for c in 0..f.n_components() {
        let comp = &mut rhs.data_mut()[c * npts..(c + 1) * npts];
        let m = weighted_mean(grid, comp);
        for (p, v) in comp.iter_mut().enumerate() {
            *v = trapezoid_weight(grid, p) * (*v - m);
        }
    }
    neumann(&rhs, Closure::NeumannWeighted, None, cfg)
}

/// Divergence of a 1-form read as edge fluxes: `f_l` at index `N−1` along
/// axis `l` is not an edge and contributes nothing.
pub fn flux_divergence(f: &VectorForm) -> Result<VectorForm> {
    if f.degree() != 1 {
        return Err(Error::Degree("flux divergence needs a 1-form".into()));
    }
    let grid = f.grid();
    let n = grid.dim();
    let npts = grid.len();
    let mut out = VectorForm::zeros(grid, 0);
    out.data_mut()
        .par_chunks_mut(npts)
        .enumerate()
        .for_each(|(mu, dst)| {
            for l in 0..n {
                let src = f.comp(mu, l);
                let s = grid.strides()[l];
                let last = grid.shape()[l] - 1;
                let ih = 1.0 / grid.spacing()[l];
                for p in 0..npts {
                    let i = grid.axis_index(p, l);
                    let out_flux = if i < last { src[p] } else { 0.0 };
                    let in_flux = if i > 0 { src[p - s] } else { 0.0 };
                    dst[p] += ih * (out_flux - in_flux);
                }
            }
        });
    Ok(out)
}

/// Max of `|v|` over edge values of a vector 1-form.
pub fn edge_max(v: &VectorForm) -> f64 {
    let grid = v.grid();
    let mut m: f64 = 0.0;
    for mu in 0..v.slots() {
        for l in 0..grid.dim() {
            for (p, x) in v.comp(mu, l).iter().enumerate() {
                if grid.axis_index(p, l) + 1 < grid.shape()[l] {
                    m = m.max(x.abs());
                }
            }
        }
    }
    m
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveReport {
    pub curl: f64,
    /// Max edge residual `|dΨ − f|`.
    pub residual: f64,
    pub solve: SolveReport,
}

/// Zero-mean `Ψ` with `ext_d Ψ = f` for curl-free `f`.
pub fn solve_grad_primitive(
    f: &VectorForm,
    curl_threshold: f64,
    cfg: &LinearSolverConfig,
) -> Result<(VectorForm, PrimitiveReport)> {
    if f.degree() != 1 {
        return Err(Error::Degree("gradient primitive needs a 1-form".into()));
    }
    let curl = ext_d(f)?.max_abs();
    if curl > curl_threshold {
        return Err(Error::Integrability {
            curl,
            threshold: curl_threshold,
        });
    }
    let (psi, solve) = neumann(&flux_divergence(f)?, Closure::NeumannFlux, None, cfg)?;
    let residual = edge_max(&ext_d(&psi)?.sub(f)?);
    Ok((psi, PrimitiveReport { curl, residual, solve }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionReport {
    /// `max |δa|` over interior rows, relative to `max |w|`.
    pub codiff_rel: f64,
    pub solve: SolveReport,
}

/// Splits `w = a + dφ` with `δa ≈ 0` on interior rows and zero-flux boundary rows for `φ`.
pub fn helmholtz_project(
    w: &VectorForm,
    cfg: &LinearSolverConfig,
) -> Result<(VectorForm, VectorForm, ProjectionReport)> {
    if w.degree() != 1 {
        return Err(Error::Degree("Helmholtz projection needs a 1-form".into()));
    }
    w.ensure_finite("Helmholtz input")?;
    // The flux residual is `−δa`.
    let scale = w.max_abs();
    let (phi, solve) = neumann(&flux_divergence(w)?, Closure::NeumannFlux, Some(cfg.tol_rel * scale), cfg)?;
    let a = w.sub(&ext_d(&phi)?)?;
    let codiff_rel = if scale > 0.0 {
        codiff(&a)?.masked_interior(1).max_abs() / scale
    } else {
        0.0
    };
    Ok((a, phi, ProjectionReport { codiff_rel, solve }))
}

/// Residual `Δ_h u − f` on interior rows.
pub fn poisson_residual<K: Kind>(u: &Form<K>, f: &Form<K>) -> Result<Form<K>> {
    Ok(laplacian(u).sub(f)?.masked_interior(1))
}
