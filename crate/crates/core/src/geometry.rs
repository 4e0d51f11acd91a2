//! Curvature, connection transformation laws, gauge fields, residual
//! diagnostics and locally inertial frames.
//!
//! Index convention: a connection stores `Γ^μ_{ν i}` as matrix entry `(μ, ν)`
//! with form index `i`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::{
    codiff, ext_d, laplacian, left_mul, mat_inner, right_mul, transform_index, vec_div, vectorize, wedge,
};
use crate::error::{Error, Result};
use crate::forms::{Connection, Form, Kind, MatrixForm, VectorForm};
use crate::grid::Grid;
use crate::multi::Table;
use crate::norms::{lp_norm_in, slope, w1p_norm_in, Region};
use crate::rt::{invert_jacobian, RTSolution};

/// Interior margin used for residuals built from one or two difference operators.
pub const RESIDUAL_MARGIN: usize = 2;
/// Central fraction of the box on which the smoothing identities are measured.
/// One-sided boundary rows leave an O(1) layer a few points wide.
pub const DIAGNOSTIC_WINDOW: f64 = 0.5;

/// `Riem(Γ) = dΓ + Γ ∧ Γ`.
pub fn riemann(gamma: &Connection) -> Result<MatrixForm> {
    degree_one(gamma)?;
    ext_d(gamma)?.add(&wedge(gamma, gamma)?)
}

/// `Γ̃_J = Γ − J⁻¹ dJ`.
pub fn gamma_tilde(gamma: &Connection, j: &MatrixForm, jinv: &MatrixForm) -> Result<Connection> {
    degree_one(gamma)?;
    gamma.sub(&left_mul(jinv, &ext_d(j)?)?)
}

/// `(Γ_y)^γ_{αβ} = J^γ_k (J⁻¹)^i_α (J⁻¹)^j_β Γ̃^k_{ij}`, kept as a function of `x`.
pub fn transform_connection(gt: &Connection, j: &MatrixForm, jinv: &MatrixForm) -> Result<Connection> {
    degree_one(gt)?;
    transform_index(&right_mul(&left_mul(j, gt)?, jinv)?, jinv)
}

/// Pullback through a map with Jacobian `K = ∂Φ/∂x`, given `Γ̂` already sampled at `Φ(x)`:
/// `Γ′ = K⁻¹ dK + K⁻¹ Γ̂ K K`.
pub fn pullback_sampled(gamma_hat: &Connection, k: &MatrixForm, det_floor: f64) -> Result<Connection> {
    degree_one(gamma_hat)?;
    let kinv = invert_jacobian(k, det_floor)?.jinv;
    let homogeneous = transform_index(&right_mul(&left_mul(&kinv, gamma_hat)?, k)?, k)?;
    left_mul(&kinv, &ext_d(k)?)?.add(&homogeneous)
}

/// A coordinate map `x ↦ Φ(x)`.
pub trait CoordinateMap: Sync {
    fn eval(&self, x: &[f64]) -> Vec<f64>;
}

impl<F: Fn(&[f64]) -> Vec<f64> + Sync> CoordinateMap for F {
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        self(x)
    }
}

/// Samples `Φ` on `grid` as a vector 0-form.
pub fn sample_map(map: &dyn CoordinateMap, grid: &Grid) -> VectorForm {
    let pts: Vec<Vec<f64>> = (0..grid.len()).into_par_iter().map(|p| map.eval(&grid.point(p))).collect();
    let mut out = VectorForm::zeros(grid, 0);
    for mu in 0..grid.dim() {
        let dst = out.comp_mut(mu, 0);
        for (p, v) in dst.iter_mut().enumerate() {
            *v = pts[p][mu];
        }
    }
    out
}

/// Discrete Jacobian `K^μ_ν = D+_ν Φ^μ` of a sampled map.
pub fn discrete_jacobian(phi: &VectorForm) -> Result<MatrixForm> {
    crate::calculus::devectorize(&ext_d(phi)?)
}

/// Samples a form at the image points `Φ(x)` by multilinear interpolation.
pub fn sample_at<K: Kind>(field: &Form<K>, phi: &VectorForm) -> Result<Form<K>> {
    let grid = phi.grid();
    let n = grid.dim();
    let npts = grid.len();
    let stencils: Vec<Vec<(usize, f64)>> = (0..npts)
        .into_par_iter()
        .map(|p| {
            let x: Vec<f64> = (0..n).map(|mu| phi.get(mu, 0, p)).collect();
            field.grid().interpolation_stencil(&x)
        })
        .collect();
    for p in 0..npts {
        let x: Vec<f64> = (0..n).map(|mu| phi.get(mu, 0, p)).collect();
        if !field.grid().contains(&x) {
            return Err(Error::Domain(format!("map image {x:?} leaves the field's domain")));
        }
    }
    let mut out = Form::<K>::zeros(grid, field.degree());
    out.data_mut()
        .par_chunks_mut(npts)
        .enumerate()
        .for_each(|(c, dst)| {
            let src = field.component(c);
            for (p, v) in dst.iter_mut().enumerate() {
                *v = stencils[p].iter().map(|&(q, w)| w * src[q]).sum();
            }
        });
    Ok(out)
}

/// Full inhomogeneous pullback of `Γ` (on its own grid) through `map`, evaluated on `grid`.
pub fn pullback_connection(
    gamma: &Connection,
    map: &dyn CoordinateMap,
    grid: &Grid,
    det_floor: f64,
) -> Result<Connection> {
    let phi = sample_map(map, grid);
    let k = discrete_jacobian(&phi)?;
    pullback_sampled(&sample_at(gamma, &phi)?, &k, det_floor)
}

/// Tensor transform of a matrix 2-form: `K⁻¹ R K` with both form indices contracted with `K`.
pub fn transform_curvature(r: &MatrixForm, k: &MatrixForm, kinv: &MatrixForm) -> Result<MatrixForm> {
    if r.degree() != 2 {
        return Err(Error::Degree("transform_curvature needs a 2-form".into()));
    }
    let conj = right_mul(&left_mul(kinv, r)?, k)?;
    let n = r.dim();
    let table = Table::new(n);
    let basis = &table.bases[2];
    let pairs: Vec<(usize, usize)> = basis
        .iter()
        .map(|&m| {
            let mut it = crate::multi::indices(m);
            (it.next().unwrap(), it.next().unwrap())
        })
        .collect();
    let npts = r.grid().len();
    let mut out = MatrixForm::zeros(r.grid(), 2);
    let c = basis.len();
    out.data_mut()
        .par_chunks_mut(npts)
        .enumerate()
        .for_each(|(comp, dst)| {
            let (slot, ab) = (comp / c, comp % c);
            let (a, b) = pairs[ab];
            for (ij, &(i, j)) in pairs.iter().enumerate() {
                let src = conj.comp(slot, ij);
                let kia = k.comp(i * n + a, 0);
                let kjb = k.comp(j * n + b, 0);
                let kja = k.comp(j * n + a, 0);
                let kib = k.comp(i * n + b, 0);
                for p in 0..npts {
                    dst[p] += src[p] * (kia[p] * kjb[p] - kja[p] * kib[p]);
                }
            }
        });
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct GaugeFields {
    pub gamma_tilde: Connection,
    pub a: MatrixForm,
    pub v: VectorForm,
}

/// `Γ̃_J`, `A′ = B − ⟨dJ; Γ̃_J⟩` and `v′ = −δ vec⟨dJ; Γ̃_J⟩` (gauge `w = 0`).
pub fn gauge_fields(gamma: &Connection, j: &MatrixForm, jinv: &MatrixForm, b: &MatrixForm) -> Result<GaugeFields> {
    let gt = gamma_tilde(gamma, j, jinv)?;
    let inner = mat_inner(&ext_d(j)?, &gt)?;
    let a = b.sub(&inner)?;
    let v = codiff(&vectorize(&inner)?)?.scale(-1.0);
    Ok(GaugeFields { gamma_tilde: gt, a, v })
}

/// Refinement study of one field.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegularityIndicator {
    pub lp: Vec<f64>,
    pub w1p: Vec<f64>,
    /// Least-squares slope of `log2 W^{1,p}` per refinement level.
    pub rate: f64,
}

/// Residuals of every identity the smoothing theory predicts.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub riem_flat_res: f64,
    pub curl_res: f64,
    pub first_rt_res: f64,
    pub delta_identity_res: f64,
    pub reduced_rt_res: f64,
    pub reduced_rt_j_res: f64,
    pub reduced_rt_db_res: f64,
    pub reduced_rt_deltab_res: f64,
    pub curl_max: f64,
    pub map_res: f64,
    pub min_det_j: f64,
    pub inverse_res: f64,
    pub potential_gap: f64,
    pub epsilon: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub converged: bool,
    pub regularity_indicators: BTreeMap<String, RegularityIndicator>,
}

/// Evaluates the residual diagnostics of a solution, with `Γ` the physical
/// connection on the solution's grid.
pub fn rt_residuals(gamma: &Connection, sol: &RTSolution, gf: &GaugeFields, p: f64) -> Result<Diagnostics> {
    let inner = Region::Interior(RESIDUAL_MARGIN);
    let central = Region::central(sol.j.grid(), DIAGNOSTIC_WINDOW);
    let (j, jinv, b) = (&sol.j, &sol.jinv, &sol.b);
    let gt = &gf.gamma_tilde;

    let riem_flat_res = lp_norm_in(&riemann(&gamma.sub(gt)?)?, p, &central)?;
    let jinv_a = left_mul(jinv, &gf.a)?;
    let delta_identity_res = lp_norm_in(&codiff(gt)?.sub(&jinv_a)?, p, &central)?;

    let dj = ext_d(j)?;
    let djinv = ext_d(jinv)?;
    let rhs = codiff(&ext_d(gamma)?)?
        .sub(&codiff(&wedge(&djinv, &dj)?)?)?
        .add(&ext_d(&jinv_a)?)?;
    let first_rt_res = lp_norm_in(&laplacian(gt).sub(&rhs)?, p, &central)?;

    let res_j = laplacian(j).sub(&codiff(&left_mul(j, gamma)?)?.sub(b)?)?;
    let reduced_rt_j_res = lp_norm_in(&res_j, p, &inner)?;
    let bvec = vectorize(b)?;
    let res_db = ext_d(&bvec)?
        .sub(&vec_div(&wedge(&dj, gamma)?))?
        .sub(&vec_div(&left_mul(j, &ext_d(gamma)?)?))?;
    let reduced_rt_db_res = lp_norm_in(&res_db, p, &inner)?;
    let reduced_rt_deltab_res = lp_norm_in(&codiff(&bvec)?, p, &Region::Interior(1))?;

    Ok(Diagnostics {
        riem_flat_res,
        curl_res: sol.curl.lp,
        first_rt_res,
        delta_identity_res,
        reduced_rt_res: reduced_rt_j_res.max(reduced_rt_db_res).max(reduced_rt_deltab_res),
        reduced_rt_j_res,
        reduced_rt_db_res,
        reduced_rt_deltab_res,
        curl_max: sol.curl.max,
        map_res: sol.curl.map_error.unwrap_or(0.0),
        min_det_j: sol.inverse.min_det,
        inverse_res: sol.inverse.max_error,
        potential_gap: sol.potential_gap,
        epsilon: sol.rescaling.epsilon,
        iterations: sol.iterations,
        restarts: sol.restarts,
        converged: sol.converged,
        regularity_indicators: BTreeMap::new(),
    })
}

/// `Γ_y = transform_connection(Γ̃_J)` for a finished solution.
pub fn smoothed_connection(sol: &RTSolution) -> Result<Connection> {
    let gt = gamma_tilde(&sol.gamma(), &sol.j, &sol.jinv)?;
    transform_connection(&gt, &sol.j, &sol.jinv)
}

/// The quadratic map `z = y′ + ½ C(y′, y′)` with `y′ = y − q` and `C` the
/// symmetric part of `Γ(q)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InertialMap {
    pub q: Vec<f64>,
    /// `c[α][β][γ] = C^α_{βγ}`.
    pub c: Vec<Vec<Vec<f64>>>,
}

impl InertialMap {
    pub fn eval(&self, y: &[f64]) -> Vec<f64> {
        let n = self.q.len();
        let d: Vec<f64> = (0..n).map(|a| y[a] - self.q[a]).collect();
        (0..n)
            .map(|al| {
                let mut z = d[al];
                for b in 0..n {
                    for g in 0..n {
                        z += 0.5 * self.c[al][b][g] * d[b] * d[g];
                    }
                }
                z
            })
            .collect()
    }

    /// `∂z^α/∂y^ν = δ^α_ν + C^α_{νγ} y′^γ`.
    pub fn jacobian(&self, y: &[f64]) -> DMatrix<f64> {
        let n = self.q.len();
        DMatrix::from_fn(n, n, |al, nu| {
            let mut v = if al == nu { 1.0 } else { 0.0 };
            for g in 0..n {
                v += self.c[al][nu][g] * (y[g] - self.q[g]);
            }
            v
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InertialReport {
    /// `max |Γ_z(q)|` over components.
    pub gamma_z_at_q: f64,
    pub gamma_y_linf: f64,
    pub fitted_exponent: f64,
    /// Hölder exponent `1 − n/(2p)` predicted by Morrey's inequality.
    pub morrey_alpha: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub bins: usize,
}

fn connection_at_q(gamma: &Connection, q: &[f64]) -> Vec<Vec<Vec<f64>>> {
    let n = gamma.dim();
    let vals = gamma.interpolate(q);
    (0..n)
        .map(|al| (0..n).map(|b| (0..n).map(|g| vals[(al * n + b) * n + g]).collect()).collect())
        .collect()
}

/// Builds the locally inertial map at `q`, transforms `Γ_y` to `Γ_z` and fits
/// the growth exponent of `|Γ_z|` around `q`.
pub fn locally_inertial(gamma_y: &Connection, q: &[f64], p: f64) -> Result<(InertialMap, Connection, InertialReport)> {
    degree_one(gamma_y)?;
    let grid = gamma_y.grid();
    let n = grid.dim();
    if q.len() != n {
        return Err(Error::InvalidArgument(format!("point has {} coordinates, expected {n}", q.len())));
    }
    for a in 0..n {
        let h = grid.spacing()[a];
        if !(q[a] > grid.lo()[a] + 0.5 * h && q[a] < grid.hi()[a] - 0.5 * h) {
            return Err(Error::Domain(format!("point {q:?} is not interior")));
        }
    }
    let g_q = connection_at_q(gamma_y, q);
    let c: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|al| {
            (0..n)
                .map(|b| (0..n).map(|g| 0.5 * (g_q[al][b][g] + g_q[al][g][b])).collect())
                .collect()
        })
        .collect();
    let map = InertialMap { q: q.to_vec(), c };

    let npts = grid.len();
    let mut k = MatrixForm::zeros(grid, 0);
    for p in 0..npts {
        k.set_matrix(0, p, &map.jacobian(&grid.point(p)));
    }
    let kinv = invert_jacobian(&k, 1e-12)?.jinv;
    // dK^α_{ν γ} = C^α_{νγ} exactly.
    let dk = MatrixForm::from_fn(grid, 1, |slot, m, _| {
        let g = crate::multi::indices(m).next().unwrap();
        map.c[slot / n][slot % n][g]
    });
    let gamma_z = transform_index(&right_mul(&left_mul(&k, gamma_y)?.sub(&dk)?, &kinv)?, &kinv)?;

    let mut at_q: f64 = 0.0;
    for al in 0..n {
        for b in 0..n {
            for g in 0..n {
                at_q = at_q.max((g_q[al][b][g] - map.c[al][b][g]).abs());
            }
        }
    }

    let h = grid.min_spacing();
    // Keep the fit inside the ball where K stays close to the identity.
    let c_max = map.c.iter().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let r_max = if c_max > 0.0 { (0.2 * grid.min_width()).min(0.5 / c_max) } else { 0.2 * grid.min_width() };
    let r_min = (2.0 * h).min(0.25 * r_max);
    let bins = 8usize;
    let mut best = vec![0.0f64; bins];
    let mut seen = vec![false; bins];
    let (lmin, lmax) = (r_min.ln(), r_max.ln());
    for pt in 0..npts {
        let x = grid.point(pt);
        let r = (0..n).map(|a| (x[a] - q[a]).powi(2)).sum::<f64>().sqrt();
        if r < r_min || r > r_max {
            continue;
        }
        let bin = (((r.ln() - lmin) / (lmax - lmin)) * bins as f64).floor().min(bins as f64 - 1.0) as usize;
        let v = gamma_z.at(pt).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        best[bin] = best[bin].max(v);
        seen[bin] = true;
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for b in 0..bins {
        if seen[b] && best[b] > 0.0 {
            xs.push(lmin + (b as f64 + 0.5) * (lmax - lmin) / bins as f64);
            ys.push(best[b].ln());
        }
    }
    let fitted_exponent = if xs.len() >= 2 { slope(&xs, &ys) } else { f64::NAN };
    let report = InertialReport {
        gamma_z_at_q: at_q,
        gamma_y_linf: gamma_y.max_abs(),
        fitted_exponent,
        morrey_alpha: 1.0 - n as f64 / (2.0 * p),
        r_min,
        r_max,
        bins: xs.len(),
    };
    Ok((map, gamma_z, report))
}

/// L^p and W^{1,p} norms over successive refinement levels of one field,
/// restricted to the central `window` fraction of the box.
pub fn regularity_indicator<K: Kind>(levels: &[Form<K>], p: f64, window: f64) -> Result<RegularityIndicator> {
    if levels.len() < 2 {
        return Err(Error::InvalidArgument("regularity indicator needs at least two levels".into()));
    }
    let mut lp = Vec::with_capacity(levels.len());
    let mut w1p = Vec::with_capacity(levels.len());
    for f in levels {
        let region = Region::central(f.grid(), window);
        lp.push(lp_norm_in(f, p, &region)?);
        w1p.push(w1p_norm_in(f, p, &region)?);
    }
    let xs: Vec<f64> = (0..levels.len()).map(|i| i as f64).collect();
    let ys: Vec<f64> = w1p.iter().map(|v| v.max(1e-300).log2()).collect();
    Ok(RegularityIndicator { lp, w1p, rate: slope(&xs, &ys) })
}

fn degree_one(g: &Connection) -> Result<()> {
    if g.degree() == 1 {
        Ok(())
    } else {
        Err(Error::Degree(format!("expected a connection (1-form), got degree {}", g.degree())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_inputs_have_zero_gauge_fields() {
        let g = Grid::unit(2, 7).unwrap();
        let i = MatrixForm::identity(&g);
        let gf = gauge_fields(&MatrixForm::zeros(&g, 1), &i, &i, &MatrixForm::zeros(&g, 0)).unwrap();
        assert_eq!(gf.gamma_tilde.max_abs(), 0.0);
        assert_eq!(gf.a.max_abs(), 0.0);
        assert_eq!(gf.v.max_abs(), 0.0);
    }

    #[test]
    fn scalar_jacobian_scales_by_inverse() {
        let g = Grid::unit(3, 4).unwrap();
        let gt = MatrixForm::from_fn(&g, 1, |s, m, x| s as f64 + m as f64 * x[1]);
        let c = 2.5;
        let j = MatrixForm::identity(&g).scale(c);
        let jinv = MatrixForm::identity(&g).scale(1.0 / c);
        let gy = transform_connection(&gt, &j, &jinv).unwrap();
        assert!(gy.sub(&gt.scale(1.0 / c)).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn inertial_rejects_boundary_point() {
        let g = Grid::unit(2, 9).unwrap();
        assert!(locally_inertial(&MatrixForm::zeros(&g, 1), &[0.0, 0.5], 4.0).is_err());
    }

    #[test]
    fn indicator_needs_two_levels() {
        let g = Grid::unit(2, 5).unwrap();
        assert!(regularity_indicator(&[MatrixForm::zeros(&g, 0)], 4.0, 0.5).is_err());
    }
}
