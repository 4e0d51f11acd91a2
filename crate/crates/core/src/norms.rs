//! Discrete L^p and W^{1,p} norms.
//!
//! The quadrature is the tensor trapezoid rule: weight `h_1 ⋯ h_n`, halved once
//! for every axis on which the point lies on a face, so constants integrate
//! exactly to the box volume.

use crate::calculus::d_plus;
use crate::error::{Error, Result};
use crate::forms::{Form, Kind};
use crate::grid::Grid;

/// Set of grid points a norm is summed over.
#[derive(Clone, Debug, PartialEq)]
pub enum Region {
    All,
    /// Points at least this many layers away from every face.
    Interior(usize),
    /// Points inside the axis-aligned window `[lo, hi]`.
    Window { lo: Vec<f64>, hi: Vec<f64> },
}

impl Region {
    pub fn contains(&self, grid: &Grid, p: usize) -> bool {
        match self {
            Region::All => true,
            Region::Interior(m) => grid.is_interior(p, *m),
            Region::Window { lo, hi } => (0..grid.dim()).all(|a| {
                let x = grid.coord(p, a);
                x >= lo[a] - 1e-12 && x <= hi[a] + 1e-12
            }),
        }
    }

    /// Window covering the central `fraction` of each axis.
    pub fn central(grid: &Grid, fraction: f64) -> Self {
        let c = grid.center();
        let lo = (0..grid.dim())
            .map(|a| c[a] - 0.5 * fraction * (grid.hi()[a] - grid.lo()[a]))
            .collect();
        let hi = (0..grid.dim())
            .map(|a| c[a] + 0.5 * fraction * (grid.hi()[a] - grid.lo()[a]))
            .collect();
        Region::Window { lo, hi }
    }
}

/// Trapezoid factor of point `p` relative to `h_1 ⋯ h_n`.
#[inline]
pub fn trapezoid_weight(grid: &Grid, p: usize) -> f64 {
    let mut w = 1.0;
    for a in 0..grid.dim() {
        let i = grid.axis_index(p, a);
        if i == 0 || i + 1 == grid.shape()[a] {
            w *= 0.5;
        }
    }
    w
}

fn check_p(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        Err(Error::InvalidArgument(format!("norm exponent {p} < 1")))
    } else {
        Ok(())
    }
}

/// Accumulates `Σ |v|^p` (or the max for `p = ∞`) over the selected points.
struct Acc {
    p: f64,
    value: f64,
}

impl Acc {
    fn new(p: f64) -> Self {
        Self { p, value: 0.0 }
    }

    fn push(&mut self, grid: &Grid, region: &Region, vals: &[f64]) {
        for (i, v) in vals.iter().enumerate() {
            if !region.contains(grid, i) {
                continue;
            }
            if self.p.is_infinite() {
                self.value = self.value.max(v.abs());
            } else {
                self.value += trapezoid_weight(grid, i) * v.abs().powf(self.p);
            }
        }
    }

    fn finish(self, grid: &Grid) -> f64 {
        if self.p.is_infinite() {
            self.value
        } else {
            (self.value * grid.cell_volume()).powf(1.0 / self.p)
        }
    }
}

pub fn lp_norm_in<K: Kind>(w: &Form<K>, p: f64, region: &Region) -> Result<f64> {
    check_p(p)?;
    let mut acc = Acc::new(p);
    for c in 0..w.n_components() {
        acc.push(w.grid(), region, w.component(c));
    }
    Ok(acc.finish(w.grid()))
}

/// W^{1,p} norm: the L^p sum of the values plus all forward-difference gradients.
pub fn w1p_norm_in<K: Kind>(w: &Form<K>, p: f64, region: &Region) -> Result<f64> {
    check_p(p)?;
    let grid = w.grid();
    let mut acc = Acc::new(p);
    for c in 0..w.n_components() {
        let comp = w.component(c);
        acc.push(grid, region, comp);
        for a in 0..grid.dim() {
            acc.push(grid, region, &d_plus(grid, a, comp));
        }
    }
    Ok(acc.finish(grid))
}

/// L^p norm of the forward-difference gradient alone.
pub fn grad_lp_norm_in<K: Kind>(w: &Form<K>, p: f64, region: &Region) -> Result<f64> {
    check_p(p)?;
    let grid = w.grid();
    let mut acc = Acc::new(p);
    for c in 0..w.n_components() {
        for a in 0..grid.dim() {
            acc.push(grid, region, &d_plus(grid, a, w.component(c)));
        }
    }
    Ok(acc.finish(grid))
}

pub fn lp_norm<K: Kind>(w: &Form<K>, p: f64) -> Result<f64> {
    lp_norm_in(w, p, &Region::All)
}

pub fn w1p_norm<K: Kind>(w: &Form<K>, p: f64) -> Result<f64> {
    w1p_norm_in(w, p, &Region::All)
}

pub fn lp_norm_interior<K: Kind>(w: &Form<K>, p: f64, margin: usize) -> Result<f64> {
    lp_norm_in(w, p, &Region::Interior(margin))
}

pub fn w1p_norm_interior<K: Kind>(w: &Form<K>, p: f64, margin: usize) -> Result<f64> {
    w1p_norm_in(w, p, &Region::Interior(margin))
}

/// L^p norm of `a - b`.
pub fn lp_distance<K: Kind>(a: &Form<K>, b: &Form<K>, p: f64, region: &Region) -> Result<f64> {
    lp_norm_in(&a.sub(b)?, p, region)
}

/// Least-squares convergence order of `errors` against spacings `hs` (slope in log-log).
pub fn convergence_order(hs: &[f64], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.max(1e-300).ln()).collect();
    slope(&xs, &ys)
}

/// Least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::MatrixForm;

    #[test]
    fn rejects_small_exponent() {
        let g = Grid::unit(2, 5).unwrap();
        assert!(lp_norm(&MatrixForm::zeros(&g, 0), 0.5).is_err());
    }

    #[test]
    fn constant_norm_is_exact() {
        let g = Grid::unit(2, 7).unwrap();
        let c = MatrixForm::from_fn(&g, 0, |_, _, _| -2.0);
        let v = lp_norm(&c, 3.0).unwrap();
        assert!((v - 2.0 * 4f64.powf(1.0 / 3.0)).abs() < 1e-13);
        assert_eq!(lp_norm(&c, f64::INFINITY).unwrap(), 2.0);
    }

    #[test]
    fn slope_of_power_law() {
        let hs = [0.1, 0.05, 0.025];
        let es: Vec<f64> = hs.iter().map(|h: &f64| 3.0 * h.powi(2)).collect();
        assert!((convergence_order(&hs, &es) - 2.0).abs() < 1e-12);
    }
}
