//! Matrix- and vector-valued differential forms on a [`Grid`].
//!
//! Components are stored component-major: matrix slot `(mu, nu)` (or vector
//! slot `mu`), then the increasing multi-index `I`, then grid points row-major.

use std::fmt;
use std::marker::PhantomData;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::multi::{binom, Mask, Table};

/// Coefficient type of a form: an `n x n` matrix or an `n` vector.
pub trait Kind: Clone + Send + Sync + fmt::Debug + 'static {
    const CODE: u32;
    const NAME: &'static str;
    fn slots(n: usize) -> usize;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Vector;

impl Kind for Matrix {
    const CODE: u32 = 0;
    const NAME: &'static str = "matrix";
    fn slots(n: usize) -> usize {
        n * n
    }
}

impl Kind for Vector {
    const CODE: u32 = 1;
    const NAME: &'static str = "vector";
    fn slots(n: usize) -> usize {
        n
    }
}

#[derive(Clone, PartialEq)]
pub struct Form<K: Kind> {
    grid: Grid,
    degree: usize,
    data: Vec<f64>,
    _kind: PhantomData<K>,
}

pub type MatrixForm = Form<Matrix>;
pub type VectorForm = Form<Vector>;
/// A matrix-valued 1-form `Γ^μ_{ν i} dx^i`.
pub type Connection = MatrixForm;

impl<K: Kind> fmt::Debug for Form<K> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Form")
            .field("kind", &K::NAME)
            .field("degree", &self.degree)
            .field("shape", &self.grid.shape())
            .finish()
    }
}

impl<K: Kind> Form<K> {
    pub fn zeros(grid: &Grid, degree: usize) -> Self {
        assert!(degree <= grid.dim(), "degree {degree} exceeds dimension");
        let len = K::slots(grid.dim()) * binom(grid.dim(), degree) * grid.len();
        Self {
            grid: grid.clone(),
            degree,
            data: vec![0.0; len],
            _kind: PhantomData,
        }
    }

    pub fn from_vec(grid: &Grid, degree: usize, data: Vec<f64>) -> Result<Self> {
        if degree > grid.dim() {
            return Err(Error::Degree(format!("degree {degree} exceeds dimension {}", grid.dim())));
        }
        let len = K::slots(grid.dim()) * binom(grid.dim(), degree) * grid.len();
        if data.len() != len {
            return Err(Error::InvalidArgument(format!(
                "expected {len} values, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{} {}-form", K::NAME, degree)));
        }
        Ok(Self {
            grid: grid.clone(),
            degree,
            data,
            _kind: PhantomData,
        })
    }

    pub(crate) fn from_raw(grid: &Grid, degree: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(
            data.len(),
            K::slots(grid.dim()) * binom(grid.dim(), degree) * grid.len()
        );
        Self {
            grid: grid.clone(),
            degree,
            data,
            _kind: PhantomData,
        }
    }

    /// Builds a form by evaluating `f(slot, I, x)` at every point.
    pub fn from_fn(grid: &Grid, degree: usize, f: impl Fn(usize, Mask, &[f64]) -> f64 + Sync) -> Self {
        let mut out = Self::zeros(grid, degree);
        let table = Table::new(grid.dim());
        let basis = &table.bases[degree];
        let npts = grid.len();
        let c = basis.len();
        out.data
            .par_chunks_mut(npts)
            .enumerate()
            .for_each(|(comp, chunk)| {
                let (slot, ii) = (comp / c, comp % c);
                for (p, v) in chunk.iter_mut().enumerate() {
                    *v = f(slot, basis[ii], &grid.point(p));
                }
            });
        out
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn slots(&self) -> usize {
        K::slots(self.dim())
    }

    /// Number of multi-indices per slot.
    pub fn n_multi(&self) -> usize {
        binom(self.dim(), self.degree)
    }

    pub fn n_components(&self) -> usize {
        self.slots() * self.n_multi()
    }

    /// Grid values of component `(slot, multi-index position)`.
    pub fn comp(&self, slot: usize, ii: usize) -> &[f64] {
        let npts = self.grid.len();
        let c = (slot * self.n_multi() + ii) * npts;
        &self.data[c..c + npts]
    }

    pub fn comp_mut(&mut self, slot: usize, ii: usize) -> &mut [f64] {
        let npts = self.grid.len();
        let c = (slot * self.n_multi() + ii) * npts;
        &mut self.data[c..c + npts]
    }

    /// Component by flat index `slot * n_multi + ii`.
    pub fn component(&self, c: usize) -> &[f64] {
        let npts = self.grid.len();
        &self.data[c * npts..(c + 1) * npts]
    }

    pub fn get(&self, slot: usize, ii: usize, p: usize) -> f64 {
        self.data[(slot * self.n_multi() + ii) * self.grid.len() + p]
    }

    pub fn set(&mut self, slot: usize, ii: usize, p: usize, v: f64) {
        let idx = (slot * self.n_multi() + ii) * self.grid.len() + p;
        self.data[idx] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }

    pub(crate) fn ensure_compatible(&self, other: &Self) -> Result<()> {
        self.grid.ensure_same(&other.grid)?;
        if self.degree != other.degree {
            return Err(Error::Degree(format!(
                "degree {} vs {}",
                self.degree, other.degree
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64 + Sync) -> Result<Self> {
        self.ensure_compatible(other)?;
        let data = self
            .data
            .par_iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self::from_raw(&self.grid, self.degree, data))
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> Self {
        Self::from_raw(&self.grid, self.degree, self.data.par_iter().map(|&v| f(v)).collect())
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Self) -> Result<()> {
        self.ensure_compatible(other)?;
        self.data
            .par_iter_mut()
            .zip(&other.data)
            .for_each(|(a, &b)| *a += s * b);
        Ok(())
    }

    /// Maximum absolute component value.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Euclidean L2 pairing of all components, weighted by the cell volume.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.ensure_compatible(other)?;
        let s: f64 = self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum();
        Ok(s * self.grid.cell_volume())
    }

    /// Copy of the form with every component zeroed outside `margin` interior layers.
    pub fn masked_interior(&self, margin: usize) -> Self {
        let mut out = self.clone();
        let npts = self.grid.len();
        let g = &self.grid;
        out.data.par_chunks_mut(npts).for_each(|chunk| {
            for (p, v) in chunk.iter_mut().enumerate() {
                if !g.is_interior(p, margin) {
                    *v = 0.0;
                }
            }
        });
        out
    }

    /// Samples the form at point `x` with multilinear interpolation, one value per component.
    pub fn interpolate(&self, x: &[f64]) -> Vec<f64> {
        let stencil = self.grid.interpolation_stencil(x);
        (0..self.n_components())
            .map(|c| {
                let comp = self.component(c);
                stencil.iter().map(|&(p, w)| w * comp[p]).sum()
            })
            .collect()
    }

    /// Values of all components at grid point `p`.
    pub fn at(&self, p: usize) -> Vec<f64> {
        (0..self.n_components()).map(|c| self.component(c)[p]).collect()
    }

    /// Resamples onto `target` by multilinear interpolation.
    pub fn resample(&self, target: &Grid) -> Result<Self> {
        if target.dim() != self.dim() {
            return Err(Error::GridMismatch("dimension differs".into()));
        }
        let stencils: Vec<Vec<(usize, f64)>> = (0..target.len())
            .into_par_iter()
            .map(|p| self.grid.interpolation_stencil(&target.point(p)))
            .collect();
        let mut out = Self::zeros(target, self.degree);
        let npts = target.len();
        out.data
            .par_chunks_mut(npts)
            .enumerate()
            .for_each(|(c, chunk)| {
                let src = self.component(c);
                for (p, v) in chunk.iter_mut().enumerate() {
                    *v = stencils[p].iter().map(|&(q, w)| w * src[q]).sum();
                }
            });
        Ok(out)
    }
}

impl MatrixForm {
    /// Matrix slot index of entry `(mu, nu)`.
    #[inline]
    pub fn slot(&self, mu: usize, nu: usize) -> usize {
        mu * self.dim() + nu
    }

    pub fn entry(&self, mu: usize, nu: usize, ii: usize) -> &[f64] {
        self.comp(mu * self.dim() + nu, ii)
    }

    pub fn entry_mut(&mut self, mu: usize, nu: usize, ii: usize) -> &mut [f64] {
        let n = self.dim();
        self.comp_mut(mu * n + nu, ii)
    }

    /// The 0-form `I` (identity matrix at every point).
    pub fn identity(grid: &Grid) -> Self {
        let mut out = Self::zeros(grid, 0);
        for mu in 0..grid.dim() {
            out.entry_mut(mu, mu, 0).fill(1.0);
        }
        out
    }

    /// Constant 0-form equal to `m` everywhere.
    pub fn constant(grid: &Grid, m: &DMatrix<f64>) -> Self {
        let n = grid.dim();
        let mut out = Self::zeros(grid, 0);
        for mu in 0..n {
            for nu in 0..n {
                out.entry_mut(mu, nu, 0).fill(m[(mu, nu)]);
            }
        }
        out
    }

    /// Matrix coefficient of multi-index position `ii` at point `p`.
    pub fn matrix_at(&self, ii: usize, p: usize) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |mu, nu| self.get(mu * n + nu, ii, p))
    }

    pub fn set_matrix(&mut self, ii: usize, p: usize, m: &DMatrix<f64>) {
        let n = self.dim();
        for mu in 0..n {
            for nu in 0..n {
                self.set(mu * n + nu, ii, p, m[(mu, nu)]);
            }
        }
    }

    /// Connection coefficient `Γ^μ_{ν i}` at point `p` (degree 1 only).
    #[inline]
    pub fn christoffel(&self, mu: usize, nu: usize, i: usize, p: usize) -> f64 {
        debug_assert_eq!(self.degree, 1);
        self.get(mu * self.dim() + nu, i, p)
    }

    /// Pointwise transpose of the matrix coefficients.
    pub fn transpose(&self) -> Self {
        let n = self.dim();
        let mut out = Self::zeros(&self.grid, self.degree);
        for mu in 0..n {
            for nu in 0..n {
                for ii in 0..self.n_multi() {
                    out.entry_mut(nu, mu, ii).copy_from_slice(self.entry(mu, nu, ii));
                }
            }
        }
        out
    }
}

impl VectorForm {
    /// The 0-form whose components are the coordinates `x^μ`.
    pub fn coordinates(grid: &Grid) -> Self {
        Self::from_fn(grid, 0, |mu, _, x| x[mu])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_component_major() {
        let g = Grid::unit(2, 3).unwrap();
        let mut w = MatrixForm::zeros(&g, 1);
        assert_eq!(w.data().len(), 4 * 2 * 9);
        w.set(w.slot(1, 0), 1, 4, 7.0);
        assert_eq!(w.data()[((2 * 2) + 1) * 9 + 4], 7.0);
        assert_eq!(w.christoffel(1, 0, 1, 4), 7.0);
    }

    #[test]
    fn rejects_non_finite() {
        let g = Grid::unit(2, 3).unwrap();
        let mut v = vec![0.0; 2 * 9];
        v[3] = f64::NAN;
        assert!(VectorForm::from_vec(&g, 0, v).is_err());
    }

    #[test]
    fn transpose_swaps_entries() {
        let g = Grid::unit(3, 3).unwrap();
        let w = MatrixForm::from_fn(&g, 1, |s, m, x| s as f64 + m as f64 * x[0]);
        let t = w.transpose();
        assert_eq!(t.entry(0, 2, 1), w.entry(2, 0, 1));
        assert_eq!(t.transpose(), w);
    }
}
