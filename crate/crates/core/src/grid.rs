//! Axis-aligned box grids with uniform spacing per axis.
//!
//! Points are stored row-major: the last axis varies fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    shape: Vec<usize>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    h: Vec<f64>,
    strides: Vec<usize>,
}

impl Grid {
    pub fn new(shape: &[usize], lo: &[f64], hi: &[f64]) -> Result<Self> {
        let n = shape.len();
        if !(n == 2 || n == 3) {
            return Err(Error::InvalidGrid(format!("dimension {n} not in {{2, 3}}")));
        }
        if lo.len() != n || hi.len() != n {
            return Err(Error::InvalidGrid("bounds length differs from dimension".into()));
        }
        for a in 0..n {
            if shape[a] < 3 {
                return Err(Error::InvalidGrid(format!("axis {a} has {} < 3 points", shape[a])));
            }
            if !(lo[a].is_finite() && hi[a].is_finite() && hi[a] > lo[a]) {
                return Err(Error::InvalidGrid(format!("axis {a}: need finite hi > lo")));
            }
        }
        let h = (0..n).map(|a| (hi[a] - lo[a]) / (shape[a] - 1) as f64).collect();
        let mut strides = vec![1; n];
        for a in (0..n - 1).rev() {
            strides[a] = strides[a + 1] * shape[a + 1];
        }
        Ok(Self {
            n,
            shape: shape.to_vec(),
            lo: lo.to_vec(),
            hi: hi.to_vec(),
            h,
            strides,
        })
    }

    /// Cube `[lo, hi]^n` with `points` per axis.
    pub fn cube(n: usize, points: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(&vec![points; n], &vec![lo; n], &vec![hi; n])
    }

    pub fn unit(n: usize, points: usize) -> Result<Self> {
        Self::cube(n, points, 0.0, 1.0)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn spacing(&self) -> &[f64] {
        &self.h
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume element `h_1 ⋯ h_n` of the quadrature.
    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    pub fn volume(&self) -> f64 {
        (0..self.n).map(|a| self.hi[a] - self.lo[a]).product()
    }

    pub fn center(&self) -> Vec<f64> {
        (0..self.n).map(|a| 0.5 * (self.lo[a] + self.hi[a])).collect()
    }

    pub fn min_spacing(&self) -> f64 {
        self.h.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Shortest side length of the box.
    pub fn min_width(&self) -> f64 {
        (0..self.n)
            .map(|a| self.hi[a] - self.lo[a])
            .fold(f64::INFINITY, f64::min)
    }

    #[inline]
    pub fn index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    #[inline]
    pub fn multi_index(&self, mut p: usize) -> [usize; 3] {
        let mut out = [0; 3];
        for a in 0..self.n {
            out[a] = p / self.strides[a];
            p %= self.strides[a];
        }
        out
    }

    /// Index of point `p` along axis `a`.
    #[inline]
    pub fn axis_index(&self, p: usize, a: usize) -> usize {
        (p / self.strides[a]) % self.shape[a]
    }

    pub fn coord(&self, p: usize, a: usize) -> f64 {
        self.lo[a] + self.axis_index(p, a) as f64 * self.h[a]
    }

    pub fn point(&self, p: usize) -> Vec<f64> {
        (0..self.n).map(|a| self.coord(p, a)).collect()
    }

    pub fn on_boundary(&self, p: usize) -> bool {
        !self.is_interior(p, 1)
    }

    /// True when the point sits at least `margin` layers away from every face.
    #[inline]
    pub fn is_interior(&self, p: usize, margin: usize) -> bool {
        (0..self.n).all(|a| {
            let i = self.axis_index(p, a);
            i >= margin && i + margin < self.shape[a]
        })
    }

    /// Grid with every axis refined by a factor of two (`2(N-1)+1` points).
    pub fn refined(&self) -> Self {
        let shape: Vec<usize> = self.shape.iter().map(|&s| 2 * (s - 1) + 1).collect();
        Self::new(&shape, &self.lo, &self.hi).expect("refinement of a valid grid is valid")
    }

    /// Recomputes the spacing from the bounds and checks it against the stored one.
    pub fn check_spacing(&self) -> bool {
        (0..self.n).all(|a| {
            let h = (self.hi[a] - self.lo[a]) / (self.shape[a] - 1) as f64;
            (h - self.h[a]).abs() <= 4.0 * f64::EPSILON * h.abs()
        })
    }

    pub fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "shapes {:?} vs {:?}",
                self.shape, other.shape
            )))
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        (0..self.n).all(|a| x[a] >= self.lo[a] - 1e-12 && x[a] <= self.hi[a] + 1e-12)
    }

    /// Multilinear interpolation weights for the physical point `x` (clamped to the box).
    pub fn interpolation_stencil(&self, x: &[f64]) -> Vec<(usize, f64)> {
        let mut base = [0usize; 3];
        let mut frac = [0f64; 3];
        for a in 0..self.n {
            let t = ((x[a] - self.lo[a]) / self.h[a]).clamp(0.0, (self.shape[a] - 1) as f64);
            let i = (t.floor() as usize).min(self.shape[a] - 2);
            base[a] = i;
            frac[a] = t - i as f64;
        }
        let mut out = Vec::with_capacity(1 << self.n);
        for corner in 0..(1usize << self.n) {
            let mut w = 1.0;
            let mut p = 0;
            for a in 0..self.n {
                let up = (corner >> a) & 1;
                w *= if up == 1 { frac[a] } else { 1.0 - frac[a] };
                p += (base[a] + up) * self.strides[a];
            }
            if w != 0.0 {
                out.push((p, w));
            }
        }
        out
    }
}
