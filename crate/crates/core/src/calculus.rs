//! Discrete exterior calculus and the pointwise Cartan algebra.
//!
//! `ext_d` uses forward differences and `codiff` backward differences, each
//! falling back to the one-sided difference on the layer where the stencil
//! would leave the grid.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forms::{Form, Kind, MatrixForm, VectorForm};
use crate::grid::Grid;
use crate::multi::{parity, rank, wedge_sign, Table};

/// `dst += s * D+_a src`.
pub fn d_plus_acc(grid: &Grid, a: usize, src: &[f64], dst: &mut [f64], s: f64) {
    let stride = grid.strides()[a];
    let last = grid.shape()[a] - 1;
    let f = s / grid.spacing()[a];
    for (p, d) in dst.iter_mut().enumerate() {
        let i = grid.axis_index(p, a);
        *d += if i < last {
            f * (src[p + stride] - src[p])
        } else {
            f * (src[p] - src[p - stride])
        };
    }
}

/// `dst += s * D-_a src`.
pub fn d_minus_acc(grid: &Grid, a: usize, src: &[f64], dst: &mut [f64], s: f64) {
    let stride = grid.strides()[a];
    let f = s / grid.spacing()[a];
    for (p, d) in dst.iter_mut().enumerate() {
        let i = grid.axis_index(p, a);
        *d += if i > 0 {
            f * (src[p] - src[p - stride])
        } else {
            f * (src[p + stride] - src[p])
        };
    }
}

pub fn d_plus(grid: &Grid, a: usize, src: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    d_plus_acc(grid, a, src, &mut out, 1.0);
    out
}

pub fn d_minus(grid: &Grid, a: usize, src: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    d_minus_acc(grid, a, src, &mut out, 1.0);
    out
}

/// Exterior derivative, applied slot by slot.
pub fn ext_d<K: Kind>(w: &Form<K>) -> Result<Form<K>> {
    let n = w.dim();
    let k = w.degree();
    if k >= n {
        return Err(Error::Degree(format!("ext_d of a {k}-form in dimension {n}")));
    }
    let grid = w.grid();
    let table = Table::new(n);
    let mut out = Form::<K>::zeros(grid, k + 1);
    let c_out = table.count(k + 1);
    let npts = grid.len();
    out.data_mut()
        .par_chunks_mut(npts)
        .enumerate()
        .for_each(|(comp, dst)| {
            let (slot, kk) = (comp / c_out, comp % c_out);
            let kmask = table.bases[k + 1][kk];
            for m in 0..n {
                if kmask & (1 << m) == 0 {
                    continue;
                }
                let sub = kmask & !(1 << m);
                let src = w.comp(slot, table.pos(sub));
                d_plus_acc(grid, m, src, dst, parity(rank(kmask, m)));
            }
        });
    Ok(out)
}

/// Codifferential, signed so that `ext_d∘codiff + codiff∘ext_d` is the
/// componentwise second-difference Laplacian.
pub fn codiff<K: Kind>(w: &Form<K>) -> Result<Form<K>> {
    let n = w.dim();
    let k = w.degree();
    if k == 0 {
        return Err(Error::Degree("codiff of a 0-form".into()));
    }
    let grid = w.grid();
    let table = Table::new(n);
    let mut out = Form::<K>::zeros(grid, k - 1);
    let c_out = table.count(k - 1);
    let npts = grid.len();
    out.data_mut()
        .par_chunks_mut(npts)
        .enumerate()
        .for_each(|(comp, dst)| {
            let (slot, jj) = (comp / c_out, comp % c_out);
            let jmask = table.bases[k - 1][jj];
            for l in 0..n {
                if jmask & (1 << l) != 0 {
                    continue;
                }
                let sup = jmask | (1 << l);
                let src = w.comp(slot, table.pos(sup));
                d_minus_acc(grid, l, src, dst, parity(rank(sup, l)));
            }
        });
    Ok(out)
}

/// Componentwise stencil Laplacian `Σ_l D-_l D+_l`.
pub fn laplacian<K: Kind>(w: &Form<K>) -> Form<K> {
    let grid = w.grid();
    let n = grid.dim();
    let npts = grid.len();
    let mut out = Form::<K>::zeros(grid, w.degree());
    out.data_mut()
        .par_chunks_mut(npts)
        .enumerate()
        .for_each(|(c, dst)| {
            let src = w.component(c);
            for a in 0..n {
                let dp = d_plus(grid, a, src);
                d_minus_acc(grid, a, &dp, dst, 1.0);
            }
        });
    out
}

/// Hodge-type Laplacian `dδ + δd`, skipping terms that do not exist in degree 0 or n.
pub fn hodge_laplacian<K: Kind>(w: &Form<K>) -> Result<Form<K>> {
    let n = w.dim();
    let k = w.degree();
    let mut out = Form::<K>::zeros(w.grid(), k);
    if k > 0 {
        out.axpy(1.0, &ext_d(&codiff(w)?)?)?;
    }
    if k < n {
        out.axpy(1.0, &codiff(&ext_d(w)?)?)?;
    }
    Ok(out)
}

/// Wedge product with matrix multiplication of the coefficients.
pub fn wedge(w: &MatrixForm, u: &MatrixForm) -> Result<MatrixForm> {
    w.grid().ensure_same(u.grid())?;
    let n = w.dim();
    let (k, l) = (w.degree(), u.degree());
    if k + l > n {
        return Err(Error::Degree(format!("wedge of degrees {k} + {l} exceeds {n}")));
    }
    let table = Table::new(n);
    let grid = w.grid();
    let npts = grid.len();
    let mut out = MatrixForm::zeros(grid, k + l);
    let c_out = table.count(k + l);
    out.data_mut()
        .par_chunks_mut(npts)
        .enumerate()
        .for_each(|(comp, dst)| {
            let (slot, kk) = (comp / c_out, comp % c_out);
            let (mu, nu) = (slot / n, slot % n);
            let kmask = table.bases[k + l][kk];
            for &imask in &table.bases[k] {
                if imask & !kmask != 0 {
                    continue;
                }
                let jmask = kmask & !imask;
                let s = wedge_sign(imask, jmask);
                let (ii, jj) = (table.pos(imask), table.pos(jmask));
                for sigma in 0..n {
                    let a = w.comp(mu * n + sigma, ii);
                    let b = u.comp(sigma * n + nu, jj);
                    for p in 0..npts {
                        dst[p] += s * a[p] * b[p];
                    }
                }
            }
        });
    Ok(out)
}

/// Matrix-valued inner product `⟨ω; u⟩^μ_ν = Σ_σ Σ_I ω^μ_{σ I} u^σ_{ν I}`.
pub fn mat_inner(w: &MatrixForm, u: &MatrixForm) -> Result<MatrixForm> {
    w.ensure_compatible(u)?;
    let n = w.dim();
    let c = w.n_multi();
    let grid = w.grid();
    let npts = grid.len();
    let mut out = MatrixForm::zeros(grid, 0);
    out.data_mut()
        .par_chunks_mut(npts)
        .enumerate()
        .for_each(|(slot, dst)| {
            let (mu, nu) = (slot / n, slot % n);
            for sigma in 0..n {
                for ii in 0..c {
                    let a = w.comp(mu * n + sigma, ii);
                    let b = u.comp(sigma * n + nu, ii);
                    for p in 0..npts {
                        dst[p] += a[p] * b[p];
                    }
                }
            }
        });
    Ok(out)
}

/// Pointwise `J · ω` for a matrix 0-form `J`.
pub fn left_mul(j: &MatrixForm, w: &MatrixForm) -> Result<MatrixForm> {
    zero_form(j)?;
    j.grid().ensure_same(w.grid())?;
    let n = w.dim();
    let c = w.n_multi();
    let npts = w.grid().len();
    let mut out = MatrixForm::zeros(w.grid(), w.degree());
    out.data_mut()
        .par_chunks_mut(npts)
        .enumerate()
        .for_each(|(comp, dst)| {
            let (slot, ii) = (comp / c, comp % c);
            let (mu, nu) = (slot / n, slot % n);
            for sigma in 0..n {
                let a = j.comp(mu * n + sigma, 0);
                let b = w.comp(sigma * n + nu, ii);
                for p in 0..npts {
                    dst[p] += a[p] * b[p];
                }
            }
        });
    Ok(out)
}

/// Pointwise `ω · J` for a matrix 0-form `J`.
pub fn right_mul(w: &MatrixForm, j: &MatrixForm) -> Result<MatrixForm> {
    zero_form(j)?;
    j.grid().ensure_same(w.grid())?;
    let n = w.dim();
    let c = w.n_multi();
    let npts = w.grid().len();
    let mut out = MatrixForm::zeros(w.grid(), w.degree());
    out.data_mut()
        .par_chunks_mut(npts)
        .enumerate()
        .for_each(|(comp, dst)| {
            let (slot, ii) = (comp / c, comp % c);
            let (mu, nu) = (slot / n, slot % n);
            for sigma in 0..n {
                let a = w.comp(mu * n + sigma, ii);
                let b = j.comp(sigma * n + nu, 0);
                for p in 0..npts {
                    dst[p] += a[p] * b[p];
                }
            }
        });
    Ok(out)
}

/// Pointwise `J · v` for a vector-valued form `v`.
pub fn mul_vector(j: &MatrixForm, v: &VectorForm) -> Result<VectorForm> {
    zero_form(j)?;
    j.grid().ensure_same(v.grid())?;
    let n = v.dim();
    let c = v.n_multi();
    let npts = v.grid().len();
    let mut out = VectorForm::zeros(v.grid(), v.degree());
    out.data_mut()
        .par_chunks_mut(npts)
        .enumerate()
        .for_each(|(comp, dst)| {
            let (mu, ii) = (comp / c, comp % c);
            for sigma in 0..n {
                let a = j.comp(mu * n + sigma, 0);
                let b = v.comp(sigma, ii);
                for p in 0..npts {
                    dst[p] += a[p] * b[p];
                }
            }
        });
    Ok(out)
}

/// `ω⃗^μ = ω^μ_{ν I} dx^ν ∧ dx^I`.
pub fn vectorize(w: &MatrixForm) -> Result<VectorForm> {
    let n = w.dim();
    let k = w.degree();
    if k >= n {
        return Err(Error::Degree(format!("vectorize of a {k}-form in dimension {n}")));
    }
    let table = Table::new(n);
    let npts = w.grid().len();
    let c_out = table.count(k + 1);
    let mut out = VectorForm::zeros(w.grid(), k + 1);
    out.data_mut()
        .par_chunks_mut(npts)
        .enumerate()
        .for_each(|(comp, dst)| {
            let (mu, kk) = (comp / c_out, comp % c_out);
            let kmask = table.bases[k + 1][kk];
            for nu in 0..n {
                if kmask & (1 << nu) == 0 {
                    continue;
                }
                let s = parity(rank(kmask, nu));
                let src = w.comp(mu * n + nu, table.pos(kmask & !(1 << nu)));
                for p in 0..npts {
                    dst[p] += s * src[p];
                }
            }
        });
    Ok(out)
}

/// Inverse of `vectorize` on 0-forms: the vector 1-form `v^μ_ν dx^ν` as the matrix `v^μ_ν`.
pub fn devectorize(v: &VectorForm) -> Result<MatrixForm> {
    if v.degree() != 1 {
        return Err(Error::Degree(format!("devectorize needs a 1-form, got {}", v.degree())));
    }
    Ok(MatrixForm::from_raw(v.grid(), 0, v.data().to_vec()))
}

/// `div⃗(ω)^α = Σ_l D-_l (ω^α_l)_I dx^I`.
pub fn vec_div(w: &MatrixForm) -> VectorForm {
    let n = w.dim();
    let c = w.n_multi();
    let grid = w.grid();
    let npts = grid.len();
    let mut out = VectorForm::zeros(grid, w.degree());
    out.data_mut()
        .par_chunks_mut(npts)
        .enumerate()
        .for_each(|(comp, dst)| {
            let (alpha, ii) = (comp / c, comp % c);
            for l in 0..n {
                d_minus_acc(grid, l, w.comp(alpha * n + l, ii), dst, 1.0);
            }
        });
    out
}

/// Contracts the form index of a connection with a 0-form: `(Γ·K)^μ_{ν j} = Γ^μ_{ν i} K^i_j`.
pub fn transform_index(w: &MatrixForm, kmat: &MatrixForm) -> Result<MatrixForm> {
    zero_form(kmat)?;
    if w.degree() != 1 {
        return Err(Error::Degree("transform_index needs a 1-form".into()));
    }
    w.grid().ensure_same(kmat.grid())?;
    let n = w.dim();
    let npts = w.grid().len();
    let mut out = MatrixForm::zeros(w.grid(), 1);
    out.data_mut()
        .par_chunks_mut(npts)
        .enumerate()
        .for_each(|(comp, dst)| {
            let (slot, j) = (comp / n, comp % n);
            for i in 0..n {
                let a = w.comp(slot, i);
                let b = kmat.comp(i * n + j, 0);
                for p in 0..npts {
                    dst[p] += a[p] * b[p];
                }
            }
        });
    Ok(out)
}

fn zero_form(j: &MatrixForm) -> Result<()> {
    if j.degree() == 0 {
        Ok(())
    } else {
        Err(Error::Degree(format!("expected a matrix 0-form, got degree {}", j.degree())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn grid2() -> Grid {
        Grid::unit(2, 9).unwrap()
    }

    #[test]
    fn wedge_of_constant_forms_is_commutator() {
        let g = grid2();
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let w = MatrixForm::from_fn(&g, 1, |slot, m, _| {
            let (mu, nu) = (slot / 2, slot % 2);
            if m == 0b01 {
                a[(mu, nu)]
            } else {
                b[(mu, nu)]
            }
        });
        let ww = wedge(&w, &w).unwrap();
        let expect = &a * &b - &b * &a;
        for p in 0..g.len() {
            assert_eq!(ww.matrix_at(0, p), expect);
        }
    }

    #[test]
    fn degree_errors() {
        let g = grid2();
        let w = MatrixForm::zeros(&g, 2);
        assert!(ext_d(&w).is_err());
        assert!(vectorize(&w).is_err());
        assert!(codiff(&MatrixForm::zeros(&g, 0)).is_err());
        assert!(wedge(&w, &MatrixForm::zeros(&g, 1)).is_err());
    }

    #[test]
    fn linear_field_has_unit_derivative() {
        let g = grid2();
        let f = MatrixForm::from_fn(&g, 0, |_, _, x| x[0]);
        let df = ext_d(&f).unwrap();
        for s in 0..4 {
            for p in 0..g.len() {
                assert!((df.get(s, 0, p) - 1.0).abs() < 1e-12);
                assert!(df.get(s, 1, p).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn vectorize_zero_form_is_relabeling() {
        let g = grid2();
        let j = MatrixForm::from_fn(&g, 0, |s, _, x| s as f64 + x[1]);
        let v = vectorize(&j).unwrap();
        assert_eq!(v.data(), j.data());
        assert_eq!(devectorize(&v).unwrap(), j);
    }
}
