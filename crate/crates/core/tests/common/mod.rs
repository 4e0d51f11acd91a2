#![allow(dead_code)]

use rt_core::forms::{Form, Kind, MatrixForm};
use rt_core::rng::SplitMix64;
use rt_core::Grid;

pub const LEVELS: [usize; 3] = [17, 33, 65];

/// Independent uniform noise in every component.
pub fn noise<K: Kind>(g: &Grid, degree: usize, seed: u64) -> Form<K> {
    let mut f = Form::<K>::zeros(g, degree);
    SplitMix64::new(seed).fill(f.data_mut());
    f
}

/// Noise that vanishes on the two outermost layers.
pub fn compact_noise<K: Kind>(g: &Grid, degree: usize, seed: u64) -> Form<K> {
    noise::<K>(g, degree, seed).masked_interior(2)
}

/// Smooth trigonometric field, one random mode triple per component.
pub fn smooth<K: Kind>(g: &Grid, degree: usize, seed: u64, amp: f64) -> Form<K> {
    let mut rng = SplitMix64::new(seed);
    let ncomp = K::slots(g.dim()) * rt_core::multi::binom(g.dim(), degree);
    let coeffs: Vec<[f64; 8]> = (0..ncomp)
        .map(|_| {
            let mut c = [0.0; 8];
            rng.fill(&mut c);
            c
        })
        .collect();
    let nm = rt_core::multi::binom(g.dim(), degree);
    let basis = rt_core::multi::basis(g.dim(), degree);
    Form::<K>::from_fn(g, degree, |slot, m, x| {
        let ii = basis.iter().position(|&b| b == m).unwrap();
        let c = &coeffs[slot * nm + ii];
        let z = if x.len() > 2 { x[2] } else { 0.0 };
        amp * (c[0]
            + c[1] * (1.3 * x[0] + c[2]).sin()
            + c[3] * (1.1 * x[1] + c[4]).cos()
            + c[5] * (0.9 * x[0] - 0.7 * x[1] + 0.8 * z + c[6]).sin()
            + 0.3 * c[7] * x[0] * x[1])
    })
}

/// Smooth matrix 1-form symmetric in (matrix column, form index).
pub fn smooth_symmetric(g: &Grid, seed: u64, amp: f64) -> MatrixForm {
    let w = smooth::<rt_core::Matrix>(g, 1, seed, amp);
    let n = g.dim();
    let mut out = MatrixForm::zeros(g, 1);
    for mu in 0..n {
        for nu in 0..n {
            for i in 0..n {
                let a = w.comp(mu * n + nu, i);
                let b = w.comp(mu * n + i, nu);
                let dst = out.comp_mut(mu * n + nu, i);
                for p in 0..dst.len() {
                    dst[p] = 0.5 * (a[p] + b[p]);
                }
            }
        }
    }
    out
}

/// Max of |v| over points at least `margin` layers inside.
pub fn interior_max<K: Kind>(f: &Form<K>, margin: usize) -> f64 {
    f.masked_interior(margin).max_abs()
}

pub fn order(hs: &[f64], es: &[f64]) -> f64 {
    rt_core::norms::convergence_order(hs, es)
}
