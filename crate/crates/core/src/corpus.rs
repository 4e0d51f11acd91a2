//! Seed-deterministic generators of test connections.
//!
//! All randomness comes from [`crate::rng::SplitMix64`]; the order of draws is
//! part of the format and documented on each generator.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::calculus::ext_d;
use crate::error::{Error, Result};
use crate::forms::{Connection, MatrixForm, VectorForm};
use crate::geometry::{discrete_jacobian, pullback_sampled};
use crate::grid::Grid;
use crate::norms::lp_norm;
use crate::rng::SplitMix64;
use crate::rt::invert_jacobian;

/// Modes per independent component of a manufactured connection.
pub const MODES: usize = 3;

/// Serializable description of a box grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub shape: Vec<usize>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(&self.shape, &self.lo, &self.hi)
    }
}

impl From<&Grid> for GridSpec {
    fn from(g: &Grid) -> Self {
        Self {
            shape: g.shape().to_vec(),
            lo: g.lo().to_vec(),
            hi: g.hi().to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseKind {
    Flat,
    PureGauge,
    Manufactured,
    Roughened,
    Family,
}

impl std::str::FromStr for CaseKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(CaseKind::Flat),
            "pure-gauge" => Ok(CaseKind::PureGauge),
            "manufactured" => Ok(CaseKind::Manufactured),
            "roughened" => Ok(CaseKind::Roughened),
            "family" => Ok(CaseKind::Family),
            other => Err(Error::InvalidArgument(format!("unknown case kind '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub kind: CaseKind,
    pub seed: u64,
    pub amplitude: f64,
    pub grid: GridSpec,
    #[serde(default)]
    pub family_size: usize,
    #[serde(default)]
    pub bound_m: f64,
    /// Exponent of the `‖dΓ‖_{L^p}` part of the family bound.
    #[serde(default = "default_norm_p")]
    pub norm_p: f64,
}

fn default_norm_p() -> f64 {
    4.0
}

impl CaseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0) {
            return Err(Error::InvalidArgument("amplitude must be non-negative".into()));
        }
        if self.kind == CaseKind::Family && self.family_size < 2 {
            return Err(Error::InvalidArgument("family needs at least two members".into()));
        }
        self.grid.build().map(|_| ())
    }
}

/// Generated case: the connections plus whatever ground truth the kind provides.
#[derive(Clone, Debug)]
pub struct Case {
    pub spec: CaseSpec,
    pub connections: Vec<Connection>,
    pub truth_jacobian: Option<MatrixForm>,
    pub smooth: Option<Connection>,
}

pub fn generate(spec: &CaseSpec) -> Result<Case> {
    spec.validate()?;
    let grid = spec.grid.build()?;
    let mut case = Case {
        spec: spec.clone(),
        connections: Vec::new(),
        truth_jacobian: None,
        smooth: None,
    };
    match spec.kind {
        CaseKind::Flat => case.connections.push(gen_flat(&grid)),
        CaseKind::PureGauge => {
            let (g, j) = gen_pure_gauge(&grid, spec.seed, spec.amplitude)?;
            case.connections.push(g);
            case.truth_jacobian = Some(j);
        }
        CaseKind::Manufactured => case
            .connections
            .push(gen_manufactured(&grid, spec.seed, spec.amplitude).sample(&grid)),
        CaseKind::Roughened => {
            let r = gen_roughened(&grid, spec.seed, spec.amplitude)?;
            case.connections.push(r.rough);
            case.smooth = Some(r.smooth);
        }
        CaseKind::Family => {
            case.connections = gen_family(&grid, spec.seed, spec.bound_m, spec.family_size, spec.norm_p)?
        }
    }
    Ok(case)
}

pub fn gen_flat(grid: &Grid) -> Connection {
    MatrixForm::zeros(grid, 1)
}

/// One Fourier mode `c · sin(k·x + φ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub c: f64,
    pub k: Vec<f64>,
    pub phase: f64,
}

impl Mode {
    fn draw(rng: &mut SplitMix64, grid: &Grid) -> Self {
        let c = rng.symmetric();
        let k = (0..grid.dim())
            .map(|a| {
                let m = rng.below(3) as f64;
                PI * m / (grid.hi()[a] - grid.lo()[a])
            })
            .collect();
        let phase = rng.range(0.0, 2.0 * PI);
        Self { c, k, phase }
    }

    fn arg(&self, x: &[f64]) -> f64 {
        self.k.iter().zip(x).map(|(k, x)| k * x).sum::<f64>() + self.phase
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.c * self.arg(x).sin()
    }

    fn derivative(&self, x: &[f64], j: usize) -> f64 {
        self.c * self.k[j] * self.arg(x).cos()
    }
}

/// Smooth connection `Γ^μ_{νi}`, symmetric in `(ν, i)`, given by finite trig series.
///
/// Draw order: for `μ`, then `ν ≤ i` lexicographically, `MODES` modes each,
/// every mode drawing `c`, then `k` per axis, then the phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManufacturedConnection {
    pub n: usize,
    pub amplitude: f64,
    /// Indexed by `(μ, ν, i)` with `ν ≤ i`.
    pub modes: Vec<((usize, usize, usize), Vec<Mode>)>,
}

impl ManufacturedConnection {
    fn modes_of(&self, mu: usize, nu: usize, i: usize) -> &[Mode] {
        let (a, b) = if nu <= i { (nu, i) } else { (i, nu) };
        &self
            .modes
            .iter()
            .find(|(key, _)| *key == (mu, a, b))
            .expect("all index triples present")
            .1
    }

    pub fn value(&self, mu: usize, nu: usize, i: usize, x: &[f64]) -> f64 {
        self.amplitude * self.modes_of(mu, nu, i).iter().map(|m| m.value(x)).sum::<f64>()
    }

    pub fn derivative(&self, mu: usize, nu: usize, i: usize, j: usize, x: &[f64]) -> f64 {
        self.amplitude * self.modes_of(mu, nu, i).iter().map(|m| m.derivative(x, j)).sum::<f64>()
    }

    /// All components at `x`, in storage order `(μ, ν, i)`.
    pub fn values(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = Vec::with_capacity(n * n * n);
        for mu in 0..n {
            for nu in 0..n {
                for i in 0..n {
                    out.push(self.value(mu, nu, i, x));
                }
            }
        }
        out
    }

    pub fn sample(&self, grid: &Grid) -> Connection {
        let n = self.n;
        MatrixForm::from_fn(grid, 1, |slot, m, x| {
            let i = crate::multi::indices(m).next().unwrap();
            self.value(slot / n, slot % n, i, x)
        })
    }

    /// Closed-form `dΓ`: `(dΓ)_{ab} = ∂_a Γ_b − ∂_b Γ_a`.
    pub fn exact_d(&self, grid: &Grid) -> MatrixForm {
        let n = self.n;
        MatrixForm::from_fn(grid, 2, |slot, m, x| {
            let mut it = crate::multi::indices(m);
            let (a, b) = (it.next().unwrap(), it.next().unwrap());
            let (mu, nu) = (slot / n, slot % n);
            self.derivative(mu, nu, b, a, x) - self.derivative(mu, nu, a, b, x)
        })
    }

    /// Closed-form curvature `dΓ + Γ ∧ Γ` at `x`, in storage order `(μν, ab)`
    /// with `a < b` lexicographic.
    pub fn riemann_at(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let v = self.values(x);
        let g = |mu: usize, nu: usize, i: usize| v[(mu * n + nu) * n + i];
        let pairs: Vec<(usize, usize)> = crate::multi::basis(n, 2)
            .iter()
            .map(|&m| {
                let mut it = crate::multi::indices(m);
                (it.next().unwrap(), it.next().unwrap())
            })
            .collect();
        let mut out = Vec::with_capacity(n * n * pairs.len());
        for mu in 0..n {
            for nu in 0..n {
                for &(a, b) in &pairs {
                    let mut s = self.derivative(mu, nu, b, a, x) - self.derivative(mu, nu, a, b, x);
                    for sg in 0..n {
                        s += g(mu, sg, a) * g(sg, nu, b) - g(mu, sg, b) * g(sg, nu, a);
                    }
                    out.push(s);
                }
            }
        }
        out
    }

    pub fn exact_riemann(&self, grid: &Grid) -> MatrixForm {
        let c = crate::multi::binom(self.n, 2);
        let mut out = MatrixForm::zeros(grid, 2);
        for p in 0..grid.len() {
            let r = self.riemann_at(&grid.point(p));
            for (k, v) in r.into_iter().enumerate() {
                out.set(k / c, k % c, p, v);
            }
        }
        out
    }
}

pub fn gen_manufactured(grid: &Grid, seed: u64, amplitude: f64) -> ManufacturedConnection {
    let n = grid.dim();
    let mut rng = SplitMix64::new(seed);
    let mut modes = Vec::new();
    for mu in 0..n {
        for nu in 0..n {
            for i in nu..n {
                let ms = (0..MODES).map(|_| Mode::draw(&mut rng, grid)).collect();
                modes.push(((mu, nu, i), ms));
            }
        }
    }
    ManufacturedConnection { n, amplitude, modes }
}

/// Smooth potential `φ^μ(x)`, `MODES` modes per component, drawn after the seed is offset.
fn potential(grid: &Grid, seed: u64) -> Vec<Vec<Mode>> {
    let mut rng = SplitMix64::new(seed ^ 0x5851_F42D_4C95_7F2D);
    (0..grid.dim())
        .map(|_| (0..MODES).map(|_| Mode::draw(&mut rng, grid)).collect())
        .collect()
}

/// Pure-gauge connection `Γ = J⁻¹ dJ` with `J` the discrete gradient of
/// `x + amplitude·φ(x)`, so `J` is exactly curl-free.
pub fn gen_pure_gauge(grid: &Grid, seed: u64, amplitude: f64) -> Result<(Connection, MatrixForm)> {
    let modes = potential(grid, seed);
    let phi = VectorForm::from_fn(grid, 0, |mu, _, x| {
        x[mu] + amplitude * modes[mu].iter().map(|m| m.value(x)).sum::<f64>()
    });
    let j = discrete_jacobian(&phi)?;
    for p in 0..grid.len() {
        let det = j.matrix_at(0, p).determinant();
        if !(det > 1e-3) {
            return Err(Error::InvalidArgument(format!(
                "amplitude {amplitude} too large: Jacobian degenerates at point {p} (det {det:e})"
            )));
        }
    }
    let inv = invert_jacobian(&j, 1e-3)?;
    let gamma = crate::calculus::left_mul(&inv.jinv, &ext_d(&j)?)?;
    Ok((gamma, j))
}

/// A roughened connection together with its smooth origin.
#[derive(Clone, Debug)]
pub struct Roughened {
    pub rough: Connection,
    pub smooth: Connection,
    pub smooth_def: ManufacturedConnection,
    /// Sampled map `Φ`.
    pub map: VectorForm,
    /// Discrete Jacobian of `Φ`.
    pub k: MatrixForm,
    /// Location of the kink hyperplane `x¹ = c`.
    pub kink: f64,
    pub min_det: f64,
}

/// Position of the kink: an irrational offset from the centre of axis 0.
pub fn kink_position(grid: &Grid) -> f64 {
    grid.center()[0] + (2f64.sqrt() - 1.0) * 0.05 * (grid.hi()[0] - grid.lo()[0])
}

fn bump(grid: &Grid, x: &[f64]) -> f64 {
    let c = grid.center();
    let mut b = 1.0;
    for a in 1..grid.dim() {
        let t = (x[a] - c[a]) / (grid.hi()[a] - grid.lo()[a]);
        b *= 1.0 + 0.3 * (2.0 * PI * t).cos();
    }
    b
}

/// The roughening map `Φ(x) = x + amplitude·max(x¹ − c, 0)²·bump(x²…) e_1`.
pub fn roughening_map(grid: &Grid, amplitude: f64) -> impl Fn(&[f64]) -> Vec<f64> + Sync + '_ {
    let c = kink_position(grid);
    move |x: &[f64]| {
        let mut y = x.to_vec();
        let r = (x[0] - c).max(0.0);
        y[0] += amplitude * r * r * bump(grid, x);
        y
    }
}

/// Pulls a smooth manufactured connection back through a map whose Jacobian
/// has a jump in its derivative across `x¹ = c`.
pub fn gen_roughened(grid: &Grid, seed: u64, amplitude: f64) -> Result<Roughened> {
    let smooth_def = gen_manufactured(grid, seed, 1.0);
    let smooth = smooth_def.sample(grid);
    let map = roughening_map(grid, amplitude);
    let phi = crate::geometry::sample_map(&map, grid);
    let k = discrete_jacobian(&phi)?;
    let mut min_det = f64::INFINITY;
    for p in 0..grid.len() {
        min_det = min_det.min(k.matrix_at(0, p).determinant());
    }
    if !(min_det > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "roughening map is not bi-Lipschitz (min det {min_det:e})"
        )));
    }
    let n = grid.dim();
    let mut hat = MatrixForm::zeros(grid, 1);
    for p in 0..grid.len() {
        let y: Vec<f64> = (0..n).map(|mu| phi.get(mu, 0, p)).collect();
        let v = smooth_def.values(&y);
        for slot in 0..n * n {
            for i in 0..n {
                hat.set(slot, i, p, v[slot * n + i]);
            }
        }
    }
    let rough = pullback_sampled(&hat, &k, 1e-12)?;
    Ok(Roughened {
        rough,
        smooth,
        smooth_def,
        map: phi,
        k,
        kink: kink_position(grid),
        min_det,
    })
}

/// `‖Γ‖_{L^∞} + ‖dΓ‖_{L^p}`.
pub fn family_bound(gamma: &Connection, p: f64) -> Result<f64> {
    Ok(gamma.max_abs() + lp_norm(&ext_d(gamma)?, p)?)
}

/// `count` connections alternating roughened and manufactured members, each
/// scaled so that `‖Γ‖_{L^∞} + ‖dΓ‖_{L^p} = bound`.
pub fn gen_family(grid: &Grid, seed: u64, bound: f64, count: usize, p: f64) -> Result<Vec<Connection>> {
    if count < 2 {
        return Err(Error::InvalidArgument("family needs at least two members".into()));
    }
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let s = seed.wrapping_add(i as u64);
        let g = if i % 2 == 0 {
            gen_roughened(grid, s, 0.6)?.rough
        } else {
            gen_manufactured(grid, s, 1.0).sample(grid)
        };
        let norm = family_bound(&g, p)?;
        out.push(if norm > 0.0 { g.scale(bound / norm) } else { g });
    }
    Ok(out)
}
