//! Property suites evaluated over three grid resolutions.
//!
//! Each suite returns a table of rows; a row holds one measured quantity per
//! level (or per case) and the check applied to it.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calculus::*;
use crate::corpus::{gen_family, gen_pure_gauge, gen_roughened};
use crate::elliptic::{helmholtz_project, solve_poisson_dirichlet, solve_poisson_neumann_zero_mean};
use crate::error::{Error, Result};
use crate::forms::{Form, Kind, Matrix, MatrixForm, Vector, VectorForm};
use crate::geometry::{regularity_indicator, smoothed_connection, DIAGNOSTIC_WINDOW};
use crate::grid::Grid;
use crate::norms::{convergence_order, lp_norm_in, Region};
use crate::rng::SplitMix64;
use crate::rt::{invert_jacobian, run, RTSolution, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Calculus,
    Elliptic,
    Gauge,
    Roundtrip,
    Family,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Calculus, Suite::Elliptic, Suite::Gauge, Suite::Roundtrip, Suite::Family];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Calculus => "calculus",
            Suite::Elliptic => "elliptic",
            Suite::Gauge => "gauge",
            Suite::Roundtrip => "roundtrip",
            Suite::Family => "family",
        }
    }

    /// Points per axis of the coarsest level.
    pub fn default_res(self) -> usize {
        match self {
            Suite::Calculus | Suite::Elliptic => 17,
            _ => 33,
        }
    }

    pub fn default_amplitude(self) -> f64 {
        match self {
            Suite::Gauge => 0.1,
            Suite::Roundtrip => 0.6,
            Suite::Family => 2.0,
            _ => 1.0,
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown suite '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "target")]
pub enum Check {
    /// Every value at most the target.
    AtMost(f64),
    /// Every value at least the target.
    AtLeast(f64),
    /// Least-squares convergence order at least the target.
    OrderAtLeast(f64),
    /// Strictly decreasing values.
    Decays,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub name: String,
    pub values: Vec<f64>,
    /// The value the check compares: the order, or the worst value.
    pub measured: f64,
    pub check: Check,
    pub pass: bool,
}

impl Row {
    pub fn new(name: &str, values: Vec<f64>, hs: &[f64], check: Check) -> Self {
        let finite = values.iter().all(|v| v.is_finite());
        let (measured, pass) = match check {
            Check::AtMost(t) => {
                let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                (m, m <= t)
            }
            Check::AtLeast(t) => {
                let m = values.iter().cloned().fold(f64::INFINITY, f64::min);
                (m, m >= t)
            }
            Check::OrderAtLeast(t) => {
                let o = convergence_order(hs, &values);
                (o, o >= t)
            }
            Check::Decays => {
                let o = convergence_order(hs, &values);
                (o, values.windows(2).all(|w| w[1] < w[0]))
            }
        };
        Self {
            name: name.to_string(),
            values,
            measured,
            check,
            pass: finite && pass,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub levels: Vec<usize>,
    pub rows: Vec<Row>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    /// Plain-text pass/fail table.
    pub fn render(&self) -> String {
        let levels: Vec<String> = self.levels.iter().map(|n| format!("{n}")).collect();
        let mut out = format!("suite {} (levels {})\n", self.suite, levels.join("/"));
        out.push_str(&format!("{:<28} {:>12} {:<18} {:<6} values\n", "check", "measured", "target", "result"));
        for r in &self.rows {
            let target = match r.check {
                Check::AtMost(t) => format!("<= {t:.3e}"),
                Check::AtLeast(t) => format!(">= {t:.3}"),
                Check::OrderAtLeast(t) => format!("order >= {t:.2}"),
                Check::Decays => "decays".to_string(),
            };
            let vals: Vec<String> = r.values.iter().map(|v| format!("{v:.3e}")).collect();
            out.push_str(&format!(
                "{:<28} {:>12.4e} {:<18} {:<6} {}\n",
                r.name,
                r.measured,
                target,
                if r.pass { "PASS" } else { "FAIL" },
                vals.join(" ")
            ));
        }
        out.push_str(if self.passed() { "overall PASS\n" } else { "overall FAIL\n" });
        out
    }
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Suite-specific amplitude (pure-gauge amplitude, roughening amplitude or family bound).
    pub amplitude: Option<f64>,
    pub res: Option<usize>,
    pub solver: SolverConfig,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            amplitude: None,
            res: None,
            solver: SolverConfig::default(),
        }
    }
}

/// `[n, 2n − 1, 4n − 3]`: each level halves the spacing of the previous one.
pub fn levels(base: usize) -> Vec<usize> {
    vec![base, 2 * base - 1, 4 * base - 3]
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Result<SuiteReport> {
    let base = opts.res.unwrap_or(suite.default_res());
    if base < 9 {
        return Err(Error::InvalidArgument(format!("base resolution {base} below 9")));
    }
    let amp = opts.amplitude.unwrap_or(suite.default_amplitude());
    if !(amp >= 0.0) {
        return Err(Error::InvalidArgument("amplitude must be non-negative".into()));
    }
    let lv = levels(base);
    let rows = match suite {
        Suite::Calculus => calculus_suite(&lv, opts.seed)?,
        Suite::Elliptic => elliptic_suite(&lv, opts)?,
        Suite::Gauge => gauge_suite(&lv, amp, opts)?,
        Suite::Roundtrip => roundtrip_suite(&lv, amp, opts)?,
        Suite::Family => family_suite(&lv, amp, opts)?,
    };
    Ok(SuiteReport { suite, levels: lv, rows })
}

fn noise<K: Kind>(g: &Grid, degree: usize, seed: u64) -> Form<K> {
    let mut f = Form::<K>::zeros(g, degree);
    SplitMix64::new(seed).fill(f.data_mut());
    f
}

/// Smooth field with random coefficients, one trig combination per component.
fn trig<K: Kind>(g: &Grid, degree: usize, seed: u64, amp: f64) -> Form<K> {
    let mut rng = SplitMix64::new(seed);
    let ncomp = Form::<K>::zeros(g, degree).n_components();
    let coeffs: Vec<[f64; 6]> = (0..ncomp)
        .map(|_| {
            let mut c = [0.0; 6];
            rng.fill(&mut c);
            c
        })
        .collect();
    let table = crate::multi::Table::new(g.dim());
    let nm = table.count(degree);
    Form::<K>::from_fn(g, degree, |slot, m, x| {
        let c = &coeffs[slot * nm + table.pos(m)];
        amp * (c[0] + c[1] * (1.3 * x[0] + c[2]).sin() + c[3] * (1.1 * x[1] + c[4]).cos() + 0.3 * c[5] * x[0] * x[1])
    })
}

fn symmetrized(w: &MatrixForm) -> MatrixForm {
    let n = w.dim();
    let mut out = MatrixForm::zeros(w.grid(), 1);
    for mu in 0..n {
        for nu in 0..n {
            for i in 0..n {
                for p in 0..w.grid().len() {
                    let v = 0.5 * (w.get(mu * n + nu, i, p) + w.get(mu * n + i, nu, p));
                    out.set(mu * n + nu, i, p, v);
                }
            }
        }
    }
    out
}

fn central<K: Kind>(f: &Form<K>) -> Result<f64> {
    lp_norm_in(f, 4.0, &Region::central(f.grid(), DIAGNOSTIC_WINDOW))
}

fn calculus_suite(lv: &[usize], seed: u64) -> Result<Vec<Row>> {
    let mut exact = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    let mut leib = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    let mut hs = Vec::new();
    for &n in lv {
        let g = Grid::unit(2, n)?;
        let h = g.min_spacing();
        hs.push(h);

        let u = noise::<Matrix>(&g, 0, seed);
        exact[0].push(ext_d(&ext_d(&u)?)?.max_abs() / (u.max_abs() / (h * h)));
        let w2 = noise::<Matrix>(&g, 2, seed + 1);
        exact[1].push(codiff(&codiff(&w2)?)?.max_abs() / (w2.max_abs() / (h * h)));
        let uc = u.masked_interior(2);
        let w1 = noise::<Matrix>(&g, 1, seed + 2).masked_interior(2);
        let a = ext_d(&uc)?.dot(&w1)?;
        let b = uc.dot(&codiff(&w1)?)?;
        exact[2].push((a + b).abs() / a.abs().max(b.abs()));
        let lap = hodge_laplacian(&u)?.sub(&laplacian(&u))?.masked_interior(1);
        exact[3].push(lap.max_abs() / (u.max_abs() / (h * h)));

        let j = MatrixForm::identity(&g).add(&trig::<Matrix>(&g, 0, seed + 3, 0.2))?;
        let w = trig::<Matrix>(&g, 1, seed + 4, 1.0);
        let u0 = trig::<Matrix>(&g, 0, seed + 5, 1.0);
        let ws = symmetrized(&trig::<Matrix>(&g, 1, seed + 6, 1.0));

        let lhs = ext_d(&wedge(&w, &u0)?)?;
        let rhs = wedge(&ext_d(&w)?, &u0)?.sub(&wedge(&w, &ext_d(&u0)?)?)?;
        leib[0].push(central(&lhs.sub(&rhs)?)?);
        let lhs = codiff(&left_mul(&j, &w)?)?;
        let rhs = left_mul(&j, &codiff(&w)?)?.add(&mat_inner(&ext_d(&j)?, &w)?)?;
        leib[1].push(central(&lhs.sub(&rhs)?)?);
        let jinv = invert_jacobian(&j, 1e-8)?.jinv;
        let lhs = ext_d(&left_mul(&jinv, &ext_d(&j)?)?)?;
        let rhs = wedge(&ext_d(&jinv)?, &ext_d(&j)?)?;
        leib[2].push(central(&lhs.sub(&rhs)?)?);
        let lhs = ext_d(&vectorize(&codiff(&left_mul(&j, &ws)?)?)?)?;
        let rhs = vec_div(&wedge(&ext_d(&j)?, &ws)?).add(&vec_div(&left_mul(&j, &ext_d(&ws)?)?))?;
        leib[3].push(central(&lhs.sub(&rhs)?)?);
    }
    let names = ["d∘d", "δ∘δ", "summation by parts", "0-form Laplacian"];
    let mut rows: Vec<Row> = names
        .iter()
        .zip(exact)
        .map(|(n, v)| Row::new(n, v, &hs, Check::AtMost(1e-12)))
        .collect();
    let names = ["Leibniz d", "Leibniz δ", "Leibniz J⁻¹dJ", "d vec δ(Jw) commutation"];
    rows.extend(
        names
            .iter()
            .zip(leib)
            .map(|(n, v)| Row::new(n, v, &hs, Check::OrderAtLeast(0.9))),
    );
    Ok(rows)
}

fn elliptic_suite(lv: &[usize], opts: &VerifyOptions) -> Result<Vec<Row>> {
    let cfg = &opts.solver.linear;
    let mut dir = Vec::new();
    let mut neu = Vec::new();
    let mut dd = Vec::new();
    let mut del = Vec::new();
    let mut hs = Vec::new();
    for &n in lv {
        let g = Grid::unit(2, n)?;
        hs.push(g.min_spacing());
        let exact = VectorForm::from_fn(&g, 0, |_, _, x| (PI * x[0]).sin() * (PI * x[1]).sin());
        let f = exact.scale(-2.0 * PI * PI);
        let (u, _) = solve_poisson_dirichlet(&f, &VectorForm::zeros(&g, 0), cfg)?;
        dir.push(u.sub(&exact)?.max_abs());

        let f = VectorForm::from_fn(&g, 0, |_, _, x| (PI * x[0]).cos());
        let (u, _) = solve_poisson_neumann_zero_mean(&f, cfg)?;
        neu.push(u.sub(&f.scale(-1.0 / (PI * PI)))?.max_abs());

        let w = trig::<Vector>(&g, 1, opts.seed + 7, 1.0);
        let (a, _, rep) = helmholtz_project(&w, cfg)?;
        let da = ext_d(&a)?.masked_interior(1);
        let dw = ext_d(&w)?.masked_interior(1);
        dd.push(da.sub(&dw)?.max_abs() / dw.max_abs().max(1.0));
        del.push(rep.codiff_rel);
    }
    Ok(vec![
        Row::new("Dirichlet manufactured", dir, &hs, Check::OrderAtLeast(1.9)),
        Row::new("Neumann manufactured", neu, &hs, Check::OrderAtLeast(1.9)),
        Row::new("Helmholtz keeps d", dd, &hs, Check::AtMost(1e-12)),
        Row::new("Helmholtz |δa|/|w|", del, &hs, Check::AtMost(10.0 * cfg.tol_rel)),
    ])
}

fn domain(n: usize) -> Result<Grid> {
    Grid::cube(2, n, -1.0, 1.0)
}

fn solve_at_center(gamma: &MatrixForm, opts: &VerifyOptions) -> Result<RTSolution> {
    let sol = run(gamma, &gamma.grid().center(), &opts.solver)?;
    if !sol.converged {
        return Err(Error::NonConvergence {
            restarts: sol.restarts,
            ratios: sol.history.iter().map(|r| r.ratio).collect(),
            history: sol.history,
        });
    }
    Ok(sol)
}

fn gauge_suite(lv: &[usize], amp: f64, opts: &VerifyOptions) -> Result<Vec<Row>> {
    let mut hs = Vec::new();
    let (mut curl, mut map, mut delta, mut first, mut riem) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for &n in lv {
        let g = domain(n)?;
        let (gamma, _) = gen_pure_gauge(&g, opts.seed, amp)?;
        let sol = solve_at_center(&gamma, opts)?;
        let d = &sol.diagnostics;
        let h = sol.j.grid().min_spacing();
        hs.push(h);
        curl.push(d.curl_res);
        map.push(d.map_res / h);
        delta.push(d.delta_identity_res);
        first.push(d.first_rt_res);
        riem.push(d.riem_flat_res);
    }
    let trivial = amp == 0.0;
    let order_or_zero = |name: &str, v: Vec<f64>, t: f64| {
        if trivial {
            Row::new(name, v, &hs, Check::AtMost(1e-12))
        } else {
            Row::new(name, v, &hs, Check::OrderAtLeast(t))
        }
    };
    Ok(vec![
        Row::new("curl |dJ|", curl, &hs, Check::AtMost(10.0 * opts.solver.linear.tol_rel)),
        Row::new("|vec J − d(x+εy)| / h", map, &hs, Check::AtMost(1.0)),
        order_or_zero("δΓ̃ − J⁻¹A′", delta, 0.9),
        order_or_zero("first RT equation", first, 0.5),
        order_or_zero("Riemann-flat", riem, 0.9),
    ])
}

fn roundtrip_suite(lv: &[usize], amp: f64, opts: &VerifyOptions) -> Result<Vec<Row>> {
    let mut hs = Vec::new();
    let mut rough = Vec::new();
    let mut smooth = Vec::new();
    let mut riem = Vec::new();
    for &n in lv {
        let g = domain(n)?;
        let r = gen_roughened(&g, opts.seed, amp)?;
        let sol = solve_at_center(&r.rough, opts)?;
        hs.push(sol.j.grid().min_spacing());
        riem.push(sol.diagnostics.riem_flat_res);
        rough.push(sol.gamma());
        smooth.push(smoothed_connection(&sol)?);
    }
    let p = opts.solver.p;
    let a = regularity_indicator(&rough, p, DIAGNOSTIC_WINDOW)?;
    let b = regularity_indicator(&smooth, p, DIAGNOSTIC_WINDOW)?;
    let gap_target = if amp > 0.0 { 0.5 } else { -0.1 };
    Ok(vec![
        Row::new("W1p Γ_rough", a.w1p.clone(), &hs, Check::AtLeast(0.0)),
        Row::new("W1p Γ_y", b.w1p.clone(), &hs, Check::AtLeast(0.0)),
        Row::new("rate gain", vec![a.rate - b.rate], &hs, Check::AtLeast(gap_target)),
        Row::new("Riemann-flat", riem, &hs, Check::Decays),
    ])
}

fn family_suite(lv: &[usize], bound: f64, opts: &VerifyOptions) -> Result<Vec<Row>> {
    const COUNT: usize = 10;
    let p = opts.solver.p;
    let mut per_case: Vec<Vec<MatrixForm>> = vec![Vec::new(); COUNT];
    let mut hs = Vec::new();
    for &n in lv {
        let g = domain(n)?;
        let fam = gen_family(&g, opts.seed, bound, COUNT, p)?;
        for (i, gamma) in fam.iter().enumerate() {
            let sol = solve_at_center(gamma, opts)?;
            if i == 0 {
                hs.push(sol.j.grid().min_spacing());
            }
            per_case[i].push(smoothed_connection(&sol)?);
        }
    }
    let mut bounds = Vec::new();
    let mut rates = Vec::new();
    for levels in &per_case {
        let ind = regularity_indicator(levels, p, DIAGNOSTIC_WINDOW)?;
        bounds.push(ind.w1p.iter().cloned().fold(0.0, f64::max));
        rates.push(ind.rate);
    }
    let hi = bounds.iter().cloned().fold(0.0, f64::max);
    let lo = bounds.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = if bound == 0.0 { 1.0 } else { hi / lo };
    Ok(vec![
        Row::new("W1p(Γ_y) per case", bounds, &hs, Check::AtMost(bound.max(1e-12))),
        Row::new("max/min spread", vec![spread], &hs, Check::AtMost(10.0)),
        Row::new("W1p refinement rate", rates, &hs, Check::AtMost(0.25)),
    ])
}
