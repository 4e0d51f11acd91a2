use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rt_core::corpus::{generate, CaseKind, CaseSpec, GridSpec};
use rt_core::geometry::{gamma_tilde, locally_inertial, smoothed_connection, Diagnostics};
use rt_core::io::{load, save};
use rt_core::rt::{run, write_history_csv, RTSolution};
use rt_core::verify::{run_suite, Suite, VerifyOptions};
use rt_core::{Error, Grid, MatrixForm};
use serde_json::{json, Value};

use crate::config::{Command, RunConfig};
use crate::Failure;

type Outcome = Result<(), Failure>;

/// Library errors that come from the numerics exit 2; the rest are usage or I/O.
fn is_numerical(e: &Error) -> bool {
    match e {
        Error::Stage { source, .. } => is_numerical(source),
        Error::NonConvergence { .. }
        | Error::SolverFailure { .. }
        | Error::Integrability { .. }
        | Error::SingularJacobian { .. }
        | Error::NonFinite(_) => true,
        _ => false,
    }
}

fn classify(e: Error) -> Failure {
    if is_numerical(&e) {
        Failure::Numerical(e.to_string())
    } else {
        Failure::Usage(e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    usage(format!("{}: {e}", path.display()))
}

fn create_dir(dir: &Path) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

fn save_form<K: rt_core::Kind>(form: &rt_core::forms::Form<K>, path: &Path) -> Outcome {
    save(form, path).map_err(|e| io_err(path, e))
}

fn load_connection(path: &Path) -> Result<MatrixForm, Failure> {
    let form = load(path).map_err(|e| io_err(path, e))?;
    let gamma = form.into_matrix().map_err(|e| io_err(path, e))?;
    if gamma.degree() != 1 {
        return Err(io_err(path, format!("expected a matrix 1-form, found degree {}", gamma.degree())));
    }
    Ok(gamma)
}

pub fn dispatch(cfg: &RunConfig) -> Outcome {
    match cfg.command {
        Command::Smooth => cmd_smooth(cfg),
        Command::Verify => cmd_verify(cfg),
        Command::Corpus => cmd_corpus(cfg),
        Command::Inertial => cmd_inertial(cfg),
        Command::Report => cmd_report(cfg),
    }
}

fn point_or_center(cfg: &RunConfig, grid: &Grid) -> Result<Vec<f64>, Failure> {
    match &cfg.point {
        None => Ok(grid.center()),
        Some(q) if q.len() != grid.dim() => Err(usage(format!("--point has {} coordinates, grid is {}-D", q.len(), grid.dim()))),
        Some(q) if !grid.contains(q) => Err(usage(format!("point {q:?} lies outside the domain"))),
        Some(q) => Ok(q.clone()),
    }
}

fn write_solution(sol: &RTSolution, dir: &Path) -> Outcome {
    save_form(&sol.j, &dir.join("J.rtf1"))?;
    save_form(&sol.jinv, &dir.join("Jinv.rtf1"))?;
    save_form(&sol.b, &dir.join("B.rtf1"))?;
    save_form(&sol.y, &dir.join("y.rtf1"))?;
    let gt = gamma_tilde(&sol.gamma(), &sol.j, &sol.jinv).map_err(classify)?;
    save_form(&gt, &dir.join("gamma_tilde.rtf1"))?;
    let gy = smoothed_connection(sol).map_err(classify)?;
    save_form(&gy, &dir.join("gamma_y.rtf1"))?;
    write_json(&dir.join("diagnostics.json"), &sol.diagnostics)?;
    write_history(&sol.history, dir)
}

fn write_history(history: &[rt_core::rt::IterationRecord], dir: &Path) -> Outcome {
    let path = dir.join("iterations.csv");
    let mut buf = Vec::new();
    write_history_csv(history, &mut buf).map_err(|e| io_err(&path, e))?;
    fs::write(&path, buf).map_err(|e| io_err(&path, e))
}

fn cmd_smooth(cfg: &RunConfig) -> Outcome {
    let input = cfg.single_input().map_err(usage)?;
    let dir = cfg.out_dir().map_err(usage)?;
    let gamma = load_connection(input)?;
    let q = point_or_center(cfg, gamma.grid())?;
    create_dir(dir)?;
    match run(&gamma, &q, &cfg.solver) {
        Ok(sol) => {
            write_solution(&sol, dir)?;
            let d = &sol.diagnostics;
            println!(
                "iterations {} restarts {} epsilon {} riem_flat_res {:.3e} curl_res {:.3e}",
                sol.iterations,
                sol.restarts,
                sol.epsilon(),
                d.riem_flat_res,
                d.curl_res
            );
            if sol.converged {
                Ok(())
            } else {
                Err(Failure::Numerical(format!("no convergence within {} iterations", cfg.solver.max_iter)))
            }
        }
        Err(Error::NonConvergence { restarts, ratios, history }) => {
            write_history(&history, dir)?;
            let diag = Diagnostics {
                iterations: history.len(),
                restarts,
                converged: false,
                ..Default::default()
            };
            write_json(&dir.join("diagnostics.json"), &diag)?;
            Err(Failure::Numerical(format!("iteration diverged after {restarts} epsilon halvings (ratios {ratios:?})")))
        }
        Err(e) => Err(classify(e)),
    }
}

fn cmd_verify(cfg: &RunConfig) -> Outcome {
    let name = cfg.suite.as_deref().ok_or_else(|| usage("--suite is required"))?;
    let suite: Suite = name.parse().map_err(|e: Error| usage(e.to_string()))?;
    let opts = VerifyOptions {
        seed: cfg.seed,
        amplitude: cfg.amplitude,
        res: cfg.res,
        solver: cfg.solver.clone(),
    };
    let report = run_suite(suite, &opts).map_err(classify)?;
    print!("{}", report.render());
    if let Some(dir) = &cfg.out {
        create_dir(dir)?;
        write_json(&dir.join(format!("verify_{suite}.json")), &report)?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Numerical(format!("suite {suite} failed")))
    }
}

fn cmd_corpus(cfg: &RunConfig) -> Outcome {
    let dir = cfg.out_dir().map_err(usage)?;
    let kind: CaseKind = cfg
        .kind
        .as_deref()
        .ok_or_else(|| usage("--kind is required"))?
        .parse()
        .map_err(|e: Error| usage(e.to_string()))?;
    let n = cfg.res.unwrap_or(33);
    let grid = Grid::cube(cfg.dim, n, -1.0, 1.0).map_err(classify)?;
    let spec = CaseSpec {
        kind,
        seed: cfg.seed,
        amplitude: cfg.amplitude.unwrap_or(0.1),
        grid: GridSpec::from(&grid),
        family_size: if kind == CaseKind::Family { cfg.family_size } else { 0 },
        bound_m: cfg.bound,
        norm_p: cfg.solver.p,
    };
    let case = generate(&spec).map_err(classify)?;
    create_dir(dir)?;
    let mut files = Vec::new();
    for (i, gamma) in case.connections.iter().enumerate() {
        let name = if case.connections.len() == 1 { "case.rtf1".to_string() } else { format!("case_{i:02}.rtf1") };
        save_form(gamma, &dir.join(&name))?;
        files.push(name);
    }
    let mut extra = serde_json::Map::new();
    if let Some(j) = &case.truth_jacobian {
        save_form(j, &dir.join("truth_jacobian.rtf1"))?;
        extra.insert("truth_jacobian".into(), json!("truth_jacobian.rtf1"));
    }
    if let Some(s) = &case.smooth {
        save_form(s, &dir.join("smooth.rtf1"))?;
        extra.insert("smooth".into(), json!("smooth.rtf1"));
    }
    let sidecar = json!({ "spec": spec, "files": files, "ground_truth": extra });
    write_json(&dir.join("case.json"), &sidecar)?;
    println!("{} connection(s) written to {}", files.len(), dir.display());
    Ok(())
}

fn cmd_inertial(cfg: &RunConfig) -> Outcome {
    let input = cfg.single_input().map_err(usage)?;
    let dir = cfg.out_dir().map_err(usage)?;
    let gamma = load_connection(input)?;
    let q = point_or_center(cfg, gamma.grid())?;
    let (map, gz, report) = locally_inertial(&gamma, &q, cfg.solver.p).map_err(classify)?;
    create_dir(dir)?;
    save_form(&gz, &dir.join("gamma_z.rtf1"))?;
    write_json(&dir.join("inertial.json"), &json!({ "map": map, "report": report }))?;
    println!(
        "|Γ_z(q)| {:.3e}  |Γ_y|_inf {:.3e}  fitted exponent {:.3}",
        report.gamma_z_at_q, report.gamma_y_linf, report.fitted_exponent
    );
    Ok(())
}

/// Scalar diagnostics, in CSV column order.
pub const REPORT_COLUMNS: [&str; 17] = [
    "riem_flat_res",
    "curl_res",
    "first_rt_res",
    "delta_identity_res",
    "reduced_rt_res",
    "reduced_rt_j_res",
    "reduced_rt_db_res",
    "reduced_rt_deltab_res",
    "curl_max",
    "map_res",
    "min_det_j",
    "inverse_res",
    "potential_gap",
    "epsilon",
    "iterations",
    "restarts",
    "converged",
];

fn diagnostics_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("diagnostics.json")
    } else {
        p.to_path_buf()
    }
}

fn run_name(p: &Path) -> String {
    let base = if p.is_dir() { Some(p) } else { p.parent().filter(|d| !d.as_os_str().is_empty()) };
    base.and_then(|d| d.file_name())
        .or_else(|| p.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn cmd_report(cfg: &RunConfig) -> Outcome {
    if cfg.input.is_empty() {
        return Err(usage("--input needs at least one diagnostics file or run directory"));
    }
    let mut out = format!("run,{}\n", REPORT_COLUMNS.join(","));
    for p in &cfg.input {
        let path = diagnostics_path(p);
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let d: Diagnostics = serde_json::from_str(&text).map_err(|e| io_err(&path, e))?;
        let v = serde_json::to_value(&d).map_err(|e| io_err(&path, e))?;
        let mut row = vec![csv_field(&run_name(p))];
        for col in REPORT_COLUMNS {
            row.push(match &v[col] {
                Value::Null => String::new(),
                other => other.to_string(),
            });
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    match &cfg.out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                create_dir(parent)?;
            }
            fs::write(path, out).map_err(|e| io_err(path, e))
        }
        None => std::io::stdout().write_all(out.as_bytes()).map_err(|e| usage(e.to_string())),
    }
}
