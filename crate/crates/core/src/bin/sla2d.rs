//! Batch entry point: drive runs, certification, verification suites and
//! mesh generation from the command line.
//!
//! Exit codes: 0 success; 1 config/mesh/usage errors; 2 step increment too
//! large; 3 solver failure; 4 strict-certification failure; 5 certify found
//! the state not admissible.

use clap::{Parser, Subcommand};
use serde::Serialize;
use sla2d::coercivity::{auto_alpha, certify, default_k, spectral_of, SpectralState};
use sla2d::config::{build_setup, RunConfig};
use sla2d::driver::{run, DriverError};
use sla2d::mesh::Mesh;
use sla2d::tensor::Tensor2;
use sla2d::verify::run_suites;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sla2d", version, about = "Plane-strain Mooney-Rivlin solver with step-wise linearization and coercivity certification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the stepped run described by a JSON config.
    Run {
        config: PathBuf,
        /// Accept meshes without a clamped boundary.
        #[arg(long)]
        allow_empty_clamped: bool,
    },
    /// Check the well-posedness hypotheses and report the admissible beta0.
    Certify {
        config: PathBuf,
        /// Coercivity constant (default: from config, else automatic).
        #[arg(long)]
        alpha: Option<f64>,
        /// Lower bound on det B0 (default: from config, else the regime default).
        #[arg(long)]
        k: Option<f64>,
        /// Upper end of the beta search (default: from config).
        #[arg(long)]
        beta_max: Option<f64>,
        /// Certify explicit spectral points `gamma1,gamma2,p0` instead of
        /// the configured initial state. Repeatable.
        #[arg(long = "point", value_name = "G1,G2,P0")]
        points: Vec<String>,
        /// Where to write the report (default: output dir from config).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        allow_empty_clamped: bool,
    },
    /// Run a verification suite: quadform | psd | patch | pure-shear | all.
    Verify {
        suite: String,
        /// Seed for the randomized suites.
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Generate a structured rectangle mesh and write the native format.
    MeshGen {
        #[arg(long)]
        nx: usize,
        #[arg(long)]
        ny: usize,
        #[arg(long, default_value_t = 1.0)]
        width: f64,
        #[arg(long, default_value_t = 1.0)]
        height: f64,
        /// Labels for bottom,right,top,left.
        #[arg(long, default_value = "3,1,3,1")]
        labels: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Serialize)]
struct RunSummary<'a> {
    steps: usize,
    diagnostics: &'a [sla2d::driver::DiagnosticsRecord],
    reports: &'a [Option<sla2d::coercivity::CoercivityReport>],
    warnings: &'a [String],
    final_mean_stress: StressOut,
    max_abs_det_drift: f64,
}

#[derive(Serialize)]
struct StressOut {
    t11: f64,
    t12: f64,
    t21: f64,
    t22: f64,
}

impl From<Tensor2> for StressOut {
    fn from(t: Tensor2) -> StressOut {
        StressOut { t11: t.xx, t12: t.xy, t21: t.yx, t22: t.yy }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config, allow_empty_clamped } => cmd_run(&config, allow_empty_clamped),
        Command::Certify { config, alpha, k, beta_max, points, out, allow_empty_clamped } => {
            cmd_certify(&config, alpha, k, beta_max, &points, out, allow_empty_clamped)
        }
        Command::Verify { suite, seed } => cmd_verify(&suite, seed),
        Command::MeshGen { nx, ny, width, height, labels, out } => {
            cmd_mesh_gen(nx, ny, width, height, &labels, &out)
        }
    };
    ExitCode::from(code)
}

fn fail(msg: impl std::fmt::Display, code: u8) -> u8 {
    eprintln!("error: {msg}");
    code
}

fn cmd_run(config_path: &PathBuf, allow_empty_clamped: bool) -> u8 {
    let cfg = match RunConfig::from_path(config_path) {
        Ok(c) => c,
        Err(e) => return fail(e, 1),
    };
    let (setup, warnings) = match build_setup(&cfg, allow_empty_clamped) {
        Ok(s) => s,
        Err(e) => return fail(e, 1),
    };
    for w in &warnings {
        eprintln!("warning: {w}");
    }

    let result = match run(&setup) {
        Ok(r) => r,
        Err(e) => {
            let code = match &e {
                DriverError::StepTooLarge { .. } => 2,
                DriverError::Solver { .. } => 3,
                DriverError::Certification { .. } => 4,
                _ => 1,
            };
            return fail(e, code);
        }
    };
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }

    let summary = RunSummary {
        steps: setup.schedule.total_steps,
        diagnostics: &result.diagnostics,
        reports: &result.reports,
        warnings: &result.warnings,
        final_mean_stress: result.mean_stress().into(),
        max_abs_det_drift: result.max_abs_det_drift(),
    };
    let summary_path = setup
        .output
        .dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("."))
        .join("run_summary.json");
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    if let Err(e) = std::fs::write(&summary_path, text) {
        return fail(format!("cannot write {}: {e}", summary_path.display()), 1);
    }
    println!(
        "completed {} steps; mean T12 = {:.6}; summary at {}",
        setup.schedule.total_steps,
        summary.final_mean_stress.t12,
        summary_path.display()
    );
    0
}

fn parse_point(text: &str) -> Result<(f64, f64, f64), String> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected `gamma1,gamma2,p0`, got `{text}`"));
    }
    let mut vals = [0.0; 3];
    for (v, p) in vals.iter_mut().zip(&parts) {
        *v = p.trim().parse::<f64>().map_err(|e| format!("bad number `{p}`: {e}"))?;
    }
    Ok((vals[0], vals[1], vals[2]))
}

fn cmd_certify(
    config_path: &PathBuf,
    alpha_flag: Option<f64>,
    k_flag: Option<f64>,
    beta_max_flag: Option<f64>,
    point_args: &[String],
    out: Option<PathBuf>,
    allow_empty_clamped: bool,
) -> u8 {
    let cfg = match RunConfig::from_path(config_path) {
        Ok(c) => c,
        Err(e) => return fail(e, 1),
    };
    let (setup, _) = match build_setup(&cfg, allow_empty_clamped) {
        Ok(s) => s,
        Err(e) => return fail(e, 1),
    };
    let params = setup.params;

    let points: Vec<SpectralState> = if point_args.is_empty() {
        // The configured initial state: B0 = I at the initial pressure.
        let state = match sla2d::constitutive::QuadPointState::initial(setup.p0_initial, &params) {
            Ok(s) => s,
            Err(e) => return fail(e, 1),
        };
        match spectral_of(&state.b0, state.p0, &params) {
            Ok(s) => vec![s; setup.mesh.triangles.len().max(1)],
            Err(e) => return fail(e, 1),
        }
    } else {
        let mut pts = Vec::with_capacity(point_args.len());
        for arg in point_args {
            let (g1, g2, p0) = match parse_point(arg) {
                Ok(p) => p,
                Err(e) => return fail(e, 1),
            };
            match SpectralState::from_eigenvalues(g1.max(g2), g1.min(g2), p0, &params) {
                Ok(s) => pts.push(s),
                Err(e) => return fail(e, 1),
            }
        }
        pts
    };

    let k = k_flag.or(setup.certification.k).unwrap_or_else(|| default_k(&params));
    let alpha = alpha_flag
        .or(setup.certification.alpha)
        .unwrap_or_else(|| auto_alpha(&points, k, &params));
    let beta_max = beta_max_flag.unwrap_or(setup.certification.beta_max);

    let report = match certify(&points, alpha, k, beta_max, &params) {
        Ok(r) => r,
        Err(e) => return fail(e, 1),
    };

    let base = out.or(setup.output.dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    let path = if base.extension().is_some_and(|e| e == "json") {
        base
    } else {
        base.join("coercivity_report.json")
    };
    if let Some(parent) = path.parent() {
        if let Err(e) = std::fs::create_dir_all(parent) {
            return fail(format!("cannot create {}: {e}", parent.display()), 1);
        }
    }
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Err(e) = std::fs::write(&path, text) {
        return fail(format!("cannot write {}: {e}", path.display()), 1);
    }

    if report.admissible {
        println!(
            "admissible: beta0 = {:.9} (alpha = {:.6}, k = {}, dbar = {:.6}); report at {}",
            report.beta0.unwrap(),
            report.alpha,
            report.k,
            report.dbar,
            path.display()
        );
        0
    } else {
        println!(
            "not admissible: {}; report at {}",
            report.violation.as_deref().unwrap_or("unknown violation"),
            path.display()
        );
        5
    }
}

fn cmd_verify(suite: &str, seed: u64) -> u8 {
    let results = match run_suites(suite, seed) {
        Some(r) => r,
        None => {
            return fail(
                format!("unknown suite `{suite}`; expected quadform | psd | patch | pure-shear | all"),
                1,
            )
        }
    };
    let mut all_passed = true;
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.details);
        all_passed &= r.passed;
    }
    println!("{}", serde_json::to_string_pretty(&results).expect("results serialize"));
    if all_passed {
        0
    } else {
        1
    }
}

fn cmd_mesh_gen(nx: usize, ny: usize, width: f64, height: f64, labels: &str, out: &PathBuf) -> u8 {
    let parts: Vec<&str> = labels.split(',').collect();
    if parts.len() != 4 {
        return fail("labels must be four comma-separated values: bottom,right,top,left", 1);
    }
    let mut lab = [0u8; 4];
    for (l, p) in lab.iter_mut().zip(&parts) {
        *l = match p.trim().parse::<u8>() {
            Ok(v @ 1..=3) => v,
            _ => return fail(format!("bad label `{p}`; expected 1, 2 or 3"), 1),
        };
    }
    if nx < 1 || ny < 1 || !(width > 0.0) || !(height > 0.0) {
        return fail("mesh-gen needs nx, ny >= 1 and positive extents", 1);
    }
    let mesh = Mesh::rectangle(nx, ny, width, height, lab);
    if let Err(e) = mesh.save(out) {
        return fail(e, 1);
    }
    println!(
        "wrote {} ({} nodes, {} triangles, {} boundary edges)",
        out.display(),
        mesh.nodes.len(),
        mesh.triangles.len(),
        mesh.boundary_edges.len()
    );
    0
}
