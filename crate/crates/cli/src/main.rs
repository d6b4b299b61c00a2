use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use monge_rays::curvature::{build_evolution, density_bound_check, mcp_check, CurvatureParams};
use monge_rays::io::{
    branch_csv, decomposition_to_json, density_csv, mcp_csv, measure_from_json, monge_to_json,
    number, ray_csv, read_json, solution_from_json, solution_to_json, space_from_json,
    space_to_json, write_json, LoadedSolution, DENSITY_CSV_HEADER,
};
use monge_rays::kantorovich::solve_w1;
use monge_rays::mmspace::{
    generate_model, MetricMeasureSpace, ModelKind, ModelParams, PointSet, ProbabilityMeasure,
};
use monge_rays::monge::{run_with_plan, MongeConfig, MongeRun};
use monge_rays::{selftest, Error, Result};

#[derive(Parser)]
#[command(
    name = "monge-rays",
    version,
    about = "Monge transport on finite metric measure spaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a model space.
    Generate {
        #[arg(long)]
        model: ModelKind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        size: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Geodesic tolerance stored with the space.
        #[arg(long)]
        geo_tol: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the Kantorovich problem with distance cost.
    Solve {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        mu0: PathBuf,
        #[arg(long)]
        mu1: PathBuf,
        #[arg(long)]
        eps_gamma: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split a solved instance into transport rays.
    Decompose {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        solution: PathBuf,
        #[arg(long)]
        eps_gamma: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a transport by solving along rays and gluing.
    SolveMonge {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        mu0: PathBuf,
        #[arg(long)]
        mu1: PathBuf,
        #[arg(long)]
        eps_gamma: Option<f64>,
        /// Fail when the cost exceeds W1 by more than this.
        #[arg(long)]
        max_gap: Option<f64>,
        /// Fail when more source mass than this sits on branching points.
        #[arg(long)]
        branch_threshold: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Residuals of the contraction inequality along rays.
    CheckCurvature {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        solution: PathBuf,
        #[arg(long = "K", allow_hyphen_values = true)]
        k: f64,
        #[arg(long = "N")]
        n: f64,
        #[arg(long, allow_hyphen_values = true)]
        delta: f64,
        /// JSON file `{"points": [ids]}` with the evolved set.
        #[arg(long)]
        set: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
        times: Vec<f64>,
        #[arg(long)]
        level_tol: Option<f64>,
        #[arg(long)]
        eps_gamma: Option<f64>,
        /// Also write density quadruples of every ray.
        #[arg(long)]
        density_out: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-ray cost table of a solved instance.
    Report {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        solution: PathBuf,
        #[arg(long)]
        eps_gamma: Option<f64>,
        /// Also write source mass and weight of the branching sets.
        #[arg(long)]
        branch_out: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in property suite and write its artifacts.
    Selftest {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_space(path: &Path) -> Result<MetricMeasureSpace> {
    space_from_json(&read_json(path)?)
}

fn load_measure(space: &MetricMeasureSpace, path: &Path) -> Result<ProbabilityMeasure> {
    measure_from_json(space, &read_json(path)?)
}

fn load_solution(space: &MetricMeasureSpace, path: &Path) -> Result<LoadedSolution> {
    solution_from_json(space, &read_json(path)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Rebuild the full pipeline from a solution file.
fn rerun(
    space: &MetricMeasureSpace,
    loaded: LoadedSolution,
    eps_gamma: Option<f64>,
) -> Result<MongeRun> {
    let config = MongeConfig {
        eps_gamma: eps_gamma.or(loaded.eps_gamma),
        ..MongeConfig::default()
    };
    run_with_plan(space, &loaded.mu0, &loaded.mu1, &config, loaded.kantorovich)
}

fn read_set(space: &MetricMeasureSpace, path: &Path) -> Result<PointSet> {
    let value = read_json(path)?;
    let ids = value
        .get("points")
        .and_then(|p| p.as_array())
        .ok_or_else(|| {
            Error::Parse(format!(
                "{}: expected {{\"points\": [ids]}}",
                path.display()
            ))
        })?;
    let mut set = PointSet::empty(space.len());
    for id in ids {
        let id = id.as_str().ok_or_else(|| {
            Error::Parse(format!("{}: point ids must be strings", path.display()))
        })?;
        set.insert(space.index_of(id)?);
    }
    Ok(set)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate {
            model,
            n,
            size,
            seed,
            geo_tol,
            out,
        } => {
            let m = generate_model(model, &ModelParams::with_n(n).size(size).seed(seed))?;
            let mut value = space_to_json(&m.space);
            if let Some(tol) = geo_tol {
                if !(tol >= 0.0 && tol.is_finite()) {
                    return Err(Error::InvalidEntry(format!("geodesic tolerance {tol}")));
                }
                value["geo_tol"] = number(tol);
            }
            write_json(&out, &value)
        }
        Command::Solve {
            space,
            mu0,
            mu1,
            eps_gamma,
            out,
        } => {
            let s = load_space(&space)?;
            let (m0, m1) = (load_measure(&s, &mu0)?, load_measure(&s, &mu1)?);
            let sol = solve_w1(&s, &m0, &m1)?;
            write_json(&out, &solution_to_json(&s, &sol, &m0, &m1, eps_gamma))
        }
        Command::Decompose {
            space,
            solution,
            eps_gamma,
            out,
        } => {
            let s = load_space(&space)?;
            let run = rerun(&s, load_solution(&s, &solution)?, eps_gamma)?;
            write_json(
                &out,
                &decomposition_to_json(&s, &run.structure, &run.decomposition, &run.problems),
            )
        }
        Command::SolveMonge {
            space,
            mu0,
            mu1,
            eps_gamma,
            max_gap,
            branch_threshold,
            out,
        } => {
            let s = load_space(&space)?;
            let (m0, m1) = (load_measure(&s, &mu0)?, load_measure(&s, &mu1)?);
            let config = MongeConfig {
                eps_gamma,
                max_gap,
                branch_threshold,
            };
            let run = run_with_plan(&s, &m0, &m1, &config, solve_w1(&s, &m0, &m1)?)?;
            write_json(&out, &monge_to_json(&s, &run))
        }
        Command::CheckCurvature {
            space,
            solution,
            k,
            n,
            delta,
            set,
            times,
            level_tol,
            eps_gamma,
            density_out,
            samples,
            seed,
            out,
        } => {
            let s = load_space(&space)?;
            let run = rerun(&s, load_solution(&s, &solution)?, eps_gamma)?;
            let params = CurvatureParams::new(k, n)?;
            let setup = build_evolution(
                &s,
                &run.structure,
                &run.decomposition,
                &run.structure.t,
                delta,
                level_tol,
            )?;
            let a = read_set(&s, &set)?;
            if let Some(x) = a.iter().find(|&x| !setup.c_delta.contains(x)) {
                return Err(Error::InvalidEntry(format!(
                    "point {} has no partner on the level set",
                    s.id(x)
                )));
            }
            let rows = mcp_check(
                &s,
                &params,
                &setup,
                &run.structure,
                &run.decomposition,
                &run.problems,
                &a,
                &times,
            )?;
            write_text(&out, &mcp_csv(&rows))?;
            if let Some(path) = density_out {
                let mut text = String::from(DENSITY_CSV_HEADER);
                for (r, p) in run.problems.iter().enumerate() {
                    text.push_str(&density_csv(
                        r,
                        &density_bound_check(p, &params, samples, seed.wrapping_add(r as u64)),
                    ));
                }
                write_text(&path, &text)?;
            }
            if !setup.d2_certified {
                eprintln!("warning: target pairs fail the potential order certificate");
            }
            Ok(())
        }
        Command::Report {
            space,
            solution,
            eps_gamma,
            branch_out,
            out,
        } => {
            let s = load_space(&space)?;
            let loaded = load_solution(&s, &solution)?;
            let mu0 = loaded.mu0.clone();
            let run = rerun(&s, loaded, eps_gamma)?;
            write_text(&out, &ray_csv(&run))?;
            if let Some(path) = branch_out {
                write_text(&path, &branch_csv(&s, &run, &mu0))?;
            }
            Ok(())
        }
        Command::Selftest { out_dir, seed } => {
            let report = selftest::run(&out_dir, seed)?;
            for c in &report.checks {
                println!(
                    "{} {}: {}",
                    if c.pass { "ok  " } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            if report.passed() {
                Ok(())
            } else {
                let failed = report.checks.iter().filter(|c| !c.pass).count();
                Err(Error::InvariantFailure(format!(
                    "{failed} selftest checks failed"
                )))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
