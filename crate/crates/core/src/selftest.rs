//! Property suite on built-in models, writing every artifact it produces.

use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::curvature::{
    build_evolution, density_bound_check, mcp_check, CurvatureParams, HOLD_TOL,
};
use crate::disintegration::reassembly_errors;
use crate::error::{Error, Result};
use crate::io::{
    decomposition_to_json, mcp_csv, measure_to_json, monge_to_json, ray_csv, solution_to_json,
    space_to_json, write_json, SCHEMA,
};
use crate::kantorovich::check_d_monotone;
use crate::mmspace::{
    generate_model, MetricMeasureSpace, ModelKind, ModelParams, PointSet, ProbabilityMeasure,
};
use crate::monge::{run_monge, MongeConfig, MongeRun};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SelftestReport {
    pub checks: Vec<Check>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn push(&mut self, name: &str, pass: bool, detail: String) {
        self.checks.push(Check {
            name: name.to_string(),
            pass,
            detail,
        });
    }
}

fn random_measure(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Result<ProbabilityMeasure> {
    let mut mass = vec![0.0; n];
    for i in sample(rng, n, k.min(n)).into_iter() {
        mass[i] = rng.gen_range(1..=9) as f64;
    }
    ProbabilityMeasure::normalized(mass)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn save_case(
    dir: &Path,
    name: &str,
    space: &MetricMeasureSpace,
    mu0: &ProbabilityMeasure,
    mu1: &ProbabilityMeasure,
    run: &MongeRun,
) -> Result<()> {
    write_json(
        &dir.join(format!("{name}_space.json")),
        &space_to_json(space),
    )?;
    write_json(
        &dir.join(format!("{name}_mu0.json")),
        &measure_to_json(space, mu0),
    )?;
    write_json(
        &dir.join(format!("{name}_mu1.json")),
        &measure_to_json(space, mu1),
    )?;
    write_json(
        &dir.join(format!("{name}_solution.json")),
        &solution_to_json(space, &run.kantorovich, mu0, mu1, None),
    )?;
    write_json(
        &dir.join(format!("{name}_decomposition.json")),
        &decomposition_to_json(space, &run.structure, &run.decomposition, &run.problems),
    )?;
    write_json(
        &dir.join(format!("{name}_monge.json")),
        &monge_to_json(space, run),
    )?;
    write_text(&dir.join(format!("{name}_rays.csv")), &ray_csv(run))
}

/// Gap, reassembly and cyclical monotonicity checks shared by all cases.
fn common_checks(
    report: &mut SelftestReport,
    name: &str,
    space: &MetricMeasureSpace,
    run: &MongeRun,
    seed: u64,
) {
    let gap = run.solution.gap;
    report.push(
        &format!("{name}/gap"),
        gap.abs() <= 1e-9,
        format!("gap {gap:.6e}"),
    );
    let (ref_err, plan_err) = reassembly_errors(
        space,
        &run.structure,
        &run.kantorovich.plan,
        &run.problems,
        &run.plan_pieces,
    );
    let err = ref_err.max(plan_err);
    report.push(
        &format!("{name}/reassembly"),
        err <= 1e-12,
        format!("error {err:.6e}"),
    );
    let assignment: Vec<(usize, usize)> = run
        .solution
        .assignment
        .iter()
        .map(|&(x, y, _)| (x, y))
        .collect();
    let v = check_d_monotone(space, &run.kantorovich.plan.pairs(), 3, seed).len()
        + check_d_monotone(space, &assignment, 3, seed).len();
    report.push(
        &format!("{name}/d_monotone"),
        v == 0,
        format!("{v} violations"),
    );
}

/// Run the suite and write its artifacts into `dir`. The same seed gives
/// byte-identical files.
pub fn run(dir: &Path, seed: u64) -> Result<SelftestReport> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SelftestReport::default();
    let config = MongeConfig::default();

    // Shift on a line.
    let line = generate_model(ModelKind::Interval, &ModelParams::with_n(4).size(3.0))?.space;
    let mu0 = ProbabilityMeasure::uniform_on(4, &[0, 1])?;
    let mu1 = ProbabilityMeasure::uniform_on(4, &[2, 3])?;
    let run = run_monge(&line, &mu0, &mu1, &config)?;
    common_checks(&mut report, "line", &line, &run, seed);
    let is_shift = run
        .solution
        .assignment
        .iter()
        .map(|&(x, y, _)| (x, y))
        .eq([(0, 2), (1, 3)]);
    report.push(
        "line/map",
        is_shift && run.solution.is_map(),
        format!("{} entries", run.solution.assignment.len()),
    );
    save_case(dir, "line", &line, &mu0, &mu1, &run)?;

    // Branching at the center of the tripod.
    let tripod = generate_model(ModelKind::Tripod, &ModelParams::with_n(2))?.space;
    let (u, c, v, w) = (
        tripod.index_of("u")?,
        tripod.index_of("c")?,
        tripod.index_of("v")?,
        tripod.index_of("w")?,
    );
    let mu0 = ProbabilityMeasure::dirac(tripod.len(), u);
    let mu1 = ProbabilityMeasure::uniform_on(tripod.len(), &[v, w])?;
    let run = run_monge(&tripod, &mu0, &mu1, &config)?;
    common_checks(&mut report, "tripod", &tripod, &run, seed);
    let flagged = run.structure.a_plus == PointSet::from_indices(tripod.len(), [u, c]);
    report.push(
        "tripod/branching",
        flagged && run.structure.a_minus.is_empty(),
        format!("branch mass {:.6e}", run.solution.diagnostics.branch_mass),
    );
    save_case(dir, "tripod", &tripod, &mu0, &mu1, &run)?;

    // Random rational instances.
    for (name, kind, n) in [
        ("circle", ModelKind::Circle, 24),
        ("grid", ModelKind::EuclideanGrid, 6),
        ("interval", ModelKind::Interval, 30),
    ] {
        let space = generate_model(kind, &ModelParams::with_n(n))?.space;
        let k0 = rng.gen_range(1..=6);
        let k1 = rng.gen_range(1..=6);
        let mu0 = random_measure(space.len(), k0, &mut rng)?;
        let mu1 = random_measure(space.len(), k1, &mut rng)?;
        let run = run_monge(&space, &mu0, &mu1, &config)?;
        common_checks(&mut report, name, &space, &run, seed);
        save_case(dir, name, &space, &mu0, &mu1, &run)?;
    }

    // Contraction of an interval onto its right end.
    let n = 11;
    let interval = generate_model(ModelKind::Interval, &ModelParams::with_n(n))?.space;
    let mut w0 = interval.weights().to_vec();
    w0[n - 1] = 0.0;
    let mu0 = ProbabilityMeasure::normalized(w0)?;
    let mu1 = ProbabilityMeasure::dirac(n, n - 1);
    let run = run_monge(&interval, &mu0, &mu1, &config)?;
    let setup = build_evolution(
        &interval,
        &run.structure,
        &run.decomposition,
        &run.structure.t,
        0.0,
        None,
    )?;
    let left = PointSet::from_indices(n, 0..=5);
    let flat = CurvatureParams::new(0.0, 1.0)?;
    let ts = [0.0, 0.25, 0.5, 0.75, 1.0];
    let rows = mcp_check(
        &interval,
        &flat,
        &setup,
        &run.structure,
        &run.decomposition,
        &run.problems,
        &left,
        &ts,
    )?;
    let worst = rows
        .iter()
        .map(|r| r.residual)
        .fold(f64::INFINITY, f64::min);
    report.push(
        "contraction/mcp",
        worst >= -1e-12 && (rows[2].measure_at - 0.25).abs() <= 1e-12 && setup.d2_certified,
        format!(
            "min residual {worst:.6e}, half-time measure {:.6e}",
            rows[2].measure_at
        ),
    );
    write_text(&dir.join("contraction_mcp.csv"), &mcp_csv(&rows))?;
    save_case(dir, "contraction", &interval, &mu0, &mu1, &run)?;

    // Sphere transported to its south pole.
    let model = generate_model(
        ModelKind::Sphere2Sample,
        &ModelParams::with_n(100).seed(seed),
    )?;
    let sphere = model.space;
    let south = sphere.len() - 1;
    let mass: Vec<f64> = (0..sphere.len())
        .map(|i| {
            if i == south {
                0.0
            } else {
                sphere.weights()[i] * (1.0 + model.coords[i][0].cos())
            }
        })
        .collect();
    let mu0 = ProbabilityMeasure::normalized(mass)?;
    let mu1 = ProbabilityMeasure::dirac(sphere.len(), south);
    let run = run_monge(&sphere, &mu0, &mu1, &config)?;
    let d = &run.solution.diagnostics;
    let gap_bound = d.reassigned_mass * sphere.diameter() + 1e-9;
    report.push(
        "sphere/gap",
        run.solution.gap.abs() <= gap_bound,
        format!(
            "gap {:.6e}, branch weight ratio {:.6e}",
            run.solution.gap,
            d.branch_weight / d.te_weight
        ),
    );
    let params = CurvatureParams::new(1.0, 2.0)?;
    let (mut total, mut held) = (0usize, 0usize);
    for (r, p) in run.problems.iter().enumerate() {
        let rep = density_bound_check(p, &params, 500, seed.wrapping_add(r as u64));
        for q in rep.rows.iter().filter(|q| !q.endpoint) {
            total += 1;
            held += usize::from(q.violation <= HOLD_TOL.max(2.0 * sphere.mesh()));
        }
    }
    report.push(
        "sphere/density",
        total > 0 && held as f64 >= 0.99 * total as f64,
        format!("{held}/{total} interior quadruples"),
    );
    let phi = run.structure.potential();
    let delta = 0.5 * phi.iter().copied().fold(0.0, f64::max);
    let setup = build_evolution(
        &sphere,
        &run.structure,
        &run.decomposition,
        &run.structure.t,
        delta,
        None,
    )?;
    let cap = PointSet::from_indices(
        sphere.len(),
        setup.c_delta.iter().filter(|&x| phi[x] >= delta),
    );
    let rows = mcp_check(
        &sphere,
        &params,
        &setup,
        &run.structure,
        &run.decomposition,
        &run.problems,
        &cap,
        &ts,
    )?;
    let worst = rows
        .iter()
        .map(|r| r.residual)
        .fold(f64::INFINITY, f64::min);
    report.push(
        "sphere/mcp",
        worst >= -2.0 * sphere.mesh() && setup.d2_certified,
        format!("min residual {worst:.6e}"),
    );
    write_text(&dir.join("sphere_mcp.csv"), &mcp_csv(&rows))?;
    save_case(dir, "sphere", &sphere, &mu0, &mu1, &run)?;

    let checks: Vec<Value> = report
        .checks
        .iter()
        .map(|c| json!({"name": c.name, "pass": c.pass, "detail": c.detail}))
        .collect();
    write_json(
        &dir.join("summary.json"),
        &json!({"schema": SCHEMA, "seed": seed, "passed": report.passed(), "checks": checks}),
    )?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        let dir = tempfile::tempdir().unwrap();
        let report = run(dir.path(), 3).unwrap();
        for c in &report.checks {
            assert!(c.pass, "{}: {}", c.name, c.detail);
        }
        assert!(dir.path().join("summary.json").exists());
    }
}
