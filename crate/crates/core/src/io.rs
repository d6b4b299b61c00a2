//! JSON files for spaces, measures and results, with a canonical writer:
//! sorted keys and floats with 17 significant digits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;
use serde_json::{json, Map};

pub use serde_json::Value;

use crate::curvature::{DensityReport, McpRow};
use crate::disintegration::RayProblem1D;
use crate::error::{Error, Result};
use crate::kantorovich::{KantorovichSolution, TransportPlan};
use crate::mmspace::{
    build_space, build_space_from_graph, Edge, InputMode, MetricMeasureSpace, PointSet,
    ProbabilityMeasure, EXACT_GEO_TOL, MASS_TOL,
};
use crate::monge::{duality_report, MongeRun};
use crate::rays::{Direction, GammaStructure, RayDecomposition};

pub const SCHEMA: &str = "monge-rays/1";

/// Render a value with sorted keys, floats in `{:.16e}` and a final newline.
pub fn to_canonical_string(value: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, value);
    out.push('\n');
    out
}

fn write_value(out: &mut String, value: &Value) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                let f = n.as_f64().unwrap() + 0.0;
                let _ = write!(out, "{f:.16e}");
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(out, item);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let sorted: BTreeMap<&String, &Value> = map.iter().collect();
            out.push('{');
            for (i, (k, v)) in sorted.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_value(out, v);
            }
            out.push('}');
        }
    }
}

/// Finite floats as JSON numbers, everything else as null. Negative zero
/// is written as zero.
pub fn number(x: f64) -> Value {
    serde_json::Number::from_f64(x + 0.0).map_or(Value::Null, Value::Number)
}

fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| number(x)).collect())
}

pub fn read_json(path: &Path) -> Result<Value> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    std::fs::write(path, to_canonical_string(value))
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpaceFile {
    #[serde(default)]
    schema: Option<String>,
    points: Vec<String>,
    mode: String,
    #[serde(default)]
    dist: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    edges: Option<Vec<(String, String, f64)>>,
    weights: Vec<f64>,
    #[serde(default)]
    geo_tol: Option<f64>,
}

fn parse<T: for<'de> Deserialize<'de>>(value: &Value, what: &str) -> Result<T> {
    T::deserialize(value).map_err(|e| Error::Parse(format!("{what}: {e}")))
}

fn check_schema(schema: Option<&str>) -> Result<()> {
    match schema {
        Some(s) if s != SCHEMA => Err(Error::Parse(format!("unsupported schema {s:?}"))),
        _ => Ok(()),
    }
}

pub fn space_from_json(value: &Value) -> Result<MetricMeasureSpace> {
    let f: SpaceFile = parse(value, "space file")?;
    check_schema(f.schema.as_deref())?;
    let geo_tol = f.geo_tol.unwrap_or(EXACT_GEO_TOL);
    match f.mode.as_str() {
        "matrix" => {
            let dist = f
                .dist
                .ok_or_else(|| Error::Parse("matrix mode needs \"dist\"".into()))?;
            build_space(f.points, dist, f.weights, geo_tol)
        }
        "graph" => {
            let raw = f
                .edges
                .ok_or_else(|| Error::Parse("graph mode needs \"edges\"".into()))?;
            let index = |id: &str| {
                f.points
                    .iter()
                    .position(|p| p == id)
                    .ok_or_else(|| Error::UnknownPoint(id.to_string()))
            };
            let mut edges = Vec::with_capacity(raw.len());
            for (a, b, length) in &raw {
                edges.push(Edge {
                    a: index(a)?,
                    b: index(b)?,
                    length: *length,
                });
            }
            build_space_from_graph(f.points, edges, f.weights, geo_tol)
        }
        other => Err(Error::Parse(format!("unknown mode {other:?}"))),
    }
}

pub fn space_to_json(space: &MetricMeasureSpace) -> Value {
    let mut obj = Map::new();
    obj.insert("schema".into(), json!(SCHEMA));
    obj.insert("points".into(), json!(space.ids()));
    obj.insert("mode".into(), json!(space.mode().as_str()));
    obj.insert("weights".into(), nums(space.weights()));
    obj.insert("geo_tol".into(), number(space.geo_tol()));
    match space.mode() {
        InputMode::Matrix => {
            let rows: Vec<Value> = (0..space.len()).map(|i| nums(space.dist_row(i))).collect();
            obj.insert("dist".into(), Value::Array(rows));
        }
        InputMode::Graph => {
            let edges: Vec<Value> = space
                .edges()
                .iter()
                .map(|e| json!([space.id(e.a), space.id(e.b), number(e.length)]))
                .collect();
            obj.insert("edges".into(), Value::Array(edges));
        }
    }
    Value::Object(obj)
}

fn mass_map(space: &MetricMeasureSpace, value: &Value, what: &str) -> Result<Vec<f64>> {
    let map: BTreeMap<String, f64> = parse(value, what)?;
    let mut mass = vec![0.0; space.len()];
    for (id, m) in map {
        let i = space.index_of(&id)?;
        mass[i] += m;
    }
    Ok(mass)
}

/// Measure file `{"mass": {id: value}}`; unlisted points carry no mass.
pub fn measure_from_json(space: &MetricMeasureSpace, value: &Value) -> Result<ProbabilityMeasure> {
    let mass = value
        .get("mass")
        .ok_or_else(|| Error::Parse("measure file needs \"mass\"".into()))?;
    ProbabilityMeasure::new(mass_map(space, mass, "measure mass")?)
}

fn mass_object(space: &MetricMeasureSpace, mass: &[f64]) -> Value {
    let map: Map<String, Value> = mass
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > 0.0)
        .map(|(i, &m)| (space.id(i).to_string(), number(m)))
        .collect();
    Value::Object(map)
}

pub fn measure_to_json(space: &MetricMeasureSpace, mu: &ProbabilityMeasure) -> Value {
    json!({ "schema": SCHEMA, "mass": mass_object(space, mu.mass()) })
}

fn id_list(space: &MetricMeasureSpace, xs: impl IntoIterator<Item = usize>) -> Value {
    Value::Array(xs.into_iter().map(|x| json!(space.id(x))).collect())
}

fn set_ids(space: &MetricMeasureSpace, set: &PointSet) -> Value {
    id_list(space, set.iter())
}

fn plan_json(space: &MetricMeasureSpace, entries: &[(usize, usize, f64)]) -> Value {
    Value::Array(
        entries
            .iter()
            .map(|&(x, y, m)| json!([space.id(x), space.id(y), number(m)]))
            .collect(),
    )
}

/// Output of `solve`: value, potential, plan and both marginals.
pub fn solution_to_json(
    space: &MetricMeasureSpace,
    sol: &KantorovichSolution,
    mu0: &ProbabilityMeasure,
    mu1: &ProbabilityMeasure,
    eps_gamma: Option<f64>,
) -> Value {
    let potential: Map<String, Value> = sol
        .potential
        .iter()
        .enumerate()
        .map(|(i, &p)| (space.id(i).to_string(), number(p)))
        .collect();
    let mut obj = json!({
        "schema": SCHEMA,
        "w1": number(sol.value),
        "potential": potential,
        "plan": plan_json(space, &sol.plan.entries),
        "mu0": mass_object(space, mu0.mass()),
        "mu1": mass_object(space, mu1.mass()),
    });
    if let Some(eps) = eps_gamma {
        obj["eps_gamma"] = number(eps);
    }
    obj
}

#[derive(Deserialize)]
struct SolutionFile {
    #[serde(default)]
    schema: Option<String>,
    w1: f64,
    potential: BTreeMap<String, f64>,
    plan: Vec<(String, String, f64)>,
    mu0: Value,
    mu1: Value,
    #[serde(default)]
    eps_gamma: Option<f64>,
}

/// A solution file read back against its space.
pub struct LoadedSolution {
    pub kantorovich: KantorovichSolution,
    pub mu0: ProbabilityMeasure,
    pub mu1: ProbabilityMeasure,
    pub eps_gamma: Option<f64>,
}

pub fn solution_from_json(space: &MetricMeasureSpace, value: &Value) -> Result<LoadedSolution> {
    let f: SolutionFile = parse(value, "solution file")?;
    check_schema(f.schema.as_deref())?;
    let mu0 = ProbabilityMeasure::new(mass_map(space, &f.mu0, "mu0")?)?;
    let mu1 = ProbabilityMeasure::new(mass_map(space, &f.mu1, "mu1")?)?;
    let idx = |id: &str| space.index_of(id);
    let mut potential = vec![f64::NAN; space.len()];
    for (id, p) in &f.potential {
        potential[idx(id)?] = *p;
    }
    if let Some(i) = potential.iter().position(|p| p.is_nan()) {
        return Err(Error::Parse(format!(
            "potential missing at {}",
            space.id(i)
        )));
    }
    let mut entries = Vec::with_capacity(f.plan.len());
    for (x, y, m) in &f.plan {
        entries.push((idx(x)?, idx(y)?, *m));
    }
    let plan = TransportPlan::from_entries(space, entries);
    let n = space.len();
    let (first, second) = (plan.first_marginal(n), plan.second_marginal(n));
    for i in 0..n {
        if (first[i] - mu0.mass()[i]).abs() > MASS_TOL
            || (second[i] - mu1.mass()[i]).abs() > MASS_TOL
        {
            return Err(Error::InvalidEntry(format!(
                "plan marginals differ from mu0/mu1 at {}",
                space.id(i)
            )));
        }
    }
    Ok(LoadedSolution {
        kantorovich: KantorovichSolution {
            plan,
            potential,
            value: f.w1,
        },
        mu0,
        mu1,
        eps_gamma: f.eps_gamma,
    })
}

pub fn ray_problem_json(space: &MetricMeasureSpace, p: &RayProblem1D) -> Value {
    json!({
        "rep": space.id(p.rep),
        "nodes": id_list(space, p.nodes.iter().copied()),
        "t": nums(&p.t),
        "m_y": nums(&p.m_y),
        "mu0_y": nums(&p.mu0_y),
        "mu1_y": nums(&p.mu1_y),
        "h": nums(&p.h),
        "q": number(p.q),
        "q_mu0": number(p.q_mu0),
    })
}

/// Output of `decompose`.
pub fn decomposition_to_json(
    space: &MetricMeasureSpace,
    structure: &GammaStructure,
    dec: &RayDecomposition,
    problems: &[RayProblem1D],
) -> Value {
    let witnesses: Vec<Value> = structure
        .witnesses
        .iter()
        .map(|w| {
            json!({
                "x": space.id(w.x),
                "z": space.id(w.z),
                "w": space.id(w.w),
                "direction": match w.direction {
                    Direction::Forward => "forward",
                    Direction::Backward => "backward",
                },
            })
        })
        .collect();
    let rays: Vec<Value> = dec
        .rays
        .iter()
        .enumerate()
        .map(|(r, ray)| {
            let mut v = json!({
                "rep": space.id(ray.rep),
                "nodes": id_list(space, ray.nodes.iter().copied()),
                "t": nums(&ray.t),
            });
            if let Some(p) = problems.get(r) {
                v["problem"] = ray_problem_json(space, p);
            }
            v
        })
        .collect();
    json!({
        "schema": SCHEMA,
        "classes": dec.classes.iter().map(|c| id_list(space, c.iter().copied())).collect::<Vec<_>>(),
        "section": id_list(space, dec.section.iter().copied()),
        "rays": rays,
        "initial_points": set_ids(space, &structure.a),
        "final_points": set_ids(space, &structure.b),
        "transport_set_extended": set_ids(space, &structure.te),
        "transport_set": set_ids(space, &structure.t),
        "a_plus": set_ids(space, &structure.a_plus),
        "a_minus": set_ids(space, &structure.a_minus),
        "witnesses": witnesses,
    })
}

/// Output of `solve-monge`.
pub fn monge_to_json(space: &MetricMeasureSpace, run: &MongeRun) -> Value {
    let sol = &run.solution;
    let d = &sol.diagnostics;
    let report = duality_report(run);
    let per_ray: Vec<Value> = report
        .per_ray
        .iter()
        .map(|r| {
            json!({
                "ray": r.ray,
                "rep": space.id(r.rep),
                "length": number(r.length),
                "n_nodes": r.n_nodes,
                "q_mu0": number(r.q_mu0),
                "cost_1d": number(r.cost_1d),
            })
        })
        .collect();
    let mut obj = json!({
        "schema": SCHEMA,
        "assignment": plan_json(space, &sol.assignment),
        "cost": number(sol.cost),
        "w1": number(sol.w1),
        "gap": number(sol.gap),
        "is_map": sol.is_map(),
        "a_plus": set_ids(space, &run.structure.a_plus),
        "a_minus": set_ids(space, &run.structure.a_minus),
        "per_ray": per_ray,
        "diagnostics": {
            "branch_mass": number(d.branch_mass),
            "reassigned_mass": number(d.reassigned_mass),
            "reassigned_cost": number(d.reassigned_cost),
            "unresolved_mass": number(d.unresolved_mass),
            "unresolved_cost": number(d.unresolved_cost),
            "split_mass": number(d.split_mass),
            "diagonal_mass": number(d.diagonal_mass),
            "branch_weight": number(d.branch_weight),
            "te_weight": number(d.te_weight),
            "n_rays": d.n_rays,
            "max_gamma_defect": number(d.max_gamma_defect),
            "pushforward_deviation": number(d.pushforward_deviation),
            "additivity_residual": number(report.additivity_residual),
        },
    });
    if let Some(vm) = &sol.virtual_map {
        obj["virtual_map"] = json!({
            "subdivisions": vm.subdivisions,
            "map": vm.map.iter().map(|&(x, k, y)| json!([space.id(x), k, space.id(y)])).collect::<Vec<_>>(),
        });
    }
    obj
}

/// Float with 17 significant digits, negative zero as zero.
fn f17(x: f64) -> String {
    format!("{:.16e}", x + 0.0)
}

/// CSV table `t,residual`.
pub fn mcp_csv(rows: &[McpRow]) -> String {
    let mut out = String::from("t,residual\n");
    for r in rows {
        let _ = writeln!(out, "{},{}", f17(r.t), f17(r.residual));
    }
    out
}

/// CSV table of density quadruples.
pub fn density_csv(ray: usize, report: &DensityReport) -> String {
    let mut out = String::new();
    for q in &report.rows {
        let _ = writeln!(
            out,
            "{ray},{},{},{},{},{},{},{},{},{}",
            f17(q.sigma_minus),
            f17(q.s),
            f17(q.tau),
            f17(q.sigma_plus),
            f17(q.ratio),
            f17(q.lower),
            f17(q.upper),
            f17(q.violation),
            q.endpoint
        );
    }
    out
}

pub const DENSITY_CSV_HEADER: &str =
    "ray_id,sigma_minus,s,tau,sigma_plus,ratio,lower,upper,violation,endpoint\n";

/// CSV table `ray_id,length,n_nodes,cost_1d,q_mu0`.
pub fn ray_csv(run: &MongeRun) -> String {
    let mut out = String::from("ray_id,length,n_nodes,cost_1d,q_mu0\n");
    for r in duality_report(run).per_ray {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.ray,
            f17(r.length),
            r.n_nodes,
            f17(r.cost_1d),
            f17(r.q_mu0)
        );
    }
    out
}

/// CSV table `set,mass,weight` for the branching sets.
pub fn branch_csv(space: &MetricMeasureSpace, run: &MongeRun, mu0: &ProbabilityMeasure) -> String {
    let mut out = String::from("set,mu0_mass,weight\n");
    for (name, set) in [
        ("a_plus", &run.structure.a_plus),
        ("a_minus", &run.structure.a_minus),
    ] {
        let _ = writeln!(
            out,
            "{name},{},{}",
            f17(set.sum_of(mu0.mass())),
            f17(set.sum_of(space.weights()))
        );
    }
    out
}
