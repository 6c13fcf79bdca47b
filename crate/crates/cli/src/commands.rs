//! One function per subcommand. Each returns the machine-readable result,
//! its human-readable rendering and the exit code.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use opennet::graph::{enumerate_fibrations, fibration_defects};
use opennet::linrel::{compose_rel, contains, equals, graph_of, linear_field_relation, odot, LinRelation};
use opennet::network::{verify_theorem, NetworkError};
use opennet::opensys::{CheckOptions, OpenSystem};
use opennet::sim::{integrate, monitor_invariance, push_trajectory, Monitor, SimError, Trajectory};
use serde_json::{json, Value};

use crate::spec::{linrel_kind, network_kind, ErrorKind, LoadError, Params, RawLinrel, RawRelation, Spec};

pub struct Outcome {
    pub exit: i32,
    pub result: Value,
    pub text: String,
    /// Trajectory for `--out`, when the command produced exactly one.
    pub trajectory: Option<Trajectory>,
}

impl Outcome {
    fn new(verdict: bool, result: Value, text: String) -> Self {
        Outcome {
            exit: if verdict { 0 } else { 1 },
            result,
            text,
            trajectory: None,
        }
    }
}

fn runtime(spec: &Spec, kind: ErrorKind, location: impl Into<String>, message: impl Into<String>) -> LoadError {
    LoadError {
        kind,
        file: spec.file.clone(),
        location: location.into(),
        message: message.into(),
    }
}

/// Entries of `table` filtered by `--select`; an empty selection is an
/// error naming what the command needed.
fn selected<'a, T>(
    spec: &Spec,
    table: &'a BTreeMap<String, T>,
    section: &str,
    select: Option<&str>,
    usable: impl Fn(&T) -> bool,
    need: &str,
) -> Result<Vec<(&'a String, &'a T)>, LoadError> {
    if let Some(name) = select {
        let entry = table
            .get_key_value(name)
            .ok_or_else(|| runtime(spec, ErrorKind::DanglingReference, format!("--select {name}"), format!("no {section} entry \"{name}\"")))?;
        if !usable(entry.1) {
            return Err(runtime(spec, ErrorKind::Invalid, format!("{section}.{name}"), format!("entry has no {need}")));
        }
        return Ok(vec![entry]);
    }
    let list: Vec<_> = table.iter().filter(|(_, v)| usable(v)).collect();
    if list.is_empty() {
        return Err(runtime(spec, ErrorKind::Invalid, section, format!("spec declares no {section} entry with {need}")));
    }
    Ok(list)
}

fn systems(spec: &Spec, names: &[String]) -> Vec<OpenSystem> {
    names.iter().map(|n| spec.systems[n].clone()).collect()
}

fn options(p: &Params) -> CheckOptions {
    CheckOptions {
        samples: p.samples,
        tol: p.tol,
        seed: p.seed,
    }
}

// ----------------------------------------------------------------- validate

pub fn validate(spec: &Spec) -> Result<Outcome, LoadError> {
    let mut networks = serde_json::Map::new();
    let mut text = String::new();
    let _ = writeln!(text, "spec {} is valid", spec.file.display());
    for (name, e) in &spec.networks {
        let c = e.network.carrier();
        networks.insert(
            name.clone(),
            json!({
                "nodes": e.network.nodes().len(),
                "carrier": c.to_string(),
                "carrier_dim": c.total_dim(),
                "carrier_state_dim": c.state_dim(),
                "carrier_input_dim": c.input_dim(),
            }),
        );
        let _ = writeln!(text, "network {name}: node count {}, carrier dim {}", e.network.nodes().len(), c.total_dim());
    }
    let counts = json!({
        "spaces": spec.spaces.len(),
        "submersions": spec.submersions.len(),
        "graphs": spec.graphs.len(),
        "networks": spec.networks.len(),
        "systems": spec.systems.len(),
        "fibrations": spec.fibrations.len(),
        "maps": spec.maps.len(),
        "monitors": spec.monitors.len(),
        "simulations": spec.simulations.len(),
        "linrel_steps": spec.linrel.as_ref().map_or(0, |l| l.steps.len()),
    });
    let _ = writeln!(
        text,
        "{} systems, {} graphs, {} maps, {} simulations",
        spec.systems.len(),
        spec.graphs.len(),
        spec.maps.len(),
        spec.simulations.len()
    );
    Ok(Outcome::new(true, json!({ "counts": counts, "networks": networks }), text))
}

// ------------------------------------------------------------------ compose

pub fn compose(spec: &Spec, select: Option<&str>) -> Result<Outcome, LoadError> {
    let mut out = Vec::new();
    let mut text = String::new();
    for (name, e) in selected(spec, &spec.networks, "networks", select, |e| e.systems.is_some(), "attached `systems`")? {
        let list = systems(spec, e.systems.as_ref().expect("filtered"));
        let composed = e
            .network
            .compose(&list)
            .map_err(|err| runtime(spec, network_kind(&err), format!("networks.{name}"), err.to_string()))?;
        let on = composed.on();
        let field: Vec<Value> = on
            .state_coords()
            .iter()
            .zip(composed.field())
            .map(|(c, f)| json!({ "coord": c, "expr": f.to_string() }))
            .collect();
        let _ = writeln!(text, "network {name}: composed system on {on}");
        for (c, f) in on.state_coords().iter().zip(composed.field()) {
            let _ = writeln!(text, "  d{c}/dt = {f}");
        }
        out.push(json!({
            "network": name,
            "on": on.to_string(),
            "state": on.state_coords(),
            "inputs": on.input_coords(),
            "field": field,
        }));
    }
    Ok(Outcome::new(true, json!({ "composed": out }), text))
}

// ---------------------------------------------------------------- fibrations

pub fn check_fibration(spec: &Spec, select: Option<&str>) -> Result<Outcome, LoadError> {
    let mut out = Vec::new();
    let mut text = String::new();
    let mut all = true;
    for (name, f) in selected(spec, &spec.fibrations, "fibrations", select, |f| f.map.is_some(), "`vertex_map`/`edge_map`")? {
        let map = f.map.as_ref().expect("filtered");
        let (g, h) = (&spec.graphs[&f.source], &spec.graphs[&f.target]);
        let defects = fibration_defects(map, g, h)
            .map_err(|e| runtime(spec, ErrorKind::DimensionMismatch, format!("fibrations.{name}"), e.to_string()))?;
        let verdict = defects.is_empty();
        all &= verdict;
        let _ = writeln!(text, "fibration {name} ({} → {}): {}", f.source, f.target, if verdict { "true" } else { "false" });
        for d in &defects {
            let _ = writeln!(
                text,
                "  vertex {}: edge {} of {} has {} lifts {:?} (needs exactly 1)",
                d.vertex,
                d.target_edge,
                f.target,
                d.lifts.len(),
                d.lifts
            );
        }
        out.push(json!({
            "fibration": name,
            "source": f.source,
            "target": f.target,
            "verdict": verdict,
            "defects": defects,
        }));
    }
    Ok(Outcome::new(all, json!({ "fibrations": out, "verdict": all }), text))
}

pub fn enum_fibrations(spec: &Spec, select: Option<&str>) -> Result<Outcome, LoadError> {
    let mut out = Vec::new();
    let mut text = String::new();
    for (name, f) in selected(spec, &spec.fibrations, "fibrations", select, |_| true, "source and target graphs")? {
        let found = enumerate_fibrations(&spec.graphs[&f.source], &spec.graphs[&f.target]);
        let _ = writeln!(text, "{name}: {} fibration(s) {} → {}", found.len(), f.source, f.target);
        for m in &found {
            let _ = writeln!(text, "  vertices {:?} edges {:?}", m.vertex_map, m.edge_map);
        }
        out.push(json!({
            "fibration": name,
            "source": f.source,
            "target": f.target,
            "count": found.len(),
            "maps": found,
        }));
    }
    Ok(Outcome::new(true, json!({ "enumerations": out }), text))
}

pub fn from_graph(spec: &Spec, select: Option<&str>) -> Result<Outcome, LoadError> {
    let mut out = Vec::new();
    let mut text = String::new();
    for (name, e) in selected(spec, &spec.networks, "networks", select, |e| e.manifold.is_some(), "a `graph`")? {
        let net = &e.network;
        let _ = writeln!(text, "network {name} from graph {}", e.graph.as_deref().unwrap_or("?"));
        let nodes: Vec<Value> = net
            .nodes()
            .iter()
            .enumerate()
            .map(|(a, s)| {
                let _ = writeln!(text, "  node {a}: {s}  inputs [{}]", s.input_coords().join(", "));
                json!({
                    "vertex": a,
                    "submersion": s.to_string(),
                    "state": s.state_coords(),
                    "inputs": s.input_coords(),
                })
            })
            .collect();
        let wiring: Vec<String> = net.wiring().inputs().iter().map(ToString::to_string).collect();
        let _ = writeln!(text, "  carrier {}  wiring ({})", net.carrier(), wiring.join(", "));
        out.push(json!({
            "network": name,
            "graph": e.graph,
            "nodes": nodes,
            "carrier": net.carrier().state_coords(),
            "wiring": wiring,
        }));
    }
    Ok(Outcome::new(true, json!({ "networks": out }), text))
}

// --------------------------------------------------------------- verify-map

pub fn verify_map(spec: &Spec, params: &Params, select: Option<&str>) -> Result<Outcome, LoadError> {
    let mut out = Vec::new();
    let mut text = String::new();
    let mut all = true;
    let opts = options(params);
    for (name, e) in selected(spec, &spec.maps, "maps", select, |_| true, "a map")? {
        let two_cell = e.map.two_cell_report(params.samples, params.seed);
        let cell_ok = two_cell.max_residual <= params.tol;
        let _ = writeln!(text, "map {name}: 2-cell residual {:e} over {} samples", two_cell.max_residual, two_cell.samples);
        let mut entry = json!({ "map": name, "two_cell": two_cell, "two_cell_holds": cell_ok });
        let mut verdict = cell_ok;
        if let (Some(gs), Some(fs)) = (&e.source_systems, &e.target_systems) {
            match verify_theorem(&e.map, &systems(spec, gs), &systems(spec, fs), &opts) {
                Ok(report) => {
                    verdict &= report.conclusion.verdict;
                    let _ = writeln!(
                        text,
                        "  hypothesis residual {:e}; composed systems related: {} (residual {:e}, tol {:e})",
                        report.hypothesis.aggregate.max_residual,
                        report.conclusion.verdict,
                        report.conclusion.max_residual,
                        report.conclusion.tolerance
                    );
                    entry["hypothesis"] = json!(report.hypothesis);
                    entry["conclusion"] = json!(report.conclusion);
                }
                Err(NetworkError::HypothesisNotSatisfied(fam)) => {
                    verdict = false;
                    let _ = writeln!(
                        text,
                        "  hypothesis not satisfied: node family unrelated at index {:?} (residual {:e})",
                        fam.worst_index, fam.aggregate.max_residual
                    );
                    entry["hypothesis"] = json!(fam);
                    entry["error"] = json!("hypothesis not satisfied");
                }
                Err(err) => return Err(runtime(spec, network_kind(&err), format!("maps.{name}"), err.to_string())),
            }
        }
        let _ = writeln!(text, "  verdict: {verdict}");
        entry["verdict"] = json!(verdict);
        all &= verdict;
        out.push(entry);
    }
    Ok(Outcome::new(all, json!({ "maps": out, "verdict": all }), text))
}

// ----------------------------------------------------------------- simulate

fn monitor_for(spec: &Spec, name: &str, coords: &[String], blocks: usize) -> Result<Monitor, LoadError> {
    let m = &spec.monitors[name];
    if m.diagonal {
        Ok(Monitor::diagonal(coords, blocks, m.tol))
    } else {
        Monitor::parse(&m.constraints, coords, m.tol)
            .map_err(|e| runtime(spec, ErrorKind::Parse, format!("monitors.{name}.constraints"), e.to_string()))
    }
}

fn compose_or_fail(spec: &Spec, net: &opennet::network::Network, names: &[String], loc: &str) -> Result<OpenSystem, LoadError> {
    net.compose(&systems(spec, names))
        .map_err(|e| runtime(spec, network_kind(&e), loc, e.to_string()))
}

fn escape(err: SimError, spec: &Spec, loc: &str) -> Result<Value, LoadError> {
    match err {
        SimError::Overflow { step, time } => Ok(json!({ "step": step, "time": time })),
        SimError::Eval { time, source } => Ok(json!({ "time": time, "error": source.to_string() })),
        other => Err(runtime(spec, ErrorKind::Invalid, loc, other.to_string())),
    }
}

pub fn simulate(spec: &Spec, params: &Params, select: Option<&str>) -> Result<Outcome, LoadError> {
    let mut out = Vec::new();
    let mut text = String::new();
    let mut all = true;
    let mut trajectories = Vec::new();
    for (name, s) in selected(spec, &spec.simulations, "simulations", select, |_| true, "a simulation")? {
        let loc = format!("simulations.{name}");
        let mut entry = json!({ "simulation": name, "x0": s.x0, "dt": params.dt, "t1": params.t1 });
        let mut verdict = true;
        let (total, x0, blocks, pushed) = if let Some(n) = &s.network {
            let e = &spec.networks[n];
            let sys = compose_or_fail(spec, &e.network, e.systems.as_ref().expect("checked at load"), &loc)?;
            (sys, s.x0.clone(), e.network.nodes().len(), None)
        } else {
            let m = &spec.maps[s.map.as_ref().expect("one of network or map")];
            let base = compose_or_fail(spec, m.map.source(), m.source_systems.as_ref().expect("checked at load"), &loc)?;
            let target_names = m.target_systems.as_ref().expect("checked at load");
            let total = compose_or_fail(spec, m.map.target(), target_names, &loc)?;
            let f = m.map.carrier_map();
            let y0 = f.eval_st(&s.x0).map_err(|e| runtime(spec, ErrorKind::Invalid, &loc, e.to_string()))?;
            let pushed = match integrate(&base, &s.x0, params.t1, params.dt) {
                Ok(tr) => Some(push_trajectory(f, &tr).map_err(|e| runtime(spec, ErrorKind::Invalid, &loc, e.to_string()))?),
                Err(err) => {
                    entry["base_escaped"] = escape(err, spec, &loc)?;
                    verdict = false;
                    None
                }
            };
            (total, y0, m.map.target().nodes().len(), pushed)
        };
        let _ = writeln!(text, "simulation {name}: RK4 dt {} to t1 {}", params.dt, params.t1);
        match integrate(&total, &x0, params.t1, params.dt) {
            Ok(tr) => {
                entry["steps"] = json!(tr.len() - 1);
                entry["final"] = json!(tr.last());
                let _ = writeln!(text, "  final state {:?}", tr.last());
                if let Some(pushed) = &pushed {
                    let d = pushed.max_abs_diff(&tr).unwrap_or(f64::INFINITY);
                    let tol = s.monitor.as_ref().map_or(1e-6, |m| spec.monitors[m].tol);
                    let holds = d <= tol;
                    verdict &= holds;
                    entry["push_gap"] = json!({ "max_abs_diff": d, "tolerance": tol, "holds": holds });
                    let _ = writeln!(text, "  pushed base trajectory vs total: max diff {d:e} (tol {tol:e})");
                }
                if let Some(mname) = &s.monitor {
                    let mon = monitor_for(spec, mname, tr.coords(), blocks)?;
                    let r = monitor_invariance(&tr, &mon).map_err(|e| runtime(spec, ErrorKind::Invalid, &loc, e.to_string()))?;
                    verdict &= r.holds;
                    let _ = writeln!(
                        text,
                        "  monitor {mname}: max violation {:e} at t = {} (tol {:e}) {}",
                        r.max_violation,
                        r.time,
                        r.tolerance,
                        if r.holds { "holds" } else { "VIOLATED" }
                    );
                    entry["monitor"] = json!({ "name": mname, "report": r });
                }
                trajectories.push(tr);
            }
            Err(err) => {
                let esc = escape(err, spec, &loc)?;
                let _ = writeln!(text, "  trajectory left the finite range: {esc}");
                entry["escaped"] = esc;
                verdict = false;
            }
        }
        let _ = writeln!(text, "  verdict: {verdict}");
        entry["verdict"] = json!(verdict);
        all &= verdict;
        out.push(entry);
    }
    let mut outcome = Outcome::new(all, json!({ "simulations": out, "verdict": all }), text);
    if trajectories.len() == 1 && out.len() == 1 {
        outcome.trajectory = trajectories.pop();
    }
    Ok(outcome)
}

// ------------------------------------------------------------------- linrel

fn matrix(rows: &[Vec<f64>], loc: &str, spec: &Spec) -> Result<DMatrix<f64>, LoadError> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(runtime(spec, ErrorKind::DimensionMismatch, loc, "rows of unequal length"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn build_relation(spec: &Spec, name: &str, r: &RawRelation) -> Result<LinRelation, LoadError> {
    let loc = format!("linrel.relations.{name}");
    let dims = || -> Result<(usize, usize), LoadError> {
        match (r.w, r.v) {
            (Some(w), Some(v)) => Ok((w, v)),
            _ => Err(runtime(spec, ErrorKind::Invalid, &loc, "`span` and `constraints` need `w` and `v`")),
        }
    };
    let lift = |e: opennet::linrel::LinRelError| runtime(spec, linrel_kind(&e), &loc, e.to_string());
    if let Some(cols) = &r.span {
        let (w, v) = dims()?;
        let m = matrix(cols, &loc, spec)?.transpose();
        let m = if cols.is_empty() { DMatrix::zeros(w + v, 0) } else { m };
        return LinRelation::from_span(w, v, &m).map_err(lift);
    }
    if let Some(rows) = &r.constraints {
        let (w, v) = dims()?;
        let c = if rows.is_empty() { DMatrix::zeros(0, w + v) } else { matrix(rows, &loc, spec)? };
        return LinRelation::from_constraints(w, v, &c).map_err(lift);
    }
    let check = |expect: (usize, usize)| -> Result<(), LoadError> {
        for (given, found, what) in [(r.w, expect.0, "w"), (r.v, expect.1, "v")] {
            if let Some(g) = given {
                if g != found {
                    return Err(runtime(spec, ErrorKind::DimensionMismatch, &loc, format!("{what} = {g} but the matrix gives {found}")));
                }
            }
        }
        Ok(())
    };
    if let Some(rows) = &r.graph {
        let t = matrix(rows, &loc, spec)?;
        check((t.nrows(), t.ncols()))?;
        return Ok(graph_of(&t));
    }
    if let Some(n) = r.identity {
        return Ok(LinRelation::identity(n));
    }
    let f = matrix(r.controlled.as_ref().expect("one constructor checked at load"), &loc, spec)?;
    let rel = linear_field_relation(&f);
    check((rel.dim_w(), rel.dim_v()))?;
    Ok(rel)
}

fn describe(r: &LinRelation) -> Value {
    json!({ "w": r.dim_w(), "v": r.dim_v(), "dim": r.dim() })
}

pub fn linrel(spec: &Spec) -> Result<Outcome, LoadError> {
    let script: &RawLinrel = spec
        .linrel
        .as_ref()
        .ok_or_else(|| runtime(spec, ErrorKind::Invalid, "linrel", "spec declares no `linrel` script"))?;
    let mut env: BTreeMap<String, LinRelation> = BTreeMap::new();
    let mut text = String::new();
    let mut relations = serde_json::Map::new();
    for (name, r) in &script.relations {
        let rel = build_relation(spec, name, r)?;
        let _ = writeln!(text, "{name}: subspace of dim {} in R^{} × R^{}", rel.dim(), rel.dim_w(), rel.dim_v());
        relations.insert(name.clone(), describe(&rel));
        env.insert(name.clone(), rel);
    }
    let mut steps = Vec::new();
    let mut all = true;
    for (i, step) in script.steps.iter().enumerate() {
        let loc = format!("linrel.steps[{i}]");
        let lift = |e: opennet::linrel::LinRelError| runtime(spec, linrel_kind(&e), &loc, e.to_string());
        if let Some(kind) = &step.assert {
            let (a, b) = (&env[&step.args[0]], &env[&step.args[1]]);
            let holds = match kind.as_str() {
                "contains" => contains(a, b).map_err(lift)?,
                "equals" => equals(a, b).map_err(lift)?,
                _ => contains(a, b).map_err(lift)? && a.dim() > b.dim(),
            };
            all &= holds;
            let _ = writeln!(
                text,
                "assert {kind}({}, {}): {holds} (dims {} and {})",
                step.args[0],
                step.args[1],
                a.dim(),
                b.dim()
            );
            steps.push(json!({ "assert": kind, "args": step.args, "holds": holds, "dims": [a.dim(), b.dim()] }));
            continue;
        }
        let name = step.name.as_ref().expect("checked at load");
        let (rel, op) = if let Some((s, r)) = &step.compose {
            (compose_rel(&env[s], &env[r]).map_err(lift)?, format!("{s} ∘ {r}"))
        } else if let Some(t) = &step.transpose {
            (env[t].transpose(), format!("{t}ᵀ"))
        } else {
            let o = step.odot.as_ref().expect("checked at load");
            let comps: Vec<LinRelation> = o.components.iter().map(|c| env[c].clone()).collect();
            (odot(&o.phi, &comps, &o.mu_dims).map_err(lift)?, format!("⊙({:?}; {})", o.phi, o.components.join(", ")))
        };
        let _ = writeln!(text, "{name} = {op}: dim {} in R^{} × R^{}", rel.dim(), rel.dim_w(), rel.dim_v());
        let mut d = describe(&rel);
        d["let"] = json!(name);
        steps.push(d);
        env.insert(name.clone(), rel);
    }
    let _ = writeln!(text, "verdict: {all}");
    Ok(Outcome::new(all, json!({ "relations": relations, "steps": steps, "verdict": all }), text))
}
