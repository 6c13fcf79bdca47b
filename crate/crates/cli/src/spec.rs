//! Spec files: JSON documents declaring spaces, systems, networks and the
//! checks to run on them.
//!
//! Loading happens in two passes. Serde reads the raw document (any syntax
//! or shape problem is a parse error carrying line and column), then
//! [`resolve`] builds the core objects, reporting each failure against the
//! JSON path of the entry that caused it.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use opennet::exprlang::{parse, Expr};
use opennet::graph::{Graph, GraphError, GraphMap};
use opennet::linrel::LinRelError;
use opennet::network::{from_fibration, from_graph, ManifoldNetwork, Network, NetworkError, NetworkMap};
use opennet::opensys::{OpenSystem, SystemError};
use opennet::spaces::{Space, SpaceError, Submersion, SubmersionMap};
use serde::{Deserialize, Serialize};

/// What went wrong while loading; each kind has its own exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorKind {
    Parse,
    DanglingReference,
    DimensionMismatch,
    Invalid,
    Io,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Parse => 2,
            ErrorKind::DanglingReference => 3,
            ErrorKind::DimensionMismatch => 4,
            ErrorKind::Invalid => 5,
            ErrorKind::Io => 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadError {
    pub kind: ErrorKind,
    pub file: PathBuf,
    /// JSON path of the offending entry, or `line L, column C` for syntax
    /// errors.
    pub location: String,
    pub message: String,
}

impl fmt::Display for LoadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.file.display(), self.location, self.message)
    }
}

impl std::error::Error for LoadError {}

// ------------------------------------------------------------------ raw form

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSpec {
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub spaces: BTreeMap<String, RawSpace>,
    #[serde(default)]
    pub submersions: BTreeMap<String, RawSubmersion>,
    #[serde(default)]
    pub graphs: BTreeMap<String, RawGraph>,
    #[serde(default)]
    pub networks: BTreeMap<String, RawNetwork>,
    #[serde(default)]
    pub systems: BTreeMap<String, RawSystem>,
    #[serde(default)]
    pub fibrations: BTreeMap<String, RawFibration>,
    #[serde(default)]
    pub maps: BTreeMap<String, RawMap>,
    #[serde(default)]
    pub monitors: BTreeMap<String, RawMonitor>,
    #[serde(default)]
    pub simulations: BTreeMap<String, RawSimulation>,
    #[serde(default)]
    pub linrel: Option<RawLinrel>,
    #[serde(default)]
    pub params: RawParams,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSpace {
    pub dim: Option<usize>,
    pub coords: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum RawFactor {
    Named(String),
    Renamed {
        space: String,
        #[serde(default)]
        coords: Option<Vec<String>>,
        #[serde(default)]
        prefix: Option<String>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSubmersion {
    pub state: Vec<RawFactor>,
    #[serde(default)]
    pub input: Vec<RawFactor>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGraph {
    pub vertices: usize,
    #[serde(default)]
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNetwork {
    pub nodes: Option<Vec<String>>,
    pub carrier: Option<String>,
    pub inputs: Option<Vec<String>>,
    pub graph: Option<String>,
    pub phase: Option<String>,
    pub phases: Option<Vec<String>>,
    /// One system per node, used by `compose`.
    pub systems: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum RawOn {
    Submersion(String),
    Node { network: String, node: usize },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSystem {
    pub on: RawOn,
    pub field: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFibration {
    pub source: String,
    pub target: String,
    pub vertex_map: Option<Vec<usize>>,
    pub edge_map: Option<Vec<usize>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMap {
    pub source: String,
    pub target: String,
    pub phi: Option<Vec<usize>>,
    pub components: Option<Vec<Vec<String>>>,
    pub carrier_map: Option<Vec<String>>,
    pub fibration: Option<String>,
    pub source_systems: Option<Vec<String>>,
    pub target_systems: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMonitor {
    #[serde(default)]
    pub diagonal: bool,
    #[serde(default)]
    pub constraints: Vec<String>,
    pub tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSimulation {
    pub network: Option<String>,
    pub map: Option<String>,
    pub x0: Vec<f64>,
    pub monitor: Option<String>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawParams {
    pub samples: Option<usize>,
    pub tol: Option<f64>,
    pub dt: Option<f64>,
    pub t1: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawLinrel {
    #[serde(default)]
    pub relations: BTreeMap<String, RawRelation>,
    #[serde(default)]
    pub steps: Vec<RawStep>,
}

/// Exactly one of the constructors must be given. Matrices are lists of
/// rows; `span` is a list of column vectors `(w; v)`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRelation {
    pub w: Option<usize>,
    pub v: Option<usize>,
    pub span: Option<Vec<Vec<f64>>>,
    pub constraints: Option<Vec<Vec<f64>>>,
    pub graph: Option<Vec<Vec<f64>>>,
    pub identity: Option<usize>,
    /// The relation between linear fields on `V` and on `W` related by
    /// this `W × V` matrix.
    pub controlled: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawStep {
    #[serde(rename = "let")]
    pub name: Option<String>,
    pub compose: Option<(String, String)>,
    pub transpose: Option<String>,
    pub odot: Option<RawOdot>,
    pub assert: Option<String>,
    #[serde(default)]
    pub args: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOdot {
    pub phi: Vec<usize>,
    pub components: Vec<String>,
    pub mu_dims: Vec<usize>,
}

// ------------------------------------------------------------- resolved form

/// Numeric parameters after applying defaults, spec values and flags, in
/// that order of precedence (flags win).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Params {
    pub samples: usize,
    pub tol: f64,
    pub dt: f64,
    pub t1: f64,
    pub seed: u64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            samples: opennet::opensys::DEFAULT_SAMPLES,
            tol: opennet::opensys::DEFAULT_TOL,
            dt: 1e-3,
            t1: 1.0,
            seed: 0,
        }
    }
}

impl Params {
    pub fn overlay(self, raw: &RawParams) -> Params {
        Params {
            samples: raw.samples.unwrap_or(self.samples),
            tol: raw.tol.unwrap_or(self.tol),
            dt: raw.dt.unwrap_or(self.dt),
            t1: raw.t1.unwrap_or(self.t1),
            seed: raw.seed.unwrap_or(self.seed),
        }
    }
}

pub struct NetworkEntry {
    pub network: Network,
    /// Present when the network was generated from a graph.
    pub manifold: Option<ManifoldNetwork>,
    pub graph: Option<String>,
    pub systems: Option<Vec<String>>,
}

pub struct FibrationEntry {
    pub source: String,
    pub target: String,
    pub map: Option<GraphMap>,
}

pub struct MapEntry {
    pub map: NetworkMap,
    pub source_systems: Option<Vec<String>>,
    pub target_systems: Option<Vec<String>>,
}

pub struct MonitorEntry {
    pub diagonal: bool,
    pub constraints: Vec<String>,
    pub tol: f64,
}

pub struct SimulationEntry {
    pub network: Option<String>,
    pub map: Option<String>,
    pub x0: Vec<f64>,
    pub monitor: Option<String>,
}

pub struct Spec {
    pub file: PathBuf,
    pub description: Option<String>,
    pub spaces: BTreeMap<String, Space>,
    pub submersions: BTreeMap<String, Submersion>,
    pub graphs: BTreeMap<String, Graph>,
    pub networks: BTreeMap<String, NetworkEntry>,
    pub systems: BTreeMap<String, OpenSystem>,
    pub fibrations: BTreeMap<String, FibrationEntry>,
    pub maps: BTreeMap<String, MapEntry>,
    pub monitors: BTreeMap<String, MonitorEntry>,
    pub simulations: BTreeMap<String, SimulationEntry>,
    pub linrel: Option<RawLinrel>,
    pub params: RawParams,
}

// ------------------------------------------------------------------- loading

pub fn load(path: &Path) -> Result<Spec, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|e| LoadError {
        kind: ErrorKind::Io,
        file: path.to_path_buf(),
        location: "file".into(),
        message: e.to_string(),
    })?;
    load_str(&text, path)
}

pub fn load_str(text: &str, path: &Path) -> Result<Spec, LoadError> {
    if text.trim().is_empty() {
        return Err(LoadError {
            kind: ErrorKind::Parse,
            file: path.to_path_buf(),
            location: "line 1, column 1".into(),
            message: "empty spec file".into(),
        });
    }
    let raw: RawSpec = serde_json::from_str(text).map_err(|e| LoadError {
        kind: ErrorKind::Parse,
        file: path.to_path_buf(),
        location: format!("line {}, column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    resolve(raw, path)
}

struct Ctx<'a> {
    file: &'a Path,
}

impl Ctx<'_> {
    fn err(&self, kind: ErrorKind, location: impl Into<String>, message: impl Into<String>) -> LoadError {
        LoadError {
            kind,
            file: self.file.to_path_buf(),
            location: location.into(),
            message: message.into(),
        }
    }

    fn dangling(&self, location: impl Into<String>, what: &str, name: &str) -> LoadError {
        self.err(ErrorKind::DanglingReference, location, format!("undeclared {what} \"{name}\""))
    }

    fn exprs(&self, sources: &[String], vars: &[String], location: &str) -> Result<Vec<Expr>, LoadError> {
        sources
            .iter()
            .enumerate()
            .map(|(i, s)| {
                parse(s, vars).map_err(|e| {
                    self.err(
                        ErrorKind::Parse,
                        format!("{location}[{i}]"),
                        format!("{e} in \"{s}\" (coordinates in scope: {})", vars.join(", ")),
                    )
                })
            })
            .collect()
    }

    fn expect_len(&self, location: &str, what: &str, expected: usize, found: usize) -> Result<(), LoadError> {
        if expected == found {
            Ok(())
        } else {
            Err(self.err(
                ErrorKind::DimensionMismatch,
                location,
                format!("{what}: expected {expected}, found {found}"),
            ))
        }
    }
}

fn space_kind(e: &SpaceError) -> ErrorKind {
    match e {
        SpaceError::Shape { .. } => ErrorKind::DimensionMismatch,
        SpaceError::UnknownVariable { .. } => ErrorKind::Parse,
        _ => ErrorKind::Invalid,
    }
}

fn system_kind(e: &SystemError) -> ErrorKind {
    match e {
        SystemError::Space(s) => space_kind(s),
        SystemError::Shape { .. } | SystemError::IndexOutOfRange { .. } => ErrorKind::DimensionMismatch,
        SystemError::UnknownVariable { .. } => ErrorKind::Parse,
        _ => ErrorKind::Invalid,
    }
}

pub(crate) fn network_kind(e: &NetworkError) -> ErrorKind {
    match e {
        NetworkError::Space(s) => space_kind(s),
        NetworkError::System(s) => system_kind(s),
        NetworkError::Graph(GraphError::MalformedMap(_)) => ErrorKind::Invalid,
        NetworkError::Graph(_)
        | NetworkError::Shape { .. }
        | NetworkError::IndexOutOfRange { .. }
        | NetworkError::PhaseMismatch { .. } => ErrorKind::DimensionMismatch,
        _ => ErrorKind::Invalid,
    }
}

pub(crate) fn linrel_kind(e: &LinRelError) -> ErrorKind {
    match e {
        LinRelError::Dimension { .. } | LinRelError::IndexOutOfRange { .. } => ErrorKind::DimensionMismatch,
    }
}

fn resolve(raw: RawSpec, file: &Path) -> Result<Spec, LoadError> {
    let cx = Ctx { file };

    let mut spaces = BTreeMap::new();
    for (name, s) in &raw.spaces {
        let loc = format!("spaces.{name}");
        let space = match (&s.dim, &s.coords) {
            (Some(d), None) => Space::euclidean(name.clone(), *d),
            (None, Some(c)) => Space::new(name.clone(), c.iter().cloned()).map_err(|e| cx.err(ErrorKind::Invalid, &loc, e.to_string()))?,
            (Some(d), Some(c)) => {
                cx.expect_len(&loc, "coordinate names vs dim", *d, c.len())?;
                Space::new(name.clone(), c.iter().cloned()).map_err(|e| cx.err(ErrorKind::Invalid, &loc, e.to_string()))?
            }
            (None, None) => return Err(cx.err(ErrorKind::Invalid, loc, "a space needs `dim` or `coords`")),
        };
        spaces.insert(name.clone(), space);
    }

    let factor = |f: &RawFactor, loc: String| -> Result<Space, LoadError> {
        match f {
            RawFactor::Named(n) => spaces.get(n).cloned().ok_or_else(|| cx.dangling(loc, "space", n)),
            RawFactor::Renamed { space, coords, prefix } => {
                let base = spaces.get(space).ok_or_else(|| cx.dangling(&loc, "space", space))?;
                match (coords, prefix) {
                    (Some(c), None) => {
                        cx.expect_len(&loc, &format!("coordinate names for space \"{space}\""), base.dim(), c.len())?;
                        Space::new(space.clone(), c.iter().cloned()).map_err(|e| cx.err(ErrorKind::Invalid, &loc, e.to_string()))
                    }
                    (None, Some(p)) => Ok(base.prefixed(p)),
                    (None, None) => Ok(base.clone()),
                    (Some(_), Some(_)) => Err(cx.err(ErrorKind::Invalid, loc, "give either `coords` or `prefix`, not both")),
                }
            }
        }
    };

    let mut submersions = BTreeMap::new();
    for (name, s) in &raw.submersions {
        let loc = format!("submersions.{name}");
        let state = s
            .state
            .iter()
            .enumerate()
            .map(|(i, f)| factor(f, format!("{loc}.state[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let input = s
            .input
            .iter()
            .enumerate()
            .map(|(i, f)| factor(f, format!("{loc}.input[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let sub = Submersion::new(state, input).map_err(|e| cx.err(space_kind(&e), &loc, e.to_string()))?;
        submersions.insert(name.clone(), sub);
    }

    let mut graphs = BTreeMap::new();
    for (name, g) in &raw.graphs {
        let graph = Graph::new(g.vertices, g.edges.clone())
            .map_err(|e| cx.err(ErrorKind::DimensionMismatch, format!("graphs.{name}.edges"), e.to_string()))?;
        graphs.insert(name.clone(), graph);
    }

    let mut networks = BTreeMap::new();
    for (name, n) in &raw.networks {
        let loc = format!("networks.{name}");
        let entry = match (&n.graph, &n.nodes) {
            (Some(gname), None) => {
                if n.carrier.is_some() || n.inputs.is_some() {
                    return Err(cx.err(ErrorKind::Invalid, loc, "a graph network takes `phase` or `phases`, not `carrier`/`inputs`"));
                }
                let graph = graphs.get(gname).ok_or_else(|| cx.dangling(format!("{loc}.graph"), "graph", gname))?;
                let phases = match (&n.phase, &n.phases) {
                    (Some(p), None) => {
                        let s = spaces.get(p).ok_or_else(|| cx.dangling(format!("{loc}.phase"), "space", p))?;
                        vec![s.clone(); graph.vertex_count()]
                    }
                    (None, Some(ps)) => {
                        cx.expect_len(&format!("{loc}.phases"), "one phase per vertex", graph.vertex_count(), ps.len())?;
                        ps.iter()
                            .enumerate()
                            .map(|(i, p)| spaces.get(p).cloned().ok_or_else(|| cx.dangling(format!("{loc}.phases[{i}]"), "space", p)))
                            .collect::<Result<Vec<_>, _>>()?
                    }
                    _ => return Err(cx.err(ErrorKind::Invalid, loc, "a graph network needs exactly one of `phase` or `phases`")),
                };
                let mn = ManifoldNetwork::new(graph.clone(), phases).map_err(|e| cx.err(network_kind(&e), &loc, e.to_string()))?;
                let network = from_graph(&mn).map_err(|e| cx.err(network_kind(&e), &loc, e.to_string()))?;
                NetworkEntry {
                    network,
                    manifold: Some(mn),
                    graph: Some(gname.clone()),
                    systems: n.systems.clone(),
                }
            }
            (None, Some(nodes)) => {
                let nodes = nodes
                    .iter()
                    .enumerate()
                    .map(|(i, s)| submersions.get(s).cloned().ok_or_else(|| cx.dangling(format!("{loc}.nodes[{i}]"), "submersion", s)))
                    .collect::<Result<Vec<_>, _>>()?;
                let cname = n.carrier.as_ref().ok_or_else(|| cx.err(ErrorKind::Invalid, &loc, "missing `carrier`"))?;
                let carrier = submersions
                    .get(cname)
                    .cloned()
                    .ok_or_else(|| cx.dangling(format!("{loc}.carrier"), "submersion", cname))?;
                let sources = n.inputs.clone().unwrap_or_default();
                let expected: usize = nodes.iter().map(Submersion::input_dim).sum();
                cx.expect_len(&format!("{loc}.inputs"), "one expression per node input coordinate", expected, sources.len())?;
                let inputs = cx.exprs(&sources, carrier.total_coords(), &format!("{loc}.inputs"))?;
                let network = Network::from_inputs(nodes, carrier, inputs).map_err(|e| cx.err(network_kind(&e), &loc, e.to_string()))?;
                NetworkEntry {
                    network,
                    manifold: None,
                    graph: None,
                    systems: n.systems.clone(),
                }
            }
            _ => return Err(cx.err(ErrorKind::Invalid, loc, "a network needs either `graph` or `nodes`")),
        };
        networks.insert(name.clone(), entry);
    }

    let mut systems = BTreeMap::new();
    for (name, s) in &raw.systems {
        let loc = format!("systems.{name}");
        let on = match &s.on {
            RawOn::Submersion(sub) => submersions
                .get(sub)
                .cloned()
                .ok_or_else(|| cx.dangling(format!("{loc}.on"), "submersion", sub))?,
            RawOn::Node { network, node } => {
                let entry = networks.get(network).ok_or_else(|| cx.dangling(format!("{loc}.on.network"), "network", network))?;
                let nodes = entry.network.nodes();
                nodes.get(*node).cloned().ok_or_else(|| {
                    cx.err(
                        ErrorKind::DimensionMismatch,
                        format!("{loc}.on.node"),
                        format!("network \"{network}\" has {} nodes, no node {node}", nodes.len()),
                    )
                })?
            }
        };
        cx.expect_len(&format!("{loc}.field"), &format!("one component per state coordinate of {on}"), on.state_dim(), s.field.len())?;
        let field = cx.exprs(&s.field, on.total_coords(), &format!("{loc}.field"))?;
        let sys = OpenSystem::new(on, field).map_err(|e| cx.err(system_kind(&e), &loc, e.to_string()))?;
        systems.insert(name.clone(), sys);
    }

    let check_list = |list: &[String], nodes: &[Submersion], loc: &str| -> Result<(), LoadError> {
        cx.expect_len(loc, "one system per node", nodes.len(), list.len())?;
        for (i, (s, node)) in list.iter().zip(nodes).enumerate() {
            let sys = systems.get(s).ok_or_else(|| cx.dangling(format!("{loc}[{i}]"), "system", s))?;
            if !sys.on().same_shape(node) {
                return Err(cx.err(
                    ErrorKind::DimensionMismatch,
                    format!("{loc}[{i}]"),
                    format!("system \"{s}\" lives on {}, node {i} is {node}", sys.on()),
                ));
            }
        }
        Ok(())
    };
    for (name, entry) in &networks {
        if let Some(list) = &entry.systems {
            check_list(list, entry.network.nodes(), &format!("networks.{name}.systems"))?;
        }
    }

    let mut fibrations = BTreeMap::new();
    for (name, f) in &raw.fibrations {
        let loc = format!("fibrations.{name}");
        let g = graphs.get(&f.source).ok_or_else(|| cx.dangling(format!("{loc}.source"), "graph", &f.source))?;
        let h = graphs.get(&f.target).ok_or_else(|| cx.dangling(format!("{loc}.target"), "graph", &f.target))?;
        let map = match (&f.vertex_map, &f.edge_map) {
            (Some(v), Some(e)) => {
                let m = GraphMap {
                    vertex_map: v.clone(),
                    edge_map: e.clone(),
                };
                m.validate(g, h).map_err(|e| cx.err(ErrorKind::DimensionMismatch, &loc, e.to_string()))?;
                Some(m)
            }
            (None, None) => None,
            _ => return Err(cx.err(ErrorKind::Invalid, loc, "give both `vertex_map` and `edge_map`, or neither")),
        };
        fibrations.insert(
            name.clone(),
            FibrationEntry {
                source: f.source.clone(),
                target: f.target.clone(),
                map,
            },
        );
    }

    let mut maps = BTreeMap::new();
    for (name, m) in &raw.maps {
        let loc = format!("maps.{name}");
        let src = networks.get(&m.source).ok_or_else(|| cx.dangling(format!("{loc}.source"), "network", &m.source))?;
        let dst = networks.get(&m.target).ok_or_else(|| cx.dangling(format!("{loc}.target"), "network", &m.target))?;
        let map = if let Some(fname) = &m.fibration {
            if m.phi.is_some() || m.components.is_some() || m.carrier_map.is_some() {
                return Err(cx.err(ErrorKind::Invalid, loc, "a fibration map takes no `phi`, `components` or `carrier_map`"));
            }
            let fib = fibrations.get(fname).ok_or_else(|| cx.dangling(format!("{loc}.fibration"), "fibration", fname))?;
            let graph_map = match &fib.map {
                Some(gm) => gm.clone(),
                None => opennet::graph::enumerate_fibrations(&graphs[&fib.source], &graphs[&fib.target])
                    .into_iter()
                    .next()
                    .ok_or_else(|| cx.err(ErrorKind::Invalid, format!("{loc}.fibration"), format!("no fibration {} → {} exists", fib.source, fib.target)))?,
            };
            // the map of networks runs against the fibration
            let (Some(over_g), Some(over_h)) = (&dst.manifold, &src.manifold) else {
                return Err(cx.err(ErrorKind::Invalid, loc, "fibration maps need graph networks on both sides"));
            };
            if dst.graph.as_deref() != Some(fib.source.as_str()) || src.graph.as_deref() != Some(fib.target.as_str()) {
                return Err(cx.err(
                    ErrorKind::Invalid,
                    loc,
                    format!(
                        "fibration \"{fname}\" runs {} → {}; the map's target must be the network over {} and its source the network over {}",
                        fib.source, fib.target, fib.source, fib.target
                    ),
                ));
            }
            from_fibration(&graph_map, over_g, over_h).map_err(|e| cx.err(network_kind(&e), &loc, e.to_string()))?
        } else {
            let (Some(phi), Some(components), Some(carrier_map)) = (&m.phi, &m.components, &m.carrier_map) else {
                return Err(cx.err(ErrorKind::Invalid, loc, "a map needs `phi`, `components` and `carrier_map` (or `fibration`)"));
            };
            let tau = dst.network.nodes();
            let mu = src.network.nodes();
            cx.expect_len(&format!("{loc}.phi"), "one index per target node", tau.len(), phi.len())?;
            cx.expect_len(&format!("{loc}.components"), "one component per target node", tau.len(), components.len())?;
            let mut comps = Vec::with_capacity(phi.len());
            for (a, (&y, srcs)) in phi.iter().zip(components).enumerate() {
                let from = mu.get(y).ok_or_else(|| {
                    cx.err(
                        ErrorKind::DimensionMismatch,
                        format!("{loc}.phi[{a}]"),
                        format!("source network has {} nodes, no node {y}", mu.len()),
                    )
                })?;
                let cloc = format!("{loc}.components[{a}]");
                cx.expect_len(&cloc, &format!("one expression per total coordinate of {}", tau[a]), tau[a].total_dim(), srcs.len())?;
                let tot = cx.exprs(srcs, from.total_coords(), &cloc)?;
                comps.push(SubmersionMap::from_total(from.clone(), tau[a].clone(), tot).map_err(|e| cx.err(space_kind(&e), &cloc, e.to_string()))?);
            }
            let (c, b) = (src.network.carrier(), dst.network.carrier());
            let floc = format!("{loc}.carrier_map");
            cx.expect_len(&floc, &format!("one expression per total coordinate of {b}"), b.total_dim(), carrier_map.len())?;
            let tot = cx.exprs(carrier_map, c.total_coords(), &floc)?;
            let f = SubmersionMap::from_total(c.clone(), b.clone(), tot).map_err(|e| cx.err(space_kind(&e), &floc, e.to_string()))?;
            NetworkMap::new(src.network.clone(), dst.network.clone(), phi.clone(), comps, f)
                .map_err(|e| cx.err(network_kind(&e), &loc, e.to_string()))?
        };
        if let Some(list) = &m.source_systems {
            check_list(list, map.source().nodes(), &format!("{loc}.source_systems"))?;
        }
        if let Some(list) = &m.target_systems {
            check_list(list, map.target().nodes(), &format!("{loc}.target_systems"))?;
        }
        maps.insert(
            name.clone(),
            MapEntry {
                map,
                source_systems: m.source_systems.clone(),
                target_systems: m.target_systems.clone(),
            },
        );
    }

    let mut monitors = BTreeMap::new();
    for (name, m) in &raw.monitors {
        if m.diagonal == !m.constraints.is_empty() {
            return Err(cx.err(
                ErrorKind::Invalid,
                format!("monitors.{name}"),
                "a monitor is either `diagonal: true` or a non-empty `constraints` list",
            ));
        }
        monitors.insert(
            name.clone(),
            MonitorEntry {
                diagonal: m.diagonal,
                constraints: m.constraints.clone(),
                tol: m.tol.unwrap_or(1e-6),
            },
        );
    }

    let mut simulations = BTreeMap::new();
    for (name, s) in &raw.simulations {
        let loc = format!("simulations.{name}");
        let (nodes, systems_list, carrier) = match (&s.network, &s.map) {
            (Some(n), None) => {
                let e = networks.get(n).ok_or_else(|| cx.dangling(format!("{loc}.network"), "network", n))?;
                (e.network.nodes().len(), e.systems.clone(), e.network.carrier().clone())
            }
            (None, Some(m)) => {
                let e = maps.get(m).ok_or_else(|| cx.dangling(format!("{loc}.map"), "map", m))?;
                if e.source_systems.is_none() {
                    return Err(cx.err(ErrorKind::Invalid, &loc, format!("map \"{m}\" has no `source_systems` to integrate")));
                }
                (e.map.target().nodes().len(), e.target_systems.clone(), e.map.source().carrier().clone())
            }
            _ => return Err(cx.err(ErrorKind::Invalid, loc, "a simulation names exactly one of `network` or `map`")),
        };
        if systems_list.is_none() {
            return Err(cx.err(ErrorKind::Invalid, &loc, "the simulated network has no systems attached"));
        }
        if !carrier.is_closed() {
            return Err(cx.err(
                ErrorKind::Invalid,
                &loc,
                format!("carrier {carrier} has input coordinates; only closed networks can be simulated"),
            ));
        }
        cx.expect_len(&format!("{loc}.x0"), "initial state", carrier.state_dim(), s.x0.len())?;
        if let Some(mon) = &s.monitor {
            let entry = monitors.get(mon).ok_or_else(|| cx.dangling(format!("{loc}.monitor"), "monitor", mon))?;
            let coords = match (&s.network, &s.map) {
                (Some(n), _) => networks[n].network.carrier().state_coords().to_vec(),
                (_, Some(m)) => maps[m].map.target().carrier().state_coords().to_vec(),
                _ => unreachable!(),
            };
            if entry.diagonal {
                if coords.len() % nodes != 0 {
                    return Err(cx.err(
                        ErrorKind::DimensionMismatch,
                        format!("monitors.{mon}"),
                        format!("diagonal monitor needs {nodes} equal blocks, carrier has {} state coordinates", coords.len()),
                    ));
                }
            } else {
                cx.exprs(&entry.constraints, &coords, &format!("monitors.{mon}.constraints"))?;
            }
        }
        simulations.insert(
            name.clone(),
            SimulationEntry {
                network: s.network.clone(),
                map: s.map.clone(),
                x0: s.x0.clone(),
                monitor: s.monitor.clone(),
            },
        );
    }

    if let Some(script) = &raw.linrel {
        check_script(&cx, script)?;
    }

    Ok(Spec {
        file: file.to_path_buf(),
        description: raw.description,
        spaces,
        submersions,
        graphs,
        networks,
        systems,
        fibrations,
        maps,
        monitors,
        simulations,
        linrel: raw.linrel,
        params: raw.params,
    })
}

/// Name resolution for a relation script; dimensions are checked when the
/// script runs.
fn check_script(cx: &Ctx<'_>, script: &RawLinrel) -> Result<(), LoadError> {
    let mut known: Vec<&str> = script.relations.keys().map(String::as_str).collect();
    for (name, r) in &script.relations {
        let given = [r.span.is_some(), r.constraints.is_some(), r.graph.is_some(), r.identity.is_some(), r.controlled.is_some()];
        if given.iter().filter(|&&g| g).count() != 1 {
            return Err(cx.err(
                ErrorKind::Invalid,
                format!("linrel.relations.{name}"),
                "give exactly one of `span`, `constraints`, `graph`, `identity`, `controlled`",
            ));
        }
    }
    for (i, step) in script.steps.iter().enumerate() {
        let loc = format!("linrel.steps[{i}]");
        let mut refs: Vec<&String> = Vec::new();
        let mut ops = 0;
        if let Some((s, r)) = &step.compose {
            refs.extend([s, r]);
            ops += 1;
        }
        if let Some(t) = &step.transpose {
            refs.push(t);
            ops += 1;
        }
        if let Some(o) = &step.odot {
            refs.extend(o.components.iter());
            ops += 1;
        }
        if step.assert.is_some() {
            refs.extend(step.args.iter());
            ops += 1;
        }
        if ops != 1 || step.name.is_some() == step.assert.is_some() {
            return Err(cx.err(
                ErrorKind::Invalid,
                loc,
                "a step is either `let` with one of `compose`/`transpose`/`odot`, or an `assert` with `args`",
            ));
        }
        if let Some(a) = &step.assert {
            if !matches!(a.as_str(), "contains" | "equals" | "strict") {
                return Err(cx.err(ErrorKind::Invalid, format!("{loc}.assert"), format!("unknown assertion \"{a}\" (contains, equals, strict)")));
            }
            if step.args.len() != 2 {
                return Err(cx.err(ErrorKind::Invalid, format!("{loc}.args"), "assertions take two relation names"));
            }
        }
        for r in refs {
            if !known.contains(&r.as_str()) {
                return Err(cx.dangling(&loc, "relation", r));
            }
        }
        if let Some(n) = &step.name {
            known.push(n);
        }
    }
    Ok(())
}
