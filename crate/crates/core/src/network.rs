//! Networks of open systems and maps between them.
//!
//! A [`Network`] is a list of node submersions `τ(x)` with a carrier `b` and
//! an interconnection `ψ: b → ∏ τ(x)`. A [`NetworkMap`] goes from a network
//! `(μ, ν)` indexed by `Y` to a network `(τ, ψ)` indexed by `X`; its index
//! map runs the other way, `φ: X → Y`, with components `Φ(x): μ(φ(x)) → τ(x)`
//! and a carrier map `f`.

use serde::Serialize;
use thiserror::Error;

use crate::exprlang::{EvalError, Expr};
use crate::graph::{fibration_defects, FibrationDefect, Graph, GraphError, GraphMap};
use crate::opensys::{
    check_phi_related_family, check_related, product_systems, pullback, CheckOptions, FamilyReport, OpenSystem,
    RelatednessReport, SystemError,
};
use crate::sampling::{Probe, Sampler};
use crate::spaces::{
    product_submersion, Interconnection, ProductLayout, Space, SpaceError, SquareReport, Submersion, SubmersionMap,
    SQUARE_SAMPLES, SQUARE_TOL,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("{context}: expected {expected}, found {found}")]
    Shape {
        context: String,
        expected: usize,
        found: usize,
    },
    #[error("index map sends {index} to {image}, but the source network has {count} nodes")]
    IndexOutOfRange { index: usize, image: usize, count: usize },
    #[error("phase of vertex {vertex} has dimension {found}, its image has {expected}")]
    PhaseMismatch {
        vertex: usize,
        expected: usize,
        found: usize,
    },
    #[error("not a graph fibration: {}", describe_defects(.0))]
    NotAFibration(Vec<FibrationDefect>),
    #[error("2-cell condition fails in component {}: residual {:e} at {:?}", .0.component, .0.max_residual, .0.worst_point)]
    TwoCellViolation(SquareReport),
    #[error("component {0} is not a coordinate permutation, so the induced system cannot be formed")]
    NotInvertible(usize),
    #[error("theorem hypothesis not satisfied: family is not related at index {:?} (residual {:e})", .0.worst_index, .0.aggregate.max_residual)]
    HypothesisNotSatisfied(Box<FamilyReport>),
}

fn describe_defects(defects: &[FibrationDefect]) -> String {
    defects
        .iter()
        .map(|d| format!("vertex {} has {} lifts of edge {}", d.vertex, d.lifts.len(), d.target_edge))
        .collect::<Vec<_>>()
        .join("; ")
}

fn shape(context: &str, expected: usize, found: usize) -> Result<(), NetworkError> {
    if expected == found {
        Ok(())
    } else {
        Err(NetworkError::Shape {
            context: context.to_string(),
            expected,
            found,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    nodes: Vec<Submersion>,
    carrier: Submersion,
    product: Submersion,
    wiring: Interconnection,
}

impl Network {
    pub fn new(nodes: Vec<Submersion>, carrier: Submersion, wiring: Interconnection) -> Result<Self, NetworkError> {
        let product = product_submersion(&nodes)?;
        if !wiring.source().same_shape(&carrier) {
            return Err(NetworkError::Shape {
                context: format!("wiring source {} vs carrier {carrier}", wiring.source()),
                expected: carrier.total_dim(),
                found: wiring.source().total_dim(),
            });
        }
        if !wiring.target().same_shape(&product) {
            return Err(NetworkError::Shape {
                context: format!("wiring target {} vs node product {product}", wiring.target()),
                expected: product.total_dim(),
                found: wiring.target().total_dim(),
            });
        }
        Ok(Network {
            nodes,
            carrier,
            product,
            wiring,
        })
    }

    /// Builds the wiring from expressions (over the carrier's coordinates)
    /// for every input coordinate of the node product.
    pub fn from_inputs(nodes: Vec<Submersion>, carrier: Submersion, inputs: Vec<Expr>) -> Result<Self, NetworkError> {
        let product = product_submersion(&nodes)?;
        let wiring = Interconnection::from_inputs(carrier.clone(), product, inputs)?;
        Network::new(nodes, carrier, wiring)
    }

    pub fn nodes(&self) -> &[Submersion] {
        &self.nodes
    }

    pub fn carrier(&self) -> &Submersion {
        &self.carrier
    }

    /// The product of the node submersions, with `n{i}.` coordinates.
    pub fn product(&self) -> &Submersion {
        &self.product
    }

    pub fn wiring(&self) -> &Interconnection {
        &self.wiring
    }

    /// `ψ*(F_1 × … × F_n)`.
    pub fn compose(&self, systems: &[OpenSystem]) -> Result<OpenSystem, NetworkError> {
        shape("one system per node", self.nodes.len(), systems.len())?;
        for (i, (node, sys)) in self.nodes.iter().zip(systems).enumerate() {
            if !node.same_shape(sys.on()) {
                return Err(NetworkError::Shape {
                    context: format!("system {i} lives on {}, node is {node}", sys.on()),
                    expected: node.total_dim(),
                    found: sys.on().total_dim(),
                });
            }
        }
        Ok(pullback(&self.wiring, &product_systems(systems)?)?)
    }
}

/// The map `P(φ, Φ): ∏ μ(y) → ∏ τ(x)` whose block `a` is `Φ(a)` applied to
/// block `φ(a)`.
pub fn product_of_list(
    phi: &[usize],
    components: &[SubmersionMap],
    mu: &[Submersion],
    tau: &[Submersion],
) -> Result<SubmersionMap, NetworkError> {
    shape("component maps per index", phi.len(), components.len())?;
    shape("target nodes per index", phi.len(), tau.len())?;
    for (x, &y) in phi.iter().enumerate() {
        let src = mu.get(y).ok_or(NetworkError::IndexOutOfRange {
            index: x,
            image: y,
            count: mu.len(),
        })?;
        let c = &components[x];
        if !c.source().same_shape(src) || !c.target().same_shape(&tau[x]) {
            return Err(NetworkError::Shape {
                context: format!(
                    "component {x} maps {} → {}, expected {src} → {}",
                    c.source(),
                    c.target(),
                    tau[x]
                ),
                expected: src.total_dim(),
                found: c.source().total_dim(),
            });
        }
    }
    let source = product_submersion(mu)?;
    let target = product_submersion(tau)?;
    let mu_layout = ProductLayout::of(mu);
    let var = |k: usize| Expr::var(&source.total_coords()[k]);

    let mut states = Vec::with_capacity(target.state_dim());
    let mut inputs = Vec::with_capacity(target.input_dim());
    let mut st = Vec::with_capacity(target.state_dim());
    for (x, &y) in phi.iter().enumerate() {
        let c = &components[x];
        let block_tot: Vec<Expr> = mu_layout.node_total(y).into_iter().map(var).collect();
        let block_st: Vec<Expr> = mu_layout.state[y].clone().map(var).collect();
        let sd = c.target().state_dim();
        for (i, e) in c.tot().iter().enumerate() {
            let e = e.substitute_positional(c.source().total_coords(), &block_tot);
            if i < sd {
                states.push(e);
            } else {
                inputs.push(e);
            }
        }
        st.extend(c.st().iter().map(|e| e.substitute_positional(c.source().state_coords(), &block_st)));
    }
    states.extend(inputs);
    Ok(SubmersionMap::new(source, target, states, st)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkMap {
    source: Network,
    target: Network,
    phi: Vec<usize>,
    components: Vec<SubmersionMap>,
    carrier_map: SubmersionMap,
    product_map: SubmersionMap,
}

impl NetworkMap {
    /// Validates shapes and checks `ψ ∘ f = P(φ, Φ) ∘ ν` at
    /// [`SQUARE_SAMPLES`] points to [`SQUARE_TOL`].
    pub fn new(
        source: Network,
        target: Network,
        phi: Vec<usize>,
        components: Vec<SubmersionMap>,
        carrier_map: SubmersionMap,
    ) -> Result<Self, NetworkError> {
        shape("index map length vs target nodes", target.nodes.len(), phi.len())?;
        let product_map = product_of_list(&phi, &components, &source.nodes, &target.nodes)?;
        if !carrier_map.source().same_shape(&source.carrier) || !carrier_map.target().same_shape(&target.carrier) {
            return Err(NetworkError::Shape {
                context: format!(
                    "carrier map {} → {} vs carriers {} → {}",
                    carrier_map.source(),
                    carrier_map.target(),
                    source.carrier,
                    target.carrier
                ),
                expected: source.carrier.total_dim(),
                found: carrier_map.source().total_dim(),
            });
        }
        let map = NetworkMap {
            source,
            target,
            phi,
            components,
            carrier_map,
            product_map,
        };
        let report = map.two_cell_report(SQUARE_SAMPLES, 0);
        if report.max_residual > SQUARE_TOL {
            return Err(NetworkError::TwoCellViolation(report));
        }
        Ok(map)
    }

    pub fn source(&self) -> &Network {
        &self.source
    }

    pub fn target(&self) -> &Network {
        &self.target
    }

    pub fn phi(&self) -> &[usize] {
        &self.phi
    }

    pub fn components(&self) -> &[SubmersionMap] {
        &self.components
    }

    pub fn carrier_map(&self) -> &SubmersionMap {
        &self.carrier_map
    }

    /// `P(φ, Φ)`.
    pub fn product_map(&self) -> &SubmersionMap {
        &self.product_map
    }

    /// Largest componentwise gap between `ψ ∘ f` and `P(φ, Φ) ∘ ν` on the
    /// total spaces, at seeded points of the source carrier.
    pub fn two_cell_report(&self, samples: usize, seed: u64) -> SquareReport {
        let psi = self.target.wiring();
        let nu = self.source.wiring();
        let mut sampler = Sampler::new(seed);
        let mut report = SquareReport {
            max_residual: 0.0,
            component: 0,
            worst_point: Vec::new(),
            samples: 0,
            skipped: 0,
        };
        for _ in 0..samples {
            let probe = sampler.probe(self.source.carrier.total_dim(), |q| -> Result<Vec<f64>, EvalError> {
                let lhs = psi.eval_tot(&self.carrier_map.eval_tot(q)?)?;
                let rhs = self.product_map.eval_tot(&nu.eval_tot(q)?)?;
                Ok(lhs.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).collect())
            });
            match probe {
                Probe::Hit { point, value } => {
                    report.samples += 1;
                    for (i, r) in value.into_iter().enumerate() {
                        if r > report.max_residual || r.is_nan() {
                            report.max_residual = if r.is_nan() { f64::INFINITY } else { r };
                            report.component = i;
                            report.worst_point = point.clone();
                        }
                    }
                }
                Probe::Miss { .. } => report.skipped += 1,
            }
        }
        report
    }

    /// For components that are coordinate permutations, the target-node
    /// systems `F_x = TΦ(x)_st ∘ G_{φ(x)} ∘ Φ(x)_tot⁻¹`, which are
    /// `Φ(x)`-related to `G_{φ(x)}` by construction.
    pub fn induced_target_systems(&self, g: &[OpenSystem]) -> Result<Vec<OpenSystem>, NetworkError> {
        shape("one system per source node", self.source.nodes.len(), g.len())?;
        let mut out = Vec::with_capacity(self.phi.len());
        for (x, &y) in self.phi.iter().enumerate() {
            let c = &self.components[x];
            let perm = c.as_coordinate_permutation().ok_or(NetworkError::NotInvertible(x))?;
            let gy = &g[y];
            // source coordinate j of Φ(x) is target coordinate inv[j]
            let mut inv = vec![0; perm.len()];
            for (i, &j) in perm.iter().enumerate() {
                inv[j] = i;
            }
            let renamed: Vec<Expr> = inv.iter().map(|&i| Expr::var(&c.target().total_coords()[i])).collect();
            let sd = c.target().state_dim();
            let field = perm[..sd]
                .iter()
                .map(|&j| gy.field()[j].substitute_positional(gy.on().total_coords(), &renamed))
                .collect();
            out.push(OpenSystem::new(c.target().clone(), field)?);
        }
        Ok(out)
    }
}

/// Outcome of [`verify_theorem`]: the checked hypothesis and the conclusion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremReport {
    pub hypothesis: FamilyReport,
    pub conclusion: RelatednessReport,
}

/// Checks that the family `(F_x)` is related to `(G_y)` through the
/// components, then tests whether the composed systems are related by the
/// carrier map. A failed hypothesis is an error, not a negative verdict.
pub fn verify_theorem(
    map: &NetworkMap,
    g: &[OpenSystem],
    f: &[OpenSystem],
    opts: &CheckOptions,
) -> Result<TheoremReport, NetworkError> {
    shape("one system per source node", map.source.nodes.len(), g.len())?;
    let hypothesis = check_phi_related_family(&map.phi, &map.components, g, f, opts)?;
    if !hypothesis.aggregate.verdict {
        return Err(NetworkError::HypothesisNotSatisfied(Box::new(hypothesis)));
    }
    let composed_g = map.source.compose(g)?;
    let composed_f = map.target.compose(f)?;
    let conclusion = check_related(&map.carrier_map, &composed_g, &composed_f, opts)?;
    Ok(TheoremReport { hypothesis, conclusion })
}

/// A graph together with one phase space per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldNetwork {
    graph: Graph,
    phases: Vec<Space>,
}

/// Prefix of the `j`-th input factor of a graph-derived node.
pub fn input_prefix(j: usize) -> String {
    format!("in{j}.")
}

impl ManifoldNetwork {
    pub fn new(graph: Graph, phases: Vec<Space>) -> Result<Self, NetworkError> {
        shape("one phase space per vertex", graph.vertex_count(), phases.len())?;
        Ok(ManifoldNetwork { graph, phases })
    }

    /// Every vertex gets the same phase space.
    pub fn uniform(graph: Graph, phase: Space) -> Self {
        let phases = vec![phase; graph.vertex_count()];
        ManifoldNetwork { graph, phases }
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn phases(&self) -> &[Space] {
        &self.phases
    }

    /// `I(a) = P(a) × ∏ P(source(e)) → P(a)` over incoming edges in ascending
    /// order; the `j`-th input factor has its coordinates prefixed `in{j}.`.
    pub fn node_submersion(&self, a: usize) -> Result<Submersion, NetworkError> {
        let inputs = self
            .graph
            .in_neighborhood(a)?
            .into_iter()
            .enumerate()
            .map(|(j, e)| self.phases[self.graph.source(e)].prefixed(&input_prefix(j)))
            .collect();
        Ok(Submersion::new(vec![self.phases[a].clone()], inputs)?)
    }

    /// The network with nodes `I(a)`, carrier the identity submersion on
    /// `∏ P(a)`, and wiring sending the state of each edge's source to the
    /// matching input slot of its target.
    pub fn to_network(&self) -> Result<Network, NetworkError> {
        let n = self.graph.vertex_count();
        let nodes = (0..n).map(|a| self.node_submersion(a)).collect::<Result<Vec<_>, _>>()?;
        let carrier = self.carrier()?;
        let layout = block_ranges(&self.phases);
        let mut inputs = Vec::new();
        for a in 0..n {
            for e in self.graph.in_neighborhood(a)? {
                let s = self.graph.source(e);
                inputs.extend(layout[s].clone().map(|k| Expr::var(&carrier.total_coords()[k])));
            }
        }
        Network::from_inputs(nodes, carrier, inputs)
    }

    fn carrier(&self) -> Result<Submersion, NetworkError> {
        let ids = self
            .phases
            .iter()
            .map(|p| Submersion::identity(vec![p.clone()]))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(product_submersion(&ids)?)
    }
}

/// `fromGraph`.
pub fn from_graph(mn: &ManifoldNetwork) -> Result<Network, NetworkError> {
    mn.to_network()
}

/// The map of networks induced by a graph fibration `φ: G → G'`.
///
/// The source of the result is the network of `dst` (over the vertices of
/// `G'`), the target the network of `src`. Each component `Φ(a)` keeps the
/// state and fills the input slot of edge `e` from the slot of `φ(e)`; the
/// carrier map copies block `φ(a)` into block `a`.
pub fn from_fibration(phi: &GraphMap, src: &ManifoldNetwork, dst: &ManifoldNetwork) -> Result<NetworkMap, NetworkError> {
    let defects = fibration_defects(phi, &src.graph, &dst.graph)?;
    if !defects.is_empty() {
        return Err(NetworkError::NotAFibration(defects));
    }
    for (a, &b) in phi.vertex_map.iter().enumerate() {
        let (found, expected) = (src.phases[a].dim(), dst.phases[b].dim());
        if found != expected {
            return Err(NetworkError::PhaseMismatch { vertex: a, expected, found });
        }
    }
    let target = src.to_network()?;
    let source = dst.to_network()?;

    let mut components = Vec::with_capacity(phi.vertex_map.len());
    for (a, &b) in phi.vertex_map.iter().enumerate() {
        let from = dst.node_submersion(b)?;
        let to = src.node_submersion(a)?;
        let from_in = dst.graph.in_neighborhood(b)?;
        let offsets = slot_offsets(dst, &from_in, from.state_dim());
        let coord = |k: usize| Expr::var(&from.total_coords()[k]);
        let mut tot: Vec<Expr> = (0..from.state_dim()).map(coord).collect();
        for e in src.graph.in_neighborhood(a)? {
            let k = from_in
                .iter()
                .position(|&f| f == phi.edge_map[e])
                .expect("fibration lifts every edge");
            tot.extend(offsets[k].clone().map(coord));
        }
        components.push(SubmersionMap::from_total(from, to, tot)?);
    }

    let dst_layout = block_ranges(&dst.phases);
    let carrier_coords = source.carrier().total_coords().to_vec();
    let tot: Vec<Expr> = phi
        .vertex_map
        .iter()
        .flat_map(|&b| dst_layout[b].clone())
        .map(|k| Expr::var(&carrier_coords[k]))
        .collect();
    let carrier_map = SubmersionMap::from_total(source.carrier().clone(), target.carrier().clone(), tot)?;
    NetworkMap::new(source, target, phi.vertex_map.clone(), components, carrier_map)
}

fn block_ranges(phases: &[Space]) -> Vec<std::ops::Range<usize>> {
    let mut start = 0;
    phases
        .iter()
        .map(|p| {
            let r = start..start + p.dim();
            start += p.dim();
            r
        })
        .collect()
}

/// Ranges of the input slots (one per incoming edge) in a node's total
/// coordinates.
fn slot_offsets(mn: &ManifoldNetwork, in_edges: &[usize], state_dim: usize) -> Vec<std::ops::Range<usize>> {
    let mut start = state_dim;
    in_edges
        .iter()
        .map(|&e| {
            let d = mn.phases[mn.graph.source(e)].dim();
            let r = start..start + d;
            start += d;
            r
        })
        .collect()
}
