//! Worked networks built in code, with coordinates named as in the
//! original displays.

use std::collections::HashMap;

use opennet::exprlang::{parse, Expr};
use opennet::graph::{enumerate_fibrations, Graph};
use opennet::network::{from_fibration, ManifoldNetwork, Network, NetworkMap};
use opennet::opensys::OpenSystem;
use opennet::spaces::{parse_all, Space, Submersion, SubmersionMap};

pub fn line(coord: &str) -> Space {
    Space::new("R", [coord]).expect("one coordinate")
}

pub fn sub(states: &[&str], inputs: &[&str]) -> Submersion {
    Submersion::new(states.iter().map(|c| line(c)).collect(), inputs.iter().map(|c| line(c)).collect())
        .expect("distinct coordinates")
}

pub fn system(on: &Submersion, field: &[&str]) -> OpenSystem {
    OpenSystem::parse(on.clone(), field).expect("field parses over the submersion")
}

pub fn map(src: &Submersion, dst: &Submersion, tot: &[&str]) -> SubmersionMap {
    let tot = parse_all(tot, src.total_coords()).expect("map parses");
    SubmersionMap::from_total(src.clone(), dst.clone(), tot).expect("valid map")
}

/// Parses `g` over `params` and substitutes the given expressions.
pub fn instantiate(g: &str, params: &[&str], args: &[Expr]) -> Expr {
    let e = parse(g, params).expect("g parses");
    let table: HashMap<&str, Expr> = params.iter().copied().zip(args.iter().cloned()).collect();
    e.substitute(&table)
}

fn v(name: &str) -> Expr {
    Expr::var(name)
}

/// Three nodes `M × U → M` (coordinates `m`, `u`) on the carrier `M³`
/// (`m1, m2, m3`), wired by `((m1, φ(m2)), (m2, φ(m1)), (m3, φ(m2)))`.
pub fn three_node_network(phi: &str) -> Network {
    let node = sub(&["m"], &["u"]);
    let carrier = sub(&["m1", "m2", "m3"], &[]);
    let phi_of = |m: &str| instantiate(phi, &["m"], &[v(m)]);
    Network::from_inputs(vec![node.clone(), node.clone(), node], carrier, vec![phi_of("m2"), phi_of("m1"), phi_of("m2")])
        .expect("well-formed network")
}

/// The one-node network `M → M×U`, `m ↦ (m, φ(m))`, mapped diagonally into
/// [`three_node_network`] with identity components.
pub fn diagonal_map(phi: &str) -> NetworkMap {
    let node = sub(&["m"], &["u"]);
    let carrier = sub(&["m"], &[]);
    let source = Network::from_inputs(vec![node.clone()], carrier.clone(), vec![instantiate(phi, &["m"], &[v("m")])])
        .expect("well-formed network");
    let target = three_node_network(phi);
    let f = map(&carrier, target.carrier(), &["m", "m", "m"]);
    let id = SubmersionMap::identity(&node);
    NetworkMap::new(source, target, vec![0, 0, 0], vec![id.clone(), id.clone(), id], f).expect("2-cell holds")
}

/// The parabola map: two nodes `ℝ×ℝ → ℝ` over one, components
/// `(x, u) ↦ (x², u)` and `(x, u) ↦ (x, u²)`, `ν(x) = (x, x)`,
/// `ψ(x1, x2) = ((x1, x2), (x2, x1))`, carrier map `x ↦ (x², x)`.
pub fn parabola_map() -> NetworkMap {
    let node = sub(&["x"], &["u"]);
    let source = Network::from_inputs(vec![node.clone()], sub(&["x"], &[]), vec![v("x")]).expect("source network");
    let target = Network::from_inputs(vec![node.clone(), node.clone()], sub(&["x1", "x2"], &[]), vec![v("x2"), v("x1")])
        .expect("target network");
    let phi1 = map(&node, &node, &["x^2", "u"]);
    let phi2 = map(&node, &node, &["x", "u^2"]);
    let f = map(source.carrier(), target.carrier(), &["x^2", "x"]);
    NetworkMap::new(source, target, vec![0, 0], vec![phi1, phi2], f).expect("2-cell holds")
}

/// `(G, F1, F2)` built from `g(a, b)`:
/// `G(x,u) = ½ x g(x², u²)`, `F1(v,u) = v g(v, u²)`, `F2(x,w) = ½ x g(x², w)`.
pub fn parabola_family(g: &str) -> (OpenSystem, OpenSystem, OpenSystem) {
    let node = sub(&["x"], &["u"]);
    let (x, u) = (v("x"), v("u"));
    let sq = |e: &Expr| e.clone() * e.clone();
    let big_g = 0.5 * x.clone() * instantiate(g, &["a", "b"], &[sq(&x), sq(&u)]);
    let f1 = x.clone() * instantiate(g, &["a", "b"], &[x.clone(), sq(&u)]);
    let f2 = 0.5 * x.clone() * instantiate(g, &["a", "b"], &[sq(&x), u]);
    let mk = |e: Expr| OpenSystem::new(node.clone(), vec![e]).expect("field over node coordinates");
    (mk(big_g), mk(f1), mk(f2))
}

/// The open variant: nodes `q: ℝ³ → ℝ` (`x, u, v`), components
/// `(x²,u,v)` and `(x,u²,v)`, `ν(x,v) = (x,x,v)`,
/// `ψ((x1,v1),(x2,v2)) = ((x1,x2,v1),(x2,x1,v2))`,
/// carrier map `(x,v) ↦ ((x²,v),(x,v))`.
pub fn open_parabola_map() -> NetworkMap {
    let node = sub(&["x"], &["u", "v"]);
    let c = sub(&["x"], &["v"]);
    let b = sub(&["x1", "x2"], &["v1", "v2"]);
    let source = Network::from_inputs(vec![node.clone()], c.clone(), vec![Expr::var("x"), Expr::var("v")]).expect("source");
    let target = Network::from_inputs(
        vec![node.clone(), node.clone()],
        b.clone(),
        vec![Expr::var("x2"), Expr::var("v1"), Expr::var("x1"), Expr::var("v2")],
    )
    .expect("target");
    let phi1 = map(&node, &node, &["x^2", "u", "v"]);
    let phi2 = map(&node, &node, &["x", "u^2", "v"]);
    let f = map(&c, &b, &["x^2", "x", "v", "v"]);
    NetworkMap::new(source, target, vec![0, 0], vec![phi1, phi2], f).expect("2-cell holds")
}

/// `(G, F1, F2)` for [`open_parabola_map`] from `g(a, b, c)`:
/// `G = ½ x g(x², u², v)`, `F1 = x g(x, u², v)`, `F2 = ½ x g(x², u, v)`.
pub fn open_parabola_family(g: &str) -> (OpenSystem, OpenSystem, OpenSystem) {
    let node = sub(&["x"], &["u", "v"]);
    let (x, u, w) = (v("x"), v("u"), v("v"));
    let sq = |e: &Expr| e.clone() * e.clone();
    let p = ["a", "b", "c"];
    let big_g = 0.5 * x.clone() * instantiate(g, &p, &[sq(&x), sq(&u), w.clone()]);
    let f1 = x.clone() * instantiate(g, &p, &[x.clone(), sq(&u), w.clone()]);
    let f2 = 0.5 * x.clone() * instantiate(g, &p, &[sq(&x), u, w]);
    let mk = |e: Expr| OpenSystem::new(node.clone(), vec![e]).expect("field over node coordinates");
    (mk(big_g), mk(f1), mk(f2))
}

/// `1⇄2→3` (vertices 0, 1, 2) and the one-vertex loop, both with phase `ℝ`.
pub fn three_cell_and_loop() -> (ManifoldNetwork, ManifoldNetwork) {
    let m = Space::new("M", ["x"]).expect("one coordinate");
    let g = Graph::new(3, vec![(0, 1), (1, 0), (1, 2)]).expect("valid graph");
    (ManifoldNetwork::uniform(g, m.clone()), ManifoldNetwork::uniform(Graph::loop_graph(), m))
}

/// The collapse of `1⇄2→3` onto the loop as a map of networks.
pub fn collapse_map() -> NetworkMap {
    let (big, small) = three_cell_and_loop();
    let phi = enumerate_fibrations(big.graph(), small.graph()).remove(0);
    from_fibration(&phi, &big, &small).expect("collapse is a fibration")
}
