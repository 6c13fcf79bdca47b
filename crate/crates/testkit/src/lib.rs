//! Generators and independent oracles shared by the test suites.
//!
//! Nothing here calls the code under test to compute an expected value:
//! derivatives are checked against central differences, fibrations against
//! lift counting, and relation identities against explicit matrices.

pub mod worked;

use std::collections::HashMap;

use nalgebra::DMatrix;
use opennet::exprlang::{BinaryOp, Expr, UnaryOp};
use opennet::graph::{Graph, GraphMap};
use opennet::linrel::LinRelation;
use opennet::network::Network;
use opennet::opensys::OpenSystem;
use opennet::spaces::{product_submersion, Space, Submersion, SubmersionMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- expressions

/// A random expression of depth at most `depth` over `vars`.
///
/// Division, `sqrt` and `exp` only appear in forms that stay finite and
/// smooth on `[-2, 2]^d`: `a / (1 + b^2)`, `sqrt(1 + a^2)` and
/// `exp(sin a)`-style bounded exponents.
pub fn random_expr<R: Rng>(rng: &mut R, vars: &[&str], depth: usize) -> Expr {
    if depth <= 1 || rng.random_bool(0.2) {
        return leaf(rng, vars);
    }
    let d = depth - 1;
    match rng.random_range(0..10) {
        0 => random_expr(rng, vars, d) + random_expr(rng, vars, d),
        1 => random_expr(rng, vars, d) - random_expr(rng, vars, d),
        2 | 3 => random_expr(rng, vars, d) * random_expr(rng, vars, d),
        4 => {
            let b = random_expr(rng, vars, d);
            random_expr(rng, vars, d) / (Expr::constant(1.0) + b.clone() * b)
        }
        5 => Expr::unary(UnaryOp::Sin, random_expr(rng, vars, d)),
        6 => Expr::unary(UnaryOp::Cos, random_expr(rng, vars, d)),
        7 => Expr::unary(UnaryOp::Tanh, random_expr(rng, vars, d)),
        8 => {
            let inner = Expr::unary(UnaryOp::Sin, random_expr(rng, vars, (d - 1).max(1)));
            Expr::unary(UnaryOp::Exp, inner)
        }
        _ => {
            if rng.random_bool(0.5) {
                let a = random_expr(rng, vars, d);
                Expr::unary(UnaryOp::Sqrt, Expr::constant(1.0) + a.clone() * a)
            } else {
                let n = rng.random_range(2..=3) as f64;
                Expr::binary(BinaryOp::Pow, leaf(rng, vars), Expr::constant(n))
            }
        }
    }
}

fn leaf<R: Rng>(rng: &mut R, vars: &[&str]) -> Expr {
    if vars.is_empty() || rng.random_bool(0.25) {
        Expr::constant((rng.random_range(-20..=20) as f64) / 8.0)
    } else {
        Expr::var(vars[rng.random_range(0..vars.len())])
    }
}

/// A random polynomial with at most `terms` monomials of degree at most
/// `degree`, coefficients in `[-1, 1]`.
pub fn random_polynomial<R: Rng>(rng: &mut R, vars: &[String], terms: usize, degree: usize) -> Expr {
    let mut acc = Expr::constant(rng.random_range(-1.0..1.0));
    for _ in 0..rng.random_range(1..=terms) {
        let mut mono = Expr::constant(rng.random_range(-1.0..1.0));
        for _ in 0..rng.random_range(0..=degree) {
            if vars.is_empty() {
                break;
            }
            mono = mono * Expr::var(&vars[rng.random_range(0..vars.len())]);
        }
        acc = acc + mono;
    }
    acc
}

/// Central difference `(e(x + h) − e(x − h)) / 2h` in the variable `var`.
pub fn central_fd(e: &Expr, var: &str, env: &HashMap<String, f64>, h: f64) -> Option<f64> {
    let mut plus = env.clone();
    let mut minus = env.clone();
    *plus.get_mut(var)? += h;
    *minus.get_mut(var)? -= h;
    let (a, b) = (e.eval(&plus).ok()?, e.eval(&minus).ok()?);
    Some((a - b) / (2.0 * h))
}

// --------------------------------------------------------------------- graphs

/// Lift counting: every edge ending at `φ(a)` has exactly one preimage among
/// the edges ending at `a`, and every edge ending at `a` lands at `φ(a)`.
pub fn lift_count_oracle(phi: &GraphMap, g: &Graph, h: &Graph) -> bool {
    for a in 0..g.vertex_count() {
        let b = phi.vertex_map[a];
        for (f, &(_, t)) in h.edges().iter().enumerate() {
            if t != b {
                continue;
            }
            let lifts = g
                .edges()
                .iter()
                .enumerate()
                .filter(|&(e, &(_, ta))| ta == a && phi.edge_map[e] == f)
                .count();
            if lifts != 1 {
                return false;
            }
        }
        let stray = g
            .edges()
            .iter()
            .enumerate()
            .any(|(e, &(_, ta))| ta == a && h.edges()[phi.edge_map[e]].1 != b);
        if stray {
            return false;
        }
    }
    true
}

/// Every graph with at most `max_vertices` vertices and `max_edges` edges,
/// one representative per edge multiset (edges listed in sorted order).
pub fn all_graphs(max_vertices: usize, max_edges: usize) -> Vec<Graph> {
    let mut out = Vec::new();
    for n in 0..=max_vertices {
        let slots: Vec<(usize, usize)> = (0..n).flat_map(|s| (0..n).map(move |t| (s, t))).collect();
        let mut edges = Vec::new();
        multisets(&slots, 0, max_edges, &mut edges, &mut |es| {
            out.push(Graph::new(n, es.to_vec()).expect("endpoints in range"));
        });
    }
    out
}

fn multisets<T: Copy>(items: &[T], from: usize, budget: usize, cur: &mut Vec<T>, f: &mut dyn FnMut(&[T])) {
    f(cur);
    if budget == 0 {
        return;
    }
    for i in from..items.len() {
        cur.push(items[i]);
        multisets(items, i, budget - 1, cur, f);
        cur.pop();
    }
}

/// Calls `f` on every incidence-preserving map `g → h`.
pub fn for_each_graph_map(g: &Graph, h: &Graph, f: &mut dyn FnMut(&GraphMap)) {
    let n = g.vertex_count();
    if n > 0 && h.vertex_count() == 0 {
        return;
    }
    let mut map = GraphMap {
        vertex_map: vec![0; n],
        edge_map: vec![0; g.edge_count()],
    };
    vertex_maps(g, h, 0, &mut map, f);
}

fn vertex_maps(g: &Graph, h: &Graph, v: usize, map: &mut GraphMap, f: &mut dyn FnMut(&GraphMap)) {
    if v == g.vertex_count() {
        edge_maps(g, h, 0, map, f);
        return;
    }
    for b in 0..h.vertex_count() {
        map.vertex_map[v] = b;
        vertex_maps(g, h, v + 1, map, f);
    }
}

fn edge_maps(g: &Graph, h: &Graph, e: usize, map: &mut GraphMap, f: &mut dyn FnMut(&GraphMap)) {
    if e == g.edge_count() {
        f(map);
        return;
    }
    let (s, t) = g.edges()[e];
    let want = (map.vertex_map[s], map.vertex_map[t]);
    for (k, &edge) in h.edges().iter().enumerate() {
        if edge == want {
            map.edge_map[e] = k;
            edge_maps(g, h, e + 1, map, f);
        }
    }
}

/// A random graph with `1..=max_vertices` vertices and up to `max_edges`
/// edges.
pub fn random_graph<R: Rng>(rng: &mut R, max_vertices: usize, max_edges: usize) -> Graph {
    let n = rng.random_range(1..=max_vertices);
    let m = rng.random_range(0..=max_edges);
    let edges = (0..m).map(|_| (rng.random_range(0..n), rng.random_range(0..n))).collect();
    Graph::new(n, edges).expect("endpoints in range")
}

// ------------------------------------------------------------------ relations

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// A random relation of random rank between `ℝ^dim_v` and `ℝ^dim_w`.
/// Low ranks are favoured so that compositions are not trivially full.
pub fn random_relation<R: Rng>(rng: &mut R, dim_w: usize, dim_v: usize) -> LinRelation {
    let n = dim_w + dim_v;
    let rank = rng.random_range(0..=n);
    let span = random_matrix(rng, n, rank);
    LinRelation::from_span(dim_w, dim_v, &span).expect("rows match")
}

/// The block map whose row block `a` applies `maps[a]` to column block
/// `phi[a]`, assembled entry by entry.
pub fn block_map_oracle(phi: &[usize], maps: &[DMatrix<f64>], mu_dims: &[usize]) -> DMatrix<f64> {
    let rows: usize = maps.iter().map(|m| m.nrows()).sum();
    let cols: usize = mu_dims.iter().sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r0 = 0;
    for (a, m) in maps.iter().enumerate() {
        let c0: usize = mu_dims[..phi[a]].iter().sum();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out[(r0 + i, c0 + j)] = m[(i, j)];
            }
        }
        r0 += m.nrows();
    }
    out
}

/// Whether every column of `span` (stacked `W` over `V`) satisfies
/// `w = T v`, i.e. lies in the graph of `T`.
pub fn spans_inside_graph(span: &DMatrix<f64>, t: &DMatrix<f64>, tol: f64) -> bool {
    let w = t.nrows();
    (0..span.ncols()).all(|c| {
        let col = span.column(c);
        let v = col.rows(w, t.ncols());
        (col.rows(0, w) - t * v).abs().max() <= tol
    })
}

// ------------------------------------------------------------------- networks

/// A random small network map with identity components and node systems
/// `F_x = G_{φ(x)}`, so the theorem hypothesis holds by construction.
pub struct IdentityMapCase {
    pub source: Network,
    pub target: Network,
    pub phi: Vec<usize>,
    pub components: Vec<SubmersionMap>,
    pub carrier_map: SubmersionMap,
    pub g: Vec<OpenSystem>,
    pub f: Vec<OpenSystem>,
}

fn line(c: String) -> Space {
    Space::new("R", [c]).expect("one coordinate")
}

/// Builds an [`IdentityMapCase`] with at most 3 nodes per network and
/// state/input dimensions at most 2.
pub fn random_identity_map_case<R: Rng>(rng: &mut R) -> IdentityMapCase {
    let ny = rng.random_range(1..=3);
    let nx = rng.random_range(ny..=3);
    // surjective index map: first cover Y, then fill at random, then shuffle
    let mut phi: Vec<usize> = (0..ny).chain((ny..nx).map(|_| rng.random_range(0..ny))).collect();
    for i in (1..phi.len()).rev() {
        let j = rng.random_range(0..=i);
        phi.swap(i, j);
    }

    let mu: Vec<Submersion> = (0..ny)
        .map(|_| {
            let sd = rng.random_range(1..=2);
            let id = rng.random_range(0..=2);
            Submersion::new(
                (0..sd).map(|i| line(format!("s{i}"))).collect(),
                (0..id).map(|i| line(format!("u{i}"))).collect(),
            )
            .expect("distinct names")
        })
        .collect();
    let tau: Vec<Submersion> = phi.iter().map(|&y| mu[y].clone()).collect();

    let ext = rng.random_range(0..=1);
    let ext_spaces: Vec<Space> = (0..ext).map(|i| line(format!("e{i}"))).collect();
    let states_of = |nodes: &[Submersion]| -> Vec<Space> {
        let ids: Vec<Submersion> = nodes
            .iter()
            .map(|s| Submersion::identity(s.state_factors().to_vec()).expect("distinct names"))
            .collect();
        product_submersion(&ids).expect("prefixed names").state_factors().to_vec()
    };
    let c = Submersion::new(states_of(&mu), ext_spaces.clone()).expect("distinct names");
    let b = Submersion::new(states_of(&tau), ext_spaces).expect("distinct names");

    // wiring of the source network: random polynomials in the carrier
    let c_vars = c.total_coords().to_vec();
    let mut nu_inputs: Vec<Vec<Expr>> = Vec::new();
    for m in &mu {
        nu_inputs.push((0..m.input_dim()).map(|_| random_polynomial(rng, &c_vars, 3, 2)).collect());
    }

    // each y is represented in the target carrier by one of its preimages
    let rep: Vec<usize> = (0..ny)
        .map(|y| {
            let pre: Vec<usize> = (0..nx).filter(|&x| phi[x] == y).collect();
            pre[rng.random_range(0..pre.len())]
        })
        .collect();
    let c_state_offsets = offsets(mu.iter().map(Submersion::state_dim));
    let b_state_offsets = offsets(tau.iter().map(Submersion::state_dim));
    let mut rename: Vec<Expr> = Vec::with_capacity(c.total_dim());
    for y in 0..ny {
        for i in 0..mu[y].state_dim() {
            rename.push(Expr::var(&b.total_coords()[b_state_offsets[rep[y]] + i]));
        }
    }
    for k in c.state_dim()..c.total_dim() {
        rename.push(Expr::var(&b.total_coords()[b.state_dim() + k - c.state_dim()]));
    }

    let nu_flat: Vec<Expr> = nu_inputs.iter().flatten().cloned().collect();
    let psi_flat: Vec<Expr> = phi
        .iter()
        .flat_map(|&y| nu_inputs[y].iter().map(|e| e.substitute_positional(&c_vars, &rename)))
        .collect();
    let source = Network::from_inputs(mu.clone(), c.clone(), nu_flat).expect("well-formed source network");
    let target = Network::from_inputs(tau.clone(), b.clone(), psi_flat).expect("well-formed target network");

    let mut f_tot: Vec<Expr> = Vec::with_capacity(b.total_dim());
    for &y in &phi {
        for i in 0..mu[y].state_dim() {
            f_tot.push(Expr::var(&c_vars[c_state_offsets[y] + i]));
        }
    }
    f_tot.extend(c_vars[c.state_dim()..].iter().map(|v| Expr::var(v)));
    let carrier_map = SubmersionMap::from_total(c, b, f_tot).expect("carrier map square holds");
    let components = phi.iter().map(|&y| SubmersionMap::identity(&mu[y])).collect();

    let g: Vec<OpenSystem> = mu
        .iter()
        .map(|m| {
            let vars = m.total_coords().to_vec();
            let field = (0..m.state_dim()).map(|_| random_polynomial(rng, &vars, 3, 2)).collect();
            OpenSystem::new(m.clone(), field).expect("fields over own coordinates")
        })
        .collect();
    let f = phi.iter().map(|&y| g[y].clone()).collect();

    IdentityMapCase {
        source,
        target,
        phi,
        components,
        carrier_map,
        g,
        f,
    }
}

fn offsets(dims: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut at = 0;
    dims.map(|d| {
        let o = at;
        at += d;
        o
    })
    .collect()
}
