//! Finite directed multigraphs and graph fibrations.
//!
//! Edges carry stable indices; parallel edges and loops are allowed. A
//! [`GraphMap`] lists both its vertex and edge images because parallel edges
//! make the edge part impossible to infer from the vertex part.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type VertexId = usize;
pub type EdgeId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("edge {edge} has endpoint {vertex} but the graph has {count} vertices")]
    EndpointOutOfRange { edge: EdgeId, vertex: VertexId, count: usize },
    #[error("vertex {vertex} out of range ({count} vertices)")]
    InvalidVertex { vertex: VertexId, count: usize },
    #[error("malformed graph map: {0}")]
    MalformedMap(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Graph {
    vertex_count: usize,
    edges: Vec<(VertexId, VertexId)>,
}

impl Graph {
    pub fn new(vertex_count: usize, edges: Vec<(VertexId, VertexId)>) -> Result<Self, GraphError> {
        for (e, &(s, t)) in edges.iter().enumerate() {
            for v in [s, t] {
                if v >= vertex_count {
                    return Err(GraphError::EndpointOutOfRange {
                        edge: e,
                        vertex: v,
                        count: vertex_count,
                    });
                }
            }
        }
        Ok(Graph { vertex_count, edges })
    }

    /// One vertex with a single loop.
    pub fn loop_graph() -> Self {
        Graph {
            vertex_count: 1,
            edges: vec![(0, 0)],
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(VertexId, VertexId)] {
        &self.edges
    }

    pub fn source(&self, e: EdgeId) -> VertexId {
        self.edges[e].0
    }

    pub fn target(&self, e: EdgeId) -> VertexId {
        self.edges[e].1
    }

    /// Edges ending at `a`, in ascending index order.
    pub fn in_neighborhood(&self, a: VertexId) -> Result<Vec<EdgeId>, GraphError> {
        if a >= self.vertex_count {
            return Err(GraphError::InvalidVertex {
                vertex: a,
                count: self.vertex_count,
            });
        }
        Ok(self.in_edges(a).collect())
    }

    fn in_edges(&self, a: VertexId) -> impl Iterator<Item = EdgeId> + '_ {
        self.edges
            .iter()
            .enumerate()
            .filter(move |(_, &(_, t))| t == a)
            .map(|(e, _)| e)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GraphMap {
    pub vertex_map: Vec<VertexId>,
    pub edge_map: Vec<EdgeId>,
}

impl GraphMap {
    pub fn identity(g: &Graph) -> Self {
        GraphMap {
            vertex_map: (0..g.vertex_count).collect(),
            edge_map: (0..g.edges.len()).collect(),
        }
    }

    /// Checks that `self` is a map of graphs `g → h`: sizes match, images are
    /// in range, and every edge keeps its endpoints.
    pub fn validate(&self, g: &Graph, h: &Graph) -> Result<(), GraphError> {
        let bad = |msg: String| Err(GraphError::MalformedMap(msg));
        if self.vertex_map.len() != g.vertex_count {
            return bad(format!(
                "vertex map has {} entries, source has {} vertices",
                self.vertex_map.len(),
                g.vertex_count
            ));
        }
        if self.edge_map.len() != g.edges.len() {
            return bad(format!(
                "edge map has {} entries, source has {} edges",
                self.edge_map.len(),
                g.edges.len()
            ));
        }
        if let Some((a, &b)) = self.vertex_map.iter().enumerate().find(|(_, &b)| b >= h.vertex_count) {
            return bad(format!("vertex {a} maps to {b}, target has {} vertices", h.vertex_count));
        }
        for (e, &f) in self.edge_map.iter().enumerate() {
            if f >= h.edges.len() {
                return bad(format!("edge {e} maps to {f}, target has {} edges", h.edges.len()));
            }
            let (s, t) = g.edges[e];
            let (s2, t2) = h.edges[f];
            if self.vertex_map[s] != s2 || self.vertex_map[t] != t2 {
                return bad(format!(
                    "edge {e} ({s}→{t}) maps to edge {f} ({s2}→{t2}), which does not match the vertex map"
                ));
            }
        }
        Ok(())
    }

    /// `then ∘ self`.
    pub fn then(&self, then: &GraphMap) -> GraphMap {
        GraphMap {
            vertex_map: self.vertex_map.iter().map(|&v| then.vertex_map[v]).collect(),
            edge_map: self.edge_map.iter().map(|&e| then.edge_map[e]).collect(),
        }
    }
}

/// A vertex of the source where the lifting property fails: the target edge
/// `target_edge` ending at the image vertex has `lifts` preimages among the
/// edges ending at `vertex` (a fibration needs exactly one).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FibrationDefect {
    pub vertex: VertexId,
    pub target_edge: EdgeId,
    pub lifts: Vec<EdgeId>,
}

/// Whether `phi: g → h` restricts, at every vertex `a`, to a bijection from
/// the edges ending at `a` onto the edges ending at `phi(a)`.
pub fn is_fibration(phi: &GraphMap, g: &Graph, h: &Graph) -> Result<bool, GraphError> {
    phi.validate(g, h)?;
    Ok((0..g.vertex_count).all(|a| restricts_to_bijection(phi, g, h, a)))
}

fn restricts_to_bijection(phi: &GraphMap, g: &Graph, h: &Graph, a: VertexId) -> bool {
    let mut image: Vec<EdgeId> = g.in_edges(a).map(|e| phi.edge_map[e]).collect();
    image.sort_unstable();
    // in_edges is ascending, so equality with the sorted image means the
    // restriction is injective and onto.
    image.iter().copied().eq(h.in_edges(phi.vertex_map[a]))
}

/// Every failure of the unique-lifting property, vertex by vertex.
pub fn fibration_defects(phi: &GraphMap, g: &Graph, h: &Graph) -> Result<Vec<FibrationDefect>, GraphError> {
    phi.validate(g, h)?;
    let mut defects = Vec::new();
    for a in 0..g.vertex_count {
        for target_edge in h.in_edges(phi.vertex_map[a]) {
            let lifts: Vec<EdgeId> = g.in_edges(a).filter(|&e| phi.edge_map[e] == target_edge).collect();
            if lifts.len() != 1 {
                defects.push(FibrationDefect { vertex: a, target_edge, lifts });
            }
        }
    }
    Ok(defects)
}

/// All fibrations `g → h`, sorted lexicographically by `(vertex_map, edge_map)`.
///
/// Vertex maps are enumerated in lexicographic order; for each one the edge
/// maps are built per vertex as bijections between in-neighbourhoods that
/// also respect edge sources.
pub fn enumerate_fibrations(g: &Graph, h: &Graph) -> Vec<GraphMap> {
    let n = g.vertex_count;
    let mut out = Vec::new();
    if n > 0 && h.vertex_count == 0 {
        return out;
    }
    let g_in: Vec<Vec<EdgeId>> = (0..n).map(|a| g.in_edges(a).collect()).collect();
    let h_in: Vec<Vec<EdgeId>> = (0..h.vertex_count).map(|b| h.in_edges(b).collect()).collect();

    let mut vmap = vec![0; n];
    loop {
        let sizes_ok = (0..n).all(|a| g_in[a].len() == h_in[vmap[a]].len());
        if sizes_ok {
            let mut emap = vec![usize::MAX; g.edges.len()];
            extend_edge_maps(g, h, &vmap, &g_in, &h_in, 0, &mut emap, &mut out);
        }
        // next vertex map in lexicographic order (last position fastest)
        let mut i = n;
        loop {
            if i == 0 {
                out.sort();
                return out;
            }
            i -= 1;
            vmap[i] += 1;
            if vmap[i] < h.vertex_count {
                break;
            }
            vmap[i] = 0;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn extend_edge_maps(
    g: &Graph,
    h: &Graph,
    vmap: &[VertexId],
    g_in: &[Vec<EdgeId>],
    h_in: &[Vec<EdgeId>],
    a: VertexId,
    emap: &mut Vec<EdgeId>,
    out: &mut Vec<GraphMap>,
) {
    if a == g.vertex_count {
        out.push(GraphMap {
            vertex_map: vmap.to_vec(),
            edge_map: emap.clone(),
        });
        return;
    }
    let sources = &g_in[a];
    let targets = &h_in[vmap[a]];
    let mut used = vec![false; targets.len()];
    assign(g, h, vmap, g_in, h_in, a, 0, sources, targets, &mut used, emap, out);
}

#[allow(clippy::too_many_arguments)]
fn assign(
    g: &Graph,
    h: &Graph,
    vmap: &[VertexId],
    g_in: &[Vec<EdgeId>],
    h_in: &[Vec<EdgeId>],
    a: VertexId,
    k: usize,
    sources: &[EdgeId],
    targets: &[EdgeId],
    used: &mut [bool],
    emap: &mut Vec<EdgeId>,
    out: &mut Vec<GraphMap>,
) {
    if k == sources.len() {
        extend_edge_maps(g, h, vmap, g_in, h_in, a + 1, emap, out);
        return;
    }
    let e = sources[k];
    for (j, &f) in targets.iter().enumerate() {
        if used[j] || h.source(f) != vmap[g.source(e)] {
            continue;
        }
        used[j] = true;
        emap[e] = f;
        assign(g, h, vmap, g_in, h_in, a, k + 1, sources, targets, used, emap, out);
        used[j] = false;
    }
}
