//! Euclidean coordinate spaces, trivial product submersions and the maps
//! between them.
//!
//! A [`Submersion`] is a product `M_1 × … × M_k × U_1 × … × U_l` projecting
//! onto the state factors `M_i`. Its total coordinates are always laid out
//! state-first, so the projection keeps the leading `state_dim` coordinates.
//! Maps are vectors of [`Expr`]s in the source coordinates; shapes are
//! matched positionally, and coordinate names only matter inside the object
//! that declares them.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Deref;

use serde::Serialize;
use thiserror::Error;

use crate::exprlang::{self, EvalError, Expr, Point};
use crate::sampling::{Probe, Sampler};

/// Sample count used when a map checks its own commuting square.
pub const SQUARE_SAMPLES: usize = 100;
/// Absolute residual allowed in the commuting square.
pub const SQUARE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpaceError {
    #[error("duplicate coordinate `{0}`")]
    DuplicateCoordinate(String),
    #[error("{context}: variable `{name}` is not a coordinate of the source")]
    UnknownVariable { context: String, name: String },
    #[error("{context}: expected {expected}, found {found}")]
    Shape {
        context: String,
        expected: usize,
        found: usize,
    },
    #[error("commuting square fails in state component {component}: residual {residual:e} at {point:?}")]
    SquareViolation {
        component: usize,
        residual: f64,
        point: Vec<f64>,
    },
    #[error("state components of the total map depend on input coordinate `{0}`")]
    StateDependsOnInput(String),
    #[error("not an interconnection: {0}")]
    NotInterconnection(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Space {
    name: String,
    coords: Vec<String>,
}

impl Space {
    pub fn new<S: Into<String>>(name: impl Into<String>, coords: impl IntoIterator<Item = S>) -> Result<Self, SpaceError> {
        let coords: Vec<String> = coords.into_iter().map(Into::into).collect();
        check_unique(&coords)?;
        Ok(Space { name: name.into(), coords })
    }

    /// `ℝ^dim` with coordinates `x0, x1, …` (or just `x` when `dim == 1`).
    pub fn euclidean(name: impl Into<String>, dim: usize) -> Self {
        let coords = if dim == 1 {
            vec!["x".to_string()]
        } else {
            (0..dim).map(|i| format!("x{i}")).collect()
        };
        Space { name: name.into(), coords }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    /// Same space with every coordinate name prefixed.
    pub fn prefixed(&self, prefix: &str) -> Space {
        Space {
            name: self.name.clone(),
            coords: self.coords.iter().map(|c| format!("{prefix}{c}")).collect(),
        }
    }
}

fn check_unique(names: &[String]) -> Result<(), SpaceError> {
    let mut seen = BTreeSet::new();
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(SpaceError::DuplicateCoordinate(n.clone()));
        }
    }
    Ok(())
}

/// A trivial product submersion `states × inputs → states`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Submersion {
    state: Vec<Space>,
    input: Vec<Space>,
    #[serde(skip)]
    total_coords: Vec<String>,
    #[serde(skip)]
    state_dim: usize,
}

impl Submersion {
    pub fn new(state: Vec<Space>, input: Vec<Space>) -> Result<Self, SpaceError> {
        let total_coords: Vec<String> = state
            .iter()
            .chain(&input)
            .flat_map(|s| s.coords.iter().cloned())
            .collect();
        check_unique(&total_coords)?;
        let state_dim = state.iter().map(Space::dim).sum();
        Ok(Submersion {
            state,
            input,
            total_coords,
            state_dim,
        })
    }

    /// The identity submersion `M → M`.
    pub fn identity(state: Vec<Space>) -> Result<Self, SpaceError> {
        Self::new(state, Vec::new())
    }

    pub fn state_factors(&self) -> &[Space] {
        &self.state
    }

    pub fn input_factors(&self) -> &[Space] {
        &self.input
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.total_coords.len() - self.state_dim
    }

    pub fn total_dim(&self) -> usize {
        self.total_coords.len()
    }

    pub fn total_coords(&self) -> &[String] {
        &self.total_coords
    }

    pub fn state_coords(&self) -> &[String] {
        &self.total_coords[..self.state_dim]
    }

    pub fn input_coords(&self) -> &[String] {
        &self.total_coords[self.state_dim..]
    }

    pub fn is_closed(&self) -> bool {
        self.input_dim() == 0
    }

    /// The projection onto the state coordinates.
    pub fn project<'a>(&self, total: &'a [f64]) -> &'a [f64] {
        &total[..self.state_dim]
    }

    /// Whether points of `self` and `other` can be identified positionally.
    pub fn same_shape(&self, other: &Submersion) -> bool {
        self.state_dim == other.state_dim && self.input_dim() == other.input_dim()
    }

    pub fn prefixed(&self, prefix: &str) -> Submersion {
        let state = self.state.iter().map(|s| s.prefixed(prefix)).collect();
        let input = self.input.iter().map(|s| s.prefixed(prefix)).collect();
        Submersion::new(state, input).expect("prefixing keeps names unique")
    }
}

impl fmt::Display for Submersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = |spaces: &[Space]| {
            if spaces.is_empty() {
                "pt".to_string()
            } else {
                spaces.iter().map(|s| s.name.as_str()).collect::<Vec<_>>().join("×")
            }
        };
        if self.input.is_empty() {
            write!(f, "id:{0}→{0}", names(&self.state))
        } else {
            let st = names(&self.state);
            write!(f, "{st}×{}→{st}", names(&self.input))
        }
    }
}

/// Coordinate prefix for node `i` of a product.
pub fn node_prefix(i: usize) -> String {
    format!("n{i}.")
}

/// Product of a list of submersions.
///
/// Node `i` contributes its state factors to the state block and its input
/// factors to the input block, in list order, with every coordinate renamed
/// by [`node_prefix`]. The empty list gives the one-point submersion.
pub fn product_submersion(list: &[Submersion]) -> Result<Submersion, SpaceError> {
    let mut state = Vec::new();
    let mut input = Vec::new();
    for (i, s) in list.iter().enumerate() {
        let p = node_prefix(i);
        state.extend(s.state.iter().map(|f| f.prefixed(&p)));
        input.extend(s.input.iter().map(|f| f.prefixed(&p)));
    }
    Submersion::new(state, input)
}

/// Offsets of each node's blocks inside a product's total coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductLayout {
    /// Per node: range of its state coordinates in the product total vector.
    pub state: Vec<std::ops::Range<usize>>,
    /// Per node: range of its input coordinates in the product total vector.
    pub input: Vec<std::ops::Range<usize>>,
}

impl ProductLayout {
    pub fn of(list: &[Submersion]) -> Self {
        let state_total: usize = list.iter().map(Submersion::state_dim).sum();
        let (mut s, mut u) = (0, state_total);
        let mut layout = ProductLayout { state: Vec::new(), input: Vec::new() };
        for sub in list {
            layout.state.push(s..s + sub.state_dim());
            layout.input.push(u..u + sub.input_dim());
            s += sub.state_dim();
            u += sub.input_dim();
        }
        layout
    }

    /// Indices in the product total vector of node `i`'s total coordinates,
    /// in the node's own order.
    pub fn node_total(&self, i: usize) -> Vec<usize> {
        self.state[i].clone().chain(self.input[i].clone()).collect()
    }
}

fn check_exprs(context: &str, exprs: &[Expr], expected_len: usize, vars: &[String]) -> Result<(), SpaceError> {
    if exprs.len() != expected_len {
        return Err(SpaceError::Shape {
            context: context.to_string(),
            expected: expected_len,
            found: exprs.len(),
        });
    }
    for e in exprs {
        if let Some(name) = e.free_vars().into_iter().find(|v| !vars.contains(v)) {
            return Err(SpaceError::UnknownVariable {
                context: context.to_string(),
                name,
            });
        }
    }
    Ok(())
}

/// Worst residual found by a numerical square check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SquareReport {
    pub max_residual: f64,
    pub component: usize,
    pub worst_point: Vec<f64>,
    pub samples: usize,
    pub skipped: usize,
}

/// A map of submersions `(f_tot, f_st)` with `p' ∘ f_tot = f_st ∘ p`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubmersionMap {
    source: Submersion,
    target: Submersion,
    tot: Vec<Expr>,
    st: Vec<Expr>,
}

impl SubmersionMap {
    /// Validates shapes and variables, then checks the commuting square at
    /// [`SQUARE_SAMPLES`] points to [`SQUARE_TOL`].
    pub fn new(source: Submersion, target: Submersion, tot: Vec<Expr>, st: Vec<Expr>) -> Result<Self, SpaceError> {
        check_exprs("total map", &tot, target.total_dim(), source.total_coords())?;
        check_exprs("state map", &st, target.state_dim(), source.state_coords())?;
        let map = SubmersionMap { source, target, tot, st };
        let report = map.check_square(SQUARE_SAMPLES, 0);
        if report.max_residual > SQUARE_TOL {
            return Err(SpaceError::SquareViolation {
                component: report.component,
                residual: report.max_residual,
                point: report.worst_point,
            });
        }
        Ok(map)
    }

    /// Builds a map from its total part alone. The leading (state) components
    /// of `tot` must not involve input coordinates; they become `f_st`.
    pub fn from_total(source: Submersion, target: Submersion, tot: Vec<Expr>) -> Result<Self, SpaceError> {
        check_exprs("total map", &tot, target.total_dim(), source.total_coords())?;
        let st: Vec<Expr> = tot[..target.state_dim()].to_vec();
        for e in &st {
            if let Some(u) = source.input_coords().iter().find(|u| e.depends_on(u)) {
                return Err(SpaceError::StateDependsOnInput(u.clone()));
            }
        }
        Self::new(source, target, tot, st)
    }

    pub fn identity(sub: &Submersion) -> Self {
        let vars = |names: &[String]| names.iter().map(|n| Expr::var(n)).collect::<Vec<_>>();
        SubmersionMap {
            source: sub.clone(),
            target: sub.clone(),
            tot: vars(sub.total_coords()),
            st: vars(sub.state_coords()),
        }
    }

    pub fn source(&self) -> &Submersion {
        &self.source
    }

    pub fn target(&self) -> &Submersion {
        &self.target
    }

    pub fn tot(&self) -> &[Expr] {
        &self.tot
    }

    pub fn st(&self) -> &[Expr] {
        &self.st
    }

    pub fn eval_tot(&self, q: &[f64]) -> Result<Vec<f64>, EvalError> {
        exprlang::eval_all(&self.tot, &Point::new(self.source.total_coords(), q))
    }

    pub fn eval_st(&self, m: &[f64]) -> Result<Vec<f64>, EvalError> {
        exprlang::eval_all(&self.st, &Point::new(self.source.state_coords(), m))
    }

    /// Largest `|f_tot(q)_i - f_st(p(q))_i|` over the state components, at
    /// seeded points in `[-2, 2]^d`.
    pub fn check_square(&self, samples: usize, seed: u64) -> SquareReport {
        let mut sampler = Sampler::new(seed);
        let sd = self.target.state_dim();
        let mut report = SquareReport {
            max_residual: 0.0,
            component: 0,
            worst_point: Vec::new(),
            samples: 0,
            skipped: 0,
        };
        if sd == 0 {
            return report;
        }
        for _ in 0..samples {
            let probe = sampler.probe(self.source.total_dim(), |q| {
                let lhs = self.eval_tot(q)?;
                let rhs = self.eval_st(self.source.project(q))?;
                Ok::<_, EvalError>((0..sd).map(|i| (lhs[i] - rhs[i]).abs()).collect::<Vec<_>>())
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

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn after(&self, first: &SubmersionMap) -> Result<SubmersionMap, SpaceError> {
        if !first.target.same_shape(&self.source) {
            return Err(SpaceError::Shape {
                context: "composition (total dimension of middle submersion)".into(),
                expected: self.source.total_dim(),
                found: first.target.total_dim(),
            });
        }
        let tot = self
            .tot
            .iter()
            .map(|e| e.substitute_positional(self.source.total_coords(), &first.tot))
            .collect();
        let st = self
            .st
            .iter()
            .map(|e| e.substitute_positional(self.source.state_coords(), &first.st))
            .collect();
        SubmersionMap::new(first.source.clone(), self.target.clone(), tot, st)
    }

    /// If every total component is a distinct source coordinate, the index
    /// of the source coordinate feeding each target coordinate.
    pub fn as_coordinate_permutation(&self) -> Option<Vec<usize>> {
        if self.source.total_dim() != self.target.total_dim() {
            return None;
        }
        let mut seen = vec![false; self.source.total_dim()];
        let mut perm = Vec::with_capacity(self.tot.len());
        for e in &self.tot {
            let name = e.as_var()?;
            let j = self.source.total_coords().iter().position(|c| c == name)?;
            if std::mem::replace(&mut seen[j], true) {
                return None;
            }
            perm.push(j);
        }
        Some(perm)
    }
}

/// Composition `g ∘ f` of maps of submersions.
pub fn compose_maps(g: &SubmersionMap, f: &SubmersionMap) -> Result<SubmersionMap, SpaceError> {
    g.after(f)
}

/// A map of submersions whose state part is the identity.
///
/// Both the state map and the state components of the total map must be
/// literal references to the source state coordinates, in order.
#[derive(Debug, Clone, PartialEq)]
pub struct Interconnection(SubmersionMap);

impl Interconnection {
    /// Builds an interconnection from the expressions feeding the target's
    /// input coordinates; the state part is the identity.
    pub fn from_inputs(source: Submersion, target: Submersion, inputs: Vec<Expr>) -> Result<Self, SpaceError> {
        if source.state_dim() != target.state_dim() {
            return Err(SpaceError::NotInterconnection(format!(
                "state dimensions differ ({} vs {})",
                source.state_dim(),
                target.state_dim()
            )));
        }
        check_exprs("interconnection inputs", &inputs, target.input_dim(), source.total_coords())?;
        let ids: Vec<Expr> = source.state_coords().iter().map(|c| Expr::var(c)).collect();
        let tot = ids.iter().cloned().chain(inputs).collect();
        let map = SubmersionMap::new(source, target, tot, ids)?;
        Ok(Interconnection(map))
    }

    pub fn identity(sub: &Submersion) -> Self {
        Interconnection(SubmersionMap::identity(sub))
    }

    pub fn into_map(self) -> SubmersionMap {
        self.0
    }

    /// The expressions feeding the target's input coordinates.
    pub fn inputs(&self) -> &[Expr] {
        &self.0.tot[self.0.target.state_dim()..]
    }

    /// `self ∘ first`; interconnections are closed under composition.
    pub fn after(&self, first: &Interconnection) -> Result<Interconnection, SpaceError> {
        Interconnection::try_from(self.0.after(&first.0)?)
    }
}

impl TryFrom<SubmersionMap> for Interconnection {
    type Error = SpaceError;

    fn try_from(map: SubmersionMap) -> Result<Self, SpaceError> {
        let coords = map.source.state_coords();
        if coords.len() != map.target.state_dim() {
            return Err(SpaceError::NotInterconnection(
                "state map is not the identity (dimension change); only identity state maps are supported".into(),
            ));
        }
        for (i, c) in coords.iter().enumerate() {
            if map.st[i].as_var() != Some(c.as_str()) {
                return Err(SpaceError::NotInterconnection(format!(
                    "state map component {i} is `{}`, expected `{c}`; only identity state maps are supported",
                    map.st[i]
                )));
            }
            if map.tot[i].as_var() != Some(c.as_str()) {
                return Err(SpaceError::NotInterconnection(format!(
                    "total map component {i} is `{}`, expected `{c}`",
                    map.tot[i]
                )));
            }
        }
        Ok(Interconnection(map))
    }
}

impl Deref for Interconnection {
    type Target = SubmersionMap;

    fn deref(&self) -> &SubmersionMap {
        &self.0
    }
}

/// Parses one expression per entry of `sources` over `vars`.
pub fn parse_all<S: AsRef<str>>(sources: &[S], vars: &[String]) -> Result<Vec<Expr>, exprlang::ParseError> {
    sources.iter().map(|s| exprlang::parse(s.as_ref(), vars)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprlang::parse;

    fn r(name: &str, coord: &str) -> Space {
        Space::new(name, [coord]).unwrap()
    }

    fn p(state: &[Space], input: &[Space]) -> Submersion {
        Submersion::new(state.to_vec(), input.to_vec()).unwrap()
    }

    #[test]
    fn duplicate_coordinates_rejected() {
        assert!(Space::new("M", ["x", "x"]).is_err());
        let m = r("M", "x");
        assert_eq!(
            Submersion::new(vec![m.clone()], vec![m]),
            Err(SpaceError::DuplicateCoordinate("x".into()))
        );
    }

    #[test]
    fn product_of_two() {
        let a = p(&[r("M", "m")], &[r("U", "u")]);
        let b = p(&[r("N", "n")], &[r("V", "v")]);
        let prod = product_submersion(&[a, b]).unwrap();
        assert_eq!(prod.total_coords(), ["n0.m", "n1.n", "n0.u", "n1.v"]);
        assert_eq!(prod.state_dim(), 2);
        assert_eq!(prod.to_string(), "M×N×U×V→M×N");
    }

    #[test]
    fn product_singleton_is_renamed_copy() {
        let a = p(&[r("M", "m")], &[r("U", "u")]);
        let prod = product_submersion(std::slice::from_ref(&a)).unwrap();
        assert!(prod.same_shape(&a));
        assert_eq!(prod.total_coords(), ["n0.m", "n0.u"]);
    }

    #[test]
    fn product_of_three_copies() {
        let a = p(&[r("M", "m")], &[r("U", "u")]);
        let prod = product_submersion(&[a.clone(), a.clone(), a]).unwrap();
        assert_eq!(prod.state_dim(), 3);
        assert_eq!(prod.input_dim(), 3);
        assert_eq!(prod.to_string(), "M×M×M×U×U×U→M×M×M");
        let layout = ProductLayout::of(&[
            p(&[r("M", "m")], &[r("U", "u")]),
            p(&[r("M", "m")], &[]),
            p(&[r("M", "m")], &[r("U", "u")]),
        ]);
        assert_eq!(layout.node_total(2), vec![2, 4]);
        assert_eq!(layout.node_total(1), vec![1]);
    }

    #[test]
    fn empty_product_is_a_point() {
        let prod = product_submersion(&[]).unwrap();
        assert_eq!(prod.total_dim(), 0);
    }

    #[test]
    fn square_violation_detected() {
        let src = p(&[r("M", "x")], &[r("U", "u")]);
        let dst = src.clone();
        let vars = src.total_coords().to_vec();
        let tot = vec![parse("x + u", &vars).unwrap(), Expr::var("u")];
        let st = vec![Expr::var("x")];
        let err = SubmersionMap::new(src.clone(), dst.clone(), tot.clone(), st).unwrap_err();
        assert!(matches!(err, SpaceError::SquareViolation { component: 0, .. }));
        assert_eq!(
            SubmersionMap::from_total(src, dst, tot).unwrap_err(),
            SpaceError::StateDependsOnInput("u".into())
        );
    }

    #[test]
    fn compose_with_identity() {
        let src = p(&[r("M", "x")], &[r("U", "u")]);
        let vars = src.total_coords().to_vec();
        let tot = parse_all(&["x^2", "u*x"], &vars).unwrap();
        let f = SubmersionMap::from_total(src.clone(), src.clone(), tot).unwrap();
        let id = SubmersionMap::identity(&src);
        for g in [id.after(&f).unwrap(), f.after(&id).unwrap()] {
            let mut s = Sampler::new(3);
            for _ in 0..20 {
                let q = s.point(2);
                assert_eq!(g.eval_tot(&q).unwrap(), f.eval_tot(&q).unwrap());
            }
        }
    }

    #[test]
    fn composite_from_parabola_data() {
        // ν(x) = (x, x) into ℝ×ℝ→ℝ, then Φ₁(x, u) = (x², u).
        let line = p(&[r("R", "x")], &[]);
        let plane = p(&[r("R", "x")], &[r("R", "u")]);
        let nu = Interconnection::from_inputs(line.clone(), plane.clone(), vec![Expr::var("x")]).unwrap();
        let pv = plane.total_coords().to_vec();
        let phi1 = SubmersionMap::from_total(plane.clone(), plane, parse_all(&["x^2", "u"], &pv).unwrap()).unwrap();
        let c = phi1.after(&nu).unwrap();
        for x in [-1.0, 0.0, 1.0, 2.0] {
            assert_eq!(c.eval_tot(&[x]).unwrap(), vec![x * x, x]);
            assert_eq!(c.eval_st(&[x]).unwrap(), vec![x * x]);
        }
    }

    #[test]
    fn interconnections_compose() {
        let a = p(&[r("M", "m")], &[r("U", "u")]);
        let b = p(&[r("M", "m")], &[r("U", "u"), r("V", "v")]);
        let av = a.total_coords().to_vec();
        let bv = b.total_coords().to_vec();
        let psi = Interconnection::from_inputs(a.clone(), b.clone(), parse_all(&["u", "m^2"], &av).unwrap()).unwrap();
        let chi = Interconnection::from_inputs(b.clone(), b, parse_all(&["v", "u"], &bv).unwrap()).unwrap();
        let c = chi.after(&psi).unwrap();
        assert_eq!(c.eval_tot(&[3.0, 5.0]).unwrap(), vec![3.0, 9.0, 5.0]);
    }

    #[test]
    fn non_identity_state_map_rejected() {
        let a = p(&[r("M", "m")], &[]);
        let f = SubmersionMap::from_total(a.clone(), a, vec![Expr::var("m") * 2.0]).unwrap();
        assert!(matches!(Interconnection::try_from(f), Err(SpaceError::NotInterconnection(_))));
    }

    #[test]
    fn permutation_detection() {
        let a = p(&[r("M", "m")], &[r("U", "u"), r("V", "v")]);
        let vars = a.total_coords().to_vec();
        let f = SubmersionMap::from_total(a.clone(), a.clone(), parse_all(&["m", "v", "u"], &vars).unwrap()).unwrap();
        assert_eq!(f.as_coordinate_permutation(), Some(vec![0, 2, 1]));
        let g = SubmersionMap::from_total(a.clone(), a, parse_all(&["m", "u", "u"], &vars).unwrap()).unwrap();
        assert_eq!(g.as_coordinate_permutation(), None);
    }
}
