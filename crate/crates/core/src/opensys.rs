//! Open systems on submersions, pullback along interconnections, products,
//! and sampled relatedness checks.

use serde::Serialize;
use thiserror::Error;

use crate::exprlang::{self, DiffError, EvalError, Expr, Point};
use crate::sampling::{Probe, Sampler};
use crate::spaces::{product_submersion, Interconnection, ProductLayout, SpaceError, Submersion, SubmersionMap};

pub const DEFAULT_SAMPLES: usize = 200;
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("{context}: expected {expected}, found {found}")]
    Shape {
        context: String,
        expected: usize,
        found: usize,
    },
    #[error("{context}: variable `{name}` is not a coordinate of {on}")]
    UnknownVariable { context: String, name: String, on: String },
    #[error("index map sends {index} to {image}, but only {count} targets exist")]
    IndexOutOfRange { index: usize, image: usize, count: usize },
    #[error("system is not closed ({0} input coordinates)")]
    NotClosed(usize),
}

fn shape(context: &str, expected: usize, found: usize) -> Result<(), SystemError> {
    if expected == found {
        Ok(())
    } else {
        Err(SystemError::Shape {
            context: context.to_string(),
            expected,
            found,
        })
    }
}

/// A field `F: Q → TM`: component `i` is the velocity of state coordinate `i`
/// as a function of the total coordinates of `on`.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenSystem {
    on: Submersion,
    field: Vec<Expr>,
}

impl OpenSystem {
    pub fn new(on: Submersion, field: Vec<Expr>) -> Result<Self, SystemError> {
        shape("field length vs state dimension", on.state_dim(), field.len())?;
        for e in &field {
            if let Some(name) = e.free_vars().into_iter().find(|v| !on.total_coords().contains(v)) {
                return Err(SystemError::UnknownVariable {
                    context: "open system".into(),
                    name,
                    on: on.to_string(),
                });
            }
        }
        Ok(OpenSystem { on, field })
    }

    /// Parses one expression per state coordinate over the total coordinates.
    pub fn parse<S: AsRef<str>>(on: Submersion, sources: &[S]) -> Result<Self, ParseSystemError> {
        let field = crate::spaces::parse_all(sources, on.total_coords())?;
        Ok(Self::new(on, field)?)
    }

    pub fn on(&self) -> &Submersion {
        &self.on
    }

    pub fn field(&self) -> &[Expr] {
        &self.field
    }

    pub fn eval(&self, q: &[f64]) -> Result<Vec<f64>, EvalError> {
        exprlang::eval_all(&self.field, &Point::new(self.on.total_coords(), q))
    }

    /// Substitutes constants for every input coordinate, giving a system on
    /// the identity submersion of the state space.
    pub fn with_constant_inputs(&self, inputs: &[f64]) -> Result<OpenSystem, SystemError> {
        shape("constant inputs", self.on.input_dim(), inputs.len())?;
        let on = Submersion::identity(self.on.state_factors().to_vec())?;
        let values: Vec<Expr> = self
            .on
            .state_coords()
            .iter()
            .map(|c| Expr::var(c))
            .chain(inputs.iter().map(|&u| Expr::constant(u)))
            .collect();
        let field = self
            .field
            .iter()
            .map(|e| e.substitute_positional(self.on.total_coords(), &values))
            .collect();
        Ok(OpenSystem { on, field })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseSystemError {
    #[error(transparent)]
    Parse(#[from] exprlang::ParseError),
    #[error(transparent)]
    System(#[from] SystemError),
}

/// `φ*F = F ∘ φ_tot`, a system on the source of `φ` (the state part of an
/// interconnection is the identity, so no inverse differential appears).
pub fn pullback(phi: &Interconnection, f: &OpenSystem) -> Result<OpenSystem, SystemError> {
    if !phi.target().same_shape(&f.on) {
        return Err(SystemError::Shape {
            context: format!("pullback: interconnection target {} vs system on {}", phi.target(), f.on),
            expected: phi.target().total_dim(),
            found: f.on.total_dim(),
        });
    }
    let field = f
        .field
        .iter()
        .map(|e| e.substitute_positional(f.on.total_coords(), phi.tot()))
        .collect();
    Ok(OpenSystem {
        on: phi.source().clone(),
        field,
    })
}

/// The product system on [`product_submersion`] of the underlying
/// submersions; state block `a` is `F_a` on node `a`'s coordinates.
pub fn product_systems(list: &[OpenSystem]) -> Result<OpenSystem, SystemError> {
    let subs: Vec<Submersion> = list.iter().map(|s| s.on.clone()).collect();
    let on = product_submersion(&subs)?;
    let layout = ProductLayout::of(&subs);
    let mut field = Vec::with_capacity(on.state_dim());
    for (i, sys) in list.iter().enumerate() {
        let renamed: Vec<Expr> = layout
            .node_total(i)
            .into_iter()
            .map(|k| Expr::var(&on.total_coords()[k]))
            .collect();
        field.extend(
            sys.field
                .iter()
                .map(|e| e.substitute_positional(sys.on.total_coords(), &renamed)),
        );
    }
    Ok(OpenSystem { on, field })
}

/// Sampling parameters shared by every numerical check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CheckOptions {
    pub samples: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            samples: DEFAULT_SAMPLES,
            tol: DEFAULT_TOL,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelatednessReport {
    pub max_residual: f64,
    /// Sample points where every expression evaluated.
    pub samples: usize,
    /// Sample slots abandoned after repeated evaluation errors.
    pub skipped: usize,
    pub verdict: bool,
    pub worst_point: Vec<f64>,
    pub tolerance: f64,
}

impl RelatednessReport {
    fn empty(tol: f64) -> Self {
        RelatednessReport {
            max_residual: 0.0,
            samples: 0,
            skipped: 0,
            verdict: true,
            worst_point: Vec::new(),
            tolerance: tol,
        }
    }

    fn finish(mut self) -> Self {
        // a check where no point could be evaluated certifies nothing
        self.verdict = self.max_residual <= self.tolerance && !(self.samples == 0 && self.skipped > 0);
        self
    }
}

/// Samples `r(q) = J(f_st)(p(q))·F(q) − G(f_tot(q))` and reports the largest
/// sup-norm.
pub fn check_related(
    f: &SubmersionMap,
    big_f: &OpenSystem,
    big_g: &OpenSystem,
    opts: &CheckOptions,
) -> Result<RelatednessReport, SystemError> {
    if !big_f.on.same_shape(f.source()) {
        return Err(SystemError::Shape {
            context: format!("source system on {} vs map source {}", big_f.on, f.source()),
            expected: f.source().total_dim(),
            found: big_f.on.total_dim(),
        });
    }
    if !big_g.on.same_shape(f.target()) {
        return Err(SystemError::Shape {
            context: format!("target system on {} vs map target {}", big_g.on, f.target()),
            expected: f.target().total_dim(),
            found: big_g.on.total_dim(),
        });
    }
    let jac = exprlang::jacobian(f.st(), f.source().state_coords())?;
    let src = f.source();
    let mut report = RelatednessReport::empty(opts.tol);
    let mut sampler = Sampler::new(opts.seed);
    for _ in 0..opts.samples {
        let probe = sampler.probe(src.total_dim(), |q| -> Result<f64, EvalError> {
            let m = Point::new(src.state_coords(), src.project(q));
            let v = big_f.eval(q)?;
            let image = f.eval_tot(q)?;
            let w = big_g.eval(&image)?;
            let mut worst: f64 = 0.0;
            for (row, wi) in jac.iter().zip(&w) {
                let mut acc = 0.0;
                for (entry, vj) in row.iter().zip(&v) {
                    acc += entry.eval(&m)? * vj;
                }
                let r = (acc - wi).abs();
                worst = if r.is_nan() { f64::INFINITY } else { worst.max(r) };
            }
            Ok(worst)
        });
        match probe {
            Probe::Hit { point, value } => {
                report.samples += 1;
                if value > report.max_residual || report.worst_point.is_empty() {
                    report.max_residual = report.max_residual.max(value);
                    report.worst_point = point;
                }
            }
            Probe::Miss { .. } => report.skipped += 1,
        }
    }
    Ok(report.finish())
}

/// Per-index relatedness reports together with their aggregate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyReport {
    pub aggregate: RelatednessReport,
    pub members: Vec<RelatednessReport>,
    /// Index with the largest residual, if any.
    pub worst_index: Option<usize>,
}

/// Checks that `F_x` and `G_{φ(x)}` are `Φ(x)`-related for every `x`.
pub fn check_phi_related_family(
    phi: &[usize],
    components: &[SubmersionMap],
    big_g: &[OpenSystem],
    big_f: &[OpenSystem],
    opts: &CheckOptions,
) -> Result<FamilyReport, SystemError> {
    shape("component maps per index", phi.len(), components.len())?;
    shape("target systems per index", phi.len(), big_f.len())?;
    let mut aggregate = RelatednessReport::empty(opts.tol);
    let mut members = Vec::with_capacity(phi.len());
    let mut worst_index = None;
    for (x, &y) in phi.iter().enumerate() {
        let g = big_g.get(y).ok_or(SystemError::IndexOutOfRange {
            index: x,
            image: y,
            count: big_g.len(),
        })?;
        let r = check_related(&components[x], g, &big_f[x], opts)?;
        aggregate.samples += r.samples;
        aggregate.skipped += r.skipped;
        if worst_index.is_none() || r.max_residual > aggregate.max_residual {
            aggregate.max_residual = r.max_residual;
            aggregate.worst_point = r.worst_point.clone();
            worst_index = Some(x);
        }
        members.push(r);
    }
    let mut aggregate = aggregate.finish();
    aggregate.verdict &= members.iter().all(|m| m.verdict);
    Ok(FamilyReport {
        aggregate,
        members,
        worst_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::{parse_all, Space};

    fn line(c: &str) -> Space {
        Space::new("R", [c]).unwrap()
    }

    fn sub(states: &[&str], inputs: &[&str]) -> Submersion {
        Submersion::new(states.iter().map(|c| line(c)).collect(), inputs.iter().map(|c| line(c)).collect()).unwrap()
    }

    fn sys(on: Submersion, field: &[&str]) -> OpenSystem {
        OpenSystem::parse(on, field).unwrap()
    }

    fn map(src: Submersion, dst: Submersion, tot: &[&str]) -> SubmersionMap {
        let vars = src.total_coords().to_vec();
        SubmersionMap::from_total(src, dst, parse_all(tot, &vars).unwrap()).unwrap()
    }

    #[test]
    fn field_length_checked() {
        let on = sub(&["x"], &["u"]);
        assert!(matches!(
            OpenSystem::parse(on.clone(), &["x", "u"]),
            Err(ParseSystemError::System(SystemError::Shape { .. }))
        ));
        let err = OpenSystem::new(on, vec![Expr::var("z")]).unwrap_err();
        assert!(matches!(err, SystemError::UnknownVariable { ref name, .. } if name == "z"));
    }

    #[test]
    fn pullback_feeds_wiring() {
        // G(m, u) = F(m, u, m^2) with F(m, u, v) = m*u + v
        let big = sub(&["m"], &["u", "v"]);
        let small = sub(&["m"], &["u"]);
        let f = sys(big.clone(), &["m*u + v"]);
        let phi = Interconnection::from_inputs(small.clone(), big, parse_all(&["u", "m^2"], small.total_coords()).unwrap()).unwrap();
        let g = pullback(&phi, &f).unwrap();
        assert_eq!(g.eval(&[3.0, 2.0]).unwrap(), vec![15.0]);
        let id = Interconnection::identity(&small);
        let h = sys(small, &["m - u"]);
        assert_eq!(pullback(&id, &h).unwrap(), h);
    }

    #[test]
    fn product_blocks() {
        let f = sys(sub(&["m"], &["u"]), &["m*u"]);
        let g = sys(sub(&["n"], &["v"]), &["n - v"]);
        let p = product_systems(&[f, g]).unwrap();
        // order: m, n, u, v
        assert_eq!(p.eval(&[2.0, 5.0, 3.0, 7.0]).unwrap(), vec![6.0, -2.0]);
    }

    #[test]
    fn parabola_relatedness() {
        let one = sub(&["x"], &[]);
        let two = sub(&["x1", "x2"], &[]);
        let f = map(one.clone(), two.clone(), &["x^2", "x"]);
        let v = sys(one.clone(), &["x/2"]);
        let u = sys(two, &["x1", "x2/2"]);
        let r = check_related(&f, &v, &u, &CheckOptions::default()).unwrap();
        assert!(r.verdict);
        assert!(r.max_residual <= 1e-12);
        assert_eq!(r.samples, DEFAULT_SAMPLES);
    }

    #[test]
    fn identity_relates_system_to_itself() {
        let on = sub(&["x"], &["u"]);
        let f = sys(on.clone(), &["sin(x)*u"]);
        let r = check_related(&SubmersionMap::identity(&on), &f, &f, &CheckOptions::default()).unwrap();
        assert!(r.verdict);
        assert_eq!(r.max_residual, 0.0);
    }

    #[test]
    fn unrelated_pair() {
        let one = sub(&["x"], &[]);
        let two = sub(&["y1", "y2"], &[]);
        let f = map(one.clone(), two.clone(), &["x", "0"]);
        let r = check_related(&f, &sys(one, &["1"]), &sys(two, &["1", "1"]), &CheckOptions::default()).unwrap();
        assert!(!r.verdict);
        assert_eq!(r.max_residual, 1.0);
    }

    #[test]
    fn singular_points_are_redrawn() {
        let one = sub(&["x"], &[]);
        let f = sys(one.clone(), &["1/x"]);
        let r = check_related(&SubmersionMap::identity(&one), &f, &f, &CheckOptions::default()).unwrap();
        assert!(r.verdict);
        let g = sys(one.clone(), &["sqrt(-1 - x^2)"]);
        let r = check_related(&SubmersionMap::identity(&one), &g, &g, &CheckOptions { samples: 3, ..Default::default() }).unwrap();
        assert_eq!(r.skipped, 3);
        assert!(!r.verdict);
    }

    #[test]
    fn empty_family_is_vacuous() {
        let r = check_phi_related_family(&[], &[], &[], &[], &CheckOptions::default()).unwrap();
        assert!(r.aggregate.verdict);
        assert_eq!(r.worst_index, None);
    }

    #[test]
    fn constant_inputs_close_a_system() {
        let f = sys(sub(&["x"], &["u"]), &["x*u"]);
        let c = f.with_constant_inputs(&[2.0]).unwrap();
        assert!(c.on().is_closed());
        assert_eq!(c.eval(&[3.0]).unwrap(), vec![6.0]);
    }
}
