//! Fixed-step integration of closed systems and invariance monitoring.

use std::io;

use serde::Serialize;
use thiserror::Error;

use crate::exprlang::{self, EvalError, Expr, Point};
use crate::opensys::OpenSystem;
use crate::spaces::SubmersionMap;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("system has {0} input coordinates; wire or fix the inputs before integrating")]
    NotClosed(usize),
    #[error("step size must be positive and the horizon non-negative (dt = {dt}, t1 = {t1})")]
    BadStep { dt: f64, t1: f64 },
    #[error("{context}: expected {expected} values, found {found}")]
    Shape {
        context: String,
        expected: usize,
        found: usize,
    },
    #[error("evaluation failed at t = {time}: {source}")]
    Eval { time: f64, source: EvalError },
    #[error("state left the finite range at t = {time} (step {step})")]
    Overflow { step: usize, time: f64 },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// States sampled at `t_k = k · dt`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    coords: Vec<String>,
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().expect("a trajectory holds at least its initial state")
    }

    /// Largest `|a − b|` over all times and coordinates; `None` if the
    /// trajectories have different lengths or widths.
    pub fn max_abs_diff(&self, other: &Trajectory) -> Option<f64> {
        if self.len() != other.len() || self.coords.len() != other.coords.len() {
            return None;
        }
        let mut worst: f64 = 0.0;
        for (a, b) in self.states.iter().zip(&other.states) {
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y).abs());
            }
        }
        Some(worst)
    }

    /// CSV with a leading `t` column followed by the coordinate names.
    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend(self.coords.iter().cloned());
        w.write_record(&header)?;
        for (t, x) in self.times.iter().zip(&self.states) {
            let row: Vec<String> = std::iter::once(t).chain(x).map(|v| v.to_string()).collect();
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Classical fourth-order Runge–Kutta on `[0, t1]` with `round(t1 / dt)`
/// steps of size `dt`.
pub fn integrate(f: &OpenSystem, x0: &[f64], t1: f64, dt: f64) -> Result<Trajectory, SimError> {
    let on = f.on();
    if !on.is_closed() {
        return Err(SimError::NotClosed(on.input_dim()));
    }
    if !(dt > 0.0 && t1 >= 0.0 && dt.is_finite() && t1.is_finite()) {
        return Err(SimError::BadStep { dt, t1 });
    }
    if x0.len() != on.state_dim() {
        return Err(SimError::Shape {
            context: "initial state".into(),
            expected: on.state_dim(),
            found: x0.len(),
        });
    }
    let steps = (t1 / dt).round() as usize;
    let coords = on.state_coords().to_vec();
    let eval = |x: &[f64], step: usize| {
        let time = step as f64 * dt;
        f.eval(x).map_err(|source| match source {
            EvalError::Overflow { .. } => SimError::Overflow { step, time },
            source => SimError::Eval { time, source },
        })
    };
    let axpy = |x: &[f64], h: f64, k: &[f64]| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + h * b).collect() };

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut x = x0.to_vec();
    times.push(0.0);
    states.push(x.clone());
    for step in 1..=steps {
        let k1 = eval(&x, step - 1)?;
        let k2 = eval(&axpy(&x, dt / 2.0, &k1), step - 1)?;
        let k3 = eval(&axpy(&x, dt / 2.0, &k2), step - 1)?;
        let k4 = eval(&axpy(&x, dt, &k3), step - 1)?;
        for i in 0..x.len() {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let time = step as f64 * dt;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SimError::Overflow { step, time });
        }
        times.push(time);
        states.push(x.clone());
    }
    Ok(Trajectory { coords, times, states })
}

/// Constraint functions over the state coordinates whose common zero set is
/// the monitored submanifold.
#[derive(Debug, Clone, PartialEq)]
pub struct Monitor {
    pub constraints: Vec<Expr>,
    pub tol: f64,
}

impl Monitor {
    pub fn new(constraints: Vec<Expr>, tol: f64) -> Self {
        Monitor { constraints, tol }
    }

    pub fn parse<S: AsRef<str>>(sources: &[S], coords: &[String], tol: f64) -> Result<Self, exprlang::ParseError> {
        let constraints = crate::spaces::parse_all(sources, coords)?;
        Ok(Monitor { constraints, tol })
    }

    /// `x_{b,i} − x_{b+1,i}` for `blocks` consecutive blocks of equal width.
    pub fn diagonal(coords: &[String], blocks: usize, tol: f64) -> Self {
        let width = coords.len().checked_div(blocks).unwrap_or(0);
        let mut constraints = Vec::new();
        for b in 1..blocks {
            for i in 0..width {
                constraints.push(Expr::var(&coords[(b - 1) * width + i]) - Expr::var(&coords[b * width + i]));
            }
        }
        Monitor { constraints, tol }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorReport {
    pub max_violation: f64,
    /// Time at which the largest violation occurred.
    pub time: f64,
    pub tolerance: f64,
    pub holds: bool,
}

/// Largest `|constraint|` over all times of the trajectory.
pub fn monitor_invariance(traj: &Trajectory, m: &Monitor) -> Result<MonitorReport, SimError> {
    let mut report = MonitorReport {
        max_violation: 0.0,
        time: 0.0,
        tolerance: m.tol,
        holds: true,
    };
    for (&t, x) in traj.times.iter().zip(&traj.states) {
        let env = Point::new(&traj.coords, x);
        for c in &m.constraints {
            let v = c.eval(&env).map_err(|source| SimError::Eval { time: t, source })?.abs();
            if v > report.max_violation {
                report.max_violation = v;
                report.time = t;
            }
        }
    }
    report.holds = report.max_violation <= m.tol;
    Ok(report)
}

/// Applies `f_st` to every state.
pub fn push_trajectory(f: &SubmersionMap, traj: &Trajectory) -> Result<Trajectory, SimError> {
    let src = f.source().state_dim();
    if traj.coords.len() != src {
        return Err(SimError::Shape {
            context: "trajectory width vs map source state dimension".into(),
            expected: src,
            found: traj.coords.len(),
        });
    }
    let states = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&time, x)| f.eval_st(x).map_err(|source| SimError::Eval { time, source }))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Trajectory {
        coords: f.target().state_coords().to_vec(),
        times: traj.times.clone(),
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::{Space, Submersion};

    fn closed(coords: &[&str], field: &[&str]) -> OpenSystem {
        let on = Submersion::identity(coords.iter().map(|c| Space::new("R", [*c]).unwrap()).collect()).unwrap();
        OpenSystem::parse(on, field).unwrap()
    }

    #[test]
    fn exponential_growth() {
        let f = closed(&["x"], &["x"]);
        let tr = integrate(&f, &[1.0], 1.0, 1e-3).unwrap();
        assert_eq!(tr.len(), 1001);
        assert!((tr.last()[0] - std::f64::consts::E).abs() < 1e-8);
    }

    #[test]
    fn zero_field_is_bitwise_constant() {
        let f = closed(&["a", "b", "c"], &["0", "0", "0"]);
        let x0 = [0.1, -2.5, 1e-300];
        let tr = integrate(&f, &x0, 2.0, 0.01).unwrap();
        assert!(tr.states().iter().all(|s| s == &x0));
    }

    #[test]
    fn open_system_rejected() {
        let on = Submersion::new(vec![Space::new("R", ["x"]).unwrap()], vec![Space::new("R", ["u"]).unwrap()]).unwrap();
        let f = OpenSystem::parse(on, &["u"]).unwrap();
        assert!(matches!(integrate(&f, &[0.0], 1.0, 0.1), Err(SimError::NotClosed(1))));
    }

    #[test]
    fn blow_up_is_reported() {
        let f = closed(&["x"], &["x^2"]);
        assert!(matches!(integrate(&f, &[1.0], 2.0, 1e-2), Err(SimError::Overflow { .. })));
    }

    #[test]
    fn bad_steps() {
        let f = closed(&["x"], &["x"]);
        assert!(matches!(integrate(&f, &[1.0], 1.0, 0.0), Err(SimError::BadStep { .. })));
        assert!(matches!(integrate(&f, &[1.0, 2.0], 1.0, 0.1), Err(SimError::Shape { .. })));
    }

    #[test]
    fn monitor_on_constant_point() {
        let f = closed(&["x1", "x2"], &["0", "0"]);
        let tr = integrate(&f, &[4.0, 2.0], 1.0, 0.1).unwrap();
        let m = Monitor::parse(&["x1 - x2^2"], tr.coords(), 1e-6).unwrap();
        let r = monitor_invariance(&tr, &m).unwrap();
        assert_eq!(r.max_violation, 0.0);
        assert!(r.holds);
    }

    #[test]
    fn diagonal_monitor_constraints() {
        let coords: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let m = Monitor::diagonal(&coords, 3, 0.0);
        assert_eq!(m.constraints.len(), 2);
        assert_eq!(m.constraints[0].to_string(), "a - b");
    }

    #[test]
    fn csv_layout() {
        let f = closed(&["x"], &["1"]);
        let tr = integrate(&f, &[0.0], 1.0, 0.5).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,x\n0,0\n0.5,0.5\n1,1\n");
    }
}
