//! Acceptance run: one PASS/FAIL line per criterion, with the measured
//! figure and wall time. Runs as a plain binary (`harness = false`).
//!
//! Criterion 3 asks for the parabola invariant up to t1 = 0.5, which is the
//! exact blow-up time of the restricted flow x' = x³ from x = 1. It is run as
//! stated and reported; its FAIL does not fail the target. Any other FAIL
//! does. Set `ACCEPTANCE_STRICT=1` to fail on every red line.

use std::collections::HashMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use opennet::exprlang::parse;
use opennet::graph::is_fibration;
use opennet::linrel::{compose_rel, contains, equals, graph_of, linear_field_relation, odot, LinRelation};
use opennet::network::{from_fibration, verify_theorem, NetworkMap};
use opennet::opensys::{check_phi_related_family, CheckOptions};
use opennet::sim::{integrate, monitor_invariance, push_trajectory, Monitor};
use opennet_cli::spec::{load, Spec};
use opennet_testkit::worked::{parabola_family, parabola_map};
use opennet_testkit::{
    all_graphs, block_map_oracle, central_fd, for_each_graph_map, lift_count_oracle, random_expr, random_identity_map_case,
    random_matrix, random_relation, rng,
};
use rand::Rng;

const KNOWN_INFEASIBLE: &[u32] = &[3];

type Check = Result<String, String>;

fn shipped(name: &str) -> Spec {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../specs").join(name);
    load(&path).unwrap_or_else(|e| panic!("{e}"))
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// 1: the shipped three-cell spec composes to the hand-wired field
fn triad_replay() -> Check {
    let spec = shipped("triad.json");
    let entry = &spec.networks["triad"];
    let names = entry.systems.as_ref().ok_or("triad has no systems")?;
    let systems: Vec<_> = names.iter().map(|n| spec.systems[n].clone()).collect();
    let composed = entry.network.compose(&systems).map_err(|e| e.to_string())?;

    let phi = |m: f64| m.sin() + m * m / 3.0;
    let f1 = |m: f64, u: f64| -m + u * u;
    let f2 = |m: f64, u: f64| m * u - m * m * m;
    let f3 = |m: f64, u: f64| u.cos() - 0.5 * m;
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let m: Vec<f64> = (0..3).map(|_| r.random_range(-2.0..2.0)).collect();
        let got = composed.eval(&m).map_err(|e| e.to_string())?;
        let want = [f1(m[0], phi(m[1])), f2(m[1], phi(m[0])), f3(m[2], phi(m[1]))];
        for (g, w) in got.iter().zip(&want) {
            worst = worst.max((g - w).abs() / g.abs().max(w.abs()).max(1.0));
        }
    }
    ensure(worst <= 1e-13, || format!("relative error {worst:e} > 1e-13"))?;
    Ok(format!("50 points, worst relative error {worst:e}"))
}

// 2: collapse of 1⇄2→3 onto the loop
fn collapse_pipeline() -> Check {
    let spec = shipped("collapse.json");
    let fib = &spec.fibrations["collapse"];
    let phi = fib.map.as_ref().ok_or("collapse has no explicit map")?;
    let (g, h) = (&spec.graphs[&fib.source], &spec.graphs[&fib.target]);
    ensure(is_fibration(phi, g, h).map_err(|e| e.to_string())?, || "collapse is not a fibration".into())?;

    let big = spec.networks["Cells"].manifold.as_ref().ok_or("Cells is not a graph network")?;
    let small = spec.networks["Loop"].manifold.as_ref().ok_or("Loop is not a graph network")?;
    let map: NetworkMap = from_fibration(phi, big, small).map_err(|e| e.to_string())?;
    let cell = map.two_cell_report(100, 0).max_residual;
    ensure(cell <= 1e-9, || format!("2-cell residual {cell:e}"))?;

    let entry = &spec.maps["collapse"];
    let pick = |names: &Option<Vec<String>>| -> Vec<_> {
        names.as_ref().map(|ns| ns.iter().map(|n| spec.systems[n].clone()).collect()).unwrap_or_default()
    };
    let thm = verify_theorem(&map, &pick(&entry.source_systems), &pick(&entry.target_systems), &CheckOptions::default())
        .map_err(|e| e.to_string())?;
    let res = thm.conclusion.max_residual;
    ensure(thm.conclusion.verdict && res <= 1e-9, || format!("theorem verdict {} residual {res:e}", thm.conclusion.verdict))?;
    Ok(format!("fibration true, 2-cell residual {cell:e}, theorem residual {res:e}"))
}

// 3: parabola family, theorem and the run to t1 = 0.5
fn parabola() -> Check {
    let map = parabola_map();
    let (big_g, f1, f2) = parabola_family("a + b");
    let opts = CheckOptions::default();
    let fam = check_phi_related_family(map.phi(), map.components(), &[big_g.clone()], &[f1.clone(), f2.clone()], &opts)
        .map_err(|e| e.to_string())?;
    let fr = fam.aggregate.max_residual;
    ensure(fam.aggregate.verdict && fr <= 1e-9, || format!("family residual {fr:e}"))?;
    let thm = verify_theorem(&map, &[big_g], &[f1.clone(), f2.clone()], &opts).map_err(|e| e.to_string())?;
    ensure(thm.conclusion.verdict, || format!("theorem residual {:e}", thm.conclusion.max_residual))?;

    let v = map.target().compose(&[f1, f2]).map_err(|e| e.to_string())?;
    let tr = integrate(&v, &[1.0, 1.0], 0.5, 1e-3)
        .map_err(|e| format!("family residual {fr:e}, theorem true; run from (1,1): {e}"))?;
    let m = Monitor::parse(&["x1 - x2^2"], v.on().state_coords(), 1e-6).map_err(|e| e.to_string())?;
    let rep = monitor_invariance(&tr, &m).map_err(|e| e.to_string())?;
    ensure(rep.holds, || {
        format!(
            "family residual {fr:e}, theorem true; |x1 - x2^2| reaches {:e} at t = {} (x2 -> 1/sqrt(1 - 2t) blows up at t = 0.5)",
            rep.max_violation, rep.time
        )
    })?;
    Ok(format!("family residual {fr:e}, max |x1 - x2^2| {:e}", rep.max_violation))
}

// 4: synchrony of the shipped diagonal map
fn synchrony() -> Check {
    let spec = shipped("diagonal_sync.json");
    let entry = &spec.maps["diagonal"];
    let pick = |names: &Option<Vec<String>>| -> Vec<_> {
        names.as_ref().map(|ns| ns.iter().map(|n| spec.systems[n].clone()).collect()).unwrap_or_default()
    };
    let u = entry.map.target().compose(&pick(&entry.target_systems)).map_err(|e| e.to_string())?;
    let base = entry.map.source().compose(&pick(&entry.source_systems)).map_err(|e| e.to_string())?;
    let x0 = [0.4];
    let f = entry.map.carrier_map();
    let y0 = f.eval_st(&x0).map_err(|e| e.to_string())?;
    let total = integrate(&u, &y0, 1.0, 1e-3).map_err(|e| e.to_string())?;
    let rep = monitor_invariance(&total, &Monitor::diagonal(total.coords(), 3, 1e-6)).map_err(|e| e.to_string())?;
    ensure(rep.holds && rep.max_violation <= 1e-6, || format!("diagonal violation {:e}", rep.max_violation))?;
    let pushed = push_trajectory(f, &integrate(&base, &x0, 1.0, 1e-3).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let gap = pushed.max_abs_diff(&total).ok_or("trajectories differ in shape")?;
    ensure(gap <= 1e-6, || format!("push gap {gap:e}"))?;
    Ok(format!("diagonal violation {:e}, push gap {gap:e}", rep.max_violation))
}

// 5: relation calculus on seeded random instances
fn linrel_suite() -> Check {
    let mut r = rng(5);
    let dims = |r: &mut rand_chacha::ChaCha8Rng, n: usize| -> Vec<usize> { (0..n).map(|_| r.random_range(1..=5)).collect() };
    let e = |x: opennet::linrel::LinRelError| x.to_string();
    for i in 0..100 {
        let d = dims(&mut r, 4);
        let a = random_relation(&mut r, d[1], d[0]);
        let b = random_relation(&mut r, d[2], d[1]);
        let c = random_relation(&mut r, d[3], d[2]);
        let left = compose_rel(&c, &compose_rel(&b, &a).map_err(e)?).map_err(e)?;
        let right = compose_rel(&compose_rel(&c, &b).map_err(e)?, &a).map_err(e)?;
        ensure(equals(&left, &right).map_err(e)?, || format!("associativity fails on instance {i}"))?;
    }
    for i in 0..100 {
        let d = dims(&mut r, 3);
        let s = random_matrix(&mut r, d[1], d[0]);
        let t = random_matrix(&mut r, d[2], d[1]);
        let composed = compose_rel(&graph_of(&t), &graph_of(&s)).map_err(e)?;
        ensure(equals(&graph_of(&(&t * &s)), &composed).map_err(e)?, || format!("graph functoriality fails on instance {i}"))?;
    }
    for i in 0..100 {
        let (ny, nx) = (r.random_range(1..=3), r.random_range(1..=3));
        let mu = dims(&mut r, ny);
        let phi: Vec<usize> = (0..nx).map(|_| r.random_range(0..ny)).collect();
        let maps: Vec<DMatrix<f64>> = phi
            .iter()
            .map(|&y| {
                let rows = r.random_range(1..=5);
                random_matrix(&mut r, rows, mu[y])
            })
            .collect();
        let graphs: Vec<LinRelation> = maps.iter().map(graph_of).collect();
        let rel = odot(&phi, &graphs, &mu).map_err(e)?;
        ensure(equals(&rel, &graph_of(&block_map_oracle(&phi, &maps, &mu))).map_err(e)?, || {
            format!("block graph equality fails on instance {i}")
        })?;
    }
    let mut strict_random = 0;
    for i in 0..100 {
        let (nz, ny, nx) = (r.random_range(1..=3), r.random_range(1..=3), r.random_range(1..=3));
        let (rho, mu, tau) = (dims(&mut r, nz), dims(&mut r, ny), dims(&mut r, nx));
        let psi: Vec<usize> = (0..ny).map(|_| r.random_range(0..nz)).collect();
        let phi: Vec<usize> = (0..nx).map(|_| r.random_range(0..ny)).collect();
        let big_psi: Vec<LinRelation> = (0..ny).map(|y| random_relation(&mut r, mu[y], rho[psi[y]])).collect();
        let big_phi: Vec<LinRelation> = (0..nx).map(|a| random_relation(&mut r, tau[a], mu[phi[a]])).collect();
        let index: Vec<usize> = phi.iter().map(|&y| psi[y]).collect();
        let pasted = (0..nx).map(|a| compose_rel(&big_phi[a], &big_psi[phi[a]])).collect::<Result<Vec<_>, _>>().map_err(e)?;
        let whole = odot(&index, &pasted, &rho).map_err(e)?;
        let staged = compose_rel(&odot(&phi, &big_phi, &mu).map_err(e)?, &odot(&psi, &big_psi, &rho).map_err(e)?).map_err(e)?;
        ensure(contains(&whole, &staged).map_err(e)?, || format!("lax inclusion fails on instance {i}"))?;
        strict_random += (whole.dim() > staged.dim()) as usize;
    }
    // the two axis projections of the plane: g ∘ f = 0
    let f = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    let g = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
    let staged = compose_rel(&linear_field_relation(&g), &linear_field_relation(&f)).map_err(e)?;
    let whole = linear_field_relation(&(&g * &f));
    ensure(contains(&whole, &staged).map_err(e)?, || "witness inclusion fails".into())?;
    let drop = whole.dim() as i64 - staged.dim() as i64;
    ensure(drop >= 1, || format!("witness dimension drop {drop}"))?;
    Ok(format!("4 x 100 instances, witness dims {} vs {} (drop {drop}), {strict_random} strict random inclusions", whole.dim(), staged.dim()))
}

// 6: exhaustive oracle agreement
fn fibration_oracle() -> Check {
    let graphs = all_graphs(3, 4);
    let mut maps = 0u64;
    let mut fibrations = 0u64;
    let mut disagreement = None;
    for g in &graphs {
        for h in &graphs {
            for_each_graph_map(g, h, &mut |phi| {
                maps += 1;
                let fast = is_fibration(phi, g, h).expect("maps are well-formed");
                fibrations += fast as u64;
                if disagreement.is_none() && fast != lift_count_oracle(phi, g, h) {
                    disagreement = Some(format!("{phi:?} from {g:?} to {h:?}"));
                }
            });
        }
    }
    if let Some(d) = disagreement {
        return Err(format!("disagreement on {d}"));
    }
    Ok(format!("{} graphs, {maps} maps, {fibrations} fibrations, 0 disagreements", graphs.len()))
}

// 7: identity-component maps over random networks
fn theorem_suite() -> Check {
    let mut r = rng(7);
    let opts = CheckOptions { tol: 1e-8, ..CheckOptions::default() };
    let mut worst = 0.0f64;
    for i in 0..50 {
        let case = random_identity_map_case(&mut r);
        let map = NetworkMap::new(case.source, case.target, case.phi, case.components, case.carrier_map)
            .map_err(|e| format!("case {i}: {e}"))?;
        let thm = verify_theorem(&map, &case.g, &case.f, &opts).map_err(|e| format!("case {i}: {e}"))?;
        ensure(thm.conclusion.verdict, || format!("case {i}: residual {:e}", thm.conclusion.max_residual))?;
        worst = worst.max(thm.conclusion.max_residual);
    }
    Ok(format!("50 cases, 0 failures, worst residual {worst:e}"))
}

// 8: symbolic derivatives against central differences
fn differentiation() -> Check {
    const VARS: [&str; 3] = ["x", "y", "z"];
    let mut r = rng(8);
    let mut checked = 0;
    let mut worst = 0.0f64;
    while checked < 500 {
        let ex = random_expr(&mut r, &VARS, 6);
        let env: HashMap<String, f64> = VARS.iter().map(|v| (v.to_string(), r.random_range(-2.0..2.0))).collect();
        let var = VARS[r.random_range(0..VARS.len())];
        let Some(fd) = central_fd(&ex, var, &env, 1e-6) else { continue };
        let exact = ex.diff(var).map_err(|e| e.to_string())?.eval(&env).map_err(|e| e.to_string())?;
        let rel = (exact - fd).abs() / (1.0 + exact.abs());
        ensure(rel <= 1e-5, || format!("d/d{var} {ex}: exact {exact}, fd {fd}"))?;
        worst = worst.max(rel);
        checked += 1;
    }
    // the printed form is what the spec files carry: it must differentiate the same
    let e = parse("sin(x) * exp(y / (1 + z^2))", &VARS).map_err(|e| e.to_string())?;
    let at: HashMap<String, f64> = [("x", 0.3), ("y", -0.7), ("z", 1.1)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
    let want = 0.3f64.cos() * (-0.7f64 / (1.0 + 1.1 * 1.1)).exp();
    let got = e.diff("x").map_err(|e| e.to_string())?.eval(&at).map_err(|e| e.to_string())?;
    ensure(close(got, want, 1e-13), || format!("closed form {got} vs {want}"))?;
    Ok(format!("{checked} checks, worst relative gap {worst:e}"))
}

fn main() {
    let criteria: [(u32, &str, Duration, fn() -> Check); 8] = [
        (1, "three-cell composition replay", Duration::from_secs(1), triad_replay),
        (2, "collapse onto the loop", Duration::from_secs(2), collapse_pipeline),
        (3, "parabola family and invariant", Duration::from_secs(5), parabola),
        (4, "diagonal synchrony", Duration::from_secs(5), synchrony),
        (5, "linear relation suite", Duration::from_secs(5), linrel_suite),
        (6, "fibration oracle, exhaustive", Duration::from_secs(30), fibration_oracle),
        (7, "identity-component theorem suite", Duration::from_secs(30), theorem_suite),
        (8, "differentiation vs finite differences", Duration::from_secs(5), differentiation),
    ];
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut unexpected = 0;
    for (n, name, limit, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if took > limit => Err(format!("{detail}; took {took:.2?}, limit {limit:?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS {n} {name}: {detail} [{took:.2?}]"),
            Err(detail) => {
                let known = KNOWN_INFEASIBLE.contains(&n);
                println!("FAIL {n} {name}: {detail} [{took:.2?}]{}", if known { " (known infeasible)" } else { "" });
                if strict || !known {
                    unexpected += 1;
                }
            }
        }
    }
    if unexpected > 0 {
        std::process::exit(1);
    }
}
