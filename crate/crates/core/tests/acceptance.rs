//! Acceptance gate. Every test prints one `criterion N: PASS|FAIL` line and
//! then asserts; run with `--nocapture` to see the lines.
//!
//! The published tables label their rows by `1/h` with `h = 2/N` the mesh
//! size on the square `(-1, 1)^2`, so the row labelled `8` is the run with
//! `N = 16` squares per direction and `M = 64` steps. Row `64` needs the
//! `N = 128`, `M = 4096` run and lives in the slow suite.

use sgfem_ocp::analysis::{eoc, l2_space_time_error, ConvergenceRow};
use sgfem_ocp::assembly::elliptic_projection;
use sgfem_ocp::driver::{run_convergence, solve_one, RunConfig};
use sgfem_ocp::geometry::Side;
use sgfem_ocp::manufactured::{example1, example2, example3, Example, ProblemSpec};
use sgfem_ocp::optimizer::{
    project_admissible, reduced_cost, reduced_gradient, ControlField, OptimizerOptions,
};
use sgfem_ocp::solver::{adjoint_solve, adjoint_steps, forward_solve, forward_steps, Discretization, DtRule, Role, Trajectory};
use sgfem_ocp::Vec2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: &str, title: &str, pass: bool, details: &[String]) {
    println!("criterion {id}: {} {title}", if pass { "PASS" } else { "FAIL" });
    for d in details {
        println!("    {d}");
    }
}

fn family(example: Example, beta: [f64; 2], n: &[usize], dt_rule: DtRule) -> Vec<ConvergenceRow> {
    let config = RunConfig {
        example,
        beta,
        n: n.to_vec(),
        dt_rule,
        ..RunConfig::default()
    };
    let table = run_convergence(&config).expect("convergence run");
    table.ensure_converged().expect("every row converges");
    table.rows
}

fn errors(row: &ConvergenceRow) -> [f64; 3] {
    [row.err_state, row.err_control, row.err_adjoint]
}

fn finest_orders(rows: &[ConvergenceRow]) -> [f64; 3] {
    let last = rows.last().expect("at least two rows");
    [last.order_state, last.order_control, last.order_adjoint].map(|o| o.expect("order from the second row on"))
}

const NAMES: [&str; 3] = ["state", "control", "adjoint"];

/// Published rows `1/h = 8, 16, 32` as `[state, control, adjoint]`.
struct PaperRows([[f64; 3]; 3]);

/// Table gate: orders at the finest pair at least `min_order`, errors at
/// `N = 16, 32, 64` within a factor 3 of the published rows `8, 16, 32`.
fn table_gate(rows: &[ConvergenceRow], paper: &PaperRows, min_order: f64, details: &mut Vec<String>) -> bool {
    let mut pass = true;
    for row in rows {
        details.push(format!(
            "N={:>3} M={:>5}  state {:.4e}  control {:.4e}  adjoint {:.4e}  iters {}",
            row.n, row.m, row.err_state, row.err_control, row.err_adjoint, row.iterations
        ));
    }
    for (k, published) in paper.0.iter().enumerate() {
        let n = 16 << k;
        let row = rows.iter().find(|r| r.n == n).expect("row present");
        for ((name, ours), theirs) in NAMES.iter().zip(errors(row)).zip(published) {
            let ratio = ours / theirs;
            let ok = (1.0 / 3.0..=3.0).contains(&ratio);
            pass &= ok;
            details.push(format!(
                "N={n} vs row 1/h={}: {name} {ours:.4e} / {theirs:.4e} = {ratio:.2}{}",
                n / 2,
                if ok { "" } else { "  (outside factor 3)" }
            ));
        }
    }
    for (name, order) in NAMES.iter().zip(finest_orders(rows)) {
        let ok = order >= min_order;
        pass &= ok;
        details.push(format!("finest-pair {name} order {order:.4} (need >= {min_order})"));
    }
    pass
}

#[test]
fn criterion_1_table_1() {
    let rows = family(Example::Circle, [1.0, 10.0], &[8, 16, 32, 64], DtRule::H2);
    let paper = PaperRows([
        [2.0664e-2, 6.8295e-4, 3.2776e-3],
        [4.9825e-3, 2.1094e-4, 7.9271e-4],
        [1.2533e-3, 5.4057e-5, 2.0154e-4],
    ]);
    let mut details = Vec::new();
    let pass = table_gate(&rows, &paper, 1.8, &mut details);
    report("1", "Example 1, beta = (1, 10), dt = h^2", pass, &details);
    assert!(pass);
}

#[test]
fn criterion_2_table_2() {
    let rows = family(Example::Circle, [10.0, 1.0], &[8, 16, 32, 64], DtRule::H2);
    let paper = PaperRows([
        [4.5819e-2, 3.8888e-3, 1.1681e-2],
        [1.1486e-2, 9.9305e-4, 2.9565e-3],
        [2.8399e-3, 2.4745e-4, 7.3640e-4],
    ]);
    let mut details = Vec::new();
    let pass = table_gate(&rows, &paper, 1.8, &mut details);
    report("2", "Example 1, beta = (10, 1), dt = h^2", pass, &details);
    assert!(pass);
}

#[test]
fn criterion_3_large_jumps() {
    let mut details = Vec::new();
    let mut pass = true;
    for beta in [[1.0, 1000.0], [1000.0, 1.0]] {
        let config = RunConfig {
            beta,
            n: vec![8, 16, 32, 64],
            ..RunConfig::default()
        };
        let table = run_convergence(&config).expect("convergence run");
        let converged = table.unconverged.is_empty();
        let order = finest_orders(&table.rows)[0];
        let ok = converged && (1.5..=2.6).contains(&order);
        pass &= ok;
        details.push(format!(
            "beta = ({}, {}): all rows converged = {converged}, finest-pair state order {order:.4} (need [1.5, 2.6])",
            beta[0], beta[1]
        ));
    }
    report("3", "Example 1 with coefficient ratios 1/1000 and 1000", pass, &details);
    assert!(pass);
}

fn order_window(title: &str, id: &str, rule: DtRule, window: (f64, f64)) {
    let mut details = Vec::new();
    let mut pass = true;
    for example in [Example::CubicUnconstrained, Example::CubicConstrained] {
        let rows = family(example, [1.0, 10.0], &[8, 16, 32, 64], rule);
        for row in &rows {
            details.push(format!(
                "{example} N={:>3} M={:>5}  state {:.4e}  control {:.4e}  adjoint {:.4e}",
                row.n, row.m, row.err_state, row.err_control, row.err_adjoint
            ));
        }
        for (name, order) in NAMES.iter().zip(finest_orders(&rows)) {
            let ok = order >= window.0 && order <= window.1;
            pass &= ok;
            details.push(format!(
                "{example} finest-pair {name} order {order:.4} (need [{}, {}])",
                window.0, window.1
            ));
        }
    }
    report(id, title, pass, &details);
    assert!(pass);
}

#[test]
fn criterion_4_example_2_dt_h2() {
    order_window("Example 2, dt = h^2, both cases", "4", DtRule::H2, (1.8, f64::INFINITY));
}

#[test]
fn criterion_5_example_2_dt_h() {
    order_window("Example 2, dt = h, both cases", "5", DtRule::H1, (0.85, 1.2));
}

#[test]
#[ignore = "slow suite: reference run with N = 128, M = 4096"]
fn criterion_6_example_3_self_convergence() {
    let config = RunConfig {
        example: Example::Flower,
        beta: [1.0, 10.0],
        n: vec![8, 16, 32, 64],
        reference: (128, 4096),
        ..RunConfig::default()
    };
    let table = run_convergence(&config).expect("convergence run");
    let paper = [1.9002, 2.1100, 2.3414];
    let mut details = Vec::new();
    let mut pass = table.unconverged.is_empty();
    for row in &table.rows {
        details.push(format!(
            "N={:>3} M={:>5}  state {:.4e}  control {:.4e}  adjoint {:.4e}",
            row.n, row.m, row.err_state, row.err_control, row.err_adjoint
        ));
    }
    for (row, target) in table.rows.iter().skip(1).zip(paper) {
        let order = row.order_state.expect("order");
        let ok = (order - target).abs() <= 0.4;
        pass &= ok;
        details.push(format!("N={} state order {order:.4} vs {target} (need within 0.4)", row.n));
    }
    report("6", "Example 3 against the N = 128, M = 4096 reference", pass, &details);
    assert!(pass);
}

#[test]
#[ignore = "slow suite: N = 128, M = 4096 run for the finest published row"]
fn criterion_1_finest_published_row() {
    let p = example1(1.0, 10.0);
    let run = solve_one(p, 128, 4096, OptimizerOptions::default()).expect("run");
    let e = sgfem_ocp::analysis::exact_errors(&run.disc, &run.solution).expect("exact solution");
    let paper = [2.9749e-4, 1.3587e-5, 4.8446e-5];
    let mut pass = run.solution.report.converged;
    let mut details = Vec::new();
    for ((name, ours), theirs) in NAMES.iter().zip(e).zip(paper) {
        let ratio = ours / theirs;
        let ok = (1.0 / 3.0..=3.0).contains(&ratio);
        pass &= ok;
        details.push(format!("N=128 vs row 1/h=64: {name} {ours:.4e} / {theirs:.4e} = {ratio:.2}"));
    }
    report("1 (finest row)", "Example 1, beta = (1, 10), N = 128", pass, &details);
    assert!(pass);
}

fn random_control(disc: &Discretization, rng: &mut ChaCha8Rng) -> ControlField {
    let mut c = ControlField::zeros_for(disc);
    for v in &mut c.values {
        *v = rng.random_range(-1.0..1.0);
    }
    c
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Discrete summation by parts between forward interface sources and
/// adjoint volume sources; worst relative mismatch over five seeds.
fn duality_defect(disc: &Discretization) -> f64 {
    let n_dofs = disc.n_dofs();
    let dt = disc.grid.dt;
    let zero = vec![0.0; n_dofs];
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let u = random_control(disc, &mut rng);
        let z: Vec<Vec<f64>> = (0..=disc.grid.m)
            .map(|_| (0..n_dofs).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y = forward_steps(disc, zero.clone(), |n, rhs| disc.add_control_load(&u, n, rhs), |_| zero.clone())
            .expect("forward");
        let p = adjoint_steps(disc, |n, rhs| {
            for (r, v) in rhs.iter_mut().zip(disc.mass.mul_vec(&z[n])) {
                *r += dt * v;
            }
        })
        .expect("adjoint");
        let (mut lhs, mut rhs) = (0.0, 0.0);
        for (n, zn) in z.iter().enumerate().skip(1) {
            let mut bu = vec![0.0; n_dofs];
            disc.add_control_load(&u, n, &mut bu);
            lhs += dot(&bu, p.on_interval(n));
            rhs += dt * dot(&disc.mass.mul_vec(zn), y.on_interval(n));
        }
        worst = worst.max((lhs - rhs).abs() / rhs.abs());
    }
    worst
}

fn gradient_defect(disc: &Discretization) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let eps = 1e-4;
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let u = random_control(disc, &mut rng);
        let du = random_control(disc, &mut rng);
        let adjoint = adjoint_solve(disc, &forward_solve(disc, &u).expect("state")).expect("adjoint");
        let pairing = reduced_gradient(disc, &u, &adjoint).inner(&du, disc);
        let cost = |s: f64| {
            let mut v = u.clone();
            for (a, d) in v.values.iter_mut().zip(&du.values) {
                *a += s * d;
            }
            reduced_cost(disc, &v, &forward_solve(disc, &v).expect("state"))
        };
        let fd = (cost(eps) - cost(-eps)) / (2.0 * eps);
        worst = worst.max((fd - pairing).abs() / pairing.abs());
    }
    worst
}

/// `(idempotence defect, worst excess of ||Pa - Pb|| over ||a - b||)`.
fn projection_defects(disc: &Discretization) -> (f64, f64) {
    let set = disc.problem.bounds;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut idem, mut excess): (f64, f64) = (0.0, f64::NEG_INFINITY);
    for _ in 0..5 {
        let mut a = random_control(disc, &mut rng);
        let mut b = random_control(disc, &mut rng);
        for v in a.values.iter_mut().chain(b.values.iter_mut()) {
            *v *= 3.0;
        }
        let pa = project_admissible(&set, &a, disc).expect("projection");
        let pb = project_admissible(&set, &b, disc).expect("projection");
        let ppa = project_admissible(&set, &pa, disc).expect("projection");
        idem = idem.max(ppa.difference(&pa).values.iter().fold(0.0, |m, v| m.max(v.abs())));
        excess = excess.max(pa.difference(&pb).norm(disc) - a.difference(&b).norm(disc));
    }
    (idem, excess)
}

/// Largest step-to-step growth of the L2 norm without data (should be <= 0).
fn energy_growth(disc: &Discretization) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let y0: Vec<f64> = disc
        .space
        .constrained
        .iter()
        .map(|&c| if c { 0.0 } else { rng.random_range(-1.0..1.0) })
        .collect();
    let zero = vec![0.0; disc.n_dofs()];
    let traj = forward_steps(disc, y0, |_, _| {}, |_| zero.clone()).expect("forward");
    let norms: Vec<f64> = traj.steps.iter().map(|y| disc.mass.quad_form(y, y)).collect();
    norms.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
}

/// Largest enrichment value at a mesh node over all enriched elements.
fn enrichment_at_nodes(disc: &Discretization) -> f64 {
    let space = &disc.space;
    let mut worst: f64 = 0.0;
    for e in 0..space.mesh.num_elements() {
        if !space.is_enriched_element(e) {
            continue;
        }
        for k in space.mesh.elements[e] {
            let x = space.mesh.nodes[k];
            let b = space.eval_at(e, x, space.point_side(e, x));
            for v in &b.values[3..] {
                worst = worst.max(v.abs());
            }
        }
    }
    worst
}

fn galerkin_defect(disc: &Discretization) -> f64 {
    let beta = disc.problem.beta;
    let w = |x: Vec2, _: Side| (2.0 * x.x).sin() * x.y.cos() + x.y;
    let gw = |x: Vec2, _: Side| Vec2::new(2.0 * (2.0 * x.x).cos() * x.y.cos(), 1.0 - (2.0 * x.x).sin() * x.y.sin());
    let r = elliptic_projection(&disc.space, &disc.caches, &disc.stiffness, beta, w, gw).expect("projection");
    let load = &disc.caches.load;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let v: Vec<f64> = disc
            .space
            .constrained
            .iter()
            .map(|&c| if c { 0.0 } else { rng.random_range(-1.0..1.0) })
            .collect();
        let awv: f64 = load
            .points
            .iter()
            .enumerate()
            .map(|(q, p)| p.weight * beta[p.side.index()] * gw(p.x, p.side).dot(&load.eval_grad(&v, q)))
            .sum();
        let arv = disc.stiffness.quad_form(&v, &r);
        worst = worst.max((awv - arv).abs() / awv.abs().max(1.0));
    }
    worst
}

/// Manufactured data checks on the circle: continuity of the state, the
/// adjoint and the adjoint flux across the interface, and the adjoint
/// equation `-p_t - div(beta grad p) = y - y_d` by central differences.
fn manufactured_defects(p: &ProblemSpec) -> (f64, f64) {
    let mut jump: f64 = 0.0;
    let mut source: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let th = rng.random_range(0.0..std::f64::consts::TAU);
        let t = rng.random_range(0.05..0.95);
        let x = Vec2::new(th.cos(), th.sin()) * 0.5;
        let n = p.interface.normal(x);
        let [ym, yp] = [Side::Minus, Side::Plus].map(|s| p.exact_state(x, s, t).expect("exact"));
        let [pm, pp] = [Side::Minus, Side::Plus].map(|s| p.exact_adjoint(x, s, t).expect("exact"));
        let flux = p.beta[0] * pm.grad.dot(&n) - p.beta[1] * pp.grad.dot(&n);
        jump = jump.max((ym.value - yp.value).abs()).max((pm.value - pp.value).abs()).max(flux.abs());

        let y = Vec2::new(rng.random_range(-0.95..0.95), rng.random_range(-0.95..0.95));
        if (y.norm() - 0.5).abs() < 0.05 {
            continue;
        }
        let side = p.interface.side(y, 0.0);
        let h = 1e-4;
        let pv = |z: Vec2, s: f64| p.exact_adjoint(z, side, s).expect("exact").value;
        let p_t = (pv(y, t + h) - pv(y, t - h)) / (2.0 * h);
        let lap = (pv(y + Vec2::new(h, 0.0), t) + pv(y - Vec2::new(h, 0.0), t) + pv(y + Vec2::new(0.0, h), t)
            + pv(y - Vec2::new(0.0, h), t)
            - 4.0 * pv(y, t))
            / (h * h);
        let lhs = -p_t - p.beta[side.index()] * lap;
        let rhs = p.exact_state(y, side, t).expect("exact").value - p.y_d(y, side, t);
        source = source.max((lhs - rhs).abs() / rhs.abs().max(1.0));
    }
    (jump, source)
}

#[test]
fn criterion_7_property_suite() {
    let start = std::time::Instant::now();
    let disc = Discretization::new(example1(1.0, 10.0), 8, 8).expect("setup");
    let constrained = Discretization::new(example2(true, 1.0, 10.0), 8, 4).expect("setup");
    let flower = Discretization::new(example3(1.0, 10.0), 16, 1).expect("setup");
    let mut details = Vec::new();
    let mut pass = true;
    let mut check = |name: &str, value: f64, ok: bool| {
        pass &= ok;
        details.push(format!("{name}: {value:.3e}{}", if ok { "" } else { "  (FAILED)" }));
    };

    let d = duality_defect(&disc);
    check("duality identity, worst relative defect over 5 seeds (<= 1e-10)", d, d <= 1e-10);
    let g = gradient_defect(&disc);
    check("reduced gradient vs central differences (<= 1e-5)", g, g <= 1e-5);
    let (idem, excess) = projection_defects(&constrained);
    check("projection idempotence (exact)", idem, idem == 0.0);
    check("projection nonexpansiveness excess (<= 1e-12)", excess, excess <= 1e-12);
    let growth = energy_growth(&disc);
    check("largest per-step energy growth without data (<= 0)", growth, growth <= 0.0);
    for (name, d) in [("circle", &disc), ("flower", &flower)] {
        let v = enrichment_at_nodes(d);
        check(&format!("enrichment at nodes, {name} (<= 1e-14)"), v, v <= 1e-14);
        let ones = d.space.standard_ones();
        let mass = d.mass.quad_form(&ones, &ones);
        check(&format!("standard-block mass sum - 4, {name} (<= 1e-12)"), mass - 4.0, (mass - 4.0).abs() <= 1e-12);
        let kernel = d.stiffness.mul_vec(&ones).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        check(&format!("stiffness on constants, {name} (<= 1e-12)"), kernel, kernel <= 1e-12);
        let o = galerkin_defect(d);
        check(&format!("elliptic projection Galerkin orthogonality, {name} (<= 1e-9)"), o, o <= 1e-9);
    }
    let (jump, source) = manufactured_defects(&disc.problem);
    check("interface continuity of y, p and the adjoint flux (<= 1e-8)", jump, jump <= 1e-8);
    check("adjoint equation by central differences (<= 1e-5)", source, source <= 1e-5);
    let secs = start.elapsed().as_secs_f64();
    check("runtime in seconds (<= 120)", secs, secs <= 120.0);
    report("7", "property suite", pass, &details);
    assert!(pass);
}

#[test]
fn criterion_8_elliptic_projection_rate() {
    let p = example1(1.0, 10.0);
    let mut errs = Vec::new();
    let mut details = Vec::new();
    for n in [8, 16, 32] {
        let disc = Discretization::new(p.clone(), n, 1).expect("setup");
        let r = disc.initial_state().expect("projection");
        let traj = Trajectory {
            role: Role::State,
            steps: vec![r.clone(), r],
        };
        let e = l2_space_time_error(&disc, &traj, |x, s, _| p.y0(x, s).0);
        details.push(format!("N={n}: ||y0 - R_h y0|| = {e:.4e}"));
        errs.push(e);
    }
    let orders = eoc(&errs, &[0.25, 0.125, 0.0625]).expect("positive errors");
    let pass = orders.iter().all(|&o| o >= 1.8);
    details.push(format!("orders {orders:.4?} (need >= 1.8)"));
    report("8", "elliptic projection of the Example 1 initial state", pass, &details);
    assert!(pass);
}
