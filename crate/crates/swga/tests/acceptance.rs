//! Acceptance suite: every criterion printed as one pass/fail line
//! (run with `cargo test --test acceptance -- --nocapture` to see them).

use std::f64::consts::PI;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use swga::assembly::{assemble, trace_gap_cost, GalerkinSystem, NoiseModel};
use swga::sim::{
    baseline_controller, empirical_step_drift, expected_step_drift, monte_carlo_costs, SimConfig,
};
use swga::so3::{from_zyz, EulerZyz, Mat3, Rotation, Vec3};
use swga::solver::{
    control, policy_iteration, weak_hjb_residual, FeedbackPolicy, PolicyCoefficients, SolveResult,
    SolverConfig,
};
use swga::verify;

const L_MAX: u32 = 3;
const EPSILON: f64 = 1e-10;
const SIM_SEED: u64 = 424242;

fn control_weight() -> Mat3 {
    Mat3::identity() * 0.5
}

fn initial_rotation() -> Rotation {
    from_zyz(EulerZyz::new(PI, PI / 3.0, 2.0 * PI / 3.0))
}

struct Solved {
    sys: GalerkinSystem,
    out: SolveResult,
    assembly_and_solve: Duration,
}

fn solved_gamma(gamma: f64) -> &'static Solved {
    static GAMMA1: OnceLock<Solved> = OnceLock::new();
    static GAMMA_LOW: OnceLock<Solved> = OnceLock::new();
    let cell = if gamma == 1.0 {
        &GAMMA1
    } else {
        assert_eq!(gamma, 0.05f64.sqrt());
        &GAMMA_LOW
    };
    cell.get_or_init(|| {
        let start = Instant::now();
        let sys = assemble(
            L_MAX,
            &NoiseModel::isotropic(gamma),
            &control_weight(),
            trace_gap_cost,
            EPSILON,
        )
        .expect("assembly");
        let out = policy_iteration(&sys, &SolverConfig::default()).expect("policy iteration");
        Solved { sys, out, assembly_and_solve: start.elapsed() }
    })
}

fn report(criterion: &str, pass: bool, detail: String) {
    println!("criterion {criterion}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {criterion} failed: {detail}");
}

#[test]
fn criterion_01_pair_integral_orthogonality() {
    let start = Instant::now();
    let suite = verify::pair_integral_suite(3);
    let elapsed = start.elapsed();
    report(
        "01 pair-integral orthogonality",
        suite.passed() && elapsed < Duration::from_secs(10),
        format!("max |closed - quadrature| = {:.3e} over {} pairs in {elapsed:.2?}", suite.max_error, suite.cases),
    );
}

#[test]
fn criterion_02_triple_integral_reproduction() {
    let start = Instant::now();
    let suite = verify::triple_integral_suite(2, 500, 2024, 0.0);
    let elapsed = start.elapsed();
    report(
        "02 triple-integral reproduction",
        suite.passed() && elapsed < Duration::from_secs(30),
        format!("max |closed - quadrature| = {:.3e} over {} triples in {elapsed:.2?}", suite.max_error, suite.cases),
    );
}

#[test]
fn criterion_03_lie_derivative_finite_differences() {
    let suite = verify::lie_derivative_fd_suite(3, 50, 7);
    report(
        "03 Lie-derivative correctness",
        suite.passed(),
        format!("max relative error = {:.3e} over {} evaluations", suite.max_error, suite.cases),
    );
}

#[test]
fn criterion_04_integration_by_parts() {
    let suite = verify::integration_by_parts_suite(2);
    report(
        "04 integration-by-parts antisymmetry",
        suite.passed(),
        format!("max |<Lf,g> + <f,Lg>| = {:.3e} over {} cases", suite.max_error, suite.cases),
    );
}

#[test]
fn criterion_05_a1_structure() {
    let sym = verify::a1_symmetry_suite(3);
    let nsd = verify::a1_semidefinite_suite(3);
    report(
        "05 A1 structure",
        sym.passed() && nsd.passed(),
        format!("symmetry defect = {:.3e}, max eigenvalue = {:.3e}", sym.max_error, nsd.max_error),
    );
}

#[test]
fn criterion_06_convergence_in_iterations() {
    let solved = solved_gamma(1.0);
    let iters = solved.out.history.len();
    let last = solved.out.history.last().map_or(f64::INFINITY, |r| r.update_norm);
    report(
        "06 convergence within 30 iterations",
        solved.out.converged && iters <= 30 && solved.assembly_and_solve < Duration::from_secs(60),
        format!(
            "converged = {}, iterations = {iters}, final update = {last:.3e}, assembly+solve = {:.2?}",
            solved.out.converged, solved.assembly_and_solve
        ),
    );
}

#[test]
fn criterion_07_weak_hjb_residual() {
    let solved = solved_gamma(1.0);
    let res = weak_hjb_residual(&solved.sys, &solved.out.theta).expect("residual");
    report(
        "07 fixed-point weak residual",
        res.amax() <= 1e-6,
        format!("max |component| = {:.3e} over {} test functions", res.amax(), res.len()),
    );
}

#[test]
fn criterion_08_basis_sweep_trend() {
    let solved = solved_gamma(1.0);
    let sys = &solved.sys;
    let basis = sys.basis();
    let r0 = initial_rotation();

    let norm_at = |n_pairs: usize, warm: Option<&DVector<f64>>| -> Option<f64> {
        let sub = sys.truncate(n_pairs);
        let cfg = SolverConfig {
            theta0: warm.map(|t| {
                let mut v = DVector::zeros(sub.dim());
                let keep = t.len().min(sub.dim());
                v.rows_mut(0, keep).copy_from(&t.rows(0, keep));
                v
            }),
            ..SolverConfig::default()
        };
        let out = policy_iteration(&sub, &cfg).ok()?;
        if !out.converged {
            return None;
        }
        let mut padded = DVector::zeros(basis.len());
        padded.rows_mut(0, sub.dim()).copy_from(&out.theta.0);
        let u = control(basis, &PolicyCoefficients(padded), sys.w(), &r0).ok()?;
        Some(u.norm())
    };

    let full = norm_at(84, None).expect("full basis solve");
    let prev = norm_at(83, None)
        .or_else(|| norm_at(83, Some(&solved.out.theta.0)))
        .expect("N = 83 solve");
    let delta = (full - prev).abs();
    report(
        "08 basis-sweep trend",
        delta < 1e-3,
        format!("|u_84(R0)| = {full:.6}, |u_83(R0)| = {prev:.6}, delta = {delta:.3e}"),
    );
}

fn sim_config(gamma: f64, seed: u64) -> SimConfig {
    SimConfig {
        r0: initial_rotation(),
        t0: 20.0,
        dt: 0.01,
        noise: NoiseModel::isotropic(gamma),
        w: control_weight(),
        n_runs: 20,
        seed,
    }
}

#[test]
fn criterion_09_low_noise_stabilization() {
    let gamma = 0.05f64.sqrt();
    let solved = solved_gamma(gamma);
    assert!(solved.out.converged, "low-noise solve did not converge");
    let policy = FeedbackPolicy::new(solved.sys.basis().clone(), &solved.out.theta, solved.sys.w())
        .expect("policy");
    let curves = monte_carlo_costs(&policy, &sim_config(gamma, SIM_SEED)).expect("simulation");
    let final_cost = *curves.mean_l.last().unwrap();
    let initial_cost = curves.mean_l[0];
    report(
        "09 low-noise stabilization",
        final_cost < 0.2 && final_cost < 0.05 * initial_cost,
        format!("mean l at t=20: {final_cost:.4}, initial: {initial_cost:.4}, ratio {:.3}%", 100.0 * final_cost / initial_cost),
    );
}

#[test]
fn criterion_10_high_noise_control_effort() {
    let solved = solved_gamma(1.0);
    let policy = FeedbackPolicy::new(solved.sys.basis().clone(), &solved.out.theta, solved.sys.w())
        .expect("policy");
    let curves = monte_carlo_costs(&policy, &sim_config(1.0, SIM_SEED + 1)).expect("simulation");
    let avg = curves.window_average_ucost(10.0, 20.0);
    report(
        "10 high-noise control effort",
        (2.0..=4.0).contains(&avg),
        format!("time-average of mean |u|^2_W over [10, 20] = {avg:.4}"),
    );
}

#[test]
fn criterion_11_pinning_drift() {
    let r = initial_rotation();
    let noise = NoiseModel::isotropic(1.0);
    let (mean, se) = empirical_step_drift(&r, Vec3::zeros(), &noise, 1e-3, 1_000_000, SIM_SEED + 2);
    let expect = expected_step_drift(&r, Vec3::zeros(), &noise);
    // the Ito drift at sigma = I, u = 0 is exactly -R
    assert!((expect + r.matrix()).norm() < 1e-13);
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for i in 0..3 {
        for j in 0..3 {
            let z = (mean[(i, j)] - expect[(i, j)]).abs() / se[(i, j)];
            worst = worst.max(z);
            ok &= z <= 3.0;
        }
    }
    report(
        "11 pinning-drift consistency",
        ok,
        format!("worst componentwise deviation = {worst:.2} standard errors"),
    );
}

#[test]
fn criterion_12_baseline_contrast() {
    let solved = solved_gamma(1.0);
    let policy = FeedbackPolicy::new(solved.sys.basis().clone(), &solved.out.theta, solved.sys.w())
        .expect("policy");
    let cfg = sim_config(1.0, SIM_SEED + 3);
    let swga_curves = monte_carlo_costs(&policy, &cfg).expect("swga simulation");
    let baseline = baseline_controller(1.0);
    let base_curves = monte_carlo_costs(&baseline, &cfg).expect("baseline simulation");
    let swga_avg = swga_curves.window_average_l(10.0, 20.0);
    let base_avg = base_curves.window_average_l(10.0, 20.0);
    let ratio = base_avg / swga_avg;
    report(
        "12 baseline contrast",
        ratio >= 1.5,
        format!("baseline mean l over [10,20] = {base_avg:.4}, policy = {swga_avg:.4}, ratio = {ratio:.2}"),
    );
}
