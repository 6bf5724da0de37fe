//! Geometric simulation of the stochastic attitude kinematics under a
//! feedback policy, with Monte-Carlo cost statistics.
//!
//! The integrator is the exponential (Lie-Euler) update
//! `R <- R exp(S(u dt + sum_k sigma_k dW_k))`, which stays on the group
//! exactly and whose Ito expansion reproduces the pinning drift
//! `-1/2 R Sigma dt` automatically.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::assembly::NoiseModel;
use crate::error::{Error, Result};
use crate::so3::{exp_so3, skew, unskew, Mat3, Rotation, Vec3};
use crate::solver::FeedbackPolicy;

/// A feedback law evaluated along trajectories.
pub trait Policy: Sync {
    fn control(&self, r: &Rotation) -> Vec3;
}

impl<F: Fn(&Rotation) -> Vec3 + Sync> Policy for F {
    fn control(&self, r: &Rotation) -> Vec3 {
        self(r)
    }
}

impl Policy for FeedbackPolicy {
    fn control(&self, r: &Rotation) -> Vec3 {
        // basis evaluation cannot fail on a valid rotation
        FeedbackPolicy::control(self, r).expect("policy evaluation")
    }
}

/// Simulation parameters; the noise model is already scaled by the desired
/// intensity.
#[derive(Clone, Debug)]
pub struct SimConfig {
    pub r0: Rotation,
    pub t0: f64,
    pub dt: f64,
    pub noise: NoiseModel,
    pub w: Mat3,
    pub n_runs: usize,
    pub seed: u64,
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!("dt = {} must be positive", self.dt)));
        }
        if self.t0 < self.dt {
            return Err(Error::InvalidConfig(format!(
                "horizon t0 = {} shorter than one step dt = {}",
                self.t0, self.dt
            )));
        }
        if self.n_runs == 0 {
            return Err(Error::InvalidConfig("n_runs must be at least 1".into()));
        }
        Ok(())
    }

    fn n_steps(&self) -> usize {
        (self.t0 / self.dt).round() as usize
    }
}

/// One realized path: states, controls and both cost integrands on the time
/// grid.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Rotation>,
    pub controls: Vec<Vec3>,
    pub running_costs: Vec<f64>,
    pub control_costs: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest orthogonality defect along the path.
    pub fn max_orthogonality_defect(&self) -> f64 {
        self.states.iter().map(|r| r.orthogonality_defect()).fold(0.0, f64::max)
    }

    /// CSV with the nine rotation entries in column-major order.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,r11,r21,r31,r12,r22,r32,r13,r23,r33,u1,u2,u3,cost_l,cost_u")?;
        for i in 0..self.len() {
            let m = self.states[i].matrix();
            write!(out, "{:.16e}", self.times[i])?;
            for col in 0..3 {
                for row in 0..3 {
                    write!(out, ",{:.16e}", m[(row, col)])?;
                }
            }
            let u = self.controls[i];
            writeln!(
                out,
                ",{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                u.x, u.y, u.z, self.running_costs[i], self.control_costs[i]
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_csv(&mut out)?;
        out.flush()?;
        Ok(())
    }
}

/// Per-time-step mean and standard error of the running and control costs
/// across runs.
#[derive(Clone, Debug)]
pub struct CostCurves {
    pub times: Vec<f64>,
    pub mean_l: Vec<f64>,
    pub se_l: Vec<f64>,
    pub mean_ucost: Vec<f64>,
    pub se_ucost: Vec<f64>,
}

impl CostCurves {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,mean_l,se_l,mean_ucost,se_ucost")?;
        for i in 0..self.times.len() {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.times[i], self.mean_l[i], self.se_l[i], self.mean_ucost[i], self.se_ucost[i]
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_csv(&mut out)?;
        out.flush()?;
        Ok(())
    }

    /// Mean of `mean_l` over the window `[t_lo, t_hi]`.
    pub fn window_average_l(&self, t_lo: f64, t_hi: f64) -> f64 {
        window_average(&self.times, &self.mean_l, t_lo, t_hi)
    }

    /// Mean of `mean_ucost` over the window `[t_lo, t_hi]`.
    pub fn window_average_ucost(&self, t_lo: f64, t_hi: f64) -> f64 {
        window_average(&self.times, &self.mean_ucost, t_lo, t_hi)
    }
}

fn window_average(times: &[f64], values: &[f64], t_lo: f64, t_hi: f64) -> f64 {
    let mut acc = 0.0;
    let mut count = 0usize;
    for (t, v) in times.iter().zip(values) {
        if *t >= t_lo - 1e-12 && *t <= t_hi + 1e-12 {
            acc += v;
            count += 1;
        }
    }
    acc / count.max(1) as f64
}

/// One Stratonovich-consistent exponential step.
///
/// `dw` carries the three Brownian increments of the step; the update is
/// `R exp(S(u dt + sum_k sigma_k dw_k))`.
pub fn lie_euler_step(r: &Rotation, u: Vec3, noise: &NoiseModel, dt: f64, dw: Vec3) -> Rotation {
    let increment = u * dt + noise.sigma().transpose() * dw;
    *r * exp_so3(increment)
}

/// The stabilization running cost `l(R) = 3 - tr(R)`, zero exactly at the
/// identity.
pub fn running_cost(r: &Rotation) -> f64 {
    3.0 - r.trace()
}

/// `u^T W u`.
pub fn control_cost(u: Vec3, w: &Mat3) -> f64 {
    (u.transpose() * w * u)[(0, 0)]
}

/// Generic deterministic baseline: the axis-angle proportional law
/// `u(R) = -k unskew((R - R^T)/2)`.
pub fn baseline_controller(gain: f64) -> impl Fn(&Rotation) -> Vec3 + Sync {
    move |r: &Rotation| {
        let m = r.matrix();
        let anti = (m - m.transpose()) * 0.5;
        -gain * unskew(&anti).expect("antisymmetric part")
    }
}

/// Simulates one run; `(seed, run_index)` fully determines the path through
/// a dedicated counter-indexed stream of the generator.
pub fn simulate<P: Policy + ?Sized>(
    policy: &P,
    cfg: &SimConfig,
    run_index: u64,
) -> Result<Trajectory> {
    cfg.validate()?;
    let n_steps = cfg.n_steps();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(run_index);
    let sqrt_dt = cfg.dt.sqrt();

    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut controls = Vec::with_capacity(n_steps + 1);
    let mut running_costs = Vec::with_capacity(n_steps + 1);
    let mut control_costs = Vec::with_capacity(n_steps + 1);

    let mut r = cfg.r0;
    for step in 0..=n_steps {
        let u = policy.control(&r);
        if !u.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteControl { step });
        }
        times.push(step as f64 * cfg.dt);
        states.push(r);
        controls.push(u);
        running_costs.push(running_cost(&r));
        control_costs.push(control_cost(u, &cfg.w));
        if step < n_steps {
            let dw = Vec3::new(
                sqrt_dt * rng.sample::<f64, _>(StandardNormal),
                sqrt_dt * rng.sample::<f64, _>(StandardNormal),
                sqrt_dt * rng.sample::<f64, _>(StandardNormal),
            );
            r = lie_euler_step(&r, u, &cfg.noise, cfg.dt, dw);
        }
    }
    Ok(Trajectory { times, states, controls, running_costs, control_costs })
}

/// Runs the Monte-Carlo batch and aggregates per-step cost statistics.
///
/// Runs execute in parallel but are reduced in run order, so the output is
/// independent of scheduling.
pub fn monte_carlo_costs<P: Policy + ?Sized>(policy: &P, cfg: &SimConfig) -> Result<CostCurves> {
    cfg.validate()?;
    let per_run: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..cfg.n_runs as u64)
        .into_par_iter()
        .map(|run| {
            let traj = simulate(policy, cfg, run)?;
            Ok((traj.running_costs, traj.control_costs))
        })
        .collect();

    let n = cfg.n_steps() + 1;
    let runs = cfg.n_runs as f64;
    let mut l_samples = vec![Vec::with_capacity(cfg.n_runs); n];
    let mut u_samples = vec![Vec::with_capacity(cfg.n_runs); n];
    for (run, outcome) in per_run.into_iter().enumerate() {
        let (l, u) = outcome.map_err(|e| {
            Error::InvalidConfig(format!("simulation run {run} failed: {e}"))
        })?;
        for i in 0..n {
            l_samples[i].push(l[i]);
            u_samples[i].push(u[i]);
        }
    }

    let stats = |samples: &[Vec<f64>]| {
        let mut means = Vec::with_capacity(n);
        let mut ses = Vec::with_capacity(n);
        for s in samples {
            let mean = s.iter().sum::<f64>() / runs;
            let se = if s.len() > 1 {
                let var = s.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
                    / (runs - 1.0);
                (var / runs).sqrt()
            } else {
                0.0
            };
            means.push(mean);
            ses.push(se);
        }
        (means, ses)
    };
    let (mean_l, se_l) = stats(&l_samples);
    let (mean_ucost, se_ucost) = stats(&u_samples);
    let times = (0..n).map(|i| i as f64 * cfg.dt).collect();
    Ok(CostCurves { times, mean_l, se_l, mean_ucost, se_ucost })
}

/// Empirical single-step drift `E[(R' - R)/dt]`, with the componentwise
/// standard error of the estimate; Monte-Carlo oracle for the Ito form.
pub fn empirical_step_drift(
    r: &Rotation,
    u: Vec3,
    noise: &NoiseModel,
    dt: f64,
    samples: usize,
    seed: u64,
) -> (Mat3, Mat3) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sqrt_dt = dt.sqrt();
    let mut sum = Mat3::zeros();
    let mut sum_sq = Mat3::zeros();
    for _ in 0..samples {
        let dw = Vec3::new(
            sqrt_dt * rng.sample::<f64, _>(StandardNormal),
            sqrt_dt * rng.sample::<f64, _>(StandardNormal),
            sqrt_dt * rng.sample::<f64, _>(StandardNormal),
        );
        let next = lie_euler_step(r, u, noise, dt, dw);
        let rate = (next.matrix() - r.matrix()) / dt;
        sum += rate;
        sum_sq += rate.component_mul(&rate);
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean.component_mul(&mean)) * (n / (n - 1.0));
    let se = (var / n).map(f64::sqrt);
    (mean, se)
}

/// Ito drift of the exponential scheme: `R S(u) - 1/2 R Sigma`.
pub fn expected_step_drift(r: &Rotation, u: Vec3, noise: &NoiseModel) -> Mat3 {
    r.matrix() * skew(u) - r.matrix() * noise.pinning_matrix() * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::{from_zyz, EulerZyz};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn zero_policy() -> impl Fn(&Rotation) -> Vec3 + Sync {
        |_: &Rotation| Vec3::zeros()
    }

    fn test_cfg(noise: NoiseModel, n_runs: usize) -> SimConfig {
        SimConfig {
            r0: from_zyz(EulerZyz::new(PI, PI / 3.0, 2.0 * PI / 3.0)),
            t0: 1.0,
            dt: 0.01,
            noise,
            w: Mat3::identity() * 0.5,
            n_runs,
            seed: 99,
        }
    }

    #[test]
    fn step_without_noise_or_control_is_identity() {
        let r = from_zyz(EulerZyz::new(0.3, 1.0, 2.2));
        let next = lie_euler_step(&r, Vec3::zeros(), &NoiseModel::isotropic(1.0), 0.01, Vec3::zeros());
        assert_eq!(next.matrix(), r.matrix());
    }

    #[test]
    fn step_without_noise_is_geodesic() {
        let r = from_zyz(EulerZyz::new(0.3, 1.0, 2.2));
        let u = Vec3::new(0.4, -0.2, 0.9);
        let next = lie_euler_step(&r, u, &NoiseModel::zero(), 0.01, Vec3::zeros());
        let geo = crate::so3::geodesic_step(&r, u, 0.01);
        assert_abs_diff_eq!(next.matrix(), geo.matrix(), epsilon = 1e-15);
    }

    #[test]
    fn single_step_drift_matches_ito_form() {
        // two distinct (u, sigma) settings, three standard errors
        let r = from_zyz(EulerZyz::new(1.1, 0.7, 0.4));
        let cases = [
            (Vec3::zeros(), NoiseModel::isotropic(1.0), 11u64),
            (Vec3::new(0.5, -0.3, 0.2), NoiseModel::isotropic(0.5), 12u64),
        ];
        for (u, noise, seed) in cases {
            let (mean, se) = empirical_step_drift(&r, u, &noise, 1e-3, 1_000_000, seed);
            let expect = expected_step_drift(&r, u, &noise);
            for i in 0..3 {
                for j in 0..3 {
                    let tol = 3.0 * se[(i, j)] + 1e-12;
                    assert!(
                        (mean[(i, j)] - expect[(i, j)]).abs() <= tol,
                        "drift ({i},{j}): {} vs {} (se {})",
                        mean[(i, j)],
                        expect[(i, j)],
                        se[(i, j)]
                    );
                }
            }
        }
    }

    #[test]
    fn pinning_drift_at_unit_isotropic_noise_is_minus_r() {
        // Sigma = 2 I, so the drift at u = 0 is exactly -R
        let r = from_zyz(EulerZyz::new(0.2, 0.9, 1.5));
        let expect = expected_step_drift(&r, Vec3::zeros(), &NoiseModel::isotropic(1.0));
        assert_abs_diff_eq!(expect, -r.matrix(), epsilon = 1e-14);
    }

    #[test]
    fn noiseless_zero_policy_stays_put() {
        let cfg = test_cfg(NoiseModel::zero(), 1);
        let traj = simulate(&zero_policy(), &cfg, 0).unwrap();
        assert_eq!(traj.len(), 101);
        for r in &traj.states {
            assert_abs_diff_eq!(r.matrix(), cfg.r0.matrix(), epsilon = 1e-15);
        }
    }

    #[test]
    fn trajectories_are_seed_deterministic() {
        let cfg = test_cfg(NoiseModel::isotropic(0.7), 3);
        let a = simulate(&zero_policy(), &cfg, 1).unwrap();
        let b = simulate(&zero_policy(), &cfg, 1).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            assert_eq!(x.matrix(), y.matrix());
        }
        // different run indices decorrelate
        let c = simulate(&zero_policy(), &cfg, 2).unwrap();
        assert_ne!(a.states[50].matrix(), c.states[50].matrix());
    }

    #[test]
    fn group_preservation_along_long_paths() {
        let cfg = SimConfig { t0: 20.0, ..test_cfg(NoiseModel::isotropic(1.0), 1) };
        let traj = simulate(&zero_policy(), &cfg, 0).unwrap();
        assert_eq!(traj.len(), 2001);
        assert!(traj.max_orthogonality_defect() < 1e-10);
    }

    #[test]
    fn running_cost_reference_values() {
        assert_eq!(running_cost(&Rotation::identity()), 0.0);
        // half-turn about e3: trace = -1
        assert_abs_diff_eq!(
            running_cost(&from_zyz(EulerZyz::new(PI, 0.0, 0.0))),
            4.0,
            epsilon = 1e-12
        );
        for theta in [0.3, 1.2, 2.8] {
            let r = exp_so3(Vec3::new(0.0, theta, 0.0));
            assert_abs_diff_eq!(running_cost(&r), 2.0 * (1.0 - theta.cos()), epsilon = 1e-12);
            assert!(running_cost(&r) >= 0.0);
        }
    }

    #[test]
    fn non_finite_control_is_reported() {
        let cfg = test_cfg(NoiseModel::zero(), 1);
        let bad = |_: &Rotation| Vec3::new(f64::NAN, 0.0, 0.0);
        match simulate(&bad, &cfg, 0) {
            Err(Error::NonFiniteControl { step: 0 }) => {}
            other => panic!("expected NonFiniteControl, got {other:?}"),
        }
    }

    #[test]
    fn cost_curves_basics() {
        // single run has zero standard error
        let cfg = test_cfg(NoiseModel::isotropic(0.5), 1);
        let curves = monte_carlo_costs(&zero_policy(), &cfg).unwrap();
        assert!(curves.se_l.iter().all(|v| *v == 0.0));
        assert!(curves.se_ucost.iter().all(|v| *v == 0.0));

        // zero noise, zero policy: flat at l(R0)
        let cfg = test_cfg(NoiseModel::zero(), 4);
        let curves = monte_carlo_costs(&zero_policy(), &cfg).unwrap();
        let l0 = running_cost(&cfg.r0);
        for (m, s) in curves.mean_l.iter().zip(&curves.se_l) {
            assert_abs_diff_eq!(*m, l0, epsilon = 1e-12);
            assert_abs_diff_eq!(*s, 0.0, epsilon = 1e-13);
        }
        assert!(curves.mean_ucost.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn curves_are_parallel_reduction_deterministic() {
        let cfg = test_cfg(NoiseModel::isotropic(1.0), 8);
        let a = monte_carlo_costs(&zero_policy(), &cfg).unwrap();
        let b = monte_carlo_costs(&zero_policy(), &cfg).unwrap();
        assert_eq!(a.mean_l, b.mean_l);
        assert_eq!(a.se_ucost, b.se_ucost);
    }

    #[test]
    fn baseline_controller_cases() {
        let k1 = baseline_controller(1.0);
        assert_eq!(k1(&Rotation::identity()), Vec3::zeros());
        // quarter turn about e3 gives -sin(pi/2) e3 = -e3
        let u = k1(&from_zyz(EulerZyz::new(PI / 2.0, 0.0, 0.0)));
        assert_abs_diff_eq!(u.x, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(u.y, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(u.z, -1.0, epsilon = 1e-12);
        // small-angle linearization u ~ -k theta e
        let k2 = baseline_controller(2.0);
        let theta = 1e-4;
        let u = k2(&exp_so3(Vec3::new(0.0, 0.0, theta)));
        assert_abs_diff_eq!(u.z, -2.0 * theta, epsilon = 1e-10);
    }

    #[test]
    fn trajectory_csv_layout() {
        let cfg = SimConfig { t0: 0.02, ..test_cfg(NoiseModel::zero(), 1) };
        let traj = simulate(&zero_policy(), &cfg, 0).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,r11,r21,r31,r12,r22,r32,r13,r23,r33,u1,u2,u3,cost_l,cost_u"
        );
        assert_eq!(lines.count(), 3);
        // column-major state layout: r21 is the second numeric column
        let first = text.lines().nth(1).unwrap();
        let cols: Vec<&str> = first.split(',').collect();
        assert_eq!(cols.len(), 15);
        let r21: f64 = cols[2].parse().unwrap();
        assert_abs_diff_eq!(r21, cfg.r0.matrix()[(1, 0)], epsilon = 1e-15);
    }
}
