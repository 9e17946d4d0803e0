//! Itô integration of the two-channel stochastic master equation.
//!
//! The Cartesian backend integrates all three Bloch coordinates with
//! Euler-Maruyama for arbitrary measurement axes, with residual Rabi
//! rotation and depolarization folded into the drift. The polar backend is
//! the exact free-diffusion path of the ideal, equal-strength XZ case.
//!
//! Euler-Maruyama does not respect the Bloch ball. A step that lands
//! outside it is projected back onto the sphere, and a pure state under
//! efficient measurement without depolarization is renormalized every
//! step, since the exact dynamics keep it pure.

mod store;

use rayon::prelude::*;

pub use store::{read_ensemble, read_ensemble_file, write_ensemble, write_ensemble_file};

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::state::{bloch_norm, BlochState, ChannelConfig, PolarState, QubitEnvironment, SimConfig, NORM_EPS};

/// Multiple of `dt * (1/tau_z + 1/tau_phi)` by which an Euler-Maruyama step
/// may overshoot the unit sphere before it is treated as an instability.
/// Smaller overshoots are projected back onto the sphere.
///
/// A pure state leaves the sphere by roughly `(n^2 - 1) dt / (2 tau)` per
/// channel each step; 32 corresponds to a normal draw beyond 8 sigma.
pub const OVERSHOOT_MARGIN: f64 = 32.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<BlochState>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> Option<&BlochState> {
        self.states.last()
    }
}

/// Time-averaged readouts, one per step, in units where the detector
/// response is 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutRecord {
    pub times: Vec<f64>,
    pub r_z: Vec<f64>,
    pub r_phi: Vec<f64>,
}

impl ReadoutRecord {
    pub fn empty() -> Self {
        ReadoutRecord {
            times: Vec::new(),
            r_z: Vec::new(),
            r_phi: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.r_z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_z.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub config: SimConfig,
    pub stream_ids: Vec<u64>,
    pub trajectories: Vec<Trajectory>,
    pub readouts: Option<Vec<ReadoutRecord>>,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Ensemble-averaged state at every grid point.
    pub fn mean_states(&self) -> Vec<BlochState> {
        let n = self.trajectories.first().map_or(0, |t| t.len());
        let m = self.len() as f64;
        (0..n)
            .map(|k| {
                let mut acc = [0.0; 3];
                for tr in &self.trajectories {
                    let q = tr.states[k];
                    acc[0] += q.x;
                    acc[1] += q.y;
                    acc[2] += q.z;
                }
                BlochState::new(acc[0] / m, acc[1] / m, acc[2] / m)
            })
            .collect()
    }
}

/// Which integrator produces the trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    #[default]
    Cartesian,
    Polar,
}

/// Deterministic part of `dq/dt`.
pub fn drift(q: &BlochState, z: &ChannelConfig, phi: &ChannelConfig, env: &QubitEnvironment) -> [f64; 3] {
    let mut v = [0.0; 3];
    // each channel dephases the components perpendicular to its axis
    for ch in [z, phi] {
        if !ch.is_active() {
            continue;
        }
        let n = ch.axis();
        let proj = n[0] * q.x + n[2] * q.z;
        v[0] += ch.gamma * (proj * n[0] - q.x);
        v[1] -= ch.gamma * q.y;
        v[2] += ch.gamma * (proj * n[2] - q.z);
    }
    let (g, w) = (env.depolarization_rate, env.rabi_detuning);
    v[0] += -g * q.x + w * q.z;
    v[1] += -g * q.y;
    v[2] += -g * q.z - w * q.x;
    v
}

/// Backaction vector multiplying the channel's white noise, including the
/// `1 / sqrt(tau)` strength.
pub fn noise_coefficients(q: &BlochState, ch: &ChannelConfig) -> [f64; 3] {
    if !ch.is_active() {
        return [0.0; 3];
    }
    let n = ch.axis();
    let proj = n[0] * q.x + n[2] * q.z;
    let s = ch.inv_tau().sqrt();
    [s * (n[0] - proj * q.x), -s * proj * q.y, s * (n[2] - proj * q.z)]
}

/// Upper bound on |q| for an accepted step.
pub fn overshoot_bound(cfg: &SimConfig) -> f64 {
    1.0 + NORM_EPS
        + OVERSHOOT_MARGIN * cfg.dt * (cfg.z_channel.inv_tau() + cfg.phi_channel.inv_tau())
}

/// One Euler-Maruyama step driven by two standard-normal draws.
pub fn ito_step(q: &BlochState, noise_z: f64, noise_phi: f64, cfg: &SimConfig) -> Result<BlochState> {
    advance(q, noise_z, noise_phi, cfg, 0)
}

fn advance(q: &BlochState, noise_z: f64, noise_phi: f64, cfg: &SimConfig, step: usize) -> Result<BlochState> {
    let dt = cfg.dt;
    let f = drift(q, &cfg.z_channel, &cfg.phi_channel, &cfg.environment);
    let gz = noise_coefficients(q, &cfg.z_channel);
    let gp = noise_coefficients(q, &cfg.phi_channel);
    let sq = dt.sqrt();
    let (wz, wp) = (sq * noise_z, sq * noise_phi);
    let mut next = BlochState::new(
        q.x + f[0] * dt + gz[0] * wz + gp[0] * wp,
        q.y + f[1] * dt + gz[1] * wz + gp[1] * wp,
        q.z + f[2] * dt + gz[2] * wz + gp[2] * wp,
    );
    let norm = bloch_norm(&next);
    if !norm.is_finite() || norm > overshoot_bound(cfg) {
        return Err(Error::Instability {
            step,
            stream: None,
            norm,
        });
    }
    // pure states stay pure under efficient measurement without depolarization
    let keep_pure = preserves_purity(cfg) && (bloch_norm(q) - 1.0).abs() <= NORM_EPS;
    if norm > 1.0 || (keep_pure && norm > 0.0) {
        next = BlochState::new(next.x / norm, next.y / norm, next.z / norm);
    }
    Ok(next)
}

fn preserves_purity(cfg: &SimConfig) -> bool {
    let efficient = |c: &ChannelConfig| !c.is_active() || c.eta == 1.0;
    efficient(&cfg.z_channel) && efficient(&cfg.phi_channel) && cfg.environment.depolarization_rate == 0.0
}

/// Readout averaged over one step: `Tr[sigma rho] + sqrt(tau/dt) * noise`.
///
/// `noise` must be the draw passed to [`ito_step`] for the same channel and
/// step. A switched-off channel has no finite readout and yields NaN.
pub fn synthesize_readout(q: &BlochState, noise: f64, channel: &ChannelConfig, dt: f64) -> f64 {
    if !channel.is_active() {
        return f64::NAN;
    }
    channel.expectation(q) + (channel.tau() / dt).sqrt() * noise
}

/// Free diffusion step of the polar angle.
pub fn polar_step(theta: PolarState, noise: f64, dt: f64, tau_m: f64) -> PolarState {
    PolarState(theta.0 + (dt / tau_m).sqrt() * noise)
}

fn draw_pair(rng: &mut StreamRng) -> (f64, f64) {
    let a = rng::normal(rng);
    let b = rng::normal(rng);
    (a, b)
}

/// Cartesian trajectory and the readouts that drove it.
pub fn simulate_trajectory(cfg: &SimConfig, stream_id: u64) -> Result<(Trajectory, ReadoutRecord)> {
    cfg.validate()?;
    let n = cfg.n_steps();
    let mut rng = rng::stream(cfg.rng_seed, stream_id);
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    let mut rec = ReadoutRecord {
        times: Vec::with_capacity(n),
        r_z: Vec::with_capacity(n),
        r_phi: Vec::with_capacity(n),
    };
    let mut q = cfg.initial_state;
    times.push(0.0);
    states.push(q);
    for k in 0..n {
        let (nz, np) = draw_pair(&mut rng);
        rec.times.push(cfg.time(k));
        rec.r_z.push(synthesize_readout(&q, nz, &cfg.z_channel, cfg.dt));
        rec.r_phi.push(synthesize_readout(&q, np, &cfg.phi_channel, cfg.dt));
        q = advance(&q, nz, np, cfg, k + 1).map_err(|e| e.with_stream(stream_id))?;
        times.push(cfg.time(k + 1));
        states.push(q);
    }
    Ok((Trajectory { times, states }, rec))
}

fn polar_start(cfg: &SimConfig) -> Result<(f64, f64)> {
    let tau = cfg.ideal_xz_tau().ok_or_else(|| {
        Error::domain("the polar integrator needs ideal, equal-strength XZ measurement")
    })?;
    let q = cfg.initial_state;
    if q.y.abs() > NORM_EPS || (bloch_norm(&q) - 1.0).abs() > 1e-9 {
        return Err(Error::domain("the polar integrator needs a pure initial state in the xz plane"));
    }
    Ok((q.x.atan2(q.z), tau))
}

/// Trajectory of the ideal XZ measurement integrated in the polar angle.
pub fn simulate_polar(cfg: &SimConfig, stream_id: u64) -> Result<Trajectory> {
    cfg.validate()?;
    let (theta0, tau) = polar_start(cfg)?;
    let n = cfg.n_steps();
    let mut rng = rng::stream(cfg.rng_seed, stream_id);
    let mut theta = PolarState(theta0);
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    times.push(0.0);
    states.push(theta.to_bloch());
    for k in 0..n {
        theta = polar_step(theta, rng::normal(&mut rng), cfg.dt, tau);
        times.push(cfg.time(k + 1));
        states.push(theta.to_bloch());
    }
    Ok(Trajectory { times, states })
}

/// States of one trajectory at the given (ascending) step indices, without
/// storing the rest of the path.
pub fn sample_path(
    cfg: &SimConfig,
    stream_id: u64,
    integrator: Integrator,
    steps: &[usize],
) -> Result<Vec<BlochState>> {
    let n = cfg.n_steps();
    let last = steps.iter().copied().max().unwrap_or(0);
    if last > n {
        return Err(Error::domain(format!("sample step {last} beyond the final step {n}")));
    }
    let mut out = vec![BlochState::default(); steps.len()];
    let mut order: Vec<usize> = (0..steps.len()).collect();
    order.sort_by_key(|&i| steps[i]);
    let mut next = 0;
    let mut emit = |k: usize, q: BlochState, next: &mut usize| {
        while *next < order.len() && steps[order[*next]] == k {
            out[order[*next]] = q;
            *next += 1;
        }
    };
    let mut rng = rng::stream(cfg.rng_seed, stream_id);
    match integrator {
        Integrator::Cartesian => {
            let mut q = cfg.initial_state;
            emit(0, q, &mut next);
            for k in 0..last {
                let (nz, np) = draw_pair(&mut rng);
                q = advance(&q, nz, np, cfg, k + 1).map_err(|e| e.with_stream(stream_id))?;
                emit(k + 1, q, &mut next);
            }
        }
        Integrator::Polar => {
            let (theta0, tau) = polar_start(cfg)?;
            let mut theta = PolarState(theta0);
            emit(0, theta.to_bloch(), &mut next);
            for k in 0..last {
                theta = polar_step(theta, rng::normal(&mut rng), cfg.dt, tau);
                emit(k + 1, theta.to_bloch(), &mut next);
            }
        }
    }
    Ok(out)
}

/// Cartesian ensemble for stream ids `0..count`, with readouts.
pub fn run_ensemble(cfg: &SimConfig, count: usize) -> Result<Ensemble> {
    run_ensemble_with(cfg, count, Integrator::Cartesian)
}

pub fn run_ensemble_with(cfg: &SimConfig, count: usize, integrator: Integrator) -> Result<Ensemble> {
    if count == 0 {
        return Err(Error::domain("ensemble must have at least one member"));
    }
    cfg.validate()?;
    let results: Vec<Result<(Trajectory, Option<ReadoutRecord>)>> = (0..count as u64)
        .into_par_iter()
        .map(|id| match integrator {
            Integrator::Cartesian => simulate_trajectory(cfg, id).map(|(t, r)| (t, Some(r))),
            Integrator::Polar => simulate_polar(cfg, id).map(|t| (t, None)),
        })
        .collect();
    let mut trajectories = Vec::with_capacity(count);
    let mut readouts = Vec::with_capacity(count);
    // first failure by stream id, independent of scheduling
    for r in results {
        let (t, rec) = r?;
        trajectories.push(t);
        if let Some(rec) = rec {
            readouts.push(rec);
        }
    }
    Ok(Ensemble {
        config: *cfg,
        stream_ids: (0..count as u64).collect(),
        trajectories,
        readouts: (integrator == Integrator::Cartesian).then_some(readouts),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::polar_to_bloch;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn xz_channels(g: f64) -> (ChannelConfig, ChannelConfig) {
        (ChannelConfig::z(g, 1.0).unwrap(), ChannelConfig::x(g, 1.0).unwrap())
    }

    #[test]
    fn drift_examples() {
        let g = 0.7;
        let env = QubitEnvironment::default();
        let (z, x) = xz_channels(g);
        let v = drift(&BlochState::new(0.0, 0.0, 1.0), &z, &x, &env);
        assert_abs_diff_eq!(v[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v[2], -g, epsilon = 1e-15);

        let v = drift(&BlochState::new(0.0, 1.0, 0.0), &z, &x, &env);
        assert_abs_diff_eq!(v[1], -2.0 * g, epsilon = 1e-15);
        assert_abs_diff_eq!(v[0], 0.0, epsilon = 1e-15);

        let phi0 = ChannelConfig::z(g, 1.0).unwrap();
        let v = drift(&BlochState::new(1.0, 0.0, 0.0), &z, &phi0, &env);
        assert_abs_diff_eq!(v[0], -2.0 * g, epsilon = 1e-15);
        assert_abs_diff_eq!(v[2], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn drift_matches_explicit_general_angle_formula() {
        let (gz, gp, phi) = (0.4, 1.1, 0.9_f64);
        let env = QubitEnvironment { rabi_detuning: 0.3, depolarization_rate: 0.05 };
        let z = ChannelConfig::z(gz, 0.8).unwrap();
        let p = ChannelConfig::new(phi, gp, 0.6).unwrap();
        let q = BlochState::new(0.3, -0.2, 0.5);
        let v = drift(&q, &z, &p, &env);
        let (s2, c) = ((2.0 * phi).sin(), phi.cos());
        let ex = -(gz + gp * c * c) * q.x + gp * s2 / 2.0 * q.z - 0.05 * q.x + 0.3 * q.z;
        let ey = -(gz + gp) * q.y - 0.05 * q.y;
        let ez = -gp * phi.sin().powi(2) * q.z + gp * s2 / 2.0 * q.x - 0.05 * q.z - 0.3 * q.x;
        assert_abs_diff_eq!(v[0], ex, epsilon = 1e-14);
        assert_abs_diff_eq!(v[1], ey, epsilon = 1e-14);
        assert_abs_diff_eq!(v[2], ez, epsilon = 1e-14);
    }

    #[test]
    fn noise_coefficients_match_general_angle_formula() {
        let phi = 0.9_f64;
        let p = ChannelConfig::new(phi, 1.1, 0.6).unwrap();
        let z = ChannelConfig::z(0.4, 0.8).unwrap();
        let q = BlochState::new(0.3, -0.2, 0.5);
        let (s, c) = phi.sin_cos();
        let a = 1.0 / p.tau().sqrt();
        let gp = noise_coefficients(&q, &p);
        assert_abs_diff_eq!(gp[0], a * ((1.0 - q.x * q.x) * s - q.x * q.z * c), epsilon = 1e-14);
        assert_abs_diff_eq!(gp[1], a * (-q.x * q.y * s - q.y * q.z * c), epsilon = 1e-14);
        assert_abs_diff_eq!(gp[2], a * ((1.0 - q.z * q.z) * c - q.x * q.z * s), epsilon = 1e-14);
        let b = 1.0 / z.tau().sqrt();
        let gz = noise_coefficients(&q, &z);
        assert_abs_diff_eq!(gz[0], -b * q.x * q.z, epsilon = 1e-14);
        assert_abs_diff_eq!(gz[1], -b * q.y * q.z, epsilon = 1e-14);
        assert_abs_diff_eq!(gz[2], b * (1.0 - q.z * q.z), epsilon = 1e-14);
    }

    fn inefficient_xz(theta: f64) -> SimConfig {
        let mut cfg = SimConfig::ideal_xz(1.0, 0.01, 1.0, theta, 0).unwrap();
        cfg.z_channel.eta = 0.5;
        cfg.phi_channel.eta = 0.5;
        cfg
    }

    #[test]
    fn noise_free_step_is_drift_step() {
        let cfg = inefficient_xz(0.4);
        let q = cfg.initial_state;
        let f = drift(&q, &cfg.z_channel, &cfg.phi_channel, &cfg.environment);
        let n = ito_step(&q, 0.0, 0.0, &cfg).unwrap();
        assert_abs_diff_eq!(n.x, q.x + f[0] * 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(n.z, q.z + f[2] * 0.01, epsilon = 1e-15);
    }

    #[test]
    fn pole_does_not_overshoot_under_z_noise() {
        let mut cfg = inefficient_xz(0.0);
        cfg.initial_state = BlochState::new(0.0, 0.0, 1.0);
        for nz in [-3.0, -1.0, 0.0, 1.0, 3.0] {
            let n = ito_step(&cfg.initial_state, nz, 0.0, &cfg).unwrap();
            assert!(n.z <= 1.0);
            assert_abs_diff_eq!(n.z, 1.0 - cfg.phi_channel.gamma * 0.01, epsilon = 1e-15);
        }
    }

    #[test]
    fn efficient_measurement_keeps_pure_states_pure() {
        let cfg = SimConfig::ideal_xz(1.0, 0.01, 5.0, 0.4, 3).unwrap();
        let (tr, _) = simulate_trajectory(&cfg, 0).unwrap();
        assert!(tr.states.iter().all(|q| (bloch_norm(q) - 1.0).abs() < 1e-12));
        let mut mixed = SimConfig::ideal_xz(1.0, 0.01, 5.0, 0.4, 3).unwrap();
        mixed.initial_state = BlochState::new(0.3, 0.0, 0.4);
        let (tr, _) = simulate_trajectory(&mixed, 0).unwrap();
        assert!(tr.states.iter().all(|q| bloch_norm(q) <= 1.0 + 1e-12));
        assert!(tr.states.iter().skip(1).any(|q| (bloch_norm(q) - 0.5).abs() > 1e-3));
    }

    #[test]
    fn overshoot_is_projected_onto_the_sphere() {
        let cfg = inefficient_xz(0.4);
        let n = ito_step(&cfg.initial_state, 0.0, 3.0, &cfg).unwrap();
        assert!((bloch_norm(&n) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn runaway_step_is_reported() {
        let cfg = SimConfig::ideal_xz(1.0, 0.01, 1.0, 0.4, 0).unwrap();
        let err = ito_step(&cfg.initial_state, 400.0, 0.0, &cfg).unwrap_err();
        assert!(matches!(err, Error::Instability { .. }));
    }

    #[test]
    fn readout_examples() {
        let z = ChannelConfig::z(0.5, 1.0).unwrap();
        assert_eq!(synthesize_readout(&BlochState::new(0.0, 0.0, 1.0), 0.0, &z, 0.01), 1.0);
        assert_eq!(synthesize_readout(&BlochState::new(1.0, 0.0, 0.0), 0.0, &z, 0.01), 0.0);
    }

    #[test]
    fn readout_variance_is_tau_over_dt() {
        let z = ChannelConfig::z(0.5, 1.0).unwrap();
        let dt = 0.01;
        let q = BlochState::new(0.3, 0.0, 0.4);
        let mut rng = rng::stream(3, 0);
        let n = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let r = synthesize_readout(&q, rng::normal(&mut rng), &z, dt);
            s += r;
            s2 += r * r;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        let expected = z.tau() / dt;
        // SE of a sample variance is var * sqrt(2/n)
        assert!((var - expected).abs() < 4.0 * expected * (2.0 / n as f64).sqrt());
        assert!((mean - 0.4).abs() < 4.0 * (expected / n as f64).sqrt());
    }

    #[test]
    fn polar_step_moments() {
        let tau = 1.0;
        let dt = 0.01;
        let t = 1.0;
        let steps = (t / dt) as usize;
        let paths = 100_000;
        let (mut s2, mut s4, mut c2, mut c2sq) = (0.0, 0.0, 0.0, 0.0);
        for p in 0..paths {
            let mut rng = rng::stream(11, p);
            let mut th = PolarState(0.0);
            for _ in 0..steps {
                th = polar_step(th, rng::normal(&mut rng), dt, tau);
            }
            let d2 = th.0 * th.0;
            s2 += d2;
            s4 += d2 * d2;
            let c = (2.0 * th.0).cos();
            c2 += c;
            c2sq += c * c;
        }
        let n = paths as f64;
        let m2 = s2 / n;
        let se2 = ((s4 / n - m2 * m2) / n).sqrt();
        assert!((m2 - t / tau).abs() < 3.0 * se2, "{m2} vs {}", t / tau);
        let mc = c2 / n;
        let sec = ((c2sq / n - mc * mc) / n).sqrt();
        assert!((mc - (-2.0 * t / tau).exp()).abs() < 3.0 * sec);
        assert_eq!(polar_step(PolarState(0.3), 0.0, dt, tau), PolarState(0.3));
    }

    #[test]
    fn unmeasured_trajectory_is_constant() {
        let cfg = SimConfig {
            z_channel: ChannelConfig { axis_angle: 0.0, gamma: 0.0, eta: 1.0 },
            phi_channel: ChannelConfig { axis_angle: FRAC_PI_2, gamma: 0.0, eta: 1.0 },
            environment: QubitEnvironment::default(),
            dt: 0.01,
            t_final: 1.0,
            initial_state: BlochState::new(0.3, 0.1, -0.5),
            rng_seed: 5,
        };
        let (tr, _) = simulate_trajectory(&cfg, 0).unwrap();
        assert!(tr.states.iter().all(|q| *q == cfg.initial_state));
    }

    #[test]
    fn simulation_is_deterministic_per_stream() {
        let cfg = SimConfig::ideal_xz(1.0, 0.01, 2.0, FRAC_PI_4, 77).unwrap();
        let a = simulate_trajectory(&cfg, 4).unwrap();
        let b = simulate_trajectory(&cfg, 4).unwrap();
        assert_eq!(a, b);
        let c = simulate_trajectory(&cfg, 5).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn ideal_xz_keeps_y_zero() {
        let cfg = SimConfig::ideal_xz(1.0, 0.01, 3.0, 1.0, 2).unwrap();
        let (tr, rec) = simulate_trajectory(&cfg, 0).unwrap();
        assert!(tr.states.iter().all(|q| q.y == 0.0));
        assert_eq!(rec.len() + 1, tr.len());
        assert_eq!(tr.states[0], cfg.initial_state);
    }

    #[test]
    fn readouts_are_consistent_with_the_step() {
        let cfg = SimConfig::ideal_xz(1.0, 0.01, 0.5, 0.7, 9).unwrap();
        let (tr, rec) = simulate_trajectory(&cfg, 1).unwrap();
        for k in 0..rec.len() {
            let q = tr.states[k];
            let nz = (rec.r_z[k] - cfg.z_channel.expectation(&q)) / (cfg.z_channel.tau() / cfg.dt).sqrt();
            let np = (rec.r_phi[k] - cfg.phi_channel.expectation(&q)) / (cfg.phi_channel.tau() / cfg.dt).sqrt();
            let next = ito_step(&q, nz, np, &cfg).unwrap();
            assert_abs_diff_eq!(next.x, tr.states[k + 1].x, epsilon = 1e-12);
            assert_abs_diff_eq!(next.z, tr.states[k + 1].z, epsilon = 1e-12);
        }
    }

    #[test]
    fn singleton_ensemble_matches_direct_simulation() {
        let cfg = SimConfig::ideal_xz(1.0, 0.01, 1.0, 0.2, 12).unwrap();
        let ens = run_ensemble(&cfg, 1).unwrap();
        let (t, r) = simulate_trajectory(&cfg, 0).unwrap();
        assert_eq!(ens.trajectories[0], t);
        assert_eq!(ens.readouts.as_ref().unwrap()[0], r);
        assert!(run_ensemble(&cfg, 0).is_err());
    }

    #[test]
    fn sampled_path_matches_full_path() {
        let cfg = SimConfig::ideal_xz(1.0, 0.01, 1.0, 0.2, 12).unwrap();
        let steps = [100, 0, 37, 37, 5];
        let (t, _) = simulate_trajectory(&cfg, 6).unwrap();
        let s = sample_path(&cfg, 6, Integrator::Cartesian, &steps).unwrap();
        for (i, &k) in steps.iter().enumerate() {
            assert_eq!(s[i], t.states[k]);
        }
        let p = simulate_polar(&cfg, 6).unwrap();
        let s = sample_path(&cfg, 6, Integrator::Polar, &steps).unwrap();
        for (i, &k) in steps.iter().enumerate() {
            assert_eq!(s[i], p.states[k]);
        }
        assert!(sample_path(&cfg, 0, Integrator::Cartesian, &[101]).is_err());
    }

    #[test]
    fn polar_backend_requires_ideal_xz() {
        let mut cfg = SimConfig::ideal_xz(1.0, 0.01, 1.0, 0.2, 12).unwrap();
        cfg.z_channel.eta = 0.9;
        assert!(simulate_polar(&cfg, 0).is_err());
        let mut cfg = SimConfig::ideal_xz(1.0, 0.01, 1.0, 0.2, 12).unwrap();
        cfg.initial_state = BlochState::new(0.5, 0.0, 0.5);
        assert!(simulate_polar(&cfg, 0).is_err());
        assert_eq!(simulate_polar(&SimConfig::ideal_xz(1.0, 0.01, 1.0, 0.2, 1).unwrap(), 0).unwrap().states[0].x, polar_to_bloch(0.2).x);
    }
}
