//! Discrete-time quantum Bayesian reconstruction of trajectories from
//! readout records.
//!
//! Each step applies the z-channel update, then the second-channel update
//! (conjugated by the rotation about y that brings its axis onto z), then the
//! exact residual Rabi/depolarization map.

mod record_file;

use num_complex::Complex64;

pub use record_file::{read_readout_file, read_readouts, write_readout_file, write_readouts, ReadoutHeader};

use crate::error::{Error, Result};
use crate::sde::{ReadoutRecord, Trajectory};
use crate::state::{BlochState, ChannelConfig, QubitEnvironment, SimConfig};

/// Positivity slack before an update is rejected.
pub const POSITIVITY_TOL: f64 = 1e-10;

/// Qubit density matrix in the sz eigenbasis. `p0` is the population of
/// the `z = +1` state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix2 {
    pub p0: f64,
    pub p1: f64,
    pub coherence: Complex64,
}

impl DensityMatrix2 {
    pub fn from_bloch(q: &BlochState) -> Self {
        DensityMatrix2 {
            p0: 0.5 * (1.0 + q.z),
            p1: 0.5 * (1.0 - q.z),
            coherence: Complex64::new(0.5 * q.x, -0.5 * q.y),
        }
    }

    pub fn to_bloch(&self) -> BlochState {
        BlochState::new(2.0 * self.coherence.re, -2.0 * self.coherence.im, self.p0 - self.p1)
    }

    pub fn trace(&self) -> f64 {
        self.p0 + self.p1
    }

    /// `|c|^2 - p0 p1`; positive means the matrix is not positive semidefinite.
    pub fn positivity_excess(&self) -> f64 {
        self.coherence.norm_sqr() - self.p0 * self.p1
    }

    /// Rotation `rho -> U rho U^dag` with `U = exp(-i angle sy / 2)`.
    pub fn rotate_y(&self, angle: f64) -> Self {
        let q = self.to_bloch();
        let (s, c) = angle.sin_cos();
        let r = BlochState::new(c * q.x + s * q.z, q.y, c * q.z - s * q.x);
        let mut out = Self::from_bloch(&r);
        // keep the trace exactly as it was
        let t = self.trace();
        out.p0 *= t;
        out.p1 *= t;
        out.coherence *= t;
        out
    }
}

/// Bayesian update for one readout of `channel`, averaged over `dt`.
///
/// Populations in the channel eigenbasis are reweighted by the Gaussian
/// likelihoods `exp[-(r -+ 1)^2 dt / 2 tau]`; coherences are further damped
/// by `exp[-(gamma - 1/2tau) dt]`. The normalization `(4 pi tau / dt)^(-1/2)`
/// of the measurement operator cancels and is omitted.
pub fn bayes_update(rho: &DensityMatrix2, readout: f64, dt: f64, channel: &ChannelConfig) -> Result<DensityMatrix2> {
    if !channel.is_active() {
        return Ok(*rho);
    }
    if !readout.is_finite() {
        return Err(Error::domain(format!("readout {readout} is not finite")));
    }
    let excess = rho.positivity_excess();
    if excess > POSITIVITY_TOL {
        return Err(Error::Positivity { step: 0, excess });
    }
    let aligned = rho.rotate_y(-channel.axis_angle);
    let tau = channel.tau();
    let w = readout * dt / tau;
    // shared factor exp(-(r^2 + 1) dt / 2tau) dropped, then rescaled by exp(-|w|)
    let a = w.abs();
    let up = aligned.p0 * (w - a).exp();
    let down = aligned.p1 * (-w - a).exp();
    let norm = up + down;
    if !(norm > 0.0) {
        return Err(Error::Positivity { step: 0, excess: f64::INFINITY });
    }
    let damping = (-(channel.gamma - 0.5 / tau) * dt).exp();
    let mut out = DensityMatrix2 {
        p0: up / norm,
        p1: down / norm,
        coherence: aligned.coherence * ((-a).exp() * damping / norm),
    };
    let excess = out.positivity_excess();
    if excess > POSITIVITY_TOL {
        return Err(Error::Positivity { step: 0, excess });
    }
    if excess > 0.0 {
        let limit = (out.p0 * out.p1).sqrt();
        out.coherence *= limit / out.coherence.norm();
    }
    let mut back = out.rotate_y(channel.axis_angle);
    let t = back.trace();
    back.p0 /= t;
    back.p1 /= t;
    back.coherence /= t;
    Ok(back)
}

/// Exact flow of `x' = -g x + w z`, `z' = -g z - w x` over `dt`, with y
/// damped at the same rate `g`.
pub fn env_step(q: &BlochState, dt: f64, env: &QubitEnvironment) -> BlochState {
    if env.is_trivial() {
        return *q;
    }
    let decay = (-env.depolarization_rate * dt).exp();
    let (s, c) = (env.rabi_detuning * dt).sin_cos();
    BlochState::new(
        decay * (c * q.x + s * q.z),
        decay * q.y,
        decay * (c * q.z - s * q.x),
    )
}

/// One full reconstruction step: z-channel update, second-channel update,
/// then the environment map.
pub fn reconstruct_step(q: &BlochState, r_z: f64, r_phi: f64, cfg: &SimConfig) -> Result<BlochState> {
    let rho = DensityMatrix2::from_bloch(q);
    let rho = bayes_update(&rho, r_z, cfg.dt, &cfg.z_channel)?;
    let rho = bayes_update(&rho, r_phi, cfg.dt, &cfg.phi_channel)?;
    Ok(env_step(&rho.to_bloch(), cfg.dt, &cfg.environment))
}

/// Bloch trajectory inferred from a readout record.
pub fn reconstruct(readouts: &ReadoutRecord, q_in: &BlochState, cfg: &SimConfig) -> Result<Trajectory> {
    if readouts.r_phi.len() != readouts.r_z.len() || readouts.times.len() != readouts.r_z.len() {
        return Err(Error::domain("readout columns have different lengths"));
    }
    for (k, &t) in readouts.times.iter().enumerate() {
        if (t - cfg.time(k)).abs() > 1e-3 * cfg.dt {
            return Err(Error::domain(format!(
                "readout {k} at t = {t} is off the dt = {} grid",
                cfg.dt
            )));
        }
    }
    let n = readouts.len();
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    let mut q = *q_in;
    times.push(0.0);
    states.push(q);
    for k in 0..n {
        q = reconstruct_step(&q, readouts.r_z[k], readouts.r_phi[k], cfg).map_err(|e| match e {
            Error::Positivity { excess, .. } => Error::Positivity { step: k, excess },
            other => other,
        })?;
        times.push(cfg.time(k + 1));
        states.push(q);
    }
    Ok(Trajectory { times, states })
}
