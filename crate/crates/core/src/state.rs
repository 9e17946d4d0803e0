//! Shared domain types: Bloch states, measurement channels, simulation
//! parameters.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerated excess of |q| over 1 that is attributed to rounding.
pub const NORM_EPS: f64 = 1e-9;

/// Largest admissible `dt / tau` for either channel.
pub const STABILITY_LIMIT: f64 = 0.05;

/// Qubit state as Bloch coordinates, `rho = (1 + x sx + y sy + z sz) / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BlochState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochState {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        BlochState { x, y, z }
    }

    /// Builds a state and checks that it lies in the Bloch ball.
    pub fn checked(x: f64, y: f64, z: f64) -> Result<Self> {
        let q = BlochState { x, y, z };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        let n = bloch_norm(self);
        if !n.is_finite() || n > 1.0 + NORM_EPS {
            return Err(Error::domain(format!(
                "Bloch vector ({}, {}, {}) has norm {n} > 1",
                self.x, self.y, self.z
            )));
        }
        Ok(())
    }

    pub fn coord(&self, c: Coord) -> f64 {
        match c {
            Coord::X => self.x,
            Coord::Z => self.z,
        }
    }

    /// Polar angle in the xz plane, `atan2(x, z)` reduced to `[0, 2pi)`.
    pub fn polar_angle(&self) -> f64 {
        reduce_angle(self.x.atan2(self.z))
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        BlochState::new(a[0], a[1], a[2])
    }
}

/// Unwrapped polar coordinate of a pure xz-plane state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PolarState(pub f64);

impl PolarState {
    pub fn to_bloch(self) -> BlochState {
        polar_to_bloch(self.0)
    }
}

/// Reduces an angle to `[0, 2pi)`.
pub fn reduce_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Shortest signed distance from `b` to `a` on the circle, in `(-pi, pi]`.
pub fn angle_difference(a: f64, b: f64) -> f64 {
    let d = reduce_angle(a - b);
    if d > std::f64::consts::PI {
        d - TAU
    } else {
        d
    }
}

pub fn polar_to_bloch(theta: f64) -> BlochState {
    let (s, c) = theta.sin_cos();
    BlochState::new(s, 0.0, c)
}

pub fn bloch_norm(q: &BlochState) -> f64 {
    (q.x * q.x + q.y * q.y + q.z * q.z).sqrt()
}

/// Characteristic measurement time `1 / (2 gamma eta)`.
pub fn measurement_time(gamma: f64, eta: f64) -> Result<f64> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::domain(format!("dephasing rate must be > 0, got {gamma}")));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::domain(format!("efficiency must lie in (0, 1], got {eta}")));
    }
    Ok(1.0 / (2.0 * gamma * eta))
}

/// One continuous measurement channel of the observable
/// `cos(axis_angle) sz + sin(axis_angle) sx`.
///
/// A channel with `gamma == 0` is switched off: it neither dephases nor
/// produces signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    #[serde(default)]
    pub axis_angle: f64,
    pub gamma: f64,
    pub eta: f64,
}

impl ChannelConfig {
    pub fn new(axis_angle: f64, gamma: f64, eta: f64) -> Result<Self> {
        let ch = ChannelConfig {
            axis_angle,
            gamma,
            eta,
        };
        ch.validate()?;
        Ok(ch)
    }

    pub fn z(gamma: f64, eta: f64) -> Result<Self> {
        Self::new(0.0, gamma, eta)
    }

    pub fn x(gamma: f64, eta: f64) -> Result<Self> {
        Self::new(std::f64::consts::FRAC_PI_2, gamma, eta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::domain(format!(
                "channel dephasing rate must be >= 0, got {}",
                self.gamma
            )));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::domain(format!(
                "channel efficiency must lie in (0, 1], got {}",
                self.eta
            )));
        }
        if !self.axis_angle.is_finite() {
            return Err(Error::domain("channel axis angle is not finite"));
        }
        Ok(())
    }

    pub fn is_active(&self) -> bool {
        self.gamma > 0.0
    }

    /// Measurement time; infinite for a switched-off channel.
    pub fn tau(&self) -> f64 {
        if self.is_active() {
            1.0 / (2.0 * self.gamma * self.eta)
        } else {
            f64::INFINITY
        }
    }

    /// `1 / tau = 2 gamma eta`, zero when switched off.
    pub fn inv_tau(&self) -> f64 {
        2.0 * self.gamma * self.eta
    }

    /// Unit measurement axis `(sin a, 0, cos a)` in Bloch coordinates.
    pub fn axis(&self) -> [f64; 3] {
        let (s, c) = self.axis_angle.sin_cos();
        [s, 0.0, c]
    }

    /// `Tr[sigma_axis rho]`.
    pub fn expectation(&self, q: &BlochState) -> f64 {
        let (s, c) = self.axis_angle.sin_cos();
        s * q.x + c * q.z
    }
}

/// Residual Rabi rotation about y and xz-plane depolarization.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QubitEnvironment {
    #[serde(default)]
    pub rabi_detuning: f64,
    #[serde(default)]
    pub depolarization_rate: f64,
}

impl QubitEnvironment {
    pub fn validate(&self) -> Result<()> {
        if !(self.depolarization_rate >= 0.0) {
            return Err(Error::domain(format!(
                "depolarization rate must be >= 0, got {}",
                self.depolarization_rate
            )));
        }
        if !self.rabi_detuning.is_finite() {
            return Err(Error::domain("Rabi detuning is not finite"));
        }
        Ok(())
    }

    pub fn is_trivial(&self) -> bool {
        self.rabi_detuning == 0.0 && self.depolarization_rate == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub z_channel: ChannelConfig,
    pub phi_channel: ChannelConfig,
    #[serde(default)]
    pub environment: QubitEnvironment,
    pub dt: f64,
    pub t_final: f64,
    pub initial_state: BlochState,
    #[serde(default)]
    pub rng_seed: u64,
}

impl SimConfig {
    /// Ideal, equal-strength XZ measurement with `tau_m` on both channels.
    pub fn ideal_xz(tau_m: f64, dt: f64, t_final: f64, theta_in: f64, seed: u64) -> Result<Self> {
        let gamma = 1.0 / (2.0 * tau_m);
        let cfg = SimConfig {
            z_channel: ChannelConfig::z(gamma, 1.0)?,
            phi_channel: ChannelConfig::x(gamma, 1.0)?,
            environment: QubitEnvironment::default(),
            dt,
            t_final,
            initial_state: polar_to_bloch(theta_in),
            rng_seed: seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.z_channel.validate()?;
        self.phi_channel.validate()?;
        self.environment.validate()?;
        self.initial_state.validate()?;
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::domain(format!("dt must be > 0, got {}", self.dt)));
        }
        let steps = self.t_final / self.dt;
        let n = steps.round();
        if n < 1.0 || (steps - n).abs() > 1e-6 * n.max(1.0) {
            return Err(Error::domain(format!(
                "t_final = {} is not a positive integer multiple of dt = {}",
                self.t_final, self.dt
            )));
        }
        let rate = self.z_channel.inv_tau().max(self.phi_channel.inv_tau());
        if self.dt * rate > STABILITY_LIMIT {
            return Err(Error::domain(format!(
                "dt / tau = {:.4} exceeds the stability limit {STABILITY_LIMIT}",
                self.dt * rate
            )));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    /// Time of grid point `k`.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Grid index nearest to `t`, if it lies within `dt / 2` of a stored step.
    pub fn step_index(&self, t: f64) -> Option<usize> {
        let k = (t / self.dt).round();
        if k < 0.0 || k as usize > self.n_steps() {
            return None;
        }
        ((t - k * self.dt).abs() <= 0.5 * self.dt * (1.0 + 1e-9)).then_some(k as usize)
    }

    /// Measurement time of the ideal equal-strength XZ configuration, if
    /// this is one.
    pub fn ideal_xz_tau(&self) -> Option<f64> {
        let (z, p) = (&self.z_channel, &self.phi_channel);
        let ideal = z.eta == 1.0
            && p.eta == 1.0
            && z.gamma > 0.0
            && (z.gamma - p.gamma).abs() <= 1e-12 * z.gamma
            && z.axis_angle == 0.0
            && (p.axis_angle - std::f64::consts::FRAC_PI_2).abs() < 1e-12
            && self.environment.is_trivial();
        ideal.then(|| z.tau())
    }
}

/// Bloch coordinate entering a correlator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coord {
    X,
    Z,
}

impl Coord {
    pub fn as_char(self) -> char {
        match self {
            Coord::X => 'x',
            Coord::Z => 'z',
        }
    }
}

/// Two-time correlator kind `<a(t1) b(t2)>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Kind(pub Coord, pub Coord);

impl Kind {
    pub const ZZ: Kind = Kind(Coord::Z, Coord::Z);
    pub const ZX: Kind = Kind(Coord::Z, Coord::X);
    pub const XZ: Kind = Kind(Coord::X, Coord::Z);
    pub const XX: Kind = Kind(Coord::X, Coord::X);

    pub fn swapped(self) -> Kind {
        Kind(self.1, self.0)
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.0.as_char(), self.1.as_char())
    }
}

impl FromStr for Kind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let coord = |c: char| match c {
            'x' | 'X' => Ok(Coord::X),
            'z' | 'Z' => Ok(Coord::Z),
            _ => Err(Error::domain(format!("unknown correlator kind `{s}`"))),
        };
        let mut chars = s.chars();
        match (chars.next(), chars.next(), chars.next()) {
            (Some(a), Some(b), None) => Ok(Kind(coord(a)?, coord(b)?)),
            _ => Err(Error::domain(format!("unknown correlator kind `{s}`"))),
        }
    }
}

impl Serialize for Kind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Kind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
