//! Closed-form conditional averages for the ideal, equal-strength XZ
//! measurement.
//!
//! In that case the state stays pure and its polar angle is a free Brownian
//! motion with `D = 1 / 2 tau_m`. Averages of `exp(i sum_j s_j theta(t_j))`
//! over paths pinned at `theta_in` (and optionally `theta_f + 2 pi n`) are
//! Gaussian integrals; correlators of `z = cos theta` and `x = sin theta`
//! follow by summing over the signs `s_j`.

use std::f64::consts::{FRAC_PI_2, TAU};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::state::{reduce_angle, BlochState, Coord, Kind};

/// Upper limit on windings evaluated per side of the dominant term.
pub const SERIES_CAP: usize = 64;

/// Relative size of the last winding term kept.
pub const SERIES_TOL: f64 = 1e-12;

const LN_TOL: f64 = 27.631021115928547; // -ln(1e-12)

/// Boundary data of a (pre- or post-selected) sub-ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryCondition {
    pub theta_in: f64,
    pub theta_f: Option<f64>,
    pub t_total: f64,
    pub tau_m: f64,
}

impl BoundaryCondition {
    /// Pre-selection only. `t_total` is unbounded.
    pub fn pre(theta_in: f64, tau_m: f64) -> Result<Self> {
        let bc = BoundaryCondition {
            theta_in: reduce_angle(theta_in),
            theta_f: None,
            t_total: f64::INFINITY,
            tau_m,
        };
        bc.validate()?;
        Ok(bc)
    }

    /// Pre- and post-selection; angles are reduced to `[0, 2 pi)`.
    pub fn post(theta_in: f64, theta_f: f64, t_total: f64, tau_m: f64) -> Result<Self> {
        let bc = BoundaryCondition {
            theta_in: reduce_angle(theta_in),
            theta_f: Some(reduce_angle(theta_f)),
            t_total,
            tau_m,
        };
        bc.validate()?;
        Ok(bc)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_m > 0.0 && self.tau_m.is_finite()) {
            return Err(Error::domain(format!("tau_m must be > 0, got {}", self.tau_m)));
        }
        if !self.theta_in.is_finite() {
            return Err(Error::domain("theta_in is not finite"));
        }
        if let Some(f) = self.theta_f {
            if !f.is_finite() {
                return Err(Error::domain("theta_f is not finite"));
            }
            if !(self.t_total > 0.0 && self.t_total.is_finite()) {
                return Err(Error::domain(format!(
                    "post-selection time must be > 0, got {}",
                    self.t_total
                )));
            }
        }
        Ok(())
    }

    pub fn is_post_selected(&self) -> bool {
        self.theta_f.is_some()
    }

    /// `theta_f - theta_in`; zero without post-selection.
    pub fn delta_theta(&self) -> f64 {
        self.theta_f.map_or(0.0, |f| f - self.theta_in)
    }

    /// Both boundary angles shifted by `by`.
    pub fn rotated(&self, by: f64) -> Self {
        BoundaryCondition {
            theta_in: reduce_angle(self.theta_in + by),
            theta_f: self.theta_f.map(|f| reduce_angle(f + by)),
            ..*self
        }
    }

    fn check_time(&self, t: f64) -> Result<f64> {
        let slack = 1e-12 * self.t_total.clamp(1.0, 1e12);
        if !(t >= -slack) || t > self.t_total + slack {
            return Err(Error::domain(format!(
                "time {t} outside [0, {}]",
                self.t_total
            )));
        }
        Ok(t.clamp(0.0, self.t_total))
    }
}

/// One source insertion `exp(i s theta(t))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Source {
    pub s: i32,
    pub t: f64,
}

/// Source insertions sorted by time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SourceSpec {
    points: Vec<Source>,
}

impl SourceSpec {
    pub fn new(points: impl IntoIterator<Item = (i32, f64)>) -> Result<Self> {
        let mut points: Vec<Source> = points.into_iter().map(|(s, t)| Source { s, t }).collect();
        for p in &points {
            if p.s != 1 && p.s != -1 {
                return Err(Error::domain(format!("source sign must be +-1, got {}", p.s)));
            }
            if !p.t.is_finite() {
                return Err(Error::domain("source time is not finite"));
            }
        }
        points.sort_by(|a, b| a.t.total_cmp(&b.t));
        Ok(SourceSpec { points })
    }

    pub fn empty() -> Self {
        SourceSpec::default()
    }

    pub fn points(&self) -> &[Source] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn sign_sum(&self) -> f64 {
        self.points.iter().map(|p| p.s as f64).sum()
    }

    fn moment(&self) -> f64 {
        self.points.iter().map(|p| p.s as f64 * p.t).sum()
    }

    /// `sum_ab s_a s_b min(t_a, t_b)`.
    fn min_form(&self) -> f64 {
        let mut acc = 0.0;
        for a in &self.points {
            for b in &self.points {
                acc += (a.s * b.s) as f64 * a.t.min(b.t);
            }
        }
        acc
    }
}

/// Green's function of `d^2/dt^2` on `[0, T]` with zero boundary values.
pub fn green(t: f64, t2: f64, t_total: f64) -> Result<f64> {
    if !(t_total > 0.0) {
        return Err(Error::domain(format!("T must be > 0, got {t_total}")));
    }
    for v in [t, t2] {
        if !(0.0..=t_total).contains(&v) {
            return Err(Error::domain(format!("time {v} outside [0, {t_total}]")));
        }
    }
    let step = if t > t2 { t - t2 } else { 0.0 };
    Ok(step - (1.0 - t2 / t_total) * t)
}

/// Average of `exp(i sum_j s_j theta(t_j))` without post-selection.
pub fn avg_phase_pre(src: &SourceSpec, theta_in: f64, tau_m: f64) -> Complex64 {
    Complex64::from_polar(
        (-src.min_form() / (2.0 * tau_m)).exp(),
        theta_in * src.sign_sum(),
    )
}

/// Post-selected average of `exp(i sum_j s_j theta(t_j))`.
///
/// Windings are summed outward from the dominant one until a term falls
/// below [`SERIES_TOL`] relative to it, but never fewer than `n_max` per
/// side. When the direct sum would need more than [`SERIES_CAP`] windings
/// (very long `T`), the Poisson-dual series is used instead.
pub fn cond_avg_phase(src: &SourceSpec, bc: &BoundaryCondition, n_max: usize) -> Result<Complex64> {
    if !bc.is_post_selected() {
        return Err(Error::domain("cond_avg_phase needs a post-selected boundary condition"));
    }
    if n_max == 0 || n_max > SERIES_CAP {
        return Err(Error::domain(format!("n_max must lie in 1..={SERIES_CAP}, got {n_max}")));
    }
    let mut pts = Vec::with_capacity(src.len());
    for p in src.points() {
        pts.push((p.s, bc.check_time(p.t)?));
    }
    let src = SourceSpec::new(pts)?;
    if src.is_empty() {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let (t_total, tau) = (bc.t_total, bc.tau_m);
    let dtheta = bc.delta_theta();
    let b = src.moment() / t_total;
    let a = tau / (2.0 * t_total);
    let n0 = (-dtheta / TAU).round();
    let u0 = dtheta + TAU * n0;
    // windings needed before the Gaussian weight drops below the tolerance
    let reach = ((LN_TOL / a + u0 * u0).sqrt() / TAU).ceil() + 1.0;
    let phase = bc.theta_in * src.sign_sum();
    if reach as usize <= SERIES_CAP {
        let quad: f64 = {
            let mut acc = 0.0;
            for p in src.points() {
                for q in src.points() {
                    acc += (p.s * q.s) as f64 * green(p.t, q.t, t_total)?;
                }
            }
            acc
        };
        let (num, den) = winding_sums(dtheta, a, b, n_max)?;
        Ok(Complex64::from_polar((quad / (2.0 * tau)).exp(), phase) * num / den)
    } else {
        poisson_form(&src, dtheta, t_total, tau, phase, n_max)
    }
}

/// `sum_n w_n exp(i u_n b)` and `sum_n w_n` with
/// `w_n = exp(-a (u_n^2 - u_0^2))`, `u_n = dtheta + 2 pi n`.
fn winding_sums(dtheta: f64, a: f64, b: f64, n_min: usize) -> Result<(Complex64, f64)> {
    let n0 = (-dtheta / TAU).round();
    let u0 = dtheta + TAU * n0;
    let e0 = a * u0 * u0;
    let mut num = Complex64::cis(u0 * b);
    let mut den = 1.0;
    for j in 1..=SERIES_CAP {
        let mut largest = 0.0f64;
        for side in [1.0, -1.0] {
            let u = u0 + side * TAU * j as f64;
            let w = (e0 - a * u * u).exp();
            num += w * Complex64::cis(u * b);
            den += w;
            largest = largest.max(w);
        }
        if j >= n_min && largest < SERIES_TOL {
            return Ok((num, den));
        }
    }
    Err(Error::Series { cap: SERIES_CAP })
}

/// Dual form after Poisson resummation, with the prefactor folded into
/// each exponent so nothing overflows.
fn poisson_form(src: &SourceSpec, dtheta: f64, t_total: f64, tau: f64, phase: f64, n_min: usize) -> Result<Complex64> {
    let c = t_total / (2.0 * tau);
    let b = src.moment() / t_total;
    let base = -src.min_form() / (2.0 * tau);
    let k0 = b.round();
    let term = |k: f64| Complex64::from_polar((base + c * (2.0 * k * b - k * k)).exp(), k * dtheta);
    let mut num = term(k0);
    let ref_exp = c * (k0 - b) * (k0 - b);
    let mut den = 1.0;
    let mut done_num = false;
    let mut done_den = false;
    for j in 1..=SERIES_CAP {
        let jf = j as f64;
        if !done_num {
            let mut largest = 0.0f64;
            for k in [k0 + jf, k0 - jf] {
                num += term(k);
                largest = largest.max((ref_exp - c * (k - b) * (k - b)).exp());
            }
            done_num = j >= n_min && largest < SERIES_TOL;
        }
        if !done_den {
            let w = (-c * jf * jf).exp();
            den += 2.0 * w * (jf * dtheta).cos();
            done_den = j >= n_min && w < SERIES_TOL;
        }
        if done_num && done_den {
            return Ok(Complex64::cis(phase) * num / den);
        }
    }
    Err(Error::Series { cap: SERIES_CAP })
}

/// Average phase under `bc`, choosing the pre- or post-selected form.
fn avg_phase(src: &SourceSpec, bc: &BoundaryCondition) -> Result<Complex64> {
    if bc.is_post_selected() {
        cond_avg_phase(src, bc, 1)
    } else {
        for p in src.points() {
            if !(p.t >= 0.0) {
                return Err(Error::domain(format!("time {} is negative", p.t)));
            }
        }
        Ok(avg_phase_pre(src, bc.theta_in, bc.tau_m))
    }
}

/// `<prod_j c_j(t_j)>` with `z = cos theta`, `x = sin theta`, expanded into
/// `2^n` phase averages. Returned as a complex number whose imaginary part
/// vanishes up to rounding.
pub fn correlator_npoint(points: &[(Coord, f64)], bc: &BoundaryCondition) -> Result<Complex64> {
    if points.len() > 16 {
        return Err(Error::domain("at most 16 insertion points are supported"));
    }
    let mut total = Complex64::new(0.0, 0.0);
    for mask in 0u32..(1 << points.len()) {
        let mut weight = Complex64::new(1.0, 0.0);
        let mut src = Vec::with_capacity(points.len());
        for (j, &(coord, t)) in points.iter().enumerate() {
            let s = if mask >> j & 1 == 0 { 1 } else { -1 };
            weight *= match coord {
                Coord::Z => Complex64::new(0.5, 0.0),
                // s / 2i
                Coord::X => Complex64::new(0.0, -0.5 * s as f64),
            };
            src.push((s, t));
        }
        total += weight * avg_phase(&SourceSpec::new(src)?, bc)?;
    }
    Ok(total)
}

/// Two-time correlator `<a(t1) b(t2)>` under `bc`.
///
/// `xx` is obtained from `zz` with both boundary angles rotated by
/// `-pi/2`, since `sin theta = cos(theta - pi/2)`.
pub fn correlator_cond(kind: Kind, t1: f64, t2: f64, bc: &BoundaryCondition) -> Result<f64> {
    match kind {
        Kind(Coord::X, Coord::X) => correlator_cond(Kind::ZZ, t1, t2, &bc.rotated(-FRAC_PI_2)),
        Kind(a, b) => Ok(correlator_npoint(&[(a, t1), (b, t2)], bc)?.re),
    }
}

/// Pre-selected two-time correlators in closed form.
pub fn correlator_pre(kind: Kind, t1: f64, t2: f64, theta_in: f64, tau_m: f64) -> Result<f64> {
    if !(t1 >= 0.0 && t2 >= 0.0) {
        return Err(Error::domain(format!("times must be >= 0, got ({t1}, {t2})")));
    }
    if !(tau_m > 0.0) {
        return Err(Error::domain(format!("tau_m must be > 0, got {tau_m}")));
    }
    let tmin = t1.min(t2);
    let envelope = (-(t1 + t2) / (2.0 * tau_m)).exp();
    let v = match kind {
        Kind(Coord::Z, Coord::Z) => {
            let (s, c) = theta_in.sin_cos();
            let r = tmin / tau_m;
            envelope * (c * c * r.cosh() + s * s * r.sinh())
        }
        Kind(Coord::Z, Coord::X) | Kind(Coord::X, Coord::Z) => {
            envelope * (-tmin / tau_m).exp() * (2.0 * theta_in).sin() / 2.0
        }
        Kind(Coord::X, Coord::X) => correlator_pre(Kind::ZZ, t1, t2, theta_in - FRAC_PI_2, tau_m)?,
    };
    Ok(v)
}

/// Sub-ensemble average state `(<x>, 0, <z>)` at time `t`.
pub fn subens_avg_state(t: f64, bc: &BoundaryCondition) -> Result<BlochState> {
    let a = avg_phase(&SourceSpec::new([(1, t)])?, bc)?;
    Ok(BlochState::new(a.im, 0.0, a.re))
}
