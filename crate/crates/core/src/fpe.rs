//! Heat kernel on the circle and conditioned densities of the polar angle.
//!
//! The angle of the ideal XZ measurement diffuses freely with
//! `D = 1 / 2 tau_m`. This module evaluates the transition density, the
//! two-sided (bridge) density and conditional phase averages written as
//! integrals over those densities.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::analytic::{BoundaryCondition, SourceSpec};
use crate::error::{Error, Result};

/// Below this `D * dt` the wrapped Gaussian replaces the Fourier series.
pub const CROSSOVER: f64 = 0.01;

const KERNEL_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub diffusion: f64,
    pub n_max: usize,
}

impl KernelParams {
    pub fn new(diffusion: f64, n_max: usize) -> Result<Self> {
        if !(diffusion > 0.0 && diffusion.is_finite()) {
            return Err(Error::domain(format!("diffusion must be > 0, got {diffusion}")));
        }
        if n_max == 0 {
            return Err(Error::domain("n_max must be >= 1"));
        }
        Ok(KernelParams { diffusion, n_max })
    }

    /// `D = 1 / 2 tau_m` with a 64-term cap.
    pub fn from_tau(tau_m: f64) -> Result<Self> {
        Self::new(1.0 / (2.0 * tau_m), 64)
    }
}

/// `(1/2pi) sum_n exp(i n dtheta - n^2 s)` for `s = D dt`.
pub fn kernel_fourier(dtheta: f64, s: f64, n_cap: usize) -> Result<f64> {
    let mut acc = 1.0;
    for n in 1..=n_cap {
        let nf = n as f64;
        let w = (-nf * nf * s).exp();
        acc += 2.0 * w * (nf * dtheta).cos();
        if w < KERNEL_TOL {
            return Ok(acc / TAU);
        }
    }
    Err(Error::Series { cap: n_cap })
}

/// `sum_k (4 pi s)^(-1/2) exp(-(dtheta + 2 pi k)^2 / 4 s)` for `s = D dt`.
pub fn kernel_wrapped(dtheta: f64, s: f64, n_cap: usize) -> Result<f64> {
    let d = dtheta.rem_euclid(TAU);
    let d = if d > PI { d - TAU } else { d };
    let norm = (4.0 * PI * s).sqrt().recip();
    let mut acc = (-d * d / (4.0 * s)).exp();
    for k in 1..=n_cap {
        let mut largest = 0.0f64;
        for side in [1.0, -1.0] {
            let u = d + side * TAU * k as f64;
            let w = (-u * u / (4.0 * s)).exp();
            acc += w;
            largest = largest.max(w);
        }
        if largest * norm < KERNEL_TOL {
            return Ok(acc * norm);
        }
    }
    Err(Error::Series { cap: n_cap })
}

/// Transition density `P(theta, t | theta0, t0)` per radian.
pub fn transition_prob(theta: f64, t: f64, theta0: f64, t0: f64, kp: &KernelParams) -> Result<f64> {
    if !(t > t0) {
        return Err(Error::domain(format!("transition needs t > t0, got t = {t}, t0 = {t0}")));
    }
    kernel(theta - theta0, kp.diffusion * (t - t0), kp.n_max)
}

fn kernel(dtheta: f64, s: f64, n_cap: usize) -> Result<f64> {
    if s < CROSSOVER {
        kernel_wrapped(dtheta, s, n_cap)
    } else {
        kernel_fourier(dtheta, s, n_cap)
    }
}

fn post(bc: &BoundaryCondition) -> Result<(f64, f64)> {
    match bc.theta_f {
        Some(f) => Ok((f, bc.t_total)),
        None => Err(Error::domain("a post-selected boundary condition is required")),
    }
}

fn bridge_norm(bc: &BoundaryCondition, kp: &KernelParams) -> Result<f64> {
    let (theta_f, t_total) = post(bc)?;
    let p = transition_prob(theta_f, t_total, bc.theta_in, 0.0, kp)?;
    if p < 1e-300 {
        return Err(Error::Conditioning(p));
    }
    Ok(p)
}

/// Density of `theta(t)` conditioned on both boundary angles.
pub fn two_sided_density(theta: f64, t: f64, bc: &BoundaryCondition, kp: &KernelParams) -> Result<f64> {
    let (theta_f, t_total) = post(bc)?;
    if !(t > 0.0 && t < t_total) {
        return Err(Error::domain(format!("t = {t} must lie strictly inside (0, {t_total})")));
    }
    let den = bridge_norm(bc, kp)?;
    let fwd = transition_prob(theta, t, bc.theta_in, 0.0, kp)?;
    let bwd = transition_prob(theta_f, t_total, theta, t, kp)?;
    Ok(fwd * bwd / den)
}

/// Joint density of `(theta1(t1), theta2(t2))` with `0 < t1 < t2 < T`,
/// conditioned on both boundary angles.
pub fn two_sided_joint_density(
    theta1: f64,
    t1: f64,
    theta2: f64,
    t2: f64,
    bc: &BoundaryCondition,
    kp: &KernelParams,
) -> Result<f64> {
    let (theta_f, t_total) = post(bc)?;
    if !(0.0 < t1 && t1 < t2 && t2 < t_total) {
        return Err(Error::domain(format!("need 0 < t1 < t2 < {t_total}, got ({t1}, {t2})")));
    }
    let den = bridge_norm(bc, kp)?;
    let a = transition_prob(theta1, t1, bc.theta_in, 0.0, kp)?;
    let b = transition_prob(theta2, t2, theta1, t1, kp)?;
    let c = transition_prob(theta_f, t_total, theta2, t2, kp)?;
    Ok(a * b * c / den)
}

/// Conditional average of `exp(i sum_j s_j theta(t_j))`, summed in Fourier
/// space.
pub fn cond_avg_fpe(src: &SourceSpec, bc: &BoundaryCondition, kp: &KernelParams) -> Result<Complex64> {
    let (theta_f, t_total) = post(bc)?;
    for p in src.points() {
        if !(0.0..=t_total).contains(&p.t) {
            return Err(Error::domain(format!("time {} outside [0, {t_total}]", p.t)));
        }
    }
    if src.is_empty() {
        return Ok(Complex64::new(1.0, 0.0));
    }
    bridge_norm(bc, kp)?;
    let d = kp.diffusion;
    let dtheta = theta_f - bc.theta_in;
    let mut sum_s = 0.0;
    let mut moment = 0.0;
    let mut min_form = 0.0;
    for a in src.points() {
        sum_s += a.s as f64;
        moment += a.s as f64 * a.t;
        for b in src.points() {
            min_form += (a.s * b.s) as f64 * a.t.min(b.t);
        }
    }
    let base = -d * min_form;
    // each numerator mode carries exp(-D n^2 T + 2 D S n); the largest sits
    // next to n = S / T
    let peak = (moment / t_total).round();
    let expo = |n: f64| d * (2.0 * moment * n - n * n * t_total);
    let top = expo(peak);
    let mut num = Complex64::from_polar((base + top).exp(), peak * dtheta);
    let mut den = 1.0;
    let (mut num_done, mut den_done) = (false, false);
    for j in 1..=kp.n_max {
        let jf = j as f64;
        if !num_done {
            let mut largest = 0.0f64;
            for n in [peak + jf, peak - jf] {
                let e = expo(n);
                num += Complex64::from_polar((base + e).exp(), n * dtheta);
                largest = largest.max((e - top).exp());
            }
            num_done = largest < KERNEL_TOL;
        }
        if !den_done {
            let w = (-d * jf * jf * t_total).exp();
            den += 2.0 * w * (jf * dtheta).cos();
            den_done = w < KERNEL_TOL;
        }
        if num_done && den_done {
            return Ok(Complex64::cis(bc.theta_in * sum_s) * num / den);
        }
    }
    Err(Error::Series { cap: kp.n_max })
}

/// Same average by trapezoid quadrature of the (joint) two-sided density on
/// a uniform periodic grid of `grid` points per angle.
///
/// At most two distinct interior times are supported; insertions at `t = 0`
/// or `t = T` are deterministic phases.
pub fn cond_avg_quadrature(src: &SourceSpec, bc: &BoundaryCondition, kp: &KernelParams, grid: usize) -> Result<Complex64> {
    let (theta_f, t_total) = post(bc)?;
    if grid < 8 {
        return Err(Error::domain("quadrature grid needs at least 8 points"));
    }
    let mut fixed = 0.0;
    let mut interior: Vec<(f64, i32)> = Vec::new();
    for p in src.points() {
        if !(0.0..=t_total).contains(&p.t) {
            return Err(Error::domain(format!("time {} outside [0, {t_total}]", p.t)));
        }
        if p.t == 0.0 {
            fixed += p.s as f64 * bc.theta_in;
        } else if p.t == t_total {
            fixed += p.s as f64 * theta_f;
        } else if let Some(last) = interior.last_mut().filter(|l| l.0 == p.t) {
            last.1 += p.s;
        } else {
            interior.push((p.t, p.s));
        }
    }
    let den = bridge_norm(bc, kp)?;
    let h = TAU / grid as f64;
    let theta = |i: usize| i as f64 * h;
    let value = match interior[..] {
        [] => Complex64::new(1.0, 0.0),
        [(t, s)] => {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..grid {
                let w = transition_prob(theta(i), t, bc.theta_in, 0.0, kp)?
                    * transition_prob(theta_f, t_total, theta(i), t, kp)?;
                acc += w * Complex64::cis(s as f64 * theta(i));
            }
            acc * h / den
        }
        [(t1, s1), (t2, s2)] => {
            let mut a = Vec::with_capacity(grid);
            let mut b = Vec::with_capacity(grid);
            let mut k = Vec::with_capacity(grid);
            for i in 0..grid {
                a.push(transition_prob(theta(i), t1, bc.theta_in, 0.0, kp)? * Complex64::cis(s1 as f64 * theta(i)));
                b.push(transition_prob(theta_f, t_total, theta(i), t2, kp)? * Complex64::cis(s2 as f64 * theta(i)));
                k.push(kernel(theta(i), kp.diffusion * (t2 - t1), kp.n_max)?);
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, ai) in a.iter().enumerate() {
                let mut row = Complex64::new(0.0, 0.0);
                for (j, bj) in b.iter().enumerate() {
                    row += k[(j + grid - i) % grid] * bj;
                }
                acc += ai * row;
            }
            acc * h * h / den
        }
        _ => return Err(Error::domain("quadrature supports at most two interior times")),
    };
    Ok(value * Complex64::cis(fixed))
}

/// Probability that `theta(T)`, reduced mod `2 pi`, lies within
/// `+-delta` of `theta_f`.
pub fn window_probability(theta_f: f64, delta: f64, t_total: f64, theta_in: f64, kp: &KernelParams) -> Result<f64> {
    if !(delta > 0.0 && delta <= PI) {
        return Err(Error::domain(format!("window half-width must lie in (0, pi], got {delta}")));
    }
    if !(t_total > 0.0) {
        return Err(Error::domain(format!("T must be > 0, got {t_total}")));
    }
    let mut acc = 2.0 * delta;
    let dtheta = theta_f - theta_in;
    let cap = kp.n_max.max(4096);
    for n in 1..=cap {
        let nf = n as f64;
        let w = (-kp.diffusion * nf * nf * t_total).exp();
        acc += w * 4.0 * (nf * delta).sin() / nf * (nf * dtheta).cos();
        if w < KERNEL_TOL {
            return Ok(acc / TAU);
        }
    }
    Err(Error::Series { cap })
}
