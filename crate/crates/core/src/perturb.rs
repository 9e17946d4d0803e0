//! Tree-level covariances of the inefficient XZ measurement and the
//! eigen-rates of the two-axis decoherence matrix.

use crate::error::{Error, Result};
use crate::state::{BlochState, Coord, Kind};

/// Rates and initial state for the perturbative expansion in `eta`.
///
/// `gamma_x` is the dephasing rate of the x-measurement, so it sets the
/// free decay of `z`; likewise `gamma_z` sets the decay of `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub gamma_x: f64,
    pub gamma_z: f64,
    pub eta_x: f64,
    pub eta_z: f64,
    pub x_in: f64,
    pub z_in: f64,
}

impl TreeParams {
    pub fn new(gamma_x: f64, gamma_z: f64, eta_x: f64, eta_z: f64, x_in: f64, z_in: f64) -> Result<Self> {
        let p = TreeParams { gamma_x, gamma_z, eta_x, eta_z, x_in, z_in };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_x > 0.0 && self.gamma_z > 0.0) {
            return Err(Error::domain("tree-level rates must be > 0"));
        }
        if !(self.eta_x >= 0.0 && self.eta_z >= 0.0 && self.eta_x <= 1.0 && self.eta_z <= 1.0) {
            return Err(Error::domain("efficiencies must lie in [0, 1]"));
        }
        if self.x_in * self.x_in + self.z_in * self.z_in > 1.0 + 1e-12 {
            return Err(Error::domain("initial state lies outside the Bloch disk"));
        }
        Ok(())
    }

    /// Parameters with the roles of x and z exchanged.
    pub fn swapped(&self) -> Self {
        TreeParams {
            gamma_x: self.gamma_z,
            gamma_z: self.gamma_x,
            eta_x: self.eta_z,
            eta_z: self.eta_x,
            x_in: self.z_in,
            z_in: self.x_in,
        }
    }

    pub fn tau_x(&self) -> f64 {
        1.0 / (2.0 * self.gamma_x * self.eta_x)
    }

    pub fn tau_z(&self) -> f64 {
        1.0 / (2.0 * self.gamma_z * self.eta_z)
    }
}

/// Coefficient of the `t_min` term of the zz (and xx) covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZzVariant {
    /// `-4 gamma_z eta_z z_in^2 t_min`, from linearizing the noise.
    #[default]
    Derived,
    /// The same term divided once more by `tau_z`.
    AsPrinted,
}

/// `1 - exp(-a)` without cancellation for small `a`.
fn one_minus_exp(a: f64) -> f64 {
    -(-a).exp_m1()
}

/// Connected tree-level covariance `Cov[a(t1) b(t2)]`.
pub fn cov_tree(kind: Kind, t1: f64, t2: f64, p: &TreeParams) -> Result<f64> {
    cov_tree_variant(kind, t1, t2, p, ZzVariant::Derived)
}

pub fn cov_tree_variant(kind: Kind, t1: f64, t2: f64, p: &TreeParams, variant: ZzVariant) -> Result<f64> {
    if !(t1 >= 0.0 && t2 >= 0.0) {
        return Err(Error::domain(format!("times must be >= 0, got ({t1}, {t2})")));
    }
    let v = match kind {
        Kind(Coord::Z, Coord::X) => cov_zx(t1, t2, p),
        Kind(Coord::X, Coord::Z) => cov_zx(t2, t1, p),
        Kind(Coord::Z, Coord::Z) => cov_zz(t1, t2, p, variant),
        Kind(Coord::X, Coord::X) => cov_zz(t1, t2, &p.swapped(), variant),
    };
    Ok(v)
}

fn cov_zx(t1: f64, t2: f64, p: &TreeParams) -> f64 {
    let (x, z) = (p.x_in, p.z_in);
    let (gx, gz) = (p.gamma_x, p.gamma_z);
    let (kx, kz) = (gx * p.eta_x, gz * p.eta_z);
    let m = t1.min(t2);
    let braces = -2.0 * x * z * (kz + kx) * m
        + x * z.powi(3) * kz / gx * one_minus_exp(2.0 * gx * m)
        + z * x.powi(3) * kx / gz * one_minus_exp(2.0 * gz * m);
    (-gx * t1 - gz * t2).exp() * braces
}

fn cov_zz(t1: f64, t2: f64, p: &TreeParams, variant: ZzVariant) -> f64 {
    let (x, z) = (p.x_in, p.z_in);
    let (gx, gz) = (p.gamma_x, p.gamma_z);
    let (kx, kz) = (gx * p.eta_x, gz * p.eta_z);
    let m = t1.min(t2);
    let mut first = -4.0 * kz * z * z * m;
    if variant == ZzVariant::AsPrinted {
        first *= 2.0 * kz;
    }
    let braces = first
        + kz / gx * (2.0 * gx * m).exp_m1()
        + x * x * z * z * kx / gz * one_minus_exp(2.0 * gz * m)
        + z.powi(4) * kz / gx * one_minus_exp(2.0 * gx * m);
    (-gx * (t1 + t2)).exp() * braces
}

/// Freely propagated mean of one coordinate.
pub fn mean_tree(coord: Coord, t: f64, p: &TreeParams) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("time must be >= 0, got {t}")));
    }
    Ok(match coord {
        Coord::X => p.x_in * (-p.gamma_z * t).exp(),
        Coord::Z => p.z_in * (-p.gamma_x * t).exp(),
    })
}

pub fn var_tree(coord: Coord, t: f64, p: &TreeParams) -> Result<f64> {
    cov_tree(Kind(coord, coord), t, t, p)
}

/// Eigen-rates of the decoherence matrix of measurements along z and along
/// an axis at angle `phi` from z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenDecomposition {
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub xi: f64,
}

pub fn eig_decoherence(gamma_z: f64, gamma_phi: f64, phi: f64) -> EigenDecomposition {
    let xi = (gamma_phi * gamma_phi + gamma_z * gamma_z + 2.0 * gamma_phi * gamma_z * (2.0 * phi).cos()).max(0.0);
    let root = xi.sqrt();
    EigenDecomposition {
        lambda_plus: -0.5 * (gamma_z + gamma_phi) + 0.5 * root,
        lambda_minus: -0.5 * (gamma_z + gamma_phi) - 0.5 * root,
        xi,
    }
}

/// Decoherence matrix acting on `(x, z)`.
pub fn decoherence_matrix(gamma_z: f64, gamma_phi: f64, phi: f64) -> [[f64; 2]; 2] {
    let (s, c) = phi.sin_cos();
    [
        [-gamma_z - gamma_phi * c * c, gamma_phi * s * c],
        [gamma_phi * s * c, -gamma_phi * s * s],
    ]
}

/// Ensemble-averaged state under both dephasing channels, `exp(M t) q_in`.
/// The y component decays at `gamma_z + gamma_phi`.
pub fn lindblad_mean(q_in: &BlochState, gamma_z: f64, gamma_phi: f64, phi: f64, t: f64) -> BlochState {
    let m = decoherence_matrix(gamma_z, gamma_phi, phi);
    let e = eig_decoherence(gamma_z, gamma_phi, phi);
    let (lp, lm) = (e.lambda_plus, e.lambda_minus);
    let v = [q_in.x, q_in.z];
    let apply = |a: [[f64; 2]; 2], v: [f64; 2]| [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]];
    let mv = apply(m, v);
    let out = if lp - lm > 1e-9 * (gamma_z + gamma_phi) {
        // Sylvester's formula for a 2x2 matrix with distinct eigenvalues
        let (ep, em) = ((lp * t).exp(), (lm * t).exp());
        let d = lp - lm;
        [0, 1].map(|i| (ep * (mv[i] - lm * v[i]) - em * (mv[i] - lp * v[i])) / d)
    } else {
        let el = (lp * t).exp();
        [0, 1].map(|i| el * (v[i] + (mv[i] - lp * v[i]) * t))
    };
    BlochState::new(out[0], q_in.y * (-(gamma_z + gamma_phi) * t).exp(), out[1])
}
