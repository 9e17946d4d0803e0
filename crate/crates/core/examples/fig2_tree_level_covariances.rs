//! Tree-level covariances and variances for inefficient XZ measurement
//! against Cartesian Monte Carlo, at two efficiencies.
//!
//! `cargo run --release --example fig2_tree_level_covariances [trajectories]`

use std::f64::consts::FRAC_PI_4;

use qmeas::estimator::{self, SelectionCriterion};
use qmeas::perturb::{cov_tree, var_tree, TreeParams};
use qmeas::sde::Integrator;
use qmeas::{polar_to_bloch, ChannelConfig, Coord, Kind, QubitEnvironment, SimConfig};

fn main() -> qmeas::Result<()> {
    let n: u64 = std::env::args().nth(1).map_or(50_000, |a| a.parse().expect("trajectory count"));
    let q_in = polar_to_bloch(FRAC_PI_4);
    let t1: Vec<f64> = (0..=15).map(|i| 0.2 * i as f64).collect();
    let t2 = 1.5;
    println!("eta,quantity,t1,t2,tree,mc,se");
    for eta in [0.05, 0.5] {
        let cfg = SimConfig {
            z_channel: ChannelConfig::z(1.0, eta)?,
            phi_channel: ChannelConfig::x(1.0, eta)?,
            environment: QubitEnvironment::default(),
            dt: 0.01,
            t_final: 3.0,
            initial_state: q_in,
            rng_seed: 6,
        };
        let tp = TreeParams::new(1.0, 1.0, eta, eta, q_in.x, q_in.z)?;
        let mut times = t1.clone();
        times.push(t2);
        let sub = estimator::select_streaming(&cfg, Integrator::Cartesian, 0..n, &SelectionCriterion::pre(FRAC_PI_4, 3.0), &times)?;
        for kind in [Kind::ZZ, Kind::ZX, Kind::XZ, Kind::XX] {
            for &t in &t1 {
                let e = estimator::covariance(&sub, kind.0, kind.1, t, t2)?;
                println!("{eta},cov_{kind},{t},{t2},{},{},{}", cov_tree(kind, t, t2, &tp)?, e.value, e.std_error);
            }
        }
        for c in [Coord::X, Coord::Z] {
            for &t in &t1 {
                let e = estimator::variance(&sub, c, t)?;
                println!("{eta},var_{},{t},{t},{},{},{}", c.as_char(), var_tree(c, t, &tp)?, e.value, e.std_error);
            }
        }
    }
    Ok(())
}
