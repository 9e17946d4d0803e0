//! Post-selected average state for three durations, closed form against
//! Monte Carlo. Prints CSV: `T,t,x,z,x_mc,x_se,z_mc,z_se`.
//!
//! `cargo run --release --example fig1a_subensemble_average [trajectories]`

use std::f64::consts::{FRAC_PI_4, PI};

use qmeas::analytic::{subens_avg_state, BoundaryCondition};
use qmeas::estimator::{self, SelectionCriterion};
use qmeas::sde::Integrator;
use qmeas::{Coord, SimConfig};

fn main() -> qmeas::Result<()> {
    let n: u64 = std::env::args().nth(1).map_or(200_000, |a| a.parse().expect("trajectory count"));
    let (theta_in, theta_f) = (FRAC_PI_4, 7.0 * PI / 8.0);
    println!("T,t,x,z,x_mc,x_se,z_mc,z_se");
    for t_total in [1.0, 3.5, 10.0] {
        let cfg = SimConfig::ideal_xz(1.0, 0.01, t_total, theta_in, 1)?;
        let bc = BoundaryCondition::post(theta_in, theta_f, t_total, 1.0)?;
        let crit = SelectionCriterion::post(theta_in, theta_f, t_total, 0.05);
        let times: Vec<f64> = (0..=20).map(|i| cfg.time(cfg.step_index(t_total * i as f64 / 20.0).unwrap())).collect();
        let sub = estimator::select_streaming(&cfg, Integrator::Polar, 0..n, &crit, &times)?;
        eprintln!("T = {t_total}: {} of {n} accepted", sub.accepted());
        for &t in &times {
            let q = subens_avg_state(t, &bc)?;
            let x = estimator::mean(&sub, Coord::X, t)?;
            let z = estimator::mean(&sub, Coord::Z, t)?;
            println!("{t_total},{t},{},{},{},{},{},{}", q.x, q.z, x.value, x.std_error, z.value, z.std_error);
        }
    }
    Ok(())
}
