//! Two-sided density of the polar angle between pre- and post-selection,
//! from the circle heat kernel and from a histogram of accepted
//! trajectories.
//!
//! `cargo run --release --example fig3_two_sided_density [trajectories]`

use std::f64::consts::{FRAC_PI_4, PI, TAU};

use qmeas::analytic::BoundaryCondition;
use qmeas::estimator::{self, SelectionCriterion};
use qmeas::fpe::{two_sided_density, KernelParams};
use qmeas::sde::Integrator;
use qmeas::SimConfig;

const BINS: usize = 48;

fn main() -> qmeas::Result<()> {
    let n: u64 = std::env::args().nth(1).map_or(400_000, |a| a.parse().expect("trajectory count"));
    let (theta_in, theta_f, t_total) = (FRAC_PI_4, 7.0 * PI / 8.0, 10.0);
    let cfg = SimConfig::ideal_xz(1.0, 0.01, t_total, theta_in, 3)?;
    let bc = BoundaryCondition::post(theta_in, theta_f, t_total, 1.0)?;
    let kp = KernelParams::from_tau(1.0)?;
    let snapshots = [0.5, 2.5, 5.0, 7.5, 9.5];
    let crit = SelectionCriterion::post(theta_in, theta_f, t_total, 0.05);
    let sub = estimator::select_streaming(&cfg, Integrator::Polar, 0..n, &crit, &snapshots)?;
    eprintln!("{} of {n} accepted", sub.accepted());

    println!("t,theta,kernel,histogram");
    let width = TAU / BINS as f64;
    for (j, &t) in snapshots.iter().enumerate() {
        let mut counts = [0usize; BINS];
        for path in &sub.paths {
            let th = path[j].polar_angle().rem_euclid(TAU);
            counts[((th / width) as usize).min(BINS - 1)] += 1;
        }
        for (b, &c) in counts.iter().enumerate() {
            let theta = (b as f64 + 0.5) * width;
            let hist = c as f64 / (sub.accepted() as f64 * width);
            println!("{t},{theta},{},{hist}", two_sided_density(theta, t, &bc, &kp)?);
        }
    }
    Ok(())
}
