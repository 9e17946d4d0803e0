//! Pre- and post-selected two-time correlators: closed form against
//! Monte Carlo with the exact polar integrator.
//!
//! `cargo run --release --example fig1b_conditional_correlators [trajectories]`

use std::f64::consts::{FRAC_PI_4, PI};

use qmeas::analytic::{correlator_cond, correlator_pre, BoundaryCondition};
use qmeas::estimator::{self, SelectionCriterion};
use qmeas::sde::Integrator;
use qmeas::{Kind, SimConfig};

fn main() -> qmeas::Result<()> {
    let n: u64 = std::env::args().nth(1).map_or(300_000, |a| a.parse().expect("trajectory count"));
    let (theta_in, theta_f, t_total) = (FRAC_PI_4, 7.0 * PI / 8.0, 3.5);
    let cfg = SimConfig::ideal_xz(1.0, 0.01, t_total, theta_in, 2)?;
    let bc = BoundaryCondition::post(theta_in, theta_f, t_total, 1.0)?;
    let t2 = 1.75;
    let t1: Vec<f64> = (0..=14).map(|i| 0.25 * i as f64).collect();
    let mut times = t1.clone();
    times.push(t2);

    let post = estimator::select_streaming(&cfg, Integrator::Polar, 0..n, &SelectionCriterion::post(theta_in, theta_f, t_total, 0.05), &times)?;
    let pre = estimator::select_streaming(&cfg, Integrator::Polar, 0..n / 10, &SelectionCriterion::pre(theta_in, t_total), &times)?;
    eprintln!("post-selection kept {} of {n}", post.accepted());

    println!("selection,kind,t1,t2,exact,mc,se");
    for kind in [Kind::ZZ, Kind::ZX, Kind::XX] {
        for &t in &t1 {
            let e = estimator::correlate(&post, kind.0, kind.1, t, t2)?;
            println!("post,{kind},{t},{t2},{},{},{}", correlator_cond(kind, t, t2, &bc)?, e.value, e.std_error);
            let e = estimator::correlate(&pre, kind.0, kind.1, t, t2)?;
            println!("pre,{kind},{t},{t2},{},{},{}", correlator_pre(kind, t, t2, theta_in, 1.0)?, e.value, e.std_error);
        }
    }
    Ok(())
}
