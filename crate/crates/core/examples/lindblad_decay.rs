//! Ensemble-averaged state for a general measurement angle against the
//! closed-form decay, with the decoherence eigenvalues.
//!
//! `cargo run --release --example lindblad_decay [phi] [trajectories]`

use qmeas::estimator::{self, SelectionCriterion};
use qmeas::perturb::{eig_decoherence, lindblad_mean};
use qmeas::sde::Integrator;
use qmeas::{polar_to_bloch, ChannelConfig, Coord, QubitEnvironment, SimConfig};

fn main() -> qmeas::Result<()> {
    let mut args = std::env::args().skip(1);
    let phi: f64 = args.next().map_or(std::f64::consts::FRAC_PI_4, |a| a.parse().expect("angle"));
    let n: u64 = args.next().map_or(20_000, |a| a.parse().expect("trajectory count"));
    let (gz, gp) = (0.5, 0.3);
    let q_in = polar_to_bloch(0.3);
    let cfg = SimConfig {
        z_channel: ChannelConfig::z(gz, 1.0)?,
        phi_channel: ChannelConfig::new(phi, gp, 1.0)?,
        environment: QubitEnvironment::default(),
        dt: 0.005,
        t_final: 4.0,
        initial_state: q_in,
        rng_seed: 7,
    };
    let eig = eig_decoherence(gz, gp, phi);
    eprintln!("lambda+ = {}, lambda- = {}", eig.lambda_plus, eig.lambda_minus);
    let times: Vec<f64> = (0..=16).map(|k| cfg.time(cfg.step_index(0.25 * k as f64).unwrap())).collect();
    let sub = estimator::select_streaming(&cfg, Integrator::Cartesian, 0..n, &SelectionCriterion::pre(0.3, 4.0), &times)?;
    println!("t,x,z,x_mc,x_se,z_mc,z_se");
    for &t in &times {
        let q = lindblad_mean(&q_in, gz, gp, phi, t);
        let x = estimator::mean(&sub, Coord::X, t)?;
        let z = estimator::mean(&sub, Coord::Z, t)?;
        println!("{t},{},{},{},{},{},{}", q.x, q.z, x.value, x.std_error, z.value, z.std_error);
    }
    Ok(())
}
