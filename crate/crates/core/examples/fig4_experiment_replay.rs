//! Readout-file round trip at the transmon experiment's parameters:
//! synthesize readouts, write and re-read them, reconstruct trajectories by
//! Bayesian updates and compare covariances with direct simulation and
//! tree level. Times in microseconds.
//!
//! `cargo run --release --example fig4_experiment_replay [trajectories]`

use std::f64::consts::{FRAC_PI_4, PI};

use qmeas::bayes::{self, ReadoutHeader};
use qmeas::estimator::{self, SelectionCriterion};
use qmeas::perturb::{cov_tree, TreeParams};
use qmeas::sde::{self, Integrator};
use qmeas::{polar_to_bloch, ChannelConfig, Kind, QubitEnvironment, SimConfig};

fn main() -> qmeas::Result<()> {
    let n: u64 = std::env::args().nth(1).map_or(5_000, |a| a.parse().expect("trajectory count"));
    let gamma = 1.0 / 1.3;
    let q_in = polar_to_bloch(FRAC_PI_4);
    let cfg = SimConfig {
        z_channel: ChannelConfig::z(gamma, 0.54)?,
        phi_channel: ChannelConfig::x(gamma, 0.41)?,
        environment: QubitEnvironment {
            rabi_detuning: 2.0 * PI * 0.012,
            depolarization_rate: 0.5 * (1.0 / 60.0 + 1.0 / 30.0),
        },
        dt: 0.004,
        t_final: 2.0,
        initial_state: q_in,
        rng_seed: 4,
    };

    let records: Vec<_> = (0..n).map(|id| sde::simulate_trajectory(&cfg, id).map(|(_, r)| r)).collect::<Result<_, _>>()?;
    let header = ReadoutHeader { dt: cfg.dt, z_channel: cfg.z_channel, x_channel: cfg.phi_channel };
    let path = std::env::temp_dir().join("qmeas_fig4_readouts.csv");
    bayes::write_readout_file(&path, &header, &records)?;
    let (header, records) = bayes::read_readout_file(&path)?;
    eprintln!("replayed {} traces of {} steps from {}", records.len(), records[0].len(), path.display());
    assert_eq!(header.dt, cfg.dt);

    let trajectories = records.iter().map(|r| bayes::reconstruct(r, &q_in, &cfg)).collect::<Result<Vec<_>, _>>()?;
    let t1: Vec<f64> = (0..=10).map(|i| cfg.time(cfg.step_index(0.2 * i as f64).unwrap())).collect();
    let t2 = 1.0;
    let crit = SelectionCriterion::pre(FRAC_PI_4, 2.0);
    let rec = estimator::select_trajectories(&cfg, &trajectories, &crit, &t1)?;
    let direct = estimator::select_streaming(&cfg, Integrator::Cartesian, n..2 * n, &crit, &t1)?;
    let tp = TreeParams::new(gamma, gamma, 0.41, 0.54, q_in.x, q_in.z)?;

    println!("kind,t1,t2,reconstructed,reconstructed_se,direct,direct_se,tree");
    for kind in [Kind::ZZ, Kind::ZX, Kind::XZ, Kind::XX] {
        for &t in &t1 {
            let a = estimator::covariance(&rec, kind.0, kind.1, t, t2)?;
            let b = estimator::covariance(&direct, kind.0, kind.1, t, t2)?;
            println!("{kind},{t},{t2},{},{},{},{},{}", a.value, a.std_error, b.value, b.std_error, cov_tree(kind, t, t2, &tp)?);
        }
    }
    let _ = std::fs::remove_file(&path);
    Ok(())
}
