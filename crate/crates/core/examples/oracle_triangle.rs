//! Post-selected phase averages three ways: winding sum, Fourier series
//! and direct quadrature over the two-sided joint density.
//!
//! `cargo run --release --example oracle_triangle`

use std::f64::consts::{FRAC_PI_4, PI};

use qmeas::analytic::{cond_avg_phase, BoundaryCondition, SourceSpec};
use qmeas::fpe::{cond_avg_fpe, cond_avg_quadrature, KernelParams};

fn main() -> qmeas::Result<()> {
    let kp = KernelParams::from_tau(1.0)?;
    println!("T,t1,t2,s1,s2,winding_re,winding_im,fourier_re,fourier_im,quadrature_re,quadrature_im");
    for t_total in [1.0, 3.5, 10.0] {
        let bc = BoundaryCondition::post(FRAC_PI_4, 7.0 * PI / 8.0, t_total, 1.0)?;
        for (t1, t2) in [(0.25, 0.5), (0.5, 0.5), (0.75, 0.25)] {
            for (s1, s2) in [(1, 1), (1, -1)] {
                let src = SourceSpec::new([(s1, t1 * t_total), (s2, t2 * t_total)])?;
                let a = cond_avg_phase(&src, &bc, 8)?;
                let f = cond_avg_fpe(&src, &bc, &kp)?;
                let q = cond_avg_quadrature(&src, &bc, &kp, 128)?;
                println!(
                    "{t_total},{},{},{s1},{s2},{},{},{},{},{},{}",
                    t1 * t_total, t2 * t_total, a.re, a.im, f.re, f.im, q.re, q.im
                );
            }
        }
    }
    Ok(())
}
