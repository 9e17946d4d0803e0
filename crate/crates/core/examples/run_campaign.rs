//! Runs a campaign file through the library, as the `qmeas` binary does.
//!
//! `cargo run --release --example run_campaign -- campaigns/fig1b_compare.toml`

use std::path::PathBuf;

use qmeas::campaign::{self, Overrides};

fn main() {
    let path: PathBuf = std::env::args().nth(1).expect("usage: run_campaign <config.toml>").into();
    match campaign::run_file(&path, &Overrides::default()) {
        Ok(manifest) => {
            for (key, value) in &manifest.summary {
                println!("{key} = {value}");
            }
            println!("wrote {} files to {}", manifest.outputs.len(), manifest.config.output_dir.display());
        }
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    }
}
