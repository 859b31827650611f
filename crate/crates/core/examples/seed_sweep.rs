//! A small seed sweep over two instances, written as CSV plus manifest.

use std::path::PathBuf;

use optpac::harness::{sweep, write_sweep, Algorithm, ExperimentConfig, InstanceSource, SeedSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out_dir =
        std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("optpac-sweep"));
    let config = ExperimentConfig {
        instances: vec![
            InstanceSource::Random { num_states: 2, num_actions: 2, horizon: 2, seed: 5, deterministic: true },
            InstanceSource::Random { num_states: 2, num_actions: 2, horizon: 2, seed: 5, deterministic: false },
        ],
        algorithm: Algorithm::BpiUcrl,
        epsilon: 0.4,
        delta: 0.1,
        seeds: SeedSpec::Range { start: 0, end: 8 },
        master_seed: 2024,
        diagnostics: true,
        variant: Default::default(),
        max_episodes: None,
        episodes: None,
        out_dir: out_dir.clone(),
        jobs: None,
    };
    println!("config hash {}", config.hash());
    println!("{}", serde_json::to_string_pretty(&config)?);

    let table = sweep(&config)?;
    for row in table.summary_rows() {
        println!(
            "{}: success {:?}, median tau {:?}, bounds ok {:?}, good-event violations {:?}",
            row.instance, row.success_rate, row.median_tau, row.bound_ok_rate, row.good_event_violation_rate
        );
    }
    let (csv, manifest) = write_sweep(&config, &table, &out_dir)?;
    println!("wrote {} and {}", csv.display(), manifest.display());
    Ok(())
}
