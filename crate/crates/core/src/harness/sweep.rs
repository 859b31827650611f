//! Seed sweeps over instances: one CSV row per cell, one summary row per
//! instance, plus a manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{cell_rng, hex, Algorithm, ExperimentConfig};
use super::HarnessError;
use crate::bounds::{theorem1_explicit_bound, theorem1_implicit_check};
use crate::bpi::{run, BpiConfig};
use crate::mdp::{evaluate_policy, Mdp};
use crate::oracles::{gap_report, EnumerationBudget, GapReport};
use crate::ucbvi::{regret_to_pac_sample, run_regret};

pub const SCHEMA_VERSION: u32 = 1;
pub const CSV_NAME: &str = "sweep.csv";
pub const MANIFEST_NAME: &str = "sweep_manifest.json";

/// One CSV line; cell rows leave the summary columns empty and vice versa.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SweepRow {
    pub row: &'static str,
    pub instance: String,
    pub seed: Option<u64>,
    pub algorithm: &'static str,
    pub status: &'static str,
    pub tau: Option<u64>,
    pub stopped: Option<bool>,
    pub success: Option<bool>,
    pub policy_value: Option<f64>,
    pub optimal_value: Option<f64>,
    pub final_gap: Option<f64>,
    pub explicit_bound: Option<f64>,
    pub bound_ok: Option<bool>,
    pub implicit_ok: Option<bool>,
    pub good_event_ok: Option<bool>,
    pub lemmas_ok: Option<bool>,
    pub cum_regret: Option<f64>,
    pub avg_regret: Option<f64>,
    pub cells: Option<usize>,
    pub errors: Option<usize>,
    pub success_rate: Option<f64>,
    pub mean_tau: Option<f64>,
    pub median_tau: Option<f64>,
    pub bound_ok_rate: Option<f64>,
    pub good_event_violation_rate: Option<f64>,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn cell_rows(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.row == "cell")
    }

    pub fn summary_rows(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.row == "summary")
    }

    /// CSV preceded by a `# optpac sweep schema=N` comment line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), HarnessError> {
        writeln!(out, "# optpac sweep schema={SCHEMA_VERSION}")?;
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        buf
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub csv: String,
    pub csv_sha256: String,
    pub timestamp_unix: u64,
}

struct Instance {
    id: String,
    mdp: Result<Mdp, String>,
    gaps: Option<GapReport>,
}

fn algorithm_name(a: Algorithm) -> &'static str {
    match a {
        Algorithm::BpiUcrl => "bpi_ucrl",
        Algorithm::Ucbvi => "ucbvi",
    }
}

fn failed_row(config: &ExperimentConfig, id: &str, seed: u64, err: String) -> SweepRow {
    SweepRow {
        row: "cell",
        instance: id.to_string(),
        seed: Some(seed),
        algorithm: algorithm_name(config.algorithm),
        status: "error",
        error: err,
        ..SweepRow::default()
    }
}

fn run_cell(config: &ExperimentConfig, inst: &Instance, seed: u64) -> SweepRow {
    let mdp = match &inst.mdp {
        Ok(m) => m,
        Err(e) => return failed_row(config, &inst.id, seed, e.clone()),
    };
    let mut rng = cell_rng(config.master_seed, &inst.id, seed);
    let mut row = SweepRow {
        row: "cell",
        instance: inst.id.clone(),
        seed: Some(seed),
        algorithm: algorithm_name(config.algorithm),
        status: "ok",
        ..SweepRow::default()
    };
    match config.algorithm {
        Algorithm::BpiUcrl => {
            let bpi = BpiConfig {
                variant: config.variant,
                diagnostics: config.diagnostics,
                record_history: false,
                max_episodes: config.max_episodes,
            };
            let res = match run(mdp, config.epsilon, config.delta, &bpi, &mut rng) {
                Ok(r) => r,
                Err(e) => return failed_row(config, &inst.id, seed, e.to_string()),
            };
            row.tau = Some(res.tau);
            row.stopped = Some(res.stopped);
            row.success = Some(res.success);
            row.policy_value = Some(res.recommended_value);
            row.optimal_value = Some(res.optimal_value);
            row.final_gap = Some(res.final_gap);
            if !res.stopped {
                row.status = "truncated";
            }
            if let Some(g) = &inst.gaps {
                if let Ok(b) = theorem1_explicit_bound(g, config.delta, config.epsilon) {
                    row.explicit_bound = Some(b.value);
                    row.bound_ok = Some(res.tau as f64 <= b.value);
                }
                row.implicit_ok = theorem1_implicit_check(res.tau, g, config.delta, config.epsilon).ok();
            }
            if let Some(d) = &res.diagnostics {
                row.good_event_ok = Some(d.good_event.holds());
                row.lemmas_ok = Some(d.lemmas.holds());
            }
        }
        Algorithm::Ucbvi => {
            let episodes = config.episodes.unwrap_or(1) as usize;
            let trace = run_regret(mdp, episodes, &mut rng);
            let drawn = regret_to_pac_sample(&trace, &mut rng);
            let value = match evaluate_policy(mdp, &drawn) {
                Ok(v) => v.v(1, mdp.initial_state()),
                Err(e) => return failed_row(config, &inst.id, seed, e.to_string()),
            };
            row.tau = Some(episodes as u64);
            row.policy_value = Some(value);
            row.optimal_value = Some(trace.optimal_value);
            row.success = Some(value >= trace.optimal_value - config.epsilon);
            row.cum_regret = trace.cumulative.last().copied();
            row.avg_regret = Some(trace.average(episodes));
        }
    }
    row
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

fn rate(flags: impl Iterator<Item = Option<bool>>, want: bool) -> Option<f64> {
    let v: Vec<bool> = flags.flatten().collect();
    (!v.is_empty()).then(|| v.iter().filter(|&&b| b == want).count() as f64 / v.len() as f64)
}

fn summarize(config: &ExperimentConfig, id: &str, cells: &[SweepRow]) -> SweepRow {
    let ok: Vec<&SweepRow> = cells.iter().filter(|r| r.status != "error").collect();
    let taus: Vec<f64> = ok.iter().filter_map(|r| r.tau).map(|t| t as f64).collect();
    SweepRow {
        row: "summary",
        instance: id.to_string(),
        algorithm: algorithm_name(config.algorithm),
        status: if ok.len() == cells.len() { "ok" } else { "partial" },
        cells: Some(cells.len()),
        errors: Some(cells.len() - ok.len()),
        success_rate: rate(ok.iter().map(|r| r.success), true),
        mean_tau: mean(&taus),
        median_tau: median(&taus),
        bound_ok_rate: rate(ok.iter().map(|r| r.bound_ok.zip(r.implicit_ok).map(|(a, b)| a && b)), true),
        good_event_violation_rate: rate(ok.iter().map(|r| r.good_event_ok), false),
        ..SweepRow::default()
    }
}

/// Runs every `(instance, seed)` cell. Failures are recorded in their row and
/// never abort the sweep; rows are sorted by `(instance, seed)` order of the config.
pub fn sweep(config: &ExperimentConfig) -> Result<SweepTable, HarnessError> {
    config.validate()?;
    let body = || sweep_inner(config);
    match config.jobs {
        Some(j) => Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| HarnessError::Config(e.to_string()))?
            .install(body)),
        None => Ok(body()),
    }
}

fn sweep_inner(config: &ExperimentConfig) -> SweepTable {
    let seeds = config.seeds.seeds();
    let instances: Vec<Instance> = config
        .instances
        .iter()
        .enumerate()
        .map(|(k, src)| {
            let id = format!("{k}:{}", src.label());
            let mdp = src.build().map_err(|e| e.to_string());
            let gaps = match (&mdp, config.algorithm) {
                (Ok(m), Algorithm::BpiUcrl) => gap_report(m, EnumerationBudget::default()).ok(),
                _ => None,
            };
            Instance { id, mdp, gaps }
        })
        .collect();
    let cells: Vec<(usize, u64)> = (0..instances.len()).flat_map(|i| seeds.iter().map(move |&s| (i, s))).collect();
    let rows: Vec<SweepRow> = cells.par_iter().map(|&(i, s)| run_cell(config, &instances[i], s)).collect();
    let mut out = Vec::with_capacity(rows.len() + instances.len());
    for (i, inst) in instances.iter().enumerate() {
        let chunk = &rows[i * seeds.len()..(i + 1) * seeds.len()];
        out.extend_from_slice(chunk);
        out.push(summarize(config, &inst.id, chunk));
    }
    SweepTable { rows: out }
}

/// Writes `sweep.csv` and `sweep_manifest.json` under `dir`; returns their paths.
pub fn write_sweep(
    config: &ExperimentConfig,
    table: &SweepTable,
    dir: &Path,
) -> Result<(PathBuf, PathBuf), HarnessError> {
    fs::create_dir_all(dir)?;
    let bytes = table.to_csv_bytes();
    let csv_path = dir.join(CSV_NAME);
    fs::write(&csv_path, &bytes)?;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        tool: env!("CARGO_PKG_NAME"),
        tool_version: env!("CARGO_PKG_VERSION"),
        config_hash: config.hash(),
        config: config.clone(),
        csv: CSV_NAME.to_string(),
        csv_sha256: hex(&Sha256::digest(&bytes)),
        timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    };
    let manifest_path = dir.join(MANIFEST_NAME);
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    Ok((csv_path, manifest_path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{InstanceSource, SeedSpec};

    fn config(seeds: SeedSpec) -> ExperimentConfig {
        ExperimentConfig {
            instances: vec![InstanceSource::Random {
                num_states: 2,
                num_actions: 2,
                horizon: 2,
                seed: 3,
                deterministic: true,
            }],
            algorithm: Algorithm::BpiUcrl,
            epsilon: 0.5,
            delta: 0.1,
            seeds,
            master_seed: 9,
            diagnostics: true,
            variant: Default::default(),
            max_episodes: None,
            episodes: None,
            out_dir: PathBuf::from("unused"),
            jobs: None,
        }
    }

    #[test]
    fn three_seeds_give_three_cells_and_a_summary() {
        let t = sweep(&config(SeedSpec::List(vec![1, 2, 3]))).unwrap();
        assert_eq!(t.cell_rows().count(), 3);
        assert_eq!(t.summary_rows().count(), 1);
        let s = t.summary_rows().next().unwrap();
        assert_eq!(s.cells, Some(3));
        assert_eq!(s.errors, Some(0));
        assert!(t.cell_rows().all(|r| r.bound_ok == Some(true) && r.good_event_ok.is_some()));
    }

    #[test]
    fn reruns_and_pool_sizes_give_identical_bytes() {
        let mut c = config(SeedSpec::Range { start: 0, end: 4 });
        let a = sweep(&c).unwrap().to_csv_bytes();
        c.jobs = Some(1);
        let b = sweep(&c).unwrap().to_csv_bytes();
        c.jobs = Some(3);
        let d = sweep(&c).unwrap().to_csv_bytes();
        assert_eq!(a, b);
        assert_eq!(a, d);
        assert!(a.starts_with(b"# optpac sweep schema=1\nrow,instance,seed,"));
    }

    #[test]
    fn failing_cells_are_recorded() {
        let mut c = config(SeedSpec::List(vec![0, 1]));
        c.instances.push(InstanceSource::File { path: PathBuf::from("/nonexistent/mdp.json") });
        let t = sweep(&c).unwrap();
        let errs: Vec<_> = t.cell_rows().filter(|r| r.status == "error").collect();
        assert_eq!(errs.len(), 2);
        assert!(!errs[0].error.is_empty());
        assert_eq!(t.summary_rows().nth(1).unwrap().errors, Some(2));
    }

    #[test]
    fn ucbvi_cells_report_regret() {
        let mut c = config(SeedSpec::List(vec![5]));
        c.algorithm = Algorithm::Ucbvi;
        c.episodes = Some(200);
        let t = sweep(&c).unwrap();
        let r = t.cell_rows().next().unwrap();
        assert_eq!(r.tau, Some(200));
        assert!(r.cum_regret.unwrap() >= 0.0);
    }

    #[test]
    fn manifest_records_hash() {
        let c = config(SeedSpec::List(vec![1]));
        let t = sweep(&c).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (csv_path, man_path) = write_sweep(&c, &t, dir.path()).unwrap();
        let man: serde_json::Value = serde_json::from_str(&fs::read_to_string(man_path).unwrap()).unwrap();
        assert_eq!(man["config_hash"], c.hash());
        let bytes = fs::read(csv_path).unwrap();
        assert_eq!(man["csv_sha256"], hex(&Sha256::digest(&bytes)));
        let back: ExperimentConfig = serde_json::from_value(man["config"].clone()).unwrap();
        assert_eq!(back, c);
    }
}
