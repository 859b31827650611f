//! Command-line front end. Exit codes: 0 pass, 1 invariant failure, 2 configuration error.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use optpac::bounds::bound_report;
use optpac::bpi::{run, BonusVariant, BpiConfig};
use optpac::harness::{cell_rng, derive_u64, sweep, verify, write_sweep, ExperimentConfig, HarnessError, Suite};
use optpac::mdp_file::{load_mdp, write_mdp};
use optpac::oracles::{check_gap_ordering, gap_report, EnumerationBudget};
use optpac::ucbvi::measure_t_epsilon_with_seeds;
use optpac::{random_mdp, tree_mdp, TreeSpec};

#[derive(Parser)]
#[command(name = "optpac", version, about = "Optimistic PAC exploration for tabular episodic MDPs")]
struct Cli {
    /// Directory for every output file.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Master seed for run, regret and verify.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write an instance file.
    Gen(GenArgs),
    /// Exact gap table of an instance.
    Gaps {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        max_policies: Option<u64>,
    },
    /// One BPI-UCRL run.
    Run {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, value_enum, default_value = "stochastic")]
        variant: VariantArg,
        #[arg(long)]
        diagnostics: bool,
        #[arg(long)]
        max_episodes: Option<u64>,
    },
    /// UCBVI regret traces averaged over seeds, and the measured T_eps.
    Regret {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        episodes: u64,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta: f64,
    },
    /// Every closed-form bound for an instance.
    Bounds {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta: f64,
    },
    /// Seed sweep described by a JSON experiment config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a verification suite with pinned seeds.
    Verify {
        #[arg(long, value_enum)]
        suite: Suite,
    },
}

#[derive(Args)]
struct GenArgs {
    /// S A H GAP
    #[arg(long, num_args = 4, value_names = ["S", "A", "H", "GAP"], conflicts_with = "random", required_unless_present = "random")]
    tree: Option<Vec<String>>,
    /// S A H SEED
    #[arg(long, num_args = 4, value_names = ["S", "A", "H", "SEED"])]
    random: Option<Vec<String>>,
    /// Deterministic transitions for --random.
    #[arg(long, requires = "random")]
    deterministic: bool,
    /// Bernoulli rewards for --tree.
    #[arg(long, requires = "tree")]
    bernoulli: bool,
    /// Output file name inside --out-dir.
    #[arg(long, default_value = "mdp.json")]
    output: String,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum VariantArg {
    Stochastic,
    Deterministic,
}

enum Failure {
    Invariant(String),
    Config(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure::Config(e.to_string())
    }
}

macro_rules! cfg_err {
    ($e:expr) => {
        $e.map_err(|e| Failure::Config(e.to_string()))
    };
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, Failure> {
    s.parse().map_err(|_| Failure::Config(format!("cannot parse {what} from {s:?}")))
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>), Failure> {
    cfg_err!(fs::create_dir_all(dir))?;
    let path = dir.join(name);
    let file = cfg_err!(File::create(&path))?;
    Ok((path, BufWriter::new(file)))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    if let Some(j) = cli.jobs {
        cfg_err!(rayon::ThreadPoolBuilder::new().num_threads(j).build_global())?;
    }
    let out = cli.out_dir.as_path();
    match cli.command {
        Command::Gen(g) => {
            let mdp = if let Some(t) = g.tree {
                let spec =
                    TreeSpec::new(parse(&t[0], "S")?, parse(&t[1], "A")?, parse(&t[2], "H")?, parse(&t[3], "gap")?);
                cfg_err!(tree_mdp(&if g.bernoulli { spec.bernoulli() } else { spec }))?
            } else {
                let r = g.random.expect("clap enforces one source");
                let (s, a, h, seed) =
                    (parse(&r[0], "S")?, parse(&r[1], "A")?, parse(&r[2], "H")?, parse(&r[3], "seed")?);
                cfg_err!(random_mdp(s, a, h, seed, !g.deterministic))?
            };
            let (path, w) = create(out, &g.output)?;
            cfg_err!(write_mdp(&mdp, w))?;
            println!("wrote {}", path.display());
        }
        Command::Gaps { mdp, max_policies } => {
            let mdp = cfg_err!(load_mdp(mdp))?;
            let budget =
                max_policies.map_or_else(EnumerationBudget::default, |m| EnumerationBudget { max_policies: m });
            let report = cfg_err!(gap_report(&mdp, budget))?;
            let (path, w) = create(out, "gaps.csv")?;
            cfg_err!(report.write_csv(w))?;
            let ordering = check_gap_ordering(&report);
            println!(
                "wrote {} ({} reachable triplets, {} policies)",
                path.display(),
                report.num_reachable(),
                report.policies_enumerated
            );
            if !ordering.holds() {
                for v in &ordering.violations {
                    eprintln!("gap ordering violated at {v:?}");
                }
                return Err(Failure::Invariant("gap ordering".into()));
            }
        }
        Command::Run { mdp, epsilon, delta, variant, diagnostics, max_episodes } => {
            let mdp = cfg_err!(load_mdp(mdp))?;
            let config = BpiConfig {
                variant: match variant {
                    VariantArg::Stochastic => BonusVariant::Stochastic,
                    VariantArg::Deterministic => BonusVariant::Deterministic,
                },
                diagnostics,
                record_history: false,
                max_episodes,
            };
            let mut rng = cell_rng(cli.seed, "run", 0);
            let res = cfg_err!(run(&mdp, epsilon, delta, &config, &mut rng))?;
            let (path, w) = create(out, "run.json")?;
            cfg_err!(serde_json::to_writer_pretty(w, &res))?;
            println!(
                "tau={} stopped={} success={} value={:.6} optimal={:.6} good_event={}",
                res.tau,
                res.stopped,
                res.success,
                res.recommended_value,
                res.optimal_value,
                res.good_event_holds()
            );
            println!("wrote {}", path.display());
            if res.diagnostics.as_ref().is_some_and(|d| !d.lemmas.holds()) {
                return Err(Failure::Invariant("lemma check failed".into()));
            }
        }
        Command::Regret { mdp, episodes, seeds, epsilon, delta } => {
            let mdp = cfg_err!(load_mdp(mdp))?;
            if seeds == 0 || episodes == 0 {
                return Err(Failure::Config("episodes and seeds must be positive".into()));
            }
            let seed_list: Vec<u64> = (0..seeds as u64).map(|k| derive_u64(cli.seed, "regret", k)).collect();
            let est = measure_t_epsilon_with_seeds(&mdp, epsilon, delta, episodes, &seed_list);
            let (path, w) = create(out, "regret.csv")?;
            let mut csv = csv::Writer::from_writer(w);
            cfg_err!(csv.write_record(["t", "avg_regret", "cum_regret"]))?;
            for (k, avg) in est.mean_average_regret.iter().enumerate() {
                let t = k + 1;
                cfg_err!(csv.write_record([t.to_string(), avg.to_string(), (avg * t as f64).to_string()]))?;
            }
            let t_eps = est.t_epsilon.map_or("not-reached".to_string(), |t| t.to_string());
            cfg_err!(csv.write_record(["t_epsilon", t_eps.as_str(), ""]))?;
            cfg_err!(csv.flush())?;
            println!("T_eps={t_eps} (threshold {}, {seeds} seeds, {episodes} episodes)", est.threshold());
            println!("wrote {}", path.display());
        }
        Command::Bounds { mdp, epsilon, delta } => {
            let mdp = cfg_err!(load_mdp(mdp))?;
            let gaps = cfg_err!(gap_report(&mdp, EnumerationBudget::default()))?;
            let report = cfg_err!(bound_report(&gaps, delta, epsilon))?;
            let (summary, w) = create(out, "bounds.csv")?;
            cfg_err!(report.write_summary_csv(w))?;
            let (contrib, w) = create(out, "bound_contributions.csv")?;
            cfg_err!(report.write_contributions_csv(w))?;
            for (name, value) in report.summary_rows() {
                println!("{name:<30} {value:.6e}");
            }
            println!("wrote {} and {}", summary.display(), contrib.display());
        }
        Command::Sweep { config } => {
            let mut config = ExperimentConfig::load(config)?;
            if cli.jobs.is_some() {
                config.jobs = cli.jobs;
            }
            let table = sweep(&config)?;
            let dir = if cli.out_dir == Path::new("out") { config.out_dir.clone() } else { cli.out_dir.clone() };
            let (csv, manifest) = write_sweep(&config, &table, &dir)?;
            for row in table.summary_rows() {
                println!(
                    "{}: {} cells, {} errors, success rate {}",
                    row.instance,
                    row.cells.unwrap_or(0),
                    row.errors.unwrap_or(0),
                    row.success_rate.map_or("-".into(), |r| format!("{r:.3}"))
                );
            }
            println!("wrote {} and {}", csv.display(), manifest.display());
        }
        Command::Verify { suite } => {
            let report = verify(suite, cli.seed)?;
            print!("{report}");
            if !report.passed() {
                return Err(Failure::Invariant(format!("suite {suite:?} failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invariant(msg)) => {
            eprintln!("invariant failure: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
