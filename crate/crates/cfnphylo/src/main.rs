//! Command-line surface: simulation, reconstruction, sweeps, majority
//! gain evaluation, information-theoretic checks and calibration.
//!
//! Exit codes: 0 success, 1 experiment-level failure, 2 usage/parse error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use cfnphylo::experiment::{
    calibrate_constants, run_sweep, run_trials, ExperimentConfig, RegimeKind,
};
use cfnphylo::info::{
    data_processing_check, fano_max_success, mi_root_boundary_check, n_topologies,
    ExactDistribution,
};
use cfnphylo::majority::{exact_maj_gain_const, monte_carlo_maj_gain};
use cfnphylo::reconstruct::{
    reconstruct_fixed, reconstruct_general, tree_from_metric, ReconstructionConfig, Regime,
};
use cfnphylo::sample::sample_cfn_leaves;
use cfnphylo::tree::{BalancedTree, EdgeParams};
use cfnphylo::{newick, Error};

#[derive(Parser)]
#[command(name = "cfnphylo", about = "CFN tree simulation and reconstruction")]
struct Cli {
    /// Declarative experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample a CFN process on a random topology; write tree and samples.
    Simulate,
    /// Run reconstruction trials per the config; write reports.
    Reconstruct,
    /// Sweep (q, k) grids and extract the k*(n) curve.
    Sweep {
        /// Comma-separated subtree levels.
        #[arg(long, value_delimiter = ',')]
        qs: Vec<usize>,
        /// Comma-separated sample counts to probe, increasing.
        #[arg(long, value_delimiter = ',')]
        k_grid: Vec<usize>,
    },
    /// Evaluate the majority gain exactly and by Monte Carlo.
    MajorityGain {
        #[arg(long, default_value_t = 2)]
        b: usize,
        #[arg(long, default_value_t = 2)]
        ell: usize,
        #[arg(long)]
        theta: f64,
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        #[arg(long, default_value_t = 0)]
        mc_samples: usize,
    },
    /// Run the exact information-theoretic checks and emit a report.
    InfoCheck,
    /// Calibrate operational constants (ell, beta, c-hat) and write them.
    Calibrate {
        #[arg(long, default_value_t = 2)]
        b: usize,
        #[arg(long)]
        theta: f64,
        #[arg(long, default_value_t = 2)]
        q: usize,
        #[arg(long, default_value_t = 50)]
        trials: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .is_err()
        {
            eprintln!("warning: thread pool already initialized");
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Parse { .. } | Error::InvalidParameter(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn load_config(cli: &Cli) -> cfnphylo::Result<ExperimentConfig> {
    let path = cli.config.as_ref().ok_or_else(|| {
        Error::InvalidParameter("this subcommand requires --config <path>".into())
    })?;
    let text = fs::read_to_string(path)?;
    let mut cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        col: e.column(),
        msg: e.to_string(),
    })?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn write_out<T: Serialize>(dir: &Path, name: &str, value: &T) -> cfnphylo::Result<()> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value).unwrap())?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run(cli: &Cli) -> cfnphylo::Result<()> {
    match &cli.cmd {
        Cmd::Simulate => {
            let cfg = load_config(cli)?;
            let tree = BalancedTree::random_uniform_topology(cfg.b, cfg.q, cfg.seed)?;
            let mut params = match cfg.theta {
                cfnphylo::experiment::ThetaSpec::Constant { value } => {
                    EdgeParams::constant(&tree, value)
                }
                cfnphylo::experiment::ThetaSpec::Interval { lo, hi } => {
                    EdgeParams::uniform_theta(&tree, lo, hi, cfg.seed)
                }
            };
            params.eta = vec![cfg.eta; tree.n_leaves()];
            params.root_dist = cfg.root_dist;
            let samples = sample_cfn_leaves(&tree, &params, cfg.k, cfg.seed)?;
            fs::create_dir_all(&cli.out)?;
            fs::write(cli.out.join("tree.nwk"), newick::emit(&tree, &params))?;
            match cli.format {
                Format::Csv => {
                    let mut buf = Vec::new();
                    samples.write_text(&mut buf)?;
                    fs::write(cli.out.join("samples.txt"), buf)?;
                }
                Format::Json => {
                    let mut buf = Vec::new();
                    samples.write_binary(&mut buf)?;
                    fs::write(cli.out.join("samples.bin"), buf)?;
                }
            }
            println!("simulated n={} k={}", tree.n_leaves(), cfg.k);
            Ok(())
        }
        Cmd::Reconstruct => {
            let cfg = load_config(cli)?;
            let report = run_trials(&cfg)?;
            write_out(&cli.out, "report.json", &report)?;
            // JSON-lines stage diagnostics
            let mut lines = String::new();
            for o in &report.outcomes {
                for s in &o.stages {
                    lines.push_str(
                        &json!({"trial": o.trial, "stage": s, "success": o.success}).to_string(),
                    );
                    lines.push('\n');
                }
            }
            fs::write(cli.out.join("stages.jsonl"), lines)?;
            // run one representative trial to export artifacts
            if report.successes > 0 {
                export_single(&cfg, &cli.out)?;
            }
            if report.success_rate < cfg.target_rate {
                return Err(Error::RecoveryFailed {
                    u: 0,
                    v: 0,
                    reason: format!(
                        "success rate {:.3} below target {:.3}",
                        report.success_rate, cfg.target_rate
                    ),
                });
            }
            Ok(())
        }
        Cmd::Sweep { qs, k_grid } => {
            let cfg = load_config(cli)?;
            let points = run_sweep(&cfg, qs, k_grid)?;
            write_out(&cli.out, "sweep.json", &points)?;
            let mut csv = String::from("q,n,k_star\n");
            for p in &points {
                csv.push_str(&format!(
                    "{},{},{}\n",
                    p.q,
                    p.n,
                    p.k_star.map_or("NA".into(), |k| k.to_string())
                ));
            }
            fs::write(cli.out.join("kstar.csv"), csv)?;
            Ok(())
        }
        Cmd::MajorityGain {
            b,
            ell,
            theta,
            eta,
            mc_samples,
        } => {
            let tree = BalancedTree::bary(*b, *ell)?;
            // exact evaluation degrades to null when the gadget exceeds
            // the enumeration limit; bad parameters still error out
            let exact = match exact_maj_gain_const(&tree, *theta, *eta) {
                Ok(v) => Some(v),
                Err(Error::TooLarge { .. }) => None,
                Err(e) => return Err(e),
            };
            let mc = if *mc_samples > 0 {
                let th = vec![*theta; tree.node_count()];
                let et = vec![*eta; tree.n_leaves()];
                Some(monte_carlo_maj_gain(&tree, &th, &et, *mc_samples, 1)?)
            } else {
                None
            };
            let out = json!({
                "b": b, "ell": ell, "theta": theta, "eta": eta,
                "exact": exact,
                "monte_carlo": mc.map(|(e, se)| json!({"estimate": e, "stderr": se})),
            });
            write_out(&cli.out, "majority_gain.json", &out)?;
            Ok(())
        }
        Cmd::InfoCheck => {
            let mut checks = Vec::new();
            for (b, q) in [(2usize, 1usize), (2, 2), (2, 3), (2, 4), (3, 1), (3, 2), (4, 1), (4, 2)] {
                for i in 0..20 {
                    let theta = i as f64 / 19.0;
                    let (mi, bound, ok) = mi_root_boundary_check(b, q, theta)?;
                    checks.push(json!({
                        "check": "mi_decay", "b": b, "q": q, "theta": theta,
                        "mi": mi, "bound": bound, "pass": ok,
                    }));
                }
            }
            checks.push(json!({
                "check": "n_topologies",
                "values": {"b2_l2": n_topologies(2,2)?.to_string(),
                            "b2_l3": n_topologies(2,3)?.to_string(),
                            "b3_l2": n_topologies(3,2)?.to_string()},
                "pass": n_topologies(2,3)?.to_string() == "315",
            }));
            let fano = fano_max_success(0.5, 4)?;
            checks.push(json!({"check": "fano", "h_cond": 0.5, "m": 4, "delta_max": fano}));
            // one explicit Markov chain for the data-processing relations
            let mut chain = vec![0.0; 8];
            let px = [0.5, 0.5];
            let pyx = [[0.9, 0.1], [0.2, 0.8]];
            let pzy = [[0.7, 0.3], [0.4, 0.6]];
            for x in 0..2 {
                for y in 0..2 {
                    for z in 0..2 {
                        chain[(x * 2 + y) * 2 + z] = px[x] * pyx[x][y] * pzy[y][z];
                    }
                }
            }
            let joint = ExactDistribution::new(vec![2, 2, 2], chain)?;
            checks.push(json!({
                "check": "data_processing",
                "pass": data_processing_check(&joint)?,
            }));
            let all_pass = checks
                .iter()
                .all(|c| c.get("pass").map_or(true, |p| p.as_bool() == Some(true)));
            write_out(&cli.out, "info_checks.json", &json!({"checks": checks, "all_pass": all_pass}))?;
            if !all_pass {
                return Err(Error::InvalidParameter("an information check failed".into()));
            }
            Ok(())
        }
        Cmd::Calibrate {
            b,
            theta,
            q,
            trials,
        } => {
            let seed = cli.seed.unwrap_or(1);
            let rec = calibrate_constants(*b, *theta, *q, *trials, seed)?;
            write_out(&cli.out, "constants.json", &rec)?;
            Ok(())
        }
    }
}

/// Export tree/metric artifacts from one seeded trial of the config.
fn export_single(cfg: &ExperimentConfig, out: &Path) -> cfnphylo::Result<()> {
    let seed = cfnphylo::seed::derive_seed(cfg.seed, 0x747269616c, 0);
    let tree = BalancedTree::random_uniform_topology(cfg.b, cfg.q, seed)?;
    let mut params = match cfg.theta {
        cfnphylo::experiment::ThetaSpec::Constant { value } => EdgeParams::constant(&tree, value),
        cfnphylo::experiment::ThetaSpec::Interval { lo, hi } => {
            EdgeParams::uniform_theta(&tree, lo, hi, seed)
        }
    };
    params.eta = vec![cfg.eta; tree.n_leaves()];
    let samples = sample_cfn_leaves(
        &tree,
        &params,
        cfg.k,
        cfnphylo::seed::derive_seed(seed, 0x73616d70, 0),
    )?;
    let rcfg = ReconstructionConfig {
        b: cfg.b,
        ell: if cfg.ell > 0 { cfg.ell } else { 2 },
        regime: match cfg.regime {
            RegimeKind::Fixed => Regime::FixedTheta {
                theta: cfg.theta.min(),
            },
            RegimeKind::General => Regime::General {
                theta_min: cfg.theta.min(),
                theta_max: cfg.theta.max(),
                beta: if cfg.beta > 0.0 { cfg.beta } else { 0.1 },
                g: cfg.g,
            },
        },
        seed,
        neighborhood_cap: usize::MAX,
        max_stages: 64,
    };
    let result = match cfg.regime {
        RegimeKind::Fixed => reconstruct_fixed(&samples, &rcfg),
        RegimeKind::General => reconstruct_general(&samples, &rcfg),
    };
    if let Ok((pm, _)) = result {
        fs::write(out.join("metric.csv"), pm.to_csv())?;
        if let Ok(rebuilt) = tree_from_metric(&pm) {
            fs::write(out.join("reconstructed.nwk"), newick::emit_topology(&rebuilt))?;
        }
    }
    Ok(())
}
