use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use treefix_core::gw::{self, TreeEvent};
use treefix_core::harness::{self, ExperimentSpec};
use treefix_core::tree_lemmas;

const EXIT_VALIDATION: u8 = 2;
const EXIT_CHECK_FAILED: u8 = 3;

/// Majority dynamics on trees and stacks of trees.
#[derive(Debug, Parser)]
#[command(name = "treefix", version)]
struct Cli {
    /// Master seed (overrides the seed of a spec file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, env = "TREEFIX_JOBS")]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "TREEFIX_OUT")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment spec and store its records under the output directory.
    Simulate { spec: PathBuf },
    /// Print τ, τ̃, the event probabilities, λ* and the θ* bound.
    Analytics {
        /// Comma-separated tree degrees.
        #[arg(long = "K", value_delimiter = ',', required = true)]
        k: Vec<usize>,
        /// `start:stop:step` or a comma-separated list.
        #[arg(long)]
        theta_grid: String,
        #[arg(long, default_value_t = 1e-4)]
        grid_step: f64,
    },
    /// Check the Steiner-tree lemmas on random instances.
    Lemmas {
        #[arg(long, required = true)]
        selftest: bool,
        #[arg(long, default_value_t = 1000)]
        instances: usize,
    },
    /// Monte Carlo estimate of a rooted event against its fixed-point value.
    Oracle {
        #[arg(long, value_parser = parse_event)]
        event: TreeEvent,
        #[arg(long = "K")]
        k: usize,
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        depth: usize,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Rebuild and print the summary of a run directory.
    Report { run_dir: PathBuf },
}

fn parse_event(s: &str) -> Result<TreeEvent, String> {
    s.parse().map_err(|e: treefix_core::Error| e.to_string())
}

fn parse_grid(text: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let grid = if parts.len() == 3 {
        let (a, b, step): (f64, f64, f64) = (parts[0].parse()?, parts[1].parse()?, parts[2].parse()?);
        anyhow::ensure!(step > 0.0 && b >= a, "bad grid {text}");
        let n = ((b - a) / step + 1e-9).floor() as usize;
        // round away the accumulated step error so 0.938 prints as 0.938
        (0..=n).map(|i| ((a + i as f64 * step) * 1e12).round() / 1e12).collect()
    } else {
        text.split(',').map(|s| s.trim().parse::<f64>()).collect::<Result<Vec<_>, _>>()?
    };
    anyhow::ensure!(grid.iter().all(|t| (0.0..=1.0).contains(t)), "theta values must lie in [0, 1]");
    Ok(grid)
}

/// Shortest round-trip form, switching to exponent notation for tiny values.
fn num(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-4 {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

enum Outcome {
    Ok,
    CheckFailed,
}

fn analytics(ks: &[usize], grid: &[f64], grid_step: f64, out: &mut dyn Write) -> anyhow::Result<()> {
    writeln!(out, "K,theta,tau,tau_tilde,mu_leaf,mu_pair,lambda_star,theta_star")?;
    for &k in ks {
        let star = gw::theta_star_bound(k, grid_step).map(num).unwrap_or_else(|e| {
            eprintln!("K={k}: {e}");
            String::new()
        });
        for &theta in grid {
            writeln!(
                out,
                "{k},{theta},{},{},{},{},{},{star}",
                num(gw::tau(k, theta)?.value),
                num(gw::tau_tilde(k, theta)?.value),
                num(gw::mu_tree_plus_leaf(k, theta)?),
                num(gw::mu_tree_plus_pair(k, theta)?),
                num(gw::lambda_star(k, theta)?),
            )?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().context("configuring worker threads")?;
    }
    let seed = cli.seed.unwrap_or(0);
    let stdout = io::stdout();
    match cli.command {
        Command::Simulate { spec } => {
            let text = fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
            let mut spec = ExperimentSpec::from_toml(&text)?;
            if let Some(s) = cli.seed {
                spec.seed = s;
            }
            let out = cli.out.or_else(|| spec.output.clone().map(PathBuf::from)).unwrap_or_else(|| "runs".into());
            let dir = harness::run_and_persist(&spec, &out)?;
            eprintln!("wrote {}", dir.path.display());
            dir.summary.write_csv(stdout.lock())?;
            let flipped: usize = dir.records.iter().map(|r| r.core_flips).sum();
            if flipped > 0 {
                eprintln!("{flipped} core vertices flipped");
                return Ok(Outcome::CheckFailed);
            }
        }
        Command::Analytics { k, theta_grid, grid_step } => {
            let grid = parse_grid(&theta_grid).map_err(|e| treefix_core::Error::InvalidParameter(e.to_string()))?;
            match cli.out {
                Some(dir) => {
                    fs::create_dir_all(&dir)?;
                    let path = dir.join("analytics.csv");
                    analytics(&k, &grid, grid_step, &mut fs::File::create(&path)?)?;
                    eprintln!("wrote {}", path.display());
                }
                None => analytics(&k, &grid, grid_step, &mut stdout.lock())?,
            }
        }
        Command::Lemmas { selftest: _, instances } => {
            let mut all_passed = true;
            let mut out = stdout.lock();
            writeln!(out, "K,radius,instances,pair_families,failures,result")?;
            for (k, radius) in [(3, 6), (4, 3), (5, 3)] {
                let rep = tree_lemmas::lemma_selftest(k, radius, instances, seed)?;
                let failures = rep.steiner_defects
                    + rep.lemma_b1_failures
                    + rep.lemma_b3_failures
                    + rep.bad_bound_failures
                    + rep.overlapping_families
                    + rep.pairing_mismatches
                    + rep.short_families;
                writeln!(
                    out,
                    "{k},{radius},{},{},{failures},{}",
                    rep.instances,
                    rep.pair_families,
                    if rep.passed() { "pass" } else { "FAIL" }
                )?;
                all_passed &= rep.passed();
            }
            if !all_passed {
                return Ok(Outcome::CheckFailed);
            }
        }
        Command::Oracle { event, k, theta, depth, samples } => {
            let mc = gw::mc_estimate_event(k, event, theta, depth, samples, seed)?;
            let fixed = match event {
                TreeEvent::Leaf => gw::mu_tree_plus_leaf(k, theta)?,
                TreeEvent::Pair => gw::mu_tree_plus_pair(k, theta)?,
            };
            let allowance = (gw::truncated_event_probability(k, event, theta, depth)?
                - gw::truncated_event_probability(k, event, theta, depth + 2)?)
            .abs();
            let tolerance = 4.0 * mc.stderr + allowance + 1e-12;
            let pass = (fixed - mc.estimate).abs() <= tolerance;
            let mut out = stdout.lock();
            writeln!(out, "event,K,theta,depth,samples,estimate,stderr,fixed_point,tolerance,result")?;
            writeln!(
                out,
                "{},{k},{theta},{depth},{samples},{},{},{},{},{}",
                if event == TreeEvent::Leaf { "leaf" } else { "pair" },
                num(mc.estimate),
                num(mc.stderr),
                num(fixed),
                num(tolerance),
                if pass { "pass" } else { "FAIL" }
            )?;
            if !pass {
                return Ok(Outcome::CheckFailed);
            }
        }
        Command::Report { run_dir } => {
            let table = harness::report_run_directory(&run_dir)?;
            table.write_csv(stdout.lock())?;
        }
    }
    Ok(Outcome::Ok)
}

fn is_validation(err: &anyhow::Error) -> bool {
    use treefix_core::Error as E;
    err.downcast_ref::<E>().is_some_and(|e| {
        matches!(
            e,
            E::InvalidParameter(_)
                | E::InvalidRule(_)
                | E::Spec(_)
                | E::WeightSum(_)
                | E::VariantMismatch { .. }
                | E::ExclusionNotNeighbor { .. }
                | E::DepthGuardExceeded { .. }
                | E::UnpairedLayer(_)
                | E::EmptySpecialSet
                | E::TooFewSpecial(_)
        )
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(err) => {
            eprintln!("error: {err:#}");
            if is_validation(&err) {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
