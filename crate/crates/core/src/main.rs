use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use faircomp::error::Error;
use faircomp::experiments::demos::run_demo;
use faircomp::experiments::study::{build_universe, evaluate};
use faircomp::experiments::{run_scenario, write_outputs, Scenario};
use faircomp::model::{audit_individual_fairness, validate_metric};
use faircomp::subset::check_constrained_feasibility;

const EXIT_INVALID: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser)]
#[command(name = "faircomp", version, about = "Audit and compose fair classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file against the schema
    Validate { scenario: PathBuf },
    /// Run every composition of a scenario and write reports
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the scenario seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print one of the built-in walkthroughs
    Demo { name: String },
    /// Audit one stage of the first universe of a scenario
    Audit {
        scenario: PathBuf,
        #[arg(long, value_enum)]
        stage: Stage,
    },
    /// Whether a constrained cohort can be individually fair
    Feasibility {
        #[arg(long)]
        a_size: usize,
        #[arg(long)]
        b_size: usize,
        #[arg(short = 'n', long)]
        n: usize,
        #[arg(short = 'p', long)]
        p: f64,
        /// `BETA:GAMMA`, repeatable
        #[arg(long = "part", value_parser = parse_part, required = true)]
        parts: Vec<(f64, f64)>,
        /// Exit with status 3 when infeasible
        #[arg(long)]
        strict: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Stage {
    Metrics,
    Classifiers,
    Compositions,
}

fn parse_part(s: &str) -> Result<(f64, f64), String> {
    let (b, g) = s.split_once(':').ok_or("expected BETA:GAMMA")?;
    Ok((
        b.trim().parse().map_err(|e| format!("beta: {e}"))?,
        g.trim().parse().map_err(|e| format!("gamma: {e}"))?,
    ))
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Scenario(_) | Error::InvalidArgument(_) | Error::QuotaInfeasible(_) => ExitCode::from(EXIT_INVALID),
        Error::Infeasible(_) => ExitCode::from(EXIT_INFEASIBLE),
        _ => ExitCode::FAILURE,
    }
}

fn audit(scenario: &Scenario, stage: Stage) -> Result<(), Error> {
    let draw = build_universe(scenario, 0)?;
    match stage {
        Stage::Metrics => {
            for (task, m) in scenario.tasks.iter().zip(&draw.metrics) {
                let problems = validate_metric(m);
                println!("{}: {} elements, {} metric violation(s)", task.name, m.size(), problems.len());
                for p in problems.iter().take(10) {
                    println!("  {p}");
                }
            }
        }
        Stage::Classifiers => {
            for ((task, m), c) in scenario.tasks.iter().zip(&draw.metrics).zip(&draw.classifiers) {
                let r = audit_individual_fairness(m, c.probabilities(), scenario.epsilon)?;
                println!(
                    "{}: allocation {:.4}, {} of {} pairs in violation",
                    task.name,
                    c.allocation(),
                    r.violations.len(),
                    r.comparisons
                );
            }
        }
        Stage::Compositions => {
            for composition in &scenario.compositions {
                for o in evaluate(scenario, composition, &draw)? {
                    println!(
                        "{} / {}: {:.2}% pairs in violation, max excess {:.4}",
                        composition.label(),
                        scenario.tasks[o.task].name,
                        100.0 * o.audit.fraction_violating(),
                        o.audit.max_excess()
                    );
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { scenario } => match Scenario::load(&scenario) {
            Ok(s) => {
                println!(
                    "{}: ok ({} task(s), {} composition(s))",
                    s.name,
                    s.tasks.len(),
                    s.compositions.len()
                );
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Run { scenario, out, seed } => {
            let run = || -> Result<(), Error> {
                let mut s = Scenario::load(&scenario)?;
                if let Some(seed) = seed {
                    s.seed = seed;
                }
                let result = run_scenario(&s)?;
                write_outputs(&result, &out)?;
                for r in &result.rows {
                    println!(
                        "{:<32} {:<12} {:>7.2}%  avg {}  max {}",
                        r.composition_type,
                        r.task,
                        r.pct_pairs_violating,
                        r.avg_violation.map_or("-".into(), |v| format!("{v:.4}")),
                        r.max_violation.map_or("-".into(), |v| format!("{v:.4}"))
                    );
                }
                println!("wrote {}", out.display());
                Ok(())
            };
            run().map_or_else(|e| fail(&e), |()| ExitCode::SUCCESS)
        }
        Command::Demo { name } => match run_demo(&name) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Audit { scenario, stage } => Scenario::load(&scenario)
            .and_then(|s| audit(&s, stage))
            .map_or_else(|e| fail(&e), |()| ExitCode::SUCCESS),
        Command::Feasibility {
            a_size,
            b_size,
            n,
            p,
            parts,
            strict,
        } => match check_constrained_feasibility(a_size, b_size, n, p, &parts) {
            Ok(r) => {
                println!("mean selection in A at least {:.6}", r.mean_a_lower);
                println!("mean selection in B at most   {:.6}", r.mean_b_upper);
                println!("gap {:.6}, slack {:.6}", r.gap, r.slack);
                println!("largest feasible share for A {:.6}", r.p_max);
                println!("{}", if r.feasible { "feasible" } else { "infeasible" });
                if strict && !r.feasible {
                    ExitCode::from(EXIT_INFEASIBLE)
                } else {
                    ExitCode::SUCCESS
                }
            }
            Err(e) => fail(&e),
        },
    }
}
