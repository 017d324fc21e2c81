use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use restoration::grid::{load_grid, Grid};
use restoration::runner::{self, RestorationReport, RunConfig};
use restoration::solver::StageMode;
use restoration::topology::FaultSpec;
use restoration::verify::{random_instance, RandomOptions};
use restoration::{Error, Result};

#[derive(Parser)]
#[command(name = "restore", version, about = "Post-fault restoration planning for distribution networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one fault and print the plan.
    Solve(Common),
    /// Re-evaluate a saved report's plan and run the verification checks.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Report written by `solve --out`.
        #[arg(long)]
        report: PathBuf,
    },
    /// Solve one fault and compare with exhaustive enumeration.
    Bruteforce(Common),
    /// Solve every fault of a list (`--fault` holds a JSON array) and write a CSV table.
    Batch(Common),
    /// Solve in lexicographic and weighted mode and list the differences.
    Compare(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Lex,
    Weighted,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long)]
    fault: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Use a generated test system when no grid is given.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(m) = self.mode {
            config.solver.mode = match m {
                Mode::Lex => StageMode::Lexicographic,
                Mode::Weighted => StageMode::Weighted,
            };
        }
        Ok(config)
    }

    fn grid(&self) -> Result<(Grid, Option<FaultSpec>)> {
        match (&self.grid, self.seed) {
            (Some(p), _) => Ok((load_grid(p)?, None)),
            (None, Some(seed)) => {
                let inst = random_instance(seed, &RandomOptions::default());
                Ok((inst.grid, Some(inst.fault)))
            }
            (None, None) => Err(Error::Precondition("either --grid or --seed is required".into())),
        }
    }

    fn case(&self) -> Result<(Grid, FaultSpec)> {
        let (grid, generated) = self.grid()?;
        let fault = match (&self.fault, generated) {
            (Some(p), _) => FaultSpec::load(p)?,
            (None, Some(f)) => f,
            (None, None) => return Err(Error::Precondition("--fault is required".into())),
        };
        Ok((grid, fault))
    }

    fn emit(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(p) => Ok(std::fs::write(p, text)?),
            None => {
                println!("{text}");
                Ok(())
            }
        }
    }
}

fn report_ok(r: &RestorationReport) -> bool {
    r.solved() && r.verified()
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Solve(c) => {
            let (grid, fault) = c.case()?;
            let report = runner::solve_case(&grid, &fault, &c.config()?)?;
            eprintln!("{}", report.summary_line());
            c.emit(&report.to_json())?;
            Ok(report_ok(&report))
        }
        Command::Verify { common: c, report } => {
            let (grid, fault) = c.case()?;
            let saved = RestorationReport::from_json(&std::fs::read_to_string(report)?)?;
            let checked = runner::verify_plan(&grid, &fault, &saved.plan, &c.config()?)?;
            eprintln!("{}", checked.summary_line());
            c.emit(&checked.to_json())?;
            Ok(report_ok(&checked))
        }
        Command::Bruteforce(c) => {
            let (grid, fault) = c.case()?;
            let cmp = runner::compare_with_oracle(&grid, &fault, &c.config()?)?;
            eprintln!(
                "{} | oracle {:?} | gaps {:?} | same plan {} | {} candidates, {} evaluated, {:.2} s",
                cmp.report.summary_line(),
                cmp.oracle_stage_values,
                cmp.gaps,
                cmp.same_plan,
                cmp.candidates,
                cmp.evaluated,
                cmp.oracle_time
            );
            c.emit(&serde_json::to_string_pretty(&cmp)?)?;
            Ok(cmp.agrees())
        }
        Command::Batch(c) => {
            let (grid, _) = c.grid()?;
            let path = c
                .fault
                .as_ref()
                .ok_or_else(|| Error::Precondition("--fault with a fault list is required".into()))?;
            let faults = FaultSpec::parse_list(&std::fs::read_to_string(path)?)?;
            let batch = runner::run_batch(&grid, &faults, &c.config()?)?;
            for r in &batch.reports {
                eprintln!("{}", r.summary_line());
            }
            c.emit(batch.table_csv().trim_end())?;
            Ok(batch.reports.iter().all(report_ok))
        }
        Command::Compare(c) => {
            let (grid, fault) = c.case()?;
            let cmp = runner::compare_modes(&grid, &fault, &c.config()?)?;
            eprintln!("lexicographic: {}", cmp.lexicographic.summary_line());
            eprintln!("weighted:      {}", cmp.weighted.summary_line());
            if cmp.identical {
                eprintln!("plans are identical");
            }
            for d in &cmp.differences {
                eprintln!("  {d}");
            }
            c.emit(&serde_json::to_string_pretty(&cmp)?)?;
            Ok(cmp.lexicographic.solved() && cmp.weighted.solved())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
