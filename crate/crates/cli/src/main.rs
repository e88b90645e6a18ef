//! `annuity-ruin`: solve, verify, simulate and sweep the survival
//! probability of the annuity-payments model with risky investment.
//!
//! Exit codes: 0 ok, 1 invalid input, 2 numerical failure (including failed
//! verification checks), 3 model outside the analytic hypothesis.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use annuity_ruin::assembly::write_table;
use annuity_ruin::config::{Overrides, RunConfig};
use annuity_ruin::mc::write_outcomes;
use annuity_ruin::pipeline::{
    self, report, run_simulate, run_solve, run_sweep, run_verify, write_sweep, SimulateRecord, SweepParam,
};
use annuity_ruin::{Error, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "annuity-ruin", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for Φ and Ψ; writes table.csv, summary.json and report.txt.
    Solve(Common),
    /// Run the invariant checks and print a pass/fail table.
    Verify(Common),
    /// Monte-Carlo ruin frequencies at the configured initial capitals.
    Simulate(Common),
    /// Re-solve over a range of one parameter; writes sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// One of a, r, sigma, kappa, c, lambda.
        #[arg(long)]
        param: String,
        #[arg(long, allow_hyphen_values = true)]
        from: f64,
        #[arg(long, allow_hyphen_values = true)]
        to: f64,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        /// Attach Monte-Carlo estimates to every point.
        #[arg(long)]
        mc: bool,
    },
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: the config's "out", else ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    u0_safety: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<(RunConfig, PathBuf)> {
        let mut cfg = RunConfig::load(&self.config)?;
        cfg.apply(&Overrides {
            seed: self.seed,
            u0_safety: self.u0_safety,
            tol: self.tol,
            paths: self.paths,
            horizon: self.horizon,
        })?;
        let out = self
            .out
            .clone()
            .or_else(|| cfg.out.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok((cfg, out))
    }
}

fn write_json<T: serde::Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn solve(common: &Common) -> Result<()> {
    let (cfg, out) = common.load()?;
    let result = run_solve(&cfg)?;
    fs::create_dir_all(&out)?;
    write_table(&result.rows, create(&out.join("table.csv"))?)?;
    write_json(&out.join("summary.json"), &result.summary)?;
    let text = report(&result);
    fs::write(out.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn verify(common: &Common) -> Result<bool> {
    let (cfg, out) = common.load()?;
    let rep = run_verify(&cfg)?;
    fs::create_dir_all(&out)?;
    write_json(&out.join("verify.json"), &rep)?;
    print!("{}", rep.render());
    Ok(rep.all_passed())
}

fn simulate(common: &Common) -> Result<()> {
    let (cfg, out) = common.load()?;
    let sim = run_simulate(&cfg)?;
    fs::create_dir_all(&out)?;
    let records: Vec<SimulateRecord<'_>> = sim
        .estimates
        .iter()
        .enumerate()
        .map(|(i, e)| SimulateRecord {
            estimate: e,
            psi_solver: sim.analytic.as_ref().map(|a| a[i]),
        })
        .collect();
    write_json(&out.join("mc.json"), &records)?;
    for (e, o) in sim.estimates.iter().zip(&sim.outcomes) {
        write_outcomes(o, create(&out.join(format!("paths_u{}.csv", e.u)))?)?;
    }
    println!("{:>10} {:>10} {:>10} {:>12} {:>12}", "u", "p_hat", "ci", "bias_note", "psi_solver");
    for r in &records {
        let e = r.estimate;
        let psi = r.psi_solver.map(|p| format!("{p:.6}")).unwrap_or_else(|| "-".into());
        println!("{:>10} {:>10.6} {:>10.6} {:>12.3e} {:>12}", e.u, e.p_hat, e.ci_halfwidth, e.bias_note, psi);
    }
    Ok(())
}

fn sweep(common: &Common, param: &str, from: f64, to: f64, steps: usize, mc: bool) -> Result<()> {
    let (cfg, out) = common.load()?;
    let param: SweepParam = param.parse()?;
    let s = run_sweep(&cfg, param, from, to, steps, mc)?;
    fs::create_dir_all(&out)?;
    write_sweep(&s, create(&out.join("sweep.csv"))?)?;
    write_json(&out.join("sweep.json"), &s)?;
    for (lo, hi) in &s.gamma_one_brackets {
        println!("gamma = 1 between {} = {lo} and {hi}", param.name());
    }
    if param == SweepParam::Kappa {
        if let Some(k) = pipeline::gamma_one_kappa(&cfg.params()) {
            println!("analytic threshold kappa = {k}");
        }
    }
    println!("{} points written to {}", s.rows.len(), out.join("sweep.csv").display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Solve(c) => solve(c).map(|_| true),
        Command::Verify(c) => verify(c),
        Command::Simulate(c) => simulate(c).map(|_| true),
        Command::Sweep {
            common,
            param,
            from,
            to,
            steps,
            mc,
        } => sweep(common, param, *from, *to, *steps, *mc).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: verification failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    e.exit_code() as u8
}
