use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use optomag::params::RegimeReport;
use optomag::scenarios::{
    derive_table, fig3_crossing, run_appendix_c, run_derive, run_fig2, run_fig3, run_fig4, run_fig5, run_sweep,
    sweep_grid, write_derive_csv, write_regime_csv, ConfigError, ScenarioConfig, ScenarioError, SweepSeries,
};
use optomag::dynamics::TimeSeries;

#[derive(Parser)]
#[command(name = "optomag", version, about = "Optomechanically mediated spin–magnon coupling: cascade and dynamics")]
struct Cli {
    /// Configuration file (`key = value` lines, `#` comments).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Override a configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Run even when the regime validation reports a mandatory failure.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the full parameter cascade and the regime report.
    Derive,
    /// Photon numbers with and without the mechanical mode.
    Fig2,
    /// Polariton spectrum against the squeezed-mode coupling.
    Fig3,
    /// Enhancement of the spin–polariton coupling near criticality.
    Fig4,
    /// Spin–magnon exchange: polariton, second-order and effective dynamics.
    Fig5,
    /// Decay-dressed coupling magnitudes at the critical point.
    AppendixC,
    /// Evaluate the cascade over a grid of one input.
    Sweep {
        /// Key to vary (defaults to `sweep_var`).
        #[arg(long)]
        var: Option<String>,
        #[arg(long)]
        from: Option<f64>,
        #[arg(long)]
        to: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        /// Logarithmic spacing.
        #[arg(long)]
        log: bool,
    },
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig, ScenarioError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| ConfigError::Invalid(format!("cannot read {}: {e}", path.display())))?;
            ScenarioConfig::parse(&text)?
        }
        None => ScenarioConfig::default(),
    };
    for assignment in &cli.set {
        cfg.apply_override(assignment)?;
    }
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, ScenarioError> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_series(dir: &Path, name: &str, series: &TimeSeries) -> Result<(), ScenarioError> {
    let mut w = create(dir, name)?;
    series.write_csv(&mut w)?;
    w.flush()?;
    println!("wrote {}", dir.join(name).display());
    Ok(())
}

fn write_sweep(dir: &Path, name: &str, series: &SweepSeries) -> Result<(), ScenarioError> {
    let mut w = create(dir, name)?;
    series.write_csv(&mut w)?;
    w.flush()?;
    println!("wrote {}", dir.join(name).display());
    Ok(())
}

fn print_regime(report: &RegimeReport) {
    println!("{:<28} {:>14} {:>14} {:>12}  status", "condition", "left", "right", "margin");
    for c in &report.conditions {
        let status = match (c.pass, c.mandatory) {
            (true, _) => "ok",
            (false, true) => "FAIL",
            (false, false) => "warn",
        };
        println!("{:<28} {:>14.6e} {:>14.6e} {:>12.4e}  {status}", c.name, c.left, c.right, c.margin);
    }
}

fn run(cli: &Cli) -> Result<(), ScenarioError> {
    let mut cfg = load_config(cli)?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Derive => {
            let result = run_derive(&cfg)?;
            for (name, value, unit) in derive_table(&result.derived) {
                println!("{name:<20} {value:>16.8e} {unit}");
            }
            println!();
            print_regime(&result.report);
            let mut w = create(out, "derive.csv")?;
            write_derive_csv(&cfg, &result, &mut w)?;
            w.flush()?;
            let mut w = create(out, "regime.csv")?;
            write_regime_csv(&result.report, &mut w)?;
            w.flush()?;
            println!("wrote {} and {}", out.join("derive.csv").display(), out.join("regime.csv").display());
        }
        Command::Fig2 => {
            let result = run_fig2(&cfg)?;
            for d in &result.deviation.deviations {
                println!("max |{0}_lab - {0}_eliminated| = {1:.6e} (rms {2:.3e})", d.name, d.max, d.rms);
            }
            if let Some(c) = result.convergence {
                println!("cutoff-doubling change = {c:.3e}");
            }
            write_series(out, "fig2_lab.csv", &result.lab)?;
            write_series(out, "fig2_eliminated.csv", &result.eliminated)?;
        }
        Command::Fig3 => {
            let series = run_fig3(&cfg)?;
            if let Some(x) = fig3_crossing(&series) {
                println!("Omega_A^2 crosses zero at G_sq/W_c = {x:.6}");
            }
            write_sweep(out, "fig3.csv", &series)?;
        }
        Command::Fig4 => write_sweep(out, "fig4.csv", &run_fig4(&cfg)?)?,
        Command::Fig5 => {
            let result = run_fig5(&cfg, cli.force)?;
            let r = &result.report;
            if !r.regime.all_mandatory_pass() {
                eprintln!("warning: running outside the validated regime (--force)");
                print_regime(&r.regime);
            }
            for d in &r.deviation_second_order.deviations {
                println!("max |{0}_polariton - {0}_second_order| = {1:.4e}", d.name, d.max);
            }
            println!("max <A^dag A> = {:.4e}", r.max_lbp_occupation);
            println!(
                "transfer time = {:.6e} s (pi/(2 G_eff) = {:.6e} s, rel. error {:.2e})",
                r.transfer_time,
                r.expected_transfer_time,
                r.transfer_error()
            );
            let peaks: Vec<String> = r.open_maxima.iter().map(|(_, v)| format!("{v:.4}")).collect();
            println!("open-system population maxima: {}", peaks.join(", "));
            write_series(out, "fig5_polariton.csv", &result.polariton)?;
            write_series(out, "fig5_second_order.csv", &result.second_order)?;
            write_series(out, "fig5_effective.csv", &result.effective)?;
            write_series(out, "fig5_effective_open.csv", &result.effective_open)?;
        }
        Command::AppendixC => write_sweep(out, "appendix_c.csv", &run_appendix_c(&cfg)?)?,
        Command::Sweep {
            var,
            from,
            to,
            points,
            log,
        } => {
            let numeric = |v: f64| format!("{v:e}");
            if let Some(v) = var {
                cfg.set("sweep_var", v)?;
            }
            if let Some(v) = from {
                cfg.set("sweep_from", &numeric(*v))?;
            }
            if let Some(v) = to {
                cfg.set("sweep_to", &numeric(*v))?;
            }
            if let Some(n) = points {
                cfg.set("sweep_points", &n.to_string())?;
            }
            if *log {
                cfg.set("sweep_scale", "log")?;
            }
            let grid = sweep_grid(&cfg)?;
            let var = cfg.raw("sweep_var").to_string();
            let series = run_sweep(&cfg, &var, &grid)?;
            let failures = series
                .text("error")
                .map_or(0, |e| e.iter().filter(|s| !s.is_empty()).count());
            if failures > 0 {
                eprintln!("{failures} of {} points failed; see the error column", grid.len());
            }
            write_sweep(out, "sweep.csv", &series)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
