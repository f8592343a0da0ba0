use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use omega_cli::error::CliError;
use omega_core::evolution::{check_aptness, AptnessOptions, Preset};
use omega_core::phase_grid::PhaseGrid;

#[derive(Parser)]
#[command(name = "omega", version, about = "Ordering-rule symbol calculus and backward-Euler time slicing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config and $OMEGA_OUTPUT_ROOT).
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// List the built-in hamiltonians and what the aptness diagnostic should report.
    ListPresets {
        /// Also run the aptness diagnostic at this ℏ.
        #[arg(long)]
        check: Option<f64>,
    },
    /// Pretty-print a binary symbol or matrix file.
    Dump {
        file: PathBuf,
        /// Number of leading entries to print.
        #[arg(long, default_value_t = 8)]
        preview: usize,
    },
}

fn list_presets(check: Option<f64>) -> Result<(), CliError> {
    if let Some(h) = check {
        if !(h > 0.0 && h.is_finite()) {
            return Err(CliError::validation("--check", format!("ℏ must be positive (got {h})")));
        }
    }
    for p in Preset::ALL {
        println!("{:<20} {}", p.name(), p.formula());
        println!("{:<20} expected: {}", "", p.expectation());
        if let Some(h) = check {
            let grid = PhaseGrid::square(64, 8.0, h).map_err(|e| CliError::from_core("--check", e))?;
            let r = &check_aptness(&p.hamiltonian::<f64>(), &grid, &[h], &AptnessOptions::default())[0];
            println!(
                "{:<20} hbar={h:.16e}: quasi-dissipative {} (min Re(if) {:.16e}), hypoelliptic {} (ratio {:.16e}), continuous {}, apt {}",
                "",
                r.quasi_dissipative,
                r.min_re_if,
                r.hypoelliptic,
                r.hypoelliptic_ratio,
                r.continuous,
                r.apt()
            );
        }
    }
    Ok(())
}

fn dump(file: &std::path::Path, preview: usize) -> Result<(), CliError> {
    let c = omega_core::container::read_file(file).map_err(|e| CliError::from_core(&file.display().to_string(), e))?;
    print!("{}", omega_core::container::describe(&c, preview));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, output } => omega_cli::run(&config, output.as_deref()).map(|report| {
            for line in &report.summary {
                println!("{line}");
            }
            println!("wrote {} files to {}", report.files.len(), report.dir.display());
        }),
        Command::ListPresets { check } => list_presets(check),
        Command::Dump { file, preview } => dump(&file, preview),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
