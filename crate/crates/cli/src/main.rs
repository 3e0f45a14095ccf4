use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ionmux::circuit::CircuitPreset;
use ionmux::scenario::{
    parse_sweep_value, run_sweep, sweep_dir_name, to_canonical_string, Scenario, ScenarioError,
};
use ionmux::TrapLayout;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "ionmux", version, about = "Run multiplexed ion-trap control scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario and write report.json plus CSV series.
    Run {
        scenario: PathBuf,
        /// Output directory.
        #[arg(long, env = "IONMUX_OUT", default_value = "out")]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Run one instance per value, e.g. `params.freq_mhz=0.8,1.0`.
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Check a scenario and its referenced files without running it.
    Validate { scenario: PathBuf },
    /// Built-in presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Cmd::Run { scenario, out, seed, sweep } => run(&scenario, &out, seed, sweep.as_deref()),
        Cmd::Validate { scenario } => validate(&scenario),
        Cmd::Presets { action: PresetAction::List } => {
            for name in TrapLayout::preset_names() {
                println!("layout\t{name}");
            }
            for name in CircuitPreset::preset_names() {
                println!("circuit\t{name}");
            }
            Ok(())
        }
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load(path: &Path, seed: Option<u64>) -> Result<Scenario, ScenarioError> {
    let s = Scenario::from_path(path)?;
    Ok(match seed {
        Some(seed) => s.with_seed(seed),
        None => s,
    })
}

fn validate(path: &Path) -> Result<(), ScenarioError> {
    let s = load(path, None)?;
    s.prepare()?;
    println!("{}: ok ({})", path.display(), s.id());
    Ok(())
}

fn run(path: &Path, out: &Path, seed: Option<u64>, sweep: Option<&str>) -> Result<(), ScenarioError> {
    let s = load(path, seed)?;
    let Some(sweep) = sweep else {
        let report = s.run()?;
        let dir = out.join(s.id());
        report.emit(&dir)?;
        for w in &report.warnings {
            eprintln!("warning: {w}");
        }
        println!("{}", dir.display());
        return Ok(());
    };
    let (param, list) = sweep.split_once('=').ok_or_else(|| ScenarioError::Validation {
        file: path.display().to_string(),
        msg: format!("--sweep expects param=a,b,c, got `{sweep}`"),
    })?;
    let values: Vec<Value> = list.split(',').map(|v| parse_sweep_value(v.trim())).collect();
    let reports = run_sweep(&s, param, &values)?;
    let mut merged = Vec::new();
    for (value, report) in &reports {
        let name = sweep_dir_name(s.id(), param, value);
        report.emit(out.join(&name))?;
        merged.push(json!({"value": value, "dir": name, "summary": report.summary}));
    }
    let doc = json!({"scenario": s.id(), "param": param, "runs": merged});
    let p = out.join(format!("{}__sweep.json", s.id()));
    std::fs::write(&p, to_canonical_string(&doc))
        .map_err(|e| ScenarioError::Output { path: p.display().to_string(), source: e })?;
    println!("{}", p.display());
    Ok(())
}
