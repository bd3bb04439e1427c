use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dmval_pipeline::config::{write_json, PipelineConfig};
use dmval_pipeline::error::CliResult;
use dmval_pipeline::synth::SynthConfig;
use dmval_pipeline::{
    extract, gridsearch, load_manifest, load_train_results, synth, train, validate,
};

#[derive(Parser)]
#[command(
    name = "dmval",
    version,
    about = "Learn driver models from trajectory data and validate them"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads, 0 for all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    c: Option<f64>,
    #[arg(long, global = true)]
    sigma_x: Option<f64>,
    #[arg(long, global = true)]
    sigma_y: Option<f64>,
    /// Planning and segment horizon in frames.
    #[arg(long, global = true)]
    horizon: Option<usize>,
    /// Longitudinal action bounds as MIN,MAX.
    #[arg(long, global = true, value_parser = parse_bounds, allow_hyphen_values = true)]
    ax_bounds: Option<(f64, f64)>,
    /// Lateral action bounds as MIN,MAX.
    #[arg(long, global = true, value_parser = parse_bounds, allow_hyphen_values = true)]
    ay_bounds: Option<(f64, f64)>,
}

#[derive(Subcommand)]
enum Command {
    /// Extract lane-change demonstrations and write the manifest.
    Extract,
    /// Fit reward weights for every demonstration in the manifest.
    Train,
    /// Roll out converged agents and write the validation report.
    Validate,
    /// Rank feature constants on the leading demonstrations.
    Gridsearch,
    /// Write a seeded synthetic corpus into the data directory.
    Synth {
        #[arg(long, default_value_t = 2)]
        recordings: u32,
        #[arg(long, default_value_t = 3)]
        changers: usize,
        #[arg(long, default_value_t = 4)]
        followers: usize,
        #[arg(long, default_value_t = 250)]
        frames: usize,
    },
    /// Extract, train and validate.
    Run,
}

fn parse_bounds(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected MIN,MAX, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok((p(a)?, p(b)?))
}

fn resolve(c: &Common) -> CliResult<PipelineConfig> {
    let mut cfg = match &c.config {
        Some(p) => PipelineConfig::from_file(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = &c.data {
        cfg.data_dir = v.clone();
    }
    if let Some(v) = &c.out {
        cfg.out_dir = v.clone();
    }
    if let Some(v) = c.jobs {
        cfg.jobs = v;
    }
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if let Some(v) = c.c {
        cfg.constants.c = v;
    }
    if let Some(v) = c.sigma_x {
        cfg.constants.sigma_x = v;
    }
    if let Some(v) = c.sigma_y {
        cfg.constants.sigma_y = v;
    }
    if let Some(v) = c.horizon {
        cfg.agent.horizon = v;
        cfg.optimizer.horizon = v;
    }
    if let Some(v) = c.ax_bounds {
        cfg.agent.ax_bounds = v;
    }
    if let Some(v) = c.ay_bounds {
        cfg.agent.ay_bounds = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Exit status: 0 on success, 4 when some demonstrations could not be
/// processed.
fn execute(cli: &Cli) -> CliResult<u8> {
    let cfg = resolve(&cli.common)?;
    match &cli.command {
        Command::Extract => {
            let m = extract::cmd_extract(&cfg)?;
            eprintln!(
                "{} demonstrations from {} recordings, {} excluded",
                m.total_demos,
                m.recordings.len(),
                m.excluded_recordings.len()
            );
            Ok(0)
        }
        Command::Train => {
            let s = train::cmd_train(&cfg, &load_manifest(&cfg)?)?;
            print_json(&s);
            Ok(if s.errored > 0 { 4 } else { 0 })
        }
        Command::Validate => {
            let r =
                validate::cmd_validate(&cfg, &load_manifest(&cfg)?, &load_train_results(&cfg)?)?;
            report_summary(&r);
            Ok(if r.rollout_failures.is_empty() { 0 } else { 4 })
        }
        Command::Gridsearch => {
            let ranking = gridsearch::cmd_gridsearch(&cfg, &load_manifest(&cfg)?)?;
            if let Some(best) = ranking.first() {
                print_json(best);
            }
            Ok(0)
        }
        Command::Synth {
            recordings,
            changers,
            followers,
            frames,
        } => {
            let sc = SynthConfig {
                recordings: *recordings,
                changers: *changers,
                followers: *followers,
                frames: *frames,
                seed: cfg.seed,
            };
            let ids = synth::write_corpus(&sc, &cfg.data_dir)?;
            write_json(&cfg.data_dir.join("synth.json"), &sc)?;
            eprintln!("wrote recordings {ids:?} to {}", cfg.data_dir.display());
            Ok(0)
        }
        Command::Run => {
            let r = dmval_pipeline::run_all(&cfg)?;
            report_summary(&r);
            Ok(if r.rollout_failures.is_empty() { 0 } else { 4 })
        }
    }
}

fn report_summary(r: &validate::ValidationReport) {
    eprintln!(
        "{} of {} demonstrations converged, {} rollouts, {} rollout failures",
        r.demos_converged,
        r.demos_trained,
        r.rollouts,
        r.rollout_failures.len()
    );
    if let Some(t) = &r.tactical {
        eprintln!(
            "desirable behavior: model {:.1}%, human {:.1}%",
            t.model_desirable_percent, t.human_desirable_percent
        );
    }
}

fn print_json<T: serde::Serialize>(value: &T) {
    if let Ok(text) = serde_json::to_string_pretty(value) {
        println!("{text}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
