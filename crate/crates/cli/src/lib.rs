//! `alienzoo` command line.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use alienzoo_core::analysis::{analyze, write_quality_csv, write_summary_csv, write_tests_csv};
use alienzoo_core::bots::{run_cohort, BotKind, BotPolicy};
use alienzoo_core::cfe::compute_cfe;
use alienzoo_core::data::{generate_grid, smote_balance};
use alienzoo_core::export::{read_long_csv, read_survey_csv, write_long_csv, write_survey_csv};
use alienzoo_core::pipeline::TrainingRecipe;
use alienzoo_core::{
    CfeConfig, CfeMode, Condition, Experiment, GameEngine, GrowthModel, PlantVector,
};
use alienzoo_service::{load_engine, StudyConfig};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "alienzoo", version, about = "Alien Zoo study toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    MaxTarget,
    StrictImprove,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the labelled plant grid as CSV, optionally SMOTE-balanced.
    Generate {
        #[arg(long, default_value = "1")]
        experiment: Experiment,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
        /// Balance label bins with SMOTE.
        #[arg(long)]
        balanced: bool,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a growth model and write it as JSON.
    Train {
        #[arg(long, default_value = "1")]
        experiment: Experiment,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Override the default depth for the experiment.
        #[arg(long)]
        max_depth: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the counterfactual for one plant vector.
    Cfe {
        #[arg(long)]
        model: PathBuf,
        /// Leaves per plant, e.g. `0,5,0,1,0`.
        #[arg(long, allow_hyphen_values = true)]
        x: PlantVector,
        #[arg(long, value_enum, default_value = "max-target")]
        mode: ModeArg,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.09)]
        delta_improve: f64,
    },
    /// Run the study server.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Play a cohort of simulated participants and export their data.
    Simulate {
        #[arg(long)]
        policy: BotKind,
        #[arg(long, default_value_t = 20)]
        n: usize,
        /// Study configuration (model, CFE and timing settings).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Experiment when no configuration is given.
        #[arg(long, default_value = "1")]
        experiment: Experiment,
        /// Defaults to the arm the policy was built for.
        #[arg(long)]
        condition: Option<Condition>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Quality flags, per-trial summary, group tests and the mixed model.
    Analyze {
        /// Long-format trial export; repeat to pool cohorts.
        #[arg(long, required = true)]
        export: Vec<PathBuf>,
        /// Survey export; repeat to pool cohorts.
        #[arg(long)]
        survey: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            experiment,
            replicates,
            balanced,
            seed,
            out,
        } => generate(experiment, replicates, balanced, seed, &out),
        Command::Train {
            experiment,
            seed,
            max_depth,
            out,
        } => train(experiment, seed, max_depth, &out).map(drop),
        Command::Cfe {
            model,
            x,
            mode,
            epsilon,
            delta_improve,
        } => {
            let mode = match mode {
                ModeArg::MaxTarget => CfeMode::MaxTarget,
                ModeArg::StrictImprove => CfeMode::StrictImprove,
            };
            let config = CfeConfig {
                mode,
                epsilon,
                delta_improve,
            };
            println!("{}", cfe_text(&read_model(&model)?, &x, &config)?);
            Ok(())
        }
        Command::Serve { config } => serve(&config),
        Command::Simulate {
            policy,
            n,
            config,
            experiment,
            condition,
            seed,
            out,
        } => {
            let study = match config {
                Some(path) => StudyConfig::load(&path)?,
                None => StudyConfig::new(experiment),
            };
            let summary = simulate(&study, BotPolicy::new(policy), condition, n, seed, &out)?;
            println!("{summary}");
            Ok(())
        }
        Command::Analyze {
            export,
            survey,
            out,
        } => {
            let lines = analyze_files(&export, &survey, &out)?;
            for line in lines {
                println!("{line}");
            }
            Ok(())
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

pub fn generate(
    experiment: Experiment,
    replicates: usize,
    balanced: bool,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let mut data = generate_grid(experiment, replicates)?;
    if balanced {
        data = smote_balance(&data, 10, 5, seed)?;
    }
    data.write_csv(create(out)?)?;
    eprintln!("wrote {} samples to {}", data.len(), out.display());
    Ok(())
}

pub fn train(
    experiment: Experiment,
    seed: u64,
    max_depth: Option<usize>,
    out: &Path,
) -> Result<GrowthModel> {
    let mut recipe = TrainingRecipe::for_experiment(experiment, seed);
    if let Some(d) = max_depth {
        recipe.max_depth = d;
    }
    let model = recipe.train()?;
    let mut w = create(out)?;
    w.write_all(model.to_json().as_bytes())?;
    w.flush()?;
    if let Some(m) = &model.metrics {
        let r2 = m.r_squared.map_or("n/a".to_string(), |v| format!("{v:.4}"));
        eprintln!(
            "test R2 = {r2}, MSE = {:.5}, depth = {}",
            m.mse,
            model.depth()
        );
    }
    Ok(model)
}

pub fn read_model(path: &Path) -> Result<GrowthModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    GrowthModel::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

/// JSON object, or `none (near-optimal)`.
pub fn cfe_text(model: &GrowthModel, x: &PlantVector, config: &CfeConfig) -> Result<String> {
    config.validate().map_err(anyhow::Error::msg)?;
    Ok(match compute_cfe(model, x, config) {
        Some(c) => serde_json::to_string_pretty(&c)?,
        None => "none (near-optimal)".to_string(),
    })
}

fn serve(path: &Path) -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .init();
    let config = StudyConfig::load(path)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(alienzoo_service::serve(config))?;
    Ok(())
}

/// Writes `long.csv`, `survey.csv` and `sessions.json` into `out`.
pub fn simulate(
    study: &StudyConfig,
    policy: BotPolicy,
    condition: Option<Condition>,
    n: usize,
    seed: u64,
    out: &Path,
) -> Result<String> {
    study.validate()?;
    let engine: GameEngine = load_engine(study)?;
    let condition = condition.unwrap_or_else(|| policy.default_condition());
    let sessions = run_cohort(&engine, policy, condition, n, seed)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_long_csv(&sessions, create(&out.join("long.csv"))?)?;
    write_survey_csv(&sessions, create(&out.join("survey.csv"))?)?;
    let mut w = create(&out.join("sessions.json"))?;
    serde_json::to_writer_pretty(&mut w, &sessions)?;
    w.flush()?;
    let packs: Vec<f64> = sessions.iter().map(|s| f64::from(s.pack_size)).collect();
    let mean = packs.iter().sum::<f64>() / packs.len().max(1) as f64;
    Ok(format!(
        "{} sessions ({condition}), mean final pack {mean:.2}, written to {}",
        sessions.len(),
        out.display()
    ))
}

/// Writes `quality.csv`, `summary.csv`, `tests.csv` and `lmm.json`;
/// returns a printable digest of the group tests.
pub fn analyze_files(exports: &[PathBuf], surveys: &[PathBuf], out: &Path) -> Result<Vec<String>> {
    let open = |p: &Path| -> Result<BufReader<File>> {
        Ok(BufReader::new(
            File::open(p).with_context(|| format!("opening {}", p.display()))?,
        ))
    };
    let mut sessions = Vec::new();
    for path in exports {
        sessions.extend(
            read_long_csv(open(path)?).with_context(|| format!("reading {}", path.display()))?,
        );
    }
    let mut seen = BTreeSet::new();
    if let Some(dup) = sessions.iter().find(|s| !seen.insert(s.session_id.clone())) {
        bail!(
            "session `{}` appears in more than one export",
            dup.session_id
        );
    }
    let mut responses = BTreeMap::new();
    for path in surveys {
        for (id, r) in
            read_survey_csv(open(path)?).with_context(|| format!("reading {}", path.display()))?
        {
            if responses.insert(id.clone(), r).is_some() {
                bail!("survey for `{id}` appears twice");
            }
        }
    }
    for s in &mut sessions {
        s.survey = responses.remove(&s.session_id);
    }
    if sessions.is_empty() {
        bail!("the exports hold no sessions");
    }
    let report = analyze(&sessions)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_quality_csv(&report.quality, create(&out.join("quality.csv"))?)?;
    write_summary_csv(&report.summary, create(&out.join("summary.csv"))?)?;
    write_tests_csv(&report.comparisons, create(&out.join("tests.csv"))?)?;
    let lmm = match (&report.lmm, &report.lmm_error) {
        (Some(fit), _) => serde_json::to_value(fit)?,
        (None, err) => serde_json::json!({ "error": err }),
    };
    let mut w = create(&out.join("lmm.json"))?;
    serde_json::to_writer_pretty(&mut w, &lmm)?;
    w.flush()?;

    let excluded = report.quality.iter().filter(|q| q.excluded).count();
    let mut lines = vec![format!(
        "{} sessions, {excluded} excluded",
        report.quality.len()
    )];
    for c in &report.comparisons {
        lines.push(match (&c.result, &c.error) {
            (Some(r), _) => format!(
                "{}: n = {}/{}, p = {:.4}, effect = {:.3}",
                c.outcome, c.n_cfe, c.n_control, r.p_value, r.effect_size
            ),
            (None, err) => format!(
                "{}: not tested ({})",
                c.outcome,
                err.as_deref().unwrap_or("no data")
            ),
        });
    }
    if let Some(e) = &report.lmm_error {
        lines.push(format!("mixed model: {e}"));
    }
    Ok(lines)
}
