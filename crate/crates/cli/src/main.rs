use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use dense_rsf::calibration::CalibrationResult;
use dense_rsf::evaluation::{
    averaged_gradient, covariate_recovery, gradient_for_profile, kmeans_baseline, true_gradient, BaselineOptions,
    GridAxis, RecoveryReport,
};
use dense_rsf::io;
use dense_rsf::pipeline::{
    calibrate, evaluation_dataset, run_pipeline, run_study, thread_pool, CalibrationMode, Manifest, PipelineConfig, StudyConfig,
};
use dense_rsf::simgen::Scenario;

/// Subgroup discovery with dense random survival forests.
#[derive(Parser)]
#[command(name = "dense-rsf", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a trial dataset (CSV) and its truth sidecar.
    Simulate(SimulateArgs),
    /// Run the full pipeline and write its artifacts.
    Run(RunArgs),
    /// Compute the heterogeneity threshold p* only.
    Calibrate(ConfigArgs),
    /// Averaged gradient maps over simulated replicates.
    Gradient(StudyArgs),
    /// K-means baseline profile for the configured dataset.
    Baseline(ConfigArgs),
    /// Covariate-recovery table over simulated replicates.
    Report(StudyArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// one, two, three, four, global or null.
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Dataset CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Truth sidecar path (region, latent event and censoring times).
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline configuration (TOML).
    #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
    config: Option<PathBuf>,
    /// Re-run the configuration recorded in a manifest and verify checksums.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Worker threads; overrides the config.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory; overrides the config.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    /// Configuration with a [scenario] section.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 50)]
    replicates: usize,
    /// Covariate pair by name.
    #[arg(long, default_value = "X6,X7")]
    pair: String,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    output: PathBuf,
}

fn load_config(path: &Path, workers: Option<usize>, output: Option<&PathBuf>) -> Result<PipelineConfig> {
    let mut c = PipelineConfig::from_toml_file(path).with_context(|| format!("reading config {}", path.display()))?;
    if let Some(w) = workers {
        c.run.workers = w;
    }
    if let Some(o) = output {
        c.run.output = Some(o.clone());
    }
    c.validate()?;
    Ok(c)
}

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    Ok(thread_pool(workers)?.install(f))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let scenario = Scenario::parse(&a.scenario)?;
    let g = scenario.spec(a.n).try_generate(a.seed)?;
    io::write_dataset_csv(&a.out, &g.dataset)?;
    if let Some(t) = &a.truth {
        fs::write(t, io::truth_to_csv(&g))?;
    }
    println!("wrote {} rows ({} events) to {}", g.dataset.n(), g.dataset.event_count(), a.out.display());
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let (config, expected) = match (&a.config, &a.manifest) {
        (Some(c), None) => (load_config(c, a.workers, a.output.as_ref())?, None),
        (None, Some(m)) => {
            let manifest = Manifest::read(m).with_context(|| format!("reading manifest {}", m.display()))?;
            let mut c = manifest.config.clone();
            c.run.workers = a.workers.unwrap_or(1);
            c.run.output = match &a.output {
                Some(o) => Some(o.clone()),
                None => bail!("--output is required with --manifest"),
            };
            (c, Some(manifest.artifacts))
        }
        _ => bail!("give exactly one of --config and --manifest"),
    };
    let out = run_pipeline(&config)?;
    print!("{}", out.result.render_text());
    if let Some(dir) = &config.run.output {
        println!("artifacts written to {}", dir.display());
    }
    if let Some(expected) = expected {
        let mismatched: Vec<&String> = expected
            .iter()
            .filter(|(name, sum)| out.artifacts.get(*name) != Some(*sum))
            .map(|(name, _)| name)
            .collect();
        if !mismatched.is_empty() {
            bail!("artifacts differ from the manifest: {:?}", mismatched);
        }
        println!("all {} artifacts match the manifest", expected.len());
    }
    Ok(())
}

fn calibrate_cmd(a: ConfigArgs) -> Result<()> {
    let config = load_config(&a.config, a.workers, a.output.as_ref())?;
    let data = config.load_dataset()?;
    let result = in_pool(config.run.workers, || calibrate(&config, &data))??;
    println!("p* = {:e} ({:?}, {} values, alpha = {})", result.p_star, result.source, result.sample_count, result.alpha);
    if let Some(dir) = &config.run.output {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("calibration.json"), result.to_json()?)?;
        fs::write(dir.join("calibration_ecdf.csv"), result.ecdf_csv())?;
    }
    Ok(())
}

fn baseline_cmd(a: ConfigArgs) -> Result<()> {
    let config = load_config(&a.config, a.workers, a.output.as_ref())?;
    let data = config.load_dataset()?;
    let p_star = match config.calibration.mode {
        CalibrationMode::Fixed => config.calibration.p_star.unwrap_or(0.0),
        _ => in_pool(config.run.workers, || calibrate(&config, &data))??.p_star,
    };
    let options = BaselineOptions {
        k_min: config.profile.k_min,
        k_max: config.profile.k_max,
        min_leaf_size: config.grid.minimum_leaf_size,
        df_rule: config.profile.df_rule,
        seed: config.profile.seed,
    };
    let result = kmeans_baseline(&data, &options, p_star)?;
    print!("{}", result.render_text());
    if let Some(dir) = &config.run.output {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("baseline_profile.json"), result.to_json()?)?;
        fs::write(dir.join("baseline_profile.txt"), result.render_text())?;
    }
    Ok(())
}

fn study_config(a: &StudyArgs) -> Result<(PipelineConfig, StudyConfig, (usize, usize))> {
    let config = load_config(&a.config, a.workers, None)?;
    let Some(sc) = &config.scenario else {
        bail!("this command needs a [scenario] section in the config");
    };
    let spec = sc.name.spec(sc.n);
    let schema = spec.schema();
    let names: Vec<&str> = a.pair.split(',').map(str::trim).collect();
    if names.len() != 2 {
        bail!("--pair needs two covariate names separated by a comma");
    }
    let idx = |n: &str| schema.index_of(n).with_context(|| format!("unknown covariate {}", n));
    let pair = (idx(names[0])?, idx(names[1])?);
    let p_star = match config.calibration.mode {
        CalibrationMode::Fixed => config.calibration.p_star.unwrap_or(0.0),
        _ => {
            let data = config.load_dataset()?;
            let r: CalibrationResult = in_pool(config.run.workers, || calibrate(&config, &data))??;
            r.p_star
        }
    };
    let study = StudyConfig {
        spec,
        replicates: a.replicates,
        seed: sc.seed,
        grid: config.grid.param_grid(),
        selection: config.selection_options(),
        baseline: BaselineOptions {
            k_min: config.profile.k_min,
            k_max: config.profile.k_max,
            min_leaf_size: config.grid.minimum_leaf_size,
            df_rule: config.profile.df_rule,
            seed: config.profile.seed,
        },
        p_star,
    };
    Ok((config, study, pair))
}

fn gradient_cmd(a: StudyArgs) -> Result<()> {
    let (config, study, pair) = study_config(&a)?;
    let outcomes = in_pool(config.run.workers, || run_study(&study))??;
    let mut proposed = Vec::new();
    let mut baseline = Vec::new();
    for (r, o) in outcomes.iter().enumerate() {
        let eval = evaluation_dataset(&study, r)?;
        proposed.push(gradient_for_profile(&o.proposed, &eval, pair)?);
        baseline.push(gradient_for_profile(&o.baseline, &eval, pair)?);
    }
    fs::create_dir_all(&a.output)?;
    let truth = true_gradient(&study.spec, pair, GridAxis::default());
    for (name, grid) in [
        ("proposed", averaged_gradient(&proposed)?),
        ("baseline", averaged_gradient(&baseline)?),
        ("truth", truth),
    ] {
        fs::write(a.output.join(format!("gradient_{}.csv", name)), grid.to_csv())?;
        fs::write(a.output.join(format!("gradient_{}.pgm", name)), grid.to_pgm())?;
    }
    println!("averaged {} replicates into {}", outcomes.len(), a.output.display());
    Ok(())
}

fn report_cmd(a: StudyArgs) -> Result<()> {
    let (config, study, pair) = study_config(&a)?;
    let outcomes = in_pool(config.run.workers, || run_study(&study))??;
    let schema = study.spec.schema();
    let targets = [schema.name(pair.0), schema.name(pair.1)];
    let proposed: Vec<_> = outcomes.iter().map(|o| o.proposed.clone()).collect();
    let baseline: Vec<_> = outcomes.iter().map(|o| o.baseline.clone()).collect();
    let reports = [
        covariate_recovery("proposed", &proposed, &targets)?,
        covariate_recovery("kmeans", &baseline, &targets)?,
    ];
    let names: Vec<String> = targets.iter().map(|s| s.to_string()).collect();
    let mut csv = RecoveryReport::csv_header(&names, schema.len());
    csv.push('\n');
    for r in &reports {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    fs::create_dir_all(&a.output)?;
    fs::write(a.output.join("recovery.csv"), &csv)?;
    let declared = proposed.iter().filter(|p| p.heterogeneous).count();
    println!("heterogeneity declared in {} of {} replicates (p* = {:e})", declared, outcomes.len(), study.p_star);
    print!("{}", csv);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Run(a) => run(a),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::Gradient(a) => gradient_cmd(a),
        Command::Baseline(a) => baseline_cmd(a),
        Command::Report(a) => report_cmd(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::FAILURE
        }
    }
}
