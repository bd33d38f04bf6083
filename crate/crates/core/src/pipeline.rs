//! End-to-end runs: configuration, calibration, training, profiling and
//! artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::{
    calibrate_by_permutation, calibrate_by_simulation, simulate_statistics, CalibrationResult, PermutationTarget,
};
use crate::data::{Schema, SurvivalDataset};
use crate::ensemble::{dense_train, FusedProximity, ParamGrid};
use crate::error::{Error, Result, StageExt};
use crate::evaluation::{kmeans_baseline, BaselineOptions};
use crate::forest::InteractionScore;
use crate::io;
use crate::linalg::EigenMethod;
use crate::profile::{scan_profiles, select_from_scan, DfRule, ProfileResult, SelectionOptions};
use crate::rng::derive_seed;
use crate::simgen::{Scenario, ScenarioSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: PathBuf,
    /// JSON [`Schema`] declaring covariate kinds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub name: Scenario,
    pub n: usize,
    #[serde(default = "one")]
    pub seed: u64,
}

fn one() -> u64 {
    1
}

/// Grid keys use the parameter names of the published tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub mtry: Vec<usize>,
    pub nodedepth: Vec<usize>,
    pub nsplit: Vec<usize>,
    pub nodesize: Vec<usize>,
    pub weight: Vec<f64>,
    pub ntree: usize,
    pub den: f64,
    #[serde(default = "default_min_leaf")]
    pub minimum_leaf_size: usize,
    /// Also raise every forest nodesize to `minimum_leaf_size`.
    #[serde(default)]
    pub minimum_leaf_size_in_forest: bool,
    #[serde(default = "one")]
    pub seed: u64,
    #[serde(default)]
    pub interaction: InteractionScore,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xvar_weights: Option<Vec<f64>>,
}

fn default_min_leaf() -> usize {
    120
}

impl GridSection {
    pub fn from_grid(grid: &ParamGrid, minimum_leaf_size: usize) -> Self {
        GridSection {
            mtry: grid.mtry.clone(),
            nodedepth: grid.nodedepth.clone(),
            nsplit: grid.nsplit.clone(),
            nodesize: grid.nodesize.clone(),
            weight: grid.weight.clone(),
            ntree: grid.ntree,
            den: grid.den,
            minimum_leaf_size,
            minimum_leaf_size_in_forest: false,
            seed: grid.seed,
            interaction: grid.interaction,
            xvar_weights: grid.xvar_weights.clone(),
        }
    }

    pub fn param_grid(&self) -> ParamGrid {
        let nodesize = if self.minimum_leaf_size_in_forest {
            self.nodesize.iter().map(|&s| s.max(self.minimum_leaf_size)).collect()
        } else {
            self.nodesize.clone()
        };
        ParamGrid {
            mtry: self.mtry.clone(),
            nodedepth: self.nodedepth.clone(),
            nsplit: self.nsplit.clone(),
            nodesize,
            weight: self.weight.clone(),
            ntree: self.ntree,
            den: self.den,
            seed: self.seed,
            interaction: self.interaction,
            xvar_weights: self.xvar_weights.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSection {
    #[serde(default = "k_min")]
    pub k_min: usize,
    #[serde(default = "k_max")]
    pub k_max: usize,
    #[serde(default = "one")]
    pub seed: u64,
    #[serde(default)]
    pub df_rule: DfRule,
    #[serde(default)]
    pub eigen: EigenMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<usize>,
}

fn k_min() -> usize {
    2
}

fn k_max() -> usize {
    7
}

impl Default for ProfileSection {
    fn default() -> Self {
        ProfileSection {
            k_min: 2,
            k_max: 7,
            seed: 1,
            df_rule: DfRule::default(),
            eigen: EigenMethod::default(),
            max_depth: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMode {
    Fixed,
    Simulation,
    Permutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    pub mode: CalibrationMode,
    /// Threshold for `fixed` mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_star: Option<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Datasets per homogeneous scenario in `simulation` mode.
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Simulated sample size; defaults to the analysed dataset's size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default = "default_n_perm")]
    pub n_perm: usize,
    #[serde(default)]
    pub target: PermutationTarget,
    #[serde(default = "one")]
    pub seed: u64,
}

fn default_alpha() -> f64 {
    0.01
}

fn default_replicates() -> usize {
    50
}

fn default_n_perm() -> usize {
    100
}

impl Default for CalibrationSection {
    fn default() -> Self {
        CalibrationSection {
            mode: CalibrationMode::Fixed,
            p_star: Some(0.01),
            alpha: 0.01,
            replicates: 50,
            n: None,
            n_perm: 100,
            target: PermutationTarget::default(),
            seed: 1,
        }
    }
}

/// Execution settings; they never change results and are left out of the
/// manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "one_usize")]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn one_usize() -> usize {
    1
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            workers: 1,
            output: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSection>,
    pub grid: GridSection,
    #[serde(default)]
    pub profile: ProfileSection,
    #[serde(default)]
    pub calibration: CalibrationSection,
    #[serde(default, skip_serializing)]
    pub run: RunSection,
}

impl PipelineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: PipelineConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let mut c = Self::from_toml_str(&fs::read_to_string(path.as_ref())?)?;
        c.resolve_paths(path.as_ref().parent().unwrap_or(Path::new(".")));
        Ok(c)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Makes relative data paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let Some(d) = &mut self.data {
            if d.path.is_relative() {
                d.path = base.join(&d.path);
            }
            if let Some(s) = &mut d.schema {
                if s.is_relative() {
                    *s = base.join(&*s);
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.data, &self.scenario) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => return Err(Error::Config("exactly one of [data] and [scenario] must be given".into())),
        }
        let c = &self.calibration;
        if !(c.alpha > 0.0 && c.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", c.alpha)));
        }
        match c.mode {
            CalibrationMode::Fixed => match c.p_star {
                Some(p) if (0.0..=1.0).contains(&p) => {}
                _ => return Err(Error::Config("fixed calibration needs p_star in [0, 1]".into())),
            },
            CalibrationMode::Simulation if c.replicates == 0 => {
                return Err(Error::Config("simulation calibration needs replicates >= 1".into()))
            }
            CalibrationMode::Permutation if c.n_perm < 20 => {
                return Err(Error::Config("permutation calibration needs n_perm >= 20".into()))
            }
            _ => {}
        }
        if self.run.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        crate::ensemble::expand_grid(&self.grid.param_grid()).map(|_| ())
    }

    pub fn selection_options(&self) -> SelectionOptions {
        SelectionOptions {
            k_min: self.profile.k_min,
            k_max: self.profile.k_max,
            min_leaf_size: self.grid.minimum_leaf_size,
            max_depth: self.profile.max_depth,
            df_rule: self.profile.df_rule,
            eigen: self.profile.eigen,
            seed: self.profile.seed,
        }
    }

    pub fn load_dataset(&self) -> Result<SurvivalDataset> {
        if let Some(d) = &self.data {
            let schema = match &d.schema {
                Some(p) => Some(serde_json::from_str::<Schema>(&fs::read_to_string(p)?)?),
                None => None,
            };
            io::ingest_csv(&d.path, schema.as_ref())
        } else if let Some(s) = &self.scenario {
            s.name.spec(s.n).try_generate(s.seed).map(|g| g.dataset)
        } else {
            Err(Error::Config("no data source".into()))
        }
    }
}

/// The statistic thresholded by the decision rule: the smallest `p_leaf`
/// over the k range.
pub fn homogeneity_statistic(data: &SurvivalDataset, grid: &ParamGrid, options: &SelectionOptions) -> Result<f64> {
    let fused = dense_train(data, grid)?;
    Ok(scan_profiles(data, fused.values().view(), options)?.min_p_leaf())
}

/// Simulation calibration: `replicates` null and global datasets of size
/// `n`, pooled.
pub fn calibrate_simulated(
    n: usize,
    replicates: usize,
    alpha: f64,
    seed: u64,
    grid: &ParamGrid,
    options: &SelectionOptions,
) -> Result<CalibrationResult> {
    let stat = |d: &SurvivalDataset| homogeneity_statistic(d, grid, options);
    let null = simulate_statistics(
        replicates,
        derive_seed(seed, 0x4e554c4c),
        |s| Scenario::Null.spec(n).try_generate(s).map(|g| g.dataset),
        stat,
    )?;
    let global = simulate_statistics(
        replicates,
        derive_seed(seed, 0x474c4f42),
        |s| Scenario::Global.spec(n).try_generate(s).map(|g| g.dataset),
        stat,
    )?;
    calibrate_by_simulation(&null, &global, alpha)
}

pub fn calibrate(config: &PipelineConfig, data: &SurvivalDataset) -> Result<CalibrationResult> {
    let c = &config.calibration;
    let grid = config.grid.param_grid();
    let options = config.selection_options();
    match c.mode {
        CalibrationMode::Fixed => Ok(CalibrationResult::fixed(c.p_star.unwrap_or(0.0))),
        CalibrationMode::Simulation => {
            calibrate_simulated(c.n.unwrap_or(data.n()), c.replicates, c.alpha, c.seed, &grid, &options)
        }
        CalibrationMode::Permutation => calibrate_by_permutation(
            data,
            |d| homogeneity_statistic(d, &grid, &options),
            c.n_perm,
            c.alpha,
            c.seed,
            c.target,
        ),
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub dataset: SurvivalDataset,
    pub fused: FusedProximity,
    pub calibration: CalibrationResult,
    pub result: ProfileResult,
    /// Artifact file name to sha256, when written.
    pub artifacts: BTreeMap<String, String>,
}

/// Runs the pipeline on `config.run.workers` threads and, when an output
/// directory is set, writes every artifact plus `manifest.json`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutput> {
    config.validate()?;
    thread_pool(config.run.workers)?.install(|| run_stages(config))
}

/// Pool that every parallel stage runs on.
pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {}", e)))
}

fn run_stages(config: &PipelineConfig) -> Result<PipelineOutput> {
    let data = config.load_dataset().stage("load")?;
    let options = config.selection_options();
    options.validate(data.n()).stage("load")?;
    let calibration = calibrate(config, &data).stage("calibrate")?;
    let fused = dense_train(&data, &config.grid.param_grid()).stage("train")?;
    let scan = scan_profiles(&data, fused.values().view(), &options).stage("cluster")?;
    let result = select_from_scan(&data, &scan, calibration.p_star).stage("profile")?;
    let mut out = PipelineOutput {
        dataset: data,
        fused,
        calibration,
        result,
        artifacts: BTreeMap::new(),
    };
    if let Some(dir) = &config.run.output {
        out.artifacts = write_artifacts(config, &out, dir).stage("write")?;
    }
    Ok(out)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn join_usize(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

pub fn per_k_csv(result: &ProfileResult) -> String {
    let mut out = String::from("k,cluster_sizes,leaves,p_leaf,statistic,df,variables,diagnostic\n");
    for d in &result.per_k {
        let _ = writeln!(
            out,
            "{},{},{},{:e},{},{},{},{}",
            d.k,
            join_usize(&d.cluster_sizes),
            d.leaves,
            d.p_leaf,
            d.statistic,
            d.df,
            d.variables.join(";"),
            d.diagnostic.as_deref().unwrap_or("").replace(',', ";")
        );
    }
    out
}

pub fn leaf_effects_csv(result: &ProfileResult) -> String {
    let paths = result.tree.leaf_paths();
    let mut out = String::from("leaf,path,n_control,n_treated,events_control,events_treated,hazard_ratio,logrank_p\n");
    for e in &result.leaf_effects {
        let _ = writeln!(
            out,
            "{},\"{}\",{},{},{},{},{},{}",
            e.leaf,
            paths[e.leaf].join(" & "),
            e.n_control,
            e.n_treated,
            e.events_control,
            e.events_treated,
            e.hazard_ratio.map_or("NA".to_string(), |v| v.to_string()),
            e.logrank_p.map_or("NA".to_string(), |v| format!("{:e}", v))
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub config: PipelineConfig,
    pub p_star: f64,
    pub heterogeneous: bool,
    pub total_trees: u64,
    pub config_count: usize,
    pub artifacts: BTreeMap<String, String>,
}

impl Manifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

fn write_artifacts(config: &PipelineConfig, out: &PipelineOutput, dir: &Path) -> Result<BTreeMap<String, String>> {
    fs::create_dir_all(dir)?;
    let mut ecdf_groups = out.calibration.groups.clone();
    ecdf_groups.push(("observed".to_string(), vec![out.result.per_k.iter().map(|d| d.p_leaf).fold(1.0, f64::min)]));
    let files: Vec<(&str, Vec<u8>)> = vec![
        ("proximity.bin", io::proximity_to_bytes(out.fused.values().view())),
        ("per_k.csv", per_k_csv(&out.result).into_bytes()),
        ("profile.json", out.result.to_json()?.into_bytes()),
        ("profile.txt", out.result.render_text().into_bytes()),
        ("leaf_effects.csv", leaf_effects_csv(&out.result).into_bytes()),
        ("km.csv", io::km_curves_csv(&out.dataset, &out.result)?.into_bytes()),
        ("calibration.json", out.calibration.to_json()?.into_bytes()),
        ("calibration_ecdf.csv", crate::calibration::ecdf_csv(&ecdf_groups).into_bytes()),
    ];
    let mut sums = BTreeMap::new();
    for (name, bytes) in &files {
        fs::write(dir.join(name), bytes)?;
        sums.insert(name.to_string(), sha256_hex(bytes));
    }
    let manifest = Manifest {
        format: "dense-rsf-manifest/1".to_string(),
        config: config.clone(),
        p_star: out.calibration.p_star,
        heterogeneous: out.result.heterogeneous,
        total_trees: out.fused.total_trees(),
        config_count: out.fused.config_count,
        artifacts: sums.clone(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(sums)
}

/// One simulated replicate analysed by both methods.
#[derive(Debug, Clone)]
pub struct ReplicateOutcome {
    pub seed: u64,
    pub dataset: SurvivalDataset,
    pub proposed: ProfileResult,
    pub baseline: ProfileResult,
}

/// Settings shared by the replicate studies behind the gradient and
/// recovery reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub spec: ScenarioSpec,
    pub replicates: usize,
    pub seed: u64,
    pub grid: ParamGrid,
    pub selection: SelectionOptions,
    pub baseline: BaselineOptions,
    pub p_star: f64,
}

pub fn run_replicate(study: &StudyConfig, replicate: usize) -> Result<ReplicateOutcome> {
    let seed = derive_seed(study.seed, replicate as u64);
    let data = study.spec.try_generate(seed)?.dataset;
    let fused = dense_train(&data, &study.grid)?;
    let scan = scan_profiles(&data, fused.values().view(), &study.selection)?;
    let proposed = select_from_scan(&data, &scan, study.p_star)?;
    let baseline = kmeans_baseline(&data, &study.baseline, study.p_star)?;
    Ok(ReplicateOutcome {
        seed,
        dataset: data,
        proposed,
        baseline,
    })
}

/// Held-out dataset for measuring leaf effects of replicate `replicate`.
pub fn evaluation_dataset(study: &StudyConfig, replicate: usize) -> Result<SurvivalDataset> {
    let seed = derive_seed(derive_seed(study.seed, 0x4556414c), replicate as u64);
    Ok(study.spec.try_generate(seed)?.dataset)
}

pub fn run_study(study: &StudyConfig) -> Result<Vec<ReplicateOutcome>> {
    use rayon::prelude::*;
    (0..study.replicates).into_par_iter().map(|r| run_replicate(study, r)).collect()
}
