//! Experiment harness for `lpo-core`: config files, seeded runs, metrics
//! persistence, artifact checks and plot data.

use std::fs;
use std::path::{Path, PathBuf};

use lpo_core::bonus::BonusVariant;
use lpo_core::diagnostics::{
    check_bonus_concentration, check_distribution_dominance, check_negative_advantage, check_npg_regret,
    check_optimism, check_partial_optimism, optimal_comparator, LemmaInstance, LemmaReport,
};
use lpo_core::driver::{run_lpo, DerivedParams, EvalMode, InnerArtifact, LpoConfig, MetricsRow, RunOutput};
use lpo_core::function_class::FunctionClass;
use lpo_core::mdp::{chain, grid, parse_mdp_file, random_mdp, reset_chain, MdpSpec};
use serde::{Deserialize, Serialize};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED_CHECK: i32 = 1;
pub const EXIT_INVALID_CONFIG: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(lpo_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_INVALID_CONFIG,
            Self::Invariant(_) => EXIT_INVARIANT,
            Self::Io(_) | Self::Core(_) => EXIT_FAILED_CHECK,
        }
    }
}

impl From<lpo_core::Error> for CliError {
    fn from(e: lpo_core::Error) -> Self {
        match e {
            lpo_core::Error::InvalidConfig { .. } | lpo_core::Error::Parse { .. } | lpo_core::Error::InvalidMdp(_) => {
                Self::Config(e.to_string())
            }
            lpo_core::Error::Invariant(msg) => Self::Invariant(msg),
            other => Self::Core(other),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Environment section of a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Environment {
    Chain {
        length: usize,
        #[serde(default)]
        slip: f64,
        #[serde(default = "yes")]
        sparse: bool,
        gamma: f64,
    },
    /// Sparse chain whose wrong action returns to the start.
    ResetChain {
        length: usize,
        #[serde(default)]
        slip: f64,
        gamma: f64,
    },
    Grid {
        width: usize,
        height: usize,
        #[serde(default)]
        slip: f64,
        gamma: f64,
    },
    Random {
        seed: u64,
        states: usize,
        actions: usize,
        branching: usize,
        gamma: f64,
    },
    /// An MDP definition file, relative paths resolved against the config file.
    File { path: PathBuf },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassKind {
    #[default]
    Tabular,
    /// Linear in the feature lines of an MDP file.
    Linear,
    /// Linear in one-hot pair indicators.
    LinearOneHot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassSpec {
    pub kind: ClassKind,
    pub ridge: f64,
}

impl Default for ClassSpec {
    fn default() -> Self {
        Self { kind: ClassKind::Tabular, ridge: 1e-8 }
    }
}

/// A parsed config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: Environment,
    #[serde(default)]
    pub class: ClassSpec,
    #[serde(default)]
    pub lpo: LpoConfig,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
}

/// Everything a sweep needs: config plus command-line overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentManifest {
    pub config_path: PathBuf,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub artifacts: bool,
}

pub fn parse_variant(name: &str) -> Result<BonusVariant, CliError> {
    match name {
        "lpo" | "full" => Ok(BonusVariant::Full),
        "indicator-only" => Ok(BonusVariant::IndicatorOnly),
        "no-bonus" | "none" => Ok(BonusVariant::None),
        other => Err(CliError::Config(format!("variant: unknown name `{other}`"))),
    }
}

pub fn parse_mode(name: &str) -> Result<EvalMode, CliError> {
    match name {
        "mc" | "monte-carlo" => Ok(EvalMode::MonteCarlo),
        "exact" | "exact-eval" => Ok(EvalMode::Exact),
        other => Err(CliError::Config(format!("mode: unknown name `{other}`"))),
    }
}

pub fn parse_seeds(list: &str) -> Result<Vec<u64>, CliError> {
    let seeds = list
        .split(',')
        .map(|s| s.trim().parse::<u64>().map_err(|_| CliError::Config(format!("seeds: `{s}` is not an integer"))))
        .collect::<Result<Vec<_>, _>>()?;
    check_distinct(&seeds)?;
    Ok(seeds)
}

fn check_distinct(seeds: &[u64]) -> Result<(), CliError> {
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() || seeds.is_empty() {
        return Err(CliError::Config("seeds: must be a nonempty list of distinct integers".into()));
    }
    Ok(())
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let config: ExperimentConfig =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
    config.lpo.validate()?;
    Ok(config)
}

impl ExperimentManifest {
    /// Load `config_path` and apply overrides; seeds default to the config's list, then `[0]`.
    pub fn load(
        config_path: &Path,
        seeds: Option<Vec<u64>>,
        out_dir: &Path,
        variant: Option<BonusVariant>,
        mode: Option<EvalMode>,
        artifacts: bool,
    ) -> Result<Self, CliError> {
        let mut config = load_config(config_path)?;
        if let Some(v) = variant {
            config.lpo.variant = v;
        }
        if let Some(m) = mode {
            config.lpo.mode = m;
        }
        if artifacts {
            config.lpo.record_artifacts = true;
        }
        let seeds = seeds.or_else(|| config.seeds.clone()).unwrap_or_else(|| vec![0]);
        check_distinct(&seeds)?;
        Ok(Self { config_path: config_path.to_path_buf(), config, seeds, out_dir: out_dir.to_path_buf(), artifacts })
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.config_path.parent().unwrap_or(Path::new(".")).join(p)
        }
    }

    /// The environment and the function class, with `lpo.gamma` applied.
    pub fn build(&self) -> Result<(MdpSpec<f64>, FunctionClass<f64>), CliError> {
        let (mdp, features) = match &self.config.environment {
            Environment::Chain { length, slip, sparse, gamma } => (chain(*length, *slip, *sparse, *gamma)?, None),
            Environment::ResetChain { length, slip, gamma } => (reset_chain(*length, *slip, *gamma)?, None),
            Environment::Grid { width, height, slip, gamma } => (grid(*width, *height, *slip, *gamma)?, None),
            Environment::Random { seed, states, actions, branching, gamma } => {
                (random_mdp(*seed, *states, *actions, *branching, *gamma)?, None)
            }
            Environment::File { path } => {
                let path = self.resolve(path);
                let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
                let file = parse_mdp_file::<f64>(&text)?;
                (file.mdp, file.features)
            }
        };
        let mdp = match self.config.lpo.gamma {
            Some(g) => mdp.with_gamma(g)?,
            None => mdp,
        };
        let (ns, na, w) = (mdp.n_states(), mdp.n_actions(), self.config.lpo.w_bound);
        let class = match self.config.class.kind {
            ClassKind::Tabular => FunctionClass::tabular(ns, na, w)?,
            ClassKind::Linear => {
                let features = features
                    .ok_or_else(|| CliError::Config("class.kind: linear needs feature lines in an MDP file".into()))?;
                FunctionClass::linear_normalized(ns, na, w, &features, self.config.class.ridge)
                    .map_err(|e| CliError::Config(format!("class: {e}")))?
            }
            ClassKind::LinearOneHot => {
                let features: Vec<Vec<f64>> = (0..ns * na)
                    .map(|z| (0..ns * na).map(|i| if i == z { 1.0 } else { 0.0 }).collect())
                    .collect();
                FunctionClass::linear(ns, na, w, &features, self.config.class.ridge)?
            }
        };
        Ok((mdp, class))
    }

    pub fn lpo_config(&self, seed: u64) -> LpoConfig {
        LpoConfig { seed, ..self.config.lpo.clone() }
    }
}

#[derive(Debug, Serialize)]
struct SummaryFile<'a> {
    seed: u64,
    environment: &'a Environment,
    class: &'a ClassSpec,
    #[serde(flatten)]
    summary: &'a lpo_core::driver::RunSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Aggregate {
    pub seeds: Vec<u64>,
    pub final_value_mean: f64,
    pub final_value_std: f64,
    pub value_of_uniform_output_mean: f64,
    pub switches_mean: f64,
    pub switches_std: f64,
    pub total_transitions_mean: f64,
    pub v_star: f64,
}

pub fn metrics_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("metrics_seed{seed}.csv"))
}

pub fn summary_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("summary_seed{seed}.json"))
}

pub fn artifacts_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("artifacts_seed{seed}.json"))
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    r.deserialize().collect::<Result<Vec<MetricsRow>, _>>().map_err(|e| io_err(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

pub fn aggregate(seeds: &[u64], runs: &[RunOutput<f64>]) -> Aggregate {
    let finals: Vec<f64> = runs.iter().map(|r| r.summary.final_value).collect();
    let switches: Vec<f64> = runs.iter().map(|r| r.summary.switches as f64).collect();
    let (final_value_mean, final_value_std) = mean_std(&finals);
    let (switches_mean, switches_std) = mean_std(&switches);
    Aggregate {
        seeds: seeds.to_vec(),
        final_value_mean,
        final_value_std,
        value_of_uniform_output_mean: mean_std(&runs.iter().map(|r| r.summary.value_of_uniform_output).collect::<Vec<_>>()).0,
        switches_mean,
        switches_std,
        total_transitions_mean: mean_std(&runs.iter().map(|r| r.summary.total_transitions as f64).collect::<Vec<_>>()).0,
        v_star: runs.first().map_or(f64::NAN, |r| r.summary.v_star),
    }
}

/// Run every seed of the manifest and write its outputs. Returns the runs in seed order.
pub fn cmd_run(manifest: &ExperimentManifest) -> Result<Vec<RunOutput<f64>>, CliError> {
    fs::create_dir_all(&manifest.out_dir).map_err(|e| io_err(&manifest.out_dir, e))?;
    let (mdp, class) = manifest.build()?;
    let mut runs = Vec::with_capacity(manifest.seeds.len());
    for &seed in &manifest.seeds {
        let out = run_lpo(&manifest.lpo_config(seed), &mdp, &class)?;
        let dir = &manifest.out_dir;
        write_metrics_csv(&metrics_path(dir, seed), &out.metrics)?;
        let summary = SummaryFile {
            seed,
            environment: &manifest.config.environment,
            class: &manifest.config.class,
            summary: &out.summary,
        };
        write_json(&summary_path(dir, seed), &summary)?;
        if manifest.artifacts {
            write_json(&artifacts_path(dir, seed), &out.artifacts)?;
            let mut bonus = String::from("n,s,a,width,bonus,known\n");
            for (n, oracle) in &out.oracles {
                bonus.push_str(&oracle.dump_csv_rows(*n as u64));
            }
            let p = dir.join(format!("bonus_seed{seed}.csv"));
            fs::write(&p, bonus).map_err(|e| io_err(&p, e))?;
            let p = dir.join(format!("dataset_seed{seed}.jsonl"));
            fs::write(&p, out.dataset.snapshot_json_lines()).map_err(|e| io_err(&p, e))?;
        }
        runs.push(out);
    }
    if manifest.seeds.len() > 1 {
        write_json(&manifest.out_dir.join("aggregate.json"), &aggregate(&manifest.seeds, &runs))?;
    }
    Ok(runs)
}

/// Slack on the bonus-sum scale `c√(N d² ε)`.
pub const BONUS_SLACK: f64 = 10.0;

/// Run the checkers over the stored artifacts of every seed and write
/// `checks_seed{s}.json`. Returns the reports per seed.
pub fn cmd_check(manifest: &ExperimentManifest) -> Result<Vec<(u64, Vec<LemmaReport>)>, CliError> {
    let (mdp, class) = manifest.build()?;
    let mut all = Vec::new();
    for &seed in &manifest.seeds {
        let dir = &manifest.out_dir;
        let metrics = read_metrics_csv(&metrics_path(dir, seed))?;
        let p = artifacts_path(dir, seed);
        let text = fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
        let artifacts: Vec<InnerArtifact<f64>> = serde_json::from_str(&text).map_err(|e| io_err(&p, e))?;
        let config = manifest.lpo_config(seed);
        let params = DerivedParams::resolve(&config, &mdp, &class)?;
        let mut reports = Vec::new();
        if !artifacts.is_empty() && artifacts.iter().all(|a| a.exact) {
            reports.push(check_optimism(&artifacts, &mdp, 1e-8)?);
        }
        if !artifacts.is_empty() {
            reports.push(check_npg_regret(&artifacts, &mdp, config.w_bound, 1e-8)?.0);
            let comparator = optimal_comparator(&mdp);
            let instances: Vec<LemmaInstance<f64>> = artifacts
                .iter()
                .map(|a| LemmaInstance {
                    mdp: mdp.clone(),
                    oracle: a.oracle.clone(),
                    comparator: comparator.clone(),
                    policies: a.policies.clone(),
                })
                .collect();
            reports.push(check_distribution_dominance(&instances, 1e-8)?);
            reports.push(check_partial_optimism(&instances, 1e-8)?);
            reports.push(check_negative_advantage(&instances, 1e-8)?);
        }
        reports.push(check_bonus_concentration(
            &metrics,
            class.dimension() as f64,
            params.epsilon_width,
            params.gamma,
            config.beta,
            BONUS_SLACK,
        ));
        write_json(&dir.join(format!("checks_seed{seed}.json")), &reports)?;
        all.push((seed, reports));
    }
    Ok(all)
}

/// Long-format `x,y,series` rows for switches-vs-N and value-vs-transitions, from
/// every `metrics_seed*.csv` in `dir`. Written to `dir/plotdata.csv`.
pub fn cmd_plotdata(dir: &Path) -> Result<PathBuf, CliError> {
    let mut files: Vec<(u64, PathBuf)> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let seed = name.strip_prefix("metrics_seed")?.strip_suffix(".csv")?.parse().ok()?;
            Some((seed, e.path()))
        })
        .collect();
    if files.is_empty() {
        return Err(CliError::Io(format!("{}: no metrics_seed*.csv files", dir.display())));
    }
    files.sort();
    let mut out = String::from("x,y,series\n");
    for (seed, path) in &files {
        let rows = read_metrics_csv(path)?;
        let mut switches = 0;
        for r in &rows {
            switches += usize::from(r.switched);
            out.push_str(&format!("{},{},switches_seed{seed}\n", r.n, switches));
        }
        for r in &rows {
            out.push_str(&format!("{},{},value_seed{seed}\n", r.transitions_used, r.value_exact_of_mixture));
        }
    }
    let target = dir.join("plotdata.csv");
    fs::write(&target, out).map_err(|e| io_err(&target, e))?;
    Ok(target)
}
