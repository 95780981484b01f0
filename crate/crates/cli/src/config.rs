use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use serde::Deserialize;
use tasksynth::dataset::{FrontierRange, RejectionOptions, DEFAULT_ALPHA, DEFAULT_K_RL, DEFAULT_TURN_CAP};
use tasksynth::pools::ConfigBounds;
use tasksynth::synthesis::CycleOptions;
use tasksynth::tools::{SizeRange, ValidationOptions};

use crate::UsageError;

/// Declarative run configuration, loaded from TOML. Relative paths are
/// resolved against the file's directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub seeds: Option<PathBuf>,
    pub exemplars: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub workers: usize,
    pub endpoints: EndpointConfig,
    pub synthesis: SynthesisConfig,
    pub dataset: DatasetConfig,
    pub validation: ValidationConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    pub collector: String,
    pub generator: String,
    pub teacher: String,
    pub policy: String,
    pub verifiers: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    pub rounds: usize,
    pub max_steps: usize,
    pub retries: usize,
    pub toolset: [usize; 2],
    pub exemplars: [usize; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub attempts: usize,
    pub turn_cap: usize,
    pub k_rl: usize,
    pub frontier: [usize; 2],
    pub alpha: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    pub fanout: usize,
    pub repeats: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            manifest: None,
            seeds: None,
            exemplars: None,
            out_dir: PathBuf::from("run"),
            seed: 0,
            workers: 1,
            endpoints: EndpointConfig::default(),
            synthesis: SynthesisConfig::default(),
            dataset: DatasetConfig::default(),
            validation: ValidationConfig::default(),
        }
    }
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            collector: "scripted:collector".into(),
            generator: "scripted:generator".into(),
            teacher: "scripted:oracle".into(),
            policy: "scripted:sampler".into(),
            verifiers: vec!["exact-match".into()],
        }
    }
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        let opts = CycleOptions::default();
        let b = ConfigBounds::default();
        SynthesisConfig {
            rounds: opts.rounds,
            max_steps: opts.max_steps,
            retries: opts.retries,
            toolset: [b.toolset.lo, b.toolset.hi],
            exemplars: [b.exemplars.lo, b.exemplars.hi],
        }
    }
}

impl Default for DatasetConfig {
    fn default() -> Self {
        let f = FrontierRange::default();
        DatasetConfig {
            attempts: RejectionOptions::default().attempts,
            turn_cap: DEFAULT_TURN_CAP,
            k_rl: DEFAULT_K_RL,
            frontier: [f.lo, f.hi],
            alpha: DEFAULT_ALPHA,
        }
    }
}

impl Default for ValidationConfig {
    fn default() -> Self {
        let o = ValidationOptions::default();
        ValidationConfig { fanout: o.fanout, repeats: o.repeats }
    }
}

/// Command-line overrides for every configuration field.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Tool manifest (JSON).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Seed concepts (JSONL).
    #[arg(long, global = true)]
    pub seeds: Option<PathBuf>,
    /// Exemplar queries (JSONL).
    #[arg(long, global = true)]
    pub exemplars: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Global RNG seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub collector: Option<String>,
    #[arg(long, global = true)]
    pub generator: Option<String>,
    #[arg(long, global = true)]
    pub teacher: Option<String>,
    #[arg(long, global = true)]
    pub policy: Option<String>,
    /// Verifier endpoint; give once for a single judge, twice for
    /// cross-verification.
    #[arg(long = "verifier", global = true)]
    pub verifiers: Vec<String>,
    /// Rounds per cycle (K).
    #[arg(long, global = true)]
    pub rounds: Option<usize>,
    /// Tool calls per collection round.
    #[arg(long, global = true)]
    pub max_steps: Option<usize>,
    #[arg(long, global = true)]
    pub retries: Option<usize>,
    #[arg(long, global = true, num_args = 2, value_names = ["MIN", "MAX"])]
    pub toolset_size: Option<Vec<usize>>,
    #[arg(long, global = true, num_args = 2, value_names = ["MIN", "MAX"])]
    pub exemplar_count: Option<Vec<usize>>,
    #[arg(long, global = true)]
    pub attempts: Option<usize>,
    #[arg(long, global = true)]
    pub turn_cap: Option<usize>,
    #[arg(long, global = true)]
    pub k_rl: Option<usize>,
    #[arg(long, global = true, num_args = 2, value_names = ["LO", "HI"])]
    pub frontier: Option<Vec<usize>>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub fanout: Option<usize>,
    #[arg(long, global = true)]
    pub repeats: Option<usize>,
}

fn pair(v: &[usize]) -> [usize; 2] {
    [v[0], v[1]]
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut cfg.manifest, &mut cfg.seeds, &mut cfg.exemplars].into_iter().flatten() {
            rebase(p);
        }
        rebase(&mut cfg.out_dir);
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($($field:expr => $value:expr),* $(,)?) => {
                $(if let Some(v) = $value.clone() { $field = v; })*
            };
        }
        set!(
            self.out_dir => o.out_dir,
            self.seed => o.seed,
            self.workers => o.workers,
            self.endpoints.collector => o.collector,
            self.endpoints.generator => o.generator,
            self.endpoints.teacher => o.teacher,
            self.endpoints.policy => o.policy,
            self.synthesis.rounds => o.rounds,
            self.synthesis.max_steps => o.max_steps,
            self.synthesis.retries => o.retries,
            self.dataset.attempts => o.attempts,
            self.dataset.turn_cap => o.turn_cap,
            self.dataset.k_rl => o.k_rl,
            self.dataset.alpha => o.alpha,
            self.validation.fanout => o.fanout,
            self.validation.repeats => o.repeats,
        );
        for (field, value) in [(&mut self.manifest, &o.manifest), (&mut self.seeds, &o.seeds), (&mut self.exemplars, &o.exemplars)] {
            if value.is_some() {
                field.clone_from(value);
            }
        }
        if !o.verifiers.is_empty() {
            self.endpoints.verifiers = o.verifiers.clone();
        }
        if let Some(v) = &o.toolset_size {
            self.synthesis.toolset = pair(v);
        }
        if let Some(v) = &o.exemplar_count {
            self.synthesis.exemplars = pair(v);
        }
        if let Some(v) = &o.frontier {
            self.dataset.frontier = pair(v);
        }
    }

    pub fn check(&self) -> anyhow::Result<()> {
        if self.synthesis.rounds == 0 {
            return Err(UsageError("rounds must be at least 1".into()).into());
        }
        if self.workers == 0 {
            return Err(UsageError("workers must be at least 1".into()).into());
        }
        Ok(())
    }

    /// A configured input path that must exist.
    pub fn require(&self, path: &Option<PathBuf>, what: &str) -> anyhow::Result<PathBuf> {
        let p = path
            .clone()
            .ok_or_else(|| UsageError(format!("no {what} path given (use --{what} or the config file)")))?;
        if !p.exists() {
            return Err(UsageError(format!("{what} path {} does not exist", p.display())).into());
        }
        Ok(p)
    }

    pub fn cycle_options(&self) -> CycleOptions {
        CycleOptions {
            rounds: self.synthesis.rounds,
            max_steps: self.synthesis.max_steps,
            retries: self.synthesis.retries,
            ..CycleOptions::default()
        }
    }

    pub fn bounds(&self) -> ConfigBounds {
        let [tl, th] = self.synthesis.toolset;
        let [el, eh] = self.synthesis.exemplars;
        ConfigBounds {
            toolset: SizeRange::new(tl, th),
            exemplars: SizeRange::new(el, eh),
        }
    }

    pub fn rejection(&self) -> RejectionOptions {
        RejectionOptions {
            attempts: self.dataset.attempts,
            turn_cap: self.dataset.turn_cap,
            ..RejectionOptions::default()
        }
    }

    pub fn frontier(&self) -> FrontierRange {
        let [lo, hi] = self.dataset.frontier;
        FrontierRange { lo, hi }
    }

    pub fn validation(&self) -> ValidationOptions {
        ValidationOptions {
            fanout: self.validation.fanout,
            repeats: self.validation.repeats,
            ..ValidationOptions::default()
        }
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn ensure_out_dir(&self) -> anyhow::Result<()> {
        std::fs::create_dir_all(&self.out_dir).with_context(|| format!("creating {}", self.out_dir.display()))
    }
}
