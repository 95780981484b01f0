use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use serde_json::{json, Value};
use tasksynth::dataset::{
    build_sft, estimate_learnability, export_rl, export_sft, filter_frontier, select_rl, AcceptedTrajectory,
    LearnabilityEstimate,
};
use tasksynth::diversity::{analyze_corpus, histogram_csv, CorpusAnalysis, EdgeMode, PolicyEdgeJudge, Trajectory};
use tasksynth::jsonl;
use tasksynth::par::{self, with_workers, Execution};
use tasksynth::pools::{ExemplarPool, SeedPool};
use tasksynth::synthesis::{synthesize, CycleEndpoints, SynthesisRun, SynthesizedTask, TaskStore};
use tasksynth::tools::{Expectation, ParamType, Registry, ToolSpec, ValidationCase, ValidationReport};
use tasksynth::verification::cross_verify;

use crate::config::RunConfig;
use crate::{endpoints, UsageError};

fn load_registry(cfg: &RunConfig) -> anyhow::Result<Registry> {
    let path = cfg.require(&cfg.manifest, "manifest")?;
    Ok(Registry::load(&path)?)
}

fn read_tasks(path: &Path) -> anyhow::Result<Vec<SynthesizedTask>> {
    if !path.exists() {
        return Err(UsageError(format!("task file {} does not exist", path.display())).into());
    }
    Ok(jsonl::read_file(path)?)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn probe_value(ty: Option<ParamType>) -> Value {
    match ty {
        Some(ParamType::Integer) | Some(ParamType::Number) => json!(1),
        Some(ParamType::Boolean) => json!(true),
        Some(ParamType::Array) => json!([]),
        Some(ParamType::Object) => json!({}),
        _ => json!("probe"),
    }
}

/// One case filling every required parameter, expecting a non-empty result.
fn default_suite(spec: &ToolSpec) -> Vec<ValidationCase> {
    let args: serde_json::Map<String, Value> = spec
        .parameters
        .iter()
        .filter(|p| p.required)
        .map(|p| (p.name.clone(), probe_value(p.param_type)))
        .collect();
    vec![ValidationCase::new(Value::Object(args), Expectation::NonEmpty)]
}

pub fn validate(cfg: &RunConfig, suite: Option<&Path>, report: Option<PathBuf>) -> anyhow::Result<ExitCode> {
    let registry = load_registry(cfg)?;
    if registry.is_empty() {
        bail!("manifest declares no tools");
    }
    let suites: BTreeMap<String, Vec<ValidationCase>> = match suite {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing suite {}", p.display()))?,
        None => BTreeMap::new(),
    };
    let opts = cfg.validation();
    let specs: Vec<&ToolSpec> = registry.specs().collect();
    let reports = with_workers(cfg.workers, |exec| {
        par::map_ordered(exec, &specs, |spec| {
            let cases = suites.get(&spec.name).cloned().unwrap_or_else(|| default_suite(spec));
            let handle = registry.handle(&spec.name).expect("listed tool has a handle");
            tasksynth::tools::validate_tool(&registry, &handle, &cases, &opts)
        })
    })
    .into_iter()
    .collect::<Result<Vec<ValidationReport>, _>>()?;

    cfg.ensure_out_dir()?;
    let path = report.unwrap_or_else(|| cfg.out("validation.json"));
    write_json(&path, &reports)?;
    let mut robust = true;
    for r in &reports {
        if r.is_robust() {
            println!("{}: robust", r.tool_name);
        } else {
            robust = false;
            println!("{}: rejected ({})", r.tool_name, r.failed_checks().join(", "));
        }
    }
    Ok(if robust { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

pub fn synthesize_cmd(cfg: &RunConfig, cycles: u64) -> anyhow::Result<ExitCode> {
    let registry = load_registry(cfg)?;
    let seeds = SeedPool::load(&cfg.require(&cfg.seeds, "seeds")?)?;
    let exemplars = ExemplarPool::load(&cfg.require(&cfg.exemplars, "exemplars")?)?;
    let collector = endpoints::policy(&cfg.endpoints.collector, cfg.seed, &[])?;
    let generator = endpoints::policy(&cfg.endpoints.generator, cfg.seed, &[])?;
    let run = SynthesisRun {
        registry: &registry,
        seeds: &seeds,
        exemplars: &exemplars,
        bounds: cfg.bounds(),
        options: cfg.cycle_options(),
        global_seed: cfg.seed,
        endpoints: CycleEndpoints { collector: &collector, generator: &generator },
    };
    cfg.ensure_out_dir()?;
    let store = TaskStore::open(&cfg.out_dir)?;
    let summary = synthesize(&run, &store, cycles, cfg.workers)?;
    tracing::info!(?summary, "synthesis finished");
    println!("{}", serde_json::to_string(&summary)?);
    Ok(ExitCode::SUCCESS)
}

pub fn verify(cfg: &RunConfig, query: &str, reference: &str, answer: &str) -> anyhow::Result<ExitCode> {
    let vs = endpoints::verifiers(&cfg.endpoints.verifiers)?;
    let agreed = match vs.as_slice() {
        [one] => {
            let v = one.judge(query, reference, answer)?;
            println!("{}", serde_json::to_string(&v)?);
            v.is_correct()
        }
        [a, b] => {
            let cv = cross_verify(query, reference, answer, [a.as_ref(), b.as_ref()]);
            println!("{}", serde_json::to_string(&cv)?);
            cv.agreed
        }
        _ => unreachable!(),
    };
    Ok(if agreed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

pub fn build_sft_cmd(cfg: &RunConfig, tasks: Option<PathBuf>, out: Option<PathBuf>) -> anyhow::Result<ExitCode> {
    let registry = load_registry(cfg)?;
    let tasks = read_tasks(&tasks.unwrap_or_else(|| cfg.out("tasks.jsonl")))?;
    let teacher = endpoints::policy(&cfg.endpoints.teacher, cfg.seed, &tasks)?;
    let vs = endpoints::verifiers(&cfg.endpoints.verifiers)?;
    let opts = cfg.rejection();
    let build = with_workers(cfg.workers, |exec| {
        build_sft(exec, &tasks, &teacher, endpoints::check(&vs), &registry, &opts)
    })?;
    cfg.ensure_out_dir()?;
    let out = out.unwrap_or_else(|| cfg.out("sft.jsonl"));
    export_sft(&build.accepted, &out)?;
    jsonl::write_file(&cfg.out("sft_rejected.jsonl"), &build.rejected)?;
    println!(
        "{}",
        json!({"tasks": tasks.len(), "accepted": build.accepted.len(), "rejected": build.rejected.len(), "output": out})
    );
    Ok(ExitCode::SUCCESS)
}

pub fn filter_rl_cmd(
    cfg: &RunConfig,
    tasks: Option<PathBuf>,
    estimates: Option<PathBuf>,
    out: Option<PathBuf>,
) -> anyhow::Result<ExitCode> {
    let tasks = read_tasks(&tasks.unwrap_or_else(|| cfg.out("tasks.jsonl")))?;
    cfg.ensure_out_dir()?;
    let estimates: Vec<LearnabilityEstimate> = match estimates {
        Some(p) => jsonl::read_file(&p)?,
        None => {
            let registry = load_registry(cfg)?;
            let policy = endpoints::policy(&cfg.endpoints.policy, cfg.seed, &tasks)?;
            let vs = endpoints::verifiers(&cfg.endpoints.verifiers)?;
            let (k, cap) = (cfg.dataset.k_rl, cfg.dataset.turn_cap);
            let est = with_workers(cfg.workers, |exec| {
                par::map_ordered(exec, &tasks, |t| {
                    estimate_learnability(Execution::Sequential, t, &policy, endpoints::check(&vs), &registry, k, cap)
                })
            })
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
            jsonl::write_file(&cfg.out("estimates.jsonl"), &est)?;
            est
        }
    };
    let kept = filter_frontier(&estimates, cfg.frontier()).map_err(|e| UsageError(e.to_string()))?;
    let records = select_rl(&tasks, &kept);
    let out = out.unwrap_or_else(|| cfg.out("rl.jsonl"));
    export_rl(&records, &out)?;
    println!("{}", json!({"tasks": tasks.len(), "estimates": estimates.len(), "kept": records.len(), "output": out}));
    Ok(ExitCode::SUCCESS)
}

/// Reads trajectories from task-store, SFT or plain trajectory records.
pub fn read_trajectories(path: &Path) -> anyhow::Result<Vec<Trajectory>> {
    if !path.exists() {
        return Err(UsageError(format!("input {} does not exist", path.display())).into());
    }
    let values: Vec<Value> = jsonl::read_file(path)?;
    values
        .into_iter()
        .map(|v| {
            let t = if v.get("rounds").is_some() {
                Trajectory::from(&serde_json::from_value::<SynthesizedTask>(v)?)
            } else if v.get("messages").is_some() {
                Trajectory::from(&serde_json::from_value::<AcceptedTrajectory>(v)?)
            } else {
                serde_json::from_value(v)?
            };
            Ok(t)
        })
        .collect::<Result<_, serde_json::Error>>()
        .with_context(|| format!("reading trajectories from {}", path.display()))
}

pub fn analyze(cfg: &RunConfig, inputs: &[PathBuf], edges: Option<&str>) -> anyhow::Result<ExitCode> {
    let registry = load_registry(cfg)?;
    let default_input = [cfg.out("tasks.jsonl")];
    let inputs = if inputs.is_empty() { &default_input[..] } else { inputs };
    let mut corpus = Vec::new();
    for p in inputs {
        corpus.extend(read_trajectories(p)?);
    }
    let judge = match edges {
        None | Some("heuristic") => None,
        Some(spec) => Some(PolicyEdgeJudge { endpoint: endpoints::policy(spec, cfg.seed, &[])? }),
    };
    let mode = judge.as_ref().map_or(EdgeMode::Heuristic, |j| EdgeMode::External(j));
    let analysis = with_workers(cfg.workers, |exec| analyze_corpus(exec, &corpus, &registry, mode))?;
    cfg.ensure_out_dir()?;
    write_json(&cfg.out("analysis.json"), &analysis)?;
    std::fs::write(cfg.out("report.txt"), analysis.report.to_text())?;
    std::fs::write(cfg.out("histogram.csv"), histogram_csv(&analysis.histogram))?;
    print!("{}", analysis.report.to_text());
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum ReportFormat {
    Text,
    Json,
    Csv,
}

pub fn report(cfg: &RunConfig, analysis: Option<PathBuf>, format: ReportFormat) -> anyhow::Result<ExitCode> {
    let path = analysis.unwrap_or_else(|| cfg.out("analysis.json"));
    if !path.exists() {
        return Err(UsageError(format!("analysis {} does not exist; run `analyze` first", path.display())).into());
    }
    let a: CorpusAnalysis = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
    match format {
        ReportFormat::Text => print!("{}", a.report.to_text()),
        ReportFormat::Json => println!("{}", serde_json::to_string_pretty(&a.report)?),
        ReportFormat::Csv => print!("{}", histogram_csv(&a.histogram)),
    }
    Ok(ExitCode::SUCCESS)
}

/// Writes an offline workspace: mock-tool manifest, pools and config.
pub fn demo(dir: &Path, tools_per_domain: usize) -> anyhow::Result<ExitCode> {
    use tasksynth::demo;
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("tools.json"), &demo::manifest(tools_per_domain, 0))?;
    jsonl::write_file(&dir.join("seeds.jsonl"), &demo::seeds(25))?;
    jsonl::write_file(&dir.join("exemplars.jsonl"), &demo::exemplars(12))?;
    std::fs::write(
        dir.join("tasksynth.toml"),
        "manifest = \"tools.json\"\nseeds = \"seeds.jsonl\"\nexemplars = \"exemplars.jsonl\"\nout_dir = \"run\"\nseed = 0\nworkers = 4\n\n\
         [endpoints]\ncollector = \"scripted:collector\"\ngenerator = \"scripted:generator\"\nteacher = \"scripted:oracle\"\n\
         policy = \"scripted:sampler\"\nverifiers = [\"exact-match\", \"scripted:judge\"]\n\n\
         [synthesis]\nrounds = 3\nmax_steps = 6\nretries = 1\ntoolset = [15, 50]\nexemplars = [3, 5]\n\n\
         [dataset]\nattempts = 1\nturn_cap = 16\nk_rl = 8\nfrontier = [1, 5]\nalpha = 0.1\n\n\
         [validation]\nfanout = 8\nrepeats = 4\n",
    )?;
    println!("wrote demo workspace to {}", dir.display());
    Ok(ExitCode::SUCCESS)
}
