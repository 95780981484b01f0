//! Seed-concept and exemplar pools, and per-cycle configuration sampling.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use indexmap::IndexMap;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::tools::{sample_toolset, Registry, SampleError, SizeRange};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedConcept {
    pub text: String,
    pub domain: Domain,
    #[serde(default)]
    pub source: String,
}

/// A query-only cue. Carries no answer and no trace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Exemplar {
    pub query_text: String,
    #[serde(default)]
    pub source_benchmark: String,
}

#[derive(Debug, thiserror::Error)]
pub enum PoolError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} pool is empty")]
    EmptyPool(&'static str),
    #[error("exemplar pool holds {available} entries, need at least {required}")]
    InsufficientExemplars { available: usize, required: usize },
    #[error("invalid exemplar range [{lo}, {hi}]")]
    InvalidRange { lo: usize, hi: usize },
    #[error(transparent)]
    Toolset(#[from] SampleError),
}

/// A pool entry with the number of times it occurred in the source file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counted<T> {
    pub item: T,
    pub count: usize,
}

fn read_lines<T, R, F>(reader: R, label: &str, mut check: F) -> Result<Vec<T>, PoolError>
where
    T: serde::de::DeserializeOwned,
    R: BufRead,
    F: FnMut(&T) -> Result<(), String>,
{
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| PoolError::Io {
            path: label.to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| PoolError::Parse {
            path: label.to_string(),
            line: idx + 1,
            message,
        };
        let record: T = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        check(&record).map_err(parse_err)?;
        out.push(record);
    }
    Ok(out)
}

fn open(path: &Path) -> Result<std::io::BufReader<std::fs::File>, PoolError> {
    std::fs::File::open(path)
        .map(std::io::BufReader::new)
        .map_err(|source| PoolError::Io {
            path: path.display().to_string(),
            source,
        })
}

fn dedup<T: Eq + std::hash::Hash>(items: Vec<T>) -> Vec<Counted<T>> {
    let mut counts: IndexMap<T, usize> = IndexMap::new();
    for item in items {
        *counts.entry(item).or_default() += 1;
    }
    counts.into_iter().map(|(item, count)| Counted { item, count }).collect()
}

/// Seed concepts, deduplicated on `(text, domain)` and indexed by domain.
#[derive(Debug, Clone, Default)]
pub struct SeedPool {
    seeds: Vec<Counted<SeedConcept>>,
    by_domain: BTreeMap<Domain, Vec<usize>>,
}

impl SeedPool {
    pub fn from_seeds(seeds: Vec<SeedConcept>) -> Result<Self, PoolError> {
        if seeds.is_empty() {
            return Err(PoolError::EmptyPool("seed"));
        }
        let seeds = dedup(seeds);
        let mut by_domain: BTreeMap<Domain, Vec<usize>> = BTreeMap::new();
        for (i, s) in seeds.iter().enumerate() {
            by_domain.entry(s.item.domain).or_default().push(i);
        }
        Ok(SeedPool { seeds, by_domain })
    }

    pub fn from_reader<R: BufRead>(reader: R, label: &str) -> Result<Self, PoolError> {
        let seeds = read_lines(reader, label, |s: &SeedConcept| {
            if s.text.trim().is_empty() {
                Err("seed text is blank".to_string())
            } else {
                Ok(())
            }
        })?;
        SeedPool::from_seeds(seeds)
    }

    pub fn load(path: &Path) -> Result<Self, PoolError> {
        SeedPool::from_reader(open(path)?, &path.display().to_string())
    }

    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    pub fn entries(&self) -> &[Counted<SeedConcept>] {
        &self.seeds
    }

    pub fn get(&self, i: usize) -> Option<&SeedConcept> {
        self.seeds.get(i).map(|c| &c.item)
    }

    /// Number of distinct seeds per domain.
    pub fn domain_counts(&self) -> BTreeMap<Domain, usize> {
        self.by_domain.iter().map(|(d, v)| (*d, v.len())).collect()
    }

    pub fn in_domain(&self, domain: Domain) -> impl Iterator<Item = &SeedConcept> {
        self.by_domain
            .get(&domain)
            .into_iter()
            .flatten()
            .map(move |&i| &self.seeds[i].item)
    }
}

/// Query-only exemplars, deduplicated on query text.
#[derive(Debug, Clone, Default)]
pub struct ExemplarPool {
    exemplars: Vec<Counted<Exemplar>>,
}

impl ExemplarPool {
    pub fn from_exemplars(items: Vec<Exemplar>) -> Result<Self, PoolError> {
        if items.is_empty() {
            return Err(PoolError::EmptyPool("exemplar"));
        }
        let mut counts: IndexMap<String, Counted<Exemplar>> = IndexMap::new();
        for ex in items {
            counts
                .entry(ex.query_text.clone())
                .and_modify(|c| c.count += 1)
                .or_insert(Counted { item: ex, count: 1 });
        }
        Ok(ExemplarPool {
            exemplars: counts.into_values().collect(),
        })
    }

    pub fn from_reader<R: BufRead>(reader: R, label: &str) -> Result<Self, PoolError> {
        let items = read_lines(reader, label, |e: &Exemplar| {
            if e.query_text.trim().is_empty() {
                Err("exemplar query_text is blank".to_string())
            } else {
                Ok(())
            }
        })?;
        ExemplarPool::from_exemplars(items)
    }

    pub fn load(path: &Path) -> Result<Self, PoolError> {
        ExemplarPool::from_reader(open(path)?, &path.display().to_string())
    }

    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }

    pub fn entries(&self) -> &[Counted<Exemplar>] {
        &self.exemplars
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigBounds {
    pub toolset: SizeRange,
    pub exemplars: SizeRange,
}

impl Default for ConfigBounds {
    fn default() -> Self {
        ConfigBounds {
            toolset: SizeRange::new(15, 50),
            exemplars: SizeRange::new(3, 5),
        }
    }
}

/// The sampled triple scoping one synthesis cycle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub cycle_id: String,
    pub rng_seed: u64,
    pub seed: SeedConcept,
    pub toolset: Vec<String>,
    pub exemplars: Vec<Exemplar>,
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-cycle rng seed derived from the global seed and the cycle index, so
/// a cycle's draws never depend on which worker runs it.
pub fn derive_seed(global: u64, index: u64) -> u64 {
    mix(global ^ mix(index))
}

pub fn cycle_id(index: u64) -> String {
    format!("cycle-{index:06}")
}

/// Samples a configuration from a fresh rng seeded with `rng_seed`. Draw
/// order is fixed: seed, then toolset, then exemplars.
pub fn sample_config(
    seeds: &SeedPool,
    exemplars: &ExemplarPool,
    registry: &Registry,
    bounds: &ConfigBounds,
    rng_seed: u64,
    cycle_id: &str,
) -> Result<SynthesisConfig, PoolError> {
    if seeds.is_empty() {
        return Err(PoolError::EmptyPool("seed"));
    }
    if exemplars.is_empty() {
        return Err(PoolError::EmptyPool("exemplar"));
    }
    let ex = bounds.exemplars;
    if ex.lo == 0 || ex.hi < ex.lo {
        return Err(PoolError::InvalidRange { lo: ex.lo, hi: ex.hi });
    }
    if exemplars.len() < ex.lo {
        return Err(PoolError::InsufficientExemplars {
            available: exemplars.len(),
            required: ex.lo,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let seed = seeds.seeds[rng.gen_range(0..seeds.len())].item.clone();
    let toolset = sample_toolset(registry, seed.domain, bounds.toolset, &mut rng)?;
    let count = rng.gen_range(ex.lo..=ex.hi.min(exemplars.len()));
    let chosen = index::sample(&mut rng, exemplars.len(), count)
        .into_iter()
        .map(|i| exemplars.exemplars[i].item.clone())
        .collect();
    Ok(SynthesisConfig {
        cycle_id: cycle_id.to_string(),
        rng_seed,
        seed,
        toolset,
        exemplars: chosen,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tools::{Backend, ToolPrimitive, ToolSpec};

    fn seed(text: &str, d: Domain) -> SeedConcept {
        SeedConcept { text: text.into(), domain: d, source: "test".into() }
    }

    fn exemplar(q: &str) -> Exemplar {
        Exemplar { query_text: q.into(), source_benchmark: "bench".into() }
    }

    fn registry(n: usize) -> Registry {
        let mut reg = Registry::new();
        for i in 0..n {
            let d = Domain::ALL[i % Domain::ALL.len()];
            reg.register_tool(ToolSpec::new(&format!("t{i}"), d, ToolPrimitive::Retrieval, Backend::builtin("mock_lookup")))
                .unwrap();
        }
        reg
    }

    #[test]
    fn loads_financial_seeds() {
        let text = r#"{"text":"AAPL","domain":"Financial","source":"nasdaq"}
{"text":"TSLA","domain":"Financial","source":"nasdaq"}
{"text":"BRK.A","domain":"Financial","source":"nyse"}
"#;
        let pool = SeedPool::from_reader(text.as_bytes(), "mem").unwrap();
        assert_eq!(pool.len(), 3);
        assert_eq!(pool.domain_counts(), BTreeMap::from([(Domain::Financial, 3)]));
    }

    #[test]
    fn blank_seed_reports_line() {
        let text = "{\"text\":\"AAPL\",\"domain\":\"Financial\"}\n{\"text\":\"  \",\"domain\":\"Financial\"}\n";
        match SeedPool::from_reader(text.as_bytes(), "mem").unwrap_err() {
            PoolError::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn duplicate_exemplars_are_counted() {
        let text = "{\"query_text\":\"q1\",\"source_benchmark\":\"a\"}\n{\"query_text\":\"q1\",\"source_benchmark\":\"b\"}\n{\"query_text\":\"q2\"}\n";
        let pool = ExemplarPool::from_reader(text.as_bytes(), "mem").unwrap();
        assert_eq!(pool.len(), 2);
        assert_eq!(pool.entries()[0].count, 2);
    }

    #[test]
    fn empty_files_are_rejected() {
        assert!(matches!(SeedPool::from_reader("".as_bytes(), "m"), Err(PoolError::EmptyPool(_))));
        assert!(matches!(ExemplarPool::from_reader("\n".as_bytes(), "m"), Err(PoolError::EmptyPool(_))));
    }

    #[test]
    fn default_bounds_hold() {
        let seeds = SeedPool::from_seeds(vec![seed("a", Domain::Medical), seed("b", Domain::Academic)]).unwrap();
        let ex = ExemplarPool::from_exemplars((0..10).map(|i| exemplar(&format!("q{i}"))).collect()).unwrap();
        let reg = registry(200);
        for s in 0..40 {
            let c = sample_config(&seeds, &ex, &reg, &ConfigBounds::default(), s, "c").unwrap();
            assert!(SizeRange::new(15, 50).contains(c.toolset.len()));
            assert!(SizeRange::new(3, 5).contains(c.exemplars.len()));
            for t in &c.toolset {
                assert!(c.seed.domain.accepts(reg.get(t).unwrap().domain));
            }
        }
    }

    #[test]
    fn singleton_pools_give_unique_config() {
        let seeds = SeedPool::from_seeds(vec![seed("a", Domain::General)]).unwrap();
        let ex = ExemplarPool::from_exemplars(vec![exemplar("q")]).unwrap();
        let mut reg = Registry::new();
        reg.register_tool(ToolSpec::new("only", Domain::General, ToolPrimitive::Retrieval, Backend::builtin("mock_lookup")))
            .unwrap();
        let bounds = ConfigBounds { toolset: SizeRange::new(1, 1), exemplars: SizeRange::new(1, 1) };
        for s in 0..5 {
            let c = sample_config(&seeds, &ex, &reg, &bounds, s, "c").unwrap();
            assert_eq!((c.seed.text.as_str(), c.toolset.clone(), c.exemplars.len()), ("a", vec!["only".to_string()], 1));
        }
    }

    #[test]
    fn identical_seed_identical_config() {
        let seeds = SeedPool::from_seeds((0..20).map(|i| seed(&format!("s{i}"), Domain::Medical)).collect()).unwrap();
        let ex = ExemplarPool::from_exemplars((0..10).map(|i| exemplar(&format!("q{i}"))).collect()).unwrap();
        let reg = registry(200);
        let a = sample_config(&seeds, &ex, &reg, &ConfigBounds::default(), 42, "c").unwrap();
        let b = sample_config(&seeds, &ex, &reg, &ConfigBounds::default(), 42, "c").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exemplar_pool_does_not_affect_seed_or_toolset() {
        let seeds = SeedPool::from_seeds((0..20).map(|i| seed(&format!("s{i}"), Domain::Medical)).collect()).unwrap();
        let ex1 = ExemplarPool::from_exemplars((0..10).map(|i| exemplar(&format!("q{i}"))).collect()).unwrap();
        let ex2 = ExemplarPool::from_exemplars((0..7).map(|i| exemplar(&format!("other{i}"))).collect()).unwrap();
        let reg = registry(200);
        for s in 0..20 {
            let a = sample_config(&seeds, &ex1, &reg, &ConfigBounds::default(), s, "c").unwrap();
            let b = sample_config(&seeds, &ex2, &reg, &ConfigBounds::default(), s, "c").unwrap();
            assert_eq!((a.seed, a.toolset), (b.seed, b.toolset));
        }
    }

    #[test]
    fn seed_selection_is_uniform_within_five_sigma() {
        let n_seeds = 10usize;
        let seeds = SeedPool::from_seeds((0..n_seeds).map(|i| seed(&format!("s{i}"), Domain::General)).collect()).unwrap();
        let ex = ExemplarPool::from_exemplars(vec![exemplar("q")]).unwrap();
        let mut reg = Registry::new();
        reg.register_tool(ToolSpec::new("g", Domain::General, ToolPrimitive::Retrieval, Backend::builtin("mock_lookup")))
            .unwrap();
        let bounds = ConfigBounds { toolset: SizeRange::new(1, 1), exemplars: SizeRange::new(1, 1) };
        let draws = 10_000u64;
        let mut hits = vec![0u64; n_seeds];
        for i in 0..draws {
            let c = sample_config(&seeds, &ex, &reg, &bounds, derive_seed(7, i), "c").unwrap();
            hits[c.seed.text[1..].parse::<usize>().unwrap()] += 1;
        }
        let p = 1.0 / n_seeds as f64;
        let mean = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for h in hits {
            assert!((h as f64 - mean).abs() <= 5.0 * sigma, "{h} vs {mean}±{sigma}");
        }
    }

    #[test]
    fn derived_seeds_differ_per_index() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(cycle_id(12), "cycle-000012");
    }
}
