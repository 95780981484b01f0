//! Synthetic pools built from builtin mock tools, for offline runs,
//! benchmarks and tests.

use std::sync::Arc;

use crate::domain::Domain;
use crate::par::{self, Execution};
use crate::policy::PolicyEndpoint;
use crate::pools::{ConfigBounds, Exemplar, ExemplarPool, SeedConcept, SeedPool};
use crate::synthesis::scripted::{ScriptedCollector, ScriptedGenerator};
use crate::synthesis::{CycleEndpoints, CycleOptions, SynthesisRun, SynthesizedTask};
use crate::tools::{Backend, ParamType, ParameterSpec, Registry, ToolManifest, ToolPrimitive, ToolSpec};

/// `per_domain` tools for each domain (General included), alternating
/// seeded lookup (Retrieval) and transform (Processing) mocks.
pub fn manifest(per_domain: usize, seed: u64) -> ToolManifest {
    let mut tools = Vec::new();
    for domain in Domain::ALL {
        let prefix = domain.as_str().to_ascii_lowercase();
        for i in 0..per_domain {
            let spec = if i % 2 == 0 {
                ToolSpec::new(
                    &format!("{prefix}_lookup_{i:02}"),
                    domain,
                    ToolPrimitive::Retrieval,
                    Backend::Builtin { name: "mock_lookup".into(), seed },
                )
                .with_description("Look up records matching a query.")
                .with_param(ParameterSpec::required("query", ParamType::String))
                .with_param(ParameterSpec::optional("limit", ParamType::Integer))
            } else {
                ToolSpec::new(
                    &format!("{prefix}_transform_{i:02}"),
                    domain,
                    ToolPrimitive::Processing,
                    Backend::Builtin { name: "mock_transform".into(), seed },
                )
                .with_description("Normalize and fingerprint a text value.")
                .with_param(ParameterSpec::required("text", ParamType::String))
            };
            tools.push(spec);
        }
    }
    ToolManifest { tools }
}

/// `per_domain` seed concepts for each non-General domain.
pub fn seeds(per_domain: usize) -> Vec<SeedConcept> {
    Domain::ALL
        .into_iter()
        .filter(|d| *d != Domain::General)
        .flat_map(|d| {
            (0..per_domain).map(move |i| SeedConcept {
                text: format!("{d} entity {i:03}"),
                domain: d,
                source: "demo".into(),
            })
        })
        .collect()
}

pub fn exemplars(n: usize) -> Vec<Exemplar> {
    (0..n)
        .map(|i| Exemplar {
            query_text: format!("Which record links entity {i} to its most cited source?"),
            source_benchmark: "demo".into(),
        })
        .collect()
}

/// Scripted collector and generator endpoints.
pub fn scripted_endpoints(seed: u64) -> (PolicyEndpoint, PolicyEndpoint) {
    (
        PolicyEndpoint::scripted("scripted-collector", Arc::new(ScriptedCollector { seed, ..Default::default() })),
        PolicyEndpoint::scripted("scripted-generator", Arc::new(ScriptedGenerator { seed })),
    )
}

/// A complete offline setup: mock-tool registry, pools and scripted
/// endpoints.
pub struct DemoWorld {
    pub registry: Registry,
    pub seeds: SeedPool,
    pub exemplars: ExemplarPool,
    pub collector: PolicyEndpoint,
    pub generator: PolicyEndpoint,
}

impl DemoWorld {
    pub fn new(seed: u64) -> Self {
        let (collector, generator) = scripted_endpoints(seed);
        DemoWorld {
            registry: Registry::from_manifest(manifest(24, seed)).expect("demo manifest is valid"),
            seeds: SeedPool::from_seeds(seeds(25)).expect("demo seeds are non-empty"),
            exemplars: ExemplarPool::from_exemplars(exemplars(12)).expect("demo exemplars are non-empty"),
            collector,
            generator,
        }
    }

    pub fn run(&self, global_seed: u64) -> SynthesisRun<'_> {
        SynthesisRun {
            registry: &self.registry,
            seeds: &self.seeds,
            exemplars: &self.exemplars,
            bounds: ConfigBounds::default(),
            options: CycleOptions::default(),
            global_seed,
            endpoints: CycleEndpoints { collector: &self.collector, generator: &self.generator },
        }
    }

    /// Cycles `0..n` held in memory; dropped cycles are skipped.
    pub fn tasks(&self, exec: Execution, n: usize, global_seed: u64) -> Vec<SynthesizedTask> {
        let run = self.run(global_seed);
        par::map_range(exec, n, |i| run.run_one(i as u64).ok())
            .into_iter()
            .flatten()
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tools::Registry;

    #[test]
    fn demo_manifest_registers() {
        let reg = Registry::from_manifest(manifest(10, 1)).unwrap();
        assert_eq!(reg.len(), 50);
        assert_eq!(seeds(3).len(), 12);
    }
}
