use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tasksynth::dataset::teacher::{AnswerKey, Sampler};
use tasksynth::dataset::{estimate_learnability, AnswerCheck};
use tasksynth::demo::DemoWorld;
use tasksynth::diversity::{analyze_corpus, classify_topology, EdgeMode, GraphNode, ToolCallGraph, Trajectory};
use tasksynth::par::{map_ordered, map_range, Execution};
use tasksynth::policy::PolicyEndpoint;
use tasksynth::tools::ToolPrimitive;
use tasksynth::verification::ExactMatchVerifier;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn five_node_graphs() -> Vec<ToolCallGraph> {
    let pairs: Vec<(usize, usize)> = (0..5).flat_map(|i| (i + 1..5).map(move |j| (i, j))).collect();
    (0u32..1 << pairs.len())
        .map(|mask| {
            let nodes = (0..5)
                .map(|i| GraphNode {
                    call_id: format!("c{i}"),
                    tool_name: format!("t{i}"),
                    primitive: if (mask >> i) & 1 == 1 { ToolPrimitive::Retrieval } else { ToolPrimitive::Processing },
                })
                .collect();
            let edges: Vec<_> = pairs.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, e)| *e).collect();
            ToolCallGraph::new(nodes, edges).unwrap()
        })
        .collect()
}

fn bench(c: &mut Criterion) {
    let world = DemoWorld::new(1);
    let tasks = world.tasks(Execution::Parallel, 200, 9);
    let corpus: Vec<Trajectory> = tasks.iter().map(Trajectory::from).collect();
    let graphs = five_node_graphs();
    let policy = PolicyEndpoint::scripted("sampler", Arc::new(Sampler { key: AnswerKey::from_tasks(&tasks), seed: 1 }));
    let exact = ExactMatchVerifier::default();

    let mut g = c.benchmark_group("analyze_corpus");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| analyze_corpus(exec, black_box(&corpus), &world.registry, EdgeMode::Heuristic).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("classify_five_node_dags");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| map_ordered(exec, black_box(&graphs), |g| classify_topology(g).unwrap()))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("synthesis_cycles");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| world.tasks(exec, 32, black_box(3))));
    }
    g.finish();

    let mut g = c.benchmark_group("estimate_learnability");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                map_range(exec, 32, |i| {
                    estimate_learnability(
                        Execution::Sequential,
                        &tasks[i],
                        &policy,
                        AnswerCheck::Single(&exact),
                        &world.registry,
                        8,
                        16,
                    )
                    .unwrap()
                    .successes
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
