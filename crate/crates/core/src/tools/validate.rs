//! Conformance harness run before a tool enters the pool: correctness
//! against expected outputs, agreement under concurrent invocation, and
//! agreement across spaced sequential invocations.

use std::sync::Barrier;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{CallLimits, Observation, Registry, ToolCall, ToolHandle};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    Equals(String),
    Contains(String),
    NonEmpty,
}

impl Expectation {
    fn check(&self, obs: &Observation) -> Result<(), String> {
        if !obs.is_ok() {
            return Err(format!("status {:?}: {}", obs.status, obs.payload));
        }
        match self {
            Expectation::Equals(want) if &obs.payload != want => {
                Err(format!("expected `{want}`, got `{}`", obs.payload))
            }
            Expectation::Contains(want) if !obs.payload.contains(want.as_str()) => {
                Err(format!("expected payload containing `{want}`"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationCase {
    #[serde(default)]
    pub arguments: Map<String, Value>,
    pub expect: Expectation,
}

impl ValidationCase {
    pub fn new(arguments: Value, expect: Expectation) -> Self {
        ValidationCase {
            arguments: arguments.as_object().cloned().unwrap_or_default(),
            expect,
        }
    }
}

pub type ValidationSuite = Vec<ValidationCase>;

#[derive(Debug, Clone, Copy)]
pub struct ValidationOptions {
    pub fanout: usize,
    pub repeats: usize,
    /// Pause between sequential consistency probes.
    pub spacing: Duration,
    pub limits: CallLimits,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            fanout: 8,
            repeats: 4,
            spacing: Duration::from_millis(5),
            limits: CallLimits::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub passed: bool,
    pub details: Vec<String>,
}

impl CheckOutcome {
    fn from_failures(details: Vec<String>) -> Self {
        CheckOutcome {
            passed: details.is_empty(),
            details,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValidationVerdict {
    Robust,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub tool_name: String,
    pub correctness: CheckOutcome,
    pub concurrency_safety: CheckOutcome,
    pub response_consistency: CheckOutcome,
    pub verdict: ValidationVerdict,
}

impl ValidationReport {
    pub fn is_robust(&self) -> bool {
        self.verdict == ValidationVerdict::Robust
    }

    /// Names of the checks that failed, in check order.
    pub fn failed_checks(&self) -> Vec<&'static str> {
        [
            ("correctness", &self.correctness),
            ("concurrency_safety", &self.concurrency_safety),
            ("response_consistency", &self.response_consistency),
        ]
        .into_iter()
        .filter(|(_, c)| !c.passed)
        .map(|(n, _)| n)
        .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ValidationError {
    #[error("validation suite for `{0}` is empty")]
    EmptySuite(String),
    #[error("fanout must be at least 2 (got {0})")]
    Fanout(usize),
    #[error("repeats must be at least 2 (got {0})")]
    Repeats(usize),
    #[error("handle `{0}` does not belong to this registry")]
    UnknownHandle(String),
}

pub fn validate_tool(
    registry: &Registry,
    handle: &ToolHandle,
    suite: &[ValidationCase],
    opts: &ValidationOptions,
) -> Result<ValidationReport, ValidationError> {
    let spec = registry
        .spec(handle)
        .filter(|s| s.name == handle.name())
        .ok_or_else(|| ValidationError::UnknownHandle(handle.name().to_string()))?;
    if suite.is_empty() {
        return Err(ValidationError::EmptySuite(spec.name.clone()));
    }
    if opts.fanout < 2 {
        return Err(ValidationError::Fanout(opts.fanout));
    }
    if opts.repeats < 2 {
        return Err(ValidationError::Repeats(opts.repeats));
    }
    let call = |i: usize, case: &ValidationCase| ToolCall {
        call_id: format!("validate-{i}"),
        tool_name: spec.name.clone(),
        arguments: case.arguments.clone(),
    };

    let correctness = CheckOutcome::from_failures(
        suite
            .iter()
            .enumerate()
            .filter_map(|(i, case)| {
                let obs = registry.execute(&call(i, case), &opts.limits);
                case.expect.check(&obs).err().map(|e| format!("case {i}: {e}"))
            })
            .collect(),
    );

    let probe = &suite[0];
    let barrier = Barrier::new(opts.fanout);
    let concurrent: Vec<Observation> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..opts.fanout)
            .map(|i| {
                let barrier = &barrier;
                let c = call(i, probe);
                scope.spawn(move || {
                    barrier.wait();
                    registry.execute(&c, &opts.limits)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("validation worker panicked"))
            .collect()
    });
    let concurrency_safety = CheckOutcome::from_failures(divergences(&concurrent, |a, b| {
        spec.consistency.agrees(a, b)
    }));

    let mut sequential = Vec::with_capacity(opts.repeats);
    for i in 0..opts.repeats {
        if i > 0 {
            std::thread::sleep(opts.spacing);
        }
        sequential.push(registry.execute(&call(i, probe), &opts.limits));
    }
    let response_consistency = CheckOutcome::from_failures(divergences(&sequential, |a, b| {
        spec.consistency.agrees(a, b)
    }));

    let verdict = if correctness.passed && concurrency_safety.passed && response_consistency.passed {
        ValidationVerdict::Robust
    } else {
        ValidationVerdict::Rejected
    };
    Ok(ValidationReport {
        tool_name: spec.name.clone(),
        correctness,
        concurrency_safety,
        response_consistency,
        verdict,
    })
}

/// Non-Ok observations and every disagreeing pair.
fn divergences(obs: &[Observation], agree: impl Fn(&str, &str) -> bool) -> Vec<String> {
    let mut out: Vec<String> = obs
        .iter()
        .enumerate()
        .filter(|(_, o)| !o.is_ok())
        .map(|(i, o)| format!("invocation {i}: status {:?}", o.status))
        .collect();
    for i in 0..obs.len() {
        for j in i + 1..obs.len() {
            if obs[i].is_ok() && obs[j].is_ok() && !agree(&obs[i].payload, &obs[j].payload) {
                out.push(format!(
                    "invocations {i} and {j} diverge: `{}` vs `{}`",
                    obs[i].payload, obs[j].payload
                ));
            }
        }
    }
    out
}
