//! Endpoint spec strings.
//!
//! | spec                       | endpoint                                   |
//! |----------------------------|--------------------------------------------|
//! | `scripted:collector`       | offline evidence collector                 |
//! | `scripted:generator`       | offline task generator                     |
//! | `scripted:oracle`          | replays each task's own evidence, answers  |
//! | `scripted:sampler`         | oracle that fails on a hashed share of rollouts |
//! | `scripted:answers=PATH`    | answer key loaded from JSONL               |
//! | `scripted:judge`           | exact-match judge speaking the verdict grammar |
//! | `exact-match`              | normalized string match (verifiers only)   |
//! | `remote:MODEL@URL[#ENV]`   | chat-completions endpoint, key from `ENV`  |

use std::path::PathBuf;
use std::sync::Arc;

use tasksynth::dataset::teacher::{AnswerKey, Sampler};
use tasksynth::dataset::AnswerCheck;
use tasksynth::policy::{PolicyEndpoint, RemoteConfig};
use tasksynth::synthesis::scripted::{ScriptedCollector, ScriptedGenerator};
use tasksynth::synthesis::SynthesizedTask;
use tasksynth::verification::{ExactMatchJudge, ExactMatchVerifier, PolicyVerifier, Verifier};

use crate::UsageError;

#[derive(Debug, Clone, PartialEq)]
pub enum Spec {
    Collector,
    Generator,
    Oracle,
    Sampler,
    Answers(PathBuf),
    Judge,
    ExactMatch,
    Remote(RemoteConfig),
}

pub fn parse(spec: &str) -> Result<Spec, UsageError> {
    let bad = || UsageError(format!("unrecognized endpoint spec `{spec}`"));
    Ok(match spec {
        "scripted:collector" => Spec::Collector,
        "scripted:generator" => Spec::Generator,
        "scripted:oracle" => Spec::Oracle,
        "scripted:sampler" => Spec::Sampler,
        "scripted:judge" => Spec::Judge,
        "exact-match" => Spec::ExactMatch,
        s if s.starts_with("scripted:answers=") => Spec::Answers(PathBuf::from(&s["scripted:answers=".len()..])),
        s if s.starts_with("remote:") => {
            let rest = &s["remote:".len()..];
            let (target, key_env) = match rest.split_once('#') {
                Some((t, k)) => (t, Some(k)),
                None => (rest, None),
            };
            let (model, url) = target.split_once('@').ok_or_else(bad)?;
            if model.is_empty() || url.is_empty() {
                return Err(bad());
            }
            let mut cfg = RemoteConfig::new(url, model);
            if let Some(k) = key_env {
                cfg.api_key_env = k.to_string();
            }
            Spec::Remote(cfg)
        }
        _ => return Err(bad()),
    })
}

/// Builds a policy endpoint. `tasks` backs `scripted:oracle`.
pub fn policy(spec: &str, seed: u64, tasks: &[SynthesizedTask]) -> anyhow::Result<PolicyEndpoint> {
    Ok(match parse(spec)? {
        Spec::Collector => PolicyEndpoint::scripted(spec, Arc::new(ScriptedCollector { seed, ..Default::default() })),
        Spec::Generator => PolicyEndpoint::scripted(spec, Arc::new(ScriptedGenerator { seed })),
        Spec::Oracle => PolicyEndpoint::scripted(spec, Arc::new(AnswerKey::from_tasks(tasks))),
        Spec::Sampler => PolicyEndpoint::scripted(spec, Arc::new(Sampler { key: AnswerKey::from_tasks(tasks), seed })),
        Spec::Answers(path) => {
            let key = AnswerKey::load(&path).map_err(|e| UsageError(format!("answer key: {e}")))?;
            PolicyEndpoint::scripted(spec, Arc::new(key))
        }
        Spec::Judge => PolicyEndpoint::scripted(spec, Arc::new(ExactMatchJudge)),
        Spec::Remote(cfg) => PolicyEndpoint::remote(spec, cfg),
        Spec::ExactMatch => return Err(UsageError("`exact-match` is only valid as a verifier".into()).into()),
    })
}

pub fn verifier(spec: &str) -> anyhow::Result<Box<dyn Verifier>> {
    Ok(match parse(spec)? {
        Spec::ExactMatch => Box::new(ExactMatchVerifier::default()),
        _ => Box::new(PolicyVerifier::new(policy(spec, 0, &[])?)),
    })
}

pub fn verifiers(specs: &[String]) -> anyhow::Result<Vec<Box<dyn Verifier>>> {
    if !(1..=2).contains(&specs.len()) {
        return Err(UsageError(format!("expected one or two verifiers, got {}", specs.len())).into());
    }
    specs.iter().map(|s| verifier(s)).collect()
}

pub fn check(vs: &[Box<dyn Verifier>]) -> AnswerCheck<'_> {
    match vs {
        [one] => AnswerCheck::Single(one.as_ref()),
        [a, b] => AnswerCheck::Cross([a.as_ref(), b.as_ref()]),
        _ => unreachable!("verifier count checked on construction"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specs_parse() {
        assert_eq!(parse("scripted:collector").unwrap(), Spec::Collector);
        assert_eq!(parse("scripted:answers=a/b.jsonl").unwrap(), Spec::Answers("a/b.jsonl".into()));
        let Spec::Remote(cfg) = parse("remote:gpt-x@http://localhost:8000/v1/#MY_KEY").unwrap() else { panic!() };
        assert_eq!((cfg.model.as_str(), cfg.base_url.as_str(), cfg.api_key_env.as_str()), ("gpt-x", "http://localhost:8000/v1", "MY_KEY"));
        assert!(parse("remote:nohost").is_err());
        assert!(parse("magic").is_err());
    }
}
