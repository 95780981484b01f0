//! Prompt templates for evidence collection, task derivation, and the
//! matching output grammars.

use super::grammar::{parse_fields, render_fields, MissingField};
use super::{DerivedTask, EvidenceSet};
use crate::domain::Domain;
use crate::pools::Exemplar;

/// Per-item payload cap inside an evidence digest.
pub const DIGEST_PAYLOAD_CAP: usize = 2 * 1024;

pub const ROUND_ONE_LABELS: [&str; 3] = ["QUERY", "ANSWER", "REASONING"];
pub const EVOLVED_LABELS: [&str; 3] = ["EVOLVED_QUERY", "EVOLVED_ANSWER", "REASONING"];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("round numbers start at 1")]
    InvalidRound,
    #[error("round {0} needs a non-empty evidence digest")]
    MissingDigest(usize),
}

pub fn labels_for_round(round: usize) -> [&'static str; 3] {
    if round <= 1 {
        ROUND_ONE_LABELS
    } else {
        EVOLVED_LABELS
    }
}

/// Renders accumulated evidence oldest-first as `tool(args) → payload`
/// lines. Repeated (call, payload) pairs appear once.
pub fn evidence_digest(evidence: &EvidenceSet) -> String {
    let mut seen = std::collections::HashSet::new();
    let mut lines = Vec::new();
    for item in evidence.items() {
        let call = item.action.render();
        let payload = cap(&item.observation.payload, DIGEST_PAYLOAD_CAP).replace(['\n', '\r'], " ");
        if seen.insert((call.clone(), payload.clone())) {
            lines.push(format!("{call} → {payload}"));
        }
    }
    lines.join("\n")
}

fn cap(s: &str, max: usize) -> String {
    if s.len() <= max {
        return s.to_string();
    }
    let mut cut = max;
    while !s.is_char_boundary(cut) {
        cut -= 1;
    }
    format!("{}…", &s[..cut])
}

/// Collector prompt. Round 1 researches the seed; later rounds continue on
/// the current query with the previous findings in view.
pub fn render_collection_prompt(
    round: usize,
    subject: &str,
    domain: Domain,
    digest: Option<&str>,
    max_steps: usize,
) -> Result<String, PromptError> {
    match round {
        0 => Err(PromptError::InvalidRound),
        1 => Ok(format!(
            "Research \"{subject}\" in {domain} domain. Use multiple tools to retrieve and process \
comprehensive and verifiable information from various sources.\n\
Step budget: {max_steps}\n\n\
Note: Investigate the topic from multiple angles and explore its connections to related entities or concepts.\n\n\
Strategy: If direct search has limited results, try related concepts, broader categories, or alternative terms. \
Consider how the different aspects of the topic relate to each other."
        )),
        k => {
            let digest = digest
                .filter(|d| !d.trim().is_empty())
                .ok_or(PromptError::MissingDigest(k))?;
            Ok(format!(
                "Continue research on \"{subject}\" in {domain} domain.\n\
Step budget: {max_steps}\n\n\
Previous findings:\n{digest}\n\n\
Based on previous findings, expand the research to broader or deeper aspects. Use diverse tools to retrieve \
and process new information. Avoid repeating previous findings."
            ))
        }
    }
}

fn exemplar_block(exemplars: &[Exemplar]) -> String {
    exemplars
        .iter()
        .enumerate()
        .map(|(i, e)| format!("{}. {}", i + 1, e.query_text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Generator prompt for round `round`, ending with the output grammar the
/// reply must follow.
pub fn render_derivation_prompt(
    round: usize,
    exemplars: &[Exemplar],
    subject: &str,
    digest: &str,
) -> Result<String, PromptError> {
    let exemplars = exemplar_block(exemplars);
    match round {
        0 => Err(PromptError::InvalidRound),
        1 => Ok(format!(
            "Exemplars:\n{exemplars}\n\n\
Seed: {subject}\n\
Evidence collected: {digest}\n\n\
Derive a specific and realistic query using the collected data. Base the answer on actual tool results only.\n\n\
QUERY: [specific query grounded in evidence]\n\
ANSWER: [concise factual answer from tool results only -- no explanations, no reasoning, just the key values/facts]\n\
REASONING: [how the evidence supports this query-answer pair]"
        )),
        _ => Ok(format!(
            "Exemplars:\n{exemplars}\n\n\
Current: {subject}\n\
Evidence collected: {digest}\n\n\
Refine the question to be more challenging, specific and realistic using the diverse collected data. \
Base answer on actual tool results only.\n\n\
EVOLVED_QUERY: [more complex question using collected data]\n\
EVOLVED_ANSWER: [brief, factual answer from tool results -- be concise, specific to the question]\n\
REASONING: [what complexity was added]"
        )),
    }
}

/// Parses a generator reply using the labels appropriate to `round`.
pub fn parse_derivation_output(text: &str, round: usize) -> Result<DerivedTask, MissingField> {
    let mut fields = parse_fields(text, &labels_for_round(round))?.into_iter();
    let mut next = || fields.next().expect("three labels parsed");
    Ok(DerivedTask {
        round,
        query: next(),
        answer: next(),
        reasoning: next(),
    })
}

/// Inverse of [`parse_derivation_output`] for well-formed field values.
pub fn render_derivation_output(task: &DerivedTask) -> String {
    let [q, a, r] = labels_for_round(task.round);
    render_fields(&[(q, &task.query), (a, &task.answer), (r, &task.reasoning)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::EvidenceItem;
    use crate::tools::{Observation, ObservationStatus, ToolCall};
    use serde_json::json;

    #[test]
    fn round_one_collection_prompt_fills_slots() {
        let p = render_collection_prompt(1, "Erlotinib", Domain::Medical, None, 6).unwrap();
        assert!(p.contains("Research \"Erlotinib\" in Medical domain"));
        assert!(p.contains("Step budget: 6"));
        assert!(p.contains("Strategy:"));
    }

    #[test]
    fn later_collection_prompt_embeds_digest() {
        let d = "search({\"q\":\"x\"}) → 42";
        let p = render_collection_prompt(2, "Which x?", Domain::Academic, Some(d), 6).unwrap();
        assert!(p.contains("Continue research"));
        assert!(p.contains(&format!("Previous findings:\n{d}")));
        assert!(p.contains("Avoid repeating previous findings."));
    }

    #[test]
    fn later_round_without_digest_fails() {
        assert_eq!(
            render_collection_prompt(2, "q", Domain::Academic, Some("  "), 6).unwrap_err(),
            PromptError::MissingDigest(2)
        );
        assert_eq!(render_collection_prompt(2, "q", Domain::Academic, None, 6).unwrap_err(), PromptError::MissingDigest(2));
        assert_eq!(render_collection_prompt(0, "q", Domain::Academic, None, 6).unwrap_err(), PromptError::InvalidRound);
    }

    #[test]
    fn derivation_prompts_demand_round_grammar() {
        let ex = vec![Exemplar { query_text: "Which gene?".into(), source_benchmark: "b".into() }];
        let p1 = render_derivation_prompt(1, &ex, "seed", "d").unwrap();
        assert!(p1.contains("QUERY:"));
        assert!(p1.contains("Base the answer on actual tool results only."));
        assert!(p1.contains("1. Which gene?"));
        let p3 = render_derivation_prompt(3, &ex, "q", "d").unwrap();
        assert!(p3.contains("EVOLVED_QUERY:"));
        let empty = render_derivation_prompt(1, &[], "seed", "d").unwrap();
        assert!(empty.starts_with("Exemplars:\n\n"));
    }

    #[test]
    fn parses_round_grammars() {
        let t = parse_derivation_output("QUERY: q\nANSWER: a\nREASONING: r", 1).unwrap();
        assert_eq!((t.query.as_str(), t.answer.as_str(), t.reasoning.as_str()), ("q", "a", "r"));
        let t = parse_derivation_output("EVOLVED_QUERY: q\nEVOLVED_ANSWER: a\nREASONING: r", 2).unwrap();
        assert_eq!((t.query.as_str(), t.answer.as_str(), t.round), ("q", "a", 2));
        assert_eq!(
            parse_derivation_output("QUERY: q\nREASONING: r", 1).unwrap_err(),
            MissingField("ANSWER".into())
        );
    }

    #[test]
    fn digest_dedups_and_caps() {
        let mut e = EvidenceSet::default();
        let item = |id: &str, payload: String| EvidenceItem {
            action: ToolCall::new(id, "lookup", json!({"q": "x"})),
            observation: Observation { call_id: id.into(), status: ObservationStatus::Ok, payload, latency: Default::default() },
            round: 1,
            step: 1,
        };
        e.push(item("a", "same".into()));
        e.push(item("b", "same".into()));
        e.push(item("c", "y".repeat(5000)));
        let d = evidence_digest(&e);
        assert_eq!(d.lines().count(), 2);
        assert!(d.starts_with("lookup({\"q\":\"x\"}) → same"));
        assert!(d.lines().nth(1).unwrap().len() < 2100);
    }
}
