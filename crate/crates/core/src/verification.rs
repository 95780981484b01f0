//! Answer judging: the verification prompt, verdict parsing, and the
//! two-verifier agreement rule.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{self, Execution};
use crate::policy::scripted::{first_user_text, Script};
use crate::policy::{AssistantTurn, ChatMessage, PolicyEndpoint, PolicyError, ToolDecl};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Judgement {
    Correct,
    Partial,
    Incorrect,
}

impl Judgement {
    pub fn as_str(self) -> &'static str {
        match self {
            Judgement::Correct => "correct",
            Judgement::Partial => "partial",
            Judgement::Incorrect => "incorrect",
        }
    }
}

impl fmt::Display for Judgement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Judgement {
    type Err = VerifyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "correct" => Ok(Judgement::Correct),
            "partial" => Ok(Judgement::Partial),
            "incorrect" => Ok(Judgement::Incorrect),
            _ => Err(VerifyError::UnknownJudgementWord(s.trim().to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub judgement: Judgement,
    pub explanation: String,
    pub verifier_id: String,
}

impl Verdict {
    pub fn is_correct(&self) -> bool {
        self.judgement == Judgement::Correct
    }
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("verification slot `{0}` is empty")]
    EmptySlot(&'static str),
    #[error("no JUDGEMENT line in verifier output")]
    MissingJudgement,
    #[error("unknown judgement word `{0}`")]
    UnknownJudgementWord(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

pub fn render_verification_prompt(query: &str, reference: &str, model_answer: &str) -> Result<String, VerifyError> {
    for (slot, value) in [("query", query), ("reference", reference), ("model_answer", model_answer)] {
        if value.trim().is_empty() {
            return Err(VerifyError::EmptySlot(slot));
        }
    }
    Ok(format!(
        "Evaluate the correctness of the model's answer.\n\
         \n\
         QUERY: {query}\n\
         REFERENCE ANSWER: {reference}\n\
         MODEL ANSWER: {model_answer}\n\
         \n\
         Evaluation criteria:\n\
         - Compare factual content, not surface format\n\
         - Ignore differences in phrasing or presentation\n\
         - Focus on whether the core factual claims are correct\n\
         \n\
         Output format:\n\
         JUDGEMENT: [correct/partial/incorrect]\n\
         EXPLANATION: [Brief justification]\n\
         \n\
         Use \"correct\" if all key facts match, \"partial\" if the core answer is right but some details are \
         wrong or missing, \"incorrect\" if the main answer is wrong."
    ))
}

fn verdict_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?im)^[ \t]*(?:\*\*)?(JUDGEMENT|EXPLANATION)(?:\*\*)?[ \t]*:(?:\*\*)?[ \t]*(.*)$").expect("valid regex")
    })
}

/// Extracts the JUDGEMENT word and EXPLANATION line; surrounding prose is
/// ignored. Brackets and trailing punctuation around the word are allowed.
pub fn parse_verdict(text: &str, verifier_id: &str) -> Result<Verdict, VerifyError> {
    let mut judgement = None;
    let mut explanation = None;
    for cap in verdict_regex().captures_iter(text) {
        let body = cap[2].trim();
        if cap[1].eq_ignore_ascii_case("JUDGEMENT") {
            judgement.get_or_insert_with(|| body.to_string());
        } else {
            explanation.get_or_insert_with(|| body.to_string());
        }
    }
    let word = judgement.ok_or(VerifyError::MissingJudgement)?;
    let word = word.trim_matches(|c: char| c == '[' || c == ']' || c == '*' || c == '.' || c.is_whitespace());
    Ok(Verdict {
        judgement: word.parse()?,
        explanation: explanation.unwrap_or_default(),
        verifier_id: verifier_id.to_string(),
    })
}

/// Trim, collapse internal whitespace, case-fold.
pub fn normalize_answer(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

pub trait Verifier: Send + Sync {
    fn id(&self) -> &str;
    fn judge(&self, query: &str, reference: &str, model_answer: &str) -> Result<Verdict, VerifyError>;
}

/// Normalized exact string match. Never returns Partial.
#[derive(Debug, Clone)]
pub struct ExactMatchVerifier {
    pub id: String,
}

impl ExactMatchVerifier {
    pub fn new(id: &str) -> Self {
        ExactMatchVerifier { id: id.to_string() }
    }
}

impl Default for ExactMatchVerifier {
    fn default() -> Self {
        ExactMatchVerifier::new("exact-match")
    }
}

impl Verifier for ExactMatchVerifier {
    fn id(&self) -> &str {
        &self.id
    }

    fn judge(&self, _query: &str, reference: &str, model_answer: &str) -> Result<Verdict, VerifyError> {
        let same = normalize_answer(reference) == normalize_answer(model_answer);
        Ok(Verdict {
            judgement: if same { Judgement::Correct } else { Judgement::Incorrect },
            explanation: if same { "answers match after normalization" } else { "answers differ" }.into(),
            verifier_id: self.id.clone(),
        })
    }
}

/// A judge model behind a policy endpoint.
#[derive(Debug)]
pub struct PolicyVerifier {
    pub endpoint: PolicyEndpoint,
}

impl PolicyVerifier {
    pub fn new(endpoint: PolicyEndpoint) -> Self {
        PolicyVerifier { endpoint }
    }
}

impl Verifier for PolicyVerifier {
    fn id(&self) -> &str {
        self.endpoint.name()
    }

    fn judge(&self, query: &str, reference: &str, model_answer: &str) -> Result<Verdict, VerifyError> {
        let prompt = render_verification_prompt(query, reference, model_answer)?;
        let turn = self.endpoint.complete(&[ChatMessage::user(&prompt)], &[], 0)?;
        parse_verdict(&turn.reasoning_text, self.id())
    }
}

/// Scripted judge that answers the verification prompt by normalized exact
/// match, in the verdict grammar.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactMatchJudge;

impl Script for ExactMatchJudge {
    fn respond(&self, messages: &[ChatMessage], _: &[ToolDecl], _: u64) -> Result<AssistantTurn, PolicyError> {
        let prompt = first_user_text(messages);
        let slot = |label: &str| {
            prompt
                .lines()
                .find_map(|l| l.strip_prefix(label))
                .map(str::trim)
                .unwrap_or_default()
                .to_string()
        };
        let (reference, answer) = (slot("REFERENCE ANSWER:"), slot("MODEL ANSWER:"));
        let word = if normalize_answer(&reference) == normalize_answer(&answer) { "correct" } else { "incorrect" };
        Ok(AssistantTurn::finish(&format!("JUDGEMENT: {word}\nEXPLANATION: exact comparison")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossVerdict {
    pub agreed: bool,
    /// Verdicts in verifier order; `None` where the call failed.
    pub verdicts: [Option<Verdict>; 2],
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

/// Accepts only when both verifiers return a parsed Correct verdict. A
/// failing verifier makes the result false and is reported in
/// `diagnostics`.
pub fn cross_verify(
    query: &str,
    reference: &str,
    model_answer: &str,
    verifiers: [&dyn Verifier; 2],
) -> CrossVerdict {
    cross_verify_with(Execution::Parallel, query, reference, model_answer, verifiers)
}

pub fn cross_verify_with(
    exec: Execution,
    query: &str,
    reference: &str,
    model_answer: &str,
    [v1, v2]: [&dyn Verifier; 2],
) -> CrossVerdict {
    let (r1, r2) = par::join(
        exec,
        || v1.judge(query, reference, model_answer),
        || v2.judge(query, reference, model_answer),
    );
    let mut diagnostics = Vec::new();
    let mut keep = |id: &str, r: Result<Verdict, VerifyError>| match r {
        Ok(v) => Some(v),
        Err(e) => {
            diagnostics.push(format!("{id}: {e}"));
            None
        }
    };
    let verdicts = [keep(v1.id(), r1), keep(v2.id(), r2)];
    let agreed = verdicts.iter().all(|v| v.as_ref().is_some_and(Verdict::is_correct));
    CrossVerdict { agreed, verdicts, diagnostics }
}
