//! Labeled-field output grammar (`LABEL: body` blocks).
//!
//! A label is recognized only at the start of a line, optionally indented
//! and optionally wrapped in `**`. A field's body runs until the next
//! recognized label or the end of the text. Prose before the first label is
//! ignored; when a label repeats, its first occurrence wins.

use regex::Regex;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("missing or empty field `{0}`")]
pub struct MissingField(pub String);

fn label_regex(labels: &[&str]) -> Regex {
    let alts: Vec<String> = labels.iter().map(|l| regex::escape(l)).collect();
    Regex::new(&format!(
        r"(?m)^[ \t]*(?:\*\*)?({})(?:\*\*)?[ \t]*:(?:\*\*)?",
        alts.join("|")
    ))
    .expect("label regex")
}

/// Extracts the body of every label in `labels`, in the order given.
pub fn parse_fields(text: &str, labels: &[&str]) -> Result<Vec<String>, MissingField> {
    let re = label_regex(labels);
    let hits: Vec<(usize, usize, &str)> = re
        .captures_iter(text)
        .map(|c| {
            let whole = c.get(0).expect("match");
            (whole.start(), whole.end(), c.get(1).expect("label").as_str())
        })
        .collect();
    labels
        .iter()
        .map(|label| {
            let pos = hits.iter().position(|(_, _, l)| l == label);
            let body = pos.map(|i| {
                let end = hits.get(i + 1).map_or(text.len(), |h| h.0);
                text[hits[i].1..end].trim()
            });
            match body {
                Some(b) if !b.is_empty() => Ok(b.to_string()),
                _ => Err(MissingField(label.to_string())),
            }
        })
        .collect()
}

/// Renders `LABEL: body` lines.
pub fn render_fields(fields: &[(&str, &str)]) -> String {
    fields
        .iter()
        .map(|(l, b)| format!("{l}: {b}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// True if `body` would survive a render/parse round trip among `labels`:
/// non-empty, already trimmed, and no line of it opens with a label.
pub fn is_representable(body: &str, labels: &[&str]) -> bool {
    !body.is_empty() && body.trim() == body && !label_regex(labels).is_match(body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const L: [&str; 3] = ["QUERY", "ANSWER", "REASONING"];

    #[test]
    fn tolerates_prose_and_bold_labels() {
        let t = "Sure, here it is.\n**QUERY:** what?\nmore\n  ANSWER: 42\nREASONING:\n because";
        assert_eq!(parse_fields(t, &L).unwrap(), vec!["what?\nmore", "42", "because"]);
    }

    #[test]
    fn label_must_open_a_line() {
        let t = "QUERY: see ANSWER: inline\nANSWER: real\nREASONING: r";
        assert_eq!(parse_fields(t, &L).unwrap()[0], "see ANSWER: inline");
    }

    #[test]
    fn empty_body_is_missing() {
        assert_eq!(parse_fields("QUERY: q\nANSWER:\nREASONING: r", &L).unwrap_err(), MissingField("ANSWER".into()));
    }

    proptest! {
        #[test]
        fn render_then_parse_is_identity(
            a in "[^\\r]{1,60}", b in "[^\\r]{1,60}", c in "[^\\r]{1,60}"
        ) {
            prop_assume!([&a, &b, &c].iter().all(|v| is_representable(v, &L)));
            let text = render_fields(&[("QUERY", &a), ("ANSWER", &b), ("REASONING", &c)]);
            prop_assert_eq!(parse_fields(&text, &L).unwrap(), vec![a, b, c]);
        }
    }
}
