//! Assessment prompts and `<CONCLUSION>` parsing.

use serde::{Deserialize, Serialize};

use super::{MembershipQuery, MergeQuery, OracleDecision, OracleError};
use crate::graph::NodeId;

/// Tag instructions substituted for `{conclusion}`.
pub const CONCLUSION_INSTRUCTION: &str =
    "<CONCLUSION> YES </CONCLUSION> or <CONCLUSION> NO </CONCLUSION>";

const ASPECT: &str = "{aspect}";
const CONCLUSION: &str = "{conclusion}";

/// Instruction text with `{aspect}` and `{conclusion}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PromptTemplate(String);

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Result<Self, OracleError> {
        let text = text.into();
        for placeholder in [ASPECT, CONCLUSION] {
            if !text.contains(placeholder) {
                return Err(OracleError::Config(format!(
                    "prompt template lacks the {placeholder} placeholder"
                )));
            }
        }
        Ok(PromptTemplate(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn render(&self, aspect: &str) -> Result<String, OracleError> {
        let aspect = aspect.trim();
        if aspect.is_empty() {
            return Err(OracleError::InvalidQuery("aspect must not be empty".into()));
        }
        Ok(self
            .0
            .replace(ASPECT, aspect)
            .replace(CONCLUSION, CONCLUSION_INSTRUCTION))
    }
}

impl TryFrom<String> for PromptTemplate {
    type Error = OracleError;

    fn try_from(s: String) -> Result<Self, OracleError> {
        PromptTemplate::new(s)
    }
}

impl From<PromptTemplate> for String {
    fn from(t: PromptTemplate) -> String {
        t.0
    }
}

/// Membership and merge templates for one kind of item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSet {
    pub membership: PromptTemplate,
    pub merge: PromptTemplate,
}

impl TemplateSet {
    /// Templates in the standard instruction pattern.
    ///
    /// `subject` names the items ("fruit", "playing card"). With
    /// `similarity` the criterion reads "based on {aspect} similarity".
    /// `ignore` adds "Ignore the {ignore} and focus only on {aspect}
    /// comparison."
    pub fn for_subject(subject: &str, similarity: bool, ignore: Option<&str>) -> Self {
        let criterion = if similarity {
            format!("based on {ASPECT} similarity.")
        } else {
            format!("based on {ASPECT}.")
        };
        let focus = ignore
            .map(|what| format!(" Ignore the {what} and focus only on {ASPECT} comparison."))
            .unwrap_or_default();
        let tail = format!("{focus} Respond with {CONCLUSION}.");
        TemplateSet {
            membership: PromptTemplate(format!(
                "Determine whether the candidate {subject} should be included in the existing \
                 {subject} cluster {criterion}{tail}"
            )),
            merge: PromptTemplate(format!(
                "Determine whether the two {subject} clusters should be merged {criterion}{tail}"
            )),
        }
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet::for_subject("item", false, None)
    }
}

/// Rendered instruction plus the node ids whose images accompany it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Prompt {
    pub text: String,
    pub attachments: Vec<NodeId>,
}

/// Representatives first, candidate last.
pub fn build_membership_prompt(
    query: &MembershipQuery<'_>,
    template: &PromptTemplate,
) -> Result<Prompt, OracleError> {
    let text = template.render(query.aspect)?;
    let mut attachments = query.representatives.to_vec();
    attachments.push(query.candidate.clone());
    Ok(Prompt { text, attachments })
}

/// First cluster's representatives, then the second's.
pub fn build_merge_prompt(
    query: &MergeQuery<'_>,
    template: &PromptTemplate,
) -> Result<Prompt, OracleError> {
    let text = template.render(query.aspect)?;
    let attachments = query
        .representatives_a
        .iter()
        .chain(query.representatives_b)
        .cloned()
        .collect();
    Ok(Prompt { text, attachments })
}

/// Decision carried by the first `<CONCLUSION>...</CONCLUSION>` span.
///
/// "yes" is checked before "no", case-insensitively, by substring. A missing
/// span or a span containing neither gives `Unknown`.
pub fn parse_conclusion(response: &str) -> OracleDecision {
    const OPEN: &str = "<CONCLUSION>";
    const CLOSE: &str = "</CONCLUSION>";
    let Some(start) = response.find(OPEN) else {
        return OracleDecision::Unknown;
    };
    let body = &response[start + OPEN.len()..];
    let Some(end) = body.find(CLOSE) else {
        return OracleDecision::Unknown;
    };
    let conclusion = body[..end].trim().to_lowercase();
    if conclusion.contains("yes") {
        OracleDecision::Yes
    } else if conclusion.contains("no") {
        OracleDecision::No
    } else {
        OracleDecision::Unknown
    }
}
