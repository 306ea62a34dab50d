//! `{placeholder}` substitution with strict checking.
//!
//! Placeholder names may contain letters, digits, underscores and inner
//! spaces; surrounding whitespace inside the braces is ignored, so
//! `{unachieved }` resolves as `unachieved`. Substituted values are never
//! rescanned.

use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("unknown placeholder `{{{0}}}`")]
    UnknownPlaceholder(String),
    #[error("no value supplied for placeholder `{{{0}}}`")]
    MissingValue(String),
    #[error("unterminated placeholder starting at byte {0}")]
    Unterminated(usize),
}

fn is_placeholder_name(name: &str) -> bool {
    let name = name.trim();
    !name.is_empty()
        && name
            .chars()
            .next()
            .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == ' ')
}

/// Names of every placeholder in `template`, in order of appearance.
pub fn placeholders(template: &str) -> Result<Vec<String>, TemplateError> {
    let mut out = Vec::new();
    scan(template, |name| {
        out.push(name.to_string());
        Ok(String::new())
    })?;
    Ok(out)
}

/// Substitutes every placeholder. Names outside `known` are rejected, as are
/// known names without a value in `values`.
pub fn render(
    template: &str,
    known: &[&str],
    values: &BTreeMap<&str, String>,
) -> Result<String, TemplateError> {
    scan(template, |name| {
        if !known.contains(&name) {
            return Err(TemplateError::UnknownPlaceholder(name.to_string()));
        }
        values
            .get(name)
            .cloned()
            .ok_or_else(|| TemplateError::MissingValue(name.to_string()))
    })
}

fn scan(
    template: &str,
    mut resolve: impl FnMut(&str) -> Result<String, TemplateError>,
) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    let mut offset = 0;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or(TemplateError::Unterminated(offset + open))?;
        let inner = &after[..close];
        if is_placeholder_name(inner) {
            out.push_str(&resolve(inner.trim())?);
        } else {
            out.push('{');
            out.push_str(inner);
            out.push('}');
        }
        let consumed = open + 1 + close + 1;
        offset += consumed;
        rest = &rest[consumed..];
    }
    out.push_str(rest);
    Ok(out)
}
