//! Scripted backend: rules keyed by role and optional fingerprint/substring.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatRequest, LlmError, Role};

/// A rule answers matching requests with `responses` in order; the last
/// response repeats once the list is used up.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    pub responses: Vec<String>,
}

impl MockRule {
    pub fn for_role(role: Role, responses: Vec<String>) -> Self {
        Self {
            role,
            fingerprint: None,
            contains: None,
            responses,
        }
    }

    pub fn keyed(role: Role, fingerprint: impl Into<String>, responses: Vec<String>) -> Self {
        Self {
            role,
            fingerprint: Some(fingerprint.into()),
            contains: None,
            responses,
        }
    }

    fn matches(&self, req: &ChatRequest, fp: &str) -> bool {
        self.role == req.role
            && self.fingerprint.as_deref().is_none_or(|f| f == fp)
            && self
                .contains
                .as_deref()
                .is_none_or(|c| req.user_prompt.contains(c))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    pub rules: Vec<MockRule>,
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    rules: Vec<MockRule>,
    cursors: Vec<usize>,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Result<Self, LlmError> {
        if let Some(rule) = script.rules.iter().find(|r| r.responses.is_empty()) {
            return Err(LlmError::Config(format!(
                "mock rule for {} has no responses",
                rule.role
            )));
        }
        let cursors = vec![0; script.rules.len()];
        Ok(Self {
            rules: script.rules,
            cursors,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::File {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let script: MockScript = serde_json::from_str(&text).map_err(|e| LlmError::File {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::new(script)
    }
}

impl ChatBackend for MockBackend {
    fn complete(&mut self, req: &ChatRequest) -> Result<String, LlmError> {
        let fp = req.fingerprint();
        let idx =
            self.rules
                .iter()
                .position(|r| r.matches(req, &fp))
                .ok_or(LlmError::MockMiss {
                    role: req.role,
                    fingerprint: fp,
                })?;
        let rule = &self.rules[idx];
        let cursor = self.cursors[idx];
        self.cursors[idx] += 1;
        Ok(rule.responses[cursor.min(rule.responses.len() - 1)].clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyed_rule_wins_over_later_catch_all() {
        let req = ChatRequest::new(Role::Actor, "sys", "hello").unwrap();
        let script = MockScript {
            rules: vec![
                MockRule::keyed(Role::Actor, req.fingerprint(), vec!["keyed".into()]),
                MockRule::for_role(Role::Actor, vec!["fallback".into()]),
            ],
        };
        let mut mock = MockBackend::new(script).unwrap();
        assert_eq!(mock.complete(&req).unwrap(), "keyed");
        assert_eq!(mock.complete(&req).unwrap(), "keyed");
        let other = ChatRequest::new(Role::Actor, "sys", "bye").unwrap();
        assert_eq!(mock.complete(&other).unwrap(), "fallback");
    }

    #[test]
    fn responses_advance_then_repeat_last() {
        let script = MockScript {
            rules: vec![MockRule::for_role(
                Role::Critic,
                vec!["a".into(), "b".into()],
            )],
        };
        let mut mock = MockBackend::new(script).unwrap();
        let req = ChatRequest::new(Role::Critic, "s", "u").unwrap();
        let got: Vec<String> = (0..4).map(|_| mock.complete(&req).unwrap()).collect();
        assert_eq!(got, ["a", "b", "b", "b"]);
    }

    #[test]
    fn contains_filter_and_miss() {
        let script = MockScript {
            rules: vec![MockRule {
                role: Role::Actor,
                fingerprint: None,
                contains: Some("tree".into()),
                responses: vec!["wood".into()],
            }],
        };
        let mut mock = MockBackend::new(script).unwrap();
        assert!(mock
            .complete(&ChatRequest::new(Role::Actor, "s", "a tree").unwrap())
            .is_ok());
        assert!(matches!(
            mock.complete(&ChatRequest::new(Role::Actor, "s", "a rock").unwrap()),
            Err(LlmError::MockMiss { .. })
        ));
    }

    #[test]
    fn empty_response_list_is_rejected() {
        let script = MockScript {
            rules: vec![MockRule::for_role(Role::Actor, vec![])],
        };
        assert!(MockBackend::new(script).is_err());
    }
}
