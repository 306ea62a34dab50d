//! Canonical four-line textual observation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

const SEE: &str = "You see: ";
const INVENTORY: &str = "Inventory: ";
const VITALS: &str = "Vitals: ";
const STATUS: &str = "Status: ";
const NONE: &str = "none";

/// Visible entities, inventory, vitals and status flags.
///
/// Rendered as
/// ```text
/// You see: cow, tree, zombie, zombie
/// Inventory: sapling x1, wood x2
/// Vitals: health 9, food 8, drink 7, energy 9
/// Status: none
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextObservation {
    /// One entry per visible instance; repeats are meaningful.
    pub visible: Vec<String>,
    pub inventory: Vec<(String, u32)>,
    pub vitals: Vec<(String, u32)>,
    pub status: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("observation line {line}: {message}")]
pub struct ObservationParseError {
    pub line: usize,
    pub message: String,
}

fn join_or_none(items: impl Iterator<Item = String>) -> String {
    let items: Vec<String> = items.collect();
    if items.is_empty() {
        NONE.to_string()
    } else {
        items.join(", ")
    }
}

impl fmt::Display for TextObservation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{SEE}{}", join_or_none(self.visible.iter().cloned()))?;
        writeln!(
            f,
            "{INVENTORY}{}",
            join_or_none(self.inventory.iter().map(|(k, n)| format!("{k} x{n}")))
        )?;
        writeln!(
            f,
            "{VITALS}{}",
            join_or_none(self.vitals.iter().map(|(k, n)| format!("{k} {n}")))
        )?;
        write!(f, "{STATUS}{}", join_or_none(self.status.iter().cloned()))
    }
}

fn items(body: &str) -> Vec<&str> {
    if body.trim() == NONE {
        Vec::new()
    } else {
        body.split(',').map(str::trim).collect()
    }
}

fn check_name(name: &str, line: usize) -> Result<String, ObservationParseError> {
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(ObservationParseError {
            line,
            message: format!("invalid name `{name}`"),
        });
    }
    Ok(name.to_string())
}

fn counted(
    body: &str,
    line: usize,
    split: impl Fn(&str) -> Option<(&str, &str)>,
) -> Result<Vec<(String, u32)>, ObservationParseError> {
    items(body)
        .into_iter()
        .map(|item| {
            let (name, value) = split(item).ok_or_else(|| ObservationParseError {
                line,
                message: format!("malformed entry `{item}`"),
            })?;
            let value = value.parse::<u32>().map_err(|_| ObservationParseError {
                line,
                message: format!("bad count in `{item}`"),
            })?;
            Ok((check_name(name, line)?, value))
        })
        .collect()
}

impl FromStr for TextObservation {
    type Err = ObservationParseError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let lines: Vec<&str> = text.trim_end_matches('\n').split('\n').collect();
        if lines.len() != 4 {
            return Err(ObservationParseError {
                line: lines.len().min(4),
                message: format!("expected 4 lines, found {}", lines.len()),
            });
        }
        let body = |i: usize, prefix: &str| {
            lines[i]
                .strip_prefix(prefix)
                .ok_or_else(|| ObservationParseError {
                    line: i + 1,
                    message: format!("expected line starting with `{prefix}`"),
                })
        };
        let visible = items(body(0, SEE)?)
            .into_iter()
            .map(|s| check_name(s, 1))
            .collect::<Result<_, _>>()?;
        let inventory = counted(body(1, INVENTORY)?, 2, |s| s.rsplit_once(" x"))?;
        let vitals = counted(body(2, VITALS)?, 3, |s| s.rsplit_once(' '))?;
        let status = items(body(3, STATUS)?)
            .into_iter()
            .map(|s| check_name(s, 4))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            visible,
            inventory,
            vitals,
            status,
        })
    }
}

impl TextObservation {
    pub fn inventory_count(&self, item: &str) -> u32 {
        self.inventory
            .iter()
            .filter(|(k, _)| k == item)
            .map(|(_, n)| *n)
            .sum()
    }

    pub fn vital(&self, stat: &str) -> Option<u32> {
        self.vitals.iter().find(|(k, _)| k == stat).map(|(_, v)| *v)
    }

    pub fn sees(&self, entity: &str) -> bool {
        self.visible.iter().any(|v| v == entity)
    }

    pub fn has_status(&self, flag: &str) -> bool {
        self.status.iter().any(|s| s == flag)
    }
}
