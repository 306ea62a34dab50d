//! World configuration, loadable from TOML.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Action, WorldError};

/// Inputs, station and placement rules for one craft or place action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recipe {
    /// Inventory items consumed.
    pub uses: BTreeMap<String, u32>,
    /// Tiles that must be within `station_radius` of the agent.
    #[serde(default)]
    pub nearby: Vec<String>,
    /// Place actions: tiles the target may currently be.
    #[serde(default)]
    pub on: Vec<String>,
    /// Place actions: tile written to the target.
    #[serde(default)]
    pub tile: Option<String>,
    /// Craft actions: inventory item produced.
    #[serde(default)]
    pub gives: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub width: usize,
    pub height: usize,
    pub view_width: usize,
    pub view_height: usize,
    pub seed: u64,
    /// Episode step cap.
    pub max_steps: u64,
    /// Full day/night period in steps; the last third is night.
    pub day_length: u64,
    pub mountain_cells: usize,
    pub tunnel_cells: usize,
    pub pond_cells: usize,
    pub trees: usize,
    pub coal: usize,
    pub iron: usize,
    pub diamonds: usize,
    pub cows: usize,
    pub skeletons: usize,
    pub max_zombies_day: usize,
    pub max_zombies_night: usize,
    pub zombie_spawn_day: f64,
    pub zombie_spawn_night: f64,
    pub sapling_chance: f64,
    pub plant_ripen_steps: u64,
    pub station_radius: usize,
    pub recipes: BTreeMap<String, Recipe>,
}

fn recipe(uses: &[(&str, u32)], nearby: &[&str]) -> Recipe {
    Recipe {
        uses: uses.iter().map(|(k, n)| (k.to_string(), *n)).collect(),
        nearby: nearby.iter().map(|s| s.to_string()).collect(),
        on: Vec::new(),
        tile: None,
        gives: None,
    }
}

fn place(uses: &[(&str, u32)], nearby: &[&str], on: &[&str], tile: &str) -> Recipe {
    Recipe {
        on: on.iter().map(|s| s.to_string()).collect(),
        tile: Some(tile.into()),
        ..recipe(uses, nearby)
    }
}

fn craft(uses: &[(&str, u32)], nearby: &[&str], gives: &str) -> Recipe {
    Recipe {
        gives: Some(gives.into()),
        ..recipe(uses, nearby)
    }
}

pub fn default_recipes() -> BTreeMap<String, Recipe> {
    [
        (
            "place_stone",
            place(
                &[("stone", 1)],
                &[],
                &["grass", "sand", "path", "water"],
                "rock",
            ),
        ),
        (
            "place_table",
            place(&[("wood", 2)], &[], &["grass", "sand", "path"], "table"),
        ),
        (
            "place_furnace",
            place(
                &[("stone", 1)],
                &["table"],
                &["grass", "sand", "path"],
                "furnace",
            ),
        ),
        (
            "place_plant",
            place(&[("sapling", 1)], &[], &["grass"], "plant"),
        ),
        (
            "make_wood_pickaxe",
            craft(&[("wood", 1)], &["table"], "wood_pickaxe"),
        ),
        (
            "make_stone_pickaxe",
            craft(&[("wood", 1), ("stone", 1)], &["table"], "stone_pickaxe"),
        ),
        (
            "make_iron_pickaxe",
            craft(
                &[("wood", 1), ("coal", 1), ("iron", 1)],
                &["table", "furnace"],
                "iron_pickaxe",
            ),
        ),
        (
            "make_wood_sword",
            craft(&[("wood", 1)], &["table"], "wood_sword"),
        ),
        (
            "make_stone_sword",
            craft(&[("wood", 1), ("stone", 1)], &["table"], "stone_sword"),
        ),
        (
            "make_iron_sword",
            craft(
                &[("wood", 1), ("coal", 1), ("iron", 1)],
                &["table", "furnace"],
                "iron_sword",
            ),
        ),
    ]
    .into_iter()
    .map(|(k, r)| (k.to_string(), r))
    .collect()
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            width: 16,
            height: 16,
            view_width: 7,
            view_height: 5,
            seed: 0,
            max_steps: 1000,
            day_length: 300,
            mountain_cells: 52,
            tunnel_cells: 6,
            pond_cells: 8,
            trees: 12,
            coal: 4,
            iron: 2,
            diamonds: 1,
            cows: 3,
            skeletons: 1,
            max_zombies_day: 1,
            max_zombies_night: 3,
            zombie_spawn_day: 0.005,
            zombie_spawn_night: 0.05,
            sapling_chance: 0.1,
            plant_ripen_steps: 40,
            station_radius: 1,
            recipes: default_recipes(),
        }
    }
}

const TERRAIN: [&str; 12] = [
    "grass",
    "sand",
    "water",
    "tree",
    "rock",
    "coal_ore",
    "iron_ore",
    "diamond_ore",
    "path",
    "table",
    "furnace",
    "plant",
];

impl WorldConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, WorldError> {
        let cfg: Self = toml::from_str(text).map_err(|e| WorldError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, WorldError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| WorldError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            WorldError::Config(m) => WorldError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("world config serializes")
    }

    /// Cells that generation must fill with fixed content.
    pub fn required_cells(&self) -> usize {
        self.mountain_cells + self.pond_cells + self.trees + self.cows + 1
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let fail = |m: String| Err(WorldError::Config(m));
        if self.view_width.is_multiple_of(2) || self.view_height.is_multiple_of(2) {
            return fail(format!(
                "view {}x{} must have odd sides",
                self.view_width, self.view_height
            ));
        }
        if self.max_steps == 0 || self.day_length < 3 {
            return fail("max_steps must be >= 1 and day_length >= 3".into());
        }
        let area = self.width * self.height;
        if self.width < 8 || self.height < 8 || self.required_cells() * 2 > area {
            return fail(format!(
                "grid {}x{} cannot hold the required content ({} cells, at most half the grid)",
                self.width,
                self.height,
                self.required_cells()
            ));
        }
        let in_mountain = self.tunnel_cells + self.coal + self.iron + self.diamonds;
        if self.coal == 0
            || self.iron == 0
            || self.diamonds == 0
            || self.trees == 0
            || self.pond_cells == 0
        {
            return fail("every resource type needs at least one instance".into());
        }
        if self.skeletons > 0 && self.tunnel_cells == 0 {
            return fail("skeletons need tunnel cells".into());
        }
        if in_mountain + 4 > self.mountain_cells {
            return fail(format!(
                "mountain of {} cells cannot hold {in_mountain} ores and tunnels",
                self.mountain_cells
            ));
        }
        for p in [
            self.zombie_spawn_day,
            self.zombie_spawn_night,
            self.sapling_chance,
        ] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("probability {p} outside [0, 1]"));
            }
        }
        if self.station_radius == 0 {
            return fail("station_radius must be >= 1".into());
        }
        for action in Action::ALL {
            let name = action.name();
            let is_place = name.starts_with("place_");
            if !(is_place || name.starts_with("make_")) {
                continue;
            }
            let r = self
                .recipes
                .get(name)
                .ok_or_else(|| WorldError::Config(format!("missing recipe `{name}`")))?;
            let ok = if is_place {
                r.tile.as_deref().is_some_and(|t| TERRAIN.contains(&t))
                    && !r.on.is_empty()
                    && r.gives.is_none()
            } else {
                r.gives.is_some() && r.tile.is_none() && r.on.is_empty()
            };
            if !ok
                || r.nearby
                    .iter()
                    .chain(r.on.iter())
                    .any(|t| !TERRAIN.contains(&t.as_str()))
            {
                return fail(format!("recipe `{name}` is malformed"));
            }
        }
        if let Some(extra) = self.recipes.keys().find(|k| Action::from_name(k).is_none()) {
            return fail(format!("recipe `{extra}` does not match any action"));
        }
        Ok(())
    }
}
