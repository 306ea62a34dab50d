//! Deterministic, seeded crafting gridworld with 22 achievements.

mod config;
mod world;

use serde::{Deserialize, Serialize};

pub use config::{default_recipes, Recipe, WorldConfig};
pub use world::{Creature, CreatureKind, Dir, Pos, StepInfo, StepResult, Tile, Vitals, World};

/// Achievement names, identical to the bundled graph's subgoal ids.
pub const ACHIEVEMENTS: [&str; 22] = [
    "collect_coal",
    "collect_diamond",
    "collect_iron",
    "collect_sapling",
    "collect_stone",
    "collect_water",
    "collect_wood",
    "defeat_skeleton",
    "defeat_zombie",
    "eat_cow",
    "eat_plant",
    "make_iron_pickaxe",
    "make_iron_sword",
    "make_stone_pickaxe",
    "make_stone_sword",
    "make_wood_pickaxe",
    "make_wood_sword",
    "place_furnace",
    "place_plant",
    "place_stone",
    "place_table",
    "sleep",
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorldError {
    #[error("invalid world config: {0}")]
    Config(String),
    #[error("could not generate a connected world in {0} attempts")]
    Generation(u32),
    #[error("episode is over; call reset")]
    StepAfterDone,
    #[error("unknown action `{0}`")]
    UnknownAction(String),
}

/// The 17 primitive actions, in fixed ordinal order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Noop,
    MoveLeft,
    MoveRight,
    MoveUp,
    MoveDown,
    Do,
    Sleep,
    PlaceStone,
    PlaceTable,
    PlaceFurnace,
    PlacePlant,
    MakeWoodPickaxe,
    MakeStonePickaxe,
    MakeIronPickaxe,
    MakeWoodSword,
    MakeStoneSword,
    MakeIronSword,
}

impl Action {
    pub const ALL: [Action; 17] = [
        Action::Noop,
        Action::MoveLeft,
        Action::MoveRight,
        Action::MoveUp,
        Action::MoveDown,
        Action::Do,
        Action::Sleep,
        Action::PlaceStone,
        Action::PlaceTable,
        Action::PlaceFurnace,
        Action::PlacePlant,
        Action::MakeWoodPickaxe,
        Action::MakeStonePickaxe,
        Action::MakeIronPickaxe,
        Action::MakeWoodSword,
        Action::MakeStoneSword,
        Action::MakeIronSword,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Noop => "noop",
            Action::MoveLeft => "move_left",
            Action::MoveRight => "move_right",
            Action::MoveUp => "move_up",
            Action::MoveDown => "move_down",
            Action::Do => "do",
            Action::Sleep => "sleep",
            Action::PlaceStone => "place_stone",
            Action::PlaceTable => "place_table",
            Action::PlaceFurnace => "place_furnace",
            Action::PlacePlant => "place_plant",
            Action::MakeWoodPickaxe => "make_wood_pickaxe",
            Action::MakeStonePickaxe => "make_stone_pickaxe",
            Action::MakeIronPickaxe => "make_iron_pickaxe",
            Action::MakeWoodSword => "make_wood_sword",
            Action::MakeStoneSword => "make_stone_sword",
            Action::MakeIronSword => "make_iron_sword",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }

    pub fn direction(self) -> Option<Dir> {
        match self {
            Action::MoveLeft => Some(Dir::West),
            Action::MoveRight => Some(Dir::East),
            Action::MoveUp => Some(Dir::North),
            Action::MoveDown => Some(Dir::South),
            _ => None,
        }
    }

    pub fn toward(dir: Dir) -> Self {
        match dir {
            Dir::West => Action::MoveLeft,
            Dir::East => Action::MoveRight,
            Dir::North => Action::MoveUp,
            Dir::South => Action::MoveDown,
        }
    }
}

impl std::str::FromStr for Action {
    type Err = WorldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_name(s).ok_or_else(|| WorldError::UnknownAction(s.to_string()))
    }
}
