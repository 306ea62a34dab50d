//! World state, generation and step mechanics.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::WorldConfig;
use super::{Action, WorldError, ACHIEVEMENTS};
use crate::tracker::TextObservation;

const MAX_ITEM: u32 = 9;
const MAX_VITAL: u32 = 9;
/// Minimum number of cells the agent can walk to at the start.
const MIN_OPEN_AREA: usize = 24;
const GENERATION_ATTEMPTS: u32 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tile {
    Grass,
    Sand,
    Water,
    Tree,
    Rock,
    CoalOre,
    IronOre,
    DiamondOre,
    Path,
    Table,
    Furnace,
    Plant { age: u64 },
}

impl Tile {
    pub fn name(self) -> &'static str {
        match self {
            Tile::Grass => "grass",
            Tile::Sand => "sand",
            Tile::Water => "water",
            Tile::Tree => "tree",
            Tile::Rock => "rock",
            Tile::CoalOre => "coal_ore",
            Tile::IronOre => "iron_ore",
            Tile::DiamondOre => "diamond_ore",
            Tile::Path => "path",
            Tile::Table => "table",
            Tile::Furnace => "furnace",
            Tile::Plant { .. } => "plant",
        }
    }

    pub fn from_name(name: &str) -> Option<Tile> {
        Some(match name {
            "grass" => Tile::Grass,
            "sand" => Tile::Sand,
            "water" => Tile::Water,
            "tree" => Tile::Tree,
            "rock" => Tile::Rock,
            "coal_ore" => Tile::CoalOre,
            "iron_ore" => Tile::IronOre,
            "diamond_ore" => Tile::DiamondOre,
            "path" => Tile::Path,
            "table" => Tile::Table,
            "furnace" => Tile::Furnace,
            "plant" => Tile::Plant { age: 0 },
            _ => return None,
        })
    }

    pub fn walkable(self) -> bool {
        matches!(self, Tile::Grass | Tile::Sand | Tile::Path)
    }

    /// Tool required to mine this tile, and the item it yields.
    pub fn mining(self) -> Option<(Option<&'static str>, &'static str)> {
        match self {
            Tile::Tree => Some((None, "wood")),
            Tile::Rock => Some((Some("wood_pickaxe"), "stone")),
            Tile::CoalOre => Some((Some("wood_pickaxe"), "coal")),
            Tile::IronOre => Some((Some("stone_pickaxe"), "iron")),
            Tile::DiamondOre => Some((Some("iron_pickaxe"), "diamond")),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pos {
    pub x: usize,
    pub y: usize,
}

impl Pos {
    pub fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    pub fn manhattan(self, o: Pos) -> usize {
        self.x.abs_diff(o.x) + self.y.abs_diff(o.y)
    }

    pub fn chebyshev(self, o: Pos) -> usize {
        self.x.abs_diff(o.x).max(self.y.abs_diff(o.y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dir {
    North,
    East,
    South,
    West,
}

impl Dir {
    pub const ALL: [Dir; 4] = [Dir::North, Dir::East, Dir::South, Dir::West];

    pub fn delta(self) -> (i64, i64) {
        match self {
            Dir::North => (0, -1),
            Dir::East => (1, 0),
            Dir::South => (0, 1),
            Dir::West => (-1, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CreatureKind {
    Cow,
    Zombie,
    Skeleton,
}

impl CreatureKind {
    pub fn name(self) -> &'static str {
        match self {
            CreatureKind::Cow => "cow",
            CreatureKind::Zombie => "zombie",
            CreatureKind::Skeleton => "skeleton",
        }
    }

    fn max_health(self) -> i32 {
        match self {
            CreatureKind::Cow => 3,
            CreatureKind::Zombie => 5,
            CreatureKind::Skeleton => 3,
        }
    }

    fn can_stand(self, tile: Tile) -> bool {
        match self {
            CreatureKind::Cow => matches!(tile, Tile::Grass | Tile::Sand),
            CreatureKind::Zombie => matches!(tile, Tile::Grass | Tile::Sand | Tile::Path),
            CreatureKind::Skeleton => tile == Tile::Path,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Creature {
    pub kind: CreatureKind,
    pub pos: Pos,
    pub health: i32,
    pub cooldown: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vitals {
    pub health: u32,
    pub food: u32,
    pub drink: u32,
    pub energy: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counters {
    hunger: u32,
    thirst: u32,
    fatigue: u32,
    rest: u32,
    recover: i32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StepInfo {
    pub new_achievements: Vec<String>,
    pub health_delta: i64,
    /// The action as executed (sleeping overrides actions with noop).
    pub executed: Option<Action>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepResult {
    pub obs: TextObservation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    config: WorldConfig,
    rng: ChaCha8Rng,
    width: usize,
    height: usize,
    tiles: Vec<Tile>,
    agent: Pos,
    facing: Dir,
    inventory: BTreeMap<String, u32>,
    vitals: Vitals,
    counters: Counters,
    sleeping: bool,
    creatures: Vec<Creature>,
    step: u64,
    done: bool,
    achievements: BTreeMap<String, bool>,
}

fn grow_blob(
    rng: &mut ChaCha8Rng,
    start: Pos,
    size: usize,
    allowed: impl Fn(Pos) -> bool,
    w: usize,
    h: usize,
) -> Vec<Pos> {
    let mut cells = vec![start];
    let mut member: BTreeSet<Pos> = [start].into();
    while cells.len() < size {
        let mut candidates: Vec<Pos> = Vec::new();
        for &c in &cells {
            for n in neighbours(c, w, h) {
                if !member.contains(&n) && allowed(n) && !candidates.contains(&n) {
                    candidates.push(n);
                }
            }
        }
        let Some(&next) = candidates.choose(rng) else {
            break;
        };
        member.insert(next);
        cells.push(next);
    }
    cells
}

fn neighbours(p: Pos, w: usize, h: usize) -> impl Iterator<Item = Pos> {
    Dir::ALL
        .into_iter()
        .filter_map(move |d| step_pos(p, d, w, h))
}

fn step_pos(p: Pos, d: Dir, w: usize, h: usize) -> Option<Pos> {
    let (dx, dy) = d.delta();
    let x = p.x as i64 + dx;
    let y = p.y as i64 + dy;
    (x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h)
        .then(|| Pos::new(x as usize, y as usize))
}

impl World {
    /// Generates a fresh world from `config.seed` and returns it with its
    /// first observation.
    pub fn reset(config: &WorldConfig) -> Result<(World, TextObservation), WorldError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for _ in 0..GENERATION_ATTEMPTS {
            if let Some(world) = Self::generate(config, &mut rng) {
                let obs = world.render_text();
                return Ok((world, obs));
            }
        }
        Err(WorldError::Generation(GENERATION_ATTEMPTS))
    }

    fn blank(
        config: &WorldConfig,
        rng: ChaCha8Rng,
        width: usize,
        height: usize,
        agent: Pos,
    ) -> World {
        World {
            config: config.clone(),
            rng,
            width,
            height,
            tiles: vec![Tile::Grass; width * height],
            agent,
            facing: Dir::South,
            inventory: BTreeMap::new(),
            vitals: Vitals {
                health: MAX_VITAL,
                food: MAX_VITAL,
                drink: MAX_VITAL,
                energy: MAX_VITAL,
            },
            counters: Counters::default(),
            sleeping: false,
            creatures: Vec::new(),
            step: 0,
            done: false,
            achievements: ACHIEVEMENTS
                .iter()
                .map(|a| (a.to_string(), false))
                .collect(),
        }
    }

    fn generate(cfg: &WorldConfig, rng: &mut ChaCha8Rng) -> Option<World> {
        let (w, h) = (cfg.width, cfg.height);
        let all: Vec<Pos> = (0..h)
            .flat_map(|y| (0..w).map(move |x| Pos::new(x, y)))
            .collect();

        let start = *all.choose(rng)?;
        let mountain = grow_blob(rng, start, cfg.mountain_cells, |_| true, w, h);
        if mountain.len() < cfg.mountain_cells {
            return None;
        }
        let mset: BTreeSet<Pos> = mountain.iter().copied().collect();
        let far = |p: Pos, d: usize| mset.iter().all(|m| m.chebyshev(p) >= d);
        let pond_starts: Vec<Pos> = all.iter().copied().filter(|&p| far(p, 3)).collect();
        let pond_start = *pond_starts.choose(rng)?;
        let pond = grow_blob(rng, pond_start, cfg.pond_cells, |p| far(p, 2), w, h);

        let mut world = World::blank(cfg, rng.clone(), w, h, Pos::new(0, 0));
        for &p in &mountain {
            world.set(p, Tile::Rock);
        }
        for &p in &pond {
            world.set(p, Tile::Water);
        }
        for &p in &pond {
            for n in neighbours(p, w, h) {
                if world.tile(n) == Tile::Grass {
                    world.set(n, Tile::Sand);
                }
            }
        }
        let tunnel_start = *mountain.choose(rng)?;
        let tunnel = grow_blob(
            rng,
            tunnel_start,
            cfg.tunnel_cells,
            |p| mset.contains(&p),
            w,
            h,
        );
        for &p in &tunnel {
            world.set(p, Tile::Path);
        }
        let mut rock: Vec<Pos> = mountain
            .iter()
            .copied()
            .filter(|p| world.tile(*p) == Tile::Rock)
            .collect();
        rock.shuffle(rng);
        let ores = [
            (Tile::CoalOre, cfg.coal),
            (Tile::IronOre, cfg.iron),
            (Tile::DiamondOre, cfg.diamonds),
        ];
        let mut it = rock.into_iter();
        for (tile, n) in ores {
            for _ in 0..n {
                world.set(it.next()?, tile);
            }
        }
        let mut grass: Vec<Pos> = all
            .iter()
            .copied()
            .filter(|p| world.tile(*p) == Tile::Grass)
            .collect();
        grass.shuffle(rng);
        let mut grass = grass.into_iter();
        for _ in 0..cfg.trees {
            world.set(grass.next()?, Tile::Tree);
        }
        world.agent = grass.next()?;
        for _ in 0..cfg.cows {
            world.spawn(CreatureKind::Cow, grass.next()?);
        }
        let mut tunnel_cells = tunnel.clone();
        tunnel_cells.shuffle(rng);
        for p in tunnel_cells.into_iter().take(cfg.skeletons) {
            world.spawn(CreatureKind::Skeleton, p);
        }
        world.rng = rng.clone();
        world.connected().then_some(world)
    }

    /// Flood fill from the agent, returning the cells entered and every tile
    /// name seen on or next to them.
    fn flood(&self, passable: impl Fn(Tile) -> bool) -> (usize, BTreeSet<&'static str>) {
        let mut seen = vec![false; self.tiles.len()];
        let mut queue = VecDeque::from([self.agent]);
        seen[self.idx(self.agent)] = true;
        let mut touched: BTreeSet<&'static str> = BTreeSet::new();
        let mut count = 0;
        while let Some(p) = queue.pop_front() {
            count += 1;
            touched.insert(self.tile(p).name());
            for n in neighbours(p, self.width, self.height) {
                let t = self.tile(n);
                touched.insert(t.name());
                if passable(t) && !seen[self.idx(n)] {
                    seen[self.idx(n)] = true;
                    queue.push_back(n);
                }
            }
        }
        (count, touched)
    }

    /// The agent starts in an open walkable region bordering trees, water and
    /// rock, and every ore type is reachable once digging is allowed.
    fn connected(&self) -> bool {
        let (area, walk) = self.flood(Tile::walkable);
        let (_, dig) = self.flood(|t| {
            t.walkable()
                || matches!(
                    t,
                    Tile::Rock | Tile::CoalOre | Tile::IronOre | Tile::DiamondOre
                )
        });
        area >= MIN_OPEN_AREA
            && ["tree", "water", "rock", "grass"]
                .iter()
                .all(|t| walk.contains(t))
            && ["coal_ore", "iron_ore", "diamond_ore"]
                .iter()
                .all(|t| dig.contains(t))
            && (self.config.tunnel_cells == 0 || dig.contains("path"))
    }

    /// Builds a world from a character map, for tests and examples.
    ///
    /// `.` grass, `s` sand, `w` water, `T` tree, `r` rock, `c` coal ore,
    /// `i` iron ore, `d` diamond ore, `_` path, `t` table, `f` furnace,
    /// `p` plant, `@` agent (on grass), `C` cow and `Z` zombie (on grass),
    /// `S` skeleton (on path).
    pub fn from_ascii(config: &WorldConfig, map: &str) -> Result<World, WorldError> {
        let rows: Vec<&str> = map
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        if height == 0 || rows.iter().any(|r| r.chars().count() != width) {
            return Err(WorldError::Config(
                "map rows must be non-empty and equally long".into(),
            ));
        }
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut world = World::blank(config, rng, width, height, Pos::new(0, 0));
        let mut agent = None;
        for (y, row) in rows.iter().enumerate() {
            for (x, ch) in row.chars().enumerate() {
                let p = Pos::new(x, y);
                let tile = match ch {
                    '.' | '@' | 'C' | 'Z' => Tile::Grass,
                    's' => Tile::Sand,
                    'w' => Tile::Water,
                    'T' => Tile::Tree,
                    'r' => Tile::Rock,
                    'c' => Tile::CoalOre,
                    'i' => Tile::IronOre,
                    'd' => Tile::DiamondOre,
                    '_' | 'S' => Tile::Path,
                    't' => Tile::Table,
                    'f' => Tile::Furnace,
                    'p' => Tile::Plant { age: 0 },
                    other => {
                        return Err(WorldError::Config(format!(
                            "unknown map character `{other}`"
                        )))
                    }
                };
                world.set(p, tile);
                match ch {
                    '@' if agent.is_some() => {
                        return Err(WorldError::Config("map has two agents".into()))
                    }
                    '@' => agent = Some(p),
                    'C' => world.spawn(CreatureKind::Cow, p),
                    'Z' => world.spawn(CreatureKind::Zombie, p),
                    'S' => world.spawn(CreatureKind::Skeleton, p),
                    _ => {}
                }
            }
        }
        world.agent = agent.ok_or_else(|| WorldError::Config("map has no agent".into()))?;
        Ok(world)
    }

    fn spawn(&mut self, kind: CreatureKind, pos: Pos) {
        self.creatures.push(Creature {
            kind,
            pos,
            health: kind.max_health(),
            cooldown: 0,
        });
    }

    fn idx(&self, p: Pos) -> usize {
        p.y * self.width + p.x
    }

    fn set(&mut self, p: Pos, t: Tile) {
        let i = self.idx(p);
        self.tiles[i] = t;
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn tile(&self, p: Pos) -> Tile {
        self.tiles[self.idx(p)]
    }

    pub fn agent(&self) -> Pos {
        self.agent
    }

    pub fn facing(&self) -> Dir {
        self.facing
    }

    pub fn facing_pos(&self) -> Option<Pos> {
        step_pos(self.agent, self.facing, self.width, self.height)
    }

    pub fn neighbour(&self, p: Pos, d: Dir) -> Option<Pos> {
        step_pos(p, d, self.width, self.height)
    }

    pub fn inventory(&self) -> &BTreeMap<String, u32> {
        &self.inventory
    }

    pub fn count(&self, item: &str) -> u32 {
        self.inventory.get(item).copied().unwrap_or(0)
    }

    pub fn vitals(&self) -> Vitals {
        self.vitals
    }

    pub fn creatures(&self) -> &[Creature] {
        &self.creatures
    }

    pub fn creature_at(&self, p: Pos) -> Option<&Creature> {
        self.creatures.iter().find(|c| c.pos == p)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn is_sleeping(&self) -> bool {
        self.sleeping
    }

    pub fn is_night(&self) -> bool {
        self.step % self.config.day_length >= self.config.day_length * 2 / 3
    }

    pub fn achievements(&self) -> &BTreeMap<String, bool> {
        &self.achievements
    }

    pub fn unlocked(&self) -> BTreeSet<String> {
        self.achievements
            .iter()
            .filter(|(_, &v)| v)
            .map(|(k, _)| k.clone())
            .collect()
    }

    /// Whether a tile named `name` lies within the station radius.
    pub fn nearby(&self, name: &str) -> bool {
        let r = self.config.station_radius;
        let (x0, y0) = (
            self.agent.x.saturating_sub(r),
            self.agent.y.saturating_sub(r),
        );
        let (x1, y1) = (
            (self.agent.x + r).min(self.width - 1),
            (self.agent.y + r).min(self.height - 1),
        );
        (y0..=y1).any(|y| (x0..=x1).any(|x| self.tile(Pos::new(x, y)).name() == name))
    }

    /// Whether the recipe for `action` could be applied right now, ignoring
    /// the target tile for placements.
    pub fn recipe_ready(&self, action: Action) -> bool {
        let Some(r) = self.config.recipes.get(action.name()) else {
            return false;
        };
        r.uses.iter().all(|(item, n)| self.count(item) >= *n)
            && r.nearby.iter().all(|t| self.nearby(t))
    }

    fn free(&self, p: Pos) -> bool {
        p != self.agent && self.creature_at(p).is_none()
    }

    pub fn render_text(&self) -> TextObservation {
        let (hw, hh) = (
            (self.config.view_width / 2) as i64,
            (self.config.view_height / 2) as i64,
        );
        let mut terrain: BTreeSet<&'static str> = BTreeSet::new();
        let mut visible: Vec<String> = Vec::new();
        let in_view = |p: Pos| {
            (p.x as i64 - self.agent.x as i64).abs() <= hw
                && (p.y as i64 - self.agent.y as i64).abs() <= hh
        };
        for y in 0..self.height {
            for x in 0..self.width {
                let p = Pos::new(x, y);
                if in_view(p) {
                    terrain.insert(self.tile(p).name());
                }
            }
        }
        visible.extend(terrain.into_iter().map(String::from));
        visible.extend(
            self.creatures
                .iter()
                .filter(|c| in_view(c.pos))
                .map(|c| c.kind.name().to_string()),
        );
        visible.sort();
        let mut status = Vec::new();
        if self.is_night() {
            status.push("night".to_string());
        }
        if self.sleeping {
            status.push("sleeping".to_string());
        }
        TextObservation {
            visible,
            inventory: self
                .inventory
                .iter()
                .filter(|(_, &n)| n > 0)
                .map(|(k, &n)| (k.clone(), n))
                .collect(),
            vitals: vec![
                ("health".into(), self.vitals.health),
                ("food".into(), self.vitals.food),
                ("drink".into(), self.vitals.drink),
                ("energy".into(), self.vitals.energy),
            ],
            status,
        }
    }

    fn unlock(&mut self, name: &str, new: &mut Vec<String>) {
        if let Some(flag) = self.achievements.get_mut(name) {
            if !*flag {
                *flag = true;
                new.push(name.to_string());
            }
        }
    }

    fn add_item(&mut self, item: &str, n: u32) {
        let c = self.inventory.entry(item.to_string()).or_default();
        *c = (*c + n).min(MAX_ITEM);
    }

    fn best_sword(&self) -> i32 {
        [("iron_sword", 8), ("stone_sword", 3), ("wood_sword", 2)]
            .iter()
            .find(|(s, _)| self.count(s) > 0)
            .map_or(0, |(_, d)| *d)
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult, WorldError> {
        if self.done {
            return Err(WorldError::StepAfterDone);
        }
        let health_before = self.vitals.health;
        let mut new = Vec::new();
        let executed = if self.sleeping { Action::Noop } else { action };
        self.apply(executed, &mut new);
        self.update_vitals(&mut new);
        self.update_creatures();
        for t in self.tiles.iter_mut() {
            if let Tile::Plant { age } = t {
                *age += 1;
            }
        }
        self.step += 1;
        if self.vitals.health == 0 || self.step >= self.config.max_steps {
            self.done = true;
        }
        let health_delta = i64::from(self.vitals.health) - i64::from(health_before);
        let reward = new.len() as f64 + 0.1 * health_delta as f64;
        Ok(StepResult {
            obs: self.render_text(),
            reward,
            done: self.done,
            info: StepInfo {
                new_achievements: new,
                health_delta,
                executed: Some(executed),
            },
        })
    }

    fn apply(&mut self, action: Action, new: &mut Vec<String>) {
        if let Some(dir) = action.direction() {
            self.facing = dir;
            if let Some(t) = self.facing_pos() {
                if self.tile(t).walkable() && self.free(t) {
                    self.agent = t;
                }
            }
            return;
        }
        match action {
            Action::Noop => {}
            Action::Do => self.interact(new),
            Action::Sleep => {
                if self.vitals.energy < MAX_VITAL {
                    self.sleeping = true;
                }
            }
            _ => self.use_recipe(action, new),
        }
    }

    fn interact(&mut self, new: &mut Vec<String>) {
        let Some(target) = self.facing_pos() else {
            return;
        };
        if let Some(i) = self.creatures.iter().position(|c| c.pos == target) {
            let kind = self.creatures[i].kind;
            let damage = match kind {
                CreatureKind::Cow => self.best_sword().max(1),
                _ => self.best_sword(),
            };
            self.creatures[i].health -= damage;
            if self.creatures[i].health <= 0 {
                self.creatures.remove(i);
                match kind {
                    CreatureKind::Cow => {
                        self.vitals.food = (self.vitals.food + 6).min(MAX_VITAL);
                        self.unlock("eat_cow", new);
                    }
                    CreatureKind::Zombie => self.unlock("defeat_zombie", new),
                    CreatureKind::Skeleton => self.unlock("defeat_skeleton", new),
                }
            }
            return;
        }
        let tile = self.tile(target);
        if let Some((tool, item)) = tile.mining() {
            if tool.is_some_and(|t| self.count(t) == 0) || self.count(item) >= MAX_ITEM {
                return;
            }
            self.add_item(item, 1);
            if tile != Tile::Tree {
                self.set(target, Tile::Path);
            }
            self.unlock(&format!("collect_{item}"), new);
            return;
        }
        match tile {
            Tile::Water if self.vitals.drink < MAX_VITAL => {
                self.vitals.drink += 1;
                self.counters.thirst = 0;
                self.unlock("collect_water", new);
            }
            Tile::Grass if self.count("sapling") < MAX_ITEM => {
                if self.rng.gen_bool(self.config.sapling_chance) {
                    self.add_item("sapling", 1);
                    self.unlock("collect_sapling", new);
                }
            }
            Tile::Plant { age } if age >= self.config.plant_ripen_steps => {
                self.set(target, Tile::Grass);
                self.vitals.food = (self.vitals.food + 4).min(MAX_VITAL);
                self.counters.hunger = 0;
                self.unlock("eat_plant", new);
            }
            _ => {}
        }
    }

    fn use_recipe(&mut self, action: Action, new: &mut Vec<String>) {
        if !self.recipe_ready(action) {
            return;
        }
        let recipe = self.config.recipes[action.name()].clone();
        if let Some(tile) = &recipe.tile {
            let Some(target) = self.facing_pos() else {
                return;
            };
            if !recipe.on.iter().any(|t| t == self.tile(target).name()) || !self.free(target) {
                return;
            }
            self.set(target, Tile::from_name(tile).expect("validated tile name"));
        } else if let Some(item) = &recipe.gives {
            if self.count(item) >= MAX_ITEM {
                return;
            }
            self.add_item(item, 1);
        }
        for (item, n) in &recipe.uses {
            *self
                .inventory
                .get_mut(item)
                .expect("checked by recipe_ready") -= n;
        }
        self.unlock(action.name(), new);
    }

    fn damage_agent(&mut self, amount: u32) {
        self.vitals.health = self.vitals.health.saturating_sub(amount);
        self.sleeping = false;
    }

    fn update_vitals(&mut self, new: &mut Vec<String>) {
        let c = &mut self.counters;
        let v = &mut self.vitals;
        c.hunger += 1;
        if c.hunger >= 25 {
            c.hunger = 0;
            v.food = v.food.saturating_sub(1);
        }
        c.thirst += 1;
        if c.thirst >= 20 {
            c.thirst = 0;
            v.drink = v.drink.saturating_sub(1);
        }
        if self.sleeping {
            c.fatigue = 0;
            c.rest += 1;
            if c.rest >= 5 {
                c.rest = 0;
                v.energy = (v.energy + 1).min(MAX_VITAL);
            }
        } else {
            c.fatigue += 1;
            if c.fatigue >= 30 {
                c.fatigue = 0;
                v.energy = v.energy.saturating_sub(1);
            }
        }
        if v.food > 0 && v.drink > 0 && v.energy > 0 {
            c.recover = c.recover.max(0) + 1;
            if c.recover >= 10 {
                c.recover = 0;
                v.health = (v.health + 1).min(MAX_VITAL);
            }
        } else {
            c.recover = c.recover.min(0) - 1;
            if c.recover <= -5 {
                c.recover = 0;
                v.health = v.health.saturating_sub(1);
            }
        }
        if self.sleeping && self.vitals.energy >= MAX_VITAL {
            self.sleeping = false;
            self.unlock("sleep", new);
        }
    }

    fn try_move(&mut self, i: usize, d: Dir) {
        let c = &self.creatures[i];
        if let Some(t) = step_pos(c.pos, d, self.width, self.height) {
            if c.kind.can_stand(self.tile(t)) && self.free(t) {
                self.creatures[i].pos = t;
            }
        }
    }

    fn update_creatures(&mut self) {
        for i in 0..self.creatures.len() {
            let kind = self.creatures[i].kind;
            let pos = self.creatures[i].pos;
            let dist = pos.manhattan(self.agent);
            match kind {
                CreatureKind::Cow => {
                    if self.rng.gen_bool(0.5) {
                        let d = *Dir::ALL.choose(&mut self.rng).expect("non-empty");
                        self.try_move(i, d);
                    }
                }
                CreatureKind::Zombie | CreatureKind::Skeleton => {
                    let (cooldown, damage) = match kind {
                        CreatureKind::Zombie => (5, if self.sleeping { 5 } else { 2 }),
                        _ => (4, 2),
                    };
                    if dist <= 1 {
                        if self.creatures[i].cooldown > 0 {
                            self.creatures[i].cooldown -= 1;
                        } else {
                            self.creatures[i].cooldown = cooldown;
                            self.damage_agent(damage);
                        }
                        continue;
                    }
                    self.creatures[i].cooldown = self.creatures[i].cooldown.saturating_sub(1);
                    let chase = kind == CreatureKind::Zombie && dist <= 6 && self.rng.gen_bool(0.7);
                    if chase {
                        let dx = self.agent.x as i64 - pos.x as i64;
                        let dy = self.agent.y as i64 - pos.y as i64;
                        let d = if dx.abs() >= dy.abs() {
                            if dx > 0 {
                                Dir::East
                            } else {
                                Dir::West
                            }
                        } else if dy > 0 {
                            Dir::South
                        } else {
                            Dir::North
                        };
                        self.try_move(i, d);
                    } else if self.rng.gen_bool(0.3) {
                        let d = *Dir::ALL.choose(&mut self.rng).expect("non-empty");
                        self.try_move(i, d);
                    }
                }
            }
        }
        let night = self.is_night();
        let (cap, p) = if night {
            (
                self.config.max_zombies_night,
                self.config.zombie_spawn_night,
            )
        } else {
            (self.config.max_zombies_day, self.config.zombie_spawn_day)
        };
        let zombies = self
            .creatures
            .iter()
            .filter(|c| c.kind == CreatureKind::Zombie)
            .count();
        if zombies < cap && p > 0.0 && self.rng.gen_bool(p) {
            for _ in 0..10 {
                let pos = Pos::new(
                    self.rng.gen_range(0..self.width),
                    self.rng.gen_range(0..self.height),
                );
                if self.tile(pos) == Tile::Grass && self.free(pos) && pos.manhattan(self.agent) >= 4
                {
                    self.spawn(CreatureKind::Zombie, pos);
                    break;
                }
            }
        }
    }
}
