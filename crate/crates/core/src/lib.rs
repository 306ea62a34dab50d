//! Subgoal-graph guided planning for a crafting gridworld.
//!
//! - [`knowledge`]: subgoal graph and entity knowledge base
//! - [`llm`]: chat-completion gateway (HTTP, mock, replay)
//! - [`planner`]: actor, critic and refiner pipeline
//! - [`tracker`]: subgoal completion detection, extra reward, graph weights
//! - [`gridcraft`]: deterministic crafting gridworld
//! - [`agent`]: scripted, random and tabular policies
//! - [`harness`]: control loop, metrics and run configuration

pub mod agent;
pub mod gridcraft;
pub mod harness;
pub mod knowledge;
pub mod llm;
pub mod planner;
pub mod template;
pub mod tracker;

/// Directory holding the bundled fixtures.
pub fn fixtures_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}
