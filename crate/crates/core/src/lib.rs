//! Core of the Alien Zoo study platform.
//!
//! The crate covers the whole pipeline that does not need a network:
//! synthetic training data ([`data`]), the regression tree that turns a
//! plant choice into a growth rate ([`tree`]), counterfactual search over
//! that tree ([`cfe`]), the per-participant game protocol ([`game`]),
//! quality screening and statistics ([`quality`], [`stats`], [`lmm`]),
//! CSV exports ([`export`]) and simulated participants ([`bots`]).

pub mod analysis;
pub mod bots;
pub mod cfe;
pub mod data;
pub mod error;
pub mod export;
pub mod game;
pub mod lmm;
pub mod pipeline;
pub mod plant;
pub mod quality;
pub mod stats;
pub mod survey;
pub mod tree;

pub use cfe::{CfeConfig, CfeMode, Counterfactual};
pub use data::{Dataset, GrowthSample, Provenance};
pub use error::{DataError, GameError, PipelineError, StatsError, TreeError};
pub use game::{Condition, GameEngine, Phase, Session};
pub use plant::{Experiment, PlantVector, NUM_PLANTS};
pub use tree::{GrowthModel, ModelMetrics};
