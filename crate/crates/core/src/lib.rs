//! Decision-tree oracle, sequential diagnosis dialogues, LLM gateway and
//! pathway evaluation for anemia differential diagnosis.

pub mod analysis;
pub mod dialogue;
pub mod domain;
pub mod dtree;
pub mod gateway;
pub mod run;
pub mod synth;

pub use domain::*;
