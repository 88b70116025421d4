//! Engine for notation-driven keyframe authoring: sketched motion marks are
//! grounded on a coordinate grid, interpreted by a vision-language backend
//! into source/path/target units, laid out on a per-part timeline and turned
//! into frame prompts for progressive keyframe generation.

pub mod backend;
pub mod digest;
pub mod generation;
pub mod intent;
pub mod pipeline;
pub mod raster;
pub mod grid;
pub mod prompt;
pub mod timeline;
pub mod workspace;
