//! Semantic scene graphs for traffic scenes, a contrastive graph encoder
//! mapping them into a 12-dimensional embedding space, and tools to analyze
//! that space.
//!
//! Pipeline: [`scene`] data → [`projection`] onto lanes → [`graph`]
//! construction → [`encoder`] trained by [`training`] on triplets built with
//! [`augment`] → [`analysis`] of the embeddings. [`synth`] generates
//! labelled scenes; [`io`] and [`pipeline`] provide the file formats and
//! command implementations used by the CLI.

pub mod analysis;
pub mod augment;
pub mod config;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod io;
pub mod nn;
pub mod pipeline;
pub mod projection;
pub mod scene;
pub mod seed;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
