//! Market-grounded financial news sentiment with source-weighted retrieval.
//!
//! Truth labels come from next-day open-to-open returns against trailing
//! statistics. Context for each headline is retrieved from a multi-source
//! corpus, ranked by similarity times source reliability, and fed to a
//! classifier. Source reliabilities adapt either by direct market feedback
//! ([`feedback`]) or by a PPO agent ([`ppo`]).

pub mod classifier;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod feedback;
pub mod marketdata;
pub mod pipeline;
pub mod ppo;
#[cfg(feature = "remote")]
pub mod remote;
pub mod retrieval;
pub mod seed;
pub mod synthetic;
pub mod weights;

pub use error::{Error, Result};
pub use marketdata::SentimentLabel;
pub use weights::SourceWeights;
