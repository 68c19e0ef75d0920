//! Building blocks for tracking misinformation streams in social-media
//! corpora: ingestion, regex theory filters, text features, a random-forest
//! classifier with active learning, lexicon sentiment, dynamic topic models
//! and report exports.

pub mod active;
pub mod corpus;
pub mod dtm;
pub mod forest;
pub mod label;
pub mod report;
pub mod sentiment;
pub mod sparse;
pub mod textfeat;
pub mod theoryfilter;
