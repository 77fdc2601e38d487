//! Dataset ingestion and synthesis: binarized image sets in IDX layout,
//! numeric CSV regression tables with train/test splitting and
//! standardization, synthetic bouncing-ball videos, and a packed-bitmap
//! container for binary frame sequences.

pub mod balls;
pub mod csv;
pub mod idx;
pub mod seqbin;

pub use balls::{generate_bouncing_balls, simulate_sequence, Ball, BouncingBallConfig};
pub use csv::{load_regression_csv, ColumnStats, RegressionDataset};
pub use idx::{load_idx_images, Binarize, BinaryImageDataset};
pub use seqbin::{read_sequences, write_sequences};
