//! Dataset splitting, background sampling, metrics and spectral SNR profiles.

mod background;
pub mod metrics;
mod snr;
mod split;

pub use background::{sample_background, MAX_TRIES};
pub use metrics::{accuracy, confusion, uar, uar_present, ConfusionMatrix};
pub use snr::{snr_profile, DbAveraging, SnrProfile};
pub use split::{chronological_split, read_split, write_split, Split, SplitSpec, StratumReport};
