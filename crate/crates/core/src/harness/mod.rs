//! Synthetic data, training, baselines, evaluation and file formats.

pub mod config;
pub mod eval;
pub mod icp;
pub mod io;
pub mod pairs;
pub mod shapes;
pub mod train;

pub use config::{Config, EvalSettings, TrainSettings};
pub use eval::{evaluate, evaluate_checkpoint, EvalReport, EvalTimings, Method, MethodReport, PairResult};
pub use icp::icp;
pub use io::{read_cloud, write_cloud};
pub use pairs::{augment, make_eval_pair, make_training_pair, partial_view, AugmentSpec, RegistrationPair};
pub use shapes::{generate_shape, ShapeKind};
pub use train::{train, train_with, Adam, EpochStats, TrainOutcome};

/// Independent seed for item `index` of random stream `stream`.
pub fn stream_seed(seed: u64, stream: u64, index: u64) -> u64 {
    // splitmix64 finaliser over a mixed key
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(index.wrapping_mul(0x8CB9_2BA7_2F3D_8DD7))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
