//! Rotation-invariant point descriptors and a hierarchical EdgeConv network
//! with hand-written reverse-mode gradients.

mod checkpoint;
mod layers;
mod network;
mod ri;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, MAGIC, VERSION};
pub use layers::{EdgeCache, Interpolation, LayerNorm, Linear, Perceptron, PointwiseCache, LEAKY_SLOPE, NORM_EPS};
pub use network::{
    backward, backward_into, embed, Architecture, EmbedderParams, EmbedderTrace, Level, LevelEmbeddings,
    OutputGrads, Structure, MIN_POINTS,
};
pub use ri::{ri_features, RIFeatures};

/// Fan-in-scaled uniform initialisation of a fresh network.
pub fn init_params(arch: &Architecture, seed: u64) -> crate::Result<EmbedderParams> {
    EmbedderParams::init(arch, seed)
}
