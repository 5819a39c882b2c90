//! Layers with hand-written backward passes and the composed models.

mod adam;
mod checkpoint;
pub mod conv;
pub mod kan;
pub mod loss;
pub mod mlp;
pub mod model;
pub mod norm;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, CHECKPOINT_HEADER};
pub use conv::{CnnBackbone, Conv2d, ResidualBlock};
pub use kan::{KanCache, KanLayer};
pub use mlp::{Activation, MlpLayer};
pub use model::{build_model, ArchSpec, Head, HeadCache, Model, ModelCache, ModelKind};
pub use norm::FeatureNormalizer;
