//! Continual-learning regularizers: EWC and online EWC, SI, the per-knot
//! KAN-CL pipeline and a reservoir replay buffer.

mod fisher;
mod knot;
mod replay;
mod si;

pub use fisher::{
    empirical_fisher, empirical_fisher_with, ewc_penalty, online_fisher_update, path_matches, FisherStore,
    BACKBONE_PATTERNS,
};
pub use knot::{
    activation_mass, anchor_penalty, anneal_scale, combine_importance, knot_fisher, mask_gradient, ImportanceStore,
    LayerImportance,
};
pub use replay::{ReplayBuffer, ReplayItem};
pub use si::SiState;
