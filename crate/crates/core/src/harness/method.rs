use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::ArchSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Finetune,
    Ewc,
    Si,
    KanCl,
    KanClBbewc,
    MlpBbewc,
    Replay,
    KanClReplay,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Self::Finetune,
        Self::Ewc,
        Self::Si,
        Self::KanCl,
        Self::KanClBbewc,
        Self::MlpBbewc,
        Self::Replay,
        Self::KanClReplay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Finetune => "finetune",
            Self::Ewc => "ewc",
            Self::Si => "si",
            Self::KanCl => "kan_cl",
            Self::KanClBbewc => "kan_cl_bbewc",
            Self::MlpBbewc => "mlp_bbewc",
            Self::Replay => "replay",
            Self::KanClReplay => "kan_cl_replay",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }

    /// Per-knot importance, gradient mask and anchor on the KAN head.
    pub fn uses_knot_importance(self) -> bool {
        matches!(self, Self::KanCl | Self::KanClBbewc | Self::KanClReplay)
    }

    /// EWC restricted to `backbone.*` and `feat_norm.*`.
    pub fn uses_backbone_ewc(self) -> bool {
        matches!(self, Self::KanClBbewc | Self::MlpBbewc)
    }

    pub fn uses_global_ewc(self) -> bool {
        self == Self::Ewc
    }

    pub fn uses_si(self) -> bool {
        self == Self::Si
    }

    pub fn uses_replay(self) -> bool {
        matches!(self, Self::Replay | Self::KanClReplay)
    }

    /// Anchor and mask scaled by the annealing multiplier.
    pub fn is_annealed(self) -> bool {
        self == Self::KanClReplay
    }

    /// Checks that the architecture provides what the method regularizes.
    pub fn check_arch(self, arch: &ArchSpec) -> Result<()> {
        if self.uses_knot_importance() && !arch.kind.is_kan() {
            return Err(Error::Config(format!(
                "method {} needs a KAN head, got {}",
                self.name(),
                arch.kind.name()
            )));
        }
        if self.uses_backbone_ewc() && !arch.kind.has_backbone() {
            return Err(Error::Config(format!(
                "method {} needs a convolutional backbone, got {}",
                self.name(),
                arch.kind.name()
            )));
        }
        if self == Self::MlpBbewc && arch.kind.is_kan() {
            return Err(Error::Config("mlp_bbewc pairs backbone EWC with an MLP head".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodParams {
    /// Anchor weight λ.
    pub lambda: f64,
    /// Backbone EWC weight λ_b.
    pub lambda_b: f64,
    /// Gradient mask sharpness β.
    pub beta: f64,
    pub alpha_f: f64,
    pub alpha_a: f64,
    /// Online EWC decay.
    pub gamma: f64,
    /// SI damping.
    pub xi: f64,
    pub rho: f64,
    pub delta: f64,
    /// Replay buffer capacity.
    pub buffer: usize,
    /// Replayed examples appended to each mini-batch.
    pub replay_batch: usize,
    pub fisher_cap: usize,
    pub ewc_lambda: f64,
    pub si_lambda: f64,
    /// Also anchor KAN base weights with the per-edge mean importance.
    pub anchor_base: bool,
    /// Draw Fisher labels from the model instead of the data.
    pub fisher_sampled: bool,
}

impl Default for MethodParams {
    fn default() -> Self {
        Self {
            lambda: 500.0,
            lambda_b: 1000.0,
            beta: 5.0,
            alpha_f: 1.0,
            alpha_a: 0.5,
            gamma: 1.0,
            xi: 0.1,
            rho: 1.0,
            delta: 0.0,
            buffer: 1000,
            replay_batch: 32,
            fisher_cap: 60_000,
            ewc_lambda: 1000.0,
            si_lambda: 1.0,
            anchor_base: false,
            fisher_sampled: false,
        }
    }
}

impl MethodParams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("lambda", self.lambda),
            ("lambda_b", self.lambda_b),
            ("beta", self.beta),
            ("alpha_f", self.alpha_f),
            ("alpha_a", self.alpha_a),
            ("delta", self.delta),
            ("ewc_lambda", self.ewc_lambda),
            ("si_lambda", self.si_lambda),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("method.{name} must be finite and ≥ 0, got {v}")));
            }
        }
        for (name, v) in [("rho", self.rho), ("gamma", self.gamma)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("method.{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(self.xi > 0.0 && self.xi.is_finite()) {
            return Err(Error::Config(format!("method.xi must be > 0, got {}", self.xi)));
        }
        if self.fisher_cap == 0 {
            return Err(Error::Config("method.fisher_cap must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch: 128,
            epochs: 4,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("optimizer.lr must be > 0, got {}", self.lr)));
        }
        if self.batch == 0 || self.epochs == 0 {
            return Err(Error::Config("optimizer.batch and optimizer.epochs must be ≥ 1".into()));
        }
        Ok(())
    }
}
