use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::model::{LayerWidths, Topology};

/// The ablation variants. Each one changes exactly one thing relative to
/// `Full`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ablation {
    #[default]
    #[serde(rename = "full")]
    Full,
    /// No conditional adversarial supervision of the generator; the critic
    /// receives no Wasserstein updates.
    #[serde(rename = "wo_LG2")]
    WoLG2,
    #[serde(rename = "wo_Ld")]
    WoLd,
    #[serde(rename = "wo_Lcls")]
    WoLcls,
    #[serde(rename = "wo_Lcen")]
    WoLcen,
    /// One regressor for both domains.
    #[serde(rename = "shared_R")]
    SharedR,
    /// Semantic discriminators without the shared final layer.
    #[serde(rename = "separate_Dsu")]
    SeparateDsu,
    /// Per-domain generator output layers over a shared hidden layer.
    #[serde(rename = "coupled_Gsu")]
    CoupledGsu,
    /// Trained like `Full`; the test-time critic transform is skipped.
    #[serde(rename = "wo_D_test")]
    WoDTest,
}

impl Ablation {
    pub const ALL: [Ablation; 9] = [
        Ablation::Full,
        Ablation::WoLG2,
        Ablation::WoLd,
        Ablation::WoLcls,
        Ablation::WoLcen,
        Ablation::SharedR,
        Ablation::SeparateDsu,
        Ablation::CoupledGsu,
        Ablation::WoDTest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::WoLG2 => "wo_LG2",
            Ablation::WoLd => "wo_Ld",
            Ablation::WoLcls => "wo_Lcls",
            Ablation::WoLcen => "wo_Lcen",
            Ablation::SharedR => "shared_R",
            Ablation::SeparateDsu => "separate_Dsu",
            Ablation::CoupledGsu => "coupled_Gsu",
            Ablation::WoDTest => "wo_D_test",
        }
    }

    /// Row label in the ablation table.
    pub fn row_label(self) -> &'static str {
        match self {
            Ablation::Full => "BMCoGAN",
            Ablation::WoLG2 => "BMCoGAN w/o L_G2",
            Ablation::WoLd => "BMCoGAN w/o L_d",
            Ablation::WoLcls => "BMCoGAN w/o L_cls",
            Ablation::WoLcen => "BMCoGAN w/o L_cen",
            Ablation::SharedR => "BMCoGAN w/ R",
            Ablation::SeparateDsu => "BMCoGAN w/ separate D_s & D_u",
            Ablation::CoupledGsu => "BMCoGAN w/ coupled G_s & G_u",
            Ablation::WoDTest => "BMCoGAN w/o D (test)",
        }
    }

    pub fn topology(self) -> Topology {
        Topology {
            shared_regressor: self == Ablation::SharedR,
            separate_disc_heads: self == Ablation::SeparateDsu,
            coupled_generators: self == Ablation::CoupledGsu,
        }
    }

    pub fn uses_l_g2(self) -> bool {
        self != Ablation::WoLG2
    }

    pub fn uses_l_d(self) -> bool {
        self != Ablation::WoLd
    }

    pub fn uses_l_cls(self) -> bool {
        self != Ablation::WoLcls
    }

    pub fn uses_l_cen(self) -> bool {
        self != Ablation::WoLcen
    }

    pub fn uses_d_transform(self) -> bool {
        self != Ablation::WoDTest
    }

    pub fn valid_names() -> String {
        Self::ALL
            .iter()
            .map(|a| a.name())
            .collect::<Vec<_>>()
            .join(", ")
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::Argument(format!(
                    "unknown variant `{s}`; valid: {}",
                    Self::valid_names()
                ))
            })
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How the two generator objectives are applied within one outer step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorUpdate {
    /// Group 1 step, then group 2 step on the updated generator.
    #[default]
    Alternate,
    /// Both gradients taken at the same parameters and applied in one step.
    Combined,
}

/// Settings for the frozen seen-class classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            epochs: 100,
            lr: 1e-2,
            batch_size: 64,
        }
    }
}

/// Generator updates aimed for when `epochs` is left unset.
pub const DEFAULT_GENERATOR_UPDATES: usize = 30_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub weights: LossWeights,
    /// Generator, critic and centers.
    pub lr_main: f64,
    /// Regressors and semantic discriminators.
    pub lr_aux: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub n_critic: usize,
    pub batch_size: usize,
    /// `None` sizes the run to roughly [`DEFAULT_GENERATOR_UPDATES`] outer steps.
    pub epochs: Option<usize>,
    pub seed: u64,
    /// Noise width; `None` uses the attribute width.
    pub dz: Option<usize>,
    /// Frobenius bound on the repulsion part of the push/pull gradient.
    pub clip_norm: f64,
    /// Also regress real seen features onto their semantics in `L_Reg^s`.
    pub reg_on_real: bool,
    pub ablation: Ablation,
    /// Step size of the center update; `None` uses `lr_main`.
    pub center_lr: Option<f64>,
    pub generator_update: GeneratorUpdate,
    pub widths: LayerWidths,
    pub classifier: ClassifierConfig,
    /// Write a checkpoint every this many outer steps (0 disables periodic ones).
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            weights: LossWeights::default(),
            lr_main: 1e-4,
            lr_aux: 2e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            n_critic: 5,
            batch_size: 64,
            epochs: None,
            seed: 0,
            dz: None,
            clip_norm: 5.0,
            reg_on_real: false,
            ablation: Ablation::Full,
            center_lr: None,
            generator_update: GeneratorUpdate::Alternate,
            widths: LayerWidths::default(),
            classifier: ClassifierConfig::default(),
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        let positive = [
            ("lr_main", self.lr_main),
            ("lr_aux", self.lr_aux),
            ("clip_norm", self.clip_norm),
            ("classifier.lr", self.classifier.lr),
            ("center_lr", self.center_lr()),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("`{name}` must be a positive real")));
            }
        }
        for (name, b) in [
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
        ] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("`{name}` must lie in [0, 1)")));
            }
        }
        for (name, v) in [
            ("n_critic", self.n_critic),
            ("batch_size", self.batch_size),
            ("classifier.batch_size", self.classifier.batch_size),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("`{name}` must be at least 1")));
            }
        }
        if self.dz == Some(0) {
            return Err(Error::Config("`dz` must be at least 1".into()));
        }
        Ok(())
    }

    pub fn center_lr(&self) -> f64 {
        self.center_lr.unwrap_or(self.lr_main)
    }

    /// Loss weights with the ablated terms set to zero.
    pub fn effective_weights(&self) -> LossWeights {
        let mut w = self.weights;
        let a = self.ablation;
        if !a.uses_l_g2() {
            w.lambda2 = 0.0;
        }
        if !a.uses_l_d() {
            w.lambda_d = 0.0;
        }
        if !a.uses_l_cls() {
            w.lambda_cls = 0.0;
        }
        if !a.uses_l_cen() {
            w.lambda_cen = 0.0;
        }
        w
    }

    pub fn steps_per_epoch(&self, n_train: usize) -> usize {
        n_train.div_ceil(self.batch_size.max(1))
    }

    pub fn resolved_epochs(&self, n_train: usize) -> usize {
        self.epochs.unwrap_or_else(|| {
            DEFAULT_GENERATOR_UPDATES.div_ceil(self.steps_per_epoch(n_train).max(1))
        })
    }

    pub fn total_steps(&self, n_train: usize) -> u64 {
        (self.resolved_epochs(n_train) * self.steps_per_epoch(n_train)) as u64
    }

    /// Short stable digest of the serialized config.
    pub fn hash(&self) -> String {
        config_hash(self)
    }
}

/// First 12 hex digits of the SHA-256 of the JSON serialization.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    let digest = Sha256::digest(&json);
    crate::datasets::hex(&digest[..6])
}
