//! Network components and their forward/backward passes.
//!
//! The model is a set of small fully connected networks:
//!
//! * a conditional generator `[z; a] -> x` shared by both domains,
//! * one regressor per domain mapping features back to semantics,
//! * two semantic discriminators whose final layer is a single shared
//!   parameter set,
//! * a conditional Wasserstein critic on `[x; a]` whose hidden activation
//!   doubles as the embedding used for the discrimination and center losses
//!   and for the test-time transform,
//! * a linear seen-class classifier and the seen-class centers.

use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_shape, Error, Result};
use crate::nn::{log_softmax, log_softmax_backward, Activation, Linear, LinearGrad, TensorMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Seen,
    Unseen,
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seen" => Ok(Domain::Seen),
            "unseen" => Ok(Domain::Unseen),
            other => Err(Error::Argument(format!(
                "unknown domain `{other}` (expected `seen` or `unseen`)"
            ))),
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Seen => "seen",
            Domain::Unseen => "unseen",
        })
    }
}

/// Hidden-layer widths. Defaults are the published architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayerWidths {
    pub generator_hidden: usize,
    pub regressor_hidden: usize,
    pub coupled_disc_hidden: usize,
    pub critic_hidden: usize,
}

impl Default for LayerWidths {
    fn default() -> Self {
        LayerWidths {
            generator_hidden: 4096,
            regressor_hidden: 1024,
            coupled_disc_hidden: 256,
            critic_hidden: 1024,
        }
    }
}

/// Structural switches used by the ablation variants.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    /// One regressor serves both domains.
    pub shared_regressor: bool,
    /// Each semantic discriminator gets its own final layer.
    pub separate_disc_heads: bool,
    /// Generator keeps a shared hidden layer but has one output layer per domain.
    pub coupled_generators: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub dx: usize,
    pub a_dim: usize,
    /// Noise width; `None` means "same as `a_dim`".
    pub dz: Option<usize>,
    pub c_seen: usize,
    pub widths: LayerWidths,
    pub topology: Topology,
}

impl ModelDims {
    pub fn new(dx: usize, a_dim: usize, c_seen: usize) -> Self {
        ModelDims {
            dx,
            a_dim,
            dz: None,
            c_seen,
            widths: LayerWidths::default(),
            topology: Topology::default(),
        }
    }

    pub fn noise_dim(&self) -> usize {
        self.dz.unwrap_or(self.a_dim)
    }

    fn validate(&self) -> Result<()> {
        let w = &self.widths;
        let all = [
            ("dx", self.dx),
            ("a_dim", self.a_dim),
            ("dz", self.noise_dim()),
            ("c_seen", self.c_seen),
            ("generator_hidden", w.generator_hidden),
            ("regressor_hidden", w.regressor_hidden),
            ("coupled_disc_hidden", w.coupled_disc_hidden),
            ("critic_hidden", w.critic_hidden),
        ];
        for (name, v) in all {
            if v == 0 {
                return Err(Error::Argument(format!(
                    "model dimension `{name}` must be positive"
                )));
            }
        }
        Ok(())
    }

    /// Closed-form trainable parameter count (centers excluded).
    pub fn expected_param_count(&self) -> usize {
        let (dx, a, dz, cs) = (self.dx, self.a_dim, self.noise_dim(), self.c_seen);
        let w = &self.widths;
        let t = &self.topology;
        let gh = w.generator_hidden;
        let gen_out = gh * dx + dx;
        let generator = (dz + a) * gh + gh + gen_out * if t.coupled_generators { 2 } else { 1 };
        let one_reg = dx * w.regressor_hidden + w.regressor_hidden + w.regressor_hidden * a + a;
        let regressors = one_reg * if t.shared_regressor { 1 } else { 2 };
        let dh = w.coupled_disc_hidden;
        let head = dh + 1;
        let coupled = 2 * (a * dh + dh) + head * if t.separate_disc_heads { 2 } else { 1 };
        let ch = w.critic_hidden;
        let critic = (dx + a) * ch + ch + ch + 1;
        let classifier = dx * cs + cs;
        generator + regressors + coupled + critic + classifier
    }
}

fn concat_cols(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<Array2<f64>> {
    ensure_shape(a.nrows() == b.nrows(), || {
        format!("batch sizes differ: {} vs {}", a.nrows(), b.nrows())
    })?;
    Ok(concatenate(Axis(1), &[a.view(), b.view()]).expect("row counts checked"))
}

// ---------------------------------------------------------------------------
// Generator

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub hidden: Linear,
    pub output: Linear,
    /// Present only for the coupled-generator ablation.
    pub output_unseen: Option<Linear>,
}

#[derive(Debug, Clone)]
pub struct GeneratorCache {
    input: Array2<f64>,
    hidden_pre: Array2<f64>,
    hidden: Array2<f64>,
    out_pre: Array2<f64>,
    domain: Domain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorGrad {
    pub hidden: LinearGrad,
    pub output: LinearGrad,
    pub output_unseen: Option<LinearGrad>,
}

impl Generator {
    fn output_for(&self, domain: Domain) -> &Linear {
        match (domain, &self.output_unseen) {
            (Domain::Unseen, Some(l)) => l,
            _ => &self.output,
        }
    }

    pub fn forward(
        &self,
        z: &ArrayView2<f64>,
        a: &ArrayView2<f64>,
        domain: Domain,
    ) -> Result<(Array2<f64>, GeneratorCache)> {
        let input = concat_cols(z, a)?;
        let hidden_pre = self.hidden.forward(&input.view())?;
        let hidden = Activation::LeakyRelu.apply(&hidden_pre);
        let out_pre = self.output_for(domain).forward(&hidden.view())?;
        let out = Activation::Relu.apply(&out_pre);
        Ok((
            out,
            GeneratorCache {
                input,
                hidden_pre,
                hidden,
                out_pre,
                domain,
            },
        ))
    }

    pub fn zero_grad(&self) -> GeneratorGrad {
        GeneratorGrad {
            hidden: LinearGrad::zeros_like(&self.hidden),
            output: LinearGrad::zeros_like(&self.output),
            output_unseen: self.output_unseen.as_ref().map(LinearGrad::zeros_like),
        }
    }

    /// Returns parameter gradients and the gradient w.r.t. the `[z; a]` input.
    pub fn backward(
        &self,
        cache: &GeneratorCache,
        grad_out: &Array2<f64>,
    ) -> (GeneratorGrad, Array2<f64>) {
        let g_out_pre = Activation::Relu.backward(&cache.out_pre, grad_out);
        let out_layer = self.output_for(cache.domain);
        let (g_out_layer, g_hidden) = out_layer.backward(&cache.hidden.view(), &g_out_pre);
        let g_hidden_pre = Activation::LeakyRelu.backward(&cache.hidden_pre, &g_hidden);
        let (g_hidden_layer, g_input) = self.hidden.backward(&cache.input.view(), &g_hidden_pre);
        let mut grad = self.zero_grad();
        grad.hidden = g_hidden_layer;
        match (cache.domain, grad.output_unseen.as_mut()) {
            (Domain::Unseen, Some(slot)) => *slot = g_out_layer,
            _ => grad.output = g_out_layer,
        }
        (grad, g_input)
    }

    pub fn layers(&self) -> Vec<&Linear> {
        let mut v = vec![&self.hidden, &self.output];
        if let Some(l) = &self.output_unseen {
            v.push(l);
        }
        v
    }

    pub fn layers_mut(&mut self) -> Vec<&mut Linear> {
        let mut v = vec![&mut self.hidden, &mut self.output];
        if let Some(l) = &mut self.output_unseen {
            v.push(l);
        }
        v
    }
}

impl GeneratorGrad {
    pub fn add_assign(&mut self, other: &GeneratorGrad) {
        self.hidden.add_assign(&other.hidden);
        self.output.add_assign(&other.output);
        if let (Some(a), Some(b)) = (self.output_unseen.as_mut(), other.output_unseen.as_ref()) {
            a.add_assign(b);
        }
    }

    pub fn parts(&self) -> Vec<&LinearGrad> {
        let mut v = vec![&self.hidden, &self.output];
        if let Some(g) = &self.output_unseen {
            v.push(g);
        }
        v
    }
}

// ---------------------------------------------------------------------------
// Regressors

/// One-hidden-layer perceptron with a leaky-rectified hidden layer and linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub hidden: Linear,
    pub output: Linear,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    input: Array2<f64>,
    hidden_pre: Array2<f64>,
    hidden: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrad {
    pub hidden: LinearGrad,
    pub output: LinearGrad,
}

impl Mlp {
    pub fn forward(&self, x: &ArrayView2<f64>) -> Result<(Array2<f64>, MlpCache)> {
        let hidden_pre = self.hidden.forward(x)?;
        let hidden = Activation::LeakyRelu.apply(&hidden_pre);
        let out = self.output.forward(&hidden.view())?;
        Ok((
            out,
            MlpCache {
                input: x.to_owned(),
                hidden_pre,
                hidden,
            },
        ))
    }

    pub fn backward(&self, cache: &MlpCache, grad_out: &Array2<f64>) -> (MlpGrad, Array2<f64>) {
        let (g_out, g_hidden) = self.output.backward(&cache.hidden.view(), grad_out);
        let g_pre = Activation::LeakyRelu.backward(&cache.hidden_pre, &g_hidden);
        let (g_hid, g_in) = self.hidden.backward(&cache.input.view(), &g_pre);
        (
            MlpGrad {
                hidden: g_hid,
                output: g_out,
            },
            g_in,
        )
    }
}

impl MlpGrad {
    pub fn zeros_like(m: &Mlp) -> Self {
        MlpGrad {
            hidden: LinearGrad::zeros_like(&m.hidden),
            output: LinearGrad::zeros_like(&m.output),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrad) {
        self.hidden.add_assign(&other.hidden);
        self.output.add_assign(&other.output);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Regressors {
    pub seen: Mlp,
    /// `None` when a single regressor serves both domains.
    pub unseen: Option<Mlp>,
}

impl Regressors {
    pub fn get(&self, domain: Domain) -> &Mlp {
        match (domain, &self.unseen) {
            (Domain::Unseen, Some(m)) => m,
            _ => &self.seen,
        }
    }

    pub fn is_shared(&self) -> bool {
        self.unseen.is_none()
    }

    pub fn layers(&self) -> Vec<&Linear> {
        let mut v = vec![&self.seen.hidden, &self.seen.output];
        if let Some(m) = &self.unseen {
            v.push(&m.hidden);
            v.push(&m.output);
        }
        v
    }

    pub fn layers_mut(&mut self) -> Vec<&mut Linear> {
        let mut v = vec![&mut self.seen.hidden, &mut self.seen.output];
        if let Some(m) = &mut self.unseen {
            v.push(&mut m.hidden);
            v.push(&mut m.output);
        }
        v
    }
}

/// Gradients for both regressors; `unseen` is `None` when the regressor is shared
/// (all gradient then accumulates into `seen`).
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorGrads {
    pub seen: MlpGrad,
    pub unseen: Option<MlpGrad>,
}

impl RegressorGrads {
    pub fn zeros_like(r: &Regressors) -> Self {
        RegressorGrads {
            seen: MlpGrad::zeros_like(&r.seen),
            unseen: r.unseen.as_ref().map(MlpGrad::zeros_like),
        }
    }

    pub fn accumulate(&mut self, domain: Domain, g: &MlpGrad) {
        match (domain, self.unseen.as_mut()) {
            (Domain::Unseen, Some(u)) => u.add_assign(g),
            _ => self.seen.add_assign(g),
        }
    }

    pub fn parts(&self) -> Vec<&LinearGrad> {
        let mut v = vec![&self.seen.hidden, &self.seen.output];
        if let Some(u) = &self.unseen {
            v.push(&u.hidden);
            v.push(&u.output);
        }
        v
    }
}

// ---------------------------------------------------------------------------
// Coupled semantic discriminators

/// Two domain-private stems feeding one final layer.
///
/// `head` is the only storage for the final layer in the coupled
/// configuration, so both branches always read the same values.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledDiscriminator {
    pub stem_seen: Linear,
    pub stem_unseen: Linear,
    pub head: Linear,
    /// Present only for the separate-discriminators ablation.
    pub head_unseen: Option<Linear>,
}

#[derive(Debug, Clone)]
pub struct CoupledCache {
    input: Array2<f64>,
    stem_pre: Array2<f64>,
    stem: Array2<f64>,
    domain: Domain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledGrad {
    pub stem_seen: LinearGrad,
    pub stem_unseen: LinearGrad,
    pub head: LinearGrad,
    pub head_unseen: Option<LinearGrad>,
}

impl CoupledDiscriminator {
    pub fn stem(&self, domain: Domain) -> &Linear {
        match domain {
            Domain::Seen => &self.stem_seen,
            Domain::Unseen => &self.stem_unseen,
        }
    }

    /// Final layer as seen through the given branch.
    pub fn head_for(&self, domain: Domain) -> &Linear {
        match (domain, &self.head_unseen) {
            (Domain::Unseen, Some(h)) => h,
            _ => &self.head,
        }
    }

    pub fn head_for_mut(&mut self, domain: Domain) -> &mut Linear {
        match (domain, &mut self.head_unseen) {
            (Domain::Unseen, Some(h)) => h,
            _ => &mut self.head,
        }
    }

    pub fn is_coupled(&self) -> bool {
        self.head_unseen.is_none()
    }

    /// Leaky-rectified stem features of one branch.
    pub fn stem_forward(&self, a: &ArrayView2<f64>, domain: Domain) -> Result<Array2<f64>> {
        let pre = self.stem(domain).forward(a)?;
        Ok(Activation::LeakyRelu.apply(&pre))
    }

    pub fn head_forward(&self, features: &ArrayView2<f64>, domain: Domain) -> Result<Array1<f64>> {
        let out = self.head_for(domain).forward(features)?;
        Ok(out.column(0).to_owned())
    }

    pub fn forward(
        &self,
        a: &ArrayView2<f64>,
        domain: Domain,
    ) -> Result<(Array1<f64>, CoupledCache)> {
        let stem_pre = self.stem(domain).forward(a)?;
        let stem = Activation::LeakyRelu.apply(&stem_pre);
        let logits = self.head_forward(&stem.view(), domain)?;
        Ok((
            logits,
            CoupledCache {
                input: a.to_owned(),
                stem_pre,
                stem,
                domain,
            },
        ))
    }

    pub fn zero_grad(&self) -> CoupledGrad {
        CoupledGrad {
            stem_seen: LinearGrad::zeros_like(&self.stem_seen),
            stem_unseen: LinearGrad::zeros_like(&self.stem_unseen),
            head: LinearGrad::zeros_like(&self.head),
            head_unseen: self.head_unseen.as_ref().map(LinearGrad::zeros_like),
        }
    }

    /// Accumulates parameter gradients into `grad` and returns the input gradient.
    pub fn backward(
        &self,
        cache: &CoupledCache,
        d_logits: &Array1<f64>,
        grad: &mut CoupledGrad,
    ) -> Array2<f64> {
        let d_out = d_logits.view().insert_axis(Axis(1)).to_owned();
        let head = self.head_for(cache.domain);
        let (g_head, d_stem) = head.backward(&cache.stem.view(), &d_out);
        let d_pre = Activation::LeakyRelu.backward(&cache.stem_pre, &d_stem);
        let stem = self.stem(cache.domain);
        let (g_stem, d_in) = stem.backward(&cache.input.view(), &d_pre);
        match (cache.domain, grad.head_unseen.as_mut()) {
            (Domain::Unseen, Some(h)) => h.add_assign(&g_head),
            _ => grad.head.add_assign(&g_head),
        }
        match cache.domain {
            Domain::Seen => grad.stem_seen.add_assign(&g_stem),
            Domain::Unseen => grad.stem_unseen.add_assign(&g_stem),
        }
        d_in
    }

    pub fn layers(&self) -> Vec<&Linear> {
        let mut v = vec![&self.stem_seen, &self.stem_unseen, &self.head];
        if let Some(h) = &self.head_unseen {
            v.push(h);
        }
        v
    }

    pub fn layers_mut(&mut self) -> Vec<&mut Linear> {
        let mut v = vec![&mut self.stem_seen, &mut self.stem_unseen, &mut self.head];
        if let Some(h) = &mut self.head_unseen {
            v.push(h);
        }
        v
    }
}

impl CoupledGrad {
    pub fn parts(&self) -> Vec<&LinearGrad> {
        let mut v = vec![&self.stem_seen, &self.stem_unseen, &self.head];
        if let Some(h) = &self.head_unseen {
            v.push(h);
        }
        v
    }
}

// ---------------------------------------------------------------------------
// Critic

/// Conditional Wasserstein critic `[x; a] -> hidden (k) -> score`.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    pub hidden: Linear,
    pub output: Linear,
}

#[derive(Debug, Clone)]
pub struct CriticCache {
    input: Array2<f64>,
    hidden_pre: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct CriticOutput {
    pub score: Array1<f64>,
    pub embedding: Array2<f64>,
    pub cache: CriticCache,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticGrad {
    pub hidden: LinearGrad,
    pub output: LinearGrad,
}

impl CriticGrad {
    pub fn zeros_like(c: &Critic) -> Self {
        CriticGrad {
            hidden: LinearGrad::zeros_like(&c.hidden),
            output: LinearGrad::zeros_like(&c.output),
        }
    }

    pub fn add_assign(&mut self, other: &CriticGrad) {
        self.hidden.add_assign(&other.hidden);
        self.output.add_assign(&other.output);
    }

    pub fn scale(&mut self, f: f64) {
        self.hidden.scale(f);
        self.output.scale(f);
    }
}

impl Critic {
    pub fn embedding_dim(&self) -> usize {
        self.hidden.fan_out()
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.fan_in()
    }

    pub fn forward(&self, x: &ArrayView2<f64>, a: &ArrayView2<f64>) -> Result<CriticOutput> {
        let input = concat_cols(x, a)?;
        self.forward_joint(input)
    }

    /// Forward on an already concatenated `[x; a]` batch.
    pub fn forward_joint(&self, input: Array2<f64>) -> Result<CriticOutput> {
        let hidden_pre = self.hidden.forward(&input.view())?;
        let embedding = Activation::LeakyRelu.apply(&hidden_pre);
        let score = self.output.forward(&embedding.view())?.column(0).to_owned();
        Ok(CriticOutput {
            score,
            embedding,
            cache: CriticCache { input, hidden_pre },
        })
    }

    /// Hidden embedding only.
    pub fn embed(&self, x: &ArrayView2<f64>, a: &ArrayView2<f64>) -> Result<Array2<f64>> {
        let input = concat_cols(x, a)?;
        let pre = self.hidden.forward(&input.view())?;
        Ok(Activation::LeakyRelu.apply(&pre))
    }

    /// Backward from upstream gradients on the score and (optionally) the embedding.
    /// When `include_output` is false the output layer receives no gradient and the
    /// score gradient is ignored. Returns gradients and the input gradient.
    pub fn backward(
        &self,
        out: &CriticOutput,
        d_score: Option<&Array1<f64>>,
        d_embedding: Option<&Array2<f64>>,
    ) -> (CriticGrad, Array2<f64>) {
        let batch = out.embedding.nrows();
        let mut grad = CriticGrad::zeros_like(self);
        let mut d_emb = match d_embedding {
            Some(d) => d.clone(),
            None => Array2::zeros((batch, self.embedding_dim())),
        };
        if let Some(ds) = d_score {
            let d_out = ds.view().insert_axis(Axis(1)).to_owned();
            let (g_out, d_e) = self.output.backward(&out.embedding.view(), &d_out);
            grad.output = g_out;
            d_emb += &d_e;
        }
        let d_pre = Activation::LeakyRelu.backward(&out.cache.hidden_pre, &d_emb);
        let (g_hid, d_in) = self.hidden.backward(&out.cache.input.view(), &d_pre);
        grad.hidden = g_hid;
        (grad, d_in)
    }

    /// Per-row hidden slopes weighted by the output weights: `V[b, j] = w2_j * s'(h_bj)`.
    fn weighted_slopes(&self, hidden_pre: &Array2<f64>) -> Array2<f64> {
        let w2 = self.output.weight.column(0);
        let mut v = hidden_pre.mapv(|p| Activation::LeakyRelu.slope(p));
        for mut row in v.rows_mut() {
            row *= &w2;
        }
        v
    }

    /// Gradient of the score w.r.t. the joint input, one row per sample.
    pub fn input_gradient(&self, input: &ArrayView2<f64>) -> Result<Array2<f64>> {
        let pre = self.hidden.forward(input)?;
        let v = self.weighted_slopes(&pre);
        Ok(v.dot(&self.hidden.weight.t()))
    }

    /// Given `dL/dG` for `G = ∂score/∂input` evaluated at `input`, returns the
    /// parameter gradient. The hidden slopes are piecewise constant, so only
    /// the hidden weights and the output weights receive gradient.
    pub fn input_gradient_backward(
        &self,
        input: &ArrayView2<f64>,
        d_grad: &Array2<f64>,
    ) -> Result<CriticGrad> {
        let pre = self.hidden.forward(input)?;
        let slopes = pre.mapv(|p| Activation::LeakyRelu.slope(p));
        let v = self.weighted_slopes(&pre);
        let mut grad = CriticGrad::zeros_like(self);
        // G = V W1^T  =>  dW1 = dG^T V,  dV = dG W1
        grad.hidden.weight = d_grad.t().dot(&v);
        let d_v = d_grad.dot(&self.hidden.weight);
        let d_w2 = (&d_v * &slopes).sum_axis(Axis(0));
        grad.output.weight.column_mut(0).assign(&d_w2);
        Ok(grad)
    }

    pub fn layers(&self) -> Vec<&Linear> {
        vec![&self.hidden, &self.output]
    }
}

// ---------------------------------------------------------------------------
// Classifier and centers

/// Linear softmax classifier over the seen classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub linear: Linear,
}

impl Classifier {
    pub fn n_classes(&self) -> usize {
        self.linear.fan_out()
    }

    pub fn forward(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(log_softmax(&self.linear.forward(x)?))
    }

    /// Backward from a gradient on the log-probabilities.
    pub fn backward(
        &self,
        x: &ArrayView2<f64>,
        log_probs: &Array2<f64>,
        d_log_probs: &Array2<f64>,
    ) -> (LinearGrad, Array2<f64>) {
        let d_logits = log_softmax_backward(log_probs, d_log_probs);
        self.linear.backward(x, &d_logits)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassCenters {
    /// `c_seen × embedding_dim`.
    pub centers: Array2<f64>,
    pub margin: f64,
}

impl ClassCenters {
    pub fn zeros(c_seen: usize, dim: usize, margin: f64) -> Self {
        ClassCenters {
            centers: Array2::zeros((c_seen, dim)),
            margin,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.centers.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centers.ncols()
    }
}

// ---------------------------------------------------------------------------
// Full model

#[derive(Debug, Clone, PartialEq)]
pub struct BmCoGan {
    pub dims: ModelDims,
    pub generator: Generator,
    pub regressors: Regressors,
    pub coupled: CoupledDiscriminator,
    pub critic: Critic,
    pub classifier: Classifier,
    pub centers: ClassCenters,
}

pub const DEFAULT_MARGIN: f64 = 1.0;

/// Deterministic initialization: Gaussian weights scaled by fan-in, zero
/// biases, zero centers.
pub fn init_model(dims: ModelDims, seed: u64) -> Result<BmCoGan> {
    dims.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (dx, a, dz) = (dims.dx, dims.a_dim, dims.noise_dim());
    let w = dims.widths;
    let t = dims.topology;

    let generator = Generator {
        hidden: Linear::gaussian(dz + a, w.generator_hidden, &mut rng),
        output: Linear::gaussian(w.generator_hidden, dx, &mut rng),
        output_unseen: t
            .coupled_generators
            .then(|| Linear::gaussian(w.generator_hidden, dx, &mut rng)),
    };
    let regressor = |rng: &mut ChaCha8Rng| Mlp {
        hidden: Linear::gaussian(dx, w.regressor_hidden, rng),
        output: Linear::gaussian(w.regressor_hidden, a, rng),
    };
    let seen = regressor(&mut rng);
    let unseen = (!t.shared_regressor).then(|| regressor(&mut rng));
    let regressors = Regressors { seen, unseen };
    let coupled = CoupledDiscriminator {
        stem_seen: Linear::gaussian(a, w.coupled_disc_hidden, &mut rng),
        stem_unseen: Linear::gaussian(a, w.coupled_disc_hidden, &mut rng),
        head: Linear::gaussian(w.coupled_disc_hidden, 1, &mut rng),
        head_unseen: t
            .separate_disc_heads
            .then(|| Linear::gaussian(w.coupled_disc_hidden, 1, &mut rng)),
    };
    let critic = Critic {
        hidden: Linear::gaussian(dx + a, w.critic_hidden, &mut rng),
        output: Linear::gaussian(w.critic_hidden, 1, &mut rng),
    };
    let classifier = Classifier {
        linear: Linear::gaussian(dx, dims.c_seen, &mut rng),
    };
    let centers = ClassCenters::zeros(dims.c_seen, w.critic_hidden, DEFAULT_MARGIN);
    let mut dims = dims;
    dims.dz = Some(dz);
    Ok(BmCoGan {
        dims,
        generator,
        regressors,
        coupled,
        critic,
        classifier,
        centers,
    })
}

impl BmCoGan {
    pub fn noise_dim(&self) -> usize {
        self.dims.noise_dim()
    }

    pub fn param_count(&self) -> usize {
        let mut layers = self.generator.layers();
        layers.extend(self.regressors.layers());
        layers.extend(self.coupled.layers());
        layers.extend(self.critic.layers());
        layers.push(&self.classifier.linear);
        layers.iter().map(|l| l.n_params()).sum()
    }

    pub fn generator_forward(
        &self,
        z: &ArrayView2<f64>,
        a: &ArrayView2<f64>,
        domain: Domain,
    ) -> Result<Array2<f64>> {
        ensure_shape(z.ncols() == self.noise_dim(), || {
            format!("noise width {} != {}", z.ncols(), self.noise_dim())
        })?;
        ensure_shape(a.ncols() == self.dims.a_dim, || {
            format!("semantic width {} != {}", a.ncols(), self.dims.a_dim)
        })?;
        Ok(self.generator.forward(z, a, domain)?.0)
    }

    pub fn regressor_forward(&self, x: &ArrayView2<f64>, domain: Domain) -> Result<Array2<f64>> {
        ensure_shape(x.ncols() == self.dims.dx, || {
            format!("feature width {} != {}", x.ncols(), self.dims.dx)
        })?;
        Ok(self.regressors.get(domain).forward(x)?.0)
    }

    pub fn coupled_discriminator_forward(
        &self,
        a: &ArrayView2<f64>,
        domain: Domain,
    ) -> Result<Array1<f64>> {
        ensure_shape(a.ncols() == self.dims.a_dim, || {
            format!("semantic width {} != {}", a.ncols(), self.dims.a_dim)
        })?;
        Ok(self.coupled.forward(a, domain)?.0)
    }

    pub fn critic_forward(
        &self,
        x: &ArrayView2<f64>,
        a: &ArrayView2<f64>,
    ) -> Result<(Array1<f64>, Array2<f64>)> {
        ensure_shape(
            x.ncols() == self.dims.dx && a.ncols() == self.dims.a_dim,
            || {
                format!(
                    "critic expects widths ({}, {}), got ({}, {})",
                    self.dims.dx,
                    self.dims.a_dim,
                    x.ncols(),
                    a.ncols()
                )
            },
        )?;
        let out = self.critic.forward(x, a)?;
        Ok((out.score, out.embedding))
    }

    pub fn classifier_forward(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        self.classifier.forward(x)
    }

    pub fn export(&self, out: &mut TensorMap) {
        for (i, l) in self.generator.layers().iter().enumerate() {
            l.export(&format!("generator.{i}"), out);
        }
        for (i, l) in self.regressors.layers().iter().enumerate() {
            l.export(&format!("regressors.{i}"), out);
        }
        for (i, l) in self.coupled.layers().iter().enumerate() {
            l.export(&format!("coupled.{i}"), out);
        }
        for (i, l) in self.critic.layers().iter().enumerate() {
            l.export(&format!("critic.{i}"), out);
        }
        self.classifier.linear.export("classifier", out);
        out.insert_array2("centers", &self.centers.centers);
        out.insert("centers.margin", vec![1], vec![self.centers.margin]);
    }

    pub fn import(&mut self, map: &TensorMap) -> Result<()> {
        for (i, l) in self.generator.layers_mut().into_iter().enumerate() {
            l.import(&format!("generator.{i}"), map)?;
        }
        for (i, l) in self.regressors.layers_mut().into_iter().enumerate() {
            l.import(&format!("regressors.{i}"), map)?;
        }
        for (i, l) in self.coupled.layers_mut().into_iter().enumerate() {
            l.import(&format!("coupled.{i}"), map)?;
        }
        self.critic.hidden.import("critic.0", map)?;
        self.critic.output.import("critic.1", map)?;
        self.classifier.linear.import("classifier", map)?;
        self.centers.centers = map.array2("centers", self.centers.centers.dim())?;
        self.centers.margin = map.get("centers.margin")?.data[0];
        Ok(())
    }
}

/// Splits a joint `[x; a]` gradient into its feature and semantic parts.
pub fn split_joint(grad: &Array2<f64>, dx: usize) -> (Array2<f64>, Array2<f64>) {
    (
        grad.slice(s![.., ..dx]).to_owned(),
        grad.slice(s![.., dx..]).to_owned(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::RngExt;

    fn tiny_dims() -> ModelDims {
        let mut d = ModelDims::new(4, 3, 5);
        d.widths = LayerWidths {
            generator_hidden: 6,
            regressor_hidden: 5,
            coupled_disc_hidden: 4,
            critic_hidden: 7,
        };
        d
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
    }

    #[test]
    fn noise_dim_defaults_to_attribute_dim() {
        let m = init_model(tiny_dims(), 1).unwrap();
        assert_eq!(m.noise_dim(), 3);
        assert_eq!(m.generator.hidden.fan_in(), 6);
    }

    #[test]
    fn init_is_deterministic_and_counts_match() {
        let a = init_model(tiny_dims(), 9).unwrap();
        let b = init_model(tiny_dims(), 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.param_count(), a.dims.expected_param_count());
        let c = init_model(tiny_dims(), 10).unwrap();
        assert_ne!(a.generator, c.generator);
        assert!(a.centers.centers.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn param_count_formula_for_default_widths() {
        let dims = ModelDims::new(2048, 312, 150);
        let g = (312 + 312) * 4096 + 4096 + 4096 * 2048 + 2048;
        let r = 2 * (2048 * 1024 + 1024 + 1024 * 312 + 312);
        let cd = 2 * (312 * 256 + 256) + 257;
        let d = (2048 + 312) * 1024 + 1024 + 1025;
        let c = 2048 * 150 + 150;
        assert_eq!(dims.expected_param_count(), g + r + cd + d + c);
    }

    #[test]
    fn ablation_topologies_count_their_extra_layers() {
        let mut d = tiny_dims();
        d.topology = Topology {
            shared_regressor: true,
            separate_disc_heads: true,
            coupled_generators: true,
        };
        let m = init_model(d, 2).unwrap();
        assert_eq!(m.param_count(), d.expected_param_count());
        assert!(m.regressors.is_shared());
        assert!(!m.coupled.is_coupled());
    }

    #[test]
    fn rejects_zero_dims() {
        let mut d = tiny_dims();
        d.c_seen = 0;
        assert!(matches!(init_model(d, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn zero_generator_outputs_rectified_bias() {
        let mut m = init_model(tiny_dims(), 1).unwrap();
        m.generator.hidden = Linear::zeros(6, 6);
        m.generator.output = Linear::zeros(6, 4);
        m.generator.output.bias = array![0.5, -1.0, 2.0, 0.0];
        let z = random_matrix(5, 3, 1);
        let a = random_matrix(5, 3, 2);
        let out = m
            .generator_forward(&z.view(), &a.view(), Domain::Seen)
            .unwrap();
        for row in out.rows() {
            assert_eq!(row.to_vec(), vec![0.5, 0.0, 2.0, 0.0]);
        }
    }

    #[test]
    fn generator_output_is_non_negative_and_noise_sensitive() {
        let mut differing = 0;
        for seed in 0..100 {
            let m = init_model(tiny_dims(), seed).unwrap();
            let a = random_matrix(1, 3, seed + 1000);
            let z1 = random_matrix(1, 3, seed + 2000);
            let z2 = random_matrix(1, 3, seed + 3000);
            let o1 = m
                .generator_forward(&z1.view(), &a.view(), Domain::Seen)
                .unwrap();
            let o2 = m
                .generator_forward(&z2.view(), &a.view(), Domain::Seen)
                .unwrap();
            assert!(o1.iter().chain(o2.iter()).all(|&v| v >= 0.0));
            if o1 != o2 {
                differing += 1;
            }
        }
        // all-zero outputs for both draws are possible but rare at this width
        assert!(differing >= 95, "only {differing} of 100 seeds differ");
    }

    #[test]
    fn generator_rejects_wrong_widths() {
        let m = init_model(tiny_dims(), 1).unwrap();
        let z = random_matrix(2, 4, 1);
        let a = random_matrix(2, 3, 2);
        assert!(matches!(
            m.generator_forward(&z.view(), &a.view(), Domain::Seen),
            Err(Error::Shape(_))
        ));
        let z = random_matrix(3, 3, 1);
        assert!(matches!(
            m.generator_forward(&z.view(), &a.view(), Domain::Seen),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn regressor_identity_fixture_and_routing() {
        let mut d = tiny_dims();
        d.dx = 3;
        d.widths.regressor_hidden = 3;
        let mut m = init_model(d, 4).unwrap();
        // positive inputs pass the leaky rectifier unchanged
        let eye = Array2::eye(3);
        m.regressors.seen.hidden = Linear {
            weight: eye.clone(),
            bias: Array1::zeros(3),
        };
        m.regressors.seen.output = Linear {
            weight: eye,
            bias: Array1::zeros(3),
        };
        let x = array![[0.1, 0.2, 0.3], [1.0, 2.0, 3.0]];
        let out = m.regressor_forward(&x.view(), Domain::Seen).unwrap();
        assert_eq!(out, x);
        let u = m.regressor_forward(&x.view(), Domain::Unseen).unwrap();
        assert_ne!(u, x);
        assert!("both".parse::<Domain>().is_err());
    }

    #[test]
    fn coupled_zero_disc_gives_zero_logit() {
        let mut m = init_model(tiny_dims(), 1).unwrap();
        m.coupled.stem_seen = Linear::zeros(3, 4);
        m.coupled.stem_unseen = Linear::zeros(3, 4);
        m.coupled.head = Linear::zeros(4, 1);
        let a = random_matrix(6, 3, 3);
        for d in [Domain::Seen, Domain::Unseen] {
            let l = m.coupled_discriminator_forward(&a.view(), d).unwrap();
            assert!(l.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn coupled_branches_share_the_final_layer() {
        let mut m = init_model(tiny_dims(), 5).unwrap();
        let feats = random_matrix(4, 4, 8);
        let s = m.coupled.head_forward(&feats.view(), Domain::Seen).unwrap();
        let u = m
            .coupled
            .head_forward(&feats.view(), Domain::Unseen)
            .unwrap();
        assert_eq!(s, u);
        assert!(std::ptr::eq(
            m.coupled.head_for(Domain::Seen),
            m.coupled.head_for(Domain::Unseen)
        ));

        let a = random_matrix(4, 3, 9);
        let before = m
            .coupled_discriminator_forward(&a.view(), Domain::Unseen)
            .unwrap();
        m.coupled.head_for_mut(Domain::Seen).bias[0] += 0.25;
        let after = m
            .coupled_discriminator_forward(&a.view(), Domain::Unseen)
            .unwrap();
        for (b, a) in before.iter().zip(after.iter()) {
            assert!((a - b - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn critic_linear_fixture_and_purity() {
        let mut d = tiny_dims();
        d.widths.critic_hidden = 7; // dx + A
        let mut m = init_model(d, 6).unwrap();
        m.critic.hidden = Linear {
            weight: Array2::eye(7),
            bias: Array1::zeros(7),
        };
        let w = array![0.5, -0.5, 0.5, -0.5, 0.0, 0.0, 0.0];
        m.critic.output = Linear {
            weight: w.clone().insert_axis(Axis(1)),
            bias: array![0.0],
        };
        // non-negative inputs keep the hidden layer linear
        let x = array![[0.2, 0.4, 0.1, 0.9]];
        let a = array![[0.3, 0.3, 0.7]];
        let (score, k) = m.critic_forward(&x.view(), &a.view()).unwrap();
        let joint = concatenate(Axis(1), &[x.view(), a.view()]).unwrap();
        assert!((score[0] - joint.row(0).dot(&w)).abs() < 1e-15);
        assert_eq!(k, joint);
        let (score2, k2) = m.critic_forward(&x.view(), &a.view()).unwrap();
        assert_eq!(score, score2);
        assert_eq!(k, k2);
    }

    #[test]
    fn classifier_zero_weights_is_uniform() {
        let mut m = init_model(tiny_dims(), 1).unwrap();
        m.classifier.linear = Linear::zeros(4, 5);
        let lp = m
            .classifier_forward(&random_matrix(3, 4, 1).view())
            .unwrap();
        for &v in lp.iter() {
            assert!((v - (0.2f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn classifier_saturates_on_large_logit() {
        let mut m = init_model(tiny_dims(), 1).unwrap();
        m.classifier.linear = Linear::zeros(4, 5);
        m.classifier.linear.bias = array![1e3, -1e3, -1e3, -1e3, -1e3];
        let lp = m
            .classifier_forward(&random_matrix(1, 4, 1).view())
            .unwrap();
        assert!((lp[[0, 0]].exp() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn export_import_round_trip() {
        let m = init_model(tiny_dims(), 12).unwrap();
        let mut map = TensorMap::new();
        m.export(&mut map);
        let mut other = init_model(tiny_dims(), 13).unwrap();
        other.import(&map).unwrap();
        assert_eq!(m, other);
    }
}
