//! Optimization loop.
//!
//! One outer step runs, in order: `n_critic` Wasserstein critic updates, one
//! update of the semantic discriminators, a generator + regressor update on
//! group 1 and a generator update on group 2 together with an update of the
//! critic's hidden layer on the push/pull and center terms, and finally the
//! center update.

mod checkpoint;
mod config;
mod log;

use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::datasets::{epoch_permutation, make_batch, Batch, GzslDataset};
use crate::error::{Error, Result};
use crate::losses::{
    assemble_objectives, center_loss_grad, coupled_adversarial_loss, coupled_disc_grad,
    coupled_gen_grad, discrimination_loss_grad, gradient_penalty_with_eps, regression_loss_grad,
    sample_contrast_labels, sample_interpolation, seen_classifier_loss_grad, update_centers,
    wgan_losses, LossReport, LossTerms, LossWeights,
};
use crate::model::{
    init_model, split_joint, BmCoGan, Classifier, Domain, GeneratorGrad, ModelDims, RegressorGrads,
};
use crate::nn::{log_softmax, Adam, AdamConfig, Linear, LinearGrad};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{
    config_hash, Ablation, ClassifierConfig, GeneratorUpdate, TrainConfig,
    DEFAULT_GENERATOR_UPDATES,
};
pub use log::{format_log_header, format_log_line};

/// Standard-normal matrix.
pub fn noise<R: rand::Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

fn finite(term: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::numeric(term))
    }
}

// ---------------------------------------------------------------------------
// Classifier pretraining

/// Trains the linear seen-class classifier on real training features with
/// cross-entropy. Deterministic under `seed`.
pub fn pretrain_classifier(
    dataset: &GzslDataset,
    cfg: &ClassifierConfig,
    seed: u64,
) -> Result<Classifier> {
    let x = dataset.train_features();
    let y = dataset.train_labels();
    pretrain_classifier_on(&x.view(), &y, dataset.c_seen(), cfg, seed)
}

pub fn pretrain_classifier_on(
    x: &ArrayView2<f64>,
    y: &[usize],
    n_classes: usize,
    cfg: &ClassifierConfig,
    seed: u64,
) -> Result<Classifier> {
    if y.is_empty() {
        return Err(Error::Argument(
            "classifier pretraining: training set is empty".into(),
        ));
    }
    if n_classes < 2 {
        return Err(Error::Argument(format!(
            "classifier pretraining needs at least two classes, got {n_classes}"
        )));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Argument(
            "classifier batch size must be at least 1".into(),
        ));
    }
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!(
            "{} rows for {} labels",
            x.nrows(),
            y.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(7);
    let mut clf = Classifier {
        linear: Linear::gaussian(x.ncols(), n_classes, &mut rng),
    };
    let mut adam = Adam::new(AdamConfig::new(cfg.lr, 0.5, 0.999), &[&clf.linear]);
    for epoch in 0..cfg.epochs {
        let order = epoch_permutation(y.len(), seed, epoch as u64);
        for chunk in order.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
            let lp = clf.forward(&xb.view())?;
            let (value, d_lp) = seen_classifier_loss_grad(&lp.view(), &yb)?;
            finite("classifier pretraining loss", value)?;
            let (grad, _) = clf.backward(&xb.view(), &lp, &d_lp);
            adam.step(&mut [&mut clf.linear], &[&grad])?;
        }
    }
    Ok(clf)
}

/// Fraction of rows whose arg-max matches the label.
pub fn accuracy(log_probs: &Array2<f64>, y: &[usize]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let hits = log_probs
        .rows()
        .into_iter()
        .zip(y)
        .filter(|(row, &label)| argmax(row.iter().copied()) == label)
        .count();
    hits as f64 / y.len() as f64
}

pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

// ---------------------------------------------------------------------------
// State

/// Optimizer state, one per parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizers {
    /// Critic, both layers, Wasserstein objective.
    pub critic: Adam,
    /// Critic hidden layer, push/pull and center terms.
    pub critic_embed: Adam,
    /// Generator on group 1 (and on the summed objective in combined mode).
    pub generator_g1: Adam,
    /// Generator on group 2.
    pub generator_g2: Adam,
    pub regressors: Adam,
    pub coupled: Adam,
}

impl Optimizers {
    fn new(model: &BmCoGan, cfg: &TrainConfig) -> Self {
        let main = AdamConfig::new(cfg.lr_main, cfg.adam_beta1, cfg.adam_beta2);
        let aux = AdamConfig::new(cfg.lr_aux, cfg.adam_beta1, cfg.adam_beta2);
        Optimizers {
            critic: Adam::new(main, &model.critic.layers()),
            critic_embed: Adam::new(main, &[&model.critic.hidden]),
            generator_g1: Adam::new(main, &model.generator.layers()),
            generator_g2: Adam::new(main, &model.generator.layers()),
            regressors: Adam::new(aux, &model.regressors.layers()),
            coupled: Adam::new(aux, &model.coupled.layers()),
        }
    }

    const PREFIXES: [&'static str; 6] = [
        "adam.critic",
        "adam.critic_embed",
        "adam.generator_g1",
        "adam.generator_g2",
        "adam.regressors",
        "adam.coupled",
    ];

    fn all(&self) -> [&Adam; 6] {
        [
            &self.critic,
            &self.critic_embed,
            &self.generator_g1,
            &self.generator_g2,
            &self.regressors,
            &self.coupled,
        ]
    }

    fn all_mut(&mut self) -> [&mut Adam; 6] {
        [
            &mut self.critic,
            &mut self.critic_embed,
            &mut self.generator_g1,
            &mut self.generator_g2,
            &mut self.regressors,
            &mut self.coupled,
        ]
    }
}

/// Everything needed to continue a run bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub config: TrainConfig,
    pub model: BmCoGan,
    pub optimizers: Optimizers,
    /// Completed outer steps.
    pub step: u64,
    pub rng: ChaCha8Rng,
    pub history: Vec<LossReport>,
}

impl TrainState {
    /// Fresh model plus a pretrained, frozen seen classifier.
    pub fn new(dataset: &GzslDataset, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        dataset.validate()?;
        let mut dims = ModelDims::new(dataset.dx(), dataset.a_dim(), dataset.c_seen());
        dims.dz = config.dz;
        dims.widths = config.widths;
        dims.topology = config.ablation.topology();
        let mut model = init_model(dims, config.seed)?;
        model.centers.margin = config.weights.delta;
        model.classifier = pretrain_classifier(dataset, &config.classifier, config.seed)?;
        Ok(Self::from_model(model, config))
    }

    /// Wraps an existing model with fresh optimizers and RNG.
    pub fn from_model(model: BmCoGan, config: &TrainConfig) -> Self {
        let optimizers = Optimizers::new(&model, config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        TrainState {
            config: config.clone(),
            model,
            optimizers,
            step: 0,
            rng,
            history: Vec::new(),
        }
    }

    /// Training batch for the given outer step: the `(step mod E)`-th chunk of
    /// the permutation for epoch `step / E`.
    pub fn batch_for_step(&self, dataset: &GzslDataset, step: u64) -> Result<Batch> {
        let n = dataset.split.train.len();
        if n == 0 {
            return Err(Error::Argument("training split is empty".into()));
        }
        let per_epoch = self.config.steps_per_epoch(n) as u64;
        let epoch = step / per_epoch;
        let within = (step % per_epoch) as usize;
        let order = epoch_permutation(n, self.config.seed, epoch);
        let bs = self.config.batch_size;
        let end = ((within + 1) * bs).min(n);
        make_batch(dataset, &order[within * bs..end])
    }

    /// Draws `n` unseen semantic rows uniformly with replacement.
    pub fn sample_unseen_semantics(
        &mut self,
        dataset: &GzslDataset,
        n: usize,
    ) -> Result<Array2<f64>> {
        let cu = dataset.c_unseen();
        if cu == 0 {
            return Err(Error::Argument("dataset has no unseen classes".into()));
        }
        let labels: Vec<usize> = (0..n)
            .map(|_| dataset.c_seen() + self.rng.random_range(0..cu))
            .collect();
        dataset.semantics.rows_for(&labels)
    }

    /// One outer step on the next batch.
    pub fn advance(&mut self, dataset: &GzslDataset) -> Result<LossReport> {
        let batch = self.batch_for_step(dataset, self.step)?;
        let a_u = self.sample_unseen_semantics(dataset, batch.labels.len())?;
        self.train_step(&batch, &a_u)
    }

    fn draw_noise(&mut self, rows: usize) -> Array2<f64> {
        let dz = self.model.noise_dim();
        noise(rows, dz, &mut self.rng)
    }

    /// One outer step on an explicit seen batch and unseen semantic batch.
    pub fn train_step(&mut self, batch: &Batch, a_unseen: &Array2<f64>) -> Result<LossReport> {
        let n = batch.labels.len();
        if n == 0 {
            return Err(Error::Argument("empty batch".into()));
        }
        if a_unseen.nrows() == 0 || a_unseen.ncols() != self.model.dims.a_dim {
            return Err(Error::Shape(format!(
                "unseen semantic batch has shape {:?}",
                a_unseen.dim()
            )));
        }
        let ablation = self.config.ablation;
        let weights = self.config.effective_weights();
        let x = &batch.features;
        let a_s = &batch.semantics;
        let a_u = a_unseen;

        // (i) critic
        let (mut critic_loss, mut gp_value) = (0.0, 0.0);
        if ablation.uses_l_g2() {
            for _ in 0..self.config.n_critic {
                let (c, g) = self.critic_update(x, a_s)?;
                critic_loss = c;
                gp_value = g;
            }
        }

        // (ii) semantic discriminators on real vs reconstructed semantics
        let z_s = self.draw_noise(n);
        let z_u = self.draw_noise(a_u.nrows());
        let model = &self.model;
        let (fake_s, g_cache_s) =
            model
                .generator
                .forward(&z_s.view(), &a_s.view(), Domain::Seen)?;
        let (fake_u, g_cache_u) =
            model
                .generator
                .forward(&z_u.view(), &a_u.view(), Domain::Unseen)?;
        let (rec_s, r_cache_s) = model.regressors.get(Domain::Seen).forward(&fake_s.view())?;
        let (rec_u, r_cache_u) = model
            .regressors
            .get(Domain::Unseen)
            .forward(&fake_u.view())?;
        let coupled_disc_loss = self.coupled_update(a_s, a_u, &rec_s, &rec_u)?;

        // (iii) group 1
        let model = &self.model;
        let (lr_s, lr_cache_s) = model.coupled.forward(&rec_s.view(), Domain::Seen)?;
        let (lr_u, lr_cache_u) = model.coupled.forward(&rec_u.view(), Domain::Unseen)?;
        let (real_logit_s, _) = model.coupled.forward(&a_s.view(), Domain::Seen)?;
        let (real_logit_u, _) = model.coupled.forward(&a_u.view(), Domain::Unseen)?;
        let adv = coupled_adversarial_loss(
            &real_logit_s.view(),
            &lr_s.view(),
            &real_logit_u.view(),
            &lr_u.view(),
        )?;
        let l_g1 = finite("L_G1", adv.gen_loss)?;
        let (d_ls, d_lu) = coupled_gen_grad(&lr_s.view(), &lr_u.view());
        let mut scratch = model.coupled.zero_grad();
        let d_rec_adv_s =
            model
                .coupled
                .backward(&lr_cache_s, &(d_ls * weights.lambda1), &mut scratch);
        let d_rec_adv_u =
            model
                .coupled
                .backward(&lr_cache_u, &(d_lu * weights.lambda1), &mut scratch);
        let (mut l_reg_s, d_rec_reg_s) = regression_loss_grad(&a_s.view(), &rec_s.view())?;
        let (l_reg_u, d_rec_reg_u) = regression_loss_grad(&a_u.view(), &rec_u.view())?;
        finite("L_Reg_s", l_reg_s)?;
        finite("L_Reg_u", l_reg_u)?;
        let mut reg_grads = RegressorGrads::zeros_like(&model.regressors);
        let (rg_s, d_fake_s) = model
            .regressors
            .get(Domain::Seen)
            .backward(&r_cache_s, &(d_rec_adv_s + d_rec_reg_s));
        let (rg_u, d_fake_u) = model
            .regressors
            .get(Domain::Unseen)
            .backward(&r_cache_u, &(d_rec_adv_u + d_rec_reg_u));
        reg_grads.accumulate(Domain::Seen, &rg_s);
        if self.config.reg_on_real {
            let regressor = model.regressors.get(Domain::Seen);
            let (rec_real, cache) = regressor.forward(&x.view())?;
            let (v, d_rec) = regression_loss_grad(&a_s.view(), &rec_real.view())?;
            l_reg_s += finite("L_Reg_s", v)?;
            reg_grads.accumulate(Domain::Seen, &regressor.backward(&cache, &d_rec).0);
        }
        reg_grads.accumulate(Domain::Unseen, &rg_u);
        let (mut g1_grad, _) = model.generator.backward(&g_cache_s, &d_fake_s);
        g1_grad.add_assign(&model.generator.backward(&g_cache_u, &d_fake_u).0);

        self.optimizers
            .regressors
            .step(&mut self.model.regressors.layers_mut(), &reg_grads.parts())?;
        let combined = self.config.generator_update == GeneratorUpdate::Combined;
        if !combined {
            self.optimizers
                .generator_g1
                .step(&mut self.model.generator.layers_mut(), &g1_grad.parts())?;
        }

        // (iv) group 2
        let g2 = self.group2(batch, a_u, &weights)?;
        let mut gen_grad = g2.generator;
        if combined {
            gen_grad.add_assign(&g1_grad);
            self.optimizers
                .generator_g1
                .step(&mut self.model.generator.layers_mut(), &gen_grad.parts())?;
        } else {
            self.optimizers
                .generator_g2
                .step(&mut self.model.generator.layers_mut(), &gen_grad.parts())?;
        }
        if weights.lambda_d > 0.0 || weights.lambda_cen > 0.0 {
            self.optimizers
                .critic_embed
                .step(&mut [&mut self.model.critic.hidden], &[&g2.critic_hidden])?;
        }

        // (v) centers follow the real seen embeddings
        if ablation.uses_l_cen() {
            update_centers(
                &mut self.model.centers,
                &g2.k_real.view(),
                &batch.labels,
                self.config.center_lr(),
            )?;
        }

        let terms = LossTerms {
            l_g1,
            l_reg_s,
            l_reg_u,
            l_g2: g2.l_g2,
            l_cls: g2.l_cls,
            l_d: g2.l_d,
            l_cen: g2.l_cen,
        };
        let mut report = assemble_objectives(terms, &weights)?;
        report.critic_loss = critic_loss;
        report.gradient_penalty = gp_value;
        report.coupled_disc_loss = coupled_disc_loss;
        self.step += 1;
        self.history.push(report);
        Ok(report)
    }

    /// One Wasserstein critic update; returns (critic loss, penalty).
    fn critic_update(&mut self, x: &Array2<f64>, a_s: &Array2<f64>) -> Result<(f64, f64)> {
        let n = x.nrows();
        let z = self.draw_noise(n);
        let eps = sample_interpolation(n, &mut self.rng);
        let model = &self.model;
        let fake = model
            .generator
            .forward(&z.view(), &a_s.view(), Domain::Seen)?
            .0;
        let real_out = model.critic.forward(&x.view(), &a_s.view())?;
        let fake_out = model.critic.forward(&fake.view(), &a_s.view())?;
        let (gp, gp_grad) = gradient_penalty_with_eps(
            &model.critic,
            &x.view(),
            &fake.view(),
            &a_s.view(),
            &eps.view(),
        )?;
        let gp_coeff = self.config.weights.gp_coeff;
        let w = wgan_losses(&real_out.score.view(), &fake_out.score.view(), gp, gp_coeff)?;
        finite("critic loss", w.critic_loss)?;
        let inv = 1.0 / n as f64;
        let (mut grad, _) =
            model
                .critic
                .backward(&real_out, Some(&Array1::from_elem(n, -inv)), None);
        grad.add_assign(
            &model
                .critic
                .backward(&fake_out, Some(&Array1::from_elem(n, inv)), None)
                .0,
        );
        let mut gp_grad = gp_grad;
        gp_grad.scale(gp_coeff);
        grad.add_assign(&gp_grad);
        let critic = &mut self.model.critic;
        self.optimizers.critic.step(
            &mut [&mut critic.hidden, &mut critic.output],
            &[&grad.hidden, &grad.output],
        )?;
        Ok((w.critic_loss, gp))
    }

    /// One semantic-discriminator update; reconstructions are treated as constants.
    fn coupled_update(
        &mut self,
        a_s: &Array2<f64>,
        a_u: &Array2<f64>,
        rec_s: &Array2<f64>,
        rec_u: &Array2<f64>,
    ) -> Result<f64> {
        let coupled = &self.model.coupled;
        let (real_s, c_real_s) = coupled.forward(&a_s.view(), Domain::Seen)?;
        let (fake_s, c_fake_s) = coupled.forward(&rec_s.view(), Domain::Seen)?;
        let (real_u, c_real_u) = coupled.forward(&a_u.view(), Domain::Unseen)?;
        let (fake_u, c_fake_u) = coupled.forward(&rec_u.view(), Domain::Unseen)?;
        let adv = coupled_adversarial_loss(
            &real_s.view(),
            &fake_s.view(),
            &real_u.view(),
            &fake_u.view(),
        )?;
        finite("coupled discriminator loss", adv.disc_loss)?;
        let g = coupled_disc_grad(
            &real_s.view(),
            &fake_s.view(),
            &real_u.view(),
            &fake_u.view(),
        );
        let mut grad = coupled.zero_grad();
        coupled.backward(&c_real_s, &g.real_seen, &mut grad);
        coupled.backward(&c_fake_s, &g.fake_seen, &mut grad);
        coupled.backward(&c_real_u, &g.real_unseen, &mut grad);
        coupled.backward(&c_fake_u, &g.fake_unseen, &mut grad);
        self.optimizers
            .coupled
            .step(&mut self.model.coupled.layers_mut(), &grad.parts())?;
        Ok(adv.disc_loss)
    }

    fn group2(&mut self, batch: &Batch, a_u: &Array2<f64>, w: &LossWeights) -> Result<Group2> {
        let n = batch.labels.len();
        let m = a_u.nrows();
        let z_s = self.draw_noise(n);
        let z_u = self.draw_noise(m);
        let contrast = if w.lambda_cen > 0.0 {
            let doubled: Vec<usize> = batch.labels.iter().chain(&batch.labels).copied().collect();
            sample_contrast_labels(&doubled, self.model.dims.c_seen, &mut self.rng)?
        } else {
            Vec::new()
        };
        let model = &self.model;
        let dx = model.dims.dx;
        let x = &batch.features;
        let a_s = &batch.semantics;
        let critic = &model.critic;

        let (fake_s, g_cache_s) =
            model
                .generator
                .forward(&z_s.view(), &a_s.view(), Domain::Seen)?;
        let (fake_u, g_cache_u) =
            model
                .generator
                .forward(&z_u.view(), &a_u.view(), Domain::Unseen)?;
        let real_out = critic.forward(&x.view(), &a_s.view())?;
        let fake_s_out = critic.forward(&fake_s.view(), &a_s.view())?;
        let fake_u_out = critic.forward(&fake_u.view(), &a_u.view())?;

        let width = critic.embedding_dim();
        let mut d_k_real = Array2::<f64>::zeros((n, width));
        let mut d_k_syn_s = Array2::<f64>::zeros((n, width));
        let mut d_k_syn_u = Array2::<f64>::zeros((m, width));
        let mut d_fake_s = Array2::<f64>::zeros(fake_s.dim());

        // conditional adversarial supervision
        let l_g2 = if w.lambda2 > 0.0 {
            let v = -fake_s_out.score.mean().unwrap_or(0.0);
            let d_score = Array1::from_elem(n, -w.lambda2 / n as f64);
            let (_, d_in) = critic.backward(&fake_s_out, Some(&d_score), None);
            d_fake_s += &d_in.slice(s![.., ..dx]);
            finite("L_G2", v)?
        } else {
            0.0
        };

        // frozen seen classifier
        let l_cls = if w.lambda_cls > 0.0 {
            let logits = model.classifier.linear.forward(&fake_s.view())?;
            let lp = log_softmax(&logits);
            let (v, d_lp) = seen_classifier_loss_grad(&lp.view(), &batch.labels)?;
            let (_, d_in) = model
                .classifier
                .backward(&fake_s.view(), &lp, &(d_lp * w.lambda_cls));
            d_fake_s += &d_in;
            finite("L_cls", v)?
        } else {
            0.0
        };

        // push/pull on critic embeddings
        let l_d = if w.lambda_d > 0.0 {
            let g = discrimination_loss_grad(
                &real_out.embedding.view(),
                &fake_s_out.embedding.view(),
                &fake_u_out.embedding.view(),
            )?;
            let mut d_real_repel = g.d_real_repel;
            let mut d_syn_unseen = g.d_syn_unseen;
            let norm = (d_real_repel
                .iter()
                .chain(d_syn_unseen.iter())
                .map(|v| v * v)
                .sum::<f64>())
            .sqrt();
            if norm > self.config.clip_norm {
                let f = self.config.clip_norm / norm;
                d_real_repel *= f;
                d_syn_unseen *= f;
            }
            d_k_real += &((g.d_real_attract + d_real_repel) * w.lambda_d);
            d_k_syn_s += &(g.d_syn_seen * w.lambda_d);
            d_k_syn_u += &(d_syn_unseen * w.lambda_d);
            finite("L_d", g.value)?
        } else {
            0.0
        };

        // center hinge over real and synthesized seen embeddings
        let l_cen = if w.lambda_cen > 0.0 {
            let k = concatenate(
                Axis(0),
                &[real_out.embedding.view(), fake_s_out.embedding.view()],
            )
            .expect("same width");
            let doubled: Vec<usize> = batch.labels.iter().chain(&batch.labels).copied().collect();
            let (v, d_k) = center_loss_grad(&k.view(), &doubled, &contrast, &model.centers)?;
            let d_k = d_k * w.lambda_cen;
            d_k_real += &d_k.slice(s![..n, ..]);
            d_k_syn_s += &d_k.slice(s![n.., ..]);
            finite("L_cen", v)?
        } else {
            0.0
        };

        // critic hidden layer: embedding terms only
        let mut critic_hidden = LinearGrad::zeros_like(&critic.hidden);
        let (g_r, _) = critic.backward(&real_out, None, Some(&d_k_real));
        let (g_s, d_in_s) = critic.backward(&fake_s_out, None, Some(&d_k_syn_s));
        let (g_u, d_in_u) = critic.backward(&fake_u_out, None, Some(&d_k_syn_u));
        for g in [&g_r, &g_s, &g_u] {
            critic_hidden.add_assign(&g.hidden);
        }
        d_fake_s += &split_joint(&d_in_s, dx).0;
        let d_fake_u = split_joint(&d_in_u, dx).0;

        let (mut generator, _) = model.generator.backward(&g_cache_s, &d_fake_s);
        generator.add_assign(&model.generator.backward(&g_cache_u, &d_fake_u).0);

        Ok(Group2 {
            l_g2,
            l_cls,
            l_d,
            l_cen,
            generator,
            critic_hidden,
            k_real: real_out.embedding,
        })
    }
}

struct Group2 {
    l_g2: f64,
    l_cls: f64,
    l_d: f64,
    l_cen: f64,
    generator: GeneratorGrad,
    critic_hidden: LinearGrad,
    k_real: Array2<f64>,
}

// ---------------------------------------------------------------------------
// Run loop

/// Where a run writes its side outputs. Everything is optional.
#[derive(Default)]
pub struct TrainOutputs<'a> {
    /// Directory for periodic and final checkpoints.
    pub checkpoint_dir: Option<PathBuf>,
    /// Receives the header and one line per outer step.
    pub log: Option<&'a mut dyn Write>,
}

/// File name of the checkpoint written after `step` outer steps.
pub fn checkpoint_name(step: u64) -> String {
    format!("step-{step:08}.ckpt")
}

pub const FINAL_CHECKPOINT: &str = "final.ckpt";

/// Trains from scratch for the configured number of epochs.
pub fn train(dataset: &GzslDataset, config: &TrainConfig) -> Result<TrainState> {
    train_with(dataset, config, &mut TrainOutputs::default())
}

pub fn train_with(
    dataset: &GzslDataset,
    config: &TrainConfig,
    out: &mut TrainOutputs<'_>,
) -> Result<TrainState> {
    let state = TrainState::new(dataset, config)?;
    if let Some(log) = out.log.as_deref_mut() {
        writeln!(log, "{}", format_log_header()).map_err(|e| Error::io("<log>", e))?;
    }
    let total = config.total_steps(dataset.split.train.len());
    run_until(dataset, state, total, out)
}

/// Continues `state` until `until_step` outer steps have been completed.
pub fn run_until(
    dataset: &GzslDataset,
    mut state: TrainState,
    until_step: u64,
    out: &mut TrainOutputs<'_>,
) -> Result<TrainState> {
    if let Some(dir) = &out.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    while state.step < until_step {
        let report = state.advance(dataset)?;
        if let Some(log) = out.log.as_deref_mut() {
            writeln!(log, "{}", format_log_line(state.step, &report))
                .map_err(|e| Error::io("<log>", e))?;
        }
        let every = state.config.checkpoint_every;
        if let Some(dir) = &out.checkpoint_dir {
            if every > 0 && state.step.is_multiple_of(every) {
                save_checkpoint(&state, dir.join(checkpoint_name(state.step)))?;
            }
        }
    }
    if let Some(dir) = &out.checkpoint_dir {
        save_checkpoint(&state, dir.join(FINAL_CHECKPOINT))?;
    }
    Ok(state)
}

/// Loads a checkpoint and trains it to the end of its configured schedule.
pub fn resume(
    dataset: &GzslDataset,
    checkpoint: impl AsRef<Path>,
    out: &mut TrainOutputs<'_>,
) -> Result<TrainState> {
    let state = load_checkpoint(checkpoint)?;
    let total = state.config.total_steps(dataset.split.train.len());
    run_until(dataset, state, total, out)
}

#[cfg(test)]
mod tests;
