//! Loss terms and the two-group objective.
//!
//! Every loss comes in two forms: a value-only function and a `*_grad`
//! variant that also returns the gradient with respect to its inputs.
//! Batch means are used throughout.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_shape, Error, Result};
use crate::model::{ClassCenters, Critic, CriticGrad};

fn check_finite<'a>(term: &str, values: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    if values.into_iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::numeric(term))
    }
}

fn same_shape(a: &ArrayView2<f64>, b: &ArrayView2<f64>, what: &str) -> Result<()> {
    ensure_shape(a.dim() == b.dim(), || {
        format!("{what}: shapes {:?} and {:?} differ", a.dim(), b.dim())
    })
}

// ---------------------------------------------------------------------------
// Regression

/// Batch mean of `‖a − ã‖²`.
pub fn regression_loss(a: &ArrayView2<f64>, a_hat: &ArrayView2<f64>) -> Result<f64> {
    Ok(regression_loss_grad(a, a_hat)?.0)
}

/// Value and gradient w.r.t. `a_hat`.
pub fn regression_loss_grad(
    a: &ArrayView2<f64>,
    a_hat: &ArrayView2<f64>,
) -> Result<(f64, Array2<f64>)> {
    same_shape(a, a_hat, "regression loss")?;
    let n = a.nrows().max(1) as f64;
    let diff = a_hat - a;
    let value = diff.iter().map(|d| d * d).sum::<f64>() / n;
    Ok((value, diff * (2.0 / n)))
}

// ---------------------------------------------------------------------------
// Coupled adversarial (logistic) loss

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledAdversarial {
    pub disc_loss: f64,
    pub gen_loss: f64,
}

/// Gradients of the discriminator loss w.r.t. each logit batch.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledDiscGrad {
    pub real_seen: Array1<f64>,
    pub fake_seen: Array1<f64>,
    pub real_unseen: Array1<f64>,
    pub fake_unseen: Array1<f64>,
}

fn mean(v: &ArrayView1<f64>) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.sum() / v.len() as f64
    }
}

/// Discriminator loss (negated log-likelihood of both domains) and the
/// non-saturating generator loss, in logit space.
pub fn coupled_adversarial_loss(
    real_seen: &ArrayView1<f64>,
    fake_seen: &ArrayView1<f64>,
    real_unseen: &ArrayView1<f64>,
    fake_unseen: &ArrayView1<f64>,
) -> Result<CoupledAdversarial> {
    for (name, v) in [
        ("coupled adversarial loss (real seen logits)", real_seen),
        ("coupled adversarial loss (fake seen logits)", fake_seen),
        ("coupled adversarial loss (real unseen logits)", real_unseen),
        ("coupled adversarial loss (fake unseen logits)", fake_unseen),
    ] {
        check_finite(name, v.iter())?;
    }
    // -log σ(l) = softplus(-l);  -log(1 - σ(l)) = softplus(l)
    let real_term = |v: &ArrayView1<f64>| mean(&v.mapv(|l| softplus(-l)).view());
    let fake_term = |v: &ArrayView1<f64>| mean(&v.mapv(softplus).view());
    let disc_loss = real_term(real_seen)
        + fake_term(fake_seen)
        + real_term(real_unseen)
        + fake_term(fake_unseen);
    let gen_loss = real_term(fake_seen) + real_term(fake_unseen);
    Ok(CoupledAdversarial {
        disc_loss,
        gen_loss,
    })
}

pub fn coupled_disc_grad(
    real_seen: &ArrayView1<f64>,
    fake_seen: &ArrayView1<f64>,
    real_unseen: &ArrayView1<f64>,
    fake_unseen: &ArrayView1<f64>,
) -> CoupledDiscGrad {
    let real = |v: &ArrayView1<f64>| {
        let n = v.len().max(1) as f64;
        v.mapv(|l| (sigmoid(l) - 1.0) / n)
    };
    let fake = |v: &ArrayView1<f64>| {
        let n = v.len().max(1) as f64;
        v.mapv(|l| sigmoid(l) / n)
    };
    CoupledDiscGrad {
        real_seen: real(real_seen),
        fake_seen: fake(fake_seen),
        real_unseen: real(real_unseen),
        fake_unseen: fake(fake_unseen),
    }
}

/// Gradient of the non-saturating generator loss w.r.t. the fake logits.
pub fn coupled_gen_grad(
    fake_seen: &ArrayView1<f64>,
    fake_unseen: &ArrayView1<f64>,
) -> (Array1<f64>, Array1<f64>) {
    let g = |v: &ArrayView1<f64>| {
        let n = v.len().max(1) as f64;
        v.mapv(|l| (sigmoid(l) - 1.0) / n)
    };
    (g(fake_seen), g(fake_unseen))
}

// ---------------------------------------------------------------------------
// Wasserstein critic

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WganLosses {
    pub critic_loss: f64,
    pub gen_loss: f64,
}

pub fn wgan_losses(
    real_scores: &ArrayView1<f64>,
    fake_scores: &ArrayView1<f64>,
    gp_value: f64,
    gp_coeff: f64,
) -> Result<WganLosses> {
    check_finite("wgan losses (real scores)", real_scores.iter())?;
    check_finite("wgan losses (fake scores)", fake_scores.iter())?;
    check_finite("wgan losses (gradient penalty)", [gp_value].iter())?;
    if gp_value < 0.0 {
        return Err(Error::Argument(
            "gradient penalty must be non-negative".into(),
        ));
    }
    let fake = mean(fake_scores);
    Ok(WganLosses {
        critic_loss: fake - mean(real_scores) + gp_coeff * gp_value,
        gen_loss: -fake,
    })
}

/// Draws one interpolation weight per row from U[0, 1).
pub fn sample_interpolation<R: Rng + ?Sized>(rows: usize, rng: &mut R) -> Array1<f64> {
    Array1::from_shape_simple_fn(rows, || rng.random::<f64>())
}

fn interpolate(
    x_real: &ArrayView2<f64>,
    x_fake: &ArrayView2<f64>,
    a: &ArrayView2<f64>,
    eps: &ArrayView1<f64>,
) -> Result<Array2<f64>> {
    same_shape(x_real, x_fake, "gradient penalty")?;
    ensure_shape(
        a.nrows() == x_real.nrows() && eps.len() == x_real.nrows(),
        || "gradient penalty: batch sizes differ".to_string(),
    )?;
    let mut x_hat = x_fake.to_owned();
    for ((mut row, real), &e) in x_hat
        .rows_mut()
        .into_iter()
        .zip(x_real.rows())
        .zip(eps.iter())
    {
        row.zip_mut_with(&real, |f, &r| *f = e * r + (1.0 - e) * *f);
    }
    Ok(ndarray::concatenate(Axis(1), &[x_hat.view(), a.view()]).expect("rows checked"))
}

/// Penalty `E[(‖∇_{x̂,a} D‖ − 1)²]` at `x̂ = εx + (1−ε)x̃` with explicit `ε`,
/// plus its gradient w.r.t. the critic parameters.
pub fn gradient_penalty_with_eps(
    critic: &Critic,
    x_real: &ArrayView2<f64>,
    x_fake: &ArrayView2<f64>,
    a: &ArrayView2<f64>,
    eps: &ArrayView1<f64>,
) -> Result<(f64, CriticGrad)> {
    let joint = interpolate(x_real, x_fake, a, eps)?;
    ensure_shape(joint.ncols() == critic.input_dim(), || {
        format!(
            "critic expects width {}, got {}",
            critic.input_dim(),
            joint.ncols()
        )
    })?;
    let grads = critic.input_gradient(&joint.view())?;
    let n = joint.nrows().max(1) as f64;
    let mut value = 0.0;
    let mut d_grads = Array2::zeros(grads.dim());
    for (g, mut d) in grads.rows().into_iter().zip(d_grads.rows_mut()) {
        let norm = g.dot(&g).sqrt();
        value += (norm - 1.0).powi(2);
        if norm > 0.0 {
            let coeff = 2.0 * (norm - 1.0) / (norm * n);
            d.assign(&g.mapv(|v| v * coeff));
        }
    }
    let grad = critic.input_gradient_backward(&joint.view(), &d_grads)?;
    Ok((value / n, grad))
}

/// Gradient penalty with interpolation weights drawn from `seed`.
pub fn gradient_penalty(
    critic: &Critic,
    x_real: &ArrayView2<f64>,
    x_fake: &ArrayView2<f64>,
    a: &ArrayView2<f64>,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = sample_interpolation(x_real.nrows(), &mut rng);
    Ok(gradient_penalty_with_eps(critic, x_real, x_fake, a, &eps.view())?.0)
}

// ---------------------------------------------------------------------------
// Discrimination (push/pull) loss

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminationGrad {
    pub value: f64,
    pub attract: f64,
    pub repel: f64,
    /// Gradients of the attraction term.
    pub d_real_attract: Array2<f64>,
    pub d_syn_seen: Array2<f64>,
    /// Gradients of the repulsion term (`−mean pairwise distance`).
    pub d_real_repel: Array2<f64>,
    pub d_syn_unseen: Array2<f64>,
}

fn check_discrimination_shapes(
    k_real_seen: &ArrayView2<f64>,
    k_syn_seen: &ArrayView2<f64>,
    k_syn_unseen: &ArrayView2<f64>,
) -> Result<()> {
    same_shape(k_real_seen, k_syn_seen, "discrimination loss (seen pair)")?;
    ensure_shape(k_syn_unseen.ncols() == k_real_seen.ncols(), || {
        format!(
            "discrimination loss: embedding widths {} and {} differ",
            k_real_seen.ncols(),
            k_syn_unseen.ncols()
        )
    })
}

/// Row-matched attraction minus all-pairs repulsion.
pub fn discrimination_loss(
    k_real_seen: &ArrayView2<f64>,
    k_syn_seen: &ArrayView2<f64>,
    k_syn_unseen: &ArrayView2<f64>,
) -> Result<f64> {
    Ok(discrimination_loss_grad(k_real_seen, k_syn_seen, k_syn_unseen)?.value)
}

pub fn discrimination_loss_grad(
    k_real_seen: &ArrayView2<f64>,
    k_syn_seen: &ArrayView2<f64>,
    k_syn_unseen: &ArrayView2<f64>,
) -> Result<DiscriminationGrad> {
    check_discrimination_shapes(k_real_seen, k_syn_seen, k_syn_unseen)?;
    let n = k_real_seen.nrows();
    let m = k_syn_unseen.nrows();
    let width = k_real_seen.ncols();

    let (attract, d_real_attract, d_syn_seen) = if n == 0 {
        (0.0, Array2::zeros((0, width)), Array2::zeros((0, width)))
    } else {
        let diff = k_real_seen - k_syn_seen;
        let v = diff.iter().map(|d| d * d).sum::<f64>() / n as f64;
        let d_real = &diff * (2.0 / n as f64);
        let d_syn = -&d_real;
        (v, d_real, d_syn)
    };

    // mean_ij ‖r_i − u_j‖² = mean‖r‖² + mean‖u‖² − 2 r̄·ū
    let (repel_dist, d_real_repel, d_syn_unseen) = if n == 0 || m == 0 {
        (0.0, Array2::zeros((n, width)), Array2::zeros((m, width)))
    } else {
        let r_mean = k_real_seen.mean_axis(Axis(0)).expect("non-empty");
        let u_mean = k_syn_unseen.mean_axis(Axis(0)).expect("non-empty");
        let r_sq = k_real_seen.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let u_sq = k_syn_unseen.iter().map(|v| v * v).sum::<f64>() / m as f64;
        let dist = r_sq + u_sq - 2.0 * r_mean.dot(&u_mean);
        // d(−dist)/dr_i = −(2/n)(r_i − ū);  d(−dist)/du_j = −(2/m)(u_j − r̄)
        let d_r = (&k_real_seen.to_owned() - &u_mean) * (-2.0 / n as f64);
        let d_u = (&k_syn_unseen.to_owned() - &r_mean) * (-2.0 / m as f64);
        (dist, d_r, d_u)
    };

    Ok(DiscriminationGrad {
        value: attract - repel_dist,
        attract,
        repel: repel_dist,
        d_real_attract,
        d_syn_seen,
        d_real_repel,
        d_syn_unseen,
    })
}

// ---------------------------------------------------------------------------
// Center loss

/// Contrast labels drawn uniformly from the seen classes other than `y`.
pub fn sample_contrast_labels<R: Rng + ?Sized>(
    y: &[usize],
    c_seen: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if c_seen < 2 {
        return Err(Error::Argument(
            "contrast labels need at least two seen classes".into(),
        ));
    }
    y.iter()
        .map(|&label| {
            if label >= c_seen {
                return Err(Error::Argument(format!("label {label} outside seen set")));
            }
            let r = rng.random_range(0..c_seen - 1);
            Ok(if r >= label { r + 1 } else { r })
        })
        .collect()
}

fn check_center_inputs(
    k: &ArrayView2<f64>,
    y: &[usize],
    y_prime: &[usize],
    centers: &ClassCenters,
) -> Result<()> {
    ensure_shape(k.nrows() == y.len() && y.len() == y_prime.len(), || {
        format!(
            "center loss: {} embeddings, {} labels, {} contrast labels",
            k.nrows(),
            y.len(),
            y_prime.len()
        )
    })?;
    ensure_shape(k.ncols() == centers.dim(), || {
        format!(
            "center loss: embedding width {} != center width {}",
            k.ncols(),
            centers.dim()
        )
    })?;
    for (i, (&a, &b)) in y.iter().zip(y_prime).enumerate() {
        if a == b {
            return Err(Error::Argument(format!(
                "row {i}: contrast label equals true label {a}"
            )));
        }
        if a >= centers.n_classes() || b >= centers.n_classes() {
            return Err(Error::Argument(format!(
                "row {i}: label outside the seen set"
            )));
        }
    }
    Ok(())
}

/// Batch mean of `max(0, Δ + ‖k − C_y‖² − ‖k − C_y'‖²)`.
pub fn center_loss(
    k: &ArrayView2<f64>,
    y: &[usize],
    y_prime: &[usize],
    centers: &ClassCenters,
) -> Result<f64> {
    Ok(center_loss_grad(k, y, y_prime, centers)?.0)
}

/// Value and gradient w.r.t. `k`.
pub fn center_loss_grad(
    k: &ArrayView2<f64>,
    y: &[usize],
    y_prime: &[usize],
    centers: &ClassCenters,
) -> Result<(f64, Array2<f64>)> {
    check_center_inputs(k, y, y_prime, centers)?;
    let n = k.nrows();
    let mut grad = Array2::zeros(k.dim());
    if n == 0 {
        return Ok((0.0, grad));
    }
    let mut total = 0.0;
    for (i, row) in k.rows().into_iter().enumerate() {
        let c_pos = centers.centers.row(y[i]);
        let c_neg = centers.centers.row(y_prime[i]);
        let d_pos = &row - &c_pos;
        let d_neg = &row - &c_neg;
        let h = centers.margin + d_pos.dot(&d_pos) - d_neg.dot(&d_neg);
        if h > 0.0 {
            total += h;
            // d/dk = 2(k − C_y) − 2(k − C_y') = 2(C_y' − C_y)
            let g = (&c_neg - &c_pos) * (2.0 / n as f64);
            grad.row_mut(i).assign(&g);
        }
    }
    Ok((total / n as f64, grad))
}

/// Moves each touched center by `lr · Σ(C_y − k_i) / (1 + count_y)` toward its
/// batch embeddings; untouched centers are left alone.
pub fn update_centers(
    centers: &mut ClassCenters,
    k: &ArrayView2<f64>,
    y: &[usize],
    center_lr: f64,
) -> Result<()> {
    if center_lr.is_nan() || center_lr <= 0.0 {
        return Err(Error::Argument(
            "center learning rate must be positive".into(),
        ));
    }
    ensure_shape(k.nrows() == y.len() && k.ncols() == centers.dim(), || {
        "update_centers: embedding batch does not match labels/centers".to_string()
    })?;
    if let Some(&bad) = y.iter().find(|&&l| l >= centers.n_classes()) {
        return Err(Error::Argument(format!("label {bad} outside seen set")));
    }
    let c = centers.n_classes();
    let mut delta = Array2::<f64>::zeros(centers.centers.dim());
    let mut counts = vec![0usize; c];
    for (row, &label) in k.rows().into_iter().zip(y) {
        let mut d = delta.row_mut(label);
        d += &centers.centers.row(label);
        d -= &row;
        counts[label] += 1;
    }
    for (label, &count) in counts.iter().enumerate() {
        if count > 0 {
            let step = delta
                .row(label)
                .mapv(|v| v * center_lr / (1.0 + count as f64));
            let mut c_row = centers.centers.row_mut(label);
            c_row -= &step;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Seen classifier loss

/// Mean negative log-probability of the true labels.
pub fn seen_classifier_loss(log_probs: &ArrayView2<f64>, y: &[usize]) -> Result<f64> {
    Ok(seen_classifier_loss_grad(log_probs, y)?.0)
}

/// Value and gradient w.r.t. the log-probabilities.
pub fn seen_classifier_loss_grad(
    log_probs: &ArrayView2<f64>,
    y: &[usize],
) -> Result<(f64, Array2<f64>)> {
    ensure_shape(log_probs.nrows() == y.len(), || {
        format!(
            "{} rows of log-probabilities for {} labels",
            log_probs.nrows(),
            y.len()
        )
    })?;
    let c = log_probs.ncols();
    if let Some(&bad) = y.iter().find(|&&l| l >= c) {
        return Err(Error::Argument(format!(
            "label {bad} out of range for {c} classes"
        )));
    }
    let n = y.len();
    let mut grad = Array2::zeros(log_probs.dim());
    if n == 0 {
        return Ok((0.0, grad));
    }
    let mut total = 0.0;
    for (i, &label) in y.iter().enumerate() {
        total -= log_probs[[i, label]];
        grad[[i, label]] = -1.0 / n as f64;
    }
    Ok((total / n as f64, grad))
}

// ---------------------------------------------------------------------------
// Objective assembly

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda_d: f64,
    pub lambda_cls: f64,
    pub lambda_cen: f64,
    pub gp_coeff: f64,
    pub delta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: 2.0,
            lambda2: 0.8,
            lambda_d: 1.0,
            lambda_cls: 0.2,
            lambda_cen: 0.1,
            gp_coeff: 10.0,
            delta: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let non_neg = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda_d", self.lambda_d),
            ("lambda_cls", self.lambda_cls),
            ("lambda_cen", self.lambda_cen),
            ("gp_coeff", self.gp_coeff),
        ];
        for (name, v) in non_neg {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!(
                    "weight `{name}` must be a non-negative real"
                )));
            }
        }
        if !self.delta.is_finite() || self.delta <= 0.0 {
            return Err(Error::Config("margin `delta` must be positive".into()));
        }
        Ok(())
    }
}

/// The individual terms of one outer step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub l_g1: f64,
    pub l_reg_s: f64,
    pub l_reg_u: f64,
    pub l_g2: f64,
    pub l_cls: f64,
    pub l_d: f64,
    pub l_cen: f64,
}

/// All terms of one step plus the two weighted group totals and the
/// adversaries' own losses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub terms: LossTerms,
    pub group1: f64,
    pub group2: f64,
    pub critic_loss: f64,
    pub gradient_penalty: f64,
    pub coupled_disc_loss: f64,
}

impl LossReport {
    /// Tab-separated values in log-column order.
    pub fn log_fields(&self) -> [f64; 9] {
        let t = &self.terms;
        [
            t.l_g1,
            t.l_reg_s,
            t.l_reg_u,
            t.l_g2,
            t.l_cls,
            t.l_d,
            t.l_cen,
            self.group1,
            self.group2,
        ]
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.log_fields().to_vec();
        v.extend([
            self.critic_loss,
            self.gradient_penalty,
            self.coupled_disc_loss,
        ]);
        v
    }

    pub fn from_slice(v: &[f64]) -> Option<Self> {
        if v.len() != 12 {
            return None;
        }
        Some(LossReport {
            terms: LossTerms {
                l_g1: v[0],
                l_reg_s: v[1],
                l_reg_u: v[2],
                l_g2: v[3],
                l_cls: v[4],
                l_d: v[5],
                l_cen: v[6],
            },
            group1: v[7],
            group2: v[8],
            critic_loss: v[9],
            gradient_penalty: v[10],
            coupled_disc_loss: v[11],
        })
    }
}

pub const LOG_COLUMNS: [&str; 10] = [
    "step", "L_G1", "L_Reg_s", "L_Reg_u", "L_G2", "L_cls", "L_d", "L_cen", "group1", "group2",
];

/// Group 1: `λ1·L_G1 + L_Reg^s + L_Reg^u`; group 2: `λ2·L_G2 + λcls·L_cls + λd·L_d + λcen·L_cen`.
pub fn assemble_objectives(terms: LossTerms, weights: &LossWeights) -> Result<LossReport> {
    let named = [
        ("L_G1", terms.l_g1),
        ("L_Reg_s", terms.l_reg_s),
        ("L_Reg_u", terms.l_reg_u),
        ("L_G2", terms.l_g2),
        ("L_cls", terms.l_cls),
        ("L_d", terms.l_d),
        ("L_cen", terms.l_cen),
    ];
    for (name, v) in named {
        if !v.is_finite() {
            return Err(Error::numeric(name));
        }
    }
    let group1 = weights.lambda1 * terms.l_g1 + terms.l_reg_s + terms.l_reg_u;
    let group2 = weights.lambda2 * terms.l_g2
        + weights.lambda_cls * terms.l_cls
        + weights.lambda_d * terms.l_d
        + weights.lambda_cen * terms.l_cen;
    Ok(LossReport {
        terms,
        group1,
        group2,
        ..LossReport::default()
    })
}
