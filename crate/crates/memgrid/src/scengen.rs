//! Renewable scenario generation with a conditional least-squares GAN,
//! plus a Monte-Carlo baseline and the coverage/width indices used to
//! compare them. All curves here are normalized to [0, 1]; callers scale
//! by rated capacity at the boundary.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::config::GanTrainConfig;
use crate::neural::{
    adam_step_network, Activation, AdamState, DenseNetwork, LayerSpec, Matrix,
};

#[derive(Debug, Error)]
pub enum ScenGenError {
    #[error("paired series error: {0}")]
    Data(String),
    #[error("training diverged at epoch {0}: non-finite parameters")]
    Diverged(usize),
    #[error("empty scenario set")]
    Empty,
}

/// Day-ahead forecast curves paired with realized curves, one row per day.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSeries {
    pub forecast: Vec<Vec<f64>>,
    pub actual: Vec<Vec<f64>>,
}

impl PairedSeries {
    pub fn horizon(&self) -> usize {
        self.forecast.first().map_or(0, Vec::len)
    }

    pub fn days(&self) -> usize {
        self.forecast.len()
    }

    pub fn validate(&self) -> Result<(), ScenGenError> {
        if self.forecast.is_empty() {
            return Err(ScenGenError::Data("no days".into()));
        }
        if self.forecast.len() != self.actual.len() {
            return Err(ScenGenError::Data(format!(
                "{} forecast days vs {} actual days",
                self.forecast.len(),
                self.actual.len()
            )));
        }
        let t = self.horizon();
        for (day, (f, a)) in self.forecast.iter().zip(&self.actual).enumerate() {
            if f.len() != t || a.len() != t {
                return Err(ScenGenError::Data(format!(
                    "day {day}: ragged lengths {}/{} (expected {t})",
                    f.len(),
                    a.len()
                )));
            }
            for v in f.iter().chain(a.iter()) {
                if !v.is_finite() || *v < 0.0 || *v > 1.0 {
                    return Err(ScenGenError::Data(format!(
                        "day {day}: value {v} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Per-hour standard deviation of the forecast error, for the
    /// Monte-Carlo baseline.
    pub fn error_std(&self) -> Vec<f64> {
        let t = self.horizon();
        let n = self.days() as f64;
        let mut out = vec![0.0; t];
        for h in 0..t {
            let mean: f64 = self
                .forecast
                .iter()
                .zip(&self.actual)
                .map(|(f, a)| a[h] - f[h])
                .sum::<f64>()
                / n;
            let var: f64 = self
                .forecast
                .iter()
                .zip(&self.actual)
                .map(|(f, a)| {
                    let e = a[h] - f[h] - mean;
                    e * e
                })
                .sum::<f64>()
                / n;
            out[h] = var.sqrt();
        }
        out
    }
}

/// Mean-squared ("least squares") discriminator objective: real outputs
/// are pulled toward 1, fake outputs toward 0.
pub fn discriminator_loss(d_real: &[f64], d_fake: &[f64]) -> f64 {
    let nr = d_real.len().max(1) as f64;
    let nf = d_fake.len().max(1) as f64;
    let real: f64 = d_real.iter().map(|d| (d - 1.0) * (d - 1.0)).sum::<f64>() / nr;
    let fake: f64 = d_fake.iter().map(|d| d * d).sum::<f64>() / nf;
    0.5 * real + 0.5 * fake
}

/// Generator objective: fake outputs pulled toward 1.
pub fn generator_loss(d_fake: &[f64]) -> f64 {
    let nf = d_fake.len().max(1) as f64;
    0.5 * d_fake.iter().map(|d| (d - 1.0) * (d - 1.0)).sum::<f64>() / nf
}

/// Trained conditional generator plus its adversary.
#[derive(Debug, Clone)]
pub struct GanModel {
    pub generator: DenseNetwork,
    pub discriminator: DenseNetwork,
    pub noise_dim: usize,
    pub horizon: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GanEpochStats {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
}

fn noise_matrix<R: Rng>(rows: usize, dim: usize, rng: &mut R) -> Matrix {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut m = Matrix::zeros(rows, dim);
    for v in &mut m.data {
        *v = normal.sample(rng);
    }
    m
}

fn rows_matrix(data: &[Vec<f64>], indices: &[usize]) -> Matrix {
    Matrix::from_rows(indices.iter().map(|&i| data[i].clone()).collect())
}

const STD_EPS: f64 = 1e-8;
const STD_FEATURE_SCALE: f64 = 8.0;

/// Per-hour standard deviation of the residual (curve minus forecast)
/// across the batch. Appended to every discriminator input row so a batch
/// with unrealistically low (or high) dispersion around its forecasts is
/// detectably fake; this is what stops the generator from collapsing onto
/// the conditional mean and ignoring its noise input. Residuals rather
/// than raw curves are used so inter-day forecast variety does not mask
/// the noise level.
fn batch_std_feature(curves: &Matrix, cond: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let (n, t) = (curves.rows, curves.cols);
    let mut means = vec![0.0; t];
    let mut stds = vec![0.0; t];
    for h in 0..t {
        let mean: f64 =
            (0..n).map(|r| curves.get(r, h) - cond.get(r, h)).sum::<f64>() / n as f64;
        let var: f64 = (0..n)
            .map(|r| {
                let e = curves.get(r, h) - cond.get(r, h) - mean;
                e * e
            })
            .sum::<f64>()
            / n as f64;
        means[h] = mean;
        stds[h] = (var + STD_EPS).sqrt();
    }
    (means, stds)
}

fn with_std_columns(input: &Matrix, stds: &[f64]) -> Matrix {
    let scaled: Vec<f64> = stds.iter().map(|s| s * STD_FEATURE_SCALE).collect();
    let cols = Matrix::from_rows(vec![scaled; input.rows]);
    input.hcat(&cols)
}

/// Shift on the raw scale head so the initial per-hour spread starts
/// small: softplus(0 + SCALE_SHIFT) is about 0.05.
const SCALE_SHIFT: f64 = -3.0;

/// Weight of the generator's residual-dispersion matching term.
const FEATURE_MATCH_WEIGHT: f64 = 1.0;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Largest forecast offset the generator's mean head can express.
const OFFSET_RANGE: f64 = 0.5;

/// The generator network emits, per hour, a raw offset `m` and raw scale
/// `s`; a scenario perturbs the forecast:
/// x = f + OFFSET_RANGE * tanh(m) + softplus(s + SCALE_SHIFT) * eps,
/// with eps standard normal. The residual parameterization starts the
/// untrained generator near the forecast, and the reparameterized
/// sampling lets the adversarial gradient reach both heads so the noise
/// cannot be silently ignored.
fn compose_scenarios(out: &Matrix, cond: &Matrix, eps: &Matrix) -> Matrix {
    let (n, t) = (eps.rows, eps.cols);
    let mut x = Matrix::zeros(n, t);
    for r in 0..n {
        for h in 0..t {
            let m = out.get(r, h);
            let sraw = out.get(r, t + h);
            x.set(
                r,
                h,
                cond.get(r, h)
                    + OFFSET_RANGE * m.tanh()
                    + softplus(sraw + SCALE_SHIFT) * eps.get(r, h),
            );
        }
    }
    x
}

/// Chain rule through `compose_scenarios`: maps dL/dx (n x t) to the
/// upstream gradient for the generator's 2t raw outputs.
fn scenario_upstream(out: &Matrix, eps: &Matrix, dl_dx: &Matrix) -> Matrix {
    let (n, t) = (eps.rows, eps.cols);
    let mut up = Matrix::zeros(n, 2 * t);
    for r in 0..n {
        for h in 0..t {
            let g = dl_dx.get(r, h);
            let th = out.get(r, h).tanh();
            up.set(r, h, g * OFFSET_RANGE * (1.0 - th * th));
            let d_soft = sigmoid(out.get(r, t + h) + SCALE_SHIFT);
            up.set(r, t + h, g * eps.get(r, h) * d_soft);
        }
    }
    up
}

/// Build generator/discriminator for the given horizon.
///
/// The generator maps noise concatenated with the forecast condition to a
/// raw (mean, scale) pair per hour; `compose_scenarios` turns those into
/// sample curves. The discriminator scores (condition, curve, batch-std)
/// rows with a linear output and no normalization.
pub fn build_gan(cfg: &GanTrainConfig, horizon: usize, rng: &mut impl Rng) -> GanModel {
    let mut g_specs: Vec<LayerSpec> = cfg
        .hidden_dims
        .iter()
        .map(|&d| LayerSpec::new(d, Activation::LeakyRelu(0.2)))
        .collect();
    g_specs.push(LayerSpec::new(2 * horizon, Activation::Identity));
    let generator = DenseNetwork::new(cfg.noise_dim + horizon, &g_specs, rng);

    let mut d_specs: Vec<LayerSpec> = cfg
        .hidden_dims
        .iter()
        .map(|&d| LayerSpec::new(d, Activation::LeakyRelu(0.2)))
        .collect();
    d_specs.push(LayerSpec::new(1, Activation::Identity));
    // +horizon for the minibatch standard-deviation features.
    let discriminator = DenseNetwork::new(3 * horizon, &d_specs, rng);

    GanModel {
        generator,
        discriminator,
        noise_dim: cfg.noise_dim,
        horizon,
    }
}

/// Alternating single-step adversarial training: per minibatch, one Adam
/// step on the discriminator, then one on the generator.
pub fn train_gan(
    cfg: &GanTrainConfig,
    data: &PairedSeries,
    rng: &mut ChaCha8Rng,
) -> Result<(GanModel, Vec<GanEpochStats>), ScenGenError> {
    data.validate()?;
    let horizon = data.horizon();
    let mut model = build_gan(cfg, horizon, rng);
    let mut g_opt = AdamState::new(
        cfg.learning_rate,
        cfg.beta1,
        cfg.beta2,
        model.generator.param_count(),
    );
    let mut d_opt = AdamState::new(
        cfg.learning_rate,
        cfg.beta1,
        cfg.beta2,
        model.discriminator.param_count(),
    );
    let mut order: Vec<usize> = (0..data.days()).collect();
    let mut stats = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut d_loss_sum = 0.0;
        let mut g_loss_sum = 0.0;
        let mut batches = 0.0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let cond = rows_matrix(&data.forecast, chunk);
            let real = rows_matrix(&data.actual, chunk);
            let n = chunk.len();

            // Discriminator step on real and detached fake samples.
            let z = noise_matrix(n, cfg.noise_dim, rng);
            let g_out = model
                .generator
                .forward_train(&z.hcat(&cond))
                .expect("g fwd")
                .output()
                .clone();
            let eps = noise_matrix(n, horizon, rng);
            let fake = compose_scenarios(&g_out, &cond, &eps);
            let (_, real_stds) = batch_std_feature(&real, &cond);
            let real_cache = model
                .discriminator
                .forward_train(&with_std_columns(&cond.hcat(&real), &real_stds))
                .expect("d fwd real");
            let d_real = real_cache.output().clone();
            let mut up_real = Matrix::zeros(n, 1);
            for r in 0..n {
                up_real.set(r, 0, (d_real.get(r, 0) - 1.0) / n as f64);
            }
            let (grads_real, _) = model.discriminator.backward(&real_cache, &up_real);
            let (_, fake_stds) = batch_std_feature(&fake, &cond);
            let fake_cache = model
                .discriminator
                .forward_train(&with_std_columns(&cond.hcat(&fake), &fake_stds))
                .expect("d fwd fake");
            let d_fake = fake_cache.output().clone();
            let mut up_fake = Matrix::zeros(n, 1);
            for r in 0..n {
                up_fake.set(r, 0, d_fake.get(r, 0) / n as f64);
            }
            let (grads_fake, _) = model.discriminator.backward(&fake_cache, &up_fake);
            let d_grads: Vec<f64> = grads_real
                .iter()
                .zip(&grads_fake)
                .map(|(a, b)| a + b)
                .collect();
            adam_step_network(&mut model.discriminator, &d_grads, &mut d_opt);
            d_loss_sum += discriminator_loss(
                &d_real.data,
                &d_fake.data,
            );

            // Generator step through the updated discriminator.
            let z = noise_matrix(n, cfg.noise_dim, rng);
            let g_cache = model
                .generator
                .forward_train(&z.hcat(&cond))
                .expect("g fwd 2");
            let eps = noise_matrix(n, horizon, rng);
            let fake = compose_scenarios(g_cache.output(), &cond, &eps);
            let (g_means, g_stds) = batch_std_feature(&fake, &cond);
            let dg_cache = model
                .discriminator
                .forward_train(&with_std_columns(&cond.hcat(&fake), &g_stds))
                .expect("d fwd g");
            let d_out = dg_cache.output().clone();
            let mut up_g = Matrix::zeros(n, 1);
            for r in 0..n {
                up_g.set(r, 0, (d_out.get(r, 0) - 1.0) / n as f64);
            }
            let (_, d_input) = model.discriminator.backward(&dg_cache, &up_g);
            let mut d_fake_cols = d_input.columns(horizon, 2 * horizon);
            // Feature matching on the residual dispersion: besides fooling
            // the discriminator, the generator minimizes
            // sum_h (std_fake_h - std_real_h)^2, which anchors the noise
            // level to the data and prevents slow variance collapse.
            let (_, target_stds) = batch_std_feature(&real, &cond);
            // The std features also depend on the fake batch; route their
            // gradients back into the per-element curve gradients:
            // d std_h / d x[r][h] = (x[r][h] - mean_h) / (n * std_h).
            for h in 0..horizon {
                let feat_upstream: f64 =
                    (0..n).map(|r| d_input.get(r, 2 * horizon + h)).sum();
                let match_upstream =
                    FEATURE_MATCH_WEIGHT * 2.0 * (g_stds[h] - target_stds[h]);
                for r in 0..n {
                    let d_std = (fake.get(r, h) - cond.get(r, h) - g_means[h])
                        / (n as f64 * g_stds[h]);
                    let v = d_fake_cols.get(r, h)
                        + (feat_upstream * STD_FEATURE_SCALE + match_upstream) * d_std;
                    d_fake_cols.set(r, h, v);
                }
            }
            let up_2t = scenario_upstream(g_cache.output(), &eps, &d_fake_cols);
            let (g_grads, _) = model.generator.backward(&g_cache, &up_2t);
            adam_step_network(&mut model.generator, &g_grads, &mut g_opt);
            g_loss_sum += generator_loss(&d_out.data);
            batches += 1.0;
        }
        if !model.generator.params_finite() || !model.discriminator.params_finite() {
            return Err(ScenGenError::Diverged(epoch));
        }
        stats.push(GanEpochStats {
            epoch,
            d_loss: d_loss_sum / batches,
            g_loss: g_loss_sum / batches,
        });
    }
    Ok((model, stats))
}

/// Sample `count` scenario curves conditioned on one forecast, clipped to
/// [0, 1]. Deterministic for a given generator state and seeded rng.
pub fn generate(
    model: &GanModel,
    forecast: &[f64],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let cond = Matrix::from_rows(vec![forecast.to_vec(); count]);
    let z = noise_matrix(count, model.noise_dim, rng);
    let out = model
        .generator
        .forward_eval(&z.hcat(&cond))
        .expect("generator forward");
    let eps = noise_matrix(count, model.horizon, rng);
    let x = compose_scenarios(&out, &cond, &eps);
    (0..count)
        .map(|r| x.row(r).iter().map(|v| v.clamp(0.0, 1.0)).collect())
        .collect()
}

/// Baseline sampler: forecast plus independent per-hour Gaussian error,
/// clipped to [0, 1].
pub fn monte_carlo_baseline(
    forecast: &[f64],
    error_std: &[f64],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            forecast
                .iter()
                .zip(error_std)
                .map(|(&f, &s)| {
                    let e = if s > 0.0 {
                        Normal::new(0.0, s).unwrap().sample(rng)
                    } else {
                        0.0
                    };
                    (f + e).clamp(0.0, 1.0)
                })
                .collect()
        })
        .collect()
}

fn hourly_envelope(scenarios: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>), ScenGenError> {
    let t = scenarios.first().ok_or(ScenGenError::Empty)?.len();
    let mut lo = vec![f64::INFINITY; t];
    let mut hi = vec![f64::NEG_INFINITY; t];
    for s in scenarios {
        for h in 0..t {
            lo[h] = lo[h].min(s[h]);
            hi[h] = hi[h].max(s[h]);
        }
    }
    Ok((lo, hi))
}

/// Fraction of observed points covered by the scenario envelope: for each
/// actual curve and hour, a hit when the value lies within the per-hour
/// [min, max] of the scenarios. Higher is better.
pub fn coverage_index(
    actuals: &[Vec<f64>],
    scenarios: &[Vec<f64>],
) -> Result<f64, ScenGenError> {
    if actuals.is_empty() {
        return Err(ScenGenError::Empty);
    }
    let (lo, hi) = hourly_envelope(scenarios)?;
    let mut hits = 0usize;
    let mut total = 0usize;
    for a in actuals {
        for (h, &v) in a.iter().enumerate() {
            total += 1;
            if v >= lo[h] && v <= hi[h] {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / total as f64)
}

/// Mean per-hour width of the scenario envelope. Between two sets with
/// equal coverage, the narrower one is more informative.
pub fn envelope_index(scenarios: &[Vec<f64>]) -> Result<f64, ScenGenError> {
    let (lo, hi) = hourly_envelope(scenarios)?;
    let t = lo.len() as f64;
    Ok(lo.iter().zip(&hi).map(|(l, h)| h - l).sum::<f64>() / t)
}
