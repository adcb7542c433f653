//! Variational autoencoder over proxy data — the attack's sample factory.
//!
//! Encoder: `d → hidden (ReLU) → (μ, log σ²)`, decoder: `L → hidden (ReLU)
//! → d (sigmoid)`. Trained by minimizing the negative ELBO: Bernoulli
//! reconstruction loss plus the closed-form KL divergence to the unit
//! Gaussian prior, with the usual `z = μ + e^{lv/2}·ε` reparameterization.
//! Once trained, only [`LatentGenerator::decode`] matters: any finite latent
//! point maps to a valid sample with every value inside `(0,1)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::path::Path;

use crate::checkpoint::{read_container, write_container, Container};
use crate::data::{LabeledDataset, Role};
use crate::error::{Error, Result};
use crate::nn::AdamState;
use crate::tensor::{add_bias_rows, matmul_a_bt, matmul_at_b, sum_rows, Tensor};

/// Decoder pre-sigmoid clamp. Keeps outputs strictly inside (0,1) in f64
/// and bounds the reconstruction loss.
const LOGIT_CLAMP: f64 = 36.0;
/// Latent clamp inside `decode`, so even absurd (but finite) search points
/// cannot overflow the decoder.
const LATENT_CLAMP: f64 = 1e6;

/// Anything that maps latent vectors to data-space samples.
pub trait LatentGenerator {
    fn latent_dim(&self) -> usize;
    fn sample_dim(&self) -> usize;
    /// Decodes one finite latent vector into a sample with values in (0,1).
    fn decode(&self, latent: &[f64]) -> Result<Vec<f64>>;
    /// Row-wise batch decode; must agree bitwise with [`Self::decode`].
    fn decode_batch(&self, latents: &Tensor) -> Result<Tensor> {
        let mut rows = Vec::with_capacity(latents.rows());
        for r in 0..latents.rows() {
            rows.push(self.decode(latents.row(r))?);
        }
        Tensor::from_rows(&rows)
    }
}

#[derive(Debug, Clone)]
pub struct VaeTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Vae {
    input_dim: usize,
    hidden_dim: usize,
    latent_dim: usize,
    enc_w: Tensor,
    enc_b: Tensor,
    mu_w: Tensor,
    mu_b: Tensor,
    lv_w: Tensor,
    lv_b: Tensor,
    dec_w1: Tensor,
    dec_b1: Tensor,
    dec_w2: Tensor,
    dec_b2: Tensor,
}

/// Number of encoder parameter tensors in the flat `[enc, dec]` ordering.
const ENCODER_TENSORS: usize = 6;

struct ForwardCache {
    h_enc: Tensor,
    mu: Tensor,
    logvar: Tensor,
    z: Tensor,
    h_dec: Tensor,
    logits: Tensor,
}

/// KL divergence contribution of one latent dimension:
/// `½(μ² + e^lv − 1 − lv)`.
pub(crate) fn kl_unit(mu: f64, logvar: f64) -> f64 {
    0.5 * (mu * mu + logvar.exp() - 1.0 - logvar)
}

/// `ln(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

impl Vae {
    pub fn new(input_dim: usize, hidden_dim: usize, latent_dim: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || latent_dim == 0 {
            return Err(Error::invalid("vae dimensions must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = |fan_in: usize, fan_out: usize| -> Tensor {
            let normal = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).unwrap();
            let data: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| normal.sample(&mut rng))
                .collect();
            Tensor::new(vec![fan_in, fan_out], data).unwrap()
        };
        Ok(Vae {
            input_dim,
            hidden_dim,
            latent_dim,
            enc_w: init(input_dim, hidden_dim),
            enc_b: Tensor::zeros(vec![hidden_dim]),
            mu_w: init(hidden_dim, latent_dim),
            mu_b: Tensor::zeros(vec![latent_dim]),
            lv_w: init(hidden_dim, latent_dim),
            lv_b: Tensor::zeros(vec![latent_dim]),
            dec_w1: init(latent_dim, hidden_dim),
            dec_b1: Tensor::zeros(vec![hidden_dim]),
            dec_w2: init(hidden_dim, input_dim),
            dec_b2: Tensor::zeros(vec![input_dim]),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    fn params(&self) -> [&Tensor; 10] {
        [
            &self.enc_w, &self.enc_b, &self.mu_w, &self.mu_b, &self.lv_w, &self.lv_b,
            &self.dec_w1, &self.dec_b1, &self.dec_w2, &self.dec_b2,
        ]
    }

    fn params_mut(&mut self) -> [&mut Tensor; 10] {
        [
            &mut self.enc_w, &mut self.enc_b, &mut self.mu_w, &mut self.mu_b, &mut self.lv_w,
            &mut self.lv_b, &mut self.dec_w1, &mut self.dec_b1, &mut self.dec_w2, &mut self.dec_b2,
        ]
    }

    /// Per-sample posterior parameters for one input row.
    pub fn encode(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if x.len() != self.input_dim {
            return Err(Error::shape(format!(
                "encode: input has {} features, vae expects {}",
                x.len(),
                self.input_dim
            )));
        }
        let xt = Tensor::new(vec![1, self.input_dim], x.to_vec())?;
        let mut h = xt.matmul(&self.enc_w)?;
        add_bias_rows(&mut h, &self.enc_b);
        for v in h.data_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let mut mu = h.matmul(&self.mu_w)?;
        add_bias_rows(&mut mu, &self.mu_b);
        let mut lv = h.matmul(&self.lv_w)?;
        add_bias_rows(&mut lv, &self.lv_b);
        Ok((mu.data().to_vec(), lv.data().to_vec()))
    }

    /// Mean-latent reconstruction of one input row.
    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (mu, _) = self.encode(x)?;
        self.decode(&mu)
    }

    /// `count × latent_dim` standard-normal draws.
    pub fn sample_prior(&self, count: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let data: Vec<f64> = (0..count * self.latent_dim)
            .map(|_| normal.sample(&mut rng))
            .collect();
        Tensor::new(vec![count, self.latent_dim], data).unwrap()
    }

    /// Full forward pass with the given frozen noise (`b × latent_dim`);
    /// returns the mean negative ELBO and the cache for backprop.
    fn forward_loss(&self, batch: &Tensor, noise: &Tensor) -> Result<(f64, ForwardCache)> {
        let b = batch.rows();
        let mut h_enc = batch.matmul(&self.enc_w)?;
        add_bias_rows(&mut h_enc, &self.enc_b);
        for v in h_enc.data_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let mut mu = h_enc.matmul(&self.mu_w)?;
        add_bias_rows(&mut mu, &self.mu_b);
        let mut logvar = h_enc.matmul(&self.lv_w)?;
        add_bias_rows(&mut logvar, &self.lv_b);

        let mut z = Tensor::zeros(vec![b, self.latent_dim]);
        for ((zv, (&m, &lv)), &e) in z
            .data_mut()
            .iter_mut()
            .zip(mu.data().iter().zip(logvar.data()))
            .zip(noise.data())
        {
            *zv = m + (0.5 * lv).exp() * e;
        }

        let mut h_dec = z.matmul(&self.dec_w1)?;
        add_bias_rows(&mut h_dec, &self.dec_b1);
        for v in h_dec.data_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let mut logits = h_dec.matmul(&self.dec_w2)?;
        add_bias_rows(&mut logits, &self.dec_b2);
        for v in logits.data_mut() {
            *v = v.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
        }

        // Bernoulli reconstruction: x·softplus(-z) + (1-x)·softplus(z),
        // summed per sample; KL added per latent dim; averaged over batch.
        let mut total = 0.0;
        for (&x, &t) in batch.data().iter().zip(logits.data()) {
            total += x * softplus(-t) + (1.0 - x) * softplus(t);
        }
        for (&m, &lv) in mu.data().iter().zip(logvar.data()) {
            total += kl_unit(m, lv);
        }
        let loss = total / b as f64;
        Ok((
            loss,
            ForwardCache {
                h_enc,
                mu,
                logvar,
                z,
                h_dec,
                logits,
            },
        ))
    }

    /// Analytic gradients for all ten parameter tensors in `params()` order.
    fn gradients(&self, batch: &Tensor, noise: &Tensor, cache: &ForwardCache) -> Result<Vec<Tensor>> {
        let b = batch.rows();
        let inv_b = 1.0 / b as f64;

        // d loss / d logits = (sigmoid(logit) - x) / b.
        let mut dlogits = Tensor::zeros(vec![b, self.input_dim]);
        for ((d, &t), &x) in dlogits
            .data_mut()
            .iter_mut()
            .zip(cache.logits.data())
            .zip(batch.data())
        {
            *d = (sigmoid(t) - x) * inv_b;
        }

        let d_dec_w2 = matmul_at_b(&cache.h_dec, &dlogits);
        let d_dec_b2 = sum_rows(&dlogits);
        let mut dh_dec = matmul_a_bt(&dlogits, &self.dec_w2);
        for (d, &h) in dh_dec.data_mut().iter_mut().zip(cache.h_dec.data()) {
            if h <= 0.0 {
                *d = 0.0;
            }
        }
        let d_dec_w1 = matmul_at_b(&cache.z, &dh_dec);
        let d_dec_b1 = sum_rows(&dh_dec);
        let dz = matmul_a_bt(&dh_dec, &self.dec_w1);

        // Reparameterization + KL contributions.
        let mut dmu = dz.clone();
        for (d, &m) in dmu.data_mut().iter_mut().zip(cache.mu.data()) {
            *d += m * inv_b;
        }
        let mut dlv = Tensor::zeros(vec![b, self.latent_dim]);
        for ((d, &dzv), (&lv, &e)) in dlv
            .data_mut()
            .iter_mut()
            .zip(dz.data())
            .zip(cache.logvar.data().iter().zip(noise.data()))
        {
            let sigma = (0.5 * lv).exp();
            *d = dzv * e * sigma * 0.5 + (lv.exp() - 1.0) * 0.5 * inv_b;
        }

        let d_mu_w = matmul_at_b(&cache.h_enc, &dmu);
        let d_mu_b = sum_rows(&dmu);
        let d_lv_w = matmul_at_b(&cache.h_enc, &dlv);
        let d_lv_b = sum_rows(&dlv);
        let mut dh_enc = matmul_a_bt(&dmu, &self.mu_w).add(&matmul_a_bt(&dlv, &self.lv_w))?;
        for (d, &h) in dh_enc.data_mut().iter_mut().zip(cache.h_enc.data()) {
            if h <= 0.0 {
                *d = 0.0;
            }
        }
        let d_enc_w = matmul_at_b(batch, &dh_enc);
        let d_enc_b = sum_rows(&dh_enc);

        Ok(vec![
            d_enc_w, d_enc_b, d_mu_w, d_mu_b, d_lv_w, d_lv_b, d_dec_w1, d_dec_b1, d_dec_w2,
            d_dec_b2,
        ])
    }

    /// Trains on proxy data, returning the per-epoch mean negative ELBO.
    /// Only proxy-role datasets are accepted: the generator must never see
    /// the victim's data.
    pub fn fit(&mut self, proxy: &LabeledDataset, cfg: &VaeTrainConfig) -> Result<Vec<f64>> {
        use rand::seq::SliceRandom;
        if proxy.role() != Role::Proxy {
            return Err(Error::invalid(format!(
                "generator trains on proxy data only, got role '{}'",
                proxy.role().as_str()
            )));
        }
        if proxy.dim() != self.input_dim {
            return Err(Error::shape(format!(
                "proxy rows have {} features, vae expects {}",
                proxy.dim(),
                self.input_dim
            )));
        }
        if cfg.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if proxy.is_empty() {
            return Err(Error::invalid("cannot fit on an empty dataset"));
        }
        let shapes: Vec<&[usize]> = self.params().iter().map(|t| t.shape()).collect();
        let mut opt = AdamState::new(cfg.learning_rate, &shapes);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let n = proxy.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut history = Vec::with_capacity(cfg.epochs);
        let mut global_step: u64 = 0;
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut weighted = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                let batch = crate::nn::gather_rows(proxy.images(), chunk);
                let noise_data: Vec<f64> = (0..chunk.len() * self.latent_dim)
                    .map(|_| normal.sample(&mut rng))
                    .collect();
                let noise = Tensor::new(vec![chunk.len(), self.latent_dim], noise_data)?;
                let (loss, cache) = self.forward_loss(&batch, &noise)?;
                global_step += 1;
                if !loss.is_finite() {
                    return Err(Error::Divergence {
                        step: global_step,
                        reason: format!("negative ELBO became {loss}"),
                    });
                }
                let grads = self.gradients(&batch, &noise, &cache)?;
                let mut params = self.params_mut();
                opt.apply(&mut params, &grads)?;
                weighted += loss * chunk.len() as f64;
            }
            history.push(weighted / n as f64);
        }
        Ok(history)
    }

    /// Worst relative error between analytic and central-difference
    /// gradients on a seeded 5% parameter subsample, with the
    /// reparameterization noise frozen. Returned as `(encoder, decoder)`.
    pub fn gradient_check(&mut self, batch: &Tensor, eps: f64, seed: u64) -> Result<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let noise_data: Vec<f64> = (0..batch.rows() * self.latent_dim)
            .map(|_| normal.sample(&mut rng))
            .collect();
        let noise = Tensor::new(vec![batch.rows(), self.latent_dim], noise_data)?;

        let (_, cache) = self.forward_loss(&batch.clone(), &noise)?;
        let grads = self.gradients(batch, &noise, &cache)?;

        let sizes: Vec<usize> = self.params().iter().map(|t| t.len()).collect();
        let enc_total: usize = sizes[..ENCODER_TENSORS].iter().sum();
        let dec_total: usize = sizes[ENCODER_TENSORS..].iter().sum();

        let mut worst = (0.0f64, 0.0f64);
        for (is_encoder, total, offset) in [
            (true, enc_total, 0usize),
            (false, dec_total, enc_total),
        ] {
            let count = (total / 20).max(1);
            let picks = crate::nn::sample_indices(total, count, &mut rng);
            for flat in picks {
                let flat = flat + offset;
                let (idx, off) = locate(&sizes, flat);
                let analytic = grads[idx].data()[off];
                let orig = self.params()[idx].data()[off];
                self.params_mut()[idx].data_mut()[off] = orig + eps;
                let plus = self.forward_loss(batch, &noise)?.0;
                self.params_mut()[idx].data_mut()[off] = orig - eps;
                let minus = self.forward_loss(batch, &noise)?.0;
                self.params_mut()[idx].data_mut()[off] = orig;
                let numeric = (plus - minus) / (2.0 * eps);
                let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
                if is_encoder {
                    worst.0 = worst.0.max(rel);
                } else {
                    worst.1 = worst.1.max(rel);
                }
            }
        }
        Ok(worst)
    }

    pub fn save(&self, path: &Path, extra_meta: &[(String, String)]) -> Result<()> {
        let mut c = Container::new();
        c.push_meta("kind", "vae");
        c.push_meta(
            "dims",
            format!("{},{},{}", self.input_dim, self.hidden_dim, self.latent_dim),
        );
        for (k, v) in extra_meta {
            c.push_meta(k.clone(), v.clone());
        }
        let names = [
            "enc_w", "enc_b", "mu_w", "mu_b", "lv_w", "lv_b", "dec_w1", "dec_b1", "dec_w2",
            "dec_b2",
        ];
        for (name, tensor) in names.iter().zip(self.params()) {
            c.push_tensor(*name, tensor.clone());
        }
        write_container(path, &c)
    }

    pub fn load(path: &Path) -> Result<Vae> {
        Ok(Vae::load_with_meta(path)?.0)
    }

    pub fn load_with_meta(path: &Path) -> Result<(Vae, Vec<(String, String)>)> {
        let display = path.display().to_string();
        let c = read_container(path)?;
        if c.meta("kind") != Some("vae") {
            return Err(Error::format(&display, "not a vae container"));
        }
        let dims: Vec<usize> = c
            .meta("dims")
            .ok_or_else(|| Error::format(&display, "missing dims metadata"))?
            .split(',')
            .map(|t| t.parse().map_err(|_| Error::format(&display, "bad dims metadata")))
            .collect::<Result<_>>()?;
        if dims.len() != 3 || dims.iter().any(|&d| d == 0) {
            return Err(Error::format(&display, "vae dims must be input,hidden,latent"));
        }
        let (input_dim, hidden_dim, latent_dim) = (dims[0], dims[1], dims[2]);
        let expect = |name: &str, shape: Vec<usize>| -> Result<Tensor> {
            let t = c.require(path, name)?;
            if t.shape() != shape.as_slice() {
                return Err(Error::format(
                    &display,
                    format!("tensor '{name}' has shape {:?}, expected {shape:?}", t.shape()),
                ));
            }
            Ok(t.clone())
        };
        let vae = Vae {
            input_dim,
            hidden_dim,
            latent_dim,
            enc_w: expect("enc_w", vec![input_dim, hidden_dim])?,
            enc_b: expect("enc_b", vec![hidden_dim])?,
            mu_w: expect("mu_w", vec![hidden_dim, latent_dim])?,
            mu_b: expect("mu_b", vec![latent_dim])?,
            lv_w: expect("lv_w", vec![hidden_dim, latent_dim])?,
            lv_b: expect("lv_b", vec![latent_dim])?,
            dec_w1: expect("dec_w1", vec![latent_dim, hidden_dim])?,
            dec_b1: expect("dec_b1", vec![hidden_dim])?,
            dec_w2: expect("dec_w2", vec![hidden_dim, input_dim])?,
            dec_b2: expect("dec_b2", vec![input_dim])?,
        };
        Ok((vae, c.meta))
    }
}

fn locate(sizes: &[usize], mut flat: usize) -> (usize, usize) {
    for (idx, &s) in sizes.iter().enumerate() {
        if flat < s {
            return (idx, flat);
        }
        flat -= s;
    }
    unreachable!("flat index out of range")
}

impl LatentGenerator for Vae {
    fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn sample_dim(&self) -> usize {
        self.input_dim
    }

    fn decode(&self, latent: &[f64]) -> Result<Vec<f64>> {
        if latent.len() != self.latent_dim {
            return Err(Error::shape(format!(
                "latent has {} dims, vae expects {}",
                latent.len(),
                self.latent_dim
            )));
        }
        if latent.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("latent vector contains non-finite values"));
        }
        let clamped: Vec<f64> = latent
            .iter()
            .map(|v| v.clamp(-LATENT_CLAMP, LATENT_CLAMP))
            .collect();
        let z = Tensor::new(vec![1, self.latent_dim], clamped)?;
        let mut h = z.matmul(&self.dec_w1)?;
        add_bias_rows(&mut h, &self.dec_b1);
        for v in h.data_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let mut logits = h.matmul(&self.dec_w2)?;
        add_bias_rows(&mut logits, &self.dec_b2);
        Ok(logits
            .data()
            .iter()
            .map(|&t| sigmoid(t.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Catalog, MixtureSpec};

    fn tiny_proxy() -> LabeledDataset {
        crate::data::generate(&crate::data::DatasetSpec::Mixture(MixtureSpec {
            catalog: Catalog::Proxy,
            class_count: 3,
            samples_per_class: 16,
            dimension: 12,
            noise_std: 0.05,
            seed: 77,
        }))
        .unwrap()
    }

    #[test]
    fn kl_unit_frozen_values() {
        assert_eq!(kl_unit(0.0, 0.0), 0.0);
        assert!((kl_unit(1.0, 0.0) - 0.5).abs() < 1e-15);
        // ½(0 + e − 1 − 1)
        assert!((kl_unit(0.0, 1.0) - 0.5 * (1f64.exp() - 2.0)).abs() < 1e-15);
        assert!(kl_unit(-2.0, 3.0) > 0.0);
    }

    #[test]
    fn decode_stays_inside_open_unit_interval() {
        let vae = Vae::new(10, 12, 4, 3).unwrap();
        for latent in [
            vec![0.0; 4],
            vec![3.0, -3.0, 2.5, -0.1],
            vec![1e9, -1e9, 1e300, -1e300],
        ] {
            let out = vae.decode(&latent).unwrap();
            assert_eq!(out.len(), 10);
            assert!(out.iter().all(|&v| v > 0.0 && v < 1.0), "{out:?}");
        }
    }

    #[test]
    fn decode_rejects_bad_latents() {
        let vae = Vae::new(10, 12, 4, 3).unwrap();
        assert!(vae.decode(&[0.0; 3]).is_err());
        assert!(vae.decode(&[0.0, 0.0, f64::NAN, 0.0]).is_err());
        assert!(vae.decode(&[0.0, f64::INFINITY, 0.0, 0.0]).is_err());
    }

    #[test]
    fn decode_batch_matches_single_decodes_bitwise() {
        let vae = Vae::new(8, 10, 3, 9).unwrap();
        let latents = vae.sample_prior(5, 21);
        let all = vae.decode_batch(&latents).unwrap();
        for r in 0..5 {
            let one = vae.decode(latents.row(r)).unwrap();
            for (a, b) in one.iter().zip(all.row(r)) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn gradient_check_both_networks() {
        let mut vae = Vae::new(10, 12, 4, 5).unwrap();
        let batch = Tensor::new(
            vec![6, 10],
            (0..60).map(|i| ((i as f64) * 0.17).sin() * 0.5 + 0.5).collect(),
        )
        .unwrap();
        let (enc, dec) = vae.gradient_check(&batch, 1e-5, 31).unwrap();
        assert!(enc < 1e-4, "encoder relative error {enc}");
        assert!(dec < 1e-4, "decoder relative error {dec}");
    }

    #[test]
    fn fit_improves_negative_elbo_and_is_deterministic() {
        let proxy = tiny_proxy();
        let cfg = VaeTrainConfig {
            epochs: 30,
            batch_size: 16,
            learning_rate: 1e-3,
            seed: 11,
        };
        let mut vae = Vae::new(12, 16, 3, 1).unwrap();
        let losses = vae.fit(&proxy, &cfg).unwrap();
        assert_eq!(losses.len(), 30);
        assert!(
            losses.last().unwrap() < &(losses[0] * 0.95),
            "first {} last {}",
            losses[0],
            losses.last().unwrap()
        );
        let mut again = Vae::new(12, 16, 3, 1).unwrap();
        let losses2 = again.fit(&proxy, &cfg).unwrap();
        assert_eq!(losses, losses2);
        let probe = vae.sample_prior(1, 0);
        let a = vae.decode(probe.row(0)).unwrap();
        let b = again.decode(probe.row(0)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn fit_refuses_non_proxy_data() {
        let victim_side = crate::data::generate(&crate::data::DatasetSpec::Mixture(MixtureSpec {
            catalog: Catalog::True,
            class_count: 2,
            samples_per_class: 8,
            dimension: 12,
            noise_std: 0.05,
            seed: 1,
        }))
        .unwrap();
        let mut vae = Vae::new(12, 16, 3, 1).unwrap();
        let err = vae
            .fit(
                &victim_side,
                &VaeTrainConfig {
                    epochs: 1,
                    batch_size: 8,
                    learning_rate: 1e-3,
                    seed: 0,
                },
            )
            .unwrap_err();
        assert!(err.to_string().contains("proxy"), "{err}");
    }

    #[test]
    fn save_load_round_trip_preserves_decoding_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vae.bbr");
        let mut vae = Vae::new(12, 16, 3, 2).unwrap();
        let proxy = tiny_proxy();
        vae.fit(
            &proxy,
            &VaeTrainConfig {
                epochs: 3,
                batch_size: 16,
                learning_rate: 1e-3,
                seed: 4,
            },
        )
        .unwrap();
        vae.save(&path, &[("config".into(), "deadbeef".into())]).unwrap();
        let (back, meta) = Vae::load_with_meta(&path).unwrap();
        assert!(meta.iter().any(|(k, v)| k == "config" && v == "deadbeef"));
        let latents = vae.sample_prior(4, 8);
        let a = vae.decode_batch(&latents).unwrap();
        let b = back.decode_batch(&latents).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn sample_prior_is_seeded() {
        let vae = Vae::new(6, 8, 2, 0).unwrap();
        let a = vae.sample_prior(3, 5);
        let b = vae.sample_prior(3, 5);
        let c = vae.sample_prior(3, 6);
        assert_eq!(a.data(), b.data());
        assert_ne!(a.data(), c.data());
        assert_eq!(a.shape(), &[3, 2]);
    }
}
