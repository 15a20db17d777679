use serde::{Deserialize, Serialize};

use super::gan::log1p_rows;
use crate::error::{Error, Result};
use crate::landuse::LandUseConfig;
use crate::numerics::{
    adam_step, Activation, AdamConfig, AdamState, Checkpoint, Mlp, ParamSet, SeededRng, Tensor,
};

pub const CHECKPOINT_KIND: &str = "vae";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VaeConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for VaeConfig {
    fn default() -> Self {
        VaeConfig {
            hidden: 128,
            epochs: 100,
            batch_size: 32,
            adam: AdamConfig::default(),
        }
    }
}

impl VaeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "vae hidden and batch_size must be positive".into(),
            ));
        }
        self.adam.validate()
    }
}

/// Dense variational autoencoder over flattened plans. The encoder reads
/// `log1p` counts; the decoder emits non-negative counts.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanVae {
    pub config: VaeConfig,
    pub latent: usize,
    pub channels: usize,
    pub resolution: usize,
    pub trunk: Mlp,
    pub mu_head: Mlp,
    pub logvar_head: Mlp,
    pub decoder: Mlp,
    pub params: ParamSet,
}

/// Per-batch loss split into its two terms (both means over samples).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeLoss {
    pub reconstruction: f64,
    pub kl: f64,
}

impl VaeLoss {
    pub fn total(&self) -> f64 {
        self.reconstruction + self.kl
    }
}

impl PlanVae {
    pub fn new(
        config: &VaeConfig,
        latent: usize,
        channels: usize,
        resolution: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        config.validate()?;
        let width = channels * resolution * resolution;
        let h = config.hidden;
        let trunk = Mlp::new(
            "vae.enc",
            vec![width, h],
            Activation::Relu,
            Activation::Relu,
        );
        let mu_head = Mlp::new(
            "vae.mu",
            vec![h, latent],
            Activation::Identity,
            Activation::Identity,
        );
        let logvar_head = Mlp::new(
            "vae.logvar",
            vec![h, latent],
            Activation::Identity,
            Activation::Identity,
        );
        let decoder = Mlp::new(
            "vae.dec",
            vec![latent, h, width],
            Activation::Relu,
            Activation::Softplus,
        );
        let mut params = ParamSet::new();
        for net in [&trunk, &mu_head, &logvar_head, &decoder] {
            net.init(&mut params, rng)?;
        }
        Ok(PlanVae {
            config: config.clone(),
            latent,
            channels,
            resolution,
            trunk,
            mu_head,
            logvar_head,
            decoder,
            params,
        })
    }

    /// Decodes one latent vector into a plan.
    pub fn generate(&self, z: &[f64]) -> Result<LandUseConfig> {
        if z.len() != self.latent {
            return Err(Error::Dimension {
                op: "vae_generate",
                left: vec![self.latent],
                right: vec![z.len()],
            });
        }
        let out = self
            .decoder
            .predict(&self.params, &Tensor::matrix(1, z.len(), z.to_vec())?)?;
        LandUseConfig::from_data(self.channels, self.resolution, out.into_data())
    }

    /// Loss of a batch of raw plans for fixed noise; when `backprop` is set
    /// the gradients are accumulated into the parameter slots.
    pub fn loss(&mut self, x: &Tensor, eps: &Tensor, backprop: bool) -> Result<VaeLoss> {
        let b = x.rows() as f64;
        let enc = self.trunk.forward(&self.params, &log1p_rows(x))?;
        let mu_t = self.mu_head.forward(&self.params, &enc.output)?;
        let lv_t = self.logvar_head.forward(&self.params, &enc.output)?;
        let (mu, lv) = (&mu_t.output, &lv_t.output);
        let sigma = lv.map(|v| (0.5 * v).exp());
        let z = mu.add(&sigma.hadamard(eps)?)?;
        let dec = self.decoder.forward(&self.params, &z)?;
        let diff = x.sub(&dec.output)?;
        let reconstruction = diff.data().iter().map(|d| d * d).sum::<f64>() / b;
        let kl = mu
            .data()
            .iter()
            .zip(lv.data())
            .map(|(m, l)| 0.5 * (m * m + l.exp() - 1.0 - l))
            .sum::<f64>()
            / b;
        if !(reconstruction.is_finite() && kl.is_finite()) {
            return Err(Error::Numeric("vae loss is not finite".into()));
        }
        if backprop {
            let d_out = diff.scale(-2.0 / b);
            let dz = self.decoder.backward(&mut self.params, &dec, &d_out)?;
            let d_mu = dz.zip_map(mu, |g, m| g + m / b)?;
            let mut d_lv = Tensor::zeros(lv.shape());
            for (i, o) in d_lv.data_mut().iter_mut().enumerate() {
                let l = lv.data()[i];
                *o = dz.data()[i] * eps.data()[i] * sigma.data()[i] * 0.5
                    + 0.5 * (l.exp() - 1.0) / b;
            }
            let mut dh = self.mu_head.backward(&mut self.params, &mu_t, &d_mu)?;
            dh.add_assign(&self.logvar_head.backward(&mut self.params, &lv_t, &d_lv)?)?;
            self.trunk.backward(&mut self.params, &enc, &dh)?;
        }
        Ok(VaeLoss { reconstruction, kl })
    }

    pub fn checkpoint(&self, seed: u64, iteration: u64) -> Result<Checkpoint> {
        let meta = VaeMeta {
            latent: self.latent,
            channels: self.channels,
            resolution: self.resolution,
            config: self.config.clone(),
        };
        Checkpoint::new(CHECKPOINT_KIND, &meta, seed, iteration, &self.params)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta: VaeMeta = ck.config()?;
        let mut vae = PlanVae::new(
            &meta.config,
            meta.latent,
            meta.channels,
            meta.resolution,
            &mut SeededRng::new(0),
        )?;
        if ck.params.len() != vae.params.len() {
            return Err(Error::Config(
                "vae checkpoint has the wrong parameter set".into(),
            ));
        }
        for (name, value) in &ck.params {
            if !vae.params.contains(name) {
                return Err(Error::Config(format!("unexpected vae parameter {name}")));
            }
            vae.params.set(name, value.clone())?;
        }
        Ok(vae)
    }
}

#[derive(Serialize, Deserialize)]
struct VaeMeta {
    latent: usize,
    channels: usize,
    resolution: usize,
    #[serde(flatten)]
    config: VaeConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VaeLog {
    /// Mean minibatch losses per epoch.
    pub epochs: Vec<VaeLoss>,
}

#[derive(Clone, Debug)]
pub struct VaeRun {
    pub model: PlanVae,
    pub log: VaeLog,
    pub diverged_at: Option<usize>,
}

/// Trains the baseline on excellent plans with latent dimension `latent`.
pub fn baseline_vae(
    excellent: &[LandUseConfig],
    latent: usize,
    config: &VaeConfig,
    seed: u64,
) -> Result<VaeRun> {
    let first = excellent.first().ok_or_else(|| {
        Error::Precondition("vae baseline needs at least one excellent plan".into())
    })?;
    let (m, n) = (first.channels(), first.resolution());
    if excellent
        .iter()
        .any(|c| c.channels() != m || c.resolution() != n)
    {
        return Err(Error::Precondition("plans differ in shape".into()));
    }
    let root = SeededRng::derive(seed, "vae");
    let mut model = PlanVae::new(config, latent, m, n, &mut root.substream("init"))?;
    let rows: Vec<&[f64]> = excellent.iter().map(|c| c.data()).collect();
    let data = Tensor::stack_rows(&rows)?;
    let mut adam = AdamState::new(config.adam);
    let mut order: Vec<usize> = (0..excellent.len()).collect();
    let mut log = VaeLog::default();
    for epoch in 0..config.epochs {
        let mut rng = root.substream(&format!("epoch/{epoch}"));
        rng.shuffle(&mut order);
        let (mut rec, mut kl, mut count) = (0.0, 0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            let x = data.select_rows(batch);
            let mut eps = Tensor::zeros(&[batch.len(), latent]);
            eps.data_mut().iter_mut().for_each(|v| *v = rng.normal());
            let snapshot = model.params.clone();
            let step = model
                .loss(&x, &eps, true)
                .and_then(|l| adam_step(&mut model.params, &mut adam).map(|_| l));
            match step {
                Ok(l) => {
                    rec += l.reconstruction;
                    kl += l.kl;
                    count += 1;
                }
                Err(Error::Numeric(_)) => {
                    model.params = snapshot;
                    model.params.zero_grad();
                    return Ok(VaeRun {
                        model,
                        log,
                        diverged_at: Some(epoch),
                    });
                }
                Err(e) => return Err(e),
            }
        }
        log.epochs.push(VaeLoss {
            reconstruction: rec / count as f64,
            kl: kl / count as f64,
        });
    }
    Ok(VaeRun {
        model,
        log,
        diverged_at: None,
    })
}
