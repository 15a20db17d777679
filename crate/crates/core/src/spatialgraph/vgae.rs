use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::graph::{
    normalize_adjacency, pool_rows, with_self_loops, AdjacencyPattern, PoolSet, SpatialGraph,
};
use crate::error::{Error, Result};
use crate::numerics::{
    adam_step, glorot, sigmoid, AdamConfig, AdamState, Checkpoint, ParamSet, SeededRng, Tensor,
};

pub const W1: &str = "gcn.w1";
pub const W_MU: &str = "gcn.w_mu";
pub const W_LOGVAR: &str = "gcn.w_logvar";
pub const CHECKPOINT_KIND: &str = "vgae";

/// Below this standard deviation the reparameterised sample is `μ` itself.
pub const SIGMA_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VgaeConfig {
    pub hidden: usize,
    pub latent: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub pattern: AdjacencyPattern,
    pub pool: PoolSet,
}

impl Default for VgaeConfig {
    fn default() -> Self {
        VgaeConfig {
            hidden: 32,
            latent: 16,
            epochs: 200,
            batch_size: 32,
            adam: AdamConfig::default(),
            pattern: AdjacencyPattern::StarRing,
            pool: PoolSet::AllNodes,
        }
    }
}

impl VgaeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.latent == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "vgae hidden, latent and batch_size must be positive".into(),
            ));
        }
        self.adam.validate()
    }
}

/// Output of the two-layer encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoding {
    pub mu: Tensor,
    pub log_var: Tensor,
}

/// Weights shared across all community graphs.
#[derive(Clone, Debug, PartialEq)]
pub struct Vgae {
    pub config: VgaeConfig,
    pub input_dim: usize,
    pub params: ParamSet,
}

impl Vgae {
    pub fn new(config: VgaeConfig, input_dim: usize, rng: &mut SeededRng) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(Error::Config(
                "vgae input dimension must be positive".into(),
            ));
        }
        let mut params = ParamSet::new();
        params.insert(W1, glorot(input_dim, config.hidden, rng))?;
        params.insert(W_MU, glorot(config.hidden, config.latent, rng))?;
        params.insert(W_LOGVAR, glorot(config.hidden, config.latent, rng))?;
        Ok(Vgae {
            config,
            input_dim,
            params,
        })
    }

    pub fn encode(&self, g: &SpatialGraph) -> Result<Encoding> {
        let a_hat = normalize_adjacency(&g.adjacency)?;
        encode(&self.params, &a_hat, &g.attributes)
    }

    /// Pooled `μ`: the deterministic inference embedding.
    pub fn embed(&self, g: &SpatialGraph) -> Result<Vec<f64>> {
        Ok(pool_rows(&self.encode(g)?.mu, self.config.pool))
    }

    pub fn embed_all(&self, graphs: &[SpatialGraph]) -> Result<Vec<Vec<f64>>> {
        graphs.par_iter().map(|g| self.embed(g)).collect()
    }

    /// Decoded adjacency from `μ`.
    pub fn reconstruct(&self, g: &SpatialGraph) -> Result<Tensor> {
        decode(&self.encode(g)?.mu)
    }

    pub fn checkpoint(&self, seed: u64, iteration: u64) -> Result<Checkpoint> {
        #[derive(Serialize)]
        struct Meta<'a> {
            input_dim: usize,
            #[serde(flatten)]
            config: &'a VgaeConfig,
        }
        Checkpoint::new(
            CHECKPOINT_KIND,
            &Meta {
                input_dim: self.input_dim,
                config: &self.config,
            },
            seed,
            iteration,
            &self.params,
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        #[derive(Deserialize)]
        struct Meta {
            input_dim: usize,
            #[serde(flatten)]
            config: VgaeConfig,
        }
        let meta: Meta = ck.config()?;
        let params = ck.param_set();
        let expect = [
            (W1, [meta.input_dim, meta.config.hidden]),
            (W_MU, [meta.config.hidden, meta.config.latent]),
            (W_LOGVAR, [meta.config.hidden, meta.config.latent]),
        ];
        for (name, shape) in expect {
            if !params.contains(name) || params.get(name).shape() != shape {
                return Err(Error::Config(format!(
                    "vgae checkpoint lacks {name} of shape {shape:?}"
                )));
            }
        }
        Ok(Vgae {
            config: meta.config,
            input_dim: meta.input_dim,
            params,
        })
    }
}

struct Forward {
    p: Tensor,
    h_pre: Tensor,
    q: Tensor,
    mu: Tensor,
    log_var: Tensor,
}

fn forward(params: &ParamSet, a_hat: &Tensor, x: &Tensor) -> Result<Forward> {
    let p = a_hat.matmul(x)?;
    let h_pre = p.matmul(params.get(W1))?;
    let h = h_pre.map(|v| v.max(0.0));
    let q = a_hat.matmul(&h)?;
    let mu = q.matmul(params.get(W_MU))?;
    let log_var = q.matmul(params.get(W_LOGVAR))?;
    if !(mu.is_finite() && log_var.is_finite()) {
        return Err(Error::Numeric(
            "vgae encoder produced non-finite activations".into(),
        ));
    }
    Ok(Forward {
        p,
        h_pre,
        q,
        mu,
        log_var,
    })
}

/// `X̂ = ReLU(Â X W1)`, `μ = Â X̂ Wμ`, `logσ² = Â X̂ Wσ`.
pub fn encode(params: &ParamSet, a_hat: &Tensor, x: &Tensor) -> Result<Encoding> {
    let f = forward(params, a_hat, x)?;
    Ok(Encoding {
        mu: f.mu,
        log_var: f.log_var,
    })
}

fn sigma_of(log_var: f64) -> f64 {
    (0.5 * log_var).exp()
}

/// Standard normal noise with the shape of `mu`.
pub fn draw_noise(shape: &[usize], rng: &mut SeededRng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    t.data_mut().iter_mut().for_each(|v| *v = rng.normal());
    t
}

/// `z = μ + σ ⊙ ε`; entries with `σ < 1e−12` take `μ` exactly.
pub fn reparameterize_with(mu: &Tensor, log_var: &Tensor, eps: &Tensor) -> Result<Tensor> {
    let noise = log_var.zip_map(eps, |lv, e| {
        let s = sigma_of(lv);
        if s < SIGMA_FLOOR {
            0.0
        } else {
            s * e
        }
    })?;
    mu.add(&noise)
}

pub fn reparameterize(mu: &Tensor, log_var: &Tensor, rng: &mut SeededRng) -> Result<Tensor> {
    let eps = draw_noise(mu.shape(), rng);
    reparameterize_with(mu, log_var, &eps)
}

/// `sigmoid(z zᵀ)`, exactly symmetric.
pub fn decode(z: &Tensor) -> Result<Tensor> {
    let n = z.rows();
    let s = z.matmul_nt(z)?;
    let mut out = Tensor::zeros(&[n, n]);
    let d = out.data_mut();
    for i in 0..n {
        for j in i..n {
            let v = sigmoid(s.at(i, j));
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    Ok(out)
}

/// `Σ ½(μ² + σ² − 1 − logσ²)`.
pub fn kl_term(mu: &Tensor, log_var: &Tensor) -> f64 {
    mu.data()
        .iter()
        .zip(log_var.data())
        .map(|(m, lv)| 0.5 * (m * m + lv.exp() - 1.0 - lv))
        .sum()
}

/// `Σ (T − Â_rec)²`.
pub fn reconstruction_term(target: &Tensor, rec: &Tensor) -> f64 {
    target
        .data()
        .iter()
        .zip(rec.data())
        .map(|(t, r)| (t - r).powi(2))
        .sum()
}

/// KL term plus squared reconstruction error against `T = A + I`.
pub fn vgae_loss(target: &Tensor, mu: &Tensor, log_var: &Tensor, rec: &Tensor) -> f64 {
    kl_term(mu, log_var) + reconstruction_term(target, rec)
}

/// Gradients of the loss of one graph w.r.t. `W1`, `Wμ`, `Wσ`.
pub struct VgaeGrads {
    pub w1: Tensor,
    pub w_mu: Tensor,
    pub w_logvar: Tensor,
}

/// Loss and weight gradients of one graph for fixed noise `eps`.
pub fn loss_and_grads(
    params: &ParamSet,
    a_hat: &Tensor,
    target: &Tensor,
    x: &Tensor,
    eps: &Tensor,
) -> Result<(f64, VgaeGrads)> {
    let f = forward(params, a_hat, x)?;
    let z = reparameterize_with(&f.mu, &f.log_var, eps)?;
    let rec = decode(&z)?;
    let loss = vgae_loss(target, &f.mu, &f.log_var, &rec);
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("vgae loss is {loss}")));
    }

    // d/dS of Σ(T − sigmoid(S))², S = z zᵀ.
    let d_s = target.zip_map(&rec, |t, r| -2.0 * (t - r) * r * (1.0 - r))?;
    let d_z = d_s.add(&d_s.transpose())?.matmul(&z)?;
    let d_mu = d_z.add(&f.mu)?;
    let mut d_lv = Tensor::zeros(f.log_var.shape());
    {
        let out = d_lv.data_mut();
        for (i, o) in out.iter_mut().enumerate() {
            let lv = f.log_var.data()[i];
            let s = sigma_of(lv);
            let through_z = if s < SIGMA_FLOOR {
                0.0
            } else {
                d_z.data()[i] * eps.data()[i] * s * 0.5
            };
            *o = through_z + 0.5 * (lv.exp() - 1.0);
        }
    }
    let w_mu = f.q.matmul_tn(&d_mu)?;
    let w_logvar = f.q.matmul_tn(&d_lv)?;
    let d_q = d_mu
        .matmul_nt(params.get(W_MU))?
        .add(&d_lv.matmul_nt(params.get(W_LOGVAR))?)?;
    let d_h = a_hat.matmul_tn(&d_q)?;
    let d_pre = d_h.zip_map(&f.h_pre, |g, p| if p > 0.0 { g } else { 0.0 })?;
    let w1 = f.p.matmul_tn(&d_pre)?;
    Ok((loss, VgaeGrads { w1, w_mu, w_logvar }))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VgaeLog {
    /// Mean of the minibatch losses of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Result of a training run. On divergence `model` holds the last finite
/// parameters and `diverged_at` the failing epoch.
#[derive(Clone, Debug)]
pub struct VgaeRun {
    pub model: Vgae,
    pub log: VgaeLog,
    pub diverged_at: Option<usize>,
}

/// Minibatch Adam over the corpus with shared weights.
pub fn train_vgae(graphs: &[SpatialGraph], config: &VgaeConfig, seed: u64) -> Result<VgaeRun> {
    let first = graphs
        .first()
        .ok_or_else(|| Error::Precondition("vgae training needs a non-empty corpus".into()))?;
    let k = first.attributes.cols();
    if graphs.iter().any(|g| g.attributes.cols() != k) {
        return Err(Error::Precondition(
            "graphs differ in attribute width".into(),
        ));
    }
    let root = SeededRng::derive(seed, "vgae");
    let mut model = Vgae::new(config.clone(), k, &mut root.substream("init"))?;
    let prepared: Vec<(Tensor, Tensor)> = graphs
        .iter()
        .map(|g| {
            Ok((
                normalize_adjacency(&g.adjacency)?,
                with_self_loops(&g.adjacency),
            ))
        })
        .collect::<Result<_>>()?;
    let mut adam = AdamState::new(config.adam);
    let mut log = VgaeLog::default();
    let mut order: Vec<usize> = (0..graphs.len()).collect();

    for epoch in 0..config.epochs {
        root.substream(&format!("shuffle/{epoch}"))
            .shuffle(&mut order);
        let mut batch_losses = Vec::new();
        for batch in order.chunks(config.batch_size) {
            let results: Vec<Result<(f64, VgaeGrads)>> = batch
                .par_iter()
                .map(|&i| {
                    let mut rng = root.substream(&format!("noise/{epoch}/{i}"));
                    let eps = draw_noise(&[graphs[i].attributes.rows(), config.latent], &mut rng);
                    loss_and_grads(
                        &model.params,
                        &prepared[i].0,
                        &prepared[i].1,
                        &graphs[i].attributes,
                        &eps,
                    )
                })
                .collect();
            let mut loss = 0.0;
            let mut g1 = Tensor::zeros(model.params.get(W1).shape());
            let mut g_mu = Tensor::zeros(model.params.get(W_MU).shape());
            let mut g_lv = Tensor::zeros(model.params.get(W_LOGVAR).shape());
            let mut failed = false;
            for r in results {
                match r {
                    Ok((l, g)) => {
                        loss += l;
                        g1.add_assign(&g.w1)?;
                        g_mu.add_assign(&g.w_mu)?;
                        g_lv.add_assign(&g.w_logvar)?;
                    }
                    Err(Error::Numeric(_)) => failed = true,
                    Err(e) => return Err(e),
                }
            }
            let inv = 1.0 / batch.len() as f64;
            let grads_ok = g1.is_finite() && g_mu.is_finite() && g_lv.is_finite();
            if failed || !grads_ok || !loss.is_finite() {
                return Ok(diverged(model, log, epoch));
            }
            batch_losses.push(loss * inv);
            let snapshot = model.params.clone();
            model.params.set_grad(W1, g1.scale(inv))?;
            model.params.set_grad(W_MU, g_mu.scale(inv))?;
            model.params.set_grad(W_LOGVAR, g_lv.scale(inv))?;
            if let Err(e) = adam_step(&mut model.params, &mut adam) {
                if matches!(e, Error::Numeric(_)) {
                    model.params = snapshot;
                    return Ok(diverged(model, log, epoch));
                }
                return Err(e);
            }
        }
        log.epoch_losses
            .push(batch_losses.iter().sum::<f64>() / batch_losses.len() as f64);
    }
    Ok(VgaeRun {
        model,
        log,
        diverged_at: None,
    })
}

fn diverged(model: Vgae, log: VgaeLog, epoch: usize) -> VgaeRun {
    VgaeRun {
        model,
        log,
        diverged_at: Some(epoch),
    }
}
