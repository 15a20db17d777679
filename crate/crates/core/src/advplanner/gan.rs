use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landuse::LandUseConfig;
use crate::numerics::{
    adam_step, clamped_sigmoid, sigmoid, softplus_inverse, Activation, AdamConfig, AdamState,
    Checkpoint, Mlp, MlpTrace, ParamSet, SeededRng, Tensor, SIGMOID_CLAMP,
};

pub const CHECKPOINT_KIND: &str = "gan";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorLoss {
    /// `mean log(1 − D(G(z)))`, descended.
    #[default]
    Saturating,
    /// `−mean log D(G(z))`, descended.
    Nonsaturating,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanConfig {
    pub batch_size: usize,
    /// Discriminator steps per generator step.
    pub d_steps: usize,
    pub iterations: usize,
    pub gen_hidden: usize,
    pub disc_hidden: usize,
    pub g_loss: GeneratorLoss,
    pub adam: AdamConfig,
    /// Initial value of every generator output entry before training, so an
    /// untrained generator emits a near-empty plan.
    pub initial_output: f64,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            batch_size: 32,
            d_steps: 1,
            iterations: 2000,
            gen_hidden: 128,
            disc_hidden: 128,
            g_loss: GeneratorLoss::Saturating,
            adam: AdamConfig::default(),
            initial_output: 0.01,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0
            || self.d_steps == 0
            || self.gen_hidden == 0
            || self.disc_hidden == 0
        {
            return Err(Error::Config(
                "gan batch_size, d_steps and hidden widths must be positive".into(),
            ));
        }
        if !(self.initial_output > 0.0 && self.initial_output.is_finite()) {
            return Err(Error::Config("gan initial_output must be positive".into()));
        }
        self.adam.validate()
    }
}

/// Maps a context embedding to a non-negative `m × n × n` plan.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub net: Mlp,
    pub channels: usize,
    pub resolution: usize,
    pub params: ParamSet,
}

impl Generator {
    pub fn new(
        latent: usize,
        channels: usize,
        resolution: usize,
        hidden: usize,
        initial_output: f64,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let out = channels * resolution * resolution;
        let net = Mlp::new(
            "gen",
            vec![latent, hidden, hidden, out],
            Activation::Relu,
            Activation::Softplus,
        )
        .with_output_bias(softplus_inverse(initial_output));
        let mut params = ParamSet::new();
        net.init(&mut params, rng)?;
        Ok(Generator {
            net,
            channels,
            resolution,
            params,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.net.input_dim()
    }

    /// Rows of `z` to flattened plans.
    pub fn forward(&self, z: &Tensor) -> Result<MlpTrace> {
        self.net.forward(&self.params, z)
    }

    pub fn generate(&self, z: &[f64]) -> Result<LandUseConfig> {
        if z.len() != self.latent_dim() {
            return Err(Error::Dimension {
                op: "generate",
                left: vec![self.latent_dim()],
                right: vec![z.len()],
            });
        }
        let out = self
            .net
            .predict(&self.params, &Tensor::matrix(1, z.len(), z.to_vec())?)?;
        if !out.is_finite() {
            return Err(Error::Numeric(
                "generator produced non-finite output".into(),
            ));
        }
        LandUseConfig::from_data(self.channels, self.resolution, out.into_data())
    }
}

/// Scores flattened plans; input is `log1p` of the counts.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub net: Mlp,
    pub params: ParamSet,
}

impl Discriminator {
    pub fn new(input: usize, hidden: usize, rng: &mut SeededRng) -> Result<Self> {
        let net = Mlp::new(
            "disc",
            vec![input, hidden, hidden, 1],
            Activation::Relu,
            Activation::Identity,
        );
        let mut params = ParamSet::new();
        net.init(&mut params, rng)?;
        Ok(Discriminator { net, params })
    }

    /// Logits for rows that are already `log1p`-transformed.
    pub fn logits(&self, x: &Tensor) -> Result<MlpTrace> {
        self.net.forward(&self.params, x)
    }

    /// Clamped probabilities that each row of raw counts is excellent.
    pub fn score(&self, raw: &Tensor) -> Result<Vec<f64>> {
        let t = self.logits(&log1p_rows(raw))?;
        Ok(t.output
            .data()
            .iter()
            .map(|&a| clamped_sigmoid(a))
            .collect())
    }
}

pub(crate) fn log1p_rows(x: &Tensor) -> Tensor {
    x.map(f64::ln_1p)
}

fn clamped(a: f64) -> bool {
    let s = sigmoid(a);
    !(SIGMOID_CLAMP..=1.0 - SIGMOID_CLAMP).contains(&s)
}

/// `d log D / d a` for logit `a` (zero where the clamp is active).
fn dlog_d(a: f64) -> f64 {
    if clamped(a) {
        0.0
    } else {
        1.0 - sigmoid(a)
    }
}

/// `d log(1 − D) / d a`.
fn dlog_1m_d(a: f64) -> f64 {
    if clamped(a) {
        0.0
    } else {
        -sigmoid(a)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Discriminator objective (ascended) from logits of the three batches.
pub fn d_loss_from_logits(e: &[f64], f: &[f64], t: &[f64]) -> Result<f64> {
    if e.len() != f.len() || f.len() != t.len() || e.is_empty() {
        return Err(Error::Precondition(
            "d_loss needs three equal, non-empty batches".into(),
        ));
    }
    let total: f64 = e
        .iter()
        .zip(f)
        .zip(t)
        .map(|((&a, &b), &c)| {
            clamped_sigmoid(a).ln()
                + (1.0 - clamped_sigmoid(b)).ln()
                + (1.0 - clamped_sigmoid(c)).ln()
        })
        .sum();
    Ok(total / e.len() as f64)
}

/// Generator objective (descended) from logits of `D(G(z))`.
pub fn g_loss_from_logits(f: &[f64], mode: GeneratorLoss) -> Result<f64> {
    if f.is_empty() {
        return Err(Error::Precondition("g_loss needs a non-empty batch".into()));
    }
    let per = |a: f64| match mode {
        GeneratorLoss::Saturating => (1.0 - clamped_sigmoid(a)).ln(),
        GeneratorLoss::Nonsaturating => -clamped_sigmoid(a).ln(),
    };
    Ok(f.iter().map(|&a| per(a)).sum::<f64>() / f.len() as f64)
}

/// Statistics of one discriminator evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscriminatorStep {
    pub d_loss: f64,
    pub mean_excellent: f64,
    pub mean_generated: f64,
    pub mean_terrible: f64,
}

/// `d_loss` for raw-count batches `E`, `F`, `T`; writes the gradient of
/// `−d_loss` into the discriminator's slots so that a descent step ascends
/// the objective.
pub fn d_loss_and_grad(
    d: &mut Discriminator,
    e: &Tensor,
    f: &Tensor,
    t: &Tensor,
) -> Result<DiscriminatorStep> {
    let batches = [log1p_rows(e), log1p_rows(f), log1p_rows(t)];
    let traces = batches
        .iter()
        .map(|x| d.logits(x))
        .collect::<Result<Vec<_>>>()?;
    let logits: Vec<&[f64]> = traces.iter().map(|tr| tr.output.data()).collect();
    let loss = d_loss_from_logits(logits[0], logits[1], logits[2])?;
    let m = logits[0].len() as f64;
    for (i, tr) in traces.iter().enumerate() {
        let g: Vec<f64> = tr
            .output
            .data()
            .iter()
            .map(|&a| -(if i == 0 { dlog_d(a) } else { dlog_1m_d(a) }) / m)
            .collect();
        d.net
            .backward(&mut d.params, tr, &Tensor::matrix(g.len(), 1, g)?)?;
    }
    let probs = |k: usize| {
        mean(
            &logits[k]
                .iter()
                .map(|&a| clamped_sigmoid(a))
                .collect::<Vec<_>>(),
        )
    };
    Ok(DiscriminatorStep {
        d_loss: loss,
        mean_excellent: probs(0),
        mean_generated: probs(1),
        mean_terrible: probs(2),
    })
}

/// `g_loss` for latent batch `z`; writes its gradient into the generator's
/// slots. The discriminator's slots are left cleared.
pub fn g_loss_and_grad(
    g: &mut Generator,
    d: &mut Discriminator,
    z: &Tensor,
    mode: GeneratorLoss,
) -> Result<(f64, f64)> {
    let gen = g.forward(z)?;
    let x = log1p_rows(&gen.output);
    let tr = d.logits(&x)?;
    let logits = tr.output.data();
    let loss = g_loss_from_logits(logits, mode)?;
    let m = logits.len() as f64;
    let upstream: Vec<f64> = logits
        .iter()
        .map(|&a| {
            let v = match mode {
                GeneratorLoss::Saturating => dlog_1m_d(a),
                GeneratorLoss::Nonsaturating => -dlog_d(a),
            };
            v / m
        })
        .collect();
    let dx = d.net.backward(
        &mut d.params,
        &tr,
        &Tensor::matrix(upstream.len(), 1, upstream)?,
    )?;
    d.params.zero_grad();
    let d_out = dx.zip_map(&gen.output, |gx, f| gx / (1.0 + f))?;
    g.net.backward(&mut g.params, &gen, &d_out)?;
    let mean_d = mean(
        &logits
            .iter()
            .map(|&a| clamped_sigmoid(a))
            .collect::<Vec<_>>(),
    );
    Ok((loss, mean_d))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub mean_d_excellent: f64,
    pub mean_d_generated: f64,
    pub mean_d_terrible: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub mode: GeneratorLoss,
    pub records: Vec<IterationRecord>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "iteration,mode,d_loss,g_loss,mean_d_excellent,mean_d_generated,mean_d_terrible\n",
        );
        let mode = match self.mode {
            GeneratorLoss::Saturating => "saturating",
            GeneratorLoss::Nonsaturating => "nonsaturating",
        };
        for r in &self.records {
            out.push_str(&format!(
                "{},{mode},{},{},{},{},{}\n",
                r.iteration,
                r.d_loss,
                r.g_loss,
                r.mean_d_excellent,
                r.mean_d_generated,
                r.mean_d_terrible
            ));
        }
        out
    }
}

/// Trained (or partially trained) adversarial pair.
#[derive(Clone, Debug, PartialEq)]
pub struct GanModel {
    pub config: GanConfig,
    pub generator: Generator,
    pub discriminator: Discriminator,
}

#[derive(Serialize, Deserialize)]
struct GanMeta {
    latent: usize,
    channels: usize,
    resolution: usize,
    #[serde(flatten)]
    config: GanConfig,
}

impl GanModel {
    /// Freshly initialised pair, drawn from the same streams `train_gan` uses.
    pub fn init(
        config: &GanConfig,
        latent: usize,
        channels: usize,
        resolution: usize,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if latent == 0 || channels == 0 || resolution == 0 {
            return Err(Error::Config("gan dimensions must be positive".into()));
        }
        let root = SeededRng::derive(seed, "gan");
        let generator = Generator::new(
            latent,
            channels,
            resolution,
            config.gen_hidden,
            config.initial_output,
            &mut root.substream("init/generator"),
        )?;
        let discriminator = Discriminator::new(
            channels * resolution * resolution,
            config.disc_hidden,
            &mut root.substream("init/discriminator"),
        )?;
        Ok(GanModel {
            config: config.clone(),
            generator,
            discriminator,
        })
    }

    pub fn checkpoint(&self, seed: u64, iteration: u64) -> Result<Checkpoint> {
        let meta = GanMeta {
            latent: self.generator.latent_dim(),
            channels: self.generator.channels,
            resolution: self.generator.resolution,
            config: self.config.clone(),
        };
        let mut all = self.generator.params.to_map();
        all.extend(self.discriminator.params.to_map());
        let mut ck = Checkpoint::new(CHECKPOINT_KIND, &meta, seed, iteration, &ParamSet::new())?;
        ck.params = all;
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta: GanMeta = ck.config()?;
        let mut model = GanModel::init(
            &meta.config,
            meta.latent,
            meta.channels,
            meta.resolution,
            ck.seed,
        )?;
        for (name, value) in &ck.params {
            let target = if name.starts_with("gen.") {
                &mut model.generator.params
            } else {
                &mut model.discriminator.params
            };
            if !target.contains(name) {
                return Err(Error::Config(format!("unexpected gan parameter {name}")));
            }
            target.set(name, value.clone())?;
        }
        if ck.params.len() != model.generator.params.len() + model.discriminator.params.len() {
            return Err(Error::Config("gan checkpoint is missing parameters".into()));
        }
        Ok(model)
    }
}

/// Outcome of [`train_gan`]; on divergence `model` holds the last finite
/// parameters and `diverged_at` the failing iteration.
#[derive(Clone, Debug)]
pub struct GanRun {
    pub model: GanModel,
    pub log: TrainLog,
    pub diverged_at: Option<usize>,
}

/// Row indices for a minibatch: without replacement when the pool is large
/// enough, with replacement otherwise.
fn minibatch(pool: usize, size: usize, rng: &mut SeededRng) -> Vec<usize> {
    if pool >= size {
        rng.sample_indices(pool, size)
    } else {
        (0..size).map(|_| rng.below(pool)).collect()
    }
}

fn flatten(configs: &[LandUseConfig]) -> Result<Tensor> {
    let width = configs[0].data().len();
    if configs.iter().any(|c| c.data().len() != width) {
        return Err(Error::Precondition("plans differ in shape".into()));
    }
    let rows: Vec<&[f64]> = configs.iter().map(|c| c.data()).collect();
    Tensor::stack_rows(&rows)
}

/// Minibatch adversarial training: `d_steps` discriminator ascent steps on
/// (excellent, generated, terrible) batches, then one generator descent step.
pub fn train_gan(
    excellent: &[LandUseConfig],
    terrible: &[LandUseConfig],
    embeddings: &[Vec<f64>],
    config: &GanConfig,
    seed: u64,
) -> Result<GanRun> {
    if excellent.is_empty() || terrible.is_empty() || embeddings.is_empty() {
        return Err(Error::Precondition(
            "gan training needs excellent plans, terrible plans and embeddings".into(),
        ));
    }
    let (m, n) = (excellent[0].channels(), excellent[0].resolution());
    if terrible
        .iter()
        .chain(excellent)
        .any(|c| c.channels() != m || c.resolution() != n)
    {
        return Err(Error::Precondition("plans differ in shape".into()));
    }
    let latent = embeddings[0].len();
    if latent == 0 || embeddings.iter().any(|z| z.len() != latent) {
        return Err(Error::Precondition("embeddings differ in dimension".into()));
    }
    let e_set = flatten(excellent)?;
    let t_set = flatten(terrible)?;
    let z_rows: Vec<&[f64]> = embeddings.iter().map(Vec::as_slice).collect();
    let z_set = Tensor::stack_rows(&z_rows)?;

    let mut model = GanModel::init(config, latent, m, n, seed)?;
    let root = SeededRng::derive(seed, "gan");
    let mut sampler = root.substream("minibatches");
    let mut d_adam = AdamState::new(config.adam);
    let mut g_adam = AdamState::new(config.adam);
    let mut log = TrainLog {
        mode: config.g_loss,
        records: Vec::with_capacity(config.iterations),
    };
    let b = config.batch_size;

    for it in 0..config.iterations {
        let snapshot = model.clone();
        let step = (|| -> Result<IterationRecord> {
            let mut last = None;
            for _ in 0..config.d_steps {
                let e = e_set.select_rows(&minibatch(e_set.rows(), b, &mut sampler));
                let z = z_set.select_rows(&minibatch(z_set.rows(), b, &mut sampler));
                let t = t_set.select_rows(&minibatch(t_set.rows(), b, &mut sampler));
                let f = model.generator.forward(&z)?.output;
                let s = d_loss_and_grad(&mut model.discriminator, &e, &f, &t)?;
                adam_step(&mut model.discriminator.params, &mut d_adam)?;
                last = Some(s);
            }
            let s = last.expect("d_steps ≥ 1");
            let z = z_set.select_rows(&minibatch(z_set.rows(), b, &mut sampler));
            let (g_loss, _) = g_loss_and_grad(
                &mut model.generator,
                &mut model.discriminator,
                &z,
                config.g_loss,
            )?;
            adam_step(&mut model.generator.params, &mut g_adam)?;
            Ok(IterationRecord {
                iteration: it,
                d_loss: s.d_loss,
                g_loss,
                mean_d_excellent: s.mean_excellent,
                mean_d_generated: s.mean_generated,
                mean_d_terrible: s.mean_terrible,
            })
        })();
        match step {
            Ok(r) if [r.d_loss, r.g_loss].iter().all(|v| v.is_finite()) => log.records.push(r),
            Ok(_) | Err(Error::Numeric(_)) => {
                return Ok(GanRun {
                    model: snapshot,
                    log,
                    diverged_at: Some(it),
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(GanRun {
        model,
        log,
        diverged_at: None,
    })
}
