//! Adversarial planner: a generator mapping context embeddings to land-use
//! plans, a discriminator separating excellent plans from generated and
//! terrible ones, and the AVG/MAX/VAE baselines.

mod baselines;
mod gan;
mod vae;

pub use baselines::{baseline_avg, baseline_max};
pub use gan::{
    d_loss_and_grad, d_loss_from_logits, g_loss_and_grad, g_loss_from_logits, train_gan,
    Discriminator, DiscriminatorStep, GanConfig, GanModel, GanRun, Generator, GeneratorLoss,
    IterationRecord, TrainLog, CHECKPOINT_KIND as GAN_CHECKPOINT_KIND,
};
pub use vae::{
    baseline_vae, PlanVae, VaeConfig, VaeLog, VaeLoss, VaeRun,
    CHECKPOINT_KIND as VAE_CHECKPOINT_KIND,
};
