//! Baseline conditional-GAN updates, the paired generator step, the
//! discriminator accuracy gate, and the training loop.

mod adam;
mod checkpoint;
mod config;
mod loss;
mod objective;
mod run;
mod step;

pub use adam::{Adam, AdamHyper};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, MAGIC,
};
pub use config::TrainConfig;
pub use loss::{
    d_accuracy, d_loss, d_loss_logit_grads, g_loss, g_loss_logit_grads, GeneratorLossForm,
};
pub use objective::{
    d_loss_gradients, expand_pairs, g_loss_gradients, merge_rows, paired_g_loss,
    paired_g_loss_branch_gradients, paired_g_loss_gradients, DiscriminatorPass,
};
pub use run::{train, RealSampler, RunConfig, TrainSummary, LOG_NAME};
pub use step::{RealBatch, StepLog, TrainState};
