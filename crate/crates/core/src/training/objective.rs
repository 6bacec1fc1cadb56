//! Losses of the three adversarial terms together with exact parameter
//! gradients, obtained by chaining the loss logit gradients through the
//! networks' reverse passes.

use crate::error::{Error, Result};
use crate::model::{
    DiscriminatorParams, Forward, GeneratorParams, Gradients, LatentVector, Mode, Upstream,
};
use crate::scalar::{cast, Scalar};
use crate::voxel::{merge_into, rotate_quarter_into, Condition};

use super::loss::{
    d_accuracy, d_loss, d_loss_logit_grads, g_loss, g_loss_logit_grads, GeneratorLossForm,
};

/// Lays latents out as generator rows: row `b * n + i` is latent `b` under
/// `conditions[i]`.
pub fn expand_pairs<T: Scalar>(
    zs: &[LatentVector<T>],
    conditions: &[Condition],
) -> (Vec<LatentVector<T>>, Vec<Condition>) {
    let n = conditions.len();
    let mut rows = Vec::with_capacity(zs.len() * n);
    let mut conds = Vec::with_capacity(zs.len() * n);
    for z in zs {
        for c in conditions {
            rows.push(z.clone());
            conds.push(*c);
        }
    }
    (rows, conds)
}

/// Aligns each group of `conditions.len()` consecutive `R³` rows to the
/// condition-0 frame and averages it, one merged grid per group.
pub fn merge_rows<T: Scalar>(rows: &[T], conditions: &[Condition], resolution: usize) -> Vec<T> {
    let cells = resolution.pow(3);
    let n = conditions.len();
    let groups = rows.len() / (cells * n);
    let mut out = vec![T::zero(); groups * cells];
    let mut aligned = vec![T::zero(); n * cells];
    for (g, merged) in out.chunks_mut(cells).enumerate() {
        for (i, c) in conditions.iter().enumerate() {
            let row = &rows[(g * n + i) * cells..(g * n + i + 1) * cells];
            rotate_quarter_into(
                row,
                &mut aligned[i * cells..(i + 1) * cells],
                resolution,
                -c.quarter_turns(),
            );
        }
        let inputs: Vec<&[T]> = aligned.chunks(cells).collect();
        merge_into(&inputs, merged);
    }
    out
}

/// Adjoint of [`merge_rows`]: spreads merged-grid gradients back onto rows.
fn merge_rows_backward<T: Scalar>(
    d_merged: &[T],
    conditions: &[Condition],
    resolution: usize,
    only_branch: Option<usize>,
) -> Vec<T> {
    let cells = resolution.pow(3);
    let n = conditions.len();
    let inv_n: T = cast(1.0 / n as f64);
    let mut out = vec![T::zero(); d_merged.len() * n];
    let mut scaled = vec![T::zero(); cells];
    for (g, dm) in d_merged.chunks(cells).enumerate() {
        for (s, d) in scaled.iter_mut().zip(dm) {
            *s = *d * inv_n;
        }
        for (i, c) in conditions.iter().enumerate() {
            if only_branch.is_some_and(|b| b != i) {
                continue;
            }
            let row = &mut out[(g * n + i) * cells..(g * n + i + 1) * cells];
            rotate_quarter_into(&scaled, row, resolution, c.quarter_turns());
        }
    }
    out
}

/// Gradient w.r.t. the grid channel of each discriminator input.
fn grid_channel<T: Scalar>(d_input: &[T], batch: usize, cells: usize) -> Vec<T> {
    let per = d_input.len() / batch;
    d_input
        .chunks(per)
        .flat_map(|s| s[..cells].iter().copied())
        .collect()
}

/// Discriminator outputs on one real and one fake batch.
pub struct DiscriminatorPass<T: Scalar> {
    pub real: Forward<T>,
    pub fake: Forward<T>,
    pub loss: T,
    pub accuracy: f64,
}

impl<T: Scalar> DiscriminatorPass<T> {
    pub fn run(
        disc: &DiscriminatorParams<T>,
        reals: &[T],
        real_conds: &[Condition],
        fakes: &[T],
        fake_conds: &[Condition],
        eps: f64,
    ) -> Result<Self> {
        let real = disc.forward(reals, real_conds, Mode::Train)?;
        let fake = disc.forward(fakes, fake_conds, Mode::Train)?;
        let loss = d_loss(real.output(), fake.output(), cast(eps))?;
        let accuracy = d_accuracy(real.output(), fake.output());
        Ok(Self {
            real,
            fake,
            loss,
            accuracy,
        })
    }

    pub fn gradients(&self, disc: &DiscriminatorParams<T>, eps: f64) -> Result<Gradients<T>> {
        let (dr, df) = d_loss_logit_grads(self.real.output(), self.fake.output(), cast(eps));
        let (mut g, _) = disc
            .net
            .backward(&self.real, Upstream::Logits(&dr), false)?;
        let (gf, _) = disc
            .net
            .backward(&self.fake, Upstream::Logits(&df), false)?;
        g.add_assign(&gf);
        Ok(g)
    }
}

/// `d_loss` and its gradient w.r.t. the discriminator parameters.
pub fn d_loss_gradients<T: Scalar>(
    disc: &DiscriminatorParams<T>,
    reals: &[T],
    real_conds: &[Condition],
    fakes: &[T],
    fake_conds: &[Condition],
    eps: f64,
) -> Result<(T, Gradients<T>)> {
    let pass = DiscriminatorPass::run(disc, reals, real_conds, fakes, fake_conds, eps)?;
    let grads = pass.gradients(disc, eps)?;
    Ok((pass.loss, grads))
}

/// `g_loss` of the generated rows in `gen_fwd` and its gradient w.r.t. the
/// generator parameters. The discriminator is only read.
pub fn g_loss_gradients<T: Scalar>(
    gen: &GeneratorParams<T>,
    gen_fwd: &Forward<T>,
    disc: &DiscriminatorParams<T>,
    conds: &[Condition],
    eps: f64,
    form: GeneratorLossForm,
) -> Result<(T, Gradients<T>)> {
    let d_fwd = disc.forward(gen_fwd.output(), conds, Mode::Train)?;
    let loss = g_loss(d_fwd.output(), cast(eps), form)?;
    let dl = g_loss_logit_grads(d_fwd.output(), cast(eps), form);
    let (_, d_in) = disc.net.backward(&d_fwd, Upstream::Logits(&dl), true)?;
    let d_grid = grid_channel(&d_in.unwrap(), conds.len(), gen.config.cells());
    let (grads, _) = gen
        .net
        .backward(gen_fwd, Upstream::Output(&d_grid), false)?;
    Ok((loss, grads))
}

struct PairedPass<T: Scalar> {
    gen_fwd: Forward<T>,
    disc_fwd: Forward<T>,
    merged_conds: Vec<Condition>,
    loss: T,
}

fn paired_pass<T: Scalar>(
    gen: &GeneratorParams<T>,
    disc: &DiscriminatorParams<T>,
    zs: &[LatentVector<T>],
    conditions: &[Condition],
    eps: f64,
    form: GeneratorLossForm,
) -> Result<PairedPass<T>> {
    if !Condition::is_complete_set(conditions) {
        return Err(Error::contract(
            "paired loss needs every condition exactly once",
        ));
    }
    let (rows, conds) = expand_pairs(zs, conditions);
    let gen_fwd = gen.forward(&rows, &conds, Mode::Train)?;
    let merged = merge_rows(gen_fwd.output(), conditions, gen.config.resolution);
    let c0 = Condition::new(0, conditions.len())?;
    let merged_conds = vec![c0; zs.len()];
    let disc_fwd = disc.forward(&merged, &merged_conds, Mode::Train)?;
    let loss = g_loss(disc_fwd.output(), cast(eps), form)?;
    Ok(PairedPass {
        gen_fwd,
        disc_fwd,
        merged_conds,
        loss,
    })
}

impl<T: Scalar> PairedPass<T> {
    fn gradients(
        &self,
        gen: &GeneratorParams<T>,
        disc: &DiscriminatorParams<T>,
        conditions: &[Condition],
        eps: f64,
        form: GeneratorLossForm,
        only_branch: Option<usize>,
    ) -> Result<Gradients<T>> {
        let dl = g_loss_logit_grads(self.disc_fwd.output(), cast(eps), form);
        let (_, d_in) = disc
            .net
            .backward(&self.disc_fwd, Upstream::Logits(&dl), true)?;
        let d_merged = grid_channel(&d_in.unwrap(), self.merged_conds.len(), gen.config.cells());
        let d_rows = merge_rows_backward(&d_merged, conditions, gen.config.resolution, only_branch);
        let (grads, _) = gen
            .net
            .backward(&self.gen_fwd, Upstream::Output(&d_rows), false)?;
        Ok(grads)
    }
}

/// Generates every condition from each shared latent, aligns and merges
/// the results, and scores the merged grids as condition-0 samples.
pub fn paired_g_loss<T: Scalar>(
    gen: &GeneratorParams<T>,
    disc: &DiscriminatorParams<T>,
    zs: &[LatentVector<T>],
    conditions: &[Condition],
    eps: f64,
    form: GeneratorLossForm,
) -> Result<T> {
    Ok(paired_pass(gen, disc, zs, conditions, eps, form)?.loss)
}

pub fn paired_g_loss_gradients<T: Scalar>(
    gen: &GeneratorParams<T>,
    disc: &DiscriminatorParams<T>,
    zs: &[LatentVector<T>],
    conditions: &[Condition],
    eps: f64,
    form: GeneratorLossForm,
) -> Result<(T, Gradients<T>)> {
    let pass = paired_pass(gen, disc, zs, conditions, eps, form)?;
    let grads = pass.gradients(gen, disc, conditions, eps, form, None)?;
    Ok((pass.loss, grads))
}

/// Per-branch split of [`paired_g_loss_gradients`]: entry `i` is the
/// gradient flowing through the samples generated under `conditions[i]`.
/// The entries sum to the full gradient.
pub fn paired_g_loss_branch_gradients<T: Scalar>(
    gen: &GeneratorParams<T>,
    disc: &DiscriminatorParams<T>,
    zs: &[LatentVector<T>],
    conditions: &[Condition],
    eps: f64,
    form: GeneratorLossForm,
) -> Result<(T, Vec<Gradients<T>>)> {
    let pass = paired_pass(gen, disc, zs, conditions, eps, form)?;
    let grads = (0..conditions.len())
        .map(|i| pass.gradients(gen, disc, conditions, eps, form, Some(i)))
        .collect::<Result<_>>()?;
    Ok((pass.loss, grads))
}
