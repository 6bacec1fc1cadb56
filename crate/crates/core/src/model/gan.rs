use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};
use crate::voxel::{Condition, VoxelGrid};

use super::config::{LatentPrior, ModelConfig};
use super::network::{Forward, Mode, Network};

/// Generator input noise `z`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentVector<T: Scalar>(pub Vec<T>);

impl<T: Scalar> LatentVector<T> {
    pub fn sample(dim: usize, prior: LatentPrior, rng: &mut impl Rng) -> Self {
        let values = (0..dim)
            .map(|_| {
                let v: f64 = match prior {
                    LatentPrior::Normal => StandardNormal.sample(rng),
                    LatentPrior::Uniform => rng.random(),
                };
                cast(v)
            })
            .collect();
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorParams<T: Scalar> {
    pub config: ModelConfig,
    pub net: Network<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorParams<T: Scalar> {
    pub config: ModelConfig,
    pub net: Network<T>,
}

fn check_conditions(config: &ModelConfig, conds: &[Condition], batch: usize) -> Result<()> {
    if conds.len() != batch {
        return Err(Error::contract(format!(
            "{batch} samples but {} conditions",
            conds.len()
        )));
    }
    if let Some(c) = conds
        .iter()
        .find(|c| c.n_conditions() != config.n_conditions)
    {
        return Err(Error::contract(format!(
            "condition from a {}-condition set given to a {}-condition model",
            c.n_conditions(),
            config.n_conditions
        )));
    }
    Ok(())
}

pub fn init_generator<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<GeneratorParams<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    Ok(GeneratorParams {
        config: config.clone(),
        net: Network::init(&config.generator_plan(), config.init_std, &mut rng),
    })
}

pub fn init_discriminator<T: Scalar>(
    config: &ModelConfig,
    seed: u64,
) -> Result<DiscriminatorParams<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    Ok(DiscriminatorParams {
        config: config.clone(),
        net: Network::init(&config.discriminator_plan(), config.init_std, &mut rng),
    })
}

impl<T: Scalar> GeneratorParams<T> {
    /// `[z | encode(y)]` per row.
    pub fn input(&self, zs: &[LatentVector<T>], conds: &[Condition]) -> Result<Vec<T>> {
        let c = &self.config;
        check_conditions(c, conds, zs.len())?;
        let width = c.condition_width();
        let mut enc = vec![0.0; width];
        let mut out = Vec::with_capacity(zs.len() * (c.latent_dim + width));
        for (z, y) in zs.iter().zip(conds) {
            if z.len() != c.latent_dim {
                return Err(Error::contract(format!(
                    "latent has {} components, expected {}",
                    z.len(),
                    c.latent_dim
                )));
            }
            out.extend_from_slice(&z.0);
            c.encode_condition(*y, &mut enc);
            out.extend(enc.iter().map(|v| cast::<T>(*v)));
        }
        Ok(out)
    }

    /// Output rows are `R³` x-fastest probabilities.
    pub fn forward(
        &self,
        zs: &[LatentVector<T>],
        conds: &[Condition],
        mode: Mode,
    ) -> Result<Forward<T>> {
        if zs.is_empty() {
            return Err(Error::contract("empty generator batch"));
        }
        let input = self.input(zs, conds)?;
        self.net.forward(input, zs.len(), mode)
    }
}

impl<T: Scalar> DiscriminatorParams<T> {
    /// Stacks the grid channel with constant condition channel(s).
    pub fn input(&self, grids: &[T], conds: &[Condition]) -> Result<Vec<T>> {
        let c = &self.config;
        let cells = c.cells();
        if grids.len() != conds.len() * cells {
            return Err(Error::contract(format!(
                "discriminator got {} values for {} grids of {cells} cells",
                grids.len(),
                conds.len()
            )));
        }
        check_conditions(c, conds, conds.len())?;
        let width = c.condition_width();
        let mut enc = vec![0.0; width];
        let mut out = Vec::with_capacity(conds.len() * cells * (1 + width));
        for (grid, y) in grids.chunks(cells).zip(conds) {
            out.extend_from_slice(grid);
            c.encode_condition(*y, &mut enc);
            for v in &enc {
                out.extend(std::iter::repeat_n(cast::<T>(*v), cells));
            }
        }
        Ok(out)
    }

    /// `grids` holds one `R³` grid per condition, back to back.
    pub fn forward(&self, grids: &[T], conds: &[Condition], mode: Mode) -> Result<Forward<T>> {
        if conds.is_empty() {
            return Err(Error::contract("empty discriminator batch"));
        }
        let input = self.input(grids, conds)?;
        self.net.forward(input, conds.len(), mode)
    }
}

/// `G(z|y)` for a batch, as grids.
pub fn generator_forward<T: Scalar>(
    params: &GeneratorParams<T>,
    zs: &[LatentVector<T>],
    conds: &[Condition],
    mode: Mode,
) -> Result<Vec<VoxelGrid<T>>> {
    let r = params.config.resolution;
    let out = params.forward(zs, conds, mode)?.into_output();
    Ok(out
        .chunks(r * r * r)
        .map(|c| VoxelGrid::from_values_unchecked(r, c.to_vec()))
        .collect())
}

/// `D(x|y)`: probability that each grid is real.
pub fn discriminator_forward<T: Scalar>(
    params: &DiscriminatorParams<T>,
    grids: &[VoxelGrid<T>],
    conds: &[Condition],
    mode: Mode,
) -> Result<Vec<T>> {
    let r = params.config.resolution;
    if let Some(g) = grids.iter().find(|g| g.resolution() != r) {
        return Err(Error::contract(format!(
            "grid resolution {} does not match model resolution {r}",
            g.resolution()
        )));
    }
    let flat: Vec<T> = grids
        .iter()
        .flat_map(|g| g.values().iter().copied())
        .collect();
    Ok(params.forward(&flat, conds, mode)?.into_output())
}
