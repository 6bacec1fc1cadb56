use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense cubic occupancy field with values in `[0, 1]`.
///
/// Cells are addressed as `(x, y, z)` with `y` pointing up, and stored
/// x-fastest: `index = x + R * (y + R * z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid<T: Scalar = f32> {
    resolution: usize,
    values: Vec<T>,
}

impl<T: Scalar> VoxelGrid<T> {
    pub fn zeros(resolution: usize) -> Self {
        Self::filled(resolution, T::zero())
    }

    pub fn filled(resolution: usize, value: T) -> Self {
        assert!(resolution > 0, "resolution must be positive");
        assert!(
            value >= T::zero() && value <= T::one(),
            "value outside [0, 1]"
        );
        Self {
            resolution,
            values: vec![value; resolution * resolution * resolution],
        }
    }

    /// Builds a grid from x-fastest values, checking the shape and range.
    pub fn from_values(resolution: usize, values: Vec<T>) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::contract("grid resolution must be positive"));
        }
        let expected = resolution
            .checked_pow(3)
            .ok_or_else(|| Error::contract("grid resolution overflows"))?;
        if values.len() != expected {
            return Err(Error::contract(format!(
                "grid of resolution {resolution} needs {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(pos) = values
            .iter()
            .position(|v| !(*v >= T::zero() && *v <= T::one()))
        {
            return Err(Error::contract(format!(
                "grid value {} at cell {pos} is outside [0, 1]",
                values[pos]
            )));
        }
        Ok(Self { resolution, values })
    }

    /// Builds a grid by evaluating `f(x, y, z)` at every cell.
    pub fn from_fn(resolution: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Result<Self> {
        let mut values = Vec::with_capacity(resolution.pow(3));
        for z in 0..resolution {
            for y in 0..resolution {
                for x in 0..resolution {
                    values.push(f(x, y, z));
                }
            }
        }
        Self::from_values(resolution, values)
    }

    /// Skips the range check; callers guarantee the `[0, 1]` invariant.
    pub(crate) fn from_values_unchecked(resolution: usize, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), resolution.pow(3));
        Self { resolution, values }
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.resolution * (y + self.resolution * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> T {
        self.values[self.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, value: T) {
        assert!(
            value >= T::zero() && value <= T::one(),
            "value outside [0, 1]"
        );
        let i = self.index(x, y, z);
        self.values[i] = value;
    }

    /// Number of cells strictly above `threshold`.
    pub fn occupied(&self, threshold: T) -> usize {
        self.values.iter().filter(|v| **v > threshold).count()
    }

    pub fn sum(&self) -> T {
        self.values.iter().copied().sum()
    }

    pub fn is_binary(&self) -> bool {
        self.values
            .iter()
            .all(|v| *v == T::zero() || *v == T::one())
    }

    pub fn cast<U: Scalar>(&self) -> VoxelGrid<U> {
        VoxelGrid {
            resolution: self.resolution,
            values: self
                .values
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64_lossy()))
                .collect(),
        }
    }
}

/// Orientation label: condition `index` of `n_conditions` evenly spaced
/// rotations about the vertical axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Condition {
    index: usize,
    n_conditions: usize,
}

impl Condition {
    pub fn new(index: usize, n_conditions: usize) -> Result<Self> {
        Self::check_count(n_conditions)?;
        if index >= n_conditions {
            return Err(Error::contract(format!(
                "condition index {index} out of range for {n_conditions} conditions"
            )));
        }
        Ok(Self {
            index,
            n_conditions,
        })
    }

    /// Only 2 (0/180 degrees) and 4 (0/90/180/270 degrees) keep every
    /// condition angle a multiple of 90 degrees.
    pub fn check_count(n_conditions: usize) -> Result<()> {
        match n_conditions {
            2 | 4 => Ok(()),
            n => Err(Error::contract(format!(
                "n_conditions must be 2 or 4, got {n}"
            ))),
        }
    }

    /// All conditions `0..n` in order.
    pub fn all(n_conditions: usize) -> Result<Vec<Self>> {
        (0..n_conditions)
            .map(|i| Self::new(i, n_conditions))
            .collect()
    }

    pub fn index(self) -> usize {
        self.index
    }

    pub fn n_conditions(self) -> usize {
        self.n_conditions
    }

    /// Counter-clockwise quarter turns (viewed from above) of this condition.
    pub fn quarter_turns(self) -> i64 {
        (self.index * (4 / self.n_conditions)) as i64
    }

    pub fn angle_deg(self) -> u32 {
        self.quarter_turns() as u32 * 90
    }

    /// True when `conditions` enumerates every condition exactly once.
    pub fn is_complete_set(conditions: &[Condition]) -> bool {
        let Some(first) = conditions.first() else {
            return false;
        };
        let n = first.n_conditions;
        if conditions.len() != n || conditions.iter().any(|c| c.n_conditions != n) {
            return false;
        }
        let mut seen = vec![false; n];
        for c in conditions {
            if std::mem::replace(&mut seen[c.index], true) {
                return false;
            }
        }
        true
    }
}
