//! Core containers: a set of equally-shaped variables and a noise level per variable.

use crate::error::{Error, Result};

/// `n` variables, each a flat vector of `dim` scalars, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableSet {
    n: usize,
    dim: usize,
    data: Vec<f64>,
}

impl VariableSet {
    pub fn new(n: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || dim == 0 {
            return Err(Error::Contract(format!("empty variable set ({n} x {dim})")));
        }
        if data.len() != n * dim {
            return Err(Error::Contract(format!(
                "variable data length {} does not match {n} x {dim}",
                data.len()
            )));
        }
        Ok(Self { n, dim, data })
    }

    pub fn zeros(n: usize, dim: usize) -> Self {
        Self { n, dim, data: vec![0.0; n * dim] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn var(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn var_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// One noise level in [0, 1] per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseLevelVector(Vec<f64>);

impl NoiseLevelVector {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        for (i, &t) in levels.iter().enumerate() {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Domain(format!("noise level t[{i}] = {t} outside [0, 1]")));
            }
        }
        Ok(Self(levels))
    }

    pub fn uniform(n: usize, t: f64) -> Result<Self> {
        Self::new(vec![t; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Index<usize> for NoiseLevelVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variable_set_shape_is_checked() {
        assert!(VariableSet::new(2, 3, vec![0.0; 6]).is_ok());
        assert!(VariableSet::new(2, 3, vec![0.0; 5]).is_err());
        assert!(VariableSet::new(0, 3, vec![]).is_err());
    }

    #[test]
    fn noise_levels_must_lie_in_unit_interval() {
        assert!(NoiseLevelVector::new(vec![0.0, 0.5, 1.0]).is_ok());
        assert!(NoiseLevelVector::new(vec![-0.1]).is_err());
        assert!(NoiseLevelVector::new(vec![1.1]).is_err());
    }
}
