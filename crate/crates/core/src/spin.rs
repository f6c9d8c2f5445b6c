use std::fmt;
use std::ops::Index;

use crate::error::{QahmError, Result};

/// A vector whose entries are exactly `-1.0` or `+1.0`.
///
/// Spins are kept as `f64` so they can feed affine layers without conversion.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinVector(Vec<f64>);

impl SpinVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(pos) = values.iter().position(|&v| v != 1.0 && v != -1.0) {
            return Err(QahmError::InvalidParameter(format!(
                "spin entry {pos} is {}, expected -1 or +1",
                values[pos]
            )));
        }
        Ok(SpinVector(values))
    }

    pub fn from_i8(values: &[i8]) -> Result<Self> {
        Self::new(values.iter().map(|&v| v as f64).collect())
    }

    pub fn filled(len: usize, value: f64) -> Self {
        assert!(value == 1.0 || value == -1.0);
        SpinVector(vec![value; len])
    }

    /// State `index` of the `len`-spin enumeration: bit `i` set means spin `i` is `+1`.
    pub fn from_index(index: usize, len: usize) -> Self {
        SpinVector(
            (0..len)
                .map(|i| if (index >> i) & 1 == 1 { 1.0 } else { -1.0 })
                .collect(),
        )
    }

    /// Inverse of [`SpinVector::from_index`].
    pub fn to_index(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .fold(0, |acc, (i, _)| acc | (1 << i))
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|&v| v == 1.0 || v == -1.0));
        SpinVector(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().copied()
    }

    pub fn flip(&mut self, i: usize) {
        self.0[i] = -self.0[i];
    }

    pub fn negated(&self) -> Self {
        SpinVector(self.0.iter().map(|v| -v).collect())
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Index<usize> for SpinVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl AsRef<[f64]> for SpinVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl fmt::Display for SpinVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.0 {
            f.write_str(if *v > 0.0 { "+" } else { "-" })?;
        }
        Ok(())
    }
}
