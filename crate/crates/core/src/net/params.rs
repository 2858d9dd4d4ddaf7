use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{Matrix, Real};
use crate::error::{AomError, Result};

/// Named parameter tensors in a fixed registration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Matrix<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
        }
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix<T>) -> Result<usize> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(AomError::invalid(format!("duplicate parameter {name}")));
        }
        let id = self.values.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn id(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| AomError::invalid(format!("unknown parameter {name}")))
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, id: usize) -> &Matrix<T> {
        &self.values[id]
    }

    pub fn get_mut(&mut self, id: usize) -> &mut Matrix<T> {
        &mut self.values[id]
    }

    pub fn by_name(&self, name: &str) -> Result<&Matrix<T>> {
        Ok(&self.values[self.id(name)?])
    }

    pub fn values(&self) -> &[Matrix<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Matrix<T>] {
        &mut self.values
    }

    /// Total number of scalars.
    pub fn numel(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Flat position `k` as `(param id, offset)`.
    pub fn locate(&self, mut k: usize) -> Option<(usize, usize)> {
        for (id, v) in self.values.iter().enumerate() {
            if k < v.len() {
                return Some((id, k));
            }
            k -= v.len();
        }
        None
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(|v| v.cast()).collect(),
            index: self.index.clone(),
        }
    }

    pub fn zeros_like(&self) -> Vec<Matrix<T>> {
        self.values.iter().map(|v| Matrix::zeros(v.rows(), v.cols())).collect()
    }

    /// FNV-1a over names, shapes and value bits. Stable across runs and
    /// platforms; any single-bit change to a value changes it.
    pub fn fingerprint(&self) -> u64 {
        const PRIME: u64 = 0x0100_0000_01b3;
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h = (h ^ b as u64).wrapping_mul(PRIME);
            }
        };
        for (name, v) in self.names.iter().zip(&self.values) {
            eat(name.as_bytes());
            eat(&(v.rows() as u64).to_le_bytes());
            eat(&(v.cols() as u64).to_le_bytes());
            for x in v.as_slice() {
                eat(&x.as_f64().to_bits().to_le_bytes());
            }
        }
        h
    }
}

/// Normal(0, std) truncated to two standard deviations, by rejection.
pub fn trunc_normal<T: Real, R: Rng>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Matrix<T> {
    Matrix::from_fn(rows, cols, |_, _| loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 2.0 {
            break T::from_f64_lossy(z * std);
        }
    })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn fingerprint_sees_single_bit() {
        let mut p = ParamStore::<f32>::new();
        p.insert("w", Matrix::from_vec(1, 2, vec![1.0, 2.0])).unwrap();
        let a = p.fingerprint();
        assert_eq!(a, p.clone().fingerprint());
        let v = &mut p.get_mut(0).as_mut_slice()[1];
        *v = f32::from_bits(v.to_bits() ^ 1);
        assert_ne!(a, p.fingerprint());
    }

    #[test]
    fn insert_lookup_locate() {
        let mut p = ParamStore::<f64>::new();
        p.insert("a", Matrix::zeros(2, 3)).unwrap();
        p.insert("b", Matrix::zeros(1, 4)).unwrap();
        assert!(p.insert("a", Matrix::zeros(1, 1)).is_err());
        assert_eq!(p.id("b").unwrap(), 1);
        assert_eq!(p.numel(), 10);
        assert_eq!(p.locate(5), Some((0, 5)));
        assert_eq!(p.locate(6), Some((1, 0)));
        assert_eq!(p.locate(10), None);
    }

    #[test]
    fn trunc_normal_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m: Matrix<f64> = trunc_normal(&mut rng, 100, 100, 0.02);
        assert!(m.as_slice().iter().all(|v| v.abs() <= 0.04));
        let mean = m.as_slice().iter().sum::<f64>() / 1e4;
        assert!(mean.abs() < 1e-3);
    }
}
