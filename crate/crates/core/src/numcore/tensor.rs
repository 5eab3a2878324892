use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Real;
use crate::error::{Error, Result};

/// Dense row-major array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        if shape.is_empty() {
            return Err(Error::dim("tensor must have rank >= 1"));
        }
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::dim(format!("zero extent in shape {shape:?}")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::dim(format!(
                "shape {shape:?} holds {numel} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: T) -> Self {
        let shape = shape.into();
        let numel = shape.iter().product();
        Self::new(shape, vec![value; numel]).expect("valid shape")
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_f64(shape: impl Into<Vec<usize>>, values: &[f64]) -> Result<Self> {
        Self::new(shape, values.iter().map(|&v| T::lit(v)).collect())
    }

    /// Zero-mean uniform entries with the given standard deviation.
    pub fn uniform<R: Rng + ?Sized>(shape: impl Into<Vec<usize>>, std: f64, rng: &mut R) -> Self {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        let limit = std * 3f64.sqrt();
        let data = (0..numel)
            .map(|_| T::lit(rng.random_range(-limit..=limit)))
            .collect();
        Self::new(shape, data).expect("valid shape")
    }

    pub fn normal<R: Rng + ?Sized>(shape: impl Into<Vec<usize>>, std: f64, rng: &mut R) -> Self {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        let data = (0..numel)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                T::lit(z * std)
            })
            .collect();
        Self::new(shape, data).expect("valid shape")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Extent of the last axis.
    pub fn features(&self) -> usize {
        *self.shape.last().expect("rank >= 1")
    }

    /// Product of all extents but the last.
    pub fn rows(&self) -> usize {
        self.len() / self.features()
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn item(&self) -> T {
        self.data[0]
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.as_f64()).collect()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }

    /// Population standard deviation over all entries.
    pub fn std(&self) -> f64 {
        let n = self.len() as f64;
        let mean = self.data.iter().map(|v| v.as_f64()).sum::<f64>() / n;
        let var = self
            .data
            .iter()
            .map(|v| (v.as_f64() - mean).powi(2))
            .sum::<f64>()
            / n;
        var.sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shape_must_match_data() {
        assert!(Tensor::<f64>::new([2, 3], vec![0.0; 6]).is_ok());
        assert!(matches!(
            Tensor::<f64>::new([2, 3], vec![0.0; 5]),
            Err(Error::Dimension(_))
        ));
        assert!(Tensor::<f64>::new([0, 3], vec![]).is_err());
        assert!(Tensor::<f64>::new(Vec::new(), vec![1.0]).is_err());
    }

    #[test]
    fn uniform_init_has_requested_std() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = Tensor::<f64>::uniform([200, 500], 0.25, &mut rng);
        assert!((t.std() - 0.25).abs() < 0.005);
        let t = Tensor::<f64>::normal([200, 500], 0.25, &mut rng);
        assert!((t.std() - 0.25).abs() < 0.005);
    }
}
