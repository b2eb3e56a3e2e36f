use crate::{GradError, Real, Result};

/// Dense row-major array. The data length always equals the product of the
/// shape extents, and every extent is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<S: Real> Tensor<S> {
    pub fn new(shape: &[usize], data: Vec<S>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(GradError::param(
                "tensor",
                format!("extents must be positive, got {shape:?}"),
            ));
        }
        if numel(shape) != data.len() {
            return Err(GradError::dim("tensor", shape, &[data.len()]));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Caller guarantees `data.len() == numel(shape)`.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<S>) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, S::zero())
    }

    pub fn full(shape: &[usize], value: S) -> Self {
        Tensor::from_parts(shape.to_vec(), vec![value; numel(shape)])
    }

    pub fn scalar(value: S) -> Self {
        Tensor::from_parts(vec![1], vec![value])
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> S) -> Self {
        let n = numel(shape);
        Tensor::from_parts(shape.to_vec(), (0..n).map(&mut f).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> S {
        self.data[0]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if numel(shape) != self.data.len() || shape.contains(&0) {
            return Err(GradError::dim("reshape", &self.shape, shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn cast<T: Real>(&self) -> Tensor<T> {
        Tensor::from_parts(
            self.shape.clone(),
            self.data.iter().map(|v| T::from_f64(v.as_f64())).collect(),
        )
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> S {
        self.data.iter().copied().sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor<S>) -> S {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).abs())
            .fold(S::zero(), S::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_length_mismatch() {
        assert!(Tensor::<f64>::new(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f64>::new(&[0], vec![]).is_err());
        assert!(Tensor::<f64>::new(&[2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn reshape_keeps_data() {
        let t = Tensor::<f32>::from_fn(&[2, 3], |i| i as f32);
        let r = t.clone().reshape(&[3, 2]).unwrap();
        assert_eq!(r.data(), t.data());
        assert!(t.reshape(&[4]).is_err());
    }
}
