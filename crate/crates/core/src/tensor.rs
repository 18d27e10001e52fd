//! Dense row-major tensors.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Result};
use crate::real::Real;

/// A contiguous, row-major N-dimensional array. Four-dimensional tensors are
/// laid out as NCHW.
///
/// A `Tensor` is a plain value. Gradient bookkeeping (`requires_grad` and the
/// accumulated gradient buffer) lives on the [`Tape`](crate::Tape) node that
/// owns it.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    /// Builds a tensor owning `values`. Every dimension must be positive and
    /// their product must equal `values.len()`.
    pub fn from_data(shape: &[usize], values: Vec<T>) -> Result<Self> {
        check_shape(shape)?;
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(shape_err!(
                "shape {:?} holds {} elements but {} values were given",
                shape,
                n,
                values.len()
            ));
        }
        Ok(Self { shape: shape.to_vec(), data: values })
    }

    pub fn from_slice(shape: &[usize], values: &[T]) -> Result<Self> {
        Self::from_data(shape, values.to_vec())
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        check_shape(shape).expect("invalid shape");
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn scalar(value: T) -> Self {
        Self { shape: vec![1], data: vec![value] }
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

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Option<T> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    /// `(n, c, h, w)` of a 4-D tensor.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match *self.shape.as_slice() {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(shape_err!("expected a 4-D tensor, got shape {:?}", self.shape)),
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        check_shape(shape)?;
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(shape_err!("cannot reshape {:?} into {:?}", self.shape, shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::from_f64_lossy(v.as_f64())).collect(),
        }
    }

    /// Concatenates 4-D tensors with equal `c, h, w` along the batch axis.
    pub fn stack_batch(items: &[&Tensor<T>]) -> Result<Self> {
        let first = items.first().ok_or_else(|| shape_err!("cannot stack zero tensors"))?;
        let (_, c, h, w) = first.dims4()?;
        let mut data = Vec::with_capacity(items.len() * c * h * w);
        let mut n_total = 0;
        for t in items {
            let (n, c2, h2, w2) = t.dims4()?;
            if (c2, h2, w2) != (c, h, w) {
                return Err(shape_err!("cannot stack {:?} with {:?}", t.shape, first.shape));
            }
            n_total += n;
            data.extend_from_slice(&t.data);
        }
        Ok(Self { shape: vec![n_total, c, h, w], data })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub(crate) fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(shape_err!("shape {:?} must be non-empty with positive dimensions", shape));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructs_row_major_matrix() {
        let t = Tensor::<f32>::from_data(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.shape(), &[2, 2]);
        assert_eq!(t.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn rejects_length_mismatch() {
        assert!(matches!(
            Tensor::<f32>::from_data(&[1], vec![]),
            Err(crate::Error::Shape(_))
        ));
        assert!(Tensor::<f32>::from_data(&[0, 2], vec![]).is_err());
    }

    #[test]
    fn four_dimensional_nchw() {
        let t = Tensor::<f64>::from_data(&[1, 3, 2, 2], (0..12).map(f64::from).collect()).unwrap();
        assert_eq!(t.dims4().unwrap(), (1, 3, 2, 2));
        assert_eq!(t.numel(), 12);
    }

    #[test]
    fn stacking_requires_matching_planes() {
        let a = Tensor::<f32>::zeros(&[1, 3, 2, 2]);
        let b = Tensor::<f32>::full(&[2, 3, 2, 2], 1.0);
        let s = Tensor::stack_batch(&[&a, &b]).unwrap();
        assert_eq!(s.shape(), &[3, 3, 2, 2]);
        let c = Tensor::<f32>::zeros(&[1, 3, 2, 3]);
        assert!(Tensor::stack_batch(&[&a, &c]).is_err());
    }
}
