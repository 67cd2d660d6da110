use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use super::Real;

/// Dense column vector.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct DVector<T> {
    data: Vec<T>,
}

impl<T: Real> DVector<T> {
    pub fn zeros(len: usize) -> Self {
        Self { data: vec![T::zero(); len] }
    }

    pub fn from_vec(data: Vec<T>) -> Self {
        Self { data }
    }

    pub fn from_fn(len: usize, f: impl FnMut(usize) -> T) -> Self {
        Self { data: (0..len).map(f).collect() }
    }

    pub fn from_slice(data: &[T]) -> Self {
        Self { data: data.to_vec() }
    }

    pub fn filled(len: usize, value: T) -> Self {
        Self { data: vec![value; len] }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }

    pub fn dot(&self, other: &Self) -> T {
        debug_assert_eq!(self.len(), other.len());
        self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum()
    }

    pub fn norm_squared(&self) -> T {
        self.dot(self)
    }

    pub fn norm(&self) -> T {
        self.norm_squared().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self += alpha * x`
    pub fn axpy(&mut self, alpha: T, x: &Self) {
        debug_assert_eq!(self.len(), x.len());
        for (s, &v) in self.data.iter_mut().zip(&x.data) {
            *s = *s + alpha * v;
        }
    }

    pub fn scale(&mut self, alpha: T) {
        for s in &mut self.data {
            *s = *s * alpha;
        }
    }

    pub fn scaled(&self, alpha: T) -> Self {
        Self { data: self.data.iter().map(|&v| v * alpha).collect() }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn component_mul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.len(), other.len());
        Self { data: self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).collect() }
    }

    /// Euclidean distance to `other`.
    pub fn distance(&self, other: &Self) -> T {
        debug_assert_eq!(self.len(), other.len());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>()
            .sqrt()
    }

    /// Arithmetic mean of a non-empty collection, summed in index order.
    pub fn mean_of(items: &[Self]) -> Self {
        assert!(!items.is_empty(), "mean of an empty collection");
        let mut acc = Self::zeros(items[0].len());
        for v in items {
            acc += v;
        }
        acc.scale(T::one() / T::count(items.len()));
        acc
    }
}

impl<T> Index<usize> for DVector<T> {
    type Output = T;
    #[inline]
    fn index(&self, i: usize) -> &T {
        &self.data[i]
    }
}

impl<T> IndexMut<usize> for DVector<T> {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.data[i]
    }
}

impl<T: Real> From<Vec<T>> for DVector<T> {
    fn from(data: Vec<T>) -> Self {
        Self { data }
    }
}

impl<'a, T: Real> Add<&'a DVector<T>> for &'a DVector<T> {
    type Output = DVector<T>;
    fn add(self, rhs: &'a DVector<T>) -> DVector<T> {
        debug_assert_eq!(self.len(), rhs.len());
        DVector { data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect() }
    }
}

impl<'a, T: Real> Sub<&'a DVector<T>> for &'a DVector<T> {
    type Output = DVector<T>;
    fn sub(self, rhs: &'a DVector<T>) -> DVector<T> {
        debug_assert_eq!(self.len(), rhs.len());
        DVector { data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect() }
    }
}

impl<T: Real> Mul<T> for &DVector<T> {
    type Output = DVector<T>;
    fn mul(self, rhs: T) -> DVector<T> {
        self.scaled(rhs)
    }
}

impl<T: Real> Neg for &DVector<T> {
    type Output = DVector<T>;
    fn neg(self) -> DVector<T> {
        self.map(|v| -v)
    }
}

impl<T: Real> AddAssign<&DVector<T>> for DVector<T> {
    fn add_assign(&mut self, rhs: &DVector<T>) {
        self.axpy(T::one(), rhs);
    }
}

impl<T: Real> SubAssign<&DVector<T>> for DVector<T> {
    fn sub_assign(&mut self, rhs: &DVector<T>) {
        self.axpy(-T::one(), rhs);
    }
}
