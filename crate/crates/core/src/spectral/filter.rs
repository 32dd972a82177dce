use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Polynomial `c0 + c1·λ + c2·λ² + …` evaluated over Laplacian eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial<T> {
    coeffs: Vec<T>,
}

impl<T: Scalar> Polynomial<T> {
    pub fn new(coeffs: Vec<T>) -> Self {
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == T::zero())
    }

    pub fn eval(&self, x: T) -> T {
        self.coeffs.iter().rev().fold(T::zero(), |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, &c)| c * T::from_usize(i).unwrap())
                .collect(),
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let at = |p: &Self, i: usize| p.coeffs.get(i).copied().unwrap_or(T::zero());
        Self::new((0..n).map(|i| at(self, i) + at(other, i)).collect())
    }
}

/// Low-pass and high-pass responses whose sum is the full filter `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank<T> {
    low: Polynomial<T>,
    high: Polynomial<T>,
}

const MONOTONE_GRID: usize = 1000;

impl<T: Scalar> FilterBank<T> {
    /// Rejects a low-pass response that increases, or a high-pass response that
    /// decreases, anywhere on `[0, 2]`.
    pub fn new(low: Polynomial<T>, high: Polynomial<T>) -> Result<Self> {
        let slack = T::lit(1e-12);
        let mut prev: Option<(T, T)> = None;
        for i in 0..=MONOTONE_GRID {
            let x = T::lit(2.0 * i as f64 / MONOTONE_GRID as f64);
            let (l, h) = (low.eval(x), high.eval(x));
            if let Some((pl, ph)) = prev {
                if l > pl + slack {
                    return Err(Error::contract(format!("low-pass response increases near λ = {x}")));
                }
                if h + slack < ph {
                    return Err(Error::contract(format!("high-pass response decreases near λ = {x}")));
                }
            }
            prev = Some((l, h));
        }
        Ok(Self { low, high })
    }

    pub fn low(&self) -> &Polynomial<T> {
        &self.low
    }

    pub fn high(&self) -> &Polynomial<T> {
        &self.high
    }

    /// `g = g_L + g_H`.
    pub fn combined(&self) -> Polynomial<T> {
        self.low.add(&self.high)
    }

    /// Drops the low-pass half.
    pub fn without_low(&self) -> Self {
        Self {
            low: Polynomial::zero(),
            high: self.high.clone(),
        }
    }

    /// Drops the high-pass half.
    pub fn without_high(&self) -> Self {
        Self {
            low: self.low.clone(),
            high: Polynomial::zero(),
        }
    }
}

impl<T: Scalar> Default for FilterBank<T> {
    /// `g_L(λ) = 1 - λ/2`, `g_H(λ) = λ/2`; the two sum to one everywhere.
    fn default() -> Self {
        Self {
            low: Polynomial::new(vec![T::one(), T::lit(-0.5)]),
            high: Polynomial::new(vec![T::zero(), T::lit(0.5)]),
        }
    }
}
