//! Adam optimizer over a fixed list of parameter matrices.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// First/second moment estimates for each parameter, in registration order.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    step: u64,
    m: Vec<Matrix<T>>,
    v: Vec<Matrix<T>>,
}

impl<T: Scalar> AdamState<T> {
    /// Zero moments shaped like `params`, with β1 = 0.9, β2 = 0.999, ε = 1e-8.
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Matrix<T>>) -> Self {
        let (m, v): (Vec<_>, Vec<_>) = params
            .into_iter()
            .map(|p| (Matrix::zeros(p.rows(), p.cols()), Matrix::zeros(p.rows(), p.cols())))
            .unzip();
        Self {
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            step: 0,
            m,
            v,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. `grads[i]` belongs to `params[i]`; a
    /// missing gradient is treated as zero. Gradients are not modified.
    pub fn step(&mut self, params: &mut [&mut Matrix<T>], grads: &[Option<&Matrix<T>>], lr: T) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::contract(format!(
                "adam state tracks {} parameters, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = T::one() - self.beta1.powi(t);
        let bc2 = T::one() - self.beta2.powi(t);

        for (i, p) in params.iter_mut().enumerate() {
            if p.shape() != self.m[i].shape() {
                return Err(Error::Dimension {
                    op: "adam_step",
                    left: p.shape(),
                    right: self.m[i].shape(),
                });
            }
            let Some(g) = grads[i] else {
                // The moments still decay so the update schedule matches a zero gradient.
                for (m, v) in self.m[i].data_mut().iter_mut().zip(self.v[i].data_mut()) {
                    *m *= self.beta1;
                    *v *= self.beta2;
                }
                apply(p, &self.m[i], &self.v[i], bc1, bc2, lr, self.eps);
                continue;
            };
            if g.shape() != p.shape() {
                return Err(Error::Dimension {
                    op: "adam_step",
                    left: p.shape(),
                    right: g.shape(),
                });
            }
            let (b1, b2) = (self.beta1, self.beta2);
            for ((m, v), &gv) in self.m[i]
                .data_mut()
                .iter_mut()
                .zip(self.v[i].data_mut().iter_mut())
                .zip(g.data())
            {
                *m = b1 * *m + (T::one() - b1) * gv;
                *v = b2 * *v + (T::one() - b2) * gv * gv;
            }
            apply(p, &self.m[i], &self.v[i], bc1, bc2, lr, self.eps);
        }
        Ok(())
    }
}

fn apply<T: Scalar>(p: &mut Matrix<T>, m: &Matrix<T>, v: &Matrix<T>, bc1: T, bc2: T, lr: T, eps: T) {
    for ((w, &mv), &vv) in p.data_mut().iter_mut().zip(m.data()).zip(v.data()) {
        let m_hat = mv / bc1;
        let v_hat = vv / bc2;
        *w -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = Matrix::<f64>::from_rows(&[[1.0, -1.0]]).unwrap();
        let before = p.clone();
        let mut st = AdamState::new([&p]);
        let g = Matrix::zeros(1, 2);
        for _ in 0..5 {
            st.step(&mut [&mut p], &[Some(&g)], 1e-2).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = g and v̂ = g² after one step, so the update is lr·g/(|g| + ε).
        let mut p = Matrix::<f64>::from_rows(&[[0.0, 0.0, 0.0]]).unwrap();
        let g = Matrix::from_rows(&[[0.5, -2.0, 1e-3]]).unwrap();
        let mut st = AdamState::new([&p]);
        let lr = 1e-4;
        st.step(&mut [&mut p], &[Some(&g)], lr).unwrap();
        for (&w, &gv) in p.data().iter().zip(g.data()) {
            let expected = -lr * gv / (gv.abs() + 1e-8);
            assert!((w - expected).abs() < 1e-15, "{w} vs {expected}");
        }
        assert_eq!(st.steps(), 1);
    }

    #[test]
    fn constant_gradient_descends() {
        let mut p = Matrix::<f64>::from_rows(&[[0.0, 0.0]]).unwrap();
        let g = Matrix::from_rows(&[[3.0, -0.1]]).unwrap();
        let mut st = AdamState::new([&p]);
        for _ in 0..50 {
            st.step(&mut [&mut p], &[Some(&g)], 1e-3).unwrap();
        }
        assert!(p.get(0, 0) < 0.0);
        assert!(p.get(0, 1) > 0.0);
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let mut p = Matrix::<f64>::zeros(1, 1);
        let mut st = AdamState::new([&p]);
        assert!(st.step(&mut [&mut p], &[], 1e-3).is_err());
    }
}
