//! First-order optimization: bias-corrected Adam, projected minimization, and central
//! finite differences for checking analytic gradients.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

impl<T: Scalar> AdamConfig<T> {
    pub fn with_lr(lr: T) -> Self {
        Self {
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            epsilon: T::lit(1e-8),
        }
    }

    fn validate(&self) -> Result<()> {
        let unit = |b: T| b >= T::zero() && b < T::one();
        if !(unit(self.beta1) && unit(self.beta2)) {
            return Err(Error::Domain(format!(
                "Adam betas ({}, {}) must lie in [0, 1)",
                self.beta1, self.beta2
            )));
        }
        if !(self.epsilon > T::zero() && self.lr.is_finite() && self.lr > T::zero()) {
            return Err(Error::Domain("Adam epsilon and learning rate must be positive".into()));
        }
        Ok(())
    }
}

impl<T: Scalar> Default for AdamConfig<T> {
    fn default() -> Self {
        Self::with_lr(T::lit(1e-3))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub params: Vec<T>,
    pub first_moment: Vec<T>,
    pub second_moment: Vec<T>,
    pub step_count: u64,
    pub config: AdamConfig<T>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: Vec<T>, config: AdamConfig<T>) -> Result<Self> {
        config.validate()?;
        let n = params.len();
        Ok(Self {
            params,
            first_moment: vec![T::zero(); n],
            second_moment: vec![T::zero(); n],
            step_count: 0,
            config,
        })
    }

    /// One bias-corrected Adam update in place.
    pub fn step(&mut self, gradient: &[T]) -> Result<()> {
        if gradient.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                context: "adam gradient",
                expected: self.params.len().to_string(),
                found: gradient.len().to_string(),
            });
        }
        if gradient.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("adam gradient".into()));
        }
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        self.step_count += 1;
        let t = self.step_count as i32;
        let bias1 = T::one() - beta1.powi(t);
        let bias2 = T::one() - beta2.powi(t);
        for (((p, m), v), g) in self
            .params
            .iter_mut()
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
            .zip(gradient)
        {
            *m = beta1 * *m + (T::one() - beta1) * *g;
            *v = beta2 * *v + (T::one() - beta2) * *g * *g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}

/// A differentiable scalar objective: returns the value and its gradient.
pub trait Objective<T> {
    fn evaluate(&self, params: &[T]) -> (T, Vec<T>);
}

impl<T, F> Objective<T> for F
where
    F: Fn(&[T]) -> (T, Vec<T>),
{
    fn evaluate(&self, params: &[T]) -> (T, Vec<T>) {
        self(params)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum<T> {
    pub params: Vec<T>,
    pub value: T,
    /// Adam steps taken.
    pub iterations: usize,
}

/// Projected Adam: after every step `project` maps the iterate back onto the feasible set.
/// Returns the best feasible point seen, which is never worse than `init`.
pub fn minimize<T: Scalar>(
    objective: &impl Objective<T>,
    init: Vec<T>,
    project: impl Fn(&mut [T]),
    iterations: usize,
    config: AdamConfig<T>,
) -> Result<Minimum<T>> {
    let (value, mut gradient) = objective.evaluate(&init);
    if !value.is_finite() {
        return Err(Error::NonFinite("objective at initial point".into()));
    }
    let mut best = Minimum {
        params: init.clone(),
        value,
        iterations: 0,
    };
    let mut state = AdamState::new(init, config)?;
    for it in 1..=iterations {
        if gradient.iter().all(|g| *g == T::zero()) {
            break;
        }
        state.step(&gradient)?;
        project(&mut state.params);
        let (value, g) = objective.evaluate(&state.params);
        best.iterations = it;
        if !value.is_finite() {
            break;
        }
        if value < best.value {
            best.value = value;
            best.params.clone_from(&state.params);
        }
        gradient = g;
    }
    Ok(best)
}

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn numeric_gradient<T: Scalar>(f: impl Fn(&[T]) -> T, x: &[T], h: T) -> Result<Vec<T>> {
    let mut probe = x.to_vec();
    let two_h = h + h;
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let fp = f(&probe);
        probe[i] = orig - h;
        let fm = f(&probe);
        probe[i] = orig;
        if !(fp.is_finite() && fm.is_finite()) {
            return Err(Error::NonFinite(format!("objective near coordinate {i}")));
        }
        out.push((fp - fm) / two_h);
    }
    Ok(out)
}

/// Max-norm relative discrepancy `|a - b|∞ / max(|b|∞, floor)`.
pub fn relative_error<T: Scalar>(analytic: &[T], reference: &[T], floor: T) -> T {
    let diff = analytic
        .iter()
        .zip(reference)
        .map(|(a, b)| (*a - *b).abs())
        .fold(T::zero(), T::max);
    let scale = reference.iter().map(|b| b.abs()).fold(floor, T::max);
    diff / scale
}
