use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
struct Param {
    value: Tensor,
    grad: Tensor,
    populated: bool,
}

/// Named trainable tensors with paired gradient slots.
///
/// A gradient slot counts as populated once anything writes into it; the
/// optimizer refuses to step while any slot is still unpopulated.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    params: BTreeMap<String, Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::Precondition(format!("duplicate parameter {name}")));
        }
        let grad = Tensor::zeros(value.shape());
        self.params.insert(
            name,
            Param {
                value,
                grad,
                populated: false,
            },
        );
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    /// Total scalar parameter count.
    pub fn numel(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub fn get(&self, name: &str) -> &Tensor {
        &self.param(name).value
    }

    pub fn grad(&self, name: &str) -> &Tensor {
        &self.param(name).grad
    }

    fn param(&self, name: &str) -> &Param {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    fn param_mut(&mut self, name: &str) -> &mut Param {
        self.params
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    /// Replaces a parameter value; the shape must not change.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let p = self.param_mut(name);
        if p.value.shape() != value.shape() {
            return Err(Error::Dimension {
                op: "ParamSet::set",
                left: p.value.shape().to_vec(),
                right: value.shape().to_vec(),
            });
        }
        p.value = value;
        Ok(())
    }

    pub(crate) fn value_mut(&mut self, name: &str) -> &mut [f64] {
        self.param_mut(name).value.data_mut()
    }

    /// Adds `g` into the gradient slot of `name` and marks it populated.
    pub fn accumulate(&mut self, name: &str, g: &Tensor) -> Result<()> {
        let p = self.param_mut(name);
        p.grad.add_assign(g)?;
        p.populated = true;
        Ok(())
    }

    /// Overwrites the gradient slot of `name`.
    pub fn set_grad(&mut self, name: &str, g: Tensor) -> Result<()> {
        let p = self.param_mut(name);
        if p.grad.shape() != g.shape() {
            return Err(Error::Dimension {
                op: "ParamSet::set_grad",
                left: p.grad.shape().to_vec(),
                right: g.shape().to_vec(),
            });
        }
        p.grad = g;
        p.populated = true;
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for p in self.params.values_mut() {
            p.grad.data_mut().fill(0.0);
            p.populated = false;
        }
    }

    pub fn grads_populated(&self) -> bool {
        self.params.values().all(|p| p.populated)
    }

    pub fn values_finite(&self) -> bool {
        self.params.values().all(|p| p.value.is_finite())
    }

    /// Snapshot of all values, keyed by name.
    pub fn to_map(&self) -> BTreeMap<String, Tensor> {
        self.params
            .iter()
            .map(|(k, p)| (k.clone(), p.value.clone()))
            .collect()
    }

    pub fn from_map(map: BTreeMap<String, Tensor>) -> Self {
        let mut out = ParamSet::new();
        for (k, v) in map {
            // Keys of a map are unique.
            out.insert(k, v).expect("unique names");
        }
        out
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut [f64], &[f64])> {
        self.params
            .iter_mut()
            .map(|(k, p)| (k.as_str(), p.value.data_mut(), p.grad.data()))
    }
}

impl PartialEq for ParamSet {
    fn eq(&self, other: &Self) -> bool {
        self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|((ka, a), (kb, b))| ka == kb && a.value == b.value)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid Adam hyperparameters {self:?}"
            )))
        }
    }
}

/// First/second moment accumulators for bias-corrected Adam.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn second_moment(&self, name: &str) -> Option<&[f64]> {
        self.moments.get(name).map(|(_, v)| v.as_slice())
    }
}

/// One bias-corrected adaptive-moment update; zeroes gradients afterwards.
pub fn adam_step(params: &mut ParamSet, state: &mut AdamState) -> Result<()> {
    if params.is_empty() || !params.grads_populated() {
        return Err(Error::Precondition(
            "adam_step requires populated gradients for every parameter".into(),
        ));
    }
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (name, value, grad) in params.iter_mut() {
        let (m, v) = state
            .moments
            .entry(name.to_string())
            .or_insert_with(|| (vec![0.0; grad.len()], vec![0.0; grad.len()]));
        for i in 0..grad.len() {
            let g = grad[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    params.zero_grad();
    if !params.values_finite() {
        return Err(Error::Numeric(
            "adam_step produced a non-finite parameter".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_set(x: f64, g: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("x", Tensor::vector(vec![x]).unwrap()).unwrap();
        p.set_grad("x", Tensor::vector(vec![g]).unwrap()).unwrap();
        p
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar_set(0.0, 1.0);
        let mut s = AdamState::new(AdamConfig::default());
        adam_step(&mut p, &mut s).unwrap();
        // m̂ = v̂ = 1 → delta = -lr / (1 + eps)
        assert!((p.get("x").data()[0] + 0.001).abs() < 1e-10);
        assert_eq!(s.step_count(), 1);
        assert_eq!(p.grad("x").data(), &[0.0]);
        assert!(!p.grads_populated());
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar_set(2.5, 0.0);
        let mut s = AdamState::new(AdamConfig::default());
        adam_step(&mut p, &mut s).unwrap();
        assert_eq!(p.get("x").data(), &[2.5]);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn zero_betas_reduce_to_normalized_step() {
        for g in [0.3, -2.0, 1e-3] {
            let mut p = scalar_set(1.0, g);
            let cfg = AdamConfig {
                lr: 0.01,
                beta1: 0.0,
                beta2: 0.0,
                eps: 1e-8,
            };
            let mut s = AdamState::new(cfg);
            adam_step(&mut p, &mut s).unwrap();
            let expected = 1.0 - 0.01 * g / (g.abs() + 1e-8);
            assert!((p.get("x").data()[0] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn unpopulated_gradients_rejected() {
        let mut p = ParamSet::new();
        p.insert("x", Tensor::zeros(&[2])).unwrap();
        let mut s = AdamState::new(AdamConfig::default());
        assert!(matches!(
            adam_step(&mut p, &mut s),
            Err(Error::Precondition(_))
        ));
        assert!(adam_step(&mut ParamSet::new(), &mut s).is_err());
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut p = ParamSet::new();
        p.insert("a", Tensor::zeros(&[1])).unwrap();
        assert!(p.insert("a", Tensor::zeros(&[1])).is_err());
    }

    #[test]
    fn second_moments_non_negative() {
        let mut p = scalar_set(0.0, -4.0);
        let mut s = AdamState::new(AdamConfig::default());
        adam_step(&mut p, &mut s).unwrap();
        assert!(s.second_moment("x").unwrap()[0] >= 0.0);
    }
}
