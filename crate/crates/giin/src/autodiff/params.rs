//! Named parameter storage shared by the model and the optimizer.

use std::collections::HashMap;

use crate::autodiff::{adam_step, init_tensor, AdamHyper, AdamState, InitScheme, Tensor};
use crate::error::{Error, Result};
use crate::rng::stream;

/// Handle into a [`ParamStore`]. Stable for the life of the store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Flat registry of learnable tensors.
///
/// Parameters keep their registration order everywhere: gradient reports,
/// optimizer sweeps, and checkpoints all iterate in that order, which is what
/// makes reruns byte-identical.
#[derive(Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    grads: Vec<Tensor>,
    adam: Vec<Option<AdamState>>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a tensor initialized from a per-name RNG stream derived from
    /// `root_seed`. Registration order is independent of initialization: two
    /// stores that register the same names with the same seed hold identical
    /// values even if other parameters differ.
    pub fn register(
        &mut self,
        name: &str,
        shape: &[usize],
        scheme: InitScheme,
        root_seed: u64,
    ) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::Invariant(format!(
                "parameter '{name}' registered twice"
            )));
        }
        let mut rng = stream(root_seed, &["init", name]);
        let value = init_tensor(scheme, shape, &mut rng);
        Ok(self.push(name, value))
    }

    /// Register with an explicit value (checkpoint restore, tests).
    pub fn register_value(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::Invariant(format!(
                "parameter '{name}' registered twice"
            )));
        }
        Ok(self.push(name, value))
    }

    fn push(&mut self, name: &str, value: Tensor) -> ParamId {
        let id = ParamId(self.values.len());
        self.grads.push(Tensor::zeros(value.shape()));
        self.values.push(value);
        self.adam.push(None);
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    /// Add `delta` into the stored gradient (gradients accumulate across
    /// examples of a batch until [`Self::zero_grads`] or an optimizer step).
    pub fn accumulate_grad(&mut self, id: ParamId, delta: &Tensor) -> Result<()> {
        let g = &mut self.grads[id.0];
        if g.shape() != delta.shape() {
            return Err(Error::shape(
                format!("gradient for '{}'", self.names[id.0]),
                g.shape(),
                delta.shape(),
            ));
        }
        g.add_scaled(delta, 1.0);
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    /// Allocate Adam buffers for every parameter. Must run before
    /// [`Self::adam_step_all`].
    pub fn init_optimizer(&mut self) {
        for (i, value) in self.values.iter().enumerate() {
            self.adam[i] = Some(AdamState::zeros(value.shape()));
        }
    }

    /// Apply one Adam update to every parameter from its accumulated
    /// gradient, then zero the gradients.
    pub fn adam_step_all(&mut self, hyper: &AdamHyper) -> Result<()> {
        for i in 0..self.values.len() {
            let state = self.adam[i].as_mut().ok_or_else(|| {
                Error::Invariant(format!(
                    "optimizer step for '{}' before init_optimizer",
                    self.names[i]
                ))
            })?;
            adam_step(&mut self.values[i], &self.grads[i], state, hyper);
        }
        self.zero_grads();
        Ok(())
    }

    /// Parameters in registration order.
    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    /// Names in registration order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn total_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_name_rejected() {
        let mut ps = ParamStore::new();
        ps.register("w", &[2, 2], InitScheme::Zero, 0).unwrap();
        let err = ps.register("w", &[2, 2], InitScheme::Zero, 0).unwrap_err();
        assert!(matches!(err, Error::Invariant(_)));
    }

    #[test]
    fn init_depends_on_name_not_order() {
        let mut a = ParamStore::new();
        a.register("w", &[4, 4], InitScheme::Glorot, 11).unwrap();
        a.register("b", &[4], InitScheme::He, 11).unwrap();

        let mut b = ParamStore::new();
        b.register("b", &[4], InitScheme::He, 11).unwrap();
        b.register("w", &[4, 4], InitScheme::Glorot, 11).unwrap();

        let wa = a.value(a.lookup("w").unwrap());
        let wb = b.value(b.lookup("w").unwrap());
        assert_eq!(wa, wb);
    }

    #[test]
    fn grads_accumulate_and_zero() {
        let mut ps = ParamStore::new();
        let id = ps.register("w", &[2], InitScheme::Zero, 0).unwrap();
        ps.accumulate_grad(id, &Tensor::vector(&[1.0, 2.0])).unwrap();
        ps.accumulate_grad(id, &Tensor::vector(&[0.5, 0.5])).unwrap();
        assert_eq!(ps.grad(id).data(), &[1.5, 2.5]);
        ps.zero_grads();
        assert_eq!(ps.grad(id).data(), &[0.0, 0.0]);
    }

    #[test]
    fn step_before_init_is_invariant_error() {
        let mut ps = ParamStore::new();
        ps.register("w", &[1], InitScheme::Zero, 0).unwrap();
        let err = ps.adam_step_all(&AdamHyper::default()).unwrap_err();
        assert!(matches!(err, Error::Invariant(_)));
    }

    #[test]
    fn step_applies_update_and_clears_grads() {
        let mut ps = ParamStore::new();
        let id = ps.register_value("w", Tensor::scalar(1.0)).unwrap();
        ps.init_optimizer();
        ps.accumulate_grad(id, &Tensor::scalar(2.0)).unwrap();
        let hy = AdamHyper::default();
        ps.adam_step_all(&hy).unwrap();
        assert!((ps.value(id).item() - (1.0 - hy.lr)).abs() < 1e-9);
        assert_eq!(ps.grad(id).item(), 0.0);
    }

    #[test]
    fn iter_keeps_registration_order() {
        let mut ps = ParamStore::new();
        ps.register("z", &[1], InitScheme::Zero, 0).unwrap();
        ps.register("a", &[1], InitScheme::Zero, 0).unwrap();
        ps.register("m", &[1], InitScheme::Zero, 0).unwrap();
        let names: Vec<&str> = ps.names().collect();
        assert_eq!(names, ["z", "a", "m"]);
    }
}
