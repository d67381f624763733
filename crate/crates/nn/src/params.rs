use std::collections::HashMap;

use crate::{Float, NnError, Result, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T: Float> {
    pub name: String,
    pub value: Tensor<T>,
    /// Running batch-norm statistics are stored here with `trainable = false`.
    pub trainable: bool,
}

/// Named parameter tensors in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T: Float> {
    entries: Vec<Param<T>>,
    by_name: HashMap<String, ParamId>,
}

/// Batch statistics observed during a training forward pass, to be folded
/// into the running averages once the step completes.
#[derive(Clone, Debug)]
pub struct RunningStatsUpdate<T: Float> {
    pub mean: ParamId,
    pub var: ParamId,
    pub batch_mean: Vec<T>,
    pub batch_var: Vec<T>,
    pub momentum: f64,
}

impl<T: Float> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { entries: Vec::new(), by_name: HashMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>, trainable: bool) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(NnError::DuplicateParam(name));
        }
        let id = ParamId(self.entries.len());
        self.by_name.insert(name.clone(), id);
        self.entries.push(Param { name, value, trainable });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.entries[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].value
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.by_name.get(name).copied().ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.entries.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn trainable_ids(&self) -> Vec<ParamId> {
        self.iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect()
    }

    /// Total number of scalar entries across all parameters.
    pub fn numel(&self) -> usize {
        self.entries.iter().map(|p| p.value.numel()).sum()
    }

    /// Replaces a tensor, keeping the original shape.
    pub fn set(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        let slot = &mut self.entries[id.0];
        if slot.value.shape() != value.shape() {
            return Err(NnError::shape(
                "ParamStore::set",
                format!("`{}` is {:?}, got {:?}", slot.name, slot.value.shape(), value.shape()),
            ));
        }
        slot.value = value;
        Ok(())
    }

    pub fn cast<U: Float>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|p| Param { name: p.name.clone(), value: p.value.cast(), trainable: p.trainable })
                .collect(),
            by_name: self.by_name.clone(),
        }
    }

    /// `running = momentum * running + (1 - momentum) * batch`.
    pub fn apply_running_stats(&mut self, updates: &[RunningStatsUpdate<T>]) {
        for u in updates {
            let m = T::lit(u.momentum);
            let keep = T::one() - m;
            for (r, &b) in self.entries[u.mean.0].value.data_mut().iter_mut().zip(&u.batch_mean) {
                *r = m * *r + keep * b;
            }
            for (r, &b) in self.entries[u.var.0].value.data_mut().iter_mut().zip(&u.batch_var) {
                *r = m * *r + keep * b;
            }
        }
    }
}
