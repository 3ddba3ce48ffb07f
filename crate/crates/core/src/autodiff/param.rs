use crate::tensor::ComplexTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// A named, optionally trainable complex tensor with its gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: ComplexTensor,
    pub grad: ComplexTensor,
    pub trainable: bool,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: ComplexTensor, trainable: bool) -> Self {
        let grad = ComplexTensor::zeros(value.shape());
        Self {
            name: name.into(),
            value,
            grad,
            trainable,
        }
    }

    /// Number of real coordinates (re and im counted separately).
    pub fn real_len(&self) -> usize {
        2 * self.value.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: ComplexTensor, trainable: bool) -> ParamId {
        self.params.push(Parameter::new(name, value, trainable));
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(|p| p.grad.fill_zero());
    }

    /// Adds `scale * grads` into the stored gradient buffers.
    pub fn accumulate(&mut self, grads: &Gradients, scale: f64) {
        for (p, g) in self.params.iter_mut().zip(&grads.0) {
            if let Some(g) = g {
                p.grad.add_scaled(g, scale).expect("gradient shape equals value shape");
            }
        }
    }

    pub fn trainable_count(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.real_len())
            .sum()
    }
}

/// Per-parameter gradients produced by one backward pass; `None` for
/// parameters the loss does not depend on.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Option<ComplexTensor>>);

impl Gradients {
    pub fn empty(n: usize) -> Self {
        Self(vec![None; n])
    }

    /// Gradient for `id`, zeros if the loss did not touch it.
    pub fn get(&self, id: ParamId, store: &ParamStore) -> ComplexTensor {
        self.0[id.0]
            .clone()
            .unwrap_or_else(|| ComplexTensor::zeros(store.get(id).value.shape()))
    }

    pub(crate) fn add(&mut self, id: ParamId, g: ComplexTensor) {
        match &mut self.0[id.0] {
            Some(acc) => acc.add_assign(&g).expect("parameter gradient shape"),
            slot => *slot = Some(g),
        }
    }
}
