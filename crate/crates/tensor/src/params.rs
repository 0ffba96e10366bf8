use std::collections::HashMap;

use rand::Rng;

use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tape::{Gradients, Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors in registration order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
    lookup: HashMap<String, usize>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            lookup: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.lookup.contains_key(&name) {
            return Err(TensorError::Value(format!("duplicate parameter name {name}")));
        }
        self.lookup.insert(name.clone(), self.values.len());
        self.names.push(name);
        self.values.push(value);
        Ok(ParamId(self.values.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.lookup.get(name).copied().map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn values(&self) -> &[Tensor<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.values
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(Tensor::cast).collect(),
            lookup: self.lookup.clone(),
        }
    }
}

/// Kaiming-uniform initialisation with fan-in scaling, `U(-b, b)` with `b = sqrt(6 / fan_in)`.
pub fn kaiming_uniform<T: Real>(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor<T> {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    Tensor::from_fn(shape.to_vec(), |_| T::of(rng.gen_range(-bound..bound)))
}

/// One forward/backward graph bound to a parameter store.
///
/// Parameters are copied onto the tape lazily, once per graph.
pub struct Graph<'p, T> {
    pub tape: Tape<T>,
    params: &'p ParamStore<T>,
    bound: Vec<Option<Var>>,
    trainable: bool,
}

impl<'p, T: Real> Graph<'p, T> {
    pub fn new(params: &'p ParamStore<T>, trainable: bool) -> Self {
        Self {
            tape: Tape::new(),
            params,
            bound: vec![None; params.len()],
            trainable,
        }
    }

    /// Graph on an existing tape whose parameters are the given leaves, in
    /// store order.
    pub fn bind(tape: Tape<T>, params: &'p ParamStore<T>, vars: &[Var]) -> Result<Self> {
        if vars.len() != params.len() {
            return Err(TensorError::Dimension(format!(
                "bind: {} vars for {} parameters",
                vars.len(),
                params.len()
            )));
        }
        for (i, (&v, p)) in vars.iter().zip(params.values()).enumerate() {
            if tape.shape(v) != p.shape() {
                return Err(TensorError::Dimension(format!(
                    "bind: parameter {} has shape {:?}, var has {:?}",
                    params.names[i],
                    p.shape(),
                    tape.shape(v)
                )));
            }
        }
        Ok(Self {
            tape,
            params,
            bound: vars.iter().copied().map(Some).collect(),
            trainable: true,
        })
    }

    pub fn into_tape(self) -> Tape<T> {
        self.tape
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let v = self.tape.leaf(self.params.get(id).clone(), self.trainable);
        self.bound[id.0] = Some(v);
        v
    }

    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.tape.constant(value)
    }

    /// Gradients aligned with the store; `None` for parameters the loss does not reach.
    pub fn param_grads(&self, grads: &mut Gradients<T>) -> Vec<Option<Tensor<T>>> {
        self.bound
            .iter()
            .map(|b| b.and_then(|v| grads.take(v)))
            .collect()
    }
}

/// SGD with heavy-ball momentum: `v = mu * v + g`, `p -= lr * v`.
#[derive(Clone, Debug)]
pub struct Sgd<T> {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Sgd<T> {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Self {
            lr,
            momentum,
            velocity: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[Option<Tensor<T>>]) {
        if self.velocity.len() != params.len() {
            self.velocity = vec![None; params.len()];
        }
        let (lr, mu) = (T::of(self.lr), T::of(self.momentum));
        for ((p, g), v) in params.values_mut().iter_mut().zip(grads).zip(&mut self.velocity) {
            let Some(g) = g else { continue };
            let vel = v.get_or_insert_with(|| Tensor::zeros(g.shape().to_vec()));
            for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(vel.data_mut()) {
                *vv = mu * *vv + gv;
                *pv -= lr * *vv;
            }
        }
    }
}
