use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Array, Gradients, NumericsError, Real};

/// Initialization scheme, recorded alongside every parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Init {
    /// Uniform in ±sqrt(6 / (fan_in + fan_out)).
    Xavier,
    Zeros,
    Ones,
    /// Normal(0, 0.02), for embedding tables.
    Embedding,
    Constant(f64),
    /// Value supplied by the caller.
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self::with_lr(3e-4)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Param<F> {
    pub value: Array<F>,
    pub m: Array<F>,
    pub v: Array<F>,
    pub step: u64,
    pub init: Init,
}

/// Named trainable arrays with Adam state.
#[derive(Debug, Clone)]
pub struct ParameterStore<F> {
    params: BTreeMap<String, Param<F>>,
    rng: ChaCha8Rng,
}

impl<F: Real> ParameterStore<F> {
    pub fn new(seed: u64) -> Self {
        ParameterStore {
            params: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Registers a parameter drawn from `init`. Draws happen in call order.
    pub fn add(&mut self, name: &str, shape: &[usize], init: Init) -> Result<(), NumericsError> {
        if self.params.contains_key(name) {
            return Err(NumericsError::DuplicateParameter(name.to_string()));
        }
        let n: usize = shape.iter().product();
        let data: Vec<F> = match init {
            Init::Zeros => vec![F::zero(); n],
            Init::Ones => vec![F::one(); n],
            Init::Constant(c) => vec![F::of(c); n],
            Init::Explicit => {
                return Err(NumericsError::Checkpoint(format!("{name}: explicit init needs a value")))
            }
            Init::Xavier => {
                let fan_in = shape.first().copied().unwrap_or(1);
                let fan_out = if shape.len() > 1 { shape[1..].iter().product() } else { 1 };
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..n).map(|_| F::of(self.rng.random_range(-a..a))).collect()
            }
            Init::Embedding => {
                let normal = Normal::new(0.0, 0.02).expect("valid normal");
                (0..n).map(|_| F::of(normal.sample(&mut self.rng))).collect()
            }
        };
        let value = Array::new(shape.to_vec(), data)?;
        self.insert_param(name, value, init);
        Ok(())
    }

    /// Registers a parameter with an explicit value.
    pub fn insert(&mut self, name: &str, value: Array<F>) -> Result<(), NumericsError> {
        if self.params.contains_key(name) {
            return Err(NumericsError::DuplicateParameter(name.to_string()));
        }
        self.insert_param(name, value, Init::Explicit);
        Ok(())
    }

    fn insert_param(&mut self, name: &str, value: Array<F>, init: Init) {
        let m = Array::zeros(value.shape());
        let v = Array::zeros(value.shape());
        self.params.insert(
            name.to_string(),
            Param {
                value,
                m,
                v,
                step: 0,
                init,
            },
        );
    }

    pub(crate) fn insert_raw(&mut self, name: String, p: Param<F>) {
        self.params.insert(name, p);
    }

    pub(crate) fn raw(&self) -> &BTreeMap<String, Param<F>> {
        &self.params
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn value(&self, name: &str) -> Option<&Array<F>> {
        self.params.get(name).map(|p| &p.value)
    }

    /// Overwrites a value; the shape must match.
    pub fn set_value(&mut self, name: &str, value: Array<F>) -> Result<(), NumericsError> {
        let p = self
            .params
            .get_mut(name)
            .ok_or_else(|| NumericsError::UnknownParameter(name.to_string()))?;
        if p.value.shape() != value.shape() {
            return Err(NumericsError::shape(
                "set_value",
                format!("{name}: {:?} vs {:?}", p.value.shape(), value.shape()),
            ));
        }
        p.value = value;
        Ok(())
    }

    pub fn step_count(&self, name: &str) -> Option<u64> {
        self.params.get(name).map(|p| p.step)
    }

    pub fn moments(&self, name: &str) -> Option<(&Array<F>, &Array<F>)> {
        self.params.get(name).map(|p| (&p.m, &p.v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    /// Copies every parameter whose name appears in `other` (shapes must
    /// agree). Returns the names copied.
    pub fn copy_from(&mut self, other: &ParameterStore<F>, with_state: bool) -> Result<Vec<String>, NumericsError> {
        let mut copied = Vec::new();
        for (name, src) in &other.params {
            if let Some(dst) = self.params.get_mut(name) {
                if dst.value.shape() != src.value.shape() {
                    return Err(NumericsError::shape(
                        "copy_from",
                        format!("{name}: {:?} vs {:?}", dst.value.shape(), src.value.shape()),
                    ));
                }
                if with_state {
                    *dst = src.clone();
                } else {
                    dst.value = src.value.clone();
                }
                copied.push(name.clone());
            }
        }
        Ok(copied)
    }

    /// Bias-corrected Adam over every parameter; missing gradients count as zero.
    pub fn adam_step(&mut self, grads: &Gradients<F>, cfg: &AdamConfig) -> Result<(), NumericsError> {
        self.adam_step_filtered(grads, cfg, |_| true)
    }

    /// Adam restricted to parameters for which `train` returns true.
    pub fn adam_step_filtered(
        &mut self,
        grads: &Gradients<F>,
        cfg: &AdamConfig,
        train: impl Fn(&str) -> bool,
    ) -> Result<(), NumericsError> {
        for (name, g) in grads.params() {
            let p = self
                .params
                .get(name)
                .ok_or_else(|| NumericsError::UnknownParameter(name.to_string()))?;
            if p.value.shape() != g.shape() {
                return Err(NumericsError::shape(
                    "adam_step",
                    format!("{name}: {:?} vs {:?}", p.value.shape(), g.shape()),
                ));
            }
            if !g.is_finite() {
                return Err(NumericsError::NonFinite(name.to_string()));
            }
        }
        let (b1, b2) = (F::of(cfg.beta1), F::of(cfg.beta2));
        let (lr, eps) = (F::of(cfg.lr), F::of(cfg.eps));
        let one = F::one();
        for (name, p) in self.params.iter_mut() {
            if !train(name) {
                continue;
            }
            p.step += 1;
            let t = p.step as i32;
            let c1 = one - b1.powi(t);
            let c2 = one - b2.powi(t);
            let g = grads.param(name);
            let vals = p.value.data_mut();
            let ms = p.m.data_mut();
            let vs = p.v.data_mut();
            for k in 0..vals.len() {
                let gk = g.map_or(F::zero(), |g| g.data()[k]);
                ms[k] = b1 * ms[k] + (one - b1) * gk;
                vs[k] = b2 * vs[k] + (one - b2) * gk * gk;
                let mhat = ms[k] / c1;
                let vhat = vs[k] / c2;
                vals[k] = vals[k] - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Bitwise equality of all parameter values.
    pub fn values_equal(&self, other: &ParameterStore<F>) -> bool {
        self.params.len() == other.params.len()
            && self.params.iter().zip(&other.params).all(|((a, p), (b, q))| {
                a == b
                    && p.value.shape() == q.value.shape()
                    && p.value
                        .data()
                        .iter()
                        .zip(q.value.data())
                        .all(|(x, y)| x.to_f64().map(f64::to_bits) == y.to_f64().map(f64::to_bits))
            })
    }

    pub fn cast<G: Real>(&self) -> ParameterStore<G> {
        ParameterStore {
            params: self
                .params
                .iter()
                .map(|(k, p)| {
                    (
                        k.clone(),
                        Param {
                            value: p.value.cast(),
                            m: p.m.cast(),
                            v: p.v.cast(),
                            step: p.step,
                            init: p.init,
                        },
                    )
                })
                .collect(),
            rng: self.rng.clone(),
        }
    }
}
