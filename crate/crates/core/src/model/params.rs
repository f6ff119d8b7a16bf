//! Named trainable parameters with seeded initialization.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// All trainable arrays of a model, keyed by dotted names such as
/// `cascade.2.enc.film.lin1.weight`.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn vars(&self) -> Vec<Var> {
        self.vars.values().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// Scalar parameters whose name starts with `prefix`.
    pub fn count_prefix(&self, prefix: &str) -> usize {
        self.vars
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, v)| v.elem_count())
            .sum()
    }

    /// Overwrite one parameter in place. Every layer holding it sees the change.
    pub fn set(&self, name: &str, value: &Tensor) -> Result<()> {
        let var = self
            .vars
            .get(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter {name}")))?;
        if var.dims() != value.dims() {
            return Err(Error::shape(format!(
                "parameter {name} has shape {:?}, got {:?}",
                var.dims(),
                value.dims()
            )));
        }
        var.set(&value.to_dtype(var.dtype())?)?;
        Ok(())
    }

    pub(crate) fn insert(&mut self, name: String, var: Var) -> Result<()> {
        if self.vars.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter {name}")));
        }
        self.vars.insert(name, var);
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let map: HashMap<String, Tensor> = self
            .vars
            .iter()
            .map(|(k, v)| (k.clone(), v.as_tensor().clone()))
            .collect();
        candle_core::safetensors::save(&map, path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(e.to_string()),
        })
    }

    pub fn load_tensors(path: &Path) -> Result<HashMap<String, Tensor>> {
        candle_core::safetensors::load(path, &Device::Cpu).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    /// Copy every stored parameter from `tensors`; names must match exactly.
    pub fn load_exact(&self, tensors: &HashMap<String, Tensor>) -> Result<()> {
        if tensors.len() != self.vars.len() {
            return Err(Error::invalid(format!(
                "checkpoint holds {} parameters, model expects {}",
                tensors.len(),
                self.vars.len()
            )));
        }
        for name in self.vars.keys() {
            let t = tensors
                .get(name)
                .ok_or_else(|| Error::invalid(format!("checkpoint lacks parameter {name}")))?;
            self.set(name, t)?;
        }
        Ok(())
    }
}

/// Registers parameters under a name prefix while drawing initial values
/// from one seeded stream.
pub struct Init<'a> {
    store: &'a mut ParamStore,
    rng: &'a mut ChaCha8Rng,
    prefix: String,
    dtype: DType,
}

impl<'a> Init<'a> {
    pub fn new(store: &'a mut ParamStore, rng: &'a mut ChaCha8Rng) -> Self {
        Init {
            store,
            rng,
            prefix: String::new(),
            dtype: DType::F32,
        }
    }

    /// Store parameters in `dtype` (f32 by default; f64 for gradient checks).
    pub fn with_dtype(mut self, dtype: DType) -> Self {
        self.dtype = dtype;
        self
    }

    pub fn sub(&mut self, name: &str) -> Init<'_> {
        let prefix = self.full(name);
        Init {
            store: &mut *self.store,
            rng: &mut *self.rng,
            prefix,
            dtype: self.dtype,
        }
    }

    fn full(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{}", self.prefix, name)
        }
    }

    fn register(&mut self, name: &str, values: Vec<f32>, shape: &[usize]) -> Result<Tensor> {
        let t = Tensor::from_vec(values, shape, &Device::Cpu)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        self.store.insert(self.full(name), var)?;
        Ok(out)
    }

    /// Uniform on `[-bound, bound]`.
    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let b = bound as f32;
        let values = (0..n)
            .map(|_| if b > 0.0 { self.rng.random_range(-b..=b) } else { 0.0 })
            .collect();
        self.register(name, values, shape)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f32) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        self.register(name, vec![value; n], shape)
    }
}
