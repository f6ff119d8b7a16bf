#![allow(dead_code)]

use candle_core::{DType, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use upcmr::model::{Init, ParamStore};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(shape: &[usize], seed: u64) -> Tensor {
    let mut r = rng(seed);
    let n: usize = shape.iter().product();
    let v: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    Tensor::from_vec(v, shape, &candle_core::Device::Cpu).unwrap()
}

/// Build something in double precision with a fresh store.
pub fn build64<T>(seed: u64, f: impl FnOnce(&mut Init) -> T) -> (T, ParamStore) {
    let mut store = ParamStore::new();
    let mut r = rng(seed);
    let out = {
        let mut init = Init::new(&mut store, &mut r).with_dtype(DType::F64);
        f(&mut init)
    };
    (out, store)
}

fn scalar(t: &Tensor) -> f64 {
    t.to_dtype(DType::F64).unwrap().to_scalar::<f64>().unwrap()
}

/// Relative difference between the autodiff gradient of `loss` with respect
/// to `var` and central differences, over up to `samples` coordinates.
pub fn grad_check(var: &Var, loss: impl Fn() -> Tensor, samples: usize, seed: u64) -> f64 {
    let l = loss();
    let grads = l.backward().unwrap();
    let analytic = grads
        .get(var.as_tensor())
        .map(|g| g.flatten_all().unwrap().to_vec1::<f64>().unwrap())
        .unwrap_or_else(|| vec![0.0; var.elem_count()]);
    let base = var.as_tensor().flatten_all().unwrap().to_vec1::<f64>().unwrap();
    let shape = var.shape().clone();
    let n = base.len();
    let mut r = rng(seed);
    let idx: Vec<usize> = if n <= samples { (0..n).collect() } else { (0..samples).map(|_| r.random_range(0..n)).collect() };
    let eps = 1e-6;
    let (mut num, mut den) = (0.0, 0.0);
    for &i in &idx {
        let mut v = base.clone();
        v[i] += eps;
        var.set(&Tensor::from_vec(v.clone(), shape.clone(), var.device()).unwrap()).unwrap();
        let lp = scalar(&loss());
        v[i] -= 2.0 * eps;
        var.set(&Tensor::from_vec(v, shape.clone(), var.device()).unwrap()).unwrap();
        let lm = scalar(&loss());
        let fd = (lp - lm) / (2.0 * eps);
        num += (fd - analytic[i]).powi(2);
        den += analytic[i].powi(2);
    }
    var.set(&Tensor::from_vec(base, shape, var.device()).unwrap()).unwrap();
    (num / den.max(1e-300)).sqrt()
}
