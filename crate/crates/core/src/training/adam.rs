use crate::error::{Error, Result};
use crate::layers::reproject_gdn;
use crate::model::{OptimizerState, ParamStore};
use crate::tensors::Tensor;

/// Adam with bias correction. After every step GDN offsets and mixing
/// weights are projected back onto their feasible set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn step(&self, params: &mut ParamStore, grads: &[Tensor], state: &mut OptimizerState) -> Result<()> {
        if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
            return Err(Error::Shape("optimizer state does not match the parameters".into()));
        }
        state.step += 1;
        let t = state.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, p) in params.tensors_mut().iter_mut().enumerate() {
            let g = grads[i].data();
            if g.len() != p.len() {
                return Err(Error::Shape(format!("gradient {i} has {} entries for {}", g.len(), p.len())));
            }
            let m = state.m[i].data_mut();
            let v = state.v[i].data_mut();
            for (((w, &g), m), v) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *w -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            }
        }
        reproject_all(params);
        Ok(())
    }
}

/// Applies the GDN constraints to every `*.beta` / `*.gamma` pair.
pub(crate) fn reproject_all(params: &mut ParamStore) {
    let pairs: Vec<(usize, usize)> = params
        .names()
        .iter()
        .filter_map(|n| n.strip_suffix(".beta"))
        .filter_map(|base| Some((params.position(&format!("{base}.beta"))?, params.position(&format!("{base}.gamma"))?)))
        .collect();
    let tensors = params.tensors_mut();
    for (b, g) in pairs {
        let mut beta = std::mem::replace(&mut tensors[b], Tensor::scalar(0.0));
        reproject_gdn(&mut beta, &mut tensors[g]);
        tensors[b] = beta;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::GDN_BETA_MIN;

    fn store(entries: &[(&str, Tensor)]) -> ParamStore {
        let mut s = ParamStore::new();
        for (n, t) in entries {
            s.insert(*n, t.clone()).unwrap();
        }
        s
    }

    #[test]
    fn first_step_matches_reference() {
        let mut p = store(&[("w", Tensor::new(vec![2], vec![0.5, -1.0]).unwrap())]);
        let mut st = OptimizerState::zeros(&p);
        Adam::new(1e-4).step(&mut p, &[Tensor::full(&[2], 1.0)], &mut st).unwrap();
        let want = -1e-4 / (1.0 + 1e-8);
        assert!((p.get("w").unwrap().data()[0] - 0.5 - want).abs() < 1e-15);
        assert!((want + 9.99999e-5).abs() < 1e-10);
    }

    #[test]
    fn zero_gradient_keeps_weights() {
        let w = Tensor::new(vec![3], vec![0.1, 0.2, 0.3]).unwrap();
        let mut p = store(&[("w", w.clone())]);
        let mut st = OptimizerState::zeros(&p);
        for _ in 0..5 {
            Adam::new(1e-3).step(&mut p, &[Tensor::zeros(&[3])], &mut st).unwrap();
        }
        assert_eq!(p.get("w").unwrap(), &w);
    }

    #[test]
    fn gdn_constraints_restored() {
        let mut p = store(&[
            ("g.beta", Tensor::new(vec![1], vec![1e-6]).unwrap()),
            ("g.gamma", Tensor::new(vec![1, 1], vec![0.0]).unwrap()),
        ]);
        let mut st = OptimizerState::zeros(&p);
        // Positive gradients push both entries below their bounds.
        Adam::new(0.01).step(&mut p, &[Tensor::full(&[1], 1.0), Tensor::full(&[1, 1], 1.0)], &mut st).unwrap();
        assert_eq!(p.get("g.beta").unwrap().data(), &[GDN_BETA_MIN]);
        assert_eq!(p.get("g.gamma").unwrap().data(), &[0.0]);
    }
}
