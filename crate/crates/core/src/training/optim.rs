//! AdamW with decoupled weight decay.

use crate::arch::ParameterStore;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// Moment estimates mirroring a [`ParameterStore`], in store order.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    pub hyper: AdamW,
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl OptimState {
    pub fn new(params: &ParameterStore, hyper: AdamW) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        OptimState {
            hyper,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Moment shapes must match the store entry by entry.
    pub fn check_mirrors(&self, params: &ParameterStore) -> Result<()> {
        let ok = self.m.len() == params.len()
            && self.v.len() == params.len()
            && params
                .iter()
                .zip(self.m.iter().zip(&self.v))
                .all(|((_, p), (m, v))| p.shape() == m.shape() && p.shape() == v.shape());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidShape(
                "optimizer state does not mirror the parameter store".into(),
            ))
        }
    }
}

/// One AdamW update. `grads` must hold a gradient for every parameter.
pub fn adamw_step(params: &mut ParameterStore, grads: &ParameterStore, state: &mut OptimState, lr: f64) -> Result<()> {
    state.check_mirrors(params)?;
    for (name, p) in params.iter() {
        let g = grads.get(name).map_err(|_| Error::MissingGradient(name.to_string()))?;
        if g.shape() != p.shape() {
            return Err(Error::ShapeMismatch {
                op: "adamw_step",
                lhs: p.shape(),
                rhs: g.shape(),
            });
        }
    }
    state.step += 1;
    let h = state.hyper;
    let t = state.step as i32;
    let c1 = 1.0 - h.beta1.powi(t);
    let c2 = 1.0 - h.beta2.powi(t);
    for (i, (name, p)) in params.iter_mut().enumerate() {
        let g = grads.get(name)?;
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (((w, &g), m), v) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            let g = g as f64;
            let mm = h.beta1 * *m as f64 + (1.0 - h.beta1) * g;
            let vv = h.beta2 * *v as f64 + (1.0 - h.beta2) * g * g;
            *m = mm as f32;
            *v = vv as f32;
            let w0 = *w as f64;
            let update = (mm / c1) / ((vv / c2).sqrt() + h.eps);
            *w = (w0 - lr * update - lr * h.weight_decay * w0) as f32;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(v: f32) -> ParameterStore {
        let mut s = ParameterStore::new();
        s.insert("w", Tensor::scalar(v)).unwrap();
        s
    }

    fn run(g: f32, wd: f64) -> f32 {
        let mut p = one(1.0);
        let mut st = OptimState::new(
            &p,
            AdamW {
                weight_decay: wd,
                ..Default::default()
            },
        );
        adamw_step(&mut p, &one(g), &mut st, 0.1).unwrap();
        assert_eq!(st.step, 1);
        p.get("w").unwrap().item()
    }

    #[test]
    fn first_step_examples() {
        assert!((run(1.0, 0.0) - 0.9).abs() < 1e-6);
        assert!((run(1.0, 0.01) - 0.899).abs() < 1e-6);
        assert_eq!(run(0.0, 0.0), 1.0);
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut p = one(1.0);
        let mut st = OptimState::new(&p, AdamW::default());
        let empty = ParameterStore::new();
        assert!(matches!(
            adamw_step(&mut p, &empty, &mut st, 0.1),
            Err(Error::MissingGradient(_))
        ));
        assert_eq!(st.step, 0);
    }
}
