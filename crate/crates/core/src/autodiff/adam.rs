use super::params::ParamSet;
use super::tensor::{AdError, Result};

/// Bias-corrected Adam moments for every parameter of a [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        let zeros: Vec<Vec<f64>> = params.ids().map(|id| vec![0.0; params.values(id).len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update. Parameters whose gradient is `None` are left alone and
    /// their moments are not decayed.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Option<Vec<f64>>], lr: f64) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(AdError::ShapeMismatch(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        for (id, g) in params.ids().zip(grads) {
            if let Some(g) = g {
                if g.len() != params.values(id).len() {
                    return Err(AdError::ShapeMismatch(format!(
                        "{}: gradient of length {}",
                        params.name(id),
                        g.len()
                    )));
                }
            }
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let ids: Vec<_> = params.ids().collect();
        for (id, g) in ids.into_iter().zip(grads) {
            let Some(g) = g else { continue };
            let (m, v) = (&mut self.m[id.index()], &mut self.v[id.index()]);
            let mut w = params.values(id).to_vec();
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                w[i] -= lr * mh / (vh.sqrt() + self.eps);
            }
            params.set_values(id, &w)?;
        }
        Ok(())
    }
}

/// Linear decay from `base_lr` at epoch 0 to 0 at `total`.
pub fn lr_schedule(epoch: usize, total: usize, base_lr: f64) -> f64 {
    if total == 0 {
        return base_lr;
    }
    (base_lr * (1.0 - epoch as f64 / total as f64)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::super::params::Precision;
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut ps = ParamSet::new(Precision::F64);
        let a = ps.add("a", &[3], vec![1.0, -2.0, 0.5]).unwrap();
        let mut adam = AdamState::new(&ps);
        adam.step(&mut ps, &[Some(vec![0.0; 3])], 1e-3).unwrap();
        assert_eq!(ps.values(a), &[1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_is_lr_sized() {
        let mut ps = ParamSet::new(Precision::F64);
        let a = ps.add("a", &[], vec![0.0]).unwrap();
        let mut adam = AdamState::new(&ps);
        adam.step(&mut ps, &[Some(vec![1.0])], 1e-3).unwrap();
        // m_hat = 1, v_hat = 1
        let expect = -1e-3 / (1.0 + 1e-8);
        assert!((ps.values(a)[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn deterministic_over_100_steps() {
        let run = || {
            let mut ps = ParamSet::new(Precision::F32);
            let a = ps.add("a", &[2], vec![0.3, -0.7]).unwrap();
            let mut adam = AdamState::new(&ps);
            for s in 0..100 {
                let w = ps.values(a).to_vec();
                let g = vec![2.0 * w[0] + s as f64 * 1e-3, w[1].sin()];
                adam.step(&mut ps, &[Some(g)], 1e-2).unwrap();
            }
            ps.values(a).iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut ps = ParamSet::new(Precision::F64);
        ps.add("a", &[2], vec![0.0; 2]).unwrap();
        let mut adam = AdamState::new(&ps);
        assert!(adam.step(&mut ps, &[Some(vec![1.0])], 1e-3).is_err());
        assert!(adam.step(&mut ps, &[], 1e-3).is_err());
    }

    #[test]
    fn schedule_endpoints() {
        assert_eq!(lr_schedule(0, 100, 1e-3), 1e-3);
        assert_eq!(lr_schedule(100, 100, 1e-3), 0.0);
        assert!((lr_schedule(50, 100, 1e-3) - 5e-4).abs() < 1e-18);
        assert_eq!(lr_schedule(150, 100, 1e-3), 0.0);
    }
}
