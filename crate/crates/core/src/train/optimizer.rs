use crate::error::{Error, Result};
use crate::network::ModelParams;
use crate::numcore::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    RAdam,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::RAdam => "radam",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "adam" => Ok(OptimizerKind::Adam),
            "radam" => Ok(OptimizerKind::RAdam),
            _ => Err(Error::invalid(format!("unknown optimizer {name:?} (expected adam or radam)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::RAdam,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip: Some(5.0),
        }
    }
}

/// Length of the approximated simple moving average at step `t`, and its limit.
pub fn radam_rho(beta2: f64, t: u64) -> (f64, f64) {
    let rho_inf = 2.0 / (1.0 - beta2) - 1.0;
    let b2t = beta2.powi(t as i32);
    (rho_inf - 2.0 * t as f64 * b2t / (1.0 - b2t), rho_inf)
}

/// Variance rectification term, or `None` while the variance is intractable
/// (`rho_t <= 4`) and the step falls back to bias-corrected momentum.
pub fn radam_rectifier(beta2: f64, t: u64) -> Option<f64> {
    let (rho, rho_inf) = radam_rho(beta2, t);
    (rho > 4.0).then(|| {
        ((rho - 4.0) * (rho - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho)).sqrt()
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub grad_norm: f64,
    /// Factor applied by clipping (1 when not clipped).
    pub clip_scale: f64,
    pub rectified: bool,
}

/// Adam / RAdam moments, one buffer per parameter tensor in visit order.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new<T: Real>(config: OptimizerConfig, params: &ModelParams<Tensor<T>>) -> Self {
        let mut m = Vec::new();
        params.visit(&mut |_, t| m.push(vec![0.0; t.len()]));
        let v = m.clone();
        Self { config, step: 0, m, v }
    }

    /// Applies one update. `grads` follow the parameters' visit order. A
    /// non-finite gradient rejects the whole step and names the tensor.
    pub fn apply<T: Real>(&mut self, params: &mut ModelParams<Tensor<T>>, grads: &[Tensor<T>]) -> Result<StepInfo> {
        if grads.len() != self.m.len() {
            return Err(Error::dim(format!("{} gradients for {} parameters", grads.len(), self.m.len())));
        }
        let names = params.names();
        let mut sq = 0.0;
        for ((name, g), m) in names.iter().zip(grads).zip(&self.m) {
            if g.len() != m.len() {
                return Err(Error::dim(format!("gradient for {name} has {} values, expected {}", g.len(), m.len())));
            }
            for &x in g.data() {
                let x = x.as_f64();
                if !x.is_finite() {
                    return Err(Error::NonFiniteGradient(name.clone()));
                }
                sq += x * x;
            }
        }
        let grad_norm = sq.sqrt();
        let clip_scale = match self.config.clip {
            Some(c) if grad_norm > c => c / grad_norm,
            _ => 1.0,
        };

        self.step += 1;
        let t = self.step;
        let OptimizerConfig { kind, lr, beta1, beta2, eps, .. } = self.config;
        let bc1 = 1.0 - beta1.powi(t as i32);
        let bc2 = 1.0 - beta2.powi(t as i32);
        let rect = match kind {
            OptimizerKind::Adam => Some(1.0),
            OptimizerKind::RAdam => radam_rectifier(beta2, t),
        };

        let mut i = 0;
        let (ms, vs) = (&mut self.m, &mut self.v);
        params.visit_mut(&mut |_, p| {
            let (m, v) = (&mut ms[i], &mut vs[i]);
            for (((w, &g), m), v) in p.data_mut().iter_mut().zip(grads[i].data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                let g = g.as_f64() * clip_scale;
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let update = match rect {
                    Some(r) => r * m_hat / ((*v / bc2).sqrt() + eps),
                    None => m_hat,
                };
                *w = T::lit(w.as_f64() - lr * update);
            }
            i += 1;
        });
        Ok(StepInfo {
            grad_norm,
            clip_scale,
            rectified: matches!(kind, OptimizerKind::RAdam) && rect.is_some(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_model, ModelConfig};

    fn scalar_model(x: f64) -> ModelParams<Tensor<f64>> {
        // Smallest model; tests only touch the head bias through `visit_mut`.
        let mut p = build_model::<f64>(&ModelConfig::tokens(1, 1, 2, 1), 0).unwrap();
        p.visit_mut(&mut |_, t| t.data_mut().iter_mut().for_each(|v| *v = x));
        p
    }

    fn grads_like(p: &ModelParams<Tensor<f64>>, f: impl Fn(f64) -> f64) -> Vec<Tensor<f64>> {
        let mut out = Vec::new();
        p.visit(&mut |_, t| {
            let data = t.data().iter().map(|&v| f(v)).collect();
            out.push(Tensor::new(t.shape().to_vec(), data).unwrap());
        });
        out
    }

    #[test]
    fn quadratic_converges() {
        for kind in [OptimizerKind::Adam, OptimizerKind::RAdam] {
            let cfg = OptimizerConfig { kind, lr: 0.05, clip: None, ..Default::default() };
            let mut p = scalar_model(3.0);
            let mut opt = OptimizerState::new(cfg, &p);
            for _ in 0..500 {
                // d/dx (x − 1)² = 2(x − 1)
                let g = grads_like(&p, |x| 2.0 * (x - 1.0));
                opt.apply(&mut p, &g).unwrap();
            }
            p.visit(&mut |_, t| {
                for &v in t.data() {
                    assert!((v - 1.0).abs() < 1e-2, "{kind:?}: {v}");
                }
            });
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = scalar_model(0.7);
        let before = p.clone();
        let mut opt = OptimizerState::new(OptimizerConfig::default(), &p);
        for _ in 0..10 {
            let g = grads_like(&p, |_| 0.0);
            opt.apply(&mut p, &g).unwrap();
        }
        p.visit(&mut |_, t| assert!(t.data().iter().all(|&v| (v - 0.7).abs() < 1e-12)));
        assert_eq!(p, before);
    }

    #[test]
    fn nan_gradient_rejected_with_name() {
        let mut p = scalar_model(0.1);
        let before = p.clone();
        let mut opt = OptimizerState::new(OptimizerConfig::default(), &p);
        let mut g = grads_like(&p, |_| 1.0);
        let last = g.len() - 1;
        g[last].data_mut()[0] = f64::NAN;
        match opt.apply(&mut p, &g) {
            Err(Error::NonFiniteGradient(name)) => assert_eq!(name, "head.b"),
            other => panic!("expected a non-finite gradient error, got {other:?}"),
        }
        assert_eq!(p, before);
        assert_eq!(opt.step, 0);
    }

    #[test]
    fn rectifier_window() {
        // rho_t <= 4 for the first four steps with beta2 = 0.999.
        for t in 1..=4 {
            assert!(radam_rectifier(0.999, t).is_none(), "t={t}");
        }
        let r5 = radam_rectifier(0.999, 5).unwrap();
        assert!(r5 > 0.0 && r5 < 0.1);
        let mut prev = r5;
        for t in 6..20_000 {
            let r = radam_rectifier(0.999, t).unwrap();
            assert!(r >= prev && r < 1.0);
            prev = r;
        }
        assert!(prev > 0.99);
    }

    /// Scalar RAdam written out from the update rule, independent of the
    /// tensor code above.
    fn reference_radam(grads: &[f64], lr: f64, x0: f64) -> Vec<f64> {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let rho_inf = 2.0 / (1.0 - b2) - 1.0;
        let (mut m, mut v, mut x) = (0.0, 0.0, x0);
        let mut out = Vec::new();
        for (i, &g) in grads.iter().enumerate() {
            let t = (i + 1) as f64;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1.powf(t));
            let rho = rho_inf - 2.0 * t * b2.powf(t) / (1.0 - b2.powf(t));
            if rho > 4.0 {
                let v_hat = (v / (1.0 - b2.powf(t))).sqrt();
                let r = ((rho - 4.0) * (rho - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho)).sqrt();
                x -= lr * r * m_hat / (v_hat + eps);
            } else {
                x -= lr * m_hat;
            }
            out.push(x);
        }
        out
    }

    #[test]
    fn radam_matches_reference_trace_and_adam_after_warmup() {
        let stream: Vec<f64> = (0..60).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
        let expect = reference_radam(&stream, 1e-2, 0.5);
        let run = |kind| {
            let cfg = OptimizerConfig { kind, lr: 1e-2, clip: None, ..Default::default() };
            let mut p = scalar_model(0.5);
            let mut opt = OptimizerState::new(cfg, &p);
            let mut trace = Vec::new();
            for &g in &stream {
                let grads = grads_like(&p, |_| g);
                let info = opt.apply(&mut p, &grads).unwrap();
                assert_eq!(info.rectified, kind == OptimizerKind::RAdam && opt.step >= 5);
                trace.push(p.head.bias.data()[0]);
            }
            trace
        };
        let radam = run(OptimizerKind::RAdam);
        for (a, b) in radam.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        // Per-step updates: identical rule shape once rectified, scaled by r_t.
        let adam = run(OptimizerKind::Adam);
        let upd = |tr: &[f64], i: usize| tr[i] - if i == 0 { 0.5 } else { tr[i - 1] };
        for i in 4..60 {
            let r = radam_rectifier(0.999, i as u64 + 1).unwrap();
            assert!((upd(&radam, i) - r * upd(&adam, i)).abs() < 1e-12);
        }
        for i in 0..4 {
            assert!((upd(&radam, i) - upd(&adam, i)).abs() > 1e-6);
        }
    }

    #[test]
    fn clipping_scales_global_norm() {
        let mut p = scalar_model(0.0);
        let cfg = OptimizerConfig { clip: Some(1.0), ..Default::default() };
        let mut opt = OptimizerState::new(cfg, &p);
        let g = grads_like(&p, |_| 3.0);
        let info = opt.apply(&mut p, &g).unwrap();
        let count = p.param_count() as f64;
        assert!((info.grad_norm - 3.0 * count.sqrt()).abs() < 1e-9);
        assert!((info.clip_scale * info.grad_norm - 1.0).abs() < 1e-12);
    }
}
