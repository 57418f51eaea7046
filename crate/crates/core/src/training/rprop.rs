//! iRprop⁻: sign-based per-coordinate step adaptation, full batch.

use serde::{Deserialize, Serialize};

use crate::error::{DmnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RpropConfig {
    pub eta_plus: f64,
    pub eta_minus: f64,
    pub step_min: f64,
    pub step_max: f64,
    pub step_init: f64,
}

impl Default for RpropConfig {
    fn default() -> Self {
        RpropConfig {
            eta_plus: 1.2,
            eta_minus: 0.5,
            step_min: 1e-6,
            step_max: 50.0,
            step_init: 1e-2,
        }
    }
}

impl RpropConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.eta_plus > 1.0
            && self.eta_minus > 0.0
            && self.eta_minus < 1.0
            && self.step_min > 0.0
            && self.step_max >= self.step_min
            && self.step_init > 0.0;
        if ok {
            Ok(())
        } else {
            Err(DmnError::Config(format!("invalid Rprop constants {self:?}")))
        }
    }
}

#[derive(Debug, Clone)]
pub struct Rprop {
    cfg: RpropConfig,
    steps: Vec<f64>,
    g_prev: Vec<f64>,
}

impl Rprop {
    pub fn new(n: usize, cfg: RpropConfig) -> Self {
        Rprop {
            cfg,
            steps: vec![cfg.step_init.clamp(cfg.step_min, cfg.step_max); n],
            g_prev: vec![0.0; n],
        }
    }

    /// Applies one update to `x` given the gradient `g` at `x`.
    pub fn step(&mut self, x: &mut [f64], g: &[f64]) {
        let c = &self.cfg;
        for k in 0..x.len() {
            let prod = g[k] * self.g_prev[k];
            if prod > 0.0 {
                self.steps[k] = (self.steps[k] * c.eta_plus).min(c.step_max);
            } else if prod < 0.0 {
                self.steps[k] = (self.steps[k] * c.eta_minus).max(c.step_min);
                self.g_prev[k] = 0.0;
                continue;
            }
            if g[k] > 0.0 {
                x[k] -= self.steps[k];
            } else if g[k] < 0.0 {
                x[k] += self.steps[k];
            }
            self.g_prev[k] = g[k];
        }
    }

    /// Shrinks every step after a rejected update and forgets the last signs.
    pub fn reject(&mut self) {
        for (s, g) in self.steps.iter_mut().zip(self.g_prev.iter_mut()) {
            *s = (*s * self.cfg.eta_minus).max(self.cfg.step_min);
            *g = 0.0;
        }
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }
}

/// Runs `epochs` iRprop⁻ updates on `x`. `eval` returns the loss and its
/// gradient; `project` is applied after every update (clamping, quantizing).
/// Returns the loss before each update followed by the final loss.
pub fn minimize(
    x: &mut Vec<f64>,
    epochs: usize,
    cfg: RpropConfig,
    mut eval: impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    mut project: impl FnMut(&mut [f64]),
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut opt = Rprop::new(x.len(), cfg);
    let mut history = Vec::with_capacity(epochs + 1);
    for _ in 0..epochs {
        let (f, g) = eval(x)?;
        if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(DmnError::NonFiniteGradient);
        }
        history.push(f);
        opt.step(x, &g);
        project(x);
    }
    history.push(eval(x)?.0);
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_converges_monotonically() {
        let target = [1.0, -2.0, 0.5, 3.0];
        let scale = [1.0, 10.0, 0.1, 2.0];
        let mut x = vec![0.0; 4];
        let hist = minimize(
            &mut x,
            200,
            RpropConfig::default(),
            |x| {
                let f = (0..4).map(|k| scale[k] * (x[k] - target[k]).powi(2)).sum();
                let g = (0..4).map(|k| 2.0 * scale[k] * (x[k] - target[k])).collect();
                Ok((f, g))
            },
            |_| {},
        )
        .unwrap();
        assert!(*hist.last().unwrap() < 1e-10, "{}", hist.last().unwrap());
        // Monotone decrease of the running best; iRprop⁻ may overshoot single steps.
        let mut best = f64::INFINITY;
        let mut bests = vec![];
        for f in &hist {
            best = best.min(*f);
            bests.push(best);
        }
        assert!(bests.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn sign_flip_suppresses_update() {
        let mut opt = Rprop::new(1, RpropConfig::default());
        let mut x = vec![0.0];
        opt.step(&mut x, &[1.0]);
        assert_eq!(x[0], -1e-2);
        opt.step(&mut x, &[-1.0]);
        assert_eq!(x[0], -1e-2);
        assert_eq!(opt.steps()[0], 5e-3);
        opt.step(&mut x, &[-1.0]);
        assert_eq!(x[0], -1e-2 + 5e-3);
        opt.step(&mut x, &[-1.0]);
        assert!((opt.steps()[0] - 6e-3).abs() < 1e-18);
    }

    #[test]
    fn steps_stay_clamped() {
        let cfg = RpropConfig::default();
        let mut opt = Rprop::new(1, cfg);
        let mut x = vec![0.0];
        for _ in 0..200 {
            opt.step(&mut x, &[1.0]);
        }
        assert_eq!(opt.steps()[0], 50.0);
        for k in 0..200 {
            opt.step(&mut x, &[if k % 2 == 0 { -1.0 } else { 1.0 }]);
        }
        assert_eq!(opt.steps()[0], 1e-6);
    }

    #[test]
    fn nonfinite_gradient_aborts() {
        let mut x = vec![0.0];
        let r = minimize(&mut x, 5, RpropConfig::default(), |_| Ok((1.0, vec![f64::NAN])), |_| {});
        assert!(matches!(r, Err(DmnError::NonFiniteGradient)));
    }
}
