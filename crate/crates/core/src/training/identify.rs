//! Inverse identification of phase constants and volume fraction from an
//! effective stiffness, through a trained parametric net.

use serde::{Deserialize, Serialize};

use crate::error::{DmnError, Result};
use crate::network::StiffnessGrad;
use crate::parametric::{MicroParams, ParamNet};
use crate::tensor::{EngineeringConstants, Mat3, MandelMatrix};
use crate::training::rprop::{Rprop, RpropConfig};

const VF_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentifyConfig {
    pub iterations: usize,
    pub rprop: RpropConfig,
    /// Stop once the loss falls below this value.
    pub tol: f64,
    /// Factor over the starting loss that counts as divergence.
    pub divergence_factor: f64,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        IdentifyConfig {
            iterations: 1000,
            rprop: RpropConfig::default(),
            tol: 1e-14,
            divergence_factor: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseGuess {
    pub phases: [EngineeringConstants; 2],
    pub vf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifyOutcome {
    pub phases: [EngineeringConstants; 2],
    pub vf: f64,
    /// Loss at every iterate, starting with the initial guess.
    pub history: Vec<f64>,
    /// `||C_dmn - C_data|| / ||C_data||` at the returned point.
    pub rel_error: f64,
}

/// Optimization variables: log of each modulus, raw ratios, then vf.
fn encode(g: &PhaseGuess) -> Vec<f64> {
    let mut x = Vec::new();
    for ph in &g.phases {
        for (k, v) in ph.params().into_iter().enumerate() {
            x.push(if ph.is_modulus(k) { v.ln() } else { v });
        }
    }
    x.push(g.vf);
    x
}

fn decode(template: &PhaseGuess, x: &[f64]) -> Result<PhaseGuess> {
    let mut off = 0;
    let mut phases = template.phases;
    for ph in phases.iter_mut() {
        let n = ph.n_params();
        let vals: Vec<f64> = (0..n)
            .map(|k| if ph.is_modulus(k) { x[off + k].exp() } else { x[off + k] })
            .collect();
        *ph = ph.with_params(&vals)?;
        off += n;
    }
    Ok(PhaseGuess { phases, vf: x[off] })
}

/// Calibration loss `||C_dmn - C_data||^2 / ||C_data||^2` and its gradient
/// with respect to the encoded variables.
fn loss_and_gradient(
    net: &ParamNet,
    q: &[f64],
    target: &MandelMatrix,
    template: &PhaseGuess,
    x: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let g = decode(template, x)?;
    let c1 = g.phases[0].stiffness()?;
    let c2 = g.phases[1].stiffness()?;
    let p_phys = MicroParams::new(g.vf, q.to_vec());
    let p = net.rescale.apply(&p_phys);
    let prep = net.eval_params(&p)?.prepare()?;
    let tape = prep.stiffness_tape(&c1, &c2)?;
    let inv_n2 = 1.0 / target.norm_squared();
    let diff = tape.root() - target;
    let loss = diff.norm_squared() * inv_n2;

    let mut sg = StiffnessGrad::zeros(&prep.topology);
    prep.stiffness_adjoint(&tape, &c1, &c2, &(diff * (2.0 * inv_n2)), &mut sg);
    let mut grad = Vec::with_capacity(x.len());
    let mut off = 0;
    for (ph, cbar) in g.phases.iter().zip([&sg.c1, &sg.c2]) {
        for (k, dc) in ph.stiffness_gradient()?.iter().enumerate() {
            let d = cbar.dot(dc);
            grad.push(if ph.is_modulus(k) { d * x[off + k].exp() } else { d });
        }
        off += ph.n_params();
    }
    let mut w_bar = vec![0.0; prep.weights.len()];
    prep.weight_adjoint(&sg.f, &mut w_bar);
    let mut r_bar = vec![Mat3::zeros(); prep.rot.len()];
    prep.q_to_r_adjoint(&sg.q, &mut r_bar);
    let q_bar = prep.r_to_quat_adjoint(&r_bar)?;
    grad.push(net.vf_gradient(&p, &w_bar, &q_bar)?);
    Ok((loss, grad))
}

/// Minimizes the calibration loss over the phase engineering constants and
/// vf, keeping each phase's symmetry class. `q` are the morphological
/// parameters in physical units. Returns the best iterate seen.
pub fn identify(
    net: &ParamNet,
    q: &[f64],
    target: &MandelMatrix,
    init: &PhaseGuess,
    cfg: &IdentifyConfig,
) -> Result<IdentifyOutcome> {
    cfg.rprop.validate()?;
    if !(init.vf > 0.0 && init.vf < 1.0) {
        return Err(DmnError::Config(format!("initial vf {} outside (0, 1)", init.vf)));
    }
    if !(target.norm_squared() > 0.0) {
        return Err(DmnError::Data("target stiffness is zero".into()));
    }
    let mut x = encode(init);
    let n = x.len();
    let (mut f, mut g) = loss_and_gradient(net, q, target, init, &x)?;
    let start = f;
    let mut history = vec![f];
    let mut best = (f, x.clone());
    let mut opt = Rprop::new(n, cfg.rprop);
    for _ in 0..cfg.iterations {
        if f < cfg.tol {
            break;
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(DmnError::NonFiniteGradient);
        }
        let prev = x.clone();
        opt.step(&mut x, &g);
        x[n - 1] = x[n - 1].clamp(VF_MARGIN, 1.0 - VF_MARGIN);
        match loss_and_gradient(net, q, target, init, &x) {
            Ok((fx, gx)) => {
                f = fx;
                g = gx;
            }
            // Inadmissible constants: step back and shrink every step.
            Err(DmnError::NotPositiveDefinite(_)) | Err(DmnError::AllWeightsZero) => {
                x = prev;
                opt.reject();
            }
            Err(e) => return Err(e),
        }
        history.push(f);
        if f > cfg.divergence_factor * start {
            return Err(DmnError::Diverged { start, current: f });
        }
        if f < best.0 {
            best = (f, x.clone());
        }
    }
    let out = decode(init, &best.1)?;
    Ok(IdentifyOutcome {
        phases: out.phases,
        vf: out.vf,
        history,
        rel_error: best.0.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Topology;
    use crate::parametric::{init_params, Activation, Architecture};

    fn setup() -> (ParamNet, PhaseGuess, MandelMatrix) {
        let mut net = init_params(Topology::new(3).unwrap(), 1, Architecture::Mi, Activation::Relu, 4);
        for (i, w) in net.w1.iter_mut().enumerate() {
            *w = if i % 2 == 0 { -0.6 } else { 0.6 };
        }
        for (k, t) in net.theta1.iter_mut().enumerate() {
            *t = 0.2 * (k as f64).sin();
        }
        let truth = PhaseGuess {
            phases: [
                EngineeringConstants::Isotropic { e: 3300.0, nu: 0.41 },
                EngineeringConstants::TransverselyIsotropic {
                    e1: 72000.0,
                    e2: 30000.0,
                    nu12: 0.22,
                    nu23: 0.3,
                    g12: 20000.0,
                },
            ],
            vf: 0.4,
        };
        let p = MicroParams::new(truth.vf, vec![0.3]);
        let c = net
            .eval_physical(&p)
            .unwrap()
            .prepare()
            .unwrap()
            .stiffness(&truth.phases[0].stiffness().unwrap(), &truth.phases[1].stiffness().unwrap())
            .unwrap();
        (net, truth, c)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (net, truth, target) = setup();
        let mut guess = truth.clone();
        guess.vf = 0.45;
        guess.phases[0] = EngineeringConstants::Isotropic { e: 3000.0, nu: 0.38 };
        let x = encode(&guess);
        let (_, g) = loss_and_gradient(&net, &[0.3], &target, &guess, &x).unwrap();
        for k in 0..x.len() {
            let h = 1e-6 * x[k].abs().max(1.0);
            let mut xp = x.clone();
            xp[k] += h;
            let fp = loss_and_gradient(&net, &[0.3], &target, &guess, &xp).unwrap().0;
            xp[k] -= 2.0 * h;
            let fm = loss_and_gradient(&net, &[0.3], &target, &guess, &xp).unwrap().0;
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - g[k]).abs() <= 1e-5 * fd.abs().max(g[k].abs()).max(1e-6), "{k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn truth_is_a_fixed_point() {
        let (net, truth, target) = setup();
        let out = identify(&net, &[0.3], &target, &truth, &IdentifyConfig::default()).unwrap();
        assert!(out.history[0] < 1e-12);
        assert_eq!(out.history.len(), 1);
    }

    #[test]
    fn perturbed_guess_converges() {
        let (net, truth, target) = setup();
        let mut guess = truth.clone();
        guess.vf = 0.4 * 1.2;
        guess.phases[0] = EngineeringConstants::Isotropic { e: 3300.0 * 0.8, nu: 0.41 * 0.9 };
        let out = identify(&net, &[0.3], &target, &guess, &IdentifyConfig::default()).unwrap();
        assert!(out.rel_error < 5e-3, "{}", out.rel_error);
    }

    #[test]
    fn rejects_vf_outside_unit_interval() {
        let (net, mut truth, target) = setup();
        truth.vf = 1.0;
        assert!(identify(&net, &[0.3], &target, &truth, &IdentifyConfig::default()).is_err());
    }
}
