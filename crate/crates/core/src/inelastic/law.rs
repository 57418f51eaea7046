//! Constitutive integration at one material node.

use serde::{Deserialize, Serialize};

use crate::error::{DmnError, Result};
use crate::tensor::{iso_stiffness, iso_stiffness_bulk_shear, mandel_identity, MandelMatrix, SymTensor2};

const NEWTON_MAX: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaterialLaw {
    Elastic {
        stiffness: MandelMatrix,
    },
    /// Von Mises plasticity with `sigma_y = sigma0 + k (p + eps_reg)^n`.
    J2 {
        e: f64,
        nu: f64,
        sigma0: f64,
        k: f64,
        n: f64,
        eps_reg: f64,
    },
}

impl MaterialLaw {
    pub fn elastic_iso(e: f64, nu: f64) -> Result<Self> {
        Ok(MaterialLaw::Elastic {
            stiffness: iso_stiffness(e, nu)?,
        })
    }

    /// Power-law hardening with `sigma0 = 30`, `k = 293`, `n = 0.34`, `eps_reg = 1e-6`.
    pub fn j2_power_law(e: f64, nu: f64) -> Self {
        MaterialLaw::J2 {
            e,
            nu,
            sigma0: 30.0,
            k: 293.0,
            n: 0.34,
            eps_reg: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MaterialLaw::Elastic { stiffness } => crate::tensor::check_spd(&stiffness),
            MaterialLaw::J2 {
                e,
                nu,
                sigma0,
                k,
                n,
                eps_reg,
            } => {
                iso_stiffness(e, nu)?;
                if sigma0 > 0.0 && k > 0.0 && n > 0.0 && n <= 1.0 && eps_reg > 0.0 {
                    Ok(())
                } else {
                    Err(DmnError::Config(format!("invalid hardening constants {self:?}")))
                }
            }
        }
    }

    pub fn elastic_stiffness(&self) -> Result<MandelMatrix> {
        match *self {
            MaterialLaw::Elastic { stiffness } => Ok(stiffness),
            MaterialLaw::J2 { e, nu, .. } => {
                iso_stiffness(e, nu)?;
                let (bulk, mu) = bulk_shear(e, nu);
                Ok(iso_stiffness_bulk_shear(bulk, mu))
            }
        }
    }
}

/// State of one material node. Stresses in MPa; `tangent` and `residual`
/// describe the last increment as `dsig = tangent * deps + residual`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub strain: SymTensor2,
    pub stress: SymTensor2,
    pub p_eq: f64,
    pub plastic_strain: SymTensor2,
    pub tangent: MandelMatrix,
    pub residual: SymTensor2,
}

impl NodeState {
    pub fn initial(law: &MaterialLaw) -> Result<Self> {
        Ok(NodeState {
            strain: SymTensor2::zeros(),
            stress: SymTensor2::zeros(),
            p_eq: 0.0,
            plastic_strain: SymTensor2::zeros(),
            tangent: law.elastic_stiffness()?,
            residual: SymTensor2::zeros(),
        })
    }
}

fn bulk_shear(e: f64, nu: f64) -> (f64, f64) {
    (e / (3.0 * (1.0 - 2.0 * nu)), e / (2.0 * (1.0 + nu)))
}

fn deviator(v: &SymTensor2) -> SymTensor2 {
    let tr = v[0] + v[1] + v[3];
    v - mandel_identity() * (tr / 3.0)
}

/// Integrates `law` over the strain increment `deps` from `state`. The
/// returned state carries the consistent tangent and the residual
/// `residual = dsig - tangent * deps`.
pub fn matint(law: &MaterialLaw, state: &NodeState, deps: &SymTensor2) -> Result<NodeState> {
    match *law {
        MaterialLaw::Elastic { stiffness } => Ok(NodeState {
            strain: state.strain + deps,
            stress: state.stress + stiffness * deps,
            p_eq: state.p_eq,
            plastic_strain: state.plastic_strain,
            tangent: stiffness,
            residual: SymTensor2::zeros(),
        }),
        MaterialLaw::J2 {
            e,
            nu,
            sigma0,
            k,
            n,
            eps_reg,
        } => {
            let (bulk, mu) = bulk_shear(e, nu);
            let ce = iso_stiffness_bulk_shear(bulk, mu);
            let strain = state.strain + deps;
            let trial = ce * (strain - state.plastic_strain);
            let s = deviator(&trial);
            let s_norm = s.norm();
            let q_trial = (1.5f64).sqrt() * s_norm;
            let yield_at = |p: f64| sigma0 + k * (p + eps_reg).powf(n);
            let hardening = |p: f64| k * n * (p + eps_reg).powf(n - 1.0);
            if q_trial <= yield_at(state.p_eq) {
                return Ok(NodeState {
                    strain,
                    residual: SymTensor2::zeros(),
                    stress: state.stress + ce * deps,
                    p_eq: state.p_eq,
                    plastic_strain: state.plastic_strain,
                    tangent: ce,
                });
            }
            // Scalar consistency equation q_trial - 3 mu dp - sigma_y(p + dp) = 0.
            // It is convex and decreasing in dp, so Newton from 0 increases monotonically.
            let mut dp = 0.0;
            let mut it = 0;
            loop {
                let g = q_trial - 3.0 * mu * dp - yield_at(state.p_eq + dp);
                if g.abs() <= 1e-13 * q_trial {
                    break;
                }
                it += 1;
                if it > NEWTON_MAX {
                    return Err(DmnError::ReturnMappingDiverged(it));
                }
                let dg = -3.0 * mu - hardening(state.p_eq + dp);
                dp = (dp - g / dg).max(0.0);
            }
            let p_new = state.p_eq + dp;
            let nrm = s / s_norm;
            let stress = trial - nrm * (2.0 * mu * dp * (1.5f64).sqrt());
            let plastic_strain = state.plastic_strain + nrm * (dp * (1.5f64).sqrt());
            let h = hardening(p_new);
            let theta = 1.0 - 3.0 * mu * dp / q_trial;
            let theta_bar = 1.0 / (1.0 + h / (3.0 * mu)) - (1.0 - theta);
            let m = mandel_identity();
            let vol = m * m.transpose() / 3.0;
            let dev = MandelMatrix::identity() - vol;
            let tangent = vol * (3.0 * bulk) + dev * (2.0 * mu * theta) - nrm * nrm.transpose() * (2.0 * mu * theta_bar);
            Ok(NodeState {
                strain,
                residual: stress - state.stress - tangent * deps,
                stress,
                p_eq: p_new,
                plastic_strain,
                tangent,
            })
        }
    }
}

/// Von Mises equivalent stress of a Mandel stress vector.
pub fn von_mises(s: &SymTensor2) -> f64 {
    (1.5f64).sqrt() * deviator(s).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::SQRT_2;

    fn law() -> MaterialLaw {
        MaterialLaw::j2_power_law(3300.0, 0.41)
    }

    #[test]
    fn small_increment_stays_elastic() {
        let l = law();
        let s0 = NodeState::initial(&l).unwrap();
        let d = SymTensor2::new(1e-4, 0.0, 0.0, 0.0, 0.0, 0.0);
        let s1 = matint(&l, &s0, &d).unwrap();
        assert_eq!(s1.p_eq, 0.0);
        assert!((s1.stress - l.elastic_stiffness().unwrap() * d).norm() < 1e-12);
        assert!(s1.residual.norm() < 1e-12);
    }

    #[test]
    fn plastic_state_lies_on_yield_surface() {
        let l = law();
        let s0 = NodeState::initial(&l).unwrap();
        let d = SymTensor2::new(0.03, 0.0, 0.0, 0.0, 0.0, 0.0);
        let s1 = matint(&l, &s0, &d).unwrap();
        assert!(s1.p_eq > 0.0);
        let sy = 30.0 + 293.0 * (s1.p_eq + 1e-6f64).powf(0.34);
        assert!((von_mises(&s1.stress) - sy).abs() <= 1e-8 * sy);
        // Independent scalar check: the same consistency equation by bisection.
        let mu = 3300.0 / (2.0 * 1.41);
        let q_trial = von_mises(&(l.elastic_stiffness().unwrap() * d));
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let g = q_trial - 3.0 * mu * mid - (30.0 + 293.0 * (mid + 1e-6f64).powf(0.34));
            if g > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((s1.p_eq - lo).abs() < 1e-12);
    }

    #[test]
    fn consistent_tangent_matches_finite_differences() {
        let l = law();
        let mut s = NodeState::initial(&l).unwrap();
        s = matint(&l, &s, &SymTensor2::new(0.01, -0.004, 0.003 * SQRT_2, 0.002, 0.0, 0.001)).unwrap();
        let d = SymTensor2::new(0.004, 0.002, -0.001 * SQRT_2, -0.003, 0.002, 0.0);
        let base = matint(&l, &s, &d).unwrap();
        assert!(base.p_eq > s.p_eq);
        let h = 1e-8;
        let mut max_err: f64 = 0.0;
        for j in 0..6 {
            let mut dp = d;
            dp[j] += h;
            let mut dm = d;
            dm[j] -= h;
            let col = (matint(&l, &s, &dp).unwrap().stress - matint(&l, &s, &dm).unwrap().stress) / (2.0 * h);
            max_err = max_err.max((col - base.tangent.column(j)).norm());
        }
        assert!(max_err < 1e-4 * base.tangent.norm(), "{max_err}");
    }

    #[test]
    fn residual_reproduces_stress_increment() {
        let l = law();
        let s0 = NodeState::initial(&l).unwrap();
        let d = SymTensor2::new(0.02, 0.01, 0.0, -0.01, 0.0, 0.0);
        let s1 = matint(&l, &s0, &d).unwrap();
        assert!((s1.stress - s0.stress - (s1.tangent * d + s1.residual)).norm() < 1e-9);
    }
}
