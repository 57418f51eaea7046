//! Training objective: relative Frobenius data loss, volume-fraction and
//! orientation constraints, and their exact gradient with respect to the
//! parametric-layer fitting parameters.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Split};
use crate::error::{DmnError, Result};
use crate::network::{dmn_vf, dmn_vf_gradient, PreparedDmn, StiffnessGrad};
use crate::parametric::{MicroParams, ParamGrad, ParamNet};
use crate::tensor::{Mat3, MandelMatrix};

/// Number of samples handled by one parallel work item. Partial sums are
/// reduced in a fixed order, so results do not depend on the thread count.
const CHUNK: usize = 16;

/// Target material-frame orientation tensors `a^(1..3)` of one phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OrientationTarget {
    /// Material frame aligned with the global frame: `a^(i) = e_i (x) e_i`.
    Unidirectional,
    /// `e1`, `e2` isotropic in the 1-2 plane, `e3` aligned with the global `e3`.
    PlanarIsotropic,
    Constant { a: [Mat3; 3] },
    /// Piecewise-constant map: the nearest tabulated parameter point wins.
    Tabulated { points: Vec<MicroParams>, a: Vec<[Mat3; 3]> },
}

impl OrientationTarget {
    pub fn at(&self, p: &MicroParams) -> [Mat3; 3] {
        let diag = |x: f64, y: f64, z: f64| Mat3::from_diagonal(&nalgebra::Vector3::new(x, y, z));
        match self {
            OrientationTarget::Unidirectional => [
                diag(1.0, 0.0, 0.0),
                diag(0.0, 1.0, 0.0),
                diag(0.0, 0.0, 1.0),
            ],
            OrientationTarget::PlanarIsotropic => [
                diag(0.5, 0.5, 0.0),
                diag(0.5, 0.5, 0.0),
                diag(0.0, 0.0, 1.0),
            ],
            OrientationTarget::Constant { a } => *a,
            OrientationTarget::Tabulated { points, a } => {
                let dist = |x: &MicroParams| {
                    (x.vf - p.vf).powi(2)
                        + x.q.iter().zip(&p.q).map(|(u, v)| (u - v).powi(2)).sum::<f64>()
                };
                let k = (0..points.len())
                    .min_by(|&i, &j| dist(&points[i]).total_cmp(&dist(&points[j])))
                    .unwrap_or(0);
                a[k]
            }
        }
    }
}

/// Orientation targets per phase; `None` leaves that phase unconstrained.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConstraintTargets {
    pub phases: [Option<OrientationTarget>; 2],
}

impl ConstraintTargets {
    pub fn unidirectional() -> Self {
        ConstraintTargets {
            phases: [
                Some(OrientationTarget::Unidirectional),
                Some(OrientationTarget::Unidirectional),
            ],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.phases.iter().all(|p| p.is_none())
    }
}

/// One material sample prepared for the data term.
#[derive(Debug, Clone)]
struct Record {
    c1: MandelMatrix,
    c2: MandelMatrix,
    cref: MandelMatrix,
    inv_norm2: f64,
}

#[derive(Debug, Clone)]
struct Group {
    p: MicroParams,
    records: Vec<Record>,
}

/// Everything needed to evaluate the total loss of a parametric net.
#[derive(Debug, Clone)]
pub struct Objective {
    groups: Vec<Group>,
    pub vf_points: Vec<MicroParams>,
    pub a_points: Vec<MicroParams>,
    pub targets: ConstraintTargets,
    pub lambda_vf: f64,
    pub lambda_a: f64,
}

/// Loss components at one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub data: f64,
    /// Mean squared relative error for each parameter point.
    pub per_p: Vec<f64>,
    pub vf: f64,
    pub orientation: f64,
    pub total: f64,
}

impl Objective {
    /// Builds the data term from the samples of `dataset` in `split`; the
    /// parameter points are mapped through `rescale_of` (the net's rescaling).
    pub fn new(
        dataset: &Dataset,
        split: &[Split],
        rescale: &crate::parametric::Rescale,
        vf_points: Vec<MicroParams>,
        a_points: Vec<MicroParams>,
        targets: ConstraintTargets,
        lambda_vf: f64,
        lambda_a: f64,
    ) -> Result<Self> {
        let groups = dataset
            .groups(|s| split.contains(&s.split))
            .into_iter()
            .map(|g| {
                let records = g
                    .samples
                    .iter()
                    .map(|s| {
                        let n2 = s.cbar.norm_squared();
                        if !(n2 > 0.0) {
                            return Err(DmnError::Data("reference stiffness is zero".into()));
                        }
                        Ok(Record {
                            c1: s.c1,
                            c2: s.c2,
                            cref: s.cbar,
                            inv_norm2: 1.0 / n2,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Group {
                    p: rescale.apply(&g.p),
                    records,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Objective {
            groups,
            vf_points,
            a_points,
            targets,
            lambda_vf,
            lambda_a,
        })
    }

    pub fn n_points(&self) -> usize {
        self.groups.len()
    }

    pub fn n_samples(&self) -> usize {
        self.groups.iter().map(|g| g.records.len()).sum()
    }

    pub fn loss(&self, net: &ParamNet) -> Result<LossValue> {
        Ok(self.eval(net, false)?.0)
    }

    pub fn loss_and_gradient(&self, net: &ParamNet) -> Result<(LossValue, Vec<f64>)> {
        let (v, g) = self.eval(net, true)?;
        let g = g.expect("gradient requested").flatten();
        if g.iter().any(|x| !x.is_finite()) {
            return Err(DmnError::NonFiniteGradient);
        }
        Ok((v, g))
    }

    fn eval(&self, net: &ParamNet, with_grad: bool) -> Result<(LossValue, Option<ParamGrad>)> {
        net.check_shapes()?;
        let mut grad = with_grad.then(|| net.zero_grad());
        let (data, per_p) = self.data_term(net, grad.as_mut())?;
        let vf = if self.lambda_vf > 0.0 && !self.vf_points.is_empty() {
            self.vf_term(net, self.lambda_vf, grad.as_mut())?
        } else {
            0.0
        };
        let orientation = if self.lambda_a > 0.0 && !self.a_points.is_empty() && !self.targets.is_empty() {
            self.orientation_term(net, self.lambda_a, grad.as_mut())?
        } else {
            0.0
        };
        let total = data + self.lambda_vf * vf + self.lambda_a * orientation;
        Ok((
            LossValue {
                data,
                per_p,
                vf,
                orientation,
                total,
            },
            grad,
        ))
    }

    fn data_term(&self, net: &ParamNet, grad: Option<&mut ParamGrad>) -> Result<(f64, Vec<f64>)> {
        if self.groups.is_empty() {
            return Ok((0.0, vec![]));
        }
        let with_grad = grad.is_some();
        let prepared: Vec<Option<PreparedDmn>> = self
            .groups
            .iter()
            .map(|g| match net.eval_params(&g.p)?.prepare() {
                Ok(p) => Ok(Some(p)),
                Err(DmnError::AllWeightsZero) => Ok(None),
                Err(e) => Err(e),
            })
            .collect::<Result<_>>()?;
        let jobs: Vec<(usize, usize)> = self
            .groups
            .iter()
            .enumerate()
            .flat_map(|(gi, g)| (0..g.records.len().div_ceil(CHUNK)).map(move |c| (gi, c)))
            .collect();
        let n_p = self.groups.len() as f64;
        let partials: Vec<(usize, f64, Option<StiffnessGrad>)> = jobs
            .par_iter()
            .map(|&(gi, c)| -> Result<_> {
                let g = &self.groups[gi];
                let recs = &g.records[c * CHUNK..((c + 1) * CHUNK).min(g.records.len())];
                let Some(prep) = &prepared[gi] else {
                    // A network without weight predicts a zero stiffness: relative error 1.
                    return Ok((gi, recs.len() as f64, None));
                };
                let scale = 1.0 / (g.records.len() as f64 * n_p);
                let mut sum = 0.0;
                let mut acc = with_grad.then(|| StiffnessGrad::zeros(&prep.topology));
                for r in recs {
                    let tape = prep.stiffness_tape(&r.c1, &r.c2)?;
                    let diff = tape.root() - r.cref;
                    sum += diff.norm_squared() * r.inv_norm2;
                    if let Some(acc) = acc.as_mut() {
                        let g_root = diff * (2.0 * r.inv_norm2 * scale);
                        prep.stiffness_adjoint(&tape, &r.c1, &r.c2, &g_root, acc);
                    }
                }
                Ok((gi, sum, acc))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut sums = vec![0.0; self.groups.len()];
        let mut accs: Vec<Option<StiffnessGrad>> = vec![None; self.groups.len()];
        for (gi, s, acc) in partials {
            sums[gi] += s;
            if let Some(a) = acc {
                match &mut accs[gi] {
                    Some(t) => t.add(&a),
                    slot => *slot = Some(a),
                }
            }
        }
        let per_p: Vec<f64> = sums
            .iter()
            .zip(&self.groups)
            .map(|(s, g)| s / g.records.len() as f64)
            .collect();
        let data = per_p.iter().sum::<f64>() / n_p;

        if let Some(grad) = grad {
            for (gi, acc) in accs.into_iter().enumerate() {
                let (Some(acc), Some(prep)) = (acc, &prepared[gi]) else {
                    continue;
                };
                let mut w_bar = vec![0.0; prep.weights.len()];
                prep.weight_adjoint(&acc.f, &mut w_bar);
                let mut r_bar = vec![Mat3::zeros(); prep.rot.len()];
                prep.q_to_r_adjoint(&acc.q, &mut r_bar);
                let q_bar = prep.r_to_quat_adjoint(&r_bar)?;
                net.backprop(&self.groups[gi].p, &w_bar, &q_bar, grad)?;
            }
        }
        Ok((data, per_p))
    }

    fn vf_term(&self, net: &ParamNet, lambda: f64, mut grad: Option<&mut ParamGrad>) -> Result<f64> {
        let n = self.vf_points.len() as f64;
        let mut loss = 0.0;
        for p in &self.vf_points {
            let w = net.weights(p)?;
            match dmn_vf(&w) {
                Ok(vf) => {
                    let d = vf - p.vf;
                    loss += d * d;
                    if let Some(g) = grad.as_deref_mut() {
                        let dv = dmn_vf_gradient(&w)?;
                        let w_bar: Vec<f64> = dv.iter().map(|x| x * 2.0 * d * lambda / n).collect();
                        net.backprop(p, &w_bar, &[], g)?;
                    }
                }
                Err(DmnError::AllWeightsZero) => loss += 1.0,
                Err(e) => return Err(e),
            }
        }
        Ok(loss / n)
    }

    fn orientation_term(&self, net: &ParamNet, lambda: f64, mut grad: Option<&mut ParamGrad>) -> Result<f64> {
        let n = self.a_points.len() as f64;
        let mut loss = 0.0;
        for p in &self.a_points {
            let prep = match net.eval_params(p)?.prepare() {
                Ok(prep) => Some(prep),
                Err(DmnError::AllWeightsZero) => None,
                Err(e) => return Err(e),
            };
            let mut w_bar = vec![0.0; net.w0.len()];
            let mut r_bar = vec![Mat3::zeros(); net.topology.n_laminates()];
            let mut touched = false;
            for (phase, target) in self.targets.phases.iter().enumerate() {
                let Some(target) = target else { continue };
                let t = target.at(p);
                let a = match prep.as_ref().map(|pr| pr.orientation_tensors(phase)) {
                    Some(Ok(a)) => a,
                    Some(Err(DmnError::PhaseHasNoWeight(_))) | None => {
                        // Missing phase: penalize as if its tensors were zero.
                        loss += t.iter().map(|x| x.norm_squared()).sum::<f64>();
                        continue;
                    }
                    Some(Err(e)) => return Err(e),
                };
                let diff: [Mat3; 3] = std::array::from_fn(|i| a[i] - t[i]);
                loss += diff.iter().map(|x| x.norm_squared()).sum::<f64>();
                if grad.is_some() {
                    let a_bar: [Mat3; 3] = std::array::from_fn(|i| diff[i] * (2.0 * lambda / n));
                    prep.as_ref()
                        .expect("weighted phase")
                        .orientation_adjoint(phase, &a_bar, &mut w_bar, &mut r_bar)?;
                    touched = true;
                }
            }
            if let (Some(g), Some(prep), true) = (grad.as_deref_mut(), prep.as_ref(), touched) {
                let q_bar = prep.r_to_quat_adjoint(&r_bar)?;
                net.backprop(p, &w_bar, &q_bar, g)?;
            }
        }
        Ok(loss / n)
    }

    /// Relative errors `e_i` of every sample in `dataset`, in dataset order.
    pub fn sample_errors(net: &ParamNet, dataset: &Dataset) -> Result<Vec<f64>> {
        dataset
            .samples
            .par_iter()
            .map(|s| {
                let m = net.eval_physical(&s.p)?;
                let c = match m.prepare() {
                    Ok(p) => p.stiffness(&s.c1, &s.c2)?,
                    Err(DmnError::AllWeightsZero) => MandelMatrix::zeros(),
                    Err(e) => return Err(e),
                };
                Ok((c - s.cbar).norm() / s.cbar.norm())
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Sample;
    use crate::network::Topology;
    use crate::parametric::{init_params, Activation, Architecture, Rescale};
    use crate::tensor::iso_stiffness;
    use crate::training::sampling::{sobol_params, vf_collocation};

    fn teacher_dataset(net: &ParamNet, vfs: &[f64], n: usize) -> Dataset {
        let mut ds = Dataset::new(net.q_dim);
        for (k, &vf) in vfs.iter().enumerate() {
            for m in 0..n {
                let c1 = iso_stiffness(1000.0 + 300.0 * m as f64, 0.3).unwrap();
                let c2 = iso_stiffness(20000.0 + 5000.0 * (m + k) as f64, 0.2 + 0.02 * m as f64).unwrap();
                let p = MicroParams::new(vf, vec![0.3 * k as f64; net.q_dim]);
                let cbar = net.eval_params(&p).unwrap().prepare().unwrap().stiffness(&c1, &c2).unwrap();
                ds.samples.push(Sample { p, c1, c2, cbar, split: Split::Train });
            }
        }
        ds
    }

    fn objective(ds: &Dataset, net: &ParamNet, lv: f64, la: f64) -> Objective {
        let n = net.topology.n_nodes();
        let vf_points = match net.arch {
            Architecture::Mi => vf_collocation(n)
                .into_iter()
                .map(|v| MicroParams::new(v, vec![0.0; net.q_dim]))
                .collect(),
            _ => sobol_params(n, net.q_dim).unwrap(),
        };
        Objective::new(
            ds,
            &[Split::Train],
            &Rescale::identity(net.q_dim),
            vf_points,
            sobol_params(n, net.q_dim).unwrap(),
            ConstraintTargets::unidirectional(),
            lv,
            la,
        )
        .unwrap()
    }

    #[test]
    fn student_equal_to_teacher_has_zero_data_loss() {
        let topo = Topology::new(3).unwrap();
        let mut net = init_params(topo, 1, Architecture::Mi, Activation::Relu, 3);
        net.w1.iter_mut().for_each(|x| *x = 0.1);
        let ds = teacher_dataset(&net, &[0.2, 0.5], 3);
        let obj = objective(&ds, &net, 0.0, 0.0);
        let v = obj.loss(&net).unwrap();
        assert!(v.data < 1e-28, "{}", v.data);
        assert_eq!(v.per_p.len(), 2);
    }

    #[test]
    fn one_percent_scaling_gives_1e_minus_4() {
        let topo = Topology::new(2).unwrap();
        let net = init_params(topo, 0, Architecture::Plain, Activation::Relu, 1);
        let mut ds = teacher_dataset(&net, &[0.5], 1);
        ds.samples[0].cbar /= 1.01;
        let obj = objective(&ds, &net, 0.0, 0.0);
        assert!((obj.loss(&net).unwrap().data - 1e-4).abs() < 1e-15);
    }

    #[test]
    fn constant_weights_vf_loss() {
        let topo = Topology::new(2).unwrap();
        let net = ParamNet::zeros(topo, Architecture::Mi, Activation::Relu, 0);
        let obj = Objective::new(
            &Dataset::new(0),
            &[Split::Train],
            &Rescale::identity(0),
            vf_collocation(3).into_iter().map(|v| MicroParams::new(v, vec![])).collect(),
            vec![],
            ConstraintTargets::default(),
            1.0,
            0.0,
        )
        .unwrap();
        let v = obj.loss(&net).unwrap();
        assert!((v.vf - 0.5 / 3.0).abs() < 1e-15);
        assert_eq!(v.total, v.vf);
    }

    #[test]
    fn identity_net_satisfies_unidirectional_targets() {
        let topo = Topology::new(3).unwrap();
        let net = ParamNet::zeros(topo, Architecture::Mi, Activation::Relu, 2);
        let obj = objective(&Dataset::new(2), &net, 0.0, 1.0);
        assert_eq!(obj.loss(&net).unwrap().orientation, 0.0);
    }

    fn check_gradient(arch: Architecture, lv: f64, la: f64, seed: u64) {
        let topo = Topology::new(3).unwrap();
        let mut net = init_params(topo, 2, arch, Activation::Relu, seed);
        for (k, x) in net.w1.iter_mut().enumerate() {
            *x = 0.2 * ((k as f64) * 0.7).sin();
        }
        for (k, x) in net.theta1.iter_mut().enumerate() {
            *x = 0.3 * ((k as f64) * 1.3).cos();
        }
        let teacher = init_params(topo, 2, arch, Activation::Relu, seed + 100);
        let ds = teacher_dataset(&teacher, &[0.25, 0.6], 4);
        let obj = objective(&ds, &net, lv, la);
        let (_, g) = obj.loss_and_gradient(&net).unwrap();
        let x0 = net.params();
        let h = 1e-5;
        for k in 0..x0.len() {
            let mut n2 = net.clone();
            let mut xp = x0.clone();
            xp[k] += h;
            n2.set_params(&xp).unwrap();
            let fp = obj.loss(&n2).unwrap().total;
            xp[k] -= 2.0 * h;
            n2.set_params(&xp).unwrap();
            let fm = obj.loss(&n2).unwrap().total;
            let fd = (fp - fm) / (2.0 * h);
            assert!(
                (fd - g[k]).abs() <= 1e-4 * fd.abs().max(g[k].abs()).max(1e-3),
                "{arch:?} coord {k}: fd {fd} vs {}",
                g[k]
            );
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        check_gradient(Architecture::Mi, 0.0, 0.0, 1);
        check_gradient(Architecture::Mi, 1.0, 1.0, 2);
        check_gradient(Architecture::Fc, 0.0, 0.0, 3);
        check_gradient(Architecture::Fc, 1.0, 1.0, 4);
    }

    #[test]
    fn dead_unit_has_zero_gradient() {
        let topo = Topology::new(2).unwrap();
        let mut net = init_params(topo, 0, Architecture::Mi, Activation::Relu, 5);
        net.w0[1] = -5.0;
        let teacher = init_params(topo, 0, Architecture::Mi, Activation::Relu, 6);
        let ds = teacher_dataset(&teacher, &[0.3, 0.7], 3);
        let obj = objective(&ds, &net, 1.0, 1.0);
        let (_, g) = obj.loss_and_gradient(&net).unwrap();
        assert_eq!(g[1], 0.0);
        assert_eq!(g[net.w0.len() + 1], 0.0);
    }
}
