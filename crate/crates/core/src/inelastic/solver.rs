//! Incrementally affine homogenization through the laminate tree, solved as
//! a fixed-point problem on the node strain increments.

use serde::{Deserialize, Serialize};

use crate::error::{DmnError, Result};
use crate::inelastic::law::{matint, MaterialLaw, NodeState};
use crate::laminate::{lam_tangent_residual, TangentResidual};
use crate::network::{Child, DmnInstance, LaminateStatus, PreparedDmn, Topology};
use crate::tensor::{MandelMatrix, SymTensor2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub rtol: f64,
    pub max_iter: usize,
    pub aitken: bool,
    pub omega0: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    /// Increments with a smaller norm are skipped.
    pub skip_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rtol: 1e-1,
            max_iter: 200,
            aitken: true,
            omega0: 1.0,
            omega_min: 1.0,
            omega_max: 2.0,
            skip_tol: 1e-8,
        }
    }
}

/// Aitken relaxation of a fixed-point iterate. `fx` is `F(x_j)`, `r` the
/// residual `F(x_j) - x_j`, `r_prev` the previous residual (`None` on the
/// first iteration). Returns `x_{j+1}` and the clamped relaxation factor.
pub fn aitken_update(
    fx: &[f64],
    r: &[f64],
    r_prev: Option<&[f64]>,
    omega_prev: f64,
    omega0: f64,
    bounds: (f64, f64),
) -> (Vec<f64>, f64) {
    let omega = match r_prev {
        None => omega0,
        Some(rp) => {
            let mut num = 0.0;
            let mut den = 0.0;
            for (a, b) in r.iter().zip(rp) {
                let d = a - b;
                num += b * d;
                den += d * d;
            }
            // Identical successive residuals: keep the previous factor.
            if den.sqrt() < 1e-30 {
                omega_prev
            } else {
                -omega_prev * num / den
            }
        }
    };
    let omega = omega.clamp(bounds.0, bounds.1);
    let x = fx.iter().zip(r).map(|(f, r)| f + (omega - 1.0) * r).collect();
    (x, omega)
}

/// Per-laminate data from one upward pass.
#[derive(Debug, Clone)]
pub struct LaminateData {
    pub status: LaminateStatus,
    /// Laminate relation in its local frame; `None` for pass-through laminates.
    pub relation: Option<TangentResidual>,
    /// Tangent and residual stress rotated to the parent frame.
    pub c_out: MandelMatrix,
    pub ds_out: SymTensor2,
}

#[derive(Debug, Clone)]
pub struct ForwardData {
    pub laminates: Vec<LaminateData>,
}

impl ForwardData {
    /// Effective tangent and residual stress increment in the global frame.
    pub fn root(&self) -> (MandelMatrix, SymTensor2) {
        (self.laminates[0].c_out, self.laminates[0].ds_out)
    }
}

/// Homogenizes node tangents and residual stress increments (node frames)
/// from the leaves to the root.
pub fn forward_pass(prep: &PreparedDmn, tangents: &[MandelMatrix], residuals: &[SymTensor2]) -> Result<ForwardData> {
    let topo = &prep.topology;
    if tangents.len() != topo.n_nodes() || residuals.len() != topo.n_nodes() {
        return Err(DmnError::DimensionMismatch(format!(
            "expected {} node tangents and residuals",
            topo.n_nodes()
        )));
    }
    let n = topo.n_laminates();
    let mut out: Vec<Option<LaminateData>> = vec![None; n];
    for l in (0..n).rev() {
        let (a, b) = topo.children(l);
        let get = |c: Child, out: &[Option<LaminateData>]| match c {
            Child::Laminate(k) => {
                let d = out[k].as_ref().expect("child evaluated");
                (d.c_out, d.ds_out)
            }
            Child::Node(i) => match &prep.input_q {
                Some(q) => (q[i] * tangents[i] * q[i].transpose(), q[i] * residuals[i]),
                None => (tangents[i], residuals[i]),
            },
        };
        let status = prep.tree.status[l];
        let (relation, c, ds) = match status {
            LaminateStatus::Active => {
                let (ca, sa) = get(a, &out);
                let (cb, sb) = get(b, &out);
                let tr = lam_tangent_residual(&ca, &cb, &sa, &sb, prep.tree.f[l])?;
                let (c, ds) = (tr.lam.c_bar, tr.ds_bar);
                (Some(tr), c, ds)
            }
            LaminateStatus::PassFirst | LaminateStatus::Inert => {
                let (c, ds) = get(a, &out);
                (None, c, ds)
            }
            LaminateStatus::PassSecond => {
                let (c, ds) = get(b, &out);
                (None, c, ds)
            }
        };
        let q = &prep.q[l];
        out[l] = Some(LaminateData {
            status,
            relation,
            c_out: q * c * q.transpose(),
            ds_out: q * ds,
        });
    }
    Ok(ForwardData {
        laminates: out.into_iter().map(|d| d.expect("evaluated")).collect(),
    })
}

/// Localizes the macroscopic strain increment down to every node (node
/// frames). Children of pass-through laminates receive the laminate strain.
pub fn backward_pass(prep: &PreparedDmn, fwd: &ForwardData, deps_bar: &SymTensor2) -> Vec<SymTensor2> {
    let topo = &prep.topology;
    let n = topo.n_laminates();
    let mut incoming = vec![SymTensor2::zeros(); n];
    let mut nodes = vec![SymTensor2::zeros(); topo.n_nodes()];
    incoming[0] = *deps_bar;
    for l in 0..n {
        let local = prep.q[l].transpose() * incoming[l];
        let d = &fwd.laminates[l];
        let (ea, eb) = match &d.relation {
            Some(tr) => tr.localize(&local),
            None => (local, local),
        };
        let (a, b) = topo.children(l);
        for (c, e) in [(a, ea), (b, eb)] {
            match c {
                Child::Laminate(k) => incoming[k] = e,
                Child::Node(i) => {
                    nodes[i] = match &prep.input_q {
                        Some(q) => q[i].transpose() * e,
                        None => e,
                    }
                }
            }
        }
    }
    nodes
}

/// Result of one evaluation of the fixed-point map.
#[derive(Debug, Clone)]
pub struct FixedPointEval {
    /// `F(x)` on the weighted nodes.
    pub fx: Vec<SymTensor2>,
    /// Node states integrated over `x` (weighted nodes).
    pub trial: Vec<NodeState>,
    pub forward: ForwardData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementReport {
    pub iterations: usize,
    pub omegas: Vec<f64>,
    pub errors: Vec<f64>,
    pub c_bar: MandelMatrix,
    pub ds_bar: SymTensor2,
    /// `(sig_n + sig_{n+1}) . deps / 2` on the macro scale.
    pub macro_work: f64,
    /// Weighted node average of the same trapezoid.
    pub node_work: f64,
    /// Weighted node average of `sig_{n+1} . deps_plastic`.
    pub dissipation: f64,
}

/// A network instance with a constitutive law per phase and the node states.
#[derive(Debug, Clone)]
pub struct NonlinearDmn {
    pub prep: PreparedDmn,
    pub laws: [MaterialLaw; 2],
    pub states: Vec<NodeState>,
    /// Nodes with positive weight; only these are integrated.
    pub live: Vec<usize>,
    pub strain: SymTensor2,
    pub stress: SymTensor2,
    pub cfg: SolverConfig,
    /// Concentration data of the last converged increment, used to start the next one.
    init: ForwardData,
    weight_sum: f64,
}

impl NonlinearDmn {
    pub fn new(instance: &DmnInstance, laws: [MaterialLaw; 2], cfg: SolverConfig) -> Result<Self> {
        for l in &laws {
            l.validate()?;
        }
        let prep = instance.prepare()?;
        let topo = prep.topology;
        let states = (0..topo.n_nodes())
            .map(|i| NodeState::initial(&laws[Topology::phase_of_node(i)]))
            .collect::<Result<Vec<_>>>()?;
        let live: Vec<usize> = (0..topo.n_nodes()).filter(|&i| prep.weights[i] > 0.0).collect();
        let tangents: Vec<MandelMatrix> = states.iter().map(|s| s.tangent).collect();
        let init = forward_pass(&prep, &tangents, &vec![SymTensor2::zeros(); topo.n_nodes()])?;
        let weight_sum = live.iter().map(|&i| prep.weights[i]).sum();
        Ok(NonlinearDmn {
            prep,
            laws,
            states,
            live,
            strain: SymTensor2::zeros(),
            stress: SymTensor2::zeros(),
            cfg,
            init,
            weight_sum,
        })
    }

    pub fn law_of(&self, node: usize) -> &MaterialLaw {
        &self.laws[Topology::phase_of_node(node)]
    }

    /// Weighted average over the nodes of `g(node, state)`.
    pub fn node_average(&self, g: impl Fn(usize, &NodeState) -> f64) -> f64 {
        self.live
            .iter()
            .map(|&i| self.prep.weights[i] * g(i, &self.states[i]))
            .sum::<f64>()
            / self.weight_sum
    }

    pub fn mean_p_eq(&self) -> f64 {
        self.node_average(|_, s| s.p_eq)
    }

    /// Node strain increments from the concentration data of the last
    /// converged increment (weighted nodes only).
    pub fn initial_guess(&self, deps_bar: &SymTensor2) -> Vec<SymTensor2> {
        let all = backward_pass(&self.prep, &self.init, deps_bar);
        self.live.iter().map(|&i| all[i]).collect()
    }

    /// `F = Backward . Forward . MatInt` at the weighted-node increments `x`.
    pub fn fixed_point_step(&self, x: &[SymTensor2], deps_bar: &SymTensor2) -> Result<FixedPointEval> {
        let n = self.prep.topology.n_nodes();
        let mut tangents: Vec<MandelMatrix> = self.states.iter().map(|s| s.tangent).collect();
        let mut residuals = vec![SymTensor2::zeros(); n];
        let mut trial = Vec::with_capacity(self.live.len());
        for (k, &i) in self.live.iter().enumerate() {
            let s = matint(self.law_of(i), &self.states[i], &x[k])?;
            tangents[i] = s.tangent;
            residuals[i] = s.residual;
            trial.push(s);
        }
        let forward = forward_pass(&self.prep, &tangents, &residuals)?;
        let all = backward_pass(&self.prep, &forward, deps_bar);
        Ok(FixedPointEval {
            fx: self.live.iter().map(|&i| all[i]).collect(),
            trial,
            forward,
        })
    }

    /// Advances by the macroscopic strain increment `deps_bar`. Node states
    /// change only if the fixed-point iteration converges.
    pub fn solve_increment(&mut self, deps_bar: &SymTensor2) -> Result<IncrementReport> {
        let cfg = self.cfg;
        let norm_bar = deps_bar.norm();
        if norm_bar <= cfg.skip_tol {
            self.strain += deps_bar;
            return Ok(IncrementReport {
                iterations: 0,
                omegas: vec![],
                errors: vec![],
                c_bar: self.init.root().0,
                ds_bar: SymTensor2::zeros(),
                macro_work: self.stress.dot(deps_bar),
                node_work: 0.0,
                dissipation: 0.0,
            });
        }
        let flat = |v: &[SymTensor2]| v.iter().flat_map(|e| e.iter().copied()).collect::<Vec<f64>>();
        let mut x = self.initial_guess(deps_bar);
        let mut r_prev: Option<Vec<f64>> = None;
        let mut omega = cfg.omega0;
        let mut omegas = Vec::new();
        let mut errors = Vec::new();
        for j in 0..cfg.max_iter {
            let eval = self.fixed_point_step(&x, deps_bar)?;
            let fx = flat(&eval.fx);
            let xf = flat(&x);
            let r: Vec<f64> = fx.iter().zip(&xf).map(|(a, b)| a - b).collect();
            let e_rel = r.iter().map(|v| v * v).sum::<f64>().sqrt() / norm_bar;
            errors.push(e_rel);
            if e_rel < cfg.rtol {
                return self.commit(x, eval, deps_bar, j + 1, omegas, errors);
            }
            let next = if cfg.aitken {
                let (xn, w) = aitken_update(&fx, &r, r_prev.as_deref(), omega, cfg.omega0, (cfg.omega_min, cfg.omega_max));
                omega = w;
                omegas.push(w);
                xn
            } else {
                fx
            };
            r_prev = Some(r);
            x = next
                .chunks(6)
                .map(SymTensor2::from_column_slice)
                .collect();
        }
        Err(DmnError::MaxIterationsExceeded(cfg.max_iter))
    }

    fn commit(
        &mut self,
        x: Vec<SymTensor2>,
        eval: FixedPointEval,
        deps_bar: &SymTensor2,
        iterations: usize,
        omegas: Vec<f64>,
        errors: Vec<f64>,
    ) -> Result<IncrementReport> {
        let (c_bar, ds_bar) = eval.forward.root();
        let n = self.prep.topology.n_nodes();
        let mut tangents: Vec<MandelMatrix> = self.states.iter().map(|s| s.tangent).collect();
        for (&i, s) in self.live.iter().zip(&eval.trial) {
            tangents[i] = s.tangent;
        }
        let init = forward_pass(&self.prep, &tangents, &vec![SymTensor2::zeros(); n])?;
        let new_stress = self.stress + c_bar * deps_bar + ds_bar;
        let macro_work = 0.5 * (self.stress + new_stress).dot(deps_bar);
        let mut node_work = 0.0;
        let mut dissipation = 0.0;
        for ((&i, s), dx) in self.live.iter().zip(eval.trial).zip(&x) {
            let w = self.prep.weights[i];
            let old = &self.states[i];
            node_work += w * 0.5 * (old.stress + s.stress).dot(dx);
            dissipation += w * s.stress.dot(&(s.plastic_strain - old.plastic_strain));
            self.states[i] = s;
        }
        self.strain += deps_bar;
        self.stress = new_stress;
        self.init = init;
        Ok(IncrementReport {
            iterations,
            omegas,
            errors,
            c_bar,
            ds_bar,
            macro_work,
            node_work: node_work / self.weight_sum,
            dissipation: dissipation / self.weight_sum,
        })
    }
}
