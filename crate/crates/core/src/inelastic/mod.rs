//! Online nonlinear prediction: J2 material nodes, fixed-point homogenization
//! with Aitken relaxation, load paths and energy diagnostics.

pub mod law;
pub mod solver;

use serde::{Deserialize, Serialize};

use crate::error::{DmnError, Result};
use crate::tensor::{SymTensor2, SQRT_2};

pub use law::{matint, von_mises, MaterialLaw, NodeState};
pub use solver::{
    aitken_update, backward_pass, forward_pass, ForwardData, IncrementReport, NonlinearDmn, SolverConfig,
};

/// Macroscopic strains (Mandel) at increasing pseudo-times, starting from zero strain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadPath {
    pub times: Vec<f64>,
    pub strains: Vec<SymTensor2>,
}

impl LoadPath {
    pub fn new(times: Vec<f64>, strains: Vec<SymTensor2>) -> Result<Self> {
        let p = LoadPath { times, strains };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.strains.len() || self.times.is_empty() {
            return Err(DmnError::Data("load path needs matching, nonempty times and strains".into()));
        }
        if self.strains[0].norm() != 0.0 {
            return Err(DmnError::Data("load path must start from zero strain".into()));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(DmnError::Data("load path times must increase strictly".into()));
        }
        if self.strains.iter().any(|e| e.iter().any(|v| !v.is_finite())) {
            return Err(DmnError::Data("load path strains must be finite".into()));
        }
        Ok(())
    }

    /// `strain(t) = f(t) * eps0` with `f` piecewise linear through `knots`
    /// `(t, f)`, each segment split into `steps` increments.
    pub fn proportional(eps0: SymTensor2, knots: &[(f64, f64)], steps: usize) -> Result<Self> {
        if knots.len() < 2 || steps == 0 || knots[0].1 != 0.0 {
            return Err(DmnError::Data("need at least two knots starting at f = 0 and steps > 0".into()));
        }
        let mut times = vec![knots[0].0];
        let mut strains = vec![SymTensor2::zeros()];
        for w in knots.windows(2) {
            let ((t0, f0), (t1, f1)) = (w[0], w[1]);
            for s in 1..=steps {
                let a = s as f64 / steps as f64;
                times.push(t0 + a * (t1 - t0));
                strains.push(eps0 * (f0 + a * (f1 - f0)));
            }
        }
        LoadPath::new(times, strains)
    }

    /// Proportional cyclic path with amplitudes `eps11 = 1%`, `eps22 = eps12 = 4%`,
    /// `eps33 = -2%`: load, unload, reverse, unload.
    pub fn cyclic(steps: usize) -> Result<Self> {
        let eps0 = SymTensor2::new(0.01, 0.04, 0.04 * SQRT_2, -0.02, 0.0, 0.0);
        LoadPath::proportional(eps0, &[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0), (3.0, -1.0), (4.0, 0.0)], steps)
    }
}

/// Average mechanical power over one increment, trapezoidal in time.
pub fn mechanical_power(sig_n: &SymTensor2, sig_n1: &SymTensor2, deps: &SymTensor2, dt: f64) -> f64 {
    (sig_n + sig_n1).dot(deps) / (2.0 * dt)
}

/// Weighted node average of [`mechanical_power`].
pub fn node_power(
    sig_n: &[SymTensor2],
    sig_n1: &[SymTensor2],
    deps: &[SymTensor2],
    weights: &[f64],
    dt: f64,
) -> f64 {
    let wsum: f64 = weights.iter().sum();
    (0..weights.len())
        .map(|i| weights[i] * mechanical_power(&sig_n[i], &sig_n1[i], &deps[i], dt))
        .sum::<f64>()
        / wsum
}

fn trapezoid(t: &[f64], y: impl Fn(usize) -> f64) -> f64 {
    (1..t.len()).map(|k| 0.5 * (y(k - 1) + y(k)) * (t[k] - t[k - 1])).sum()
}

/// `int |y - y_ref| dt / int |y_ref| dt` with trapezoidal quadrature on the shared grid.
pub fn temporal_error(t: &[f64], y: &[SymTensor2], y_ref: &[SymTensor2]) -> Result<f64> {
    if y.len() != t.len() || y_ref.len() != t.len() {
        return Err(DmnError::DimensionMismatch("time series lengths differ".into()));
    }
    let den = trapezoid(t, |k| y_ref[k].norm());
    if !(den > 0.0) {
        return Err(DmnError::Data("reference series is identically zero".into()));
    }
    Ok(trapezoid(t, |k| (y[k] - y_ref[k]).norm()) / den)
}

/// Scalar variant of [`temporal_error`] with the absolute value as norm.
pub fn temporal_error_scalar(t: &[f64], y: &[f64], y_ref: &[f64]) -> Result<f64> {
    if y.len() != t.len() || y_ref.len() != t.len() {
        return Err(DmnError::DimensionMismatch("time series lengths differ".into()));
    }
    let den = trapezoid(t, |k| y_ref[k].abs());
    if !(den > 0.0) {
        return Err(DmnError::Data("reference series is identically zero".into()));
    }
    Ok(trapezoid(t, |k| (y[k] - y_ref[k]).abs()) / den)
}

/// One row of a simulated time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub strain: SymTensor2,
    pub stress: SymTensor2,
    pub iterations: usize,
    pub omegas: Vec<f64>,
    pub mean_p_eq: f64,
    /// Macroscopic power over the increment ending at `t`.
    pub power: f64,
    /// Weighted node power over the same increment.
    pub node_power: f64,
    pub dissipation: f64,
}

/// Runs `path` increment by increment; the first record is the initial state.
pub fn run_path(sim: &mut NonlinearDmn, path: &LoadPath) -> Result<Vec<StepRecord>> {
    path.validate()?;
    let mut out = vec![StepRecord {
        t: path.times[0],
        strain: sim.strain,
        stress: sim.stress,
        iterations: 0,
        omegas: vec![],
        mean_p_eq: sim.mean_p_eq(),
        power: 0.0,
        node_power: 0.0,
        dissipation: 0.0,
    }];
    for k in 1..path.times.len() {
        let dt = path.times[k] - path.times[k - 1];
        let deps = path.strains[k] - sim.strain;
        let rep = sim.solve_increment(&deps)?;
        out.push(StepRecord {
            t: path.times[k],
            strain: sim.strain,
            stress: sim.stress,
            iterations: rep.iterations,
            omegas: rep.omegas,
            mean_p_eq: sim.mean_p_eq(),
            power: rep.macro_work / dt,
            node_power: rep.node_work / dt,
            dissipation: rep.dissipation,
        });
    }
    Ok(out)
}

/// Relative gap between macroscopic and node-averaged power histories,
/// measured with [`temporal_error_scalar`].
pub fn power_gap(records: &[StepRecord]) -> Result<f64> {
    let t: Vec<f64> = records.iter().map(|r| r.t).collect();
    let a: Vec<f64> = records.iter().map(|r| r.node_power).collect();
    let b: Vec<f64> = records.iter().map(|r| r.power).collect();
    temporal_error_scalar(&t, &a, &b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laminate::{lam_stiffness, lam_tangent_residual};
    use crate::network::{forward_stiffness, DmnInstance, Topology};
    use crate::tensor::{iso_stiffness, mandel_rotation, Quaternion};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(depth: usize, seed: u64) -> DmnInstance {
        let topo = Topology::new(depth).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = (0..topo.n_nodes()).map(|_| rng.random_range(0.1..1.0)).collect();
        let q = (0..topo.n_laminates())
            .map(|_| Quaternion::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        DmnInstance::new(topo, w, q).unwrap()
    }

    fn laws_elastic() -> [MaterialLaw; 2] {
        [
            MaterialLaw::elastic_iso(3300.0, 0.41).unwrap(),
            MaterialLaw::elastic_iso(72000.0, 0.22).unwrap(),
        ]
    }

    fn laws_plastic() -> [MaterialLaw; 2] {
        [
            MaterialLaw::j2_power_law(3300.0, 0.41),
            MaterialLaw::elastic_iso(72000.0, 0.22).unwrap(),
        ]
    }

    /// Node strains rotated to the global frame.
    fn global_node_values(sim: &NonlinearDmn, v: &[SymTensor2]) -> Vec<SymTensor2> {
        let eff = sim.prep.effective_rotations();
        let topo = sim.prep.topology;
        (0..topo.n_nodes())
            .map(|i| mandel_rotation(&eff[topo.leaf_of_node(i) - topo.first_leaf()]) * v[i])
            .collect()
    }

    #[test]
    fn aitken_first_iteration_is_plain() {
        let (x, w) = aitken_update(&[1.0, 2.0], &[0.5, 0.5], None, 1.7, 1.0, (1.0, 2.0));
        assert_eq!(w, 1.0);
        assert_eq!(x, vec![1.0, 2.0]);
    }

    #[test]
    fn aitken_clamps_and_guards() {
        // Aligned, slowly shrinking residuals produce a large raw factor.
        let (_, w) = aitken_update(&[0.0], &[0.99], Some(&[1.0]), 1.0, 1.0, (1.0, 2.0));
        assert_eq!(w, 2.0);
        let (_, w) = aitken_update(&[0.0], &[1.0], Some(&[1.0]), 1.3, 1.0, (1.0, 2.0));
        assert_eq!(w, 1.3);
    }

    fn scalar_iterations(aitken: bool) -> usize {
        let f = |x: f64| 0.5 * x + 1.0;
        let mut x = 0.0;
        let mut r_prev: Option<Vec<f64>> = None;
        let mut w = 1.0;
        for j in 1..1000 {
            let fx = f(x);
            let r = fx - x;
            if r.abs() / 2.0 < 1e-6 {
                return j;
            }
            if aitken {
                let (xn, wn) = aitken_update(&[fx], &[r], r_prev.as_deref(), w, 1.0, (f64::NEG_INFINITY, f64::INFINITY));
                x = xn[0];
                w = wn;
            } else {
                x = fx;
            }
            r_prev = Some(vec![r]);
        }
        usize::MAX
    }

    #[test]
    fn aitken_solves_linear_scalar_recurrence() {
        assert!(scalar_iterations(true) <= 3, "{}", scalar_iterations(true));
        assert!(scalar_iterations(false) >= 20);
    }

    #[test]
    fn elastic_step_converges_in_one_iteration() {
        let inst = random_instance(4, 1);
        let mut sim = NonlinearDmn::new(&inst, laws_elastic(), SolverConfig::default()).unwrap();
        let c = forward_stiffness(&inst, &laws_elastic()[0].elastic_stiffness().unwrap(), &laws_elastic()[1].elastic_stiffness().unwrap()).unwrap();
        let d = SymTensor2::new(1e-3, -2e-4, 3e-4, 5e-4, -1e-4, 2e-4);
        let rep = sim.solve_increment(&d).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!((rep.c_bar - c).norm() < 1e-10 * c.norm());
        assert!(rep.ds_bar.norm() == 0.0);
        assert!((sim.stress - c * d).norm() < 1e-10 * (c * d).norm());
    }

    #[test]
    fn homogeneous_tree_localizes_uniformly() {
        let inst = random_instance(3, 2);
        let c = iso_stiffness(1000.0, 0.3).unwrap();
        let prep = inst.prepare().unwrap();
        let n = inst.topology.n_nodes();
        let fwd = forward_pass(&prep, &vec![c; n], &vec![SymTensor2::zeros(); n]).unwrap();
        let d = SymTensor2::new(1e-3, 2e-3, 0.0, -1e-3, 4e-4, 0.0);
        let sim = NonlinearDmn::new(&inst, [MaterialLaw::Elastic { stiffness: c }, MaterialLaw::Elastic { stiffness: c }], SolverConfig::default()).unwrap();
        let nodes = backward_pass(&prep, &fwd, &d);
        for e in global_node_values(&sim, &nodes) {
            assert!((e - d).norm() < 1e-12);
        }
    }

    #[test]
    fn single_laminate_matches_kernel() {
        let topo = Topology::new(1).unwrap();
        let inst = DmnInstance::new(topo, vec![0.3, 0.7], vec![Quaternion::identity()]).unwrap();
        let prep = inst.prepare().unwrap();
        let (c1, c2) = (iso_stiffness(3300.0, 0.41).unwrap(), iso_stiffness(72000.0, 0.22).unwrap());
        let s1 = SymTensor2::new(1.0, 2.0, 0.5, -1.0, 0.3, 0.1);
        let s2 = SymTensor2::new(-0.5, 1.0, 0.0, 2.0, -0.3, 0.4);
        let fwd = forward_pass(&prep, &[c1, c2], &[s1, s2]).unwrap();
        let tr = lam_tangent_residual(&c1, &c2, &s1, &s2, 0.3).unwrap();
        assert!((fwd.root().0 - tr.lam.c_bar).norm() < 1e-10 * tr.lam.c_bar.norm());
        assert!((fwd.root().1 - tr.ds_bar).norm() < 1e-10 * tr.ds_bar.norm());
        let d = SymTensor2::new(1e-3, 0.0, 0.0, 0.0, 0.0, 0.0);
        let lin = forward_pass(&prep, &[c1, c2], &[SymTensor2::zeros(); 2]).unwrap();
        let nodes = backward_pass(&prep, &lin, &d);
        assert!((nodes[0] - lam_stiffness(&c1, &c2, 0.3).unwrap().a1 * d).norm() < 1e-14);
    }

    #[test]
    fn localization_averages_and_balances_stress() {
        let inst = random_instance(4, 3);
        let prep = inst.prepare().unwrap();
        let n = inst.topology.n_nodes();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut cs = vec![];
        let mut ss = vec![];
        for i in 0..n {
            let e = 1000.0 * (1.0 + 30.0 * (i % 2) as f64) * rng.random_range(0.5..1.5);
            cs.push(iso_stiffness(e, rng.random_range(0.1..0.4)).unwrap());
            ss.push(SymTensor2::from_fn(|_, _| rng.random_range(-5.0..5.0)));
        }
        let fwd = forward_pass(&prep, &cs, &ss).unwrap();
        let d = SymTensor2::new(1e-3, -2e-3, 1e-3, 5e-4, 0.0, -3e-4);
        let nodes = backward_pass(&prep, &fwd, &d);
        let sim = NonlinearDmn::new(&inst, laws_elastic(), SolverConfig::default()).unwrap();
        let sig: Vec<SymTensor2> = (0..n).map(|i| cs[i] * nodes[i] + ss[i]).collect();
        let eg = global_node_values(&sim, &nodes);
        let sg = global_node_values(&sim, &sig);
        let wsum: f64 = inst.weights.iter().sum();
        let eavg = (0..n).fold(SymTensor2::zeros(), |a, i| a + eg[i] * inst.weights[i]) / wsum;
        let savg = (0..n).fold(SymTensor2::zeros(), |a, i| a + sg[i] * inst.weights[i]) / wsum;
        assert!((eavg - d).norm() < 1e-10 * d.norm());
        let (c, ds) = fwd.root();
        let macro_sig = c * d + ds;
        assert!((savg - macro_sig).norm() < 1e-10 * macro_sig.norm());
    }

    #[test]
    fn elastic_path_is_linear() {
        let inst = random_instance(3, 4);
        let mut sim = NonlinearDmn::new(&inst, laws_elastic(), SolverConfig::default()).unwrap();
        let laws = laws_elastic();
        let c = forward_stiffness(&inst, &laws[0].elastic_stiffness().unwrap(), &laws[1].elastic_stiffness().unwrap()).unwrap();
        let rec = run_path(&mut sim, &LoadPath::cyclic(5).unwrap()).unwrap();
        let scale = rec.iter().map(|r| (c * r.strain).norm()).fold(0.0, f64::max);
        for r in &rec[1..] {
            assert_eq!(r.iterations, 1);
            assert!((r.stress - c * r.strain).norm() <= 1e-10 * scale);
        }
    }

    #[test]
    fn zero_path_gives_zero_stress() {
        let inst = random_instance(3, 6);
        let mut sim = NonlinearDmn::new(&inst, laws_plastic(), SolverConfig::default()).unwrap();
        let path = LoadPath::new(vec![0.0, 1.0, 2.0], vec![SymTensor2::zeros(); 3]).unwrap();
        let rec = run_path(&mut sim, &path).unwrap();
        assert!(rec.iter().all(|r| r.stress.norm() == 0.0 && r.iterations == 0));
    }

    fn ramp_unload(amp: f64) -> (NonlinearDmn, Vec<StepRecord>) {
        let inst = random_instance(3, 7);
        let mut sim = NonlinearDmn::new(&inst, laws_plastic(), SolverConfig { rtol: 1e-6, ..SolverConfig::default() }).unwrap();
        let eps0 = SymTensor2::new(amp, -0.5 * amp, 0.0, -0.5 * amp, 0.0, 0.0);
        let path = LoadPath::proportional(eps0, &[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)], 10).unwrap();
        let rec = run_path(&mut sim, &path).unwrap();
        (sim, rec)
    }

    #[test]
    fn residual_stress_appears_only_with_plasticity() {
        let (sim, rec) = ramp_unload(1e-4);
        assert!(sim.states.iter().all(|s| s.p_eq == 0.0));
        assert!(rec.last().unwrap().stress.norm() < 1e-8);
        let (sim, rec) = ramp_unload(0.03);
        assert!(sim.states.iter().any(|s| s.p_eq > 0.0));
        assert!(rec.last().unwrap().stress.norm() > 1e-3);
        assert!(rec.iter().all(|r| r.dissipation >= -1e-12));
    }

    #[test]
    fn plastic_cyclic_path_is_consistent() {
        let inst = random_instance(3, 8);
        let mut sim = NonlinearDmn::new(&inst, laws_plastic(), SolverConfig { rtol: 1e-4, ..SolverConfig::default() }).unwrap();
        let path = LoadPath::cyclic(10).unwrap();
        let rec = run_path(&mut sim, &path).unwrap();
        assert!(rec.iter().any(|r| r.iterations > 1));
        let mut p_prev = vec![0.0; sim.states.len()];
        // Equivalent plastic strains never decrease along the path.
        let mut sim2 = NonlinearDmn::new(&inst, laws_plastic(), SolverConfig { rtol: 1e-4, ..SolverConfig::default() }).unwrap();
        for k in 1..path.times.len() {
            sim2.solve_increment(&(path.strains[k] - path.strains[k - 1])).unwrap();
            for (i, s) in sim2.states.iter().enumerate() {
                assert!(s.p_eq >= p_prev[i]);
                p_prev[i] = s.p_eq;
            }
        }
        assert!(power_gap(&rec).unwrap() < 1e-2);
    }

    #[test]
    fn converged_fixed_point_satisfies_strain_average() {
        let inst = random_instance(3, 9);
        let mut sim = NonlinearDmn::new(&inst, laws_plastic(), SolverConfig { rtol: 1e-8, ..SolverConfig::default() }).unwrap();
        let d = SymTensor2::new(0.02, -0.01, 0.01, -0.01, 0.0, 0.0);
        let before = sim.states.clone();
        sim.solve_increment(&d).unwrap();
        let n = inst.topology.n_nodes();
        let de: Vec<SymTensor2> = (0..n).map(|i| sim.states[i].strain - before[i].strain).collect();
        let g = global_node_values(&sim, &de);
        let wsum: f64 = inst.weights.iter().sum();
        let avg = (0..n).fold(SymTensor2::zeros(), |a, i| a + g[i] * inst.weights[i]) / wsum;
        assert!((avg - d).norm() < 1e-7 * d.norm());
    }

    #[test]
    fn contraction_on_mild_step() {
        let inst = random_instance(3, 10);
        let sim = NonlinearDmn::new(&inst, laws_plastic(), SolverConfig::default()).unwrap();
        let d = SymTensor2::new(0.01, -0.005, 0.0, -0.005, 0.0, 0.0);
        let x0 = sim.initial_guess(&d);
        let f1 = sim.fixed_point_step(&x0, &d).unwrap().fx;
        let f2 = sim.fixed_point_step(&f1, &d).unwrap().fx;
        let dist = |a: &[SymTensor2], b: &[SymTensor2]| a.iter().zip(b).map(|(u, v)| (u - v).norm_squared()).sum::<f64>().sqrt();
        assert!(dist(&f2, &f1) < dist(&f1, &x0));
    }

    #[test]
    fn iteration_cap_rolls_back() {
        let inst = random_instance(3, 11);
        let cfg = SolverConfig { rtol: 1e-14, max_iter: 2, aitken: false, ..SolverConfig::default() };
        let mut sim = NonlinearDmn::new(&inst, laws_plastic(), cfg).unwrap();
        let before = sim.states.clone();
        let r = sim.solve_increment(&SymTensor2::new(0.03, 0.0, 0.0, 0.0, 0.0, 0.0));
        assert!(matches!(r, Err(DmnError::MaxIterationsExceeded(2))));
        assert_eq!(sim.states, before);
        assert_eq!(sim.stress, SymTensor2::zeros());
    }

    #[test]
    fn power_formulas() {
        let s = SymTensor2::new(1.0, 2.0, 0.0, 0.0, 0.0, 3.0);
        let d = SymTensor2::new(0.1, 0.0, 0.0, 0.0, 0.0, 0.1);
        assert!((mechanical_power(&s, &s, &d, 0.5) - s.dot(&d) / 0.5).abs() < 1e-15);
        assert_eq!(mechanical_power(&s, &s, &SymTensor2::zeros(), 1.0), 0.0);
        assert!((node_power(&[s, s], &[s, s], &[d, d], &[1.0, 3.0], 0.5) - s.dot(&d) / 0.5).abs() < 1e-15);
    }

    #[test]
    fn temporal_error_cases() {
        let t: Vec<f64> = (0..11).map(|k| k as f64 * 0.1).collect();
        let y: Vec<SymTensor2> = t.iter().map(|&x| SymTensor2::new(x.sin(), x, 0.0, 1.0, 0.0, 0.0)).collect();
        assert_eq!(temporal_error(&t, &y, &y).unwrap(), 0.0);
        let y5: Vec<SymTensor2> = y.iter().map(|v| v * 1.05).collect();
        assert!((temporal_error(&t, &y5, &y).unwrap() - 0.05).abs() < 1e-14);
        // Shifted copy against a hand-written trapezoid sum.
        let shifted: Vec<SymTensor2> = y.iter().map(|v| v + SymTensor2::new(0.2, 0.0, 0.0, 0.0, 0.0, 0.0)).collect();
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 1..t.len() {
            let h = t[k] - t[k - 1];
            num += h * 0.2;
            den += h * (y[k - 1].norm() + y[k].norm()) / 2.0;
        }
        assert!((temporal_error(&t, &shifted, &y).unwrap() - num / den).abs() < 1e-14);
    }

    #[test]
    fn load_path_validation() {
        assert!(LoadPath::new(vec![0.0, 0.0], vec![SymTensor2::zeros(); 2]).is_err());
        assert!(LoadPath::new(vec![0.0], vec![SymTensor2::repeat(1.0)]).is_err());
        let p = LoadPath::cyclic(4).unwrap();
        assert_eq!(p.times.len(), 17);
        assert!(p.strains.last().unwrap().norm() < 1e-15);
    }
}
