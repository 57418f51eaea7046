//! The binary tree of laminates: weight propagation, forward homogenization
//! for stiffness, conductivity and thermal expansion, effective rotations and
//! micromechanical diagnostics.
//!
//! Laminates are numbered breadth-first from 0 (root); laminate `l` has
//! children `2l + 1` and `2l + 2`. Leaf laminate `first_leaf + j` holds the
//! material nodes `2j` (phase 1) and `2j + 1` (phase 2).

use serde::{Deserialize, Serialize};

use crate::error::{DmnError, Result};
use crate::laminate::{lam_conductivity, lam_cte, lam_stiffness, lam_stiffness_adjoint};
use crate::tensor::{
    mandel_rotation, mandel_rotation_adjoint, quat_to_rotmat, quat_to_rotmat_adjoint, Mat3,
    MandelMatrix, Quaternion, SymTensor2,
};

/// Perfect binary tree of depth `L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    depth: usize,
}

/// What feeds one side of a laminate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Child {
    Laminate(usize),
    Node(usize),
}

impl Topology {
    pub const MAX_DEPTH: usize = 24;

    pub fn new(depth: usize) -> Result<Self> {
        if depth == 0 || depth > Self::MAX_DEPTH {
            return Err(DmnError::Config(format!(
                "network depth must be in 1..={}, got {depth}",
                Self::MAX_DEPTH
            )));
        }
        Ok(Topology { depth })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Number of material nodes `N = 2^L`.
    pub fn n_nodes(&self) -> usize {
        1 << self.depth
    }

    pub fn n_laminates(&self) -> usize {
        (1 << self.depth) - 1
    }

    pub fn first_leaf(&self) -> usize {
        (1 << (self.depth - 1)) - 1
    }

    pub fn n_leaves(&self) -> usize {
        1 << (self.depth - 1)
    }

    pub fn is_leaf(&self, l: usize) -> bool {
        l >= self.first_leaf()
    }

    pub fn parent(&self, l: usize) -> Option<usize> {
        (l > 0).then(|| (l - 1) / 2)
    }

    pub fn children(&self, l: usize) -> (Child, Child) {
        if self.is_leaf(l) {
            let j = l - self.first_leaf();
            (Child::Node(2 * j), Child::Node(2 * j + 1))
        } else {
            (Child::Laminate(2 * l + 1), Child::Laminate(2 * l + 2))
        }
    }

    /// Leaf laminate holding material node `i`.
    pub fn leaf_of_node(&self, i: usize) -> usize {
        self.first_leaf() + i / 2
    }

    /// Phase (0 or 1) of material node `i`.
    pub fn phase_of_node(i: usize) -> usize {
        i % 2
    }

    /// Laminate indices on a given level (root is level 0).
    pub fn level(&self, level: usize) -> std::ops::Range<usize> {
        ((1 << level) - 1)..((1 << (level + 1)) - 1)
    }
}

/// How a laminate combines its children once zero weights are taken into account.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaminateStatus {
    Active,
    /// Second child carries no weight; the first passes through.
    PassFirst,
    /// First child carries no weight; the second passes through.
    PassSecond,
    /// Neither child carries weight.
    Inert,
}

/// Weights propagated from the material nodes to every laminate.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTree {
    /// Weight sum of each laminate (`w1' + w2'`).
    pub sums: Vec<f64>,
    /// Phase-1 fraction of each laminate; 1 or 0 on pass-through, 0.5 when inert.
    pub f: Vec<f64>,
    pub status: Vec<LaminateStatus>,
}

impl WeightTree {
    pub fn level_sums(&self, topo: &Topology, level: usize) -> Vec<f64> {
        self.sums[topo.level(level)].to_vec()
    }
}

fn check_weights(topo: &Topology, w: &[f64]) -> Result<()> {
    if w.len() != topo.n_nodes() {
        return Err(DmnError::DimensionMismatch(format!(
            "expected {} weights, got {}",
            topo.n_nodes(),
            w.len()
        )));
    }
    if let Some(x) = w.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(DmnError::Data(format!("weights must be finite and nonnegative, got {x}")));
    }
    Ok(())
}

pub fn propagate_weights(topo: &Topology, w: &[f64]) -> Result<WeightTree> {
    check_weights(topo, w)?;
    let n = topo.n_laminates();
    let mut sums = vec![0.0; n];
    let mut f = vec![0.5; n];
    let mut status = vec![LaminateStatus::Inert; n];
    for l in (0..n).rev() {
        let side = |c: Child, sums: &[f64]| match c {
            Child::Laminate(k) => sums[k],
            Child::Node(i) => w[i],
        };
        let (a, b) = topo.children(l);
        let (s1, s2) = (side(a, &sums), side(b, &sums));
        sums[l] = s1 + s2;
        (status[l], f[l]) = match (s1 > 0.0, s2 > 0.0) {
            (true, true) => (LaminateStatus::Active, s1 / (s1 + s2)),
            (true, false) => (LaminateStatus::PassFirst, 1.0),
            (false, true) => (LaminateStatus::PassSecond, 0.0),
            (false, false) => (LaminateStatus::Inert, 0.5),
        };
    }
    if status[0] == LaminateStatus::Inert {
        return Err(DmnError::AllWeightsZero);
    }
    Ok(WeightTree { sums, f, status })
}

/// Phase-2 volume fraction `sum_{phase 2} w / sum w`.
pub fn dmn_vf(w: &[f64]) -> Result<f64> {
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(DmnError::AllWeightsZero);
    }
    let second: f64 = w.iter().skip(1).step_by(2).sum();
    Ok(second / total)
}

/// `d dmn_vf / dw`.
pub fn dmn_vf_gradient(w: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(DmnError::AllWeightsZero);
    }
    let vf = dmn_vf(w)?;
    Ok((0..w.len())
        .map(|i| (Topology::phase_of_node(i) as f64 - vf) / total)
        .collect())
}

/// Number and share of material nodes per phase with weight above `eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveNodes {
    pub counts: [usize; 2],
    pub ratios: [f64; 2],
}

pub fn active_nodes(w: &[f64], eps: f64) -> ActiveNodes {
    let mut counts = [0usize; 2];
    for (i, &x) in w.iter().enumerate() {
        if x > eps {
            counts[Topology::phase_of_node(i)] += 1;
        }
    }
    let per_phase = (w.len() / 2).max(1) as f64;
    ActiveNodes {
        counts,
        ratios: [counts[0] as f64 / per_phase, counts[1] as f64 / per_phase],
    }
}

/// A fully specified network: node weights and one quaternion per laminate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmnInstance {
    pub topology: Topology,
    pub weights: Vec<f64>,
    pub rotations: Vec<Quaternion>,
    /// Optional extra rotation of each material node's input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_rotations: Option<Vec<Quaternion>>,
}

impl DmnInstance {
    pub fn new(topology: Topology, weights: Vec<f64>, rotations: Vec<Quaternion>) -> Result<Self> {
        check_weights(&topology, &weights)?;
        if rotations.len() != topology.n_laminates() {
            return Err(DmnError::DimensionMismatch(format!(
                "expected {} rotations, got {}",
                topology.n_laminates(),
                rotations.len()
            )));
        }
        Ok(DmnInstance {
            topology,
            weights,
            rotations,
            input_rotations: None,
        })
    }

    /// Uniform weights and identity rotations.
    pub fn uniform(topology: Topology) -> Self {
        DmnInstance {
            topology,
            weights: vec![1.0; topology.n_nodes()],
            rotations: vec![Quaternion::identity(); topology.n_laminates()],
            input_rotations: None,
        }
    }

    pub fn with_input_rotations(mut self, rots: Vec<Quaternion>) -> Result<Self> {
        if rots.len() != self.topology.n_nodes() {
            return Err(DmnError::DimensionMismatch(format!(
                "expected {} input rotations, got {}",
                self.topology.n_nodes(),
                rots.len()
            )));
        }
        self.input_rotations = Some(rots);
        Ok(self)
    }

    pub fn prepare(&self) -> Result<PreparedDmn> {
        PreparedDmn::new(self)
    }

    pub fn vf(&self) -> Result<f64> {
        dmn_vf(&self.weights)
    }
}

/// Instance with weights propagated and rotation operators evaluated, ready
/// for repeated evaluation over many material inputs.
#[derive(Debug, Clone)]
pub struct PreparedDmn {
    pub topology: Topology,
    pub weights: Vec<f64>,
    pub tree: WeightTree,
    pub quats: Vec<Quaternion>,
    pub rot: Vec<Mat3>,
    /// Mandel rotation operator of each laminate.
    pub q: Vec<MandelMatrix>,
    pub input_rot: Option<Vec<Mat3>>,
    pub input_q: Option<Vec<MandelMatrix>>,
}

/// Per-laminate record of a stiffness evaluation, needed for the adjoint.
#[derive(Debug, Clone)]
pub struct StiffnessTape {
    /// Laminate output before its own rotation.
    pub local: Vec<MandelMatrix>,
    /// Laminate output in the parent frame.
    pub out: Vec<MandelMatrix>,
    lam: Vec<Option<crate::laminate::LaminateResult>>,
    /// Inputs of each material node (differs from the phase tensor only with input rotations).
    node_in: Option<Vec<MandelMatrix>>,
}

impl StiffnessTape {
    pub fn root(&self) -> MandelMatrix {
        self.out[0]
    }
}

/// Accumulated gradient of a scalar with respect to laminate fractions,
/// rotation operators and the two phase stiffnesses.
#[derive(Debug, Clone)]
pub struct StiffnessGrad {
    pub f: Vec<f64>,
    pub q: Vec<MandelMatrix>,
    pub c1: MandelMatrix,
    pub c2: MandelMatrix,
}

impl StiffnessGrad {
    pub fn zeros(topo: &Topology) -> Self {
        StiffnessGrad {
            f: vec![0.0; topo.n_laminates()],
            q: vec![MandelMatrix::zeros(); topo.n_laminates()],
            c1: MandelMatrix::zeros(),
            c2: MandelMatrix::zeros(),
        }
    }

    pub fn add(&mut self, other: &StiffnessGrad) {
        for (a, b) in self.f.iter_mut().zip(&other.f) {
            *a += b;
        }
        for (a, b) in self.q.iter_mut().zip(&other.q) {
            *a += b;
        }
        self.c1 += other.c1;
        self.c2 += other.c2;
    }
}

impl PreparedDmn {
    pub fn new(m: &DmnInstance) -> Result<Self> {
        let topo = m.topology;
        let tree = propagate_weights(&topo, &m.weights)?;
        if m.rotations.len() != topo.n_laminates() {
            return Err(DmnError::DimensionMismatch(format!(
                "expected {} rotations, got {}",
                topo.n_laminates(),
                m.rotations.len()
            )));
        }
        let rot = m
            .rotations
            .iter()
            .map(quat_to_rotmat)
            .collect::<Result<Vec<_>>>()?;
        let q = rot.iter().map(mandel_rotation).collect();
        let input_rot = match &m.input_rotations {
            Some(v) => Some(v.iter().map(quat_to_rotmat).collect::<Result<Vec<_>>>()?),
            None => None,
        };
        let input_q = input_rot
            .as_ref()
            .map(|v| v.iter().map(mandel_rotation).collect());
        Ok(PreparedDmn {
            topology: topo,
            weights: m.weights.clone(),
            tree,
            quats: m.rotations.clone(),
            rot,
            q,
            input_rot,
            input_q,
        })
    }

    /// Bottom-up traversal: `leaf` maps a material node to its input, `combine`
    /// merges two children of an active laminate, `rotate` maps a laminate
    /// output to the parent frame. Pass-through laminates forward the weighted child.
    fn fold<T: Clone>(
        &self,
        leaf: impl Fn(usize) -> T,
        mut combine: impl FnMut(usize, &T, &T, f64) -> Result<T>,
        rotate: impl Fn(usize, &T) -> T,
    ) -> Result<Vec<T>> {
        let topo = &self.topology;
        let n = topo.n_laminates();
        let mut out: Vec<Option<T>> = vec![None; n];
        for l in (0..n).rev() {
            let (a, b) = topo.children(l);
            let get = |c: Child, out: &[Option<T>]| match c {
                Child::Laminate(k) => out[k].clone().expect("child evaluated"),
                Child::Node(i) => leaf(i),
            };
            let local = match self.tree.status[l] {
                LaminateStatus::Active => combine(l, &get(a, &out), &get(b, &out), self.tree.f[l])?,
                LaminateStatus::PassFirst | LaminateStatus::Inert => get(a, &out),
                LaminateStatus::PassSecond => get(b, &out),
            };
            out[l] = Some(rotate(l, &local));
        }
        Ok(out.into_iter().map(|x| x.expect("evaluated")).collect())
    }

    fn node_stiffness(&self, i: usize, c1: &MandelMatrix, c2: &MandelMatrix) -> MandelMatrix {
        let c = if Topology::phase_of_node(i) == 0 { c1 } else { c2 };
        match &self.input_q {
            Some(q) => q[i] * c * q[i].transpose(),
            None => *c,
        }
    }

    pub fn stiffness(&self, c1: &MandelMatrix, c2: &MandelMatrix) -> Result<MandelMatrix> {
        let out = self.fold(
            |i| self.node_stiffness(i, c1, c2),
            |_, a, b, f| Ok(lam_stiffness(a, b, f)?.c_bar),
            |l, c| self.q[l] * c * self.q[l].transpose(),
        )?;
        Ok(out[0])
    }

    pub fn stiffness_tape(&self, c1: &MandelMatrix, c2: &MandelMatrix) -> Result<StiffnessTape> {
        let topo = &self.topology;
        let n = topo.n_laminates();
        let node_in: Option<Vec<MandelMatrix>> = self
            .input_q
            .as_ref()
            .map(|_| (0..topo.n_nodes()).map(|i| self.node_stiffness(i, c1, c2)).collect());
        let mut local = vec![MandelMatrix::zeros(); n];
        let mut out = vec![MandelMatrix::zeros(); n];
        let mut lam = vec![None; n];
        for l in (0..n).rev() {
            let (a, b) = topo.children(l);
            let ca = self.child_value(a, &out, &node_in, c1, c2);
            let cb = self.child_value(b, &out, &node_in, c1, c2);
            local[l] = match self.tree.status[l] {
                LaminateStatus::Active => {
                    let r = lam_stiffness(&ca, &cb, self.tree.f[l])?;
                    let c = r.c_bar;
                    lam[l] = Some(r);
                    c
                }
                LaminateStatus::PassFirst | LaminateStatus::Inert => ca,
                LaminateStatus::PassSecond => cb,
            };
            out[l] = self.q[l] * local[l] * self.q[l].transpose();
        }
        Ok(StiffnessTape {
            local,
            out,
            lam,
            node_in,
        })
    }

    fn child_value(
        &self,
        c: Child,
        out: &[MandelMatrix],
        node_in: &Option<Vec<MandelMatrix>>,
        c1: &MandelMatrix,
        c2: &MandelMatrix,
    ) -> MandelMatrix {
        match c {
            Child::Laminate(k) => out[k],
            Child::Node(i) => match node_in {
                Some(v) => v[i],
                None => {
                    if Topology::phase_of_node(i) == 0 {
                        *c1
                    } else {
                        *c2
                    }
                }
            },
        }
    }

    /// Adds the gradient of `<g_root, C_bar>` to `acc`.
    pub fn stiffness_adjoint(
        &self,
        tape: &StiffnessTape,
        c1: &MandelMatrix,
        c2: &MandelMatrix,
        g_root: &MandelMatrix,
        acc: &mut StiffnessGrad,
    ) {
        let topo = &self.topology;
        let n = topo.n_laminates();
        let mut g = vec![MandelMatrix::zeros(); n];
        g[0] = *g_root;
        for l in 0..n {
            let gl = g[l];
            let q = &self.q[l];
            let local_bar = q.transpose() * gl * q;
            acc.q[l] += (gl + gl.transpose()) * q * tape.local[l];
            let (a, b) = topo.children(l);
            let mut push = |c: Child, x: &MandelMatrix, g: &mut Vec<MandelMatrix>| match c {
                Child::Laminate(k) => g[k] += x,
                Child::Node(i) => {
                    let x = match &self.input_q {
                        Some(qi) => qi[i].transpose() * x * qi[i],
                        None => *x,
                    };
                    if Topology::phase_of_node(i) == 0 {
                        acc.c1 += x;
                    } else {
                        acc.c2 += x;
                    }
                }
            };
            match self.tree.status[l] {
                LaminateStatus::Active => {
                    let ca = self.child_value(a, &tape.out, &tape.node_in, c1, c2);
                    let cb = self.child_value(b, &tape.out, &tape.node_in, c1, c2);
                    let r = tape.lam[l].as_ref().expect("active laminate recorded");
                    let lg = lam_stiffness_adjoint(&ca, &cb, r, &local_bar);
                    acc.f[l] += lg.f;
                    push(a, &lg.c1, &mut g);
                    push(b, &lg.c2, &mut g);
                }
                LaminateStatus::PassFirst => push(a, &local_bar, &mut g),
                LaminateStatus::PassSecond => push(b, &local_bar, &mut g),
                LaminateStatus::Inert => {}
            }
        }
    }

    /// Converts fraction gradients into node-weight gradients (added to `w_bar`).
    pub fn weight_adjoint(&self, f_bar: &[f64], w_bar: &mut [f64]) {
        let topo = &self.topology;
        let n = topo.n_laminates();
        let mut sum_bar = vec![0.0; n];
        for l in 0..n {
            let (a, b) = topo.children(l);
            let side = |c: Child| match c {
                Child::Laminate(k) => self.tree.sums[k],
                Child::Node(i) => self.weights[i],
            };
            let (s1, s2) = (side(a), side(b));
            let mut b1 = sum_bar[l];
            let mut b2 = sum_bar[l];
            if self.tree.status[l] == LaminateStatus::Active {
                let s = s1 + s2;
                b1 += f_bar[l] * s2 / (s * s);
                b2 -= f_bar[l] * s1 / (s * s);
            }
            for (c, v) in [(a, b1), (b, b2)] {
                match c {
                    Child::Laminate(k) => sum_bar[k] += v,
                    Child::Node(i) => w_bar[i] += v,
                }
            }
        }
    }

    /// Converts Mandel-operator gradients into rotation-matrix gradients.
    pub fn q_to_r_adjoint(&self, q_bar: &[MandelMatrix], r_bar: &mut [Mat3]) {
        for l in 0..self.topology.n_laminates() {
            r_bar[l] += mandel_rotation_adjoint(&self.rot[l], &q_bar[l]);
        }
    }

    /// Converts rotation-matrix gradients into quaternion gradients.
    pub fn r_to_quat_adjoint(&self, r_bar: &[Mat3]) -> Result<Vec<[f64; 4]>> {
        self.quats
            .iter()
            .zip(r_bar)
            .map(|(q, rb)| quat_to_rotmat_adjoint(q, rb))
            .collect()
    }

    pub fn conductivity(&self, k1: &Mat3, k2: &Mat3) -> Result<Mat3> {
        let out = self.fold(
            |i| {
                let k = if Topology::phase_of_node(i) == 0 { k1 } else { k2 };
                match &self.input_rot {
                    Some(r) => r[i] * k * r[i].transpose(),
                    None => *k,
                }
            },
            |_, a, b, f| Ok(lam_conductivity(a, b, f)?.k_bar),
            |l, k| self.rot[l] * k * self.rot[l].transpose(),
        )?;
        Ok(out[0])
    }

    /// Stiffness and CTE, applying the laminate CTE relation at every laminate
    /// and rotating both results before passing them up.
    pub fn cte(
        &self,
        c1: &MandelMatrix,
        c2: &MandelMatrix,
        a1: &SymTensor2,
        a2: &SymTensor2,
    ) -> Result<(MandelMatrix, SymTensor2)> {
        let out = self.fold(
            |i| {
                let (c, a) = if Topology::phase_of_node(i) == 0 { (c1, a1) } else { (c2, a2) };
                match &self.input_q {
                    Some(q) => (q[i] * c * q[i].transpose(), q[i] * a),
                    None => (*c, *a),
                }
            },
            |_, x, y, f| {
                let r = lam_cte(&x.0, &y.0, &x.1, &y.1, f)?;
                Ok((r.c_bar, r.alpha_bar))
            },
            |l, (c, a)| (self.q[l] * c * self.q[l].transpose(), self.q[l] * a),
        )?;
        Ok(out[0])
    }

    /// Products `R_root ... R_parent R_l` for every laminate.
    fn prefix_rotations(&self) -> Vec<Mat3> {
        let n = self.topology.n_laminates();
        let mut p = vec![Mat3::identity(); n];
        for l in 0..n {
            p[l] = match self.topology.parent(l) {
                Some(k) => p[k] * self.rot[l],
                None => self.rot[l],
            };
        }
        p
    }

    /// Effective rotation of each leaf laminate from its local frame to the global frame.
    pub fn effective_rotations(&self) -> Vec<Mat3> {
        let p = self.prefix_rotations();
        p[self.topology.first_leaf()..].to_vec()
    }

    /// Pulls gradients on the effective (leaf) rotations back to every laminate rotation.
    pub fn effective_rotations_adjoint(&self, leaf_bar: &[Mat3], r_bar: &mut [Mat3]) {
        let topo = &self.topology;
        let n = topo.n_laminates();
        let p = self.prefix_rotations();
        let mut p_bar = vec![Mat3::zeros(); n];
        for (j, b) in leaf_bar.iter().enumerate() {
            p_bar[topo.first_leaf() + j] += b;
        }
        for l in (0..n).rev() {
            match topo.parent(l) {
                Some(k) => {
                    r_bar[l] += p[k].transpose() * p_bar[l];
                    let add = p_bar[l] * self.rot[l].transpose();
                    p_bar[k] += add;
                }
                None => r_bar[l] += p_bar[l],
            }
        }
    }

    /// Orientation tensors `a^(1..3)` of one phase's material frames.
    pub fn orientation_tensors(&self, phase: usize) -> Result<[Mat3; 3]> {
        let eff = self.effective_rotations();
        let total: f64 = self.weights.iter().skip(phase).step_by(2).sum();
        if !(total > 0.0) {
            return Err(DmnError::PhaseHasNoWeight(phase + 1));
        }
        let mut a = [Mat3::zeros(); 3];
        for (j, r) in eff.iter().enumerate() {
            let w = self.weights[2 * j + phase];
            if w == 0.0 {
                continue;
            }
            for (i, ai) in a.iter_mut().enumerate() {
                let col = r.column(i);
                *ai += col * col.transpose() * w;
            }
        }
        for ai in &mut a {
            *ai /= total;
        }
        Ok(a)
    }

    /// Gradient of `sum_i <a_bar[i], a^(i)>` for one phase; adds into node
    /// weights and laminate rotation matrices.
    pub fn orientation_adjoint(
        &self,
        phase: usize,
        a_bar: &[Mat3; 3],
        w_bar: &mut [f64],
        r_bar: &mut [Mat3],
    ) -> Result<()> {
        let eff = self.effective_rotations();
        let a = self.orientation_tensors(phase)?;
        let total: f64 = self.weights.iter().skip(phase).step_by(2).sum();
        let mut leaf_bar = vec![Mat3::zeros(); eff.len()];
        for (j, r) in eff.iter().enumerate() {
            let node = 2 * j + phase;
            let w = self.weights[node];
            for i in 0..3 {
                let col = r.column(i);
                let outer = col * col.transpose();
                w_bar[node] += a_bar[i].component_mul(&(outer - a[i])).sum() / total;
                if w != 0.0 {
                    let sym = a_bar[i] + a_bar[i].transpose();
                    let d = sym * col * (w / total);
                    let mut c = leaf_bar[j].column_mut(i);
                    c += d;
                }
            }
        }
        self.effective_rotations_adjoint(&leaf_bar, r_bar);
        Ok(())
    }
}

pub fn forward_stiffness(m: &DmnInstance, c1: &MandelMatrix, c2: &MandelMatrix) -> Result<MandelMatrix> {
    m.prepare()?.stiffness(c1, c2)
}

pub fn forward_conductivity(m: &DmnInstance, k1: &Mat3, k2: &Mat3) -> Result<Mat3> {
    m.prepare()?.conductivity(k1, k2)
}

pub fn forward_cte(
    m: &DmnInstance,
    c1: &MandelMatrix,
    c2: &MandelMatrix,
    a1: &SymTensor2,
    a2: &SymTensor2,
) -> Result<(MandelMatrix, SymTensor2)> {
    m.prepare()?.cte(c1, c2, a1, a2)
}

pub fn effective_rotations(m: &DmnInstance) -> Result<Vec<Mat3>> {
    Ok(m.prepare()?.effective_rotations())
}

/// Orientation tensors of both phases (`[phase][axis]`).
pub fn dmn_orientation_tensors(m: &DmnInstance) -> Result<[[Mat3; 3]; 2]> {
    let p = m.prepare()?;
    Ok([p.orientation_tensors(0)?, p.orientation_tensors(1)?])
}
