//! Parametric layer mapping microstructural parameters `p = (vf, q)` to the
//! network weights and rotations, plus the transfer-scaling baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{DmnError, Result};
use crate::network::{DmnInstance, Topology};
use crate::tensor::Quaternion;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    /// Weights depend on `vf` only, rotations on `q` only.
    Mi,
    /// Weights and rotations both depend on the full `(vf, q)`.
    Fc,
    /// Constant weights and rotations.
    Plain,
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Architecture::Mi => "mi",
            Architecture::Fc => "fc",
            Architecture::Plain => "plain",
        })
    }
}

impl std::str::FromStr for Architecture {
    type Err = DmnError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mi" => Ok(Architecture::Mi),
            "fc" => Ok(Architecture::Fc),
            "plain" => Ok(Architecture::Plain),
            _ => Err(DmnError::Config(format!("unknown architecture '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Softplus { beta: f64 },
}

impl Activation {
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Activation::Relu => x.max(0.0),
            Activation::Softplus { beta } => {
                let z = beta * x;
                if z > 30.0 {
                    x
                } else {
                    z.exp().ln_1p() / beta
                }
            }
        }
    }

    /// Derivative; the ReLU kink uses the subgradient 0.
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus { beta } => 1.0 / (1.0 + (-beta * x).exp()),
        }
    }
}

/// Microstructural parameters: phase-2 fraction and morphological parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroParams {
    pub vf: f64,
    pub q: Vec<f64>,
}

impl MicroParams {
    pub fn new(vf: f64, q: Vec<f64>) -> Self {
        MicroParams { vf, q }
    }
}

/// Affine map of each morphological parameter onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rescale {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Rescale {
    pub fn identity(q_dim: usize) -> Self {
        Rescale {
            min: vec![0.0; q_dim],
            max: vec![1.0; q_dim],
        }
    }

    /// Bounding box of the given points.
    pub fn fit<'a>(q_dim: usize, points: impl IntoIterator<Item = &'a MicroParams>) -> Self {
        let mut min = vec![f64::INFINITY; q_dim];
        let mut max = vec![f64::NEG_INFINITY; q_dim];
        for p in points {
            for k in 0..q_dim {
                min[k] = min[k].min(p.q[k]);
                max[k] = max[k].max(p.q[k]);
            }
        }
        for k in 0..q_dim {
            if !min[k].is_finite() {
                min[k] = 0.0;
                max[k] = 1.0;
            }
        }
        Rescale { min, max }
    }

    pub fn apply(&self, p: &MicroParams) -> MicroParams {
        let q = p
            .q
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                let span = self.max[k] - self.min[k];
                if span > 0.0 {
                    (x - self.min[k]) / span
                } else {
                    0.0
                }
            })
            .collect();
        MicroParams { vf: p.vf, q }
    }
}

/// Single-layer parametric map to network weights and quaternions.
///
/// Flat layouts: `w1[i * d_w + k]`, `theta0[l * 4 + c]`,
/// `theta1[(l * 4 + c) * d_t + k]`, with `d_w`, `d_t` the input widths of the
/// weight and rotation maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamNet {
    pub topology: Topology,
    pub arch: Architecture,
    pub activation: Activation,
    pub q_dim: usize,
    pub w0: Vec<f64>,
    pub w1: Vec<f64>,
    pub theta0: Vec<f64>,
    pub theta1: Vec<f64>,
    pub rescale: Rescale,
}

/// `(weights, rotations)` fitting-parameter counts of an architecture.
pub fn parameter_count(arch: Architecture, depth: usize, q_dim: usize) -> (usize, usize) {
    let n = 1usize << depth;
    let nl = n - 1;
    match arch {
        Architecture::Mi => (2 * n, 4 * (q_dim + 1) * nl),
        Architecture::Fc => (n * (q_dim + 2), 4 * (q_dim + 2) * nl),
        Architecture::Plain => (n, 4 * nl),
    }
}

/// Gradient with respect to the fitting parameters, in the net's layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub w0: Vec<f64>,
    pub w1: Vec<f64>,
    pub theta0: Vec<f64>,
    pub theta1: Vec<f64>,
}

impl ParamGrad {
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.w0.len() + self.w1.len() + self.theta0.len() + self.theta1.len());
        v.extend_from_slice(&self.w0);
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.theta0);
        v.extend_from_slice(&self.theta1);
        v
    }

    pub fn add(&mut self, o: &ParamGrad) {
        for (a, b) in [
            (&mut self.w0, &o.w0),
            (&mut self.w1, &o.w1),
            (&mut self.theta0, &o.theta0),
            (&mut self.theta1, &o.theta1),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in [&mut self.w0, &mut self.w1, &mut self.theta0, &mut self.theta1] {
            v.iter_mut().for_each(|x| *x *= s);
        }
    }
}

impl ParamNet {
    /// Net with `w0 = 1`, identity quaternions and zero slopes.
    pub fn zeros(topology: Topology, arch: Architecture, activation: Activation, q_dim: usize) -> Self {
        let n = topology.n_nodes();
        let nl = topology.n_laminates();
        let (dw, dt) = Self::widths(arch, q_dim);
        let mut theta0 = vec![0.0; 4 * nl];
        for l in 0..nl {
            theta0[4 * l] = 1.0;
        }
        ParamNet {
            topology,
            arch,
            activation,
            q_dim,
            w0: vec![1.0; n],
            w1: vec![0.0; n * dw],
            theta0,
            theta1: vec![0.0; 4 * nl * dt],
            rescale: Rescale::identity(q_dim),
        }
    }

    /// Input widths of the weight map and the rotation map.
    fn widths(arch: Architecture, q_dim: usize) -> (usize, usize) {
        match arch {
            Architecture::Mi => (1, q_dim),
            Architecture::Fc => (q_dim + 1, q_dim + 1),
            Architecture::Plain => (0, 0),
        }
    }

    pub fn input_widths(&self) -> (usize, usize) {
        Self::widths(self.arch, self.q_dim)
    }

    fn inputs(&self, p: &MicroParams) -> Result<(Vec<f64>, Vec<f64>)> {
        if p.q.len() != self.q_dim {
            return Err(DmnError::DimensionMismatch(format!(
                "expected {} morphological parameters, got {}",
                self.q_dim,
                p.q.len()
            )));
        }
        let full = || {
            let mut v = vec![p.vf];
            v.extend_from_slice(&p.q);
            v
        };
        Ok(match self.arch {
            Architecture::Mi => (vec![p.vf], p.q.clone()),
            Architecture::Fc => (full(), full()),
            Architecture::Plain => (vec![], vec![]),
        })
    }

    pub fn check_shapes(&self) -> Result<()> {
        let n = self.topology.n_nodes();
        let nl = self.topology.n_laminates();
        let (dw, dt) = self.input_widths();
        let expect = [
            ("w0", self.w0.len(), n),
            ("w1", self.w1.len(), n * dw),
            ("theta0", self.theta0.len(), 4 * nl),
            ("theta1", self.theta1.len(), 4 * nl * dt),
            ("rescale", self.rescale.min.len(), self.q_dim),
            ("rescale", self.rescale.max.len(), self.q_dim),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(DmnError::DimensionMismatch(format!(
                    "{name}: expected {want} entries, got {got}"
                )));
            }
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.w0.len() + self.w1.len() + self.theta0.len() + self.theta1.len()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        v.extend_from_slice(&self.w0);
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.theta0);
        v.extend_from_slice(&self.theta1);
        v
    }

    pub fn set_params(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.n_params() {
            return Err(DmnError::DimensionMismatch(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                v.len()
            )));
        }
        let mut off = 0;
        for dst in [&mut self.w0, &mut self.w1, &mut self.theta0, &mut self.theta1] {
            let n = dst.len();
            dst.copy_from_slice(&v[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn zero_grad(&self) -> ParamGrad {
        ParamGrad {
            w0: vec![0.0; self.w0.len()],
            w1: vec![0.0; self.w1.len()],
            theta0: vec![0.0; self.theta0.len()],
            theta1: vec![0.0; self.theta1.len()],
        }
    }

    /// Pre-activations of the node weights.
    pub fn weight_preactivations(&self, p: &MicroParams) -> Result<Vec<f64>> {
        let (xw, _) = self.inputs(p)?;
        let dw = xw.len();
        Ok((0..self.w0.len())
            .map(|i| {
                self.w0[i]
                    + (0..dw)
                        .map(|k| self.w1[i * dw + k] * xw[k])
                        .sum::<f64>()
            })
            .collect())
    }

    pub fn weights(&self, p: &MicroParams) -> Result<Vec<f64>> {
        Ok(self
            .weight_preactivations(p)?
            .into_iter()
            .map(|z| self.activation.apply(z))
            .collect())
    }

    pub fn quaternions(&self, p: &MicroParams) -> Result<Vec<Quaternion>> {
        let (_, xt) = self.inputs(p)?;
        let dt = xt.len();
        let nl = self.topology.n_laminates();
        Ok((0..nl)
            .map(|l| {
                let mut q = [0.0; 4];
                for (c, qc) in q.iter_mut().enumerate() {
                    let r = l * 4 + c;
                    *qc = self.theta0[r]
                        + (0..dt)
                            .map(|k| self.theta1[r * dt + k] * xt[k])
                            .sum::<f64>();
                }
                Quaternion(q)
            })
            .collect())
    }

    /// Network instance at (already rescaled) parameters `p`.
    pub fn eval_params(&self, p: &MicroParams) -> Result<DmnInstance> {
        self.check_shapes()?;
        Ok(DmnInstance {
            topology: self.topology,
            weights: self.weights(p)?,
            rotations: self.quaternions(p)?,
            input_rotations: None,
        })
    }

    /// Network instance at parameters `p` given in physical units.
    pub fn eval_physical(&self, p: &MicroParams) -> Result<DmnInstance> {
        self.eval_params(&self.rescale.apply(p))
    }

    /// Derivative along `vf` of a scalar whose node-weight and quaternion
    /// gradients at `p` are `w_bar` and `q_bar`.
    pub fn vf_gradient(&self, p: &MicroParams, w_bar: &[f64], q_bar: &[[f64; 4]]) -> Result<f64> {
        let z = self.weight_preactivations(p)?;
        let (dw, dt) = self.input_widths();
        let mut g = 0.0;
        if dw > 0 {
            for i in 0..self.w0.len() {
                g += w_bar[i] * self.activation.derivative(z[i]) * self.w1[i * dw];
            }
        }
        // Only the fully-connected rotation map sees vf (as its first input).
        if self.arch == Architecture::Fc {
            for (l, qb) in q_bar.iter().enumerate() {
                for (c, &gq) in qb.iter().enumerate() {
                    g += gq * self.theta1[(l * 4 + c) * dt];
                }
            }
        }
        Ok(g)
    }

    /// Adds into `grad` the pull-back of node-weight gradients `w_bar` and
    /// quaternion gradients `q_bar` evaluated at `p`.
    pub fn backprop(
        &self,
        p: &MicroParams,
        w_bar: &[f64],
        q_bar: &[[f64; 4]],
        grad: &mut ParamGrad,
    ) -> Result<()> {
        let (xw, xt) = self.inputs(p)?;
        let z = self.weight_preactivations(p)?;
        let dw = xw.len();
        for i in 0..self.w0.len() {
            let zb = w_bar[i] * self.activation.derivative(z[i]);
            if zb == 0.0 {
                continue;
            }
            grad.w0[i] += zb;
            for k in 0..dw {
                grad.w1[i * dw + k] += zb * xw[k];
            }
        }
        let dt = xt.len();
        for (l, qb) in q_bar.iter().enumerate() {
            for (c, &g) in qb.iter().enumerate() {
                let r = l * 4 + c;
                grad.theta0[r] += g;
                for k in 0..dt {
                    grad.theta1[r * dt + k] += g * xt[k];
                }
            }
        }
        Ok(())
    }
}

/// Random initialization: `w0 ~ U(0.2, 0.8)`, zero slopes, unit random quaternions.
pub fn init_params(
    topology: Topology,
    q_dim: usize,
    arch: Architecture,
    activation: Activation,
    seed: u64,
) -> ParamNet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = ParamNet::zeros(topology, arch, activation, q_dim);
    for w in &mut net.w0 {
        *w = rng.random_range(0.2..0.8);
    }
    for l in 0..topology.n_laminates() {
        let mut q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let mut n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        while n < 1e-6 {
            q = std::array::from_fn(|_| rng.sample(StandardNormal));
            n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        }
        for c in 0..4 {
            net.theta0[4 * l + c] = q[c] / n;
        }
    }
    net
}

/// Rescales phase-1 weights by `(1 - vf_new)/(1 - vf_base)` and phase-2
/// weights by `vf_new / vf_base`.
pub fn transfer_scale(base_w: &[f64], vf_base: f64, vf_new: f64) -> Result<Vec<f64>> {
    if !(vf_base > 0.0 && vf_base < 1.0) {
        return Err(DmnError::DegenerateBase(vf_base));
    }
    let s1 = (1.0 - vf_new) / (1.0 - vf_base);
    let s2 = vf_new / vf_base;
    Ok(base_w
        .iter()
        .enumerate()
        .map(|(i, &w)| if i % 2 == 0 { w * s1 } else { w * s2 })
        .collect())
}

/// Piecewise-linear interpolation between anchor instances sorted on a scalar
/// parameter; outside the anchor range the nearest anchor is transfer-scaled.
pub fn interpolate_instances(anchors: &[(f64, DmnInstance)], p: f64) -> Result<DmnInstance> {
    let (first, last) = match (anchors.first(), anchors.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(DmnError::NoAnchors),
    };
    if anchors.windows(2).any(|w| !(w[0].0 < w[1].0)) {
        return Err(DmnError::Data("anchors must be strictly increasing".into()));
    }
    if let Some((_, m)) = anchors.iter().find(|(x, _)| *x == p) {
        return Ok(m.clone());
    }
    let scaled = |(x, m): &(f64, DmnInstance)| -> Result<DmnInstance> {
        let mut out = m.clone();
        out.weights = transfer_scale(&m.weights, *x, p)?;
        Ok(out)
    };
    if p < first.0 {
        return scaled(first);
    }
    if p > last.0 {
        return scaled(last);
    }
    let k = anchors.iter().position(|(x, _)| *x > p).expect("inside range");
    let (x0, m0) = &anchors[k - 1];
    let (x1, m1) = &anchors[k];
    let t = (p - x0) / (x1 - x0);
    let mut out = m0.clone();
    for (o, (a, b)) in out.weights.iter_mut().zip(m0.weights.iter().zip(&m1.weights)) {
        *o = (1.0 - t) * a + t * b;
    }
    for (o, (a, b)) in out.rotations.iter_mut().zip(m0.rotations.iter().zip(&m1.rotations)) {
        for c in 0..4 {
            o.0[c] = (1.0 - t) * a.0[c] + t * b.0[c];
        }
    }
    Ok(out)
}
