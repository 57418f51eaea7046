//! Synthetic ground truth: vf-consistent teacher networks, dataset assembly,
//! Voigt/Reuss and Wiener bounds, and direct two-layer continuity solves that
//! share no code with the laminate kernels.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Sample, Split};
use crate::error::{DmnError, Result};
use crate::network::Topology;
use crate::parametric::{Activation, Architecture, MicroParams, ParamNet, Rescale};
use crate::tensor::{symmetrize6, Mat3, MandelMatrix, SymTensor2};
use crate::training::sampling::{split_indices, MaterialPair};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeacherSpec {
    pub depth: usize,
    pub seed: u64,
    pub q_dim: usize,
    /// Volume fraction of the random base network the weights are scaled from.
    pub vf_base: f64,
    /// Standard deviation of the morphological slopes of the rotation map.
    pub rotation_slope: f64,
}

impl Default for TeacherSpec {
    fn default() -> Self {
        TeacherSpec {
            depth: 4,
            seed: 0,
            q_dim: 0,
            vf_base: 0.5,
            rotation_slope: 0.5,
        }
    }
}

/// MI teacher whose weights are the base weights rescaled to each vf:
/// phase-1 nodes `w_b (1 - vf) / (1 - vf_b)`, phase-2 nodes `w_b vf / vf_b`.
/// Its network volume fraction equals vf exactly on `[0, 1]`.
pub fn gen_teacher(spec: &TeacherSpec) -> Result<ParamNet> {
    if !(spec.vf_base > 0.0 && spec.vf_base < 1.0) {
        return Err(DmnError::DegenerateBase(spec.vf_base));
    }
    let topo = Topology::new(spec.depth)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut net = ParamNet::zeros(topo, Architecture::Mi, Activation::Relu, spec.q_dim);
    let vb = spec.vf_base;
    let mut wb: Vec<f64> = (0..topo.n_nodes()).map(|_| rng.random_range(0.2..1.0)).collect();
    // Rescale phase 2 so the base network itself has volume fraction vf_b.
    let sum = |ph: usize, w: &[f64]| (0..w.len()).filter(|&i| Topology::phase_of_node(i) == ph).map(|i| w[i]).sum::<f64>();
    let s = sum(0, &wb) * vb / ((1.0 - vb) * sum(1, &wb));
    for (i, w) in wb.iter_mut().enumerate() {
        if Topology::phase_of_node(i) == 1 {
            *w *= s;
        }
    }
    for (i, &w) in wb.iter().enumerate() {
        if Topology::phase_of_node(i) == 0 {
            net.w0[i] = w / (1.0 - vb);
            net.w1[i] = -w / (1.0 - vb);
        } else {
            net.w0[i] = 0.0;
            net.w1[i] = w / vb;
        }
    }
    for v in net.theta0.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    for l in 0..topo.n_laminates() {
        let n = net.theta0[4 * l..4 * l + 4].iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-3);
        for c in 0..4 {
            net.theta0[4 * l + c] /= n;
        }
    }
    if spec.q_dim > 0 && spec.rotation_slope > 0.0 {
        let d = Normal::new(0.0, spec.rotation_slope).map_err(|e| DmnError::Config(e.to_string()))?;
        for v in net.theta1.iter_mut() {
            *v = d.sample(&mut rng);
        }
    }
    net.rescale = Rescale::identity(spec.q_dim);
    Ok(net)
}

/// How samples are assigned to splits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitRule {
    /// Seeded random train/validation assignment over the material samples,
    /// shared by all parameter points.
    Random { train_frac: f64, seed: u64 },
    All { split: Split },
}

/// Cartesian product of parameter points and material pairs, labelled with
/// the teacher's effective stiffness. `noise` is the standard deviation of
/// a log-normal factor applied to each label.
pub fn gen_dataset(
    teacher: &ParamNet,
    points: &[MicroParams],
    materials: &[MaterialPair],
    split: SplitRule,
    noise: Option<(f64, u64)>,
) -> Result<Dataset> {
    if points.is_empty() || materials.is_empty() {
        return Err(DmnError::EmptySampling(format!(
            "{} parameter points and {} material samples",
            points.len(),
            materials.len()
        )));
    }
    let splits: Vec<Split> = match split {
        SplitRule::Random { train_frac, seed } => split_indices(materials.len(), train_frac, seed)
            .into_iter()
            .map(|t| if t { Split::Train } else { Split::Validation })
            .collect(),
        SplitRule::All { split } => vec![split; materials.len()],
    };
    let prepared = points
        .iter()
        .map(|p| teacher.eval_physical(p)?.prepare())
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|a| (0..materials.len()).map(move |m| (a, m)))
        .collect();
    let mut samples = jobs
        .par_iter()
        .map(|&(a, m)| {
            let mp = &materials[m];
            Ok(Sample {
                p: points[a].clone(),
                c1: symmetrize6(&mp.c1),
                c2: symmetrize6(&mp.c2),
                cbar: symmetrize6(&prepared[a].stiffness(&mp.c1, &mp.c2)?),
                split: splits[m],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some((sigma, seed)) = noise {
        if sigma > 0.0 {
            let d = Normal::new(0.0, sigma).map_err(|e| DmnError::Config(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for s in samples.iter_mut() {
                let k: f64 = d.sample(&mut rng);
                s.cbar *= k.exp();
                s.cbar = symmetrize6(&s.cbar);
            }
        }
    }
    Ok(Dataset {
        q_dim: teacher.q_dim,
        samples,
    })
}

/// Reuss (harmonic) and Voigt (arithmetic) bounds for phase-2 fraction `vf`.
pub fn voigt_reuss(c1: &MandelMatrix, c2: &MandelMatrix, vf: f64) -> Result<(MandelMatrix, MandelMatrix)> {
    let inv = |c: &MandelMatrix| c.try_inverse().ok_or(DmnError::NotPositiveDefinite(0.0));
    let voigt = c1 * (1.0 - vf) + c2 * vf;
    let reuss = inv(&(inv(c1)? * (1.0 - vf) + inv(c2)? * vf))?;
    Ok((reuss, voigt))
}

/// Wiener bounds (harmonic, arithmetic) for conductivities.
pub fn wiener(k1: &Mat3, k2: &Mat3, vf: f64) -> Result<(Mat3, Mat3)> {
    let inv = |k: &Mat3| k.try_inverse().ok_or(DmnError::NotPositiveDefinite(0.0));
    let upper = k1 * (1.0 - vf) + k2 * vf;
    let lower = inv(&(inv(k1)? * (1.0 - vf) + inv(k2)? * vf))?;
    Ok((lower, upper))
}

fn solve(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    a.lu().solve(&b).ok_or(DmnError::SingularInterfaceMatrix)
}

/// Normal components (Mandel indices) for a layer normal along `e3`.
const NORMAL: [usize; 3] = [3, 4, 5];
const TANGENTIAL: [usize; 3] = [0, 1, 2];

/// Effective stiffness of a two-layer laminate (normal `e3`, phase-1
/// fraction `f`) from the 12-unknown continuity system, one macroscopic
/// strain column at a time.
pub fn two_layer_stiffness(c1: &MandelMatrix, c2: &MandelMatrix, f: f64) -> Result<MandelMatrix> {
    let mut out = MandelMatrix::zeros();
    for col in 0..6 {
        let mut a = DMatrix::<f64>::zeros(12, 12);
        let mut b = DVector::<f64>::zeros(12);
        let mut row = 0;
        for &t in &TANGENTIAL {
            a[(row, t)] = 1.0;
            a[(row, 6 + t)] = -1.0;
            row += 1;
        }
        for &n in &NORMAL {
            for j in 0..6 {
                a[(row, j)] = c1[(n, j)];
                a[(row, 6 + j)] = -c2[(n, j)];
            }
            row += 1;
        }
        for j in 0..6 {
            a[(row, j)] = f;
            a[(row, 6 + j)] = 1.0 - f;
            b[row] = if j == col { 1.0 } else { 0.0 };
            row += 1;
        }
        let x = solve(a, b)?;
        let e1 = SymTensor2::from_fn(|i, _| x[i]);
        let e2 = SymTensor2::from_fn(|i, _| x[6 + i]);
        out.set_column(col, &(c1 * e1 * f + c2 * e2 * (1.0 - f)));
    }
    Ok(out)
}

/// Effective conductivity of a two-layer laminate from the 6-unknown
/// continuity system (tangential gradient and normal flux continuous).
pub fn two_layer_conductivity(k1: &Mat3, k2: &Mat3, f: f64) -> Result<Mat3> {
    let mut out = Mat3::zeros();
    for col in 0..3 {
        let mut a = DMatrix::<f64>::zeros(6, 6);
        let mut b = DVector::<f64>::zeros(6);
        for t in 0..2 {
            a[(t, t)] = 1.0;
            a[(t, 3 + t)] = -1.0;
        }
        for j in 0..3 {
            a[(2, j)] = k1[(2, j)];
            a[(2, 3 + j)] = -k2[(2, j)];
            a[(3 + j, j)] = f;
            a[(3 + j, 3 + j)] = 1.0 - f;
        }
        b[3 + col] = 1.0;
        let x = solve(a, b)?;
        let g1 = nalgebra::Vector3::new(x[0], x[1], x[2]);
        let g2 = nalgebra::Vector3::new(x[3], x[4], x[5]);
        out.set_column(col, &(k1 * g1 * f + k2 * g2 * (1.0 - f)));
    }
    Ok(out)
}

/// Effective CTE of a stress-free two-layer laminate under a unit
/// temperature change: 18 unknowns (both phase strains and the macroscopic
/// strain), solved directly.
pub fn two_layer_cte(
    c1: &MandelMatrix,
    c2: &MandelMatrix,
    a1: &SymTensor2,
    a2: &SymTensor2,
    f: f64,
) -> Result<SymTensor2> {
    let mut a = DMatrix::<f64>::zeros(18, 18);
    let mut b = DVector::<f64>::zeros(18);
    let mut row = 0;
    for &t in &TANGENTIAL {
        a[(row, t)] = 1.0;
        a[(row, 6 + t)] = -1.0;
        row += 1;
    }
    let ca1 = c1 * a1;
    let ca2 = c2 * a2;
    for &n in &NORMAL {
        for j in 0..6 {
            a[(row, j)] = c1[(n, j)];
            a[(row, 6 + j)] = -c2[(n, j)];
        }
        b[row] = ca1[n] - ca2[n];
        row += 1;
    }
    for j in 0..6 {
        a[(row, j)] = f;
        a[(row, 6 + j)] = 1.0 - f;
        a[(row, 12 + j)] = -1.0;
        row += 1;
    }
    // Zero average stress.
    for i in 0..6 {
        for j in 0..6 {
            a[(row, j)] = f * c1[(i, j)];
            a[(row, 6 + j)] = (1.0 - f) * c2[(i, j)];
        }
        b[row] = f * ca1[i] + (1.0 - f) * ca2[i];
        row += 1;
    }
    let x = solve(a, b)?;
    Ok(SymTensor2::from_fn(|i, _| x[12 + i]))
}
