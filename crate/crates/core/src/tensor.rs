//! Mandel-notation tensor algebra, rotations and constituent property tensors.
//!
//! Symmetric second-order tensors are stored as 6-vectors ordered
//! `(11, 22, 12, 33, 13, 23)` with `sqrt(2)` on the shear entries, so that the
//! tangential block (first three entries) and the normal block (last three) of
//! a laminate with lamination direction `e3` are contiguous slices.

use nalgebra::{Matrix3, Matrix6, SymmetricEigen, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{DmnError, Result};

/// Symmetric second-order tensor in Mandel form (strain, stress, CTE).
pub type SymTensor2 = Vector6<f64>;
/// Fourth-order tensor with minor symmetries in Mandel form (stiffness, compliance).
pub type MandelMatrix = Matrix6<f64>;
/// Plain 3x3 matrix (rotations, conductivity, orientation tensors).
pub type Mat3 = Matrix3<f64>;

pub const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Index pairs `(i, j)` of each Mandel slot.
pub const MANDEL_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (0, 1), (2, 2), (0, 2), (1, 2)];

/// Scale factor applied to the tensor component of each Mandel slot.
pub const MANDEL_SCALE: [f64; 6] = [1.0, 1.0, SQRT_2, 1.0, SQRT_2, SQRT_2];

/// `MANDEL_SCALE[m] * MANDEL_SCALE[n] / 2`, written so shear-shear pairs are exactly 1.
fn half_scale(m: usize, n: usize) -> f64 {
    match (MANDEL_PAIRS[m].0 != MANDEL_PAIRS[m].1, MANDEL_PAIRS[n].0 != MANDEL_PAIRS[n].1) {
        (true, true) => 1.0,
        (false, false) => 0.5,
        _ => std::f64::consts::FRAC_1_SQRT_2,
    }
}

/// Default threshold on the quaternion norm.
pub const QUATERNION_EPS: f64 = 1e-8;

/// Mandel image of the second-order identity.
pub fn mandel_identity() -> SymTensor2 {
    SymTensor2::new(1.0, 1.0, 0.0, 1.0, 0.0, 0.0)
}

/// Converts a symmetric 3x3 matrix to its Mandel vector (symmetric part is used).
pub fn to_mandel(a: &Mat3) -> SymTensor2 {
    let mut v = SymTensor2::zeros();
    for (m, &(i, j)) in MANDEL_PAIRS.iter().enumerate() {
        v[m] = if i == j {
            a[(i, i)]
        } else {
            0.5 * (a[(i, j)] + a[(j, i)]) * SQRT_2
        };
    }
    v
}

pub fn from_mandel(v: &SymTensor2) -> Mat3 {
    let mut a = Mat3::zeros();
    for (m, &(i, j)) in MANDEL_PAIRS.iter().enumerate() {
        if i == j {
            a[(i, i)] = v[m];
        } else {
            let x = v[m] / SQRT_2;
            a[(i, j)] = x;
            a[(j, i)] = x;
        }
    }
    a
}

/// Full double contraction `A : B` of two symmetric tensors given as 3x3 matrices.
pub fn double_contraction(a: &Mat3, b: &Mat3) -> f64 {
    a.component_mul(b).sum()
}

/// Quaternion in scalar-first convention `(w, x, y, z)`; need not be normalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion(pub [f64; 4]);

impl Quaternion {
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quaternion([w, x, y, z])
    }

    pub fn identity() -> Self {
        Quaternion([1.0, 0.0, 0.0, 0.0])
    }

    /// Rotation of `angle` radians about the (not necessarily unit) `axis`.
    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Self {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let (s, c) = (0.5 * angle).sin_cos();
        Quaternion([c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n])
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn to_rotation_matrix(&self) -> Result<Mat3> {
        quat_to_rotmat(self)
    }
}

/// Rotation matrix of `q / |q|`.
pub fn quat_to_rotmat(q: &Quaternion) -> Result<Mat3> {
    let n = q.norm();
    if !(n > QUATERNION_EPS) {
        return Err(DmnError::DegenerateQuaternion(n));
    }
    let s = n * n;
    Ok(quadratic_form(&q.0) / s)
}

fn quadratic_form(q: &[f64; 4]) -> Mat3 {
    let [w, x, y, z] = *q;
    Mat3::new(
        w * w + x * x - y * y - z * z,
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        w * w - x * x + y * y - z * z,
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        w * w - x * x - y * y + z * z,
    )
}

/// Pulls a gradient with respect to `R(q)` back to the (unnormalized) quaternion.
pub fn quat_to_rotmat_adjoint(q: &Quaternion, r_bar: &Mat3) -> Result<[f64; 4]> {
    let n = q.norm();
    if !(n > QUATERNION_EPS) {
        return Err(DmnError::DegenerateQuaternion(n));
    }
    let s = n * n;
    let [w, x, y, z] = q.0;
    let r = quadratic_form(&q.0) / s;
    let b = r_bar;
    // d(quadratic_form)/dq contracted with r_bar, entry by entry.
    let gw = 2.0
        * (w * b[(0, 0)] - z * b[(0, 1)] + y * b[(0, 2)] + z * b[(1, 0)] + w * b[(1, 1)]
            - x * b[(1, 2)]
            - y * b[(2, 0)]
            + x * b[(2, 1)]
            + w * b[(2, 2)]);
    let gx = 2.0
        * (x * b[(0, 0)] + y * b[(0, 1)] + z * b[(0, 2)] + y * b[(1, 0)] - x * b[(1, 1)]
            - w * b[(1, 2)]
            + z * b[(2, 0)]
            + w * b[(2, 1)]
            - x * b[(2, 2)]);
    let gy = 2.0
        * (-y * b[(0, 0)] + x * b[(0, 1)] + w * b[(0, 2)] + x * b[(1, 0)] + y * b[(1, 1)]
            + z * b[(1, 2)]
            - w * b[(2, 0)]
            + z * b[(2, 1)]
            - y * b[(2, 2)]);
    let gz = 2.0
        * (-z * b[(0, 0)] - w * b[(0, 1)] + x * b[(0, 2)] + w * b[(1, 0)] - z * b[(1, 1)]
            + y * b[(1, 2)]
            + x * b[(2, 0)]
            + y * b[(2, 1)]
            + z * b[(2, 2)]);
    let rb = r.component_mul(b).sum();
    Ok([
        (gw - 2.0 * w * rb) / s,
        (gx - 2.0 * x * rb) / s,
        (gy - 2.0 * y * rb) / s,
        (gz - 2.0 * z * rb) / s,
    ])
}

/// 6x6 orthogonal operator `Q` such that `to_mandel(R A R^T) = Q to_mandel(A)`.
pub fn mandel_rotation(r: &Mat3) -> MandelMatrix {
    let mut q = MandelMatrix::zeros();
    for (m, &(i, j)) in MANDEL_PAIRS.iter().enumerate() {
        for (n, &(k, l)) in MANDEL_PAIRS.iter().enumerate() {
            let c = half_scale(m, n);
            q[(m, n)] = c * (r[(i, k)] * r[(j, l)] + r[(i, l)] * r[(j, k)]);
        }
    }
    q
}

/// Pulls a gradient with respect to `mandel_rotation(R)` back to `R`.
pub fn mandel_rotation_adjoint(r: &Mat3, q_bar: &MandelMatrix) -> Mat3 {
    let mut r_bar = Mat3::zeros();
    for (m, &(i, j)) in MANDEL_PAIRS.iter().enumerate() {
        for (n, &(k, l)) in MANDEL_PAIRS.iter().enumerate() {
            let g = half_scale(m, n) * q_bar[(m, n)];
            r_bar[(i, k)] += g * r[(j, l)];
            r_bar[(j, l)] += g * r[(i, k)];
            r_bar[(i, l)] += g * r[(j, k)];
            r_bar[(j, k)] += g * r[(i, l)];
        }
    }
    r_bar
}

/// `C'_ijkl = R_ia R_jb R_kc R_ld C_abcd`, expressed in Mandel form.
pub fn rotate_stiffness(c: &MandelMatrix, r: &Mat3) -> MandelMatrix {
    let q = mandel_rotation(r);
    q * c * q.transpose()
}

/// `R t R^T`.
pub fn rotate_sym2(t: &Mat3, r: &Mat3) -> Mat3 {
    r * t * r.transpose()
}

/// Rotation of a Mandel vector.
pub fn rotate_mandel(v: &SymTensor2, r: &Mat3) -> SymTensor2 {
    mandel_rotation(r) * v
}

pub fn symmetrize6(c: &MandelMatrix) -> MandelMatrix {
    (c + c.transpose()) * 0.5
}

pub fn symmetrize3(c: &Mat3) -> Mat3 {
    (c + c.transpose()) * 0.5
}

pub fn min_eigenvalue6(c: &MandelMatrix) -> f64 {
    SymmetricEigen::new(symmetrize6(c)).eigenvalues.min()
}

pub fn min_eigenvalue3(c: &Mat3) -> f64 {
    SymmetricEigen::new(symmetrize3(c)).eigenvalues.min()
}

/// Fails with `NotPositiveDefinite` unless every eigenvalue is positive.
pub fn check_spd(c: &MandelMatrix) -> Result<()> {
    let lmin = min_eigenvalue6(c);
    if lmin > 0.0 && lmin.is_finite() {
        Ok(())
    } else {
        Err(DmnError::NotPositiveDefinite(lmin))
    }
}

/// Nine orthotropic engineering constants in the material frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrthotropicConstants {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub nu12: f64,
    pub nu13: f64,
    pub nu23: f64,
    pub g12: f64,
    pub g13: f64,
    pub g23: f64,
}

impl OrthotropicConstants {
    pub fn to_array(&self) -> [f64; 9] {
        [
            self.e1, self.e2, self.e3, self.nu12, self.nu13, self.nu23, self.g12, self.g13,
            self.g23,
        ]
    }

    pub fn from_array(a: &[f64; 9]) -> Self {
        OrthotropicConstants {
            e1: a[0],
            e2: a[1],
            e3: a[2],
            nu12: a[3],
            nu13: a[4],
            nu23: a[5],
            g12: a[6],
            g13: a[7],
            g23: a[8],
        }
    }

    pub fn compliance(&self) -> MandelMatrix {
        let mut s = MandelMatrix::zeros();
        s[(0, 0)] = 1.0 / self.e1;
        s[(1, 1)] = 1.0 / self.e2;
        s[(3, 3)] = 1.0 / self.e3;
        s[(0, 1)] = -self.nu12 / self.e1;
        s[(1, 0)] = s[(0, 1)];
        s[(0, 3)] = -self.nu13 / self.e1;
        s[(3, 0)] = s[(0, 3)];
        s[(1, 3)] = -self.nu23 / self.e2;
        s[(3, 1)] = s[(1, 3)];
        // Mandel shear slots carry 2G.
        s[(2, 2)] = 0.5 / self.g12;
        s[(4, 4)] = 0.5 / self.g13;
        s[(5, 5)] = 0.5 / self.g23;
        s
    }

    /// Derivatives of the compliance with respect to each of the nine constants.
    pub fn compliance_gradient(&self) -> [MandelMatrix; 9] {
        let mut g = [MandelMatrix::zeros(); 9];
        let sym = |m: &mut MandelMatrix, i: usize, j: usize, v: f64| {
            m[(i, j)] = v;
            m[(j, i)] = v;
        };
        let (e1, e2, e3) = (self.e1, self.e2, self.e3);
        g[0][(0, 0)] = -1.0 / (e1 * e1);
        sym(&mut g[0], 0, 1, self.nu12 / (e1 * e1));
        sym(&mut g[0], 0, 3, self.nu13 / (e1 * e1));
        g[1][(1, 1)] = -1.0 / (e2 * e2);
        sym(&mut g[1], 1, 3, self.nu23 / (e2 * e2));
        g[2][(3, 3)] = -1.0 / (e3 * e3);
        sym(&mut g[3], 0, 1, -1.0 / e1);
        sym(&mut g[4], 0, 3, -1.0 / e1);
        sym(&mut g[5], 1, 3, -1.0 / e2);
        g[6][(2, 2)] = -0.5 / (self.g12 * self.g12);
        g[7][(4, 4)] = -0.5 / (self.g13 * self.g13);
        g[8][(5, 5)] = -0.5 / (self.g23 * self.g23);
        g
    }
}

/// Engineering constants of one phase, by symmetry class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum EngineeringConstants {
    Isotropic {
        e: f64,
        nu: f64,
    },
    /// Symmetry axis `e1`; `G23 = E2 / (2 (1 + nu23))`.
    TransverselyIsotropic {
        e1: f64,
        e2: f64,
        nu12: f64,
        nu23: f64,
        g12: f64,
    },
    Orthotropic(OrthotropicConstants),
}

impl EngineeringConstants {
    pub fn n_params(&self) -> usize {
        match self {
            EngineeringConstants::Isotropic { .. } => 2,
            EngineeringConstants::TransverselyIsotropic { .. } => 5,
            EngineeringConstants::Orthotropic(_) => 9,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            EngineeringConstants::Isotropic { e, nu } => vec![e, nu],
            EngineeringConstants::TransverselyIsotropic {
                e1,
                e2,
                nu12,
                nu23,
                g12,
            } => vec![e1, e2, nu12, nu23, g12],
            EngineeringConstants::Orthotropic(o) => o.to_array().to_vec(),
        }
    }

    /// Same symmetry class with new parameter values.
    pub fn with_params(&self, p: &[f64]) -> Result<Self> {
        if p.len() != self.n_params() {
            return Err(DmnError::DimensionMismatch(format!(
                "expected {} engineering constants, got {}",
                self.n_params(),
                p.len()
            )));
        }
        Ok(match self {
            EngineeringConstants::Isotropic { .. } => EngineeringConstants::Isotropic {
                e: p[0],
                nu: p[1],
            },
            EngineeringConstants::TransverselyIsotropic { .. } => {
                EngineeringConstants::TransverselyIsotropic {
                    e1: p[0],
                    e2: p[1],
                    nu12: p[2],
                    nu23: p[3],
                    g12: p[4],
                }
            }
            EngineeringConstants::Orthotropic(_) => {
                let mut a = [0.0; 9];
                a.copy_from_slice(p);
                EngineeringConstants::Orthotropic(OrthotropicConstants::from_array(&a))
            }
        })
    }

    /// Whether parameter `k` is a modulus (positive, scale-like) rather than a ratio.
    pub fn is_modulus(&self, k: usize) -> bool {
        match self {
            EngineeringConstants::Isotropic { .. } => k == 0,
            EngineeringConstants::TransverselyIsotropic { .. } => matches!(k, 0 | 1 | 4),
            EngineeringConstants::Orthotropic(_) => !matches!(k, 3..=5),
        }
    }

    pub fn to_orthotropic(&self) -> OrthotropicConstants {
        match *self {
            EngineeringConstants::Isotropic { e, nu } => {
                let g = e / (2.0 * (1.0 + nu));
                OrthotropicConstants {
                    e1: e,
                    e2: e,
                    e3: e,
                    nu12: nu,
                    nu13: nu,
                    nu23: nu,
                    g12: g,
                    g13: g,
                    g23: g,
                }
            }
            EngineeringConstants::TransverselyIsotropic {
                e1,
                e2,
                nu12,
                nu23,
                g12,
            } => OrthotropicConstants {
                e1,
                e2,
                e3: e2,
                nu12,
                nu13: nu12,
                nu23,
                g12,
                g13: g12,
                g23: e2 / (2.0 * (1.0 + nu23)),
            },
            EngineeringConstants::Orthotropic(o) => o,
        }
    }

    /// Jacobian `d(orthotropic constants) / d(params)`, 9 rows by `n_params` columns.
    fn orthotropic_jacobian(&self) -> Vec<[f64; 9]> {
        match *self {
            EngineeringConstants::Isotropic { e, nu } => {
                let dg_de = 1.0 / (2.0 * (1.0 + nu));
                let dg_dnu = -e / (2.0 * (1.0 + nu) * (1.0 + nu));
                vec![
                    [1.0, 1.0, 1.0, 0.0, 0.0, 0.0, dg_de, dg_de, dg_de],
                    [0.0, 0.0, 0.0, 1.0, 1.0, 1.0, dg_dnu, dg_dnu, dg_dnu],
                ]
            }
            EngineeringConstants::TransverselyIsotropic { e2, nu23, .. } => {
                let d = 2.0 * (1.0 + nu23);
                vec![
                    [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                    [0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0 / d],
                    [0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0],
                    [0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, -2.0 * e2 / (d * d)],
                    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0],
                ]
            }
            EngineeringConstants::Orthotropic(_) => (0..9)
                .map(|k| {
                    let mut col = [0.0; 9];
                    col[k] = 1.0;
                    col
                })
                .collect(),
        }
    }

    pub fn compliance(&self) -> MandelMatrix {
        self.to_orthotropic().compliance()
    }

    /// Stiffness from inverting the compliance; fails for inadmissible constants.
    pub fn stiffness(&self) -> Result<MandelMatrix> {
        let s = self.compliance();
        check_spd(&s)?;
        let c = s
            .try_inverse()
            .ok_or(DmnError::NotPositiveDefinite(0.0))?;
        let c = symmetrize6(&c);
        check_spd(&c)?;
        Ok(c)
    }

    /// Derivatives of the stiffness with respect to each parameter.
    pub fn stiffness_gradient(&self) -> Result<Vec<MandelMatrix>> {
        let c = self.stiffness()?;
        let ortho = self.to_orthotropic();
        let ds = ortho.compliance_gradient();
        let jac = self.orthotropic_jacobian();
        Ok(jac
            .iter()
            .map(|col| {
                let mut d_s = MandelMatrix::zeros();
                for (k, &jk) in col.iter().enumerate() {
                    if jk != 0.0 {
                        d_s += ds[k] * jk;
                    }
                }
                -(c * d_s * c)
            })
            .collect())
    }
}

pub fn iso_stiffness(e: f64, nu: f64) -> Result<MandelMatrix> {
    EngineeringConstants::Isotropic { e, nu }.stiffness()
}

pub fn ortho_stiffness(c: &OrthotropicConstants) -> Result<MandelMatrix> {
    EngineeringConstants::Orthotropic(*c).stiffness()
}

pub fn transiso_stiffness(e1: f64, e2: f64, nu12: f64, nu23: f64, g12: f64) -> Result<MandelMatrix> {
    EngineeringConstants::TransverselyIsotropic {
        e1,
        e2,
        nu12,
        nu23,
        g12,
    }
    .stiffness()
}

/// Isotropic stiffness from bulk and shear moduli: `3K P_vol + 2G P_dev`.
pub fn iso_stiffness_bulk_shear(bulk: f64, shear: f64) -> MandelMatrix {
    let m = mandel_identity();
    let vol = m * m.transpose() / 3.0;
    let dev = MandelMatrix::identity() - vol;
    vol * (3.0 * bulk) + dev * (2.0 * shear)
}

pub fn iso_conductivity(k: f64) -> Mat3 {
    Mat3::identity() * k
}

pub fn frobenius6(c: &MandelMatrix) -> f64 {
    c.norm()
}
