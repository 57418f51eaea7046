//! Design of experiments: Latin-hypercube material sampling, Sobol and uniform
//! collocation points, and the train/validation split.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DmnError, Result};
use crate::parametric::MicroParams;
use crate::tensor::{EngineeringConstants, MandelMatrix, OrthotropicConstants};

/// Sampling ranges of the orthotropic constants of both phases.
///
/// Moduli are log-uniform, Poisson ratios uniform; the contrast factor is
/// log-uniform and multiplies every phase-2 modulus. With the defaults, any
/// phase-2 to phase-1 Young's modulus ratio lies in `[1e-1, 1e4]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialRanges {
    pub youngs: [(f64, f64); 2],
    pub shear: [(f64, f64); 2],
    pub poisson: (f64, f64),
    pub contrast: (f64, f64),
}

impl Default for MaterialRanges {
    fn default() -> Self {
        let e = (1.0e3 / 10f64.sqrt(), 1.0e3 * 10f64.sqrt());
        let g = (e.0 / 2.6, e.1 / 2.6);
        MaterialRanges {
            youngs: [e, e],
            shear: [g, g],
            poisson: (0.15, 0.45),
            contrast: (1.0, 1e3),
        }
    }
}

/// One sampled phase pair with the constants that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialPair {
    pub c1: MandelMatrix,
    pub c2: MandelMatrix,
    pub consts: [OrthotropicConstants; 2],
    pub contrast: f64,
}

/// `n` points of a Latin hypercube in `[0, 1)^dim`.
pub fn latin_hypercube(n: usize, dim: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; dim]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for d in 0..dim {
        perm.shuffle(rng);
        for (i, p) in pts.iter_mut().enumerate() {
            let u: f64 = rng.random();
            p[d] = (perm[i] as f64 + u) / n as f64;
        }
    }
    pts
}

fn log_uniform(u: f64, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        (lo.ln() + u * (hi.ln() - lo.ln())).exp()
    }
}

fn uniform(u: f64, (lo, hi): (f64, f64)) -> f64 {
    lo + u * (hi - lo)
}

fn phase_constants(u: &[f64], r: &MaterialRanges, phase: usize, scale: f64) -> OrthotropicConstants {
    let e = |k| log_uniform(u[k], r.youngs[phase]) * scale;
    let g = |k| log_uniform(u[k], r.shear[phase]) * scale;
    let nu = |k| uniform(u[k], r.poisson);
    OrthotropicConstants {
        e1: e(0),
        e2: e(1),
        e3: e(2),
        nu12: nu(3),
        nu13: nu(4),
        nu23: nu(5),
        g12: g(6),
        g13: g(7),
        g23: g(8),
    }
}

/// `n` SPD phase pairs from 19-dimensional Latin-hypercube draws; inadmissible
/// draws are discarded and replaced by fresh hypercube batches.
pub fn sample_materials(n: usize, ranges: &MaterialRanges, seed: u64) -> Result<Vec<MaterialPair>> {
    if n == 0 {
        return Err(DmnError::EmptySampling("material sample count is zero".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let (mut drawn, mut rejected) = (0usize, 0usize);
    while out.len() < n {
        let batch = latin_hypercube(n - out.len(), 19, &mut rng);
        for u in batch {
            drawn += 1;
            let contrast = log_uniform(u[18], ranges.contrast);
            let k1 = phase_constants(&u[0..9], ranges, 0, 1.0);
            let k2 = phase_constants(&u[9..18], ranges, 1, contrast);
            let c1 = EngineeringConstants::Orthotropic(k1).stiffness();
            let c2 = EngineeringConstants::Orthotropic(k2).stiffness();
            match (c1, c2) {
                (Ok(c1), Ok(c2)) => out.push(MaterialPair {
                    c1,
                    c2,
                    consts: [k1, k2],
                    contrast,
                }),
                _ => rejected += 1,
            }
        }
        if drawn >= 20 && rejected * 10 > drawn * 9 {
            return Err(DmnError::RejectionBudgetExceeded { rejected, drawn });
        }
    }
    Ok(out)
}

/// `N` equally spaced volume fractions `i / (N - 1)` on `[0, 1]`.
pub fn vf_collocation(n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.5],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

/// Joe-Kuo primitive polynomial data `(s, a, m)` for dimensions 2..=8.
const SOBOL_DIRECTIONS: [(u32, u32, &[u32]); 7] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
];

pub const SOBOL_MAX_DIM: usize = 1 + SOBOL_DIRECTIONS.len();

/// Gray-code Sobol generator (32-bit), skipping the initial zero point.
#[derive(Debug, Clone)]
pub struct Sobol {
    v: Vec<[u32; 32]>,
    x: Vec<u32>,
    index: u32,
}

impl Sobol {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > SOBOL_MAX_DIM {
            return Err(DmnError::Config(format!(
                "Sobol dimension must be in 1..={SOBOL_MAX_DIM}, got {dim}"
            )));
        }
        let mut v = vec![[0u32; 32]; dim];
        for (i, vi) in v[0].iter_mut().enumerate() {
            *vi = 1u32 << (31 - i);
        }
        for d in 1..dim {
            let (s, a, m) = SOBOL_DIRECTIONS[d - 1];
            let s = s as usize;
            for i in 0..s {
                v[d][i] = m[i] << (31 - i);
            }
            for i in s..32 {
                let mut x = v[d][i - s] ^ (v[d][i - s] >> s);
                for k in 1..s {
                    if (a >> (s - 1 - k)) & 1 == 1 {
                        x ^= v[d][i - k];
                    }
                }
                v[d][i] = x;
            }
        }
        Ok(Sobol {
            v,
            x: vec![0; dim],
            index: 0,
        })
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let c = self.index.trailing_ones() as usize;
        for (d, x) in self.x.iter_mut().enumerate() {
            *x ^= self.v[d][c];
        }
        self.index += 1;
        self.x.iter().map(|&x| x as f64 / 4294967296.0).collect()
    }
}

/// First `n` Sobol points in `[0, 1]^dim`.
pub fn sobol_collocation(n: usize, dim: usize) -> Result<Vec<Vec<f64>>> {
    let mut s = Sobol::new(dim)?;
    Ok((0..n).map(|_| s.next_point()).collect())
}

/// Sobol points read as `(vf, q_1, .., q_q)`.
pub fn sobol_params(n: usize, q_dim: usize) -> Result<Vec<MicroParams>> {
    Ok(sobol_collocation(n, q_dim + 1)?
        .into_iter()
        .map(|x| MicroParams::new(x[0], x[1..].to_vec()))
        .collect())
}

/// Seeded random assignment of `n` items to train (fraction `train_frac`) or validation.
pub fn split_indices(n: usize, train_frac: f64, seed: u64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    let n_train = (train_frac * n as f64).round() as usize;
    let mut is_train = vec![false; n];
    for &i in &idx[..n_train.min(n)] {
        is_train[i] = true;
    }
    is_train
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::min_eigenvalue6;

    #[test]
    fn uniform_collocation() {
        assert_eq!(vf_collocation(3), vec![0.0, 0.5, 1.0]);
        assert_eq!(vf_collocation(32).len(), 32);
    }

    #[test]
    fn sobol_first_dimension() {
        let pts = sobol_collocation(3, 1).unwrap();
        assert_eq!(pts, vec![vec![0.5], vec![0.75], vec![0.25]]);
    }

    #[test]
    fn sobol_second_dimension_matches_reference() {
        // Reference values of the Joe-Kuo generator after the zero point.
        let pts = sobol_collocation(7, 2).unwrap();
        let expected = [
            [0.5, 0.5],
            [0.75, 0.25],
            [0.25, 0.75],
            [0.375, 0.375],
            [0.875, 0.875],
            [0.625, 0.125],
            [0.125, 0.625],
        ];
        for (p, e) in pts.iter().zip(expected) {
            assert_eq!(p.as_slice(), &e);
        }
    }

    #[test]
    fn sobol_points_are_distinct_and_in_box() {
        for dim in 1..=SOBOL_MAX_DIM {
            let pts = sobol_collocation(32, dim).unwrap();
            for (i, p) in pts.iter().enumerate() {
                assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
                for q in &pts[..i] {
                    assert_ne!(p, q);
                }
            }
        }
        // Each 1-d projection of the first 2^k points is a permutation of the k-bit grid.
        let pts = sobol_collocation(15, 5).unwrap();
        for d in 0..5 {
            let mut xs: Vec<f64> = pts.iter().map(|p| p[d] * 16.0).collect();
            xs.sort_by(f64::total_cmp);
            assert_eq!(xs, (1..16).map(|i| i as f64).collect::<Vec<_>>());
        }
        assert!(Sobol::new(0).is_err());
        assert!(Sobol::new(SOBOL_MAX_DIM + 1).is_err());
    }

    #[test]
    fn latin_hypercube_stratifies_each_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = latin_hypercube(50, 4, &mut rng);
        for d in 0..4 {
            let mut bins: Vec<usize> = pts.iter().map(|p| (p[d] * 50.0) as usize).collect();
            bins.sort();
            assert_eq!(bins, (0..50).collect::<Vec<_>>());
        }
    }

    #[test]
    fn material_sampling_is_spd_deterministic_and_spans_contrast() {
        let r = MaterialRanges::default();
        let a = sample_materials(500, &r, 42).unwrap();
        assert_eq!(a.len(), 500);
        for m in &a {
            assert!(min_eigenvalue6(&m.c1) > 0.0 && min_eigenvalue6(&m.c2) > 0.0);
        }
        let b = sample_materials(500, &r, 42).unwrap();
        assert_eq!(a, b);
        let ratios: Vec<f64> = a
            .iter()
            .flat_map(|m| {
                let (k1, k2) = (m.consts[0], m.consts[1]);
                let e1 = [k1.e1, k1.e2, k1.e3];
                [k2.e1, k2.e2, k2.e3].into_iter().flat_map(move |x| e1.map(|y| (x / y).log10()))
            })
            .collect();
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo >= -1.0 && lo < 0.0, "{lo}");
        assert!(hi <= 4.0 && hi > 3.0, "{hi}");
    }

    #[test]
    fn collapsed_ranges_give_scaled_copies() {
        let r = MaterialRanges {
            youngs: [(1000.0, 1000.0); 2],
            shear: [(400.0, 400.0); 2],
            poisson: (0.3, 0.3),
            contrast: (5.0, 5.0),
        };
        let m = sample_materials(1, &r, 0).unwrap();
        assert!((m[0].c2 - m[0].c1 * 5.0).norm() < 1e-12 * m[0].c2.norm());
    }

    #[test]
    fn impossible_ranges_exhaust_the_budget() {
        let r = MaterialRanges {
            poisson: (0.9, 0.99),
            ..MaterialRanges::default()
        };
        assert!(matches!(
            sample_materials(10, &r, 0),
            Err(DmnError::RejectionBudgetExceeded { .. })
        ));
    }

    #[test]
    fn split_is_seeded() {
        let a = split_indices(500, 0.8, 3);
        assert_eq!(a.iter().filter(|&&x| x).count(), 400);
        assert_eq!(a, split_indices(500, 0.8, 3));
        assert_ne!(a, split_indices(500, 0.8, 4));
    }
}
