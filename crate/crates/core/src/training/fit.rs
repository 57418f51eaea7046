//! Full-batch training of a parametric net with independent restarts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Split};
use crate::error::{DmnError, Result};
use crate::network::Topology;
use crate::parametric::{init_params, Activation, Architecture, MicroParams, ParamNet, Rescale};
use crate::training::objective::{ConstraintTargets, LossValue, Objective};
use crate::training::rprop::{Rprop, RpropConfig};
use crate::training::sampling::{sobol_params, vf_collocation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl std::str::FromStr for Precision {
    type Err = DmnError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            _ => Err(DmnError::Config(format!("unknown precision '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub depth: usize,
    pub arch: Architecture,
    pub activation: Activation,
    pub epochs: usize,
    pub restarts: usize,
    pub rprop: RpropConfig,
    pub lambda_vf: f64,
    pub lambda_a: f64,
    /// Volume-fraction collocation count; `None` means `N = 2^depth`.
    pub n_vf: Option<usize>,
    /// Orientation collocation count; `None` means `N = 2^depth`.
    pub n_a: Option<usize>,
    pub seed: u64,
    pub precision: Precision,
    /// Splits whose samples enter the data term.
    pub fit_splits: Vec<Split>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            depth: 5,
            arch: Architecture::Mi,
            activation: Activation::Relu,
            epochs: 10000,
            restarts: 20,
            rprop: RpropConfig::default(),
            lambda_vf: 1.0,
            lambda_a: 1.0,
            n_vf: None,
            n_a: None,
            seed: 0,
            precision: Precision::F64,
            fit_splits: vec![Split::Train],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        Topology::new(self.depth)?;
        self.rprop.validate()?;
        if self.restarts == 0 {
            return Err(DmnError::Config("restarts must be at least 1".into()));
        }
        if !(self.lambda_vf >= 0.0 && self.lambda_a >= 0.0) {
            return Err(DmnError::Config("constraint weights must be nonnegative".into()));
        }
        if self.n_vf == Some(0) || self.n_a == Some(0) {
            return Err(DmnError::Config("collocation counts must be positive".into()));
        }
        Ok(())
    }

    /// Collocation points for the volume-fraction and orientation terms, in
    /// rescaled parameter space.
    pub fn collocation(&self, q_dim: usize) -> Result<(Vec<MicroParams>, Vec<MicroParams>)> {
        let n = 1usize << self.depth;
        let n_vf = self.n_vf.unwrap_or(n);
        let n_a = self.n_a.unwrap_or(n);
        let vf_points = match self.arch {
            Architecture::Fc => sobol_params(n_vf, q_dim)?,
            _ => vf_collocation(n_vf)
                .into_iter()
                .map(|v| MicroParams::new(v, vec![0.0; q_dim]))
                .collect(),
        };
        Ok((vf_points, sobol_params(n_a, q_dim)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub per_p: Vec<f64>,
    pub data: f64,
    pub vf: f64,
    pub orientation: f64,
    pub total: f64,
}

impl HistoryRow {
    fn new(epoch: usize, v: LossValue) -> Self {
        HistoryRow {
            epoch,
            per_p: v.per_p,
            data: v.data,
            vf: v.vf,
            orientation: v.orientation,
            total: v.total,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: ParamNet,
    pub history: Vec<HistoryRow>,
    pub restart: usize,
    /// Final total loss of each restart; `None` for failed restarts.
    pub restart_losses: Vec<Option<f64>>,
}

fn quantize(x: &mut [f64], precision: Precision) {
    if precision == Precision::F32 {
        for v in x {
            *v = *v as f32 as f64;
        }
    }
}

/// Trains one net from `init` for `epochs` updates. The history holds the
/// loss before each update and the final loss.
pub fn fit_from(
    init: ParamNet,
    objective: &Objective,
    epochs: usize,
    rprop: RpropConfig,
    precision: Precision,
) -> Result<(ParamNet, Vec<HistoryRow>)> {
    rprop.validate()?;
    let mut net = init;
    let mut x = net.params();
    quantize(&mut x, precision);
    net.set_params(&x)?;
    let mut opt = Rprop::new(x.len(), rprop);
    let mut history = Vec::with_capacity(epochs + 1);
    for epoch in 0..epochs {
        let (v, g) = objective.loss_and_gradient(&net)?;
        if !v.total.is_finite() {
            return Err(DmnError::NonFiniteGradient);
        }
        history.push(HistoryRow::new(epoch, v));
        opt.step(&mut x, &g);
        quantize(&mut x, precision);
        net.set_params(&x)?;
    }
    history.push(HistoryRow::new(epochs, objective.loss(&net)?));
    Ok((net, history))
}

/// Builds the objective for `dataset` under `cfg`, with the morphological
/// rescaling fitted to the dataset's parameter points.
pub fn build_objective(
    dataset: &Dataset,
    targets: &ConstraintTargets,
    cfg: &TrainConfig,
) -> Result<(Objective, Rescale)> {
    cfg.validate()?;
    let rescale = Rescale::fit(dataset.q_dim, dataset.parameter_points().iter());
    let (vf_points, a_points) = cfg.collocation(dataset.q_dim)?;
    let obj = Objective::new(
        dataset,
        &cfg.fit_splits,
        &rescale,
        vf_points,
        a_points,
        targets.clone(),
        cfg.lambda_vf,
        cfg.lambda_a,
    )?;
    let constrained = (cfg.lambda_vf > 0.0) || (cfg.lambda_a > 0.0 && !targets.is_empty());
    if obj.n_samples() == 0 && !constrained {
        return Err(DmnError::Config("nothing to train: no samples and no constraints".into()));
    }
    Ok((obj, rescale))
}

/// Runs `cfg.restarts` independent restarts (seeds `seed`, `seed+1`, ..)
/// and keeps the one with the least final total loss.
pub fn train(dataset: &Dataset, targets: &ConstraintTargets, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let (obj, rescale) = build_objective(dataset, targets, cfg)?;
    let topology = Topology::new(cfg.depth)?;
    let runs: Vec<Result<(ParamNet, Vec<HistoryRow>)>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut init = init_params(topology, dataset.q_dim, cfg.arch, cfg.activation, cfg.seed + r as u64);
            init.rescale = rescale.clone();
            fit_from(init, &obj, cfg.epochs, cfg.rprop, cfg.precision)
        })
        .collect();
    let restart_losses: Vec<Option<f64>> = runs
        .iter()
        .map(|r| r.as_ref().ok().map(|(_, h)| h.last().expect("final loss").total))
        .collect();
    let best = restart_losses
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.map(|l| (i, l)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i);
    let Some(best) = best else {
        return Err(runs.into_iter().find_map(|r| r.err()).expect("failed restart"));
    };
    let (net, history) = runs.into_iter().nth(best).expect("best restart").expect("successful restart");
    Ok(TrainOutcome {
        net,
        history,
        restart: best,
        restart_losses,
    })
}
