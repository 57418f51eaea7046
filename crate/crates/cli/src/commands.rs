use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use mipdmn::inelastic::{power_gap, run_path, LoadPath, NonlinearDmn};
use mipdmn::io;
use mipdmn::network::{active_nodes, forward_conductivity, forward_cte, forward_stiffness};
use mipdmn::oracle::{gen_dataset, gen_teacher, SplitRule};
use mipdmn::parametric::{parameter_count, MicroParams, ParamNet};
use mipdmn::tensor::{from_mandel, iso_conductivity, mandel_identity, MandelMatrix};
use mipdmn::training::report::evaluate;
use mipdmn::training::sampling::sample_materials;
use mipdmn::dataset::Split;

use crate::config::{self, DataFormat, GenDataConfig, IdentifyCmdConfig, PathSpec, PredictConfig, SimulateConfig, TargetSpec};
use crate::config::{EvalConfig, TrainCmdConfig};
use crate::manifest::RunManifest;
use crate::{CliError, Global};

fn snapshot<T: Serialize>(cfg: &T) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(cfg).map_err(|e| CliError::config(e.to_string()))
}

fn required(flag: Option<PathBuf>, from_config: &Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    flag.or_else(|| from_config.clone())
        .ok_or_else(|| CliError::config(format!("no {what} given (flag --{what} or config field '{what}')")))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn check_q(net: &ParamNet, q: &[f64]) -> Result<(), CliError> {
    if q.len() != net.q_dim {
        return Err(CliError::config(format!("model expects {} morphological parameters, got {}", net.q_dim, q.len())));
    }
    Ok(())
}

fn finish(mut m: RunManifest, out: &Path, t0: Instant) -> Result<(), CliError> {
    m.wall_time_s = t0.elapsed().as_secs_f64();
    let path = m.write(out)?;
    println!("manifest: {}", path.display());
    Ok(())
}

/// Upper-triangle labels `{prefix}_ij` of a 6x6 Mandel matrix.
fn sym6_header(prefix: &str) -> Vec<String> {
    let mut h = Vec::with_capacity(21);
    for i in 0..6 {
        for j in i..6 {
            h.push(format!("{prefix}_{}{}", i + 1, j + 1));
        }
    }
    h
}

fn sym6_values(c: &MandelMatrix) -> Vec<String> {
    let mut v = Vec::with_capacity(21);
    for i in 0..6 {
        for j in i..6 {
            v.push(format!("{:?}", c[(i, j)]));
        }
    }
    v
}

const TENSOR_INDEX: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)];

pub fn gen_data(g: &Global) -> Result<(), CliError> {
    let t0 = Instant::now();
    let mut cfg: GenDataConfig = config::load(g.config.as_deref())?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    cfg.teacher.seed = cfg.seed;
    if cfg.points.is_empty() {
        return Err(CliError::config("no parameter points"));
    }
    if cfg.n_materials == 0 {
        return Err(CliError::config("n_materials must be positive"));
    }
    let mut m = RunManifest::new("gen-data", snapshot(&cfg)?);
    let teacher = match &cfg.teacher_model {
        Some(p) => {
            m.input(p)?;
            io::load_model(p)?
        }
        None => gen_teacher(&cfg.teacher)?,
    };
    for p in cfg.points.iter().chain(&cfg.test_points) {
        check_q(&teacher, &p.q)?;
    }
    m.seeds.insert("teacher".into(), cfg.seed);
    m.seeds.insert("materials".into(), cfg.seed + 1);
    m.seeds.insert("split".into(), cfg.seed + 2);
    let mats = sample_materials(cfg.n_materials, &cfg.materials, cfg.seed + 1)?;
    let noise = |s: u64| cfg.noise.map(|sigma| (sigma, s));
    let split = SplitRule::Random { train_frac: cfg.train_frac, seed: cfg.seed + 2 };
    let mut ds = gen_dataset(&teacher, &cfg.points, &mats, split, noise(cfg.seed + 3))?;
    if !cfg.test_points.is_empty() {
        let test = gen_dataset(&teacher, &cfg.test_points, &mats, SplitRule::All { split: Split::Test }, noise(cfg.seed + 4))?;
        ds.samples.extend(test.samples);
    }
    if cfg.noise.is_some() {
        m.seeds.insert("noise".into(), cfg.seed + 3);
    }
    let data_path = g.out.join(match cfg.format {
        DataFormat::Csv => "dataset.csv",
        DataFormat::Json => "dataset.json",
    });
    io::save_dataset(&data_path, &ds)?;
    m.output(&data_path)?;
    let teacher_path = g.out.join("teacher.json");
    io::save_model(&teacher_path, &teacher, Some("teacher"))?;
    m.output(&teacher_path)?;
    println!(
        "{} records ({} points x {} materials) -> {}",
        ds.len(),
        cfg.points.len() + cfg.test_points.len(),
        mats.len(),
        data_path.display()
    );
    finish(m, &g.out, t0)
}

pub fn train(g: &Global, data: Option<PathBuf>) -> Result<(), CliError> {
    let t0 = Instant::now();
    let mut cfg: TrainCmdConfig = config::load(g.config.as_deref())?;
    if let Some(s) = g.seed {
        cfg.train.seed = s;
    }
    if let Some(p) = g.precision {
        cfg.train.precision = p;
    }
    let data = required(data, &cfg.data, "data")?;
    cfg.data = Some(data.clone());
    let ds = io::load_dataset(&data)?;
    if !ds.samples.iter().any(|s| cfg.train.fit_splits.contains(&s.split)) {
        return Err(CliError::config(format!("{} has no samples in the training splits", data.display())));
    }
    let mut m = RunManifest::new("train", snapshot(&cfg)?);
    m.input(&data)?;
    m.seeds.insert("restarts".into(), cfg.train.seed);
    let outcome = mipdmn::training::train(&ds, &cfg.targets, &cfg.train)?;
    let model_path = g.out.join("model.json");
    io::save_model(&model_path, &outcome.net, None)?;
    m.output(&model_path)?;
    let hist_path = g.out.join("history.csv");
    io::save_with(&hist_path, outcome.history.as_slice(), io::write_history_csv)?;
    m.output(&hist_path)?;
    if let Some(last) = outcome.history.last() {
        println!(
            "kept restart {} of {}: epoch {} total {:.4e} (data {:.4e}, vf {:.4e}, orientation {:.4e})",
            outcome.restart,
            cfg.train.restarts,
            last.epoch,
            last.total,
            last.data,
            last.vf,
            last.orientation
        );
    }
    println!("model -> {}", model_path.display());
    finish(m, &g.out, t0)
}

pub fn eval(g: &Global, model: Option<PathBuf>, data: Option<PathBuf>) -> Result<(), CliError> {
    let t0 = Instant::now();
    let mut cfg: EvalConfig = config::load(g.config.as_deref())?;
    let model = required(model, &cfg.model, "model")?;
    let data = required(data, &cfg.data, "data")?;
    cfg.model = Some(model.clone());
    cfg.data = Some(data.clone());
    let net = io::load_model(&model)?;
    let ds = io::load_dataset(&data)?;
    if ds.is_empty() {
        return Err(CliError::config(format!("{} has no samples", data.display())));
    }
    let mut m = RunManifest::new("eval", snapshot(&cfg)?);
    m.input(&model)?;
    m.input(&data)?;
    let rows = evaluate(&net, &ds)?;
    let path = g.out.join("quantiles.csv");
    io::save_with(&path, rows.as_slice(), |w, r| io::write_quantiles_csv(w, ds.q_dim, r))?;
    m.output(&path)?;
    println!("{:>8} {:>10} {:>6} {:>9} {:>9} {:>9}", "vf", "split", "n", "q10", "q50", "q90");
    for r in &rows {
        println!(
            "{:>8.4} {:>10} {:>6} {:>8.3}% {:>8.3}% {:>8.3}%",
            r.p.vf,
            r.split.as_str(),
            r.n,
            100.0 * r.quantiles.q10,
            100.0 * r.quantiles.q50,
            100.0 * r.quantiles.q90
        );
    }
    finish(m, &g.out, t0)
}

pub fn predict(g: &Global, model: Option<PathBuf>) -> Result<(), CliError> {
    let t0 = Instant::now();
    let mut cfg: PredictConfig = config::load(g.config.as_deref())?;
    let model = required(model, &cfg.model, "model")?;
    cfg.model = Some(model.clone());
    let net = io::load_model(&model)?;
    check_q(&net, &cfg.q)?;
    if let Some(v) = cfg.vf.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(CliError::config(format!("vf {v} outside [0, 1]")));
    }
    let mut m = RunManifest::new("predict", snapshot(&cfg)?);
    m.input(&model)?;
    let c1 = cfg.phases[0].stiffness()?;
    let c2 = cfg.phases[1].stiffness()?;
    let k1 = iso_conductivity(cfg.conductivity[0]);
    let k2 = iso_conductivity(cfg.conductivity[1]);
    let a1 = mandel_identity() * cfg.cte[0];
    let a2 = mandel_identity() * cfg.cte[1];

    let path = g.out.join("predict.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    let mut header = vec!["vf".to_string()];
    header.extend((1..=net.q_dim).map(|k| format!("q{k}")));
    header.extend(sym6_header("cbar"));
    header.extend(TENSOR_INDEX.iter().map(|(i, j)| format!("k_{}{}", i + 1, j + 1)));
    header.extend(TENSOR_INDEX.iter().map(|(i, j)| format!("alpha_{}{}", i + 1, j + 1)));
    w.write_record(&header).map_err(mipdmn::DmnError::from)?;
    for &vf in &cfg.vf {
        let inst = net.eval_physical(&MicroParams::new(vf, cfg.q.clone()))?;
        let c = forward_stiffness(&inst, &c1, &c2)?;
        let k = forward_conductivity(&inst, &k1, &k2)?;
        let a = from_mandel(&forward_cte(&inst, &c1, &c2, &a1, &a2)?.1);
        let mut row = vec![format!("{vf:?}")];
        row.extend(cfg.q.iter().map(|x| format!("{x:?}")));
        row.extend(sym6_values(&c));
        row.extend(TENSOR_INDEX.iter().map(|&ij| format!("{:?}", k[ij])));
        row.extend(TENSOR_INDEX.iter().map(|&ij| format!("{:?}", a[ij])));
        w.write_record(&row).map_err(mipdmn::DmnError::from)?;
        println!("vf {vf:.4}: C11 {:.6e}  k11 {:.6e}  alpha11 {:.6e}", c[(0, 0)], k[(0, 0)], a[(0, 0)]);
    }
    w.flush().map_err(mipdmn::DmnError::from)?;
    drop(w);
    m.output(&path)?;
    finish(m, &g.out, t0)
}

pub fn simulate(g: &Global, model: Option<PathBuf>, path: Option<PathBuf>) -> Result<(), CliError> {
    let t0 = Instant::now();
    let mut cfg: SimulateConfig = config::load(g.config.as_deref())?;
    let model = required(model, &cfg.model, "model")?;
    cfg.model = Some(model.clone());
    if let Some(p) = path {
        cfg.path = PathSpec::File { path: p };
    }
    let net = io::load_model(&model)?;
    check_q(&net, &cfg.q)?;
    let mut m = RunManifest::new("simulate", snapshot(&cfg)?);
    m.input(&model)?;
    let load = match &cfg.path {
        PathSpec::Cyclic { steps } => LoadPath::cyclic(*steps)?,
        PathSpec::File { path } => {
            m.input(path)?;
            io::load_load_path(path)?
        }
    };
    let laws = [cfg.laws[0].to_law()?, cfg.laws[1].to_law()?];
    let inst = net.eval_physical(&MicroParams::new(cfg.vf, cfg.q.clone()))?;
    let mut sim = NonlinearDmn::new(&inst, laws, cfg.solver)?;
    let records = run_path(&mut sim, &load)?;
    let out = g.out.join("results.csv");
    io::save_with(&out, records.as_slice(), io::write_results_csv)?;
    m.output(&out)?;
    let iterations: usize = records.iter().map(|r| r.iterations).sum();
    let last = records.last().map(|r| r.stress).unwrap_or_default();
    println!("{} increments, {} fixed-point iterations", records.len() - 1, iterations);
    println!("final stress (Mandel) {:?}", last.as_slice());
    match power_gap(&records) {
        Ok(gap) => println!("power gap {:.3}%", 100.0 * gap),
        Err(e) => println!("power gap unavailable: {e}"),
    }
    finish(m, &g.out, t0)
}

pub fn identify(g: &Global, model: Option<PathBuf>) -> Result<(), CliError> {
    let t0 = Instant::now();
    let mut cfg: IdentifyCmdConfig = config::load(g.config.as_deref())?;
    let model = required(model, &cfg.model, "model")?;
    cfg.model = Some(model.clone());
    let net = io::load_model(&model)?;
    check_q(&net, &cfg.q)?;
    let mut m = RunManifest::new("identify", snapshot(&cfg)?);
    m.input(&model)?;
    let target = match &cfg.target {
        TargetSpec::Synthetic { phases, vf } => {
            let inst = net.eval_physical(&MicroParams::new(*vf, cfg.q.clone()))?;
            forward_stiffness(&inst, &phases[0].stiffness()?, &phases[1].stiffness()?)?
        }
        TargetSpec::Matrix { c } => MandelMatrix::from_fn(|i, j| c[i][j]),
    };
    let res = mipdmn::training::identify(&net, &cfg.q, &target, &cfg.init, &cfg.identify)?;
    let path = g.out.join("identified.json");
    let text = serde_json::to_string_pretty(&res).map_err(|e| CliError::data(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    m.output(&path)?;
    let hist = g.out.join("identify_history.csv");
    let mut w = create(&hist)?;
    let io_err = |e: std::io::Error| CliError::data(format!("{}: {e}", hist.display()));
    writeln!(w, "iteration,loss").map_err(io_err)?;
    for (i, l) in res.history.iter().enumerate() {
        writeln!(w, "{i},{l:?}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    drop(w);
    m.output(&hist)?;
    println!("{} iterations, relative stiffness error {:.4}%", res.history.len() - 1, 100.0 * res.rel_error);
    println!("vf {:.6}", res.vf);
    for (k, ph) in res.phases.iter().enumerate() {
        println!("phase {}: {}", k + 1, serde_json::to_string(ph).unwrap_or_default());
    }
    finish(m, &g.out, t0)
}

pub fn info(g: &Global, model: &Path) -> Result<(), CliError> {
    let t0 = Instant::now();
    let doc = io::load_model_document(model)?;
    let net = doc.to_net()?;
    let mut m = RunManifest::new("info", serde_json::json!({ "model": model }));
    m.input(model)?;
    let depth = net.topology.depth();
    let (nw, nt) = parameter_count(net.arch, depth, net.q_dim);
    println!("model: {}", model.display());
    if let Some(role) = &doc.role {
        println!("role: {role}");
    }
    println!("L = {depth}, N = {} material nodes, {} laminates", net.topology.n_nodes(), net.topology.n_laminates());
    println!("architecture: {}, activation: {:?}, q dimension: {}", net.arch, net.activation, net.q_dim);
    println!("fitting parameters: {nw} weight + {nt} rotation = {}", nw + nt);

    // Morphological parameters at the centre of the training box.
    let q: Vec<f64> = net.rescale.min.iter().zip(&net.rescale.max).map(|(a, b)| 0.5 * (a + b)).collect();
    let path = g.out.join("active_nodes.csv");
    let mut w = create(&path)?;
    let io_err = |e: std::io::Error| CliError::data(format!("{}: {e}", path.display()));
    writeln!(w, "vf,active_1,active_2,ratio_1,ratio_2").map_err(io_err)?;
    println!("{:>6} {:>10} {:>10}", "vf", "phase 1", "phase 2");
    for i in 0..=10 {
        let vf = i as f64 / 10.0;
        let weights = net.weights(&net.rescale.apply(&MicroParams::new(vf, q.clone())))?;
        let a = active_nodes(&weights, 0.0);
        writeln!(w, "{vf:?},{},{},{:?},{:?}", a.counts[0], a.counts[1], a.ratios[0], a.ratios[1]).map_err(io_err)?;
        println!("{vf:>6.2} {:>9.1}% {:>9.1}%", 100.0 * a.ratios[0], 100.0 * a.ratios[1]);
    }
    w.flush().map_err(io_err)?;
    drop(w);
    m.output(&path)?;
    finish(m, &g.out, t0)
}
