//! File formats: datasets (CSV or JSON), model documents, loss histories,
//! load paths, simulation results and quantile tables. Floats are written in
//! shortest round-trip form so every file reads back to identical values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Sample, Split};
use crate::error::{DmnError, Result};
use crate::inelastic::{LoadPath, StepRecord};
use crate::network::Topology;
use crate::parametric::{Activation, Architecture, MicroParams, ParamNet, Rescale};
use crate::tensor::{MandelMatrix, SymTensor2};
use crate::training::report::Quantiles;
use crate::training::{HistoryRow, ReportRow};

pub const FORMAT_VERSION: u32 = 1;
pub const QUATERNION_CONVENTION: &str = "scalar-first";

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| DmnError::Data(format!("{what}: cannot parse '{s}' as a number")))
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .map_err(|_| DmnError::Data(format!("{what}: cannot parse '{s}' as an integer")))
}

fn csv_err(e: csv::Error) -> DmnError {
    DmnError::Data(e.to_string())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| DmnError::Io(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| DmnError::Io(format!("{}: {e}", path.display())))
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).from_reader(r)
}

/// Column names of the 21 upper-triangle entries of a Mandel matrix.
fn triangle_headers(prefix: &str) -> Vec<String> {
    let mut out = Vec::with_capacity(21);
    for i in 0..6 {
        for j in i..6 {
            out.push(format!("{prefix}_{}{}", i + 1, j + 1));
        }
    }
    out
}

fn triangle(c: &MandelMatrix) -> impl Iterator<Item = String> + '_ {
    (0..6).flat_map(move |i| (i..6).map(move |j| num(c[(i, j)])))
}

fn from_triangle(v: &[f64]) -> MandelMatrix {
    let mut c = MandelMatrix::zeros();
    let mut k = 0;
    for i in 0..6 {
        for j in i..6 {
            c[(i, j)] = v[k];
            c[(j, i)] = v[k];
            k += 1;
        }
    }
    c
}

fn dataset_headers(q_dim: usize) -> Vec<String> {
    let mut h = vec!["vf".to_string()];
    h.extend((0..q_dim).map(|k| format!("q{}", k + 1)));
    h.push("split".into());
    for m in ["c1", "c2", "cbar"] {
        h.extend(triangle_headers(m));
    }
    h
}

pub fn write_dataset_csv<W: Write>(w: W, ds: &Dataset) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(dataset_headers(ds.q_dim)).map_err(csv_err)?;
    for s in &ds.samples {
        if s.p.q.len() != ds.q_dim {
            return Err(DmnError::DimensionMismatch(format!(
                "sample has {} morphological parameters, dataset declares {}",
                s.p.q.len(),
                ds.q_dim
            )));
        }
        let mut rec = vec![num(s.p.vf)];
        rec.extend(s.p.q.iter().map(|&x| num(x)));
        rec.push(s.split.as_str().into());
        rec.extend(triangle(&s.c1));
        rec.extend(triangle(&s.c2));
        rec.extend(triangle(&s.cbar));
        wr.write_record(rec).map_err(csv_err)?;
    }
    wr.flush().map_err(|e| DmnError::Io(e.to_string()))
}

pub fn read_dataset_csv<R: Read>(r: R) -> Result<Dataset> {
    let mut rd = reader(r);
    let headers = rd.headers().map_err(csv_err)?.clone();
    let q_dim = headers.iter().filter(|h| h.starts_with('q')).count();
    let expect = dataset_headers(q_dim);
    if headers.iter().ne(expect.iter().map(String::as_str)) {
        return Err(DmnError::Data(format!(
            "dataset header mismatch: expected {} columns starting with vf, q1.., split",
            expect.len()
        )));
    }
    let mut ds = Dataset::new(q_dim);
    for (row, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let what = format!("dataset row {}", row + 1);
        let f = |k: usize| parse_f64(&rec[k], &what);
        let vf = f(0)?;
        let q = (1..=q_dim).map(f).collect::<Result<Vec<_>>>()?;
        let split = Split::parse(rec[q_dim + 1].trim())
            .ok_or_else(|| DmnError::Data(format!("{what}: unknown split '{}'", &rec[q_dim + 1])))?;
        let base = q_dim + 2;
        let mat = |m: usize| -> Result<MandelMatrix> {
            let v = (0..21).map(|k| f(base + 21 * m + k)).collect::<Result<Vec<_>>>()?;
            Ok(from_triangle(&v))
        };
        ds.samples.push(Sample {
            p: MicroParams::new(vf, q),
            c1: mat(0)?,
            c2: mat(1)?,
            cbar: mat(2)?,
            split,
        });
    }
    Ok(ds)
}

/// Saves as JSON when the extension is `.json`, CSV otherwise.
pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    let mut w = create(path)?;
    if is_json(path) {
        serde_json::to_writer(&mut w, ds).map_err(|e| DmnError::Io(e.to_string()))?;
        w.flush().map_err(|e| DmnError::Io(e.to_string()))
    } else {
        write_dataset_csv(w, ds)
    }
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let r = open(path)?;
    let ds = if is_json(path) {
        serde_json::from_reader(r).map_err(|e| DmnError::Data(format!("{}: {e}", path.display())))?
    } else {
        read_dataset_csv(r)?
    };
    check_dataset(&ds)?;
    Ok(ds)
}

fn check_dataset(ds: &Dataset) -> Result<()> {
    for (i, s) in ds.samples.iter().enumerate() {
        if s.p.q.len() != ds.q_dim {
            return Err(DmnError::Data(format!("sample {i}: expected {} morphological parameters", ds.q_dim)));
        }
        if !(0.0..=1.0).contains(&s.p.vf) {
            return Err(DmnError::Data(format!("sample {i}: volume fraction {} outside [0, 1]", s.p.vf)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamArray {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    pub w0: ParamArray,
    pub w1: ParamArray,
    pub theta0: ParamArray,
    #[serde(rename = "Theta1")]
    pub theta1: ParamArray,
}

/// Self-describing model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    #[serde(rename = "L")]
    pub depth: usize,
    pub architecture: Architecture,
    pub activation: Activation,
    pub quaternion_convention: String,
    pub q: usize,
    pub parameters: ModelParameters,
    pub rescale: Rescale,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<String>,
}

impl ModelDocument {
    pub fn from_net(net: &ParamNet, role: Option<&str>) -> Self {
        let n = net.topology.n_nodes();
        let l = net.topology.n_laminates();
        let (dw, dt) = net.input_widths();
        let arr = |shape: Vec<usize>, values: &[f64]| ParamArray {
            shape,
            values: values.to_vec(),
        };
        ModelDocument {
            format_version: FORMAT_VERSION,
            depth: net.topology.depth(),
            architecture: net.arch,
            activation: net.activation,
            quaternion_convention: QUATERNION_CONVENTION.into(),
            q: net.q_dim,
            parameters: ModelParameters {
                w0: arr(vec![n], &net.w0),
                w1: arr(vec![n, dw], &net.w1),
                theta0: arr(vec![l, 4], &net.theta0),
                theta1: arr(vec![l, 4, dt], &net.theta1),
            },
            rescale: net.rescale.clone(),
            role: role.map(str::to_string),
        }
    }

    pub fn to_net(&self) -> Result<ParamNet> {
        if self.format_version != FORMAT_VERSION {
            return Err(DmnError::Data(format!("unsupported model format version {}", self.format_version)));
        }
        if self.quaternion_convention != QUATERNION_CONVENTION {
            return Err(DmnError::Data(format!(
                "unsupported quaternion convention '{}'",
                self.quaternion_convention
            )));
        }
        let topo = Topology::new(self.depth)?;
        let mut net = ParamNet::zeros(topo, self.architecture, self.activation, self.q);
        let reference = ModelDocument::from_net(&net, None).parameters;
        let p = &self.parameters;
        for (name, got, want) in [
            ("w0", &p.w0, &reference.w0),
            ("w1", &p.w1, &reference.w1),
            ("theta0", &p.theta0, &reference.theta0),
            ("Theta1", &p.theta1, &reference.theta1),
        ] {
            let count: usize = got.shape.iter().product();
            if got.shape != want.shape || got.values.len() != count {
                return Err(DmnError::DimensionMismatch(format!(
                    "{name}: shape {:?} with {} values, expected shape {:?}",
                    got.shape,
                    got.values.len(),
                    want.shape
                )));
            }
        }
        net.w0 = p.w0.values.clone();
        net.w1 = p.w1.values.clone();
        net.theta0 = p.theta0.values.clone();
        net.theta1 = p.theta1.values.clone();
        if self.rescale.min.len() != self.q || self.rescale.max.len() != self.q {
            return Err(DmnError::DimensionMismatch("rescale bounds do not match q".into()));
        }
        net.rescale = self.rescale.clone();
        net.check_shapes()?;
        Ok(net)
    }
}

pub fn save_model(path: &Path, net: &ParamNet, role: Option<&str>) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &ModelDocument::from_net(net, role)).map_err(|e| DmnError::Io(e.to_string()))?;
    w.flush().map_err(|e| DmnError::Io(e.to_string()))
}

pub fn load_model_document(path: &Path) -> Result<ModelDocument> {
    serde_json::from_reader(open(path)?).map_err(|e| DmnError::Data(format!("{}: {e}", path.display())))
}

pub fn load_model(path: &Path) -> Result<ParamNet> {
    load_model_document(path)?.to_net()
}

/// Columns: epoch, one data term per parameter point, data, vf, orientation, total.
pub fn write_history_csv<W: Write>(w: W, rows: &[HistoryRow]) -> Result<()> {
    let n_p = rows.first().map_or(0, |r| r.per_p.len());
    let mut wr = csv::Writer::from_writer(w);
    let mut h = vec!["epoch".to_string()];
    h.extend((0..n_p).map(|k| format!("data_p{}", k + 1)));
    h.extend(["data", "vf", "orientation", "total"].map(String::from));
    wr.write_record(h).map_err(csv_err)?;
    for r in rows {
        if r.per_p.len() != n_p {
            return Err(DmnError::DimensionMismatch("history rows differ in parameter-point count".into()));
        }
        let mut rec = vec![r.epoch.to_string()];
        rec.extend(r.per_p.iter().map(|&x| num(x)));
        rec.extend([r.data, r.vf, r.orientation, r.total].map(num));
        wr.write_record(rec).map_err(csv_err)?;
    }
    wr.flush().map_err(|e| DmnError::Io(e.to_string()))
}

pub fn read_history_csv<R: Read>(r: R) -> Result<Vec<HistoryRow>> {
    let mut rd = reader(r);
    let n_p = rd.headers().map_err(csv_err)?.len().saturating_sub(5);
    rd.records()
        .map(|rec| {
            let rec = rec.map_err(csv_err)?;
            let f = |k: usize| parse_f64(&rec[k], "history");
            Ok(HistoryRow {
                epoch: parse_usize(&rec[0], "history")?,
                per_p: (1..=n_p).map(f).collect::<Result<_>>()?,
                data: f(n_p + 1)?,
                vf: f(n_p + 2)?,
                orientation: f(n_p + 3)?,
                total: f(n_p + 4)?,
            })
        })
        .collect()
}

const STRAIN_COLS: [&str; 6] = ["e11", "e22", "e12", "e33", "e13", "e23"];
const STRESS_COLS: [&str; 6] = ["s11", "s22", "s12", "s33", "s13", "s23"];

/// Columns: t and the six Mandel strain components.
pub fn write_load_path_csv<W: Write>(w: W, path: &LoadPath) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut h = vec!["t"];
    h.extend(STRAIN_COLS);
    wr.write_record(h).map_err(csv_err)?;
    for (t, e) in path.times.iter().zip(&path.strains) {
        let mut rec = vec![num(*t)];
        rec.extend(e.iter().map(|&x| num(x)));
        wr.write_record(rec).map_err(csv_err)?;
    }
    wr.flush().map_err(|e| DmnError::Io(e.to_string()))
}

pub fn read_load_path_csv<R: Read>(r: R) -> Result<LoadPath> {
    let mut times = Vec::new();
    let mut strains = Vec::new();
    for rec in reader(r).records() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != 7 {
            return Err(DmnError::Data(format!("load path rows need 7 columns, found {}", rec.len())));
        }
        times.push(parse_f64(&rec[0], "load path")?);
        let v = (1..7).map(|k| parse_f64(&rec[k], "load path")).collect::<Result<Vec<_>>>()?;
        strains.push(SymTensor2::from_column_slice(&v));
    }
    LoadPath::new(times, strains)
}

pub fn load_load_path(path: &Path) -> Result<LoadPath> {
    read_load_path_csv(open(path)?)
}

/// Columns: t, strain, stress, iterations, omegas (`;`-separated), mean
/// equivalent plastic strain, macroscopic power, node power, dissipation.
pub fn write_results_csv<W: Write>(w: W, records: &[StepRecord]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut h = vec!["t"];
    h.extend(STRAIN_COLS);
    h.extend(STRESS_COLS);
    h.extend(["iterations", "omegas", "p_eq_mean", "power", "node_power", "dissipation"]);
    wr.write_record(h).map_err(csv_err)?;
    for r in records {
        let mut rec = vec![num(r.t)];
        rec.extend(r.strain.iter().map(|&x| num(x)));
        rec.extend(r.stress.iter().map(|&x| num(x)));
        rec.push(r.iterations.to_string());
        rec.push(r.omegas.iter().map(|&x| num(x)).collect::<Vec<_>>().join(";"));
        rec.extend([r.mean_p_eq, r.power, r.node_power, r.dissipation].map(num));
        wr.write_record(rec).map_err(csv_err)?;
    }
    wr.flush().map_err(|e| DmnError::Io(e.to_string()))
}

pub fn read_results_csv<R: Read>(r: R) -> Result<Vec<StepRecord>> {
    reader(r)
        .records()
        .map(|rec| {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != 19 {
                return Err(DmnError::Data(format!("result rows need 19 columns, found {}", rec.len())));
            }
            let f = |k: usize| parse_f64(&rec[k], "results");
            let vec6 = |o: usize| -> Result<SymTensor2> {
                let v = (o..o + 6).map(f).collect::<Result<Vec<_>>>()?;
                Ok(SymTensor2::from_column_slice(&v))
            };
            let omegas = rec[14]
                .split(';')
                .filter(|s| !s.is_empty())
                .map(|s| parse_f64(s, "results"))
                .collect::<Result<Vec<_>>>()?;
            Ok(StepRecord {
                t: f(0)?,
                strain: vec6(1)?,
                stress: vec6(7)?,
                iterations: parse_usize(&rec[13], "results")?,
                omegas,
                mean_p_eq: f(15)?,
                power: f(16)?,
                node_power: f(17)?,
                dissipation: f(18)?,
            })
        })
        .collect()
}

/// Columns: vf, q1.., split, n, q10, q50, q90.
pub fn write_quantiles_csv<W: Write>(w: W, q_dim: usize, rows: &[ReportRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut h = vec!["vf".to_string()];
    h.extend((0..q_dim).map(|k| format!("q{}", k + 1)));
    h.extend(["split", "n", "q10", "q50", "q90"].map(String::from));
    wr.write_record(h).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![num(r.p.vf)];
        rec.extend(r.p.q.iter().map(|&x| num(x)));
        rec.push(r.split.as_str().into());
        rec.push(r.n.to_string());
        rec.extend([r.quantiles.q10, r.quantiles.q50, r.quantiles.q90].map(num));
        wr.write_record(rec).map_err(csv_err)?;
    }
    wr.flush().map_err(|e| DmnError::Io(e.to_string()))
}

pub fn read_quantiles_csv<R: Read>(r: R) -> Result<Vec<ReportRow>> {
    let mut rd = reader(r);
    let q_dim = rd.headers().map_err(csv_err)?.len().saturating_sub(6);
    rd.records()
        .map(|rec| {
            let rec = rec.map_err(csv_err)?;
            let f = |k: usize| parse_f64(&rec[k], "quantiles");
            let o = q_dim + 1;
            Ok(ReportRow {
                p: MicroParams::new(f(0)?, (1..=q_dim).map(f).collect::<Result<_>>()?),
                split: Split::parse(rec[o].trim())
                    .ok_or_else(|| DmnError::Data(format!("unknown split '{}'", &rec[o])))?,
                n: parse_usize(&rec[o + 1], "quantiles")?,
                quantiles: Quantiles {
                    q10: f(o + 2)?,
                    q50: f(o + 3)?,
                    q90: f(o + 4)?,
                },
            })
        })
        .collect()
}

pub fn save_with<T: ?Sized>(path: &Path, value: &T, write: impl FnOnce(BufWriter<File>, &T) -> Result<()>) -> Result<()> {
    write(create(path)?, value)
}

pub fn load_with<T>(path: &Path, read: impl FnOnce(BufReader<File>) -> Result<T>) -> Result<T> {
    read(open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inelastic::{run_path, MaterialLaw, NonlinearDmn, SolverConfig};
    use crate::oracle::{gen_dataset, gen_teacher, SplitRule, TeacherSpec};
    use crate::training::sampling::{sample_materials, MaterialRanges};
    use proptest::prelude::*;

    fn dataset(q_dim: usize) -> Dataset {
        let t = gen_teacher(&TeacherSpec { depth: 3, q_dim, ..TeacherSpec::default() }).unwrap();
        let mats = sample_materials(6, &MaterialRanges::default(), 4).unwrap();
        let pts: Vec<_> = [0.25, 0.5].iter().map(|&v| MicroParams::new(v, vec![0.1 / 3.0; q_dim])).collect();
        gen_dataset(&t, &pts, &mats, SplitRule::Random { train_frac: 0.8, seed: 1 }, None).unwrap()
    }

    #[test]
    fn dataset_csv_round_trip() {
        for q in [0, 2] {
            let ds = dataset(q);
            let mut buf = Vec::new();
            write_dataset_csv(&mut buf, &ds).unwrap();
            assert_eq!(read_dataset_csv(buf.as_slice()).unwrap(), ds);
        }
    }

    #[test]
    fn dataset_file_round_trip_csv_and_json() {
        let dir = std::env::temp_dir().join(format!("mipdmn-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let ds = dataset(1);
        for name in ["d.csv", "d.json"] {
            let p = dir.join(name);
            save_dataset(&p, &ds).unwrap();
            assert_eq!(load_dataset(&p).unwrap(), ds);
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn header_mismatch_is_a_data_error() {
        let bad = "vf,split,x\n0.5,train,1\n";
        assert!(matches!(read_dataset_csv(bad.as_bytes()), Err(DmnError::Data(_))));
    }

    #[test]
    fn model_document_round_trip() {
        let net = gen_teacher(&TeacherSpec { q_dim: 2, ..TeacherSpec::default() }).unwrap();
        let doc = ModelDocument::from_net(&net, Some("teacher"));
        let s = serde_json::to_string(&doc).unwrap();
        assert!(s.contains("\"quaternion_convention\":\"scalar-first\""));
        assert!(s.contains("\"L\":4"));
        let back: ModelDocument = serde_json::from_str(&s).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.to_net().unwrap(), net);
    }

    #[test]
    fn model_shape_mismatch_is_rejected() {
        let net = gen_teacher(&TeacherSpec::default()).unwrap();
        let mut doc = ModelDocument::from_net(&net, None);
        doc.parameters.w0.values.pop();
        assert!(matches!(doc.to_net(), Err(DmnError::DimensionMismatch(_))));
    }

    #[test]
    fn results_and_load_path_round_trip() {
        let net = gen_teacher(&TeacherSpec { depth: 2, ..TeacherSpec::default() }).unwrap();
        let inst = net.eval_physical(&MicroParams::new(0.3, vec![])).unwrap();
        let laws = [MaterialLaw::j2_power_law(3300.0, 0.41), MaterialLaw::elastic_iso(72000.0, 0.22).unwrap()];
        let mut sim = NonlinearDmn::new(&inst, laws, SolverConfig::default()).unwrap();
        let path = LoadPath::cyclic(8).unwrap();
        let recs = run_path(&mut sim, &path).unwrap();
        let mut buf = Vec::new();
        write_results_csv(&mut buf, &recs).unwrap();
        assert_eq!(read_results_csv(buf.as_slice()).unwrap(), recs);
        let mut buf = Vec::new();
        write_load_path_csv(&mut buf, &path).unwrap();
        assert_eq!(read_load_path_csv(buf.as_slice()).unwrap(), path);
    }

    proptest! {
        #[test]
        fn history_and_quantiles_round_trip(vals in prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 12)) {
            let rows = vec![HistoryRow { epoch: 3, per_p: vals[..3].to_vec(), data: vals[3], vf: vals[4], orientation: vals[5], total: vals[6] }];
            let mut buf = Vec::new();
            write_history_csv(&mut buf, &rows).unwrap();
            prop_assert_eq!(read_history_csv(buf.as_slice()).unwrap(), rows);
            let q = vec![ReportRow {
                p: MicroParams::new(vals[7], vec![vals[8]]),
                split: Split::Test,
                n: 7,
                quantiles: Quantiles { q10: vals[9], q50: vals[10], q90: vals[11] },
            }];
            let mut buf = Vec::new();
            write_quantiles_csv(&mut buf, 1, &q).unwrap();
            prop_assert_eq!(read_quantiles_csv(buf.as_slice()).unwrap(), q);
        }
    }
}
