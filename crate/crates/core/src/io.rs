//! JSON and CSV interchange formats.
//!
//! * matrix: `{"n": N, "re": [[..]], "im": [[..]]}`
//! * model: `{"n_modes": N, "n_mixers": L, "basis": [matrix, ..]}`
//! * dataset: `{"device_meta": {..}, "alpha": a, "pairs": [{"phases": [[..]], "unitary": matrix}, ..]}`
//! * trace: CSV `epoch,j_train,j_test`
//!
//! Every float is written as a decimal with 17 significant digits
//! (`d.dddddddddddddddde±x`), which round-trips `f64` exactly. Phases are
//! written wrapped to `[0, 2π)`.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{MeshError, Result};
use crate::learn::{
    ConvergenceTrace, CrossValidationReport, Dataset, EpochRecord, Provenance, TrainingPair,
};
use crate::matcore::{ComplexMatrix, UnitaryMatrix};
use crate::mesh::{MeshModel, PhaseSchedule};
use crate::tune::TuneResult;

/// `x` with 17 significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Pretty-printing JSON formatter with fixed 17-digit floats.
struct FixedDigits<'a>(PrettyFormatter<'a>);

impl Formatter for FixedDigits<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serialises `value` as pretty JSON with 17-digit floats and a trailing
/// newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FixedDigits(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("in-memory serialisation");
    out.push(b'\n');
    String::from_utf8(out).expect("json is utf-8")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixFile {
    pub n: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl MatrixFile {
    pub fn from_matrix(m: &ComplexMatrix) -> Self {
        let plane = |f: fn(&num_complex::Complex64) -> f64| {
            (0..m.rows())
                .map(|i| m.row(i).iter().map(f).collect())
                .collect()
        };
        Self {
            n: m.rows(),
            re: plane(|z| z.re),
            im: plane(|z| z.im),
        }
    }

    pub fn to_matrix(&self) -> Result<ComplexMatrix> {
        let n = self.n;
        let square = |name: &str, rows: &[Vec<f64>]| {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(MeshError::shape(
                    format!("{n}x{n} {name} plane"),
                    format!("{} rows", rows.len()),
                ));
            }
            Ok(rows.concat())
        };
        let re = square("re", &self.re)?;
        let im = square("im", &self.im)?;
        ComplexMatrix::from_parts(n, n, &re, &im)
    }

    pub fn to_unitary(&self) -> Result<UnitaryMatrix> {
        UnitaryMatrix::new(self.to_matrix()?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub n_modes: usize,
    pub n_mixers: usize,
    pub basis: Vec<MatrixFile>,
}

impl ModelFile {
    pub fn from_model(model: &MeshModel) -> Self {
        Self {
            n_modes: model.n_modes(),
            n_mixers: model.n_mixers(),
            basis: model.basis().iter().map(|u| MatrixFile::from_matrix(u)).collect(),
        }
    }

    pub fn to_model(&self) -> Result<MeshModel> {
        if self.basis.len() != self.n_mixers {
            return Err(MeshError::shape(
                format!("{} basis matrices", self.n_mixers),
                format!("{}", self.basis.len()),
            ));
        }
        let basis = self
            .basis
            .iter()
            .map(MatrixFile::to_unitary)
            .collect::<Result<Vec<_>>>()?;
        let model = MeshModel::new(basis)?;
        if model.n_modes() != self.n_modes {
            return Err(MeshError::shape(
                format!("{} modes", self.n_modes),
                format!("{}", model.n_modes()),
            ));
        }
        Ok(model)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceMeta {
    pub n_modes: usize,
    pub n_mixers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation_seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairFile {
    pub phases: Vec<Vec<f64>>,
    pub unitary: MatrixFile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFile {
    pub device_meta: DeviceMeta,
    pub alpha: f64,
    pub pairs: Vec<PairFile>,
}

impl DatasetFile {
    pub fn from_dataset(data: &Dataset) -> Self {
        let p = data.provenance();
        Self {
            device_meta: DeviceMeta {
                n_modes: data.n_modes(),
                n_mixers: data.n_phase_layers() - 1,
                device_seed: p.device_seed,
                generation_seed: p.generation_seed,
            },
            alpha: p.alpha,
            pairs: data
                .pairs()
                .iter()
                .map(|pair| PairFile {
                    phases: pair.phases.to_rows(),
                    unitary: MatrixFile::from_matrix(&pair.observed),
                })
                .collect(),
        }
    }

    pub fn to_dataset(&self) -> Result<Dataset> {
        let meta = &self.device_meta;
        let pairs = self
            .pairs
            .iter()
            .map(|p| {
                let phases = PhaseSchedule::from_rows(&p.phases)?;
                if phases.n_layers() != meta.n_mixers + 1 || phases.n_modes() != meta.n_modes {
                    return Err(MeshError::shape(
                        format!("{}x{} phases", meta.n_mixers + 1, meta.n_modes),
                        format!("{}x{}", phases.n_layers(), phases.n_modes()),
                    ));
                }
                Ok(TrainingPair {
                    phases,
                    observed: p.unitary.to_unitary()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(
            pairs,
            Provenance {
                device_seed: meta.device_seed,
                generation_seed: meta.generation_seed,
                alpha: self.alpha,
            },
        )
    }
}

/// Output of phase programming.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgramFile {
    pub phases: Vec<Vec<f64>>,
    pub achieved_j: f64,
    pub per_restart: Vec<f64>,
    pub success: bool,
}

impl From<&TuneResult> for ProgramFile {
    fn from(r: &TuneResult) -> Self {
        Self {
            phases: r.phases.to_rows(),
            achieved_j: r.achieved_j,
            per_restart: r.per_restart.clone(),
            success: r.success,
        }
    }
}

/// Cross-validation report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub mean_j: f64,
    pub threshold: f64,
    pub pass: bool,
    pub per_sample: Vec<f64>,
}

impl From<&CrossValidationReport> for ReportFile {
    fn from(r: &CrossValidationReport) -> Self {
        Self {
            mean_j: r.mean,
            threshold: r.threshold,
            pass: r.pass,
            per_sample: r.per_sample.clone(),
        }
    }
}

pub fn trace_csv(trace: &ConvergenceTrace) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "j_train", "j_test"])
        .expect("in-memory csv write");
    for r in &trace.records {
        w.write_record([r.epoch.to_string(), fmt_f64(r.j_train), fmt_f64(r.j_test)])
            .expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
}

pub fn parse_trace_csv(text: &str) -> Result<ConvergenceTrace> {
    let parse_err = |message: String| MeshError::Parse {
        path: "<trace>".into(),
        message,
    };
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| parse_err(e.to_string()))?;
    if header != vec!["epoch", "j_train", "j_test"] {
        return Err(parse_err(format!("unexpected header {header:?}")));
    }
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| parse_err(e.to_string()))?;
        let field = |i: usize| row.get(i).unwrap_or_default();
        let num = |i: usize| {
            field(i)
                .parse::<f64>()
                .map_err(|e| parse_err(format!("{e}: {:?}", field(i))))
        };
        records.push(EpochRecord {
            epoch: field(0)
                .parse()
                .map_err(|e| parse_err(format!("{e}: {:?}", field(0))))?,
            j_train: num(1)?,
            j_test: num(2)?,
        });
    }
    Ok(ConvergenceTrace { records })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| MeshError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| MeshError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn write_model(path: &Path, model: &MeshModel) -> Result<()> {
    write_text(path, &to_json(&ModelFile::from_model(model)))
}

pub fn read_model(path: &Path) -> Result<MeshModel> {
    read_json::<ModelFile>(path)?.to_model()
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    write_text(path, &to_json(&DatasetFile::from_dataset(data)))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    read_json::<DatasetFile>(path)?.to_dataset()
}

pub fn write_matrix(path: &Path, m: &ComplexMatrix) -> Result<()> {
    write_text(path, &to_json(&MatrixFile::from_matrix(m)))
}

pub fn read_matrix(path: &Path) -> Result<ComplexMatrix> {
    read_json::<MatrixFile>(path)?.to_matrix()
}
