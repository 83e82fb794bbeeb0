//! JSON model files.
//!
//! Every float is written as a decimal with 17 significant digits, which
//! round-trips `f64` exactly. Derived caches (Gram blocks, `W` matrices,
//! expansions) are not stored; loading recomputes them from the stored
//! batches.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::kernel::{FeatureMatrix, KernelSpec};
use crate::lapmed::{
    ApproxModel, ApproxState, ExactState, ExactStep, GraphParams, KernelMode, LapFitReport, LapHyperparams, LapState,
    PriorKernel, SeqLapMedModel,
};
use crate::scalar::Real;
use crate::seqmed::{Batch, CSchedule, FitReport, SeqMedModel, Step};

pub const FORMAT_VERSION: u32 = 1;

/// Either model family, as stored in a model file.
#[derive(Clone, Debug)]
pub enum AnyModel<T: Real> {
    SeqMed(SeqMedModel<T>),
    SeqLapMed(SeqLapMedModel<T>),
}

impl<T: Real> AnyModel<T> {
    /// `seqmed`, `seqlapmed-exact` or `seqlapmed-approx`.
    pub fn name(&self) -> &'static str {
        match self {
            AnyModel::SeqMed(_) => "seqmed",
            AnyModel::SeqLapMed(m) => match m.mode() {
                KernelMode::Exact => "seqlapmed-exact",
                KernelMode::Approx { .. } => "seqlapmed-approx",
            },
        }
    }

    pub fn t(&self) -> usize {
        match self {
            AnyModel::SeqMed(m) => m.t(),
            AnyModel::SeqLapMed(m) => m.t(),
        }
    }

    pub fn bias(&self) -> T {
        match self {
            AnyModel::SeqMed(m) => m.bias(),
            AnyModel::SeqLapMed(m) => m.bias(),
        }
    }

    pub fn n_support(&self) -> usize {
        match self {
            AnyModel::SeqMed(m) => m.n_support(),
            AnyModel::SeqLapMed(m) => m.n_support(),
        }
    }

    pub fn decision_values(&self, x: &FeatureMatrix<T>) -> Result<Vec<T>> {
        match self {
            AnyModel::SeqMed(m) => m.decision_values(x),
            AnyModel::SeqLapMed(m) => m.decision_values(x),
        }
    }

    pub fn predict(&self, x: &FeatureMatrix<T>) -> Result<Vec<i8>> {
        match self {
            AnyModel::SeqMed(m) => m.predict(x),
            AnyModel::SeqLapMed(m) => m.predict(x),
        }
    }

    pub fn partial_fit(&mut self, batch: &Batch<T>) -> Result<FitReport<T>> {
        match self {
            AnyModel::SeqMed(m) => m.partial_fit(batch),
            AnyModel::SeqLapMed(m) => m.partial_fit(batch).map(|r: LapFitReport<T>| r.fit),
        }
    }
}

impl<T: Real> From<SeqMedModel<T>> for AnyModel<T> {
    fn from(m: SeqMedModel<T>) -> Self {
        AnyModel::SeqMed(m)
    }
}

impl<T: Real> From<SeqLapMedModel<T>> for AnyModel<T> {
    fn from(m: SeqLapMedModel<T>) -> Self {
        AnyModel::SeqLapMed(m)
    }
}

/// A float written with 17 significant digits.
#[derive(Clone, Copy, Debug)]
struct F(f64);

impl Serialize for F {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return Err(serde::ser::Error::custom("non-finite value"));
        }
        let n = serde_json::Number::from_str(&format!("{:.16e}", self.0)).map_err(serde::ser::Error::custom)?;
        n.serialize(s)
    }
}

impl<'de> Deserialize<'de> for F {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let n = serde_json::Number::deserialize(d)?;
        let v: f64 = n.as_str().parse().map_err(serde::de::Error::custom)?;
        if !v.is_finite() {
            return Err(serde::de::Error::custom("non-finite value"));
        }
        Ok(F(v))
    }
}

fn f<T: Real>(v: T) -> F {
    F(v.to_f64_lossy())
}

fn fs_<T: Real>(v: &[T]) -> Vec<F> {
    v.iter().map(|x| f(*x)).collect()
}

fn un<T: Real>(v: &[F]) -> Vec<T> {
    v.iter().map(|x| T::lit(x.0)).collect()
}

/// Dense matrix, row-major.
#[derive(Serialize, Deserialize)]
struct MatDto {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl MatDto {
    fn from<T: Real>(m: &DMatrix<T>) -> Self {
        let data = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| f(m[(i, j)]))).collect();
        MatDto {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    fn to<T: Real>(&self) -> Result<DMatrix<T>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Schema(format!(
                "matrix of shape {}x{} holds {} values",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_fn(self.rows, self.cols, |i, j| T::lit(self.data[i * self.cols + j].0)))
    }

    fn features<T: Real>(&self) -> Result<FeatureMatrix<T>> {
        FeatureMatrix::new(self.to()?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum KernelDto {
    Linear,
    Rbf { width: F },
    TfidfLinear { idf: Vec<F> },
    Precomputed { gram: MatDto },
}

impl KernelDto {
    fn from<T: Real>(k: &KernelSpec<T>) -> Self {
        match k {
            KernelSpec::Linear => KernelDto::Linear,
            KernelSpec::Rbf { width } => KernelDto::Rbf { width: f(*width) },
            KernelSpec::TfidfLinear { idf } => KernelDto::TfidfLinear { idf: fs_(idf) },
            KernelSpec::Precomputed { gram } => KernelDto::Precomputed { gram: MatDto::from(gram) },
        }
    }

    fn to<T: Real>(&self) -> Result<KernelSpec<T>> {
        let k = match self {
            KernelDto::Linear => KernelSpec::Linear,
            KernelDto::Rbf { width } => KernelSpec::Rbf { width: T::lit(width.0) },
            KernelDto::TfidfLinear { idf } => KernelSpec::TfidfLinear { idf: un(idf) },
            KernelDto::Precomputed { gram } => KernelSpec::Precomputed { gram: gram.to()? },
        };
        k.validate()?;
        Ok(k)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum ScheduleDto {
    Constant(F),
    PerStep(Vec<F>),
}

#[derive(Serialize, Deserialize)]
struct StepDto {
    t: usize,
    samples: MatDto,
    coef: Vec<F>,
    /// Exact Laplacian mode only: `2 beta L` of the batch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reg: Option<MatDto>,
    /// Exact Laplacian mode only: labeled rows of `samples`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labeled: Option<Vec<usize>>,
}

impl StepDto {
    fn from_step<T: Real>(s: &Step<T>) -> Self {
        StepDto {
            t: s.t,
            samples: MatDto::from(s.samples.as_matrix()),
            coef: fs_(&s.coef),
            reg: None,
            labeled: None,
        }
    }

    fn to_step<T: Real>(&self) -> Result<Step<T>> {
        Ok(Step {
            t: self.t,
            samples: self.samples.features()?,
            coef: un(&self.coef),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct SeqMedDto {
    version: u32,
    kind: String,
    kernel: KernelDto,
    steps: Vec<StepDto>,
    bias: F,
    t: usize,
    dim: Option<usize>,
    schedule: ScheduleDto,
}

#[derive(Serialize, Deserialize)]
struct HyperDto {
    gamma_a: F,
    gamma_i: F,
}

#[derive(Serialize, Deserialize)]
struct GraphDto {
    k: usize,
    heat_width: F,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum ModeDto {
    Exact,
    Approx { rank: Option<usize> },
}

#[derive(Serialize, Deserialize)]
struct SpectraDto {
    v_bar: MatDto,
    s_bar: Vec<F>,
    d_bar: Vec<F>,
    b: F,
    count: usize,
    truncated: bool,
}

impl SpectraDto {
    fn from<T: Real>(s: &ApproxState<T>) -> Self {
        SpectraDto {
            v_bar: MatDto::from(&s.v_bar),
            s_bar: fs_(&s.s_bar),
            d_bar: fs_(&s.d_bar),
            b: f(s.b),
            count: s.count,
            truncated: s.truncated,
        }
    }

    fn to<T: Real>(&self) -> Result<ApproxState<T>> {
        let s = ApproxState {
            v_bar: self.v_bar.to()?,
            s_bar: un(&self.s_bar),
            d_bar: un(&self.d_bar),
            b: T::lit(self.b.0),
            count: self.count,
            truncated: self.truncated,
        };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum PriorDto {
    Base,
    ExactOne { x: MatDto, w: Option<MatDto> },
    Spectral(SpectraDto),
}

#[derive(Serialize, Deserialize)]
struct CurrentDto {
    x: MatDto,
    reg: Option<MatDto>,
}

#[derive(Serialize, Deserialize)]
struct ApproxDto {
    prior: PriorDto,
    current: Option<CurrentDto>,
    accum: SpectraDto,
}

#[derive(Serialize, Deserialize)]
struct SeqLapMedDto {
    version: u32,
    kind: String,
    kernel: KernelDto,
    steps: Vec<StepDto>,
    bias: F,
    t: usize,
    dim: Option<usize>,
    hyper: HyperDto,
    graph: GraphDto,
    mode: ModeDto,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    approx: Option<ApproxDto>,
}

const SEQMED_FIELDS: &[&str] = &["version", "kind", "kernel", "steps", "bias", "t", "dim", "schedule"];
const LAP_FIELDS: &[&str] = &[
    "version", "kind", "kernel", "steps", "bias", "t", "dim", "hyper", "graph", "mode",
];

fn opt_mat<T: Real>(m: &Option<MatDto>) -> Result<Option<DMatrix<T>>> {
    m.as_ref().map(MatDto::to).transpose()
}

fn seqmed_dto<T: Real>(m: &SeqMedModel<T>) -> SeqMedDto {
    SeqMedDto {
        version: FORMAT_VERSION,
        kind: "seqmed".into(),
        kernel: KernelDto::from(m.kernel()),
        steps: m.steps().iter().map(StepDto::from_step).collect(),
        bias: f(m.bias()),
        t: m.t(),
        dim: m.dim(),
        schedule: match m.schedule() {
            CSchedule::Constant(c) => ScheduleDto::Constant(f(*c)),
            CSchedule::PerStep(v) => ScheduleDto::PerStep(fs_(v)),
        },
    }
}

fn lap_dto<T: Real>(m: &SeqLapMedModel<T>) -> SeqLapMedDto {
    let (steps, approx) = match m.state() {
        LapState::Exact(s) => {
            let steps = s
                .steps()
                .iter()
                .map(|st| StepDto {
                    t: st.t,
                    samples: MatDto::from(st.x.as_matrix()),
                    coef: fs_(&st.coef),
                    reg: st.reg.as_ref().map(MatDto::from),
                    labeled: Some(st.labeled.clone()),
                })
                .collect();
            (steps, None)
        }
        LapState::Approx(a) => {
            let prior = match a.prior() {
                PriorKernel::Base => PriorDto::Base,
                PriorKernel::ExactOne { x, w } => PriorDto::ExactOne {
                    x: MatDto::from(x.as_matrix()),
                    w: w.as_ref().map(MatDto::from),
                },
                PriorKernel::Spectral(s) => PriorDto::Spectral(SpectraDto::from(s)),
            };
            let current = a.current.as_ref().map(|(x, reg)| CurrentDto {
                x: MatDto::from(x.as_matrix()),
                reg: reg.as_ref().map(MatDto::from),
            });
            let dto = ApproxDto {
                prior,
                current,
                accum: SpectraDto::from(a.accum()),
            };
            (a.history().iter().map(StepDto::from_step).collect(), Some(dto))
        }
    };
    let hyper = m.hyper();
    let graph = m.graph();
    SeqLapMedDto {
        version: FORMAT_VERSION,
        kind: "seqlapmed".into(),
        kernel: KernelDto::from(m.kernel()),
        steps,
        bias: f(m.bias()),
        t: m.t(),
        dim: m.dim(),
        hyper: HyperDto {
            gamma_a: f(hyper.gamma_a),
            gamma_i: f(hyper.gamma_i),
        },
        graph: GraphDto {
            k: graph.k,
            heat_width: f(graph.heat_width),
        },
        mode: match m.mode() {
            KernelMode::Exact => ModeDto::Exact,
            KernelMode::Approx { rank } => ModeDto::Approx { rank },
        },
        approx,
    }
}

/// Serializes a model to pretty-printed JSON.
pub fn model_to_json<T: Real>(model: &AnyModel<T>) -> Result<String> {
    let text = match model {
        AnyModel::SeqMed(m) => serde_json::to_string_pretty(&seqmed_dto(m)),
        AnyModel::SeqLapMed(m) => serde_json::to_string_pretty(&lap_dto(m)),
    };
    text.map_err(|e| Error::Schema(e.to_string()))
}

fn decode<D: DeserializeOwned>(v: Value) -> Result<D> {
    serde_json::from_value(v).map_err(|e| Error::Schema(e.to_string()))
}

fn seqmed_from<T: Real>(d: SeqMedDto) -> Result<SeqMedModel<T>> {
    let schedule = match &d.schedule {
        ScheduleDto::Constant(c) => CSchedule::Constant(T::lit(c.0)),
        ScheduleDto::PerStep(v) => CSchedule::PerStep(un(v)),
    };
    let steps = d.steps.iter().map(StepDto::to_step).collect::<Result<Vec<_>>>()?;
    SeqMedModel::from_parts(d.kernel.to()?, schedule, steps, T::lit(d.bias.0), d.t, d.dim)
}

fn lap_from<T: Real>(d: SeqLapMedDto) -> Result<SeqLapMedModel<T>> {
    let kernel: KernelSpec<T> = d.kernel.to()?;
    let hyper = LapHyperparams::new(T::lit(d.hyper.gamma_a.0), T::lit(d.hyper.gamma_i.0))?;
    let graph = GraphParams {
        k: d.graph.k,
        heat_width: T::lit(d.graph.heat_width.0),
    };
    let (mode, state) = match d.mode {
        ModeDto::Exact => {
            let mut steps = Vec::with_capacity(d.steps.len());
            for s in &d.steps {
                let labeled = s
                    .labeled
                    .clone()
                    .ok_or_else(|| Error::Schema("missing field `labeled`".into()))?;
                steps.push(ExactStep {
                    t: s.t,
                    x: s.samples.features()?,
                    reg: opt_mat(&s.reg)?,
                    labeled,
                    coef: un(&s.coef),
                });
            }
            (KernelMode::Exact, LapState::Exact(ExactState::from_steps(kernel.clone(), steps)?))
        }
        ModeDto::Approx { rank } => {
            let a = d.approx.ok_or_else(|| Error::Schema("missing field `approx`".into()))?;
            let prior = match &a.prior {
                PriorDto::Base => PriorKernel::Base,
                PriorDto::ExactOne { x, w } => PriorKernel::ExactOne {
                    x: x.features()?,
                    w: opt_mat(w)?,
                },
                PriorDto::Spectral(s) => PriorKernel::Spectral(s.to()?),
            };
            let current = match &a.current {
                Some(c) => Some((c.x.features()?, opt_mat(&c.reg)?)),
                None => None,
            };
            let history = d.steps.iter().map(StepDto::to_step).collect::<Result<Vec<_>>>()?;
            let model = ApproxModel::from_parts(&kernel, rank, prior, current, a.accum.to()?, history)?;
            (KernelMode::Approx { rank }, LapState::Approx(model))
        }
    };
    SeqLapMedModel::from_state(kernel, hyper, graph, mode, state, T::lit(d.bias.0), d.t, d.dim)
}

/// Names the first required member missing from a truncated document.
fn diagnose_truncation(text: &str) -> Error {
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escape = false;
    let mut last_comma = None;
    for (i, ch) in text.char_indices() {
        if in_str {
            match ch {
                _ if escape => escape = false,
                '\\' => escape = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match ch {
            '"' => in_str = true,
            '{' | '[' => depth += 1,
            '}' | ']' => depth = depth.saturating_sub(1),
            ',' if depth == 1 => last_comma = Some(i),
            _ => {}
        }
    }
    let complete: Value = last_comma
        .and_then(|i| serde_json::from_str(&format!("{}}}", &text[..i])).ok())
        .unwrap_or(Value::Object(Default::default()));
    let fields = match complete.get("kind").and_then(Value::as_str) {
        Some("seqlapmed") => LAP_FIELDS,
        _ => SEQMED_FIELDS,
    };
    match fields.iter().find(|k| complete.get(**k).is_none()) {
        Some(k) => Error::Schema(format!("missing field `{k}` (file is truncated)")),
        None => Error::Schema("file is truncated".into()),
    }
}

/// Parses a model document.
pub fn model_from_json<T: Real>(text: &str) -> Result<AnyModel<T>> {
    let value: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) if e.is_eof() => return Err(diagnose_truncation(text)),
        Err(e) => return Err(Error::Schema(e.to_string())),
    };
    if !value.is_object() {
        return Err(Error::Schema("model file must hold a JSON object".into()));
    }
    let version = value
        .get("version")
        .ok_or_else(|| Error::Schema("missing field `version`".into()))?
        .as_u64()
        .ok_or_else(|| Error::Schema("`version` must be an unsigned integer".into()))?;
    if version != u64::from(FORMAT_VERSION) {
        return Err(Error::Version {
            found: u32::try_from(version).unwrap_or(u32::MAX),
            expected: FORMAT_VERSION,
        });
    }
    let kind = value
        .get("kind")
        .ok_or_else(|| Error::Schema("missing field `kind`".into()))?
        .as_str()
        .unwrap_or_default()
        .to_owned();
    match kind.as_str() {
        "seqmed" => Ok(AnyModel::SeqMed(seqmed_from(decode(value)?)?)),
        "seqlapmed" => Ok(AnyModel::SeqLapMed(lap_from(decode(value)?)?)),
        other => Err(Error::Schema(format!("unknown model kind {other:?}"))),
    }
}

/// Writes the model atomically (temp file in the same directory, then rename).
pub fn save_model<T: Real>(model: &AnyModel<T>, path: &Path) -> Result<()> {
    let text = model_to_json(model)?;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(text.as_bytes())?;
    tmp.write_all(b"\n")?;
    tmp.as_file_mut().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn load_model<T: Real>(path: &Path) -> Result<AnyModel<T>> {
    model_from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_seventeen_digits() {
        let s = serde_json::to_string(&F(0.1)).unwrap();
        assert_eq!(s, "1.0000000000000001e-1");
        for v in [1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            let back: F = serde_json::from_str(&serde_json::to_string(&F(v)).unwrap()).unwrap();
            assert_eq!(back.0.to_bits(), v.to_bits());
        }
        assert!(serde_json::to_string(&F(f64::NAN)).is_err());
    }

    #[test]
    fn truncation_names_first_missing_field() {
        let text = r#"{"version": 1, "kind": "seqmed", "kernel": {"kind": "linear"}, "steps": [{"t": 1, "sam"#;
        match model_from_json::<f64>(text) {
            Err(Error::Schema(msg)) => assert!(msg.contains("`steps`"), "{msg}"),
            other => panic!("{other:?}"),
        }
        match model_from_json::<f64>("{\"vers") {
            Err(Error::Schema(msg)) => assert!(msg.contains("`version`"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_other_versions() {
        let text = r#"{"version": 7, "kind": "seqmed"}"#;
        assert!(matches!(
            model_from_json::<f64>(text),
            Err(Error::Version { found: 7, expected: 1 })
        ));
        let text = r#"{"version": 1, "kind": "seqmed", "kernel": {"kind": "linear"}}"#;
        match model_from_json::<f64>(text) {
            Err(Error::Schema(msg)) => assert!(msg.contains("missing field `steps`"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }
}
