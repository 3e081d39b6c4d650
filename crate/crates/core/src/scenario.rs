//! Scenario configs, validation, and the pipelines that turn a scenario into a report,
//! ε-ladder traces and plot tables.

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::annihilator::{
    build_beta_thm3, build_gamma_thm2, check_ladder, derealize, gap_around_zero, weak_trace_thm2, weak_trace_thm3,
    AnnihilatorBundle,
};
use crate::detect::{
    ac_baseline_trace, classify, dictionary, smirnov_strong_trace, smirnov_weak_trace, Calibration, DictionaryEntry,
    VectorTraces, DEFAULT_LADDER,
};
use crate::error::{Error, Result};
use crate::measure::{AcPiece, Atom, ScPiece, SpectralMeasure, Symbol, SymbolVector, DEPTH_LIMIT};
use crate::operator::{Coupling, OperatorModel};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_GRID: usize = 1 << 14;
const GRID_RANGE: (usize, usize) = (16, 1 << 16);
const MAX_RANK: usize = 4;
const MAX_RANDOM: usize = 8;
const SHAPE_RANGE: (u32, u32) = (2, 8);
/// Regions must meet the support hull inflated by this much.
const REGION_REACH: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub position: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcSpec {
    pub lo: f64,
    pub hi: f64,
    /// Polynomial coefficients of the density in `k`.
    pub density: Vec<f64>,
}

fn third() -> f64 {
    1.0 / 3.0
}

fn half() -> f64 {
    0.5
}

fn depth_default() -> u32 {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScSpec {
    pub lo: f64,
    pub hi: f64,
    #[serde(default = "third")]
    pub ratio: f64,
    #[serde(default = "half")]
    pub p: f64,
    pub mass: f64,
    #[serde(default = "depth_default")]
    pub max_depth: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    #[serde(default)]
    pub atoms: Vec<AtomSpec>,
    #[serde(default)]
    pub ac_pieces: Vec<AcSpec>,
    #[serde(default)]
    pub sc_pieces: Vec<ScSpec>,
}

/// Coupling vectors are `kʲφ` for `j < rank`, `φ ≡ 1` the generating vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    pub rank: usize,
    pub strengths: Vec<f64>,
}

impl Default for CouplingSpec {
    fn default() -> Self {
        CouplingSpec {
            rank: 1,
            strengths: vec![1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "thm2")]
    Gap,
    #[serde(rename = "thm3")]
    Target,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Gap => "thm2",
            Mode::Target => "thm3",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    /// Declared spectral gap `[a, b]` with `a < 0 < b` (gap mode).
    pub gap: Option<[f64; 2]>,
    pub delta0: Option<f64>,
    /// Intervals where `μ` has no mass and γ should pick up non-real boundary values.
    pub derealize: Option<Vec<[f64; 2]>>,
    /// Target intervals (target mode).
    pub delta: Option<Vec<[f64; 2]>>,
    pub shape: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub eps_ladder: Vec<f64>,
    /// Sample count of plot tables.
    pub grid: usize,
    pub random_vectors: usize,
    /// Caps the refinement depth of every self-similar piece.
    pub max_depth: Option<u32>,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            eps_ladder: DEFAULT_LADDER.to_vec(),
            grid: DEFAULT_GRID,
            random_vectors: 2,
            max_depth: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub dir: Option<String>,
    #[serde(default)]
    pub plots: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    pub id: String,
    pub measure: MeasureSpec,
    #[serde(default)]
    pub coupling: CouplingSpec,
    pub mode: Mode,
    pub region: RegionSpec,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub calibration: Calibration,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub outputs: Outputs,
}

/// Command-line overrides applied on top of a config.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub eps_ladder: Option<Vec<f64>>,
    pub grid: Option<usize>,
    pub seed: Option<u64>,
}

/// Finds the line of the first `"key"` in the source text, for error messages.
fn line_of(source: Option<&str>, keys: &[&str]) -> String {
    let Some(text) = source else {
        return String::new();
    };
    for key in keys {
        let quoted = format!("\"{key}\"");
        if let Some(n) = text.lines().position(|l| l.contains(&quoted)) {
            return format!("line {}: ", n + 1);
        }
    }
    String::new()
}

fn config_err(source: Option<&str>, keys: &[&str], msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{}{msg}", line_of(source, keys)))
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    config: ScenarioConfig,
    measure: SpectralMeasure,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ScenarioConfig = serde_json::from_str(text).map_err(|e| {
            Error::Config(format!("line {} column {}: {e}", e.line(), e.column()))
        })?;
        Self::validate(config, Some(text))
    }

    pub fn from_config(config: ScenarioConfig) -> Result<Self> {
        Self::validate(config, None)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn measure(&self) -> &SpectralMeasure {
        &self.measure
    }

    pub fn model(&self) -> Result<OperatorModel> {
        let c = &self.config.coupling;
        let couplings = (0..c.rank)
            .map(|j| Coupling {
                vector: SymbolVector::uniform(&self.measure, Symbol::monomial(j)),
                strength: c.strengths[j],
            })
            .collect();
        OperatorModel::new(self.measure.clone(), couplings)
    }

    /// The regions verdicts are reported for: left of `−δ₀` inside the hull in gap mode,
    /// each target interval otherwise.
    pub fn regions(&self) -> Vec<(f64, f64)> {
        match self.config.mode {
            Mode::Gap => {
                let d0 = self.config.region.delta0.unwrap_or(0.0);
                vec![(self.measure.hull().0.min(-d0), -d0)]
            }
            Mode::Target => self
                .config
                .region
                .delta
                .iter()
                .flatten()
                .map(|&[a, b]| (a, b))
                .collect(),
        }
    }

    fn validate(config: ScenarioConfig, src: Option<&str>) -> Result<Self> {
        if config.version != SCHEMA_VERSION {
            return Err(config_err(
                src,
                &["version"],
                format!("unsupported schema version {} (expected {SCHEMA_VERSION})", config.version),
            ));
        }
        let id_ok = !config.id.is_empty()
            && config
                .id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        if !id_ok {
            return Err(config_err(src, &["id"], "id must be non-empty ASCII letters, digits, '_' or '-'"));
        }
        let cap = config.numerics.max_depth;
        if let Some(d) = cap {
            if d == 0 || d > DEPTH_LIMIT {
                return Err(config_err(
                    src,
                    &["max_depth"],
                    format!("numerics.max_depth must lie in 1..={DEPTH_LIMIT}"),
                ));
            }
        }
        let m = &config.measure;
        let measure = SpectralMeasure::new(
            m.atoms
                .iter()
                .map(|a| Atom {
                    position: a.position,
                    weight: a.weight,
                })
                .collect(),
            m.ac_pieces
                .iter()
                .map(|p| AcPiece {
                    lo: p.lo,
                    hi: p.hi,
                    density: p.density.clone(),
                })
                .collect(),
            m.sc_pieces
                .iter()
                .map(|p| ScPiece {
                    lo: p.lo,
                    hi: p.hi,
                    ratio: p.ratio,
                    p: p.p,
                    mass: p.mass,
                    max_depth: cap.map_or(p.max_depth, |c| c.min(p.max_depth)),
                })
                .collect(),
        )
        .map_err(|e| config_err(src, &["measure"], format!("measure: {e}")))?;

        let c = &config.coupling;
        if c.rank == 0 || c.rank > MAX_RANK {
            return Err(config_err(src, &["rank"], format!("coupling.rank must lie in 1..={MAX_RANK}")));
        }
        if c.strengths.len() != c.rank || c.strengths.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(config_err(
                src,
                &["strengths"],
                "coupling.strengths needs one positive finite value per rank",
            ));
        }

        let r = &config.region;
        let (hlo, hhi) = measure.hull();
        match config.mode {
            Mode::Gap => {
                if r.delta.is_some() || r.shape.is_some() {
                    return Err(config_err(src, &["delta", "shape"], "mode thm2 takes gap/delta0, not delta/shape"));
                }
                let [a, b] = r.gap.ok_or_else(|| {
                    config_err(
                        src,
                        &["region", "mode"],
                        "mode thm2 requires a declared gap containing 0 (region.gap = [a, b] with a < 0 < b)",
                    )
                })?;
                if !(a < 0.0 && 0.0 < b) {
                    return Err(config_err(src, &["gap"], "mode thm2 requires a declared gap containing 0"));
                }
                let (left, right) = gap_around_zero(&OperatorModel::rank_one(measure.clone(), 1.0)?);
                if left < -a || right < b {
                    return Err(config_err(
                        src,
                        &["gap"],
                        format!("declared gap [{a}, {b}] contains spectrum; the free gap is ({}, {right})", -left),
                    ));
                }
                let d0 = r
                    .delta0
                    .ok_or_else(|| config_err(src, &["region"], "mode thm2 requires region.delta0"))?;
                if !(d0 > 0.0 && d0 < -a && d0 < b) {
                    return Err(config_err(
                        src,
                        &["delta0"],
                        "region.delta0 must be positive and smaller than the gap half-widths",
                    ));
                }
                for &[lo, hi] in r.derealize.iter().flatten() {
                    if !(lo < hi && hi < -d0) {
                        return Err(config_err(
                            src,
                            &["derealize"],
                            "derealize intervals must satisfy lo < hi < −delta0",
                        ));
                    }
                }
            }
            Mode::Target => {
                if r.gap.is_some() || r.delta0.is_some() || r.derealize.is_some() {
                    return Err(config_err(
                        src,
                        &["gap", "delta0", "derealize"],
                        "mode thm3 takes delta/shape, not gap/delta0/derealize",
                    ));
                }
                let delta = r
                    .delta
                    .as_ref()
                    .filter(|d| !d.is_empty())
                    .ok_or_else(|| config_err(src, &["region", "mode"], "mode thm3 requires non-empty region.delta"))?;
                let mut sorted: Vec<[f64; 2]> = delta.clone();
                sorted.sort_by(|x, y| x[0].total_cmp(&y[0]));
                for w in sorted.windows(2) {
                    if w[1][0] < w[0][1] {
                        return Err(config_err(src, &["delta"], "region.delta intervals must be disjoint"));
                    }
                }
                for &[lo, hi] in delta {
                    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                        return Err(config_err(src, &["delta"], "region.delta intervals need finite lo < hi"));
                    }
                    if hi < hlo - REGION_REACH || lo > hhi + REGION_REACH {
                        return Err(config_err(
                            src,
                            &["delta"],
                            format!("region [{lo}, {hi}] lies outside the support hull inflated by {REGION_REACH}"),
                        ));
                    }
                }
                let shape = r.shape.unwrap_or(2);
                if shape < SHAPE_RANGE.0 || shape > SHAPE_RANGE.1 {
                    return Err(config_err(
                        src,
                        &["shape"],
                        format!("region.shape must lie in {}..={}", SHAPE_RANGE.0, SHAPE_RANGE.1),
                    ));
                }
            }
        }

        let n = &config.numerics;
        validate_ladder(&n.eps_ladder).map_err(|e| config_err(src, &["eps_ladder"], e))?;
        validate_grid(n.grid).map_err(|e| config_err(src, &["grid"], e))?;
        if n.random_vectors > MAX_RANDOM {
            return Err(config_err(
                src,
                &["random_vectors"],
                format!("numerics.random_vectors must be at most {MAX_RANDOM}"),
            ));
        }
        config
            .calibration
            .validate()
            .map_err(|e| config_err(src, &["calibration"], e))?;

        let scenario = Scenario { config, measure };
        scenario
            .model()
            .map_err(|e| config_err(src, &["coupling"], format!("coupling: {e}")))?;
        Ok(scenario)
    }
}

fn validate_ladder(eps: &[f64]) -> std::result::Result<(), String> {
    check_ladder(eps).map_err(|e| format!("numerics.eps_ladder: {e}"))?;
    if eps[0] > 1.0 {
        return Err("numerics.eps_ladder entries must not exceed 1".into());
    }
    Ok(())
}

fn validate_grid(n: usize) -> std::result::Result<(), String> {
    if n < GRID_RANGE.0 || n > GRID_RANGE.1 {
        return Err(format!("grid must lie in {}..={}", GRID_RANGE.0, GRID_RANGE.1));
    }
    Ok(())
}

/// Which detectors a pipeline runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pipeline {
    Annihilate,
    Smirnov,
    Classify,
}

impl Pipeline {
    fn smirnov(self) -> bool {
        self != Pipeline::Annihilate
    }

    fn annihilation(self) -> bool {
        self != Pipeline::Smirnov
    }
}

/// One CSV row of an ε-ladder trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub detector: String,
    pub vector_id: String,
    pub eps: f64,
    pub value: Complex64,
    pub norm: f64,
}

pub const TRACE_HEADER: &str = "detector,vector_id,eps,value_re,value_im,norm";

/// Fixed 17-significant-digit rendering used in every artifact.
pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        let s = format!("{x:.16e}");
        match s.split_once('e') {
            Some((m, e)) if !e.starts_with('-') => format!("{m}e+{e}"),
            _ => s,
        }
    } else {
        x.to_string()
    }
}

fn num(x: f64) -> Value {
    if x.is_finite() {
        Value::Number(fmt_float(x).parse().expect("formatted float parses"))
    } else {
        Value::Null
    }
}

fn opt_num(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

pub fn traces_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.detector,
            r.vector_id,
            fmt_float(r.eps),
            fmt_float(r.value.re),
            fmt_float(r.value.im),
            fmt_float(r.norm)
        );
    }
    out
}

pub struct Report {
    pub json: Value,
    pub traces: Vec<TraceRow>,
}

impl Report {
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.json).expect("report serializes");
        s.push('\n');
        s
    }
}

struct RegionRun {
    intervals: Vec<(f64, f64)>,
    dictionary: Vec<DictionaryEntry>,
}

/// A scenario prepared for running: model, bundle and per-region dictionaries.
pub struct Runner {
    scenario: Scenario,
    model: OperatorModel,
    bundle: AnnihilatorBundle,
    ladder: Vec<f64>,
    grid: usize,
    regions: Vec<RegionRun>,
}

pub const DETECTORS: [&str; 5] = ["smirnov_strong", "smirnov_weak", "ac_baseline", "weak_thm2", "weak_thm3"];

impl Runner {
    pub fn new(scenario: &Scenario, overrides: &Overrides) -> Result<Self> {
        let config = scenario.config();
        let ladder = overrides
            .eps_ladder
            .clone()
            .unwrap_or_else(|| config.numerics.eps_ladder.clone());
        validate_ladder(&ladder).map_err(Error::Config)?;
        let grid = overrides.grid.unwrap_or(config.numerics.grid);
        validate_grid(grid).map_err(|e| Error::Config(format!("--{e}")))?;
        let seed = overrides.seed.unwrap_or(config.seed);
        let model = scenario.model()?;
        let bundle = match config.mode {
            Mode::Gap => {
                let d0 = config.region.delta0.expect("validated");
                let b = build_gamma_thm2(&model, d0)?;
                match &config.region.derealize {
                    Some(omega) if !omega.is_empty() => {
                        let omega: Vec<(f64, f64)> = omega.iter().map(|&[a, b]| (a, b)).collect();
                        derealize(&b, &omega)?
                    }
                    _ => b,
                }
            }
            Mode::Target => build_beta_thm3(&scenario.regions(), config.region.shape.unwrap_or(2))?,
        };
        let region_list = scenario.regions();
        let multiple = region_list.len() > 1;
        let regions = region_list
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let mut dictionary = dictionary(
                    scenario.measure(),
                    &[r],
                    config.numerics.random_vectors,
                    seed.wrapping_add(i as u64),
                );
                if multiple {
                    for e in &mut dictionary {
                        e.id = format!("{}@{i}", e.id);
                    }
                }
                RegionRun {
                    intervals: vec![r],
                    dictionary,
                }
            })
            .collect();
        Ok(Runner {
            scenario: scenario.clone(),
            model,
            bundle,
            ladder,
            grid,
            regions,
        })
    }

    pub fn model(&self) -> &OperatorModel {
        &self.model
    }

    pub fn bundle(&self) -> &AnnihilatorBundle {
        &self.bundle
    }

    pub fn ladder(&self) -> &[f64] {
        &self.ladder
    }

    pub fn vector_ids(&self) -> Vec<String> {
        self.regions
            .iter()
            .flat_map(|r| r.dictionary.iter().map(|e| e.id.clone()))
            .collect()
    }

    fn annihilation_name(&self) -> &'static str {
        match self.scenario.config().mode {
            Mode::Gap => "weak_thm2",
            Mode::Target => "weak_thm3",
        }
    }

    fn annihilation(&self, u: &SymbolVector) -> Result<Vec<Complex64>> {
        match self.scenario.config().mode {
            Mode::Gap => weak_trace_thm2(&self.bundle, &self.model, u, u, &self.ladder),
            Mode::Target => weak_trace_thm3(&self.bundle, &self.model, u, u, &self.ladder),
        }
    }

    fn vector_traces(&self, entry: &DictionaryEntry, pipeline: Pipeline) -> Result<(VectorTraces, Vec<TraceRow>)> {
        let ctx = |detector: &str, e: Error| e.with_context(&format!("{detector} on {}", entry.id));
        let u = &entry.vector;
        let mut rows = Vec::new();
        let row = |detector: &str, eps: f64, value: Complex64, norm: f64| TraceRow {
            detector: detector.to_string(),
            vector_id: entry.id.clone(),
            eps,
            value,
            norm,
        };
        let (strong, weak) = if pipeline.smirnov() {
            let s = smirnov_strong_trace(&self.model, u, &self.ladder).map_err(|e| ctx("smirnov_strong", e))?;
            let w = smirnov_weak_trace(&self.model, u, u, &self.ladder).map_err(|e| ctx("smirnov_weak", e))?;
            rows.extend(
                s.iter()
                    .map(|p| row("smirnov_strong", p.eps, Complex64::new(p.without, p.with), p.without)),
            );
            rows.extend(
                s.iter()
                    .map(|p| row("ac_baseline", p.eps, Complex64::new(p.without, 0.0), p.without)),
            );
            rows.extend(
                w.iter()
                    .map(|p| row("smirnov_weak", p.eps, Complex64::new(p.bare, p.weighted), p.weighted)),
            );
            (Some(s), Some(w))
        } else {
            (None, None)
        };
        let annihilation = if pipeline.annihilation() {
            let name = self.annihilation_name();
            let t = self.annihilation(u).map_err(|e| ctx(name, e))?;
            rows.extend(self.ladder.iter().zip(&t).map(|(&eps, &v)| row(name, eps, v, v.norm())));
            Some((name.to_string(), t))
        } else {
            None
        };
        Ok((
            VectorTraces {
                id: entry.id.clone(),
                eps: self.ladder.clone(),
                strong,
                weak,
                annihilation,
            },
            rows,
        ))
    }

    pub fn report(&self, pipeline: Pipeline) -> Result<Report> {
        let cal = &self.scenario.config().calibration;
        let mut verdicts = Vec::new();
        let mut traces = Vec::new();
        for region in &self.regions {
            let mut collected = Vec::new();
            for entry in &region.dictionary {
                let (t, rows) = self.vector_traces(entry, pipeline)?;
                collected.push(t);
                traces.extend(rows);
            }
            let region_json: Vec<Value> = region.intervals.iter().map(|&(a, b)| json!([num(a), num(b)])).collect();
            if collected.is_empty() {
                verdicts.push(json!({
                    "region": region_json,
                    "verdict": "inconclusive",
                    "heuristic": true,
                    "vectors": [],
                    "evidence": [],
                }));
                continue;
            }
            let rv = classify(&collected, cal)?;
            let evidence: Vec<Value> = rv
                .evidence
                .iter()
                .map(|e| {
                    json!({
                        "detector": e.detector,
                        "vector_id": e.vector_id,
                        "slope": opt_num(e.slope),
                        "residual": opt_num(e.residual),
                        "indication": e.indication,
                    })
                })
                .collect();
            verdicts.push(json!({
                "region": region_json,
                "verdict": rv.verdict.as_str(),
                // the converse reading of the Smirnov laws is a calibrated heuristic
                "heuristic": true,
                "vectors": rv.vectors,
                "evidence": evidence,
            }));
        }
        let c = serde_json::to_value(cal).expect("calibration serializes");
        let calibration: serde_json::Map<String, Value> = c
            .as_object()
            .expect("calibration is an object")
            .iter()
            .map(|(k, v)| {
                let v = match v.as_f64() {
                    Some(x) if !v.is_u64() => num(x),
                    _ => v.clone(),
                };
                (k.clone(), v)
            })
            .collect();
        let json = json!({
            "scenario_id": self.scenario.config().id,
            "mode": self.scenario.config().mode.as_str(),
            "verdicts": verdicts,
            "calibration": calibration,
            "eps_ladder": self.ladder.iter().map(|&e| num(e)).collect::<Vec<_>>(),
            "runtime_ms": Value::Null,
        });
        Ok(Report { json, traces })
    }

    /// Raw ε-ladder of one detector on one dictionary vector.
    pub fn trace(&self, detector: &str, vector_id: &str) -> Result<Vec<TraceRow>> {
        if !DETECTORS.contains(&detector) {
            return Err(Error::Config(format!(
                "unknown detector '{detector}' (expected one of {})",
                DETECTORS.join(", ")
            )));
        }
        let entry = self
            .regions
            .iter()
            .flat_map(|r| r.dictionary.iter())
            .find(|e| e.id == vector_id)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown vector '{vector_id}' (available: {})",
                    self.vector_ids().join(", ")
                ))
            })?;
        let u = &entry.vector;
        let row = |eps: f64, value: Complex64, norm: f64| TraceRow {
            detector: detector.to_string(),
            vector_id: vector_id.to_string(),
            eps,
            value,
            norm,
        };
        let ctx = |e: Error| e.with_context(&format!("{detector} on {vector_id}"));
        let rows = match detector {
            "smirnov_strong" => smirnov_strong_trace(&self.model, u, &self.ladder)
                .map_err(ctx)?
                .iter()
                .map(|p| row(p.eps, Complex64::new(p.without, p.with), p.without))
                .collect(),
            "smirnov_weak" => smirnov_weak_trace(&self.model, u, u, &self.ladder)
                .map_err(ctx)?
                .iter()
                .map(|p| row(p.eps, Complex64::new(p.bare, p.weighted), p.weighted))
                .collect(),
            "ac_baseline" => ac_baseline_trace(&self.model, u, &self.ladder)
                .map_err(ctx)?
                .iter()
                .zip(&self.ladder)
                .map(|(&n, &eps)| row(eps, Complex64::new(n, 0.0), n))
                .collect(),
            name => {
                if name != self.annihilation_name() {
                    return Err(Error::Config(format!(
                        "detector '{name}' needs mode {}",
                        if name == "weak_thm2" { "thm2" } else { "thm3" }
                    )));
                }
                self.annihilation(u)
                    .map_err(ctx)?
                    .iter()
                    .zip(&self.ladder)
                    .map(|(&v, &eps)| row(eps, v, v.norm()))
                    .collect()
            }
        };
        Ok(rows)
    }

    /// Plot tables as `(file name, CSV)`: γ on three horizontal lines, `log|γ_A|` near
    /// the axis, and β near the axis in target mode.
    pub fn plot_tables(&self) -> Result<Vec<(String, String)>> {
        let (lo, hi) = self.model.measure().hull();
        let (lo, hi) = (lo - 1.0, hi + 1.0);
        let n = self.grid;
        let xs: Vec<f64> = (0..n).map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64).collect();
        let gamma = |lam: Complex64| match self.scenario.config().mode {
            Mode::Gap => self.bundle.gamma(lam),
            Mode::Target => self.model.gamma_a(lam),
        };
        let mut tables = Vec::new();

        let mut s = String::from("t,eps,gamma_re,gamma_im\n");
        for eps in [1e-1, 1e-2, 1e-3] {
            let vals = par_map(&xs, |t| gamma(Complex64::new(t, eps)))?;
            for (t, g) in xs.iter().zip(vals) {
                let _ = writeln!(s, "{},{},{},{}", fmt_float(*t), fmt_float(eps), fmt_float(g.re), fmt_float(g.im));
            }
        }
        tables.push(("gamma_lines.csv".to_string(), s));

        let boundary = 1e-6;
        let vals = par_map(&xs, |t| self.model.log_gamma_a(Complex64::new(t, boundary)))?;
        let mut s = String::from("t,log_abs_gamma_a\n");
        for (t, g) in xs.iter().zip(vals) {
            let _ = writeln!(s, "{},{}", fmt_float(*t), fmt_float(g.re));
        }
        tables.push(("gamma_a_boundary.csv".to_string(), s));

        if let Some(bump) = self.bundle.beta_bump() {
            let vals = par_map(&xs, |t| bump.beta(Complex64::new(t, boundary)))?;
            let mut s = String::from("t,b,beta_re,beta_im\n");
            for (t, v) in xs.iter().zip(vals) {
                let _ = writeln!(
                    s,
                    "{},{},{},{}",
                    fmt_float(*t),
                    fmt_float(bump.eval(*t)),
                    fmt_float(v.re),
                    fmt_float(v.im)
                );
            }
            tables.push(("beta_boundary.csv".to_string(), s));
        }
        Ok(tables)
    }
}

fn par_map<F>(xs: &[f64], f: F) -> Result<Vec<Complex64>>
where
    F: Fn(f64) -> Result<Complex64> + Sync,
{
    use rayon::prelude::*;
    xs.par_iter().map(|&x| f(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const GAP: &str = r#"{
  "version": 1,
  "id": "t",
  "measure": {"atoms": [{"position": -1.0, "weight": 0.5}],
              "ac_pieces": [{"lo": 0.5, "hi": 1.5, "density": [0.5]}]},
  "mode": "thm2",
  "region": {"gap": [-0.5, 0.5], "delta0": 0.25}
}"#;

    #[test]
    fn parses_and_defaults() {
        let s = Scenario::from_json(GAP).unwrap();
        assert_eq!(s.config().numerics.eps_ladder, DEFAULT_LADDER.to_vec());
        assert_eq!(s.config().coupling, CouplingSpec::default());
        assert_eq!(s.regions(), vec![(-1.0, -0.25)]);
    }

    #[test]
    fn missing_gap_names_the_invariant() {
        let text = GAP.replace(r#""gap": [-0.5, 0.5], "#, "");
        let e = Scenario::from_json(&text).unwrap_err().to_string();
        assert!(e.contains("requires a declared gap containing 0"), "{e}");
        assert!(e.contains("line 7"), "{e}");
    }

    #[test]
    fn rejects_unknown_keys_with_position() {
        let text = GAP.replace(r#""id": "t","#, r#""id": "t", "colour": 1,"#);
        let e = Scenario::from_json(&text).unwrap_err().to_string();
        assert!(e.contains("line 3") && e.contains("colour"), "{e}");
    }

    #[test]
    fn rejects_spectrum_in_declared_gap() {
        let text = GAP.replace("[-0.5, 0.5]", "[-0.5, 0.75]");
        assert!(matches!(Scenario::from_json(&text), Err(Error::Config(_))));
    }

    #[test]
    fn overrides_are_checked() {
        let s = Scenario::from_json(GAP).unwrap();
        let o = Overrides {
            eps_ladder: Some(vec![]),
            ..Default::default()
        };
        assert!(matches!(Runner::new(&s, &o), Err(Error::Config(_))));
    }

    #[test]
    fn floats_have_seventeen_digits() {
        assert_eq!(fmt_float(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_float(2.0), "2.0000000000000000e+0");
        assert_eq!(num(2.0).to_string(), fmt_float(2.0));
    }
}
