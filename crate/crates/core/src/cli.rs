//! The three commands behind the `shiftscope` binary, callable as library
//! functions.
//!
//! * `estimate` reads a labeled source CSV and an unlabeled target CSV with
//!   a shared schema, attaches predictions (loaded from files or produced by
//!   the built-in logistic model trained on the source), runs one estimator
//!   or all of them and writes a JSON report.
//! * `simulate` draws a source/target pair with a known shift from a
//!   bundled base or a labeled CSV and writes both samples, the schema and
//!   the true weights.
//! * `bench` runs one simulation suite and writes per-run and mean metrics
//!   as CSV.
//!
//! Output is a pure function of the inputs and the seed.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::{run_suite, write_csv, BenchRow, Suite};
use crate::error::{Error, Result};
use crate::io::{load_schema, read_dataset, read_json, write_dataset, write_json, SchemaFile, TruthFile};
use crate::pipeline::{run_method, EstimateConfig};
use crate::predictor::{load_predictions, predict, train_logistic, DEFAULT_L2, DEFAULT_MAX_ITERS};
use crate::report::{Method, ShiftReport};
use crate::synth::{binary_base, covid_analog, sample_analytic, simulate_from_base, AnalyticDistribution, Shift, BASE_FACTOR};
use crate::{GroundTruth, TabularDataset};

/// One estimator or every estimator in turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MethodChoice {
    One(Method),
    All,
}

impl MethodChoice {
    pub fn methods(&self) -> Vec<Method> {
        match self {
            MethodChoice::One(m) => vec![*m],
            MethodChoice::All => Method::ALL.to_vec(),
        }
    }
}

impl std::str::FromStr for MethodChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("all") {
            Ok(MethodChoice::All)
        } else {
            s.parse().map(MethodChoice::One)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub source_path: PathBuf,
    pub target_path: PathBuf,
    pub schema_path: PathBuf,
    pub method: MethodChoice,
    pub sparsity: usize,
    pub eta: f64,
    pub bins: usize,
    pub weight_bound: f64,
    pub seed: u64,
    /// Source predictions, `pred,p_1,...,p_L`.
    pub predictions_path: Option<PathBuf>,
    /// Target predictions in the same format.
    pub target_predictions_path: Option<PathBuf>,
    /// Truth file from `simulate`; adds weight metrics to the report.
    pub truth_path: Option<PathBuf>,
    /// `-` writes to stdout.
    pub output_path: PathBuf,
}

impl RunConfig {
    /// Defaults for everything but the paths.
    pub fn new(source_path: impl Into<PathBuf>, target_path: impl Into<PathBuf>, schema_path: impl Into<PathBuf>) -> Self {
        let d = EstimateConfig::default();
        RunConfig {
            source_path: source_path.into(),
            target_path: target_path.into(),
            schema_path: schema_path.into(),
            method: MethodChoice::One(Method::SeesD),
            sparsity: d.sparsity,
            eta: d.eta,
            bins: d.bins,
            weight_bound: d.weight_bound,
            seed: d.seed,
            predictions_path: None,
            target_predictions_path: None,
            truth_path: None,
            output_path: PathBuf::from("-"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let paths = [
            ("source-path", &self.source_path),
            ("target-path", &self.target_path),
            ("schema-path", &self.schema_path),
            ("output-path", &self.output_path),
        ];
        for (name, p) in paths {
            if p.as_os_str().is_empty() {
                return Err(Error::InvalidConfig(format!("{name} is empty")));
            }
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidConfig(format!("eta must be a finite nonnegative number, got {}", self.eta)));
        }
        if !(self.weight_bound > 0.0) {
            return Err(Error::InvalidConfig(format!("weight bound must be positive, got {}", self.weight_bound)));
        }
        if self.bins < 2 {
            return Err(Error::InvalidConfig("bins must be at least 2".into()));
        }
        if self.predictions_path.is_some() != self.target_predictions_path.is_some() {
            return Err(Error::InvalidConfig(
                "predictions-path and target-predictions-path must be given together".into(),
            ));
        }
        Ok(())
    }

    pub fn estimate_config(&self) -> EstimateConfig {
        EstimateConfig {
            sparsity: self.sparsity,
            eta: self.eta,
            bins: self.bins,
            weight_bound: self.weight_bound,
            seed: self.seed,
            ..EstimateConfig::default()
        }
    }
}

/// Labeled, predicted source and unlabeled, predicted target.
pub fn ingest(cfg: &RunConfig) -> Result<(TabularDataset, TabularDataset)> {
    let schema = load_schema(&cfg.schema_path)?;
    let source = read_dataset(&cfg.source_path, &schema)?;
    source.require_labels()?;
    // target labels, if present, are never used
    let target = read_dataset(&cfg.target_path, &schema)?.without_labels();
    match (&cfg.predictions_path, &cfg.target_predictions_path) {
        (Some(ps), Some(pt)) => Ok((load_predictions(&source, ps)?, load_predictions(&target, pt)?)),
        _ => {
            let model = train_logistic(&source, DEFAULT_L2, DEFAULT_MAX_ITERS)?;
            if !model.converged {
                log::warn!(
                    "logistic model stopped after {} iterations (gradient norm {:.2e})",
                    model.iterations,
                    model.gradient_norm
                );
            }
            Ok((predict(&model, &source)?, predict(&model, &target)?))
        }
    }
}

/// Runs the configured estimators and writes the report: one JSON object
/// for a single method, an array for `all`.
pub fn cmd_estimate(cfg: &RunConfig) -> Result<Vec<ShiftReport>> {
    cfg.validate()?;
    let (source, target) = ingest(cfg)?;
    let truth: Option<GroundTruth> = match &cfg.truth_path {
        Some(p) => Some(read_json::<TruthFile>(p)?.truth),
        None => None,
    };
    let ecfg = cfg.estimate_config();
    let mut reports = Vec::new();
    for m in cfg.method.methods() {
        log::info!("running {m}");
        reports.push(run_method(m, &source, &target, &ecfg, truth.as_ref())?.report);
    }
    let json = match cfg.method {
        MethodChoice::One(_) => serde_json::to_string_pretty(&reports[0])?,
        MethodChoice::All => serde_json::to_string_pretty(&reports)?,
    };
    write_text(&cfg.output_path, &json)?;
    Ok(reports)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if path == Path::new("-") {
        let mut out = std::io::stdout().lock();
        writeln!(out, "{text}")?;
        out.flush()?;
    } else {
        std::fs::write(path, format!("{text}\n"))?;
    }
    Ok(())
}

/// Where simulated samples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseSource {
    /// Seven binary symptom-style features with a binary diagnosis.
    CovidAnalog,
    /// `d` binary features, naive Bayes given a balanced binary label.
    Binary(usize),
    /// A labeled CSV read with a schema file; resampled as is.
    File { data: PathBuf, schema: PathBuf },
}

impl BaseSource {
    /// `covid-analog`, `binary:<d>`, or a CSV path paired with `schema`.
    pub fn parse(base: &str, schema: Option<&Path>) -> Result<Self> {
        if base == "covid-analog" {
            return Ok(BaseSource::CovidAnalog);
        }
        if let Some(d) = base.strip_prefix("binary:") {
            let d: usize = d
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("{d:?} is not a feature count")))?;
            if !(1..=16).contains(&d) {
                return Err(Error::InvalidConfig(format!("binary base needs 1 to 16 features, got {d}")));
            }
            return Ok(BaseSource::Binary(d));
        }
        let schema = schema.ok_or_else(|| Error::InvalidConfig("a CSV base needs --schema-path".into()))?;
        Ok(BaseSource::File {
            data: PathBuf::from(base),
            schema: schema.to_path_buf(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateConfig {
    pub spec_path: PathBuf,
    pub base: BaseSource,
    /// Rows in each of source and target.
    pub n: usize,
    pub seed: u64,
    /// Prepended to `source.csv`, `target.csv`, `truth.json`, `schema.json`.
    pub out_prefix: String,
}

/// Paths written by [`cmd_simulate`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedFiles {
    pub source: PathBuf,
    pub target: PathBuf,
    pub truth: PathBuf,
    pub schema: PathBuf,
}

impl SimulatedFiles {
    pub fn with_prefix(prefix: &str) -> Self {
        let p = |name: &str| PathBuf::from(format!("{prefix}{name}"));
        SimulatedFiles {
            source: p("source.csv"),
            target: p("target.csv"),
            truth: p("truth.json"),
            schema: p("schema.json"),
        }
    }
}

fn builtin(dist: AnalyticDistribution, label: &str, n: usize, seed: u64) -> (SchemaFile, TabularDataset) {
    let schema = SchemaFile::from_schema(dist.schema(), label);
    let base = sample_analytic(&dist, (BASE_FACTOR * n).max(1000), seed, true);
    (schema, base)
}

/// Writes a source sample with labels, a target sample without labels, the
/// truth file and the schema both samples use.
pub fn cmd_simulate(cfg: &SimulateConfig) -> Result<SimulatedFiles> {
    if cfg.n == 0 {
        return Err(Error::InvalidConfig("n must be positive".into()));
    }
    let shift: Shift = read_json(&cfg.spec_path)?;
    // the base draw and the shift draw get independent streams
    let base_seed = cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xB5;
    let (schema, base) = match &cfg.base {
        BaseSource::CovidAnalog => builtin(covid_analog(), "diagnosis", cfg.n, base_seed),
        BaseSource::Binary(d) => builtin(binary_base(*d), "y", cfg.n, base_seed),
        BaseSource::File { data, schema } => {
            let schema = load_schema(schema)?;
            let base = read_dataset(data, &schema)?;
            (schema, base)
        }
    };
    let trial = simulate_from_base(&base, &shift, cfg.n, cfg.n, cfg.seed)?;
    let files = SimulatedFiles::with_prefix(&cfg.out_prefix);
    if let Some(dir) = files.source.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_dataset(&files.source, &trial.source, &schema)?;
    write_dataset(&files.target, &trial.target, &schema)?;
    write_json(&files.truth, &TruthFile::new(&trial.truth, &schema))?;
    write_json(&files.schema, &schema)?;
    Ok(files)
}

/// Runs every method on one suite and writes the CSV to `out` (`-` for
/// stdout).
pub fn cmd_bench(suite: Suite, seeds: u64, out: &Path) -> Result<Vec<BenchRow>> {
    if seeds == 0 {
        return Err(Error::InvalidConfig("seeds must be positive".into()));
    }
    let rows = run_suite(suite, seeds, &Method::ALL)?;
    if out == Path::new("-") {
        write_csv(std::io::stdout().lock(), &rows)?;
    } else {
        write_csv(std::fs::File::create(out)?, &rows)?;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_choice_parses() {
        assert_eq!("ALL".parse::<MethodChoice>().unwrap(), MethodChoice::All);
        assert_eq!("sees-c".parse::<MethodChoice>().unwrap(), MethodChoice::One(Method::SeesC));
        assert!("lasso".parse::<MethodChoice>().is_err());
    }

    #[test]
    fn base_source_parses() {
        assert_eq!(BaseSource::parse("binary:6", None).unwrap(), BaseSource::Binary(6));
        assert!(BaseSource::parse("binary:0", None).is_err());
        assert!(BaseSource::parse("base.csv", None).is_err());
    }

    #[test]
    fn lone_prediction_file_is_rejected() {
        let mut cfg = RunConfig::new("s.csv", "t.csv", "schema.json");
        cfg.predictions_path = Some("p.csv".into());
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
    }
}
