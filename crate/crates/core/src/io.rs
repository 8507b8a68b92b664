//! Delimited-text ingestion, run configuration, result documents, and the
//! `test`, `simulate` and `bench` commands behind the `dbreg` binary.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{distance_to_similarity, DistanceMatrix, Kernel, ResponseMatrix, SimilarityMatrix};
use crate::null_dist::{
    bootstrap_pvalue, cumulants, fit_box_chi2, fit_generalized_gamma, tail_pvalue_gamma, NullSpectrum, PValueReport,
    MIN_BOOTSTRAP,
};
use crate::permutation::{PermutationOracle, PermutationPlan, TimingReport};
use crate::sim::{run_table, PowerReport, ScenarioGrid};
use crate::spectral::CenteredEigen;
use crate::statistic::{statistic_from_eigen, DesignMatrix, Method, TestStatistic};

/// Version tag written into every result document.
pub const SCHEMA: &str = "dbreg/1";

/// Number of leading eigenvalues reported in the spectrum summary.
pub const TOP_EIGENVALUES: usize = 10;

/// A numeric table read from a delimited text file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub values: DMatrix<f64>,
}

fn detect_delimiter(text: &str) -> u8 {
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    if first.contains('\t') {
        b'\t'
    } else {
        b','
    }
}

/// Parses comma- or tab-separated numbers. A first row with any non-numeric
/// cell is taken as a header. Locations in errors are 1-based and count the
/// header line.
pub fn parse_table(text: &str, source: &str) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(detect_delimiter(text))
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::invalid(format!("{source}: line {}: {e}", i + 1)))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let line = rec.position().map_or(i as u64 + 1, |p| p.line());
        records.push((line, rec));
    }
    if records.is_empty() {
        return Err(Error::invalid(format!("{source}: no data")));
    }

    let header = match records[0].1.iter().any(|c| c.parse::<f64>().is_err()) {
        true => Some(records.remove(0).1.iter().map(str::to_owned).collect::<Vec<_>>()),
        false => None,
    };
    if records.is_empty() {
        return Err(Error::invalid(format!("{source}: header but no data rows")));
    }

    let ncols = header.as_ref().map_or(records[0].1.len(), Vec::len);
    let mut data = Vec::with_capacity(records.len() * ncols);
    for (line, rec) in &records {
        if rec.len() != ncols {
            return Err(Error::invalid(format!(
                "{source}: line {line}: {} columns, expected {ncols}",
                rec.len()
            )));
        }
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::invalid(format!("{source}: line {line}, column {}: non-numeric cell `{cell}`", j + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::invalid(format!(
                    "{source}: line {line}, column {}: non-finite value `{cell}`",
                    j + 1
                )));
            }
            data.push(v);
        }
    }
    Ok(Table {
        header,
        values: DMatrix::from_row_slice(records.len(), ncols, &data),
    })
}

pub fn read_table(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    parse_table(&text, &path.display().to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    Responses,
    Similarity,
    Distance,
}

/// The outcome side of an analysis.
#[derive(Debug, Clone)]
pub enum Outcome {
    Responses(ResponseMatrix),
    Similarity(SimilarityMatrix),
    Distance(DistanceMatrix),
}

impl Outcome {
    pub fn n(&self) -> usize {
        match self {
            Outcome::Responses(y) => y.n(),
            Outcome::Similarity(s) => s.n(),
            Outcome::Distance(d) => d.n(),
        }
    }
}

/// Reads the outcome file as `kind` and the design file, checking that both
/// describe the same subjects.
pub fn ingest(outcome: &Path, design: &Path, kind: InputKind) -> Result<(Outcome, DesignMatrix)> {
    let data = read_table(outcome)?.values;
    let name = outcome.display();
    let outcome = match kind {
        InputKind::Responses => Outcome::Responses(ResponseMatrix::new(data)?),
        InputKind::Similarity => Outcome::Similarity(
            SimilarityMatrix::raw(data).map_err(|e| Error::invalid(format!("{name}: {e}")))?,
        ),
        InputKind::Distance => {
            Outcome::Distance(DistanceMatrix::new(data).map_err(|e| Error::invalid(format!("{name}: {e}")))?)
        }
    };
    let x = read_table(design)?.values;
    if x.nrows() != outcome.n() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} has {} subjects but {} has {} rows",
            name,
            outcome.n(),
            design.display(),
            x.nrows()
        )));
    }
    Ok((outcome, DesignMatrix::new(x)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    Pseudo,
    Sqrt,
    Both,
}

impl MethodChoice {
    pub fn methods(self) -> &'static [Method] {
        match self {
            MethodChoice::Pseudo => &[Method::Pseudo],
            MethodChoice::Sqrt => &[Method::Sqrt],
            MethodChoice::Both => &Method::BOTH,
        }
    }
}

impl FromStr for MethodChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pseudo" => Ok(MethodChoice::Pseudo),
            "sqrt" => Ok(MethodChoice::Sqrt),
            "both" => Ok(MethodChoice::Both),
            _ => Err(Error::invalid(format!("unknown method `{s}` (expected pseudo, sqrt or both)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PValueRoute {
    Bootstrap,
    Gamma,
    Box,
    Permutation,
}

impl FromStr for PValueRoute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bootstrap" => Ok(PValueRoute::Bootstrap),
            "gamma" => Ok(PValueRoute::Gamma),
            "box" => Ok(PValueRoute::Box),
            "permutation" => Ok(PValueRoute::Permutation),
            _ => Err(Error::invalid(format!(
                "unknown p-value route `{s}` (expected bootstrap, gamma, box or permutation)"
            ))),
        }
    }
}

impl fmt::Display for PValueRoute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PValueRoute::Bootstrap => "bootstrap",
            PValueRoute::Gamma => "gamma",
            PValueRoute::Box => "box",
            PValueRoute::Permutation => "permutation",
        })
    }
}

/// Comma-separated route list, e.g. `bootstrap,gamma`.
pub fn parse_routes(s: &str) -> Result<Vec<PValueRoute>> {
    let routes = s
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(str::parse)
        .collect::<Result<Vec<_>>>()?;
    if routes.is_empty() {
        return Err(Error::invalid("no p-value route requested"));
    }
    Ok(dedup_routes(routes))
}

/// Drops repeated routes, keeping first occurrences in order.
pub fn dedup_routes(routes: Vec<PValueRoute>) -> Vec<PValueRoute> {
    let mut out = Vec::with_capacity(routes.len());
    for r in routes {
        if !out.contains(&r) {
            out.push(r);
        }
    }
    out
}

/// Everything that determines a `test` run; echoed into the result document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub outcome: PathBuf,
    pub design: PathBuf,
    pub input_kind: InputKind,
    pub kernel: Kernel,
    pub method: MethodChoice,
    pub routes: Vec<PValueRoute>,
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
    pub alpha: f64,
    pub add_intercept: bool,
    /// Overrides the plug-in noncentrality factor.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub threads: Option<usize>,
    /// Record wall-clock timings (makes the document run-dependent).
    #[serde(default)]
    pub timings: bool,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.routes.is_empty() {
            return Err(Error::invalid("no p-value route requested"));
        }
        let resampling = self
            .routes
            .iter()
            .any(|r| matches!(r, PValueRoute::Bootstrap | PValueRoute::Permutation));
        if resampling && self.b < MIN_BOOTSTRAP {
            return Err(Error::invalid(format!("B = {} below {MIN_BOOTSTRAP}", self.b)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha = {} outside (0, 1)", self.alpha)));
        }
        if let Some(f) = self.factor {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::invalid(format!("factor = {f} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Warning {
    pub kind: String,
    pub message: String,
}

impl Warning {
    fn from_error(e: &Error) -> Self {
        Self { kind: e.kind().into(), message: e.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub top_eigenvalues: Vec<f64>,
    pub positive_eigenvalues: usize,
    pub entropy_w: f64,
    pub entropy_eta: f64,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub statistic: TestStatistic,
    pub pvalues: PValueReport,
    /// Whether the first available p-value is at most alpha.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reject: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub decomposition_s: f64,
    pub routes_s: Vec<(PValueRoute, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub schema: String,
    pub config: RunConfig,
    pub n: usize,
    pub m: usize,
    pub results: Vec<MethodResult>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub spectrum: Option<SpectrumSummary>,
    pub warnings: Vec<Warning>,
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timings: Option<Timings>,
}

impl ResultDocument {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("result documents always serialize");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::invalid(format!("bad result document: {e}")))
    }

    pub fn to_tsv(&self) -> String {
        let fmt = |p: Option<f64>| p.map_or_else(|| "NA".to_owned(), |v| v.to_string());
        let mut out = String::from("method\tstatistic\tp_bootstrap\tp_gamma\tp_box\tp_permutation\tB\tseed\n");
        for r in &self.results {
            let p = &r.pvalues;
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.statistic.method,
                r.statistic.value,
                fmt(p.p_bootstrap),
                fmt(p.p_gamma),
                fmt(p.p_box),
                fmt(p.p_permutation),
                p.b,
                p.seed
            ));
        }
        out
    }

    pub fn result(&self, method: Method) -> Option<&MethodResult> {
        self.results.iter().find(|r| r.statistic.method == method)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Tsv,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "tsv" => Ok(OutputFormat::Tsv),
            _ => Err(Error::invalid(format!("unknown format `{s}` (expected json or tsv)"))),
        }
    }
}

/// Writes `text` to `out`, or stdout when absent.
pub fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display()))),
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

/// Centered similarity of the outcome, plus any geometry warning.
fn outcome_similarity(outcome: &Outcome, kernel: Kernel) -> Result<(SimilarityMatrix, Option<Warning>)> {
    match outcome {
        Outcome::Responses(y) => Ok((kernel.similarity(y)?, None)),
        Outcome::Similarity(s) => Ok((s.clone(), None)),
        Outcome::Distance(d) => {
            let g = distance_to_similarity(d);
            let warning = g.check.not_euclidean.then(|| Warning {
                kind: "NotEuclidean".into(),
                message: format!(
                    "distance matrix is not Euclidean (most negative Gower eigenvalue ratio {:e})",
                    g.check.min_eigen_ratio
                ),
            });
            Ok((g.similarity, warning))
        }
    }
}

fn pvalues_for(
    t: f64,
    method: Method,
    spec: &NullSpectrum,
    oracle: Option<&PermutationOracle<'_>>,
    config: &RunConfig,
    warnings: &mut Vec<Warning>,
    timings: &mut Vec<(PValueRoute, f64)>,
) -> Result<PValueReport> {
    let mut report = PValueReport {
        p_bootstrap: None,
        p_gamma: None,
        p_box: None,
        p_permutation: None,
        b: config.b,
        seed: config.seed,
        fit_diagnostics: None,
    };
    for &route in &config.routes {
        let start = Instant::now();
        match route {
            PValueRoute::Bootstrap => report.p_bootstrap = Some(bootstrap_pvalue(t, spec, method, config.b, config.seed)?),
            PValueRoute::Gamma => match fit_generalized_gamma(&cumulants(spec, method)) {
                Ok(fit) => {
                    report.p_gamma = Some(tail_pvalue_gamma(t, &fit.params));
                    report.fit_diagnostics = Some(fit.diagnostics);
                }
                Err(e) => warnings.push(Warning {
                    kind: "GammaFitFailed".into(),
                    message: format!("{method}: {e}"),
                }),
            },
            PValueRoute::Box => match fit_box_chi2(&cumulants(spec, method)) {
                Ok(fit) => report.p_box = Some(fit.tail(t)),
                Err(e) => warnings.push(Warning {
                    kind: e.kind().into(),
                    message: format!("{method}: {e}"),
                }),
            },
            PValueRoute::Permutation => {
                if let Some(oracle) = oracle {
                    let plan = PermutationPlan::new(config.b, config.seed)?;
                    report.p_permutation = Some(oracle.sampled(&plan)?.get(method));
                }
            }
        }
        timings.push((route, start.elapsed().as_secs_f64()));
    }
    Ok(report)
}

/// Runs the full pipeline on the files named in `config`.
pub fn cmd_test(config: &RunConfig) -> Result<ResultDocument> {
    config.validate()?;
    let (outcome, mut design) = ingest(&config.outcome, &config.design, config.input_kind)?;
    if config.add_intercept {
        design = design.with_intercept()?;
    }
    run_test(config, &outcome, &design)
}

/// The `test` pipeline on already-loaded data.
pub fn run_test(config: &RunConfig, outcome: &Outcome, design: &DesignMatrix) -> Result<ResultDocument> {
    config.validate()?;
    if outcome.n() != design.n() {
        return Err(Error::invalid(format!(
            "dimension mismatch: outcome has {} subjects, design has {}",
            outcome.n(),
            design.n()
        )));
    }
    let mut warnings = Vec::new();
    let mut notes = Vec::new();

    let start = Instant::now();
    let (s, geometry) = outcome_similarity(outcome, config.kernel)?;
    warnings.extend(geometry);
    let eig = CenteredEigen::from_similarity(&s);
    let decomposition_s = start.elapsed().as_secs_f64();

    let spec = match config.factor {
        Some(f) => NullSpectrum::new(&eig.clipped_values(), design.m(), f)?,
        None => NullSpectrum::from_eigen(&eig, design)?,
    };
    if spec.heavy_eta_tail(design.n()) {
        notes.push(
            "square-root weights decay slowly (largest eta below 2/n); analytic approximations for the \
             square-root statistic may be less accurate than the bootstrap"
                .into(),
        );
    }
    if let Kernel::Gaussian { .. } = config.kernel {
        if config.input_kind == InputKind::Responses {
            notes.push(
                "non-linear kernel: the mixture approximation is less studied here; the permutation route is a \
                 useful cross-check"
                    .into(),
            );
        }
    }

    let oracle = match config.routes.contains(&PValueRoute::Permutation) {
        true => match PermutationOracle::new(&eig, design) {
            Ok(o) => Some(o),
            Err(e) => {
                warnings.push(Warning::from_error(&e));
                None
            }
        },
        false => None,
    };

    let mut results = Vec::new();
    let mut route_times = Vec::new();
    let mut first_error = None;
    for &method in config.method.methods() {
        let statistic = match statistic_from_eigen(&eig, design, method) {
            Ok(t) => t,
            Err(e @ (Error::DegenerateResidual { .. } | Error::NotPsd { .. })) => {
                warnings.push(Warning {
                    kind: e.kind().into(),
                    message: format!("{method}: {e}"),
                });
                first_error.get_or_insert(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        let pvalues = pvalues_for(
            statistic.value,
            method,
            &spec,
            oracle.as_ref(),
            config,
            &mut warnings,
            &mut route_times,
        )?;
        let first = [pvalues.p_bootstrap, pvalues.p_permutation, pvalues.p_gamma, pvalues.p_box]
            .into_iter()
            .flatten()
            .next();
        results.push(MethodResult {
            statistic,
            pvalues,
            reject: first.map(|p| p <= config.alpha),
        });
    }
    if results.is_empty() {
        return Err(first_error.unwrap_or_else(|| Error::invalid("no method requested")));
    }

    let top_eigenvalues = spec.eigenvalues.iter().copied().take(TOP_EIGENVALUES).collect();
    Ok(ResultDocument {
        schema: SCHEMA.into(),
        config: config.clone(),
        n: design.n(),
        m: design.m(),
        results,
        spectrum: Some(SpectrumSummary {
            top_eigenvalues,
            positive_eigenvalues: spec.w.len(),
            entropy_w: spec.entropy(Method::Pseudo),
            entropy_eta: spec.entropy(Method::Sqrt),
            factor: spec.factor,
        }),
        warnings,
        notes,
        timings: config.timings.then_some(Timings {
            decomposition_s,
            routes_s: route_times,
        }),
    })
}

/// Output of `simulate`: the scenario as run and the table it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationDocument {
    pub schema: String,
    pub seed: u64,
    pub scenario: ScenarioGrid,
    pub report: PowerReport,
}

pub fn parse_scenario(text: &str) -> Result<ScenarioGrid> {
    toml::from_str(text).map_err(|e| Error::invalid(format!("bad scenario: {e}")))
}

/// Runs every cell of a scenario grid. `seed` overrides the file's seed;
/// with neither, one is drawn from entropy and recorded.
pub fn cmd_simulate(scenario: &ScenarioGrid, seed: Option<u64>) -> Result<SimulationDocument> {
    let seed = seed.or(scenario.seed).unwrap_or_else(crate::rng::entropy_seed);
    let cells = scenario.cells(seed);
    if cells.is_empty() {
        return Err(Error::invalid("scenario has no cells (models, rhos and taus must be nonempty)"));
    }
    for cell in &cells {
        cell.validate()?;
    }
    Ok(SimulationDocument {
        schema: SCHEMA.into(),
        seed,
        scenario: scenario.clone(),
        report: run_table(&cells)?,
    })
}

pub fn cmd_simulate_file(path: &Path, seed: Option<u64>) -> Result<SimulationDocument> {
    let text = fs::read_to_string(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    cmd_simulate(&parse_scenario(&text)?, seed)
}

pub fn cmd_bench(n: usize, b: usize, kernel: Kernel, seed: u64) -> Result<TimingReport> {
    if n < 10 {
        return Err(Error::invalid(format!("bench needs n ≥ 10, got {n}")));
    }
    crate::permutation::timing_benchmark(n, b, kernel, seed)
}

impl TimingReport {
    pub fn to_tsv(&self) -> String {
        format!(
            "n\tB\tkernel\tt_parametric_s\tt_permutation_s\tratio\n{}\t{}\t{}\t{}\t{}\t{}\n",
            self.n, self.b, self.kernel, self.t_parametric_s, self.t_permutation_s, self.ratio
        )
    }
}
