//! Experiment configuration and the `codebook`, `synth` and `analyze` commands.
//!
//! One JSON file drives a run. Command-line flags only override values from
//! that file. Outputs are written to a temporary name and renamed into place
//! once everything has been computed, so a failed command leaves no partial
//! results behind.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{load_trace, synthesize_trace, trace_to_csv, Scenario, SnrTrace};
use crate::engine::SweepConfig;
use crate::error::{Error, Result};
use crate::geometry::{build_codebook, covering_radius, BeamCodebook, CodebookParams};
use crate::metrics::{evaluate_grid, optimal_period, ChainComparison, Normalization, PeriodGrid, DEFAULT_PERIODS_MS};

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Grid step used when reporting the codebook's covering radius.
pub const COVERAGE_STEP_DEG: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub codebook: CodebookParams,
    /// Members of the built-in NLOS ensemble, seeded `seed..seed + n`. When
    /// absent, 6 runs are used unless scenarios or trace files are given.
    pub ensemble_runs: Option<usize>,
    pub scenarios: Vec<Scenario>,
    /// Trace CSVs, relative to the config file's directory.
    pub trace_files: Vec<PathBuf>,
    pub periods_ms: Vec<f64>,
    pub n_chains: Vec<usize>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub dwell_ms: f64,
    pub bandwidth_hz: f64,
    pub outage_margin_db: f64,
    pub switch_cost_slots: u32,
    pub curve_normalization: Normalization,
    pub chain_normalization: Normalization,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            codebook: CodebookParams::default(),
            ensemble_runs: None,
            scenarios: Vec::new(),
            trace_files: Vec::new(),
            periods_ms: DEFAULT_PERIODS_MS.to_vec(),
            n_chains: vec![1, 2, 4],
            output_dir: PathBuf::from("out"),
            seed: 0,
            dwell_ms: 0.125,
            bandwidth_hz: 100e6,
            outage_margin_db: 5.0,
            switch_cost_slots: 0,
            curve_normalization: Normalization::PerRun,
            chain_normalization: Normalization::CrossChain,
        }
    }
}

/// Flag overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl ExperimentConfig {
    /// Reads a config file and resolves relative trace paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for f in cfg.trace_files.iter_mut() {
            if f.is_relative() {
                *f = base.join(&*f);
            }
        }
        Ok(cfg)
    }

    pub fn apply(mut self, overrides: &Overrides) -> Self {
        if let Some(out) = &overrides.out {
            self.output_dir = out.clone();
        }
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        self
    }

    pub fn effective_ensemble_runs(&self) -> usize {
        self.ensemble_runs.unwrap_or(if self.scenarios.is_empty() && self.trace_files.is_empty() {
            6
        } else {
            0
        })
    }

    /// Built-in ensemble members followed by the explicit scenarios.
    pub fn all_scenarios(&self) -> Vec<Scenario> {
        let mut v = Scenario::nlos_ensemble(self.effective_ensemble_runs(), self.seed);
        v.extend(self.scenarios.iter().cloned());
        v
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            dwell_ms: self.dwell_ms,
            bandwidth_hz: self.bandwidth_hz,
            outage_margin_db: self.outage_margin_db,
            switch_cost_slots: self.switch_cost_slots,
            ..SweepConfig::default()
        }
    }

    pub fn validate(&self) -> Result<BeamCodebook> {
        let codebook = build_codebook(&self.codebook)?;
        let scenarios = self.all_scenarios();
        if scenarios.is_empty() && self.trace_files.is_empty() {
            return Err(Error::config("trace_files", "no trace source: give scenarios, trace_files or ensemble_runs"));
        }
        let mut ids = BTreeSet::new();
        for (i, s) in scenarios.iter().enumerate() {
            s.validate().map_err(|e| match e {
                Error::Config { field, message } => Error::config(format!("scenarios[{i}].{field}"), message),
                other => other,
            })?;
            if !ids.insert(s.run_id.clone()) {
                return Err(Error::config("scenarios", format!("duplicate run_id `{}`", s.run_id)));
            }
        }
        for f in &self.trace_files {
            if !f.is_file() {
                return Err(Error::MissingFile(f.clone()));
            }
        }
        let grid = PeriodGrid::new(self.periods_ms.clone())?;
        if self.n_chains.is_empty() {
            return Err(Error::config("n_chains", "at least one chain count is required"));
        }
        grid.check_feasible(&codebook, &self.sweep_config(), &self.n_chains)?;
        Ok(codebook)
    }

    /// Canonical JSON (sorted keys) of everything that affects results. The
    /// output directory is excluded.
    pub fn canonical_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
        }
        value.to_string()
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Collects files and moves them into place only after all were written.
struct AtomicOutputs {
    dir: PathBuf,
    staged: Vec<(PathBuf, PathBuf)>,
}

impl AtomicOutputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            staged: Vec::new(),
        })
    }

    fn stage(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        let final_path = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.tmp"));
        if let Err(e) = std::fs::write(&tmp, contents) {
            self.discard();
            return Err(Error::io(&tmp, e));
        }
        self.staged.push((tmp, final_path));
        Ok(())
    }

    fn discard(&mut self) {
        for (tmp, _) in self.staged.drain(..) {
            let _ = std::fs::remove_file(tmp);
        }
    }

    fn commit(mut self) -> Result<Vec<PathBuf>> {
        let staged = std::mem::take(&mut self.staged);
        let mut written = Vec::with_capacity(staged.len());
        for (i, (tmp, dest)) in staged.iter().enumerate() {
            if let Err(e) = std::fs::rename(tmp, dest) {
                for (t, _) in &staged[i..] {
                    let _ = std::fs::remove_file(t);
                }
                for d in &written {
                    let _ = std::fs::remove_file(d);
                }
                return Err(Error::io(dest, e));
            }
            written.push(dest.clone());
        }
        Ok(written)
    }
}

impl Drop for AtomicOutputs {
    fn drop(&mut self) {
        self.discard();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodebookReport {
    pub path: PathBuf,
    pub n_beams: usize,
    pub covering_radius_deg: f64,
}

/// Writes `codebook.csv` into the output directory.
pub fn cmd_codebook(config: &ExperimentConfig) -> Result<CodebookReport> {
    let codebook = build_codebook(&config.codebook)?;
    let radius = covering_radius(&codebook, config.codebook.el_halfspan_deg, COVERAGE_STEP_DEG);
    let mut out = AtomicOutputs::new(&config.output_dir)?;
    out.stage("codebook.csv", codebook.to_csv().as_bytes())?;
    let path = out.commit()?.remove(0);
    Ok(CodebookReport {
        path,
        n_beams: codebook.len(),
        covering_radius_deg: radius,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestEntry {
    pub run_id: String,
    pub seed: u64,
    pub file: String,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthManifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub runs: Vec<ManifestEntry>,
}

fn synthesize_all(config: &ExperimentConfig, codebook: &BeamCodebook) -> Result<Vec<(Scenario, SnrTrace)>> {
    use rayon::prelude::*;
    config
        .all_scenarios()
        .into_par_iter()
        .map(|s| {
            let t = synthesize_trace(&s, codebook)?;
            Ok((s, t))
        })
        .collect()
}

/// Writes `<run_id>.csv` per scenario plus `manifest.json`.
pub fn cmd_synth(config: &ExperimentConfig) -> Result<SynthManifest> {
    let codebook = config.validate()?;
    let runs = synthesize_all(config, &codebook)?;
    if runs.is_empty() {
        return Err(Error::config("scenarios", "no scenarios to synthesize"));
    }
    let mut out = AtomicOutputs::new(&config.output_dir)?;
    let mut entries = Vec::with_capacity(runs.len());
    for (scenario, trace) in &runs {
        let file = format!("{}.csv", scenario.run_id);
        out.stage(&file, trace_to_csv(trace).as_bytes())?;
        entries.push(ManifestEntry {
            run_id: scenario.run_id.clone(),
            seed: scenario.seed,
            file,
            rows: trace.rows(),
        });
    }
    let manifest = SynthManifest {
        tool: TOOL_NAME.into(),
        version: TOOL_VERSION.into(),
        config_hash: config.hash(),
        runs: entries,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    out.stage("manifest.json", json.as_bytes())?;
    out.commit()?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub run_ids: Vec<String>,
    pub trace_files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveSummary {
    pub n_chains: usize,
    pub optimal_period_ms: f64,
    /// `(T_ms, ensemble mean normalized rate)`
    pub ensemble: Vec<(f64, f64)>,
    /// `(run_id, [(T_ms, serving-slot outage fraction)])`
    pub outage: Vec<(String, Vec<(f64, f64)>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisSummary {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub provenance: Provenance,
    pub periods_ms: Vec<f64>,
    pub curve_normalization: Normalization,
    pub curves: Vec<CurveSummary>,
    pub chain_comparison: ChainComparison,
}

impl AnalysisSummary {
    pub fn curve(&self, n_chains: usize) -> Option<&CurveSummary> {
        self.curves.iter().find(|c| c.n_chains == n_chains)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub summary: AnalysisSummary,
    pub results_csv: String,
    pub summary_json: String,
}

/// Loads or synthesizes every trace named by the config.
pub fn collect_traces(config: &ExperimentConfig, codebook: &BeamCodebook) -> Result<Vec<SnrTrace>> {
    let mut traces: Vec<SnrTrace> = synthesize_all(config, codebook)?.into_iter().map(|(_, t)| t).collect();
    for f in &config.trace_files {
        traces.push(load_trace(f, codebook.len())?);
    }
    let mut ids = BTreeSet::new();
    for t in &traces {
        if !ids.insert(t.run_id().to_owned()) {
            return Err(Error::config("trace_files", format!("duplicate run id `{}`", t.run_id())));
        }
    }
    Ok(traces)
}

/// Runs the full grid evaluation in memory.
pub fn analyze(config: &ExperimentConfig) -> Result<Analysis> {
    let codebook = config.validate()?;
    let traces = collect_traces(config, &codebook)?;
    let grid = PeriodGrid::new(config.periods_ms.clone())?;
    let eval = evaluate_grid(&traces, &codebook, &grid, &config.n_chains, &config.sweep_config())?;

    let mut results_csv = String::from("run_id,n_chains,T_ms,mean_rate_bps,normalized_rate,outage_fraction\n");
    let mut curves = Vec::with_capacity(config.n_chains.len());
    let per_chain = config
        .n_chains
        .iter()
        .map(|&n| eval.throughput_curve(n, config.curve_normalization))
        .collect::<Result<Vec<_>>>()?;
    for (r, run_id) in eval.run_ids.iter().enumerate() {
        for curve in &per_chain {
            for p in &curve.runs[r].points {
                results_csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    run_id, curve.n_chains, p.period_ms, p.mean_rate_bps, p.normalized_rate, p.outage_fraction
                ));
            }
        }
    }
    for curve in &per_chain {
        curves.push(CurveSummary {
            n_chains: curve.n_chains,
            optimal_period_ms: optimal_period(curve)?,
            ensemble: curve.ensemble.clone(),
            outage: curve
                .runs
                .iter()
                .map(|run| {
                    (
                        run.run_id.clone(),
                        run.points.iter().map(|p| (p.period_ms, p.outage_fraction)).collect(),
                    )
                })
                .collect(),
        });
    }
    let chain_comparison = eval.chain_comparison(config.chain_normalization)?;
    let scenarios = config.all_scenarios();
    let summary = AnalysisSummary {
        tool: TOOL_NAME.into(),
        version: TOOL_VERSION.into(),
        config_hash: config.hash(),
        provenance: Provenance {
            config_hash: config.hash(),
            seeds: scenarios.iter().map(|s| s.seed).collect(),
            run_ids: eval.run_ids.clone(),
            trace_files: config.trace_files.iter().map(|p| p.display().to_string()).collect(),
        },
        periods_ms: config.periods_ms.clone(),
        curve_normalization: config.curve_normalization,
        curves,
        chain_comparison,
    };
    let summary_json = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    Ok(Analysis {
        summary,
        results_csv,
        summary_json,
    })
}

/// Writes `results.csv` and `summary.json` into the output directory.
pub fn cmd_analyze(config: &ExperimentConfig) -> Result<Analysis> {
    let analysis = analyze(config)?;
    let mut out = AtomicOutputs::new(&config.output_dir)?;
    out.stage("results.csv", analysis.results_csv.as_bytes())?;
    out.stage("summary.json", analysis.summary_json.as_bytes())?;
    out.commit()?;
    Ok(analysis)
}
