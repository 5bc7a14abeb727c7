//! Experiment orchestration: load a scenario, run analytic / Monte Carlo /
//! traffic pipelines over a sweep, and write machine-readable reports.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hetnet_core::analytics::AnalyticReport;
use hetnet_core::model::{validate, NetworkModel, ValidatedModel, WeightModel};
use hetnet_core::simcore::{self, EmpiricalReport};
use hetnet_core::traffic::{self, DecentralizedOptions};

/// Exit-code classification for the binary.
#[derive(Debug)]
pub enum AppError {
    /// Exit 2: schema or semantic violation in the experiment/scenario.
    Config(String),
    /// Exit 3: a numeric routine failed.
    Numeric(String),
    /// Exit 4: I/O failure.
    Io(String),
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Config(m) => write!(f, "configuration error: {m}"),
            AppError::Numeric(m) => write!(f, "numeric failure: {m}"),
            AppError::Io(m) => write!(f, "I/O failure: {m}"),
        }
    }
}

impl std::error::Error for AppError {}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Numeric(_) => 3,
            AppError::Io(_) => 4,
        }
    }
}

fn io_err<E: fmt::Display>(path: &Path) -> impl FnOnce(E) -> AppError + '_ {
    move |e| AppError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[clap(rename_all = "kebab-case")]
pub enum Mode {
    Analytic,
    Simulate,
    Compare,
    TrafficDecentralized,
    TrafficCentralized,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParameter {
    /// Common inverse bias b^{-1} applied to the licensed tiers' weights.
    InverseBias,
    /// Users per m².
    UserIntensity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

/// One experiment: scenario, mode, sweep and execution parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    /// Output file stem, e.g. "fig2_void".
    pub name: String,
    /// Path to the scenario JSON, relative to this spec file.
    pub scenario: String,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default = "default_window")]
    pub window: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: String,
    /// Tier-M per-user throughput floor for the traffic modes, bps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_min: Option<f64>,
    /// Optional common inverse bias applied to the scenario before running.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverse_bias: Option<f64>,
    /// Minimum typical-user samples per tier in simulate/compare modes.
    #[serde(default)]
    pub min_samples: usize,
}

fn default_realizations() -> usize {
    100
}
fn default_window() -> f64 {
    2000.0
}
fn default_output() -> String {
    "out".into()
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let spec: ExperimentSpec = serde_json::from_str(&text)
            .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        spec.check()?;
        Ok(spec)
    }

    fn check(&self) -> Result<(), AppError> {
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(AppError::Config("/sweep/values: must be nonempty".into()));
            }
            for w in sweep.values.windows(2) {
                if w[0] >= w[1] {
                    return Err(AppError::Config(
                        "/sweep/values: must be strictly increasing".into(),
                    ));
                }
            }
        }
        if matches!(self.mode, Mode::Simulate | Mode::Compare) && self.realizations < 1 {
            return Err(AppError::Config(
                "/realizations: must be >= 1 in simulate/compare modes".into(),
            ));
        }
        Ok(())
    }
}

/// Set the common inverse bias on every licensed tier with a biased weight.
pub fn apply_inverse_bias(model: &mut NetworkModel, inverse_bias: f64) -> Result<(), AppError> {
    if !(inverse_bias > 0.0) {
        return Err(AppError::Config(format!(
            "inverse bias must be positive, got {inverse_bias}"
        )));
    }
    let last = model.tiers.len().saturating_sub(1);
    for (idx, tier) in model.tiers.iter_mut().enumerate() {
        if idx == last {
            continue;
        }
        tier.weight = match tier.weight {
            WeightModel::BiasedPower { .. } => WeightModel::BiasedPower {
                bias: 1.0 / inverse_bias,
            },
            WeightModel::BiasedPowerShadowing { .. } => WeightModel::BiasedPowerShadowing {
                bias: 1.0 / inverse_bias,
            },
            WeightModel::Constant { .. } => {
                return Err(AppError::Config(format!(
                    "tier {idx}: inverse-bias sweep needs a biased weight model"
                )))
            }
        };
    }
    Ok(())
}

fn apply_sweep_value(
    model: &NetworkModel,
    sweep: &Option<Sweep>,
    value: Option<f64>,
) -> Result<NetworkModel, AppError> {
    let mut raw = model.clone();
    if let (Some(sweep), Some(v)) = (sweep, value) {
        match sweep.parameter {
            SweepParameter::InverseBias => apply_inverse_bias(&mut raw, v)?,
            SweepParameter::UserIntensity => raw.user_intensity = v,
        }
    }
    Ok(raw)
}

fn validated(raw: NetworkModel) -> Result<ValidatedModel, AppError> {
    validate(raw).map_err(|e| AppError::Config(e.to_string()))
}

/// Everything produced for one sweep point.
struct PointResult {
    value: Option<f64>,
    analytic: Option<AnalyticReport>,
    empirical: Option<EmpiricalReport>,
}

const DIFF_HEADER: &str = "sweep_value,tier,metric,analytic,empirical,abs_diff,stderr";

fn diff_rows(value: Option<f64>, a: &AnalyticReport, e: &EmpiricalReport) -> String {
    let sv = value.map_or(String::new(), |v| format!("{v}"));
    let mut out = String::new();
    for (ta, te) in a.tiers.iter().zip(&e.tiers) {
        let rows: [(&str, f64, f64, f64); 6] = [
            ("theta", ta.association_probability, te.association_probability, te.stderr_association),
            ("nu0", ta.void_probability, te.void_probability, te.stderr_void),
            ("xi", ta.qualification_probability, te.qualification_probability, te.stderr_qualification),
            ("rho", ta.channel_access_probability, te.channel_access_probability, te.stderr_access),
            ("rate_licensed", ta.rate_licensed, te.rate_licensed, te.stderr_rate_licensed),
            ("rate_unlicensed", ta.rate_unlicensed, te.rate_unlicensed, te.stderr_rate_unlicensed),
        ];
        for (metric, av, ev, se) in rows {
            out.push_str(&format!(
                "{sv},{},{metric},{av:.10e},{ev:.10e},{:.10e},{se:.10e}\n",
                ta.tier,
                (av - ev).abs()
            ));
        }
    }
    out
}

fn write(path: &Path, contents: &str) -> Result<(), AppError> {
    std::fs::write(path, contents).map_err(io_err(path))
}

/// Run an experiment spec; `spec_dir` anchors the scenario path.
pub fn run(spec: &ExperimentSpec, spec_dir: &Path, jobs: Option<usize>) -> Result<(), AppError> {
    if let Some(jobs) = jobs {
        // Ignore the error when a global pool already exists (tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let scenario_path = {
        let p = PathBuf::from(&spec.scenario);
        if p.is_absolute() {
            p
        } else {
            spec_dir.join(p)
        }
    };
    let text = std::fs::read_to_string(&scenario_path).map_err(io_err(&scenario_path))?;
    let mut raw = NetworkModel::from_json(&text)
        .map_err(|e| AppError::Config(format!("{}: {e}", scenario_path.display())))?;
    if let Some(ib) = spec.inverse_bias {
        apply_inverse_bias(&mut raw, ib)?;
    }

    let out_dir = {
        let p = PathBuf::from(&spec.output);
        if p.is_absolute() {
            p
        } else {
            std::env::current_dir().map_err(|e| AppError::Io(e.to_string()))?.join(p)
        }
    };
    std::fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;

    match spec.mode {
        Mode::Analytic | Mode::Simulate | Mode::Compare => {
            run_reports(spec, &raw, &out_dir)
        }
        Mode::TrafficDecentralized => run_decentralized(spec, &raw, &out_dir),
        Mode::TrafficCentralized => run_centralized(spec, &raw, &out_dir),
    }
}

fn run_reports(spec: &ExperimentSpec, raw: &NetworkModel, out_dir: &Path) -> Result<(), AppError> {
    let values: Vec<Option<f64>> = match &spec.sweep {
        Some(s) => s.values.iter().map(|v| Some(*v)).collect(),
        None => vec![None],
    };
    let mut points = Vec::with_capacity(values.len());
    for (k, value) in values.iter().enumerate() {
        let model = validated(apply_sweep_value(raw, &spec.sweep, *value)?)?;
        let analytic = if matches!(spec.mode, Mode::Analytic | Mode::Compare) {
            Some(
                AnalyticReport::compute(&model)
                    .map_err(|e| AppError::Numeric(e.to_string()))?,
            )
        } else {
            None
        };
        let empirical = if matches!(spec.mode, Mode::Simulate | Mode::Compare) {
            Some(
                simcore::run_experiment(
                    &model,
                    spec.realizations,
                    spec.window,
                    // Distinct, reproducible stream block per sweep point.
                    spec.seed.wrapping_add((k as u64) << 32),
                    spec.min_samples,
                )
                .map_err(|e| AppError::Numeric(e.to_string()))?,
            )
        } else {
            None
        };
        points.push(PointResult {
            value: *value,
            analytic,
            empirical,
        });
    }

    // Figure-level summary: every tier row of every sweep point, tagged with
    // the sweep value and the source.
    let mut summary = format!("sweep_value,source,{}\n", AnalyticReport::CSV_HEADER);
    for p in &points {
        let sv = p.value.map_or(String::new(), |v| format!("{v}"));
        if let Some(a) = &p.analytic {
            for line in a.to_csv().lines().skip(1) {
                summary.push_str(&format!("{sv},analytic,{line}\n"));
            }
        }
        if let Some(e) = &p.empirical {
            for line in e.to_csv().lines().skip(1) {
                // Trim the empirical-only columns down to the shared schema.
                let shared = line.split(',').take(11).collect::<Vec<_>>().join(",");
                summary.push_str(&format!("{sv},empirical,{shared}\n"));
            }
        }
    }
    write(&out_dir.join(format!("{}.csv", spec.name)), &summary)?;

    for (k, p) in points.iter().enumerate() {
        let stem = if p.value.is_some() {
            format!("{}_point{k}", spec.name)
        } else {
            spec.name.clone()
        };
        if let Some(a) = &p.analytic {
            write(&out_dir.join(format!("{stem}_analytic.csv")), &a.to_csv())?;
            let json = serde_json::to_string_pretty(a).expect("report serializes");
            write(&out_dir.join(format!("{stem}_analytic.json")), &json)?;
        }
        if let Some(e) = &p.empirical {
            write(&out_dir.join(format!("{stem}_empirical.csv")), &e.to_csv())?;
            let json = serde_json::to_string_pretty(e).expect("report serializes");
            write(&out_dir.join(format!("{stem}_empirical.json")), &json)?;
        }
    }

    if matches!(spec.mode, Mode::Compare) {
        let mut diff = format!("{DIFF_HEADER}\n");
        for p in &points {
            if let (Some(a), Some(e)) = (&p.analytic, &p.empirical) {
                diff.push_str(&diff_rows(p.value, a, e));
            }
        }
        write(&out_dir.join(format!("{}_diff.csv", spec.name)), &diff)?;
    }
    Ok(())
}

fn run_decentralized(
    spec: &ExperimentSpec,
    raw: &NetworkModel,
    out_dir: &Path,
) -> Result<(), AppError> {
    let model = validated(raw.clone())?;
    let managed: Vec<usize> = (0..model.tier_count() - 1).collect();
    let c_min = spec.c_min.unwrap_or(100e6);
    let state = traffic::decentralized_run(&model, &managed, c_min, DecentralizedOptions::default())
        .map_err(|e| AppError::Numeric(e.to_string()))?;
    write(
        &out_dir.join(format!("{}.csv", spec.name)),
        &state.trajectory_csv(),
    )?;
    let summary = serde_json::json!({
        "converged": state.converged,
        "iterations": state.iteration,
        "upsilon_residual": state.residual,
        "terminal_omegas": state.omegas,
        "terminal_per_user_throughputs": state
            .trajectory
            .last()
            .map(|s| s.per_user_throughputs.clone()),
        "equivalent_inverse_bias": (0..model.tier_count() - 1)
            .map(|m| traffic::equivalent_inverse_bias(&model, m, state.omegas[m]))
            .collect::<Vec<_>>(),
    });
    write(
        &out_dir.join(format!("{}_summary.json", spec.name)),
        &serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )
}

fn run_centralized(
    spec: &ExperimentSpec,
    raw: &NetworkModel,
    out_dir: &Path,
) -> Result<(), AppError> {
    let model = validated(raw.clone())?;
    let c_min = spec.c_min.unwrap_or(100e6);

    // Companion validation sweep along the common-bias ray.
    let values = spec
        .sweep
        .as_ref()
        .map(|s| s.values.clone())
        .unwrap_or_else(|| (1..=8).map(|v| v as f64).collect());
    let mut sweep_csv = String::from("inverse_bias,network_throughput_bps,c4_bps,feasible\n");
    let mut best_sweep = f64::NEG_INFINITY;
    for v in &values {
        let mut point = raw.clone();
        apply_inverse_bias(&mut point, *v)?;
        let at = validated(point)?;
        let net = hetnet_core::analytics::per_user_network_throughput(&at)
            .map_err(|e| AppError::Numeric(e.to_string()))?;
        let c_last =
            hetnet_core::analytics::per_user_link_throughput(&at, at.tier_count() - 1)
                .map_err(|e| AppError::Numeric(e.to_string()))?;
        best_sweep = best_sweep.max(net);
        sweep_csv.push_str(&format!(
            "{v},{net:.10e},{c_last:.10e},{}\n",
            c_last >= c_min
        ));
    }
    write(&out_dir.join(format!("{}.csv", spec.name)), &sweep_csv)?;

    let (omegas, value) = traffic::centralized_optimize(&model, c_min, None, 6, spec.seed)
        .map_err(|e| AppError::Numeric(e.to_string()))?;
    let summary = serde_json::json!({
        "optimal_omegas": omegas,
        "network_throughput_bps": value,
        "sweep_best_bps": best_sweep,
        "dominates_sweep": value >= best_sweep,
        "equivalent_inverse_bias": (0..model.tier_count() - 1)
            .map(|m| traffic::equivalent_inverse_bias(&model, m, omegas[m]))
            .collect::<Vec<_>>(),
        "mean_inverse_bias": traffic::mean_inverse_bias(&model, &omegas),
    });
    write(
        &out_dir.join(format!("{}_optimum.json", spec.name)),
        &serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )
}
