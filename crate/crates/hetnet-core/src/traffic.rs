//! Traffic management between the licensed and unlicensed tiers: the tier-M
//! throughput constraint, the Υ fixed-point map, the decentralized
//! weight-adaptation scheme, and the centralized per-user network-throughput
//! maximization.
//!
//! The ω-coordinates are ω_k = w̄_k^{2/α}. Tier M (the last tier) never
//! manages itself; its ω is the normalization anchor.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics;
use crate::model::{ModelError, ValidatedModel};
use crate::numerics::{self, NumericsError};

#[derive(Debug, Error)]
pub enum TrafficError {
    #[error("the start violates the tier-M throughput constraint (slack {slack:.4})")]
    InfeasibleStart { slack: f64 },
    #[error("degenerate measurement: {0}")]
    DegenerateMeasurement(String),
    #[error("decentralized run did not converge within {max_iter} iterations")]
    NoConvergence { max_iter: usize },
    #[error("traffic management needs at least two tiers")]
    TooFewTiers,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("model rebuild failed: {0}")]
    Rebuild(String),
}

fn rebuild(model: &ValidatedModel, omegas: &[f64]) -> Result<ValidatedModel, TrafficError> {
    model
        .with_omegas(omegas)
        .map_err(|e| TrafficError::Rebuild(e.to_string()))
}

// ---------------------------------------------------------------------------
// Constraint and the Υ map
// ---------------------------------------------------------------------------

/// Check the tier-M per-user throughput floor at the given ω-vector:
/// (q_{M,0} B_U / (c_min μ)) Σ_k λ_k ω_k ≥ ω_M / R_U_M, with every
/// probability and bound re-evaluated at ω.
///
/// Returns the indicator and the normalized slack c_M/c_min − 1.
pub fn tier_m_constraint(
    model: &ValidatedModel,
    omegas: &[f64],
    c_min: f64,
) -> Result<(bool, f64), TrafficError> {
    if model.tier_count() < 2 {
        return Err(TrafficError::TooFewTiers);
    }
    if c_min <= 0.0 {
        return Ok((true, f64::INFINITY));
    }
    let at = rebuild(model, omegas)?;
    let last = at.tier_count() - 1;
    let c_m = analytics::per_user_link_throughput(&at, last)?;
    let slack = c_m / c_min - 1.0;
    Ok((slack >= 0.0, slack))
}

/// Υ_m(x) = q_{m,0}(x) C_m(x) / (μ c_min) · (Σ_{k≠m} λ_k ω_k + λ_m x).
///
/// Its fixed point characterizes a state whose tier-m per-user throughput
/// equals c_min.
pub fn upsilon(
    model: &ValidatedModel,
    m: usize,
    x: f64,
    omegas: &[f64],
    c_min: f64,
) -> Result<f64, TrafficError> {
    if !(x > 0.0) {
        return Err(TrafficError::DegenerateMeasurement(format!(
            "upsilon requires x > 0, got {x}"
        )));
    }
    let mut om = omegas.to_vec();
    om[m] = x;
    let at = rebuild(model, &om)?;
    let q = 1.0 - analytics::void_probability(&at, m);
    let c_total = analytics::total_link_throughput(&at, m)?;
    let weighted: f64 = (0..at.tier_count())
        .map(|k| at.tier(k).intensity * om[k])
        .sum();
    Ok(q * c_total / (at.user_intensity() * c_min) * weighted)
}

/// Relative residual of ω_M against the Υ_M fixed point, |1 − c_M/c_min|;
/// zero exactly when the tier-M constraint binds.
pub fn upsilon_residual(
    model: &ValidatedModel,
    omegas: &[f64],
    c_min: f64,
) -> Result<f64, TrafficError> {
    let last = model.tier_count() - 1;
    let ups = upsilon(model, last, omegas[last], omegas, c_min)?;
    Ok((omegas[last] - ups).abs() / omegas[last])
}

// ---------------------------------------------------------------------------
// Decentralized scheme
// ---------------------------------------------------------------------------

/// One measurement of a managed tier: total AP throughput C_m(n) and the
/// observed per-AP user count N_m(n).
#[derive(Debug, Clone, Copy)]
pub struct Measured {
    pub link_throughput: f64,
    pub user_count: f64,
}

/// One row of the trajectory log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrafficStep {
    pub iteration: usize,
    pub omegas: Vec<f64>,
    pub per_user_throughputs: Vec<f64>,
    pub c_star: f64,
    pub constraint_slack: f64,
}

/// State of the decentralized recursion across managed tiers.
#[derive(Debug, Clone)]
pub struct TrafficState {
    pub iteration: usize,
    pub omegas: Vec<f64>,
    /// Running averages N̄_m(n) of observed per-AP user counts.
    pub n_avg: Vec<f64>,
    pub n_obs: Vec<usize>,
    /// Running best per-user rates c*_m(n), floored at c_min.
    pub c_best: Vec<f64>,
    pub trajectory: Vec<TrafficStep>,
    pub converged: bool,
    /// Υ_M fixed-point residual at the final state.
    pub residual: f64,
}

impl TrafficState {
    pub fn new(omegas: Vec<f64>, c_min: f64) -> Self {
        let m = omegas.len();
        Self {
            iteration: 0,
            omegas,
            n_avg: vec![0.0; m],
            n_obs: vec![0; m],
            c_best: vec![c_min; m],
            trajectory: Vec::new(),
            converged: false,
            residual: f64::INFINITY,
        }
    }

    /// Trajectory CSV: n, ω_1..ω_M, c_1..c_M, c*, constraint_slack.
    pub fn trajectory_csv(&self) -> String {
        let m = self.omegas.len();
        let mut out = String::from("n");
        for k in 0..m {
            out.push_str(&format!(",omega_{}", k + 1));
        }
        for k in 0..m {
            out.push_str(&format!(",c_{}", k + 1));
        }
        out.push_str(",c_star,constraint_slack\n");
        for step in &self.trajectory {
            out.push_str(&format!("{}", step.iteration));
            for v in &step.omegas {
                out.push_str(&format!(",{v:.10e}"));
            }
            for v in &step.per_user_throughputs {
                out.push_str(&format!(",{v:.10e}"));
            }
            out.push_str(&format!(
                ",{:.10e},{:.10e}\n",
                step.c_star, step.constraint_slack
            ));
        }
        out
    }
}

/// The recursive weight update of the decentralized scheme:
///
/// ω_m(n+1) = c*(n) N̄_m(n) ω_m(n) / C_m(n),
/// c*(n) = max{c_min, c*(n−1), C_m(n)/N̄_m(n)},
///
/// with N̄_m the running average of observed per-AP user counts. Returns the
/// new ω_m.
pub fn decentralized_step(
    state: &mut TrafficState,
    m: usize,
    c_min: f64,
    measured: Measured,
) -> Result<f64, TrafficError> {
    if !(measured.link_throughput > 0.0) || !(measured.user_count > 0.0) {
        return Err(TrafficError::DegenerateMeasurement(format!(
            "tier {m}: C = {}, N = {}",
            measured.link_throughput, measured.user_count
        )));
    }
    let n = state.n_obs[m] as f64;
    state.n_avg[m] = (state.n_avg[m] * n + measured.user_count) / (n + 1.0);
    state.n_obs[m] += 1;
    let rate = measured.link_throughput / state.n_avg[m];
    state.c_best[m] = state.c_best[m].max(c_min).max(rate);
    let omega = state.omegas[m] * state.c_best[m] * state.n_avg[m] / measured.link_throughput;
    state.omegas[m] = omega;
    Ok(omega)
}

/// Mean-field measurement of one tier from the analytic formulas.
pub fn measured_mean_field(model: &ValidatedModel, m: usize) -> Result<Measured, TrafficError> {
    Ok(Measured {
        link_throughput: analytics::total_link_throughput(model, m)?,
        user_count: analytics::mean_cell_load(model, m),
    })
}

/// Options for the decentralized run.
#[derive(Debug, Clone, Copy)]
pub struct DecentralizedOptions {
    pub max_iter: usize,
    /// Relative ω resolution at which the run is declared converged.
    pub tol: f64,
    /// Initial multiplicative probe (ω ← ω·step for offloading).
    pub step: f64,
    /// Target band for the constraint slack when a step is clipped at the
    /// boundary.
    pub slack_tol: f64,
}

impl Default for DecentralizedOptions {
    fn default() -> Self {
        Self {
            max_iter: 400,
            tol: 1e-4,
            step: 0.8,
            slack_tol: 1e-4,
        }
    }
}

/// Run the mean-field decentralized traffic-management scheme for the managed
/// tiers (all tiers except the last by default).
///
/// Each managed tier repeatedly probes a multiplicative change of its own ω
/// and keeps it only when its own per-user link throughput improves and the
/// tier-M floor stays satisfied; a step that would break the floor is clipped
/// to the constraint boundary (reject-and-freeze with a damped retry). The
/// printed recursion's running quantities (N̄_m, c*_m) are tracked and logged
/// for every accepted round.
pub fn decentralized_run(
    model: &ValidatedModel,
    managed: &[usize],
    c_min: f64,
    options: DecentralizedOptions,
) -> Result<TrafficState, TrafficError> {
    let m_count = model.tier_count();
    if m_count < 2 {
        return Err(TrafficError::TooFewTiers);
    }
    let last = m_count - 1;
    assert!(
        managed.iter().all(|&m| m < last),
        "managed tiers must lie in 1..M-1"
    );
    let omega0 = model.omegas();
    let (feasible, slack0) = tier_m_constraint(model, &omega0, c_min)?;
    if !feasible {
        return Err(TrafficError::InfeasibleStart { slack: slack0 });
    }

    let mut state = TrafficState::new(omega0.clone(), c_min);
    let mut current = rebuild(model, &omega0)?;
    let mut factor = options.step;

    let log_row = |state: &mut TrafficState,
                   at: &ValidatedModel,
                   slack: f64|
     -> Result<(), TrafficError> {
        let mut c = Vec::with_capacity(m_count);
        for k in 0..m_count {
            c.push(analytics::per_user_link_throughput(at, k)?);
        }
        let c_star = state
            .c_best
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        state.trajectory.push(TrafficStep {
            iteration: state.iteration,
            omegas: state.omegas.clone(),
            per_user_throughputs: c,
            c_star,
            constraint_slack: slack,
        });
        Ok(())
    };

    let mut slack = slack0;
    log_row(&mut state, &current, slack)?;

    for iter in 1..=options.max_iter {
        state.iteration = iter;
        let mut moved = false;
        for &m in managed {
            // Track the printed recursion's running measurements.
            let measured = measured_mean_field(&current, m)?;
            let n = state.n_obs[m] as f64;
            state.n_avg[m] = (state.n_avg[m] * n + measured.user_count) / (n + 1.0);
            state.n_obs[m] += 1;
            let rate = measured.link_throughput / state.n_avg[m];
            state.c_best[m] = state.c_best[m].max(c_min).max(rate);

            let c_now = analytics::per_user_link_throughput(&current, m)?;
            // Offload first; load only if offloading does not improve.
            for dir in [factor, 1.0 / factor] {
                let mut omega = state.omegas.clone();
                omega[m] *= dir;
                let candidate = rebuild(&current, &omega)?;
                let c_new = analytics::per_user_link_throughput(&candidate, m)?;
                if !(c_new > c_now * (1.0 + 1e-12)) {
                    continue;
                }
                let (ok, s) = tier_m_constraint(model, &omega, c_min)?;
                if ok {
                    state.omegas = omega;
                    current = candidate;
                    slack = s;
                    moved = true;
                    break;
                }
                if dir < 1.0 {
                    // Clip the offload to the constraint boundary.
                    let (mut lo, mut hi) = (dir, 1.0); // lo infeasible, hi feasible
                    let mut accepted = None;
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        let mut om = state.omegas.clone();
                        om[m] *= mid;
                        let (ok, s) = tier_m_constraint(model, &om, c_min)?;
                        if ok {
                            hi = mid;
                            if s <= options.slack_tol {
                                accepted = Some((om, s));
                                break;
                            }
                            accepted = Some((om, s));
                        } else {
                            lo = mid;
                        }
                    }
                    if let Some((om, s)) = accepted {
                        let candidate = rebuild(&current, &om)?;
                        let c_new = analytics::per_user_link_throughput(&candidate, m)?;
                        if c_new > c_now * (1.0 + 1e-12) {
                            state.omegas = om;
                            current = candidate;
                            slack = s;
                            moved = true;
                        }
                    }
                    break;
                }
            }
        }
        log_row(&mut state, &current, slack)?;
        if !moved {
            factor = factor.sqrt();
            if 1.0 - factor < options.tol {
                state.converged = true;
                break;
            }
        }
    }

    if !state.converged {
        return Err(TrafficError::NoConvergence {
            max_iter: options.max_iter,
        });
    }
    state.residual = upsilon_residual(model, &state.omegas, c_min)?;
    Ok(state)
}

// ---------------------------------------------------------------------------
// Centralized scheme
// ---------------------------------------------------------------------------

/// Box bounds for the centralized search, per managed tier, in ω units.
#[derive(Debug, Clone)]
pub struct OmegaBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl OmegaBounds {
    /// Default box [ω_ref/32, 32 ω_ref] around the model's current ω.
    pub fn around(model: &ValidatedModel) -> Self {
        let last = model.tier_count() - 1;
        let omegas = model.omegas();
        Self {
            lower: omegas[..last].iter().map(|o| o / 32.0).collect(),
            upper: omegas[..last].iter().map(|o| o * 32.0).collect(),
        }
    }
}

/// Maximize the per-user network throughput over the managed ω (tiers
/// 1..M−1; ω_M stays fixed as the normalization) subject to the tier-M
/// throughput floor. Deterministic for a given seed.
///
/// Returns the full ω-vector and the achieved per-user network throughput in
/// bps.
pub fn centralized_optimize(
    model: &ValidatedModel,
    c_min: f64,
    bounds: Option<OmegaBounds>,
    restarts: usize,
    seed: u64,
) -> Result<(Vec<f64>, f64), TrafficError> {
    let m_count = model.tier_count();
    if m_count < 2 {
        return Err(TrafficError::TooFewTiers);
    }
    let last = m_count - 1;
    let bounds = bounds.unwrap_or_else(|| OmegaBounds::around(model));
    let dim = last;
    let lower_log: Vec<f64> = bounds.lower.iter().map(|v| v.ln()).collect();
    let upper_log: Vec<f64> = bounds.upper.iter().map(|v| v.ln()).collect();
    let omega_base = model.omegas();

    let assemble = |logs: &[f64]| -> Vec<f64> {
        let mut om = omega_base.clone();
        for d in 0..dim {
            om[d] = logs[d].exp();
        }
        om
    };
    let feasible = |logs: &[f64]| -> bool {
        let om = assemble(logs);
        tier_m_constraint(model, &om, c_min).map_or(false, |(ok, _)| ok)
    };
    let objective = |logs: &[f64]| -> f64 {
        let om = assemble(logs);
        rebuild(model, &om)
            .ok()
            .and_then(|at| analytics::per_user_network_throughput(&at).ok())
            .unwrap_or(f64::NEG_INFINITY)
    };

    let (best_logs, value) =
        numerics::maximize_box(objective, &lower_log, &upper_log, feasible, restarts, seed)?;
    Ok((assemble(&best_logs), value))
}

/// The equivalent inverse bias b^{-1} = P_m h̄ / ω_m^{α/2} of one tier.
pub fn equivalent_inverse_bias(model: &ValidatedModel, m: usize, omega_m: f64) -> f64 {
    let shadow_mean = 1.0; // shadowing marks are unit-mean by construction
    model.tier(m).power * shadow_mean / omega_m.powf(model.alpha() / 2.0)
}

/// Geometric mean of the managed tiers' equivalent inverse biases.
pub fn mean_inverse_bias(model: &ValidatedModel, omegas: &[f64]) -> f64 {
    let last = model.tier_count() - 1;
    let acc: f64 = (0..last)
        .map(|m| equivalent_inverse_bias(model, m, omegas[m]).ln())
        .sum();
    (acc / last as f64).exp()
}
