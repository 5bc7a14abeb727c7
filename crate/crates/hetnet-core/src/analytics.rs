//! Analytic evaluation of every per-tier quantity: association probability,
//! cell-load pmf, void probability, opportunistic CSMA/CA channel-access
//! probability, Shannon-transform spectrum-efficiency lower bounds, and
//! per-user throughputs.
//!
//! All functions are pure; per-tier evaluations may run concurrently.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::model::{ChannelModel, ModelError, ValidatedModel};
use crate::numerics::{self, QuadratureSpec};

const LN2: f64 = std::f64::consts::LN_2;

/// (1 - e^{-x})/x evaluated without cancellation; 1 at x = 0.
fn expm1_ratio(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        -(-x).exp_m1() / x
    }
}

// ---------------------------------------------------------------------------
// Association, cell load, void probability
// ---------------------------------------------------------------------------

/// ϑ_m: probability that a user associates with a tier-m AP.
pub fn association_probability(model: &ValidatedModel, m: usize) -> f64 {
    let d = model.derived(m);
    model.tier(m).intensity * d.weight_moment_pos / model.association_denominator()
}

/// Mean cell load of a tier-m AP, μ ϑ_m / λ_m.
pub fn mean_cell_load(model: &ValidatedModel, m: usize) -> f64 {
    model.user_intensity() * association_probability(model, m) / model.tier(m).intensity
}

/// ν_{m,0}: probability that a tier-m AP serves no user.
pub fn void_probability(model: &ValidatedModel, m: usize) -> f64 {
    let zeta = model.derived(m).zeta;
    let load_ratio = model.user_intensity() * association_probability(model, m)
        / (zeta * model.tier(m).intensity);
    (-zeta * load_ratio.ln_1p()).exp()
}

/// ν_{m,n}: cell-load pmf, evaluated in log-Gamma space.
///
/// The Gamma-area mixture yields a negative binomial with the ζ exponent on
/// the AP-side factor and the n exponent on the user-side factor; the pmf
/// then sums to one.
pub fn cell_load_pmf(model: &ValidatedModel, m: usize, n: u64) -> Result<f64, ModelError> {
    let zeta = model.derived(m).zeta;
    let lambda = model.tier(m).intensity;
    let user_mass = model.user_intensity() * association_probability(model, m);
    if user_mass == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    let total = zeta * lambda + user_mass;
    let nf = n as f64;
    let ln_pmf = numerics::ln_gamma(nf + zeta)?
        - numerics::ln_gamma(nf + 1.0)?
        - numerics::ln_gamma(zeta)?
        + zeta * (zeta * lambda / total).ln()
        + nf * (user_mass / total).ln();
    let pmf = ln_pmf.exp();
    if pmf.is_finite() {
        Ok(pmf)
    } else {
        Err(ModelError::Domain(format!(
            "cell-load pmf overflowed at n = {n}"
        )))
    }
}

// ---------------------------------------------------------------------------
// Channel access probability
// ---------------------------------------------------------------------------

/// ρ_m: probability that a contending tier-m AP wins the unlicensed channel.
///
/// Evaluated as the exact integral of the timer-comparison protocol under
/// independent thinning: a tier-m AP with backoff t ~ U[0, τ_m] wins when no
/// qualified non-void contender with a smaller timer lies in its sensing
/// region. Effective tier-k contender mass is A[m][k] ξ_k q_{k,0} λ_k, split
/// over the backoff intervals by the λ†_{k,j} = ξ_k q_{k,0} λ_k
/// (τ_j − τ_{j+1})/τ_k occupation fractions. Non-contending tiers have
/// ρ_m ≡ 0. Dispatches to the single-exponential reduction when every
/// contending backoff is equal.
pub fn channel_access_probability(model: &ValidatedModel, m: usize) -> Result<f64, ModelError> {
    let dm = model.derived(m);
    if !dm.contends {
        return Ok(0.0);
    }
    // Contender masses per tier within tier-m's sensing region.
    let mut masses: Vec<(f64, f64)> = Vec::new(); // (tau_k, a_k)
    let mut taus = Vec::new();
    for k in 0..model.tier_count() {
        let dk = model.derived(k);
        if !dk.contends {
            continue;
        }
        taus.push(dk.tau);
        let a_k = model.sensing_overlap(m, k)
            * dk.xi
            * (1.0 - void_probability(model, k))
            * model.tier(k).intensity;
        if a_k > 0.0 {
            masses.push((dk.tau, a_k));
        }
    }
    for w in taus.windows(2) {
        if w[0] < w[1] {
            return Err(ModelError::OrderingViolation(format!(
                "contending backoffs must be nonincreasing, got {taus:?}"
            )));
        }
    }

    let tau_m = dm.tau;
    if masses.is_empty() {
        return Ok(1.0);
    }
    if tau_m == 0.0 {
        // Every timer in the window collapses to zero; ties resolve
        // uniformly, so the win probability is E[1/(N+1)] over the Poisson
        // count of simultaneous contenders.
        let x: f64 = masses.iter().filter(|(t, _)| *t == 0.0).map(|(_, a)| a).sum();
        return Ok(expm1_ratio(x));
    }

    if masses.iter().all(|(t, _)| *t == tau_m) {
        // Equal-backoff reduction: one exponential term.
        let x: f64 = masses.iter().map(|(_, a)| a).sum();
        return Ok(expm1_ratio(x));
    }

    // Piecewise-exponential integral over the backoff window.
    let mut breaks: Vec<f64> = masses
        .iter()
        .map(|(t, _)| *t)
        .filter(|t| *t > 0.0 && *t < tau_m)
        .collect();
    breaks.push(tau_m);
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup();

    let saturated_at = |t: f64| -> f64 {
        masses
            .iter()
            .filter(|(tk, _)| *tk <= t)
            .map(|(_, a)| a)
            .sum()
    };
    let slope_above = |t: f64| -> f64 {
        masses
            .iter()
            .filter(|(tk, _)| *tk >= t && *tk > 0.0)
            .map(|(tk, a)| a / tk)
            .sum()
    };

    let mut acc = 0.0;
    let mut prev = 0.0;
    for &b in &breaks {
        let g = saturated_at(prev); // contenders whose whole window precedes t
        let slope = slope_above(b);
        let width = b - prev;
        let piece = (-g - slope * prev).exp() * width * expm1_ratio(slope * width);
        acc += piece;
        prev = b;
    }
    Ok(acc / tau_m)
}

// ---------------------------------------------------------------------------
// The ℓ kernel and its interpolation cache
// ---------------------------------------------------------------------------

/// ℓ_Z(x, y) = x^y Γ(1-y) E[Z^y] + ∫₀¹ L_Z(x t^{-1/y}) dt − 1, for y ∈ (0,1).
pub fn ell(z: &ChannelModel, x: f64, y: f64) -> Result<f64, ModelError> {
    if !(y > 0.0 && y < 1.0) {
        return Err(ModelError::Domain(format!("ell requires y in (0,1), got {y}")));
    }
    if x < 0.0 {
        return Err(ModelError::Domain(format!("ell requires x >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let moment = z.fractional_moment(y)?;
    let spec = QuadratureSpec {
        rel_tol: 1e-10,
        abs_tol: 1e-13,
        max_subdivisions: 200,
    };
    let inner = numerics::integrate(
        |t| {
            if t <= 0.0 {
                0.0
            } else {
                z.laplace(x * t.powf(-1.0 / y))
            }
        },
        0.0,
        1.0,
        &spec,
    )?;
    Ok(x.powf(y) * numerics::gamma_fn(1.0 - y)? * moment + inner.value - 1.0)
}

/// Log-log interpolation table for ℓ_Z(·, y), shared across bound evaluations.
#[derive(Debug)]
pub struct EllTable {
    y: f64,
    ln_x_min: f64,
    step: f64,
    ln_ell: Vec<f64>,
    ell_min: f64,
    ell_max: f64,
}

const ELL_X_MIN: f64 = 1e-9;
const ELL_X_MAX: f64 = 1e9;
const ELL_PER_DECADE: usize = 48;

impl EllTable {
    fn build(z: &ChannelModel, y: f64) -> Result<Self, ModelError> {
        let decades = (ELL_X_MAX / ELL_X_MIN).log10().round() as usize;
        let n = decades * ELL_PER_DECADE + 1;
        let ln_x_min = ELL_X_MIN.ln();
        let step = (ELL_X_MAX.ln() - ln_x_min) / (n - 1) as f64;
        let mut ln_ell = Vec::with_capacity(n);
        for i in 0..n {
            let x = (ln_x_min + step * i as f64).exp();
            let v = ell(z, x, y)?;
            if !(v > 0.0) {
                return Err(ModelError::Domain(format!(
                    "ell table: nonpositive value {v} at x = {x}"
                )));
            }
            ln_ell.push(v.ln());
        }
        Ok(Self {
            y,
            ln_x_min,
            step,
            ell_min: ln_ell[0].exp(),
            ell_max: ln_ell[n - 1].exp(),
            ln_ell,
        })
    }

    /// Interpolated ℓ(x); linear continuation below the grid (where ℓ ∝ x)
    /// and x^y continuation above it.
    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x <= ELL_X_MIN {
            return self.ell_min * (x / ELL_X_MIN);
        }
        if x >= ELL_X_MAX {
            return self.ell_max * (x / ELL_X_MAX).powf(self.y);
        }
        let pos = (x.ln() - self.ln_x_min) / self.step;
        let i = (pos as usize).min(self.ln_ell.len() - 2);
        let frac = pos - i as f64;
        ((1.0 - frac) * self.ln_ell[i] + frac * self.ln_ell[i + 1]).exp()
    }
}

type EllKey = (u64, Vec<u64>);

fn channel_fingerprint(z: &ChannelModel) -> Vec<u64> {
    match z {
        ChannelModel::Deterministic { value } => vec![1, value.to_bits()],
        ChannelModel::Exponential { mean } => vec![2, mean.to_bits()],
        ChannelModel::LogNormal { mean, shadowing_std_db } => {
            vec![3, mean.to_bits(), shadowing_std_db.to_bits()]
        }
        ChannelModel::ProductExponentialLogNormal { mean, shadowing_std_db } => {
            vec![4, mean.to_bits(), shadowing_std_db.to_bits()]
        }
        ChannelModel::CustomTabulated { values, probabilities } => {
            let mut v = vec![5];
            v.extend(values.iter().map(|x| x.to_bits()));
            v.extend(probabilities.iter().map(|x| x.to_bits()));
            v
        }
    }
}

fn ell_table(z: &ChannelModel, y: f64) -> Result<Arc<EllTable>, ModelError> {
    static CACHE: OnceLock<Mutex<HashMap<EllKey, Arc<EllTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (y.to_bits(), channel_fingerprint(z));
    if let Some(t) = cache.lock().unwrap().get(&key) {
        return Ok(t.clone());
    }
    let table = Arc::new(EllTable::build(z, y)?);
    cache.lock().unwrap().insert(key, table.clone());
    Ok(table)
}

// ---------------------------------------------------------------------------
// Shannon transform
// ---------------------------------------------------------------------------

/// S_Ψ(η) = E[ln(1 + ηΨ)] in nats, via the Laplace-transform identity
/// ∫ (1 − e^{-ηs})/s · L_{Ψ⁻¹}(s) ds.
pub fn shannon_transform(psi: &ChannelModel, eta: f64) -> Result<f64, ModelError> {
    if eta < 0.0 {
        return Err(ModelError::Domain(format!("eta must be >= 0, got {eta}")));
    }
    if eta == 0.0 {
        return Ok(0.0);
    }
    let spec = QuadratureSpec::default();
    let quad = numerics::integrate_0_inf(
        |s| {
            let front = if s < 1e-12 {
                eta
            } else {
                (1.0 - (-eta * s).exp()) / s
            };
            front * psi.laplace_recip(s)
        },
        &spec,
    )?;
    Ok(quad.value)
}

/// E[ln(1 + ηΨ)] when η is itself a nonnegative random variable.
pub fn shannon_transform_random_eta(
    psi: &ChannelModel,
    eta: &ChannelModel,
) -> Result<f64, ModelError> {
    let eta_mean = eta.mean();
    let spec = QuadratureSpec::default();
    let quad = numerics::integrate_0_inf(
        |s| {
            let front = if s < 1e-12 {
                eta_mean
            } else {
                (1.0 - eta.laplace(s)) / s
            };
            front * psi.laplace_recip(s)
        },
        &spec,
    )?;
    Ok(quad.value)
}

// ---------------------------------------------------------------------------
// Spectrum-efficiency lower bounds
// ---------------------------------------------------------------------------

#[derive(Clone, Copy)]
enum Band {
    Licensed,
    Unlicensed,
}

struct BoundTerm {
    coef: f64,
    ratio: f64,
    table: Arc<EllTable>,
}

fn rate_bound_integral(
    numerator: &ChannelModel,
    terms: &[BoundTerm],
    spec: &QuadratureSpec,
) -> Result<f64, ModelError> {
    let quad = numerics::integrate_0_inf(
        |u| {
            let numer = if u < 1e-12 {
                // (1 - L(u))/u -> E[Ĥ] = 1 for the unit-mean residual gain.
                1.0
            } else {
                (1.0 - numerator.laplace(u)) / u
            };
            let denom = 1.0
                + terms
                    .iter()
                    .map(|t| t.coef * t.table.eval(t.ratio * u))
                    .sum::<f64>();
            numer / denom
        },
        spec,
    )?;
    Ok(quad.value)
}

fn rate_bound(model: &ValidatedModel, m: usize, band: Band) -> Result<f64, ModelError> {
    let count = model.tier_count();
    let y = model.two_over_alpha();
    let dm = model.derived(m);
    let (pref, numerator, h_mean_m) = match band {
        Band::Licensed => {
            if !model.uses_licensed(m) {
                return Ok(0.0);
            }
            (1.0, &dm.licensed_residual, dm.licensed_gain_mean)
        }
        Band::Unlicensed => {
            if !dm.contends || dm.xi == 0.0 {
                return Ok(0.0);
            }
            let rho_m = channel_access_probability(model, m)?;
            (rho_m * dm.xi, &dm.unlicensed_residual, dm.unlicensed_gain_mean)
        }
    };

    let mut terms = Vec::with_capacity(count);
    for k in 0..count {
        let dk = model.derived(k);
        let q_k = 1.0 - void_probability(model, k);
        let theta_k = association_probability(model, k);
        let (coef, h_mean_k, residual_k) = match band {
            Band::Licensed => {
                if !model.uses_licensed(k) {
                    continue;
                }
                (q_k * theta_k, dk.licensed_gain_mean, &dk.licensed_residual)
            }
            Band::Unlicensed => {
                if !dk.contends {
                    continue;
                }
                let rho_k = channel_access_probability(model, k)?;
                (
                    q_k * dk.xi * rho_k * theta_k,
                    dk.unlicensed_gain_mean,
                    &dk.unlicensed_residual,
                )
            }
        };
        if coef == 0.0 {
            continue;
        }
        let ratio = (dm.weight_mean * h_mean_k * model.tier(k).power)
            / (dk.weight_mean * h_mean_m * model.tier(m).power);
        terms.push(BoundTerm {
            coef,
            ratio,
            table: ell_table(residual_k, y)?,
        });
    }

    let spec = QuadratureSpec::default();
    let integral = rate_bound_integral(numerator, &terms, &spec)?;
    Ok(pref * integral / LN2)
}

/// Lower bound on the mean spectrum efficiency (bps/Hz) a tier-m AP offers in
/// the unlicensed spectrum.
pub fn unlicensed_rate_bound(model: &ValidatedModel, m: usize) -> Result<f64, ModelError> {
    rate_bound(model, m, Band::Unlicensed)
}

/// Lower bound on the mean spectrum efficiency (bps/Hz) in the licensed
/// spectrum; zero for the last tier.
pub fn licensed_rate_bound(model: &ValidatedModel, m: usize) -> Result<f64, ModelError> {
    rate_bound(model, m, Band::Licensed)
}

/// The dense-user limit of the licensed bound: every non-void probability
/// replaced by one.
pub fn licensed_rate_bound_dense_limit(
    model: &ValidatedModel,
    m: usize,
) -> Result<f64, ModelError> {
    if !model.uses_licensed(m) {
        return Ok(0.0);
    }
    let y = model.two_over_alpha();
    let dm = model.derived(m);
    let mut terms = Vec::new();
    for k in 0..model.tier_count() {
        if !model.uses_licensed(k) {
            continue;
        }
        let dk = model.derived(k);
        let theta_k = association_probability(model, k);
        let ratio = (dm.weight_mean * dk.licensed_gain_mean * model.tier(k).power)
            / (dk.weight_mean * dm.licensed_gain_mean * model.tier(m).power);
        terms.push(BoundTerm {
            coef: theta_k,
            ratio,
            table: ell_table(&dk.licensed_residual, y)?,
        });
    }
    let spec = QuadratureSpec::default();
    let integral = rate_bound_integral(&dm.licensed_residual, &terms, &spec)?;
    Ok(integral / LN2)
}

// ---------------------------------------------------------------------------
// Throughputs
// ---------------------------------------------------------------------------

/// C_m: total (licensed + unlicensed) link throughput of a tier-m AP in bps.
pub fn total_link_throughput(model: &ValidatedModel, m: usize) -> Result<f64, ModelError> {
    let r_l = licensed_rate_bound(model, m)?;
    let r_u = unlicensed_rate_bound(model, m)?;
    Ok(model.raw().bandwidth_licensed * r_l + model.raw().bandwidth_unlicensed * r_u)
}

/// c_m: per-user link throughput of the tier-m APs in bps.
pub fn per_user_link_throughput(model: &ValidatedModel, m: usize) -> Result<f64, ModelError> {
    let mu = model.user_intensity();
    if !(mu > 0.0) {
        return Err(ModelError::Domain(
            "per-user throughput needs a positive user intensity".into(),
        ));
    }
    let q = 1.0 - void_probability(model, m);
    let theta = association_probability(model, m);
    Ok(q * model.tier(m).intensity / (mu * theta) * total_link_throughput(model, m)?)
}

/// Per-user network throughput Σ_m c_m ϑ_m = (1/μ) Σ_m q_{m,0} λ_m C_m, bps.
pub fn per_user_network_throughput(model: &ValidatedModel) -> Result<f64, ModelError> {
    let mu = model.user_intensity();
    if !(mu > 0.0) {
        return Err(ModelError::Domain(
            "network throughput needs a positive user intensity".into(),
        ));
    }
    let mut acc = 0.0;
    for m in 0..model.tier_count() {
        let q = 1.0 - void_probability(model, m);
        acc += q * model.tier(m).intensity * total_link_throughput(model, m)?;
    }
    Ok(acc / mu)
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

/// Per-tier analytic quantities; the common schema shared with the empirical
/// report.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TierReport {
    pub tier: usize,
    /// ϑ_m.
    pub association_probability: f64,
    /// ν_{m,0}.
    pub void_probability: f64,
    /// q_{m,0} = 1 − ν_{m,0}.
    pub nonvoid_probability: f64,
    pub mean_cell_load: f64,
    /// ξ_m.
    pub qualification_probability: f64,
    /// ρ_m.
    pub channel_access_probability: f64,
    /// R_L_m, bps/Hz.
    pub rate_licensed: f64,
    /// R_U_m, bps/Hz.
    pub rate_unlicensed: f64,
    /// C_m, bps.
    pub link_throughput: f64,
    /// c_m, bps per user.
    pub per_user_throughput: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AnalyticReport {
    pub tiers: Vec<TierReport>,
    /// Σ_m c_m ϑ_m, bps per user.
    pub network_throughput: f64,
}

impl AnalyticReport {
    pub fn compute(model: &ValidatedModel) -> Result<Self, ModelError> {
        let mut tiers = Vec::with_capacity(model.tier_count());
        for m in 0..model.tier_count() {
            let nu0 = void_probability(model, m);
            let r_l = licensed_rate_bound(model, m)?;
            let r_u = unlicensed_rate_bound(model, m)?;
            let link = model.raw().bandwidth_licensed * r_l + model.raw().bandwidth_unlicensed * r_u;
            let theta = association_probability(model, m);
            let per_user = (1.0 - nu0) * model.tier(m).intensity
                / (model.user_intensity() * theta)
                * link;
            tiers.push(TierReport {
                tier: m,
                association_probability: theta,
                void_probability: nu0,
                nonvoid_probability: 1.0 - nu0,
                mean_cell_load: mean_cell_load(model, m),
                qualification_probability: if model.derived(m).contends {
                    model.derived(m).xi
                } else {
                    0.0
                },
                channel_access_probability: channel_access_probability(model, m)?,
                rate_licensed: r_l,
                rate_unlicensed: r_u,
                link_throughput: link,
                per_user_throughput: per_user,
            });
        }
        let network_throughput = per_user_network_throughput(model)?;
        Ok(Self {
            tiers,
            network_throughput,
        })
    }

    pub const CSV_HEADER: &'static str = "tier,theta,nu0,q0,mean_load,xi,rho,\
        rate_licensed_bps_hz,rate_unlicensed_bps_hz,link_throughput_bps,per_user_throughput_bps";

    /// Flat CSV: one row per tier plus one `network` row carrying the
    /// per-user network throughput in the last column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for t in &self.tiers {
            out.push_str(&format!(
                "{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}\n",
                t.tier,
                t.association_probability,
                t.void_probability,
                t.nonvoid_probability,
                t.mean_cell_load,
                t.qualification_probability,
                t.channel_access_probability,
                t.rate_licensed,
                t.rate_unlicensed,
                t.link_throughput,
                t.per_user_throughput,
            ));
        }
        out.push_str(&format!("network,,,,,,,,,,{:.10e}\n", self.network_throughput));
        out
    }
}
