//! Domain types and validated configuration for the M-tier HetNet.
//!
//! `NetworkModel` is the raw, serializable description. `validate` turns it
//! into a `ValidatedModel` with every derived per-tier scalar cached; all
//! downstream analytics and simulation consume the validated form. Types are
//! immutable after validation and safe to share across workers.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{self, NumericsError, QuadratureSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("non-finite moment: {0}")]
    NonFiniteMoment(String),
    #[error("backoff ordering violated: {0}")]
    OrderingViolation(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Every invariant violation found during validation, reported together.
#[derive(Debug, Clone)]
pub struct ValidationErrors(pub Vec<ModelError>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model validation failed with {} violation(s):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationErrors {}

// ---------------------------------------------------------------------------
// Channel model
// ---------------------------------------------------------------------------

/// A nonnegative channel (power) gain distribution.
///
/// Log-normal parameters are given as a std in dB; the distribution is
/// normalized so that `mean()` is exactly the `mean` field. The product kind
/// is an exponential (fast fading) times a unit-mean log-normal (shadowing).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ChannelModel {
    Deterministic { value: f64 },
    Exponential { mean: f64 },
    LogNormal { mean: f64, shadowing_std_db: f64 },
    ProductExponentialLogNormal { mean: f64, shadowing_std_db: f64 },
    CustomTabulated { values: Vec<f64>, probabilities: Vec<f64> },
}

fn sigma_ln_of_db(std_db: f64) -> f64 {
    std_db * std::f64::consts::LN_10 / 20.0
}

/// Expectation over a unit-mean log-normal via Gauss-Hermite.
fn lognormal_expect<F: Fn(f64) -> f64>(sigma_ln: f64, f: F) -> f64 {
    let (nodes, weights) = numerics::gauss_hermite_48();
    let mu_ln = -0.5 * sigma_ln * sigma_ln;
    let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
    nodes
        .iter()
        .zip(weights)
        .map(|(t, w)| w * f((mu_ln + sigma_ln * std::f64::consts::SQRT_2 * t).exp()))
        .sum::<f64>()
        * inv_sqrt_pi
}

impl ChannelModel {
    pub fn mean(&self) -> f64 {
        match self {
            Self::Deterministic { value } => *value,
            Self::Exponential { mean } => *mean,
            Self::LogNormal { mean, .. } => *mean,
            Self::ProductExponentialLogNormal { mean, .. } => *mean,
            Self::CustomTabulated { values, probabilities } => values
                .iter()
                .zip(probabilities)
                .map(|(v, p)| v * p)
                .sum(),
        }
    }

    /// Laplace transform E[e^{-sH}] for s >= 0.
    pub fn laplace(&self, s: f64) -> f64 {
        match self {
            Self::Deterministic { value } => (-s * value).exp(),
            Self::Exponential { mean } => 1.0 / (1.0 + mean * s),
            Self::LogNormal { mean, shadowing_std_db } => {
                let sig = sigma_ln_of_db(*shadowing_std_db);
                lognormal_expect(sig, |y| (-s * mean * y).exp())
            }
            Self::ProductExponentialLogNormal { mean, shadowing_std_db } => {
                let sig = sigma_ln_of_db(*shadowing_std_db);
                lognormal_expect(sig, |y| 1.0 / (1.0 + mean * y * s))
            }
            Self::CustomTabulated { values, probabilities } => values
                .iter()
                .zip(probabilities)
                .map(|(v, p)| p * (-s * v).exp())
                .sum(),
        }
    }

    /// Laplace transform of the reciprocal, E[e^{-s/H}], for s >= 0.
    pub fn laplace_recip(&self, s: f64) -> f64 {
        if s == 0.0 {
            return 1.0;
        }
        match self {
            Self::Deterministic { value } => (-s / value).exp(),
            Self::Exponential { mean } => {
                // E[e^{-s/X}] for X ~ Exp(mean): 2 sqrt(s/mean) K1(2 sqrt(s/mean)).
                let r = (s / mean).sqrt();
                if r > 350.0 {
                    0.0
                } else {
                    2.0 * r * numerics::bessel_k1(2.0 * r)
                }
            }
            Self::LogNormal { mean, shadowing_std_db } => {
                let sig = sigma_ln_of_db(*shadowing_std_db);
                lognormal_expect(sig, |y| (-s / (mean * y)).exp())
            }
            Self::ProductExponentialLogNormal { mean, shadowing_std_db } => {
                let sig = sigma_ln_of_db(*shadowing_std_db);
                lognormal_expect(sig, |y| {
                    let r = (s / (mean * y)).sqrt();
                    if r > 350.0 {
                        0.0
                    } else {
                        2.0 * r * numerics::bessel_k1(2.0 * r)
                    }
                })
            }
            Self::CustomTabulated { values, probabilities } => values
                .iter()
                .zip(probabilities)
                .map(|(v, p)| if *v > 0.0 { p * (-s / v).exp() } else { 0.0 })
                .sum(),
        }
    }

    /// Fractional moment E[H^a] for a in (-1, 1).
    pub fn fractional_moment(&self, a: f64) -> Result<f64, ModelError> {
        if !(a > -1.0 && a < 1.0) {
            return Err(ModelError::Domain(format!(
                "fractional moment order must lie in (-1, 1), got {a}"
            )));
        }
        let value = match self {
            Self::Deterministic { value } => value.powf(a),
            Self::Exponential { mean } => {
                mean.powf(a) * numerics::gamma_fn(1.0 + a)?
            }
            Self::LogNormal { mean, shadowing_std_db } => {
                let sig = sigma_ln_of_db(*shadowing_std_db);
                let mu_ln = mean.ln() - 0.5 * sig * sig;
                (a * mu_ln + 0.5 * a * a * sig * sig).exp()
            }
            Self::ProductExponentialLogNormal { mean, shadowing_std_db } => {
                // mean^a E[F^a] E[Y^a] with F ~ Exp(1) and Y unit-mean
                // log-normal, where E[Y^a] = exp(a(a-1) sig^2 / 2).
                let sig = sigma_ln_of_db(*shadowing_std_db);
                mean.powf(a)
                    * numerics::gamma_fn(1.0 + a)?
                    * (0.5 * a * (a - 1.0) * sig * sig).exp()
            }
            Self::CustomTabulated { values, probabilities } => {
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probabilities) {
                    if *p == 0.0 {
                        continue;
                    }
                    if *v <= 0.0 && a < 0.0 {
                        return Err(ModelError::NonFiniteMoment(format!(
                            "tabulated atom at {v} makes E[H^{a}] infinite"
                        )));
                    }
                    acc += p * v.powf(a);
                }
                acc
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(ModelError::NonFiniteMoment(format!(
                "E[H^{a}] evaluated to {value}"
            )))
        }
    }

    /// Tail probability P[H > delta].
    pub fn tail(&self, delta: f64) -> f64 {
        if delta <= 0.0 {
            return 1.0;
        }
        match self {
            Self::Deterministic { value } => {
                if *value > delta {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Exponential { mean } => (-delta / mean).exp(),
            Self::LogNormal { mean, shadowing_std_db } => {
                let sig = sigma_ln_of_db(*shadowing_std_db);
                let mu_ln = mean.ln() - 0.5 * sig * sig;
                0.5 * numerics::erfc((delta.ln() - mu_ln) / (sig * std::f64::consts::SQRT_2))
            }
            Self::ProductExponentialLogNormal { mean, shadowing_std_db } => {
                let sig = sigma_ln_of_db(*shadowing_std_db);
                lognormal_expect(sig, |y| (-delta / (mean * y)).exp())
            }
            Self::CustomTabulated { values, probabilities } => values
                .iter()
                .zip(probabilities)
                .map(|(v, p)| if *v > delta { *p } else { 0.0 })
                .sum(),
        }
    }

    /// Draw one sample.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Deterministic { value } => *value,
            Self::Exponential { mean } => -mean * (1.0 - rng.gen::<f64>()).ln(),
            Self::LogNormal { mean, shadowing_std_db } => {
                let sig = sigma_ln_of_db(*shadowing_std_db);
                let mu_ln = mean.ln() - 0.5 * sig * sig;
                let z: f64 = rand_distr::StandardNormal.sample_from(rng);
                (mu_ln + sig * z).exp()
            }
            Self::ProductExponentialLogNormal { mean, shadowing_std_db } => {
                let sig = sigma_ln_of_db(*shadowing_std_db);
                let mu_ln = -0.5 * sig * sig;
                let z: f64 = rand_distr::StandardNormal.sample_from(rng);
                let shadow = (mu_ln + sig * z).exp();
                let fading = -(1.0 - rng.gen::<f64>()).ln();
                mean * fading * shadow
            }
            Self::CustomTabulated { values, probabilities } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probabilities) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().expect("validated tabulated model is nonempty")
            }
        }
    }

    /// The same distribution rescaled to unit mean.
    pub fn normalized(&self) -> ChannelModel {
        let m = self.mean();
        match self {
            Self::Deterministic { .. } => Self::Deterministic { value: 1.0 },
            Self::Exponential { .. } => Self::Exponential { mean: 1.0 },
            Self::LogNormal { shadowing_std_db, .. } => Self::LogNormal {
                mean: 1.0,
                shadowing_std_db: *shadowing_std_db,
            },
            Self::ProductExponentialLogNormal { shadowing_std_db, .. } => {
                Self::ProductExponentialLogNormal {
                    mean: 1.0,
                    shadowing_std_db: *shadowing_std_db,
                }
            }
            Self::CustomTabulated { values, probabilities } => Self::CustomTabulated {
                values: values.iter().map(|v| v / m).collect(),
                probabilities: probabilities.clone(),
            },
        }
    }

    /// Unit-mean fast-fading component (what is left of the gain once the
    /// AP-level mark is factored out).
    pub fn fading_component(&self) -> ChannelModel {
        match self {
            Self::Exponential { .. } | Self::ProductExponentialLogNormal { .. } => {
                Self::Exponential { mean: 1.0 }
            }
            _ => Self::Deterministic { value: 1.0 },
        }
    }

    /// Unit-mean AP-level mark component (shadowing). Tabulated gains are
    /// treated entirely as an AP mark.
    pub fn shadowing_component(&self) -> ChannelModel {
        match self {
            Self::Deterministic { .. } | Self::Exponential { .. } => {
                Self::Deterministic { value: 1.0 }
            }
            Self::LogNormal { shadowing_std_db, .. }
            | Self::ProductExponentialLogNormal { shadowing_std_db, .. } => Self::LogNormal {
                mean: 1.0,
                shadowing_std_db: *shadowing_std_db,
            },
            Self::CustomTabulated { .. } => self.normalized(),
        }
    }

    fn check(&self, what: &str) -> Vec<ModelError> {
        let mut errs = Vec::new();
        let mut bad = |msg: String| errs.push(ModelError::Domain(msg));
        match self {
            Self::Deterministic { value } => {
                if !(*value > 0.0) || !value.is_finite() {
                    bad(format!("{what}: deterministic gain must be positive, got {value}"));
                }
            }
            Self::Exponential { mean } => {
                if !(*mean > 0.0) || !mean.is_finite() {
                    bad(format!("{what}: exponential mean must be positive, got {mean}"));
                }
            }
            Self::LogNormal { mean, shadowing_std_db }
            | Self::ProductExponentialLogNormal { mean, shadowing_std_db } => {
                if !(*mean > 0.0) || !mean.is_finite() {
                    bad(format!("{what}: mean must be positive, got {mean}"));
                }
                if !(*shadowing_std_db >= 0.0) || !shadowing_std_db.is_finite() {
                    bad(format!(
                        "{what}: shadowing std must be nonnegative dB, got {shadowing_std_db}"
                    ));
                }
            }
            Self::CustomTabulated { values, probabilities } => {
                if values.is_empty() || values.len() != probabilities.len() {
                    bad(format!("{what}: tabulated model needs matching nonempty atoms"));
                } else {
                    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                        bad(format!("{what}: tabulated values must be finite and >= 0"));
                    }
                    let total: f64 = probabilities.iter().sum();
                    if probabilities.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                        bad(format!(
                            "{what}: tabulated probabilities must be nonnegative and sum to 1"
                        ));
                    }
                    if !(self.mean() > 0.0) {
                        bad(format!("{what}: tabulated mean must be positive"));
                    }
                }
            }
        }
        errs
    }
}

trait SampleFrom {
    fn sample_from<R: Rng + ?Sized>(self, rng: &mut R) -> f64;
}

impl SampleFrom for rand_distr::StandardNormal {
    fn sample_from<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        use rand_distr::Distribution;
        self.sample(rng)
    }
}

// ---------------------------------------------------------------------------
// Weight model
// ---------------------------------------------------------------------------

/// AP association weight W for one tier.
///
/// `Constant` gives biased-nearest association, `BiasedPower` is b·P_m, and
/// `BiasedPowerShadowing` is b·P_m·H^(s) with H^(s) the tier's unit-mean
/// shadowing mark (biased mean-strongest association).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WeightModel {
    Constant { value: f64 },
    BiasedPower { bias: f64 },
    BiasedPowerShadowing { bias: f64 },
}

impl WeightModel {
    pub fn bias_factor(&self) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::BiasedPower { bias } | Self::BiasedPowerShadowing { bias } => *bias,
        }
    }

    /// Multiply the bias (or constant) by `scale`, leaving the kind unchanged.
    pub fn scaled(&self, scale: f64) -> WeightModel {
        match self {
            Self::Constant { value } => Self::Constant { value: value * scale },
            Self::BiasedPower { bias } => Self::BiasedPower { bias: bias * scale },
            Self::BiasedPowerShadowing { bias } => Self::BiasedPowerShadowing { bias: bias * scale },
        }
    }

    fn uses_shadowing(&self) -> bool {
        matches!(self, Self::BiasedPowerShadowing { .. })
    }
}

// ---------------------------------------------------------------------------
// Tier and network
// ---------------------------------------------------------------------------

/// Maximum backoff window in dimensionless slot units. `Unlimited` marks a
/// tier that never contends for the unlicensed channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Backoff {
    Unlimited,
    Slots(f64),
}

impl Backoff {
    pub fn contends(&self) -> bool {
        matches!(self, Self::Slots(_))
    }
}

impl Serialize for Backoff {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Unlimited => ser.serialize_str("unlimited"),
            Self::Slots(v) => ser.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Backoff {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Value(f64),
        }
        match Raw::deserialize(de)? {
            Raw::Text(s) if s == "unlimited" => Ok(Backoff::Unlimited),
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "max_backoff must be a number or \"unlimited\", got {s:?}"
            ))),
            Raw::Value(v) => Ok(Backoff::Slots(v)),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TierSpec {
    /// λ_m, APs per m².
    pub intensity: f64,
    /// P_m, transmit power in W.
    pub power: f64,
    pub weight: WeightModel,
    pub licensed_channel: ChannelModel,
    pub unlicensed_channel: ChannelModel,
    pub max_backoff: Backoff,
    /// |S_m|, sensing region area in m².
    pub sensing_area: f64,
    /// Whether the opportunistic qualification threshold gates this tier.
    pub csma_threshold_enabled: bool,
}

/// Which gain the CSMA qualification threshold is compared against.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdGating {
    /// The full unlicensed channel gain (fading times shadowing).
    #[default]
    FullGain,
    /// Only the fast-fading component.
    FadingOnly,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NetworkModel {
    pub tiers: Vec<TierSpec>,
    /// μ, users per m².
    pub user_intensity: f64,
    /// α > 2.
    pub pathloss_exponent: f64,
    /// δ, opportunistic CSMA qualification threshold in dB; the gain is
    /// compared against 10^{δ/10}.
    pub csma_threshold: f64,
    /// B_L in Hz.
    pub bandwidth_licensed: f64,
    /// B_U in Hz.
    pub bandwidth_unlicensed: f64,
    /// A[m][k]: mean area of tier-m's sensing region covered by tier-k
    /// contention. Defaults to |S_m| for every k.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensing_overlap: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub threshold_gating: ThresholdGating,
}

impl NetworkModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("NetworkModel serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Cached per-tier derived scalars.
#[derive(Debug, Clone)]
pub struct TierDerived {
    /// w̄_m.
    pub weight_mean: f64,
    /// E[W^{2/α}].
    pub weight_moment_pos: f64,
    /// E[W^{-2/α}].
    pub weight_moment_neg: f64,
    /// ζ_m = 3.5 E[W^{2/α}] E[W^{-2/α}].
    pub zeta: f64,
    /// ξ_m: probability the unlicensed gain qualifies (1 when the threshold
    /// is disabled or the tier does not contend).
    pub xi: f64,
    /// h̄ in each band.
    pub licensed_gain_mean: f64,
    pub unlicensed_gain_mean: f64,
    /// Unit-mean residual gain Ĥ = H w̄ / (W h̄) per band.
    pub licensed_residual: ChannelModel,
    pub unlicensed_residual: ChannelModel,
    pub contends: bool,
    /// Backoff window; +∞ for non-contending tiers.
    pub tau: f64,
}

/// A `NetworkModel` that passed validation, with derived scalars cached.
#[derive(Debug, Clone)]
pub struct ValidatedModel {
    model: NetworkModel,
    derived: Vec<TierDerived>,
    two_over_alpha: f64,
}

/// ζ_m = 3.5 · E[W^{2/α}] · E[W^{-2/α}] for one tier.
pub fn zeta(tier: &TierSpec, alpha: f64) -> Result<f64, ModelError> {
    if !(alpha > 2.0) {
        return Err(ModelError::Domain(format!(
            "pathloss exponent must exceed 2, got {alpha}"
        )));
    }
    let a = 2.0 / alpha;
    let pos = weight_fractional_moment(tier, a)?;
    let neg = weight_fractional_moment(tier, -a)?;
    Ok(3.5 * pos * neg)
}

/// E[W^a] for the tier's association weight.
pub fn weight_fractional_moment(tier: &TierSpec, a: f64) -> Result<f64, ModelError> {
    let base = match &tier.weight {
        WeightModel::Constant { value } => value.powf(a),
        WeightModel::BiasedPower { bias } => (bias * tier.power).powf(a),
        WeightModel::BiasedPowerShadowing { bias } => {
            let shadow = tier_shadowing(tier)?;
            (bias * tier.power).powf(a) * shadow.fractional_moment(a)?
        }
    };
    if base.is_finite() {
        Ok(base)
    } else {
        Err(ModelError::NonFiniteMoment(format!(
            "E[W^{a}] evaluated to {base}"
        )))
    }
}

pub fn weight_mean(tier: &TierSpec) -> Result<f64, ModelError> {
    Ok(match &tier.weight {
        WeightModel::Constant { value } => *value,
        WeightModel::BiasedPower { bias } => bias * tier.power,
        WeightModel::BiasedPowerShadowing { bias } => {
            bias * tier.power * tier_shadowing(tier)?.mean()
        }
    })
}

/// The tier's AP-level shadowing mark, shared by the association weight and
/// both bands' channel gains. Requires the two bands to agree.
fn tier_shadowing(tier: &TierSpec) -> Result<ChannelModel, ModelError> {
    let lic = tier.licensed_channel.shadowing_component();
    let unl = tier.unlicensed_channel.shadowing_component();
    if lic != unl {
        return Err(ModelError::Domain(
            "licensed and unlicensed channels carry different shadowing; \
             the tier shadowing mark is ambiguous"
                .into(),
        ));
    }
    Ok(lic)
}

/// Residual unit-mean gain Ĥ = H w̄ / (W h̄) for one band of one tier.
///
/// With weights that embed the tier's shadowing the shadowing cancels exactly
/// and only the fading survives; with deterministic weights Ĥ is the
/// normalized full gain.
fn residual_gain(tier: &TierSpec, channel: &ChannelModel) -> ChannelModel {
    if tier.weight.uses_shadowing() {
        channel.fading_component()
    } else {
        channel.normalized()
    }
}

/// Validate a raw network description, caching all derived per-tier scalars.
pub fn validate(model: NetworkModel) -> Result<ValidatedModel, ValidationErrors> {
    let mut errs: Vec<ModelError> = Vec::new();
    let m_count = model.tiers.len();
    if m_count == 0 {
        errs.push(ModelError::Domain("a network needs at least one tier".into()));
        return Err(ValidationErrors(errs));
    }
    let alpha = model.pathloss_exponent;
    if !(alpha > 2.0) || !alpha.is_finite() {
        errs.push(ModelError::Domain(format!(
            "pathloss exponent must exceed 2, got {alpha}"
        )));
    }
    if !(model.user_intensity >= 0.0) || !model.user_intensity.is_finite() {
        errs.push(ModelError::Domain(format!(
            "user intensity must be >= 0, got {}",
            model.user_intensity
        )));
    }
    if !model.csma_threshold.is_finite() {
        errs.push(ModelError::Domain(format!(
            "CSMA threshold must be finite dB, got {}",
            model.csma_threshold
        )));
    }
    if !(model.bandwidth_licensed > 0.0) || !(model.bandwidth_unlicensed > 0.0) {
        errs.push(ModelError::Domain("bandwidths must be positive".into()));
    }
    if let Some(a) = &model.sensing_overlap {
        if a.len() != m_count || a.iter().any(|row| row.len() != m_count) {
            errs.push(ModelError::Domain(format!(
                "sensing_overlap must be a {m_count}x{m_count} matrix"
            )));
        } else if a.iter().flatten().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            errs.push(ModelError::Domain(
                "sensing_overlap entries must be finite and >= 0".into(),
            ));
        }
    }

    for (idx, tier) in model.tiers.iter().enumerate() {
        let tag = format!("tier {idx}");
        if !(tier.intensity > 0.0) || !tier.intensity.is_finite() {
            errs.push(ModelError::Domain(format!(
                "{tag}: intensity must be positive, got {}",
                tier.intensity
            )));
        }
        if !(tier.power > 0.0) || !tier.power.is_finite() {
            errs.push(ModelError::Domain(format!(
                "{tag}: power must be positive, got {}",
                tier.power
            )));
        }
        if !(tier.weight.bias_factor() > 0.0) {
            errs.push(ModelError::Domain(format!(
                "{tag}: weight bias must be positive"
            )));
        }
        match tier.max_backoff {
            Backoff::Slots(t) if !(t >= 0.0) || !t.is_finite() => {
                errs.push(ModelError::Domain(format!(
                    "{tag}: backoff must be >= 0 or unlimited"
                )));
            }
            Backoff::Slots(_) => {
                if !(tier.sensing_area > 0.0) || !tier.sensing_area.is_finite() {
                    errs.push(ModelError::Domain(format!(
                        "{tag}: contending tiers need a positive sensing area"
                    )));
                }
            }
            Backoff::Unlimited => {}
        }
        errs.extend(tier.licensed_channel.check(&format!("{tag} licensed channel")));
        errs.extend(tier.unlicensed_channel.check(&format!("{tag} unlicensed channel")));
        if tier.weight.uses_shadowing() {
            if let Err(e) = tier_shadowing(tier) {
                errs.push(e);
            }
        }
    }

    // Backoff ordering τ_1 >= τ_2 >= ... >= τ_M with unlimited mapped to +∞.
    let taus: Vec<f64> = model
        .tiers
        .iter()
        .map(|t| match t.max_backoff {
            Backoff::Unlimited => f64::INFINITY,
            Backoff::Slots(v) => v,
        })
        .collect();
    for w in taus.windows(2) {
        if w[0] < w[1] {
            errs.push(ModelError::OrderingViolation(format!(
                "backoffs must be nonincreasing across tiers, got {:?}",
                taus
            )));
            break;
        }
    }

    if !errs.is_empty() {
        return Err(ValidationErrors(errs));
    }

    let a = 2.0 / alpha;
    let mut derived = Vec::with_capacity(m_count);
    for tier in &model.tiers {
        let weight_mean = match weight_mean(tier) {
            Ok(v) => v,
            Err(e) => {
                errs.push(e);
                continue;
            }
        };
        let (pos, neg) = match (
            weight_fractional_moment(tier, a),
            weight_fractional_moment(tier, -a),
        ) {
            (Ok(p), Ok(n)) => (p, n),
            (p, n) => {
                if let Err(e) = p {
                    errs.push(e);
                }
                if let Err(e) = n {
                    errs.push(e);
                }
                continue;
            }
        };
        let contends = tier.max_backoff.contends();
        let delta_linear = 10f64.powf(model.csma_threshold / 10.0);
        let xi = if !contends || !tier.csma_threshold_enabled {
            1.0
        } else {
            match model.threshold_gating {
                ThresholdGating::FullGain => tier.unlicensed_channel.tail(delta_linear),
                ThresholdGating::FadingOnly => tier
                    .unlicensed_channel
                    .fading_component()
                    .tail(delta_linear),
            }
        };
        derived.push(TierDerived {
            weight_mean,
            weight_moment_pos: pos,
            weight_moment_neg: neg,
            zeta: 3.5 * pos * neg,
            xi,
            licensed_gain_mean: tier.licensed_channel.mean(),
            unlicensed_gain_mean: tier.unlicensed_channel.mean(),
            licensed_residual: residual_gain(tier, &tier.licensed_channel),
            unlicensed_residual: residual_gain(tier, &tier.unlicensed_channel),
            contends,
            tau: match tier.max_backoff {
                Backoff::Unlimited => f64::INFINITY,
                Backoff::Slots(v) => v,
            },
        });
    }
    if !errs.is_empty() {
        return Err(ValidationErrors(errs));
    }

    Ok(ValidatedModel {
        model,
        derived,
        two_over_alpha: a,
    })
}

impl ValidatedModel {
    pub fn raw(&self) -> &NetworkModel {
        &self.model
    }

    pub fn tier_count(&self) -> usize {
        self.model.tiers.len()
    }

    pub fn tier(&self, m: usize) -> &TierSpec {
        &self.model.tiers[m]
    }

    pub fn derived(&self, m: usize) -> &TierDerived {
        &self.derived[m]
    }

    pub fn alpha(&self) -> f64 {
        self.model.pathloss_exponent
    }

    pub fn two_over_alpha(&self) -> f64 {
        self.two_over_alpha
    }

    pub fn user_intensity(&self) -> f64 {
        self.model.user_intensity
    }

    /// The qualification threshold δ converted from dB to a linear gain.
    pub fn csma_threshold_linear(&self) -> f64 {
        10f64.powf(self.model.csma_threshold / 10.0)
    }

    /// True for tiers that transmit in the licensed band (all but the last).
    pub fn uses_licensed(&self, m: usize) -> bool {
        m + 1 < self.tier_count()
    }

    /// ω_m = w̄_m^{2/α}, the traffic-management coordinate.
    pub fn omega(&self, m: usize) -> f64 {
        self.derived[m].weight_mean.powf(self.two_over_alpha)
    }

    pub fn omegas(&self) -> Vec<f64> {
        (0..self.tier_count()).map(|m| self.omega(m)).collect()
    }

    /// Σ_k λ_k E[W_k^{2/α}] — the association normalizer.
    pub fn association_denominator(&self) -> f64 {
        self.model
            .tiers
            .iter()
            .zip(&self.derived)
            .map(|(t, d)| t.intensity * d.weight_moment_pos)
            .sum()
    }

    /// A[m][k], defaulting to |S_m|.
    pub fn sensing_overlap(&self, m: usize, k: usize) -> f64 {
        match &self.model.sensing_overlap {
            Some(a) => a[m][k],
            None => self.model.tiers[m].sensing_area,
        }
    }

    /// Rebuild the model with each tier's weight multiplied by `scale[m]`,
    /// revalidating so every cached scalar is consistent.
    pub fn with_weight_scales(&self, scales: &[f64]) -> Result<ValidatedModel, ValidationErrors> {
        assert_eq!(scales.len(), self.tier_count());
        let mut raw = self.model.clone();
        for (tier, s) in raw.tiers.iter_mut().zip(scales) {
            tier.weight = tier.weight.scaled(*s);
        }
        validate(raw)
    }

    /// Rebuild the model so that tier weights realize the given ω-vector
    /// (ω_m = w̄_m^{2/α}); biases scale by (ω_new/ω_old)^{α/2}.
    pub fn with_omegas(&self, omegas: &[f64]) -> Result<ValidatedModel, ValidationErrors> {
        let current = self.omegas();
        let half_alpha = self.model.pathloss_exponent / 2.0;
        let scales: Vec<f64> = omegas
            .iter()
            .zip(&current)
            .map(|(new, old)| (new / old).powf(half_alpha))
            .collect();
        self.with_weight_scales(&scales)
    }

    /// Sample the AP-level shadowing mark for tier m.
    pub fn sample_shadowing<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> f64 {
        match tier_shadowing(&self.model.tiers[m]) {
            Ok(shadow) => shadow.sample(rng),
            // Bands disagree only for deterministic-weight tiers, where the
            // mark never multiplies the weight; fall back to the unlicensed
            // band's component.
            Err(_) => self.model.tiers[m]
                .unlicensed_channel
                .shadowing_component()
                .sample(rng),
        }
    }

    /// The realized association weight of one AP given its shadowing mark.
    pub fn sample_weight(&self, m: usize, shadow_mark: f64) -> f64 {
        let tier = &self.model.tiers[m];
        match &tier.weight {
            WeightModel::Constant { value } => *value,
            WeightModel::BiasedPower { bias } => bias * tier.power,
            WeightModel::BiasedPowerShadowing { bias } => bias * tier.power * shadow_mark,
        }
    }
}

/// Default quadrature settings shared by the analytic operations.
pub fn default_quadrature() -> QuadratureSpec {
    QuadratureSpec::default()
}
