//! Bundled network scenarios.

use crate::model::{
    Backoff, ChannelModel, NetworkModel, ThresholdGating, TierSpec, WeightModel,
};

/// The 4-tier LTE + WiFi benchmark: macrocells (licensed only), picocells,
/// femtocells, and WiFi APs sharing one unlicensed channel.
///
/// Tiers 1-3 use biased mean-strongest association W = b P H^(s); the WiFi
/// tier uses the unbiased form W = P H^(s). Channels are Rayleigh fading
/// times 3 dB log-normal shadowing in both bands. `inverse_bias` is b^{-1}
/// applied to the first three tiers.
pub fn lte_wifi_four_tier(inverse_bias: f64) -> NetworkModel {
    let channel = ChannelModel::ProductExponentialLogNormal {
        mean: 1.0,
        shadowing_std_db: 3.0,
    };
    let bias = 1.0 / inverse_bias;
    let tier = |intensity: f64, power: f64, weight: WeightModel, backoff: Backoff| TierSpec {
        intensity,
        power,
        weight,
        licensed_channel: channel.clone(),
        unlicensed_channel: channel.clone(),
        max_backoff: backoff,
        sensing_area: 900.0 * std::f64::consts::PI,
        csma_threshold_enabled: true,
    };
    NetworkModel {
        tiers: vec![
            // Macrocells: licensed spectrum only.
            {
                let mut t = tier(
                    5e-6,
                    20.0,
                    WeightModel::BiasedPowerShadowing { bias },
                    Backoff::Unlimited,
                );
                t.csma_threshold_enabled = false;
                t
            },
            // Picocells.
            tier(
                5e-5,
                1.0,
                WeightModel::BiasedPowerShadowing { bias },
                Backoff::Slots(2.0),
            ),
            // Femtocells.
            tier(
                2.5e-4,
                0.2,
                WeightModel::BiasedPowerShadowing { bias },
                Backoff::Slots(2.0),
            ),
            // WiFi: unlicensed only, unbiased mean-strongest association.
            tier(
                5e-4,
                0.1,
                WeightModel::BiasedPowerShadowing { bias: 1.0 },
                Backoff::Slots(1.0),
            ),
        ],
        user_intensity: 5e-4,
        pathloss_exponent: 4.0,
        csma_threshold: 4.481,
        bandwidth_licensed: 1.0e8,
        bandwidth_unlicensed: 1.6e8,
        sensing_overlap: None,
        threshold_gating: ThresholdGating::FullGain,
    }
}
