//! Monte Carlo ground truth: marked-PPP sampling on a toroidal window, AP
//! association, void marking, opportunistic CSMA/CA contention, SIR
//! measurement at the typical user, and empirical estimation of every
//! analytic report field.
//!
//! Realizations are independent jobs; `run_experiment` fans them out with
//! per-realization counter-seeded RNG streams and merges the summaries in
//! index order, so results are byte-identical for a given seed regardless of
//! thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ValidatedModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("window side {side} m is below the guard {guard:.1} m for this AP density")]
    WindowTooSmall { side: f64, guard: f64 },
    #[error("no APs in the realization")]
    NoAps,
    #[error("tier {tier} collected {got} conditioning events, needs at least {need}")]
    InsufficientSamples { tier: usize, got: usize, need: usize },
}

/// One access point with its marks.
#[derive(Debug, Clone)]
pub struct Ap {
    pub tier: usize,
    pub x: f64,
    pub y: f64,
    /// AP-level shadowing mark shared by the weight and both bands.
    pub shadow: f64,
    /// Realized association weight W.
    pub weight: f64,
    /// Cell load (number of associated users); V = (load > 0).
    pub load: u32,
    /// Ξ: unlicensed gain to the served user above threshold.
    pub qualified: bool,
    /// Backoff timer, only meaningful for qualified non-void contenders.
    pub timer: f64,
    /// T: won the unlicensed contention.
    pub wins: bool,
}

impl Ap {
    pub fn is_void(&self) -> bool {
        self.load == 0
    }

    /// Transmit indicator in the unlicensed band: V·Ξ·T.
    pub fn transmits_unlicensed(&self) -> bool {
        self.load > 0 && self.qualified && self.wins
    }
}

/// One sampled network on a square toroidal window.
#[derive(Debug, Clone)]
pub struct Realization {
    pub window_side: f64,
    pub aps: Vec<Ap>,
    pub users: Vec<[f64; 2]>,
    /// user index -> AP index; empty until `associate` runs.
    pub assoc: Vec<u32>,
}

fn toroidal_delta(a: f64, b: f64, side: f64) -> f64 {
    let d = (a - b).abs();
    d.min(side - d)
}

/// Squared toroidal distance.
pub fn toroidal_dist_sq(p: [f64; 2], q: [f64; 2], side: f64) -> f64 {
    let dx = toroidal_delta(p[0], q[0], side);
    let dy = toroidal_delta(p[1], q[1], side);
    dx * dx + dy * dy
}

fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean == 0.0 {
        return 0;
    }
    use rand_distr::Distribution;
    rand_distr::Poisson::new(mean)
        .expect("positive finite mean")
        .sample(rng) as u64
}

/// Window guard: the side must cover many typical cells so toroidal
/// wrap-around yields unbiased interference at the typical user.
pub fn window_guard(model: &ValidatedModel) -> f64 {
    let total: f64 = (0..model.tier_count())
        .map(|m| model.tier(m).intensity)
        .sum();
    20.0 / (std::f64::consts::PI * total).sqrt()
}

/// Sample one marked-PPP realization. Deterministic for a given seed.
pub fn sample_realization(
    model: &ValidatedModel,
    window_side: f64,
    seed: u64,
) -> Result<Realization, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_realization_rng(model, window_side, &mut rng)
}

fn sample_realization_rng<R: Rng + ?Sized>(
    model: &ValidatedModel,
    window_side: f64,
    rng: &mut R,
) -> Result<Realization, SimError> {
    let guard = window_guard(model);
    if window_side < guard {
        return Err(SimError::WindowTooSmall {
            side: window_side,
            guard,
        });
    }
    let area = window_side * window_side;
    let mut aps = Vec::new();
    for m in 0..model.tier_count() {
        let count = sample_poisson(model.tier(m).intensity * area, rng);
        for _ in 0..count {
            let x = rng.gen::<f64>() * window_side;
            let y = rng.gen::<f64>() * window_side;
            let shadow = model.sample_shadowing(m, rng);
            let weight = model.sample_weight(m, shadow);
            aps.push(Ap {
                tier: m,
                x,
                y,
                shadow,
                weight,
                load: 0,
                qualified: false,
                timer: f64::INFINITY,
                wins: false,
            });
        }
    }
    let user_count = sample_poisson(model.user_intensity() * area, rng);
    let users = (0..user_count)
        .map(|_| [rng.gen::<f64>() * window_side, rng.gen::<f64>() * window_side])
        .collect();
    Ok(Realization {
        window_side,
        aps,
        users,
        assoc: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// Spatial grid
// ---------------------------------------------------------------------------

struct Grid {
    cells: Vec<Vec<u32>>,
    n: usize,
    cell_size: f64,
}

impl Grid {
    fn build(aps: &[Ap], side: f64) -> Self {
        let density = aps.len() as f64 / (side * side);
        let n = ((side * density.sqrt()) as usize).clamp(4, 512);
        let cell_size = side / n as f64;
        let mut cells = vec![Vec::new(); n * n];
        for (i, ap) in aps.iter().enumerate() {
            let cx = ((ap.x / cell_size) as usize).min(n - 1);
            let cy = ((ap.y / cell_size) as usize).min(n - 1);
            cells[cy * n + cx].push(i as u32);
        }
        Self { cells, n, cell_size }
    }

    /// Visit AP indices in rings of grid cells around `p`, from near to far.
    /// The callback returns the current pruning radius; once even the nearest
    /// point of the next ring exceeds it, iteration stops.
    fn ring_search<F: FnMut(u32) -> f64>(&self, p: [f64; 2], mut visit: F) {
        let n = self.n as i64;
        let cx = ((p[0] / self.cell_size) as i64).clamp(0, n - 1);
        let cy = ((p[1] / self.cell_size) as i64).clamp(0, n - 1);
        let max_ring = self.n / 2 + 1;
        let mut radius = f64::INFINITY;
        for ring in 0..=max_ring {
            let ring_floor = (ring as f64 - 1.0).max(0.0) * self.cell_size;
            if ring_floor > radius {
                break;
            }
            let r = ring as i64;
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx.abs().max(dy.abs()) != r {
                        continue;
                    }
                    let gx = (cx + dx).rem_euclid(n) as usize;
                    let gy = (cy + dy).rem_euclid(n) as usize;
                    for &idx in &self.cells[gy * self.n + gx] {
                        radius = visit(idx);
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Association and contention
// ---------------------------------------------------------------------------

/// Attach every user to argmax W ||X||^{-alpha} under the toroidal metric and
/// set the void marks.
pub fn associate(r: &mut Realization, model: &ValidatedModel) -> Result<(), SimError> {
    if r.aps.is_empty() {
        return Err(SimError::NoAps);
    }
    let a = model.two_over_alpha();
    // Minimizing d^2 / W^{2/alpha} is the same argmax.
    let w_eff: Vec<f64> = r.aps.iter().map(|ap| ap.weight.powf(a)).collect();
    let w_eff_max = w_eff.iter().cloned().fold(f64::MIN, f64::max);
    let grid = Grid::build(&r.aps, r.window_side);
    let side = r.window_side;
    let mut assoc = Vec::with_capacity(r.users.len());
    for u in &r.users {
        let mut best = f64::INFINITY;
        let mut best_idx = 0u32;
        grid.ring_search(*u, |idx| {
            let ap = &r.aps[idx as usize];
            let d2 = toroidal_dist_sq(*u, [ap.x, ap.y], side);
            let score = d2 / w_eff[idx as usize];
            if score < best {
                best = score;
                best_idx = idx;
            }
            // Nothing beyond this distance can beat the current best even
            // with the largest weight in the realization.
            (best * w_eff_max).sqrt()
        });
        assoc.push(best_idx);
    }
    for ap in r.aps.iter_mut() {
        ap.load = 0;
    }
    for &idx in &assoc {
        r.aps[idx as usize].load += 1;
    }
    r.assoc = assoc;
    Ok(())
}

/// Run one opportunistic CSMA/CA contention round: threshold qualification,
/// uniform backoff timers for qualified non-void APs, and the sensing-disk
/// winner rule (no qualified non-void contender with a smaller timer inside
/// the AP's own sensing disk; ties break by AP index).
///
/// Qualification samples the AP's unlicensed gain to its typical served user
/// once per round.
pub fn contend_unlicensed<R: Rng + ?Sized>(
    r: &mut Realization,
    model: &ValidatedModel,
    rng: &mut R,
) {
    let delta = model.csma_threshold_linear();
    for ap in r.aps.iter_mut() {
        let tier = model.tier(ap.tier);
        let derived = model.derived(ap.tier);
        ap.wins = false;
        ap.timer = f64::INFINITY;
        if !derived.contends {
            ap.qualified = false;
            continue;
        }
        ap.qualified = if !tier.csma_threshold_enabled {
            true
        } else {
            let fading = tier.unlicensed_channel.fading_component().sample(rng);
            let gain = match model.raw().threshold_gating {
                crate::model::ThresholdGating::FullGain => fading * ap.shadow,
                crate::model::ThresholdGating::FadingOnly => fading,
            };
            gain > delta
        };
        if ap.qualified && ap.load > 0 {
            ap.timer = rng.gen::<f64>() * derived.tau;
        }
    }
    let grid = Grid::build(&r.aps, r.window_side);
    let side = r.window_side;
    let mut wins = vec![false; r.aps.len()];
    for (i, ap) in r.aps.iter().enumerate() {
        if !(ap.qualified && ap.load > 0) {
            continue;
        }
        let sense_r = (model.tier(ap.tier).sensing_area / std::f64::consts::PI).sqrt();
        let r2 = sense_r * sense_r;
        let mut won = true;
        grid.ring_search([ap.x, ap.y], |idx| {
            if !won {
                return 0.0; // prune: outcome already decided
            }
            let j = idx as usize;
            if j != i {
                let other = &r.aps[j];
                if other.qualified
                    && other.load > 0
                    && toroidal_dist_sq([ap.x, ap.y], [other.x, other.y], side) <= r2
                    && (other.timer, j) < (ap.timer, i)
                {
                    won = false;
                }
            }
            sense_r
        });
        wins[i] = won;
    }
    for (ap, w) in r.aps.iter_mut().zip(wins) {
        ap.wins = w;
    }
}

// ---------------------------------------------------------------------------
// Measurement
// ---------------------------------------------------------------------------

/// Everything extracted from one processed realization.
#[derive(Debug, Clone, Default)]
pub struct RealizationSummary {
    pub ap_count: Vec<u64>,
    pub void_count: Vec<u64>,
    pub qualified_count: Vec<u64>,
    pub contender_count: Vec<u64>,
    pub win_count: Vec<u64>,
    pub assoc_count: Vec<u64>,
    pub load_sum: Vec<u64>,
    pub load_histogram: Vec<Vec<u64>>,
    pub user_count: u64,
    /// Serving tier of the typical user, if any user exists.
    pub typical_tier: Option<usize>,
    /// log2(1 + SIR) in the licensed band for the typical user.
    pub licensed_sample: Option<f64>,
    /// T·Ξ gated log2(1 + SIR) in the unlicensed band.
    pub unlicensed_sample: Option<f64>,
    pub skipped_licensed: u64,
    pub skipped_unlicensed: u64,
}

const LOAD_HISTOGRAM_CAP: usize = 64;

/// Measure one realization that already went through `associate` and
/// `contend_unlicensed`.
pub fn measure_realization<R: Rng + ?Sized>(
    r: &Realization,
    model: &ValidatedModel,
    rng: &mut R,
) -> RealizationSummary {
    let m_count = model.tier_count();
    let mut s = RealizationSummary {
        ap_count: vec![0; m_count],
        void_count: vec![0; m_count],
        qualified_count: vec![0; m_count],
        contender_count: vec![0; m_count],
        win_count: vec![0; m_count],
        assoc_count: vec![0; m_count],
        load_sum: vec![0; m_count],
        load_histogram: vec![vec![0; LOAD_HISTOGRAM_CAP]; m_count],
        user_count: r.users.len() as u64,
        ..Default::default()
    };
    for ap in &r.aps {
        let m = ap.tier;
        s.ap_count[m] += 1;
        if ap.is_void() {
            s.void_count[m] += 1;
        }
        if ap.qualified {
            s.qualified_count[m] += 1;
        }
        if ap.qualified && ap.load > 0 {
            s.contender_count[m] += 1;
            if ap.wins {
                s.win_count[m] += 1;
            }
        }
        s.load_sum[m] += ap.load as u64;
        let bucket = (ap.load as usize).min(LOAD_HISTOGRAM_CAP - 1);
        s.load_histogram[m][bucket] += 1;
    }
    for &idx in &r.assoc {
        s.assoc_count[r.aps[idx as usize].tier] += 1;
    }

    if r.users.is_empty() {
        return s;
    }
    // Typical user: the user nearest the window center, preserving the
    // Poisson user field.
    let c = [r.window_side / 2.0, r.window_side / 2.0];
    let (u_idx, _) = r
        .users
        .iter()
        .enumerate()
        .map(|(i, u)| (i, toroidal_dist_sq(*u, c, r.window_side)))
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .expect("nonempty users");
    let user = r.users[u_idx];
    let serving_idx = r.assoc[u_idx] as usize;
    let serving = &r.aps[serving_idx];
    let m_serv = serving.tier;
    s.typical_tier = Some(m_serv);

    let side = r.window_side;
    let half_alpha = model.alpha() / 2.0;
    let gain_to_user = |ap: &Ap, fading: f64| -> f64 {
        let d2 = toroidal_dist_sq([ap.x, ap.y], user, side).max(1e-12);
        model.tier(ap.tier).power * fading * ap.shadow * d2.powf(-half_alpha)
    };

    // Licensed band: only when a tier-1..M-1 AP serves; interference from
    // every other non-void AP in those tiers.
    if model.uses_licensed(m_serv) {
        let mut signal = 0.0;
        let mut interference = 0.0;
        let mut any_interferer = false;
        for (i, ap) in r.aps.iter().enumerate() {
            if !model.uses_licensed(ap.tier) || ap.is_void() {
                continue;
            }
            let fading = model.tier(ap.tier).licensed_channel.fading_component().sample(rng);
            if i == serving_idx {
                signal = gain_to_user(ap, fading);
            } else {
                interference += gain_to_user(ap, fading);
                any_interferer = true;
            }
        }
        if any_interferer {
            s.licensed_sample = Some((1.0 + signal / interference).log2());
        } else {
            s.skipped_licensed += 1;
        }
    }

    // Unlicensed band: the sample is gated by the serving AP's own T·Ξ;
    // interference comes from every transmitting (V·Ξ·T) AP.
    if model.derived(m_serv).contends {
        if serving.transmits_unlicensed() {
            let mut signal = 0.0;
            let mut interference = 0.0;
            let mut any_interferer = false;
            for (i, ap) in r.aps.iter().enumerate() {
                if i == serving_idx {
                    let fading =
                        model.tier(ap.tier).unlicensed_channel.fading_component().sample(rng);
                    signal = gain_to_user(ap, fading);
                    continue;
                }
                if !ap.transmits_unlicensed() {
                    continue;
                }
                let fading = model.tier(ap.tier).unlicensed_channel.fading_component().sample(rng);
                interference += gain_to_user(ap, fading);
                any_interferer = true;
            }
            if any_interferer {
                s.unlicensed_sample = Some((1.0 + signal / interference).log2());
            } else {
                s.skipped_unlicensed += 1;
            }
        } else {
            // The serving AP stays silent this slot: a legitimate zero-rate
            // sample under the T·Ξ gating.
            s.unlicensed_sample = Some(0.0);
        }
    }
    s
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

/// Per-tier empirical estimates; mirrors the analytic report schema with
/// standard errors alongside.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmpiricalTier {
    pub tier: usize,
    pub association_probability: f64,
    pub stderr_association: f64,
    pub void_probability: f64,
    pub stderr_void: f64,
    pub nonvoid_probability: f64,
    pub mean_cell_load: f64,
    pub qualification_probability: f64,
    pub stderr_qualification: f64,
    pub channel_access_probability: f64,
    pub stderr_access: f64,
    pub rate_licensed: f64,
    pub stderr_rate_licensed: f64,
    pub rate_unlicensed: f64,
    pub stderr_rate_unlicensed: f64,
    pub link_throughput: f64,
    pub per_user_throughput: f64,
    pub n_rate_samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmpiricalReport {
    pub tiers: Vec<EmpiricalTier>,
    pub network_throughput: f64,
    pub n_realizations: usize,
    pub skipped_licensed: u64,
    pub skipped_unlicensed: u64,
    /// Raw per-realization typical-user samples, for bootstrap analyses:
    /// (licensed, unlicensed) per serving tier.
    #[serde(skip)]
    pub rate_samples: Vec<(Vec<f64>, Vec<f64>)>,
    /// Pooled cell-load histogram per tier.
    #[serde(skip)]
    pub load_histograms: Vec<Vec<u64>>,
}

fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

fn binomial_stderr(p: f64, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        (p * (1.0 - p) / n as f64).sqrt()
    }
}

/// Merge per-realization summaries into an empirical report.
///
/// `min_samples` is the minimum number of typical-user conditioning events
/// required per tier (0 disables the check).
pub fn aggregate(
    summaries: &[RealizationSummary],
    model: &ValidatedModel,
    min_samples: usize,
) -> Result<EmpiricalReport, SimError> {
    let m_count = model.tier_count();
    let mut rate_samples: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); m_count];
    let mut aps = vec![0u64; m_count];
    let mut voids = vec![0u64; m_count];
    let mut qualified = vec![0u64; m_count];
    let mut contenders = vec![0u64; m_count];
    let mut wins = vec![0u64; m_count];
    let mut assoc = vec![0u64; m_count];
    let mut loads = vec![0u64; m_count];
    let mut histograms = vec![vec![0u64; LOAD_HISTOGRAM_CAP]; m_count];
    let mut users = 0u64;
    let mut skipped_l = 0u64;
    let mut skipped_u = 0u64;
    for s in summaries {
        for m in 0..m_count {
            aps[m] += s.ap_count[m];
            voids[m] += s.void_count[m];
            qualified[m] += s.qualified_count[m];
            contenders[m] += s.contender_count[m];
            wins[m] += s.win_count[m];
            assoc[m] += s.assoc_count[m];
            loads[m] += s.load_sum[m];
            for (h, v) in histograms[m].iter_mut().zip(&s.load_histogram[m]) {
                *h += v;
            }
        }
        users += s.user_count;
        skipped_l += s.skipped_licensed;
        skipped_u += s.skipped_unlicensed;
        if let Some(t) = s.typical_tier {
            if let Some(v) = s.licensed_sample {
                rate_samples[t].0.push(v);
            }
            if let Some(v) = s.unlicensed_sample {
                rate_samples[t].1.push(v);
            }
        }
    }

    if min_samples > 0 {
        for m in 0..m_count {
            let got = if model.uses_licensed(m) {
                rate_samples[m].0.len()
            } else {
                rate_samples[m].1.len()
            };
            if got < min_samples {
                return Err(SimError::InsufficientSamples {
                    tier: m,
                    got,
                    need: min_samples,
                });
            }
        }
    }

    let mu = model.user_intensity();
    let mut tiers = Vec::with_capacity(m_count);
    let mut network = 0.0;
    for m in 0..m_count {
        let theta = if users > 0 {
            assoc[m] as f64 / users as f64
        } else {
            0.0
        };
        let nu0 = if aps[m] > 0 {
            voids[m] as f64 / aps[m] as f64
        } else {
            0.0
        };
        let xi = if aps[m] > 0 {
            qualified[m] as f64 / aps[m] as f64
        } else {
            0.0
        };
        let rho = if contenders[m] > 0 {
            wins[m] as f64 / contenders[m] as f64
        } else {
            0.0
        };
        let (r_l, se_l) = mean_and_stderr(&rate_samples[m].0);
        let (r_u, se_u) = mean_and_stderr(&rate_samples[m].1);
        let link = model.raw().bandwidth_licensed * r_l + model.raw().bandwidth_unlicensed * r_u;
        let per_user = if mu > 0.0 && theta > 0.0 {
            (1.0 - nu0) * model.tier(m).intensity / (mu * theta) * link
        } else {
            0.0
        };
        network += per_user * theta;
        tiers.push(EmpiricalTier {
            tier: m,
            association_probability: theta,
            stderr_association: binomial_stderr(theta, users),
            void_probability: nu0,
            stderr_void: binomial_stderr(nu0, aps[m]),
            nonvoid_probability: 1.0 - nu0,
            mean_cell_load: if aps[m] > 0 {
                loads[m] as f64 / aps[m] as f64
            } else {
                0.0
            },
            qualification_probability: xi,
            stderr_qualification: binomial_stderr(xi, aps[m]),
            channel_access_probability: rho,
            stderr_access: binomial_stderr(rho, contenders[m]),
            rate_licensed: r_l,
            stderr_rate_licensed: se_l,
            rate_unlicensed: r_u,
            stderr_rate_unlicensed: se_u,
            link_throughput: link,
            per_user_throughput: per_user,
            n_rate_samples: rate_samples[m].0.len().max(rate_samples[m].1.len()),
        });
    }

    Ok(EmpiricalReport {
        tiers,
        network_throughput: network,
        n_realizations: summaries.len(),
        skipped_licensed: skipped_l,
        skipped_unlicensed: skipped_u,
        rate_samples,
        load_histograms: histograms,
    })
}

impl EmpiricalReport {
    pub const CSV_HEADER: &'static str = "tier,theta,nu0,q0,mean_load,xi,rho,\
        rate_licensed_bps_hz,rate_unlicensed_bps_hz,link_throughput_bps,per_user_throughput_bps,\
        stderr_theta,stderr_nu0,stderr_xi,stderr_rho,stderr_rate_licensed,stderr_rate_unlicensed,\
        n_rate_samples,n_realizations";

    /// Flat CSV matching the analytic schema plus stderr columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for t in &self.tiers {
            out.push_str(&format!(
                "{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{},{}\n",
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
                t.stderr_association,
                t.stderr_void,
                t.stderr_qualification,
                t.stderr_access,
                t.stderr_rate_licensed,
                t.stderr_rate_unlicensed,
                t.n_rate_samples,
                self.n_realizations,
            ));
        }
        out.push_str(&format!(
            "network,,,,,,,,,,{:.10e},,,,,,,,{}\n",
            self.network_throughput, self.n_realizations
        ));
        out
    }
}

/// Build and measure one realization end to end, on the RNG stream derived
/// from the experiment seed and the realization index.
pub fn realize_and_measure(
    model: &ValidatedModel,
    window_side: f64,
    seed: u64,
    index: u64,
) -> Result<RealizationSummary, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut r = sample_realization_rng(model, window_side, &mut rng)?;
    if r.aps.is_empty() {
        return Err(SimError::NoAps);
    }
    associate(&mut r, model)?;
    contend_unlicensed(&mut r, model, &mut rng);
    Ok(measure_realization(&r, model, &mut rng))
}

/// Measure pre-built realizations (already associated and contended); gain
/// sampling uses one RNG stream per realization index.
pub fn measure_typical_user(
    realizations: &[Realization],
    model: &ValidatedModel,
    seed: u64,
    min_samples: usize,
) -> Result<EmpiricalReport, SimError> {
    let summaries: Vec<RealizationSummary> = realizations
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(u64::MAX - i as u64);
            measure_realization(r, model, &mut rng)
        })
        .collect();
    aggregate(&summaries, model, min_samples)
}

/// Run a full Monte Carlo experiment: `n` independent realizations in
/// parallel, merged into an empirical report.
pub fn run_experiment(
    model: &ValidatedModel,
    n: usize,
    window_side: f64,
    seed: u64,
    min_samples: usize,
) -> Result<EmpiricalReport, SimError> {
    let summaries: Result<Vec<_>, SimError> = (0..n as u64)
        .into_par_iter()
        .map(|i| realize_and_measure(model, window_side, seed, i))
        .collect();
    aggregate(&summaries?, model, min_samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics;
    use crate::model::{
        validate, Backoff, ChannelModel, NetworkModel, ThresholdGating, TierSpec, WeightModel,
    };

    fn one_tier_model(lambda: f64, mu: f64) -> ValidatedModel {
        validate(NetworkModel {
            tiers: vec![TierSpec {
                intensity: lambda,
                power: 1.0,
                weight: WeightModel::Constant { value: 1.0 },
                licensed_channel: ChannelModel::Exponential { mean: 1.0 },
                unlicensed_channel: ChannelModel::Exponential { mean: 1.0 },
                max_backoff: Backoff::Slots(1.0),
                sensing_area: 900.0 * std::f64::consts::PI,
                csma_threshold_enabled: false,
            }],
            user_intensity: mu,
            pathloss_exponent: 4.0,
            csma_threshold: 1.0,
            bandwidth_licensed: 1e8,
            bandwidth_unlicensed: 1.6e8,
            sensing_overlap: None,
            threshold_gating: ThresholdGating::FullGain,
        })
        .unwrap()
    }

    fn lone_ap(x: f64, y: f64) -> Ap {
        Ap {
            tier: 0,
            x,
            y,
            shadow: 1.0,
            weight: 1.0,
            load: 0,
            qualified: false,
            timer: f64::INFINITY,
            wins: false,
        }
    }

    #[test]
    fn window_guard_enforced() {
        let model = one_tier_model(1e-4, 1e-4);
        let err = sample_realization(&model, 10.0, 1).unwrap_err();
        assert!(matches!(err, SimError::WindowTooSmall { .. }));
    }

    #[test]
    fn poisson_counts_within_3_sigma() {
        let model = one_tier_model(2e-4, 1e-4);
        let window: f64 = 1200.0;
        let expect = 2e-4 * window * window;
        let n = 1000;
        let total: u64 = (0..n)
            .map(|i| sample_realization(&model, window, i).unwrap().aps.len() as u64)
            .sum();
        let mean = total as f64 / n as f64;
        let sigma = (expect / n as f64).sqrt();
        assert!(
            (mean - expect).abs() < 3.0 * sigma,
            "mean {mean} vs {expect} (sigma {sigma})"
        );
    }

    #[test]
    fn same_seed_reproduces_bit_identical() {
        let model = one_tier_model(2e-4, 3e-4);
        let a = sample_realization(&model, 1000.0, 42).unwrap();
        let b = sample_realization(&model, 1000.0, 42).unwrap();
        assert_eq!(a.users, b.users);
        assert_eq!(a.aps.len(), b.aps.len());
        for (x, y) in a.aps.iter().zip(&b.aps) {
            assert_eq!((x.x, x.y, x.shadow, x.weight), (y.x, y.y, y.shadow, y.weight));
        }
        let s1 = realize_and_measure(&model, 1000.0, 42, 3).unwrap();
        let s2 = realize_and_measure(&model, 1000.0, 42, 3).unwrap();
        assert_eq!(format!("{s1:?}"), format!("{s2:?}"));
    }

    #[test]
    fn associate_single_ap_takes_all() {
        let model = one_tier_model(1e-4, 1e-4);
        let mut r = Realization {
            window_side: 1000.0,
            aps: vec![lone_ap(200.0, 700.0)],
            users: vec![[1.0, 1.0], [999.0, 500.0], [300.0, 300.0]],
            assoc: Vec::new(),
        };
        associate(&mut r, &model).unwrap();
        assert!(r.assoc.iter().all(|&i| i == 0));
        assert_eq!(r.aps[0].load, 3);
    }

    #[test]
    fn associate_no_aps_errors() {
        let model = one_tier_model(1e-4, 1e-4);
        let mut r = Realization {
            window_side: 1000.0,
            aps: Vec::new(),
            users: vec![[1.0, 1.0]],
            assoc: Vec::new(),
        };
        assert!(matches!(associate(&mut r, &model), Err(SimError::NoAps)));
    }

    #[test]
    fn associate_constant_weights_is_nearest_ap() {
        let model = one_tier_model(2e-4, 2e-4);
        let mut r = sample_realization(&model, 800.0, 5).unwrap();
        associate(&mut r, &model).unwrap();
        for (u, &idx) in r.users.iter().zip(&r.assoc) {
            let brute = r
                .aps
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    toroidal_dist_sq(*u, [a.x, a.y], 800.0)
                        .partial_cmp(&toroidal_dist_sq(*u, [b.x, b.y], 800.0))
                        .unwrap()
                })
                .unwrap()
                .0;
            assert_eq!(idx as usize, brute);
        }
    }

    #[test]
    fn association_conserves_users() {
        let model = one_tier_model(2e-4, 5e-4);
        let mut r = sample_realization(&model, 1000.0, 11).unwrap();
        associate(&mut r, &model).unwrap();
        let total_load: u64 = r.aps.iter().map(|a| a.load as u64).sum();
        assert_eq!(total_load, r.users.len() as u64);
        let nonvoid = r.aps.iter().filter(|a| a.load > 0).count();
        assert!(nonvoid <= r.users.len());
    }

    #[test]
    fn single_qualified_ap_wins() {
        let model = one_tier_model(1e-4, 1e-4);
        let mut r = Realization {
            window_side: 1000.0,
            aps: vec![lone_ap(500.0, 500.0)],
            users: vec![[500.0, 499.0]],
            assoc: Vec::new(),
        };
        associate(&mut r, &model).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        contend_unlicensed(&mut r, &model, &mut rng);
        assert!(r.aps[0].wins);
    }

    #[test]
    fn two_mutually_sensing_aps_split_wins_evenly() {
        let model = one_tier_model(1e-4, 1e-4);
        let mut first_wins = 0usize;
        let n = 2000;
        for seed in 0..n {
            let mut r = Realization {
                window_side: 1000.0,
                aps: vec![lone_ap(500.0, 500.0), lone_ap(510.0, 500.0)],
                users: vec![[498.0, 500.0], [512.0, 500.0]],
                assoc: Vec::new(),
            };
            associate(&mut r, &model).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            contend_unlicensed(&mut r, &model, &mut rng);
            let wins: Vec<bool> = r.aps.iter().map(|a| a.wins).collect();
            assert_eq!(wins.iter().filter(|w| **w).count(), 1, "exactly one winner");
            if wins[0] {
                first_wins += 1;
            }
        }
        let p = first_wins as f64 / n as f64;
        let sigma = (0.25 / n as f64).sqrt();
        assert!((p - 0.5).abs() < 3.0 * sigma, "win share {p}");
    }

    #[test]
    fn hard_core_property_holds() {
        let model = one_tier_model(3e-4, 6e-4);
        for seed in 0..20 {
            let mut r = sample_realization(&model, 900.0, seed).unwrap();
            associate(&mut r, &model).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            contend_unlicensed(&mut r, &model, &mut rng);
            let sense_r2 = model.tier(0).sensing_area / std::f64::consts::PI;
            let winners: Vec<&Ap> = r.aps.iter().filter(|a| a.wins).collect();
            for (i, a) in winners.iter().enumerate() {
                for b in winners.iter().skip(i + 1) {
                    let d2 = toroidal_dist_sq([a.x, a.y], [b.x, b.y], r.window_side);
                    assert!(
                        d2 > sense_r2,
                        "two winners within the sensing radius: d = {}",
                        d2.sqrt()
                    );
                }
            }
        }
    }

    #[test]
    fn empirical_association_matches_analytic() {
        let raw = NetworkModel {
            tiers: vec![
                TierSpec {
                    intensity: 1e-4,
                    power: 4.0,
                    weight: WeightModel::Constant { value: 4.0 },
                    licensed_channel: ChannelModel::Exponential { mean: 1.0 },
                    unlicensed_channel: ChannelModel::Exponential { mean: 1.0 },
                    max_backoff: Backoff::Slots(2.0),
                    sensing_area: 900.0 * std::f64::consts::PI,
                    csma_threshold_enabled: false,
                },
                TierSpec {
                    intensity: 4e-4,
                    power: 1.0,
                    weight: WeightModel::Constant { value: 1.0 },
                    licensed_channel: ChannelModel::Exponential { mean: 1.0 },
                    unlicensed_channel: ChannelModel::Exponential { mean: 1.0 },
                    max_backoff: Backoff::Slots(1.0),
                    sensing_area: 900.0 * std::f64::consts::PI,
                    csma_threshold_enabled: false,
                },
            ],
            user_intensity: 4e-4,
            pathloss_exponent: 4.0,
            csma_threshold: 1.0,
            bandwidth_licensed: 1e8,
            bandwidth_unlicensed: 1.6e8,
            sensing_overlap: None,
            threshold_gating: ThresholdGating::FullGain,
        };
        let model = validate(raw).unwrap();
        let report = run_experiment(&model, 60, 1000.0, 99, 0).unwrap();
        for m in 0..2 {
            let analytic = analytics::association_probability(&model, m);
            let emp = report.tiers[m].association_probability;
            let se = report.tiers[m].stderr_association.max(1e-6);
            assert!(
                (emp - analytic).abs() < 3.0 * se + 0.01,
                "tier {m}: {emp} vs {analytic} (se {se})"
            );
        }
    }

    #[test]
    fn empirical_void_fraction_matches_analytic() {
        let model = one_tier_model(2e-4, 2e-4);
        let report = run_experiment(&model, 80, 1000.0, 17, 0).unwrap();
        let analytic = analytics::void_probability(&model, 0);
        let emp = report.tiers[0].void_probability;
        assert!(
            (emp - analytic).abs() < 0.02,
            "void fraction {emp} vs analytic {analytic}"
        );
    }

    #[test]
    fn raising_threshold_never_raises_transmit_fraction() {
        // Coupled seeds; the per-AP transmit fraction (V·Ξ·T) must be
        // nonincreasing in delta.
        let mut fractions = Vec::new();
        for delta_db in [-10.0, 0.0, 4.0, 8.0] {
            let mut raw = one_tier_model(3e-4, 6e-4).raw().clone();
            raw.tiers[0].csma_threshold_enabled = true;
            raw.csma_threshold = delta_db;
            let model = validate(raw).unwrap();
            let mut transmitting = 0u64;
            let mut total = 0u64;
            for seed in 0..150 {
                let mut r = sample_realization(&model, 700.0, seed).unwrap();
                associate(&mut r, &model).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
                contend_unlicensed(&mut r, &model, &mut rng);
                transmitting += r.aps.iter().filter(|a| a.transmits_unlicensed()).count() as u64;
                total += r.aps.len() as u64;
            }
            fractions.push(transmitting as f64 / total as f64);
        }
        for w in fractions.windows(2) {
            assert!(
                w[1] <= w[0] + 0.005,
                "transmit fraction increased with delta: {fractions:?}"
            );
        }
    }

    #[test]
    fn insufficient_samples_reported() {
        let model = one_tier_model(1e-4, 1e-4);
        let err = run_experiment(&model, 3, 1200.0, 5, 100).unwrap_err();
        assert!(matches!(err, SimError::InsufficientSamples { .. }));
    }
}
