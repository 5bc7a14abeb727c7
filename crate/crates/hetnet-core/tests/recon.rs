// Temporary numeric reconnaissance (deleted before finalization).
use hetnet_core::analytics::*;
use hetnet_core::model::{validate, ThresholdGating};
use hetnet_core::scenarios::lte_wifi_four_tier;

#[test]
#[ignore]
fn recon_table1() {
    for (label, enable, gating, delta) in [
        ("xi=1 (threshold off)", false, ThresholdGating::FullGain, 4.481),
        ("full gain, delta=4.481", true, ThresholdGating::FullGain, 4.481),
        ("fading only, delta=4.481", true, ThresholdGating::FadingOnly, 4.481),
    ] {
        println!("=== {label} ===");
        for ib in [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 16.0, 64.0] {
            let mut raw = lte_wifi_four_tier(ib);
            raw.threshold_gating = gating;
            raw.csma_threshold = delta;
            for t in raw.tiers.iter_mut() {
                t.csma_threshold_enabled = enable && t.max_backoff.contends();
            }
            let m = validate(raw).unwrap();
            let rep = AnalyticReport::compute(&m).unwrap();
            let c: Vec<f64> = rep.tiers.iter().map(|t| t.per_user_throughput / 1e6).collect();
            let rho: Vec<f64> = rep.tiers.iter().map(|t| t.channel_access_probability).collect();
            let q: Vec<f64> = rep.tiers.iter().map(|t| t.nonvoid_probability).collect();
            println!(
                "b^-1={ib:6.1}  xi={:.4}  c=[{:8.1} {:8.1} {:8.1} {:8.1}] Mbps  net={:8.1} Mbps  rho=[{:.3} {:.3} {:.3} {:.3}]  q=[{:.3} {:.3} {:.3} {:.3}]  RL={:.3} RU2={:.3} RU4={:.3}",
                m.derived(3).xi,
                c[0], c[1], c[2], c[3],
                rep.network_throughput / 1e6,
                rho[0], rho[1], rho[2], rho[3],
                q[0], q[1], q[2], q[3],
                rep.tiers[0].rate_licensed,
                rep.tiers[1].rate_unlicensed,
                rep.tiers[3].rate_unlicensed,
            );
        }
    }
}

#[test]
#[ignore]
fn recon_fine_curve() {
    // Fine sweep of the network throughput on the common-bias ray plus the
    // feasible-start region for the decentralized run (full-gain delta=4.481).
    println!("--- network throughput fine grid ---");
    let mut best = (0.0, 0.0);
    for i in 0..=60 {
        let ib = 1.0 + 7.0 * i as f64 / 60.0;
        let m = validate(lte_wifi_four_tier(ib)).unwrap();
        let net = per_user_network_throughput(&m).unwrap() / 1e6;
        if net > best.1 {
            best = (ib, net);
        }
        if i % 5 == 0 {
            println!("b^-1={ib:5.2}  net={net:9.3} Mbps");
        }
    }
    println!("argmax b^-1 = {:.3}, value = {:.3}", best.0, best.1);

    println!("--- c4 at LTE-loaded starts ---");
    for ib in [0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.5, 0.75, 1.0] {
        let m = validate(lte_wifi_four_tier(ib)).unwrap();
        let rep = AnalyticReport::compute(&m).unwrap();
        let c: Vec<f64> = rep.tiers.iter().map(|t| t.per_user_throughput / 1e6).collect();
        println!(
            "b^-1={ib:6.3}  c=[{:9.1} {:9.1} {:9.1} {:9.1}] Mbps  net={:9.2}",
            c[0], c[1], c[2], c[3], rep.network_throughput / 1e6
        );
    }

    println!("--- off-ray probes near the ray max ---");
    let base = validate(lte_wifi_four_tier(3.0)).unwrap();
    let omegas = base.omegas();
    println!("omegas at b^-1=3: {omegas:?}");
    for (label, scale) in [
        ("ray", [1.0, 1.0, 1.0]),
        ("tier1 x2", [2.0, 1.0, 1.0]),
        ("tier1 /2", [0.5, 1.0, 1.0]),
        ("tier2 x1.3", [1.0, 1.3, 1.0]),
        ("tier2 /1.3", [1.0, 1.0 / 1.3, 1.0]),
        ("tier3 x1.3", [1.0, 1.0, 1.3]),
        ("tier3 /1.3", [1.0, 1.0, 1.0 / 1.3]),
    ] {
        let mut s = vec![1.0; 4];
        for k in 0..3 {
            // omega scales as weight^(2/alpha) = sqrt(weight) at alpha=4.
            s[k] = (scale[k] as f64).powi(2);
        }
        let m = base.with_weight_scales(&s).unwrap();
        let net = per_user_network_throughput(&m).unwrap() / 1e6;
        println!("{label:12} net={net:9.3} Mbps");
    }
}

#[test]
#[ignore]
fn recon_worlds() {
    // Candidate delta interpretations: linear, dB, and tail-targeted.
    for (label, delta) in [
        ("A linear 4.481", 4.481),
        ("B dB->linear 2.805", 10f64.powf(0.4481)),
        ("D tail 0.12 (delta=2.12)", 2.12),
        ("D2 tail ~0.10 (delta=2.35)", 2.35),
    ] {
        let probe = validate(lte_wifi_four_tier(1.0)).unwrap();
        let xi = probe.tier(3).unlicensed_channel.tail(delta);
        println!("=== {label}: xi = {xi:.4} ===");
        let mut best = (0.0, 0.0f64);
        let mut c4_cross_feasible = f64::NAN;
        let mut prev_c4 = f64::NAN;
        for i in 0..=80 {
            let ib = 0.02 * (64.0f64 / 0.02).powf(i as f64 / 80.0); // log grid 0.02..64
            let mut raw = lte_wifi_four_tier(ib);
            raw.csma_threshold = delta;
            let m = validate(raw).unwrap();
            let rep = AnalyticReport::compute(&m).unwrap();
            let net = rep.network_throughput / 1e6;
            let c4 = rep.tiers[3].per_user_throughput / 1e6;
            if net > best.1 && ib >= 0.9 {
                best = (ib, net);
            }
            if !prev_c4.is_nan() && prev_c4 >= 100.0 && c4 < 100.0 {
                c4_cross_feasible = ib;
            }
            prev_c4 = c4;
            if [0, 20, 40, 47, 53, 58, 62, 66, 70, 75, 80].contains(&i) {
                println!("  b^-1={ib:8.3}  net={net:8.2}  c4={c4:8.2}  c=[{:7.1} {:7.1} {:7.1}]",
                    rep.tiers[0].per_user_throughput / 1e6,
                    rep.tiers[1].per_user_throughput / 1e6,
                    rep.tiers[2].per_user_throughput / 1e6);
            }
        }
        println!("  net argmax (b^-1 >= 0.9): {:.3} -> {:.2} Mbps; c4 crosses 100 at b^-1 ~= {:.3}",
            best.0, best.1, c4_cross_feasible);
    }
}

#[test]
#[ignore]
fn recon_centralized_box() {
    use hetnet_core::numerics::maximize_box;
    for (label, delta, c_min) in [
        ("A linear 4.481, c_min=10M", 4.481, 10e6),
        ("D tail 0.12, c_min=100M", 2.12, 100e6),
        ("B dB, c_min=50M", 10f64.powf(0.4481), 50e6),
    ] {
        let mut raw = lte_wifi_four_tier(1.0);
        raw.csma_threshold = delta;
        let base = validate(raw).unwrap();
        let omega0 = base.omegas();
        let dim = 3; // managed tiers, omega_4 fixed
        let lower: Vec<f64> = (0..dim).map(|_| (1.0f64 / 32.0).ln()).collect();
        let upper: Vec<f64> = (0..dim).map(|_| 32.0f64.ln()).collect();
        let to_model = |logs: &[f64]| {
            let mut om = omega0.clone();
            for d in 0..dim {
                om[d] = omega0[d] * logs[d].exp();
            }
            base.with_omegas(&om).ok()
        };
        let c4_of = |m: &hetnet_core::model::ValidatedModel| {
            per_user_link_throughput(m, 3).unwrap_or(0.0)
        };
        let feasible = |logs: &[f64]| to_model(logs).map_or(false, |m| c4_of(&m) >= c_min);
        let objective = |logs: &[f64]| {
            to_model(logs)
                .and_then(|m| per_user_network_throughput(&m).ok())
                .unwrap_or(f64::NEG_INFINITY)
        };
        let (best, val) = maximize_box(&objective, &lower, &upper, &feasible, 6, 2024).unwrap();
        // Equivalent inverse bias per managed tier: b^-1 = (omega0/omega)^{alpha/2} at base bias 1.
        let invb: Vec<f64> = (0..dim)
            .map(|d| (1.0 / best[d].exp()).powf(2.0))
            .collect();
        let geo = invb.iter().map(|v| v.ln()).sum::<f64>() / dim as f64;
        let m = to_model(&best).unwrap();
        println!(
            "{label}: value={:.3} Mbps  inv_bias={:?}  geo_mean={:.3}  c4={:.2} Mbps",
            val / 1e6,
            invb.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            geo.exp(),
            c4_of(&m) / 1e6
        );
        // Ray sweep for comparison.
        for ib in 1..=8 {
            let mut raw = lte_wifi_four_tier(ib as f64);
            raw.csma_threshold = delta;
            let mm = validate(raw).unwrap();
            let net = per_user_network_throughput(&mm).unwrap() / 1e6;
            let c4 = per_user_link_throughput(&mm, 3).unwrap() / 1e6;
            println!("   ray b^-1={ib}: net={net:.3} c4={c4:.2}");
        }
    }
}

#[test]
#[ignore]
fn recon_decentralized() {
    use hetnet_core::traffic::*;
    let model = validate(lte_wifi_four_tier(0.05)).unwrap();
    let c0: Vec<f64> = (0..4)
        .map(|m| per_user_link_throughput(&model, m).unwrap() / 1e6)
        .collect();
    println!("start c = {c0:?}");
    let t0 = std::time::Instant::now();
    let state = decentralized_run(&model, &[0, 1, 2], 100e6, DecentralizedOptions::default()).unwrap();
    println!("elapsed {:?}, iterations {}, converged {}, residual {:.2e}",
        t0.elapsed(), state.iteration, state.converged, state.residual);
    let last = state.trajectory.last().unwrap();
    println!("terminal c = {:?}", last.per_user_throughputs.iter().map(|c| c / 1e6).collect::<Vec<_>>());
    println!("terminal omegas = {:?} (start {:?})", state.omegas, validate(lte_wifi_four_tier(0.05)).unwrap().omegas());
    println!("terminal slack = {:.4e}", last.constraint_slack);
    let eq: Vec<f64> = (0..3).map(|m| equivalent_inverse_bias(&model, m, state.omegas[m])).collect();
    println!("equivalent b^-1 = {eq:?}");
    // c* trace monotone?
    let mut prev = 0.0;
    let mut mono = true;
    for s in &state.trajectory {
        if s.c_star < prev - 1e-9 { mono = false; }
        prev = s.c_star;
    }
    println!("c_star nondecreasing: {mono}, final c* = {:.3e}", prev);
}

#[test]
#[ignore]
fn recon_sim_vs_analytic() {
    use hetnet_core::simcore::run_experiment;
    let t0 = std::time::Instant::now();
    for ib in [1.0, 4.0, 8.0] {
        let model = validate(lte_wifi_four_tier(ib)).unwrap();
        let rep = run_experiment(&model, 800, 2000.0, 42, 0).unwrap();
        let ana = AnalyticReport::compute(&model).unwrap();
        println!("== b^-1 = {ib} ({} realizations, {:?}) ==", rep.n_realizations, t0.elapsed());
        for m in 0..4 {
            let e = &rep.tiers[m];
            let a = &ana.tiers[m];
            let sim_sum = e.rate_licensed + e.rate_unlicensed;
            let bound_sum = a.rate_licensed + a.rate_unlicensed;
            println!(
                "tier {m}: nu0 {:.4} vs {:.4} (d {:.4}) | rho {:.4} vs {:.4} (d {:.4}) | xi {:.4} vs {:.4} | RL+RU sim {:.4} vs bound {:.4} (ratio {:.3}) n={}",
                e.void_probability, a.void_probability, (e.void_probability - a.void_probability).abs(),
                e.channel_access_probability, a.channel_access_probability,
                (e.channel_access_probability - a.channel_access_probability).abs(),
                e.qualification_probability, a.qualification_probability,
                sim_sum, bound_sum, bound_sum / sim_sum.max(1e-12), e.n_rate_samples,
            );
        }
    }
}

#[test]
#[ignore]
fn recon_full_scale() {
    use hetnet_core::simcore::run_experiment;
    // Criterion-2 scale: 2000 realizations at b^-1 in {1,4,8}.
    for ib in [1.0, 4.0, 8.0] {
        let model = validate(lte_wifi_four_tier(ib)).unwrap();
        let rep = run_experiment(&model, 2000, 2000.0, 2, 0).unwrap();
        let ana = AnalyticReport::compute(&model).unwrap();
        print!("b^-1={ib}: void diffs:");
        for m in 0..4 {
            print!(" {:.4}", (rep.tiers[m].void_probability - ana.tiers[m].void_probability).abs());
        }
        print!("  rho diffs:");
        for m in 1..4 {
            print!(" {:.4}", (rep.tiers[m].channel_access_probability - ana.tiers[m].channel_access_probability).abs());
        }
        println!();
    }
    // Criterion-4 scale: 4000 realizations at b^-1 = 1.
    let model = validate(lte_wifi_four_tier(1.0)).unwrap();
    let t0 = std::time::Instant::now();
    let rep = run_experiment(&model, 4000, 2000.0, 4, 0).unwrap();
    println!("4000 realizations in {:?}", t0.elapsed());
    let ana = AnalyticReport::compute(&model).unwrap();
    use rand::{Rng, SeedableRng};
    for m in 1..4 {
        let (lic, unl) = &rep.rate_samples[m];
        let n = unl.len().min(if m < 3 { lic.len() } else { usize::MAX });
        let sums: Vec<f64> = (0..n)
            .map(|i| if m < 3 { lic[i] + unl[i] } else { unl[i] })
            .collect();
        let sim_mean = sums.iter().sum::<f64>() / n as f64;
        let bound = ana.tiers[m].rate_licensed + ana.tiers[m].rate_unlicensed;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut above = 0;
        let b = 1000;
        for _ in 0..b {
            let mean: f64 = (0..n).map(|_| sums[rng.gen_range(0..n)]).sum::<f64>() / n as f64;
            if mean >= bound { above += 1; }
        }
        println!(
            "tier {m}: n={n} sim={sim_mean:.4} bound={bound:.4} ratio={:.3} bootstrap_above={:.1}%",
            bound / sim_mean, 100.0 * above as f64 / b as f64
        );
    }
}
