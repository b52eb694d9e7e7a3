//! Oracle cases: each compares a library routine with an independently
//! written reference computation. Run by the `oracles` target and, as one
//! criterion, by the acceptance target.

use std::fs;
use std::process::Command;

use rand::Rng;
use rand_distr::StandardNormal;

use scwmmse::config::{PathLossConfig, SimConfig};
use scwmmse::harness::{
    self, confidence_interval, per_link_throughput, run_scenario, write_outputs, Algorithm,
    CiLevel, Scenario, ScenarioKind,
};
use scwmmse::latentnet::{observe_interference, LatentPolicy};
use scwmmse::netgen::{
    self, GainMatrix, LinkBudget, NetworkInstance, PathLossParams, TopologyParams,
};
use scwmmse::rates::{link_rate, mse_term, reformulated_objective, weighted_sum_rate};
use scwmmse::rng;
use scwmmse::sc_wmmse::{sc_wmmse_iterate, EpsilonSchedule, ScStreams};
use scwmmse::synthctl::{
    collect_panel_logged, fit_conv, fit_free, infer, project_simplex, PanelData, ScEstimator,
    ScVariant, SolverOptions,
};
use scwmmse::wmmse::{
    init_state, update_u, update_v, update_w, wmmse_iterate, wmmse_iterate_traced, EtaMode,
    WmmseState,
};

use super::{
    convex_min, random_net, random_panel, residual, rng as test_rng, simplex_grid_best, split,
};

fn no_latent(
    net: &NetworkInstance,
) -> impl FnMut(&[f64]) -> scwmmse::rates::InterferenceObservation + '_ {
    move |p| observe_interference(net, p, &[])
}

// ---------------------------------------------------------------- network

pub fn path_loss_is_nondecreasing_on_a_dense_grid() {
    let params = PathLossParams::from_config(&PathLossConfig::default(), 60.0).deterministic();
    let mut r = rng::stream(0, 0);
    let mut last = f64::NEG_INFINITY;
    for i in 0..1000 {
        let d = 0.5 + i as f64 * (600.0 - 0.5) / 999.0;
        let pl = netgen::path_loss_db(d, &params, &mut r).unwrap();
        assert!(pl >= last, "path loss decreased at d = {d}: {pl} < {last}");
        last = pl;
    }
}

/// Independent dual-slope formula.
fn reference_nlos_db(d: f64, p: &PathLossParams) -> f64 {
    let near = d.min(p.breakpoint_distance);
    let far = (d / p.breakpoint_distance).max(1.0);
    p.intercept_db
        + 10.0 * p.slope1_exponent * near.log10()
        + 10.0 * p.slope2_exponent * far.log10()
}

pub fn gains_match_recomputation_from_positions() {
    let cfg = SimConfig::default();
    let topo = TopologyParams::from_config(&cfg.network, 6, 3);
    let geometry = netgen::generate_topology(&topo, 42).unwrap();
    let budget = LinkBudget::from_config(&cfg.network);
    let full = PathLossParams::from_config(&cfg.path_loss, cfg.network.frequency_ghz);

    // shadowing off: closed form only
    let det = full.deterministic();
    let net = netgen::build_gains(&geometry, 6, &det, &budget, 42).unwrap();
    for j in 0..9 {
        for k in 0..9 {
            let dx = geometry.tx[j].x - geometry.rx[k].x;
            let dy = geometry.tx[j].y - geometry.rx[k].y;
            let d = (dx * dx + dy * dy).sqrt().max(cfg.network.min_distance_m);
            let g = 10f64.powf(-reference_nlos_db(d, &det) / 10.0);
            assert!((net.gain(j, k) - g).abs() <= 1e-12 * g, "gain ({j},{k})");
        }
    }

    // full model: replay the channel stream, three draws per pair
    let net = netgen::build_gains(&geometry, 6, &full, &budget, 42).unwrap();
    let mut r = rng::stream(42, rng::CHANNEL);
    for j in 0..9 {
        for k in 0..9 {
            let dx = geometry.tx[j].x - geometry.rx[k].x;
            let dy = geometry.tx[j].y - geometry.rx[k].y;
            let d = (dx * dx + dy * dy).sqrt().max(cfg.network.min_distance_m);
            let los_coin: f64 = r.random();
            let block_coin: f64 = r.random();
            let z: f64 = r.sample(StandardNormal);
            let mut db = if los_coin < (-d / full.los_decay).exp() {
                full.intercept_db
                    + 10.0 * full.los_exponent * d.log10()
                    + full.los_shadow_sigma_db * z
            } else {
                reference_nlos_db(d, &full) + full.shadow_sigma_db * z
            };
            if block_coin < full.blockage_probability {
                db += full.blockage_loss_db;
            }
            let g = 10f64.powf(-db / 10.0);
            assert!((net.gain(j, k) - g).abs() <= 1e-12 * g, "gain ({j},{k})");
        }
    }
}

// ---------------------------------------------------------------- rates

pub fn handpicked_three_link_rates() {
    let g = GainMatrix::from_rows(&[
        vec![1.0, 0.1, 0.2],
        vec![0.3, 2.0, 0.1],
        vec![0.2, 0.4, 0.5],
    ])
    .unwrap();
    let net = NetworkInstance::new(3, g, vec![0.1, 0.05, 0.2], vec![1.0; 3], vec![1.0; 3]).unwrap();
    let p = [0.5, 0.3, 1.0];
    let sinr: [f64; 3] = [
        0.5 / (0.3 * 0.3 + 0.2 * 1.0 + 0.1),
        2.0 * 0.3 / (0.1 * 0.5 + 0.4 * 1.0 + 0.05),
        0.5 * 1.0 / (0.2 * 0.5 + 0.1 * 0.3 + 0.2),
    ];
    for (k, s) in sinr.iter().enumerate() {
        let expected = (1.0 + s).ln();
        assert!((link_rate(&net, &p, &[], k) - expected).abs() < 1e-14);
    }
}

pub fn weighted_sum_rate_is_the_sum_of_link_rates() {
    let net = random_net(5, 2, 3);
    let mut r = test_rng(4);
    let p: Vec<f64> = net
        .max_power()
        .iter()
        .map(|c| r.random_range(0.0..*c))
        .collect();
    let q = [0.3, 0.7];
    let sum: f64 = (0..5)
        .map(|k| net.weights()[k] * link_rate(&net, &p, &q, k))
        .sum();
    assert!((weighted_sum_rate(&net, &p, &q) - sum).abs() <= 1e-13 * sum.abs());
}

pub fn mse_matches_expanded_quadratic() {
    for seed in 0..20 {
        let net = random_net(4, 0, seed);
        let mut r = test_rng(seed + 100);
        let s = WmmseState::from_parts(
            (0..4).map(|_| r.random_range(0.0..2.0)).collect(),
            vec![1.0; 4],
            (0..4).map(|_| r.random_range(0.0..1.0)).collect(),
        );
        for k in 0..4 {
            let eta = r.random_range(0.01..1.0);
            let total: f64 = (0..4)
                .map(|j| net.gain(j, k) * s.v[j] * s.v[j])
                .sum::<f64>()
                + eta;
            let u = s.u[k];
            let expanded = u * u * total - 2.0 * u * net.gain(k, k).sqrt() * s.v[k] + 1.0;
            assert!((mse_term(&net, &s, eta, k) - expanded).abs() < 1e-12);
        }
    }
}

pub fn exact_u_update_strictly_lowers_the_objective() {
    for seed in 0..20 {
        let net = random_net(4, 0, seed);
        let mut r = test_rng(seed + 200);
        let eta: Vec<f64> = (0..4).map(|_| r.random_range(0.05..0.5)).collect();
        let mut s = WmmseState::from_parts(
            (0..4).map(|_| r.random_range(0.0..2.0)).collect(),
            (0..4).map(|_| r.random_range(1.0..3.0)).collect(),
            (0..4).map(|_| r.random_range(0.1..0.7)).collect(),
        );
        let k = seed as usize % 4;
        let before = reformulated_objective(&net, &s, &eta);
        s.u[k] = update_u(&net, &s, eta[k], k);
        let after = reformulated_objective(&net, &s, &eta);
        assert!(after < before, "seed {seed}: {after} !< {before}");
    }
}

// ---------------------------------------------------------------- wmmse

pub fn initial_powers_respect_caps_over_many_seeds() {
    let net = random_net(6, 0, 9);
    for seed in 0..1000 {
        let s = init_state(&net, seed, no_latent(&net), EtaMode::Observed);
        for (p, cap) in s.powers().iter().zip(net.max_power()) {
            assert!(
                *p > 0.0 && *p <= *cap,
                "seed {seed}: {p} outside (0, {cap}]"
            );
        }
    }
}

pub fn u_update_is_the_one_dimensional_minimizer() {
    for seed in 0..30 {
        let net = random_net(4, 0, seed);
        let mut r = test_rng(seed + 300);
        let s = WmmseState::from_parts(
            vec![0.0; 4],
            vec![1.0; 4],
            (0..4).map(|_| r.random_range(0.05..1.0)).collect(),
        );
        let k = seed as usize % 4;
        let eta = r.random_range(0.05..1.0);
        let closed = update_u(&net, &s, eta, k);
        let numeric = convex_min(
            |u| {
                let mut t = s.clone();
                t.u[k] = u;
                mse_term(&net, &t, eta, k)
            },
            0.0,
            20.0,
        );
        assert!(
            (closed - numeric).abs() < 1e-8,
            "seed {seed}: {closed} vs {numeric}"
        );
    }
}

pub fn w_update_minimizes_weighted_mse_minus_log() {
    for seed in 0..30 {
        let net = random_net(4, 0, seed);
        let mut r = test_rng(seed + 400);
        let mut s = WmmseState::from_parts(
            vec![0.0; 4],
            vec![1.0; 4],
            (0..4).map(|_| r.random_range(0.05..1.0)).collect(),
        );
        let k = seed as usize % 4;
        let eta = r.random_range(0.05..1.0);
        s.u[k] = update_u(&net, &s, eta, k);
        let e = mse_term(&net, &s, eta, k);
        let w_closed = update_w(&net, &s, k);
        assert!((w_closed - 1.0 / e).abs() <= 1e-10 * w_closed);
        // minimize over log w so the bracket spans several decades
        let lw = convex_min(|lw: f64| lw.exp() * e - lw, -10.0, 10.0);
        assert!(
            (lw.exp() - w_closed).abs() <= 1e-8 * w_closed,
            "seed {seed}"
        );
    }
}

pub fn bisection_multiplier_matches_a_fine_grid() {
    let mut checked = 0;
    for seed in 0..40 {
        let base = random_net(3, 0, seed);
        // tight caps force the constraint to bind
        let rows: Vec<Vec<f64>> = (0..3).map(|j| base.gains().row(j).to_vec()).collect();
        let caps = vec![0.01; 3];
        let net = NetworkInstance::new(
            3,
            GainMatrix::from_rows(&rows).unwrap(),
            vec![0.1; 3],
            caps.clone(),
            base.weights().to_vec(),
        )
        .unwrap();
        let mut r = test_rng(seed + 500);
        let s = WmmseState::from_parts(
            (0..3).map(|_| r.random_range(0.5..2.0)).collect(),
            (0..3).map(|_| r.random_range(1.0..3.0)).collect(),
            vec![0.05; 3],
        );
        let k = seed as usize % 3;
        let a = net.weights();
        let num = a[k] * net.gain(k, k).sqrt() * s.u[k] * s.w[k];
        let mut den = 0.0;
        for (j, aj) in a.iter().enumerate() {
            den += aj * s.w[j] * net.gain(k, j) * s.u[j] * s.u[j];
        }
        if (num / den).powi(2) <= caps[k] {
            continue;
        }
        let upd = update_v(&net, &s, k);
        let lambda_hi = num / caps[k].sqrt() * 2.0;
        let n = 1_000_000;
        let step = lambda_hi / n as f64;
        let (mut best, mut best_err) = (0.0, f64::INFINITY);
        for i in 0..=n {
            let l = i as f64 * step;
            let err = ((num / (den + l)).powi(2) - caps[k]).abs();
            if err < best_err {
                best = l;
                best_err = err;
            }
        }
        assert!(
            (upd.lambda - best).abs() <= step,
            "seed {seed}: {} vs grid {best}",
            upd.lambda
        );
        assert!((upd.v * upd.v - caps[k]).abs() <= 1e-10 * caps[k]);
        checked += 1;
    }
    assert!(checked >= 20, "too few binding cases ({checked})");
}

pub fn objective_never_increases_at_any_block() {
    for seed in 0..5 {
        let net = random_net(6, 0, seed);
        let eta: Vec<f64> = (0..6).map(|k| net.noise_power(k)).collect();
        let mut s = init_state(&net, seed, no_latent(&net), EtaMode::Observed);
        let mut last = reformulated_objective(&net, &s, &eta);
        for _ in 0..50 {
            wmmse_iterate_traced(
                &net,
                &mut s,
                no_latent(&net),
                EtaMode::Observed,
                &mut |st, _, _| {
                    let f = reformulated_objective(&net, st, &eta);
                    assert!(f <= last + 1e-9 * last.abs(), "seed {seed}: {f} > {last}");
                    last = f;
                },
            );
        }
    }
}

pub fn single_link_reaches_full_power_when_noise_is_comparable_to_signal() {
    // Without interference the sweep maps v to v + sigma / (g v), so the cap
    // is reached in a few sweeps only when sigma / g is not small next to
    // p_max. Here sigma / g >= p_max.
    for (g, sigma) in [(1.0, 1.0), (1e-9, 2e-10), (4.0, 0.8)] {
        let net = NetworkInstance::new(
            1,
            GainMatrix::from_rows(&[vec![g]]).unwrap(),
            vec![sigma],
            vec![0.2],
            vec![1.0],
        )
        .unwrap();
        let mut s = init_state(&net, 5, no_latent(&net), EtaMode::Observed);
        for _ in 0..3 {
            wmmse_iterate(&net, &mut s, no_latent(&net), EtaMode::Observed);
        }
        assert!((s.powers()[0] - 0.2).abs() <= 1e-10 * 0.2, "g = {g}");
    }
}

pub fn single_link_amplitude_follows_the_closed_recurrence() {
    let (g, sigma, cap) = (1e-6, 1e-12, 0.2);
    let net = NetworkInstance::new(
        1,
        GainMatrix::from_rows(&[vec![g]]).unwrap(),
        vec![sigma],
        vec![cap],
        vec![1.0],
    )
    .unwrap();
    let mut s = init_state(&net, 8, no_latent(&net), EtaMode::Observed);
    let mut v = s.v[0];
    for _ in 0..10 {
        wmmse_iterate(&net, &mut s, no_latent(&net), EtaMode::Observed);
        v = (v + sigma / (g * v)).min(cap.sqrt());
        assert!((s.v[0] - v).abs() <= 1e-9 * v);
    }
}

// ---------------------------------------------------------------- synthetic control

pub fn panel_rows_match_recomputation_from_logged_draws() {
    let net = random_net(4, 3, 11);
    let policy =
        LatentPolicy::random(3, 4, 0.2, 0.1, &mut rng::stream(11, rng::POLICY_TRAIN)).unwrap();
    let (panel, log) = collect_panel_logged(&net, &policy, 50, 11).unwrap();
    for (row, draw) in log.iter().enumerate() {
        for k in 0..4 {
            let mut i_k = net.noise_power(k);
            for j in 0..4 {
                i_k += net.gain(j, k) * draw.p[j];
            }
            for i in 0..3 {
                i_k += net.gain(4 + i, k) * draw.q[i];
            }
            assert!((panel.get(row, k) - i_k).abs() <= 1e-14 * i_k);
        }
    }
}

pub fn conv_recovers_a_two_donor_mixture() {
    let mut r = test_rng(12);
    let c1: Vec<f64> = (0..40).map(|_| r.random_range(0.0..1.0)).collect();
    let c2: Vec<f64> = (0..40).map(|_| r.random_range(0.0..1.0)).collect();
    let x: Vec<f64> = c1.iter().zip(&c2).map(|(a, b)| 0.3 * a + 0.7 * b).collect();
    let rows = (0..40).map(|i| vec![x[i], c1[i], c2[i]]).collect();
    let panel = PanelData::from_rows(rows).unwrap();
    let fit = fit_conv(&panel, 0, &SolverOptions::default()).unwrap();
    assert!(fit.residual <= 1e-8, "residual {}", fit.residual);
    let (grid_res, grid_beta) = simplex_grid_best(&x, &[c1, c2], 1e-3);
    assert!((grid_beta[0] - 0.3).abs() < 1e-9 && grid_res < 1e-9);
    assert!((fit.coefficients[0] - 0.3).abs() < 1e-4);
    assert!((fit.coefficients[1] - 0.7).abs() < 1e-4);
}

pub fn free_residual_never_exceeds_conv_residual() {
    let opts = SolverOptions::default();
    for seed in 0..30 {
        let panel = random_panel(20, 2 + seed as usize % 5, seed);
        for k in 0..panel.num_links() {
            let free = fit_free(&panel, k, &opts).unwrap();
            let conv = fit_conv(&panel, k, &opts).unwrap();
            assert!(
                free.residual <= conv.residual + 1e-8,
                "seed {seed} link {k}"
            );
        }
    }
}

pub fn conv_inference_stays_within_donor_range() {
    let mut r = test_rng(13);
    let panel = random_panel(64, 6, 13);
    let est = ScEstimator::train(&panel, ScVariant::Conv, &SolverOptions::default()).unwrap();
    let mut stream = rng::stream(13, rng::DIRICHLET);
    for i in 0..10_000 {
        let mu: Vec<f64> = (0..5).map(|_| r.random_range(0.0..10.0)).collect();
        let lo = mu.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = mu.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        // trained weights and arbitrary simplex weights
        let trained = est.estimate(i % 6, &mu, &mut stream);
        let raw: Vec<f64> = (0..5).map(|_| r.random_range(-1.0..2.0)).collect();
        let arbitrary = infer(&project_simplex(&raw), &mu);
        for e in [trained, arbitrary] {
            let slack = 1e-12 * hi;
            assert!(
                e >= lo - slack && e <= hi + slack,
                "{e} outside [{lo}, {hi}]"
            );
        }
    }
}

/// Minimizes `||b - y||^2` over the 2-simplex by a grid that is repeatedly
/// refined around its best point.
fn projection_grid_oracle(y: &[f64; 3]) -> [f64; 3] {
    let dist = |a: f64, b: f64| {
        let c = 1.0 - a - b;
        (a - y[0]).powi(2) + (b - y[1]).powi(2) + (c - y[2]).powi(2)
    };
    let (mut ca, mut cb, mut half) = (0.5, 0.5, 0.5);
    while half > 1e-10 {
        let n = 40;
        let mut best = (f64::INFINITY, ca, cb);
        for i in 0..=n {
            for j in 0..=n {
                let a = (ca - half + 2.0 * half * i as f64 / n as f64).clamp(0.0, 1.0);
                let b = (cb - half + 2.0 * half * j as f64 / n as f64).clamp(0.0, 1.0 - a);
                let f = dist(a, b);
                if f < best.0 {
                    best = (f, a, b);
                }
            }
        }
        ca = best.1;
        cb = best.2;
        half /= 8.0;
    }
    [ca, cb, 1.0 - ca - cb]
}

pub fn projection_matches_grid_oracle_in_three_dimensions() {
    let mut r = test_rng(14);
    for _ in 0..200 {
        let y = [
            r.random_range(-2.0..2.0),
            r.random_range(-2.0..2.0),
            r.random_range(-2.0..2.0),
        ];
        let p = project_simplex(&y);
        let o = projection_grid_oracle(&y);
        for i in 0..3 {
            assert!((p[i] - o[i]).abs() < 1e-6, "{y:?}: {p:?} vs {o:?}");
        }
    }
}

pub fn conv_is_at_least_as_good_as_the_coarse_simplex_grid() {
    let opts = SolverOptions::default();
    for seed in 0..20 {
        let panel = random_panel(15, 3 + seed as usize % 2, 600 + seed);
        for k in 0..panel.num_links() {
            let (x, donors) = split(&panel, k);
            let fit = fit_conv(&panel, k, &opts).unwrap();
            let (grid, _) = simplex_grid_best(&x, &donors, 0.01);
            assert!(fit.residual <= grid + 1e-6);
            assert!((residual(&x, &donors, &fit.coefficients) - fit.residual).abs() < 1e-9);
        }
    }
}

// ---------------------------------------------------------------- sc-wmmse

pub fn counterfactual_count_matches_the_schedule_sum() {
    let t_max = 500;
    let schedule = EpsilonSchedule::decay(0.2, 2.0, t_max).unwrap();
    let expected: f64 = (0..t_max).map(|t| schedule.epsilon(t)).sum();
    assert!((expected - 6.7).abs() < 0.1);

    let runs = 200;
    let links = 3;
    let mut total = 0usize;
    for run in 0..runs {
        let net = random_net(links, 0, 1000 + run);
        let panel = random_panel(16, links, run);
        let est = ScEstimator::train(&panel, ScVariant::Center, &SolverOptions::default()).unwrap();
        let mut state = init_state(&net, run, no_latent(&net), EtaMode::Observed);
        let mut streams = ScStreams::new(run);
        for _ in 0..t_max {
            total += sc_wmmse_iterate(
                &net,
                &mut state,
                &est,
                no_latent(&net),
                &schedule,
                &mut streams,
            )
            .counterfactual_count();
        }
    }
    let per_link = total as f64 / (runs as usize * links) as f64;
    assert!(
        (per_link - expected).abs() <= 0.15 * expected,
        "empirical {per_link} vs expected {expected}"
    );
}

// ---------------------------------------------------------------- harness

pub fn two_sample_interval() {
    let (m, h) = confidence_interval(&[0.0, 2.0], CiLevel::P90).unwrap();
    // s = sqrt(((0-1)^2 + (2-1)^2) / 1) = sqrt(2), h = z s / sqrt(2) = z
    assert_eq!(m, 1.0);
    assert!((h - 1.6449).abs() < 1e-4);
}

/// erf by composite Simpson quadrature of `2/sqrt(pi) exp(-t^2)`.
fn erf_quadrature(x: f64) -> f64 {
    let n = 20_000;
    let h = x / n as f64;
    let f = |t: f64| (-t * t).exp();
    let mut s = f(0.0) + f(x);
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0 * 2.0 / std::f64::consts::PI.sqrt()
}

fn inverse_normal_oracle(p: f64) -> f64 {
    let cdf = |z: f64| 0.5 * (1.0 + erf_quadrature(z / std::f64::consts::SQRT_2));
    let (mut lo, mut hi) = (-10.0, 10.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn quantiles_match_an_erf_based_inverse() {
    for (level, conf) in [(CiLevel::P90, 0.90), (CiLevel::P99, 0.99)] {
        let z = inverse_normal_oracle(0.5 + conf / 2.0);
        assert!((level.z() - z).abs() < 1e-4, "{conf}: {} vs {z}", level.z());
    }
}

fn small_scenario(kind: ScenarioKind) -> Scenario {
    Scenario {
        name: "oracle_small".into(),
        algorithms: vec![
            Algorithm::WmmseOriginal,
            Algorithm::ScWmmse(ScVariant::Conv),
        ],
        known_links: 4,
        latent_train: 3,
        latent_infer: 3,
        iterations: 12,
        runs: 5,
        seed_base: 21,
        ci_level: CiLevel::P90,
        kind,
    }
}

fn read_table(path: &std::path::Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|x| x.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

pub fn mean_column_is_the_average_of_per_run_rows() {
    let cfg = SimConfig::default();
    let sc = small_scenario(ScenarioKind::Convergence);
    let outcome = run_scenario(&sc, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&outcome, &cfg, dir.path()).unwrap();
    let (head, fig) = read_table(&dir.path().join("oracle_small.csv"));
    let (rhead, runs) = read_table(&dir.path().join("oracle_small_runs.csv"));
    assert_eq!(
        head,
        ["iteration", "wmmse", "wmmse_ci", "wmmse_sc", "wmmse_sc_ci"]
    );
    assert_eq!(rhead, ["run", "iteration", "wmmse", "wmmse_sc"]);
    for row in &fig {
        let it = row[0];
        let per_run: Vec<&Vec<f64>> = runs.iter().filter(|r| r[1] == it).collect();
        assert_eq!(per_run.len(), 5);
        for (col, rcol) in [(1, 2), (3, 3)] {
            let avg = per_run.iter().map(|r| r[rcol]).sum::<f64>() / 5.0;
            assert!(
                (row[col] - avg).abs() <= 1e-12 * avg.abs(),
                "iteration {it}"
            );
        }
    }
}

pub fn throughput_matches_manual_average_of_dumped_trajectories() {
    let cfg = SimConfig::default();
    let sc = small_scenario(ScenarioKind::Convergence);
    let outcome = run_scenario(&sc, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&outcome, &cfg, dir.path()).unwrap();
    let (_, runs) = read_table(&dir.path().join("oracle_small_runs.csv"));
    for rec in &outcome.points[0].records {
        let rows: Vec<&Vec<f64>> = runs.iter().filter(|r| r[0] == rec.run as f64).collect();
        let manual = rows.iter().map(|r| r[2]).sum::<f64>() / rows.len() as f64 / 4.0;
        let lib = per_link_throughput(&rec.trajectories[0], 4);
        assert!((manual - lib).abs() <= 1e-12 * manual);
    }

    let sweep = small_scenario(ScenarioKind::Sweep { links: vec![3, 5] });
    let outcome = run_scenario(&sweep, &cfg).unwrap();
    write_outputs(&outcome, &cfg, dir.path()).unwrap();
    let (head, fig) = read_table(&dir.path().join("oracle_small.csv"));
    assert_eq!(
        head,
        [
            "links",
            "wmmse_mean",
            "wmmse_ci",
            "wmmse_sc_mean",
            "wmmse_sc_ci"
        ]
    );
    let (_, per_run) = read_table(&dir.path().join("oracle_small_runs.csv"));
    for row in &fig {
        let vals: Vec<f64> = per_run
            .iter()
            .filter(|r| r[0] == row[0])
            .map(|r| r[2])
            .collect();
        let avg = vals.iter().sum::<f64>() / vals.len() as f64;
        assert!((row[1] - avg).abs() <= 1e-12 * avg);
    }
}

// ---------------------------------------------------------------- cli

pub fn fit_sc_on_duplicated_column_gives_zero_residual() {
    let dir = tempfile::tempdir().unwrap();
    let panel_path = dir.path().join("panel.csv");
    let mut r = test_rng(15);
    let mut text = String::from("0,1,2,3,4\n");
    for _ in 0..30 {
        let row: Vec<f64> = (0..5).map(|_| r.random_range(0.1..1.0)).collect();
        let vals = [row[0], row[1], row[2], row[1], row[4]];
        text += &vals
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        text.push('\n');
    }
    fs::write(&panel_path, text).unwrap();
    let out = dir.path().join("out");
    let output = Command::new(env!("CARGO_BIN_EXE_scwmmse"))
        .args(["fit-sc", "--panel"])
        .arg(&panel_path)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success());
    let (head, rows) = read_table(&out.join("sc_weights_conv.csv"));
    assert_eq!(&head[..2], ["link", "residual"]);
    assert!(rows[3][1] <= 1e-8, "residual {}", rows[3][1]);
    assert!(rows[1][1] <= 1e-8);
    assert_eq!(harness::find_builtin("fig1_k20").unwrap().known_links, 50);
}

pub const CASES: &[(&str, fn())] = &[
    (
        "path_loss_is_nondecreasing_on_a_dense_grid",
        path_loss_is_nondecreasing_on_a_dense_grid,
    ),
    (
        "gains_match_recomputation_from_positions",
        gains_match_recomputation_from_positions,
    ),
    ("handpicked_three_link_rates", handpicked_three_link_rates),
    (
        "weighted_sum_rate_is_the_sum_of_link_rates",
        weighted_sum_rate_is_the_sum_of_link_rates,
    ),
    (
        "mse_matches_expanded_quadratic",
        mse_matches_expanded_quadratic,
    ),
    (
        "exact_u_update_strictly_lowers_the_objective",
        exact_u_update_strictly_lowers_the_objective,
    ),
    (
        "initial_powers_respect_caps_over_many_seeds",
        initial_powers_respect_caps_over_many_seeds,
    ),
    (
        "u_update_is_the_one_dimensional_minimizer",
        u_update_is_the_one_dimensional_minimizer,
    ),
    (
        "w_update_minimizes_weighted_mse_minus_log",
        w_update_minimizes_weighted_mse_minus_log,
    ),
    (
        "bisection_multiplier_matches_a_fine_grid",
        bisection_multiplier_matches_a_fine_grid,
    ),
    (
        "objective_never_increases_at_any_block",
        objective_never_increases_at_any_block,
    ),
    (
        "single_link_reaches_full_power_when_noise_is_comparable_to_signal",
        single_link_reaches_full_power_when_noise_is_comparable_to_signal,
    ),
    (
        "single_link_amplitude_follows_the_closed_recurrence",
        single_link_amplitude_follows_the_closed_recurrence,
    ),
    (
        "panel_rows_match_recomputation_from_logged_draws",
        panel_rows_match_recomputation_from_logged_draws,
    ),
    (
        "conv_recovers_a_two_donor_mixture",
        conv_recovers_a_two_donor_mixture,
    ),
    (
        "free_residual_never_exceeds_conv_residual",
        free_residual_never_exceeds_conv_residual,
    ),
    (
        "conv_inference_stays_within_donor_range",
        conv_inference_stays_within_donor_range,
    ),
    (
        "projection_matches_grid_oracle_in_three_dimensions",
        projection_matches_grid_oracle_in_three_dimensions,
    ),
    (
        "conv_is_at_least_as_good_as_the_coarse_simplex_grid",
        conv_is_at_least_as_good_as_the_coarse_simplex_grid,
    ),
    (
        "counterfactual_count_matches_the_schedule_sum",
        counterfactual_count_matches_the_schedule_sum,
    ),
    ("two_sample_interval", two_sample_interval),
    (
        "quantiles_match_an_erf_based_inverse",
        quantiles_match_an_erf_based_inverse,
    ),
    (
        "mean_column_is_the_average_of_per_run_rows",
        mean_column_is_the_average_of_per_run_rows,
    ),
    (
        "throughput_matches_manual_average_of_dumped_trajectories",
        throughput_matches_manual_average_of_dumped_trajectories,
    ),
    (
        "fit_sc_on_duplicated_column_gives_zero_residual",
        fit_sc_on_duplicated_column_gives_zero_residual,
    ),
];
