use cdmodel::analytic::{performance_metrics, HoldingTime, QueueParams};
use cdmodel::channel::ChannelModel;
use cdmodel::oracle::{ctmc_metrics, CtmcSpec};
use cdmodel::simulator::{run_experiment, run_replication, SimConfig};
use cdmodel::timedist::{total_time_distribution, GridSpec, SemanticsMode};

/// A channel whose transmissions take about a nanosecond and never time out.
fn instant() -> ChannelModel {
    ChannelModel::linear(1e-9, 1.0).unwrap()
}

#[test]
fn instantaneous_channel_matches_two_client_chain() {
    let params = QueueParams::new(2, 1.0, 1.0, 1.0, 1.0).unwrap();
    let cfg = SimConfig::new(params, instant(), 1e6, 10, 7).unwrap();
    let e = run_experiment(&cfg).unwrap();
    let p1 = e.get("p1").unwrap();
    let bp = e.get("BP").unwrap();
    assert!((p1.mean - 2.0 / 3.0).abs() <= 3.0 * p1.width(), "{p1:?}");
    assert!((bp.mean - 4.0).abs() <= 3.0 * bp.width(), "{bp:?}");
}

#[test]
fn intervals_cover_chain_values() {
    let (k, lambda, gamma, nu) = (4, 0.3, 0.6, 1.0);
    let exact = ctmc_metrics(&CtmcSpec {
        k,
        lambda,
        gamma,
        nu,
    })
    .unwrap();
    let params = QueueParams::new(k, lambda, gamma, nu, 1.0).unwrap();
    let mut hits = [0usize; 4];
    for run in 0..30u64 {
        let cfg = SimConfig::new(params, instant(), 2e4, 10, 1000 + run).unwrap();
        let e = run_experiment(&cfg).unwrap();
        for (slot, (name, value)) in [
            ("p1", exact.p1),
            ("L", exact.l),
            ("W", exact.w),
            ("BP", exact.e_bp),
        ]
        .iter()
        .enumerate()
        {
            if e.get(name).unwrap().covers(*value) {
                hits[slot] += 1;
            }
        }
    }
    assert!(hits.iter().all(|h| *h >= 27), "coverage {hits:?} of 30");
}

#[test]
fn longer_horizon_narrows_intervals() {
    let params = QueueParams::new(4, 0.3, 0.6, 1.0, 1.0).unwrap();
    let short = run_experiment(&SimConfig::new(params, instant(), 1e4, 10, 3).unwrap()).unwrap();
    let long = run_experiment(&SimConfig::new(params, instant(), 2e4, 10, 3).unwrap()).unwrap();
    assert!(long.get("L").unwrap().width() < short.get("L").unwrap().width());
}

#[test]
fn fading_channel_agrees_with_analytic_occupancy() {
    let channel = ChannelModel::linear(1.0, 1.0).unwrap();
    let params = QueueParams::new(5, 0.2, 0.5, 1.0, 3.0).unwrap();
    let d = total_time_distribution(
        &channel,
        1.0,
        3.0,
        SemanticsMode::Occupancy,
        GridSpec::default(),
    )
    .unwrap();
    let theory = performance_metrics(&params, &d).unwrap();
    let cfg = SimConfig::new(params, channel, 1e5, 20, 17).unwrap();
    let e = run_experiment(&cfg).unwrap();
    let p = channel.success_probability(3.0).unwrap();
    let checks = [
        ("p1", theory.p1),
        ("L", theory.l),
        ("W", theory.w),
        ("LS", theory.ls),
        ("WS", theory.ws),
        ("BP", theory.e_bp),
        ("holding", d.mean()),
        ("uplink_discard_fraction", 1.0 - p),
        ("downlink_discard_fraction", 1.0 - p),
    ];
    for (name, value) in checks {
        let m = e.get(name).unwrap();
        // 99.9% band around a 95% interval keeps the check meaningful but not flaky
        assert!(
            (m.mean - value).abs() <= 1.7 * 0.5 * m.width(),
            "{name}: {m:?} vs {value}"
        );
    }
}

#[test]
fn conservation_over_a_long_run() {
    let params = QueueParams::new(6, 0.5, 0.4, 0.8, 2.0).unwrap();
    let cfg = SimConfig::new(
        params,
        ChannelModel::nonlinear(1.0, 1.0, 1.0).unwrap(),
        5e4,
        1,
        5,
    )
    .unwrap();
    let r = run_replication(&cfg, 0).unwrap();
    // the lock is held exactly while a transaction is in the pipeline
    assert!(r.locked_time <= r.window);
    assert!((r.system_area - r.orbit_area - r.locked_time).abs() <= 1e-6 * r.system_area);
    assert_eq!(
        r.seizures,
        r.completions + r.uplink_discards + r.downlink_discards
    );
}
