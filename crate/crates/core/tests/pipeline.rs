use std::fs;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rtt_ranging::estimation::{batch_stats, calibrate_offset, clean_rtt, estimate_distance, CleaningPolicy};
use rtt_ranging::node_sim::{ClockModel, DataRate, Frequency, Modulation, Node, RfSettings};
use rtt_ranging::ranging_protocol::{corrected_rtt, run_campaign, CampaignCommand, Channel, ProtocolConfig};
use rtt_ranging::rf_channel::Medium;
use rtt_ranging::scenario::{
    run_batch_study, run_scenario, simulate, Bench, CampaignConfig, CellSpec, OneOrMany, ScenarioKind,
};

fn cleaned(settings: RfSettings, distance: f64, n: usize, seed: u64) -> Vec<f64> {
    let spec = CellSpec::samples(settings, Channel::cable_at(distance, 60.0), n, 1000);
    let data = simulate(&Bench::default(), &spec, seed).unwrap();
    clean_rtt(&data.corrected, &CleaningPolicy::default())
        .unwrap()
        .values
        .into_iter()
        .map(|v| v as f64)
        .collect()
}

#[test]
fn calibrated_pipeline_recovers_cable_lengths() {
    let s = RfSettings::reference();
    let model = calibrate_offset(&cleaned(s, 2.0, 20_000, 1), 2.0, &Medium::coax(), &ClockModel::default()).unwrap();
    for (i, d) in [5.0, 13.0, 30.0].into_iter().enumerate() {
        let est = estimate_distance(&cleaned(s, d, 5000, 10 + i as u64), &model, 60.0).unwrap();
        assert!((est.distance - d).abs() < 4.0 * est.sigma + 0.2, "{d} m -> {est:?}");
    }
}

#[test]
fn gfsk_scatter_is_twice_fsk_through_the_pipeline() {
    for rate in [DataRate::Kbps250, DataRate::Kbps38_4] {
        let sigma = |m| {
            let v = cleaned(RfSettings::new(Frequency::Mhz868, m, rate), 18.0, 20_000, 7);
            batch_stats(&v, 1).unwrap().std_dev
        };
        let r = sigma(Modulation::Gfsk2) / sigma(Modulation::Fsk2);
        assert!((r - 2.0).abs() < 0.2, "{rate:?}: {r}");
    }
}

#[test]
fn batch_scatter_shrinks_with_batch_size() {
    let cfg = CampaignConfig::preset(ScenarioKind::BatchSizeStudy, 3);
    let study = run_batch_study(&cfg).unwrap();
    assert_eq!(study.rows.len(), RfSettings::table_rows().len());
    for row in &study.rows {
        let s: Vec<f64> = row.cells.iter().map(|c| c.1).collect();
        assert!(s.first() > s.last(), "{}", row.settings);
    }
}

#[test]
fn counter_wrap_mid_campaign_is_transparent() {
    let ch = Channel::cable_at(18.0, 60.0);
    let run = |start: Option<u32>| {
        let mut m = Node::master(1);
        if let Some(v) = start {
            m = m.with_counter_value(v);
        }
        let mut s = Node::slave(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cmd = CampaignCommand { count: 500, settings: RfSettings::reference() };
        run_campaign(&cmd, &mut m, &mut s, &ch, &ProtocolConfig::default(), &mut rng).unwrap().records
    };
    let plain: Vec<i64> = run(None).iter().map(corrected_rtt).collect();
    let wrapped = run(Some(u32::MAX - 5_000_000));
    assert!(wrapped.windows(2).any(|w| w[1].t0 < w[0].t0));
    assert_eq!(plain, wrapped.iter().map(corrected_rtt).collect::<Vec<_>>());
}

#[test]
fn campaign_outputs_are_byte_identical_for_a_seed() {
    let mut cfg = CampaignConfig::preset(ScenarioKind::DistanceSweep, 42);
    cfg.scenario = OneOrMany::Many(vec![ScenarioKind::DistanceSweep, ScenarioKind::AttenuationSweep]);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_scenario(&cfg, a.path()).unwrap();
    run_scenario(&cfg, b.path()).unwrap();
    assert!(ra.errors.is_empty());
    assert_eq!(ra.files.len(), 2);
    for f in &ra.files {
        let name = f.file_name().unwrap();
        assert_eq!(fs::read(f).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name:?}");
    }
    cfg.seed = 43;
    let c = tempfile::tempdir().unwrap();
    run_scenario(&cfg, c.path()).unwrap();
    assert_ne!(fs::read(&ra.files[0]).unwrap(), fs::read(c.path().join("distance_sweep.csv")).unwrap());
}

#[test]
fn several_settings_get_their_own_files() {
    let mut cfg = CampaignConfig::preset(ScenarioKind::AttenuationSweep, 5);
    cfg.settings = Some(vec![
        RfSettings::reference(),
        RfSettings::new(Frequency::Mhz915, Modulation::Gfsk2, DataRate::Kbps250),
    ]);
    let dir = tempfile::tempdir().unwrap();
    let report = run_scenario(&cfg, dir.path()).unwrap();
    assert!(report.errors.is_empty());
    assert_eq!(report.files.len(), 2);
    assert_ne!(report.files[0], report.files[1]);
}

#[test]
fn config_round_trips_and_rejects_unknown_keys() {
    let mut cfg = CampaignConfig::preset(ScenarioKind::Trilateration, 9);
    cfg.full_scale = true;
    assert_eq!(CampaignConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    let bad = format!("{}\nfrobnicate = 1\n", cfg.to_toml());
    assert!(CampaignConfig::from_toml(&bad).is_err());
    assert!(CampaignConfig::from_toml("seed = 1\nscenario = \"warp_drive\"\n").is_err());
    let many = CampaignConfig::from_toml("seed = 2\nscenarios = [\"distance_sweep\", \"trilateration\"]\n").unwrap();
    assert_eq!(many.scenarios(), vec![ScenarioKind::DistanceSweep, ScenarioKind::Trilateration]);
}
