//! End-to-end experiment pipeline: presets write the documented file
//! formats and deterministic contents.

use std::fs;

use thpmimo_core::channel::{dump_rays, sample_channel};
use thpmimo_core::harness::{run_preset, Algorithm, ExperimentSpec, Preset};
use thpmimo_core::{ChannelModel, SystemConfig};

fn scratch_dir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("thpmimo_it_{}_{tag}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn fig3_preset_emits_monotone_convergence_traces() {
    let dir = scratch_dir("fig3");
    let mut spec = ExperimentSpec::preset(Preset::Fig3);
    spec.seeds = vec![0, 1];
    spec.out_dir = dir.clone();
    let report = run_preset(&spec).unwrap();
    assert!(!report.config_hash.is_empty());
    for seed in [0u64, 1] {
        let text = fs::read_to_string(dir.join(format!("fig3_trace_seed{seed}.csv"))).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "iteration,objective,p_ms,u_ms,f_ms,t_ms,w_ms"
        );
        let objectives: Vec<f64> = lines
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        assert!(objectives.len() > 2);
        for pair in objectives.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-10 * pair[0].abs(),
                "trace not monotone: {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }
    // sidecar carries the hash and the resolved spec
    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("fig3_config.json")).unwrap()).unwrap();
    assert_eq!(sidecar["config_hash"], report.config_hash.as_str());
    assert_eq!(sidecar["spec"]["preset"], "fig3");
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn fig9_preset_emits_delay_grid() {
    let dir = scratch_dir("fig9");
    let mut spec = ExperimentSpec::preset(Preset::Fig9);
    spec.seeds = vec![0, 1];
    spec.symbols = 4_000;
    spec.delays_ms = vec![0.0, 2.0];
    spec.frames = 10;
    spec.slots_per_frame = 2;
    spec.solver_max_iterations = 150;
    spec.out_dir = dir.clone();
    run_preset(&spec).unwrap();
    let text = fs::read_to_string(dir.join("fig9_delay.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "delay_ms,seed,ser_single,ser_tts,ser_fd");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4); // 2 delays × 2 seeds
    for row in rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 5);
        for v in &fields[2..] {
            let ser: f64 = v.parse().unwrap();
            assert!((0.0..=1.0).contains(&ser));
        }
    }
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn fig4_preset_includes_robustness_pairs() {
    let dir = scratch_dir("fig4");
    let mut spec = ExperimentSpec::preset(Preset::Fig4);
    spec.snr_db = vec![15.0];
    spec.seeds = vec![3];
    spec.symbols = 2_000;
    spec.algorithms = vec![Algorithm::NonlinearJoint];
    spec.out_dir = dir.clone();
    run_preset(&spec).unwrap();
    let text = fs::read_to_string(dir.join("fig4_robustness.csv")).unwrap();
    assert!(text.starts_with("snr_db,seed,ser_robust,ser_nonrobust,mse_robust,mse_nonrobust"));
    assert_eq!(text.lines().count(), 2);
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn paper_scale_smoke() {
    // full-scale dimensions with multi-stream users: 4 users × 2 streams,
    // 32 BS antennas, 8 chains
    use thpmimo_core::bcd::{self, BcdSettings};
    use thpmimo_core::harness::simulate_ser;
    use thpmimo_core::objective;
    use thpmimo_core::thp::{order_users, QamConstellation};

    let cfg = SystemConfig::paper().with_snr_db(15.0);
    let model = ChannelModel::default();
    let (_, cs) = sample_channel(&cfg, &model, 3).unwrap();
    let ordering = order_users(&cs.scaled_norms_sq(), &cfg.streams);
    let settings = BcdSettings::default().with_max_iterations(120);
    let (state, trace) = bcd::solve(&cfg, &cs, &ordering, &settings).unwrap();

    assert!((state.precoder_norm_sq() - cfg.power_budget).abs() < 1e-9 * cfg.power_budget);
    assert!(state.unit_modulus_deviation() <= 1e-12);
    for pair in trace.objective.windows(2) {
        assert!(pair[1] <= pair[0] + 1e-10 * pair[0].abs());
    }
    let est = cs.estimated();
    let mse = objective::mse(&state, &est, &cfg.noise_std, &cfg.csi_error_std).unwrap();
    assert!(mse.is_finite() && mse > 0.0);

    let qam = QamConstellation::new(cfg.qam_order).unwrap();
    let ser = simulate_ser(
        &state,
        &cs.true_channels(),
        &est,
        &cfg.noise_std,
        &qam,
        5_000,
        9,
    )
    .unwrap();
    assert!(ser.ser >= 0.0 && ser.ser <= 1.0);
}

#[test]
fn ray_dump_reloads_consistently() {
    let cfg = SystemConfig::desk();
    let model = ChannelModel::default();
    let (params, _) = sample_channel(&cfg, &model, 42).unwrap();
    let mut buf = Vec::new();
    dump_rays(&params, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    // one record per ray, fields parse as numbers
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 10);
        for v in &fields[3..] {
            v.parse::<f64>().unwrap();
        }
        rows += 1;
    }
    assert_eq!(rows, cfg.users * model.clusters * model.rays_per_cluster);
}
