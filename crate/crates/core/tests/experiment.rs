use yamabe_core::experiment::output::{emit_run_outputs, read_csv};
use yamabe_core::experiment::{run_experiment, run_sequence_experiment, ExperimentConfig};
use yamabe_core::{NullSink, CSV_HEADER};

fn small_sequence(base_seed: u64, deltas: Vec<f64>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.grid.m = 16;
    cfg.flow.t_max = 0.05;
    cfg.flow.record_every = 20;
    cfg.sequence.count = deltas.len();
    cfg.sequence.base_seed = base_seed;
    cfg.sequence.deltas = Some(deltas);
    cfg
}

#[test]
fn members_are_calibrated_and_audited() {
    let result = run_sequence_experiment(&small_sequence(4, vec![0.5, 0.25, 0.125])).unwrap();
    assert_eq!(result.members.len(), 3);
    for (i, m) in result.members.iter().enumerate() {
        assert_eq!(m.index, i + 1);
        assert!(m.initial_min_curvature <= -0.99 * m.delta && m.initial_min_curvature >= -1.01 * m.delta);
        assert!(m.initial_audit.passed, "{:?}", m.initial_audit);
        assert!(m.final_flat_distance < m.initial_flat_distance);
    }
    assert!(result.summary.calibration_ok && result.summary.audits_ok);
}

#[test]
fn sequences_are_reproducible() {
    let cfg = small_sequence(2, vec![0.5, 0.2]);
    let a = run_sequence_experiment(&cfg).unwrap();
    let b = run_sequence_experiment(&cfg).unwrap();
    for (x, y) in a.members.iter().zip(&b.members) {
        assert_eq!(x.amplitude.to_bits(), y.amplitude.to_bits());
        assert_eq!(x.trajectory.records.len(), y.trajectory.records.len());
        for (r, s) in x.trajectory.records.iter().zip(&y.trajectory.records) {
            assert_eq!(r.values().map(f64::to_bits), s.values().map(f64::to_bits));
        }
    }
}

#[test]
fn equal_deltas_give_exchangeable_members() {
    let finals: Vec<f64> = (10..20u64)
        .map(|seed| {
            let result = run_sequence_experiment(&small_sequence(seed, vec![0.25])).unwrap();
            result.members[0].final_flat_distance
        })
        .collect();
    let count = finals.len() as f64;
    let mean = finals.iter().sum::<f64>() / count;
    let sd = (finals.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (count - 1.0)).sqrt();
    let widest = finals.iter().map(|f| (f - mean).abs() / mean).fold(0.0, f64::max);
    eprintln!("final flat distances {finals:?}: cv {:.3}, widest {widest:.3}", sd / mean);
    assert!(sd / mean < 0.2, "{finals:?}");
}

#[test]
fn single_run_writes_consistent_outputs() {
    let mut cfg = ExperimentConfig::default();
    cfg.grid.m = 8;
    cfg.flow.t_max = 0.01;
    cfg.output.snapshot = true;
    let outcome = run_experiment(&cfg, &mut NullSink).unwrap();
    assert!(outcome.error.is_none());
    assert!(outcome.summary.initial_audit.as_ref().is_some_and(|a| a.item("volume").is_some()));
    let dir = tempfile::tempdir().unwrap();
    emit_run_outputs(dir.path(), &outcome).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
    let rows = read_csv(&dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(rows.len(), outcome.trajectory.records.len());
    assert!(dir.path().join("summary.json").exists());
    assert!(dir.path().join("final_u.bin").exists());
}
