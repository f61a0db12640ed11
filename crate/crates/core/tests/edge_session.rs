use std::sync::Arc;

use heartsplit_core::edge::{run_edge_session, EdgeConfig, EdgeReport, OverrideReason, Verdict};
use heartsplit_core::eval::corpus::balanced_beats;
use heartsplit_core::link::{FogNode, Link, LoopbackLink, Payload, WireMessage};
use heartsplit_core::nn::{build_table1_model, train, ModelGraph, TrainConfig};
use heartsplit_core::signal::{generate_ecg, SynthSpec};
use heartsplit_core::{AamiClass, EcgSignal};

/// Reference network whose first head always answers "normal", so only the
/// HRV and template gates can forward a beat.
fn normal_head_model() -> ModelGraph<f32> {
    let mut m = build_table1_model(31);
    let head = &mut m.layers[m.head1_index];
    head.params[0].data_mut().iter_mut().for_each(|w| *w = 0.0);
    head.params[1].data_mut().copy_from_slice(&[4.0, -4.0]);
    m
}

fn run(sig: &EcgSignal, model: &ModelGraph<f32>) -> (EdgeReport, Vec<String>) {
    let node = Arc::new(FogNode::new(model.clone()).unwrap());
    let mut link = LoopbackLink::new(node);
    let mut log = Vec::new();
    let report = run_edge_session(
        sig,
        model,
        &EdgeConfig::default(),
        &mut link,
        Some(&mut log),
    )
    .unwrap();
    let lines = String::from_utf8(log)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect();
    (report, lines)
}

fn check_invariants(report: &EdgeReport) {
    let gates = EdgeConfig::default().gates;
    for b in &report.beats {
        assert_eq!(
            b.feature_map_sent,
            b.decision.is_abnormal(),
            "beat {}",
            b.beat_id
        );
        if b.decision.verdict == Verdict::Normal {
            assert_eq!(b.decision.override_reason, OverrideReason::None);
            assert!(b.decision.head1_probs[0] >= b.decision.head1_probs[1]);
            assert!(b
                .decision
                .hrv_value
                .is_none_or(|h| h <= gates.hrv_threshold));
            assert!(b
                .decision
                .corr_value
                .is_none_or(|c| c >= gates.corr_threshold));
        }
    }
    assert_eq!(report.replies.len(), report.feature_maps());
}

#[test]
fn all_normal_minute_sends_no_feature_maps() {
    let (sig, truth) = generate_ecg(&SynthSpec::default(), 3).unwrap();
    let (report, log) = run(&sig, &normal_head_model());
    check_invariants(&report);
    assert_eq!(report.noise_reports(), 0);
    assert_eq!(report.feature_maps(), 0);
    assert!(report.beats.len() + 4 >= truth.r_peaks.len());
    assert!(report.link.sent_by_type.contains_key("HEART_RATE"));
    assert!(!report.link.sent_by_type.contains_key("FEATURE_MAP"));
    assert_eq!(log.len(), report.beats.len());
}

#[test]
fn five_ectopic_beats_are_each_forwarded() {
    let spec = SynthSpec {
        forced_beats: vec![
            (10, AamiClass::V),
            (22, AamiClass::S),
            (35, AamiClass::V),
            (47, AamiClass::F),
            (60, AamiClass::S),
        ],
        ..SynthSpec::default()
    };
    let (sig, truth) = generate_ecg(&spec, 4).unwrap();
    let abnormal: Vec<usize> = truth
        .r_peaks
        .iter()
        .zip(&truth.labels)
        .filter(|(_, c)| c.is_abnormal())
        .map(|(r, _)| *r)
        .collect();
    assert_eq!(abnormal.len(), 5);
    let (report, _) = run(&sig, &normal_head_model());
    check_invariants(&report);

    let tol = (0.1 * sig.fs) as usize;
    let near = |r: usize, q: usize| r.abs_diff(q) <= tol;
    let win = (10.0 * sig.fs) as usize;
    let graded = |r: usize| {
        report
            .windows
            .iter()
            .find(|w| (w.start_index..w.start_index + win).contains(&r))
            .map(|w| w.sqa.is_acceptable())
    };
    // A rejected window is reported as noise and its beats never reach the
    // gates, so only beats in accepted windows are checked here.
    let mut checked = 0;
    for &r in &abnormal {
        match graded(r) {
            Some(true) => {
                let b = report
                    .beats
                    .iter()
                    .find(|b| near(b.r_index, r))
                    .expect("ectopic beat detected");
                assert!(b.feature_map_sent, "ectopic beat at {r} kept on the edge");
                checked += 1;
            }
            Some(false) => assert!(report.beats.iter().all(|b| !near(b.r_index, r))),
            None => {}
        }
    }
    assert!(
        checked >= 3,
        "only {checked} ectopic beats fell in accepted windows"
    );
    assert_eq!(report.noise_reports(), abnormal.len() - checked);
    // Extras are the counted false positives: beats whose RR history still
    // holds the short coupling interval or the compensatory pause.
    let forwarded: Vec<usize> = report
        .beats
        .iter()
        .filter(|b| b.feature_map_sent)
        .map(|b| b.r_index)
        .collect();
    for &f in &forwarded {
        if abnormal.iter().any(|&r| near(f, r)) {
            continue;
        }
        let k = truth.r_peaks.iter().position(|&r| near(f, r)).unwrap();
        let before = &truth.labels[k.saturating_sub(2)..k];
        assert!(
            before.iter().any(|c| c.is_abnormal()),
            "unexpected forward at {f}"
        );
    }
    assert!(forwarded.len() >= checked && forwarded.len() <= 3 * abnormal.len());
}

#[test]
fn flatline_minute_sends_only_noise_reports() {
    let sig = EcgSignal::new(vec![0.0; 360 * 60], 360.0).unwrap();
    let (report, log) = run(&sig, &normal_head_model());
    assert_eq!(report.windows.len(), 6);
    assert_eq!(report.noise_reports(), 6);
    assert!(report.beats.is_empty());
    assert!(log.is_empty());
    assert_eq!(
        report.link.sent_by_type.get("NOISE_REPORT"),
        Some(&(6 * 22))
    );
    assert!(!report.link.sent_by_type.contains_key("HEART_RATE"));
}

#[test]
fn session_is_deterministic() {
    let (sig, _) = generate_ecg(
        &SynthSpec {
            abnormal_beat_rate: 0.2,
            ..SynthSpec::default()
        },
        5,
    )
    .unwrap();
    let model = build_table1_model(6);
    let (a, la) = run(&sig, &model);
    let (b, lb) = run(&sig, &model);
    assert_eq!(la, lb);
    assert_eq!(a.link, b.link);
    check_invariants(&a);
}

#[test]
fn fog_corrects_a_normal_beat_forwarded_by_mistake() {
    let mut model = build_table1_model(7);
    let cfg = TrainConfig {
        max_epochs: 20,
        ..TrainConfig::default()
    };
    train(
        &mut model,
        &balanced_beats(100, 70).unwrap(),
        &balanced_beats(25, 71).unwrap(),
        &cfg,
    )
    .unwrap();

    let normals: Vec<_> = balanced_beats(20, 72)
        .unwrap()
        .into_iter()
        .filter(|b| b.label == Some(AamiClass::N))
        .collect();
    let node = Arc::new(FogNode::new(model.clone()).unwrap());
    let mut link = LoopbackLink::new(node.clone());
    link.send(&WireMessage::new(
        1,
        0,
        Payload::Hello {
            weights_hash: node.hash(),
            fs: 130,
        },
    ))
    .unwrap();
    let mut corrected = 0;
    for (i, beat) in normals.iter().enumerate() {
        let out = model.forward_window(&beat.window).unwrap();
        let reply = link
            .send(&WireMessage::new(
                1,
                i as u32 + 1,
                Payload::FeatureMap {
                    values: out.cut.data().to_vec(),
                },
            ))
            .unwrap();
        let Payload::Classification { class, probs } = &reply[0].payload else {
            panic!("no classification");
        };
        assert!((probs.iter().map(|p| *p as f64).sum::<f64>() - 1.0).abs() < 1e-6);
        corrected += usize::from(*class == AamiClass::N);
    }
    assert!(
        corrected * 10 >= normals.len() * 9,
        "{corrected}/{}",
        normals.len()
    );
}
