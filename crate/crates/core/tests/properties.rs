mod common;

use proptest::prelude::*;

use common::{moving_std_oracle, pearson_oracle};
use heartsplit_core::edge::{hrv_indicator, template_correlation, BeatTemplate};
use heartsplit_core::eval::{
    energy_report, metrics, CaseSpec, ConfusionCounts, EnergyModel, TrafficSummary,
};
use heartsplit_core::qrs::{segment_beats, RPeakList, PRE_R, SEGMENT_LEN};
use heartsplit_core::signal::{generate_ecg, SynthSpec};
use heartsplit_core::sqa::{grade_window, moving_std, SqaConfig};
use heartsplit_core::EcgSignal;

fn beat_vec() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-5.0f64..5.0, SEGMENT_LEN)
}

fn template(x: &[f64]) -> BeatTemplate {
    BeatTemplate::from_windows([x]).unwrap()
}

fn traffic(hr: u64, fm: u64) -> TrafficSummary {
    let mut t = TrafficSummary::default();
    for (name, n, len) in [("HEART_RATE", hr, 21), ("FEATURE_MAP", fm, 557)] {
        if n > 0 {
            t.frames.insert(name.to_string(), n);
            t.bytes.insert(name.to_string(), n * len);
        }
    }
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn self_correlation_is_one(x in beat_vec()) {
        let r = template_correlation(&template(&x), &x).unwrap();
        prop_assert!((r - 1.0).abs() <= 1e-9);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        prop_assert!((template_correlation(&template(&x), &neg).unwrap() + 1.0).abs() <= 1e-9);
    }

    #[test]
    fn correlation_matches_direct_evaluation(t in beat_vec(), x in beat_vec()) {
        let got = template_correlation(&template(&t), &x).unwrap();
        prop_assert!((got - pearson_oracle(&t, &x)).abs() <= 1e-9);
        prop_assert!((-1.0..=1.0).contains(&got));
    }

    #[test]
    fn correlation_ignores_positive_affine_maps(
        t in beat_vec(),
        x in beat_vec(),
        a in 1e-3f64..1e3,
        b in -100.0f64..100.0,
    ) {
        let base = template_correlation(&template(&t), &x).unwrap();
        let t2: Vec<f64> = t.iter().map(|v| a * v + b).collect();
        let x2: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        prop_assert!((template_correlation(&template(&t2), &x).unwrap() - base).abs() <= 1e-9);
        prop_assert!((template_correlation(&template(&t), &x2).unwrap() - base).abs() <= 1e-9);
    }

    #[test]
    fn hrv_is_symmetric(a in 0.2f64..3.0, b in 0.2f64..3.0, fs in 50.0f64..500.0) {
        let h = hrv_indicator(a, b, fs).unwrap();
        prop_assert_eq!(h, hrv_indicator(b, a, fs).unwrap());
        prop_assert!(h >= 0.0);
        prop_assert_eq!(hrv_indicator(a, a, fs).unwrap(), 0.0);
    }

    #[test]
    fn flipping_the_positive_class_swaps_se_and_sp(
        tp in 0u64..10_000, tn in 0u64..10_000, fp in 0u64..10_000, fn_ in 0u64..10_000,
    ) {
        let c = ConfusionCounts { tp, tn, fp, fn_ };
        let m = metrics(&c);
        let s = metrics(&c.swapped());
        prop_assert_eq!(m.se, s.sp);
        prop_assert_eq!(m.sp, s.se);
        prop_assert_eq!(m.acc, s.acc);
    }

    #[test]
    fn accuracy_lies_between_se_and_sp(
        tp in 0u64..10_000, tn in 0u64..10_000, fp in 0u64..10_000, fn_ in 0u64..10_000,
    ) {
        prop_assume!(tp + fn_ > 0 && tn + fp > 0);
        let m = metrics(&ConfusionCounts { tp, tn, fp, fn_ });
        let (se, sp, acc) = (m.se.value().unwrap(), m.sp.value().unwrap(), m.acc.value().unwrap());
        prop_assert!(se.min(sp) - 1e-12 <= acc && acc <= se.max(sp) + 1e-12);
    }

    #[test]
    fn energy_is_linear_in_cost_per_bit(hr in 0u64..5000, fm in 0u64..500, k in 0.01f64..100.0) {
        let base = EnergyModel::default();
        let mut scaled = base.clone();
        scaled.uj_per_bit.values_mut().for_each(|v| *v *= k);
        let (t2, t3) = (traffic(hr, 0), traffic(hr, fm));
        let a = energy_report(&base, &CaseSpec::CASE_I, &t2, &t3).unwrap();
        let b = energy_report(&scaled, &CaseSpec::CASE_I, &t2, &t3).unwrap();
        for (x, y) in a.rows.iter().zip(&b.rows) {
            for (u, v) in [(x.case_i_j, y.case_i_j), (x.case_ii_j, y.case_ii_j), (x.case_iii_j, y.case_iii_j)] {
                prop_assert!((v - k * u).abs() <= 1e-12 * v.abs().max(1e-12));
            }
        }
    }

    #[test]
    fn energy_grows_with_traffic(hr in 0u64..5000, fm in 0u64..500, more_hr in 0u64..100, more_fm in 0u64..100) {
        let m = EnergyModel::default();
        let a = energy_report(&m, &CaseSpec::CASE_I, &traffic(hr, fm), &traffic(hr, fm)).unwrap();
        let b = energy_report(&m, &CaseSpec::CASE_I, &traffic(hr + more_hr, fm + more_fm), &traffic(hr, fm)).unwrap();
        for (x, y) in a.rows.iter().zip(&b.rows) {
            prop_assert!(y.case_ii_j >= x.case_ii_j);
            if more_hr + more_fm > 0 {
                prop_assert!(y.case_ii_j > x.case_ii_j);
            }
        }
    }

    #[test]
    fn sqa_grade_ignores_amplitude_scale(seed in 0u64..10_000, c in 1e-3f64..1e3) {
        let spec = SynthSpec { duration_s: 10.0, ..SynthSpec::default() };
        let (sig, _) = generate_ecg(&spec, seed).unwrap();
        let scaled = EcgSignal::new(sig.samples.iter().map(|v| v * c).collect(), sig.fs).unwrap();
        let cfg = SqaConfig::default();
        let a = grade_window(&sig, &cfg).unwrap();
        let b = grade_window(&scaled, &cfg).unwrap();
        prop_assert_eq!(a.grade, b.grade);
        prop_assert_eq!(a.reason, b.reason);
        prop_assert!((a.mean_sigma - b.mean_sigma).abs() <= 1e-12);
    }

    #[test]
    fn segments_are_the_surrounding_samples(
        samples in proptest::collection::vec(-2.0f64..2.0, 200..600),
        picks in proptest::collection::vec(0.0f64..1.0, 1..8),
    ) {
        let n = samples.len();
        let mut idx: Vec<usize> = picks.iter().map(|p| (p * (n - 1) as f64) as usize).collect();
        idx.sort_unstable();
        idx.dedup();
        let sig = EcgSignal::new(samples.clone(), 130.0).unwrap();
        let beats = segment_beats(&sig, &RPeakList { indices: idx.clone(), fs: 130.0 }).unwrap();
        let kept: Vec<usize> = idx.iter().copied().filter(|&r| r >= PRE_R && r + 64 < n).collect();
        prop_assert_eq!(beats.iter().map(|b| b.r_index).collect::<Vec<_>>(), kept);
        for b in &beats {
            prop_assert_eq!(b.window.len(), SEGMENT_LEN);
            prop_assert_eq!(&b.window[..], &samples[b.r_index - PRE_R..=b.r_index + 64]);
        }
    }
}

#[test]
fn moving_std_matches_brute_force_on_random_signals() {
    use rand::Rng;
    let mut r = common::rng(51);
    for case in 0..100 {
        let n = r.random_range(50..2000);
        let win = r.random_range(2..=n.min(300));
        let overlap = r.random_range(0.0..0.95);
        let scale = r.random_range(0.01..10.0);
        let x = common::random_vec(&mut r, n, scale);
        let got = moving_std(&x, win, overlap).unwrap();
        let want = moving_std_oracle(&x, win, overlap);
        assert_eq!(got.len(), want.len(), "case {case}");
        for (g, w) in got.iter().zip(&want) {
            assert!(
                (g - w).abs() <= 1e-9 * w.abs().max(1.0),
                "case {case}: {g} vs {w}"
            );
        }
    }
}

#[test]
fn segment_window_bounds() {
    let sig = EcgSignal::new((0..1000).map(f64::from).collect(), 130.0).unwrap();
    let beats = segment_beats(
        &sig,
        &RPeakList {
            indices: vec![10, 200],
            fs: 130.0,
        },
    )
    .unwrap();
    assert_eq!(beats.len(), 1);
    assert_eq!(beats[0].window.first(), Some(&160.0));
    assert_eq!(beats[0].window.last(), Some(&264.0));
}

#[test]
fn worked_confusion_counts() {
    let m = metrics(&ConfusionCounts {
        tp: 4970,
        fn_: 30,
        fp: 41,
        tn: 4959,
    });
    assert_eq!(m.acc.value(), Some(9929.0 / 10000.0));
    assert_eq!(format!("{:.1}", m.acc.value().unwrap() * 100.0), "99.3");
    assert_eq!(m.se.value(), Some(4970.0 / 5000.0));
    assert!(metrics(&ConfusionCounts::default()).se.value().is_none());
}
