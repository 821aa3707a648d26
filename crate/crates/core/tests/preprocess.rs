mod common;

use plantar_grf::autodiff::Tensor;
use plantar_grf::io::{synth_trial, SynthConfig};
use plantar_grf::preprocess::{
    butterworth_lowpass, butterworth_lowpass_with, detect_gait_events, normalize_targets, process_trial,
    resample_stance, segment_stances, standardize_footstep, synchronize_streams, FilterPhase, FootSide, GaitEvents,
    PreprocessConfig, PressureSequence, SubjectMeta, GRAVITY,
};
use proptest::prelude::*;

fn subject(weight_kg: f64) -> SubjectMeta {
    SubjectMeta {
        id: "S01".into(),
        height_mm: 1750.0,
        weight_kg,
        age_years: 27.0,
    }
}

fn sine(freq: f64, fs: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / fs).sin()).collect()
}

#[test]
fn stride_count_matches_generator_without_noise() {
    for seed in 0..3 {
        let cfg = SynthConfig {
            num_subjects: 2,
            steps_per_subject: 12,
            noise: 0.0,
            seed,
            ..Default::default()
        };
        for s in 0..cfg.num_subjects {
            let (trial, truth) = synth_trial(&cfg, s).unwrap();
            let ev = detect_gait_events(&trial.pressure.mean_pressure(), 0.125).unwrap();
            assert_eq!(ev.heel_strikes.len(), truth.strides, "seed {seed} subject {s}");
            assert_eq!(ev.stances().len(), truth.strides);
        }
    }
}

#[test]
fn stride_count_within_one_at_high_noise() {
    let cfg = SynthConfig {
        num_subjects: 3,
        steps_per_subject: 15,
        noise: 0.1,
        seed: 4,
        ..Default::default()
    };
    for s in 0..cfg.num_subjects {
        let (trial, truth) = synth_trial(&cfg, s).unwrap();
        let out = process_trial(&trial, &PreprocessConfig::default()).unwrap();
        let found = out.insole_events.stances().len() as i64;
        assert!((found - truth.strides as i64).abs() <= 1, "found {found}, generated {}", truth.strides);
    }
}

#[test]
fn pipeline_recovers_generator_offset() {
    let cfg = SynthConfig {
        num_subjects: 4,
        steps_per_subject: 10,
        noise: 0.0,
        seed: 11,
        ..Default::default()
    };
    for s in 0..cfg.num_subjects {
        let (trial, truth) = synth_trial(&cfg, s).unwrap();
        let out = process_trial(&trial, &PreprocessConfig::default()).unwrap();
        assert!(
            (out.offset_frames - truth.offset_frames).abs() <= 1,
            "recovered {}, generated {}",
            out.offset_frames,
            truth.offset_frames
        );
    }
}

#[test]
fn jittered_shift_matches_brute_force() {
    let insole = vec![10usize, 30, 50, 70, 90];
    let jitter = [0i64, 1, -1, 0, 1];
    let plate: Vec<usize> = insole.iter().zip(jitter).map(|(&h, j)| (h as i64 + 5 + j) as usize).collect();
    // odd count of pairwise differences: the L1 minimizer is unique
    let cost = |o: i64| -> i64 { insole.iter().zip(&plate).map(|(&a, &b)| (b as i64 + o - a as i64).abs()).sum() };
    let oracle = (-40..=40).min_by_key(|&o| cost(o)).unwrap();
    assert_eq!(oracle, -5);
    let ev = |hs: Vec<usize>| GaitEvents {
        toe_offs: hs.iter().map(|h| h + 6).collect(),
        heel_strikes: hs,
    };
    assert_eq!(synchronize_streams(&ev(insole.clone()), &ev(plate)).unwrap(), oracle);
}

#[test]
fn lowpass_attenuates_near_nyquist() {
    let x = sine(45.0, 100.0, 2000);
    let y = butterworth_lowpass(&x, 100.0, 10.0).unwrap();
    let ratio = common::tone_amplitude(&y, 45.0, 100.0) / common::tone_amplitude(&x, 45.0, 100.0);
    assert!(ratio < 0.02, "{ratio}");
}

#[test]
fn single_pass_half_power_at_cutoff() {
    let x = sine(10.0, 100.0, 4000);
    let y = butterworth_lowpass_with(&x, 100.0, 10.0, FilterPhase::SinglePass).unwrap();
    let ratio = common::tone_amplitude(&y, 10.0, 100.0) / common::tone_amplitude(&x, 10.0, 100.0);
    assert!((ratio / std::f64::consts::FRAC_1_SQRT_2 - 1.0).abs() < 0.02, "{ratio}");
}

#[test]
fn zero_phase_cross_correlation_peaks_at_lag_zero() {
    let clean = sine(1.5, 100.0, 1000);
    let y = butterworth_lowpass(&clean, 100.0, 10.0).unwrap();
    let xcorr = |lag: i64| -> f64 {
        (200..800).map(|i| clean[i] * y[(i as i64 + lag) as usize]).sum()
    };
    let best = (-20..=20).max_by(|&a, &b| xcorr(a).total_cmp(&xcorr(b))).unwrap();
    assert_eq!(best, 0);
}

#[test]
fn body_weight_normalization_of_a_table_subject() {
    let grf = Tensor::new([1, 3], vec![0.0, 0.0, 756.4]).unwrap();
    let grm = Tensor::zeros([1, 3]);
    let y = normalize_targets(&grf, &grm, &subject(77.11)).unwrap();
    let expected = 756.4 / (77.11 * GRAVITY);
    assert!((y.at(&[0, 2]) - expected).abs() < 1e-12);
    assert!((y.at(&[0, 2]) - 1.0).abs() < 1e-3);
}

#[test]
fn sine_resampling_is_within_tolerance() {
    let n = 30;
    let seg = Tensor::from_fn([n, 1], |i| (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).sin());
    let out = resample_stance(&seg, 40).unwrap();
    let dev = (0..40)
        .map(|i| (out.at(&[i, 0]) - (2.0 * std::f64::consts::PI * i as f64 / 39.0).sin()).abs())
        .fold(0.0, f64::max);
    assert!(dev < 1e-3, "{dev}");
}

/// Stances whose targets are a fixed linear function of the frame's mean
/// pressure: splines are linear in the data, so the relation survives resampling.
#[test]
fn segmented_targets_follow_their_pressure() {
    let (h, w) = (4, 3);
    let stance = |len: usize| -> Vec<f64> {
        (0..len)
            .map(|i| 5.0 + 20.0 * (std::f64::consts::PI * (i as f64 + 0.5) / len as f64).sin())
            .collect()
    };
    let mut amp = vec![0.0; 3];
    for (len, gap) in [(13, 5), (17, 6), (11, 7)] {
        amp.extend(stance(len));
        amp.extend(std::iter::repeat(0.0).take(gap));
    }
    let t = amp.len();
    let frames = Tensor::from_fn([t, h, w], |i| amp[i / (h * w)] * (1.0 + (i % (h * w)) as f64 / 10.0));
    let subj = subject(70.0);
    let seq = PressureSequence::new(frames, 100.0, subj.clone(), FootSide::Right, 1.2).unwrap();
    let mean = seq.mean_pressure();
    let gains = [0.1, -0.2, 3.0, 0.01, 0.02, -0.005];
    let targets = Tensor::from_fn([t, 6], |i| gains[i % 6] * mean[i / 6]);
    let events = detect_gait_events(&mean, 0.125).unwrap();
    assert_eq!(events.stances().len(), 3);
    let seg = segment_stances(&seq, &targets, &events, 40).unwrap();
    assert_eq!(seg.samples.len(), 3);
    assert_eq!(seg.skipped, 0);

    let bw = subj.weight_kg * GRAVITY;
    let scale = [bw, bw, bw, bw * 1.75, bw * 1.75, bw * 1.75];
    for s in &seg.samples {
        assert_eq!(s.pressure.shape(), &[40, h, w]);
        for l in 0..40 {
            let m: f64 = s.pressure.data()[l * h * w..(l + 1) * h * w].iter().sum::<f64>() / (h * w) as f64;
            for c in 0..6 {
                let y = s.targets.at(&[l, c]) * scale[c];
                assert!((y - gains[c] * m).abs() < 1e-6, "frame {l} channel {c}: {y} vs {}", gains[c] * m);
            }
        }
    }
}

#[test]
fn output_plus_skipped_equals_intervals() {
    let cfg = SynthConfig {
        num_subjects: 2,
        steps_per_subject: 10,
        adversarial: true,
        seed: 5,
        ..Default::default()
    };
    for s in 0..2 {
        let (trial, truth) = synth_trial(&cfg, s).unwrap();
        assert_eq!(truth.blips, 1);
        let out = process_trial(&trial, &PreprocessConfig::default()).unwrap();
        let intervals = out.insole_events.stances().len();
        assert_eq!(out.segmentation.samples.len() + out.segmentation.skipped, intervals);
        assert_eq!(out.segmentation.samples.len(), truth.strides);
        assert_eq!(out.segmentation.skipped, 1);
    }
}

#[test]
fn footstep_frames_follow_the_nearest_index_table() {
    let t = 50;
    let (h, w) = (6, 5);
    // one pixel per frame whose value encodes the frame index; frame 30 is the peak
    let frames = Tensor::from_fn([t, h, w], |i| {
        let (f, cell) = (i / (h * w), i % (h * w));
        if cell == 2 * w + 3 {
            if f == 30 {
                1000.0
            } else {
                f as f64 + 1.0
            }
        } else {
            0.0
        }
    });
    let out = standardize_footstep(&frames).unwrap();
    assert_eq!(out.shape(), &[101, 75, 40]);
    let table: Vec<usize> = (0..101).map(|i| ((i * 49) as f64 / 100.0).round() as usize).collect();
    for (i, &src) in table.iter().enumerate() {
        let want = if src == 30 { 1000.0 } else { src as f64 + 1.0 };
        assert_eq!(out.at(&[i, 37, 20]), want, "output frame {i}");
        assert_eq!(out.data()[i * 75 * 40..(i + 1) * 75 * 40].iter().filter(|&&v| v != 0.0).count(), 1);
    }
}

proptest! {
    #[test]
    fn events_are_invariant_to_affine_rescaling(
        a in 0.01f64..100.0,
        b in -50.0f64..50.0,
        phase in 0usize..7,
    ) {
        let s: Vec<f64> = (0..120).map(|i| ((i + phase) as f64 * 0.21).sin().max(0.0) + 0.01 * (i % 3) as f64).collect();
        let scaled: Vec<f64> = s.iter().map(|v| a * v + b).collect();
        prop_assert_eq!(detect_gait_events(&s, 0.125).unwrap(), detect_gait_events(&scaled, 0.125).unwrap());
    }

    #[test]
    fn filtered_length_and_dc(level in -100.0f64..100.0, n in 16usize..300) {
        let y = butterworth_lowpass(&vec![level; n], 100.0, 10.0).unwrap();
        prop_assert_eq!(y.len(), n);
        prop_assert!(y.iter().all(|v| (v - level).abs() < 1e-9 * level.abs().max(1.0)));
    }
}
