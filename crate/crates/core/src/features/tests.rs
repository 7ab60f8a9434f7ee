use std::f64::consts::PI;

use proptest::prelude::*;

use super::*;
use crate::autodiff::Tensor;

fn tone(freq: f64, rate: u32, seconds: f64) -> Vec<f64> {
    let n = (rate as f64 * seconds) as usize;
    (0..n).map(|i| 0.5 * (2.0 * PI * freq * i as f64 / rate as f64).sin()).collect()
}

#[test]
fn frame_count_formula() {
    let cfg = MfccConfig::default();
    assert_eq!(cfg.window_samples(16000), 400);
    assert_eq!(cfg.hop_samples(16000), 160);
    assert_eq!(frame_count(16000, 400, 160), 98);
    let m = compute_mfcc(&vec![0.1; 16000], 16000, &cfg).unwrap();
    assert_eq!(m.shape(), &[98, 39]);
}

#[test]
fn silent_signal_sits_on_the_log_floor() {
    let cfg = MfccConfig::default();
    let rows = mfcc_unnormalized(&vec![0.0; 8000], 16000, &cfg).unwrap();
    let floor = cfg.log_floor.ln();
    // orthonormal DCT of a constant vector: c0 = sqrt(M) * value, others ~0
    let c0 = (cfg.mel_filters as f64).sqrt() * floor;
    for r in &rows {
        assert_eq!(r, &rows[0]);
        assert!((r[0] - c0).abs() < 1e-9);
        assert!(r[1..13].iter().all(|v| v.abs() < 1e-9));
        assert!(r[13..].iter().all(|&v| v == 0.0));
    }
    let normalized = compute_mfcc(&vec![0.0; 8000], 16000, &cfg).unwrap();
    assert!(normalized.data().iter().all(|v| v.abs() < 1e-9));
}

#[test]
fn stationary_tone_gives_identical_interior_frames() {
    let cfg = MfccConfig::default();
    let m = compute_mfcc(&tone(1000.0, 16000, 0.5), 16000, &cfg).unwrap();
    let t = m.rows();
    for i in 5..t - 5 {
        for j in 0..39 {
            assert!((m.at(i, j) - m.at(5, j)).abs() < 1e-6, "frame {i} coef {j}");
        }
    }
}

#[test]
fn fft_spectrum_matches_direct_dft() {
    let signal = tone(1000.0, 16000, 0.05);
    let frame = &signal[160..560];
    let window = hamming(400);
    let fast = magnitude_spectrum(frame, &window, 512);
    for (k, &mag) in fast.iter().enumerate() {
        let (mut re, mut im) = (0.0, 0.0);
        for (n, (&x, &w)) in frame.iter().zip(&window).enumerate() {
            let ang = -2.0 * PI * (k * n) as f64 / 512.0;
            re += x * w * ang.cos();
            im += x * w * ang.sin();
        }
        assert!((mag - (re * re + im * im).sqrt()).abs() < 1e-9, "bin {k}");
    }
    // the peak sits at the tone's bin: 1000 Hz * 512 / 16000 = 32
    let peak = fast
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0;
    assert_eq!(peak, 32);
}

#[test]
fn silence_prefix_shifts_frames() {
    let cfg = MfccConfig {
        normalize: false,
        ..MfccConfig::default()
    };
    let signal = tone(440.0, 16000, 0.3);
    let shift = 7;
    let mut prefixed = vec![0.0; shift * 160];
    prefixed.extend_from_slice(&signal);
    let a = mfcc_unnormalized(&signal, 16000, &cfg).unwrap();
    let b = mfcc_unnormalized(&prefixed, 16000, &cfg).unwrap();
    assert_eq!(b.len(), a.len() + shift);
    // window reach (3 frames) plus delta reach (2 + 2 frames) at both ends
    for i in 7..a.len() - 4 {
        for j in 0..39 {
            assert!((a[i][j] - b[i + shift][j]).abs() < 1e-12);
        }
    }
}

#[test]
fn mfcc_input_errors() {
    let cfg = MfccConfig::default();
    assert!(compute_mfcc(&[0.0; 399], 16000, &cfg).is_err());
    assert!(compute_mfcc(&[0.0; 4000], 4000, &cfg).is_err());
}

#[test]
fn mel_filters_are_triangles_covering_the_band() {
    let bank = mel_filterbank(26, 512, 16000);
    assert_eq!(bank.len(), 26);
    for f in &bank {
        assert_eq!(f.len(), 257);
        assert!(f.iter().all(|&w| (0.0..=1.0).contains(&w)));
        assert!(f.iter().any(|&w| w > 0.5));
    }
}

#[test]
fn inventory_has_39_unique_labels() {
    let inv = PhonemeInventory::arpabet();
    assert_eq!(inv.len(), 39);
    assert_eq!(inv.index("AA"), Some(0));
    assert_eq!(inv.index("aa1"), Some(0));
    assert_eq!(inv.index("ZH"), Some(38));
    assert_eq!(inv.index("SIL"), None);
    assert!(PhonemeInventory::new(vec!["A".into(), "A".into()]).is_err());
}

#[test]
fn encode_single_entry() {
    let inv = PhonemeInventory::arpabet();
    let m = encode_phonemes(&[AlignmentEntry::new(0.0, 1.0, "AA")], 100, 0.01, &inv).unwrap();
    assert_eq!(m.shape(), &[100, 39]);
    for i in 0..100 {
        assert_eq!(m.at(i, 0), 1.0);
        assert_eq!(m.row(i).iter().sum::<f64>(), 1.0);
    }
}

#[test]
fn encode_empty_alignment_is_zero() {
    let m = encode_phonemes(&[], 20, 0.01, &PhonemeInventory::arpabet()).unwrap();
    assert_eq!(m, Tensor::zeros([20, 39]));
}

#[test]
fn encode_uses_frame_centres_at_boundaries() {
    let inv = PhonemeInventory::arpabet();
    let align = [AlignmentEntry::new(0.0, 0.5, "AA"), AlignmentEntry::new(0.5, 1.0, "B")];
    let m = encode_phonemes(&align, 100, 0.01, &inv).unwrap();
    let b = inv.index("B").unwrap();
    // direct interval membership of each centre
    for i in 0..100 {
        let c = (i as f64 + 0.5) * 0.01;
        let expect = if c < 0.5 { 0 } else { b };
        assert_eq!(m.at(i, expect), 1.0, "frame {i}");
    }
    assert_eq!(m.at(49, 0), 1.0);
    assert_eq!(m.at(50, b), 1.0);
}

#[test]
fn encode_silence_and_unknown_labels() {
    let inv = PhonemeInventory::arpabet();
    let align = [
        AlignmentEntry::new(0.0, 0.1, "sil"),
        AlignmentEntry::new(0.1, 0.2, "IY1"),
        AlignmentEntry::new(0.2, 0.3, "sp"),
    ];
    let m = encode_phonemes(&align, 30, 0.01, &inv).unwrap();
    let iy = inv.index("IY").unwrap();
    for i in 0..30 {
        let s: f64 = m.row(i).iter().sum();
        assert_eq!(s, if (10..20).contains(&i) { 1.0 } else { 0.0 });
    }
    assert_eq!(m.at(15, iy), 1.0);
    let err = encode_phonemes(&[AlignmentEntry::new(0.0, 0.1, "QQ")], 5, 0.01, &inv).unwrap_err();
    assert!(err.to_string().contains("QQ"));
}

#[test]
fn alignment_parsing_and_validation() {
    let text = "0\t0.12\tsil\n0.12\t0.3\tHH\n\n0.3\t0.41\tAH0\n";
    let entries = parse_alignment(text).unwrap();
    assert_eq!(entries.len(), 3);
    assert_eq!(entries[2], AlignmentEntry::new(0.3, 0.41, "AH0"));
    assert_eq!(parse_alignment(&format_alignment(&entries)).unwrap(), entries);
    assert!(parse_alignment("0.2\t0.1\tAA\n").is_err());
    assert!(parse_alignment("0\t0.2\tAA\n0.1\t0.3\tB\n").is_err());
    assert!(parse_alignment("0 0.2 AA\n").is_err());
}

fn ema_values(rows: usize, f: impl Fn(usize, usize) -> f64) -> Tensor {
    let data = (0..rows * 12).map(|k| f(k / 12, k % 12)).collect();
    Tensor::new([rows, 12], data).unwrap()
}

#[test]
fn align_phase_aligned_track_copies_rows() {
    let values = ema_values(50, |i, c| (i * 7 + c) as f64 * 0.37 - 3.0);
    let track = EmaTrack::uniform(100.0, 0.005, values.clone()).unwrap();
    let out = align_ema(&track, 50, 0.01).unwrap();
    assert_eq!(out, values);
}

#[test]
fn align_ramp_stays_on_ramp() {
    let values = ema_values(40, |i, c| 2.0 * i as f64 + c as f64);
    let track = EmaTrack::uniform(100.0, 0.0, values).unwrap();
    let out = align_ema(&track, 39, 0.01).unwrap();
    for i in 0..39 {
        for c in 0..12 {
            // sample i sits at i*10ms, so frame centre (i+0.5)*10ms is sample i+0.5
            let expected = 2.0 * (i as f64 + 0.5) + c as f64;
            assert!((out.at(i, c) - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn align_half_sample_offset_averages_neighbours() {
    let values = ema_values(30, |i, c| ((i * 31 + c * 17) % 13) as f64 - 6.0);
    let track = EmaTrack::uniform(100.0, 0.0, values.clone()).unwrap();
    let out = align_ema(&track, 29, 0.01).unwrap();
    for i in 0..29 {
        for c in 0..12 {
            let mean = 0.5 * (values.at(i, c) + values.at(i + 1, c));
            assert!((out.at(i, c) - mean).abs() < 1e-12);
        }
    }
}

#[test]
fn align_preserves_constant_channels_and_clamps() {
    let values = ema_values(20, |i, c| if c == 3 { 4.25 } else { i as f64 });
    let track = EmaTrack::uniform(100.0, 0.02, values).unwrap();
    let out = align_ema(&track, 22, 0.01).unwrap();
    for i in 0..22 {
        assert_eq!(out.at(i, 3), 4.25);
    }
    // first centre (5 ms) precedes the first sample (20 ms): clamped
    assert_eq!(out.at(0, 0), 0.0);
}

#[test]
fn align_errors() {
    let mut values = ema_values(10, |_, _| 1.0);
    values.data_mut()[17] = f64::NAN;
    assert!(EmaTrack::uniform(100.0, 0.0, values).is_err());
    let track = EmaTrack::uniform(100.0, 0.0, ema_values(10, |_, _| 1.0)).unwrap();
    assert!(align_ema(&track, 10, 0.01).is_ok());
    assert!(align_ema(&track, 20, 0.01).is_err());
    assert!(align_ema(&track, 3, 0.01).is_err());
}

#[test]
fn ema_csv_roundtrip_and_header_check() {
    let track = EmaTrack::uniform(100.0, 0.005, ema_values(4, |i, c| i as f64 * 0.1 + c as f64)).unwrap();
    let text = format_ema_csv(&track);
    assert!(text.starts_with("time_s,T1_x,T1_z,"));
    assert_eq!(parse_ema_csv(&text).unwrap(), track);
    let bad = text.replacen("T1_x", "tip_x", 1);
    assert!(parse_ema_csv(&bad).is_err());
}

#[test]
fn wav_roundtrip_and_format_checks() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.wav");
    let audio = Audio {
        sample_rate: 16000,
        samples: tone(300.0, 16000, 0.1),
    };
    write_wav(&path, &audio).unwrap();
    let back = read_wav(&path).unwrap();
    assert_eq!(back.sample_rate, 16000);
    assert_eq!(back.samples.len(), audio.samples.len());
    assert!(back
        .samples
        .iter()
        .zip(&audio.samples)
        .all(|(a, b)| (a - b).abs() < 1.0 / 32768.0));

    let low = dir.path().join("low.wav");
    write_wav(
        &low,
        &Audio {
            sample_rate: 4000,
            samples: vec![0.0; 400],
        },
    )
    .unwrap();
    assert!(read_wav(&low).unwrap_err().to_string().contains("resample"));
}

proptest! {
    #[test]
    fn one_hot_rows_are_zero_or_one(durations in prop::collection::vec((1u32..30, 0usize..41), 0..12), frames in 1usize..150) {
        let inv = PhonemeInventory::arpabet();
        let mut t = 0.0;
        let mut entries = Vec::new();
        for (d, l) in durations {
            let end = t + d as f64 * 0.01;
            let label = if l >= 39 { "sil".to_string() } else { ARPABET[l].to_string() };
            entries.push(AlignmentEntry::new(t, end, label));
            t = end;
        }
        let m = encode_phonemes(&entries, frames, 0.01, &inv).unwrap();
        for i in 0..frames {
            let row = m.row(i);
            prop_assert!(row.iter().all(|&v| v == 0.0 || v == 1.0));
            let s: f64 = row.iter().sum();
            prop_assert!(s == 0.0 || s == 1.0);
        }
    }
}
