use dualkws::audio::{apply_filter, mix_at_snr, power_ratio_to_db, signal_power, wav_read, wav_write, AudioBuffer, FilterSpec, WavEncoding};
use dualkws::fmcw::{compute_echo_profile, generate_chirp, shift_to_distance, ChirpSpec};
use dualkws::mfcc::{dct_matrix, mfcc_extract, MfccConfig};
use proptest::prelude::*;

const RATE: u32 = 48_000;

fn samples(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn filter_is_linear(x in samples(200..600), seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let n = x.len();
        let y: Vec<f64> = (0..n).map(|i| ((i as u64).wrapping_mul(seed | 1) % 1000) as f64 / 500.0 - 1.0).collect();
        let spec = FilterSpec::lowpass(10_000.0);
        let fx = apply_filter(&AudioBuffer::mono(x.clone(), RATE).unwrap(), &spec).unwrap();
        let fy = apply_filter(&AudioBuffer::mono(y.clone(), RATE).unwrap(), &spec).unwrap();
        let mixed: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let fm = apply_filter(&AudioBuffer::mono(mixed, RATE).unwrap(), &spec).unwrap();
        let scale = fm.samples().iter().map(|v| v.abs()).fold(1e-12, f64::max);
        for ((m, p), q) in fm.samples().iter().zip(fx.samples()).zip(fy.samples()) {
            prop_assert!((m - (a * p + b * q)).abs() <= 1e-6 * scale);
        }
    }

    #[test]
    fn mixing_recovers_snr(snr in -20.0f64..30.0, seed in any::<u64>()) {
        let mut rng = dualkws::seed::rng_for(seed, 0, 0);
        let signal = AudioBuffer::mono((0..4800).map(|i| (i as f64 * 0.05).sin()).collect(), RATE).unwrap();
        let noise = AudioBuffer::mono((0..9600).map(|i| ((i * 7919) % 211) as f64 / 105.0 - 1.0).collect(), RATE).unwrap();
        let m = mix_at_snr(&signal, &noise, snr, &mut rng).unwrap();
        let pn = signal_power(&m.noise_segment.scaled(m.noise_gain)).unwrap();
        let achieved = power_ratio_to_db(signal_power(&signal).unwrap() / pn);
        prop_assert!((achieved - snr).abs() < 0.01);
    }

    #[test]
    fn wav_round_trips(x in samples(1..400), stereo in any::<bool>()) {
        let dir = tempfile::tempdir().unwrap();
        let x = if stereo && x.len() % 2 == 1 { x[1..].to_vec() } else { x };
        prop_assume!(!x.is_empty());
        let buf = AudioBuffer::new(x.iter().map(|v| *v as f32 as f64).collect(), RATE, if stereo { 2 } else { 1 }).unwrap();
        let f = dir.path().join("f.wav");
        wav_write(&buf, &f, WavEncoding::Float32).unwrap();
        prop_assert_eq!(wav_read(&f).unwrap(), buf.clone());
        let p = dir.path().join("p.wav");
        wav_write(&buf, &p, WavEncoding::Pcm16).unwrap();
        let back = wav_read(&p).unwrap();
        for (a, b) in back.samples().iter().zip(buf.samples()) {
            prop_assert!((a - b).abs() <= 1.0 / 32768.0 + 1e-12);
        }
    }

    #[test]
    fn resolution_is_constant(s in 0usize..10_000) {
        let step = shift_to_distance(s + 1, RATE, 343.0) - shift_to_distance(s, RATE, 343.0);
        prop_assert!((step * 100.0 - 0.357).abs() < 0.001);
    }

    #[test]
    fn profile_matches_sliding_dot_product(x in samples(1152..1153), lo in 0usize..200, width in 1usize..100) {
        let spec = ChirpSpec::low_band();
        let l = spec.len();
        let hi = (lo + width).min(l - 1);
        let rx = AudioBuffer::mono(x.clone(), RATE).unwrap();
        let p = compute_echo_profile(&rx, &spec, (lo, hi)).unwrap();
        let t = generate_chirp(&spec).unwrap();
        for f in 0..2 {
            let frame = &x[f * l..(f + 1) * l];
            // Circular correlation at lag k: the frame advanced by k against the template.
            let oracle: Vec<f64> = (lo..=hi)
                .map(|k| (0..l).map(|n| frame[(n + k) % l] * t.samples()[n]).sum::<f64>().abs())
                .collect();
            let scale = oracle.iter().fold(1e-9f64, |m, v| m.max(*v));
            for (row, want) in oracle.iter().enumerate() {
                prop_assert!((p.values[[0, row, f]] - want).abs() <= 1e-6 * scale);
            }
        }
    }

    #[test]
    fn mfcc_frame_count_and_finiteness(len in 400usize..20_000, scale in prop::sample::select(vec![0.0, 1e-12, 1.0, 1e3])) {
        let cfg = MfccConfig::default();
        let rate = 16_000;
        let x: Vec<f64> = (0..len).map(|i| scale * ((i * 31 % 97) as f64 - 48.0)).collect();
        let m = mfcc_extract(&AudioBuffer::mono(x, rate).unwrap(), &cfg).unwrap();
        let frame = cfg.frame_samples(rate);
        let hop = cfg.hop_samples(rate);
        prop_assert_eq!(m.frames(), 1 + (len - frame) / hop);
        prop_assert_eq!(m.rows(), cfg.n_coeffs);
        prop_assert!(m.values.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn dct_is_orthonormal() {
    for n in [2, 13, 40] {
        let d = dct_matrix(n);
        let g = d.dot(&d.t());
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g[[i, j]] - want).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn lowpass_stop_and_pass() {
    let tone = |f: f64| AudioBuffer::mono((0..48_000).map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / 48_000.0).sin()).collect(), RATE).unwrap();
    let rms = |b: &AudioBuffer| signal_power(b).unwrap().sqrt();
    let lp = FilterSpec::lowpass(10_000.0);
    let hi = tone(20_000.0);
    assert!(rms(&apply_filter(&hi, &lp).unwrap()) < 0.01 * rms(&hi));
    let lo = tone(1_000.0);
    assert!((rms(&apply_filter(&lo, &lp).unwrap()) / rms(&lo) - 1.0).abs() < 0.02);
}
