use muxclock_core::aes::{block_distance, encrypt_with_states, Block};
use muxclock_core::clock::FrequencySet;
use muxclock_core::format::{from_bytes, to_bytes};
use muxclock_core::presets::{paper_sets, PREVIOUS_WORK};
use muxclock_core::synth::*;
use proptest::prelude::*;

const KEY: Block = [7u8; 16];

fn cfg(noise: f64) -> TraceConfig {
    TraceConfig {
        noise_sigma: noise,
        ..TraceConfig::default()
    }
}

fn second_core(fs: &FrequencySet) -> FrequencySet {
    FrequencySet::new("second", 11e6, fs.fundamentals).unwrap()
}

#[test]
fn fixed_clock_peaks_are_affine_in_round_distance() {
    let fs = FrequencySet::fixed(10e6);
    let c = TraceConfig { alpha: 2.5, ..cfg(0.0) };
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for i in 0..20u8 {
        let pt = [i.wrapping_mul(37); 16];
        let tr = generate_trace(&fs, &KEY, &pt, &c, i as u64).unwrap();
        let rt = encrypt_with_states(&KEY, &pt).unwrap();
        for k in 1..=10 {
            xs.push(block_distance(&rt.states[k - 1], &rt.states[k]) as f64);
            ys.push(tr.samples[k * 8] as f64);
        }
    }
    // Least-squares line through (HD, sample) and its R^2.
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (my + slope * (x - mx))).powi(2))
        .sum();
    assert!((slope - 2.5).abs() < 1e-6);
    assert!(ss_res < 1e-6);
}

#[test]
fn dual_trace_is_sum_of_components() {
    let fs1 = paper_sets()[0].clone();
    let fs2 = second_core(&fs1);
    let c = cfg(1.5);
    let pt = [3u8; 16];
    let (a, b) = dual_components(&fs1, &fs2, &KEY, &[9u8; 16], &pt, &c, 77).unwrap();
    let noisy = generate_dual_trace(&fs1, &fs2, &KEY, &[9u8; 16], &pt, &c, 77).unwrap();
    let quiet = generate_dual_trace(&fs1, &fs2, &KEY, &[9u8; 16], &pt, &cfg(0.0), 77).unwrap();
    for (j, q) in quiet.samples.iter().enumerate() {
        assert_eq!(*q, (a.samples[j] + b.samples[j]) as f32);
    }
    // Noise is one draw on top of the sum, independent of the components.
    let single = generate_trace(&fs1, &KEY, &pt, &cfg(1.5), 77).unwrap();
    let noise_dual: Vec<f32> = noisy.samples.iter().zip(&quiet.samples).map(|(n, q)| n - q).collect();
    let noise_single = generate_trace(&fs1, &KEY, &pt, &cfg(0.0), 77).unwrap();
    let noise_single: Vec<f32> = single.samples.iter().zip(&noise_single.samples).map(|(n, q)| n - q).collect();
    for (x, y) in noise_dual.iter().zip(&noise_single) {
        assert!((x - y).abs() < 1e-3);
    }
    assert_eq!(noisy.ciphertext, a.ciphertext);
    assert_eq!(noisy.clock_meta.ciphertext2, Some(b.ciphertext));
}

#[test]
fn equal_fixed_cores_double_every_peak() {
    let fs1 = FrequencySet::fixed(10e6);
    let fs2 = FrequencySet::fixed(10e6 * 1.000001);
    let c = TraceConfig {
        random_trigger: false,
        ..cfg(0.0)
    };
    let pt = [0x42u8; 16];
    let dual = generate_dual_trace(&fs1, &fs2, &KEY, &KEY, &pt, &c, 1).unwrap();
    let single = generate_trace(&fs1, &KEY, &pt, &c, 1).unwrap();
    for k in 1..=10 {
        let (d, s) = (dual.samples[k * 8], single.samples[k * 8]);
        assert!((d - 2.0 * s).abs() < 1e-3 * s, "round {k}: {d} vs {s}");
    }
}

#[test]
fn randomized_peak_positions_differ() {
    let fs = paper_sets()[3].clone();
    let ts = generate_set(&fs, &KEY, 10, PlaintextMode::Random, &cfg(0.0), 4).unwrap();
    let lasts: std::collections::BTreeSet<u64> = ts
        .traces
        .iter()
        .map(|t| (t.clock_meta.round_edges_s[0][9] * 1e12).round() as u64)
        .collect();
    assert!(lasts.len() > 5);
}

#[test]
fn fixed_clock_never_fails() {
    let fixed = generate_set(&FrequencySet::fixed(10e6), &KEY, 200, PlaintextMode::Random, &cfg(0.0), 2).unwrap();
    assert_eq!(fixed.failed_fraction(), 0.0);
}

#[test]
fn failed_traces_carry_random_ciphertexts() {
    let fs = muxclock_core::presets::by_label(PREVIOUS_WORK).unwrap();
    let ts = generate_set(&fs, &KEY, 400, PlaintextMode::Random, &cfg(0.0), 8).unwrap();
    let failed: Vec<_> = ts.traces.iter().filter(|t| t.failed).collect();
    assert!(!failed.is_empty());
    for t in failed {
        let real = encrypt_with_states(&KEY, &t.plaintext).unwrap().ciphertext;
        assert_ne!(t.ciphertext, real);
    }
    for t in ts.traces.iter().filter(|t| !t.failed).take(20) {
        assert_eq!(t.ciphertext, encrypt_with_states(&KEY, &t.plaintext).unwrap().ciphertext);
    }
}

#[test]
fn generated_sets_round_trip_through_the_format() {
    for fs in paper_sets().iter().take(3) {
        let ts = generate_set(fs, &KEY, 25, PlaintextMode::Random, &cfg(1.0), 3).unwrap();
        assert_eq!(from_bytes(&to_bytes(&ts).unwrap()).unwrap(), ts);
    }
    let fs = &paper_sets()[0];
    let dual = generate_dual_set(fs, &second_core(fs), &KEY, &[1u8; 16], 10, PlaintextMode::Random, &cfg(1.0), 3).unwrap();
    assert_eq!(from_bytes(&to_bytes(&dual).unwrap()).unwrap(), dual);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generation_is_deterministic(seed in any::<u64>(), set in 0usize..7) {
        let fs = &paper_sets()[set];
        let a = generate_set(fs, &KEY, 3, PlaintextMode::Random, &cfg(1.0), seed).unwrap();
        let b = generate_set(fs, &KEY, 3, PlaintextMode::Random, &cfg(1.0), seed).unwrap();
        prop_assert_eq!(to_bytes(&a).unwrap(), to_bytes(&b).unwrap());
    }

    #[test]
    fn trace_invariants(seed in any::<u64>(), set in 0usize..7) {
        let fs = &paper_sets()[set];
        let c = cfg(0.5);
        let t = generate_trace(fs, &KEY, &[5u8; 16], &c, seed).unwrap();
        prop_assert_eq!(t.samples.len(), c.samples_per_trace());
        prop_assert!(t.sample_period_s > 0.0);
        prop_assert_eq!(t.core_count, 1);
        let edges = &t.clock_meta.round_edges_s[0];
        prop_assert_eq!(edges.len(), 10);
        prop_assert!(edges.windows(2).all(|w| w[1] > w[0]));
    }
}
