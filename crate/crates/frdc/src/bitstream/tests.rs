use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cdf::TOTAL;
use super::*;
use crate::grad::ops::CdfModel;

#[test]
fn empty_stream_is_flush_only() {
    let table = CdfTable::uniform(0, 4);
    let bytes = range_encode(&[], &[&table]).unwrap();
    assert_eq!(bytes.len(), 2);
    assert_eq!(range_decode(&bytes, &[&table], 0).unwrap(), Vec::<i32>::new());
}

#[test]
fn roundtrip_random_streams_and_tables() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..30 {
        let n_tables = rng.gen_range(1..5usize);
        let min = rng.gen_range(-70..0);
        let alpha = rng.gen_range(2..130usize);
        let tables: Vec<CdfTable> = (0..n_tables)
            .map(|_| {
                let masses: Vec<f64> = (0..alpha).map(|_| rng.gen_range(0.0..1.0)).collect();
                CdfTable::from_masses(min, &masses)
            })
            .collect();
        let refs: Vec<&CdfTable> = tables.iter().collect();
        let count = rng.gen_range(0..4000usize);
        let symbols: Vec<i32> = (0..count)
            .map(|_| min + rng.gen_range(0..alpha) as i32)
            .collect();
        let bytes = range_encode(&symbols, &refs).unwrap();
        let back = range_decode(&bytes, &refs, count).unwrap();
        assert_eq!(back, symbols, "trial {trial}");
    }
}

#[test]
fn thousand_half_mass_symbols_stay_within_bound() {
    // 1000 symbols of quantized mass 1/2 -> <= 1000 bits + 32 bits overhead
    let table = CdfTable::from_masses(0, &[0.5, 0.5]);
    assert_eq!(table.freq(0), 32768);
    let symbols: Vec<i32> = (0..1000).map(|i| i & 1).collect();
    let bytes = range_encode(&symbols, &[&table]).unwrap();
    assert!(
        (bytes.len() as u64) * 8 <= 1000 + 32,
        "{} bits",
        bytes.len() * 8
    );
    assert_eq!(range_decode(&bytes, &[&table], 1000).unwrap(), symbols);
}

#[test]
fn code_length_tracks_quantized_entropy() {
    // randomized stream: coded bits within 1% + 64 bits of the quantized
    // table entropy
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let masses: Vec<f64> = (0..128).map(|i| (-((i - 60) as f64).abs() / 9.0).exp()).collect();
    let table = CdfTable::from_masses(-64, &masses);
    let symbols: Vec<i32> = (0..20000)
        .map(|_| {
            // sample from the table itself
            let t = rng.gen_range(0..TOTAL);
            table.symbol(table.find(t))
        })
        .collect();
    let est: f64 = symbols
        .iter()
        .map(|&s| table.bits(table.index_of(s).unwrap()))
        .sum();
    let bytes = range_encode(&symbols, &[&table]).unwrap();
    let actual = (bytes.len() * 8) as f64;
    assert!(
        actual <= est * 1.01 + 64.0,
        "actual {actual} vs estimate {est}"
    );
    assert!(actual + 64.0 >= est, "suspiciously short: {actual} vs {est}");
}

#[test]
fn out_of_alphabet_symbol_is_rejected() {
    let table = CdfTable::uniform(-4, 9);
    let err = range_encode(&[0, 99], &[&table]).unwrap_err();
    match err {
        crate::Error::OutOfAlphabet { symbol, min, max, position } => {
            assert_eq!((symbol, min, max, position), (99, -4, 4, 1));
        }
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn truncated_stream_reports_position() {
    let table = CdfTable::uniform(0, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let symbols: Vec<i32> = (0..3000).map(|_| rng.gen_range(0..16)).collect();
    let bytes = range_encode(&symbols, &[&table]).unwrap();
    let cut = &bytes[..bytes.len() / 2];
    match range_decode(cut, &[&table], 3000) {
        Err(crate::Error::TruncatedStream { position }) => assert_eq!(position, cut.len()),
        other => panic!("expected truncation error, got {other:?}"),
    }
}

#[test]
fn uniform_four_symbol_table_has_pow2_steps() {
    let table = CdfTable::from_masses(0, &[0.25; 4]);
    for i in 0..4 {
        assert_eq!(table.cum(i), (i as u32) * (1 << 14));
        assert_eq!(table.freq(i), 1 << 14);
    }
}

#[test]
fn gaussian_table_peaks_at_the_mean() {
    let tables = build_cdfs(CdfModel::Gaussian, &[0.0], &[0.4], -8, 8);
    let t = &tables[0];
    let zero = t.index_of(0).unwrap();
    for i in 0..t.symbol_count() {
        assert!(t.freq(zero) >= t.freq(i));
    }
    // floor: every interval keeps mass >= 1
    for i in 0..t.symbol_count() {
        assert!(t.freq(i) >= 1);
    }
    assert_eq!(t.cum(0), 0);
    assert_eq!(t.cum(t.symbol_count()), TOTAL);
}

#[test]
fn container_roundtrip_and_corruption_checks() {
    let c = Container {
        width: 64,
        height: 32,
        channels: 1,
        intra_period: 12,
        lambda: 512.0,
        checkpoint_digest: [7u8; 32],
        frames: vec![
            FrameRecord::Intra { planes: vec![1, 2, 3, 4] },
            FrameRecord::Inter {
                z: vec![9],
                y: vec![8, 7],
                g: vec![6, 5, 4],
            },
        ],
    };
    let bytes = c.to_bytes();
    assert_eq!(Container::from_bytes(&bytes).unwrap(), c);
    assert_eq!(c.frames[0].payload_bits(), 32);
    assert_eq!(c.frames[1].payload_bits(), 48);

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(
        Container::from_bytes(&bad),
        Err(crate::Error::BadMagic { .. })
    ));
    let mut badver = bytes.clone();
    badver[4] = 0xFF;
    assert!(matches!(
        Container::from_bytes(&badver),
        Err(crate::Error::BadVersion { .. })
    ));
    let truncated = &bytes[..bytes.len() - 2];
    assert!(Container::from_bytes(truncated).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn range_coder_roundtrip_property(
        seed in 0u64..1_000_000,
        alpha in 2usize..129,
        count in 0usize..600,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let masses: Vec<f64> = (0..alpha).map(|_| rng.gen_range(0.0f64..1.0)).collect();
        let table = CdfTable::from_masses(-(alpha as i32) / 2, &masses);
        let symbols: Vec<i32> = (0..count)
            .map(|_| table.min() + rng.gen_range(0..alpha) as i32)
            .collect();
        let bytes = range_encode(&symbols, &[&table]).unwrap();
        let back = range_decode(&bytes, &[&table], count).unwrap();
        prop_assert_eq!(back, symbols);
    }
}
