use proptest::prelude::*;

use memboson::analysis::{fidelity, validate_ratios};
use memboson::eventstream::{decode_stream, encode_stream, ChannelMap, EventRecord};
use memboson::matrix::direct_sum;
use memboson::permanent::{permanent_naive, permanent_parallel, permanent_ryser};
use memboson::pipeline::{extract_coincidences, process_bytes_chunked, CalibrationTable, ExtractParams};
use memboson::sampling::{Distribution, OccupancyPattern};
use memboson::{ComplexMatrix, C64};

fn matrix(n: usize) -> impl Strategy<Value = ComplexMatrix> {
    prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), n * n).prop_map(move |v| {
        ComplexMatrix::new(n, n, v.into_iter().map(|(re, im)| C64::new(re, im)).collect()).unwrap()
    })
}

fn sized_matrix(max: usize) -> impl Strategy<Value = ComplexMatrix> {
    (1..=max).prop_flat_map(matrix)
}

fn close(a: C64, b: C64, tol: f64) -> bool {
    (a - b).norm() <= tol * b.norm().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ryser_agrees_with_naive(m in sized_matrix(7)) {
        let naive = permanent_naive(&m).unwrap();
        prop_assert!(close(permanent_ryser(&m).unwrap(), naive, 1e-9));
        prop_assert!(close(permanent_parallel(&m, 3).unwrap(), naive, 1e-9));
    }

    #[test]
    fn permanent_is_permutation_invariant(
        (m, rows, cols) in (1usize..=7).prop_flat_map(|n| (
            matrix(n),
            Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
            Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
        ))
    ) {
        let n = m.rows();
        let shuffled = ComplexMatrix::from_fn(n, n, |r, c| m[(rows[r], cols[c])]);
        prop_assert!(close(permanent_ryser(&shuffled).unwrap(), permanent_ryser(&m).unwrap(), 1e-9));
    }

    #[test]
    fn permanent_scales_with_rows(
        (m, d) in (1usize..=6).prop_flat_map(|n| (matrix(n), prop::collection::vec((0.1..2.0f64, -1.0..1.0f64), n)))
    ) {
        let n = m.rows();
        let scaled = ComplexMatrix::from_fn(n, n, |r, c| C64::new(d[r].0, d[r].1) * m[(r, c)]);
        let factor = d.iter().fold(C64::new(1.0, 0.0), |acc, &(re, im)| acc * C64::new(re, im));
        prop_assert!(close(permanent_ryser(&scaled).unwrap(), factor * permanent_ryser(&m).unwrap(), 1e-9));
    }

    #[test]
    fn permanent_factorizes_over_blocks(a in sized_matrix(4), b in sized_matrix(4)) {
        let sum = direct_sum(&[a.clone(), b.clone()]).unwrap();
        let expected = permanent_ryser(&a).unwrap() * permanent_ryser(&b).unwrap();
        prop_assert!(close(permanent_ryser(&sum).unwrap(), expected, 1e-9));
    }
}

fn distribution(weights: &[f64]) -> Distribution {
    let pats = (0..weights.len())
        .map(|i| OccupancyPattern::from_modes(weights.len(), &[i]).unwrap())
        .collect();
    Distribution::from_weights(pats, weights.to_vec()).unwrap()
}

proptest! {
    #[test]
    fn counter_depends_only_on_band_membership(
        pairs in prop::collection::vec((0.01..1.0f64, 0.01..1.0f64, 0.1..10.0f64), 1..200)
    ) {
        let plain: Vec<f64> = pairs.iter().map(|(p, q, _)| p / q).collect();
        let scaled: Vec<f64> = pairs.iter().map(|(p, q, c)| (c * p) / (c * q)).collect();
        let a = validate_ratios(&plain, 0.9, 1.5).unwrap();
        let b = validate_ratios(&scaled, 0.9, 1.5).unwrap();
        prop_assert_eq!(&a.counter, &b.counter);
        let mut prev = 0;
        for &c in &a.counter {
            prop_assert!((c - prev).abs() <= 2);
            prev = c;
        }
    }

    #[test]
    fn fidelity_is_symmetric_and_relabeling_invariant(
        (ws, vs, perm) in (2usize..8).prop_flat_map(|n| (
            prop::collection::vec(0.0..1.0f64, n),
            prop::collection::vec(0.0..1.0f64, n),
            Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
        ))
    ) {
        prop_assume!(ws.iter().sum::<f64>() > 0.01 && vs.iter().sum::<f64>() > 0.01);
        let (s, t) = (distribution(&ws), distribution(&vs));
        let f = fidelity(&s, &t).unwrap();
        prop_assert!((f - fidelity(&t, &s).unwrap()).abs() < 1e-12);
        prop_assert!((fidelity(&s, &s).unwrap() - 1.0).abs() < 1e-12);
        let relabel = |w: &[f64]| perm.iter().map(|&i| w[i]).collect::<Vec<_>>();
        let g = fidelity(&distribution(&relabel(&ws)), &distribution(&relabel(&vs))).unwrap();
        prop_assert!((f - g).abs() < 1e-12);
    }

    #[test]
    fn stream_round_trips(mut recs in prop::collection::vec((0u8..32, 0u64..1_000_000), 0..300)) {
        recs.sort_by_key(|r| r.1);
        let records: Vec<EventRecord> = recs.into_iter().map(|(c, t)| EventRecord::new(c, t)).collect();
        let mut buf = Vec::new();
        encode_stream(&records, &mut buf).unwrap();
        prop_assert_eq!(buf.len(), 12 + 9 * records.len());
        prop_assert_eq!(decode_stream(&buf).unwrap(), records);
    }
}

/// Dense random clicks on four triggers and four signals, with random
/// calibration offsets, so windows overlap chunk boundaries constantly.
fn noisy_stream() -> impl Strategy<Value = (Vec<EventRecord>, Vec<f64>)> {
    (
        prop::collection::vec((0u8..8, 0u64..40_000), 50..600),
        prop::collection::vec(-6i32..=6, 8),
    )
        .prop_map(|(raw, offs)| {
            let mut records: Vec<EventRecord> = raw
                .into_iter()
                .map(|(c, t)| EventRecord::new(if c < 4 { c } else { 12 + c }, t))
                .collect();
            records.sort();
            let mut offsets = vec![0.0; 32];
            for (i, o) in offs.into_iter().enumerate() {
                let ch = if i < 4 { i } else { 12 + i };
                offsets[ch] = o as f64 * 0.5;
            }
            (records, offsets)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chunked_extraction_equals_single_pass((records, offsets) in noisy_stream(), workers in 1usize..9, fold in 2usize..4) {
        let map = ChannelMap::default();
        let table = CalibrationTable { offsets_ns: offsets, ..CalibrationTable::default() };
        let params = ExtractParams::new(fold, 3, 4);
        let single = extract_coincidences(&records, &map, &table, &params).unwrap();
        prop_assert_eq!(&extract_coincidences(&records, &map, &table, &params).unwrap(), &single);
        let mut bytes = Vec::new();
        encode_stream(&records, &mut bytes).unwrap();
        let (chunked, _) = process_bytes_chunked(&bytes, &map, &table, &params, workers, None).unwrap();
        prop_assert_eq!(chunked, single);
    }
}
