use std::path::Path;

use nilm::ingest::{decode_cache, encode_cache, parse_channel, parse_channel_text, read_cache, serialize_channel, write_cache, IngestError};
use nilm_core::series::{resample_gaps, PowerSeries};
use proptest::prelude::*;

fn series_strategy() -> impl Strategy<Value = PowerSeries> {
    (0u8..4, proptest::collection::vec((1i64..100, prop_oneof![Just(0.0), 0.0f64..5.0, any::<u64>().prop_map(|b| f64::from_bits(b >> 2))]), 1..200))
        .prop_map(|(id, steps)| {
            let mut t = 1_300_000_000;
            let mut ts = Vec::new();
            let mut p = Vec::new();
            for (dt, v) in steps {
                t += dt;
                ts.push(t);
                p.push(if v.is_finite() { v.abs() } else { 1.0 });
            }
            PowerSeries::new(id, ts, p, 6).unwrap()
        })
}

proptest! {
    #[test]
    fn text_round_trip_is_identity(s in series_strategy()) {
        let text = serialize_channel(&s);
        let (back, report) = parse_channel_text(&text, s.appliance_id(), Path::new("x")).unwrap();
        prop_assert_eq!(report.clamped_negative, 0);
        prop_assert_eq!(back.timestamps(), s.timestamps());
        prop_assert!(back.power().iter().zip(s.power()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn cache_round_trip_is_bit_exact(s in series_strategy()) {
        let back = decode_cache(&encode_cache(&s), Path::new("x")).unwrap();
        prop_assert_eq!(back.timestamps(), s.timestamps());
        prop_assert!(back.power().iter().zip(s.power()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert_eq!(back.appliance_id(), s.appliance_id());
    }

    #[test]
    fn gap_filling_only_copies_preceding_samples(s in series_strategy()) {
        let runs = resample_gaps(&s, 30);
        let originals: std::collections::HashSet<u64> = s.power().iter().map(|v| v.to_bits()).collect();
        for run in &runs.runs {
            for w in run.power.windows(2) {
                prop_assert!(originals.contains(&w[1].to_bits()));
            }
            prop_assert!(run.power.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }
}

#[test]
fn files_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("channel_5.dat");
    std::fs::write(&path, "100 500\n106 0\n112 1500\n").unwrap();
    let s = parse_channel(&path, 1).unwrap();
    assert_eq!(s.power(), &[0.5, 0.0, 1.5]);
    assert_eq!(s.appliance_id(), 1);

    let cache = dir.path().join("c.bin");
    write_cache(&cache, &s).unwrap();
    assert_eq!(read_cache(&cache).unwrap(), s);

    let missing = dir.path().join("nope.dat");
    let err = parse_channel(&missing, 0).unwrap_err();
    assert!(matches!(err, IngestError::Io { .. }));
    assert!(err.to_string().contains("nope.dat"));

    std::fs::write(&path, "100 5\n\n106 x\n").unwrap();
    let err = parse_channel(&path, 0).unwrap_err();
    assert!(matches!(err, IngestError::Format { line: 3, .. }), "{err}");
}

#[test]
fn gap_examples() {
    let s = PowerSeries::new(0, vec![0, 6, 18, 24], vec![1.0, 2.0, 3.0, 4.0], 6).unwrap();
    let runs = resample_gaps(&s, 30);
    assert_eq!(runs.runs.len(), 1);
    // span 24 s at 6 s gives 24 / 6 + 1 slots
    assert_eq!(runs.runs[0].power, vec![1.0, 2.0, 2.0, 3.0, 4.0]);
    let s = PowerSeries::new(0, vec![0, 6, 3606], vec![1.0, 2.0, 3.0], 6).unwrap();
    assert_eq!(resample_gaps(&s, 30).runs.len(), 2);
}
