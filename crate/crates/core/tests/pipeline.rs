use actihist::profile::{
    clean_cohort, mark_nonwear, parse_profiles, write_profiles, CleaningConfig, ProfileFormat, RawProfile,
};
use actihist::summary::{hist1d, hist_split, make_bins, rebin, Transform};
use actihist::synth::{gen_profiles, TruthSpec};
use chrono::NaiveDate;
use proptest::prelude::*;

fn counts_strategy() -> impl Strategy<Value = Vec<Option<u32>>> {
    prop::collection::vec(
        prop_oneof![
            3 => Just(Some(0u32)),
            5 => (1u32..20000).prop_map(Some),
            1 => Just(None),
        ],
        1..3000,
    )
}

fn profile(counts: Vec<Option<u32>>, hour: u32) -> RawProfile {
    let start = NaiveDate::from_ymd_opt(2024, 5, 6).unwrap().and_hms_opt(hour, 0, 0).unwrap();
    RawProfile::new("s1", start, counts).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn profiles_round_trip(counts in counts_strategy(), hour in 0u32..24) {
        let p = profile(counts, hour);
        for format in [ProfileFormat::WideCsv, ProfileFormat::LongCsv] {
            let mut buf = Vec::new();
            write_profiles(&mut buf, std::slice::from_ref(&p), format).unwrap();
            let back = parse_profiles(std::str::from_utf8(&buf).unwrap(), format, "memory").unwrap();
            // Trailing missing minutes carry no information in either layout.
            let trim = |v: &[Option<u32>]| {
                let end = v.iter().rposition(|c| c.is_some()).map_or(0, |i| i + 1);
                v[..end].to_vec()
            };
            prop_assert_eq!(back.len(), 1);
            prop_assert_eq!(&back[0].subject_id, &p.subject_id);
            prop_assert_eq!(trim(&back[0].counts), trim(&p.counts));
        }
    }

    #[test]
    fn nonwear_marking_is_monotone_and_idempotent(counts in counts_strategy(), a in 0usize..40, b in 0usize..40) {
        let p = profile(counts, 0);
        let (short, long) = (a.min(b), a.max(b));
        let cfg = |z| CleaningConfig { zero_block_len: z, ..Default::default() };
        let ms = mark_nonwear(&p, &cfg(short));
        let ml = mark_nonwear(&p, &cfg(long));
        prop_assert!(ms.missing_minutes() >= ml.missing_minutes());
        prop_assert_eq!(mark_nonwear(&ms, &cfg(short)), ms.clone());
        for (s, l) in ms.counts.iter().zip(&ml.counts) {
            prop_assert!(l.is_none() <= s.is_none());
        }
    }
}

#[test]
fn simulated_cohort_histograms_are_densities() {
    let t = TruthSpec {
        n: 60,
        ..Default::default()
    };
    let (raw, _) = gen_profiles(&t, 77).unwrap();
    let (cleaned, report) = clean_cohort(&raw, &CleaningConfig::default()).unwrap();
    assert_eq!(report.n_profiles, 60);
    assert_eq!(report.subjects.iter().filter(|s| s.valid).count(), report.n_valid);

    let fine = make_bins(100.0, 8000.0, 15000.0, Transform::Identity).unwrap();
    let coarse = make_bins(400.0, 8000.0, 15000.0, Transform::Identity).unwrap();
    for p in cleaned.iter().filter(|p| p.valid) {
        let h = hist1d(p, &fine).unwrap();
        let z = h.one_d().unwrap();
        assert_eq!(z.len(), 81);
        assert!(z.iter().all(|&v| v >= 0.0));
        assert!((z.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let r = rebin(&h, &coarse).unwrap();
        assert!((r.one_d().unwrap().iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let s = hist_split(p, &fine).unwrap();
        assert_eq!(s.weartime_minutes, h.weartime_minutes);
    }
}
