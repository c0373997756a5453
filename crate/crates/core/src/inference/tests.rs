use super::*;
use crate::fit::{fit_model, Problem};
use crate::model::{assemble, base_terms, ModelSpec, Variant};
use crate::summary::{make_bins, BinGrid, Transform};
use crate::synth::{gen_cohort, CoefTruth, SigmaSpec, TruthSpec};
use proptest::prelude::*;

fn grid() -> BinGrid {
    make_bins(100.0, 8000.0, 15000.0, Transform::Identity).unwrap()
}

fn cohort(n: usize, seed: u64) -> Dataset {
    let t = TruthSpec {
        n,
        ..Default::default()
    };
    gen_cohort(&t, &grid(), seed).unwrap().0
}

fn one_d(z: Vec<f64>, weartime: usize, days: usize) -> HistogramSummary {
    let edges: Vec<f64> = (0..=z.len()).map(|j| 100.0 * j as f64).collect();
    HistogramSummary {
        subject_id: "a".into(),
        grid: BinGrid::from_edges(edges, crate::summary::Transform::Identity).unwrap(),
        weartime_minutes: weartime,
        valid_days: days,
        data: HistogramData::OneD { z },
    }
}

use crate::summary::{HistogramData, HistogramSummary};

fn toy_fit(p: usize, v: DMatrix<f64>) -> FitResult {
    let d = DesignBlocks::from_parts(DMatrix::identity(p + 2, p), &[("a", p)], vec![]).unwrap();
    let y = DVector::from_fn(p + 2, |i, _| i as f64);
    let mut fit = crate::fit::penalized_fit(&d, &y, &[]).unwrap();
    fit.v_beta = v;
    fit
}

#[test]
fn degenerate_covariance_gives_point_mass() {
    let fit = toy_fit(3, DMatrix::zeros(3, 3));
    let d = sample_posterior(&fit, 10, 1).unwrap();
    for r in d.draws.row_iter() {
        assert_eq!(r.transpose(), fit.beta);
    }
}

#[test]
fn draws_are_reproducible_and_centred() {
    let v = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.2, 0.0, 0.2, 0.5]);
    let fit = toy_fit(3, v.clone());
    let r = 50_000;
    let a = sample_posterior(&fit, r, 9).unwrap();
    let b = sample_posterior(&fit, r, 9).unwrap();
    assert_eq!(a, b);
    for k in 0..3 {
        let col = a.draws.column(k);
        let mean = col.mean();
        let sd = v[(k, k)].sqrt();
        assert!((mean - fit.beta[k]).abs() < 4.0 * sd / (r as f64).sqrt());
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
        assert!((var - v[(k, k)]).abs() < 0.05 * v[(k, k)]);
    }
    let c = (0..r)
        .map(|i| (a.draws[(i, 0)] - fit.beta[0]) * (a.draws[(i, 1)] - fit.beta[1]))
        .sum::<f64>()
        / r as f64;
    assert!((c - 0.5).abs() < 0.05);
}

#[test]
fn indefinite_covariance_is_rejected() {
    let v = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    let fit = toy_fit(2, v);
    assert!(matches!(sample_posterior(&fit, 5, 1), Err(Error::NotPsd { .. })));
}

#[test]
fn scenario_arithmetic() {
    let h = one_d(vec![0.5, 0.3, 0.1, 0.1], 750 * 4, 4);
    let s = Scenario {
        name: "x".into(),
        minutes_moved: 15.0,
        source: BinSelection::Indices { bins: vec![0] },
        target: BinSelection::Indices { bins: vec![2, 3] },
        allocation: Allocation::EqualMassPerBin,
    };
    let out = apply_scenario(&h, &s).unwrap().unwrap();
    let z = out.one_d().unwrap();
    assert!((z[0] - 0.48).abs() < 1e-15);
    assert!((z[2] - 0.11).abs() < 1e-15);
    assert!((z[3] - 0.11).abs() < 1e-15);
    assert_eq!(z[1], 0.3);
}

#[test]
fn scenario_edge_cases() {
    let h = one_d(vec![0.01, 0.5, 0.49], 700, 1);
    let mut s = Scenario {
        name: "x".into(),
        minutes_moved: 15.0,
        source: BinSelection::Indices { bins: vec![0] },
        target: BinSelection::Midpoints {
            above: Some(200.0),
            below: None,
        },
        allocation: Allocation::EqualMassPerBin,
    };
    assert!(apply_scenario(&h, &s).unwrap().is_none());
    s.minutes_moved = 0.0;
    assert_eq!(apply_scenario(&h, &s).unwrap().unwrap(), h);
    s.target = BinSelection::Indices { bins: vec![0, 1] };
    assert!(matches!(apply_scenario(&h, &s), Err(Error::Config(_))));
    s.target = BinSelection::Midpoints {
        above: Some(9000.0),
        below: None,
    };
    assert!(matches!(apply_scenario(&h, &s), Err(Error::Config(_))));
}

proptest! {
    #[test]
    fn scenarios_conserve_mass(
        raw in proptest::collection::vec(0.0f64..1.0, 8),
        minutes in 0.0f64..60.0,
        wear in 600usize..900,
        by_width in any::<bool>(),
    ) {
        let total: f64 = raw.iter().sum::<f64>() + 1e-9;
        let z: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let s0: f64 = z.iter().sum();
        let h = one_d(z, wear, 1);
        let s = Scenario {
            name: "p".into(),
            minutes_moved: minutes,
            source: BinSelection::Indices { bins: vec![0, 1] },
            target: BinSelection::Midpoints { above: Some(450.0), below: None },
            allocation: if by_width { Allocation::EqualMassPerWidth } else { Allocation::EqualMassPerBin },
        };
        if let Some(out) = apply_scenario(&h, &s).unwrap() {
            let z = out.one_d().unwrap();
            prop_assert!((z.iter().sum::<f64>() - s0).abs() < 1e-12);
            prop_assert!(z.iter().all(|v| *v >= 0.0));
        }
    }
}

#[test]
fn null_scenario_gives_zero_interval() {
    let data = cohort(120, 3);
    let ids = data.ids.clone();
    let m = fit_model(&ModelSpec::preset(Variant::Hist), &data, &ids, &FitOptions::default()).unwrap();
    let draws = sample_posterior(&m.fit, 500, 2).unwrap();
    let s = Scenario {
        minutes_moved: 0.0,
        ..Default::default()
    };
    let pc = percent_change(&m, &draws, &data, &ids, &s, 0.95).unwrap();
    assert_eq!(
        pc.interval,
        CredibleInterval {
            level: 0.95,
            lower: 0.0,
            mean: 0.0,
            upper: 0.0
        }
    );
}

#[test]
fn cpm_linear_matches_closed_form() {
    let data = cohort(150, 4);
    let ids = data.ids.clone();
    let m = fit_model(&ModelSpec::preset(Variant::CpmLinear), &data, &ids, &FitOptions::default()).unwrap();
    let gamma = m.fit.beta[m.fit.block("cpm").unwrap().start];
    let draws = sample_posterior(&m.fit, 200, 5).unwrap();
    let s = Scenario::default();
    let pc = percent_change(&m, &draws, &data, &ids, &s, 0.95).unwrap();
    let mut expected = 0.0;
    let mut n = 0;
    for id in &ids {
        let h = &data.hist1d[id];
        if let Some(h2) = apply_scenario(h, &s).unwrap() {
            let (z, z2) = (h.one_d().unwrap(), h2.one_d().unwrap());
            let d_cpm: f64 = (0..z.len()).map(|j| h.grid.midpoints[j] * (z2[j] - z[j])).sum();
            expected += (gamma * d_cpm).exp_m1();
            n += 1;
        }
    }
    expected *= 100.0 / n as f64;
    assert_eq!(n, pc.n_subjects);
    assert!((pc.estimate - expected).abs() < 1e-10 * expected.abs().max(1.0));
    assert!(pc.interval.lower <= pc.interval.mean && pc.interval.mean <= pc.interval.upper);
}

#[test]
fn flat_coefficient_function_gives_no_change() {
    let data = cohort(100, 6);
    let ids = data.ids.clone();
    let mut m = fit_model(&ModelSpec::preset(Variant::Hist), &data, &ids, &FitOptions::default()).unwrap();
    let b = m.fit.block("f(hist)").unwrap().clone();
    m.fit.beta.rows_mut(b.start, b.len).fill(0.0);
    m.fit.v_beta.fill(0.0);
    let draws = sample_posterior(&m.fit, 50, 1).unwrap();
    let pc = percent_change(&m, &draws, &data, &ids, &Scenario::default(), 0.95).unwrap();
    assert!(pc.interval.lower.abs() < 1e-12 && pc.interval.upper.abs() < 1e-12);
}

#[test]
fn negative_target_effect_lowers_prediction() {
    let data = cohort(100, 7);
    let ids = data.ids.clone();
    let mut m = fit_model(&ModelSpec::preset(Variant::Hist), &data, &ids, &FitOptions::default()).unwrap();
    let bi = m.fit.blocks.iter().position(|b| b.label == "f(hist)").unwrap();
    let g = m.layout.coef_function_basis(bi, &grid().midpoints).unwrap();
    let b = m.fit.blocks[bi].clone();
    // coefficients reproducing f(p) = -p/1000 on the grid
    let target = DVector::from_iterator(81, grid().midpoints.iter().map(|p| -(p - 50.0) / 1000.0));
    let coef = g.clone().svd(true, true).solve(&target, 1e-12).unwrap();
    m.fit.beta.rows_mut(b.start, b.len).copy_from(&coef);
    m.fit.v_beta.fill(0.0);
    let draws = sample_posterior(&m.fit, 10, 1).unwrap();
    let pc = percent_change(&m, &draws, &data, &ids, &Scenario::default(), 0.95).unwrap();
    assert!(pc.interval.mean < 0.0);
}

#[test]
fn band_contains_estimate_and_flags_regions() {
    let data = cohort(200, 8);
    let ids = data.ids.clone();
    let m = fit_model(&ModelSpec::preset(Variant::Hist), &data, &ids, &FitOptions::default()).unwrap();
    let bi = m.fit.blocks.iter().position(|b| b.label == "f(hist)").unwrap();
    let draws = sample_posterior(&m.fit, 2000, 3).unwrap();
    let pts = grid().midpoints;
    let band = coef_function_band(&m, &draws, bi, &pts, 0.95).unwrap();
    for i in 0..pts.len() {
        assert!(band.lower[i] <= band.estimate[i] && band.estimate[i] <= band.upper[i]);
    }
    for (a, b, _) in band.significant_regions() {
        assert!(a <= b);
    }
    let mut buf = Vec::new();
    band.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("p,mean,lo,hi,excludes_zero\n"));
    assert_eq!(text.lines().count(), pts.len() + 1);
    assert!(coef_function_band(&m, &draws, bi, &[-10.0], 0.95).is_err());
}

#[test]
fn heavy_penalty_collapses_thinplate_band_to_a_line() {
    let data = cohort(150, 9);
    let ids = data.ids.clone();
    let (_, full) = ModelSpec::nonlinearity_pair(&base_terms(), 10);
    let a = assemble(&full, &data, &ids).unwrap();
    let prob = Problem::new(&a.design, &a.y).unwrap();
    let lam = vec![1e12; a.design.penalties.len()];
    let fit = prob.fit_at(&lam).unwrap();
    let m = FittedModel {
        layout: a.layout,
        fit,
        ids: a.ids,
        excluded: a.excluded,
        smearing: 1.0,
    };
    let bi = m.fit.blocks.iter().position(|b| b.label == "f(hist)").unwrap();
    let draws = sample_posterior(&m.fit, 500, 4).unwrap();
    let pts: Vec<f64> = (0..20).map(|i| 100.0 + 500.0 * i as f64).collect();
    let band = coef_function_band(&m, &draws, bi, &pts, 0.95).unwrap();
    for v in [&band.lower, &band.upper, &band.estimate] {
        let scale = v.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1e-12);
        for w in v.windows(3) {
            assert!((w[2] - 2.0 * w[1] + w[0]).abs() < 1e-4 * scale, "{w:?}");
        }
    }
}

#[test]
fn nonlinearity_test_detects_a_hump() {
    let t = TruthSpec {
        n: 300,
        sigma: SigmaSpec::TargetR2 { r2: 0.5 },
        f_true: CoefTruth::HumpDip { amplitude: 2.0 },
        ..Default::default()
    };
    let (data, _) = gen_cohort(&t, &grid(), 12).unwrap();
    let (lin, full) = ModelSpec::nonlinearity_pair(&base_terms(), 10);
    let a0 = assemble(&lin, &data, &data.ids).unwrap();
    let a1 = assemble(&full, &data, &data.ids).unwrap();
    let res = nonlinearity_test(&a0.design, &a1.design, &a0.y, &FitOptions::default()).unwrap();
    assert!(res.dof > 0.0);
    assert!(res.rejects(0.05), "{res:?}");
}

#[test]
fn identical_nesting_gives_zero_statistic() {
    let data = cohort(100, 13);
    let (lin, full) = ModelSpec::nonlinearity_pair(&base_terms(), 10);
    let a0 = assemble(&lin, &data, &data.ids).unwrap();
    let mut a1 = assemble(&full, &data, &data.ids).unwrap();
    let b = a1.design.block("f(hist)").unwrap().clone();
    // keep the linear column, zero the penalized ones
    for c in b.start + 1..b.start + b.len {
        a1.design.x.column_mut(c).fill(0.0);
    }
    let res = nonlinearity_test(&a0.design, &a1.design, &a0.y, &FitOptions::default()).unwrap();
    assert!(res.statistic < 1e-6, "{res:?}");
    assert!(res.inconclusive || res.dof < 1e-3);
}
