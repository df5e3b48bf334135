//! Acceptance checks. Each test prints one `PASS`/`FAIL` line, then asserts.
//!
//! Run with `cargo test -p flowsheet-core --test acceptance -- --nocapture`.

use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use flowsheet_core::config::RunConfig;
use flowsheet_core::evaluation::{
    detection_confusion, dice_coefficient, evaluate_method, f_test_from_variances,
    impute_false_negatives, t_test_from_summary, ImagePair, MethodReport,
};
use flowsheet_core::extraction::{
    decode_annotations, encode_annotations, extract_all, Annotation, Corrections, ExtractionConfig,
};
use flowsheet_core::formats::{
    decode_pgm, decode_series, encode_pgm, encode_series, load_mask, load_raster, load_series,
    save_mask, save_raster, save_series,
};
use flowsheet_core::morphology::{dilate_disk, opening_disk, remove_small_objects, Connectivity};
use flowsheet_core::synth::{DatasetManifest, Rendering, SurgeryRecord};
use flowsheet_core::template::{
    builtin_pack, find_matches, load_pack, save_pack, tm_extract, zncc_score, PACK_MANIFEST,
};
use flowsheet_core::{
    pixel_to_value, value_to_pixel, BinaryMask, GraphGeometry, GrayImage, Symbol, TimeSeries,
};

const SHIPPED_CONFIG: &str = include_str!("../../../config/synthetic.toml");

fn verdict(criterion: &str, ok: bool, detail: &str) {
    println!("{} {criterion}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{criterion}: {detail}");
}

fn shipped_config() -> RunConfig {
    RunConfig::from_toml(SHIPPED_CONFIG, "config/synthetic.toml").unwrap()
}

/// The 32-image synthetic suite, rendered in memory.
fn synthetic_suite(cfg: &RunConfig) -> Vec<(String, SurgeryRecord, Rendering)> {
    let manifest = DatasetManifest::plan(
        cfg.synth.images,
        &cfg.geometry,
        &cfg.synth.style,
        &cfg.synth.record,
    )
    .unwrap();
    assert_eq!(manifest.images.len(), 32);
    manifest
        .images
        .iter()
        .map(|e| {
            let (record, rendering) = manifest.render_entry(e).unwrap();
            (e.id.clone(), record, rendering)
        })
        .collect()
}

fn per_symbol_reports(
    preds: &[(String, [TimeSeries; 3])],
    truth: &[(String, SurgeryRecord, Rendering)],
) -> Vec<MethodReport> {
    Symbol::ALL
        .into_iter()
        .enumerate()
        .map(|(i, _)| {
            let pairs: Vec<ImagePair> = preds
                .iter()
                .zip(truth)
                .map(|((id, p), (_, _, r))| ImagePair {
                    image: id.clone(),
                    pred: p[i].clone(),
                    truth: r.series[i].clone(),
                })
                .collect();
            evaluate_method(&pairs).unwrap()
        })
        .collect()
}

fn tp_abs_errors(report: &MethodReport) -> Vec<i32> {
    report
        .pairs
        .iter()
        .filter_map(|p| Some((p.pred? - p.truth?).abs()))
        .collect()
}

fn extract_series(
    masks: [&BinaryMask; 3],
    geom: &GraphGeometry,
    ext: &ExtractionConfig,
) -> [TimeSeries; 3] {
    extract_all(masks[0], masks[1], masks[2], geom, ext)
        .unwrap()
        .map(|e| e.series)
}

#[test]
fn calibration_anchors_and_round_trip() {
    let g = GraphGeometry::default();
    let anchors = [(13.0, 30.0), (164.0, 210.0), (88.5, 120.0)];
    let mut worst: f64 = 0.0;
    for (p, v) in anchors {
        worst = worst.max((pixel_to_value(p, &g, 0.0) - v).abs());
    }
    let mut worst_trip: f64 = 0.0;
    for i in 0..=2500 {
        let v = i as f64 * 0.1;
        worst_trip = worst_trip.max((pixel_to_value(value_to_pixel(v, &g), &g, 0.0) - v).abs());
    }
    verdict(
        "calibration",
        worst <= 1e-9 && worst_trip <= 1e-9,
        &format!("anchor error {worst:.1e}, round-trip error {worst_trip:.1e} over [0, 250]"),
    );
}

#[test]
fn statistical_tables_from_summary_inputs() {
    // (mean difference, standard error, printed t)
    let t_rows = [
        (0.029, 0.0071, 4.13),
        (0.104, 0.0128, 8.11),
        (0.067, 0.0075, 8.82),
        (0.040, 0.0088, 4.59),
        (0.170, 0.0125, 13.56),
        (0.105, 0.0054, 19.33),
        (0.015, 0.0091, 1.65),
        (0.137, 0.0114, 12.02),
        (0.076, 0.0087, 8.73),
    ];
    let mut worst_t: f64 = 0.0;
    for (d, se, printed) in t_rows {
        let r = t_test_from_summary(d, se, 32, 0.0, 0.05).unwrap();
        worst_t = worst_t.max((r.t_statistic - printed).abs());
    }
    // (numerator variance, denominator variance, printed F, sample size)
    let f_rows = [
        (22.79, 6.70, 3.40, 654),
        (13.57, 10.54, 1.29, 659),
        (37.00, 4.19, 8.83, 657),
    ];
    let f_ok = f_rows.iter().all(|&(vn, vd, printed, n)| {
        let r = f_test_from_variances(vn, vd, n - 1, n - 1, 0.05).unwrap();
        format!("{:.2}", r.f_statistic) == format!("{printed:.2}") && r.reject
    });
    let p = flowsheet_core::stats::student_t_upper_p(4.13, 31.0).unwrap();
    let p_ok = (1.0e-4..=1.6e-4).contains(&p);
    verdict(
        "statistical tables",
        worst_t <= 0.15 && f_ok && p_ok,
        &format!(
            "max |t - printed| {worst_t:.3}, F at 2 decimals {f_ok}, p(t=4.13, df 31) = {p:.2e}"
        ),
    );
}

#[test]
fn oracle_masks_end_to_end() {
    let cfg = shipped_config();
    let start = Instant::now();
    let suite = synthetic_suite(&cfg);
    let ext = ExtractionConfig {
        corrections: Corrections::ZERO,
        ..cfg.extraction.clone()
    };
    let preds: Vec<(String, [TimeSeries; 3])> = suite
        .iter()
        .map(|(id, _, r)| {
            (
                id.clone(),
                extract_series([&r.masks[0], &r.masks[1], &r.masks[2]], &cfg.geometry, &ext),
            )
        })
        .collect();
    let reports = per_symbol_reports(&preds, &suite);
    let elapsed = start.elapsed().as_secs_f64();
    let mut ok = elapsed < 10.0;
    let mut detail = Vec::new();
    for (sym, rep) in Symbol::ALL.iter().zip(&reports) {
        let max_err = tp_abs_errors(rep).into_iter().max().unwrap_or(0);
        ok &= rep.metrics.precision == 1.0 && rep.metrics.recall == 1.0 && max_err <= 2;
        detail.push(format!(
            "{} P {:.3} R {:.3} max|err| {max_err}",
            sym.short_name(),
            rep.metrics.precision,
            rep.metrics.recall
        ));
    }
    detail.push(format!("{elapsed:.2}s"));
    verdict("oracle end-to-end", ok, &detail.join(", "));
}

#[test]
fn template_matching_within_five() {
    let cfg = shipped_config();
    let suite = synthetic_suite(&cfg);
    let templates = cfg.load_templates().unwrap();
    let preds: Vec<(String, [TimeSeries; 3])> = suite
        .iter()
        .map(|(id, _, r)| {
            let matches = find_matches(&r.image, &templates).unwrap();
            let series = Symbol::ALL
                .map(|s| tm_extract(&matches, &cfg.geometry, s, cfg.template_corrections.get(s)));
            (id.clone(), series)
        })
        .collect();
    let reports = per_symbol_reports(&preds, &suite);
    let mut ok = true;
    let mut detail = Vec::new();
    for (sym, rep) in Symbol::ALL.iter().zip(&reports) {
        let errs = tp_abs_errors(rep);
        let within = errs.iter().filter(|&&e| e <= 5).count() as f64 / errs.len().max(1) as f64;
        ok &= rep.metrics.f1 >= 0.90 && within >= 0.95;
        detail.push(format!(
            "{} F1 {:.3} within±5 {:.3}",
            sym.short_name(),
            rep.metrics.f1,
            within
        ));
    }
    verdict("template matching ±5", ok, &detail.join(", "));
}

#[test]
fn bias_correction_for_buffered_masks() {
    let cfg = shipped_config();
    let suite = synthetic_suite(&cfg);
    let buffered: Vec<[BinaryMask; 3]> = suite
        .iter()
        .map(|(_, _, r)| {
            [
                r.masks[0].clone(),
                dilate_disk(&r.masks[1], 3),
                dilate_disk(&r.masks[2], 3),
            ]
        })
        .collect();
    let mean_bp_errors = |corrections: Corrections| -> [f64; 2] {
        let ext = ExtractionConfig {
            corrections,
            ..cfg.extraction.clone()
        };
        let preds: Vec<(String, [TimeSeries; 3])> = suite
            .iter()
            .zip(&buffered)
            .map(|((id, _, _), m)| {
                (
                    id.clone(),
                    extract_series([&m[0], &m[1], &m[2]], &cfg.geometry, &ext),
                )
            })
            .collect();
        let reports = per_symbol_reports(&preds, &suite);
        [1, 2].map(|i| reports[i].true_positive_errors.mean_error.unwrap())
    };
    let [dbp_raw, sbp_raw] = mean_bp_errors(Corrections::ZERO);
    let [dbp_fixed, sbp_fixed] = mean_bp_errors(Corrections::MASK_DEFAULT);
    let ok = (dbp_raw - 4.0).abs() <= 1.0
        && (sbp_raw + 4.0).abs() <= 1.0
        && dbp_fixed.abs() <= 0.5
        && sbp_fixed.abs() <= 0.5;
    verdict(
        "bias correction",
        ok,
        &format!(
            "uncorrected dbp {dbp_raw:+.2} sbp {sbp_raw:+.2}, corrected dbp {dbp_fixed:+.2} sbp {sbp_fixed:+.2}"
        ),
    );
}

fn mask_strategy(max_side: usize) -> impl Strategy<Value = BinaryMask> {
    (1..=max_side, 1..=max_side, 0.1f64..0.9).prop_flat_map(|(w, h, density)| {
        proptest::collection::vec(proptest::bool::weighted(density), w * h)
            .prop_map(move |bits| BinaryMask::new(w, h, bits).unwrap())
    })
}

fn run_property<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

#[test]
fn property_suites() {
    let mut failures: Vec<String> = Vec::new();
    let mut check = |name: &str, r: Result<(), String>| {
        if let Err(e) = r {
            failures.push(format!("{name}: {e}"));
        }
    };

    check(
        "dice identities",
        run_property(
            256,
            mask_strategy(24).prop_flat_map(|a| {
                let (w, h) = (a.width(), a.height());
                (Just(a), proptest::collection::vec(any::<bool>(), w * h))
                    .prop_map(move |(a, bits)| (a, BinaryMask::new(w, h, bits).unwrap()))
            }),
            |(a, b)| {
                let ab = dice_coefficient(&a, &b).unwrap();
                prop_assert!((ab - dice_coefficient(&b, &a).unwrap()).abs() < 1e-12);
                if !a.is_empty() {
                    prop_assert_eq!(dice_coefficient(&a, &a).unwrap(), 1.0);
                    let complement = BinaryMask::new(
                        a.width(),
                        a.height(),
                        a.bits().iter().map(|b| !b).collect(),
                    )
                    .unwrap();
                    if !complement.is_empty() {
                        prop_assert_eq!(dice_coefficient(&a, &complement).unwrap(), 0.0);
                    }
                }
                prop_assert!((0.0..=1.0).contains(&ab));
                Ok(())
            },
        ),
    );

    check(
        "opening idempotent and anti-extensive",
        run_property(1000, mask_strategy(32), |m| {
            let once = opening_disk(&m, 2);
            prop_assert!(once.is_subset_of(&m));
            prop_assert_eq!(opening_disk(&once, 2), once);
            Ok(())
        }),
    );

    check(
        "small-object boundary at 12 pixels",
        run_property(64, (0usize..20, 0usize..20), |(r0, c0)| {
            let mut m = BinaryMask::empty(40, 40).unwrap();
            for i in 0..12 {
                m.set(r0 + i / 4, c0 + i % 4, true);
            }
            prop_assert_eq!(
                remove_small_objects(&m, 12, Connectivity::Eight).count(),
                12
            );
            m.set(r0, c0, false);
            prop_assert_eq!(remove_small_objects(&m, 12, Connectivity::Eight).count(), 0);
            Ok(())
        }),
    );

    check(
        "zncc bounds and affine invariance",
        run_property(
            100,
            (4usize..64).prop_flat_map(|n| {
                (
                    proptest::collection::vec(0.0f64..255.0, n),
                    proptest::collection::vec(0.0f64..255.0, n),
                    0.1f64..5.0,
                    -100.0f64..100.0,
                )
            }),
            |(a, b, scale, offset)| {
                let s = zncc_score(&a, &b);
                prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&s));
                let scaled: Vec<f64> = b.iter().map(|v| v * scale + offset).collect();
                prop_assert!((zncc_score(&a, &scaled) - s).abs() < 1e-9);
                let flipped: Vec<f64> = b.iter().map(|v| -v * scale + offset).collect();
                prop_assert!((zncc_score(&a, &flipped) + s).abs() < 1e-9);
                Ok(())
            },
        ),
    );

    let imputation = || -> Result<(), String> {
        let ts = |slots: Vec<Option<i32>>| TimeSeries::from_slots(Symbol::HeartRate, 5, slots);
        let cases = [
            (
                vec![Some(10), None, Some(20)],
                vec![Some(1); 3],
                vec![Some(10), Some(15), Some(20)],
            ),
            (
                vec![None, None, Some(20)],
                vec![Some(1); 3],
                vec![Some(20), Some(20), Some(20)],
            ),
            (
                vec![Some(10), None, None, Some(30)],
                vec![Some(1), Some(1), None, Some(1)],
                vec![Some(10), Some(10), None, Some(30)],
            ),
        ];
        for (pred, truth, want) in cases {
            let got =
                impute_false_negatives(&ts(pred.clone()), &ts(truth)).map_err(|e| e.to_string())?;
            if got.slots != want {
                return Err(format!(
                    "{pred:?} imputed to {:?}, expected {want:?}",
                    got.slots
                ));
            }
        }
        Ok(())
    };
    check("imputation patterns", imputation());

    let geom = GraphGeometry::default();
    check(
        "confusion totals",
        run_property(
            256,
            (
                proptest::collection::vec(proptest::option::of(30i32..210), geom.slot_count),
                proptest::collection::vec(proptest::option::of(30i32..210), geom.slot_count),
            ),
            |(p, t)| {
                let c = detection_confusion(
                    &TimeSeries::from_slots(Symbol::SystolicBp, 5, p),
                    &TimeSeries::from_slots(Symbol::SystolicBp, 5, t),
                )
                .unwrap();
                prop_assert_eq!(c.total(), 59);
                Ok(())
            },
        ),
    );

    verdict(
        "property suites",
        failures.is_empty(),
        &if failures.is_empty() {
            "dice, opening (1,000 masks), 12-pixel boundary, zncc (100 pairs), imputation, confusion totals".to_string()
        } else {
            failures.join("; ")
        },
    );
}

#[test]
fn format_round_trips() {
    let cfg = shipped_config();
    let dir = tempfile::tempdir().unwrap();
    let manifest =
        DatasetManifest::plan(2, &cfg.geometry, &cfg.synth.style, &cfg.synth.record).unwrap();
    let (_, r) = manifest.render_entry(&manifest.images[0]).unwrap();
    let mut failures = Vec::new();

    let raster_path = dir.path().join("image.pgm");
    save_raster(&r.image, &raster_path).unwrap();
    let raster: GrayImage = load_raster(&raster_path).unwrap();
    if raster != r.image || encode_pgm(&raster) != std::fs::read(&raster_path).unwrap() {
        failures.push("raster");
    }
    if decode_pgm(&encode_pgm(&raster), "mem").unwrap() != raster {
        failures.push("raster (in memory)");
    }

    let mask_path = dir.path().join("mask.pgm");
    save_mask(&r.masks[2], &mask_path).unwrap();
    let mask = load_mask(&mask_path).unwrap();
    let resaved = dir.path().join("mask2.pgm");
    save_mask(&mask, &resaved).unwrap();
    if mask != r.masks[2] || std::fs::read(&mask_path).unwrap() != std::fs::read(&resaved).unwrap()
    {
        failures.push("mask");
    }

    let series_path = dir.path().join("dbp.csv");
    save_series(&r.series[1], &series_path).unwrap();
    let series = load_series(&series_path, Symbol::DiastolicBp, &cfg.geometry).unwrap();
    let text = std::fs::read_to_string(&series_path).unwrap();
    if series != r.series[1] || encode_series(&series) != text {
        failures.push("series");
    }
    if decode_series(&text, Symbol::DiastolicBp, &cfg.geometry, "mem").unwrap() != series {
        failures.push("series (in memory)");
    }

    let ann_text = encode_annotations(&r.annotations);
    let anns: Vec<Annotation> = decode_annotations(&ann_text, "mem").unwrap();
    if anns != r.annotations || encode_annotations(&anns) != ann_text {
        failures.push("annotations");
    }

    let manifest_text = manifest.encode();
    let decoded = DatasetManifest::decode(&manifest_text, "mem").unwrap();
    if decoded != manifest || decoded.encode() != manifest_text {
        failures.push("dataset manifest");
    }

    let pack = builtin_pack(&cfg.templates).unwrap();
    let pack_dir = dir.path().join("pack");
    save_pack(&pack, &pack_dir).unwrap();
    let loaded = load_pack(&pack_dir).unwrap();
    let again = dir.path().join("pack2");
    save_pack(&loaded, &again).unwrap();
    if loaded != pack
        || std::fs::read(pack_dir.join(PACK_MANIFEST)).unwrap()
            != std::fs::read(again.join(PACK_MANIFEST)).unwrap()
    {
        failures.push("template pack");
    }

    verdict(
        "format round-trips",
        failures.is_empty(),
        &if failures.is_empty() {
            "raster, mask, series, annotations, dataset manifest, template pack".to_string()
        } else {
            format!("mismatch in {}", failures.join(", "))
        },
    );
}
