use finsent_demo::{clip_curve, label_bands, parse_opens, simulate_feedback};

#[test]
fn opens_parse_from_mixed_separators() {
    assert_eq!(
        parse_opens("1, 2\n3.5  4").unwrap(),
        vec![1.0, 2.0, 3.5, 4.0]
    );
    assert!(parse_opens("1, x").is_err());
}

#[test]
fn bands_start_after_the_window() {
    let opens: Vec<f64> = (0..40)
        .map(|i| 100.0 + if i % 2 == 0 { 1.0 } else { -1.0 } * i as f64 * 0.1)
        .collect();
    let rows = label_bands(&opens, 5).unwrap();
    assert_eq!(rows.len(), 39);
    assert!(rows[..5]
        .iter()
        .all(|r| r.label == "unknown" && r.lower.is_none()));
    for r in &rows[5..] {
        let (lo, hi) = (r.lower.unwrap(), r.upper.unwrap());
        let expected = if r.ret > hi {
            "positive"
        } else if r.ret < lo {
            "negative"
        } else {
            "neutral"
        };
        assert_eq!(r.label, expected);
    }
    assert!(label_bands(&[1.0, -1.0], 5).is_err());
}

#[test]
fn clip_curve_is_flat_past_the_band() {
    let c = clip_curve(1.0, 0.2, 21).unwrap();
    assert_eq!(c.ratio.len(), 21);
    for (r, y) in c.ratio.iter().zip(&c.clipped) {
        let expected = if *r > 1.2 { 1.2 } else { *r };
        assert!((y - expected).abs() < 1e-12);
    }
    assert!(clip_curve(1.0, 1.5, 10).is_err());
}

#[test]
fn feedback_run_is_downsampled_and_on_the_simplex() {
    let run = simulate_feedback(1, 1e-3, 2, 3, 120).unwrap();
    assert_eq!(run.items, 360);
    assert!(run.weights.len() <= 201);
    assert_eq!(*run.steps.last().unwrap(), 360);
    for w in &run.weights {
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    assert_eq!(run.sources.len(), run.fidelity.len());
}
