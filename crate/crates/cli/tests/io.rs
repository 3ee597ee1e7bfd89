use dppbo_cli::experiment::{medians, MedianRow, ResultRow};
use dppbo_cli::output::{emit_csv, read_csv, render_chart, median_path, RESULT_HEADER};
use proptest::prelude::*;

fn row(strategy: &str, seed: u64, iteration: usize, regret: f64) -> ResultRow {
    ResultRow {
        objective: "branin".into(),
        strategy: strategy.into(),
        batch_size: 5,
        seed,
        iteration,
        immediate_regret: regret,
        cumulative_regret: 10.0 * regret,
        wall_time_ms: 1.5,
    }
}

fn median_row(strategy: &str, iteration: usize, regret: f64) -> MedianRow {
    MedianRow {
        objective: "branin".into(),
        strategy: strategy.into(),
        batch_size: 5,
        iteration,
        seeds: 1,
        immediate_regret: regret,
        cumulative_regret: regret,
        wall_time_ms: 0.0,
    }
}

#[test]
fn empty_table_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("results.csv");
    emit_csv(&[], &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, format!("{}\n", RESULT_HEADER.join(",")));
    assert!(median_path(&path).exists());
}

#[test]
fn two_rows_make_three_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    emit_csv(&[row("bucb", 0, 1, 0.25), row("bucb", 0, 2, 0.125)], &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.ends_with('\n'));
    assert_eq!(
        text.lines().nth(1).unwrap(),
        "branin,bucb,5,0,1,2.5000000000000000e-1,2.5000000000000000e0,1.5000000000000000e0"
    );
    let medians = std::fs::read_to_string(dir.path().join("out.median.csv")).unwrap();
    assert_eq!(medians.lines().count(), 3);
}

#[test]
fn unreadable_directory_reports_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let err = emit_csv(&[], &blocker.join("results.csv")).unwrap_err();
    assert!(err.to_string().contains("file"), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip_is_exact(values in prop::collection::vec((any::<u64>(), 1usize..40, any::<f64>(), any::<f64>(), 0.0f64..1e6), 0..30)) {
        let rows: Vec<ResultRow> = values
            .iter()
            .filter(|v| v.2.is_finite() && v.3.is_finite())
            .map(|&(seed, it, a, b, t)| ResultRow {
                objective: "cosines".into(),
                strategy: "est-dpp-sample".into(),
                batch_size: 10,
                seed,
                iteration: it,
                immediate_regret: a,
                cumulative_regret: b,
                wall_time_ms: t,
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        emit_csv(&rows, &path).unwrap();
        prop_assert_eq!(read_csv(&path).unwrap(), rows);
    }

    #[test]
    fn medians_match_sort_based_median(regrets in prop::collection::vec(prop::collection::vec(0.0f64..100.0, 3), 1..12)) {
        let rows: Vec<ResultRow> = regrets
            .iter()
            .enumerate()
            .flat_map(|(seed, per_it)| {
                per_it.iter().enumerate().map(move |(i, &r)| row("ucb-dpp-max", seed as u64, i + 1, r))
            })
            .collect();
        let meds = medians(&rows);
        prop_assert_eq!(meds.len(), 3);
        for m in &meds {
            let mut column: Vec<f64> = regrets.iter().map(|s| s[m.iteration - 1]).collect();
            column.sort_by(f64::total_cmp);
            let n = column.len();
            let expected = if n % 2 == 1 { column[n / 2] } else { (column[n / 2 - 1] + column[n / 2]) / 2.0 };
            prop_assert_eq!(m.immediate_regret, expected);
            prop_assert_eq!(m.seeds, n);
        }
    }
}

fn polylines(svg: &str) -> Vec<&str> {
    svg.lines().filter(|l| l.contains("<polyline")).collect()
}

fn vertices(polyline: &str) -> Vec<(f64, f64)> {
    let start = polyline.find("points=\"").unwrap() + 8;
    let end = start + polyline[start..].find('"').unwrap();
    polyline[start..end]
        .split_whitespace()
        .map(|p| {
            let (x, y) = p.split_once(',').unwrap();
            (x.parse().unwrap(), y.parse().unwrap())
        })
        .collect()
}

#[test]
fn single_series_chart() {
    let rows: Vec<MedianRow> = (1..=7).map(|i| median_row("bucb", i, 1.0 / i as f64)).collect();
    let svg = render_chart(&rows, true);
    let lines = polylines(&svg);
    assert_eq!(lines.len(), 1);
    assert_eq!(svg.matches("class=\"legend\"").count(), 1);
    assert_eq!(vertices(lines[0]).len(), 7);
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn one_polyline_per_strategy() {
    let mut rows = Vec::new();
    for s in ["bucb", "b-est", "ucb-dpp-sample"] {
        rows.extend((1..=4).map(|i| median_row(s, i, i as f64)));
    }
    let svg = render_chart(&rows, false);
    assert_eq!(polylines(&svg).len(), 3);
    assert_eq!(svg.matches("class=\"legend\"").count(), 3);
    assert!(svg.contains("data-strategy=\"ucb-dpp-sample\""));
}

#[test]
fn zero_series_sits_on_the_log_floor() {
    let rows: Vec<MedianRow> = (1..=5).map(|i| median_row("bucb", i, 0.0)).collect();
    let svg = render_chart(&rows, true);
    let frame = svg.lines().find(|l| l.contains("class=\"frame\"")).unwrap();
    let attr = |name: &str| -> f64 {
        let key = format!("{name}=\"");
        let s = frame.find(&key).unwrap() + key.len();
        frame[s..s + frame[s..].find('"').unwrap()].parse().unwrap()
    };
    let floor = attr("y") + attr("height");
    let pts = vertices(polylines(&svg)[0]);
    assert!(pts.iter().all(|&(_, y)| (y - floor).abs() < 1e-9), "{pts:?} vs {floor}");
    assert!(svg.contains(">1e-8<"));
}
