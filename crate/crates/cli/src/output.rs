//! CSV tables and SVG charts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use dppbo_core::BoundReport;

use crate::experiment::{medians, MedianRow, ResultRow};

pub const RESULT_HEADER: [&str; 8] = [
    "objective",
    "strategy",
    "batch_size",
    "seed",
    "iteration",
    "immediate_regret",
    "cumulative_regret",
    "wall_time_ms",
];

/// Log-scale charts draw values below this at the axis floor.
pub const PLOT_EPSILON: f64 = 1e-8;

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: line {line}: {message}")]
    Format {
        path: PathBuf,
        line: u64,
        message: String,
    },
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> OutputError + '_ {
    move |source| OutputError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// 17 significant digits, enough to read back the same `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// `<stem>.median.csv` next to `path`.
pub fn median_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
    path.with_file_name(format!("{stem}.median.csv"))
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>, OutputError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    csv::Writer::from_path(path).map_err(csv_err(path))
}

/// Writes the result rows to `path` and their per-iteration medians to the
/// sibling `<name>.median.csv`.
pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<(), OutputError> {
    let mut w = writer(path)?;
    w.write_record(RESULT_HEADER).map_err(csv_err(path))?;
    for r in rows {
        w.write_record([
            r.objective.clone(),
            r.strategy.clone(),
            r.batch_size.to_string(),
            r.seed.to_string(),
            r.iteration.to_string(),
            format_float(r.immediate_regret),
            format_float(r.cumulative_regret),
            format_float(r.wall_time_ms),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    emit_median_csv(&medians(rows), &median_path(path))
}

pub fn emit_median_csv(rows: &[MedianRow], path: &Path) -> Result<(), OutputError> {
    let mut w = writer(path)?;
    w.write_record([
        "objective",
        "strategy",
        "batch_size",
        "iteration",
        "seeds",
        "median_immediate_regret",
        "median_cumulative_regret",
        "median_wall_time_ms",
    ])
    .map_err(csv_err(path))?;
    for r in rows {
        w.write_record([
            r.objective.clone(),
            r.strategy.clone(),
            r.batch_size.to_string(),
            r.iteration.to_string(),
            r.seeds.to_string(),
            format_float(r.immediate_regret),
            format_float(r.cumulative_regret),
            format_float(r.wall_time_ms),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Parses a file written by [`emit_csv`].
pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>, OutputError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = r.headers().map_err(csv_err(path))?.clone();
    if header.iter().ne(RESULT_HEADER) {
        return Err(OutputError::Format {
            path: path.to_path_buf(),
            line: 1,
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |field: &str| OutputError::Format {
            path: path.to_path_buf(),
            line,
            message: format!("cannot parse {field}"),
        };
        rows.push(ResultRow {
            objective: rec[0].to_string(),
            strategy: rec[1].to_string(),
            batch_size: rec[2].parse().map_err(|_| bad("batch_size"))?,
            seed: rec[3].parse().map_err(|_| bad("seed"))?,
            iteration: rec[4].parse().map_err(|_| bad("iteration"))?,
            immediate_regret: rec[5].parse().map_err(|_| bad("immediate_regret"))?,
            cumulative_regret: rec[6].parse().map_err(|_| bad("cumulative_regret"))?,
            wall_time_ms: rec[7].parse().map_err(|_| bad("wall_time_ms"))?,
        });
    }
    Ok(rows)
}

/// Writes one row per iteration of every report.
pub fn emit_bounds_csv(reports: &[(String, BoundReport)], path: &Path) -> Result<(), OutputError> {
    let mut w = writer(path)?;
    w.write_record([
        "objective",
        "strategy",
        "batch_size",
        "seed",
        "iteration",
        "evaluations",
        "realized_regret",
        "gamma_estimate",
        "rhs",
        "rhs_squared",
        "within_bound",
        "negative_rhs",
        "entropy_sum",
        "entropies_partial",
        "next_first_violations",
        "next_first_checks",
        "telescoping_violations",
    ])
    .map_err(csv_err(path))?;
    for (objective, rep) in reports {
        for row in &rep.rows {
            w.write_record([
                objective.clone(),
                rep.algorithm.name().to_string(),
                rep.batch_size.to_string(),
                rep.seed.to_string(),
                row.iteration.to_string(),
                row.evaluations.to_string(),
                format_float(row.realized_regret),
                format_float(row.gamma),
                format_float(row.rhs),
                row.rhs_squared.map(format_float).unwrap_or_default(),
                row.within_bound.to_string(),
                row.negative_rhs.to_string(),
                format_float(row.entropy_sum),
                row.entropies_partial.to_string(),
                rep.next_first_violations.to_string(),
                rep.next_first_checks.to_string(),
                rep.telescoping_violations.to_string(),
            ])
            .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Writes `rank,eigenvalue` rows.
pub fn emit_spectrum_csv(eigenvalues: &[f64], path: &Path) -> Result<(), OutputError> {
    let mut w = writer(path)?;
    w.write_record(["rank", "eigenvalue"]).map_err(csv_err(path))?;
    for (i, v) in eigenvalues.iter().enumerate() {
        w.write_record([(i + 1).to_string(), format_float(*v)])
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

/// SVG line chart of median immediate regret against iteration, one series
/// per strategy. All rows must share one objective and batch size.
pub fn render_chart(rows: &[MedianRow], log_scale: bool) -> String {
    let mut series: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        series
            .entry(&r.strategy)
            .or_default()
            .push((r.iteration as f64, r.immediate_regret));
    }
    let transform = |y: f64| {
        if log_scale {
            y.max(PLOT_EPSILON).log10()
        } else {
            y
        }
    };
    let xs = rows.iter().map(|r| r.iteration as f64);
    let ys = rows.iter().map(|r| transform(r.immediate_regret));
    let (x0, x1) = extent(xs);
    let (mut y0, mut y1) = extent(ys);
    if log_scale {
        y0 = y0.floor();
        y1 = y1.ceil();
    } else {
        y0 = y0.min(0.0);
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let (x0, x1) = if x1 <= x0 { (x0, x0 + 1.0) } else { (x0, x1) };
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
    let py = |y: f64| TOP + plot_h - (transform(y) - y0) / (y1 - y0) * plot_h;

    let (title_obj, title_b) = rows
        .first()
        .map(|r| (r.objective.as_str(), r.batch_size))
        .unwrap_or(("", 0));
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{title_obj}, B = {title_b}</text>"#,
        LEFT + plot_w / 2.0
    );
    let _ = writeln!(
        svg,
        r#"<rect class="frame" x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let x = x0 + (x1 - x0) * i as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            px(x),
            TOP + plot_h + 18.0,
            trim_number(x)
        );
    }
    for i in 0..=4 {
        let t = y0 + (y1 - y0) * i as f64 / 4.0;
        let label = if log_scale {
            format!("1e{}", trim_number(t))
        } else {
            trim_number(t)
        };
        let y = TOP + plot_h - (t - y0) / (y1 - y0) * plot_h;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">iteration</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 16.0
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(18 {}) rotate(-90)" text-anchor="middle">median immediate regret</text>"#,
        TOP + plot_h / 2.0
    );
    for (n, (name, points)) in series.iter().enumerate() {
        let color = PALETTE[n % PALETTE.len()];
        let coords: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="series" data-strategy="{name}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            coords.join(" ")
        );
        let ly = TOP + 10.0 + 20.0 * n as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            svg,
            r#"<g class="legend"><line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{name}</text></g>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

fn trim_number(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// One chart per `(objective, B)` in `dir`, named `<objective>_B<B>.svg`.
/// Returns the written paths.
pub fn emit_charts(rows: &[ResultRow], dir: &Path, log_scale: bool) -> Result<Vec<PathBuf>, OutputError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut groups: BTreeMap<(String, usize), Vec<MedianRow>> = BTreeMap::new();
    for m in medians(rows) {
        groups
            .entry((m.objective.clone(), m.batch_size))
            .or_default()
            .push(m);
    }
    let mut paths = Vec::new();
    for ((objective, b), group) in groups {
        let path = dir.join(format!("{objective}_B{b}.svg"));
        emit_chart(&group, &path, log_scale)?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn emit_chart(rows: &[MedianRow], path: &Path, log_scale: bool) -> Result<(), OutputError> {
    fs::write(path, render_chart(rows, log_scale)).map_err(io_err(path))
}
