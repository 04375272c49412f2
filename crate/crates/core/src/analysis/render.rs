use std::fmt::Write as _;

use super::{Cell, ChangeColumn, Comparison, DegradationTable, PllTrajectory, PpplMatrix, Winner};
use crate::error::{Error, Result};
use crate::temporal::Quarter;

fn to_string(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv output is utf-8")
}

fn fmt_opt(v: Option<f64>, precision: usize) -> String {
    v.map(|x| format!("{x:.precision$}")).unwrap_or_default()
}

/// `model,<quarter>...[,diag]`, one row per model, absent cells empty.
pub fn matrix_to_csv(m: &PpplMatrix, precision: usize) -> String {
    let with_diag = !m.diag().is_empty();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["model".to_string()];
    header.extend(m.quarters().iter().map(Quarter::to_string));
    if with_diag {
        header.push("diag".into());
    }
    w.write_record(&header).expect("in-memory write");
    for (i, model) in m.models().iter().enumerate() {
        let mut rec = vec![model.clone()];
        rec.extend(m.row(i).iter().map(|c| fmt_opt(c.value(), precision)));
        if with_diag {
            rec.push(
                m.diag()
                    .get(model)
                    .map(Quarter::to_string)
                    .unwrap_or_default(),
            );
        }
        w.write_record(&rec).expect("in-memory write");
    }
    to_string(w)
}

/// Parses the format written by [`matrix_to_csv`].
pub fn matrix_from_csv(text: &str) -> Result<PpplMatrix> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = r
        .headers()
        .map_err(|e| Error::data_at(1, e.to_string()))?
        .clone();
    if header.get(0) != Some("model") {
        return Err(Error::data_at(1, "first column must be \"model\""));
    }
    let diag_col = header.iter().position(|h| h == "diag");
    let quarters = header
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(i, _)| Some(*i) != diag_col)
        .map(|(_, h)| {
            h.parse::<Quarter>()
                .map_err(|e| Error::data_at(1, format!("column {h:?}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let line = n + 2;
        rows.push((line, rec.map_err(|e| Error::data_at(line, e.to_string()))?));
    }
    let models = rows.iter().map(|(_, rec)| rec[0].to_string()).collect();
    let mut m = PpplMatrix::new(models, quarters.clone())?;
    for (line, rec) in &rows {
        let model = &rec[0];
        let mut values = rec
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(i, _)| Some(*i) != diag_col);
        for &q in &quarters {
            let (_, field) = values.next().expect("csv enforces equal record lengths");
            let cell = if field.is_empty() {
                Cell::Absent("missing in input".into())
            } else {
                let v: f64 = field.parse().map_err(|_| {
                    Error::data_at(*line, format!("[{model}, {q}]: {field:?} is not a number"))
                })?;
                Cell::Value(v)
            };
            m.set(model, q, cell)
                .map_err(|e| Error::data_at(*line, e.to_string()))?;
        }
        if let Some(d) = diag_col.map(|i| &rec[i]).filter(|d| !d.is_empty()) {
            let q = d
                .parse()
                .map_err(|e| Error::data_at(*line, format!("diag {d:?}: {e}")))?;
            m.set_diag(model, q)?;
        }
    }
    Ok(m)
}

/// Two-column `quarter,change` table.
pub fn change_to_csv(c: &ChangeColumn, precision: usize) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["quarter", "change"])
        .expect("in-memory write");
    for (q, v) in &c.values {
        w.write_record([q.to_string(), format!("{v:.precision$}")])
            .expect("in-memory write");
    }
    to_string(w)
}

pub fn degradation_to_csv(t: &DegradationTable, precision: usize) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["model".to_string()];
    header.extend(t.quarters.iter().map(Quarter::to_string));
    w.write_record(&header).expect("in-memory write");
    for (model, row) in t.models.iter().zip(&t.values) {
        let mut rec = vec![model.clone()];
        rec.extend(row.iter().map(|v| fmt_opt(*v, precision)));
        w.write_record(&rec).expect("in-memory write");
    }
    to_string(w)
}

pub fn comparison_to_csv(c: &Comparison, precision: usize) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "quarter",
        c.a.as_str(),
        c.b.as_str(),
        "difference",
        "winner",
    ])
    .expect("in-memory write");
    for r in &c.rows {
        let winner = match r.winner {
            Some(Winner::A) => c.a.as_str(),
            Some(Winner::B) => c.b.as_str(),
            Some(Winner::Tie) => "tie",
            None => "",
        };
        w.write_record([
            r.quarter.to_string(),
            fmt_opt(r.a, precision),
            fmt_opt(r.b, precision),
            fmt_opt(r.difference, precision),
            winner.to_string(),
        ])
        .expect("in-memory write");
    }
    to_string(w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    /// One entry per x label; gaps break the line.
    pub points: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub y_label: String,
    pub x_labels: Vec<String>,
    pub series: Vec<Series>,
}

pub fn comparison_chart(c: &Comparison) -> LineChart {
    LineChart {
        title: format!("{} vs {}", c.a, c.b),
        y_label: "pseudo-perplexity".into(),
        x_labels: c.rows.iter().map(|r| r.quarter.to_string()).collect(),
        series: vec![
            Series {
                name: c.a.clone(),
                points: c.rows.iter().map(|r| r.a).collect(),
            },
            Series {
                name: c.b.clone(),
                points: c.rows.iter().map(|r| r.b).collect(),
            },
        ],
    }
}

pub fn trajectory_chart(trajectories: &[PllTrajectory]) -> LineChart {
    let x_labels = trajectories
        .first()
        .map(|t| t.points.iter().map(|(m, _)| m.clone()).collect())
        .unwrap_or_default();
    LineChart {
        title: "PLL by model".into(),
        y_label: "pseudo-log-likelihood".into(),
        x_labels,
        series: trajectories
            .iter()
            .map(|t| Series {
                name: t.label.clone(),
                points: t.points.iter().map(|(_, v)| Some(*v)).collect(),
            })
            .collect(),
    }
}

const PALETTE: [&str; 8] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666",
];
const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders a line chart as a standalone SVG document. Output depends only on
/// the chart contents.
pub fn render_svg(chart: &LineChart) -> String {
    let values: Vec<f64> = chart
        .series
        .iter()
        .flat_map(|s| s.points.iter().flatten().copied())
        .collect();
    let (mut lo, mut hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
            (l.min(v), h.max(v))
        });
    if values.is_empty() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let pad = (hi - lo) * 0.05;
    let (lo, hi) = (lo - pad, hi + pad);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let n = chart.x_labels.len().max(1);
    let x = |i: usize| {
        if n == 1 {
            LEFT + plot_w / 2.0
        } else {
            LEFT + plot_w * i as f64 / (n - 1) as f64
        }
    };
    let y = |v: f64| TOP + plot_h * (hi - v) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(&chart.title)
    );
    let _ = writeln!(
        s,
        r##"<path d="M{LEFT:.2},{TOP:.2} V{:.2} H{:.2}" fill="none" stroke="#333"/>"##,
        TOP + plot_h,
        LEFT + plot_w
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let yy = y(v);
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{yy:.2}" x2="{LEFT:.2}" y2="{yy:.2}" stroke="#333"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.3}</text>"##,
            LEFT - 4.0,
            LEFT - 6.0,
            yy + 4.0
        );
    }
    for (i, label) in chart.x_labels.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            x(i),
            TOP + plot_h + 18.0,
            escape(label)
        );
    }
    let _ = writeln!(
        s,
        r#"<text transform="translate(16,{:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + plot_h / 2.0,
        escape(&chart.y_label)
    );
    for (k, series) in chart.series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut runs: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
        for (i, p) in series.points.iter().enumerate() {
            match p {
                Some(v) => runs.last_mut().expect("non-empty").push((x(i), y(*v))),
                None if runs.last().is_some_and(|r| !r.is_empty()) => runs.push(Vec::new()),
                None => {}
            }
        }
        for run in runs.iter().filter(|r| !r.is_empty()) {
            let pts: Vec<String> = run.iter().map(|(a, b)| format!("{a:.2},{b:.2}")).collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                pts.join(" ")
            );
            for (a, b) in run {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{a:.2}" cy="{b:.2}" r="3" fill="{color}"/>"#
                );
            }
        }
        let ly = TOP + 14.0 * k as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 16.0,
            lx + 20.0,
            ly + 4.0,
            escape(&series.name)
        );
    }
    s.push_str("</svg>\n");
    s
}
