//! Plot-ready pivots of metrics files: tidy per-run curve CSVs and simple
//! SVG line charts (accuracy over epochs, low/high frequency errors over
//! epochs).

use crate::metrics::{self, MetricsRow};
use crate::Result;
use std::path::{Path, PathBuf};

pub struct ReportInput {
    pub label: String,
    pub rows: Vec<MetricsRow>,
}

pub fn load_inputs(paths: &[PathBuf]) -> Result<Vec<ReportInput>> {
    paths
        .iter()
        .map(|p| {
            let rows = metrics::read_metrics(p)?;
            let label = p
                .parent()
                .and_then(|d| d.file_name())
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string());
            Ok(ReportInput { label, rows })
        })
        .collect()
}

/// A named series of (epoch, value) points; NaN rows are dropped.
struct Series {
    name: String,
    points: Vec<(f64, f64)>,
}

fn collect_series(
    inputs: &[ReportInput],
    split: &str,
    field: impl Fn(&MetricsRow) -> f64,
    suffix: &str,
) -> Vec<Series> {
    inputs
        .iter()
        .map(|input| Series {
            name: format!("{} {}", input.label, suffix),
            points: input
                .rows
                .iter()
                .filter(|r| r.split == split)
                .filter_map(|r| {
                    let v = field(r);
                    (!v.is_nan()).then_some((r.epoch as f64, v))
                })
                .collect(),
        })
        .filter(|s| !s.points.is_empty())
        .collect()
}

pub fn write_report(inputs: &[ReportInput], out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    // Tidy CSVs.
    let acc_csv = out_dir.join("curves_accuracy.csv");
    {
        use std::io::Write as _;
        let mut f = std::io::BufWriter::new(std::fs::File::create(&acc_csv)?);
        writeln!(f, "run,epoch,clean_acc,robust_acc")?;
        for input in inputs {
            for r in input.rows.iter().filter(|r| r.split == "test") {
                writeln!(
                    f,
                    "{},{},{},{}",
                    input.label,
                    r.epoch,
                    metrics::fmt_f64(r.clean_acc),
                    metrics::fmt_f64(r.robust_acc)
                )?;
            }
        }
    }
    written.push(acc_csv);

    let spec_csv = out_dir.join("curves_spectrum.csv");
    {
        use std::io::Write as _;
        let mut f = std::io::BufWriter::new(std::fs::File::create(&spec_csv)?);
        writeln!(f, "run,epoch,e_low,e_high")?;
        for input in inputs {
            for r in input.rows.iter().filter(|r| r.split == "train") {
                if r.e_low.is_nan() && r.e_high.is_nan() {
                    continue;
                }
                writeln!(
                    f,
                    "{},{},{},{}",
                    input.label,
                    r.epoch,
                    metrics::fmt_f64(r.e_low),
                    metrics::fmt_f64(r.e_high)
                )?;
            }
        }
    }
    written.push(spec_csv);

    // SVG charts.
    let mut acc_series = collect_series(inputs, "test", |r| r.clean_acc, "clean");
    acc_series.extend(collect_series(inputs, "test", |r| r.robust_acc, "robust"));
    if !acc_series.is_empty() {
        let path = out_dir.join("accuracy.svg");
        std::fs::write(&path, line_chart("accuracy over epochs", &acc_series))?;
        written.push(path);
    }

    let mut spec_series = collect_series(inputs, "train", |r| r.e_low, "e_low");
    spec_series.extend(collect_series(inputs, "train", |r| r.e_high, "e_high"));
    if !spec_series.is_empty() {
        let path = out_dir.join("spectrum.svg");
        std::fs::write(&path, line_chart("frequency errors over epochs", &spec_series))?;
        written.push(path);
    }

    Ok(written)
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f",
];

fn line_chart(title: &str, series: &[Series]) -> String {
    let (width, height) = (760.0, 420.0);
    let (left, right, top, bottom) = (64.0, 16.0, 40.0, 48.0);
    let plot_w = width - left - right;
    let plot_h = height - top - bottom;

    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if !(x_min.is_finite() && y_min.is_finite()) {
        x_min = 0.0;
        x_max = 1.0;
        y_min = 0.0;
        y_max = 1.0;
    }
    if x_max - x_min < 1e-12 {
        x_max = x_min + 1.0;
    }
    if y_max - y_min < 1e-12 {
        y_max = y_min + 1.0;
    }
    let sx = |x: f64| left + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| top + plot_h - (y - y_min) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"monospace\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        width / 2.0,
        title
    ));
    // axes
    svg.push_str(&format!(
        "<line x1=\"{left}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        top + plot_h,
        left + plot_w,
        top + plot_h
    ));
    svg.push_str(&format!(
        "<line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{}\" stroke=\"black\"/>\n",
        top + plot_h
    ));
    svg.push_str(&format!(
        "<text x=\"{left}\" y=\"{}\" text-anchor=\"middle\">{x_min:.0}</text>\n",
        height - 28.0
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_max:.0}</text>\n",
        left + plot_w,
        height - 28.0
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{y_min:.3}</text>\n",
        left - 6.0,
        top + plot_h + 4.0
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{y_max:.3}</text>\n",
        left - 6.0,
        top + 4.0
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">epoch</text>\n",
        left + plot_w / 2.0,
        height - 10.0
    ));

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            color,
            pts.join(" ")
        ));
        let ly = top + 14.0 * i as f64;
        svg.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"3\" fill=\"{}\"/>\n",
            left + plot_w - 170.0,
            ly - 4.0,
            color
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\">{}</text>\n",
            left + plot_w - 155.0,
            ly,
            s.name
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
