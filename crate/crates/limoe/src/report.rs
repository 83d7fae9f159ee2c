//! CSV tables and dependency-free SVG charts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use limoe_core::metrics::{CosineMap, MetricReport, RobustnessReport, RouteTable};
use limoe_core::PointCloud;

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "class,tp,fp,fn,iou";
pub const ROUTE_HEADER: &str = "axis,bucket,count,load_range,load_voxel,load_point";
pub const ROBUSTNESS_HEADER: &str = "corruption,ce,rr";
pub const GATES_HEADER: &str = "point_id,alpha,beta,gamma";
pub const PREDICTIONS_HEADER: &str = "point_id,prediction,label";

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One row per class, then `miou,,,,<value>`. Excluded classes leave `iou` empty.
pub fn metrics_csv(report: &MetricReport) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for c in &report.classes {
        let iou = c.iou.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{},{}", c.class, c.tp, c.fp, c.fn_, iou);
    }
    let _ = writeln!(s, "miou,,,,{}", report.miou);
    s
}

pub fn route_csv(tables: &[RouteTable]) -> String {
    let mut s = format!("{ROUTE_HEADER}\n");
    for t in tables {
        for r in &t.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                t.axis.name(),
                r.bucket,
                r.count,
                r.load[0],
                r.load[1],
                r.load[2]
            );
        }
    }
    s
}

/// Per-corruption rows followed by `mean,<mCE>,<mRR>`.
pub fn robustness_csv(report: &RobustnessReport) -> String {
    let mut s = format!("{ROBUSTNESS_HEADER}\n");
    for c in &report.per_corruption {
        let _ = writeln!(s, "{},{},{}", c.corruption, c.ce, c.rr);
    }
    let _ = writeln!(s, "mean,{},{}", report.mce, report.mrr);
    s
}

pub fn gates_csv(gates: &[[f64; 3]]) -> String {
    let mut s = format!("{GATES_HEADER}\n");
    for (i, g) in gates.iter().enumerate() {
        let _ = writeln!(s, "{},{},{},{}", i, g[0], g[1], g[2]);
    }
    s
}

fn csv_rows<'a>(text: &'a str, header: &str, what: &str) -> Result<impl Iterator<Item = (usize, Vec<&'a str>)>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == header => {}
        _ => return Err(Error::format(format!("{what}: expected header `{header}`"))),
    }
    Ok(lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 2, l.split(',').map(str::trim).collect())))
}

fn field<T: std::str::FromStr>(cols: &[&str], k: usize, line: usize, what: &str) -> Result<T> {
    cols.get(k)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::format(format!("{what}: bad field {} on line {line}", k + 1)))
}

/// Gate rows in `point_id` order; ids must run `0..n`.
pub fn read_gates_csv(text: &str) -> Result<Vec<[f64; 3]>> {
    let mut out = Vec::new();
    for (line, cols) in csv_rows(text, GATES_HEADER, "gates")? {
        let id: usize = field(&cols, 0, line, "gates")?;
        if id != out.len() {
            return Err(Error::format(format!(
                "gates: point ids must be consecutive (line {line})"
            )));
        }
        out.push([
            field(&cols, 1, line, "gates")?,
            field(&cols, 2, line, "gates")?,
            field(&cols, 3, line, "gates")?,
        ]);
    }
    Ok(out)
}

pub fn predictions_csv(predictions: &[i32], labels: &[i32]) -> String {
    let mut s = format!("{PREDICTIONS_HEADER}\n");
    for (i, (p, l)) in predictions.iter().zip(labels).enumerate() {
        let _ = writeln!(s, "{i},{p},{l}");
    }
    s
}

/// `(predictions, labels)`.
pub fn read_predictions_csv(text: &str) -> Result<(Vec<i32>, Vec<i32>)> {
    let (mut p, mut l) = (Vec::new(), Vec::new());
    for (line, cols) in csv_rows(text, PREDICTIONS_HEADER, "predictions")? {
        p.push(field(&cols, 1, line, "predictions")?);
        l.push(field(&cols, 2, line, "predictions")?);
    }
    Ok((p, l))
}

pub fn cosine_csv(map: &CosineMap, cloud: &PointCloud) -> String {
    let mut s = String::from("point_id,x,y,z,similarity,zero_norm\n");
    for (i, (sim, p)) in map.similarity.iter().zip(&cloud.points).enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            i, p.xyz[0], p.xyz[1], p.xyz[2], sim, map.zero_norm[i] as u8
        );
    }
    s
}

const EXPERT_COLORS: [&str; 3] = ["#3a9a4a", "#c0392b", "#2e6fbd"];

fn svg_open(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Blue (−1) through white (0) to red (+1).
fn diverging(t: f64) -> String {
    let t = t.clamp(-1.0, 1.0);
    let (r, g, b) = if t >= 0.0 {
        (255.0, 255.0 * (1.0 - t), 255.0 * (1.0 - t))
    } else {
        (255.0 * (1.0 + t), 255.0 * (1.0 + t), 255.0)
    };
    format!("#{:02x}{:02x}{:02x}", r.round() as u8, g.round() as u8, b.round() as u8)
}

/// Top-down scatter of `cloud` coloured by `values` in `[−1, 1]`.
pub fn scatter_svg(title: &str, cloud: &PointCloud, values: &[f64]) -> String {
    let (w, h, m) = (640.0, 640.0, 40.0);
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in &cloud.points {
        for k in 0..2 {
            lo[k] = lo[k].min(p.xyz[k]);
            hi[k] = hi[k].max(p.xyz[k]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
    let mut s = svg_open(w, h);
    let _ = writeln!(
        s,
        "<text x=\"{m}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{}</text>",
        escape(title)
    );
    for (p, v) in cloud.points.iter().zip(values) {
        let x = m + (p.xyz[0] - lo[0]) / span * (w - 2.0 * m);
        let y = h - m - (p.xyz[1] - lo[1]) / span * (h - 2.0 * m);
        let _ = writeln!(
            s,
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"1.5\" fill=\"{}\"/>",
            diverging(*v)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Grouped bars of the three expert loads per bucket.
pub fn route_svg(table: &RouteTable) -> String {
    let n = table.rows.len().max(1) as f64;
    let (m, plot_h) = (40.0, 240.0);
    let group = 36.0;
    let w = 2.0 * m + n * group;
    let h = plot_h + 2.0 * m + 30.0;
    let mut s = svg_open(w, h);
    let _ = writeln!(
        s,
        "<text x=\"{m}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">expert load by {}</text>",
        table.axis.name()
    );
    let base = m + plot_h;
    let _ = writeln!(
        s,
        "<line x1=\"{m}\" y1=\"{base}\" x2=\"{}\" y2=\"{base}\" stroke=\"black\"/>",
        w - m
    );
    for (i, r) in table.rows.iter().enumerate() {
        let x0 = m + i as f64 * group + 3.0;
        for k in 0..3 {
            let bh = r.load[k] * plot_h;
            let _ = writeln!(
                s,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"9\" height=\"{:.2}\" fill=\"{}\"/>",
                x0 + 10.0 * k as f64,
                base - bh,
                bh,
                EXPERT_COLORS[k]
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"9\" transform=\"rotate(45 {:.2} {:.2})\">{}</text>",
            x0,
            base + 12.0,
            x0,
            base + 12.0,
            escape(&r.bucket)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Bars of named values, e.g. per-epoch losses or per-class IoUs.
pub fn bar_svg(title: &str, bars: &[(String, f64)]) -> String {
    let (m, plot_h) = (40.0, 240.0);
    let n = bars.len().max(1) as f64;
    let width = 14.0;
    let w = 2.0 * m + n * width;
    let h = plot_h + 2.0 * m + 30.0;
    let top = bars.iter().map(|b| b.1).fold(0.0f64, f64::max).max(1e-12);
    let mut s = svg_open(w.max(200.0), h);
    let _ = writeln!(
        s,
        "<text x=\"{m}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{}</text>",
        escape(title)
    );
    let base = m + plot_h;
    for (i, (label, v)) in bars.iter().enumerate() {
        let bh = v.max(0.0) / top * plot_h;
        let x = m + i as f64 * width;
        let _ = writeln!(
            s,
            "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"{}\" height=\"{bh:.2}\" fill=\"#555\"><title>{} {}</title></rect>",
            base - bh,
            width - 2.0,
            escape(label),
            v
        );
    }
    s.push_str("</svg>\n");
    s
}
