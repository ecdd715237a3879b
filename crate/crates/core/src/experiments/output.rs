//! Trial artifacts: time series CSV, density snapshots, trajectories and
//! static SVG line charts.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::micro::trajectory_header;

use super::trial::{LegSeries, TrialResult};

pub const TIMESERIES_HEADER: &str = "step,t,err2_disc,err2_cont,ebar_disc,ebar_cont,mass_disc,mass_cont";

fn cell(series: Option<&LegSeries>, pick: impl Fn(&LegSeries) -> &Vec<f64>, i: usize) -> String {
    match series.and_then(|s| pick(s).get(i)) {
        Some(v) => format!("{v:e}"),
        None => "nan".to_string(),
    }
}

pub fn write_timeseries<W: Write>(result: &TrialResult, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{TIMESERIES_HEADER}")?;
    let d = result.discrete.as_ref();
    let c = result.continuous.as_ref();
    for (i, t) in result.t.iter().enumerate() {
        writeln!(
            out,
            "{i},{t:e},{},{},{},{},{},{}",
            cell(d, |s| &s.err2, i),
            cell(c, |s| &s.err2, i),
            cell(d, |s| &s.ebar, i),
            cell(c, |s| &s.ebar, i),
            cell(d, |s| &s.mass, i),
            cell(c, |s| &s.mass, i),
        )?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Writes every artifact of a trial into `dir` (created if needed).
pub fn write_trial_outputs(result: &TrialResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |e| Error::io(p, e)
    };

    let ts = dir.join("timeseries.csv");
    let mut w = create(&ts)?;
    write_timeseries(result, &mut w).and_then(|_| w.flush()).map_err(io(&ts))?;

    if !result.snapshots.is_empty() {
        let snap_dir = dir.join("snapshots");
        fs::create_dir_all(&snap_dir).map_err(io(&snap_dir))?;
        for s in &result.snapshots {
            let fields = [
                ("target", Some(&s.target)),
                ("continuous", s.continuous.as_ref()),
                ("discrete", s.discrete.as_ref()),
            ];
            for (name, field) in fields {
                if let Some(f) = field {
                    let p = snap_dir.join(format!("{name}_{:06}.csv", s.step));
                    let mut w = create(&p)?;
                    f.write_csv(&mut w).and_then(|_| w.flush()).map_err(io(&p))?;
                }
            }
        }
    }

    if let Some((_, first)) = result.trajectory.first() {
        let p = dir.join("trajectory.csv");
        let mut w = create(&p)?;
        let r = (|| {
            writeln!(w, "{}", trajectory_header(first.dim()))?;
            for (step, agents) in &result.trajectory {
                agents.write_trajectory_rows(*step, &mut w)?;
            }
            w.flush()
        })();
        r.map_err(io(&p))?;
    }

    let mut curves = Vec::new();
    if let Some(d) = &result.discrete {
        curves.push(Curve::new("discrete", &result.t, &d.ebar));
    }
    if let Some(c) = &result.continuous {
        curves.push(Curve::new("continuous", &result.t, &c.ebar));
    }
    let p = dir.join("percentage_error.svg");
    fs::write(&p, line_chart("Percentage error", "t", "E (%)", &curves, false)).map_err(io(&p))?;

    let mut curves = Vec::new();
    if let Some(d) = &result.discrete {
        curves.push(Curve::new("discrete", &result.t, &d.err_norm()));
    }
    if let Some(c) = &result.continuous {
        curves.push(Curve::new("continuous", &result.t, &c.err_norm()));
    }
    let p = dir.join("error_norm.svg");
    fs::write(&p, line_chart("Error norm", "t", "||e||_2", &curves, true)).map_err(io(&p))?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Curve {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Curve {
    pub fn new(label: &str, x: &[f64], y: &[f64]) -> Self {
        Curve {
            label: label.to_string(),
            points: x.iter().copied().zip(y.iter().copied()).collect(),
        }
    }
}

const PALETTE: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// A minimal SVG line chart. With `log_y`, nonpositive values are dropped.
pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, curves: &[Curve], log_y: bool) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (70.0, 150.0, 40.0, 50.0);
    let ty = |y: f64| if log_y { y.log10() } else { y };
    let pts: Vec<(f64, f64)> = curves
        .iter()
        .flat_map(|c| c.points.iter())
        .filter(|(x, y)| x.is_finite() && y.is_finite() && (!log_y || *y > 0.0))
        .map(|(x, y)| (*x, ty(*y)))
        .collect();
    let range = |it: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-300 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = range(&mut pts.iter().map(|p| p.0));
    let (y0, y1) = range(&mut pts.iter().map(|p| p.1));
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, left + pw / 2.0, escape(title));
    let _ = writeln!(
        s,
        r##"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
    );
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let ylab = if log_y { format!("1e{fy:.1}") } else { format!("{fy:.3}") };
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{fx:.3}</text>"#, sx(fx), top + ph + 16.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{ylab}</text>"#, left - 6.0, sy(fy) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, left + pw / 2.0, h - 12.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(ylabel)
    );
    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = c
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite() && (!log_y || *y > 0.0))
            .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(ty(*y))))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        let ly = top + 16.0 + 18.0 * i as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&c.label));
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_is_well_formed() {
        let c = Curve::new("a<b", &[0.0, 1.0, 2.0], &[1.0, 0.1, 0.0]);
        let svg = line_chart("T", "x", "y", &[c], true);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a&lt;b"));
        assert_eq!(svg.matches("<polyline").count(), 1);
    }

    #[test]
    fn empty_chart_does_not_panic() {
        let svg = line_chart("T", "x", "y", &[], false);
        assert!(svg.contains("</svg>"));
    }
}
