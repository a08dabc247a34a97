//! CSV number formatting, a minimal SVG line plot, and artifact files that
//! are removed again when a run fails.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

/// Formats `v` with 12 significant digits, `%.12g` style.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        // rounding may carry into a new digit, e.g. 9.99..9 -> 10.00..0
        trim_fixed(&s)
    } else {
        let s = format!("{v:.11e}");
        let (mantissa, exponent) = s.split_once('e').unwrap();
        format!("{}e{}", trim_fixed(mantissa), exponent)
    }
}

fn trim_fixed(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// One polyline of a plot.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.into(),
            points,
        }
    }
}

pub const MAX_SERIES: usize = 8;
const COLORS: [&str; MAX_SERIES] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line plot with axes, tick labels and a legend. Non-finite points are
/// skipped; only the first [`MAX_SERIES`] series are drawn.
pub fn svg_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (70.0, 170.0, 40.0, 50.0);
    let series = &series[..series.len().min(MAX_SERIES)];
    let finite = |p: &&(f64, f64)| p.0.is_finite() && p.1.is_finite();
    let mut xr = (f64::INFINITY, f64::NEG_INFINITY);
    let mut yr = (f64::INFINITY, f64::NEG_INFINITY);
    for p in series.iter().flat_map(|s| s.points.iter().filter(finite)) {
        xr = (xr.0.min(p.0), xr.1.max(p.0));
        yr = (yr.0.min(p.1), yr.1.max(p.1));
    }
    if !xr.0.is_finite() {
        xr = (0.0, 1.0);
        yr = (0.0, 1.0);
    }
    if xr.1 - xr.0 <= 0.0 {
        xr = (xr.0 - 0.5, xr.1 + 0.5);
    }
    if yr.1 - yr.0 <= 0.0 {
        yr = (yr.0 - 0.5, yr.1 + 0.5);
    }
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x - xr.0) / (xr.1 - xr.0) * pw;
    let sy = |y: f64| top + (1.0 - (y - yr.0) / (yr.1 - yr.0)) * ph;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, left + pw / 2.0, escape(title));
    let _ = writeln!(
        out,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let xv = xr.0 + f * (xr.1 - xr.0);
        let yv = yr.0 + f * (yr.1 - yr.0);
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(out, r#"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{}" stroke="black"/>"#, top + ph, top + ph + 5.0);
        let _ = writeln!(out, r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#, top + ph + 18.0, tick(xv));
        let _ = writeln!(out, r#"<line x1="{}" y1="{py:.2}" x2="{left}" y2="{py:.2}" stroke="black"/>"#, left - 5.0);
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, left - 8.0, py + 4.0, tick(yv));
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, left + pw / 2.0, h - 10.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(y_label)
    );
    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k];
        let pts: Vec<String> = s.points.iter().filter(finite).map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1))).collect();
        if !pts.is_empty() {
            let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        }
        let ly = top + 10.0 + 18.0 * k as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(out, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&s.label));
    }
    out.push_str("</svg>\n");
    out
}

fn tick(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 1e-3 && v.abs() < 1e5) {
        let s = format!("{v:.3}");
        trim_fixed(&s)
    } else {
        format!("{v:.2e}")
    }
}

/// Files written by one run. Unless [`Artifacts::commit`] is called, every
/// file written through it is deleted on drop.
#[derive(Debug, Default)]
pub struct Artifacts {
    written: Vec<PathBuf>,
    committed: bool,
}

impl Artifacts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&mut self, path: &Path, contents: &str) -> io::Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        self.written.push(path.to_path_buf());
        fs::write(path, contents)
    }

    pub fn paths(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for Artifacts {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.written {
                let _ = fs::remove_file(p);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_num(2.0), "2");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_num(-1234.5678), "-1234.5678");
        assert_eq!(fmt_num(2.0f64.sqrt() * 1e-8), "1.41421356237e-8");
        assert_eq!(fmt_num(6.02214076e23), "6.02214076e23");
        assert_eq!(fmt_num(0.0), "0");
    }

    #[test]
    fn svg_has_one_polyline_per_series() {
        let a = Series::new("a", vec![(0.0, 0.0), (1.0, 1.0)]);
        let b = Series::new("b<c", vec![(0.0, 1.0), (f64::NAN, 2.0), (1.0, 0.0)]);
        let svg = svg_plot("t", "x", "u", &[a, b]);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("b&lt;c"));
        assert!(!svg.contains("NaN"));
        let many: Vec<Series> = (0..12).map(|k| Series::new(format!("s{k}"), vec![(0.0, k as f64)])).collect();
        assert_eq!(svg_plot("", "", "", &many).matches("<polyline").count(), MAX_SERIES);
    }

    #[test]
    fn uncommitted_artifacts_are_removed() {
        let dir = tempfile::tempdir().unwrap();
        let kept = dir.path().join("kept.csv");
        let dropped = dir.path().join("sub/dropped.csv");
        let mut a = Artifacts::new();
        a.write(&kept, "x\n").unwrap();
        a.commit();
        {
            let mut b = Artifacts::new();
            b.write(&dropped, "y\n").unwrap();
            assert!(dropped.exists());
        }
        assert!(kept.exists());
        assert!(!dropped.exists());
    }
}
