//! Self-contained SVG line charts from CSV text.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::HarnessError;

/// Which columns to plot. With `group` set, every distinct value of that
/// column gives one series per `y` column.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartSpec {
    pub title: String,
    pub x: String,
    pub y: Vec<String>,
    pub group: Option<String>,
}

pub const WIDTH: f64 = 640.0;
pub const HEIGHT: f64 = 400.0;
pub const MARGIN: f64 = 60.0;

const COLOURS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Data range mapped onto the plot area, padded when degenerate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axes {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Axes {
    fn fit(series: &[Series]) -> Axes {
        let range = |f: fn(&(f64, f64)) -> f64| {
            let (lo, hi) = series
                .iter()
                .flat_map(|s| s.points.iter().map(f))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        };
        Axes {
            x: range(|p| p.0),
            y: range(|p| p.1),
        }
    }

    pub fn to_pixels(&self, (x, y): (f64, f64)) -> (f64, f64) {
        let px = MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN);
        let py = HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN);
        (px, py)
    }

    pub fn from_pixels(&self, (px, py): (f64, f64)) -> (f64, f64) {
        let x = self.x.0 + (px - MARGIN) / (WIDTH - 2.0 * MARGIN) * (self.x.1 - self.x.0);
        let y = self.y.0 + (HEIGHT - MARGIN - py) / (HEIGHT - 2.0 * MARGIN) * (self.y.1 - self.y.0);
        (x, y)
    }
}

/// Reads the series named by `spec` out of `csv`. Cells that do not parse
/// as numbers are skipped.
pub fn series_from_csv(csv: &str, spec: &ChartSpec) -> Result<Vec<Series>, HarnessError> {
    let mut lines = csv.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| HarnessError::Runtime("empty CSV".into()))?
        .split(',')
        .collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| HarnessError::Runtime(format!("CSV has no column {name:?}")))
    };
    let xi = col(&spec.x)?;
    let yi: Vec<usize> = spec.y.iter().map(|y| col(y)).collect::<Result<_, _>>()?;
    let gi = spec.group.as_deref().map(col).transpose()?;
    let mut out: BTreeMap<(String, usize), Vec<(f64, f64)>> = BTreeMap::new();
    let mut order: Vec<(String, usize)> = Vec::new();
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let Some(x) = cells.get(xi).and_then(|c| c.parse::<f64>().ok()) else {
            continue;
        };
        let group = gi.and_then(|g| cells.get(g)).map(|s| s.to_string()).unwrap_or_default();
        for (j, &y) in yi.iter().enumerate() {
            if let Some(v) = cells.get(y).and_then(|c| c.parse::<f64>().ok()) {
                let key = (group.clone(), j);
                if !out.contains_key(&key) {
                    order.push(key.clone());
                }
                out.entry(key).or_default().push((x, v));
            }
        }
    }
    let series: Vec<Series> = order
        .into_iter()
        .map(|key| {
            let name = match (&spec.group, spec.y.len()) {
                (Some(g), 1) => format!("{g}={}", key.0),
                (Some(g), _) => format!("{g}={} {}", key.0, spec.y[key.1]),
                (None, _) => spec.y[key.1].clone(),
            };
            Series {
                name,
                points: out[&key].clone(),
            }
        })
        .collect();
    if series.is_empty() {
        return Err(HarnessError::Runtime("CSV has no plottable rows".into()));
    }
    Ok(series)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line chart with one polyline and one legend entry per series.
pub fn emit_svg(csv: &str, spec: &ChartSpec) -> Result<String, HarnessError> {
    let series = series_from_csv(csv, spec)?;
    let axes = Axes::fit(&series);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" data-x-min="{}" data-x-max="{}" data-y-min="{}" data-y-max="{}">"#,
        axes.x.0, axes.x.1, axes.y.0, axes.y.1
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#, WIDTH / 2.0, escape(&spec.title));
    let (x0, y0) = (MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{}" y2="{y0}" stroke="black"/>"#, WIDTH - MARGIN);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{MARGIN}" stroke="black"/>"#);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = axes.x.0 + f * (axes.x.1 - axes.x.0);
        let yv = axes.y.0 + f * (axes.y.1 - axes.y.0);
        let (px, _) = axes.to_pixels((xv, axes.y.0));
        let (_, py) = axes.to_pixels((axes.x.0, yv));
        let _ = writeln!(s, r#"<text x="{px:.2}" y="{}" text-anchor="middle" font-size="11">{}</text>"#, y0 + 16.0, tick(xv));
        let _ = writeln!(s, r#"<text x="{}" y="{py:.2}" text-anchor="end" font-size="11">{}</text>"#, x0 - 6.0, tick(yv));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">{}</text>"#, WIDTH / 2.0, HEIGHT - 16.0, escape(&spec.x));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" font-size="13" transform="rotate(-90 16 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(&spec.y.join(", "))
    );
    for (i, ser) in series.iter().enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .map(|&p| {
                let (px, py) = axes.to_pixels(p);
                format!("{px:.6},{py:.6}")
            })
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{colour}" stroke-width="2" points="{}"/>"#, pts.join(" "));
        let ly = MARGIN + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<g class="legend"><line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/><text x="{}" y="{}" font-size="11">{}</text></g>"#,
            WIDTH - MARGIN - 120.0,
            WIDTH - MARGIN - 100.0,
            WIDTH - MARGIN - 95.0,
            ly + 4.0,
            escape(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn tick(v: f64) -> String {
    let t = format!("{v:.3}");
    let t = t.trim_end_matches('0').trim_end_matches('.');
    if t.is_empty() || t == "-" {
        "0".into()
    } else {
        t.to_string()
    }
}
