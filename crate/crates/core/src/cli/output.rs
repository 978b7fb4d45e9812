//! CSV and SVG emitters.

use std::fmt::Write as _;

use crate::model::Trajectory;
use crate::turnpike::ScanCell;

fn csv_error(e: csv::Error) -> crate::Error {
    crate::Error::Config(format!("csv: {e}"))
}

/// Shortest round-trip text, in exponent form away from `[1e-4, 1e15)`.
fn number(v: f64) -> String {
    if v == 0.0 || (1e-4..1e15).contains(&v.abs()) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

fn finish(writer: csv::Writer<Vec<u8>>) -> crate::Result<String> {
    let bytes = writer.into_inner().map_err(|e| crate::Error::Config(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Columns `i, x_1..x_n, u_1..u_m, stage_cost`; the terminal row leaves the
/// control and cost cells empty.
pub fn trajectory_csv(t: &Trajectory) -> crate::Result<String> {
    let n = t.states[0].len();
    let m = t.controls.first().map_or(0, |u| u.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["i".to_string()];
    header.extend((1..=n).map(|k| format!("x_{k}")));
    header.extend((1..=m).map(|k| format!("u_{k}")));
    header.push("stage_cost".into());
    w.write_record(&header).map_err(csv_error)?;
    for (i, x) in t.states.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(x.iter().map(|v| number(*v)));
        match t.controls.get(i) {
            Some(u) => {
                row.extend(u.iter().map(|v| number(*v)));
                row.push(number(t.stage_costs[i]));
            }
            None => row.extend(std::iter::repeat_n(String::new(), m + 1)),
        }
        w.write_record(&row).map_err(csv_error)?;
    }
    finish(w)
}

/// Columns `x0_id, N, eps, count, bound, ok`; `count` is empty for
/// infeasible cells.
pub fn scan_csv(cells: &[ScanCell]) -> crate::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x0_id", "N", "eps", "count", "bound", "ok"]).map_err(csv_error)?;
    for c in cells {
        w.write_record([
            c.x0_id.to_string(),
            c.horizon.to_string(),
            number(c.eps),
            c.count.map(|k| k.to_string()).unwrap_or_default(),
            number(c.bound),
            c.ok.to_string(),
        ])
        .map_err(csv_error)?;
    }
    finish(w)
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const FLOOR: f64 = 1e-12;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Log-scale plot of `‖x*(i) − x_e‖` against `i`, one line per series.
/// Values below `1e-12` are drawn at the floor.
pub fn decay_svg(series: &[Vec<f64>], title: &str) -> String {
    let longest = series.iter().map(Vec::len).max().unwrap_or(0).max(2);
    let logs: Vec<Vec<f64>> = series
        .iter()
        .map(|s| s.iter().map(|v| v.max(FLOOR).log10()).collect())
        .collect();
    let all = logs.iter().flatten();
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() {
        (lo.floor(), hi.ceil().max(lo.floor() + 1.0))
    } else {
        (-1.0, 0.0)
    };
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |i: f64| LEFT + plot_w * i / (longest - 1) as f64;
    let sy = |y: f64| TOP + plot_h * (hi - y) / (hi - lo);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let decades = (hi - lo) as i64;
    let step = (decades as f64 / 10.0).ceil().max(1.0) as i64;
    for k in (0..=decades).step_by(step as usize) {
        let y = sy(lo + k as f64);
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            WIDTH - RIGHT
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.2}" text-anchor="end">1e{}</text>"#,
            LEFT - 6.0,
            y + 4.0,
            lo as i64 + k
        );
    }
    let x_step = nice_step((longest - 1) as f64);
    let mut tick = 0.0;
    while tick <= (longest - 1) as f64 + 1e-9 {
        let x = sx(tick);
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{:.1}" text-anchor="middle">{tick}</text>"#,
            HEIGHT - BOTTOM + 18.0
        );
        tick += x_step;
    }
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">i</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">‖x*(i) − x_e‖</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );
    for (k, s) in logs.iter().enumerate() {
        if s.is_empty() {
            continue;
        }
        let points: Vec<String> = s
            .iter()
            .enumerate()
            .map(|(i, y)| format!("{:.2},{:.2}", sx(i as f64), sy(*y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.2" points="{}"/>"#,
            PALETTE[k % PALETTE.len()],
            points.join(" ")
        );
    }
    out.push_str("</svg>\n");
    out
}

fn nice_step(span: f64) -> f64 {
    let raw = (span / 8.0).max(1.0);
    let magnitude = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|f| f * magnitude)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * magnitude)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn trajectory_columns() {
        let t = Trajectory {
            states: vec![DVector::from_vec(vec![1.0, 0.5]), DVector::from_vec(vec![0.25, 0.0])],
            controls: vec![DVector::from_vec(vec![-1.0])],
            stage_costs: vec![2.5],
            total_cost: 2.5,
        };
        let csv = trajectory_csv(&t).unwrap();
        assert_eq!(csv, "i,x_1,x_2,u_1,stage_cost\n0,1,0.5,-1,2.5\n1,0.25,0,,\n");
    }

    #[test]
    fn scan_columns() {
        let cells = vec![
            ScanCell {
                x0_id: 0,
                horizon: 10,
                eps: 0.1,
                count: Some(3),
                bound: 40.0,
                ok: true,
            },
            ScanCell {
                x0_id: 1,
                horizon: 10,
                eps: 0.1,
                count: None,
                bound: 40.0,
                ok: false,
            },
        ];
        let csv = scan_csv(&cells).unwrap();
        assert_eq!(csv, "x0_id,N,eps,count,bound,ok\n0,10,0.1,3,40,true\n1,10,0.1,,40,false\n");
    }

    #[test]
    fn svg_is_self_contained() {
        let svg = decay_svg(&[vec![1.0, 0.1, 0.01, 0.0]], "a < b");
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("polyline") && svg.contains("a &lt; b"));
        assert!(!svg.contains("href"));
        assert!(svg.contains(">1e-12<"));
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.0, 1.5, -2.0e-17, 3.0e20, 1e-4, f64::MIN_POSITIVE] {
            assert_eq!(number(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(number(5.551115123125783e-17), "5.551115123125783e-17");
    }

    #[test]
    fn tick_steps() {
        assert_eq!(nice_step(200.0), 50.0);
        assert_eq!(nice_step(9.0), 2.0);
        assert_eq!(nice_step(3.0), 1.0);
    }
}
