//! Minimal single-file SVG output.

use std::fmt::Write as _;
use std::path::Path;

use extremal_core::LandscapeGrid;

const SIZE: f64 = 480.0;
const PAD: f64 = 24.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

struct Frame {
    lo: [f64; 2],
    scale: f64,
}

impl Frame {
    fn fit(points: impl Iterator<Item = [f64; 2]>) -> Frame {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in points {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-300);
        Frame { lo, scale: (SIZE - 2.0 * PAD) / span }
    }

    fn map(&self, p: [f64; 2]) -> (f64, f64) {
        (PAD + (p[0] - self.lo[0]) * self.scale, SIZE - PAD - (p[1] - self.lo[1]) * self.scale)
    }
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n\
         <title>{title}</title>\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

pub fn curves(path: &Path, curves: &[Vec<[f64; 2]>], title: &str) -> std::io::Result<()> {
    let frame = Frame::fit(curves.iter().flatten().copied());
    let mut s = header(title);
    for (k, c) in curves.iter().enumerate() {
        let pts: Vec<String> = c
            .iter()
            .map(|&p| {
                let (x, y) = frame.map(p);
                format!("{x:.3},{y:.3}")
            })
            .collect();
        let _ = writeln!(
            s,
            "<polygon points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>",
            pts.join(" "),
            COLORS[k % COLORS.len()]
        );
    }
    s.push_str("</svg>\n");
    std::fs::write(path, s)
}

/// Heat map of |a| with refined critical points marked.
pub fn landscape(path: &Path, grid: &LandscapeGrid) -> std::io::Result<()> {
    let frame = Frame::fit([grid.lower, grid.upper].into_iter());
    let mut s = header(&format!("|a| landscape, epsilon = {}", grid.epsilon));
    let top = grid.points.iter().filter(|p| p.converged).map(|p| p.a_norm).fold(0.0, f64::max);
    let cell = [
        (grid.upper[0] - grid.lower[0]) / grid.n1 as f64,
        (grid.upper[1] - grid.lower[1]) / grid.n2 as f64,
    ];
    for p in &grid.points {
        let (x, y) = frame.map([p.p[0], p.p[1] + cell[1]]);
        let fill = if p.converged {
            let t = if top > 0.0 { p.a_norm / top } else { 0.0 };
            let c = (255.0 * (1.0 - t)).round() as u8;
            format!("rgb(255,{c},{c})")
        } else {
            "#888888".into()
        };
        let _ = writeln!(
            s,
            "<rect x=\"{x:.3}\" y=\"{y:.3}\" width=\"{:.3}\" height=\"{:.3}\" fill=\"{fill}\"/>",
            cell[0] * frame.scale,
            cell[1] * frame.scale
        );
    }
    for c in &grid.critical_points {
        let (x, y) = frame.map(c.p);
        let _ = writeln!(s, "<circle cx=\"{x:.3}\" cy=\"{y:.3}\" r=\"4\" fill=\"#1f77b4\"/>");
    }
    s.push_str("</svg>\n");
    std::fs::write(path, s)
}
