//! Minimal SVG scatter plots.

use std::fmt::Write as _;

use crate::data::Point;

pub const VIEW_SIZE: f64 = 800.0;
const MARGIN: f64 = 40.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf",
    "#bcbd22", "#7f7f7f",
];

pub fn category_color(c: usize) -> &'static str {
    PALETTE[c % PALETTE.len()]
}

/// Linear world-to-view map fitted to a bounding box, y pointing up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewTransform {
    min: Point,
    scale: f64,
}

impl ViewTransform {
    pub fn fit<'a>(points: impl IntoIterator<Item = &'a Point>) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in points {
            for d in 0..2 {
                if p[d].is_finite() {
                    lo[d] = lo[d].min(p[d]);
                    hi[d] = hi[d].max(p[d]);
                }
            }
        }
        if !lo[0].is_finite() {
            lo = [-1.0, -1.0];
            hi = [1.0, 1.0];
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
        ViewTransform {
            min: lo,
            scale: (VIEW_SIZE - 2.0 * MARGIN) / span,
        }
    }

    pub fn apply(&self, p: Point) -> (f64, f64) {
        (
            MARGIN + (p[0] - self.min[0]) * self.scale,
            VIEW_SIZE - MARGIN - (p[1] - self.min[1]) * self.scale,
        )
    }
}

fn escape_comment(s: &str) -> String {
    s.replace("--", "- -")
}

/// Real points in gray under generated points colored by category.
/// `comment` is embedded verbatim (escaped) as an XML comment.
pub fn scatter(real: &[Point], generated: &[(usize, Point)], comment: &str) -> String {
    let view = ViewTransform::fit(real.iter().chain(generated.iter().map(|(_, p)| p)));
    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{s}" height="{s}" viewBox="0 0 {s} {s}">"#,
        s = VIEW_SIZE
    )
    .unwrap();
    if !comment.is_empty() {
        writeln!(out, "<!--\n{}\n-->", escape_comment(comment)).unwrap();
    }
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(out, r##"<g fill="#9e9e9e" fill-opacity="0.5">"##).unwrap();
    for p in real {
        let (x, y) = view.apply(*p);
        writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2"/>"#).unwrap();
    }
    out.push_str("</g>\n<g fill-opacity=\"0.8\">\n");
    for (c, p) in generated {
        let (x, y) = view.apply(*p);
        writeln!(
            out,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="2" fill="{}"/>"#,
            category_color(*c)
        )
        .unwrap();
    }
    out.push_str("</g>\n</svg>\n");
    out
}
