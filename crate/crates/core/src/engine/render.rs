//! Bird's-eye SVG rendering of registered maps and trajectories.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Cloud2, Se2};

/// Upper bound on drawn map points.
pub const MAX_POINTS: usize = 50_000;
const MARGIN: f64 = 20.0;

/// World-to-pixel mapping with a uniform scale and a flipped y axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Viewport {
    pub min: [f64; 2],
    pub scale: f64,
    pub width: u32,
    pub height: u32,
}

impl Viewport {
    /// Fits the bounding box of `pts` into the canvas, keeping the aspect ratio.
    pub fn fit<'a>(pts: impl IntoIterator<Item = &'a [f64; 2]>, width: u32, height: u32) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in pts {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        if !lo[0].is_finite() {
            lo = [0.0, 0.0];
            hi = [1.0, 1.0];
        }
        let span_x = (hi[0] - lo[0]).max(1e-9);
        let span_y = (hi[1] - lo[1]).max(1e-9);
        let avail_x = (width as f64 - 2.0 * MARGIN).max(1.0);
        let avail_y = (height as f64 - 2.0 * MARGIN).max(1.0);
        Viewport {
            min: lo,
            scale: (avail_x / span_x).min(avail_y / span_y),
            width,
            height,
        }
    }

    pub fn to_pixel(&self, p: [f64; 2]) -> [f64; 2] {
        [
            MARGIN + (p[0] - self.min[0]) * self.scale,
            self.height as f64 - MARGIN - (p[1] - self.min[1]) * self.scale,
        ]
    }
}

/// Largest of 1, 2 or 5 times a power of ten that fits in `max_len` metres.
fn scale_bar_length(max_len: f64) -> f64 {
    if !(max_len > 0.0) {
        return 1.0;
    }
    let p = 10f64.powf(max_len.log10().floor());
    [5.0, 2.0, 1.0]
        .into_iter()
        .map(|m| m * p)
        .find(|&l| l <= max_len)
        .unwrap_or(p)
}

fn polyline(out: &mut String, vp: &Viewport, pts: &[[f64; 2]], color: &str) {
    if pts.is_empty() {
        return;
    }
    let _ = write!(
        out,
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\""
    );
    for (i, p) in pts.iter().enumerate() {
        let q = vp.to_pixel(*p);
        let sep = if i == 0 { "" } else { " " };
        let _ = write!(out, "{sep}{:.2},{:.2}", q[0], q[1]);
    }
    out.push_str("\"/>\n");
}

/// SVG of the global point map (clouds under `poses`), the estimated
/// trajectory and optionally the ground truth. `clouds` may be empty to draw
/// trajectories only.
pub fn render_map(clouds: &[Cloud2], poses: &[Se2], gt: Option<&[Se2]>, canvas: (u32, u32)) -> Result<String> {
    if !clouds.is_empty() && clouds.len() != poses.len() {
        return Err(Error::LengthMismatch {
            what: "clouds vs poses",
            left: clouds.len(),
            right: poses.len(),
        });
    }
    if let Some(g) = gt {
        if g.len() != poses.len() {
            return Err(Error::LengthMismatch {
                what: "gt vs poses",
                left: g.len(),
                right: poses.len(),
            });
        }
    }
    let total: usize = clouds.iter().map(Cloud2::len).sum();
    let stride = total.div_ceil(MAX_POINTS).max(1);
    let mut points = Vec::with_capacity(total.min(MAX_POINTS));
    let mut idx = 0usize;
    for (c, t) in clouds.iter().zip(poses) {
        for p in &c.points {
            if idx.is_multiple_of(stride) {
                points.push(t.apply(*p));
            }
            idx += 1;
        }
    }
    let est: Vec<[f64; 2]> = poses.iter().map(Se2::translation).collect();
    let gt_pts: Vec<[f64; 2]> = gt.map(|g| g.iter().map(Se2::translation).collect()).unwrap_or_default();

    let (w, h) = canvas;
    let vp = Viewport::fit(points.iter().chain(&est).chain(&gt_pts), w, h);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(out, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");

    // axes along the lower and left edges of the fitted area
    let o = vp.to_pixel(vp.min);
    let _ = writeln!(
        out,
        "<g stroke=\"#888\" stroke-width=\"1\"><line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\"/><line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\"/></g>",
        o[0],
        o[1],
        w as f64 - MARGIN,
        o[1],
        o[0],
        o[1],
        o[0],
        MARGIN
    );

    if !points.is_empty() {
        out.push_str("<g fill=\"#333\">\n");
        for p in &points {
            let q = vp.to_pixel(*p);
            let _ = writeln!(out, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"0.6\"/>", q[0], q[1]);
        }
        out.push_str("</g>\n");
    }
    polyline(&mut out, &vp, &gt_pts, "#2a9d3a");
    polyline(&mut out, &vp, &est, "#d62828");

    let bar = scale_bar_length((w as f64 - 2.0 * MARGIN) / 4.0 / vp.scale);
    let len_px = bar * vp.scale;
    let y = h as f64 - MARGIN / 2.0;
    let _ = writeln!(
        out,
        "<g stroke=\"black\" stroke-width=\"2\"><line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\"/></g>",
        MARGIN,
        MARGIN + len_px
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" font-family=\"sans-serif\">{bar} m</text>",
        MARGIN + len_px + 4.0,
        y + 3.0
    );
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn write_svg(path: &Path, svg: &str) -> Result<()> {
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}
