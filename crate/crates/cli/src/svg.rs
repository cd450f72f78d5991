//! Minimal SVG heat maps on an equiangular latitude-longitude projection.

use std::fmt::Write;

use anisokin::grid::{to_spherical, LatLongGrid};
use nalgebra::Vector3;

const CELL: f64 = 3.0;
const MARGIN: f64 = 24.0;

// viridis, sampled at five stops
const STOPS: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

fn colour(t: f64) -> String {
    let t = if t.is_finite() {
        t.clamp(0.0, 1.0)
    } else {
        0.0
    };
    let x = t * (STOPS.len() - 1) as f64;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - i as f64;
    let c: Vec<u8> = (0..3)
        .map(|k| (STOPS[i][k] + f * (STOPS[i + 1][k] - STOPS[i][k])).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

pub struct Panel<'a> {
    pub title: String,
    /// Row-major values on `grid`.
    pub values: &'a [f64],
    pub markers: &'a [Vector3<f64>],
}

/// Panels laid out in a `cols`-wide array; each panel gets its own colour scale.
pub fn heat_maps(grid: &LatLongGrid, panels: &[Panel], cols: usize) -> String {
    let w = grid.n_phi as f64 * CELL;
    let h = grid.n_theta as f64 * CELL;
    let rows = panels.len().div_ceil(cols);
    let total_w = cols as f64 * (w + 2.0 * MARGIN);
    let total_h = rows as f64 * (h + 2.0 * MARGIN);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{total_h}" font-family="sans-serif" font-size="10">"#
    );
    for (p, panel) in panels.iter().enumerate() {
        let x0 = (p % cols) as f64 * (w + 2.0 * MARGIN) + MARGIN;
        let y0 = (p / cols) as f64 * (h + 2.0 * MARGIN) + MARGIN;
        let lo = panel
            .values
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(f64::INFINITY, f64::min);
        let hi = panel
            .values
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let _ = writeln!(
            s,
            r#"<text x="{x0}" y="{}">{} [{lo:.4e}, {hi:.4e}]</text>"#,
            y0 - 6.0,
            panel.title
        );
        for i in 0..grid.n_theta {
            for j in 0..grid.n_phi {
                let v = panel.values[i * grid.n_phi + j];
                let _ = writeln!(
                    s,
                    r#"<rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="{}"/>"#,
                    x0 + j as f64 * CELL,
                    y0 + i as f64 * CELL,
                    colour((v - lo) / span)
                );
            }
        }
        for m in panel.markers {
            let (t, ph) = to_spherical(m);
            let cx = x0 + ph / (2.0 * std::f64::consts::PI) * w;
            let cy = y0 + t / std::f64::consts::PI * h;
            let _ = writeln!(
                s,
                r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="4" fill="none" stroke="red" stroke-width="1.5"/>"#
            );
        }
        let _ = writeln!(
            s,
            r#"<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="black"/>"#
        );
    }
    s.push_str("</svg>\n");
    s
}
