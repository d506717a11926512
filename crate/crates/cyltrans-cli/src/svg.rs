//! SVG 1.1 figures: time slices of a path and the fan of level cylinders.
//!
//! Both figures project onto the `z_1` plane (`Re z_1` to the right, `Im z_1`
//! up). A polar path contributes the image of its `xi_2 = 0` diameter; a line
//! path contributes the whole curve.

use cyltrans::elliptic::CylinderMesh;
use cyltrans::geom::C2;
use cyltrans::transform::{GeodesicPath, PathDomain};
use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 40.0;
const LEGEND: f64 = 150.0;
const PALETTE: [&str; 6] = ["#1b6ca8", "#d1495b", "#edae49", "#00798c", "#66a182", "#8d6a9f"];

/// A polyline in the `z_1` plane.
type Curve = Vec<[f64; 2]>;

fn project(z: &C2) -> [f64; 2] {
    [z[0].re, z[0].im]
}

/// Image of the `xi_2 = 0` diameter (polar) or the whole curve (line) at level `l`.
fn slice(path: &GeodesicPath, l: usize) -> Curve {
    let nodes = &path.levels[l];
    match path.domain {
        PathDomain::Polar { grid } => {
            let half = grid.m / 2;
            let mut c: Curve = (1..=grid.r).rev().map(|j| project(&nodes[grid.index(j, half)])).collect();
            c.push(project(&nodes[0]));
            c.extend((1..=grid.r).map(|j| project(&nodes[grid.index(j, 0)])));
            c
        }
        PathDomain::Line { .. } => nodes.iter().map(project).collect(),
    }
}

/// Cross curves `t -> Phi(p, t)` of a cylinder at angle nodes 0 and `m/2`.
fn fan_curves(c: &CylinderMesh) -> Vec<Curve> {
    let mut ids = vec![0];
    if c.m > 1 {
        ids.push(c.m / 2);
    }
    ids.into_iter().map(|i| (0..=c.k).map(|l| project(&c.node(i, l))).collect()).collect()
}

struct Frame {
    lo: [f64; 2],
    scale: f64,
}

impl Frame {
    fn fit(curves: &[&Curve]) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in curves.iter().flat_map(|c| c.iter()) {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        if !lo[0].is_finite() {
            return Frame { lo: [0.0, 0.0], scale: 1.0 };
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
        let avail = (WIDTH - 2.0 * MARGIN - LEGEND).min(HEIGHT - 2.0 * MARGIN);
        Frame { lo, scale: avail / span }
    }

    fn map(&self, p: &[f64; 2]) -> (f64, f64) {
        (MARGIN + (p[0] - self.lo[0]) * self.scale, HEIGHT - MARGIN - (p[1] - self.lo[1]) * self.scale)
    }
}

fn polyline(out: &mut String, frame: &Frame, c: &Curve, color: &str, width: f64) {
    let pts: Vec<String> = c
        .iter()
        .map(|p| {
            let (x, y) = frame.map(p);
            format!("{x:.3},{y:.3}")
        })
        .collect();
    writeln!(
        out,
        r#"  <polyline points="{}" fill="none" stroke="{color}" stroke-width="{width:.1}"/>"#,
        pts.join(" ")
    )
    .expect("writing to a string");
}

fn document(title: &str, body: &str, legend: &[(String, &str)]) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .expect("writing to a string");
    writeln!(out, r#"  <rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).expect("writing");
    writeln!(out, r#"  <text x="{MARGIN}" y="24" font-family="sans-serif" font-size="14">{title}</text>"#).expect("writing");
    out.push_str(body);
    let x = WIDTH - LEGEND;
    for (n, (label, color)) in legend.iter().enumerate() {
        let y = MARGIN + 20.0 * n as f64;
        writeln!(out, r#"  <line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/>"#, x + 20.0)
            .expect("writing");
        writeln!(
            out,
            r#"  <text x="{}" y="{}" font-family="sans-serif" font-size="12">{label}</text>"#,
            x + 26.0,
            y + 4.0
        )
        .expect("writing");
    }
    out.push_str("</svg>\n");
    out
}

/// Profile slices of `Lambda_t` at up to six evenly spaced times.
pub fn slices_svg(path: Option<&GeodesicPath>) -> String {
    let Some(path) = path else {
        return document("Lambda_t slices (no path)", "", &[("no data".into(), PALETTE[0])]);
    };
    let count = PALETTE.len().min(path.t_steps + 1);
    let levels: Vec<usize> = (0..count).map(|n| n * path.t_steps / (count - 1).max(1)).collect();
    let curves: Vec<Curve> = levels.iter().map(|&l| slice(path, l)).collect();
    let frame = Frame::fit(&curves.iter().collect::<Vec<_>>());
    let mut body = String::new();
    let mut legend = Vec::new();
    for (n, (c, l)) in curves.iter().zip(&levels).enumerate() {
        polyline(&mut body, &frame, c, PALETTE[n], 1.5);
        legend.push((format!("t = {:.3}", path.time(*l)), PALETTE[n]));
    }
    document("Lambda_t slices in the z1 plane", &body, &legend)
}

/// The two boundary slices and the cross curves of every cylinder.
pub fn fan_svg(path: Option<&GeodesicPath>, family: &[CylinderMesh]) -> String {
    let mut curves: Vec<(Curve, &str, f64)> = Vec::new();
    if let Some(p) = path {
        curves.push((slice(p, 0), "#555555", 2.0));
        curves.push((slice(p, p.t_steps), "#999999", 2.0));
    }
    for (n, c) in family.iter().enumerate() {
        for f in fan_curves(c) {
            curves.push((f, PALETTE[n % PALETTE.len()], 1.0));
        }
    }
    let frame = Frame::fit(&curves.iter().map(|c| &c.0).collect::<Vec<_>>());
    let mut body = String::new();
    for (c, color, w) in &curves {
        polyline(&mut body, &frame, c, color, *w);
    }
    let mut legend = vec![("Lambda_0".to_string(), "#555555"), ("Lambda_1".to_string(), "#999999")];
    legend.push((format!("{} cylinders", family.len()), PALETTE[0]));
    document("Cylinder fan in the z1 plane", &body, &legend)
}

#[cfg(test)]
mod tests {
    use super::*;
    use cyltrans::transform::{forward_transform, line_fixture};
    use cyltrans::tolerances::Tolerances;

    #[test]
    fn empty_family_gives_a_legend_only_canvas() {
        let s = fan_svg(None, &[]);
        assert!(s.contains("version=\"1.1\"") && s.contains("0 cylinders"));
        assert!(!s.contains("<polyline"));
    }

    #[test]
    fn line_fan_is_vertical_segments_and_deterministic() {
        let path = line_fixture(8, 8).unwrap();
        let fam: Vec<CylinderMesh> = forward_transform(&path, &[-1.5, -1.0, -0.5], &Tolerances::default())
            .unwrap()
            .into_iter()
            .map(|f| f.unwrap().isl.mesh)
            .collect();
        for c in &fam {
            for curve in fan_curves(c) {
                assert!(curve.iter().all(|p| (p[0] - curve[0][0]).abs() < 1e-12));
            }
        }
        let a = fan_svg(Some(&path), &fam);
        assert_eq!(a, fan_svg(Some(&path), &fam));
        assert_eq!(a.matches("<polyline").count(), 2 + 3);
    }
}
