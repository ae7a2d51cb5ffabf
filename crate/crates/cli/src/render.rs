//! SVG rendering of a solved instance.

use std::fmt::Write as _;

use dimfac::{CellStatus, Evaluation, Placement, Point};

use crate::config::Instance;

const PALETTE: [&str; 10] = [
    "#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
];

const CANVAS: f64 = 800.0;
const PAD: f64 = 20.0;
const LEGEND_LINE: f64 = 18.0;

struct View {
    x_lo: f64,
    y_hi: f64,
    scale: f64,
}

impl View {
    fn x(&self, x: f64) -> f64 {
        PAD + (x - self.x_lo) * self.scale
    }

    fn y(&self, y: f64) -> f64 {
        PAD + (self.y_hi - y) * self.scale
    }

    fn path(&self, pts: &[Point]) -> String {
        let mut d = String::new();
        for (k, p) in pts.iter().enumerate() {
            let _ = write!(d, "{}{:.3},{:.3} ", if k == 0 { 'M' } else { 'L' }, self.x(p.x), self.y(p.y));
        }
        d.push('Z');
        d
    }
}

pub fn palette_color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

/// Region outline, demand cells coloured by facility (footprints hatched),
/// facility outlines and a legend with masses.
pub fn render_svg(inst: &Instance, p: &Placement, e: &Evaluation, show_grid: bool) -> String {
    let di = &inst.di;
    let grid = di.grid();
    let b = *grid.bbox();
    let scale = CANVAS / b.width().max(b.height());
    let view = View { x_lo: b.x_lo, y_hi: b.y_hi, scale };
    let width = 2.0 * PAD + b.width() * scale;
    let plot_h = 2.0 * PAD + b.height() * scale;
    let height = plot_h + LEGEND_LINE * (di.rho() + 1) as f64 + PAD;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.3} {height:.3}">"#
    );
    s.push_str("<defs>\n");
    for i in 0..di.rho() {
        let _ = writeln!(
            s,
            r#"<pattern id="hatch{i}" width="6" height="6" patternUnits="userSpaceOnUse" patternTransform="rotate(45)"><rect width="6" height="6" fill="white"/><line x1="0" y1="0" x2="0" y2="6" stroke="{}" stroke-width="3"/></pattern>"#,
            palette_color(i)
        );
    }
    s.push_str("</defs>\n");
    s.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);
    s.push('\n');

    for (pos, c) in di.cells().iter().enumerate() {
        let r = grid.cell_rect(*c);
        let fill = match e.allocation.status[pos] {
            CellStatus::Assigned(i) => palette_color(i).to_string(),
            CellStatus::Covered(i) => format!("url(#hatch{i})"),
        };
        let _ = writeln!(
            s,
            r#"<rect class="cell" x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="{fill}" fill-opacity="0.6"/>"#,
            view.x(r.x_lo),
            view.y(r.y_hi),
            r.width() * scale,
            r.height() * scale
        );
    }
    if show_grid {
        for k in 0..=grid.nx() {
            let x = view.x(b.x_lo + k as f64 * grid.hx());
            let _ = writeln!(
                s,
                r#"<line class="grid" x1="{x:.3}" y1="{:.3}" x2="{x:.3}" y2="{:.3}" stroke="grey" stroke-width="0.5"/>"#,
                view.y(b.y_hi),
                view.y(b.y_lo)
            );
        }
        for l in 0..=grid.ny() {
            let y = view.y(b.y_lo + l as f64 * grid.hy());
            let _ = writeln!(
                s,
                r#"<line class="grid" x1="{:.3}" y1="{y:.3}" x2="{:.3}" y2="{y:.3}" stroke="grey" stroke-width="0.5"/>"#,
                view.x(b.x_lo),
                view.x(b.x_hi)
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<path class="region" d="{}" fill="none" stroke="black" stroke-width="2"/>"#,
        view.path(di.region().vertices())
    );
    for (i, c) in p.cells().iter().enumerate() {
        let placed = inst.facilities[i].shape.translate(grid.cell_center(*c));
        let _ = writeln!(
            s,
            r#"<path class="facility" d="{}" fill="none" stroke="{}" stroke-width="2.5"/>"#,
            view.path(&placed.world_outline(64)),
            palette_color(i)
        );
    }
    let a = &e.allocation;
    for i in 0..di.rho() {
        let y = plot_h + LEGEND_LINE * (i + 1) as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{PAD}" y="{:.3}" width="12" height="12" fill="{}"/><text x="{:.3}" y="{y:.3}" font-family="sans-serif" font-size="13">facility {i}: assigned {:.4}, installed {:.4}</text>"#,
            y - 11.0,
            palette_color(i),
            PAD + 18.0,
            a.assigned_mass[i],
            a.install_mass[i]
        );
    }
    let y = plot_h + LEGEND_LINE * (di.rho() + 1) as f64;
    let _ = writeln!(
        s,
        r#"<text x="{PAD}" y="{y:.3}" font-family="sans-serif" font-size="13">lost {:.4}, total {:.6}</text>"#,
        a.lost_mass, e.total
    );
    s.push_str("</svg>\n");
    s
}
