//! Static SVG emission: the band/slit geometry figure and the state-catalog
//! figure on the z-plane. No interactivity — batch inspection only.

use crate::background::Background;
use crate::states::{StateKind, StateList};
use std::fmt::Write;

const W: f64 = 640.0;

fn fmt(x: f64) -> String {
    format!("{:.3}", x)
}

fn svg_open(out: &mut String, height: f64) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {} {}\" \
         font-family=\"monospace\" font-size=\"11\">\n",
        fmt(W),
        fmt(height)
    );
    let _ = write!(
        out,
        "<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n",
        fmt(W),
        fmt(height)
    );
}

fn line(out: &mut String, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
    let _ = write!(
        out,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{stroke}\" stroke-width=\"{}\"/>\n",
        fmt(x1),
        fmt(y1),
        fmt(x2),
        fmt(y2),
        fmt(width)
    );
}

fn text(out: &mut String, x: f64, y: f64, s: &str) {
    let _ = write!(out, "<text x=\"{}\" y=\"{}\">{s}</text>\n", fmt(x), fmt(y));
}

/// Draw the unit circle and the slits g_j (radial cuts at the gap angles,
/// both half-plane copies), centered at (cx, cy) with radius r.
fn draw_slit_plane(out: &mut String, back: &Background, cx: f64, cy: f64, r: f64) {
    let _ = write!(
        out,
        "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        fmt(cx),
        fmt(cy),
        fmt(r)
    );
    line(out, cx - 1.45 * r, cy, cx + 1.45 * r, cy, "#bbb", 0.5);
    line(out, cx, cy - 1.45 * r, cx, cy + 1.45 * r, "#bbb", 0.5);
    for s in back.slits() {
        for angle in [s.angle, -s.angle] {
            let (sin, cos) = angle.sin_cos();
            line(
                out,
                cx + r * s.r_inner * cos,
                cy - r * s.r_inner * sin,
                cx + r * s.r_outer * cos,
                cy - r * s.r_outer * sin,
                "crimson",
                2.0,
            );
        }
    }
    // the outermost cut along the negative real axis (image of the unbounded gaps)
    line(out, cx - 1.4 * r, cy, cx - 0.55 * r, cy, "#888", 1.0);
}

/// Figure 1: spectral bands on the real line (top) and the slit z-plane
/// (bottom).
pub fn bands_svg(back: &Background) -> String {
    let mut out = String::new();
    svg_open(&mut out, 430.0);
    let bands = &back.bands;
    let q = bands.n_bands();
    let lo = bands.edges[0];
    let hi = bands.edges[2 * q - 1];
    let pad = 0.08 * (hi - lo).max(1.0);
    let to_x = |lam: f64| 40.0 + (lam - lo + pad) / (hi - lo + 2.0 * pad) * (W - 80.0);
    let axis_y = 70.0;
    text(&mut out, 40.0, 30.0, "spectrum of the background");
    line(&mut out, 30.0, axis_y, W - 30.0, axis_y, "#888", 1.0);
    for j in 1..=q {
        let (a, b) = bands.band(j);
        line(&mut out, to_x(a), axis_y, to_x(b), axis_y, "steelblue", 6.0);
    }
    for &e in &bands.edges {
        line(&mut out, to_x(e), axis_y - 8.0, to_x(e), axis_y + 8.0, "black", 1.0);
        text(&mut out, to_x(e) - 12.0, axis_y + 24.0, &format!("{e:.3}"));
    }
    for (k, &mu) in bands.mu.iter().enumerate() {
        let _ = write!(
            out,
            "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"none\" stroke=\"crimson\"/>\n",
            fmt(to_x(mu)),
            fmt(axis_y - 14.0)
        );
        text(&mut out, to_x(mu) - 8.0, axis_y - 20.0, &format!("mu{}", k + 1));
    }
    for &al in &bands.alpha {
        line(
            &mut out,
            to_x(al),
            axis_y + 10.0,
            to_x(al),
            axis_y + 16.0,
            "darkgreen",
            1.5,
        );
    }
    text(&mut out, 40.0, 140.0, "slit z-plane");
    draw_slit_plane(&mut out, back, W / 2.0, 290.0, 95.0);
    out.push_str("</svg>\n");
    out
}

fn marker(out: &mut String, kind: StateKind, x: f64, y: f64) {
    match kind {
        StateKind::Bound => {
            let _ = write!(
                out,
                "<circle cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"navy\"/>\n",
                fmt(x),
                fmt(y)
            );
        }
        StateKind::Antibound => {
            let _ = write!(
                out,
                "<circle cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"none\" stroke=\"navy\"/>\n",
                fmt(x),
                fmt(y)
            );
        }
        StateKind::Resonance => {
            line(out, x - 4.0, y - 4.0, x + 4.0, y + 4.0, "darkorange", 1.5);
            line(out, x - 4.0, y + 4.0, x + 4.0, y - 4.0, "darkorange", 1.5);
        }
        StateKind::Virtual => {
            let _ = write!(
                out,
                "<path d=\"M {} {} l 5 8 l -10 0 z\" fill=\"seagreen\"/>\n",
                fmt(x),
                fmt(y - 5.0)
            );
        }
    }
}

/// Figure 2: the state catalog as markers on the slit z-plane.
pub fn states_svg(back: &Background, states: &StateList) -> String {
    let mut out = String::new();
    svg_open(&mut out, 420.0);
    text(&mut out, 40.0, 30.0, "states in the z-plane");
    let (cx, cy, r) = (W / 2.0, 215.0, 130.0);
    draw_slit_plane(&mut out, back, cx, cy, r);
    for st in &states.states {
        let kz = back.quasimomentum(&st.point());
        marker(&mut out, st.kind, cx + r * kz.z.re, cy - r * kz.z.im);
    }
    let ly = 395.0;
    marker(&mut out, StateKind::Bound, 50.0, ly - 4.0);
    text(&mut out, 60.0, ly, "bound");
    marker(&mut out, StateKind::Antibound, 150.0, ly - 4.0);
    text(&mut out, 160.0, ly, "antibound");
    marker(&mut out, StateKind::Resonance, 280.0, ly - 4.0);
    text(&mut out, 290.0, ly, "resonance");
    marker(&mut out, StateKind::Virtual, 410.0, ly - 4.0);
    text(&mut out, 420.0, ly, "virtual");
    out.push_str("</svg>\n");
    out
}
