//! Static grayscale heatmaps of phase-space fields.

use std::fmt::Write;

const MAX_CELLS: usize = 64;
const SIZE: f64 = 512.0;
const PAD: f64 = 48.0;

pub struct Heatmap<'a> {
    pub title: &'a str,
    /// Row-major `nx * nxi` magnitudes, `x` along rows.
    pub values: &'a [f64],
    pub nx: usize,
    pub nxi: usize,
    pub x_range: (f64, f64),
    pub xi_range: (f64, f64),
    /// Plot `log10` of the values over this many decades below the peak.
    pub log_decades: Option<f64>,
    pub marker: Option<(f64, f64)>,
}

impl Heatmap<'_> {
    /// Block maxima on at most `MAX_CELLS` cells per axis.
    fn blocks(&self) -> (Vec<f64>, usize, usize) {
        let bx = self.nx.div_ceil(MAX_CELLS);
        let bxi = self.nxi.div_ceil(MAX_CELLS);
        let (cx, cxi) = (self.nx.div_ceil(bx), self.nxi.div_ceil(bxi));
        let mut out = vec![0.0f64; cx * cxi];
        for j in 0..self.nx {
            for m in 0..self.nxi {
                let cell = &mut out[(j / bx) * cxi + m / bxi];
                *cell = cell.max(self.values[j * self.nxi + m]);
            }
        }
        (out, cx, cxi)
    }

    pub fn render(&self) -> String {
        let (cells, cx, cxi) = self.blocks();
        let peak = cells.iter().copied().fold(0.0, f64::max);
        let shade = |v: f64| -> f64 {
            if peak <= 0.0 {
                return 0.0;
            }
            match self.log_decades {
                Some(dec) => {
                    if v <= 0.0 {
                        0.0
                    } else {
                        ((v / peak).log10() / dec + 1.0).clamp(0.0, 1.0)
                    }
                }
                None => v / peak,
            }
        };
        let (w, h) = (SIZE / cx as f64, SIZE / cxi as f64);
        let total = SIZE + 2.0 * PAD;
        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}">"#);
        let _ = writeln!(s, r#"<title>{}</title>"#, escape(self.title));
        let _ = writeln!(s, r#"<rect x="0" y="0" width="{total}" height="{total}" fill="white"/>"#);
        let _ = writeln!(s, r#"<g shape-rendering="crispEdges">"#);
        for i in 0..cx {
            for k in 0..cxi {
                let level = 255 - (255.0 * shade(cells[i * cxi + k])).round() as u8;
                let (px, py) = (PAD + i as f64 * w, PAD + (cxi - 1 - k) as f64 * h);
                let _ = writeln!(
                    s,
                    r#"<rect x="{px:.3}" y="{py:.3}" width="{:.3}" height="{:.3}" fill="rgb({level},{level},{level})"/>"#,
                    w + 0.01,
                    h + 0.01
                );
            }
        }
        let _ = writeln!(s, "</g>");
        let _ = writeln!(s, r#"<rect x="{PAD}" y="{PAD}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#);
        let (x0, x1) = self.x_range;
        let (k0, k1) = self.xi_range;
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="14" text-anchor="middle">x in [{x0}, {x1}]</text>"#, PAD + SIZE / 2.0, total - 14.0);
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" font-size="14" text-anchor="middle" transform="rotate(-90 16 {})">xi in [{k0}, {k1}]</text>"#,
            PAD + SIZE / 2.0,
            PAD + SIZE / 2.0
        );
        let _ = writeln!(s, r#"<text x="{}" y="28" font-size="16" text-anchor="middle">{}</text>"#, PAD + SIZE / 2.0, escape(self.title));
        if let Some((mx, mxi)) = self.marker {
            let px = PAD + (mx - x0) / (x1 - x0) * SIZE;
            let py = PAD + (k1 - mxi) / (k1 - k0) * SIZE;
            let _ = writeln!(
                s,
                r#"<circle id="flow-image" cx="{px:.3}" cy="{py:.3}" r="6" fill="none" stroke="red" stroke-width="2" data-x="{mx}" data-xi="{mxi}"/>"#
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
