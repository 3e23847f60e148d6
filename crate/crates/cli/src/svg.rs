//! Dependency-free SVG heatmaps for amplitude and coincidence grids.

/// Renders a magnitude grid (row-major) as a square-cell heatmap. Values are
/// normalized to the grid maximum; the output is deterministic text suitable
/// for golden-file comparison.
pub fn heatmap(values: &[Vec<f64>], title: &str) -> String {
    let rows = values.len();
    let cols = values.first().map_or(0, |r| r.len());
    let cell = 14usize;
    let margin = 4usize;
    let title_band = 18usize;
    let width = cols * cell + 2 * margin;
    let height = rows * cell + 2 * margin + title_band;
    let max = values
        .iter()
        .flatten()
        .fold(0.0f64, |a, &v| a.max(v.abs()))
        .max(1e-300);

    let mut out = String::with_capacity(rows * cols * 64);
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    ));
    out.push_str(&format!(
        "<text x=\"{margin}\" y=\"13\" font-family=\"monospace\" font-size=\"11\">{}</text>\n",
        xml_escape(title)
    ));
    for (i, row) in values.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let (r, g, b) = colormap(v.abs() / max);
            let x = margin + j * cell;
            let y = title_band + margin + i * cell;
            out.push_str(&format!(
                "<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"rgb({r},{g},{b})\"/>\n"
            ));
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Dark-blue to yellow ramp, clamped to [0, 1].
fn colormap(t: f64) -> (u8, u8, u8) {
    let t = t.clamp(0.0, 1.0);
    let r = 255.0 * t.powf(0.7);
    let g = 255.0 * (0.1 + 0.9 * t * t).min(1.0) * t.sqrt();
    let b = 255.0 * (0.35 + 0.35 * (1.0 - t)) * (1.0 - 0.8 * t * t);
    (r as u8, g as u8, b as u8)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
