//! Self-contained SVG plots: line charts and density heatmaps. CSV files
//! remain the source of truth; these are viewing conveniences with no
//! external renderer.

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 50.0;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn finite_bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Multi-series line plot. Each series is (label, points).
pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (xlo, xhi) = finite_bounds(series.iter().flat_map(|(_, p)| p.iter().map(|(x, _)| *x)));
    let (ylo, yhi) = finite_bounds(series.iter().flat_map(|(_, p)| p.iter().map(|(_, y)| *y)));
    let sx = |x: f64| MARGIN + (x - xlo) / (xhi - xlo) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - ylo) / (yhi - ylo) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = svg_open(title);
    svg.push_str(&axes(xlabel, ylabel, xlo, xhi, ylo, yhi));
    for (i, (label, points)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            path.join(" ")
        ));
        svg.push_str(&format!(
            "<text x=\"{:.0}\" y=\"{:.0}\" fill=\"{color}\" font-size=\"12\">{label}</text>\n",
            WIDTH - MARGIN - 150.0,
            MARGIN + 16.0 * (i as f64 + 1.0)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Density heatmap: one row per iteration. Rows are normalized by the
/// per-run maximum (noted in the legend).
pub fn heatmap(title: &str, rows: &[Vec<f64>], action_lo: f64, action_hi: f64) -> String {
    let max = rows
        .iter()
        .flat_map(|r| r.iter())
        .copied()
        .filter(|v: &f64| v.is_finite())
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let mut svg = svg_open(title);
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let cell_h = plot_h / rows.len().max(1) as f64;
    for (i, row) in rows.iter().enumerate() {
        let cell_w = plot_w / row.len().max(1) as f64;
        for (j, &v) in row.iter().enumerate() {
            let t = (v / max).clamp(0.0, 1.0);
            // Dark blue to bright yellow.
            let r = (255.0 * t) as u8;
            let g = (220.0 * t) as u8;
            let b = (80.0 + 120.0 * (1.0 - t)) as u8;
            svg.push_str(&format!(
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"rgb({r},{g},{b})\"/>\n",
                MARGIN + j as f64 * cell_w,
                MARGIN + i as f64 * cell_h,
                cell_w + 0.5,
                cell_h + 0.5,
            ));
        }
    }
    svg.push_str(&format!(
        "<text x=\"{MARGIN}\" y=\"{:.0}\" font-size=\"12\">actions {action_lo} to {action_hi} (x), iterations (y); colors normalized to the per-run max density</text>\n",
        HEIGHT - 12.0
    ));
    svg.push_str("</svg>\n");
    svg
}

fn svg_open(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{:.0}\" y=\"24\" font-size=\"15\" font-weight=\"bold\">{title}</text>\n",
        MARGIN
    )
}

fn axes(xlabel: &str, ylabel: &str, xlo: f64, xhi: f64, ylo: f64, yhi: f64) -> String {
    format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <text x=\"{cx:.0}\" y=\"{below:.0}\" font-size=\"12\" text-anchor=\"middle\">{xlabel}</text>\n\
         <text x=\"14\" y=\"{cy:.0}\" font-size=\"12\" transform=\"rotate(-90 14 {cy:.0})\" text-anchor=\"middle\">{ylabel}</text>\n\
         <text x=\"{m}\" y=\"{below:.0}\" font-size=\"10\">{xlo:.3}</text>\n\
         <text x=\"{r:.0}\" y=\"{below:.0}\" font-size=\"10\" text-anchor=\"end\">{xhi:.3}</text>\n\
         <text x=\"{lx:.0}\" y=\"{b}\" font-size=\"10\" text-anchor=\"end\">{ylo:.3}</text>\n\
         <text x=\"{lx:.0}\" y=\"{t}\" font-size=\"10\" text-anchor=\"end\">{yhi:.3}</text>\n",
        m = MARGIN,
        r = WIDTH - MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN,
        cx = WIDTH / 2.0,
        cy = HEIGHT / 2.0,
        below = HEIGHT - MARGIN + 28.0,
        lx = MARGIN - 4.0,
    )
}
