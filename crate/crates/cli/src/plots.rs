//! SVG renderings of the report sections.

use shiftlens_core::metrics::Metric;
use shiftlens_core::stats::AggregateTable;

use crate::commands::analyze::{DensitySection, HeatmapRow};
use crate::commands::cluster::DendrogramLayout;
use crate::svg::{diverging_color, fmt, scale, Anchor, Svg, PALETTE};

const MARGIN: f64 = 20.0;
const LABEL_WIDTH: f64 = 190.0;

/// Normalized metrics per augmentation, one row each, in the given order.
pub fn heatmap_svg(rows: &[HeatmapRow]) -> String {
    let (cell_w, cell_h) = (90.0, 28.0);
    // L2 is shown inverted, like every other column higher is better.
    let columns: Vec<&str> = Metric::ALL
        .iter()
        .map(|&m| if m == Metric::L2Dist { "1 - l2_dist" } else { m.name() })
        .chain(["average"])
        .collect();
    let top = MARGIN + 40.0;
    let width = MARGIN * 2.0 + LABEL_WIDTH + cell_w * columns.len() as f64;
    let height = top + cell_h * rows.len() as f64 + MARGIN;
    let mut svg = Svg::new(width, height);
    svg.text(
        MARGIN,
        MARGIN + 4.0,
        14.0,
        Anchor::Start,
        "Augmentation performance (normalized, sorted)",
    );
    let x0 = MARGIN + LABEL_WIDTH;
    for (j, name) in columns.iter().enumerate() {
        svg.text(x0 + cell_w * (j as f64 + 0.5), top - 8.0, 11.0, Anchor::Middle, name);
    }
    for (i, row) in rows.iter().enumerate() {
        let y = top + cell_h * i as f64;
        svg.text(x0 - 8.0, y + cell_h * 0.65, 12.0, Anchor::End, row.augmentation.name());
        let values = Metric::ALL
            .iter()
            .map(|&m| *row.normalized.get(m))
            .chain([row.average_performance]);
        for (j, v) in values.enumerate() {
            let x = x0 + cell_w * j as f64;
            let (fill, label) = match v {
                Some(v) => (diverging_color(v), fmt(v)),
                None => ("#d9d9d9".to_string(), "n/a".to_string()),
            };
            svg.rect(x, y, cell_w, cell_h, &fill, Some("#ffffff"));
            svg.text(x + cell_w / 2.0, y + cell_h * 0.65, 11.0, Anchor::Middle, &label);
        }
    }
    svg.finish()
}

/// Horizontal dendrogram: leaves on the left, merge height to the right.
pub fn dendrogram_svg(layout: &DendrogramLayout, threshold: Option<f64>) -> String {
    let slot = 30.0;
    let plot_w = 420.0;
    let top = MARGIN + 30.0;
    let height = top + slot * layout.leaves.len() as f64 + 40.0;
    let width = MARGIN * 2.0 + LABEL_WIDTH + plot_w;
    let x0 = MARGIN + LABEL_WIDTH;
    let max_h = match threshold {
        Some(t) if t.is_finite() => layout.max_height.max(t),
        _ => layout.max_height,
    };
    let px = |h: f64| scale(h, 0.0, max_h, x0, x0 + plot_w);
    let py = |i: f64| top + (i - 5.0) / 10.0 * slot + slot / 2.0;
    let mut svg = Svg::new(width, height);
    svg.text(
        MARGIN,
        MARGIN + 4.0,
        14.0,
        Anchor::Start,
        "Average-linkage clustering of L2 profiles",
    );
    for (k, label) in layout.labels.iter().enumerate() {
        let y = py(5.0 + 10.0 * k as f64);
        svg.text(x0 - 8.0, y + 4.0, 12.0, Anchor::End, label);
    }
    for link in &layout.links {
        let pts: Vec<(f64, f64)> = link
            .icoord
            .iter()
            .zip(&link.dcoord)
            .map(|(&i, &d)| (px(d), py(i)))
            .collect();
        svg.polyline(&pts, "#1f77b4", 1.5);
    }
    let axis_y = top + slot * layout.leaves.len() as f64 + 8.0;
    svg.line(x0, axis_y, x0 + plot_w, axis_y, "#000000", 1.0);
    svg.text(x0, axis_y + 16.0, 11.0, Anchor::Middle, "0");
    svg.text(x0 + plot_w, axis_y + 16.0, 11.0, Anchor::Middle, &fmt(max_h));
    if let Some(t) = threshold.filter(|t| t.is_finite()) {
        svg.dashed_line(px(t), top, px(t), axis_y, "#d62728");
        svg.text(px(t), top - 6.0, 11.0, Anchor::Middle, &format!("t = {}", fmt(t)));
    }
    svg.finish()
}

/// Density curves, one per augmentation. Sections without an estimate are
/// listed in the legend as absent.
pub fn density_svg(sections: &[DensitySection], title: &str, axis_label: &str) -> String {
    let (plot_w, plot_h) = (520.0, 300.0);
    let top = MARGIN + 30.0;
    let x0 = MARGIN + 50.0;
    let legend_x = x0 + plot_w + 20.0;
    let width = legend_x + 260.0;
    let height = top + plot_h + 50.0;
    let estimates: Vec<_> = sections.iter().filter_map(|s| s.estimate.as_ref()).collect();
    let lo = estimates
        .iter()
        .filter_map(|e| e.grid.first())
        .copied()
        .fold(f64::INFINITY, f64::min);
    let hi = estimates
        .iter()
        .filter_map(|e| e.grid.last())
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let ymax = estimates
        .iter()
        .flat_map(|e| e.density.iter())
        .copied()
        .fold(0.0, f64::max);
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };

    let mut svg = Svg::new(width, height);
    svg.text(MARGIN, MARGIN + 4.0, 14.0, Anchor::Start, title);
    let base = top + plot_h;
    svg.line(x0, base, x0 + plot_w, base, "#000000", 1.0);
    svg.line(x0, top, x0, base, "#000000", 1.0);
    svg.text(x0, base + 16.0, 11.0, Anchor::Middle, &fmt(lo));
    svg.text(x0 + plot_w, base + 16.0, 11.0, Anchor::Middle, &fmt(hi));
    svg.text(x0 + plot_w / 2.0, base + 34.0, 12.0, Anchor::Middle, axis_label);
    svg.text(x0 - 6.0, top + 4.0, 11.0, Anchor::End, &fmt(ymax));
    svg.text(x0 - 6.0, base, 11.0, Anchor::End, "0");
    for (k, s) in sections.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let ly = top + 18.0 * k as f64;
        svg.line(legend_x, ly, legend_x + 18.0, ly, color, 2.0);
        let name = match &s.estimate {
            Some(_) => s.augmentation.name().to_string(),
            None => format!("{} (no density)", s.augmentation.name()),
        };
        svg.text(legend_x + 24.0, ly + 4.0, 11.0, Anchor::Start, &name);
        if let Some(e) = &s.estimate {
            let pts: Vec<(f64, f64)> = e
                .grid
                .iter()
                .zip(&e.density)
                .map(|(&x, &d)| (scale(x, lo, hi, x0, x0 + plot_w), scale(d, 0.0, ymax, base, top)))
                .collect();
            svg.polyline(&pts, color, 1.5);
        }
    }
    svg.finish()
}

/// Mean L2 distance per augmentation.
pub fn l2_bar_svg(table: &AggregateTable) -> String {
    let (bar_h, gap, plot_w) = (22.0, 8.0, 400.0);
    let top = MARGIN + 30.0;
    let x0 = MARGIN + LABEL_WIDTH;
    let width = x0 + plot_w + 90.0;
    let height = top + (bar_h + gap) * table.rows.len() as f64 + MARGIN;
    let max = table.rows.iter().filter_map(|r| r.mean.l2_dist).fold(0.0, f64::max);
    let mut svg = Svg::new(width, height);
    svg.text(
        MARGIN,
        MARGIN + 4.0,
        14.0,
        Anchor::Start,
        "Average L2 distance per augmentation",
    );
    for (i, row) in table.rows.iter().enumerate() {
        let y = top + (bar_h + gap) * i as f64;
        svg.text(x0 - 8.0, y + bar_h * 0.7, 12.0, Anchor::End, row.augmentation.name());
        match row.mean.l2_dist {
            Some(v) => {
                let w = if max > 0.0 { v / max * plot_w } else { 0.0 };
                svg.rect(x0, y, w, bar_h, PALETTE[i % PALETTE.len()], None);
                svg.text(x0 + w + 6.0, y + bar_h * 0.7, 11.0, Anchor::Start, &fmt(v));
            }
            None => svg.text(x0 + 6.0, y + bar_h * 0.7, 11.0, Anchor::Start, "n/a"),
        }
    }
    svg.finish()
}
