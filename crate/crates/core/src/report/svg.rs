// SPDX-License-Identifier: MIT OR Apache-2.0

//! Hand-emitted SVG figures on a fixed 800×600 canvas.
//!
//! All coordinates are printed with two decimals so identical inputs give
//! identical bytes on every platform.

use std::fmt::Write as _;

use crate::contingency::StratumRate;
use crate::featurestats::{FeatureStat, ALPHA, LARGE_EFFECT};
use crate::predictor::{CvResult, RocPoint};
use crate::report::AblationSummary;
use crate::sweep::SeedSummary;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;
pub const MARGIN_LEFT: f64 = 80.0;
pub const MARGIN_RIGHT: f64 = 40.0;
pub const MARGIN_TOP: f64 = 60.0;
pub const MARGIN_BOTTOM: f64 = 90.0;

/// Volcano y values are capped here (p below 1e-10).
pub const VOLCANO_Y_CAP: f64 = 10.0;

const COLOR_BASE: &str = "#7f8c8d";
const COLOR_HIT: &str = "#c0392b";
const COLOR_ACCENT: &str = "#2e86c1";
const COLOR_AXIS: &str = "#2c3e50";
const COLOR_GRID: &str = "#e5e8e8";

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Linear map from data range to pixel range.
#[derive(Debug, Clone, Copy)]
struct Scale {
    d0: f64,
    d1: f64,
    p0: f64,
    p1: f64,
}

impl Scale {
    fn new(d0: f64, d1: f64, p0: f64, p1: f64) -> Self {
        let (d0, d1) = if (d1 - d0).abs() < 1e-12 {
            (d0 - 0.5, d1 + 0.5)
        } else {
            (d0, d1)
        };
        Scale { d0, d1, p0, p1 }
    }

    fn at(&self, v: f64) -> f64 {
        self.p0 + (v - self.d0) / (self.d1 - self.d0) * (self.p1 - self.p0)
    }
}

struct Canvas {
    body: String,
}

impl Canvas {
    fn new(title: &str) -> Self {
        let mut c = Canvas {
            body: String::new(),
        };
        let _ = writeln!(
            c.body,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH:.0}\" height=\"{HEIGHT:.0}\" viewBox=\"0 0 {WIDTH:.0} {HEIGHT:.0}\" font-family=\"sans-serif\">"
        );
        let _ = writeln!(
            c.body,
            "<rect x=\"0\" y=\"0\" width=\"{WIDTH:.0}\" height=\"{HEIGHT:.0}\" fill=\"#ffffff\"/>"
        );
        c.text(WIDTH / 2.0, 32.0, title, 18.0, "middle", COLOR_AXIS);
        c
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, color: &str, width: f64) {
        let _ = writeln!(
            self.body,
            "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"{color}\" stroke-width=\"{width:.2}\"/>"
        );
    }

    fn dashed(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, color: &str) {
        let _ = writeln!(
            self.body,
            "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"{color}\" stroke-width=\"1.00\" stroke-dasharray=\"5,4\"/>"
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, class: &str) {
        let _ = writeln!(
            self.body,
            "<rect class=\"{class}\" x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"{fill}\"/>"
        );
    }

    fn circle(&mut self, cx: f64, cy: f64, r: f64, fill: &str, class: &str) {
        let _ = writeln!(
            self.body,
            "<circle class=\"{class}\" cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{r:.2}\" fill=\"{fill}\" fill-opacity=\"0.75\"/>"
        );
    }

    fn text(&mut self, x: f64, y: f64, s: &str, size: f64, anchor: &str, color: &str) {
        let _ = writeln!(
            self.body,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" font-size=\"{size:.0}\" text-anchor=\"{anchor}\" fill=\"{color}\">{}</text>",
            esc(s)
        );
    }

    fn rotated_text(&mut self, x: f64, y: f64, s: &str, size: f64) {
        let _ = writeln!(
            self.body,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" font-size=\"{size:.0}\" text-anchor=\"middle\" fill=\"{COLOR_AXIS}\" transform=\"rotate(-90 {x:.2} {y:.2})\">{}</text>",
            esc(s)
        );
    }

    fn polyline(&mut self, points: &[(f64, f64)], color: &str, class: &str) {
        let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            self.body,
            "<polyline class=\"{class}\" points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2.00\"/>",
            pts.join(" ")
        );
    }

    fn star(&mut self, cx: f64, cy: f64, r: f64) {
        let pts: Vec<String> = (0..10)
            .map(|i| {
                let radius = if i % 2 == 0 { r } else { r * 0.45 };
                let angle = std::f64::consts::PI * (i as f64) / 5.0 - std::f64::consts::FRAC_PI_2;
                format!("{:.2},{:.2}", cx + radius * angle.cos(), cy + radius * angle.sin())
            })
            .collect();
        let _ = writeln!(
            self.body,
            "<polygon class=\"star\" points=\"{}\" fill=\"#f1c40f\" stroke=\"{COLOR_AXIS}\" stroke-width=\"0.80\"/>",
            pts.join(" ")
        );
    }

    /// Plot frame with axis labels, numeric y ticks and optional numeric x ticks.
    fn axes(&mut self, xs: Option<&Scale>, ys: &Scale, x_label: &str, y_label: &str, y_ticks: &[f64]) {
        let (left, right) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
        let (top, bottom) = (MARGIN_TOP, HEIGHT - MARGIN_BOTTOM);
        for &t in y_ticks {
            let y = ys.at(t);
            self.line(left, y, right, y, COLOR_GRID, 1.0);
            self.text(left - 8.0, y + 4.0, &tick_label(t), 12.0, "end", COLOR_AXIS);
        }
        if let Some(xs) = xs {
            for t in nice_ticks(xs.d0, xs.d1) {
                let x = xs.at(t);
                self.line(x, bottom, x, bottom + 5.0, COLOR_AXIS, 1.0);
                self.text(x, bottom + 20.0, &tick_label(t), 12.0, "middle", COLOR_AXIS);
            }
        }
        self.line(left, bottom, right, bottom, COLOR_AXIS, 1.5);
        self.line(left, top, left, bottom, COLOR_AXIS, 1.5);
        self.text((left + right) / 2.0, HEIGHT - 30.0, x_label, 14.0, "middle", COLOR_AXIS);
        self.rotated_text(24.0, (top + bottom) / 2.0, y_label, 14.0);
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn tick_label(v: f64) -> String {
    if v == v.round() {
        format!("{v:.0}")
    } else {
        let s = format!("{v:.2}");
        s.trim_end_matches('0').to_string()
    }
}

/// Roughly five round-numbered ticks spanning `[lo, hi]`.
fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).abs().max(1e-9);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn unit_ticks() -> Vec<f64> {
    vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
}

fn plot_x() -> (f64, f64) {
    (MARGIN_LEFT, WIDTH - MARGIN_RIGHT)
}

fn plot_y() -> (f64, f64) {
    (HEIGHT - MARGIN_BOTTOM, MARGIN_TOP)
}

/// Is this feature drawn as a highlighted volcano point?
pub fn volcano_hit(s: &FeatureStat) -> bool {
    s.p_holm < ALPHA && s.d.abs() > LARGE_EFFECT
}

pub fn volcano_y(p_holm: f64) -> f64 {
    if p_holm < 1e-10 {
        VOLCANO_Y_CAP
    } else {
        (-p_holm.log10()).clamp(0.0, VOLCANO_Y_CAP)
    }
}

/// Effect size against −log10 adjusted p for every feature.
pub fn volcano(stats: &[FeatureStat], label_feature: Option<usize>) -> String {
    let dmax = stats
        .iter()
        .map(|s| s.d.abs())
        .fold(1.0f64, f64::max)
        .ceil();
    let xs = Scale::new(-dmax, dmax, plot_x().0, plot_x().1);
    let ys = Scale::new(0.0, VOLCANO_Y_CAP + 0.5, plot_y().0, plot_y().1);
    let mut c = Canvas::new("Per-feature failure contrast (volcano)");
    c.axes(
        Some(&xs),
        &ys,
        "Cohen's d (positive = fires more on failure)",
        "-log10(Holm-adjusted p), capped at 10",
        &[0.0, 2.0, 4.0, 6.0, 8.0, 10.0],
    );
    let y_sig = ys.at(-ALPHA.log10());
    c.dashed(plot_x().0, y_sig, plot_x().1, y_sig, COLOR_AXIS);
    for x in [-LARGE_EFFECT, LARGE_EFFECT] {
        c.dashed(xs.at(x), plot_y().0, xs.at(x), plot_y().1, COLOR_AXIS);
    }
    // background first so highlighted points stay on top
    for s in stats.iter().filter(|s| !volcano_hit(s)) {
        c.circle(xs.at(s.d), ys.at(volcano_y(s.p_holm)), 2.0, COLOR_BASE, "feature");
    }
    for s in stats.iter().filter(|s| volcano_hit(s)) {
        c.circle(xs.at(s.d), ys.at(volcano_y(s.p_holm)), 3.0, COLOR_HIT, "hit");
    }
    if let Some(s) = label_feature.and_then(|f| stats.iter().find(|s| s.feature_id == f)) {
        let (x, y) = (xs.at(s.d), ys.at(volcano_y(s.p_holm)));
        let anchor = if s.d >= 0.0 { "end" } else { "start" };
        let dx = if s.d >= 0.0 { -8.0 } else { 8.0 };
        c.text(x + dx, y - 8.0, &format!("feature {}", s.feature_id), 13.0, anchor, COLOR_AXIS);
    }
    c.finish()
}

/// Per-stratum distribution of one feature's activation.
pub fn stratum_distribution(feature_id: usize, groups: &[(String, Vec<f64>)], highlight: Option<&str>) -> String {
    let vmax = groups
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .fold(0.0f64, f64::max);
    let ymax = if vmax > 0.0 { vmax * 1.1 } else { 1.0 };
    let ys = Scale::new(0.0, ymax, plot_y().0, plot_y().1);
    let band = (plot_x().1 - plot_x().0) / groups.len().max(1) as f64;
    let mut c = Canvas::new(&format!("Feature {feature_id} activation by stratum"));
    c.axes(None, &ys, "", "activation", &nice_ticks(0.0, ymax));
    for (g, (label, values)) in groups.iter().enumerate() {
        let center = plot_x().0 + band * (g as f64 + 0.5);
        let color = if highlight == Some(label.as_str()) {
            COLOR_HIT
        } else {
            COLOR_ACCENT
        };
        for (i, &v) in values.iter().enumerate() {
            let jitter = ((i * 7919) % 21) as f64 - 10.0;
            c.circle(center + jitter * band / 60.0, ys.at(v), 2.5, color, "obs");
        }
        if !values.is_empty() {
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            c.line(center - band * 0.3, ys.at(mean), center + band * 0.3, ys.at(mean), COLOR_AXIS, 2.0);
        }
        c.text(center, plot_y().0 + 20.0, label, 12.0, "middle", COLOR_AXIS);
    }
    c.finish()
}

/// Failure rate per stratum with `fail/total` labels.
pub fn failure_rate_bars(field: &str, rows: &[StratumRate], highlight: Option<&str>) -> String {
    let ys = Scale::new(0.0, 1.0, plot_y().0, plot_y().1);
    let band = (plot_x().1 - plot_x().0) / rows.len().max(1) as f64;
    let mut c = Canvas::new(&format!("Failure rate by {field}"));
    c.axes(None, &ys, field, "failure rate", &unit_ticks());
    for (i, r) in rows.iter().enumerate() {
        let x = plot_x().0 + band * i as f64 + band * 0.15;
        let w = band * 0.7;
        let top = ys.at(r.rate);
        let color = if highlight == Some(r.value.as_str()) {
            COLOR_HIT
        } else {
            COLOR_ACCENT
        };
        c.rect(x, top, w, ys.at(0.0) - top, color, "bar");
        c.text(x + w / 2.0, top - 6.0, &format!("{}/{}", r.n_fail, r.n_total), 12.0, "middle", COLOR_AXIS);
        c.text(x + w / 2.0, plot_y().0 + 20.0, &r.value, 12.0, "middle", COLOR_AXIS);
    }
    c.finish()
}

/// Accuracy before and after ablation for each subset.
pub fn ablation_bars(rows: &[AblationSummary]) -> String {
    let ys = Scale::new(0.0, 1.0, plot_y().0, plot_y().1);
    let band = (plot_x().1 - plot_x().0) / rows.len().max(1) as f64;
    let title = match rows.iter().find_map(|r| r.feature) {
        Some(f) => format!("Accuracy before / after ablating feature {f}"),
        None => "Accuracy before / after ablation".to_string(),
    };
    let mut c = Canvas::new(&title);
    c.axes(None, &ys, "subset", "accuracy", &unit_ticks());
    for (i, r) in rows.iter().enumerate() {
        let x0 = plot_x().0 + band * i as f64 + band * 0.15;
        let w = band * 0.35;
        for (j, (v, color)) in [(r.acc_before, COLOR_ACCENT), (r.acc_after, COLOR_HIT)].iter().enumerate() {
            let x = x0 + j as f64 * w;
            let top = ys.at(*v);
            c.rect(x, top, w * 0.95, ys.at(0.0) - top, color, "bar");
            c.text(x + w / 2.0, top - 6.0, &format!("{:.1}%", v * 100.0), 12.0, "middle", COLOR_AXIS);
        }
        c.text(x0 + w, plot_y().0 + 20.0, &format!("{} (n={})", r.subset, r.n), 12.0, "middle", COLOR_AXIS);
    }
    c.rect(WIDTH - 200.0, 50.0, 12.0, 12.0, COLOR_ACCENT, "legend");
    c.text(WIDTH - 182.0, 60.0, "baseline", 12.0, "start", COLOR_AXIS);
    c.rect(WIDTH - 110.0, 50.0, 12.0, 12.0, COLOR_HIT, "legend");
    c.text(WIDTH - 92.0, 60.0, "ablated", 12.0, "start", COLOR_AXIS);
    c.finish()
}

/// Mean cross-validated AUC per representation with ±1 SD whiskers.
pub fn auc_bars(results: &[CvResult]) -> String {
    let ys = Scale::new(0.5, 1.0, plot_y().0, plot_y().1);
    let band = (plot_x().1 - plot_x().0) / results.len().max(1) as f64;
    let mut c = Canvas::new("Failure prediction: 5-fold ROC AUC by representation");
    c.axes(None, &ys, "representation", "mean ROC AUC", &[0.5, 0.6, 0.7, 0.8, 0.9, 1.0]);
    for (i, r) in results.iter().enumerate() {
        let x = plot_x().0 + band * i as f64 + band * 0.15;
        let w = band * 0.7;
        let top = ys.at(r.mean_auc.max(0.5));
        let color = if r.k == crate::predictor::KSpec::Raw {
            COLOR_HIT
        } else {
            COLOR_ACCENT
        };
        c.rect(x, top, w, ys.at(0.5) - top, color, "bar");
        let cx = x + w / 2.0;
        let lo = ys.at((r.mean_auc - r.std_auc).max(0.5));
        let hi = ys.at((r.mean_auc + r.std_auc).min(1.0));
        c.line(cx, lo, cx, hi, COLOR_AXIS, 1.5);
        c.text(cx, hi - 6.0, &format!("{:.3}", r.mean_auc), 12.0, "middle", COLOR_AXIS);
        let label = match r.k {
            crate::predictor::KSpec::Top(k) => format!("top-{k}"),
            crate::predictor::KSpec::All => "all SAE".into(),
            crate::predictor::KSpec::Raw => "raw".into(),
        };
        c.text(cx, plot_y().0 + 20.0, &label, 12.0, "middle", COLOR_AXIS);
    }
    c.finish()
}

/// ROC curve polyline with the chance diagonal.
pub fn roc(points: &[RocPoint], auc: Option<f64>, feature_id: Option<usize>) -> String {
    let xs = Scale::new(0.0, 1.0, plot_x().0, plot_x().1);
    let ys = Scale::new(0.0, 1.0, plot_y().0, plot_y().1);
    let title = match feature_id {
        Some(f) => format!("ROC: failure predicted by feature {f}"),
        None => "ROC curve".to_string(),
    };
    let mut c = Canvas::new(&title);
    c.axes(Some(&xs), &ys, "false positive rate", "true positive rate", &unit_ticks());
    c.dashed(xs.at(0.0), ys.at(0.0), xs.at(1.0), ys.at(1.0), COLOR_BASE);
    let pts: Vec<(f64, f64)> = points.iter().map(|p| (xs.at(p.fpr), ys.at(p.tpr))).collect();
    c.polyline(&pts, COLOR_HIT, "roc");
    if let Some(a) = auc {
        c.text(xs.at(0.95), ys.at(0.05), &format!("AUC = {a:.3}"), 14.0, "end", COLOR_AXIS);
    }
    c.finish()
}

/// Per-seed stratum failure rate and accuracy; a star marks seeds whose top
/// feature is `star_feature`.
pub fn multi_seed(summaries: &[SeedSummary], star_feature: Option<usize>) -> String {
    let ys = Scale::new(0.0, 1.0, plot_y().0, plot_y().1);
    let band = (plot_x().1 - plot_x().0) / summaries.len().max(1) as f64;
    let mut c = Canvas::new("Multi-seed robustness");
    c.axes(None, &ys, "seed (top feature)", "rate", &unit_ticks());
    for (i, s) in summaries.iter().enumerate() {
        let x = plot_x().0 + band * i as f64 + band * 0.2;
        let w = band * 0.6;
        let top = ys.at(s.keys_fail_rate);
        c.rect(x, top, w, ys.at(0.0) - top, COLOR_HIT, "bar");
        c.text(x + w / 2.0, top - 6.0, &format!("{:.1}%", s.keys_fail_rate * 100.0), 12.0, "middle", COLOR_AXIS);
        c.circle(x + w / 2.0, ys.at(s.accuracy), 5.0, COLOR_ACCENT, "accuracy");
        c.text(
            x + w / 2.0,
            plot_y().0 + 20.0,
            &format!("{} ({})", s.seed, s.top_feature_id),
            12.0,
            "middle",
            COLOR_AXIS,
        );
        if star_feature == Some(s.top_feature_id) {
            c.star(x + w / 2.0, plot_y().0 + 40.0, 8.0);
        }
    }
    c.rect(WIDTH - 300.0, 50.0, 12.0, 12.0, COLOR_HIT, "legend");
    c.text(WIDTH - 282.0, 60.0, "stratum failure rate", 12.0, "start", COLOR_AXIS);
    c.circle(WIDTH - 124.0, 56.0, 5.0, COLOR_ACCENT, "legend");
    c.text(WIDTH - 114.0, 60.0, "accuracy", 12.0, "start", COLOR_AXIS);
    c.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::roc_curve;

    #[test]
    fn perfect_roc_polyline() {
        let labels = [true, false, true, false];
        let pts = roc_curve(&[1.0, 0.0, 1.0, 0.0], &labels).unwrap();
        let svg = roc(&pts, Some(1.0), None);
        let xs = Scale::new(0.0, 1.0, plot_x().0, plot_x().1);
        let ys = Scale::new(0.0, 1.0, plot_y().0, plot_y().1);
        let expect = format!(
            "points=\"{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}\"",
            xs.at(0.0),
            ys.at(0.0),
            xs.at(0.0),
            ys.at(1.0),
            xs.at(1.0),
            ys.at(1.0)
        );
        assert!(svg.contains(&expect), "{svg}");
    }

    #[test]
    fn bar_labels_show_counts() {
        let rows = vec![
            StratumRate {
                value: "the keys".into(),
                n_fail: 42,
                n_total: 45,
                rate: 42.0 / 45.0,
            },
            StratumRate {
                value: "a drink".into(),
                n_fail: 3,
                n_total: 37,
                rate: 3.0 / 37.0,
            },
        ];
        let svg = failure_rate_bars("object", &rows, Some("the keys"));
        assert!(svg.contains(">42/45<"));
        assert!(svg.contains(">3/37<"));
        assert_eq!(svg.matches(COLOR_HIT).count(), 1);
    }

    #[test]
    fn volcano_cap() {
        assert_eq!(volcano_y(1e-300), VOLCANO_Y_CAP);
        assert_eq!(volcano_y(1.0), 0.0);
        assert!((volcano_y(0.01) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn text_is_escaped() {
        assert_eq!(esc("a<b & \"c\""), "a&lt;b &amp; &quot;c&quot;");
    }

    #[test]
    fn ticks_are_round() {
        assert_eq!(nice_ticks(0.0, 10.0), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!(nice_ticks(-3.0, 3.0), vec![-2.0, 0.0, 2.0]);
    }
}
