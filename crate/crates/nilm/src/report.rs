//! Loss/accuracy curve plots and the model × appliance comparison table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nilm_core::model::ModelKind;
use nilm_core::train::TrainReport;
use nilm_core::{APPLIANCE_NAMES, NUM_APPLIANCES};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ReportError {
    #[error("inconsistent reports: {0}")]
    InconsistentReports(String),
    #[error("incomplete grid, missing: {}", missing.join(", "))]
    IncompleteGrid { missing: Vec<String> },
    #[error("comparison table: {0}")]
    Table(String),
}

const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];
const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 260.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_T: f64 = 40.0;
const LEGEND_H: f64 = 18.0;

/// One SVG per appliance plus the CSV holding every plotted value.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveFigures {
    /// `(appliance name, svg document)` in appliance order.
    pub svgs: Vec<(String, String)>,
    /// `model,appliance,epoch,test_loss,test_acc`
    pub csv: String,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Padded axis range and tick positions at a 1/2/5 step.
fn axis(values: impl Iterator<Item = f64>) -> (f64, f64, Vec<f64>, usize) {
    let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    let mut span = hi - lo;
    if span <= 0.0 {
        span = hi.abs().max(1.0) * 0.1;
    }
    lo -= 0.05 * span;
    hi += 0.05 * span;
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    let ticks = (first..=last).map(|k| k as f64 * step).collect();
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    (lo, hi, ticks, decimals)
}

struct Panel<'a> {
    title: String,
    series: Vec<(&'a str, Vec<f64>)>,
}

fn draw_panel(svg: &mut String, x0: f64, panel: &Panel<'_>, epochs: usize) {
    let (lo, hi, ticks, decimals) = axis(panel.series.iter().flat_map(|s| s.1.iter().copied()));
    let px = |e: usize| {
        if epochs <= 1 {
            x0 + PANEL_W / 2.0
        } else {
            x0 + PANEL_W * e as f64 / (epochs - 1) as f64
        }
    };
    let py = |v: f64| MARGIN_T + PANEL_H * (1.0 - (v - lo) / (hi - lo));
    let _ = writeln!(svg, r#"<g class="panel"><text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="14">{}</text>"#, x0 + PANEL_W / 2.0, MARGIN_T - 12.0, escape(&panel.title));
    let _ = writeln!(svg, r##"<rect x="{x0:.1}" y="{MARGIN_T:.1}" width="{PANEL_W:.1}" height="{PANEL_H:.1}" fill="none" stroke="#444"/>"##);
    for t in &ticks {
        let y = py(*t);
        let _ = writeln!(svg, r##"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end" font-size="10">{:.*}</text>"##, x0, x0 + PANEL_W, x0 - 4.0, y + 3.0, decimals, t);
    }
    let (_, _, xticks, _) = axis([1.0, epochs as f64].into_iter());
    for t in xticks.iter().filter(|t| t.fract() == 0.0 && **t >= 1.0 && **t <= epochs as f64) {
        let x = px(*t as usize - 1);
        let _ = writeln!(svg, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle" font-size="10">{}</text>"#, MARGIN_T + PANEL_H + 14.0, t);
    }
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11">epoch</text>"#, x0 + PANEL_W / 2.0, MARGIN_T + PANEL_H + 30.0);
    for (k, (name, values)) in panel.series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = values.iter().enumerate().map(|(e, v)| format!("{:.2},{:.2}", px(e), py(*v))).collect();
        let _ = writeln!(svg, r#"<polyline class="series" data-model="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, escape(name), points.join(" "));
        if values.len() == 1 {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(0), py(values[0]));
        }
        let ly = MARGIN_T + PANEL_H + 48.0 + LEGEND_H * k as f64;
        let _ = writeln!(svg, r#"<g class="legend-entry"><rect x="{:.1}" y="{:.1}" width="12" height="12" fill="{color}"/><text x="{:.1}" y="{:.1}" font-size="11">{}</text></g>"#, x0, ly - 10.0, x0 + 18.0, ly, escape(name));
    }
    svg.push_str("</g>\n");
}

fn check_reports(reports: &[TrainReport]) -> Result<usize, ReportError> {
    let first = reports.first().ok_or_else(|| ReportError::InconsistentReports("no reports".into()))?;
    let epochs = first.epochs.len();
    if epochs == 0 {
        return Err(ReportError::InconsistentReports(format!("{} has no epochs", first.model)));
    }
    let mut seen = BTreeMap::new();
    for r in reports {
        if r.epochs.len() != epochs {
            return Err(ReportError::InconsistentReports(format!("{} has {} epochs, {} has {epochs}", r.model, r.epochs.len(), first.model)));
        }
        if seen.insert(r.model.as_str(), ()).is_some() {
            return Err(ReportError::InconsistentReports(format!("{} appears twice", r.model)));
        }
        for e in &r.epochs {
            if e.test_loss_per_appliance.len() != NUM_APPLIANCES || e.test_accuracy_per_appliance.len() != NUM_APPLIANCES {
                return Err(ReportError::InconsistentReports(format!("{} epoch {} lacks per-appliance curves", r.model, e.epoch)));
            }
        }
    }
    Ok(epochs)
}

/// Per-appliance test loss and accuracy curves, one series per report.
pub fn render_curves(reports: &[TrainReport]) -> Result<CurveFigures, ReportError> {
    let epochs = check_reports(reports)?;
    let legend_rows = reports.len() as f64;
    let width = MARGIN_L * 2.0 + PANEL_W * 2.0 + 80.0;
    let height = MARGIN_T + PANEL_H + 56.0 + LEGEND_H * legend_rows;
    let mut svgs = Vec::with_capacity(NUM_APPLIANCES);
    for (i, appliance) in APPLIANCE_NAMES.iter().enumerate() {
        let mut svg = String::new();
        let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#);
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let loss = Panel {
            title: format!("{appliance}: test loss"),
            series: reports.iter().map(|r| (r.model.as_str(), r.epochs.iter().map(|e| e.test_loss_per_appliance[i]).collect())).collect(),
        };
        let acc = Panel {
            title: format!("{appliance}: test accuracy"),
            series: reports.iter().map(|r| (r.model.as_str(), r.epochs.iter().map(|e| e.test_accuracy_per_appliance[i]).collect())).collect(),
        };
        draw_panel(&mut svg, MARGIN_L, &loss, epochs);
        draw_panel(&mut svg, MARGIN_L * 2.0 + PANEL_W + 20.0, &acc, epochs);
        svg.push_str("</svg>\n");
        svgs.push((appliance.to_string(), svg));
    }
    let mut csv = String::from("model,appliance,epoch,test_loss,test_acc\n");
    for r in reports {
        for (i, appliance) in APPLIANCE_NAMES.iter().enumerate() {
            for e in &r.epochs {
                let _ = writeln!(csv, "{},{appliance},{},{},{}", r.model, e.epoch, e.test_loss_per_appliance[i], e.test_accuracy_per_appliance[i]);
            }
        }
    }
    Ok(CurveFigures { svgs, csv })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub kind: ModelKind,
    pub sparse: bool,
    pub appliance: String,
    pub mae: f64,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
}

impl TableRow {
    pub fn model_name(&self) -> String {
        if self.sparse {
            format!("set-{}", self.kind.as_str())
        } else {
            self.kind.as_str().to_string()
        }
    }
}

/// Final per-appliance metrics, ordered by kind, sparse flag and appliance.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<TableRow>,
}

/// Builds the 6 × 4 table from the final metrics of each report.
pub fn render_table(reports: &[TrainReport]) -> Result<ComparisonTable, ReportError> {
    let mut by_cell = BTreeMap::new();
    for r in reports {
        if by_cell.insert((r.spec.kind, r.spec.sparse), r).is_some() {
            return Err(ReportError::InconsistentReports(format!("{} appears twice", r.model)));
        }
    }
    let mut rows = Vec::new();
    let mut missing = Vec::new();
    for kind in ModelKind::ALL {
        for sparse in [false, true] {
            let name = if sparse { format!("set-{}", kind.as_str()) } else { kind.as_str().to_string() };
            let metrics = by_cell.get(&(kind, sparse)).and_then(|r| r.final_metrics.as_ref());
            for (i, appliance) in APPLIANCE_NAMES.iter().enumerate() {
                match metrics.and_then(|m| m.per_appliance.get(i)) {
                    Some(a) => rows.push(TableRow {
                        kind,
                        sparse,
                        appliance: appliance.to_string(),
                        mae: a.mae,
                        precision: a.precision,
                        recall: a.recall,
                        accuracy: a.accuracy,
                    }),
                    None => missing.push(format!("{name}/{appliance}")),
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(ReportError::IncompleteGrid { missing });
    }
    Ok(ComparisonTable { rows })
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    pub fn from_csv(text: &str) -> Result<Self, ReportError> {
        let rows = csv::Reader::from_reader(text.as_bytes())
            .deserialize()
            .collect::<Result<Vec<TableRow>, _>>()
            .map_err(|e| ReportError::Table(e.to_string()))?;
        Ok(ComparisonTable { rows })
    }

    /// Fixed-width text rendering, four decimals.
    pub fn to_text(&self) -> String {
        let mut out = format!("{:<9} {:<16} {:>8} {:>10} {:>8} {:>9}\n", "model", "appliance", "mae", "precision", "recall", "accuracy");
        out.push_str(&"-".repeat(65));
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(out, "{:<9} {:<16} {:>8.4} {:>10.4} {:>8.4} {:>9.4}", r.model_name(), r.appliance, r.mae, r.precision, r.recall, r.accuracy);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round_numbers() {
        let (lo, hi, ticks, decimals) = axis([0.12, 0.97].into_iter());
        assert!(lo < 0.12 && hi > 0.97);
        assert_eq!(decimals, 1);
        assert_eq!(ticks, vec![0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        let (_, _, t, _) = axis([3.0, 3.0].into_iter());
        assert!(!t.is_empty());
    }

    #[test]
    fn escapes_markup() {
        assert_eq!(escape("a<b&\"c\">"), "a&lt;b&amp;&quot;c&quot;&gt;");
    }
}
