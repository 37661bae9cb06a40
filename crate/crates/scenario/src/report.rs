//! Renders run reports as CSV, an aligned text table, and Graphviz flow
//! diffs. All renderings iterate ordered maps, so equal inputs produce
//! byte-identical output.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use supply::{EntityKind, SupplyNetwork};

use crate::runner::{DiffKind, FlowDiff, RunReport};

/// One metrics line, as written to and read back from CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub scenario: String,
    pub method: String,
    #[serde(rename = "C_f")]
    pub c_f: f64,
    #[serde(rename = "C_p")]
    pub c_p: f64,
    #[serde(rename = "E_a")]
    pub e_a: usize,
    #[serde(rename = "F_c")]
    pub f_c: usize,
    #[serde(rename = "C_e")]
    pub c_e: usize,
    pub status: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv output was not utf-8")]
    Encoding,
    #[error("no such method in this report: {0}")]
    UnknownMethod(String),
}

/// Flattens reports into CSV rows, methods in name order per scenario.
pub fn metrics_records(reports: &[RunReport]) -> Vec<MetricsRecord> {
    let mut records = Vec::new();
    for report in reports {
        for (method, row) in &report.rows {
            records.push(MetricsRecord {
                scenario: report.scenario.clone(),
                method: method.clone(),
                c_f: row.c_f,
                c_p: row.c_p,
                e_a: row.e_a,
                f_c: row.f_c,
                c_e: row.c_e,
                status: row.status.clone(),
            });
        }
    }
    records
}

/// CSV with header `scenario,method,C_f,C_p,E_a,F_c,C_e,status`. Floats are
/// written shortest-round-trip, so `parse_csv` recovers them exactly.
pub fn export_csv(reports: &[RunReport]) -> Result<String, ReportError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for record in metrics_records(reports) {
        writer.serialize(record)?;
    }
    let bytes = writer.into_inner().map_err(|_| ReportError::Encoding)?;
    String::from_utf8(bytes).map_err(|_| ReportError::Encoding)
}

pub fn parse_csv(text: &str) -> Result<Vec<MetricsRecord>, ReportError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut records = Vec::new();
    for record in reader.deserialize() {
        records.push(record?);
    }
    Ok(records)
}

/// Space-aligned table of the same rows, costs rounded to cents.
pub fn export_text(reports: &[RunReport]) -> String {
    let records = metrics_records(reports);
    let mut cells: Vec<[String; 8]> = vec![[
        "scenario".into(),
        "method".into(),
        "C_f".into(),
        "C_p".into(),
        "E_a".into(),
        "F_c".into(),
        "C_e".into(),
        "status".into(),
    ]];
    for r in &records {
        cells.push([
            r.scenario.clone(),
            r.method.clone(),
            format!("{:.2}", r.c_f),
            format!("{:.2}", r.c_p),
            r.e_a.to_string(),
            r.f_c.to_string(),
            r.c_e.to_string(),
            r.status.clone(),
        ]);
    }
    let mut widths = [0usize; 8];
    for row in &cells {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    for row in &cells {
        let mut line = String::new();
        for (i, (cell, width)) in row.iter().zip(widths).enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            // numeric columns right-aligned, text columns left-aligned
            if (2..=6).contains(&i) {
                line.push_str(&format!("{cell:>width$}"));
            } else {
                line.push_str(&format!("{cell:<width$}"));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

fn diff_style(kind: DiffKind) -> &'static str {
    match kind {
        DiffKind::Unchanged => "color=gray70, fontcolor=gray70",
        DiffKind::Changed => "color=orange, fontcolor=orange, penwidth=2.0",
        DiffKind::Added => "color=green3, fontcolor=green3, penwidth=2.0, style=bold",
        DiffKind::Removed => "color=red, fontcolor=red, style=dashed",
    }
}

fn diff_label(diff: &crate::runner::EdgeDiff) -> String {
    let mut products: Vec<_> = diff.before.keys().collect();
    for p in diff.after.keys() {
        if !diff.before.contains_key(p) {
            products.push(p);
        }
    }
    products.sort();
    let mut parts = Vec::new();
    for product in products {
        let before = diff.before.get(product).copied().unwrap_or(0.0);
        let after = diff.after.get(product).copied().unwrap_or(0.0);
        if before.abs() < 1e-9 && after.abs() < 1e-9 {
            continue;
        }
        if (before - after).abs() < 1e-9 {
            parts.push(format!("{product} {before:.1}"));
        } else {
            parts.push(format!("{product} {before:.1}→{after:.1}"));
        }
    }
    parts.join("\\n")
}

/// Graphviz rendering of one method's flow diff: gray lanes are untouched,
/// orange changed amounts, green were newly opened, red went out of service.
pub fn export_flow_diff(net: &SupplyNetwork, diff: &FlowDiff) -> String {
    let mut out = String::new();
    out.push_str("digraph flows {\n");
    out.push_str("  rankdir=LR;\n");
    out.push_str(
        "  node [shape=box, style=\"rounded,filled\", fillcolor=white, fontname=\"Helvetica\"];\n",
    );
    out.push_str("  edge [fontname=\"Helvetica\", fontsize=10];\n");

    let mut tiers: BTreeMap<&'static str, Vec<String>> = BTreeMap::new();
    for (id, vertex) in &net.vertices {
        let tier = match vertex.kind {
            EntityKind::TierSupplier => "suppliers",
            EntityKind::Oem => "plants",
            EntityKind::Distributor => "distributors",
            EntityKind::Customer => "customers",
        };
        tiers.entry(tier).or_default().push(id.to_string());
        if vertex.disabled {
            out.push_str(&format!(
                "  \"{id}\" [color=red, fontcolor=red, style=\"rounded,dashed\"];\n"
            ));
        }
    }
    for tier in ["suppliers", "plants", "distributors", "customers"] {
        if let Some(ids) = tiers.get(tier) {
            out.push_str("  { rank=same;");
            for id in ids {
                out.push_str(&format!(" \"{id}\";"));
            }
            out.push_str(" }\n");
        }
    }

    for (key, edge_diff) in diff {
        let label = diff_label(edge_diff);
        out.push_str(&format!(
            "  \"{}\" -> \"{}\" [label=\"{}\", {}];\n",
            key.0,
            key.1,
            label,
            diff_style(edge_diff.kind)
        ));
    }
    out.push_str("}\n");
    out
}

/// Convenience wrapper: renders the diff a report holds for `method`.
pub fn method_flow_diff(report: &RunReport, method: &str) -> Result<String, ReportError> {
    let diff = report
        .diffs
        .get(method)
        .ok_or_else(|| ReportError::UnknownMethod(method.to_string()))?;
    Ok(export_flow_diff(&report.disrupted, diff))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::{builtin_event, run_scenario, ScenarioConfig};

    fn t4_report() -> RunReport {
        let cfg = ScenarioConfig::new("t4", builtin_event("t4").unwrap());
        run_scenario(&cfg).unwrap()
    }

    #[test]
    fn csv_round_trips_exactly() {
        let report = t4_report();
        let csv = export_csv(std::slice::from_ref(&report)).unwrap();
        let parsed = parse_csv(&csv).unwrap();
        assert_eq!(parsed, metrics_records(std::slice::from_ref(&report)));
        let again = {
            let mut writer = csv::Writer::from_writer(Vec::new());
            for r in &parsed {
                writer.serialize(r).unwrap();
            }
            String::from_utf8(writer.into_inner().unwrap()).unwrap()
        };
        assert_eq!(csv, again);
    }

    #[test]
    fn csv_has_the_advertised_header() {
        let report = t4_report();
        let csv = export_csv(std::slice::from_ref(&report)).unwrap();
        assert!(csv.starts_with("scenario,method,C_f,C_p,E_a,F_c,C_e,status\n"));
    }

    #[test]
    fn text_table_lines_share_the_header_alignment() {
        let report = t4_report();
        let text = export_text(std::slice::from_ref(&report));
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + report.rows.len());
        let header_method = lines[0].find("method").unwrap();
        for line in &lines[1..] {
            assert!(line.len() > header_method);
        }
    }

    #[test]
    fn dot_styles_follow_the_annotations() {
        let report = t4_report();
        let dot = method_flow_diff(&report, "distributed").unwrap();
        assert!(dot.starts_with("digraph flows {"));
        assert!(dot.contains("rankdir=LR"));
        // the lost supplier is drawn out of service
        assert!(dot.contains("\"T4\" [color=red"));
        // its baseline lane went out of service too
        assert!(dot.contains("\"T4\" -> \"O1\" [label=\"seasoning"));
        let t4_line = dot
            .lines()
            .find(|l| l.contains("\"T4\" -> \"O1\""))
            .unwrap();
        assert!(t4_line.contains("style=dashed"));
        // the stand-in lane is drawn as newly opened
        let t5_line = dot
            .lines()
            .find(|l| l.contains("\"T5\" -> \"O1\""))
            .unwrap();
        assert!(t5_line.contains("style=bold"), "{t5_line}");
    }

    #[test]
    fn unknown_method_is_reported() {
        let report = t4_report();
        assert!(matches!(
            method_flow_diff(&report, "nope"),
            Err(ReportError::UnknownMethod(_))
        ));
    }
}
