//! Table and JSON rendering of split reports, in the x100 one-decimal
//! style used for published result tables.

use strec_core::io::report_to_json;
use strec_core::metrics::SplitReport;

fn cell(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{:.1}", v * 100.0),
        None => "-".to_string(),
    }
}

/// Renders one aligned table with a row per labelled report. Column
/// order matches the published tables: all-images metrics first, then
/// the images-with-targets pair.
pub fn table(rows: &[(String, SplitReport)]) -> String {
    let label_width = rows
        .iter()
        .map(|(l, _)| l.len())
        .chain(std::iter::once("split".len()))
        .max()
        .unwrap_or(5);
    let mut out = String::new();
    out.push_str(&format!(
        "{:<label_width$}  {:>7}  {:>7}  {:>9}  {:>7}  {:>7}\n",
        "split", "mSTIoU", "mIoU+n", "mAP@50+n", "mIoU", "mAP@50"
    ));
    for (label, r) in rows {
        out.push_str(&format!(
            "{:<label_width$}  {:>7}  {:>7}  {:>9}  {:>7}  {:>7}\n",
            label,
            cell(Some(r.m_stiou)),
            cell(Some(r.m_iou_plus_n)),
            cell(Some(r.m_ap50_plus_n)),
            cell(r.m_iou),
            cell(r.m_ap50),
        ));
    }
    out
}

/// JSON for a grouped run: an object mapping group labels to reports,
/// each in the canonical report format.
pub fn grouped_json(rows: &[(String, SplitReport)]) -> String {
    let mut out = String::from("{\n");
    for (i, (label, report)) in rows.iter().enumerate() {
        let body = report_to_json(report);
        let indented: String = body
            .trim_end()
            .lines()
            .enumerate()
            .map(|(ln, line)| {
                if ln == 0 {
                    line.to_string()
                } else {
                    format!("  {line}")
                }
            })
            .collect::<Vec<_>>()
            .join("\n");
        let comma = if i + 1 < rows.len() { "," } else { "" };
        out.push_str(&format!("  \"{label}\": {indented}{comma}\n"));
    }
    out.push_str("}\n");
    out
}
