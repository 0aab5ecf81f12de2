//! Results table: `Set | Loss | Accuracy | Precision | Recall | AUC`, with
//! accuracy as a two-decimal percentage and everything else to four
//! decimals.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::line_of;
use crate::error::{Error, Result};
use crate::metrics::{Averaging, MetricsReport};

const COLUMNS: [&str; 6] = ["Set", "Loss", "Accuracy", "Precision", "Recall", "AUC"];

/// Published InceptionResNetV2 results on the 20% bone-marrow subset, used
/// to check table formatting.
pub fn reference_results() -> [MetricsReport; 2] {
    let row = |set_name: &str, loss, accuracy, precision, recall, auc| MetricsReport {
        set_name: set_name.to_string(),
        loss,
        accuracy,
        precision,
        recall,
        auc,
        averaging: Averaging::Macro,
    };
    [
        row("Training", 5.7916, 0.9639, 0.6214, 0.6171, 0.8472),
        row("Validation", 7.2734, 0.9619, 0.6, 0.5968, 0.8297),
    ]
}

fn cells(r: &MetricsReport) -> [String; 6] {
    [
        r.set_name.clone(),
        format!("{:.4}", r.loss),
        format!("{:.2}%", r.accuracy * 100.0),
        format!("{:.4}", r.precision),
        format!("{:.4}", r.recall),
        format!("{:.4}", r.auc),
    ]
}

pub fn render_report(reports: &[MetricsReport]) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::invalid("no reports to render"));
    }
    if let Some(r) = reports.iter().find(|r| r.set_name.contains('|') || r.set_name.contains('\n')) {
        return Err(Error::invalid(format!("set name `{}` cannot be rendered", r.set_name)));
    }
    let rows: Vec<[String; 6]> = reports.iter().map(cells).collect();
    let mut widths = COLUMNS.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &[&str]| {
        cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join(" | ")
            .trim_end()
            .to_string()
    };
    let mut out = line(&COLUMNS);
    out.push('\n');
    out.push_str(&widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("-+-"));
    out.push('\n');
    for row in &rows {
        let refs: Vec<&str> = row.iter().map(String::as_str).collect();
        out.push_str(&line(&refs));
        out.push('\n');
    }
    Ok(out)
}

/// One parsed table row. Values carry only the printed precision.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub set_name: String,
    pub loss: f64,
    /// Accuracy in percent, as printed.
    pub accuracy_percent: f64,
    pub precision: f64,
    pub recall: f64,
    pub auc: f64,
}

pub fn parse_report_table(text: &str) -> Result<Vec<TableRow>> {
    let err = |line: usize, message: String| Error::Parse {
        source_name: "report table".into(),
        line: Some(line),
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let header: Vec<String> = match lines.next() {
        Some((_, l)) => l.split('|').map(|c| c.trim().to_string()).collect(),
        None => return Err(err(1, "empty table".into())),
    };
    if header != COLUMNS {
        return Err(err(1, format!("unexpected header {header:?}")));
    }
    match lines.next() {
        Some((_, l)) if l.chars().all(|c| c == '-' || c == '+') => {}
        _ => return Err(err(2, "missing separator line".into())),
    }
    let mut rows = Vec::new();
    for (i, l) in lines {
        let cells: Vec<&str> = l.split('|').map(str::trim).collect();
        if cells.len() != 6 {
            return Err(err(i + 1, format!("expected 6 cells, found {}", cells.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(i + 1, format!("bad number `{s}`")));
        let pct = cells[2]
            .strip_suffix('%')
            .ok_or_else(|| err(i + 1, "accuracy lacks `%`".into()))?;
        rows.push(TableRow {
            set_name: cells[0].to_string(),
            loss: num(cells[1])?,
            accuracy_percent: num(pct)?,
            precision: num(cells[3])?,
            recall: num(cells[4])?,
            auc: num(cells[5])?,
        });
    }
    Ok(rows)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportFile {
    report: Vec<MetricsReport>,
}

pub fn render_report_struct(reports: &[MetricsReport]) -> String {
    toml::to_string(&ReportFile { report: reports.to_vec() }).expect("reports serialize")
}

pub fn parse_report_struct(text: &str, source_name: &str) -> Result<Vec<MetricsReport>> {
    let file: ReportFile = toml::from_str(text).map_err(|e| Error::Parse {
        source_name: source_name.to_string(),
        line: line_of(text, e.span().map(|s| s.start)),
        message: e.message().to_string(),
    })?;
    Ok(file.report)
}

/// Writes `report.txt` and `report.struct` into `run_dir`.
pub fn write_reports(run_dir: &Path, reports: &[MetricsReport]) -> Result<()> {
    let rd = super::RunDir::new(run_dir);
    let table = render_report(reports)?;
    std::fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    std::fs::write(rd.report_text(), table).map_err(|e| Error::io(rd.report_text(), e))?;
    std::fs::write(rd.report_struct(), render_report_struct(reports)).map_err(|e| Error::io(rd.report_struct(), e))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::metrics::accuracy_gap;

    #[test]
    fn reference_rows_render() {
        let table = render_report(&reference_results()).unwrap();
        let val = table.lines().find(|l| l.starts_with("Validation")).unwrap();
        assert!(val.contains("96.19%"), "{val}");
        let cells: Vec<&str> = val.split('|').map(str::trim).collect();
        assert_eq!(cells, ["Validation", "7.2734", "96.19%", "0.6000", "0.5968", "0.8297"]);
        let [train, val] = reference_results();
        assert!((accuracy_gap(&train, &val) - 0.002).abs() < 1e-12);
    }

    #[test]
    fn perfect_row() {
        let r = MetricsReport {
            set_name: "Training".into(),
            loss: 0.0,
            accuracy: 1.0,
            precision: 1.0,
            recall: 1.0,
            auc: 1.0,
            averaging: Averaging::Macro,
        };
        let table = render_report(&[r]).unwrap();
        let row = table.lines().nth(2).unwrap();
        assert!(row.contains("100.00%"));
        assert_eq!(row.matches("1.0000").count(), 3);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(render_report(&[]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn struct_round_trip() {
        let reports = reference_results();
        let back = parse_report_struct(&render_report_struct(&reports), "r").unwrap();
        assert_eq!(back, reports);
    }

    fn report_strategy() -> impl Strategy<Value = MetricsReport> {
        ("[A-Za-z][A-Za-z ]{0,12}", 0.0f64..20.0, 0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0).prop_map(
            |(set_name, loss, accuracy, precision, recall, auc)| MetricsReport {
                set_name: set_name.trim().to_string(),
                loss,
                accuracy,
                precision,
                recall,
                auc,
                averaging: Averaging::Macro,
            },
        )
    }

    proptest! {
        #[test]
        fn table_round_trips_at_printed_precision(reports in prop::collection::vec(report_strategy(), 1..5)) {
            let table = render_report(&reports).unwrap();
            prop_assert_eq!(&render_report(&reports).unwrap(), &table);
            let rows = parse_report_table(&table).unwrap();
            prop_assert_eq!(rows.len(), reports.len());
            for (row, r) in rows.iter().zip(&reports) {
                let c = cells(r);
                prop_assert_eq!(&row.set_name, &c[0]);
                prop_assert_eq!(format!("{:.4}", row.loss), c[1].clone());
                prop_assert_eq!(format!("{:.2}%", row.accuracy_percent), c[2].clone());
                prop_assert_eq!(format!("{:.4}", row.precision), c[3].clone());
                prop_assert_eq!(format!("{:.4}", row.recall), c[4].clone());
                prop_assert_eq!(format!("{:.4}", row.auc), c[5].clone());
                prop_assert!((row.loss - r.loss).abs() <= 5e-5 + 1e-12);
            }
        }
    }
}
