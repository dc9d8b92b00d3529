//! Artifact writers: loss curves, metrics, feature tables, embeddings and
//! spectrogram dumps.

use std::fmt::Write as _;
use std::path::Path;

use coughscreen_core::analysis::Embedding;
use coughscreen_core::evaluation::CvReport;
use coughscreen_core::nn::LossHistory;
use coughscreen_core::{MelSpectrogram, SpectroImage};
use serde::Serialize;

pub type ReportResult<T> = Result<T, ReportError>;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Shape(String),
}

fn write(path: &Path, bytes: &[u8]) -> ReportResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|source| ReportError::Io { path: parent.display().to_string(), source })?;
    }
    std::fs::write(path, bytes).map_err(|source| ReportError::Io { path: path.display().to_string(), source })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> ReportResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write(path, &bytes)
}

fn csv_bytes<F: FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<(), csv::Error>>(f: F) -> ReportResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    f(&mut w)?;
    w.into_inner().map_err(|e| ReportError::Shape(e.to_string()))
}

/// `epoch,train_loss,val_loss`; `val_loss` is blank without a validation set.
pub fn loss_csv(history: &LossHistory) -> ReportResult<Vec<u8>> {
    csv_bytes(|w| {
        w.write_record(["epoch", "train_loss", "val_loss"])?;
        for (e, t) in history.train.iter().enumerate() {
            let v = history.validation.get(e).map(|v| v.to_string()).unwrap_or_default();
            w.write_record([(e + 1).to_string(), t.to_string(), v])?;
        }
        Ok(())
    })
}

pub fn write_loss_csv(path: &Path, history: &LossHistory) -> ReportResult<()> {
    write(path, &loss_csv(history)?)
}

/// `id,label,f0..f{d-1}` with full round-trip precision.
pub fn features_csv(ids: &[String], labels: &[String], rows: &[Vec<f64>]) -> ReportResult<Vec<u8>> {
    let d = rows.first().map_or(0, Vec::len);
    csv_bytes(|w| {
        let mut header = vec!["id".to_string(), "label".to_string()];
        header.extend((0..d).map(|j| format!("f{j}")));
        w.write_record(&header)?;
        for ((id, label), row) in ids.iter().zip(labels).zip(rows) {
            let mut rec = vec![id.clone(), label.clone()];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        Ok(())
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureTable {
    pub ids: Vec<String>,
    pub labels: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Reads a table written by [`features_csv`].
pub fn read_features_csv(path: &Path) -> ReportResult<FeatureTable> {
    let mut r = csv::Reader::from_path(path)?;
    let mut table = FeatureTable::default();
    for rec in r.records() {
        let rec = rec?;
        table.ids.push(rec.get(0).unwrap_or_default().to_string());
        table.labels.push(rec.get(1).unwrap_or_default().to_string());
        let row = rec
            .iter()
            .skip(2)
            .map(|v| v.parse::<f64>().map_err(|e| ReportError::Shape(format!("feature value {v:?}: {e}"))))
            .collect::<ReportResult<Vec<_>>>()?;
        table.rows.push(row);
    }
    Ok(table)
}

/// `id,label,x,y`.
pub fn embedding_csv(ids: &[String], labels: &[String], embedding: &Embedding) -> ReportResult<Vec<u8>> {
    csv_bytes(|w| {
        w.write_record(["id", "label", "x", "y"])?;
        for ((id, label), p) in ids.iter().zip(labels).zip(&embedding.points) {
            w.write_record([id.clone(), label.clone(), p[0].to_string(), p[1].to_string()])?;
        }
        Ok(())
    })
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// A plain scatter plot, one color per distinct label in first-seen order.
pub fn embedding_svg(labels: &[String], embedding: &Embedding) -> String {
    const SIZE: f64 = 600.0;
    const PAD: f64 = 30.0;
    let pts = &embedding.points;
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in pts {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    let span = (x1 - x0).max(y1 - y0).max(1e-12);
    let mut order: Vec<&str> = Vec::new();
    for l in labels {
        if !order.contains(&l.as_str()) {
            order.push(l);
        }
    }
    let mut s = String::new();
    let total = SIZE + 2.0 * PAD;
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (p, l) in pts.iter().zip(labels) {
        let k = order.iter().position(|o| o == l).unwrap_or(0);
        let cx = PAD + (p[0] - x0) / span * SIZE;
        let cy = PAD + SIZE - (p[1] - y0) / span * SIZE;
        let _ = writeln!(s, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="3" fill="{}"/>"#, PALETTE[k % PALETTE.len()]);
    }
    for (k, l) in order.iter().enumerate() {
        let y = 16.0 + 16.0 * k as f64;
        let _ = writeln!(s, r#"<text x="8" y="{y}" font-size="12" fill="{}">{l}</text>"#, PALETTE[k % PALETTE.len()]);
    }
    s.push_str("</svg>\n");
    s
}

/// Mel spectrogram as CSV, one row per band, six significant digits.
pub fn spectrogram_csv(spec: &MelSpectrogram) -> String {
    let m = spec.values();
    let mut s = String::new();
    for r in 0..m.rows() {
        let row: Vec<String> = (0..m.cols()).map(|c| format!("{:.5e}", m.get(r, c))).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// 8-bit binary PGM of a spectro-image, row 0 at the top.
pub fn image_pgm(image: &SpectroImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", SpectroImage::WIDTH, SpectroImage::HEIGHT).into_bytes();
    out.extend(image.pixels().iter().map(|p| (p.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

/// One row per fold plus the pooled line.
pub fn cv_summary_csv(report: &CvReport) -> ReportResult<Vec<u8>> {
    csv_bytes(|w| {
        w.write_record(["fold", "accuracy", "macro_f1", "macro_sensitivity", "macro_specificity", "macro_precision"])?;
        let macro_row = |m: &[coughscreen_core::evaluation::Metrics]| {
            let n = m.len().max(1) as f64;
            [
                m.iter().map(|x| x.f1).sum::<f64>() / n,
                m.iter().map(|x| x.sensitivity).sum::<f64>() / n,
                m.iter().map(|x| x.specificity).sum::<f64>() / n,
                m.iter().map(|x| x.precision).sum::<f64>() / n,
            ]
        };
        for f in &report.folds {
            let [f1, se, sp, pr] = macro_row(&f.per_class);
            w.write_record([
                f.fold.to_string(),
                f.accuracy.to_string(),
                f1.to_string(),
                se.to_string(),
                sp.to_string(),
                pr.to_string(),
            ])?;
        }
        let pooled_acc = report.pooled().map_or(0.0, |c| c.accuracy());
        let [f1, se, sp, pr] = macro_row(&report.pooled_metrics);
        w.write_record([
            "pooled".to_string(),
            pooled_acc.to_string(),
            f1.to_string(),
            se.to_string(),
            sp.to_string(),
            pr.to_string(),
        ])?;
        Ok(())
    })
}

/// Writes `metrics.json`, `metrics.csv`, `confusion_mean.csv`,
/// `accuracy_cdf.csv` and per-fold loss curves into `dir`.
pub fn write_cv_report(dir: &Path, report: &CvReport) -> ReportResult<()> {
    write_json(&dir.join("metrics.json"), report)?;
    write(&dir.join("metrics.csv"), &cv_summary_csv(report)?)?;
    let classes = report.folds.first().map(|f| f.confusion.classes.clone()).unwrap_or_default();
    let cm = csv_bytes(|w| {
        let mut header = vec!["truth\\predicted".to_string()];
        header.extend(classes.iter().cloned());
        w.write_record(&header)?;
        for (c, row) in classes.iter().zip(&report.mean_normalized) {
            let mut rec = vec![c.clone()];
            rec.extend(row.iter().map(|v| format!("{v:.4}")));
            w.write_record(&rec)?;
        }
        Ok(())
    })?;
    write(&dir.join("confusion_mean.csv"), &cm)?;
    let cdf = csv_bytes(|w| {
        w.write_record(["accuracy", "cumulative"])?;
        for p in &report.accuracy_cdf {
            w.write_record([p.accuracy.to_string(), p.cumulative.to_string()])?;
        }
        Ok(())
    })?;
    write(&dir.join("accuracy_cdf.csv"), &cdf)?;
    for f in &report.folds {
        if let Some(h) = &f.loss {
            write(&dir.join(format!("loss_fold{}.csv", f.fold)), &loss_csv(h)?)?;
        }
    }
    Ok(())
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> ReportResult<()> {
    write(path, bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_csv_leaves_missing_validation_blank() {
        let h = LossHistory { train: vec![0.5, 0.25], validation: vec![] };
        let text = String::from_utf8(loss_csv(&h).unwrap()).unwrap();
        assert_eq!(text, "epoch,train_loss,val_loss\n1,0.5,\n2,0.25,\n");
    }

    #[test]
    fn pgm_header_and_size() {
        let img = SpectroImage::from_pixels(vec![0.5; SpectroImage::WIDTH * SpectroImage::HEIGHT]).unwrap();
        let pgm = image_pgm(&img);
        let header = b"P5\n320 240\n255\n";
        assert_eq!(&pgm[..header.len()], header);
        assert_eq!(pgm.len(), header.len() + 320 * 240);
        assert_eq!(pgm[header.len()], 128);
    }
}
