//! Text outputs: metrics CSV, split manifest, confusion matrix and top-k
//! reports.

use std::io::{self, Read, Write};

use deepemo_core::dataset::class_name;
use deepemo_core::train::{ConfusionMatrix, EpochMetrics, TopKReport};
use serde::{Deserialize, Serialize};

pub const METRICS_HEADER: [&str; 4] = ["epoch", "train_acc", "loss", "val_acc"];

fn fixed6(v: f64) -> String {
    format!("{v:.6}")
}

pub fn metrics_writer<W: Write>(out: W) -> csv::Result<csv::Writer<W>> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    w.flush()?;
    Ok(w)
}

/// One row; an absent validation accuracy is an empty field.
pub fn write_metrics_row<W: Write>(w: &mut csv::Writer<W>, m: &EpochMetrics) -> csv::Result<()> {
    let val = m.val_accuracy.map(fixed6).unwrap_or_default();
    w.write_record([
        m.epoch.to_string(),
        fixed6(m.train_accuracy),
        fixed6(m.mean_loss),
        val,
    ])?;
    w.flush()?;
    Ok(())
}

pub fn metrics_csv(metrics: &[EpochMetrics]) -> String {
    let mut w = metrics_writer(Vec::new()).expect("in-memory write");
    for m in metrics {
        write_metrics_row(&mut w, m).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
}

#[derive(Debug, Deserialize)]
struct MetricsRow {
    epoch: usize,
    train_acc: f64,
    loss: f64,
    val_acc: Option<f64>,
}

pub fn parse_metrics<R: Read>(input: R) -> csv::Result<Vec<EpochMetrics>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize::<MetricsRow>()
        .map(|row| {
            let row = row?;
            Ok(EpochMetrics {
                epoch: row.epoch,
                train_accuracy: row.train_acc,
                mean_loss: row.loss,
                val_accuracy: row.val_acc,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub path: String,
    pub label_code: u8,
    pub label_name: String,
    pub actor: u8,
    pub split: String,
}

pub fn write_manifest<W: Write>(out: W, rows: &[ManifestRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record(["path", "label_code", "label_name", "actor", "split"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest<R: Read>(input: R) -> csv::Result<Vec<ManifestRow>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// Header row of class names, then one row per true class.
pub fn confusion_csv(cm: &ConfusionMatrix) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let names = (0..cm.classes()).map(class_name);
    w.write_record(std::iter::once("true\\predicted".to_string()).chain(names))
        .expect("in-memory write");
    for t in 0..cm.classes() {
        let counts = cm.row(t).iter().map(u64::to_string);
        w.write_record(std::iter::once(class_name(t)).chain(counts))
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// `rank,label,probability` lines followed by the spectrogram path.
pub fn write_topk_text<W: Write>(mut out: W, report: &TopKReport) -> io::Result<()> {
    writeln!(out, "input: {}", report.input)?;
    writeln!(out, "rank,label,probability")?;
    for (rank, e) in report.entries.iter().enumerate() {
        writeln!(out, "{},{},{:.6}", rank + 1, e.label, e.probability)?;
    }
    if let Some(path) = &report.spectrogram_path {
        writeln!(out, "spectrogram: {path}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKJsonEntry {
    pub rank: usize,
    pub label: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKJson {
    pub input: String,
    pub entries: Vec<TopKJsonEntry>,
    pub spectrogram: Option<String>,
}

impl From<&TopKReport> for TopKJson {
    fn from(r: &TopKReport) -> Self {
        Self {
            input: r.input.clone(),
            entries: r
                .entries
                .iter()
                .enumerate()
                .map(|(i, e)| TopKJsonEntry {
                    rank: i + 1,
                    label: e.label.clone(),
                    probability: e.probability,
                })
                .collect(),
            spectrogram: r.spectrogram_path.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use deepemo_core::train::TopKEntry;
    use proptest::prelude::*;

    fn m(epoch: usize, train: f64, loss: f64, val: Option<f64>) -> EpochMetrics {
        EpochMetrics {
            epoch,
            train_accuracy: train,
            mean_loss: loss,
            val_accuracy: val,
        }
    }

    #[test]
    fn metrics_layout() {
        let csv = metrics_csv(&[m(1, 0.88, 0.35, Some(0.9)), m(42, 1.0, 0.009, None)]);
        assert_eq!(
            csv,
            "epoch,train_acc,loss,val_acc\n1,0.880000,0.350000,0.900000\n42,1.000000,0.009000,\n"
        );
        assert_eq!(metrics_csv(&[]), "epoch,train_acc,loss,val_acc\n");
    }

    proptest! {
        #[test]
        fn metrics_round_trip(
            rows in proptest::collection::vec((0u32..=1_000_000, 0u32..=9_000_000, proptest::option::of(0u32..=1_000_000)), 0..20)
        ) {
            // Values on the 6-decimal grid survive formatting exactly.
            let metrics: Vec<EpochMetrics> = rows
                .iter()
                .enumerate()
                .map(|(i, &(a, l, val))| m(i + 1, f64::from(a) / 1e6, f64::from(l) / 1e6, val.map(|x| f64::from(x) / 1e6)))
                .collect();
            let text = metrics_csv(&metrics);
            let parsed = parse_metrics(text.as_bytes()).unwrap();
            prop_assert_eq!(&parsed, &metrics);
            prop_assert_eq!(metrics_csv(&parsed), text);
        }
    }

    #[test]
    fn manifest_round_trip_with_awkward_paths() {
        let rows = vec![ManifestRow {
            path: "dir, with comma/03-01-06-01-02-01-12.wav".into(),
            label_code: 6,
            label_name: "fearful".into(),
            actor: 12,
            split: "train".into(),
        }];
        let mut buf = Vec::new();
        write_manifest(&mut buf, &rows).unwrap();
        assert!(buf.starts_with(b"path,label_code,label_name,actor,split\n"));
        assert_eq!(read_manifest(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn confusion_layout() {
        let mut cm = ConfusionMatrix::new(2);
        cm.record(0, 0);
        cm.record(1, 0);
        assert_eq!(
            confusion_csv(&cm),
            "true\\predicted,neutral,calm\nneutral,1,0\ncalm,1,0\n"
        );
    }

    #[test]
    fn topk_text_and_json() {
        let report = TopKReport {
            input: "a.wav".into(),
            entries: vec![
                TopKEntry {
                    class_index: 2,
                    label: "happy".into(),
                    probability: 0.75,
                },
                TopKEntry {
                    class_index: 0,
                    label: "neutral".into(),
                    probability: 0.25,
                },
            ],
            total_probability: 1.0,
            spectrogram_path: Some("a.pgm".into()),
        };
        let mut buf = Vec::new();
        write_topk_text(&mut buf, &report).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "input: a.wav\nrank,label,probability\n1,happy,0.750000\n2,neutral,0.250000\nspectrogram: a.pgm\n");
        let json = serde_json::to_string(&TopKJson::from(&report)).unwrap();
        let back: TopKJson = serde_json::from_str(&json).unwrap();
        assert_eq!(
            back.entries[0],
            TopKJsonEntry {
                rank: 1,
                label: "happy".into(),
                probability: 0.75
            }
        );
    }
}
