//! On-disk formats: dataset CSV pair with JSON sidecar, JSON reports and
//! checkpoints, curve CSVs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nilm_core::model::Network;
use nilm_core::synthesis::{ActivationVector, SplitInfo, SyntheticDataset, WindowParams};
use nilm_core::train::TrainReport;
use nilm_core::NUM_APPLIANCES;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const SIDECAR_FILE: &str = "dataset.json";

#[derive(Debug, thiserror::Error)]
pub enum FileError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{}: {message}", path.display())]
    Invalid { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FileError + '_ {
    move |source| FileError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> FileError + '_ {
    move |source| FileError::Csv { path: path.to_path_buf(), source }
}

/// Everything about a dataset that is not in the two CSV files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub seed: u64,
    pub repetitions: usize,
    pub window: WindowParams,
    pub max_gap_secs: i64,
    pub num_valid: [usize; NUM_APPLIANCES],
    pub split: Option<SplitInfo>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FileError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| FileError::Json { path: path.to_path_buf(), source })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, FileError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| FileError::Json { path: path.to_path_buf(), source })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, FileError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    Ok(csv::WriterBuilder::new().has_headers(false).from_writer(file))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>, FileError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    Ok(csv::ReaderBuilder::new().has_headers(false).from_reader(file))
}

/// Writes `features.csv`, `labels.csv` and `dataset.json` into `dir`.
pub fn write_dataset(dir: &Path, dataset: &SyntheticDataset, sidecar: &DatasetSidecar) -> Result<(), FileError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(FEATURES_FILE);
    let mut w = csv_writer(&path)?;
    for k in 0..dataset.len() {
        w.write_record(dataset.feature_row(k).iter().map(|v| v.to_string())).map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;

    let path = dir.join(LABELS_FILE);
    let mut w = csv_writer(&path)?;
    for label in &dataset.labels {
        w.write_record(label.0.iter().map(|b| b.to_string())).map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;

    write_json(&dir.join(SIDECAR_FILE), sidecar)
}

fn read_rows<T: std::str::FromStr>(path: &Path, width: Option<usize>) -> Result<(usize, Vec<T>), FileError> {
    let invalid = |message: String| FileError::Invalid { path: path.to_path_buf(), message };
    let mut values = Vec::new();
    let mut cols = width;
    let mut rows = 0;
    for (k, record) in csv_reader(path)?.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        let w = *cols.get_or_insert(record.len());
        if record.len() != w {
            return Err(invalid(format!("row {} has {} columns, expected {w}", k + 1, record.len())));
        }
        for field in &record {
            values.push(field.parse().map_err(|_| invalid(format!("row {}: bad value {field:?}", k + 1)))?);
        }
        rows += 1;
    }
    Ok((rows, values))
}

/// Reads a dataset written by [`write_dataset`].
pub fn read_dataset(dir: &Path) -> Result<(SyntheticDataset, DatasetSidecar), FileError> {
    let sidecar: DatasetSidecar = read_json(&dir.join(SIDECAR_FILE))?;
    let path = dir.join(FEATURES_FILE);
    let (rows, features) = read_rows::<f64>(&path, Some(sidecar.window.window_len))?;
    let label_path = dir.join(LABELS_FILE);
    let (label_rows, bits) = read_rows::<u8>(&label_path, Some(NUM_APPLIANCES))?;
    if label_rows != rows {
        return Err(FileError::Invalid { path: label_path, message: format!("{label_rows} label rows for {rows} feature rows") });
    }
    if bits.iter().any(|&b| b > 1) || features.iter().any(|v| !v.is_finite()) {
        return Err(FileError::Invalid { path: dir.to_path_buf(), message: "labels must be 0/1 and features finite".into() });
    }
    let labels = bits.chunks(NUM_APPLIANCES).map(|c| ActivationVector(c.try_into().expect("4 columns"))).collect();
    let dataset = SyntheticDataset { window_len: sidecar.window.window_len, features, labels, seed: sidecar.seed, split: sidecar.split };
    Ok((dataset, sidecar))
}

pub fn write_report(path: &Path, report: &TrainReport) -> Result<(), FileError> {
    write_json(path, report)
}

pub fn read_report(path: &Path) -> Result<TrainReport, FileError> {
    read_json(path)
}

pub fn write_checkpoint(path: &Path, network: &Network) -> Result<(), FileError> {
    write_json(path, network)
}

pub fn read_checkpoint(path: &Path) -> Result<Network, FileError> {
    let net: Network = read_json(path)?;
    net.spec().validate().map_err(|e| FileError::Invalid { path: path.to_path_buf(), message: e.to_string() })?;
    Ok(net)
}

/// `epoch,train_loss,train_acc,test_loss,test_acc`, one line per epoch.
pub fn curves_csv(report: &TrainReport) -> String {
    let mut out = String::from("epoch,train_loss,train_acc,test_loss,test_acc\n");
    for e in &report.epochs {
        out.push_str(&format!("{},{},{},{},{}\n", e.epoch, e.train_loss, e.train_accuracy, e.test_loss, e.test_accuracy));
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<(), FileError> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))
}
