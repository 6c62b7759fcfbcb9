//! CSV and JSON writers shared by the commands.
//!
//! CSV follows RFC 4180: CRLF line endings, fields quoted only when needed.
//! Undefined values are written as empty fields.

use std::fs::File;
use std::path::Path;

use serde::Serialize;
use shiftlens_core::metrics::{Metric, MetricRecord};

use crate::error::{CliError, Result};

pub struct CsvTable {
    path: String,
    writer: csv::Writer<File>,
}

impl CsvTable {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(file);
        Ok(Self {
            path: path.display().to_string(),
            writer,
        })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).map_err(|source| CliError::Csv {
            path: self.path.clone(),
            source,
        })
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|e| CliError::Io {
            path: self.path.clone(),
            source: e,
        })
    }
}

pub fn num(v: f64) -> String {
    v.to_string()
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn write_records_csv(path: &Path, records: &[MetricRecord]) -> Result<()> {
    let mut t = CsvTable::create(path)?;
    let header = ["image_key", "augmentation"]
        .into_iter()
        .chain(Metric::ALL.iter().map(|m| m.name()));
    t.row(header)?;
    for r in records {
        let fields = [r.image_key.clone(), r.augmentation.name().to_string()]
            .into_iter()
            .chain(Metric::ALL.iter().map(|&m| opt_num(r.get(m))));
        t.row(fields)?;
    }
    t.finish()
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.display().to_string(),
        source,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use shiftlens_core::augment::AugmentationId;

    #[test]
    fn records_csv_quotes_and_blanks() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let mut r = MetricRecord::empty("a,\"b\"", AugmentationId::HorizontalFlip);
        r.patch_sim = Some(0.5);
        write_records_csv(&path, &[r]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "image_key,augmentation,cosine_sim,l2_dist,attn_sim,patch_sim,edge_sim,detail_sim\r\n\
             \"a,\"\"b\"\"\",HorizontalFlip,,,,0.5,,\r\n"
        );
    }
}
