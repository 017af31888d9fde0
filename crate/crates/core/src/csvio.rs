//! CSV tables with `#`-prefixed provenance lines ahead of the header.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

/// `# section.key = value` lines for every field of a serializable config,
/// keys sorted.
pub fn config_comments<S: Serialize>(section: &str, cfg: &S) -> Vec<String> {
    let value = serde_json::to_value(cfg).unwrap_or(serde_json::Value::Null);
    match value {
        serde_json::Value::Object(map) => map
            .iter()
            .map(|(k, v)| format!("{section}.{k} = {v}"))
            .collect(),
        other => vec![format!("{section} = {other}")],
    }
}

/// Writer for a CSV table whose rows may arrive over time.
pub struct CsvTable {
    inner: csv::Writer<BufWriter<File>>,
}

impl CsvTable {
    pub fn create(path: &Path, comments: &[String], header: &[&str]) -> Result<Self> {
        let mut file = BufWriter::new(File::create(path)?);
        for c in comments {
            writeln!(file, "# {c}")?;
        }
        let mut inner = csv::Writer::from_writer(file);
        inner.write_record(header)?;
        inner.flush()?;
        Ok(CsvTable { inner })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner.write_record(fields)?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn write_table<R>(path: &Path, comments: &[String], header: &[&str], rows: R) -> Result<()>
where
    R: IntoIterator<Item = Vec<String>>,
{
    let mut t = CsvTable::create(path, comments, header)?;
    for r in rows {
        t.row(r)?;
    }
    Ok(())
}

/// Reads a table written by [`write_table`], skipping comment lines.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    let header = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}
