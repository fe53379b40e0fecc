//! Line-delimited JSON records carrying a schema version.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Versioned<R> {
    schema_version: u32,
    #[serde(flatten)]
    record: R,
}

pub fn write_jsonl<R: Serialize>(path: &Path, version: u32, records: &[R]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for record in records {
        serde_json::to_writer(&mut w, &Versioned { schema_version: version, record })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<R: DeserializeOwned>(path: &Path, version: u32) -> Result<Vec<R>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Versioned<R> = serde_json::from_str(&line)
            .map_err(|e| Error::Schema(format!("{}:{}: {e}", path.display(), n + 1)))?;
        if v.schema_version != version {
            return Err(Error::Schema(format!(
                "{}:{}: schema version {} (expected {version})",
                path.display(),
                n + 1,
                v.schema_version
            )));
        }
        out.push(v.record);
    }
    Ok(out)
}
