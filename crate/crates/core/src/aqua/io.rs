use std::path::Path;

use super::{ProxySet, QAExample};
use crate::error::Result;
use crate::io::{read_jsonl, write_jsonl};

pub const SCHEMA_VERSION: u32 = 1;

pub fn write_examples(path: &Path, examples: &[QAExample]) -> Result<()> {
    write_jsonl(path, SCHEMA_VERSION, examples)
}

/// Reads and validates a question file.
pub fn read_examples(path: &Path) -> Result<Vec<QAExample>> {
    let examples: Vec<QAExample> = read_jsonl(path, SCHEMA_VERSION)?;
    for e in &examples {
        e.validate()?;
    }
    Ok(examples)
}

pub fn write_proxy_sets(path: &Path, sets: &[ProxySet]) -> Result<()> {
    write_jsonl(path, SCHEMA_VERSION, sets)
}

pub fn read_proxy_sets(path: &Path) -> Result<Vec<ProxySet>> {
    read_jsonl(path, SCHEMA_VERSION)
}
