use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::Format;

/// A CSV row type with a fixed, documented header.
pub trait Row: Serialize {
    const HEADER: &'static [&'static str];
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

pub fn write_csv<T: Row>(path: &Path, rows: &[T]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(file));
    w.write_record(T::HEADER)?;
    for r in rows {
        w.serialize(r)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)
        .with_context(|| format!("writing {}", path.display()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Writes `rows` as `<stem>.csv` and/or `<stem>.json`; returns the files written.
pub fn write_table<T: Row>(
    dir: &Path,
    stem: &str,
    rows: &[T],
    formats: &[Format],
) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    if formats.contains(&Format::Csv) {
        let p = dir.join(format!("{stem}.csv"));
        write_csv(&p, rows)?;
        files.push(p);
    }
    if formats.contains(&Format::Json) {
        let p = dir.join(format!("{stem}.json"));
        write_json(&p, rows)?;
        files.push(p);
    }
    Ok(files)
}
