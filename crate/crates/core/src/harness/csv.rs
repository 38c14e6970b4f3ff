//! CSV emission with a fixed header and shortest round-trip number text.

use std::path::Path;

use crate::error::{Error, Result};

use super::record::RunRecord;

fn csv_error(path: &Path, e: ::csv::Error) -> Error {
    let kind = std::io::ErrorKind::Other;
    match e.into_kind() {
        ::csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::new(kind, format!("{other:?}"))),
    }
}

pub fn write_csv<W: std::io::Write>(rec: &RunRecord, out: W, path: &Path) -> Result<()> {
    let mut w = ::csv::Writer::from_writer(out);
    w.write_record(&rec.columns).map_err(|e| csv_error(path, e))?;
    for i in 0..rec.len() {
        w.serialize(rec.row(i)).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn emit_csv(rec: &RunRecord, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(rec, std::io::BufWriter::new(file), path)
}
