//! JSONL record files: parsing, canonical serialization and streaming.
//!
//! The canonical form of a record is the compact JSON written by
//! [`serialize_record`]: fields in declaration order, floats in shortest
//! round-trip notation, non-finite floats as strings. Parsing a canonical
//! line and serializing it again reproduces the same bytes.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::error::Category;
use uqbench_core::record::StepLocation;
use uqbench_core::{GenerationRecord, RecordError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("{at}: alternatives carry total probability {mass}, expected 1")]
    Normalization { at: StepLocation, mass: f64 },
}

impl From<RecordError> for ParseError {
    fn from(err: RecordError) -> Self {
        match err {
            RecordError::Normalization { at, mass } => ParseError::Normalization { at, mass },
            other => ParseError::SchemaViolation(other.to_string()),
        }
    }
}

/// Parses and validates one record line.
pub fn parse_record(line: &str) -> Result<GenerationRecord, ParseError> {
    let record: GenerationRecord = serde_json::from_str(line).map_err(|e| match e.classify() {
        Category::Data => ParseError::SchemaViolation(e.to_string()),
        _ => ParseError::MalformedJson(e.to_string()),
    })?;
    record.validate()?;
    Ok(record)
}

/// Canonical single-line JSON for a record, without a trailing newline.
pub fn serialize_record(record: &GenerationRecord) -> String {
    serde_json::to_string(record).expect("records always serialize")
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("line {line}: {source}")]
    Parse { line: usize, source: ParseError },
    #[error("line {line}: {source}")]
    Io { line: usize, source: io::Error },
}

impl DatasetError {
    pub fn line(&self) -> usize {
        match self {
            DatasetError::Parse { line, .. } | DatasetError::Io { line, .. } => *line,
        }
    }
}

/// Iterator over the records of a JSONL file. Blank lines are skipped;
/// line numbers are 1-based.
pub struct DatasetStream<R> {
    reader: R,
    buf: String,
    line: usize,
    done: bool,
}

impl<R: BufRead> DatasetStream<R> {
    pub fn new(reader: R) -> Self {
        Self { reader, buf: String::new(), line: 0, done: false }
    }
}

impl<R: BufRead> Iterator for DatasetStream<R> {
    type Item = Result<GenerationRecord, DatasetError>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            self.buf.clear();
            self.line += 1;
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => self.done = true,
                Ok(_) => {
                    let text = self.buf.trim();
                    if text.is_empty() {
                        continue;
                    }
                    let line = self.line;
                    return Some(parse_record(text).map_err(|source| DatasetError::Parse { line, source }));
                }
                Err(source) => {
                    self.done = true;
                    return Some(Err(DatasetError::Io { line: self.line, source }));
                }
            }
        }
        None
    }
}

/// Streams records from `path` in file order.
pub fn stream_dataset(path: impl AsRef<Path>) -> io::Result<DatasetStream<BufReader<File>>> {
    Ok(DatasetStream::new(BufReader::new(File::open(path)?)))
}

/// A file that appears at its destination only once [`commit`](Self::commit)
/// succeeds; dropping it uncommitted leaves the destination untouched.
pub struct AtomicFile {
    dest: PathBuf,
    writer: io::BufWriter<tempfile::NamedTempFile>,
}

impl AtomicFile {
    pub fn create(dest: impl Into<PathBuf>) -> io::Result<Self> {
        let dest = dest.into();
        let dir = match dest.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        std::fs::create_dir_all(&dir)?;
        let tmp = tempfile::Builder::new().prefix(".uqbench-").tempfile_in(&dir)?;
        Ok(Self { dest, writer: io::BufWriter::new(tmp) })
    }

    pub fn commit(self) -> io::Result<()> {
        let tmp = self.writer.into_inner().map_err(io::IntoInnerError::into_error)?;
        tmp.as_file().sync_all()?;
        tmp.persist(&self.dest).map_err(|e| e.error)?;
        Ok(())
    }
}

impl Write for AtomicFile {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.writer.write(buf)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.writer.flush()
    }
}

/// Writes `contents` to `dest` via a sibling temporary file and rename.
pub fn write_atomic(dest: impl Into<PathBuf>, contents: &[u8]) -> io::Result<()> {
    let mut file = AtomicFile::create(dest)?;
    file.write_all(contents)?;
    file.commit()
}

/// Pretty JSON followed by a newline, written atomically.
pub fn write_json<T: Serialize>(dest: impl Into<PathBuf>, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    write_atomic(dest, text.as_bytes())
}

/// Writes records as canonical JSONL, atomically.
pub fn write_dataset<'a>(
    dest: impl Into<PathBuf>,
    records: impl IntoIterator<Item = &'a GenerationRecord>,
) -> io::Result<()> {
    let mut file = AtomicFile::create(dest)?;
    for record in records {
        file.write_all(serialize_record(record).as_bytes())?;
        file.write_all(b"\n")?;
    }
    file.commit()
}
