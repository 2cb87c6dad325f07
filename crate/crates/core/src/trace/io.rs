use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use super::{GenerationSet, Result, ScoredGeneration, TraceError};

/// Version tag carried by every trace and scored line.
pub const SCHEMA_VERSION: &str = "1";

#[derive(Serialize)]
struct Versioned<'a, T> {
    schema_version: &'static str,
    #[serde(flatten)]
    record: &'a T,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TraceError + '_ {
    move |source| TraceError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn to_line<T: Serialize>(record: &T) -> String {
    serde_json::to_string(&Versioned {
        schema_version: SCHEMA_VERSION,
        record,
    })
    .expect("record types serialize infallibly")
}

fn write_with<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<&File>) -> std::io::Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        fill(&mut w).and_then(|_| w.flush()).map_err(io_err(path))?;
    }
    tmp.persist(path).map_err(|e| io_err(path)(e.error))?;
    Ok(())
}

/// Writes `lines` to `path` through a sibling temp file and an atomic rename.
pub fn write_lines_atomic<I, S>(path: &Path, lines: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    write_with(path, |w| {
        for line in lines {
            w.write_all(line.as_ref().as_bytes())?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}

/// Atomic counterpart of [`std::fs::write`].
pub fn write_bytes_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    write_with(path, |w| w.write_all(bytes))
}

pub fn write_traces(sets: &[GenerationSet], path: &Path) -> Result<()> {
    write_lines_atomic(path, sets.iter().map(to_line))
}

/// Appends one trace line and flushes it, so an interrupted run keeps every
/// completed prompt.
pub fn append_trace<W: Write>(writer: &mut W, set: &GenerationSet) -> std::io::Result<()> {
    writeln!(writer, "{}", to_line(set))?;
    writer.flush()
}

pub fn write_scored(scored: &[ScoredGeneration], path: &Path) -> Result<()> {
    write_lines_atomic(path, scored.iter().map(to_line))
}

fn read_versioned<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = File::open(path).map_err(io_err(path))?;
    let name = path.display().to_string();
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| TraceError::Malformed {
            path: name.clone(),
            line: line_no,
            message,
        };
        let mut value: Value = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| malformed("expected a JSON object".into()))?;
        match obj.remove("schema_version") {
            Some(Value::String(v)) if v == SCHEMA_VERSION => {}
            other => {
                let found = match other {
                    Some(Value::String(v)) => v,
                    Some(v) => v.to_string(),
                    None => "<missing>".into(),
                };
                return Err(TraceError::SchemaVersion {
                    path: name,
                    line: line_no,
                    found,
                    expected: SCHEMA_VERSION,
                });
            }
        }
        let record = serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?;
        out.push((line_no, record));
    }
    Ok(out)
}

pub fn read_traces(path: &Path) -> Result<Vec<GenerationSet>> {
    let name = path.display().to_string();
    read_versioned::<GenerationSet>(path)?
        .into_iter()
        .map(|(line, set)| {
            set.validate().map_err(|e| TraceError::Malformed {
                path: name.clone(),
                line,
                message: e.to_string(),
            })?;
            Ok(set)
        })
        .collect()
}

pub fn read_scored(path: &Path) -> Result<Vec<ScoredGeneration>> {
    let name = path.display().to_string();
    read_versioned::<ScoredGeneration>(path)?
        .into_iter()
        .map(|(line, s)| {
            s.validate().map_err(|e| TraceError::Malformed {
                path: name.clone(),
                line,
                message: e.to_string(),
            })?;
            Ok(s)
        })
        .collect()
}
