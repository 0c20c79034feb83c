//! Tag file formats.
//!
//! Binary (little-endian): a 16-byte header of magic `BG2T`, version `u16`,
//! reserved `u16` and duration `u64`, followed by 9-byte records of channel
//! `u8` (0 = A, 1 = B, 2 = C) and timestamp `u64` in picoseconds.
//!
//! Text: CSV with header `channel,timestamp_ps`. The text format has no
//! duration field, so readers take it from the caller or infer
//! `last timestamp + 1`. A leading `# duration_ps=<n>` comment line written
//! by [`write_text`] is honoured when present.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ChannelId, TagRecord, TimeTag, META_CREATION_MODE};

pub const MAGIC: &[u8; 4] = b"BG2T";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;
pub const RECORD_LEN: usize = 9;

pub fn write_binary<W: Write>(record: &TagRecord, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&0u16.to_le_bytes())?;
    out.write_all(&record.duration().to_le_bytes())?;
    for tag in record.tags() {
        out.write_all(&[tag.channel.index() as u8])?;
        out.write_all(&tag.timestamp.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(mut input: R) -> Result<TagRecord> {
    let mut header = [0u8; HEADER_LEN];
    input
        .read_exact(&mut header)
        .map_err(|_| Error::Format("truncated header".into()))?;
    if &header[0..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let duration = u64::from_le_bytes(header[8..16].try_into().unwrap());

    let mut body = Vec::new();
    input.read_to_end(&mut body)?;
    if body.len() % RECORD_LEN != 0 {
        return Err(Error::Format(format!(
            "body length {} is not a multiple of {RECORD_LEN}",
            body.len()
        )));
    }
    let mut tags = Vec::with_capacity(body.len() / RECORD_LEN);
    for chunk in body.chunks_exact(RECORD_LEN) {
        let channel = ChannelId::from_index(chunk[0])
            .ok_or_else(|| Error::Format(format!("bad channel byte {}", chunk[0])))?;
        let timestamp = u64::from_le_bytes(chunk[1..9].try_into().unwrap());
        tags.push(TimeTag::new(channel, timestamp));
    }
    Ok(TagRecord::new(tags, duration)?.with_meta(META_CREATION_MODE, "imported"))
}

pub fn write_text<W: Write>(record: &TagRecord, mut out: W) -> Result<()> {
    writeln!(out, "# duration_ps={}", record.duration())?;
    writeln!(out, "channel,timestamp_ps")?;
    for tag in record.tags() {
        writeln!(out, "{},{}", tag.channel, tag.timestamp)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads the CSV tag format. `duration` overrides any duration comment.
pub fn read_text<R: Read>(input: R, duration: Option<u64>) -> Result<TagRecord> {
    let mut reader = BufReader::new(input);
    let mut commented_duration = None;
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let rest: Box<dyn Read> = if let Some(value) = first.trim().strip_prefix("# duration_ps=") {
        commented_duration = Some(
            value
                .parse::<u64>()
                .map_err(|e| Error::Format(format!("bad duration comment: {e}")))?,
        );
        Box::new(reader)
    } else {
        Box::new(std::io::Cursor::new(first.into_bytes()).chain(reader))
    };

    let mut csv_reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(rest);
    let headers = csv_reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["channel", "timestamp_ps"] {
        return Err(Error::Format(format!("unexpected header {headers:?}")));
    }
    let mut tags = Vec::new();
    for row in csv_reader.records() {
        let row = row?;
        let channel: ChannelId = row[0].parse()?;
        let timestamp = row[1]
            .parse::<u64>()
            .map_err(|e| Error::Format(format!("bad timestamp {:?}: {e}", &row[1])))?;
        tags.push(TimeTag::new(channel, timestamp));
    }
    let duration = duration
        .or(commented_duration)
        .unwrap_or_else(|| tags.iter().map(|t| t.timestamp + 1).max().unwrap_or(0));
    Ok(TagRecord::new(tags, duration)?.with_meta(META_CREATION_MODE, "imported"))
}

fn is_text_path(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("csv") | Some("txt")
    )
}

/// Reads a tag file, choosing the format from the extension (`.csv`/`.txt`
/// are text, anything else binary).
pub fn read_path(path: &Path) -> Result<TagRecord> {
    let file = File::open(path)?;
    if is_text_path(path) {
        read_text(file, None)
    } else {
        read_binary(BufReader::new(file))
    }
}

pub fn write_path(record: &TagRecord, path: &Path) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    if is_text_path(path) {
        write_text(record, file)
    } else {
        write_binary(record, file)
    }
}
