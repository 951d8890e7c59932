//! Canonical JSON-lines packet format.
//!
//! One object per line:
//! `{"ts":12.5,"src_ip":"10.0.0.1","src_port":20000,"dst_ip":"10.0.0.2","dst_port":51382,"proto":"tcp","size":74}`

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::Ipv4Addr;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PacketRecord, Transport};
use crate::error::{Error, Result};

#[derive(Serialize)]
struct LineOut {
    ts: f64,
    src_ip: Ipv4Addr,
    src_port: u16,
    dst_ip: Ipv4Addr,
    dst_port: u16,
    proto: Transport,
    size: u32,
}

// ports and size are parsed wide so range errors become validation errors
#[derive(Deserialize)]
struct LineIn {
    ts: f64,
    src_ip: Ipv4Addr,
    src_port: i64,
    dst_ip: Ipv4Addr,
    dst_port: i64,
    proto: Transport,
    size: i64,
}

pub fn parse_record_line(line: &str, line_no: usize) -> Result<PacketRecord> {
    let raw: LineIn = serde_json::from_str(line).map_err(|e| Error::RecordParse {
        line: line_no,
        message: e.to_string(),
    })?;
    let invalid = |message: String| Error::RecordValidation {
        line: line_no,
        message,
    };
    let port = |p: i64, name: &str| {
        u16::try_from(p).map_err(|_| invalid(format!("{name} {p} outside 0-65535")))
    };
    let src_port = port(raw.src_port, "src_port")?;
    let dst_port = port(raw.dst_port, "dst_port")?;
    let size = u32::try_from(raw.size).map_err(|_| invalid(format!("size {} out of range", raw.size)))?;
    let rec = PacketRecord {
        timestamp: raw.ts,
        src_ip: raw.src_ip,
        src_port,
        dst_ip: raw.dst_ip,
        dst_port,
        transport: raw.proto,
        size,
    };
    rec.validate().map_err(invalid)?;
    Ok(rec)
}

pub fn format_record_line(rec: &PacketRecord) -> String {
    serde_json::to_string(&LineOut {
        ts: rec.timestamp,
        src_ip: rec.src_ip,
        src_port: rec.src_port,
        dst_ip: rec.dst_ip,
        dst_port: rec.dst_port,
        proto: rec.transport,
        size: rec.size,
    })
    .expect("record serialization is infallible")
}

pub struct RecordReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> RecordReader<R> {
    pub fn new(input: R) -> Self {
        RecordReader {
            lines: input.lines(),
            line_no: 0,
        }
    }
}

impl<R: BufRead> Iterator for RecordReader<R> {
    type Item = Result<PacketRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(parse_record_line(&line, self.line_no));
        }
    }
}

pub fn read_records(path: impl AsRef<Path>) -> Result<RecordReader<BufReader<File>>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(RecordReader::new(BufReader::with_capacity(256 * 1024, file)))
}

pub fn write_records_to<'a, I, W>(records: I, out: &mut W) -> Result<u64>
where
    I: IntoIterator<Item = &'a PacketRecord>,
    W: Write,
{
    let mut n = 0;
    for rec in records {
        out.write_all(format_record_line(rec).as_bytes())?;
        out.write_all(b"\n")?;
        n += 1;
    }
    Ok(n)
}

pub fn write_records<'a, I>(records: I, path: impl AsRef<Path>) -> Result<u64>
where
    I: IntoIterator<Item = &'a PacketRecord>,
{
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let n = write_records_to(records, &mut out)?;
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(n)
}
