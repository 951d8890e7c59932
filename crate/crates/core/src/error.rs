use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Stream(#[from] io::Error),
    #[error("pcap format error: {0}")]
    PcapFormat(String),
    #[error("line {line}: {message}")]
    RecordParse { line: usize, message: String },
    #[error("line {line}: invalid record: {message}")]
    RecordValidation { line: usize, message: String },
    #[error(
        "timestamp {ts} arrived after {emitted} was already emitted (beyond the reorder window; use --force-sort)"
    )]
    OutOfOrder { ts: f64, emitted: f64 },
    #[error("record of {size} bytes is smaller than the {min}-byte synthetic header")]
    RecordTooSmall { size: u32, min: u32 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no SCADA communication found: ranked list is empty")]
    NoScadaFound,
    #[error("internal consistency: {0}")]
    Consistency(String),
    #[error("device {0} has no outgoing communication")]
    NoOutgoing(std::net::Ipv4Addr),
    #[error("ground truth is empty")]
    EmptyTruth,
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
