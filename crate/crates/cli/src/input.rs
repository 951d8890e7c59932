//! Opening traces: format sniffing, digests while reading, ordering.

use std::cell::RefCell;
use std::collections::VecDeque;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read};
use std::path::{Path, PathBuf};
use std::rc::Rc;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use scadascope_core::ingest::{self, PcapReader, PcapStats, RecordReader};
use scadascope_core::PacketRecord;

const PCAP_MAGICS: [[u8; 4]; 4] = [
    [0xd4, 0xc3, 0xb2, 0xa1],
    [0xa1, 0xb2, 0xc3, 0xd4],
    [0x4d, 0x3c, 0xb2, 0xa1],
    [0xa1, 0xb2, 0x3c, 0x4d],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Pcap,
    Jsonl,
}

/// What was read from one input file.
#[derive(Debug, Clone, Serialize)]
pub struct InputSummary {
    pub path: PathBuf,
    pub format: InputFormat,
    pub bytes: u64,
    pub sha256: String,
    pub records: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pcap: Option<PcapStats>,
}

#[derive(Default)]
struct HashState {
    hasher: Sha256,
    bytes: u64,
}

struct HashingReader<R> {
    inner: R,
    state: Rc<RefCell<HashState>>,
}

impl<R: Read> Read for HashingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        let mut st = self.state.borrow_mut();
        st.hasher.update(&buf[..n]);
        st.bytes += n as u64;
        Ok(n)
    }
}

type Buffered = BufReader<HashingReader<File>>;

enum Source {
    Pcap(PcapReader<Buffered>),
    Jsonl(RecordReader<Buffered>),
}

struct OpenInput {
    path: PathBuf,
    source: Source,
    hash: Rc<RefCell<HashState>>,
    records: u64,
}

impl OpenInput {
    fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
        let hash = Rc::new(RefCell::new(HashState::default()));
        let mut reader = BufReader::with_capacity(
            256 * 1024,
            HashingReader {
                inner: file,
                state: Rc::clone(&hash),
            },
        );
        let head = reader.fill_buf().with_context(|| format!("cannot read {}", path.display()))?;
        let is_pcap = head.len() >= 4 && PCAP_MAGICS.iter().any(|m| head[..4] == m[..]);
        let source = if is_pcap {
            Source::Pcap(PcapReader::new(reader).with_context(|| format!("{} is not a usable pcap", path.display()))?)
        } else {
            Source::Jsonl(RecordReader::new(reader))
        };
        Ok(OpenInput {
            path: path.to_owned(),
            source,
            hash,
            records: 0,
        })
    }

    fn next_record(&mut self) -> Option<scadascope_core::Result<PacketRecord>> {
        let item = match &mut self.source {
            Source::Pcap(r) => r.next(),
            Source::Jsonl(r) => r.next(),
        };
        if matches!(item, Some(Ok(_))) {
            self.records += 1;
        }
        item
    }

    fn summary(self) -> InputSummary {
        let (format, pcap) = match &self.source {
            Source::Pcap(r) => (InputFormat::Pcap, Some(r.stats())),
            Source::Jsonl(_) => (InputFormat::Jsonl, None),
        };
        drop(self.source);
        let state = Rc::try_unwrap(self.hash)
            .map(RefCell::into_inner)
            .unwrap_or_else(|rc| std::mem::take(&mut *rc.borrow_mut()));
        InputSummary {
            path: self.path,
            format,
            bytes: state.bytes,
            sha256: hex::encode(state.hasher.finalize()),
            records: self.records,
            pcap,
        }
    }
}

/// All inputs as one record stream, in argument order. Summaries of
/// finished inputs are collected in the shared handle.
pub struct InputStream {
    pending: VecDeque<OpenInput>,
    done: Rc<RefCell<Vec<InputSummary>>>,
}

impl Iterator for InputStream {
    type Item = scadascope_core::Result<PacketRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let current = self.pending.front_mut()?;
            match current.next_record() {
                Some(item) => return Some(item),
                None => {
                    let finished = self.pending.pop_front().expect("front exists");
                    self.done.borrow_mut().push(finished.summary());
                }
            }
        }
    }
}

/// Opens every input up front so unreadable paths fail before any work.
pub fn open_inputs(paths: &[PathBuf]) -> Result<(InputStream, Rc<RefCell<Vec<InputSummary>>>)> {
    let pending = paths.iter().map(|p| OpenInput::open(p)).collect::<Result<VecDeque<_>>>()?;
    let done = Rc::new(RefCell::new(Vec::new()));
    Ok((
        InputStream {
            pending,
            done: Rc::clone(&done),
        },
        done,
    ))
}

/// Time-ordered records: a one second reorder window, or a full in-memory
/// sort with `force_sort`.
pub fn ordered_stream(
    stream: InputStream,
    force_sort: bool,
) -> Result<Box<dyn Iterator<Item = scadascope_core::Result<PacketRecord>>>> {
    if force_sort {
        let all = ingest::sort_all(stream)?;
        Ok(Box::new(all.into_iter().map(Ok)))
    } else {
        Ok(Box::new(ingest::ordered(stream)))
    }
}

/// Reads every input into memory, time-ordered.
pub fn load_all(paths: &[PathBuf], force_sort: bool) -> Result<(Vec<PacketRecord>, Vec<InputSummary>)> {
    let (stream, summaries) = open_inputs(paths)?;
    let records = ordered_stream(stream, force_sort)?.collect::<scadascope_core::Result<Vec<_>>>()?;
    let summaries = summaries.borrow().clone();
    Ok((records, summaries))
}
