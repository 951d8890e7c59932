use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{PacketRecord, Transport};
use crate::error::Result;

/// SSH, Telnet, DNS, HTTP, NTP, NetBIOS (137-139), SNMP, HTTPS, SMB.
pub const DEFAULT_SERVICE_PORTS: [u16; 11] = [22, 23, 53, 80, 123, 137, 138, 139, 161, 443, 445];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub service_ports: BTreeSet<u16>,
    pub drop_non_tcp: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            service_ports: DEFAULT_SERVICE_PORTS.into_iter().collect(),
            drop_non_tcp: true,
        }
    }
}

impl FilterConfig {
    /// A filter that keeps everything.
    pub fn pass_all() -> Self {
        FilterConfig {
            service_ports: BTreeSet::new(),
            drop_non_tcp: false,
        }
    }

    pub fn keeps(&self, rec: &PacketRecord) -> bool {
        if self.drop_non_tcp && rec.transport != Transport::Tcp {
            return false;
        }
        !(self.service_ports.contains(&rec.src_port) || self.service_ports.contains(&rec.dst_port))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterCounts {
    pub kept: u64,
    pub dropped_service_port: u64,
    pub dropped_non_tcp: u64,
}

impl FilterCounts {
    pub fn dropped(&self) -> u64 {
        self.dropped_service_port + self.dropped_non_tcp
    }

    pub fn input(&self) -> u64 {
        self.kept + self.dropped()
    }
}

/// Streaming filter adapter; errors from the inner stream pass through
/// untouched.
pub struct Filtered<I> {
    inner: I,
    config: FilterConfig,
    counts: FilterCounts,
}

impl<I> Filtered<I> {
    pub fn counts(&self) -> FilterCounts {
        self.counts
    }
}

impl<I> Iterator for Filtered<I>
where
    I: Iterator<Item = Result<PacketRecord>>,
{
    type Item = Result<PacketRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let rec = match self.inner.next()? {
                Ok(rec) => rec,
                Err(e) => return Some(Err(e)),
            };
            if self.config.drop_non_tcp && rec.transport != Transport::Tcp {
                self.counts.dropped_non_tcp += 1;
            } else if !self.config.keeps(&rec) {
                self.counts.dropped_service_port += 1;
            } else {
                self.counts.kept += 1;
                return Some(Ok(rec));
            }
        }
    }
}

pub fn filter_packets<I>(records: I, config: &FilterConfig) -> Filtered<I::IntoIter>
where
    I: IntoIterator<Item = Result<PacketRecord>>,
{
    Filtered {
        inner: records.into_iter(),
        config: config.clone(),
        counts: FilterCounts::default(),
    }
}
