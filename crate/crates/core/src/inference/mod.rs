//! SCADA port and device inference over the ranked ft list.
//!
//! For each deployed protocol: take the top-ranked ft, pick the port on its
//! lower-degree endpoint, classify field devices (mostly SCADA traffic on
//! their own endpoint, few peers) and masters (talk to a field device on that
//! port), then drop every ranked entry touching the port and repeat.

mod eval;
mod hmi;
mod stability;

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

pub use eval::{evaluate, Evaluation};
pub use hmi::{infer_hmi, HmiInference};
pub use stability::{prefix_stability, time_prefix, StabilityResult};

use crate::error::{Error, Result};
use crate::features::RankedFt;
use crate::scalar::Scalar;
use crate::segmentation::FtMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub num_scada_protocols: usize,
    /// Field devices have strictly fewer distinct peers than this.
    pub fd_degree_threshold: usize,
    /// Field devices have strictly more than this share of SCADA segments.
    pub scada_fraction_threshold: f64,
    pub three_layer: bool,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            num_scada_protocols: 1,
            fd_degree_threshold: 5,
            scada_fraction_threshold: 0.5,
            three_layer: false,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_scada_protocols == 0 {
            return Err(Error::Config("number of SCADA protocols must be >= 1".into()));
        }
        if self.fd_degree_threshold == 0 {
            return Err(Error::Config("field device degree threshold must be positive".into()));
        }
        if !(self.scada_fraction_threshold > 0.0 && self.scada_fraction_threshold < 1.0) {
            return Err(Error::Config(format!(
                "SCADA fraction threshold must be in (0, 1), got {}",
                self.scada_fraction_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Activity {
    peers: BTreeSet<Ipv4Addr>,
    ft_count: u64,
    segments: u64,
    segments_by_own_port: BTreeMap<u16, u64>,
}

/// Per-device traffic summary built once from the ft set.
#[derive(Debug, Clone, Default)]
pub struct ProfileIndex {
    devices: BTreeMap<Ipv4Addr, Activity>,
}

/// Snapshot of one device with respect to a candidate SCADA port.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviceProfile {
    pub ip: Ipv4Addr,
    pub degree: usize,
    pub ft_count: u64,
    pub segment_count: u64,
    pub scada_fraction: f64,
    pub ports_used: BTreeSet<u16>,
}

impl ProfileIndex {
    pub fn build(fts: &FtMap) -> Self {
        let mut devices: BTreeMap<Ipv4Addr, Activity> = BTreeMap::new();
        for s in fts.values() {
            let k = &s.key;
            for (me, port, peer) in [(k.src_ip, k.src_port, k.dst_ip), (k.dst_ip, k.dst_port, k.src_ip)] {
                let a = devices.entry(me).or_default();
                if peer != me {
                    a.peers.insert(peer);
                }
                a.ft_count += 1;
                a.segments += s.n;
                *a.segments_by_own_port.entry(port).or_default() += s.n;
            }
            if k.src_ip == k.dst_ip {
                // counted twice above
                let a = devices.get_mut(&k.src_ip).unwrap();
                a.ft_count -= 1;
                a.segments -= s.n;
            }
        }
        ProfileIndex { devices }
    }

    pub fn devices(&self) -> impl Iterator<Item = Ipv4Addr> + '_ {
        self.devices.keys().copied()
    }

    pub fn contains(&self, ip: Ipv4Addr) -> bool {
        self.devices.contains_key(&ip)
    }

    pub fn degree(&self, ip: Ipv4Addr) -> usize {
        self.devices.get(&ip).map_or(0, |a| a.peers.len())
    }

    /// Share of the device's segments whose ft has `port` on the device's
    /// own endpoint.
    pub fn scada_fraction(&self, ip: Ipv4Addr, port: u16) -> f64 {
        match self.devices.get(&ip) {
            Some(a) if a.segments > 0 => {
                let on_port = a.segments_by_own_port.get(&port).copied().unwrap_or(0);
                // a self-talking device can count a segment on both ends
                (on_port as f64 / a.segments as f64).min(1.0)
            }
            _ => 0.0,
        }
    }

    pub fn profile(&self, ip: Ipv4Addr, port: u16) -> Option<DeviceProfile> {
        let a = self.devices.get(&ip)?;
        Some(DeviceProfile {
            ip,
            degree: a.peers.len(),
            ft_count: a.ft_count,
            segment_count: a.segments,
            scada_fraction: self.scada_fraction(ip, port),
            ports_used: a.segments_by_own_port.keys().copied().collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PortInference {
    pub port: u16,
    /// Endpoint that carries the port (the lower-degree side).
    pub device: Ipv4Addr,
    /// Both endpoints had the same degree; the lower port was taken.
    pub degree_tie: bool,
}

pub fn infer_scada_port<S: Scalar>(ranked: &[RankedFt<S>], profiles: &ProfileIndex) -> Result<PortInference> {
    let top = ranked.first().ok_or(Error::NoScadaFound)?.key;
    let (ds, dd) = (profiles.degree(top.src_ip), profiles.degree(top.dst_ip));
    let src_side = PortInference {
        port: top.src_port,
        device: top.src_ip,
        degree_tie: false,
    };
    let dst_side = PortInference {
        port: top.dst_port,
        device: top.dst_ip,
        degree_tie: false,
    };
    Ok(match ds.cmp(&dd) {
        std::cmp::Ordering::Less => src_side,
        std::cmp::Ordering::Greater => dst_side,
        std::cmp::Ordering::Equal => {
            let side = if top.dst_port < top.src_port { dst_side } else { src_side };
            PortInference {
                degree_tie: true,
                ..side
            }
        }
    })
}

pub fn infer_field_devices(port: u16, profiles: &ProfileIndex, config: &InferenceConfig) -> BTreeSet<Ipv4Addr> {
    profiles
        .devices()
        .filter(|&ip| {
            profiles.scada_fraction(ip, port) > config.scada_fraction_threshold
                && profiles.degree(ip) < config.fd_degree_threshold
        })
        .collect()
}

/// Devices with at least one ft on `port` whose peer is a field device.
pub fn infer_master_servers(port: u16, field_devices: &BTreeSet<Ipv4Addr>, fts: &FtMap) -> BTreeSet<Ipv4Addr> {
    let mut masters = BTreeSet::new();
    if field_devices.is_empty() {
        return masters;
    }
    for k in fts.keys().filter(|k| k.touches_port(port)) {
        for (me, peer) in [(k.src_ip, k.dst_ip), (k.dst_ip, k.src_ip)] {
            if field_devices.contains(&peer) && !field_devices.contains(&me) {
                masters.insert(me);
            }
        }
    }
    masters
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolEntry {
    pub scada_port: u16,
    pub field_devices: BTreeSet<Ipv4Addr>,
    pub master_servers: BTreeSet<Ipv4Addr>,
    pub port_degree_tie: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportStatus {
    Complete,
    /// Some iteration found no field device or the ranking had no signal.
    LowConfidence,
    /// The ranked list ran out before every protocol was inferred.
    Partial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceEvidence {
    pub degree: usize,
    pub ft_count: u64,
    pub segment_count: u64,
    pub distinct_ports: usize,
    /// Fraction of segments on each inferred SCADA port.
    pub scada_fraction: BTreeMap<u16, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyReport {
    pub protocols: Vec<ProtocolEntry>,
    pub hmi: Option<Ipv4Addr>,
    pub unclassified: BTreeSet<Ipv4Addr>,
    pub status: ReportStatus,
    pub warnings: Vec<String>,
    pub metrics: BTreeMap<String, serde_json::Value>,
    pub evidence: BTreeMap<Ipv4Addr, DeviceEvidence>,
}

impl TopologyReport {
    /// Every device claimed as field device, master or HMI.
    pub fn scada_devices(&self) -> BTreeSet<Ipv4Addr> {
        let mut all: BTreeSet<_> = self
            .protocols
            .iter()
            .flat_map(|p| p.field_devices.iter().chain(&p.master_servers).copied())
            .collect();
        all.extend(self.hmi);
        all
    }

    pub fn field_devices(&self) -> BTreeSet<Ipv4Addr> {
        self.protocols.iter().flat_map(|p| p.field_devices.iter().copied()).collect()
    }

    pub fn master_servers(&self) -> BTreeSet<Ipv4Addr> {
        self.protocols.iter().flat_map(|p| p.master_servers.iter().copied()).collect()
    }

    /// Same ports, device sets and HMI; metrics and evidence are ignored.
    pub fn same_topology(&self, other: &TopologyReport) -> bool {
        let strip = |r: &TopologyReport| {
            r.protocols
                .iter()
                .map(|p| (p.scada_port, p.field_devices.clone(), p.master_servers.clone()))
                .collect::<Vec<_>>()
        };
        strip(self) == strip(other) && self.hmi == other.hmi
    }

    pub fn is_low_confidence(&self) -> bool {
        self.status != ReportStatus::Complete
    }
}

/// Runs the multi-protocol inference loop.
pub fn run_algorithm1<S: Scalar>(fts: &FtMap, ranked: &[RankedFt<S>], config: &InferenceConfig) -> Result<TopologyReport> {
    config.validate()?;
    let profiles = ProfileIndex::build(fts);
    let mut remaining: Vec<&RankedFt<S>> = ranked.iter().collect();
    let mut protocols = Vec::new();
    let mut warnings = Vec::new();
    let mut status = ReportStatus::Complete;

    for i in 0..config.num_scada_protocols {
        let Some(top) = remaining.first() else {
            warnings.push(format!(
                "ranked list exhausted after {i} of {} protocols",
                config.num_scada_protocols
            ));
            status = ReportStatus::Partial;
            break;
        };
        if top.features.score <= S::zero() {
            warnings.push(format!(
                "iteration {}: top score is zero, the ranking carries no periodic signal",
                i + 1
            ));
            status = ReportStatus::LowConfidence;
            break;
        }
        let port = infer_scada_port(std::slice::from_ref(*top), &profiles)?;
        if port.degree_tie {
            warnings.push(format!(
                "iteration {}: endpoints of {} have equal degree; took the lower port {}",
                i + 1,
                top.key,
                port.port
            ));
        }
        let field_devices = infer_field_devices(port.port, &profiles, config);
        if field_devices.is_empty() {
            warnings.push(format!(
                "iteration {}: no device passes the field device conditions on port {}",
                i + 1,
                port.port
            ));
            if status == ReportStatus::Complete {
                status = ReportStatus::LowConfidence;
            }
        }
        let master_servers = infer_master_servers(port.port, &field_devices, fts);
        protocols.push(ProtocolEntry {
            scada_port: port.port,
            field_devices,
            master_servers,
            port_degree_tie: port.degree_tie,
        });
        remaining.retain(|r| !r.key.touches_port(port.port));
    }

    let mut hmi = None;
    if config.three_layer {
        let masters: BTreeSet<Ipv4Addr> = protocols.iter().flat_map(|p| p.master_servers.iter().copied()).collect();
        let mut best: Option<HmiInference> = None;
        for &m in &masters {
            match infer_hmi(m, fts) {
                Ok(h) => {
                    if best.as_ref().is_none_or(|b| h.quantity > b.quantity) {
                        best = Some(h);
                    }
                }
                Err(e) => warnings.push(format!("HMI inference from master {m}: {e}")),
            }
        }
        match best {
            Some(h) => {
                if h.tie {
                    warnings.push(format!("HMI choice {} tied on quantity; lowest ip taken", h.ip));
                }
                hmi = Some(h.ip);
            }
            None => warnings.push("three-layer mode but no master to infer an HMI from".into()),
        }
    }

    let ports: Vec<u16> = protocols.iter().map(|p| p.scada_port).collect();
    let evidence = profiles
        .devices
        .iter()
        .map(|(&ip, a)| {
            (
                ip,
                DeviceEvidence {
                    degree: a.peers.len(),
                    ft_count: a.ft_count,
                    segment_count: a.segments,
                    distinct_ports: a.segments_by_own_port.len(),
                    scada_fraction: ports.iter().map(|&p| (p, profiles.scada_fraction(ip, p))).collect(),
                },
            )
        })
        .collect();

    let mut report = TopologyReport {
        protocols,
        hmi,
        unclassified: BTreeSet::new(),
        status,
        warnings,
        metrics: BTreeMap::new(),
        evidence,
    };
    let claimed = report.scada_devices();
    report.unclassified = profiles.devices().filter(|ip| !claimed.contains(ip)).collect();
    Ok(report)
}
