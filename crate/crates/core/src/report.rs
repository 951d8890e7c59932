//! Graphviz export of an inferred topology.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::net::Ipv4Addr;

use crate::inference::TopologyReport;
use crate::segmentation::FtMap;

fn shape(report: &TopologyReport, ip: Ipv4Addr, fds: &BTreeSet<Ipv4Addr>, masters: &BTreeSet<Ipv4Addr>) -> &'static str {
    if fds.contains(&ip) {
        "box"
    } else if masters.contains(&ip) {
        "doublecircle"
    } else if report.hmi == Some(ip) {
        "diamond"
    } else {
        "ellipse"
    }
}

/// Undirected graph over the inferred SCADA devices. Edges join devices that
/// exchanged segments, labeled with the lower-degree side's port and the
/// segment count.
pub fn to_dot(report: &TopologyReport, fts: &FtMap) -> String {
    let fds = report.field_devices();
    let masters = report.master_servers();
    let nodes = report.scada_devices();

    // (low ip, high ip, port) -> segments
    let mut edges: BTreeMap<(Ipv4Addr, Ipv4Addr, u16), u64> = BTreeMap::new();
    for (key, stats) in fts {
        if key.src_ip == key.dst_ip || !nodes.contains(&key.src_ip) || !nodes.contains(&key.dst_ip) {
            continue;
        }
        // the service side: a field device, else the HMI, else the destination
        let port = if fds.contains(&key.src_ip) || report.hmi == Some(key.src_ip) {
            key.src_port
        } else {
            key.dst_port
        };
        let (a, b) = if key.src_ip < key.dst_ip {
            (key.src_ip, key.dst_ip)
        } else {
            (key.dst_ip, key.src_ip)
        };
        *edges.entry((a, b, port)).or_default() += stats.n;
    }

    let mut out = String::from("graph scada {\n    node [fontname=\"monospace\"];\n");
    for ip in &nodes {
        let _ = writeln!(out, "    \"{ip}\" [shape={}];", shape(report, *ip, &fds, &masters));
    }
    for ((a, b, port), segments) in &edges {
        let _ = writeln!(out, "    \"{a}\" -- \"{b}\" [label=\"{port} ({segments})\"];");
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{ProtocolEntry, ReportStatus};
    use crate::segmentation::{FtKey, FtStats};

    fn ip(d: u8) -> Ipv4Addr {
        Ipv4Addr::new(10, 0, 0, d)
    }

    #[test]
    fn shapes_and_edges() {
        let report = TopologyReport {
            protocols: vec![ProtocolEntry {
                scada_port: 20000,
                field_devices: BTreeSet::from([ip(2)]),
                master_servers: BTreeSet::from([ip(1)]),
                port_degree_tie: false,
            }],
            hmi: Some(ip(10)),
            unclassified: BTreeSet::new(),
            status: ReportStatus::Complete,
            warnings: vec![],
            metrics: BTreeMap::new(),
            evidence: BTreeMap::new(),
        };
        let mut fts = FtMap::new();
        let key = FtKey {
            src_ip: ip(2),
            src_port: 20000,
            dst_ip: ip(1),
            dst_port: 50000,
            seg_size: 340,
        };
        fts.insert(
            key,
            FtStats {
                key,
                n: 3,
                start_times: vec![0.0, 1.5, 3.0],
                iat: vec![1.5, 1.5],
            },
        );
        let dot = to_dot(&report, &fts);
        assert!(dot.contains("\"10.0.0.2\" [shape=box]"));
        assert!(dot.contains("\"10.0.0.1\" [shape=doublecircle]"));
        assert!(dot.contains("\"10.0.0.10\" [shape=diamond]"));
        assert!(dot.contains("\"10.0.0.1\" -- \"10.0.0.2\" [label=\"20000 (3)\"]"));
    }
}
