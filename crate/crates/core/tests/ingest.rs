use std::net::Ipv4Addr;

use pcap_parser::PcapCapture;
use scadascope_core::ingest::{
    filter_packets, read_pcap, read_records, write_pcap, write_records, FilterConfig, PcapReader,
};
use scadascope_core::synth::{self, ScenarioConfig};
use scadascope_core::{PacketRecord, Transport};

fn ethernet_ipv4(proto: u8, src: [u8; 4], dst: [u8; 4], sport: u16, dport: u16, len: usize) -> Vec<u8> {
    let mut f = vec![0u8; len];
    f[12..14].copy_from_slice(&0x0800u16.to_be_bytes());
    let ip = &mut f[14..];
    ip[0] = 0x45;
    ip[2..4].copy_from_slice(&((len - 14) as u16).to_be_bytes());
    ip[8] = 64;
    ip[9] = proto;
    ip[12..16].copy_from_slice(&src);
    ip[16..20].copy_from_slice(&dst);
    ip[20..22].copy_from_slice(&sport.to_be_bytes());
    ip[22..24].copy_from_slice(&dport.to_be_bytes());
    f
}

fn arp() -> Vec<u8> {
    let mut f = vec![0u8; 42];
    f[12..14].copy_from_slice(&0x0806u16.to_be_bytes());
    f
}

/// Five frames, one of them ARP, in a little-endian microsecond pcap.
fn fixture() -> Vec<u8> {
    let frames: Vec<(u32, u32, Vec<u8>)> = vec![
        (100, 0, ethernet_ipv4(6, [10, 0, 0, 1], [10, 0, 0, 2], 50000, 20000, 74)),
        (100, 250_000, ethernet_ipv4(6, [10, 0, 0, 2], [10, 0, 0, 1], 20000, 50000, 686)),
        (100, 500_000, arp()),
        (101, 0, ethernet_ipv4(17, [10, 0, 0, 3], [10, 0, 0, 4], 123, 123, 90)),
        (102, 999_999, ethernet_ipv4(1, [10, 0, 0, 5], [10, 0, 0, 1], 0, 0, 98)),
    ];
    let mut out = Vec::new();
    out.extend_from_slice(&0xa1b2_c3d4u32.to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&[0u8; 8]);
    out.extend_from_slice(&65535u32.to_le_bytes());
    out.extend_from_slice(&1u32.to_le_bytes());
    for (sec, usec, data) in frames {
        out.extend_from_slice(&sec.to_le_bytes());
        out.extend_from_slice(&usec.to_le_bytes());
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(&data);
    }
    out
}

#[test]
fn hand_built_pcap() {
    let bytes = fixture();
    let mut reader = PcapReader::new(&bytes[..]).unwrap();
    let records: Vec<PacketRecord> = reader.by_ref().collect::<Result<_, _>>().unwrap();
    let stats = reader.stats();
    assert_eq!(records.len(), 4);
    assert_eq!(stats.frames, 5);
    assert_eq!(stats.skipped_non_ip, 1);
    assert_eq!(stats.skipped_malformed, 0);

    assert_eq!(records[0].src_ip, Ipv4Addr::new(10, 0, 0, 1));
    assert_eq!((records[0].src_port, records[0].dst_port), (50000, 20000));
    assert_eq!(records[1].size, 686);
    assert_eq!(records[2].transport, Transport::Udp);
    assert_eq!(records[3].transport, Transport::Icmp);
    assert_eq!((records[3].src_port, records[3].dst_port), (0, 0));

    // timestamps and lengths agree with an independent parser
    let capture = PcapCapture::from_file(&bytes).unwrap();
    let ip_blocks: Vec<_> = capture.blocks.iter().filter(|b| b.data[12..14] == [0x08, 0x00]).collect();
    assert_eq!(ip_blocks.len(), records.len());
    for (b, r) in ip_blocks.iter().zip(&records) {
        let ts = f64::from(b.ts_sec) + f64::from(b.ts_usec) * 1e-6;
        assert!((ts - r.timestamp).abs() < 1e-9);
        assert_eq!(b.caplen, r.size);
        assert_eq!(&b.data[26..30], &r.src_ip.octets());
    }
}

#[test]
fn truncated_tail_keeps_earlier_records() {
    let mut bytes = fixture();
    bytes.truncate(bytes.len() - 10);
    let mut reader = PcapReader::new(&bytes[..]).unwrap();
    let records: Vec<PacketRecord> = reader.by_ref().collect::<Result<_, _>>().unwrap();
    assert_eq!(records.len(), 3);
    assert!(reader.stats().truncated_tail);
}

#[test]
fn bad_magic_is_an_error() {
    assert!(PcapReader::new(&b"not a pcap file at all.."[..]).is_err());
}

#[test]
fn pcap_and_jsonl_round_trip() {
    let trace = synth::generate(&ScenarioConfig::dataset2_like(600.0, 4)).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let pcap = dir.path().join("t.pcap");
    write_pcap(&trace.records, &pcap).unwrap();
    let back: Vec<PacketRecord> = read_pcap(&pcap).unwrap().collect::<Result<_, _>>().unwrap();
    assert_eq!(back, trace.records);
    let bytes = std::fs::read(&pcap).unwrap();
    assert_eq!(PcapCapture::from_file(&bytes).unwrap().blocks.len(), trace.records.len());

    let jsonl = dir.path().join("t.jsonl");
    let head = &trace.records[..1000];
    write_records(head, &jsonl).unwrap();
    assert_eq!(std::fs::read_to_string(&jsonl).unwrap().lines().count(), 1000);
    let back: Vec<PacketRecord> = read_records(&jsonl).unwrap().collect::<Result<_, _>>().unwrap();
    assert_eq!(back, head);
}

#[test]
fn filter_keeps_most_of_a_scada_trace() {
    let mut cfg = ScenarioConfig::dataset1_like(3600.0, 2);
    cfg.noise.service_chatter_fraction = 0.07;
    // UDP peripherals would also be dropped; only the chatter is measured here
    cfg.peripherals.retain(|p| !matches!(p.kind, synth::PeripheralKind::Ntp | synth::PeripheralKind::Netbios));
    let trace = synth::generate(&cfg).unwrap();
    let mut filtered = filter_packets(trace.records.iter().copied().map(Ok), &FilterConfig::default());
    let kept = filtered.by_ref().count() as f64;
    let counts = filtered.counts();
    let share = kept / trace.records.len() as f64;
    assert!((share - 0.93).abs() < 0.005, "kept {share}");
    assert_eq!(counts.kept as f64, kept);
    assert!(counts.dropped_service_port > 0);
}
