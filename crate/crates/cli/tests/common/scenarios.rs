//! Seeded small scenarios for the oracle and invariance suites.

use std::net::Ipv4Addr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scadascope_core::ingest::{micros_to_secs, Transport};
use scadascope_core::synth::{
    self, HmiConfig, MasterConfig, NoiseConfig, PeripheralConfig, PeripheralKind, ReportingConfig, ScadaGroup,
    ScenarioConfig,
};
use scadascope_core::PacketRecord;

pub const MAX_PACKETS: usize = 10_000;

/// A small generator scenario; `three_layer` forces an HMI.
pub fn small_config(seed: u64, three_layer: bool) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let kinds = [
        PeripheralKind::Ntp,
        PeripheralKind::Heartbeat,
        PeripheralKind::Backup,
        PeripheralKind::X11,
        PeripheralKind::Netbios,
    ];
    let mut peripherals = Vec::new();
    for kind in kinds {
        if !rng.random_bool(0.6) {
            continue;
        }
        let period = rng.random_range(3.0..60.0);
        peripherals.push(PeripheralConfig {
            kind,
            period,
            size: rng.random_range(120..1514),
            jitter_stddev: rng.random_range(0.01..0.3) * period / 3.0,
            count: rng.random_range(1..4),
        });
    }
    let poll_mean: f64 = rng.random_range(2.0..20.0);
    let sizes = (0..rng.random_range(1..4)).map(|_| rng.random_range(120..1514)).collect();
    ScenarioConfig {
        duration: rng.random_range(300.0..1500.0),
        seed,
        scada_groups: vec![ScadaGroup {
            port: [20000, 2404, 502][rng.random_range(0..3)],
            num_field_devices: rng.random_range(1..9),
            poll_mean,
            poll_jitter_stddev: rng.random_range(0.05..0.3) * poll_mean,
            object_sizes: sizes,
            response: rng.random_bool(0.8),
            master_initiates: rng.random_bool(0.2),
        }],
        master: MasterConfig {
            reconnect_rate: rng.random_range(0.0..20.0),
            ..MasterConfig::default()
        },
        layers: if three_layer || rng.random_bool(0.3) { 3 } else { 2 },
        hmi: HmiConfig::default(),
        peripherals,
        reporting: if rng.random_bool(0.5) {
            vec![ReportingConfig {
                scada_share: rng.random_range(0.1..0.9),
                peers: rng.random_range(1..5),
                period: rng.random_range(5.0..30.0),
            }]
        } else {
            Vec::new()
        },
        noise: NoiseConfig {
            nonresponder_retry: rng.random_bool(0.5),
            service_chatter_fraction: if rng.random_bool(0.3) { 0.07 } else { 0.0 },
        },
    }
}

/// At most `MAX_PACKETS` records of a small generator scenario.
pub fn small_trace(seed: u64, three_layer: bool) -> Vec<PacketRecord> {
    let mut records = synth::generate(&small_config(seed, three_layer)).expect("valid scenario").records;
    records.truncate(MAX_PACKETS);
    records
}

/// Unstructured traffic between a handful of endpoints with gaps clustered
/// around one second, including exact one-second gaps and duplicate
/// timestamps.
pub fn raw_trace(seed: u64) -> Vec<PacketRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
    let hosts: Vec<Ipv4Addr> = (0..rng.random_range(2..8)).map(|i| Ipv4Addr::new(192, 168, 0, i + 1)).collect();
    let ports = [502u16, 20000, 40000, 40001, 50000, 123];
    let n = rng.random_range(200..3000);
    let mut t = 0u64;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        t += match rng.random_range(0..6) {
            0 => 0,
            1 => 1_000_000,
            2 => rng.random_range(999_000..1_001_000),
            3 => rng.random_range(1..50_000),
            _ => rng.random_range(0..3_000_000),
        };
        let src = rng.random_range(0..hosts.len());
        let mut dst = rng.random_range(0..hosts.len());
        if dst == src {
            dst = (dst + 1) % hosts.len();
        }
        out.push(PacketRecord {
            timestamp: micros_to_secs(t),
            src_ip: hosts[src],
            src_port: ports[rng.random_range(0..ports.len())],
            dst_ip: hosts[dst],
            dst_port: ports[rng.random_range(0..ports.len())],
            transport: if rng.random_bool(0.9) { Transport::Tcp } else { Transport::Udp },
            size: rng.random_range(1..1600),
        });
    }
    out
}
