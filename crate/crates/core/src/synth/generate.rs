use std::collections::HashSet;
use std::net::Ipv4Addr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use super::config::{PeripheralKind, ScenarioConfig};
use super::truth::{DeviceRole, GroundTruth};
use crate::error::{Error, Result};
use crate::ingest::{micros_to_secs, secs_to_micros, PacketRecord, Transport, DEFAULT_SERVICE_PORTS};

/// Lower bound on any periodic gap, so one-second segmentation never merges
/// two consecutive exchanges of a source.
pub const MIN_POLL_GAP: f64 = 1.1;

const MAX_FRAME: u32 = 1514;
const MIN_FRAME: u32 = 60;
const ACK: u32 = 60;
const FRAME_SPACING: f64 = 0.0002;

pub const MASTER_IP: Ipv4Addr = Ipv4Addr::new(10, 0, 0, 1);
pub const HMI_IP: Ipv4Addr = Ipv4Addr::new(10, 0, 0, 10);

#[derive(Debug, Clone)]
pub struct SyntheticTrace {
    /// Time-ordered.
    pub records: Vec<PacketRecord>,
    pub truth: GroundTruth,
}

struct Emitter {
    duration: f64,
    out: Vec<PacketRecord>,
}

impl Emitter {
    fn packet(&mut self, t: f64, src: (Ipv4Addr, u16), dst: (Ipv4Addr, u16), transport: Transport, size: u32) {
        if t < 0.0 || t >= self.duration {
            return;
        }
        self.out.push(PacketRecord {
            timestamp: micros_to_secs(secs_to_micros(t)),
            src_ip: src.0,
            src_port: src.1,
            dst_ip: dst.0,
            dst_port: dst.1,
            transport,
            size,
        });
    }

    /// `bytes` from `from` split into frames, then an optional acknowledgement.
    #[allow(clippy::too_many_arguments)]
    fn exchange(
        &mut self,
        rng: &mut ChaCha8Rng,
        t: f64,
        from: (Ipv4Addr, u16),
        to: (Ipv4Addr, u16),
        transport: Transport,
        bytes: u32,
        ack: Option<u32>,
    ) {
        let mut at = t;
        for (i, size) in split_frames(bytes).into_iter().enumerate() {
            at = t + i as f64 * FRAME_SPACING;
            self.packet(at, from, to, transport, size);
        }
        if let Some(ack) = ack {
            let delay = rng.random_range(0.002..0.020);
            self.packet(at + delay, to, from, transport, ack);
        }
    }
}

/// Frames of at most 1514 and at least 60 bytes summing to `total` (>= 60).
fn split_frames(total: u32) -> Vec<u32> {
    let mut frames = vec![MAX_FRAME; (total / MAX_FRAME) as usize];
    let rest = total % MAX_FRAME;
    if rest > 0 {
        if rest < MIN_FRAME && !frames.is_empty() {
            let last = frames.len() - 1;
            frames[last] -= MIN_FRAME - rest;
            frames.push(MIN_FRAME);
        } else {
            frames.push(rest.max(MIN_FRAME));
        }
    }
    frames
}

/// Draws from N(mean, sd) conditioned on the result being >= `MIN_POLL_GAP`.
fn truncated_gap(rng: &mut ChaCha8Rng, normal: &Normal<f64>) -> f64 {
    loop {
        let g = normal.sample(rng);
        if g >= MIN_POLL_GAP {
            return g;
        }
    }
}

struct PortAllocator {
    lo: u16,
    hi: u16,
    used: HashSet<u16>,
    rng: ChaCha8Rng,
}

impl PortAllocator {
    fn next(&mut self) -> u16 {
        let span = usize::from(self.hi - self.lo) + 1;
        if self.used.len() >= span {
            self.used.clear();
        }
        loop {
            let p = self.rng.random_range(self.lo..=self.hi);
            if self.used.insert(p) {
                return p;
            }
        }
    }
}

fn reconnects(rng: &mut ChaCha8Rng, rate_per_hour: f64, gap: f64) -> bool {
    rate_per_hour > 0.0 && rng.random::<f64>() < 1.0 - (-rate_per_hour * gap / 3600.0).exp()
}

fn field_device_ip(group: usize, i: usize) -> Ipv4Addr {
    Ipv4Addr::new(10, (group + 1) as u8, (i / 250) as u8, (i % 250 + 1) as u8)
}

pub fn generate(config: &ScenarioConfig) -> Result<SyntheticTrace> {
    config.validate()?;
    let seed = config.seed;
    let mut stream = 0u64;
    let mut next_rng = || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        stream += 1;
        rng
    };
    let mut em = Emitter {
        duration: config.duration,
        out: Vec::new(),
    };
    let mut truth = GroundTruth::default();
    let (lo, hi) = config.master.ephemeral_port_range;
    let mut ports = PortAllocator {
        lo,
        hi,
        used: HashSet::new(),
        rng: next_rng(),
    };
    let reconnect_rate = config.master.reconnect_rate;
    let has_field_devices = config.scada_groups.iter().any(|g| g.num_field_devices > 0);
    let master_role = if has_field_devices {
        DeviceRole::Master
    } else {
        DeviceRole::Peripheral
    };
    let mut master_used = false;

    for (gi, group) in config.scada_groups.iter().enumerate() {
        let normal = Normal::new(group.poll_mean, group.poll_jitter_stddev)
            .map_err(|e| Error::Config(format!("poll distribution: {e}")))?;
        for i in 0..group.num_field_devices {
            let mut rng = next_rng();
            let fd = field_device_ip(gi, i);
            truth.insert(fd, DeviceRole::FieldDevice, Some(group.port));
            master_used = true;
            let mut master_port = ports.next();
            let mut t = rng.random_range(0.0..group.poll_mean);
            let mut k = 0usize;
            while t < config.duration {
                let size = group.object_sizes[(i + k) % group.object_sizes.len()];
                let fd_end = (fd, group.port);
                let m_end = (MASTER_IP, master_port);
                match (group.master_initiates, group.response) {
                    (false, true) => em.exchange(&mut rng, t, fd_end, m_end, Transport::Tcp, size - ACK, Some(ACK)),
                    (false, false) => em.exchange(&mut rng, t, fd_end, m_end, Transport::Tcp, size, None),
                    (true, true) => {
                        em.packet(t, m_end, fd_end, Transport::Tcp, ACK);
                        let delay = rng.random_range(0.005..0.030);
                        em.exchange(&mut rng, t + delay, fd_end, m_end, Transport::Tcp, size - ACK, None);
                    }
                    (true, false) => em.exchange(&mut rng, t, m_end, fd_end, Transport::Tcp, size, None),
                }
                k += 1;
                let gap = truncated_gap(&mut rng, &normal);
                if reconnects(&mut rng, reconnect_rate, gap) {
                    master_port = ports.next();
                }
                t += gap;
            }
        }
    }

    if config.layers == 3 {
        let mut rng = next_rng();
        let h = &config.hmi;
        truth.insert(HMI_IP, DeviceRole::Hmi, None);
        master_used = true;
        let exp = Exp::new(1.0 / (h.mean_interval - MIN_POLL_GAP))
            .map_err(|e| Error::Config(format!("HMI interval: {e}")))?;
        let mut port = ports.next();
        let mut t = exp.sample(&mut rng);
        while t < config.duration {
            let frames = rng.random_range(h.min_frames..=h.max_frames);
            em.exchange(&mut rng, t, (MASTER_IP, port), (HMI_IP, h.port), Transport::Tcp, frames * MAX_FRAME - ACK, Some(ACK));
            let gap = MIN_POLL_GAP + exp.sample(&mut rng);
            if reconnects(&mut rng, reconnect_rate, gap) {
                port = ports.next();
            }
            t += gap;
        }
    }

    for p in &config.peripherals {
        let server = Ipv4Addr::new(10, 30, 0, p.kind as u8 + 1);
        truth.insert(server, DeviceRole::Peripheral, None);
        let normal = Normal::new(p.period, p.jitter_stddev)
            .map_err(|e| Error::Config(format!("peripheral period: {e}")))?;
        for c in 0..p.count {
            let mut rng = next_rng();
            // client `c` of every service is the same host
            let client_ip = Ipv4Addr::new(10, 20, 0, c as u8 + 1);
            let (mut client, server_end, transport) = match p.kind {
                PeripheralKind::Ntp => ((client_ip, 123), (server, 123), Transport::Udp),
                PeripheralKind::Netbios => ((client_ip, 137), (server, 137), Transport::Udp),
                PeripheralKind::Heartbeat => ((client_ip, rng.random_range(30000..40000)), (server, 5001), Transport::Tcp),
                PeripheralKind::X11 => ((client_ip, rng.random_range(30000..40000)), (server, 6000), Transport::Tcp),
                // the master is the first backup client, office hosts follow
                PeripheralKind::Backup if c == 0 => {
                    master_used = true;
                    ((MASTER_IP, ports.next()), (server, 873), Transport::Tcp)
                }
                PeripheralKind::Backup => (
                    (Ipv4Addr::new(10, 20, 0, c as u8), rng.random_range(30000..40000)),
                    (server, 873),
                    Transport::Tcp,
                ),
            };
            if client.0 != MASTER_IP {
                truth.insert(client.0, DeviceRole::Peripheral, None);
            }
            let mut t = rng.random_range(0.0..p.period);
            while t < config.duration {
                match transport {
                    // request and reply of equal size
                    Transport::Udp => {
                        let half = p.size / 2;
                        em.packet(t, client, server_end, transport, half);
                        let delay = rng.random_range(0.001..0.010);
                        em.packet(t + delay, server_end, client, transport, p.size - half);
                    }
                    _ => em.exchange(&mut rng, t, client, server_end, transport, p.size - ACK, Some(ACK)),
                }
                let gap = truncated_gap(&mut rng, &normal);
                if p.kind == PeripheralKind::Backup && reconnects(&mut rng, reconnect_rate, gap) {
                    client.1 = if client.0 == MASTER_IP {
                        ports.next()
                    } else {
                        rng.random_range(30000..40000)
                    };
                }
                t += gap;
            }
        }
    }

    let scada_port = config.scada_groups.iter().find(|g| g.num_field_devices > 0).map(|g| g.port);
    for (wi, r) in config.reporting.iter().enumerate() {
        let mut rng = next_rng();
        let ws = Ipv4Addr::new(10, 40, 0, wi as u8 + 1);
        truth.insert(ws, DeviceRole::Peripheral, None);
        let others: Vec<(Ipv4Addr, u16)> = (1..r.peers)
            .map(|j| Ipv4Addr::new(10, 41, wi as u8, j as u8))
            .map(|ip| (ip, 8080))
            .collect();
        for (ip, _) in &others {
            truth.insert(*ip, DeviceRole::Peripheral, None);
        }
        let own_ports: Vec<u16> = others.iter().map(|_| rng.random_range(30000..40000)).collect();
        let scada_link = scada_port.map(|p| ((ws, p), (MASTER_IP, ports.next())));
        let normal = Normal::new(r.period, 0.3 * r.period).expect("validated period");
        let mut t = rng.random_range(0.0..r.period);
        while t < config.duration {
            let scada = rng.random::<f64>() < r.scada_share;
            match (scada, scada_link, others.is_empty()) {
                (true, Some((from, to)), _) => {
                    master_used = true;
                    em.exchange(&mut rng, t, from, to, Transport::Tcp, 400, Some(ACK));
                }
                (_, _, false) => {
                    let j = rng.random_range(0..others.len());
                    em.exchange(&mut rng, t, (ws, own_ports[j]), others[j], Transport::Tcp, 300, Some(ACK));
                }
                (_, _, true) => {
                    master_used = true;
                    em.exchange(&mut rng, t, (ws, 31000), (MASTER_IP, 8080), Transport::Tcp, 300, Some(ACK));
                }
            }
            t += truncated_gap(&mut rng, &normal);
        }
    }

    if config.noise.nonresponder_retry {
        let mut rng = next_rng();
        let src = Ipv4Addr::new(10, 20, 1, 200);
        let dead = Ipv4Addr::new(10, 99, 0, 1);
        truth.insert(src, DeviceRole::Peripheral, None);
        truth.insert(dead, DeviceRole::Peripheral, None);
        let mut t = rng.random_range(0.0..60.0);
        while t < config.duration {
            let port = rng.random_range(30000..40000);
            for backoff in [0.0, 3.0, 9.0, 21.0] {
                em.packet(t + backoff, (src, port), (dead, 2000), Transport::Tcp, 66);
            }
            t += 60.0 + rng.random_range(0.0..1.0);
        }
    }

    if master_used {
        truth.insert(MASTER_IP, master_role, None);
    }

    let chatter = config.noise.service_chatter_fraction;
    if chatter > 0.0 {
        let mut rng = next_rng();
        let base = em.out.len() as f64;
        let extra = (base * chatter / (1.0 - chatter)).round() as usize;
        let server = Ipv4Addr::new(10, 51, 0, 1);
        truth.insert(server, DeviceRole::Peripheral, None);
        for c in 1..=10u8 {
            truth.insert(Ipv4Addr::new(10, 50, 0, c), DeviceRole::Peripheral, None);
        }
        for _ in 0..extra {
            let t = rng.random_range(0.0..config.duration);
            let service = DEFAULT_SERVICE_PORTS[rng.random_range(0..DEFAULT_SERVICE_PORTS.len())];
            let transport = if matches!(service, 53 | 123 | 137 | 138 | 161) {
                Transport::Udp
            } else {
                Transport::Tcp
            };
            let client = (Ipv4Addr::new(10, 50, 0, rng.random_range(1..=10)), rng.random_range(30000..40000));
            let size = rng.random_range(60..=200);
            if rng.random::<bool>() {
                em.packet(t, client, (server, service), transport, size);
            } else {
                em.packet(t, (server, service), client, transport, size);
            }
        }
    }

    let mut records = em.out;
    records.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    Ok(SyntheticTrace { records, truth })
}
