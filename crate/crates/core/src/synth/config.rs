use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::generate::MIN_POLL_GAP;

/// Field devices sharing one SCADA port and polling schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScadaGroup {
    pub port: u16,
    pub num_field_devices: usize,
    /// Mean seconds between polls of one device.
    pub poll_mean: f64,
    pub poll_jitter_stddev: f64,
    /// Segment sizes in bytes; device `i` uses them in turn starting at `i`.
    pub object_sizes: Vec<u32>,
    /// The peer acknowledges each report inside the same segment.
    #[serde(default = "yes")]
    pub response: bool,
    /// The master sends a request and the field device answers, instead of
    /// the field device reporting on its own.
    #[serde(default)]
    pub master_initiates: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasterConfig {
    pub ephemeral_port_range: (u16, u16),
    /// Expected reconnects per connection per hour; each picks a new port.
    pub reconnect_rate: f64,
}

impl Default for MasterConfig {
    fn default() -> Self {
        MasterConfig {
            ephemeral_port_range: (49152, 65535),
            reconnect_rate: 0.05,
        }
    }
}

/// Master-to-HMI forwarding in three-layer deployments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmiConfig {
    pub port: u16,
    /// Mean seconds between transfers; gaps are 1.1 s plus an exponential
    /// remainder so transfers never merge into one segment.
    pub mean_interval: f64,
    /// Each transfer is this many full 1514-byte frames (the last one carries
    /// the HMI's acknowledgement).
    pub min_frames: u32,
    pub max_frames: u32,
}

impl Default for HmiConfig {
    fn default() -> Self {
        HmiConfig {
            port: 4000,
            mean_interval: 3.0,
            min_frames: 1,
            max_frames: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeripheralKind {
    Ntp,
    Heartbeat,
    Backup,
    X11,
    Netbios,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeripheralConfig {
    pub kind: PeripheralKind,
    /// Seconds between exchanges.
    pub period: f64,
    /// Bytes per exchange.
    pub size: u32,
    #[serde(default = "default_peripheral_jitter")]
    pub jitter_stddev: f64,
    /// Number of client hosts running this pattern. The master is always
    /// the first backup client.
    #[serde(default = "one")]
    pub count: usize,
}

fn default_peripheral_jitter() -> f64 {
    0.5
}

fn one() -> usize {
    1
}

/// A workstation that pulls data over the SCADA port but is not a SCADA
/// device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportingConfig {
    /// Share of its segments on the SCADA port.
    pub scada_share: f64,
    /// Distinct peers, the master included.
    pub peers: usize,
    #[serde(default = "default_reporting_period")]
    pub period: f64,
}

fn default_reporting_period() -> f64 {
    20.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// SYN retries towards a host that never answers.
    #[serde(default)]
    pub nonresponder_retry: bool,
    /// Fraction of all packets that are single-packet common-service chatter.
    #[serde(default)]
    pub service_chatter_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Seconds.
    pub duration: f64,
    pub seed: u64,
    pub scada_groups: Vec<ScadaGroup>,
    #[serde(default)]
    pub master: MasterConfig,
    /// 2, or 3 to add an HMI fed by the master.
    #[serde(default = "two")]
    pub layers: u8,
    #[serde(default)]
    pub hmi: HmiConfig,
    #[serde(default)]
    pub peripherals: Vec<PeripheralConfig>,
    #[serde(default)]
    pub reporting: Vec<ReportingConfig>,
    #[serde(default)]
    pub noise: NoiseConfig,
}

fn two() -> u8 {
    2
}

fn ten_peripherals() -> Vec<PeripheralConfig> {
    // Five office hosts each run four services against four servers, and the
    // backup server takes jobs from the master and four of the hosts: ten
    // peripheral devices. Every service is more periodic than SCADA polling,
    // no host spends half its traffic on one service, and every server has
    // five peers.
    let p = |kind, period, size, jitter_stddev, count| PeripheralConfig {
        kind,
        period,
        size,
        jitter_stddev,
        count,
    };
    vec![
        p(PeripheralKind::Ntp, 64.0, 180, 1.0, 5),
        p(PeripheralKind::Heartbeat, 30.0, 120, 0.5, 5),
        p(PeripheralKind::Netbios, 30.0, 220, 1.0, 5),
        p(PeripheralKind::X11, 60.0, 160, 2.0, 5),
        p(PeripheralKind::Backup, 600.0, 1514, 10.0, 5),
    ]
}

impl ScenarioConfig {
    /// 49 field devices reporting over DNP3 to one master, an HMI, ten
    /// peripheral hosts and two reporting workstations.
    pub fn dataset1_like(duration: f64, seed: u64) -> Self {
        ScenarioConfig {
            duration,
            seed,
            scada_groups: vec![ScadaGroup {
                port: 20000,
                num_field_devices: 49,
                poll_mean: 8.75,
                poll_jitter_stddev: 1.48f64.sqrt(),
                object_sizes: vec![340, 337, 332, 296, 225],
                response: true,
                master_initiates: false,
            }],
            master: MasterConfig::default(),
            layers: 3,
            hmi: HmiConfig::default(),
            peripherals: ten_peripherals(),
            reporting: vec![
                ReportingConfig {
                    scada_share: 0.3,
                    peers: 2,
                    period: 20.0,
                },
                ReportingConfig {
                    scada_share: 0.8,
                    peers: 6,
                    period: 20.0,
                },
            ],
            noise: NoiseConfig {
                nonresponder_retry: true,
                service_chatter_fraction: 0.0,
            },
        }
    }

    /// Two proprietary protocols behind one master: 22 reporting devices on
    /// port A and 4 polled devices on port B.
    pub fn dataset2_like(duration: f64, seed: u64) -> Self {
        ScenarioConfig {
            duration,
            seed,
            scada_groups: vec![
                ScadaGroup {
                    port: 2404,
                    num_field_devices: 22,
                    poll_mean: 8.0,
                    poll_jitter_stddev: 1.0,
                    object_sizes: vec![686, 288, 1086],
                    response: true,
                    master_initiates: false,
                },
                ScadaGroup {
                    port: 5450,
                    num_field_devices: 4,
                    poll_mean: 30.0,
                    poll_jitter_stddev: 2.0,
                    object_sizes: vec![1514],
                    response: true,
                    master_initiates: true,
                },
            ],
            master: MasterConfig::default(),
            layers: 2,
            hmi: HmiConfig::default(),
            peripherals: ten_peripherals(),
            reporting: Vec::new(),
            noise: NoiseConfig {
                nonresponder_retry: true,
                service_chatter_fraction: 0.0,
            },
        }
    }

    /// A long, sparse trace for prefix-stability runs.
    pub fn month_like(days: f64, seed: u64) -> Self {
        let p = |kind, period: f64, size| PeripheralConfig {
            kind,
            period,
            size,
            jitter_stddev: period / 40.0,
            count: 1,
        };
        ScenarioConfig {
            duration: days * 86_400.0,
            seed,
            scada_groups: vec![ScadaGroup {
                port: 20000,
                num_field_devices: 8,
                poll_mean: 45.0,
                poll_jitter_stddev: 4.0,
                object_sizes: vec![340, 296],
                response: true,
                master_initiates: false,
            }],
            master: MasterConfig {
                reconnect_rate: 0.01,
                ..MasterConfig::default()
            },
            layers: 2,
            hmi: HmiConfig::default(),
            peripherals: vec![
                p(PeripheralKind::Ntp, 256.0, 180),
                p(PeripheralKind::Heartbeat, 60.0, 120),
                p(PeripheralKind::Netbios, 120.0, 220),
                p(PeripheralKind::Backup, 3600.0, 1514),
            ],
            reporting: Vec::new(),
            noise: NoiseConfig::default(),
        }
    }

    /// Office traffic only; there is nothing SCADA to find.
    pub fn office_only(duration: f64, seed: u64) -> Self {
        ScenarioConfig {
            duration,
            seed,
            scada_groups: Vec::new(),
            master: MasterConfig::default(),
            layers: 2,
            hmi: HmiConfig::default(),
            peripherals: ten_peripherals(),
            reporting: Vec::new(),
            noise: NoiseConfig {
                nonresponder_retry: true,
                service_chatter_fraction: 0.0,
            },
        }
    }

    pub fn preset(name: &str, seed: u64) -> Option<Self> {
        Some(match name {
            "dataset1" => Self::dataset1_like(86_400.0, seed),
            "dataset2" => Self::dataset2_like(86_400.0, seed),
            "month" => Self::month_like(30.0, seed),
            "office" => Self::office_only(86_400.0, seed),
            _ => return None,
        })
    }

    pub const PRESETS: [&'static str; 4] = ["dataset1", "dataset2", "month", "office"];

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        if !matches!(self.layers, 2 | 3) {
            return bad(format!("layers must be 2 or 3, got {}", self.layers));
        }
        let (lo, hi) = self.master.ephemeral_port_range;
        if lo == 0 || lo > hi {
            return bad(format!("bad ephemeral port range {lo}-{hi}"));
        }
        if self.master.reconnect_rate < 0.0 {
            return bad("reconnect rate must be >= 0".into());
        }
        let mut ports = Vec::new();
        for g in &self.scada_groups {
            if g.port == 0 || (lo..=hi).contains(&g.port) {
                return bad(format!("SCADA port {} must be nonzero and outside the ephemeral range", g.port));
            }
            if ports.contains(&g.port) {
                return bad(format!("SCADA port {} used by two groups", g.port));
            }
            ports.push(g.port);
            if g.poll_mean <= MIN_POLL_GAP {
                return bad(format!("poll mean {} must exceed {MIN_POLL_GAP} s", g.poll_mean));
            }
            if g.poll_jitter_stddev.is_nan() || g.poll_jitter_stddev < 0.0 || g.poll_jitter_stddev >= g.poll_mean {
                return bad(format!(
                    "poll jitter {} must be in [0, poll mean {})",
                    g.poll_jitter_stddev, g.poll_mean
                ));
            }
            if g.num_field_devices > 0 && g.object_sizes.is_empty() {
                return bad(format!("group on port {} has no object sizes", g.port));
            }
            let floor = if g.response { 120 } else { 60 };
            if let Some(s) = g.object_sizes.iter().find(|&&s| s < floor) {
                return bad(format!("object size {s} below the {floor}-byte floor"));
            }
            if g.num_field_devices > 250 * 250 {
                return bad("too many field devices in one group".into());
            }
        }
        for p in &self.peripherals {
            if p.period <= MIN_POLL_GAP || p.jitter_stddev.is_nan() || p.jitter_stddev < 0.0 || p.jitter_stddev >= p.period {
                return bad(format!("peripheral {:?}: period {} / jitter {} invalid", p.kind, p.period, p.jitter_stddev));
            }
            if p.size < 120 {
                return bad(format!("peripheral {:?} size {} below 120 bytes", p.kind, p.size));
            }
            if p.count == 0 || p.count > 250 {
                return bad(format!("peripheral {:?} count must be in 1..=250", p.kind));
            }
        }
        for r in &self.reporting {
            if !(0.0..=1.0).contains(&r.scada_share) || r.peers == 0 || r.period <= MIN_POLL_GAP {
                return bad(format!("invalid reporting workstation {r:?}"));
            }
        }
        if self.layers == 3 {
            let h = &self.hmi;
            if h.mean_interval <= MIN_POLL_GAP || h.min_frames == 0 || h.min_frames > h.max_frames {
                return bad(format!("invalid HMI config {h:?}"));
            }
        }
        let f = self.noise.service_chatter_fraction;
        if !(0.0..0.9).contains(&f) {
            return bad(format!("service chatter fraction {f} must be in [0, 0.9)"));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ScenarioConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}
