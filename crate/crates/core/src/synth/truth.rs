use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::net::Ipv4Addr;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceRole {
    FieldDevice,
    Master,
    Hmi,
    Peripheral,
}

impl DeviceRole {
    pub fn is_scada(self) -> bool {
        !matches!(self, DeviceRole::Peripheral)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    #[serde(rename = "label")]
    pub role: DeviceRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<u16>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LabelRepr {
    Bare(DeviceRole),
    Tagged(Label),
}

/// `ip -> label` map; on disk each value is either a bare role string or
/// `{"label": role, "protocol": port}`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    pub labels: BTreeMap<Ipv4Addr, Label>,
}

impl GroundTruth {
    pub fn insert(&mut self, ip: Ipv4Addr, role: DeviceRole, protocol: Option<u16>) {
        self.labels.insert(ip, Label { role, protocol });
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn role(&self, ip: Ipv4Addr) -> Option<DeviceRole> {
        self.labels.get(&ip).map(|l| l.role)
    }

    pub fn with_role(&self, role: DeviceRole) -> BTreeSet<Ipv4Addr> {
        self.labels.iter().filter(|(_, l)| l.role == role).map(|(&ip, _)| ip).collect()
    }

    pub fn scada_devices(&self) -> BTreeSet<Ipv4Addr> {
        self.labels.iter().filter(|(_, l)| l.role.is_scada()).map(|(&ip, _)| ip).collect()
    }

    /// Copy with every HMI dropped, for scoring two-layer inference.
    pub fn without_hmi(&self) -> GroundTruth {
        GroundTruth {
            labels: self
                .labels
                .iter()
                .filter(|(_, l)| l.role != DeviceRole::Hmi)
                .map(|(&ip, &l)| (ip, l))
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let repr: BTreeMap<String, LabelRepr> = self
            .labels
            .iter()
            .map(|(ip, l)| {
                let v = match l.protocol {
                    None => LabelRepr::Bare(l.role),
                    Some(_) => LabelRepr::Tagged(*l),
                };
                (ip.to_string(), v)
            })
            .collect();
        serde_json::to_string_pretty(&repr).expect("truth serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: BTreeMap<String, LabelRepr> = serde_json::from_str(text)?;
        let mut labels = BTreeMap::new();
        for (ip, v) in repr {
            let ip: Ipv4Addr = ip
                .parse()
                .map_err(|_| Error::Config(format!("ground truth key {ip:?} is not an IPv4 address")))?;
            let label = match v {
                LabelRepr::Bare(role) => Label { role, protocol: None },
                LabelRepr::Tagged(l) => l,
            };
            labels.insert(ip, label);
        }
        Ok(GroundTruth { labels })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_both_value_shapes() {
        let text = r#"{"10.0.0.1": "master", "10.1.0.1": {"label": "field_device", "protocol": 20000}}"#;
        let t = GroundTruth::from_json(text).unwrap();
        assert_eq!(t.role(Ipv4Addr::new(10, 0, 0, 1)), Some(DeviceRole::Master));
        assert_eq!(t.labels[&Ipv4Addr::new(10, 1, 0, 1)].protocol, Some(20000));
        assert_eq!(GroundTruth::from_json(&t.to_json()).unwrap(), t);
    }

    #[test]
    fn rejects_bad_keys_and_labels() {
        assert!(GroundTruth::from_json(r#"{"nope": "master"}"#).is_err());
        assert!(GroundTruth::from_json(r#"{"10.0.0.1": "router"}"#).is_err());
    }

    #[test]
    fn hmi_filtering() {
        let mut t = GroundTruth::default();
        t.insert(Ipv4Addr::new(10, 0, 0, 10), DeviceRole::Hmi, None);
        t.insert(Ipv4Addr::new(10, 0, 0, 1), DeviceRole::Master, None);
        t.insert(Ipv4Addr::new(10, 9, 0, 1), DeviceRole::Peripheral, None);
        assert_eq!(t.scada_devices().len(), 2);
        assert_eq!(t.without_hmi().scada_devices().len(), 1);
    }
}
