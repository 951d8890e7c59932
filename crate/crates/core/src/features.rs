//! The five ranking features and the product score.
//!
//! | feature | raw value |
//! |---|---|
//! | periodicity | `mean(iat) / var(iat)` (population variance) |
//! | durability | `sum(iat) [hours] * log(n)` |
//! | complexity gap | `max(a/b, b/a)`, `a`, `b` = distinct ports used by src / dst ip |
//! | service popularity | `max(a/b, b/a)`, `a`, `b` = distinct ip pairs seen on src / dst port |
//! | segment size | `seg_size / max(seg_size)` |
//!
//! Each raw feature is divided by its maximum over the dataset and the score
//! is the product of the five normalized values.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{self, Write};
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::segmentation::{FtKey, FtMap, FtStats};

pub const DEFAULT_PR_CAP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    E,
    #[serde(rename = "10")]
    Ten,
}

impl std::str::FromStr for LogBase {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "e" => Ok(LogBase::E),
            "10" => Ok(LogBase::Ten),
            other => Err(format!("log base must be `e` or `10`, got {other:?}")),
        }
    }
}

/// How service popularity counts `(src_ip, dst_ip)` pairs per port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PuMode {
    /// Pairs where the port is on the side given by its position in the ft.
    #[default]
    RoleSensitive,
    /// Pairs where the port appears on either side.
    RoleAgnostic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Periodicity reported for an ft whose inter-arrival times have zero variance.
    pub pr_cap: f64,
    pub log_base: LogBase,
    pub pu_mode: PuMode,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            pr_cap: DEFAULT_PR_CAP,
            log_base: LogBase::E,
            pu_mode: PuMode::RoleSensitive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Src,
    Dst,
}

/// Global port usage tables, built once over the whole ft set.
#[derive(Debug, Clone, Default)]
pub struct PortUsageIndex {
    pub ports_by_ip: BTreeMap<Ipv4Addr, BTreeSet<u16>>,
    pub pairs_by_port_role: HashMap<(u16, Role), BTreeSet<(Ipv4Addr, Ipv4Addr)>>,
    pairs_by_port: HashMap<u16, BTreeSet<(Ipv4Addr, Ipv4Addr)>>,
}

impl PortUsageIndex {
    pub fn build<'a, I>(keys: I) -> Self
    where
        I: IntoIterator<Item = &'a FtKey>,
    {
        let mut idx = PortUsageIndex::default();
        for k in keys {
            idx.ports_by_ip.entry(k.src_ip).or_default().insert(k.src_port);
            idx.ports_by_ip.entry(k.dst_ip).or_default().insert(k.dst_port);
            let pair = (k.src_ip, k.dst_ip);
            idx.pairs_by_port_role.entry((k.src_port, Role::Src)).or_default().insert(pair);
            idx.pairs_by_port_role.entry((k.dst_port, Role::Dst)).or_default().insert(pair);
            idx.pairs_by_port.entry(k.src_port).or_default().insert(pair);
            idx.pairs_by_port.entry(k.dst_port).or_default().insert(pair);
        }
        idx
    }

    pub fn port_count(&self, ip: Ipv4Addr) -> Option<usize> {
        self.ports_by_ip.get(&ip).map(BTreeSet::len)
    }

    pub fn pair_count(&self, port: u16, role: Role, mode: PuMode) -> usize {
        match mode {
            PuMode::RoleSensitive => self.pairs_by_port_role.get(&(port, role)).map_or(0, BTreeSet::len),
            PuMode::RoleAgnostic => self.pairs_by_port.get(&port).map_or(0, BTreeSet::len),
        }
    }
}

/// One value per feature.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Features<S> {
    pub periodicity: S,
    pub durability: S,
    pub complexity_gap: S,
    pub popularity: S,
    pub size: S,
}

impl<S: Scalar> Features<S> {
    fn zip(self, other: Self, op: impl Fn(S, S) -> S) -> Self {
        Features {
            periodicity: op(self.periodicity, other.periodicity),
            durability: op(self.durability, other.durability),
            complexity_gap: op(self.complexity_gap, other.complexity_gap),
            popularity: op(self.popularity, other.popularity),
            size: op(self.size, other.size),
        }
    }

    pub fn product(&self) -> S {
        self.periodicity * self.durability * self.complexity_gap * self.popularity * self.size
    }

    pub fn as_array(&self) -> [S; 5] {
        [
            self.periodicity,
            self.durability,
            self.complexity_gap,
            self.popularity,
            self.size,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeatureVector<S> {
    pub raw: Features<S>,
    pub normalized: Features<S>,
    /// Product of the normalized features.
    pub score: S,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankedFt<S> {
    pub key: FtKey,
    pub n: u64,
    pub features: FeatureVector<S>,
}

pub fn compute_pr<S: Scalar>(stats: &FtStats, cap: S) -> S {
    if stats.iat.len() < 2 {
        return S::zero();
    }
    let len = S::from_count(stats.iat.len() as u64);
    let values = stats.iat.iter().map(|&v| S::from_f64_lossy(v));
    let mean = values.clone().fold(S::zero(), |acc, v| acc + v) / len;
    let var = values
        .map(|v| (v - mean) * (v - mean))
        .fold(S::zero(), |acc, v| acc + v)
        / len;
    if var == S::zero() {
        cap
    } else {
        mean / var
    }
}

pub fn compute_dr<S: Scalar>(stats: &FtStats, base: LogBase) -> S {
    if stats.n <= 1 {
        return S::zero();
    }
    let seconds = stats
        .iat
        .iter()
        .fold(S::zero(), |acc, &v| acc + S::from_f64_lossy(v));
    let hours = seconds / S::from_f64_lossy(3600.0);
    let n = S::from_count(stats.n);
    let log_n = match base {
        LogBase::E => n.ln(),
        LogBase::Ten => n.log10(),
    };
    hours * log_n
}

fn symmetric_ratio<S: Scalar>(a: usize, b: usize) -> S {
    let (a, b) = (S::from_count(a as u64), S::from_count(b as u64));
    let r = a / b;
    if r < S::one() {
        r.recip()
    } else {
        r
    }
}

pub fn compute_cr<S: Scalar>(ft: &FtKey, index: &PortUsageIndex) -> Result<S> {
    let lookup = |ip| {
        index
            .port_count(ip)
            .ok_or_else(|| Error::Consistency(format!("ip {ip} missing from the port usage index")))
    };
    Ok(symmetric_ratio(lookup(ft.src_ip)?, lookup(ft.dst_ip)?))
}

pub fn compute_ur<S: Scalar>(ft: &FtKey, index: &PortUsageIndex, mode: PuMode) -> Result<S> {
    let a = index.pair_count(ft.src_port, Role::Src, mode);
    let b = index.pair_count(ft.dst_port, Role::Dst, mode);
    if a == 0 || b == 0 {
        return Err(Error::Consistency(format!("ports of {ft} missing from the port usage index")));
    }
    Ok(symmetric_ratio(a, b))
}

pub fn compute_sr<S: Scalar>(ft: &FtKey, max_seg_size: u64) -> S {
    S::from_count(ft.seg_size) / S::from_count(max_seg_size)
}

pub fn raw_features<S: Scalar>(
    stats: &FtStats,
    index: &PortUsageIndex,
    max_seg_size: u64,
    config: &FeatureConfig,
) -> Result<Features<S>> {
    Ok(Features {
        periodicity: compute_pr(stats, S::from_f64_lossy(config.pr_cap)),
        durability: compute_dr(stats, config.log_base),
        complexity_gap: compute_cr(&stats.key, index)?,
        popularity: compute_ur(&stats.key, index, config.pu_mode)?,
        size: compute_sr(&stats.key, max_seg_size),
    })
}

/// Scores every ft and sorts by score, descending.
///
/// Ties fall back to normalized periodicity (descending) and then the ft key.
pub fn rank<S: Scalar>(
    fts: &FtMap,
    index: &PortUsageIndex,
    config: &FeatureConfig,
) -> Result<Vec<RankedFt<S>>> {
    let Some(max_seg_size) = fts.keys().map(|k| k.seg_size).max() else {
        return Ok(Vec::new());
    };
    let raws = fts
        .values()
        .map(|s| raw_features::<S>(s, index, max_seg_size, config).map(|r| (s, r)))
        .collect::<Result<Vec<_>>>()?;
    let maxima = raws
        .iter()
        .fold(Features::default(), |m, (_, r)| m.zip(*r, S::max));
    let mut ranked: Vec<RankedFt<S>> = raws
        .into_iter()
        .map(|(stats, raw)| {
            let normalized = raw.zip(maxima, |v, max| if max > S::zero() { v / max } else { S::zero() });
            RankedFt {
                key: stats.key,
                n: stats.n,
                features: FeatureVector {
                    raw,
                    normalized,
                    score: normalized.product(),
                },
            }
        })
        .collect();
    sort_ranked(&mut ranked);
    Ok(ranked)
}

pub fn sort_ranked<S: Scalar>(ranked: &mut [RankedFt<S>]) {
    let cmp = |a: S, b: S| a.partial_cmp(&b).unwrap_or(std::cmp::Ordering::Equal);
    ranked.sort_by(|x, y| {
        cmp(y.features.score, x.features.score)
            .then(cmp(y.features.normalized.periodicity, x.features.normalized.periodicity))
            .then(x.key.cmp(&y.key))
    });
}

pub const RANKING_CSV_HEADER: &str = "rank,src_ip,src_port,dst_ip,dst_port,seg_size,pR_n,dR_n,cR_n,uR_n,sR_n,f";

/// Writes the top `top` entries (all when `None`) as CSV.
pub fn write_ranking_csv<S: Scalar, W: Write>(
    ranked: &[RankedFt<S>],
    top: Option<usize>,
    out: &mut W,
) -> io::Result<()> {
    writeln!(out, "{RANKING_CSV_HEADER}")?;
    let take = top.unwrap_or(ranked.len()).min(ranked.len());
    for (i, r) in ranked[..take].iter().enumerate() {
        let n = &r.features.normalized;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            i + 1,
            r.key.src_ip,
            r.key.src_port,
            r.key.dst_ip,
            r.key.dst_port,
            r.key.seg_size,
            n.periodicity,
            n.durability,
            n.complexity_gap,
            n.popularity,
            n.size,
            r.features.score
        )?;
    }
    Ok(())
}
