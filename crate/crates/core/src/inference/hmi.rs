use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::segmentation::FtMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HmiInference {
    pub ip: Ipv4Addr,
    /// Summed `n * seg_size` from the master to `ip`.
    pub quantity: u128,
    pub tie: bool,
}

/// Picks the destination receiving the largest total quantity from `master`.
///
/// Field devices are not excluded. Ties go to the lowest ip and are flagged.
pub fn infer_hmi(master: Ipv4Addr, fts: &FtMap) -> Result<HmiInference> {
    let mut totals: BTreeMap<Ipv4Addr, u128> = BTreeMap::new();
    for s in fts.values().filter(|s| s.key.src_ip == master && s.key.dst_ip != master) {
        *totals.entry(s.key.dst_ip).or_default() += s.quantity();
    }
    let best = totals.values().copied().max().ok_or(Error::NoOutgoing(master))?;
    let mut winners = totals.iter().filter(|(_, &q)| q == best).map(|(&ip, _)| ip);
    let ip = winners.next().expect("max exists");
    Ok(HmiInference {
        ip,
        quantity: best,
        tie: winners.next().is_some(),
    })
}
