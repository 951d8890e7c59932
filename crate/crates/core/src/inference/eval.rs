use std::collections::BTreeSet;
use std::net::Ipv4Addr;

use serde::Serialize;

use super::TopologyReport;
use crate::error::{Error, Result};
use crate::synth::GroundTruth;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub true_positives: usize,
    pub claimed: usize,
    pub actual: usize,
    pub false_positives: BTreeSet<Ipv4Addr>,
    pub missed: BTreeSet<Ipv4Addr>,
}

/// Precision/recall of the claimed SCADA devices (field devices, masters and
/// the HMI when inferred) against every device labeled as SCADA.
pub fn evaluate(report: &TopologyReport, truth: &GroundTruth) -> Result<Evaluation> {
    if truth.is_empty() {
        return Err(Error::EmptyTruth);
    }
    let actual = truth.scada_devices();
    let claimed = report.scada_devices();
    Ok(score_sets(&claimed, &actual))
}

pub(crate) fn score_sets(claimed: &BTreeSet<Ipv4Addr>, actual: &BTreeSet<Ipv4Addr>) -> Evaluation {
    let tp = claimed.intersection(actual).count();
    let precision = if claimed.is_empty() { 0.0 } else { tp as f64 / claimed.len() as f64 };
    let recall = if actual.is_empty() { 0.0 } else { tp as f64 / actual.len() as f64 };
    let f_score = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Evaluation {
        precision,
        recall,
        f_score,
        true_positives: tp,
        claimed: claimed.len(),
        actual: actual.len(),
        false_positives: claimed.difference(actual).copied().collect(),
        missed: actual.difference(claimed).copied().collect(),
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn ips(range: std::ops::Range<u32>) -> BTreeSet<Ipv4Addr> {
        range.map(|i| Ipv4Addr::from(0x0a00_0000 + i)).collect()
    }

    #[test]
    fn perfect_match() {
        let e = score_sets(&ips(0..50), &ips(0..50));
        assert_eq!((e.precision, e.recall, e.f_score), (1.0, 1.0, 1.0));
    }

    #[test]
    fn injected_false_positive() {
        // 49 true devices found plus one extra claim
        let mut claimed = ips(0..49);
        claimed.insert(Ipv4Addr::new(192, 168, 0, 1));
        let e = score_sets(&claimed, &ips(0..49));
        assert_eq!(e.precision, 49.0 / 50.0);
        assert_eq!(e.recall, 1.0);
    }

    #[test]
    fn missed_hmis_shape() {
        // 50 of 53 found with no false claims: precision 1, recall 0.9434, F 0.9709
        let e = score_sets(&ips(0..50), &ips(0..53));
        assert_eq!(e.precision, 1.0);
        assert!((e.recall - 0.9434).abs() < 1e-4);
        assert!((e.f_score - 0.9709).abs() < 1e-4);
        assert_eq!(e.missed.len(), 3);
    }

    proptest! {
        #[test]
        fn f_is_harmonic_mean(claimed in prop::collection::btree_set(0u32..40, 0..30),
                              actual in prop::collection::btree_set(0u32..40, 1..30)) {
            let c: BTreeSet<_> = claimed.iter().map(|&i| Ipv4Addr::from(i)).collect();
            let a: BTreeSet<_> = actual.iter().map(|&i| Ipv4Addr::from(i)).collect();
            let e = score_sets(&c, &a);
            prop_assert!((0.0..=1.0).contains(&e.f_score));
            if e.precision + e.recall > 0.0 {
                let f = 2.0 * e.precision * e.recall / (e.precision + e.recall);
                prop_assert!((e.f_score - f).abs() < 1e-15);
            }
            prop_assert_eq!(e.f_score == 1.0, c == a);
        }
    }
}
