use serde::Serialize;

use super::TopologyReport;
use crate::error::{Error, Result};
use crate::ingest::PacketRecord;
use crate::pipeline::{analyze, PipelineConfig};

#[derive(Debug, Clone, Serialize)]
pub struct StabilityResult {
    pub full: TopologyReport,
    /// One report per requested fraction, ascending.
    pub by_fraction: Vec<(f64, TopologyReport)>,
    /// Smallest fraction from which every larger requested fraction yields
    /// the full-trace topology.
    pub smallest_stable: Option<f64>,
}

/// Records in the first `fraction` of the trace's time span.
pub fn time_prefix(trace: &[PacketRecord], fraction: f64) -> &[PacketRecord] {
    let (Some(first), Some(last)) = (trace.first(), trace.last()) else {
        return trace;
    };
    if fraction >= 1.0 {
        return trace;
    }
    let cut = first.timestamp + fraction * (last.timestamp - first.timestamp);
    let end = trace.partition_point(|r| r.timestamp <= cut);
    &trace[..end]
}

/// Reruns the whole pipeline on time prefixes of a time-ordered trace.
/// `config.shards` bounds how many prefixes are analyzed at once.
pub fn prefix_stability(trace: &[PacketRecord], config: &PipelineConfig, fractions: &[f64]) -> Result<StabilityResult> {
    if let Some(bad) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::Config(format!("prefix fraction {bad} outside (0, 1]")));
    }
    let mut fractions = fractions.to_vec();
    fractions.sort_by(f64::total_cmp);
    fractions.dedup();

    // prefixes run concurrently, `config.shards` at a time, each single-sharded
    let workers = config.shards.max(1);
    let inner = PipelineConfig {
        shards: 1,
        ..config.clone()
    };
    let run = |f: f64| -> Result<TopologyReport> {
        let prefix = time_prefix(trace, f);
        Ok(analyze(prefix.iter().copied().map(Ok), &inner)?.report)
    };
    let mut jobs = vec![1.0];
    jobs.extend(&fractions);
    let mut results: Vec<Result<TopologyReport>> = Vec::with_capacity(jobs.len());
    for batch in jobs.chunks(workers) {
        std::thread::scope(|scope| {
            let handles: Vec<_> = batch.iter().map(|&f| scope.spawn(move || run(f))).collect();
            results.extend(handles.into_iter().map(|h| h.join().expect("stability worker panicked")));
        });
    }
    let mut results = results.into_iter();
    let full = results.next().expect("full run is always scheduled");
    let reports: Vec<_> = results.collect();
    let full = full?;
    let by_fraction = fractions
        .iter()
        .copied()
        .zip(reports)
        .map(|(f, r)| r.map(|r| (f, r)))
        .collect::<Result<Vec<_>>>()?;

    let mut smallest_stable = None;
    for (f, report) in by_fraction.iter().rev() {
        if report.same_topology(&full) {
            smallest_stable = Some(*f);
        } else {
            break;
        }
    }
    Ok(StabilityResult {
        full,
        by_fraction,
        smallest_stable,
    })
}
