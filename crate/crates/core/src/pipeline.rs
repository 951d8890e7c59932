//! End-to-end analysis: filter, segment, aggregate, rank, infer.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::features::{rank, FeatureConfig, PortUsageIndex, RankedFt};
use crate::inference::{run_algorithm1, InferenceConfig, TopologyReport};
use crate::ingest::{filter_packets, FilterConfig, FilterCounts, PacketRecord};
use crate::segmentation::{segment_and_aggregate, FtMap, SegmentationCounts, DEFAULT_T_COMM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub t_comm: f64,
    /// `None` keeps every packet.
    pub filter: Option<FilterConfig>,
    pub features: FeatureConfig,
    pub inference: InferenceConfig,
    /// Segmentation worker threads; does not affect results.
    #[serde(skip)]
    pub shards: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            t_comm: DEFAULT_T_COMM,
            filter: None,
            features: FeatureConfig::default(),
            inference: InferenceConfig::default(),
            shards: 1,
        }
    }
}

pub struct Analysis {
    pub fts: FtMap,
    pub ranked: Vec<RankedFt<f64>>,
    pub report: TopologyReport,
    pub counts: SegmentationCounts,
    pub filter_counts: Option<FilterCounts>,
}

pub fn analyze<I>(records: I, config: &PipelineConfig) -> Result<Analysis>
where
    I: IntoIterator<Item = Result<PacketRecord>>,
{
    analyze_with_progress(records, config, |_| {})
}

/// Like [`analyze`], calling `progress` with the running packet count.
pub fn analyze_with_progress<I>(records: I, config: &PipelineConfig, progress: impl FnMut(u64)) -> Result<Analysis>
where
    I: IntoIterator<Item = Result<PacketRecord>>,
{
    config.inference.validate()?;
    let (fts, counts, filter_counts) = aggregate(records, config, progress)?;
    let (ranked, mut report) = rank_and_infer(&fts, config)?;
    report.metrics.insert("packets".into(), counts.packets.into());
    report.metrics.insert("segments".into(), counts.segments.into());
    report.metrics.insert("fts".into(), counts.fts.into());
    report.metrics.insert("devices".into(), (report.evidence.len() as u64).into());
    if let Some(fc) = filter_counts {
        report.metrics.insert("filtered_out".into(), fc.dropped().into());
    }
    Ok(Analysis {
        fts,
        ranked,
        report,
        counts,
        filter_counts,
    })
}

/// The first pass alone: optional filtering, segmentation and ft aggregation.
pub fn aggregate<I>(
    records: I,
    config: &PipelineConfig,
    progress: impl FnMut(u64),
) -> Result<(FtMap, SegmentationCounts, Option<FilterCounts>)>
where
    I: IntoIterator<Item = Result<PacketRecord>>,
{
    match &config.filter {
        Some(filter) => {
            let mut filtered = filter_packets(records, filter);
            let (fts, counts) = segment_and_aggregate(&mut filtered, config.t_comm, config.shards, progress)?;
            Ok((fts, counts, Some(filtered.counts())))
        }
        None => {
            let (fts, counts) = segment_and_aggregate(records, config.t_comm, config.shards, progress)?;
            Ok((fts, counts, None))
        }
    }
}

pub fn rank_and_infer(fts: &FtMap, config: &PipelineConfig) -> Result<(Vec<RankedFt<f64>>, TopologyReport)> {
    let index = PortUsageIndex::build(fts.keys());
    let ranked = rank::<f64>(fts, &index, &config.features)?;
    let report = run_algorithm1(fts, &ranked, &config.inference)?;
    Ok((ranked, report))
}
