//! Passive fingerprinting of SCADA devices from packet headers.
//!
//! Packets are cut into communication segments per conversation, segments
//! with the same endpoints and size form flow types (fts), and every ft is
//! scored on five features whose normalized product ranks it. The top of the
//! ranking reveals the SCADA port; field devices, masters and the HMI follow
//! from who talks on it and how much.
//!
//! ```
//! use scadascope_core::{analyze, synth, PipelineConfig};
//!
//! let trace = synth::generate(&synth::ScenarioConfig::dataset1_like(1800.0, 1)).unwrap();
//! let analysis = analyze(trace.records.into_iter().map(Ok), &PipelineConfig::default()).unwrap();
//! assert_eq!(analysis.report.protocols[0].scada_port, 20000);
//! ```

pub mod error;
pub mod features;
pub mod inference;
pub mod ingest;
pub mod pipeline;
pub mod report;
pub mod scalar;
pub mod segmentation;
pub mod synth;

pub use error::{Error, Result};
pub use features::{
    rank, write_ranking_csv, FeatureConfig, FeatureVector, Features, LogBase, PortUsageIndex, PuMode, RankedFt,
};
pub use inference::{
    evaluate, prefix_stability, run_algorithm1, Evaluation, InferenceConfig, ProtocolEntry, ReportStatus,
    StabilityResult, TopologyReport,
};
pub use ingest::{FilterConfig, PacketRecord, Transport};
pub use pipeline::{aggregate, analyze, analyze_with_progress, rank_and_infer, Analysis, PipelineConfig};
pub use scalar::Scalar;
pub use segmentation::{CommunicationSegment, ConversationKey, FtKey, FtMap, FtStats, Segmenter};

pub type Features64 = Features<f64>;
pub type Features32 = Features<f32>;
pub type FeatureVector64 = FeatureVector<f64>;
pub type FeatureVector32 = FeatureVector<f32>;
pub type RankedFt64 = RankedFt<f64>;
pub type RankedFt32 = RankedFt<f32>;
