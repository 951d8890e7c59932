use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use scadascope_core::features::DEFAULT_PR_CAP;
use scadascope_core::segmentation::DEFAULT_T_COMM;
use scadascope_core::{FeatureConfig, FilterConfig, InferenceConfig, LogBase, PipelineConfig, PuMode};

#[derive(Debug, Parser)]
#[command(name = "scadascope", version, about = "Passive SCADA fingerprinting from packet headers")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Silence gap (seconds) that ends a communication segment.
    #[arg(long, global = true, default_value_t = DEFAULT_T_COMM)]
    pub t_comm: f64,
    /// Drop common service ports and non-TCP packets before segmentation.
    #[arg(long, global = true)]
    pub filter: bool,
    /// Extra ports to drop (comma separated); implies --filter.
    #[arg(long, global = true, value_delimiter = ',')]
    pub filter_ports: Vec<u16>,
    /// Leave the eleven default service ports out of the filter list.
    #[arg(long, global = true)]
    pub no_default_filter: bool,
    /// Sort the whole input in memory instead of failing on disorder beyond
    /// the one second reorder window.
    #[arg(long, global = true)]
    pub force_sort: bool,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// No progress output; only errors are logged.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    /// Scenario seed (synth only).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Dot,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic trace.
    Synth(SynthArgs),
    /// Ingestion statistics for one or more traces.
    Inspect(InspectArgs),
    /// Rank flow types and print the top of the table.
    Rank(RankArgs),
    /// Infer SCADA ports, field devices, masters and optionally the HMI.
    Analyze(AnalyzeArgs),
    /// Score a report against ground truth labels.
    Eval(EvalArgs),
    /// Rerun the analysis on growing time prefixes of a trace.
    Stability(StabilityArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scenario JSON file.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub scenario: Option<PathBuf>,
    /// Built-in scenario: dataset1, dataset2, month or office.
    #[arg(long)]
    pub preset: Option<String>,
    /// Override the scenario duration (seconds).
    #[arg(long)]
    pub duration: Option<f64>,
    /// Packet records as JSON lines.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a classic pcap.
    #[arg(long)]
    pub pcap: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// pcap or JSON-lines traces, read in order as one stream.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FeatureArgs {
    /// Periodicity assigned to fts with zero inter-arrival variance.
    #[arg(long, default_value_t = DEFAULT_PR_CAP)]
    pub pr_cap: f64,
    /// Logarithm in the durability feature: e or 10.
    #[arg(long, default_value = "e")]
    pub log_base: LogBase,
    #[arg(long, value_enum, default_value_t = PuModeArg::RoleSensitive)]
    pub pu_mode: PuModeArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PuModeArg {
    RoleSensitive,
    RoleAgnostic,
}

impl FeatureArgs {
    pub fn config(&self) -> FeatureConfig {
        FeatureConfig {
            pr_cap: self.pr_cap,
            log_base: self.log_base,
            pu_mode: match self.pu_mode {
                PuModeArg::RoleSensitive => PuMode::RoleSensitive,
                PuModeArg::RoleAgnostic => PuMode::RoleAgnostic,
            },
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct InferenceArgs {
    /// How many SCADA protocols to look for.
    #[arg(long, default_value_t = 1)]
    pub num_protocols: usize,
    /// Also infer the HMI behind the master.
    #[arg(long)]
    pub three_layer: bool,
    /// Field devices have fewer distinct peers than this.
    #[arg(long, default_value_t = 5)]
    pub fd_degree: usize,
    /// Field devices spend more than this share of their segments on the
    /// SCADA port.
    #[arg(long, default_value_t = 0.5)]
    pub scada_fraction: f64,
    /// Segmentation worker threads (default: all, capped by SCADASCOPE_THREADS).
    #[arg(long)]
    pub shards: Option<usize>,
}

impl InferenceArgs {
    pub fn config(&self) -> InferenceConfig {
        InferenceConfig {
            num_scada_protocols: self.num_protocols,
            fd_degree_threshold: self.fd_degree,
            scada_fraction_threshold: self.scada_fraction,
            three_layer: self.three_layer,
        }
    }
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Rows to print.
    #[arg(long, default_value_t = 20)]
    pub top: usize,
    /// Window for the "N of top-K use port P" summary.
    #[arg(long, default_value_t = 1000)]
    pub summary_top: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub shards: Option<usize>,
    #[command(flatten)]
    pub features: FeatureArgs,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Report destination (JSON); stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the topology as a Graphviz graph.
    #[arg(long)]
    pub dot: Option<PathBuf>,
    #[command(flatten)]
    pub features: FeatureArgs,
    #[command(flatten)]
    pub inference: InferenceArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Report written by `analyze`.
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Score against the labels minus every HMI.
    #[arg(long)]
    pub exclude_hmi: bool,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Prefix fractions of the trace's time span.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.01,0.02,0.04,0.06,0.08,0.1,0.15,0.2,0.3,0.5,0.75,1"
    )]
    pub fractions: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub features: FeatureArgs,
    #[command(flatten)]
    pub inference: InferenceArgs,
}

impl GlobalArgs {
    /// Effective packet filter; `default_on` applies when no filter flag is given.
    pub fn filter_config(&self, default_on: bool) -> Option<FilterConfig> {
        let requested = self.filter || !self.filter_ports.is_empty();
        if !requested && !default_on {
            return None;
        }
        let mut cfg = if self.no_default_filter {
            FilterConfig {
                service_ports: Default::default(),
                drop_non_tcp: true,
            }
        } else {
            FilterConfig::default()
        };
        cfg.service_ports.extend(&self.filter_ports);
        Some(cfg)
    }

    pub fn pipeline(&self, features: FeatureConfig, inference: InferenceConfig, shards: usize) -> PipelineConfig {
        PipelineConfig {
            t_comm: self.t_comm,
            filter: self.filter_config(false),
            features,
            inference,
            shards,
        }
    }
}
