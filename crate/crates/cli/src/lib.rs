//! The `scadascope` command line.

pub mod args;
pub mod input;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::net::Ipv4Addr;
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use serde::Serialize;
use serde_json::json;

use scadascope_core::ingest::{filter_packets, write_records};
use scadascope_core::report::to_dot;
use scadascope_core::synth::{self, GroundTruth, ScenarioConfig};
use scadascope_core::{
    aggregate, analyze_with_progress, evaluate, prefix_stability, rank, write_ranking_csv, ConversationKey,
    PipelineConfig, PortUsageIndex, RankedFt64, ReportStatus, TopologyReport,
};

use args::{AnalyzeArgs, Cli, Command, EvalArgs, Format, GlobalArgs, InspectArgs, RankArgs, StabilityArgs, SynthArgs};
use input::{load_all, open_inputs, ordered_stream, InputSummary};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_LOW_CONFIDENCE: u8 = 3;

pub const THREADS_ENV: &str = "SCADASCOPE_THREADS";

const PROGRESS_EVERY: u64 = 1_000_000;

/// Reproducibility envelope embedded in every report.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub inputs: Vec<InputSummary>,
    pub config: serde_json::Value,
    pub counts: BTreeMap<String, u64>,
    /// Wall-clock seconds; the only field that differs between identical runs.
    pub duration_secs: f64,
}

impl RunManifest {
    fn new(command: &str, inputs: Vec<InputSummary>, config: serde_json::Value, started: Instant) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            inputs,
            config,
            counts: BTreeMap::new(),
            duration_secs: started.elapsed().as_secs_f64(),
        }
    }
}

/// Worker threads: `requested` (or every core), capped by `SCADASCOPE_THREADS`.
pub fn thread_budget(requested: Option<usize>) -> usize {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    let want = requested.unwrap_or(cores).max(1);
    cap.map_or(want, |c| want.min(c))
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn progress(quiet: bool) -> impl FnMut(u64) {
    move |n| {
        if !quiet && n % PROGRESS_EVERY == 0 {
            log::info!("{n} records");
        }
    }
}

fn validate_global(g: &GlobalArgs) -> Result<()> {
    if !(g.t_comm > 0.0 && g.t_comm.is_finite()) {
        return Err(anyhow!("--t-comm must be a positive number of seconds"));
    }
    Ok(())
}

/// Runs one parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> Result<u8> {
    validate_global(&cli.global)?;
    let g = &cli.global;
    match &cli.command {
        Command::Synth(a) => cmd_synth(g, a),
        Command::Inspect(a) => cmd_inspect(g, a),
        Command::Rank(a) => cmd_rank(g, a),
        Command::Analyze(a) => cmd_analyze(g, a),
        Command::Eval(a) => cmd_eval(g, a),
        Command::Stability(a) => cmd_stability(g, a),
    }
}

pub fn cmd_synth(g: &GlobalArgs, a: &SynthArgs) -> Result<u8> {
    let mut scenario = match (&a.scenario, &a.preset) {
        (Some(path), _) => ScenarioConfig::load(path)?,
        (None, Some(name)) => ScenarioConfig::preset(name, 1).ok_or_else(|| {
            anyhow!("unknown preset {name:?}; choose one of {}", ScenarioConfig::PRESETS.join(", "))
        })?,
        (None, None) => return Err(anyhow!("give --scenario or --preset")),
    };
    if let Some(seed) = g.seed {
        scenario.seed = seed;
    }
    if let Some(d) = a.duration {
        scenario.duration = d;
    }
    let trace = synth::generate(&scenario)?;
    write_records(&trace.records, &a.out)?;
    if let Some(p) = &a.pcap {
        synth::write_pcap(&trace.records, p)?;
    }
    if let Some(p) = &a.truth {
        trace.truth.save(p)?;
    }
    if !g.quiet {
        eprintln!(
            "{} records over {:.0} s, {} labeled devices ({} SCADA), seed {}",
            trace.records.len(),
            scenario.duration,
            trace.truth.labels.len(),
            trace.truth.scada_devices().len(),
            scenario.seed
        );
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Default, Serialize)]
struct InspectStats {
    records: u64,
    first_ts: Option<f64>,
    last_ts: Option<f64>,
    transports: BTreeMap<String, u64>,
    devices: usize,
    conversations: usize,
    filter: Option<scadascope_core::ingest::FilterCounts>,
    inputs: Vec<InputSummary>,
}

pub fn cmd_inspect(g: &GlobalArgs, a: &InspectArgs) -> Result<u8> {
    let (stream, summaries) = open_inputs(&a.inputs)?;
    let records = ordered_stream(stream, g.force_sort)?;
    let filter = g.filter_config(true);
    let mut stats = InspectStats::default();
    let mut devices = BTreeSet::<Ipv4Addr>::new();
    let mut conversations = BTreeSet::<ConversationKey>::new();
    let mut count = |rec: &scadascope_core::PacketRecord| {
        stats.records += 1;
        stats.first_ts.get_or_insert(rec.timestamp);
        stats.last_ts = Some(rec.timestamp);
        *stats.transports.entry(rec.transport.as_str().to_owned()).or_default() += 1;
        devices.insert(rec.src_ip);
        devices.insert(rec.dst_ip);
        conversations.insert(ConversationKey::of(rec));
    };
    let mut kept = 0u64;
    match &filter {
        Some(cfg) => {
            let mut filtered = filter_packets(records.inspect(|r| {
                if let Ok(rec) = r {
                    count(rec)
                }
            }), cfg);
            for r in filtered.by_ref() {
                r?;
                kept += 1;
            }
            stats.filter = Some(filtered.counts());
        }
        None => {
            for r in records {
                count(&r?);
                kept += 1;
            }
        }
    }
    stats.devices = devices.len();
    stats.conversations = conversations.len();
    stats.inputs = summaries.borrow().clone();

    if g.format == Some(Format::Json) {
        write_output(None, &(serde_json::to_string_pretty(&stats)? + "\n"))?;
        return Ok(EXIT_OK);
    }
    let mut text = String::new();
    for s in &stats.inputs {
        text += &format!("{}: {:?}, {} bytes, {} records, sha256 {}\n", s.path.display(), s.format, s.bytes, s.records, s.sha256);
        if let Some(p) = &s.pcap {
            text += &format!(
                "  frames {}, non-IP skipped {}, malformed skipped {}{}\n",
                p.frames,
                p.skipped_non_ip,
                p.skipped_malformed,
                if p.truncated_tail { ", truncated tail" } else { "" }
            );
        }
    }
    let span = match (stats.first_ts, stats.last_ts) {
        (Some(a), Some(b)) => b - a,
        _ => 0.0,
    };
    text += &format!(
        "records {}, span {:.3} s, devices {}, conversations {}\n",
        stats.records, span, stats.devices, stats.conversations
    );
    for (t, n) in &stats.transports {
        text += &format!("  {t}: {n}\n");
    }
    if let Some(fc) = &stats.filter {
        let pct = if fc.input() == 0 { 0.0 } else { 100.0 * kept as f64 / fc.input() as f64 };
        text += &format!(
            "filter kept {} ({pct:.2}%), dropped {} on service ports, {} non-TCP\n",
            fc.kept, fc.dropped_service_port, fc.dropped_non_tcp
        );
    }
    write_output(None, &text)?;
    Ok(EXIT_OK)
}

/// The port touched by the most of the first `k` entries; ties go to the
/// lower port.
pub fn dominant_port(ranked: &[RankedFt64], k: usize) -> Option<(u16, usize)> {
    let mut counts: BTreeMap<u16, usize> = BTreeMap::new();
    for r in ranked.iter().take(k) {
        *counts.entry(r.key.src_port).or_default() += 1;
        if r.key.dst_port != r.key.src_port {
            *counts.entry(r.key.dst_port).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
}

#[derive(Serialize)]
struct RankRow<'a> {
    rank: usize,
    #[serde(flatten)]
    entry: &'a RankedFt64,
}

pub fn cmd_rank(g: &GlobalArgs, a: &RankArgs) -> Result<u8> {
    let started = Instant::now();
    let shards = thread_budget(a.shards);
    let config = g.pipeline(a.features.config(), Default::default(), shards);
    let (stream, summaries) = open_inputs(&a.inputs)?;
    let records = ordered_stream(stream, g.force_sort)?;
    let (fts, counts, filter_counts) = aggregate(records, &config, progress(g.quiet))?;
    let index = PortUsageIndex::build(fts.keys());
    let ranked = rank::<f64>(&fts, &index, &config.features)?;
    if ranked.is_empty() {
        log::warn!("no flow types in the input; the ranking is empty");
    }
    let k = a.summary_top.min(ranked.len());
    let summary = dominant_port(&ranked, k).map(|(port, n)| format!("{n} of top-{k} use port {port}"));

    match g.format.unwrap_or(Format::Csv) {
        Format::Json => {
            let mut manifest = RunManifest::new("rank", summaries.borrow().clone(), json!(config), started);
            manifest.counts.insert("packets".into(), counts.packets);
            manifest.counts.insert("segments".into(), counts.segments);
            manifest.counts.insert("fts".into(), counts.fts);
            if let Some(fc) = filter_counts {
                manifest.counts.insert("filtered_out".into(), fc.dropped());
            }
            let rows: Vec<RankRow> = ranked
                .iter()
                .take(a.top)
                .enumerate()
                .map(|(i, entry)| RankRow { rank: i + 1, entry })
                .collect();
            let doc = json!({ "manifest": manifest, "summary": summary, "ranking": rows });
            write_output(a.out.as_deref(), &(serde_json::to_string_pretty(&doc)? + "\n"))?;
        }
        Format::Csv => {
            let mut buf = Vec::new();
            write_ranking_csv(&ranked, Some(a.top), &mut buf)?;
            write_output(a.out.as_deref(), std::str::from_utf8(&buf)?)?;
        }
        Format::Dot => return Err(anyhow!("rank writes csv or json, not dot")),
    }
    if let Some(s) = summary {
        eprintln!("{s}");
    }
    Ok(EXIT_OK)
}

fn report_document(manifest: &RunManifest, report: &TopologyReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(&json!({ "manifest": manifest, "report": report }))? + "\n")
}

fn exit_for(status: ReportStatus) -> u8 {
    match status {
        ReportStatus::Complete => EXIT_OK,
        ReportStatus::LowConfidence | ReportStatus::Partial => EXIT_LOW_CONFIDENCE,
    }
}

pub fn cmd_analyze(g: &GlobalArgs, a: &AnalyzeArgs) -> Result<u8> {
    let started = Instant::now();
    let shards = thread_budget(a.inference.shards);
    let config = g.pipeline(a.features.config(), a.inference.config(), shards);
    config.inference.validate()?;
    let (stream, summaries) = open_inputs(&a.inputs)?;
    let records = ordered_stream(stream, g.force_sort)?;
    let analysis = analyze_with_progress(records, &config, progress(g.quiet))?;
    let report = &analysis.report;
    for w in &report.warnings {
        log::warn!("{w}");
    }

    let mut manifest = RunManifest::new("analyze", summaries.borrow().clone(), json!(config), started);
    manifest.counts.insert("packets".into(), analysis.counts.packets);
    manifest.counts.insert("segments".into(), analysis.counts.segments);
    manifest.counts.insert("fts".into(), analysis.counts.fts);
    if let Some(fc) = analysis.filter_counts {
        manifest.counts.insert("filtered_out".into(), fc.dropped());
    }

    let dot = to_dot(report, &analysis.fts);
    if let Some(p) = &a.dot {
        fs::write(p, &dot).with_context(|| format!("cannot write {}", p.display()))?;
    }
    match g.format.unwrap_or(Format::Json) {
        Format::Json => write_output(a.out.as_deref(), &report_document(&manifest, report)?)?,
        Format::Dot => {
            if let Some(p) = &a.out {
                fs::write(p, report_document(&manifest, report)?)
                    .with_context(|| format!("cannot write {}", p.display()))?;
            }
            write_output(None, &dot)?;
        }
        Format::Csv => return Err(anyhow!("analyze writes json or dot, not csv")),
    }
    if !g.quiet {
        for p in &report.protocols {
            eprintln!(
                "port {}: {} field devices, masters {}",
                p.scada_port,
                p.field_devices.len(),
                join(&p.master_servers)
            );
        }
        if let Some(h) = report.hmi {
            eprintln!("hmi {h}");
        }
        eprintln!("status {:?}", report.status);
    }
    Ok(exit_for(report.status))
}

fn join(ips: &BTreeSet<Ipv4Addr>) -> String {
    if ips.is_empty() {
        return "-".into();
    }
    ips.iter().map(Ipv4Addr::to_string).collect::<Vec<_>>().join(",")
}

/// Reads a report file written by `analyze`, or a bare report object.
pub fn load_report(path: &Path) -> Result<TopologyReport> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("{} is not JSON", path.display()))?;
    if let Some(inner) = value.get_mut("report") {
        value = inner.take();
    }
    serde_json::from_value(value).with_context(|| format!("{} does not hold a topology report", path.display()))
}

pub fn cmd_eval(g: &GlobalArgs, a: &EvalArgs) -> Result<u8> {
    let report = load_report(&a.report)?;
    let mut truth = GroundTruth::load(&a.truth)?;
    if a.exclude_hmi {
        truth = truth.without_hmi();
    }
    let e = evaluate(&report, &truth)?;
    if g.format == Some(Format::Json) {
        write_output(None, &(serde_json::to_string_pretty(&e)? + "\n"))?;
        return Ok(EXIT_OK);
    }
    let text = format!(
        "precision {:.4}\nrecall {:.4}\nF {:.4}\ntrue positives {} of {} claimed, {} actual\nfalse positives {}\nmissed {}\n",
        e.precision,
        e.recall,
        e.f_score,
        e.true_positives,
        e.claimed,
        e.actual,
        join(&e.false_positives),
        join(&e.missed)
    );
    write_output(None, &text)?;
    Ok(EXIT_OK)
}

pub fn cmd_stability(g: &GlobalArgs, a: &StabilityArgs) -> Result<u8> {
    let started = Instant::now();
    let threads = thread_budget(a.inference.shards);
    let config: PipelineConfig = g.pipeline(a.features.config(), a.inference.config(), threads);
    config.inference.validate()?;
    let (records, summaries) = load_all(&a.inputs, g.force_sort)?;
    let result = prefix_stability(&records, &config, &a.fractions)?;

    if g.format == Some(Format::Json) {
        let mut manifest = RunManifest::new("stability", summaries, json!(config), started);
        manifest.counts.insert("packets".into(), records.len() as u64);
        let doc = json!({ "manifest": manifest, "fractions": a.fractions, "stability": result });
        write_output(a.out.as_deref(), &(serde_json::to_string_pretty(&doc)? + "\n"))?;
    } else {
        let mut text = String::from("fraction,status,ports,field_devices,masters,hmi,same_as_full\n");
        for (f, r) in &result.by_fraction {
            let ports: Vec<String> = r.protocols.iter().map(|p| p.scada_port.to_string()).collect();
            text += &format!(
                "{f},{:?},{},{},{},{},{}\n",
                r.status,
                ports.join(" "),
                r.field_devices().len(),
                r.master_servers().len(),
                r.hmi.map_or("-".into(), |h| h.to_string()),
                r.same_topology(&result.full)
            );
        }
        write_output(a.out.as_deref(), &text)?;
    }
    match result.smallest_stable {
        Some(f) => eprintln!("smallest stable prefix fraction {f}"),
        None => eprintln!("no prefix reproduces the full-trace topology"),
    }
    Ok(exit_for(result.full.status))
}
