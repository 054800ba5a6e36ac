//! Sink-side plumbing: CSV ingestion, regularization onto the sampling grid,
//! segmentation and the per-node cleaning pipeline.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use thiserror::Error;

use crate::anomaly::{Decision, NodeStreamState, StreamConfig, Verdict};
use crate::arima::ArimaModel;
use crate::timeseries::{TimeSeries, TimeSeriesError};

pub const CSV_HEADER: [&str; 4] = ["node_id", "timestamp", "channel", "value"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SinkError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("duplicate reading for node {node_id} {channel} at t={timestamp}")]
    DuplicateTimestamp {
        node_id: u32,
        channel: Channel,
        timestamp: f64,
    },
    #[error("no readings to regularize")]
    EmptyGroup,
    #[error("interval must be positive and finite, got {0}")]
    InvalidInterval(f64),
    #[error("tolerance must lie in [0, 0.5), got {0}")]
    InvalidTolerance(f64),
    #[error("segment {label} [{start}, {end}] is out of bounds for length {len}")]
    IndexOutOfBounds {
        label: String,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("segments {0} and {1} overlap")]
    OverlappingSegments(String, String),
    #[error("invalid segment spec {0:?}, expected label:start-end")]
    InvalidSegment(String),
    #[error("no values available to fill the series")]
    NoValues,
    #[error(transparent)]
    Series(#[from] TimeSeriesError),
    #[error("read failed: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, SinkError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Channel {
    Temperature,
    Light,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Temperature => "temperature",
            Channel::Light => "light",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "temperature" => Ok(Channel::Temperature),
            "light" => Ok(Channel::Light),
            other => Err(format!("unknown channel {other:?}")),
        }
    }
}

pub type NodeKey = (u32, Channel);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorReading {
    pub node_id: u32,
    pub timestamp: f64,
    pub channel: Channel,
    /// `None` for a delivered-but-empty reading.
    pub value: Option<f64>,
}

impl SensorReading {
    pub fn key(&self) -> NodeKey {
        (self.node_id, self.channel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DuplicatePolicy {
    /// Keep the first reading, list the rest in [`Ingested::duplicates`].
    #[default]
    Report,
    Reject,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ingested {
    /// Time-sorted readings per (node, channel).
    pub groups: BTreeMap<NodeKey, Vec<SensorReading>>,
    pub duplicates: Vec<SensorReading>,
}

impl Ingested {
    pub fn reading_count(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }
}

fn parse_err(line: u64, message: impl Into<String>) -> SinkError {
    SinkError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_record(record: &csv::StringRecord, line: u64) -> Result<SensorReading> {
    let node_id = record[0]
        .trim()
        .parse::<u32>()
        .map_err(|e| parse_err(line, format!("node_id {:?}: {e}", &record[0])))?;
    let timestamp = record[1]
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|t| t.is_finite())
        .ok_or_else(|| parse_err(line, format!("invalid timestamp {:?}", &record[1])))?;
    let channel = record[2]
        .trim()
        .parse::<Channel>()
        .map_err(|e| parse_err(line, e))?;
    let raw = record[3].trim();
    let value = if raw.is_empty() {
        None
    } else {
        Some(
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line, format!("invalid value {raw:?}")))?,
        )
    };
    Ok(SensorReading {
        node_id,
        timestamp,
        channel,
        value,
    })
}

/// Parses `node_id,timestamp,channel,value` CSV (header required) into
/// time-sorted per-node groups.
pub fn ingest<R: Read>(source: R, policy: DuplicatePolicy) -> Result<Ingested> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(source);
    let mut records = reader.records();
    let mut out = Ingested::default();
    match records.next() {
        None => return Ok(out),
        Some(Err(e)) => return Err(parse_err(1, e.to_string())),
        Some(Ok(header)) => {
            let fields: Vec<&str> = header.iter().map(str::trim).collect();
            if fields != CSV_HEADER {
                return Err(parse_err(
                    1,
                    format!("expected header {}", CSV_HEADER.join(",")),
                ));
            }
        }
    }
    let mut seen: BTreeMap<NodeKey, Vec<SensorReading>> = BTreeMap::new();
    for record in records {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 4 {
            return Err(parse_err(
                line,
                format!("expected 4 fields, found {}", record.len()),
            ));
        }
        let reading = parse_record(&record, line)?;
        seen.entry(reading.key()).or_default().push(reading);
    }
    for (key, mut readings) in seen {
        readings.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        let mut kept: Vec<SensorReading> = Vec::with_capacity(readings.len());
        for r in readings {
            if kept.last().is_some_and(|k| k.timestamp == r.timestamp) {
                if policy == DuplicatePolicy::Reject {
                    return Err(SinkError::DuplicateTimestamp {
                        node_id: r.node_id,
                        channel: r.channel,
                        timestamp: r.timestamp,
                    });
                }
                out.duplicates.push(r);
            } else {
                kept.push(r);
            }
        }
        out.groups.insert(key, kept);
    }
    Ok(out)
}

/// One slot of the regular sampling grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Slot {
    /// No reading arrived for this slot.
    Gap,
    /// A reading arrived without a value.
    Blank,
    Value(f64),
}

impl Slot {
    pub fn value(self) -> Option<f64> {
        match self {
            Slot::Value(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSeries {
    pub origin: f64,
    pub interval: f64,
    pub slots: Vec<Slot>,
}

impl GridSeries {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn time_at(&self, index: usize) -> f64 {
        self.origin + index as f64 * self.interval
    }

    pub fn missing_count(&self) -> usize {
        self.slots.iter().filter(|s| s.value().is_none()).count()
    }

    /// Readings at exact grid times; gaps produce nothing.
    pub fn to_readings(&self, node_id: u32, channel: Channel) -> Vec<SensorReading> {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| !matches!(s, Slot::Gap))
            .map(|(i, s)| SensorReading {
                node_id,
                timestamp: self.time_at(i),
                channel,
                value: s.value(),
            })
            .collect()
    }

    /// Complete series with missing slots filled by linear interpolation
    /// (nearest value at the edges).
    pub fn filled(&self) -> Result<TimeSeries> {
        let known: Vec<(usize, f64)> = self
            .slots
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.value().map(|v| (i, v)))
            .collect();
        if known.is_empty() {
            return Err(SinkError::NoValues);
        }
        let mut values = Vec::with_capacity(self.len());
        let mut next = 0;
        for i in 0..self.len() {
            while next < known.len() && known[next].0 < i {
                next += 1;
            }
            let v = match (next.checked_sub(1).map(|j| known[j]), known.get(next)) {
                (_, Some(&(j, v))) if j == i => v,
                (Some((i0, v0)), Some(&(i1, v1))) => {
                    v0 + (v1 - v0) * (i - i0) as f64 / (i1 - i0) as f64
                }
                (Some((_, v0)), None) => v0,
                (None, Some(&(_, v1))) => v1,
                (None, None) => unreachable!(),
            };
            values.push(v);
        }
        Ok(TimeSeries::new(values, self.interval, self.origin)?)
    }

    pub fn prefix(&self, len: usize) -> GridSeries {
        GridSeries {
            origin: self.origin,
            interval: self.interval,
            slots: self.slots[..len.min(self.len())].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Regularized {
    pub grid: GridSeries,
    /// Lost a slot to a nearer reading.
    pub displaced: Vec<SensorReading>,
    /// Farther than `tolerance · interval` from every slot, or before the origin.
    pub out_of_tolerance: Vec<SensorReading>,
}

impl Regularized {
    pub fn slotted(&self) -> usize {
        self.grid
            .slots
            .iter()
            .filter(|s| !matches!(s, Slot::Gap))
            .count()
    }
}

/// Snaps time-sorted readings onto a grid anchored at the first timestamp.
pub fn regularize(
    readings: &[SensorReading],
    interval: f64,
    tolerance: f64,
) -> Result<Regularized> {
    let first = readings.first().ok_or(SinkError::EmptyGroup)?;
    regularize_on(readings, first.timestamp, interval, tolerance)
}

/// Snaps readings onto the grid `origin + k · interval`, `k >= 0`.
pub fn regularize_on(
    readings: &[SensorReading],
    origin: f64,
    interval: f64,
    tolerance: f64,
) -> Result<Regularized> {
    if !(interval.is_finite() && interval > 0.0) {
        return Err(SinkError::InvalidInterval(interval));
    }
    if !(0.0..0.5).contains(&tolerance) {
        return Err(SinkError::InvalidTolerance(tolerance));
    }
    if readings.is_empty() {
        return Err(SinkError::EmptyGroup);
    }
    let slack = tolerance * interval + 1e-9 * interval;
    let mut placed: Vec<Option<(f64, SensorReading)>> = Vec::new();
    let mut displaced = Vec::new();
    let mut out_of_tolerance = Vec::new();
    for r in readings {
        let k = ((r.timestamp - origin) / interval).round();
        let offset = (r.timestamp - (origin + k * interval)).abs();
        if k < 0.0 || offset > slack {
            out_of_tolerance.push(*r);
            continue;
        }
        let k = k as usize;
        if placed.len() <= k {
            placed.resize(k + 1, None);
        }
        match &placed[k] {
            Some((held, _)) if *held <= offset => displaced.push(*r),
            Some((_, old)) => {
                displaced.push(*old);
                placed[k] = Some((offset, *r));
            }
            None => placed[k] = Some((offset, *r)),
        }
    }
    let slots = placed
        .into_iter()
        .map(|p| match p {
            None => Slot::Gap,
            Some((_, r)) => r.value.map_or(Slot::Blank, Slot::Value),
        })
        .collect();
    Ok(Regularized {
        grid: GridSeries {
            origin,
            interval,
            slots,
        },
        displaced,
        out_of_tolerance,
    })
}

/// A labelled inclusive index range on the regularized grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn new(label: impl Into<String>, start: usize, end: usize) -> Self {
        Self {
            label: label.into(),
            start,
            end,
        }
    }
}

impl FromStr for Segment {
    type Err = SinkError;

    /// `label:start-end`, 0-based inclusive.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || SinkError::InvalidSegment(s.to_string());
        let (label, range) = s.split_once(':').ok_or_else(bad)?;
        let (a, b) = range.split_once('-').ok_or_else(bad)?;
        let start = a.trim().parse().map_err(|_| bad())?;
        let end = b.trim().parse().map_err(|_| bad())?;
        if label.is_empty() {
            return Err(bad());
        }
        Ok(Segment::new(label, start, end))
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}-{}", self.label, self.start, self.end)
    }
}

pub fn segment(series: &TimeSeries, segments: &[Segment]) -> Result<Vec<(String, TimeSeries)>> {
    for s in segments {
        if s.start > s.end || s.end >= series.len() {
            return Err(SinkError::IndexOutOfBounds {
                label: s.label.clone(),
                start: s.start,
                end: s.end,
                len: series.len(),
            });
        }
    }
    let mut sorted: Vec<&Segment> = segments.iter().collect();
    sorted.sort_by_key(|s| s.start);
    for pair in sorted.windows(2) {
        if pair[1].start <= pair[0].end {
            return Err(SinkError::OverlappingSegments(
                pair[0].label.clone(),
                pair[1].label.clone(),
            ));
        }
    }
    Ok(segments
        .iter()
        .map(|s| (s.label.clone(), series.slice(s.start, s.end)))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Nominal sampling interval in seconds.
    pub interval: f64,
    /// Snap tolerance as a fraction of the interval.
    pub tolerance: f64,
    /// Regularized samples used to fit a node's first model.
    pub min_train: usize,
    pub stream: StreamConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            interval: 2.0,
            tolerance: 0.25,
            min_train: 200,
            stream: StreamConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
struct NodeEntry {
    origin: f64,
    state: NodeStreamState,
}

/// Per-(node, channel) stream states sharing one pipeline configuration.
#[derive(Debug, Clone, Default)]
pub struct NodeRegistry {
    config: PipelineConfig,
    nodes: BTreeMap<NodeKey, NodeEntry>,
}

impl NodeRegistry {
    pub fn new(config: PipelineConfig) -> Self {
        Self {
            config,
            nodes: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn state(&self, key: &NodeKey) -> Option<&NodeStreamState> {
        self.nodes.get(key).map(|e| &e.state)
    }

    pub fn clear_fault(&mut self, key: &NodeKey) -> bool {
        match self.nodes.get_mut(key) {
            Some(e) => {
                e.state.clear_fault();
                true
            }
            None => false,
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &NodeKey> {
        self.nodes.keys()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleanRow {
    pub timestamp: f64,
    pub verdict: Verdict,
    /// Node fault flag right after this reading was processed.
    pub fault_flag: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeStatus {
    Trained,
    Untrained { available: usize, needed: usize },
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeReport {
    pub key: NodeKey,
    pub status: NodeStatus,
    pub model: Option<ArimaModel>,
    pub rows: Vec<CleanRow>,
    pub displaced: usize,
    pub out_of_tolerance: usize,
    /// Readings for slots the node had already processed.
    pub stale: usize,
    pub refits: usize,
    pub fault_flag: bool,
}

impl NodeReport {
    pub fn count(&self, decision: Decision) -> usize {
        self.rows
            .iter()
            .filter(|r| r.verdict.decision == decision)
            .count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub reports: Vec<NodeReport>,
    pub duplicates: usize,
}

fn run_node(
    config: &PipelineConfig,
    entry: Option<NodeEntry>,
    key: NodeKey,
    readings: &[SensorReading],
) -> (NodeReport, Option<NodeEntry>) {
    let mut report = NodeReport {
        key,
        status: NodeStatus::Trained,
        model: None,
        rows: Vec::new(),
        displaced: 0,
        out_of_tolerance: 0,
        stale: 0,
        refits: 0,
        fault_flag: false,
    };
    let regularized = match &entry {
        Some(e) => regularize_on(readings, e.origin, config.interval, config.tolerance),
        None => regularize(readings, config.interval, config.tolerance),
    };
    let regularized = match regularized {
        Ok(r) => r,
        Err(e) => {
            report.status = NodeStatus::Failed(e.to_string());
            return (report, entry);
        }
    };
    report.displaced = regularized.displaced.len();
    report.out_of_tolerance = regularized.out_of_tolerance.len();
    let grid = &regularized.grid;

    let (mut entry, start) = match entry {
        Some(e) => {
            let start = e.state.history().len();
            report.stale = grid.slots[..start.min(grid.len())]
                .iter()
                .filter(|s| !matches!(s, Slot::Gap))
                .count();
            (e, start)
        }
        None => {
            if grid.len() < config.min_train {
                report.status = NodeStatus::Untrained {
                    available: grid.len(),
                    needed: config.min_train,
                };
                return (report, None);
            }
            let trained = grid
                .prefix(config.min_train)
                .filled()
                .map_err(|e| e.to_string())
                .and_then(|training| {
                    NodeStreamState::train(key.0, &training, config.stream.clone())
                        .map_err(|e| e.to_string())
                });
            match trained {
                Ok(state) => (
                    NodeEntry {
                        origin: grid.origin,
                        state,
                    },
                    config.min_train,
                ),
                Err(msg) => {
                    report.status = NodeStatus::Failed(msg);
                    return (report, None);
                }
            }
        }
    };

    for index in start..grid.len() {
        match entry.state.process_reading(grid.slots[index].value()) {
            Ok(verdict) => report.rows.push(CleanRow {
                timestamp: grid.time_at(index),
                verdict,
                fault_flag: entry.state.fault_flagged(),
            }),
            Err(e) => {
                report.status = NodeStatus::Failed(e.to_string());
                break;
            }
        }
    }
    report.model = entry.state.model().cloned();
    report.refits = entry.state.refits();
    report.fault_flag = entry.state.fault_flagged();
    (report, Some(entry))
}

/// Runs every (node, channel) group of `batch` through its own stream. Nodes
/// without a model are first fitted on their training prefix, which emits no
/// verdicts. A failing node does not stop the others.
pub fn run_pipeline(registry: &mut NodeRegistry, batch: &Ingested) -> PipelineOutput {
    let mut reports = Vec::with_capacity(batch.groups.len());
    for (key, readings) in &batch.groups {
        let entry = registry.nodes.remove(key);
        let (report, entry) = run_node(&registry.config, entry, *key, readings);
        if let Some(entry) = entry {
            registry.nodes.insert(*key, entry);
        }
        reports.push(report);
    }
    PipelineOutput {
        reports,
        duplicates: batch.duplicates.len(),
    }
}
