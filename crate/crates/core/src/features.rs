//! The 68-dimensional flow feature vector, standardization, and the on-disk
//! dataset/scaler formats.
//!
//! Layout (order is normative, 1-based dims in comments):
//!
//! | dims  | content                                                      |
//! |-------|--------------------------------------------------------------|
//! | 1–4   | min, max, mean, std of FIAT (outgoing inter-arrival times)   |
//! | 5–8   | same for BIAT (incoming)                                     |
//! | 9–12  | same for FLOWIAT (all packets)                               |
//! | 13–16 | same for active-period durations                             |
//! | 17–20 | same for idle-period durations                               |
//! | 21–23 | flow bytes/s, flow packets/s, duration (s)                   |
//! | 24–33 | direction of first 10 packets (+1 out, −1 in, 0 pad)         |
//! | 34–36 | incoming bursts: count, mean length, max length              |
//! | 37–39 | outgoing bursts: count, mean length, max length              |
//! | 40–49 | lengths of first 10 incoming bursts (0-padded)               |
//! | 50–59 | lengths of first 10 outgoing bursts (0-padded)               |
//! | 60–68 | packet counts for the nine tracked sizes                     |
//!
//! All statistics use the population standard deviation. Standard scores are
//! `z = (y − μ)/σ` with `z = 0` wherever `σ = 0`.

use std::fs;
use std::path::Path;

use crate::flow::{Flow, FlowConfig};
use crate::trace::Direction;
use crate::{Error, Result};

/// Number of dimensions in a feature vector.
pub const FEATURE_DIM: usize = 68;

/// Version tag embedded in serialized datasets; bump on any layout change.
pub const LAYOUT_VERSION: u32 = 1;

/// Packet sizes (IP total length) counted by dims 60–68, in layout order.
pub const TRACKED_SIZES: [u16; 9] = [1500, 595, 583, 1097, 1384, 151, 1126, 1109, 233];

const MICROS_PER_SEC: f64 = 1e6;

/// A fixed-layout feature vector with an optional app-class label.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: [f64; FEATURE_DIM],
    pub label: Option<String>,
}

/// Per-dimension standardization parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mu: [f64; FEATURE_DIM],
    pub sigma: [f64; FEATURE_DIM],
    /// Identifier of the dataset the scaler was fitted on.
    pub fitted_on: String,
}

/// Which packets contribute to an inter-arrival-time series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IatSelector {
    /// Outgoing packets only (FIAT).
    Forward,
    /// Incoming packets only (BIAT).
    Backward,
    /// Every packet regardless of direction (FLOWIAT).
    All,
}

/// Returns `[min, max, mean, population std]`; empty input yields all zeros.
pub fn summarize4(series: &[f64]) -> [f64; 4] {
    if series.is_empty() {
        return [0.0; 4];
    }
    let n = series.len() as f64;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for &x in series {
        min = min.min(x);
        max = max.max(x);
        sum += x;
    }
    let mean = sum / n;
    let var = series.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n;
    [min, max, mean, var.sqrt()]
}

/// Consecutive timestamp differences (seconds) within the selected
/// sub-sequence; fewer than two matching packets yield an empty series.
pub fn iat_series(flow: &Flow, selector: IatSelector) -> Vec<f64> {
    let wanted = |d: Direction| match selector {
        IatSelector::Forward => d == Direction::Outgoing,
        IatSelector::Backward => d == Direction::Incoming,
        IatSelector::All => true,
    };
    let times: Vec<u64> = flow
        .packets
        .iter()
        .filter(|p| wanted(p.direction))
        .map(|p| p.timestamp_us)
        .collect();
    times
        .windows(2)
        .map(|w| (w[1] - w[0]) as f64 / MICROS_PER_SEC)
        .collect()
}

/// Splits the flow's timeline into active and idle periods.
///
/// A gap between consecutive packets greater than `T_A` is an idle period of
/// that gap's duration; each maximal run of packets whose internal gaps are
/// all ≤ `T_A` is an active period lasting from its first to its last packet
/// (0 for a singleton run).
pub fn active_idle(flow: &Flow, activity_timeout_s: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(
        !flow.packets.is_empty(),
        "active_idle requires a non-empty flow"
    );
    let threshold_us = (activity_timeout_s * MICROS_PER_SEC).round() as u64;
    let mut active = Vec::new();
    let mut idle = Vec::new();
    let mut run_start = flow.packets[0].timestamp_us;
    let mut prev = run_start;
    for p in &flow.packets[1..] {
        let gap = p.timestamp_us - prev;
        if gap > threshold_us {
            active.push((prev - run_start) as f64 / MICROS_PER_SEC);
            idle.push(gap as f64 / MICROS_PER_SEC);
            run_start = p.timestamp_us;
        }
        prev = p.timestamp_us;
    }
    active.push((prev - run_start) as f64 / MICROS_PER_SEC);
    (active, idle)
}

/// Partitions the flow into maximal same-direction runs and returns the run
/// lengths in packets, in time order, as `(incoming, outgoing)`.
pub fn compute_bursts(flow: &Flow) -> (Vec<u64>, Vec<u64>) {
    let mut incoming = Vec::new();
    let mut outgoing = Vec::new();
    let mut current: Option<(Direction, u64)> = None;
    for p in &flow.packets {
        match current {
            Some((dir, ref mut len)) if dir == p.direction => *len += 1,
            _ => {
                if let Some((dir, len)) = current.take() {
                    push_burst(dir, len, &mut incoming, &mut outgoing);
                }
                current = Some((p.direction, 1));
            }
        }
    }
    if let Some((dir, len)) = current {
        push_burst(dir, len, &mut incoming, &mut outgoing);
    }
    (incoming, outgoing)
}

fn push_burst(dir: Direction, len: u64, incoming: &mut Vec<u64>, outgoing: &mut Vec<u64>) {
    match dir {
        Direction::Incoming => incoming.push(len),
        Direction::Outgoing => outgoing.push(len),
        Direction::Unassigned => {}
    }
}

/// Computes the complete 68-dimensional vector for one flow.
pub fn extract_features(flow: &Flow, config: &FlowConfig) -> FeatureVector {
    assert!(
        !flow.packets.is_empty(),
        "extract_features requires a non-empty flow"
    );
    let mut v = [0.0f64; FEATURE_DIM];

    // Dims 1–12: IAT statistics for FIAT, BIAT, FLOWIAT.
    for (slot, selector) in [
        IatSelector::Forward,
        IatSelector::Backward,
        IatSelector::All,
    ]
    .iter()
    .enumerate()
    {
        let stats = summarize4(&iat_series(flow, *selector));
        v[slot * 4..slot * 4 + 4].copy_from_slice(&stats);
    }

    // Dims 13–20: active/idle period statistics.
    let (active, idle) = active_idle(flow, config.activity_timeout_s());
    v[12..16].copy_from_slice(&summarize4(&active));
    v[16..20].copy_from_slice(&summarize4(&idle));

    // Dims 21–23: rates and duration. A zero-duration flow is treated as
    // lasting one second, so both rates equal the totals.
    let duration = flow.duration_s();
    let total_bytes: f64 = flow.packets.iter().map(|p| p.size_bytes as f64).sum();
    let total_packets = flow.packets.len() as f64;
    let divisor = if duration > 0.0 { duration } else { 1.0 };
    v[20] = total_bytes / divisor;
    v[21] = total_packets / divisor;
    v[22] = duration;

    // Dims 24–33: direction of the first 10 packets.
    for (i, p) in flow.packets.iter().take(10).enumerate() {
        v[23 + i] = match p.direction {
            Direction::Outgoing => 1.0,
            Direction::Incoming => -1.0,
            Direction::Unassigned => 0.0,
        };
    }

    // Dims 34–39: burst summaries; dims 40–59: first 10 burst lengths.
    let (incoming, outgoing) = compute_bursts(flow);
    let summary = |bursts: &[u64]| -> [f64; 3] {
        if bursts.is_empty() {
            return [0.0; 3];
        }
        let count = bursts.len() as f64;
        let sum: u64 = bursts.iter().sum();
        let max = *bursts.iter().max().unwrap();
        [count, sum as f64 / count, max as f64]
    };
    v[33..36].copy_from_slice(&summary(&incoming));
    v[36..39].copy_from_slice(&summary(&outgoing));
    for (i, &len) in incoming.iter().take(10).enumerate() {
        v[39 + i] = len as f64;
    }
    for (i, &len) in outgoing.iter().take(10).enumerate() {
        v[49 + i] = len as f64;
    }

    // Dims 60–68: counts of the tracked packet sizes.
    for p in &flow.packets {
        if let Some(slot) = TRACKED_SIZES.iter().position(|&s| s == p.size_bytes) {
            v[59 + slot] += 1.0;
        }
    }

    FeatureVector {
        values: v,
        label: flow.label.clone(),
    }
}

/// Fits per-dimension population mean and std over (training) vectors.
pub fn fit_scaler(vectors: &[FeatureVector], fitted_on: &str) -> Result<Scaler> {
    if vectors.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = vectors.len() as f64;
    let mut mu = [0.0f64; FEATURE_DIM];
    let mut sigma = [0.0f64; FEATURE_DIM];
    for v in vectors {
        for (m, &x) in mu.iter_mut().zip(v.values.iter()) {
            *m += x;
        }
    }
    for m in &mut mu {
        *m /= n;
    }
    for v in vectors {
        for k in 0..FEATURE_DIM {
            let d = v.values[k] - mu[k];
            sigma[k] += d * d;
        }
    }
    for s in &mut sigma {
        *s = (*s / n).sqrt();
    }
    Ok(Scaler {
        mu,
        sigma,
        fitted_on: fitted_on.to_string(),
    })
}

/// Standard-scores every dimension: `z = (y − μ)/σ`, with `z = 0` where
/// `σ = 0`. The label is preserved.
pub fn apply_scaler(scaler: &Scaler, v: &FeatureVector) -> FeatureVector {
    let mut values = [0.0f64; FEATURE_DIM];
    for (k, z) in values.iter_mut().enumerate() {
        if scaler.sigma[k] > 0.0 {
            *z = (v.values[k] - scaler.mu[k]) / scaler.sigma[k];
        }
    }
    FeatureVector {
        values,
        label: v.label.clone(),
    }
}

/// Provenance carried in a dataset file's header line.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub layout_version: u32,
    pub flow_timeout_s: f64,
    pub activity_timeout_s: f64,
    /// Free-form padding-mode tag ("full", "reduced", "none", "unknown", …).
    pub padding_mode: String,
}

/// Feature vectors plus the provenance needed to interpret them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub vectors: Vec<FeatureVector>,
}

const DATASET_TAG: &str = "torscope-dataset";
const SCALER_TAG: &str = "torscope-scaler";

/// Writes a dataset: one header line
/// (`torscope-dataset,layout=…,t_f=…,t_a=…,padding=…`), then one line per
/// vector holding 68 comma-separated values plus the label (possibly empty).
pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    check_field("padding mode", &dataset.meta.padding_mode)?;
    let mut out = String::new();
    out.push_str(&format!(
        "{DATASET_TAG},layout={},t_f={},t_a={},padding={}\n",
        dataset.meta.layout_version,
        dataset.meta.flow_timeout_s,
        dataset.meta.activity_timeout_s,
        dataset.meta.padding_mode
    ));
    for v in &dataset.vectors {
        let label = v.label.as_deref().unwrap_or("");
        check_field("label", label)?;
        out.push_str(&join_floats(&v.values));
        out.push(',');
        out.push_str(label);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a dataset written by [`save_dataset`].
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("dataset file is empty".into()))?;
    let fields = parse_header(header, DATASET_TAG, &["layout", "t_f", "t_a", "padding"])?;
    let layout_version: u32 = parse_num(&fields[0], "layout")?;
    if layout_version != LAYOUT_VERSION {
        return Err(Error::Format(format!(
            "unsupported dataset layout version {layout_version} (expected {LAYOUT_VERSION})"
        )));
    }
    let meta = DatasetMeta {
        layout_version,
        flow_timeout_s: parse_num(&fields[1], "t_f")?,
        activity_timeout_s: parse_num(&fields[2], "t_a")?,
        padding_mode: fields[3].clone(),
    };
    let mut vectors = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != FEATURE_DIM + 1 {
            return Err(Error::Format(format!(
                "line {}: expected {} fields, found {}",
                idx + 2,
                FEATURE_DIM + 1,
                parts.len()
            )));
        }
        let mut values = [0.0f64; FEATURE_DIM];
        for (k, part) in parts[..FEATURE_DIM].iter().enumerate() {
            values[k] = part
                .parse()
                .map_err(|_| Error::Format(format!("line {}: bad float {part:?}", idx + 2)))?;
        }
        let label = parts[FEATURE_DIM];
        vectors.push(FeatureVector {
            values,
            label: (!label.is_empty()).then(|| label.to_string()),
        });
    }
    Ok(Dataset { meta, vectors })
}

/// Writes a scaler: a header line (`torscope-scaler,layout=…,fitted_on=…`)
/// followed by the 68 μ values and the 68 σ values, one line each.
pub fn save_scaler(scaler: &Scaler, path: &Path) -> Result<()> {
    check_field("fitted_on", &scaler.fitted_on)?;
    let out = format!(
        "{SCALER_TAG},layout={LAYOUT_VERSION},fitted_on={}\n{}\n{}\n",
        scaler.fitted_on,
        join_floats(&scaler.mu),
        join_floats(&scaler.sigma)
    );
    fs::write(path, out)?;
    Ok(())
}

/// Reads a scaler written by [`save_scaler`].
pub fn load_scaler(path: &Path) -> Result<Scaler> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("scaler file is empty".into()))?;
    let fields = parse_header(header, SCALER_TAG, &["layout", "fitted_on"])?;
    let layout_version: u32 = parse_num(&fields[0], "layout")?;
    if layout_version != LAYOUT_VERSION {
        return Err(Error::Format(format!(
            "unsupported scaler layout version {layout_version} (expected {LAYOUT_VERSION})"
        )));
    }
    let mut read_row = |name: &str| -> Result<[f64; FEATURE_DIM]> {
        let line = lines
            .next()
            .ok_or_else(|| Error::Format(format!("scaler file missing {name} line")))?;
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != FEATURE_DIM {
            return Err(Error::Format(format!(
                "{name} line: expected {FEATURE_DIM} values, found {}",
                parts.len()
            )));
        }
        let mut row = [0.0f64; FEATURE_DIM];
        for (k, part) in parts.iter().enumerate() {
            row[k] = part
                .parse()
                .map_err(|_| Error::Format(format!("{name} line: bad float {part:?}")))?;
        }
        Ok(row)
    };
    let mu = read_row("mu")?;
    let sigma = read_row("sigma")?;
    Ok(Scaler {
        mu,
        sigma,
        fitted_on: fields[1].clone(),
    })
}

fn join_floats(values: &[f64]) -> String {
    values
        .iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn check_field(what: &str, value: &str) -> Result<()> {
    if value.contains(',') || value.contains('\n') {
        return Err(Error::Format(format!(
            "{what} {value:?} must not contain commas or newlines"
        )));
    }
    Ok(())
}

/// Parses `tag,key1=v1,key2=v2,…` returning the values in `keys` order.
fn parse_header(line: &str, tag: &str, keys: &[&str]) -> Result<Vec<String>> {
    let mut parts = line.split(',');
    let found = parts.next().unwrap_or("");
    if found != tag {
        return Err(Error::Format(format!(
            "expected {tag:?} header, found {found:?}"
        )));
    }
    let pairs: Vec<(&str, &str)> = parts
        .map(|p| {
            p.split_once('=')
                .ok_or_else(|| Error::Format(format!("malformed header field {p:?}")))
        })
        .collect::<Result<_>>()?;
    keys.iter()
        .map(|key| {
            pairs
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.to_string())
                .ok_or_else(|| Error::Format(format!("header missing {key}= field")))
        })
        .collect()
}

fn parse_num<T: std::str::FromStr>(text: &str, what: &str) -> Result<T> {
    text.parse()
        .map_err(|_| Error::Format(format!("bad {what} value {text:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{PacketRecord, TcpFlags};
    use proptest::prelude::*;
    use std::net::Ipv4Addr;

    /// Builds a flow from (seconds, direction, size) triples.
    fn flow_of(packets: &[(f64, Direction, u16)]) -> Flow {
        let records: Vec<PacketRecord> = packets
            .iter()
            .map(|&(t, direction, size)| PacketRecord {
                timestamp_us: (t * 1e6).round() as u64,
                src_addr: Ipv4Addr::new(10, 0, 0, 2),
                dst_addr: Ipv4Addr::new(10, 0, 0, 9),
                src_port: 50000,
                dst_port: 443,
                size_bytes: size,
                tcp_flags: TcpFlags::ACK,
                direction,
            })
            .collect();
        Flow {
            start_s: records.first().map(|p| p.timestamp_s()).unwrap_or(0.0),
            end_s: records.last().map(|p| p.timestamp_s()).unwrap_or(0.0),
            packets: records,
            label: None,
            session_ref: "test".into(),
        }
    }

    const OUT: Direction = Direction::Outgoing;
    const IN: Direction = Direction::Incoming;

    #[test]
    fn summarize4_hand_example() {
        let stats = summarize4(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(stats, [2.0, 9.0, 5.0, 2.0]);
    }

    #[test]
    fn summarize4_edge_cases() {
        assert_eq!(summarize4(&[]), [0.0; 4]);
        assert_eq!(summarize4(&[3.5]), [3.5, 3.5, 3.5, 0.0]);
    }

    #[test]
    fn iat_series_by_direction() {
        let flow = flow_of(&[(0.0, OUT, 100), (1.0, OUT, 100), (4.0, OUT, 100)]);
        assert_eq!(iat_series(&flow, IatSelector::Forward), vec![1.0, 3.0]);
        assert_eq!(iat_series(&flow, IatSelector::Backward), Vec::<f64>::new());

        let mixed = flow_of(&[
            (0.0, IN, 100),
            (1.0, IN, 100),
            (4.0, IN, 100),
            (4.5, IN, 100),
        ]);
        assert_eq!(iat_series(&mixed, IatSelector::Forward), Vec::<f64>::new());
        assert_eq!(iat_series(&mixed, IatSelector::All), vec![1.0, 3.0, 0.5]);
    }

    #[test]
    fn active_idle_hand_examples() {
        let flow = flow_of(&[
            (0.0, OUT, 100),
            (0.5, OUT, 100),
            (1.0, OUT, 100),
            (4.0, OUT, 100),
            (4.2, OUT, 100),
        ]);
        let (active, idle) = active_idle(&flow, 2.0);
        assert_eq!(active, vec![1.0, 0.2]);
        assert_eq!(idle, vec![3.0]);

        let single = flow_of(&[(0.0, OUT, 100)]);
        assert_eq!(active_idle(&single, 2.0), (vec![0.0], vec![]));

        let sparse = flow_of(&[(0.0, OUT, 100), (10.0, OUT, 100)]);
        assert_eq!(active_idle(&sparse, 2.0), (vec![0.0, 0.0], vec![10.0]));
    }

    #[test]
    fn compute_bursts_hand_examples() {
        let flow = flow_of(&[
            (0.0, OUT, 100),
            (1.0, OUT, 100),
            (2.0, IN, 100),
            (3.0, OUT, 100),
            (4.0, OUT, 100),
            (5.0, OUT, 100),
            (6.0, IN, 100),
            (7.0, IN, 100),
        ]);
        assert_eq!(compute_bursts(&flow), (vec![1, 2], vec![2, 3]));

        let all_out = flow_of(&[(0.0, OUT, 1); 5]);
        assert_eq!(compute_bursts(&all_out), (vec![], vec![5]));

        let alternating = flow_of(&[(0.0, OUT, 1), (1.0, IN, 1), (2.0, OUT, 1), (3.0, IN, 1)]);
        assert_eq!(compute_bursts(&alternating), (vec![1, 1], vec![1, 1]));
    }

    #[test]
    fn single_outgoing_packet_vector_matches_layout_rules() {
        let flow = flow_of(&[(5.0, OUT, 583)]);
        let config = FlowConfig::new(10.0, 2.0).unwrap();
        let v = extract_features(&flow, &config).values;
        let mut expected = [0.0f64; FEATURE_DIM];
        expected[20] = 583.0; // bytes/s under the zero-duration convention
        expected[21] = 1.0; // packets/s
        expected[23] = 1.0; // first-packet direction
        expected[36] = 1.0; // outgoing burst count
        expected[37] = 1.0; // outgoing burst mean
        expected[38] = 1.0; // outgoing burst max
        expected[49] = 1.0; // first outgoing burst length
        expected[61] = 1.0; // size 583 is third in the tracked list
        assert_eq!(v, expected);
    }

    #[test]
    fn three_packet_vector_hand_computed() {
        let flow = flow_of(&[(0.0, OUT, 1500), (3.0, OUT, 1500), (9.0, OUT, 1500)]);
        let config = FlowConfig::new(10.0, 2.0).unwrap();
        let v = extract_features(&flow, &config).values;
        // FIAT = FLOWIAT = [3,6]: min 3, max 6, mean 4.5, std 1.5.
        assert_eq!(&v[0..4], &[3.0, 6.0, 4.5, 1.5]);
        assert_eq!(&v[4..8], &[0.0; 4]); // no incoming pairs
        assert_eq!(&v[8..12], &[3.0, 6.0, 4.5, 1.5]);
        assert_eq!(v[20], 500.0); // 4500 bytes / 9 s
        assert_eq!(v[21], 3.0 / 9.0);
        assert_eq!(v[22], 9.0);
        assert_eq!(&v[23..26], &[1.0, 1.0, 1.0]);
        assert_eq!(v[59], 3.0); // three packets of size 1500
    }

    #[test]
    fn empty_burst_side_is_all_zeros() {
        let flow = flow_of(&[(0.0, OUT, 100), (1.0, OUT, 100)]);
        let config = FlowConfig::new(10.0, 2.0).unwrap();
        let v = extract_features(&flow, &config).values;
        assert_eq!(&v[33..36], &[0.0, 0.0, 0.0]); // incoming count/mean/max
        assert_eq!(&v[36..39], &[1.0, 2.0, 2.0]); // one outgoing burst of 2
    }

    #[test]
    fn active_plus_idle_covers_duration() {
        let times: Vec<f64> = vec![0.0, 0.4, 0.9, 5.0, 5.1, 12.0, 30.0, 30.2, 30.4];
        let triples: Vec<(f64, Direction, u16)> = times.iter().map(|&t| (t, OUT, 100)).collect();
        let flow = flow_of(&triples);
        let (active, idle) = active_idle(&flow, 2.0);
        let covered: f64 = active.iter().sum::<f64>() + idle.iter().sum::<f64>();
        assert!((covered - flow.duration_s()).abs() < 1e-9);
    }

    #[test]
    fn scaler_hand_values() {
        let mut a = FeatureVector {
            values: [0.0; FEATURE_DIM],
            label: None,
        };
        let mut b = a.clone();
        a.values[7] = 1.0;
        b.values[7] = 3.0;
        a.values[10] = 5.0;
        b.values[10] = 5.0;
        let scaler = fit_scaler(&[a.clone(), b], "unit").unwrap();
        assert_eq!(scaler.mu[7], 2.0);
        assert_eq!(scaler.sigma[7], 1.0);
        assert_eq!(scaler.mu[10], 5.0);
        assert_eq!(scaler.sigma[10], 0.0);

        let z = apply_scaler(&scaler, &a);
        assert_eq!(z.values[7], -1.0);
        assert_eq!(z.values[10], 0.0); // σ = 0 fallback
    }

    #[test]
    fn fit_scaler_rejects_empty_and_handles_singleton() {
        assert!(matches!(fit_scaler(&[], "x"), Err(Error::EmptyDataset)));
        let v = FeatureVector {
            values: [2.5; FEATURE_DIM],
            label: Some("app".into()),
        };
        let scaler = fit_scaler(std::slice::from_ref(&v), "x").unwrap();
        assert_eq!(scaler.mu, [2.5; FEATURE_DIM]);
        assert_eq!(scaler.sigma, [0.0; FEATURE_DIM]);
        assert_eq!(apply_scaler(&scaler, &v).label.as_deref(), Some("app"));
    }

    #[test]
    fn self_standardization_property() {
        // Applying a scaler to its own fitting set must give every
        // non-constant dimension mean 0 and population std 1.
        let mut vectors = Vec::new();
        for i in 0..25u32 {
            let mut values = [0.0f64; FEATURE_DIM];
            for (k, value) in values.iter_mut().enumerate() {
                *value = ((i * 31 + k as u32 * 7) % 13) as f64 * 0.5 - 2.0;
            }
            vectors.push(FeatureVector {
                values,
                label: None,
            });
        }
        let scaler = fit_scaler(&vectors, "self").unwrap();
        let scaled: Vec<FeatureVector> = vectors.iter().map(|v| apply_scaler(&scaler, v)).collect();
        for k in 0..FEATURE_DIM {
            let column: Vec<f64> = scaled.iter().map(|v| v.values[k]).collect();
            let stats = summarize4(&column);
            if scaler.sigma[k] > 0.0 {
                assert!(stats[2].abs() < 1e-9, "dim {k} mean {}", stats[2]);
                assert!((stats[3] - 1.0).abs() < 1e-9, "dim {k} std {}", stats[3]);
            } else {
                assert_eq!(column, vec![0.0; vectors.len()]);
            }
        }
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.fvd");
        let mut values = [0.0f64; FEATURE_DIM];
        for (k, value) in values.iter_mut().enumerate() {
            *value = (k as f64 + 1.0) / 3.0;
        }
        let dataset = Dataset {
            meta: DatasetMeta {
                layout_version: LAYOUT_VERSION,
                flow_timeout_s: 10.0,
                activity_timeout_s: 2.0,
                padding_mode: "reduced".into(),
            },
            vectors: vec![
                FeatureVector {
                    values,
                    label: Some("spotify".into()),
                },
                FeatureVector {
                    values: [-1.25e-7; FEATURE_DIM],
                    label: None,
                },
            ],
        };
        save_dataset(&dataset, &path).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(loaded, dataset);
    }

    #[test]
    fn dataset_rejects_foreign_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.fvd");
        fs::write(&path, "something-else,layout=1\n").unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Format(_))));

        fs::write(
            &path,
            "torscope-dataset,layout=99,t_f=10,t_a=2,padding=none\n",
        )
        .unwrap();
        let err = load_dataset(&path).unwrap_err();
        assert!(err.to_string().contains("layout version 99"));
    }

    #[test]
    fn scaler_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scale.std");
        let mut mu = [0.0f64; FEATURE_DIM];
        let mut sigma = [0.0f64; FEATURE_DIM];
        for k in 0..FEATURE_DIM {
            mu[k] = k as f64 * 0.1 - 3.0;
            sigma[k] = k as f64 / 7.0;
        }
        let scaler = Scaler {
            mu,
            sigma,
            fitted_on: "corpus-1/fold-3".into(),
        };
        save_scaler(&scaler, &path).unwrap();
        assert_eq!(load_scaler(&path).unwrap(), scaler);
    }

    proptest! {
        #[test]
        fn summarize4_matches_brute_force(series in prop::collection::vec(-1e4f64..1e4, 1..60)) {
            let stats = summarize4(&series);
            let mut sorted = series.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = series.len() as f64;
            let mean: f64 = series.iter().sum::<f64>() / n;
            let var: f64 = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            prop_assert!((stats[0] - sorted[0]).abs() < 1e-9);
            prop_assert!((stats[1] - sorted[sorted.len() - 1]).abs() < 1e-9);
            prop_assert!((stats[2] - mean).abs() < 1e-9);
            prop_assert!((stats[3] - var.sqrt()).abs() < 1e-9);
        }

        #[test]
        fn burst_lengths_partition_packets(dirs in prop::collection::vec(prop::bool::ANY, 1..80)) {
            let triples: Vec<(f64, Direction, u16)> = dirs
                .iter()
                .enumerate()
                .map(|(i, &out)| (i as f64 * 0.1, if out { OUT } else { IN }, 100))
                .collect();
            let flow = flow_of(&triples);
            let (incoming, outgoing) = compute_bursts(&flow);
            let total: u64 = incoming.iter().sum::<u64>() + outgoing.iter().sum::<u64>();
            prop_assert_eq!(total as usize, dirs.len());
            // Runs alternate, so no two consecutive bursts share a direction.
            prop_assert!(incoming.iter().all(|&l| l >= 1));
            prop_assert!(outgoing.iter().all(|&l| l >= 1));
        }

        #[test]
        fn float_round_trip_through_text(x in prop::num::f64::NORMAL) {
            let text = x.to_string();
            let back: f64 = text.parse().unwrap();
            prop_assert_eq!(back, x);
        }
    }
}
