//! Splitting TCP sessions into fixed-duration flows — the classification unit.
//!
//! Windows are anchored at the session's first packet: boundaries sit at
//! `t0 + i·T_F`. Splitting stops after the window containing the first FIN
//! (or RST) packet; packets in later windows are discarded and counted.

use crate::trace::{PacketRecord, TcpFlags, TcpSession};
use crate::{Error, Result};

const MICROS_PER_SEC: u64 = 1_000_000;

/// Timeouts governing flow splitting and active/idle detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig {
    flow_timeout_s: f64,
    activity_timeout_s: f64,
}

impl FlowConfig {
    /// Validates `0 < T_A < T_F`.
    pub fn new(flow_timeout_s: f64, activity_timeout_s: f64) -> Result<Self> {
        if !flow_timeout_s.is_finite() || flow_timeout_s <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "flow timeout must be positive, got {flow_timeout_s}"
            )));
        }
        if !activity_timeout_s.is_finite() || activity_timeout_s <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "activity timeout must be positive, got {activity_timeout_s}"
            )));
        }
        if activity_timeout_s >= flow_timeout_s {
            return Err(Error::InvalidConfig(format!(
                "activity timeout ({activity_timeout_s}) must be less than flow timeout \
                 ({flow_timeout_s})"
            )));
        }
        Ok(Self {
            flow_timeout_s,
            activity_timeout_s,
        })
    }

    pub fn flow_timeout_s(&self) -> f64 {
        self.flow_timeout_s
    }

    pub fn activity_timeout_s(&self) -> f64 {
        self.activity_timeout_s
    }

    fn flow_timeout_us(&self) -> u64 {
        (self.flow_timeout_s * MICROS_PER_SEC as f64).round() as u64
    }
}

/// A ≤T_F-second slice of a TCP session.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    /// Time-ordered, non-empty; directions already assigned.
    pub packets: Vec<PacketRecord>,
    pub start_s: f64,
    pub end_s: f64,
    pub label: Option<String>,
    /// Identifier of the parent session.
    pub session_ref: String,
}

impl Flow {
    /// Time between the flow's first and last packet, in seconds.
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// Flows extracted from one session, plus the count of packets discarded
/// after the FIN/RST window.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSplit {
    pub flows: Vec<Flow>,
    pub discarded_packets: u64,
}

/// Splits a session into consecutive `T_F`-second windows anchored at the
/// first packet. Empty windows yield no flow. The window containing the first
/// FIN or RST packet becomes the session's final flow; packets falling in
/// later windows are dropped and counted.
pub fn split_flows(session: &TcpSession, config: &FlowConfig) -> FlowSplit {
    if session.packets.is_empty() {
        return FlowSplit {
            flows: Vec::new(),
            discarded_packets: 0,
        };
    }
    let t0 = session.packets[0].timestamp_us;
    let window_us = config.flow_timeout_us();
    let terminal = TcpFlags::FIN | TcpFlags::RST;
    let final_window = session
        .packets
        .iter()
        .find(|p| p.tcp_flags.intersects(terminal))
        .map(|p| (p.timestamp_us - t0) / window_us);

    let mut flows: Vec<Flow> = Vec::new();
    let mut discarded = 0u64;
    let mut current_window = u64::MAX;
    for packet in &session.packets {
        let window = (packet.timestamp_us - t0) / window_us;
        if final_window.is_some_and(|last| window > last) {
            discarded += 1;
            continue;
        }
        if window != current_window {
            current_window = window;
            flows.push(Flow {
                packets: Vec::new(),
                start_s: packet.timestamp_s(),
                end_s: packet.timestamp_s(),
                label: None,
                session_ref: session.id(),
            });
        }
        let flow = flows.last_mut().unwrap();
        flow.end_s = packet.timestamp_s();
        flow.packets.push(packet.clone());
    }
    FlowSplit {
        flows,
        discarded_packets: discarded,
    }
}

/// Attaches an app-class label to every flow. Relabeling with the same label
/// is idempotent; a different label is a corpus-hygiene error.
pub fn label_flows(flows: Vec<Flow>, label: &str) -> Result<Vec<Flow>> {
    if label.is_empty() {
        return Err(Error::EmptyLabel);
    }
    flows
        .into_iter()
        .map(|mut flow| {
            match flow.label.as_deref() {
                Some(existing) if existing != label => {
                    return Err(Error::LabelConflict {
                        existing: existing.to_string(),
                        requested: label.to_string(),
                    });
                }
                _ => flow.label = Some(label.to_string()),
            }
            Ok(flow)
        })
        .collect()
}
