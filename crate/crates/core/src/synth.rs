//! Synthetic labeled traffic: app archetypes plus connection-padding
//! injection, so the full pipeline can be validated without live captures.
//!
//! An archetype alternates think-time gaps with single-direction packet
//! bursts; the mix of directions, burst lengths, packet-size palette, and
//! think-time distribution is what distinguishes app classes. Connection
//! padding follows the two-timer model: the client and the guard each keep
//! an idle timer (full mode: uniform [1.5, 9.5] s; reduced: [9, 14] s); a
//! timer that expires emits one padding cell from its side. Real packets
//! reset both timers; a padding packet re-arms only its emitter's timer.

use std::fs;
use std::net::Ipv4Addr;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::trace::{
    assemble_sessions, write_pcap, Direction, PacketRecord, TcpFlags, TcpSession, MIN_PACKET_BYTES,
};
use crate::{Error, Result};

/// Full-mode padding timeout range, seconds.
pub const FULL_PADDING_RANGE_S: (f64, f64) = (1.5, 9.5);
/// Reduced-mode padding timeout range, seconds.
pub const REDUCED_PADDING_RANGE_S: (f64, f64) = (9.0, 14.0);
/// Default on-the-wire size of one padding cell (514-byte cell plus modeled
/// TLS/TCP/IP framing).
pub const DEFAULT_PADDING_CELL_BYTES: u16 = 543;

const MICROS_PER_SEC: f64 = 1e6;

/// Connection-padding flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PaddingMode {
    None,
    Reduced,
    Full,
}

impl PaddingMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PaddingMode::None => "none",
            PaddingMode::Reduced => "reduced",
            PaddingMode::Full => "full",
        }
    }
}

impl std::fmt::Display for PaddingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PaddingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(PaddingMode::None),
            "reduced" => Ok(PaddingMode::Reduced),
            "full" => Ok(PaddingMode::Full),
            other => Err(Error::InvalidConfig(format!(
                "unknown padding mode {other:?} (expected none, reduced, or full)"
            ))),
        }
    }
}

/// Padding behavior for a generated session.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaddingConfig {
    pub mode: PaddingMode,
    pub padding_cell_size: u16,
}

impl PaddingConfig {
    pub fn new(mode: PaddingMode) -> Self {
        Self {
            mode,
            padding_cell_size: DEFAULT_PADDING_CELL_BYTES,
        }
    }

    /// The mode's timeout range, or `None` for unpadded traffic.
    pub fn timeout_range(&self) -> Option<(f64, f64)> {
        match self.mode {
            PaddingMode::None => None,
            PaddingMode::Full => Some(FULL_PADDING_RANGE_S),
            PaddingMode::Reduced => Some(REDUCED_PADDING_RANGE_S),
        }
    }
}

/// Draws one padding timeout, uniform over the mode's range.
pub fn sample_padding_timeout(config: &PaddingConfig, rng: &mut impl Rng) -> Result<f64> {
    let (lo, hi) = config.timeout_range().ok_or(Error::PaddingModeNone)?;
    Ok(rng.gen_range(lo..hi))
}

fn sample_timeout_us(config: &PaddingConfig, rng: &mut impl Rng) -> u64 {
    let timeout =
        sample_padding_timeout(config, rng).expect("caller checked that padding is enabled");
    (timeout * MICROS_PER_SEC).round() as u64
}

/// Simulates the two padding timers over one time-ordered session and
/// returns the session with padding cells spliced in.
///
/// Real packets are preserved verbatim and reset both timers; a padding cell
/// re-arms only the emitting side's timer. Padding cells carry
/// `padding_cell_size` bytes and no TCP flags. No padding is emitted after
/// the last real packet (the connection is over). Mode `None` is the
/// identity.
pub fn inject_padding(
    packets: &[PacketRecord],
    config: &PaddingConfig,
    rng: &mut impl Rng,
) -> Vec<PacketRecord> {
    if config.mode == PaddingMode::None || packets.len() < 2 {
        return packets.to_vec();
    }
    // Orient padding around the client: the first packet is client→server
    // unless assembly marked it Incoming.
    let first = &packets[0];
    let (client, server) = if first.direction == Direction::Incoming {
        (first.destination(), first.source())
    } else {
        (first.source(), first.destination())
    };
    let padding_packet = |timestamp_us: u64, direction: Direction| {
        let (src, dst) = match direction {
            Direction::Incoming => (server, client),
            _ => (client, server),
        };
        PacketRecord {
            timestamp_us,
            src_addr: src.0,
            dst_addr: dst.0,
            src_port: src.1,
            dst_port: dst.1,
            size_bytes: config.padding_cell_size,
            tcp_flags: TcpFlags::empty(),
            direction,
        }
    };

    let mut out = Vec::with_capacity(packets.len());
    out.push(packets[0].clone());
    // Arm order is part of the determinism contract: client first.
    let mut client_fire = first.timestamp_us + sample_timeout_us(config, rng);
    let mut guard_fire = first.timestamp_us + sample_timeout_us(config, rng);
    for packet in &packets[1..] {
        let t_next = packet.timestamp_us;
        loop {
            let fire = client_fire.min(guard_fire);
            // A timer expiring exactly when a real packet arrives is
            // preempted by the packet.
            if fire >= t_next {
                break;
            }
            if client_fire <= guard_fire {
                out.push(padding_packet(fire, Direction::Outgoing));
                client_fire = fire + sample_timeout_us(config, rng);
            } else {
                out.push(padding_packet(fire, Direction::Incoming));
                guard_fire = fire + sample_timeout_us(config, rng);
            }
        }
        out.push(packet.clone());
        client_fire = t_next + sample_timeout_us(config, rng);
        guard_fire = t_next + sample_timeout_us(config, rng);
    }
    out
}

/// Packets per burst, inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BurstRange {
    pub min_packets: u32,
    pub max_packets: u32,
}

/// One weighted entry of a packet-size palette.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeWeight {
    pub size: u16,
    pub weight: f64,
}

/// Traffic profile standing in for one app class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeSpec {
    /// App-class label attached to every flow of generated sessions.
    pub name: String,
    /// Gap between burst events: uniform in mean ± jitter, floored at 1 ms.
    pub think_time_mean_s: f64,
    pub think_time_jitter_s: f64,
    /// Packets per incoming (server→client) burst.
    pub burst_in: BurstRange,
    /// Packets per outgoing (client→server) burst.
    pub burst_out: BurstRange,
    /// Weighted palette over specific packet sizes; weights plus
    /// `other_size_weight` must sum to 1.
    pub size_palette: Vec<SizeWeight>,
    /// Probability mass of the uniform "any other size" tail.
    pub other_size_weight: f64,
    /// Probability that a burst event is incoming (downstream).
    pub downstream_ratio: f64,
    /// Default session duration when the caller does not override it.
    pub session_duration_s: f64,
}

impl ArchetypeSpec {
    /// Checks the documented invariants; call before generating.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.name.is_empty() {
            return fail("archetype name must be non-empty".into());
        }
        if self.name.contains(',') || self.name.contains('\n') {
            return fail(format!(
                "archetype name {:?} must not contain commas or newlines",
                self.name
            ));
        }
        if !self.think_time_mean_s.is_finite() || self.think_time_mean_s <= 0.0 {
            return fail(format!("{}: think time mean must be > 0", self.name));
        }
        if !(0.0..=self.think_time_mean_s).contains(&self.think_time_jitter_s) {
            return fail(format!(
                "{}: think time jitter must lie in [0, mean]",
                self.name
            ));
        }
        for (which, range) in [("burst_in", self.burst_in), ("burst_out", self.burst_out)] {
            if range.min_packets < 1 || range.max_packets < range.min_packets {
                return fail(format!(
                    "{}: {which} needs 1 <= min_packets <= max_packets",
                    self.name
                ));
            }
        }
        let mut weight_sum = self.other_size_weight;
        for entry in &self.size_palette {
            if entry.size < MIN_PACKET_BYTES {
                return fail(format!(
                    "{}: palette size {} is below the {MIN_PACKET_BYTES}-byte minimum",
                    self.name, entry.size
                ));
            }
            if !entry.weight.is_finite() || entry.weight < 0.0 {
                return fail(format!("{}: palette weights must be >= 0", self.name));
            }
            weight_sum += entry.weight;
        }
        if !self.other_size_weight.is_finite() || self.other_size_weight < 0.0 {
            return fail(format!("{}: other_size_weight must be >= 0", self.name));
        }
        if (weight_sum - 1.0).abs() > 1e-9 {
            return fail(format!(
                "{}: size weights sum to {weight_sum}, expected 1",
                self.name
            ));
        }
        if !self.downstream_ratio.is_finite()
            || self.downstream_ratio <= 0.0
            || self.downstream_ratio >= 1.0
        {
            return fail(format!(
                "{}: downstream_ratio must lie strictly between 0 and 1",
                self.name
            ));
        }
        if !self.session_duration_s.is_finite() || self.session_duration_s <= 0.0 {
            return fail(format!("{}: session duration must be > 0", self.name));
        }
        Ok(())
    }
}

/// The six built-in archetypes. Parameters are calibration knobs chosen so
/// the classes are plausible and mutually separable; they ship as an
/// editable configuration file too.
pub fn default_archetypes() -> Vec<ArchetypeSpec> {
    let palette = |entries: &[(u16, f64)]| -> Vec<SizeWeight> {
        entries
            .iter()
            .map(|&(size, weight)| SizeWeight { size, weight })
            .collect()
    };
    vec![
        ArchetypeSpec {
            name: "video_stream".into(),
            think_time_mean_s: 4.0,
            think_time_jitter_s: 2.0,
            burst_in: BurstRange {
                min_packets: 15,
                max_packets: 35,
            },
            burst_out: BurstRange {
                min_packets: 1,
                max_packets: 3,
            },
            size_palette: palette(&[(1500, 0.60), (1384, 0.12), (1097, 0.08), (583, 0.05)]),
            other_size_weight: 0.15,
            downstream_ratio: 0.85,
            session_duration_s: 120.0,
        },
        ArchetypeSpec {
            name: "audio_stream".into(),
            think_time_mean_s: 2.0,
            think_time_jitter_s: 1.0,
            burst_in: BurstRange {
                min_packets: 5,
                max_packets: 12,
            },
            burst_out: BurstRange {
                min_packets: 1,
                max_packets: 2,
            },
            size_palette: palette(&[(1500, 0.30), (1126, 0.25), (595, 0.20), (233, 0.10)]),
            other_size_weight: 0.15,
            downstream_ratio: 0.80,
            session_duration_s: 120.0,
        },
        ArchetypeSpec {
            name: "social_feed".into(),
            think_time_mean_s: 6.0,
            think_time_jitter_s: 4.0,
            burst_in: BurstRange {
                min_packets: 8,
                max_packets: 20,
            },
            burst_out: BurstRange {
                min_packets: 2,
                max_packets: 5,
            },
            size_palette: palette(&[(1500, 0.35), (1097, 0.20), (583, 0.15), (151, 0.10)]),
            other_size_weight: 0.20,
            downstream_ratio: 0.70,
            session_duration_s: 120.0,
        },
        ArchetypeSpec {
            name: "voip".into(),
            think_time_mean_s: 0.05,
            think_time_jitter_s: 0.03,
            burst_in: BurstRange {
                min_packets: 1,
                max_packets: 3,
            },
            burst_out: BurstRange {
                min_packets: 1,
                max_packets: 3,
            },
            size_palette: palette(&[(151, 0.45), (233, 0.30), (583, 0.10)]),
            other_size_weight: 0.15,
            downstream_ratio: 0.50,
            session_duration_s: 120.0,
        },
        ArchetypeSpec {
            name: "torrent".into(),
            think_time_mean_s: 0.8,
            think_time_jitter_s: 0.4,
            burst_in: BurstRange {
                min_packets: 8,
                max_packets: 16,
            },
            burst_out: BurstRange {
                min_packets: 2,
                max_packets: 5,
            },
            size_palette: palette(&[(1500, 0.75), (1384, 0.10)]),
            other_size_weight: 0.15,
            downstream_ratio: 0.60,
            session_duration_s: 120.0,
        },
        ArchetypeSpec {
            name: "browser".into(),
            think_time_mean_s: 5.0,
            think_time_jitter_s: 3.0,
            burst_in: BurstRange {
                min_packets: 4,
                max_packets: 15,
            },
            burst_out: BurstRange {
                min_packets: 2,
                max_packets: 6,
            },
            size_palette: palette(&[
                (1500, 0.25),
                (595, 0.15),
                (583, 0.15),
                (1109, 0.15),
                (1126, 0.10),
            ]),
            other_size_weight: 0.20,
            downstream_ratio: 0.65,
            session_duration_s: 120.0,
        },
    ]
}

#[derive(Serialize, Deserialize)]
struct ArchetypeFile {
    archetype: Vec<ArchetypeSpec>,
}

/// Loads archetypes from a TOML file (`[[archetype]]` tables) and validates
/// every entry; names must be distinct.
pub fn load_archetypes(path: &Path) -> Result<Vec<ArchetypeSpec>> {
    let text = fs::read_to_string(path)?;
    let file: ArchetypeFile =
        toml::from_str(&text).map_err(|e| Error::Format(format!("archetype file: {e}")))?;
    validate_archetypes(&file.archetype)?;
    Ok(file.archetype)
}

/// Renders archetypes as the TOML accepted by [`load_archetypes`].
pub fn archetypes_to_toml(specs: &[ArchetypeSpec]) -> Result<String> {
    validate_archetypes(specs)?;
    toml::to_string_pretty(&ArchetypeFile {
        archetype: specs.to_vec(),
    })
    .map_err(|e| Error::Format(format!("archetype serialization: {e}")))
}

fn validate_archetypes(specs: &[ArchetypeSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::InvalidConfig(
            "at least one archetype is required".into(),
        ));
    }
    for spec in specs {
        spec.validate()?;
    }
    for (i, spec) in specs.iter().enumerate() {
        if specs[..i].iter().any(|other| other.name == spec.name) {
            return Err(Error::InvalidConfig(format!(
                "duplicate archetype name {:?}",
                spec.name
            )));
        }
    }
    Ok(())
}

const CLIENT_ADDR: Ipv4Addr = Ipv4Addr::new(10, 0, 0, 2);
const GUARD_ADDR: Ipv4Addr = Ipv4Addr::new(203, 0, 113, 1);
const GUARD_PORT: u16 = 443;
const HANDSHAKE_BYTES: u16 = MIN_PACKET_BYTES;

/// Generates one unpadded session for an archetype: SYN/SYN-ACK/ACK
/// handshake, alternating think gaps and bursts, and a closing client FIN.
/// The last packet never exceeds `duration_s`. Deterministic per seed.
pub fn generate_app_trace(spec: &ArchetypeSpec, duration_s: f64, seed: u64) -> TcpSession {
    assert!(duration_s > 0.0, "trace duration must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let client_port: u16 = rng.gen_range(49152..=65535);
    let mut packets: Vec<PacketRecord> = Vec::new();
    let mut push = |t_s: f64, size: u16, flags: TcpFlags, outgoing: bool| {
        let (src, sport, dst, dport) = if outgoing {
            (CLIENT_ADDR, client_port, GUARD_ADDR, GUARD_PORT)
        } else {
            (GUARD_ADDR, GUARD_PORT, CLIENT_ADDR, client_port)
        };
        packets.push(PacketRecord {
            timestamp_us: (t_s * MICROS_PER_SEC).round() as u64,
            src_addr: src,
            dst_addr: dst,
            src_port: sport,
            dst_port: dport,
            size_bytes: size,
            tcp_flags: flags,
            direction: Direction::Unassigned,
        });
    };

    let rtt = rng.gen_range(0.02..0.12f64).min(duration_s / 2.0);
    push(0.0, HANDSHAKE_BYTES, TcpFlags::SYN, true);
    push(
        rtt / 2.0,
        HANDSHAKE_BYTES,
        TcpFlags::SYN | TcpFlags::ACK,
        false,
    );
    push(rtt, HANDSHAKE_BYTES, TcpFlags::ACK, true);

    let mut t = rtt;
    let mut last = rtt;
    loop {
        let jitter = spec.think_time_jitter_s;
        let think = (spec.think_time_mean_s + rng.gen_range(-jitter..=jitter)).max(0.001);
        t += think;
        if t >= duration_s {
            break;
        }
        let incoming = rng.gen_bool(spec.downstream_ratio);
        let range = if incoming {
            spec.burst_in
        } else {
            spec.burst_out
        };
        let count = rng.gen_range(range.min_packets..=range.max_packets);
        for i in 0..count {
            if i > 0 {
                t += rng.gen_range(0.002..0.02);
            }
            if t >= duration_s {
                break;
            }
            let size = sample_size(spec, &mut rng);
            push(t, size, TcpFlags::PSH | TcpFlags::ACK, !incoming);
            last = t;
        }
    }
    let fin_at = (last + rng.gen_range(0.001..0.01)).min(duration_s);
    push(fin_at, HANDSHAKE_BYTES, TcpFlags::FIN | TcpFlags::ACK, true);

    assemble_sessions(&packets, None)
        .pop()
        .expect("generated at least the handshake")
}

fn sample_size(spec: &ArchetypeSpec, rng: &mut impl Rng) -> u16 {
    let total: f64 =
        spec.size_palette.iter().map(|e| e.weight).sum::<f64>() + spec.other_size_weight;
    let mut draw = rng.gen_range(0.0..total);
    for entry in &spec.size_palette {
        if draw < entry.weight {
            return entry.size;
        }
        draw -= entry.weight;
    }
    // Uniform tail over sizes outside the palette's typical range.
    rng.gen_range(MIN_PACKET_BYTES + 1..=1500)
}

/// One corpus session: which file, which label, which seed produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub filename: String,
    pub label: String,
    pub padding_mode: PaddingMode,
    /// Per-session seed; trace and padding streams derive from it.
    pub seed: u64,
}

/// Description of a generated corpus, stored next to its PCAP files.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub padding_mode: PaddingMode,
    pub padding_cell_bytes: u16,
    pub duration_s: f64,
    pub seed: u64,
    pub rows: Vec<ManifestRow>,
}

const MANIFEST_TAG: &str = "torscope-manifest";

/// Standard manifest filename inside a corpus directory.
pub const MANIFEST_NAME: &str = "manifest.csv";

/// Writes a manifest: one header line, then `filename,label,padding_mode,seed`
/// rows in generation order.
pub fn save_manifest(manifest: &CorpusManifest, path: &Path) -> Result<()> {
    let mut out = format!(
        "{MANIFEST_TAG},version=1,padding={},cell_bytes={},duration_s={},seed={}\n",
        manifest.padding_mode, manifest.padding_cell_bytes, manifest.duration_s, manifest.seed
    );
    for row in &manifest.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.filename, row.label, row.padding_mode, row.seed
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a manifest written by [`save_manifest`].
pub fn load_manifest(path: &Path) -> Result<CorpusManifest> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("manifest file is empty".into()))?;
    let mut parts = header.split(',');
    if parts.next() != Some(MANIFEST_TAG) {
        return Err(Error::Format(format!(
            "expected {MANIFEST_TAG:?} header in manifest"
        )));
    }
    let mut padding = None;
    let mut cell_bytes = None;
    let mut duration = None;
    let mut seed = None;
    for part in parts {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("malformed manifest header field {part:?}")))?;
        match key {
            "version" => {
                if value != "1" {
                    return Err(Error::Format(format!(
                        "unsupported manifest version {value}"
                    )));
                }
            }
            "padding" => padding = Some(value.parse::<PaddingMode>()?),
            "cell_bytes" => cell_bytes = Some(parse_field(value, "cell_bytes")?),
            "duration_s" => duration = Some(parse_field(value, "duration_s")?),
            "seed" => seed = Some(parse_field(value, "seed")?),
            _ => {}
        }
    }
    let missing = |what: &str| Error::Format(format!("manifest header missing {what}="));
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Format(format!(
                "manifest line {}: expected 4 fields, found {}",
                idx + 2,
                fields.len()
            )));
        }
        rows.push(ManifestRow {
            filename: fields[0].to_string(),
            label: fields[1].to_string(),
            padding_mode: fields[2].parse()?,
            seed: parse_field(fields[3], "row seed")?,
        });
    }
    Ok(CorpusManifest {
        padding_mode: padding.ok_or_else(|| missing("padding"))?,
        padding_cell_bytes: cell_bytes.ok_or_else(|| missing("cell_bytes"))?,
        duration_s: duration.ok_or_else(|| missing("duration_s"))?,
        seed: seed.ok_or_else(|| missing("seed"))?,
        rows,
    })
}

fn parse_field<T: std::str::FromStr>(text: &str, what: &str) -> Result<T> {
    text.parse()
        .map_err(|_| Error::Format(format!("bad manifest {what} value {text:?}")))
}

/// Generates `|specs| × sessions_per_class` padded sessions, writes one PCAP
/// per session into `out_dir` plus a manifest, and returns the manifest.
///
/// Determinism: session i of spec j derives its seed from the corpus seed
/// and its global index, so `(specs, seed)` fully determine the bytes on
/// disk.
pub fn build_labeled_corpus(
    specs: &[ArchetypeSpec],
    sessions_per_class: usize,
    duration_s: f64,
    padding: &PaddingConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<CorpusManifest> {
    validate_archetypes(specs)?;
    if sessions_per_class < 1 {
        return Err(Error::InvalidConfig(
            "sessions_per_class must be at least 1".into(),
        ));
    }
    if !duration_s.is_finite() || duration_s <= 0.0 {
        return Err(Error::InvalidConfig("duration must be positive".into()));
    }
    fs::create_dir_all(out_dir)?;

    let mut rows = Vec::with_capacity(specs.len() * sessions_per_class);
    for (spec_idx, spec) in specs.iter().enumerate() {
        for s in 0..sessions_per_class {
            let global = (spec_idx * sessions_per_class + s) as u64;
            let session_seed = derive_seed(seed, global);
            let session = generate_app_trace(spec, duration_s, derive_seed(session_seed, 0));
            let mut padding_rng = ChaCha8Rng::seed_from_u64(derive_seed(session_seed, 1));
            let padded = inject_padding(&session.packets, padding, &mut padding_rng);
            let filename = format!("{}_{s:04}.pcap", spec.name);
            write_pcap(&padded, &out_dir.join(&filename))?;
            rows.push(ManifestRow {
                filename,
                label: spec.name.clone(),
                padding_mode: padding.mode,
                seed: session_seed,
            });
        }
    }
    let manifest = CorpusManifest {
        padding_mode: padding.mode,
        padding_cell_bytes: padding.padding_cell_size,
        duration_s,
        seed,
        rows,
    };
    save_manifest(&manifest, &out_dir.join(MANIFEST_NAME))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::read_pcap;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn real_packets(times_s: &[f64]) -> Vec<PacketRecord> {
        times_s
            .iter()
            .enumerate()
            .map(|(i, &t)| PacketRecord {
                timestamp_us: (t * 1e6).round() as u64,
                src_addr: CLIENT_ADDR,
                dst_addr: GUARD_ADDR,
                src_port: 50000,
                dst_port: GUARD_PORT,
                size_bytes: 600 + i as u16,
                tcp_flags: TcpFlags::PSH | TcpFlags::ACK,
                direction: Direction::Outgoing,
            })
            .collect()
    }

    #[test]
    fn timeout_samples_stay_in_mode_ranges() {
        let mut r = rng(1);
        let full = PaddingConfig::new(PaddingMode::Full);
        for _ in 0..10_000 {
            let t = sample_padding_timeout(&full, &mut r).unwrap();
            assert!((1.5..=9.5).contains(&t), "full-mode draw {t}");
        }
        let reduced = PaddingConfig::new(PaddingMode::Reduced);
        for _ in 0..10_000 {
            let t = sample_padding_timeout(&reduced, &mut r).unwrap();
            assert!((9.0..=14.0).contains(&t), "reduced-mode draw {t}");
        }
    }

    #[test]
    fn timeout_requires_padding_enabled() {
        let none = PaddingConfig::new(PaddingMode::None);
        assert!(matches!(
            sample_padding_timeout(&none, &mut rng(0)),
            Err(Error::PaddingModeNone)
        ));
    }

    #[test]
    fn timeout_sequence_is_reproducible() {
        let config = PaddingConfig::new(PaddingMode::Full);
        let a: Vec<f64> = (0..50)
            .map(|_| sample_padding_timeout(&config, &mut rng(9)).unwrap())
            .collect();
        let mut r1 = rng(9);
        let mut r2 = rng(9);
        for _ in 0..50 {
            assert_eq!(
                sample_padding_timeout(&config, &mut r1).unwrap(),
                sample_padding_timeout(&config, &mut r2).unwrap()
            );
        }
        // Fresh rng per draw vs. one shared rng differ; both are deterministic.
        assert!(a.iter().all(|t| (1.5..9.5).contains(t)));
    }

    #[test]
    fn none_mode_is_identity() {
        let packets = real_packets(&[0.0, 30.0]);
        let config = PaddingConfig::new(PaddingMode::None);
        assert_eq!(inject_padding(&packets, &config, &mut rng(3)), packets);
    }

    #[test]
    fn long_gap_is_filled_under_full_padding() {
        let packets = real_packets(&[0.0, 30.0]);
        let config = PaddingConfig::new(PaddingMode::Full);
        let out = inject_padding(&packets, &config, &mut rng(4));
        let injected = out.len() - packets.len();
        assert!(
            injected >= 3,
            "expected >= floor(30/9.5) = 3, got {injected}"
        );
        for pair in out.windows(2) {
            let gap = (pair[1].timestamp_us - pair[0].timestamp_us) as f64 / 1e6;
            assert!(gap <= 9.5, "gap {gap} exceeds the full-mode maximum");
        }
        // Both sides' timers fire over a 30 s quiet period.
        assert!(out
            .iter()
            .any(|p| p.tcp_flags.is_empty() && p.direction == Direction::Outgoing));
        assert!(out
            .iter()
            .any(|p| p.tcp_flags.is_empty() && p.direction == Direction::Incoming));
    }

    #[test]
    fn short_gap_stays_unpadded_in_reduced_mode() {
        let packets = real_packets(&[0.0, 5.0]);
        let config = PaddingConfig::new(PaddingMode::Reduced);
        let out = inject_padding(&packets, &config, &mut rng(5));
        assert_eq!(out, packets);
    }

    #[test]
    fn real_packets_survive_padding_verbatim_and_order_holds() {
        let packets = real_packets(&[0.0, 12.0, 13.0, 50.0]);
        let config = PaddingConfig::new(PaddingMode::Reduced);
        let out = inject_padding(&packets, &config, &mut rng(6));
        let reals: Vec<PacketRecord> = out
            .iter()
            .filter(|p| !p.tcp_flags.is_empty())
            .cloned()
            .collect();
        assert_eq!(reals, packets);
        assert!(out
            .windows(2)
            .all(|w| w[0].timestamp_us <= w[1].timestamp_us));
        for p in &out {
            if p.tcp_flags.is_empty() {
                assert_eq!(p.size_bytes, DEFAULT_PADDING_CELL_BYTES);
            }
        }
    }

    #[test]
    fn generated_trace_respects_duration_and_framing() {
        let spec = &default_archetypes()[0];
        let session = generate_app_trace(spec, 60.0, 77);
        let first = session.packets.first().unwrap();
        let last = session.packets.last().unwrap();
        assert!(first.tcp_flags.contains(TcpFlags::SYN));
        assert!(!first.tcp_flags.contains(TcpFlags::ACK));
        assert_eq!(first.direction, Direction::Outgoing);
        assert!(last.tcp_flags.contains(TcpFlags::FIN));
        assert_eq!(last.direction, Direction::Outgoing);
        assert!(last.timestamp_s() <= 60.0);
        assert!(session.fin_seen);
        assert!(session
            .packets
            .windows(2)
            .all(|w| w[0].timestamp_us <= w[1].timestamp_us));
    }

    #[test]
    fn same_seed_reproduces_trace() {
        let spec = &default_archetypes()[3];
        let a = generate_app_trace(spec, 45.0, 123);
        let b = generate_app_trace(spec, 45.0, 123);
        assert_eq!(a, b);
        let c = generate_app_trace(spec, 45.0, 124);
        assert_ne!(a, c);
    }

    #[test]
    fn voip_is_chatty_and_balanced() {
        let specs = default_archetypes();
        let voip = specs.iter().find(|s| s.name == "voip").unwrap();
        let social = specs.iter().find(|s| s.name == "social_feed").unwrap();
        let session = generate_app_trace(voip, 60.0, 8);
        let max_gap = session
            .packets
            .windows(2)
            .map(|w| (w[1].timestamp_us - w[0].timestamp_us) as f64 / 1e6)
            .fold(0.0f64, f64::max);
        assert!(
            max_gap < social.think_time_mean_s,
            "voip max gap {max_gap} should stay below social think time"
        );
        let incoming = session
            .packets
            .iter()
            .filter(|p| p.direction == Direction::Incoming)
            .count() as f64;
        let ratio = incoming / session.packets.len() as f64;
        assert!(
            (ratio - voip.downstream_ratio).abs() <= 0.2,
            "incoming fraction {ratio} strays from spec ratio"
        );
    }

    #[test]
    fn archetype_validation_catches_bad_specs() {
        let mut spec = default_archetypes()[0].clone();
        spec.size_palette[0].weight += 0.5;
        assert!(matches!(spec.validate(), Err(Error::InvalidConfig(_))));

        let mut spec = default_archetypes()[0].clone();
        spec.burst_in.min_packets = 0;
        assert!(spec.validate().is_err());

        let mut spec = default_archetypes()[0].clone();
        spec.name = "bad,name".into();
        assert!(spec.validate().is_err());

        let mut spec = default_archetypes()[0].clone();
        spec.downstream_ratio = 1.0;
        assert!(spec.validate().is_err());

        assert!(default_archetypes().iter().all(|s| s.validate().is_ok()));
    }

    #[test]
    fn archetypes_round_trip_through_toml() {
        let specs = default_archetypes();
        let text = archetypes_to_toml(&specs).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("archetypes.toml");
        fs::write(&path, text).unwrap();
        let loaded = load_archetypes(&path).unwrap();
        assert_eq!(loaded, specs);
    }

    #[test]
    fn corpus_counts_files_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let specs: Vec<ArchetypeSpec> = default_archetypes().into_iter().take(2).collect();
        let padding = PaddingConfig::new(PaddingMode::Reduced);
        let manifest = build_labeled_corpus(&specs, 3, 20.0, &padding, 55, dir.path()).unwrap();
        assert_eq!(manifest.rows.len(), 6);
        for row in &manifest.rows {
            let contents = read_pcap(&dir.path().join(&row.filename)).unwrap();
            assert!(!contents.packets.is_empty());
            assert_eq!(contents.skipped, 0);
        }
        let loaded = load_manifest(&dir.path().join(MANIFEST_NAME)).unwrap();
        assert_eq!(loaded, manifest);
    }

    #[test]
    fn corpus_is_deterministic() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let specs: Vec<ArchetypeSpec> = default_archetypes().into_iter().take(2).collect();
        let padding = PaddingConfig::new(PaddingMode::Full);
        let a = build_labeled_corpus(&specs, 2, 15.0, &padding, 9, dir_a.path()).unwrap();
        let b = build_labeled_corpus(&specs, 2, 15.0, &padding, 9, dir_b.path()).unwrap();
        assert_eq!(a.rows, b.rows);
        for row in &a.rows {
            let bytes_a = fs::read(dir_a.path().join(&row.filename)).unwrap();
            let bytes_b = fs::read(dir_b.path().join(&row.filename)).unwrap();
            assert_eq!(bytes_a, bytes_b, "{} differs between runs", row.filename);
        }
    }

    #[test]
    fn full_padding_corpus_respects_gap_bound() {
        let dir = tempfile::tempdir().unwrap();
        let specs: Vec<ArchetypeSpec> = default_archetypes()
            .into_iter()
            .filter(|s| s.name == "social_feed")
            .collect();
        let padding = PaddingConfig::new(PaddingMode::Full);
        let manifest = build_labeled_corpus(&specs, 3, 40.0, &padding, 31, dir.path()).unwrap();
        for row in &manifest.rows {
            let contents = read_pcap(&dir.path().join(&row.filename)).unwrap();
            for pair in contents.packets.windows(2) {
                let gap = (pair[1].timestamp_us - pair[0].timestamp_us) as f64 / 1e6;
                assert!(gap <= 9.5, "{}: gap {gap}", row.filename);
            }
        }
    }

    #[test]
    fn manifest_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let manifest = CorpusManifest {
            padding_mode: PaddingMode::Reduced,
            padding_cell_bytes: 543,
            duration_s: 120.0,
            seed: 42,
            rows: vec![ManifestRow {
                filename: "voip_0000.pcap".into(),
                label: "voip".into(),
                padding_mode: PaddingMode::Reduced,
                seed: 7,
            }],
        };
        save_manifest(&manifest, &path).unwrap();
        assert_eq!(load_manifest(&path).unwrap(), manifest);

        fs::write(&path, "not-a-manifest,padding=none\n").unwrap();
        assert!(matches!(load_manifest(&path), Err(Error::Format(_))));
    }
}
