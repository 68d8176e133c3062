//! Classic-PCAP reading/writing and TCP session assembly.
//!
//! The reader accepts the classic capture format (magic `0xA1B2C3D4`, native
//! or byte-swapped) over Ethernet, raw-IP, or Linux cooked link layers, and
//! keeps only TCP-over-IPv4 packets. The writer always emits little-endian
//! classic PCAP with raw-IP framing and minimal IPv4+TCP headers, so that a
//! written trace reads back field-for-field.
//!
//! Packet size is the IP total-length field, not the captured frame length,
//! which keeps sizes link-layer independent.

use std::collections::HashMap;
use std::fs;
use std::net::Ipv4Addr;
use std::path::Path;

use bitflags::bitflags;

use crate::{Error, Result};

const MAGIC: u32 = 0xA1B2_C3D4;
const MAGIC_SWAPPED: u32 = 0xD4C3_B2A1;
const LINKTYPE_ETHERNET: u32 = 1;
const LINKTYPE_RAW_IP: u32 = 101;
const LINKTYPE_LINUX_SLL: u32 = 113;
const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;
const MICROS_PER_SEC: u64 = 1_000_000;

/// Minimal on-the-wire packet: IPv4 header (20) plus TCP header (20).
pub const MIN_PACKET_BYTES: u16 = 40;

bitflags! {
    /// TCP control flags carried by a packet.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
    pub struct TcpFlags: u8 {
        const FIN = 0x01;
        const SYN = 0x02;
        const RST = 0x04;
        const PSH = 0x08;
        const ACK = 0x10;
        const URG = 0x20;
    }
}

/// Which endpoint sent a packet, relative to the session's client.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Sent by the client endpoint.
    Outgoing,
    /// Sent by the other endpoint.
    Incoming,
    /// Not yet attributed; session assembly assigns it.
    Unassigned,
}

/// One captured TCP-over-IPv4 packet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketRecord {
    /// Microseconds since the epoch.
    pub timestamp_us: u64,
    pub src_addr: Ipv4Addr,
    pub dst_addr: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
    /// IP total length in bytes.
    pub size_bytes: u16,
    pub tcp_flags: TcpFlags,
    pub direction: Direction,
}

impl PacketRecord {
    /// Timestamp in seconds.
    pub fn timestamp_s(&self) -> f64 {
        self.timestamp_us as f64 / MICROS_PER_SEC as f64
    }

    pub fn source(&self) -> (Ipv4Addr, u16) {
        (self.src_addr, self.src_port)
    }

    pub fn destination(&self) -> (Ipv4Addr, u16) {
        (self.dst_addr, self.dst_port)
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }
}

/// Unordered 5-tuple identifying a TCP session (protocol is always TCP).
///
/// Endpoints are stored in canonical order so either packet orientation maps
/// to the same key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SessionKey {
    pub endpoint_a: (Ipv4Addr, u16),
    pub endpoint_b: (Ipv4Addr, u16),
}

impl SessionKey {
    pub fn from_packet(packet: &PacketRecord) -> Self {
        let src = packet.source();
        let dst = packet.destination();
        if src <= dst {
            Self {
                endpoint_a: src,
                endpoint_b: dst,
            }
        } else {
            Self {
                endpoint_a: dst,
                endpoint_b: src,
            }
        }
    }

    /// True when the packet's 5-tuple matches this key in either orientation.
    pub fn matches(&self, packet: &PacketRecord) -> bool {
        *self == Self::from_packet(packet)
    }
}

impl std::fmt::Display for SessionKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}:{}<->{}:{}",
            self.endpoint_a.0, self.endpoint_a.1, self.endpoint_b.0, self.endpoint_b.1
        )
    }
}

/// Time-ordered packets sharing a 5-tuple, oriented around a client endpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TcpSession {
    pub key: SessionKey,
    pub client_endpoint: (Ipv4Addr, u16),
    /// Sorted by timestamp, capture order on ties. Directions are assigned.
    pub packets: Vec<PacketRecord>,
    pub fin_seen: bool,
}

impl TcpSession {
    pub fn id(&self) -> String {
        self.key.to_string()
    }
}

/// Result of reading a capture: parsed TCP/IPv4 packets plus a count of
/// records that were skipped (non-TCP, non-IPv4, or unparseable).
#[derive(Debug, Clone)]
pub struct PcapContents {
    pub packets: Vec<PacketRecord>,
    pub skipped: u64,
    pub link_type: u32,
}

/// Reads a classic PCAP file, returning TCP-over-IPv4 packets in file order.
pub fn read_pcap(path: &Path) -> Result<PcapContents> {
    let data = fs::read(path)?;
    parse_pcap(&data)
}

/// Parses classic-PCAP bytes. See [`read_pcap`].
pub fn parse_pcap(data: &[u8]) -> Result<PcapContents> {
    if data.len() < GLOBAL_HEADER_LEN {
        return Err(Error::Truncated {
            offset: data.len() as u64,
        });
    }
    let raw_magic = u32::from_le_bytes(data[0..4].try_into().unwrap());
    let big_endian = match raw_magic {
        MAGIC => false,
        MAGIC_SWAPPED => true,
        other => return Err(Error::BadMagic(other)),
    };
    let read_u32 = |bytes: &[u8]| -> u32 {
        let arr: [u8; 4] = bytes.try_into().unwrap();
        if big_endian {
            u32::from_be_bytes(arr)
        } else {
            u32::from_le_bytes(arr)
        }
    };
    let link_type = read_u32(&data[20..24]);
    if ![LINKTYPE_ETHERNET, LINKTYPE_RAW_IP, LINKTYPE_LINUX_SLL].contains(&link_type) {
        return Err(Error::UnsupportedLinkType(link_type));
    }

    let mut packets = Vec::new();
    let mut skipped = 0u64;
    let mut offset = GLOBAL_HEADER_LEN;
    while offset < data.len() {
        if data.len() - offset < RECORD_HEADER_LEN {
            return Err(Error::Truncated {
                offset: offset as u64,
            });
        }
        let ts_sec = read_u32(&data[offset..offset + 4]) as u64;
        let ts_usec = read_u32(&data[offset + 4..offset + 8]) as u64;
        let incl_len = read_u32(&data[offset + 8..offset + 12]) as usize;
        let body_start = offset + RECORD_HEADER_LEN;
        if data.len() - body_start < incl_len {
            return Err(Error::Truncated {
                offset: offset as u64,
            });
        }
        let frame = &data[body_start..body_start + incl_len];
        match strip_link_layer(frame, link_type).and_then(parse_ipv4_tcp) {
            Some(mut packet) => {
                packet.timestamp_us = ts_sec * MICROS_PER_SEC + ts_usec;
                packets.push(packet);
            }
            None => skipped += 1,
        }
        offset = body_start + incl_len;
    }
    Ok(PcapContents {
        packets,
        skipped,
        link_type,
    })
}

fn strip_link_layer(frame: &[u8], link_type: u32) -> Option<&[u8]> {
    match link_type {
        LINKTYPE_RAW_IP => Some(frame),
        LINKTYPE_ETHERNET => {
            if frame.len() < 14 {
                return None;
            }
            let ethertype = u16::from_be_bytes([frame[12], frame[13]]);
            (ethertype == 0x0800).then(|| &frame[14..])
        }
        LINKTYPE_LINUX_SLL => {
            if frame.len() < 16 {
                return None;
            }
            let protocol = u16::from_be_bytes([frame[14], frame[15]]);
            (protocol == 0x0800).then(|| &frame[16..])
        }
        _ => None,
    }
}

/// Parses IPv4+TCP headers; `None` means the packet is not TCP-over-IPv4 or
/// the capture is too short to hold the headers. Timestamp is filled by the
/// caller.
fn parse_ipv4_tcp(ip: &[u8]) -> Option<PacketRecord> {
    if ip.len() < 20 || ip[0] >> 4 != 4 {
        return None;
    }
    let ihl = ((ip[0] & 0x0F) as usize) * 4;
    if ihl < 20 || ip[9] != 6 {
        return None;
    }
    let total_length = u16::from_be_bytes([ip[2], ip[3]]);
    if (total_length as usize) < ihl + 20 {
        return None;
    }
    // Need the TCP header through the flags byte.
    if ip.len() < ihl + 14 {
        return None;
    }
    let src_addr = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
    let dst_addr = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);
    let tcp = &ip[ihl..];
    Some(PacketRecord {
        timestamp_us: 0,
        src_addr,
        dst_addr,
        src_port: u16::from_be_bytes([tcp[0], tcp[1]]),
        dst_port: u16::from_be_bytes([tcp[2], tcp[3]]),
        size_bytes: total_length,
        tcp_flags: TcpFlags::from_bits_truncate(tcp[13] & 0x3F),
        direction: Direction::Unassigned,
    })
}

/// Writes packets as little-endian classic PCAP (version 2.4, raw-IP link
/// type, microsecond timestamps). Each packet becomes a minimal IPv4+TCP
/// header padded with zeros to the record's total length, so
/// `read_pcap(write_pcap(p))` reproduces every wire field.
pub fn write_pcap(packets: &[PacketRecord], path: &Path) -> Result<()> {
    if packets
        .windows(2)
        .any(|w| w[0].timestamp_us > w[1].timestamp_us)
    {
        return Err(Error::UnorderedPackets);
    }
    if let Some(p) = packets.iter().find(|p| p.size_bytes < MIN_PACKET_BYTES) {
        return Err(Error::UndersizedPacket(p.size_bytes));
    }
    let total: usize = packets
        .iter()
        .map(|p| RECORD_HEADER_LEN + p.size_bytes as usize)
        .sum();
    let mut out = Vec::with_capacity(GLOBAL_HEADER_LEN + total);
    out.extend_from_slice(&MAGIC.to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes()); // version major
    out.extend_from_slice(&4u16.to_le_bytes()); // version minor
    out.extend_from_slice(&0u32.to_le_bytes()); // thiszone
    out.extend_from_slice(&0u32.to_le_bytes()); // sigfigs
    out.extend_from_slice(&65535u32.to_le_bytes()); // snaplen
    out.extend_from_slice(&LINKTYPE_RAW_IP.to_le_bytes());

    for packet in packets {
        let ts_sec = (packet.timestamp_us / MICROS_PER_SEC) as u32;
        let ts_usec = (packet.timestamp_us % MICROS_PER_SEC) as u32;
        let len = packet.size_bytes as u32;
        out.extend_from_slice(&ts_sec.to_le_bytes());
        out.extend_from_slice(&ts_usec.to_le_bytes());
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&len.to_le_bytes());
        encode_packet(packet, &mut out);
    }
    fs::write(path, out)?;
    Ok(())
}

fn encode_packet(packet: &PacketRecord, out: &mut Vec<u8>) {
    let mut ip = [0u8; 20];
    ip[0] = 0x45; // version 4, IHL 5
    ip[2..4].copy_from_slice(&packet.size_bytes.to_be_bytes());
    ip[8] = 64; // TTL
    ip[9] = 6; // TCP
    ip[12..16].copy_from_slice(&packet.src_addr.octets());
    ip[16..20].copy_from_slice(&packet.dst_addr.octets());
    let checksum = ipv4_checksum(&ip);
    ip[10..12].copy_from_slice(&checksum.to_be_bytes());
    out.extend_from_slice(&ip);

    let mut tcp = [0u8; 20];
    tcp[0..2].copy_from_slice(&packet.src_port.to_be_bytes());
    tcp[2..4].copy_from_slice(&packet.dst_port.to_be_bytes());
    tcp[12] = 5 << 4; // data offset
    tcp[13] = packet.tcp_flags.bits();
    tcp[14..16].copy_from_slice(&0xFFFFu16.to_be_bytes()); // window
    out.extend_from_slice(&tcp);

    let payload = packet.size_bytes as usize - MIN_PACKET_BYTES as usize;
    out.resize(out.len() + payload, 0);
}

fn ipv4_checksum(header: &[u8; 20]) -> u16 {
    let mut sum = 0u32;
    for chunk in header.chunks(2) {
        sum += u16::from_be_bytes([chunk[0], chunk[1]]) as u32;
    }
    while sum > 0xFFFF {
        sum = (sum & 0xFFFF) + (sum >> 16);
    }
    !(sum as u16)
}

/// Groups packets into client-oriented TCP sessions.
///
/// The client endpoint is the sender of the first SYN-without-ACK, falling
/// back to the sender of the chronologically first packet. A `client_hint`
/// address overrides both rules for sessions it matches. Every packet's
/// direction is assigned relative to the chosen client.
pub fn assemble_sessions(
    packets: &[PacketRecord],
    client_hint: Option<Ipv4Addr>,
) -> Vec<TcpSession> {
    let mut order: Vec<SessionKey> = Vec::new();
    let mut groups: HashMap<SessionKey, Vec<PacketRecord>> = HashMap::new();
    for packet in packets {
        let key = SessionKey::from_packet(packet);
        groups.entry(key).or_insert_with(|| {
            order.push(key);
            Vec::new()
        });
        groups.get_mut(&key).unwrap().push(packet.clone());
    }

    order
        .into_iter()
        .map(|key| {
            let mut packets = groups.remove(&key).unwrap();
            // Stable sort keeps capture order on equal timestamps.
            packets.sort_by_key(|p| p.timestamp_us);
            let client_endpoint = pick_client(&key, &packets, client_hint);
            let mut fin_seen = false;
            for packet in &mut packets {
                packet.direction = if packet.source() == client_endpoint {
                    Direction::Outgoing
                } else {
                    Direction::Incoming
                };
                fin_seen |= packet.tcp_flags.contains(TcpFlags::FIN);
            }
            TcpSession {
                key,
                client_endpoint,
                packets,
                fin_seen,
            }
        })
        .collect()
}

fn pick_client(
    key: &SessionKey,
    sorted: &[PacketRecord],
    hint: Option<Ipv4Addr>,
) -> (Ipv4Addr, u16) {
    if let Some(addr) = hint {
        // Only unambiguous matches: exactly one endpoint carries the address.
        let a = key.endpoint_a.0 == addr;
        let b = key.endpoint_b.0 == addr;
        if a != b {
            return if a { key.endpoint_a } else { key.endpoint_b };
        }
    }
    sorted
        .iter()
        .find(|p| p.tcp_flags.contains(TcpFlags::SYN) && !p.tcp_flags.contains(TcpFlags::ACK))
        .map(|p| p.source())
        .unwrap_or_else(|| sorted[0].source())
}
