//! Wire format of CAN records aggregated into one Ethernet payload.
//!
//! ```text
//! [count: u16 BE] { [id: u16 BE, 11 bits used] [dlc: u8] [data: dlc bytes] }*  [zero padding]
//! ```
//! The payload is padded with zeros to the 46 byte Ethernet minimum.

use thiserror::Error;

use crate::can::{CanId, MAX_CAN_PAYLOAD};
use crate::ethernet::{MAX_ETH_PAYLOAD, MIN_ETH_PAYLOAD};

pub const COUNT_PREFIX_BYTES: usize = 2;
pub const RECORD_HEADER_BYTES: usize = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MalformedAggregate {
    #[error("aggregate shorter than its record-count prefix")]
    MissingCount,
    #[error("record {index} header is truncated")]
    TruncatedHeader { index: usize },
    #[error("record {index} declares {dlc} data bytes but only {available} remain")]
    TruncatedData { index: usize, dlc: usize, available: usize },
    #[error("record {index} has dlc {dlc} > 8")]
    BadDlc { index: usize, dlc: usize },
    #[error("record {index} carries id {id} wider than 11 bits")]
    BadId { index: usize, id: u16 },
    #[error("records end at byte {used} but content is {content} bytes")]
    Untiled { used: usize, content: usize },
    #[error("padding contains non-zero bytes")]
    DirtyPadding,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanRecord {
    pub id: CanId,
    pub data: Vec<u8>,
}

pub fn record_len(dlc: usize) -> usize {
    RECORD_HEADER_BYTES + dlc
}

/// Encoded size before padding.
pub fn content_len<'a>(dlcs: impl IntoIterator<Item = &'a usize>) -> usize {
    COUNT_PREFIX_BYTES + dlcs.into_iter().map(|d| record_len(*d)).sum::<usize>()
}

/// Encodes records; returns (padded payload, content length before padding).
pub fn encode(records: &[CanRecord]) -> (Vec<u8>, usize) {
    assert!(records.len() <= u16::MAX as usize);
    let mut out = Vec::with_capacity(MIN_ETH_PAYLOAD as usize);
    out.extend_from_slice(&(records.len() as u16).to_be_bytes());
    for r in records {
        assert!(r.data.len() <= MAX_CAN_PAYLOAD);
        out.extend_from_slice(&r.id.raw().to_be_bytes());
        out.push(r.data.len() as u8);
        out.extend_from_slice(&r.data);
    }
    let content = out.len();
    if out.len() < MIN_ETH_PAYLOAD as usize {
        out.resize(MIN_ETH_PAYLOAD as usize, 0);
    }
    (out, content)
}

/// Decodes a padded aggregate. `content` is the unpadded length the records
/// must tile exactly.
pub fn decode(payload: &[u8], content: usize) -> Result<Vec<CanRecord>, MalformedAggregate> {
    if payload.len() < COUNT_PREFIX_BYTES || content < COUNT_PREFIX_BYTES {
        return Err(MalformedAggregate::MissingCount);
    }
    let count = u16::from_be_bytes([payload[0], payload[1]]) as usize;
    let body = &payload[..content.min(payload.len())];
    let mut pos = COUNT_PREFIX_BYTES;
    let mut records = Vec::with_capacity(count);
    for index in 0..count {
        if pos + RECORD_HEADER_BYTES > body.len() {
            return Err(MalformedAggregate::TruncatedHeader { index });
        }
        let raw_id = u16::from_be_bytes([body[pos], body[pos + 1]]);
        let dlc = body[pos + 2] as usize;
        if raw_id > CanId::MAX {
            return Err(MalformedAggregate::BadId { index, id: raw_id });
        }
        if dlc > MAX_CAN_PAYLOAD {
            return Err(MalformedAggregate::BadDlc { index, dlc });
        }
        pos += RECORD_HEADER_BYTES;
        let available = body.len() - pos;
        if dlc > available {
            return Err(MalformedAggregate::TruncatedData { index, dlc, available });
        }
        records.push(CanRecord {
            id: CanId::new(raw_id as u32).expect("checked"),
            data: body[pos..pos + dlc].to_vec(),
        });
        pos += dlc;
    }
    if pos != content {
        return Err(MalformedAggregate::Untiled { used: pos, content });
    }
    if payload[content.min(payload.len())..].iter().any(|b| *b != 0) {
        return Err(MalformedAggregate::DirtyPadding);
    }
    Ok(records)
}

/// Splits records into consecutive groups whose encodings fit one Ethernet
/// payload, preserving order.
pub fn split_for_mtu(dlcs: &[usize]) -> Vec<std::ops::Range<usize>> {
    let limit = MAX_ETH_PAYLOAD as usize;
    let mut out = Vec::new();
    let mut start = 0;
    let mut size = COUNT_PREFIX_BYTES;
    for (i, d) in dlcs.iter().enumerate() {
        let r = record_len(*d);
        if size + r > limit && i > start {
            out.push(start..i);
            start = i;
            size = COUNT_PREFIX_BYTES;
        }
        size += r;
    }
    if start < dlcs.len() {
        out.push(start..dlcs.len());
    }
    out
}
