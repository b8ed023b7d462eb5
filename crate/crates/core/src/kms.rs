//! Key Management Service fed by QKD links.
//!
//! Keys move `Available → Assigned → Consumed` and never back. Assignment
//! is FIFO per link. Each endpoint of a grant may read the key bytes once;
//! consumption zeroizes them. Every state change is appended to an audit
//! log whose records are `time,event,key_id,link,state_from,state_to`.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::io::{self, Write};

use thiserror::Error;
use zeroize::Zeroize;

use crate::ids::{KeyId, LinkId, NodeId, SimTime};
use crate::qkd::{QkdKeyBlock, RoundStatus};

pub const DEFAULT_LOW_WATERMARK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KeyState {
    Available,
    Assigned,
    Consumed,
}

impl fmt::Display for KeyState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KeyState::Available => "available",
            KeyState::Assigned => "assigned",
            KeyState::Consumed => "consumed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyPoolEntry {
    pub key_id: KeyId,
    pub bytes: Vec<u8>,
    pub link_id: LinkId,
    pub state: KeyState,
    pub created_at: SimTime,
    pub assigned_to: Option<(NodeId, NodeId)>,
    fetched_by: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyRequest {
    pub requester: NodeId,
    pub peer: NodeId,
    pub purpose: String,
    pub requested_bits: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyGrant {
    pub key_id: KeyId,
    pub link_id: LinkId,
    pub bytes: Vec<u8>,
    pub requester: NodeId,
    pub peer: NodeId,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KmsError {
    #[error("link {0} is not registered")]
    UnknownLink(LinkId),
    #[error("key {0} already ingested")]
    DuplicateKeyId(KeyId),
    #[error("key block comes from an aborted round")]
    NotDistilled,
    #[error("no available key on link {0}")]
    EmptyPool(LinkId),
    #[error("no QKD link connects {0} and {1}")]
    UnknownPair(NodeId, NodeId),
    #[error("requested {requested} bits but blocks carry {available}")]
    BitsUnavailable { requested: usize, available: usize },
    #[error("unknown key {0}")]
    UnknownKey(KeyId),
    #[error("key {key_id} is {actual}, expected {expected}")]
    WrongState { key_id: KeyId, expected: KeyState, actual: KeyState },
    #[error("{endpoint} may not fetch key {key_id}")]
    FetchDenied { key_id: KeyId, endpoint: NodeId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuditEvent {
    Ingest,
    Grant,
    Fetch,
    Consume,
    Deny,
}

impl fmt::Display for AuditEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AuditEvent::Ingest => "ingest",
            AuditEvent::Grant => "grant",
            AuditEvent::Fetch => "fetch",
            AuditEvent::Consume => "consume",
            AuditEvent::Deny => "deny",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditRecord {
    pub time: SimTime,
    pub event: AuditEvent,
    pub key_id: Option<KeyId>,
    pub link_id: LinkId,
    pub state_from: Option<KeyState>,
    pub state_to: Option<KeyState>,
}

impl fmt::Display for AuditRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |s: Option<KeyState>| s.map_or_else(|| "-".to_string(), |s| s.to_string());
        write!(
            f,
            "{},{},{},{},{},{}",
            self.time,
            self.event,
            self.key_id.map_or_else(|| "-".to_string(), |k| k.to_string()),
            self.link_id,
            opt(self.state_from),
            opt(self.state_to)
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KmsCounts {
    pub ingested: usize,
    pub available: usize,
    pub assigned: usize,
    pub consumed: usize,
}

impl KmsCounts {
    pub fn is_conserved(&self) -> bool {
        self.ingested == self.available + self.assigned + self.consumed
    }
}

#[derive(Debug, Default)]
pub struct Kms {
    pools: BTreeMap<LinkId, VecDeque<KeyId>>,
    entries: HashMap<KeyId, KeyPoolEntry>,
    audit: Vec<AuditRecord>,
    low_watermark: usize,
    counts: KmsCounts,
}

impl Kms {
    pub fn new(low_watermark: usize) -> Self {
        Kms { low_watermark, ..Default::default() }
    }

    pub fn register_link(&mut self, link: LinkId) {
        self.pools.entry(link).or_default();
    }

    pub fn links(&self) -> impl Iterator<Item = LinkId> + '_ {
        self.pools.keys().copied()
    }

    fn log(
        &mut self,
        time: SimTime,
        event: AuditEvent,
        key_id: Option<KeyId>,
        link_id: LinkId,
        from: Option<KeyState>,
        to: Option<KeyState>,
    ) {
        // Callers run inside the event loop, so time never goes backwards.
        debug_assert!(self.audit.last().is_none_or(|r| r.time <= time));
        self.audit.push(AuditRecord { time, event, key_id, link_id, state_from: from, state_to: to });
    }

    pub fn ingest_key_block(&mut self, block: QkdKeyBlock, now: SimTime) -> Result<KeyId, KmsError> {
        if block.source_status != RoundStatus::Distilled {
            return Err(KmsError::NotDistilled);
        }
        if !self.pools.contains_key(&block.link_id) {
            return Err(KmsError::UnknownLink(block.link_id));
        }
        if self.entries.contains_key(&block.key_id) {
            return Err(KmsError::DuplicateKeyId(block.key_id));
        }
        let key_id = block.key_id;
        let link = block.link_id;
        self.entries.insert(
            key_id,
            KeyPoolEntry {
                key_id,
                bytes: block.bytes,
                link_id: link,
                state: KeyState::Available,
                created_at: block.created_at,
                assigned_to: None,
                fetched_by: Vec::new(),
            },
        );
        self.pools.get_mut(&link).expect("checked").push_back(key_id);
        self.counts.ingested += 1;
        self.counts.available += 1;
        self.log(now, AuditEvent::Ingest, Some(key_id), link, None, Some(KeyState::Available));
        Ok(key_id)
    }

    pub fn link_for(&self, a: NodeId, b: NodeId) -> Option<LinkId> {
        self.pools.keys().copied().find(|l| l.connects(a, b))
    }

    /// Assigns the oldest available key on the pair's link. The grant
    /// carries the bytes, which counts as the requester's one fetch.
    pub fn request_key(&mut self, req: &KeyRequest, now: SimTime) -> Result<KeyGrant, KmsError> {
        let link = self.link_for(req.requester, req.peer).ok_or(KmsError::UnknownPair(req.requester, req.peer))?;
        let Some(key_id) = self.pools.get_mut(&link).expect("registered").pop_front() else {
            self.log(now, AuditEvent::Deny, None, link, None, None);
            return Err(KmsError::EmptyPool(link));
        };
        let entry = self.entries.get_mut(&key_id).expect("pooled keys have entries");
        let available = entry.bytes.len() * 8;
        if req.requested_bits > available {
            self.pools.get_mut(&link).expect("registered").push_front(key_id);
            return Err(KmsError::BitsUnavailable { requested: req.requested_bits, available });
        }
        entry.state = KeyState::Assigned;
        entry.assigned_to = Some((req.requester, req.peer));
        entry.fetched_by.push(req.requester);
        let bytes = entry.bytes.clone();
        self.counts.available -= 1;
        self.counts.assigned += 1;
        self.log(now, AuditEvent::Grant, Some(key_id), link, Some(KeyState::Available), Some(KeyState::Assigned));
        Ok(KeyGrant { key_id, link_id: link, bytes, requester: req.requester, peer: req.peer })
    }

    /// Lets an endpoint of an assigned key read it, once.
    pub fn fetch_key(&mut self, key_id: KeyId, endpoint: NodeId, now: SimTime) -> Result<Vec<u8>, KmsError> {
        let entry = self.entries.get_mut(&key_id).ok_or(KmsError::UnknownKey(key_id))?;
        if entry.state != KeyState::Assigned {
            return Err(KmsError::WrongState { key_id, expected: KeyState::Assigned, actual: entry.state });
        }
        let (a, b) = entry.assigned_to.expect("assigned keys have a pair");
        if (endpoint != a && endpoint != b) || entry.fetched_by.contains(&endpoint) {
            return Err(KmsError::FetchDenied { key_id, endpoint });
        }
        entry.fetched_by.push(endpoint);
        let bytes = entry.bytes.clone();
        let link = entry.link_id;
        self.log(now, AuditEvent::Fetch, Some(key_id), link, Some(KeyState::Assigned), Some(KeyState::Assigned));
        Ok(bytes)
    }

    pub fn consume_key(&mut self, key_id: KeyId, now: SimTime) -> Result<(), KmsError> {
        let entry = self.entries.get_mut(&key_id).ok_or(KmsError::UnknownKey(key_id))?;
        if entry.state != KeyState::Assigned {
            return Err(KmsError::WrongState { key_id, expected: KeyState::Assigned, actual: entry.state });
        }
        entry.state = KeyState::Consumed;
        entry.bytes.zeroize();
        let link = entry.link_id;
        self.counts.assigned -= 1;
        self.counts.consumed += 1;
        self.log(now, AuditEvent::Consume, Some(key_id), link, Some(KeyState::Assigned), Some(KeyState::Consumed));
        Ok(())
    }

    pub fn entry(&self, key_id: KeyId) -> Option<&KeyPoolEntry> {
        self.entries.get(&key_id)
    }

    pub fn pool_depth(&self, link: LinkId) -> usize {
        self.pools.get(&link).map_or(0, VecDeque::len)
    }

    pub fn needs_refill(&self, link: LinkId) -> bool {
        self.pool_depth(link) < self.low_watermark
    }

    pub fn low_watermark(&self) -> usize {
        self.low_watermark
    }

    pub fn counts(&self) -> KmsCounts {
        self.counts
    }

    pub fn audit(&self) -> &[AuditRecord] {
        &self.audit
    }

    pub fn write_audit<W: Write>(&self, mut out: W) -> io::Result<()> {
        for r in &self.audit {
            writeln!(out, "{r}")?;
        }
        Ok(())
    }
}
