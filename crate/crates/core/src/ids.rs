//! Identifiers shared across the QKD, KMS and simulator layers.

use std::fmt;

/// Simulation time in milliseconds.
pub type SimTime = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeId {
    Ue(u32),
    Bs(u32),
    Core,
    Dn,
    Kms,
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Ue(i) => write!(f, "ue#{i}"),
            NodeId::Bs(i) => write!(f, "bs#{i}"),
            NodeId::Core => f.write_str("core"),
            NodeId::Dn => f.write_str("dn"),
            NodeId::Kms => f.write_str("kms"),
        }
    }
}

/// A QKD link on the static backbone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LinkId {
    /// BS ↔ core for the given BS index.
    Backhaul(u32),
    CoreDn,
}

impl LinkId {
    pub fn endpoints(self) -> (NodeId, NodeId) {
        match self {
            LinkId::Backhaul(bs) => (NodeId::Bs(bs), NodeId::Core),
            LinkId::CoreDn => (NodeId::Core, NodeId::Dn),
        }
    }

    pub fn connects(self, a: NodeId, b: NodeId) -> bool {
        let (x, y) = self.endpoints();
        (x == a && y == b) || (x == b && y == a)
    }

    pub fn to_bytes(self) -> [u8; 5] {
        match self {
            LinkId::Backhaul(i) => {
                let mut out = [1u8; 5];
                out[1..].copy_from_slice(&i.to_be_bytes());
                out
            }
            LinkId::CoreDn => [2, 0, 0, 0, 0],
        }
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinkId::Backhaul(i) => write!(f, "bs#{i}-core"),
            LinkId::CoreDn => f.write_str("core-dn"),
        }
    }
}

/// Identifier of a QKD-distilled key block.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeyId(pub [u8; 16]);

impl fmt::Display for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyId({self})")
    }
}
