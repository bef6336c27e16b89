use std::collections::BTreeMap;

use super::NodeId;
use crate::{Error, Result};

/// Bandwidth and round-trip time of one wired link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSpec {
    /// bits/s
    pub bw_bps: f64,
    /// ms
    pub rtt_ms: f64,
}

/// Symmetric table of wired links between base stations and servers.
#[derive(Debug, Clone, Default)]
pub struct LinkMatrix {
    links: BTreeMap<(NodeId, NodeId), LinkSpec>,
    /// Bandwidth used for a node talking to itself.
    pub local_bw_bps: f64,
}

fn key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl LinkMatrix {
    pub fn new(local_bw_bps: f64) -> Self {
        LinkMatrix {
            links: BTreeMap::new(),
            local_bw_bps,
        }
    }

    pub fn insert(&mut self, a: NodeId, b: NodeId, spec: LinkSpec) {
        self.links.insert(key(a, b), spec);
    }

    pub fn get(&self, a: NodeId, b: NodeId) -> Option<LinkSpec> {
        if a == b {
            return Some(LinkSpec {
                bw_bps: self.local_bw_bps,
                rtt_ms: 0.0,
            });
        }
        self.links.get(&key(a, b)).copied()
    }

    pub fn contains(&self, a: NodeId, b: NodeId) -> bool {
        self.get(a, b).is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(NodeId, NodeId), &LinkSpec)> {
        self.links.iter()
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }
}

/// Looks up the configured `(bandwidth, rtt)` of the link between `a` and `b`.
pub fn path_delay(link: &LinkMatrix, a: NodeId, b: NodeId) -> Result<LinkSpec> {
    link.get(a, b)
        .ok_or_else(|| Error::UndeclaredLink(format!("{a:?}"), format!("{b:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BsId, ServerId};

    #[test]
    fn lookup_is_symmetric_and_self_link_is_local() {
        let mut m = LinkMatrix::new(10e9);
        let a = NodeId::Server(ServerId(0));
        let b = NodeId::Bs(BsId(2));
        m.insert(
            a,
            b,
            LinkSpec {
                bw_bps: 1e8,
                rtt_ms: 50.0,
            },
        );
        assert_eq!(path_delay(&m, b, a).unwrap().rtt_ms, 50.0);
        let own = path_delay(&m, a, a).unwrap();
        assert_eq!(own.bw_bps, 10e9);
        assert_eq!(own.rtt_ms, 0.0);
        assert!(path_delay(&m, a, NodeId::Server(ServerId(9))).is_err());
    }
}
