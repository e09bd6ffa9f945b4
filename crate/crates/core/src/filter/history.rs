use std::fmt;
use std::sync::Arc;

use serde::{Serialize, Serializer};

use crate::roadnet::EdgeId;

struct Link {
    edge: EdgeId,
    len: usize,
    parent: Option<Arc<Link>>,
}

impl Drop for Link {
    // Unlink iteratively; long histories would otherwise recurse once per edge.
    fn drop(&mut self) {
        let mut next = self.parent.take();
        while let Some(arc) = next {
            match Arc::try_unwrap(arc) {
                Ok(mut link) => next = link.parent.take(),
                Err(_) => break,
            }
        }
    }
}

/// Edges a particle has entered, oldest first. Persistent: cloning and
/// appending are O(1), and resampled copies share their common prefix.
#[derive(Clone)]
pub struct EdgeHistory(Arc<Link>);

impl EdgeHistory {
    pub fn start(edge: EdgeId) -> Self {
        EdgeHistory(Arc::new(Link {
            edge,
            len: 1,
            parent: None,
        }))
    }

    #[must_use]
    pub fn push(&self, edge: EdgeId) -> Self {
        EdgeHistory(Arc::new(Link {
            edge,
            len: self.0.len + 1,
            parent: Some(Arc::clone(&self.0)),
        }))
    }

    pub fn last(&self) -> EdgeId {
        self.0.edge
    }

    pub fn len(&self) -> usize {
        self.0.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_vec(&self) -> Vec<EdgeId> {
        let mut out = vec![EdgeId(0); self.0.len];
        let mut cur = Some(&self.0);
        let mut i = self.0.len;
        while let Some(link) = cur {
            i -= 1;
            out[i] = link.edge;
            cur = link.parent.as_ref();
        }
        out
    }

    pub(crate) fn id(&self) -> *const () {
        Arc::as_ptr(&self.0).cast()
    }
}

impl fmt::Debug for EdgeHistory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.to_vec()).finish()
    }
}

impl PartialEq for EdgeHistory {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.to_vec() == other.to_vec()
    }
}

impl Serialize for EdgeHistory {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_vec().serialize(s)
    }
}
