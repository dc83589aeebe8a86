//! Flat, recursive and compact provenance indexes.
//!
//! All three are built by replaying revisions in `(timestamp, id)` order.
//!
//! * flat: `C-occur-in-R`, one entry per content occurrence and path.
//! * recursive: the reversed containment edges `C-occur-in-D`,
//!   `D-occur-in-D` and `D-occur-in-R` (revision to root only).
//! * compact: `C-occur-early-in-R` for contents inside the isochrone
//!   subgraph, `D-occur-in-R` for edges crossing its frontier, and
//!   `C-occur-in-D` holding each frontier directory flattened once.

mod build;
mod origins;
mod query;
mod stats;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::id::NodeId;
use crate::storage::{encode_ts, KvRead, Keyspace, WriteView};

pub use build::{build, BuildOptions, BuildReport};
pub use origins::RevisionOrigins;
pub use query::{all_occurrences, first_occurrence, Occurrence};
pub use stats::{compare_models, model_stats, round_sig, format_sig, ModelStats, Ratio, RatioReport, RelationCount};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Flat,
    Compact,
    Recursive,
}

impl Model {
    /// Canonical order, largest index first.
    pub const ALL: [Model; 3] = [Model::Flat, Model::Compact, Model::Recursive];

    pub fn name(self) -> &'static str {
        match self {
            Model::Flat => "flat",
            Model::Compact => "compact",
            Model::Recursive => "recursive",
        }
    }

    pub fn clock(self) -> Keyspace {
        match self {
            Model::Flat => Keyspace::FlatClock,
            Model::Compact => Keyspace::CompactClock,
            Model::Recursive => Keyspace::RecClock,
        }
    }

    pub fn relations(self) -> &'static [(&'static str, Keyspace)] {
        match self {
            Model::Flat => &[("C-occur-in-R", Keyspace::Flat)],
            Model::Compact => &[
                ("C-occur-early-in-R", Keyspace::CompactCer),
                ("D-occur-in-R", Keyspace::CompactDor),
                ("C-occur-in-D", Keyspace::CompactCod),
            ],
            Model::Recursive => &[
                ("C-occur-in-D", Keyspace::RecCd),
                ("D-occur-in-D", Keyspace::RecDd),
                ("D-occur-in-R", Keyspace::RecDr),
            ],
        }
    }

    fn state_key(self) -> Vec<u8> {
        format!("model/{}", self.name()).into_bytes()
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Model> {
        Model::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown model {s:?}")))
    }
}

/// Persistent bookkeeping of a built model.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelState {
    pub revisions: u64,
    pub contents: u64,
    pub directories: u64,
    pub submodule_edges: u64,
    pub high_water: Option<i64>,
    /// Set when a revision arrived earlier than one already processed;
    /// first-occurrence answers may then be wrong.
    pub approximate: bool,
    /// XOR of processed revision digests, hex encoded.
    pub fingerprint: String,
}

impl ModelState {
    pub fn load<V: KvRead + ?Sized>(view: &V, model: Model) -> Result<Option<ModelState>> {
        view.get(Keyspace::Meta, &model.state_key())?
            .map(|v| serde_json::from_slice(&v).map_err(Error::from))
            .transpose()
    }

    pub fn require<V: KvRead + ?Sized>(view: &V, model: Model) -> Result<ModelState> {
        ModelState::load(view, model)?.ok_or(Error::IndexNotBuilt(model.name()))
    }

    fn save(&self, w: &mut WriteView<'_>, model: Model) -> Result<()> {
        w.put(Keyspace::Meta, &model.state_key(), &serde_json::to_vec(self)?)?;
        Ok(())
    }

    fn fold_revision(&mut self, id: &NodeId) {
        let mut acc = hex::decode(&self.fingerprint).unwrap_or_default();
        acc.resize(id.digest().len().max(acc.len()), 0);
        for (a, b) in acc.iter_mut().zip(id.digest()) {
            *a ^= b;
        }
        self.fingerprint = hex::encode(acc);
    }
}

fn key(parts: &[&[u8]]) -> Vec<u8> {
    let mut k = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
    for p in parts {
        k.extend_from_slice(p);
    }
    k
}

/// `a ‖ ts ‖ b ‖ tail` layout shared by several relations.
fn timed_key(a: &NodeId, ts: i64, b: &NodeId, tail: &[u8]) -> Vec<u8> {
    key(&[a.digest(), &encode_ts(ts), b.digest(), tail])
}
