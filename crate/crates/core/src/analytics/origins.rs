use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::mult::Histogram;
use crate::error::{Error, Result};
use crate::provenance::RevisionOrigins;
use crate::storage::KvRead;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OriginMode {
    /// Every (origin, revision) pair counts.
    Simple,
    /// Each revision counts only for the largest origin holding it.
    MostFitFork,
}

impl FromStr for OriginMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simple" => Ok(OriginMode::Simple),
            "most-fit-fork" => Ok(OriginMode::MostFitFork),
            _ => Err(Error::InvalidParams(format!("unknown origin mode {s:?}"))),
        }
    }
}

impl fmt::Display for OriginMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OriginMode::Simple => "simple",
            OriginMode::MostFitFork => "most-fit-fork",
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OriginSizeReport {
    pub mode: OriginMode,
    /// Origin URL → revisions attributed to it.
    pub sizes: BTreeMap<String, u64>,
    /// Size → number of origins.
    pub distribution: Histogram,
}

pub fn origin_sizes<V: KvRead + ?Sized>(view: &V, mode: OriginMode) -> Result<OriginSizeReport> {
    Ok(origin_sizes_from(&RevisionOrigins::compute(view)?, mode))
}

pub fn origin_sizes_from(ro: &RevisionOrigins, mode: OriginMode) -> OriginSizeReport {
    let simple: BTreeMap<String, u64> = ro.sizes().map(|(o, n)| (o.to_string(), n as u64)).collect();
    let sizes = match mode {
        OriginMode::Simple => simple,
        OriginMode::MostFitFork => {
            let mut out: BTreeMap<String, u64> = simple.keys().map(|o| (o.clone(), 0)).collect();
            for (r, _) in ro.revisions() {
                // Origins come sorted, so the first strict maximum is the
                // smallest URL among ties.
                let mut best: Option<(&str, u64)> = None;
                for o in ro.origins_of(r) {
                    let n = simple[o];
                    if best.is_none_or(|(_, b)| n > b) {
                        best = Some((o, n));
                    }
                }
                if let Some((o, _)) = best {
                    *out.get_mut(o).expect("known origin") += 1;
                }
            }
            out
        }
    };
    let distribution = Histogram::from_factors(sizes.values().copied());
    OriginSizeReport { mode, sizes, distribution }
}
