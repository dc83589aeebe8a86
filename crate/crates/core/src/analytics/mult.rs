use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::Serialize;

use super::growth::weighted_line;
use crate::dag::DagRead;
use crate::error::{Error, Result};
use crate::id::{NodeId, NodeKind};
use crate::provenance::{Model, ModelState, RevisionOrigins};
use crate::storage::{KvRead, Keyspace};

/// Multiplication factor `k` → number of artifacts.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Histogram {
    pub counts: BTreeMap<u64, u64>,
}

impl Histogram {
    pub fn from_factors(factors: impl IntoIterator<Item = u64>) -> Histogram {
        let mut h = Histogram::default();
        for k in factors {
            h.add(k, 1);
        }
        h
    }

    pub fn add(&mut self, k: u64, n: u64) {
        *self.counts.entry(k).or_default() += n;
    }

    /// Number of artifacts.
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    /// `k` → number of artifacts with a factor of at least `k`.
    pub fn cumulative(&self) -> BTreeMap<u64, u64> {
        let mut acc = 0;
        let mut out = BTreeMap::new();
        for (&k, &n) in self.counts.iter().rev() {
            acc += n;
            out.insert(k, acc);
        }
        out
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "k,count")?;
        for (k, n) in &self.counts {
            writeln!(w, "{k},{n}")?;
        }
        Ok(())
    }

    /// Reads `k,count` CSV with a header line.
    pub fn read_csv(r: impl BufRead) -> Result<Histogram> {
        let mut h = Histogram::default();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let parse = || -> Option<(u64, u64)> {
                let (k, n) = line.split_once(',')?;
                Some((k.trim().parse().ok()?, n.trim().parse().ok()?))
            };
            let (k, n) = parse().ok_or(Error::Parse { line: i + 1, message: "expected k,count".into() })?;
            h.add(k, n);
        }
        Ok(h)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub alpha: f64,
    /// `ln` of the fitted count at `k = 1`.
    pub intercept: f64,
    pub k_range: (f64, f64),
    pub points: usize,
    pub method: &'static str,
}

/// Log-log least squares over the simple histogram within `k_range`
/// (inclusive), each point weighted by its count.
pub fn fit_power_law(h: &Histogram, k_range: (u64, u64)) -> Result<PowerLawFit> {
    let pts: Vec<(f64, f64)> = h
        .counts
        .range(k_range.0.max(1)..=k_range.1)
        .map(|(&k, &n)| (k as f64, n as f64))
        .collect();
    fit_power_law_points(&pts)
}

/// Same fit over `(k, count)` pairs with real counts.
pub fn fit_power_law_points(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    let pts: Vec<(f64, f64)> = points.iter().copied().filter(|&(k, n)| k > 0.0 && n > 0.0).collect();
    if pts.len() < 6 {
        return Err(Error::InsufficientData { needed: 6, have: pts.len() });
    }
    let logs: Vec<(f64, f64)> = pts.iter().map(|&(k, n)| (k.ln(), n.ln())).collect();
    let w: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (b0, b1, _) = weighted_line(&logs, &w);
    let lo = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(PowerLawFit { alpha: b1, intercept: b0, k_range: (lo, hi), points: pts.len(), method: "wls-loglog" })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Layer {
    /// Distinct revisions containing each content.
    ContentRevision,
    /// Distinct origins holding each revision.
    RevisionOrigin,
}

impl FromStr for Layer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "content" | "content-revision" => Ok(Layer::ContentRevision),
            "revision" | "revision-origin" => Ok(Layer::RevisionOrigin),
            _ => Err(Error::InvalidParams(format!("unknown layer {s:?}"))),
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layer::ContentRevision => "content-revision",
            Layer::RevisionOrigin => "revision-origin",
        })
    }
}

/// Artifact sample: ids starting with a hex prefix, contents within a
/// byte size range (inclusive).
#[derive(Clone, Debug, Default, Serialize)]
pub struct Sample {
    pub hash_prefix: Option<String>,
    pub size: Option<(u64, u64)>,
}

impl Sample {
    pub(crate) fn matches_id(&self, id: &NodeId) -> bool {
        self.hash_prefix.as_deref().is_none_or(|p| id.to_hex().starts_with(&p.to_ascii_lowercase()))
    }

    pub(crate) fn matches_size(&self, len: u64) -> bool {
        self.size.is_none_or(|(lo, hi)| (lo..=hi).contains(&len))
    }
}

/// The content layer reads the flat index, which must be built.
pub fn multiplication_histogram<V: KvRead + ?Sized>(view: &V, layer: Layer, sample: &Sample) -> Result<Histogram> {
    match layer {
        Layer::ContentRevision => content_layer(view, sample),
        Layer::RevisionOrigin => {
            let ro = RevisionOrigins::compute(view)?;
            Ok(Histogram::from_factors(
                ro.revisions().filter(|(r, _)| sample.matches_id(r)).map(|(_, n)| n as u64),
            ))
        }
    }
}

fn content_layer<V: KvRead + ?Sized>(view: &V, sample: &Sample) -> Result<Histogram> {
    ModelState::require(view, Model::Flat)?;
    let l = view.algo().digest_len();
    // Keys are content ‖ ts ‖ revision ‖ path, so one content's rows are
    // adjacent and its rows for one revision are too.
    let prefix = match &sample.hash_prefix {
        Some(p) if p.len() % 2 == 0 => {
            hex::decode(p).map_err(|_| Error::InvalidParams(format!("bad hash prefix {p:?}")))?
        }
        _ => Vec::new(),
    };
    let mut h = Histogram::default();
    let mut current: Option<(Vec<u8>, Vec<u8>, u64)> = None;
    let flush = |cur: Option<(Vec<u8>, Vec<u8>, u64)>, h: &mut Histogram| -> Result<()> {
        if let Some((c, _, k)) = cur {
            let id = NodeId::from_bytes(NodeKind::Content, &c)?;
            if sample.matches_id(&id) && (sample.size.is_none() || sample.matches_size(view.content_length(&id)?)) {
                h.add(k, 1);
            }
        }
        Ok(())
    };
    for kv in view.scan(Keyspace::Flat, &prefix, None)? {
        let (key, _) = kv?;
        let (c, r) = (&key[..l], &key[l + 8..2 * l + 8]);
        match &mut current {
            Some((cc, rr, k)) if cc.as_slice() == c => {
                if rr.as_slice() != r {
                    *rr = r.to_vec();
                    *k += 1;
                }
            }
            _ => {
                flush(current.take(), &mut h)?;
                current = Some((c.to_vec(), r.to_vec(), 1));
            }
        }
    }
    flush(current, &mut h)?;
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cumulative_is_non_increasing_and_starts_at_total() {
        let h = Histogram::from_factors([1, 1, 1, 2, 3, 3, 7]);
        let c = h.cumulative();
        assert_eq!(c[&1], h.total());
        assert_eq!(c[&7], 1);
        let v: Vec<u64> = c.values().copied().collect();
        assert!(v.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn csv_output() {
        let mut out = Vec::new();
        Histogram::from_factors([2, 3]).write_csv(&mut out).unwrap();
        assert_eq!(out, b"k,count\n2,1\n3,1\n");
        assert_eq!(Histogram::read_csv(&out[..]).unwrap(), Histogram::from_factors([2, 3]));
    }

    #[test]
    fn exact_power_laws() {
        for alpha in [-1.5, -1.9, -2.2] {
            let pts: Vec<(f64, f64)> = (1..=1000).map(|k| (k as f64, 1e6 * (k as f64).powf(alpha))).collect();
            let f = fit_power_law_points(&pts).unwrap();
            assert!((f.alpha - alpha).abs() < 1e-6, "{alpha}: {}", f.alpha);
        }
    }

    #[test]
    fn needs_six_k_values() {
        let h = Histogram::from_factors([1, 2, 3, 4, 5, 100]);
        assert!(matches!(fit_power_law(&h, (1, 50)), Err(Error::InsufficientData { needed: 6, have: 5 })));
        assert!(fit_power_law(&h, (1, 100)).is_ok());
    }

    #[test]
    fn layer_names() {
        for l in [Layer::ContentRevision, Layer::RevisionOrigin] {
            assert_eq!(l.to_string().parse::<Layer>().unwrap(), l);
        }
    }
}
