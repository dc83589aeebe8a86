use serde::Serialize;

use super::{Model, ModelState};
use crate::error::{Error, Result};
use crate::storage::KvRead;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RelationCount {
    pub name: &'static str,
    pub count: u64,
}

/// Entity and relationship counts of one index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ModelStats {
    pub model: Model,
    pub revisions: u64,
    pub contents: u64,
    /// Directories the model stores as entities: none for flat, every
    /// directory for recursive, flattened frontier directories for compact.
    pub directories: u64,
    pub relations: Vec<RelationCount>,
    /// Directory entries pointing at revisions; kept out of the relations.
    pub submodule_edges: u64,
    pub approximate: bool,
    pub fingerprint: String,
}

impl ModelStats {
    pub fn total_entities(&self) -> u64 {
        self.revisions + self.contents + self.directories
    }

    pub fn total_relations(&self) -> u64 {
        self.relations.iter().map(|r| r.count).sum()
    }

    pub fn relation(&self, name: &str) -> Option<u64> {
        self.relations.iter().find(|r| r.name == name).map(|r| r.count)
    }
}

pub fn model_stats<V: KvRead + ?Sized>(view: &V, model: Model) -> Result<ModelStats> {
    let state = ModelState::require(view, model)?;
    let relations = model
        .relations()
        .iter()
        .map(|&(name, ks)| Ok(RelationCount { name, count: view.len(ks)? }))
        .collect::<Result<_>>()?;
    Ok(ModelStats {
        model,
        revisions: state.revisions,
        contents: state.contents,
        directories: if model == Model::Flat { 0 } else { state.directories },
        relations,
        submodule_edges: state.submodule_edges,
        approximate: state.approximate,
        fingerprint: state.fingerprint,
    })
}

/// Rounds to `digits` significant digits.
pub fn round_sig(v: f64, digits: i32) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    let scale = 10f64.powi(digits - 1 - v.abs().log10().floor() as i32);
    (v * scale).round() / scale
}

/// Formats with `digits` significant digits, keeping trailing zeros.
pub fn format_sig(v: f64, digits: i32) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let r = round_sig(v, digits);
    let decimals = (digits - 1 - r.abs().log10().floor() as i32).max(0) as usize;
    format!("{r:.decimals$}")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ratio {
    pub numerator: Model,
    pub denominator: Model,
    /// Rounded to three significant digits.
    pub value: f64,
}

impl Ratio {
    pub fn display(&self) -> String {
        format_sig(self.value, 3)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioReport {
    pub relations: Vec<(Model, u64)>,
    pub ratios: Vec<Ratio>,
}

impl RatioReport {
    /// Pairwise ratios of relationship counts in canonical model order.
    /// Use directly for reference numbers not backed by a store.
    pub fn from_counts(counts: &[(Model, u64)]) -> RatioReport {
        let mut relations = counts.to_vec();
        relations.sort_by_key(|(m, _)| *m);
        relations.dedup_by_key(|(m, _)| *m);
        let mut ratios = Vec::new();
        for (i, &(num, a)) in relations.iter().enumerate() {
            for &(den, b) in &relations[i + 1..] {
                let value = if b == 0 { f64::INFINITY } else { round_sig(a as f64 / b as f64, 3) };
                ratios.push(Ratio { numerator: num, denominator: den, value });
            }
        }
        RatioReport { relations, ratios }
    }

    pub fn get(&self, numerator: Model, denominator: Model) -> Option<&Ratio> {
        self.ratios.iter().find(|r| r.numerator == numerator && r.denominator == denominator)
    }
}

/// Ratios between models built over the same revisions.
pub fn compare_models(stats: &[ModelStats]) -> Result<RatioReport> {
    if let Some(first) = stats.first() {
        if stats.iter().any(|s| s.fingerprint != first.fingerprint || s.revisions != first.revisions) {
            return Err(Error::MismatchedCorpus);
        }
    }
    let counts: Vec<(Model, u64)> = stats.iter().map(|s| (s.model, s.total_relations())).collect();
    Ok(RatioReport::from_counts(&counts))
}
