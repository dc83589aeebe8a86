use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{content, directory, revision, Sink};
use crate::dag::DirectoryEntry;
use crate::error::{Error, Result};
use crate::id::NodeId;

/// A line planted into exactly `contents` distinct `.c` files. `text` is
/// given in normalized form: no whitespace, no trailing `;`.
#[derive(Clone, Debug)]
pub struct PlantedLine {
    pub text: String,
    pub contents: usize,
}

#[derive(Clone, Debug)]
pub struct PlantedSloc {
    pub revision: NodeId,
    /// Histogram (contents per line → number of lines) expected for `.c`
    /// files of 100 bytes or more, lines of normalized length 4 to 1000.
    pub expected: BTreeMap<u64, u64>,
    /// Expected normalized-length histogram over the same lines.
    pub expected_lengths: BTreeMap<usize, u64>,
}

/// Renders a normalized line with random blanks and trailing semicolons.
fn disguise(norm: &str, rng: &mut ChaCha8Rng) -> String {
    let mut out = String::new();
    for _ in 0..rng.random_range(0..4) {
        out.push(if rng.random_bool(0.5) { ' ' } else { '\t' });
    }
    for ch in norm.chars() {
        out.push(ch);
        if rng.random_bool(0.2) {
            out.push(' ');
        }
    }
    match rng.random_range(0..4) {
        0 => out.push_str(" ;"),
        1 => out.push_str(";;"),
        2 => out.push(';'),
        _ => {}
    }
    if rng.random_bool(0.1) {
        out.push('\r');
    }
    out
}

/// One revision whose `.c` files share the planted lines. Every other line
/// is unique, except noise lines too short to count. A few `.txt` files and
/// one `.c` file below 100 bytes also carry planted lines and must be
/// excluded by the sampling filters.
pub fn planted_sloc(sink: &mut dyn Sink, seed: u64, n_contents: usize, plan: &[PlantedLine], t: i64) -> Result<PlantedSloc> {
    for p in plan {
        let bad = p.text.is_empty()
            || p.text.bytes().any(|b| b.is_ascii_whitespace())
            || p.text.ends_with(';')
            || !(4..=1000).contains(&p.text.len());
        if bad || p.contents == 0 || p.contents > n_contents {
            return Err(Error::InvalidParams(format!("cannot plant {:?} in {} files", p.text, p.contents)));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lines: Vec<Vec<String>> = vec![Vec::new(); n_contents];
    let mut expected: BTreeMap<u64, u64> = BTreeMap::new();
    let mut expected_lengths: BTreeMap<usize, u64> = BTreeMap::new();
    for p in plan {
        for i in sample(&mut rng, n_contents, p.contents) {
            let copies = if rng.random_bool(0.2) { 2 } else { 1 };
            for _ in 0..copies {
                lines[i].push(disguise(&p.text, &mut rng));
            }
        }
        *expected.entry(p.contents as u64).or_default() += 1;
        *expected_lengths.entry(p.text.len()).or_default() += 1;
    }
    let mut entries = Vec::new();
    for (i, mut body) in lines.into_iter().enumerate() {
        let mut j = 0;
        while j < 3 || body.iter().map(|l| l.len() + 1).sum::<usize>() < 120 {
            let norm = format!("filler_{seed}_{i}_{j}=1");
            *expected.entry(1).or_default() += 1;
            *expected_lengths.entry(norm.len()).or_default() += 1;
            body.push(disguise(&norm, &mut rng));
            j += 1;
        }
        body.push("}".into());
        body.push("   ".into());
        // Shuffle so planted lines are not always on top.
        for k in (1..body.len()).rev() {
            body.swap(k, rng.random_range(0..=k));
        }
        let c = content(sink, (body.join("\n") + "\n").into_bytes())?;
        entries.push(DirectoryEntry::file(format!("file{i}.c"), c));
    }
    for (i, p) in plan.iter().enumerate().take(3) {
        let c = content(sink, format!("note {i}\n{}\nsome longer prose that fills the note up\n", p.text).into_bytes())?;
        entries.push(DirectoryEntry::file(format!("notes{i}.txt"), c));
    }
    if let Some(p) = plan.first() {
        let c = content(sink, format!("{}\n", p.text).into_bytes())?;
        entries.push(DirectoryEntry::file("tiny.c", c));
    }
    let src = directory(sink, entries)?;
    let root = directory(sink, vec![DirectoryEntry::dir("src", src)])?;
    let revision = revision(sink, root, vec![], t, "planted lines\n".into())?;
    Ok(PlantedSloc { revision, expected, expected_lengths })
}
