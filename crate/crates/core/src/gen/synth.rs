use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::Serialize;

use super::{content, directory, revision, Sink};
use crate::dag::{DagNode, DirectoryEntry, Release, Snapshot, Timestamp};
use crate::error::{Error, Result};
use crate::id::{NodeId, NodeKind};

pub const YEAR_SECONDS: f64 = 365.25 * 86_400.0;

/// Number of own revisions drawn per origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum RevisionCount {
    Fixed(u32),
    /// Inclusive range.
    Uniform(u32, u32),
    Geometric(f64),
}

impl RevisionCount {
    fn draw(&self, rng: &mut ChaCha8Rng) -> u32 {
        match *self {
            RevisionCount::Fixed(n) => n,
            RevisionCount::Uniform(a, b) => rng.random_range(a..=b),
            RevisionCount::Geometric(mean) => {
                let p = 1.0 / mean.max(1.0);
                let u: f64 = rng.random();
                1 + ((1.0 - u).ln() / (1.0 - p).ln()).floor().max(0.0) as u32
            }
        }
    }
}

impl fmt::Display for RevisionCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RevisionCount::Fixed(n) => write!(f, "fixed:{n}"),
            RevisionCount::Uniform(a, b) => write!(f, "uniform:{a}-{b}"),
            RevisionCount::Geometric(m) => write!(f, "geometric:{m}"),
        }
    }
}

impl FromStr for RevisionCount {
    type Err = Error;

    /// `fixed:N`, `uniform:A-B` or `geometric:MEAN`; a bare number is fixed.
    fn from_str(s: &str) -> Result<RevisionCount> {
        let bad = || Error::InvalidParams(format!("bad revision count {s:?}"));
        let (kind, arg) = s.split_once(':').unwrap_or(("fixed", s));
        match kind {
            "fixed" => arg.parse().map(RevisionCount::Fixed).map_err(|_| bad()),
            "uniform" => {
                let (a, b) = arg.split_once('-').ok_or_else(bad)?;
                Ok(RevisionCount::Uniform(a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))
            }
            "geometric" => arg.parse().map(RevisionCount::Geometric).map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GenParams {
    pub seed: u64,
    pub n_origins: usize,
    pub revisions_per_origin: RevisionCount,
    /// Unix seconds of the start of the simulated period.
    pub start_time: i64,
    pub years: f64,
    /// Per-year rate of the exponential revision production.
    pub rate: f64,
    /// Exponent of the content multiplication distribution (< -1).
    pub dup_alpha: f64,
    /// Largest multiplication factor drawn.
    pub max_multiplicity: u32,
    /// Files per revision tree.
    pub slots: usize,
    pub dir_branching: usize,
    pub fork_probability: f64,
    pub release_probability: f64,
    /// Content sizes are log-uniform in this inclusive byte range.
    pub content_size: (usize, usize),
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            seed: 1,
            n_origins: 20,
            revisions_per_origin: RevisionCount::Uniform(20, 80),
            start_time: 946_684_800, // 2000-01-01
            years: 20.0,
            rate: 0.27,
            dup_alpha: -1.5,
            max_multiplicity: 1000,
            slots: 24,
            dir_branching: 6,
            fork_probability: 0.1,
            release_probability: 0.3,
            content_size: (32, 512),
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return bad("rate must be positive");
        }
        if !(self.dup_alpha < -1.0) {
            return bad("dup_alpha must be below -1");
        }
        if self.years <= 0.0 || self.n_origins == 0 || self.slots == 0 || self.max_multiplicity == 0 {
            return bad("years, origins, slots and max multiplicity must be positive");
        }
        if self.dir_branching < 2 {
            return bad("dir_branching must be at least 2");
        }
        if !(0.0..=1.0).contains(&self.fork_probability) || !(0.0..=1.0).contains(&self.release_probability) {
            return bad("probabilities must lie in [0, 1]");
        }
        if self.content_size.0 == 0 || self.content_size.0 > self.content_size.1 {
            return bad("content size range is empty");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct GenReport {
    pub origins: u64,
    pub forks: u64,
    pub revisions: u64,
    pub contents: u64,
    pub directories: u64,
    pub releases: u64,
    pub snapshots: u64,
    pub visits: u64,
    pub first_timestamp: i64,
    pub last_timestamp: i64,
}

/// Counts distinct contents and directories passing through.
struct Counting<'a> {
    inner: &'a mut dyn Sink,
    seen: HashSet<NodeId>,
    contents: u64,
    directories: u64,
}

impl Sink for Counting<'_> {
    fn algo(&self) -> crate::id::HashAlgo {
        self.inner.algo()
    }

    fn node(&mut self, node: &DagNode) -> Result<NodeId> {
        let id = self.inner.node(node)?;
        if matches!(id.kind(), NodeKind::Content | NodeKind::Directory) && self.seen.insert(id) {
            match id.kind() {
                NodeKind::Content => self.contents += 1,
                _ => self.directories += 1,
            }
        }
        Ok(id)
    }

    fn visit(&mut self, origin: &str, timestamp: i64, snapshot: NodeId) -> Result<()> {
        self.inner.visit(origin, timestamp, snapshot)
    }
}

struct OriginPlan {
    own: usize,
    /// `(origin, number of its revisions)` shared as a prefix.
    fork_of: Option<(usize, usize)>,
    times: Vec<i64>,
}

/// Revision timestamps: a stratified sample of the density proportional to
/// `e^{r t}` over `[0, years]`, sorted.
fn timestamps(p: &GenParams, n: usize, rng: &mut ChaCha8Rng) -> Vec<i64> {
    let span = (p.rate * p.years).exp_m1();
    (0..n)
        .map(|i| {
            let u = (i as f64 + rng.random::<f64>()) / n as f64;
            let years = (u * span).ln_1p() / p.rate;
            p.start_time + (years * YEAR_SECONDS) as i64
        })
        .collect()
}

/// Body of content number `serial`; size is log-uniform in `[lo, hi]`.
fn content_body(seed: u64, serial: u64, (lo, hi): (usize, usize)) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ serial.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let (lo, hi) = (lo as f64, hi as f64);
    let size = (lo * (hi / lo).powf(rng.random::<f64>())).round() as usize;
    let mut out = format!("/* content {seed}:{serial} */\n").into_bytes();
    let header = out.len();
    while out.len() < size {
        let a: u32 = rng.random_range(0..100_000);
        let b: u32 = rng.random_range(0..1000);
        out.extend_from_slice(format!("v{a} = v{a} + {b};\n").as_bytes());
    }
    out.truncate(size.max(header));
    out
}

/// Path components of a slot in a `branching`-ary tree of depth `depth`.
fn slot_path(slot: usize, branching: usize, depth: usize) -> Vec<String> {
    const EXT: [&str; 4] = [".c", ".h", ".py", ".txt"];
    let mut digits = Vec::with_capacity(depth);
    let mut s = slot;
    for _ in 0..depth {
        digits.push(s % branching);
        s /= branching;
    }
    digits.reverse();
    let mut out: Vec<String> = digits[..depth - 1].iter().map(|d| format!("d{d}")).collect();
    out.push(format!("f{}{}", digits[depth - 1], EXT[slot % EXT.len()]));
    out
}

struct TreeBuilder {
    paths: Vec<Vec<String>>,
}

impl TreeBuilder {
    fn new(slots: usize, branching: usize) -> TreeBuilder {
        let mut depth = 1;
        while branching.pow(depth as u32) < slots {
            depth += 1;
        }
        TreeBuilder { paths: (0..slots).map(|s| slot_path(s, branching, depth)).collect() }
    }

    fn build(&self, sink: &mut dyn Sink, files: &[NodeId]) -> Result<NodeId> {
        let all: Vec<usize> = (0..files.len()).collect();
        self.level(sink, files, &all, 0)
    }

    fn level(&self, sink: &mut dyn Sink, files: &[NodeId], slots: &[usize], depth: usize) -> Result<NodeId> {
        let mut entries = Vec::new();
        let mut i = 0;
        while i < slots.len() {
            let comp = &self.paths[slots[i]][depth];
            let mut j = i;
            while j < slots.len() && &self.paths[slots[j]][depth] == comp {
                j += 1;
            }
            if self.paths[slots[i]].len() == depth + 1 {
                entries.push(DirectoryEntry::file(comp.as_str(), files[slots[i]]));
            } else {
                let sub = self.level(sink, files, &slots[i..j], depth + 1)?;
                entries.push(DirectoryEntry::dir(comp.as_str(), sub));
            }
            i = j;
        }
        directory(sink, entries)
    }
}

/// Generates a corpus: origins with linear histories, optional forks that
/// share a prefix of another origin's revisions, optional releases, one
/// snapshot and one visit per origin.
///
/// Every file slot holds a content for a run of consecutive revisions whose
/// length follows a discrete power law with exponent `dup_alpha`, so a
/// content's multiplication factor is the length of its run.
pub fn generate(sink: &mut dyn Sink, p: &GenParams) -> Result<GenReport> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let zipf = |n: u32| Zipf::new(n as f64, -p.dup_alpha).map_err(|e| Error::InvalidParams(e.to_string()));
    let full = zipf(p.max_multiplicity)?;

    let mut plans: Vec<OriginPlan> = Vec::with_capacity(p.n_origins);
    for i in 0..p.n_origins {
        let own = p.revisions_per_origin.draw(&mut rng).max(1) as usize;
        let fork_of = if i > 0 && rng.random_bool(p.fork_probability) {
            let j = rng.random_range(0..i);
            let shared = rng.random_range(1..=plans[j].own);
            Some((j, shared))
        } else {
            None
        };
        plans.push(OriginPlan { own, fork_of, times: Vec::new() });
    }
    let total: usize = plans.iter().map(|o| o.own).sum();
    let mut owners: Vec<usize> = plans.iter().enumerate().flat_map(|(i, o)| std::iter::repeat_n(i, o.own)).collect();
    owners.shuffle(&mut rng);
    for (t, o) in timestamps(p, total, &mut rng).into_iter().zip(owners) {
        plans[o].times.push(t);
    }

    let tree = TreeBuilder::new(p.slots, p.dir_branching);
    let mut report = GenReport { first_timestamp: i64::MAX, last_timestamp: i64::MIN, ..Default::default() };
    let mut counter = Counting { inner: sink, seen: HashSet::new(), contents: 0, directories: 0 };
    let mut serial: u64 = 0;
    let mut heads: Vec<Vec<NodeId>> = Vec::with_capacity(plans.len());

    for (oi, plan) in plans.iter().enumerate() {
        let own = plan.own;
        // Content runs per slot over this origin's own revisions.
        let mut runs: Vec<Vec<(usize, u64)>> = vec![Vec::new(); p.slots];
        for slot_runs in runs.iter_mut() {
            let mut pos = 0;
            while pos < own {
                let left = (own - pos) as u32;
                let mut k = full.sample(&mut rng) as u32;
                if k > left {
                    k = zipf(left)?.sample(&mut rng) as u32;
                }
                slot_runs.push((pos + k as usize, serial));
                serial += 1;
                pos += k as usize;
            }
        }
        let mut revs: Vec<NodeId> = match plan.fork_of {
            Some((j, shared)) => {
                report.forks += 1;
                heads[j][..shared].to_vec()
            }
            None => Vec::new(),
        };
        let mut cursor = vec![0usize; p.slots];
        let mut files: Vec<Option<(u64, NodeId)>> = vec![None; p.slots];
        for (r, &t) in plan.times.iter().enumerate() {
            for s in 0..p.slots {
                while runs[s][cursor[s]].0 <= r {
                    cursor[s] += 1;
                }
                let want = runs[s][cursor[s]].1;
                if files[s].is_none_or(|(serial, _)| serial != want) {
                    let c = content(&mut counter, content_body(p.seed, want, p.content_size))?;
                    files[s] = Some((want, c));
                }
            }
            let ids: Vec<NodeId> = files.iter().map(|f| f.expect("filled").1).collect();
            let root = tree.build(&mut counter, &ids)?;
            let parents = revs.last().copied().into_iter().collect();
            let rid = revision(&mut counter, root, parents, t, format!("origin {oi} revision {r}\n"))?;
            report.revisions += 1;
            report.first_timestamp = report.first_timestamp.min(t);
            report.last_timestamp = report.last_timestamp.max(t);
            revs.push(rid);
        }
        let head = *revs.last().expect("at least one revision");
        let head_time = plan.times.last().copied().unwrap_or(p.start_time);
        let mut branches = std::collections::BTreeMap::new();
        branches.insert(b"refs/heads/main".to_vec(), head);
        if rng.random_bool(p.release_probability) {
            let rel = counter.node(&DagNode::Release(Release {
                target: head,
                name: b"v1.0".to_vec(),
                author: Some((b"Synthetic Developer <dev@example.org>".to_vec(), Timestamp::utc(head_time))),
                extra_headers: Vec::new(),
                message: format!("release of origin {oi}\n").into_bytes(),
            }))?;
            branches.insert(b"refs/tags/v1.0".to_vec(), rel);
            report.releases += 1;
        }
        let snap = counter.node(&DagNode::Snapshot(Snapshot { branches }))?;
        report.snapshots += 1;
        counter.visit(&format!("https://example.org/origin/{oi:05}"), head_time + 86_400, snap)?;
        report.visits += 1;
        report.origins += 1;
        heads.push(revs);
    }
    report.contents = counter.contents;
    report.directories = counter.directories;
    Ok(report)
}
