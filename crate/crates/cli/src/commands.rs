use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, StdoutLock, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context, Result};
use prov_core::analytics::{
    fit_exponential, fit_power_law, multiplication_histogram, origin_sizes, original_growth_series, parse_bucket_label,
    sloc_multiplication, BucketWidth, Histogram, Layer, OriginMode, Sample, SlocSample, TimeBucketSeries,
};
use prov_core::dag::{validate_dag, TimestampFilter};
use prov_core::gen::{self, DumpSink, GenParams, RevisionCount, Sink};
use prov_core::ingest::{self, ingest_git_repository, load_dump, open_dump};
use prov_core::provenance::{
    all_occurrences, build, compare_models, first_occurrence, model_stats, BuildOptions, Model, ModelState,
    RevisionOrigins,
};
use prov_core::{HashAlgo, OpenMode, Store, StoreOptions};
use serde::Serialize;

use crate::{
    AnalyzeCmd, BuildArgs, Cli, Cmd, FilterArgs, GenCmd, GenOutput, IngestCmd, LawArg, ModelArg, QueryCmd, SampleArgs,
    SeriesArg, StoreCmd, VisitCmd,
};

/// A command line that parsed but makes no sense; exits with status 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage<T, E: fmt::Display>(r: std::result::Result<T, E>) -> Result<T> {
    r.map_err(|e| Usage(e.to_string()).into())
}

struct Out {
    w: BufWriter<StdoutLock<'static>>,
    json: bool,
}

impl Out {
    fn line(&mut self, s: impl fmt::Display) -> Result<()> {
        writeln!(self.w, "{s}")?;
        Ok(())
    }

    fn json(&mut self, v: &impl Serialize) -> Result<()> {
        serde_json::to_writer(&mut self.w, v)?;
        self.w.write_all(b"\n")?;
        Ok(())
    }

    /// One JSON line, or `key\tvalue` lines for each top-level field.
    fn record(&mut self, v: &impl Serialize) -> Result<()> {
        if self.json {
            return self.json(v);
        }
        match serde_json::to_value(v)? {
            serde_json::Value::Object(map) => {
                for (k, v) in map {
                    match v {
                        serde_json::Value::String(s) => self.line(format_args!("{k}\t{s}"))?,
                        v => self.line(format_args!("{k}\t{v}"))?,
                    }
                }
                Ok(())
            }
            v => self.line(v),
        }
    }

    fn histogram(&mut self, header: &str, rows: impl IntoIterator<Item = (u64, u64)>) -> Result<()> {
        let (key, _) = header.split_once(',').expect("two column header");
        if !self.json {
            self.line(header)?;
        }
        for (k, n) in rows {
            if self.json {
                self.json(&serde_json::json!({ key: k, "count": n }))?;
            } else {
                self.line(format_args!("{k},{n}"))?;
            }
        }
        Ok(())
    }
}

fn store_path(cli: &Cli) -> Result<&Path> {
    cli.store.as_deref().ok_or_else(|| Usage("no store given: pass --store or set PROV_STORE".into()).into())
}

fn open(cli: &Cli, mode: OpenMode, algo: HashAlgo) -> Result<Store> {
    let path = store_path(cli)?;
    let opts = StoreOptions { algo, ..StoreOptions::default() };
    Store::open_with(path, mode, opts).with_context(|| format!("opening store {}", path.display()))
}

fn models(m: ModelArg) -> Vec<Model> {
    match m {
        ModelArg::Flat => vec![Model::Flat],
        ModelArg::Compact => vec![Model::Compact],
        ModelArg::Recursive => vec![Model::Recursive],
        ModelArg::All => Model::ALL.to_vec(),
    }
}

fn single_model(m: ModelArg) -> Result<Model> {
    match m {
        ModelArg::All => Err(Usage("this command needs one model".into()).into()),
        m => Ok(models(m)[0]),
    }
}

fn filter(f: &FilterArgs) -> TimestampFilter {
    TimestampFilter { after: f.after, until: f.until }
}

fn now() -> i64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs() as i64).unwrap_or(0)
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut out = Out { w: BufWriter::new(io::stdout().lock()), json: cli.json };
    if cli.timestamps {
        out.line(format_args!("# generated at {}", now()))?;
    }
    match &cli.command {
        Cmd::Ingest(c) => ingest_cmd(cli, c, &mut out)?,
        Cmd::Visit(VisitCmd::Record { origin, snapshot, time }) => {
            let store = open(cli, OpenMode::Write, HashAlgo::Sha1)?;
            let visit = ingest::record_visit(&store, origin, *time, *snapshot)?;
            out.record(&visit)?;
        }
        Cmd::Gen(c) => gen_cmd(cli, c, &mut out)?,
        Cmd::Build(args) => build_cmd(cli, args, &mut out)?,
        Cmd::Query(q) => query_cmd(cli, q, &mut out)?,
        Cmd::Stats(args) => stats_cmd(cli, args.model, &mut out)?,
        Cmd::Analyze(a) => analyze_cmd(cli, a, &mut out)?,
        Cmd::Store(StoreCmd::Stats) => {
            let store = open(cli, OpenMode::Read, HashAlgo::Sha1)?;
            if !out.json {
                out.line("keyspace\tentries\tstored_bytes\tmetadata_bytes\tbytes_per_entry")?;
            }
            for s in store.stats()? {
                if out.json {
                    out.json(&s)?;
                } else {
                    out.line(format_args!(
                        "{}\t{}\t{}\t{}\t{:.1}",
                        s.keyspace,
                        s.entries,
                        s.stored_bytes,
                        s.metadata_bytes,
                        s.bytes_per_entry()
                    ))?;
                }
            }
        }
        Cmd::Validate => {
            let store = open(cli, OpenMode::Read, HashAlgo::Sha1)?;
            let report = validate_dag(&store.read()?)?;
            if out.json {
                out.json(&report)?;
            } else {
                out.line(format_args!("nodes_checked\t{}", report.nodes_checked))?;
                out.line(format_args!("contents_without_data\t{}", report.contents_without_data))?;
                for f in &report.findings {
                    out.line(format_args!("finding\t{}", serde_json::to_string(f)?))?;
                }
            }
            out.w.flush()?;
            if !report.is_clean() {
                bail!("{} integrity findings", report.findings.len());
            }
        }
    }
    out.w.flush()?;
    Ok(())
}

fn ingest_cmd(cli: &Cli, c: &IngestCmd, out: &mut Out) -> Result<()> {
    match c {
        IngestCmd::Dump { input, algo } => {
            let algo: HashAlgo = usage(algo.parse())?;
            let store = open(cli, OpenMode::WriteOrCreate, algo)?;
            let reader = open_dump(input).with_context(|| format!("reading {}", input.display()))?;
            let stats = load_dump(&store, reader)?;
            out.record(&stats)
        }
        IngestCmd::Git { repo, origin, visit_time } => {
            let store = open(cli, OpenMode::WriteOrCreate, HashAlgo::Sha1)?;
            let url = match origin {
                Some(o) => o.clone(),
                None => repo.canonicalize().unwrap_or_else(|_| repo.clone()).display().to_string(),
            };
            let (stats, visit) = ingest_git_repository(&store, repo, &url, visit_time.unwrap_or_else(now))?;
            out.record(&serde_json::json!({ "ingest": stats, "visit": visit }))
        }
    }
}

fn gen_params(c: &GenCmd) -> Result<GenParams> {
    let GenCmd::Synth {
        seed,
        origins,
        revisions,
        start,
        years,
        rate,
        alpha,
        max_multiplicity,
        slots,
        branching,
        fork_probability,
        release_probability,
        min_size,
        max_size,
        ..
    } = c
    else {
        unreachable!("only synth takes generator parameters")
    };
    let mut p = GenParams::default();
    p.seed = seed.unwrap_or(p.seed);
    p.n_origins = origins.unwrap_or(p.n_origins);
    if let Some(r) = revisions {
        p.revisions_per_origin = usage(r.parse::<RevisionCount>())?;
    }
    p.start_time = start.unwrap_or(p.start_time);
    p.years = years.unwrap_or(p.years);
    p.rate = rate.unwrap_or(p.rate);
    p.dup_alpha = alpha.unwrap_or(p.dup_alpha);
    p.max_multiplicity = max_multiplicity.unwrap_or(p.max_multiplicity);
    p.slots = slots.unwrap_or(p.slots);
    p.dir_branching = branching.unwrap_or(p.dir_branching);
    p.fork_probability = fork_probability.unwrap_or(p.fork_probability);
    p.release_probability = release_probability.unwrap_or(p.release_probability);
    p.content_size = (min_size.unwrap_or(p.content_size.0), max_size.unwrap_or(p.content_size.1));
    usage(p.validate())?;
    Ok(p)
}

#[derive(Serialize)]
struct ExtremeReport {
    revisions: usize,
    roots: usize,
    contents: usize,
}

fn gen_cmd(cli: &Cli, c: &GenCmd, out: &mut Out) -> Result<()> {
    let params = match c {
        GenCmd::Synth { .. } => Some(gen_params(c)?),
        _ => None,
    };
    let run = |sink: &mut dyn Sink| -> prov_core::Result<serde_json::Value> {
        let v = match c {
            GenCmd::Synth { .. } => serde_json::to_value(gen::generate(sink, params.as_ref().expect("synth params"))?),
            GenCmd::Extreme1 { revisions, contents, start, .. } => {
                let e = gen::extreme_shared_root(sink, *revisions, *contents, *start)?;
                serde_json::to_value(ExtremeReport {
                    revisions: e.revisions.len(),
                    roots: e.roots.len(),
                    contents: e.contents.len(),
                })
            }
            GenCmd::Extreme2 { revisions, files, nested, start, .. } => {
                let e = gen::extreme_disjoint(sink, *revisions, *files, *nested, *start)?;
                serde_json::to_value(ExtremeReport {
                    revisions: e.revisions.len(),
                    roots: e.roots.len(),
                    contents: e.contents.len(),
                })
            }
        };
        Ok(v.expect("reports serialize"))
    };
    let (GenCmd::Synth { out: o, .. } | GenCmd::Extreme1 { out: o, .. } | GenCmd::Extreme2 { out: o, .. }) = c;
    let GenOutput { output, algo } = o;
    let algo: HashAlgo = usage(algo.parse())?;
    match output {
        Some(path) if path == Path::new("-") => {
            out.w.flush()?;
            let mut sink = DumpSink::new(BufWriter::new(io::stdout().lock()), algo);
            let report = run(&mut sink)?;
            sink.finish()?.flush()?;
            log::info!("generated {report}");
        }
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            let mut sink = DumpSink::new(BufWriter::new(file), algo);
            let report = run(&mut sink)?;
            sink.finish()?.flush()?;
            out.record(&report)?;
        }
        None => {
            let store = open(cli, OpenMode::WriteOrCreate, algo)?;
            let report = gen::into_store(&store, run)?;
            out.record(&report)?;
        }
    }
    Ok(())
}

fn build_cmd(cli: &Cli, args: &BuildArgs, out: &mut Out) -> Result<()> {
    let store = open(cli, OpenMode::Write, HashAlgo::Sha1)?;
    let opts = BuildOptions { strict: args.strict_order, filter: filter(&args.filter), chunk: args.chunk };
    if !out.json {
        out.line("model\tprocessed\tskipped\trevisions\tcontents\tdirectories\tapproximate")?;
    }
    for m in models(args.model) {
        let r = build(&store, m, &opts)?;
        if out.json {
            out.json(&r)?;
        } else {
            let s = &r.state;
            out.line(format_args!(
                "{m}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.processed, r.skipped, s.revisions, s.contents, s.directories, s.approximate
            ))?;
        }
    }
    Ok(())
}

fn query_cmd(cli: &Cli, q: &QueryCmd, out: &mut Out) -> Result<()> {
    let store = open(cli, OpenMode::Read, HashAlgo::Sha1)?;
    let view = store.read()?;
    match q {
        QueryCmd::First { content, model } => {
            let o = first_occurrence(&view, single_model(*model)?, content)?;
            if out.json {
                out.json(&o.to_json())
            } else {
                out.line(o.to_tsv())
            }
        }
        QueryCmd::All { content, model, origins } => {
            let ro = if *origins { Some(RevisionOrigins::compute(&view)?) } else { None };
            let stream = all_occurrences(&view, single_model(*model)?, content)?;
            let mut first = true;
            for o in stream {
                let o = o?;
                let origins = ro.as_ref().map(|ro| ro.origins_of(&o.revision));
                if out.json {
                    let mut v = o.to_json();
                    if let Some(list) = origins {
                        v["origins"] = serde_json::json!(list);
                    }
                    out.json(&v)?;
                } else {
                    match origins {
                        Some(list) => out.line(format_args!("{}\t{}", o.to_tsv(), list.join(",")))?,
                        None => out.line(o.to_tsv())?,
                    }
                }
                if first {
                    // Callers waiting on the first record should not wait
                    // for the buffer to fill.
                    out.w.flush()?;
                    first = false;
                }
            }
            Ok(())
        }
    }
}

fn stats_cmd(cli: &Cli, model: ModelArg, out: &mut Out) -> Result<()> {
    let store = open(cli, OpenMode::Read, HashAlgo::Sha1)?;
    let view = store.read()?;
    let mut stats = Vec::new();
    for m in models(model) {
        if matches!(model, ModelArg::All) && ModelState::load(&view, m)?.is_none() {
            continue;
        }
        stats.push(model_stats(&view, m)?);
    }
    if stats.is_empty() {
        bail!("no index has been built");
    }
    let ratios = compare_models(&stats)?;
    if out.json {
        for s in &stats {
            out.json(s)?;
        }
        if !ratios.ratios.is_empty() {
            let list: Vec<_> = ratios
                .ratios
                .iter()
                .map(|r| serde_json::json!({ "ratio": format!("{}/{}", r.numerator, r.denominator), "value": r.value }))
                .collect();
            out.json(&serde_json::json!({ "ratios": list }))?;
        }
        return Ok(());
    }
    out.line("model\trevisions\tcontents\tdirectories\tentities\trelations\tapproximate")?;
    for s in &stats {
        out.line(format_args!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            s.model,
            s.revisions,
            s.contents,
            s.directories,
            s.total_entities(),
            s.total_relations(),
            s.approximate
        ))?;
    }
    out.line("")?;
    out.line("model\trelation\tcount")?;
    for s in &stats {
        for r in &s.relations {
            out.line(format_args!("{}\t{}\t{}", s.model, r.name, r.count))?;
        }
    }
    if !ratios.ratios.is_empty() {
        out.line("")?;
        out.line("ratio\tvalue")?;
        for r in &ratios.ratios {
            out.line(format_args!("{}/{}\t{}", r.numerator, r.denominator, r.display()))?;
        }
    }
    Ok(())
}

fn sample(s: &SampleArgs) -> Sample {
    let size = match (s.min_size, s.max_size) {
        (None, None) => None,
        (lo, hi) => Some((lo.unwrap_or(0), hi.unwrap_or(u64::MAX))),
    };
    Sample { hash_prefix: s.prefix.clone(), size }
}

fn reader(path: &PathBuf) -> Result<Box<dyn io::BufRead>> {
    if path == Path::new("-") {
        Ok(Box::new(BufReader::new(io::stdin())))
    } else {
        let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        Ok(Box::new(BufReader::new(f)))
    }
}

fn analyze_cmd(cli: &Cli, a: &AnalyzeCmd, out: &mut Out) -> Result<()> {
    if let AnalyzeCmd::Fit { law, input, from, to, kmin, kmax } = a {
        let summary = match law {
            LawArg::Exponential => {
                let series = TimeBucketSeries::read_csv(reader(input)?)?;
                let lo = from.as_deref().map(parse_bucket_label).transpose();
                let hi = to.as_deref().map(parse_bucket_label).transpose();
                let (lo, hi) = (usage(lo)?, usage(hi)?);
                let window = (lo.is_some() || hi.is_some()).then(|| (lo.unwrap_or(i64::MIN), hi.unwrap_or(i64::MAX)));
                serde_json::to_value(fit_exponential(&series, window)?)?
            }
            LawArg::PowerLaw => {
                let h = Histogram::read_csv(reader(input)?)?;
                serde_json::to_value(fit_power_law(&h, (*kmin, *kmax))?)?
            }
        };
        return out.json(&summary);
    }
    let store = open(cli, OpenMode::Read, HashAlgo::Sha1)?;
    let view = store.read()?;
    match a {
        AnalyzeCmd::Growth { series, bucket, after, until } => {
            let width: BucketWidth = usage(bucket.parse())?;
            let g = original_growth_series(&view, TimestampFilter { after: Some(*after), until: *until }, width)?;
            let s = match series {
                SeriesArg::Revisions => g.revisions,
                SeriesArg::Contents => g.contents,
            };
            if out.json {
                for (t, n) in &s.points {
                    out.json(&serde_json::json!({ "bucket": width.label(*t), "start": t, "count": n }))?;
                }
                Ok(())
            } else {
                s.write_csv(&mut out.w)?;
                Ok(())
            }
        }
        AnalyzeCmd::Mult { layer, sample: s, cumulative } => {
            let layer: Layer = usage(layer.parse())?;
            let h = multiplication_histogram(&view, layer, &sample(s))?;
            if *cumulative {
                out.histogram("k,count", h.cumulative())
            } else {
                out.histogram("k,count", h.counts)
            }
        }
        AnalyzeCmd::Sloc { extensions, sample: s, lengths } => {
            let opts = SlocSample { extensions: extensions.clone(), sample: sample(s), ..SlocSample::default() };
            let r = sloc_multiplication(&view, &opts)?;
            log::info!("sampled {} contents, {} without data", r.contents, r.without_data);
            if *lengths {
                out.histogram("length,count", r.lengths.into_iter().map(|(l, n)| (l as u64, n)))
            } else {
                out.histogram("k,count", r.histogram.counts)
            }
        }
        AnalyzeCmd::Origins { mode, distribution } => {
            let mode: OriginMode = usage(mode.parse())?;
            let r = origin_sizes(&view, mode)?;
            if *distribution {
                return out.histogram("k,count", r.distribution.counts);
            }
            for (origin, n) in &r.sizes {
                if out.json {
                    out.json(&serde_json::json!({ "origin": origin, "revisions": n }))?;
                } else {
                    out.line(format_args!("{origin}\t{n}"))?;
                }
            }
            Ok(())
        }
        AnalyzeCmd::Fit { .. } => Err(anyhow!("handled above")),
    }
}
