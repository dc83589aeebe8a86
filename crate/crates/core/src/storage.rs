//! Persistent ordered key-value substrate.
//!
//! Every keyspace is a redb table mapping byte strings to byte strings, so
//! iteration order is bytewise-lexicographic. A store lives in a directory
//! holding a single `prov.redb` file; the `meta` keyspace records the format
//! version and the digest algorithm chosen at creation.
//!
//! Writes go through [`Store::write`] (one atomic, durable transaction per
//! call) or [`Store::batch`]. Reads go through a [`ReadView`], a snapshot of
//! the last committed transaction whose scans own their iterators and can be
//! streamed without borrowing the view.

use std::ops::Bound;
use std::path::{Path, PathBuf};

use redb::{
    Database, DatabaseError, ReadOnlyDatabase, ReadOnlyTable, ReadableDatabase, ReadableTable,
    ReadableTableMetadata, Table, TableDefinition,
};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::id::HashAlgo;

const FORMAT_VERSION: &[u8] = b"prov-store-1";
const DB_FILE: &str = "prov.redb";
const DEFAULT_CACHE: usize = 32 << 20;

macro_rules! keyspaces {
    ($($variant:ident => $name:literal),* $(,)?) => {
        /// Named keyspaces of a store.
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
        pub enum Keyspace { $($variant),* }

        impl Keyspace {
            pub const ALL: &'static [Keyspace] = &[$(Keyspace::$variant),*];

            pub fn name(self) -> &'static str {
                match self { $(Keyspace::$variant => $name),* }
            }
        }
    };
}

keyspaces! {
    Meta => "meta",
    Nodes => "nodes",
    RevTime => "rev-time",
    Origins => "origins",
    Visits => "visits",
    VisitIndex => "visit-index",
    FlatClock => "flat-clock",
    Flat => "flat",
    RecClock => "recursive-clock",
    RecCd => "recursive-cd",
    RecDd => "recursive-dd",
    RecDr => "recursive-dr",
    CompactClock => "compact-clock",
    CompactCer => "compact-cer",
    CompactDor => "compact-dor",
    CompactCod => "compact-cod",
    CompactDirs => "compact-dirs",
}

impl Keyspace {
    pub fn from_name(name: &str) -> Result<Keyspace> {
        Keyspace::ALL
            .iter()
            .copied()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::UnknownKeyspace(name.to_string()))
    }

    fn index(self) -> usize {
        self as usize
    }

    fn table(self) -> TableDefinition<'static, &'static [u8], &'static [u8]> {
        TableDefinition::new(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpenMode {
    /// Existing store, no writes.
    Read,
    /// Existing store, writable.
    Write,
    /// New store; fails if one already exists.
    Create,
    /// Writable; creates the store when missing.
    WriteOrCreate,
}

#[derive(Clone, Debug)]
pub struct StoreOptions {
    /// Digest algorithm for newly created stores. Ignored when opening.
    pub algo: HashAlgo,
    /// Page cache budget in bytes.
    pub cache_bytes: usize,
    /// Accept nodes whose references are not yet stored.
    pub permissive: bool,
}

impl Default for StoreOptions {
    fn default() -> Self {
        StoreOptions { algo: HashAlgo::Sha1, cache_bytes: DEFAULT_CACHE, permissive: false }
    }
}

enum Backing {
    ReadWrite(Database),
    ReadOnly(ReadOnlyDatabase),
}

impl Backing {
    fn db(&self) -> &dyn ReadableDatabase {
        match self {
            Backing::ReadWrite(db) => db,
            Backing::ReadOnly(db) => db,
        }
    }
}

/// Monotonic sequence number of committed write transactions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct CommitToken(pub u64);

/// A single write in a [`Store::batch`].
#[derive(Clone, Debug)]
pub enum Write {
    Put { keyspace: Keyspace, key: Vec<u8>, value: Vec<u8> },
    Delete { keyspace: Keyspace, key: Vec<u8> },
}

#[derive(Clone, Debug, Serialize)]
pub struct KeyspaceStats {
    pub keyspace: &'static str,
    pub entries: u64,
    pub stored_bytes: u64,
    pub metadata_bytes: u64,
}

impl KeyspaceStats {
    pub fn bytes_per_entry(&self) -> f64 {
        if self.entries == 0 {
            0.0
        } else {
            (self.stored_bytes + self.metadata_bytes) as f64 / self.entries as f64
        }
    }
}

/// Handle on an open store. Shareable across threads.
pub struct Store {
    backing: Backing,
    algo: HashAlgo,
    permissive: bool,
    path: Option<PathBuf>,
}

const META_ALGO: &[u8] = b"hash-algo";
const META_FORMAT: &[u8] = b"format";
const META_COMMIT: &[u8] = b"commit-seq";

impl Store {
    pub fn open(path: impl AsRef<Path>, mode: OpenMode) -> Result<Store> {
        Store::open_with(path, mode, StoreOptions::default())
    }

    pub fn open_with(path: impl AsRef<Path>, mode: OpenMode, opts: StoreOptions) -> Result<Store> {
        let dir = path.as_ref().to_path_buf();
        let file = dir.join(DB_FILE);
        let exists = file.exists();
        let create = match mode {
            OpenMode::Read | OpenMode::Write if !exists => {
                return Err(Error::NotFound(format!("store {}", dir.display())))
            }
            OpenMode::Create if exists => return Err(Error::AlreadyExists(dir)),
            OpenMode::Create => true,
            OpenMode::WriteOrCreate => !exists,
            _ => false,
        };
        if create {
            std::fs::create_dir_all(&dir)?;
        }
        let mut builder = redb::Builder::new();
        builder.set_cache_size(opts.cache_bytes);
        let map_open = |e: DatabaseError| match e {
            DatabaseError::DatabaseAlreadyOpen => Error::Locked(dir.clone()),
            DatabaseError::Storage(redb::StorageError::Io(io)) if io.kind() == std::io::ErrorKind::InvalidData => {
                Error::CorruptManifest(io.to_string())
            }
            DatabaseError::Storage(redb::StorageError::Io(io)) => Error::Io(io),
            other => Error::CorruptManifest(other.to_string()),
        };
        let backing = if mode == OpenMode::Read {
            Backing::ReadOnly(builder.open_read_only(&file).map_err(map_open)?)
        } else if create {
            Backing::ReadWrite(builder.create(&file).map_err(map_open)?)
        } else {
            Backing::ReadWrite(builder.open(&file).map_err(map_open)?)
        };
        let mut store = Store { backing, algo: opts.algo, permissive: opts.permissive, path: Some(dir) };
        if create {
            store.initialize(opts.algo)?;
        }
        store.load_manifest()?;
        Ok(store)
    }

    /// Volatile store used by tests and throwaway pipelines.
    pub fn in_memory(algo: HashAlgo) -> Result<Store> {
        let db = redb::Builder::new()
            .create_with_backend(redb::backends::InMemoryBackend::new())
            .map_err(|e| Error::Storage(e.to_string()))?;
        let mut store = Store { backing: Backing::ReadWrite(db), algo, permissive: false, path: None };
        store.initialize(algo)?;
        store.load_manifest()?;
        Ok(store)
    }

    fn initialize(&mut self, algo: HashAlgo) -> Result<()> {
        let db = match &self.backing {
            Backing::ReadWrite(db) => db,
            Backing::ReadOnly(_) => return Err(Error::ReadOnly),
        };
        let txn = db.begin_write()?;
        {
            for ks in Keyspace::ALL {
                txn.open_table(ks.table())?;
            }
            let mut meta = txn.open_table(Keyspace::Meta.table())?;
            meta.insert(META_FORMAT, FORMAT_VERSION)?;
            meta.insert(META_ALGO, algo.name().as_bytes())?;
            meta.insert(META_COMMIT, 0u64.to_be_bytes().as_slice())?;
        }
        txn.commit()?;
        Ok(())
    }

    fn load_manifest(&mut self) -> Result<()> {
        let view = self.read()?;
        let format = view.get(Keyspace::Meta, META_FORMAT)?;
        if format.as_deref() != Some(FORMAT_VERSION) {
            return Err(Error::CorruptManifest(format!("unexpected format marker {format:?}")));
        }
        let algo = view
            .get(Keyspace::Meta, META_ALGO)?
            .ok_or_else(|| Error::CorruptManifest("missing hash algorithm".into()))?;
        self.algo = std::str::from_utf8(&algo)
            .map_err(|_| Error::CorruptManifest("hash algorithm not utf-8".into()))?
            .parse()
            .map_err(|_| Error::CorruptManifest("unknown hash algorithm".into()))?;
        Ok(())
    }

    pub fn algo(&self) -> HashAlgo {
        self.algo
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn is_read_only(&self) -> bool {
        matches!(self.backing, Backing::ReadOnly(_))
    }

    pub fn set_permissive(&mut self, permissive: bool) {
        self.permissive = permissive;
    }

    /// Snapshot of the latest committed state.
    pub fn read(&self) -> Result<ReadView> {
        let txn = self.backing.db().begin_read()?;
        let mut tables = Vec::with_capacity(Keyspace::ALL.len());
        for ks in Keyspace::ALL {
            tables.push(txn.open_table(ks.table())?);
        }
        Ok(ReadView { tables, algo: self.algo })
    }

    /// Runs `f` inside one write transaction, committed durably when `f`
    /// returns `Ok`. An error aborts the transaction.
    pub fn write<R>(&self, f: impl FnOnce(&mut WriteView<'_>) -> Result<R>) -> Result<R> {
        let db = match &self.backing {
            Backing::ReadWrite(db) => db,
            Backing::ReadOnly(_) => return Err(Error::ReadOnly),
        };
        let txn = db.begin_write()?;
        let out = {
            let mut tables = Vec::with_capacity(Keyspace::ALL.len());
            for ks in Keyspace::ALL {
                tables.push(txn.open_table(ks.table())?);
            }
            let mut view = WriteView { tables, algo: self.algo, permissive: self.permissive };
            let out = f(&mut view)?;
            let seq = view.commit_seq()? + 1;
            view.put(Keyspace::Meta, META_COMMIT, &seq.to_be_bytes())?;
            out
        };
        txn.commit()?;
        Ok(out)
    }

    /// Applies `writes` atomically, in order. An empty batch commits nothing.
    pub fn batch(&self, writes: Vec<Write>) -> Result<CommitToken> {
        if writes.is_empty() {
            return Ok(CommitToken(self.read()?.commit_seq()?));
        }
        self.write(|w| {
            for op in &writes {
                match op {
                    Write::Put { keyspace, key, value } => {
                        w.put(*keyspace, key, value)?;
                    }
                    Write::Delete { keyspace, key } => {
                        w.delete(*keyspace, key)?;
                    }
                }
            }
            Ok(CommitToken(w.commit_seq()? + 1))
        })
    }

    pub fn stats(&self) -> Result<Vec<KeyspaceStats>> {
        self.read()?.stats()
    }
}

/// Lexicographic successor bound of all keys starting with `prefix`.
fn prefix_end(prefix: &[u8]) -> Option<Vec<u8>> {
    let mut end = prefix.to_vec();
    while let Some(last) = end.pop() {
        if last < 0xff {
            end.push(last + 1);
            return Some(end);
        }
    }
    None
}

fn scan_bounds<'k>(prefix: &'k [u8], after: Option<&'k [u8]>, end: &'k Option<Vec<u8>>) -> (Bound<&'k [u8]>, Bound<&'k [u8]>) {
    let lower = match after {
        Some(a) if a >= prefix => Bound::Excluded(a),
        _ => Bound::Included(prefix),
    };
    let upper = match end {
        Some(e) => Bound::Excluded(e.as_slice()),
        None => Bound::Unbounded,
    };
    (lower, upper)
}

pub type KvPair = (Vec<u8>, Vec<u8>);

/// Read access shared by snapshots and write transactions.
pub trait KvRead {
    fn algo(&self) -> HashAlgo;
    fn get(&self, ks: Keyspace, key: &[u8]) -> Result<Option<Vec<u8>>>;
    fn contains(&self, ks: Keyspace, key: &[u8]) -> Result<bool> {
        Ok(self.get(ks, key)?.is_some())
    }
    /// Ordered scan of keys starting with `prefix`, optionally resuming
    /// strictly after a previously returned key.
    fn scan<'a>(
        &'a self,
        ks: Keyspace,
        prefix: &[u8],
        after: Option<&[u8]>,
    ) -> Result<Box<dyn Iterator<Item = Result<KvPair>> + 'a>>;
    fn len(&self, ks: Keyspace) -> Result<u64>;

    fn commit_seq(&self) -> Result<u64> {
        Ok(self
            .get(Keyspace::Meta, META_COMMIT)?
            .and_then(|v| v.try_into().ok())
            .map(u64::from_be_bytes)
            .unwrap_or(0))
    }
}

type RangeIter<R> = std::iter::Map<R, fn(std::result::Result<(redb::AccessGuard<'static, &'static [u8]>, redb::AccessGuard<'static, &'static [u8]>), redb::StorageError>) -> Result<KvPair>>;

fn owned_pair(
    r: std::result::Result<
        (redb::AccessGuard<'_, &'static [u8]>, redb::AccessGuard<'_, &'static [u8]>),
        redb::StorageError,
    >,
) -> Result<KvPair> {
    let (k, v) = r?;
    Ok((k.value().to_vec(), v.value().to_vec()))
}

/// Streaming scan that owns its snapshot; it does not borrow the view.
pub struct Scan {
    inner: RangeIter<redb::Range<'static, &'static [u8], &'static [u8]>>,
    prefix: Vec<u8>,
    done: bool,
}

impl Iterator for Scan {
    type Item = Result<KvPair>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.inner.next() {
            Some(Ok((k, v))) if k.starts_with(&self.prefix) => Some(Ok((k, v))),
            Some(Err(e)) => {
                self.done = true;
                Some(Err(e))
            }
            _ => {
                self.done = true;
                None
            }
        }
    }
}

/// Consistent read snapshot.
pub struct ReadView {
    tables: Vec<ReadOnlyTable<&'static [u8], &'static [u8]>>,
    algo: HashAlgo,
}

impl ReadView {
    /// Like [`KvRead::scan`] but the iterator is `'static`.
    pub fn scan_owned(&self, ks: Keyspace, prefix: &[u8], after: Option<&[u8]>) -> Result<Scan> {
        let end = prefix_end(prefix);
        let range = self.tables[ks.index()].range::<&[u8]>(scan_bounds(prefix, after, &end))?;
        Ok(Scan {
            inner: range.map(owned_pair as fn(_) -> _),
            prefix: prefix.to_vec(),
            done: false,
        })
    }

    pub fn stats(&self) -> Result<Vec<KeyspaceStats>> {
        Keyspace::ALL
            .iter()
            .map(|&ks| {
                let t = &self.tables[ks.index()];
                let s = t.stats()?;
                Ok(KeyspaceStats {
                    keyspace: ks.name(),
                    entries: t.len()?,
                    stored_bytes: s.stored_bytes(),
                    metadata_bytes: s.metadata_bytes(),
                })
            })
            .collect()
    }
}

impl KvRead for ReadView {
    fn algo(&self) -> HashAlgo {
        self.algo
    }

    fn get(&self, ks: Keyspace, key: &[u8]) -> Result<Option<Vec<u8>>> {
        Ok(self.tables[ks.index()].get(key)?.map(|g| g.value().to_vec()))
    }

    fn contains(&self, ks: Keyspace, key: &[u8]) -> Result<bool> {
        Ok(self.tables[ks.index()].get(key)?.is_some())
    }

    fn scan<'a>(
        &'a self,
        ks: Keyspace,
        prefix: &[u8],
        after: Option<&[u8]>,
    ) -> Result<Box<dyn Iterator<Item = Result<KvPair>> + 'a>> {
        Ok(Box::new(self.scan_owned(ks, prefix, after)?))
    }

    fn len(&self, ks: Keyspace) -> Result<u64> {
        Ok(self.tables[ks.index()].len()?)
    }
}

/// Open write transaction with every keyspace table opened once.
pub struct WriteView<'txn> {
    tables: Vec<Table<'txn, &'static [u8], &'static [u8]>>,
    algo: HashAlgo,
    permissive: bool,
}

impl WriteView<'_> {
    pub fn permissive(&self) -> bool {
        self.permissive
    }

    /// Inserts or overwrites; returns whether the key existed before.
    pub fn put(&mut self, ks: Keyspace, key: &[u8], value: &[u8]) -> Result<bool> {
        Ok(self.tables[ks.index()].insert(key, value)?.is_some())
    }

    /// Inserts only when absent; returns whether the key was new.
    pub fn put_new(&mut self, ks: Keyspace, key: &[u8], value: &[u8]) -> Result<bool> {
        if self.tables[ks.index()].get(key)?.is_some() {
            return Ok(false);
        }
        self.tables[ks.index()].insert(key, value)?;
        Ok(true)
    }

    pub fn delete(&mut self, ks: Keyspace, key: &[u8]) -> Result<bool> {
        Ok(self.tables[ks.index()].remove(key)?.is_some())
    }
}

impl KvRead for WriteView<'_> {
    fn algo(&self) -> HashAlgo {
        self.algo
    }

    fn get(&self, ks: Keyspace, key: &[u8]) -> Result<Option<Vec<u8>>> {
        Ok(self.tables[ks.index()].get(key)?.map(|g| g.value().to_vec()))
    }

    fn contains(&self, ks: Keyspace, key: &[u8]) -> Result<bool> {
        Ok(self.tables[ks.index()].get(key)?.is_some())
    }

    fn scan<'a>(
        &'a self,
        ks: Keyspace,
        prefix: &[u8],
        after: Option<&[u8]>,
    ) -> Result<Box<dyn Iterator<Item = Result<KvPair>> + 'a>> {
        let end = prefix_end(prefix);
        let range = self.tables[ks.index()].range::<&[u8]>(scan_bounds(prefix, after, &end))?;
        let prefix = prefix.to_vec();
        Ok(Box::new(
            range
                .map(owned_pair)
                .take_while(move |r| r.as_ref().map_or(true, |(k, _)| k.starts_with(&prefix))),
        ))
    }

    fn len(&self, ks: Keyspace) -> Result<u64> {
        Ok(self.tables[ks.index()].len()?)
    }
}

/// Sign-flipped big-endian encoding so that byte order matches numeric order.
pub fn encode_ts(ts: i64) -> [u8; 8] {
    ((ts as u64) ^ (1 << 63)).to_be_bytes()
}

pub fn decode_ts(b: &[u8]) -> Result<i64> {
    let arr: [u8; 8] = b
        .get(..8)
        .and_then(|s| s.try_into().ok())
        .ok_or_else(|| Error::Decode("short timestamp".into()))?;
    Ok((u64::from_be_bytes(arr) ^ (1 << 63)) as i64)
}
