//! Knowledge-graph storage, triple-file ingestion and symbolic set operators.
//!
//! Triple files hold one `head<TAB>relation<TAB>tail` per line. Fields are
//! either integer ids or names; names are resolved through optional vocab
//! files (`name<TAB>id` per line) or, without vocab, numbered in first-seen
//! order across train, valid and test.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

pub type EntityId = usize;
pub type RelationId = usize;
pub type EntitySet = BTreeSet<EntityId>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Self { head, relation, tail }
    }
}

#[derive(Debug, Error)]
pub enum KgError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error("{path}:{line}: unknown {kind} `{name}`")]
    UnknownName { path: PathBuf, line: usize, kind: &'static str, name: String },
    #[error("{kind} id {id} out of range (count {count})")]
    IdOutOfRange { kind: &'static str, id: usize, count: usize },
    #[error("invalid relation id {0}")]
    InvalidRelation(RelationId),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> KgError + '_ {
    move |source| KgError::Io { path: path.to_path_buf(), source }
}

/// Immutable graph with a per-relation forward and reverse adjacency index.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGraph {
    entity_count: usize,
    relation_count: usize,
    triples: BTreeSet<Triple>,
    forward: Vec<BTreeMap<EntityId, Vec<EntityId>>>,
    reverse: Vec<BTreeMap<EntityId, Vec<EntityId>>>,
}

impl KnowledgeGraph {
    pub fn new(
        entity_count: usize,
        relation_count: usize,
        triples: impl IntoIterator<Item = Triple>,
    ) -> Result<Self, KgError> {
        let mut set = BTreeSet::new();
        for t in triples {
            for (kind, id, count) in [
                ("entity", t.head, entity_count),
                ("relation", t.relation, relation_count),
                ("entity", t.tail, entity_count),
            ] {
                if id >= count {
                    return Err(KgError::IdOutOfRange { kind, id, count });
                }
            }
            set.insert(t);
        }
        let mut forward = vec![BTreeMap::<EntityId, Vec<EntityId>>::new(); relation_count];
        let mut reverse = vec![BTreeMap::<EntityId, Vec<EntityId>>::new(); relation_count];
        // BTreeSet order is (head, relation, tail), so the forward lists come out sorted.
        for t in &set {
            forward[t.relation].entry(t.head).or_default().push(t.tail);
            reverse[t.relation].entry(t.tail).or_default().push(t.head);
        }
        for idx in &mut reverse {
            for heads in idx.values_mut() {
                heads.sort_unstable();
            }
        }
        Ok(Self { entity_count, relation_count, triples: set, forward, reverse })
    }

    pub fn entity_count(&self) -> usize {
        self.entity_count
    }

    pub fn relation_count(&self) -> usize {
        self.relation_count
    }

    pub fn triples(&self) -> &BTreeSet<Triple> {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triples.contains(t)
    }

    /// Tails reachable from `head` by `relation` (sorted).
    pub fn tails(&self, head: EntityId, relation: RelationId) -> &[EntityId] {
        self.forward
            .get(relation)
            .and_then(|idx| idx.get(&head))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Heads with an edge `relation` into `tail` (sorted).
    pub fn heads(&self, tail: EntityId, relation: RelationId) -> &[EntityId] {
        self.reverse
            .get(relation)
            .and_then(|idx| idx.get(&tail))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Relations with at least one edge into `tail`.
    pub fn incoming_relations(&self, tail: EntityId) -> Vec<RelationId> {
        (0..self.relation_count).filter(|&r| self.reverse[r].contains_key(&tail)).collect()
    }

    /// Entities with at least one incoming edge, in id order.
    pub fn entities_with_incoming(&self) -> Vec<EntityId> {
        let set: EntitySet = self.triples.iter().map(|t| t.tail).collect();
        set.into_iter().collect()
    }

    pub fn all_entities(&self) -> EntitySet {
        (0..self.entity_count).collect()
    }

    /// `∪_{v ∈ source} A_r(v)`.
    pub fn project_set(&self, source: &EntitySet, relation: RelationId) -> Result<EntitySet, KgError> {
        if relation >= self.relation_count {
            return Err(KgError::InvalidRelation(relation));
        }
        let idx = &self.forward[relation];
        Ok(source.iter().filter_map(|v| idx.get(v)).flatten().copied().collect())
    }

    /// Complement relative to the full entity vocabulary of this graph.
    pub fn set_complement(&self, set: &EntitySet) -> EntitySet {
        (0..self.entity_count).filter(|e| !set.contains(e)).collect()
    }
}

pub fn set_intersection<'a>(sets: impl IntoIterator<Item = &'a EntitySet>) -> EntitySet {
    let mut iter = sets.into_iter();
    let Some(first) = iter.next() else {
        return EntitySet::new();
    };
    iter.fold(first.clone(), |acc, s| acc.intersection(s).copied().collect())
}

pub fn set_union<'a>(sets: impl IntoIterator<Item = &'a EntitySet>) -> EntitySet {
    sets.into_iter().flatten().copied().collect()
}

/// Id ↔ name mapping for string-keyed datasets.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    names: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocab {
    pub fn from_names(names: Vec<String>) -> Self {
        let ids = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Self { names, ids }
    }

    /// Reads `name<TAB>id` lines; ids must form `0..n` without gaps.
    pub fn load(path: &Path) -> Result<Self, KgError> {
        let file = fs::File::open(path).map_err(io_err(path))?;
        let mut pairs = Vec::new();
        for (no, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io_err(path))?;
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |message: String| KgError::Malformed {
                path: path.to_path_buf(),
                line: no + 1,
                message,
            };
            let (name, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| malformed("expected name<TAB>id".into()))?;
            let id: usize = id.trim().parse().map_err(|_| malformed(format!("bad id `{id}`")))?;
            pairs.push((id, name.to_string(), no + 1));
        }
        pairs.sort();
        let mut names = Vec::with_capacity(pairs.len());
        for (expected, (id, name, line)) in pairs.into_iter().enumerate() {
            if id != expected {
                return Err(KgError::Malformed {
                    path: path.to_path_buf(),
                    line,
                    message: format!("vocab ids must be dense; expected id {expected}, found {id}"),
                });
            }
            names.push(name);
        }
        Ok(Self::from_names(names))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    fn intern(&mut self, name: &str) -> usize {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_string());
        self.ids.insert(name.to_string(), id);
        id
    }
}

/// Cumulative train ⊆ valid ⊆ test graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSplits {
    pub train: KnowledgeGraph,
    pub valid: KnowledgeGraph,
    pub test: KnowledgeGraph,
    pub entity_names: Option<Vocab>,
    pub relation_names: Option<Vocab>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

impl GraphSplits {
    /// Builds cumulative graphs from per-split edge lists.
    pub fn from_edges(
        entity_count: usize,
        relation_count: usize,
        train: &[Triple],
        valid: &[Triple],
        test: &[Triple],
    ) -> Result<Self, KgError> {
        let train_kg = KnowledgeGraph::new(entity_count, relation_count, train.iter().copied())?;
        let valid_kg = KnowledgeGraph::new(
            entity_count,
            relation_count,
            train.iter().chain(valid).copied(),
        )?;
        let test_kg = KnowledgeGraph::new(
            entity_count,
            relation_count,
            train.iter().chain(valid).chain(test).copied(),
        )?;
        Ok(Self {
            train: train_kg,
            valid: valid_kg,
            test: test_kg,
            entity_names: None,
            relation_names: None,
        })
    }

    pub fn graph(&self, split: Split) -> &KnowledgeGraph {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn entity_count(&self) -> usize {
        self.test.entity_count
    }

    pub fn relation_count(&self) -> usize {
        self.test.relation_count
    }

    /// Edges first added in `split` (the split's own file, minus earlier splits).
    pub fn split_edges(&self, split: Split) -> Vec<Triple> {
        match split {
            Split::Train => self.train.triples.iter().copied().collect(),
            Split::Valid => self.valid.triples.difference(&self.train.triples).copied().collect(),
            Split::Test => self.test.triples.difference(&self.valid.triples).copied().collect(),
        }
    }

    /// Writes the canonical graph file read back by [`GraphSplits::read_canonical`].
    pub fn write_canonical(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(out, "gammae-graph\t1")?;
        writeln!(out, "entities\t{}", self.entity_count())?;
        writeln!(out, "relations\t{}", self.relation_count())?;
        if let Some(v) = &self.entity_names {
            for (i, n) in v.names().iter().enumerate() {
                writeln!(out, "entity\t{i}\t{n}")?;
            }
        }
        if let Some(v) = &self.relation_names {
            for (i, n) in v.names().iter().enumerate() {
                writeln!(out, "relation\t{i}\t{n}")?;
            }
        }
        for split in Split::ALL {
            let edges = self.split_edges(split);
            writeln!(out, "split\t{split}\t{}", edges.len())?;
            for t in edges {
                writeln!(out, "{}\t{}\t{}", t.head, t.relation, t.tail)?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), KgError> {
        let file = fs::File::create(path).map_err(io_err(path))?;
        let mut w = io::BufWriter::new(file);
        self.write_canonical(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self, KgError> {
        let file = fs::File::open(path).map_err(io_err(path))?;
        Self::read_canonical(BufReader::new(file), path)
    }

    pub fn read_canonical(reader: impl BufRead, path: &Path) -> Result<Self, KgError> {
        let malformed = |line: usize, message: &str| KgError::Malformed {
            path: path.to_path_buf(),
            line,
            message: message.to_string(),
        };
        let mut entities = None;
        let mut relations = None;
        let mut entity_names = Vec::new();
        let mut relation_names = Vec::new();
        let mut edges: [Vec<Triple>; 3] = Default::default();
        let mut current: Option<usize> = None;
        for (no, line) in reader.lines().enumerate() {
            let no = no + 1;
            let line = line.map_err(io_err(path))?;
            let fields: Vec<&str> = line.split('\t').collect();
            let num = |s: &str| s.parse::<usize>().map_err(|_| malformed(no, "expected integer"));
            match fields.as_slice() {
                ["gammae-graph", "1"] if no == 1 => {}
                _ if no == 1 => return Err(malformed(no, "not a gammae graph file (v1)")),
                ["entities", n] => entities = Some(num(n)?),
                ["relations", n] => relations = Some(num(n)?),
                ["entity", id, name] => {
                    if num(id)? != entity_names.len() {
                        return Err(malformed(no, "entity names out of order"));
                    }
                    entity_names.push(name.to_string());
                }
                ["relation", id, name] => {
                    if num(id)? != relation_names.len() {
                        return Err(malformed(no, "relation names out of order"));
                    }
                    relation_names.push(name.to_string());
                }
                ["split", name, _] => {
                    let split: Split = name.parse().map_err(|e: String| malformed(no, &e))?;
                    current = Some(split as usize);
                }
                [h, r, t] => {
                    let idx = current.ok_or_else(|| malformed(no, "triple before split header"))?;
                    edges[idx].push(Triple::new(num(h)?, num(r)?, num(t)?));
                }
                _ => return Err(malformed(no, "unrecognised line")),
            }
        }
        let entities = entities.ok_or_else(|| malformed(0, "missing entity count"))?;
        let relations = relations.ok_or_else(|| malformed(0, "missing relation count"))?;
        let mut splits = Self::from_edges(entities, relations, &edges[0], &edges[1], &edges[2])?;
        if !entity_names.is_empty() {
            splits.entity_names = Some(Vocab::from_names(entity_names));
        }
        if !relation_names.is_empty() {
            splits.relation_names = Some(Vocab::from_names(relation_names));
        }
        Ok(splits)
    }
}

/// Where to find the split files and optional vocabularies.
#[derive(Debug, Clone, Default)]
pub struct TripleSources {
    pub train: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
    pub entity_vocab: Option<PathBuf>,
    pub relation_vocab: Option<PathBuf>,
    /// Add a reverse relation `r + |R|` for every edge.
    pub add_inverse: bool,
}

impl TripleSources {
    /// `train.txt`, `valid.txt`, `test.txt` in `dir`, plus `entities.dict` /
    /// `relations.dict` vocab files when present.
    pub fn from_dir(dir: &Path) -> Self {
        let opt = |name: &str| {
            let p = dir.join(name);
            p.exists().then_some(p)
        };
        Self {
            train: dir.join("train.txt"),
            valid: dir.join("valid.txt"),
            test: dir.join("test.txt"),
            entity_vocab: opt("entities.dict"),
            relation_vocab: opt("relations.dict"),
            add_inverse: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitReport {
    pub lines: usize,
    pub unique_triples: usize,
    pub duplicates: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub entities: usize,
    pub relations: usize,
    pub named: bool,
    pub inverse_added: bool,
    pub splits: BTreeMap<Split, SplitReport>,
}

impl LoadReport {
    pub fn total_duplicates(&self) -> usize {
        self.splits.values().map(|s| s.duplicates).sum()
    }
}

impl fmt::Display for LoadReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "entities\t{}", self.entities)?;
        writeln!(f, "relations\t{}", self.relations)?;
        writeln!(f, "id_mode\t{}", if self.named { "names" } else { "integers" })?;
        writeln!(f, "inverse_relations\t{}", self.inverse_added)?;
        for (split, r) in &self.splits {
            writeln!(
                f,
                "{split}\tlines={}\ttriples={}\tduplicates={}",
                r.lines, r.unique_triples, r.duplicates
            )?;
        }
        Ok(())
    }
}

enum Resolver {
    Ids,
    Fixed { entities: Vocab, relations: Vocab },
    FirstSeen { entities: Vocab, relations: Vocab },
}

impl Resolver {
    fn resolve(
        &mut self,
        path: &Path,
        line: usize,
        fields: [&str; 3],
    ) -> Result<(usize, usize, usize), KgError> {
        match self {
            Resolver::Ids => {
                let parse = |s: &str| {
                    s.parse::<usize>().map_err(|_| KgError::Malformed {
                        path: path.to_path_buf(),
                        line,
                        message: format!("expected integer id, found `{s}`"),
                    })
                };
                Ok((parse(fields[0])?, parse(fields[1])?, parse(fields[2])?))
            }
            Resolver::Fixed { entities, relations } => {
                let look = |v: &Vocab, kind, name: &str| {
                    v.id(name).ok_or_else(|| KgError::UnknownName {
                        path: path.to_path_buf(),
                        line,
                        kind,
                        name: name.to_string(),
                    })
                };
                Ok((
                    look(entities, "entity", fields[0])?,
                    look(relations, "relation", fields[1])?,
                    look(entities, "entity", fields[2])?,
                ))
            }
            Resolver::FirstSeen { entities, relations } => Ok((
                entities.intern(fields[0]),
                relations.intern(fields[1]),
                entities.intern(fields[2]),
            )),
        }
    }
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, KgError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (no, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let trimmed = line.trim_end_matches('\r');
        if !trimmed.trim().is_empty() {
            out.push((no + 1, trimmed.to_string()));
        }
    }
    Ok(out)
}

fn split_fields<'a>(path: &Path, line: usize, text: &'a str) -> Result<[&'a str; 3], KgError> {
    let fields: Vec<&str> = text.split('\t').collect();
    match fields.as_slice() {
        [h, r, t] if !h.is_empty() && !r.is_empty() && !t.is_empty() => Ok([h, r, t]),
        _ => Err(KgError::Malformed {
            path: path.to_path_buf(),
            line,
            message: format!("expected head<TAB>relation<TAB>tail, found {} field(s)", fields.len()),
        }),
    }
}

/// Loads train/valid/test triple files into cumulative graphs.
///
/// Without vocab files, a dataset whose first train line is all integers is
/// read in id mode; anything else is read in name mode with first-seen ids.
/// Duplicate lines are dropped and counted in the report.
pub fn load_triples(sources: &TripleSources) -> Result<(GraphSplits, LoadReport), KgError> {
    let paths = [&sources.train, &sources.valid, &sources.test];
    let contents = paths.iter().map(|p| read_lines(p)).collect::<Result<Vec<_>, _>>()?;

    let mut resolver = match (&sources.entity_vocab, &sources.relation_vocab) {
        (Some(e), Some(r)) => Resolver::Fixed { entities: Vocab::load(e)?, relations: Vocab::load(r)? },
        (Some(e), None) | (None, Some(e)) => {
            return Err(KgError::Malformed {
                path: e.clone(),
                line: 0,
                message: "entity and relation vocab files must be given together".into(),
            })
        }
        (None, None) => {
            let first = contents[0].first().or_else(|| contents[1].first()).or_else(|| contents[2].first());
            let numeric = match first {
                Some((line, text)) => split_fields(&sources.train, *line, text)?
                    .iter()
                    .all(|f| f.parse::<usize>().is_ok()),
                None => true,
            };
            if numeric {
                Resolver::Ids
            } else {
                Resolver::FirstSeen { entities: Vocab::default(), relations: Vocab::default() }
            }
        }
    };

    let mut report = LoadReport::default();
    let mut edges: [Vec<Triple>; 3] = Default::default();
    let mut seen = BTreeSet::new();
    for (idx, (path, lines)) in paths.iter().zip(&contents).enumerate() {
        let mut split_report = SplitReport::default();
        for (no, text) in lines {
            let fields = split_fields(path, *no, text)?;
            let (h, r, t) = resolver.resolve(path, *no, fields)?;
            split_report.lines += 1;
            let triple = Triple::new(h, r, t);
            if seen.insert(triple) {
                edges[idx].push(triple);
                split_report.unique_triples += 1;
            } else {
                split_report.duplicates += 1;
            }
        }
        report.splits.insert(Split::ALL[idx], split_report);
    }

    let (mut entity_count, mut relation_count, entity_names, relation_names) = match resolver {
        Resolver::Ids => {
            let all = edges.iter().flatten();
            let e = all.clone().map(|t| t.head.max(t.tail) + 1).max().unwrap_or(0);
            let r = all.map(|t| t.relation + 1).max().unwrap_or(0);
            (e, r, None, None)
        }
        Resolver::Fixed { entities, relations } | Resolver::FirstSeen { entities, relations } => {
            (entities.len(), relations.len(), Some(entities), Some(relations))
        }
    };
    if let Some(stats) = read_stats(&sources.train)? {
        entity_count = entity_count.max(stats.0);
        relation_count = relation_count.max(stats.1);
    }
    report.named = entity_names.is_some();

    let mut relation_names = relation_names;
    if sources.add_inverse {
        let base = relation_count;
        for list in &mut edges {
            let inverse: Vec<Triple> =
                list.iter().map(|t| Triple::new(t.tail, t.relation + base, t.head)).collect();
            list.extend(inverse);
        }
        relation_count *= 2;
        if let Some(v) = relation_names.as_mut() {
            let mut names = v.names().to_vec();
            names.extend(v.names().iter().map(|n| format!("{n}_inverse")).collect::<Vec<_>>());
            *v = Vocab::from_names(names);
        }
        report.inverse_added = true;
    }
    report.entities = entity_count;
    report.relations = relation_count;

    let mut splits = GraphSplits::from_edges(entity_count, relation_count, &edges[0], &edges[1], &edges[2])?;
    splits.entity_names = entity_names;
    splits.relation_names = relation_names;
    Ok((splits, report))
}

/// Reads `numentity: N` / `numrelations: R` from a `stats.txt` next to the
/// train file, when one exists.
fn read_stats(train: &Path) -> Result<Option<(usize, usize)>, KgError> {
    let Some(dir) = train.parent() else { return Ok(None) };
    let path = dir.join("stats.txt");
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let mut entities = 0;
    let mut relations = 0;
    for line in text.lines() {
        if let Some((key, value)) = line.split_once(':') {
            let value = value.trim().parse::<usize>().unwrap_or(0);
            match key.trim() {
                "numentity" => entities = value,
                "numrelations" => relations = value,
                _ => {}
            }
        }
    }
    Ok(Some((entities, relations)))
}
