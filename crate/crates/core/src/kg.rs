//! The app-recommendation knowledge graph: 13 entity kinds, 18 typed
//! relations, bucketized side information, similarity extraction, and the
//! indexed triple store.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::dataset::{AppRecord, SizeSpec};
use crate::error::{Error, Result};
use crate::eval::TrainMatrix;
use crate::lda::TopicModel;
use crate::scalar::Scalar;
use crate::similarity::{hellinger_distance, hellinger_similarity, tanimoto_sparse};
use crate::vecmath::Matrix;

/// Dense entity identifier, 0..|E|-1.
pub type EntityId = u32;

/// The 13 entity kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntityKind {
    User,
    App,
    ContentTopic,
    Category,
    Provider,
    Popularity,
    AgeRestriction,
    Ads,
    Fee,
    InteractiveElements,
    Quality,
    UpdatedTime,
    Size,
}

impl EntityKind {
    pub const ALL: [EntityKind; 13] = [
        EntityKind::User,
        EntityKind::App,
        EntityKind::ContentTopic,
        EntityKind::Category,
        EntityKind::Provider,
        EntityKind::Popularity,
        EntityKind::AgeRestriction,
        EntityKind::Ads,
        EntityKind::Fee,
        EntityKind::InteractiveElements,
        EntityKind::Quality,
        EntityKind::UpdatedTime,
        EntityKind::Size,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EntityKind::User => "User",
            EntityKind::App => "App",
            EntityKind::ContentTopic => "ContentTopic",
            EntityKind::Category => "Category",
            EntityKind::Provider => "Provider",
            EntityKind::Popularity => "Popularity",
            EntityKind::AgeRestriction => "AgeRestriction",
            EntityKind::Ads => "Ads",
            EntityKind::Fee => "Fee",
            EntityKind::InteractiveElements => "InteractiveElements",
            EntityKind::Quality => "Quality",
            EntityKind::UpdatedTime => "UpdatedTime",
            EntityKind::Size => "Size",
        }
    }
}

impl FromStr for EntityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EntityKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownId {
                what: "entity kind",
                id: s.to_string(),
            })
    }
}

/// The 18 relation kinds; discriminants are the stable relation ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u32)]
pub enum RelationKind {
    Interact = 0,
    HavingCt = 1,
    HavingC = 2,
    OfferedBy = 3,
    ContentR = 4,
    HavingA = 5,
    HavingF = 6,
    HavingIe = 7,
    HavingQ = 8,
    HavingP = 9,
    HavingUt = 10,
    HavingS = 11,
    USimilar = 12,
    CtSimilar = 13,
    QSimilar = 14,
    PSimilar = 15,
    UtSimilar = 16,
    SSimilar = 17,
}

impl RelationKind {
    pub const COUNT: usize = 18;

    pub const ALL: [RelationKind; Self::COUNT] = [
        RelationKind::Interact,
        RelationKind::HavingCt,
        RelationKind::HavingC,
        RelationKind::OfferedBy,
        RelationKind::ContentR,
        RelationKind::HavingA,
        RelationKind::HavingF,
        RelationKind::HavingIe,
        RelationKind::HavingQ,
        RelationKind::HavingP,
        RelationKind::HavingUt,
        RelationKind::HavingS,
        RelationKind::USimilar,
        RelationKind::CtSimilar,
        RelationKind::QSimilar,
        RelationKind::PSimilar,
        RelationKind::UtSimilar,
        RelationKind::SSimilar,
    ];

    pub fn id(self) -> u32 {
        self as u32
    }

    pub fn from_id(id: u32) -> Option<RelationKind> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            RelationKind::Interact => "INTERACT",
            RelationKind::HavingCt => "HAVINGCT",
            RelationKind::HavingC => "HAVINGC",
            RelationKind::OfferedBy => "OFFEREDBY",
            RelationKind::ContentR => "CONTENTR",
            RelationKind::HavingA => "HAVINGA",
            RelationKind::HavingF => "HAVINGF",
            RelationKind::HavingIe => "HAVINGIE",
            RelationKind::HavingQ => "HAVINGQ",
            RelationKind::HavingP => "HAVINGP",
            RelationKind::HavingUt => "HAVINGUT",
            RelationKind::HavingS => "HAVINGS",
            RelationKind::USimilar => "USIMILAR",
            RelationKind::CtSimilar => "CTSIMILAR",
            RelationKind::QSimilar => "QSIMILAR",
            RelationKind::PSimilar => "PSIMILAR",
            RelationKind::UtSimilar => "UTSIMILAR",
            RelationKind::SSimilar => "SSIMILAR",
        }
    }

    /// (head kind, tail kind) this relation admits.
    pub fn signature(self) -> (EntityKind, EntityKind) {
        use EntityKind as K;
        match self {
            RelationKind::Interact => (K::User, K::App),
            RelationKind::HavingCt => (K::App, K::ContentTopic),
            RelationKind::HavingC => (K::App, K::Category),
            RelationKind::OfferedBy => (K::App, K::Provider),
            RelationKind::ContentR => (K::App, K::AgeRestriction),
            RelationKind::HavingA => (K::App, K::Ads),
            RelationKind::HavingF => (K::App, K::Fee),
            RelationKind::HavingIe => (K::App, K::InteractiveElements),
            RelationKind::HavingQ => (K::App, K::Quality),
            RelationKind::HavingP => (K::App, K::Popularity),
            RelationKind::HavingUt => (K::App, K::UpdatedTime),
            RelationKind::HavingS => (K::App, K::Size),
            RelationKind::USimilar => (K::User, K::User),
            RelationKind::CtSimilar => (K::ContentTopic, K::ContentTopic),
            RelationKind::QSimilar => (K::Quality, K::Quality),
            RelationKind::PSimilar => (K::Popularity, K::Popularity),
            RelationKind::UtSimilar => (K::UpdatedTime, K::UpdatedTime),
            RelationKind::SSimilar => (K::Size, K::Size),
        }
    }

    pub fn is_similar(self) -> bool {
        let (h, t) = self.signature();
        h == t
    }

    /// The ten App-headed relations that each app carries exactly once.
    pub const SINGLE_VALUED_HAVING: [RelationKind; 10] = [
        RelationKind::HavingCt,
        RelationKind::HavingC,
        RelationKind::OfferedBy,
        RelationKind::ContentR,
        RelationKind::HavingA,
        RelationKind::HavingF,
        RelationKind::HavingQ,
        RelationKind::HavingP,
        RelationKind::HavingUt,
        RelationKind::HavingS,
    ];
}

impl FromStr for RelationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RelationKind::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::UnknownId {
                what: "relation kind",
                id: s.to_string(),
            })
    }
}

/// One directed (head, relation, tail) edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationKind,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationKind, tail: EntityId) -> Triple {
        Triple {
            head,
            relation,
            tail,
        }
    }
}

/// Indexed heterogeneous triple store.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    entities: Vec<(EntityKind, String)>,
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
    head_index: Vec<Vec<(RelationKind, EntityId)>>,
    by_kind: HashMap<EntityKind, Vec<EntityId>>,
    by_label: HashMap<(EntityKind, String), EntityId>,
}

impl KnowledgeGraph {
    pub fn new() -> KnowledgeGraph {
        KnowledgeGraph::default()
    }

    /// Adds (or finds) the entity with this kind and label.
    pub fn add_entity(&mut self, kind: EntityKind, label: impl Into<String>) -> EntityId {
        let label = label.into();
        if let Some(&id) = self.by_label.get(&(kind, label.clone())) {
            return id;
        }
        let id = self.entities.len() as EntityId;
        self.entities.push((kind, label.clone()));
        self.head_index.push(Vec::new());
        self.by_kind.entry(kind).or_default().push(id);
        self.by_label.insert((kind, label), id);
        id
    }

    pub fn entity_id(&self, kind: EntityKind, label: &str) -> Option<EntityId> {
        // Key clones are confined to insertion; lookups build one small key.
        self.by_label.get(&(kind, label.to_string())).copied()
    }

    pub fn entity_kind(&self, id: EntityId) -> Result<EntityKind> {
        self.entities
            .get(id as usize)
            .map(|(k, _)| *k)
            .ok_or(Error::UnknownEntity(id))
    }

    pub fn entity_label(&self, id: EntityId) -> Result<&str> {
        self.entities
            .get(id as usize)
            .map(|(_, l)| l.as_str())
            .ok_or(Error::UnknownEntity(id))
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triple_set.contains(t)
    }

    /// All entities of one kind, in insertion (= id) order.
    pub fn entities_of_kind(&self, kind: EntityKind) -> &[EntityId] {
        self.by_kind.get(&kind).map_or(&[], Vec::as_slice)
    }

    /// The head-indexed neighborhood N_v: all (relation, tail) with head v.
    pub fn neighbors(&self, v: EntityId) -> &[(RelationKind, EntityId)] {
        self.head_index
            .get(v as usize)
            .map_or(&[], Vec::as_slice)
    }

    /// Inserts a triple, enforcing the signature, similarity-self-loop, and
    /// uniqueness invariants.
    pub fn add_triple(&mut self, triple: Triple) -> Result<()> {
        let head_kind = self.entity_kind(triple.head)?;
        let tail_kind = self.entity_kind(triple.tail)?;
        let (want_head, want_tail) = triple.relation.signature();
        if (head_kind, tail_kind) != (want_head, want_tail) {
            return Err(Error::BadTripleSignature {
                relation: triple.relation.name(),
                expected_head: want_head.name(),
                expected_tail: want_tail.name(),
                head: head_kind.name(),
                tail: tail_kind.name(),
            });
        }
        if triple.relation.is_similar() && triple.head == triple.tail {
            return Err(Error::SimilaritySelfLoop {
                relation: triple.relation.name(),
                entity: triple.head,
            });
        }
        if !self.triple_set.insert(triple) {
            return Err(Error::DuplicateTriple {
                head: triple.head,
                relation: triple.relation.name(),
                tail: triple.tail,
            });
        }
        self.triples.push(triple);
        self.head_index[triple.head as usize].push((triple.relation, triple.tail));
        Ok(())
    }

    /// Writes `entities.tsv`, `relations.tsv`, and `triples.tsv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(dir.join("entities.tsv"))?);
        for (id, (kind, label)) in self.entities.iter().enumerate() {
            writeln!(out, "{id}\t{}\t{}", kind.name(), escape_label(label))?;
        }
        out.flush()?;

        let mut out = BufWriter::new(std::fs::File::create(dir.join("relations.tsv"))?);
        for rel in RelationKind::ALL {
            writeln!(out, "{}\t{}", rel.id(), rel.name())?;
        }
        out.flush()?;

        let mut out = BufWriter::new(std::fs::File::create(dir.join("triples.tsv"))?);
        for t in &self.triples {
            writeln!(out, "{}\t{}\t{}", t.head, t.relation.id(), t.tail)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Rebuilds a graph from the three TSV files, revalidating every triple.
    pub fn load(dir: &Path) -> Result<KnowledgeGraph> {
        let mut kg = KnowledgeGraph::new();

        let path = dir.join("entities.tsv");
        let file = std::fs::File::open(&path)?;
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            let bad = || Error::MalformedFile {
                file: path.display().to_string(),
                message: format!("line {}: expected `id\\tkind\\tlabel`", lineno + 1),
            };
            let mut parts = line.splitn(3, '\t');
            let id: EntityId = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let kind: EntityKind = parts.next().ok_or_else(bad)?.parse()?;
            let label = unescape_label(parts.next().ok_or_else(bad)?)?;
            let got = kg.add_entity(kind, label);
            if got != id {
                return Err(Error::MalformedFile {
                    file: path.display().to_string(),
                    message: format!("entity ids not dense: expected {got}, found {id}"),
                });
            }
        }

        let path = dir.join("relations.tsv");
        let file = std::fs::File::open(&path)?;
        for line in BufReader::new(file).lines() {
            let line = line?;
            let bad = || Error::MalformedFile {
                file: path.display().to_string(),
                message: format!("bad relation row `{line}`"),
            };
            let mut parts = line.splitn(2, '\t');
            let id: u32 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let name: RelationKind = parts.next().ok_or_else(bad)?.parse()?;
            if RelationKind::from_id(id) != Some(name) {
                return Err(Error::MalformedFile {
                    file: path.display().to_string(),
                    message: format!("relation id {id} does not match name {}", name.name()),
                });
            }
        }

        let path = dir.join("triples.tsv");
        let file = std::fs::File::open(&path)?;
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            let bad = || Error::MalformedFile {
                file: path.display().to_string(),
                message: format!("line {}: expected `head\\trelation\\ttail`", lineno + 1),
            };
            let mut parts = line.splitn(3, '\t');
            let head: EntityId = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let rel_id: u32 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let tail: EntityId = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let relation = RelationKind::from_id(rel_id).ok_or_else(|| Error::UnknownId {
                what: "relation id",
                id: rel_id.to_string(),
            })?;
            kg.add_triple(Triple::new(head, relation, tail))?;
        }
        Ok(kg)
    }
}

fn escape_label(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    for c in label.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            _ => out.push(c),
        }
    }
    out
}

fn unescape_label(text: &str) -> Result<String> {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => {
                return Err(Error::MalformedFile {
                    file: "entities.tsv".to_string(),
                    message: format!("bad escape `\\{}`", other.map_or(String::new(), String::from)),
                })
            }
        }
    }
    Ok(out)
}

// ---- Attribute bucketing ----

/// Popularity bucket: floor(log10(install_count + 1)).
pub fn popularity_bucket(install_count: u64) -> u32 {
    (install_count + 1).ilog10()
}

/// Quality bucket index 0..=10 for avg_rating rounded to the nearest 0.5
/// (halves round up).
pub fn quality_bucket(avg_rating: f64) -> u32 {
    (avg_rating * 2.0).round() as u32
}

/// Display label of a quality bucket ("0.0".."5.0").
pub fn quality_label(bucket: u32) -> String {
    format!("{:.1}", f64::from(bucket) / 2.0)
}

/// Year-quarter bucket of a date.
pub fn quarter_bucket(date: NaiveDate) -> (i32, u32) {
    (date.year(), (date.month() - 1) / 3 + 1)
}

/// Total ordering of year-quarter buckets: consecutive quarters differ by 1.
pub fn quarter_ordinal(year: i32, quarter: u32) -> i64 {
    i64::from(year) * 4 + i64::from(quarter) - 1
}

/// Display label of a year-quarter bucket ("2020-Q2").
pub fn quarter_label(year: i32, quarter: u32) -> String {
    format!("{year}-Q{quarter}")
}

/// Size bucket: floor(log2(size_bytes/1MiB + 1)), or the VARIES sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SizeBucket {
    Log2Mib(u32),
    Varies,
}

pub fn size_bucket(size: &SizeSpec) -> SizeBucket {
    match *size {
        // floor(log2((bytes + 2^20) / 2^20)) computed exactly in integers.
        SizeSpec::Bytes(bytes) => SizeBucket::Log2Mib((bytes + (1 << 20)).ilog2() - 20),
        SizeSpec::Varies => SizeBucket::Varies,
    }
}

pub fn size_label(bucket: SizeBucket) -> String {
    match bucket {
        SizeBucket::Log2Mib(k) => k.to_string(),
        SizeBucket::Varies => "varies".to_string(),
    }
}

// ---- Similarity extraction ----

/// Pairwise measure used by [`extract_similarity_relations`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityMetric {
    /// Tanimoto coefficient ≥ threshold.
    Tanimoto,
    /// 1 − Hellinger distance ≥ threshold.
    HellingerSim,
    /// Raw Hellinger distance ≥ threshold (fidelity experiments only).
    HellingerDist,
    /// Ordinal buckets at distance exactly 1; threshold ignored.
    BucketAdjacency,
}

impl SimilarityMetric {
    fn name(self) -> &'static str {
        match self {
            SimilarityMetric::Tanimoto => "tanimoto",
            SimilarityMetric::HellingerSim => "hellinger_sim",
            SimilarityMetric::HellingerDist => "hellinger_dist",
            SimilarityMetric::BucketAdjacency => "bucket_adjacency",
        }
    }
}

impl FromStr for SimilarityMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanimoto" => Ok(SimilarityMetric::Tanimoto),
            "hellinger_sim" => Ok(SimilarityMetric::HellingerSim),
            "hellinger_dist" => Ok(SimilarityMetric::HellingerDist),
            "bucket_adjacency" => Ok(SimilarityMetric::BucketAdjacency),
            other => Err(Error::UnknownMetric(other.to_string())),
        }
    }
}

/// Per-item payload scored by a [`SimilarityMetric`].
#[derive(Debug, Clone, Copy)]
pub enum ItemVector<'a, S> {
    /// Dense distribution (Hellinger metrics).
    Dense(&'a [S]),
    /// Sparse (index, value) pairs sorted by index (Tanimoto).
    Sparse(&'a [(u32, S)]),
    /// Ordinal position (bucket adjacency).
    Ordinal(i64),
}

/// Emits both directed triples (i, R, j) and (j, R, i) for every unordered
/// pair scoring ≥ `threshold` (or at ordinal distance 1 for bucket
/// adjacency). Pairs are scanned in input order; no self-pairs.
pub fn extract_similarity_relations<S: Scalar>(
    items: &[(EntityId, ItemVector<'_, S>)],
    relation: RelationKind,
    threshold: f64,
    metric: SimilarityMetric,
) -> Result<Vec<Triple>> {
    if metric != SimilarityMetric::BucketAdjacency && !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "similarity threshold must lie in (0,1), got {threshold}"
        )));
    }
    let mismatch = |items: &'static str| Error::MetricMismatch {
        metric: metric.name(),
        items,
    };

    let mut out = Vec::new();
    for i in 0..items.len() {
        for j in (i + 1)..items.len() {
            let (id_i, ref vec_i) = items[i];
            let (id_j, ref vec_j) = items[j];
            let qualifies = match (metric, vec_i, vec_j) {
                (SimilarityMetric::Tanimoto, ItemVector::Sparse(a), ItemVector::Sparse(b)) => {
                    tanimoto_sparse(a, b).to_f64_value() >= threshold
                }
                (SimilarityMetric::HellingerSim, ItemVector::Dense(a), ItemVector::Dense(b)) => {
                    hellinger_similarity(a, b)?.to_f64_value() >= threshold
                }
                (SimilarityMetric::HellingerDist, ItemVector::Dense(a), ItemVector::Dense(b)) => {
                    hellinger_distance(a, b)?.to_f64_value() >= threshold
                }
                (
                    SimilarityMetric::BucketAdjacency,
                    ItemVector::Ordinal(a),
                    ItemVector::Ordinal(b),
                ) => (a - b).abs() == 1,
                (SimilarityMetric::Tanimoto, _, _) => return Err(mismatch("non-sparse")),
                (SimilarityMetric::BucketAdjacency, _, _) => return Err(mismatch("non-ordinal")),
                (_, _, _) => return Err(mismatch("non-dense")),
            };
            if qualifies {
                out.push(Triple::new(id_i, relation, id_j));
                out.push(Triple::new(id_j, relation, id_i));
            }
        }
    }
    Ok(out)
}

/// Dense user-user Tanimoto matrix over training rating rows; shared with
/// the UserCF baseline.
pub fn user_similarity_matrix<S: Scalar>(train: &TrainMatrix) -> Matrix<S> {
    let m = train.matrix();
    let n = m.users().len();
    let mut sim = Matrix::zeros(n, n);
    for i in 0..n {
        sim.row_mut(i)[i] = S::one();
        for j in (i + 1)..n {
            let s: S = tanimoto_sparse(
                &sparse_scalar::<S>(m.row(i)),
                &sparse_scalar::<S>(m.row(j)),
            );
            sim.row_mut(i)[j] = s;
            sim.row_mut(j)[i] = s;
        }
    }
    sim
}

fn sparse_scalar<S: Scalar>(row: &[(u32, f64)]) -> Vec<(u32, S)> {
    row.iter().map(|&(i, v)| (i, S::lit(v))).collect()
}

// ---- ARKG assembly ----

/// Builds the full knowledge graph from the filtered catalogue, the
/// TRAINING interactions, and the fitted topic model.
///
/// `ct_raw_distance` switches CTSIMILAR to thresholding the raw Hellinger
/// distance instead of 1 − distance.
pub fn build_arkg<S: Scalar>(
    apps: &[AppRecord],
    train: &TrainMatrix,
    model: &TopicModel<S>,
    assignment: &[usize],
    config: &EngineConfig,
    ct_raw_distance: bool,
) -> Result<KnowledgeGraph> {
    config.validate()?;
    if assignment.len() != apps.len() || model.doc_count() != apps.len() {
        return Err(Error::DimensionMismatch {
            expected: apps.len(),
            got: assignment.len().min(model.doc_count()),
        });
    }
    let matrix = train.matrix();
    let mut kg = KnowledgeGraph::new();

    // Entities: users and apps first (stable ids for the embedding stages),
    // then topics, then per-app attribute values in first-seen order.
    for user in matrix.users() {
        kg.add_entity(EntityKind::User, user.clone());
    }
    for app in apps {
        kg.add_entity(EntityKind::App, app.app_id.clone());
    }
    for k in 0..model.topic_count() {
        kg.add_entity(EntityKind::ContentTopic, format!("topic:{k}"));
    }

    let mut app_triples: Vec<Triple> = Vec::new();
    for (ai, app) in apps.iter().enumerate() {
        let app_ent = kg
            .entity_id(EntityKind::App, &app.app_id)
            .expect("app entity inserted above");
        let topic = kg
            .entity_id(EntityKind::ContentTopic, &format!("topic:{}", assignment[ai]))
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "app `{}` assigned topic {} outside 0..{}",
                    app.app_id,
                    assignment[ai],
                    model.topic_count()
                ))
            })?;
        let category = kg.add_entity(EntityKind::Category, app.category.clone());
        let provider = kg.add_entity(EntityKind::Provider, app.provider.clone());
        let restriction = kg.add_entity(EntityKind::AgeRestriction, app.content_rating.clone());
        let ads = kg.add_entity(EntityKind::Ads, if app.has_ads { "ads" } else { "no-ads" });
        let fee = kg.add_entity(EntityKind::Fee, if app.is_free { "free" } else { "paid" });
        let quality = kg.add_entity(
            EntityKind::Quality,
            quality_label(quality_bucket(app.avg_rating)),
        );
        let popularity = kg.add_entity(
            EntityKind::Popularity,
            popularity_bucket(app.install_count).to_string(),
        );
        let (year, q) = quarter_bucket(app.updated_date);
        let updated = kg.add_entity(EntityKind::UpdatedTime, quarter_label(year, q));
        let size = kg.add_entity(EntityKind::Size, size_label(size_bucket(&app.size)));

        app_triples.push(Triple::new(app_ent, RelationKind::HavingCt, topic));
        app_triples.push(Triple::new(app_ent, RelationKind::HavingC, category));
        app_triples.push(Triple::new(app_ent, RelationKind::OfferedBy, provider));
        app_triples.push(Triple::new(app_ent, RelationKind::ContentR, restriction));
        app_triples.push(Triple::new(app_ent, RelationKind::HavingA, ads));
        app_triples.push(Triple::new(app_ent, RelationKind::HavingF, fee));
        for element in &app.interactive_elements {
            let ie = kg.add_entity(EntityKind::InteractiveElements, element.clone());
            app_triples.push(Triple::new(app_ent, RelationKind::HavingIe, ie));
        }
        app_triples.push(Triple::new(app_ent, RelationKind::HavingQ, quality));
        app_triples.push(Triple::new(app_ent, RelationKind::HavingP, popularity));
        app_triples.push(Triple::new(app_ent, RelationKind::HavingUt, updated));
        app_triples.push(Triple::new(app_ent, RelationKind::HavingS, size));
    }

    // INTERACT from training interactions only.
    for (ui, user) in matrix.users().iter().enumerate() {
        let user_ent = kg.entity_id(EntityKind::User, user).expect("user inserted");
        for &(ai, _grade) in matrix.row(ui) {
            let app_id = &matrix.apps()[ai as usize];
            let app_ent = kg
                .entity_id(EntityKind::App, app_id)
                .ok_or_else(|| Error::UnknownId {
                    what: "app in training matrix",
                    id: app_id.clone(),
                })?;
            kg.add_triple(Triple::new(user_ent, RelationKind::Interact, app_ent))?;
        }
    }
    for t in app_triples {
        kg.add_triple(t)?;
    }

    // USIMILAR over training rating rows.
    let user_rows: Vec<Vec<(u32, S)>> = (0..matrix.users().len())
        .map(|ui| sparse_scalar::<S>(matrix.row(ui)))
        .collect();
    let user_items: Vec<(EntityId, ItemVector<'_, S>)> = matrix
        .users()
        .iter()
        .zip(&user_rows)
        .map(|(user, row)| {
            let id = kg.entity_id(EntityKind::User, user).expect("user inserted");
            (id, ItemVector::Sparse(row.as_slice()))
        })
        .collect();
    for t in extract_similarity_relations(
        &user_items,
        RelationKind::USimilar,
        config.us,
        SimilarityMetric::Tanimoto,
    )? {
        kg.add_triple(t)?;
    }

    // CTSIMILAR over topic-word rows.
    let topic_items: Vec<(EntityId, ItemVector<'_, S>)> = (0..model.topic_count())
        .map(|k| {
            let id = kg
                .entity_id(EntityKind::ContentTopic, &format!("topic:{k}"))
                .expect("topic inserted");
            (id, ItemVector::Dense(model.phi.row(k)))
        })
        .collect();
    let ct_metric = if ct_raw_distance {
        SimilarityMetric::HellingerDist
    } else {
        SimilarityMetric::HellingerSim
    };
    for t in extract_similarity_relations(
        &topic_items,
        RelationKind::CtSimilar,
        config.cts,
        ct_metric,
    )? {
        kg.add_triple(t)?;
    }

    // Ordinal adjacency among the bucket entities actually present.
    let bucket_items = |kg: &KnowledgeGraph, kind: EntityKind, ordinal: &dyn Fn(&str) -> i64| {
        kg.entities_of_kind(kind)
            .iter()
            .map(|&id| {
                let label = kg.entity_label(id).expect("present").to_string();
                (id, ordinal(&label))
            })
            .collect::<Vec<(EntityId, i64)>>()
    };
    let adjacency_triples = |items: Vec<(EntityId, i64)>, relation: RelationKind| {
        let wrapped: Vec<(EntityId, ItemVector<'_, S>)> = items
            .iter()
            .map(|&(id, o)| (id, ItemVector::Ordinal(o)))
            .collect();
        extract_similarity_relations(&wrapped, relation, 0.0, SimilarityMetric::BucketAdjacency)
    };

    let quality_items = bucket_items(&kg, EntityKind::Quality, &|label| {
        (label.parse::<f64>().expect("quality label") * 2.0).round() as i64
    });
    for t in adjacency_triples(quality_items, RelationKind::QSimilar)? {
        kg.add_triple(t)?;
    }

    let pop_items = bucket_items(&kg, EntityKind::Popularity, &|label| {
        label.parse::<i64>().expect("popularity label")
    });
    for t in adjacency_triples(pop_items, RelationKind::PSimilar)? {
        kg.add_triple(t)?;
    }

    let ut_items = bucket_items(&kg, EntityKind::UpdatedTime, &|label| {
        let (year, q) = label
            .split_once("-Q")
            .map(|(y, q)| (y.parse::<i32>().expect("year"), q.parse::<u32>().expect("quarter")))
            .expect("quarter label");
        quarter_ordinal(year, q)
    });
    for t in adjacency_triples(ut_items, RelationKind::UtSimilar)? {
        kg.add_triple(t)?;
    }

    // VARIES is not adjacent to any numeric size bucket: park it at a
    // sentinel ordinal far from the log2 range.
    let size_items = bucket_items(&kg, EntityKind::Size, &|label| {
        if label == "varies" {
            i64::MIN / 2
        } else {
            label.parse::<i64>().expect("size label")
        }
    });
    for t in adjacency_triples(size_items, RelationKind::SSimilar)? {
        kg.add_triple(t)?;
    }

    Ok(kg)
}

/// Human-readable one-line summary (entity/triple counts per kind).
pub fn describe(kg: &KnowledgeGraph) -> String {
    let mut out = String::new();
    let _ = write!(
        out,
        "{} entities, {} triples",
        kg.entity_count(),
        kg.triple_count()
    );
    out
}
