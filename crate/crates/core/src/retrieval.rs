//! Local knowledge base and tool registry.
//!
//! Documents are tokenized by lowercasing and splitting on anything that is
//! not alphanumeric. Chunks are windows of `size` tokens advancing by
//! `size - overlap`; chunking of a document stops at the first window that
//! reaches its end.
//!
//! Chunks are scored against a query with a term-overlap weight:
//!
//! ```text
//! score = |distinct query terms present in chunk|
//!       + (chunk tokens that are query terms) / (chunk tokens)
//! ```
//!
//! The second term lies in `[0, 1]` and acts as a tf-weighted tie breaker.
//! Remaining ties go to `(doc_id, chunk_index)` ascending.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CHUNK_SIZE: usize = 128;
pub const CHUNK_OVERLAP: usize = 50;
pub const DEFAULT_TOP_K: usize = 3;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("chunk size {size} must exceed overlap {overlap}")]
    BadWindow { size: usize, overlap: usize },
    #[error("duplicate document id {0:?}")]
    DuplicateDoc(String),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("duplicate tool name {0:?}")]
    DuplicateTool(String),
    #[error("tool {name:?}: {reason}")]
    BadTool { name: String, reason: String },
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error in {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RetrievalError + '_ {
    move |source| RetrievalError::Io { path: path.display().to_string(), source }
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    #[serde(default)]
    pub title: String,
    pub body: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    documents: Vec<Document>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Result<Self, RetrievalError> {
        let mut seen = HashSet::new();
        for d in &documents {
            if !seen.insert(d.doc_id.as_str()) {
                return Err(RetrievalError::DuplicateDoc(d.doc_id.clone()));
            }
        }
        Ok(Self { documents })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    /// Reads `*.txt` files (doc id = file stem, title = first line) in name
    /// order.
    pub fn from_dir(dir: &Path) -> Result<Self, RetrievalError> {
        let mut paths: Vec<_> = fs::read_dir(dir)
            .map_err(io_err(dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        paths.sort();
        let mut docs = Vec::with_capacity(paths.len());
        for p in paths {
            let body = fs::read_to_string(&p).map_err(io_err(&p))?;
            let doc_id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let title = body.lines().next().unwrap_or_default().trim().to_string();
            docs.push(Document { doc_id, title, body });
        }
        Self::new(docs)
    }

    /// Reads one `{doc_id, title, body}` object per line.
    pub fn from_jsonl(path: &Path) -> Result<Self, RetrievalError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut docs = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            docs.push(
                serde_json::from_str(line)
                    .map_err(|source| RetrievalError::Parse { path: path.display().to_string(), source })?,
            );
        }
        Self::new(docs)
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        if path.is_dir() {
            Self::from_dir(path)
        } else {
            Self::from_jsonl(path)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub chunk_index: usize,
    pub token_start: usize,
    pub token_end: usize,
    pub text: String,
}

/// Token windows `[start, end)` for a document of `len` tokens.
pub fn chunk_windows(len: usize, size: usize, overlap: usize) -> Result<Vec<(usize, usize)>, RetrievalError> {
    if size <= overlap {
        return Err(RetrievalError::BadWindow { size, overlap });
    }
    let stride = size - overlap;
    let mut out = Vec::new();
    let mut start = 0;
    while start < len {
        let end = (start + size).min(len);
        out.push((start, end));
        if end == len {
            break;
        }
        start += stride;
    }
    Ok(out)
}

pub fn chunk_corpus(corpus: &Corpus, size: usize, overlap: usize) -> Result<Vec<Chunk>, RetrievalError> {
    let mut chunks = Vec::new();
    for doc in &corpus.documents {
        let tokens = tokenize(&doc.body);
        for (i, (start, end)) in chunk_windows(tokens.len(), size, overlap)?.into_iter().enumerate() {
            chunks.push(Chunk {
                doc_id: doc.doc_id.clone(),
                chunk_index: i,
                token_start: start,
                token_end: end,
                text: tokens[start..end].join(" "),
            });
        }
    }
    Ok(chunks)
}

#[derive(Debug, Clone)]
struct ChunkTerms {
    tf: HashMap<String, u32>,
    len: usize,
}

/// Immutable chunk index. Serializes as its chunk list.
#[derive(Debug, Clone, Default)]
pub struct ChunkIndex {
    chunks: Vec<Chunk>,
    terms: Vec<ChunkTerms>,
}

impl Serialize for ChunkIndex {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.chunks.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ChunkIndex {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Self::from_chunks(Vec::<Chunk>::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hit {
    pub chunk: Chunk,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalResult {
    pub hits: Vec<Hit>,
    pub k: usize,
}

impl ChunkIndex {
    pub fn build(corpus: &Corpus) -> Result<Self, RetrievalError> {
        Ok(Self::from_chunks(chunk_corpus(corpus, CHUNK_SIZE, CHUNK_OVERLAP)?))
    }

    pub fn from_chunks(chunks: Vec<Chunk>) -> Self {
        let terms = chunks
            .iter()
            .map(|c| {
                let mut tf = HashMap::new();
                let mut len = 0;
                for t in tokenize(&c.text) {
                    *tf.entry(t).or_insert(0) += 1;
                    len += 1;
                }
                ChunkTerms { tf, len }
            })
            .collect();
        Self { chunks, terms }
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    fn score(terms: &ChunkTerms, query: &HashSet<String>) -> f64 {
        if terms.len == 0 {
            return 0.0;
        }
        let mut matched = 0usize;
        let mut matched_tokens = 0u32;
        for q in query {
            if let Some(tf) = terms.tf.get(q) {
                matched += 1;
                matched_tokens += tf;
            }
        }
        matched as f64 + matched_tokens as f64 / terms.len as f64
    }

    pub fn search(&self, query: &str, k: usize) -> Result<RetrievalResult, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::ZeroK);
        }
        let q: HashSet<String> = tokenize(query).into_iter().collect();
        let mut scored: Vec<(usize, f64)> =
            self.terms.iter().enumerate().map(|(i, t)| (i, Self::score(t, &q))).collect();
        scored.sort_by(|(a, sa), (b, sb)| {
            sb.partial_cmp(sa).unwrap_or(Ordering::Equal).then_with(|| {
                let (ca, cb) = (&self.chunks[*a], &self.chunks[*b]);
                (&ca.doc_id, ca.chunk_index).cmp(&(&cb.doc_id, cb.chunk_index))
            })
        });
        let hits = scored.into_iter().take(k).map(|(i, score)| Hit { chunk: self.chunks[i].clone(), score }).collect();
        Ok(RetrievalResult { hits, k })
    }
}

/// `[doc_id#chunk_index] text` lines in rank order.
pub fn format_hits(result: &RetrievalResult) -> String {
    result
        .hits
        .iter()
        .map(|h| format!("[{}#{}] {}", h.chunk.doc_id, h.chunk.chunk_index, h.chunk.text))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolKind {
    DocRag,
    KgRag,
    WebRag,
    EmrRag,
}

impl ToolKind {
    pub fn description(self) -> &'static str {
        match self {
            ToolKind::DocRag => "searches the local document collection and returns the best matching passages",
            ToolKind::KgRag => "looks up entities and relations in the knowledge graph",
            ToolKind::WebRag => "searches web and encyclopedia pages",
            ToolKind::EmrRag => "queries the electronic medical record database",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub kind: ToolKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    pub tools: Vec<ToolSpec>,
}

fn default_k() -> usize {
    DEFAULT_TOP_K
}

impl Default for RegistryConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_TOP_K,
            tools: vec![ToolSpec { name: "DOC_RAG".into(), kind: ToolKind::DocRag, fixture: None, fixture_file: None }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolOutput {
    pub text: String,
    pub error: bool,
}

/// Anything the engine can call for a `Tool_Use` action.
pub trait ToolInvoker {
    fn invoke(&mut self, name: &str, query: &str) -> ToolOutput;
    /// `(name, description)` pairs for the prompt.
    fn describe(&self) -> Vec<(String, String)>;
}

#[derive(Debug, Clone)]
enum ToolBackend {
    Documents,
    Fixture(String),
}

#[derive(Debug, Clone)]
pub struct ToolRegistry {
    tools: BTreeMap<String, (ToolKind, ToolBackend)>,
    index: Arc<ChunkIndex>,
    k: usize,
}

impl ToolRegistry {
    /// Fixture paths in the config are resolved against `base_dir`.
    pub fn from_config(
        cfg: &RegistryConfig,
        index: Arc<ChunkIndex>,
        base_dir: Option<&Path>,
    ) -> Result<Self, RetrievalError> {
        if cfg.k == 0 {
            return Err(RetrievalError::ZeroK);
        }
        let mut tools = BTreeMap::new();
        for spec in &cfg.tools {
            let backend = match (spec.kind, &spec.fixture, &spec.fixture_file) {
                (ToolKind::DocRag, None, None) => ToolBackend::Documents,
                (ToolKind::DocRag, _, _) => {
                    return Err(RetrievalError::BadTool {
                        name: spec.name.clone(),
                        reason: "doc_rag tools read the corpus and take no fixture".into(),
                    })
                }
                (_, Some(text), None) => ToolBackend::Fixture(text.clone()),
                (_, None, Some(file)) => {
                    let path = match base_dir {
                        Some(b) => b.join(file),
                        None => file.into(),
                    };
                    ToolBackend::Fixture(fs::read_to_string(&path).map_err(io_err(&path))?)
                }
                _ => {
                    return Err(RetrievalError::BadTool {
                        name: spec.name.clone(),
                        reason: "stub tools need exactly one of fixture / fixture_file".into(),
                    })
                }
            };
            if tools.insert(spec.name.clone(), (spec.kind, backend)).is_some() {
                return Err(RetrievalError::DuplicateTool(spec.name.clone()));
            }
        }
        Ok(Self { tools, index, k: cfg.k })
    }

    /// A registry with a single `DOC_RAG` tool over `index`.
    pub fn documents_only(index: Arc<ChunkIndex>) -> Self {
        Self::from_config(&RegistryConfig::default(), index, None).expect("default config is valid")
    }

    pub fn names(&self) -> Vec<&str> {
        self.tools.keys().map(String::as_str).collect()
    }

    pub fn invoke_tool(&self, name: &str, query: &str) -> ToolOutput {
        match self.tools.get(name) {
            None => ToolOutput {
                text: format!("Error: unknown tool {name:?}; available tools: {}", self.names().join(", ")),
                error: true,
            },
            Some((_, ToolBackend::Fixture(text))) => ToolOutput { text: text.clone(), error: false },
            Some((_, ToolBackend::Documents)) => {
                let result = self.index.search(query, self.k).expect("k validated at construction");
                ToolOutput { text: format_hits(&result), error: false }
            }
        }
    }
}

impl ToolInvoker for ToolRegistry {
    fn invoke(&mut self, name: &str, query: &str) -> ToolOutput {
        self.invoke_tool(name, query)
    }

    fn describe(&self) -> Vec<(String, String)> {
        self.tools.iter().map(|(name, (kind, _))| (name.clone(), kind.description().to_string())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(id: &str, body: &str) -> Document {
        Document { doc_id: id.into(), title: String::new(), body: body.into() }
    }

    fn words(n: usize) -> String {
        (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(tokenize("Hello, World! It's 5mg."), vec!["hello", "world", "it", "s", "5mg"]);
        assert!(tokenize(" ,.; ").is_empty());
    }

    #[test]
    fn window_fixtures() {
        let starts: Vec<usize> = chunk_windows(300, 128, 50).unwrap().iter().map(|w| w.0).collect();
        assert_eq!(starts, vec![0, 78, 156, 234]);
        assert_eq!(chunk_windows(300, 128, 50).unwrap().last(), Some(&(234, 300)));
        assert_eq!(chunk_windows(100, 128, 50).unwrap(), vec![(0, 100)]);
        assert!(chunk_windows(0, 128, 50).unwrap().is_empty());
        assert!(matches!(chunk_windows(10, 50, 50), Err(RetrievalError::BadWindow { .. })));
    }

    #[test]
    fn corpus_chunks() {
        let corpus = Corpus::new(vec![doc("a", &words(300)), doc("b", ""), doc("c", &words(10))]).unwrap();
        let chunks = chunk_corpus(&corpus, CHUNK_SIZE, CHUNK_OVERLAP).unwrap();
        assert_eq!(chunks.len(), 5);
        assert_eq!(chunks[3].text.split(' ').count(), 66);
        assert_eq!(chunks[4].doc_id, "c");
        assert!(Corpus::new(vec![doc("a", "x"), doc("a", "y")]).is_err());
    }

    #[test]
    fn exact_text_ranks_first() {
        let corpus = Corpus::new(vec![
            doc("a", "the cat sat on the mat"),
            doc("b", "a dog barked at the mailman"),
            doc("c", "cat cat cat"),
        ])
        .unwrap();
        let index = ChunkIndex::build(&corpus).unwrap();
        let r = index.search("a dog barked at the mailman", 3).unwrap();
        assert_eq!(r.hits[0].chunk.doc_id, "b");
        let r = index.search("the cat sat on the mat", 3).unwrap();
        assert_eq!(r.hits[0].chunk.doc_id, "a");
        assert!(r.hits.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn no_shared_terms_keeps_tie_order() {
        let corpus = Corpus::new(vec![doc("z", "one two"), doc("a", "three"), doc("m", "four")]).unwrap();
        let index = ChunkIndex::build(&corpus).unwrap();
        let r = index.search("nothing matches", 5).unwrap();
        assert!(r.hits.iter().all(|h| h.score == 0.0));
        let ids: Vec<_> = r.hits.iter().map(|h| h.chunk.doc_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "m", "z"]);
        assert!(matches!(index.search("x", 0), Err(RetrievalError::ZeroK)));
        assert!(ChunkIndex::default().search("x", 3).unwrap().hits.is_empty());
    }

    #[test]
    fn registry_dispatch() {
        let corpus = Corpus::new(vec![doc("d1", "aspirin inhibits platelet aggregation")]).unwrap();
        let index = Arc::new(ChunkIndex::build(&corpus).unwrap());
        let cfg = RegistryConfig {
            k: 3,
            tools: vec![
                ToolSpec { name: "DOC_RAG".into(), kind: ToolKind::DocRag, fixture: None, fixture_file: None },
                ToolSpec {
                    name: "KG_RAG".into(),
                    kind: ToolKind::KgRag,
                    fixture: Some("aspirin -[treats]-> pain".into()),
                    fixture_file: None,
                },
            ],
        };
        let reg = ToolRegistry::from_config(&cfg, index, None).unwrap();
        let out = reg.invoke_tool("DOC_RAG", "what does aspirin inhibit");
        assert!(!out.error);
        assert_eq!(out.text, "[d1#0] aspirin inhibits platelet aggregation");
        let kg = reg.invoke_tool("KG_RAG", "anything");
        assert_eq!(kg.text, "aspirin -[treats]-> pain");
        assert_eq!(reg.invoke_tool("KG_RAG", "else"), kg);
        let missing = reg.invoke_tool("NO_SUCH_TOOL", "q");
        assert!(missing.error);
        assert!(missing.text.contains("unknown tool"));
    }

    #[test]
    fn registry_rejects_bad_configs() {
        let index = Arc::new(ChunkIndex::default());
        let dup = RegistryConfig {
            k: 3,
            tools: vec![
                ToolSpec { name: "X".into(), kind: ToolKind::DocRag, fixture: None, fixture_file: None },
                ToolSpec { name: "X".into(), kind: ToolKind::DocRag, fixture: None, fixture_file: None },
            ],
        };
        assert!(matches!(ToolRegistry::from_config(&dup, index.clone(), None), Err(RetrievalError::DuplicateTool(_))));
        let stub = RegistryConfig {
            k: 3,
            tools: vec![ToolSpec { name: "W".into(), kind: ToolKind::WebRag, fixture: None, fixture_file: None }],
        };
        assert!(ToolRegistry::from_config(&stub, index, None).is_err());
    }

    #[test]
    fn index_serializes_as_chunks() {
        let corpus = Corpus::new(vec![doc("a", &words(200))]).unwrap();
        let index = ChunkIndex::build(&corpus).unwrap();
        let json = serde_json::to_string(&index).unwrap();
        let back: ChunkIndex = serde_json::from_str(&json).unwrap();
        assert_eq!(back.chunks(), index.chunks());
        assert_eq!(back.search("w5 w150", 2).unwrap(), index.search("w5 w150", 2).unwrap());
    }

    proptest! {
        #[test]
        fn adding_a_present_term_never_lowers_score(
            body in prop::collection::vec("[a-e]{1,2}", 1..60),
            query in prop::collection::vec("[a-e]{1,2}", 0..8),
            pick in 0usize..60,
        ) {
            let corpus = Corpus::new(vec![doc("d", &body.join(" "))]).unwrap();
            let index = ChunkIndex::build(&corpus).unwrap();
            let extra = &body[pick % body.len()];
            let before = index.search(&query.join(" "), 1).unwrap().hits[0].score;
            let after = index.search(&format!("{} {extra}", query.join(" ")), 1).unwrap().hits[0].score;
            prop_assert!(after >= before);
        }
    }
}
