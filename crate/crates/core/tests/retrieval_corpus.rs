use std::fs;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tcrag::retrieval::{
    chunk_corpus, tokenize, ChunkIndex, Corpus, Document, RegistryConfig, ToolInvoker, ToolKind, ToolRegistry,
    ToolSpec, CHUNK_OVERLAP, CHUNK_SIZE,
};

const VOCAB: [&str; 24] = [
    "patient", "dose", "blood", "pressure", "renal", "hepatic", "fever", "cough", "chronic", "acute", "therapy",
    "oral", "daily", "risk", "trial", "cohort", "symptom", "onset", "infant", "adult", "serum", "level", "clinic",
    "report",
];

fn filler(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    (0..n).map(|_| VOCAB.choose(rng).unwrap().to_string()).collect()
}

#[test]
fn planted_passages_are_retrieved() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut docs = Vec::new();
    let mut plants = Vec::new();
    for i in 0..50 {
        let n = rng.gen_range(100..400);
        let mut body = filler(&mut rng, n);
        let fact = format!("marker{i} zylocine{i} cures tarnish{i} syndrome");
        let at = rng.gen_range(0..body.len());
        body.insert(at, fact.clone());
        docs.push(Document { doc_id: format!("doc{i:02}"), title: String::new(), body: body.join(" ") });
        plants.push((format!("doc{i:02}"), fact));
    }
    let index = ChunkIndex::build(&Corpus::new(docs).unwrap()).unwrap();
    for (doc_id, fact) in &plants {
        let r = index.search(&format!("what cures {fact}?"), 3).unwrap();
        let top = &r.hits[0].chunk;
        assert_eq!(&top.doc_id, doc_id);
        let tokens = tokenize(&top.text);
        assert!(tokenize(fact).iter().all(|t| tokens.contains(t)), "{fact} not inside its top chunk");
    }
}

#[test]
fn chunks_cover_every_token_with_fixed_overlap() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for d in 0..30 {
        let len = rng.gen_range(1..700);
        let body = filler(&mut rng, len).join(" ");
        let corpus = Corpus::new(vec![Document { doc_id: format!("d{d}"), title: String::new(), body }]).unwrap();
        let chunks = chunk_corpus(&corpus, CHUNK_SIZE, CHUNK_OVERLAP).unwrap();
        assert_eq!(chunks[0].token_start, 0);
        assert_eq!(chunks.last().unwrap().token_end, len);
        for w in chunks.windows(2) {
            assert_eq!(w[1].token_start - w[0].token_start, CHUNK_SIZE - CHUNK_OVERLAP);
            assert_eq!(w[0].token_end - w[1].token_start, CHUNK_OVERLAP);
        }
        let joined: Vec<String> = chunks.iter().flat_map(|c| tokenize(&c.text)).collect();
        assert!(joined.len() >= len);
    }
}

#[test]
fn corpus_loads_from_directory_and_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let docs = dir.path().join("docs");
    fs::create_dir(&docs).unwrap();
    fs::write(docs.join("b.txt"), "Second title\nbody two").unwrap();
    fs::write(docs.join("a.txt"), "First title\nbody one").unwrap();
    fs::write(docs.join("ignored.md"), "not a text file").unwrap();
    let corpus = Corpus::load(&docs).unwrap();
    let ids: Vec<_> = corpus.documents().iter().map(|d| d.doc_id.as_str()).collect();
    assert_eq!(ids, vec!["a", "b"]);
    assert_eq!(corpus.documents()[1].title, "Second title");

    let jsonl = dir.path().join("c.jsonl");
    fs::write(
        &jsonl,
        "{\"doc_id\": \"x\", \"title\": \"t\", \"body\": \"b\"}\n\n{\"doc_id\": \"y\", \"body\": \"c\"}\n",
    )
    .unwrap();
    let corpus = Corpus::load(&jsonl).unwrap();
    assert_eq!(corpus.documents().len(), 2);
    assert_eq!(corpus.documents()[1].title, "");

    fs::write(&jsonl, "{\"doc_id\": \"x\", \"body\": \"b\"}\n{\"doc_id\": \"x\", \"body\": \"c\"}\n").unwrap();
    assert!(Corpus::load(&jsonl).is_err());
    fs::write(&jsonl, "{oops").unwrap();
    assert!(Corpus::load(&jsonl).is_err());
    assert!(Corpus::load(&dir.path().join("missing")).is_err());
}

#[test]
fn registry_reads_fixture_files_relative_to_base() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("emr.txt"), "patient 17: penicillin allergy").unwrap();
    let cfg: RegistryConfig = serde_json::from_str(
        r#"{"tools": [
            {"name": "DOC_RAG", "kind": "doc_rag"},
            {"name": "EMR_RAG", "kind": "emr_rag", "fixture_file": "emr.txt"}
        ]}"#,
    )
    .unwrap();
    assert_eq!(cfg.k, 3);
    let index = Arc::new(ChunkIndex::default());
    let mut reg = ToolRegistry::from_config(&cfg, index.clone(), Some(dir.path())).unwrap();
    assert_eq!(reg.invoke("EMR_RAG", "allergies?").text, "patient 17: penicillin allergy");
    let described = reg.describe();
    assert_eq!(described.len(), 2);
    assert_eq!(described[1].1, ToolKind::EmrRag.description());
    assert!(ToolRegistry::from_config(&cfg, index.clone(), None).is_err());

    let doc_with_fixture = RegistryConfig {
        k: 2,
        tools: vec![ToolSpec {
            name: "D".into(),
            kind: ToolKind::DocRag,
            fixture: Some("x".into()),
            fixture_file: None,
        }],
    };
    assert!(ToolRegistry::from_config(&doc_with_fixture, index, None).is_err());
}
