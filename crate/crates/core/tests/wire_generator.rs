use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use tcrag::engine::{
    reasoning_loop, ActionGenerator, EngineConfig, GenerationRequest, GeneratorError, SessionStatus, WireGenerator,
};
use tcrag::retrieval::{ChunkIndex, Corpus, Document, ToolRegistry};

/// Serves one canned response per connection and returns the request bodies.
fn serve(responses: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<serde_json::Value>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/generate", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let mut bodies = Vec::new();
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            bodies.push(serde_json::from_slice(&buf).unwrap());
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
        bodies
    });
    (url, handle)
}

fn request() -> GenerationRequest {
    GenerationRequest { context: "User_Query: q".into(), prompt: "p".into(), max_tokens: 500, temperature: 0.6 }
}

fn generator(url: &str) -> WireGenerator {
    WireGenerator::new(url, Duration::from_secs(5)).unwrap()
}

#[test]
fn sends_request_fields_and_reads_logprobs() {
    let body =
        r#"{"text": "Conclusion: x", "tokens": [{"token": "x", "logprob": -0.5}, {"token": "y", "logprob": 0.2}]}"#;
    let (url, server) = serve(vec![(200, body.into())]);
    let g = generator(&url).generate(&request()).unwrap();
    assert_eq!(g.text, "Conclusion: x");
    let probs: Vec<f64> = g.tokens.entries().iter().map(|e| e.prob).collect();
    assert!((probs[0] - (-0.5f64).exp()).abs() < 1e-12);
    // Positive log-probabilities are clamped to probability 1.
    assert_eq!(probs[1], 1.0);
    let sent = &server.join().unwrap()[0];
    assert_eq!(sent["context"], "User_Query: q");
    assert_eq!(sent["prompt"], "p");
    assert_eq!(sent["max_tokens"], 500);
    assert_eq!(sent["temperature"], 0.6);
}

#[test]
fn missing_logprob_is_a_protocol_error() {
    let (url, server) = serve(vec![
        (200, r#"{"text": "Thought: a", "tokens": [{"token": "a"}]}"#.into()),
        (200, "not json".into()),
        (500, "{}".into()),
    ]);
    let mut g = generator(&url);
    assert!(matches!(g.generate(&request()), Err(GeneratorError::Protocol(_))));
    assert!(matches!(g.generate(&request()), Err(GeneratorError::Protocol(_))));
    assert!(matches!(g.generate(&request()), Err(GeneratorError::Transport(_))));
    server.join().unwrap();
}

#[test]
fn unreachable_server_aborts_the_session() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/", listener.local_addr().unwrap());
    drop(listener);
    let corpus = Corpus::new(vec![Document { doc_id: "a".into(), title: String::new(), body: "text".into() }]).unwrap();
    let mut tools = ToolRegistry::documents_only(ChunkIndex::build(&corpus).unwrap().into());
    let s = reasoning_loop("q", &mut generator(&url), &mut tools, &EngineConfig::default()).unwrap();
    assert_eq!(s.trace.outcome.status, SessionStatus::Aborted);
    assert!(s.trace.records.is_empty());
    assert_eq!(s.conclusion, "q");
}

#[test]
fn drives_a_full_session() {
    let sure = r#"[{"token": "a", "logprob": -0.01}, {"token": "b", "logprob": -0.02}]"#;
    let (url, server) = serve(vec![
        (200, format!(r#"{{"text": "Tool_Use: DOC_RAG", "tokens": {sure}}}"#)),
        (200, format!(r#"{{"text": "Conclusion: aspirin", "tokens": {sure}}}"#)),
    ]);
    let corpus = Corpus::new(vec![Document {
        doc_id: "a".into(),
        title: String::new(),
        body: "Headache is treated with aspirin.".into(),
    }])
    .unwrap();
    let mut tools = ToolRegistry::documents_only(ChunkIndex::build(&corpus).unwrap().into());
    let s =
        reasoning_loop("How is headache treated?", &mut generator(&url), &mut tools, &EngineConfig::default()).unwrap();
    assert_eq!(s.trace.outcome.status, SessionStatus::Concluded);
    assert_eq!(s.conclusion, "aspirin");
    let bodies = server.join().unwrap();
    let second = bodies[1]["context"].as_str().unwrap();
    assert!(second.contains("Tool_Observation: [a#0] headache is treated with aspirin"));
}
