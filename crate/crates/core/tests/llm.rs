use indefinite_core::graph::hamming_distance;
use indefinite_core::llm::{
    build_initial_prompt, parse_answers, render_answers, run_loop, synthetic_dialogues, HttpOracle,
    LlmOracle, MockOracle, MockOracleConfig, OracleError, Supervision,
};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::time::Duration;

fn mock(d: &indefinite_core::llm::Dialogue, q: f64, seed: u64) -> MockOracle {
    let cfg = MockOracleConfig {
        truth: d.truth().unwrap().clone(),
        flip_prob: 0.0,
        initial_flips: Some(2),
        correction_prob: q,
        seed,
    };
    MockOracle::new(d.clone(), cfg).unwrap()
}

#[test]
fn label_mode_converges_with_full_correction() {
    for d in synthetic_dialogues(20, 4, 0).unwrap() {
        let mut oracle = mock(&d, 1.0, 1);
        let truth = d.truth().unwrap().clone();
        let out = run_loop(&d, &mut oracle, Supervision::Label(&truth), 5, 1).unwrap();
        assert!(out.converged);
        assert_eq!(out.structure, truth);
        assert_eq!(out.trace.last().unwrap().f1, Some(1.0));
    }
}

#[test]
fn reanswer_mode_never_flags_correct_edges() {
    for (k, d) in synthetic_dialogues(10, 5, 3)
        .unwrap()
        .into_iter()
        .enumerate()
    {
        let mut oracle = mock(&d, 1.0, k as u64);
        let truth = d.truth().unwrap().clone();
        let out = run_loop(&d, &mut oracle, Supervision::Reanswer, 10, 1).unwrap();
        for rec in &out.trace {
            for c in &rec.conflicts {
                assert_ne!(
                    rec.structure.has_edge(c.effect, c.cause),
                    truth.has_edge(c.effect, c.cause)
                );
            }
        }
        let first = hamming_distance(&out.trace[0].structure, &truth).unwrap();
        assert!(hamming_distance(&out.structure, &truth).unwrap() <= first);
    }
}

/// Serves `replies` in order, one per connection, and reports each request.
fn serve(replies: Vec<(u16, String)>) -> (String, mpsc::Receiver<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = format!("http://{}/complete", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut head = String::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                let end = line == "\r\n";
                head.push_str(&line);
                if end {
                    break;
                }
            }
            let mut payload = vec![0u8; len];
            reader.read_exact(&mut payload).unwrap();
            tx.send(head + &String::from_utf8(payload).unwrap())
                .unwrap();
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (addr, rx)
}

#[test]
fn http_oracle_retries_then_succeeds() {
    let d = &synthetic_dialogues(1, 3, 0).unwrap()[0];
    let answer = render_answers(d.truth().unwrap());
    let ok = serde_json::json!({ "text": answer }).to_string();
    let (addr, rx) = serve(vec![(503, "{}".into()), (200, ok)]);
    let mut oracle =
        HttpOracle::new(addr, Some("k3y".into())).with_retry(2, Duration::from_millis(10));
    let prompt = build_initial_prompt(d);
    let text = oracle.complete(&prompt).unwrap();
    assert_eq!(&parse_answers(&text, 3).unwrap(), d.truth().unwrap());
    let first = rx.recv().unwrap();
    assert!(first
        .to_ascii_lowercase()
        .contains("authorization: bearer k3y"));
    let body: serde_json::Value =
        serde_json::from_str(first.split("\r\n\r\n").nth(1).unwrap()).unwrap();
    assert_eq!(body["prompt"], prompt);
    assert_eq!(
        rx.recv().unwrap().split("\r\n\r\n").nth(1),
        first.split("\r\n\r\n").nth(1)
    );
}

#[test]
fn http_oracle_gives_up_after_retries() {
    let (addr, rx) = serve(vec![(500, "{}".into()), (500, "{}".into())]);
    let mut oracle = HttpOracle::new(addr, None).with_retry(1, Duration::from_millis(5));
    assert!(matches!(
        oracle.complete("hi"),
        Err(OracleError::Transport(_))
    ));
    assert!(!rx
        .recv()
        .unwrap()
        .to_ascii_lowercase()
        .contains("authorization"));
    rx.recv().unwrap();
}
