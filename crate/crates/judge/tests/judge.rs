use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use slicemine_core::labels::{AggregatedLabel, Extraction, ExtractionMajority, Mechanism};
use slicemine_core::mine::PatternStats;
use slicemine_judge::{
    build_prompt, inter_judge_agreement, judge_agreement, judge_pool, parse_verdict, query_judge, JudgeConfig,
    JudgeError, JudgeVerdict, DEFAULT_RUBRIC,
};

/// Serve scripted (status, body) responses, one per connection, and record
/// the request bodies.
fn stub(script: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let seen2 = seen.clone();
    thread::spawn(move || {
        let mut script = script.into_iter();
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap() == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            seen2.lock().unwrap().push(String::from_utf8(body).unwrap());
            let (status, resp) = script.next().unwrap_or((500, "exhausted".into()));
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{resp}",
                resp.len()
            );
        }
    });
    (format!("http://{addr}/v1/chat/completions"), seen)
}

fn cfg(endpoint: &str) -> JudgeConfig {
    let mut c = JudgeConfig::new(endpoint, "tok", "stub-model");
    c.initial_backoff = Duration::from_millis(5);
    c
}

fn pattern(texts: &[&str]) -> PatternStats {
    PatternStats {
        cluster_id_seq: texts.iter().enumerate().map(|(i, _)| format!("c{i}")).collect(),
        len: texts.len(),
        support_total: 7,
        n_distinct_scenarios: 7,
        n_distinct_files: 3,
        n_distinct_repos: 2,
        n_distinct_orgs: 2,
        max_within_file_recurrence: 3,
        max_within_repo_files: 2,
        outlier_fraction: 0.125,
        has_template_structure: false,
        canonical_texts: texts.iter().map(|t| t.to_string()).collect(),
        exemplar_texts: vec![],
    }
}

fn chat(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

#[test]
fn prompt_is_deterministic_and_complete() {
    let p = pattern(&["I am logged in", "I open the dashboard"]);
    let a = build_prompt(&p, DEFAULT_RUBRIC);
    assert_eq!(a, build_prompt(&p, DEFAULT_RUBRIC));
    let slice = a.split("## Slice\n").nth(1).unwrap().split("\n\n").next().unwrap();
    assert_eq!(slice.lines().count(), 2);
    assert!(a.contains("extraction_worthy") && a.contains("mechanism"));
    assert!(a.contains("outlier_fraction: 0.1250"));
}

#[test]
fn fixed_body_is_captured_verbatim() {
    let body = chat("{\"extraction_worthy\": \"yes\", \"mechanism\": \"background\"}");
    let (url, seen) = stub(vec![(200, body.clone())]);
    let r = query_judge("hello", &cfg(&url)).unwrap();
    assert_eq!(r.body, body);
    assert_eq!(r.attempts, 1);
    let req: serde_json::Value = serde_json::from_str(&seen.lock().unwrap()[0]).unwrap();
    assert_eq!(req["temperature"], 0);
    assert_eq!(req["model"], "stub-model");
}

#[test]
fn rate_limit_is_retried_once() {
    let (url, seen) = stub(vec![(429, "slow down".into()), (200, chat("{}"))]);
    let r = query_judge("hello", &cfg(&url)).unwrap();
    assert_eq!(r.attempts, 2);
    assert_eq!(seen.lock().unwrap().len(), 2);
}

#[test]
fn bad_token_fails_without_retry() {
    let (url, seen) = stub(vec![(401, "no".into()), (200, chat("{}"))]);
    assert!(matches!(query_judge("hello", &cfg(&url)), Err(JudgeError::Auth(401))));
    thread::sleep(Duration::from_millis(50));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn persistent_failure_is_unavailable_after_three_attempts() {
    let (url, seen) = stub(vec![(503, "a".into()), (502, "b".into()), (500, "c".into())]);
    match query_judge("hello", &cfg(&url)) {
        Err(JudgeError::Unavailable { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("{other:?}"),
    }
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn pool_is_ordered_and_logged() {
    let answer = chat("Sure.\n```json\n{\"extraction_worthy\": \"no\", \"mechanism\": null}\n```");
    let (url, _) = stub(vec![(200, answer); 3]);
    let ps = [pattern(&["b step", "x"]), pattern(&["a step", "y"]), pattern(&["c", "z"])];
    let mut ps = ps.to_vec();
    ps[0].cluster_id_seq = vec!["k2".into(), "k3".into()];
    ps[1].cluster_id_seq = vec!["k0".into(), "k1".into()];
    ps[2].cluster_id_seq = vec!["k4".into(), "k5".into()];
    let refs: Vec<&PatternStats> = ps.iter().collect();
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.jsonl");
    let mut c = cfg(&url);
    c.concurrency = 2;
    let v = judge_pool(&refs, DEFAULT_RUBRIC, &c, Some(&log)).unwrap();
    let order: Vec<&str> = v.iter().map(|v| v.pattern_ref.as_str()).collect();
    assert_eq!(order, vec!["k0|k1", "k2|k3", "k4|k5"]);
    assert!(v.iter().all(|v| v.parse_ok && v.extraction_worthy == Some(Extraction::No)));
    assert_eq!(std::fs::read_to_string(log).unwrap().lines().count(), 3);
}

fn human(r: &str, e: ExtractionMajority, m: Option<Mechanism>) -> AggregatedLabel {
    AggregatedLabel {
        pattern_ref: r.into(),
        extraction_majority: e,
        mechanism_majority: m,
        n_raters: 3,
    }
}

fn verdict(r: &str, e: Option<Extraction>, m: Option<Mechanism>) -> JudgeVerdict {
    JudgeVerdict {
        pattern_ref: r.into(),
        model_name: "j".into(),
        extraction_worthy: e,
        mechanism: m,
        raw_response: String::new(),
        parse_ok: e.is_some(),
    }
}

#[test]
fn judge_matching_humans_is_perfect() {
    use ExtractionMajority as H;
    let hs = vec![
        human("a", H::Yes, Some(Mechanism::Background)),
        human("b", H::No, None),
        human("c", H::Yes, Some(Mechanism::ReusableScenario)),
        human("d", H::Tie, None),
    ];
    let vs = vec![
        verdict("a", Some(Extraction::Yes), Some(Mechanism::Background)),
        verdict("b", Some(Extraction::No), None),
        verdict("c", Some(Extraction::Yes), Some(Mechanism::ReusableScenario)),
        verdict("d", Some(Extraction::No), None),
    ];
    let a = judge_agreement(&vs, &hs);
    assert_eq!(a.n_items, 3);
    assert_eq!((a.accuracy_b, a.kappa_b, a.f1_yes), (1.0, Some(1.0), 1.0));
    assert_eq!(a.mechanism_accuracy, Some(1.0));
}

#[test]
fn always_yes_judge_closed_form_and_unparseable_excluded() {
    use ExtractionMajority as H;
    let mut hs = Vec::new();
    let mut vs = Vec::new();
    for i in 0..40 {
        let r = format!("p{i:02}");
        hs.push(human(&r, if i < 30 { H::Yes } else { H::Uncertain }, None));
        vs.push(verdict(&r, Some(Extraction::Yes), None));
    }
    hs.push(human("zz", H::Yes, None));
    vs.push(verdict("zz", None, None));
    let a = judge_agreement(&vs, &hs);
    let r = 0.75;
    assert!((a.f1_yes - 2.0 * r / (1.0 + r)).abs() < 1e-12);
    assert_eq!(a.n_items, 40);
    assert_eq!(a.n_unparseable, 1);
}

#[test]
fn verdict_round_trips_every_enum_value() {
    for e in Extraction::ALL {
        let mechs: Vec<Option<Mechanism>> = if e == Extraction::Yes {
            [Mechanism::CONCRETE.to_vec(), vec![Mechanism::Unsure]].concat().into_iter().map(Some).collect()
        } else {
            vec![None]
        };
        for m in mechs {
            let raw = serde_json::json!({"extraction_worthy": e, "mechanism": m}).to_string();
            let v = parse_verdict("p", "j", &raw);
            assert_eq!((v.extraction_worthy, v.mechanism), (Some(e), m));
        }
    }
}

#[test]
fn inter_judge_needs_two() {
    let a = vec![verdict("x", Some(Extraction::Yes), None), verdict("y", Some(Extraction::No), None)];
    assert!(inter_judge_agreement(std::slice::from_ref(&a)).is_none());
    let r = inter_judge_agreement(&[a.clone(), a]).unwrap();
    assert_eq!(r.fleiss_4cat, Some(1.0));
}
