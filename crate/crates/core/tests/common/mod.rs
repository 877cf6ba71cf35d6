#![allow(dead_code)]

use std::collections::BTreeMap;

use groundplan::pddl::{Domain, GroundAction, Problem};
use groundplan::planner::Planner;
use groundplan::tasks::BUNDLED_TASKS;
use groundplan::world::{ActionFamily, Scenario, Simulator, WorldState};

pub fn load(task: usize) -> (Domain, Problem) {
    BUNDLED_TASKS[task].load().unwrap()
}

pub fn initial_plan(domain: &Domain, problem: &Problem) -> Vec<GroundAction> {
    let planner = Planner::new(domain, problem);
    let init = problem.init.iter().cloned().collect();
    planner.plan(&init, &problem.goal).unwrap().steps
}

/// One executable (simulator, state, action) per action family: the first
/// plan step of that family met while running the bundled plans without
/// situations.
pub struct Probe {
    pub task: &'static str,
    pub sim: Simulator,
    pub world: WorldState,
    pub action: GroundAction,
}

pub fn probes(scenario: &Scenario) -> BTreeMap<ActionFamily, Probe> {
    let mut out = BTreeMap::new();
    for (ti, t) in BUNDLED_TASKS.iter().enumerate() {
        let (d, p) = load(ti);
        let clean = Simulator::new(&d, &p, Scenario::deterministic());
        let mut world = WorldState::from_problem(&p);
        for step in initial_plan(&d, &p) {
            let family = clean.roles(&step).unwrap().family;
            assert!(clean.check_constraints(&world, &step).unwrap().is_empty());
            out.entry(family).or_insert_with(|| Probe {
                task: t.name,
                sim: Simulator::new(&d, &p, scenario.clone()),
                world: world.clone(),
                action: step.clone(),
            });
            world = clean.execute_with_draw(&world, &step, 0.999_999).unwrap().0;
        }
    }
    out
}

/// Loopback HTTP server answering each request with the next scripted
/// `(status, body)` pair, one connection per request.
pub struct Stub {
    pub url: String,
    pub requests: std::sync::Arc<std::sync::Mutex<Vec<String>>>,
}

pub fn chat_reply(content: &str) -> String {
    serde_json::json!({ "choices": [{ "message": { "role": "assistant", "content": content } }] })
        .to_string()
}

pub fn stub(script: Vec<(u16, String)>) -> Stub {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!(
        "http://{}/v1/chat/completions",
        listener.local_addr().unwrap()
    );
    let requests = std::sync::Arc::new(std::sync::Mutex::new(Vec::new()));
    let log = requests.clone();
    std::thread::spawn(move || {
        for (status, body) in script {
            let Ok((stream, _)) = listener.accept() else {
                return;
            };
            let mut reader = BufReader::new(stream);
            let mut head = String::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
                head.push_str(&line);
            }
            let mut payload = vec![0; len];
            let _ = reader.read_exact(&mut payload);
            log.lock()
                .unwrap()
                .push(head + "\r\n" + &String::from_utf8_lossy(&payload));
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            let mut stream = reader.into_inner();
            let _ = stream.write_all(reply.as_bytes());
        }
    });
    Stub { url, requests }
}

pub fn local_client(url: &str, retries: u32) -> groundplan::vlmclient::VlmClient {
    groundplan::vlmclient::VlmClient::new(groundplan::vlmclient::ClientConfig {
        endpoint: url.to_string(),
        model: "stub".into(),
        api_key_env: None,
        timeout_ms: 5_000,
        retries,
        backoff_ms: 10,
        min_interval_ms: 0,
    })
    .unwrap()
}
