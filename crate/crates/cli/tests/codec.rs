//! Remote codec against a scripted HTTP stub on a local socket.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use synonymix_cli::codec::{encode_markup, parse_markup, Codec, CodecError, MockCodec, RemoteCodec};
use synonymix_cli::config::CodecConfig;
use synonymix_core::embed::TokenHashEmbedder;
use synonymix_core::fixture::four_persona_fixture;
use synonymix_core::graph::{save_persona, NodeId};
use synonymix_core::sampler::{render_narrative, sample_bank, AnchorChoice, WalkParams};
use synonymix_core::unify::{merge, ExactCanonical};

enum Reply {
    Respond(u16, String),
    Stall(Duration),
}

struct Captured {
    authorization: Option<String>,
    body: Value,
}

fn read_request(stream: &mut TcpStream) -> Captured {
    let mut reader = BufReader::new(stream);
    let mut length = 0;
    let mut authorization = None;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            match name.to_ascii_lowercase().as_str() {
                "content-length" => length = value.trim().parse().unwrap(),
                "authorization" => authorization = Some(value.trim().to_string()),
                _ => {}
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).unwrap();
    Captured { authorization, body: serde_json::from_slice(&body).unwrap() }
}

/// Serves one scripted reply per connection and reports each request.
fn stub(script: Vec<Reply>) -> (String, mpsc::Receiver<Captured>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for reply in script {
            let (mut stream, _) = listener.accept().unwrap();
            let request = read_request(&mut stream);
            tx.send(request).unwrap();
            match reply {
                Reply::Respond(status, body) => {
                    let head = format!(
                        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                        body.len()
                    );
                    let _ = stream.write_all(head.as_bytes());
                    let _ = stream.write_all(body.as_bytes());
                }
                Reply::Stall(d) => thread::sleep(d),
            }
        }
    });
    (url, rx)
}

fn chat(content: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

fn config(max_retries: u32) -> CodecConfig {
    CodecConfig { model: "persona-extractor".into(), max_retries, ..CodecConfig::default() }
}

#[test]
fn extract_sends_a_chat_request_and_loads_the_reply() {
    let persona = four_persona_fixture().remove(0);
    let (url, requests) = stub(vec![Reply::Respond(200, chat(&String::from_utf8(save_persona(&persona)).unwrap()))]);
    let codec = RemoteCodec::new(url, Some("secret".into()), &config(0)).unwrap();
    let got = codec.extract("persona-00", "I grew up by the river.").unwrap();
    assert_eq!(got, persona);

    let req = requests.recv().unwrap();
    assert_eq!(req.authorization.as_deref(), Some("Bearer secret"));
    assert_eq!(req.body["model"], "persona-extractor");
    let messages = req.body["messages"].as_array().unwrap();
    assert_eq!(messages.len(), 2);
    assert_eq!(messages[0]["role"], "system");
    assert_eq!(messages[1]["role"], "user");
    let user: Value = serde_json::from_str(messages[1]["content"].as_str().unwrap()).unwrap();
    assert_eq!(user, json!({"persona_id": "persona-00", "narrative": "I grew up by the river."}));
}

#[test]
fn malformed_replies_are_schema_mismatches() {
    for body in [
        "not json".to_string(),
        json!({"choices": []}).to_string(),
        json!({"answer": "x"}).to_string(),
        chat("   "),
        chat("{\"persona_id\": \"p\", \"nodes\": [{\"id\": \"a\", \"kind\": \"Q\", \"label\": \"x\"}]}"),
    ] {
        let (url, _requests) = stub(vec![Reply::Respond(200, body.clone())]);
        let codec = RemoteCodec::new(url, None, &config(3)).unwrap();
        let err = codec.extract("p", "text").unwrap_err();
        assert!(matches!(err, CodecError::SchemaMismatch(_)), "{body}: {err}");
    }
}

#[test]
fn server_errors_are_retried_and_client_errors_are_not() {
    let (url, requests) = stub(vec![Reply::Respond(503, "{}".into()), Reply::Respond(200, chat("A life story."))]);
    let codec = RemoteCodec::new(url, None, &config(1)).unwrap();
    let bank = four_persona_fixture();
    let u = merge(&bank, &ExactCanonical).unwrap();
    let f = sample_bank(&u, &WalkParams::new(NodeId::new("")), &AnchorChoice::Auto, 1, &TokenHashEmbedder::default())
        .unwrap()
        .remove(0);
    assert_eq!(codec.reconstruct(&f).unwrap(), "A life story.");
    assert_eq!(requests.try_iter().count(), 2);

    let (url, requests) = stub(vec![Reply::Respond(400, "{}".into())]);
    let codec = RemoteCodec::new(url, None, &config(3)).unwrap();
    assert!(matches!(codec.reconstruct(&f), Err(CodecError::Rejected(400))));
    assert_eq!(requests.try_iter().count(), 1);
}

#[test]
fn timeouts_and_dead_endpoints_are_reported() {
    let (url, _requests) = stub(vec![Reply::Stall(Duration::from_secs(2))]);
    let codec = RemoteCodec::new(url, None, &config(0)).unwrap().with_timeout(Duration::from_millis(200)).unwrap();
    assert!(matches!(codec.extract("p", "text"), Err(CodecError::Timeout)));

    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let codec = RemoteCodec::new(format!("http://127.0.0.1:{port}/"), None, &config(1)).unwrap();
    assert!(matches!(codec.extract("p", "text"), Err(CodecError::Transport(_))));
}

#[test]
fn mock_codec_round_trips_markup_and_renders_samples() {
    let bank = four_persona_fixture();
    for g in &bank {
        assert_eq!(MockCodec.extract(g.persona_id.as_str(), &encode_markup(g)).unwrap(), *g);
        assert_eq!(parse_markup("other", &encode_markup(g)).unwrap().persona_id, g.persona_id);
    }
    let u = merge(&bank, &ExactCanonical).unwrap();
    let f = sample_bank(&u, &WalkParams::new(NodeId::new("")), &AnchorChoice::Auto, 1, &TokenHashEmbedder::default())
        .unwrap()
        .remove(0);
    let text = MockCodec.reconstruct(&f).unwrap();
    assert_eq!(text, render_narrative(&f));
    assert!(text.starts_with("Theme: "));
}
