use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use ladrag::gateway::{
    ChatMessage, ChatModel, ChatRequest, Embedder, GatewayError, HttpChat, HttpEmbedder, HttpSettings,
};
use serde_json::{json, Value};

#[derive(Debug)]
struct Seen {
    path: String,
    authorization: Option<String>,
    body: Value,
}

/// Local endpoint answering one request per connection; keeps every request it saw.
struct Mock {
    url: String,
    seen: Arc<Mutex<Vec<Seen>>>,
}

fn mock(responses: Vec<(u16, Value)>) -> Mock {
    let mut queue = responses.into_iter();
    let n = queue.len();
    serve(n, move |_| queue.next().unwrap())
}

fn serve(connections: usize, mut respond: impl FnMut(&Value) -> (u16, Value) + Send + 'static) -> Mock {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for _ in 0..connections {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream);
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let path = request_line.split_whitespace().nth(1).unwrap_or_default().to_string();
            let mut length = 0;
            let mut authorization = None;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (name, value) = line.split_once(':').unwrap();
                match name.to_ascii_lowercase().as_str() {
                    "content-length" => length = value.trim().parse().unwrap(),
                    "authorization" => authorization = Some(value.trim().to_string()),
                    _ => {}
                }
            }
            let mut raw = vec![0; length];
            reader.read_exact(&mut raw).unwrap();
            let request: Value = serde_json::from_slice(&raw).unwrap();
            let (status, body) = respond(&request);
            log.lock().unwrap().push(Seen { path, authorization, body: request });
            let payload = body.to_string();
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{payload}",
                payload.len()
            )
            .unwrap();
        }
    });
    Mock { url, seen }
}

fn settings(url: &str, key: Option<&str>, retries: u32) -> HttpSettings {
    let mut s = HttpSettings::new(url, key.map(str::to_string));
    s.retries = retries;
    s.timeout = Duration::from_secs(10);
    s
}

fn completion(text: &str) -> Value {
    json!({"choices": [{"message": {"role": "assistant", "content": text}}], "usage": {"prompt_tokens": 42, "completion_tokens": 7}})
}

#[test]
fn chat_request_shape_and_response_parsing() {
    let server = mock(vec![(200, completion("hello"))]);
    let chat = HttpChat::new(settings(&server.url, Some("sk-test"), 0), "vision-model").unwrap();
    let png = b"\x89PNG\r\n\x1a\nrest".to_vec();
    let request = ChatRequest::new(vec![
        ChatMessage::system("be brief"),
        ChatMessage::user("describe").with_image(png),
        ChatMessage::tool("{\"ok\": true}"),
    ])
    .with_max_tokens(99);
    let response = chat.complete(&request).unwrap();
    assert_eq!(response.content, "hello");
    assert_eq!((response.prompt_tokens, response.completion_tokens), (42, 7));

    let seen = server.seen.lock().unwrap();
    assert_eq!(seen.len(), 1);
    let r = &seen[0];
    assert_eq!(r.path, "/v1/chat/completions");
    assert_eq!(r.authorization.as_deref(), Some("Bearer sk-test"));
    assert_eq!(r.body["model"], "vision-model");
    assert_eq!(r.body["temperature"], 0.0);
    assert_eq!(r.body["max_tokens"], 99);
    let messages = r.body["messages"].as_array().unwrap();
    assert_eq!(messages[0], json!({"role": "system", "content": "be brief"}));
    assert_eq!(messages[1]["content"][0], json!({"type": "text", "text": "describe"}));
    let url = messages[1]["content"][1]["image_url"]["url"].as_str().unwrap();
    assert!(url.starts_with("data:image/png;base64,"), "{url}");
    assert_eq!(messages[2]["role"], "user");
    assert!(messages[2]["content"].as_str().unwrap().ends_with("{\"ok\": true}"));
}

#[test]
fn identical_requests_get_identical_answers_from_an_echo_server() {
    use sha2::{Digest, Sha256};
    let server = serve(3, |body| {
        let digest = Sha256::digest(body["messages"].to_string().as_bytes());
        (200, completion(&hex::encode(digest)))
    });
    let chat = HttpChat::new(settings(&server.url, None, 0), "m").unwrap();
    let ask =
        |text: &str| chat.complete(&ChatRequest::new(vec![ChatMessage::user(text).with_image(vec![1, 2, 3])])).unwrap();
    let first = ask("same");
    assert_eq!(first, ask("same"));
    assert_ne!(first.content, ask("different").content);
}

#[test]
fn server_errors_are_retried_a_fixed_number_of_times() {
    let server = mock(vec![(503, json!({"error": "busy"})), (200, completion("second try"))]);
    let chat = HttpChat::new(settings(&server.url, None, 2), "m").unwrap();
    let response = chat.complete(&ChatRequest::new(vec![ChatMessage::user("hi")])).unwrap();
    assert_eq!(response.content, "second try");
    let seen = server.seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    assert!(seen[0].authorization.is_none());

    let server = mock(vec![(500, json!({})), (502, json!({})), (500, json!({}))]);
    let chat = HttpChat::new(settings(&server.url, None, 2), "m").unwrap();
    let err = chat.complete(&ChatRequest::new(vec![ChatMessage::user("hi")])).unwrap_err();
    assert!(matches!(err, GatewayError::Transport(_)), "{err:?}");
    assert_eq!(server.seen.lock().unwrap().len(), 3);
}

#[test]
fn auth_and_client_errors_are_not_retried() {
    let server = mock(vec![(401, json!({"error": "bad key"})), (200, completion("unreachable"))]);
    let chat = HttpChat::new(settings(&server.url, Some("wrong"), 3), "m").unwrap();
    let err = chat.complete(&ChatRequest::new(vec![ChatMessage::user("hi")])).unwrap_err();
    assert!(matches!(err, GatewayError::Authentication(_)), "{err:?}");
    assert_eq!(server.seen.lock().unwrap().len(), 1);

    let server = mock(vec![(400, json!({"error": "bad request"})), (200, completion("unreachable"))]);
    let chat = HttpChat::new(settings(&server.url, None, 3), "m").unwrap();
    assert!(chat.complete(&ChatRequest::new(vec![ChatMessage::user("hi")])).is_err());
    assert_eq!(server.seen.lock().unwrap().len(), 1);
}

#[test]
fn malformed_completion_is_a_transport_error() {
    let server = mock(vec![(200, json!({"choices": []}))]);
    let chat = HttpChat::new(settings(&server.url, None, 0), "m").unwrap();
    let err = chat.complete(&ChatRequest::new(vec![ChatMessage::user("hi")])).unwrap_err();
    assert!(matches!(err, GatewayError::Transport(_)), "{err:?}");
}

#[test]
fn embeddings_are_reordered_by_index_and_dimension_checked() {
    let server = mock(vec![
        (200, json!({"data": [{"index": 1, "embedding": [0.0, 1.0]}, {"index": 0, "embedding": [1.0, 0.0]}]})),
        (200, json!({"data": [{"index": 0, "embedding": [1.0, 0.0, 0.0]}]})),
    ]);
    let embedder = HttpEmbedder::new(settings(&server.url, Some("k"), 0), "embed-small", 2).unwrap();
    assert_eq!(embedder.name(), "http:embed-small");
    let vectors = embedder.embed(&["first".to_string(), "second".to_string()]).unwrap();
    assert_eq!(vectors[0].values, vec![1.0, 0.0]);
    assert_eq!(vectors[1].values, vec![0.0, 1.0]);
    let err = embedder.embed(&["x".to_string()]).unwrap_err();
    assert!(matches!(err, GatewayError::DimensionMismatch { expected: 2, got: 3 }), "{err:?}");

    let seen = server.seen.lock().unwrap();
    assert_eq!(seen[0].path, "/v1/embeddings");
    assert_eq!(seen[0].body, json!({"model": "embed-small", "input": ["first", "second"]}));
}

#[test]
fn key_comes_from_the_named_environment_variable() {
    let var = "LADRAG_HTTP_GATEWAY_TEST_KEY";
    std::env::set_var(var, "sk-from-env");
    let s = HttpSettings::from_env(Some(var));
    assert_eq!(s.api_key.as_deref(), Some("sk-from-env"));
    std::env::set_var(var, "");
    assert_eq!(HttpSettings::from_env(Some(var)).api_key, None);
    std::env::remove_var(var);
}

#[test]
fn unreachable_endpoint_fails_after_retries() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let chat = HttpChat::new(settings(&format!("http://127.0.0.1:{port}/v1"), None, 1), "m").unwrap();
    let err = chat.complete(&ChatRequest::new(vec![ChatMessage::user("hi")])).unwrap_err();
    assert!(matches!(err, GatewayError::Transport(_)), "{err:?}");
}
