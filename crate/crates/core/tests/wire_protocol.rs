//! Gateway and LLM client against a local HTTP server.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use base64::Engine;
use holocap_core::chunk::compose_chunk;
use holocap_core::gateway::{
    BackendRef, DialogueAnnotation, EmotionLabel, ExpertGateway, ExpertKind, GatewayConfig, GatewayError,
    VisualAnnotation,
};
use holocap_core::llm::{LlmClient, LlmConfig, LlmError};
use holocap_core::media::{AudioTrack, FrameSample};
use holocap_core::prompt::{render_prompt, PromptLibrary, PromptStrategy};
use holocap_core::style::StyleAnnotation;
use holocap_core::tone::ToneAnnotation;
use holocap_core::transport::TransportError;
use serde_json::{json, Value};

#[derive(Debug, Clone)]
struct Seen {
    method: String,
    path: String,
    body: Value,
}

type Handler = dyn Fn(&Seen, usize) -> (u16, String) + Send + Sync;

struct TestServer {
    url: String,
    seen: Arc<Mutex<Vec<Seen>>>,
    peak: Arc<AtomicUsize>,
}

impl TestServer {
    /// Each request runs on its own thread, delayed by `delay`.
    fn start(delay: Duration, handler: impl Fn(&Seen, usize) -> (u16, String) + Send + Sync + 'static) -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
        let port = server.server_addr().to_ip().unwrap().port();
        let seen = Arc::new(Mutex::new(Vec::new()));
        let peak = Arc::new(AtomicUsize::new(0));
        let active = Arc::new(AtomicUsize::new(0));
        let handler: Arc<Handler> = Arc::new(handler);
        {
            let (seen, peak) = (seen.clone(), peak.clone());
            thread::spawn(move || {
                for mut req in server.incoming_requests() {
                    let (seen, peak, active, handler) = (seen.clone(), peak.clone(), active.clone(), handler.clone());
                    thread::spawn(move || {
                        let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                        peak.fetch_max(now, Ordering::SeqCst);
                        let mut raw = String::new();
                        req.as_reader().read_to_string(&mut raw).unwrap();
                        let entry = Seen {
                            method: req.method().to_string(),
                            path: req.url().to_owned(),
                            body: serde_json::from_str(&raw).unwrap_or(Value::Null),
                        };
                        let n = {
                            let mut s = seen.lock().unwrap();
                            s.push(entry.clone());
                            s.len()
                        };
                        thread::sleep(delay);
                        let (status, body) = handler(&entry, n);
                        active.fetch_sub(1, Ordering::SeqCst);
                        let header = tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
                        let _ = req.respond(tiny_http::Response::from_string(body).with_status_code(status).with_header(header));
                    });
                }
            });
        }
        Self {
            url: format!("http://127.0.0.1:{port}"),
            seen,
            peak,
        }
    }

    fn simple(handler: impl Fn(&Seen, usize) -> (u16, String) + Send + Sync + 'static) -> Self {
        Self::start(Duration::ZERO, handler)
    }

    fn seen(&self) -> Vec<Seen> {
        self.seen.lock().unwrap().clone()
    }
}

fn gateway(url: &str) -> ExpertGateway {
    ExpertGateway::new(&GatewayConfig {
        caption: BackendRef::Http(url.to_owned()),
        transcribe: BackendRef::Http(url.to_owned()),
        emotion: BackendRef::Http(url.to_owned()),
        backoff_ms: 1,
        timeout_s: 10,
        ..GatewayConfig::default()
    })
}

fn frame() -> FrameSample {
    FrameSample::solid("video42", 3, 4, 2, [10, 20, 30])
}

fn ok(v: Value) -> (u16, String) {
    (200, v.to_string())
}

#[test]
fn caption_request_body_and_response() {
    let server = TestServer::simple(|_, _| ok(json!({"caption": "  a red square  "})));
    let caption = gateway(&server.url).caption_frame(&frame()).unwrap();
    assert_eq!(caption, "a red square");
    let seen = server.seen();
    assert_eq!(seen.len(), 1);
    assert_eq!((seen[0].method.as_str(), seen[0].path.as_str()), ("POST", "/v1/caption"));
    let body = seen[0].body.as_object().unwrap();
    let mut keys: Vec<&str> = body.keys().map(String::as_str).collect();
    keys.sort();
    assert_eq!(keys, ["frame_index", "png_base64", "video_id"]);
    assert_eq!(body["video_id"], "video42");
    assert_eq!(body["frame_index"], 3);
    let png = base64::engine::general_purpose::STANDARD
        .decode(body["png_base64"].as_str().unwrap())
        .unwrap();
    let img = image::load_from_memory(&png).unwrap().to_rgb8();
    assert_eq!(img.dimensions(), (4, 2));
    assert_eq!(img.get_pixel(3, 1).0, [10, 20, 30]);
}

#[test]
fn empty_caption_is_an_error() {
    let server = TestServer::simple(|_, _| ok(json!({"caption": "   "})));
    assert!(matches!(
        gateway(&server.url).caption_frame(&frame()),
        Err(GatewayError::EmptyCaption { .. })
    ));
}

#[test]
fn english_speech_is_transcribed_once() {
    let server = TestServer::simple(|_, _| ok(json!({"language": "en", "text": "It's frozen. That's so cool."})));
    let audio = AudioTrack::new("video42", vec![0, 1000, -1000, 32767], 16_000);
    let d = gateway(&server.url).transcribe(Some(&audio)).unwrap();
    assert_eq!(d.transcript_en, "It's frozen. That's so cool.");
    assert!(!d.was_translated && d.present);
    let seen = server.seen();
    assert_eq!(seen.len(), 1);
    assert_eq!(seen[0].path, "/v1/transcribe");
    assert_eq!(seen[0].body["task"], "transcribe");
    assert_eq!(seen[0].body["sample_rate_hz"], 16_000);
    let pcm = base64::engine::general_purpose::STANDARD
        .decode(seen[0].body["pcm16_base64"].as_str().unwrap())
        .unwrap();
    assert_eq!(pcm, [0, 0, 0xe8, 0x03, 0x18, 0xfc, 0xff, 0x7f]);
}

#[test]
fn other_languages_are_translated() {
    let server = TestServer::simple(|req, _| match req.body["task"].as_str() {
        Some("transcribe") => ok(json!({"language": "ja", "text": "凍ってる"})),
        Some("translate") => ok(json!({"language": "ja", "text": "It's frozen."})),
        _ => (400, json!({"error": "bad task"}).to_string()),
    });
    let audio = AudioTrack::new("video42", vec![0; 160], 16_000);
    let d = gateway(&server.url).transcribe(Some(&audio)).unwrap();
    assert_eq!(d.transcript_en, "It's frozen.");
    assert_eq!(d.detected_language, "ja");
    assert!(d.was_translated);
    let tasks: Vec<Value> = server.seen().iter().map(|s| s.body["task"].clone()).collect();
    assert_eq!(tasks, [json!("transcribe"), json!("translate")]);
}

#[test]
fn absent_audio_never_calls_the_backend() {
    let server = TestServer::simple(|_, _| ok(json!({})));
    let d = gateway(&server.url).transcribe(None).unwrap();
    assert_eq!(d, DialogueAnnotation::absent());
    assert!(server.seen().is_empty());
}

#[test]
fn emotion_labels_are_checked() {
    let server = TestServer::simple(|_, n| match n {
        1 => ok(json!({"label": "surprise"})),
        2 => ok(json!({"label": "no_face"})),
        _ => ok(json!({"label": "bored"})),
    });
    let g = gateway(&server.url);
    assert_eq!(g.detect_emotion(&frame()).unwrap(), EmotionLabel::Surprise);
    assert_eq!(g.detect_emotion(&frame()).unwrap(), EmotionLabel::NoFace);
    match g.detect_emotion(&frame()) {
        Err(GatewayError::UnknownEmotion(label)) => assert_eq!(label, "bored"),
        other => panic!("expected UnknownEmotion, got {other:?}"),
    }
    assert!(server.seen().iter().all(|s| s.path == "/v1/emotion"));
}

#[test]
fn server_errors_retry_up_to_budget() {
    let server = TestServer::simple(|_, _| (503, json!({"error": "overloaded"}).to_string()));
    match gateway(&server.url).caption_frame(&frame()) {
        Err(GatewayError::Transport(TransportError::Status { status, attempts, message, .. })) => {
            assert_eq!((status, attempts), (503, 4));
            assert_eq!(message, "overloaded");
        }
        other => panic!("expected status error, got {other:?}"),
    }
    assert_eq!(server.seen().len(), 4);
}

#[test]
fn transient_failure_then_success() {
    let server = TestServer::simple(|_, n| {
        if n < 3 {
            (500, json!({"error": "warming up"}).to_string())
        } else {
            ok(json!({"caption": "a cat"}))
        }
    });
    assert_eq!(gateway(&server.url).caption_frame(&frame()).unwrap(), "a cat");
    assert_eq!(server.seen().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let server = TestServer::simple(|_, _| (400, json!({"error": "png_base64 missing"}).to_string()));
    let err = gateway(&server.url).caption_frame(&frame()).unwrap_err();
    assert!(err.to_string().contains("png_base64 missing"), "{err}");
    assert_eq!(server.seen().len(), 1);
}

#[test]
fn malformed_json_is_an_error() {
    let server = TestServer::simple(|_, _| (200, "not json".to_owned()));
    assert!(gateway(&server.url).caption_frame(&frame()).is_err());
    let server = TestServer::simple(|_, _| ok(json!({"text": "wrong field"})));
    assert!(gateway(&server.url).caption_frame(&frame()).is_err());
}

#[test]
fn healthz() {
    let server = TestServer::simple(|_, _| ok(json!({"expert": "emotion", "version": "1.2.3"})));
    let h = gateway(&server.url).health(ExpertKind::Emotion).unwrap();
    assert_eq!(h.expert, ExpertKind::Emotion);
    assert_eq!(h.version, "1.2.3");
    let seen = server.seen();
    assert_eq!((seen[0].method.as_str(), seen[0].path.as_str()), ("GET", "/healthz"));
}

#[test]
fn in_flight_requests_are_bounded() {
    let server = TestServer::start(Duration::from_millis(40), |_, _| ok(json!({"caption": "x"})));
    let g = Arc::new(ExpertGateway::new(&GatewayConfig {
        caption: BackendRef::Http(server.url.clone()),
        max_in_flight: 2,
        ..GatewayConfig::default()
    }));
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let g = g.clone();
            thread::spawn(move || g.caption_frame(&frame()).unwrap())
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    assert_eq!(server.seen().len(), 8);
    assert!(server.peak.load(Ordering::SeqCst) <= 2);
}

fn prompt() -> holocap_core::prompt::RenderedPrompt {
    let chunk = compose_chunk(
        VisualAnnotation::from_captions(["a woman in a pink dress holding a beer"]).unwrap(),
        DialogueAnnotation::absent(),
        ToneAnnotation::from_label(EmotionLabel::Surprise),
        StyleAnnotation::from_names(vec!["firebrick".into(), "rosybrown".into()]),
    );
    render_prompt(&PromptLibrary::bundled(), PromptStrategy::Rule, &chunk)
}

#[test]
fn chat_request_body() {
    let server = TestServer::simple(|_, _| ok(json!({"text": " A surprised woman in firebrick tones. "})));
    let llm = LlmClient::new(LlmConfig {
        endpoint: BackendRef::Http(server.url.clone()),
        seed: Some(7),
        backoff_ms: 1,
        ..LlmConfig::default()
    });
    let p = prompt();
    assert_eq!(llm.complete(&p).unwrap(), "A surprised woman in firebrick tones.");
    let seen = server.seen();
    assert_eq!(seen[0].path, "/v1/chat");
    let body = &seen[0].body;
    assert_eq!(body["model"], "llama-2-7b-chat");
    assert_eq!(body["messages"], json!([{"role": "user", "content": p.text}]));
    assert_eq!(body["temperature"], 0.2);
    assert_eq!(body["max_tokens"], 300);
    assert_eq!(body["seed"], 7);
}

#[test]
fn chat_empty_completion_and_retries() {
    let server = TestServer::simple(|_, _| ok(json!({"text": ""})));
    let llm = LlmClient::new(LlmConfig {
        endpoint: BackendRef::Http(server.url.clone()),
        backoff_ms: 1,
        ..LlmConfig::default()
    });
    assert!(matches!(llm.complete(&prompt()), Err(LlmError::EmptyCompletion)));

    let server = TestServer::simple(|_, _| (502, json!({"error": "upstream"}).to_string()));
    let llm = LlmClient::new(LlmConfig {
        endpoint: BackendRef::Http(server.url.clone()),
        backoff_ms: 1,
        ..LlmConfig::default()
    });
    assert!(llm.complete(&prompt()).is_err());
    assert_eq!(server.seen().len(), 4);
}
