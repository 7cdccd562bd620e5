//! Minimal threaded HTTP server exposing a [`BackendSet`] over the wire
//! protocol, so the remote clients can be exercised without any external
//! model service. One thread per connection, `Connection: close` semantics.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde::Serialize;

use super::wire::{
    DescribeBody, DiagnoseBody, EmbedBody, Envelope, HeatmapPayload, NavigateBody, RephraseBody,
    ScoreResult, TextResult, TriageBody, VectorResult,
};
use super::{BackendError, BackendSet};

/// Knobs for fault injection in tests.
#[derive(Debug, Clone, Copy, Default)]
pub struct ServerOptions {
    /// Sleep this long before answering each request (induces client timeouts).
    pub response_delay: Option<Duration>,
}

/// Running stub server; shuts down when dropped.
pub struct MockServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Bind an ephemeral local port and serve `backends` until shutdown.
    pub fn spawn(backends: BackendSet, options: ServerOptions) -> std::io::Result<Self> {
        Self::bind("127.0.0.1:0", backends, options)
    }

    pub fn bind(
        addr: &str,
        backends: BackendSet,
        options: ServerOptions,
    ) -> std::io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let stop_flag = Arc::clone(&stop);
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if stop_flag.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let backends = backends.clone();
                std::thread::spawn(move || {
                    let _ = handle_connection(stream, &backends, options);
                });
            }
        });
        Ok(Self {
            addr,
            stop,
            handle: Some(handle),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocked accept.
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn handle_connection(
    stream: TcpStream,
    backends: &BackendSet,
    options: ServerOptions,
) -> std::io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_secs(30)))?;
    let mut reader = BufReader::new(stream.try_clone()?);

    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let mut parts = request_line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let path = parts.next().unwrap_or_default().to_string();

    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some(value) = line
            .to_ascii_lowercase()
            .strip_prefix("content-length:")
            .map(str::trim)
        {
            content_length = value.parse().unwrap_or(0);
        }
    }

    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;

    if let Some(delay) = options.response_delay {
        std::thread::sleep(delay);
    }

    let mut stream = reader.into_inner();
    if method != "POST" {
        return write_response(
            &mut stream,
            405,
            &Envelope::<()>::err(format!("method {method} not allowed")),
        );
    }
    match path.as_str() {
        "/v1/navigate" => respond(&mut stream, &body, |req: NavigateBody| {
            let request = req.to_request()?;
            let heatmap = backends.navigator.navigate(&request)?;
            Ok(HeatmapPayload::from_heatmap(&heatmap))
        }),
        "/v1/describe" => respond(&mut stream, &body, |req: DescribeBody| {
            let patch = req.patch.to_patch()?;
            let text = backends.describer.describe(&patch)?;
            Ok(TextResult { text })
        }),
        "/v1/embed" => respond(&mut stream, &body, |req: EmbedBody| {
            let vector = match (req.text, req.image) {
                (Some(text), None) => backends.embedder.embed_text(&text)?,
                (None, Some(image)) => backends.embedder.embed_image(&image.to_patch()?)?,
                _ => {
                    return Err(BackendError::InvalidInput {
                        reason: "embed takes exactly one of text or image".to_string(),
                    })
                }
            };
            Ok(VectorResult { vector })
        }),
        "/v1/triage" => respond(&mut stream, &body, |req: TriageBody| {
            let grid = req.to_grid()?;
            let score = backends.triage.score(&grid)?;
            Ok(ScoreResult { score })
        }),
        "/v1/diagnose" => respond(&mut stream, &body, |req: DiagnoseBody| {
            let text = backends.diagnoser.diagnose(&req.prompt)?;
            Ok(TextResult { text })
        }),
        "/v1/rephrase" => respond(&mut stream, &body, |req: RephraseBody| {
            let rephraser = backends
                .rephraser
                .as_ref()
                .ok_or_else(|| BackendError::Service {
                    message: "no rephraser configured".to_string(),
                })?;
            let text = rephraser.rephrase(&req.text)?;
            Ok(TextResult { text })
        }),
        _ => write_response(
            &mut stream,
            404,
            &Envelope::<()>::err(format!("no route {path}")),
        ),
    }
}

fn respond<B, R, F>(stream: &mut TcpStream, body: &[u8], handler: F) -> std::io::Result<()>
where
    B: serde::de::DeserializeOwned,
    R: Serialize,
    F: FnOnce(B) -> Result<R, BackendError>,
{
    let parsed: Result<B, _> = serde_json::from_slice(body);
    match parsed {
        Err(e) => write_response(
            stream,
            400,
            &Envelope::<()>::err(format!("malformed request body: {e}")),
        ),
        Ok(request) => match handler(request) {
            Ok(result) => write_response(stream, 200, &Envelope::ok(result)),
            Err(e) => write_response(stream, 200, &Envelope::<R>::err(e.to_string())),
        },
    }
}

fn write_response<T: Serialize>(
    stream: &mut TcpStream,
    status: u16,
    envelope: &Envelope<T>,
) -> std::io::Result<()> {
    let body = serde_json::to_vec(envelope).expect("envelope serializes");
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        405 => "Method Not Allowed",
        _ => "Error",
    };
    write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    )?;
    stream.write_all(&body)?;
    stream.flush()
}
