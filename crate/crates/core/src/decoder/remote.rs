//! Line protocol for external generators: one JSON object per line.
//!
//! Request `{"request_id": 7, "prefix": ["no", "acute"], "context_id": "img-1"}`,
//! response `{"request_id": 7, "logprobs": {"process": -0.1, ...}}`. Tokens
//! missing from `logprobs` have probability 0. Responses may arrive in any
//! order; they are matched by `request_id`.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::model::{ConditionalTokenModel, ContextId, TokenId, Vocabulary};
use super::DecodeError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogProbRequest {
    pub request_id: u64,
    pub prefix: Vec<String>,
    pub context_id: ContextId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogProbResponse {
    pub request_id: u64,
    #[serde(default)]
    pub logprobs: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Client side of the protocol over any reader/writer pair.
pub struct LineProtocolModel<R, W> {
    vocabulary: Vocabulary,
    io: Mutex<(R, W)>,
    next_id: AtomicU64,
}

impl<R: BufRead + Send, W: Write + Send> LineProtocolModel<R, W> {
    pub fn new(vocabulary: Vocabulary, reader: R, writer: W) -> Self {
        LineProtocolModel { vocabulary, io: Mutex::new((reader, writer)), next_id: AtomicU64::new(0) }
    }

    fn decode(&self, response: LogProbResponse) -> Result<Vec<f64>, DecodeError> {
        if let Some(e) = response.error {
            return Err(DecodeError::Backend(e));
        }
        let mut out = vec![f64::NEG_INFINITY; self.vocabulary.len()];
        for (tok, lp) in response.logprobs {
            out[self.vocabulary.id(&tok)? as usize] = lp;
        }
        Ok(out)
    }
}

impl<R: BufRead + Send, W: Write + Send> ConditionalTokenModel for LineProtocolModel<R, W> {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    fn next_log_probs(&self, context: &ContextId, prefix: &[TokenId]) -> Result<Vec<f64>, DecodeError> {
        Ok(self.next_log_probs_batch(context, &[prefix])?.remove(0))
    }

    /// Writes every request before reading, so the backend may answer them
    /// concurrently and out of order.
    fn next_log_probs_batch(&self, context: &ContextId, prefixes: &[&[TokenId]]) -> Result<Vec<Vec<f64>>, DecodeError> {
        let mut guard = self.io.lock().map_err(|_| DecodeError::Backend("connection poisoned".into()))?;
        let (reader, writer) = &mut *guard;
        let first = self.next_id.fetch_add(prefixes.len() as u64, Ordering::Relaxed);
        for (i, prefix) in prefixes.iter().enumerate() {
            let req = LogProbRequest {
                request_id: first + i as u64,
                prefix: prefix.iter().map(|&t| self.vocabulary.token(t).to_string()).collect(),
                context_id: context.clone(),
            };
            serde_json::to_writer(&mut *writer, &req).map_err(|e| DecodeError::Backend(e.to_string()))?;
            writer.write_all(b"\n")?;
        }
        writer.flush()?;
        let mut by_id: HashMap<u64, LogProbResponse> = HashMap::new();
        let mut line = String::new();
        while by_id.len() < prefixes.len() {
            line.clear();
            if reader.read_line(&mut line)? == 0 {
                return Err(DecodeError::Backend("backend closed the connection".into()));
            }
            if line.trim().is_empty() {
                continue;
            }
            let resp: LogProbResponse =
                serde_json::from_str(&line).map_err(|e| DecodeError::Backend(format!("bad response: {e}")))?;
            if !(first..first + prefixes.len() as u64).contains(&resp.request_id) {
                return Err(DecodeError::Backend(format!("unexpected request_id {}", resp.request_id)));
            }
            by_id.insert(resp.request_id, resp);
        }
        (0..prefixes.len() as u64)
            .map(|i| self.decode(by_id.remove(&(first + i)).expect("all ids received")))
            .collect()
    }
}

/// A generator running as a child process speaking the line protocol on
/// stdin/stdout.
pub struct SubprocessModel {
    child: Child,
    inner: LineProtocolModel<BufReader<ChildStdout>, ChildStdin>,
}

impl SubprocessModel {
    pub fn spawn(mut command: Command, vocabulary: Vocabulary) -> Result<Self, DecodeError> {
        let mut child = command.stdin(Stdio::piped()).stdout(Stdio::piped()).spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(SubprocessModel { child, inner: LineProtocolModel::new(vocabulary, BufReader::new(stdout), stdin) })
    }
}

impl Drop for SubprocessModel {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl ConditionalTokenModel for SubprocessModel {
    fn vocabulary(&self) -> &Vocabulary {
        self.inner.vocabulary()
    }

    fn next_log_probs(&self, context: &ContextId, prefix: &[TokenId]) -> Result<Vec<f64>, DecodeError> {
        self.inner.next_log_probs(context, prefix)
    }

    fn next_log_probs_batch(&self, context: &ContextId, prefixes: &[&[TokenId]]) -> Result<Vec<Vec<f64>>, DecodeError> {
        self.inner.next_log_probs_batch(context, prefixes)
    }
}

/// Serves `model` until `reader` reaches end of input. Errors in individual
/// requests are reported in the response; I/O errors end the loop.
pub fn serve_line_protocol(
    model: &dyn ConditionalTokenModel,
    reader: impl BufRead,
    mut writer: impl Write,
) -> std::io::Result<()> {
    let v = model.vocabulary();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<LogProbRequest>(&line) {
            Err(e) => LogProbResponse { request_id: 0, logprobs: BTreeMap::new(), error: Some(e.to_string()) },
            Ok(req) => {
                let answer = req
                    .prefix
                    .iter()
                    .map(|t| v.id(t))
                    .collect::<Result<Vec<_>, _>>()
                    .and_then(|ids| model.next_log_probs(&req.context_id, &ids));
                match answer {
                    Ok(lp) => LogProbResponse {
                        request_id: req.request_id,
                        logprobs: lp
                            .iter()
                            .enumerate()
                            .filter(|(_, l)| **l > f64::NEG_INFINITY)
                            .map(|(i, &l)| (v.token(i as TokenId).to_string(), l))
                            .collect(),
                        error: None,
                    },
                    Err(e) => LogProbResponse { request_id: req.request_id, logprobs: BTreeMap::new(), error: Some(e.to_string()) },
                }
            }
        };
        serde_json::to_writer(&mut writer, &response)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
    Ok(())
}
