//! Next-token oracles. The solver only ever asks "how likely is this
//! continuation"; anything that can answer that, from a lookup table to a
//! neural model behind a socket, plugs in here.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::distribution::TokenDistribution;
use super::speculative::{symbol, symbol_token, TransitionMatrix};
use crate::augment::{apply_augmentation, AugmentationDescriptor};
use crate::encoding::{encode_task, prompt_grids, Token, Traversal, VOCAB_SIZE};
use crate::task::Task;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("oracle unreachable: {0}")]
    Unreachable(String),
    #[error("oracle protocol error: {0}")]
    Protocol(String),
    #[error("unknown oracle spec {0:?}")]
    UnknownSpec(String),
}

/// A prompt already digested by the oracle, ready for many prefix queries.
pub trait Conditioned {
    fn next(&self, prefix: &[Token]) -> Result<TokenDistribution, OracleError>;
}

pub trait LikelihoodOracle: Send + Sync {
    fn next_distribution(&self, prompt: &[Token], prefix: &[Token]) -> Result<TokenDistribution, OracleError>;

    /// Binds a prompt once so that repeated prefix queries skip re-reading it.
    fn condition<'a>(&'a self, prompt: &'a [Token]) -> Result<Box<dyn Conditioned + 'a>, OracleError> {
        struct Plain<'a, O: ?Sized>(&'a O, &'a [Token]);
        impl<O: LikelihoodOracle + ?Sized> Conditioned for Plain<'_, O> {
            fn next(&self, prefix: &[Token]) -> Result<TokenDistribution, OracleError> {
                self.0.next_distribution(self.1, prefix)
            }
        }
        Ok(Box::new(Plain(self, prompt)))
    }

    /// Sum of per-step log probabilities of `target` given `prompt`.
    fn sequence_log_likelihood(&self, prompt: &[Token], target: &[Token]) -> Result<f64, OracleError> {
        let ctx = self.condition(prompt)?;
        let mut total = 0.0;
        for i in 0..target.len() {
            total += ctx.next(&target[..i])?.log_prob(target[i]);
        }
        Ok(total)
    }
}

/// Uniform over the whole vocabulary.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformOracle;

impl LikelihoodOracle for UniformOracle {
    fn next_distribution(&self, _: &[Token], _: &[Token]) -> Result<TokenDistribution, OracleError> {
        Ok(TokenDistribution::uniform())
    }
}

/// Puts all mass on a stored target for known prompts; uniform once the
/// prefix leaves the target or for unknown prompts.
#[derive(Debug, Clone, Default)]
pub struct MemorizerOracle {
    entries: HashMap<Vec<Token>, Vec<Token>>,
}

impl MemorizerOracle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, prompt: Vec<Token>, target: Vec<Token>) {
        self.entries.insert(prompt, target);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Memorizes the true answer of test pair `test_index` under every view.
    /// The task must carry that test output.
    pub fn for_views(task: &Task, test_index: usize, views: &[AugmentationDescriptor]) -> Self {
        let mut m = Self::new();
        for v in views {
            let aug = apply_augmentation(task, v);
            if let Ok(enc) = encode_task(&aug, Traversal::RowByRow, test_index) {
                if let Some(target) = enc.target {
                    m.insert(enc.prompt.tokens, target.tokens);
                }
            }
        }
        m
    }

    fn dist(target: Option<&Vec<Token>>, prefix: &[Token]) -> TokenDistribution {
        match target {
            Some(t) if prefix.len() < t.len() && t.starts_with(prefix) => TokenDistribution::one_hot(t[prefix.len()]),
            _ => TokenDistribution::uniform(),
        }
    }
}

impl LikelihoodOracle for MemorizerOracle {
    fn next_distribution(&self, prompt: &[Token], prefix: &[Token]) -> Result<TokenDistribution, OracleError> {
        Ok(Self::dist(self.entries.get(prompt), prefix))
    }

    fn condition<'a>(&'a self, prompt: &'a [Token]) -> Result<Box<dyn Conditioned + 'a>, OracleError> {
        struct Bound<'a>(Option<&'a Vec<Token>>);
        impl Conditioned for Bound<'_> {
            fn next(&self, prefix: &[Token]) -> Result<TokenDistribution, OracleError> {
                Ok(MemorizerOracle::dist(self.0, prefix))
            }
        }
        Ok(Box::new(Bound(self.entries.get(prompt))))
    }
}

/// Draws the output from a transition matrix built on the prompt's own
/// grids. The output shape is predicted from the test input scaled by the
/// mean output/input ratio of the demonstrations, and the matrix only picks
/// the colors.
#[derive(Debug, Default)]
pub struct TransitionOracle {
    cache: Mutex<HashMap<u64, std::sync::Arc<PromptModel>>>,
}

#[derive(Debug)]
struct PromptModel {
    matrix: TransitionMatrix,
    height: usize,
    width: usize,
}

impl PromptModel {
    fn new(prompt: &[Token]) -> Self {
        let grids = prompt_grids(prompt);
        let matrix = TransitionMatrix::from_grids(&grids);
        // Demonstrations alternate input, output; the test input comes last.
        let (pairs, test) = match grids.split_last() {
            Some((test, pairs)) if grids.len() % 2 == 1 => (pairs, Some(test)),
            _ => (&grids[..], None),
        };
        let (mut hr, mut wr, mut n) = (0.0, 0.0, 0usize);
        for pair in pairs.chunks_exact(2) {
            hr += pair[1].height() as f64 / pair[0].height() as f64;
            wr += pair[1].width() as f64 / pair[0].width() as f64;
            n += 1;
        }
        let scale = |dim: usize, ratio: f64| ((dim as f64 * ratio / n as f64).round() as usize).clamp(1, 30);
        let (height, width) = match test {
            Some(t) if n > 0 => (scale(t.height(), hr), scale(t.width(), wr)),
            Some(t) => (t.height(), t.width()),
            None => grids.last().map_or((1, 1), |g| (g.height(), g.width())),
        };
        PromptModel { matrix, height, width }
    }

    fn next(&self, prefix: &[Token]) -> TokenDistribution {
        let Some(&last) = prefix.last() else {
            return TokenDistribution::one_hot(Token::START_OUTPUT);
        };
        if last == Token::END_OUTPUT || last == Token::EOS {
            return TokenDistribution::one_hot(Token::EOS);
        }
        if last == Token::START_OUTPUT {
            return TokenDistribution::one_hot(Token::START_ROW);
        }
        let rows_done = prefix.iter().filter(|&&t| t == Token::END_ROW).count();
        if last == Token::END_ROW {
            return TokenDistribution::one_hot(if rows_done >= self.height {
                Token::END_OUTPUT
            } else {
                Token::START_ROW
            });
        }
        let row_start = prefix.iter().rposition(|&t| t == Token::START_ROW).unwrap_or(0);
        let in_row = prefix.len() - row_start - 1;
        if in_row >= self.width {
            return TokenDistribution::one_hot(Token::END_ROW);
        }
        let b = symbol(last).unwrap_or(10);
        let a = match prefix.len() {
            0 | 1 => 11,
            n => symbol(prefix[n - 2]).unwrap_or(11),
        };
        let mut w = vec![0.0; VOCAB_SIZE];
        for (s, &p) in self.matrix.row(a, b).iter().enumerate().take(10) {
            w[symbol_token(s).id()] = p;
        }
        TokenDistribution::from_weights(w)
    }
}

impl TransitionOracle {
    pub fn new() -> Self {
        Self::default()
    }

    fn model(&self, prompt: &[Token]) -> std::sync::Arc<PromptModel> {
        let mut h = DefaultHasher::new();
        prompt.hash(&mut h);
        let key = h.finish();
        if let Some(m) = self.cache.lock().expect("cache lock").get(&key) {
            return m.clone();
        }
        let m = std::sync::Arc::new(PromptModel::new(prompt));
        self.cache.lock().expect("cache lock").insert(key, m.clone());
        m
    }
}

impl LikelihoodOracle for TransitionOracle {
    fn next_distribution(&self, prompt: &[Token], prefix: &[Token]) -> Result<TokenDistribution, OracleError> {
        Ok(self.model(prompt).next(prefix))
    }

    fn condition<'a>(&'a self, prompt: &'a [Token]) -> Result<Box<dyn Conditioned + 'a>, OracleError> {
        struct Bound(std::sync::Arc<PromptModel>);
        impl Conditioned for Bound {
            fn next(&self, prefix: &[Token]) -> Result<TokenDistribution, OracleError> {
                Ok(self.0.next(prefix))
            }
        }
        Ok(Box::new(Bound(self.model(prompt))))
    }
}

/// Pseudo-random distributions over a small alphabet, a fixed function of
/// `(seed, prompt, prefix)`. Handy for checking search algorithms against
/// brute force.
#[derive(Debug, Clone)]
pub struct HashedOracle {
    pub alphabet: Vec<Token>,
    pub seed: u64,
    /// Probability of sampling an exact tie between two symbols.
    pub tie_rate: f64,
}

impl HashedOracle {
    pub fn new(alphabet: Vec<Token>, seed: u64) -> Self {
        HashedOracle {
            alphabet,
            seed,
            tie_rate: 0.2,
        }
    }
}

impl LikelihoodOracle for HashedOracle {
    fn next_distribution(&self, prompt: &[Token], prefix: &[Token]) -> Result<TokenDistribution, OracleError> {
        let mut h = DefaultHasher::new();
        (self.seed, prompt, prefix).hash(&mut h);
        let mut rng = ChaCha8Rng::seed_from_u64(h.finish());
        // Weights on a coarse grid so that ties actually happen.
        let mut w = vec![0.0; VOCAB_SIZE];
        for t in &self.alphabet {
            w[t.id()] = rng.gen_range(1..=8) as f64;
        }
        if self.alphabet.len() >= 2 && rng.gen_bool(self.tie_rate) {
            w[self.alphabet[1].id()] = w[self.alphabet[0].id()];
        }
        Ok(TokenDistribution::from_weights(w))
    }
}

#[derive(Serialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum Request {
    Dist { prompt: Vec<usize>, prefix: Vec<usize> },
    Loglik { prompt: Vec<usize>, target: Vec<usize> },
}

#[derive(Deserialize)]
struct Reply {
    probs: Option<Vec<f64>>,
    value: Option<serde_json::Value>,
    error: Option<String>,
}

enum Channel {
    Tcp(BufReader<TcpStream>, TcpStream),
    #[cfg(unix)]
    Unix(BufReader<std::os::unix::net::UnixStream>, std::os::unix::net::UnixStream),
    Exec(Child, BufReader<ChildStdout>, ChildStdin),
}

impl Channel {
    fn roundtrip(&mut self, line: &str) -> std::io::Result<String> {
        let mut reply = String::new();
        match self {
            Channel::Tcp(r, w) => {
                writeln!(w, "{line}")?;
                w.flush()?;
                r.read_line(&mut reply)?;
            }
            #[cfg(unix)]
            Channel::Unix(r, w) => {
                writeln!(w, "{line}")?;
                w.flush()?;
                r.read_line(&mut reply)?;
            }
            Channel::Exec(_, r, w) => {
                writeln!(w, "{line}")?;
                w.flush()?;
                r.read_line(&mut reply)?;
            }
        }
        if reply.is_empty() {
            return Err(std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "oracle closed the stream"));
        }
        Ok(reply)
    }
}

impl Drop for Channel {
    fn drop(&mut self) {
        if let Channel::Exec(child, _, _) = self {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// External oracle speaking newline-delimited JSON.
///
/// Requests are `{"op":"dist","prompt":[ids],"prefix":[ids]}` answered by
/// `{"probs":[125 numbers]}`, and `{"op":"loglik","prompt":[ids],"target":[ids]}`
/// answered by `{"value":x}` where `x` may be the string `"-inf"`.
/// Queries are serialized over one connection.
pub struct IpcOracle {
    endpoint: String,
    channel: Mutex<Channel>,
}

impl std::fmt::Debug for IpcOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IpcOracle").field("endpoint", &self.endpoint).finish()
    }
}

impl IpcOracle {
    /// `tcp://host:port`, `unix:/path/to/socket` or `exec:command args`.
    pub fn connect(endpoint: &str) -> Result<Self, OracleError> {
        let unreachable = |e: std::io::Error| OracleError::Unreachable(format!("{endpoint}: {e}"));
        let channel = if let Some(addr) = endpoint.strip_prefix("tcp://") {
            let s = TcpStream::connect(addr).map_err(unreachable)?;
            Channel::Tcp(BufReader::new(s.try_clone().map_err(unreachable)?), s)
        } else if let Some(path) = endpoint.strip_prefix("unix:") {
            #[cfg(unix)]
            {
                let s = std::os::unix::net::UnixStream::connect(path).map_err(unreachable)?;
                Channel::Unix(BufReader::new(s.try_clone().map_err(unreachable)?), s)
            }
            #[cfg(not(unix))]
            {
                return Err(OracleError::Unreachable(format!("unix sockets unsupported: {path}")));
            }
        } else if let Some(cmd) = endpoint.strip_prefix("exec:") {
            let mut parts = cmd.split_whitespace();
            let program = parts.next().ok_or_else(|| OracleError::UnknownSpec(endpoint.into()))?;
            let mut child = Command::new(program)
                .args(parts)
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .spawn()
                .map_err(unreachable)?;
            let stdin = child.stdin.take().expect("piped stdin");
            let stdout = child.stdout.take().expect("piped stdout");
            Channel::Exec(child, BufReader::new(stdout), stdin)
        } else {
            return Err(OracleError::UnknownSpec(endpoint.into()));
        };
        Ok(IpcOracle {
            endpoint: endpoint.into(),
            channel: Mutex::new(channel),
        })
    }

    fn call(&self, req: &Request) -> Result<Reply, OracleError> {
        let line = serde_json::to_string(req).map_err(|e| OracleError::Protocol(e.to_string()))?;
        let raw = self
            .channel
            .lock()
            .map_err(|_| OracleError::Protocol("connection poisoned".into()))?
            .roundtrip(&line)
            .map_err(|e| OracleError::Unreachable(format!("{}: {e}", self.endpoint)))?;
        let reply: Reply = serde_json::from_str(&raw).map_err(|e| OracleError::Protocol(e.to_string()))?;
        if let Some(e) = reply.error {
            return Err(OracleError::Protocol(e));
        }
        Ok(reply)
    }
}

fn ids(tokens: &[Token]) -> Vec<usize> {
    tokens.iter().map(|t| t.id()).collect()
}

impl LikelihoodOracle for IpcOracle {
    fn next_distribution(&self, prompt: &[Token], prefix: &[Token]) -> Result<TokenDistribution, OracleError> {
        let reply = self.call(&Request::Dist {
            prompt: ids(prompt),
            prefix: ids(prefix),
        })?;
        let probs = reply.probs.ok_or_else(|| OracleError::Protocol("reply lacks probs".into()))?;
        if probs.len() != VOCAB_SIZE {
            return Err(OracleError::Protocol(format!("expected {VOCAB_SIZE} probabilities, got {}", probs.len())));
        }
        TokenDistribution::new(probs).map_err(|e| OracleError::Protocol(e.to_string()))
    }

    fn sequence_log_likelihood(&self, prompt: &[Token], target: &[Token]) -> Result<f64, OracleError> {
        let reply = self.call(&Request::Loglik {
            prompt: ids(prompt),
            target: ids(target),
        })?;
        match reply.value {
            Some(serde_json::Value::Number(n)) => n.as_f64().ok_or_else(|| OracleError::Protocol("bad number".into())),
            Some(serde_json::Value::String(s)) if s == "-inf" => Ok(f64::NEG_INFINITY),
            _ => Err(OracleError::Protocol("reply lacks value".into())),
        }
    }
}

/// Builds an oracle from a config string: `uniform`, `transition` or
/// `ipc:<endpoint>` (see [`IpcOracle::connect`]).
pub fn oracle_from_spec(spec: &str) -> Result<Box<dyn LikelihoodOracle>, OracleError> {
    match spec {
        "uniform" => Ok(Box::new(UniformOracle)),
        "transition" | "transition_matrix" => Ok(Box::new(TransitionOracle::new())),
        _ => match spec.strip_prefix("ipc:") {
            Some(endpoint) => Ok(Box::new(IpcOracle::connect(endpoint)?)),
            None => Err(OracleError::UnknownSpec(spec.into())),
        },
    }
}
