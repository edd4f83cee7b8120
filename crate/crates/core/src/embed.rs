//! Text embedding providers.
//!
//! The built-in provider hashes character trigrams into a fixed-width
//! signed vector and L2-normalizes it. External providers are executables
//! speaking a JSONL protocol on stdin/stdout: requests are `{"id", "text"}`
//! lines; the response starts with a header line `{"dim": D}` followed by
//! one `{"id", "vector"}` line per request.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::stable_hash;
use crate::stats::l2_normalize;

pub const BUILTIN_DIM: usize = 384;

pub trait EmbeddingProvider: Sync {
    fn name(&self) -> String;

    /// Embed `(id, text)` items, returning one vector per item in input
    /// order. All vectors share one dimension.
    fn embed(&self, items: &[(String, String)]) -> Result<Vec<Vec<f64>>>;
}

#[derive(Debug, Clone)]
pub struct HashingProvider {
    pub dim: usize,
}

impl Default for HashingProvider {
    fn default() -> Self {
        HashingProvider { dim: BUILTIN_DIM }
    }
}

impl HashingProvider {
    pub fn embed_text(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let lowered = text.to_lowercase();
        let mut chars: Vec<char> = vec![' '];
        for word in lowered.split_whitespace() {
            chars.extend(word.chars());
            chars.push(' ');
        }
        let mut buf = [0u8; 16];
        for tri in chars.windows(3) {
            let mut len = 0;
            for c in tri {
                len += c.encode_utf8(&mut buf[len..]).len();
            }
            let h = stable_hash([&buf[..len]]);
            let idx = (h % self.dim as u64) as usize;
            v[idx] += if h >> 63 == 1 { -1.0 } else { 1.0 };
        }
        l2_normalize(&mut v);
        v
    }
}

impl EmbeddingProvider for HashingProvider {
    fn name(&self) -> String {
        format!("builtin-trigram-{}", self.dim)
    }

    fn embed(&self, items: &[(String, String)]) -> Result<Vec<Vec<f64>>> {
        use rayon::prelude::*;
        Ok(items.par_iter().map(|(_, t)| self.embed_text(t)).collect())
    }
}

#[derive(Debug, Clone)]
pub struct CommandProvider {
    pub program: String,
    pub args: Vec<String>,
}

#[derive(Serialize)]
struct Request<'a> {
    id: &'a str,
    text: &'a str,
}

#[derive(Deserialize)]
struct Header {
    dim: usize,
}

#[derive(Deserialize)]
struct Response {
    id: String,
    vector: Vec<f64>,
}

impl CommandProvider {
    pub fn parse(spec: &str) -> CommandProvider {
        let mut parts = spec.split_whitespace().map(String::from);
        CommandProvider {
            program: parts.next().unwrap_or_default(),
            args: parts.collect(),
        }
    }
}

fn unavailable(msg: impl std::fmt::Display) -> Error {
    Error::EmbeddingProviderUnavailable(msg.to_string())
}

impl EmbeddingProvider for CommandProvider {
    fn name(&self) -> String {
        format!("cmd:{}", self.program)
    }

    fn embed(&self, items: &[(String, String)]) -> Result<Vec<Vec<f64>>> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| unavailable(format!("{}: {e}", self.program)))?;

        let mut payload = Vec::new();
        for (id, text) in items {
            serde_json::to_writer(&mut payload, &Request { id, text })?;
            payload.push(b'\n');
        }
        let mut stdin = child.stdin.take().expect("piped stdin");
        let writer = std::thread::spawn(move || stdin.write_all(&payload));

        let stdout = child.stdout.take().expect("piped stdout");
        let mut lines = BufReader::new(stdout).lines();
        let header_line = lines
            .next()
            .ok_or_else(|| unavailable("provider produced no output"))?
            .map_err(unavailable)?;
        let header: Header = serde_json::from_str(&header_line).map_err(|e| unavailable(format!("bad header: {e}")))?;
        let mut by_id: HashMap<String, Vec<f64>> = HashMap::with_capacity(items.len());
        for line in lines {
            let line = line.map_err(unavailable)?;
            if line.trim().is_empty() {
                continue;
            }
            let resp: Response = serde_json::from_str(&line).map_err(|e| unavailable(format!("bad record: {e}")))?;
            if resp.vector.len() != header.dim {
                return Err(unavailable(format!(
                    "vector for `{}` has dimension {}, header declares {}",
                    resp.id,
                    resp.vector.len(),
                    header.dim
                )));
            }
            by_id.insert(resp.id, resp.vector);
        }
        writer
            .join()
            .map_err(|_| unavailable("writer thread panicked"))?
            .map_err(unavailable)?;
        let status = child.wait().map_err(unavailable)?;
        if !status.success() {
            return Err(unavailable(format!("provider exited with {status}")));
        }
        items
            .iter()
            .map(|(id, _)| by_id.remove(id).ok_or_else(|| unavailable(format!("no vector for `{id}`"))))
            .collect()
    }
}

/// Resolve a provider specification: `builtin` or `cmd:<exe> [args..]`.
pub fn provider_from_spec(spec: &str) -> Result<Box<dyn EmbeddingProvider>> {
    if spec == "builtin" {
        Ok(Box::new(HashingProvider::default()))
    } else if let Some(cmd) = spec.strip_prefix("cmd:") {
        let p = CommandProvider::parse(cmd);
        if p.program.is_empty() {
            return Err(unavailable("empty command"));
        }
        Ok(Box::new(p))
    } else {
        Err(unavailable(format!("unknown provider `{spec}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{cosine, dot};

    #[test]
    fn builtin_is_unit_norm_and_deterministic() {
        let p = HashingProvider::default();
        let a = p.embed_text("I log in as admin");
        assert_eq!(a.len(), BUILTIN_DIM);
        assert!((dot(&a, &a) - 1.0).abs() < 1e-12);
        assert_eq!(a, p.embed_text("I log in as admin"));
    }

    #[test]
    fn similar_texts_score_higher() {
        let p = HashingProvider::default();
        let a = p.embed_text("I log in as admin");
        let b = p.embed_text("I log in as an admin");
        let c = p.embed_text("the response status is 404");
        assert!(cosine(&a, &b) > cosine(&a, &c));
    }

    #[test]
    fn unknown_provider_spec() {
        assert!(matches!(provider_from_spec("sbert"), Err(Error::EmbeddingProviderUnavailable(_))));
    }

    #[test]
    fn missing_executable_is_unavailable() {
        let p = CommandProvider::parse("/nonexistent/embedder");
        let err = p.embed(&[("a".into(), "x".into())]).unwrap_err();
        assert!(matches!(err, Error::EmbeddingProviderUnavailable(_)));
    }
}
