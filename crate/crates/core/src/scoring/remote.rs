//! HTTP client for scoring servers that wrap real masked language models.
//!
//! Each call POSTs one JSON object to the endpoint:
//!
//! ```text
//! {"text": "...", "positions": [i, ...], "top_k": k}
//! ```
//!
//! and expects
//!
//! ```text
//! {"tokens": ["<s>", ...],
//!  "vocab_size": n,                      (optional)
//!  "scores": [{"position": i,
//!              "logprob_original": f,    (natural log, null for -inf)
//!              "topk": [["tok", p], ...]}]}  (linear probabilities)
//! ```
//!
//! The server owns tokenization: `tokens` is its own token list and
//! positions index into it. A request with no positions only tokenizes.
//! The client owns the PLL sum.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{is_boundary, MaskedScorer, PositionScore, ScorerOptions, PROB_FLOOR};
use crate::error::{Error, Result};

/// Slack allowed when checking that probabilities sum to one.
const NORMALIZATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            backoff: Duration::from_millis(250),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub text: String,
    pub positions: Vec<usize>,
    #[serde(default)]
    pub top_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab_size: Option<usize>,
    #[serde(default)]
    pub scores: Vec<WireScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireScore {
    pub position: usize,
    #[serde(deserialize_with = "null_as_neg_infinity")]
    pub logprob_original: f64,
    #[serde(default)]
    pub topk: Vec<(String, f64)>,
}

fn null_as_neg_infinity<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
}

#[derive(Debug, Clone)]
pub struct RemoteScorer {
    endpoint: String,
    agent: ureq::Agent,
    batch_size: usize,
    retry: RetryPolicy,
}

impl RemoteScorer {
    pub fn new(endpoint: &str, options: &ScorerOptions) -> Result<Self> {
        let rest = endpoint
            .strip_prefix("http://")
            .or_else(|| endpoint.strip_prefix("https://"))
            .ok_or_else(|| {
                Error::invalid(format!("endpoint {endpoint:?} is not an http(s) URL"))
            })?;
        if rest.is_empty() || rest.starts_with('/') {
            return Err(Error::invalid(format!("endpoint {endpoint:?} has no host")));
        }
        if options.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if options.retry.attempts == 0 {
            return Err(Error::invalid("retry attempts must be positive"));
        }
        let agent = ureq::AgentBuilder::new().timeout(options.timeout).build();
        Ok(Self {
            endpoint: endpoint.to_string(),
            agent,
            batch_size: options.batch_size,
            retry: options.retry,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn call(&self, request: &ScoreRequest) -> Result<ScoreResponse> {
        let context = format!("{} positions {:?}", self.endpoint, request.positions);
        let mut last = None;
        for attempt in 0..self.retry.attempts {
            if attempt > 0 {
                std::thread::sleep(self.retry.backoff * attempt);
            }
            match self.agent.post(&self.endpoint).send_json(request) {
                Ok(resp) => {
                    let body = resp.into_string().map_err(|e| Error::Transport {
                        context: context.clone(),
                        message: e.to_string(),
                        retryable: true,
                    })?;
                    return serde_json::from_str(&body).map_err(|e| Error::Protocol {
                        context,
                        message: format!("undecodable response: {e}"),
                    });
                }
                Err(ureq::Error::Status(code, resp)) if code >= 500 => {
                    let body = resp.into_string().unwrap_or_default();
                    last = Some(format!("HTTP {code}: {body}"));
                }
                Err(ureq::Error::Status(code, resp)) => {
                    let body = resp.into_string().unwrap_or_default();
                    return Err(Error::Protocol {
                        context,
                        message: format!("HTTP {code}: {body}"),
                    });
                }
                Err(ureq::Error::Transport(t)) => last = Some(t.to_string()),
            }
            log::debug!(
                "attempt {} of {} failed for {context}",
                attempt + 1,
                self.retry.attempts
            );
        }
        Err(Error::Transport {
            context,
            message: format!(
                "gave up after {} attempts: {}",
                self.retry.attempts,
                last.unwrap_or_default()
            ),
            retryable: true,
        })
    }
}

fn validate(resp: &ScoreResponse, requested: &[usize], top_k: usize, context: &str) -> Result<()> {
    let bad = |message: String| Error::Protocol {
        context: context.to_string(),
        message,
    };
    if resp.scores.len() != requested.len() {
        return Err(bad(format!(
            "asked for {} positions, got {}",
            requested.len(),
            resp.scores.len()
        )));
    }
    for (s, &want) in resp.scores.iter().zip(requested) {
        if s.position != want {
            return Err(bad(format!("expected position {want}, got {}", s.position)));
        }
        if !s.logprob_original.is_finite() && s.logprob_original != f64::NEG_INFINITY {
            return Err(bad(format!(
                "position {want}: logprob_original is {}",
                s.logprob_original
            )));
        }
        if s.logprob_original > NORMALIZATION_TOLERANCE {
            return Err(bad(format!(
                "position {want}: logprob_original {} > 0",
                s.logprob_original
            )));
        }
        if s.topk
            .iter()
            .any(|(_, p)| !(0.0..=1.0 + NORMALIZATION_TOLERANCE).contains(p))
        {
            return Err(bad(format!("position {want}: probability outside [0, 1]")));
        }
        let sum: f64 = s.topk.iter().map(|(_, p)| p).sum();
        if sum > 1.0 + NORMALIZATION_TOLERANCE {
            return Err(bad(format!("position {want}: probabilities sum to {sum}")));
        }
        if resp.vocab_size == Some(s.topk.len()) && (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(bad(format!(
                "position {want}: full distribution sums to {sum}"
            )));
        }
        if top_k > 0 && s.topk.len() > top_k {
            return Err(bad(format!(
                "position {want}: {} candidates for top_k {top_k}",
                s.topk.len()
            )));
        }
    }
    Ok(())
}

impl MaskedScorer for RemoteScorer {
    fn tokenize(&self, text: &str) -> Result<Vec<String>> {
        let req = ScoreRequest {
            text: text.to_string(),
            positions: Vec::new(),
            top_k: 0,
        };
        Ok(self.call(&req)?.tokens)
    }

    fn score_positions(
        &self,
        text: &str,
        tokens: &[String],
        positions: &[usize],
        top_k: usize,
    ) -> Result<Vec<PositionScore>> {
        let mut out = Vec::with_capacity(positions.len());
        for batch in positions.chunks(self.batch_size) {
            let req = ScoreRequest {
                text: text.to_string(),
                positions: batch.to_vec(),
                top_k,
            };
            let resp = self.call(&req)?;
            let context = format!("{} positions {batch:?}", self.endpoint);
            if resp.tokens != tokens {
                return Err(Error::Protocol {
                    context,
                    message: "tokenization differs between requests".into(),
                });
            }
            validate(&resp, batch, top_k, &context)?;
            for s in resp.scores {
                if is_boundary(&tokens[s.position]) {
                    return Err(Error::Protocol {
                        context: context.clone(),
                        message: format!("position {} is a boundary token", s.position),
                    });
                }
                let mut candidates = s.topk;
                candidates.sort_by(|a, b| b.1.total_cmp(&a.1));
                out.push(PositionScore {
                    position: s.position,
                    logprob: s.logprob_original.max(PROB_FLOOR.ln()),
                    candidates,
                });
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resp(sum_to: f64, vocab_size: Option<usize>) -> ScoreResponse {
        ScoreResponse {
            tokens: vec!["<s>".into(), "a".into(), "</s>".into()],
            vocab_size,
            scores: vec![WireScore {
                position: 1,
                logprob_original: (0.5f64).ln(),
                topk: vec![("a".into(), 0.5 * sum_to), ("b".into(), 0.5 * sum_to)],
            }],
        }
    }

    #[test]
    fn validation_rules() {
        assert!(validate(&resp(1.0, Some(2)), &[1], 0, "t").is_ok());
        assert!(validate(&resp(0.8, None), &[1], 0, "t").is_ok());
        assert!(validate(&resp(1.2, None), &[1], 0, "t").is_err());
        assert!(validate(&resp(0.8, Some(2)), &[1], 0, "t").is_err());
        assert!(validate(&resp(1.0, None), &[2], 0, "t").is_err());
        assert!(validate(&resp(1.0, None), &[1], 1, "t").is_err());
    }

    #[test]
    fn endpoint_must_be_http() {
        let o = ScorerOptions::default();
        assert!(RemoteScorer::new("http://127.0.0.1:9/score", &o).is_ok());
        assert!(RemoteScorer::new("localhost:9", &o).is_err());
        assert!(RemoteScorer::new("http:///x", &o).is_err());
    }

    #[test]
    fn wire_format() {
        let req = ScoreRequest {
            text: "a b".into(),
            positions: vec![1, 2],
            top_k: 3,
        };
        assert_eq!(
            serde_json::to_string(&req).unwrap(),
            r#"{"text":"a b","positions":[1,2],"top_k":3}"#
        );
        let r: ScoreResponse = serde_json::from_str(
            r#"{"tokens":["<s>","a","</s>"],"scores":[{"position":1,"logprob_original":-0.1,"topk":[["a",0.9]]}]}"#,
        )
        .unwrap();
        assert_eq!(r.scores[0].topk[0], ("a".to_string(), 0.9));
    }
}
