//! Pseudo-log-likelihood scoring over masked-LM backends.
//!
//! For a token sequence `w_1 .. w_n`, the pseudo-log-likelihood is
//!
//! ```text
//! PLL(W) = sum_t log P(w_t | W without w_t)
//! ```
//!
//! where each term comes from masking position `t` and asking the model for
//! the probability of the original token. Pseudo-perplexity pools over every
//! maskable token `N` of a corpus:
//!
//! ```text
//! PPPL = exp(-(sum_W PLL(W)) / N)
//! ```
//!
//! Boundary tokens are never masked and do not count towards `N`. A model
//! probability of zero is floored at `1e-12` before taking the log.

mod remote;
mod toy;

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{fsum, ExactSum};

pub use remote::{RemoteScorer, RetryPolicy, ScoreRequest, ScoreResponse, WireScore};
pub use toy::{train_toy_scorer, ToyScorer, UniformScorer};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";
pub const MASK: &str = "<mask>";

/// Smallest probability that enters a log.
pub const PROB_FLOOR: f64 = 1e-12;

pub fn log_floor() -> f64 {
    PROB_FLOOR.ln()
}

/// Tokens that frame a sequence and are never masked.
pub fn is_boundary(token: &str) -> bool {
    matches!(token, BOS | EOS | "[CLS]" | "[SEP]")
}

fn is_special(token: &str) -> bool {
    is_boundary(token) || token == UNK || token == MASK
}

/// Whitespace tokenization wrapped in `<s> ... </s>`.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::with_capacity(2 + text.len() / 4);
    out.push(BOS.to_string());
    out.extend(text.split_whitespace().map(str::to_string));
    out.push(EOS.to_string());
    out
}

/// Ordered token inventory of a model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary; duplicates after the first occurrence are dropped.
    pub fn new<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Self {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in tokens {
            let t = t.into();
            if !v.index.contains_key(&t) {
                v.index.insert(t.clone(), v.tokens.len());
                v.tokens.push(t);
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Id of `token`, falling back to `<unk>`.
    pub fn id_or_unk(&self, token: &str) -> Option<usize> {
        self.id(token).or_else(|| self.id(UNK))
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// A model that yields the full conditional distribution at a masked
/// position. Implementations must return a non-negative vector over
/// [`vocabulary`](Self::vocabulary) summing to one, and must be
/// deterministic.
pub trait ConditionalModel: Send + Sync {
    fn vocabulary(&self) -> &Vocabulary;

    fn distribution(&self, tokens: &[String], position: usize) -> Result<Vec<f64>>;
}

/// Log-probability and candidates for one masked position.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionScore {
    pub position: usize,
    /// Log-probability of the original token, already floored.
    pub logprob: f64,
    /// Most probable replacements, descending.
    pub candidates: Vec<(String, f64)>,
}

/// The surface every scoring routine consumes.
///
/// Backends own their tokenization: positions refer to the token list
/// returned by [`tokenize`](Self::tokenize).
pub trait MaskedScorer: Send + Sync {
    fn tokenize(&self, text: &str) -> Result<Vec<String>>;

    /// Scores each position of `tokens` (as returned by `tokenize(text)`)
    /// with that position masked. `top_k == 0` skips candidate lists.
    fn score_positions(
        &self,
        text: &str,
        tokens: &[String],
        positions: &[usize],
        top_k: usize,
    ) -> Result<Vec<PositionScore>>;
}

impl<M: ConditionalModel> MaskedScorer for M {
    fn tokenize(&self, text: &str) -> Result<Vec<String>> {
        Ok(tokenize(text))
    }

    fn score_positions(
        &self,
        _text: &str,
        tokens: &[String],
        positions: &[usize],
        top_k: usize,
    ) -> Result<Vec<PositionScore>> {
        let vocab = self.vocabulary();
        positions
            .iter()
            .map(|&position| {
                let dist = self.distribution(tokens, position)?;
                if dist.len() != vocab.len() {
                    return Err(Error::invalid(format!(
                        "distribution has {} entries for a vocabulary of {}",
                        dist.len(),
                        vocab.len()
                    )));
                }
                let p = vocab
                    .id_or_unk(&tokens[position])
                    .map(|id| dist[id])
                    .unwrap_or(0.0);
                Ok(PositionScore {
                    position,
                    logprob: p.max(PROB_FLOOR).ln(),
                    candidates: top_candidates(vocab, &dist, top_k),
                })
            })
            .collect()
    }
}

impl MaskedScorer for Box<dyn MaskedScorer> {
    fn tokenize(&self, text: &str) -> Result<Vec<String>> {
        (**self).tokenize(text)
    }

    fn score_positions(
        &self,
        text: &str,
        tokens: &[String],
        positions: &[usize],
        top_k: usize,
    ) -> Result<Vec<PositionScore>> {
        (**self).score_positions(text, tokens, positions, top_k)
    }
}

/// Top `k` non-special tokens, probability descending, ties by vocabulary order.
fn top_candidates(vocab: &Vocabulary, dist: &[f64], k: usize) -> Vec<(String, f64)> {
    if k == 0 {
        return Vec::new();
    }
    let mut ids: Vec<usize> = (0..vocab.len())
        .filter(|&i| !is_special(vocab.token(i)))
        .collect();
    ids.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
    ids.truncate(k);
    ids.into_iter()
        .map(|i| (vocab.token(i).to_string(), dist[i]))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PllResult {
    /// Sum of `per_token` log-probabilities, in nats.
    pub pll: f64,
    pub token_count: usize,
    pub per_token: Vec<(String, f64)>,
}

fn maskable_positions(tokens: &[String]) -> Vec<usize> {
    (0..tokens.len())
        .filter(|&i| !is_boundary(&tokens[i]))
        .collect()
}

/// Pseudo-log-likelihood of `text`: each non-boundary token masked in turn.
pub fn pll(scorer: &dyn MaskedScorer, text: &str) -> Result<PllResult> {
    let tokens = scorer.tokenize(text)?;
    pll_tokens(scorer, text, &tokens)
}

/// [`pll`] over a pre-tokenized sequence.
pub fn pll_tokens(scorer: &dyn MaskedScorer, text: &str, tokens: &[String]) -> Result<PllResult> {
    let positions = maskable_positions(tokens);
    if positions.is_empty() {
        return Err(Error::invalid("sequence has no maskable tokens"));
    }
    let scores = scorer.score_positions(text, tokens, &positions, 0)?;
    if scores.len() != positions.len() {
        return Err(Error::Protocol {
            context: "pll".into(),
            message: format!(
                "asked for {} positions, got {}",
                positions.len(),
                scores.len()
            ),
        });
    }
    let per_token: Vec<(String, f64)> = scores
        .iter()
        .map(|s| (tokens[s.position].clone(), s.logprob))
        .collect();
    let logs: Vec<f64> = per_token.iter().map(|p| p.1).collect();
    Ok(PllResult {
        pll: fsum(&logs),
        token_count: per_token.len(),
        per_token,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpplReport {
    pub model_name: String,
    pub testset_name: String,
    pub pppl: f64,
    pub tweet_plls: Vec<(u64, PllResult)>,
    pub total_tokens: usize,
    /// Texts without a maskable token.
    pub skipped: usize,
}

/// Pseudo-perplexity of a set of `(id, text)` pairs.
///
/// Texts are scored in parallel. The log-probabilities of every token are
/// pooled with an exactly rounded sum, so the result does not depend on the
/// order of `texts` and is unchanged when the corpus is repeated.
pub fn pppl<S: AsRef<str> + Sync>(
    scorer: &dyn MaskedScorer,
    texts: &[(u64, S)],
) -> Result<PpplReport> {
    let scored: Vec<Result<Option<(u64, PllResult)>>> = texts
        .par_iter()
        .map(|(id, text)| {
            let text = text.as_ref();
            let tokens = scorer
                .tokenize(text)
                .map_err(|e| e.with_context(format!("tweet {id}")))?;
            if maskable_positions(&tokens).is_empty() {
                return Ok(None);
            }
            pll_tokens(scorer, text, &tokens)
                .map(|r| Some((*id, r)))
                .map_err(|e| e.with_context(format!("tweet {id}")))
        })
        .collect();
    let mut tweet_plls = Vec::with_capacity(texts.len());
    let mut skipped = 0;
    for r in scored {
        match r? {
            Some(p) => tweet_plls.push(p),
            None => skipped += 1,
        }
    }
    if tweet_plls.is_empty() {
        return Err(Error::invalid("no text with a maskable token"));
    }
    let mut pooled = ExactSum::new();
    let mut total_tokens = 0;
    for (_, r) in &tweet_plls {
        pooled.extend(r.per_token.iter().map(|p| p.1));
        total_tokens += r.token_count;
    }
    Ok(PpplReport {
        model_name: String::new(),
        testset_name: String::new(),
        pppl: (-pooled.mean(total_tokens)).exp(),
        tweet_plls,
        total_tokens,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskedPrediction {
    pub position: usize,
    pub candidates: Vec<(String, f64)>,
}

/// Top-`k` fillers for every `<mask>` token of `text`, in position order.
pub fn masked_predictions(
    scorer: &dyn MaskedScorer,
    text: &str,
    top_k: usize,
) -> Result<Vec<MaskedPrediction>> {
    if top_k == 0 {
        return Err(Error::invalid("top_k must be positive"));
    }
    let tokens = scorer.tokenize(text)?;
    let positions: Vec<usize> = (0..tokens.len()).filter(|&i| tokens[i] == MASK).collect();
    if positions.is_empty() {
        return Err(Error::invalid(format!("no {MASK} token in {text:?}")));
    }
    let scores = scorer.score_positions(text, &tokens, &positions, top_k)?;
    Ok(scores
        .into_iter()
        .map(|s| MaskedPrediction {
            position: s.position,
            candidates: s.candidates,
        })
        .collect())
}

/// One line of a scoring input file. Only `text` is required; `id` defaults
/// to the 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextRecord {
    pub id: u64,
    pub text: String,
    pub created_at: Option<chrono::DateTime<chrono::Utc>>,
}

#[derive(Deserialize)]
struct RawTextRecord {
    #[serde(default)]
    id: Option<serde_json::Value>,
    text: String,
    #[serde(default)]
    created_at: Option<String>,
}

/// Reads `{"text": ..., "id"?: ..., "created_at"?: ...}` lines.
pub fn read_texts(path: &Path) -> Result<Vec<TextRecord>> {
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in body.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawTextRecord =
            serde_json::from_str(line).map_err(|e| Error::data_at(lineno, e.to_string()))?;
        let id = match raw.id {
            None => lineno as u64,
            Some(serde_json::Value::String(s)) => s
                .parse()
                .map_err(|_| Error::data_at(lineno, format!("id {s:?} is not a decimal u64")))?,
            Some(serde_json::Value::Number(n)) => n
                .as_u64()
                .ok_or_else(|| Error::data_at(lineno, format!("id {n} is not a u64")))?,
            Some(other) => return Err(Error::data_at(lineno, format!("bad id {other}"))),
        };
        let created_at = raw
            .created_at
            .map(|s| {
                crate::corpus::parse_timestamp(&s)
                    .map_err(|e| Error::data_at(lineno, e.to_string()))
            })
            .transpose()?;
        out.push(TextRecord {
            id,
            text: raw.text,
            created_at,
        });
    }
    Ok(out)
}

/// Pseudo-perplexity of a test-set file under `scorer`.
pub fn eval_model(scorer: &dyn MaskedScorer, testset: &Path, name: &str) -> Result<PpplReport> {
    let texts: Vec<(u64, String)> = read_texts(testset)?
        .into_iter()
        .map(|r| (r.id, r.text))
        .collect();
    if texts.is_empty() {
        return Err(Error::invalid(format!(
            "test set {} is empty",
            testset.display()
        )));
    }
    let mut report = pppl(scorer, &texts)?;
    report.model_name = name.to_string();
    report.testset_name = testset
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(report)
}

/// Serialized form of a [`PpplReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub model: String,
    pub testset: String,
    pub pppl: f64,
    pub total_tokens: usize,
    pub tweets: Vec<ReportTweet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTweet {
    #[serde(with = "id_string")]
    pub id: u64,
    pub pll: f64,
    pub token_count: usize,
}

mod id_string {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(id: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(id)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        String::deserialize(d)?.parse().map_err(de::Error::custom)
    }
}

impl From<&PpplReport> for ReportFile {
    fn from(r: &PpplReport) -> Self {
        Self {
            model: r.model_name.clone(),
            testset: r.testset_name.clone(),
            pppl: r.pppl,
            total_tokens: r.total_tokens,
            tweets: r
                .tweet_plls
                .iter()
                .map(|(id, p)| ReportTweet {
                    id: *id,
                    pll: p.pll,
                    token_count: p.token_count,
                })
                .collect(),
        }
    }
}

/// Options for [`open_scorer`].
#[derive(Debug, Clone)]
pub struct ScorerOptions {
    pub batch_size: usize,
    pub retry: RetryPolicy,
    pub timeout: std::time::Duration,
    pub toy_alpha: f64,
}

impl Default for ScorerOptions {
    fn default() -> Self {
        Self {
            batch_size: 32,
            retry: RetryPolicy::default(),
            timeout: std::time::Duration::from_secs(30),
            toy_alpha: 1.0,
        }
    }
}

/// Opens the backend named by a registry locator.
///
/// * `toy:<path>`: count-based scorer trained on the texts of `<path>`
///   (JSONL records with a `text` field, or plain lines).
/// * `uniform:<tok>,<tok>,...`: uniform distribution over the listed tokens.
/// * `http://...` / `https://...`: remote scoring server.
pub fn open_scorer(locator: &str, options: &ScorerOptions) -> Result<Box<dyn MaskedScorer>> {
    if let Some(path) = locator.strip_prefix("toy:") {
        let path = Path::new(path);
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut texts = Vec::new();
        for (i, line) in body.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('{') {
                let v: serde_json::Value =
                    serde_json::from_str(line).map_err(|e| Error::data_at(i + 1, e.to_string()))?;
                let text = v
                    .get("text")
                    .and_then(|t| t.as_str())
                    .ok_or_else(|| Error::data_at(i + 1, "missing field `text`"))?;
                texts.push(text.to_string());
            } else {
                texts.push(line.to_string());
            }
        }
        return Ok(Box::new(train_toy_scorer(&texts, options.toy_alpha)?));
    }
    if let Some(list) = locator.strip_prefix("uniform:") {
        let tokens: Vec<&str> = list
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .collect();
        return Ok(Box::new(UniformScorer::new(tokens)?));
    }
    if locator.starts_with("http://") || locator.starts_with("https://") {
        return Ok(Box::new(RemoteScorer::new(locator, options)?));
    }
    Err(Error::invalid(format!(
        "no scorer backend for locator {locator:?}"
    )))
}
