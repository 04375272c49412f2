use std::collections::{BTreeSet, HashMap};

use super::{is_special, tokenize, ConditionalModel, Vocabulary, BOS, EOS, UNK};
use crate::error::{Error, Result};

/// Count-based masked scorer.
///
/// With bigram counts `c(u, v)` over boundary-wrapped training texts, the
/// distribution at a masked position with neighbours `l` and `r` is
///
/// ```text
/// P(w | l, r) ∝ (c(l, w) + alpha) * (c(w, r) + alpha)
/// ```
///
/// over the tokens seen in training. `<s>`, `</s>` and `<unk>` get no mass.
#[derive(Debug, Clone)]
pub struct ToyScorer {
    vocab: Vocabulary,
    /// Ids of the tokens that carry probability mass.
    content: Vec<usize>,
    bigrams: HashMap<(usize, usize), u64>,
    alpha: f64,
}

/// Trains a [`ToyScorer`] on whitespace-tokenized texts.
pub fn train_toy_scorer<S: AsRef<str>>(corpus: &[S], alpha: f64) -> Result<ToyScorer> {
    if corpus.is_empty() {
        return Err(Error::invalid("training corpus is empty"));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!(
            "smoothing alpha must be positive, got {alpha}"
        )));
    }
    let words: BTreeSet<&str> = corpus
        .iter()
        .flat_map(|t| t.as_ref().split_whitespace())
        .filter(|w| !is_special(w))
        .collect();
    if words.is_empty() {
        return Err(Error::invalid("training corpus has no tokens"));
    }
    let vocab = Vocabulary::new([BOS, EOS, UNK].into_iter().chain(words));
    let content = (3..vocab.len()).collect();
    let mut bigrams = HashMap::new();
    for text in corpus {
        let ids: Vec<Option<usize>> = tokenize(text.as_ref())
            .iter()
            .map(|t| vocab.id(t))
            .collect();
        for pair in ids.windows(2) {
            if let (Some(u), Some(v)) = (pair[0], pair[1]) {
                *bigrams.entry((u, v)).or_insert(0) += 1;
            }
        }
    }
    Ok(ToyScorer {
        vocab,
        content,
        bigrams,
        alpha,
    })
}

impl ToyScorer {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn bigram_count(&self, left: &str, right: &str) -> u64 {
        match (self.vocab.id(left), self.vocab.id(right)) {
            (Some(u), Some(v)) => self.bigrams.get(&(u, v)).copied().unwrap_or(0),
            _ => 0,
        }
    }

    fn count(&self, u: Option<usize>, v: Option<usize>) -> f64 {
        match (u, v) {
            (Some(u), Some(v)) => self.bigrams.get(&(u, v)).copied().unwrap_or(0) as f64,
            _ => 0.0,
        }
    }
}

fn check_position(tokens: &[String], position: usize) -> Result<()> {
    if position == 0 || position + 1 >= tokens.len() {
        return Err(Error::invalid(format!(
            "position {position} is not an interior position of a {}-token sequence",
            tokens.len()
        )));
    }
    Ok(())
}

impl ConditionalModel for ToyScorer {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn distribution(&self, tokens: &[String], position: usize) -> Result<Vec<f64>> {
        check_position(tokens, position)?;
        let left = self.vocab.id(&tokens[position - 1]);
        let right = self.vocab.id(&tokens[position + 1]);
        let mut dist = vec![0.0; self.vocab.len()];
        for &w in &self.content {
            dist[w] = (self.count(left, Some(w)) + self.alpha)
                * (self.count(Some(w), right) + self.alpha);
        }
        let total: f64 = dist.iter().sum();
        for p in &mut dist {
            *p /= total;
        }
        Ok(dist)
    }
}

/// Every listed token equally likely, whatever the context.
#[derive(Debug, Clone)]
pub struct UniformScorer {
    vocab: Vocabulary,
    content: usize,
}

impl UniformScorer {
    pub fn new<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let words: Vec<String> = tokens
            .into_iter()
            .map(Into::into)
            .filter(|t| !is_special(t))
            .collect();
        let vocab = Vocabulary::new([BOS.to_string(), EOS.to_string()].into_iter().chain(words));
        let content = vocab.len() - 2;
        if content == 0 {
            return Err(Error::invalid("uniform scorer needs at least one token"));
        }
        Ok(Self { vocab, content })
    }
}

impl ConditionalModel for UniformScorer {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn distribution(&self, tokens: &[String], position: usize) -> Result<Vec<f64>> {
        check_position(tokens, position)?;
        let p = 1.0 / self.content as f64;
        let mut dist = vec![p; self.vocab.len()];
        dist[0] = 0.0;
        dist[1] = 0.0;
        Ok(dist)
    }
}
