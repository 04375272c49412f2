//! Corpus cleaning: heavy-poster removal, text normalization, MinHash
//! near-duplicate removal and mention masking.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::OnceLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::Tweet;
use crate::error::{Error, Result};
use crate::prng::fnv1a64;

/// Number of hash permutations in a signature.
pub const NUM_PERMUTATIONS: usize = 16;

/// Mersenne prime 2^61 - 1, the modulus of the hash family.
const MERSENNE_61: u64 = (1 << 61) - 1;

/// `(a, b)` coefficients of `h_i(x) = (a*x + b) mod (2^61 - 1)`.
///
/// Drawn once from SplitMix64 seeded with `0x74696d656c6d7321`; never change
/// them, stored signatures depend on these values.
pub const PERMUTATION_SEEDS: [(u64, u64); NUM_PERMUTATIONS] = [
    (0x0e4391006e1666ed, 0x0f32070d98c27389),
    (0x0c2a620b3628b907, 0x0925d12254708bdc),
    (0x1204435941e0b004, 0x15f1fa7ab9671ab3),
    (0x0e9932c4c83ea428, 0x0d4a70364c610e6b),
    (0x06008624f5fd8ec5, 0x07fddcd1e77110c9),
    (0x0972d2d093708d34, 0x0c7d59d0a3bd0810),
    (0x12a0f7f5a9e9b05e, 0x1d0f0b79ac6a7524),
    (0x0602784592efdac8, 0x1e5c99ae0cffb62a),
    (0x0261b18279ed806c, 0x10a4122d190a8c38),
    (0x14dc16ef7bf0f98c, 0x176b367e2ae0d43d),
    (0x094df31e09bfcf4a, 0x0bb137c51007920c),
    (0x1450f64ecd268c8e, 0x09e88eda4d520fe8),
    (0x18b6204328cd43cd, 0x14cb9206a367b1b9),
    (0x0fa7c2cd8ae0ac2a, 0x0da65fb4eebe9db6),
    (0x1ae3b470828e92e6, 0x0f205e877c028a51),
    (0x1fc8d71fb9bd27f8, 0x16902c348c9ecdb0),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MinHashSignature(pub [u64; NUM_PERMUTATIONS]);

impl MinHashSignature {
    /// Signature of the empty set.
    pub const EMPTY: Self = Self([u64::MAX; NUM_PERMUTATIONS]);

    pub fn matching_positions(&self, other: &Self) -> usize {
        self.0
            .iter()
            .zip(other.0.iter())
            .filter(|(a, b)| a == b)
            .count()
    }

    /// Fraction of positions on which the two signatures agree; an estimate
    /// of the Jaccard similarity of the underlying sets.
    pub fn similarity(&self, other: &Self) -> f64 {
        self.matching_positions(other) as f64 / NUM_PERMUTATIONS as f64
    }
}

/// Lowercases, deletes every Unicode punctuation character (category P),
/// collapses whitespace runs to one space and trims.
pub fn normalize_text(text: &str) -> String {
    static PUNCT: OnceLock<Regex> = OnceLock::new();
    let punct = PUNCT.get_or_init(|| Regex::new(r"\p{P}").expect("valid regex"));
    let lowered = text.to_lowercase();
    let stripped = punct.replace_all(&lowered, "");
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Word n-grams of a normalized text, as a set.
///
/// Texts shorter than `n` words contribute one shingle holding all of them.
pub fn shingles(normalized: &str, n: usize) -> HashSet<String> {
    let words: Vec<&str> = normalized.split(' ').filter(|w| !w.is_empty()).collect();
    let n = n.max(1);
    if words.is_empty() {
        return HashSet::new();
    }
    if words.len() <= n {
        return std::iter::once(words.join(" ")).collect();
    }
    words.windows(n).map(|w| w.join(" ")).collect()
}

fn permute(i: usize, x: u64) -> u64 {
    let (a, b) = PERMUTATION_SEEDS[i];
    ((a as u128 * x as u128 + b as u128) % MERSENNE_61 as u128) as u64
}

/// MinHash over an arbitrary set of byte strings.
pub fn minhash_of<I, S>(elements: I) -> MinHashSignature
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    let mut sig = MinHashSignature::EMPTY;
    for e in elements {
        let x = fnv1a64(e.as_ref()) % MERSENNE_61;
        for (i, slot) in sig.0.iter_mut().enumerate() {
            *slot = (*slot).min(permute(i, x));
        }
    }
    sig
}

/// Signature of the word-unigram set of an already normalized text.
pub fn minhash_signature(normalized: &str) -> MinHashSignature {
    minhash_signature_with(normalized, 1)
}

pub fn minhash_signature_with(normalized: &str, shingle_size: usize) -> MinHashSignature {
    minhash_of(shingles(normalized, shingle_size))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DedupConfig {
    pub shingle_size: usize,
    /// Two signatures are near-duplicates when at least this many positions
    /// agree. 16 means full equality.
    pub min_matching: usize,
}

impl Default for DedupConfig {
    fn default() -> Self {
        Self {
            shingle_size: 1,
            min_matching: NUM_PERMUTATIONS,
        }
    }
}

/// Keeps one tweet per near-duplicate group: the earliest by
/// `(created_at, id)`. Survivors stay in input order.
pub fn dedup(tweets: Vec<Tweet>) -> (Vec<Tweet>, usize) {
    dedup_with(tweets, &DedupConfig::default()).expect("default config is valid")
}

pub fn dedup_with(tweets: Vec<Tweet>, config: &DedupConfig) -> Result<(Vec<Tweet>, usize)> {
    if !(1..=NUM_PERMUTATIONS).contains(&config.min_matching) {
        return Err(Error::invalid(format!(
            "min_matching must be in 1..={NUM_PERMUTATIONS}, got {}",
            config.min_matching
        )));
    }
    let sigs: Vec<MinHashSignature> = tweets
        .par_iter()
        .map(|t| minhash_signature_with(&normalize_text(&t.text), config.shingle_size))
        .collect();

    // Visit tweets oldest first so the first member seen in a group survives.
    let mut order: Vec<usize> = (0..tweets.len()).collect();
    order.sort_by_key(|&i| (tweets[i].created_at, tweets[i].id));

    let mut keep = vec![false; tweets.len()];
    if config.min_matching == NUM_PERMUTATIONS {
        let mut seen: HashSet<MinHashSignature> = HashSet::with_capacity(tweets.len());
        for i in order {
            keep[i] = seen.insert(sigs[i]);
        }
    } else {
        let mut kept: Vec<MinHashSignature> = Vec::new();
        for i in order {
            if kept
                .iter()
                .all(|k| k.matching_positions(&sigs[i]) < config.min_matching)
            {
                kept.push(sigs[i]);
                keep[i] = true;
            }
        }
    }
    let before = tweets.len();
    let out: Vec<Tweet> = tweets
        .into_iter()
        .zip(keep)
        .filter_map(|(t, k)| k.then_some(t))
        .collect();
    let removed = before - out.len();
    Ok((out, removed))
}

/// Removes every tweet of the most active `ceil(percentile * authors)`
/// authors. Authors are ranked by descending post count, ties by ascending
/// `author_id`. Returns the kept tweets (order preserved), the number of
/// removed tweets, and the smallest post count among removed authors.
pub fn filter_top_users(tweets: Vec<Tweet>, percentile: f64) -> Result<(Vec<Tweet>, usize, usize)> {
    if !(percentile > 0.0 && percentile <= 1.0) {
        return Err(Error::invalid(format!(
            "percentile {percentile} not in (0, 1]"
        )));
    }
    if let Some(t) = tweets.iter().find(|t| t.author_id.is_empty()) {
        return Err(Error::invalid(format!("tweet {} has no author_id", t.id)));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &tweets {
        *counts.entry(t.author_id.as_str()).or_default() += 1;
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    // BTreeMap order already sorts ids ascending; a stable sort keeps that for ties.
    ranked.sort_by_key(|r| std::cmp::Reverse(r.1));
    // The epsilon keeps e.g. 0.07 * 100 = 7.000000000000001 from rounding up to 8.
    let cut = ((percentile * ranked.len() as f64) - 1e-9).ceil().max(0.0) as usize;
    let cut = cut.min(ranked.len());
    let threshold = ranked[..cut].last().map(|r| r.1).unwrap_or(0);
    let removed_authors: HashSet<String> = ranked[..cut].iter().map(|r| r.0.to_string()).collect();
    let before = tweets.len();
    let kept: Vec<Tweet> = tweets
        .into_iter()
        .filter(|t| !removed_authors.contains(&t.author_id))
        .collect();
    let removed = before - kept.len();
    Ok((kept, removed, threshold))
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Replaces `@handle` mentions with `@user` unless the handle is verified
/// (compared case-insensitively).
///
/// A mention is `@` followed by 1-15 handle characters (`[A-Za-z0-9_]`),
/// not preceded by a handle character or `@`, and not followed by another
/// handle character. Everything else is copied byte for byte.
pub fn mask_mentions(text: &str, verified: &HashSet<String>) -> String {
    let bytes = text.as_bytes();
    let mut out = String::with_capacity(text.len());
    let mut copied = 0;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'@' && (i == 0 || !(is_word_byte(bytes[i - 1]) || bytes[i - 1] == b'@')) {
            let start = i + 1;
            let mut end = start;
            while end < bytes.len() && is_word_byte(bytes[end]) {
                end += 1;
            }
            let len = end - start;
            if (1..=15).contains(&len) {
                let handle = &text[start..end];
                if !verified.contains(&handle.to_ascii_lowercase()) {
                    out.push_str(&text[copied..i]);
                    out.push_str("@user");
                    copied = end;
                }
            }
            i = end.max(i + 1);
            continue;
        }
        i += 1;
    }
    out.push_str(&text[copied..]);
    out
}

/// Lowercases a verified-handle list for [`mask_mentions`].
pub fn verified_set<I, S>(handles: I) -> HashSet<String>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    handles
        .into_iter()
        .map(|h| {
            h.as_ref()
                .trim()
                .trim_start_matches('@')
                .to_ascii_lowercase()
        })
        .filter(|h| !h.is_empty())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleaningConfig {
    pub user_percentile: f64,
    pub dedup: DedupConfig,
    /// Lowercased verified handles whose mentions stay visible.
    pub verified: HashSet<String>,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self {
            user_percentile: 0.01,
            dedup: DedupConfig::default(),
            verified: HashSet::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub input_count: usize,
    pub removed_by_user_filter: usize,
    pub removed_as_duplicates: usize,
    pub output_count: usize,
    pub top_user_threshold: usize,
}

/// User filter, then dedup, then mention masking.
///
/// Masking runs last so two tweets that differ only in which non-verified
/// account they mention are not merged into false duplicates. Authors whose
/// own handle is verified also keep their mentions elsewhere.
pub fn clean_pipeline(
    tweets: Vec<Tweet>,
    config: &CleaningConfig,
) -> Result<(Vec<Tweet>, CleaningReport)> {
    let input_count = tweets.len();
    if tweets.is_empty() {
        return Ok((tweets, CleaningReport::default()));
    }
    let (kept, removed_by_user_filter, top_user_threshold) =
        filter_top_users(tweets, config.user_percentile)?;
    let (mut kept, removed_as_duplicates) = dedup_with(kept, &config.dedup)?;
    let mut verified = config.verified.clone();
    verified.extend(
        kept.iter()
            .filter(|t| t.author_verified)
            .filter_map(|t| t.author_username.as_deref())
            .map(str::to_ascii_lowercase),
    );
    kept.par_iter_mut()
        .for_each(|t| t.text = mask_mentions(&t.text, &verified));
    let report = CleaningReport {
        input_count,
        removed_by_user_filter,
        removed_as_duplicates,
        output_count: kept.len(),
        top_user_threshold,
    };
    debug_assert_eq!(
        report.input_count,
        report.removed_by_user_filter + report.removed_as_duplicates + report.output_count
    );
    Ok((kept, report))
}

/// Groups tweet indices by signature. Used for diagnostics.
pub fn signature_groups(tweets: &[Tweet]) -> HashMap<MinHashSignature, Vec<usize>> {
    let mut groups: HashMap<MinHashSignature, Vec<usize>> = HashMap::new();
    for (i, t) in tweets.iter().enumerate() {
        groups
            .entry(minhash_signature(&normalize_text(&t.text)))
            .or_default()
            .push(i);
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, TimeZone, Utc};
    use proptest::prelude::*;

    fn tweet(id: u64, text: &str, minute: i64, author: &str) -> Tweet {
        let base = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        Tweet::new(id, text, base + Duration::minutes(minute), author)
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_text("Hello, WORLD!!"), "hello world");
        assert_eq!(normalize_text("a  b"), "a b");
        assert_eq!(normalize_text("…"), "");
        assert_eq!(
            normalize_text("  «Ünïcode» \u{2014} test¿ "),
            "ünïcode test"
        );
    }

    #[test]
    fn signature_set_semantics() {
        assert_eq!(minhash_signature("a b"), minhash_signature("b a"));
        assert_eq!(minhash_signature("a b a"), minhash_signature("a b"));
        assert_eq!(
            minhash_signature(&normalize_text("Hello, world")),
            minhash_signature(&normalize_text("hello WORLD !"))
        );
        assert_eq!(minhash_signature(""), MinHashSignature::EMPTY);
        assert_ne!(minhash_signature("a"), minhash_signature("b"));
    }

    #[test]
    fn bigram_shingles() {
        let s = shingles("a b c", 2);
        assert_eq!(s.len(), 2);
        assert!(s.contains("a b") && s.contains("b c"));
        assert_eq!(shingles("a", 3).len(), 1);
        assert_ne!(
            minhash_signature_with("a b c", 2),
            minhash_signature_with("c b a", 2)
        );
    }

    #[test]
    fn top_user_filter_examples() {
        let mut tweets = Vec::new();
        for i in 0..50 {
            tweets.push(tweet(i, &format!("bot {i}"), i as i64, "bot"));
        }
        for a in 0..99u64 {
            tweets.push(tweet(1000 + a, "hi", a as i64, &format!("u{a:03}")));
        }
        let (kept, removed, threshold) = filter_top_users(tweets.clone(), 0.01).unwrap();
        assert_eq!((kept.len(), removed, threshold), (99, 50, 50));
        assert!(kept.iter().all(|t| t.author_id != "bot"));

        let solo = vec![tweet(1, "x", 0, "a"), tweet(2, "y", 1, "a")];
        let (kept, removed, _) = filter_top_users(solo, 0.01).unwrap();
        assert!(kept.is_empty());
        assert_eq!(removed, 2);

        let (kept, _, _) = filter_top_users(tweets.clone(), 1.0).unwrap();
        assert!(kept.is_empty());

        assert!(filter_top_users(tweets.clone(), 0.0).is_err());
        assert!(filter_top_users(tweets, 1.5).is_err());
    }

    #[test]
    fn top_user_ties_break_by_author_id() {
        let tweets = vec![
            tweet(1, "x", 0, "b"),
            tweet(2, "y", 1, "a"),
            tweet(3, "z", 2, "c"),
        ];
        // ceil(0.34 * 3) = 2 authors: all tie at one post, so "a" and "b" go.
        let (kept, _, _) = filter_top_users(tweets, 0.34).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].author_id, "c");
    }

    #[test]
    fn dedup_examples() {
        let (kept, removed) = dedup(vec![
            tweet(2, "same text", 5, "a"),
            tweet(1, "same text", 1, "b"),
        ]);
        assert_eq!(removed, 1);
        assert_eq!(kept[0].id, 1);

        let (kept, removed) = dedup(vec![
            tweet(1, "Check THIS out!", 0, "a"),
            tweet(2, "check this out", 1, "b"),
        ]);
        assert_eq!((kept.len(), removed), (1, 1));
        assert_eq!(kept[0].id, 1);

        // Same timestamp: smaller id survives.
        let (kept, _) = dedup(vec![tweet(9, "x y", 0, "a"), tweet(4, "X Y", 0, "b")]);
        assert_eq!(kept[0].id, 4);
    }

    #[test]
    fn threshold_mode_merges_close_signatures() {
        let a = tweet(
            1,
            "the quick brown fox jumps over the lazy dog today",
            0,
            "a",
        );
        let b = tweet(
            2,
            "the quick brown fox jumps over the lazy dog morning",
            1,
            "b",
        );
        let strict = dedup(vec![a.clone(), b.clone()]).0;
        assert_eq!(strict.len(), 2);
        let cfg = DedupConfig {
            min_matching: 8,
            ..Default::default()
        };
        let sim = minhash_signature(&normalize_text(&a.text))
            .matching_positions(&minhash_signature(&normalize_text(&b.text)));
        let loose = dedup_with(vec![a, b], &cfg).unwrap().0;
        assert_eq!(sim, 13);
        assert_eq!(loose.len(), 1);
        assert!(dedup_with(
            vec![],
            &DedupConfig {
                min_matching: 0,
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn mention_masking() {
        let verified = verified_set(["BarackObama"]);
        assert_eq!(
            mask_mentions("@john hi @BarackObama", &verified),
            "@user hi @BarackObama"
        );
        assert_eq!(
            mask_mentions("email me at a@b.c", &verified),
            "email me at a@b.c"
        );
        assert_eq!(mask_mentions("@JOHN", &verified_set(["john"])), "@JOHN");
        assert_eq!(mask_mentions("@john, @jane!", &verified), "@user, @user!");
        assert_eq!(mask_mentions("@", &verified), "@");
        assert_eq!(mask_mentions("@@john", &verified), "@@john");
        assert_eq!(
            mask_mentions("@abcdefghijklmnop", &verified),
            "@abcdefghijklmnop"
        );
        assert_eq!(mask_mentions("(@x) ünï @y", &verified), "(@user) ünï @user");
    }

    #[test]
    fn pipeline_empty_input() {
        let (out, report) = clean_pipeline(vec![], &CleaningConfig::default()).unwrap();
        assert!(out.is_empty());
        assert_eq!(report, CleaningReport::default());
    }

    #[test]
    fn pipeline_matches_straight_line_application() {
        // 100 authors; "dom" posts 10 times, everyone else once. Three of the
        // singletons are near-duplicates of other tweets.
        let mut tweets = Vec::new();
        for i in 0..10 {
            tweets.push(tweet(i, &format!("dominant post {i}"), i as i64, "dom"));
        }
        for a in 0..99u64 {
            let text = match a {
                10 => "Good morning @alice!".to_string(),
                11 => "good MORNING @alice".to_string(),
                12 => "Good morning, @alice.".to_string(),
                20 => "lunch time".to_string(),
                21 => "LUNCH time!!".to_string(),
                _ => format!("original thought number {a}"),
            };
            tweets.push(tweet(100 + a, &text, 100 + a as i64, &format!("u{a:03}")));
        }
        let (out, report) = clean_pipeline(tweets.clone(), &CleaningConfig::default()).unwrap();

        // Straight-line oracle.
        let no_dom: Vec<&Tweet> = tweets.iter().filter(|t| t.author_id != "dom").collect();
        let mut seen = HashSet::new();
        let survivors: Vec<&Tweet> = no_dom
            .iter()
            .copied()
            .filter(|t| {
                let mut words: Vec<String> = normalize_text(&t.text)
                    .split(' ')
                    .map(String::from)
                    .collect();
                words.sort();
                words.dedup();
                seen.insert(words)
            })
            .collect();
        assert_eq!(report.input_count, 109);
        assert_eq!(report.removed_by_user_filter, 10);
        assert_eq!(report.removed_as_duplicates, 3);
        assert_eq!(report.output_count, survivors.len());
        assert_eq!(report.top_user_threshold, 10);
        assert_eq!(
            out.iter().map(|t| t.id).collect::<Vec<_>>(),
            survivors.iter().map(|t| t.id).collect::<Vec<_>>()
        );
        assert!(out.iter().any(|t| t.text == "Good morning @user!"));
    }

    proptest! {
        #[test]
        fn signature_ignores_order_and_multiplicity(words in prop::collection::vec("[a-z]{1,6}", 0..12), seed in any::<u64>()) {
            let mut shuffled = words.clone();
            shuffled.extend(words.iter().take((seed % 4) as usize).cloned());
            shuffled.reverse();
            prop_assert_eq!(minhash_signature(&words.join(" ")), minhash_signature(&shuffled.join(" ")));
        }

        #[test]
        fn masking_never_touches_other_bytes(text in "[ a-zA-Z@_.,!é]{0,40}") {
            let masked = mask_mentions(&text, &HashSet::new());
            // Undo the masking by deleting mention tokens from both sides.
            let strip = |s: &str| -> String {
                let re = Regex::new(r"@[A-Za-z0-9_]+").unwrap();
                re.replace_all(s, "").into_owned()
            };
            prop_assert_eq!(strip(&masked), strip(&text));
        }

        #[test]
        fn dedup_soundness_and_permutation_invariance(texts in prop::collection::vec("[abc]( [abc]){0,2}", 1..20), rot in 0usize..20) {
            let tweets: Vec<Tweet> = texts.iter().enumerate()
                .map(|(i, t)| tweet(i as u64, t, (i as i64 * 7) % 5, "a"))
                .collect();
            let (kept, _) = dedup(tweets.clone());
            let sigs: HashSet<_> = kept.iter().map(|t| minhash_signature(&normalize_text(&t.text))).collect();
            prop_assert_eq!(sigs.len(), kept.len());

            let mut rotated = tweets;
            let k = rot % rotated.len();
            rotated.rotate_left(k);
            let (kept2, _) = dedup(rotated);
            let mut a: Vec<u64> = kept.iter().map(|t| t.id).collect();
            let mut b: Vec<u64> = kept2.iter().map(|t| t.id).collect();
            a.sort_unstable();
            b.sort_unstable();
            prop_assert_eq!(a, b);
        }
    }
}
