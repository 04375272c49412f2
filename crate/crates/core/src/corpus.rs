//! Tweet records, the collection schedule and query, the API-client
//! contract with its offline mock, corpus files, and test-set carving.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Duration, SecondsFormat, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prng::SplitMix64;
use crate::temporal::Quarter;

/// One time-stamped tweet with author metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tweet {
    #[serde(with = "id_string")]
    pub id: u64,
    pub text: String,
    #[serde(with = "rfc3339_millis")]
    pub created_at: DateTime<Utc>,
    pub author_id: String,
    #[serde(default)]
    pub author_verified: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author_username: Option<String>,
}

impl Tweet {
    pub fn new(
        id: u64,
        text: impl Into<String>,
        created_at: DateTime<Utc>,
        author_id: impl Into<String>,
    ) -> Self {
        Self {
            id,
            text: text.into(),
            created_at,
            author_id: author_id.into(),
            author_verified: false,
            author_username: None,
        }
    }
}

/// Formats an instant as RFC 3339 with milliseconds and a `Z` suffix.
pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| Error::data(format!("bad timestamp {s:?}: {e}")))
}

mod id_string {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(id: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(id)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        s.parse()
            .map_err(|_| de::Error::custom(format!("id {s:?} is not a decimal u64")))
    }
}

mod rfc3339_millis {
    use chrono::{DateTime, Utc};
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format_timestamp(ts))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_timestamp(&s).map_err(de::Error::custom)
    }
}

/// Half-open UTC interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Period {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl Period {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.start <= t && t < self.end
    }
}

/// Evenly spaced sampling instants over a period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingSchedule {
    pub period: Period,
    pub slot_interval: Duration,
    pub tweets_per_slot: usize,
    slots: Vec<DateTime<Utc>>,
}

impl SamplingSchedule {
    pub fn slots(&self) -> &[DateTime<Utc>] {
        &self.slots
    }

    /// Window `[slot, slot + interval)` of the i-th slot.
    pub fn window(&self, i: usize) -> Period {
        let s = self.slots[i];
        Period::new(s, s + self.slot_interval)
    }
}

/// Slots tile `period` from its start, one every `slot_interval`; a trailing
/// partial slot is dropped. An empty period (`start == end`) has no slots.
pub fn build_sampling_schedule(
    period: Period,
    slot_interval: Duration,
    tweets_per_slot: usize,
) -> Result<SamplingSchedule> {
    if period.end < period.start {
        return Err(Error::invalid("period end precedes its start"));
    }
    if slot_interval <= Duration::zero() {
        return Err(Error::invalid("slot interval must be positive"));
    }
    if tweets_per_slot == 0 {
        return Err(Error::invalid("tweets_per_slot must be positive"));
    }
    let span = (period.end - period.start).num_milliseconds();
    let step = slot_interval.num_milliseconds();
    if step == 0 {
        return Err(Error::invalid("slot interval below one millisecond"));
    }
    let count = (span / step) as usize;
    let slots = (0..count)
        .map(|i| period.start + slot_interval * i as i32)
        .collect();
    Ok(SamplingSchedule {
        period,
        slot_interval,
        tweets_per_slot,
        slots,
    })
}

/// The ten most frequent English words, used as the catch-all query.
pub const DEFAULT_STOPWORDS: [&str; 10] = [
    "the", "of", "and", "to", "a", "in", "for", "is", "on", "that",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuerySpec {
    pub stopwords: Vec<String>,
    pub language: String,
    pub exclude_retweets: bool,
    pub exclude_quotes: bool,
    pub exclude_links: bool,
    pub exclude_media: bool,
    pub exclude_ads: bool,
}

impl Default for QuerySpec {
    fn default() -> Self {
        Self {
            stopwords: DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect(),
            language: "en".into(),
            exclude_retweets: true,
            exclude_quotes: true,
            exclude_links: true,
            exclude_media: true,
            exclude_ads: true,
        }
    }
}

/// Renders the search query.
///
/// Layout: `(<w1> OR <w2> ...) lang:<language>` followed by the enabled
/// negations in this fixed order: `-is:retweet -is:quote -has:links
/// -has:media -is:ad`.
pub fn build_query(spec: &QuerySpec) -> Result<String> {
    if spec.stopwords.is_empty() {
        return Err(Error::invalid("stopword list is empty"));
    }
    if spec.stopwords.iter().any(|w| w.trim().is_empty()) {
        return Err(Error::invalid("blank stopword"));
    }
    let mut q = format!("({}) lang:{}", spec.stopwords.join(" OR "), spec.language);
    let flags = [
        (spec.exclude_retweets, "-is:retweet"),
        (spec.exclude_quotes, "-is:quote"),
        (spec.exclude_links, "-has:links"),
        (spec.exclude_media, "-has:media"),
        (spec.exclude_ads, "-is:ad"),
    ];
    for (on, clause) in flags {
        if on {
            q.push(' ');
            q.push_str(clause);
        }
    }
    Ok(q)
}

/// Parameters of one search request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchRequest<'a> {
    pub query: &'a str,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub max_results: usize,
}

/// A tweet-search endpoint returning the raw JSON payload.
///
/// The payload follows the v2 search shape: `{"data": [{"id", "text",
/// "created_at", "author_id"}], "includes": {"users": [{"id", "username",
/// "verified"}]}}`.
pub trait ApiClient: Send + Sync {
    fn search(&self, request: &SearchRequest<'_>) -> Result<String>;
}

#[derive(Deserialize)]
struct Payload {
    #[serde(default)]
    data: Vec<PayloadTweet>,
    #[serde(default)]
    includes: Option<Includes>,
}

#[derive(Deserialize)]
struct PayloadTweet {
    id: String,
    text: String,
    created_at: String,
    author_id: String,
}

#[derive(Deserialize)]
struct Includes {
    #[serde(default)]
    users: Vec<PayloadUser>,
}

#[derive(Deserialize)]
struct PayloadUser {
    id: String,
    username: String,
    #[serde(default)]
    verified: bool,
}

/// Fetches up to `max_results` tweets created inside `window`.
///
/// Transport errors from the client come back with the slot attached. A
/// payload that does not parse, or that holds tweets outside the window, is a
/// data error.
pub fn fetch_window(
    client: &dyn ApiClient,
    query: &str,
    window: Period,
    max_results: usize,
) -> Result<Vec<Tweet>> {
    if max_results == 0 {
        return Ok(Vec::new());
    }
    let slot = format_timestamp(&window.start);
    let req = SearchRequest {
        query,
        start: window.start,
        end: window.end,
        max_results,
    };
    let body = client
        .search(&req)
        .map_err(|e| e.with_context(format!("slot {slot}")))?;
    let payload: Payload = serde_json::from_str(&body)
        .map_err(|e| Error::data(format!("slot {slot}: malformed payload: {e}")))?;
    let users: BTreeMap<String, PayloadUser> = payload
        .includes
        .map(|i| i.users.into_iter().map(|u| (u.id.clone(), u)).collect())
        .unwrap_or_default();
    let mut out = Vec::with_capacity(payload.data.len().min(max_results));
    for raw in payload.data.into_iter().take(max_results) {
        let id = raw
            .id
            .parse()
            .map_err(|_| Error::data(format!("slot {slot}: bad tweet id {:?}", raw.id)))?;
        let created_at = parse_timestamp(&raw.created_at)?;
        if !window.contains(created_at) {
            return Err(Error::data(format!(
                "slot {slot}: tweet {id} created at {} is outside the window",
                raw.created_at
            )));
        }
        let user = users.get(&raw.author_id);
        out.push(Tweet {
            id,
            text: raw.text,
            created_at,
            author_id: raw.author_id,
            author_verified: user.map(|u| u.verified).unwrap_or(false),
            author_username: user.map(|u| u.username.clone()),
        });
    }
    Ok(out)
}

/// Fetches every slot of a schedule. Slots are fetched in parallel and merged
/// in slot order.
pub fn collect(
    client: &dyn ApiClient,
    query: &str,
    schedule: &SamplingSchedule,
) -> Result<Vec<Tweet>> {
    let per_slot: Vec<Result<Vec<Tweet>>> = (0..schedule.slots().len())
        .into_par_iter()
        .map(|i| fetch_window(client, query, schedule.window(i), schedule.tweets_per_slot))
        .collect();
    let mut out = Vec::new();
    for batch in per_slot {
        out.extend(batch?);
    }
    Ok(out)
}

/// Offline stand-in for the search API: synthesizes tweets from a seeded
/// generator. Output depends only on the seed, vocabulary and request.
#[derive(Debug, Clone)]
pub struct MockClient {
    pub seed: u64,
    pub vocabulary: Vec<String>,
    pub authors: u64,
    /// Simulates an unreachable endpoint.
    pub unreachable: bool,
}

const MOCK_VOCABULARY: &[&str] = &[
    "the",
    "of",
    "and",
    "to",
    "a",
    "in",
    "for",
    "is",
    "on",
    "that",
    "so",
    "glad",
    "vaccinated",
    "game",
    "tonight",
    "watching",
    "looking",
    "forward",
    "mask",
    "bring",
    "keep",
    "forgetting",
    "today",
    "love",
    "new",
    "season",
    "vote",
    "election",
    "lockdown",
    "home",
    "work",
    "coffee",
];

impl MockClient {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            vocabulary: MOCK_VOCABULARY.iter().map(|s| s.to_string()).collect(),
            authors: 500,
            unreachable: false,
        }
    }

    pub fn with_vocabulary(mut self, vocabulary: Vec<String>) -> Self {
        self.vocabulary = vocabulary;
        self
    }

    /// The tweets this client returns for a window, before serialization.
    pub fn generate(
        &self,
        start: DateTime<Utc>,
        end: DateTime<Utc>,
        max_results: usize,
    ) -> Vec<Tweet> {
        let span = (end - start).num_milliseconds().max(0) as u64;
        if span == 0 || self.vocabulary.is_empty() {
            return Vec::new();
        }
        let label = format_timestamp(&start);
        let mut rng = SplitMix64::derive(self.seed, &label);
        let mut tweets: Vec<Tweet> = (0..max_results)
            .map(|_| {
                let offset = rng.below(span) as i64;
                let len = 3 + rng.below(8) as usize;
                let words: Vec<&str> = (0..len)
                    .map(|_| {
                        self.vocabulary[rng.below(self.vocabulary.len() as u64) as usize].as_str()
                    })
                    .collect();
                let author = rng.below(self.authors.max(1));
                Tweet {
                    // 63-bit ids keep them positive in every downstream tool.
                    id: rng.next_u64() >> 1,
                    text: words.join(" "),
                    created_at: start + Duration::milliseconds(offset),
                    author_id: format!("{}", 1000 + author),
                    author_verified: author.is_multiple_of(97),
                    author_username: Some(format!("user{author}")),
                }
            })
            .collect();
        tweets.sort_by_key(|t| (t.created_at, t.id));
        tweets
    }
}

impl ApiClient for MockClient {
    fn search(&self, request: &SearchRequest<'_>) -> Result<String> {
        if self.unreachable {
            return Err(Error::Transport {
                context: "mock client".into(),
                message: "endpoint unreachable".into(),
                retryable: true,
            });
        }
        let tweets = self.generate(request.start, request.end, request.max_results);
        let data: Vec<serde_json::Value> = tweets
            .iter()
            .map(|t| {
                serde_json::json!({
                    "id": t.id.to_string(),
                    "text": t.text,
                    "created_at": format_timestamp(&t.created_at),
                    "author_id": t.author_id,
                })
            })
            .collect();
        let mut users: BTreeMap<&str, serde_json::Value> = BTreeMap::new();
        for t in &tweets {
            users.entry(t.author_id.as_str()).or_insert_with(|| {
                serde_json::json!({
                    "id": t.author_id,
                    "username": t.author_username,
                    "verified": t.author_verified,
                })
            });
        }
        let users: Vec<_> = users.into_values().collect();
        Ok(serde_json::json!({ "data": data, "includes": { "users": users } }).to_string())
    }
}

/// Writes one JSON record per line; returns the number written.
pub fn write_corpus<'a, I>(tweets: I, path: &Path) -> Result<usize>
where
    I: IntoIterator<Item = &'a Tweet>,
{
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let n = write_corpus_to(tweets, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(n)
}

pub fn write_corpus_to<'a, I, W>(tweets: I, w: &mut W) -> std::io::Result<usize>
where
    I: IntoIterator<Item = &'a Tweet>,
    W: Write,
{
    let mut n = 0;
    for t in tweets {
        serde_json::to_writer(&mut *w, t)?;
        w.write_all(b"\n")?;
        n += 1;
    }
    Ok(n)
}

/// Streaming reader over a corpus file.
///
/// Yields one tweet per non-blank line. Parse failures, blank texts and
/// repeated ids are data errors carrying the 1-based line number.
pub struct CorpusReader<R> {
    lines: std::io::Lines<R>,
    line: usize,
    seen: HashSet<u64>,
}

impl<R: BufRead> CorpusReader<R> {
    pub fn new(reader: R) -> Self {
        Self {
            lines: reader.lines(),
            line: 0,
            seen: HashSet::new(),
        }
    }
}

impl<R: BufRead> Iterator for CorpusReader<R> {
    type Item = Result<Tweet>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let raw = self.lines.next()?;
            self.line += 1;
            let line = match raw {
                Ok(l) => l,
                Err(e) => return Some(Err(Error::data_at(self.line, e.to_string()))),
            };
            if line.trim().is_empty() {
                continue;
            }
            let tweet: Tweet = match serde_json::from_str(&line) {
                Ok(t) => t,
                Err(e) => return Some(Err(Error::data_at(self.line, e.to_string()))),
            };
            if tweet.text.trim().is_empty() {
                return Some(Err(Error::data_at(
                    self.line,
                    format!("tweet {} has empty text", tweet.id),
                )));
            }
            if !self.seen.insert(tweet.id) {
                return Some(Err(Error::data_at(
                    self.line,
                    format!("duplicate tweet id {}", tweet.id),
                )));
            }
            return Some(Ok(tweet));
        }
    }
}

pub fn open_corpus(path: &Path) -> Result<CorpusReader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(CorpusReader::new(BufReader::new(file)))
}

pub fn read_corpus(path: &Path) -> Result<Vec<Tweet>> {
    open_corpus(path)?.collect()
}

/// Train and test tweets of one quarter.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QuarterSplit {
    pub train: Vec<Tweet>,
    pub test: Vec<Tweet>,
}

/// Carves a held-out test set of `min(per_quarter_size, population)` tweets
/// out of every quarter.
///
/// Each quarter draws from its own SplitMix64 stream derived from `seed` and
/// the quarter label, so adding tweets to one quarter does not reshuffle the
/// others. Both halves keep corpus order.
pub fn split_test_set<I>(
    corpus: I,
    per_quarter_size: usize,
    seed: u64,
) -> Result<BTreeMap<Quarter, QuarterSplit>>
where
    I: IntoIterator<Item = Result<Tweet>>,
{
    if per_quarter_size == 0 {
        return Err(Error::invalid("per_quarter_size must be positive"));
    }
    let mut by_quarter: BTreeMap<Quarter, Vec<Tweet>> = BTreeMap::new();
    for t in corpus {
        let t = t?;
        by_quarter
            .entry(Quarter::of(t.created_at))
            .or_default()
            .push(t);
    }
    let mut out = BTreeMap::new();
    for (q, tweets) in by_quarter {
        let mut rng = SplitMix64::derive(seed, &q.to_string());
        let mut chosen = vec![false; tweets.len()];
        for i in rng.sample_indices(tweets.len(), per_quarter_size) {
            chosen[i] = true;
        }
        let mut split = QuarterSplit::default();
        for (t, test) in tweets.into_iter().zip(chosen) {
            if test {
                split.test.push(t);
            } else {
                split.train.push(t);
            }
        }
        out.insert(q, split);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> DateTime<Utc> {
        parse_timestamp(s).unwrap()
    }

    #[test]
    fn hour_has_twelve_five_minute_slots() {
        let p = Period::new(ts("2020-01-01T00:00:00Z"), ts("2020-01-01T01:00:00Z"));
        let s = build_sampling_schedule(p, Duration::minutes(5), 10).unwrap();
        assert_eq!(s.slots().len(), 12);
        assert_eq!(s.slots()[0], ts("2020-01-01T00:00:00Z"));
        assert_eq!(s.slots()[11], ts("2020-01-01T00:55:00Z"));
    }

    #[test]
    fn ninety_day_quarter_slot_count() {
        // Independent count: walk the clock in 5-minute steps.
        let start = ts("2020-01-01T00:00:00Z");
        let end = ts("2020-03-31T00:00:00Z");
        let mut brute = 0;
        let mut t = start;
        while t + Duration::minutes(5) <= end {
            brute += 1;
            t += Duration::minutes(5);
        }
        assert_eq!(brute, 25_920);
        let s = build_sampling_schedule(Period::new(start, end), Duration::minutes(5), 1).unwrap();
        assert_eq!(s.slots().len(), brute);
    }

    #[test]
    fn empty_and_inverted_periods() {
        let t = ts("2020-01-01T00:00:00Z");
        let s = build_sampling_schedule(Period::new(t, t), Duration::minutes(5), 1).unwrap();
        assert!(s.slots().is_empty());
        let inv = build_sampling_schedule(
            Period::new(t, t - Duration::hours(1)),
            Duration::minutes(5),
            1,
        );
        assert!(matches!(inv, Err(Error::InvalidArgument(_))));
        let zero =
            build_sampling_schedule(Period::new(t, t + Duration::hours(1)), Duration::zero(), 1);
        assert!(zero.is_err());
    }

    #[test]
    fn query_rendering() {
        let spec = QuerySpec {
            stopwords: vec!["the".into(), "of".into()],
            ..Default::default()
        };
        assert_eq!(
            build_query(&spec).unwrap(),
            "(the OR of) lang:en -is:retweet -is:quote -has:links -has:media -is:ad"
        );
        let spec = QuerySpec {
            stopwords: vec!["a".into()],
            exclude_quotes: false,
            exclude_links: false,
            exclude_media: false,
            exclude_ads: false,
            ..Default::default()
        };
        assert_eq!(build_query(&spec).unwrap(), "(a) lang:en -is:retweet");
        let empty = QuerySpec {
            stopwords: vec![],
            ..Default::default()
        };
        assert!(matches!(
            build_query(&empty),
            Err(Error::InvalidArgument(_))
        ));
        assert_eq!(QuerySpec::default().stopwords.len(), 10);
    }

    #[test]
    fn mock_fetch_respects_window_and_limit() {
        let client = MockClient::new(7);
        let w = Period::new(ts("2021-02-01T23:10:00Z"), ts("2021-02-01T23:15:00Z"));
        let got = fetch_window(&client, "q", w, 10).unwrap();
        assert_eq!(got.len(), 10);
        assert!(got.iter().all(|t| w.contains(t.created_at)));
        // Mirrors the generator directly.
        let expected = client.generate(w.start, w.end, 10);
        assert_eq!(got, expected);
        assert!(fetch_window(&client, "q", w, 0).unwrap().is_empty());
    }

    #[test]
    fn unreachable_client_is_retryable_with_slot() {
        let client = MockClient {
            unreachable: true,
            ..MockClient::new(1)
        };
        let w = Period::new(ts("2021-02-01T23:10:00Z"), ts("2021-02-01T23:15:00Z"));
        let err = fetch_window(&client, "q", w, 5).unwrap_err();
        assert!(err.is_retryable());
        assert!(
            err.to_string().contains("2021-02-01T23:10:00.000Z"),
            "{err}"
        );
    }

    struct Canned(&'static str);
    impl ApiClient for Canned {
        fn search(&self, _: &SearchRequest<'_>) -> Result<String> {
            Ok(self.0.to_string())
        }
    }

    #[test]
    fn malformed_and_out_of_window_payloads_are_data_errors() {
        let w = Period::new(ts("2021-02-01T23:10:00Z"), ts("2021-02-01T23:15:00Z"));
        assert!(matches!(
            fetch_window(&Canned("{not json"), "q", w, 5),
            Err(Error::Data { .. })
        ));
        let outside = Canned(
            r#"{"data":[{"id":"1","text":"x","created_at":"2021-02-01T23:20:00.000Z","author_id":"9"}]}"#,
        );
        assert!(matches!(
            fetch_window(&outside, "q", w, 5),
            Err(Error::Data { .. })
        ));
    }

    #[test]
    fn corpus_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let mut tweets = vec![
            Tweet::new(1, "hello world", ts("2021-02-01T23:14:26.000Z"), "a"),
            Tweet::new(2, "second", ts("2021-02-02T00:00:00.123Z"), "b"),
            Tweet::new(3, "third", ts("2021-03-02T00:00:00Z"), "c"),
        ];
        tweets[1].author_verified = true;
        tweets[1].author_username = Some("bee".into());
        assert_eq!(write_corpus(&tweets, &path).unwrap(), 3);
        assert_eq!(read_corpus(&path).unwrap(), tweets);

        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(
            r#"{"id":"1","text":"hello world","created_at":"2021-02-01T23:14:26.000Z""#
        ));

        write_corpus(&[], &path).unwrap();
        assert!(read_corpus(&path).unwrap().is_empty());

        std::fs::write(
            &path,
            "{\"id\":\"1\",\"text\":\"ok\",\"created_at\":\"2021-01-01T00:00:00.000Z\",\"author_id\":\"a\"}\n\
             {\"id\":\"2\",\"text\":\"bad\",\"created_at\":\"yesterday\",\"author_id\":\"a\"}\n",
        )
        .unwrap();
        match read_corpus(&path) {
            Err(Error::Data { line: Some(2), .. }) => {}
            other => panic!("expected data error at line 2, got {other:?}"),
        }
    }

    #[test]
    fn split_counts_and_clamp() {
        let base = ts("2020-01-01T00:00:00Z");
        let tweets: Vec<Tweet> = (0..1000)
            .map(|i| Tweet::new(i, format!("t{i}"), base + Duration::minutes(i as i64), "a"))
            .collect();
        let splits = split_test_set(tweets.iter().cloned().map(Ok), 100, 42).unwrap();
        let s = &splits[&"2020-Q1".parse().unwrap()];
        assert_eq!((s.test.len(), s.train.len()), (100, 900));
        let test_ids: HashSet<u64> = s.test.iter().map(|t| t.id).collect();
        assert!(s.train.iter().all(|t| !test_ids.contains(&t.id)));

        let all = split_test_set(tweets.iter().cloned().map(Ok), 5000, 42).unwrap();
        let s = &all[&"2020-Q1".parse().unwrap()];
        assert_eq!((s.test.len(), s.train.len()), (1000, 0));

        let again = split_test_set(tweets.iter().cloned().map(Ok), 100, 42).unwrap();
        assert_eq!(again, splits);
    }
}
