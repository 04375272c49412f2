//! Quarters, the model registry, and time-aware model selection.

use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDate, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::Tweet;
use crate::error::{Error, Result};

/// A calendar quarter: Q1 = Jan-Mar, Q2 = Apr-Jun, Q3 = Jul-Sep, Q4 = Oct-Dec.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Quarter {
    year: i32,
    index: u8,
}

impl Quarter {
    pub fn new(year: i32, index: u8) -> Result<Self> {
        if !(1..=4).contains(&index) {
            return Err(Error::invalid(format!(
                "quarter index {index} not in 1..=4"
            )));
        }
        Ok(Self { year, index })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn index(self) -> u8 {
        self.index
    }

    /// The quarter containing the instant's UTC month.
    pub fn of(ts: DateTime<Utc>) -> Self {
        Self {
            year: ts.year(),
            index: (ts.month0() / 3 + 1) as u8,
        }
    }

    pub fn next(self) -> Self {
        if self.index == 4 {
            Self {
                year: self.year + 1,
                index: 1,
            }
        } else {
            Self {
                year: self.year,
                index: self.index + 1,
            }
        }
    }

    pub fn prev(self) -> Self {
        if self.index == 1 {
            Self {
                year: self.year - 1,
                index: 4,
            }
        } else {
            Self {
                year: self.year,
                index: self.index - 1,
            }
        }
    }

    /// First instant of the quarter.
    pub fn start(self) -> DateTime<Utc> {
        let month = (self.index as u32 - 1) * 3 + 1;
        Utc.with_ymd_and_hms(self.year, month, 1, 0, 0, 0)
            .single()
            .expect("valid quarter start")
    }

    /// First instant after the quarter (exclusive upper bound).
    pub fn end(self) -> DateTime<Utc> {
        self.next().start()
    }
}

/// Shorthand for [`Quarter::of`].
pub fn quarter_of(ts: DateTime<Utc>) -> Quarter {
    Quarter::of(ts)
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-Q{}", self.year, self.index)
    }
}

impl FromStr for Quarter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("not a quarter label (YYYY-Qn): {s:?}"));
        let (year, q) = s.trim().split_once("-Q").ok_or_else(bad)?;
        let year: i32 = year.parse().map_err(|_| bad())?;
        let index: u8 = q.parse().map_err(|_| bad())?;
        Quarter::new(year, index).map_err(|_| bad())
    }
}

impl Serialize for Quarter {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Quarter {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Training cutoff of a model: the pre-quarterly base, or a quarter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Cutoff {
    Base,
    Quarter(Quarter),
}

impl fmt::Display for Cutoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cutoff::Base => f.write_str("base"),
            Cutoff::Quarter(q) => q.fmt(f),
        }
    }
}

impl FromStr for Cutoff {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("base") {
            Ok(Cutoff::Base)
        } else {
            s.parse().map(Cutoff::Quarter)
        }
    }
}

/// One released model: its name, training cutoff, tweet counts and the
/// locator of the backend that scores with it.
///
/// A record is part of the quarterly chain when its name is exactly its
/// cutoff label ("2021-Q1"). Records such as "2021-124M" or "2021-Q3-2x"
/// carry a quarter cutoff but are reachable only by name.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRecord {
    pub name: String,
    pub cutoff: Cutoff,
    pub additional_millions: Option<f64>,
    pub total_millions: f64,
    pub scorer: String,
}

impl ModelRecord {
    pub fn is_quarterly(&self) -> bool {
        matches!(self.cutoff, Cutoff::Quarter(q) if q.to_string() == self.name)
    }

    pub fn quarter(&self) -> Option<Quarter> {
        match self.cutoff {
            Cutoff::Quarter(q) => Some(q),
            Cutoff::Base => None,
        }
    }
}

/// Line format of a registry file.
#[derive(Debug, Serialize, Deserialize)]
struct RegistryLine {
    name: Option<String>,
    cutoff: Option<String>,
    additional_millions: Option<f64>,
    total_millions: Option<f64>,
    scorer: Option<String>,
}

/// Default locator for the built-in records: one scoring server per model.
pub const DEFAULT_SCORER_BASE: &str = "http://127.0.0.1:8000/models";

/// Released models and their training-set sizes, in millions of tweets.
const BUILTIN: &[(&str, &str, Option<f64>, f64)] = &[
    ("2019-90M", "base", None, 90.26),
    ("2020-Q1", "2020-Q1", Some(4.20), 94.46),
    ("2020-Q2", "2020-Q2", Some(4.20), 98.66),
    ("2020-Q3", "2020-Q3", Some(4.20), 102.86),
    ("2020-Q4", "2020-Q4", Some(4.20), 107.06),
    ("2021-Q1", "2021-Q1", Some(4.20), 111.26),
    ("2021-Q2", "2021-Q2", Some(4.20), 115.46),
    ("2021-Q3", "2021-Q3", Some(4.20), 119.66),
    ("2021-Q4", "2021-Q4", Some(4.20), 123.86),
    ("2021-124M", "2021-Q4", Some(33.60), 123.86),
];

#[derive(Debug, Clone)]
pub struct Registry {
    records: Vec<ModelRecord>,
}

impl Registry {
    /// Validates and wraps a list of records.
    ///
    /// Rejects duplicate names, two quarterly records for one quarter, and
    /// any decrease of `total_millions` along base -> quarterly chain.
    pub fn new(records: Vec<ModelRecord>) -> Result<Self> {
        let mut names = std::collections::HashSet::new();
        for r in &records {
            if !names.insert(r.name.as_str()) {
                return Err(Error::data(format!("duplicate model name {:?}", r.name)));
            }
            if !(r.total_millions.is_finite() && r.total_millions >= 0.0) {
                return Err(Error::data(format!(
                    "model {:?}: invalid total_millions",
                    r.name
                )));
            }
        }
        let reg = Self { records };
        let chain = reg.chain();
        for pair in chain.windows(2) {
            if pair[0].cutoff == pair[1].cutoff {
                return Err(Error::data(format!(
                    "two chain models share cutoff {}",
                    pair[0].cutoff
                )));
            }
            if pair[1].total_millions < pair[0].total_millions {
                return Err(Error::data(format!(
                    "total_millions decreases from {} ({}) to {} ({})",
                    pair[0].name, pair[0].total_millions, pair[1].name, pair[1].total_millions
                )));
            }
        }
        Ok(reg)
    }

    /// The compiled-in registry of the ten released models.
    pub fn builtin() -> Self {
        let records = BUILTIN
            .iter()
            .map(|&(name, cutoff, additional, total)| ModelRecord {
                name: name.to_string(),
                cutoff: cutoff.parse().expect("builtin cutoff"),
                additional_millions: additional,
                total_millions: total,
                scorer: format!("{DEFAULT_SCORER_BASE}/{name}"),
            })
            .collect();
        Self::new(records).expect("builtin registry is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), path)
    }

    /// Parses line-delimited JSON records. Relative `toy:` locators are
    /// resolved against the registry file's directory.
    pub fn read<R: BufRead>(reader: R, origin: &Path) -> Result<Self> {
        let base_dir = origin.parent().unwrap_or(Path::new(""));
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::io(origin, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RegistryLine =
                serde_json::from_str(&line).map_err(|e| Error::data_at(lineno, e.to_string()))?;
            let missing = |field: &str| Error::data_at(lineno, format!("missing field `{field}`"));
            let name = raw.name.ok_or_else(|| missing("name"))?;
            let cutoff: Cutoff = raw
                .cutoff
                .ok_or_else(|| missing("cutoff"))?
                .parse()
                .map_err(|e: Error| Error::data_at(lineno, e.to_string()))?;
            let total_millions = raw
                .total_millions
                .ok_or_else(|| missing("total_millions"))?;
            let scorer = raw.scorer.ok_or_else(|| missing("scorer"))?;
            records.push(ModelRecord {
                name,
                cutoff,
                additional_millions: raw.additional_millions,
                total_millions,
                scorer: resolve_locator(&scorer, base_dir),
            });
        }
        Self::new(records)
    }

    /// Writes the registry in its line-delimited file format.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let line = RegistryLine {
                name: Some(r.name.clone()),
                cutoff: Some(r.cutoff.to_string()),
                additional_millions: r.additional_millions,
                total_millions: Some(r.total_millions),
                scorer: Some(r.scorer.clone()),
            };
            out.push_str(&serde_json::to_string(&line).expect("registry line serializes"));
            out.push('\n');
        }
        out
    }

    pub fn records(&self) -> &[ModelRecord] {
        &self.records
    }

    pub fn get(&self, name: &str) -> Option<&ModelRecord> {
        self.records.iter().find(|r| r.name == name)
    }

    pub fn base(&self) -> Option<&ModelRecord> {
        self.records.iter().find(|r| r.cutoff == Cutoff::Base)
    }

    /// Quarterly records in ascending cutoff order.
    pub fn quarterly(&self) -> Vec<&ModelRecord> {
        let mut q: Vec<&ModelRecord> = self.records.iter().filter(|r| r.is_quarterly()).collect();
        q.sort_by_key(|r| r.cutoff);
        q
    }

    fn chain(&self) -> Vec<&ModelRecord> {
        let mut chain: Vec<&ModelRecord> = self.base().into_iter().collect();
        chain.extend(self.quarterly());
        chain
    }

    fn quarterly_for(&self, q: Quarter) -> Option<&ModelRecord> {
        self.records
            .iter()
            .find(|r| r.is_quarterly() && r.cutoff == Cutoff::Quarter(q))
    }
}

fn resolve_locator(locator: &str, base_dir: &Path) -> String {
    match locator.strip_prefix("toy:") {
        Some(p) if Path::new(p).is_relative() && !base_dir.as_os_str().is_empty() => {
            format!("toy:{}", base_dir.join(p).display())
        }
        _ => locator.to_string(),
    }
}

/// What a custom mode points at.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CustomTarget {
    Quarter(Quarter),
    Name(String),
}

/// Model-selection mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mode {
    /// The most recently trained quarterly model.
    Latest,
    /// The quarterly model of each tweet's creation quarter.
    Corresponding,
    Custom(CustomTarget),
    /// Every quarterly model, oldest first.
    Quarterly,
}

impl FromStr for Mode {
    type Err = Error;

    /// `latest`, `corresponding`, `quarterly`; otherwise a quarter label, a
    /// date (`YYYY-MM-DD` or RFC 3339) mapped to its quarter, or a model name.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::invalid("empty mode"));
        }
        Ok(match s {
            "latest" => Mode::Latest,
            "corresponding" => Mode::Corresponding,
            "quarterly" => Mode::Quarterly,
            other => {
                if let Ok(q) = other.parse::<Quarter>() {
                    Mode::Custom(CustomTarget::Quarter(q))
                } else if let Ok(ts) = DateTime::parse_from_rfc3339(other) {
                    Mode::Custom(CustomTarget::Quarter(Quarter::of(ts.with_timezone(&Utc))))
                } else if let Ok(d) = NaiveDate::parse_from_str(other, "%Y-%m-%d") {
                    let ts = d.and_hms_opt(0, 0, 0).expect("midnight").and_utc();
                    Mode::Custom(CustomTarget::Quarter(Quarter::of(ts)))
                } else {
                    Mode::Custom(CustomTarget::Name(other.to_string()))
                }
            }
        })
    }
}

/// Set when corresponding mode had to fall back to the edge of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clamp {
    /// Tweet predates the first quarterly cutoff; resolved to the base model.
    ToBase,
    /// Tweet postdates the last quarterly cutoff; resolved to the latest model.
    ToLatest,
}

#[derive(Debug, Clone)]
pub struct Resolution<'a> {
    pub models: Vec<&'a ModelRecord>,
    pub clamped: Option<Clamp>,
}

impl Resolution<'_> {
    pub fn names(&self) -> Vec<&str> {
        self.models.iter().map(|m| m.name.as_str()).collect()
    }
}

/// Resolves a mode to the models it selects.
pub fn resolve_mode<'a>(
    registry: &'a Registry,
    mode: &Mode,
    tweet: Option<&Tweet>,
) -> Result<Resolution<'a>> {
    let quarterly = registry.quarterly();
    let single = |m: &'a ModelRecord| Resolution {
        models: vec![m],
        clamped: None,
    };
    match mode {
        Mode::Latest => quarterly
            .last()
            .map(|m| single(m))
            .ok_or_else(|| Error::NotFound("registry has no quarterly models".into())),
        Mode::Quarterly => {
            if quarterly.is_empty() {
                return Err(Error::NotFound("registry has no quarterly models".into()));
            }
            Ok(Resolution {
                models: quarterly,
                clamped: None,
            })
        }
        Mode::Custom(CustomTarget::Name(name)) => registry
            .get(name)
            .map(single)
            .ok_or_else(|| Error::NotFound(format!("model {name:?}"))),
        Mode::Custom(CustomTarget::Quarter(q)) => registry
            .quarterly_for(*q)
            .map(single)
            .ok_or_else(|| Error::NotFound(format!("quarterly model for {q}"))),
        Mode::Corresponding => {
            let tweet = tweet.ok_or_else(|| {
                Error::invalid("corresponding mode needs a tweet with created_at")
            })?;
            resolve_corresponding(registry, &quarterly, Quarter::of(tweet.created_at))
        }
    }
}

/// Corresponding-mode resolution for a bare quarter.
pub fn resolve_corresponding_quarter(registry: &Registry, q: Quarter) -> Result<Resolution<'_>> {
    resolve_corresponding(registry, &registry.quarterly(), q)
}

fn resolve_corresponding<'a>(
    registry: &'a Registry,
    quarterly: &[&'a ModelRecord],
    q: Quarter,
) -> Result<Resolution<'a>> {
    let (first, last) = match (quarterly.first(), quarterly.last()) {
        (Some(f), Some(l)) => (*f, *l),
        _ => return Err(Error::NotFound("registry has no quarterly models".into())),
    };
    let target = Cutoff::Quarter(q);
    if target < first.cutoff {
        let model = registry.base().unwrap_or(first);
        return Ok(Resolution {
            models: vec![model],
            clamped: Some(Clamp::ToBase),
        });
    }
    if target > last.cutoff {
        return Ok(Resolution {
            models: vec![last],
            clamped: Some(Clamp::ToLatest),
        });
    }
    registry
        .quarterly_for(q)
        .map(|m| Resolution {
            models: vec![m],
            clamped: None,
        })
        .ok_or_else(|| Error::NotFound(format!("no quarterly model for {q} (gap in chain)")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(s: &str) -> DateTime<Utc> {
        DateTime::parse_from_rfc3339(s).unwrap().with_timezone(&Utc)
    }

    fn q(s: &str) -> Quarter {
        s.parse().unwrap()
    }

    #[test]
    fn quarter_boundaries() {
        assert_eq!(Quarter::of(ts("2021-02-01T23:14:26.000Z")), q("2021-Q1"));
        assert_eq!(Quarter::of(ts("2020-12-31T23:59:59Z")), q("2020-Q4"));
        assert_eq!(Quarter::of(ts("2021-07-01T00:00:00Z")), q("2021-Q3"));
        assert_eq!(Quarter::of(ts("2021-06-30T23:59:59.999Z")), q("2021-Q2"));
    }

    #[test]
    fn quarter_labels_and_arithmetic() {
        assert_eq!(q("2020-Q4").next(), q("2021-Q1"));
        assert_eq!(q("2021-Q1").prev(), q("2020-Q4"));
        assert_eq!(q("2020-Q3").to_string(), "2020-Q3");
        assert_eq!(q("2020-Q2").start(), ts("2020-04-01T00:00:00Z"));
        assert_eq!(q("2020-Q4").end(), ts("2021-01-01T00:00:00Z"));
        assert!("2020-Q5".parse::<Quarter>().is_err());
        assert!("2020Q1".parse::<Quarter>().is_err());
        assert!(Quarter::new(2020, 0).is_err());
    }

    #[test]
    fn builtin_registry_counts() {
        let reg = Registry::builtin();
        assert_eq!(reg.records().len(), 10);
        assert_eq!(reg.get("2021-Q4").unwrap().total_millions, 123.86);
        let q2 = reg.get("2020-Q2").unwrap();
        assert_eq!(q2.additional_millions, Some(4.20));
        assert_eq!(q2.total_millions, 98.66);
        assert!(!reg.get("2021-124M").unwrap().is_quarterly());
        assert_eq!(reg.quarterly().len(), 8);
    }

    #[test]
    fn registry_file_missing_field_is_named() {
        let text = r#"{"name":"2020-Q1","cutoff":"2020-Q1","total_millions":94.46}"#;
        let err = Registry::read(text.as_bytes(), Path::new("reg.jsonl")).unwrap_err();
        assert!(err.to_string().contains("scorer"), "{err}");
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn registry_rejects_decreasing_totals() {
        let text = "{\"name\":\"2020-Q1\",\"cutoff\":\"2020-Q1\",\"total_millions\":5,\"scorer\":\"x\"}\n\
                    {\"name\":\"2020-Q2\",\"cutoff\":\"2020-Q2\",\"total_millions\":4,\"scorer\":\"x\"}\n";
        let err = Registry::read(text.as_bytes(), Path::new("r")).unwrap_err();
        assert!(matches!(err, Error::Data { .. }));
    }

    #[test]
    fn registry_jsonl_round_trip() {
        let reg = Registry::builtin();
        let back = Registry::read(reg.to_jsonl().as_bytes(), Path::new("")).unwrap();
        assert_eq!(back.records(), reg.records());
    }

    #[test]
    fn relative_toy_locators_resolve_against_registry_dir() {
        let text =
            r#"{"name":"2020-Q1","cutoff":"2020-Q1","total_millions":1,"scorer":"toy:a.jsonl"}"#;
        let reg = Registry::read(text.as_bytes(), Path::new("/data/reg.jsonl")).unwrap();
        assert_eq!(reg.records()[0].scorer, "toy:/data/a.jsonl");
    }

    #[test]
    fn modes_resolve() {
        let reg = Registry::builtin();
        let latest = resolve_mode(&reg, &Mode::Latest, None).unwrap();
        assert_eq!(latest.names(), ["2021-Q4"]);

        let tweet = Tweet::new(1, "x", ts("2021-02-01T23:14:26.000Z"), "u");
        let corr = resolve_mode(&reg, &Mode::Corresponding, Some(&tweet)).unwrap();
        assert_eq!(corr.names(), ["2021-Q1"]);
        assert_eq!(corr.clamped, None);

        let all = resolve_mode(&reg, &Mode::Quarterly, None).unwrap();
        assert_eq!(
            all.names(),
            [
                "2020-Q1", "2020-Q2", "2020-Q3", "2020-Q4", "2021-Q1", "2021-Q2", "2021-Q3",
                "2021-Q4"
            ]
        );

        let custom: Mode = "2021-Q3".parse().unwrap();
        assert_eq!(
            resolve_mode(&reg, &custom, None).unwrap().names(),
            ["2021-Q3"]
        );
        let by_name: Mode = "2021-124M".parse().unwrap();
        assert_eq!(
            resolve_mode(&reg, &by_name, None).unwrap().names(),
            ["2021-124M"]
        );
        let by_date: Mode = "2020-05-17".parse().unwrap();
        assert_eq!(
            resolve_mode(&reg, &by_date, None).unwrap().names(),
            ["2020-Q2"]
        );
    }

    #[test]
    fn mode_errors() {
        let reg = Registry::builtin();
        assert!(matches!(
            resolve_mode(&reg, &Mode::Corresponding, None),
            Err(Error::InvalidArgument(_))
        ));
        let absent: Mode = "2019-Q2".parse().unwrap();
        assert!(matches!(
            resolve_mode(&reg, &absent, None),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn corresponding_clamps_out_of_range() {
        let reg = Registry::builtin();
        let early = Tweet::new(1, "x", ts("2019-06-01T00:00:00Z"), "u");
        let r = resolve_mode(&reg, &Mode::Corresponding, Some(&early)).unwrap();
        assert_eq!(r.names(), ["2019-90M"]);
        assert_eq!(r.clamped, Some(Clamp::ToBase));
        let late = Tweet::new(2, "x", ts("2023-03-01T00:00:00Z"), "u");
        let r = resolve_mode(&reg, &Mode::Corresponding, Some(&late)).unwrap();
        assert_eq!(r.names(), ["2021-Q4"]);
        assert_eq!(r.clamped, Some(Clamp::ToLatest));
    }

    proptest! {
        #[test]
        fn quarter_of_is_monotone(a in 0i64..4_000_000_000, b in 0i64..4_000_000_000) {
            let (lo, hi) = (a.min(b), a.max(b));
            let ql = Quarter::of(Utc.timestamp_opt(lo, 0).unwrap());
            let qh = Quarter::of(Utc.timestamp_opt(hi, 0).unwrap());
            prop_assert!(ql <= qh);
        }

        #[test]
        fn corresponding_stays_within_chain(secs in 1_400_000_000i64..1_800_000_000) {
            let reg = Registry::builtin();
            let t = Tweet::new(1, "x", Utc.timestamp_opt(secs, 0).unwrap(), "u");
            let r = resolve_mode(&reg, &Mode::Corresponding, Some(&t)).unwrap();
            prop_assert_eq!(r.models.len(), 1);
            let m = r.models[0];
            prop_assert!(m.cutoff == Cutoff::Base || (m.is_quarterly()
                && m.cutoff >= Cutoff::Quarter(q("2020-Q1"))
                && m.cutoff <= Cutoff::Quarter(q("2021-Q4"))));
        }
    }
}
