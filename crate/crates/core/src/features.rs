//! Precomputed lookup tables and the 59-entry feature vector.
//!
//! Tables are built in one pass over a training history and are then
//! read-only. Partial builds over disjoint record ranges merge exactly, so
//! building can be split across workers.
//!
//! Feature order (1-based positions):
//!
//! | positions | family            | count |
//! |-----------|-------------------|-------|
//! | 1-12      | dataset           | 12    |
//! | 13-30     | author profile    | 18    |
//! | 31-48     | user profile      | 18    |
//! | 49        | languages spoken  | 1     |
//! | 50-53     | previous actions  | 4     |
//! | 54-59     | word search       | 6     |
//!
//! The full list is [`FEATURE_NAMES`]; `docs/feature_order.md` documents it.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::gbdt::FeatureMatrix;
use crate::ingest::{EngagementClass, InteractionRecord, PerClass, TweetType};

pub const N_FEATURES: usize = 59;

/// Stamp carried by feature matrices and models; bump on any order change.
pub const FEATURE_ORDER_VERSION: &str = "engage-features-v1";

/// Code used for a tweet type or language absent from the tables.
pub const UNSEEN_CODE: f64 = -1.0;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    // dataset
    "hashtag_count",
    "media_count",
    "link_count",
    "domain_count",
    "token_count",
    "tweet_type_code",
    "language_code",
    "author_follower_count",
    "author_following_count",
    "author_verified",
    "user_follower_count",
    "engagee_follows_engager",
    // author
    "author_received_like",
    "author_received_reply",
    "author_received_retweet",
    "author_received_rwc",
    "author_ratio_like",
    "author_ratio_reply",
    "author_ratio_retweet",
    "author_ratio_rwc",
    "author_distinct_engagers_like",
    "author_distinct_engagers_reply",
    "author_distinct_engagers_retweet",
    "author_distinct_engagers_rwc",
    "author_tweet_count",
    "author_total_received",
    "author_engaged_ratio",
    "author_mean_token_count",
    "author_mean_hashtag_count",
    "author_media_fraction",
    // user
    "user_performed_like",
    "user_performed_reply",
    "user_performed_retweet",
    "user_performed_rwc",
    "user_ratio_like",
    "user_ratio_reply",
    "user_ratio_retweet",
    "user_ratio_rwc",
    "user_distinct_authors_like",
    "user_distinct_authors_reply",
    "user_distinct_authors_retweet",
    "user_distinct_authors_rwc",
    "user_tweets_seen",
    "user_total_performed",
    "user_engaged_ratio",
    "user_mean_token_count",
    "user_mean_hashtag_count",
    "user_media_fraction",
    // languages spoken
    "languages_spoken",
    // previous actions
    "previous_actions_like",
    "previous_actions_reply",
    "previous_actions_retweet",
    "previous_actions_rwc",
    // word search
    "cta_share",
    "cta_retweet",
    "cta_reply",
    "cta_comment",
    "cta_word_count",
    "cta_any",
];

pub const DATASET_OFFSET: usize = 0;
pub const AUTHOR_OFFSET: usize = 12;
pub const USER_OFFSET: usize = 30;
pub const LANGUAGE_OFFSET: usize = 48;
pub const PREVIOUS_ACTIONS_OFFSET: usize = 49;
pub const WORD_SEARCH_OFFSET: usize = 53;

/// Call-to-action words, in feature order.
pub const CALL_TO_ACTION_WORDS: [&str; 4] = ["share", "retweet", "reply", "comment"];

/// Token vocabulary used by the synthetic generator for call-to-action words.
pub const SYNTHETIC_VOCABULARY: [(u32, &str); 8] = [
    (2001, "share"),
    (2002, "Share"),
    (2003, "retweet"),
    (2004, "RETWEET"),
    (2005, "reply"),
    (2006, "Reply"),
    (2007, "comment"),
    (2008, "Comment"),
];

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("malformed {file}: {message}")]
    Format { file: String, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> FeatureError + '_ {
    move |source| FeatureError::Io { path: path.display().to_string(), source }
}

/// Token ids that count as each call-to-action word.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VocabularyConfig {
    words: [HashSet<u32>; 4],
}

impl VocabularyConfig {
    /// Keeps the tokens whose word equals a call-to-action word, ignoring case.
    pub fn from_vocabulary<'a>(entries: impl IntoIterator<Item = (u32, &'a str)>) -> Self {
        let mut cfg = VocabularyConfig::default();
        for (id, word) in entries {
            let word = word.trim();
            for (slot, target) in CALL_TO_ACTION_WORDS.iter().enumerate() {
                if word.eq_ignore_ascii_case(target) {
                    cfg.words[slot].insert(id);
                }
            }
        }
        cfg
    }

    /// Parses `token_id<TAB>word` lines.
    pub fn from_tsv(text: &str) -> Result<Self, FeatureError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (id, word) = line.split_once('\t').ok_or_else(|| FeatureError::Format {
                file: "vocabulary".into(),
                message: format!("line {}: expected 'token_id<TAB>word'", i + 1),
            })?;
            let id: u32 = id.trim().parse().map_err(|_| FeatureError::Format {
                file: "vocabulary".into(),
                message: format!("line {}: bad token id '{id}'", i + 1),
            })?;
            entries.push((id, word.to_owned()));
        }
        Ok(Self::from_vocabulary(entries.iter().map(|(i, w)| (*i, w.as_str()))))
    }

    pub fn synthetic() -> Self {
        Self::from_vocabulary(SYNTHETIC_VOCABULARY)
    }

    pub fn tokens_for(&self, word_slot: usize) -> &HashSet<u32> {
        &self.words[word_slot]
    }
}

/// `[share, retweet, reply, comment, matched word count, any]`.
pub fn word_search(text_token_ids: &[u32], vocab: &VocabularyConfig) -> [f64; 6] {
    let mut out = [0.0; 6];
    for (slot, ids) in vocab.words.iter().enumerate() {
        if text_token_ids.iter().any(|t| ids.contains(t)) {
            out[slot] = 1.0;
        }
    }
    out[4] = out[..4].iter().sum();
    out[5] = if out[4] > 0.0 { 1.0 } else { 0.0 };
    out
}

/// Aggregates for one author (engagements received) or one user
/// (engagements performed). `tweets` counts every row the entity appears in
/// on its side of the pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EntityProfile {
    pub engagements: PerClass<u64>,
    pub distinct_counterparts: PerClass<u64>,
    pub tweets: u64,
    pub total_engagements: u64,
    /// Rows with at least one engagement.
    pub engaged_rows: u64,
    pub token_sum: u64,
    pub hashtag_sum: u64,
    pub media_tweets: u64,
}

pub type AuthorProfile = EntityProfile;
pub type UserProfile = EntityProfile;

/// `engagements[class] / tweets`, or 0 for an entity without tweets.
pub fn engagement_ratio(profile: &EntityProfile, class: EngagementClass) -> f64 {
    ratio(profile.engagements[class], profile.tweets)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EntityProfile {
    /// The 18 profile features in documented order.
    pub fn features(&self) -> [f64; 18] {
        let mut f = [0.0; 18];
        for c in EngagementClass::ALL {
            let i = c.index();
            f[i] = self.engagements[c] as f64;
            f[4 + i] = engagement_ratio(self, c);
            f[8 + i] = self.distinct_counterparts[c] as f64;
        }
        f[12] = self.tweets as f64;
        f[13] = self.total_engagements as f64;
        f[14] = ratio(self.engaged_rows, self.tweets);
        f[15] = ratio(self.token_sum, self.tweets);
        f[16] = ratio(self.hashtag_sum, self.tweets);
        f[17] = ratio(self.media_tweets, self.tweets);
        f
    }
}

/// Mergeable profile state; keeps counterpart id sets for distinct counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProfileAccumulator {
    engagements: PerClass<u64>,
    counterparts: PerClass<HashSet<String>>,
    tweets: u64,
    engaged_rows: u64,
    token_sum: u64,
    hashtag_sum: u64,
    media_tweets: u64,
}

impl ProfileAccumulator {
    fn observe(&mut self, record: &InteractionRecord, counterpart: &str) {
        self.tweets += 1;
        self.token_sum += record.text_token_ids.len() as u64;
        self.hashtag_sum += record.hashtag_ids.len() as u64;
        if record.media_count > 0 {
            self.media_tweets += 1;
        }
        let mut any = false;
        for c in EngagementClass::ALL {
            if record.is_positive(c) {
                any = true;
                self.engagements[c] += 1;
                if !self.counterparts[c].contains(counterpart) {
                    self.counterparts[c].insert(counterpart.to_owned());
                }
            }
        }
        if any {
            self.engaged_rows += 1;
        }
    }

    pub fn merge(&mut self, other: &ProfileAccumulator) {
        for c in EngagementClass::ALL {
            self.engagements[c] += other.engagements[c];
            self.counterparts[c].extend(other.counterparts[c].iter().cloned());
        }
        self.tweets += other.tweets;
        self.engaged_rows += other.engaged_rows;
        self.token_sum += other.token_sum;
        self.hashtag_sum += other.hashtag_sum;
        self.media_tweets += other.media_tweets;
    }

    pub fn finish(&self) -> EntityProfile {
        EntityProfile {
            engagements: self.engagements,
            distinct_counterparts: self.counterparts.map(|_, s| s.len() as u64),
            tweets: self.tweets,
            total_engagements: self.engagements.0.iter().sum(),
            engaged_rows: self.engaged_rows,
            token_sum: self.token_sum,
            hashtag_sum: self.hashtag_sum,
            media_tweets: self.media_tweets,
        }
    }
}

/// Engaged-tweet count per (user, language).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LanguageTable(HashMap<String, HashMap<String, u64>>);

impl LanguageTable {
    pub fn get(&self, user_id: &str, language_id: &str) -> u64 {
        self.0
            .get(user_id)
            .and_then(|m| m.get(language_id))
            .copied()
            .unwrap_or(0)
    }

    fn add(&mut self, user_id: &str, language_id: &str, n: u64) {
        *self
            .0
            .entry(user_id.to_owned())
            .or_default()
            .entry(language_id.to_owned())
            .or_insert(0) += n;
    }

    /// Number of stored (user, language) keys.
    pub fn len(&self) -> usize {
        self.0.values().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn sorted(&self) -> BTreeMap<(&str, &str), u64> {
        self.0
            .iter()
            .flat_map(|(u, m)| m.iter().map(move |(l, n)| ((u.as_str(), l.as_str()), *n)))
            .collect()
    }
}

/// Count of past engagements per (user, author, class).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PriorActionTable(HashMap<String, HashMap<String, PerClass<u64>>>);

impl PriorActionTable {
    pub fn get(&self, user_id: &str, author_id: &str, class: EngagementClass) -> u64 {
        self.pair(user_id, author_id).map_or(0, |p| p[class])
    }

    pub fn pair(&self, user_id: &str, author_id: &str) -> Option<&PerClass<u64>> {
        self.0.get(user_id).and_then(|m| m.get(author_id))
    }

    fn add(&mut self, user_id: &str, author_id: &str, class: EngagementClass, n: u64) {
        self.0
            .entry(user_id.to_owned())
            .or_default()
            .entry(author_id.to_owned())
            .or_default()[class] += n;
    }

    /// Number of stored (user, author, class) keys with a nonzero count.
    pub fn len(&self) -> usize {
        self.0
            .values()
            .flat_map(HashMap::values)
            .map(|p| p.0.iter().filter(|&&n| n > 0).count())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Sum of counts for `user_id` and `class` over all authors.
    pub fn user_total(&self, user_id: &str, class: EngagementClass) -> u64 {
        self.0
            .get(user_id)
            .map_or(0, |m| m.values().map(|p| p[class]).sum())
    }

    fn sorted(&self) -> BTreeMap<(&str, &str, EngagementClass), u64> {
        self.0
            .iter()
            .flat_map(|(u, m)| {
                m.iter().flat_map(move |(a, p)| {
                    p.iter()
                        .filter(|(_, &n)| n > 0)
                        .map(move |(c, &n)| ((u.as_str(), a.as_str(), c), n))
                })
            })
            .collect()
    }
}

/// Dense categorical codes in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CategoricalCodes {
    tweet_types: Vec<TweetType>,
    languages: Vec<String>,
    language_index: HashMap<String, u32>,
}

impl CategoricalCodes {
    fn observe(&mut self, record: &InteractionRecord) {
        if !self.tweet_types.contains(&record.tweet_type) {
            self.tweet_types.push(record.tweet_type);
        }
        self.add_language(&record.language_id);
    }

    fn add_language(&mut self, lang: &str) {
        if !self.language_index.contains_key(lang) {
            self.language_index.insert(lang.to_owned(), self.languages.len() as u32);
            self.languages.push(lang.to_owned());
        }
    }

    /// Appends codes first seen in `other`; `other` is taken to come later.
    pub fn merge(&mut self, other: &CategoricalCodes) {
        for t in &other.tweet_types {
            if !self.tweet_types.contains(t) {
                self.tweet_types.push(*t);
            }
        }
        for l in &other.languages {
            self.add_language(l);
        }
    }

    pub fn tweet_type_code(&self, t: TweetType) -> Option<u32> {
        self.tweet_types.iter().position(|&x| x == t).map(|p| p as u32)
    }

    pub fn language_code(&self, lang: &str) -> Option<u32> {
        self.language_index.get(lang).copied()
    }
}

/// Everything feature extraction reads.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureTables {
    pub authors: HashMap<String, AuthorProfile>,
    pub users: HashMap<String, UserProfile>,
    pub languages: LanguageTable,
    pub prior_actions: PriorActionTable,
    pub codes: CategoricalCodes,
}

/// Incremental table builder. Builders over consecutive record ranges merge
/// into the builder of the whole range.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProfileBuilder {
    authors: HashMap<String, ProfileAccumulator>,
    users: HashMap<String, ProfileAccumulator>,
    languages: LanguageTable,
    prior_actions: PriorActionTable,
    codes: CategoricalCodes,
}

impl ProfileBuilder {
    pub fn observe(&mut self, record: &InteractionRecord) {
        self.codes.observe(record);
        self.authors
            .entry(record.author_id.clone())
            .or_default()
            .observe(record, &record.user_id);
        self.users
            .entry(record.user_id.clone())
            .or_default()
            .observe(record, &record.author_id);

        let mut any = false;
        for c in EngagementClass::ALL {
            if record.is_positive(c) {
                any = true;
                self.prior_actions.add(&record.user_id, &record.author_id, c, 1);
            }
        }
        if any {
            self.languages.add(&record.user_id, &record.language_id, 1);
        }
    }

    pub fn merge(&mut self, other: &ProfileBuilder) {
        for (k, v) in &other.authors {
            self.authors.entry(k.clone()).or_default().merge(v);
        }
        for (k, v) in &other.users {
            self.users.entry(k.clone()).or_default().merge(v);
        }
        for ((u, l), n) in other.languages.sorted() {
            self.languages.add(u, l, n);
        }
        for ((u, a, c), n) in other.prior_actions.sorted() {
            self.prior_actions.add(u, a, c, n);
        }
        self.codes.merge(&other.codes);
    }

    pub fn finish(&self) -> FeatureTables {
        FeatureTables {
            authors: self.authors.iter().map(|(k, v)| (k.clone(), v.finish())).collect(),
            users: self.users.iter().map(|(k, v)| (k.clone(), v.finish())).collect(),
            languages: self.languages.clone(),
            prior_actions: self.prior_actions.clone(),
            codes: self.codes.clone(),
        }
    }
}

/// Builds all lookup tables in one pass.
pub fn build_profiles<'a, I>(records: I) -> FeatureTables
where
    I: IntoIterator<Item = &'a InteractionRecord>,
{
    let mut b = ProfileBuilder::default();
    for r in records {
        b.observe(r);
    }
    b.finish()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Extracts the feature vector of one record. Unknown authors and users get
/// all-zero profile features.
pub fn extract_features(
    record: &InteractionRecord,
    tables: &FeatureTables,
    vocab: &VocabularyConfig,
) -> FeatureVector {
    let mut f = [0.0; N_FEATURES];

    let dataset = [
        record.hashtag_ids.len() as f64,
        record.media_count as f64,
        record.link_count as f64,
        record.domain_count as f64,
        record.text_token_ids.len() as f64,
        tables
            .codes
            .tweet_type_code(record.tweet_type)
            .map_or(UNSEEN_CODE, f64::from),
        tables
            .codes
            .language_code(&record.language_id)
            .map_or(UNSEEN_CODE, f64::from),
        record.author_follower_count as f64,
        record.author_following_count as f64,
        flag(record.author_verified),
        record.user_follower_count as f64,
        flag(record.engagee_follows_engager),
    ];
    f[DATASET_OFFSET..AUTHOR_OFFSET].copy_from_slice(&dataset);

    if let Some(p) = tables.authors.get(&record.author_id) {
        f[AUTHOR_OFFSET..USER_OFFSET].copy_from_slice(&p.features());
    }
    if let Some(p) = tables.users.get(&record.user_id) {
        f[USER_OFFSET..LANGUAGE_OFFSET].copy_from_slice(&p.features());
    }
    f[LANGUAGE_OFFSET] = tables.languages.get(&record.user_id, &record.language_id) as f64;
    for c in EngagementClass::ALL {
        f[PREVIOUS_ACTIONS_OFFSET + c.index()] =
            tables.prior_actions.get(&record.user_id, &record.author_id, c) as f64;
    }
    f[WORD_SEARCH_OFFSET..].copy_from_slice(&word_search(&record.text_token_ids, vocab));
    FeatureVector(f)
}

/// Feature matrix of a record slice, rows in input order.
pub fn extract_matrix(
    records: &[InteractionRecord],
    tables: &FeatureTables,
    vocab: &VocabularyConfig,
) -> FeatureMatrix {
    let rows: Vec<FeatureVector> = records
        .par_iter()
        .map(|r| extract_features(r, tables, vocab))
        .collect();
    let mut data = Vec::with_capacity(rows.len() * N_FEATURES);
    for r in &rows {
        data.extend_from_slice(&r.0);
    }
    FeatureMatrix::new(data, N_FEATURES, FEATURE_ORDER_VERSION)
        .expect("extracted rows have the documented width")
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

pub const AUTHORS_FILE: &str = "authors.csv";
pub const USERS_FILE: &str = "users.csv";
pub const LANGUAGES_FILE: &str = "languages.csv";
pub const PRIOR_ACTIONS_FILE: &str = "prior_actions.csv";
pub const CODES_FILE: &str = "codes.csv";

const PROFILE_COLUMNS: [&str; 14] = [
    "eng_like",
    "eng_reply",
    "eng_retweet",
    "eng_rwc",
    "distinct_like",
    "distinct_reply",
    "distinct_retweet",
    "distinct_rwc",
    "tweets",
    "total_engagements",
    "engaged_rows",
    "token_sum",
    "hashtag_sum",
    "media_tweets",
];

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, FeatureError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> FeatureError + '_ {
    move |e| FeatureError::Format { file: path.display().to_string(), message: e.to_string() }
}

fn write_profiles(
    path: &Path,
    id_column: &str,
    profiles: &HashMap<String, EntityProfile>,
) -> Result<(), FeatureError> {
    let mut w = csv_writer(path)?;
    let mut header = vec![id_column];
    header.extend(PROFILE_COLUMNS);
    w.write_record(&header).map_err(csv_err(path))?;
    let sorted: BTreeMap<_, _> = profiles.iter().collect();
    for (id, p) in sorted {
        let mut row = vec![id.clone()];
        row.extend(p.engagements.0.iter().map(u64::to_string));
        row.extend(p.distinct_counterparts.0.iter().map(u64::to_string));
        row.extend(
            [p.tweets, p.total_engagements, p.engaged_rows, p.token_sum, p.hashtag_sum, p.media_tweets]
                .iter()
                .map(u64::to_string),
        );
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn read_rows(path: &Path, expected_header: &[&str]) -> Result<Vec<csv::StringRecord>, FeatureError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut r = csv::Reader::from_reader(io::BufReader::new(file));
    let header = r.headers().map_err(csv_err(path))?.clone();
    if header.iter().ne(expected_header.iter().copied()) {
        return Err(FeatureError::Format {
            file: path.display().to_string(),
            message: format!("expected header {}", expected_header.join(",")),
        });
    }
    r.records().collect::<Result<Vec<_>, _>>().map_err(csv_err(path))
}

fn parse_u64(path: &Path, s: &str) -> Result<u64, FeatureError> {
    s.parse().map_err(|_| FeatureError::Format {
        file: path.display().to_string(),
        message: format!("not a count: '{s}'"),
    })
}

fn read_profiles(path: &Path, id_column: &str) -> Result<HashMap<String, EntityProfile>, FeatureError> {
    let mut header = vec![id_column];
    header.extend(PROFILE_COLUMNS);
    let mut out = HashMap::new();
    for row in read_rows(path, &header)? {
        let n = |i: usize| parse_u64(path, &row[i]);
        let p = EntityProfile {
            engagements: PerClass([n(1)?, n(2)?, n(3)?, n(4)?]),
            distinct_counterparts: PerClass([n(5)?, n(6)?, n(7)?, n(8)?]),
            tweets: n(9)?,
            total_engagements: n(10)?,
            engaged_rows: n(11)?,
            token_sum: n(12)?,
            hashtag_sum: n(13)?,
            media_tweets: n(14)?,
        };
        out.insert(row[0].to_owned(), p);
    }
    Ok(out)
}

impl FeatureTables {
    /// Writes every table as a sorted CSV into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), FeatureError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        write_profiles(&dir.join(AUTHORS_FILE), "author_id", &self.authors)?;
        write_profiles(&dir.join(USERS_FILE), "user_id", &self.users)?;

        let path = dir.join(LANGUAGES_FILE);
        let mut w = csv_writer(&path)?;
        w.write_record(["user_id", "language_id", "count"]).map_err(csv_err(&path))?;
        for ((u, l), n) in self.languages.sorted() {
            w.write_record([u, l, &n.to_string()]).map_err(csv_err(&path))?;
        }
        w.flush().map_err(io_err(&path))?;

        let path = dir.join(PRIOR_ACTIONS_FILE);
        let mut w = csv_writer(&path)?;
        w.write_record(["user_id", "author_id", "class", "count"]).map_err(csv_err(&path))?;
        for ((u, a, c), n) in self.prior_actions.sorted() {
            w.write_record([u, a, c.name(), &n.to_string()])
                .map_err(csv_err(&path))?;
        }
        w.flush().map_err(io_err(&path))?;

        let path = dir.join(CODES_FILE);
        let mut w = csv_writer(&path)?;
        w.write_record(["kind", "value", "code"]).map_err(csv_err(&path))?;
        for (i, t) in self.codes.tweet_types.iter().enumerate() {
            w.write_record(["tweet_type", t.as_str(), &i.to_string()]).map_err(csv_err(&path))?;
        }
        for (i, l) in self.codes.languages.iter().enumerate() {
            w.write_record(["language", l.as_str(), &i.to_string()]).map_err(csv_err(&path))?;
        }
        w.flush().map_err(io_err(&path))
    }

    pub fn load(dir: &Path) -> Result<Self, FeatureError> {
        let authors = read_profiles(&dir.join(AUTHORS_FILE), "author_id")?;
        let users = read_profiles(&dir.join(USERS_FILE), "user_id")?;

        let path = dir.join(LANGUAGES_FILE);
        let mut languages = LanguageTable::default();
        for row in read_rows(&path, &["user_id", "language_id", "count"])? {
            languages.add(&row[0], &row[1], parse_u64(&path, &row[2])?);
        }

        let path = dir.join(PRIOR_ACTIONS_FILE);
        let mut prior_actions = PriorActionTable::default();
        for row in read_rows(&path, &["user_id", "author_id", "class", "count"])? {
            let class: EngagementClass = row[2].parse().map_err(|m| FeatureError::Format {
                file: path.display().to_string(),
                message: m,
            })?;
            prior_actions.add(&row[0], &row[1], class, parse_u64(&path, &row[3])?);
        }

        let path = dir.join(CODES_FILE);
        let mut codes = CategoricalCodes::default();
        let mut tweet_types: Vec<(u64, TweetType)> = Vec::new();
        let mut langs: Vec<(u64, String)> = Vec::new();
        for row in read_rows(&path, &["kind", "value", "code"])? {
            let code = parse_u64(&path, &row[2])?;
            match &row[0] {
                "tweet_type" => tweet_types.push((
                    code,
                    row[1].parse().map_err(|m| FeatureError::Format {
                        file: path.display().to_string(),
                        message: m,
                    })?,
                )),
                "language" => langs.push((code, row[1].to_owned())),
                other => {
                    return Err(FeatureError::Format {
                        file: path.display().to_string(),
                        message: format!("unknown code kind '{other}'"),
                    })
                }
            }
        }
        tweet_types.sort();
        langs.sort();
        let dense = |codes: &mut dyn Iterator<Item = u64>| codes.enumerate().all(|(i, c)| i as u64 == c);
        if !dense(&mut tweet_types.iter().map(|x| x.0)) || !dense(&mut langs.iter().map(|x| x.0)) {
            return Err(FeatureError::Format {
                file: path.display().to_string(),
                message: "codes must be dense from 0".into(),
            });
        }
        codes.tweet_types = tweet_types.into_iter().map(|x| x.1).collect();
        for (_, l) in langs {
            codes.add_language(&l);
        }

        Ok(FeatureTables {
            authors,
            users,
            languages,
            prior_actions,
            codes,
        })
    }
}

/// Writes `matrix` as a headerless CSV and its column names to
/// `<path>.header`.
pub fn write_matrix_csv(path: &Path, matrix: &FeatureMatrix) -> Result<(), FeatureError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = io::BufWriter::new(file);
    for row in matrix.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(",")).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    let header_path = header_path(path);
    fs::write(&header_path, format!("{}\n{}\n", FEATURE_NAMES.join(","), matrix.version()))
        .map_err(io_err(&header_path))
}

pub fn header_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".header");
    s.into()
}

pub fn read_matrix_csv(path: &Path) -> Result<FeatureMatrix, FeatureError> {
    let hp = header_path(path);
    let header = fs::read_to_string(&hp).map_err(io_err(&hp))?;
    let mut lines = header.lines();
    let names: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let version = lines.next().unwrap_or_default().trim().to_owned();
    let bad = |message: String| FeatureError::Format { file: path.display().to_string(), message };
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut data = Vec::new();
    for (i, line) in io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let before = data.len();
        for v in line.split(',') {
            data.push(v.parse::<f64>().map_err(|_| bad(format!("line {}: bad value '{v}'", i + 1)))?);
        }
        if data.len() - before != names.len() {
            return Err(bad(format!("line {}: expected {} values", i + 1, names.len())));
        }
    }
    FeatureMatrix::new(data, names.len(), &version).map_err(|e| bad(e.to_string()))
}
