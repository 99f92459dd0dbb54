//! Streaming parser for delimited interaction logs.
//!
//! One line is one (tweet, engaging user) pair. Columns are separated by a
//! single field delimiter byte (0x01 by default), list-valued columns by a
//! list delimiter byte (0x09 by default), and an empty string encodes an
//! absent optional value. Malformed lines are skipped and counted in a
//! [`ParseReport`]; only an unreadable stream is fatal.

use std::fmt;
use std::io::{self, BufRead, Write};
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// How many rejection reasons a [`ParseReport`] keeps.
pub const MAX_REPORTED_REJECTIONS: usize = 10;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unreadable input stream: {0}")]
    Io(#[from] io::Error),
    #[error("invalid format config: {0}")]
    Config(String),
}

/// The four engagement types, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngagementClass {
    Like,
    Reply,
    Retweet,
    RetweetWithComment,
}

impl EngagementClass {
    pub const ALL: [EngagementClass; 4] = [
        EngagementClass::Like,
        EngagementClass::Reply,
        EngagementClass::Retweet,
        EngagementClass::RetweetWithComment,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Short machine name used in file formats.
    pub fn name(self) -> &'static str {
        match self {
            EngagementClass::Like => "like",
            EngagementClass::Reply => "reply",
            EngagementClass::Retweet => "retweet",
            EngagementClass::RetweetWithComment => "rwc",
        }
    }
}

impl fmt::Display for EngagementClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EngagementClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "like" => Ok(EngagementClass::Like),
            "reply" => Ok(EngagementClass::Reply),
            "retweet" => Ok(EngagementClass::Retweet),
            "rwc" | "retweet_with_comment" => Ok(EngagementClass::RetweetWithComment),
            other => Err(format!("unknown engagement class '{other}'")),
        }
    }
}

/// A value for each engagement class, indexable by [`EngagementClass`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
pub struct PerClass<T>(pub [T; 4]);

impl<T> PerClass<T> {
    pub fn from_fn(mut f: impl FnMut(EngagementClass) -> T) -> Self {
        PerClass(EngagementClass::ALL.map(&mut f))
    }

    pub fn iter(&self) -> impl Iterator<Item = (EngagementClass, &T)> {
        EngagementClass::ALL.into_iter().zip(self.0.iter())
    }

    pub fn map<U>(&self, mut f: impl FnMut(EngagementClass, &T) -> U) -> PerClass<U> {
        PerClass::from_fn(|c| f(c, &self[c]))
    }

    pub fn try_map<U, E>(
        &self,
        mut f: impl FnMut(EngagementClass, &T) -> Result<U, E>,
    ) -> Result<PerClass<U>, E> {
        let [a, b, c, d] = EngagementClass::ALL;
        Ok(PerClass([
            f(a, &self[a])?,
            f(b, &self[b])?,
            f(c, &self[c])?,
            f(d, &self[d])?,
        ]))
    }
}

impl<T> Index<EngagementClass> for PerClass<T> {
    type Output = T;
    fn index(&self, class: EngagementClass) -> &T {
        &self.0[class.index()]
    }
}

impl<T> IndexMut<EngagementClass> for PerClass<T> {
    fn index_mut(&mut self, class: EngagementClass) -> &mut T {
        &mut self.0[class.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TweetType {
    Original,
    Retweet,
    Quote,
    TopLevel,
}

impl TweetType {
    pub const ALL: [TweetType; 4] = [
        TweetType::Original,
        TweetType::Retweet,
        TweetType::Quote,
        TweetType::TopLevel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TweetType::Original => "ORIGINAL",
            TweetType::Retweet => "RETWEET",
            TweetType::Quote => "QUOTE",
            TweetType::TopLevel => "TOPLEVEL",
        }
    }
}

impl FromStr for TweetType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TweetType::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown tweet type '{s}'"))
    }
}

/// One tweet/engaging-user pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub text_token_ids: Vec<u32>,
    pub hashtag_ids: Vec<String>,
    pub tweet_id: String,
    pub media_count: u32,
    pub link_count: u32,
    pub domain_count: u32,
    pub tweet_type: TweetType,
    pub language_id: String,
    pub tweet_timestamp: u64,
    pub author_id: String,
    pub author_follower_count: u64,
    pub author_following_count: u64,
    pub author_verified: bool,
    pub author_account_creation: u64,
    pub user_id: String,
    pub user_follower_count: u64,
    pub user_following_count: u64,
    pub user_verified: bool,
    pub user_account_creation: u64,
    pub engagee_follows_engager: bool,
    pub reply_ts: Option<u64>,
    pub retweet_ts: Option<u64>,
    pub rwc_ts: Option<u64>,
    pub like_ts: Option<u64>,
}

impl InteractionRecord {
    pub fn engagement_ts(&self, class: EngagementClass) -> Option<u64> {
        match class {
            EngagementClass::Like => self.like_ts,
            EngagementClass::Reply => self.reply_ts,
            EngagementClass::Retweet => self.retweet_ts,
            EngagementClass::RetweetWithComment => self.rwc_ts,
        }
    }

    pub fn is_positive(&self, class: EngagementClass) -> bool {
        self.engagement_ts(class).is_some()
    }

    pub fn any_positive(&self) -> bool {
        EngagementClass::ALL.iter().any(|&c| self.is_positive(c))
    }
}

/// Per-class engagement flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelVector {
    pub like: bool,
    pub reply: bool,
    pub retweet: bool,
    pub rwc: bool,
}

impl LabelVector {
    pub fn get(&self, class: EngagementClass) -> bool {
        match class {
            EngagementClass::Like => self.like,
            EngagementClass::Reply => self.reply,
            EngagementClass::Retweet => self.retweet,
            EngagementClass::RetweetWithComment => self.rwc,
        }
    }
}

/// A class is positive iff its engagement timestamp is present.
pub fn labels_of(record: &InteractionRecord) -> LabelVector {
    LabelVector {
        like: record.like_ts.is_some(),
        reply: record.reply_ts.is_some(),
        retweet: record.retweet_ts.is_some(),
        rwc: record.rwc_ts.is_some(),
    }
}

/// Per-class label columns for a slice of records.
pub fn label_columns(records: &[InteractionRecord]) -> PerClass<Vec<bool>> {
    PerClass::from_fn(|c| records.iter().map(|r| r.is_positive(c)).collect())
}

/// Columns of the canonical dataset file, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Column {
    TextTokens,
    Hashtags,
    TweetId,
    PresentMedia,
    PresentLinks,
    PresentDomains,
    TweetType,
    Language,
    TweetTimestamp,
    AuthorId,
    AuthorFollowerCount,
    AuthorFollowingCount,
    AuthorVerified,
    AuthorAccountCreation,
    UserId,
    UserFollowerCount,
    UserFollowingCount,
    UserVerified,
    UserAccountCreation,
    EngageeFollowsEngager,
    ReplyTimestamp,
    RetweetTimestamp,
    RetweetWithCommentTimestamp,
    LikeTimestamp,
}

impl Column {
    pub const CANONICAL: [Column; 24] = [
        Column::TextTokens,
        Column::Hashtags,
        Column::TweetId,
        Column::PresentMedia,
        Column::PresentLinks,
        Column::PresentDomains,
        Column::TweetType,
        Column::Language,
        Column::TweetTimestamp,
        Column::AuthorId,
        Column::AuthorFollowerCount,
        Column::AuthorFollowingCount,
        Column::AuthorVerified,
        Column::AuthorAccountCreation,
        Column::UserId,
        Column::UserFollowerCount,
        Column::UserFollowingCount,
        Column::UserVerified,
        Column::UserAccountCreation,
        Column::EngageeFollowsEngager,
        Column::ReplyTimestamp,
        Column::RetweetTimestamp,
        Column::RetweetWithCommentTimestamp,
        Column::LikeTimestamp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Column::TextTokens => "text_token_ids",
            Column::Hashtags => "hashtag_ids",
            Column::TweetId => "tweet_id",
            Column::PresentMedia => "present_media",
            Column::PresentLinks => "present_links",
            Column::PresentDomains => "present_domains",
            Column::TweetType => "tweet_type",
            Column::Language => "language_id",
            Column::TweetTimestamp => "tweet_timestamp",
            Column::AuthorId => "author_id",
            Column::AuthorFollowerCount => "author_follower_count",
            Column::AuthorFollowingCount => "author_following_count",
            Column::AuthorVerified => "author_verified",
            Column::AuthorAccountCreation => "author_account_creation",
            Column::UserId => "user_id",
            Column::UserFollowerCount => "user_follower_count",
            Column::UserFollowingCount => "user_following_count",
            Column::UserVerified => "user_verified",
            Column::UserAccountCreation => "user_account_creation",
            Column::EngageeFollowsEngager => "engagee_follows_engager",
            Column::ReplyTimestamp => "reply_timestamp",
            Column::RetweetTimestamp => "retweet_timestamp",
            Column::RetweetWithCommentTimestamp => "retweet_with_comment_timestamp",
            Column::LikeTimestamp => "like_timestamp",
        }
    }
}

impl FromStr for Column {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Column::CANONICAL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown column '{s}'"))
    }
}

/// Delimiters and column order of a dataset file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormatConfig {
    pub field_delimiter: u8,
    pub list_delimiter: u8,
    pub columns: Vec<Column>,
}

impl Default for FormatConfig {
    fn default() -> Self {
        FormatConfig {
            field_delimiter: 0x01,
            list_delimiter: 0x09,
            columns: Column::CANONICAL.to_vec(),
        }
    }
}

impl FormatConfig {
    /// Checks that every column appears exactly once and delimiters are usable.
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.field_delimiter == self.list_delimiter {
            return Err(IngestError::Config(
                "field and list delimiters must differ".into(),
            ));
        }
        for d in [self.field_delimiter, self.list_delimiter] {
            if d == b'\n' || d == b'\r' {
                return Err(IngestError::Config("delimiter cannot be a line break".into()));
            }
        }
        if self.columns.len() != Column::CANONICAL.len() {
            return Err(IngestError::Config(format!(
                "expected {} columns, got {}",
                Column::CANONICAL.len(),
                self.columns.len()
            )));
        }
        for c in Column::CANONICAL {
            if self.columns.iter().filter(|&&x| x == c).count() != 1 {
                return Err(IngestError::Config(format!(
                    "column '{}' must appear exactly once",
                    c.name()
                )));
            }
        }
        Ok(())
    }

    /// Position of each canonical column within a line.
    fn positions(&self) -> [usize; 24] {
        let mut pos = [0usize; 24];
        for (i, col) in self.columns.iter().enumerate() {
            pos[*col as usize] = i;
        }
        pos
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    /// 1-based line number.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ParseReport {
    pub total: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub first_rejections: Vec<Rejection>,
}

/// Lazy, single-pass record stream over a buffered reader.
///
/// Yields `Err` only for fatal stream errors; malformed lines are skipped and
/// recorded in [`RecordStream::report`]. After a fatal error the stream ends.
pub struct RecordStream<R> {
    reader: R,
    config: FormatConfig,
    positions: [usize; 24],
    line: Vec<u8>,
    fields: Vec<(usize, usize)>,
    report: ParseReport,
    done: bool,
}

/// Parses a dataset stream with the given format.
pub fn parse_dataset<R: BufRead>(
    reader: R,
    config: &FormatConfig,
) -> Result<RecordStream<R>, IngestError> {
    config.validate()?;
    Ok(RecordStream {
        reader,
        positions: config.positions(),
        config: config.clone(),
        line: Vec::with_capacity(1024),
        fields: Vec::with_capacity(24),
        report: ParseReport::default(),
        done: false,
    })
}

impl<R: BufRead> RecordStream<R> {
    pub fn report(&self) -> &ParseReport {
        &self.report
    }

    pub fn into_report(self) -> ParseReport {
        self.report
    }

    /// Drains the stream into a vector, returning it with the final report.
    pub fn collect_all(mut self) -> Result<(Vec<InteractionRecord>, ParseReport), IngestError> {
        let mut out = Vec::new();
        for rec in self.by_ref() {
            out.push(rec?);
        }
        Ok((out, self.report))
    }

    fn reject(&mut self, reason: String) {
        self.report.rejected += 1;
        if self.report.first_rejections.len() < MAX_REPORTED_REJECTIONS {
            self.report.first_rejections.push(Rejection {
                line: self.report.total,
                reason,
            });
        }
    }

    fn decode_line(&mut self) -> Result<InteractionRecord, String> {
        let mut end = self.line.len();
        if end > 0 && self.line[end - 1] == b'\n' {
            end -= 1;
        }
        if end > 0 && self.line[end - 1] == b'\r' {
            end -= 1;
        }
        let bytes = &self.line[..end];
        if bytes.is_empty() {
            return Err("empty line".into());
        }
        let text = std::str::from_utf8(bytes).map_err(|e| format!("invalid UTF-8: {e}"))?;

        self.fields.clear();
        let mut start = 0;
        for (i, b) in bytes.iter().enumerate() {
            if *b == self.config.field_delimiter {
                self.fields.push((start, i));
                start = i + 1;
            }
        }
        self.fields.push((start, bytes.len()));
        if self.fields.len() != Column::CANONICAL.len() {
            return Err(format!(
                "expected {} columns, found {}",
                Column::CANONICAL.len(),
                self.fields.len()
            ));
        }

        let field = |c: Column| {
            let (s, e) = self.fields[self.positions[c as usize]];
            &text[s..e]
        };
        decode_fields(field, self.config.list_delimiter as char)
    }
}

impl<R: BufRead> Iterator for RecordStream<R> {
    type Item = Result<InteractionRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            self.line.clear();
            match self.reader.read_until(b'\n', &mut self.line) {
                Ok(0) => self.done = true,
                Ok(_) => {
                    self.report.total += 1;
                    match self.decode_line() {
                        Ok(rec) => {
                            self.report.accepted += 1;
                            return Some(Ok(rec));
                        }
                        Err(reason) => self.reject(reason),
                    }
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => {
                    self.done = true;
                    return Some(Err(IngestError::Io(e)));
                }
            }
        }
        None
    }
}

fn decode_fields<'a>(
    field: impl Fn(Column) -> &'a str,
    list_delim: char,
) -> Result<InteractionRecord, String> {
    let list = |c: Column| -> Vec<&'a str> {
        let s = field(c);
        if s.is_empty() {
            Vec::new()
        } else {
            s.split(list_delim).collect()
        }
    };
    let count = |c: Column| -> u32 { list(c).len() as u32 };
    let uint = |c: Column| -> Result<u64, String> {
        field(c)
            .parse::<u64>()
            .map_err(|_| format!("{}: not a non-negative integer: '{}'", c.name(), field(c)))
    };
    let timestamp = |c: Column| -> Result<u64, String> {
        let v = uint(c)?;
        if v == 0 {
            return Err(format!("{}: timestamp must be positive", c.name()));
        }
        Ok(v)
    };
    let optional_ts = |c: Column| -> Result<Option<u64>, String> {
        if field(c).is_empty() {
            Ok(None)
        } else {
            timestamp(c).map(Some)
        }
    };
    let boolean = |c: Column| -> Result<bool, String> {
        let s = field(c);
        if s.eq_ignore_ascii_case("true") {
            Ok(true)
        } else if s.eq_ignore_ascii_case("false") {
            Ok(false)
        } else {
            Err(format!("{}: not a boolean: '{s}'", c.name()))
        }
    };
    let id = |c: Column| -> Result<String, String> {
        let s = field(c);
        if s.is_empty() {
            Err(format!("{}: empty identifier", c.name()))
        } else {
            Ok(s.to_owned())
        }
    };

    let text_token_ids = list(Column::TextTokens)
        .into_iter()
        .map(|t| {
            t.parse::<u32>()
                .map_err(|_| format!("text_token_ids: not an integer token: '{t}'"))
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(InteractionRecord {
        text_token_ids,
        hashtag_ids: list(Column::Hashtags).into_iter().map(str::to_owned).collect(),
        tweet_id: id(Column::TweetId)?,
        media_count: count(Column::PresentMedia),
        link_count: count(Column::PresentLinks),
        domain_count: count(Column::PresentDomains),
        tweet_type: field(Column::TweetType)
            .parse()
            .map_err(|e| format!("tweet_type: {e}"))?,
        language_id: id(Column::Language)?,
        tweet_timestamp: timestamp(Column::TweetTimestamp)?,
        author_id: id(Column::AuthorId)?,
        author_follower_count: uint(Column::AuthorFollowerCount)?,
        author_following_count: uint(Column::AuthorFollowingCount)?,
        author_verified: boolean(Column::AuthorVerified)?,
        author_account_creation: timestamp(Column::AuthorAccountCreation)?,
        user_id: id(Column::UserId)?,
        user_follower_count: uint(Column::UserFollowerCount)?,
        user_following_count: uint(Column::UserFollowingCount)?,
        user_verified: boolean(Column::UserVerified)?,
        user_account_creation: timestamp(Column::UserAccountCreation)?,
        engagee_follows_engager: boolean(Column::EngageeFollowsEngager)?,
        reply_ts: optional_ts(Column::ReplyTimestamp)?,
        retweet_ts: optional_ts(Column::RetweetTimestamp)?,
        rwc_ts: optional_ts(Column::RetweetWithCommentTimestamp)?,
        like_ts: optional_ts(Column::LikeTimestamp)?,
    })
}

/// Writes one record as a dataset line (terminated by `\n`).
///
/// Media, link and domain lists are emitted as `count` placeholder items,
/// since parsing keeps only their counts.
pub fn write_record<W: Write>(
    out: &mut W,
    record: &InteractionRecord,
    config: &FormatConfig,
) -> io::Result<()> {
    let ld = config.list_delimiter as char;
    let join = |items: &mut dyn Iterator<Item = String>| -> String {
        let mut s = String::new();
        for (i, it) in items.enumerate() {
            if i > 0 {
                s.push(ld);
            }
            s.push_str(&it);
        }
        s
    };
    let placeholders = |prefix: &str, n: u32| join(&mut (0..n).map(|i| format!("{prefix}{i}")));
    let opt = |v: Option<u64>| v.map(|t| t.to_string()).unwrap_or_default();

    for (i, col) in config.columns.iter().enumerate() {
        if i > 0 {
            out.write_all(&[config.field_delimiter])?;
        }
        let value = match col {
            Column::TextTokens => join(&mut record.text_token_ids.iter().map(|t| t.to_string())),
            Column::Hashtags => join(&mut record.hashtag_ids.iter().cloned()),
            Column::TweetId => record.tweet_id.clone(),
            Column::PresentMedia => placeholders("media", record.media_count),
            Column::PresentLinks => placeholders("link", record.link_count),
            Column::PresentDomains => placeholders("domain", record.domain_count),
            Column::TweetType => record.tweet_type.as_str().to_owned(),
            Column::Language => record.language_id.clone(),
            Column::TweetTimestamp => record.tweet_timestamp.to_string(),
            Column::AuthorId => record.author_id.clone(),
            Column::AuthorFollowerCount => record.author_follower_count.to_string(),
            Column::AuthorFollowingCount => record.author_following_count.to_string(),
            Column::AuthorVerified => record.author_verified.to_string(),
            Column::AuthorAccountCreation => record.author_account_creation.to_string(),
            Column::UserId => record.user_id.clone(),
            Column::UserFollowerCount => record.user_follower_count.to_string(),
            Column::UserFollowingCount => record.user_following_count.to_string(),
            Column::UserVerified => record.user_verified.to_string(),
            Column::UserAccountCreation => record.user_account_creation.to_string(),
            Column::EngageeFollowsEngager => record.engagee_follows_engager.to_string(),
            Column::ReplyTimestamp => opt(record.reply_ts),
            Column::RetweetTimestamp => opt(record.retweet_ts),
            Column::RetweetWithCommentTimestamp => opt(record.rwc_ts),
            Column::LikeTimestamp => opt(record.like_ts),
        };
        out.write_all(value.as_bytes())?;
    }
    out.write_all(b"\n")
}
