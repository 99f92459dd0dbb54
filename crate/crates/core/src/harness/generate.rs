//! Seeded synthetic interaction logs.
//!
//! Every row pairs an author and an engaging user drawn independently from
//! skewed activity distributions. A class is positive with probability
//! `min(1, k * rate * a * u)`, where `a` and `u` are log-normal propensities
//! of the author and user (normalized to mean 1 under the activity weights)
//! and `k >= 1` is solved so that the expected rate equals `rate` exactly
//! despite the clamp. Rows are emitted in timestamp order; the last
//! `week2_fraction` of rows fall in a second week whose rates are multiplied
//! by the per-class drift factor.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::LogNormal;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::features::SYNTHETIC_VOCABULARY;
use crate::ingest::{write_record, EngagementClass, FormatConfig, InteractionRecord, PerClass, TweetType};

/// Per-class training-set rates: Like, Reply, Retweet, Retweet with comment.
pub const DEFAULT_RATES: PerClass<f64> = PerClass([0.428, 0.025, 0.108, 0.007]);

const WEEK_SECONDS: u64 = 7 * 24 * 3600;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub rows: usize,
    pub rates: PerClass<f64>,
    pub authors: usize,
    pub users: usize,
    /// Log-normal sigma of per-entity, per-class propensities.
    pub propensity_sigma: f64,
    /// Zipf exponent of author activity.
    pub author_skew: f64,
    /// Zipf exponent of user activity.
    pub user_skew: f64,
    pub languages: usize,
    pub language_skew: f64,
    /// Fraction of rows (the latest ones) that belong to the second week.
    pub week2_fraction: f64,
    /// Per-class rate multiplier applied in the second week.
    pub drift: PerClass<f64>,
    /// Probability that a tweet contains a call-to-action token.
    pub cta_rate: f64,
    pub start_timestamp: u64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            rows: 100_000,
            rates: DEFAULT_RATES,
            authors: 2_000,
            users: 20_000,
            propensity_sigma: 0.8,
            author_skew: 0.8,
            user_skew: 0.6,
            languages: 30,
            language_skew: 1.2,
            week2_fraction: 0.0,
            drift: PerClass([1.0; 4]),
            cta_rate: 0.05,
            start_timestamp: 1_580_947_200,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.rows < 1 {
            return bad("rows must be at least 1".into());
        }
        if self.authors < 1 || self.users < 1 || self.languages < 1 {
            return bad("author, user and language populations must be at least 1".into());
        }
        for (c, &r) in self.rates.iter() {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("rate for {c} must be in [0, 1]"));
            }
            let drifted = r * self.drift[c];
            if !(0.0..=1.0).contains(&drifted) {
                return bad(format!("drifted rate for {c} must be in [0, 1]"));
            }
        }
        if !(0.0..=1.0).contains(&self.week2_fraction) || !(0.0..=1.0).contains(&self.cta_rate) {
            return bad("week2_fraction and cta_rate must be in [0, 1]".into());
        }
        if !(self.propensity_sigma >= 0.0 && self.propensity_sigma.is_finite()) {
            return bad("propensity_sigma must be a finite non-negative number".into());
        }
        for s in [self.author_skew, self.user_skew, self.language_skew] {
            if !(s >= 0.0 && s.is_finite()) {
                return bad("skew exponents must be finite and non-negative".into());
            }
        }
        if self.start_timestamp == 0 {
            return bad("start_timestamp must be positive".into());
        }
        Ok(())
    }

    fn week2_rows(&self) -> usize {
        ((self.rows as f64) * self.week2_fraction).round() as usize
    }
}

struct Entity {
    id: String,
    followers: u64,
    following: u64,
    verified: bool,
    created: u64,
    language: usize,
    propensity: PerClass<f64>,
}

fn zipf_weights(n: usize, s: f64) -> Vec<f64> {
    (0..n).map(|k| 1.0 / ((k + 1) as f64).powf(s)).collect()
}

fn make_entities(
    rng: &mut ChaCha8Rng,
    n: usize,
    sigma: f64,
    followers_mu: f64,
    languages: &WeightedIndex<f64>,
) -> Vec<Entity> {
    let followers = LogNormal::new(followers_mu, 1.5).expect("valid log-normal");
    let following = LogNormal::new(5.5, 1.2).expect("valid log-normal");
    let propensity = LogNormal::new(0.0, sigma).expect("valid log-normal");
    (0..n)
        .map(|_| Entity {
            id: format!("{:016X}", rng.random::<u64>()),
            followers: followers.sample(rng) as u64,
            following: following.sample(rng) as u64,
            verified: rng.random::<f64>() < 0.03,
            created: 1_200_000_000 + rng.random_range(0..380_000_000),
            language: languages.sample(rng),
            propensity: PerClass::from_fn(|_| propensity.sample(rng)),
        })
        .collect()
}

/// Rescales each class's propensities to weighted mean 1.
fn normalize_propensities(entities: &mut [Entity], weights: &[f64]) {
    let total: f64 = weights.iter().sum();
    for c in EngagementClass::ALL {
        let mean: f64 = entities
            .iter()
            .zip(weights)
            .map(|(e, w)| e.propensity[c] * w)
            .sum::<f64>()
            / total;
        for e in entities.iter_mut() {
            e.propensity[c] /= mean;
        }
    }
}

/// Solves `E[min(1, k * rate * a * u)] = rate` for `k` over independent
/// author and user draws.
struct Calibrator {
    /// (propensity, normalized weight) per author.
    authors: Vec<(f64, f64)>,
    /// User propensities, ascending, with prefix sums of weight and weight * propensity.
    users: Vec<f64>,
    cum_w: Vec<f64>,
    cum_wu: Vec<f64>,
}

impl Calibrator {
    fn new(author_props: &[f64], author_w: &[f64], user_props: &[f64], user_w: &[f64]) -> Self {
        let aw: f64 = author_w.iter().sum();
        let uw: f64 = user_w.iter().sum();
        let authors = author_props.iter().zip(author_w).map(|(&a, &w)| (a, w / aw)).collect();
        let mut users: Vec<(f64, f64)> =
            user_props.iter().zip(user_w).map(|(&u, &w)| (u, w / uw)).collect();
        users.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut cum_w = vec![0.0];
        let mut cum_wu = vec![0.0];
        for &(u, w) in &users {
            cum_w.push(cum_w.last().unwrap() + w);
            cum_wu.push(cum_wu.last().unwrap() + w * u);
        }
        Calibrator { authors, users: users.into_iter().map(|x| x.0).collect(), cum_w, cum_wu }
    }

    fn expected_rate(&self, scaled_rate: f64) -> f64 {
        let total_w = *self.cum_w.last().unwrap();
        self.authors
            .iter()
            .map(|&(a, wa)| {
                let base = scaled_rate * a;
                if base <= 0.0 {
                    return 0.0;
                }
                let cut = 1.0 / base;
                let k = self.users.partition_point(|&u| u < cut);
                wa * ((total_w - self.cum_w[k]) + base * self.cum_wu[k])
            })
            .sum()
    }

    /// Returns the effective scaled rate `k * rate`.
    fn solve(&self, rate: f64) -> f64 {
        if rate <= 0.0 {
            return 0.0;
        }
        if rate >= 1.0 {
            return f64::INFINITY;
        }
        let mut lo = 0.0;
        let mut hi = rate;
        while self.expected_rate(hi) < rate {
            lo = hi;
            hi *= 2.0;
            if hi > 1e12 {
                return hi;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.expected_rate(mid) < rate {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Lazily yields the synthetic records of a [`GenConfig`].
pub struct SyntheticGenerator {
    config: GenConfig,
    rng: ChaCha8Rng,
    authors: Vec<Entity>,
    users: Vec<Entity>,
    author_pick: WeightedIndex<f64>,
    user_pick: WeightedIndex<f64>,
    language_pick: WeightedIndex<f64>,
    language_ids: Vec<String>,
    /// Effective scaled rate per class, for week 1 and week 2.
    scaled: [PerClass<f64>; 2],
    week1_rows: usize,
    next_row: usize,
}

impl SyntheticGenerator {
    pub fn new(config: &GenConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let language_pick = WeightedIndex::new(zipf_weights(config.languages, config.language_skew))
            .expect("positive weights");
        let language_ids = (0..config.languages)
            .map(|_| format!("{:08X}", rng.random::<u32>()))
            .collect();
        let author_w = zipf_weights(config.authors, config.author_skew);
        let user_w = zipf_weights(config.users, config.user_skew);
        let mut authors =
            make_entities(&mut rng, config.authors, config.propensity_sigma, 7.0, &language_pick);
        let mut users =
            make_entities(&mut rng, config.users, config.propensity_sigma, 5.0, &language_pick);
        normalize_propensities(&mut authors, &author_w);
        normalize_propensities(&mut users, &user_w);

        let scaled_for = |drift: bool| {
            PerClass::from_fn(|c| {
                let a: Vec<f64> = authors.iter().map(|e| e.propensity[c]).collect();
                let u: Vec<f64> = users.iter().map(|e| e.propensity[c]).collect();
                let rate = config.rates[c] * if drift { config.drift[c] } else { 1.0 };
                Calibrator::new(&a, &author_w, &u, &user_w).solve(rate)
            })
        };
        let scaled = [scaled_for(false), scaled_for(true)];

        Ok(SyntheticGenerator {
            week1_rows: config.rows - config.week2_rows(),
            config: config.clone(),
            rng,
            authors,
            users,
            author_pick: WeightedIndex::new(author_w).expect("positive weights"),
            user_pick: WeightedIndex::new(user_w).expect("positive weights"),
            language_pick,
            language_ids,
            scaled,
            next_row: 0,
        })
    }

    fn timestamp(&self, row: usize) -> (u64, usize) {
        let start = self.config.start_timestamp;
        if row < self.week1_rows {
            let off = (row as u128 * WEEK_SECONDS as u128 / self.week1_rows as u128) as u64;
            (start + off, 0)
        } else {
            let n2 = (self.config.rows - self.week1_rows) as u128;
            let off = ((row - self.week1_rows) as u128 * WEEK_SECONDS as u128 / n2) as u64;
            (start + WEEK_SECONDS + off, 1)
        }
    }

    fn make_record(&mut self, row: usize) -> InteractionRecord {
        let (ts, week) = self.timestamp(row);
        let rng = &mut self.rng;
        let ai = self.author_pick.sample(rng);
        let ui = self.user_pick.sample(rng);
        let author = &self.authors[ai];
        let user = &self.users[ui];

        let mut tokens: Vec<u32> = (0..5 + rng.random_range(0..30))
            .map(|_| rng.random_range(3000..60_000))
            .collect();
        if rng.random::<f64>() < self.config.cta_rate {
            let (id, _) = SYNTHETIC_VOCABULARY[rng.random_range(0..SYNTHETIC_VOCABULARY.len())];
            let at = rng.random_range(0..=tokens.len());
            tokens.insert(at, id);
        }
        let n_hashtags = match rng.random_range(0..10) {
            0..=5 => 0,
            6..=7 => 1,
            8 => 2,
            _ => 3,
        };
        let hashtag_ids = (0..n_hashtags)
            .map(|_| format!("{:016X}", rng.random::<u64>()))
            .collect();
        let media_count = match rng.random_range(0..10) {
            0..=6 => 0,
            7..=8 => 1,
            _ => 2,
        };
        let link_count = u32::from(rng.random::<f64>() < 0.2);
        let tweet_type = match rng.random_range(0..100) {
            0..=54 => TweetType::TopLevel,
            55..=79 => TweetType::Retweet,
            80..=91 => TweetType::Quote,
            _ => TweetType::Original,
        };
        let language = if rng.random::<f64>() < 0.85 {
            author.language
        } else {
            self.language_pick.sample(rng)
        };
        let follows = rng.random::<f64>() < 0.35;

        let scaled = &self.scaled[week];
        let mut engagement = PerClass([None; 4]);
        for c in EngagementClass::ALL {
            let p = (scaled[c] * author.propensity[c] * user.propensity[c]).min(1.0);
            let draw = rng.random::<f64>();
            let delay = rng.random_range(1..3600u64);
            if draw < p {
                engagement[c] = Some(ts + delay);
            }
        }

        InteractionRecord {
            text_token_ids: tokens,
            hashtag_ids,
            tweet_id: format!("{:016X}{:08X}", rng.random::<u64>(), row as u32),
            media_count,
            link_count,
            domain_count: link_count,
            tweet_type,
            language_id: self.language_ids[language].clone(),
            tweet_timestamp: ts,
            author_id: author.id.clone(),
            author_follower_count: author.followers,
            author_following_count: author.following,
            author_verified: author.verified,
            author_account_creation: author.created,
            user_id: user.id.clone(),
            user_follower_count: user.followers,
            user_following_count: user.following,
            user_verified: user.verified,
            user_account_creation: user.created,
            engagee_follows_engager: follows,
            reply_ts: engagement[EngagementClass::Reply],
            retweet_ts: engagement[EngagementClass::Retweet],
            rwc_ts: engagement[EngagementClass::RetweetWithComment],
            like_ts: engagement[EngagementClass::Like],
        }
    }

    /// Expected positive rate of `class` in week 1 (0) or week 2 (1).
    pub fn target_rate(&self, class: EngagementClass, week: usize) -> f64 {
        let r = self.config.rates[class];
        if week == 0 {
            r
        } else {
            r * self.config.drift[class]
        }
    }
}

impl Iterator for SyntheticGenerator {
    type Item = InteractionRecord;

    fn next(&mut self) -> Option<InteractionRecord> {
        if self.next_row >= self.config.rows {
            return None;
        }
        let row = self.next_row;
        self.next_row += 1;
        Some(self.make_record(row))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.config.rows - self.next_row;
        (left, Some(left))
    }
}

/// Writes the dataset of `config` in the given format; returns the row count.
pub fn generate<W: Write>(
    config: &GenConfig,
    out: W,
    format: &FormatConfig,
) -> Result<usize, HarnessError> {
    format.validate()?;
    let mut out = BufWriter::new(out);
    let mut n = 0;
    for rec in SyntheticGenerator::new(config)? {
        write_record(&mut out, &rec, format)?;
        n += 1;
    }
    out.flush()?;
    Ok(n)
}

pub fn generate_to_path(
    config: &GenConfig,
    path: &Path,
    format: &FormatConfig,
) -> Result<usize, HarnessError> {
    config.validate()?;
    let file = fs::File::create(path)?;
    generate(config, file, format)
}
