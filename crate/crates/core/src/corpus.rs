//! Raw record loading, tag filtering and per-page trait aggregation.
//!
//! Input files:
//! - applications: `book_id,tag,count` (delimited text, optional header)
//! - pages: `page_id,book_id` (delimited text, optional header)
//! - users: JSON lines with `user_id`, the five factor scores and `liked_pages`

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::median;

/// One of the Big Five personality factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Factor {
    Extraversion,
    Agreeableness,
    Openness,
    Neuroticism,
    Conscientiousness,
}

impl Factor {
    pub const ALL: [Factor; 5] = [
        Factor::Extraversion,
        Factor::Agreeableness,
        Factor::Openness,
        Factor::Neuroticism,
        Factor::Conscientiousness,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Factor::Extraversion => "extraversion",
            Factor::Agreeableness => "agreeableness",
            Factor::Openness => "openness",
            Factor::Neuroticism => "neuroticism",
            Factor::Conscientiousness => "conscientiousness",
        }
    }

    /// Labels for the low and high pole of the factor.
    pub fn poles(self) -> (&'static str, &'static str) {
        match self {
            Factor::Extraversion => ("Introverted", "Extraverted"),
            Factor::Agreeableness => ("Disagreeable", "Agreeable"),
            Factor::Openness => ("Traditional", "Open"),
            Factor::Neuroticism => ("Levelheaded", "Neurotic"),
            Factor::Conscientiousness => ("Tardy", "Conscientious"),
        }
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Factor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Factor::ALL
            .into_iter()
            .find(|f| f.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::invalid(format!("unknown factor `{s}`")))
    }
}

/// Scores on the five factors, indexed by [`Factor::index`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorScores(pub [f64; 5]);

impl FactorScores {
    pub fn get(&self, factor: Factor) -> f64 {
        self.0[factor.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagApplication {
    pub book_id: String,
    pub tag: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: String,
    pub scores: FactorScores,
    pub liked_pages: Vec<String>,
}

/// Closed interval the questionnaire scores must fall in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreScale {
    pub min: f64,
    pub max: f64,
}

impl Default for ScoreScale {
    fn default() -> Self {
        ScoreScale { min: 1.0, max: 5.0 }
    }
}

impl ScoreScale {
    pub fn contains(&self, v: f64) -> bool {
        v.is_finite() && v >= self.min && v <= self.max
    }
}

/// Thresholds for tag filtering and page aggregation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterPolicy {
    pub min_per_book: u64,
    pub min_total: u64,
    pub min_books: usize,
    pub min_chars: usize,
    pub min_letters: usize,
    pub max_nonenglish: usize,
    pub min_page_likers: usize,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        FilterPolicy {
            min_per_book: 3,
            min_total: 50,
            min_books: 15,
            min_chars: 3,
            min_letters: 1,
            max_nonenglish: 2,
            min_page_likers: 50,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TagCorpus {
    pub books: Vec<String>,
    pub tags: Vec<String>,
    pub applications: Vec<TagApplication>,
    /// page id -> book ids, each page with at least one book
    pub page_books: BTreeMap<String, Vec<String>>,
    pub users: Vec<UserRecord>,
}

#[derive(Debug, Clone)]
pub struct CorpusPaths {
    pub applications: PathBuf,
    pub pages: PathBuf,
    pub users: PathBuf,
}

/// Lowercase, trim, and join internal whitespace runs with single hyphens.
pub fn normalize_tag(raw: &str) -> String {
    raw.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join("-")
}

fn is_english_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '\'')
}

/// Character rules: minimum length, minimum letters, maximum characters
/// outside ASCII letters, digits, hyphen, underscore and apostrophe.
pub fn passes_character_rules(tag: &str, policy: &FilterPolicy) -> bool {
    let chars = tag.chars().count();
    let letters = tag.chars().filter(|c| c.is_alphabetic()).count();
    let foreign = tag.chars().filter(|&c| !is_english_char(c)).count();
    chars >= policy.min_chars && letters >= policy.min_letters && foreign <= policy.max_nonenglish
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(file))
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn malformed(path: &Path, line: u64, reason: impl Into<String>) -> Error {
    Error::MalformedRow {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

#[derive(Deserialize)]
struct UserLine {
    user_id: String,
    extraversion: f64,
    agreeableness: f64,
    openness: f64,
    neuroticism: f64,
    conscientiousness: f64,
    liked_pages: Vec<String>,
}

#[derive(Serialize)]
struct UserLineOut<'a> {
    user_id: &'a str,
    extraversion: f64,
    agreeableness: f64,
    openness: f64,
    neuroticism: f64,
    conscientiousness: f64,
    liked_pages: &'a [String],
}

/// Load the three input files. Returns the corpus and the warnings raised
/// (currently only merged duplicate `(book, tag)` rows).
pub fn load_corpus(paths: &CorpusPaths, scale: ScoreScale) -> Result<(TagCorpus, Vec<String>)> {
    let mut warnings = Vec::new();
    let mut corpus = TagCorpus::default();

    // applications
    let mut seen_books = BTreeSet::new();
    let mut seen_tags = BTreeSet::new();
    let mut index: HashMap<(String, String), usize> = HashMap::new();
    let path = paths.applications.as_path();
    for (i, rec) in csv_reader(path)?.records().enumerate() {
        let rec = rec?;
        let line = record_line(&rec);
        if i == 0 && rec.iter().eq(["book_id", "tag", "count"]) {
            continue;
        }
        if rec.len() != 3 {
            return Err(malformed(path, line, format!("expected 3 fields, found {}", rec.len())));
        }
        let book = rec[0].to_string();
        let tag = normalize_tag(&rec[1]);
        if book.is_empty() || tag.is_empty() {
            return Err(malformed(path, line, "empty book id or tag"));
        }
        let count: u64 = rec[2]
            .parse()
            .map_err(|_| malformed(path, line, format!("count `{}` is not a positive integer", &rec[2])))?;
        if count == 0 {
            return Err(malformed(path, line, "count must be at least 1"));
        }
        if seen_books.insert(book.clone()) {
            corpus.books.push(book.clone());
        }
        if seen_tags.insert(tag.clone()) {
            corpus.tags.push(tag.clone());
        }
        match index.get(&(book.clone(), tag.clone())) {
            Some(&k) => {
                corpus.applications[k].count += count;
                warnings.push(format!(
                    "{}:{line}: duplicate ({book}, {tag}) merged, count now {}",
                    path.display(),
                    corpus.applications[k].count
                ));
            }
            None => {
                index.insert((book.clone(), tag.clone()), corpus.applications.len());
                corpus.applications.push(TagApplication { book_id: book, tag, count });
            }
        }
    }

    // pages
    let path = paths.pages.as_path();
    for (i, rec) in csv_reader(path)?.records().enumerate() {
        let rec = rec?;
        let line = record_line(&rec);
        if i == 0 && rec.iter().eq(["page_id", "book_id"]) {
            continue;
        }
        if rec.len() != 2 || rec[0].is_empty() || rec[1].is_empty() {
            return Err(malformed(path, line, "expected `page_id,book_id`"));
        }
        let (page, book) = (rec[0].to_string(), rec[1].to_string());
        if !seen_books.contains(&book) {
            return Err(Error::DanglingBook {
                path: path.to_path_buf(),
                line,
                page,
                book,
            });
        }
        let books = corpus.page_books.entry(page).or_default();
        if !books.contains(&book) {
            books.push(book);
        }
    }

    // users
    let path = paths.users.as_path();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let u: UserLine = serde_json::from_str(&line).map_err(|e| malformed(path, line_no, e.to_string()))?;
        let scores = FactorScores([
            u.extraversion,
            u.agreeableness,
            u.openness,
            u.neuroticism,
            u.conscientiousness,
        ]);
        if let Some(f) = Factor::ALL.into_iter().find(|f| !scale.contains(scores.get(*f))) {
            return Err(malformed(
                path,
                line_no,
                format!("{f} score {} outside [{}, {}]", scores.get(f), scale.min, scale.max),
            ));
        }
        if let Some(page) = u.liked_pages.iter().find(|p| !corpus.page_books.contains_key(*p)) {
            return Err(Error::DanglingPage {
                path: path.to_path_buf(),
                line: line_no,
                user: u.user_id,
                page: page.clone(),
            });
        }
        corpus.users.push(UserRecord {
            user_id: u.user_id,
            scores,
            liked_pages: u.liked_pages,
        });
    }

    for w in &warnings {
        log::warn!("{w}");
    }
    Ok((corpus, warnings))
}

/// Write the corpus in the same three formats [`load_corpus`] reads.
pub fn write_corpus(corpus: &TagCorpus, paths: &CorpusPaths) -> Result<()> {
    let mut w = csv::Writer::from_path(&paths.applications)?;
    w.write_record(["book_id", "tag", "count"])?;
    for a in &corpus.applications {
        w.write_record([a.book_id.as_str(), a.tag.as_str(), &a.count.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(&paths.applications, e))?;

    let mut w = csv::Writer::from_path(&paths.pages)?;
    w.write_record(["page_id", "book_id"])?;
    for (page, books) in &corpus.page_books {
        for b in books {
            w.write_record([page.as_str(), b.as_str()])?;
        }
    }
    w.flush().map_err(|e| Error::io(&paths.pages, e))?;

    let mut out = Vec::new();
    for u in &corpus.users {
        let s = u.scores.0;
        let line = UserLineOut {
            user_id: &u.user_id,
            extraversion: s[0],
            agreeableness: s[1],
            openness: s[2],
            neuroticism: s[3],
            conscientiousness: s[4],
            liked_pages: &u.liked_pages,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.push(b'\n');
    }
    let mut f = File::create(&paths.users).map_err(|e| Error::io(&paths.users, e))?;
    f.write_all(&out).map_err(|e| Error::io(&paths.users, e))?;
    Ok(())
}

/// Apply the tag filters in fixed order: per-book minimum count, then
/// total-count and book-count minimums (recomputed on the survivors), then
/// the character rules. Books, pages and users are carried over unchanged.
pub fn filter_tags(corpus: &TagCorpus, policy: &FilterPolicy) -> TagCorpus {
    let kept: Vec<&TagApplication> = corpus
        .applications
        .iter()
        .filter(|a| a.count >= policy.min_per_book)
        .collect();

    let mut totals: HashMap<&str, (u64, usize)> = HashMap::new();
    for a in &kept {
        let e = totals.entry(a.tag.as_str()).or_default();
        e.0 += a.count;
        e.1 += 1;
    }
    let survives = |tag: &str| {
        let (total, books) = totals.get(tag).copied().unwrap_or((0, 0));
        total >= policy.min_total && books >= policy.min_books && passes_character_rules(tag, policy)
    };

    TagCorpus {
        books: corpus.books.clone(),
        tags: corpus.tags.iter().filter(|t| survives(t)).cloned().collect(),
        applications: kept.into_iter().filter(|a| survives(&a.tag)).cloned().collect(),
        page_books: corpus.page_books.clone(),
        users: corpus.users.clone(),
    }
}

/// Median factor scores of each page's likers, for pages with at least
/// `policy.min_page_likers` likers.
pub fn aggregate_page_traits(corpus: &TagCorpus, policy: &FilterPolicy) -> BTreeMap<String, FactorScores> {
    let mut likers: BTreeMap<&str, Vec<&FactorScores>> = BTreeMap::new();
    for u in &corpus.users {
        let mut pages: Vec<&String> = u.liked_pages.iter().collect();
        pages.sort();
        pages.dedup();
        for p in pages {
            likers.entry(p.as_str()).or_default().push(&u.scores);
        }
    }
    likers
        .into_iter()
        .filter(|(_, l)| l.len() >= policy.min_page_likers && !l.is_empty())
        .map(|(page, l)| {
            let mut agg = [0.0; 5];
            for f in Factor::ALL {
                let vals: Vec<f64> = l.iter().map(|s| s.get(f)).collect();
                agg[f.index()] = median(&vals).unwrap_or(f64::NAN);
            }
            (page.to_string(), FactorScores(agg))
        })
        .collect()
}

/// Write `page,<five factors>` rows.
pub fn write_page_traits(path: &Path, traits: &BTreeMap<String, FactorScores>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["page"];
    header.extend(Factor::ALL.iter().map(|f| f.name()));
    w.write_record(&header)?;
    for (page, s) in traits {
        let mut rec = vec![page.clone()];
        rec.extend(s.0.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_page_traits(path: &Path) -> Result<BTreeMap<String, FactorScores>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = record_line(&rec);
        if rec.len() != 6 {
            return Err(malformed(path, line, "expected page and five scores"));
        }
        let mut s = [0.0; 5];
        for (k, v) in s.iter_mut().enumerate() {
            *v = rec[k + 1].parse().map_err(|_| malformed(path, line, "score is not a number"))?;
        }
        out.insert(rec[0].to_string(), FactorScores(s));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn paths(dir: &Path, apps: &str, pages: &str, users: &str) -> CorpusPaths {
        CorpusPaths {
            applications: write(dir, "apps.csv", apps),
            pages: write(dir, "pages.csv", pages),
            users: write(dir, "users.jsonl", users),
        }
    }

    fn user_json(id: &str, open: f64, pages: &[&str]) -> String {
        format!(
            r#"{{"user_id":"{id}","extraversion":3,"agreeableness":3,"openness":{open},"neuroticism":3,"conscientiousness":3,"liked_pages":{}}}"#,
            serde_json::to_string(pages).unwrap()
        )
    }

    #[test]
    fn empty_application_file() {
        let dir = tempfile::tempdir().unwrap();
        let (c, w) = load_corpus(&paths(dir.path(), "", "", ""), ScoreScale::default()).unwrap();
        assert!(c.applications.is_empty());
        assert!(c.tags.is_empty());
        assert!(w.is_empty());
    }

    #[test]
    fn tag_normalization() {
        let dir = tempfile::tempdir().unwrap();
        let (c, _) = load_corpus(&paths(dir.path(), "b1, Science Fiction, 7\n", "", ""), ScoreScale::default()).unwrap();
        assert_eq!(
            c.applications,
            vec![TagApplication {
                book_id: "b1".into(),
                tag: "science-fiction".into(),
                count: 7
            }]
        );
    }

    #[test]
    fn duplicate_pairs_merge_with_warning() {
        let dir = tempfile::tempdir().unwrap();
        let p = paths(dir.path(), "book_id,tag,count\nb1,magic,2\nb1,magic,3\n", "", "");
        let (c, w) = load_corpus(&p, ScoreScale::default()).unwrap();
        assert_eq!(c.applications.len(), 1);
        assert_eq!(c.applications[0].count, 5);
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = paths(dir.path(), "b1,magic,2\nb2,fantasy,lots\n", "", "");
        match load_corpus(&p, ScoreScale::default()) {
            Err(Error::MalformedRow { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dangling_references_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = paths(dir.path(), "b1,magic,2\n", "p1,b9\n", "");
        assert!(matches!(load_corpus(&p, ScoreScale::default()), Err(Error::DanglingBook { .. })));
        let p = paths(dir.path(), "b1,magic,2\n", "p1,b1\n", &user_json("u1", 3.0, &["p2"]));
        assert!(matches!(load_corpus(&p, ScoreScale::default()), Err(Error::DanglingPage { .. })));
    }

    #[test]
    fn out_of_scale_scores_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = paths(dir.path(), "b1,magic,2\n", "p1,b1\n", &user_json("u1", 6.0, &["p1"]));
        assert!(matches!(load_corpus(&p, ScoreScale::default()), Err(Error::MalformedRow { .. })));
        let wide = ScoreScale { min: 0.0, max: 7.0 };
        assert!(load_corpus(&p, wide).is_ok());
    }

    fn corpus_of(apps: &[(&str, &str, u64)]) -> TagCorpus {
        let mut c = TagCorpus::default();
        for &(b, t, n) in apps {
            if !c.books.iter().any(|x| x == b) {
                c.books.push(b.into());
            }
            if !c.tags.iter().any(|x| x == t) {
                c.tags.push(t.into());
            }
            c.applications.push(TagApplication {
                book_id: b.into(),
                tag: t.into(),
                count: n,
            });
        }
        c
    }

    #[test]
    fn per_book_minimum_removes_low_counts() {
        let c = corpus_of(&[("b1", "magic", 2), ("b2", "magic", 3)]);
        let policy = FilterPolicy {
            min_total: 0,
            min_books: 0,
            ..FilterPolicy::default()
        };
        let f = filter_tags(&c, &policy);
        assert_eq!(f.applications.len(), 1);
        assert_eq!(f.applications[0].book_id, "b2");
    }

    #[test]
    fn character_rules() {
        let p = FilterPolicy::default();
        assert!(!passes_character_rules("ab", &p));
        assert!(!passes_character_rules("2666", &p));
        assert!(passes_character_rules("ww2", &p));
        assert!(passes_character_rules("café-noir", &p));
        assert!(!passes_character_rules("日本語の本", &p));
    }

    #[test]
    fn totals_are_recomputed_after_per_book_stage() {
        // 15 books at count 3 (total 45) plus 10 books at count 2 that stage (a) drops
        let mut apps: Vec<(String, u64)> = (0..15).map(|i| (format!("b{i}"), 3)).collect();
        apps.extend((15..25).map(|i| (format!("b{i}"), 2)));
        let refs: Vec<(&str, &str, u64)> = apps.iter().map(|(b, n)| (b.as_str(), "magic", *n)).collect();
        let f = filter_tags(&corpus_of(&refs), &FilterPolicy::default());
        assert!(f.tags.is_empty());
        assert!(f.applications.is_empty());
    }

    #[test]
    fn page_medians() {
        let mut c = TagCorpus::default();
        c.page_books.insert("p1".into(), vec!["b1".into()]);
        c.page_books.insert("p2".into(), vec!["b1".into()]);
        for (i, o) in [2.0, 3.0, 9.0].into_iter().enumerate() {
            c.users.push(UserRecord {
                user_id: format!("u{i}"),
                scores: FactorScores([3.0, 3.0, o, 3.0, 3.0]),
                liked_pages: vec!["p1".into()],
            });
        }
        for (i, o) in [2.0, 4.0].into_iter().enumerate() {
            c.users.push(UserRecord {
                user_id: format!("v{i}"),
                scores: FactorScores([3.0, 3.0, o, 3.0, 3.0]),
                liked_pages: vec!["p2".into()],
            });
        }
        let policy = FilterPolicy {
            min_page_likers: 1,
            ..FilterPolicy::default()
        };
        let agg = aggregate_page_traits(&c, &policy);
        assert_eq!(agg["p1"].get(Factor::Openness), 3.0);
        assert_eq!(agg["p2"].get(Factor::Openness), 3.0);
    }

    #[test]
    fn pages_below_liker_threshold_excluded() {
        let mut c = TagCorpus::default();
        c.page_books.insert("p1".into(), vec!["b1".into()]);
        for i in 0..49 {
            c.users.push(UserRecord {
                user_id: format!("u{i}"),
                scores: FactorScores([3.0; 5]),
                liked_pages: vec!["p1".into()],
            });
        }
        assert!(aggregate_page_traits(&c, &FilterPolicy::default()).is_empty());
        c.users.push(c.users[0].clone());
        assert_eq!(aggregate_page_traits(&c, &FilterPolicy::default()).len(), 1);
    }
}
