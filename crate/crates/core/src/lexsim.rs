//! Word-level similarity between tags and its fusion with co-occurrence
//! similarity.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lowrank::{self, cosine_matrix};
use crate::matrix::{tfidf, SparseMatrix};

/// Split a normalized tag into lowercase words on hyphens, underscores,
/// apostrophes, any other non-alphanumeric character, and digit/letter
/// boundaries.
pub fn tokenize_tag(tag: &str) -> Vec<String> {
    let mut words = Vec::new();
    let mut current = String::new();
    let mut current_digit = false;
    for c in tag.chars() {
        if !c.is_alphanumeric() {
            if !current.is_empty() {
                words.push(std::mem::take(&mut current));
            }
            continue;
        }
        let digit = c.is_numeric();
        if !current.is_empty() && digit != current_digit {
            words.push(std::mem::take(&mut current));
        }
        current_digit = digit;
        current.extend(c.to_lowercase());
    }
    if !current.is_empty() {
        words.push(current);
    }
    words
}

/// Ordered suffix rewrite rules plus whole-word exceptions.
///
/// The first rule whose suffix matches (leaving a stem of at least
/// `min_stem` characters) is applied once. An identity rule such as
/// `ss=>ss` shields words from later, shorter rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LemmaRules {
    pub rules: Vec<(String, String)>,
    /// Words mapped directly to a lemma; identity entries keep a word as is.
    pub exceptions: BTreeMap<String, String>,
    pub min_stem: usize,
}

const DEFAULT_RULES: &str = "\
# whole-word exceptions: !word keeps it, @word=>lemma maps it
!series
!species
!news
!politics
!physics
!mathematics
!economics
!classics
!comics
!graphics
!ethics
!lyrics
!mythos
!chaos
!thesis
!bus
!always
!perhaps
@children=>child
@women=>woman
@men=>man
@people=>person
@mice=>mouse
@geese=>goose
@teeth=>tooth
@feet=>foot
@lives=>life
@wives=>wife
@knives=>knife
@movies=>movie
@cookies=>cookie
@zombies=>zombie
@pies=>pie
@ties=>tie
@calories=>calorie
@rookies=>rookie
@indies=>indie
@goodies=>goodie
@heroes=>hero
@potatoes=>potato
@tomatoes=>tomato
# suffix rules, first match wins
sses=>ss
ss=>ss
us=>us
is=>is
ies=>y
ves=>f
xes=>x
zes=>z
ches=>ch
shes=>sh
s=>
";

impl Default for LemmaRules {
    fn default() -> Self {
        LemmaRules::parse(DEFAULT_RULES).expect("built-in rules parse")
    }
}

impl LemmaRules {
    /// Parse the plain-text rules format: one `suffix=>replacement` per
    /// line, `!word` for a protected word, `@word=>lemma` for an irregular
    /// form, `#` comments and blank lines ignored.
    pub fn parse(text: &str) -> Result<LemmaRules> {
        let mut rules = Vec::new();
        let mut exceptions = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || Error::invalid(format!("rules line {}: `{line}`", n + 1));
            if let Some(word) = line.strip_prefix('!') {
                exceptions.insert(word.to_string(), word.to_string());
            } else if let Some(rest) = line.strip_prefix('@') {
                let (from, to) = rest.split_once("=>").ok_or_else(bad)?;
                exceptions.insert(from.trim().to_string(), to.trim().to_string());
            } else {
                let (suffix, rep) = line.split_once("=>").ok_or_else(bad)?;
                if suffix.trim().is_empty() {
                    return Err(bad());
                }
                rules.push((suffix.trim().to_string(), rep.trim().to_string()));
            }
        }
        Ok(LemmaRules {
            rules,
            exceptions,
            min_stem: 2,
        })
    }

    pub fn load(path: &Path) -> Result<LemmaRules> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

pub fn lemmatize(word: &str, rules: &LemmaRules) -> String {
    if let Some(lemma) = rules.exceptions.get(word) {
        return lemma.clone();
    }
    for (suffix, rep) in &rules.rules {
        if let Some(stem) = word.strip_suffix(suffix.as_str()) {
            if stem.chars().count() >= rules.min_stem {
                return format!("{stem}{rep}");
            }
        }
    }
    word.to_string()
}

/// Cosine similarity between tags computed from their lemma composition.
#[derive(Debug, Clone)]
pub struct LexicalSimilarity {
    tags: Vec<String>,
    index: HashMap<String, usize>,
    similarity: DMatrix<f64>,
}

impl LexicalSimilarity {
    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.similarity
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        Some(self.similarity[(*self.index.get(a)?, *self.index.get(b)?)])
    }
}

/// Default lexical rank: `min(50, vocabulary size)`.
pub fn default_lexical_rank(vocabulary: usize) -> usize {
    vocabulary.min(50)
}

/// Tag-by-lemma counts, weighted with the tf-idf formula (tags as documents,
/// lemmas as terms), factorized at `rank` (clamped to the matrix shape),
/// then cosine similarity between the tags' row vectors.
pub fn lexical_similarity_matrix(tags: &[String], rules: &LemmaRules, rank: usize, seed: u64) -> Result<LexicalSimilarity> {
    let lemmas_per_tag: Vec<Vec<String>> = tags
        .iter()
        .map(|t| tokenize_tag(t).iter().map(|w| lemmatize(w, rules)).collect())
        .collect();
    let vocabulary: BTreeSet<&String> = lemmas_per_tag.iter().flatten().collect();
    let vocabulary: Vec<String> = vocabulary.into_iter().cloned().collect();
    let vocab_index: HashMap<&str, usize> = vocabulary.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();

    let mut triplets = Vec::new();
    for (i, lemmas) in lemmas_per_tag.iter().enumerate() {
        if lemmas.is_empty() {
            log::warn!("tag `{}` has no words; lexical similarity 0", tags[i]);
        }
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for l in lemmas {
            *counts.entry(vocab_index[l.as_str()]).or_default() += 1.0;
        }
        triplets.extend(counts.into_iter().map(|(j, c)| (i, j, c)));
    }
    let counts = SparseMatrix::from_triplets("tag_lemma", tags.to_vec(), vocabulary, triplets)?;
    let weighted = tfidf(&counts);

    let n = tags.len();
    let similarity = if n == 0 || weighted.n_cols() == 0 {
        DMatrix::zeros(n, n)
    } else {
        let rank = rank.clamp(1, n.min(weighted.n_cols()));
        let factors = lowrank::truncated_svd(&weighted, rank, seed)?;
        cosine_matrix(&factors.row_vectors())
    };
    Ok(LexicalSimilarity {
        tags: tags.to_vec(),
        index: tags.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect(),
        similarity,
    })
}

/// `w · s_co + (1 − w) · s_lex`.
pub fn fuse_similarity(s_co: f64, s_lex: f64, w: f64) -> f64 {
    w * s_co + (1.0 - w) * s_lex
}

pub const DEFAULT_FUSION_WEIGHT: f64 = 0.95;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenization() {
        assert_eq!(tokenize_tag("historical-fiction"), ["historical", "fiction"]);
        assert_eq!(tokenize_tag("20th-century-fiction"), ["20", "th", "century", "fiction"]);
        assert_eq!(tokenize_tag("sci_fi"), ["sci", "fi"]);
        assert_eq!(tokenize_tag("children's--books"), ["children", "s", "books"]);
        assert!(tokenize_tag("--").is_empty());
    }

    #[test]
    fn lemma_examples() {
        let r = LemmaRules::default();
        assert_eq!(lemmatize("kids", &r), "kid");
        assert_eq!(lemmatize("stories", &r), "story");
        assert_eq!(lemmatize("fiction", &r), "fiction");
        assert_eq!(lemmatize("wolves", &r), "wolf");
        assert_eq!(lemmatize("classes", &r), "class");
        assert_eq!(lemmatize("class", &r), "class");
        assert_eq!(lemmatize("series", &r), "series");
        assert_eq!(lemmatize("children", &r), "child");
        assert_eq!(lemmatize("is", &r), "is");
        assert_eq!(lemmatize("20", &r), "20");
    }

    const DICTIONARY: &[&str] = &[
        "kids", "stories", "fiction", "books", "novels", "classes", "class", "wolves", "boxes", "churches",
        "wishes", "series", "news", "children", "women", "movies", "zombies", "heroes", "virus", "analysis",
        "thesis", "dragons", "vampires", "witches", "fairies", "mysteries", "thrillers", "buses", "quizzes",
        "comics", "shelves", "lives", "knives", "biographies", "essays", "plays", "ladies", "gas", "its", "yes",
        "business", "princess", "glasses", "memories", "fantasy", "romance", "horror", "humor", "poetry",
        "sci", "fi", "th", "ww", "s", "us", "boss", "cats", "dogs", "loves", "caves", "graves", "leaves",
        "potatoes", "tomatoes", "echoes", "crises", "mathematics", "politics",
    ];

    #[test]
    fn lemmatize_is_idempotent_on_dictionary() {
        let r = LemmaRules::default();
        for w in DICTIONARY {
            let once = lemmatize(w, &r);
            assert_eq!(lemmatize(&once, &r), once, "{w} -> {once}");
        }
    }

    #[test]
    fn rules_file_parsing() {
        let r = LemmaRules::parse("# comment\nies=>y\n\ns=>\n!news\n@mice=>mouse\n").unwrap();
        assert_eq!(r.rules, vec![("ies".into(), "y".into()), ("s".into(), "".into())]);
        assert_eq!(lemmatize("news", &r), "news");
        assert_eq!(lemmatize("mice", &r), "mouse");
        assert!(LemmaRules::parse("no arrow here").is_err());
    }

    #[test]
    fn lexical_similarity_examples() {
        let tags: Vec<String> = ["historical-novel", "historical-fiction", "space-opera", "kids-books", "kid-book"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let lex = lexical_similarity_matrix(&tags, &LemmaRules::default(), 50, 1).unwrap();
        assert!(lex.get("historical-novel", "historical-fiction").unwrap() > 0.0);
        assert!((lex.get("space-opera", "space-opera").unwrap() - 1.0).abs() < 1e-12);
        assert!((lex.get("kids-books", "kid-book").unwrap() - 1.0).abs() < 1e-12);
        let v = lex.get("space-opera", "historical-novel").unwrap();
        assert!(v.abs() < 1e-12, "{v}");
    }

    #[test]
    fn fusion() {
        assert_eq!(fuse_similarity(1.0, 1.0, 0.95), 1.0);
        assert!((fuse_similarity(1.0, 0.0, DEFAULT_FUSION_WEIGHT) - 0.95).abs() < 1e-15);
        assert!((fuse_similarity(0.0, 1.0, DEFAULT_FUSION_WEIGHT) - 0.05).abs() < 1e-15);
    }
}
