//! Word-count and word-category percentage signals from transcripts.
//!
//! Categories come from a user-supplied lexicon whose patterns are either
//! literal words or prefixes ending in `*`. The four summary dimensions
//! (analytic, clout, authentic, tone) are not computed here; they are read
//! from an external per-participant table and copied through.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde_json::{Map, Value};

use crate::data::{csv_err, open_csv, parse_real, FeatureColumn, FeatureTable, Modality};
use crate::error::{Error, Result};

pub const WORD_COUNT: &str = "Word Count";
pub const LONG_WORDS: &str = "Words > 6 Letters";

/// External dimension keys (CSV column names) and their signal names.
pub const EXTERNAL_DIMENSIONS: [(&str, &str); 4] = [
    ("analytic", "Analytical Thinking"),
    ("clout", "Clout"),
    ("authentic", "Authentic"),
    ("tone", "Emotional Tone"),
];

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Lowercased word tokens. Whitespace and punctuation separate tokens;
/// an apostrophe between two word characters stays inside the token.
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if is_word_char(c) {
            current.extend(c.to_lowercase());
        } else if is_apostrophe(c)
            && !current.is_empty()
            && chars.get(i + 1).is_some_and(|&n| is_word_char(n))
        {
            current.push('\'');
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pattern {
    Exact(String),
    Prefix(String),
}

impl Pattern {
    pub fn parse(raw: &str) -> Result<Pattern> {
        let p = raw.trim().to_lowercase();
        let stem = p.strip_suffix('*').unwrap_or(&p);
        if stem.is_empty() || stem.contains('*') || stem.chars().any(char::is_whitespace) {
            return Err(Error::InvalidPattern(raw.to_string()));
        }
        Ok(if stem.len() < p.len() {
            Pattern::Prefix(stem.to_string())
        } else {
            Pattern::Exact(p)
        })
    }

    pub fn matches(&self, token: &str) -> bool {
        match self {
            Pattern::Exact(w) => token == w,
            Pattern::Prefix(s) => token.starts_with(s.as_str()),
        }
    }

    fn render(&self) -> String {
        match self {
            Pattern::Exact(w) => w.clone(),
            Pattern::Prefix(s) => format!("{s}*"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Category {
    pub name: String,
    pub patterns: Vec<Pattern>,
}

impl Category {
    pub fn matches(&self, token: &str) -> bool {
        self.patterns.iter().any(|p| p.matches(token))
    }
}

/// Ordered category name to pattern set.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    pub categories: Vec<Category>,
}

impl Lexicon {
    pub fn new<S: AsRef<str>>(entries: &[(&str, &[S])]) -> Result<Lexicon> {
        let mut seen = HashSet::new();
        let mut categories = Vec::with_capacity(entries.len());
        for (name, patterns) in entries {
            if !seen.insert(name.to_string()) {
                return Err(Error::Invalid(format!(
                    "duplicate lexicon category `{name}`"
                )));
            }
            categories.push(Category {
                name: name.to_string(),
                patterns: patterns
                    .iter()
                    .map(|p| Pattern::parse(p.as_ref()))
                    .collect::<Result<_>>()?,
            });
        }
        Ok(Lexicon { categories })
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Lexicon> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        let Value::Object(map) = value else {
            return Err(Error::parse(
                path,
                1,
                "lexicon must be a JSON object of category -> patterns",
            ));
        };
        let mut entries: Vec<(String, Vec<String>)> = Vec::with_capacity(map.len());
        for (name, patterns) in map {
            let Value::Array(items) = patterns else {
                return Err(Error::parse(
                    path,
                    1,
                    format!("category `{name}` must map to an array"),
                ));
            };
            let words = items
                .into_iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s),
                    other => Err(Error::parse(
                        path,
                        1,
                        format!("category `{name}`: `{other}` is not a string"),
                    )),
                })
                .collect::<Result<Vec<String>>>()?;
            entries.push((name, words));
        }
        let borrowed: Vec<(&str, &[String])> = entries
            .iter()
            .map(|(n, p)| (n.as_str(), p.as_slice()))
            .collect();
        Lexicon::new(&borrowed)
    }

    pub fn to_json(&self) -> String {
        let map: Map<String, Value> = self
            .categories
            .iter()
            .map(|c| {
                let patterns = c
                    .patterns
                    .iter()
                    .map(|p| Value::String(p.render()))
                    .collect();
                (c.name.clone(), Value::Array(patterns))
            })
            .collect();
        serde_json::to_string_pretty(&Value::Object(map)).expect("string map serializes")
    }

    pub fn names(&self) -> Vec<String> {
        self.categories.iter().map(|c| c.name.clone()).collect()
    }

    /// A small illustrative lexicon; not a substitute for a full dictionary.
    pub fn demo() -> Lexicon {
        Lexicon::new(&[
            (
                "Personal Pronouns",
                &[
                    "i", "me", "my", "mine", "we", "us", "our", "you", "your", "he", "she", "they",
                    "them",
                ][..],
            ),
            (
                "Negations",
                &[
                    "no", "not", "never", "don't", "can't", "won't", "didn't", "nothing",
                ][..],
            ),
            (
                "Positive Emotion",
                &[
                    "happy", "love*", "glad", "great", "fun", "laugh*", "nice", "good",
                ][..],
            ),
            (
                "Negative Emotion",
                &["sad", "hate*", "angry", "upset", "awful", "worr*", "bad"][..],
            ),
            (
                "Social Processes",
                &[
                    "friend*", "family", "talk*", "chat*", "mom", "dad", "we", "people",
                ][..],
            ),
            ("Assent", &["yes", "yeah", "ok", "okay", "sure"][..]),
            ("Fillers", &["um", "uh", "hmm", "like"][..]),
        ])
        .expect("demo lexicon is valid")
    }
}

pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Lexicon> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Lexicon::from_json(&text, path)
}

pub fn save_lexicon(lexicon: &Lexicon, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, lexicon.to_json() + "\n").map_err(|e| Error::io(path, e))
}

/// Percentage of tokens matching each category, in lexicon order. A token
/// may count toward several categories.
pub fn category_percentages(tokens: &[String], lexicon: &Lexicon) -> Result<Vec<(String, f64)>> {
    if tokens.is_empty() {
        return Err(Error::EmptyTokenList);
    }
    let total = tokens.len() as f64;
    Ok(lexicon
        .categories
        .iter()
        .map(|c| {
            let hits = tokens.iter().filter(|t| c.matches(t)).count();
            (c.name.clone(), 100.0 * hits as f64 / total)
        })
        .collect())
}

/// Letters only; apostrophes and digits do not count.
pub fn letter_count(token: &str) -> usize {
    token.chars().filter(|c| c.is_alphabetic()).count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub participant_id: String,
    pub utterances: Vec<String>,
}

impl Transcript {
    /// Blank utterances are dropped; at least one must remain.
    pub fn new(participant_id: impl Into<String>, utterances: Vec<String>) -> Result<Transcript> {
        let participant_id = participant_id.into();
        let utterances: Vec<String> = utterances
            .into_iter()
            .filter(|u| !u.trim().is_empty())
            .collect();
        if utterances.is_empty() {
            return Err(Error::EmptyTranscript(participant_id));
        }
        Ok(Transcript {
            participant_id,
            utterances,
        })
    }

    pub fn tokens(&self) -> Vec<String> {
        self.utterances.iter().flat_map(|u| tokenize(u)).collect()
    }
}

/// Reads `participant_id,utterance` rows; participants in order of first
/// appearance, utterances in file order.
pub fn read_transcripts_csv(path: impl AsRef<Path>) -> Result<Vec<Transcript>> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.len() != 2 || &header[0] != "participant_id" || &header[1] != "utterance" {
        return Err(Error::parse(
            path,
            1,
            "expected header `participant_id,utterance`",
        ));
    }
    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, Vec<String>> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let id = rec[0].to_string();
        by_id
            .entry(id.clone())
            .or_insert_with(|| {
                order.push(id);
                Vec::new()
            })
            .push(rec[1].to_string());
    }
    order
        .into_iter()
        .map(|id| {
            let utterances = by_id.remove(&id).unwrap_or_default();
            Transcript::new(id, utterances)
        })
        .collect()
}

/// Reads one plain-text transcript; each non-blank line is an utterance.
pub fn read_transcript_text(path: impl AsRef<Path>, participant_id: &str) -> Result<Transcript> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Transcript::new(participant_id, text.lines().map(str::to_string).collect())
}

/// Per-participant external dimension scores keyed by CSV column name.
pub type ExternalDimensions = HashMap<String, Vec<(String, f64)>>;

/// Reads `participant_id,analytic,clout,authentic,tone`.
pub fn read_external_dimensions(path: impl AsRef<Path>) -> Result<ExternalDimensions> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let expected: Vec<&str> = std::iter::once("participant_id")
        .chain(EXTERNAL_DIMENSIONS.iter().map(|(k, _)| *k))
        .collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::parse(
            path,
            1,
            format!("expected header `{}`", expected.join(",")),
        ));
    }
    let mut out = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let values = EXTERNAL_DIMENSIONS
            .iter()
            .enumerate()
            .map(|(j, (key, _))| Ok((key.to_string(), parse_real(path, line, key, &rec[j + 1])?)))
            .collect::<Result<Vec<_>>>()?;
        if out.insert(rec[0].to_string(), values).is_some() {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate participant `{}`", &rec[0]),
            ));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinguisticFeatureRow {
    pub word_count: usize,
    /// Supplied dimensions as (signal name, value), in the fixed dimension order.
    pub external: Vec<(String, f64)>,
    pub long_words: f64,
    pub categories: Vec<(String, f64)>,
}

impl LinguisticFeatureRow {
    pub fn names(&self) -> Vec<String> {
        std::iter::once(WORD_COUNT.to_string())
            .chain(self.external.iter().map(|(n, _)| n.clone()))
            .chain(std::iter::once(LONG_WORDS.to_string()))
            .chain(self.categories.iter().map(|(n, _)| n.clone()))
            .collect()
    }

    pub fn values(&self) -> Vec<f64> {
        std::iter::once(self.word_count as f64)
            .chain(self.external.iter().map(|(_, v)| *v))
            .chain(std::iter::once(self.long_words))
            .chain(self.categories.iter().map(|(_, v)| *v))
            .collect()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names()
            .iter()
            .position(|n| n == name)
            .map(|i| self.values()[i])
    }
}

/// Word count, long-word percentage and category percentages over the
/// concatenated utterances. `external` keys must be dimension keys
/// (`analytic`, `clout`, `authentic`, `tone`).
pub fn linguistic_signals(
    transcript: &Transcript,
    lexicon: &Lexicon,
    external: &[(String, f64)],
) -> Result<LinguisticFeatureRow> {
    let tokens = transcript.tokens();
    if tokens.is_empty() {
        return Err(Error::EmptyTranscript(transcript.participant_id.clone()));
    }
    let mut ext = Vec::new();
    for (key, _) in external {
        if !EXTERNAL_DIMENSIONS.iter().any(|(k, _)| k == key) {
            return Err(Error::Invalid(format!(
                "unknown external dimension `{key}`"
            )));
        }
    }
    for (key, name) in EXTERNAL_DIMENSIONS {
        if let Some((_, v)) = external.iter().find(|(k, _)| k == key) {
            ext.push((name.to_string(), *v));
        }
    }
    let long = tokens.iter().filter(|t| letter_count(t) > 6).count();
    Ok(LinguisticFeatureRow {
        word_count: tokens.len(),
        external: ext,
        long_words: 100.0 * long as f64 / tokens.len() as f64,
        categories: category_percentages(&tokens, lexicon)?,
    })
}

/// One row per transcript, tagged `linguistic`. When `external` is given
/// every participant must have an entry.
pub fn extract_linguistic_features(
    transcripts: &[Transcript],
    lexicon: &Lexicon,
    external: Option<&ExternalDimensions>,
) -> Result<FeatureTable> {
    let rows = transcripts
        .iter()
        .map(|t| {
            let ext = match external {
                Some(table) => table.get(&t.participant_id).cloned().ok_or_else(|| {
                    Error::MissingParticipant {
                        id: t.participant_id.clone(),
                        source_name: "external dimensions".into(),
                    }
                })?,
                None => Vec::new(),
            };
            linguistic_signals(t, lexicon, &ext)
        })
        .collect::<Result<Vec<_>>>()?;
    let names = match rows.first() {
        Some(r) => r.names(),
        None => return Err(Error::EmptyInput("no transcripts".into())),
    };
    FeatureTable::from_rows(
        transcripts
            .iter()
            .map(|t| t.participant_id.clone())
            .collect(),
        names
            .into_iter()
            .map(|n| FeatureColumn::new(n, Modality::Linguistic))
            .collect(),
        &rows
            .iter()
            .map(LinguisticFeatureRow::values)
            .collect::<Vec<_>>(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(tokenize("I don't know..."), toks(&["i", "don't", "know"]));
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("Movie night, movie night!").len(), 4);
        assert_eq!(
            tokenize("'quoted' rock'n'roll 42 well-known"),
            toks(&["quoted", "rock'n'roll", "42", "well", "known"])
        );
        assert_eq!(tokenize("It\u{2019}s"), toks(&["it's"]));
    }

    #[test]
    fn pattern_validation() {
        let lex = Lexicon::new(&[("social", &["friend*", "chat"][..])]).unwrap();
        assert_eq!(lex.categories.len(), 1);
        assert_eq!(lex.categories[0].patterns.len(), 2);
        assert!(matches!(
            Pattern::parse("fr*end"),
            Err(Error::InvalidPattern(_))
        ));
        assert!(matches!(Pattern::parse("*"), Err(Error::InvalidPattern(_))));
        assert!(matches!(Pattern::parse(""), Err(Error::InvalidPattern(_))));
        assert_eq!(
            Pattern::parse("Laugh*").unwrap(),
            Pattern::Prefix("laugh".into())
        );
    }

    #[test]
    fn lexicon_json_round_trip() {
        let lex = Lexicon::demo();
        let back = Lexicon::from_json(&lex.to_json(), Path::new("demo.json")).unwrap();
        assert_eq!(back, lex);
        assert!(matches!(
            Lexicon::from_json(r#"{"a": ["fr*end"]}"#, Path::new("x")),
            Err(Error::InvalidPattern(_))
        ));
        assert!(matches!(
            Lexicon::from_json("[1, 2]", Path::new("x")),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn percentages() {
        let social = Lexicon::new(&[("social", &["friend*", "laugh*"][..])]).unwrap();
        let p = category_percentages(&toks(&["my", "friends", "laughed"]), &social).unwrap();
        assert!((p[0].1 - 200.0 / 3.0).abs() < 1e-12);

        let all = Lexicon::new(&[("all", &["a", "b"][..])]).unwrap();
        assert_eq!(
            category_percentages(&toks(&["a", "b", "a"]), &all).unwrap()[0].1,
            100.0
        );
        assert!(category_percentages(&toks(&["a"]), &Lexicon::default())
            .unwrap()
            .is_empty());
        assert!(matches!(
            category_percentages(&[], &all),
            Err(Error::EmptyTokenList)
        ));
    }

    #[test]
    fn signals_of_simple_transcripts() {
        let t = Transcript::new("p1", vec!["hello there friend".into()]).unwrap();
        let row = linguistic_signals(&t, &Lexicon::default(), &[]).unwrap();
        assert_eq!(row.word_count, 3);
        assert_eq!(row.long_words, 0.0);

        let t = Transcript::new("p2", vec!["a".to_string(); 10]).unwrap();
        assert_eq!(
            linguistic_signals(&t, &Lexicon::default(), &[])
                .unwrap()
                .word_count,
            10
        );

        assert!(matches!(
            Transcript::new("p3", vec!["  ".into()]),
            Err(Error::EmptyTranscript(_))
        ));
        let t = Transcript::new("p4", vec!["...".into()]).unwrap();
        assert!(matches!(
            linguistic_signals(&t, &Lexicon::default(), &[]),
            Err(Error::EmptyTranscript(_))
        ));
    }

    #[test]
    fn long_words_count_letters_only() {
        assert_eq!(letter_count("shouldn't"), 8);
        assert_eq!(letter_count("doesn't"), 6);
        assert_eq!(letter_count("1234567"), 0);
        let t = Transcript::new("p", vec!["doesn't shouldn't".into()]).unwrap();
        assert_eq!(
            linguistic_signals(&t, &Lexicon::default(), &[])
                .unwrap()
                .long_words,
            50.0
        );
    }

    #[test]
    fn external_dimensions_copied_in_fixed_order() {
        let t = Transcript::new("p", vec!["hi".into()]).unwrap();
        let ext = vec![("tone".to_string(), 80.0), ("analytic".to_string(), 12.5)];
        let row = linguistic_signals(&t, &Lexicon::default(), &ext).unwrap();
        assert_eq!(
            row.names(),
            toks(&[
                WORD_COUNT,
                "Analytical Thinking",
                "Emotional Tone",
                LONG_WORDS
            ])
        );
        assert_eq!(row.get("Emotional Tone"), Some(80.0));
        let bad = vec![("valence".to_string(), 1.0)];
        assert!(linguistic_signals(&t, &Lexicon::default(), &bad).is_err());
    }

    fn utterance() -> impl Strategy<Value = String> {
        prop::collection::vec(
            prop::sample::select(vec![
                "i",
                "we",
                "friends",
                "laughed",
                "don't",
                "happy",
                "extraordinary",
                "um",
                "yes",
                "people",
                "talked",
                "42",
                "sad",
            ]),
            1..12,
        )
        .prop_map(|w| w.join(" "))
    }

    proptest! {
        #[test]
        fn percentages_bounded_and_order_free(mut utts in prop::collection::vec(utterance(), 1..6), seed in 0usize..100) {
            let lex = Lexicon::demo();
            let a = linguistic_signals(&Transcript::new("p", utts.clone()).unwrap(), &lex, &[]).unwrap();
            let k = seed % utts.len();
            utts.rotate_left(k);
            utts.reverse();
            let b = linguistic_signals(&Transcript::new("p", utts).unwrap(), &lex, &[]).unwrap();
            for (x, y) in a.categories.iter().zip(&b.categories) {
                prop_assert!((0.0..=100.0).contains(&x.1));
                prop_assert!((x.1 - y.1).abs() < 1e-9);
            }
            prop_assert_eq!(a.word_count, b.word_count);
        }

        #[test]
        fn duplication_doubles_count_only(utts in prop::collection::vec(utterance(), 1..6)) {
            let lex = Lexicon::demo();
            let a = linguistic_signals(&Transcript::new("p", utts.clone()).unwrap(), &lex, &[]).unwrap();
            let twice: Vec<String> = utts.iter().chain(utts.iter()).cloned().collect();
            let b = linguistic_signals(&Transcript::new("p", twice).unwrap(), &lex, &[]).unwrap();
            prop_assert_eq!(b.word_count, 2 * a.word_count);
            prop_assert!((a.long_words - b.long_words).abs() < 1e-9);
            for (x, y) in a.categories.iter().zip(&b.categories) {
                prop_assert!((x.1 - y.1).abs() < 1e-9);
            }
        }

        #[test]
        fn superset_category_dominates(utts in prop::collection::vec(utterance(), 1..6)) {
            let lex = Lexicon::new(&[
                ("small", &["friend*", "happy"][..]),
                ("large", &["friend*", "happy", "people", "we"][..]),
            ]).unwrap();
            let row = linguistic_signals(&Transcript::new("p", utts).unwrap(), &lex, &[]).unwrap();
            prop_assert!(row.categories[1].1 >= row.categories[0].1);
        }
    }
}
