//! Keyword classification of OCR text.
//!
//! Text is split into uppercase alphanumeric tokens. A class's confidence is the fraction
//! of its keywords present among the tokens; every keyword counts the same whatever its
//! tier.

mod provider;

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use provider::{
    extract_all, extract_text, FixtureProvider, HttpProvider, HttpProviderConfig, TextProvider,
    DEFAULT_CONCURRENCY,
};

use crate::fusion::{ClassScore, ConfidenceVector};
use crate::scalar::Scalar;
use crate::ClassId;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("text provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("text provider error: {0}")]
    ProviderError(String),
    #[error("invalid keyword metadata: {0}")]
    Metadata(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Which kind of document feature a keyword identifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    /// Only this class carries the word.
    #[default]
    Unique,
    /// Shared by every class of the same document type.
    TypeMutual,
    /// Shared by sibling classes of one issuer.
    SubclassMutual,
}

impl Tier {
    fn parse(tag: &str) -> Option<Tier> {
        match tag.to_ascii_lowercase().as_str() {
            "unique" | "u" => Some(Tier::Unique),
            "type_mutual" | "type" | "t" => Some(Tier::TypeMutual),
            "subclass_mutual" | "subclass" | "s" => Some(Tier::SubclassMutual),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Keyword {
    pub word: String,
    pub tier: Tier,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordMetadata {
    pub class_id: ClassId,
    keywords: Vec<Keyword>,
}

impl KeywordMetadata {
    /// Normalizes every entry with [`tokenize`]; a multi-word entry becomes several
    /// keywords with the same tier. Duplicates are rejected.
    pub fn new(class_id: ClassId, entries: &[(&str, Tier)]) -> Result<Self, TextError> {
        let mut keywords: Vec<Keyword> = Vec::new();
        for &(entry, tier) in entries {
            for word in tokenize(entry) {
                if keywords.iter().any(|k| k.word == word) {
                    return Err(TextError::Metadata(format!(
                        "class {class_id}: duplicate keyword {word}"
                    )));
                }
                keywords.push(Keyword { word, tier });
            }
        }
        if keywords.is_empty() {
            return Err(TextError::Metadata(format!("class {class_id} has no keywords")));
        }
        Ok(KeywordMetadata { class_id, keywords })
    }

    pub fn keywords(&self) -> &[Keyword] {
        &self.keywords
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.keywords.iter().map(|k| k.word.as_str())
    }

    pub fn len(&self) -> usize {
        self.keywords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }
}

/// Tokens of one OCR result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedText {
    pub words: Vec<String>,
    pub provider: String,
    pub raw: String,
}

impl ExtractedText {
    pub fn from_raw(raw: &str, provider: &str) -> Self {
        ExtractedText {
            words: tokenize(raw),
            provider: provider.to_string(),
            raw: raw.to_string(),
        }
    }

    fn word_set(&self) -> HashSet<&str> {
        self.words.iter().map(String::as_str).collect()
    }
}

/// Split on every non-alphanumeric character and uppercase.
pub fn tokenize(raw: &str) -> Vec<String> {
    raw.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_uppercase())
        .collect()
}

/// Matched keywords over total keywords, exactly.
pub fn match_ratio(text: &ExtractedText, meta: &KeywordMetadata) -> Ratio<usize> {
    let words = text.word_set();
    Ratio::new_raw(matched_count(&words, meta), meta.len())
}

fn matched_count(words: &HashSet<&str>, meta: &KeywordMetadata) -> usize {
    meta.words().filter(|w| words.contains(w)).count()
}

pub fn match_class<T: Scalar>(text: &ExtractedText, meta: &KeywordMetadata) -> T {
    let r = match_ratio(text, meta);
    T::from_usize_lossy(*r.numer()) / T::from_usize_lossy(*r.denom())
}

/// Per-class keyword confidences in metadata order. Equal confidences rank the class with
/// more matched words first.
pub fn classify_text<T: Scalar>(text: &ExtractedText, metas: &[KeywordMetadata]) -> ConfidenceVector<T> {
    let words = text.word_set();
    ConfidenceVector::new(
        metas
            .iter()
            .map(|m| {
                let k = matched_count(&words, m);
                ClassScore {
                    class: m.class_id,
                    confidence: T::from_usize_lossy(k) / T::from_usize_lossy(m.len()),
                    support: k as u32,
                }
            })
            .collect(),
    )
}

/// Pairs `(sub, sup)` where every keyword of `sub` is also a keyword of `sup`. Such a
/// `sub` can never be the unique best match for its own text.
pub fn keyword_subset_pairs(metas: &[KeywordMetadata]) -> Vec<(ClassId, ClassId)> {
    let sets: Vec<BTreeSet<&str>> = metas.iter().map(|m| m.words().collect()).collect();
    let mut out = Vec::new();
    for (i, a) in sets.iter().enumerate() {
        for (j, b) in sets.iter().enumerate() {
            if i != j && a.is_subset(b) {
                out.push((metas[i].class_id, metas[j].class_id));
            }
        }
    }
    out
}

#[derive(Deserialize)]
#[serde(untagged)]
enum KeywordEntry {
    Plain(String),
    Tagged { word: String, tier: Tier },
}

#[derive(Deserialize)]
struct MetadataEntry {
    class_id: ClassId,
    keywords: Vec<KeywordEntry>,
}

fn check_unique_classes(metas: &[KeywordMetadata]) -> Result<(), TextError> {
    for (i, m) in metas.iter().enumerate() {
        if metas[..i].iter().any(|o| o.class_id == m.class_id) {
            return Err(TextError::Metadata(format!("class {} listed twice", m.class_id)));
        }
    }
    Ok(())
}

/// JSON metadata: `[{"class_id": 1, "keywords": ["NSW", {"word": "DRIVER", "tier": "type_mutual"}]}]`.
/// Plain strings have tier `unique`.
pub fn parse_metadata_json(text: &str) -> Result<Vec<KeywordMetadata>, TextError> {
    let entries: Vec<MetadataEntry> =
        serde_json::from_str(text).map_err(|e| TextError::Metadata(e.to_string()))?;
    let metas = entries
        .into_iter()
        .map(|e| {
            let pairs: Vec<(String, Tier)> = e
                .keywords
                .into_iter()
                .map(|k| match k {
                    KeywordEntry::Plain(w) => (w, Tier::Unique),
                    KeywordEntry::Tagged { word, tier } => (word, tier),
                })
                .collect();
            let refs: Vec<(&str, Tier)> = pairs.iter().map(|(w, t)| (w.as_str(), *t)).collect();
            KeywordMetadata::new(e.class_id, &refs)
        })
        .collect::<Result<Vec<_>, _>>()?;
    check_unique_classes(&metas)?;
    Ok(metas)
}

/// CSV metadata, one class per row: `class_id,word[:tier],word[:tier],...`. No header;
/// lines starting with `#` are comments.
pub fn parse_metadata_csv(text: &str) -> Result<Vec<KeywordMetadata>, TextError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut metas = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| TextError::Metadata(e.to_string()))?;
        let mut fields = rec.iter();
        let id: u32 = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| TextError::Metadata(format!("row {}: bad class id", line + 1)))?;
        let mut pairs = Vec::new();
        for f in fields.filter(|f| !f.is_empty()) {
            let (word, tier) = match f.rsplit_once(':') {
                Some((w, tag)) => (
                    w,
                    Tier::parse(tag).ok_or_else(|| {
                        TextError::Metadata(format!("row {}: unknown tier {tag:?}", line + 1))
                    })?,
                ),
                None => (f, Tier::Unique),
            };
            pairs.push((word, tier));
        }
        metas.push(KeywordMetadata::new(ClassId(id), &pairs)?);
    }
    check_unique_classes(&metas)?;
    Ok(metas)
}

/// Load metadata by extension: `.csv` or JSON otherwise.
pub fn load_metadata(path: &Path) -> Result<Vec<KeywordMetadata>, TextError> {
    let text = std::fs::read_to_string(path).map_err(|e| TextError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
    {
        parse_metadata_csv(&text)
    } else {
        parse_metadata_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn meta(id: u32, words: &str) -> KeywordMetadata {
        let entries: Vec<_> = words.split(' ').map(|w| (w, Tier::Unique)).collect();
        KeywordMetadata::new(ClassId(id), &entries).unwrap()
    }

    fn text(raw: &str) -> ExtractedText {
        ExtractedText::from_raw(raw, "test")
    }

    #[test]
    fn tokenize_cases() {
        assert_eq!(tokenize("Driver Licence"), vec!["DRIVER", "LICENCE"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("NSW-123/ab"), vec!["NSW", "123", "AB"]);
        assert_eq!(tokenize("  DRIVER'S\tlicence\n"), vec!["DRIVER", "S", "LICENCE"]);
    }

    #[test]
    fn ratio_cases() {
        let m = meta(2, "DRIVER LICENCE NEW SOUTH WALES AUSTRALIA");
        assert_eq!(match_ratio(&text("new south wales"), &m), Ratio::new(1, 2));
        assert_eq!(match_class::<f64>(&text("new south wales"), &m), 0.5);
        assert_eq!(match_class::<f64>(&text("Driver Licence New South Wales Australia"), &m), 1.0);
        assert_eq!(match_class::<f32>(&text("medicare"), &m), 0.0);
    }

    #[test]
    fn classify_disjoint_and_empty() {
        let metas = vec![meta(1, "A B C"), meta(2, "D E")];
        let cv = classify_text::<f64>(&text("d e"), &metas);
        assert_eq!(cv.confidence_of(ClassId(2)), Some(1.0));
        assert_eq!(cv.confidence_of(ClassId(1)), Some(0.0));
        let cv = classify_text::<f64>(&text(""), &metas);
        assert!(cv.entries.iter().all(|e| e.confidence == 0.0));
    }

    #[test]
    fn heavy_vehicle_ordering() {
        let shared = "QUEENSLAND AUSTRALIA DRIVER LICENCE QLD GOVERNMENT TRANSPORT CLASS";
        let full = meta(1, shared);
        let heavy = meta(2, &format!("{shared} HEAVY VEHICLE"));
        let metas = vec![full, heavy];
        // both words present: 8/8 and 10/10 tie on confidence, the heavy class matched more words
        let cv = classify_text::<f64>(&text(&format!("{shared} heavy vehicle")), &metas);
        assert_eq!(cv.confidence_of(ClassId(1)), Some(1.0));
        assert_eq!(cv.confidence_of(ClassId(2)), Some(1.0));
        assert_eq!(cv.ranked()[0].class, ClassId(2));
        // shared words only: 8/8 beats 8/10
        let cv = classify_text::<f64>(&text(shared), &metas);
        assert_eq!(cv.confidence_of(ClassId(2)), Some(0.8));
        assert_eq!(cv.ranked()[0].class, ClassId(1));
        assert_eq!(keyword_subset_pairs(&metas), vec![(ClassId(1), ClassId(2))]);
    }

    #[test]
    fn metadata_rules() {
        assert!(KeywordMetadata::new(ClassId(1), &[]).is_err());
        assert!(KeywordMetadata::new(ClassId(1), &[("nsw", Tier::Unique), ("NSW", Tier::TypeMutual)]).is_err());
        let m = KeywordMetadata::new(ClassId(1), &[("Heavy vehicle", Tier::SubclassMutual)]).unwrap();
        assert_eq!(m.words().collect::<Vec<_>>(), vec!["HEAVY", "VEHICLE"]);
    }

    #[test]
    fn json_and_csv_metadata_agree() {
        let json = r#"[
            {"class_id": 1, "keywords": ["NSW", {"word": "driver", "tier": "type_mutual"}]},
            {"class_id": 2, "keywords": [{"word": "Heavy vehicle", "tier": "subclass_mutual"}]}
        ]"#;
        let csv = "# id, words\n1,NSW,driver:type\n2,Heavy vehicle:subclass\n";
        let a = parse_metadata_json(json).unwrap();
        let b = parse_metadata_csv(csv).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].keywords()[1].tier, Tier::TypeMutual);
        assert!(parse_metadata_csv("1,A\n1,B\n").is_err());
        assert!(parse_metadata_csv("x,A\n").is_err());
        assert!(parse_metadata_csv("1,A:bogus\n").is_err());
    }

    proptest! {
        #[test]
        fn tokenize_idempotent(raw in "[a-zA-Z0-9 ,./'-]{0,60}") {
            let once = tokenize(&raw);
            let twice = tokenize(&once.join(" "));
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn adding_a_keyword_never_lowers_confidence(
            words in prop::collection::vec("[A-F]{1,2}", 0..8),
            extra in "[A-F]{1,2}",
        ) {
            let metas = vec![meta(1, "A B CC D"), meta(2, "E F AB")];
            let before = classify_text::<f64>(&text(&words.join(" ")), &metas);
            let after = classify_text::<f64>(&text(&format!("{} {extra}", words.join(" "))), &metas);
            for (a, b) in before.entries.iter().zip(&after.entries) {
                prop_assert!(b.confidence >= a.confidence);
            }
            for m in &metas {
                let r = match_ratio(&text(&words.join(" ")), m);
                prop_assert_eq!(*r.denom(), m.len());
                prop_assert!(*r.numer() <= m.len());
            }
        }
    }
}
