//! Readme-text preprocessing: tokenization, stopword removal, stemming, and
//! rare-term pruning.

use std::collections::{BTreeMap, HashMap, HashSet};

use rust_stemmers::{Algorithm, Stemmer};

use crate::error::{Error, Result};

/// Tokenized corpus over a fixed vocabulary, document order aligned with the
/// input texts (one document per app).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    /// Sorted, duplicate-free list of surviving terms.
    pub vocabulary: Vec<String>,
    /// Per-document token sequences as vocabulary indices.
    pub documents: Vec<Vec<u32>>,
    /// Indices of documents left empty by preprocessing.
    pub empty_documents: Vec<usize>,
}

impl Corpus {
    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.documents.iter().map(Vec::len).sum()
    }
}

/// English stopwords pruned before stemming.
const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are",
    "as", "at", "be", "because", "been", "before", "being", "below", "between", "both", "but",
    "by", "can", "cannot", "could", "did", "do", "does", "doing", "down", "during", "each", "few",
    "for", "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers",
    "herself", "him", "himself", "his", "how", "i", "if", "in", "into", "is", "it", "its",
    "itself", "just", "me", "more", "most", "my", "myself", "no", "nor", "not", "now", "of",
    "off", "on", "once", "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own",
    "same", "she", "should", "so", "some", "such", "than", "that", "the", "their", "theirs",
    "them", "themselves", "then", "there", "these", "they", "this", "those", "through", "to",
    "too", "under", "until", "up", "very", "was", "we", "were", "what", "when", "where", "which",
    "while", "who", "whom", "why", "will", "with", "would", "you", "your", "yours", "yourself",
    "yourselves",
];

/// The built-in stopword set.
pub fn default_stopwords() -> HashSet<String> {
    STOPWORDS.iter().map(|&w| w.to_string()).collect()
}

/// Lowercases, tokenizes on non-alphanumeric boundaries, removes stopwords,
/// stems each token, and drops terms occurring fewer than `min_term_count`
/// times corpus-wide. Documents emptied by any of these steps are flagged.
///
/// Fails only when every document ends up empty.
pub fn preprocess(
    texts: &[String],
    stopwords: &HashSet<String>,
    min_term_count: usize,
) -> Result<Corpus> {
    let stemmer = Stemmer::create(Algorithm::English);

    let stemmed: Vec<Vec<String>> = texts
        .iter()
        .map(|text| {
            text.to_lowercase()
                .split(|c: char| !c.is_alphanumeric())
                .filter(|tok| !tok.is_empty() && !stopwords.contains(*tok))
                .map(|tok| stemmer.stem(tok).into_owned())
                .collect()
        })
        .collect();

    let mut counts: HashMap<&str, usize> = HashMap::new();
    for doc in &stemmed {
        for tok in doc {
            *counts.entry(tok.as_str()).or_default() += 1;
        }
    }
    // BTreeMap gives the sorted vocabulary directly.
    let vocabulary: BTreeMap<&str, u32> = {
        let mut keep: Vec<&str> = counts
            .iter()
            .filter(|&(_, &n)| n >= min_term_count)
            .map(|(&t, _)| t)
            .collect();
        keep.sort_unstable();
        keep.into_iter()
            .enumerate()
            .map(|(i, t)| (t, i as u32))
            .collect()
    };

    let documents: Vec<Vec<u32>> = stemmed
        .iter()
        .map(|doc| {
            doc.iter()
                .filter_map(|tok| vocabulary.get(tok.as_str()).copied())
                .collect()
        })
        .collect();
    let empty_documents: Vec<usize> = documents
        .iter()
        .enumerate()
        .filter(|(_, d)| d.is_empty())
        .map(|(i, _)| i)
        .collect();
    if empty_documents.len() == documents.len() {
        return Err(Error::EmptyCorpus);
    }

    Ok(Corpus {
        vocabulary: vocabulary.keys().map(|&t| t.to_string()).collect(),
        documents,
        empty_documents,
    })
}
