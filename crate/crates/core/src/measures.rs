//! Context-effect measures: a target word's change relative to a reference
//! average change.
//!
//! * rest of sentence: minus the mean change of the other words in the sentence;
//! * whole sentence: minus the mean change of every word, target included;
//! * across contexts: minus the mean change of the same word over every
//!   sentence it occurs in.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ensemble::{ChangeRecord, RunRecord};
use crate::error::{Error, Result};
use crate::model::{AttributeId, Corpus, SentenceId, SentenceSpec, WordId, ATTRIBUTE_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Approach {
    RestOfSentence = 1,
    WholeSentence = 2,
    AcrossContexts = 3,
}

impl TryFrom<u8> for Approach {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Approach::RestOfSentence),
            2 => Ok(Approach::WholeSentence),
            3 => Ok(Approach::AcrossContexts),
            _ => Err(Error::Invalid(format!("approach must be 1, 2 or 3, got {v}"))),
        }
    }
}

impl From<Approach> for u8 {
    fn from(a: Approach) -> u8 {
        a as u8
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", *self as u8)
    }
}

/// Change vectors keyed by (sentence, word).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeltaTable(BTreeMap<(SentenceId, WordId), Vec<f64>>);

impl DeltaTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, sentence: SentenceId, word: WordId, delta: Vec<f64>) {
        self.0.insert((sentence, word), delta);
    }

    pub fn get(&self, sentence: SentenceId, word: WordId) -> Result<&[f64]> {
        self.0
            .get(&(sentence, word))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Invalid(format!("no change for word {word} in sentence {sentence}")))
    }

    /// Mean changes (`delta_mean`) of one subject's change records.
    pub fn from_changes(records: &[ChangeRecord]) -> Self {
        let mut t = BTreeMap::new();
        for r in records {
            let v = t
                .entry((r.sentence_id, r.word_id))
                .or_insert_with(|| vec![0.0; ATTRIBUTE_COUNT]);
            v[r.attribute_id as usize - 1] = r.delta_mean;
        }
        Self(t)
    }

    /// Changes of a single run against the lexicon.
    pub fn from_run(run: &RunRecord, corpus: &Corpus) -> Result<Self> {
        let mut t = BTreeMap::new();
        for w in &run.words {
            let original = &corpus.word(w.word_id)?.car;
            t.insert((w.sentence_id, w.word_id), w.new_car.delta_from(original));
        }
        Ok(Self(t))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureVector {
    pub subject_id: String,
    pub sentence_id: SentenceId,
    pub word_id: WordId,
    pub approach: Approach,
    pub values: Vec<f64>,
}

fn subtract_mean<'a>(target: &[f64], others: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut sum = vec![0.0; target.len()];
    let mut n = 0usize;
    for d in others {
        for (s, v) in sum.iter_mut().zip(d) {
            *s += v;
        }
        n += 1;
    }
    target
        .iter()
        .zip(&sum)
        .map(|(t, s)| t - s / n as f64)
        .collect()
}

fn check_member(sentence: &SentenceSpec, target: WordId) -> Result<()> {
    if sentence.contains(target) {
        Ok(())
    } else {
        Err(Error::Invalid(format!(
            "word {target} is not in sentence {}",
            sentence.sentence_id
        )))
    }
}

/// Target change minus the mean change of the other words of the sentence.
pub fn measure_rest_of_sentence(
    deltas: &DeltaTable,
    sentence: &SentenceSpec,
    target: WordId,
) -> Result<Vec<f64>> {
    check_member(sentence, target)?;
    if sentence.tokens.len() < 2 {
        return Err(Error::Invalid(format!(
            "sentence {} has no other words",
            sentence.sentence_id
        )));
    }
    let t = deltas.get(sentence.sentence_id, target)?;
    let others = sentence
        .tokens
        .iter()
        .filter(|tok| tok.word_id != target)
        .map(|tok| deltas.get(sentence.sentence_id, tok.word_id))
        .collect::<Result<Vec<_>>>()?;
    Ok(subtract_mean(t, others.into_iter()))
}

/// Target change minus the mean change of all words, target included.
pub fn measure_whole_sentence(
    deltas: &DeltaTable,
    sentence: &SentenceSpec,
    target: WordId,
) -> Result<Vec<f64>> {
    check_member(sentence, target)?;
    let t = deltas.get(sentence.sentence_id, target)?;
    let all = sentence
        .tokens
        .iter()
        .map(|tok| deltas.get(sentence.sentence_id, tok.word_id))
        .collect::<Result<Vec<_>>>()?;
    Ok(subtract_mean(t, all.into_iter()))
}

/// Target change in `sentence` minus its mean change over every corpus
/// sentence containing it, regardless of role.
pub fn measure_across_contexts(
    deltas: &DeltaTable,
    corpus: &Corpus,
    target: WordId,
    sentence: &SentenceSpec,
) -> Result<Vec<f64>> {
    let contexts: Vec<&SentenceSpec> = corpus.contexts_of(target).collect();
    if contexts.is_empty() {
        let name = corpus
            .word(target)
            .map(|w| w.lemma.clone())
            .unwrap_or_else(|_| target.to_string());
        return Err(Error::WordNotInCorpus(name));
    }
    check_member(sentence, target)?;
    let t = deltas.get(sentence.sentence_id, target)?;
    let all = contexts
        .iter()
        .map(|s| deltas.get(s.sentence_id, target))
        .collect::<Result<Vec<_>>>()?;
    Ok(subtract_mean(t, all.into_iter()))
}

pub fn measure(
    approach: Approach,
    deltas: &DeltaTable,
    corpus: &Corpus,
    sentence: &SentenceSpec,
    target: WordId,
) -> Result<Vec<f64>> {
    match approach {
        Approach::RestOfSentence => measure_rest_of_sentence(deltas, sentence, target),
        Approach::WholeSentence => measure_whole_sentence(deltas, sentence, target),
        Approach::AcrossContexts => measure_across_contexts(deltas, corpus, target, sentence),
    }
}

/// One measure vector per (sentence, token) of the corpus, in corpus order.
pub fn measure_corpus(
    subject_id: &str,
    approach: Approach,
    deltas: &DeltaTable,
    corpus: &Corpus,
) -> Result<Vec<MeasureVector>> {
    let mut out = Vec::new();
    for s in corpus.sentences() {
        for t in &s.tokens {
            out.push(MeasureVector {
                subject_id: subject_id.to_string(),
                sentence_id: s.sentence_id,
                word_id: t.word_id,
                approach,
                values: measure(approach, deltas, corpus, s, t.word_id)?,
            });
        }
    }
    Ok(out)
}

/// Lookup of measure values by (subject, approach, sentence, word, attribute).
pub type MeasureIndex = BTreeMap<(String, Approach, SentenceId, WordId, AttributeId), f64>;

pub fn index_measures(measures: &[MeasureVector]) -> MeasureIndex {
    let mut idx = BTreeMap::new();
    for m in measures {
        for (a, v) in m.values.iter().enumerate() {
            idx.insert(
                (
                    m.subject_id.clone(),
                    m.approach,
                    m.sentence_id,
                    m.word_id,
                    a as AttributeId + 1,
                ),
                *v,
            );
        }
    }
    idx
}

/// `subject,approach,sentence_id,word_id,attribute_id,value`.
pub fn write_measures(path: &Path, measures: &[MeasureVector]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["subject", "approach", "sentence_id", "word_id", "attribute_id", "value"])?;
    for m in measures {
        for (a, v) in m.values.iter().enumerate() {
            w.write_record([
                m.subject_id.clone(),
                m.approach.to_string(),
                m.sentence_id.to_string(),
                m.word_id.to_string(),
                (a + 1).to_string(),
                v.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_measures(path: &Path) -> Result<MeasureIndex> {
    #[derive(Deserialize)]
    struct Row {
        subject: String,
        approach: Approach,
        sentence_id: SentenceId,
        word_id: WordId,
        attribute_id: AttributeId,
        value: f64,
    }
    let mut rdr = csv::Reader::from_path(path)?;
    let mut idx = BTreeMap::new();
    for row in rdr.deserialize() {
        let r: Row = row?;
        idx.insert(
            (r.subject, r.approach, r.sentence_id, r.word_id, r.attribute_id),
            r.value,
        );
    }
    Ok(idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CarVector, RoleTag, Token, WordEntry};
    use approx::assert_relative_eq;

    fn lex(n: u32) -> Vec<WordEntry> {
        (1..=n)
            .map(|i| WordEntry {
                word_id: i,
                lemma: format!("w{i}"),
                car: CarVector::new(vec![0.5; ATTRIBUTE_COUNT]).unwrap(),
            })
            .collect()
    }

    fn sentence(id: SentenceId, words: &[WordId]) -> SentenceSpec {
        let roles = [RoleTag::Agent, RoleTag::Verb];
        SentenceSpec {
            sentence_id: id,
            text: String::new(),
            tokens: words
                .iter()
                .enumerate()
                .map(|(i, &w)| Token {
                    word_id: w,
                    role: roles.get(i).copied().unwrap_or(RoleTag::Pole),
                })
                .collect(),
        }
    }

    fn filled(v: f64) -> Vec<f64> {
        vec![v; ATTRIBUTE_COUNT]
    }

    #[test]
    fn equal_changes_cancel() {
        let s = sentence(1, &[1, 2, 3]);
        let mut d = DeltaTable::new();
        for w in 1..=3 {
            d.insert(1, w, filled(0.25));
        }
        assert!(measure_rest_of_sentence(&d, &s, 2).unwrap().iter().all(|&v| v == 0.0));
        assert!(measure_whole_sentence(&d, &s, 2).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rest_of_sentence_by_hand() {
        let s = sentence(1, &[1, 2, 3]);
        let mut d = DeltaTable::new();
        d.insert(1, 1, filled(0.4));
        d.insert(1, 2, filled(0.1));
        d.insert(1, 3, filled(0.3));
        let m1 = measure_rest_of_sentence(&d, &s, 1).unwrap();
        assert_relative_eq!(m1[0], 0.2, epsilon = 1e-15);
    }

    #[test]
    fn commander_layout() {
        // commander ate chicken dinner
        let s = sentence(1, &[1, 2, 3, 4]);
        let mut d = DeltaTable::new();
        d.insert(1, 1, filled(0.5));
        d.insert(1, 2, filled(0.1));
        d.insert(1, 3, filled(0.2));
        d.insert(1, 4, filled(0.3));
        let m1 = measure_rest_of_sentence(&d, &s, 1).unwrap();
        assert_relative_eq!(m1[10], 0.5 - 0.2, epsilon = 1e-15);
    }

    #[test]
    fn single_word_sentence() {
        let s = sentence(1, &[1]);
        let mut d = DeltaTable::new();
        d.insert(1, 1, filled(0.7));
        assert!(measure_rest_of_sentence(&d, &s, 1).is_err());
        assert!(measure_whole_sentence(&d, &s, 1).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn across_contexts_by_hand() {
        let c = Corpus::new(vec![sentence(1, &[1, 2]), sentence(2, &[3, 1])], lex(3)).unwrap();
        let mut d = DeltaTable::new();
        d.insert(1, 1, filled(0.6));
        d.insert(2, 1, filled(0.2));
        let m = measure_across_contexts(&d, &c, 1, c.sentence(1).unwrap()).unwrap();
        assert_relative_eq!(m[0], (0.6 - 0.2) / 2.0, epsilon = 1e-15);
        // one context only
        d.insert(1, 2, filled(0.9));
        let m = measure_across_contexts(&d, &c, 2, c.sentence(1).unwrap()).unwrap();
        assert!(m.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn absent_word_rejected() {
        let c = Corpus::new(vec![sentence(1, &[1, 2])], lex(3)).unwrap();
        let err = measure_across_contexts(&DeltaTable::new(), &c, 3, c.sentence(1).unwrap())
            .unwrap_err();
        assert!(matches!(err, Error::WordNotInCorpus(_)));
    }

    #[test]
    fn approach_codes() {
        assert_eq!(Approach::try_from(3).unwrap(), Approach::AcrossContexts);
        assert!(Approach::try_from(4).is_err());
        assert_eq!(serde_json::to_string(&Approach::WholeSentence).unwrap(), "2");
    }
}
