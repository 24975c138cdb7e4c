//! Seeded repetitions of train + adapt, their mean word vectors, and
//! per-attribute change statistics.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    AttributeId, CarVector, Corpus, RoleTag, SentenceId, SubjectDataset, WordId, ATTRIBUTE_COUNT,
};
use crate::network::{fgrep_contextualize, train, ContextualizedWord, NetworkConfig, NetworkWeights};
use crate::stats::t_test_one_sample;

/// Default significance level for attribute changes.
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Contextualized words of one seeded run, in corpus and token order.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub words: Vec<ContextualizedWord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub subject_id: String,
    pub runs: Vec<RunRecord>,
    pub mean_car: BTreeMap<(SentenceId, WordId), CarVector>,
}

/// Adapts every corpus sentence with one set of frozen weights.
pub fn contextualize_all(
    weights: &NetworkWeights,
    corpus: &Corpus,
    subject: &SubjectDataset,
    config: &NetworkConfig,
) -> Result<Vec<ContextualizedWord>> {
    let per_sentence = corpus
        .sentences()
        .par_iter()
        .map(|s| fgrep_contextualize(weights, s, corpus, subject, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_sentence.into_iter().flatten().collect())
}

/// Trains and adapts `repetitions` times with seeds `base_seed..base_seed + repetitions`.
pub fn run_ensemble(
    corpus: &Corpus,
    subject: &SubjectDataset,
    config: &NetworkConfig,
    repetitions: usize,
    base_seed: u64,
) -> Result<EnsembleResult> {
    if repetitions < 2 {
        return Err(Error::Invalid("an ensemble needs at least two runs".into()));
    }
    let runs = (0..repetitions)
        .into_par_iter()
        .map(|i| {
            let seed = base_seed + i as u64;
            let cfg = NetworkConfig {
                seed,
                ..config.clone()
            };
            let run = || -> Result<RunRecord> {
                let (weights, _) = train(corpus, subject, &cfg)?;
                let words = contextualize_all(&weights, corpus, subject, &cfg)?;
                Ok(RunRecord { seed, words })
            };
            run().map_err(|e| Error::Run {
                run: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    EnsembleResult::from_runs(&subject.subject_id, runs)
}

impl EnsembleResult {
    /// Aggregates runs; every run must cover the same (sentence, word) pairs.
    pub fn from_runs(subject_id: &str, runs: Vec<RunRecord>) -> Result<Self> {
        let first = runs
            .first()
            .ok_or_else(|| Error::Invalid("no runs to aggregate".into()))?;
        let keys: Vec<(SentenceId, WordId)> = first
            .words
            .iter()
            .map(|w| (w.sentence_id, w.word_id))
            .collect();
        let mut sums: BTreeMap<(SentenceId, WordId), Vec<f64>> = keys
            .iter()
            .map(|&k| (k, vec![0.0; ATTRIBUTE_COUNT]))
            .collect();
        for (i, run) in runs.iter().enumerate() {
            if run.words.len() != keys.len() {
                return Err(Error::Invalid(format!("run {i} covers a different word set")));
            }
            for w in &run.words {
                let acc = sums
                    .get_mut(&(w.sentence_id, w.word_id))
                    .ok_or_else(|| Error::Invalid(format!("run {i} covers a different word set")))?;
                for (a, v) in acc.iter_mut().zip(w.new_car.as_slice()) {
                    *a += v;
                }
            }
        }
        let n = runs.len() as f64;
        let mean_car = sums
            .into_iter()
            .map(|(k, acc)| {
                let mean = acc.into_iter().map(|a| (a / n).clamp(0.0, 1.0)).collect();
                Ok((k, CarVector::new(mean)?))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            subject_id: subject_id.to_string(),
            runs,
            mean_car,
        })
    }

    pub fn repetitions(&self) -> usize {
        self.runs.len()
    }
}

/// Per-attribute change `new - original` of one contextualized word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeRecord {
    pub subject_id: String,
    pub sentence_id: SentenceId,
    pub word_id: WordId,
    pub attribute_id: AttributeId,
    pub delta_mean: f64,
    /// Empty when read back from a changes file.
    #[serde(skip)]
    pub delta_per_run: Vec<f64>,
    pub significant: bool,
    pub p_value: f64,
}

/// Changes against the static lexicon vectors, with one-sample two-tailed
/// t-test p-values of the per-run deltas. Significance flags use
/// [`DEFAULT_ALPHA`]; see [`significance_filter`] for other levels.
pub fn attribute_changes(ensemble: &EnsembleResult, corpus: &Corpus) -> Result<Vec<ChangeRecord>> {
    let mut index: BTreeMap<(SentenceId, WordId), Vec<&ContextualizedWord>> = BTreeMap::new();
    for run in &ensemble.runs {
        for w in &run.words {
            index.entry((w.sentence_id, w.word_id)).or_default().push(w);
        }
    }
    let mut out = Vec::with_capacity(index.len() * ATTRIBUTE_COUNT);
    for s in corpus.sentences() {
        for t in &s.tokens {
            let key = (s.sentence_id, t.word_id);
            let (Some(per_run), Some(mean)) = (index.get(&key), ensemble.mean_car.get(&key)) else {
                continue;
            };
            let original = &corpus.word(t.word_id)?.car;
            let mean_delta = mean.delta_from(original);
            let run_deltas: Vec<Vec<f64>> =
                per_run.iter().map(|w| w.new_car.delta_from(original)).collect();
            for a in 0..ATTRIBUTE_COUNT {
                let delta_per_run: Vec<f64> = run_deltas.iter().map(|d| d[a]).collect();
                out.push(ChangeRecord {
                    subject_id: ensemble.subject_id.clone(),
                    sentence_id: s.sentence_id,
                    word_id: t.word_id,
                    attribute_id: a as AttributeId + 1,
                    delta_mean: mean_delta[a],
                    delta_per_run,
                    significant: false,
                    p_value: 1.0,
                });
            }
        }
    }
    Ok(significance_filter(out, DEFAULT_ALPHA))
}

/// Recomputes p-values from `delta_per_run` and sets `significant = p < alpha`.
/// Records without per-run deltas keep their stored p-value.
pub fn significance_filter(mut records: Vec<ChangeRecord>, alpha: f64) -> Vec<ChangeRecord> {
    for r in &mut records {
        if r.delta_per_run.len() >= 2 {
            r.p_value = t_test_one_sample(&r.delta_per_run, 0.0).p_value;
        }
        r.significant = r.p_value < alpha;
    }
    records
}

/// `seed,sentence_id,word_id,role,residual_error,a01..a66` at full precision.
pub fn write_run(path: &Path, run: &RunRecord) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["seed", "sentence_id", "word_id", "role", "residual_error"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=ATTRIBUTE_COUNT).map(|i| format!("a{i:02}")));
    w.write_record(&header)?;
    for cw in &run.words {
        let mut row = vec![
            run.seed.to_string(),
            cw.sentence_id.to_string(),
            cw.word_id.to_string(),
            cw.role.to_string(),
            cw.residual_error.to_string(),
        ];
        row.extend(cw.new_car.as_slice().iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_run(path: &Path) -> Result<RunRecord> {
    let file = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let mut seed = None;
    let mut words = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        if rec.len() != 5 + ATTRIBUTE_COUNT {
            return Err(Error::row(&file, row, "wrong column count"));
        }
        let bad = |what: &str| Error::row(&file, row, format!("bad {what}"));
        let s: u64 = rec[0].parse().map_err(|_| bad("seed"))?;
        if *seed.get_or_insert(s) != s {
            return Err(Error::row(&file, row, "mixed seeds in one run file"));
        }
        let values = rec
            .iter()
            .skip(5)
            .map(|v| v.parse::<f64>().map_err(|_| bad("value")))
            .collect::<Result<Vec<_>>>()?;
        words.push(ContextualizedWord {
            sentence_id: rec[1].parse().map_err(|_| bad("sentence_id"))?,
            word_id: rec[2].parse().map_err(|_| bad("word_id"))?,
            role: rec[3].parse::<RoleTag>()?,
            residual_error: rec[4].parse().map_err(|_| bad("residual_error"))?,
            new_car: CarVector::new(values).map_err(|e| Error::row(&file, row, e.to_string()))?,
        });
    }
    let seed = seed.ok_or_else(|| Error::row(&file, 1, "empty run file"))?;
    Ok(RunRecord { seed, words })
}

pub fn write_changes(path: &Path, records: &[ChangeRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "subject",
        "sentence_id",
        "word_id",
        "attribute_id",
        "delta_mean",
        "p_value",
        "significant",
    ])?;
    for r in records {
        w.write_record([
            r.subject_id.clone(),
            r.sentence_id.to_string(),
            r.word_id.to_string(),
            r.attribute_id.to_string(),
            r.delta_mean.to_string(),
            r.p_value.to_string(),
            r.significant.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_changes(path: &Path) -> Result<Vec<ChangeRecord>> {
    #[derive(Deserialize)]
    struct Row {
        subject: String,
        sentence_id: SentenceId,
        word_id: WordId,
        attribute_id: AttributeId,
        delta_mean: f64,
        p_value: f64,
        significant: bool,
    }
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize()
        .map(|row| {
            let r: Row = row?;
            Ok(ChangeRecord {
                subject_id: r.subject,
                sentence_id: r.sentence_id,
                word_id: r.word_id,
                attribute_id: r.attribute_id,
                delta_mean: r.delta_mean,
                delta_per_run: Vec::new(),
                significant: r.significant,
                p_value: r.p_value,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SentenceSpec, Token, WordEntry};

    fn corpus() -> Corpus {
        let lex = vec![
            WordEntry {
                word_id: 1,
                lemma: "a".into(),
                car: CarVector::new(vec![0.5; ATTRIBUTE_COUNT]).unwrap(),
            },
            WordEntry {
                word_id: 2,
                lemma: "b".into(),
                car: CarVector::new(vec![0.2; ATTRIBUTE_COUNT]).unwrap(),
            },
        ];
        Corpus::new(
            vec![SentenceSpec {
                sentence_id: 7,
                text: String::new(),
                tokens: vec![
                    Token { word_id: 1, role: RoleTag::Agent },
                    Token { word_id: 2, role: RoleTag::Verb },
                ],
            }],
            lex,
        )
        .unwrap()
    }

    fn run(seed: u64, a: f64, b: f64) -> RunRecord {
        let cw = |word_id, role, v| ContextualizedWord {
            sentence_id: 7,
            word_id,
            role,
            new_car: CarVector::new(vec![v; ATTRIBUTE_COUNT]).unwrap(),
            residual_error: 0.0,
        };
        RunRecord {
            seed,
            words: vec![cw(1, RoleTag::Agent, a), cw(2, RoleTag::Verb, b)],
        }
    }

    #[test]
    fn identical_runs_mean_equals_each() {
        let e = EnsembleResult::from_runs("s", vec![run(1, 0.6, 0.2), run(1, 0.6, 0.2)]).unwrap();
        assert_eq!(e.mean_car[&(7, 1)].as_slice()[0], 0.6);
        let ch = attribute_changes(&e, &corpus()).unwrap();
        let verb: Vec<_> = ch.iter().filter(|r| r.word_id == 2).collect();
        assert!(verb.iter().all(|r| r.delta_mean == 0.0 && !r.significant && r.p_value == 1.0));
        // constant non-zero delta: zero variance, declared significant
        let agent: Vec<_> = ch.iter().filter(|r| r.word_id == 1).collect();
        assert!(agent.iter().all(|r| r.significant && r.p_value == 0.0));
    }

    #[test]
    fn two_run_mean() {
        let e = EnsembleResult::from_runs("s", vec![run(1, 0.6, 0.2), run(2, 0.4, 0.3)]).unwrap();
        approx::assert_relative_eq!(e.mean_car[&(7, 1)].as_slice()[3], 0.5, epsilon = 1e-15);
        approx::assert_relative_eq!(e.mean_car[&(7, 2)].as_slice()[3], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn constant_tenth_delta() {
        let runs: Vec<_> = (0..20).map(|i| run(i, 0.6, 0.2)).collect();
        let e = EnsembleResult::from_runs("s", runs).unwrap();
        let ch = attribute_changes(&e, &corpus()).unwrap();
        let r = ch.iter().find(|r| r.word_id == 1).unwrap();
        approx::assert_relative_eq!(r.delta_mean, 0.1, epsilon = 1e-12);
        assert_eq!(r.p_value, 0.0);
    }

    #[test]
    fn rejects_single_run_ensemble() {
        let c = corpus();
        let subj = SubjectDataset::new(
            "s",
            3,
            [(7, crate::model::FmriVector::new(vec![0.0; 3]).unwrap())].into(),
        )
        .unwrap();
        assert!(run_ensemble(&c, &subj, &NetworkConfig::default(), 1, 0).is_err());
    }

    #[test]
    fn run_file_round_trip() {
        let r = run(3, 0.123456789012345, 1.0 / 3.0);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.csv");
        write_run(&p, &r).unwrap();
        assert_eq!(read_run(&p).unwrap(), r);
    }
}
