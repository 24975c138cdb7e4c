//! Questionnaire construction from significant changes, response ingestion,
//! and rater agreement.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::ChangeRecord;
use crate::error::{Error, Result};
use crate::model::{AttributeCatalog, AttributeId, Corpus, RoleTag, SentenceId, WordId};

pub const DEFAULT_MIN_SSA: usize = 10;
pub const ATTRIBUTES_PER_SENTENCE: usize = 10;
pub const SENTENCES_PER_QUESTIONNAIRE: usize = 15;
/// Size of the largest-change pool the attribute sample is drawn from.
pub const CANDIDATE_POOL: usize = 25;
/// Slot count of the default survey (24 questionnaires of 15).
pub const DEFAULT_TOTAL_SLOTS: usize = 360;

/// Answer scale: "less", "neutral", "more".
pub const SCALE: [(i8, &str); 3] = [(-1, "less"), (0, "neutral"), (1, "more")];

/// A (sentence, target word) pair eligible for the survey.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stimulus {
    pub sentence_id: SentenceId,
    pub word_id: WordId,
    pub role: RoleTag,
    pub ssa: usize,
    /// Number of survey slots this stimulus occupies.
    pub multiplicity: usize,
}

/// Targets with at least `min_ssa` significant attribute changes, in corpus
/// and token order. Multiplicity starts at 1.
pub fn select_stimuli(records: &[ChangeRecord], corpus: &Corpus, min_ssa: usize) -> Vec<Stimulus> {
    let mut ssa: BTreeMap<(SentenceId, WordId), usize> = BTreeMap::new();
    for r in records.iter().filter(|r| r.significant) {
        *ssa.entry((r.sentence_id, r.word_id)).or_default() += 1;
    }
    let mut out = Vec::new();
    for s in corpus.sentences() {
        for t in &s.tokens {
            let n = ssa.get(&(s.sentence_id, t.word_id)).copied().unwrap_or(0);
            if n >= min_ssa {
                out.push(Stimulus {
                    sentence_id: s.sentence_id,
                    word_id: t.word_id,
                    role: t.role,
                    ssa: n,
                    multiplicity: 1,
                });
            }
        }
    }
    out.sort_by_key(|s| s.sentence_id);
    out
}

/// Spreads `total_slots` evenly over the stimuli; the remainder goes to the
/// first ones.
pub fn fill_slots(stimuli: &mut [Stimulus], total_slots: usize) {
    if stimuli.is_empty() {
        return;
    }
    let base = total_slots / stimuli.len();
    let extra = total_slots % stimuli.len();
    for (i, s) in stimuli.iter_mut().enumerate() {
        s.multiplicity = base + usize::from(i < extra);
    }
}

/// `sentence_id,word_id,role,ssa,multiplicity`.
pub fn write_stimuli(path: &Path, stimuli: &[Stimulus]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in stimuli {
        w.serialize(s)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_stimuli(path: &Path) -> Result<Vec<Stimulus>> {
    let mut rdr = csv::Reader::from_path(path)?;
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Draws 10 attributes uniformly from the 25 significant ones with the
/// largest |change| and returns them in catalog order.
///
/// `changes` are the records of one (sentence, word); records of other
/// targets are ignored.
pub fn pick_attributes(
    changes: &[&ChangeRecord],
    catalog: &AttributeCatalog,
    rng: &mut impl Rng,
) -> Result<Vec<AttributeId>> {
    let mut pool: Vec<&ChangeRecord> = changes.iter().copied().filter(|r| r.significant).collect();
    if pool.len() < ATTRIBUTES_PER_SENTENCE {
        let target = changes
            .first()
            .map(|r| format!("sentence {} word {}", r.sentence_id, r.word_id))
            .unwrap_or_else(|| "empty target".into());
        return Err(Error::Invalid(format!(
            "{target}: {} significant attributes, need {ATTRIBUTES_PER_SENTENCE}",
            pool.len()
        )));
    }
    pool.sort_by(|a, b| {
        b.delta_mean
            .abs()
            .total_cmp(&a.delta_mean.abs())
            .then(a.attribute_id.cmp(&b.attribute_id))
    });
    pool.truncate(CANDIDATE_POOL);
    let mut picked: Vec<AttributeId> = pool
        .choose_multiple(rng, ATTRIBUTES_PER_SENTENCE)
        .map(|r| r.attribute_id)
        .collect();
    for &a in &picked {
        if catalog.rank(a).is_none() {
            return Err(Error::Invalid(format!("attribute {a} is not in the catalog")));
        }
    }
    picked.sort_by_key(|&a| catalog.rank(a));
    Ok(picked)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub questionnaire_id: u32,
    /// Unique over the whole survey.
    pub question_id: u32,
    pub sentence_id: SentenceId,
    pub word_id: WordId,
    pub role: RoleTag,
    pub attribute_id: AttributeId,
    /// 1..=10 within the sentence block.
    pub presentation_rank: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveySlot {
    pub sentence_id: SentenceId,
    pub word_id: WordId,
    pub role: RoleTag,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionnaireSpec {
    pub questionnaire_id: u32,
    pub sentences: Vec<SurveySlot>,
    pub questions: Vec<Question>,
}

/// Deals stimulus slots round-robin into questionnaires of `per_questionnaire`
/// sentences, so repeats of one stimulus land in different questionnaires.
///
/// A slot total that is not a multiple of `per_questionnaire` is padded by
/// cycling through the slot list from the start. Each slot gets its own
/// attribute draw from a stream of `seed`.
pub fn generate_questionnaires(
    stimuli: &[Stimulus],
    changes: &[ChangeRecord],
    catalog: &AttributeCatalog,
    per_questionnaire: usize,
    seed: u64,
) -> Result<Vec<QuestionnaireSpec>> {
    if per_questionnaire == 0 {
        return Err(Error::Invalid("questionnaires need at least one sentence".into()));
    }
    let mut slots: Vec<&Stimulus> = stimuli
        .iter()
        .flat_map(|s| std::iter::repeat_n(s, s.multiplicity))
        .collect();
    if slots.is_empty() {
        return Err(Error::Invalid("no stimulus slots to deal".into()));
    }
    let count = slots.len().div_ceil(per_questionnaire);
    let real = slots.len();
    for i in real..count * per_questionnaire {
        slots.push(slots[i % real]);
    }

    let mut by_target: BTreeMap<(SentenceId, WordId), Vec<&ChangeRecord>> = BTreeMap::new();
    for r in changes {
        by_target.entry((r.sentence_id, r.word_id)).or_default().push(r);
    }

    let mut dealt: Vec<Vec<(usize, &Stimulus)>> = vec![Vec::new(); count];
    for (i, s) in slots.iter().enumerate() {
        dealt[i % count].push((i, s));
    }

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut next_question = 1u32;
    let mut out = Vec::with_capacity(count);
    for (q, mut block) in dealt.into_iter().enumerate() {
        block.shuffle(&mut shuffle_rng);
        let questionnaire_id = q as u32 + 1;
        let mut sentences = Vec::with_capacity(per_questionnaire);
        let mut questions = Vec::with_capacity(per_questionnaire * ATTRIBUTES_PER_SENTENCE);
        for (slot, s) in block {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(slot as u64 + 1);
            let target = by_target
                .get(&(s.sentence_id, s.word_id))
                .map(Vec::as_slice)
                .unwrap_or_default();
            let attrs = pick_attributes(target, catalog, &mut rng)?;
            for (rank, a) in attrs.into_iter().enumerate() {
                questions.push(Question {
                    questionnaire_id,
                    question_id: next_question,
                    sentence_id: s.sentence_id,
                    word_id: s.word_id,
                    role: s.role,
                    attribute_id: a,
                    presentation_rank: rank as u32 + 1,
                });
                next_question += 1;
            }
            sentences.push(SurveySlot {
                sentence_id: s.sentence_id,
                word_id: s.word_id,
                role: s.role,
            });
        }
        out.push(QuestionnaireSpec {
            questionnaire_id,
            sentences,
            questions,
        });
    }
    Ok(out)
}

/// All questions of a survey keyed by question id.
pub fn question_index(questionnaires: &[QuestionnaireSpec]) -> BTreeMap<u32, Question> {
    questionnaires
        .iter()
        .flat_map(|q| q.questions.iter())
        .map(|q| (q.question_id, q.clone()))
        .collect()
}

#[derive(Serialize, Deserialize)]
struct ScaleLabel {
    value: i8,
    label: String,
}

#[derive(Serialize, Deserialize)]
struct QuestionView {
    #[serde(flatten)]
    question: Question,
    sentence_text: String,
    word: String,
    attribute_name: String,
}

#[derive(Serialize, Deserialize)]
struct QuestionnaireView {
    questionnaire_id: u32,
    sentences: Vec<SurveySlot>,
    questions: Vec<QuestionView>,
}

#[derive(Serialize, Deserialize)]
struct SurveyDocument {
    scale: Vec<ScaleLabel>,
    questionnaires: Vec<QuestionnaireView>,
}

/// Writes the survey as JSON with the display text each form needs.
pub fn write_survey(
    path: &Path,
    questionnaires: &[QuestionnaireSpec],
    corpus: &Corpus,
    catalog: &AttributeCatalog,
) -> Result<()> {
    let mut views = Vec::with_capacity(questionnaires.len());
    for q in questionnaires {
        let mut questions = Vec::with_capacity(q.questions.len());
        for question in &q.questions {
            let attribute_name = catalog
                .get(question.attribute_id)
                .map(|a| a.name.clone())
                .ok_or_else(|| {
                    Error::Invalid(format!("attribute {} is not in the catalog", question.attribute_id))
                })?;
            questions.push(QuestionView {
                sentence_text: corpus.sentence(question.sentence_id)?.text.clone(),
                word: corpus.word(question.word_id)?.lemma.clone(),
                attribute_name,
                question: question.clone(),
            });
        }
        views.push(QuestionnaireView {
            questionnaire_id: q.questionnaire_id,
            sentences: q.sentences.clone(),
            questions,
        });
    }
    let doc = SurveyDocument {
        scale: SCALE
            .iter()
            .map(|&(value, label)| ScaleLabel { value, label: label.into() })
            .collect(),
        questionnaires: views,
    };
    let text = serde_json::to_string_pretty(&doc)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_survey(path: &Path) -> Result<Vec<QuestionnaireSpec>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: SurveyDocument = serde_json::from_str(&text)?;
    Ok(doc
        .questionnaires
        .into_iter()
        .map(|q| QuestionnaireSpec {
            questionnaire_id: q.questionnaire_id,
            sentences: q.sentences,
            questions: q.questions.into_iter().map(|v| v.question).collect(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub rater_id: String,
    pub questionnaire_id: u32,
    pub question_id: u32,
    pub answer: i8,
}

/// Reads `rater_id,questionnaire_id,question_id,answer` and checks every row
/// against the survey.
pub fn ingest_responses(path: &Path, questions: &BTreeMap<u32, Question>) -> Result<Vec<ResponseRecord>> {
    let file = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != ["rater_id", "questionnaire_id", "question_id", "answer"] {
        return Err(Error::row(&file, 1, "expected header rater_id,questionnaire_id,question_id,answer"));
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        if rec.len() != 4 {
            return Err(Error::row(&file, row, "wrong column count"));
        }
        let rater_id = rec[0].trim().to_string();
        let questionnaire_id: u32 = rec[1]
            .trim()
            .parse()
            .map_err(|_| Error::row(&file, row, "bad questionnaire_id"))?;
        let question_id: u32 = rec[2]
            .trim()
            .parse()
            .map_err(|_| Error::row(&file, row, "bad question_id"))?;
        let answer = match rec[3].trim().parse::<i8>() {
            Ok(a @ -1..=1) => a,
            _ => {
                return Err(Error::row(
                    &file,
                    row,
                    format!("answer {:?} outside the scale -1, 0, 1", &rec[3]),
                ))
            }
        };
        let Some(q) = questions.get(&question_id) else {
            return Err(Error::row(&file, row, format!("unknown question {question_id}")));
        };
        if q.questionnaire_id != questionnaire_id {
            return Err(Error::row(
                &file,
                row,
                format!(
                    "question {question_id} belongs to questionnaire {}, not {questionnaire_id}",
                    q.questionnaire_id
                ),
            ));
        }
        if !seen.insert((rater_id.clone(), question_id)) {
            return Err(Error::row(
                &file,
                row,
                format!("duplicate answer from rater {rater_id} to question {question_id}"),
            ));
        }
        out.push(ResponseRecord {
            rater_id,
            questionnaire_id,
            question_id,
            answer,
        });
    }
    Ok(out)
}

pub fn write_responses(path: &Path, records: &[ResponseRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Percentage of `part / whole` in tenths, rounded half up in exact integer
/// arithmetic.
pub fn percent_tenths(part: u64, whole: u64) -> u64 {
    if whole == 0 {
        return 0;
    }
    (2000 * part + whole) / (2 * whole)
}

/// `percent_tenths` as a one-decimal value.
pub fn percent(part: u64, whole: u64) -> f64 {
    percent_tenths(part, whole) as f64 / 10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterCounts {
    pub rater_id: String,
    pub less: u64,
    pub neutral: u64,
    pub more: u64,
}

impl RaterCounts {
    pub fn total(&self) -> u64 {
        self.less + self.neutral + self.more
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseDistribution {
    /// Sorted by rater id.
    pub raters: Vec<RaterCounts>,
    /// Mean counts over raters for less, neutral, more.
    pub average: [f64; 3],
    /// Percentages of all answers, one decimal.
    pub percent: [f64; 3],
}

pub fn response_distribution(records: &[ResponseRecord]) -> ResponseDistribution {
    let mut by_rater: BTreeMap<&str, RaterCounts> = BTreeMap::new();
    for r in records {
        let c = by_rater.entry(&r.rater_id).or_insert_with(|| RaterCounts {
            rater_id: r.rater_id.clone(),
            less: 0,
            neutral: 0,
            more: 0,
        });
        match r.answer {
            -1 => c.less += 1,
            0 => c.neutral += 1,
            _ => c.more += 1,
        }
    }
    distribution_from_counts(by_rater.into_values().collect())
}

/// Averages and percentages of already tallied per-rater counts.
pub fn distribution_from_counts(raters: Vec<RaterCounts>) -> ResponseDistribution {
    let sums = [
        raters.iter().map(|c| c.less).sum::<u64>(),
        raters.iter().map(|c| c.neutral).sum::<u64>(),
        raters.iter().map(|c| c.more).sum::<u64>(),
    ];
    let total: u64 = sums.iter().sum();
    let n = raters.len().max(1) as f64;
    ResponseDistribution {
        average: sums.map(|s| s as f64 / n),
        percent: sums.map(|s| percent(s, total)),
        raters,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementMatrix {
    pub raters: Vec<String>,
    /// Exact-match counts; symmetric with a zero diagonal.
    pub matches: Vec<Vec<u64>>,
    /// Mean matches of each rater with the others.
    pub rater_average: Vec<f64>,
    pub questions: u64,
    /// Mean pairwise matches over questions, one decimal.
    pub overall_percent: f64,
}

fn answers_by_rater(records: &[ResponseRecord]) -> BTreeMap<&str, BTreeMap<u32, i8>> {
    let mut out: BTreeMap<&str, BTreeMap<u32, i8>> = BTreeMap::new();
    for r in records {
        out.entry(&r.rater_id).or_default().insert(r.question_id, r.answer);
    }
    out
}

/// Pairwise exact-match counts between raters who all answered the same
/// question set.
pub fn pairwise_agreement(records: &[ResponseRecord]) -> Result<AgreementMatrix> {
    let by_rater = answers_by_rater(records);
    let raters: Vec<&str> = by_rater.keys().copied().collect();
    if raters.len() < 2 {
        return Err(Error::Invalid("agreement needs at least two raters".into()));
    }
    let first = &by_rater[raters[0]];
    for r in &raters[1..] {
        let other = &by_rater[r];
        if other.len() != first.len() || !other.keys().eq(first.keys()) {
            return Err(Error::Invalid(format!(
                "raters {} and {r} answered different question sets",
                raters[0]
            )));
        }
    }
    let n = raters.len();
    let mut matches = vec![vec![0u64; n]; n];
    let mut pair_sum = 0u64;
    for i in 0..n {
        for j in i + 1..n {
            let a = &by_rater[raters[i]];
            let b = &by_rater[raters[j]];
            let m = a.iter().filter(|(q, v)| b[*q] == **v).count() as u64;
            matches[i][j] = m;
            matches[j][i] = m;
            pair_sum += m;
        }
    }
    let questions = first.len() as u64;
    let pairs = (n * (n - 1) / 2) as u64;
    Ok(AgreementMatrix {
        raters: raters.iter().map(|r| r.to_string()).collect(),
        rater_average: matches
            .iter()
            .map(|row| row.iter().sum::<u64>() as f64 / (n - 1) as f64)
            .collect(),
        overall_percent: percent(pair_sum, pairs * questions),
        matches,
        questions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusEntry {
    pub question_id: u32,
    /// Answers in rater-id order.
    pub answers: Vec<i8>,
    /// The answer given by at least k raters, if any.
    pub label: Option<i8>,
}

impl ConsensusEntry {
    pub fn reliable(&self) -> bool {
        self.label.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusSet {
    pub k: usize,
    pub n: usize,
    /// Every answered question, by question id.
    pub entries: Vec<ConsensusEntry>,
}

impl ConsensusSet {
    pub fn reliable(&self) -> impl Iterator<Item = &ConsensusEntry> {
        self.entries.iter().filter(|e| e.reliable())
    }

    pub fn reliable_count(&self) -> usize {
        self.reliable().count()
    }
}

/// Marks a question reliable when some answer value is given by at least `k`
/// of its `n` raters. `2k > n` keeps the consensus value unique.
pub fn reliability_filter(records: &[ResponseRecord], k: usize, n: usize) -> Result<ConsensusSet> {
    if k == 0 || 2 * k <= n || k > n {
        return Err(Error::Invalid(format!("consensus needs n/2 < k <= n, got {k} of {n}")));
    }
    let mut by_question: BTreeMap<u32, BTreeMap<&str, i8>> = BTreeMap::new();
    for r in records {
        by_question.entry(r.question_id).or_default().insert(&r.rater_id, r.answer);
    }
    let mut entries = Vec::with_capacity(by_question.len());
    for (question_id, answers) in by_question {
        if answers.len() != n {
            return Err(Error::Invalid(format!(
                "question {question_id} has {} responses, expected {n}",
                answers.len()
            )));
        }
        let answers: Vec<i8> = answers.into_values().collect();
        let label = SCALE
            .iter()
            .map(|&(v, _)| v)
            .find(|v| answers.iter().filter(|a| *a == v).count() >= k);
        entries.push(ConsensusEntry {
            question_id,
            answers,
            label,
        });
    }
    Ok(ConsensusSet { k, n, entries })
}

/// `question_id,answers,label` with `;`-joined answers and an empty label for
/// unreliable questions.
pub fn write_consensus(path: &Path, set: &ConsensusSet) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["question_id", "answers", "label"])?;
    for e in &set.entries {
        let answers: Vec<String> = e.answers.iter().map(i8::to_string).collect();
        w.write_record([
            e.question_id.to_string(),
            answers.join(";"),
            e.label.map(|l| l.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_consensus(path: &Path, k: usize, n: usize) -> Result<ConsensusSet> {
    let file = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path)?;
    let mut entries = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let bad = |what: &str| Error::row(&file, row, format!("bad {what}"));
        let question_id = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| bad("question_id"))?;
        let answers = rec
            .get(1)
            .ok_or_else(|| bad("answers"))?
            .split(';')
            .map(|a| a.parse::<i8>().map_err(|_| bad("answers")))
            .collect::<Result<Vec<_>>>()?;
        let label = match rec.get(2) {
            Some("") | None => None,
            Some(s) => Some(s.parse::<i8>().map_err(|_| bad("label"))?),
        };
        entries.push(ConsensusEntry {
            question_id,
            answers,
            label,
        });
    }
    Ok(ConsensusSet { k, n, entries })
}

/// Synthetic raters: each answers the reference value with probability
/// `accuracy` and one of the other two scale values otherwise.
pub fn simulate_responses(
    questions: &BTreeMap<u32, Question>,
    reference: &BTreeMap<u32, i8>,
    raters: &[String],
    accuracy: f64,
    seed: u64,
) -> Result<Vec<ResponseRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(raters.len() * questions.len());
    for rater in raters {
        for q in questions.values() {
            let truth = *reference.get(&q.question_id).ok_or_else(|| {
                Error::Invalid(format!("no reference answer for question {}", q.question_id))
            })?;
            let answer = if rng.random::<f64>() < accuracy {
                truth
            } else {
                let others: Vec<i8> = SCALE.iter().map(|&(v, _)| v).filter(|&v| v != truth).collect();
                *others.choose(&mut rng).expect("scale has three values")
            };
            out.push(ResponseRecord {
                rater_id: rater.clone(),
                questionnaire_id: q.questionnaire_id,
                question_id: q.question_id,
                answer,
            });
        }
    }
    Ok(out)
}
