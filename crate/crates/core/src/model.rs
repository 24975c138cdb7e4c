//! Domain types shared by every stage: the attribute catalog, word vectors,
//! the role-tagged sentence corpus and per-subject sentence images.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of experiential attributes in a word vector.
pub const ATTRIBUTE_COUNT: usize = 66;

pub type WordId = u32;
pub type SentenceId = u32;
/// 1-based attribute identifier as used in data files.
pub type AttributeId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub attribute_id: AttributeId,
    pub name: String,
    pub group: String,
}

/// Ordered attribute list. File order is the canonical presentation order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeCatalog {
    entries: Vec<Attribute>,
    rank: HashMap<AttributeId, usize>,
}

// Group sizes of the placeholder catalog. Vision carries the 15 visual attributes.
const PLACEHOLDER_GROUPS: [(&str, usize); 15] = [
    ("Vision", 15),
    ("Somatic", 5),
    ("Audition", 7),
    ("Gustation", 1),
    ("Olfaction", 1),
    ("Motor", 4),
    ("Spatial", 7),
    ("Temporal", 4),
    ("Causal", 2),
    ("Social", 4),
    ("Cognition", 1),
    ("Emotion", 10),
    ("Drive", 2),
    ("Attention", 2),
    ("Other", 1),
];

impl AttributeCatalog {
    pub fn new(entries: Vec<Attribute>) -> Result<Self> {
        if entries.len() != ATTRIBUTE_COUNT {
            return Err(Error::Invalid(format!(
                "catalog must have {ATTRIBUTE_COUNT} entries, found {}",
                entries.len()
            )));
        }
        let mut rank = HashMap::with_capacity(ATTRIBUTE_COUNT);
        for (i, e) in entries.iter().enumerate() {
            if e.attribute_id < 1 || e.attribute_id as usize > ATTRIBUTE_COUNT {
                return Err(Error::Invalid(format!(
                    "attribute id {} outside 1..={ATTRIBUTE_COUNT}",
                    e.attribute_id
                )));
            }
            if rank.insert(e.attribute_id, i).is_some() {
                return Err(Error::Invalid(format!(
                    "duplicate attribute id {}",
                    e.attribute_id
                )));
            }
        }
        Ok(Self { entries, rank })
    }

    /// `attr_01..attr_66` with coarse group labels.
    pub fn placeholder() -> Self {
        let mut entries = Vec::with_capacity(ATTRIBUTE_COUNT);
        let mut id = 1;
        for (group, n) in PLACEHOLDER_GROUPS {
            for _ in 0..n {
                entries.push(Attribute {
                    attribute_id: id,
                    name: format!("attr_{id:02}"),
                    group: group.to_string(),
                });
                id += 1;
            }
        }
        Self::new(entries).expect("placeholder catalog is valid")
    }

    pub fn entries(&self) -> &[Attribute] {
        &self.entries
    }

    /// Position of an attribute in presentation order.
    pub fn rank(&self, id: AttributeId) -> Option<usize> {
        self.rank.get(&id).copied()
    }

    pub fn get(&self, id: AttributeId) -> Option<&Attribute> {
        self.rank(id).map(|i| &self.entries[i])
    }

    pub fn group_size(&self, group: &str) -> usize {
        self.entries.iter().filter(|e| e.group == group).count()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = path.display().to_string();
        let mut rdr = csv::ReaderBuilder::new()
            .flexible(true)
            .from_path(path)?;
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["attribute_id", "name", "group"] {
            return Err(Error::row(&file, 1, "expected header attribute_id,name,group"));
        }
        let mut entries = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i + 2;
            if rec.len() != 3 {
                return Err(Error::row(&file, row, "wrong column count"));
            }
            let attribute_id = rec[0]
                .trim()
                .parse()
                .map_err(|_| Error::row(&file, row, "bad attribute_id"))?;
            entries.push(Attribute {
                attribute_id,
                name: rec[1].to_string(),
                group: rec[2].to_string(),
            });
        }
        Self::new(entries)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["attribute_id", "name", "group"])?;
        for e in &self.entries {
            w.write_record([e.attribute_id.to_string(), e.name.clone(), e.group.clone()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Attribute weights of one word, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CarVector(Vec<f64>);

impl CarVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != ATTRIBUTE_COUNT {
            return Err(Error::Dimension {
                expected: ATTRIBUTE_COUNT,
                got: values.len(),
                context: "attribute vector",
            });
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::Invalid(format!(
                "attribute {} value {v} outside [0, 1]",
                i + 1
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros() -> Self {
        Self(vec![0.0; ATTRIBUTE_COUNT])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Elementwise `self - original`.
    pub fn delta_from(&self, original: &CarVector) -> Vec<f64> {
        self.0.iter().zip(&original.0).map(|(a, b)| a - b).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordEntry {
    pub word_id: WordId,
    pub lemma: String,
    pub car: CarVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RoleTag {
    Agent,
    Verb,
    #[serde(rename = "POLE")]
    Pole,
}

impl fmt::Display for RoleTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RoleTag::Agent => "Agent",
            RoleTag::Verb => "Verb",
            RoleTag::Pole => "POLE",
        })
    }
}

impl std::str::FromStr for RoleTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Agent" => Ok(RoleTag::Agent),
            "Verb" => Ok(RoleTag::Verb),
            "POLE" => Ok(RoleTag::Pole),
            other => Err(Error::Invalid(format!("unknown role {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub word_id: WordId,
    pub role: RoleTag,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceSpec {
    pub sentence_id: SentenceId,
    pub text: String,
    pub tokens: Vec<Token>,
}

impl SentenceSpec {
    pub fn contains(&self, word_id: WordId) -> bool {
        self.tokens.iter().any(|t| t.word_id == word_id)
    }

    pub fn position(&self, word_id: WordId) -> Option<usize> {
        self.tokens.iter().position(|t| t.word_id == word_id)
    }
}

// On-disk form of one corpus line.
#[derive(Serialize, Deserialize)]
struct SentenceLine {
    id: SentenceId,
    text: String,
    tokens: Vec<(WordId, RoleTag)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    sentences: Vec<SentenceSpec>,
    lexicon: Vec<WordEntry>,
    word_index: HashMap<WordId, usize>,
    sentence_index: HashMap<SentenceId, usize>,
}

impl Corpus {
    pub fn new(sentences: Vec<SentenceSpec>, lexicon: Vec<WordEntry>) -> Result<Self> {
        let mut word_index = HashMap::with_capacity(lexicon.len());
        for (i, w) in lexicon.iter().enumerate() {
            if word_index.insert(w.word_id, i).is_some() {
                return Err(Error::Invalid(format!("duplicate word_id {}", w.word_id)));
            }
        }
        let mut sentence_index = HashMap::with_capacity(sentences.len());
        for (i, s) in sentences.iter().enumerate() {
            validate_sentence(s, &word_index)?;
            if sentence_index.insert(s.sentence_id, i).is_some() {
                return Err(Error::Invalid(format!(
                    "duplicate sentence_id {}",
                    s.sentence_id
                )));
            }
        }
        Ok(Self {
            sentences,
            lexicon,
            word_index,
            sentence_index,
        })
    }

    pub fn sentences(&self) -> &[SentenceSpec] {
        &self.sentences
    }

    pub fn lexicon(&self) -> &[WordEntry] {
        &self.lexicon
    }

    pub fn word(&self, id: WordId) -> Result<&WordEntry> {
        self.word_index
            .get(&id)
            .map(|&i| &self.lexicon[i])
            .ok_or(Error::UnknownWord(id))
    }

    pub fn sentence(&self, id: SentenceId) -> Result<&SentenceSpec> {
        self.sentence_index
            .get(&id)
            .map(|&i| &self.sentences[i])
            .ok_or(Error::UnknownSentence(id))
    }

    /// Sentences containing `word_id`, in corpus order.
    pub fn contexts_of(&self, word_id: WordId) -> impl Iterator<Item = &SentenceSpec> {
        self.sentences.iter().filter(move |s| s.contains(word_id))
    }
}

fn validate_sentence(s: &SentenceSpec, words: &HashMap<WordId, usize>) -> Result<()> {
    if s.tokens.is_empty() {
        return Err(Error::Invalid(format!(
            "sentence {}: sentence has no tokens",
            s.sentence_id
        )));
    }
    for t in &s.tokens {
        if !words.contains_key(&t.word_id) {
            return Err(Error::Invalid(format!(
                "sentence {}: word_id {} not in lexicon",
                s.sentence_id, t.word_id
            )));
        }
    }
    for role in [RoleTag::Agent, RoleTag::Verb] {
        if s.tokens.iter().filter(|t| t.role == role).count() > 1 {
            return Err(Error::Invalid(format!(
                "sentence {}: more than one {role}",
                s.sentence_id
            )));
        }
    }
    let mut seen = BTreeSet::new();
    for t in &s.tokens {
        if !seen.insert(t.word_id) {
            return Err(Error::Invalid(format!(
                "sentence {}: word_id {} repeated",
                s.sentence_id, t.word_id
            )));
        }
    }
    Ok(())
}

fn attribute_header() -> Vec<String> {
    (1..=ATTRIBUTE_COUNT).map(|i| format!("a{i:02}")).collect()
}

pub fn load_lexicon(path: &Path) -> Result<Vec<WordEntry>> {
    let file = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)?;
    let header = rdr.headers()?.clone();
    let mut expected = vec!["word_id".to_string(), "lemma".to_string()];
    expected.extend(attribute_header());
    if header.len() != expected.len() {
        return Err(Error::row(&file, 1, "wrong column count"));
    }
    if let Some(col) = expected.iter().zip(header.iter()).find(|(e, h)| e != h) {
        return Err(Error::row(&file, 1, format!("missing column {}", col.0)));
    }

    let mut out = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        if rec.len() != expected.len() {
            return Err(Error::row(&file, row, "wrong column count"));
        }
        let word_id: WordId = rec[0]
            .trim()
            .parse()
            .map_err(|_| Error::row(&file, row, format!("bad word_id {:?}", &rec[0])))?;
        if !ids.insert(word_id) {
            return Err(Error::row(&file, row, format!("duplicate word_id {word_id}")));
        }
        let values = rec
            .iter()
            .skip(2)
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::row(&file, row, format!("bad value {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let car = CarVector::new(values).map_err(|e| Error::row(&file, row, e.to_string()))?;
        out.push(WordEntry {
            word_id,
            lemma: rec[1].to_string(),
            car,
        });
    }
    Ok(out)
}

/// Writes the lexicon with six fixed decimals per value.
pub fn write_lexicon(path: &Path, lexicon: &[WordEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["word_id".to_string(), "lemma".to_string()];
    header.extend(attribute_header());
    w.write_record(&header)?;
    for e in lexicon {
        let mut row = vec![e.word_id.to_string(), e.lemma.clone()];
        row.extend(e.car.as_slice().iter().map(|v| format!("{v:.6}")));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_corpus(path: &Path, lexicon: Vec<WordEntry>) -> Result<Corpus> {
    let file = path.display().to_string();
    let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut sentences = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: SentenceLine =
            serde_json::from_str(&line).map_err(|e| Error::row(&file, i + 1, e.to_string()))?;
        sentences.push(SentenceSpec {
            sentence_id: parsed.id,
            text: parsed.text,
            tokens: parsed
                .tokens
                .into_iter()
                .map(|(word_id, role)| Token { word_id, role })
                .collect(),
        });
    }
    Corpus::new(sentences, lexicon)
}

pub fn write_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for s in corpus.sentences() {
        let line = SentenceLine {
            id: s.sentence_id,
            text: s.text.clone(),
            tokens: s.tokens.iter().map(|t| (t.word_id, t.role)).collect(),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub sentences: usize,
    pub tokens: usize,
    /// Distinct lemmas used anywhere in the corpus.
    pub unique_words: usize,
    pub agents: usize,
    pub verbs: usize,
    pub poles: usize,
    /// Lemmas used in more than one role, sorted.
    pub multi_role: Vec<String>,
}

impl CorpusStats {
    /// Sum of the per-role distinct word counts; a dual-role word counts once per role.
    pub fn role_words(&self) -> usize {
        self.agents + self.verbs + self.poles
    }
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let mut roles: BTreeMap<WordId, BTreeSet<RoleTag>> = BTreeMap::new();
    let mut tokens = 0;
    for s in corpus.sentences() {
        for t in &s.tokens {
            roles.entry(t.word_id).or_default().insert(t.role);
            tokens += 1;
        }
    }
    let count = |r: RoleTag| roles.values().filter(|set| set.contains(&r)).count();
    let mut multi_role: Vec<String> = roles
        .iter()
        .filter(|(_, set)| set.len() > 1)
        .map(|(id, _)| {
            corpus
                .word(*id)
                .map(|w| w.lemma.clone())
                .unwrap_or_default()
        })
        .collect();
    multi_role.sort();
    CorpusStats {
        sentences: corpus.sentences().len(),
        tokens,
        unique_words: roles.len(),
        agents: count(RoleTag::Agent),
        verbs: count(RoleTag::Verb),
        poles: count(RoleTag::Pole),
        multi_role,
    }
}

/// Voxel activations for one sentence or synthesized word.
#[derive(Debug, Clone, PartialEq)]
pub struct FmriVector(Vec<f64>);

impl FmriVector {
    pub fn new(voxels: Vec<f64>) -> Result<Self> {
        if voxels.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self(voxels))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectDataset {
    pub subject_id: String,
    pub voxel_dim: usize,
    pub sentence_images: BTreeMap<SentenceId, FmriVector>,
}

impl SubjectDataset {
    pub fn new(
        subject_id: impl Into<String>,
        voxel_dim: usize,
        sentence_images: BTreeMap<SentenceId, FmriVector>,
    ) -> Result<Self> {
        if voxel_dim < 1 {
            return Err(Error::Invalid("voxel_dim must be at least 1".into()));
        }
        for img in sentence_images.values() {
            if img.len() != voxel_dim {
                return Err(Error::Dimension {
                    expected: voxel_dim,
                    got: img.len(),
                    context: "sentence image",
                });
            }
        }
        Ok(Self {
            subject_id: subject_id.into(),
            voxel_dim,
            sentence_images,
        })
    }

    pub fn image(&self, sentence_id: SentenceId) -> Result<&FmriVector> {
        self.sentence_images
            .get(&sentence_id)
            .ok_or(Error::UnknownSentence(sentence_id))
    }

    /// Checks that every corpus sentence has an image.
    pub fn covers(&self, corpus: &Corpus) -> Result<()> {
        for s in corpus.sentences() {
            self.image(s.sentence_id)?;
        }
        Ok(())
    }

    /// Reads `sentence_id,v1..vV`. The subject id is taken from the caller.
    pub fn load(path: &Path, subject_id: &str) -> Result<Self> {
        let file = path.display().to_string();
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
        let header = rdr.headers()?.clone();
        if header.len() < 2 || &header[0] != "sentence_id" {
            return Err(Error::row(&file, 1, "expected header sentence_id,v1..vV"));
        }
        let voxel_dim = header.len() - 1;
        let mut images = BTreeMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i + 2;
            if rec.len() != header.len() {
                return Err(Error::row(&file, row, "wrong column count"));
            }
            let id: SentenceId = rec[0]
                .trim()
                .parse()
                .map_err(|_| Error::row(&file, row, "bad sentence_id"))?;
            let voxels = rec
                .iter()
                .skip(1)
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::row(&file, row, format!("bad value {s:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let img = FmriVector::new(voxels).map_err(|e| Error::row(&file, row, e.to_string()))?;
            if images.insert(id, img).is_some() {
                return Err(Error::row(&file, row, format!("duplicate sentence_id {id}")));
            }
        }
        Self::new(subject_id, voxel_dim, images)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["sentence_id".to_string()];
        header.extend((1..=self.voxel_dim).map(|i| format!("v{i}")));
        w.write_record(&header)?;
        for (id, img) in &self.sentence_images {
            let mut row = vec![id.to_string()];
            row.extend(img.as_slice().iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: WordId, lemma: &str, fill: f64) -> WordEntry {
        WordEntry {
            word_id: id,
            lemma: lemma.into(),
            car: CarVector::new(vec![fill; ATTRIBUTE_COUNT]).unwrap(),
        }
    }

    fn lexicon_text(rows: &[String]) -> String {
        let mut s = String::from("word_id,lemma");
        for i in 1..=ATTRIBUTE_COUNT {
            s.push_str(&format!(",a{i:02}"));
        }
        s.push('\n');
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    fn zeros_row(id: u32, lemma: &str) -> String {
        format!("{id},{lemma}{}", ",0.0".repeat(ATTRIBUTE_COUNT))
    }

    #[test]
    fn placeholder_catalog_shape() {
        let c = AttributeCatalog::placeholder();
        assert_eq!(c.entries().len(), 66);
        assert_eq!(c.group_size("Vision"), 15);
        assert_eq!(c.entries()[0].name, "attr_01");
        assert_eq!(c.rank(66), Some(65));
    }

    #[test]
    fn zero_row_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lex.csv");
        std::fs::write(&p, lexicon_text(&[zeros_row(2, "activist")])).unwrap();
        let lex = load_lexicon(&p).unwrap();
        assert_eq!(lex.len(), 1);
        assert_eq!(lex[0].lemma, "activist");
        assert!(lex[0].car.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn extra_column_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lex.csv");
        let row = format!("{},0.0", zeros_row(2, "activist"));
        std::fs::write(&p, lexicon_text(&[row])).unwrap();
        let err = load_lexicon(&p).unwrap_err().to_string();
        assert!(err.contains("wrong column count"), "{err}");
        assert!(err.contains("row 2"), "{err}");
    }

    #[test]
    fn out_of_range_and_duplicates_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lex.csv");
        let bad = format!("3,x,1.5{}", ",0.0".repeat(ATTRIBUTE_COUNT - 1));
        std::fs::write(&p, lexicon_text(&[zeros_row(2, "a"), bad])).unwrap();
        let err = load_lexicon(&p).unwrap_err().to_string();
        assert!(err.contains("row 3") && err.contains("outside"), "{err}");

        std::fs::write(&p, lexicon_text(&[zeros_row(2, "a"), zeros_row(2, "b")])).unwrap();
        let err = load_lexicon(&p).unwrap_err().to_string();
        assert!(err.contains("duplicate word_id 2"), "{err}");
    }

    #[test]
    fn loads_123_entries() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lex.csv");
        let rows: Vec<String> = (1..=123).map(|i| zeros_row(i, &format!("w{i}"))).collect();
        std::fs::write(&p, lexicon_text(&rows)).unwrap();
        assert_eq!(load_lexicon(&p).unwrap().len(), 123);
    }

    #[test]
    fn corpus_line_parsing_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("corpus.jsonl");
        let lex = vec![entry(13, "author", 0.1), entry(60, "kicked", 0.2), entry(70, "desk", 0.3)];
        std::fs::write(
            &p,
            r#"{"id":113,"text":"The author kicked the desk","tokens":[[13,"Agent"],[60,"Verb"],[70,"POLE"]]}"#,
        )
        .unwrap();
        let c = load_corpus(&p, lex.clone()).unwrap();
        let s = c.sentence(113).unwrap();
        assert_eq!(s.tokens.len(), 3);
        assert_eq!(s.tokens[0], Token { word_id: 13, role: RoleTag::Agent });
        assert_eq!(s.tokens[2].role, RoleTag::Pole);

        std::fs::write(&p, r#"{"id":1,"text":"x","tokens":[[9999,"Agent"]]}"#).unwrap();
        let err = load_corpus(&p, lex.clone()).unwrap_err().to_string();
        assert!(err.contains("9999"), "{err}");

        std::fs::write(&p, r#"{"id":1,"text":"x","tokens":[]}"#).unwrap();
        let err = load_corpus(&p, lex.clone()).unwrap_err().to_string();
        assert!(err.contains("sentence has no tokens"), "{err}");

        std::fs::write(&p, r#"{"id":1,"text":"x","tokens":[[13,"Agent"],[70,"Agent"]]}"#).unwrap();
        let err = load_corpus(&p, lex.clone()).unwrap_err().to_string();
        assert!(err.contains("more than one Agent"), "{err}");

        std::fs::write(
            &p,
            "{\"id\":1,\"text\":\"x\",\"tokens\":[[13,\"Agent\"]]}\n{\"id\":1,\"text\":\"y\",\"tokens\":[[60,\"Verb\"]]}\n",
        )
        .unwrap();
        let err = load_corpus(&p, lex).unwrap_err().to_string();
        assert!(err.contains("duplicate sentence_id 1"), "{err}");
    }

    #[test]
    fn stats_multi_role_and_single_sentence() {
        let lex = vec![
            entry(2, "activist", 0.1),
            entry(10, "arrested", 0.1),
            entry(15, "banker", 0.1),
        ];
        let s1 = SentenceSpec {
            sentence_id: 1,
            text: "The activist arrested the banker".into(),
            tokens: vec![
                Token { word_id: 2, role: RoleTag::Agent },
                Token { word_id: 10, role: RoleTag::Verb },
                Token { word_id: 15, role: RoleTag::Pole },
            ],
        };
        let single = Corpus::new(vec![s1.clone()], lex.clone()).unwrap();
        let st = corpus_stats(&single);
        assert_eq!((st.sentences, st.agents, st.verbs, st.poles), (1, 1, 1, 1));
        assert!(st.multi_role.is_empty());

        let s2 = SentenceSpec {
            sentence_id: 2,
            text: "The banker arrested the activist".into(),
            tokens: vec![
                Token { word_id: 15, role: RoleTag::Agent },
                Token { word_id: 10, role: RoleTag::Verb },
                Token { word_id: 2, role: RoleTag::Pole },
            ],
        };
        let c = Corpus::new(vec![s1, s2], lex).unwrap();
        let st = corpus_stats(&c);
        assert_eq!(st.multi_role, vec!["activist".to_string(), "banker".to_string()]);
        assert_eq!(st.role_words(), 5);
        assert_eq!(st.unique_words, 3);
    }
}
