//! Word-level images averaged from sentence images, and a seeded generator
//! of lexicons, corpora and subjects with planted context effects.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    AttributeId, CarVector, Corpus, FmriVector, RoleTag, SentenceId, SentenceSpec,
    SubjectDataset, Token, WordEntry, WordId, ATTRIBUTE_COUNT,
};
use crate::network::{assemble_input, NetworkConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthWordSet {
    pub subject_id: String,
    pub images: BTreeMap<WordId, FmriVector>,
    pub support: BTreeMap<WordId, Vec<SentenceId>>,
}

/// Unweighted elementwise mean of the images of every sentence containing the word.
pub fn synthesize_word(
    word_id: WordId,
    subject: &SubjectDataset,
    corpus: &Corpus,
) -> Result<(FmriVector, Vec<SentenceId>)> {
    let support: Vec<SentenceId> = corpus.contexts_of(word_id).map(|s| s.sentence_id).collect();
    if support.is_empty() {
        let name = corpus
            .word(word_id)
            .map(|w| w.lemma.clone())
            .unwrap_or_else(|_| word_id.to_string());
        return Err(Error::WordNotInCorpus(name));
    }
    let mut acc = vec![0.0; subject.voxel_dim];
    for id in &support {
        for (a, v) in acc.iter_mut().zip(subject.image(*id)?.as_slice()) {
            *a += v;
        }
    }
    let n = support.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok((FmriVector::new(acc)?, support))
}

/// SynthWord images for every word used in the corpus.
pub fn synthesize_all(subject: &SubjectDataset, corpus: &Corpus) -> Result<SynthWordSet> {
    let mut images = BTreeMap::new();
    let mut support = BTreeMap::new();
    for w in corpus.lexicon() {
        if corpus.contexts_of(w.word_id).next().is_none() {
            continue;
        }
        let (img, sup) = synthesize_word(w.word_id, subject, corpus)?;
        images.insert(w.word_id, img);
        support.insert(w.word_id, sup);
    }
    Ok(SynthWordSet {
        subject_id: subject.subject_id.clone(),
        images,
        support,
    })
}

impl SynthWordSet {
    /// `word_id,support,v1..vV` with support as `;`-separated sentence ids.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let dim = self.images.values().next().map_or(0, FmriVector::len);
        let mut header = vec!["word_id".to_string(), "support".to_string()];
        header.extend((1..=dim).map(|i| format!("v{i}")));
        w.write_record(&header)?;
        for (id, img) in &self.images {
            let sup = self.support[id]
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(";");
            let mut row = vec![id.to_string(), sup];
            row.extend(img.as_slice().iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedBoost {
    pub sentence_id: SentenceId,
    pub word_id: WordId,
    pub attribute_id: AttributeId,
    pub value: f64,
}

/// Everything needed to regenerate a subject's images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorTruth {
    pub seed: u64,
    pub voxel_dim: usize,
    /// Standard deviation of the additive Gaussian voxel noise.
    pub noise: f64,
    /// Scale applied to each input slot before the linear map.
    pub slot_weights: Vec<f64>,
    /// Inner rank of the generator map; images lie in a subspace of this dimension.
    pub latent_dim: usize,
    /// Pass the linear image through `tanh`.
    #[serde(default)]
    pub nonlinear: bool,
    pub boosts: Vec<PlantedBoost>,
}

impl GeneratorTruth {
    pub fn new(seed: u64, voxel_dim: usize, noise: f64, slot_count: usize) -> Self {
        Self {
            seed,
            voxel_dim,
            noise,
            slot_weights: vec![1.0; slot_count],
            latent_dim: 16,
            nonlinear: false,
            boosts: Vec::new(),
        }
    }

    pub fn slot_count(&self) -> usize {
        self.slot_weights.len()
    }

    pub fn boost_map(&self) -> BTreeMap<(SentenceId, WordId, AttributeId), f64> {
        self.boosts
            .iter()
            .map(|b| ((b.sentence_id, b.word_id, b.attribute_id), b.value))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.voxel_dim < 1 {
            return Err(Error::Invalid("voxel_dim must be at least 1".into()));
        }
        if self.latent_dim < 1 {
            return Err(Error::Invalid("latent_dim must be at least 1".into()));
        }
        if !(self.noise >= 0.0) {
            return Err(Error::Invalid("noise scale must be non-negative".into()));
        }
        if let Some(b) = self.boosts.iter().find(|b| !(-1.0..=1.0).contains(&b.value)) {
            return Err(Error::Invalid(format!("boost {} outside [-1, 1]", b.value)));
        }
        if let Some(b) = self
            .boosts
            .iter()
            .find(|b| b.attribute_id < 1 || b.attribute_id as usize > ATTRIBUTE_COUNT)
        {
            return Err(Error::Invalid(format!("boost attribute {} out of range", b.attribute_id)));
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let t: Self = serde_json::from_reader(BufReader::new(f))?;
        t.validate()?;
        Ok(t)
    }
}

/// Images are `tanh?((x + boosts) E D) + noise`, where `x` is the
/// role-slot layout of the sentence, `E` (input_dim x latent) has variance
/// `1 / input_dim` and `D` (latent x voxels) variance `1 / latent`, both
/// drawn from the truth seed. Noise comes from a separate stream, so
/// changing boosts only changes the boosted sentences.
pub fn generate_subject(
    subject_id: &str,
    corpus: &Corpus,
    truth: &GeneratorTruth,
) -> Result<SubjectDataset> {
    truth.validate()?;
    let layout = NetworkConfig {
        slot_count: truth.slot_count(),
        ..NetworkConfig::default()
    };
    let d = layout.input_dim();
    let r = truth.latent_dim;
    let v = truth.voxel_dim;

    let mut rng = ChaCha8Rng::seed_from_u64(truth.seed);
    let mut gaussian = |n: usize, sd: f64| -> Vec<f64> {
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                sd * z
            })
            .collect()
    };
    let encode = gaussian(d * r, 1.0 / (d as f64).sqrt());
    let decode = gaussian(r * v, 1.0 / (r as f64).sqrt());
    let mut noise_rng = ChaCha8Rng::seed_from_u64(truth.seed);
    noise_rng.set_stream(1);

    let boosts = truth.boost_map();
    let mut images = BTreeMap::new();
    for s in corpus.sentences() {
        let input = assemble_input(s, corpus, &layout)?;
        let mut x = input.values;
        for (t, &slot) in s.tokens.iter().zip(&input.token_slots) {
            for a in 0..ATTRIBUTE_COUNT {
                if let Some(b) = boosts.get(&(s.sentence_id, t.word_id, a as AttributeId + 1)) {
                    x[slot * ATTRIBUTE_COUNT + a] += b;
                }
            }
        }
        for (slot, w) in truth.slot_weights.iter().enumerate() {
            x[slot * ATTRIBUTE_COUNT..(slot + 1) * ATTRIBUTE_COUNT]
                .iter_mut()
                .for_each(|e| *e *= w);
        }
        let mut latent = vec![0.0; r];
        for (i, xi) in x.iter().enumerate() {
            if *xi == 0.0 {
                continue;
            }
            for (l, e) in latent.iter_mut().zip(&encode[i * r..(i + 1) * r]) {
                *l += xi * e;
            }
        }
        let mut img = vec![0.0; v];
        for (k, lk) in latent.iter().enumerate() {
            for (o, m) in img.iter_mut().zip(&decode[k * v..(k + 1) * v]) {
                *o += lk * m;
            }
        }
        for o in img.iter_mut() {
            if truth.nonlinear {
                *o = o.tanh();
            }
            let n: f64 = StandardNormal.sample(&mut noise_rng);
            *o += truth.noise * n;
        }
        images.insert(s.sentence_id, FmriVector::new(img)?);
    }
    SubjectDataset::new(subject_id, v, images)
}

/// Role inventory of a generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusShape {
    pub sentences: usize,
    pub agents: usize,
    pub verbs: usize,
    pub poles: usize,
    /// Agents that also appear as POLE words.
    pub dual_role: usize,
    /// Probability that a sentence carries a second POLE word.
    pub second_pole_rate: f64,
}

impl Default for CorpusShape {
    fn default() -> Self {
        Self {
            sentences: 64,
            agents: 38,
            verbs: 39,
            poles: 46,
            dual_role: 3,
            second_pole_rate: 0.3,
        }
    }
}

/// Builds a lexicon with mid-range attribute values and a corpus in which
/// every word of every role is used at least once.
pub fn generate_corpus(shape: &CorpusShape, seed: u64) -> Result<Corpus> {
    if shape.agents == 0 || shape.verbs == 0 || shape.poles < 2 {
        return Err(Error::Invalid("corpus shape needs agents, verbs and at least two POLE words".into()));
    }
    if shape.dual_role > shape.agents.min(shape.poles) {
        return Err(Error::Invalid("dual_role exceeds role inventory".into()));
    }
    if shape.sentences < shape.agents.max(shape.verbs).max(shape.poles) {
        return Err(Error::Invalid("too few sentences to use every word".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lexicon = Vec::new();
    let mut new_word = |lemma: String, rng: &mut ChaCha8Rng| -> Result<WordId> {
        let id = lexicon.len() as WordId + 1;
        let values = (0..ATTRIBUTE_COUNT)
            .map(|_| 0.15 + 0.7 * rng.random::<f64>())
            .collect();
        lexicon.push(WordEntry {
            word_id: id,
            lemma,
            car: CarVector::new(values)?,
        });
        Ok(id)
    };
    let agents = (1..=shape.agents)
        .map(|i| new_word(format!("agent{i:02}"), &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let verbs = (1..=shape.verbs)
        .map(|i| new_word(format!("verb{i:02}"), &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let mut poles: Vec<WordId> = agents[..shape.dual_role].to_vec();
    for i in 1..=shape.poles - shape.dual_role {
        poles.push(new_word(format!("pole{i:02}"), &mut rng)?);
    }
    let lemma = |id: WordId| lexicon[id as usize - 1].lemma.clone();

    let mut agent_order = agents.clone();
    let mut verb_order = verbs.clone();
    let mut pole_order = poles.clone();
    agent_order.shuffle(&mut rng);
    verb_order.shuffle(&mut rng);
    pole_order.shuffle(&mut rng);

    let mut sentences = Vec::with_capacity(shape.sentences);
    for i in 0..shape.sentences {
        let agent = agent_order[i % agent_order.len()];
        let verb = verb_order[i % verb_order.len()];
        let mut pi = i % pole_order.len();
        if pole_order[pi] == agent {
            pi = (pi + 1) % pole_order.len();
        }
        let pole = pole_order[pi];
        let mut tokens = vec![
            Token { word_id: agent, role: RoleTag::Agent },
            Token { word_id: verb, role: RoleTag::Verb },
            Token { word_id: pole, role: RoleTag::Pole },
        ];
        let mut text = format!("The {} {} the {}", lemma(agent), lemma(verb), lemma(pole));
        if rng.random::<f64>() < shape.second_pole_rate {
            let candidates: Vec<WordId> =
                poles.iter().copied().filter(|&p| p != agent && p != pole).collect();
            if let Some(&p2) = candidates.choose(&mut rng) {
                tokens.push(Token { word_id: p2, role: RoleTag::Pole });
                text.push_str(&format!(" at the {}", lemma(p2)));
            }
        }
        sentences.push(SentenceSpec {
            sentence_id: i as SentenceId + 1,
            text,
            tokens,
        });
    }
    Corpus::new(sentences, lexicon)
}

/// Which tokens of a sentence receive planted boosts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoostTargets {
    /// One token drawn at random.
    #[default]
    OnePerSentence,
    EveryToken,
}

/// Plants `per_target` signed boosts with magnitudes in `[min_mag, max_mag]`
/// on distinct attributes of each target token.
pub fn plant_boosts(
    corpus: &Corpus,
    targets: BoostTargets,
    per_target: usize,
    min_mag: f64,
    max_mag: f64,
    seed: u64,
) -> Result<Vec<PlantedBoost>> {
    if per_target > ATTRIBUTE_COUNT {
        return Err(Error::Invalid("more boosts than attributes".into()));
    }
    if !(0.0..=1.0).contains(&min_mag) || !(min_mag..=1.0).contains(&max_mag) {
        return Err(Error::Invalid("boost magnitudes must satisfy 0 <= min <= max <= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for s in corpus.sentences() {
        let chosen: Vec<WordId> = match targets {
            BoostTargets::OnePerSentence => {
                vec![s.tokens.choose(&mut rng).expect("sentences are non-empty").word_id]
            }
            BoostTargets::EveryToken => s.tokens.iter().map(|t| t.word_id).collect(),
        };
        for target in chosen {
            let mut attrs = rand::seq::index::sample(&mut rng, ATTRIBUTE_COUNT, per_target).into_vec();
            attrs.sort_unstable();
            for a in attrs {
                let mag = rng.random_range(min_mag..=max_mag);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                out.push(PlantedBoost {
                    sentence_id: s.sentence_id,
                    word_id: target,
                    attribute_id: a as AttributeId + 1,
                    value: sign * mag,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::corpus_stats;

    fn tiny() -> (Corpus, SubjectDataset) {
        let lex: Vec<WordEntry> = (1..=3)
            .map(|i| WordEntry {
                word_id: i,
                lemma: format!("w{i}"),
                car: CarVector::new(vec![0.5; ATTRIBUTE_COUNT]).unwrap(),
            })
            .collect();
        let s = |id, toks: Vec<(WordId, RoleTag)>| SentenceSpec {
            sentence_id: id,
            text: String::new(),
            tokens: toks
                .into_iter()
                .map(|(word_id, role)| Token { word_id, role })
                .collect(),
        };
        let corpus = Corpus::new(
            vec![
                s(1, vec![(1, RoleTag::Agent), (2, RoleTag::Verb)]),
                s(2, vec![(1, RoleTag::Agent), (3, RoleTag::Verb)]),
            ],
            lex,
        )
        .unwrap();
        let images = [(1, vec![0.0, 1.0]), (2, vec![1.0, 0.0])]
            .into_iter()
            .map(|(k, v)| (k, FmriVector::new(v).unwrap()))
            .collect();
        (corpus, SubjectDataset::new("s1", 2, images).unwrap())
    }

    #[test]
    fn average_of_one_and_two() {
        let (c, subj) = tiny();
        let (img, sup) = synthesize_word(2, &subj, &c).unwrap();
        assert_eq!(img.as_slice(), &[0.0, 1.0]);
        assert_eq!(sup, vec![1]);
        let (img, sup) = synthesize_word(1, &subj, &c).unwrap();
        assert_eq!(img.as_slice(), &[0.5, 0.5]);
        assert_eq!(sup, vec![1, 2]);
    }

    #[test]
    fn absent_word_is_an_error() {
        let (c, subj) = tiny();
        let err = synthesize_word(42, &subj, &c).unwrap_err().to_string();
        assert!(err.contains("42"), "{err}");
    }

    #[test]
    fn default_shape_corpus() {
        let c = generate_corpus(&CorpusShape::default(), 7).unwrap();
        let st = corpus_stats(&c);
        assert_eq!(st.sentences, 64);
        assert_eq!((st.agents, st.verbs, st.poles), (38, 39, 46));
        assert_eq!(st.role_words(), 123);
        assert_eq!(st.multi_role.len(), 3);
        assert!(c.sentences().iter().all(|s| (3..=4).contains(&s.tokens.len())));
    }

    #[test]
    fn generation_is_deterministic_and_local() {
        let c = generate_corpus(&CorpusShape::default(), 3).unwrap();
        let mut truth = GeneratorTruth::new(9, 20, 0.0, 4);
        let a = generate_subject("s", &c, &truth).unwrap();
        let b = generate_subject("s", &c, &truth).unwrap();
        assert_eq!(a, b);

        truth.noise = 0.05;
        let w = c.sentence(5).unwrap().tokens[0].word_id;
        let base = generate_subject("s", &c, &truth).unwrap();
        truth.boosts.push(PlantedBoost {
            sentence_id: 5,
            word_id: w,
            attribute_id: 7,
            value: 0.4,
        });
        let boosted = generate_subject("s", &c, &truth).unwrap();
        for (id, img) in &base.sentence_images {
            if *id == 5 {
                assert_ne!(img, &boosted.sentence_images[id]);
            } else {
                assert_eq!(img, &boosted.sentence_images[id]);
            }
        }
    }

    #[test]
    fn planted_boosts_shape() {
        let c = generate_corpus(&CorpusShape::default(), 3).unwrap();
        let b = plant_boosts(&c, BoostTargets::OnePerSentence, 10, 0.3, 0.5, 1).unwrap();
        assert_eq!(b.len(), 640);
        assert!(b.iter().all(|b| (0.3..=0.5).contains(&b.value.abs())));
    }

    #[test]
    fn rejects_empty_voxel_dim() {
        let c = generate_corpus(&CorpusShape::default(), 3).unwrap();
        let truth = GeneratorTruth::new(1, 0, 0.0, 4);
        assert!(generate_subject("s", &c, &truth).is_err());
    }
}
