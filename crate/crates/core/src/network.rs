//! Sentence encoder and input adaptation.
//!
//! The encoder maps role-ordered word vectors of a sentence to that
//! sentence's image through one sigmoid hidden layer and a linear output
//! layer. After training, [`fgrep_contextualize`] freezes the weights and
//! runs gradient descent on the input word vectors alone, so each word
//! absorbs the part of the sentence image the static vectors cannot explain.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    CarVector, Corpus, RoleTag, SentenceId, SentenceSpec, SubjectDataset, WordId,
    ATTRIBUTE_COUNT,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    /// Input slots: Agent, Verb, then POLE words in token order.
    pub slot_count: usize,
    pub hidden_units: usize,
    pub learning_rate_train: f64,
    pub learning_rate_fgrep: f64,
    /// Largest adaptation rate for which per-sentence error is expected to
    /// be non-increasing on generator data.
    pub fgrep_stable_rate: f64,
    pub max_epochs_train: usize,
    pub max_steps_fgrep: usize,
    pub target_mse: f64,
    /// Adaptation stops once a step improves the error by less than this.
    pub fgrep_min_improvement: f64,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            slot_count: 6,
            hidden_units: 32,
            learning_rate_train: 5.0,
            learning_rate_fgrep: 2.0,
            fgrep_stable_rate: 2.0,
            max_epochs_train: 5000,
            max_steps_fgrep: 500,
            target_mse: 1e-4,
            fgrep_min_improvement: 1e-9,
            seed: 1,
        }
    }
}

impl NetworkConfig {
    pub fn input_dim(&self) -> usize {
        self.slot_count * ATTRIBUTE_COUNT
    }

    pub fn validate(&self) -> Result<()> {
        if self.slot_count < 3 {
            return Err(Error::Invalid("slot_count must be at least 3".into()));
        }
        if self.hidden_units < 1 {
            return Err(Error::Invalid("hidden_units must be at least 1".into()));
        }
        for (name, v) in [
            ("learning_rate_train", self.learning_rate_train),
            ("learning_rate_fgrep", self.learning_rate_fgrep),
            ("fgrep_stable_rate", self.fgrep_stable_rate),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Invalid(format!("{name} must be finite and non-negative")));
            }
        }
        if !(self.target_mse >= 0.0) {
            return Err(Error::Invalid("target_mse must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    /// input -> hidden, `input_dim x hidden`.
    pub w_hidden: Array2<f64>,
    pub b_hidden: Array1<f64>,
    /// hidden -> output, `hidden x voxel_dim`.
    pub w_output: Array2<f64>,
    pub b_output: Array1<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl NetworkWeights {
    pub fn zeros(input_dim: usize, hidden: usize, voxel_dim: usize) -> Self {
        Self {
            w_hidden: Array2::zeros((input_dim, hidden)),
            b_hidden: Array1::zeros(hidden),
            w_output: Array2::zeros((hidden, voxel_dim)),
            b_output: Array1::zeros(voxel_dim),
        }
    }

    /// Uniform fan-in scaled initialization drawn from `seed`.
    pub fn init(input_dim: usize, hidden: usize, voxel_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = 1.0 / (input_dim as f64).sqrt();
        let w_hidden = Array2::from_shape_fn((input_dim, hidden), |_| rng.random_range(-a..a));
        let a = 1.0 / (hidden as f64).sqrt();
        let w_output = Array2::from_shape_fn((hidden, voxel_dim), |_| rng.random_range(-a..a));
        Self {
            w_hidden,
            b_hidden: Array1::zeros(hidden),
            w_output,
            b_output: Array1::zeros(voxel_dim),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_hidden.nrows()
    }

    pub fn hidden_units(&self) -> usize {
        self.w_hidden.ncols()
    }

    pub fn voxel_dim(&self) -> usize {
        self.w_output.ncols()
    }

    fn is_finite(&self) -> bool {
        self.w_hidden.iter().all(|v| v.is_finite())
            && self.b_hidden.iter().all(|v| v.is_finite())
            && self.w_output.iter().all(|v| v.is_finite())
            && self.b_output.iter().all(|v| v.is_finite())
    }

    fn hidden(&self, input: ArrayView1<f64>) -> Array1<f64> {
        (input.dot(&self.w_hidden) + &self.b_hidden).mapv(sigmoid)
    }

    /// Sentence-image prediction for one assembled input vector.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: input.len(),
                context: "network input",
            });
        }
        let h = self.hidden(ArrayView1::from(input));
        let out = h.dot(&self.w_output) + &self.b_output;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(out.to_vec())
    }

    /// Mean squared error of one sentence and its gradient with respect to the input.
    pub fn input_gradient(&self, input: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
        if target.len() != self.voxel_dim() {
            return Err(Error::Dimension {
                expected: self.voxel_dim(),
                got: target.len(),
                context: "sentence image",
            });
        }
        if input.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: input.len(),
                context: "network input",
            });
        }
        let h = self.hidden(ArrayView1::from(input));
        let resid = h.dot(&self.w_output) + &self.b_output - ArrayView1::from(target);
        let v = target.len() as f64;
        let mse = resid.dot(&resid) / v;
        let d_hidden = self.w_output.dot(&resid) * (2.0 / v) * h.mapv(|a| a * (1.0 - a));
        let grad = self.w_hidden.dot(&d_hidden);
        Ok((mse, grad.to_vec()))
    }
}

/// Role-ordered, zero-padded input vector for one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotInput {
    pub values: Vec<f64>,
    /// Occupied slots.
    pub mask: Vec<bool>,
    /// Slot index of each sentence token, in token order.
    pub token_slots: Vec<usize>,
}

impl SlotInput {
    pub fn slot(&self, i: usize) -> &[f64] {
        &self.values[i * ATTRIBUTE_COUNT..(i + 1) * ATTRIBUTE_COUNT]
    }
}

/// Slot 0 holds the Agent, slot 1 the Verb, slots 2.. the POLE words in
/// token order. Absent roles and unused slots stay zero.
pub fn assemble_input(
    sentence: &SentenceSpec,
    corpus: &Corpus,
    config: &NetworkConfig,
) -> Result<SlotInput> {
    let k = config.slot_count;
    let mut values = vec![0.0; k * ATTRIBUTE_COUNT];
    let mut mask = vec![false; k];
    let mut token_slots = Vec::with_capacity(sentence.tokens.len());
    let mut next_pole = 2;
    for t in &sentence.tokens {
        let slot = match t.role {
            RoleTag::Agent => 0,
            RoleTag::Verb => 1,
            RoleTag::Pole => {
                let s = next_pole;
                next_pole += 1;
                s
            }
        };
        if slot >= k {
            return Err(Error::Invalid(format!(
                "sentence {} has more POLE words than the {} remaining slots",
                sentence.sentence_id,
                k - 2
            )));
        }
        let car = &corpus.word(t.word_id)?.car;
        values[slot * ATTRIBUTE_COUNT..(slot + 1) * ATTRIBUTE_COUNT]
            .copy_from_slice(car.as_slice());
        mask[slot] = true;
        token_slots.push(slot);
    }
    Ok(SlotInput {
        values,
        mask,
        token_slots,
    })
}

fn design_matrices(
    corpus: &Corpus,
    subject: &SubjectDataset,
    config: &NetworkConfig,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let n = corpus.sentences().len();
    let d = config.input_dim();
    let v = subject.voxel_dim;
    let mut x = Array2::zeros((n, d));
    let mut y = Array2::zeros((n, v));
    for (i, s) in corpus.sentences().iter().enumerate() {
        let input = assemble_input(s, corpus, config)?;
        x.row_mut(i).assign(&ArrayView1::from(&input.values[..]));
        let img = subject.image(s.sentence_id)?;
        y.row_mut(i).assign(&ArrayView1::from(img.as_slice()));
    }
    Ok((x, y))
}

/// Full-batch gradient descent on the mean squared error over every
/// sentence and voxel. Returns the weights and the per-epoch error.
pub fn train(
    corpus: &Corpus,
    subject: &SubjectDataset,
    config: &NetworkConfig,
) -> Result<(NetworkWeights, Vec<f64>)> {
    config.validate()?;
    subject.covers(corpus)?;
    let (x, y) = design_matrices(corpus, subject, config)?;
    let n = x.nrows();
    if n == 0 {
        return Err(Error::Invalid("corpus has no sentences".into()));
    }
    let mut w = NetworkWeights::init(
        config.input_dim(),
        config.hidden_units,
        subject.voxel_dim,
        config.seed,
    );
    let scale = 2.0 / (n * subject.voxel_dim) as f64;
    let lr = config.learning_rate_train;
    let mut history = Vec::with_capacity(config.max_epochs_train);

    for epoch in 0..config.max_epochs_train {
        let hidden = (x.dot(&w.w_hidden) + &w.b_hidden).mapv(sigmoid);
        let resid = hidden.dot(&w.w_output) + &w.b_output - &y;
        let mse = resid.iter().map(|r| r * r).sum::<f64>() / resid.len() as f64;
        if !mse.is_finite() {
            return Err(Error::TrainDiverged { epoch });
        }
        history.push(mse);
        if mse < config.target_mse {
            break;
        }

        let g_out = resid * scale;
        let g_w_output = hidden.t().dot(&g_out);
        let g_b_output = g_out.sum_axis(Axis(0));
        let g_hidden = g_out.dot(&w.w_output.t()) * hidden.mapv(|a| a * (1.0 - a));
        let g_w_hidden = x.t().dot(&g_hidden);
        let g_b_hidden = g_hidden.sum_axis(Axis(0));

        w.w_output.scaled_add(-lr, &g_w_output);
        w.b_output.scaled_add(-lr, &g_b_output);
        w.w_hidden.scaled_add(-lr, &g_w_hidden);
        w.b_hidden.scaled_add(-lr, &g_b_hidden);
        if !w.is_finite() {
            return Err(Error::TrainDiverged { epoch });
        }
    }
    Ok((w, history))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextualizedWord {
    pub sentence_id: SentenceId,
    pub word_id: WordId,
    pub role: RoleTag,
    pub new_car: CarVector,
    /// Final sentence mean squared error after adaptation.
    pub residual_error: f64,
}

/// Outcome of adapting one sentence's inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Adaptation {
    pub input: SlotInput,
    /// Sentence error before the first step and after every step taken.
    pub errors: Vec<f64>,
}

/// Projected gradient descent on the occupied input slots with frozen weights.
pub fn adapt_input(
    weights: &NetworkWeights,
    mut input: SlotInput,
    target: &[f64],
    config: &NetworkConfig,
    sentence_id: SentenceId,
) -> Result<Adaptation> {
    let lr = config.learning_rate_fgrep;
    let (mut err, mut grad) = weights.input_gradient(&input.values, target)?;
    let mut errors = vec![err];
    for step in 0..config.max_steps_fgrep {
        for (slot, _) in input.mask.iter().enumerate().filter(|(_, &m)| m) {
            let range = slot * ATTRIBUTE_COUNT..(slot + 1) * ATTRIBUTE_COUNT;
            for (x, g) in input.values[range.clone()].iter_mut().zip(&grad[range]) {
                *x = (*x - lr * g).clamp(0.0, 1.0);
            }
        }
        let (next_err, next_grad) = weights.input_gradient(&input.values, target)?;
        if !next_err.is_finite() {
            return Err(Error::FgrepDiverged {
                sentence: sentence_id,
                step,
            });
        }
        errors.push(next_err);
        let improvement = err - next_err;
        err = next_err;
        grad = next_grad;
        if improvement < config.fgrep_min_improvement {
            break;
        }
    }
    Ok(Adaptation { input, errors })
}

/// Adapts the word vectors of one sentence; the lexicon is not modified.
pub fn fgrep_contextualize(
    weights: &NetworkWeights,
    sentence: &SentenceSpec,
    corpus: &Corpus,
    subject: &SubjectDataset,
    config: &NetworkConfig,
) -> Result<Vec<ContextualizedWord>> {
    let input = assemble_input(sentence, corpus, config)?;
    let target = subject.image(sentence.sentence_id)?;
    let adapted = adapt_input(weights, input, target.as_slice(), config, sentence.sentence_id)?;
    let residual_error = *adapted.errors.last().expect("errors start non-empty");
    sentence
        .tokens
        .iter()
        .zip(&adapted.input.token_slots)
        .map(|(t, &slot)| {
            Ok(ContextualizedWord {
                sentence_id: sentence.sentence_id,
                word_id: t.word_id,
                role: t.role,
                new_car: CarVector::new(adapted.input.slot(slot).to_vec())?,
                residual_error,
            })
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct WeightsFile {
    config: NetworkConfig,
    seed: u64,
    input_dim: usize,
    hidden_units: usize,
    voxel_dim: usize,
    w_hidden: Vec<Vec<f64>>,
    b_hidden: Vec<f64>,
    w_output: Vec<Vec<f64>>,
    b_output: Vec<f64>,
}

fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_rows(rows: Vec<Vec<f64>>, shape: (usize, usize)) -> Result<Array2<f64>> {
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec(shape, flat)
        .map_err(|e| Error::Invalid(format!("weights matrix shape: {e}")))
}

/// JSON dump of the weights with the config echoed alongside.
pub fn write_weights(path: &Path, weights: &NetworkWeights, config: &NetworkConfig) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let dump = WeightsFile {
        config: config.clone(),
        seed: config.seed,
        input_dim: weights.input_dim(),
        hidden_units: weights.hidden_units(),
        voxel_dim: weights.voxel_dim(),
        w_hidden: to_rows(&weights.w_hidden),
        b_hidden: weights.b_hidden.to_vec(),
        w_output: to_rows(&weights.w_output),
        b_output: weights.b_output.to_vec(),
    };
    serde_json::to_writer(&mut w, &dump)?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_weights(path: &Path) -> Result<(NetworkWeights, NetworkConfig)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let dump: WeightsFile = serde_json::from_reader(BufReader::new(f))?;
    let weights = NetworkWeights {
        w_hidden: from_rows(dump.w_hidden, (dump.input_dim, dump.hidden_units))?,
        b_hidden: Array1::from(dump.b_hidden),
        w_output: from_rows(dump.w_output, (dump.hidden_units, dump.voxel_dim))?,
        b_output: Array1::from(dump.b_output),
    };
    if weights.b_hidden.len() != dump.hidden_units || weights.b_output.len() != dump.voxel_dim {
        return Err(Error::Invalid("bias length does not match weights".into()));
    }
    Ok((weights, dump.config))
}

pub fn write_loss_history(path: &Path, history: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "mse"])?;
    for (i, mse) in history.iter().enumerate() {
        w.write_record([i.to_string(), mse.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Token, WordEntry};
    use approx::assert_relative_eq;

    fn word(id: WordId, fill: f64) -> WordEntry {
        WordEntry {
            word_id: id,
            lemma: format!("w{id}"),
            car: CarVector::new(vec![fill; ATTRIBUTE_COUNT]).unwrap(),
        }
    }

    fn tok(word_id: WordId, role: RoleTag) -> Token {
        Token { word_id, role }
    }

    fn commander_corpus() -> Corpus {
        let lex = vec![word(1, 0.1), word(2, 0.2), word(3, 0.3), word(4, 0.4)];
        let s = SentenceSpec {
            sentence_id: 1,
            text: "The commander ate chicken at dinner".into(),
            tokens: vec![
                tok(1, RoleTag::Agent),
                tok(2, RoleTag::Verb),
                tok(3, RoleTag::Pole),
                tok(4, RoleTag::Pole),
            ],
        };
        let s2 = SentenceSpec {
            sentence_id: 2,
            text: "ate chicken dinner".into(),
            tokens: vec![tok(2, RoleTag::Verb), tok(3, RoleTag::Pole), tok(4, RoleTag::Pole)],
        };
        Corpus::new(vec![s, s2], lex).unwrap()
    }

    #[test]
    fn slot_layout() {
        let c = commander_corpus();
        let cfg = NetworkConfig {
            slot_count: 4,
            ..Default::default()
        };
        let inp = assemble_input(c.sentence(1).unwrap(), &c, &cfg).unwrap();
        assert_eq!(inp.mask, vec![true; 4]);
        assert_eq!(inp.slot(0)[0], 0.1);
        assert_eq!(inp.slot(1)[0], 0.2);
        assert_eq!(inp.slot(2)[0], 0.3);
        assert_eq!(inp.slot(3)[0], 0.4);

        let inp = assemble_input(c.sentence(2).unwrap(), &c, &cfg).unwrap();
        assert_eq!(inp.mask, vec![false, true, true, true]);
        assert!(inp.slot(0).iter().all(|&v| v == 0.0));
        assert_eq!(inp.token_slots, vec![1, 2, 3]);

        let cfg = NetworkConfig {
            slot_count: 3,
            ..Default::default()
        };
        assert!(assemble_input(c.sentence(1).unwrap(), &c, &cfg).is_err());
    }

    #[test]
    fn three_tokens_in_four_slots() {
        let c = commander_corpus();
        let cfg = NetworkConfig {
            slot_count: 5,
            ..Default::default()
        };
        let inp = assemble_input(c.sentence(2).unwrap(), &c, &cfg).unwrap();
        assert_eq!(inp.mask, vec![false, true, true, true, false]);
        assert!(inp.slot(4).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_network_outputs_zero() {
        let w = NetworkWeights::zeros(6, 3, 4);
        assert_eq!(w.forward(&[0.3; 6]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn one_unit_network_by_hand() {
        let mut w = NetworkWeights::zeros(1, 1, 1);
        w.w_hidden[[0, 0]] = 2.0;
        w.b_hidden[0] = -0.5;
        w.w_output[[0, 0]] = 3.0;
        w.b_output[0] = 0.25;
        // 3 * sigmoid(2 * 0.7 - 0.5) + 0.25
        let want = 3.0 / (1.0 + f64::exp(-0.9)) + 0.25;
        assert_relative_eq!(w.forward(&[0.7]).unwrap()[0], want, epsilon = 1e-15);
    }

    #[test]
    fn adaptation_with_zero_steps_is_identity() {
        let c = commander_corpus();
        let cfg = NetworkConfig {
            slot_count: 4,
            max_steps_fgrep: 0,
            ..Default::default()
        };
        let w = NetworkWeights::init(cfg.input_dim(), 4, 5, 3);
        let subject = SubjectDataset::new(
            "s",
            5,
            [(1, vec![0.5; 5]), (2, vec![-0.5; 5])]
                .into_iter()
                .map(|(k, v)| (k, crate::model::FmriVector::new(v).unwrap()))
                .collect(),
        )
        .unwrap();
        let out = fgrep_contextualize(&w, c.sentence(1).unwrap(), &c, &subject, &cfg).unwrap();
        for cw in out {
            assert_eq!(&cw.new_car, &c.word(cw.word_id).unwrap().car);
        }
    }

    #[test]
    fn weights_json_round_trip() {
        let cfg = NetworkConfig {
            slot_count: 3,
            ..Default::default()
        };
        let w = NetworkWeights::init(cfg.input_dim(), 5, 7, 11);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.json");
        write_weights(&p, &w, &cfg).unwrap();
        let (back, cfg_back) = read_weights(&p).unwrap();
        assert_eq!(back, w);
        assert_eq!(cfg_back, cfg);
    }
}
