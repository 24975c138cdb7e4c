use std::collections::BTreeMap;

use cerebra_core::ensemble::{significance_filter, ChangeRecord};
use cerebra_core::matching::{fit_boundary, matches_at, sweep_grid, Category};
use cerebra_core::measures::{
    measure_across_contexts, measure_rest_of_sentence, measure_whole_sentence, DeltaTable,
};
use cerebra_core::model::{
    corpus_stats, load_lexicon, write_lexicon, Corpus, FmriVector, SubjectDataset,
    ATTRIBUTE_COUNT,
};
use cerebra_core::survey::{pairwise_agreement, reliability_filter, ResponseRecord};
use cerebra_core::synthesis::{generate_corpus, synthesize_word, CorpusShape};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_corpus(seed: u64) -> Corpus {
    let shape = CorpusShape {
        sentences: 24,
        agents: 10,
        verbs: 12,
        poles: 14,
        dual_role: 2,
        ..CorpusShape::default()
    };
    generate_corpus(&shape, seed).unwrap()
}

fn random_deltas(corpus: &Corpus, seed: u64) -> DeltaTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut deltas = DeltaTable::new();
    for s in corpus.sentences() {
        for t in &s.tokens {
            let d = (0..ATTRIBUTE_COUNT).map(|_| rng.random_range(-1.0..1.0)).collect();
            deltas.insert(s.sentence_id, t.word_id, d);
        }
    }
    deltas
}

fn responses(answers: &[Vec<i8>], names: &[String]) -> Vec<ResponseRecord> {
    let mut out = Vec::new();
    for (r, row) in answers.iter().enumerate() {
        for (q, &a) in row.iter().enumerate() {
            out.push(ResponseRecord {
                rater_id: names[r].clone(),
                questionnaire_id: 1,
                question_id: q as u32 + 1,
                answer: a,
            });
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lexicon_round_trips(seed in 0u64..1000) {
        let corpus = small_corpus(seed);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lexicon.csv");
        write_lexicon(&path, corpus.lexicon()).unwrap();
        let once = load_lexicon(&path).unwrap();
        for (a, b) in once.iter().zip(corpus.lexicon()) {
            prop_assert_eq!((a.word_id, &a.lemma), (b.word_id, &b.lemma));
            for (x, y) in a.car.as_slice().iter().zip(b.car.as_slice()) {
                prop_assert!((x - y).abs() <= 5e-7);
            }
        }
        write_lexicon(&path, &once).unwrap();
        prop_assert_eq!(load_lexicon(&path).unwrap(), once);
    }

    #[test]
    fn corpus_stats_match_a_recount(seed in 0u64..1000) {
        let corpus = small_corpus(seed);
        let stats = corpus_stats(&corpus);
        let tokens: usize = corpus.sentences().iter().map(|s| s.tokens.len()).sum();
        let mut by_role: BTreeMap<String, std::collections::BTreeSet<u32>> = BTreeMap::new();
        for s in corpus.sentences() {
            for t in &s.tokens {
                by_role.entry(t.role.to_string()).or_default().insert(t.word_id);
            }
        }
        let distinct: std::collections::BTreeSet<u32> = by_role.values().flatten().copied().collect();
        prop_assert_eq!(stats.tokens, tokens);
        prop_assert_eq!(stats.sentences, corpus.sentences().len());
        prop_assert_eq!(stats.unique_words, distinct.len());
        prop_assert_eq!(stats.agents, by_role.get("Agent").map_or(0, |s| s.len()));
        prop_assert_eq!(stats.verbs, by_role.get("Verb").map_or(0, |s| s.len()));
        prop_assert_eq!(stats.poles, by_role.get("POLE").map_or(0, |s| s.len()));
    }

    #[test]
    fn synthesized_words_ignore_sentence_order_and_stay_in_range(seed in 0u64..1000) {
        let corpus = small_corpus(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let images: BTreeMap<u32, FmriVector> = corpus
            .sentences()
            .iter()
            .map(|s| (s.sentence_id, FmriVector::new((0..7).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()))
            .collect();
        let subject = SubjectDataset::new("S", 7, images.clone()).unwrap();
        let mut shuffled = corpus.sentences().to_vec();
        shuffled.shuffle(&mut rng);
        let permuted = Corpus::new(shuffled, corpus.lexicon().to_vec()).unwrap();
        for w in corpus.lexicon() {
            let Ok((a, support)) = synthesize_word(w.word_id, &subject, &corpus) else { continue };
            let (b, _) = synthesize_word(w.word_id, &subject, &permuted).unwrap();
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
            for (v, value) in a.as_slice().iter().enumerate() {
                let column = support.iter().map(|s| images[s].as_slice()[v]);
                let lo = column.clone().fold(f64::INFINITY, f64::min);
                let hi = column.fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(lo - 1e-12 <= *value && *value <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn whole_sentence_measure_scales_rest_of_sentence(seed in 0u64..1000) {
        let corpus = small_corpus(seed);
        let deltas = random_deltas(&corpus, seed);
        for s in corpus.sentences() {
            let n = s.tokens.len() as f64;
            for t in &s.tokens {
                let m1 = measure_rest_of_sentence(&deltas, s, t.word_id).unwrap();
                let m2 = measure_whole_sentence(&deltas, s, t.word_id).unwrap();
                for (a, b) in m1.iter().zip(&m2) {
                    prop_assert!((b - (n - 1.0) / n * a).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn across_context_measure_sums_to_zero(seed in 0u64..1000) {
        let corpus = small_corpus(seed);
        let deltas = random_deltas(&corpus, seed);
        for w in corpus.lexicon() {
            let mut sum = vec![0.0; ATTRIBUTE_COUNT];
            for s in corpus.contexts_of(w.word_id) {
                let m = measure_across_contexts(&deltas, &corpus, w.word_id, s).unwrap();
                sum.iter_mut().zip(m).for_each(|(a, v)| *a += v);
            }
            prop_assert!(sum.iter().all(|v| v.abs() <= 1e-12));
        }
    }

    #[test]
    fn significance_grows_with_alpha(
        samples in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3..8), 1..30),
        a in 0.001f64..0.5,
        b in 0.001f64..0.5,
    ) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let records: Vec<ChangeRecord> = samples
            .iter()
            .enumerate()
            .map(|(i, xs)| ChangeRecord {
                subject_id: "S".into(),
                sentence_id: 1,
                word_id: i as u32 + 1,
                attribute_id: 1,
                delta_mean: xs.iter().sum::<f64>() / xs.len() as f64,
                delta_per_run: xs.clone(),
                significant: false,
                p_value: 1.0,
            })
            .collect();
        let strict = significance_filter(records.clone(), lo);
        let loose = significance_filter(records, hi);
        for (s, l) in strict.iter().zip(&loose) {
            prop_assert!(!s.significant || l.significant);
        }
    }

    #[test]
    fn fitted_boundary_is_optimal_on_the_grid(
        points in prop::collection::vec((-1.1f64..1.1, any::<bool>()), 1..40),
    ) {
        let measures: Vec<f64> = points.iter().map(|p| (p.0 * 100.0).round() / 100.0).collect();
        let labels: Vec<Category> = points
            .iter()
            .map(|p| if p.1 { Category::More } else { Category::Other })
            .collect();
        let fit = fit_boundary(&measures, &labels, 0.01).unwrap();
        for b in sweep_grid(0.01).unwrap() {
            let (o, m) = matches_at(&measures, &labels, b);
            prop_assert!(o + m <= fit.matches);
        }
    }

    #[test]
    fn reliability_ignores_rater_order(
        answers in prop::collection::vec(prop::collection::vec(-1i8..=1, 12), 4),
        seed in any::<u64>(),
    ) {
        let names: Vec<String> = (1..=4).map(|i| format!("P{i}")).collect();
        let base = reliability_filter(&responses(&answers, &names), 3, 4).unwrap();
        let mut order: Vec<usize> = (0..4).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let permuted: Vec<Vec<i8>> = order.iter().map(|&i| answers[i].clone()).collect();
        let renamed: Vec<String> = order.iter().map(|&i| names[i].clone()).collect();
        let other = reliability_filter(&responses(&permuted, &renamed), 3, 4).unwrap();
        let labels = |set: &cerebra_core::survey::ConsensusSet| -> Vec<Option<i8>> {
            set.entries.iter().map(|e| e.label).collect()
        };
        prop_assert_eq!(labels(&base), labels(&other));
    }

    #[test]
    fn agreement_is_symmetric(
        answers in prop::collection::vec(prop::collection::vec(-1i8..=1, 20), 2..6),
    ) {
        let names: Vec<String> = (1..=answers.len()).map(|i| format!("P{i}")).collect();
        let m = pairwise_agreement(&responses(&answers, &names)).unwrap();
        for i in 0..answers.len() {
            prop_assert_eq!(m.matches[i][i], 0);
            for j in 0..answers.len() {
                prop_assert_eq!(m.matches[i][j], m.matches[j][i]);
            }
        }
    }
}
