use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use cerebra_core::ensemble::{
    attribute_changes, contextualize_all, read_changes, read_run, significance_filter,
    write_changes, write_run, ChangeRecord, EnsembleResult, RunRecord,
};
use cerebra_core::matching::{
    evaluate_subject, fit_boundary, Category, Report, SubjectEvaluation, SubjectFit,
};
use cerebra_core::measures::{
    measure, measure_corpus, read_measures, write_measures, Approach, DeltaTable,
};
use cerebra_core::model::{
    corpus_stats, load_corpus, load_lexicon, write_corpus, write_lexicon, AttributeCatalog,
    AttributeId, Corpus, SentenceId, SubjectDataset, WordId,
};
use cerebra_core::network::{read_weights, train, write_loss_history, write_weights, NetworkConfig};
use cerebra_core::survey::{
    fill_slots, generate_questionnaires, ingest_responses, pairwise_agreement, question_index,
    read_consensus, read_stimuli, read_survey, reliability_filter, response_distribution,
    select_stimuli, simulate_responses, write_consensus, write_responses, write_stimuli,
    write_survey, ConsensusSet, Question, ATTRIBUTES_PER_SENTENCE,
};
use cerebra_core::synthesis::{
    generate_corpus, generate_subject, plant_boosts, synthesize_all, GeneratorTruth,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::{InvariantFailure, MissingArtifact, Stage};

pub struct Context {
    pub cfg: PipelineConfig,
    subject: Option<String>,
}

// Offsets from the config seed for the independent random streams.
const BOOST_SEED: u64 = 1;
const SURVEY_SEED: u64 = 2;
const RATER_SEED: u64 = 3;
const CHANCE_SEED: u64 = 100;

impl Context {
    pub fn new(cfg: PipelineConfig, subject: Option<String>) -> Self {
        Self { cfg, subject }
    }

    fn need(&self, stage: Stage, path: PathBuf) -> Result<PathBuf> {
        if path.exists() {
            Ok(path)
        } else {
            Err(MissingArtifact { stage, path }.into())
        }
    }

    fn corpus(&self, stage: Stage) -> Result<Corpus> {
        let lexicon = load_lexicon(&self.need(stage, self.cfg.lexicon_path())?)?;
        Ok(load_corpus(&self.need(stage, self.cfg.corpus_path())?, lexicon)?)
    }

    fn catalog(&self, stage: Stage) -> Result<AttributeCatalog> {
        Ok(AttributeCatalog::load(&self.need(stage, self.cfg.catalog_path())?)?)
    }

    /// Subject ids from the image directory, shortest name first so `S2`
    /// sorts before `S10`.
    fn subjects(&self, stage: Stage) -> Result<Vec<String>> {
        let dir = self.need(stage, self.cfg.fmri_dir())?;
        let mut ids = Vec::new();
        for entry in fs::read_dir(&dir).with_context(|| format!("listing {}", dir.display()))? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "csv") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_string());
                }
            }
        }
        ids.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        if let Some(only) = &self.subject {
            if !ids.contains(only) {
                return Err(MissingArtifact {
                    stage,
                    path: dir.join(format!("{only}.csv")),
                }
                .into());
            }
            ids.retain(|s| s == only);
        }
        if ids.is_empty() {
            return Err(MissingArtifact {
                stage,
                path: dir.join("*.csv"),
            }
            .into());
        }
        Ok(ids)
    }

    fn subject_data(&self, stage: Stage, id: &str) -> Result<SubjectDataset> {
        let path = self.need(stage, self.cfg.fmri_dir().join(format!("{id}.csv")))?;
        Ok(SubjectDataset::load(&path, id)?)
    }

    fn run_seeds(&self) -> Vec<u64> {
        (0..self.cfg.repetitions as u64).map(|i| self.cfg.network.seed + i).collect()
    }

    fn network(&self, seed: u64) -> NetworkConfig {
        NetworkConfig {
            seed,
            ..self.cfg.network.clone()
        }
    }

    fn weights_path(&self, subject: &str, seed: u64) -> PathBuf {
        self.cfg.out("weights").join(subject).join(format!("seed_{seed}.json"))
    }

    fn run_path(&self, subject: &str, run: usize) -> PathBuf {
        self.cfg.out("runs").join(subject).join(format!("run_{run:02}.csv"))
    }

    fn approach(&self) -> Approach {
        self.cfg.approach
    }
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

pub fn gen_data(ctx: &Context) -> Result<()> {
    let cfg = &ctx.cfg;
    let g = &cfg.generator;
    mkdir(&cfg.out("fmri"))?;
    mkdir(&cfg.out("truth"))?;
    let corpus = generate_corpus(&cfg.corpus, cfg.seed)?;
    write_lexicon(&cfg.out("lexicon.csv"), corpus.lexicon())?;
    write_corpus(&cfg.out("corpus.jsonl"), &corpus)?;
    AttributeCatalog::placeholder().write(&cfg.out("catalog.csv"))?;
    let boosts = plant_boosts(
        &corpus,
        g.boost_targets,
        g.boosts_per_target,
        g.boost_min,
        g.boost_max,
        cfg.seed + BOOST_SEED,
    )?;
    for i in 1..=cfg.subjects {
        let id = format!("S{i}");
        let mut truth = GeneratorTruth::new(
            cfg.seed.wrapping_mul(1000) + i as u64,
            g.voxel_dim,
            g.noise,
            cfg.network.slot_count,
        );
        truth.latent_dim = g.latent_dim;
        truth.nonlinear = g.nonlinear;
        truth.boosts = boosts.clone();
        let subject = generate_subject(&id, &corpus, &truth)?;
        subject.write(&cfg.out("fmri").join(format!("{id}.csv")))?;
        truth.write(&cfg.out("truth").join(format!("{id}.json")))?;
    }
    let stats = corpus_stats(&corpus);
    println!(
        "gen-data: {} sentences, {} role words ({} Agent, {} Verb, {} POLE), {} subjects -> {}",
        stats.sentences,
        stats.role_words(),
        stats.agents,
        stats.verbs,
        stats.poles,
        cfg.subjects,
        cfg.out_dir.display()
    );
    Ok(())
}

pub fn run_stage(ctx: &Context, stage: Stage) -> Result<()> {
    match stage {
        Stage::Synth => synth(ctx),
        Stage::Train => train_stage(ctx),
        Stage::Contextualize => contextualize(ctx),
        Stage::Analyze => analyze(ctx),
        Stage::Measures => measures(ctx),
        Stage::SurveyGen => survey_gen(ctx),
        Stage::Ingest => ingest(ctx),
        Stage::Fit => fit(ctx),
        Stage::Report => report(ctx),
        Stage::All => {
            let have_inputs = [ctx.cfg.lexicon_path(), ctx.cfg.corpus_path(), ctx.cfg.fmri_dir()]
                .iter()
                .all(|p| p.exists());
            if !have_inputs {
                gen_data(ctx)?;
            }
            for s in [
                Stage::Synth,
                Stage::Train,
                Stage::Contextualize,
                Stage::Analyze,
                Stage::Measures,
                Stage::SurveyGen,
                Stage::Ingest,
                Stage::Fit,
                Stage::Report,
            ] {
                run_stage(ctx, s).with_context(|| format!("stage {s}"))?;
            }
            Ok(())
        }
    }
}

fn synth(ctx: &Context) -> Result<()> {
    let stage = Stage::Synth;
    let corpus = ctx.corpus(stage)?;
    mkdir(&ctx.cfg.out("synth"))?;
    for id in ctx.subjects(stage)? {
        let set = synthesize_all(&ctx.subject_data(stage, &id)?, &corpus)?;
        set.write(&ctx.cfg.out("synth").join(format!("{id}.csv")))?;
    }
    println!("synth: wrote {} word images per subject", corpus_stats(&corpus).unique_words);
    Ok(())
}

fn train_stage(ctx: &Context) -> Result<()> {
    let stage = Stage::Train;
    let corpus = ctx.corpus(stage)?;
    for id in ctx.subjects(stage)? {
        let subject = ctx.subject_data(stage, &id)?;
        mkdir(&ctx.cfg.out("weights").join(&id))?;
        mkdir(&ctx.cfg.out("loss").join(&id))?;
        let finals = ctx
            .run_seeds()
            .into_par_iter()
            .map(|seed| -> Result<f64> {
                let cfg = ctx.network(seed);
                let (weights, history) = train(&corpus, &subject, &cfg)?;
                write_weights(&ctx.weights_path(&id, seed), &weights, &cfg)?;
                write_loss_history(&ctx.cfg.out("loss").join(&id).join(format!("seed_{seed}.csv")), &history)?;
                Ok(history.last().copied().unwrap_or(f64::NAN))
            })
            .collect::<Result<Vec<_>>>()?;
        let worst = finals.iter().copied().fold(0.0, f64::max);
        println!("train: {id}: {} networks, worst final mse {worst:.3e}", finals.len());
    }
    Ok(())
}

fn contextualize(ctx: &Context) -> Result<()> {
    let stage = Stage::Contextualize;
    let corpus = ctx.corpus(stage)?;
    for id in ctx.subjects(stage)? {
        let subject = ctx.subject_data(stage, &id)?;
        mkdir(&ctx.cfg.out("runs").join(&id))?;
        for (i, seed) in ctx.run_seeds().into_iter().enumerate() {
            let (weights, _) = read_weights(&ctx.need(stage, ctx.weights_path(&id, seed))?)?;
            let words = contextualize_all(&weights, &corpus, &subject, &ctx.network(seed))?;
            write_run(&ctx.run_path(&id, i + 1), &RunRecord { seed, words })?;
        }
        println!("contextualize: {id}: {} runs", ctx.cfg.repetitions);
    }
    Ok(())
}

fn read_runs(ctx: &Context, stage: Stage, id: &str) -> Result<Vec<RunRecord>> {
    (1..=ctx.cfg.repetitions)
        .map(|r| Ok(read_run(&ctx.need(stage, ctx.run_path(id, r))?)?))
        .collect()
}

fn analyze(ctx: &Context) -> Result<()> {
    let stage = Stage::Analyze;
    let corpus = ctx.corpus(stage)?;
    let mut all = Vec::new();
    for id in ctx.subjects(stage)? {
        let ensemble = EnsembleResult::from_runs(&id, read_runs(ctx, stage, &id)?)?;
        let changes = significance_filter(attribute_changes(&ensemble, &corpus)?, ctx.cfg.alpha);
        let sig = changes.iter().filter(|c| c.significant).count();
        println!("analyze: {id}: {sig} of {} attribute changes significant", changes.len());
        all.extend(changes);
    }
    write_changes(&ctx.cfg.out("changes.csv"), &all)?;
    Ok(())
}

fn changes_by_subject(ctx: &Context, stage: Stage) -> Result<BTreeMap<String, Vec<ChangeRecord>>> {
    let mut by: BTreeMap<String, Vec<ChangeRecord>> = BTreeMap::new();
    for c in read_changes(&ctx.need(stage, ctx.cfg.out("changes.csv"))?)? {
        by.entry(c.subject_id.clone()).or_default().push(c);
    }
    Ok(by)
}

fn measures(ctx: &Context) -> Result<()> {
    let stage = Stage::Measures;
    let corpus = ctx.corpus(stage)?;
    let by = changes_by_subject(ctx, stage)?;
    let mut out = Vec::new();
    for id in ctx.subjects(stage)? {
        let changes = by.get(&id).ok_or_else(|| MissingArtifact {
            stage,
            path: ctx.cfg.out("changes.csv"),
        })?;
        let deltas = DeltaTable::from_changes(changes);
        for approach in [Approach::RestOfSentence, Approach::WholeSentence, Approach::AcrossContexts] {
            out.extend(measure_corpus(&id, approach, &deltas, &corpus)?);
        }
    }
    write_measures(&ctx.cfg.out("measures.csv"), &out)?;
    println!("measures: {} vectors", out.len());
    Ok(())
}

fn survey_gen(ctx: &Context) -> Result<()> {
    let stage = Stage::SurveyGen;
    let corpus = ctx.corpus(stage)?;
    let catalog = ctx.catalog(stage)?;
    let reference = ctx.subjects(stage)?.remove(0);
    let changes = changes_by_subject(ctx, stage)?.remove(&reference).unwrap_or_default();
    let stimuli = match &ctx.cfg.paths.stimuli {
        Some(p) => read_stimuli(&ctx.need(stage, p.clone())?)?,
        None => {
            let mut s = select_stimuli(&changes, &corpus, ctx.cfg.min_ssa);
            fill_slots(&mut s, ctx.cfg.total_slots);
            s
        }
    };
    if stimuli.iter().all(|s| s.multiplicity == 0) {
        return Err(InvariantFailure(format!(
            "no target in subject {reference} has {} significant changes",
            ctx.cfg.min_ssa
        ))
        .into());
    }
    write_stimuli(&ctx.cfg.out("stimuli.csv"), &stimuli)?;
    let qs = generate_questionnaires(
        &stimuli,
        &changes,
        &catalog,
        ctx.cfg.per_questionnaire,
        ctx.cfg.seed + SURVEY_SEED,
    )?;
    let per_q = ctx.cfg.per_questionnaire;
    if let Some(bad) = qs
        .iter()
        .find(|q| q.sentences.len() != per_q || q.questions.len() != per_q * ATTRIBUTES_PER_SENTENCE)
    {
        return Err(InvariantFailure(format!("questionnaire {} has the wrong size", bad.questionnaire_id)).into());
    }
    write_survey(&ctx.cfg.out("questionnaires.json"), &qs, &corpus, &catalog)?;
    println!(
        "survey-gen: {} stimuli from {reference}, {} questionnaires, {} questions",
        stimuli.len(),
        qs.len(),
        qs.len() * per_q * ATTRIBUTES_PER_SENTENCE
    );
    Ok(())
}

fn questions(ctx: &Context, stage: Stage) -> Result<BTreeMap<u32, Question>> {
    let qs = read_survey(&ctx.need(stage, ctx.cfg.out("questionnaires.json"))?)?;
    Ok(question_index(&qs))
}

fn ingest(ctx: &Context) -> Result<()> {
    let stage = Stage::Ingest;
    let questions = questions(ctx, stage)?;
    let records = match &ctx.cfg.paths.responses {
        Some(p) => ingest_responses(&ctx.need(stage, p.clone())?, &questions)?,
        None => {
            let reference = ctx.subjects(stage)?.remove(0);
            let truth = GeneratorTruth::read(&ctx.need(stage, ctx.cfg.out("truth").join(format!("{reference}.json")))?)?;
            let boosts = truth.boost_map();
            let answers: BTreeMap<u32, i8> = questions
                .values()
                .map(|q| {
                    let b = boosts.get(&(q.sentence_id, q.word_id, q.attribute_id)).copied().unwrap_or(0.0);
                    let answer = if b > 0.0 {
                        1
                    } else if b < 0.0 {
                        -1
                    } else {
                        0
                    };
                    (q.question_id, answer)
                })
                .collect();
            let raters: Vec<String> = (1..=ctx.cfg.raters).map(|i| format!("P{i}")).collect();
            simulate_responses(&questions, &answers, &raters, ctx.cfg.rater_accuracy, ctx.cfg.seed + RATER_SEED)?
        }
    };
    write_responses(&ctx.cfg.out("responses.csv"), &records)?;
    let consensus = reliability_filter(&records, ctx.cfg.consensus_k, ctx.cfg.raters)?;
    write_consensus(&ctx.cfg.out("consensus.csv"), &consensus)?;
    println!(
        "ingest: {} responses, {} of {} questions reliable",
        records.len(),
        consensus.reliable_count(),
        consensus.entries.len()
    );
    Ok(())
}

type QuestionKey = (SentenceId, WordId, AttributeId);

/// Reliable questions as (sentence, word, attribute) keys with merged labels.
fn reliable_questions(
    consensus: &ConsensusSet,
    questions: &BTreeMap<u32, Question>,
) -> Result<(Vec<QuestionKey>, Vec<Category>)> {
    let mut keys = Vec::new();
    let mut labels = Vec::new();
    for e in consensus.reliable() {
        let q = questions
            .get(&e.question_id)
            .ok_or_else(|| InvariantFailure(format!("consensus names unknown question {}", e.question_id)))?;
        keys.push((q.sentence_id, q.word_id, q.attribute_id));
        labels.push(Category::from_answer(e.label.expect("reliable entries carry a label")));
    }
    Ok((keys, labels))
}

#[derive(Serialize, Deserialize)]
struct EvaluationFile {
    approach: Approach,
    evaluations: Vec<SubjectEvaluation>,
    mean_fits: Vec<SubjectFit>,
}

fn fit(ctx: &Context) -> Result<()> {
    let stage = Stage::Fit;
    let measure_index = read_measures(&ctx.need(stage, ctx.cfg.out("measures.csv"))?)?;
    let corpus = ctx.corpus(stage)?;
    let questions = questions(ctx, stage)?;
    let consensus = read_consensus(
        &ctx.need(stage, ctx.cfg.out("consensus.csv"))?,
        ctx.cfg.consensus_k,
        ctx.cfg.raters,
    )?;
    let (keys, labels) = reliable_questions(&consensus, &questions)?;
    let approach = ctx.approach();
    let mut evaluations = Vec::new();
    let mut mean_fits = Vec::new();
    for (i, id) in ctx.subjects(stage)?.into_iter().enumerate() {
        let mean_values = keys
            .iter()
            .map(|&(s, w, a)| {
                measure_index.get(&(id.clone(), approach, s, w, a)).copied().ok_or_else(|| {
                    InvariantFailure(format!("no measure for subject {id}, sentence {s}, word {w}, attribute {a}"))
                })
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        mean_fits.push(SubjectFit {
            subject_id: id.clone(),
            fit: fit_boundary(&mean_values, &labels, ctx.cfg.sweep_step)?,
        });
        let per_run = read_runs(ctx, stage, &id)?
            .iter()
            .map(|run| -> Result<Vec<f64>> {
                let deltas = DeltaTable::from_run(run, &corpus)?;
                let mut cache: HashMap<(SentenceId, WordId), Vec<f64>> = HashMap::new();
                keys.iter()
                    .map(|&(s, w, a)| {
                        if !cache.contains_key(&(s, w)) {
                            let v = measure(approach, &deltas, &corpus, corpus.sentence(s)?, w)?;
                            cache.insert((s, w), v);
                        }
                        Ok(cache[&(s, w)][a as usize - 1])
                    })
                    .collect()
            })
            .collect::<Result<Vec<_>>>()?;
        let chance_seed = ctx
            .cfg
            .chance
            .then(|| ctx.cfg.seed + CHANCE_SEED + 1000 * i as u64);
        evaluations.push(evaluate_subject(&id, &per_run, &labels, chance_seed, ctx.cfg.sweep_step)?);
    }
    let mut w = csv::Writer::from_path(ctx.cfg.out("fits.csv"))?;
    w.write_record(["subject", "model", "run", "boundary", "matches", "total", "matched_other", "matched_more"])?;
    for e in &evaluations {
        for r in &e.runs {
            let model = serde_json::to_value(r.model)?;
            w.write_record([
                r.subject_id.clone(),
                model.as_str().unwrap_or_default().to_string(),
                r.run.to_string(),
                format!("{:.3}", r.fit.boundary),
                r.fit.matches.to_string(),
                r.fit.total.to_string(),
                r.fit.matched_other.to_string(),
                r.fit.matched_more.to_string(),
            ])?;
        }
    }
    w.flush()?;
    let file = EvaluationFile {
        approach,
        evaluations,
        mean_fits,
    };
    let text = serde_json::to_string_pretty(&file)?;
    fs::write(ctx.cfg.out("evaluation.json"), text + "\n")?;
    println!("fit: {} reliable questions, {} subjects", labels.len(), file.evaluations.len());
    Ok(())
}

fn report(ctx: &Context) -> Result<()> {
    let stage = Stage::Report;
    let text = fs::read_to_string(ctx.need(stage, ctx.cfg.out("evaluation.json"))?)?;
    let eval: EvaluationFile = serde_json::from_str(&text)?;
    let questions = questions(ctx, stage)?;
    let records = ingest_responses(&ctx.need(stage, ctx.cfg.out("responses.csv"))?, &questions)?;
    let consensus = read_consensus(
        &ctx.need(stage, ctx.cfg.out("consensus.csv"))?,
        ctx.cfg.consensus_k,
        ctx.cfg.raters,
    )?;
    let (_, labels) = reliable_questions(&consensus, &questions)?;
    let report = Report::build(
        eval.approach,
        consensus.entries.len(),
        &labels,
        response_distribution(&records),
        pairwise_agreement(&records)?,
        &eval.evaluations,
        eval.mean_fits,
    )
    .map_err(|e| InvariantFailure(e.to_string()))?;
    let json_path = ctx.cfg.out("report.json");
    report.write_json(&json_path)?;
    Report::read_json(&json_path).map_err(|e| InvariantFailure(format!("report.json does not read back: {e}")))?;
    let text = report.render_text();
    fs::write(ctx.cfg.out("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}
