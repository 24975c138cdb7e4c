//! Single-boundary fits of measures to consensus labels, the chance
//! baseline, and the summary report.
//!
//! Labels are merged to two categories before fitting: "more" against
//! "less or neutral".

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::Approach;
use crate::stats::{mean, sample_variance, t_test_welch};
use crate::survey::{AgreementMatrix, ResponseDistribution};

pub const DEFAULT_SWEEP_STEP: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    /// "less" and "neutral" merged.
    #[serde(rename = "-1/0")]
    Other,
    #[serde(rename = "1")]
    More,
}

impl Category {
    pub fn from_answer(answer: i8) -> Self {
        if answer > 0 {
            Category::More
        } else {
            Category::Other
        }
    }
}

/// "More" strictly above the boundary.
pub fn binarize(value: f64, boundary: f64) -> Category {
    if value > boundary {
        Category::More
    } else {
        Category::Other
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFit {
    pub boundary: f64,
    pub matches: usize,
    pub total: usize,
    pub matched_other: usize,
    pub matched_more: usize,
}

impl BoundaryFit {
    pub fn agreement(&self) -> f64 {
        self.matches as f64 / self.total as f64
    }
}

/// Boundaries `-1, -1 + step, ..., 1`, each computed as `(2i - n) / n` so grid
/// points are exact decimal neighbours.
pub fn sweep_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 2.0) {
        return Err(Error::Invalid(format!("sweep step must be in (0, 2], got {step}")));
    }
    let n = (2.0 / step).round() as i64;
    Ok((0..=n).map(|i| (2 * i - n) as f64 / n as f64).collect())
}

/// Matches per category at one boundary.
pub fn matches_at(measures: &[f64], labels: &[Category], boundary: f64) -> (usize, usize) {
    let mut other = 0;
    let mut more = 0;
    for (&v, &l) in measures.iter().zip(labels) {
        match (binarize(v, boundary), l) {
            (Category::Other, Category::Other) => other += 1,
            (Category::More, Category::More) => more += 1,
            _ => {}
        }
    }
    (other, more)
}

/// Grid boundary with the most matches; ties go to the smallest boundary.
pub fn fit_boundary(measures: &[f64], labels: &[Category], step: f64) -> Result<BoundaryFit> {
    if measures.is_empty() {
        return Err(Error::Invalid("boundary fit needs at least one question".into()));
    }
    if measures.len() != labels.len() {
        return Err(Error::Dimension {
            expected: labels.len(),
            got: measures.len(),
            context: "measures vs labels",
        });
    }
    let mut pairs: Vec<(f64, Category)> = measures.iter().copied().zip(labels.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // prefix counts of each label among values <= boundary
    let mut other_le = vec![0usize; pairs.len() + 1];
    let mut more_le = vec![0usize; pairs.len() + 1];
    for (i, (_, l)) in pairs.iter().enumerate() {
        other_le[i + 1] = other_le[i] + usize::from(*l == Category::Other);
        more_le[i + 1] = more_le[i] + usize::from(*l == Category::More);
    }
    let total_more = more_le[pairs.len()];
    let mut best: Option<BoundaryFit> = None;
    for b in sweep_grid(step)? {
        let k = pairs.partition_point(|(v, _)| *v <= b);
        let matched_other = other_le[k];
        let matched_more = total_more - more_le[k];
        let matches = matched_other + matched_more;
        if best.is_none_or(|f| matches > f.matches) {
            best = Some(BoundaryFit {
                boundary: b,
                matches,
                total: pairs.len(),
                matched_other,
                matched_more,
            });
        }
    }
    Ok(best.expect("grid is never empty"))
}

/// Uniform pseudo-measures on `[min, max]`.
pub fn chance_model(min: f64, max: f64, count: usize, seed: u64) -> Result<Vec<f64>> {
    if !(min.is_finite() && max.is_finite() && max > min) {
        return Err(Error::DegenerateRange { min, max });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|_| rng.random_range(min..=max)).collect())
}

/// Welch two-sample p-value.
pub fn t_test_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Invalid("two-sample t-test needs at least two values per sample".into()));
    }
    Ok(t_test_welch(a, b).p_value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Cerebra,
    Chance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRun {
    pub model: Model,
    pub subject_id: String,
    /// 1-based.
    pub run: usize,
    pub fit: BoundaryFit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchStats {
    pub mean: f64,
    pub variance: f64,
}

impl MatchStats {
    fn of(runs: &[EvaluationRun]) -> Self {
        let m: Vec<f64> = runs.iter().map(|r| r.fit.matches as f64).collect();
        MatchStats {
            mean: mean(&m),
            variance: sample_variance(&m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectComparison {
    pub subject_id: String,
    pub cerebra: MatchStats,
    /// Absent when the chance baseline was not run.
    pub chance: Option<MatchStats>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectEvaluation {
    pub runs: Vec<EvaluationRun>,
    pub comparison: SubjectComparison,
}

/// Fits each per-run measure set independently and, with `chance_seed`, as
/// many chance runs over the range of the supplied measures. Chance run `r`
/// uses seed `chance_seed + r`.
pub fn evaluate_subject(
    subject_id: &str,
    cerebra_runs: &[Vec<f64>],
    labels: &[Category],
    chance_seed: Option<u64>,
    step: f64,
) -> Result<SubjectEvaluation> {
    if cerebra_runs.len() < 2 {
        return Err(Error::Invalid(format!(
            "subject {subject_id}: evaluation needs at least two runs, got {}",
            cerebra_runs.len()
        )));
    }
    let fit_all = |model: Model, sets: &[Vec<f64>]| -> Result<Vec<EvaluationRun>> {
        sets.par_iter()
            .enumerate()
            .map(|(i, m)| {
                Ok(EvaluationRun {
                    model,
                    subject_id: subject_id.to_string(),
                    run: i + 1,
                    fit: fit_boundary(m, labels, step)?,
                })
            })
            .collect()
    };
    let mut runs = fit_all(Model::Cerebra, cerebra_runs)?;
    let cerebra = MatchStats::of(&runs);
    let (chance, p_value) = match chance_seed {
        None => (None, None),
        Some(seed) => {
            let (lo, hi) = cerebra_runs
                .iter()
                .flatten()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            let sets = (0..cerebra_runs.len())
                .map(|r| chance_model(lo, hi, labels.len(), seed + r as u64))
                .collect::<Result<Vec<_>>>()?;
            let chance_runs = fit_all(Model::Chance, &sets)?;
            let a: Vec<f64> = runs.iter().map(|r| r.fit.matches as f64).collect();
            let b: Vec<f64> = chance_runs.iter().map(|r| r.fit.matches as f64).collect();
            let p = t_test_two_sample(&a, &b)?;
            let stats = MatchStats::of(&chance_runs);
            runs.extend(chance_runs);
            (Some(stats), Some(p))
        }
    };
    Ok(SubjectEvaluation {
        runs,
        comparison: SubjectComparison {
            subject_id: subject_id.to_string(),
            cerebra,
            chance,
            p_value,
        },
    })
}

/// Mean matched counts per category; `total` is their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub other: f64,
    pub more: f64,
    pub total: f64,
}

impl CategoryCounts {
    fn mean_of<'a>(fits: impl Iterator<Item = &'a BoundaryFit>) -> Option<Self> {
        let (mut other, mut more, mut n) = (0.0, 0.0, 0usize);
        for f in fits {
            other += f.matched_other as f64;
            more += f.matched_more as f64;
            n += 1;
        }
        (n > 0).then(|| {
            let (other, more) = (other / n as f64, more / n as f64);
            CategoryCounts {
                other,
                more,
                total: other + more,
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelColumn {
    pub matched: CategoryCounts,
    /// Matched total over reliable questions, percent.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchTable {
    /// Consensus label counts.
    pub human: CategoryCounts,
    pub cerebra: ModelColumn,
    pub chance: Option<ModelColumn>,
}

/// Fit of one subject's ensemble-mean measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectFit {
    pub subject_id: String,
    pub fit: BoundaryFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub approach: Approach,
    pub questions: usize,
    pub reliable: usize,
    pub distribution: ResponseDistribution,
    pub agreement: AgreementMatrix,
    pub matching: MatchTable,
    pub subjects: Vec<SubjectComparison>,
    pub mean_fits: Vec<SubjectFit>,
}

fn pct(part: f64, whole: f64) -> f64 {
    (1000.0 * part / whole).round() / 10.0
}

impl Report {
    /// Assembles the report. Every evaluation must use the same `labels`.
    pub fn build(
        approach: Approach,
        questions: usize,
        labels: &[Category],
        distribution: ResponseDistribution,
        agreement: AgreementMatrix,
        evaluations: &[SubjectEvaluation],
        mean_fits: Vec<SubjectFit>,
    ) -> Result<Self> {
        let more = labels.iter().filter(|l| **l == Category::More).count() as f64;
        let other = labels.len() as f64 - more;
        let human = CategoryCounts {
            other,
            more,
            total: labels.len() as f64,
        };
        let column = |model: Model| {
            let fits = evaluations
                .iter()
                .flat_map(|e| e.runs.iter())
                .filter(move |r| r.model == model)
                .map(|r| &r.fit);
            CategoryCounts::mean_of(fits).map(|matched| ModelColumn {
                percent: pct(matched.total, human.total),
                matched,
            })
        };
        let cerebra = column(Model::Cerebra)
            .ok_or_else(|| Error::Invalid("report needs at least one evaluated run".into()))?;
        let report = Report {
            approach,
            questions,
            reliable: labels.len(),
            distribution,
            agreement,
            matching: MatchTable {
                human,
                cerebra,
                chance: column(Model::Chance),
            },
            subjects: evaluations.iter().map(|e| e.comparison.clone()).collect(),
            mean_fits,
        };
        report.validate()?;
        Ok(report)
    }

    /// Internal consistency of counts, percentages and statistics.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Invalid(format!("report: {m}")));
        if self.reliable > self.questions {
            return fail(format!("{} reliable of {} questions", self.reliable, self.questions));
        }
        let h = &self.matching.human;
        if h.other + h.more != h.total || h.total != self.reliable as f64 {
            return fail("human label counts do not sum to the reliable total".into());
        }
        let columns = std::iter::once(&self.matching.cerebra).chain(self.matching.chance.as_ref());
        for c in columns {
            let m = &c.matched;
            if (m.other + m.more - m.total).abs() > 1e-9 {
                return fail("matched categories do not sum to the total".into());
            }
            if m.other > h.other + 1e-9 || m.more > h.more + 1e-9 {
                return fail("more matches than labels in a category".into());
            }
            if c.percent != pct(m.total, h.total) {
                return fail(format!("percentage {} does not match counts", c.percent));
            }
        }
        for s in &self.subjects {
            let stats = std::iter::once(&s.cerebra).chain(s.chance.as_ref());
            for st in stats {
                if !(st.variance >= 0.0) || st.mean < 0.0 || st.mean > self.reliable as f64 {
                    return fail(format!("subject {}: bad match statistics", s.subject_id));
                }
            }
            if s.chance.is_some() != s.p_value.is_some() {
                return fail(format!("subject {}: p-value without both models", s.subject_id));
            }
            if let Some(p) = s.p_value {
                if !(0.0..=1.0).contains(&p) {
                    return fail(format!("subject {}: p-value {p} outside [0, 1]", s.subject_id));
                }
            }
        }
        for f in &self.mean_fits {
            let fit = &f.fit;
            if fit.matches > fit.total
                || fit.matched_other + fit.matched_more != fit.matches
                || !(-1.0..=1.0).contains(&fit.boundary)
            {
                return fail(format!("subject {}: inconsistent fit", f.subject_id));
            }
        }
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let report: Report = serde_json::from_str(&text)?;
        report.validate()?;
        Ok(report)
    }

    /// Plain-text tables: response distribution, rater agreement, matches by
    /// category, and per-subject comparison.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let d = &self.distribution;
        let _ = writeln!(s, "HUMAN RESPONSES DISTRIBUTION");
        let _ = write!(s, "{:<10}", "Resp");
        for r in &d.raters {
            let _ = write!(s, "{:>8}", r.rater_id);
        }
        let _ = writeln!(s, "{:>8}{:>8}", "AVG", "%");
        let rows = [("-1", 0usize), ("0", 1), ("1", 2)];
        for (name, i) in rows {
            let _ = write!(s, "{name:<10}");
            for r in &d.raters {
                let _ = write!(s, "{:>8}", [r.less, r.neutral, r.more][i]);
            }
            let _ = writeln!(s, "{:>8.0}{:>7.1}%", d.average[i], d.percent[i]);
        }
        let _ = write!(s, "{:<10}", "TOT");
        for r in &d.raters {
            let _ = write!(s, "{:>8}", r.total());
        }
        let _ = writeln!(s, "{:>8.0}", d.average.iter().sum::<f64>());

        let a = &self.agreement;
        let _ = writeln!(s, "\nPARTICIPANT AGREEMENT ANALYSIS");
        let _ = write!(s, "{:<10}", "");
        for r in &a.raters {
            let _ = write!(s, "{r:>8}");
        }
        let _ = writeln!(s, "{:>9}{:>6}", "AVERAGE", "%");
        for (i, r) in a.raters.iter().enumerate() {
            let _ = write!(s, "{r:<10}");
            for m in &a.matches[i] {
                let _ = write!(s, "{m:>8}");
            }
            let avg = a.rater_average[i];
            let _ = writeln!(s, "{:>9.0}{:>5.0}%", avg, 100.0 * avg / a.questions as f64);
        }
        let _ = writeln!(s, "raters match each other {:.1}% of {} questions", a.overall_percent, a.questions);
        let _ = writeln!(
            s,
            "reliable questions: {} of {} ({:.1}%)",
            self.reliable,
            self.questions,
            pct(self.reliable as f64, self.questions as f64)
        );

        let m = &self.matching;
        let _ = writeln!(s, "\nMATCHES BY RATING (approach {})", self.approach);
        let _ = writeln!(s, "{:<10}{:>10}{:>10}{:>10}", "RATINGS", "HUMAN", "CEREBRA", "CHANCE");
        let chance = m.chance.as_ref();
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.0}"));
        let lines = [
            ("-1/0", m.human.other, m.cerebra.matched.other, chance.map(|c| c.matched.other)),
            ("1", m.human.more, m.cerebra.matched.more, chance.map(|c| c.matched.more)),
            ("TOTAL", m.human.total, m.cerebra.matched.total, chance.map(|c| c.matched.total)),
        ];
        for (name, h, c, ch) in lines {
            let _ = writeln!(s, "{name:<10}{h:>10.0}{c:>10.0}{:>10}", cell(ch));
        }
        let _ = writeln!(
            s,
            "{:<10}{:>10}{:>9.1}%{:>10}",
            "AVERAGE",
            "",
            m.cerebra.percent,
            chance.map_or_else(|| "-".to_string(), |c| format!("{:.1}%", c.percent))
        );

        let _ = writeln!(s, "\nSUBJECT COMPARISON (matches over runs)");
        let _ = writeln!(
            s,
            "{:<10}{:>12}{:>12}{:>12}{:>12}{:>12}",
            "SUBJECT", "CEREBRA", "VAR", "CHANCE", "VAR", "P-VALUE"
        );
        for c in &self.subjects {
            let _ = writeln!(
                s,
                "{:<10}{:>12.1}{:>12.2}{:>12}{:>12}{:>12}",
                c.subject_id,
                c.cerebra.mean,
                c.cerebra.variance,
                c.chance.map_or_else(|| "-".into(), |x| format!("{:.1}", x.mean)),
                c.chance.map_or_else(|| "-".into(), |x| format!("{:.2}", x.variance)),
                c.p_value.map_or_else(|| "-".into(), |p| format!("{p:.2E}")),
            );
        }
        if !self.mean_fits.is_empty() {
            let _ = writeln!(s, "\nMEAN-MEASURE FITS");
            for f in &self.mean_fits {
                let _ = writeln!(
                    s,
                    "{:<10} boundary {:>6.3}  matches {}/{} ({:.1}%)",
                    f.subject_id,
                    f.fit.boundary,
                    f.fit.matches,
                    f.fit.total,
                    pct(f.fit.matches as f64, f.fit.total as f64)
                );
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Category::{More, Other};

    #[test]
    fn strict_boundary() {
        assert_eq!(binarize(0.3, 0.3), Other);
        assert_eq!(binarize(0.5, 0.0), More);
        assert!([0.9, -0.5, 0.0].iter().all(|&v| binarize(v, -1.0) == More));
    }

    #[test]
    fn grid_endpoints_and_size() {
        let g = sweep_grid(0.001).unwrap();
        assert_eq!(g.len(), 2001);
        assert_eq!((g[0], g[1000], g[2000]), (-1.0, 0.0, 1.0));
        assert_eq!(g[1200], 0.2);
    }

    #[test]
    fn all_more_fits_at_minus_one() {
        let f = fit_boundary(&[0.5; 4], &[More; 4], 0.001).unwrap();
        assert_eq!((f.boundary, f.matches), (-1.0, 4));
    }

    #[test]
    fn two_point_fit() {
        let f = fit_boundary(&[0.6, 0.2], &[More, Other], 0.001).unwrap();
        assert_eq!((f.boundary, f.matches, f.matched_more, f.matched_other), (0.2, 2, 1, 1));
    }

    #[test]
    fn empty_fit_rejected() {
        assert!(fit_boundary(&[], &[], 0.001).is_err());
    }

    #[test]
    fn chance_bounds_and_degenerate() {
        assert!(matches!(chance_model(0.0, 0.0, 3, 1), Err(Error::DegenerateRange { .. })));
        let a = chance_model(-0.2, 0.4, 1000, 9).unwrap();
        assert_eq!(a, chance_model(-0.2, 0.4, 1000, 9).unwrap());
        assert!(a.iter().all(|v| (-0.2..=0.4).contains(v)));
    }

    #[test]
    fn equal_samples_p_one() {
        let a = [3.0, 4.0, 5.0, 9.0];
        assert_eq!(t_test_two_sample(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn chance_section_absent_when_skipped() {
        let runs = vec![vec![0.5, -0.5], vec![0.4, -0.1]];
        let e = evaluate_subject("s1", &runs, &[More, Other], None, 0.001).unwrap();
        assert!(e.comparison.chance.is_none() && e.comparison.p_value.is_none());
        assert_eq!(e.comparison.cerebra.mean, 2.0);
    }
}
