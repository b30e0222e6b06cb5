//! Confusion counts, ROC analysis and report files.
//!
//! Multiclass decisions are folded one-vs-rest the symmetric way: a correct decision is
//! one true positive and one true negative, a wrong one is a false positive and a false
//! negative. Accuracy, sensitivity and specificity therefore coincide.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::persist::{self, PersistError};
use crate::scalar::Scalar;
use crate::ClassId;

pub const OPERATING_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no decisions to evaluate")]
    EmptyInput,
    #[error("ROC needs both positive and negative outcomes")]
    SingleClassInput,
    #[error("score is not a number")]
    NanScore,
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy_exact(&self) -> Result<Ratio<u64>, EvalError> {
        match self.total() {
            0 => Err(EvalError::EmptyInput),
            n => Ok(Ratio::new(self.tp + self.tn, n)),
        }
    }

    pub fn accuracy<T: Scalar>(&self) -> Result<T, EvalError> {
        let n = self.total();
        if n == 0 {
            return Err(EvalError::EmptyInput);
        }
        Ok(T::from_u64(self.tp + self.tn).unwrap() / T::from_u64(n).unwrap())
    }

    pub fn sensitivity<T: Scalar>(&self) -> Result<T, EvalError> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn specificity<T: Scalar>(&self) -> Result<T, EvalError> {
        ratio(self.tn, self.tn + self.fp)
    }
}

fn ratio<T: Scalar>(num: u64, den: u64) -> Result<T, EvalError> {
    if den == 0 {
        return Err(EvalError::EmptyInput);
    }
    Ok(T::from_u64(num).unwrap() / T::from_u64(den).unwrap())
}

/// Symmetric one-vs-rest folding of `(predicted, true)` pairs.
pub fn confusion(decisions: &[(ClassId, ClassId)]) -> Result<ConfusionCounts, EvalError> {
    if decisions.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let correct = decisions.iter().filter(|(p, t)| p == t).count() as u64;
    let wrong = decisions.len() as u64 - correct;
    Ok(ConfusionCounts {
        tp: correct,
        fp: wrong,
        tn: correct,
        fn_: wrong,
    })
}

pub fn accuracy<T: Scalar>(c: &ConfusionCounts) -> Result<T, EvalError> {
    c.accuracy()
}

/// Full class-by-class matrix: `counts[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MulticlassConfusion {
    pub classes: Vec<ClassId>,
    pub counts: Vec<Vec<u64>>,
}

pub fn multiclass_confusion(classes: &[ClassId], decisions: &[(ClassId, ClassId)]) -> MulticlassConfusion {
    let idx = |c: ClassId| classes.iter().position(|&k| k == c);
    let mut counts = vec![vec![0u64; classes.len()]; classes.len()];
    for &(p, t) in decisions {
        if let (Some(pi), Some(ti)) = (idx(p), idx(t)) {
            counts[ti][pi] += 1;
        }
    }
    MulticlassConfusion {
        classes: classes.to_vec(),
        counts,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryOutcome<T> {
    pub score: T,
    pub label: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint<T> {
    pub threshold: T,
    pub fpr: T,
    pub tpr: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocReport<T> {
    /// From `(0, 0)` to `(1, 1)`, non-decreasing in both rates.
    pub points: Vec<RocPoint<T>>,
    pub auc: T,
    pub accuracy: T,
    pub sensitivity: T,
    pub specificity: T,
}

/// Sweep the distinct scores from high to low; a score at or above the threshold is a
/// positive prediction. The trapezoidal area is accumulated in integers, so equal scores
/// of a positive and a negative count one half, as in the Mann-Whitney statistic.
pub fn roc<T: Scalar>(outcomes: &[BinaryOutcome<T>]) -> Result<RocReport<T>, EvalError> {
    roc_at(outcomes, T::lit(OPERATING_THRESHOLD))
}

pub fn roc_at<T: Scalar>(outcomes: &[BinaryOutcome<T>], operating: T) -> Result<RocReport<T>, EvalError> {
    if outcomes.iter().any(|o| o.score.is_nan()) {
        return Err(EvalError::NanScore);
    }
    let pos = outcomes.iter().filter(|o| o.label).count() as u64;
    let neg = outcomes.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClassInput);
    }
    let mut sorted: Vec<_> = outcomes.to_vec();
    sorted.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
    let (pf, nf) = (T::from_u64(pos).unwrap(), T::from_u64(neg).unwrap());
    let mut points = vec![RocPoint {
        threshold: T::infinity(),
        fpr: T::zero(),
        tpr: T::zero(),
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut twice_area: u128 = 0;
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].score;
        let (tp0, fp0) = (tp, fp);
        while i < sorted.len() && sorted[i].score == s {
            if sorted[i].label {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        twice_area += (fp - fp0) as u128 * (tp + tp0) as u128;
        points.push(RocPoint {
            threshold: s,
            fpr: T::from_u64(fp).unwrap() / nf,
            tpr: T::from_u64(tp).unwrap() / pf,
        });
    }
    let auc = T::from_u128(twice_area).unwrap() / (T::lit(2.0) * pf * nf);
    let tp_op = outcomes.iter().filter(|o| o.label && o.score >= operating).count() as u64;
    let fp_op = outcomes.iter().filter(|o| !o.label && o.score >= operating).count() as u64;
    let tn_op = neg - fp_op;
    Ok(RocReport {
        points,
        auc,
        accuracy: T::from_u64(tp_op + tn_op).unwrap() / T::from_u64(pos + neg).unwrap(),
        sensitivity: T::from_u64(tp_op).unwrap() / pf,
        specificity: T::from_u64(tn_op).unwrap() / nf,
    })
}

/// One classified sample in a corpus run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleDecision {
    pub sample_id: String,
    pub true_class: ClassId,
    pub predicted: ClassId,
    pub confidence: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerClassRow {
    pub class: ClassId,
    pub samples: u64,
    pub correct: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema: String,
    pub strategy: String,
    pub samples: usize,
    pub confusion: ConfusionCounts,
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub flagged: usize,
    pub roc: RocReport<f64>,
    pub per_class: Vec<PerClassRow>,
    pub multiclass: MulticlassConfusion,
}

pub const REPORT_SCHEMA: &str = "idclass.report/v1";

/// Summarize a corpus run. `outcomes` holds one entry per (sample, class) pair with the
/// class's score and whether it is the sample's true class.
pub fn build_report(
    strategy: &str,
    classes: &[ClassId],
    decisions: &[SampleDecision],
    outcomes: &[BinaryOutcome<f64>],
) -> Result<EvaluationReport, EvalError> {
    let pairs: Vec<(ClassId, ClassId)> = decisions.iter().map(|d| (d.predicted, d.true_class)).collect();
    let confusion = confusion(&pairs)?;
    let mut per: BTreeMap<ClassId, (u64, u64)> = classes.iter().map(|&c| (c, (0, 0))).collect();
    for d in decisions {
        let e = per.entry(d.true_class).or_default();
        e.0 += 1;
        e.1 += (d.predicted == d.true_class) as u64;
    }
    let per_class = classes
        .iter()
        .map(|c| {
            let (n, k) = per[c];
            PerClassRow {
                class: *c,
                samples: n,
                correct: k,
                accuracy: if n == 0 { 0.0 } else { k as f64 / n as f64 },
            }
        })
        .collect();
    Ok(EvaluationReport {
        schema: REPORT_SCHEMA.into(),
        strategy: strategy.into(),
        samples: decisions.len(),
        accuracy: confusion.accuracy()?,
        sensitivity: confusion.sensitivity()?,
        specificity: confusion.specificity()?,
        confusion,
        flagged: decisions.iter().filter(|d| d.flagged).count(),
        roc: roc(outcomes)?,
        per_class,
        multiclass: multiclass_confusion(classes, &pairs),
    })
}

/// Writes `report.json`, `decisions.csv`, `roc.csv` and `roc.svg` into `dir`.
pub fn write_report_files(
    dir: &Path,
    report: &EvaluationReport,
    decisions: &[SampleDecision],
) -> Result<(), EvalError> {
    persist::write_json_atomic(&dir.join("report.json"), report)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sample_id", "true_class", "predicted", "confidence", "flagged", "correct"])
        .map_err(|e| EvalError::Csv(e.to_string()))?;
    for d in decisions {
        w.write_record([
            d.sample_id.clone(),
            d.true_class.to_string(),
            d.predicted.to_string(),
            format!("{:.6}", d.confidence),
            d.flagged.to_string(),
            (d.predicted == d.true_class).to_string(),
        ])
        .map_err(|e| EvalError::Csv(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| EvalError::Csv(e.to_string()))?;
    persist::write_atomic(&dir.join("decisions.csv"), &bytes)?;

    let mut roc_csv = String::from("threshold,fpr,tpr\n");
    for p in &report.roc.points {
        let _ = writeln!(roc_csv, "{},{:.8},{:.8}", fmt_threshold(p.threshold), p.fpr, p.tpr);
    }
    persist::write_atomic(&dir.join("roc.csv"), roc_csv.as_bytes())?;
    persist::write_atomic(&dir.join("roc.svg"), roc_svg(&report.roc).as_bytes())?;
    Ok(())
}

fn fmt_threshold(t: f64) -> String {
    if t.is_infinite() {
        "inf".into()
    } else {
        format!("{t:.8}")
    }
}

/// Plain SVG line plot of the curve with the chance diagonal.
pub fn roc_svg(r: &RocReport<f64>) -> String {
    let (size, pad) = (400.0, 40.0);
    let span = size - 2.0 * pad;
    let pts: Vec<String> = r
        .points
        .iter()
        .map(|p| format!("{:.2},{:.2}", pad + p.fpr * span, size - pad - p.tpr * span))
        .collect();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(s, r#"<rect x="{pad}" y="{pad}" width="{span}" height="{span}" fill="none" stroke="black"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{pad}" y1="{}" x2="{}" y2="{pad}" stroke="gray" stroke-dasharray="4"/>"#,
        size - pad,
        size - pad
    );
    let _ = writeln!(s, r#"<polyline fill="none" stroke="blue" stroke-width="2" points="{}"/>"#, pts.join(" "));
    let _ = writeln!(s, r#"<text x="{pad}" y="25" font-family="sans-serif" font-size="14">AUC = {:.4}</text>"#, r.auc);
    let _ = writeln!(s, r#"<text x="190" y="390" font-family="sans-serif" font-size="12">FPR</text>"#);
    let _ = writeln!(s, r#"<text x="5" y="205" font-family="sans-serif" font-size="12">TPR</text>"#);
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn outcomes(pairs: &[(f64, bool)]) -> Vec<BinaryOutcome<f64>> {
        pairs.iter().map(|&(score, label)| BinaryOutcome { score, label }).collect()
    }

    fn mann_whitney(o: &[BinaryOutcome<f64>]) -> f64 {
        let mut acc = 0.0;
        let mut n = 0.0;
        for p in o.iter().filter(|o| o.label) {
            for q in o.iter().filter(|o| !o.label) {
                n += 1.0;
                if p.score > q.score {
                    acc += 1.0;
                } else if p.score == q.score {
                    acc += 0.5;
                }
            }
        }
        acc / n
    }

    #[test]
    fn symmetric_folding() {
        let d = [(ClassId(1), ClassId(1)), (ClassId(2), ClassId(1)), (ClassId(3), ClassId(3))];
        assert_eq!(
            confusion(&d).unwrap(),
            ConfusionCounts { tp: 2, fp: 1, tn: 2, fn_: 1 }
        );
        let all: Vec<_> = (0..10).map(|i| (ClassId(i), ClassId(i))).collect();
        assert_eq!(confusion(&all).unwrap(), ConfusionCounts { tp: 10, fp: 0, tn: 10, fn_: 0 });
        let none: Vec<_> = (0..10).map(|i| (ClassId(i), ClassId(i + 1))).collect();
        assert_eq!(confusion(&none).unwrap(), ConfusionCounts { tp: 0, fp: 10, tn: 0, fn_: 10 });
        assert!(matches!(confusion(&[]), Err(EvalError::EmptyInput)));
    }

    #[test]
    fn exact_accuracy() {
        let c = ConfusionCounts { tp: 3, fp: 1, tn: 3, fn_: 1 };
        assert_eq!(c.accuracy_exact().unwrap(), Ratio::new(3, 4));
        assert_eq!(c.accuracy::<f32>().unwrap(), 0.75);
        assert!(ConfusionCounts::default().accuracy::<f64>().is_err());
    }

    #[test]
    fn roc_hand_cases() {
        let r = roc(&outcomes(&[(0.9, true), (0.8, false), (0.3, true), (0.1, false)])).unwrap();
        assert_eq!(r.auc, 0.75);
        let sep = roc(&outcomes(&[(0.9, true), (0.7, true), (0.2, false)])).unwrap();
        assert_eq!(sep.auc, 1.0);
        assert_eq!(sep.points.first().map(|p| (p.fpr, p.tpr)), Some((0.0, 0.0)));
        assert_eq!(sep.points.last().map(|p| (p.fpr, p.tpr)), Some((1.0, 1.0)));
        assert_eq!((sep.sensitivity, sep.specificity), (1.0, 1.0));
        let ties = roc(&outcomes(&[(0.5, true), (0.5, false)])).unwrap();
        assert_eq!(ties.auc, 0.5);
        assert!(matches!(roc(&outcomes(&[(0.5, true)])), Err(EvalError::SingleClassInput)));
    }

    #[test]
    fn uninformative_scores_give_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let o: Vec<_> = (0..10_000)
            .map(|i| BinaryOutcome {
                score: (i % 100) as f64 / 100.0,
                label: rng.random_bool(0.5),
            })
            .collect();
        let auc = roc(&o).unwrap().auc;
        assert!((auc - 0.5).abs() < 0.05, "{auc}");
    }

    #[test]
    fn report_files() {
        let dir = tempfile::tempdir().unwrap();
        let classes = [ClassId(1), ClassId(2)];
        let decisions = vec![
            SampleDecision { sample_id: "a".into(), true_class: ClassId(1), predicted: ClassId(1), confidence: 0.9, flagged: false },
            SampleDecision { sample_id: "b".into(), true_class: ClassId(2), predicted: ClassId(1), confidence: 0.4, flagged: true },
        ];
        let o = outcomes(&[(0.9, true), (0.1, false), (0.4, false), (0.3, true)]);
        let r = build_report("fusion", &classes, &decisions, &o).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.multiclass.counts, vec![vec![1, 0], vec![1, 0]]);
        write_report_files(dir.path(), &r, &decisions).unwrap();
        for f in ["report.json", "decisions.csv", "roc.csv", "roc.svg"] {
            assert!(dir.path().join(f).exists());
        }
        let csv = std::fs::read_to_string(dir.path().join("decisions.csv")).unwrap();
        assert!(csv.lines().nth(2).unwrap().starts_with("b,2,1,0.400000,true,false"));
    }

    proptest! {
        #[test]
        fn auc_is_mann_whitney(pairs in prop::collection::vec((0u8..20, any::<bool>()), 2..200)) {
            let o: Vec<_> = pairs.iter().map(|&(s, l)| BinaryOutcome { score: s as f64 / 19.0, label: l }).collect();
            prop_assume!(o.iter().any(|x| x.label) && o.iter().any(|x| !x.label));
            let r = roc(&o).unwrap();
            prop_assert!((r.auc - mann_whitney(&o)).abs() < 1e-12);
            for w in r.points.windows(2) {
                prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
            }
        }

        #[test]
        fn folded_rates_coincide(correct in 0u64..500, wrong in 0u64..500) {
            prop_assume!(correct + wrong > 0);
            let c = ConfusionCounts { tp: correct, fp: wrong, tn: correct, fn_: wrong };
            let a: f64 = c.accuracy().unwrap();
            prop_assert_eq!(a, c.sensitivity::<f64>().unwrap());
            prop_assert_eq!(a, c.specificity::<f64>().unwrap());
        }
    }
}
