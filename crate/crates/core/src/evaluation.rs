//! Confusion matrices, per-class precision/recall/F1, macro and weighted
//! F1 averages, and the results tables built from them.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::{Label, Language};
use crate::encoding::FeatureMatrix;
use crate::error::{Error, Result};
use crate::model::{predict, HeadParams, HeadSpec};
use crate::training::HyperParams;

/// Train language → test language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LanguagePair {
    pub train: Language,
    pub test: Language,
}

impl LanguagePair {
    pub fn new(train: Language, test: Language) -> Self {
        Self { train, test }
    }

    /// The four pairs in table order: EN-EN, EN-FR, FR-EN, FR-FR.
    pub fn all() -> [LanguagePair; 4] {
        use Language::*;
        [
            LanguagePair::new(En, En),
            LanguagePair::new(En, Fr),
            LanguagePair::new(Fr, En),
            LanguagePair::new(Fr, Fr),
        ]
    }

    /// Column header form, e.g. `EN-FR`.
    pub fn header(&self) -> String {
        format!(
            "{}-{}",
            self.train.code().to_uppercase(),
            self.test.code().to_uppercase()
        )
    }
}

impl fmt::Display for LanguagePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}→{}", self.train, self.test)
    }
}

impl FromStr for LanguagePair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (a, b) = ["→", "->", "-", ":"]
            .iter()
            .find_map(|sep| s.split_once(sep))
            .ok_or_else(|| Error::Usage(format!("language pair {s:?} is not like en→fr")))?;
        Ok(LanguagePair::new(a.parse()?, b.parse()?))
    }
}

impl Serialize for LanguagePair {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LanguagePair {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// `counts[gold][predicted]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 2]; 2],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        self.counts[0][0] + self.counts[1][1]
    }

    fn row_sum(&self, c: usize) -> u64 {
        self.counts[c][0] + self.counts[c][1]
    }

    fn col_sum(&self, c: usize) -> u64 {
        self.counts[0][c] + self.counts[1][c]
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.correct() as f64 / t as f64,
        }
    }
}

pub fn confusion(gold: &[Label], predicted: &[Label]) -> Result<ConfusionMatrix> {
    if gold.len() != predicted.len() {
        return Err(Error::Data(format!(
            "{} gold labels for {} predictions",
            gold.len(),
            predicted.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::Data("cannot build a confusion matrix from no samples".into()));
    }
    let mut cm = ConfusionMatrix::default();
    for (&g, &p) in gold.iter().zip(predicted) {
        cm.counts[g.index()][p.index()] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    /// Indexed by label.
    pub classes: [ClassScore; 2],
    /// Undefined ratios that were reported as 0, e.g. `"precision[1]"`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate: Vec<String>,
}

/// Precision, recall and F1 per class; undefined ratios are 0 and flagged.
pub fn class_metrics(cm: &ConfusionMatrix) -> ClassMetrics {
    let mut out = ClassMetrics::default();
    for c in 0..2 {
        let tp = cm.counts[c][c] as f64;
        let (col, row) = (cm.col_sum(c), cm.row_sum(c));
        let precision = if col == 0 {
            out.degenerate.push(format!("precision[{c}]"));
            0.0
        } else {
            tp / col as f64
        };
        let recall = if row == 0 {
            out.degenerate.push(format!("recall[{c}]"));
            0.0
        } else {
            tp / row as f64
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        out.classes[c] = ClassScore {
            precision,
            recall,
            f1,
            support: row,
        };
    }
    out
}

pub fn macro_avg(metrics: &ClassMetrics) -> f64 {
    (metrics.classes[0].f1 + metrics.classes[1].f1) / 2.0
}

/// Support-weighted mean F1.
pub fn weighted_avg(metrics: &ClassMetrics) -> Result<f64> {
    let [a, b] = &metrics.classes;
    let total = a.support + b.support;
    if total == 0 {
        return Err(Error::Data("weighted average over zero support is undefined".into()));
    }
    Ok((a.support as f64 * a.f1 + b.support as f64 * b.f1) / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub run_id: String,
    #[serde(default)]
    pub backbone_id: String,
    /// Column label of the run in variant tables, e.g. `10 epochs, 3e-4`.
    #[serde(default)]
    pub variant: String,
    pub language_pair: LanguagePair,
    pub confusion: ConfusionMatrix,
    pub metrics: ClassMetrics,
    pub macro_avg_f1: f64,
    pub weighted_avg_f1: f64,
    pub accuracy: f64,
}

impl EvalReport {
    pub fn from_labels(gold: &[Label], predicted: &[Label], language_pair: LanguagePair, run_id: &str) -> Result<Self> {
        let cm = confusion(gold, predicted)?;
        let metrics = class_metrics(&cm);
        Ok(Self {
            run_id: run_id.to_string(),
            backbone_id: String::new(),
            variant: String::new(),
            language_pair,
            macro_avg_f1: macro_avg(&metrics),
            weighted_avg_f1: weighted_avg(&metrics)?,
            accuracy: cm.accuracy(),
            confusion: cm,
            metrics,
        })
    }

    pub fn with_labels(mut self, backbone_id: &str, variant: &str) -> Self {
        self.backbone_id = backbone_id.to_string();
        self.variant = variant.to_string();
        self
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// EVAL-mode predictions for every feature row.
pub fn predict_labels(params: &HeadParams, spec: &HeadSpec, features: &FeatureMatrix) -> Result<Vec<Label>> {
    (0..features.n_rows())
        .map(|i| predict(&features.row_f64(i), params, spec).map(|p| p.label))
        .collect()
}

pub fn evaluate(
    params: &HeadParams,
    spec: &HeadSpec,
    features: &FeatureMatrix,
    gold: &[Label],
    language_pair: LanguagePair,
    run_id: &str,
) -> Result<EvalReport> {
    if features.n_rows() != gold.len() {
        return Err(Error::Data(format!(
            "{} feature rows for {} labels",
            features.n_rows(),
            gold.len()
        )));
    }
    let predicted = predict_labels(params, spec, features)?;
    EvalReport::from_labels(gold, &predicted, language_pair, run_id)
}

/// Best report per (backbone, language pair).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CrossLingualMatrix {
    pub best: BTreeMap<String, BTreeMap<LanguagePair, EvalReport>>,
}

/// Keeps the highest macro-F1 report per (backbone, pair); ties go to the
/// lexicographically smaller run id.
pub fn cross_lingual_matrix(reports: &[EvalReport]) -> CrossLingualMatrix {
    let mut out = CrossLingualMatrix::default();
    for r in reports {
        let slot = out.best.entry(r.backbone_id.clone()).or_default();
        match slot.get(&r.language_pair) {
            Some(cur)
                if cur.macro_avg_f1 > r.macro_avg_f1
                    || (cur.macro_avg_f1 == r.macro_avg_f1 && cur.run_id <= r.run_id) => {}
            _ => {
                slot.insert(r.language_pair, r.clone());
            }
        }
    }
    for (backbone, pairs) in &out.best {
        for pair in LanguagePair::all() {
            if !pairs.contains_key(&pair) {
                log::warn!("no run for backbone {backbone} on {pair}; pair omitted");
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "text" | "txt" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::Usage(format!("unknown report format {other:?}"))),
        }
    }
}

/// Two decimals, halves rounded up.
pub fn round2(x: f64) -> String {
    format!("{:.2}", (x * 100.0 + 0.5).floor() / 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub title: String,
    pub corner: String,
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub label: String,
    pub values: Vec<Option<f64>>,
}

fn metric_of(r: &EvalReport, weighted: bool) -> f64 {
    if weighted {
        r.weighted_avg_f1
    } else {
        r.macro_avg_f1
    }
}

fn avg_name(weighted: bool) -> &'static str {
    if weighted {
        "weighted avg."
    } else {
        "macro avg."
    }
}

fn display_backbone(r: &EvalReport) -> String {
    if r.backbone_id.is_empty() {
        r.run_id.clone()
    } else {
        r.backbone_id.clone()
    }
}

fn display_variant(r: &EvalReport) -> String {
    if r.variant.is_empty() {
        r.run_id.clone()
    } else {
        r.variant.clone()
    }
}

/// Builds the macro and weighted tables for a set of reports.
///
/// When every report shares one language pair, rows are backbones and
/// columns are run variants. Otherwise rows are the best run per backbone
/// and columns are language pairs.
pub fn build_tables(reports: &[EvalReport]) -> Result<Vec<Table>> {
    if reports.is_empty() {
        return Err(Error::Usage("no reports to render".into()));
    }
    let single_pair = reports.iter().all(|r| r.language_pair == reports[0].language_pair);
    let mut tables = Vec::new();
    for weighted in [false, true] {
        if single_pair {
            let pair = reports[0].language_pair;
            let mut columns: Vec<String> = Vec::new();
            let mut models: Vec<String> = Vec::new();
            for r in reports {
                let (v, m) = (display_variant(r), display_backbone(r));
                if !columns.contains(&v) {
                    columns.push(v);
                }
                if !models.contains(&m) {
                    models.push(m);
                }
            }
            // the three standard columns keep their usual order
            let standard: Vec<String> = HyperParams::TABLE_CELLS
                .iter()
                .map(|&(epochs, learning_rate)| {
                    HyperParams {
                        epochs,
                        learning_rate,
                        ..HyperParams::default()
                    }
                    .variant_label()
                })
                .collect();
            let appearance = columns.clone();
            columns.sort_by_key(|c| {
                (
                    standard.iter().position(|s| s == c).unwrap_or(usize::MAX),
                    appearance.iter().position(|a| a == c),
                )
            });
            let rows = models
                .iter()
                .map(|m| TableRow {
                    label: m.clone(),
                    values: columns
                        .iter()
                        .map(|c| {
                            reports
                                .iter()
                                .filter(|r| &display_backbone(r) == m && &display_variant(r) == c)
                                .map(|r| metric_of(r, weighted))
                                .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
                        })
                        .collect(),
                })
                .collect();
            tables.push(Table {
                title: format!("Epochs, Learning rates ({})", avg_name(weighted)),
                corner: format!("Model ({})", pair.header()),
                columns,
                rows,
            });
        } else {
            let matrix = cross_lingual_matrix(reports);
            let pairs: Vec<LanguagePair> = LanguagePair::all()
                .into_iter()
                .filter(|p| matrix.best.values().any(|m| m.contains_key(p)))
                .collect();
            let rows = matrix
                .best
                .iter()
                .map(|(backbone, best)| TableRow {
                    label: format!("Best {backbone}"),
                    values: pairs
                        .iter()
                        .map(|p| best.get(p).map(|r| metric_of(r, weighted)))
                        .collect(),
                })
                .collect();
            tables.push(Table {
                title: format!("Language pairs ({})", avg_name(weighted)),
                corner: "Model".into(),
                columns: pairs.iter().map(LanguagePair::header).collect(),
                rows,
            });
        }
    }
    Ok(tables)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), round2)
}

pub fn render_tables(tables: &[Table], format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Json => {
            out = serde_json::to_string_pretty(tables).expect("tables serialize");
            out.push('\n');
        }
        ReportFormat::Markdown => {
            for t in tables {
                out.push_str(&format!("**{}**\n\n", t.title));
                out.push_str(&format!("| {} | {} |\n", t.corner, t.columns.join(" | ")));
                out.push_str(&format!("|---|{}\n", "---|".repeat(t.columns.len())));
                for r in &t.rows {
                    let vals: Vec<String> = r.values.iter().map(|v| cell(*v)).collect();
                    out.push_str(&format!("| {} | {} |\n", r.label, vals.join(" | ")));
                }
                out.push('\n');
            }
        }
        ReportFormat::Text => {
            for t in tables {
                let first = t
                    .rows
                    .iter()
                    .map(|r| r.label.chars().count())
                    .chain([t.corner.chars().count()])
                    .max()
                    .unwrap_or(0);
                let widths: Vec<usize> = t.columns.iter().map(|c| c.chars().count().max(4)).collect();
                out.push_str(&t.title);
                out.push('\n');
                out.push_str(&format!("{:<first$}", t.corner));
                for (c, w) in t.columns.iter().zip(&widths) {
                    out.push_str(&format!("  {c:>w$}"));
                }
                out.push('\n');
                for r in &t.rows {
                    out.push_str(&format!("{:<first$}", r.label));
                    for (v, w) in r.values.iter().zip(&widths) {
                        out.push_str(&format!("  {:>w$}", cell(*v)));
                    }
                    out.push('\n');
                }
                out.push('\n');
            }
        }
    }
    out
}

pub fn render_report(reports: &[EvalReport], format: ReportFormat) -> Result<String> {
    Ok(render_tables(&build_tables(reports)?, format))
}

/// sklearn-style per-class listing of one report.
pub fn classification_report(r: &EvalReport) -> String {
    let mut s = format!(
        "run {} ({})\n{:>14} {:>9} {:>9} {:>9} {:>9}\n",
        r.run_id, r.language_pair, "", "precision", "recall", "f1-score", "support"
    );
    for (name, c) in ["not hateful", "hateful"].iter().zip(&r.metrics.classes) {
        s.push_str(&format!(
            "{name:>14} {:>9} {:>9} {:>9} {:>9}\n",
            round2(c.precision),
            round2(c.recall),
            round2(c.f1),
            c.support
        ));
    }
    let total = r.confusion.total();
    s.push_str(&format!(
        "{:>14} {:>9} {:>9} {:>9} {:>9}\n",
        "accuracy",
        "",
        "",
        round2(r.accuracy),
        total
    ));
    s.push_str(&format!(
        "{:>14} {:>9} {:>9} {:>9} {:>9}\n",
        "macro avg",
        "",
        "",
        round2(r.macro_avg_f1),
        total
    ));
    s.push_str(&format!(
        "{:>14} {:>9} {:>9} {:>9} {:>9}\n",
        "weighted avg",
        "",
        "",
        round2(r.weighted_avg_f1),
        total
    ));
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Label::{Hateful as H, NotHateful as N};

    fn pair(s: &str) -> LanguagePair {
        s.parse().unwrap()
    }

    #[test]
    fn confusion_examples() {
        assert_eq!(confusion(&[N, H, N], &[N, H, N]).unwrap().counts, [[2, 0], [0, 1]]);
        assert_eq!(confusion(&[N, N], &[H, H]).unwrap().counts, [[0, 2], [0, 0]]);
        assert!(matches!(confusion(&[N], &[N, H]), Err(Error::Data(_))));
    }

    #[test]
    fn metrics_from_matrix() {
        let perfect = class_metrics(&ConfusionMatrix {
            counts: [[3, 0], [0, 4]],
        });
        for c in perfect.classes {
            assert_eq!((c.precision, c.recall, c.f1), (1.0, 1.0, 1.0));
        }
        let m = class_metrics(&ConfusionMatrix {
            counts: [[50, 10], [5, 35]],
        });
        let (p, r) = (50.0 / 55.0, 50.0 / 60.0);
        assert!((m.classes[0].precision - p).abs() < 1e-15);
        assert!((m.classes[0].recall - r).abs() < 1e-15);
        assert!((m.classes[0].f1 - 2.0 * p * r / (p + r)).abs() < 1e-15);
        assert!((m.classes[0].f1 - 0.869_565_217_391_304_3).abs() < 1e-12);

        let absent = class_metrics(&ConfusionMatrix {
            counts: [[5, 0], [0, 0]],
        });
        assert_eq!(absent.classes[1], ClassScore::default());
        assert!(absent.degenerate.contains(&"recall[1]".to_string()));
    }

    #[test]
    fn averages() {
        let mut m = ClassMetrics::default();
        m.classes[0].f1 = 0.8;
        m.classes[1].f1 = 0.6;
        m.classes[0].support = 30;
        m.classes[1].support = 10;
        assert!((macro_avg(&m) - 0.7).abs() < 1e-15);
        assert!((weighted_avg(&m).unwrap() - 0.75).abs() < 1e-15);
        m.classes[1].support = 30;
        assert!((weighted_avg(&m).unwrap() - macro_avg(&m)).abs() < 1e-15);
        assert!(weighted_avg(&ClassMetrics::default()).is_err());
    }

    #[test]
    fn constant_predictor_report() {
        let gold: Vec<Label> = std::iter::repeat_n(N, 60).chain(std::iter::repeat_n(H, 40)).collect();
        let pred = vec![N; 100];
        let r = EvalReport::from_labels(&gold, &pred, pair("en→fr"), "c").unwrap();
        assert!((r.metrics.classes[0].f1 - 0.75).abs() < 1e-15);
        assert_eq!(r.metrics.classes[1].f1, 0.0);
        assert!((r.macro_avg_f1 - 0.375).abs() < 1e-15);
        assert!((r.weighted_avg_f1 - 0.45).abs() < 1e-15);
    }

    #[test]
    fn perfect_report() {
        let gold = [N, H, H, N];
        let r = EvalReport::from_labels(&gold, &gold, pair("en-en"), "p").unwrap();
        assert_eq!((r.macro_avg_f1, r.weighted_avg_f1, r.accuracy), (1.0, 1.0, 1.0));
    }

    #[test]
    fn language_pair_parsing_and_json() {
        assert_eq!(pair("en→fr"), LanguagePair::new(Language::En, Language::Fr));
        assert_eq!(pair("FR->EN"), LanguagePair::new(Language::Fr, Language::En));
        assert_eq!(serde_json::to_string(&pair("en-en")).unwrap(), "\"en→en\"");
        assert!("enfr".parse::<LanguagePair>().is_err());
    }

    fn report(run: &str, backbone: &str, variant: &str, p: &str, macro_f1: f64, weighted: f64) -> EvalReport {
        EvalReport {
            run_id: run.into(),
            backbone_id: backbone.into(),
            variant: variant.into(),
            language_pair: pair(p),
            confusion: ConfusionMatrix::default(),
            metrics: ClassMetrics::default(),
            macro_avg_f1: macro_f1,
            weighted_avg_f1: weighted,
            accuracy: 0.0,
        }
    }

    #[test]
    fn matrix_selects_best_with_run_id_ties() {
        let reports = vec![
            report("b", "mbert", "v", "en-en", 0.7, 0.7),
            report("a", "mbert", "v", "en-en", 0.7, 0.6),
            report("c", "mbert", "v", "en-en", 0.5, 0.9),
            report("d", "mbert", "v", "fr-fr", 0.4, 0.4),
        ];
        let m = cross_lingual_matrix(&reports);
        assert_eq!(m.best["mbert"][&pair("en-en")].run_id, "a");
        assert_eq!(m.best["mbert"][&pair("fr-fr")].run_id, "d");
        assert_eq!(m.best["mbert"].len(), 2);
    }

    #[test]
    fn paper_shaped_pair_tables() {
        let reports = vec![
            report("1", "mBERT", "", "en-en", 0.71, 0.71),
            report("2", "mBERT", "", "fr-en", 0.41, 0.52),
            report("3", "mBERT", "", "fr-fr", 0.66, 0.72),
            report("4", "XLM-RoBERTa", "", "en-en", 0.44, 0.43),
            report("5", "XLM-RoBERTa", "", "fr-en", 0.51, 0.55),
            report("6", "XLM-RoBERTa", "", "fr-fr", 0.32, 0.27),
        ];
        let md = render_report(&reports, ReportFormat::Markdown).unwrap();
        assert!(md.contains("| Model | EN-EN | FR-EN | FR-FR |"), "{md}");
        assert!(md.contains("| Best mBERT | 0.71 | 0.41 | 0.66 |"), "{md}");
        assert!(md.contains("| Best XLM-RoBERTa | 0.43 | 0.55 | 0.27 |"), "{md}");
    }

    #[test]
    fn paper_shaped_variant_table() {
        let cols = ["5 epochs, 1e-4", "10 epochs, 3e-4", "15 epochs, 5e-5"];
        let mut reports = Vec::new();
        for (m, vals) in [("mBERT", [0.66, 0.67, 0.57]), ("XLM-RoBERTa", [0.62, 0.50, 0.62])] {
            for (c, v) in cols.iter().zip(vals) {
                reports.push(report(&format!("{m}{c}"), m, c, "en-fr", v, v));
            }
        }
        let tables = build_tables(&reports).unwrap();
        assert_eq!(tables[0].rows.len(), 2);
        assert_eq!(tables[0].columns, cols);
        let text = render_tables(&tables, ReportFormat::Text);
        assert!(text.contains("Epochs, Learning rates (macro avg.)"));
        assert!(text.contains("Model (EN-FR)"));
        let md = render_tables(&tables, ReportFormat::Markdown);
        assert!(md.contains("| mBERT | 0.66 | 0.67 | 0.57 |"), "{md}");
    }

    #[test]
    fn single_report_table_and_formats() {
        let tables = build_tables(&[report("r", "stub-32", "v", "en-en", 2.0 / 3.0, 0.5)]).unwrap();
        assert_eq!((tables[0].rows.len(), tables[0].columns.len()), (1, 1));
        assert_eq!(tables[0].rows[0].values[0], Some(2.0 / 3.0));
        assert!(render_tables(&tables, ReportFormat::Text).contains("0.67"));
        assert!(render_tables(&tables, ReportFormat::Json).contains("0.6666666666666666"));
        assert!(matches!("html".parse::<ReportFormat>(), Err(Error::Usage(_))));
        assert!(build_tables(&[]).is_err());
    }

    #[test]
    fn rounding_half_up() {
        assert_eq!(round2(2.0 / 3.0), "0.67");
        assert_eq!(round2(0.125), "0.13");
        assert_eq!(round2(0.0), "0.00");
        assert_eq!(round2(1.0), "1.00");
    }

    proptest! {
        #[test]
        fn metrics_bounded_and_weighted_between(gold in proptest::collection::vec(0usize..2, 1..200), flip in proptest::collection::vec(any::<bool>(), 200)) {
            let g: Vec<Label> = gold.iter().map(|&i| Label::from_index(i).unwrap()).collect();
            let p: Vec<Label> = g.iter().zip(&flip).map(|(&l, &f)| if f { Label::from_index(1 - l.index()).unwrap() } else { l }).collect();
            let r = EvalReport::from_labels(&g, &p, pair("en-fr"), "x").unwrap();
            let f = [r.metrics.classes[0].f1, r.metrics.classes[1].f1];
            for v in [r.macro_avg_f1, r.weighted_avg_f1, r.accuracy, f[0], f[1]] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!(r.weighted_avg_f1 >= f[0].min(f[1]) - 1e-15 && r.weighted_avg_f1 <= f[0].max(f[1]) + 1e-15);
        }
    }
}
