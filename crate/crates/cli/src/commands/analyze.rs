use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use mtaf::evalpipe::read_aggregation_report;
use mtaf::metrics::UtteranceMetrics;
use mtaf::stats::{
    anova_one_way, anova_two_way, spearman, tukey_hsd, AnovaTable, Correlation, StatsError, TukeyResult,
};
use serde::{Deserialize, Serialize};

use crate::config::variant_name;
use crate::data::{read_jsonl, write_json, GenerationRecord};
use crate::error::{CliError, Result};
use crate::manifest::Manifest;

#[derive(Debug, Clone, clap::Args)]
pub struct AnalyzeArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub generations: Vec<PathBuf>,
    #[arg(long, required = true, num_args = 1..)]
    pub metrics: Vec<PathBuf>,
    /// Aggregation report from `aggregate`.
    #[arg(long)]
    pub aggregated: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

/// One utterance of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub utterance_id: String,
    pub model: String,
    pub variant: String,
    pub plan: String,
    pub affect: String,
    pub bleu: f64,
    pub typicality: Option<f64>,
    pub offensiveness: Option<f64>,
    pub forwardness: Option<f64>,
    pub affect_rating: Option<f64>,
}

pub const MEASURES: [&str; 4] = ["typicality", "offensiveness", "forwardness", "affect"];

impl ResultRow {
    fn measure(&self, name: &str) -> Option<f64> {
        match name {
            "typicality" => self.typicality,
            "offensiveness" => self.offensiveness,
            "forwardness" => self.forwardness,
            "affect" => self.affect_rating,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TukeyReport {
    /// Group labels; pair indices refer to this list.
    pub groups: Vec<String>,
    pub result: TukeyResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureAnalysis {
    pub measure: String,
    pub n: usize,
    /// `two-way` over variant x plan, or `one-way` over `factor`.
    pub design: String,
    pub factor: Option<String>,
    pub anova: Option<AnovaTable>,
    pub tukey: Option<TukeyReport>,
    pub group_means: BTreeMap<String, f64>,
    pub bleu_spearman: Option<Correlation>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub n_utterances: usize,
    pub models: Vec<String>,
    pub variants: Vec<String>,
    pub plans: Vec<String>,
    pub alpha: f64,
    pub measures: Vec<MeasureAnalysis>,
}

pub fn run(args: &AnalyzeArgs) -> Result<AnalysisReport> {
    let gens: Vec<&Path> = args.generations.iter().map(PathBuf::as_path).collect();
    let mets: Vec<&Path> = args.metrics.iter().map(PathBuf::as_path).collect();
    analyze_files(&gens, &mets, &args.aggregated, args.alpha, &args.out)
}

/// Joins generation provenance, BLEU and aggregated ratings by utterance id.
/// Utterances without aggregated ratings (deficit list) are left out.
pub fn join(generations: &[&Path], metrics: &[&Path], aggregated: &Path) -> Result<Vec<ResultRow>> {
    let mut bleu = BTreeMap::new();
    for p in metrics {
        for m in read_jsonl::<UtteranceMetrics>(p)? {
            bleu.insert(m.utterance_id, m.bleu);
        }
    }
    let f = fs::File::open(aggregated).map_err(|e| CliError::io(aggregated, e))?;
    let ratings: BTreeMap<String, _> = read_aggregation_report(BufReader::new(f))
        .map_err(|e| CliError::from(e).at(aggregated))?
        .into_iter()
        .filter(|l| l.typicality.is_some())
        .map(|l| (l.utterance_id.clone(), l))
        .collect();
    let mut rows = Vec::new();
    for p in generations {
        for g in read_jsonl::<GenerationRecord>(p)? {
            let Some(r) = ratings.get(&g.id) else { continue };
            let b = *bleu
                .get(&g.id)
                .ok_or_else(|| CliError::Data(format!("no metric record for {}", g.id)))?;
            rows.push(ResultRow {
                utterance_id: g.id,
                model: g.model,
                variant: variant_name(g.variant).into(),
                plan: g.plan.as_str().into(),
                affect: g.affect.as_str().into(),
                bleu: b,
                typicality: r.typicality,
                offensiveness: r.offensiveness,
                forwardness: r.forwardness,
                affect_rating: r.affect,
            });
        }
    }
    Ok(rows)
}

fn levels<'a>(rows: &'a [ResultRow], f: impl Fn(&'a ResultRow) -> &'a str) -> Vec<String> {
    let set: BTreeSet<&str> = rows.iter().map(f).collect();
    set.into_iter().map(str::to_string).collect()
}

fn grouped(rows: &[(&ResultRow, f64)], key: impl Fn(&ResultRow) -> String) -> BTreeMap<String, Vec<f64>> {
    let mut g: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (r, v) in rows {
        g.entry(key(r)).or_default().push(*v);
    }
    g
}

fn rename_effects(mut t: AnovaTable) -> AnovaTable {
    for e in &mut t.effects {
        e.name = match e.name.as_str() {
            "a" => "variant".into(),
            "b" => "plan".into(),
            "a:b" => "variant:plan".into(),
            other => other.into(),
        };
    }
    t
}

/// Two-way ANOVA over variant x plan when both factors have two or more
/// levels; otherwise a one-way ANOVA over the factor that varies (or over
/// affect targets if neither does), with a note saying why. Tukey compares
/// the same groups the ANOVA is built on: models in the two-way case.
pub fn analyze_measure(
    rows: &[ResultRow],
    measure: &str,
    alpha: f64,
) -> std::result::Result<MeasureAnalysis, StatsError> {
    let data: Vec<(&ResultRow, f64)> = rows.iter().filter_map(|r| r.measure(measure).map(|v| (r, v))).collect();
    let variants = levels(rows, |r| &r.variant);
    let plans = levels(rows, |r| &r.plan);
    let mut notes = Vec::new();
    let (design, factor, anova, groups) = if variants.len() >= 2 && plans.len() >= 2 {
        let values: Vec<f64> = data.iter().map(|(_, v)| *v).collect();
        let a: Vec<&str> = data.iter().map(|(r, _)| r.variant.as_str()).collect();
        let b: Vec<&str> = data.iter().map(|(r, _)| r.plan.as_str()).collect();
        let table = rename_effects(anova_two_way(&values, &a, &b)?);
        ("two-way", None, table, grouped(&data, |r| r.model.clone()))
    } else {
        let (factor, groups) = if variants.len() >= 2 {
            ("variant", grouped(&data, |r| r.variant.clone()))
        } else if plans.len() >= 2 {
            ("plan", grouped(&data, |r| r.plan.clone()))
        } else {
            ("affect", grouped(&data, |r| r.affect.clone()))
        };
        let single: Vec<&str> = [("variant", &variants), ("plan", &plans)]
            .iter()
            .filter(|(_, l)| l.len() < 2)
            .map(|(n, _)| *n)
            .collect();
        notes.push(format!(
            "single-level factor ({}): two-way ANOVA refused, one-way over {factor}",
            single.join(", ")
        ));
        let vals: Vec<Vec<f64>> = groups.values().cloned().collect();
        ("one-way", Some(factor.to_string()), anova_one_way(&vals)?, groups)
    };
    let names: Vec<String> = groups.keys().cloned().collect();
    let vals: Vec<Vec<f64>> = groups.values().cloned().collect();
    let tukey = tukey_hsd(&vals, alpha)?;
    let group_means = groups
        .iter()
        .map(|(k, v)| (k.clone(), v.iter().sum::<f64>() / v.len() as f64))
        .collect();
    let xs: Vec<f64> = data.iter().map(|(r, _)| r.bleu).collect();
    let ys: Vec<f64> = data.iter().map(|(_, v)| *v).collect();
    let bleu_spearman = match spearman(&xs, &ys) {
        Ok(c) => Some(c),
        Err(e) => {
            notes.push(format!("bleu correlation: {e}"));
            None
        }
    };
    Ok(MeasureAnalysis {
        measure: measure.into(),
        n: data.len(),
        design: design.into(),
        factor,
        anova: Some(anova),
        tukey: Some(TukeyReport {
            groups: names,
            result: tukey,
        }),
        group_means,
        bleu_spearman,
        notes,
    })
}

/// Typicality is the primary measure and its failure fails the command;
/// failures on the other measures are recorded as notes.
pub fn analyze_rows(rows: &[ResultRow], alpha: f64) -> Result<AnalysisReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::Usage(format!("alpha = {alpha} outside (0, 1)")));
    }
    if rows.is_empty() {
        return Err(CliError::Data("results table is empty".into()));
    }
    let mut measures = Vec::new();
    for (i, &m) in MEASURES.iter().enumerate() {
        match analyze_measure(rows, m, alpha) {
            Ok(a) => measures.push(a),
            Err(e) if i == 0 => return Err(CliError::from(e)),
            Err(e) => measures.push(MeasureAnalysis {
                measure: m.into(),
                n: rows.iter().filter(|r| r.measure(m).is_some()).count(),
                design: "none".into(),
                factor: None,
                anova: None,
                tukey: None,
                group_means: BTreeMap::new(),
                bleu_spearman: None,
                notes: vec![format!("analysis failed: {e}")],
            }),
        }
    }
    Ok(AnalysisReport {
        n_utterances: rows.len(),
        models: levels(rows, |r| &r.model),
        variants: levels(rows, |r| &r.variant),
        plans: levels(rows, |r| &r.plan),
        alpha,
        measures,
    })
}

pub fn analyze_files(
    generations: &[&Path],
    metrics: &[&Path],
    aggregated: &Path,
    alpha: f64,
    out: &Path,
) -> Result<AnalysisReport> {
    let rows = join(generations, metrics, aggregated)?;
    let report = analyze_rows(&rows, alpha)?;
    crate::data::create(out)?;
    write_json(out, &report)?;
    let mut ins: Vec<&Path> = generations.iter().chain(metrics).copied().collect();
    ins.push(aggregated);
    let mut m = Manifest::new("analyze");
    m.param("alpha", alpha).param("rows", rows.len());
    m.write(out, &ins, &[out])?;
    eprintln!("analysis of {} utterances written to {}", rows.len(), out.display());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(model: (&str, &str), affect: &str, i: usize, t: f64) -> ResultRow {
        ResultRow {
            utterance_id: format!("{}.{}/{affect}/{i}", model.0, model.1),
            model: format!("{}.{}", model.0, model.1),
            variant: model.0.into(),
            plan: model.1.into(),
            affect: affect.into(),
            bleu: i as f64 * 0.1,
            typicality: Some(t),
            offensiveness: None,
            forwardness: Some(3.0),
            affect_rating: Some(t - 2.0),
        }
    }

    #[test]
    fn grid_takes_two_way_path() {
        let mut rows = Vec::new();
        for (k, m) in [
            ("lm_only", "rdg"),
            ("lm_only", "ed-rdg"),
            ("multitask", "rdg"),
            ("multitask", "ed-rdg"),
        ]
        .into_iter()
        .enumerate()
        {
            for i in 0..4 {
                rows.push(row(m, "excited", i, 1.0 + k as f64 + (i % 2) as f64));
            }
        }
        let r = analyze_rows(&rows, 0.05).unwrap();
        let t = &r.measures[0];
        assert_eq!(t.design, "two-way");
        let names: Vec<&str> = t
            .anova
            .as_ref()
            .unwrap()
            .effects
            .iter()
            .map(|e| e.name.as_str())
            .collect();
        assert_eq!(names, ["variant", "plan", "variant:plan"]);
        assert_eq!(t.tukey.as_ref().unwrap().result.pairs.len(), 6);
        // offensiveness is absent everywhere; the failure becomes a note
        assert_eq!(r.measures[1].design, "none");
        // forwardness is constant: zero residual variance, noted
        assert!(r.measures[2].notes[0].contains("zero residual variance"));
    }

    #[test]
    fn single_model_takes_one_way_path() {
        let rows: Vec<ResultRow> = ["excited", "indifferent", "impatient"]
            .iter()
            .enumerate()
            .flat_map(|(k, a)| (0..3).map(move |i| row(("multitask", "rdg"), a, i, k as f64 + i as f64 * 0.5)))
            .collect();
        let r = analyze_rows(&rows, 0.05).unwrap();
        let t = &r.measures[0];
        assert_eq!(t.design, "one-way");
        assert_eq!(t.factor.as_deref(), Some("affect"));
        assert!(t.notes[0].contains("single-level factor"), "{:?}", t.notes);
        assert_eq!(t.tukey.as_ref().unwrap().groups.len(), 3);
    }
}
