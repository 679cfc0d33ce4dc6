use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::items::Direction;
use super::relation::{aggregate_mixed, parse_yesno, Aggregation, RelationItem, YesNo, YesNoKeywords};
use super::{EvalError, EvalReport, QaItem};
use crate::metrics::{
    bleu, confusion_metrics, entity_match, keyword_bleu1, ConfusionCounts, Smoothing, Stoplist, TokenizedText,
};

/// A raw model response bound to one prompt variant of one item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelAnswer {
    pub item_id: String,
    pub variant_index: u32,
    pub raw_text: String,
    /// Set when the completion could not be obtained; `raw_text` is empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Answers keyed by (item_id, variant_index).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnswerSet {
    answers: BTreeMap<(String, u32), ModelAnswer>,
    /// Number of answers replaced by a later one with the same key.
    pub duplicates: usize,
}

impl AnswerSet {
    /// Later answers with an already-seen key replace earlier ones.
    pub fn from_answers(answers: impl IntoIterator<Item = ModelAnswer>) -> Self {
        let mut set = AnswerSet::default();
        for a in answers {
            if set.answers.insert((a.item_id.clone(), a.variant_index), a).is_some() {
                set.duplicates += 1;
            }
        }
        set
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    pub fn get(&self, item_id: &str, variant: u32) -> Option<&ModelAnswer> {
        self.answers.get(&(item_id.to_string(), variant))
    }

    /// All answers in key order.
    pub fn iter(&self) -> impl Iterator<Item = &ModelAnswer> {
        self.answers.values()
    }

    fn of_item(&self, item_id: &str) -> Vec<&ModelAnswer> {
        self.answers
            .range((item_id.to_string(), 0)..=(item_id.to_string(), u32::MAX))
            .map(|(_, a)| a)
            .collect()
    }

    fn check_known<'a>(&self, ids: impl Iterator<Item = &'a str>) -> Result<(), EvalError> {
        let known: BTreeSet<&str> = ids.collect();
        let unknown: BTreeSet<String> = self
            .answers
            .keys()
            .filter(|(id, _)| !known.contains(id.as_str()))
            .map(|(id, _)| id.clone())
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(EvalError::UnknownItems(unknown.into_iter().collect()))
        }
    }
}

#[derive(Debug, Clone)]
pub struct QaScoring {
    pub max_n: usize,
    pub smoothing: Smoothing,
    pub stoplist: Stoplist,
}

impl Default for QaScoring {
    fn default() -> Self {
        QaScoring {
            max_n: 4,
            smoothing: Smoothing::AddOne,
            stoplist: Stoplist::default(),
        }
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// BLEU against the gold sentences, keyword BLEU-1 against the shortest gold
/// name and stem-token entity accuracy per direction. Each item needs exactly
/// one answer.
pub fn score_qa(items: &[QaItem], answers: &AnswerSet, scoring: &QaScoring) -> Result<EvalReport, EvalError> {
    answers.check_known(items.iter().map(|i| i.item_id.as_str()))?;
    let mut missing = Vec::new();
    let mut chosen = Vec::with_capacity(items.len());
    for item in items {
        let got = answers.of_item(&item.item_id);
        match got.as_slice() {
            [one] => chosen.push(*one),
            [] => missing.push(item.item_id.clone()),
            many => missing.push(format!("{} ({} answers, expected 1)", item.item_id, many.len())),
        }
    }
    if !missing.is_empty() {
        return Err(EvalError::MissingAnswers(missing));
    }

    let mut report = EvalReport::new(
        "qa",
        &[
            "item_id",
            "direction",
            "style",
            "bleu",
            "bleu1",
            "match",
            "indeterminate",
            "answer",
        ],
    );
    let mut bleus = Vec::new();
    let mut bleu1s = Vec::new();
    let mut acc_gp = Vec::new();
    let mut acc_pg = Vec::new();
    let (mut empty, mut indeterminate, mut errored) = (0u64, 0u64, 0u64);
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| items[a].item_id.cmp(&items[b].item_id));
    for i in order {
        let item = &items[i];
        let answer = chosen[i];
        if answer.error.is_some() {
            errored += 1;
        }
        let cand = TokenizedText::new(&answer.raw_text);
        let refs: Vec<TokenizedText> = item.gold_sentences.iter().map(|s| TokenizedText::new(s)).collect();
        let b = bleu(&cand, &refs, scoring.max_n, scoring.smoothing)?;
        if b.empty_candidate {
            empty += 1;
        }
        let b1 = keyword_bleu1(&cand, &TokenizedText::new(&item.keyword_reference))?;
        let m = entity_match(&answer.raw_text, &item.gold_entities, &scoring.stoplist)?;
        if m.indeterminate {
            indeterminate += 1;
        }
        let hit = if m.matched { 1.0 } else { 0.0 };
        match item.direction {
            Direction::GeneToPheno => acc_gp.push(hit),
            Direction::PhenoToGene => acc_pg.push(hit),
        }
        bleus.push(b.score);
        bleu1s.push(b1);
        report.rows.push(vec![
            item.item_id.clone(),
            item.direction.label().to_string(),
            item.style.label().to_string(),
            b.score.to_string(),
            b1.to_string(),
            m.matched.to_string(),
            m.indeterminate.to_string(),
            answer.raw_text.clone(),
        ]);
    }
    report.metrics.insert("BLEU".into(), mean(&bleus));
    report.metrics.insert("BLEU-1".into(), mean(&bleu1s));
    report.metrics.insert("Acc.(G-P)".into(), mean(&acc_gp));
    report.metrics.insert("Acc.(P-G)".into(), mean(&acc_pg));
    report.counts.insert("items".into(), items.len() as u64);
    report.counts.insert("items_g_p".into(), acc_gp.len() as u64);
    report.counts.insert("items_p_g".into(), acc_pg.len() as u64);
    report
        .counts
        .insert("matched_g_p".into(), acc_gp.iter().sum::<f64>() as u64);
    report
        .counts
        .insert("matched_p_g".into(), acc_pg.iter().sum::<f64>() as u64);
    report.counts.insert("empty_answers".into(), empty);
    report.counts.insert("indeterminate".into(), indeterminate);
    report.counts.insert("errored_answers".into(), errored);
    report.config.insert("max_n".into(), scoring.max_n.to_string());
    report.config.insert(
        "smoothing".into(),
        serde_json::to_value(scoring.smoothing)
            .unwrap()
            .as_str()
            .unwrap()
            .to_string(),
    );
    Ok(report)
}

/// Parses every variant's answer, aggregates per item with `mode`, and
/// tallies a confusion matrix with YES as the positive class. An
/// UNPARSEABLE prediction is wrong on whichever side the gold label is.
pub fn score_relation(
    items: &[RelationItem],
    answers: &AnswerSet,
    mode: Aggregation,
    keywords: &YesNoKeywords,
) -> Result<EvalReport, EvalError> {
    answers.check_known(items.iter().map(|i| i.item_id.as_str()))?;
    let mut missing = Vec::new();
    for item in items {
        for v in 0..item.prompt_variants.len() as u32 {
            if answers.get(&item.item_id, v).is_none() {
                missing.push(format!("{}#{v}", item.item_id));
            }
        }
    }
    if !missing.is_empty() {
        return Err(EvalError::MissingAnswers(missing));
    }

    let mut report = EvalReport::new(
        "relation",
        &["item_id", "gold", "variant_parses", "prediction", "correct"],
    );
    let mut counts = ConfusionCounts::default();
    let mut unparseable = 0u64;
    let mut order: Vec<&RelationItem> = items.iter().collect();
    order.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    for item in order {
        let parsed: Vec<YesNo> = answers
            .of_item(&item.item_id)
            .iter()
            .filter(|a| (a.variant_index as usize) < item.prompt_variants.len())
            .map(|a| {
                if a.error.is_some() {
                    YesNo::Unparseable
                } else {
                    parse_yesno(&a.raw_text, keywords)
                }
            })
            .collect();
        let pred = aggregate_mixed(&item.item_id, &parsed, item.gold, mode)?;
        let correct = pred == YesNo::from_bool(item.gold);
        match (pred, item.gold) {
            (YesNo::Yes, true) => counts.tp += 1,
            (YesNo::Yes, false) => counts.fp += 1,
            (YesNo::No, true) => counts.fn_ += 1,
            (YesNo::No, false) => counts.tn += 1,
            (YesNo::Unparseable, true) => {
                unparseable += 1;
                counts.fn_ += 1
            }
            (YesNo::Unparseable, false) => {
                unparseable += 1;
                counts.fp += 1
            }
        }
        report.rows.push(vec![
            item.item_id.clone(),
            YesNo::from_bool(item.gold).label().to_string(),
            parsed.iter().map(|p| p.label()).collect::<Vec<_>>().join(","),
            pred.label().to_string(),
            correct.to_string(),
        ]);
    }
    let m = confusion_metrics(&counts)?;
    report.metrics.insert("Precision".into(), Some(m.precision));
    report.metrics.insert("Recall".into(), Some(m.recall));
    report.metrics.insert("Accuracy".into(), Some(m.accuracy));
    report.metrics.insert("F1".into(), Some(m.f1));
    report.counts.insert("items".into(), items.len() as u64);
    report.counts.insert("tp".into(), counts.tp);
    report.counts.insert("fp".into(), counts.fp);
    report.counts.insert("fn".into(), counts.fn_);
    report.counts.insert("tn".into(), counts.tn);
    report.counts.insert("unparseable_predictions".into(), unparseable);
    report.config.insert("aggregation".into(), mode.label().to_string());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{Direction, Style};
    use crate::metrics::GoldEntity;

    fn answer(id: &str, v: u32, text: &str) -> ModelAnswer {
        ModelAnswer {
            item_id: id.into(),
            variant_index: v,
            raw_text: text.into(),
            error: None,
        }
    }

    fn qa(id: &str, direction: Direction, gold: &str) -> QaItem {
        QaItem {
            item_id: id.into(),
            direction,
            style: Style::Question,
            prompt_text: "q?".into(),
            gold_entities: vec![GoldEntity::new(gold)],
            keyword_reference: gold.into(),
            gold_sentences: vec![format!("{gold} is related to the thing.")],
        }
    }

    #[test]
    fn answer_set_last_wins() {
        let set = AnswerSet::from_answers([answer("a", 0, "x"), answer("a", 0, "y"), answer("b", 1, "z")]);
        assert_eq!(set.len(), 2);
        assert_eq!(set.duplicates, 1);
        assert_eq!(set.get("a", 0).unwrap().raw_text, "y");
    }

    #[test]
    fn echo_answers_score_perfectly() {
        let items = vec![
            qa("1", Direction::PhenoToGene, "APP"),
            qa("2", Direction::GeneToPheno, "Alzheimer disease"),
        ];
        let answers = AnswerSet::from_answers(items.iter().map(|i| answer(&i.item_id, 0, &i.gold_sentences[0])));
        let r = score_qa(&items, &answers, &QaScoring::default()).unwrap();
        assert_eq!(r.metric("BLEU"), Some(1.0));
        assert_eq!(r.metric("Acc.(G-P)"), Some(1.0));
        assert_eq!(r.metric("Acc.(P-G)"), Some(1.0));
        assert_eq!(r.rows.len(), 2);
    }

    #[test]
    fn missing_and_unknown_answers_are_errors() {
        let items = vec![
            qa("1", Direction::PhenoToGene, "APP"),
            qa("2", Direction::PhenoToGene, "APP"),
        ];
        let only_one = AnswerSet::from_answers([answer("1", 0, "x")]);
        match score_qa(&items, &only_one, &QaScoring::default()) {
            Err(EvalError::MissingAnswers(ids)) => assert_eq!(ids, ["2"]),
            other => panic!("{other:?}"),
        }
        let stray = AnswerSet::from_answers([answer("1", 0, "x"), answer("2", 0, "x"), answer("9", 0, "x")]);
        assert!(matches!(
            score_qa(&items, &stray, &QaScoring::default()),
            Err(EvalError::UnknownItems(_))
        ));
    }

    fn rel(id: &str, gold: bool, k: usize) -> RelationItem {
        RelationItem {
            item_id: id.into(),
            gene: "G".into(),
            disease: "D".into(),
            evidence: "e".into(),
            gold,
            prompt_variants: vec!["p".into(); k],
        }
    }

    #[test]
    fn relation_confusion_and_unparseable_rule() {
        let items = vec![
            rel("a", true, 1),
            rel("b", false, 1),
            rel("c", true, 1),
            rel("d", false, 1),
        ];
        let answers = AnswerSet::from_answers([
            answer("a", 0, "Yes"),
            answer("b", 0, "yes"),
            answer("c", 0, "unclear"),
            answer("d", 0, "No"),
        ]);
        let r = score_relation(&items, &answers, Aggregation::OracleBest, &YesNoKeywords::default()).unwrap();
        assert_eq!(r.counts["tp"], 1);
        assert_eq!(r.counts["fp"], 1);
        assert_eq!(r.counts["fn"], 1);
        assert_eq!(r.counts["tn"], 1);
        assert_eq!(r.counts["unparseable_predictions"], 1);
        assert_eq!(r.metric("F1"), Some(0.5));
        assert_eq!(r.config["aggregation"], "ORACLE_BEST");
    }

    #[test]
    fn relation_requires_every_variant() {
        let items = vec![rel("a", true, 2)];
        let answers = AnswerSet::from_answers([answer("a", 0, "Yes")]);
        match score_relation(&items, &answers, Aggregation::Majority, &YesNoKeywords::default()) {
            Err(EvalError::MissingAnswers(ids)) => assert_eq!(ids, ["a#1"]),
            other => panic!("{other:?}"),
        }
    }
}
