//! Effect-size screening and interaction features.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Answers, Feature, ValueKind};

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("`{0}` is constant; association is undefined")]
    Constant(String),
    #[error("group `{0}` is empty")]
    EmptyGroup(&'static str),
    #[error("length mismatch: {0} values vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("operand `{0}` of an OR interaction is not binary")]
    NonBinaryOr(String),
    #[error("AND interaction of two numeric features `{0}` and `{1}` is not supported")]
    NumericPair(String, String),
    #[error("interaction operands must differ (`{0}`)")]
    SameOperand(String),
    #[error("unknown term `{0}`")]
    UnknownTerm(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InteractionOp {
    And,
    Or,
}

impl InteractionOp {
    pub fn keyword(self) -> &'static str {
        match self {
            InteractionOp::And => "AND",
            InteractionOp::Or => "OR",
        }
    }
}

/// A model input: a base questionnaire feature, a pairwise interaction, or the
/// count of reported symptoms. Interaction operands are stored in canonical
/// column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Term {
    Base(Feature),
    And(Feature, Feature),
    Or(Feature, Feature),
    SumOfSymptoms,
}

impl Term {
    pub fn interaction(op: InteractionOp, a: Feature, b: Feature) -> Result<Term, FeatureError> {
        if a == b {
            return Err(FeatureError::SameOperand(a.name().into()));
        }
        let (l, r) = if a < b { (a, b) } else { (b, a) };
        match op {
            InteractionOp::And => {
                if !l.is_binary() && !r.is_binary() {
                    return Err(FeatureError::NumericPair(l.name().into(), r.name().into()));
                }
                Ok(Term::And(l, r))
            }
            InteractionOp::Or => {
                for f in [l, r] {
                    if !f.is_binary() {
                        return Err(FeatureError::NonBinaryOr(f.name().into()));
                    }
                }
                Ok(Term::Or(l, r))
            }
        }
    }

    /// Base features this term reads.
    pub fn operands(&self) -> Vec<Feature> {
        match *self {
            Term::Base(f) => vec![f],
            Term::And(a, b) | Term::Or(a, b) => vec![a, b],
            Term::SumOfSymptoms => Feature::SYMPTOMS.to_vec(),
        }
    }

    pub fn kind(&self) -> ValueKind {
        match *self {
            Term::Base(f) => f.kind(),
            Term::And(a, b) if a.is_binary() && b.is_binary() => ValueKind::Binary,
            Term::And(..) => ValueKind::Numeric,
            Term::Or(..) => ValueKind::Binary,
            Term::SumOfSymptoms => ValueKind::Numeric,
        }
    }

    pub fn name(&self) -> String {
        self.to_string()
    }

    /// Value of the term for one questionnaire. Interactions of a missing
    /// operand are missing; a missing contact answer counts as "no".
    pub fn evaluate(&self, a: &Answers) -> Option<f64> {
        match *self {
            Term::Base(f) => a.value(f),
            Term::And(l, r) => {
                let (x, y) = (a.value(l)?, a.value(r)?);
                Some(and_value(l.kind(), x, r.kind(), y))
            }
            Term::Or(l, r) => {
                let (x, y) = (a.value(l)?, a.value(r)?);
                Some(f64::from(u8::from(x > 0.5 || y > 0.5)))
            }
            Term::SumOfSymptoms => Some(f64::from(sum_of_symptoms(a, &[]))),
        }
    }
}

/// Binary AND is the conjunction; numeric AND binary is the numeric value
/// masked by the indicator.
fn and_value(lk: ValueKind, x: f64, rk: ValueKind, y: f64) -> f64 {
    match (lk, rk) {
        (ValueKind::Binary, ValueKind::Binary) => f64::from(u8::from(x > 0.5 && y > 0.5)),
        (ValueKind::Numeric, ValueKind::Binary) => {
            if y > 0.5 {
                x
            } else {
                0.0
            }
        }
        (ValueKind::Binary, ValueKind::Numeric) => {
            if x > 0.5 {
                y
            } else {
                0.0
            }
        }
        (ValueKind::Numeric, ValueKind::Numeric) => x * y,
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Base(x) => f.write_str(x.name()),
            Term::And(a, b) => write!(f, "{} AND {}", a.name(), b.name()),
            Term::Or(a, b) => write!(f, "{} OR {}", a.name(), b.name()),
            Term::SumOfSymptoms => f.write_str("sum_of_symptoms"),
        }
    }
}

impl FromStr for Term {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || FeatureError::UnknownTerm(s.to_string());
        if s == "sum_of_symptoms" {
            return Ok(Term::SumOfSymptoms);
        }
        for op in [InteractionOp::And, InteractionOp::Or] {
            let sep = format!(" {} ", op.keyword());
            if let Some((l, r)) = s.split_once(&sep) {
                let l: Feature = l.parse().map_err(|_| unknown())?;
                let r: Feature = r.parse().map_err(|_| unknown())?;
                if l >= r {
                    // Names must use canonical operand order.
                    return Err(unknown());
                }
                return Term::interaction(op, l, r);
            }
        }
        s.parse::<Feature>().map(Term::Base).map_err(|_| unknown())
    }
}

impl TryFrom<String> for Term {
    type Error = FeatureError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Term> for String {
    fn from(t: Term) -> String {
        t.to_string()
    }
}

/// All eligible pairwise interactions over `features` (in canonical order).
/// Pairs the operator does not support are skipped.
pub fn interaction_terms(features: &[Feature], op: InteractionOp) -> Vec<Term> {
    let mut sorted = features.to_vec();
    sorted.sort();
    sorted.dedup();
    let mut out = Vec::new();
    for i in 0..sorted.len() {
        for j in i + 1..sorted.len() {
            if let Ok(t) = Term::interaction(op, sorted[i], sorted[j]) {
                out.push(t);
            }
        }
    }
    out
}

/// Number of "yes" answers among the nine questionnaire symptoms plus up to
/// two caller-supplied symptom answers. Missing answers count as "no".
pub fn sum_of_symptoms(a: &Answers, extra: &[Option<bool>]) -> u32 {
    let base = Feature::SYMPTOMS
        .iter()
        .filter(|&&f| a.tri_state(f).flatten() == Some(true))
        .count();
    let extra = extra.iter().take(2).filter(|v| **v == Some(true)).count();
    (base + extra) as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectKind {
    CramersV,
    RankBiserial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSize {
    pub feature: String,
    pub kind: EffectKind,
    pub value: f64,
}

fn check_len(n: usize, m: usize) -> Result<(), FeatureError> {
    if n != m {
        return Err(FeatureError::LengthMismatch(n, m));
    }
    Ok(())
}

/// Cramér's V of a contingency table (rows = categories, columns = classes),
/// using Pearson's chi-square without continuity correction. Empty rows and
/// columns are ignored.
pub fn cramers_v_table(table: &[Vec<f64>]) -> Result<f64, FeatureError> {
    let rows: Vec<&Vec<f64>> = table.iter().filter(|r| r.iter().sum::<f64>() > 0.0).collect();
    let ncol = rows.first().map_or(0, |r| r.len());
    let col_sums: Vec<f64> = (0..ncol).map(|j| rows.iter().map(|r| r[j]).sum()).collect();
    let cols: Vec<usize> = (0..ncol).filter(|&j| col_sums[j] > 0.0).collect();
    if rows.len() < 2 {
        return Err(FeatureError::Constant("categories".into()));
    }
    if cols.len() < 2 {
        return Err(FeatureError::Constant("labels".into()));
    }
    let n: f64 = col_sums.iter().sum();
    let mut chi2 = 0.0;
    for r in &rows {
        let row_sum: f64 = r.iter().sum();
        for &j in &cols {
            let expected = row_sum * col_sums[j] / n;
            chi2 += (r[j] - expected).powi(2) / expected;
        }
    }
    let k = (rows.len() - 1).min(cols.len() - 1) as f64;
    Ok((chi2 / (n * k)).sqrt())
}

/// Cramér's V between a categorical column and binary labels; pairs with a
/// missing category are dropped.
pub fn cramers_v(x: &[Option<u32>], y: &[bool]) -> Result<f64, FeatureError> {
    check_len(x.len(), y.len())?;
    let mut cats: Vec<u32> = x.iter().flatten().copied().collect();
    cats.sort_unstable();
    cats.dedup();
    let mut table = vec![vec![0.0; 2]; cats.len()];
    for (v, &label) in x.iter().zip(y) {
        if let Some(v) = v {
            let row = cats.binary_search(v).expect("category collected above");
            table[row][usize::from(label)] += 1.0;
        }
    }
    cramers_v_table(&table)
}

/// Midranks (1-based) of `values`.
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Rank-biserial correlation `1 - 2U/(n_pos * n_neg)`, where `U` is the
/// Mann-Whitney statistic of the negative group (midranks for ties). Positive
/// when the positive group tends to have larger values.
pub fn rank_biserial(x: &[Option<f64>], y: &[bool]) -> Result<f64, FeatureError> {
    check_len(x.len(), y.len())?;
    let pairs: Vec<(f64, bool)> = x.iter().zip(y).filter_map(|(v, &l)| v.map(|v| (v, l))).collect();
    let n_pos = pairs.iter().filter(|p| p.1).count();
    let n_neg = pairs.len() - n_pos;
    if n_pos == 0 {
        return Err(FeatureError::EmptyGroup("positive"));
    }
    if n_neg == 0 {
        return Err(FeatureError::EmptyGroup("negative"));
    }
    let values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ranks = midranks(&values);
    let rank_sum_neg: f64 = pairs.iter().zip(&ranks).filter(|(p, _)| !p.1).map(|(_, r)| r).sum();
    let n_neg_f = n_neg as f64;
    let u_neg = rank_sum_neg - n_neg_f * (n_neg_f + 1.0) / 2.0;
    Ok(1.0 - 2.0 * u_neg / (n_pos as f64 * n_neg_f))
}

/// Effect size of one base feature against the labels: Cramér's V for binary
/// features, rank-biserial correlation for numeric ones.
pub fn effect_size(feature: Feature, answers: &[&Answers], labels: &[bool]) -> Result<EffectSize, FeatureError> {
    check_len(answers.len(), labels.len())?;
    let (kind, value) = match feature.kind() {
        ValueKind::Binary => {
            let x: Vec<Option<u32>> = answers.iter().map(|a| a.value(feature).map(|v| v as u32)).collect();
            (
                EffectKind::CramersV,
                cramers_v(&x, labels).map_err(|_| FeatureError::Constant(feature.name().into()))?,
            )
        }
        ValueKind::Numeric => {
            let x: Vec<Option<f64>> = answers.iter().map(|a| a.value(feature)).collect();
            (EffectKind::RankBiserial, rank_biserial(&x, labels)?)
        }
    };
    Ok(EffectSize {
        feature: feature.name().into(),
        kind,
        value,
    })
}

/// Names of features with at least a small effect: `V >= v_min` or
/// `|r| >= r_min`.
pub fn filter_small_effect(sizes: &[EffectSize], v_min: f64, r_min: f64) -> Vec<String> {
    sizes
        .iter()
        .filter(|e| match e.kind {
            EffectKind::CramersV => e.value >= v_min,
            EffectKind::RankBiserial => e.value.abs() >= r_min,
        })
        .map(|e| e.feature.clone())
        .collect()
}

/// A named column of optional values.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub kind: ValueKind,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureMatrix {
    pub columns: Vec<Column>,
}

impl FeatureMatrix {
    pub fn from_terms(terms: &[Term], answers: &[&Answers]) -> FeatureMatrix {
        FeatureMatrix {
            columns: terms
                .iter()
                .map(|t| Column {
                    name: t.name(),
                    kind: t.kind(),
                    values: answers.iter().map(|a| t.evaluate(a)).collect(),
                })
                .collect(),
        }
    }
}

/// Appends every pairwise interaction of the input columns, named
/// `"<left> AND <right>"` / `"<left> OR <right>"` in input column order.
///
/// OR requires all columns to be binary; AND accepts binary x binary and
/// numeric x binary pairs.
pub fn build_interactions(m: &FeatureMatrix, op: InteractionOp) -> Result<FeatureMatrix, FeatureError> {
    let cols = &m.columns;
    if op == InteractionOp::Or {
        if let Some(c) = cols.iter().find(|c| c.kind != ValueKind::Binary) {
            return Err(FeatureError::NonBinaryOr(c.name.clone()));
        }
    }
    let mut out = m.clone();
    for i in 0..cols.len() {
        for j in i + 1..cols.len() {
            let (l, r) = (&cols[i], &cols[j]);
            if op == InteractionOp::And && l.kind == ValueKind::Numeric && r.kind == ValueKind::Numeric {
                return Err(FeatureError::NumericPair(l.name.clone(), r.name.clone()));
            }
            let values = l
                .values
                .iter()
                .zip(&r.values)
                .map(|(x, y)| {
                    let (x, y) = ((*x)?, (*y)?);
                    Some(match op {
                        InteractionOp::And => and_value(l.kind, x, r.kind, y),
                        InteractionOp::Or => f64::from(u8::from(x > 0.5 || y > 0.5)),
                    })
                })
                .collect();
            let kind = match op {
                InteractionOp::Or => ValueKind::Binary,
                InteractionOp::And if l.kind == ValueKind::Binary && r.kind == ValueKind::Binary => ValueKind::Binary,
                InteractionOp::And => ValueKind::Numeric,
            };
            out.columns.push(Column {
                name: format!("{} {} {}", l.name, op.keyword(), r.name),
                kind,
                values,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn cramers_v_examples() {
        assert!(close(
            cramers_v_table(&[vec![10.0, 0.0], vec![0.0, 10.0]]).unwrap(),
            1.0
        ));
        assert!(close(cramers_v_table(&[vec![5.0, 5.0], vec![5.0, 5.0]]).unwrap(), 0.0));
        // chi2 = n(ad-bc)^2 / ((a+b)(c+d)(a+c)(b+d)) = 20*60^2/10^4 = 7.2
        assert!(close(cramers_v_table(&[vec![8.0, 2.0], vec![2.0, 8.0]]).unwrap(), 0.6));
    }

    #[test]
    fn cramers_v_constant_column() {
        let x = vec![Some(1); 6];
        let y = vec![true, false, true, false, true, false];
        assert!(cramers_v(&x, &y).is_err());
    }

    #[test]
    fn rank_biserial_examples() {
        let some = |v: &[f64]| v.iter().map(|&x| Some(x)).collect::<Vec<_>>();
        let x = some(&[4.0, 5.0, 6.0, 1.0, 2.0, 3.0]);
        let y = [true, true, true, false, false, false];
        assert!(close(rank_biserial(&x, &y).unwrap(), 1.0));

        let x = some(&[1.0, 2.0, 1.0, 2.0]);
        let y = [true, true, false, false];
        assert!(close(rank_biserial(&x, &y).unwrap(), 0.0));

        // positives {3,1} vs negative {2}: one win, one loss.
        let x = some(&[3.0, 1.0, 2.0]);
        let y = [true, true, false];
        assert!(close(rank_biserial(&x, &y).unwrap(), 0.0));

        assert_eq!(
            rank_biserial(&some(&[1.0]), &[true]),
            Err(FeatureError::EmptyGroup("negative"))
        );
    }

    #[test]
    fn small_effect_filter() {
        let e = |name: &str, kind, value| EffectSize {
            feature: name.into(),
            kind,
            value,
        };
        let sizes = [
            e("a", EffectKind::CramersV, 0.6),
            e("b", EffectKind::CramersV, 0.0),
            e("c", EffectKind::RankBiserial, -0.15),
            e("d", EffectKind::RankBiserial, 0.05),
        ];
        assert_eq!(filter_small_effect(&sizes, 0.1, 0.1), vec!["a", "c"]);
    }

    #[test]
    fn interaction_values() {
        let a = Answers {
            temp_gt_38: Some(true),
            dyspnoea: Some(true),
            days_of_symptoms: Some(5),
            loss_of_smell_taste: Some(true),
            cough: Some(false),
            contact_with_infected: Some(true),
            ..Default::default()
        };
        let t = |s: &str| s.parse::<Term>().unwrap();
        assert_eq!(t("temp_gt_38 AND dyspnoea").evaluate(&a), Some(1.0));
        assert_eq!(t("days_of_symptoms AND loss_of_smell_taste").evaluate(&a), Some(5.0));
        let mut b = a.clone();
        b.loss_of_smell_taste = Some(false);
        assert_eq!(t("days_of_symptoms AND loss_of_smell_taste").evaluate(&b), Some(0.0));
        assert_eq!(t("contact_with_infected OR cough").evaluate(&a), Some(1.0));
        b.contact_with_infected = None;
        assert_eq!(t("contact_with_infected OR cough").evaluate(&b), Some(0.0));
        b.cough = None;
        assert_eq!(t("contact_with_infected OR cough").evaluate(&b), None);
    }

    #[test]
    fn names_use_canonical_order() {
        let t = Term::interaction(
            InteractionOp::And,
            Feature::LossOfSmellTaste,
            Feature::ContactWithInfected,
        )
        .unwrap();
        assert_eq!(t.name(), "contact_with_infected AND loss_of_smell_taste");
        assert!("loss_of_smell_taste AND contact_with_infected".parse::<Term>().is_err());
        assert_eq!(
            serde_json::to_string(&Term::Or(Feature::Cough, Feature::LossOfSmellTaste)).unwrap(),
            "\"cough OR loss_of_smell_taste\""
        );
        assert!(Term::interaction(InteractionOp::Or, Feature::Age, Feature::Cough).is_err());
        assert!(Term::interaction(InteractionOp::And, Feature::Age, Feature::DaysOfSymptoms).is_err());
        assert!(Term::interaction(InteractionOp::And, Feature::Cough, Feature::Cough).is_err());
    }

    #[test]
    fn or_rejects_numeric_columns() {
        let m = FeatureMatrix::from_terms(
            &[Term::Base(Feature::Cough), Term::Base(Feature::Age)],
            &[&Answers::default()],
        );
        assert_eq!(
            build_interactions(&m, InteractionOp::Or),
            Err(FeatureError::NonBinaryOr("age".into()))
        );
        let and = build_interactions(&m, InteractionOp::And).unwrap();
        assert_eq!(and.columns.last().unwrap().name, "cough AND age");
    }

    #[test]
    fn symptom_counts() {
        let mut a = Answers::default();
        assert_eq!(sum_of_symptoms(&a, &[]), 0);
        a.cough = Some(true);
        a.headache = Some(true);
        a.dizziness = Some(false);
        assert_eq!(sum_of_symptoms(&a, &[None, Some(false)]), 2);
        for f in Feature::SYMPTOMS {
            *a.tri_state_mut(f).unwrap() = Some(true);
        }
        assert_eq!(sum_of_symptoms(&a, &[Some(true), Some(true)]), 11);
    }

    fn arb_binary_column() -> impl Strategy<Value = Vec<Option<f64>>> {
        proptest::collection::vec(prop_oneof![Just(None), Just(Some(0.0)), Just(Some(1.0))], 12)
    }

    proptest! {
        #[test]
        fn interaction_bounds(cols in proptest::collection::vec(arb_binary_column(), 2..6)) {
            let n = cols.len();
            let m = FeatureMatrix {
                columns: cols
                    .into_iter()
                    .enumerate()
                    .map(|(i, values)| Column { name: format!("f{i}"), kind: ValueKind::Binary, values })
                    .collect(),
            };
            for op in [InteractionOp::And, InteractionOp::Or] {
                let out = build_interactions(&m, op).unwrap();
                prop_assert_eq!(out.columns.len() - n, n * (n - 1) / 2);
                let mut k = n;
                for i in 0..n {
                    for j in i + 1..n {
                        for row in 0..12 {
                            if let (Some(x), Some(y), Some(v)) = (
                                m.columns[i].values[row],
                                m.columns[j].values[row],
                                out.columns[k].values[row],
                            ) {
                                match op {
                                    InteractionOp::And => prop_assert!(v <= x && v <= y),
                                    InteractionOp::Or => prop_assert!(v >= x && v >= y),
                                }
                            } else {
                                prop_assert!(out.columns[k].values[row].is_none());
                            }
                        }
                        k += 1;
                    }
                }
            }
        }

        #[test]
        fn cramers_v_symmetric(a in 0u32..30, b in 0u32..30, c in 0u32..30, d in 0u32..30) {
            let t = vec![vec![a as f64, b as f64], vec![c as f64, d as f64]];
            let swapped_rows = vec![t[1].clone(), t[0].clone()];
            let swapped_cols = vec![vec![b as f64, a as f64], vec![d as f64, c as f64]];
            if let Ok(v) = cramers_v_table(&t) {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
                prop_assert!((cramers_v_table(&swapped_rows).unwrap() - v).abs() < 1e-12);
                prop_assert!((cramers_v_table(&swapped_cols).unwrap() - v).abs() < 1e-12);
            }
        }

        #[test]
        fn rank_biserial_antisymmetric(
            xs in proptest::collection::vec(0u8..6, 2..30),
            mask in proptest::collection::vec(any::<bool>(), 30),
        ) {
            let x: Vec<Option<f64>> = xs.iter().map(|&v| Some(v as f64)).collect();
            let y: Vec<bool> = mask[..x.len()].to_vec();
            let flipped: Vec<bool> = y.iter().map(|b| !b).collect();
            if let Ok(r) = rank_biserial(&x, &y) {
                prop_assert!((-1.0..=1.0).contains(&r));
                prop_assert!((rank_biserial(&x, &flipped).unwrap() + r).abs() < 1e-12);
            }
        }
    }
}
