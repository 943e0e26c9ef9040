//! Surrogate CART trees fitted to a model's decisions, with balanced-accuracy
//! fidelity, rule extraction and text/DOT rendering.

use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::Term;
use crate::metrics::{metric_set, ConfusionMatrix};

#[derive(Debug, Error, PartialEq)]
pub enum SurrogateError {
    #[error("no records")]
    Empty,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("decisions contain a single class; balanced accuracy is undefined")]
    SingleClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartParams {
    /// Nodes with fewer records are not split.
    pub min_split: usize,
    /// Minimum relative impurity reduction for a split to be kept.
    pub complexity: f64,
    /// Minimum records in a child (among records with the split value present).
    pub min_bucket: usize,
    pub max_depth: usize,
}

impl Default for CartParams {
    fn default() -> Self {
        CartParams::with_min_split(20, 0.01)
    }
}

impl CartParams {
    pub fn with_min_split(min_split: usize, complexity: f64) -> Self {
        CartParams {
            min_split,
            complexity,
            min_bucket: ((min_split as f64 / 3.0).round() as usize).max(1),
            max_depth: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartSplit {
    pub feature: usize,
    /// Present values `x < threshold` go left.
    pub threshold: f64,
    /// Missing values follow the child that received more records.
    pub missing_left: bool,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartNode {
    pub depth: usize,
    pub n: usize,
    pub n_positive: usize,
    /// Majority model decision in the node (ties count as positive).
    pub decision: bool,
    /// Share of the node's records with the majority decision.
    pub purity: f64,
    /// Share of all records reaching the node.
    pub coverage: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<CartSplit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartTree {
    pub features: Vec<String>,
    pub nodes: Vec<CartNode>,
}

fn gini(n: usize, pos: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

fn check_shape(columns: &[Vec<f64>], n: usize) -> Result<(), SurrogateError> {
    if let Some(c) = columns.iter().find(|c| c.len() != n) {
        return Err(SurrogateError::Shape(format!(
            "column of length {} for {n} records",
            c.len()
        )));
    }
    Ok(())
}

struct Builder<'a> {
    columns: &'a [Vec<f64>],
    y: &'a [bool],
    p: CartParams,
    total: usize,
    root_impurity: f64,
    nodes: Vec<CartNode>,
}

#[derive(Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    missing_left: bool,
    improvement: f64,
}

impl Builder<'_> {
    fn node(&self, rows: &[usize], depth: usize) -> CartNode {
        let n = rows.len();
        let pos = rows.iter().filter(|&&r| self.y[r]).count();
        let decision = 2 * pos >= n;
        let majority = if decision { pos } else { n - pos };
        CartNode {
            depth,
            n,
            n_positive: pos,
            decision,
            purity: majority as f64 / n as f64,
            coverage: n as f64 / self.total as f64,
            split: None,
        }
    }

    fn best_split(&self, rows: &[usize]) -> Option<Candidate> {
        let n = rows.len();
        let pos = rows.iter().filter(|&&r| self.y[r]).count();
        let parent = n as f64 * gini(n, pos);
        let mut best: Option<Candidate> = None;
        for (f, col) in self.columns.iter().enumerate() {
            let mut present: Vec<usize> = rows.iter().copied().filter(|&r| !col[r].is_nan()).collect();
            present.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
            let miss_n = n - present.len();
            let miss_pos = pos - present.iter().filter(|&&r| self.y[r]).count();
            let pres_pos = pos - miss_pos;
            let mut left_n = 0;
            let mut left_pos = 0;
            for w in 0..present.len() {
                let r = present[w];
                left_n += 1;
                left_pos += usize::from(self.y[r]);
                let Some(&next) = present.get(w + 1) else { break };
                if col[next] <= col[r] {
                    continue;
                }
                let right_n = present.len() - left_n;
                if left_n < self.p.min_bucket || right_n < self.p.min_bucket {
                    continue;
                }
                let right_pos = pres_pos - left_pos;
                let missing_left = left_n >= right_n;
                let (ln, lp, rn, rp) = if missing_left {
                    (left_n + miss_n, left_pos + miss_pos, right_n, right_pos)
                } else {
                    (left_n, left_pos, right_n + miss_n, right_pos + miss_pos)
                };
                let improvement = parent - ln as f64 * gini(ln, lp) - rn as f64 * gini(rn, rp);
                if best.is_none_or(|b| improvement > b.improvement) {
                    best = Some(Candidate {
                        feature: f,
                        threshold: crate::gbdt::midpoint(col[r], col[next]),
                        missing_left,
                        improvement,
                    });
                }
            }
        }
        best.filter(|b| {
            b.improvement / (self.total as f64 * self.root_impurity) >= self.p.complexity && b.improvement > 0.0
        })
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let node = self.node(&rows, depth);
        let pure = node.purity >= 1.0;
        self.nodes.push(node);
        if pure || rows.len() < self.p.min_split || depth >= self.p.max_depth || self.root_impurity == 0.0 {
            return id;
        }
        let Some(c) = self.best_split(&rows) else { return id };
        let col = &self.columns[c.feature];
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| {
            let v = col[i];
            if v.is_nan() {
                c.missing_left
            } else {
                v < c.threshold
            }
        });
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id].split = Some(CartSplit {
            feature: c.feature,
            threshold: c.threshold,
            missing_left: c.missing_left,
            left,
            right,
        });
        id
    }
}

/// Greedy Gini CART on the model's decisions. A split is kept only when its
/// impurity reduction, relative to the root's total impurity, is at least
/// `complexity`. Equal reductions go to the earlier feature, then the lower
/// threshold.
pub fn fit_surrogate(
    features: &[String],
    columns: &[Vec<f64>],
    decisions: &[bool],
    params: &CartParams,
) -> Result<CartTree, SurrogateError> {
    let n = decisions.len();
    if n == 0 {
        return Err(SurrogateError::Empty);
    }
    if features.len() != columns.len() {
        return Err(SurrogateError::Shape(format!(
            "{} names for {} columns",
            features.len(),
            columns.len()
        )));
    }
    check_shape(columns, n)?;
    let pos = decisions.iter().filter(|&&d| d).count();
    let mut b = Builder {
        columns,
        y: decisions,
        p: *params,
        total: n,
        root_impurity: gini(n, pos),
        nodes: Vec::new(),
    };
    b.grow((0..n).collect(), 0);
    Ok(CartTree {
        features: features.to_vec(),
        nodes: b.nodes,
    })
}

/// Convenience wrapper taking questionnaire terms.
pub fn fit_surrogate_terms(
    terms: &[Term],
    columns: &[Vec<f64>],
    decisions: &[bool],
    params: &CartParams,
) -> Result<CartTree, SurrogateError> {
    let names: Vec<String> = terms.iter().map(Term::name).collect();
    fit_surrogate(&names, columns, decisions, params)
}

impl CartTree {
    pub fn leaf_of(&self, x: impl Fn(usize) -> f64) -> usize {
        let mut at = 0;
        while let Some(s) = self.nodes[at].split {
            let v = x(s.feature);
            let left = if v.is_nan() { s.missing_left } else { v < s.threshold };
            at = if left { s.left } else { s.right };
        }
        at
    }

    pub fn predict(&self, x: impl Fn(usize) -> f64) -> bool {
        self.nodes[self.leaf_of(x)].decision
    }

    pub fn predict_columns(&self, columns: &[Vec<f64>]) -> Vec<bool> {
        let n = columns.first().map_or(0, Vec::len);
        (0..n).map(|r| self.predict(|f| columns[f][r])).collect()
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.split.is_none()).count()
    }
}

/// Balanced accuracy of the tree's predictions against the model decisions.
pub fn fidelity(tree: &CartTree, columns: &[Vec<f64>], decisions: &[bool]) -> Result<f64, SurrogateError> {
    check_shape(columns, decisions.len())?;
    if decisions.is_empty() {
        return Err(SurrogateError::Empty);
    }
    let pred = tree.predict_columns(columns);
    let m = ConfusionMatrix::from_predictions(&pred, decisions).map_err(|e| SurrogateError::Shape(e.to_string()))?;
    metric_set(&m)
        .ok()
        .and_then(|s| s.bacc)
        .ok_or(SurrogateError::SingleClass)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">=")]
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub feature: String,
    pub op: Comparison,
    pub threshold: f64,
    /// Records with the value missing also satisfy the condition.
    pub or_missing: bool,
}

impl Condition {
    pub fn holds(&self, v: f64) -> bool {
        if v.is_nan() {
            return self.or_missing;
        }
        match self.op {
            Comparison::Lt => v < self.threshold,
            Comparison::Ge => v >= self.threshold,
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let op = match self.op {
            Comparison::Lt => "<",
            Comparison::Ge => ">=",
        };
        write!(f, "{} {op} {}", self.feature, self.threshold)?;
        if self.or_missing {
            f.write_str(" (or missing)")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub conditions: Vec<Condition>,
    pub decision: bool,
    pub coverage: f64,
    pub purity: f64,
}

pub const RULESET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub format_version: u32,
    pub features: Vec<String>,
    pub rules: Vec<Rule>,
}

impl RuleSet {
    /// Index of the first rule matching a record.
    pub fn matching(&self, x: impl Fn(usize) -> f64) -> Vec<usize> {
        let idx = |name: &str| self.features.iter().position(|f| f == name).expect("rule feature");
        self.rules
            .iter()
            .enumerate()
            .filter(|(_, r)| r.conditions.iter().all(|c| c.holds(x(idx(&c.feature)))))
            .map(|(i, _)| i)
            .collect()
    }
}

/// One rule per leaf, in left-to-right leaf order.
pub fn extract_rules(tree: &CartTree) -> RuleSet {
    fn walk(t: &CartTree, at: usize, path: &mut Vec<Condition>, out: &mut Vec<Rule>) {
        let n = &t.nodes[at];
        match n.split {
            None => out.push(Rule {
                conditions: path.clone(),
                decision: n.decision,
                coverage: n.coverage,
                purity: n.purity,
            }),
            Some(s) => {
                let feature = t.features[s.feature].clone();
                for (op, child, or_missing) in [
                    (Comparison::Lt, s.left, s.missing_left),
                    (Comparison::Ge, s.right, !s.missing_left),
                ] {
                    path.push(Condition {
                        feature: feature.clone(),
                        op,
                        threshold: s.threshold,
                        or_missing,
                    });
                    walk(t, child, path, out);
                    path.pop();
                }
            }
        }
    }
    let mut rules = Vec::new();
    walk(tree, 0, &mut Vec::new(), &mut rules);
    RuleSet {
        format_version: RULESET_FORMAT_VERSION,
        features: tree.features.clone(),
        rules,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderFormat {
    Text,
    Dot,
}

fn decision_label(d: bool) -> &'static str {
    if d {
        "Positive"
    } else {
        "Negative"
    }
}

fn pct(v: f64) -> String {
    format!("{:.0}%", v * 100.0)
}

/// Node annotation: majority decision, purity, coverage.
fn annotation(n: &CartNode) -> [String; 3] {
    [decision_label(n.decision).to_string(), pct(n.purity), pct(n.coverage)]
}

pub fn render_tree(tree: &CartTree, format: RenderFormat) -> String {
    match format {
        RenderFormat::Text => render_text(tree),
        RenderFormat::Dot => render_dot(tree),
    }
}

fn render_text(tree: &CartTree) -> String {
    fn walk(t: &CartTree, at: usize, edge: Option<String>, indent: usize, out: &mut String) {
        let pad = "  ".repeat(indent);
        if let Some(e) = edge {
            let _ = writeln!(out, "{pad}{e}");
        }
        let n = &t.nodes[at];
        for line in annotation(n) {
            let _ = writeln!(out, "{pad}| {line}");
        }
        if let Some(s) = n.split {
            let name = &t.features[s.feature];
            let miss = |left: bool| if left == s.missing_left { " (or missing)" } else { "" };
            walk(
                t,
                s.left,
                Some(format!("{name} < {}{}", s.threshold, miss(true))),
                indent + 1,
                out,
            );
            walk(
                t,
                s.right,
                Some(format!("{name} >= {}{}", s.threshold, miss(false))),
                indent + 1,
                out,
            );
        }
    }
    let mut out = String::new();
    walk(tree, 0, None, 0, &mut out);
    out
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn render_dot(tree: &CartTree) -> String {
    let mut out =
        String::from("digraph surrogate {\n  node [shape=box, style=\"rounded,filled\", fontname=\"Helvetica\"];\n");
    for (i, n) in tree.nodes.iter().enumerate() {
        let [a, b, c] = annotation(n);
        let rgb = if n.decision { "d7191c" } else { "2c7bb6" };
        let alpha = (n.purity * 255.0).round() as u8;
        let _ = writeln!(
            out,
            "  n{i} [label=\"{a}\\n{b}\\n{c}\", fillcolor=\"#{rgb}{alpha:02x}\"];"
        );
    }
    for (i, n) in tree.nodes.iter().enumerate() {
        if let Some(s) = n.split {
            let name = escape(&tree.features[s.feature]);
            let _ = writeln!(out, "  n{i} -> n{} [label=\"{name} < {}\"];", s.left, s.threshold);
            let _ = writeln!(out, "  n{i} -> n{} [label=\"{name} >= {}\"];", s.right, s.threshold);
        }
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("f{i}")).collect()
    }

    #[test]
    fn copies_a_binary_feature() {
        let x: Vec<f64> = (0..100).map(|i| (i % 2) as f64).collect();
        let noise: Vec<f64> = (0..100).map(|i| ((i * 7) % 3) as f64).collect();
        let d: Vec<bool> = x.iter().map(|&v| v > 0.5).collect();
        let t = fit_surrogate(&names(2), &[noise, x.clone()], &d, &CartParams::default()).unwrap();
        assert_eq!(t.nodes.len(), 3);
        assert_eq!(t.nodes[0].split.unwrap().feature, 1);
        assert_eq!(fidelity(&t, &[vec![0.0; 100], x], &d), Ok(1.0));
    }

    #[test]
    fn recovers_days_threshold() {
        let days: Vec<f64> = (0..200).map(|i| (i % 15) as f64).collect();
        let d: Vec<bool> = days.iter().map(|&v| v < 8.0).collect();
        let t = fit_surrogate(&names(1), &[days], &d, &CartParams::default()).unwrap();
        let s = t.nodes[0].split.unwrap();
        assert!(s.threshold > 7.0 && s.threshold < 8.0);
        assert_eq!(s.threshold, 7.5);
    }

    #[test]
    fn constant_decisions_give_a_leaf() {
        let t = fit_surrogate(&names(1), &[vec![1.0, 2.0, 3.0]], &[true; 3], &CartParams::default()).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.nodes[0].coverage, 1.0);
        assert!(render_tree(&t, RenderFormat::Text).contains("100%"));
        assert_eq!(
            fidelity(&t, &[vec![1.0, 2.0, 3.0]], &[true; 3]),
            Err(SurrogateError::SingleClass)
        );
    }

    #[test]
    fn depth_one_coverage_rows() {
        let x: Vec<f64> = (0..100).map(|i| f64::from(u8::from(i < 60))).collect();
        let d: Vec<bool> = x.iter().map(|&v| v > 0.5).collect();
        let t = fit_surrogate(&names(1), &[x], &d, &CartParams::default()).unwrap();
        let text = render_tree(&t, RenderFormat::Text);
        assert!(text.contains("| 60%") && text.contains("| 40%"), "{text}");
        let rules = extract_rules(&t);
        assert_eq!(rules.rules.len(), 2);
        assert!(rules.rules.iter().all(|r| r.conditions.len() == 1));
    }

    #[test]
    fn dot_output_is_well_formed() {
        let x: Vec<f64> = (0..100).map(|i| (i % 10) as f64).collect();
        let d: Vec<bool> = x.iter().map(|&v| v >= 3.0).collect();
        let t = fit_surrogate(&names(1), &[x], &d, &CartParams::default()).unwrap();
        let dot = render_tree(&t, RenderFormat::Dot);
        assert!(dot.starts_with("digraph surrogate {") && dot.trim_end().ends_with('}'));
        assert_eq!(dot.matches('{').count(), dot.matches('}').count());
        assert_eq!(dot.matches("->").count(), t.nodes.len() - 1);
        for i in 0..t.nodes.len() {
            assert!(dot.contains(&format!("  n{i} [label=")));
        }
    }

    #[test]
    fn missing_values_follow_larger_child() {
        let nan = f64::NAN;
        let mut x: Vec<f64> = (0..90).map(|i| f64::from(u8::from(i < 60))).collect();
        x.extend([nan; 10]);
        let d: Vec<bool> = x.iter().map(|&v| v == 1.0).collect();
        let t = fit_surrogate(&names(1), &[x], &d, &CartParams::default()).unwrap();
        let s = t.nodes[0].split.unwrap();
        // 60 present records are >= 0.5, 30 below.
        assert!(!s.missing_left);
        assert_eq!(t.nodes[s.right].n, 70);
    }

    fn arb_fixture() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<bool>)> {
        (30usize..120).prop_flat_map(|n| {
            (
                proptest::collection::vec(
                    proptest::collection::vec(prop_oneof![6 => (0u8..6).prop_map(f64::from), 1 => Just(f64::NAN)], n),
                    1..4,
                ),
                proptest::collection::vec(any::<bool>(), n),
            )
        })
    }

    proptest! {
        #[test]
        fn rules_partition_records((cols, d) in arb_fixture()) {
            let t = fit_surrogate(&names(cols.len()), &cols, &d, &CartParams::with_min_split(10, 0.0)).unwrap();
            let rules = extract_rules(&t);
            prop_assert_eq!(rules.rules.len(), t.leaves());
            for r in 0..d.len() {
                let m = rules.matching(|f| cols[f][r]);
                prop_assert_eq!(m.len(), 1);
                prop_assert_eq!(rules.rules[m[0]].decision, t.predict(|f| cols[f][r]));
            }
        }

        #[test]
        fn coverage_is_conserved((cols, d) in arb_fixture()) {
            let t = fit_surrogate(&names(cols.len()), &cols, &d, &CartParams::with_min_split(10, 0.0)).unwrap();
            for n in &t.nodes {
                if let Some(s) = n.split {
                    let sum = t.nodes[s.left].coverage + t.nodes[s.right].coverage;
                    prop_assert!((sum - n.coverage).abs() < 1e-12);
                }
            }
            let leaves: f64 = t.nodes.iter().filter(|n| n.split.is_none()).map(|n| n.coverage).sum();
            prop_assert!((leaves - 1.0).abs() < 1e-12);
        }

        #[test]
        fn beats_best_stump((cols, d) in arb_fixture()) {
            prop_assume!(d.iter().any(|&v| v) && d.iter().any(|&v| !v));
            let full = fit_surrogate(&names(cols.len()), &cols, &d, &CartParams::default()).unwrap();
            let stump = fit_surrogate(
                &names(cols.len()), &cols, &d,
                &CartParams { max_depth: 1, ..CartParams::default() },
            ).unwrap();
            // Greedy growth only refines the stump's leaves.
            let acc = |t: &CartTree| t.predict_columns(&cols).iter().zip(&d).filter(|(a, b)| a == b).count();
            prop_assert!(acc(&full) >= acc(&stump));
        }
    }
}
