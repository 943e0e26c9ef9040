use serde::{Deserialize, Serialize};

/// Structure score gain of splitting a node with gradient/hessian sums
/// `(gl + gr, hl + hr)` into the two given children.
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64, gamma: f64) -> f64 {
    let g = gl + gr;
    let h = hl + hr;
    0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda)) - gamma
}

/// Optimal leaf weight `-G / (H + λ)`.
pub fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    -g / (h + lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    /// Present values `x < threshold` go left.
    pub threshold: f64,
    /// Direction taken by missing values.
    pub default_left: bool,
    pub left: usize,
    pub right: usize,
    pub gain: f64,
}

/// Every node keeps its own weight so that predictions can be attributed
/// along the decision path; only leaf weights enter the model output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub value: f64,
    pub hessian: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    /// Node indices from the root to the leaf reached by a row; `x(f)` returns
    /// feature `f` (NaN when missing).
    pub fn path(&self, x: impl Fn(usize) -> f64) -> Vec<usize> {
        let mut out = vec![0];
        let mut at = 0;
        while let Some(s) = self.nodes[at].split {
            at = if go_left(&s, x(s.feature)) { s.left } else { s.right };
            out.push(at);
        }
        out
    }

    pub fn leaf_value(&self, x: impl Fn(usize) -> f64) -> f64 {
        let mut at = 0;
        while let Some(s) = self.nodes[at].split {
            at = if go_left(&s, x(s.feature)) { s.left } else { s.right };
        }
        self.nodes[at].value
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.split.is_none()).count()
    }

    pub fn depth(&self) -> usize {
        fn rec(t: &RegressionTree, at: usize) -> usize {
            match t.nodes[at].split {
                None => 0,
                Some(s) => 1 + rec(t, s.left).max(rec(t, s.right)),
            }
        }
        rec(self, 0)
    }
}

fn go_left(s: &Split, v: f64) -> bool {
    if v.is_nan() {
        s.default_left
    } else {
        v < s.threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_child_weight: f64,
    pub lambda: f64,
    pub gamma: f64,
}

/// Best split found for one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub default_left: bool,
    pub gain: f64,
    pub left_g: f64,
    pub left_h: f64,
    pub right_g: f64,
    pub right_h: f64,
}

/// Threshold strictly above `a` and at most `b` (for `a < b`).
pub(crate) fn midpoint(a: f64, b: f64) -> f64 {
    let t = a + (b - a) / 2.0;
    if t > a {
        t
    } else {
        b
    }
}

/// Row indices with a present value, sorted by value, per feature.
#[derive(Debug, Clone)]
pub(crate) struct Presorted {
    pub order: Vec<Vec<u32>>,
}

impl Presorted {
    pub fn new(columns: &[Vec<f64>]) -> Self {
        Presorted {
            order: columns
                .iter()
                .map(|col| {
                    let mut idx: Vec<u32> = (0..col.len() as u32).filter(|&i| !col[i as usize].is_nan()).collect();
                    idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
                    idx
                })
                .collect(),
        }
    }
}

pub(crate) const NO_NODE: u32 = u32::MAX;

/// Exact greedy split search for every open node at once. `slot[row]` is the
/// open node a row belongs to (or [`NO_NODE`]); `totals[k]` its gradient and
/// hessian sums. Candidates are evaluated feature by feature in the given
/// order and by increasing threshold; for each threshold missing values are
/// tried on the left first and moved right only on a strictly larger gain.
/// A candidate replaces the incumbent only on strictly larger gain, and must
/// have positive gain.
#[allow(clippy::too_many_arguments)]
pub(crate) fn find_splits(
    columns: &[Vec<f64>],
    presorted: &Presorted,
    slot: &[u32],
    totals: &[(f64, f64)],
    features: &[usize],
    g: &[f64],
    h: &[f64],
    p: &TreeParams,
) -> Vec<Option<SplitCandidate>> {
    let k = totals.len();
    let mut best: Vec<Option<SplitCandidate>> = vec![None; k];
    let mut present = vec![(0.0, 0.0); k];
    let mut left = vec![(0.0, 0.0); k];
    let mut last = vec![f64::NAN; k];
    for &f in features {
        let col = &columns[f];
        let order = &presorted.order[f];
        present.iter_mut().for_each(|s| *s = (0.0, 0.0));
        for &r in order {
            let s = slot[r as usize];
            if s != NO_NODE {
                present[s as usize].0 += g[r as usize];
                present[s as usize].1 += h[r as usize];
            }
        }
        left.iter_mut().for_each(|s| *s = (0.0, 0.0));
        last.iter_mut().for_each(|v| *v = f64::NAN);
        for &r in order {
            let r = r as usize;
            let s = slot[r];
            if s == NO_NODE {
                continue;
            }
            let s = s as usize;
            let v = col[r];
            if !last[s].is_nan() && v > last[s] {
                let threshold = midpoint(last[s], v);
                let (gl, hl) = left[s];
                let (gp, hp) = present[s];
                let (gt, ht) = totals[s];
                let (gm, hm) = (gt - gp, ht - hp);
                for default_left in [true, false] {
                    let (lg, lh, rg, rh) = if default_left {
                        (gl + gm, hl + hm, gp - gl, hp - hl)
                    } else {
                        (gl, hl, gp - gl + gm, hp - hl + hm)
                    };
                    if lh < p.min_child_weight || rh < p.min_child_weight {
                        continue;
                    }
                    let gain = split_gain(lg, lh, rg, rh, p.lambda, p.gamma);
                    if gain > best[s].map_or(0.0, |b| b.gain) {
                        best[s] = Some(SplitCandidate {
                            feature: f,
                            threshold,
                            default_left,
                            gain,
                            left_g: lg,
                            left_h: lh,
                            right_g: rg,
                            right_h: rh,
                        });
                    }
                }
            }
            left[s].0 += g[r];
            left[s].1 += h[r];
            last[s] = v;
        }
    }
    best
}

/// Best split of a single node holding all rows, searching every feature.
pub fn best_split(columns: &[Vec<f64>], g: &[f64], h: &[f64], p: &TreeParams) -> Option<SplitCandidate> {
    let n = g.len();
    let presorted = Presorted::new(columns);
    let slot = vec![0u32; n];
    let totals = [(g.iter().sum(), h.iter().sum())];
    let features: Vec<usize> = (0..columns.len()).collect();
    find_splits(columns, &presorted, &slot, &totals, &features, g, h, p)[0]
}

/// Grows one tree level by level on the rows in `rows` using `features`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn grow_tree(
    columns: &[Vec<f64>],
    presorted: &Presorted,
    rows: &[usize],
    features: &[usize],
    g: &[f64],
    h: &[f64],
    p: &TreeParams,
) -> RegressionTree {
    let n = g.len();
    let mut slot = vec![NO_NODE; n];
    for &r in rows {
        slot[r] = 0;
    }
    let (g0, h0) = rows.iter().fold((0.0, 0.0), |(a, b), &r| (a + g[r], b + h[r]));
    let mut nodes = vec![Node {
        value: leaf_weight(g0, h0, p.lambda),
        hessian: h0,
        split: None,
    }];
    // Open nodes of the current level: (node index, G, H).
    let mut open: Vec<(usize, f64, f64)> = vec![(0, g0, h0)];
    for _ in 0..p.max_depth {
        if open.is_empty() {
            break;
        }
        let totals: Vec<(f64, f64)> = open.iter().map(|&(_, g, h)| (g, h)).collect();
        let found = find_splits(columns, presorted, &slot, &totals, features, g, h, p);
        let mut next = Vec::new();
        // Slot of each child for the next level, per current slot.
        let mut child_slots: Vec<Option<(u32, u32)>> = vec![None; open.len()];
        for (k, cand) in found.iter().enumerate() {
            let Some(c) = cand else { continue };
            let left = nodes.len();
            let right = left + 1;
            nodes.push(Node {
                value: leaf_weight(c.left_g, c.left_h, p.lambda),
                hessian: c.left_h,
                split: None,
            });
            nodes.push(Node {
                value: leaf_weight(c.right_g, c.right_h, p.lambda),
                hessian: c.right_h,
                split: None,
            });
            nodes[open[k].0].split = Some(Split {
                feature: c.feature,
                threshold: c.threshold,
                default_left: c.default_left,
                left,
                right,
                gain: c.gain,
            });
            child_slots[k] = Some((next.len() as u32, next.len() as u32 + 1));
            next.push((left, c.left_g, c.left_h));
            next.push((right, c.right_g, c.right_h));
        }
        for &r in rows {
            let s = slot[r];
            if s == NO_NODE {
                continue;
            }
            slot[r] = match (child_slots[s as usize], found[s as usize]) {
                (Some((l, rr)), Some(c)) => {
                    let v = columns[c.feature][r];
                    let go = if v.is_nan() { c.default_left } else { v < c.threshold };
                    if go {
                        l
                    } else {
                        rr
                    }
                }
                _ => NO_NODE,
            };
        }
        open = next;
    }
    RegressionTree { nodes }
}
