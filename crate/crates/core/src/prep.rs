//! Missing-data selection: binary missingness matrix, Hamming distances,
//! McQuitty (WPGMA) clustering and removal of the most incomplete patient and
//! feature clusters.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Cohort, Feature};

#[derive(Debug, Error, PartialEq)]
pub enum PrepError {
    #[error("bit rows differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} items to cluster, got {got}")]
    TooFewItems { needed: usize, got: usize },
    #[error("cluster count must be at least 2, got {0}")]
    InvalidClusterCount(usize),
    #[error("distance matrix is not square and symmetric with a zero diagonal")]
    BadDistanceMatrix,
}

/// `cells[row][col]` is true where the field is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingnessMatrix {
    pub features: Vec<Feature>,
    pub cells: Vec<Vec<bool>>,
}

impl MissingnessMatrix {
    pub fn rows(&self) -> usize {
        self.cells.len()
    }

    pub fn cols(&self) -> usize {
        self.features.len()
    }

    pub fn column(&self, j: usize) -> Vec<bool> {
        self.cells.iter().map(|r| r[j]).collect()
    }
}

/// Missingness over the sixteen model features. Contact with an infected
/// person is never missing: an empty answer counts as "no".
pub fn missingness_matrix(c: &Cohort) -> MissingnessMatrix {
    let features = Feature::ALL.to_vec();
    let cells = c
        .records
        .iter()
        .map(|r| {
            features
                .iter()
                .map(|&f| f != Feature::ContactWithInfected && r.answers.is_missing(f))
                .collect()
        })
        .collect();
    MissingnessMatrix { features, cells }
}

/// Missing contact answers become "no".
pub fn impute_contact(c: &Cohort) -> Cohort {
    let mut out = c.clone();
    for r in &mut out.records {
        r.answers.contact_with_infected.get_or_insert(false);
    }
    out
}

pub fn hamming(a: &[bool], b: &[bool]) -> Result<usize, PrepError> {
    if a.len() != b.len() {
        return Err(PrepError::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count())
}

/// Dense symmetric distance matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, PrepError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(PrepError::BadDistanceMatrix);
        }
        for i in 0..n {
            if rows[i][i] != 0.0 {
                return Err(PrepError::BadDistanceMatrix);
            }
            for j in 0..i {
                if rows[i][j] != rows[j][i] || rows[i][j].is_nan() || rows[i][j] < 0.0 {
                    return Err(PrepError::BadDistanceMatrix);
                }
            }
        }
        Ok(DistanceMatrix { n, d: rows.concat() })
    }

    /// Pairwise Hamming distances between bit rows.
    pub fn hamming(items: &[Vec<bool>]) -> Result<Self, PrepError> {
        let n = items.len();
        if let Some(r) = items.iter().find(|r| r.len() != items[0].len()) {
            return Err(PrepError::LengthMismatch(items[0].len(), r.len()));
        }
        let d = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| (0..n).map(move |j| hamming(&items[i], &items[j]).expect("lengths checked") as f64))
            .collect();
        Ok(DistanceMatrix { n, d })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.d[i * self.n + j] = v;
        self.d[j * self.n + i] = v;
    }
}

/// One agglomeration step. Ids follow the usual linkage convention: leaves are
/// `0..n`, the cluster formed at step `s` gets id `n + s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaves: usize,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// Flat cluster labels after undoing all but the first `n - k` merges.
    /// Labels are numbered by first appearance in leaf order.
    pub fn cut(&self, k: usize) -> Result<Vec<usize>, PrepError> {
        let n = self.leaves;
        if k == 0 || k > n {
            return Err(PrepError::TooFewItems { needed: k, got: n });
        }
        let mut parent: Vec<usize> = (0..2 * n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for (s, m) in self.merges.iter().take(n - k).enumerate() {
            let (ra, rb) = (find(&mut parent, m.a), find(&mut parent, m.b));
            parent[ra] = n + s;
            parent[rb] = n + s;
        }
        let mut label_of_root = std::collections::HashMap::new();
        Ok((0..n)
            .map(|i| {
                let r = find(&mut parent, i);
                let next = label_of_root.len();
                *label_of_root.entry(r).or_insert(next)
            })
            .collect())
    }
}

/// McQuitty (WPGMA) agglomerative clustering. After merging `i` and `j`, the
/// distance to any `k` becomes `(d(i,k) + d(j,k)) / 2`. Ties in the minimum
/// distance go to the lowest `(i, j)` pair of current slot indices; the merged
/// cluster occupies the lower slot.
pub fn mcquitty_cluster(d: &DistanceMatrix) -> Result<Dendrogram, PrepError> {
    let n = d.len();
    if n < 2 {
        return Err(PrepError::TooFewItems { needed: 2, got: n });
    }
    let mut d = d.clone();
    let mut active = vec![true; n];
    let mut id: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    // Nearest active neighbour among higher slots.
    let mut nn = vec![usize::MAX; n];
    let mut nn_d = vec![f64::INFINITY; n];

    let refresh = |i: usize, d: &DistanceMatrix, active: &[bool], nn: &mut [usize], nn_d: &mut [f64]| {
        nn[i] = usize::MAX;
        nn_d[i] = f64::INFINITY;
        for j in i + 1..n {
            if active[j] && d.get(i, j) < nn_d[i] {
                nn[i] = j;
                nn_d[i] = d.get(i, j);
            }
        }
    };
    for i in 0..n {
        refresh(i, &d, &active, &mut nn, &mut nn_d);
    }

    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        let mut i = usize::MAX;
        for s in 0..n {
            if active[s] && nn[s] != usize::MAX && (i == usize::MAX || nn_d[s] < nn_d[i]) {
                i = s;
            }
        }
        let j = nn[i];
        let height = nn_d[i];
        merges.push(Merge {
            a: id[i].min(id[j]),
            b: id[i].max(id[j]),
            height,
            size: size[i] + size[j],
        });
        active[j] = false;
        for k in 0..n {
            if active[k] && k != i {
                let v = (d.get(i, k) + d.get(j, k)) / 2.0;
                d.set(i, k, v);
            }
        }
        id[i] = n + step;
        size[i] += size[j];

        for k in 0..n {
            if !active[k] {
                continue;
            }
            if k == i || nn[k] == i || nn[k] == j {
                refresh(k, &d, &active, &mut nn, &mut nn_d);
            } else if k < i {
                let v = d.get(k, i);
                if v < nn_d[k] || (v == nn_d[k] && i < nn[k]) {
                    nn[k] = i;
                    nn_d[k] = v;
                }
            }
        }
    }
    Ok(Dendrogram { leaves: n, merges })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    /// Positional ids (input order) of removed patients.
    pub removed_patients: Vec<usize>,
    pub removed_features: Vec<Feature>,
    /// Mean missingness of each patient cluster, by cluster label.
    pub patient_cluster_missingness: Vec<f64>,
    pub feature_cluster_missingness: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Label with the highest mean (first label wins ties), or `None` when that
/// mean is zero.
fn worst_cluster(means: &[f64]) -> Option<usize> {
    let mut best = 0;
    for (c, &m) in means.iter().enumerate() {
        if m > means[best] {
            best = c;
        }
    }
    (means[best] > 0.0).then_some(best)
}

fn cluster_means(labels: &[usize], k: usize, item_rate: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut sum = vec![0.0; k];
    let mut count = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        sum[l] += item_rate(i);
        count[l] += 1;
    }
    sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect()
}

/// Clusters patients (rows) and features (columns) of the missingness matrix
/// independently, cuts each dendrogram into `k` clusters and removes the
/// patient cluster and the feature cluster with the highest mean missingness.
/// Removed features are cleared (set missing) in the returned cohort; contact
/// answers are imputed.
pub fn prune_by_missingness(
    c: &Cohort,
    k_patients: usize,
    k_features: usize,
) -> Result<(Cohort, PruneReport), PrepError> {
    for k in [k_patients, k_features] {
        if k < 2 {
            return Err(PrepError::InvalidClusterCount(k));
        }
    }
    let c = impute_contact(c);
    let m = missingness_matrix(&c);
    if m.rows() < k_patients {
        return Err(PrepError::TooFewItems {
            needed: k_patients,
            got: m.rows(),
        });
    }
    if m.cols() < k_features {
        return Err(PrepError::TooFewItems {
            needed: k_features,
            got: m.cols(),
        });
    }
    let mut warnings = Vec::new();

    let patient_labels = mcquitty_cluster(&DistanceMatrix::hamming(&m.cells)?)?.cut(k_patients)?;
    let row_rate = |i: usize| m.cells[i].iter().filter(|&&b| b).count() as f64 / m.cols() as f64;
    let patient_means = cluster_means(&patient_labels, k_patients, row_rate);
    let removed_patients: Vec<usize> = match worst_cluster(&patient_means) {
        Some(worst) => (0..m.rows()).filter(|&i| patient_labels[i] == worst).collect(),
        None => {
            warnings.push("patient clusters have no missing data; no patients removed".into());
            Vec::new()
        }
    };

    let columns: Vec<Vec<bool>> = (0..m.cols()).map(|j| m.column(j)).collect();
    let feature_labels = mcquitty_cluster(&DistanceMatrix::hamming(&columns)?)?.cut(k_features)?;
    let col_rate = |j: usize| columns[j].iter().filter(|&&b| b).count() as f64 / m.rows() as f64;
    let feature_means = cluster_means(&feature_labels, k_features, col_rate);
    let removed_features: Vec<Feature> = match worst_cluster(&feature_means) {
        Some(worst) => (0..m.cols())
            .filter(|&j| feature_labels[j] == worst)
            .map(|j| m.features[j])
            .collect(),
        None => {
            warnings.push("feature clusters have no missing data; no features removed".into());
            Vec::new()
        }
    };

    let keep: Vec<usize> = (0..m.rows())
        .filter(|i| removed_patients.binary_search(i).is_err())
        .collect();
    let mut pruned = c.subset(&keep);
    for r in &mut pruned.records {
        for &f in &removed_features {
            r.answers.clear(f);
        }
    }
    Ok((
        pruned,
        PruneReport {
            removed_patients,
            removed_features,
            patient_cluster_missingness: patient_means,
            feature_cluster_missingness: feature_means,
            warnings,
        },
    ))
}
