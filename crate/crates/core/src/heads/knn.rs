use std::cmp::Ordering;

use lessvit_tensor::Tensor;

use super::linear::accuracy;
use crate::error::{LessError, Result};

pub const DEFAULT_KNN_K: usize = 20;

fn unit_rows(x: &Tensor, mean: &[f64]) -> Vec<Vec<f64>> {
    let d = mean.len();
    x.data()
        .chunks(d)
        .map(|row| {
            let c: Vec<f64> = row.iter().zip(mean).map(|(v, m)| v - m).collect();
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                c.into_iter().map(|v| v / norm).collect()
            } else {
                c
            }
        })
        .collect()
}

/// Cosine-similarity kNN after centering on the training mean. Neighbors
/// with equal similarity rank by training index; vote ties go to the
/// smallest label.
pub fn knn_predict(train: &Tensor, train_labels: &[usize], query: &Tensor, k: usize) -> Result<Vec<usize>> {
    let (n, d) = train.dims2()?;
    if n == 0 {
        return Err(LessError::Contract("empty training set".into()));
    }
    if train_labels.len() != n {
        return Err(LessError::Dimension(format!("{} labels for {n} rows", train_labels.len())));
    }
    if k == 0 || k > n {
        return Err(LessError::Config(format!("k = {k} with {n} training points")));
    }
    let (_, dq) = query.dims2()?;
    if dq != d {
        return Err(LessError::Dimension(format!("query width {dq}, training width {d}")));
    }
    let mut mean = vec![0.0; d];
    for row in train.data().chunks(d) {
        row.iter().zip(&mut mean).for_each(|(v, m)| *m += v / n as f64);
    }
    let tr = unit_rows(train, &mean);
    let classes = train_labels.iter().max().map_or(0, |m| m + 1);
    Ok(unit_rows(query, &mean)
        .iter()
        .map(|q| {
            let mut sims: Vec<(f64, usize)> = tr
                .iter()
                .enumerate()
                .map(|(i, t)| (t.iter().zip(q).map(|(a, b)| a * b).sum(), i))
                .collect();
            sims.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
            let mut counts = vec![0usize; classes];
            sims[..k].iter().for_each(|&(_, i)| counts[train_labels[i]] += 1);
            (0..classes)
                .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
                .unwrap_or(0)
        })
        .collect())
}

pub fn knn_probe(
    train: &Tensor,
    train_labels: &[usize],
    query: &Tensor,
    query_labels: &[usize],
    k: usize,
) -> Result<f64> {
    let preds = knn_predict(train, train_labels, query, k)?;
    if preds.len() != query_labels.len() {
        return Err(LessError::Dimension(format!(
            "{} labels for {} queries",
            query_labels.len(),
            preds.len()
        )));
    }
    Ok(accuracy(&preds, query_labels))
}
