//! Brute-force reference implementations. Nothing here calls into the
//! library's metric, neighbour or gradient code.

use std::cmp::Ordering;

/// Precision at every positive's rank, literally counted over a fully
/// sorted copy. Ties keep input order.
pub fn oracle_ap(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let mut ranked: Vec<(f64, usize, bool)> = scores
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (&s, &l))| (s, i, l))
        .collect();
    ranked.sort_by(|a, b| match b.0.partial_cmp(&a.0).unwrap() {
        Ordering::Equal => a.1.cmp(&b.1),
        o => o,
    });
    let mut precisions = Vec::new();
    for (rank, item) in ranked.iter().enumerate() {
        if item.2 {
            let hits = ranked[..=rank].iter().filter(|x| x.2).count();
            precisions.push(hits as f64 / (rank + 1) as f64);
        }
    }
    if precisions.is_empty() {
        return None;
    }
    Some(precisions.iter().sum::<f64>() / precisions.len() as f64)
}

/// Pairwise BCubed: for every item, compare it against every other item.
pub fn oracle_bcubed(pred: &[usize], truth: &[usize]) -> (f64, f64, f64) {
    let n = pred.len();
    let (mut p, mut r) = (0.0, 0.0);
    for i in 0..n {
        let mut same_cluster = 0;
        let mut same_class = 0;
        let mut both = 0;
        for j in 0..n {
            let c = pred[i] == pred[j];
            let t = truth[i] == truth[j];
            same_cluster += usize::from(c);
            same_class += usize::from(t);
            both += usize::from(c && t);
        }
        p += both as f64 / same_cluster as f64;
        r += both as f64 / same_class as f64;
    }
    p /= n as f64;
    r /= n as f64;
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn oracle_grad(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + eps;
            let hi = f(&probe);
            probe[i] = orig - eps;
            let lo = f(&probe);
            probe[i] = orig;
            (hi - lo) / (2.0 * eps)
        })
        .collect()
}

/// Neighbours of `pivot` by sorting every other row on distance, ties by
/// index.
pub fn oracle_knn(rows: &[Vec<f64>], pivot: usize, k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = rows
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != pivot)
        .map(|(j, r)| {
            let d: f64 = r.iter().zip(&rows[pivot]).map(|(a, b)| (a - b) * (a - b)).sum();
            (d, j)
        })
        .collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    all.into_iter().take(k).map(|(_, j)| j).collect()
}

/// Largest component-wise relative error; components where both values
/// are below `floor` in magnitude are compared against `floor`.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Every set partition of `0..n` as restricted-growth strings.
pub fn all_partitions(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        let next = prefix.iter().max().map_or(0, |m| m + 1);
        for b in 0..=next {
            prefix.push(b);
            go(prefix, n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), n, &mut out);
    out
}
