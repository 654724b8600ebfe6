//! Retrieval metrics and embedding-geometry diagnostics.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// 1.0 if any of the first `k` ids is relevant.
pub fn hit_at_k<S: AsRef<str>>(run: &[S], relevant: &BTreeSet<String>, k: usize) -> f64 {
    if run.iter().take(k).any(|id| relevant.contains(id.as_ref())) {
        1.0
    } else {
        0.0
    }
}

/// Truncated average precision with denominator min(|relevant|, 10).
pub fn average_precision_at_10<S: AsRef<str>>(run: &[S], relevant: &BTreeSet<String>) -> f64 {
    let denom = relevant.len().min(10);
    if denom == 0 {
        return 0.0;
    }
    let mut found = 0usize;
    let mut total = 0.0;
    for (i, id) in run.iter().take(10).enumerate() {
        if relevant.contains(id.as_ref()) {
            found += 1;
            total += found as f64 / (i + 1) as f64;
        }
    }
    total / denom as f64
}

pub fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

/// Mean squared distance over positive pairs.
pub fn alignment_raw(pairs: &[(&[f32], &[f32])]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("alignment needs at least one pair".into()));
    }
    Ok(pairs.iter().map(|(x, y)| squared_distance(x, y)).sum::<f64>() / pairs.len() as f64)
}

/// Alignment with each pair's distance divided by the squared distance from
/// `x` to its nearest database vector. Pairs whose nearest distance is zero
/// are skipped; returns the value and the skip count.
pub fn alignment_normalized(pairs: &[(&[f32], &[f32])], database: &[&[f32]]) -> Result<(f64, usize)> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("alignment needs at least one pair".into()));
    }
    let mut total = 0.0;
    let mut used = 0usize;
    for (x, y) in pairs {
        let nearest = database
            .iter()
            .map(|c| squared_distance(x, c))
            .fold(f64::INFINITY, f64::min);
        if nearest == 0.0 || !nearest.is_finite() {
            continue;
        }
        total += squared_distance(x, y) / nearest;
        used += 1;
    }
    let skipped = pairs.len() - used;
    if used == 0 {
        return Err(Error::Undefined("every alignment pair has a zero-distance nearest neighbour".into()));
    }
    Ok((total / used as f64, skipped))
}

/// |log mean over unordered distinct pairs of exp(-2 |x - y|^2)|.
pub fn uniformity(vectors: &[&[f32]]) -> Result<f64> {
    if vectors.len() < 2 {
        return Err(Error::InvalidArgument("uniformity needs at least two vectors".into()));
    }
    let mut exponents = Vec::with_capacity(vectors.len() * (vectors.len() - 1) / 2);
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            exponents.push(-2.0 * squared_distance(vectors[i], vectors[j]));
        }
    }
    let max = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = exponents.iter().map(|e| (e - max).exp()).sum();
    let log_mean = max + sum.ln() - (exponents.len() as f64).ln();
    Ok(log_mean.abs())
}

fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::Undefined("correlation of a constant sequence".into()));
    }
    Ok((cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman correlation with average ranks for ties.
pub fn spearman(similarities: &[f64], gold: &[f64]) -> Result<f64> {
    if similarities.len() != gold.len() {
        return Err(Error::InvalidArgument("similarity and gold lengths differ".into()));
    }
    if similarities.len() < 3 {
        return Err(Error::InvalidArgument("Spearman needs at least three pairs".into()));
    }
    if similarities.iter().chain(gold).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Spearman input".into()));
    }
    pearson(&average_ranks(similarities), &average_ranks(gold))
}

/// Spearman between cosine similarities of sentence pairs and gold scores.
pub fn spearman_sts(pairs: &[(&[f32], &[f32])], gold: &[f64]) -> Result<f64> {
    let sims = pairs
        .iter()
        .map(|(a, b)| crate::embedding::cosine_similarity(a, b))
        .collect::<Result<Vec<_>>>()?;
    spearman(&sims, gold)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn hits() {
        let run = ["a", "b", "c", "d", "e"];
        assert_eq!(hit_at_k(&run, &rel(&["a"]), 1), 1.0);
        assert_eq!(hit_at_k(&run, &rel(&["e"]), 4), 0.0);
        assert_eq!(hit_at_k(&run, &rel(&["e"]), 10), 1.0);
        assert_eq!(hit_at_k(&run, &rel(&["z"]), 10), 0.0);
    }

    #[test]
    fn average_precision() {
        let run = ["a", "b", "c", "d"];
        assert_eq!(average_precision_at_10(&run, &rel(&["a"])), 1.0);
        assert_eq!(average_precision_at_10(&run, &rel(&["b"])), 0.5);
        let v = average_precision_at_10(&run, &rel(&["a", "c"]));
        assert!((v - 0.5 * (1.0 + 2.0 / 3.0)).abs() < 1e-15);
        let many: Vec<String> = (0..12).map(|i| format!("r{i}")).collect();
        let all: BTreeSet<String> = many.iter().cloned().collect();
        assert_eq!(average_precision_at_10(&many, &all), 1.0);
    }

    #[test]
    fn geometry() {
        let a = [1.0f32, 0.0];
        let b = [0.0f32, 1.0];
        assert_eq!(alignment_raw(&[(&a, &a), (&b, &b)]).unwrap(), 0.0);
        assert!((alignment_raw(&[(&a, &b)]).unwrap() - 2.0).abs() < 1e-12);
        assert!((uniformity(&[&a, &b]).unwrap() - 4.0).abs() < 1e-9);
        assert_eq!(uniformity(&[&a, &a, &a]).unwrap(), 0.0);
        assert!(uniformity(&[&a]).is_err());
        // The evidence is the query's nearest neighbour.
        let q = [0.6f32, 0.8];
        let (v, skipped) = alignment_normalized(&[(&q, &b)], &[&a, &b]).unwrap();
        assert!((v - 1.0).abs() < 1e-12 && skipped == 0);
        let (_, skipped) = alignment_normalized(&[(&a, &b), (&q, &b)], &[&a, &b]).unwrap();
        assert_eq!(skipped, 1);
    }

    #[test]
    fn duplicating_the_set_never_raises_uniformity() {
        // Doubling n points adds n self-pairs at kernel 1, so the mean kernel
        // cannot fall. A single duplicate of an outlier can lower it.
        let mut rng = crate::rng::SplitMix64::new(12);
        for _ in 0..50 {
            let n = 2 + rng.below(10) as usize;
            let pts: Vec<Vec<f32>> = (0..n)
                .map(|_| {
                    let v: Vec<f64> = (0..4).map(|_| rng.next_f64() - 0.5).collect();
                    crate::embedding::normalize(&v).unwrap().into_iter().map(|x| x as f32).collect()
                })
                .collect();
            let once: Vec<&[f32]> = pts.iter().map(Vec::as_slice).collect();
            let twice: Vec<&[f32]> = once.iter().chain(once.iter()).copied().collect();
            assert!(uniformity(&twice).unwrap() <= uniformity(&once).unwrap() + 1e-12);
        }
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[-1.0, -2.0, -3.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!((spearman(&[0.1, 0.5, 0.3], &[1.0, 3.0, 2.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::Undefined(_))));
        // Ties take the average rank: ranks [1.5, 1.5, 3] vs [1, 2, 3].
        let v = spearman(&[0.2, 0.2, 0.9], &[1.0, 2.0, 3.0]).unwrap();
        assert!((v - 0.866_025_403_784_438_6).abs() < 1e-12);
    }
}
