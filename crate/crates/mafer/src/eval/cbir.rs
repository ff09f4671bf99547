//! Content-based image retrieval: k-NN classification over embeddings,
//! Precision@k, Average Precision, mAP, and the query-selection protocol
//! (randomly chosen correctly-classified images per class, remaining samples
//! as the gallery).

use serde::{Deserialize, Serialize};

use super::extract_features_at;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::imageops::augment::AugmentConfig;
use crate::nn::CnnModel;
use crate::rng::{stream, Rng};

/// Squared euclidean distance (monotone in the true distance, so rankings
/// are identical).
fn dist2(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

/// Gallery indices sorted by ascending distance to the query; distance ties
/// broken by lower index.
pub fn rank_gallery(gallery: &[Vec<f32>], query: &[f32]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..gallery.len()).collect();
    let dists: Vec<f64> = gallery.iter().map(|g| dist2(g, query)).collect();
    order.sort_by(|&i, &j| dists[i].partial_cmp(&dists[j]).unwrap().then(i.cmp(&j)));
    order
}

/// Majority vote among the k nearest neighbors by euclidean distance.
/// Distance ties break toward the lower gallery index; vote ties break
/// toward the label of the nearest member of the tied set.
pub fn knn_classify(
    gallery: &[Vec<f32>],
    labels: &[usize],
    query: &[f32],
    k: usize,
) -> Result<usize> {
    if k == 0 || k > gallery.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must be in [1, gallery size {}]",
            gallery.len()
        )));
    }
    let ranked = rank_gallery(gallery, query);
    let neighbors = &ranked[..k];
    let mut votes: Vec<(usize, usize)> = Vec::new(); // (label, count)
    for &i in neighbors {
        match votes.iter_mut().find(|(l, _)| *l == labels[i]) {
            Some(v) => v.1 += 1,
            None => votes.push((labels[i], 1)),
        }
    }
    let best = votes.iter().map(|&(_, c)| c).max().unwrap();
    let tied: Vec<usize> = votes
        .iter()
        .filter(|&&(_, c)| c == best)
        .map(|&(l, _)| l)
        .collect();
    // nearest neighbor whose label is among the tied set decides
    let winner = neighbors
        .iter()
        .find(|&&i| tied.contains(&labels[i]))
        .map(|&i| labels[i])
        .unwrap();
    Ok(winner)
}

/// One query's full ranking over the gallery with relevance flags.
#[derive(Debug, Clone)]
pub struct RetrievalResult {
    pub query_index: usize,
    /// Gallery positions in ascending-distance order (a permutation).
    pub ranking: Vec<usize>,
    /// rel[i] is the relevance of `ranking[i]`.
    pub rel: Vec<bool>,
    /// Ground-truth positives: total relevant items in the gallery.
    pub gtp: usize,
}

impl RetrievalResult {
    pub fn new(query_index: usize, ranking: Vec<usize>, rel: Vec<bool>) -> Self {
        let gtp = rel.iter().filter(|&&r| r).count();
        RetrievalResult {
            query_index,
            ranking,
            rel,
            gtp,
        }
    }
}

/// Fraction of the top-k retrieved items that are relevant.
pub fn precision_at_k(result: &RetrievalResult, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("precision@k needs k ≥ 1".into()));
    }
    if k > result.rel.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds gallery size {}",
            result.rel.len()
        )));
    }
    let hits = result.rel[..k].iter().filter(|&&r| r).count();
    Ok(hits as f64 / k as f64)
}

/// AP = (1/GTP) Σ_i p@i · rel@i over the full ranking.
pub fn average_precision(result: &RetrievalResult) -> Result<f64> {
    if result.gtp == 0 {
        return Err(Error::InvalidArgument(
            "query has no relevant gallery items (GTP = 0)".into(),
        ));
    }
    let mut hits = 0usize;
    let mut acc = 0.0;
    for (i, &rel) in result.rel.iter().enumerate() {
        if rel {
            hits += 1;
            acc += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(acc / result.gtp as f64)
}

pub fn mean_average_precision(results: &[RetrievalResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::InvalidArgument("mAP needs at least one query".into()));
    }
    let mut acc = 0.0;
    for r in results {
        acc += average_precision(r)?;
    }
    Ok(acc / results.len() as f64)
}

/// How "correctly classified" is decided when selecting query images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryEligibility {
    /// Leave-one-out k-NN prediction on the features.
    Knn,
    /// The model's classifier-head prediction.
    ClassifierHead,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CbirConfig {
    pub queries_per_class: usize,
    pub ks: Vec<usize>,
    pub knn_k: usize,
    pub eligibility: QueryEligibility,
    pub seed: u64,
    /// Degrade query images to this shortest side before feature extraction
    /// (gallery features stay native).
    pub query_degrade: Option<usize>,
}

impl Default for CbirConfig {
    fn default() -> Self {
        CbirConfig {
            queries_per_class: 20,
            ks: vec![1, 5, 10, 50, 100],
            knn_k: 3,
            eligibility: QueryEligibility::Knn,
            seed: 0,
            query_degrade: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrecisionSummary {
    pub k: usize,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CbirReport {
    /// Number of queries contributing to the averages.
    pub q: usize,
    pub precision_at_k: Vec<PrecisionSummary>,
    pub map_mean: f64,
    pub map_sd: f64,
    /// Queries dropped because no relevant gallery item existed.
    pub skipped_zero_gtp: usize,
    /// Classes that could not fill the query quota (name, available).
    pub short_classes: Vec<(String, usize)>,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Run the retrieval protocol on precomputed features. `query_features`
/// lets callers substitute degraded-image features for the query vectors;
/// gallery ranking always uses `features`.
pub fn cbir_from_features(
    features: &[Vec<f32>],
    query_features: &[Vec<f32>],
    labels: &[usize],
    class_names: &[String],
    correct: &[bool],
    cfg: &CbirConfig,
) -> Result<CbirReport> {
    let n = features.len();
    let mut queries: Vec<usize> = Vec::new();
    let mut short_classes = Vec::new();
    for c in 0..class_names.len() {
        let eligible: Vec<usize> = (0..n).filter(|&i| labels[i] == c && correct[i]).collect();
        if eligible.is_empty() {
            return Err(Error::Dataset(format!(
                "class `{}` has no correctly classified samples to query",
                class_names[c]
            )));
        }
        let mut pool = eligible;
        let mut rng = Rng::from_parts(cfg.seed, &[stream::CBIR, c as u64]);
        rng.shuffle(&mut pool);
        if pool.len() < cfg.queries_per_class {
            short_classes.push((class_names[c].clone(), pool.len()));
        }
        let take = pool.len().min(cfg.queries_per_class);
        queries.extend_from_slice(&pool[..take]);
    }

    let is_query = {
        let mut flags = vec![false; n];
        for &q in &queries {
            flags[q] = true;
        }
        flags
    };
    let gallery_idx: Vec<usize> = (0..n).filter(|&i| !is_query[i]).collect();
    let gallery_feats: Vec<Vec<f32>> = gallery_idx.iter().map(|&i| features[i].clone()).collect();

    let mut results = Vec::new();
    let mut skipped = 0usize;
    for &q in &queries {
        let order = rank_gallery(&gallery_feats, &query_features[q]);
        let ranking: Vec<usize> = order.iter().map(|&p| gallery_idx[p]).collect();
        let rel: Vec<bool> = ranking.iter().map(|&g| labels[g] == labels[q]).collect();
        let r = RetrievalResult::new(q, ranking, rel);
        if r.gtp == 0 {
            skipped += 1;
            continue;
        }
        results.push(r);
    }
    if results.is_empty() {
        return Err(Error::Dataset("no usable queries (all GTP = 0)".into()));
    }

    let gallery_size = gallery_idx.len();
    let mut per_k = Vec::new();
    for &k in &cfg.ks {
        if k == 0 || k > gallery_size {
            continue;
        }
        let values: Vec<f64> = results
            .iter()
            .map(|r| precision_at_k(r, k))
            .collect::<Result<_>>()?;
        let (mean, sd) = mean_sd(&values);
        per_k.push(PrecisionSummary { k, mean, sd });
    }
    let aps: Vec<f64> = results
        .iter()
        .map(average_precision)
        .collect::<Result<_>>()?;
    let (map_mean, map_sd) = mean_sd(&aps);

    Ok(CbirReport {
        q: results.len(),
        precision_at_k: per_k,
        map_mean,
        map_sd,
        skipped_zero_gtp: skipped,
        short_classes,
    })
}

/// Full protocol: extract features, decide query eligibility, select
/// queries, rank, and summarize.
pub fn run_cbir(
    model: &CnnModel<f32>,
    ds: &LabeledDataset,
    batch_size: usize,
    aug: &AugmentConfig,
    cfg: &CbirConfig,
) -> Result<CbirReport> {
    let (features, labels) = extract_features_at(model, ds, batch_size, aug, None)?;
    let query_features = match cfg.query_degrade {
        Some(r) => extract_features_at(model, ds, batch_size, aug, Some(r))?.0,
        None => features.clone(),
    };

    let correct: Vec<bool> = match cfg.eligibility {
        QueryEligibility::Knn => {
            // leave-one-out: classify each sample against all others
            let mut flags = Vec::with_capacity(ds.len());
            for i in 0..ds.len() {
                let rest_feats: Vec<Vec<f32>> = (0..ds.len())
                    .filter(|&j| j != i)
                    .map(|j| features[j].clone())
                    .collect();
                let rest_labels: Vec<usize> = (0..ds.len())
                    .filter(|&j| j != i)
                    .map(|j| labels[j])
                    .collect();
                let pred = knn_classify(&rest_feats, &rest_labels, &features[i], cfg.knn_k)?;
                flags.push(pred == labels[i]);
            }
            flags
        }
        QueryEligibility::ClassifierHead => {
            let preds = super::predict(model, ds, batch_size, aug)?;
            preds
                .iter()
                .zip(&labels)
                .map(|(p, l)| p == l)
                .collect()
        }
    };

    cbir_from_features(
        &features,
        &query_features,
        &labels,
        &ds.class_names,
        &correct,
        cfg,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result_from_flags(flags: &[bool]) -> RetrievalResult {
        RetrievalResult::new(0, (0..flags.len()).collect(), flags.to_vec())
    }

    #[test]
    fn precision_at_k_counts() {
        let r = result_from_flags(&[true, false, true]);
        assert!((precision_at_k(&r, 3).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(precision_at_k(&r, 1).unwrap(), 1.0);
        assert!(precision_at_k(&r, 0).is_err());
        assert!(precision_at_k(&r, 4).is_err());
    }

    #[test]
    fn all_relevant_gives_unit_precision() {
        let r = result_from_flags(&[true; 7]);
        for k in 1..=7 {
            assert_eq!(precision_at_k(&r, k).unwrap(), 1.0);
        }
    }

    #[test]
    fn ap_hand_case_five_sixths() {
        let r = result_from_flags(&[true, false, true]);
        assert!((average_precision(&r).unwrap() - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn ap_perfect_ranking_is_one() {
        let r = result_from_flags(&[true, true, false, false]);
        assert_eq!(average_precision(&r).unwrap(), 1.0);
    }

    #[test]
    fn ap_single_relevant_last_is_one_over_n() {
        let n = 9;
        let mut flags = vec![false; n];
        flags[n - 1] = true;
        let r = result_from_flags(&flags);
        assert!((average_precision(&r).unwrap() - 1.0 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn ap_zero_gtp_errors() {
        let r = result_from_flags(&[false, false]);
        assert!(average_precision(&r).is_err());
    }

    #[test]
    fn map_is_mean_and_order_invariant() {
        let a = result_from_flags(&[true, true]); // AP 1.0
        let b = result_from_flags(&[false, true]); // AP 0.5
        let m1 = mean_average_precision(&[a.clone(), b.clone()]).unwrap();
        let m2 = mean_average_precision(&[b, a]).unwrap();
        assert!((m1 - 0.75).abs() < 1e-12);
        assert_eq!(m1, m2);
        let single = result_from_flags(&[true]);
        assert_eq!(
            mean_average_precision(&[single.clone()]).unwrap(),
            average_precision(&single).unwrap()
        );
    }

    #[test]
    fn precision_non_increasing_past_gtp_on_front_loaded_ranking() {
        // all relevant items first: p@k = min(gtp, k) / k, non-increasing for k ≥ gtp
        let gtp = 3;
        let n = 10;
        let flags: Vec<bool> = (0..n).map(|i| i < gtp).collect();
        let r = result_from_flags(&flags);
        let mut prev = f64::INFINITY;
        for k in gtp..=n {
            let p = precision_at_k(&r, k).unwrap();
            assert!(p <= prev + 1e-12);
            prev = p;
        }
    }

    #[test]
    fn knn_majority_vote() {
        let gallery = vec![vec![1.0], vec![2.0], vec![3.0]];
        let labels = vec![0, 1, 1];
        assert_eq!(knn_classify(&gallery, &labels, &[0.0], 3).unwrap(), 1);
    }

    #[test]
    fn knn_vote_tie_breaks_to_nearest() {
        let gallery = vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]];
        let labels = vec![0, 1, 1, 0];
        // 2-2 tie; nearest neighbor has label 0
        assert_eq!(knn_classify(&gallery, &labels, &[0.0], 4).unwrap(), 0);
    }

    #[test]
    fn knn_distance_tie_breaks_to_lower_index() {
        let gallery = vec![vec![1.0], vec![-1.0], vec![5.0]];
        let labels = vec![2, 7, 2];
        // both index 0 and 1 at distance 1; k=1 must pick index 0
        assert_eq!(knn_classify(&gallery, &labels, &[0.0], 1).unwrap(), 2);
    }

    #[test]
    fn knn_pure_neighborhood() {
        let gallery = vec![vec![0.0, 0.0], vec![0.1, 0.0], vec![0.0, 0.1], vec![9.0, 9.0]];
        let labels = vec![4, 4, 4, 1];
        assert_eq!(knn_classify(&gallery, &labels, &[0.0, 0.0], 3).unwrap(), 4);
    }

    #[test]
    fn knn_k_exceeding_gallery_errors() {
        let gallery = vec![vec![0.0]];
        assert!(knn_classify(&gallery, &[0], &[0.0], 2).is_err());
    }

    #[test]
    fn one_hot_features_give_perfect_retrieval() {
        // 3 classes × 10 samples, features are exact one-hot label encodings
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for c in 0..3usize {
            for _ in 0..10 {
                let mut f = vec![0.0f32; 3];
                f[c] = 1.0;
                features.push(f);
                labels.push(c);
            }
        }
        let names: Vec<String> = (0..3).map(|c| format!("c{c}")).collect();
        let cfg = CbirConfig {
            queries_per_class: 2,
            ks: vec![1, 5],
            ..CbirConfig::default()
        };
        let correct = vec![true; 30];
        let report =
            cbir_from_features(&features, &features, &labels, &names, &correct, &cfg).unwrap();
        assert_eq!(report.q, 6);
        assert!((report.map_mean - 1.0).abs() < 1e-12);
        for p in &report.precision_at_k {
            assert_eq!(p.mean, 1.0);
        }
    }

    #[test]
    fn random_features_give_chance_level_map() {
        // 2 balanced classes of 50, random 2-D features: mAP ≈ 0.5
        let mut rng = crate::Rng::from_seed(123);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..100usize {
            features.push(vec![rng.next_f32(), rng.next_f32()]);
            labels.push(i % 2);
        }
        let names = vec!["a".to_string(), "b".to_string()];
        let cfg = CbirConfig {
            queries_per_class: 20,
            ks: vec![1],
            ..CbirConfig::default()
        };
        let correct = vec![true; 100];
        let report =
            cbir_from_features(&features, &features, &labels, &names, &correct, &cfg).unwrap();
        assert!(
            (report.map_mean - 0.5).abs() < 0.07,
            "mAP {} not near 0.5",
            report.map_mean
        );
    }

    #[test]
    fn oracle_naive_recompute_matches() {
        // independent oracle: insertion-sort ranking + direct formula
        let mut rng = crate::Rng::from_seed(9);
        for _ in 0..200 {
            let n = rng.uniform_usize(3, 50);
            let dim = rng.uniform_usize(1, 4);
            let gallery: Vec<Vec<f32>> = (0..n)
                .map(|_| (0..dim).map(|_| rng.next_f32()).collect())
                .collect();
            let labels: Vec<usize> = (0..n).map(|_| rng.uniform_usize(0, 2)).collect();
            let query: Vec<f32> = (0..dim).map(|_| rng.next_f32()).collect();
            let query_label = rng.uniform_usize(0, 2);

            let ranking = rank_gallery(&gallery, &query);
            let rel: Vec<bool> = ranking.iter().map(|&i| labels[i] == query_label).collect();
            let result = RetrievalResult::new(0, ranking.clone(), rel);

            // oracle ranking by insertion sort on full euclidean distance
            let mut oracle: Vec<usize> = Vec::new();
            for i in 0..n {
                let di: f64 = gallery[i]
                    .iter()
                    .zip(&query)
                    .map(|(&a, &b)| ((a - b) as f64).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let mut pos = oracle.len();
                for (p, &j) in oracle.iter().enumerate() {
                    let dj: f64 = gallery[j]
                        .iter()
                        .zip(&query)
                        .map(|(&a, &b)| ((a - b) as f64).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    if di < dj {
                        pos = p;
                        break;
                    }
                }
                oracle.insert(pos, i);
            }
            assert_eq!(ranking, oracle);

            if result.gtp > 0 {
                // naive AP: running precision at each relevant position
                let mut hits = 0;
                let mut naive = 0.0;
                for (i, &g) in oracle.iter().enumerate() {
                    if labels[g] == query_label {
                        hits += 1;
                        naive += hits as f64 / (i + 1) as f64;
                    }
                }
                naive /= result.gtp as f64;
                assert!((average_precision(&result).unwrap() - naive).abs() < 1e-12);
                for k in 1..=n {
                    let hits_k = oracle[..k]
                        .iter()
                        .filter(|&&g| labels[g] == query_label)
                        .count();
                    assert_eq!(
                        precision_at_k(&result, k).unwrap(),
                        hits_k as f64 / k as f64
                    );
                }
            }
        }
    }
}
