use serde::{Deserialize, Serialize};

/// Default z-score bin edges for ranked classification (five classes).
pub const DEFAULT_BIN_THRESHOLDS: [f64; 4] = [-4.0, -2.0, 2.0, 4.0];

/// Pairs where both prediction and label are present.
fn present(preds: &[f64], labels: &[f64]) -> Vec<(f64, f64)> {
    preds
        .iter()
        .zip(labels)
        .filter(|(p, l)| !p.is_nan() && !l.is_nan())
        .map(|(&p, &l)| (p, l))
        .collect()
}

/// Area under the ROC curve by rank statistics (ties count ½). `None` when
/// either class is absent.
pub fn auroc(scores: &[f64], labels: &[f64]) -> Option<f64> {
    let mut pairs = present(scores, labels);
    let pos = pairs.iter().filter(|(_, l)| *l > 0.5).count();
    let neg = pairs.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Sum of (1-based, tie-averaged) ranks of positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < pairs.len() {
        let mut j = i;
        while j < pairs.len() && pairs[j].0 == pairs[i].0 {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = pairs[i..j].iter().filter(|(_, l)| *l > 0.5).count();
        rank_sum += avg_rank * pos_in_group as f64;
        i = j;
    }
    let (p, n) = (pos as f64, neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Average precision `Σ (R_n − R_{n−1})·P_n` over samples sorted by
/// descending score, ties in index order. `None` without positives or
/// without negatives.
pub fn average_precision(scores: &[f64], labels: &[f64]) -> Option<f64> {
    let mut pairs = present(scores, labels);
    let pos = pairs.iter().filter(|(_, l)| *l > 0.5).count();
    if pos == 0 || pos == pairs.len() {
        return None;
    }
    // Stable sort keeps index order among equal scores.
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut tp = 0usize;
    let mut sum = 0.0;
    for (n, (_, l)) in pairs.iter().enumerate() {
        if *l > 0.5 {
            tp += 1;
            sum += tp as f64 / (n + 1) as f64;
        }
    }
    Some(sum / pos as f64)
}

/// Pearson correlation over present pairs; `None` with fewer than two pairs
/// or zero variance on either side.
pub fn pearson(preds: &[f64], labels: &[f64]) -> Option<f64> {
    let pairs = present(preds, labels);
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let mp = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut cov, mut vp, mut vl) = (0.0, 0.0, 0.0);
    for &(p, l) in &pairs {
        cov += (p - mp) * (l - ml);
        vp += (p - mp) * (p - mp);
        vl += (l - ml) * (l - ml);
    }
    if vp <= 0.0 || vl <= 0.0 {
        return None;
    }
    Some((cov / (vp * vl).sqrt()).clamp(-1.0, 1.0))
}

/// Coefficient of determination `1 − SS_res/SS_tot` over present pairs.
pub fn r2(preds: &[f64], labels: &[f64]) -> Option<f64> {
    let pairs = present(preds, labels);
    if pairs.len() < 2 {
        return None;
    }
    let ml = pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64;
    let ss_tot: f64 = pairs.iter().map(|p| (p.1 - ml) * (p.1 - ml)).sum();
    if ss_tot <= 0.0 {
        return None;
    }
    let ss_res: f64 = pairs.iter().map(|p| (p.1 - p.0) * (p.1 - p.0)).sum();
    Some(1.0 - ss_res / ss_tot)
}

pub fn mae(preds: &[f64], labels: &[f64]) -> Option<f64> {
    let pairs = present(preds, labels);
    if pairs.is_empty() {
        return None;
    }
    Some(pairs.iter().map(|p| (p.0 - p.1).abs()).sum::<f64>() / pairs.len() as f64)
}

/// Fraction of present labels matched by thresholding probabilities at ½.
pub fn accuracy_binary(probs: &[f64], labels: &[f64]) -> Option<f64> {
    let pairs = present(probs, labels);
    if pairs.is_empty() {
        return None;
    }
    let hits = pairs.iter().filter(|(p, l)| (*p >= 0.5) == (*l > 0.5)).count();
    Some(hits as f64 / pairs.len() as f64)
}

/// Argmax accuracy for row-major `[rows × classes]` probabilities.
pub fn accuracy_multiclass(probs: &[f64], classes: usize, labels: &[f64]) -> Option<f64> {
    let (mut hits, mut total) = (0usize, 0usize);
    for (row, &y) in probs.chunks(classes).zip(labels) {
        if y.is_nan() {
            continue;
        }
        let arg = row
            .iter()
            .enumerate()
            .fold(0, |best, (i, &v)| if v > row[best] { i } else { best });
        hits += (arg as f64 == y) as usize;
        total += 1;
    }
    (total > 0).then(|| hits as f64 / total as f64)
}

/// Mean over classes of a one-vs-rest binary metric; classes lacking either
/// side are skipped.
pub fn one_vs_rest(
    probs: &[f64],
    classes: usize,
    labels: &[f64],
    metric: fn(&[f64], &[f64]) -> Option<f64>,
) -> Option<f64> {
    let values: Vec<f64> = (0..classes)
        .filter_map(|c| {
            let scores: Vec<f64> = probs.chunks(classes).map(|r| r[c]).collect();
            let bin: Vec<f64> = labels
                .iter()
                .map(|&y| if y.is_nan() { f64::NAN } else { (y as usize == c) as u8 as f64 })
                .collect();
            metric(&scores, &bin)
        })
        .collect();
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Class index = number of thresholds strictly below the value; NaN passes.
pub fn bin_zscores(values: &[f64], thresholds: &[f64]) -> Vec<f64> {
    debug_assert!(thresholds.windows(2).all(|w| w[0] < w[1]));
    values
        .iter()
        .map(|&v| {
            if v.is_nan() {
                v
            } else {
                thresholds.iter().filter(|&&t| t < v).count() as f64
            }
        })
        .collect()
}

/// Per-label values of one metric and their average over computable labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub per_label: Vec<Option<f64>>,
    pub average: Option<f64>,
    pub skipped: usize,
}

pub fn summarize(per_label: Vec<Option<f64>>) -> MetricSummary {
    let ok: Vec<f64> = per_label.iter().flatten().copied().collect();
    MetricSummary {
        skipped: per_label.len() - ok.len(),
        average: (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64),
        per_label,
    }
}
