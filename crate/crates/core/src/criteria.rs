//! Per-filter importance scores and global bottom-k selection.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::FilterRef;
use crate::nn::ConvLayer;
use crate::tensor::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    L1,
    L2,
    Std,
    Cosine,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [Criterion::L1, Criterion::L2, Criterion::Std, Criterion::Cosine];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::L1 => "l1",
            Criterion::L2 => "l2",
            Criterion::Std => "std",
            Criterion::Cosine => "cosine",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Criterion::L1),
            "l2" => Ok(Criterion::L2),
            "std" => Ok(Criterion::Std),
            "cosine" | "cos" => Ok(Criterion::Cosine),
            other => Err(Error::Config(format!(
                "unknown criterion {other:?} (expected one of l1, l2, std, cosine)"
            ))),
        }
    }
}

/// Scores for the filters of one convolution layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceScores {
    pub criterion: Criterion,
    pub scores: Vec<f64>,
    /// Set when a cosine score had to fall back to 0 because a filter or the
    /// reference vector had zero norm.
    pub degenerate: bool,
}

impl ImportanceScores {
    pub fn new(criterion: Criterion, scores: Vec<f64>) -> Self {
        ImportanceScores {
            criterion,
            scores,
            degenerate: false,
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

fn per_filter<T: Scalar>(layer: &ConvLayer<T>, f: impl Fn(&[T]) -> f64) -> Vec<f64> {
    (0..layer.filters()).map(|i| f(layer.filter(i))).collect()
}

/// Sum of absolute weights per filter; the bias is not included.
pub fn filter_l1<T: Scalar>(layer: &ConvLayer<T>) -> ImportanceScores {
    ImportanceScores::new(
        Criterion::L1,
        per_filter(layer, |w| w.iter().map(|v| v.as_f64().abs()).sum()),
    )
}

pub fn filter_l2<T: Scalar>(layer: &ConvLayer<T>) -> ImportanceScores {
    ImportanceScores::new(
        Criterion::L2,
        per_filter(layer, |w| w.iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt()),
    )
}

/// Population standard deviation of each filter's weights.
pub fn filter_std<T: Scalar>(layer: &ConvLayer<T>) -> ImportanceScores {
    ImportanceScores::new(
        Criterion::Std,
        per_filter(layer, |w| {
            let n = w.len() as f64;
            let mean = w.iter().map(|v| v.as_f64()).sum::<f64>() / n;
            (w.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / n).sqrt()
        }),
    )
}

/// Cosine distance between each filter and the layer-mean filter.
///
/// Lower distance means the filter is closer to the layer consensus and is
/// treated as less important.
pub fn filter_cosine<T: Scalar>(layer: &ConvLayer<T>) -> ImportanceScores {
    let f_out = layer.filters();
    let len = layer.weights.row_len();
    let mut mean = vec![0.0f64; len];
    for i in 0..f_out {
        for (m, v) in mean.iter_mut().zip(layer.filter(i)) {
            *m += v.as_f64();
        }
    }
    mean.iter_mut().for_each(|m| *m /= f_out as f64);
    let mean_norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut degenerate = false;
    let scores = (0..f_out)
        .map(|i| {
            let w = layer.filter(i);
            let norm = w.iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt();
            if norm == 0.0 || mean_norm == 0.0 {
                degenerate = true;
                return 0.0;
            }
            let dot: f64 = w.iter().zip(&mean).map(|(a, b)| a.as_f64() * b).sum();
            (1.0 - dot / (norm * mean_norm)).clamp(0.0, 2.0)
        })
        .collect();
    ImportanceScores {
        criterion: Criterion::Cosine,
        scores,
        degenerate,
    }
}

pub fn filter_scores<T: Scalar>(layer: &ConvLayer<T>, criterion: Criterion) -> ImportanceScores {
    match criterion {
        Criterion::L1 => filter_l1(layer),
        Criterion::L2 => filter_l2(layer),
        Criterion::Std => filter_std(layer),
        Criterion::Cosine => filter_cosine(layer),
    }
}

/// Divides every score by the mean score of the layer's unpruned filters.
pub fn normalized_scores(scores: &ImportanceScores, pruned: &[bool]) -> Result<ImportanceScores> {
    if pruned.len() != scores.len() {
        return Err(Error::shape("normalized_scores", scores.len(), pruned.len()));
    }
    let live: Vec<f64> = scores
        .scores
        .iter()
        .zip(pruned)
        .filter(|(_, &p)| !p)
        .map(|(&s, _)| s)
        .collect();
    if live.is_empty() {
        return Err(Error::Data("cannot normalize a layer with no unpruned filters".into()));
    }
    let mean = live.iter().sum::<f64>() / live.len() as f64;
    let normalized = if mean > 0.0 {
        scores.scores.iter().map(|s| s / mean).collect()
    } else {
        vec![0.0; scores.len()]
    };
    Ok(ImportanceScores {
        criterion: scores.criterion,
        scores: normalized,
        degenerate: scores.degenerate,
    })
}

/// Picks the `k` lowest-scoring unpruned filters across all layers.
///
/// Ties break on `(layer, filter)`. At most `unpruned - 1` filters are taken
/// from any layer so that each layer keeps one untouched filter; `k` is
/// clamped to the number of filters that can be taken. The result is sorted.
pub fn select_bottom_k(scores: &[ImportanceScores], k: usize, pruned: &[Vec<bool>]) -> Vec<FilterRef> {
    let mut candidates: Vec<(f64, FilterRef)> = Vec::new();
    let mut quota: Vec<usize> = Vec::with_capacity(scores.len());
    for (layer, (layer_scores, layer_pruned)) in scores.iter().zip(pruned).enumerate() {
        let live = layer_pruned.iter().filter(|&&p| !p).count();
        quota.push(live.saturating_sub(1));
        for (filter, (&s, &p)) in layer_scores.scores.iter().zip(layer_pruned).enumerate() {
            if !p {
                candidates.push((s, FilterRef { layer, filter }));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut selected = Vec::with_capacity(k);
    for (_, r) in candidates {
        if selected.len() == k {
            break;
        }
        if quota[r.layer] > 0 {
            quota[r.layer] -= 1;
            selected.push(r);
        }
    }
    selected.sort();
    selected
}
