//! Meta-analysis over experiment results: divergence–score correlation,
//! score variance, best/second-best tabulation, and the strategy
//! recommendation rules.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::DomainId;
use crate::strategy::{Mode, Strategy};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("x and y lengths differ: {xs} vs {ys}")]
    LengthMismatch { xs: usize, ys: usize },
    #[error("all x values are equal; correlation is undefined")]
    ConstantX,
    #[error("sizes must be positive")]
    NonPositiveSize,
    #[error("target is small and no auxiliary domains exist; only vanilla fine-tuning is executable, nothing to recommend between")]
    NoAuxiliaryData,
}

/// Score-bearing row for one completed schedule, as stored in the results
/// table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub schedule_id: String,
    pub strategy: Strategy,
    pub mode: ModeKind,
    pub test_domain: DomainId,
    pub im_size: usize,
    pub fi_size: usize,
    /// Metric name, recording the tokenization mode (e.g. "bleu-word").
    pub metric: String,
    /// Score on the 0–100 scale.
    pub score: f64,
    /// JSD between the final-stage training data and the test set.
    pub jsd_final_to_test: f64,
}

/// In/out-domain marker without the test-domain payload (that lives in
/// `RunResult::test_domain`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    In,
    Out,
}

impl From<&Mode> for ModeKind {
    fn from(mode: &Mode) -> Self {
        match mode {
            Mode::InDomain => ModeKind::In,
            Mode::OutDomain { .. } => ModeKind::Out,
        }
    }
}

impl std::fmt::Display for ModeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModeKind::In => "in",
            ModeKind::Out => "out",
        })
    }
}

impl std::str::FromStr for ModeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "in" | "in-domain" => Ok(ModeKind::In),
            "out" | "out-domain" => Ok(ModeKind::Out),
            other => Err(format!("unknown mode {other:?}: expected in or out")),
        }
    }
}

fn centered_sums(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64), AnalysisError> {
    if xs.len() != ys.len() {
        return Err(AnalysisError::LengthMismatch {
            xs: xs.len(),
            ys: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(AnalysisError::TooFewPoints {
            needed: 2,
            got: xs.len(),
        });
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - mean_x;
        let dy = y - mean_y;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    Ok((sxx, syy, sxy))
}

/// Squared Pearson correlation in [0,1]. A constant y is defined as 0 (no
/// linear relationship); constant x is an error.
pub fn r_squared(xs: &[f64], ys: &[f64]) -> Result<f64, AnalysisError> {
    let (sxx, syy, sxy) = centered_sums(xs, ys)?;
    if sxx == 0.0 {
        return Err(AnalysisError::ConstantX);
    }
    if syy == 0.0 {
        return Ok(0.0);
    }
    Ok(((sxy * sxy) / (sxx * syy)).clamp(0.0, 1.0))
}

/// Least-squares line y = slope·x + intercept.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64), AnalysisError> {
    let (sxx, _, sxy) = centered_sums(xs, ys)?;
    if sxx == 0.0 {
        return Err(AnalysisError::ConstantX);
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let slope = sxy / sxx;
    Ok((slope, mean_y - slope * mean_x))
}

/// Population variance Σ(x − mean)²/n, computed by Welford's online update.
pub fn variance(scores: &[f64]) -> Result<f64, AnalysisError> {
    if scores.len() < 2 {
        return Err(AnalysisError::TooFewPoints {
            needed: 2,
            got: scores.len(),
        });
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in scores.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i as f64 + 1.0);
        m2 += delta * (x - mean);
    }
    Ok(m2 / scores.len() as f64)
}

/// Ranks with ties averaged (1-based), the ranking Spearman correlation
/// uses.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j hold ties; each gets the mean 1-based rank.
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation in [-1,1]: Pearson correlation of the
/// tie-averaged ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, AnalysisError> {
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let (sxx, syy, sxy) = centered_sums(&rx, &ry)?;
    if sxx == 0.0 {
        return Err(AnalysisError::ConstantX);
    }
    if syy == 0.0 {
        return Ok(0.0);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Fine-tuning compute cost order used for tie-breaking: fewer stages and
/// smaller mixtures rank earlier.
fn compute_rank(strategy: Strategy) -> u8 {
    match strategy {
        Strategy::VanillaFt => 0,
        Strategy::MultiDomainFt => 1,
        Strategy::SingleDomainIttl => 2,
        Strategy::MultiDomainIttl => 3,
        Strategy::PretrainBitext => 4,
        Strategy::PretrainBitextMono => 5,
    }
}

/// Identifies one result table: same metric, mode, test domain, and size
/// combination.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub metric: String,
    pub mode: ModeKind,
    pub test_domain: DomainId,
    pub im_size: usize,
    pub fi_size: usize,
}

/// One table of strategy rows ranked best-first.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedCell {
    pub key: CellKey,
    /// Rows sorted best-first; `rows[0]` is the best, `rows[1]` second-best.
    pub rows: Vec<RunResult>,
    /// Set when the two-stage winner leads the one-stage mixture by less
    /// than [`CLOSE_MARGIN`].
    pub annotation: Option<String>,
}

/// Score margin under which the cheaper strategy is flagged as the
/// compute-limited pick.
pub const CLOSE_MARGIN: f64 = 1.0;

/// Groups results into per-(size-combo, mode) tables and ranks each table
/// by score, ties broken toward the cheaper strategy, then by schedule id.
pub fn tabulate(results: &[RunResult]) -> Vec<RankedCell> {
    let mut cells: BTreeMap<CellKey, Vec<RunResult>> = BTreeMap::new();
    for r in results {
        let key = CellKey {
            metric: r.metric.clone(),
            mode: r.mode,
            test_domain: r.test_domain.clone(),
            im_size: r.im_size,
            fi_size: r.fi_size,
        };
        cells.entry(key).or_default().push(r.clone());
    }
    cells
        .into_iter()
        .map(|(key, mut rows)| {
            rows.sort_by(|a, b| {
                b.score
                    .partial_cmp(&a.score)
                    .expect("finite scores")
                    .then_with(|| compute_rank(a.strategy).cmp(&compute_rank(b.strategy)))
                    .then_with(|| a.schedule_id.cmp(&b.schedule_id))
            });
            let best_of = |s: Strategy| {
                rows.iter()
                    .filter(|r| r.strategy == s)
                    .map(|r| r.score)
                    .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))))
            };
            let annotation = match (best_of(Strategy::MultiDomainIttl), best_of(Strategy::MultiDomainFt)) {
                (Some(ittl), Some(ft)) if ittl - ft < CLOSE_MARGIN => {
                    Some(format!("compute-limited pick: {}", Strategy::MultiDomainFt.slug()))
                }
                _ => None,
            };
            RankedCell { key, rows, annotation }
        })
        .collect()
}

/// Which decision rule produced a recommendation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RuleId {
    R1,
    R2,
    R3,
    R4,
    R5,
}

impl std::fmt::Display for RuleId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComputeBudget {
    Limited,
    Ample,
}

impl std::str::FromStr for ComputeBudget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "limited" => Ok(ComputeBudget::Limited),
            "ample" => Ok(ComputeBudget::Ample),
            other => Err(format!("unknown compute budget {other:?}: expected limited or ample")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Confidence {
    /// Directly covered by the evidence behind the rule.
    Strong,
    /// Depends on stated conditions (compute budget, robustness needs).
    Qualified,
    /// Required inputs were missing; the pick is a fallback.
    Degraded,
}

/// Size and margin thresholds behind the decision rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Below this total pair count, denoising pre-training is excluded.
    pub pretrain_min_total: usize,
    /// A target at or above this count is "large" — plain fine-tuning wins.
    pub large_target: usize,
    /// An auxiliary domain at or above this count is "large".
    pub large_aux: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            pretrain_min_total: 50_000,
            large_target: 25_000,
            large_aux: 25_000,
        }
    }
}

/// A strategy pick with the single rule that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub strategy: Strategy,
    pub rule: RuleId,
    pub rationale: String,
    pub confidence: Confidence,
    /// For out-domain picks: the domain to place in the final stage.
    pub final_stage_domain: Option<DomainId>,
    pub notes: Vec<String>,
}

/// Applies the decision rules R1–R5 in order and returns the first match.
///
/// R1 is an exclusion (no pre-training below the total-data threshold) and
/// surfaces as a note on whichever positive rule fires. Out-domain picks
/// without divergence values degrade to a compute-based default with a
/// warning rather than failing.
pub fn recommend(
    target_size: usize,
    aux_sizes: &[usize],
    mode: ModeKind,
    jsd_to_test: Option<&BTreeMap<DomainId, f64>>,
    compute: ComputeBudget,
    thresholds: &Thresholds,
) -> Result<Recommendation, AnalysisError> {
    if target_size == 0 || aux_sizes.contains(&0) {
        return Err(AnalysisError::NonPositiveSize);
    }
    let total: usize = target_size + aux_sizes.iter().sum::<usize>();
    let mut notes = Vec::new();
    if total < thresholds.pretrain_min_total {
        notes.push(format!(
            "rule R1: total training data ({total} pairs) is below {}; denoising pre-training is excluded",
            thresholds.pretrain_min_total
        ));
    }
    match mode {
        ModeKind::In => {
            if target_size >= thresholds.large_target {
                return Ok(Recommendation {
                    strategy: Strategy::VanillaFt,
                    rule: RuleId::R2,
                    rationale: format!(
                        "target budget {target_size} ≥ {}: with ample in-domain data, staging or mixing auxiliary domains adds no significant gain over plain fine-tuning",
                        thresholds.large_target
                    ),
                    confidence: Confidence::Strong,
                    final_stage_domain: None,
                    notes,
                });
            }
            let max_aux = aux_sizes.iter().copied().max().ok_or(AnalysisError::NoAuxiliaryData)?;
            if max_aux >= thresholds.large_aux {
                Ok(Recommendation {
                    strategy: Strategy::MultiDomainIttl,
                    rule: RuleId::R3,
                    rationale: format!(
                        "small target ({target_size}) with large auxiliary data ({max_aux}): train on the multi-domain mixture first, then fine-tune on the target"
                    ),
                    confidence: Confidence::Strong,
                    final_stage_domain: None,
                    notes,
                })
            } else {
                let (strategy, qualifier) = match compute {
                    ComputeBudget::Ample => (Strategy::MultiDomainIttl, "compute is ample, so the extra stage is affordable"),
                    ComputeBudget::Limited => (Strategy::MultiDomainFt, "compute is limited, and the single mixed stage stays within a close score margin"),
                };
                Ok(Recommendation {
                    strategy,
                    rule: RuleId::R4,
                    rationale: format!(
                        "small target ({target_size}) and small auxiliary data (max {max_aux}): {qualifier}"
                    ),
                    confidence: Confidence::Qualified,
                    final_stage_domain: None,
                    notes,
                })
            }
        }
        ModeKind::Out => {
            let strategy = match compute {
                ComputeBudget::Limited => Strategy::MultiDomainFt,
                ComputeBudget::Ample => Strategy::MultiDomainIttl,
            };
            let (final_stage_domain, confidence) = match jsd_to_test {
                Some(map) if !map.is_empty() => {
                    // argmin JSD; BTreeMap order makes ties resolve to the
                    // lexicographically smallest domain.
                    let best = map
                        .iter()
                        .min_by(|a, b| a.1.partial_cmp(b.1).expect("finite jsd"))
                        .map(|(d, _)| d.clone());
                    (best, Confidence::Qualified)
                }
                _ => {
                    notes.push(
                        "warning: no divergence values between candidate domains and the test set; \
                         final-stage domain left unchosen — measure divergence for a grounded pick"
                            .to_string(),
                    );
                    (None, Confidence::Degraded)
                }
            };
            let robustness = match compute {
                ComputeBudget::Limited => "the single mixed stage is also the robust choice when the final stage may sit far from the test domain",
                ComputeBudget::Ample => "the staged variant wins when the final-stage domain sits close to the test domain",
            };
            Ok(Recommendation {
                strategy,
                rule: RuleId::R5,
                rationale: format!(
                    "out-domain test: put the domain with the lowest divergence to the test set in the final stage; {robustness}"
                ),
                confidence,
                final_stage_domain,
                notes,
            })
        }
    }
}
