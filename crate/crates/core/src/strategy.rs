//! Compilation of fine-tuning and pre-training strategies into executable
//! multi-stage training schedules.
//!
//! A strategy names a shape (which domains feed which stage under which
//! objective); [`build_schedule`] instantiates it for concrete domains,
//! sizes, and a test mode, and [`enumerate_grid`] expands the full
//! size/strategy/mode cross-product used in sweep experiments.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DomainId, Split};
use crate::mixing::{DatasetSpec, MixComponent, MixError};
use crate::model::TrainConfig;
use crate::seeding::derive_seed;

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("no domain budgets given")]
    NoBudgets,
    #[error("domain {0} appears twice in the budgets")]
    DuplicateBudget(DomainId),
    #[error("target domain {0} is not among the budgets")]
    TargetNotBudgeted(DomainId),
    #[error("{strategy} needs at least {needed} training domains, got {got}")]
    TooFewDomains {
        strategy: Strategy,
        needed: usize,
        got: usize,
    },
    #[error("single-domain transfer needs exactly one intermediate domain plus the target, got {0} domains")]
    SingleIttlArity(usize),
    #[error("out-domain test domain {0} also appears in the training budgets")]
    TestDomainInTraining(DomainId),
    #[error("schedule has no stages")]
    NoStages,
    #[error("in-domain schedule's final stage does not draw from test domain {0}")]
    FinalStageMissesTarget(DomainId),
    #[error(transparent)]
    Mix(#[from] MixError),
}

/// Training objective of one stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Source → reference translation.
    Nmt,
    /// Noised source → reference translation.
    BitextDenoise,
    /// Noised x → x, for x drawn from each side separately.
    MonoDenoise,
    /// Alternating batches of bitext and monolingual denoising.
    BitextPlusMonoDenoise,
}

impl Objective {
    /// Stable lowercase identifier, matching the serialized form.
    pub fn slug(&self) -> &'static str {
        match self {
            Objective::Nmt => "nmt",
            Objective::BitextDenoise => "bitext-denoise",
            Objective::MonoDenoise => "mono-denoise",
            Objective::BitextPlusMonoDenoise => "bitext-plus-mono-denoise",
        }
    }
}

/// The strategies under comparison, plus the two pre-training variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    VanillaFt,
    MultiDomainFt,
    SingleDomainIttl,
    MultiDomainIttl,
    PretrainBitext,
    PretrainBitextMono,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::VanillaFt,
        Strategy::MultiDomainFt,
        Strategy::SingleDomainIttl,
        Strategy::MultiDomainIttl,
        Strategy::PretrainBitext,
        Strategy::PretrainBitextMono,
    ];

    pub fn slug(&self) -> &'static str {
        match self {
            Strategy::VanillaFt => "vanilla-ft",
            Strategy::MultiDomainFt => "multi-domain-ft",
            Strategy::SingleDomainIttl => "single-domain-ittl",
            Strategy::MultiDomainIttl => "multi-domain-ittl",
            Strategy::PretrainBitext => "pretrain-bitext",
            Strategy::PretrainBitextMono => "pretrain-bitext-mono",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.slug())
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .iter()
            .find(|st| st.slug() == s.trim().to_lowercase())
            .copied()
            .ok_or_else(|| {
                let known: Vec<&str> = Strategy::ALL.iter().map(Strategy::slug).collect();
                format!("unknown strategy {s:?}: expected one of {}", known.join(", "))
            })
    }
}

/// Whether the test domain was seen during training.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Mode {
    /// Test on the target domain itself.
    InDomain,
    /// Test on a domain that appears in no training stage.
    OutDomain { test: DomainId },
}

impl Mode {
    pub fn slug(&self) -> &'static str {
        match self {
            Mode::InDomain => "in",
            Mode::OutDomain { .. } => "out",
        }
    }
}

/// Per-domain data budget fed to schedule compilation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainBudget {
    pub domain: DomainId,
    pub size: usize,
    #[serde(default)]
    pub upsample: bool,
}

impl DomainBudget {
    pub fn new(domain: DomainId, size: usize) -> Self {
        DomainBudget {
            domain,
            size,
            upsample: false,
        }
    }
}

/// One training stage: what data, which objective, and optional
/// stage-specific training overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub data: DatasetSpec,
    pub objective: Objective,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
}

/// An executable multi-stage schedule with its evaluation target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub id: String,
    pub strategy: Strategy,
    pub mode: Mode,
    pub target: DomainId,
    /// Per-domain intermediate budget (0 when the schedule has no auxiliary
    /// domains).
    pub im_size: usize,
    /// Final-stage (target-domain) budget.
    pub fi_size: usize,
    pub stages: Vec<Stage>,
    pub test: (DomainId, Split),
}

impl Schedule {
    /// Checks the mode/stage membership invariants.
    pub fn validate(&self) -> Result<(), StrategyError> {
        if self.stages.is_empty() {
            return Err(StrategyError::NoStages);
        }
        let test_domain = &self.test.0;
        match &self.mode {
            Mode::InDomain => {
                let last = self.stages.last().expect("non-empty");
                if !last.data.contains_domain(test_domain) {
                    return Err(StrategyError::FinalStageMissesTarget(test_domain.clone()));
                }
            }
            Mode::OutDomain { .. } => {
                for stage in &self.stages {
                    if stage.data.contains_domain(test_domain) {
                        return Err(StrategyError::TestDomainInTraining(test_domain.clone()));
                    }
                }
            }
        }
        Ok(())
    }
}

fn spec_from(budgets: &[&DomainBudget], seed: u64) -> Result<DatasetSpec, MixError> {
    DatasetSpec::new(
        budgets
            .iter()
            .map(|b| MixComponent {
                domain: b.domain.clone(),
                size: b.size,
                upsample: b.upsample,
            })
            .collect(),
        seed,
    )
}

fn schedule_id(
    strategy: Strategy,
    mode: &Mode,
    target: &DomainBudget,
    aux: &[&DomainBudget],
    test: &DomainId,
    seed: u64,
) -> String {
    let aux_part = if aux.is_empty() {
        "none".to_string()
    } else {
        aux.iter()
            .map(|b| format!("{}@{}", b.domain, b.size))
            .collect::<Vec<_>>()
            .join("+")
    };
    format!(
        "{}_{}_tgt-{}@{}_aux-{}_test-{}_seed-{}",
        strategy.slug(),
        mode.slug(),
        target.domain,
        target.size,
        aux_part,
        test,
        seed
    )
}

/// Compiles one strategy into a schedule.
///
/// `budgets` lists every training domain with its data budget; `target` is
/// the final-stage domain d_j and must be among them. Multi-domain mixtures
/// draw from all budgeted domains — including the target — while the
/// pre-training variants mix only the auxiliary domains. Stage seeds are
/// derived from `seed`, so compilation is pure and deterministic.
pub fn build_schedule(
    strategy: Strategy,
    budgets: &[DomainBudget],
    target: &DomainId,
    mode: &Mode,
    seed: u64,
) -> Result<Schedule, StrategyError> {
    if budgets.is_empty() {
        return Err(StrategyError::NoBudgets);
    }
    for (i, b) in budgets.iter().enumerate() {
        if budgets[..i].iter().any(|prev| prev.domain == b.domain) {
            return Err(StrategyError::DuplicateBudget(b.domain.clone()));
        }
    }
    let target_budget = budgets
        .iter()
        .find(|b| &b.domain == target)
        .ok_or_else(|| StrategyError::TargetNotBudgeted(target.clone()))?;
    if let Mode::OutDomain { test } = mode {
        if budgets.iter().any(|b| &b.domain == test) {
            return Err(StrategyError::TestDomainInTraining(test.clone()));
        }
    }

    // Auxiliary = everything but the target, in domain order for stable ids.
    let mut aux: Vec<&DomainBudget> = budgets.iter().filter(|b| &b.domain != target).collect();
    aux.sort_by(|a, b| a.domain.cmp(&b.domain));
    // The full mixture lists the target alongside the auxiliaries.
    let mut all: Vec<&DomainBudget> = aux.clone();
    all.push(target_budget);
    all.sort_by(|a, b| a.domain.cmp(&b.domain));

    let stage_seed = |i: usize| derive_seed(seed, &format!("stage.{i}"));
    let nmt = |spec: DatasetSpec| Stage {
        data: spec,
        objective: Objective::Nmt,
        train: None,
    };

    let stages = match strategy {
        Strategy::VanillaFt => vec![nmt(spec_from(&[target_budget], stage_seed(0))?)],
        Strategy::MultiDomainFt => vec![nmt(spec_from(&all, stage_seed(0))?)],
        Strategy::SingleDomainIttl => {
            if budgets.len() != 2 {
                return Err(StrategyError::SingleIttlArity(budgets.len()));
            }
            vec![
                nmt(spec_from(&[aux[0]], stage_seed(0))?),
                nmt(spec_from(&[target_budget], stage_seed(1))?),
            ]
        }
        Strategy::MultiDomainIttl => {
            if budgets.len() < 2 {
                return Err(StrategyError::TooFewDomains {
                    strategy,
                    needed: 2,
                    got: budgets.len(),
                });
            }
            vec![
                nmt(spec_from(&all, stage_seed(0))?),
                nmt(spec_from(&[target_budget], stage_seed(1))?),
            ]
        }
        Strategy::PretrainBitext | Strategy::PretrainBitextMono => {
            if aux.is_empty() {
                return Err(StrategyError::TooFewDomains {
                    strategy,
                    needed: 2,
                    got: budgets.len(),
                });
            }
            let objective = if strategy == Strategy::PretrainBitext {
                Objective::BitextDenoise
            } else {
                Objective::BitextPlusMonoDenoise
            };
            vec![
                Stage {
                    data: spec_from(&aux, stage_seed(0))?,
                    objective,
                    train: None,
                },
                nmt(spec_from(&[target_budget], stage_seed(1))?),
            ]
        }
    };

    let test = match mode {
        Mode::InDomain => (target.clone(), Split::Test),
        Mode::OutDomain { test } => (test.clone(), Split::Test),
    };
    let schedule = Schedule {
        id: schedule_id(strategy, mode, target_budget, &aux, &test.0, seed),
        strategy,
        mode: mode.clone(),
        target: target.clone(),
        im_size: aux.iter().map(|b| b.size).max().unwrap_or(0),
        fi_size: target_budget.size,
        stages,
        test,
    };
    schedule.validate()?;
    Ok(schedule)
}

/// The full sweep a grid experiment runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub strategies: Vec<Strategy>,
    /// Per-auxiliary-domain budgets to sweep.
    pub intermediate_sizes: Vec<usize>,
    /// Target-domain budgets to sweep.
    pub final_sizes: Vec<usize>,
    /// All training domains, target included.
    pub domains: Vec<DomainId>,
    pub target: DomainId,
    pub modes: Vec<Mode>,
    pub seed: u64,
    /// Allow components to oversample when a corpus is smaller than its
    /// budget.
    #[serde(default)]
    pub upsample: bool,
}

/// Expands the cross-product strategy × intermediate size × final size ×
/// mode into schedules. Every cell yields a schedule with a unique id, even
/// where contents coincide structurally (a vanilla cell ignores the
/// intermediate size but still records it).
pub fn enumerate_grid(grid: &GridSpec) -> Result<Vec<Schedule>, StrategyError> {
    let mut schedules = Vec::new();
    for &strategy in &grid.strategies {
        for &im in &grid.intermediate_sizes {
            for &fi in &grid.final_sizes {
                for mode in &grid.modes {
                    let budgets: Vec<DomainBudget> = grid
                        .domains
                        .iter()
                        .map(|d| DomainBudget {
                            domain: d.clone(),
                            size: if d == &grid.target { fi } else { im },
                            upsample: grid.upsample,
                        })
                        .collect();
                    schedules.push(build_schedule(strategy, &budgets, &grid.target, mode, grid.seed)?);
                }
            }
        }
    }
    Ok(schedules)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::{prop_assert_eq, proptest};
    use std::collections::BTreeSet;

    fn dom(name: &str) -> DomainId {
        DomainId::new(name).unwrap()
    }

    fn budgets(entries: &[(&str, usize)]) -> Vec<DomainBudget> {
        entries
            .iter()
            .map(|(d, s)| DomainBudget::new(dom(d), *s))
            .collect()
    }

    #[test]
    fn multi_domain_ittl_in_domain_shape() {
        let b = budgets(&[("cc", 25_000), ("bible", 25_000), ("pmi", 1000)]);
        let s = build_schedule(Strategy::MultiDomainIttl, &b, &dom("pmi"), &Mode::InDomain, 222).unwrap();
        assert_eq!(s.stages.len(), 2);
        assert_eq!(s.stages[0].objective, Objective::Nmt);
        // Intermediate mix contains all three domains, target included.
        for name in ["cc", "bible", "pmi"] {
            assert!(s.stages[0].data.contains_domain(&dom(name)), "missing {name}");
        }
        assert_eq!(s.stages[0].data.total_size(), 51_000);
        // Final stage draws only from the target.
        assert_eq!(s.stages[1].data.components().len(), 1);
        assert_eq!(s.stages[1].data.components()[0].domain, dom("pmi"));
        assert_eq!(s.test, (dom("pmi"), Split::Test));
        assert_eq!(s.im_size, 25_000);
        assert_eq!(s.fi_size, 1000);
    }

    #[test]
    fn vanilla_out_domain_shape() {
        let b = budgets(&[("bible", 25_000)]);
        let mode = Mode::OutDomain { test: dom("flores") };
        let s = build_schedule(Strategy::VanillaFt, &b, &dom("bible"), &mode, 222).unwrap();
        assert_eq!(s.stages.len(), 1);
        assert_eq!(s.stages[0].data.components()[0].domain, dom("bible"));
        assert_eq!(s.test, (dom("flores"), Split::Test));
        assert_eq!(s.im_size, 0);
    }

    #[test]
    fn single_ittl_requires_exactly_one_intermediate() {
        let three = budgets(&[("cc", 1000), ("bible", 1000), ("pmi", 1000)]);
        assert!(matches!(
            build_schedule(Strategy::SingleDomainIttl, &three, &dom("pmi"), &Mode::InDomain, 1),
            Err(StrategyError::SingleIttlArity(3))
        ));
        let one = budgets(&[("pmi", 1000)]);
        assert!(matches!(
            build_schedule(Strategy::SingleDomainIttl, &one, &dom("pmi"), &Mode::InDomain, 1),
            Err(StrategyError::SingleIttlArity(1))
        ));
        let two = budgets(&[("cc", 1000), ("pmi", 1000)]);
        let s = build_schedule(Strategy::SingleDomainIttl, &two, &dom("pmi"), &Mode::InDomain, 1).unwrap();
        assert_eq!(s.stages[0].data.components()[0].domain, dom("cc"));
        assert_eq!(s.stages[1].data.components()[0].domain, dom("pmi"));
    }

    #[test]
    fn intermediate_equal_to_target_is_rejected() {
        // Expressing "intermediate = final" forces a duplicate budget entry,
        // which is rejected before strategy-specific checks.
        let dup = budgets(&[("pmi", 1000), ("pmi", 1000)]);
        assert!(matches!(
            build_schedule(Strategy::SingleDomainIttl, &dup, &dom("pmi"), &Mode::InDomain, 1),
            Err(StrategyError::DuplicateBudget(_))
        ));
    }

    #[test]
    fn out_domain_test_must_be_unseen() {
        let b = budgets(&[("cc", 1000), ("pmi", 1000)]);
        let mode = Mode::OutDomain { test: dom("cc") };
        assert!(matches!(
            build_schedule(Strategy::MultiDomainFt, &b, &dom("pmi"), &mode, 1),
            Err(StrategyError::TestDomainInTraining(d)) if d == dom("cc")
        ));
    }

    #[test]
    fn pretraining_mixes_only_auxiliary_domains() {
        let b = budgets(&[("cc", 2000), ("bible", 2000), ("pmi", 500)]);
        for (strategy, objective) in [
            (Strategy::PretrainBitext, Objective::BitextDenoise),
            (Strategy::PretrainBitextMono, Objective::BitextPlusMonoDenoise),
        ] {
            let s = build_schedule(strategy, &b, &dom("pmi"), &Mode::InDomain, 9).unwrap();
            assert_eq!(s.stages[0].objective, objective);
            assert!(!s.stages[0].data.contains_domain(&dom("pmi")));
            assert_eq!(s.stages[0].data.total_size(), 4000);
            assert_eq!(s.stages[1].objective, Objective::Nmt);
        }
    }

    #[test]
    fn multi_domain_ft_degenerates_to_vanilla_with_one_domain() {
        let b = budgets(&[("pmi", 1000)]);
        let mdft = build_schedule(Strategy::MultiDomainFt, &b, &dom("pmi"), &Mode::InDomain, 5).unwrap();
        let vanilla = build_schedule(Strategy::VanillaFt, &b, &dom("pmi"), &Mode::InDomain, 5).unwrap();
        assert_eq!(mdft.stages, vanilla.stages);
        assert_ne!(mdft.id, vanilla.id);
    }

    #[test]
    fn grid_cross_product_counts() {
        let grid = GridSpec {
            strategies: vec![Strategy::MultiDomainIttl],
            intermediate_sizes: vec![1000, 25_000],
            final_sizes: vec![1000, 25_000],
            domains: vec![dom("cc"), dom("pmi")],
            target: dom("pmi"),
            modes: vec![Mode::InDomain],
            seed: 222,
            upsample: false,
        };
        let schedules = enumerate_grid(&grid).unwrap();
        assert_eq!(schedules.len(), 4);
        let ids: BTreeSet<&str> = schedules.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids.len(), 4, "ids must be unique");
    }

    #[test]
    fn grid_three_strategies_four_combos() {
        let grid = GridSpec {
            strategies: vec![Strategy::VanillaFt, Strategy::MultiDomainFt, Strategy::MultiDomainIttl],
            intermediate_sizes: vec![1000, 25_000],
            final_sizes: vec![1000, 25_000],
            domains: vec![dom("cc"), dom("bible"), dom("pmi")],
            target: dom("pmi"),
            modes: vec![Mode::InDomain],
            seed: 222,
            upsample: false,
        };
        let schedules = enumerate_grid(&grid).unwrap();
        assert_eq!(schedules.len(), 12);
        let ids: BTreeSet<&str> = schedules.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids.len(), 12);
        for s in &schedules {
            s.validate().unwrap();
        }
    }

    #[test]
    fn compilation_is_deterministic() {
        let b = budgets(&[("cc", 1000), ("pmi", 500)]);
        let a = build_schedule(Strategy::MultiDomainIttl, &b, &dom("pmi"), &Mode::InDomain, 222).unwrap();
        let c = build_schedule(Strategy::MultiDomainIttl, &b, &dom("pmi"), &Mode::InDomain, 222).unwrap();
        assert_eq!(a, c);
        // Budget order must not matter.
        let rev = budgets(&[("pmi", 500), ("cc", 1000)]);
        let d = build_schedule(Strategy::MultiDomainIttl, &rev, &dom("pmi"), &Mode::InDomain, 222).unwrap();
        assert_eq!(a, d);
    }

    #[test]
    fn schedule_serde_round_trip() {
        let b = budgets(&[("cc", 1000), ("pmi", 500)]);
        let s = build_schedule(Strategy::PretrainBitextMono, &b, &dom("pmi"), &Mode::InDomain, 222).unwrap();
        let json = serde_json::to_string_pretty(&s).unwrap();
        let back: Schedule = serde_json::from_str(&json).unwrap();
        assert_eq!(s, back);
        back.validate().unwrap();
    }

    proptest! {
        #[test]
        fn random_grids_produce_valid_unique_schedules(
            n_domains in 2usize..5,
            im in 1usize..5000,
            fi in 1usize..5000,
            seed in 0u64..10_000,
            out_domain in proptest::bool::ANY,
        ) {
            let domains: Vec<DomainId> = (0..n_domains).map(|i| dom(&format!("d{i}"))).collect();
            let mode = if out_domain {
                Mode::OutDomain { test: dom("unseen") }
            } else {
                Mode::InDomain
            };
            let grid = GridSpec {
                strategies: vec![
                    Strategy::VanillaFt,
                    Strategy::MultiDomainFt,
                    Strategy::MultiDomainIttl,
                    Strategy::PretrainBitext,
                    Strategy::PretrainBitextMono,
                ],
                intermediate_sizes: vec![im, im + 1],
                final_sizes: vec![fi],
                domains: domains.clone(),
                target: domains[0].clone(),
                modes: vec![mode],
                seed,
                upsample: false,
            };
            let schedules = enumerate_grid(&grid).unwrap();
            prop_assert_eq!(schedules.len(), 10);
            let ids: BTreeSet<String> = schedules.iter().map(|s| s.id.clone()).collect();
            prop_assert_eq!(ids.len(), schedules.len());
            for s in &schedules {
                s.validate().unwrap();
            }
        }
    }
}
