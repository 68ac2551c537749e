//! Instance model for budgeted social choice: atoms with costs, merged
//! outcomes, comparison sets, and strict ordinal preferences.
//!
//! An instance consists of a set of cost-bearing atoms, a budget `B`, a
//! comparison set `C` of outcomes (each a set of atoms, with the empty set
//! serving as the null outcome `⊥`), and one strict preference order per
//! voter over `C` with `⊥` last. Outcomes merge by atom-set union, so costs
//! are sub-additive and a merge weakly improves every voter.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use thiserror::Error;

/// Index of a voter within an [`Instance`].
pub type VoterId = usize;
/// Index of a comparison-set element within an [`Instance`].
pub type CIdx = usize;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("document is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("instance has no atoms")]
    NoAtoms,
    #[error("duplicate atom id {0:?}")]
    DuplicateAtomId(String),
    #[error("duplicate voter id {0:?}")]
    DuplicateVoterId(String),
    #[error("atom {0:?} has zero cost; only ⊥ may cost zero")]
    ZeroCostAtom(String),
    #[error("atom {id:?} costs {cost}, below the minimum cost of 1")]
    AtomCostBelowMin { id: String, cost: f64 },
    #[error("atom {id:?} has a non-finite cost")]
    NonFiniteCost { id: String },
    #[error("budget {0} is below 1; only ⊥ would be feasible")]
    BudgetBelowMin(f64),
    #[error("budget {0} is not a finite positive number")]
    BadBudget(f64),
    #[error("comparison set does not contain ⊥ (the empty outcome)")]
    MissingBot,
    #[error("comparison set lists ⊥ more than once")]
    DuplicateBot,
    #[error("comparison set contains a duplicate element {0:?}")]
    DuplicateComparison(Vec<String>),
    #[error("unknown atom id {0:?}")]
    UnknownAtom(String),
    #[error("voter {0:?} has no ranking")]
    MissingRanking(String),
    #[error("ranking for voter {0:?} names an unknown voter or is not attached to one")]
    UnknownVoter(String),
    #[error("ranking for voter {voter:?} is not a permutation of the expected elements")]
    RankingNotPermutation { voter: String },
    #[error("ranking for voter {voter:?} violates the invariant: ⊥ must be ranked last")]
    BotNotLast { voter: String },
    #[error("preferences for voter {voter:?} are not a strict order over the comparison set (elements {a:?} and {b:?} tie)")]
    NonStrictOrder { voter: String, a: Vec<String>, b: Vec<String> },
    #[error("distance-ranking needs one point per voter: {points} points for {voters} voters")]
    PointCountMismatch { points: usize, voters: usize },
    #[error("distance-ranking needs one center per atom: {centers} centers for {atoms} atoms")]
    CenterCountMismatch { centers: usize, atoms: usize },
    #[error("point or center coordinates are not finite or have mismatched dimensions")]
    BadCoordinates,
    #[error("price {0} is outside [0,1]")]
    PriceOutOfRange(f64),
    #[error("price of ⊥ must be 0, got {0}")]
    BotPriceNotZero(f64),
    #[error("price data has wrong shape: expected {expected} entries, got {got}")]
    PriceShape { expected: usize, got: usize },
    #[error("tau {0} is outside (0,1]")]
    TauOutOfRange(f64),
}

/// A cost-bearing generator of outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub id: String,
    pub cost: f64,
}

/// A set of atoms, stored as sorted indices into [`Instance::atoms`].
///
/// The empty set is the null outcome `⊥`: cost zero, least preferred by
/// every voter. Merging is set union, so `cost(S ⊕ T) ≤ cost(S) + cost(T)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Outcome(Vec<usize>);

impl Outcome {
    /// The null outcome `⊥`.
    pub fn bottom() -> Self {
        Outcome(Vec::new())
    }

    /// Builds an outcome from atom indices, deduplicating and sorting.
    pub fn from_atom_indices(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Outcome(indices)
    }

    pub fn atom_indices(&self) -> &[usize] {
        &self.0
    }

    pub fn is_bottom(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Set union; the merge operation `⊕`.
    pub fn merge(&self, other: &Outcome) -> Outcome {
        let mut merged = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => {
                    merged.push(self.0[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    merged.push(other.0[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    merged.push(self.0[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        merged.extend_from_slice(&self.0[i..]);
        merged.extend_from_slice(&other.0[j..]);
        Outcome(merged)
    }

    /// True when every atom of `other` is present in `self`.
    pub fn contains_all(&self, other: &Outcome) -> bool {
        let mut i = 0;
        for &a in &other.0 {
            while i < self.0.len() && self.0[i] < a {
                i += 1;
            }
            if i >= self.0.len() || self.0[i] != a {
                return false;
            }
            i += 1;
        }
        true
    }
}

/// Result of comparing two outcomes for one voter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    FirstStrictlyBetter,
    SecondStrictlyBetter,
    Tie,
}

/// How per-voter preference data was supplied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreferenceKind {
    ExplicitOrder,
    TopElementRanking,
    DistanceRanking,
    ComboContainment,
}

impl PreferenceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PreferenceKind::ExplicitOrder => "explicit-order",
            PreferenceKind::TopElementRanking => "top-element-ranking",
            PreferenceKind::DistanceRanking => "distance-ranking",
            PreferenceKind::ComboContainment => "combo-containment",
        }
    }
}

/// Sentinel rank for outcomes realizing no ranked element (worse than all).
const RANK_BOT: u32 = u32::MAX;

/// Evaluator internals: either a per-voter order over atoms (merged outcomes
/// are judged by their best-ranked atom) or a per-voter order over the
/// comparison set (merged outcomes are judged by the best-ranked C-element
/// they contain).
#[derive(Debug, Clone)]
enum Evaluator {
    AtomOrder { rank: Vec<Vec<u32>> },
    ComboOrder { rank: Vec<Vec<u32>> },
}

/// Raw preference data retained for serialization round-trips.
#[derive(Debug, Clone)]
enum PreferenceSource {
    AtomRankings(Vec<Vec<usize>>),
    ComboRankings(Vec<Vec<CIdx>>),
    Distances { points: Vec<Vec<f64>>, centers: Vec<Vec<f64>> },
}

/// A fully validated instance of budgeted social choice.
///
/// Immutable after load; safe to share across threads.
#[derive(Debug, Clone)]
pub struct Instance {
    voters: Vec<String>,
    atoms: Vec<Atom>,
    budget: f64,
    comparison: Vec<Outcome>,
    bot: CIdx,
    kind: PreferenceKind,
    evaluator: Evaluator,
    source: PreferenceSource,
    /// Per voter: comparison-set indices from best to worst (`⊥` last).
    c_order: Vec<Vec<CIdx>>,
    /// Per voter: position of each C-element in `c_order` (0 = best).
    c_pos: Vec<Vec<u32>>,
}

impl Instance {
    pub fn n(&self) -> usize {
        self.voters.len()
    }

    pub fn voters(&self) -> &[String] {
        &self.voters
    }

    pub fn voter_id(&self, v: VoterId) -> &str {
        &self.voters[v]
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn comparison_set(&self) -> &[Outcome] {
        &self.comparison
    }

    pub fn bot(&self) -> CIdx {
        self.bot
    }

    pub fn preference_kind(&self) -> PreferenceKind {
        self.kind
    }

    /// Cost of an outcome: sum of its distinct atoms' costs.
    pub fn cost(&self, outcome: &Outcome) -> f64 {
        // fold from +0.0: an empty Sum<f64> would give -0.0, which survives
        // into display output.
        outcome.atom_indices().iter().fold(0.0, |acc, &a| acc + self.atoms[a].cost)
    }

    pub fn c_cost(&self, j: CIdx) -> f64 {
        self.cost(&self.comparison[j])
    }

    /// Atom ids of an outcome, in index order.
    pub fn atom_ids(&self, outcome: &Outcome) -> Vec<String> {
        outcome.atom_indices().iter().map(|&a| self.atoms[a].id.clone()).collect()
    }

    /// Builds an outcome from atom id strings.
    pub fn outcome_from_ids<S: AsRef<str>>(&self, ids: &[S]) -> Result<Outcome, ModelError> {
        let mut indices = Vec::with_capacity(ids.len());
        for id in ids {
            let idx = self
                .atoms
                .iter()
                .position(|a| a.id == id.as_ref())
                .ok_or_else(|| ModelError::UnknownAtom(id.as_ref().to_string()))?;
            indices.push(idx);
        }
        Ok(Outcome::from_atom_indices(indices))
    }

    /// Evaluator value of an outcome for one voter; lower is better.
    ///
    /// Atom-ranked evaluators score a merged outcome by its best-ranked atom;
    /// containment evaluators by the best-ranked C-element realized inside it.
    /// `⊥` (and any outcome realizing nothing ranked) scores [`RANK_BOT`].
    pub fn value(&self, voter: VoterId, outcome: &Outcome) -> u32 {
        match &self.evaluator {
            Evaluator::AtomOrder { rank } => {
                outcome.atom_indices().iter().map(|&a| rank[voter][a]).min().unwrap_or(RANK_BOT)
            }
            Evaluator::ComboOrder { rank } => {
                let mut best = RANK_BOT;
                for (j, c) in self.comparison.iter().enumerate() {
                    if j != self.bot && outcome.contains_all(c) {
                        best = best.min(rank[voter][j]);
                    }
                }
                best
            }
        }
    }

    /// Strict three-way comparison of two outcomes for one voter.
    pub fn compare(&self, voter: VoterId, first: &Outcome, second: &Outcome) -> Comparison {
        let a = self.value(voter, first);
        let b = self.value(voter, second);
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Comparison::FirstStrictlyBetter,
            std::cmp::Ordering::Greater => Comparison::SecondStrictlyBetter,
            std::cmp::Ordering::Equal => Comparison::Tie,
        }
    }

    /// True when voter `v` strictly prefers C-element `j` to `outcome`.
    pub fn strictly_prefers_c(&self, voter: VoterId, j: CIdx, outcome: &Outcome) -> bool {
        self.value(voter, &self.comparison[j]) < self.value(voter, outcome)
    }

    /// Comparison-set indices from best to worst for one voter (`⊥` last).
    pub fn c_order(&self, voter: VoterId) -> &[CIdx] {
        &self.c_order[voter]
    }

    /// Position of C-element `j` in the voter's strict order (0 = best).
    pub fn c_position(&self, voter: VoterId, j: CIdx) -> u32 {
        self.c_pos[voter][j]
    }

    /// The voter's most-preferred element of `c_subset` priced at most `tau`.
    ///
    /// `prices` aligns with `c_subset`; the subset must contain `⊥` and its
    /// price must be zero, so the boundary always exists.
    pub fn boundary_index_in(
        &self,
        voter: VoterId,
        c_subset: &[CIdx],
        prices: &[f64],
        tau: f64,
    ) -> Result<usize, ModelError> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(ModelError::TauOutOfRange(tau));
        }
        if prices.len() != c_subset.len() {
            return Err(ModelError::PriceShape { expected: c_subset.len(), got: prices.len() });
        }
        let mut best: Option<usize> = None;
        for (k, (&j, &price)) in c_subset.iter().zip(prices).enumerate() {
            if !(0.0..=1.0).contains(&price) || !price.is_finite() {
                return Err(ModelError::PriceOutOfRange(price));
            }
            if j == self.bot && price != 0.0 {
                return Err(ModelError::BotPriceNotZero(price));
            }
            if price <= tau {
                match best {
                    Some(b) if self.c_pos[voter][c_subset[b]] <= self.c_pos[voter][j] => {}
                    _ => best = Some(k),
                }
            }
        }
        match best {
            Some(k) => Ok(k),
            None => {
                // ⊥ is always affordable at price zero; reaching here means
                // the subset omitted it.
                Err(ModelError::MissingBot)
            }
        }
    }

    /// The voter's most-preferred C-element priced at most `tau` (the
    /// τ-boundary outcome); `⊥` when nothing else is affordable.
    pub fn boundary_outcome(
        &self,
        voter: VoterId,
        prices: &[f64],
        tau: f64,
    ) -> Result<&Outcome, ModelError> {
        let full: Vec<CIdx> = (0..self.comparison.len()).collect();
        let k = self.boundary_index_in(voter, &full, prices, tau)?;
        Ok(&self.comparison[k])
    }

    /// Voters whose τ-boundary outcome is weakly beaten by `outcome`
    /// (ties count as covered).
    ///
    /// `prices` has one row per voter, aligned with the full comparison set.
    pub fn covered_set(
        &self,
        outcome: &Outcome,
        prices: &[Vec<f64>],
        tau: f64,
    ) -> Result<Vec<bool>, ModelError> {
        if prices.len() != self.n() {
            return Err(ModelError::PriceShape { expected: self.n(), got: prices.len() });
        }
        let full: Vec<CIdx> = (0..self.comparison.len()).collect();
        let mut covered = vec![false; self.n()];
        for v in 0..self.n() {
            let k = self.boundary_index_in(v, &full, &prices[v], tau)?;
            covered[v] = self.value(v, outcome) <= self.value(v, &self.comparison[k]);
        }
        Ok(covered)
    }

    /// Serializes back to the document schema.
    pub fn to_document(&self) -> InstanceDoc {
        let preferences = match (&self.source, self.kind) {
            (PreferenceSource::AtomRankings(orders), _) => PreferencesDoc::TopElementRanking {
                rankings: self
                    .voters
                    .iter()
                    .zip(orders)
                    .map(|(v, order)| {
                        (v.clone(), order.iter().map(|&a| self.atoms[a].id.clone()).collect())
                    })
                    .collect(),
            },
            (PreferenceSource::ComboRankings(orders), kind) => {
                let rankings = self
                    .voters
                    .iter()
                    .zip(orders)
                    .map(|(v, order)| (v.clone(), order.clone()))
                    .collect();
                if kind == PreferenceKind::ComboContainment {
                    PreferencesDoc::ComboContainment { rankings }
                } else {
                    PreferencesDoc::ExplicitOrder { rankings }
                }
            }
            (PreferenceSource::Distances { points, centers }, _) => {
                PreferencesDoc::DistanceRanking { points: points.clone(), centers: centers.clone() }
            }
        };
        InstanceDoc {
            voters: VotersDoc::Ids(self.voters.clone()),
            atoms: self.atoms.iter().map(|a| AtomDoc { id: a.id.clone(), cost: a.cost }).collect(),
            budget: self.budget,
            comparison_set: self.comparison.iter().map(|c| self.atom_ids(c)).collect(),
            preferences,
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("instance serializes")
    }
}

/// A view of an instance restricted to a voter subset, a comparison subset,
/// and a working budget. Rounds of iterated rounding and LP builds operate
/// on such views; [`SubInstance::full`] covers whole-instance use.
#[derive(Debug, Clone)]
pub struct SubInstance<'a> {
    pub instance: &'a Instance,
    /// Active voters, ascending.
    pub voters: Vec<VoterId>,
    /// Active comparison-set indices; always contains `⊥`.
    pub c: Vec<CIdx>,
    pub budget: f64,
}

impl<'a> SubInstance<'a> {
    pub fn full(instance: &'a Instance) -> Self {
        SubInstance {
            instance,
            voters: (0..instance.n()).collect(),
            c: (0..instance.comparison_set().len()).collect(),
            budget: instance.budget(),
        }
    }

    pub fn n(&self) -> usize {
        self.voters.len()
    }

    /// Position of `⊥` within `self.c`.
    pub fn bot_pos(&self) -> usize {
        self.c.iter().position(|&j| j == self.instance.bot()).expect("subinstance always retains ⊥")
    }

    /// Restricts to elements with cost at most `threshold`, keeping `⊥`.
    pub fn with_cost_at_most(&self, threshold: f64, budget: f64) -> SubInstance<'a> {
        let c = self
            .c
            .iter()
            .copied()
            .filter(|&j| j == self.instance.bot() || self.instance.c_cost(j) <= threshold)
            .collect();
        SubInstance { instance: self.instance, voters: self.voters.clone(), c, budget }
    }

    /// True when only `⊥` remains in the comparison subset.
    pub fn only_bot(&self) -> bool {
        self.c.iter().all(|&j| j == self.instance.bot())
    }
}

// ---------------------------------------------------------------------------
// Document schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AtomDoc {
    pub id: String,
    pub cost: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VotersDoc {
    Count(usize),
    Ids(Vec<String>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum PreferencesDoc {
    #[serde(rename = "top-element-ranking")]
    TopElementRanking { rankings: BTreeMap<String, Vec<String>> },
    #[serde(rename = "explicit-order")]
    ExplicitOrder { rankings: BTreeMap<String, Vec<CIdx>> },
    #[serde(rename = "combo-containment")]
    ComboContainment { rankings: BTreeMap<String, Vec<CIdx>> },
    #[serde(rename = "distance-ranking")]
    DistanceRanking { points: Vec<Vec<f64>>, centers: Vec<Vec<f64>> },
}

/// On-disk instance document; see the JSON schema in the user guide.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceDoc {
    pub voters: VotersDoc,
    pub atoms: Vec<AtomDoc>,
    pub budget: f64,
    pub comparison_set: Vec<Vec<String>>,
    pub preferences: PreferencesDoc,
}

/// Parses and validates a JSON instance document.
pub fn load_instance(document: &str) -> Result<Instance, ModelError> {
    let doc: InstanceDoc = serde_json::from_str(document)?;
    Instance::from_document(doc)
}

impl Instance {
    pub fn from_document(doc: InstanceDoc) -> Result<Instance, ModelError> {
        if doc.atoms.is_empty() {
            return Err(ModelError::NoAtoms);
        }
        let mut atom_index: HashMap<String, usize> = HashMap::new();
        let mut atoms = Vec::with_capacity(doc.atoms.len());
        for (i, a) in doc.atoms.iter().enumerate() {
            if atom_index.insert(a.id.clone(), i).is_some() {
                return Err(ModelError::DuplicateAtomId(a.id.clone()));
            }
            if !a.cost.is_finite() {
                return Err(ModelError::NonFiniteCost { id: a.id.clone() });
            }
            if a.cost == 0.0 {
                return Err(ModelError::ZeroCostAtom(a.id.clone()));
            }
            if a.cost < 1.0 {
                return Err(ModelError::AtomCostBelowMin { id: a.id.clone(), cost: a.cost });
            }
            atoms.push(Atom { id: a.id.clone(), cost: a.cost });
        }

        if !doc.budget.is_finite() || doc.budget <= 0.0 {
            return Err(ModelError::BadBudget(doc.budget));
        }
        if doc.budget < 1.0 {
            return Err(ModelError::BudgetBelowMin(doc.budget));
        }

        let voters: Vec<String> = match doc.voters {
            VotersDoc::Count(k) => (0..k).map(|i| format!("v{i}")).collect(),
            VotersDoc::Ids(ids) => {
                let mut seen = HashSet::new();
                for id in &ids {
                    if !seen.insert(id.clone()) {
                        return Err(ModelError::DuplicateVoterId(id.clone()));
                    }
                }
                ids
            }
        };

        let mut comparison = Vec::with_capacity(doc.comparison_set.len());
        let mut bot: Option<CIdx> = None;
        let mut seen_c: HashSet<Outcome> = HashSet::new();
        for (j, ids) in doc.comparison_set.iter().enumerate() {
            let mut indices = Vec::with_capacity(ids.len());
            for id in ids {
                let &idx = atom_index.get(id).ok_or_else(|| ModelError::UnknownAtom(id.clone()))?;
                indices.push(idx);
            }
            let outcome = Outcome::from_atom_indices(indices);
            if outcome.is_bottom() {
                if bot.is_some() {
                    return Err(ModelError::DuplicateBot);
                }
                bot = Some(j);
            }
            if !seen_c.insert(outcome.clone()) {
                return Err(ModelError::DuplicateComparison(ids.clone()));
            }
            comparison.push(outcome);
        }
        let bot = bot.ok_or(ModelError::MissingBot)?;

        let n = voters.len();
        let m_atoms = atoms.len();
        let (kind, evaluator, source) = match doc.preferences {
            PreferencesDoc::TopElementRanking { rankings } => {
                let orders = collect_rankings(&voters, &rankings)?;
                let mut rank = vec![vec![0u32; m_atoms]; n];
                let mut order_idx = Vec::with_capacity(n);
                for (v, order) in orders.iter().enumerate() {
                    let mut seen = vec![false; m_atoms];
                    if order.len() != m_atoms {
                        return Err(ModelError::RankingNotPermutation { voter: voters[v].clone() });
                    }
                    let mut indices = Vec::with_capacity(order.len());
                    for (pos, id) in order.iter().enumerate() {
                        let &idx = atom_index
                            .get(id)
                            .ok_or_else(|| ModelError::UnknownAtom(id.clone()))?;
                        if seen[idx] {
                            return Err(ModelError::RankingNotPermutation {
                                voter: voters[v].clone(),
                            });
                        }
                        seen[idx] = true;
                        rank[v][idx] = pos as u32;
                        indices.push(idx);
                    }
                    order_idx.push(indices);
                }
                (
                    PreferenceKind::TopElementRanking,
                    Evaluator::AtomOrder { rank },
                    PreferenceSource::AtomRankings(order_idx),
                )
            }
            PreferencesDoc::ExplicitOrder { rankings } => {
                let (rank, orders) = combo_rank_table(&voters, &rankings, comparison.len(), bot)?;
                (
                    PreferenceKind::ExplicitOrder,
                    Evaluator::ComboOrder { rank },
                    PreferenceSource::ComboRankings(orders),
                )
            }
            PreferencesDoc::ComboContainment { rankings } => {
                let (rank, orders) = combo_rank_table(&voters, &rankings, comparison.len(), bot)?;
                (
                    PreferenceKind::ComboContainment,
                    Evaluator::ComboOrder { rank },
                    PreferenceSource::ComboRankings(orders),
                )
            }
            PreferencesDoc::DistanceRanking { points, centers } => {
                if points.len() != n {
                    return Err(ModelError::PointCountMismatch { points: points.len(), voters: n });
                }
                if centers.len() != m_atoms {
                    return Err(ModelError::CenterCountMismatch {
                        centers: centers.len(),
                        atoms: m_atoms,
                    });
                }
                let rank = distance_rank_table(&points, &centers)?;
                (
                    PreferenceKind::DistanceRanking,
                    Evaluator::AtomOrder { rank },
                    PreferenceSource::Distances { points, centers },
                )
            }
        };

        let mut instance = Instance {
            voters,
            atoms,
            budget: doc.budget,
            comparison,
            bot,
            kind,
            evaluator,
            source,
            c_order: Vec::new(),
            c_pos: Vec::new(),
        };
        instance.build_c_orders()?;
        Ok(instance)
    }

    /// Sorts the comparison set per voter by evaluator value and checks
    /// strictness with `⊥` last.
    fn build_c_orders(&mut self) -> Result<(), ModelError> {
        let m = self.comparison.len();
        let mut c_order = Vec::with_capacity(self.n());
        let mut c_pos = Vec::with_capacity(self.n());
        for v in 0..self.n() {
            let values: Vec<u32> = (0..m).map(|j| self.value(v, &self.comparison[j])).collect();
            let mut order: Vec<CIdx> = (0..m).collect();
            order.sort_by_key(|&j| (values[j], j));
            for w in order.windows(2) {
                if values[w[0]] == values[w[1]] {
                    return Err(ModelError::NonStrictOrder {
                        voter: self.voters[v].clone(),
                        a: self.atom_ids(&self.comparison[w[0]]),
                        b: self.atom_ids(&self.comparison[w[1]]),
                    });
                }
            }
            if *order.last().expect("comparison set nonempty") != self.bot {
                return Err(ModelError::BotNotLast { voter: self.voters[v].clone() });
            }
            let mut pos = vec![0u32; m];
            for (p, &j) in order.iter().enumerate() {
                pos[j] = p as u32;
            }
            c_order.push(order);
            c_pos.push(pos);
        }
        self.c_order = c_order;
        self.c_pos = c_pos;
        Ok(())
    }
}

fn collect_rankings(
    voters: &[String],
    rankings: &BTreeMap<String, Vec<String>>,
) -> Result<Vec<Vec<String>>, ModelError> {
    for key in rankings.keys() {
        if !voters.iter().any(|v| v == key) {
            return Err(ModelError::UnknownVoter(key.clone()));
        }
    }
    voters
        .iter()
        .map(|v| rankings.get(v).cloned().ok_or_else(|| ModelError::MissingRanking(v.clone())))
        .collect()
}

/// Builds the per-voter rank table for comparison-set index rankings.
/// Each ranking must be a permutation of all C indices with `⊥` last.
fn combo_rank_table(
    voters: &[String],
    rankings: &BTreeMap<String, Vec<CIdx>>,
    m: usize,
    bot: CIdx,
) -> Result<(Vec<Vec<u32>>, Vec<Vec<CIdx>>), ModelError> {
    for key in rankings.keys() {
        if !voters.iter().any(|v| v == key) {
            return Err(ModelError::UnknownVoter(key.clone()));
        }
    }
    let mut rank = Vec::with_capacity(voters.len());
    let mut orders = Vec::with_capacity(voters.len());
    for v in voters {
        let order = rankings.get(v).ok_or_else(|| ModelError::MissingRanking(v.clone()))?;
        if order.len() != m {
            return Err(ModelError::RankingNotPermutation { voter: v.clone() });
        }
        let mut table = vec![u32::MAX; m];
        for (pos, &j) in order.iter().enumerate() {
            if j >= m || table[j] != u32::MAX {
                return Err(ModelError::RankingNotPermutation { voter: v.clone() });
            }
            table[j] = pos as u32;
        }
        if order.last() != Some(&bot) {
            return Err(ModelError::BotNotLast { voter: v.clone() });
        }
        rank.push(table);
        orders.push(order.clone());
    }
    Ok((rank, orders))
}

/// Ranks centers per point by squared distance, ties broken by center index.
fn distance_rank_table(
    points: &[Vec<f64>],
    centers: &[Vec<f64>],
) -> Result<Vec<Vec<u32>>, ModelError> {
    let dim = points.first().map(|p| p.len()).or_else(|| centers.first().map(|c| c.len()));
    let dim = dim.unwrap_or(0);
    let check = |v: &Vec<f64>| v.len() == dim && v.iter().all(|x| x.is_finite());
    if !points.iter().all(check) || !centers.iter().all(check) {
        return Err(ModelError::BadCoordinates);
    }
    let mut rank = Vec::with_capacity(points.len());
    for p in points {
        let mut by_dist: Vec<usize> = (0..centers.len()).collect();
        let dist =
            |ci: usize| -> f64 { p.iter().zip(&centers[ci]).map(|(a, b)| (a - b) * (a - b)).sum() };
        by_dist.sort_by(|&a, &b| {
            dist(a).partial_cmp(&dist(b)).expect("finite distances").then(a.cmp(&b))
        });
        let mut table = vec![0u32; centers.len()];
        for (pos, &ci) in by_dist.iter().enumerate() {
            table[ci] = pos as u32;
        }
        rank.push(table);
    }
    Ok(rank)
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_bottom() {
            write!(f, "⊥")
        } else {
            write!(
                f,
                "{{#{}}}",
                self.0.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(",#")
            )
        }
    }
}

#[cfg(test)]
pub(crate) mod test_fixtures {
    /// The canonical three-voter cyclic instance used across the test suite.
    pub const T1: &str = r#"{
        "voters": ["v1", "v2", "v3"],
        "atoms": [{"id": "a", "cost": 1}, {"id": "b", "cost": 1}, {"id": "c", "cost": 1}],
        "budget": 2,
        "comparison_set": [[], ["a"], ["b"], ["c"]],
        "preferences": {
            "kind": "top-element-ranking",
            "rankings": {"v1": ["a", "b", "c"], "v2": ["b", "c", "a"], "v3": ["c", "a", "b"]}
        }
    }"#;
}

#[cfg(test)]
mod tests {
    use super::test_fixtures::T1;
    use super::*;

    fn t1() -> Instance {
        load_instance(T1).expect("T1 loads")
    }

    #[test]
    fn t1_loads_and_validates() {
        let inst = t1();
        assert_eq!(inst.n(), 3);
        assert_eq!(inst.atoms().len(), 3);
        assert_eq!(inst.comparison_set().len(), 4);
        assert_eq!(inst.budget(), 2.0);
        assert_eq!(inst.bot(), 0);
    }

    #[test]
    fn zero_cost_atom_rejected() {
        let doc = T1.replace(r#"{"id": "a", "cost": 1}"#, r#"{"id": "a", "cost": 0}"#);
        assert!(matches!(load_instance(&doc), Err(ModelError::ZeroCostAtom(_))));
    }

    #[test]
    fn fractional_cost_atom_rejected() {
        let doc = T1.replace(r#"{"id": "a", "cost": 1}"#, r#"{"id": "a", "cost": 0.5}"#);
        assert!(matches!(load_instance(&doc), Err(ModelError::AtomCostBelowMin { .. })));
    }

    #[test]
    fn missing_bot_rejected() {
        let doc = T1.replace(r#"[[], ["a"], ["b"], ["c"]]"#, r#"[["a"], ["b"], ["c"]]"#);
        assert!(matches!(load_instance(&doc), Err(ModelError::MissingBot)));
    }

    #[test]
    fn explicit_order_must_rank_bot_last() {
        let doc = r#"{
            "voters": ["v1"],
            "atoms": [{"id": "a", "cost": 1}, {"id": "b", "cost": 1}],
            "budget": 2,
            "comparison_set": [[], ["a"], ["b"]],
            "preferences": {"kind": "explicit-order", "rankings": {"v1": [0, 1, 2]}}
        }"#;
        assert!(matches!(load_instance(doc), Err(ModelError::BotNotLast { .. })));
        let short = doc.replace("[0, 1, 2]", "[1, 2]");
        assert!(matches!(load_instance(&short), Err(ModelError::RankingNotPermutation { .. })));
    }

    #[test]
    fn merge_is_union_with_subadditive_cost() {
        let inst = t1();
        let ab = inst.outcome_from_ids(&["a", "b"]).unwrap();
        let bc = inst.outcome_from_ids(&["b", "c"]).unwrap();
        let merged = ab.merge(&bc);
        assert_eq!(inst.cost(&merged), 3.0);
        assert!(inst.cost(&merged) < inst.cost(&ab) + inst.cost(&bc));
        assert_eq!(ab.merge(&Outcome::bottom()), ab);
    }

    #[test]
    fn compare_follows_rankings() {
        let inst = t1();
        let ab = inst.outcome_from_ids(&["a", "b"]).unwrap();
        let c = inst.outcome_from_ids(&["c"]).unwrap();
        let a = inst.outcome_from_ids(&["a"]).unwrap();
        let ac = inst.outcome_from_ids(&["a", "c"]).unwrap();
        // v3 ranks c ≻ a ≻ b: the singleton {c} beats {a,b}.
        assert_eq!(inst.compare(2, &ab, &c), Comparison::SecondStrictlyBetter);
        // v1: {a,c} and {a} both realize a.
        assert_eq!(inst.compare(0, &ac, &a), Comparison::Tie);
        // ⊥ never strictly wins.
        for v in 0..3 {
            assert_ne!(inst.compare(v, &ab, &Outcome::bottom()), Comparison::SecondStrictlyBetter);
        }
    }

    #[test]
    fn boundary_outcome_tracks_tau() {
        // Prices on t1's v1 (a ≻ b ≻ c): a at 1/2, b and c at 1/3 each.
        let inst = t1();
        let prices = vec![0.0, 0.5, 1.0 / 3.0, 1.0 / 3.0];
        let b = inst.outcome_from_ids(&["b"]).unwrap();
        let a = inst.outcome_from_ids(&["a"]).unwrap();
        assert_eq!(inst.boundary_outcome(0, &prices, 0.4).unwrap(), &b);
        assert_eq!(inst.boundary_outcome(0, &prices, 0.2).unwrap(), &Outcome::bottom());
        assert_eq!(inst.boundary_outcome(0, &prices, 1.0).unwrap(), &a);
    }

    #[test]
    fn covered_set_weak_comparison() {
        let inst = t1();
        // All prices 0.9: every boundary is ⊥, so anything covers everyone.
        let pricey = vec![vec![0.0, 0.9, 0.9, 0.9]; 3];
        let covered = inst.covered_set(&Outcome::bottom(), &pricey, 0.5).unwrap();
        assert!(covered.iter().all(|&c| c));
        // All prices zero: boundary is each voter's top; the full merge covers all,
        // ⊥ covers nobody.
        let free = vec![vec![0.0; 4]; 3];
        let all = inst.outcome_from_ids(&["a", "b", "c"]).unwrap();
        assert!(inst.covered_set(&all, &free, 0.5).unwrap().iter().all(|&c| c));
        assert!(inst.covered_set(&Outcome::bottom(), &free, 0.5).unwrap().iter().all(|&c| !c));
    }

    #[test]
    fn distance_ranking_breaks_ties_by_index() {
        let doc = r#"{
            "voters": 2,
            "atoms": [{"id": "c0", "cost": 1}, {"id": "c1", "cost": 1}],
            "budget": 1,
            "comparison_set": [[], ["c0"], ["c1"]],
            "preferences": {"kind": "distance-ranking",
                            "points": [[0.5], [2.0]],
                            "centers": [[0.0], [1.0]]}
        }"#;
        let inst = load_instance(doc).unwrap();
        // Point 0 is equidistant: tie broken toward center 0.
        let c0 = inst.outcome_from_ids(&["c0"]).unwrap();
        let c1 = inst.outcome_from_ids(&["c1"]).unwrap();
        assert_eq!(inst.compare(0, &c0, &c1), Comparison::FirstStrictlyBetter);
        assert_eq!(inst.compare(1, &c1, &c0), Comparison::FirstStrictlyBetter);
    }

    #[test]
    fn document_round_trip() {
        let inst = t1();
        let reloaded = load_instance(&inst.to_json_string()).unwrap();
        assert_eq!(reloaded.n(), inst.n());
        assert_eq!(reloaded.comparison_set(), inst.comparison_set());
        for v in 0..inst.n() {
            assert_eq!(reloaded.c_order(v), inst.c_order(v));
        }
    }

    #[test]
    fn merge_dominance_on_t1() {
        let inst = t1();
        let singles: Vec<Outcome> = (0..3).map(|k| Outcome::from_atom_indices(vec![k])).collect();
        for s in &singles {
            for t in &singles {
                let merged = s.merge(t);
                for v in 0..inst.n() {
                    for o in inst.comparison_set() {
                        // The merge is never judged worse than either part.
                        assert!(inst.value(v, &merged) <= inst.value(v, s).min(inst.value(v, t)));
                        let before = inst.compare(v, s, o);
                        let after = inst.compare(v, &merged, o);
                        if before == Comparison::FirstStrictlyBetter {
                            assert_eq!(after, Comparison::FirstStrictlyBetter);
                        }
                    }
                }
            }
        }
    }
}
