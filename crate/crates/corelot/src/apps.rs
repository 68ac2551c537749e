//! Reductions from three application domains to budgeted social choice:
//! participatory budgeting from ranked ballots, center selection for
//! clustering, and multi-label selection. Also houses seeded synthetic
//! generators for each family and CSV ingestion for external data.

use crate::model::{AtomDoc, CIdx, Instance, InstanceDoc, ModelError, PreferencesDoc, VotersDoc};
use crate::rounding::trial_rng;
use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AppsError {
    #[error("participatory budgeting needs at least one project")]
    NoProjects,
    #[error("clustering needs at least one candidate center")]
    NoCenters,
    #[error("committee size must be at least 1, got {0}")]
    BadCommitteeSize(usize),
    #[error("label universe is empty")]
    NoLabels,
    #[error("per-item label cap must be at least 1")]
    BadLabelCap,
    #[error("label budget k = {k} must be at least the per-item cap {cap}")]
    BadLabelBudget { k: usize, cap: usize },
    #[error("unknown label {0:?} in a ranking")]
    UnknownLabel(String),
    #[error("combination {0:?} repeats a label or exceeds the per-item cap")]
    BadCombo(Vec<String>),
    #[error("generator sizes must all be positive")]
    BadGeneratorSize,
    #[error("csv row {row}: {message}")]
    BadCsvRow { row: usize, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

// ---------------------------------------------------------------------------
// Participatory budgeting
// ---------------------------------------------------------------------------

/// A participatory-budgeting election: projects with costs, one strict
/// ranking per voter over all projects, and a spending budget.
#[derive(Debug, Clone)]
pub struct PbBallots {
    pub projects: Vec<(String, f64)>,
    /// Voter id to ranked project ids, best first.
    pub rankings: BTreeMap<String, Vec<String>>,
    pub budget: f64,
}

/// Builds the instance whose atoms are the projects and whose comparison
/// set is the singleton projects plus ⊥. A voter prefers whichever funded
/// set contains her better-ranked top project, so singleton comparisons
/// suffice to witness any deviation.
pub fn pb_from_rankings(ballots: &PbBallots) -> Result<Instance, AppsError> {
    if ballots.projects.is_empty() {
        return Err(AppsError::NoProjects);
    }
    let atoms =
        ballots.projects.iter().map(|(id, cost)| AtomDoc { id: id.clone(), cost: *cost }).collect();
    let mut comparison_set = vec![Vec::new()];
    comparison_set.extend(ballots.projects.iter().map(|(id, _)| vec![id.clone()]));
    let doc = InstanceDoc {
        voters: VotersDoc::Ids(ballots.rankings.keys().cloned().collect()),
        atoms,
        budget: ballots.budget,
        comparison_set,
        preferences: PreferencesDoc::TopElementRanking { rankings: ballots.rankings.clone() },
    };
    Ok(Instance::from_document(doc)?)
}

// ---------------------------------------------------------------------------
// Clustering
// ---------------------------------------------------------------------------

/// A center-selection input: points to represent, candidate centers in the
/// same coordinate space, and the number of centers to open.
#[derive(Debug, Clone)]
pub struct ClusteringData {
    pub points: Vec<Vec<f64>>,
    pub centers: Vec<Vec<f64>>,
    pub k: usize,
}

/// Builds the instance whose atoms are the unit-cost centers with budget
/// `k` and whose comparison set is the singleton centers plus ⊥. Each
/// point ranks centers by distance, nearer better, with distance ties
/// broken by center index so every order is strict.
pub fn clustering_instance(data: &ClusteringData) -> Result<Instance, AppsError> {
    if data.centers.is_empty() {
        return Err(AppsError::NoCenters);
    }
    if data.k == 0 {
        return Err(AppsError::BadCommitteeSize(data.k));
    }
    let ids: Vec<String> = (0..data.centers.len()).map(|i| format!("c{i}")).collect();
    let atoms = ids.iter().map(|id| AtomDoc { id: id.clone(), cost: 1.0 }).collect();
    let mut comparison_set = vec![Vec::new()];
    comparison_set.extend(ids.iter().map(|id| vec![id.clone()]));
    let doc = InstanceDoc {
        voters: VotersDoc::Count(data.points.len()),
        atoms,
        budget: data.k as f64,
        comparison_set,
        preferences: PreferencesDoc::DistanceRanking {
            points: data.points.clone(),
            centers: data.centers.clone(),
        },
    };
    Ok(Instance::from_document(doc)?)
}

// ---------------------------------------------------------------------------
// Multi-label selection
// ---------------------------------------------------------------------------

/// A multi-label selection input: a label universe, a cap on labels per
/// item, a selection budget `k`, and one strict ranking per item over all
/// label combinations of size 1 to the cap.
///
/// Rankings must place every combination above all of its sub-combinations.
/// The containment evaluator scores an outcome by the best combination it
/// realizes, so a sub-combination ranked higher would collapse the two into
/// a tie, which instance validation rejects as a non-strict order.
#[derive(Debug, Clone)]
pub struct MultiLabelData {
    pub labels: Vec<String>,
    /// Maximum labels assignable to one item.
    pub cap: usize,
    /// Number of labels to select overall.
    pub k: usize,
    /// Item id to ranked label combinations, best first.
    pub rankings: BTreeMap<String, Vec<Vec<String>>>,
}

/// All label combinations of size 1 to `cap`, sizes ascending and
/// lexicographic by label position within each size. This is the order in
/// which [`multilabel_instance`] lays out the comparison set after ⊥.
pub fn label_combos(labels: &[String], cap: usize) -> Vec<Vec<String>> {
    let mut combos = Vec::new();
    for d in 1..=cap.min(labels.len()) {
        for combo in (0..labels.len()).combinations(d) {
            combos.push(combo.into_iter().map(|i| labels[i].clone()).collect());
        }
    }
    combos
}

/// Builds the instance whose atoms are the unit-cost labels with budget
/// `k` and whose comparison set holds every combination of size up to the
/// cap, each costing its size. Items judge a selected label set by the
/// best-ranked combination contained in it.
pub fn multilabel_instance(data: &MultiLabelData) -> Result<Instance, AppsError> {
    if data.labels.is_empty() {
        return Err(AppsError::NoLabels);
    }
    if data.cap == 0 {
        return Err(AppsError::BadLabelCap);
    }
    if data.k < data.cap {
        return Err(AppsError::BadLabelBudget { k: data.k, cap: data.cap });
    }
    let label_pos: HashMap<&str, usize> =
        data.labels.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let combos = label_combos(&data.labels, data.cap);
    let mut combo_index: HashMap<Vec<usize>, CIdx> = HashMap::new();
    for (pos, combo) in combos.iter().enumerate() {
        let key: Vec<usize> = combo.iter().map(|id| label_pos[id.as_str()]).collect();
        combo_index.insert(key, pos + 1);
    }
    let mut rankings = BTreeMap::new();
    for (item, order) in &data.rankings {
        let mut indices: Vec<CIdx> = Vec::with_capacity(order.len() + 1);
        for combo in order {
            let mut key = Vec::with_capacity(combo.len());
            for label in combo {
                key.push(
                    *label_pos
                        .get(label.as_str())
                        .ok_or_else(|| AppsError::UnknownLabel(label.clone()))?,
                );
            }
            key.sort_unstable();
            key.dedup();
            if key.len() != combo.len() || key.len() > data.cap || key.is_empty() {
                return Err(AppsError::BadCombo(combo.clone()));
            }
            indices.push(combo_index[&key]);
        }
        indices.push(0);
        rankings.insert(item.clone(), indices);
    }
    let atoms = data.labels.iter().map(|id| AtomDoc { id: id.clone(), cost: 1.0 }).collect();
    let mut comparison_set = vec![Vec::new()];
    comparison_set.extend(combos);
    let doc = InstanceDoc {
        voters: VotersDoc::Ids(data.rankings.keys().cloned().collect()),
        atoms,
        budget: data.k as f64,
        comparison_set,
        preferences: PreferencesDoc::ComboContainment { rankings },
    };
    Ok(Instance::from_document(doc)?)
}

// ---------------------------------------------------------------------------
// Synthetic generators
// ---------------------------------------------------------------------------

/// Synthetic instance families. Every family is deterministic per seed.
#[derive(Debug, Clone, PartialEq)]
pub enum GenSpec {
    /// Impartial-culture ballots: uniform random strict rankings over
    /// projects with integer costs drawn from `[1, max_cost]`.
    Pb { voters: usize, projects: usize, max_cost: u32, budget: f64 },
    /// Points and centers drawn uniformly from the unit cube.
    Clustering { points: usize, centers: usize, k: usize, dim: usize },
    /// Items with random label affinities ranking combinations by total
    /// affinity, so larger combinations always beat their parts.
    MultiLabel { items: usize, labels: usize, cap: usize, k: usize },
}

/// Generates an instance of the requested family, deterministically in
/// `seed`.
pub fn generate(spec: &GenSpec, seed: u64) -> Result<Instance, AppsError> {
    let mut rng = trial_rng(seed, 0);
    match *spec {
        GenSpec::Pb { voters, projects, max_cost, budget } => {
            if voters == 0 || projects == 0 || max_cost == 0 {
                return Err(AppsError::BadGeneratorSize);
            }
            let ids: Vec<String> = (0..projects).map(|i| format!("p{i}")).collect();
            let priced =
                ids.iter().map(|id| (id.clone(), rng.gen_range(1..=max_cost) as f64)).collect();
            let mut rankings = BTreeMap::new();
            for v in 0..voters {
                let mut order = ids.clone();
                order.shuffle(&mut rng);
                rankings.insert(format!("v{v}"), order);
            }
            pb_from_rankings(&PbBallots { projects: priced, rankings, budget })
        }
        GenSpec::Clustering { points, centers, k, dim } => {
            if points == 0 || centers == 0 || dim == 0 {
                return Err(AppsError::BadGeneratorSize);
            }
            if k == 0 || k > centers {
                return Err(AppsError::BadCommitteeSize(k));
            }
            let mut draw = |count: usize| -> Vec<Vec<f64>> {
                (0..count).map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect()).collect()
            };
            let data = ClusteringData { points: draw(points), centers: draw(centers), k };
            clustering_instance(&data)
        }
        GenSpec::MultiLabel { items, labels, cap, k } => {
            if items == 0 || labels == 0 || cap > labels {
                return Err(AppsError::BadGeneratorSize);
            }
            let label_ids: Vec<String> = (0..labels).map(|i| format!("l{i}")).collect();
            let index_combos: Vec<Vec<usize>> =
                (1..=cap).flat_map(|d| (0..labels).combinations(d)).collect();
            let mut rankings = BTreeMap::new();
            for item in 0..items {
                // Affinities bounded away from zero keep combination
                // scores strictly increasing under containment.
                let affinity: Vec<f64> = (0..labels).map(|_| rng.gen_range(0.1..1.0)).collect();
                let score =
                    |combo: &Vec<usize>| -> f64 { combo.iter().map(|&l| affinity[l]).sum() };
                let mut order: Vec<usize> = (0..index_combos.len()).collect();
                order.sort_by(|&a, &b| {
                    score(&index_combos[b])
                        .partial_cmp(&score(&index_combos[a]))
                        .expect("finite affinities")
                        .then(a.cmp(&b))
                });
                let ranked = order
                    .iter()
                    .map(|&ci| index_combos[ci].iter().map(|&l| label_ids[l].clone()).collect())
                    .collect();
                rankings.insert(format!("i{item}"), ranked);
            }
            multilabel_instance(&MultiLabelData { labels: label_ids, cap, k, rankings })
        }
    }
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

/// Reads one point per row, every column a coordinate. No header row.
pub fn read_points_csv<R: Read>(reader: R) -> Result<Vec<Vec<f64>>, AppsError> {
    let mut rdr = csv_reader(reader);
    let mut points = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let mut point = Vec::with_capacity(record.len());
        for field in record.iter() {
            let value: f64 = field.parse().map_err(|_| AppsError::BadCsvRow {
                row: row + 1,
                message: format!("{field:?} is not a number"),
            })?;
            point.push(value);
        }
        points.push(point);
    }
    Ok(points)
}

/// Reads ballots with the voter id in the first column and project ids
/// from best to worst in the remaining columns. No header row.
pub fn read_ballots_csv<R: Read>(reader: R) -> Result<BTreeMap<String, Vec<String>>, AppsError> {
    let mut rdr = csv_reader(reader);
    let mut ballots = BTreeMap::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let mut fields = record.iter();
        let voter = fields.next().filter(|v| !v.is_empty()).ok_or_else(|| {
            AppsError::BadCsvRow { row: row + 1, message: "missing voter id".into() }
        })?;
        let ranking: Vec<String> = fields.map(str::to_string).collect();
        if ballots.insert(voter.to_string(), ranking).is_some() {
            return Err(AppsError::BadCsvRow {
                row: row + 1,
                message: format!("duplicate voter id {voter:?}"),
            });
        }
    }
    Ok(ballots)
}

/// Reads project costs as rows of id, cost. No header row.
pub fn read_costs_csv<R: Read>(reader: R) -> Result<Vec<(String, f64)>, AppsError> {
    let mut rdr = csv_reader(reader);
    let mut costs = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != 2 {
            return Err(AppsError::BadCsvRow {
                row: row + 1,
                message: format!("expected id,cost but found {} fields", record.len()),
            });
        }
        let cost: f64 = record[1].parse().map_err(|_| AppsError::BadCsvRow {
            row: row + 1,
            message: format!("{:?} is not a number", &record[1]),
        })?;
        costs.push((record[0].to_string(), cost));
    }
    Ok(costs)
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader)
}
