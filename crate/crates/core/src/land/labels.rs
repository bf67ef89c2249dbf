use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::scores::{DensityForest, LandScores};
use super::LandError;
use crate::graph::DiffusionCoords;
use crate::io::LabelMap;
use crate::scalar::{squared_distance, Real};

/// What the oracle said about one queried point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Answer {
    Class(u32),
    /// The oracle cannot assign a class (e.g. an unlabeled background pixel).
    Declined,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("oracle unavailable: {0}")]
pub struct OracleError(pub String);

/// Source of labels for queried points.
pub trait Oracle {
    fn label_of(&mut self, index: usize) -> Result<Answer, OracleError>;
}

/// Answers from a ground-truth map; background pixels (label 0) are declined.
#[derive(Debug, Clone)]
pub struct GroundTruthOracle<'a> {
    truth: &'a LabelMap,
    pub calls: usize,
}

impl<'a> GroundTruthOracle<'a> {
    pub fn new(truth: &'a LabelMap) -> Self {
        Self { truth, calls: 0 }
    }
}

impl Oracle for GroundTruthOracle<'_> {
    fn label_of(&mut self, index: usize) -> Result<Answer, OracleError> {
        self.calls += 1;
        match self.truth.labels.get(index) {
            Some(0) => Ok(Answer::Declined),
            Some(&c) => Ok(Answer::Class(c)),
            None => Err(OracleError(format!("index {index} outside the ground truth"))),
        }
    }
}

/// The label vector `y` (0 = unlabeled) and the bookkeeping of oracle queries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelState {
    pub y: Vec<u32>,
    /// Points labeled by the oracle, in query order.
    pub queried: Vec<usize>,
    /// Points the oracle declined to label.
    pub declined: Vec<usize>,
    pub budget: usize,
    /// Number of prefix entries of the query order already asked.
    pub asked: usize,
}

impl LabelState {
    pub fn empty(n: usize, budget: usize) -> Self {
        Self {
            y: vec![0; n],
            queried: Vec::new(),
            declined: Vec::new(),
            budget,
            asked: 0,
        }
    }

    /// A state whose labels come from a fixed set of `(index, class)` answers.
    pub fn from_answers(n: usize, answers: &[(usize, u32)]) -> Result<Self, LandError> {
        let mut state = Self::empty(n, answers.len());
        for &(index, class) in answers {
            if index >= n {
                return Err(LandError::IndexOutOfRange { index, n });
            }
            if class == 0 {
                return Err(LandError::InvalidClass(class));
            }
            if state.y[index] == 0 {
                state.queried.push(index);
            }
            state.y[index] = class;
        }
        state.asked = state.queried.len();
        Ok(state)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn labeled_count(&self) -> usize {
        self.y.iter().filter(|&&c| c != 0).count()
    }

    pub fn to_label_map(&self, num_classes: usize) -> LabelMap {
        LabelMap::with_num_classes(self.y.clone(), num_classes)
    }
}

/// Asks the oracle about the top-`budget` points of the query order.
///
/// On oracle failure the error carries the partial state, which [`resume_query`] continues.
pub fn query<T: Real>(scores: &LandScores<T>, oracle: &mut dyn Oracle, budget: usize) -> Result<LabelState, LandError> {
    let n = scores.query_order.len();
    if budget > n {
        return Err(LandError::BudgetTooLarge { budget, n });
    }
    resume_query(LabelState::empty(n, budget), scores, oracle)
}

pub fn resume_query<T: Real>(
    mut state: LabelState,
    scores: &LandScores<T>,
    oracle: &mut dyn Oracle,
) -> Result<LabelState, LandError> {
    while state.asked < state.budget {
        let index = scores.query_order[state.asked];
        match oracle.label_of(index) {
            Ok(Answer::Class(0)) => return Err(LandError::InvalidClass(0)),
            Ok(Answer::Class(c)) => {
                state.y[index] = c;
                state.queried.push(index);
            }
            Ok(Answer::Declined) => state.declined.push(index),
            Err(source) => {
                return Err(LandError::Oracle {
                    partial: Box::new(state),
                    source,
                })
            }
        }
        state.asked += 1;
    }
    Ok(state)
}

/// Density-ordered label propagation.
///
/// Points are visited densest first; an unlabeled point takes the label of its
/// `D_t`-nearest strictly denser point (all of which are labeled by then). If
/// the densest point itself is unlabeled it takes the label of the `D_t`-nearest
/// labeled point. Oracle labels are never overwritten.
pub fn propagate<T: Real>(
    state: &LabelState,
    forest: &DensityForest<T>,
    coords: &DiffusionCoords<T>,
) -> Result<LabelState, LandError> {
    let n = state.n();
    if forest.order.len() != n || coords.n() != n {
        return Err(LandError::Length(format!(
            "state has {n} points, forest {} and coords {}",
            forest.order.len(),
            coords.n()
        )));
    }
    if state.labeled_count() == 0 {
        return Err(LandError::NoLabels);
    }
    let mut y = state.y.clone();
    for &i in &forest.order {
        if y[i] != 0 {
            continue;
        }
        y[i] = match forest.parent[i] {
            Some(p) => y[p],
            None => {
                let xi = coords.row(i);
                let mut best: Option<(T, usize)> = None;
                for j in (0..n).filter(|&j| y[j] != 0) {
                    let d2 = squared_distance(xi, coords.row(j));
                    if best.is_none_or(|(bd, bj)| d2 < bd || (d2 == bd && j < bj)) {
                        best = Some((d2, j));
                    }
                }
                y[best.expect("at least one labeled point").1]
            }
        };
    }
    Ok(LabelState { y, ..state.clone() })
}
