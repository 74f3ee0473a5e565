//! Decision rules over score tables and the observational-equivalence
//! construction for lookahead bias.
//!
//! A world pairs the model's factual scores with counterfactual scores of a
//! model trained only up to the forecast date, plus the effective scores a
//! prompt induces. Scores are 0/1 indicator tables: existence of a
//! parameter realizing each decision is all the construction needs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prompt id used for the unprompted query.
pub const NO_PROMPT: &str = "none";
/// Prompt id of the cutoff instruction in constructed worlds.
pub const CONSTRAINT_PROMPT: &str = "cutoff_instruction";
/// Task id used in constructed worlds.
pub const DEMO_TASK: &str = "forecast";

/// Ordered, distinct answer labels. Order breaks ties: earliest wins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSet(Vec<String>);

impl LabelSet {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::invalid("label set is empty"));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::invalid(format!("duplicate label '{l}'")));
            }
        }
        Ok(LabelSet(labels))
    }

    pub fn labels(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.0.iter().any(|l| l == label)
    }

    fn require(&self, label: &str) -> Result<()> {
        if self.contains(label) {
            Ok(())
        } else {
            Err(Error::invalid(format!("label '{label}' not in label set")))
        }
    }

    /// Scores of 1 for `winner` and 0 for every other label.
    pub fn indicator(&self, winner: &str) -> Result<Scores> {
        self.require(winner)?;
        Ok(self
            .0
            .iter()
            .map(|l| (l.clone(), if l == winner { 1.0 } else { 0.0 }))
            .collect())
    }
}

impl TryFrom<Vec<String>> for LabelSet {
    type Error = Error;

    fn try_from(v: Vec<String>) -> Result<Self> {
        LabelSet::new(v)
    }
}

impl From<LabelSet> for Vec<String> {
    fn from(l: LabelSet) -> Self {
        l.0
    }
}

pub type Scores = BTreeMap<String, f64>;

/// Argmax over `labels`; ties go to the earliest label.
pub fn decide(scores: &Scores, labels: &LabelSet) -> Result<String> {
    if let Some(extra) = scores.keys().find(|k| !labels.contains(k)) {
        return Err(Error::invalid(format!("score for unknown label '{extra}'")));
    }
    let mut best: Option<(&String, f64)> = None;
    for l in labels.labels() {
        let s = *scores
            .get(l)
            .ok_or_else(|| Error::invalid(format!("no score for label '{l}'")))?;
        if !s.is_finite() {
            return Err(Error::invalid(format!("non-finite score for label '{l}'")));
        }
        if best.map_or(true, |(_, b)| s > b) {
            best = Some((l, s));
        }
    }
    Ok(best.expect("non-empty label set").0.clone())
}

/// Scores keyed by task, then prompt.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable(pub BTreeMap<String, BTreeMap<String, Scores>>);

impl ScoreTable {
    pub fn insert(&mut self, task: &str, prompt: &str, scores: Scores) {
        self.0.entry(task.to_string()).or_default().insert(prompt.to_string(), scores);
    }

    pub fn get(&self, task: &str, prompt: &str) -> Result<&Scores> {
        self.0
            .get(task)
            .and_then(|p| p.get(prompt))
            .ok_or_else(|| Error::invalid(format!("no scores for task '{task}' under prompt '{prompt}'")))
    }

    pub fn decide(&self, task: &str, prompt: &str, labels: &LabelSet) -> Result<String> {
        decide(self.get(task, prompt)?, labels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub labels: LabelSet,
    /// Scores of the deployed model.
    pub factual: ScoreTable,
    /// Scores of a model trained only on information before the forecast date.
    pub counterfactual: ScoreTable,
    /// Effective scores induced by each prompt.
    pub operator: BTreeMap<String, ScoreTable>,
}

impl World {
    /// The observable answer to `task` under `prompt`.
    pub fn constrained_decision(&self, task: &str, prompt: &str) -> Result<String> {
        self.operator
            .get(prompt)
            .ok_or_else(|| Error::invalid(format!("operator undefined for prompt '{prompt}'")))?
            .decide(task, prompt, &self.labels)
    }

    pub fn counterfactual_decision(&self, task: &str) -> Result<String> {
        self.counterfactual.decide(task, NO_PROMPT, &self.labels)
    }

    /// Everything an outside auditor can see: the factual scores' decisions
    /// and the decisions under every prompt.
    pub fn observables(&self) -> Result<BTreeMap<(String, String), String>> {
        let mut out = BTreeMap::new();
        for (task, prompts) in &self.factual.0 {
            for prompt in prompts.keys() {
                out.insert((task.clone(), prompt.clone()), self.factual.decide(task, prompt, &self.labels)?);
            }
        }
        for (prompt, table) in &self.operator {
            for task in table.0.keys() {
                out.insert(
                    (task.clone(), format!("operator:{prompt}")),
                    self.constrained_decision(task, prompt)?,
                );
            }
        }
        Ok(out)
    }
}

/// Two worlds with identical factual scores and prompt operator, whose
/// constrained answer is `y_obs`, but whose counterfactual answers are
/// `y_star` and `y_dagger`.
pub fn construct_equivalent_worlds(labels: &LabelSet, y_obs: &str, y_star: &str, y_dagger: &str) -> Result<(World, World)> {
    if y_star == y_dagger {
        return Err(Error::invalid("the two counterfactual answers must differ"));
    }
    let observed = labels.indicator(y_obs)?;
    let mut factual = ScoreTable::default();
    factual.insert(DEMO_TASK, NO_PROMPT, observed.clone());
    factual.insert(DEMO_TASK, CONSTRAINT_PROMPT, observed.clone());
    let mut effective = ScoreTable::default();
    effective.insert(DEMO_TASK, CONSTRAINT_PROMPT, observed);
    let operator = BTreeMap::from([(CONSTRAINT_PROMPT.to_string(), effective)]);

    let world = |target: &str| -> Result<World> {
        let mut counterfactual = ScoreTable::default();
        counterfactual.insert(DEMO_TASK, NO_PROMPT, labels.indicator(target)?);
        Ok(World {
            labels: labels.clone(),
            factual: factual.clone(),
            counterfactual,
            operator: operator.clone(),
        })
    };
    Ok((world(y_star)?, world(y_dagger)?))
}

/// Counterfactual answers consistent with observing `y_obs`. Each member is
/// witnessed by a constructed pair of observationally equivalent worlds.
pub fn identified_set(labels: &LabelSet, y_obs: &str) -> Result<Vec<String>> {
    labels.require(y_obs)?;
    if labels.len() == 1 {
        return Ok(labels.labels().to_vec());
    }
    let mut out = Vec::new();
    for candidate in labels.labels() {
        let other = labels
            .labels()
            .iter()
            .find(|l| *l != candidate)
            .expect("at least two labels");
        let (w, alt) = construct_equivalent_worlds(labels, y_obs, candidate, other)?;
        if w.observables()? == alt.observables()? && w.counterfactual_decision(DEMO_TASK)? == *candidate {
            out.push(candidate.clone());
        }
    }
    Ok(out)
}

/// True when the counterfactual and factual models give the same unprompted answer.
pub fn future_invariance_check(world: &World, task: &str) -> Result<bool> {
    let factual = world.factual.decide(task, NO_PROMPT, &world.labels)?;
    let counterfactual = world.counterfactual.decide(task, NO_PROMPT, &world.labels)?;
    Ok(factual == counterfactual)
}

/// Fine-tuning version of the construction: in the suppression world the
/// model still holds `y_retained` internally, in the forgetting world it
/// holds `y_forgotten`; both emit `y_obs` to a black-box auditor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneWorlds {
    pub suppression: World,
    pub forgetting: World,
}

pub fn fine_tuning_worlds(labels: &LabelSet, y_obs: &str, y_retained: &str, y_forgotten: &str) -> Result<FineTuneWorlds> {
    let (suppression, forgetting) = construct_equivalent_worlds(labels, y_obs, y_retained, y_forgotten)?;
    Ok(FineTuneWorlds { suppression, forgetting })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(pairs: &[(&str, f64)]) -> Scores {
        pairs.iter().map(|(l, s)| (l.to_string(), *s)).collect()
    }

    #[test]
    fn decide_examples() {
        let ab = LabelSet::new(["A", "B"]).unwrap();
        assert_eq!(decide(&scores(&[("A", 0.2), ("B", 0.9)]), &ab).unwrap(), "B");
        assert_eq!(decide(&scores(&[("A", 0.5), ("B", 0.5)]), &ab).unwrap(), "A");
        let ba = LabelSet::new(["B", "A"]).unwrap();
        assert_eq!(decide(&scores(&[("A", 0.5), ("B", 0.5)]), &ba).unwrap(), "B");
        assert!(decide(&scores(&[("A", 0.5)]), &ab).is_err());
        assert!(LabelSet::new(["A", "A"]).is_err());
        assert!(LabelSet::new(Vec::<String>::new()).is_err());
    }

    #[test]
    fn up_down_construction() {
        let labels = LabelSet::new(["up", "down"]).unwrap();
        let (ws, wd) = construct_equivalent_worlds(&labels, "up", "up", "down").unwrap();
        assert_eq!(ws.constrained_decision(DEMO_TASK, CONSTRAINT_PROMPT).unwrap(), "up");
        assert_eq!(ws.observables().unwrap(), wd.observables().unwrap());
        assert_eq!(ws.counterfactual_decision(DEMO_TASK).unwrap(), "up");
        assert_eq!(wd.counterfactual_decision(DEMO_TASK).unwrap(), "down");
        assert!(future_invariance_check(&ws, DEMO_TASK).unwrap());
        assert!(!future_invariance_check(&wd, DEMO_TASK).unwrap());
        assert!(construct_equivalent_worlds(&labels, "up", "up", "up").is_err());
    }

    #[test]
    fn identified_sets() {
        let labels = LabelSet::new(["a", "b", "c", "d", "e", "f", "g"]).unwrap();
        assert_eq!(identified_set(&labels, "c").unwrap(), labels.labels());
        let one = LabelSet::new(["only"]).unwrap();
        assert_eq!(identified_set(&one, "only").unwrap(), vec!["only".to_string()]);
        assert!(identified_set(&one, "other").is_err());
    }

    #[test]
    fn invariance_is_at_argmax_level() {
        let labels = LabelSet::new(["Negative", "Optimistic"]).unwrap();
        let mut factual = ScoreTable::default();
        factual.insert("t", NO_PROMPT, scores(&[("Negative", 0.9), ("Optimistic", 0.1)]));
        let mut counterfactual = ScoreTable::default();
        counterfactual.insert("t", NO_PROMPT, scores(&[("Negative", 0.6), ("Optimistic", 0.4)]));
        let mut w = World { labels, factual, counterfactual, operator: BTreeMap::new() };
        assert!(future_invariance_check(&w, "t").unwrap());
        w.counterfactual.insert("t", NO_PROMPT, scores(&[("Negative", 0.2), ("Optimistic", 0.8)]));
        assert!(!future_invariance_check(&w, "t").unwrap());
        assert!(future_invariance_check(&w, "missing").is_err());
    }

    #[test]
    fn worlds_round_trip_through_json() {
        let labels = LabelSet::new(["up", "down"]).unwrap();
        let (w, _) = construct_equivalent_worlds(&labels, "down", "up", "down").unwrap();
        let text = serde_json::to_string(&w).unwrap();
        assert_eq!(serde_json::from_str::<World>(&text).unwrap(), w);
    }
}
