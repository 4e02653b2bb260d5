//! Iterative instruction loop for dialogue-level causal relation extraction.
//!
//! Each iteration asks an oracle for every pairwise relation, re-asks on
//! intervention-reduced dialogues, and feeds disagreements back as text.

mod oracle;
mod prompt;

pub use oracle::{HttpOracle, LabelOracle, LlmOracle, MockOracle, MockOracleConfig, OracleError};
pub use prompt::{
    build_feedback, build_feedback_prompt, build_initial_prompt, ordinal, parse_answers,
    parse_feedback, parse_ordinal, parse_prompt_dialogue, question_pairs, render_answers, Conflict,
    Direction,
};

use crate::graph::{
    admissible_pairs, enumerate_interventions, CausalStructure, GraphError, InterventionView,
};
use crate::metrics::Confusion;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("no answer found for question {0}")]
    MissingAnswer(usize),
    #[error("answer {0} contains neither yes nor no")]
    AmbiguousAnswer(usize),
    #[error("fewer than two utterances remain under {0}")]
    DegenerateDialogue(InterventionView),
    #[error("oracle failed after {} completed iterations: {message}", partial.len())]
    OracleFailure {
        message: String,
        partial: Vec<IterationRecord>,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Deserialize)]
struct RawDialogue {
    utterances: Vec<String>,
    #[serde(default)]
    truth: Option<CausalStructure>,
}

/// Time-ordered utterances, optionally labelled with their causal structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDialogue")]
pub struct Dialogue {
    utterances: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth: Option<CausalStructure>,
}

impl TryFrom<RawDialogue> for Dialogue {
    type Error = LlmError;

    fn try_from(raw: RawDialogue) -> Result<Self, LlmError> {
        Dialogue::new(raw.utterances, raw.truth)
    }
}

impl Dialogue {
    pub fn new(utterances: Vec<String>, truth: Option<CausalStructure>) -> Result<Self, LlmError> {
        if utterances.len() < 2 {
            return Err(LlmError::InvalidConfig(
                "a dialogue needs at least two utterances".into(),
            ));
        }
        if let Some(t) = &truth {
            if t.n_vars() != utterances.len() {
                return Err(GraphError::DimensionMismatch(utterances.len(), t.n_vars()).into());
            }
        }
        Ok(Self { utterances, truth })
    }

    pub fn utterances(&self) -> &[String] {
        &self.utterances
    }

    pub fn n_vars(&self) -> usize {
        self.utterances.len()
    }

    pub fn truth(&self) -> Option<&CausalStructure> {
        self.truth.as_ref()
    }
}

/// Deletes the parents of every target under `a_s`; targets themselves stay.
///
/// Returns the reduced dialogue and, for each kept utterance, its original index.
pub fn intervene_dialogue(
    d: &Dialogue,
    a_s: &CausalStructure,
    view: &InterventionView,
) -> Result<(Dialogue, Vec<usize>), LlmError> {
    view.check_range(d.n_vars())?;
    if a_s.n_vars() != d.n_vars() {
        return Err(GraphError::DimensionMismatch(d.n_vars(), a_s.n_vars()).into());
    }
    let deleted: BTreeSet<usize> = view
        .targets()
        .iter()
        .flat_map(|&t| a_s.parents(t))
        .filter(|p| !view.contains(*p))
        .collect();
    let kept: Vec<usize> = (0..d.n_vars()).filter(|k| !deleted.contains(k)).collect();
    if kept.len() < 2 {
        return Err(LlmError::DegenerateDialogue(view.clone()));
    }
    let truth = d.truth.as_ref().map(|t| oracle::restrict(t, &kept));
    let utterances = kept.iter().map(|&k| d.utterances[k].clone()).collect();
    Ok((Dialogue { utterances, truth }, kept))
}

/// Where the second opinion for each view comes from.
pub enum Supervision<'a> {
    /// The answering oracle re-answers the reduced dialogues.
    Reanswer,
    /// A separate oracle answers the reduced dialogues.
    Second(&'a mut dyn LlmOracle),
    /// No re-query: the intervened labels are compared directly.
    Label(&'a CausalStructure),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: usize,
    pub structure: CausalStructure,
    pub conflicts: Vec<Conflict>,
    /// Views whose reduced dialogue had fewer than two utterances.
    pub skipped_views: Vec<InterventionView>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopOutcome {
    pub structure: CausalStructure,
    pub converged: bool,
    pub trace: Vec<IterationRecord>,
}

impl LoopOutcome {
    /// F1 per iteration, extended with the final value up to `len`.
    pub fn f1_trace(&self, len: usize) -> Vec<f64> {
        let mut out: Vec<f64> = self.trace.iter().filter_map(|r| r.f1).collect();
        if let Some(&last) = out.last() {
            out.resize(len.max(out.len()), last);
        }
        out
    }
}

const PARSE_ATTEMPTS: usize = 3;

fn query(oracle: &mut dyn LlmOracle, prompt: &str, n: usize) -> Result<CausalStructure, String> {
    let mut last = String::new();
    for _ in 0..PARSE_ATTEMPTS {
        let text = oracle.complete(prompt).map_err(|e| e.to_string())?;
        match parse_answers(&text, n) {
            Ok(s) => return Ok(s),
            Err(e) => last = e.to_string(),
        }
    }
    Err(last)
}

fn compare(
    out: &mut BTreeSet<Conflict>,
    s: &CausalStructure,
    r: &CausalStructure,
    pairs: impl Iterator<Item = (usize, usize)>,
) {
    for (i, j) in pairs {
        let direction = match (s.has_edge(i, j), r.has_edge(i, j)) {
            (true, false) => Direction::Drop,
            (false, true) => Direction::Add,
            _ => continue,
        };
        out.insert(Conflict {
            effect: i,
            cause: j,
            direction,
        });
    }
}

/// Compares every view of `arity`. In re-query modes only pairs whose
/// utterances both survive and whose effect is not a target are compared.
fn collect_conflicts(
    d: &Dialogue,
    a_s: &CausalStructure,
    oracle: &mut dyn LlmOracle,
    supervision: &mut Supervision<'_>,
    arity: usize,
) -> Result<(Vec<Conflict>, Vec<InterventionView>), String> {
    let n = d.n_vars();
    let mut conflicts = BTreeSet::new();
    let mut skipped = Vec::new();
    for view in enumerate_interventions(n, arity.clamp(1, n)).map_err(|e| e.to_string())? {
        let s_do = a_s.intervene(&view).map_err(|e| e.to_string())?;
        if let Supervision::Label(truth) = supervision {
            let t_do = truth.intervene(&view).map_err(|e| e.to_string())?;
            compare(&mut conflicts, &s_do, &t_do, admissible_pairs(n));
            continue;
        }
        let (reduced, kept) = match intervene_dialogue(d, a_s, &view) {
            Ok(r) => r,
            Err(LlmError::DegenerateDialogue(v)) => {
                skipped.push(v);
                continue;
            }
            Err(e) => return Err(e.to_string()),
        };
        let prompt = build_initial_prompt(&reduced);
        let answered = match supervision {
            Supervision::Second(o) => query(&mut **o, &prompt, kept.len())?,
            _ => query(oracle, &prompt, kept.len())?,
        };
        let mut r_do = CausalStructure::empty(n);
        for (a, b) in admissible_pairs(kept.len()) {
            if answered.has_edge(a, b) {
                r_do.set_edge(kept[a], kept[b], true);
            }
        }
        let pairs: Vec<(usize, usize)> = admissible_pairs(kept.len())
            .map(|(a, b)| (kept[a], kept[b]))
            .filter(|(i, _)| !view.contains(*i))
            .collect();
        compare(&mut conflicts, &s_do, &r_do, pairs.into_iter());
    }
    Ok((conflicts.into_iter().collect(), skipped))
}

/// Runs up to `max(max_iters, 1)` query/intervene/feedback rounds and stops
/// early once every view agrees.
pub fn run_loop(
    d: &Dialogue,
    oracle: &mut dyn LlmOracle,
    mut supervision: Supervision<'_>,
    max_iters: usize,
    arity: usize,
) -> Result<LoopOutcome, LlmError> {
    let n = d.n_vars();
    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut prompt = build_initial_prompt(d);
    let mut converged = false;
    for iteration in 1..=max_iters.max(1) {
        let step = query(oracle, &prompt, n).and_then(|a_s| {
            collect_conflicts(d, &a_s, oracle, &mut supervision, arity).map(|c| (a_s, c))
        });
        let (a_s, (conflicts, skipped_views)) = match step {
            Ok(v) => v,
            Err(message) => {
                return Err(LlmError::OracleFailure {
                    message,
                    partial: trace,
                })
            }
        };
        let f1 = d
            .truth()
            .map(|t| Confusion::between(&a_s, t).map(|c| c.f1()))
            .transpose()
            .map_err(|e| LlmError::InvalidConfig(e.to_string()))?;
        let done = conflicts.is_empty();
        if !done {
            prompt = build_feedback_prompt(d, &conflicts);
        }
        trace.push(IterationRecord {
            iteration,
            structure: a_s,
            conflicts,
            skipped_views,
            f1,
        });
        if done {
            converged = true;
            break;
        }
    }
    let structure = trace
        .last()
        .expect("at least one iteration")
        .structure
        .clone();
    Ok(LoopOutcome {
        structure,
        converged,
        trace,
    })
}

/// Labelled dialogues with placeholder text and at least one edge each.
pub fn synthetic_dialogues(
    count: usize,
    n_vars: usize,
    seed: u64,
) -> Result<Vec<Dialogue>, LlmError> {
    if n_vars < 2 {
        return Err(LlmError::InvalidConfig(
            "dialogues need at least two utterances".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for d in 0..count {
        let truth = loop {
            let edges: Vec<(usize, usize)> = admissible_pairs(n_vars)
                .filter(|_| rng.random::<bool>())
                .collect();
            if !edges.is_empty() {
                break CausalStructure::from_edges(n_vars, edges)?;
            }
        };
        let utterances = (1..=n_vars)
            .map(|k| {
                format!(
                    "Speaker {} says line {k} of dialogue {}.",
                    if k % 2 == 1 { "A" } else { "B" },
                    d + 1
                )
            })
            .collect();
        out.push(Dialogue::new(utterances, Some(truth))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labelled(truth: CausalStructure) -> Dialogue {
        let n = truth.n_vars();
        Dialogue::new((1..=n).map(|k| format!("u{k}")).collect(), Some(truth)).unwrap()
    }

    fn view(t: &[usize]) -> InterventionView {
        InterventionView::new(t.to_vec()).unwrap()
    }

    #[test]
    fn reduction_keeps_targets() {
        let d = labelled(CausalStructure::chain(4));
        let (r, kept) = intervene_dialogue(&d, &CausalStructure::chain(4), &view(&[2, 3])).unwrap();
        assert_eq!(kept, vec![0, 2, 3]);
        assert_eq!(r.utterances(), &["u1", "u3", "u4"]);
        let (r, kept) = intervene_dialogue(&d, &CausalStructure::empty(4), &view(&[2, 3])).unwrap();
        assert_eq!(kept, vec![0, 1, 2, 3]);
        assert_eq!(r, d);
        let (_, kept) = intervene_dialogue(&d, &CausalStructure::chain(4), &view(&[0])).unwrap();
        assert_eq!(kept.len(), 4);
    }

    #[test]
    fn degenerate_reduction() {
        let d = labelled(CausalStructure::chain(2));
        let s = CausalStructure::chain(2);
        assert_eq!(
            intervene_dialogue(&d, &s, &view(&[1])),
            Err(LlmError::DegenerateDialogue(view(&[1])))
        );
    }

    fn mock(d: &Dialogue, flips: Option<usize>, p: f64, q: f64, seed: u64) -> MockOracle {
        MockOracle::new(
            d.clone(),
            MockOracleConfig {
                truth: d.truth().unwrap().clone(),
                flip_prob: p,
                initial_flips: flips,
                correction_prob: q,
                seed,
            },
        )
        .unwrap()
    }

    #[test]
    fn perfect_oracle_stops_at_once() {
        let d = labelled(CausalStructure::from_edges(4, [(1, 0), (3, 1), (3, 2)]).unwrap());
        let mut o = mock(&d, None, 0.0, 1.0, 1);
        let out = run_loop(&d, &mut o, Supervision::Reanswer, 8, 2).unwrap();
        assert!(out.converged);
        assert_eq!(out.trace.len(), 1);
        assert_eq!(out.trace[0].f1, Some(1.0));
        assert_eq!(&out.structure, d.truth().unwrap());
    }

    #[test]
    fn zero_iterations_still_queries_once() {
        let d = labelled(CausalStructure::chain(4));
        let mut o = mock(&d, Some(2), 0.0, 1.0, 1);
        let out = run_loop(&d, &mut o, Supervision::Reanswer, 0, 2).unwrap();
        assert_eq!(out.trace.len(), 1);
    }

    #[test]
    fn label_supervision_fixes_two_flips() {
        for seed in 0..10 {
            let d = labelled(CausalStructure::chain(4));
            let truth = d.truth().unwrap().clone();
            let mut o = mock(&d, Some(2), 0.0, 1.0, seed);
            let out = run_loop(&d, &mut o, Supervision::Label(&truth), 8, 2).unwrap();
            assert!(out.trace.len() <= 3);
            assert_eq!(out.structure, truth);
        }
    }

    #[test]
    fn f1_trace_is_padded() {
        let d = labelled(CausalStructure::chain(3));
        let mut o = mock(&d, None, 0.0, 1.0, 0);
        let out = run_loop(&d, &mut o, Supervision::Reanswer, 4, 2).unwrap();
        assert_eq!(out.f1_trace(4), vec![1.0; 4]);
    }

    #[test]
    fn dialogue_json_round_trip() {
        let d = synthetic_dialogues(3, 4, 9).unwrap();
        let text = serde_json::to_string(&d).unwrap();
        let back: Vec<Dialogue> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, d);
        assert!(serde_json::from_str::<Dialogue>(r#"{"utterances":["only"]}"#).is_err());
    }
}
