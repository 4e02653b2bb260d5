use super::prompt::{
    parse_feedback, parse_prompt_dialogue, render_answers, Direction, FEEDBACK_END,
};
use super::Dialogue;
use crate::graph::{admissible_pairs, CausalStructure};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::time::Duration;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("prompt does not contain a recognisable dialogue")]
    UnknownDialogue,
    #[error("missing environment variable {0}")]
    MissingEnv(&'static str),
}

/// Anything that turns a prompt into a completion.
pub trait LlmOracle {
    fn complete(&mut self, prompt: &str) -> Result<String, OracleError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockOracleConfig {
    pub truth: CausalStructure,
    /// Independent per-edge error probability of the initial belief.
    pub flip_prob: f64,
    /// Exact number of wrong edges in the initial belief; overrides `flip_prob`.
    pub initial_flips: Option<usize>,
    /// Probability that a flagged edge is corrected per feedback round.
    pub correction_prob: f64,
    pub seed: u64,
}

/// Answers the full dialogue from a noisy belief and reduced dialogues from
/// the truth. Feedback clauses correct flagged edges with probability `q`;
/// unflagged edges never change.
#[derive(Debug, Clone)]
pub struct MockOracle {
    dialogue: Dialogue,
    index: HashMap<String, usize>,
    truth: CausalStructure,
    belief: CausalStructure,
    correction_prob: f64,
    rng: ChaCha8Rng,
}

fn utterance_index(d: &Dialogue) -> HashMap<String, usize> {
    d.utterances()
        .iter()
        .enumerate()
        .map(|(k, u)| (u.clone(), k))
        .collect()
}

impl MockOracle {
    pub fn new(dialogue: Dialogue, cfg: MockOracleConfig) -> Result<Self, super::LlmError> {
        let n = dialogue.n_vars();
        if cfg.truth.n_vars() != n {
            return Err(super::LlmError::InvalidConfig(format!(
                "truth has {} variables, dialogue has {n}",
                cfg.truth.n_vars()
            )));
        }
        for (name, p) in [
            ("flip_prob", cfg.flip_prob),
            ("correction_prob", cfg.correction_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(super::LlmError::InvalidConfig(format!(
                    "{name} must lie in [0, 1]"
                )));
            }
        }
        let pairs: Vec<(usize, usize)> = admissible_pairs(n).collect();
        if cfg.initial_flips.is_some_and(|k| k > pairs.len()) {
            return Err(super::LlmError::InvalidConfig(format!(
                "cannot flip more than {} edges",
                pairs.len()
            )));
        }
        let index = utterance_index(&dialogue);
        if index.len() != n {
            return Err(super::LlmError::InvalidConfig(
                "utterances must be distinct".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut belief = cfg.truth.clone();
        let flipped: Vec<usize> = match cfg.initial_flips {
            Some(k) => index::sample(&mut rng, pairs.len(), k).into_vec(),
            None => (0..pairs.len())
                .filter(|_| rng.random::<f64>() < cfg.flip_prob)
                .collect(),
        };
        for p in flipped {
            let (i, j) = pairs[p];
            belief.set_edge(i, j, !belief.has_edge(i, j));
        }
        Ok(Self {
            dialogue,
            index,
            truth: cfg.truth,
            belief,
            correction_prob: cfg.correction_prob,
            rng,
        })
    }

    pub fn belief(&self) -> &CausalStructure {
        &self.belief
    }

    fn apply_feedback(&mut self, prompt: &str) {
        for c in parse_feedback(prompt) {
            if c.effect >= self.belief.n_vars() || c.cause >= c.effect {
                continue;
            }
            if self.rng.random::<f64>() < self.correction_prob {
                self.belief
                    .set_edge(c.effect, c.cause, c.direction == Direction::Add);
            }
        }
    }
}

impl LlmOracle for MockOracle {
    fn complete(&mut self, prompt: &str) -> Result<String, OracleError> {
        let utterances = parse_prompt_dialogue(prompt).ok_or(OracleError::UnknownDialogue)?;
        let original: Vec<usize> = utterances
            .iter()
            .map(|u| self.index.get(u).copied())
            .collect::<Option<_>>()
            .ok_or(OracleError::UnknownDialogue)?;
        if original.len() == self.dialogue.n_vars() {
            if prompt.contains(FEEDBACK_END) {
                self.apply_feedback(prompt);
            }
            return Ok(render_answers(&self.belief));
        }
        Ok(render_answers(&restrict(&self.truth, &original)))
    }
}

/// Sub-structure over the kept variables, re-indexed in their order.
pub(crate) fn restrict(s: &CausalStructure, kept: &[usize]) -> CausalStructure {
    let mut out = CausalStructure::empty(kept.len());
    for (a, &i) in kept.iter().enumerate() {
        for (b, &j) in kept[..a].iter().enumerate() {
            if s.has_edge(i, j) {
                out.set_edge(a, b, true);
            }
        }
    }
    out
}

/// Ground-truth supervision: answers any sub-dialogue from the labels.
#[derive(Debug, Clone)]
pub struct LabelOracle {
    truth: CausalStructure,
    index: HashMap<String, usize>,
}

impl LabelOracle {
    pub fn new(dialogue: &Dialogue) -> Result<Self, super::LlmError> {
        let truth = dialogue.truth().cloned().ok_or_else(|| {
            super::LlmError::InvalidConfig("label supervision needs a labelled dialogue".into())
        })?;
        Ok(Self {
            truth,
            index: utterance_index(dialogue),
        })
    }

    pub fn truth(&self) -> &CausalStructure {
        &self.truth
    }
}

impl LlmOracle for LabelOracle {
    fn complete(&mut self, prompt: &str) -> Result<String, OracleError> {
        let utterances = parse_prompt_dialogue(prompt).ok_or(OracleError::UnknownDialogue)?;
        let original: Vec<usize> = utterances
            .iter()
            .map(|u| self.index.get(u).copied())
            .collect::<Option<_>>()
            .ok_or(OracleError::UnknownDialogue)?;
        Ok(render_answers(&restrict(&self.truth, &original)))
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct CompletionResponse {
    text: String,
}

/// JSON-over-HTTP completion endpoint: POST `{"prompt"}`, reply `{"text"}`.
#[derive(Debug, Clone)]
pub struct HttpOracle {
    endpoint: String,
    api_key: Option<String>,
    retries: u32,
    backoff: Duration,
    agent: ureq::Agent,
}

impl HttpOracle {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(300)))
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            api_key,
            retries: 3,
            backoff: Duration::from_secs(1),
            agent,
        }
    }

    /// Reads `LLM_ENDPOINT` and the optional `LLM_API_KEY`.
    pub fn from_env() -> Result<Self, OracleError> {
        let endpoint =
            std::env::var("LLM_ENDPOINT").map_err(|_| OracleError::MissingEnv("LLM_ENDPOINT"))?;
        Ok(Self::new(endpoint, std::env::var("LLM_API_KEY").ok()))
    }

    /// Retry count and first backoff delay; each retry doubles the delay.
    pub fn with_retry(mut self, retries: u32, backoff: Duration) -> Self {
        self.retries = retries;
        self.backoff = backoff;
        self
    }

    fn attempt(&self, prompt: &str) -> Result<String, OracleError> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(CompletionRequest { prompt })
            .map_err(|e| OracleError::Transport(e.to_string()))?;
        let body: CompletionResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| OracleError::Transport(e.to_string()))?;
        Ok(body.text)
    }
}

impl LlmOracle for HttpOracle {
    fn complete(&mut self, prompt: &str) -> Result<String, OracleError> {
        let mut delay = self.backoff;
        let mut last = None;
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            match self.attempt(prompt) {
                Ok(text) => return Ok(text),
                Err(e) => last = Some(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

#[cfg(test)]
mod tests {
    use super::super::prompt::build_initial_prompt;
    use super::*;

    fn dialogue() -> Dialogue {
        let truth = CausalStructure::chain(4);
        Dialogue::new((1..=4).map(|k| format!("u{k}")).collect(), Some(truth)).unwrap()
    }

    #[test]
    fn mock_flips_exact_count() {
        let d = dialogue();
        let cfg = MockOracleConfig {
            truth: CausalStructure::chain(4),
            flip_prob: 0.0,
            initial_flips: Some(2),
            correction_prob: 1.0,
            seed: 3,
        };
        let m = MockOracle::new(d, cfg).unwrap();
        assert_eq!(
            crate::graph::hamming_distance(m.belief(), &CausalStructure::chain(4)).unwrap(),
            2
        );
    }

    #[test]
    fn label_oracle_answers_sub_dialogue() {
        let d = dialogue();
        let mut o = LabelOracle::new(&d).unwrap();
        let sub = Dialogue::new(vec!["u1".into(), "u3".into(), "u4".into()], None).unwrap();
        let text = o.complete(&build_initial_prompt(&sub)).unwrap();
        let s = super::super::parse_answers(&text, 3).unwrap();
        assert_eq!(s.edges(), vec![(2, 1)]);
    }

    #[test]
    fn unknown_dialogue_is_an_error() {
        let mut o = LabelOracle::new(&dialogue()).unwrap();
        assert_eq!(o.complete("hello"), Err(OracleError::UnknownDialogue));
    }
}
