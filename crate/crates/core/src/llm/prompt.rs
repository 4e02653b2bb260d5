use super::{Dialogue, LlmError};
use crate::graph::CausalStructure;
use regex::Regex;
use std::fmt::Write as _;
use std::sync::LazyLock;

const ROLE: &str = "You are assuming the role of a researcher \
capable of distinguishing between causation and correlation, \
charged with the task of recognizing the causal relationships \
among individual utterances within a given dialogue. \
We prescribe that the judgment of causation between two utterances \
is based on whether the former is the intended target \
of the latter's response. Whereas, correlation is gauged on \
whether the two share similar topics or vocabulary. \
The following is an example:";

const DEMO: &str = "Dialogue:
'1. Hazel drank too much champagne at the party.
2. Oh my goodness! That sounds like quite an eventful party.
3. Well, drinking too much alcohol can have many negative effects.
4. Oh no, I can imagine Hazel waking up with a massive headache tomorrow.'
Question 1: Is there a causal relationship from utterance 1 to 2?
Answer 1: Yes.
......
Question 6: Is there a causal relationship from utterance 3 to 4?
Answer 6: Yes.";

pub(crate) const TARGET_INTRO: &str =
    "Given the above example, with its associated questions and answers, consider the following dialogue:";

pub(crate) const FEEDBACK_END: &str = "Please re-answer based on these circumstances.";

/// Question order: `(earlier, later)` pairs, lexicographic, 0-based.
pub fn question_pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

/// Step-1 prompt: role text, demonstration, target dialogue and one question per pair.
pub fn build_initial_prompt(d: &Dialogue) -> String {
    let mut out = format!("{ROLE}\n\n{DEMO}\n\n{TARGET_INTRO}\n\nDialogue:\n");
    let n = d.utterances().len();
    for (k, u) in d.utterances().iter().enumerate() {
        let open = if k == 0 { "'" } else { "" };
        let close = if k + 1 == n { "'" } else { "" };
        let _ = writeln!(out, "{open}{}. {u}{close}", k + 1);
    }
    for (q, (i, j)) in question_pairs(n).enumerate() {
        let _ = writeln!(
            out,
            "Question {}: Is there a causal relationship from utterance {} to utterance {}?",
            q + 1,
            i + 1,
            j + 1
        );
    }
    out
}

/// Answer text in the format the parser expects.
pub fn render_answers(answers: &CausalStructure) -> String {
    let mut out = String::new();
    for (q, (i, j)) in question_pairs(answers.n_vars()).enumerate() {
        let word = if answers.has_edge(j, i) { "Yes" } else { "No" };
        let _ = writeln!(out, "Answer {}: {word}.", q + 1);
    }
    out
}

static ANSWER_MARK: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)answer\s+(\d+)\s*:").unwrap());
static YES_NO: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(yes|no)\b").unwrap());

/// Reads "Answer k:" markers; the first yes/no token before the next marker decides.
/// When a marker repeats, its first occurrence is used.
pub fn parse_answers(text: &str, n_vars: usize) -> Result<CausalStructure, LlmError> {
    let marks: Vec<(usize, usize, usize)> = ANSWER_MARK
        .captures_iter(text)
        .filter_map(|c| {
            let m = c.get(0)?;
            let k = c[1].parse::<usize>().ok()?;
            Some((k, m.start(), m.end()))
        })
        .collect();
    let mut out = CausalStructure::empty(n_vars);
    for (q, (i, j)) in question_pairs(n_vars).enumerate() {
        let k = q + 1;
        let pos = marks
            .iter()
            .position(|m| m.0 == k)
            .ok_or(LlmError::MissingAnswer(k))?;
        let end = marks.get(pos + 1).map_or(text.len(), |m| m.1);
        let span = &text[marks[pos].2..end];
        let token = YES_NO.captures(span).ok_or(LlmError::AmbiguousAnswer(k))?;
        if token[1].eq_ignore_ascii_case("yes") {
            out.set_edge(j, i, true);
        }
    }
    Ok(out)
}

const ORDINALS: [&str; 10] = [
    "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth", "tenth",
];

/// 0-based index to "first", "second", ..., then "11th", "12th", "21st", ...
pub fn ordinal(index: usize) -> String {
    if let Some(w) = ORDINALS.get(index) {
        return (*w).to_string();
    }
    let n = index + 1;
    let suffix = match (n % 10, n % 100) {
        (_, 11..=13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    format!("{n}{suffix}")
}

/// Inverse of [`ordinal`].
pub fn parse_ordinal(word: &str) -> Option<usize> {
    let w = word.to_ascii_lowercase();
    if let Some(i) = ORDINALS.iter().position(|o| *o == w) {
        return Some(i);
    }
    let digits = w.trim_end_matches(|c: char| c.is_ascii_alphabetic());
    digits
        .parse::<usize>()
        .ok()
        .filter(|&n| n > 0)
        .map(|n| n - 1)
}

/// Disagreement between the structure view and the re-queried view.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Edge present in the structure view only.
    Drop,
    /// Edge present in the re-queried view only.
    Add,
}

/// A flagged edge, 0-based `(effect, cause)` in the original dialogue.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize,
)]
pub struct Conflict {
    pub effect: usize,
    pub cause: usize,
    pub direction: Direction,
}

fn clause(c: &Conflict) -> String {
    let (from, to) = (ordinal(c.cause), ordinal(c.effect));
    let (cc, rel) = match c.direction {
        Direction::Drop => ("there is no common cause", "should not have"),
        Direction::Add => ("there is a common cause", "should have"),
    };
    if c.cause == 0 {
        format!("From the intervention, the {from} utterance {rel} a causal relationship to the {to} utterance.")
    } else {
        format!(
            "From the intervention, {cc} between the {from} utterance and the {to} utterance, \
             and the {from} utterance {rel} a causal relationship to the {to} utterance."
        )
    }
}

/// One clause per conflict and the closing request; empty for no conflicts.
pub fn build_feedback(conflicts: &[Conflict]) -> String {
    if conflicts.is_empty() {
        return String::new();
    }
    let mut parts: Vec<String> = conflicts.iter().map(clause).collect();
    parts.push(FEEDBACK_END.to_string());
    parts.join(" ")
}

/// The full Step-1 prompt followed by the feedback clauses.
pub fn build_feedback_prompt(d: &Dialogue, conflicts: &[Conflict]) -> String {
    format!(
        "{}\n{}\n",
        build_initial_prompt(d),
        build_feedback(conflicts)
    )
}

static FEEDBACK_CLAUSE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)the (\w+) utterance should (not )?have a causal relationship to the (\w+) utterance",
    )
    .unwrap()
});

/// Conflicts named in a feedback text, in order of appearance.
pub fn parse_feedback(text: &str) -> Vec<Conflict> {
    FEEDBACK_CLAUSE
        .captures_iter(text)
        .filter_map(|c| {
            Some(Conflict {
                cause: parse_ordinal(&c[1])?,
                effect: parse_ordinal(&c[3])?,
                direction: if c.get(2).is_some() {
                    Direction::Drop
                } else {
                    Direction::Add
                },
            })
        })
        .collect()
}

/// Utterances of the target dialogue in a Step-1 style prompt.
pub fn parse_prompt_dialogue(prompt: &str) -> Option<Vec<String>> {
    let start = prompt.rfind(TARGET_INTRO)? + TARGET_INTRO.len();
    let body = &prompt[start..];
    let body = &body[body.find("Dialogue:")? + "Dialogue:".len()..];
    let lines: Vec<&str> = body
        .lines()
        .map(str::trim)
        .skip_while(|l| l.is_empty())
        .take_while(|l| !l.starts_with("Question "))
        .filter(|l| !l.is_empty())
        .collect();
    let n = lines.len();
    let mut out = Vec::with_capacity(n);
    for (k, line) in lines.into_iter().enumerate() {
        let mut l = line;
        if k == 0 {
            l = l.strip_prefix('\'')?;
        }
        if k + 1 == n {
            l = l.strip_suffix('\'')?;
        }
        let rest = l.strip_prefix(&format!("{}. ", k + 1))?;
        out.push(rest.to_string());
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dialogue(n: usize) -> Dialogue {
        Dialogue::new((1..=n).map(|k| format!("line {k}")).collect(), None).unwrap()
    }

    #[test]
    fn question_counts() {
        let p = build_initial_prompt(&dialogue(4));
        let target = &p[p.find(TARGET_INTRO).unwrap()..];
        assert_eq!(target.matches("Question ").count(), 6);
        assert!(target.contains(
            "Question 6: Is there a causal relationship from utterance 3 to utterance 4?"
        ));
        let p2 = build_initial_prompt(&dialogue(2));
        assert_eq!(
            p2[p2.find(TARGET_INTRO).unwrap()..]
                .matches("Question ")
                .count(),
            1
        );
        assert_eq!(build_initial_prompt(&dialogue(4)), p);
    }

    #[test]
    fn prompt_dialogue_round_trip() {
        let d = dialogue(5);
        assert_eq!(
            parse_prompt_dialogue(&build_initial_prompt(&d)).unwrap(),
            d.utterances()
        );
    }

    #[test]
    fn parse_examples() {
        let text =
            "Answer 1: Yes. Answer 2: No. Answer 3: yes Answer 4: No. Answer 5: No. Answer 6: No.";
        let s = parse_answers(text, 4).unwrap();
        assert_eq!(s.edges(), vec![(1, 0), (3, 0)]);
        let s = parse_answers("answer 1: no\nanswer 2: yes", 3).unwrap_err();
        assert_eq!(s, LlmError::MissingAnswer(3));
        assert_eq!(
            parse_answers("Answer 1: maybe. Answer 2: Yes. Answer 3: No.", 3),
            Err(LlmError::AmbiguousAnswer(1))
        );
        assert!(
            parse_answers("answer 1: no, answer 2: yes, answer 3: no", 3)
                .unwrap()
                .has_edge(2, 0)
        );
    }

    #[test]
    fn feedback_examples() {
        assert_eq!(build_feedback(&[]), "");
        let drop = Conflict {
            effect: 2,
            cause: 1,
            direction: Direction::Drop,
        };
        let f = build_feedback(&[drop]);
        assert_eq!(
            f.matches("should not have a causal relationship").count(),
            1
        );
        assert!(f.contains("no common cause between the second utterance and the third utterance"));
        assert!(f.ends_with(FEEDBACK_END));
        let first = Conflict {
            effect: 3,
            cause: 0,
            direction: Direction::Add,
        };
        let f = build_feedback(&[first]);
        assert!(!f.contains("common cause"));
        assert!(f.contains(
            "the first utterance should have a causal relationship to the fourth utterance"
        ));
        assert_eq!(
            parse_feedback(&build_feedback(&[drop, first])),
            vec![drop, first]
        );
    }

    #[test]
    fn ordinals() {
        assert_eq!(ordinal(0), "first");
        assert_eq!(ordinal(9), "tenth");
        assert_eq!(ordinal(10), "11th");
        assert_eq!(ordinal(20), "21st");
        assert_eq!(ordinal(111), "112th");
        for k in 0..200 {
            assert_eq!(parse_ordinal(&ordinal(k)), Some(k));
        }
    }
}
