//! Domain types shared by every stage, plus the pure text utilities that
//! do not need a model: requirement parsing, line counting and code
//! extraction from free-form replies.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("no `Requirement<N>:` marker line found")]
    EmptyRequirements,
    #[error("requirement marker on line {line} has no text")]
    MalformedMarker { line: usize },
    #[error("reply does not contain any code")]
    NoCodeFound,
}

/// One user requirement. `index` is 1-based and contiguous within its set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requirement {
    pub index: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequirementSet {
    pub requirements: Vec<Requirement>,
    pub source_path: String,
}

impl RequirementSet {
    pub fn parse(raw: &str, source_path: impl Into<String>) -> Result<Self, ModelError> {
        let mut set = parse_requirements(raw)?;
        set.source_path = source_path.into();
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.requirements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requirements.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Requirement> {
        self.requirements.iter()
    }

    /// Renders the set back into the requirements-file format.
    pub fn render(&self) -> String {
        self.requirements
            .iter()
            .map(|r| format!("Requirement{}: {}\n", r.index, r.text))
            .collect()
    }
}

/// Splits a line into (marker number, remainder) when it starts with
/// `Requirement<N>:` (case-insensitive, N >= 1).
fn split_marker(line: &str) -> Option<&str> {
    const WORD: &str = "requirement";
    let trimmed = line.trim_start();
    let head = trimmed.get(..WORD.len())?;
    if !head.eq_ignore_ascii_case(WORD) {
        return None;
    }
    let rest = &trimmed[WORD.len()..];
    let digits = rest.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    let number: u64 = rest[..digits].parse().ok()?;
    if number == 0 {
        return None;
    }
    rest[digits..].strip_prefix(':')
}

/// Parses a requirements file. Marker numbers are ignored; requirements are
/// renumbered 1..K in file order.
pub fn parse_requirements(raw: &str) -> Result<RequirementSet, ModelError> {
    // (marker line number, accumulated lines)
    let mut segments: Vec<(usize, Vec<&str>)> = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        if let Some(rest) = split_marker(line) {
            segments.push((lineno + 1, vec![rest]));
        } else if let Some((_, lines)) = segments.last_mut() {
            lines.push(line);
        }
    }
    if segments.is_empty() {
        return Err(ModelError::EmptyRequirements);
    }

    let mut requirements = Vec::with_capacity(segments.len());
    for (i, (line, lines)) in segments.into_iter().enumerate() {
        let text = lines.join("\n").trim().to_string();
        if text.is_empty() {
            return Err(ModelError::MalformedMarker { line });
        }
        requirements.push(Requirement { index: i + 1, text });
    }
    Ok(RequirementSet {
        requirements,
        source_path: String::new(),
    })
}

/// Number of physical lines holding at least one non-whitespace character.
pub fn count_loc(content: &str) -> usize {
    content.lines().filter(|l| !l.trim().is_empty()).count()
}

pub const DEFAULT_CODE_SENTINELS: &[&str] = &["<?php", "<!DOCTYPE", "<html"];

/// Pulls the code out of a model reply.
///
/// The longest fenced block wins; replies often show a fragment before the
/// full file. Without fences, a trimmed reply that starts with one of
/// `sentinels` is taken as-is.
pub fn extract_code_with(response: &str, sentinels: &[&str]) -> Result<String, ModelError> {
    let mut best: Option<String> = None;
    let mut current: Option<Vec<&str>> = None;
    for line in response.lines() {
        let is_fence = line.trim_start().starts_with("```");
        match (&mut current, is_fence) {
            (None, true) => current = Some(Vec::new()),
            (Some(body), true) => {
                let block = body.join("\n");
                if count_loc(&block) > 0 && best.as_ref().is_none_or(|b| block.len() > b.len()) {
                    best = Some(block);
                }
                current = None;
            }
            (Some(body), false) => body.push(line),
            (None, false) => {}
        }
    }
    if let Some(block) = best {
        return Ok(block);
    }

    let trimmed = response.trim();
    if sentinels
        .iter()
        .any(|s| !s.is_empty() && trimmed.starts_with(s))
    {
        return Ok(trimmed.to_string());
    }
    Err(ModelError::NoCodeFound)
}

pub fn extract_code(response: &str) -> Result<String, ModelError> {
    extract_code_with(response, DEFAULT_CODE_SENTINELS)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskOrigin {
    ManagerPlanned,
    PerRequirement,
    SingleTask,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub ordinal: usize,
    pub description: String,
    pub origin: TaskOrigin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskPlan {
    pub tasks: Vec<Task>,
    pub confirmed: bool,
}

impl TaskPlan {
    /// Builds a plan from descriptions in execution order, numbering from 1.
    pub fn from_descriptions<I, S>(descriptions: I, origin: TaskOrigin, confirmed: bool) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tasks = descriptions
            .into_iter()
            .enumerate()
            .map(|(i, d)| Task {
                ordinal: i + 1,
                description: d.into(),
                origin,
            })
            .collect();
        Self { tasks, confirmed }
    }

    /// One task per requirement, verbatim. Bypasses the manager.
    pub fn per_requirement(requirements: &RequirementSet) -> Self {
        Self::from_descriptions(
            requirements.iter().map(|r| r.text.clone()),
            TaskOrigin::PerRequirement,
            true,
        )
    }

    /// All requirement texts joined into a single task. Bypasses the manager.
    pub fn single_task(requirements: &RequirementSet) -> Self {
        let joined = requirements
            .iter()
            .map(|r| r.text.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        Self::from_descriptions([joined], TaskOrigin::SingleTask, true)
    }

    pub fn render(&self) -> String {
        self.tasks
            .iter()
            .map(|t| format!("TASK {}: {}\n", t.ordinal, t.description))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Producer {
    UserInput,
    Executor,
    Finalizer,
}

/// A snapshot of the file being updated. Fields are private so `loc` can
/// never drift from `content`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawArtifact")]
pub struct CodeArtifact {
    content: String,
    loc: usize,
    producer: Producer,
    task_ordinal: Option<usize>,
    iteration: u32,
}

#[derive(Deserialize)]
struct RawArtifact {
    content: String,
    producer: Producer,
    task_ordinal: Option<usize>,
    iteration: u32,
}

impl TryFrom<RawArtifact> for CodeArtifact {
    type Error = String;

    fn try_from(raw: RawArtifact) -> Result<Self, Self::Error> {
        if raw.producer == Producer::UserInput && (raw.task_ordinal.is_some() || raw.iteration != 0)
        {
            return Err("user_input artifacts carry no task ordinal or iteration".into());
        }
        Ok(Self {
            loc: count_loc(&raw.content),
            content: raw.content,
            producer: raw.producer,
            task_ordinal: raw.task_ordinal,
            iteration: raw.iteration,
        })
    }
}

impl CodeArtifact {
    pub fn user_input(content: impl Into<String>) -> Self {
        let content = content.into();
        Self {
            loc: count_loc(&content),
            content,
            producer: Producer::UserInput,
            task_ordinal: None,
            iteration: 0,
        }
    }

    pub fn from_executor(content: impl Into<String>, task_ordinal: usize) -> Self {
        let content = content.into();
        Self {
            loc: count_loc(&content),
            content,
            producer: Producer::Executor,
            task_ordinal: Some(task_ordinal),
            iteration: 0,
        }
    }

    /// A finalizer revision of `previous`; iteration advances by one.
    pub fn revised(
        previous: &CodeArtifact,
        content: impl Into<String>,
        task_ordinal: usize,
    ) -> Self {
        let content = content.into();
        Self {
            loc: count_loc(&content),
            content,
            producer: Producer::Finalizer,
            task_ordinal: Some(task_ordinal),
            iteration: previous.iteration + 1,
        }
    }

    pub fn content(&self) -> &str {
        &self.content
    }

    pub fn loc(&self) -> usize {
        self.loc
    }

    pub fn producer(&self) -> Producer {
        self.producer
    }

    pub fn task_ordinal(&self) -> Option<usize> {
        self.task_ordinal
    }

    pub fn iteration(&self) -> u32 {
        self.iteration
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Revise,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Accept => "accept",
            Decision::Revise => "revise",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub decision: Decision,
    pub feedback: String,
    pub parse_fallback: bool,
}

impl Verdict {
    pub fn accept() -> Self {
        Self {
            decision: Decision::Accept,
            feedback: String::new(),
            parse_fallback: false,
        }
    }

    /// Returns `None` when `feedback` is blank: a revise verdict must say what to fix.
    pub fn revise(feedback: impl Into<String>) -> Option<Self> {
        let feedback = feedback.into();
        if feedback.trim().is_empty() {
            return None;
        }
        Some(Self {
            decision: Decision::Revise,
            feedback,
            parse_fallback: false,
        })
    }

    pub fn fallback_accept() -> Self {
        Self {
            parse_fallback: true,
            ..Self::accept()
        }
    }

    pub fn is_accept(&self) -> bool {
        self.decision == Decision::Accept
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const VIEW_A_REQUIREMENTS: &str = "Requirement1: Update whole CakePHP view file from version 1.2 to version 4.5.\n\nRequirement2: ORM Arrays must be accessed with array style syntax ['Fieldname']['fieldname'] with the first fieldname starting with a capitalized letter and the second only with lowercase letters. Use first() when referring to first member in the array.\n";

    #[test]
    fn parses_two_requirement_file() {
        let set = parse_requirements(VIEW_A_REQUIREMENTS).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.requirements[0].index, 1);
        assert_eq!(
            set.requirements[0].text,
            "Update whole CakePHP view file from version 1.2 to version 4.5."
        );
        assert_eq!(set.requirements[1].index, 2);
        assert!(set.requirements[1]
            .text
            .starts_with("ORM Arrays must be accessed"));
        assert!(set.requirements[1]
            .text
            .ends_with("first member in the array."));
    }

    #[test]
    fn minimal_requirement() {
        let set = parse_requirements("Requirement1: a").unwrap();
        assert_eq!(
            set.requirements,
            vec![Requirement {
                index: 1,
                text: "a".into()
            }]
        );
    }

    #[test]
    fn no_markers_is_an_error() {
        assert_eq!(
            parse_requirements("no markers here"),
            Err(ModelError::EmptyRequirements)
        );
        assert_eq!(parse_requirements(""), Err(ModelError::EmptyRequirements));
        assert_eq!(
            parse_requirements("Requirement: x\nRequirement0: y"),
            Err(ModelError::EmptyRequirements)
        );
    }

    #[test]
    fn empty_marker_is_malformed() {
        assert_eq!(
            parse_requirements("Requirement1: ok\nRequirement2:   \n\n"),
            Err(ModelError::MalformedMarker { line: 2 })
        );
    }

    #[test]
    fn continuation_lines_and_renumbering() {
        let raw = "preamble ignored\nREQUIREMENT7: first\n  more of first\nrequirement3:\nsecond on next line\n";
        let set = parse_requirements(raw).unwrap();
        assert_eq!(set.requirements[0].index, 1);
        assert_eq!(set.requirements[0].text, "first\n  more of first");
        assert_eq!(set.requirements[1].index, 2);
        assert_eq!(set.requirements[1].text, "second on next line");
    }

    #[test]
    fn count_loc_basics() {
        assert_eq!(count_loc(""), 0);
        assert_eq!(count_loc("a\n\nb\n"), 2);
        assert_eq!(count_loc("  \t\n   \n"), 0);
        assert_eq!(count_loc("x"), 1);
        assert_eq!(count_loc("a\r\n\r\nb"), 2);
    }

    #[test]
    fn extracts_single_fence() {
        let reply = "Here you go:\n```php\n<?php echo 1;\n```";
        assert_eq!(extract_code(reply).unwrap(), "<?php echo 1;");
    }

    #[test]
    fn sentinel_fallback() {
        assert_eq!(extract_code("<?php echo 1;").unwrap(), "<?php echo 1;");
        assert_eq!(
            extract_code("  \n<!DOCTYPE html>\n<p>x</p>\n").unwrap(),
            "<!DOCTYPE html>\n<p>x</p>"
        );
        assert_eq!(
            extract_code_with("fn main() {}", &["fn "]).unwrap(),
            "fn main() {}"
        );
    }

    #[test]
    fn prose_reply_has_no_code() {
        assert_eq!(
            extract_code("I cannot update this file."),
            Err(ModelError::NoCodeFound)
        );
        assert_eq!(extract_code("```\n\n```"), Err(ModelError::NoCodeFound));
    }

    #[test]
    fn longest_block_wins() {
        let reply = "For example:\n```php\n$a['X'];\n```\nFull file:\n```php\n<?php\necho $a['X']['y'];\n?>\n```\n";
        assert_eq!(
            extract_code(reply).unwrap(),
            "<?php\necho $a['X']['y'];\n?>"
        );
    }

    #[test]
    fn unterminated_fence_is_ignored() {
        assert_eq!(
            extract_code("```php\n<?php echo 1;"),
            Err(ModelError::NoCodeFound)
        );
    }

    #[test]
    fn artifact_loc_tracks_content() {
        let a = CodeArtifact::user_input("a\n\nb\n");
        assert_eq!(a.loc(), 2);
        assert_eq!(a.iteration(), 0);
        assert_eq!(a.task_ordinal(), None);
        let e = CodeArtifact::from_executor("x\ny\nz", 1);
        let f = CodeArtifact::revised(&e, "x", 1);
        assert_eq!(f.iteration(), 1);
        assert_eq!(f.loc(), 1);
        assert_eq!(CodeArtifact::revised(&f, "y", 1).iteration(), 2);
    }

    #[test]
    fn artifact_deserialize_recomputes_loc() {
        let json =
            r#"{"content":"a\n\nb","loc":99,"producer":"executor","task_ordinal":1,"iteration":0}"#;
        let a: CodeArtifact = serde_json::from_str(json).unwrap();
        assert_eq!(a.loc(), 2);
        let bad =
            r#"{"content":"a","loc":1,"producer":"user_input","task_ordinal":1,"iteration":0}"#;
        assert!(serde_json::from_str::<CodeArtifact>(bad).is_err());
    }

    #[test]
    fn revise_requires_feedback() {
        assert!(Verdict::revise("  ").is_none());
        assert_eq!(
            Verdict::revise("fix it").unwrap().decision,
            Decision::Revise
        );
        assert!(Verdict::fallback_accept().parse_fallback);
    }

    #[test]
    fn plans_bypassing_manager() {
        let set = parse_requirements(VIEW_A_REQUIREMENTS).unwrap();
        let per = TaskPlan::per_requirement(&set);
        assert!(per.confirmed);
        assert_eq!(per.tasks.len(), 2);
        assert_eq!(per.tasks[1].ordinal, 2);
        assert_eq!(per.tasks[1].origin, TaskOrigin::PerRequirement);
        let single = TaskPlan::single_task(&set);
        assert_eq!(single.tasks.len(), 1);
        assert!(single.tasks[0].description.contains("version 4.5."));
        assert!(single.tasks[0].description.contains("first member"));
    }
}
