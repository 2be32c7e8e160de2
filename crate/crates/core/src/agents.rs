//! The five agent roles: manager, prompt maker, executor, verifier and
//! finalizer. Each is a template plus a strict reply parser.
//!
//! Replies must carry markers (`TASK n:`, `VERDICT:`, `FEEDBACK:`, section
//! labels). Text around the markers is ignored. A reply that cannot be
//! parsed earns exactly one re-ask.

use crate::backend::{BackendError, ChatMessage};
use crate::model::{
    self, CodeArtifact, ModelError, RequirementSet, Task, TaskOrigin, TaskPlan, Verdict,
};
use crate::prompts::{PromptSet, TemplateError, TemplateName};
use crate::transcript::{flags, AgentKind, CallSite, Session};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("manager reply contained no `TASK n:` lines")]
    PlanParse,
    #[error("prompt maker reply for task {task} is missing required sections")]
    PromptSpecParse { task: usize },
    #[error("failed generation: {0}")]
    FailedGeneration(#[source] ModelError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("precondition violated: {0}")]
    Precondition(&'static str),
}

/// A one-shot prompt for the executor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSpec {
    pub instruction: String,
    pub example_before: String,
    pub example_after: String,
    pub task_ordinal: usize,
}

const TASK_FORMAT: &str = "TASK 1: <description>\nTASK 2: <description>";
const PROMPT_SPEC_FORMAT: &str =
    "INSTRUCTION: <instruction>\nEXAMPLE BEFORE:\n<snippet>\nEXAMPLE AFTER:\n<snippet>\nEND";
const VERDICT_FORMAT: &str =
    "VERDICT: ACCEPT\nor\nVERDICT: REVISE\nFEEDBACK: <what is still wrong>";

fn reask_message(format: &str) -> String {
    format!(
        "Your previous reply could not be parsed. Reply again using exactly this format:\n\n{format}"
    )
}

/// Strips list bullets, heading marks and bold markers around a line.
fn normalize(line: &str) -> &str {
    line.trim()
        .trim_start_matches(|c: char| matches!(c, '*' | '#' | '-' | '>' | '_') || c.is_whitespace())
}

/// If `line` starts with `label` (case-insensitive) followed by `:`,
/// returns the text after the colon.
fn after_label<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    let line = normalize(line);
    let head = line.get(..label.len())?;
    if !head.eq_ignore_ascii_case(label) {
        return None;
    }
    let rest = line[label.len()..].trim_start_matches(['*', '_']);
    rest.strip_prefix(':')
        .map(|r| r.trim_start_matches(['*', '_']).trim())
}

/// Parses `TASK <n>: <description>` lines, in order of appearance.
/// Returns `None` when no such line exists.
pub fn parse_task_lines(reply: &str) -> Option<Vec<String>> {
    let tasks: Vec<String> = reply
        .lines()
        .filter_map(|line| {
            let line = normalize(line);
            let head = line.get(..4)?;
            if !head.eq_ignore_ascii_case("task") {
                return None;
            }
            let rest = line[4..].trim_start();
            let digits = rest.bytes().take_while(u8::is_ascii_digit).count();
            if digits == 0 {
                return None;
            }
            let desc = rest[digits..]
                .trim_start_matches(['*', '_', ' '])
                .strip_prefix(':')?
                .trim()
                .trim_matches(['*', '_'])
                .trim();
            (!desc.is_empty()).then(|| desc.to_string())
        })
        .collect();
    (!tasks.is_empty()).then_some(tasks)
}

const SECTION_LABELS: [&str; 3] = ["INSTRUCTION", "EXAMPLE BEFORE", "EXAMPLE AFTER"];

fn is_end_line(line: &str) -> bool {
    line.trim() == "END"
}

fn section_label(line: &str) -> Option<(usize, &str)> {
    SECTION_LABELS
        .iter()
        .enumerate()
        .find_map(|(i, l)| after_label(line, l).map(|rest| (i, rest)))
}

/// Drops a surrounding code fence, if the whole section is one.
fn unfence(text: &str) -> String {
    let trimmed = text.trim();
    let lines: Vec<&str> = trimmed.lines().collect();
    if lines.len() >= 2
        && lines[0].trim_start().starts_with("```")
        && lines[lines.len() - 1].trim() == "```"
    {
        return lines[1..lines.len() - 1].join("\n").trim().to_string();
    }
    trimmed.to_string()
}

/// Parses the three labeled sections in any order. Each section runs until
/// the next label or an `END` line. The first occurrence of a label wins.
pub fn parse_prompt_spec(reply: &str, task_ordinal: usize) -> Option<PromptSpec> {
    let mut sections: [Option<Vec<&str>>; 3] = [None, None, None];
    let mut open: Option<usize> = None;
    for line in reply.lines() {
        if let Some((idx, rest)) = section_label(line) {
            if sections[idx].is_none() {
                sections[idx] = Some(vec![rest]);
                open = Some(idx);
            } else {
                open = None;
            }
        } else if is_end_line(line) {
            open = None;
        } else if let Some(idx) = open {
            sections[idx]
                .as_mut()
                .expect("open section exists")
                .push(line);
        }
    }
    let [instruction, before, after] = sections.map(|s| {
        s.map(|lines| unfence(&lines.join("\n")))
            .filter(|s| !s.is_empty())
    });
    Some(PromptSpec {
        instruction: instruction?,
        example_before: before?,
        example_after: after?,
        task_ordinal,
    })
}

/// Parses `VERDICT: ACCEPT|REVISE` and, for revise, `FEEDBACK: ...`.
///
/// Feedback runs from its label to the next blank line, marker line, `END`,
/// or the end of the reply. A revise verdict without feedback is unparseable.
pub fn parse_verdict(reply: &str) -> Option<Verdict> {
    let lines: Vec<&str> = reply.lines().collect();
    let decision = lines.iter().find_map(|l| {
        let value = after_label(l, "VERDICT")?;
        let word: String = value
            .chars()
            .take_while(|c| c.is_ascii_alphabetic())
            .collect();
        match word.to_ascii_uppercase().as_str() {
            "ACCEPT" => Some(model::Decision::Accept),
            "REVISE" => Some(model::Decision::Revise),
            _ => None,
        }
    })?;

    let feedback = lines
        .iter()
        .position(|l| after_label(l, "FEEDBACK").is_some())
        .map(|start| {
            let mut parts = vec![after_label(lines[start], "FEEDBACK").unwrap_or_default()];
            for l in &lines[start + 1..] {
                if l.trim().is_empty()
                    || is_end_line(l)
                    || after_label(l, "VERDICT").is_some()
                    || after_label(l, "FEEDBACK").is_some()
                {
                    break;
                }
                parts.push(l.trim());
            }
            parts.join("\n").trim().to_string()
        })
        .unwrap_or_default();

    match decision {
        model::Decision::Accept => Some(Verdict {
            feedback,
            ..Verdict::accept()
        }),
        model::Decision::Revise => Verdict::revise(feedback),
    }
}

/// Agent operations over a [`Session`]. Stateless apart from the templates.
pub struct Agents<'p> {
    prompts: &'p PromptSet,
    sentinels: Vec<String>,
}

impl<'p> Agents<'p> {
    pub fn new(prompts: &'p PromptSet) -> Self {
        Self {
            prompts,
            sentinels: model::DEFAULT_CODE_SENTINELS
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }

    pub fn with_sentinels(mut self, sentinels: Vec<String>) -> Self {
        self.sentinels = sentinels;
        self
    }

    fn messages(
        &self,
        name: TemplateName,
        vars: &[(&str, &str)],
    ) -> Result<Vec<ChatMessage>, AgentError> {
        let t = self.prompts.get(name);
        Ok(vec![
            ChatMessage::system(t.system_prompt()),
            ChatMessage::user(t.render(vars)?),
        ])
    }

    /// One call, and one re-ask if `parse` rejects the reply.
    fn ask<T>(
        &self,
        session: &mut Session<'_>,
        site: CallSite,
        mut messages: Vec<ChatMessage>,
        format: &str,
        parse: impl Fn(&str) -> Option<T>,
    ) -> Result<Option<T>, BackendError> {
        let first = session.call(site, messages.clone(), &[])?;
        if let Some(v) = parse(&first.content) {
            return Ok(Some(v));
        }
        session.flag_last(flags::PARSE_FAILED);
        messages.push(ChatMessage::assistant(first.content));
        messages.push(ChatMessage::user(reask_message(format)));
        let second = session.call(site, messages, &[flags::REASK])?;
        let parsed = parse(&second.content);
        if parsed.is_none() {
            session.flag_last(flags::PARSE_FAILED);
        }
        Ok(parsed)
    }

    fn extract(&self, session: &mut Session<'_>, reply: &str) -> Result<String, AgentError> {
        let sentinels: Vec<&str> = self.sentinels.iter().map(String::as_str).collect();
        model::extract_code_with(reply, &sentinels).map_err(|e| {
            session.flag_last(flags::NO_CODE);
            AgentError::FailedGeneration(e)
        })
    }

    pub fn manager_plan(
        &self,
        session: &mut Session<'_>,
        requirements: &RequirementSet,
    ) -> Result<TaskPlan, AgentError> {
        if requirements.is_empty() {
            return Err(AgentError::Precondition("requirements must not be empty"));
        }
        let rendered = requirements.render();
        let messages = self.messages(
            TemplateName::Manager,
            &[("requirements", rendered.trim_end())],
        )?;
        let tasks = self
            .ask(
                session,
                CallSite::new(AgentKind::Manager),
                messages,
                TASK_FORMAT,
                parse_task_lines,
            )?
            .ok_or(AgentError::PlanParse)?;
        Ok(TaskPlan::from_descriptions(
            tasks,
            TaskOrigin::ManagerPlanned,
            false,
        ))
    }

    /// The single confirmation pass. An unparseable reply keeps `plan`.
    pub fn manager_confirm(
        &self,
        session: &mut Session<'_>,
        plan: TaskPlan,
        requirements: &RequirementSet,
    ) -> Result<TaskPlan, AgentError> {
        if plan.confirmed {
            return Err(AgentError::Precondition("plan is already confirmed"));
        }
        let rendered_reqs = requirements.render();
        let rendered_plan = plan.render();
        let messages = self.messages(
            TemplateName::ManagerConfirm,
            &[
                ("requirements", rendered_reqs.trim_end()),
                ("plan", rendered_plan.trim_end()),
            ],
        )?;
        let reply = session.call(
            CallSite::new(AgentKind::Manager),
            messages,
            &[flags::CONFIRM],
        )?;
        Ok(match parse_task_lines(&reply.content) {
            Some(tasks) => TaskPlan::from_descriptions(tasks, TaskOrigin::ManagerPlanned, true),
            None => {
                session.flag_last(flags::CONFIRM_FALLBACK);
                TaskPlan {
                    confirmed: true,
                    ..plan
                }
            }
        })
    }

    pub fn make_prompt(
        &self,
        session: &mut Session<'_>,
        task: &Task,
        code: &CodeArtifact,
    ) -> Result<PromptSpec, AgentError> {
        if task.description.trim().is_empty() {
            return Err(AgentError::Precondition(
                "task description must not be empty",
            ));
        }
        let messages = self.messages(
            TemplateName::PromptMaker,
            &[("task", &task.description), ("code", code.content())],
        )?;
        let ordinal = task.ordinal;
        self.ask(
            session,
            CallSite::task(AgentKind::PromptMaker, ordinal, 0),
            messages,
            PROMPT_SPEC_FORMAT,
            |r| parse_prompt_spec(r, ordinal),
        )?
        .ok_or(AgentError::PromptSpecParse { task: ordinal })
    }

    pub fn execute(
        &self,
        session: &mut Session<'_>,
        prompt: &PromptSpec,
        code: &CodeArtifact,
    ) -> Result<CodeArtifact, AgentError> {
        if code.content().trim().is_empty() {
            return Err(AgentError::Precondition("code must not be empty"));
        }
        let messages = self.messages(
            TemplateName::Executor,
            &[
                ("instruction", &prompt.instruction),
                ("example_before", &prompt.example_before),
                ("example_after", &prompt.example_after),
                ("code", code.content()),
            ],
        )?;
        let reply = session.call(
            CallSite::task(AgentKind::Executor, prompt.task_ordinal, 0),
            messages,
            &[],
        )?;
        let content = self.extract(session, &reply.content)?;
        Ok(CodeArtifact::from_executor(content, prompt.task_ordinal))
    }

    /// Judges `after` against the task. `original` is the user's file and
    /// `before` the file as it entered this task.
    pub fn verify(
        &self,
        session: &mut Session<'_>,
        task: &Task,
        original: &CodeArtifact,
        before: &CodeArtifact,
        after: &CodeArtifact,
    ) -> Result<Verdict, AgentError> {
        if after.producer() == model::Producer::UserInput {
            return Err(AgentError::Precondition(
                "only generated code can be verified",
            ));
        }
        let messages = self.messages(
            TemplateName::Verifier,
            &[
                ("task", &task.description),
                ("original", original.content()),
                ("before", before.content()),
                ("after", after.content()),
            ],
        )?;
        let site = CallSite::task(AgentKind::Verifier, task.ordinal, after.iteration());
        match self.ask(session, site, messages, VERDICT_FORMAT, parse_verdict)? {
            Some(v) => Ok(v),
            None => {
                session.flag_last(flags::PARSE_FALLBACK);
                Ok(Verdict::fallback_accept())
            }
        }
    }

    pub fn finalize(
        &self,
        session: &mut Session<'_>,
        task: &Task,
        code: &CodeArtifact,
        feedback: &str,
    ) -> Result<CodeArtifact, AgentError> {
        if feedback.trim().is_empty() {
            return Err(AgentError::Precondition(
                "finalizer needs verifier feedback",
            ));
        }
        let messages = self.messages(
            TemplateName::Finalizer,
            &[
                ("task", &task.description),
                ("code", code.content()),
                ("feedback", feedback),
            ],
        )?;
        let reply = session.call(
            CallSite::task(AgentKind::Finalizer, task.ordinal, code.iteration() + 1),
            messages,
            &[],
        )?;
        let content = self.extract(session, &reply.content)?;
        Ok(CodeArtifact::revised(code, content, task.ordinal))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ScriptEntry, ScriptedBackend};
    use crate::model::{parse_requirements, Decision};
    use crate::transcript::RequestSettings;

    fn scripted(replies: &[&str]) -> ScriptedBackend {
        ScriptedBackend::new(replies.iter().map(|r| ScriptEntry::sequence(*r)).collect()).unwrap()
    }

    fn reqs() -> RequirementSet {
        parse_requirements("Requirement1: Update syntax\nRequirement2: Fix ORM access").unwrap()
    }

    fn task() -> Task {
        Task {
            ordinal: 1,
            description: "Update syntax".into(),
            origin: TaskOrigin::PerRequirement,
        }
    }

    const SPEC_REPLY: &str = "INSTRUCTION: Capitalize the model name.\nEXAMPLE BEFORE:\n$q['apple']['lemon']\nEXAMPLE AFTER:\n$q['Apple']['lemon']\nEND";

    #[test]
    fn plan_parses_in_order() {
        let prompts = PromptSet::builtin();
        let backend = scripted(&["TASK 1: Update syntax to 4.5\nTASK 2: Fix ORM access"]);
        let mut s = Session::new("r", &backend, RequestSettings::default());
        let plan = Agents::new(&prompts).manager_plan(&mut s, &reqs()).unwrap();
        assert!(!plan.confirmed);
        assert_eq!(
            plan.tasks
                .iter()
                .map(|t| t.description.as_str())
                .collect::<Vec<_>>(),
            ["Update syntax to 4.5", "Fix ORM access"]
        );
        assert_eq!(plan.tasks[1].ordinal, 2);
        assert_eq!(plan.tasks[0].origin, TaskOrigin::ManagerPlanned);
        assert_eq!(s.entries().len(), 1);
        let req = s.entries()[0].request().unwrap();
        assert!(req
            .last_user_message()
            .unwrap()
            .contains("Requirement2: Fix ORM access"));
    }

    #[test]
    fn plan_ignores_prose() {
        let prompts = PromptSet::builtin();
        let backend = scripted(&["Sure! Here is the plan.\n\nTASK 1: x\n\nHope this helps."]);
        let mut s = Session::new("r", &backend, RequestSettings::default());
        let plan = Agents::new(&prompts).manager_plan(&mut s, &reqs()).unwrap();
        assert_eq!(plan.tasks.len(), 1);
        assert_eq!(plan.tasks[0].description, "x");
    }

    #[test]
    fn plan_reasks_once_then_fails() {
        let prompts = PromptSet::builtin();
        let backend = scripted(&["no tasks", "still none", "TASK 1: never reached"]);
        let mut s = Session::new("r", &backend, RequestSettings::default());
        let err = Agents::new(&prompts)
            .manager_plan(&mut s, &reqs())
            .unwrap_err();
        assert!(matches!(err, AgentError::PlanParse));
        assert_eq!(s.entries().len(), 2);
        assert!(s.entries()[1].has_flag(flags::REASK));
        assert_eq!(backend.remaining(), 1);
    }

    #[test]
    fn plan_recovers_on_reask() {
        let prompts = PromptSet::builtin();
        let backend = scripted(&["no tasks", "TASK 1: a"]);
        let mut s = Session::new("r", &backend, RequestSettings::default());
        let plan = Agents::new(&prompts).manager_plan(&mut s, &reqs()).unwrap();
        assert_eq!(plan.tasks.len(), 1);
        let reask = s.entries()[1].request().unwrap();
        assert_eq!(reask.messages.len(), 4);
        assert_eq!(reask.messages[2].content, "no tasks");
    }

    #[test]
    fn confirm_fixed_point_reorder_and_fallback() {
        let prompts = PromptSet::builtin();
        let agents = Agents::new(&prompts);
        let plan = TaskPlan::from_descriptions(["A", "B"], TaskOrigin::ManagerPlanned, false);

        let backend = scripted(&[
            "TASK 1: A\nTASK 2: B",
            "TASK 1: B\nTASK 2: A",
            "looks fine to me",
        ]);
        let mut s = Session::new("r", &backend, RequestSettings::default());

        let same = agents
            .manager_confirm(&mut s, plan.clone(), &reqs())
            .unwrap();
        assert!(same.confirmed);
        assert_eq!(same.tasks, plan.tasks);

        let swapped = agents
            .manager_confirm(&mut s, plan.clone(), &reqs())
            .unwrap();
        assert_eq!(swapped.tasks[0].description, "B");
        assert_eq!(swapped.tasks[0].ordinal, 1);

        let kept = agents
            .manager_confirm(&mut s, plan.clone(), &reqs())
            .unwrap();
        assert!(kept.confirmed);
        assert_eq!(kept.tasks, plan.tasks);
        assert!(s.entries()[2].has_flag(flags::CONFIRM_FALLBACK));
        assert!(!s.entries()[1].has_flag(flags::CONFIRM_FALLBACK));
        assert!(s.entries().iter().all(|e| e.has_flag(flags::CONFIRM)));
    }

    #[test]
    fn prompt_spec_sections_any_order() {
        let direct = parse_prompt_spec(SPEC_REPLY, 1).unwrap();
        assert_eq!(direct.instruction, "Capitalize the model name.");
        assert_eq!(direct.example_before, "$q['apple']['lemon']");
        assert_eq!(direct.example_after, "$q['Apple']['lemon']");

        let shuffled = "EXAMPLE AFTER:\n```php\n$q['Apple']['lemon']\n```\nINSTRUCTION:\nCapitalize the model name.\nEXAMPLE BEFORE: $q['apple']['lemon']\nEND\ntrailing prose";
        assert_eq!(parse_prompt_spec(shuffled, 1).unwrap(), direct);
    }

    #[test]
    fn prompt_spec_missing_section_twice_fails() {
        let prompts = PromptSet::builtin();
        let partial = "INSTRUCTION: x\nEXAMPLE BEFORE:\na\nEND";
        let backend = scripted(&[partial, partial]);
        let mut s = Session::new("r", &backend, RequestSettings::default());
        let err = Agents::new(&prompts)
            .make_prompt(&mut s, &task(), &CodeArtifact::user_input("<?php"))
            .unwrap_err();
        assert!(matches!(err, AgentError::PromptSpecParse { task: 1 }));
        assert_eq!(s.entries().len(), 2);
    }

    #[test]
    fn execute_happy_path_and_failures() {
        let prompts = PromptSet::builtin();
        let agents = Agents::new(&prompts);
        let spec = parse_prompt_spec(SPEC_REPLY, 3).unwrap();
        let original = CodeArtifact::user_input("<?php echo $q[0]['apple']['lemon']; ?>");
        let backend = scripted(&[
            "```php\n<?php echo $q->first()['Apple']['lemon']; ?>\n```",
            "Sorry.",
            "e.g.\n```\nfirst()\n```\nfull:\n```php\n<?php\necho $q->first()['Apple']['lemon'];\n?>\n```",
        ]);
        let mut s = Session::new("r", &backend, RequestSettings::default());

        let out = agents.execute(&mut s, &spec, &original).unwrap();
        assert_eq!(out.producer(), model::Producer::Executor);
        assert_eq!(out.task_ordinal(), Some(3));
        assert_eq!(out.iteration(), 0);
        assert_eq!(out.loc(), 1);
        let sent = s.entries()[0].request().unwrap();
        let user = sent.last_user_message().unwrap();
        assert!(user.contains("Capitalize the model name."));
        assert!(user.contains(original.content()));
        assert!(user.contains("Return only the updated code"));

        let err = agents.execute(&mut s, &spec, &original).unwrap_err();
        assert!(matches!(
            err,
            AgentError::FailedGeneration(ModelError::NoCodeFound)
        ));
        assert!(s.entries()[1].has_flag(flags::NO_CODE));

        let longest = agents.execute(&mut s, &spec, &original).unwrap();
        assert_eq!(longest.loc(), 3);
        assert_eq!(s.entries().len(), 3);
    }

    #[test]
    fn verdict_parsing() {
        assert_eq!(parse_verdict("VERDICT: ACCEPT").unwrap(), Verdict::accept());
        let v = parse_verdict("VERDICT: REVISE\nFEEDBACK: first() not used on ORM object").unwrap();
        assert_eq!(v.decision, Decision::Revise);
        assert_eq!(v.feedback, "first() not used on ORM object");
        assert_eq!(
            parse_verdict("**Verdict:** revise\n**Feedback:** line one\nline two\n\nprose")
                .unwrap()
                .feedback,
            "line one\nline two"
        );
        assert!(parse_verdict("VERDICT: REVISE").is_none());
        assert!(parse_verdict("VERDICT: MAYBE").is_none());
        assert!(parse_verdict("all good").is_none());
    }

    #[test]
    fn verify_garbage_twice_falls_back_to_accept() {
        let prompts = PromptSet::builtin();
        let backend = scripted(&["hmm", "???"]);
        let mut s = Session::new("r", &backend, RequestSettings::default());
        let original = CodeArtifact::user_input("<?php a");
        let after = CodeArtifact::from_executor("<?php b", 1);
        let v = Agents::new(&prompts)
            .verify(&mut s, &task(), &original, &original, &after)
            .unwrap();
        assert_eq!(v.decision, Decision::Accept);
        assert!(v.parse_fallback);
        assert_eq!(s.entries().len(), 2);
        assert!(s.entries()[1].has_flag(flags::PARSE_FALLBACK));
    }

    #[test]
    fn verify_rejects_user_input() {
        let prompts = PromptSet::builtin();
        let backend = scripted(&[]);
        let mut s = Session::new("r", &backend, RequestSettings::default());
        let original = CodeArtifact::user_input("<?php a");
        assert!(matches!(
            Agents::new(&prompts).verify(&mut s, &task(), &original, &original, &original),
            Err(AgentError::Precondition(_))
        ));
        assert!(s.entries().is_empty());
    }

    #[test]
    fn finalize_contracts() {
        let prompts = PromptSet::builtin();
        let agents = Agents::new(&prompts);
        let backend = scripted(&["```php\n<?php fixed\n```", "no code for you"]);
        let mut s = Session::new("r", &backend, RequestSettings::default());
        let code = CodeArtifact::from_executor("<?php broken", 1);

        let fixed = agents.finalize(&mut s, &task(), &code, "fix it").unwrap();
        assert_eq!(fixed.iteration(), 1);
        assert_eq!(fixed.producer(), model::Producer::Finalizer);
        assert_eq!(fixed.content(), "<?php fixed");
        assert_eq!(s.entries()[0].iteration, Some(1));

        assert!(matches!(
            agents.finalize(&mut s, &task(), &fixed, "again"),
            Err(AgentError::FailedGeneration(_))
        ));

        let before = s.entries().len();
        assert!(matches!(
            agents.finalize(&mut s, &task(), &fixed, ""),
            Err(AgentError::Precondition(_))
        ));
        assert_eq!(s.entries().len(), before);
    }
}
