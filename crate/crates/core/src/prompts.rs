//! Agent prompt templates.
//!
//! A template file has a `[system]` section and a `[user]` section. The user
//! section may reference `{{name}}` placeholders, filled at call time.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template {name}: {message}")]
    Malformed { name: String, message: String },
    #[error("template {template} references unbound placeholder {{{{{placeholder}}}}}")]
    Unbound {
        template: String,
        placeholder: String,
    },
    #[error("cannot read template {path}: {message}")]
    Io { path: String, message: String },
}

/// The six template slots. Each has exactly one registered template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TemplateName {
    Manager,
    ManagerConfirm,
    PromptMaker,
    Executor,
    Verifier,
    Finalizer,
}

impl TemplateName {
    pub const ALL: [TemplateName; 6] = [
        TemplateName::Manager,
        TemplateName::ManagerConfirm,
        TemplateName::PromptMaker,
        TemplateName::Executor,
        TemplateName::Verifier,
        TemplateName::Finalizer,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            TemplateName::Manager => "manager.txt",
            TemplateName::ManagerConfirm => "manager_confirm.txt",
            TemplateName::PromptMaker => "prompt_maker.txt",
            TemplateName::Executor => "executor.txt",
            TemplateName::Verifier => "verifier.txt",
            TemplateName::Finalizer => "finalizer.txt",
        }
    }

    fn builtin_source(self) -> &'static str {
        match self {
            TemplateName::Manager => include_str!("../prompts/manager.txt"),
            TemplateName::ManagerConfirm => include_str!("../prompts/manager_confirm.txt"),
            TemplateName::PromptMaker => include_str!("../prompts/prompt_maker.txt"),
            TemplateName::Executor => include_str!("../prompts/executor.txt"),
            TemplateName::Verifier => include_str!("../prompts/verifier.txt"),
            TemplateName::Finalizer => include_str!("../prompts/finalizer.txt"),
        }
    }
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.file_name().trim_end_matches(".txt"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    name: String,
    system: String,
    user: String,
}

impl Template {
    pub fn parse(name: impl Into<String>, source: &str) -> Result<Self, TemplateError> {
        let name = name.into();
        let malformed = |message: &str| TemplateError::Malformed {
            name: name.clone(),
            message: message.to_string(),
        };
        let mut system: Option<Vec<&str>> = None;
        let mut user: Option<Vec<&str>> = None;
        let mut current: Option<&mut Vec<&str>> = None;
        for line in source.lines() {
            match line.trim() {
                "[system]" => {
                    if system.is_some() {
                        return Err(malformed("duplicate [system] section"));
                    }
                    current = Some(system.insert(Vec::new()));
                }
                "[user]" => {
                    if user.is_some() {
                        return Err(malformed("duplicate [user] section"));
                    }
                    current = Some(user.insert(Vec::new()));
                }
                _ => match current.as_mut() {
                    Some(lines) => lines.push(line),
                    None if line.trim().is_empty() => {}
                    None => return Err(malformed("text before the first section header")),
                },
            }
        }
        let system = system.ok_or_else(|| malformed("missing [system] section"))?;
        let user = user.ok_or_else(|| malformed("missing [user] section"))?;
        let system = system.join("\n").trim().to_string();
        let user = user.join("\n").trim().to_string();
        if system.is_empty() {
            return Err(malformed("empty system prompt"));
        }
        if user.is_empty() {
            return Err(malformed("empty user prompt"));
        }
        Ok(Self { name, system, user })
    }

    pub fn system_prompt(&self) -> &str {
        &self.system
    }

    pub fn user_template(&self) -> &str {
        &self.user
    }

    /// Fills the user section. Substituted values are not rescanned, so code
    /// containing `{{` passes through untouched.
    pub fn render(&self, vars: &[(&str, &str)]) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(self.user.len());
        let mut rest = self.user.as_str();
        while let Some(open) = rest.find("{{") {
            let Some(close) = rest[open + 2..].find("}}") else {
                break;
            };
            let key = &rest[open + 2..open + 2 + close];
            let key_trim = key.trim();
            let is_ident = !key_trim.is_empty()
                && key_trim
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_');
            out.push_str(&rest[..open]);
            if is_ident {
                let value = vars
                    .iter()
                    .find(|(k, _)| *k == key_trim)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| TemplateError::Unbound {
                        template: self.name.clone(),
                        placeholder: key_trim.to_string(),
                    })?;
                out.push_str(value);
            } else {
                out.push_str(&rest[open..open + 4 + close]);
            }
            rest = &rest[open + 4 + close..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// One template per [`TemplateName`].
#[derive(Debug, Clone)]
pub struct PromptSet {
    templates: BTreeMap<TemplateName, Template>,
}

impl PromptSet {
    /// The templates shipped with the crate.
    pub fn builtin() -> Self {
        let templates = TemplateName::ALL
            .into_iter()
            .map(|n| {
                let t = Template::parse(n.to_string(), n.builtin_source())
                    .expect("bundled templates are well-formed");
                (n, t)
            })
            .collect();
        Self { templates }
    }

    /// Loads all six templates from `dir`; every file must be present.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, TemplateError> {
        let dir = dir.as_ref();
        let mut templates = BTreeMap::new();
        for n in TemplateName::ALL {
            let path = dir.join(n.file_name());
            let source = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            templates.insert(n, Template::parse(n.to_string(), &source)?);
        }
        Ok(Self { templates })
    }

    pub fn with_template(mut self, name: TemplateName, template: Template) -> Self {
        self.templates.insert(name, template);
        self
    }

    pub fn get(&self, name: TemplateName) -> &Template {
        &self.templates[&name]
    }
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_templates_parse() {
        let set = PromptSet::builtin();
        for n in TemplateName::ALL {
            assert!(!set.get(n).system_prompt().is_empty(), "{n}");
        }
    }

    #[test]
    fn render_substitutes_once() {
        let t = Template::parse("t", "[system]\nsys\n[user]\nA {{x}} B {{ y }} C").unwrap();
        assert_eq!(
            t.render(&[("x", "{{y}}"), ("y", "2")]).unwrap(),
            "A {{y}} B 2 C"
        );
    }

    #[test]
    fn render_reports_unbound() {
        let t = Template::parse("t", "[system]\nsys\n[user]\n{{missing}}").unwrap();
        assert_eq!(
            t.render(&[]),
            Err(TemplateError::Unbound {
                template: "t".into(),
                placeholder: "missing".into()
            })
        );
    }

    #[test]
    fn non_identifier_braces_are_literal() {
        let t = Template::parse("t", "[system]\ns\n[user]\nphp {{ $x['a'] }} and {{").unwrap();
        assert_eq!(t.render(&[]).unwrap(), "php {{ $x['a'] }} and {{");
    }

    #[test]
    fn malformed_templates() {
        assert!(Template::parse("t", "[user]\nx").is_err());
        assert!(Template::parse("t", "[system]\n\n[user]\nx").is_err());
        assert!(Template::parse("t", "junk\n[system]\ns\n[user]\nu").is_err());
        assert!(Template::parse("t", "[system]\ns\n[user]\nu\n[user]\nv").is_err());
    }

    #[test]
    fn load_dir_requires_every_file() {
        let dir = tempfile::tempdir().unwrap();
        for n in TemplateName::ALL {
            std::fs::write(dir.path().join(n.file_name()), n.builtin_source()).unwrap();
        }
        assert!(PromptSet::load_dir(dir.path()).is_ok());
        std::fs::remove_file(dir.path().join("verifier.txt")).unwrap();
        assert!(matches!(
            PromptSet::load_dir(dir.path()),
            Err(TemplateError::Io { .. })
        ));
    }
}
