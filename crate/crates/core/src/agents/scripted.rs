//! Deterministic backend replaying a script file.
//!
//! Each non-blank, non-`#` line is `role<TAB>turn_index<TAB>text`. The role
//! may carry a scope, `role@scope`, where the scope is a vignette id, a
//! constitution id, or `vignette/constitution`. Lookups prefer the most
//! specific scope: `vignette/constitution`, then constitution, then vignette,
//! then unscoped. Several lines with the same key are alternatives used by
//! successive regeneration attempts; the last one repeats. In `text`, `\n`,
//! `\t` and `\\` are unescaped.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::backend::{BackendError, BackendMode, CallSite, Completion, TextBackend};
use super::context::PromptContext;
use super::AgentRole;

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("reading script {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("script line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("script exhausted: no line for {role} turn {turn_index} (vignette {vignette}, constitution {constitution})")]
    Exhausted { role: AgentRole, turn_index: usize, vignette: String, constitution: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Key {
    role: AgentRole,
    scope: Option<String>,
    turn: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    lines: HashMap<Key, Vec<String>>,
}

impl ScriptedBackend {
    pub fn from_file(path: &Path) -> Result<Self, ScriptError> {
        let text = fs::read_to_string(path).map_err(|source| ScriptError::Io { path: path.to_owned(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        let mut lines: HashMap<Key, Vec<String>> = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| ScriptError::Parse { line: line_no, message };
            let mut cols = line.splitn(3, '\t');
            let (Some(role_col), Some(turn_col), Some(text_col)) = (cols.next(), cols.next(), cols.next()) else {
                return Err(err("expected role<TAB>turn_index<TAB>text".into()));
            };
            let (role, scope) = match role_col.split_once('@') {
                Some((r, s)) if !s.is_empty() => (r, Some(s.to_owned())),
                Some(_) => return Err(err("empty scope after `@`".into())),
                None => (role_col, None),
            };
            let role = role.parse::<AgentRole>().map_err(err)?;
            let turn = turn_col.trim().parse::<usize>().map_err(|e| err(format!("turn index: {e}")))?;
            lines.entry(Key { role, scope, turn }).or_default().push(unescape(text_col));
        }
        Ok(Self { lines })
    }

    pub fn len(&self) -> usize {
        self.lines.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    fn lookup(&self, call: &CallSite<'_>) -> Option<&str> {
        let scopes = [
            Some(format!("{}/{}", call.vignette, call.constitution)),
            Some(call.constitution.to_owned()),
            Some(call.vignette.to_owned()),
            None,
        ];
        scopes.into_iter().find_map(|scope| {
            let options = self.lines.get(&Key { role: call.role, scope, turn: call.turn_index })?;
            let idx = (call.attempt as usize).min(options.len() - 1);
            Some(options[idx].as_str())
        })
    }
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

impl TextBackend for ScriptedBackend {
    fn complete(&self, call: &CallSite<'_>, _ctx: &PromptContext) -> Result<Completion, BackendError> {
        match self.lookup(call) {
            Some(text) => Ok(Completion { text: text.to_owned(), attempts: 1 }),
            None => Err(ScriptError::Exhausted {
                role: call.role,
                turn_index: call.turn_index,
                vignette: call.vignette.to_owned(),
                constitution: call.constitution.to_owned(),
            }
            .into()),
        }
    }

    fn mode(&self) -> BackendMode {
        BackendMode::Scripted
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::generate;

    fn call(role: AgentRole, turn_index: usize) -> CallSite<'static> {
        CallSite { role, turn_index, vignette: "vignette_1", constitution: "doctor", attempt: 0 }
    }

    fn ready_ctx() -> PromptContext {
        let mut ctx = PromptContext::new("sys");
        ctx.push_user("The conversation is about to start.");
        ctx
    }

    const SCRIPT: &str = "# demo\n\
doctor\t0\tHello, how can I help you today?\n\
patient\t1\tgeneric reply\n\
patient@vignette_1\t1\tI have lighter patches of skin.\n\
patient@vignette_1/doctor\t1\tcell-specific reply\n\
critic@none\t6\tBe warmer.\n\
critic\t6\tfirst try\n\
critic\t6\tsecond try\n\
moderator\t2\tSTOP\\nreally\n";

    #[test]
    fn doctor_opening_line() {
        let backend = ScriptedBackend::parse(SCRIPT).unwrap();
        let (text, record) = generate(&backend, &call(AgentRole::Doctor, 0), &ready_ctx()).unwrap();
        assert_eq!(text, "Hello, how can I help you today?");
        assert_eq!(record.response_text, text);
        assert_eq!(record.request_digest, ready_ctx().digest());
    }

    #[test]
    fn scope_precedence() {
        let backend = ScriptedBackend::parse(SCRIPT).unwrap();
        let ctx = ready_ctx();
        let mut c = call(AgentRole::Patient, 1);
        assert_eq!(backend.complete(&c, &ctx).unwrap().text, "cell-specific reply");
        c.constitution = "none";
        assert_eq!(backend.complete(&c, &ctx).unwrap().text, "I have lighter patches of skin.");
        c.vignette = "vignette_2";
        assert_eq!(backend.complete(&c, &ctx).unwrap().text, "generic reply");
    }

    #[test]
    fn alternatives_follow_attempts() {
        let backend = ScriptedBackend::parse(SCRIPT).unwrap();
        let ctx = ready_ctx();
        let mut c = call(AgentRole::Critic, 6);
        assert_eq!(backend.complete(&c, &ctx).unwrap().text, "first try");
        c.attempt = 1;
        assert_eq!(backend.complete(&c, &ctx).unwrap().text, "second try");
        c.attempt = 7;
        assert_eq!(backend.complete(&c, &ctx).unwrap().text, "second try");
        c.constitution = "none";
        assert_eq!(backend.complete(&c, &ctx).unwrap().text, "Be warmer.");
    }

    #[test]
    fn escapes() {
        let backend = ScriptedBackend::parse(SCRIPT).unwrap();
        let text = backend.complete(&call(AgentRole::Moderator, 2), &ready_ctx()).unwrap().text;
        assert_eq!(text, "STOP\nreally");
    }

    #[test]
    fn beyond_script_end() {
        let backend = ScriptedBackend::parse(SCRIPT).unwrap();
        let err = generate(&backend, &call(AgentRole::Doctor, 40), &ready_ctx()).unwrap_err();
        assert!(matches!(err, BackendError::Script(ScriptError::Exhausted { turn_index: 40, .. })), "{err}");
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(ScriptedBackend::parse("doctor\t0"), Err(ScriptError::Parse { line: 1, .. })));
        assert!(matches!(ScriptedBackend::parse("\nnurse\t0\thi"), Err(ScriptError::Parse { line: 2, .. })));
        assert!(matches!(ScriptedBackend::parse("doctor\tx\thi"), Err(ScriptError::Parse { .. })));
        assert!(matches!(ScriptedBackend::parse("doctor@\t1\thi"), Err(ScriptError::Parse { .. })));
    }

    #[test]
    fn deterministic_replay() {
        let backend = ScriptedBackend::parse(SCRIPT).unwrap();
        let calls = [call(AgentRole::Doctor, 0), call(AgentRole::Patient, 1), call(AgentRole::Critic, 6)];
        let run = || calls.iter().map(|c| backend.complete(c, &ready_ctx()).unwrap().text).collect::<Vec<_>>();
        assert_eq!(run(), run());
    }
}
