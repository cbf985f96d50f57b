//! Settings shared by flags and the optional TOML config file.
//!
//! The file takes the same keys as the flags, in kebab case. Top-level keys
//! apply to every command; a `[generate]`, `[serve]`, `[analyze]` or
//! `[simulate]` table overrides them for that command. Flags override both.
//!
//! ```toml
//! corpus = "corpus"
//! backend = "scripted"
//! script = "fixtures/demo.script"
//!
//! [analyze]
//! out = "results"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use consteval::agents::{BackendMode, LiveAdapter};
use serde::de::DeserializeOwned;
use serde::Deserialize;

pub const COMMANDS: [&str; 4] = ["generate", "serve", "analyze", "simulate"];

macro_rules! keys {
    ($($field:ident: $ty:ty),* $(,)?) => {
        #[derive(Debug, Clone, Default, PartialEq, Deserialize)]
        #[serde(rename_all = "kebab-case", deny_unknown_fields)]
        pub struct Keys {
            $(pub $field: Option<$ty>,)*
        }

        impl Keys {
            /// Fills every unset key from `fallback`.
            pub fn or(self, fallback: Keys) -> Keys {
                Keys { $($field: self.$field.or(fallback.$field),)* }
            }
        }
    };
}

keys! {
    corpus: PathBuf,
    backend: BackendMode,
    script: PathBuf,
    endpoint: String,
    model: String,
    adapter: LiveAdapter,
    api_key_env: String,
    temperature: f64,
    timeout_secs: u64,
    max_retries: u32,
    critic_rounds: u32,
    max_turns: usize,
    max_regenerations: u32,
    parallelism: usize,
    seed: u64,
    bind: String,
    admin_token_env: String,
    cross_vignette: bool,
    suite: PathBuf,
    records: PathBuf,
    reference: String,
    vignette: String,
    beta: String,
    participants: usize,
    out: PathBuf,
}

/// Keys that apply to `command`: its table over the top level.
pub fn parse_config(text: &str, command: &str) -> anyhow::Result<Keys> {
    let mut table: toml::Table = toml::from_str(text)?;
    let mut section = None;
    for name in COMMANDS {
        match table.remove(name) {
            Some(toml::Value::Table(t)) if name == command => section = Some(t),
            Some(toml::Value::Table(t)) => {
                Keys::deserialize(toml::Value::Table(t)).with_context(|| format!("in [{name}]"))?;
            }
            Some(_) => bail!("`{name}` must be a table"),
            None => {}
        }
    }
    let base = Keys::deserialize(toml::Value::Table(table))?;
    let section = match section {
        Some(t) => Keys::deserialize(toml::Value::Table(t)).with_context(|| format!("in [{command}]"))?,
        None => Keys::default(),
    };
    Ok(section.or(base))
}

pub fn load_config(path: &Path, command: &str) -> anyhow::Result<Keys> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    parse_config(&text, command).with_context(|| format!("invalid config {}", path.display()))
}

/// Parses a flag value the way the config file spells it.
pub fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    T::deserialize(serde::de::value::StrDeserializer::<serde::de::value::Error>::new(s)).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn section_overrides_top_level() {
        let text = "out = \"a\"\nseed = 3\n[analyze]\nout = \"b\"\n[serve]\nbind = \"0.0.0.0:1\"\n";
        let k = parse_config(text, "analyze").unwrap();
        assert_eq!(k.out, Some(PathBuf::from("b")));
        assert_eq!(k.seed, Some(3));
        assert_eq!(k.bind, None);
        assert_eq!(parse_config(text, "generate").unwrap().out, Some(PathBuf::from("a")));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(parse_config("critic_rounds = 2\n", "generate").is_err());
        assert!(parse_config("[serve]\nbogus = 1\n", "generate").is_err());
        assert_eq!(parse_config("critic-rounds = 2\n", "generate").unwrap().critic_rounds, Some(2));
    }

    #[test]
    fn enums_match_file_spelling() {
        assert_eq!(parse_enum::<BackendMode>("live"), Ok(BackendMode::Live));
        assert!(parse_enum::<BackendMode>("remote").is_err());
        let k = parse_config("backend = \"scripted\"\nadapter = \"anthropic\"\n", "generate").unwrap();
        assert_eq!(k.backend, Some(BackendMode::Scripted));
        assert_eq!(k.adapter, Some(LiveAdapter::Anthropic));
    }
}
