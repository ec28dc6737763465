//! Prompt strategies wrapped around an information chunk.
//!
//! | Strategy  | Pros | Cons |
//! |-----------|------|------|
//! | basic     | fast and straightforward | inconsistent, can be arbitrary |
//! | role_play | detailed, nuanced narration | may invent nonexistent details |
//! | template  | structured, consistent output | can turn formulaic |
//! | rule      | fine-grained control over content | limits expressiveness |
//!
//! `rule` is the default. Instruction texts are data assets, one UTF-8 file
//! per strategy, listed with their SHA-256 in a `SHA256SUMS` file.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunk::InformationChunk;
use crate::hashing::{content_hash, sha256_hex};

/// Header line separating the instruction from the chunk.
pub const CHUNK_HEADER: &str = "INFORMATION CHUNK:";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("unknown prompt strategy {0:?} (expected basic, role-play, template or rule)")]
    UnknownStrategy(String),
    #[error("strategy asset {file}: checksum mismatch (expected {expected}, got {actual})")]
    Checksum {
        file: String,
        expected: String,
        actual: String,
    },
    #[error("strategy asset {file}: {message}")]
    Asset { file: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStrategy {
    Basic,
    RolePlay,
    Template,
    #[default]
    Rule,
}

impl PromptStrategy {
    pub const ALL: [PromptStrategy; 4] = [Self::Basic, Self::RolePlay, Self::Template, Self::Rule];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Basic => "basic",
            Self::RolePlay => "role_play",
            Self::Template => "template",
            Self::Rule => "rule",
        }
    }

    pub fn asset_file(self) -> String {
        format!("{}.txt", self.as_str())
    }
}

impl fmt::Display for PromptStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptStrategy {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "basic" => Ok(Self::Basic),
            "role_play" | "roleplay" => Ok(Self::RolePlay),
            "template" => Ok(Self::Template),
            "rule" => Ok(Self::Rule),
            _ => Err(PromptError::UnknownStrategy(s.to_owned())),
        }
    }
}

const BUNDLED: [(PromptStrategy, &str); 4] = [
    (PromptStrategy::Basic, include_str!("../assets/prompts/basic.txt")),
    (PromptStrategy::RolePlay, include_str!("../assets/prompts/role_play.txt")),
    (PromptStrategy::Template, include_str!("../assets/prompts/template.txt")),
    (PromptStrategy::Rule, include_str!("../assets/prompts/rule.txt")),
];
const BUNDLED_SUMS: &str = include_str!("../assets/prompts/SHA256SUMS");

/// Instruction text per strategy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptLibrary {
    texts: [String; 4],
}

fn index(strategy: PromptStrategy) -> usize {
    PromptStrategy::ALL
        .iter()
        .position(|&s| s == strategy)
        .expect("strategy is in ALL")
}

fn parse_sums(sums: &str) -> Vec<(String, String)> {
    sums.lines()
        .filter_map(|line| {
            let mut parts = line.split_whitespace();
            Some((parts.next()?.to_owned(), parts.next()?.trim_start_matches('*').to_owned()))
        })
        .map(|(hash, file)| (file, hash))
        .collect()
}

fn verify(file: &str, bytes: &str, sums: &[(String, String)]) -> Result<(), PromptError> {
    let expected = sums
        .iter()
        .find(|(f, _)| f == file)
        .map(|(_, h)| h.clone())
        .ok_or_else(|| PromptError::Asset {
            file: file.to_owned(),
            message: "not listed in SHA256SUMS".into(),
        })?;
    let actual = sha256_hex(bytes.as_bytes());
    if actual != expected {
        return Err(PromptError::Checksum {
            file: file.to_owned(),
            expected,
            actual,
        });
    }
    Ok(())
}

fn instruction(raw: &str) -> String {
    raw.trim_end_matches(['\n', '\r']).to_owned()
}

impl PromptLibrary {
    pub fn bundled() -> Self {
        let sums = parse_sums(BUNDLED_SUMS);
        let texts = BUNDLED.map(|(strategy, raw)| {
            verify(&strategy.asset_file(), raw, &sums).expect("bundled prompt assets match SHA256SUMS");
            instruction(raw)
        });
        Self { texts }
    }

    /// Load `basic.txt`, `role_play.txt`, `template.txt`, `rule.txt` from
    /// `dir`, each verified against `dir/SHA256SUMS`.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let read = |file: &str| {
            fs::read_to_string(dir.join(file)).map_err(|e| PromptError::Asset {
                file: dir.join(file).display().to_string(),
                message: e.to_string(),
            })
        };
        let sums = parse_sums(&read("SHA256SUMS")?);
        let mut texts: [String; 4] = Default::default();
        for strategy in PromptStrategy::ALL {
            let file = strategy.asset_file();
            let raw = read(&file)?;
            verify(&file, &raw, &sums)?;
            texts[index(strategy)] = instruction(&raw);
        }
        Ok(Self { texts })
    }

    pub fn instruction(&self, strategy: PromptStrategy) -> &str {
        &self.texts[index(strategy)]
    }
}

impl Default for PromptLibrary {
    fn default() -> Self {
        Self::bundled()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub strategy: PromptStrategy,
    pub text: String,
    pub chunk_hash: u64,
}

impl RenderedPrompt {
    pub fn prompt_hash(&self) -> u64 {
        content_hash(self.text.as_bytes())
    }
}

/// Frame labels standing in for the template's first/middle/last fill-ins:
/// the first two, the middle one, and the last two visual entries.
fn template_frame_groups(chunk: &InformationChunk) -> String {
    let labels: Vec<String> = chunk
        .visual
        .entries()
        .iter()
        .map(|e| e.frame_label.to_string())
        .collect();
    let n = labels.len();
    let first = labels[..n.min(2)].join(", ");
    let middle = labels[n / 2].clone();
    let last = labels[n.saturating_sub(2)..].join(", ");
    format!("Template frames: first few frames = {first}; middle frames = {middle}; last few frames = {last}.")
}

pub fn render_prompt(
    library: &PromptLibrary,
    strategy: PromptStrategy,
    chunk: &InformationChunk,
) -> RenderedPrompt {
    let mut text = String::from(library.instruction(strategy));
    text.push_str("\n\n");
    if strategy == PromptStrategy::Template {
        text.push_str(&template_frame_groups(chunk));
        text.push_str("\n\n");
    }
    text.push_str(CHUNK_HEADER);
    text.push('\n');
    text.push_str(&chunk.rendered);
    RenderedPrompt {
        strategy,
        text,
        chunk_hash: content_hash(chunk.rendered.as_bytes()),
    }
}

/// The chunk text of a prompt built by [`render_prompt`].
pub fn chunk_from_prompt(prompt: &str) -> Option<&str> {
    let marker = format!("\n{CHUNK_HEADER}\n");
    prompt.rfind(&marker).map(|i| &prompt[i + marker.len()..])
}
