//! The information chunk: the bracketed text bundle that carries all four
//! facets into the prompt.
//!
//! Grammar (`chunk-v1`):
//!
//! ```text
//! chunk    := visual " " dialogue " " tone " " style
//! visual   := '[visual: "(' entry { ", " entry } ')"]'
//! entry    := frame-label ": " caption
//! dialogue := '[dialogue: "' text '"]'
//! tone     := '[tone: "' emotion '"]'
//! style    := '[style: "' colour [ ", " colour ] '"]'
//! ```
//!
//! Inside quoted segments `\`, `"` and `]` are backslash-escaped. In
//! captions, a comma that would otherwise read as an entry separator
//! (`, frameNN: `) is escaped as `\,`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{DialogueAnnotation, EmotionLabel, FrameLabel, VisualAnnotation, VisualEntry};
use crate::style::{ColorTable, StyleAnnotation};
use crate::tone::ToneAnnotation;

pub const CHUNK_GRAMMAR: &str = "chunk-v1";
pub const DEFAULT_MAX_VISUAL_ENTRIES: usize = 15;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("chunk grammar error at byte {offset}: {message}")]
pub struct GrammarError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("max_entries must be at least 1")]
pub struct InvalidMaxEntries;

/// The part of each facet that the chunk text carries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkFacets {
    pub visual: VisualAnnotation,
    /// Empty when there is no dialogue.
    pub dialogue: String,
    pub tone: EmotionLabel,
    pub style: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InformationChunk {
    pub visual: VisualAnnotation,
    pub dialogue: DialogueAnnotation,
    pub tone: ToneAnnotation,
    pub style: StyleAnnotation,
    pub rendered: String,
}

impl InformationChunk {
    pub fn facets(&self) -> ChunkFacets {
        ChunkFacets {
            visual: self.visual.clone(),
            dialogue: dialogue_text(&self.dialogue).to_owned(),
            tone: self.tone.tone,
            style: self.style.top_colors.clone(),
        }
    }

    /// Whether `rendered` still matches the facets.
    pub fn is_consistent(&self) -> bool {
        render(&self.facets()) == self.rendered
    }
}

fn dialogue_text(d: &DialogueAnnotation) -> &str {
    if d.present {
        &d.transcript_en
    } else {
        ""
    }
}

pub fn compose_chunk(
    visual: VisualAnnotation,
    dialogue: DialogueAnnotation,
    tone: ToneAnnotation,
    style: StyleAnnotation,
) -> InformationChunk {
    let mut chunk = InformationChunk {
        visual,
        dialogue,
        tone,
        style,
        rendered: String::new(),
    };
    chunk.rendered = render(&chunk.facets());
    chunk
}

/// Render facets in canonical chunk-v1 form.
pub fn render(f: &ChunkFacets) -> String {
    let entries: Vec<String> = f
        .visual
        .entries()
        .iter()
        .map(|e| format!("{}: {}", e.frame_label, escape_caption(&e.caption)))
        .collect();
    let style: Vec<String> = f.style.iter().map(|s| escape_text(s)).collect();
    format!(
        "[visual: \"({})\"] [dialogue: \"{}\"] [tone: \"{}\"] [style: \"{}\"]",
        entries.join(", "),
        escape_text(&f.dialogue),
        f.tone,
        style.join(", ")
    )
}

pub fn escape_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if matches!(c, '\\' | '"' | ']') {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

fn escape_caption(s: &str) -> String {
    let escaped = escape_text(s);
    let mut out = String::with_capacity(escaped.len());
    for (i, c) in escaped.char_indices() {
        if c == ',' && separator_len(escaped.as_bytes(), i).is_some() {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

/// If `bytes[at..]` starts with `, frame<digits>: `, the length of the
/// `, ` part (always 2).
fn separator_len(bytes: &[u8], at: usize) -> Option<usize> {
    let rest = bytes.get(at..)?;
    let after = rest.strip_prefix(b", frame")?;
    let digits = after.iter().take_while(|b| b.is_ascii_digit()).count();
    (digits > 0 && after[digits..].starts_with(b": ")).then_some(2)
}

fn unescape(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut chars = raw.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            if let Some(next) = chars.next() {
                out.push(next);
            }
        } else {
            out.push(c);
        }
    }
    out
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn error(&self, offset: usize, message: impl Into<String>) -> GrammarError {
        GrammarError {
            offset,
            message: message.into(),
        }
    }

    fn expect(&mut self, literal: &str) -> Result<(), GrammarError> {
        if self.text[self.pos..].starts_with(literal) {
            self.pos += literal.len();
            Ok(())
        } else {
            Err(self.error(self.pos, format!("expected {literal:?}")))
        }
    }

    /// Raw (still escaped) text up to the next unescaped `"`, consuming the quote.
    fn quoted(&mut self) -> Result<(usize, &'a str), GrammarError> {
        let start = self.pos;
        let bytes = self.text.as_bytes();
        let mut i = start;
        while i < bytes.len() {
            match bytes[i] {
                b'\\' => {
                    if i + 1 >= bytes.len() {
                        return Err(self.error(i, "dangling escape"));
                    }
                    // Skip the whole escaped character, which may be multi-byte.
                    let next_len = self.text[i + 1..].chars().next().map_or(1, char::len_utf8);
                    i += 1 + next_len;
                }
                b'"' => {
                    self.pos = i + 1;
                    return Ok((start, &self.text[start..i]));
                }
                _ => i += 1,
            }
        }
        Err(self.error(start, "unterminated quoted segment"))
    }
}

fn parse_entries(raw: &str, base: usize) -> Result<Vec<VisualEntry>, GrammarError> {
    let bytes = raw.as_bytes();
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'\\' {
            i += 2;
            continue;
        }
        if let Some(sep) = separator_len(bytes, i) {
            pieces.push((start, &raw[start..i]));
            start = i + sep;
            i = start;
            continue;
        }
        i += 1;
    }
    pieces.push((start, &raw[start..]));

    pieces
        .into_iter()
        .map(|(offset, piece)| {
            let at = base + offset;
            let (label, caption) = piece.split_once(": ").ok_or_else(|| GrammarError {
                offset: at,
                message: "visual entry must look like \"frameNN: caption\"".into(),
            })?;
            let frame_label: FrameLabel = label.parse().map_err(|message| GrammarError {
                offset: at,
                message,
            })?;
            Ok(VisualEntry {
                frame_label,
                caption: unescape(caption),
            })
        })
        .collect()
}

/// Recover the facets from chunk text.
pub fn parse_chunk(text: &str) -> Result<ChunkFacets, GrammarError> {
    let mut cur = Cursor { text, pos: 0 };

    cur.expect("[visual: \"(")?;
    let (visual_start, raw_visual) = cur.quoted()?;
    let inner = raw_visual
        .strip_suffix(')')
        .ok_or_else(|| cur.error(cur.pos - 1, "visual block must close with ')'"))?;
    cur.expect("]")?;
    let entries = parse_entries(inner, visual_start)?;
    let visual =
        VisualAnnotation::new(entries).map_err(|message| cur.error(visual_start, message))?;

    cur.expect(" ")?;
    cur.expect("[dialogue: \"")?;
    let (_, raw_dialogue) = cur.quoted()?;
    cur.expect("]")?;

    cur.expect(" ")?;
    cur.expect("[tone: \"")?;
    let (tone_start, raw_tone) = cur.quoted()?;
    let tone = raw_tone
        .parse::<EmotionLabel>()
        .ok()
        .filter(|l| l.is_emotion())
        .ok_or_else(|| cur.error(tone_start, format!("unknown tone {raw_tone:?}")))?;
    cur.expect("]")?;

    cur.expect(" ")?;
    cur.expect("[style: \"")?;
    let (style_start, raw_style) = cur.quoted()?;
    let style: Vec<String> = raw_style.split(", ").map(unescape).collect();
    let table = ColorTable::css3();
    if style.len() > 2 {
        return Err(cur.error(style_start, "style carries at most two colours"));
    }
    if let Some(bad) = style.iter().find(|name| !table.contains(name)) {
        return Err(cur.error(style_start, format!("unknown colour name {bad:?}")));
    }
    cur.expect("]")?;

    if cur.pos != text.len() {
        return Err(cur.error(cur.pos, "trailing text after style block"));
    }
    Ok(ChunkFacets {
        visual,
        dialogue: unescape(raw_dialogue),
        tone,
        style,
    })
}

/// Collapse consecutive duplicate captions, then subsample evenly (first and
/// last kept) down to `max_entries`, relabelled `frame01..`.
pub fn reduce_visual(
    entries: &[VisualEntry],
    max_entries: usize,
) -> Result<VisualAnnotation, InvalidMaxEntries> {
    if max_entries < 1 {
        return Err(InvalidMaxEntries);
    }
    let mut deduped: Vec<&str> = Vec::with_capacity(entries.len());
    for e in entries {
        if deduped.last() != Some(&e.caption.as_str()) {
            deduped.push(&e.caption);
        }
    }
    let kept: Vec<&str> = if deduped.len() <= max_entries {
        deduped
    } else {
        subsample_indices(deduped.len(), max_entries)
            .into_iter()
            .map(|i| deduped[i])
            .collect()
    };
    Ok(VisualAnnotation::from_captions(kept).expect("reduced captions are non-empty and ordered"))
}

/// `m` evenly spread indices into `0..n` including both ends; requires n > m.
pub fn subsample_indices(n: usize, m: usize) -> Vec<usize> {
    if m == 1 {
        return vec![0];
    }
    (0..m)
        .map(|i| ((i * (n - 1)) as f64 / (m - 1) as f64).round() as usize)
        .collect()
}
