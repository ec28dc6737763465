//! The 147 CSS3 extended colour keywords and nearest-name lookup.

use std::sync::OnceLock;

use crate::hashing::sha256_hex;

use super::StyleError;

const CSS3_TABLE: &str = include_str!("../../assets/colors/css3-v1.csv");
const CSS3_TABLE_SHA256: &str = "2d2dca114c06a13486c2e18efaf9abcea42ac0ee3f5907669ae0e34566d5723e";
pub const CSS3_TABLE_VERSION: &str = "css3-v1";
pub const CSS3_COLOR_COUNT: usize = 147;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamedColor {
    pub name: String,
    pub rgb: [u8; 3],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorTable {
    entries: Vec<NamedColor>,
}

impl ColorTable {
    /// The bundled table, checksum-verified on first use.
    pub fn css3() -> &'static ColorTable {
        static TABLE: OnceLock<ColorTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            Self::parse_verified(CSS3_TABLE, CSS3_TABLE_SHA256)
                .expect("bundled colour table is valid")
        })
    }

    /// Parse a `name,hex` CSV (with header) after checking its SHA-256.
    pub fn parse_verified(text: &str, expected_sha256: &str) -> Result<Self, StyleError> {
        let actual = sha256_hex(text.as_bytes());
        if actual != expected_sha256 {
            return Err(StyleError::ColorTable(format!(
                "checksum mismatch: expected {expected_sha256}, got {actual}"
            )));
        }
        let table = Self::parse(text)?;
        if table.entries.len() != CSS3_COLOR_COUNT {
            return Err(StyleError::ColorTable(format!(
                "expected {CSS3_COLOR_COUNT} entries, found {}",
                table.entries.len()
            )));
        }
        Ok(table)
    }

    pub fn parse(text: &str) -> Result<Self, StyleError> {
        let bad = |line: usize, msg: &str| StyleError::ColorTable(format!("line {line}: {msg}"));
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "name,hex")) => {}
            _ => return Err(bad(1, "expected header \"name,hex\"")),
        }
        let mut entries = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let (name, hex) = line.split_once(',').ok_or_else(|| bad(i + 1, "missing comma"))?;
            let hex = hex.trim().strip_prefix('#').ok_or_else(|| bad(i + 1, "hex needs '#'"))?;
            if hex.len() != 6 {
                return Err(bad(i + 1, "hex must have 6 digits"));
            }
            let channel = |s: &str| u8::from_str_radix(s, 16).map_err(|_| bad(i + 1, "bad hex digit"));
            let rgb = [channel(&hex[0..2])?, channel(&hex[2..4])?, channel(&hex[4..6])?];
            let name = name.trim();
            if name.is_empty() || name.chars().any(|c| !c.is_ascii_lowercase()) {
                return Err(bad(i + 1, "names must be lowercase ASCII letters"));
            }
            entries.push(NamedColor {
                name: name.to_owned(),
                rgb,
            });
        }
        let mut names: Vec<&str> = entries.iter().map(|e| e.name.as_str()).collect();
        names.sort_unstable();
        if let Some(dup) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(StyleError::ColorTable(format!("duplicate name {:?}", dup[0])));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[NamedColor] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn rgb_of(&self, name: &str) -> Option<[u8; 3]> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.rgb)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.rgb_of(name).is_some()
    }

    /// Entry minimizing squared RGB distance; among equidistant entries the
    /// lexicographically smallest name wins (so `gray` over `grey`).
    pub fn nearest(&self, rgb: [u8; 3]) -> &str {
        self.entries
            .iter()
            .map(|e| (squared_distance(rgb, e.rgb), e.name.as_str()))
            .min()
            .map(|(_, name)| name)
            .expect("colour table is non-empty")
    }
}

pub fn squared_distance(a: [u8; 3], b: [u8; 3]) -> u32 {
    a.iter()
        .zip(b)
        .map(|(&x, y)| {
            let d = x as i32 - y as i32;
            (d * d) as u32
        })
        .sum()
}

pub fn nearest_color_name(rgb: [u8; 3], table: &ColorTable) -> &str {
    table.nearest(rgb)
}
