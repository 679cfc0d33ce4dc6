//! Plain-text template files with `{slot}` placeholders.
//!
//! A file is a sequence of `[section]` headers, each followed by one or more
//! variants separated by lines holding only `---`. Lines starting with `#`
//! before the first section are comments. `{{` and `}}` produce literal
//! braces. When rendering, a variant line that references a slot whose value
//! is empty is dropped, which lets optional facts disappear cleanly.

use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{file}:{line}: {message}")]
pub struct TemplateError {
    pub file: String,
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Line {
    segments: Vec<Segment>,
}

impl Line {
    fn parse(text: &str) -> Result<Line, String> {
        let mut segments = Vec::new();
        let mut buf = String::new();
        let mut chars = text.chars().peekable();
        while let Some(c) = chars.next() {
            match c {
                '{' if chars.peek() == Some(&'{') => {
                    chars.next();
                    buf.push('{');
                }
                '}' if chars.peek() == Some(&'}') => {
                    chars.next();
                    buf.push('}');
                }
                '{' => {
                    let mut name = String::new();
                    loop {
                        match chars.next() {
                            Some('}') => break,
                            Some(c) if c.is_ascii_alphanumeric() || c == '_' => name.push(c),
                            Some(c) => return Err(format!("invalid character {c:?} in slot name")),
                            None => return Err("unclosed slot".to_string()),
                        }
                    }
                    if name.is_empty() {
                        return Err("empty slot name".to_string());
                    }
                    if !buf.is_empty() {
                        segments.push(Segment::Text(std::mem::take(&mut buf)));
                    }
                    segments.push(Segment::Slot(name));
                }
                '}' => return Err("unmatched '}'".to_string()),
                c => buf.push(c),
            }
        }
        if !buf.is_empty() {
            segments.push(Segment::Text(buf));
        }
        Ok(Line { segments })
    }

    fn slots(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Slot(n) => Some(n.as_str()),
            Segment::Text(_) => None,
        })
    }
}

/// One variant: a block of lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    lines: Vec<Line>,
}

/// Slot values for rendering. Missing and empty slots are treated alike.
pub trait Slots {
    fn get(&self, slot: &str) -> Option<&str>;
}

impl Slots for BTreeMap<&str, String> {
    fn get(&self, slot: &str) -> Option<&str> {
        BTreeMap::get(self, slot).map(String::as_str)
    }
}

impl<const N: usize> Slots for [(&str, &str); N] {
    fn get(&self, slot: &str) -> Option<&str> {
        self.iter().find(|(k, _)| *k == slot).map(|(_, v)| *v)
    }
}

impl Template {
    pub fn parse(text: &str) -> Result<Template, String> {
        let lines = text.lines().map(Line::parse).collect::<Result<_, _>>()?;
        Ok(Template { lines })
    }

    pub fn slots(&self) -> impl Iterator<Item = &str> {
        self.lines.iter().flat_map(Line::slots)
    }

    pub fn render(&self, slots: &impl Slots) -> String {
        let mut out = String::new();
        for line in &self.lines {
            let present = line.slots().all(|s| slots.get(s).is_some_and(|v| !v.trim().is_empty()));
            if !present {
                continue;
            }
            if !out.is_empty() {
                out.push('\n');
            }
            for seg in &line.segments {
                match seg {
                    Segment::Text(t) => out.push_str(t),
                    Segment::Slot(s) => out.push_str(slots.get(s).unwrap_or_default().trim()),
                }
            }
        }
        out
    }
}

/// Parsed template file: section name to variants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateFile {
    pub name: String,
    sections: BTreeMap<String, Vec<Template>>,
}

impl TemplateFile {
    pub fn parse(name: &str, text: &str) -> Result<TemplateFile, TemplateError> {
        let err = |line: usize, message: String| TemplateError {
            file: name.to_string(),
            line,
            message,
        };
        let mut sections: BTreeMap<String, Vec<Template>> = BTreeMap::new();
        let mut current: Option<String> = None;
        let mut block: Vec<(usize, &str)> = Vec::new();

        let flush = |section: &Option<String>,
                     block: &mut Vec<(usize, &str)>,
                     sections: &mut BTreeMap<String, Vec<Template>>|
         -> Result<(), TemplateError> {
            while block.last().is_some_and(|(_, l)| l.trim().is_empty()) {
                block.pop();
            }
            let start = block.iter().position(|(_, l)| !l.trim().is_empty());
            let Some(start) = start else {
                block.clear();
                return Ok(());
            };
            let first_line = block[start].0;
            let text: Vec<&str> = block[start..].iter().map(|(_, l)| *l).collect();
            let t = Template::parse(&text.join("\n")).map_err(|m| err(first_line, m))?;
            block.clear();
            if let Some(s) = section {
                sections.entry(s.clone()).or_default().push(t);
            }
            Ok(())
        };

        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let trimmed = raw.trim();
            if current.is_none() && (trimmed.is_empty() || trimmed.starts_with('#')) {
                continue;
            }
            if trimmed.starts_with('[') && trimmed.ends_with(']') && trimmed.len() > 2 {
                flush(&current, &mut block, &mut sections)?;
                let name = trimmed[1..trimmed.len() - 1].trim().to_string();
                if sections.contains_key(&name) {
                    return Err(err(lineno, format!("duplicate section [{name}]")));
                }
                sections.insert(name.clone(), Vec::new());
                current = Some(name);
                continue;
            }
            if current.is_none() {
                return Err(err(lineno, "text before the first section".to_string()));
            }
            if trimmed == "---" {
                flush(&current, &mut block, &mut sections)?;
                continue;
            }
            block.push((lineno, raw));
        }
        flush(&current, &mut block, &mut sections)?;
        if let Some((s, _)) = sections.iter().find(|(_, v)| v.is_empty()) {
            return Err(err(0, format!("section [{s}] has no variants")));
        }
        Ok(TemplateFile {
            name: name.to_string(),
            sections,
        })
    }

    pub fn section(&self, name: &str) -> Option<&[Template]> {
        self.sections.get(name).map(Vec::as_slice)
    }

    pub fn sections(&self) -> impl Iterator<Item = &str> {
        self.sections.keys().map(String::as_str)
    }

    /// Checks that every required section exists, no unknown section is
    /// present, and every slot is in `allowed`.
    pub fn check(&self, required: &[&str], optional: &[&str], allowed: &[&str]) -> Result<(), TemplateError> {
        let err = |message: String| TemplateError {
            file: self.name.clone(),
            line: 0,
            message,
        };
        for r in required {
            if !self.sections.contains_key(*r) {
                return Err(err(format!("missing section [{r}]")));
            }
        }
        for (name, variants) in &self.sections {
            if !required.contains(&name.as_str()) && !optional.contains(&name.as_str()) {
                return Err(err(format!("unknown section [{name}]")));
            }
            for v in variants {
                if let Some(s) = v.slots().find(|s| !allowed.contains(s)) {
                    return Err(err(format!("unknown slot {{{s}}} in [{name}]")));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for TemplateFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)
    }
}

/// SplitMix64 finalizer, used to derive per-example choices from a seed.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
