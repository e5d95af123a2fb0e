//! Minimal Markdown structure: frontmatter fence, level-2 sections, bullets,
//! code fences and inline code spans.

use serde::{Deserialize, Serialize};

use super::DocumentError;

/// The YAML block between `---` fences and the body after it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrontmatterSplit<'a> {
    pub yaml: &'a str,
    pub body: &'a str,
    /// 1-based line number of the first body line.
    pub body_line: usize,
}

/// Splits off a leading `---`-fenced block. `Ok(None)` means the document
/// has no opening fence at all; an opening fence without a closing one is
/// malformed.
pub fn split_frontmatter(text: &str) -> Result<Option<FrontmatterSplit<'_>>, DocumentError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut lines = text.split_inclusive('\n');
    let Some(first) = lines.next() else {
        return Ok(None);
    };
    if first.trim_end() != "---" {
        return Ok(None);
    }
    let yaml_start = first.len();
    let mut offset = yaml_start;
    let mut line_no = 1;
    for line in lines {
        line_no += 1;
        if line.trim_end() == "---" {
            return Ok(Some(FrontmatterSplit {
                yaml: &text[yaml_start..offset],
                body: &text[offset + line.len()..],
                body_line: line_no + 1,
            }));
        }
        offset += line.len();
    }
    Err(DocumentError::MalformedFrontmatter(
        "opening `---` fence is never closed".to_string(),
    ))
}

/// A `## heading` and everything up to the next level-2 heading.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSection {
    pub heading: String,
    /// 1-based line of the heading in the original document.
    pub line: usize,
    pub body: String,
}

/// Splits a Markdown body into the text before the first level-2 heading and
/// the level-2 sections. Headings inside code fences are ignored.
pub fn split_sections(body: &str, first_line: usize) -> (String, Vec<RawSection>) {
    let mut preamble = String::new();
    let mut sections: Vec<RawSection> = Vec::new();
    let mut in_fence = false;
    for (idx, line) in body.split_inclusive('\n').enumerate() {
        let trimmed = line.trim_end();
        if is_fence(trimmed) {
            in_fence = !in_fence;
        }
        if !in_fence {
            if let Some(heading) = trimmed.strip_prefix("## ") {
                sections.push(RawSection {
                    heading: heading.trim().to_string(),
                    line: first_line + idx,
                    body: String::new(),
                });
                continue;
            }
        }
        match sections.last_mut() {
            Some(section) => section.body.push_str(line),
            None => preamble.push_str(line),
        }
    }
    (preamble, sections)
}

fn is_fence(line: &str) -> bool {
    let t = line.trim_start();
    t.starts_with("```") || t.starts_with("~~~")
}

/// Top-level list items (`- ` or `* `), with the marker removed. Items inside
/// code fences are skipped.
pub fn bullets(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut in_fence = false;
    for line in text.lines() {
        if is_fence(line) {
            in_fence = !in_fence;
            continue;
        }
        if in_fence {
            continue;
        }
        if let Some(item) = line.strip_prefix("- ").or_else(|| line.strip_prefix("* ")) {
            out.push(item.trim().to_string());
        }
    }
    out
}

/// Contents of every inline code span in `text`.
pub fn code_spans(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find('`') {
        let after = &rest[start + 1..];
        match after.find('`') {
            Some(end) => {
                let span = &after[..end];
                if !span.is_empty() {
                    out.push(span.to_string());
                }
                rest = &after[end + 1..];
            }
            None => break,
        }
    }
    out
}

/// A fenced code block: its info string and content.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FencedBlock {
    pub info: String,
    pub content: String,
    /// 1-based line of the opening fence, relative to the text passed in.
    pub line: usize,
}

pub fn fenced_blocks(text: &str) -> Vec<FencedBlock> {
    let mut out = Vec::new();
    let mut current: Option<FencedBlock> = None;
    for (idx, line) in text.lines().enumerate() {
        if is_fence(line) {
            match current.take() {
                Some(block) => out.push(block),
                None => {
                    current = Some(FencedBlock {
                        info: line.trim_start().trim_start_matches(['`', '~']).trim().to_string(),
                        content: String::new(),
                        line: idx + 1,
                    })
                }
            }
            continue;
        }
        if let Some(block) = current.as_mut() {
            block.content.push_str(line);
            block.content.push('\n');
        }
    }
    out
}

/// Text outside code fences.
pub fn prose(text: &str) -> String {
    let mut out = String::new();
    let mut in_fence = false;
    for line in text.lines() {
        if is_fence(line) {
            in_fence = !in_fence;
            continue;
        }
        if !in_fence {
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frontmatter_split() {
        let doc = "---\nname: x\n---\n# Title\n";
        let split = split_frontmatter(doc).unwrap().unwrap();
        assert_eq!(split.yaml, "name: x\n");
        assert_eq!(split.body, "# Title\n");
        assert_eq!(split.body_line, 4);
        assert!(split_frontmatter("# Title\n").unwrap().is_none());
        assert!(split_frontmatter("---\nname: x\n").is_err());
    }

    #[test]
    fn headings_in_fences_are_not_sections() {
        let body = "intro\n## A\none\n```\n## not\n```\n## B\ntwo\n";
        let (pre, sections) = split_sections(body, 1);
        assert_eq!(pre, "intro\n");
        assert_eq!(sections.len(), 2);
        assert_eq!(sections[0].body, "one\n```\n## not\n```\n");
        assert_eq!(sections[1].line, 7);
    }

    #[test]
    fn spans_and_bullets() {
        assert_eq!(code_spans("read `a.md` and `b/c.json`"), vec!["a.md", "b/c.json"]);
        assert_eq!(bullets("- a\n  - nested\n* b\ntext\n"), vec!["a", "b"]);
    }
}
