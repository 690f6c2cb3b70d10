use super::ProtocolDocument;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Indented one-line-per-entity outline of a protocol: `entity_type | name | id`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimplifiedTree {
    pub lines: Vec<String>,
}

pub fn render_simplified_tree(doc: &ProtocolDocument) -> SimplifiedTree {
    let lines = doc
        .root
        .preorder()
        .map(|(depth, e)| {
            format!(
                "{}{} | {} | {}",
                "  ".repeat(depth),
                e.entity_type,
                e.name,
                e.id
            )
        })
        .collect();
    SimplifiedTree { lines }
}

impl SimplifiedTree {
    pub fn depth_of(line: &str) -> usize {
        (line.len() - line.trim_start_matches(' ').len()) / 2
    }

    /// Renders the outline within `max_chars`, dropping the deepest levels
    /// first. A trailing marker line counts the elided entities.
    pub fn render_within(&self, max_chars: usize) -> String {
        let full = self.to_string();
        if full.len() <= max_chars {
            return full;
        }
        let mut max_depth = self
            .lines
            .iter()
            .map(|l| Self::depth_of(l))
            .max()
            .unwrap_or(0);
        loop {
            let kept: Vec<&String> = self
                .lines
                .iter()
                .filter(|l| Self::depth_of(l) <= max_depth)
                .collect();
            let elided = self.lines.len() - kept.len();
            let mut text: String = kept.iter().map(|l| format!("{l}\n")).collect();
            if elided > 0 {
                text.push_str(&format!("... {elided} deeper entities elided\n"));
            }
            if text.len() <= max_chars || max_depth == 0 {
                return text;
            }
            max_depth -= 1;
        }
    }
}

impl fmt::Display for SimplifiedTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for line in &self.lines {
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}
