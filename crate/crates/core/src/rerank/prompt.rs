//! RankGPT-style listwise prompt rendering and response parsing.
//!
//! A template file has three sections, each introduced by a header line:
//! `[system]`, `[passage]` (rendered once per passage) and `[instruction]`.
//! Placeholders: `{num}`, `{query}`, `{example}`, `{index}`, `{text}`.

use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;

use crate::error::{Error, Result};

pub const DEFAULT_TEMPLATE: &str = "rankgpt_v1";

const RANKGPT_V1: &str = include_str!("../../assets/rankgpt_v1.txt");

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: String,
    system: String,
    passage: String,
    instruction: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
}

impl RenderedPrompt {
    /// Both messages in one text block, as stored in golden files.
    pub fn transcript(&self) -> String {
        format!("[system]\n{}\n[user]\n{}\n", self.system, self.user)
    }
}

impl PromptTemplate {
    pub fn builtin(id: &str) -> Result<Self> {
        match id {
            "rankgpt_v1" => Self::parse(id, RANKGPT_V1),
            other => Err(Error::invalid(format!("unknown prompt template {other:?}"))),
        }
    }

    /// A builtin id, or otherwise a path to a template file.
    pub fn resolve(id_or_path: &str) -> Result<Self> {
        if let Ok(t) = Self::builtin(id_or_path) {
            return Ok(t);
        }
        let path = Path::new(id_or_path);
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(id_or_path, &text)
    }

    pub fn parse(id: &str, text: &str) -> Result<Self> {
        let mut sections: [Option<Vec<&str>>; 3] = [None, None, None];
        let mut current: Option<usize> = None;
        for line in text.lines() {
            let slot = match line.trim_end() {
                "[system]" => Some(0),
                "[passage]" => Some(1),
                "[instruction]" => Some(2),
                _ => None,
            };
            if let Some(s) = slot {
                if sections[s].is_some() {
                    return Err(Error::invalid(format!("template {id}: section repeated")));
                }
                sections[s] = Some(Vec::new());
                current = Some(s);
            } else if let Some(s) = current {
                sections[s].as_mut().unwrap().push(line);
            } else if !line.trim().is_empty() {
                return Err(Error::invalid(format!("template {id}: text before first section")));
            }
        }
        let [system, passage, instruction] = sections.map(|s| s.map(|lines| lines.join("\n")));
        let missing = |name: &str| Error::invalid(format!("template {id}: missing [{name}] section"));
        Ok(Self {
            id: id.to_string(),
            system: system.ok_or_else(|| missing("system"))?,
            passage: passage.ok_or_else(|| missing("passage"))?,
            instruction: instruction.ok_or_else(|| missing("instruction"))?,
        })
    }

    pub fn render(&self, query: &str, passages: &[&str]) -> RenderedPrompt {
        let num = passages.len().to_string();
        let example = example_order(passages.len());
        let base = [("num", num.as_str()), ("query", query), ("example", example.as_str())];
        let lines: Vec<String> = passages
            .iter()
            .enumerate()
            .map(|(i, text)| {
                let index = (i + 1).to_string();
                let mut vars = base.to_vec();
                vars.extend([("index", index.as_str()), ("text", *text)]);
                substitute(&self.passage, &vars)
            })
            .collect();
        RenderedPrompt {
            system: substitute(&self.system, &base),
            user: format!("{}\n{}", lines.join("\n"), substitute(&self.instruction, &base)),
        }
    }
}

fn example_order(n: usize) -> String {
    match n {
        0 | 1 => "[1]".to_string(),
        2 => "[1] > [2]".to_string(),
        n => format!("[1] > [2] ... > [{n}]"),
    }
}

/// Single left-to-right pass, so substituted values are never rescanned.
fn substitute(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let hit = after.find('}').and_then(|close| {
            let name = &after[..close];
            vars.iter().find(|(k, _)| *k == name).map(|(_, v)| (close, *v))
        });
        match hit {
            Some((close, value)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Read a ranking such as `[3] > [1] > [2]` over `n` passages into 0-based positions.
///
/// The first mention of an index wins, out-of-range indices are ignored and
/// unmentioned passages follow in their original order. Returns `None` when the
/// text contains no usable index at all.
pub fn parse_ranking(text: &str, n: usize) -> Option<Vec<usize>> {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    let re = PATTERN.get_or_init(|| Regex::new(r"\[(\d+)\]").unwrap());
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for cap in re.captures_iter(text) {
        let Ok(i) = cap[1].parse::<usize>() else { continue };
        if i == 0 || i > n || seen[i - 1] {
            continue;
        }
        seen[i - 1] = true;
        order.push(i - 1);
    }
    if order.is_empty() {
        return None;
    }
    order.extend((0..n).filter(|&i| !seen[i]));
    Some(order)
}
