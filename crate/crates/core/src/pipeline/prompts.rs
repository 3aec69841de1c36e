use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::providers::TASK_MARKER;

const EXTRACT: &str = include_str!("../../prompts/extract.txt");
const INSIGHT: &str = include_str!("../../prompts/insight.txt");
const TOOL: &str = include_str!("../../prompts/tool.txt");

/// Prompt templates for the three chat tasks. Placeholders look like
/// `{{name}}` and are filled in a single pass, so substituted values are
/// never re-expanded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompts {
    pub extract: String,
    pub insight: String,
    pub tool: String,
}

impl Default for Prompts {
    fn default() -> Self {
        Prompts {
            extract: EXTRACT.to_string(),
            insight: INSIGHT.to_string(),
            tool: TOOL.to_string(),
        }
    }
}

impl Prompts {
    /// Reads `extract.txt`, `insight.txt` and `tool.txt` from `dir`.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let read = |name: &str, task: &str| -> Result<String> {
            let path = dir.join(name);
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let marker = format!("{TASK_MARKER}{task}");
            if !text.lines().any(|l| l.trim() == marker) {
                return Err(Error::Config(format!(
                    "{} lacks the {marker} line",
                    path.display()
                )));
            }
            Ok(text)
        };
        Ok(Prompts {
            extract: read("extract.txt", "extract")?,
            insight: read("insight.txt", "insight")?,
            tool: read("tool.txt", "tool")?,
        })
    }
}

pub(crate) fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        match after.find("}}") {
            Some(close) => {
                let name = after[..close].trim();
                match vars.iter().find(|(k, _)| *k == name) {
                    Some((_, value)) => out.push_str(value),
                    None => out.push_str(&rest[open..open + 2 + close + 2]),
                }
                rest = &after[close + 2..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_is_single_pass() {
        let out = render(
            "a {{x}} b {{ y }} {{unknown}} {{",
            &[("x", "{{y}}"), ("y", "2")],
        );
        assert_eq!(out, "a {{y}} b 2 {{unknown}} {{");
    }

    #[test]
    fn bundled_prompts_carry_markers() {
        let p = Prompts::default();
        assert!(p.extract.starts_with("#TASK:extract\n#FIXTURE:{{fixture}}"));
        assert!(p.insight.starts_with("#TASK:insight\n"));
        assert!(p.tool.starts_with("#TASK:tool\n"));
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("prompts");
        assert_eq!(Prompts::from_dir(dir).unwrap(), p);
    }

    #[test]
    fn from_dir_requires_marker() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["extract.txt", "insight.txt", "tool.txt"] {
            fs::write(dir.path().join(name), "no marker").unwrap();
        }
        assert!(matches!(
            Prompts::from_dir(dir.path()),
            Err(Error::Config(_))
        ));
    }
}
