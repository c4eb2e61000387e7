use std::path::Path;

use crate::error::{Error, Result};

pub const TITLE_PLACEHOLDER: &str = "{TITLE}";

const DEFAULT_TEMPLATE: &str = include_str!("../../resources/default_template.txt");

const SECTIONS: [&str; 4] = ["[TASK]", "[OPT]", "[QUE]", "[RESP]"];

/// Four-part detection instruction: task, category options, question, response format.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstructionTemplate {
    pub task: String,
    pub options: String,
    pub question: String,
    pub response: String,
}

impl Default for InstructionTemplate {
    fn default() -> Self {
        InstructionTemplate::parse(DEFAULT_TEMPLATE).expect("bundled template is valid")
    }
}

impl InstructionTemplate {
    /// Parses the sectioned template format: each of `[TASK] [OPT] [QUE] [RESP]`
    /// on its own line, followed by the section body.
    pub fn parse(text: &str) -> Result<Self> {
        let mut bodies: [Option<Vec<&str>>; 4] = Default::default();
        let mut current: Option<usize> = None;
        for (lineno, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if let Some(i) = SECTIONS.iter().position(|s| *s == trimmed) {
                if bodies[i].is_some() {
                    return Err(Error::Template(format!("duplicate section {} on line {}", SECTIONS[i], lineno + 1)));
                }
                bodies[i] = Some(Vec::new());
                current = Some(i);
                continue;
            }
            match current {
                Some(i) => bodies[i].as_mut().expect("open section").push(line),
                None if trimmed.is_empty() => {}
                None => {
                    return Err(Error::Template(format!("text before first section on line {}", lineno + 1)));
                }
            }
        }
        let mut out: Vec<String> = Vec::with_capacity(4);
        for (i, body) in bodies.into_iter().enumerate() {
            let body = body.ok_or_else(|| Error::Template(format!("missing section {}", SECTIONS[i])))?;
            out.push(body.join("\n").trim().to_string());
        }
        let t = InstructionTemplate {
            response: out.pop().unwrap(),
            question: out.pop().unwrap(),
            options: out.pop().unwrap(),
            task: out.pop().unwrap(),
        };
        if !t.question.contains(TITLE_PLACEHOLDER) {
            return Err(Error::Template(format!("question section lacks {TITLE_PLACEHOLDER}")));
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_file_string(&self) -> String {
        format!(
            "[TASK]\n{}\n[OPT]\n{}\n[QUE]\n{}\n[RESP]\n{}\n",
            self.task, self.options, self.question, self.response
        )
    }

    /// Renders `task \n options \n question(title) \n response`.
    pub fn render(&self, title: &str) -> Result<String> {
        let title = title.trim();
        if title.is_empty() {
            return Err(Error::Data("empty title".into()));
        }
        if !self.question.contains(TITLE_PLACEHOLDER) {
            return Err(Error::Template(format!("question section lacks {TITLE_PLACEHOLDER}")));
        }
        let question = self.question.replace(TITLE_PLACEHOLDER, title);
        Ok([self.task.as_str(), &self.options, &question, &self.response].join("\n"))
    }
}

/// Free-function form of [`InstructionTemplate::render`].
pub fn render_prompt(template: &InstructionTemplate, title: &str) -> Result<String> {
    template.render(title)
}
