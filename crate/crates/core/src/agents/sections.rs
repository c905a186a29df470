//! `## Heading` blocks used to lay out agent requests.

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Sections(Vec<(String, String)>);

impl Sections {
    pub fn push(&mut self, heading: impl Into<String>, body: impl Into<String>) -> &mut Self {
        self.0.push((heading.into(), body.into()));
        self
    }

    pub fn get(&self, heading: &str) -> Option<&str> {
        self.0.iter().find(|(h, _)| h == heading).map(|(_, b)| b.as_str())
    }

    pub fn render(&self) -> String {
        self.0
            .iter()
            .map(|(h, b)| format!("## {h}\n{}\n", b.trim_end()))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

pub fn parse_sections(text: &str) -> Sections {
    let mut out = Sections::default();
    let mut current: Option<(String, Vec<&str>)> = None;
    for line in text.lines() {
        if let Some(h) = line.strip_prefix("## ") {
            if let Some((h, body)) = current.take() {
                out.push(h, body.join("\n").trim().to_string());
            }
            current = Some((h.trim().to_string(), Vec::new()));
        } else if let Some((_, body)) = current.as_mut() {
            body.push(line);
        }
    }
    if let Some((h, body)) = current {
        out.push(h, body.join("\n").trim().to_string());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut s = Sections::default();
        s.push("Scene duration", "5 seconds").push("Script", "SCENE 1\n\nEND SCENE 1\n");
        let parsed = parse_sections(&s.render());
        assert_eq!(parsed.get("Scene duration"), Some("5 seconds"));
        assert_eq!(parsed.get("Script"), Some("SCENE 1\n\nEND SCENE 1"));
        assert_eq!(parsed.get("Missing"), None);
    }
}
