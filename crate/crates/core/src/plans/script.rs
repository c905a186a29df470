//! Textual screenplay format produced by the script writer.
//!
//! ```text
//! SCENE 1
//!
//! Location Description: Inside of a spaceship.
//! Direction Notes: A male vocal style for THE ALIEN.
//! Plot Summary: A young alien crashlands on Earth.
//! Character: THE ALIEN; COMPUTER SYSTEM
//!
//! Dialogue Script:
//! THE ALIEN
//! [In the cockpit of the spaceship]
//! (excited)
//! "Whoa!"
//!
//! END SCENE 1
//! ```
//!
//! Inside a dialogue block, `[...]` lines are actions and `(...)` lines are
//! tone notes; both attach to the next quoted line. Annotations with no line
//! after them form a line of their own with no text. Blocks are separated by
//! blank lines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LABELS: [&str; 5] = [
    "Location Description",
    "Direction Notes",
    "Plot Summary",
    "Character",
    "Dialogue Script",
];

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DialogueLine {
    pub tone: Option<String>,
    pub action: Option<String>,
    /// Spoken text without the surrounding quotes.
    pub text: Option<String>,
    /// The closing quote was missing in the source.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unterminated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueBlock {
    pub character: String,
    pub lines: Vec<DialogueLine>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptScene {
    pub scene_number: u32,
    pub location_description: String,
    pub direction_notes: String,
    pub plot_summary: String,
    pub characters: Vec<String>,
    pub dialogue: Vec<DialogueBlock>,
}

impl ScriptScene {
    /// Flattened `(character, line)` pairs in script order.
    pub fn dialogue_lines(&self) -> impl Iterator<Item = (&str, &DialogueLine)> {
        self.dialogue
            .iter()
            .flat_map(|b| b.lines.iter().map(move |l| (b.character.as_str(), l)))
    }

    /// Spoken text of every line, in order.
    pub fn spoken_text(&self) -> Vec<(&str, &str)> {
        self.dialogue_lines()
            .filter_map(|(c, l)| l.text.as_deref().map(|t| (c, t.trim())))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScriptDoc {
    pub scenes: Vec<ScriptScene>,
}

fn err(scene: Option<u32>, line_no: usize, message: impl Into<String>) -> Error {
    let message = message.into();
    Error::Parse {
        line: line_no,
        column: 1,
        message: match scene {
            Some(n) => format!("scene {n}: {message}"),
            None => message,
        },
    }
}

fn parse_scene_marker(line: &str, prefix: &str) -> Option<u32> {
    line.strip_prefix(prefix)?.trim().parse().ok()
}

struct Lines<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn next_nonblank(&mut self) -> Option<(usize, &'a str)> {
        while let Some(&(n, l)) = self.lines.get(self.pos) {
            self.pos += 1;
            if !l.trim().is_empty() {
                return Some((n, l));
            }
        }
        None
    }

    fn last_line_no(&self) -> usize {
        self.lines.last().map_or(1, |l| l.0)
    }
}

fn bracketed(line: &str, open: char, close: char) -> Option<&str> {
    line.strip_prefix(open)?.strip_suffix(close)
}

pub fn parse_script(text: &str) -> Result<ScriptDoc> {
    let mut lines = Lines {
        lines: text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end())).collect(),
        pos: 0,
    };
    let mut doc = ScriptDoc::default();
    while let Some((n, line)) = lines.next_nonblank() {
        let number = parse_scene_marker(line.trim(), "SCENE ")
            .ok_or_else(|| err(None, n, format!("expected `SCENE <n>`, found {line:?}")))?;
        doc.scenes.push(parse_scene(number, &mut lines)?);
    }
    if doc.scenes.is_empty() {
        return Err(err(None, 1, "script contains no scenes"));
    }
    Ok(doc)
}

fn parse_scene(number: u32, lines: &mut Lines<'_>) -> Result<ScriptScene> {
    let scene = Some(number);
    let mut values: Vec<String> = Vec::with_capacity(4);
    for (k, label) in LABELS.iter().enumerate() {
        let (n, line) = lines.next_nonblank().ok_or_else(|| {
            err(scene, lines.last_line_no(), format!("unterminated scene, missing element {} ({label})", k + 1))
        })?;
        let value = line
            .trim()
            .strip_prefix(label)
            .and_then(|rest| rest.strip_prefix(':'))
            .ok_or_else(|| {
                err(scene, n, format!("missing element {} ({label}); found {line:?}", k + 1))
            })?;
        if k < 4 {
            values.push(value.trim().to_string());
        } else if !value.trim().is_empty() {
            return Err(err(scene, n, "dialogue must start on the line after `Dialogue Script:`"));
        }
    }
    let characters: Vec<String> = values[3]
        .split(';')
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .map(String::from)
        .collect();

    let end_marker = format!("END SCENE {number}");
    let mut dialogue: Vec<DialogueBlock> = Vec::new();
    let mut block: Option<(DialogueBlock, DialogueLine)> = None;

    fn flush_pending(block: &mut Option<(DialogueBlock, DialogueLine)>) {
        if let Some((b, pending)) = block.as_mut() {
            if pending.tone.is_some() || pending.action.is_some() {
                b.lines.push(std::mem::take(pending));
            }
        }
    }
    fn close(block: &mut Option<(DialogueBlock, DialogueLine)>, dialogue: &mut Vec<DialogueBlock>) {
        flush_pending(block);
        if let Some((b, _)) = block.take() {
            dialogue.push(b);
        }
    }

    loop {
        let Some(&(n, raw)) = lines.lines.get(lines.pos) else {
            return Err(err(scene, lines.last_line_no(), format!("missing `{end_marker}`")));
        };
        lines.pos += 1;
        let line = raw.trim();
        if line.is_empty() {
            close(&mut block, &mut dialogue);
            continue;
        }
        if line.starts_with("END SCENE") {
            if line != end_marker {
                return Err(err(scene, n, format!("unbalanced scene markers: found {line:?}")));
            }
            close(&mut block, &mut dialogue);
            break;
        }
        if line.starts_with("SCENE ") {
            return Err(err(scene, n, format!("missing `{end_marker}` before {line:?}")));
        }
        if let Some(action) = bracketed(line, '[', ']') {
            let (b, pending) = block
                .as_mut()
                .ok_or_else(|| err(scene, n, "action annotation outside a character block"))?;
            if pending.action.is_some() {
                b.lines.push(std::mem::take(pending));
            }
            pending.action = Some(action.to_string());
        } else if let Some(tone) = bracketed(line, '(', ')') {
            let (b, pending) = block
                .as_mut()
                .ok_or_else(|| err(scene, n, "tone annotation outside a character block"))?;
            if pending.tone.is_some() {
                b.lines.push(std::mem::take(pending));
            }
            pending.tone = Some(tone.to_string());
        } else if let Some(rest) = line.strip_prefix('"') {
            let (b, pending) = block
                .as_mut()
                .ok_or_else(|| err(scene, n, "dialogue line outside a character block"))?;
            let (text, unterminated) = match rest.strip_suffix('"') {
                Some(t) => (t, false),
                None => (rest, true),
            };
            pending.text = Some(text.to_string());
            pending.unterminated = unterminated;
            b.lines.push(std::mem::take(pending));
        } else if line.starts_with('[') || line.starts_with('(') {
            return Err(err(scene, n, format!("unbalanced annotation {line:?}")));
        } else {
            close(&mut block, &mut dialogue);
            if !characters.iter().any(|c| c == line) {
                return Err(err(scene, n, format!("character {line:?} is not in the character list")));
            }
            block = Some((
                DialogueBlock {
                    character: line.to_string(),
                    lines: Vec::new(),
                },
                DialogueLine::default(),
            ));
        }
    }

    let [location_description, direction_notes, plot_summary, _]: [String; 4] =
        values.try_into().expect("four labeled elements");
    Ok(ScriptScene {
        scene_number: number,
        location_description,
        direction_notes,
        plot_summary,
        characters,
        dialogue,
    })
}

fn labeled(out: &mut String, label: &str, value: &str) {
    out.push_str(label);
    out.push(':');
    if !value.is_empty() {
        out.push(' ');
        out.push_str(value);
    }
    out.push('\n');
}

pub fn serialize_script(doc: &ScriptDoc) -> String {
    let mut out = String::new();
    for (i, scene) in doc.scenes.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("SCENE {}\n\n", scene.scene_number));
        labeled(&mut out, LABELS[0], &scene.location_description);
        labeled(&mut out, LABELS[1], &scene.direction_notes);
        labeled(&mut out, LABELS[2], &scene.plot_summary);
        labeled(&mut out, LABELS[3], &scene.characters.join("; "));
        out.push('\n');
        out.push_str("Dialogue Script:\n");
        for block in &scene.dialogue {
            out.push_str(&block.character);
            out.push('\n');
            for line in &block.lines {
                if let Some(a) = &line.action {
                    out.push_str(&format!("[{a}]\n"));
                }
                if let Some(t) = &line.tone {
                    out.push_str(&format!("({t})\n"));
                }
                if let Some(text) = &line.text {
                    out.push('"');
                    out.push_str(text);
                    if !line.unterminated {
                        out.push('"');
                    }
                    out.push('\n');
                }
            }
            out.push('\n');
        }
        if scene.dialogue.is_empty() {
            out.push('\n');
        }
        out.push_str(&format!("END SCENE {}\n", scene.scene_number));
    }
    out
}
