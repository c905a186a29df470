//! Chat backends: scripted playback, a built-in deterministic planner, and an
//! OpenAI-compatible HTTP client.

use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::sections::{parse_sections, Sections};
use super::AgentRole;
use crate::error::{Error, Result};
use crate::http::{post_json, RetryPolicy};
use crate::plans::{
    parse_foley_plan, parse_music_plan, parse_script, parse_voice_plan, to_canonical_json, word_count, FoleyPlan,
    FoleyPlanEntry, Layout, MixPlanEntry, MusicPlan, MusicPlanEntry, Plan, Seconds, Sex, TrackType, VoicePlan,
    VoicePlanEntry,
};

pub const API_KEY_ENV: &str = "REELWAVE_API_KEY";
pub const API_BASE_ENV: &str = "REELWAVE_API_BASE";
pub const MODEL_ENV: &str = "REELWAVE_MODEL";
pub const DEFAULT_API_BASE: &str = "https://api.openai.com/v1";
pub const DEFAULT_MODEL: &str = "gpt-4-turbo";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: ChatRole::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: ChatRole::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: ChatRole::Assistant, content: content.into() }
    }
}

/// A chat-completion service.
///
/// Implementations must not depend on anything but `messages` when they
/// claim determinism, and must tolerate concurrent calls.
pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;

    fn complete(&self, messages: &[ChatMessage]) -> Result<String>;

    /// Whether responses depend on global call order, which forces callers
    /// to run conversations one at a time.
    fn ordered(&self) -> bool {
        false
    }
}

const ROLE_HEADER: &str = "### role: ";
const TARGET_HEADER: &str = "### supervising: ";

/// Header lines put at the top of every system prompt so that playback
/// backends can tell conversations apart.
pub(crate) fn routing_header(speaker: AgentRole, supervising: Option<AgentRole>) -> String {
    let mut h = format!("{ROLE_HEADER}{}\n", speaker.id());
    if let Some(t) = supervising {
        h.push_str(&format!("{TARGET_HEADER}{}\n", t.id()));
    }
    h
}

/// Reads `(speaker, supervised)` role ids back from the system prompt.
pub fn route_of(messages: &[ChatMessage]) -> (Option<String>, Option<String>) {
    let Some(system) = messages.iter().find(|m| m.role == ChatRole::System) else {
        return (None, None);
    };
    let find = |prefix: &str| {
        system
            .content
            .lines()
            .take_while(|l| l.starts_with("### "))
            .find_map(|l| l.strip_prefix(prefix).map(|v| v.trim().to_string()))
    };
    (find(ROLE_HEADER), find(TARGET_HEADER))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ScriptLine {
    Text(String),
    Routed {
        #[serde(default)]
        role: Option<String>,
        #[serde(default)]
        target: Option<String>,
        content: String,
    },
}

type RouteKey = (String, Option<String>);

/// Plays back responses from a JSONL script.
///
/// Each line is either a JSON string or an object
/// `{"role": "...", "target": "...", "content": "..."}`. Lines with a role
/// are queued for that speaker (and, for the director, the supervised
/// role); other lines go to a shared queue used when no routed response is
/// left. Responses are consumed in file order.
#[derive(Debug, Default)]
pub struct MockBackend {
    routed: Mutex<HashMap<RouteKey, VecDeque<String>>>,
    shared: Mutex<VecDeque<String>>,
}

impl MockBackend {
    pub fn from_jsonl(text: &str) -> Result<Self> {
        let backend = MockBackend::default();
        {
            let mut routed = backend.routed.lock().unwrap();
            let mut shared = backend.shared.lock().unwrap();
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let parsed: ScriptLine = serde_json::from_str(line).map_err(|e| Error::Parse {
                    line: i + 1,
                    column: e.column(),
                    message: format!("mock script: {e}"),
                })?;
                match parsed {
                    ScriptLine::Text(t) => shared.push_back(t),
                    ScriptLine::Routed { role: None, content, .. } => shared.push_back(content),
                    ScriptLine::Routed { role: Some(r), target, content } => {
                        routed.entry((r, target)).or_default().push_back(content)
                    }
                }
            }
        }
        Ok(backend)
    }

    pub fn from_responses<I: IntoIterator<Item = S>, S: Into<String>>(responses: I) -> Self {
        MockBackend {
            routed: Mutex::default(),
            shared: Mutex::new(responses.into_iter().map(Into::into).collect()),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text)
    }

    pub fn remaining(&self) -> usize {
        self.shared.lock().unwrap().len() + self.routed.lock().unwrap().values().map(VecDeque::len).sum::<usize>()
    }
}

impl ChatBackend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, messages: &[ChatMessage]) -> Result<String> {
        let (role, target) = route_of(messages);
        if let Some(role) = &role {
            let mut routed = self.routed.lock().unwrap();
            for key in [(role.clone(), target.clone()), (role.clone(), None)] {
                if let Some(next) = routed.get_mut(&key).and_then(VecDeque::pop_front) {
                    return Ok(next);
                }
            }
        }
        self.shared.lock().unwrap().pop_front().ok_or_else(|| {
            Error::Backend(format!(
                "mock script exhausted (speaker {})",
                role.as_deref().unwrap_or("unknown")
            ))
        })
    }

    fn ordered(&self) -> bool {
        true
    }
}

/// Built-in planner that answers every role with a valid, conservative
/// artifact derived from the request, and always approves as director.
/// It is a pure function of the messages, so it is safe to run
/// concurrently and fully reproducible.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateBackend;

impl ChatBackend for TemplateBackend {
    fn name(&self) -> &str {
        "template"
    }

    fn complete(&self, messages: &[ChatMessage]) -> Result<String> {
        let (role, _) = route_of(messages);
        let task = messages
            .iter()
            .find(|m| m.role == ChatRole::User)
            .map(|m| m.content.as_str())
            .unwrap_or("");
        let s = parse_sections(task);
        let role = role.and_then(|r| AgentRole::from_id(&r)).ok_or_else(|| {
            Error::Backend("template backend needs a role header in the system prompt".into())
        })?;
        match role {
            AgentRole::SoundDirector => Ok("TASK_DONE.".into()),
            AgentRole::ScriptWriter => Ok(template_script(&s)),
            AgentRole::FoleyArtist => Ok(to_canonical_json(&template_foley(&s)?)),
            AgentRole::Composer => Ok(to_canonical_json(&template_music(&s)?)),
            AgentRole::VoiceActor => template_voice(&s).map(|p| match p {
                Some(p) => to_canonical_json(&p),
                None => "N/A".into(),
            }),
            AgentRole::Mixer => template_mix(&s),
        }
    }
}

fn duration_of(s: &Sections) -> Result<f64> {
    s.get("Scene duration")
        .and_then(|d| d.split_whitespace().next())
        .and_then(|d| d.parse::<f64>().ok())
        .filter(|d| *d > 0.0)
        .ok_or_else(|| Error::Backend("request has no usable scene duration".into()))
}

fn first_sentence(text: &str) -> String {
    let t = text.trim();
    let end = t.find(['.', '!', '?']).map_or(t.len(), |i| i + 1);
    let s = t[..end].trim();
    if s.ends_with(['.', '!', '?']) {
        s.to_string()
    } else {
        format!("{s}.")
    }
}

fn sentences(text: &str) -> Vec<String> {
    text.split_inclusive(['.', '!', '?'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn script_scene(n: usize, description: &str, dialogue: &[String]) -> String {
    let characters = if dialogue.is_empty() { "" } else { " NARRATOR" };
    let mut out = format!(
        "SCENE {n}\n\nLocation Description: {}\nDirection Notes: Natural ambience that follows the action on screen.\nPlot Summary: {}\nCharacter:{characters}\n\nDialogue Script:\n",
        first_sentence(description),
        description.trim()
    );
    if !dialogue.is_empty() {
        out.push_str("NARRATOR\n");
        for line in dialogue {
            out.push_str(&format!("\"{line}\"\n"));
        }
        out.push('\n');
    } else {
        out.push('\n');
    }
    out.push_str(&format!("END SCENE {n}\n"));
    out
}

fn template_script(s: &Sections) -> String {
    if let Some(plot) = s.get("Plot") {
        let mut scenes = sentences(plot);
        if scenes.is_empty() {
            scenes.push(plot.trim().to_string());
        }
        return scenes
            .iter()
            .enumerate()
            .map(|(i, text)| script_scene(i + 1, text, &[]))
            .collect::<Vec<_>>()
            .join("\n");
    }
    let description = s.get("Full description").unwrap_or("An unspecified scene.");
    let dialogue: Vec<String> = s
        .get("Dialogue override")
        .map(|d| d.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
        .unwrap_or_default();
    script_scene(1, description, &dialogue)
}

fn template_foley(s: &Sections) -> Result<FoleyPlan> {
    let d = duration_of(s)?;
    let event = s.get("Key event description").unwrap_or("Ambient sound").trim();
    let event = event.strip_suffix('.').unwrap_or(event);
    let fg_end = (d / 2.0).max(d.min(1.0));
    Ok(Plan::new(vec![
        FoleyPlanEntry {
            id: "1".into(),
            layout: Layout::Background,
            description: "Low ambient room tone".into(),
            start_time: Seconds(0.0),
            end_time: Seconds(d),
        },
        FoleyPlanEntry {
            id: "2".into(),
            layout: Layout::Foreground,
            description: format!("Distant echo of {}", event.to_lowercase()),
            start_time: Seconds(0.0),
            end_time: Seconds(fg_end),
        },
    ]))
}

fn template_music(s: &Sections) -> Result<MusicPlan> {
    let d = duration_of(s)?;
    let summary = s
        .get("Script")
        .and_then(|t| parse_script(t).ok())
        .and_then(|doc| doc.scenes.first().map(|sc| sc.plot_summary.clone()))
        .unwrap_or_else(|| "the scene".into());
    Ok(Plan::new(vec![MusicPlanEntry {
        id: "1".into(),
        layout: Layout::Background,
        style: "Cinematic ambient".into(),
        description: format!("A restrained underscore of soft pads and low strings supporting {}", summary.trim()),
        start_time: Seconds(0.0),
        end_time: Seconds(d),
    }]))
}

fn template_voice(s: &Sections) -> Result<Option<VoicePlan>> {
    let d = duration_of(s)?;
    let Some(doc) = s.get("Script").and_then(|t| parse_script(t).ok()) else {
        return Ok(None);
    };
    let lines: Vec<(String, String)> = doc
        .scenes
        .iter()
        .flat_map(|sc| sc.spoken_text().into_iter().map(|(c, t)| (c.to_string(), t.to_string())))
        .filter(|(_, t)| word_count(t) > 0)
        .collect();
    if lines.is_empty() {
        return Ok(None);
    }
    let total_words: usize = lines.iter().map(|(_, t)| word_count(t)).sum();
    let mut characters: Vec<&str> = Vec::new();
    let mut start = 0.0;
    let mut entries = Vec::new();
    for (i, (who, text)) in lines.iter().enumerate() {
        let share = word_count(text) as f64 / total_words as f64;
        let end = if i + 1 == lines.len() { d } else { (start + d * share).min(d) };
        let budget = (2.0 * (end - start)).floor() as usize;
        if budget == 0 || end <= start {
            continue;
        }
        let words: Vec<&str> = text.split_whitespace().take(budget).collect();
        if !characters.contains(&who.as_str()) {
            characters.push(who);
        }
        let idx = characters.iter().position(|c| c == who).unwrap();
        entries.push(VoicePlanEntry {
            id: (entries.len() + 1).to_string(),
            layout: Layout::Foreground,
            sex: if idx % 2 == 0 { Sex::Male } else { Sex::Female },
            dialogue: words.join(" "),
            start_time: Seconds(round_ms(start)),
            end_time: Seconds(round_ms(end)),
        });
        start = end;
    }
    Ok((!entries.is_empty()).then(|| Plan::new(entries)))
}

fn round_ms(t: f64) -> f64 {
    (t * 1000.0).round() / 1000.0
}

#[derive(Deserialize)]
struct OnScreenSpec {
    #[serde(rename = "ID")]
    id: String,
    #[serde(rename = "Start_time")]
    start: Seconds,
    #[serde(rename = "End_time")]
    end: Seconds,
}

fn template_mix(s: &Sections) -> Result<String> {
    let parse_or_empty = |name: &str| s.get(name).map(str::trim).filter(|t| !t.eq_ignore_ascii_case("n/a"));
    let foley = parse_or_empty("Foley plan").map(parse_foley_plan).transpose()?.unwrap_or_default();
    let music = parse_or_empty("Music plan").map(parse_music_plan).transpose()?.unwrap_or_default();
    let voice = parse_or_empty("Voice plan").map(parse_voice_plan).transpose()?.unwrap_or_default();
    let on_screen: Vec<OnScreenSpec> = match s.get("On-screen tracks") {
        Some(t) => serde_json::from_str(t).map_err(|e| Error::Backend(format!("bad on-screen section: {e}")))?,
        None => Vec::new(),
    };
    let mut entries = Vec::new();
    let mut push = |track_type, id: &str, start: Seconds, end: Seconds, volume_db| {
        entries.push(MixPlanEntry { track_type, id: id.into(), start_time: start, end_time: end, volume_db })
    };
    for o in &on_screen {
        push(TrackType::OnScreen, &o.id, o.start, o.end, -15);
    }
    for e in &foley.scene {
        let vol = if e.layout == Layout::Background { -35 } else { -25 };
        push(TrackType::Foley, &e.id, e.start_time, e.end_time, vol);
    }
    for e in &voice.scene {
        push(TrackType::Voice, &e.id, e.start_time, e.end_time, -15);
    }
    for e in &music.scene {
        push(TrackType::Music, &e.id, e.start_time, e.end_time, -35);
    }
    Ok(to_canonical_json(&Plan::new(entries)))
}

/// OpenAI-compatible chat-completions client.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    pub base_url: String,
    pub api_key: String,
    pub model: String,
    pub temperature: f64,
    pub retry: RetryPolicy,
}

impl HttpBackend {
    /// Reads the key, base URL and model from the environment.
    pub fn from_env() -> Result<Self> {
        let api_key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| Error::Credential(format!("{API_KEY_ENV} is not set")))?;
        Ok(HttpBackend {
            base_url: std::env::var(API_BASE_ENV).unwrap_or_else(|_| DEFAULT_API_BASE.into()),
            api_key,
            model: std::env::var(MODEL_ENV).unwrap_or_else(|_| DEFAULT_MODEL.into()),
            temperature: 0.0,
            retry: RetryPolicy::default(),
        })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChatMessageOut,
}

#[derive(Deserialize)]
struct ChatMessageOut {
    content: Option<String>,
}

impl ChatBackend for HttpBackend {
    fn name(&self) -> &str {
        &self.model
    }

    fn complete(&self, messages: &[ChatMessage]) -> Result<String> {
        let body = serde_json::json!({
            "model": self.model,
            "messages": messages,
            "temperature": self.temperature,
        });
        let url = self.endpoint();
        let bytes = post_json(&url, &body, Some(&self.api_key), &self.retry)?;
        let resp: CompletionResponse = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Backend(format!("{url}: unexpected response: {e}")))?;
        resp.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Error::Backend(format!("{url}: response has no message content")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(role: AgentRole, target: Option<AgentRole>) -> ChatMessage {
        ChatMessage::system(format!("{}\nprompt", routing_header(role, target)))
    }

    #[test]
    fn routing_header_round_trip() {
        let m = [sys(AgentRole::SoundDirector, Some(AgentRole::Composer))];
        assert_eq!(route_of(&m), (Some("sound_director".into()), Some("composer".into())));
        assert_eq!(route_of(&[ChatMessage::user("x")]), (None, None));
    }

    #[test]
    fn mock_routes_and_falls_back() {
        let mock = MockBackend::from_jsonl(
            "{\"role\": \"composer\", \"content\": \"N/A\"}\n\"shared one\"\n\n{\"role\": \"sound_director\", \"target\": \"composer\", \"content\": \"TASK_DONE\"}\n",
        )
        .unwrap();
        let foley = [sys(AgentRole::FoleyArtist, None)];
        let composer = [sys(AgentRole::Composer, None)];
        let director = [sys(AgentRole::SoundDirector, Some(AgentRole::Composer))];
        assert_eq!(mock.complete(&director).unwrap(), "TASK_DONE");
        assert_eq!(mock.complete(&foley).unwrap(), "shared one");
        assert_eq!(mock.complete(&composer).unwrap(), "N/A");
        assert!(matches!(mock.complete(&composer), Err(Error::Backend(_))));
    }

    #[test]
    fn mock_rejects_bad_lines() {
        let err = MockBackend::from_jsonl("\"ok\"\n{oops\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn missing_key_is_credential_error() {
        // Only checks the error path; never touches the network.
        if std::env::var(API_KEY_ENV).is_err() {
            assert!(matches!(HttpBackend::from_env(), Err(Error::Credential(_))));
        }
    }
}
