//! Planning agents supervised by a director over a chat backend.
//!
//! Every planner runs the same loop: the planner drafts, the draft is parsed
//! and validated, and the director either asks for one revision or answers
//! `TASK_DONE`. Drafts that fail validation never reach the director; the
//! loop answers them with the validation errors as the next instruction.

mod backend;
mod pipeline;
mod sections;

use std::fmt;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use backend::{
    route_of, ChatBackend, ChatMessage, ChatRole, HttpBackend, MockBackend, TemplateBackend, API_BASE_ENV,
    API_KEY_ENV, DEFAULT_API_BASE, MODEL_ENV,
};
pub use pipeline::{plot_to_scenes, run_scene_pipeline, OnScreenSource, OnScreenTrack, PlotBreakdown, SceneBundle};
pub use sections::{parse_sections, Sections};

use backend::routing_header;
use crate::error::{Error, Result};
use crate::plans::{
    parse_plan, parse_script, serialize_plan, serialize_script, validate_mix_against, validate_plan, AnyPlan,
    FoleyPlan, MusicPlan, PlanKind, PlanValidationReport, ScriptDoc, VoicePlan,
};

pub const DEFAULT_MAX_ROUNDS: usize = 4;
pub const TASK_DONE: &str = "TASK_DONE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    ScriptWriter,
    FoleyArtist,
    Composer,
    VoiceActor,
    Mixer,
    SoundDirector,
}

impl AgentRole {
    pub const ALL: [AgentRole; 6] = [
        AgentRole::ScriptWriter,
        AgentRole::FoleyArtist,
        AgentRole::Composer,
        AgentRole::VoiceActor,
        AgentRole::Mixer,
        AgentRole::SoundDirector,
    ];

    pub fn id(self) -> &'static str {
        match self {
            AgentRole::ScriptWriter => "script_writer",
            AgentRole::FoleyArtist => "foley_artist",
            AgentRole::Composer => "composer",
            AgentRole::VoiceActor => "voice_actor",
            AgentRole::Mixer => "mixer",
            AgentRole::SoundDirector => "sound_director",
        }
    }

    pub fn from_id(id: &str) -> Option<AgentRole> {
        Self::ALL.into_iter().find(|r| r.id() == id)
    }

    /// System prompt template shipped with the crate.
    pub fn prompt_template(self) -> &'static str {
        match self {
            AgentRole::ScriptWriter => include_str!("../../prompts/script_writer.txt"),
            AgentRole::FoleyArtist => include_str!("../../prompts/foley_artist.txt"),
            AgentRole::Composer => include_str!("../../prompts/composer.txt"),
            AgentRole::VoiceActor => include_str!("../../prompts/voice_actor.txt"),
            AgentRole::Mixer => include_str!("../../prompts/mixer.txt"),
            AgentRole::SoundDirector => include_str!("../../prompts/sound_director.txt"),
        }
    }

    /// Plan kind the role produces, or `None` for scripts and the director.
    pub fn plan_kind(self) -> Option<PlanKind> {
        match self {
            AgentRole::FoleyArtist => Some(PlanKind::Foley),
            AgentRole::Composer => Some(PlanKind::Music),
            AgentRole::VoiceActor => Some(PlanKind::Voice),
            AgentRole::Mixer => Some(PlanKind::Mix),
            AgentRole::ScriptWriter | AgentRole::SoundDirector => None,
        }
    }

    fn artifact_noun(self) -> &'static str {
        match self {
            AgentRole::ScriptWriter => "script",
            _ => "JSON plan",
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentRole::ScriptWriter => "Script Writer",
            AgentRole::FoleyArtist => "Foley Artist",
            AgentRole::Composer => "Composer",
            AgentRole::VoiceActor => "Voice Actor",
            AgentRole::Mixer => "Mixer",
            AgentRole::SoundDirector => "Sound Director",
        })
    }
}

/// What the picture analysis tells the planners about one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneContext {
    /// Short caption of the main on-screen sound event.
    pub key_event_description: String,
    pub full_description: String,
    #[serde(rename = "duration_sec")]
    pub scene_duration: f64,
    #[serde(default)]
    pub has_talking_human: bool,
    /// Dialogue supplied by the user; replaces generated lines verbatim.
    #[serde(default, rename = "dialogue_override")]
    pub user_dialogue_override: Option<String>,
    /// Externally produced on-screen speech for talking-human scenes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub on_screen_voice_wav: Option<std::path::PathBuf>,
}

impl SceneContext {
    pub fn validate(&self) -> Result<()> {
        if !(self.scene_duration > 0.0 && self.scene_duration.is_finite()) {
            return Err(Error::Validation(format!(
                "scene duration must be positive, got {}",
                self.scene_duration
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    TaskDone,
    MaxRounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub round: usize,
    pub speaker: AgentRole,
    pub content: String,
    /// Exact messages sent to the backend; absent for loop-generated
    /// validation feedback.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<Vec<ChatMessage>>,
    /// Validation result attached to planner drafts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<PlanValidationReport>,
}

/// Validated output of a conversation.
#[derive(Debug, Clone, PartialEq)]
pub enum Artifact {
    Script(ScriptDoc),
    Plan(AnyPlan),
}

impl Artifact {
    pub fn to_text(&self) -> String {
        match self {
            Artifact::Script(doc) => serialize_script(doc),
            Artifact::Plan(plan) => serialize_plan(plan),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationTranscript {
    pub scene: String,
    pub role: AgentRole,
    pub entries: Vec<TranscriptEntry>,
    pub terminated_by: Option<Termination>,
    /// Canonical text of the accepted artifact.
    pub final_artifact: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub artifact: Option<Artifact>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum TranscriptLine {
    Entry(TranscriptEntry),
    Result {
        scene: String,
        role: AgentRole,
        terminated_by: Option<Termination>,
        final_artifact: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
}

impl ConversationTranscript {
    fn new(scene: &str, role: AgentRole) -> Self {
        ConversationTranscript {
            scene: scene.to_string(),
            role,
            entries: Vec::new(),
            terminated_by: None,
            final_artifact: None,
            error: None,
            artifact: None,
        }
    }

    pub fn rounds(&self) -> usize {
        self.entries.last().map_or(0, |e| e.round)
    }

    pub fn director_turns(&self) -> impl Iterator<Item = &TranscriptEntry> {
        self.entries.iter().filter(|e| e.speaker == AgentRole::SoundDirector)
    }

    /// One JSON object per entry, then a closing `result` line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(&TranscriptLine::Entry(e.clone())).expect("serializable"));
            out.push('\n');
        }
        let result = TranscriptLine::Result {
            scene: self.scene.clone(),
            role: self.role,
            terminated_by: self.terminated_by,
            final_artifact: self.final_artifact.clone(),
            error: self.error.clone(),
        };
        out.push_str(&serde_json::to_string(&result).expect("serializable"));
        out.push('\n');
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let parsed: TranscriptLine = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: i + 1,
                column: e.column(),
                message: e.to_string(),
            })?;
            match parsed {
                TranscriptLine::Entry(e) => entries.push(e),
                TranscriptLine::Result { scene, role, terminated_by, final_artifact, error } => {
                    return Ok(ConversationTranscript {
                        scene,
                        role,
                        entries,
                        terminated_by,
                        final_artifact,
                        error,
                        artifact: None,
                    })
                }
            }
        }
        Err(Error::Format("transcript has no result line".into()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_jsonl(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Everything a planner may be shown besides the scene context.
#[derive(Debug, Clone, Default)]
pub struct PlannerInputs<'a> {
    pub script: Option<&'a ScriptDoc>,
    pub foley: Option<&'a FoleyPlan>,
    pub music: Option<&'a MusicPlan>,
    pub voice: Option<&'a VoicePlan>,
    pub on_screen: &'a [OnScreenTrack],
    /// Plot summary for multi-scene script writing.
    pub plot: Option<&'a str>,
}

fn plan_or_na(plan: Option<String>) -> String {
    plan.unwrap_or_else(|| "N/A".into())
}

fn context_sections(role: AgentRole, ctx: &SceneContext, inputs: &PlannerInputs<'_>) -> Sections {
    let mut s = Sections::default();
    if let Some(plot) = inputs.plot {
        s.push("Plot", plot);
        s.push("Scene duration", format!("{} seconds in total", ctx.scene_duration));
        return s;
    }
    s.push("Scene duration", format!("{} seconds", ctx.scene_duration));
    match role {
        AgentRole::ScriptWriter => {
            s.push("Full description", &ctx.full_description);
            if let Some(d) = &ctx.user_dialogue_override {
                s.push("Dialogue override", d);
            }
        }
        AgentRole::FoleyArtist => {
            s.push("Key event description", &ctx.key_event_description);
        }
        _ => {}
    }
    if let Some(script) = inputs.script {
        s.push("Script", serialize_script(script));
    }
    if role == AgentRole::Mixer {
        s.push("Foley plan", plan_or_na(inputs.foley.map(|p| serialize_plan(&AnyPlan::Foley(p.clone())))));
        s.push("Music plan", plan_or_na(inputs.music.map(|p| serialize_plan(&AnyPlan::Music(p.clone())))));
        s.push("Voice plan", plan_or_na(inputs.voice.map(|p| serialize_plan(&AnyPlan::Voice(p.clone())))));
        s.push(
            "On-screen tracks",
            serde_json::to_string_pretty(inputs.on_screen).expect("serializable"),
        );
    }
    s
}

fn task_line(role: AgentRole, inputs: &PlannerInputs<'_>) -> String {
    match role {
        AgentRole::ScriptWriter if inputs.plot.is_some() => {
            "Write a multi-scene script for this plot, one SCENE per distinct setting.".into()
        }
        AgentRole::ScriptWriter => "Write the script for this scene.".into(),
        AgentRole::Mixer => "Write the mix plan for this scene.".into(),
        other => format!("Write the {} plan for this scene.", other.to_string().to_lowercase()),
    }
}

/// Pulls the artifact out of a chat reply: code fences are unwrapped and,
/// for JSON, the outermost object is taken.
pub fn extract_draft(role: AgentRole, reply: &str) -> String {
    let body = match (reply.find("```"), reply.rfind("```")) {
        (Some(a), Some(b)) if b > a => {
            let inner = &reply[a + 3..b];
            inner.split_once('\n').map_or(inner, |(first, rest)| {
                if first.trim().chars().all(|c| c.is_ascii_alphanumeric()) {
                    rest
                } else {
                    inner
                }
            })
        }
        _ => reply,
    };
    let body = body.trim();
    if role == AgentRole::ScriptWriter {
        let start = body
            .match_indices("SCENE ")
            .map(|(i, _)| i)
            .find(|&i| i == 0 || body[..i].ends_with('\n'))
            .unwrap_or(0);
        return format!("{}\n", body[start..].trim_end());
    }
    match (body.find('{'), body.rfind('}')) {
        (Some(a), Some(b)) if b > a => body[a..=b].to_string(),
        _ => body.to_string(),
    }
}

/// Replaces generated dialogue with the user's lines, in order. Extra user
/// lines are appended to the last entry; surplus entries are dropped. An
/// empty plan gets one entry spanning the scene.
pub fn apply_dialogue_override(plan: &mut VoicePlan, dialogue: &str, scene_duration: f64) {
    use crate::plans::{Layout, Seconds, Sex, VoicePlanEntry};
    let lines: Vec<&str> = dialogue.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    if lines.is_empty() {
        return;
    }
    if plan.scene.is_empty() {
        plan.scene.push(VoicePlanEntry {
            id: "1".into(),
            layout: Layout::Foreground,
            sex: Sex::Male,
            dialogue: lines.join(" "),
            start_time: Seconds(0.0),
            end_time: Seconds(scene_duration),
        });
        return;
    }
    plan.scene.truncate(lines.len());
    let n = plan.scene.len();
    for (i, entry) in plan.scene.iter_mut().enumerate() {
        entry.dialogue = if i + 1 == n { lines[i..].join(" ") } else { lines[i].to_string() };
    }
}

/// Parses and validates one draft.
fn evaluate(
    role: AgentRole,
    reply: &str,
    ctx: &SceneContext,
    inputs: &PlannerInputs<'_>,
) -> (Option<Artifact>, PlanValidationReport) {
    let mut report = PlanValidationReport::default();
    let draft = extract_draft(role, reply);
    let Some(kind) = role.plan_kind() else {
        match parse_script(&draft) {
            Ok(doc) => {
                if inputs.plot.is_none() && doc.scenes.len() != 1 {
                    report.error("script", format!("expected exactly one scene, got {}", doc.scenes.len()));
                }
                return (report.is_accepted().then_some(Artifact::Script(doc)), report);
            }
            Err(e) => {
                report.error("script", e.to_string());
                return (None, report);
            }
        }
    };
    let mut plan = match parse_plan(kind, &draft) {
        Ok(p) => p,
        Err(e) => {
            report.error("$", e.to_string());
            return (None, report);
        }
    };
    if let (AnyPlan::Voice(p), Some(d)) = (&mut plan, &ctx.user_dialogue_override) {
        apply_dialogue_override(p, d, ctx.scene_duration);
    }
    report.merge(validate_plan(&plan, ctx.scene_duration));
    if let AnyPlan::Mix(mix) = &plan {
        let ids: Vec<String> = inputs.on_screen.iter().map(|o| o.id.clone()).collect();
        report.merge(validate_mix_against(
            mix,
            inputs.foley.unwrap_or(&FoleyPlan::default()),
            inputs.music.unwrap_or(&MusicPlan::default()),
            inputs.voice.unwrap_or(&VoicePlan::default()),
            &ids,
        ));
    }
    (report.is_accepted().then_some(Artifact::Plan(plan)), report)
}

fn feedback_instruction(role: AgentRole, report: &PlanValidationReport) -> String {
    let mut s = format!(
        "Instruction: The draft failed automatic validation. Fix the following and reply with the complete corrected {}:",
        role.artifact_noun()
    );
    for issue in &report.errors {
        s.push_str(&format!("\n- {}: {}", issue.path, issue.message));
    }
    s
}

fn validation_summary(report: &PlanValidationReport) -> String {
    if report.warnings.is_empty() {
        return "Passed with no warnings.".into();
    }
    let mut s = "Passed with warnings:".to_string();
    for w in &report.warnings {
        s.push_str(&format!("\n- {}: {}", w.path, w.message));
    }
    s
}

fn planning_error(scene: &str, message: impl Into<String>, mut transcript: ConversationTranscript) -> Error {
    let message = message.into();
    transcript.error = Some(message.clone());
    Error::Planning {
        scene: scene.to_string(),
        message,
        transcript: Some(Box::new(transcript)),
    }
}

/// Runs one supervised planning conversation.
///
/// Terminates when the director's reply contains `TASK_DONE` or after
/// `max_rounds` director turns, returning the last draft that passed
/// validation. Fails with [`Error::Planning`] (carrying the transcript) if
/// no draft ever validates or the backend fails.
pub fn run_planner(
    role: AgentRole,
    scene_id: &str,
    ctx: &SceneContext,
    inputs: &PlannerInputs<'_>,
    backend: &dyn ChatBackend,
    max_rounds: usize,
) -> Result<ConversationTranscript> {
    if role == AgentRole::SoundDirector {
        return Err(Error::Config("the director supervises planners and is not one".into()));
    }
    if max_rounds == 0 {
        return Err(Error::Config("max_rounds must be at least 1".into()));
    }
    ctx.validate()?;
    let mut transcript = ConversationTranscript::new(scene_id, role);
    let context = context_sections(role, ctx, inputs);

    let mut task = Sections::default();
    task.push("Task", task_line(role, inputs));
    let mut planner_messages = vec![
        ChatMessage::system(format!("{}\n{}", routing_header(role, None), role.prompt_template())),
        ChatMessage::user(format!("{}\n{}", task.render(), context.render())),
    ];
    let director_system = ChatMessage::system(format!(
        "{}\n{}",
        routing_header(AgentRole::SoundDirector, Some(role)),
        AgentRole::SoundDirector
            .prompt_template()
            .replace("{{agent}}", &role.to_string())
    ));
    let mut instructions: Vec<String> = Vec::new();
    let mut last_valid: Option<Artifact> = None;

    for round in 1..=max_rounds {
        let prompt = planner_messages.clone();
        let reply = match backend.complete(&prompt) {
            Ok(r) => r,
            Err(e) => return Err(planning_error(scene_id, format!("{role}: {e}"), transcript)),
        };
        let (artifact, report) = evaluate(role, &reply, ctx, inputs);
        transcript.entries.push(TranscriptEntry {
            round,
            speaker: role,
            content: reply.clone(),
            prompt: Some(prompt),
            validation: Some(report.clone()),
        });
        planner_messages.push(ChatMessage::assistant(reply));

        let Some(artifact) = artifact else {
            let feedback = feedback_instruction(role, &report);
            transcript.entries.push(TranscriptEntry {
                round,
                speaker: AgentRole::SoundDirector,
                content: feedback.clone(),
                prompt: None,
                validation: None,
            });
            planner_messages.push(ChatMessage::user(feedback));
            continue;
        };

        let mut review = Sections::default();
        review.push("Task", format!("Review the {role} draft for this scene."));
        let mut body = format!("{}\n{}", review.render(), context.render());
        let mut tail = Sections::default();
        tail.push("Draft", artifact.to_text());
        tail.push("Validation", validation_summary(&report));
        if !instructions.is_empty() {
            tail.push("Previous instructions", instructions.join("\n"));
        }
        body.push('\n');
        body.push_str(&tail.render());
        let prompt = vec![director_system.clone(), ChatMessage::user(body)];
        let verdict = match backend.complete(&prompt) {
            Ok(r) => r,
            Err(e) => {
                transcript.artifact = Some(artifact);
                return Err(planning_error(scene_id, format!("{}: {e}", AgentRole::SoundDirector), transcript));
            }
        };
        transcript.entries.push(TranscriptEntry {
            round,
            speaker: AgentRole::SoundDirector,
            content: verdict.clone(),
            prompt: Some(prompt),
            validation: None,
        });
        let done = verdict.contains(TASK_DONE);
        last_valid = Some(artifact);
        if done {
            transcript.terminated_by = Some(Termination::TaskDone);
            break;
        }
        instructions.push(verdict.trim().to_string());
        planner_messages.push(ChatMessage::user(verdict));
    }

    match last_valid {
        Some(artifact) => {
            if transcript.terminated_by.is_none() {
                transcript.terminated_by = Some(Termination::MaxRounds);
            }
            transcript.final_artifact = Some(artifact.to_text());
            transcript.artifact = Some(artifact);
            Ok(transcript)
        }
        None => {
            transcript.terminated_by = Some(Termination::MaxRounds);
            Err(planning_error(
                scene_id,
                format!("{role} produced no valid draft in {max_rounds} rounds"),
                transcript,
            ))
        }
    }
}
