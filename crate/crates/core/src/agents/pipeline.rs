//! Per-scene planning pipeline and plot-to-scenes breakdown.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{run_planner, AgentRole, Artifact, ChatBackend, ConversationTranscript, PlannerInputs, SceneContext};
use crate::error::{Error, Result};
use crate::plans::{
    parse_foley_plan, parse_mix_plan, parse_music_plan, parse_script, parse_voice_plan, serialize_plan,
    serialize_script, AnyPlan, FoleyPlan, MixPlan, MusicPlan, PlanKind, ScriptDoc, Seconds, VoicePlan,
};

/// Where the on-screen track of a scene comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnScreenSource {
    /// Synthesized from the key event, conditioned on control signals.
    Foley,
    /// Speech produced outside this pipeline (lip-to-speech).
    LipSyncVoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnScreenTrack {
    #[serde(rename = "ID")]
    pub id: String,
    #[serde(rename = "Source")]
    pub source: OnScreenSource,
    #[serde(rename = "Description")]
    pub description: String,
    #[serde(rename = "Start_time")]
    pub start_time: Seconds,
    #[serde(rename = "End_time")]
    pub end_time: Seconds,
}

impl OnScreenTrack {
    pub fn for_context(ctx: &SceneContext) -> OnScreenTrack {
        let (source, description) = if ctx.has_talking_human {
            (OnScreenSource::LipSyncVoice, "On-screen speech".to_string())
        } else {
            (OnScreenSource::Foley, ctx.key_event_description.clone())
        };
        OnScreenTrack {
            id: "1".into(),
            source,
            description,
            start_time: Seconds(0.0),
            end_time: Seconds(ctx.scene_duration),
        }
    }
}

/// All planning output for one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneBundle {
    pub scene_id: String,
    pub context: SceneContext,
    pub script: ScriptDoc,
    pub foley: FoleyPlan,
    pub music: MusicPlan,
    pub voice: VoicePlan,
    pub mix: MixPlan,
    pub on_screen: Vec<OnScreenTrack>,
    pub transcripts: Vec<ConversationTranscript>,
}

#[derive(Serialize, Deserialize)]
struct BundleContext {
    scene_id: String,
    context: SceneContext,
    on_screen: Vec<OnScreenTrack>,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

impl SceneBundle {
    /// Writes `script.txt`, the four plan files, `context.json` and
    /// `transcripts/<role>.jsonl`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let transcripts = dir.join("transcripts");
        std::fs::create_dir_all(&transcripts).map_err(|e| Error::io(&transcripts, e))?;
        write_text(&dir.join("script.txt"), &serialize_script(&self.script))?;
        for plan in [
            AnyPlan::Foley(self.foley.clone()),
            AnyPlan::Music(self.music.clone()),
            AnyPlan::Voice(self.voice.clone()),
            AnyPlan::Mix(self.mix.clone()),
        ] {
            write_text(&dir.join(plan.kind().file_name()), &serialize_plan(&plan))?;
        }
        let ctx = BundleContext {
            scene_id: self.scene_id.clone(),
            context: self.context.clone(),
            on_screen: self.on_screen.clone(),
        };
        write_text(
            &dir.join("context.json"),
            &serde_json::to_string_pretty(&ctx).expect("serializable"),
        )?;
        for t in &self.transcripts {
            t.write(transcripts.join(format!("{}.jsonl", t.role.id())))?;
        }
        Ok(())
    }

    /// Reads a bundle written by [`SceneBundle::write`]. Transcripts are
    /// loaded when present.
    pub fn load(dir: impl AsRef<Path>) -> Result<SceneBundle> {
        let dir = dir.as_ref();
        let ctx_path = dir.join("context.json");
        let ctx: BundleContext = serde_json::from_str(&read_text(&ctx_path)?)
            .map_err(|e| Error::Schema(format!("{}: {e}", ctx_path.display())))?;
        let plan_text = |kind: PlanKind| read_text(&dir.join(kind.file_name()));
        let mut transcripts = Vec::new();
        for role in AgentRole::ALL {
            let p = dir.join("transcripts").join(format!("{}.jsonl", role.id()));
            if p.exists() {
                transcripts.push(ConversationTranscript::read(&p)?);
            }
        }
        Ok(SceneBundle {
            scene_id: ctx.scene_id,
            context: ctx.context,
            script: parse_script(&read_text(&dir.join("script.txt"))?)?,
            foley: parse_foley_plan(&plan_text(PlanKind::Foley)?)?,
            music: parse_music_plan(&plan_text(PlanKind::Music)?)?,
            voice: parse_voice_plan(&plan_text(PlanKind::Voice)?)?,
            mix: parse_mix_plan(&plan_text(PlanKind::Mix)?)?,
            on_screen: ctx.on_screen,
            transcripts,
        })
    }

    pub fn transcript(&self, role: AgentRole) -> Option<&ConversationTranscript> {
        self.transcripts.iter().find(|t| t.role == role)
    }
}

fn take_plan(t: &ConversationTranscript) -> AnyPlan {
    match &t.artifact {
        Some(Artifact::Plan(p)) => p.clone(),
        other => unreachable!("planner returned {other:?}"),
    }
}

/// Plans one scene: script, then Foley/music/voice, then the mix.
///
/// The three middle planners run concurrently unless the backend depends on
/// call order. When the scene has a talking human the voice planner is
/// skipped and the on-screen track stands for the externally produced
/// speech. A `script` given by the caller replaces the script writer.
pub fn run_scene_pipeline(
    ctx: &SceneContext,
    scene_id: &str,
    backend: &dyn ChatBackend,
    max_rounds: usize,
    script: Option<ScriptDoc>,
) -> Result<SceneBundle> {
    ctx.validate()?;
    let mut transcripts = Vec::new();
    let script = match script {
        Some(s) => s,
        None => {
            if ctx.full_description.trim().is_empty() {
                return Err(Error::Planning {
                    scene: scene_id.to_string(),
                    message: format!("{}: full description is empty", AgentRole::ScriptWriter),
                    transcript: None,
                });
            }
            let t = run_planner(AgentRole::ScriptWriter, scene_id, ctx, &PlannerInputs::default(), backend, max_rounds)?;
            let doc = match &t.artifact {
                Some(Artifact::Script(doc)) => doc.clone(),
                other => unreachable!("script writer returned {other:?}"),
            };
            transcripts.push(t);
            doc
        }
    };

    let inputs = PlannerInputs {
        script: Some(&script),
        ..PlannerInputs::default()
    };
    let mut roles = vec![AgentRole::FoleyArtist, AgentRole::Composer];
    if !ctx.has_talking_human {
        roles.push(AgentRole::VoiceActor);
    }
    let run = |role: AgentRole| run_planner(role, scene_id, ctx, &inputs, backend, max_rounds);
    let results: Vec<Result<ConversationTranscript>> = if backend.ordered() {
        roles.iter().map(|&r| run(r)).collect()
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = roles.iter().map(|&r| s.spawn(move || run(r))).collect();
            handles.into_iter().map(|h| h.join().expect("planner thread panicked")).collect()
        })
    };
    let (mut foley, mut music, mut voice) = (FoleyPlan::default(), MusicPlan::default(), VoicePlan::default());
    for r in results {
        let t = r?;
        match take_plan(&t) {
            AnyPlan::Foley(p) => foley = p,
            AnyPlan::Music(p) => music = p,
            AnyPlan::Voice(p) => voice = p,
            AnyPlan::Mix(_) => unreachable!(),
        }
        transcripts.push(t);
    }

    let on_screen = vec![OnScreenTrack::for_context(ctx)];
    let mix_inputs = PlannerInputs {
        script: Some(&script),
        foley: Some(&foley),
        music: Some(&music),
        voice: Some(&voice),
        on_screen: &on_screen,
        plot: None,
    };
    let t = run_planner(AgentRole::Mixer, scene_id, ctx, &mix_inputs, backend, max_rounds)?;
    let AnyPlan::Mix(mix) = take_plan(&t) else { unreachable!() };
    transcripts.push(t);

    Ok(SceneBundle {
        scene_id: scene_id.to_string(),
        context: ctx.clone(),
        script,
        foley,
        music,
        voice,
        mix,
        on_screen,
        transcripts,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotBreakdown {
    pub script: ScriptDoc,
    pub scenes: Vec<SceneContext>,
    pub transcript: ConversationTranscript,
}

fn first_sentence(text: &str) -> String {
    let t = text.trim();
    let end = t.find(['.', '!', '?']).map_or(t.len(), |i| i + 1);
    t[..end].trim().to_string()
}

fn describe_scene(location: &str, summary: &str) -> String {
    let (location, summary) = (location.trim(), summary.trim());
    if location.is_empty() || location == summary {
        summary.to_string()
    } else {
        format!("{location} {summary}")
    }
}

/// Asks the script writer (supervised by the director, who may request more
/// scenes) to break a plot summary into scenes. The total duration is split
/// evenly across the resulting scenes.
pub fn plot_to_scenes(
    plot: &str,
    total_duration: f64,
    backend: &dyn ChatBackend,
    max_rounds: usize,
) -> Result<PlotBreakdown> {
    if plot.trim().is_empty() {
        return Err(Error::Validation("plot summary is empty".into()));
    }
    let ctx = SceneContext {
        key_event_description: String::new(),
        full_description: plot.to_string(),
        scene_duration: total_duration,
        has_talking_human: false,
        user_dialogue_override: None,
        on_screen_voice_wav: None,
    };
    let inputs = PlannerInputs {
        plot: Some(plot),
        ..PlannerInputs::default()
    };
    let transcript = run_planner(AgentRole::ScriptWriter, "plot", &ctx, &inputs, backend, max_rounds)?;
    let Some(Artifact::Script(script)) = transcript.artifact.clone() else {
        unreachable!("script writer returned a plan")
    };
    let each = total_duration / script.scenes.len() as f64;
    let scenes = script
        .scenes
        .iter()
        .map(|s| SceneContext {
            key_event_description: first_sentence(&s.plot_summary),
            full_description: describe_scene(&s.location_description, &s.plot_summary),
            scene_duration: each,
            has_talking_human: false,
            user_dialogue_override: None,
            on_screen_voice_wav: None,
        })
        .collect();
    Ok(PlotBreakdown { script, scenes, transcript })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{MockBackend, TemplateBackend, Termination};
    use crate::plans::{validate_mix_against, validate_plan, TrackType};

    fn ctx(talking: bool) -> SceneContext {
        SceneContext {
            key_event_description: "The sound of explosions".into(),
            full_description: "A castle town under siege, fiery explosions light the night.".into(),
            scene_duration: 5.0,
            has_talking_human: talking,
            user_dialogue_override: None,
            on_screen_voice_wav: None,
        }
    }

    fn check_bundle(b: &SceneBundle) {
        let d = b.context.scene_duration;
        for plan in [
            AnyPlan::Foley(b.foley.clone()),
            AnyPlan::Music(b.music.clone()),
            AnyPlan::Voice(b.voice.clone()),
            AnyPlan::Mix(b.mix.clone()),
        ] {
            let r = validate_plan(&plan, d);
            assert!(r.is_accepted(), "{}", r.describe());
        }
        let ids: Vec<String> = b.on_screen.iter().map(|o| o.id.clone()).collect();
        assert!(validate_mix_against(&b.mix, &b.foley, &b.music, &b.voice, &ids).is_accepted());
    }

    #[test]
    fn template_pipeline_is_valid_and_reproducible() {
        let a = run_scene_pipeline(&ctx(false), "scene_01", &TemplateBackend, 4, None).unwrap();
        let b = run_scene_pipeline(&ctx(false), "scene_01", &TemplateBackend, 4, None).unwrap();
        assert_eq!(a, b);
        check_bundle(&a);
        assert_eq!(a.transcripts.len(), 5);
        assert!(a.transcripts.iter().all(|t| t.terminated_by == Some(Termination::TaskDone)));
    }

    #[test]
    fn talking_human_skips_voice() {
        let b = run_scene_pipeline(&ctx(true), "scene_01", &TemplateBackend, 4, None).unwrap();
        assert!(b.transcript(AgentRole::VoiceActor).is_none());
        assert!(b.voice.is_empty());
        let on = b.mix.scene.iter().find(|e| e.track_type == TrackType::OnScreen).unwrap();
        assert_eq!((on.start_time.0, on.end_time.0), (0.0, 5.0));
        assert_eq!(b.on_screen[0].source, OnScreenSource::LipSyncVoice);
    }

    #[test]
    fn dialogue_override_reaches_voice_plan() {
        let mut c = ctx(false);
        c.user_dialogue_override = Some("Hold the gate!".into());
        let b = run_scene_pipeline(&c, "scene_01", &TemplateBackend, 4, None).unwrap();
        assert_eq!(b.voice.scene[0].dialogue, "Hold the gate!");
    }

    #[test]
    fn empty_description_names_scene() {
        let mut c = ctx(false);
        c.full_description = "  ".into();
        match run_scene_pipeline(&c, "scene_07", &TemplateBackend, 4, None) {
            Err(Error::Planning { scene, .. }) => assert_eq!(scene, "scene_07"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bundle_round_trip() {
        let b = run_scene_pipeline(&ctx(false), "scene_01", &TemplateBackend, 4, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        b.write(dir.path()).unwrap();
        let back = SceneBundle::load(dir.path()).unwrap();
        assert_eq!(back.mix, b.mix);
        assert_eq!(back.script, b.script);
        assert_eq!(back.transcripts.len(), b.transcripts.len());
    }

    const SCENE: &str = "SCENE {n}\n\nLocation Description: Somewhere.\nDirection Notes: Quiet.\nPlot Summary: Part {n} happens.\nCharacter:\n\nDialogue Script:\n\nEND SCENE {n}\n";

    fn scenes(n: usize) -> String {
        (1..=n).map(|i| SCENE.replace("{n}", &i.to_string())).collect::<Vec<_>>().join("\n")
    }

    #[test]
    fn plot_split_evenly() {
        let mock = MockBackend::from_responses([scenes(2), "TASK_DONE".into()]);
        let out = plot_to_scenes("Two things happen.", 10.0, &mock, 4).unwrap();
        assert_eq!(out.scenes.len(), 2);
        assert!(out.scenes.iter().all(|s| s.scene_duration == 5.0));
        assert_eq!(out.scenes[1].full_description, "Somewhere. Part 2 happens.");
        assert_eq!(out.scenes[1].key_event_description, "Part 2 happens.");
    }

    #[test]
    fn director_can_add_a_scene() {
        let mock = MockBackend::from_responses([
            scenes(2),
            "Instruction: add a scene where the town rebuilds.".into(),
            scenes(3),
            "TASK_DONE.".into(),
        ]);
        let out = plot_to_scenes("A siege. A battle. A rebuild.", 9.0, &mock, 4).unwrap();
        assert_eq!(out.scenes.len(), 3);
        assert_eq!(out.transcript.rounds(), 2);
    }
}
