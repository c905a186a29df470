use reelwave_core::agents::{
    run_planner, run_scene_pipeline, AgentRole, MockBackend, PlannerInputs, SceneContext, Termination,
    TemplateBackend,
};
use reelwave_core::plans::{validate_plan, AnyPlan};
use serde::Deserialize;

const CONVERSATION: &str = include_str!("fixtures/war_scene_conversation.jsonl");
const CONTEXT: &str = include_str!("fixtures/war_scene_context.json");

#[derive(Deserialize)]
struct ContextFile {
    scenes: Vec<SceneContext>,
}

fn war_scene() -> SceneContext {
    serde_json::from_str::<ContextFile>(CONTEXT).unwrap().scenes.remove(0)
}

#[test]
fn scripted_conversation_produces_revised_plans() {
    let mock = MockBackend::from_jsonl(CONVERSATION).unwrap();
    let bundle = run_scene_pipeline(&war_scene(), "scene_01", &mock, 4, None).unwrap();
    assert_eq!(mock.remaining(), 0);

    assert_eq!(bundle.foley.scene.len(), 3);
    assert_eq!(bundle.music.scene[1].style, "Choral, Ominous");
    assert!(bundle.voice.is_empty());
    assert_eq!(bundle.mix.scene.len(), 6);

    for role in [AgentRole::ScriptWriter, AgentRole::FoleyArtist, AgentRole::Composer] {
        let t = bundle.transcript(role).unwrap();
        assert_eq!(t.rounds(), 2, "{role}");
        assert_eq!(t.terminated_by, Some(Termination::TaskDone));
        assert!(t.director_turns().next().unwrap().content.starts_with("Instruction:"));
    }
    for role in [AgentRole::VoiceActor, AgentRole::Mixer] {
        assert_eq!(bundle.transcript(role).unwrap().rounds(), 1, "{role}");
    }
    for plan in [AnyPlan::Foley(bundle.foley.clone()), AnyPlan::Music(bundle.music.clone())] {
        assert!(validate_plan(&plan, 6.0).is_accepted());
    }
}

#[test]
fn invalid_draft_feedback_is_recorded() {
    let too_long = r#"{"Scene": [{"ID": "1", "Layout": "background", "Description": "Wind", "Start_time": 0, "End_time": 9}]}"#;
    let fixed = r#"{"Scene": [{"ID": "1", "Layout": "background", "Description": "Wind", "Start_time": 0, "End_time": 6}]}"#;
    let mock = MockBackend::from_responses([too_long, fixed, "TASK_DONE"]);
    let t = run_planner(AgentRole::FoleyArtist, "scene_01", &war_scene(), &PlannerInputs::default(), &mock, 4).unwrap();
    assert_eq!(t.rounds(), 2);
    let feedback = t.director_turns().next().unwrap();
    assert!(feedback.prompt.is_none());
    assert!(feedback.content.contains("End_time"), "{}", feedback.content);
    assert!(t.final_artifact.as_deref().unwrap().contains("\"End_time\": 6"));
}

#[test]
fn never_approved_stops_at_max_rounds() {
    let draft = r#"{"Scene": [{"ID": "1", "Layout": "background", "Style": "Ambient", "Description": "Pads", "Start_time": 0, "End_time": 6}]}"#;
    let mock = MockBackend::from_responses([draft, "Instruction: more strings."]);
    let t = run_planner(AgentRole::Composer, "scene_01", &war_scene(), &PlannerInputs::default(), &mock, 1).unwrap();
    assert_eq!(t.terminated_by, Some(Termination::MaxRounds));
    assert!(t.final_artifact.is_some());
}

#[test]
fn template_pipeline_is_bit_reproducible() {
    let a = run_scene_pipeline(&war_scene(), "scene_01", &TemplateBackend, 4, None).unwrap();
    let b = run_scene_pipeline(&war_scene(), "scene_01", &TemplateBackend, 4, None).unwrap();
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    a.write(da.path()).unwrap();
    b.write(db.path()).unwrap();
    for name in ["script.txt", "foley.json", "music.json", "voice.json", "mix.json", "context.json"] {
        let fa = std::fs::read(da.path().join(name)).unwrap();
        let fb = std::fs::read(db.path().join(name)).unwrap();
        assert_eq!(fa, fb, "{name}");
    }
}
