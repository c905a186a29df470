use reelwave_core::plans::{
    parse_plan, parse_script, serialize_plan, serialize_script, validate_mix_against, validate_plan, AnyPlan,
    PlanKind, TrackType,
};
use reelwave_core::synthesis::{plan_jobs, render_jobs, GeneratorSet};

const SCRIPT: &str = include_str!("fixtures/script_spaceship.txt");
const FOLEY: &str = include_str!("fixtures/foley_plan.json");
const MUSIC: &str = include_str!("fixtures/music_plan.json");
const VOICE: &str = include_str!("fixtures/voice_plan.json");
const MIX: &str = include_str!("fixtures/mix_plan.json");

fn plans() -> [(PlanKind, &'static str); 4] {
    [
        (PlanKind::Foley, FOLEY),
        (PlanKind::Music, MUSIC),
        (PlanKind::Voice, VOICE),
        (PlanKind::Mix, MIX),
    ]
}

#[test]
fn plans_round_trip_byte_identically() {
    for (kind, text) in plans() {
        let plan = parse_plan(kind, text).unwrap();
        assert_eq!(serialize_plan(&plan), text, "{kind:?}");
    }
}

#[test]
fn script_round_trips_byte_identically() {
    let doc = parse_script(SCRIPT).unwrap();
    assert_eq!(serialize_script(&doc), SCRIPT);
    let scene = &doc.scenes[0];
    assert_eq!(scene.characters, ["THE ALIEN", "COMPUTER SYSTEM"]);
    assert_eq!(scene.dialogue.len(), 3);
    let last = &scene.dialogue[2].lines;
    assert!(last[0].unterminated);
    assert_eq!(last[1].text, None);
    assert!(last[1].action.as_deref().unwrap().starts_with("Spaceship hurtles"));
}

#[test]
fn plans_validate_except_voice_word_rate() {
    for (kind, text) in plans() {
        let plan = parse_plan(kind, text).unwrap();
        let report = validate_plan(&plan, 5.0);
        if kind == PlanKind::Voice {
            // 11 words over 4 s exceeds the two-words-per-second budget of 8.
            assert_eq!(report.errors.len(), 1, "{}", report.describe());
            assert!(report.errors[0].message.contains("11 words"));
        } else {
            assert!(report.is_accepted(), "{kind:?}: {}", report.describe());
        }
    }
}

#[test]
fn mix_references_resolve() {
    let AnyPlan::Foley(foley) = parse_plan(PlanKind::Foley, FOLEY).unwrap() else { unreachable!() };
    let AnyPlan::Music(music) = parse_plan(PlanKind::Music, MUSIC).unwrap() else { unreachable!() };
    let AnyPlan::Voice(voice) = parse_plan(PlanKind::Voice, VOICE).unwrap() else { unreachable!() };
    let AnyPlan::Mix(mix) = parse_plan(PlanKind::Mix, MIX).unwrap() else { unreachable!() };
    let report = validate_mix_against(&mix, &foley, &music, &voice, &["1".to_string()]);
    assert!(report.is_accepted(), "{}", report.describe());
    let volumes: Vec<i64> = mix.scene.iter().map(|e| e.volume_db).collect();
    assert_eq!(volumes, [-15, -30, -15, -35]);
    assert_eq!(mix.scene[0].track_type, TrackType::OnScreen);
}

#[test]
fn foley_stems_match_entry_lengths() {
    let plan = parse_plan(PlanKind::Foley, FOLEY).unwrap();
    let jobs = plan_jobs(&plan, 5.0, 16000, 42).unwrap();
    let out = render_jobs(&jobs, &GeneratorSet::mock());
    let lens: Vec<usize> = out.values().map(|r| r.as_ref().unwrap().len()).collect();
    assert_eq!(lens, [48000, 32000]);
}
