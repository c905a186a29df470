use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{AnyPlan, FoleyPlan, Layout, MixPlan, MusicPlan, Plan, PlanEntry, TrackType, VoicePlan};

pub const VOLUME_RANGE_DB: (i64, i64) = (-60, 0);
pub const VOICE_USUAL_DB: (i64, i64) = (-18, -12);
pub const BACKGROUND_USUAL_DB: (i64, i64) = (-45, -30);
pub const WORDS_PER_SECOND: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PlanValidationReport {
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
}

impl PlanValidationReport {
    pub fn is_accepted(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn error(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.errors.push(Issue {
            path: path.into(),
            message: message.into(),
        });
    }

    pub fn warn(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.warnings.push(Issue {
            path: path.into(),
            message: message.into(),
        });
    }

    pub fn merge(&mut self, other: PlanValidationReport) {
        self.errors.extend(other.errors);
        self.warnings.extend(other.warnings);
    }

    /// Human-readable listing used as revision feedback.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        for e in &self.errors {
            out.push_str(&format!("- error at {}: {}\n", e.path, e.message));
        }
        for w in &self.warnings {
            out.push_str(&format!("- warning at {}: {}\n", w.path, w.message));
        }
        out
    }
}

/// Whitespace-separated token count; punctuation stays attached.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

fn check_timing<E: PlanEntry>(report: &mut PlanValidationReport, plan: &Plan<E>, scene_duration: f64) {
    for (i, e) in plan.scene.iter().enumerate() {
        let path = format!("Scene[{i}]");
        if !(e.start().is_finite() && e.end().is_finite()) {
            report.error(&path, "times must be finite numbers");
            continue;
        }
        if e.start() < 0.0 {
            report.error(format!("{path}.Start_time"), "start time must be non-negative");
        }
        if e.start() >= e.end() {
            report.error(
                format!("{path}.End_time"),
                format!("end time {} must be after start time {}", e.end(), e.start()),
            );
        }
        if e.end() > scene_duration {
            report.error(
                format!("{path}.End_time"),
                format!("end time {} exceeds scene duration {scene_duration}", e.end()),
            );
        }
        if e.id().trim().is_empty() {
            report.error(format!("{path}.ID"), "ID must not be empty");
        }
    }
}

fn check_unique_ids<E: PlanEntry>(report: &mut PlanValidationReport, plan: &Plan<E>) {
    let mut seen = HashSet::new();
    for (i, e) in plan.scene.iter().enumerate() {
        if !seen.insert(e.id()) {
            report.error(format!("Scene[{i}].ID"), format!("duplicate ID {:?}", e.id()));
        }
    }
}

fn validate_foley(report: &mut PlanValidationReport, plan: &FoleyPlan) {
    check_unique_ids(report, plan);
    for (i, e) in plan.scene.iter().enumerate() {
        if e.description.trim().is_empty() {
            report.error(format!("Scene[{i}].Description"), "description must not be empty");
        }
    }
}

fn validate_music(report: &mut PlanValidationReport, plan: &MusicPlan) {
    check_unique_ids(report, plan);
    for (i, e) in plan.scene.iter().enumerate() {
        if e.layout != Layout::Background {
            report.error(format!("Scene[{i}].Layout"), "music layout must be background");
        }
        if e.description.trim().is_empty() {
            report.error(format!("Scene[{i}].Description"), "description must not be empty");
        }
    }
}

fn validate_voice(report: &mut PlanValidationReport, plan: &VoicePlan) {
    check_unique_ids(report, plan);
    for (i, e) in plan.scene.iter().enumerate() {
        if e.layout != Layout::Foreground {
            report.error(format!("Scene[{i}].Layout"), "voice layout must be foreground");
        }
        let words = word_count(&e.dialogue);
        if words == 0 {
            report.error(format!("Scene[{i}].Dialogue"), "dialogue must not be empty");
        }
        let budget = (WORDS_PER_SECOND * e.duration()).ceil();
        if e.duration() > 0.0 && words as f64 > budget {
            report.error(
                format!("Scene[{i}].Dialogue"),
                format!(
                    "dialogue has {words} words but {:.3} s allows at most {budget} at two words per second",
                    e.duration()
                ),
            );
        }
    }
}

fn validate_mix(report: &mut PlanValidationReport, plan: &MixPlan) {
    let mut seen = HashSet::new();
    for (i, e) in plan.scene.iter().enumerate() {
        if !seen.insert((e.track_type, e.id.as_str())) {
            report.error(
                format!("Scene[{i}].ID"),
                format!("duplicate track {} {:?}", e.track_type, e.id),
            );
        }
        let (lo, hi) = VOLUME_RANGE_DB;
        if !(lo..=hi).contains(&e.volume_db) {
            report.error(
                format!("Scene[{i}].Volume"),
                format!("volume {} dB outside [{lo}, {hi}]", e.volume_db),
            );
            continue;
        }
        match e.track_type {
            TrackType::Voice => usual_band(report, i, e.volume_db, VOICE_USUAL_DB, "speech"),
            TrackType::Music => usual_band(report, i, e.volume_db, BACKGROUND_USUAL_DB, "background"),
            _ => {}
        }
    }
}

fn usual_band(report: &mut PlanValidationReport, i: usize, volume: i64, (lo, hi): (i64, i64), what: &str) {
    if !(lo..=hi).contains(&volume) {
        report.warn(
            format!("Scene[{i}].Volume"),
            format!("{what} volume {volume} dB is outside the usual [{lo}, {hi}] band"),
        );
    }
}

/// Checks a parsed plan against its schema rules and the scene length.
pub fn validate_plan(plan: &AnyPlan, scene_duration: f64) -> PlanValidationReport {
    let mut report = PlanValidationReport::default();
    if !(scene_duration.is_finite() && scene_duration > 0.0) {
        report.error("", format!("scene duration {scene_duration} must be positive"));
        return report;
    }
    match plan {
        AnyPlan::Foley(p) => {
            check_timing(&mut report, p, scene_duration);
            validate_foley(&mut report, p);
        }
        AnyPlan::Music(p) => {
            check_timing(&mut report, p, scene_duration);
            validate_music(&mut report, p);
        }
        AnyPlan::Voice(p) => {
            check_timing(&mut report, p, scene_duration);
            validate_voice(&mut report, p);
        }
        AnyPlan::Mix(p) => {
            check_timing(&mut report, p, scene_duration);
            validate_mix(&mut report, p);
        }
    }
    report
}

/// Cross-checks a mix plan against the plans whose tracks it places.
///
/// Every mixed track must exist; `on_screen_ids` lists the on-screen tracks
/// available for the scene. Background Foley outside the usual band and
/// planned tracks missing from the mix are reported as warnings.
pub fn validate_mix_against(
    mix: &MixPlan,
    foley: &FoleyPlan,
    music: &MusicPlan,
    voice: &VoicePlan,
    on_screen_ids: &[String],
) -> PlanValidationReport {
    let mut report = PlanValidationReport::default();
    let mut available: HashMap<(TrackType, &str), Option<Layout>> = HashMap::new();
    for e in &foley.scene {
        available.insert((TrackType::Foley, e.id.as_str()), Some(e.layout));
    }
    for e in &music.scene {
        available.insert((TrackType::Music, e.id.as_str()), Some(Layout::Background));
    }
    for e in &voice.scene {
        available.insert((TrackType::Voice, e.id.as_str()), Some(Layout::Foreground));
    }
    for id in on_screen_ids {
        available.insert((TrackType::OnScreen, id.as_str()), None);
    }

    let mut mixed = HashSet::new();
    for (i, e) in mix.scene.iter().enumerate() {
        let key = (e.track_type, e.id.as_str());
        mixed.insert(key);
        match available.get(&key) {
            None => report.error(
                format!("Scene[{i}]"),
                format!("no {} track with ID {:?} exists", e.track_type, e.id),
            ),
            Some(Some(Layout::Background)) if e.track_type == TrackType::Foley => {
                usual_band(&mut report, i, e.volume_db, BACKGROUND_USUAL_DB, "background")
            }
            _ => {}
        }
    }
    for id in on_screen_ids {
        if !mixed.contains(&(TrackType::OnScreen, id.as_str())) {
            report.error("Scene", format!("on-screen track {id:?} is missing from the mix"));
        }
    }
    let mut planned: Vec<_> = available.keys().filter(|k| !mixed.contains(*k)).collect();
    planned.sort();
    for (t, id) in planned {
        if *t != TrackType::OnScreen {
            report.warn("Scene", format!("{t} track {id:?} is planned but not mixed"));
        }
    }
    report
}
