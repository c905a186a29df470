//! Plan documents exchanged between the planning agents.
//!
//! Each plan is a JSON object with a single `Scene` array whose entries use
//! capitalized keys (`ID`, `Layout`, `Start_time`, ...). Field order on
//! output follows the order the planners are prompted with, and documents are
//! pretty-printed with four-space indentation.

mod script;
mod validate;

use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use script::{parse_script, serialize_script, DialogueBlock, DialogueLine, ScriptDoc, ScriptScene};
pub use validate::{validate_mix_against, validate_plan, word_count, Issue, PlanValidationReport};

use crate::error::{Error, Result};

/// Seconds on the plan timeline.
///
/// Whole values are written as JSON integers so documents that use integer
/// times survive a round trip unchanged.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Seconds(pub f64);

impl Seconds {
    pub fn get(self) -> f64 {
        self.0
    }
}

impl From<f64> for Seconds {
    fn from(v: f64) -> Self {
        Seconds(v)
    }
}

impl fmt::Display for Seconds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Seconds {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.fract() == 0.0 && self.0.abs() < 1e15 {
            s.serialize_i64(self.0 as i64)
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Seconds {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        f64::deserialize(d).map(Seconds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    Foreground,
    Background,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TrackType {
    #[serde(rename = "On-screen")]
    OnScreen,
    Foley,
    Voice,
    Music,
}

impl TrackType {
    /// Lowercase token used in stem file names.
    pub fn file_stem(self) -> &'static str {
        match self {
            TrackType::OnScreen => "on_screen",
            TrackType::Foley => "foley",
            TrackType::Voice => "voice",
            TrackType::Music => "music",
        }
    }
}

impl fmt::Display for TrackType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrackType::OnScreen => "On-screen",
            TrackType::Foley => "Foley",
            TrackType::Voice => "Voice",
            TrackType::Music => "Music",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoleyPlanEntry {
    #[serde(rename = "ID")]
    pub id: String,
    #[serde(rename = "Layout")]
    pub layout: Layout,
    #[serde(rename = "Description")]
    pub description: String,
    #[serde(rename = "Start_time")]
    pub start_time: Seconds,
    #[serde(rename = "End_time")]
    pub end_time: Seconds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MusicPlanEntry {
    #[serde(rename = "ID")]
    pub id: String,
    #[serde(rename = "Layout")]
    pub layout: Layout,
    #[serde(rename = "Style")]
    pub style: String,
    #[serde(rename = "Description")]
    pub description: String,
    #[serde(rename = "Start_time")]
    pub start_time: Seconds,
    #[serde(rename = "End_time")]
    pub end_time: Seconds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoicePlanEntry {
    #[serde(rename = "ID")]
    pub id: String,
    #[serde(rename = "Layout")]
    pub layout: Layout,
    #[serde(rename = "Sex")]
    pub sex: Sex,
    #[serde(rename = "Dialogue")]
    pub dialogue: String,
    #[serde(rename = "Start_time")]
    pub start_time: Seconds,
    #[serde(rename = "End_time")]
    pub end_time: Seconds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixPlanEntry {
    #[serde(rename = "Type")]
    pub track_type: TrackType,
    #[serde(rename = "ID")]
    pub id: String,
    #[serde(rename = "Start_time")]
    pub start_time: Seconds,
    #[serde(rename = "End_time")]
    pub end_time: Seconds,
    #[serde(rename = "Volume")]
    pub volume_db: i64,
}

/// Common view over plan entries.
pub trait PlanEntry {
    fn id(&self) -> &str;
    fn start(&self) -> f64;
    fn end(&self) -> f64;
    fn duration(&self) -> f64 {
        self.end() - self.start()
    }
}

macro_rules! plan_entry {
    ($t:ty) => {
        impl PlanEntry for $t {
            fn id(&self) -> &str {
                &self.id
            }
            fn start(&self) -> f64 {
                self.start_time.0
            }
            fn end(&self) -> f64 {
                self.end_time.0
            }
        }
    };
}

plan_entry!(FoleyPlanEntry);
plan_entry!(MusicPlanEntry);
plan_entry!(VoicePlanEntry);
plan_entry!(MixPlanEntry);

/// A `{"Scene": [...]}` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Plan<E> {
    #[serde(rename = "Scene")]
    pub scene: Vec<E>,
}

impl<E> Default for Plan<E> {
    fn default() -> Self {
        Plan { scene: Vec::new() }
    }
}

impl<E> Plan<E> {
    pub fn new(scene: Vec<E>) -> Self {
        Plan { scene }
    }

    pub fn is_empty(&self) -> bool {
        self.scene.is_empty()
    }

    pub fn len(&self) -> usize {
        self.scene.len()
    }
}

pub type FoleyPlan = Plan<FoleyPlanEntry>;
pub type MusicPlan = Plan<MusicPlanEntry>;
pub type VoicePlan = Plan<VoicePlanEntry>;
pub type MixPlan = Plan<MixPlanEntry>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PlanKind {
    Foley,
    Music,
    Voice,
    Mix,
}

impl PlanKind {
    /// Whether a bare `N/A` reply is an acceptable (empty) plan.
    pub fn allows_not_applicable(self) -> bool {
        matches!(self, PlanKind::Music | PlanKind::Voice)
    }

    pub fn file_name(self) -> &'static str {
        match self {
            PlanKind::Foley => "foley.json",
            PlanKind::Music => "music.json",
            PlanKind::Voice => "voice.json",
            PlanKind::Mix => "mix.json",
        }
    }
}

impl fmt::Display for PlanKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlanKind::Foley => "foley",
            PlanKind::Music => "music",
            PlanKind::Voice => "voice",
            PlanKind::Mix => "mix",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnyPlan {
    Foley(FoleyPlan),
    Music(MusicPlan),
    Voice(VoicePlan),
    Mix(MixPlan),
}

impl AnyPlan {
    pub fn kind(&self) -> PlanKind {
        match self {
            AnyPlan::Foley(_) => PlanKind::Foley,
            AnyPlan::Music(_) => PlanKind::Music,
            AnyPlan::Voice(_) => PlanKind::Voice,
            AnyPlan::Mix(_) => PlanKind::Mix,
        }
    }

    pub fn empty(kind: PlanKind) -> AnyPlan {
        match kind {
            PlanKind::Foley => AnyPlan::Foley(Plan::default()),
            PlanKind::Music => AnyPlan::Music(Plan::default()),
            PlanKind::Voice => AnyPlan::Voice(Plan::default()),
            PlanKind::Mix => AnyPlan::Mix(Plan::default()),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            AnyPlan::Foley(p) => p.len(),
            AnyPlan::Music(p) => p.len(),
            AnyPlan::Voice(p) => p.len(),
            AnyPlan::Mix(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn is_not_applicable(text: &str) -> bool {
    text.trim().eq_ignore_ascii_case("n/a")
}

fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => Error::Schema(format!(
            "{e}"
        )),
        _ => Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        },
    })
}

/// Parses a planner response of the given kind.
pub fn parse_plan(kind: PlanKind, text: &str) -> Result<AnyPlan> {
    if kind.allows_not_applicable() && is_not_applicable(text) {
        return Ok(AnyPlan::empty(kind));
    }
    Ok(match kind {
        PlanKind::Foley => AnyPlan::Foley(from_json(text)?),
        PlanKind::Music => AnyPlan::Music(from_json(text)?),
        PlanKind::Voice => AnyPlan::Voice(from_json(text)?),
        PlanKind::Mix => AnyPlan::Mix(from_json(text)?),
    })
}

pub fn parse_foley_plan(text: &str) -> Result<FoleyPlan> {
    from_json(text)
}

pub fn parse_music_plan(text: &str) -> Result<MusicPlan> {
    if is_not_applicable(text) {
        return Ok(Plan::default());
    }
    from_json(text)
}

pub fn parse_voice_plan(text: &str) -> Result<VoicePlan> {
    if is_not_applicable(text) {
        return Ok(Plan::default());
    }
    from_json(text)
}

pub fn parse_mix_plan(text: &str) -> Result<MixPlan> {
    from_json(text)
}

/// Canonical text: four-space pretty JSON, keys in schema order, no trailing
/// newline. An empty plan is written as `{"Scene": []}`.
pub fn to_canonical_json<E: Serialize>(plan: &Plan<E>) -> String {
    if plan.scene.is_empty() {
        return r#"{"Scene": []}"#.to_string();
    }
    let mut out = Vec::new();
    let fmt = serde_json::ser::PrettyFormatter::with_indent(b"    ");
    let mut ser = serde_json::Serializer::with_formatter(&mut out, fmt);
    plan.serialize(&mut ser)
        .expect("plan serialization is infallible");
    String::from_utf8(out).expect("serde_json emits utf-8")
}

pub fn serialize_plan(plan: &AnyPlan) -> String {
    match plan {
        AnyPlan::Foley(p) => to_canonical_json(p),
        AnyPlan::Music(p) => to_canonical_json(p),
        AnyPlan::Voice(p) => to_canonical_json(p),
        AnyPlan::Mix(p) => to_canonical_json(p),
    }
}
