//! Acceptance checks, one line per criterion. Runs as a plain binary so the
//! report is printed on every `cargo test`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use reelwave_core::agents::{
    run_planner, run_scene_pipeline, AgentRole, MockBackend, PlannerInputs, SceneBundle, SceneContext, Termination,
};
use reelwave_core::conditioning::{attention, decoupled_attention, softmax_rows, AttentionProjections};
use reelwave_core::control_signals::{
    centroid_hz, extract_pitch, loudness_db_unclamped, median_filter, prepare_target, LoudnessWeighting, PitchConfig,
    StftConfig,
};
use reelwave_core::media_io::read_wav;
use reelwave_core::metrics::{av_align, default_hop, detect_onsets, energy_mae, onset_accuracy};
use reelwave_core::mixer::{gain_to_target, measure_loudness_lufs, mix, Timeline, TimelineTrack, MIX_PEAK_CEILING};
use reelwave_core::plans::{
    parse_plan, parse_script, serialize_plan, serialize_script, validate_mix_against, validate_plan, AnyPlan,
    PlanEntry, PlanKind, TrackType,
};
use reelwave_core::scene_detect::{detect_scenes, SceneDetectConfig};
use reelwave_core::synthesis::{mock_render, sample_count, stem_path, RenderRequest};
use reelwave_core::{AudioBuffer, ControlSignal, FrameEmbeddingSequence};
use rustfft::{num_complex::Complex, FftPlanner};

const SR: u32 = 16_000;
const SCENE_NOISE_SIGMA: f64 = 0.01;
const SCENE_PERF_BUDGET: Duration = Duration::from_secs(1);
const PITCH_CENTS: f64 = 10.0;
const PITCH_VOICED_FRACTION: f64 = 0.95;
const NOISE_UNVOICED_FRACTION: f64 = 0.90;
const PITCH_BUDGET: Duration = Duration::from_secs(2);
const CENTROID_SINE_REL: f64 = 0.03;
const CENTROID_NOISE_HZ: f64 = 4000.0;
const CENTROID_NOISE_REL: f64 = 0.10;
const GAIN_STEP_DB: f64 = -6.02;
const GAIN_STEP_TOL_DB: f64 = 0.05;
const A_VS_FLAT_TOL_DB: f64 = 0.2;
const ATTENTION_TOL: f64 = 1e-9;
const HAND_EXAMPLE: [f64; 2] = [0.6698, 0.3302];
const HAND_EXAMPLE_TOL: f64 = 1e-3;
const LUFS_FULL_SCALE: f64 = -3.01;
const LUFS_MINUS_20: f64 = -23.01;
const LUFS_TOL: f64 = 0.1;
const GAIN_TARGET_TOL_LU: f64 = 0.5;
const ONSET_TOL_SEC: f64 = 0.05;
const AV_TOL_SEC: f64 = 0.1;
const SHIFT_SEC: f64 = 0.2;
const OFFSET_TOL_SEC: f64 = 0.010;
const SUITE_BUDGET: Duration = Duration::from_secs(120);

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {{
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($arg)+));
        }
    }};
}

fn ok<T>(r: reelwave_core::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

fn sine(hz: f64, secs: f64, amp: f64, sr: u32) -> AudioBuffer {
    let n = (secs * sr as f64).round() as usize;
    let s = (0..n)
        .map(|i| (amp * (2.0 * std::f64::consts::PI * hz * i as f64 / sr as f64).sin()) as f32)
        .collect();
    AudioBuffer::new(s, sr).unwrap()
}

fn white_noise(secs: f64, seed: u64) -> AudioBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (secs * SR as f64) as usize;
    AudioBuffer::new((0..n).map(|_| rng.gen_range(-0.5f32..0.5)).collect(), SR).unwrap()
}

fn interior<T>(v: &[T]) -> &[T] {
    // Reflect padding alters the first and last two STFT frames.
    &v[2..v.len() - 2]
}

/// Orthonormal block vectors plus Gaussian noise; returns the sequence and
/// the true scene starts.
fn block_sequence(rng: &mut ChaCha8Rng, frames: usize, blocks: usize, dim: usize) -> (FrameEmbeddingSequence, Vec<usize>) {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    while basis.len() < blocks {
        let mut v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        basis.push(v);
    }
    let min_len = frames / (2 * blocks);
    let mut starts = vec![0];
    for _ in 1..blocks {
        let last = *starts.last().unwrap();
        let remaining = blocks - starts.len();
        let hi = frames - remaining * min_len;
        starts.push(rng.gen_range(last + min_len..=hi));
    }
    let noise = Normal::new(0.0, SCENE_NOISE_SIGMA).unwrap();
    let rows: Vec<Vec<f32>> = (0..frames)
        .map(|t| {
            let b = starts.iter().rposition(|&s| s <= t).unwrap();
            basis[b].iter().map(|&x| (x + noise.sample(rng)) as f32).collect()
        })
        .collect();
    (FrameEmbeddingSequence::from_rows(&rows, 25.0).unwrap(), starts[1..].to_vec())
}

fn scene_detection_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = SceneDetectConfig::default();
    for trial in 0..10 {
        let frames = rng.gen_range(50..=500);
        let blocks = 2 + trial % 2;
        let (seq, truth) = block_sequence(&mut rng, frames, blocks, 16);
        let found = ok(detect_scenes(&seq, &cfg))?.peaks();
        ensure!(found == truth, "trial {trial} (T={frames}): found {found:?}, expected {truth:?}");
    }
    let (big, truth) = block_sequence(&mut rng, 2000, 3, 512);
    let start = Instant::now();
    let found = ok(detect_scenes(&big, &cfg))?.peaks();
    let took = start.elapsed();
    ensure!(found == truth, "T=2000: found {found:?}, expected {truth:?}");
    ensure!(took < SCENE_PERF_BUDGET, "T=2000, D=512 took {took:?}");
    Ok(format!("10/10 exact; T=2000 D=512 in {:.0} ms", took.as_secs_f64() * 1e3))
}

fn scene_detection_scale_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = SceneDetectConfig::default();
    for trial in 0..5 {
        let (seq, _) = block_sequence(&mut rng, 300, 2 + trial % 2, 16);
        let base = ok(detect_scenes(&seq, &cfg))?;
        for c in [0.1f32, 10.0] {
            let scaled: Vec<Vec<f32>> = seq.rows().map(|r| r.iter().map(|x| x * c).collect()).collect();
            let scaled = ok(FrameEmbeddingSequence::from_rows(&scaled, 25.0))?;
            let got = ok(detect_scenes(&scaled, &cfg))?;
            ensure!(got == base, "trial {trial}, c={c}: {:?} vs {:?}", got.segments, base.segments);
        }
    }
    Ok("boundaries identical for c in {0.1, 10}".into())
}

fn pitch_tracking() -> Outcome {
    let cfg = PitchConfig::default();
    let start = Instant::now();
    let tone = ok(extract_pitch(&sine(440.0, 2.0, 0.5, SR), &cfg))?;
    let took = start.elapsed();
    let within = tone.iter().filter(|&&m| m != 0.0 && ((m - 69.0) * 100.0).abs() <= PITCH_CENTS).count();
    let voiced = within as f64 / tone.len() as f64;
    let noise = ok(extract_pitch(&white_noise(2.0, 3), &cfg))?;
    let unvoiced = noise.iter().filter(|&&m| m == 0.0).count() as f64 / noise.len() as f64;
    ensure!(voiced >= PITCH_VOICED_FRACTION, "only {:.1}% of sine frames within 10 cents", voiced * 100.0);
    ensure!(unvoiced >= NOISE_UNVOICED_FRACTION, "only {:.1}% of noise frames unvoiced", unvoiced * 100.0);
    ensure!(took < PITCH_BUDGET, "2 s sine took {took:?}");
    Ok(format!(
        "sine {:.1}% within 10 cents, noise {:.1}% unvoiced, {:.0} ms",
        voiced * 100.0,
        unvoiced * 100.0,
        took.as_secs_f64() * 1e3
    ))
}

fn spectral_centroid() -> Outcome {
    let cfg = StftConfig::default();
    let mut worst: f64 = 0.0;
    for f in [440.0, 1000.0, 3000.0] {
        let c = ok(centroid_hz(&sine(f, 1.0, 0.5, SR), &cfg))?;
        for (i, v) in interior(&c).iter().enumerate() {
            let v = v.ok_or(format!("{f} Hz frame {i} has no centroid"))?;
            let rel = (v - f).abs() / f;
            worst = worst.max(rel);
            ensure!(rel <= CENTROID_SINE_REL, "{f} Hz frame {}: centroid {v:.1} Hz", i + 2);
        }
    }
    let c = ok(centroid_hz(&white_noise(1.0, 5), &cfg))?;
    let mut noise_worst: f64 = 0.0;
    for v in interior(&c) {
        let v = v.ok_or("noise frame has no centroid")?;
        let rel = (v - CENTROID_NOISE_HZ).abs() / CENTROID_NOISE_HZ;
        noise_worst = noise_worst.max(rel);
        ensure!(rel <= CENTROID_NOISE_REL, "noise centroid {v:.0} Hz");
    }
    Ok(format!(
        "sines within {:.2}%, noise within {:.2}% of 4 kHz",
        worst * 100.0,
        noise_worst * 100.0
    ))
}

fn loudness_equivariance() -> Outcome {
    let cfg = StftConfig::default();
    let noise = white_noise(1.0, 9);
    let tone = sine(1000.0, 1.0, 0.5, SR);
    let gain = 10f64.powf(GAIN_STEP_DB / 20.0) as f32;
    let mut worst: f64 = 0.0;
    for audio in [&noise, &tone] {
        let a = ok(loudness_db_unclamped(audio, &cfg, LoudnessWeighting::A))?;
        let b = ok(loudness_db_unclamped(&audio.scaled(gain), &cfg, LoudnessWeighting::A))?;
        for (x, y) in a.iter().zip(&b) {
            let err = (y - x - GAIN_STEP_DB).abs();
            worst = worst.max(err);
            ensure!(err <= GAIN_STEP_TOL_DB, "shift {:.3} dB", y - x);
        }
    }
    let weighted = ok(loudness_db_unclamped(&tone, &cfg, LoudnessWeighting::A))?;
    let flat = ok(loudness_db_unclamped(&tone, &cfg, LoudnessWeighting::Flat))?;
    let mut gap: f64 = 0.0;
    for (a, f) in interior(&weighted).iter().zip(interior(&flat)) {
        gap = gap.max((a - f).abs());
    }
    ensure!(gap <= A_VS_FLAT_TOL_DB, "A-weighted vs flat differ by {gap:.3} dB at 1 kHz");
    Ok(format!("shift error <= {worst:.4} dB; 1 kHz A vs flat {gap:.3} dB"))
}

fn target_preparation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let n = 157;
    let track = |rng: &mut ChaCha8Rng, lo: f32, hi: f32| -> Vec<f32> { (0..n).map(|_| rng.gen_range(lo..hi)).collect() };
    let sig = ok(ControlSignal::new(
        track(&mut rng, -80.0, 0.0),
        track(&mut rng, 12.0, 132.0),
        track(&mut rng, 12.0, 135.0),
        62.5,
    ))?;
    let prepared = ok(prepare_target(&sig, n, 1))?;
    for (col, t) in [&sig.loudness_db, &sig.pitch_midi, &sig.centroid_midi].into_iter().enumerate() {
        for (i, &v) in t.iter().enumerate() {
            ensure!(prepared[(i, col)].to_bits() == (v as f64).to_bits(), "column {col} row {i} changed");
        }
    }
    for width in [1, 2] {
        let mut spike = vec![0.0; 40];
        spike[20..20 + width].iter_mut().for_each(|v| *v = 50.0);
        let filtered = ok(median_filter(&spike, 5))?;
        ensure!(filtered.iter().all(|&v| v == 0.0), "width-{width} impulse survived");
    }
    Ok("window 1 + same-length resize is bit-exact; width 1-2 impulses removed".into())
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

fn decoupled_cross_attention() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let z = random_matrix(&mut rng, 3, 4);
        let c_txt = random_matrix(&mut rng, 5, 4);
        let c_ctrl = random_matrix(&mut rng, 6, 4);
        let proj = ok(AttentionProjections::new(
            random_matrix(&mut rng, 4, 4),
            random_matrix(&mut rng, 4, 4),
            random_matrix(&mut rng, 4, 4),
            random_matrix(&mut rng, 4, 4),
            random_matrix(&mut rng, 4, 4),
        ))?;
        let q = &z * &proj.w_q_txt;
        let single = ok(attention(&q, &(&c_txt * &proj.w_k_txt), &(&c_txt * &proj.w_v_txt)))?;
        let at = |l: f64| decoupled_attention(&z, &c_txt, &c_ctrl, &proj, l).map_err(|e| e.to_string());
        let (o0, o1) = (at(0.0)?, at(1.0)?);
        let zero_err = (&o0 - &single).amax();
        ensure!(zero_err <= ATTENTION_TOL, "trial {trial}: lambda=0 differs by {zero_err:e}");
        let lambda = rng.gen_range(0.0..2.0);
        let affine_err = (at(lambda)? - (&o0 + (&o1 - &o0) * lambda)).amax();
        ensure!(affine_err <= ATTENTION_TOL, "trial {trial}: affine identity off by {affine_err:e}");
        let logits = random_matrix(&mut rng, 3, 4) * 10.0;
        let sm = softmax_rows(&logits);
        for r in 0..3 {
            let err = (sm.row(r).sum() - 1.0).abs();
            ensure!(err <= ATTENTION_TOL, "softmax row sums to 1 + {err:e}");
        }
        worst = worst.max(zero_err).max(affine_err);
    }
    let q = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let kv = DMatrix::identity(2, 2);
    let out = ok(attention(&q, &kv, &kv))?;
    for (i, want) in HAND_EXAMPLE.iter().enumerate() {
        ensure!((out[(0, i)] - want).abs() <= HAND_EXAMPLE_TOL, "hand example gave {}", out[(0, i)]);
    }
    Ok(format!("100 instances, max error {worst:.1e}; hand example [{:.4}, {:.4}]", out[(0, 0)], out[(0, 1)]))
}

fn golden_plans() -> Outcome {
    let script = read_fixture("script_spaceship.txt");
    ensure!(serialize_script(&ok(parse_script(&script))?) == script, "script does not round-trip");
    let mut flagged = Vec::new();
    let mut parsed = Vec::new();
    for (kind, name) in [
        (PlanKind::Foley, "foley_plan.json"),
        (PlanKind::Music, "music_plan.json"),
        (PlanKind::Voice, "voice_plan.json"),
        (PlanKind::Mix, "mix_plan.json"),
    ] {
        let text = read_fixture(name);
        let plan = ok(parse_plan(kind, &text))?;
        ensure!(serialize_plan(&plan) == text, "{name} does not round-trip");
        let report = validate_plan(&plan, 5.0);
        match kind {
            PlanKind::Voice => {
                ensure!(
                    report.errors.len() == 1 && report.errors[0].message.contains("two words per second"),
                    "voice plan: {}",
                    report.describe()
                );
                flagged.push("voice word rate");
            }
            _ => ensure!(report.is_accepted(), "{name}: {}", report.describe()),
        }
        parsed.push(plan);
    }
    let [AnyPlan::Foley(f), AnyPlan::Music(m), AnyPlan::Voice(v), AnyPlan::Mix(x)] = &parsed[..] else {
        unreachable!()
    };
    let cross = validate_mix_against(x, f, m, v, &["1".to_string()]);
    ensure!(cross.is_accepted(), "mix references: {}", cross.describe());
    Ok(format!("script + 4 plans round-trip byte-identically; flagged: {}", flagged.join(", ")))
}

fn war_scene() -> SceneContext {
    let v: serde_json::Value = serde_json::from_str(&read_fixture("war_scene_context.json")).unwrap();
    serde_json::from_value(v["scenes"][0].clone()).unwrap()
}

fn agent_loop() -> Outcome {
    let max_rounds = 4;
    let mock = ok(MockBackend::from_jsonl(&read_fixture("war_scene_conversation.jsonl")))?;
    let bundle = ok(run_scene_pipeline(&war_scene(), "scene_01", &mock, max_rounds, None))?;
    for t in &bundle.transcripts {
        ensure!(t.rounds() <= max_rounds, "{} ran {} rounds", t.role, t.rounds());
        ensure!(t.terminated_by == Some(Termination::TaskDone), "{} not approved", t.role);
    }

    let bad = r#"{"Scene": [{"ID": "1", "Layout": "background", "Description": "Wind", "Start_time": 0, "End_time": 9}]}"#;
    let good = r#"{"Scene": [{"ID": "1", "Layout": "background", "Description": "Wind", "Start_time": 0, "End_time": 6}]}"#;
    let mock = MockBackend::from_responses([bad, good, "TASK_DONE"]);
    let t = ok(run_planner(AgentRole::FoleyArtist, "s", &war_scene(), &PlannerInputs::default(), &mock, max_rounds))?;
    let AnyPlan::Foley(plan) = ok(parse_plan(PlanKind::Foley, t.final_artifact.as_deref().unwrap_or("")))? else {
        unreachable!()
    };
    ensure!(plan.scene[0].end_time.0 == 6.0, "accepted the wrong draft");
    let feedback = t.director_turns().next().map(|e| e.content.clone()).unwrap_or_default();
    ensure!(feedback.contains("End_time"), "validation feedback missing from transcript");

    let mock = MockBackend::from_responses(["N/A", "TASK_DONE"]);
    let t = ok(run_planner(AgentRole::Composer, "s", &war_scene(), &PlannerInputs::default(), &mock, max_rounds))?;
    ensure!(t.final_artifact.as_deref() == Some(r#"{"Scene": []}"#), "N/A gave {:?}", t.final_artifact);

    let dir = tempfile::tempdir().unwrap();
    let ctx = write_context(dir.path(), 5.0);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    cli(&["pipeline", "--context", p(&ctx), "-o", p(&a)])?;
    cli(&["pipeline", "--context", p(&ctx), "-o", p(&b)])?;
    let files = collect_files(&a);
    for rel in &files {
        let (x, y) = (std::fs::read(a.join(rel)), std::fs::read(b.join(rel)));
        ensure!(matches!((&x, &y), (Ok(x), Ok(y)) if x == y), "{} differs between runs", rel.display());
    }
    Ok(format!("scripted run approved within {max_rounds} rounds; feedback recorded; N/A empty; {} files identical", files.len()))
}

fn collect_files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn mixer_loudness() -> Outcome {
    let mut readings = Vec::new();
    for sr in [48_000, SR] {
        for (amp, want) in [(1.0, LUFS_FULL_SCALE), (0.1, LUFS_MINUS_20)] {
            let got = ok(measure_loudness_lufs(&sine(997.0, 5.0, amp, sr)))?.lufs().ok_or("measured silent")?;
            ensure!((got - want).abs() <= LUFS_TOL, "{sr} Hz amp {amp}: {got:.3} LUFS, expected {want}");
            readings.push(format!("{got:.2}"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for _ in 0..5 {
        let target = rng.gen_range(-45.0..-10.0);
        let staged = ok(gain_to_target(&white_noise(2.0, rng.gen()), target))?;
        let got = ok(measure_loudness_lufs(&staged.audio))?.lufs().ok_or("staged silent")?;
        ensure!((got - target).abs() <= GAIN_TARGET_TOL_LU, "gain_to_target({target:.1}) gave {got:.2}");
    }

    let AnyPlan::Mix(plan) = ok(parse_plan(PlanKind::Mix, &read_fixture("mix_plan.json")))? else { unreachable!() };
    let descriptions = ["Explosions", "Projectiles whistling", "We must save the town", "Orchestral dramatic"];
    let tracks = plan
        .scene
        .iter()
        .zip(descriptions)
        .enumerate()
        .map(|(i, (e, d))| {
            let audio = mock_render(&RenderRequest {
                description: d.into(),
                style: None,
                duration_sec: e.duration(),
                control: None,
                sample_rate_hz: SR,
                seed: i as u64,
            })
            .map_err(|e| e.to_string())?;
            Ok(TimelineTrack { entry: e.clone(), audio })
        })
        .collect::<Result<Vec<_>, String>>()?;
    let (out, report) = ok(mix(&Timeline { total_duration: 5.0, tracks }, SR))?;
    for t in &report.tracks {
        let got = t.measured_lufs.lufs().ok_or("stem silent")?;
        ensure!((got - t.target_lufs).abs() <= GAIN_TARGET_TOL_LU, "{} {}: {got:.2} vs {}", t.track_type, t.id, t.target_lufs);
    }
    let peak = out.peak();
    ensure!(peak <= MIX_PEAK_CEILING, "mix peak {peak}");
    ensure!(out.len() == 80_000, "mix length {}", out.len());
    Ok(format!("997 Hz sines {} LUFS; stems on target; peak {peak:.3}", readings.join("/")))
}

fn clicks(times: &[f64], secs: f64) -> AudioBuffer {
    let mut s = vec![0.0f32; (secs * SR as f64) as usize];
    for &t in times {
        let i = (t * SR as f64).round() as usize;
        for k in 0..32 {
            s[i + k] = 0.8 * (1.0 - k as f32 / 32.0);
        }
    }
    AudioBuffer::new(s, SR).unwrap()
}

fn metrics_identities() -> Outcome {
    let times = [0.5, 1.0, 1.5];
    let a = clicks(&times, 2.0);
    let hop = default_hop(SR);
    let onsets = detect_onsets(&a, hop, 0.3);
    ensure!(onsets.len() == 3, "detected {} clicks", onsets.len());
    let acc = onset_accuracy(&onsets, &onsets, ONSET_TOL_SEC);
    ensure!(acc == 1.0, "onset_accuracy(s, s) = {acc}");
    let mae = ok(energy_mae(&a, &a, hop))?;
    ensure!(mae == 0.0, "energy_mae(a, a) = {mae}");

    // Embedding jumps stamped at frames 12.5, 25, 37.5 of a 25 fps clip.
    let mut block = 0;
    let rows: Vec<Vec<f32>> = (0..50)
        .map(|i| {
            if [13, 25, 38].contains(&i) {
                block += 1;
            }
            let mut r = vec![0.0f32; 4];
            r[block % 4] = 1.0;
            r
        })
        .collect();
    let emb = ok(FrameEmbeddingSequence::from_rows(&rows, 25.0))?;
    let av = ok(av_align(&clicks(&[0.52, 1.0, 1.52], 2.0), &emb, AV_TOL_SEC))?;
    ensure!(av == 1.0, "av_align = {av}");

    let shifted = clicks(&times.map(|t| t + SHIFT_SEC), 2.0);
    let shifted_acc = onset_accuracy(&detect_onsets(&shifted, hop, 0.3), &onsets, ONSET_TOL_SEC);
    ensure!(shifted_acc == 0.0, "accuracy after a 0.2 s shift = {shifted_acc}");
    Ok("acc 1.0, MAE 0.0, AV-Align 1.0, shifted acc 0.0".into())
}

fn cross_correlation_lag(mixture: &[f32], stem: &[f32]) -> i64 {
    let n = (mixture.len() + stem.len()).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let (fwd, inv) = (planner.plan_fft_forward(n), planner.plan_fft_inverse(n));
    let spectrum = |x: &[f32]| {
        let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v as f64, 0.0)).collect();
        buf.resize(n, Complex::new(0.0, 0.0));
        fwd.process(&mut buf);
        buf
    };
    let (a, b) = (spectrum(mixture), spectrum(stem));
    let mut r: Vec<Complex<f64>> = a.iter().zip(&b).map(|(x, y)| x * y.conj()).collect();
    inv.process(&mut r);
    let best = (0..n).max_by(|&i, &j| r[i].re.total_cmp(&r[j].re)).unwrap();
    if best < n / 2 { best as i64 } else { best as i64 - n as i64 }
}

fn staggered_conversation(dir: &Path) -> PathBuf {
    let scene = "SCENE 1\n\nLocation Description: A harbour at dawn.\nDirection Notes: Calm, then a bell.\nPlot Summary: Waves lap the pier until a bell rings.\nCharacter:\n\nDialogue Script:\n\nEND SCENE 1\n";
    let foley = r#"{"Scene": [{"ID": "1", "Layout": "background", "Description": "Waves lapping a wooden pier", "Start_time": 0, "End_time": 5}, {"ID": "2", "Layout": "foreground", "Description": "Ship bell ringing", "Start_time": 1.25, "End_time": 2.5}]}"#;
    let music = r#"{"Scene": [{"ID": "1", "Layout": "background", "Style": "Ambient strings", "Description": "Slow string pad", "Start_time": 2.5, "End_time": 5}]}"#;
    let mix = r#"{"Scene": [{"Type": "On-screen", "ID": "1", "Start_time": 0, "End_time": 5, "Volume": -15}, {"Type": "Foley", "ID": "1", "Start_time": 0, "End_time": 5, "Volume": -35}, {"Type": "Foley", "ID": "2", "Start_time": 1.25, "End_time": 2.5, "Volume": -25}, {"Type": "Music", "ID": "1", "Start_time": 2.5, "End_time": 5, "Volume": -35}]}"#;
    let mut lines: Vec<serde_json::Value> = [
        ("script_writer", scene),
        ("foley_artist", foley),
        ("composer", music),
        ("voice_actor", "N/A"),
        ("mixer", mix),
    ]
    .iter()
    .map(|(role, content)| serde_json::json!({"role": role, "content": content}))
    .collect();
    lines.extend((0..5).map(|_| serde_json::json!({"role": "sound_director", "content": "TASK_DONE."})));
    let path = dir.join("conversation.jsonl");
    std::fs::write(&path, lines.iter().map(|l| format!("{l}\n")).collect::<String>()).unwrap();
    path
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let ctx = write_context(dir.path(), 5.0);
    let template = dir.path().join("template");
    cli(&["pipeline", "--context", p(&ctx), "-o", p(&template)])?;
    let len = ok(read_wav(template.join("final.wav")))?.len();
    ensure!(len == 80_000, "template run: final.wav has {len} samples");

    let script = staggered_conversation(dir.path());
    let run = dir.path().join("scripted");
    cli(&["pipeline", "--context", p(&ctx), "--mock-script", p(&script), "-o", p(&run)])?;
    let final_mix = ok(read_wav(run.join("final.wav")))?;
    ensure!(final_mix.len() == 80_000 && final_mix.sample_rate_hz() == SR, "final.wav has {} samples", final_mix.len());

    let scene = run.join("scene_01");
    let bundle = ok(SceneBundle::load(&scene))?;
    for plan in [
        AnyPlan::Foley(bundle.foley.clone()),
        AnyPlan::Music(bundle.music.clone()),
        AnyPlan::Voice(bundle.voice.clone()),
        AnyPlan::Mix(bundle.mix.clone()),
    ] {
        let r = validate_plan(&plan, 5.0);
        ensure!(r.is_accepted(), "{}", r.describe());
    }
    let ids: Vec<String> = bundle.on_screen.iter().map(|o| o.id.clone()).collect();
    let cross = validate_mix_against(&bundle.mix, &bundle.foley, &bundle.music, &bundle.voice, &ids);
    ensure!(cross.is_accepted(), "{}", cross.describe());
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(scene.join("mixdown.json")).unwrap())
        .map_err(|e| format!("mixdown.json: {e}"))?;
    ensure!(report["tracks"].as_array().map(Vec::len) == Some(bundle.mix.scene.len()), "mixdown.json track count");
    let scene_mix = ok(read_wav(scene.join("mix.wav")))?;
    ensure!(scene_mix.samples() == final_mix.samples(), "single-scene final.wav differs from its scene mix");

    let tol = (OFFSET_TOL_SEC * SR as f64).round() as i64;
    let mut lags = Vec::new();
    for e in &bundle.mix.scene {
        let stem = ok(read_wav(stem_path(&scene, e.track_type, &e.id)))?;
        let span = sample_count(e.end(), SR) - sample_count(e.start(), SR);
        let stem = &stem.samples()[..span.min(stem.len())];
        let lag = cross_correlation_lag(final_mix.samples(), stem);
        let want = sample_count(e.start(), SR) as i64;
        ensure!((lag - want).abs() <= tol, "{} {}: peak at {lag} samples, scheduled {want}", e.track_type, e.id);
        lags.push(format!("{}:{}", stem_label(e.track_type, &e.id), lag));
    }
    Ok(format!("80000 samples; xcorr peaks {}", lags.join(" ")))
}

fn stem_label(t: TrackType, id: &str) -> String {
    format!("{}_{id}", t.file_stem())
}

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_reelwave"))
        .args(args)
        .env_remove("REELWAVE_API_KEY")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("reelwave {args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_context(dir: &Path, duration: f64) -> PathBuf {
    let path = dir.join("context.json");
    let ctx = serde_json::json!({"scenes": [{
        "key_event_description": "A bell ringing",
        "full_description": "A harbour at dawn; a ship bell rings over the waves.",
        "duration_sec": duration,
        "has_talking_human": false,
        "dialogue_override": null
    }]});
    std::fs::write(&path, ctx.to_string()).unwrap();
    path
}

fn main() {
    let criteria: [(&str, Check); 12] = [
        ("scene detection exactness", scene_detection_exactness),
        ("scene detection scale invariance", scene_detection_scale_invariance),
        ("pitch tracking", pitch_tracking),
        ("spectral centroid", spectral_centroid),
        ("loudness equivariance", loudness_equivariance),
        ("target preparation", target_preparation),
        ("decoupled cross-attention", decoupled_cross_attention),
        ("golden plans and script", golden_plans),
        ("agent loop", agent_loop),
        ("mixer loudness", mixer_loudness),
        ("metric self-identities", metrics_identities),
        ("end-to-end pipeline", end_to_end),
    ];
    let suite = Instant::now();
    let mut failed = 0;
    let mut report = |n: usize, name: &str, outcome: &Outcome, took: Duration| {
        let (status, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        if outcome.is_err() {
            failed += 1;
        }
        println!("[{status}] {n:>2} {name:<34} {detail} ({:.2} s)", took.as_secs_f64());
    };
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        report(i + 1, name, &outcome, start.elapsed());
    }
    // The rest of the workspace suite is timed by the test runner; this bounds
    // the heaviest target, which also runs only against the mock backend.
    let took = suite.elapsed();
    let outcome = if took < SUITE_BUDGET {
        Ok(format!("acceptance checks took {:.1} s, no network backend", took.as_secs_f64()))
    } else {
        Err(format!("acceptance checks took {:.1} s", took.as_secs_f64()))
    };
    report(13, "offline runtime budget", &outcome, took);
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
