use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{write_sequence, Dataset, DatasetManifest, ManifestEntry, SkeletonSequence};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::shapespace::RotationMatrix3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthStyle {
    /// Classes differ by which joints articulate and how.
    Action,
    /// Classes perform the same whole-body exercise with decreasing range of
    /// motion; the last class is the low-amplitude "abnormal" one.
    Rehab,
}

impl std::str::FromStr for SynthStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "action" => Ok(SynthStyle::Action),
            "rehab" => Ok(SynthStyle::Rehab),
            other => Err(Error::invalid("synth style", format!("unknown style {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub per_class: usize,
    /// Nominal sequence length; each recording is this long divided by the
    /// performer's tempo (0.8 to 1.25).
    pub frames: usize,
    pub joints: usize,
    pub noise_sd: f64,
    pub style: SynthStyle,
    pub seed: u64,
    /// Performers; sample `i` of every class is done by subject `i mod n_subjects`.
    pub n_subjects: usize,
}

impl SyntheticSpec {
    pub fn new(style: SynthStyle, n_classes: usize, per_class: usize, frames: usize, joints: usize, seed: u64) -> Self {
        SyntheticSpec {
            n_classes,
            per_class,
            frames,
            joints,
            noise_sd: 0.005,
            style,
            seed,
            n_subjects: 10,
        }
    }
}

// Rest skeleton, roughly a 1.7 m person standing at the origin facing +z with
// y up. Parents always precede children.
const TEMPLATE: [(usize, [f64; 3]); 25] = [
    (0, [0.0, 0.0, 0.0]),     // 0 pelvis (root)
    (0, [0.0, 0.20, 0.0]),    // 1 spine
    (1, [0.0, 0.22, 0.0]),    // 2 chest
    (2, [0.0, 0.15, 0.0]),    // 3 neck
    (3, [0.0, 0.15, 0.02]),   // 4 head
    (2, [0.18, 0.10, 0.0]),   // 5 left shoulder
    (5, [0.0, -0.28, 0.0]),   // 6 left elbow
    (6, [0.0, -0.25, 0.0]),   // 7 left wrist
    (2, [-0.18, 0.10, 0.0]),  // 8 right shoulder
    (8, [0.0, -0.28, 0.0]),   // 9 right elbow
    (9, [0.0, -0.25, 0.0]),   // 10 right wrist
    (0, [0.10, -0.05, 0.0]),  // 11 left hip
    (11, [0.0, -0.42, 0.0]),  // 12 left knee
    (12, [0.0, -0.40, 0.0]),  // 13 left ankle
    (0, [-0.10, -0.05, 0.0]), // 14 right hip
    (14, [0.0, -0.42, 0.0]),  // 15 right knee
    (15, [0.0, -0.40, 0.0]),  // 16 right ankle
    (7, [0.0, -0.08, 0.0]),   // 17 left hand
    (10, [0.0, -0.08, 0.0]),  // 18 right hand
    (13, [0.0, -0.05, 0.12]), // 19 left foot
    (16, [0.0, -0.05, 0.12]), // 20 right foot
    (17, [0.03, -0.03, 0.02]), // 21 left thumb
    (18, [-0.03, -0.03, 0.02]), // 22 right thumb
    (17, [0.0, -0.06, 0.0]),  // 23 left hand tip
    (18, [0.0, -0.06, 0.0]),  // 24 right hand tip
];

/// Parent and rest offset of joint `j`; joints past the template extend
/// short chains off earlier joints.
fn bone(j: usize) -> (usize, [f64; 3]) {
    if j < TEMPLATE.len() {
        return TEMPLATE[j];
    }
    let parent = j - 8;
    let a = j as f64 * 2.399;
    (parent, [0.04 * a.cos(), -0.03, 0.04 * a.sin()])
}

/// Per-subject body and performance traits.
struct Subject {
    bone_scale: Vec<f64>,
    heading: f64,
    lean: f64,
    tempo: f64,
    vigor: f64,
}

impl Subject {
    fn sample(rng: &mut ChaCha8Rng, joints: usize) -> Self {
        let height = rng.random_range(0.85..1.15);
        Subject {
            bone_scale: (0..joints).map(|_| height * rng.random_range(0.85..1.15)).collect(),
            heading: rng.random_range(-0.35..0.35),
            lean: rng.random_range(-0.08..0.08),
            tempo: rng.random_range(0.8..1.25),
            vigor: rng.random_range(0.85..1.15),
        }
    }
}

/// One articulation: local rotation of `joint` about `axis` with amplitude
/// `amp`, `cycles` repetitions per sequence.
#[derive(Clone, Copy)]
struct Motion {
    joint: usize,
    axis: usize,
    amp: f64,
    cycles: f64,
    offset: f64,
}

fn local_rotation(axis: usize, angle: f64) -> RotationMatrix3 {
    match axis {
        0 => RotationMatrix3::rx(angle),
        1 => RotationMatrix3::ry(angle),
        _ => RotationMatrix3::rz(angle),
    }
}

fn apply(r: &RotationMatrix3, v: [f64; 3]) -> [f64; 3] {
    let e = r.entries();
    [
        e[0][0] * v[0] + e[0][1] * v[1] + e[0][2] * v[2],
        e[1][0] * v[0] + e[1][1] * v[1] + e[1][2] * v[2],
        e[2][0] * v[0] + e[2][1] * v[1] + e[2][2] * v[2],
    ]
}

/// Joint positions for one frame given per-joint local rotations.
fn forward_kinematics(joints: usize, scale: &[f64], local: &[RotationMatrix3], root: &RotationMatrix3) -> Vec<[f64; 3]> {
    let mut global = vec![RotationMatrix3::identity(); joints];
    let mut pos = vec![[0.0; 3]; joints];
    global[0] = root.mul(&local[0]);
    for j in 1..joints {
        let (p, off) = bone(j);
        let off = [off[0] * scale[j], off[1] * scale[j], off[2] * scale[j]];
        let d = apply(&global[p], off);
        pos[j] = [pos[p][0] + d[0], pos[p][1] + d[1], pos[p][2] + d[2]];
        global[j] = global[p].mul(&local[j]);
    }
    pos
}

/// Motions that make up class `c`.
fn class_motions(style: SynthStyle, c: usize, n_classes: usize, joints: usize, rng: &mut ChaCha8Rng) -> Vec<Motion> {
    match style {
        SynthStyle::Rehab => {
            // trunk side-bend with arms following; range of motion shrinks
            // from the first class to the last
            let frac = if n_classes > 1 { c as f64 / (n_classes - 1) as f64 } else { 0.0 };
            // the last class moves through half the range of the first
            let amp = 0.40 - 0.20 * frac;
            let mut m = vec![
                Motion { joint: 1, axis: 2, amp, cycles: 2.0, offset: 0.0 },
                Motion { joint: 2, axis: 2, amp: 0.5 * amp, cycles: 2.0, offset: 0.0 },
            ];
            for (j, sign) in [(5usize, 1.0), (8, -1.0)] {
                if j < joints {
                    m.push(Motion { joint: j, axis: 2, amp: sign * 0.8 * amp, cycles: 2.0, offset: 0.3 });
                }
            }
            m
        }
        SynthStyle::Action => {
            // each class swings its own handful of limb joints
            let movable: Vec<usize> = (1..joints).filter(|&j| j != 3).collect();
            let k = 3.min(movable.len());
            (0..k)
                .map(|_| Motion {
                    joint: movable[rng.random_range(0..movable.len())],
                    axis: rng.random_range(0..3),
                    amp: rng.random_range(0.4..1.1) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
                    cycles: rng.random_range(1..4) as f64,
                    offset: rng.random_range(0.0..1.0),
                })
                .collect()
        }
    }
}

/// Number of recorded frames for one performance: the nominal length
/// stretched by the subject's tempo (slower subjects take longer for the
/// same repetitions).
fn recorded_frames(nominal: usize, tempo: f64) -> usize {
    ((nominal as f64 / tempo).round() as usize).max(4)
}

fn perform(spec: &SyntheticSpec, motions: &[Motion], subject: &Subject, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let (f, n) = (recorded_frames(spec.frames, subject.tempo), spec.joints);
    let noise = Normal::new(0.0, spec.noise_sd.max(0.0)).map_err(|e| Error::invalid("synth", e.to_string()))?;
    let root = RotationMatrix3::ry(subject.heading).mul(&RotationMatrix3::rx(subject.lean));
    let jitter = rng.random_range(-0.1..0.1);
    let mut data = Vec::with_capacity(f * n * 3);
    for t in 0..f {
        let s = t as f64 / (f - 1) as f64;
        let mut local = vec![RotationMatrix3::identity(); n];
        for m in motions {
            if m.joint >= n {
                continue;
            }
            // raised-cosine repetitions; `offset` lets a joint lag the trunk
            let wave = 0.5 * (1.0 - (2.0 * PI * (m.cycles * s - m.offset * 0.1)).cos());
            let angle = m.amp * subject.vigor * (1.0 + jitter) * wave;
            local[m.joint] = local[m.joint].mul(&local_rotation(m.axis, angle));
        }
        for p in forward_kinematics(n, &subject.bone_scale, &local, &root) {
            for v in p {
                data.push(v + if spec.noise_sd > 0.0 { noise.sample(rng) } else { 0.0 });
            }
        }
    }
    Tensor::new(&[f, n, 3], data)
}

/// Generate the benchmark in memory. Deterministic given `spec.seed`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(DatasetManifest, Dataset)> {
    if spec.n_classes == 0 || spec.per_class == 0 || spec.n_subjects == 0 {
        return Err(Error::invalid("generate_synthetic", "class, sample and subject counts must be positive"));
    }
    // four frames is the least the spline resampler accepts
    if spec.frames < 4 || spec.joints < 2 {
        return Err(Error::invalid(
            "generate_synthetic",
            format!("need at least 4 frames and 2 joints, got {} x {}", spec.frames, spec.joints),
        ));
    }
    if !(spec.noise_sd >= 0.0) || !spec.noise_sd.is_finite() {
        return Err(Error::invalid("generate_synthetic", format!("noise_sd {} must be finite and >= 0", spec.noise_sd)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_subjects = spec.n_subjects.min(spec.per_class);
    let subjects: Vec<Subject> = (0..n_subjects).map(|_| Subject::sample(&mut rng, spec.joints)).collect();
    let class_motions: Vec<Vec<Motion>> = (0..spec.n_classes)
        .map(|c| class_motions(spec.style, c, spec.n_classes, spec.joints, &mut rng))
        .collect();
    let class_names: Vec<String> = (0..spec.n_classes)
        .map(|c| match (spec.style, c) {
            (SynthStyle::Rehab, 0) if spec.n_classes == 2 => "normal".to_string(),
            (SynthStyle::Rehab, 1) if spec.n_classes == 2 => "abnormal".to_string(),
            _ => format!("class{c}"),
        })
        .collect();

    let mut entries = Vec::new();
    let mut sequences = Vec::new();
    for c in 0..spec.n_classes {
        for i in 0..spec.per_class {
            let sid = i % n_subjects;
            // each sample has its own stream so the output does not depend on
            // generation order
            let mut srng = ChaCha8Rng::seed_from_u64(spec.seed ^ ((c as u64) << 32 | i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let coords = perform(spec, &class_motions[c], &subjects[sid], &mut srng)?;
            let subject = format!("s{sid:02}");
            let index = entries.len();
            let exercise = Some(match spec.style {
                SynthStyle::Rehab => "side-bend".to_string(),
                SynthStyle::Action => format!("action{c}"),
            });
            entries.push(ManifestEntry {
                path: format!("seq_{index:05}.csv"),
                subject: subject.clone(),
                label: c,
                exercise: exercise.clone(),
            });
            sequences.push(SkeletonSequence::new(coords, subject, c)?.with_exercise(exercise));
        }
    }
    let manifest = DatasetManifest {
        n_joints: spec.joints,
        class_names: class_names.clone(),
        entries,
    };
    let dataset = Dataset::new(class_names, spec.joints, sequences)?;
    Ok((manifest, dataset))
}

/// Write `manifest.json` and one CSV per entry into `dir`.
pub fn write_dataset(dir: &Path, manifest: &DatasetManifest, dataset: &Dataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (entry, seq) in manifest.entries.iter().zip(&dataset.sequences) {
        write_sequence(&dir.join(&entry.path), seq)?;
    }
    manifest.write(&dir.join("manifest.json"))
}
