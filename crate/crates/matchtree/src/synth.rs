/*!
Synthetic similarity matrices with FRGC-like structure: subjects with
demographic profiles, per-image capture conditions, and score
distributions whose means encode subject identity, group membership,
and condition mismatches.

## Score model

Every pair's score is `clamp(mean + score_sd * z, 0, 1)` with `z` a
standard normal draw. The mean is:

- same subject, neither image noisy: `genuine_mean`, minus
  `illumination_offset` if the two images differ in illumination,
  minus `expression_offset` if they differ in expression;
- same subject, either image noisy: the impostor mean below, with both
  demographic attributes shared (a noisy capture matches like a
  stranger);
- different subjects: `impostor_mean`, plus `same_group_bonus` per
  shared attribute (ethnicity, gender). When both images share an
  ethnicity that has a `gender_bonus_override`, that override replaces
  the gender share, which lets one group's gender separation be tuned
  independently.

## Determinism

All randomness comes from ChaCha8, a fixed, platform-independent
generator, seeded from `seed` and split into independent streams so
output never depends on evaluation order (pairs may be generated in
parallel):

- stream `t` for pair `t` in condensed order: the score draw;
- stream `2^62 + s` for subject `s`: the image-count draw when
  `images_per_subject` is a range;
- stream `2^63 + i` for image `i` (global index): the noisy-image
  draw.

Subjects are apportioned to demographic profiles by largest remainder
in profile order and assigned in contiguous blocks; image conditions
cycle controlled/neutral, controlled/smiling, uncontrolled/neutral,
uncontrolled/smiling; every eighth subject wears glasses.
*/

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::meta::{Ethnicity, Expression, Gender, Illumination, ImageRecord, MetadataTable};
use crate::score::{condensed_len, SimilarityMatrix};

const SUBJECT_STREAM_BASE: u64 = 1 << 62;
const IMAGE_STREAM_BASE: u64 = 1 << 63;

/// One demographic profile and its share of subjects.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupProfile {
    pub gender: Gender,
    pub ethnicity: Ethnicity,
    pub fraction: f64,
}

/// Generator configuration. `Default` is the calibrated desk-scale
/// dataset: 40 subjects, 12 images each, two ethnicities with a mild
/// same-group bonus and a mild illumination offset.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_subjects: usize,
    /// Inclusive range; a fixed count is `(c, c)`.
    pub images_per_subject: (usize, usize),
    pub group_fractions: Vec<GroupProfile>,
    /// Similarity-space mean for same-subject pairs.
    pub genuine_mean: f64,
    /// Similarity-space mean for cross-subject pairs.
    pub impostor_mean: f64,
    pub score_sd: f64,
    pub same_group_bonus: f64,
    /// Per-ethnicity replacement for the gender share of the bonus,
    /// applied when both images have that ethnicity.
    pub gender_bonus_override: BTreeMap<Ethnicity, f64>,
    pub illumination_offset: f64,
    pub expression_offset: f64,
    pub noisy_image_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_subjects: 40,
            images_per_subject: (12, 12),
            group_fractions: vec![
                GroupProfile {
                    gender: Gender::Male,
                    ethnicity: Ethnicity::White,
                    fraction: 0.30,
                },
                GroupProfile {
                    gender: Gender::Female,
                    ethnicity: Ethnicity::White,
                    fraction: 0.25,
                },
                GroupProfile {
                    gender: Gender::Male,
                    ethnicity: Ethnicity::Asian,
                    fraction: 0.25,
                },
                GroupProfile {
                    gender: Gender::Female,
                    ethnicity: Ethnicity::Asian,
                    fraction: 0.20,
                },
            ],
            genuine_mean: 0.8,
            impostor_mean: 0.2,
            score_sd: 0.05,
            same_group_bonus: 0.05,
            gender_bonus_override: BTreeMap::new(),
            illumination_offset: 0.05,
            expression_offset: 0.0,
            noisy_image_fraction: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Check every invariant, naming the offending quantity.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_subjects < 2 {
            return bad(format!(
                "n_subjects must be at least 2, got {}",
                self.n_subjects
            ));
        }
        let (lo, hi) = self.images_per_subject;
        if lo < 1 || lo > hi {
            return bad(format!(
                "images_per_subject range {lo}..{hi} is empty or zero"
            ));
        }
        if self.group_fractions.is_empty() {
            return bad("group_fractions must not be empty".to_string());
        }
        let mut sum = 0.0;
        for (i, g) in self.group_fractions.iter().enumerate() {
            if !(g.fraction >= 0.0 && g.fraction.is_finite()) {
                return bad(format!("group fraction {i} is {}", g.fraction));
            }
            for (j, other) in self.group_fractions.iter().enumerate().take(i) {
                if other.gender == g.gender && other.ethnicity == g.ethnicity {
                    return bad(format!(
                        "profiles {j} and {i} are both {} {}",
                        g.gender.as_str(),
                        g.ethnicity.as_str()
                    ));
                }
            }
            sum += g.fraction;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("group fractions sum to {sum}, expected 1"));
        }
        for (name, v) in [
            ("genuine_mean", self.genuine_mean),
            ("impostor_mean", self.impostor_mean),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} outside [0, 1]"));
            }
        }
        if self.genuine_mean <= self.impostor_mean {
            return bad(format!(
                "genuine_mean {} must exceed impostor_mean {} in similarity space",
                self.genuine_mean, self.impostor_mean
            ));
        }
        for (name, v) in [
            ("score_sd", self.score_sd),
            ("same_group_bonus", self.same_group_bonus),
            ("illumination_offset", self.illumination_offset),
            ("expression_offset", self.expression_offset),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} {v} must be finite and nonnegative"));
            }
        }
        for (eth, v) in &self.gender_bonus_override {
            if !(*v >= 0.0 && v.is_finite()) {
                return bad(format!(
                    "gender_bonus_override.{} {v} must be finite and nonnegative",
                    eth.as_str()
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.noisy_image_fraction) {
            return bad(format!(
                "noisy_image_fraction {} outside [0, 1]",
                self.noisy_image_fraction
            ));
        }
        // Feasibility: no achievable pair mean may leave [0, 1] by more
        // than 3 standard deviations, or clamping would reshape the
        // score distribution instead of trimming its tail.
        let slack = 3.0 * self.score_sd;
        let genuine_low = self.genuine_mean - self.illumination_offset - self.expression_offset;
        if genuine_low < -slack {
            return bad(format!(
                "genuine mean with offsets applied is {genuine_low}, below 0 by more than 3 * score_sd"
            ));
        }
        let max_gender = self
            .gender_bonus_override
            .values()
            .copied()
            .fold(self.same_group_bonus, f64::max);
        let impostor_high = self.impostor_mean + self.same_group_bonus + max_gender;
        if impostor_high > 1.0 + slack {
            return bad(format!(
                "impostor mean with bonuses applied is {impostor_high}, above 1 by more than 3 * score_sd"
            ));
        }
        Ok(())
    }

    /// Render as the flat key=value config format, parseable by
    /// [`parse_config`]. Used by run manifests to make outputs
    /// reproducible.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "n_subjects = {}", self.n_subjects);
        let (lo, hi) = self.images_per_subject;
        if lo == hi {
            let _ = writeln!(out, "images_per_subject = {lo}");
        } else {
            let _ = writeln!(out, "images_per_subject = {lo}..{hi}");
        }
        for g in &self.group_fractions {
            let _ = writeln!(
                out,
                "group.{}.{} = {}",
                g.gender.as_str(),
                g.ethnicity.as_str(),
                g.fraction
            );
        }
        let _ = writeln!(out, "genuine_mean = {}", self.genuine_mean);
        let _ = writeln!(out, "impostor_mean = {}", self.impostor_mean);
        let _ = writeln!(out, "score_sd = {}", self.score_sd);
        let _ = writeln!(out, "same_group_bonus = {}", self.same_group_bonus);
        for (eth, v) in &self.gender_bonus_override {
            let _ = writeln!(out, "gender_bonus_override.{} = {v}", eth.as_str());
        }
        let _ = writeln!(out, "illumination_offset = {}", self.illumination_offset);
        let _ = writeln!(out, "expression_offset = {}", self.expression_offset);
        let _ = writeln!(out, "noisy_image_fraction = {}", self.noisy_image_fraction);
        let _ = writeln!(out, "seed = {}", self.seed);
        out
    }
}

/// Strict parse helpers: config typos must not silently become the
/// Unknown variant.
fn parse_gender_strict(s: &str, line: usize) -> Result<Gender> {
    match s.to_ascii_lowercase().as_str() {
        "male" => Ok(Gender::Male),
        "female" => Ok(Gender::Female),
        "unknown" => Ok(Gender::Unknown),
        other => Err(Error::Parse {
            line,
            message: format!("unknown gender {other:?}"),
        }),
    }
}

fn parse_ethnicity_strict(s: &str, line: usize) -> Result<Ethnicity> {
    let eth = match s.to_ascii_lowercase().as_str() {
        "asian" => Ethnicity::Asian,
        "white" => Ethnicity::White,
        "hispanic" => Ethnicity::Hispanic,
        "asian_southern" => Ethnicity::AsianSouthern,
        "african_american" => Ethnicity::AfricanAmerican,
        "asian_middle_eastern" => Ethnicity::AsianMiddleEastern,
        "unknown" => Ethnicity::Unknown,
        other => {
            return Err(Error::Parse {
                line,
                message: format!("unknown ethnicity {other:?}"),
            })
        }
    };
    Ok(eth)
}

/// Parse the flat key=value config format. Unknown keys are errors;
/// any `group.*` key replaces the default profile set; `#` starts a
/// comment.
pub fn parse_config(text: &str) -> Result<SynthConfig> {
    let mut cfg = SynthConfig::default();
    let mut groups: Vec<GroupProfile> = Vec::new();
    let mut overrides: BTreeMap<Ethnicity, f64> = BTreeMap::new();
    let mut seen: Vec<String> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or(Error::Parse {
            line,
            message: "expected key = value".to_string(),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if seen.iter().any(|k| k == key) {
            return Err(Error::Parse {
                line,
                message: format!("duplicate key {key:?}"),
            });
        }
        seen.push(key.to_string());
        let bad_value = |what: &str| Error::Parse {
            line,
            message: format!("unparseable {what} {value:?} for key {key:?}"),
        };
        let parse_f64 = || value.parse::<f64>().map_err(|_| bad_value("number"));
        if let Some(rest) = key.strip_prefix("group.") {
            let (gender, ethnicity) = rest.split_once('.').ok_or(Error::Parse {
                line,
                message: format!("expected group.<gender>.<ethnicity>, got {key:?}"),
            })?;
            groups.push(GroupProfile {
                gender: parse_gender_strict(gender, line)?,
                ethnicity: parse_ethnicity_strict(ethnicity, line)?,
                fraction: parse_f64()?,
            });
            continue;
        }
        if let Some(eth) = key.strip_prefix("gender_bonus_override.") {
            overrides.insert(parse_ethnicity_strict(eth, line)?, parse_f64()?);
            continue;
        }
        match key {
            "n_subjects" => cfg.n_subjects = value.parse().map_err(|_| bad_value("count"))?,
            "images_per_subject" => {
                cfg.images_per_subject = match value.split_once("..") {
                    Some((lo, hi)) => (
                        lo.trim().parse().map_err(|_| bad_value("range"))?,
                        hi.trim().parse().map_err(|_| bad_value("range"))?,
                    ),
                    None => {
                        let c = value.parse().map_err(|_| bad_value("count"))?;
                        (c, c)
                    }
                }
            }
            "genuine_mean" => cfg.genuine_mean = parse_f64()?,
            "impostor_mean" => cfg.impostor_mean = parse_f64()?,
            "score_sd" => cfg.score_sd = parse_f64()?,
            "same_group_bonus" => cfg.same_group_bonus = parse_f64()?,
            "illumination_offset" => cfg.illumination_offset = parse_f64()?,
            "expression_offset" => cfg.expression_offset = parse_f64()?,
            "noisy_image_fraction" => cfg.noisy_image_fraction = parse_f64()?,
            "seed" => cfg.seed = value.parse().map_err(|_| bad_value("seed"))?,
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown config key {other:?}"),
                })
            }
        }
    }
    if !groups.is_empty() {
        cfg.group_fractions = groups;
    }
    if !overrides.is_empty() {
        cfg.gender_bonus_override = overrides;
    }
    Ok(cfg)
}

/// Load a config file.
pub fn load_config(path: &Path) -> Result<SynthConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// Largest-remainder apportionment of `total` into `fractions`-sized
/// shares; remainders tie toward earlier entries.
fn apportion(total: usize, fractions: &[f64]) -> Vec<usize> {
    let mut counts: Vec<usize> = Vec::with_capacity(fractions.len());
    let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(fractions.len());
    let mut assigned = 0usize;
    for (i, &f) in fractions.iter().enumerate() {
        let quota = total as f64 * f;
        let floor = quota.floor() as usize;
        counts.push(floor);
        remainders.push((i, quota - floor as f64));
        assigned += floor;
    }
    remainders.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for &(i, _) in remainders.iter().take(total - assigned) {
        counts[i] += 1;
    }
    counts
}

/// Per-image facts the pair loop needs, kept flat and copyable.
#[derive(Clone, Copy)]
struct ImageInfo {
    subject: u32,
    gender: Gender,
    ethnicity: Ethnicity,
    illumination: Illumination,
    expression: Expression,
    noisy: bool,
}

fn impostor_base(cfg: &SynthConfig, a: &ImageInfo, b: &ImageInfo) -> f64 {
    let mut mean = cfg.impostor_mean;
    let same_ethnicity = a.ethnicity == b.ethnicity;
    if same_ethnicity {
        mean += cfg.same_group_bonus;
    }
    if a.gender == b.gender {
        mean += if same_ethnicity {
            cfg.gender_bonus_override
                .get(&a.ethnicity)
                .copied()
                .unwrap_or(cfg.same_group_bonus)
        } else {
            cfg.same_group_bonus
        };
    }
    mean
}

fn pair_mean(cfg: &SynthConfig, a: &ImageInfo, b: &ImageInfo) -> f64 {
    if a.subject != b.subject {
        return impostor_base(cfg, a, b);
    }
    if a.noisy || b.noisy {
        // A degraded capture matches its own subject like a stranger
        // of the same demographic profile.
        return impostor_base(cfg, a, b);
    }
    let mut mean = cfg.genuine_mean;
    if a.illumination != b.illumination {
        mean -= cfg.illumination_offset;
    }
    if a.expression != b.expression {
        mean -= cfg.expression_offset;
    }
    mean
}

/// Index of the condensed row containing linear index `t`, found by
/// binary search on the row-start offsets.
fn row_of(n: usize, t: usize) -> usize {
    let row_start = |i: usize| i * (n - 1) - i * (i + 1) / 2 + i; // condensed_index(n, i, i+1)
    let (mut lo, mut hi) = (0usize, n - 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if row_start(mid) <= t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Generate a similarity matrix and matching metadata table.
pub fn generate(cfg: &SynthConfig) -> Result<(SimilarityMatrix, MetadataTable)> {
    cfg.validate()?;
    let base = ChaCha8Rng::seed_from_u64(cfg.seed);
    let stream = |id: u64| {
        let mut rng = base.clone();
        rng.set_stream(id);
        rng
    };

    // Subjects: profile blocks in config order, then per-subject image
    // counts.
    let fractions: Vec<f64> = cfg.group_fractions.iter().map(|g| g.fraction).collect();
    let counts = apportion(cfg.n_subjects, &fractions);
    let mut subject_profile: Vec<usize> = Vec::with_capacity(cfg.n_subjects);
    for (profile, &count) in counts.iter().enumerate() {
        subject_profile.extend(std::iter::repeat_n(profile, count));
    }
    let (lo, hi) = cfg.images_per_subject;
    let image_counts: Vec<usize> = (0..cfg.n_subjects)
        .map(|s| {
            if lo == hi {
                lo
            } else {
                stream(SUBJECT_STREAM_BASE + s as u64).random_range(lo..=hi)
            }
        })
        .collect();

    let subject_width = digits(cfg.n_subjects.saturating_sub(1)).max(4);
    let image_width = digits(hi.saturating_sub(1)).max(2);
    let conditions = [
        (Illumination::Controlled, Expression::Neutral),
        (Illumination::Controlled, Expression::Smiling),
        (Illumination::Uncontrolled, Expression::Neutral),
        (Illumination::Uncontrolled, Expression::Smiling),
    ];

    let mut records: Vec<ImageRecord> = Vec::new();
    let mut infos: Vec<ImageInfo> = Vec::new();
    for (s, &profile) in subject_profile.iter().enumerate() {
        let g = cfg.group_fractions[profile];
        let subject_id = format!("s{s:0subject_width$}");
        let glasses = s % 8 == 0;
        for k in 0..image_counts[s] {
            let global = infos.len() as u64;
            let (illumination, expression) = conditions[k % conditions.len()];
            let noisy = cfg.noisy_image_fraction > 0.0
                && stream(IMAGE_STREAM_BASE + global).random_bool(cfg.noisy_image_fraction);
            records.push(ImageRecord {
                image_id: format!("{subject_id}_i{k:0image_width$}"),
                subject_id: subject_id.clone(),
                gender: g.gender,
                ethnicity: g.ethnicity,
                expression,
                illumination,
                glasses,
            });
            infos.push(ImageInfo {
                subject: s as u32,
                gender: g.gender,
                ethnicity: g.ethnicity,
                illumination,
                expression,
                noisy,
            });
        }
    }
    let n = infos.len();
    let m = condensed_len(n);

    // Pair scores, parallel over contiguous chunks of the condensed
    // order; stream-per-pair keeps the result independent of chunking.
    let mut scores = vec![0.0f32; m];
    const CHUNK: usize = 1 << 16;
    scores
        .par_chunks_mut(CHUNK)
        .enumerate()
        .for_each(|(chunk_idx, chunk)| {
            let start = chunk_idx * CHUNK;
            let mut i = row_of(n, start);
            let row_start = |r: usize| r * (n - 1) - r * (r + 1) / 2 + r;
            let mut j = i + 1 + (start - row_start(i));
            for (offset, slot) in chunk.iter_mut().enumerate() {
                let t = (start + offset) as u64;
                let mean = pair_mean(cfg, &infos[i], &infos[j]);
                let z: f64 = stream(t).sample(StandardNormal);
                *slot = (mean + cfg.score_sd * z).clamp(0.0, 1.0) as f32;
                j += 1;
                if j == n {
                    i += 1;
                    j = i + 1;
                }
            }
        });

    let ids: Vec<String> = records.iter().map(|r| r.image_id.clone()).collect();
    let sim = SimilarityMatrix::from_condensed(ids, scores)?;
    let meta = MetadataTable::new(records)?;
    Ok((sim, meta))
}

fn digits(mut v: usize) -> usize {
    let mut d = 1;
    while v >= 10 {
        v /= 10;
        d += 1;
    }
    d
}
