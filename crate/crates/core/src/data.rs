//! Samples, vocabularies, span normalization, clip pooling, the planted
//! interval corpus generator and line-delimited corpus files.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::heads::TemporalSpan;
use crate::tensor::Tensor;

pub const UNKNOWN_TOKEN: &str = "<unk>";

/// One query: a video as clip features and a sentence as token ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub video_id: String,
    /// Seconds.
    pub duration: f64,
    /// `[d_v x M]`
    pub features: Tensor<f64>,
    pub tokens: Vec<u32>,
    /// Ground truth `(start, end)` in seconds.
    pub span_seconds: (f64, f64),
}

impl Sample {
    pub fn clips(&self) -> usize {
        self.features.cols()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.rows()
    }

    /// Normalized ground truth.
    pub fn gt(&self) -> TemporalSpan {
        TemporalSpan {
            start: self.span_seconds.0 / self.duration,
            end: self.span_seconds.1 / self.duration,
        }
    }

    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        normalize_span(self.span_seconds.0, self.span_seconds.1, self.duration)
            .map_err(|e| Error::validation(format!("sample {}", self.video_id), e.to_string()))?;
        if self.tokens.is_empty() {
            return Err(Error::validation(format!("sample {}", self.video_id), "empty sentence"));
        }
        if let Some(t) = self.tokens.iter().find(|&&t| t as usize >= vocab_size) {
            return Err(Error::validation(
                format!("sample {}", self.video_id),
                format!("token id {t} outside vocabulary of {vocab_size}"),
            ));
        }
        if !self.features.is_finite() {
            return Err(Error::validation(
                format!("sample {}", self.video_id),
                "non-finite feature",
            ));
        }
        Ok(())
    }
}

/// Dense token ids, `<unk>` at 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: std::collections::HashMap<String, u32>,
}

impl Vocabulary {
    /// `words` must not contain duplicates or the unknown token.
    pub fn new<S: AsRef<str>>(words: &[S]) -> Result<Self> {
        let mut tokens = vec![UNKNOWN_TOKEN.to_string()];
        tokens.extend(words.iter().map(|w| w.as_ref().to_string()));
        Self::from_tokens(tokens)
    }

    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.first().map(String::as_str) != Some(UNKNOWN_TOKEN) {
            return Err(Error::validation("vocabulary", format!("id 0 must be {UNKNOWN_TOKEN}")));
        }
        let mut index = std::collections::HashMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::validation("vocabulary", format!("bad token {t:?} at id {i}")));
            }
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::validation("vocabulary", format!("duplicate token {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, word: &str) -> u32 {
        self.index.get(word).copied().unwrap_or(0)
    }

    pub fn word(&self, id: u32) -> &str {
        self.tokens.get(id as usize).map_or(UNKNOWN_TOKEN, String::as_str)
    }

    pub fn encode(&self, sentence: &str) -> Vec<u32> {
        sentence.split_whitespace().map(|w| self.id(w)).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter().map(|&i| self.word(i)).collect::<Vec<_>>().join(" ")
    }

    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().map(str::to_string).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn file_name(self) -> &'static str {
        match self {
            Split::Train => "train.jsonl",
            Split::Val => "val.jsonl",
            Split::Test => "test.jsonl",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub vocab: Vocabulary,
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Corpus {
    pub fn split(&self, s: Split) -> &[Sample] {
        match s {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn split_mut(&mut self, s: Split) -> &mut Vec<Sample> {
        match s {
            Split::Train => &mut self.train,
            Split::Val => &mut self.val,
            Split::Test => &mut self.test,
        }
    }

    /// `(d_v, M)` shared by every sample, if any sample exists.
    pub fn dims(&self) -> Option<(usize, usize)> {
        Split::ALL
            .iter()
            .flat_map(|&s| self.split(s).first())
            .next()
            .map(|s| (s.feature_dim(), s.clips()))
    }
}

pub fn normalize_span(tau_s: f64, tau_e: f64, tau: f64) -> Result<TemporalSpan> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::validation(
            "span",
            format!("duration must be positive, got {tau}"),
        ));
    }
    if !(tau_s.is_finite() && tau_e.is_finite() && 0.0 <= tau_s && tau_s < tau_e && tau_e <= tau) {
        return Err(Error::validation(
            "span",
            format!("need 0 <= start < end <= duration, got ({tau_s}, {tau_e}) for {tau}"),
        ));
    }
    Ok(TemporalSpan {
        start: tau_s / tau,
        end: tau_e / tau,
    })
}

pub fn denormalize_span(span: TemporalSpan, tau: f64) -> (f64, f64) {
    (span.start * tau, span.end * tau)
}

/// Mean-pools `[d_v x T]` frames into `[d_v x M]` clips; the first `T mod M`
/// groups take one extra frame.
pub fn pool_clips(frames: &Tensor<f64>, clips: usize) -> Result<Tensor<f64>> {
    let t = frames.cols();
    if clips == 0 || t < clips {
        return Err(Error::usage(format!("cannot pool {t} frames into {clips} clips")));
    }
    let (base, extra) = (t / clips, t % clips);
    let mut out = Tensor::zeros(frames.rows(), clips);
    let mut col = 0;
    for j in 0..clips {
        let size = base + usize::from(j < extra);
        for r in 0..frames.rows() {
            let s: f64 = (col..col + size).map(|c| frames.get(r, c)).sum();
            out.set(r, j, s / size as f64);
        }
        col += size;
    }
    Ok(out)
}

/// Settings for the planted interval corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub clips: usize,
    pub feature_dim: usize,
    pub concepts: usize,
    /// Scale of the concept embedding added to clips inside the span.
    pub signal_strength: f64,
    /// Standard deviation of the background noise on every entry.
    pub noise_scale: f64,
    /// Chance of a second concept planted outside the ground-truth span.
    pub distractor_prob: f64,
    pub sentence_min: usize,
    pub sentence_max: usize,
    pub min_duration: f64,
    pub max_duration: f64,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            clips: 32,
            feature_dim: 16,
            concepts: 8,
            signal_strength: 1.5,
            noise_scale: 0.5,
            distractor_prob: 0.5,
            sentence_min: 5,
            sentence_max: 9,
            min_duration: 20.0,
            max_duration: 180.0,
            train: 2000,
            val: 200,
            test: 500,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.clips < 4 {
            return bad(format!("clips must be at least 4, got {}", self.clips));
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive".into());
        }
        if self.concepts == 0 || self.concepts > CONCEPT_WORDS.len() {
            return bad(format!(
                "concepts must be in 1..={}, got {}",
                CONCEPT_WORDS.len(),
                self.concepts
            ));
        }
        if !(self.signal_strength.is_finite() && self.signal_strength >= 0.0) {
            return bad(format!(
                "signal_strength must be finite and >= 0, got {}",
                self.signal_strength
            ));
        }
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return bad(format!("noise_scale must be finite and >= 0, got {}", self.noise_scale));
        }
        if !(0.0..=1.0).contains(&self.distractor_prob) {
            return bad(format!(
                "distractor_prob must be in [0, 1], got {}",
                self.distractor_prob
            ));
        }
        if self.sentence_min < 2 || self.sentence_max < self.sentence_min {
            return bad(format!(
                "need 2 <= sentence_min <= sentence_max, got {}..{}",
                self.sentence_min, self.sentence_max
            ));
        }
        if !(self.min_duration > 0.0 && self.max_duration >= self.min_duration && self.max_duration.is_finite()) {
            return bad(format!(
                "need 0 < min_duration <= max_duration, got {}..{}",
                self.min_duration, self.max_duration
            ));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: SynthConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        c.validate()?;
        Ok(c)
    }
}

pub const CONCEPT_WORDS: [&str; 16] = [
    "dog", "guitar", "ball", "car", "horse", "cake", "bicycle", "piano", "knife", "kite", "boat", "drum", "camera",
    "ladder", "rope", "umbrella",
];
pub const EARLY_CUES: [&str; 3] = ["early", "begin", "first"];
pub const MIDDLE_CUES: [&str; 2] = ["middle", "midway"];
pub const LATE_CUES: [&str; 3] = ["late", "end", "finally"];
pub const FILLER_WORDS: [&str; 12] = [
    "a", "the", "person", "someone", "is", "then", "video", "scene", "shows", "there", "in", "of",
];

/// Tercile of a span midpoint named by the cue word.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Position {
    Early,
    Middle,
    Late,
}

impl Position {
    pub fn of(span: TemporalSpan) -> Self {
        let m = span.midpoint();
        if m < 1.0 / 3.0 {
            Position::Early
        } else if m > 2.0 / 3.0 {
            Position::Late
        } else {
            Position::Middle
        }
    }

    pub fn cues(self) -> &'static [&'static str] {
        match self {
            Position::Early => &EARLY_CUES,
            Position::Middle => &MIDDLE_CUES,
            Position::Late => &LATE_CUES,
        }
    }
}

/// Generator-side facts not stored in corpus files.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantedTruth {
    /// Unit-norm concept embeddings, `[d_v]` each.
    pub embeddings: Vec<Vec<f64>>,
    /// Concept of each sample, per split.
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl PlantedTruth {
    pub fn split(&self, s: Split) -> &[usize] {
        match s {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

pub fn synth_vocabulary(config: &SynthConfig) -> Vocabulary {
    let words: Vec<&str> = CONCEPT_WORDS[..config.concepts]
        .iter()
        .chain(&EARLY_CUES)
        .chain(&MIDDLE_CUES)
        .chain(&LATE_CUES)
        .chain(&FILLER_WORDS)
        .copied()
        .collect();
    Vocabulary::new(&words).expect("built-in word lists are distinct")
}

fn random_span(rng: &mut ChaCha8Rng, clips: usize) -> (f64, f64) {
    let min_len = 2.0 / clips as f64;
    let len = rng.random_range(min_len..=0.5);
    let start = rng.random_range(0.0..=1.0 - len);
    (start, (start + len).min(1.0))
}

/// Fraction of clip `j` covered by `[s, e]`.
fn overlap(j: usize, clips: usize, s: f64, e: f64) -> f64 {
    let (a, b) = (j as f64 / clips as f64, (j + 1) as f64 / clips as f64);
    ((b.min(e) - a.max(s)).max(0.0)) * clips as f64
}

fn generate_sample(
    rng: &mut ChaCha8Rng,
    config: &SynthConfig,
    vocab: &Vocabulary,
    embeddings: &[Vec<f64>],
    video_id: String,
) -> (Sample, usize) {
    let (m, d) = (config.clips, config.feature_dim);
    let concept = rng.random_range(0..config.concepts);
    let (start, end) = random_span(rng, m);

    let mut distractor = None;
    if config.concepts > 1 && rng.random_bool(config.distractor_prob) {
        let other = (concept + rng.random_range(1..config.concepts)) % config.concepts;
        for _ in 0..8 {
            let (s, e) = random_span(rng, m);
            if e <= start || s >= end {
                distractor = Some((other, s, e));
                break;
            }
        }
    }

    let mut features = Tensor::zeros(d, m);
    for j in 0..m {
        let w = overlap(j, m, start, end);
        let wd = distractor.map_or(0.0, |(_, s, e)| overlap(j, m, s, e));
        for (r, &e) in embeddings[concept].iter().enumerate() {
            let noise: f64 = StandardNormal.sample(rng);
            let mut v = config.noise_scale * noise + config.signal_strength * w * e;
            if let Some((c, _, _)) = distractor {
                v += config.signal_strength * wd * embeddings[c][r];
            }
            features.set(r, j, v);
        }
    }

    let len = rng.random_range(config.sentence_min..=config.sentence_max);
    let cues = Position::of(TemporalSpan { start, end }).cues();
    let mut words = vec![CONCEPT_WORDS[concept], cues[rng.random_range(0..cues.len())]];
    while words.len() < len {
        words.push(FILLER_WORDS[rng.random_range(0..FILLER_WORDS.len())]);
    }
    words.shuffle(rng);
    let tokens = words.iter().map(|w| vocab.id(w)).collect();

    let duration = rng.random_range(config.min_duration..=config.max_duration);
    let span_seconds = (start * duration, (end * duration).min(duration));
    let sample = Sample {
        video_id,
        duration,
        features,
        tokens,
        span_seconds,
    };
    (sample, concept)
}

/// Deterministic in `config.seed`.
pub fn generate_corpus(config: &SynthConfig) -> Result<(Corpus, PlantedTruth)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let embeddings: Vec<Vec<f64>> = (0..config.concepts)
        .map(|_| {
            let v: Vec<f64> = (0..config.feature_dim)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.into_iter().map(|x| x / n).collect()
        })
        .collect();
    let vocab = synth_vocabulary(config);
    let mut corpus = Corpus {
        vocab: vocab.clone(),
        train: vec![],
        val: vec![],
        test: vec![],
    };
    let mut truth = PlantedTruth {
        embeddings: embeddings.clone(),
        train: vec![],
        val: vec![],
        test: vec![],
    };
    for (split, count) in [
        (Split::Train, config.train),
        (Split::Val, config.val),
        (Split::Test, config.test),
    ] {
        let prefix = match split {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        };
        for i in 0..count {
            let (s, c) = generate_sample(&mut rng, config, &vocab, &embeddings, format!("{prefix}-{i:05}"));
            corpus.split_mut(split).push(s);
            match split {
                Split::Train => truth.train.push(c),
                Split::Val => truth.val.push(c),
                Split::Test => truth.test.push(c),
            }
        }
    }
    Ok((corpus, truth))
}

pub fn sample_to_json(s: &Sample) -> String {
    json!({
        "video_id": s.video_id,
        "duration": s.duration,
        "feature_shape": [s.feature_dim(), s.clips()],
        "features": s.features.data(),
        "tokens": s.tokens,
        "span_seconds": [s.span_seconds.0, s.span_seconds.1],
    })
    .to_string()
}

fn parse_error(line: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, line: usize, name: &str) -> Result<&'a Value> {
    obj.get(name).ok_or_else(|| parse_error(line, name, "missing"))
}

fn number(v: &Value, line: usize, name: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| parse_error(line, name, "expected a number"))
}

fn array<'a>(v: &'a Value, line: usize, name: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| parse_error(line, name, "expected an array"))
}

/// Parses one corpus record; `line` is 1-based and only used in errors.
pub fn sample_from_json(text: &str, line: usize, vocab_size: usize) -> Result<Sample> {
    let value: Value = serde_json::from_str(text).map_err(|e| parse_error(line, "<record>", e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| parse_error(line, "<record>", "expected an object"))?;
    for key in obj.keys() {
        if ![
            "video_id",
            "duration",
            "feature_shape",
            "features",
            "tokens",
            "span_seconds",
        ]
        .contains(&key.as_str())
        {
            return Err(parse_error(line, key, "unknown field"));
        }
    }
    let video_id = field(obj, line, "video_id")?
        .as_str()
        .ok_or_else(|| parse_error(line, "video_id", "expected a string"))?
        .to_string();
    let duration = number(field(obj, line, "duration")?, line, "duration")?;
    let shape = array(field(obj, line, "feature_shape")?, line, "feature_shape")?;
    let dims: Vec<usize> = shape
        .iter()
        .map(|v| v.as_u64().map(|x| x as usize))
        .collect::<Option<_>>()
        .filter(|d: &Vec<usize>| d.len() == 2 && d[0] > 0 && d[1] > 0)
        .ok_or_else(|| parse_error(line, "feature_shape", "expected two positive integers"))?;
    let feats = array(field(obj, line, "features")?, line, "features")?
        .iter()
        .map(|v| number(v, line, "features"))
        .collect::<Result<Vec<f64>>>()?;
    if feats.len() != dims[0] * dims[1] {
        return Err(parse_error(
            line,
            "features",
            format!("{} values for shape [{}, {}]", feats.len(), dims[0], dims[1]),
        ));
    }
    let tokens = array(field(obj, line, "tokens")?, line, "tokens")?
        .iter()
        .map(|v| {
            v.as_u64()
                .filter(|&t| (t as usize) < vocab_size)
                .map(|t| t as u32)
                .ok_or_else(|| parse_error(line, "tokens", format!("expected ids below {vocab_size}")))
        })
        .collect::<Result<Vec<u32>>>()?;
    if tokens.is_empty() {
        return Err(parse_error(line, "tokens", "empty sentence"));
    }
    let span = array(field(obj, line, "span_seconds")?, line, "span_seconds")?;
    if span.len() != 2 {
        return Err(parse_error(line, "span_seconds", "expected [start, end]"));
    }
    let span_seconds = (
        number(&span[0], line, "span_seconds")?,
        number(&span[1], line, "span_seconds")?,
    );
    normalize_span(span_seconds.0, span_seconds.1, duration)
        .map_err(|e| parse_error(line, "span_seconds", e.to_string()))?;
    let features = Tensor::from_vec(dims[0], dims[1], feats).expect("length checked");
    if !features.is_finite() {
        return Err(parse_error(line, "features", "non-finite value"));
    }
    Ok(Sample {
        video_id,
        duration,
        features,
        tokens,
        span_seconds,
    })
}

/// Parses a whole split; every record must share the first record's shape.
pub fn samples_from_jsonl(text: &str, vocab_size: usize) -> Result<Vec<Sample>> {
    let mut out: Vec<Sample> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let s = sample_from_json(line, i + 1, vocab_size)?;
        if let Some(first) = out.first() {
            if first.features.shape() != s.features.shape() {
                return Err(parse_error(
                    i + 1,
                    "feature_shape",
                    format!(
                        "{:?} differs from the split's {:?}",
                        s.features.shape(),
                        first.features.shape()
                    ),
                ));
            }
        }
        out.push(s);
    }
    Ok(out)
}

pub fn save_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("vocab.txt"), corpus.vocab.to_text())?;
    for split in Split::ALL {
        let mut f = std::io::BufWriter::new(fs::File::create(dir.join(split.file_name()))?);
        for s in corpus.split(split) {
            writeln!(f, "{}", sample_to_json(s))?;
        }
        f.flush()?;
    }
    Ok(())
}

pub fn load_corpus(dir: &Path) -> Result<Corpus> {
    let vocab = Vocabulary::from_text(&fs::read_to_string(dir.join("vocab.txt"))?)?;
    let mut corpus = Corpus {
        vocab,
        train: vec![],
        val: vec![],
        test: vec![],
    };
    let mut ids = std::collections::HashSet::new();
    for split in Split::ALL {
        let path = dir.join(split.file_name());
        let text = fs::read_to_string(&path)?;
        let samples = samples_from_jsonl(&text, corpus.vocab.len()).map_err(|e| match e {
            Error::Parse { line, field, message } => Error::Parse {
                line,
                field,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        })?;
        for s in &samples {
            if !ids.insert(s.video_id.clone()) {
                return Err(Error::validation(
                    "corpus",
                    format!("video_id {} appears more than once", s.video_id),
                ));
            }
        }
        *corpus.split_mut(split) = samples;
    }
    if let Some((d, m)) = corpus.dims() {
        for split in Split::ALL {
            if let Some(s) = corpus.split(split).first() {
                if (s.feature_dim(), s.clips()) != (d, m) {
                    return Err(Error::validation(
                        "corpus",
                        format!(
                            "{:?} split has shape [{}, {}], expected [{d}, {m}]",
                            split,
                            s.feature_dim(),
                            s.clips()
                        ),
                    ));
                }
            }
        }
    }
    Ok(corpus)
}
