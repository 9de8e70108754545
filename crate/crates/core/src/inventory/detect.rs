use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use super::stats::Baseline;
use crate::date::Date;
use crate::digest::{canonical_digest, short_id};
use crate::staging::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Zscore,
    Mad,
    Iqr,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Zscore, Method::Mad, Method::Iqr];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Zscore => "zscore",
            Method::Mad => "mad",
            Method::Iqr => "iqr",
        }
    }
}

/// Detector score; a zero spread with a differing observation is infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Score {
    Finite(f64),
    PosInf,
    NegInf,
}

impl Score {
    pub fn value(self) -> f64 {
        match self {
            Score::Finite(v) => v,
            Score::PosInf => f64::INFINITY,
            Score::NegInf => f64::NEG_INFINITY,
        }
    }

    pub fn abs(self) -> f64 {
        libm::fabs(self.value())
    }

    fn signed_inf(positive: bool) -> Score {
        if positive {
            Score::PosInf
        } else {
            Score::NegInf
        }
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Score::Finite(v) => write!(f, "{v:.4}"),
            Score::PosInf => f.write_str("inf"),
            Score::NegInf => f.write_str("-inf"),
        }
    }
}

impl Serialize for Score {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Score::Finite(v) => s.serialize_f64(*v),
            Score::PosInf => s.serialize_str("inf"),
            Score::NegInf => s.serialize_str("-inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Score {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct ScoreVisitor;
        impl Visitor<'_> for ScoreVisitor {
            type Value = Score;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number, \"inf\" or \"-inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Score, E> {
                Ok(Score::Finite(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Score, E> {
                Ok(Score::Finite(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Score, E> {
                Ok(Score::Finite(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Score, E> {
                match v {
                    "inf" => Ok(Score::PosInf),
                    "-inf" => Ok(Score::NegInf),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }
        d.deserialize_any(ScoreVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnomalyConfig {
    pub window_size: usize,
    pub min_observations: usize,
    pub z_threshold: f64,
    pub mad_threshold: f64,
    pub iqr_k: f64,
    pub methods: Vec<Method>,
}

impl Default for AnomalyConfig {
    fn default() -> Self {
        AnomalyConfig {
            window_size: 30,
            min_observations: 10,
            z_threshold: 3.0,
            mad_threshold: 3.5,
            iqr_k: 1.5,
            methods: vec![Method::Zscore, Method::Mad, Method::Iqr],
        }
    }
}

impl AnomalyConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: AnomalyConfig = serde_json::from_str(text)
            .map_err(|e| ConfigError::Json(alloc::string::ToString::to_string(&e)))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let ok = self.min_observations >= 2
            && self.window_size >= self.min_observations
            && [self.z_threshold, self.mad_threshold, self.iqr_k]
                .iter()
                .all(|t| t.is_finite() && *t >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(ConfigError::Invalid("anomaly: need 2 <= min_observations <= window_size and finite non-negative thresholds".into()))
        }
    }

    pub fn threshold(&self, method: Method) -> f64 {
        match method {
            Method::Zscore => self.z_threshold,
            Method::Mad => self.mad_threshold,
            Method::Iqr => self.iqr_k,
        }
    }
}

/// 0.6745 scales MAD to σ under normality.
pub const MAD_SCALE: f64 = 0.6745;

pub fn score(method: Method, b: &Baseline, x: f64) -> Score {
    match method {
        Method::Zscore if b.sd == 0.0 || b.constant => {
            if x == b.mean {
                Score::Finite(0.0)
            } else {
                Score::signed_inf(x > b.mean)
            }
        }
        Method::Zscore => Score::Finite((x - b.mean) / b.sd),
        Method::Mad if b.mad == 0.0 => {
            if x == b.median {
                Score::Finite(0.0)
            } else {
                Score::signed_inf(x > b.median)
            }
        }
        Method::Mad => Score::Finite(MAD_SCALE * (x - b.median) / b.mad),
        Method::Iqr => {
            let iqr = b.q3 - b.q1;
            if x >= b.q1 && x <= b.q3 {
                Score::Finite(0.0)
            } else if iqr == 0.0 {
                Score::signed_inf(x > b.q3)
            } else if x > b.q3 {
                Score::Finite((x - b.q3) / iqr)
            } else {
                Score::Finite((x - b.q1) / iqr)
            }
        }
    }
}

/// Strictly beyond the threshold.
pub fn exceeds(score: Score, threshold: f64) -> bool {
    score.abs() > threshold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyFlag {
    pub flag_id: String,
    /// `material|location`.
    pub series: String,
    pub snapshot_date: Date,
    pub observed: f64,
    pub method: Method,
    pub score: Score,
    pub threshold: f64,
    pub window_n: usize,
    pub baseline_digest: String,
}

impl AnomalyFlag {
    pub fn normalized(&self) -> f64 {
        if self.threshold == 0.0 {
            return if self.score.abs() == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
        }
        self.score.abs() / self.threshold
    }
}

pub fn flag_id(series: &str, date: Date, method: Method) -> String {
    short_id("AF-", &[series, &alloc::format!("{date}"), method.as_str()])
}

#[derive(Debug, Clone, PartialEq)]
pub enum Evaluation {
    /// Fewer than `min_observations` prior points; not a pass.
    Insufficient { n: usize },
    Scored {
        scores: Vec<(Method, Score)>,
        flags: Vec<AnomalyFlag>,
    },
}

#[derive(Serialize)]
struct BaselineInput<'a> {
    window: &'a [f64],
    config: &'a AnomalyConfig,
}

/// Scores `x` against its trailing window (which must not contain `x`).
pub fn evaluate(
    series: &str,
    date: Date,
    window: &[f64],
    x: f64,
    cfg: &AnomalyConfig,
) -> Evaluation {
    if window.len() < cfg.min_observations {
        return Evaluation::Insufficient { n: window.len() };
    }
    let baseline = Baseline::of(window);
    let digest = canonical_digest(&BaselineInput {
        window,
        config: cfg,
    });
    let mut scores = Vec::new();
    let mut flags = Vec::new();
    for &method in &cfg.methods {
        let s = score(method, &baseline, x);
        let threshold = cfg.threshold(method);
        scores.push((method, s));
        if exceeds(s, threshold) {
            flags.push(AnomalyFlag {
                flag_id: flag_id(series, date, method),
                series: series.into(),
                snapshot_date: date,
                observed: x,
                method,
                score: s,
                threshold,
                window_n: window.len(),
                baseline_digest: digest.clone(),
            });
        }
    }
    Evaluation::Scored { scores, flags }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectorRun {
    pub flags: Vec<AnomalyFlag>,
    pub insufficient: Vec<Date>,
}

/// Evaluates every point of a date-ordered series against the up to
/// `window_size` points before it.
pub fn detect_series(series: &str, points: &[(Date, f64)], cfg: &AnomalyConfig) -> DetectorRun {
    let mut run = DetectorRun::default();
    let values: Vec<f64> = points.iter().map(|p| p.1).collect();
    for (i, &(date, x)) in points.iter().enumerate() {
        let window = &values[i.saturating_sub(cfg.window_size)..i];
        match evaluate(series, date, window, x, cfg) {
            Evaluation::Insufficient { .. } => run.insufficient.push(date),
            Evaluation::Scored { flags, .. } => run.flags.extend(flags),
        }
    }
    run
}

fn single(cfg: AnomalyConfig, method: Method) -> AnomalyConfig {
    AnomalyConfig {
        methods: vec![method],
        ..cfg
    }
}

pub fn zscore_flags(
    series: &str,
    points: &[(Date, f64)],
    window_size: usize,
    threshold: f64,
) -> DetectorRun {
    detect_series(
        series,
        points,
        &single(
            AnomalyConfig {
                window_size,
                z_threshold: threshold,
                ..AnomalyConfig::default()
            },
            Method::Zscore,
        ),
    )
}

pub fn mad_flags(
    series: &str,
    points: &[(Date, f64)],
    window_size: usize,
    threshold: f64,
) -> DetectorRun {
    detect_series(
        series,
        points,
        &single(
            AnomalyConfig {
                window_size,
                mad_threshold: threshold,
                ..AnomalyConfig::default()
            },
            Method::Mad,
        ),
    )
}

pub fn iqr_flags(series: &str, points: &[(Date, f64)], window_size: usize, k: f64) -> DetectorRun {
    detect_series(
        series,
        points,
        &single(
            AnomalyConfig {
                window_size,
                iqr_k: k,
                ..AnomalyConfig::default()
            },
            Method::Iqr,
        ),
    )
}
