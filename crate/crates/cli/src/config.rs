//! Flat `key = value` run configuration. `#` starts a comment; keys are
//! namespaced (`outer.*`, `inner.*`, `track.*`, `rpca.*`, `synth.*`) and any
//! key left out keeps its default.

use std::collections::BTreeSet;
use std::path::Path;

use lrtrack::registration::RegistrationConfig;
use lrtrack::rpca::{RpcaConfig, ThresholdConvention};
use lrtrack::tracker::TrackingConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    #[default]
    CircleToC,
    Circle,
    CShape,
    DiskSequence,
    BlobVideo,
    TexturedWarp,
}

impl SynthKind {
    fn parse(v: &str) -> Option<Self> {
        Some(match v {
            "circle_to_c" => Self::CircleToC,
            "circle" => Self::Circle,
            "c_shape" => Self::CShape,
            "disk_sequence" => Self::DiskSequence,
            "blob_video" => Self::BlobVideo,
            "textured_warp" => Self::TexturedWarp,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub kind: SynthKind,
    pub height: usize,
    pub width: usize,
    /// Shape centre; the image centre when unset.
    pub center_x: Option<f64>,
    pub center_y: Option<f64>,
    pub radius: f64,
    pub thickness: f64,
    pub gap_degrees: f64,
    pub frames: usize,
    /// Radius of the last disk of a sequence.
    pub radius_end: f64,
    /// Travel of a disk sequence; the last disk sits at the centre.
    pub shift_x: f64,
    pub shift_y: f64,
    pub seed: u64,
    pub blob_amplitude: f64,
    pub blob_radius: f64,
    pub noise_sigma: f64,
    /// Peak displacement of the textured warp.
    pub warp_amplitude: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            kind: SynthKind::CircleToC,
            height: 64,
            width: 64,
            center_x: None,
            center_y: None,
            radius: 20.0,
            thickness: 8.0,
            gap_degrees: 90.0,
            frames: 8,
            radius_end: 12.0,
            shift_x: 0.0,
            shift_y: 0.0,
            seed: 7,
            blob_amplitude: 0.4,
            blob_radius: 6.0,
            noise_sigma: 0.0,
            warp_amplitude: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub registration: RegistrationConfig,
    pub mu: f64,
    pub rho: f64,
    pub rpca: RpcaConfig,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrackingConfig::default();
        Self { registration: t.registration, mu: t.mu, rho: t.rho, rpca: RpcaConfig::default(), synth: SynthConfig::default() }
    }
}

impl RunConfig {
    pub fn tracking(&self) -> TrackingConfig {
        TrackingConfig { registration: self.registration.clone(), mu: self.mu, rho: self.rho }
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
                Self::parse(&text).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", n + 1))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(format!("line {}: duplicate config key `{key}`", n + 1));
            }
            cfg.set(key, value).map_err(|e| format!("line {}: {e}", n + 1))?;
        }
        cfg.registration.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let r = &mut self.registration;
        let s = &mut self.synth;
        match key {
            "outer.levels" => r.levels = levels(key, v)?,
            "outer.n_warp" => r.n_warp = count(key, v, 1)?,
            "outer.difference" => r.difference = positive(key, v)?,
            "inner.lambda" => r.inner.lambda = positive(key, v)?,
            "inner.theta" => r.inner.theta = positive(key, v)?,
            "inner.alpha" => {
                let a = number(key, v)?;
                if !(a > 0.0 && a <= 2.0) {
                    return Err(range(key, v, "must be in (0, 2]"));
                }
                r.inner.alpha = a;
            }
            "inner.order" => {
                r.inner.order = u32::try_from(count(key, v, 1)?).map_err(|_| range(key, v, "too large"))?
            }
            "inner.max_iter" => r.inner.max_iter = count(key, v, 1)?,
            "inner.tolerance" => r.inner.tolerance = positive(key, v)?,
            "inner.epsilon" => r.inner.epsilon = positive(key, v)?,
            "track.mu" => self.mu = positive(key, v)?,
            "track.rho" => self.rho = positive(key, v)?,
            "rpca.max_iter" => self.rpca.max_iter = count(key, v, 1)?,
            "rpca.tol" => self.rpca.tol = positive(key, v)?,
            "rpca.lambda" => self.rpca.lambda = Some(positive(key, v)?),
            "rpca.mu" => self.rpca.mu = Some(positive(key, v)?),
            "rpca.l_threshold" => self.rpca.l_threshold = Some(positive(key, v)?),
            "rpca.s_threshold" => self.rpca.s_threshold = Some(positive(key, v)?),
            "rpca.convention" => {
                self.rpca.convention = match v {
                    "paper" => ThresholdConvention::Paper,
                    "classical" => ThresholdConvention::Classical,
                    _ => return Err(expected(key, "`paper` or `classical`", v)),
                }
            }
            "synth.kind" => {
                s.kind = SynthKind::parse(v).ok_or_else(|| {
                    expected(key, "one of circle_to_c, circle, c_shape, disk_sequence, blob_video, textured_warp", v)
                })?
            }
            "synth.height" => s.height = count(key, v, 1)?,
            "synth.width" => s.width = count(key, v, 1)?,
            "synth.center_x" => s.center_x = Some(number(key, v)?),
            "synth.center_y" => s.center_y = Some(number(key, v)?),
            "synth.radius" => s.radius = nonnegative(key, v)?,
            "synth.thickness" => s.thickness = positive(key, v)?,
            "synth.gap_degrees" => {
                let g = number(key, v)?;
                if !(0.0..360.0).contains(&g) {
                    return Err(range(key, v, "must be in [0, 360)"));
                }
                s.gap_degrees = g;
            }
            "synth.frames" => s.frames = count(key, v, 2)?,
            "synth.radius_end" => s.radius_end = nonnegative(key, v)?,
            "synth.shift_x" => s.shift_x = number(key, v)?,
            "synth.shift_y" => s.shift_y = number(key, v)?,
            "synth.seed" => s.seed = v.parse().map_err(|_| expected(key, "an unsigned integer", v))?,
            "synth.blob_amplitude" => {
                let a = number(key, v)?;
                if !(0.0..=0.5).contains(&a) {
                    return Err(range(key, v, "must be in [0, 0.5]"));
                }
                s.blob_amplitude = a;
            }
            "synth.blob_radius" => s.blob_radius = positive(key, v)?,
            "synth.noise_sigma" => s.noise_sigma = nonnegative(key, v)?,
            "synth.warp_amplitude" => s.warp_amplitude = nonnegative(key, v)?,
            _ => return Err(format!("unknown config key `{key}`")),
        }
        Ok(())
    }
}

fn expected(key: &str, what: &str, got: &str) -> String {
    format!("config key `{key}` expects {what}, got `{got}`")
}

fn range(key: &str, got: &str, rule: &str) -> String {
    format!("config key `{key}` = {got} is out of range: {rule}")
}

fn number(key: &str, v: &str) -> Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| expected(key, "a number", v))?;
    if !x.is_finite() {
        return Err(expected(key, "a finite number", v));
    }
    Ok(x)
}

fn positive(key: &str, v: &str) -> Result<f64, String> {
    let x = number(key, v)?;
    if x <= 0.0 {
        return Err(range(key, v, "must be > 0"));
    }
    Ok(x)
}

fn nonnegative(key: &str, v: &str) -> Result<f64, String> {
    let x = number(key, v)?;
    if x < 0.0 {
        return Err(range(key, v, "must be >= 0"));
    }
    Ok(x)
}

fn count(key: &str, v: &str, min: usize) -> Result<usize, String> {
    let n: usize = v.parse().map_err(|_| expected(key, "an unsigned integer", v))?;
    if n < min {
        return Err(range(key, v, &format!("must be >= {min}")));
    }
    Ok(n)
}

fn levels(key: &str, v: &str) -> Result<Vec<usize>, String> {
    let list = v
        .trim_start_matches('[')
        .trim_end_matches(']')
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| expected(key, "a comma-separated list of integers", v))?;
    if list.is_empty()
        || list.last() != Some(&1)
        || list.iter().any(|&f| f == 0 || !f.is_power_of_two())
        || list.windows(2).any(|p| p[0] <= p[1])
    {
        return Err(range(key, v, "must be strictly descending powers of two ending in 1"));
    }
    Ok(list)
}
