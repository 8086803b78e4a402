//! Scenario layer: flat key/value configs in, deterministic CSV/JSON/plot
//! artifacts out.
//!
//! A config is plain text, one `key = value` per line, full-line `#`
//! comments, dotted section names (`clock.omega = 1.0`) and bracketed
//! packet lists (`cm.packets[0].p_spread = 0.5`). The same grammar is what
//! [`ScenarioConfig::canonical_text`] emits, so any resolved config can be
//! fed back in unchanged. Quantities are internal `hbar = c = 1` numbers
//! unless `units.system = si` requests conversion through
//! [`crate::units::SiScale`].
//!
//! Execution is name-dispatched: the builtin names in [`list_scenarios`]
//! run curated studies with verdicts; any other name runs a plain rate
//! sweep over `evolution.t_list`. Either way a run produces exactly one
//! result row per `t_list` entry and never panics on a per-point failure;
//! bad points are marked failed and carried along.

mod drivers;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evolve::EvolutionMethod;
use crate::ordering::OrderingKind;
use crate::units::SiScale;

// ---------------------------------------------------------------------------
// Config types
// ---------------------------------------------------------------------------

/// One centre-of-mass packet line of a config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketConfig {
    pub amp_re: f64,
    pub amp_im: f64,
    pub p_mean: f64,
    pub p_spread: f64,
    pub x_mean: f64,
}

/// Centre-of-mass section. `theta`/`phi` are the two-packet shorthand
/// `cos(theta) |1> + e^(i phi) sin(theta) |2>`; explicit amplitudes and the
/// shorthand are mutually exclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct CmConfig {
    pub packets: Vec<PacketConfig>,
    pub theta: Option<f64>,
    pub phi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GravityConfig {
    pub enabled: bool,
    /// Uniform acceleration; only read when `enabled`.
    pub g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockKind {
    TwoLevel,
    Oscillator,
}

impl ClockKind {
    pub fn token(self) -> &'static str {
        match self {
            ClockKind::TwoLevel => "two-level",
            ClockKind::Oscillator => "oscillator",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockConfig {
    pub kind: ClockKind,
    pub omega: f64,
    pub dim: usize,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionConfig {
    pub method: EvolutionMethod,
    /// Row axis of the run. Time for evolution scenarios; some builtin
    /// studies sweep another parameter and document it in `extra_json`.
    pub t_list: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    pub n: usize,
    /// Half-width around the packet cover midpoint; `None` sizes the grid
    /// automatically from the packet footprints.
    pub extent: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnitsConfig {
    Internal,
    /// Input quantities were SI and have already been converted; kept for
    /// the metadata trail.
    Si { reference_mass_kg: f64 },
}

/// A fully resolved scenario description. Field values are always internal
/// units by the time this struct exists.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub mass: f64,
    pub gravity: GravityConfig,
    pub clock: ClockConfig,
    pub cm: CmConfig,
    pub evolution: EvolutionConfig,
    pub grid: GridConfig,
    pub ordering: OrderingKind,
    pub output_dir: String,
    pub units: UnitsConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: String::new(),
            mass: 1.0,
            gravity: GravityConfig { enabled: false, g: 0.0 },
            clock: ClockConfig {
                kind: ClockKind::TwoLevel,
                omega: 1.0,
                dim: 2,
                kappa: 0.0,
            },
            cm: CmConfig {
                packets: Vec::new(),
                theta: None,
                phi: 0.0,
            },
            evolution: EvolutionConfig {
                method: EvolutionMethod::ExactFlat,
                t_list: vec![1.0],
            },
            grid: GridConfig { n: 512, extent: None },
            ordering: OrderingKind::Weyl,
            output_dir: "chronosim-out".to_string(),
            units: UnitsConfig::Internal,
        }
    }
}

fn method_token(m: EvolutionMethod) -> &'static str {
    match m {
        EvolutionMethod::ExactFlat => "exact-flat",
        EvolutionMethod::ExactGrid => "exact-grid",
        EvolutionMethod::Dyson => "dyson",
        EvolutionMethod::GravitationalLimit => "grav-limit",
    }
}

fn method_from_token(s: &str) -> Option<EvolutionMethod> {
    match s {
        "exact-flat" => Some(EvolutionMethod::ExactFlat),
        "exact-grid" => Some(EvolutionMethod::ExactGrid),
        "dyson" => Some(EvolutionMethod::Dyson),
        "grav-limit" => Some(EvolutionMethod::GravitationalLimit),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

struct RawMap {
    entries: BTreeMap<String, String>,
}

impl RawMap {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    idx + 1
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(Error::Parse(format!("line {}: empty key", idx + 1)));
            }
            if entries.insert(key.clone(), value).is_some() {
                return Err(Error::Parse(format!(
                    "line {}: duplicate key `{key}`",
                    idx + 1
                )));
            }
        }
        Ok(RawMap { entries })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    fn take_f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some(s) => s
                .parse::<f64>()
                .map(Some)
                .map_err(|_| Error::validation(key, format!("expected a number, got `{s}`"))),
        }
    }

    fn take_usize(&mut self, key: &str) -> Result<Option<usize>> {
        match self.take(key) {
            None => Ok(None),
            Some(s) => s.parse::<usize>().map(Some).map_err(|_| {
                Error::validation(key, format!("expected a non-negative integer, got `{s}`"))
            }),
        }
    }

    fn take_bool(&mut self, key: &str) -> Result<Option<bool>> {
        match self.take(key) {
            None => Ok(None),
            Some(s) => match s.as_str() {
                "true" => Ok(Some(true)),
                "false" => Ok(Some(false)),
                other => Err(Error::validation(
                    key,
                    format!("expected `true` or `false`, got `{other}`"),
                )),
            },
        }
    }

    /// Every key must have been consumed by now.
    fn finish(self) -> Result<()> {
        if let Some((key, _)) = self.entries.into_iter().next() {
            let hint = if key.starts_with("cm.packets[") {
                "; packet indices must be contiguous from 0 and fields must be \
                 amp_re, amp_im, p_mean, p_spread, x_mean"
            } else {
                ""
            };
            return Err(Error::validation(
                key.clone(),
                format!("unknown configuration key{hint}"),
            ));
        }
        Ok(())
    }
}

/// SI-to-internal converter for one field; identity for internal configs.
fn conv(scale: Option<&SiScale>, v: f64, f: fn(&SiScale, f64) -> f64) -> f64 {
    match scale {
        Some(s) => f(s, v),
        None => v,
    }
}

/// Parses and validates a config text. Grammar errors come back as
/// [`Error::Parse`] with a line number, field problems as
/// [`Error::Validation`] with the dotted field path.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let mut raw = RawMap::parse(text)?;
    let mut cfg = ScenarioConfig::default();

    let scale = match raw.take("units.system") {
        None => None,
        Some(s) => match s.as_str() {
            "internal" => None,
            "si" => {
                let kg = raw.take_f64("units.reference_mass_kg")?.ok_or_else(|| {
                    Error::validation(
                        "units.reference_mass_kg",
                        "required when units.system = si",
                    )
                })?;
                let sc = SiScale::new(kg)
                    .map_err(|e| Error::validation("units.reference_mass_kg", e.to_string()))?;
                cfg.units = UnitsConfig::Si { reference_mass_kg: kg };
                Some(sc)
            }
            other => {
                return Err(Error::validation(
                    "units.system",
                    format!("expected `internal` or `si`, got `{other}`"),
                ))
            }
        },
    };
    let scale = scale.as_ref();

    cfg.name = raw
        .take("name")
        .ok_or_else(|| Error::validation("name", "required"))?;

    if let Some(m) = raw.take_f64("mass")? {
        cfg.mass = conv(scale, m, SiScale::mass_to_internal);
    }
    if let Some(b) = raw.take_bool("gravity.enabled")? {
        cfg.gravity.enabled = b;
    }
    if let Some(g) = raw.take_f64("gravity.g")? {
        cfg.gravity.g = conv(scale, g, SiScale::acceleration_to_internal);
    }

    if let Some(kind) = raw.take("clock.type") {
        cfg.clock.kind = match kind.as_str() {
            "two-level" => ClockKind::TwoLevel,
            "oscillator" => ClockKind::Oscillator,
            other => {
                return Err(Error::validation(
                    "clock.type",
                    format!("expected `two-level` or `oscillator`, got `{other}`"),
                ))
            }
        };
    }
    if let Some(w) = raw.take_f64("clock.omega")? {
        cfg.clock.omega = conv(scale, w, SiScale::frequency_to_internal);
    }
    match raw.take_usize("clock.dim")? {
        Some(d) => cfg.clock.dim = d,
        None => {
            // Default dim for oscillators differs from the two-level fix.
            if cfg.clock.kind == ClockKind::Oscillator {
                cfg.clock.dim = 3;
            }
        }
    }
    if let Some(k) = raw.take_f64("clock.kappa")? {
        cfg.clock.kappa = k;
    }

    cfg.cm.theta = raw.take_f64("cm.theta")?;
    if let Some(phi) = raw.take_f64("cm.phi")? {
        if cfg.cm.theta.is_none() {
            return Err(Error::validation(
                "cm.phi",
                "only meaningful together with cm.theta",
            ));
        }
        cfg.cm.phi = phi;
    }

    let mut idx = 0usize;
    loop {
        let prefix = format!("cm.packets[{idx}]");
        let amp_re = raw.take_f64(&format!("{prefix}.amp_re"))?;
        let amp_im = raw.take_f64(&format!("{prefix}.amp_im"))?;
        let p_mean = raw.take_f64(&format!("{prefix}.p_mean"))?;
        let p_spread = raw.take_f64(&format!("{prefix}.p_spread"))?;
        let x_mean = raw.take_f64(&format!("{prefix}.x_mean"))?;
        if amp_re.is_none()
            && amp_im.is_none()
            && p_mean.is_none()
            && p_spread.is_none()
            && x_mean.is_none()
        {
            break;
        }
        if cfg.cm.theta.is_some() && (amp_re.is_some() || amp_im.is_some()) {
            return Err(Error::validation(
                "cm.theta",
                "the theta/phi shorthand and explicit packet amplitudes are mutually exclusive",
            ));
        }
        let p_spread = p_spread
            .ok_or_else(|| Error::validation(format!("{prefix}.p_spread"), "required"))?;
        cfg.cm.packets.push(PacketConfig {
            amp_re: amp_re.unwrap_or(1.0),
            amp_im: amp_im.unwrap_or(0.0),
            p_mean: conv(scale, p_mean.unwrap_or(0.0), SiScale::momentum_to_internal),
            p_spread: conv(scale, p_spread, SiScale::momentum_to_internal),
            x_mean: conv(scale, x_mean.unwrap_or(0.0), SiScale::length_to_internal),
        });
        idx += 1;
    }

    if let Some(m) = raw.take("evolution.method") {
        cfg.evolution.method = method_from_token(&m).ok_or_else(|| {
            Error::validation(
                "evolution.method",
                format!("expected exact-flat, exact-grid, dyson or grav-limit, got `{m}`"),
            )
        })?;
    }
    if let Some(list) = raw.take("evolution.t_list") {
        let mut ts = Vec::new();
        for piece in list.split(',') {
            let piece = piece.trim();
            let v: f64 = piece.parse().map_err(|_| {
                Error::validation(
                    "evolution.t_list",
                    format!("expected comma-separated numbers, got `{piece}`"),
                )
            })?;
            ts.push(conv(scale, v, SiScale::time_to_internal));
        }
        cfg.evolution.t_list = ts;
    }

    if let Some(n) = raw.take_usize("grid.n")? {
        cfg.grid.n = n;
    }
    match raw.take("grid.extent") {
        None => {}
        Some(s) if s == "auto" => cfg.grid.extent = None,
        Some(s) => {
            let v: f64 = s.parse().map_err(|_| {
                Error::validation("grid.extent", format!("expected a number or `auto`, got `{s}`"))
            })?;
            cfg.grid.extent = Some(conv(scale, v, SiScale::length_to_internal));
        }
    }

    let lambda_value = raw.take_f64("ordering.lambda_value")?;
    match raw.take("ordering.kind") {
        None => {
            if lambda_value.is_some() {
                return Err(Error::validation(
                    "ordering.lambda_value",
                    "only meaningful for ordering.kind = lambda",
                ));
            }
        }
        Some(kind) => {
            cfg.ordering = match kind.as_str() {
                "weyl" => {
                    if lambda_value.is_some() {
                        return Err(Error::validation(
                            "ordering.lambda_value",
                            "only meaningful for ordering.kind = lambda",
                        ));
                    }
                    OrderingKind::Weyl
                }
                "lambda" => OrderingKind::Lambda(lambda_value.unwrap_or(1.0)),
                other => {
                    return Err(Error::validation(
                        "ordering.kind",
                        format!("expected `weyl` or `lambda`, got `{other}`"),
                    ))
                }
            };
        }
    }

    if let Some(dir) = raw.take("output.dir") {
        cfg.output_dir = dir;
    }

    raw.finish()?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads and parses a config file; I/O problems carry the path.
pub fn config_from_file(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path).map_err(|e| io_at(path, e))?;
    parse_config(&text)
}

// ---------------------------------------------------------------------------
// Validation, canonical form, hashing
// ---------------------------------------------------------------------------

impl ScenarioConfig {
    /// Full structural validation. Every failure names the dotted field.
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::validation("name", "must not be empty"));
        }
        if !self
            .name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
        {
            return Err(Error::validation(
                "name",
                "only ASCII letters, digits, `-`, `_` and `.` are allowed",
            ));
        }
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(Error::validation(
                "mass",
                format!("must be positive and finite, got {}", self.mass),
            ));
        }
        if !self.gravity.g.is_finite() {
            return Err(Error::validation("gravity.g", "must be finite"));
        }
        if !self.gravity.enabled && self.gravity.g != 0.0 {
            return Err(Error::validation(
                "gravity.g",
                "set while gravity.enabled = false; enable gravity or drop the field",
            ));
        }
        if !(self.clock.omega.is_finite() && self.clock.omega > 0.0) {
            return Err(Error::validation(
                "clock.omega",
                format!("must be positive and finite, got {}", self.clock.omega),
            ));
        }
        match self.clock.kind {
            ClockKind::TwoLevel => {
                if self.clock.dim != 2 {
                    return Err(Error::validation(
                        "clock.dim",
                        format!("a two-level clock has dim 2, got {}", self.clock.dim),
                    ));
                }
            }
            ClockKind::Oscillator => {
                if !(2..=64).contains(&self.clock.dim) {
                    return Err(Error::validation(
                        "clock.dim",
                        format!("oscillator dim must lie in [2, 64], got {}", self.clock.dim),
                    ));
                }
            }
        }
        if !self.clock.kappa.is_finite() {
            return Err(Error::validation("clock.kappa", "must be finite"));
        }
        if let Some(theta) = self.cm.theta {
            if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&theta) {
                return Err(Error::validation(
                    "cm.theta",
                    format!("must lie in [0, pi/2], got {theta}"),
                ));
            }
            if self.cm.packets.len() != 2 {
                return Err(Error::validation(
                    "cm.theta",
                    format!(
                        "the two-packet shorthand needs exactly 2 packets, got {}",
                        self.cm.packets.len()
                    ),
                ));
            }
        }
        if !self.cm.phi.is_finite() {
            return Err(Error::validation("cm.phi", "must be finite"));
        }
        for (i, p) in self.cm.packets.iter().enumerate() {
            if !(p.p_spread.is_finite() && p.p_spread > 0.0) {
                return Err(Error::validation(
                    format!("cm.packets[{i}].p_spread"),
                    format!("must be positive and finite, got {}", p.p_spread),
                ));
            }
            if !p.p_mean.is_finite() {
                return Err(Error::validation(format!("cm.packets[{i}].p_mean"), "must be finite"));
            }
            if !p.x_mean.is_finite() {
                return Err(Error::validation(format!("cm.packets[{i}].x_mean"), "must be finite"));
            }
            if !(p.amp_re.is_finite() && p.amp_im.is_finite()) {
                return Err(Error::validation(
                    format!("cm.packets[{i}].amp_re"),
                    "amplitudes must be finite",
                ));
            }
        }
        if self.evolution.t_list.is_empty() {
            return Err(Error::validation("evolution.t_list", "must not be empty"));
        }
        for &t in &self.evolution.t_list {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::validation(
                    "evolution.t_list",
                    format!("entries must be finite and non-negative, got {t}"),
                ));
            }
        }
        match self.evolution.method {
            EvolutionMethod::ExactFlat if self.gravity.enabled => {
                return Err(Error::validation(
                    "evolution.method",
                    "exact-flat cannot include gravity; use grav-limit or exact-grid",
                ));
            }
            EvolutionMethod::GravitationalLimit if !self.gravity.enabled => {
                return Err(Error::validation(
                    "evolution.method",
                    "grav-limit needs gravity.enabled = true",
                ));
            }
            _ => {}
        }
        if !(2..=16384).contains(&self.grid.n) {
            return Err(Error::validation(
                "grid.n",
                format!("must lie in [2, 16384], got {}", self.grid.n),
            ));
        }
        if let Some(e) = self.grid.extent {
            if !(e.is_finite() && e > 0.0) {
                return Err(Error::validation(
                    "grid.extent",
                    format!("must be positive and finite, got {e}"),
                ));
            }
        }
        if let OrderingKind::Lambda(l) = self.ordering {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::validation(
                    "ordering.lambda_value",
                    format!("must lie in [0, 1], got {l}"),
                ));
            }
        }
        if self.output_dir.is_empty() {
            return Err(Error::validation("output.dir", "must not be empty"));
        }
        if let UnitsConfig::Si { reference_mass_kg } = self.units {
            if !(reference_mass_kg.is_finite() && reference_mass_kg > 0.0) {
                return Err(Error::validation(
                    "units.reference_mass_kg",
                    "must be positive and finite",
                ));
            }
        }
        Ok(())
    }

    /// The config re-serialised in the input grammar, fields in a fixed
    /// order, floats in shortest round-trip decimal form. Parsing this text
    /// reproduces the config exactly; it is also what gets hashed.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "name = {}", self.name);
        let _ = writeln!(out, "mass = {}", self.mass);
        let _ = writeln!(out, "gravity.enabled = {}", self.gravity.enabled);
        if self.gravity.enabled {
            let _ = writeln!(out, "gravity.g = {}", self.gravity.g);
        }
        let _ = writeln!(out, "clock.type = {}", self.clock.kind.token());
        let _ = writeln!(out, "clock.omega = {}", self.clock.omega);
        let _ = writeln!(out, "clock.dim = {}", self.clock.dim);
        let _ = writeln!(out, "clock.kappa = {}", self.clock.kappa);
        if let Some(theta) = self.cm.theta {
            let _ = writeln!(out, "cm.theta = {theta}");
            let _ = writeln!(out, "cm.phi = {}", self.cm.phi);
        }
        for (i, p) in self.cm.packets.iter().enumerate() {
            if self.cm.theta.is_none() {
                let _ = writeln!(out, "cm.packets[{i}].amp_re = {}", p.amp_re);
                let _ = writeln!(out, "cm.packets[{i}].amp_im = {}", p.amp_im);
            }
            let _ = writeln!(out, "cm.packets[{i}].p_mean = {}", p.p_mean);
            let _ = writeln!(out, "cm.packets[{i}].p_spread = {}", p.p_spread);
            let _ = writeln!(out, "cm.packets[{i}].x_mean = {}", p.x_mean);
        }
        let _ = writeln!(out, "evolution.method = {}", method_token(self.evolution.method));
        let ts: Vec<String> = self.evolution.t_list.iter().map(|t| format!("{t}")).collect();
        let _ = writeln!(out, "evolution.t_list = {}", ts.join(", "));
        let _ = writeln!(out, "grid.n = {}", self.grid.n);
        match self.grid.extent {
            Some(e) => {
                let _ = writeln!(out, "grid.extent = {e}");
            }
            None => {
                let _ = writeln!(out, "grid.extent = auto");
            }
        }
        match self.ordering {
            OrderingKind::Weyl => {
                let _ = writeln!(out, "ordering.kind = weyl");
            }
            OrderingKind::Lambda(l) => {
                let _ = writeln!(out, "ordering.kind = lambda");
                let _ = writeln!(out, "ordering.lambda_value = {l}");
            }
        }
        let _ = writeln!(out, "output.dir = {}", self.output_dir);
        out
    }

    /// SHA-256 of [`canonical_text`](Self::canonical_text), hex encoded.
    /// Identical configs hash identically across runs.
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_text().as_bytes());
        let mut hex = String::with_capacity(64);
        for byte in digest {
            let _ = write!(hex, "{byte:02x}");
        }
        hex
    }

    fn units_label(&self) -> String {
        match self.units {
            UnitsConfig::Internal => "internal (hbar = c = 1)".to_string(),
            UnitsConfig::Si { reference_mass_kg } => format!(
                "si input (reference mass {reference_mass_kg} kg) converted to internal (hbar = c = 1)"
            ),
        }
    }
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

/// One output row; always one per `t_list` entry. Columns a scenario does
/// not produce stay NaN. `extra` lands in the CSV as a JSON object.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub t: f64,
    pub rate: f64,
    pub residual: f64,
    pub trace_drift: f64,
    pub measure: f64,
    pub failed: bool,
    pub extra: BTreeMap<String, Value>,
}

impl ResultRow {
    pub fn at(t: f64) -> Self {
        ResultRow {
            t,
            rate: f64::NAN,
            residual: f64::NAN,
            trace_drift: f64::NAN,
            measure: f64::NAN,
            failed: false,
            extra: BTreeMap::new(),
        }
    }

    /// Inserts a numeric note, silently dropping non-finite values (JSON
    /// has no NaN).
    pub fn note_num(&mut self, key: &str, v: f64) {
        if let Some(n) = serde_json::Number::from_f64(v) {
            self.extra.insert(key.to_string(), Value::Number(n));
        }
    }

    pub fn note_str(&mut self, key: &str, v: impl Into<String>) {
        self.extra.insert(key.to_string(), Value::String(v.into()));
    }

    fn failed_with(t: f64, message: &str) -> Self {
        let mut row = ResultRow::at(t);
        row.failed = true;
        row.note_str("error", message);
        row
    }
}

/// Everything one scenario run produced.
#[derive(Debug, Clone)]
pub struct ResultRecord {
    pub scenario: String,
    pub rows: Vec<ResultRow>,
    /// Named pass/fail checks; `true` means the scenario behaved.
    pub verdicts: BTreeMap<String, bool>,
    /// Fitted slopes and their fit quality for scaling studies.
    pub slopes: BTreeMap<String, f64>,
    /// Record-level scalar diagnostics.
    pub metrics: BTreeMap<String, f64>,
    /// Set when the driver aborted partway; rows past that point carry the
    /// same message in their `extra` map.
    pub compute_error: Option<String>,
    pub units: String,
    pub tool_version: String,
    pub config_hash: String,
}

impl ResultRecord {
    fn new(cfg: &ScenarioConfig) -> Self {
        ResultRecord {
            scenario: cfg.name.clone(),
            rows: Vec::new(),
            verdicts: BTreeMap::new(),
            slopes: BTreeMap::new(),
            metrics: BTreeMap::new(),
            compute_error: None,
            units: cfg.units_label(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: cfg.config_hash(),
        }
    }

    pub fn any_row_failed(&self) -> bool {
        self.rows.iter().any(|r| r.failed)
    }

    /// True when anything went wrong during compute: a failed row or a
    /// driver abort after the last complete row.
    pub fn compute_failed(&self) -> bool {
        self.compute_error.is_some() || self.any_row_failed()
    }

    pub fn all_verdicts_hold(&self) -> bool {
        self.verdicts.values().all(|&v| v)
    }

    /// And-folds a named verdict across repeated checks.
    fn verdict_and(&mut self, key: &str, value: bool) {
        self.verdicts
            .entry(key.to_string())
            .and_modify(|v| *v &= value)
            .or_insert(value);
    }
}

/// Harness-level overrides from the command line.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub grid_n: Option<usize>,
    /// Replaces the headline verdict tolerance of builtin scenarios.
    pub tol: Option<f64>,
}

impl RunOptions {
    fn check(&self) -> Result<()> {
        if let Some(n) = self.grid_n {
            if !(2..=16384).contains(&n) {
                return Err(Error::validation(
                    "--grid-n",
                    format!("must lie in [2, 16384], got {n}"),
                ));
            }
        }
        if let Some(tol) = self.tol {
            if !(tol.is_finite() && tol > 0.0) {
                return Err(Error::validation(
                    "--tol",
                    format!("must be positive and finite, got {tol}"),
                ));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

/// Registry entry of a builtin scenario.
#[derive(Debug, Clone, Copy)]
pub struct ScenarioInfo {
    pub name: &'static str,
    pub summary: &'static str,
}

const REGISTRY: &[ScenarioInfo] = &[
    ScenarioInfo {
        name: "kinematic-universality",
        summary: "Two clock mechanisms read the same kinematic slowdown on a relativistic packet.",
    },
    ScenarioInfo {
        name: "dephasing-invariance",
        summary: "Random momentum superpositions and their dephased mixtures give identical readouts.",
    },
    ScenarioInfo {
        name: "special-relativistic-limit",
        summary: "A narrow fast packet slows a two-level clock by the inverse Lorentz factor.",
    },
    ScenarioInfo {
        name: "dyson-truncation-order",
        summary: "First-order short-time expansion deviates from the exact propagator at order t^2.",
    },
    ScenarioInfo {
        name: "pn-residual-scaling",
        summary: "Quadratic weak-field metric truncation leaves a cubic residual in the field strength.",
    },
    ScenarioInfo {
        name: "weyl-trace-equivalence",
        summary: "Operator-word and phase-space-integral expectation routes agree on grid states.",
    },
    ScenarioInfo {
        name: "quantum-dilation-measure",
        summary: "Rate difference between a packet superposition and the matching classical mixture.",
    },
    ScenarioInfo {
        name: "coherent-discrimination",
        summary: "Momentum-split coherent pairs shift a clock; position-split pairs cannot.",
    },
    ScenarioInfo {
        name: "gravitational-nonuniversality",
        summary: "Internal-energy-dependent couplings split clock rates in a uniform field.",
    },
];

/// Builtin scenario names and one-line descriptions, in a fixed order.
pub fn list_scenarios() -> &'static [ScenarioInfo] {
    REGISTRY
}

/// The preset config behind a builtin name, if the name is one.
pub fn builtin_config(name: &str) -> Option<ScenarioConfig> {
    let base = |n: &str| ScenarioConfig {
        name: n.to_string(),
        ..ScenarioConfig::default()
    };
    let cfg = match name {
        "kinematic-universality" => {
            let mut c = base(name);
            c.mass = 1000.0;
            c.cm.packets = vec![PacketConfig {
                amp_re: 1.0,
                amp_im: 0.0,
                p_mean: 10.0,
                p_spread: 10.0,
                x_mean: 0.0,
            }];
            c
        }
        "dephasing-invariance" => {
            let mut c = base(name);
            c.mass = 14.0;
            c.grid.n = 256;
            c
        }
        "special-relativistic-limit" => {
            let mut c = base(name);
            c.mass = 4.0;
            c.clock.omega = 1e-3;
            c.cm.packets = vec![PacketConfig {
                amp_re: 1.0,
                amp_im: 0.0,
                p_mean: 3.0,
                p_spread: 0.02,
                x_mean: 0.0,
            }];
            c.evolution.t_list = vec![0.5, 1.0, 2.0];
            c
        }
        "dyson-truncation-order" => {
            let mut c = base(name);
            c.mass = 12.0;
            c.grid.n = 128;
            c.evolution.method = EvolutionMethod::Dyson;
            c.evolution.t_list = (0..7).map(|k| 10f64.powf(-2.0 + k as f64 / 6.0)).collect();
            c.cm.packets = vec![PacketConfig {
                amp_re: 1.0,
                amp_im: 0.0,
                p_mean: 0.0,
                p_spread: 0.5,
                x_mean: 0.0,
            }];
            c
        }
        "pn-residual-scaling" => {
            let mut c = base(name);
            // t axis is the expansion parameter eps = G M / r.
            c.evolution.t_list = (0..13).map(|k| 10f64.powf(-5.0 + 0.25 * k as f64)).collect();
            c
        }
        "weyl-trace-equivalence" => {
            let mut c = base(name);
            c.grid.n = 256;
            // t axis indexes the probe states.
            c.evolution.t_list = (0..10).map(|k| k as f64).collect();
            c
        }
        "quantum-dilation-measure" => {
            let mut c = base(name);
            c.mass = 12.5;
            // Branches with |<1|2>| = 1/2 via position displacement.
            let dx = (2.0 * 2f64.ln()).sqrt() / 0.25;
            c.cm.packets = vec![
                PacketConfig {
                    amp_re: 1.0,
                    amp_im: 0.0,
                    p_mean: 0.5,
                    p_spread: 0.25,
                    x_mean: -0.5 * dx,
                },
                PacketConfig {
                    amp_re: 1.0,
                    amp_im: 0.0,
                    p_mean: 0.5,
                    p_spread: 0.25,
                    x_mean: 0.5 * dx,
                },
            ];
            c.cm.theta = Some(std::f64::consts::FRAC_PI_4);
            // t axis is the relative branch phase phi.
            c.evolution.t_list = (0..5)
                .map(|k| k as f64 * std::f64::consts::PI / 4.0)
                .collect();
            c
        }
        "coherent-discrimination" => {
            let mut c = base(name);
            // t axis is the real coherent displacement of the second label.
            c.evolution.t_list = vec![0.0, 0.5, 1.0, 1.5, 2.0];
            c
        }
        "gravitational-nonuniversality" => {
            let mut c = base(name);
            c.gravity = GravityConfig { enabled: true, g: 1e-4 };
            c.evolution.method = EvolutionMethod::GravitationalLimit;
            // t axis is the mechanism-sensitivity parameter kappa.
            c.evolution.t_list = vec![0.0, 0.5, 1.0];
            c.cm.packets = vec![PacketConfig {
                amp_re: 1.0,
                amp_im: 0.0,
                p_mean: 0.0,
                p_spread: 50.0,
                x_mean: 2.0,
            }];
            c
        }
        _ => return None,
    };
    Some(cfg)
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

/// Validates, then executes. Only validation problems surface as errors;
/// compute failures are recorded per row with the row marked failed, so the
/// returned record always has one row per `t_list` entry.
pub fn run_scenario(config: &ScenarioConfig, options: &RunOptions) -> Result<ResultRecord> {
    options.check()?;
    config.validate()?;
    let mut cfg = config.clone();
    if let Some(n) = options.grid_n {
        cfg.grid.n = n;
    }
    let mut record = ResultRecord::new(&cfg);
    if let Err(e) = drivers::dispatch(&cfg, options, &mut record) {
        // Field problems a driver detects before producing anything are
        // still rejections. Anything later is a compute failure and fills
        // the remaining rows so the one-row-per-t shape survives.
        if record.rows.is_empty() {
            if let Error::Validation { .. } = e {
                return Err(e);
            }
        }
        let message = e.to_string();
        record.compute_error = Some(message.clone());
        while record.rows.len() < cfg.evolution.t_list.len() {
            let t = cfg.evolution.t_list[record.rows.len()];
            record.rows.push(ResultRow::failed_with(t, &message));
        }
    }
    debug_assert_eq!(record.rows.len(), cfg.evolution.t_list.len());
    Ok(record)
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

/// Paths written by [`emit_outputs`].
#[derive(Debug, Clone)]
pub struct EmittedFiles {
    pub results_csv: PathBuf,
    pub summary_json: PathBuf,
    pub plot_script: PathBuf,
}

fn io_at(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn fmt_field(v: f64) -> String {
    format!("{v}")
}

fn csv_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

fn extra_json_text(row: &ResultRow) -> String {
    let mut map = serde_json::Map::new();
    if row.failed {
        map.insert("failed".to_string(), Value::Bool(true));
    }
    for (k, v) in &row.extra {
        map.insert(k.clone(), v.clone());
    }
    Value::Object(map).to_string()
}

fn render_csv(records: &[ResultRecord]) -> String {
    let mut out = String::from("scenario,t,rate,residual,trace_drift,measure,extra_json\n");
    for record in records {
        for row in &record.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                record.scenario,
                fmt_field(row.t),
                fmt_field(row.rate),
                fmt_field(row.residual),
                fmt_field(row.trace_drift),
                fmt_field(row.measure),
                csv_quote(&extra_json_text(row)),
            );
        }
    }
    out
}

fn json_num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

fn render_summary(records: &[ResultRecord]) -> String {
    let mut scenarios = serde_json::Map::new();
    for record in records {
        let mut entry = serde_json::Map::new();
        entry.insert("config_hash".to_string(), Value::String(record.config_hash.clone()));
        entry.insert("units".to_string(), Value::String(record.units.clone()));
        entry.insert("rows".to_string(), Value::from(record.rows.len()));
        entry.insert(
            "failed_rows".to_string(),
            Value::from(record.rows.iter().filter(|r| r.failed).count()),
        );
        entry.insert(
            "compute_error".to_string(),
            record
                .compute_error
                .as_ref()
                .map_or(Value::Null, |m| Value::String(m.clone())),
        );
        entry.insert(
            "rates".to_string(),
            Value::Array(record.rows.iter().map(|r| json_num(r.rate)).collect()),
        );
        entry.insert(
            "verdicts".to_string(),
            Value::Object(
                record
                    .verdicts
                    .iter()
                    .map(|(k, &v)| (k.clone(), Value::Bool(v)))
                    .collect(),
            ),
        );
        entry.insert(
            "slopes".to_string(),
            Value::Object(
                record
                    .slopes
                    .iter()
                    .map(|(k, &v)| (k.clone(), json_num(v)))
                    .collect(),
            ),
        );
        entry.insert(
            "metrics".to_string(),
            Value::Object(
                record
                    .metrics
                    .iter()
                    .map(|(k, &v)| (k.clone(), json_num(v)))
                    .collect(),
            ),
        );
        scenarios.insert(record.scenario.clone(), Value::Object(entry));
    }
    let mut root = serde_json::Map::new();
    root.insert(
        "tool_version".to_string(),
        Value::String(env!("CARGO_PKG_VERSION").to_string()),
    );
    root.insert("scenarios".to_string(), Value::Object(scenarios));
    let mut text = serde_json::to_string_pretty(&Value::Object(root))
        .expect("summary serialization cannot fail");
    text.push('\n');
    text
}

const PLOT_SCRIPT: &str = r#"# Companion plots for results.csv (same directory).
# Column map: 1 scenario, 2 t (scenario axis), 3 rate, 4 residual,
#             5 trace_drift, 6 measure, 7 extra_json.
set datafile separator ','
set style data linespoints
set key outside
set grid

set terminal pngcairo size 900,600

set output 'rate_vs_t.png'
set xlabel 't (scenario axis)'
set ylabel 'rate'
plot 'results.csv' using 2:3 title 'fitted rate'

set output 'residual_vs_t.png'
set logscale y
set ylabel 'residual / drift'
plot 'results.csv' using 2:4 title 'fit residual', \
     'results.csv' using 2:5 title 'trace drift'

set output 'measure_vs_t.png'
unset logscale
set ylabel 'measure'
plot 'results.csv' using 2:6 title 'measure'
"#;

/// Writes `results.csv`, `summary.json` and `plot.gp` into `dir`, creating
/// it if needed. Byte-deterministic for identical records; I/O errors carry
/// the offending path.
pub fn emit_outputs(records: &[ResultRecord], dir: &Path) -> Result<EmittedFiles> {
    if records.is_empty() {
        return Err(Error::invalid("emit_outputs needs at least one result record"));
    }
    fs::create_dir_all(dir).map_err(|e| io_at(dir, e))?;
    let results_csv = dir.join("results.csv");
    fs::write(&results_csv, render_csv(records)).map_err(|e| io_at(&results_csv, e))?;
    let summary_json = dir.join("summary.json");
    fs::write(&summary_json, render_summary(records)).map_err(|e| io_at(&summary_json, e))?;
    let plot_script = dir.join("plot.gp");
    fs::write(&plot_script, PLOT_SCRIPT).map_err(|e| io_at(&plot_script, e))?;
    Ok(EmittedFiles {
        results_csv,
        summary_json,
        plot_script,
    })
}
