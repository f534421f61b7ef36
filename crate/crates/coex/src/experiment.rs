//! Config-driven batch runs producing deterministic CSV artifacts.
//!
//! A scenario file describes one experiment: the deployment square, the
//! radii, the MAC grid (contention windows), the broadcast-intensity grid,
//! optional interferers, Monte Carlo settings, and output paths. `run`
//! evaluates the analytical chain over the full grid, the simulator over
//! its (possibly restricted) grid, joins the two into a long-format
//! comparison table, and optionally dumps the inverse-area fit
//! coefficients for the standard radius ladder.
//!
//! ## Config grammar
//!
//! Line-oriented and human-diffable. `#` starts a comment, blank lines are
//! ignored, `[name]` opens a section, and every other line is `key =
//! value`. No section or key may repeat. Lists are comma-separated.
//! Intensities are tagged with their normalization, either `per-disc:`
//! (nodes per carrier-sense disc) or `per-m2:` (nodes per square meter).
//!
//! ```text
//! [space]
//! side_m = 2000
//!
//! [radii]
//! carrier_sense_m = 500
//! transmission_m = 500
//!
//! [mac]
//! cw = 15, 255
//! slots_per_period = 1500
//! beacon_slots = 2
//! slot_us = 66.7
//!
//! [dsrc]
//! intensity = per-disc: 3, 13, 35
//!
//! [interferer.wifi]           # optional
//! intensity = per-disc: 500
//!
//! [interferer.cv2x]           # optional
//! intensity = per-disc: 300
//! activity = 0.5
//!
//! [mc]
//! enabled = true
//! n_trials = 2000
//! seed = 42
//! intensity = per-disc: 3, 13   # optional: restricts the simulated grid
//! cw = 15                       # optional: restricts the simulated grid
//!
//! [output]
//! analytical = analytical.csv
//! montecarlo = montecarlo.csv
//! comparison = comparison.csv
//! fit_table = fits.csv          # optional
//! ```
//!
//! Parsing is strict (unknown sections or keys are line-precise errors);
//! semantic problems are collected by [`diagnostics`] with field paths, so
//! one validate pass reports every issue at once.
//!
//! Determinism: numeric cells use the shortest round-trip decimal form,
//! grids are walked in declaration order, trial streams are derived from
//! the configured seed, and files are written single-threaded, so a
//! (config, seed) pair always produces byte-identical artifacts.

use rayon::prelude::*;
use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::geometry::{
    fit_inverse_area, QuadraticFit, Radii, SystemSpace, DEFAULT_FIT_SAMPLES,
};
use crate::interference::{CoexScenario, RatProfile};
use crate::metrics::{self, MetricsReport};
use crate::montecarlo::{estimate_scalars, ScalarEstimates};
use crate::temporal::MacParams;
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Configuration model
// ---------------------------------------------------------------------------

/// How an intensity value is normalized in the config file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IntensityTag {
    /// Nodes per carrier-sense disc.
    PerDisc,
    /// Nodes per square meter.
    PerM2,
}

impl fmt::Display for IntensityTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IntensityTag::PerDisc => "per-disc",
            IntensityTag::PerM2 => "per-m2",
        })
    }
}

/// A tagged list of intensities, kept in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct IntensityList {
    pub tag: IntensityTag,
    pub values: Vec<f64>,
}

impl IntensityList {
    /// Values converted to nodes per square meter.
    pub fn per_m2(&self, radii: Radii) -> Vec<f64> {
        match self.tag {
            IntensityTag::PerM2 => self.values.clone(),
            IntensityTag::PerDisc => {
                self.values.iter().map(|v| v / radii.sense_area_m2()).collect()
            }
        }
    }
}

/// One interferer population from an `[interferer.*]` section.
#[derive(Clone, Debug, PartialEq)]
pub struct InterfererConfig {
    pub intensity_tag: IntensityTag,
    pub intensity: f64,
    /// Probability a C-V2X subframe is occupied; absent for Wi-Fi.
    pub activity: Option<f64>,
}

impl InterfererConfig {
    fn intensity_per_m2(&self, radii: Radii) -> f64 {
        match self.intensity_tag {
            IntensityTag::PerM2 => self.intensity,
            IntensityTag::PerDisc => self.intensity / radii.sense_area_m2(),
        }
    }
}

/// Monte Carlo controls from the `[mc]` section.
#[derive(Clone, Debug, PartialEq)]
pub struct McSettings {
    pub enabled: bool,
    pub n_trials: Option<usize>,
    pub seed: Option<u64>,
    /// Restriction of the simulated intensity grid; full grid when absent.
    pub intensities: Option<IntensityList>,
    /// Restriction of the simulated contention-window grid.
    pub cw_list: Option<Vec<u32>>,
}

impl Default for McSettings {
    fn default() -> Self {
        McSettings { enabled: false, n_trials: None, seed: None, intensities: None, cw_list: None }
    }
}

/// Artifact paths from the `[output]` section, relative to the output
/// directory chosen at run time.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputPaths {
    pub analytical: String,
    pub montecarlo: Option<String>,
    pub comparison: Option<String>,
    pub fit_table: Option<String>,
}

/// Full experiment description, as parsed. Scalar fields stay raw so
/// [`diagnostics`] can report semantic problems with field paths instead
/// of failing at the first constructor.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub side_m: f64,
    pub carrier_sense_m: f64,
    pub transmission_m: f64,
    pub cw_list: Vec<u32>,
    pub slots_per_period: u32,
    pub beacon_slots: u32,
    pub slot_us: f64,
    pub dsrc_intensities: IntensityList,
    pub wifi: Option<InterfererConfig>,
    pub cv2x: Option<InterfererConfig>,
    pub mc: McSettings,
    pub output: OutputPaths,
}

/// One semantic problem found by [`diagnostics`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    /// Dotted path of the offending field, e.g. `mac.beacon_slots`.
    pub field: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Entry {
    key: String,
    value: String,
    line: usize,
    used: bool,
}

struct Section {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::ConfigParse { line, message: message.into() }
}

fn take_section(by_name: &mut HashMap<String, Section>, name: &str) -> Option<SectionReader> {
    by_name.remove(name).map(|section| SectionReader { section })
}

fn require_section(
    by_name: &mut HashMap<String, Section>,
    name: &'static str,
) -> Result<SectionReader> {
    take_section(by_name, name)
        .ok_or_else(|| Error::config(format!("missing required section [{name}]")))
}

fn lex(text: &str) -> Result<Vec<Section>> {
    let mut sections: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| parse_err(line, format!("unterminated section header `{content}`")))?
                .trim();
            if name.is_empty() {
                return Err(parse_err(line, "empty section name"));
            }
            if let Some(prev) = sections.iter().find(|s| s.name == name) {
                return Err(parse_err(
                    line,
                    format!("section [{name}] already declared at line {}", prev.line),
                ));
            }
            sections.push(Section { name: name.to_string(), line, entries: Vec::new() });
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| parse_err(line, format!("expected `key = value`, got `{content}`")))?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            return Err(parse_err(line, "empty key"));
        }
        let section = sections
            .last_mut()
            .ok_or_else(|| parse_err(line, format!("`{key}` appears before any [section]")))?;
        if let Some(prev) = section.entries.iter().find(|e| e.key == key) {
            return Err(parse_err(
                line,
                format!("key `{key}` already set at line {}", prev.line),
            ));
        }
        section.entries.push(Entry {
            key: key.to_string(),
            value: value.to_string(),
            line,
            used: false,
        });
    }
    Ok(sections)
}

/// Owns one lexed section and tracks which keys were consumed.
struct SectionReader {
    section: Section,
}

impl SectionReader {
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.section.entries.iter_mut().find(|e| e.key == key).map(|e| {
            e.used = true;
            (e.value.clone(), e.line)
        })
    }

    fn require(&mut self, key: &str) -> Result<(String, usize)> {
        let name = self.section.name.clone();
        let line = self.section.line;
        self.take(key)
            .ok_or_else(|| parse_err(line, format!("section [{name}] is missing key `{key}`")))
    }

    fn finish(self) -> Result<()> {
        if let Some(e) = self.section.entries.iter().find(|e| !e.used) {
            return Err(parse_err(
                e.line,
                format!("unknown key `{}` in section [{}]", e.key, self.section.name),
            ));
        }
        Ok(())
    }
}

fn parse_f64(value: &str, line: usize) -> Result<f64> {
    value.parse().map_err(|_| parse_err(line, format!("`{value}` is not a number")))
}

fn parse_u32(value: &str, line: usize) -> Result<u32> {
    value.parse().map_err(|_| parse_err(line, format!("`{value}` is not a nonnegative integer")))
}

fn parse_u64(value: &str, line: usize) -> Result<u64> {
    value.parse().map_err(|_| parse_err(line, format!("`{value}` is not a nonnegative integer")))
}

fn parse_usize(value: &str, line: usize) -> Result<usize> {
    value.parse().map_err(|_| parse_err(line, format!("`{value}` is not a nonnegative integer")))
}

fn parse_bool(value: &str, line: usize) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(parse_err(line, format!("`{value}` is not `true` or `false`"))),
    }
}

fn parse_f64_list(value: &str, line: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = value
        .split(',')
        .map(|v| parse_f64(v.trim(), line))
        .collect::<Result<_>>()?;
    if values.is_empty() {
        return Err(parse_err(line, "empty list"));
    }
    Ok(values)
}

fn parse_u32_list(value: &str, line: usize) -> Result<Vec<u32>> {
    value.split(',').map(|v| parse_u32(v.trim(), line)).collect()
}

/// Parses `per-disc: v, v, ...` or `per-m2: v, v, ...`.
fn parse_tagged_list(value: &str, line: usize) -> Result<IntensityList> {
    let (tag, rest) = value.split_once(':').ok_or_else(|| {
        parse_err(line, format!("intensity `{value}` needs a `per-disc:` or `per-m2:` tag"))
    })?;
    let tag = match tag.trim() {
        "per-disc" => IntensityTag::PerDisc,
        "per-m2" => IntensityTag::PerM2,
        other => {
            return Err(parse_err(
                line,
                format!("unknown intensity tag `{other}` (expected `per-disc` or `per-m2`)"),
            ))
        }
    };
    Ok(IntensityList { tag, values: parse_f64_list(rest, line)? })
}

/// Same, but for keys that carry exactly one intensity.
fn parse_tagged_scalar(value: &str, line: usize) -> Result<(IntensityTag, f64)> {
    let list = parse_tagged_list(value, line)?;
    if list.values.len() != 1 {
        return Err(parse_err(line, format!("expected one intensity, got {}", list.values.len())));
    }
    Ok((list.tag, list.values[0]))
}

/// Parses a config file's text into a [`ScenarioConfig`].
///
/// Grammar violations (malformed lines, unknown sections or keys, missing
/// keys, repeated declarations) come back as line-precise
/// [`Error::ConfigParse`] values; semantic range checks are deferred to
/// [`diagnostics`].
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let sections = lex(text)?;
    let known = [
        "space",
        "radii",
        "mac",
        "dsrc",
        "interferer.wifi",
        "interferer.cv2x",
        "mc",
        "output",
    ];
    if let Some(s) = sections.iter().find(|s| !known.contains(&s.name.as_str())) {
        return Err(parse_err(s.line, format!("unknown section [{}]", s.name)));
    }
    // The lexer rejected duplicates, so names key the sections uniquely.
    let mut by_name: HashMap<String, Section> =
        sections.into_iter().map(|s| (s.name.clone(), s)).collect();

    let mut space = require_section(&mut by_name, "space")?;
    let (v, l) = space.require("side_m")?;
    let side_m = parse_f64(&v, l)?;
    space.finish()?;

    let mut radii = require_section(&mut by_name, "radii")?;
    let (v, l) = radii.require("carrier_sense_m")?;
    let carrier_sense_m = parse_f64(&v, l)?;
    let (v, l) = radii.require("transmission_m")?;
    let transmission_m = parse_f64(&v, l)?;
    radii.finish()?;

    let mut mac = require_section(&mut by_name, "mac")?;
    let (v, l) = mac.require("cw")?;
    let cw_list = parse_u32_list(&v, l)?;
    let (v, l) = mac.require("slots_per_period")?;
    let slots_per_period = parse_u32(&v, l)?;
    let (v, l) = mac.require("beacon_slots")?;
    let beacon_slots = parse_u32(&v, l)?;
    let (v, l) = mac.require("slot_us")?;
    let slot_us = parse_f64(&v, l)?;
    mac.finish()?;

    let mut dsrc = require_section(&mut by_name, "dsrc")?;
    let (v, l) = dsrc.require("intensity")?;
    let dsrc_intensities = parse_tagged_list(&v, l)?;
    dsrc.finish()?;

    let wifi = match take_section(&mut by_name, "interferer.wifi") {
        None => None,
        Some(mut s) => {
            let (v, l) = s.require("intensity")?;
            let (intensity_tag, intensity) = parse_tagged_scalar(&v, l)?;
            s.finish()?;
            Some(InterfererConfig { intensity_tag, intensity, activity: None })
        }
    };

    let cv2x = match take_section(&mut by_name, "interferer.cv2x") {
        None => None,
        Some(mut s) => {
            let (v, l) = s.require("intensity")?;
            let (intensity_tag, intensity) = parse_tagged_scalar(&v, l)?;
            let (v, l) = s.require("activity")?;
            let activity = Some(parse_f64(&v, l)?);
            s.finish()?;
            Some(InterfererConfig { intensity_tag, intensity, activity })
        }
    };

    let mc = match take_section(&mut by_name, "mc") {
        None => McSettings::default(),
        Some(mut s) => {
            let (v, l) = s.require("enabled")?;
            let enabled = parse_bool(&v, l)?;
            let n_trials = s.take("n_trials").map(|(v, l)| parse_usize(&v, l)).transpose()?;
            let seed = s.take("seed").map(|(v, l)| parse_u64(&v, l)).transpose()?;
            let intensities =
                s.take("intensity").map(|(v, l)| parse_tagged_list(&v, l)).transpose()?;
            let cw_list = s.take("cw").map(|(v, l)| parse_u32_list(&v, l)).transpose()?;
            s.finish()?;
            McSettings { enabled, n_trials, seed, intensities, cw_list }
        }
    };

    let mut output = require_section(&mut by_name, "output")?;
    let (analytical, _) = output.require("analytical")?;
    let montecarlo = output.take("montecarlo").map(|(v, _)| v);
    let comparison = output.take("comparison").map(|(v, _)| v);
    let fit_table = output.take("fit_table").map(|(v, _)| v);
    output.finish()?;

    Ok(ScenarioConfig {
        side_m,
        carrier_sense_m,
        transmission_m,
        cw_list,
        slots_per_period,
        beacon_slots,
        slot_us,
        dsrc_intensities,
        wifi,
        cv2x,
        mc,
        output: OutputPaths { analytical, montecarlo, comparison, fit_table },
    })
}

// ---------------------------------------------------------------------------
// Semantic validation
// ---------------------------------------------------------------------------

/// Collects every semantic problem in a parsed config. An empty result
/// means [`run`] will accept it.
pub fn diagnostics(cfg: &ScenarioConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut push = |field: &str, message: String| {
        out.push(Diagnostic { field: field.to_string(), message });
    };

    if !(cfg.side_m > 0.0) || !cfg.side_m.is_finite() {
        push("space.side_m", format!("must be positive and finite, got {}", cfg.side_m));
    }
    if !(cfg.carrier_sense_m > 0.0) || !cfg.carrier_sense_m.is_finite() {
        push("radii.carrier_sense_m", format!("must be positive, got {}", cfg.carrier_sense_m));
    }
    if !(cfg.transmission_m > 0.0) || !cfg.transmission_m.is_finite() {
        push("radii.transmission_m", format!("must be positive, got {}", cfg.transmission_m));
    }
    if cfg.transmission_m > cfg.carrier_sense_m {
        push(
            "radii.transmission_m",
            format!(
                "transmission radius {} exceeds radii.carrier_sense_m = {}",
                cfg.transmission_m, cfg.carrier_sense_m
            ),
        );
    }

    if cfg.beacon_slots == 0 {
        push("mac.beacon_slots", "must be at least 1".to_string());
    }
    if cfg.beacon_slots >= cfg.slots_per_period {
        push(
            "mac.beacon_slots",
            format!(
                "beacon length {} must be smaller than mac.slots_per_period = {}",
                cfg.beacon_slots, cfg.slots_per_period
            ),
        );
    }
    if !(cfg.slot_us > 0.0) || !cfg.slot_us.is_finite() {
        push("mac.slot_us", format!("must be positive, got {}", cfg.slot_us));
    }
    let budget = cfg.slots_per_period.saturating_sub(cfg.beacon_slots);
    for &cw in &cfg.cw_list {
        if cw < 1 || cw > budget {
            push("mac.cw", format!("contention window {cw} outside [1, {budget}]"));
        }
    }

    for (i, &v) in cfg.dsrc_intensities.values.iter().enumerate() {
        if !(v >= 0.0) || !v.is_finite() {
            push("dsrc.intensity", format!("entry {i} must be nonnegative, got {v}"));
        }
    }

    for (field, interferer) in
        [("interferer.wifi", &cfg.wifi), ("interferer.cv2x", &cfg.cv2x)]
    {
        let Some(c) = interferer else { continue };
        if !(c.intensity >= 0.0) || !c.intensity.is_finite() {
            push(field, format!("intensity must be nonnegative, got {}", c.intensity));
        }
        if field == "interferer.cv2x" {
            match c.activity {
                Some(a) if (0.0..=1.0).contains(&a) => {}
                Some(a) => push("interferer.cv2x.activity", format!("{a} outside [0, 1]")),
                None => push("interferer.cv2x.activity", "required".to_string()),
            }
        }
    }

    if cfg.mc.enabled {
        let min_side = 4.0 * cfg.carrier_sense_m;
        if cfg.side_m < min_side {
            push(
                "space.side_m",
                format!(
                    "Monte Carlo needs side_m >= 4 x radii.carrier_sense_m = {min_side}, got {}",
                    cfg.side_m
                ),
            );
        }
        match cfg.mc.n_trials {
            Some(n) if n >= 100 => {}
            Some(n) => push("mc.n_trials", format!("{n} is too small; need at least 100")),
            None => push("mc.n_trials", "required when mc.enabled = true".to_string()),
        }
        if cfg.mc.seed.is_none() {
            push("mc.seed", "required when mc.enabled = true".to_string());
        }
        if cfg.output.montecarlo.is_none() {
            push("output.montecarlo", "required when mc.enabled = true".to_string());
        }
        if cfg.output.comparison.is_none() {
            push("output.comparison", "required when mc.enabled = true".to_string());
        }
        if let Some(sub) = &cfg.mc.cw_list {
            for &cw in sub {
                if !cfg.cw_list.contains(&cw) {
                    push("mc.cw", format!("{cw} is not on the mac.cw axis"));
                }
            }
        }
        if let Some(sub) = &cfg.mc.intensities {
            if sub.tag != cfg.dsrc_intensities.tag {
                push(
                    "mc.intensity",
                    format!(
                        "tag {} does not match dsrc.intensity tag {}",
                        sub.tag, cfg.dsrc_intensities.tag
                    ),
                );
            } else {
                for &v in &sub.values {
                    if !cfg.dsrc_intensities.values.contains(&v) {
                        push("mc.intensity", format!("{v} is not on the dsrc.intensity axis"));
                    }
                }
            }
        }
    }

    out
}

fn reject_on_diagnostics(cfg: &ScenarioConfig) -> Result<()> {
    let problems = diagnostics(cfg);
    if problems.is_empty() {
        return Ok(());
    }
    let listing: Vec<String> = problems.iter().map(Diagnostic::to_string).collect();
    Err(Error::config(listing.join("; ")))
}

// ---------------------------------------------------------------------------
// Run
// ---------------------------------------------------------------------------

/// Paths of the artifacts a [`run`] produced.
#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub analytical: PathBuf,
    pub montecarlo: Option<PathBuf>,
    pub comparison: Option<PathBuf>,
    pub fit_table: Option<PathBuf>,
}

/// The standard radius ladder for fit-coefficient tables, in meters.
pub const STANDARD_FIT_RADII_M: [f64; 20] = [
    100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0, 900.0, 1000.0, 1100.0, 1200.0,
    1300.0, 1400.0, 1500.0, 1600.0, 1700.0, 1800.0, 1900.0, 2000.0,
];

fn csv_quote(text: &str) -> String {
    format!("\"{}\"", text.replace('"', "\"\""))
}

fn scenario_grid(cfg: &ScenarioConfig) -> Result<Vec<(f64, u32, CoexScenario)>> {
    let radii = Radii::new(cfg.carrier_sense_m, cfg.transmission_m)?;
    let space = SystemSpace::new(cfg.side_m)?;
    let mut interferers = Vec::new();
    if let Some(w) = &cfg.wifi {
        interferers.push(RatProfile::wifi(w.intensity_per_m2(radii)));
    }
    if let Some(c) = &cfg.cv2x {
        interferers.push(RatProfile::cv2x(
            c.intensity_per_m2(radii),
            c.activity.expect("validated config has an activity"),
        ));
    }
    let mut grid = Vec::new();
    for &intensity in &cfg.dsrc_intensities.per_m2(radii) {
        for &cw in &cfg.cw_list {
            let mac = MacParams::new(cw, cfg.slots_per_period, cfg.beacon_slots, cfg.slot_us)?;
            let scenario = CoexScenario::new(
                RatProfile::dsrc(intensity),
                interferers.clone(),
                radii,
                space,
                mac,
            )?;
            grid.push((intensity, cw, scenario));
        }
    }
    Ok(grid)
}

const MC_CSV_HEADER: &str = "space_side_m,r_cs_m,r_tx_m,cw,slots_per_period,beacon_slots,\
     dsrc_intensity_per_m2,dsrc_per_disc,wifi_intensity_per_m2,\
     cv2x_intensity_per_m2,cv2x_activity,n_trials,seed,\
     p_start,p_start_se,p_sync,p_sync_se,p_hn,p_hn_se,pdr,pdr_se,stpdr,stpdr_se,error";

const COMPARISON_CSV_HEADER: &str =
    "dsrc_per_disc,cw,metric,analytical,montecarlo,montecarlo_se,delta";

fn analytical_csv(
    grid: &[(f64, u32, CoexScenario)],
    reports: &[Result<MetricsReport>],
) -> String {
    let mut out = format!("{},error\n", MetricsReport::csv_header().replace(' ', ""));
    for ((_, _, scenario), report) in grid.iter().zip(reports) {
        match report {
            Ok(r) => out.push_str(&format!("{},", r.csv_row())),
            Err(e) => out.push_str(&format!(
                "{},,,,,,,{}",
                metrics::scenario_csv_params(scenario),
                csv_quote(&e.to_string())
            )),
        }
        out.push('\n');
    }
    out
}

fn mc_row(
    scenario: &CoexScenario,
    n_trials: usize,
    seed: u64,
    estimates: &Result<ScalarEstimates>,
) -> String {
    let params = metrics::scenario_csv_params(scenario);
    match estimates {
        Ok(e) => format!(
            "{params},{n_trials},{seed},{},{},{},{},{},{},{},{},{},{},",
            e.p_start.mean,
            e.p_start.stderr,
            e.p_sync.mean,
            e.p_sync.stderr,
            e.p_hn.mean,
            e.p_hn.stderr,
            e.pdr.mean,
            e.pdr.stderr,
            e.stpdr.mean,
            e.stpdr.stderr,
        ),
        Err(e) => {
            format!("{params},{n_trials},{seed},,,,,,,,,,,{}", csv_quote(&e.to_string()))
        }
    }
}

/// Evaluates a validated config and writes its artifacts under `out_dir`
/// (created if missing). Grid points that fail evaluate to rows carrying
/// the error text; infrastructure failures abort the run.
pub fn run(cfg: &ScenarioConfig, out_dir: &Path) -> Result<RunArtifacts> {
    reject_on_diagnostics(cfg)?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::Io { path: out_dir.display().to_string(), source: e })?;
    let write = |name: &str, content: &str| -> Result<PathBuf> {
        let path = out_dir.join(name);
        std::fs::write(&path, content)
            .map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
        Ok(path)
    };

    let radii = Radii::new(cfg.carrier_sense_m, cfg.transmission_m)?;
    let fit = fit_inverse_area(radii.carrier_sense_m(), DEFAULT_FIT_SAMPLES)?;
    let grid = scenario_grid(cfg)?;

    // Analytical sweep over the full grid; failed points become error rows.
    let reports: Vec<Result<MetricsReport>> =
        grid.par_iter().map(|(_, _, s)| metrics::evaluate(s, &fit)).collect();
    let analytical = write(&cfg.output.analytical, &analytical_csv(&grid, &reports))?;

    // Monte Carlo sweep over the restricted grid, plus the comparison join.
    let mut montecarlo = None;
    let mut comparison = None;
    if cfg.mc.enabled {
        let n_trials = cfg.mc.n_trials.expect("validated mc settings carry n_trials");
        let seed = cfg.mc.seed.expect("validated mc settings carry a seed");
        let sim_intensities = cfg
            .mc
            .intensities
            .as_ref()
            .unwrap_or(&cfg.dsrc_intensities)
            .per_m2(radii);
        let sim_cws = cfg.mc.cw_list.as_ref().unwrap_or(&cfg.cw_list);
        let sim_grid: Vec<&(f64, u32, CoexScenario)> = grid
            .iter()
            .filter(|(intensity, cw, _)| {
                sim_cws.contains(cw) && sim_intensities.iter().any(|v| v == intensity)
            })
            .collect();

        let estimates: Vec<Result<ScalarEstimates>> = sim_grid
            .iter()
            .map(|(_, _, s)| estimate_scalars(s, n_trials, seed))
            .collect();
        let mut mc_out = format!("{}\n", MC_CSV_HEADER.replace(' ', ""));
        for ((_, _, scenario), est) in sim_grid.iter().zip(&estimates) {
            mc_out.push_str(&mc_row(scenario, n_trials, seed, est));
            mc_out.push('\n');
        }
        let mc_name = cfg.output.montecarlo.as_ref().expect("validated output has an mc path");
        montecarlo = Some(write(mc_name, &mc_out)?);

        // Long-format join: one row per (point, metric) both sides produced.
        let analytic_by_key: HashMap<(u64, u32), &MetricsReport> = grid
            .iter()
            .zip(&reports)
            .filter_map(|((intensity, cw, _), r)| {
                r.as_ref().ok().map(|report| ((intensity.to_bits(), *cw), report))
            })
            .collect();
        let mut cmp_out = format!("{COMPARISON_CSV_HEADER}\n");
        for ((intensity, cw, scenario), est) in sim_grid.iter().zip(&estimates) {
            let (Some(report), Ok(est)) =
                (analytic_by_key.get(&(intensity.to_bits(), *cw)), est)
            else {
                continue;
            };
            let per_disc = scenario.dsrc.intensity_per_m2 * radii.sense_area_m2();
            let pairs = [
                ("p_start", report.p_start, est.p_start),
                ("p_sync", report.p_sync, est.p_sync),
                ("p_hn", report.p_hn, est.p_hn),
                ("pdr", report.pdr, est.pdr),
                ("stpdr", report.stpdr_avg, est.stpdr),
            ];
            for (metric, analytic, sim) in pairs {
                cmp_out.push_str(&format!(
                    "{per_disc},{cw},{metric},{analytic},{},{},{}\n",
                    sim.mean,
                    sim.stderr,
                    analytic - sim.mean,
                ));
            }
        }
        let cmp_name = cfg.output.comparison.as_ref().expect("validated output has a cmp path");
        comparison = Some(write(cmp_name, &cmp_out)?);
    }

    let fit_table = match &cfg.output.fit_table {
        None => None,
        Some(name) => Some(write(name, &fit_table_csv(&STANDARD_FIT_RADII_M)?)?),
    };

    Ok(RunArtifacts { analytical, montecarlo, comparison, fit_table })
}

// ---------------------------------------------------------------------------
// Fit table and comparison entry points
// ---------------------------------------------------------------------------

/// CSV of inverse-area fit coefficients, one row per radius.
pub fn fit_table_csv(radii_m: &[f64]) -> Result<String> {
    let fits: Vec<QuadraticFit> = radii_m
        .par_iter()
        .map(|&r| fit_inverse_area(r, DEFAULT_FIT_SAMPLES))
        .collect::<Result<_>>()?;
    let mut out = String::from("radius_m,p1,p2,p3,mean_rel_error\n");
    for fit in fits {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fit.radius_m, fit.p1, fit.p2, fit.p3, fit.mean_rel_error
        ));
    }
    Ok(out)
}

/// Minimal CSV table: header positions by name, rows split on commas.
/// Sufficient for this module's own artifacts, whose only quoted cells
/// (error messages) sit in columns the joins never touch.
struct CsvTable {
    columns: HashMap<String, usize>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    fn parse(text: &str, path: &Path) -> Result<CsvTable> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| {
            Error::config(format!("{}: empty file, expected a CSV header", path.display()))
        })?;
        let columns: HashMap<String, usize> =
            header.split(',').enumerate().map(|(i, c)| (c.trim().to_string(), i)).collect();
        let rows = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.split(',').map(|c| c.to_string()).collect())
            .collect();
        Ok(CsvTable { columns, rows })
    }

    fn column(&self, name: &str, path: &Path) -> Result<usize> {
        self.columns.get(name).copied().ok_or_else(|| {
            Error::config(format!("{}: missing required column `{name}`", path.display()))
        })
    }

    fn cell<'a>(&self, row: &'a [String], idx: usize) -> &'a str {
        row.get(idx).map(String::as_str).unwrap_or("")
    }
}

/// Joins a previously written analytical CSV with a Monte Carlo CSV into
/// the same long-format comparison table [`run`] emits. Rows that carry an
/// error, and points present on only one side, are skipped.
pub fn compare_files(analytical: &Path, montecarlo: &Path) -> Result<String> {
    let read = |path: &Path| -> Result<String> {
        std::fs::read_to_string(path)
            .map_err(|e| Error::Io { path: path.display().to_string(), source: e })
    };
    let a_table = CsvTable::parse(&read(analytical)?, analytical)?;
    let m_table = CsvTable::parse(&read(montecarlo)?, montecarlo)?;

    let key_cols = |t: &CsvTable, path: &Path| -> Result<(usize, usize, usize)> {
        Ok((
            t.column("dsrc_per_disc", path)?,
            t.column("cw", path)?,
            t.column("error", path)?,
        ))
    };
    let (a_disc, a_cw, a_err) = key_cols(&a_table, analytical)?;
    let (m_disc, m_cw, m_err) = key_cols(&m_table, montecarlo)?;

    let metrics: [(&str, &str, &str, Option<&str>); 5] = [
        ("p_start", "p_start", "p_start", Some("p_start_se")),
        ("p_sync", "p_sync", "p_sync", Some("p_sync_se")),
        ("p_hn", "p_hn", "p_hn", Some("p_hn_se")),
        ("pdr", "pdr", "pdr", Some("pdr_se")),
        ("stpdr", "stpdr_avg", "stpdr", Some("stpdr_se")),
    ];

    let mut by_key: HashMap<(String, String), &Vec<String>> = HashMap::new();
    for row in &a_table.rows {
        if !a_table.cell(row, a_err).is_empty() {
            continue;
        }
        by_key.insert(
            (a_table.cell(row, a_disc).to_string(), a_table.cell(row, a_cw).to_string()),
            row,
        );
    }

    let mut out = format!("{COMPARISON_CSV_HEADER}\n");
    for row in &m_table.rows {
        if !m_table.cell(row, m_err).is_empty() {
            continue;
        }
        let key =
            (m_table.cell(row, m_disc).to_string(), m_table.cell(row, m_cw).to_string());
        let Some(a_row) = by_key.get(&key) else { continue };
        for (label, a_col, m_col, se_col) in metrics {
            let a_idx = a_table.column(a_col, analytical)?;
            let m_idx = m_table.column(m_col, montecarlo)?;
            let analytic: f64 = a_table.cell(a_row, a_idx).parse().unwrap_or(f64::NAN);
            let sim: f64 = m_table.cell(row, m_idx).parse().unwrap_or(f64::NAN);
            let se = se_col
                .and_then(|c| m_table.columns.get(c))
                .map(|&i| m_table.cell(row, i))
                .unwrap_or("");
            out.push_str(&format!(
                "{},{},{label},{analytic},{sim},{se},{}\n",
                key.0,
                key.1,
                analytic - sim,
            ));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
