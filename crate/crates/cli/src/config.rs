//! INI run configuration: parsing, validation and the canonical echo.
//!
//! Lengths are meters. Wherever a length is expected the value may also be
//! written in lattice units, `3a`, `a/4`, or Talbot units, `zT/2`, `3zT/8`,
//! once `lov.a` and `source.wavelength` are known.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use ini::{Ini, Properties};
use talbot_core::analysis::FilterSigma;
use talbot_core::{talbot_length, Axis, JonesVector};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub extent_x: f64,
    pub extent_y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Envelope {
    Gaussian { w0: f64 },
    Constant,
}

/// Named polarization state used for the source and the analyzer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarization {
    R,
    L,
    H,
    V,
}

impl Polarization {
    fn parse(key: &str, v: &str) -> CliResult<Self> {
        match v.trim().to_ascii_uppercase().as_str() {
            "R" => Ok(Polarization::R),
            "L" => Ok(Polarization::L),
            "H" => Ok(Polarization::H),
            "V" => Ok(Polarization::V),
            _ => Err(CliError::config(key, format!("expected one of R, L, H, V, got {v:?}"))),
        }
    }

    pub fn vector(self) -> JonesVector {
        match self {
            Polarization::R => JonesVector::R,
            Polarization::L => JonesVector::L,
            Polarization::H => JonesVector::horizontal(),
            Polarization::V => JonesVector::vertical(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Polarization::R => "R",
            Polarization::L => "L",
            Polarization::H => "H",
            Polarization::V => "V",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceConfig {
    pub wavelength: f64,
    pub envelope: Envelope,
    pub polarization: Polarization,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LovConfig {
    pub pairs: usize,
    pub a: Option<f64>,
    pub origin: (f64, f64),
}

/// One element of the detection chain applied after free propagation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Element {
    Lens(f64),
    Propagate(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpticsConfig {
    pub planes: Vec<f64>,
    pub z_offset: f64,
    pub chain: Vec<Element>,
    pub pad_factor: usize,
    pub band_limit: bool,
    pub phase_strip: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarpetConfig {
    pub axis: Axis,
    pub offset: f64,
    pub z_start: f64,
    pub z_stop: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputConfig {
    pub write_field: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub spacing: bool,
    pub snr: bool,
    pub chirality: bool,
    pub sigma: FilterSigma,
    pub signal_fraction: f64,
    pub border_fraction: f64,
    pub chirality_radius: Option<f64>,
    pub site_range: Option<f64>,
    pub pairs: Vec<(usize, usize)>,
    pub allow_uncalibrated: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            spacing: true,
            snr: true,
            chirality: false,
            sigma: FilterSigma::Adaptive,
            signal_fraction: 0.5,
            border_fraction: 0.05,
            chirality_radius: None,
            site_range: None,
            pairs: Vec::new(),
            allow_uncalibrated: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: Option<GridConfig>,
    pub source: Option<SourceConfig>,
    pub lov: LovConfig,
    pub analyzer: Option<Polarization>,
    pub optics: OpticsConfig,
    pub carpet: Option<CarpetConfig>,
    pub output: OutputConfig,
    pub analysis: AnalysisConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: None,
            source: None,
            lov: LovConfig { pairs: 2, a: None, origin: (0.0, 0.0) },
            analyzer: Some(Polarization::L),
            optics: OpticsConfig {
                planes: Vec::new(),
                z_offset: 0.0,
                chain: Vec::new(),
                pad_factor: 2,
                band_limit: true,
                phase_strip: false,
            },
            carpet: None,
            output: OutputConfig { write_field: true },
            analysis: AnalysisConfig::default(),
        }
    }
}

/// Which sub-command a configuration is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Prepare,
    Propagate,
    Carpet,
    Analyze,
}

const SECTIONS: [(&str, &[&str]); 8] = [
    ("grid", &["nx", "ny", "extent", "extent_x", "extent_y"]),
    ("source", &["wavelength", "w0", "envelope", "polarization"]),
    ("lov", &["n", "a", "delta_n", "theta", "origin_x", "origin_y"]),
    ("filter", &["analyzer"]),
    ("optics", &["planes", "z_offset", "chain", "pad_factor", "band_limit", "phase_strip"]),
    ("carpet", &["axis", "offset", "z_start", "z_stop", "samples"]),
    ("output", &["write_field"]),
    (
        "analysis",
        &[
            "spacing",
            "snr",
            "chirality",
            "sigma",
            "signal_fraction",
            "border_fraction",
            "chirality_radius",
            "site_range",
            "pairs",
            "allow_uncalibrated",
        ],
    ),
];

/// Section lookup that remembers which keys were read.
struct Source<'a> {
    ini: &'a Ini,
    prefix: &'a str,
}

impl<'a> Source<'a> {
    fn section(&self, name: &str) -> Option<&'a Properties> {
        self.ini.section(Some(format!("{}{name}", self.prefix)))
    }

    fn get(&self, section: &str, key: &str) -> Option<&'a str> {
        self.section(section).and_then(|p| p.get(key)).map(str::trim)
    }
}

/// Scale used to resolve `a` and `zT` units.
#[derive(Debug, Clone, Copy)]
struct Units {
    a: Option<f64>,
    wavelength: Option<f64>,
}

impl Units {
    fn length(&self, key: &str, text: &str) -> CliResult<f64> {
        let bad = |why: &str| CliError::config(key, format!("{why} in {text:?}"));
        let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        if s.is_empty() {
            return Err(bad("empty value"));
        }
        let (body, denom) = match s.rsplit_once('/') {
            Some((b, d)) => {
                let d: f64 = d.parse().map_err(|_| bad("bad denominator"))?;
                if !(d != 0.0 && d.is_finite()) {
                    return Err(bad("zero denominator"));
                }
                (b.to_string(), d)
            }
            None => (s.clone(), 1.0),
        };
        let (coef, unit) = if let Some(c) = body.strip_suffix("zT") {
            let a = self.a.ok_or_else(|| bad("zT needs lov.a"))?;
            let lambda = self.wavelength.ok_or_else(|| bad("zT needs source.wavelength"))?;
            (c, talbot_length(a, lambda).map_err(|e| bad(&e.to_string()))?)
        } else if let Some(c) = body.strip_suffix('a') {
            (c, self.a.ok_or_else(|| bad("unit a needs lov.a"))?)
        } else {
            (body.as_str(), 1.0)
        };
        let coef = coef.strip_suffix('*').unwrap_or(coef);
        let c = match coef {
            "" | "+" => 1.0,
            "-" => -1.0,
            _ => coef.parse::<f64>().map_err(|_| bad("not a number"))?,
        };
        let v = c * unit / denom;
        if !v.is_finite() {
            return Err(bad("non-finite value"));
        }
        Ok(v)
    }
}

fn number(key: &str, v: &str) -> CliResult<f64> {
    let x: f64 = v.parse().map_err(|_| CliError::config(key, format!("not a number: {v:?}")))?;
    if !x.is_finite() {
        return Err(CliError::config(key, format!("must be finite, got {v:?}")));
    }
    Ok(x)
}

fn integer(key: &str, v: &str) -> CliResult<usize> {
    v.parse().map_err(|_| CliError::config(key, format!("not a non-negative integer: {v:?}")))
}

fn boolean(key: &str, v: &str) -> CliResult<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(CliError::config(key, format!("expected true or false, got {v:?}"))),
    }
}

fn positive(key: &str, v: f64) -> CliResult<f64> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::config(key, format!("must be positive, got {v}")))
    }
}

fn list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

impl RunConfig {
    /// Parses INI text. A run manifest is accepted too: its `[config.*]`
    /// sections are read and everything else is ignored.
    pub fn parse(text: &str) -> CliResult<RunConfig> {
        let ini = Ini::load_from_str(text).map_err(|e| CliError::config("<file>", e.to_string()))?;
        let manifest = ini.sections().flatten().any(|s| s.starts_with("config."));
        let prefix = if manifest { "config." } else { "" };
        check_known_keys(&ini, prefix)?;
        let src = Source { ini: &ini, prefix };
        let mut cfg = RunConfig::default();

        let wavelength = src.get("source", "wavelength").map(|v| number("source.wavelength", v)).transpose()?;
        if let Some(l) = wavelength {
            positive("source.wavelength", l)?;
        }

        // lattice spacing first: other lengths may be written in units of a
        if let Some(v) = src.get("lov", "n") {
            cfg.lov.pairs = integer("lov.n", v)?;
        }
        let a = match (src.get("lov", "a"), src.get("lov", "delta_n"), src.get("lov", "theta")) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return Err(CliError::config("lov.a", "give either a or delta_n with theta, not both"));
            }
            (Some(v), None, None) => Some(positive("lov.a", number("lov.a", v)?)?),
            (None, Some(dn), Some(th)) => {
                let lambda = wavelength.ok_or_else(|| CliError::config("source.wavelength", "needed to derive lov.a"))?;
                let m = talbot_core::MaterialParams {
                    birefringence: number("lov.delta_n", dn)?,
                    incline: number("lov.theta", th)?,
                    wavelength: lambda,
                };
                Some(
                    talbot_core::spinorbit::lattice_spacing_from_materials(&m)
                        .map_err(|e| CliError::config("lov.delta_n", e.to_string()))?,
                )
            }
            (None, Some(_), None) => return Err(CliError::config("lov.theta", "missing (delta_n given)")),
            (None, None, Some(_)) => return Err(CliError::config("lov.delta_n", "missing (theta given)")),
            (None, None, None) => None,
        };
        cfg.lov.a = a;
        let units = Units { a, wavelength };
        let length = |key: &str, v: &str| units.length(key, v);
        for (k, slot) in [("origin_x", 0), ("origin_y", 1)] {
            if let Some(v) = src.get("lov", k) {
                let x = length(&format!("lov.{k}"), v)?;
                if slot == 0 {
                    cfg.lov.origin.0 = x;
                } else {
                    cfg.lov.origin.1 = x;
                }
            }
        }

        if src.section("grid").is_some() {
            let nx = integer("grid.nx", src.get("grid", "nx").ok_or_else(|| CliError::config("grid.nx", "missing"))?)?;
            let ny = match src.get("grid", "ny") {
                Some(v) => integer("grid.ny", v)?,
                None => nx,
            };
            for (k, n) in [("grid.nx", nx), ("grid.ny", ny)] {
                if n < 2 {
                    return Err(CliError::config(k, format!("need at least 2 samples, got {n}")));
                }
            }
            let common = src.get("grid", "extent").map(|v| length("grid.extent", v)).transpose()?;
            let ex = match src.get("grid", "extent_x") {
                Some(v) => Some(length("grid.extent_x", v)?),
                None => common,
            }
            .ok_or_else(|| CliError::config("grid.extent", "missing"))?;
            let ey = match src.get("grid", "extent_y") {
                Some(v) => Some(length("grid.extent_y", v)?),
                None => common,
            }
            .ok_or_else(|| CliError::config("grid.extent", "missing"))?;
            cfg.grid = Some(GridConfig {
                nx,
                ny,
                extent_x: positive("grid.extent_x", ex)?,
                extent_y: positive("grid.extent_y", ey)?,
            });
        }

        if src.section("source").is_some() {
            let wavelength = wavelength.ok_or_else(|| CliError::config("source.wavelength", "missing"))?;
            let envelope = match (src.get("source", "envelope").map(str::to_ascii_lowercase).as_deref(), src.get("source", "w0")) {
                (Some("constant"), None) => Envelope::Constant,
                (Some("constant"), Some(_)) => {
                    return Err(CliError::config("source.w0", "not used with envelope = constant"));
                }
                (Some("gaussian") | None, Some(w)) => Envelope::Gaussian { w0: positive("source.w0", length("source.w0", w)?)? },
                (Some("gaussian") | None, None) => return Err(CliError::config("source.w0", "missing")),
                (Some(other), _) => {
                    return Err(CliError::config("source.envelope", format!("expected gaussian or constant, got {other:?}")));
                }
            };
            let polarization = match src.get("source", "polarization") {
                Some(v) => Polarization::parse("source.polarization", v)?,
                None => Polarization::R,
            };
            cfg.source = Some(SourceConfig { wavelength, envelope, polarization });
        }

        if let Some(v) = src.get("filter", "analyzer") {
            cfg.analyzer = if v.eq_ignore_ascii_case("none") { None } else { Some(Polarization::parse("filter.analyzer", v)?) };
        }

        if let Some(v) = src.get("optics", "planes") {
            cfg.optics.planes = list(v).map(|p| length("optics.planes", p)).collect::<CliResult<_>>()?;
        }
        if let Some(v) = src.get("optics", "z_offset") {
            cfg.optics.z_offset = length("optics.z_offset", v)?;
        }
        if let Some(v) = src.get("optics", "chain") {
            cfg.optics.chain = list(v)
                .map(|item| {
                    let (kind, val) = item
                        .split_once(':')
                        .ok_or_else(|| CliError::config("optics.chain", format!("expected lens:<f> or propagate:<z>, got {item:?}")))?;
                    let x = length("optics.chain", val)?;
                    match kind.trim() {
                        "lens" if x != 0.0 => Ok(Element::Lens(x)),
                        "lens" => Err(CliError::config("optics.chain", "lens focal length must be nonzero")),
                        "propagate" if x >= 0.0 => Ok(Element::Propagate(x)),
                        "propagate" => Err(CliError::config("optics.chain", "propagation distance must be non-negative")),
                        other => Err(CliError::config("optics.chain", format!("unknown element {other:?}"))),
                    }
                })
                .collect::<CliResult<_>>()?;
        }
        if let Some(v) = src.get("optics", "pad_factor") {
            cfg.optics.pad_factor = integer("optics.pad_factor", v)?;
            if cfg.optics.pad_factor < 1 {
                return Err(CliError::config("optics.pad_factor", "must be at least 1"));
            }
        }
        if let Some(v) = src.get("optics", "band_limit") {
            cfg.optics.band_limit = boolean("optics.band_limit", v)?;
        }
        if let Some(v) = src.get("optics", "phase_strip") {
            cfg.optics.phase_strip = boolean("optics.phase_strip", v)?;
        }

        if src.section("carpet").is_some() {
            let axis = match src.get("carpet", "axis") {
                Some(v) => v.parse::<Axis>().map_err(|e| CliError::config("carpet.axis", e.to_string()))?,
                None => Axis::X,
            };
            let offset = match src.get("carpet", "offset") {
                Some(v) => length("carpet.offset", v)?,
                None => 0.0,
            };
            let z_start = match src.get("carpet", "z_start") {
                Some(v) => length("carpet.z_start", v)?,
                None => 0.0,
            };
            let z_stop = length(
                "carpet.z_stop",
                src.get("carpet", "z_stop").ok_or_else(|| CliError::config("carpet.z_stop", "missing"))?,
            )?;
            let samples = match src.get("carpet", "samples") {
                Some(v) => integer("carpet.samples", v)?,
                None => 256,
            };
            if samples == 0 {
                return Err(CliError::config("carpet.samples", "must be at least 1"));
            }
            if z_start < 0.0 {
                return Err(CliError::config("carpet.z_start", "must be non-negative"));
            }
            if samples > 1 && !(z_stop > z_start) {
                return Err(CliError::config("carpet.z_stop", "must exceed carpet.z_start"));
            }
            cfg.carpet = Some(CarpetConfig { axis, offset, z_start, z_stop, samples });
        }

        if let Some(v) = src.get("output", "write_field") {
            cfg.output.write_field = boolean("output.write_field", v)?;
        }

        let an = &mut cfg.analysis;
        for (k, slot) in [("spacing", &mut an.spacing), ("snr", &mut an.snr), ("chirality", &mut an.chirality), ("allow_uncalibrated", &mut an.allow_uncalibrated)] {
            if let Some(v) = src.get("analysis", k) {
                *slot = boolean(&format!("analysis.{k}"), v)?;
            }
        }
        if let Some(v) = src.get("analysis", "sigma") {
            an.sigma = v.parse::<FilterSigma>().map_err(|e| CliError::config("analysis.sigma", e.to_string()))?;
            if let FilterSigma::Fixed(s) = an.sigma {
                positive("analysis.sigma", s)?;
            }
        }
        for (k, slot) in [("signal_fraction", &mut an.signal_fraction), ("border_fraction", &mut an.border_fraction)] {
            if let Some(v) = src.get("analysis", k) {
                let key = format!("analysis.{k}");
                let x = number(&key, v)?;
                let hi = if k == "border_fraction" { 0.5 } else { 1.0 };
                if !(x > 0.0 && x < hi) {
                    return Err(CliError::config(key, format!("must lie in (0, {hi}), got {x}")));
                }
                *slot = x;
            }
        }
        if let Some(v) = src.get("analysis", "chirality_radius") {
            an.chirality_radius = Some(positive("analysis.chirality_radius", units.length("analysis.chirality_radius", v)?)?);
        }
        if let Some(v) = src.get("analysis", "site_range") {
            an.site_range = Some(positive("analysis.site_range", units.length("analysis.site_range", v)?)?);
        }
        if let Some(v) = src.get("analysis", "pairs") {
            an.pairs = list(v)
                .map(|p| {
                    let bad = || CliError::config("analysis.pairs", format!("expected i:j, got {p:?}"));
                    let (i, j) = p.split_once(':').ok_or_else(bad)?;
                    Ok((i.trim().parse().map_err(|_| bad())?, j.trim().parse().map_err(|_| bad())?))
                })
                .collect::<CliResult<_>>()?;
        }
        Ok(cfg)
    }

    /// Checks the sections a sub-command needs.
    pub fn validate_for(&self, purpose: Purpose) -> CliResult<()> {
        if purpose == Purpose::Analyze {
            return Ok(());
        }
        let grid = self.grid.ok_or_else(|| CliError::config("grid", "section missing"))?;
        let source = self.source.ok_or_else(|| CliError::config("source", "section missing"))?;
        if self.lov.pairs > 0 && self.lov.a.is_none() {
            return Err(CliError::config("lov.a", "missing (needed when lov.n > 0)"));
        }
        let _ = source;
        match purpose {
            Purpose::Propagate => {
                if self.optics.planes.is_empty() {
                    return Err(CliError::config("optics.planes", "empty plane list"));
                }
                for &z in &self.optics.planes {
                    if z + self.optics.z_offset < 0.0 {
                        return Err(CliError::config("optics.planes", format!("plane {z} (plus z_offset) is negative")));
                    }
                }
            }
            Purpose::Carpet => {
                let c = self.carpet.ok_or_else(|| CliError::config("carpet", "section missing"))?;
                let (half, dx) = match c.axis {
                    Axis::X => (0.5 * grid.extent_x, grid.extent_x / grid.nx as f64),
                    Axis::Y => (0.5 * grid.extent_y, grid.extent_y / grid.ny as f64),
                };
                if !(c.offset >= -half && c.offset <= half - dx) {
                    return Err(CliError::config("carpet.offset", format!("{} lies outside the grid", c.offset)));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Canonical INI text with every value resolved to meters. Section
    /// names carry `prefix`, e.g. `config.` inside a manifest.
    pub fn to_ini(&self, prefix: &str) -> String {
        let mut out = String::new();
        let mut section = |name: &str, entries: Vec<(&str, String)>| {
            let _ = writeln!(out, "[{prefix}{name}]");
            for (k, v) in entries {
                let _ = writeln!(out, "{k} = {v}");
            }
            out.push('\n');
        };
        if let Some(g) = self.grid {
            section(
                "grid",
                vec![
                    ("nx", g.nx.to_string()),
                    ("ny", g.ny.to_string()),
                    ("extent_x", g.extent_x.to_string()),
                    ("extent_y", g.extent_y.to_string()),
                ],
            );
        }
        if let Some(s) = self.source {
            let mut e = vec![("wavelength", s.wavelength.to_string())];
            match s.envelope {
                Envelope::Gaussian { w0 } => {
                    e.push(("envelope", "gaussian".into()));
                    e.push(("w0", w0.to_string()));
                }
                Envelope::Constant => e.push(("envelope", "constant".into())),
            }
            e.push(("polarization", s.polarization.name().into()));
            section("source", e);
        }
        let mut lov = vec![("n", self.lov.pairs.to_string())];
        if let Some(a) = self.lov.a {
            lov.push(("a", a.to_string()));
        }
        lov.push(("origin_x", self.lov.origin.0.to_string()));
        lov.push(("origin_y", self.lov.origin.1.to_string()));
        section("lov", lov);
        section("filter", vec![("analyzer", self.analyzer.map_or("none", Polarization::name).into())]);
        let o = &self.optics;
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(", ");
        let chain = o
            .chain
            .iter()
            .map(|e| match e {
                Element::Lens(f) => format!("lens:{f}"),
                Element::Propagate(z) => format!("propagate:{z}"),
            })
            .collect::<Vec<_>>()
            .join(", ");
        section(
            "optics",
            vec![
                ("planes", join(&o.planes)),
                ("z_offset", o.z_offset.to_string()),
                ("chain", chain),
                ("pad_factor", o.pad_factor.to_string()),
                ("band_limit", o.band_limit.to_string()),
                ("phase_strip", o.phase_strip.to_string()),
            ],
        );
        if let Some(c) = self.carpet {
            section(
                "carpet",
                vec![
                    ("axis", c.axis.to_string()),
                    ("offset", c.offset.to_string()),
                    ("z_start", c.z_start.to_string()),
                    ("z_stop", c.z_stop.to_string()),
                    ("samples", c.samples.to_string()),
                ],
            );
        }
        section("output", vec![("write_field", self.output.write_field.to_string())]);
        let a = &self.analysis;
        let mut e = vec![
            ("spacing", a.spacing.to_string()),
            ("snr", a.snr.to_string()),
            ("chirality", a.chirality.to_string()),
            (
                "sigma",
                match a.sigma {
                    FilterSigma::Adaptive => "adaptive".to_string(),
                    FilterSigma::Fixed(s) => s.to_string(),
                },
            ),
            ("signal_fraction", a.signal_fraction.to_string()),
            ("border_fraction", a.border_fraction.to_string()),
        ];
        if let Some(r) = a.chirality_radius {
            e.push(("chirality_radius", r.to_string()));
        }
        if let Some(r) = a.site_range {
            e.push(("site_range", r.to_string()));
        }
        e.push(("pairs", a.pairs.iter().map(|(i, j)| format!("{i}:{j}")).collect::<Vec<_>>().join(", ")));
        e.push(("allow_uncalibrated", a.allow_uncalibrated.to_string()));
        section("analysis", e);
        out
    }
}

fn check_known_keys(ini: &Ini, prefix: &str) -> CliResult<()> {
    for (name, props) in ini.iter() {
        let Some(name) = name else {
            if let Some((k, _)) = props.iter().next() {
                return Err(CliError::config(k, "key outside any section"));
            }
            continue;
        };
        let Some(bare) = name.strip_prefix(prefix) else {
            continue;
        };
        if !prefix.is_empty() && !name.starts_with(prefix) {
            continue;
        }
        let known: BTreeSet<&str> = match SECTIONS.iter().find(|(s, _)| *s == bare) {
            Some((_, keys)) => keys.iter().copied().collect(),
            None => return Err(CliError::config(bare, "unknown section")),
        };
        for (k, _) in props.iter() {
            if !known.contains(k) {
                return Err(CliError::config(format!("{bare}.{k}"), "unknown key"));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = "
[grid]
nx = 128
extent = 8a

[source]
wavelength = 810.8e-9
w0 = 3a
polarization = R

[lov]
n = 2
a = 0.577e-3

[optics]
planes = 0, zT/8, 3zT/8, zT/2
chain = lens:0.5, propagate:0.5
";

    #[test]
    fn units_resolve() {
        let c = RunConfig::parse(BASIC).unwrap();
        let a = 0.577e-3;
        let zt = 2.0 * a * a / 810.8e-9;
        let g = c.grid.unwrap();
        assert_eq!((g.nx, g.ny), (128, 128));
        assert!((g.extent_x - 8.0 * a).abs() < 1e-18);
        assert_eq!(c.source.unwrap().envelope, Envelope::Gaussian { w0: 3.0 * a });
        assert_eq!(c.optics.planes.len(), 4);
        assert!((c.optics.planes[2] - 3.0 * zt / 8.0).abs() < 1e-12);
        assert_eq!(c.optics.chain, vec![Element::Lens(0.5), Element::Propagate(0.5)]);
        assert_eq!(c.analyzer, Some(Polarization::L));
    }

    #[test]
    fn echo_round_trips() {
        let c = RunConfig::parse(BASIC).unwrap();
        assert_eq!(RunConfig::parse(&c.to_ini("")).unwrap(), c);
        let manifest = format!("[run]\ncommand = prepare\n\n{}", c.to_ini("config."));
        assert_eq!(RunConfig::parse(&manifest).unwrap(), c);
    }

    #[test]
    fn materials_give_spacing() {
        let text = "[source]\nwavelength = 810.8e-9\nw0 = 1e-3\n[lov]\ndelta_n = 0.2\ntheta = 0.1\n";
        let c = RunConfig::parse(text).unwrap();
        let expect = 810.8e-9 / (0.2 * 0.1f64.tan());
        assert!((c.lov.a.unwrap() - expect).abs() < 1e-18);
    }

    fn key_of(text: &str) -> String {
        match RunConfig::parse(text) {
            Err(CliError::Config { key, .. }) => key,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(key_of("[grid]\nnx = 1\nextent = 1e-3\n"), "grid.nx");
        assert_eq!(key_of("[grid]\nnx = 8\nextnt = 1e-3\n"), "grid.extnt");
        assert_eq!(key_of("[optics]\nplanes = zT/2\n"), "optics.planes");
        assert_eq!(key_of("[optics]\nchain = mirror:1\n"), "optics.chain");
        assert_eq!(key_of("[source]\nwavelength = -1\nw0 = 1\n"), "source.wavelength");
        assert_eq!(key_of("[lenses]\nf = 1\n"), "lenses");
        assert_eq!(key_of("[filter]\nanalyzer = Q\n"), "filter.analyzer");
        assert_eq!(key_of("[analysis]\nsigma = -2\n"), "analysis.sigma");
    }

    #[test]
    fn command_requirements() {
        let mut c = RunConfig::parse(BASIC).unwrap();
        assert!(c.validate_for(Purpose::Propagate).is_ok());
        c.optics.planes.clear();
        match c.validate_for(Purpose::Propagate) {
            Err(CliError::Config { key, .. }) => assert_eq!(key, "optics.planes"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(c.validate_for(Purpose::Carpet), Err(CliError::Config { .. })));
        assert!(RunConfig::default().validate_for(Purpose::Analyze).is_ok());
    }

    #[test]
    fn length_expressions() {
        let u = Units { a: Some(2.0), wavelength: Some(1.0) };
        assert_eq!(u.length("k", "1.5e-3").unwrap(), 1.5e-3);
        assert_eq!(u.length("k", "a/4").unwrap(), 0.5);
        assert_eq!(u.length("k", "3 a").unwrap(), 6.0);
        assert_eq!(u.length("k", "3*a").unwrap(), 6.0);
        assert_eq!(u.length("k", "zT").unwrap(), 8.0);
        assert_eq!(u.length("k", "3zT/8").unwrap(), 3.0);
        assert_eq!(u.length("k", "-0.5").unwrap(), -0.5);
        assert!(u.length("k", "zT/0").is_err());
        assert!(u.length("k", "two").is_err());
    }
}
