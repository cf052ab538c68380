//! Experiment configuration: a flat, diff-friendly `section.key = value`
//! text format with `#` comments. Missing keys take the documented defaults
//! (the dense-high factory case study); unknown keys are errors.

use orix_core::channel::LinkParams;
use orix_core::geom::Point3;
use orix_core::optimizer::PowerConfig;
use orix_core::ris::{AmplitudeParams, RisSpec};
use orix_core::scenario::{FactoryLayout, InfScenario, InfVariant, Placement};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: syntax error: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for {key}: {reason}")]
    BadValue {
        line: usize,
        key: String,
        reason: String,
    },
    #[error("{0}")]
    Constraint(String),
}

/// Which optimization methods a Monte Carlo run evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    NoRis,
    Iterative,
    Quantized,
    Codebook,
    BruteForce,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::NoRis => "none",
            Method::Iterative => "iterative",
            Method::Quantized => "quantized",
            Method::Codebook => "codebook",
            Method::BruteForce => "bruteforce",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        match s {
            "none" => Some(Method::NoRis),
            "iterative" => Some(Method::Iterative),
            "quantized" => Some(Method::Quantized),
            "codebook" => Some(Method::Codebook),
            "bruteforce" => Some(Method::BruteForce),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub variant: InfVariant,
    pub length_m: f64,
    pub width_m: f64,
    pub ceiling_height_m: f64,
    pub clutter_density_r: f64,
    pub clutter_size_m: f64,
    pub clutter_height_m: f64,
    pub ap_pos: Point3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RisConfig {
    pub rows: u16,
    pub cols: u16,
    pub phase_bits: u8,
    pub center: Point3,
    pub normal: Point3,
    /// Element pitch; `None` selects half a wavelength at the carrier.
    pub spacing_m: Option<f64>,
    /// Physical aperture; `None` defaults to the pitch.
    pub element_aperture_m: Option<f64>,
    pub rho_min: f64,
    pub xi_rad: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    pub fc_hz: f64,
    pub k_ris_db: f64,
    pub k_bu_db: f64,
    pub shadow_fading: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub realizations: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepConfig {
    pub elements: Option<Vec<u32>>,
    pub phase_bits: Option<Vec<u8>>,
    pub fc_hz: Option<Vec<f64>>,
    pub variant: Option<Vec<InfVariant>>,
    pub pt_dbm: Option<Vec<f64>>,
}

impl SweepConfig {
    pub fn is_empty(&self) -> bool {
        self.elements.is_none()
            && self.phase_bits.is_none()
            && self.fc_hz.is_none()
            && self.variant.is_none()
            && self.pt_dbm.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct E2eConfig {
    pub host: String,
    pub port: u16,
    pub xapp: String,
    pub periods: u64,
    pub report_period_ms: u32,
    pub ris_id: u32,
    pub freeze_channel: bool,
    /// Load the codebook xApp's library from this file instead of building
    /// it from `codebook.*` positions.
    pub codebook_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    /// Labelled UE positions evaluated by `mc` (label order is row order).
    pub ue_positions: Vec<(String, Point3)>,
    pub ris: RisConfig,
    pub link: LinkConfig,
    pub power: PowerConfig,
    pub mc: McConfig,
    pub sweep: SweepConfig,
    pub methods: Vec<Method>,
    /// Candidate UE positions of the offline codebook library.
    pub codebook_positions: Vec<(String, Point3)>,
    pub e2e: E2eConfig,
}

impl Default for ExperimentConfig {
    /// The representative factory case study: a 75 x 50 x 10 m dense-high
    /// hall (r = 0.6, clutter 2 m), a 28 GHz AP at (30, 0, 8) with 10 dBm,
    /// a one-bit 80 x 80 RIS at (75, 30, 6), near/far UEs, -88 dBm noise.
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig {
                variant: InfVariant::Dh,
                length_m: 75.0,
                width_m: 50.0,
                ceiling_height_m: 10.0,
                clutter_density_r: 0.6,
                clutter_size_m: 2.0,
                clutter_height_m: 2.0,
                ap_pos: Point3::new(30.0, 0.0, 8.0),
            },
            ue_positions: vec![
                ("near".into(), Point3::new(72.0, 32.0, 1.5)),
                ("far".into(), Point3::new(62.0, 22.0, 1.5)),
            ],
            ris: RisConfig {
                rows: 80,
                cols: 80,
                phase_bits: 1,
                center: Point3::new(75.0, 30.0, 6.0),
                normal: Point3::new(-1.0, 0.0, 0.0),
                spacing_m: None,
                element_aperture_m: None,
                rho_min: 0.2,
                xi_rad: 0.43 * std::f64::consts::PI,
                omega: 1.6,
            },
            link: LinkConfig {
                fc_hz: 28e9,
                k_ris_db: f64::INFINITY,
                k_bu_db: 10.0,
                shadow_fading: true,
            },
            power: PowerConfig {
                pt_dbm: 10.0,
                pn_dbm: -88.0,
            },
            mc: McConfig {
                realizations: 1000,
                seed: 1,
            },
            sweep: SweepConfig::default(),
            methods: vec![Method::NoRis, Method::Iterative, Method::Quantized],
            codebook_positions: vec![
                ("p1".into(), Point3::new(72.0, 32.0, 1.5)),
                ("p2".into(), Point3::new(62.0, 22.0, 1.5)),
                ("p3".into(), Point3::new(67.0, 27.0, 1.5)),
                ("p4".into(), Point3::new(72.0, 22.0, 1.5)),
                ("p5".into(), Point3::new(62.0, 32.0, 1.5)),
                ("p6".into(), Point3::new(67.0, 37.0, 1.5)),
                ("p7".into(), Point3::new(57.0, 27.0, 1.5)),
            ],
            e2e: E2eConfig {
                host: "127.0.0.1".into(),
                port: 36421,
                xapp: "quantized".into(),
                periods: 10,
                report_period_ms: 50,
                ris_id: 1,
                freeze_channel: false,
                codebook_file: None,
            },
        }
    }
}

struct Entry<'a> {
    line: usize,
    key: &'a str,
    value: &'a str,
}

impl Entry<'_> {
    fn bad(&self, reason: impl Into<String>) -> ConfigError {
        ConfigError::BadValue {
            line: self.line,
            key: self.key.to_string(),
            reason: reason.into(),
        }
    }

    fn f64(&self) -> Result<f64, ConfigError> {
        self.value
            .parse::<f64>()
            .map_err(|_| self.bad("expected a number"))
    }

    fn u64(&self) -> Result<u64, ConfigError> {
        self.value
            .parse::<u64>()
            .map_err(|_| self.bad("expected a non-negative integer"))
    }

    fn u32(&self) -> Result<u32, ConfigError> {
        self.value
            .parse::<u32>()
            .map_err(|_| self.bad("expected a non-negative integer"))
    }

    fn u16(&self) -> Result<u16, ConfigError> {
        self.value
            .parse::<u16>()
            .map_err(|_| self.bad("expected a 16-bit integer"))
    }

    fn u8(&self) -> Result<u8, ConfigError> {
        self.value
            .parse::<u8>()
            .map_err(|_| self.bad("expected an 8-bit integer"))
    }

    fn bool(&self) -> Result<bool, ConfigError> {
        match self.value {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(self.bad("expected true or false")),
        }
    }

    fn point(&self) -> Result<Point3, ConfigError> {
        let parts: Vec<&str> = self.value.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(self.bad("expected x,y,z"));
        }
        let mut coords = [0.0; 3];
        for (i, p) in parts.iter().enumerate() {
            coords[i] = p
                .parse::<f64>()
                .map_err(|_| self.bad(format!("bad coordinate {p:?}")))?;
        }
        Ok(Point3::new(coords[0], coords[1], coords[2]))
    }

    fn variant(&self) -> Result<InfVariant, ConfigError> {
        InfVariant::parse(self.value)
            .ok_or_else(|| self.bad("expected one of SL, DL, SH, DH, HH"))
    }

    fn list<T>(
        &self,
        parse: impl Fn(&str) -> Option<T>,
        what: &str,
    ) -> Result<Vec<T>, ConfigError> {
        let items: Vec<T> = self
            .value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| parse(s).ok_or_else(|| self.bad(format!("bad {what} {s:?}"))))
            .collect::<Result<_, _>>()?;
        if items.is_empty() {
            return Err(self.bad("list must not be empty"));
        }
        Ok(items)
    }
}

/// Parse the text format over the case-study defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::default();
    let mut ue_overridden = false;
    let mut codebook_overridden = false;
    let mut seen = BTreeSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            reason: "expected `section.key = value`".into(),
        })?;
        let key = key.trim();
        let value = value.trim();
        if !key.contains('.') {
            return Err(ConfigError::Syntax {
                line,
                reason: format!("key {key:?} must be `section.key`"),
            });
        }
        if !seen.insert(key.to_string()) {
            return Err(ConfigError::Syntax {
                line,
                reason: format!("duplicate key {key:?}"),
            });
        }
        let e = Entry { line, key, value };
        let (section, name) = key.split_once('.').unwrap();
        match (section, name) {
            ("scenario", "variant") => cfg.scenario.variant = e.variant()?,
            ("scenario", "length_m") => cfg.scenario.length_m = e.f64()?,
            ("scenario", "width_m") => cfg.scenario.width_m = e.f64()?,
            ("scenario", "ceiling_height_m") => cfg.scenario.ceiling_height_m = e.f64()?,
            ("scenario", "clutter_density_r") => cfg.scenario.clutter_density_r = e.f64()?,
            ("scenario", "clutter_size_m") => cfg.scenario.clutter_size_m = e.f64()?,
            ("scenario", "clutter_height_m") => cfg.scenario.clutter_height_m = e.f64()?,
            ("scenario", "ap_pos") => cfg.scenario.ap_pos = e.point()?,
            ("ue", label) => {
                if !ue_overridden {
                    cfg.ue_positions.clear();
                    ue_overridden = true;
                }
                cfg.ue_positions.push((label.to_string(), e.point()?));
            }
            ("ris", "rows") => cfg.ris.rows = e.u16()?,
            ("ris", "cols") => cfg.ris.cols = e.u16()?,
            ("ris", "phase_bits") => cfg.ris.phase_bits = e.u8()?,
            ("ris", "center") => cfg.ris.center = e.point()?,
            ("ris", "normal") => cfg.ris.normal = e.point()?,
            ("ris", "spacing_m") => cfg.ris.spacing_m = Some(e.f64()?),
            ("ris", "element_aperture_m") => cfg.ris.element_aperture_m = Some(e.f64()?),
            ("ris", "rho_min") => cfg.ris.rho_min = e.f64()?,
            ("ris", "xi_rad") => cfg.ris.xi_rad = e.f64()?,
            ("ris", "omega") => cfg.ris.omega = e.f64()?,
            ("link", "fc_hz") => cfg.link.fc_hz = e.f64()?,
            ("link", "k_ris_db") => cfg.link.k_ris_db = e.f64()?,
            ("link", "k_bu_db") => cfg.link.k_bu_db = e.f64()?,
            ("link", "shadow_fading") => cfg.link.shadow_fading = e.bool()?,
            ("power", "pt_dbm") => cfg.power.pt_dbm = e.f64()?,
            ("power", "pn_dbm") => cfg.power.pn_dbm = e.f64()?,
            ("mc", "realizations") => cfg.mc.realizations = e.u64()?,
            ("mc", "seed") => cfg.mc.seed = e.u64()?,
            ("sweep", "elements") => {
                cfg.sweep.elements = Some(e.list(|s| s.parse().ok(), "element count")?)
            }
            ("sweep", "phase_bits") => {
                cfg.sweep.phase_bits = Some(e.list(|s| s.parse().ok(), "bit count")?)
            }
            ("sweep", "fc_hz") => {
                cfg.sweep.fc_hz = Some(e.list(|s| s.parse().ok(), "frequency")?)
            }
            ("sweep", "variant") => {
                cfg.sweep.variant = Some(e.list(InfVariant::parse, "variant")?)
            }
            ("sweep", "pt_dbm") => {
                cfg.sweep.pt_dbm = Some(e.list(|s| s.parse().ok(), "power")?)
            }
            ("methods", "list") => {
                cfg.methods = e.list(Method::parse, "method")?;
            }
            ("codebook", label) => {
                if !codebook_overridden {
                    cfg.codebook_positions.clear();
                    codebook_overridden = true;
                }
                cfg.codebook_positions.push((label.to_string(), e.point()?));
            }
            ("e2e", "host") => cfg.e2e.host = value.to_string(),
            ("e2e", "port") => cfg.e2e.port = e.u16()?,
            ("e2e", "xapp") => cfg.e2e.xapp = value.to_string(),
            ("e2e", "periods") => cfg.e2e.periods = e.u64()?,
            ("e2e", "report_period_ms") => cfg.e2e.report_period_ms = e.u32()?,
            ("e2e", "ris_id") => cfg.e2e.ris_id = e.u32()?,
            ("e2e", "freeze_channel") => cfg.e2e.freeze_channel = e.bool()?,
            ("e2e", "codebook_file") => cfg.e2e.codebook_file = Some(value.to_string()),
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
    }

    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &ExperimentConfig) -> Result<(), ConfigError> {
    if cfg.mc.realizations < 1 {
        return Err(ConfigError::Constraint(
            "mc.realizations must be at least 1".into(),
        ));
    }
    if cfg.ue_positions.is_empty() {
        return Err(ConfigError::Constraint(
            "at least one ue.<label> position is required".into(),
        ));
    }
    if cfg.e2e.periods < 1 {
        return Err(ConfigError::Constraint("e2e.periods must be at least 1".into()));
    }
    for (label, _) in cfg.ue_positions.iter().chain(&cfg.codebook_positions) {
        if label.is_empty() || label.chars().any(char::is_whitespace) {
            return Err(ConfigError::Constraint(format!(
                "label {label:?} must be non-empty without whitespace"
            )));
        }
    }
    if let Some(elements) = &cfg.sweep.elements {
        for &n in elements {
            if n == 0 || integer_sqrt(n).is_none() {
                return Err(ConfigError::Constraint(format!(
                    "sweep.elements entry {n} must be a positive perfect square (rows = cols)"
                )));
            }
        }
    }
    // Every sweep point must build; this also checks the deployment table.
    let points = sweep_points(cfg);
    for point in &points {
        let ctx = SweepContext::build(cfg, point)
            .map_err(|e| ConfigError::Constraint(format!("sweep point {point}: {e}")))?;
        if cfg.methods.contains(&Method::BruteForce) {
            let n = ctx.ris_spec.n_elements() as u64;
            let bits = u64::from(ctx.ris_spec.phase_bits);
            if bits == 0 || n.saturating_mul(bits) > 24 {
                return Err(ConfigError::Constraint(format!(
                    "bruteforce requires (2^b)^N <= 2^24; sweep point {point} has N={n}, b={bits}"
                )));
            }
        }
        for (label, pos) in &cfg.ue_positions {
            ctx.scenario
                .with_ue_position(ctx.ue_position(*pos))
                .map_err(|e| {
                    ConfigError::Constraint(format!("ue.{label} at sweep point {point}: {e}"))
                })?;
        }
    }
    Ok(())
}

fn integer_sqrt(n: u32) -> Option<u32> {
    let r = (f64::from(n)).sqrt().round() as u32;
    (r.checked_mul(r) == Some(n)).then_some(r)
}

// ---------------------------------------------------------------------------
// Sweep points
// ---------------------------------------------------------------------------

/// One point of the experiment grid: the base configuration with any swept
/// axes substituted.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub variant: InfVariant,
    pub rows: u16,
    pub cols: u16,
    pub phase_bits: u8,
    pub fc_hz: f64,
    pub pt_dbm: f64,
}

impl std::fmt::Display for SweepPoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "(variant={} n={} b={} fc={} pt={})",
            self.variant,
            u32::from(self.rows) * u32::from(self.cols),
            self.phase_bits,
            self.fc_hz,
            self.pt_dbm
        )
    }
}

/// Cross product of the sweep lists in fixed order
/// (elements, phase_bits, fc, variant, pt); absent axes keep the base value.
pub fn sweep_points(cfg: &ExperimentConfig) -> Vec<SweepPoint> {
    let grids: Vec<(u16, u16)> = match &cfg.sweep.elements {
        Some(list) => list
            .iter()
            .map(|&n| {
                let side = integer_sqrt(n).expect("validated perfect square") as u16;
                (side, side)
            })
            .collect(),
        None => vec![(cfg.ris.rows, cfg.ris.cols)],
    };
    let bits_list = cfg
        .sweep
        .phase_bits
        .clone()
        .unwrap_or_else(|| vec![cfg.ris.phase_bits]);
    let fc_list = cfg.sweep.fc_hz.clone().unwrap_or_else(|| vec![cfg.link.fc_hz]);
    let variant_list = cfg
        .sweep
        .variant
        .clone()
        .unwrap_or_else(|| vec![cfg.scenario.variant]);
    let pt_list = cfg
        .sweep
        .pt_dbm
        .clone()
        .unwrap_or_else(|| vec![cfg.power.pt_dbm]);

    let mut points = Vec::new();
    for &(rows, cols) in &grids {
        for &phase_bits in &bits_list {
            for &fc_hz in &fc_list {
                for &variant in &variant_list {
                    for &pt_dbm in &pt_list {
                        points.push(SweepPoint {
                            variant,
                            rows,
                            cols,
                            phase_bits,
                            fc_hz,
                            pt_dbm,
                        });
                    }
                }
            }
        }
    }
    points
}

/// Everything needed to evaluate one sweep point.
#[derive(Debug, Clone)]
pub struct SweepContext {
    pub scenario: InfScenario,
    pub ris_spec: RisSpec,
    pub link: LinkParams,
    pub power: PowerConfig,
}

impl SweepContext {
    /// Instantiate the models for a sweep point. When the swept variant's
    /// deployment class disagrees with the base layout or placement, the
    /// inconsistent values are canonicalized: clutter density to 0.2/0.6,
    /// clutter size to the table's typical value, and AP/UE heights to the
    /// clutter height boundary (embedded) or above it.
    pub fn build(cfg: &ExperimentConfig, point: &SweepPoint) -> Result<SweepContext, String> {
        let variant = point.variant;
        let s = &cfg.scenario;
        let h_c = s.clutter_height_m;

        let mut r = s.clutter_density_r;
        if variant.is_sparse() && r >= 0.4 {
            r = 0.2;
        } else if variant.is_dense() && r < 0.4 {
            r = 0.6;
        }
        let clutter_size = match variant.typical_clutter_size_m() {
            Some(d) if variant != cfg.scenario.variant => d,
            _ => s.clutter_size_m,
        };
        let mut ap = s.ap_pos;
        if variant.ap_above_clutter() {
            if ap.z <= h_c {
                ap.z = (h_c + 1.0).min(s.ceiling_height_m);
            }
        } else if ap.z > h_c {
            ap.z = h_c;
        }
        let adapt_ue = |mut ue: Point3| {
            if variant.ue_above_clutter() {
                if ue.z <= h_c {
                    ue.z = (h_c + 1.0).min(s.ceiling_height_m);
                }
            } else if ue.z > h_c {
                ue.z = h_c;
            }
            ue
        };

        let layout = FactoryLayout {
            length_m: s.length_m,
            width_m: s.width_m,
            ceiling_height_m: s.ceiling_height_m,
            clutter_density_r: r,
            clutter_size_m: clutter_size,
            clutter_height_m: h_c,
        };
        let placement = Placement {
            ap_pos: ap,
            ris_center: cfg.ris.center,
            ue_pos: adapt_ue(cfg.ue_positions[0].1),
        };
        let scenario = InfScenario::validate(variant, layout, placement)
            .map_err(|e| e.to_string())?;

        let spacing = cfg
            .ris
            .spacing_m
            .unwrap_or_else(|| RisSpec::half_wavelength_spacing(point.fc_hz));
        let aperture = cfg.ris.element_aperture_m.unwrap_or(spacing);
        let ris_spec = RisSpec::new(
            point.rows,
            point.cols,
            point.phase_bits,
            spacing,
            cfg.ris.center,
            cfg.ris.normal,
            aperture,
            AmplitudeParams {
                rho_min: cfg.ris.rho_min,
                xi_rad: cfg.ris.xi_rad,
                omega: cfg.ris.omega,
            },
        )
        .map_err(|e| e.to_string())?;

        let link = LinkParams {
            fc_hz: point.fc_hz,
            k_ris_links_db: cfg.link.k_ris_db,
            k_bu_db: cfg.link.k_bu_db,
            enable_shadow_fading: cfg.link.shadow_fading,
        };
        let power = PowerConfig {
            pt_dbm: point.pt_dbm,
            pn_dbm: cfg.power.pn_dbm,
        };
        Ok(SweepContext {
            scenario,
            ris_spec,
            link,
            power,
        })
    }

    /// UE position adapted to this context's variant height class.
    pub fn ue_position(&self, pos: Point3) -> Point3 {
        let h_c = self.scenario.layout().clutter_height_m;
        let mut ue = pos;
        if self.scenario.variant().ue_above_clutter() {
            if ue.z <= h_c {
                ue.z = (h_c + 1.0).min(self.scenario.layout().ceiling_height_m);
            }
        } else if ue.z > h_c {
            ue.z = h_c;
        }
        ue
    }
}
