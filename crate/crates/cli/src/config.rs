//! TOML configuration, presets and resolution into an [`ExperimentConfig`].
//!
//! Precedence: preset, then the config file, then command-line flags.

use std::path::Path;

use anyhow::{anyhow, Context};
use pilot_kalman_core::{ChannelModel, Error, ExperimentConfig, FadingMode, Method, Modulation, UpaGeometry};
use serde::Deserialize;

/// Round-robin `L_p` used when a method list names `round-robin` without one.
pub const DEFAULT_ROUND_ROBIN_LP: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// Exponential model, 32 x 2, M = 10, M_p = 4, 15 dB.
    Fig3,
    /// 10 x 25 planar array, M = 15, M_p = 10, both proposed designs.
    Fig5,
    /// 10 x 25 planar array, block fading, M = 5, M_p = 2, DFT/TDT vs exact.
    Fig9,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Exponential,
    OneRing,
    Upa,
    DftTdt,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub channel: Option<ChannelSection>,
    pub slot: Option<SlotSection>,
    pub fading: Option<FadingSection>,
    pub simulation: Option<SimulationSection>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub model: Option<ModelKind>,
    pub n_t: Option<usize>,
    pub n_r: Option<usize>,
    pub r: Option<f64>,
    pub aoa_deg: Option<f64>,
    pub angle_spread_deg: Option<f64>,
    pub spacing: Option<f64>,
    pub n_vertical: Option<usize>,
    pub n_horizontal: Option<usize>,
    pub elevation_m: Option<f64>,
    pub ring_radius_m: Option<f64>,
    pub distance_m: Option<f64>,
    pub horizontal_aoa_deg: Option<f64>,
    pub path_loss_exponent: Option<f64>,
    pub reference_distance_m: Option<f64>,
    pub path_loss: Option<bool>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotSection {
    pub m: Option<usize>,
    pub m_p: Option<usize>,
    pub snr_db: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FadingSection {
    pub mode: Option<FadingMode>,
    pub velocity_kmh: Option<f64>,
    pub carrier_hz: Option<f64>,
    pub symbol_s: Option<f64>,
    pub a: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub horizon_slots: Option<usize>,
    pub methods: Option<Vec<String>>,
    pub round_robin_lp: Option<usize>,
    pub modulation: Option<Modulation>,
}

/// Flag overrides.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub methods: Option<Vec<String>>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
}

/// Fully specified settings before conversion to the core configuration.
#[derive(Clone, Debug)]
struct Settings {
    model: ModelKind,
    n_t: Option<usize>,
    n_r: usize,
    r: f64,
    aoa_deg: f64,
    angle_spread_deg: f64,
    spacing: f64,
    upa: UpaGeometry,
    path_loss: bool,
    m: usize,
    m_p: usize,
    snr_db: f64,
    fading: FadingMode,
    velocity_kmh: f64,
    carrier_hz: f64,
    symbol_s: f64,
    a: Option<f64>,
    runs: usize,
    seed: u64,
    horizon_slots: usize,
    methods: Vec<String>,
    round_robin_lp: usize,
    modulation: Modulation,
}

impl Settings {
    fn preset(p: Preset) -> Self {
        let base = Settings {
            model: ModelKind::Exponential,
            n_t: Some(32),
            n_r: 2,
            r: 0.6,
            aoa_deg: 30.0,
            angle_spread_deg: 10.0,
            spacing: 0.5,
            upa: UpaGeometry::default(),
            path_loss: false,
            m: 10,
            m_p: 4,
            snr_db: 15.0,
            fading: FadingMode::Symbol,
            velocity_kmh: 3.0,
            carrier_hz: 2.5e9,
            symbol_s: 1e-4,
            a: None,
            runs: 1000,
            seed: 1,
            horizon_slots: 30,
            methods: ["proposed", "orthogonal", "random", "fixed-eigen"].map(String::from).to_vec(),
            round_robin_lp: DEFAULT_ROUND_ROBIN_LP,
            modulation: Modulation::None,
        };
        match p {
            Preset::Fig3 => base,
            Preset::Fig5 => Settings {
                model: ModelKind::Upa,
                n_t: None,
                n_r: 1,
                m: 15,
                m_p: 10,
                snr_db: 10.0,
                methods: ["proposed", "proposed-power"].map(String::from).to_vec(),
                ..base
            },
            Preset::Fig9 => Settings {
                model: ModelKind::Upa,
                n_t: None,
                n_r: 1,
                m: 5,
                m_p: 2,
                snr_db: 10.0,
                fading: FadingMode::Block,
                methods: ["proposed", "dft-tdt", "round-robin"].map(String::from).to_vec(),
                round_robin_lp: 50,
                ..base
            },
        }
    }

    fn apply_file(&mut self, f: FileConfig) {
        if let Some(c) = f.channel {
            if let Some(v) = c.model {
                self.model = v;
                if v == ModelKind::Upa && c.n_t.is_none() {
                    self.n_t = None;
                }
            }
            set(&mut self.n_r, c.n_r);
            set(&mut self.r, c.r);
            set(&mut self.aoa_deg, c.aoa_deg);
            set(&mut self.angle_spread_deg, c.angle_spread_deg);
            set(&mut self.spacing, c.spacing);
            set(&mut self.upa.n_vertical, c.n_vertical);
            set(&mut self.upa.n_horizontal, c.n_horizontal);
            set(&mut self.upa.elevation_m, c.elevation_m);
            set(&mut self.upa.ring_radius_m, c.ring_radius_m);
            set(&mut self.upa.distance_m, c.distance_m);
            set(&mut self.upa.horizontal_aoa, c.horizontal_aoa_deg.map(f64::to_radians));
            set(&mut self.upa.path_loss_exponent, c.path_loss_exponent);
            set(&mut self.upa.reference_distance_m, c.reference_distance_m);
            set(&mut self.path_loss, c.path_loss);
            if c.n_t.is_some() {
                self.n_t = c.n_t;
            }
        }
        if let Some(s) = f.slot {
            set(&mut self.m, s.m);
            set(&mut self.m_p, s.m_p);
            set(&mut self.snr_db, s.snr_db);
        }
        if let Some(s) = f.fading {
            set(&mut self.fading, s.mode);
            set(&mut self.velocity_kmh, s.velocity_kmh);
            set(&mut self.carrier_hz, s.carrier_hz);
            set(&mut self.symbol_s, s.symbol_s);
            if s.a.is_some() {
                self.a = s.a;
            }
        }
        if let Some(s) = f.simulation {
            set(&mut self.runs, s.runs);
            set(&mut self.seed, s.seed);
            set(&mut self.horizon_slots, s.horizon_slots);
            set(&mut self.methods, s.methods);
            set(&mut self.round_robin_lp, s.round_robin_lp);
            set(&mut self.modulation, s.modulation);
        }
    }

    fn apply_overrides(&mut self, o: &Overrides) {
        set(&mut self.methods, o.methods.clone());
        set(&mut self.runs, o.runs);
        set(&mut self.seed, o.seed);
    }

    fn resolve(self) -> anyhow::Result<ExperimentConfig> {
        let n_t = match (self.model, self.n_t) {
            (ModelKind::Upa, None) => self.upa.n_t(),
            (_, Some(n)) => n,
            (_, None) => 32,
        };
        let aoa = self.aoa_deg.to_radians();
        let angle_spread = self.angle_spread_deg.to_radians();
        let model = match self.model {
            ModelKind::Exponential => ChannelModel::Exponential { r: self.r },
            ModelKind::OneRing => ChannelModel::OneRing { aoa, angle_spread, spacing: self.spacing },
            ModelKind::DftTdt => ChannelModel::DftTdt { aoa, angle_spread, spacing: self.spacing },
            ModelKind::Upa => ChannelModel::Upa(self.upa),
        };
        let methods = parse_methods(&self.methods, self.round_robin_lp)?;
        let cfg = ExperimentConfig {
            model,
            n_t,
            n_r: self.n_r,
            m: self.m,
            m_p: self.m_p,
            velocity_kmh: self.velocity_kmh,
            carrier_hz: self.carrier_hz,
            symbol_s: self.symbol_s,
            a: self.a,
            snr_db: self.snr_db,
            fading: self.fading,
            modulation: self.modulation,
            horizon_slots: self.horizon_slots,
            runs: self.runs,
            seed: self.seed,
            methods,
            path_loss: self.path_loss,
        };
        cfg.validate().map_err(field_error)?;
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

/// Parses method names; a bare `round-robin` takes `default_lp`.
pub fn parse_methods(names: &[String], default_lp: usize) -> anyhow::Result<Vec<Method>> {
    if names.is_empty() {
        return Err(anyhow!("simulation.methods: at least one method is required"));
    }
    names
        .iter()
        .map(|n| {
            let n = n.trim();
            if n == "round-robin" {
                Ok(Method::RoundRobin { l_p: default_lp })
            } else {
                n.parse::<Method>().map_err(field_error)
            }
        })
        .collect()
}

/// Prefixes a core validation error with the config field it refers to.
pub fn field_error(e: Error) -> anyhow::Error {
    match &e {
        Error::InvalidParameter { name, reason } => anyhow!("{}: {reason}", qualified(name)),
        _ => anyhow!(e),
    }
}

fn qualified(name: &str) -> String {
    let section = match name {
        "m" | "m_p" | "snr_db" | "noise_var" | "pilot_power" => "slot",
        "a" | "velocity" | "carrier_hz" | "symbol_s" => "fading",
        "runs" | "seed" | "horizon_slots" | "method" | "round_robin_lp" | "modulation" | "schedule" => "simulation",
        _ => "channel",
    };
    let field = match name {
        "velocity" => "velocity_kmh",
        "method" => "methods",
        "aoa" => "aoa_deg",
        "angle_spread" => "angle_spread_deg",
        "horizontal_aoa" => "horizontal_aoa_deg",
        other => other,
    };
    format!("{section}.{field}")
}

/// Parses TOML text.
pub fn parse_toml(text: &str) -> anyhow::Result<FileConfig> {
    toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|r| text[..r.start.min(text.len())].matches('\n').count() + 1);
        match line {
            Some(l) => anyhow!("invalid config at line {l}: {}", e.message().trim()),
            None => anyhow!("invalid config: {}", e.message().trim()),
        }
    })
}

/// Resolves preset, optional config text and flag overrides.
pub fn resolve(preset: Option<Preset>, file: Option<FileConfig>, overrides: &Overrides) -> anyhow::Result<ExperimentConfig> {
    let mut s = Settings::preset(preset.unwrap_or(Preset::Fig3));
    if let Some(f) = file {
        s.apply_file(f);
    }
    s.apply_overrides(overrides);
    s.resolve()
}

/// Reads and resolves a config file.
pub fn load(path: Option<&Path>, preset: Option<Preset>, overrides: &Overrides) -> anyhow::Result<ExperimentConfig> {
    let file = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            Some(parse_toml(&text)?)
        }
        None => None,
    };
    resolve(preset, file, overrides)
}
