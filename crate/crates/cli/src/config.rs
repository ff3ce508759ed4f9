//! Configuration file parsing and validation.
//!
//! Configs are TOML documents with kebab-case keys; unknown keys are
//! rejected. Command-line flags override the corresponding keys.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use hombif_core::example::{ExampleConfig, GammaKind};
use hombif_core::system::SystemSpec;

/// Raw document as read from disk; every key optional except `system`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct RawConfig {
    pub system: String,
    pub beta: Option<f64>,
    pub n: Option<u32>,
    /// λ window `[lo, hi]`.
    pub lambda: Option<[f64; 2]>,
    pub grid_step: Option<f64>,
    /// Dichotomy horizon.
    pub horizon: Option<f64>,
    /// Boundary-value problem horizon.
    pub bvp_horizon: Option<f64>,
    pub mesh_width: Option<f64>,
    pub ode_tol: Option<f64>,
    /// Relative Evans zero tolerance.
    pub zero_tol: Option<f64>,
    pub refine_tol: Option<f64>,
    pub newton_tol: Option<f64>,
    pub cluster_tol: Option<f64>,
    pub gap_threshold: Option<f64>,
    pub triviality_floor: Option<f64>,
    pub norm_cap: Option<f64>,
    pub boundary_margin: Option<f64>,
    pub out: Option<PathBuf>,
    /// Critical value to switch a branch from.
    pub seed_lambda: Option<f64>,
    /// Which switch amplitudes to use: plus, minus or both.
    pub seed_sign: Option<SeedSign>,
    pub switch_amplitude: Option<f64>,
    /// Endpoints `[λ₋, λ₊]` for the parity report.
    pub parity_window: Option<[f64; 2]>,
    /// Parameters sampled by the `dichotomy` command.
    pub dichotomy_samples: Option<Vec<f64>>,
    /// Matching tolerance between return parameters and cover gaps.
    pub match_tol: Option<f64>,
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedSign {
    Plus,
    Minus,
    Both,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub example: ExampleConfig,
    pub system_name: String,
    pub lambda_window: (f64, f64),
    pub grid_step: f64,
    pub horizon: f64,
    pub bvp_horizon: f64,
    pub mesh_width: f64,
    pub ode_tol: f64,
    pub zero_tol: f64,
    pub refine_tol: f64,
    pub newton_tol: f64,
    pub cluster_tol: f64,
    pub gap_threshold: f64,
    pub triviality_floor: f64,
    pub norm_cap: f64,
    pub boundary_margin: f64,
    pub out: PathBuf,
    pub seed_lambda: Option<f64>,
    pub seed_sign: SeedSign,
    pub switch_amplitude: f64,
    pub parity_window: Option<(f64, f64)>,
    pub dichotomy_samples: Option<Vec<f64>>,
    pub match_tol: f64,
    pub max_steps: usize,
}

/// Errors from reading or validating a config.
#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    /// TOML syntax or unknown keys; carries the parser message with
    /// line/column information.
    Parse(String),
    /// All violated invariants, collected.
    Validation(Vec<String>),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "cannot read config: {e}"),
            ConfigError::Parse(msg) => write!(f, "config parse error: {msg}"),
            ConfigError::Validation(violations) => {
                writeln!(f, "config validation failed:")?;
                for v in violations {
                    writeln!(f, "  - {v}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

/// Command-line overrides applied on top of the config document.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub grid_step: Option<f64>,
    pub horizon: Option<f64>,
}

pub fn parse_config(path: &Path, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(ConfigError::Io)?;
    let raw: RawConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    resolve(raw, overrides)
}

fn kind_from_name(name: &str) -> Option<GammaKind> {
    match name {
        "example-linear" => Some(GammaKind::Linear),
        "example-abs" => Some(GammaKind::Abs),
        "example-sin" => Some(GammaKind::Sin),
        "example-tan" => Some(GammaKind::Tan),
        _ => None,
    }
}

fn resolve(raw: RawConfig, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    use hombif_core::defaults;

    let mut violations: Vec<String> = Vec::new();

    let kind = match kind_from_name(&raw.system) {
        Some(k) => k,
        None => {
            violations.push(format!(
                "unknown system '{}' (expected example-linear, example-abs, example-sin or example-tan)",
                raw.system
            ));
            GammaKind::Linear
        }
    };
    let beta = raw.beta.unwrap_or(1.0);
    let n = raw.n.unwrap_or(2);
    let example = match ExampleConfig::new(beta, n, kind) {
        Ok(cfg) => cfg,
        Err(e) => {
            violations.push(e.to_string());
            ExampleConfig::new(1.0, 2, kind).expect("fallback config")
        }
    };

    let mut lambda_window = match raw.lambda {
        Some([lo, hi]) => (lo, hi),
        None => (-2.0, 2.0),
    };
    if let Some(lo) = overrides.lambda_min {
        lambda_window.0 = lo;
    }
    if let Some(hi) = overrides.lambda_max {
        lambda_window.1 = hi;
    }
    if !(lambda_window.0 < lambda_window.1) {
        violations.push("lambda window must satisfy lo < hi".to_string());
    }
    let (kl, kh) = kind.lambda_interval();
    if lambda_window.0 <= kl || lambda_window.1 >= kh {
        violations.push(format!(
            "lambda window [{}, {}] must lie inside the system's open parameter interval ({kl}, {kh})",
            lambda_window.0, lambda_window.1
        ));
    }

    let grid_step = overrides.grid_step.or(raw.grid_step).unwrap_or(0.05);
    let horizon = overrides.horizon.or(raw.horizon).unwrap_or(defaults::HORIZON);
    let bvp_horizon = raw.bvp_horizon.unwrap_or(defaults::BVP_HORIZON);
    let mesh_width = raw.mesh_width.unwrap_or(defaults::MESH_WIDTH);
    let ode_tol = raw.ode_tol.unwrap_or(defaults::ODE_TOL);
    let zero_tol = raw.zero_tol.unwrap_or(defaults::ZERO_TOL_REL);
    let refine_tol = raw.refine_tol.unwrap_or(defaults::REFINE_TOL);
    let newton_tol = raw.newton_tol.unwrap_or(defaults::NEWTON_TOL);
    let cluster_tol = raw.cluster_tol.unwrap_or(defaults::CLUSTER_TOL);
    let gap_threshold = raw.gap_threshold.unwrap_or(defaults::GAP_THRESHOLD);
    let triviality_floor = raw.triviality_floor.unwrap_or(defaults::TRIVIALITY_FLOOR);
    let norm_cap = raw.norm_cap.unwrap_or(defaults::NORM_CAP);
    let boundary_margin = raw.boundary_margin.unwrap_or(defaults::BOUNDARY_MARGIN);
    let switch_amplitude = raw.switch_amplitude.unwrap_or(defaults::SWITCH_AMPLITUDE);
    let match_tol = raw.match_tol.unwrap_or(1e-2);
    let max_steps = raw.max_steps.unwrap_or(5000);

    for (name, value) in [
        ("grid-step", grid_step),
        ("horizon", horizon),
        ("bvp-horizon", bvp_horizon),
        ("mesh-width", mesh_width),
        ("ode-tol", ode_tol),
        ("zero-tol", zero_tol),
        ("refine-tol", refine_tol),
        ("newton-tol", newton_tol),
        ("cluster-tol", cluster_tol),
        ("triviality-floor", triviality_floor),
        ("norm-cap", norm_cap),
        ("boundary-margin", boundary_margin),
        ("match-tol", match_tol),
    ] {
        if !(value > 0.0) {
            violations.push(format!("{name} must be positive (got {value})"));
        }
    }
    if !(gap_threshold > 1.0) {
        violations.push(format!("gap-threshold must exceed 1 (got {gap_threshold})"));
    }
    if switch_amplitude == 0.0 {
        violations.push("switch-amplitude must be nonzero".to_string());
    }
    if let Some([a, b]) = raw.parity_window {
        if !(a < b) {
            violations.push("parity-window must satisfy lo < hi".to_string());
        }
    }

    if !violations.is_empty() {
        return Err(ConfigError::Validation(violations));
    }

    Ok(RunConfig {
        example,
        system_name: raw.system,
        lambda_window,
        grid_step,
        horizon,
        bvp_horizon,
        mesh_width,
        ode_tol,
        zero_tol,
        refine_tol,
        newton_tol,
        cluster_tol,
        gap_threshold,
        triviality_floor,
        norm_cap,
        boundary_margin,
        out: overrides
            .out
            .clone()
            .or(raw.out)
            .unwrap_or_else(|| PathBuf::from("out")),
        seed_lambda: raw.seed_lambda,
        seed_sign: raw.seed_sign.unwrap_or(SeedSign::Both),
        switch_amplitude,
        parity_window: raw.parity_window.map(|[a, b]| (a, b)),
        dichotomy_samples: raw.dichotomy_samples,
        match_tol,
        max_steps,
    })
}

impl RunConfig {
    pub fn system(&self) -> SystemSpec {
        hombif_core::example::example_system(&self.example)
    }

    pub fn scan_options(&self) -> hombif_core::evans::ScanOptions {
        hombif_core::evans::ScanOptions {
            subspace: self.subspace_options(),
            zero_tol_rel: self.zero_tol,
            refine_tol: self.refine_tol,
            ..Default::default()
        }
    }

    pub fn subspace_options(&self) -> hombif_core::dichotomy::SubspaceOptions {
        hombif_core::dichotomy::SubspaceOptions {
            horizon: self.horizon,
            gap_threshold: self.gap_threshold,
            rank_hint: None,
            ode_tol: self.ode_tol,
            qr_window: hombif_core::defaults::QR_WINDOW,
        }
    }

    pub fn continuation_options(&self) -> hombif_core::homoclinic::ContinuationOptions {
        hombif_core::homoclinic::ContinuationOptions {
            bvp: hombif_core::homoclinic::BvpOptions {
                horizon: self.bvp_horizon,
                mesh_width: self.mesh_width,
                newton_tol: self.newton_tol,
                triviality_floor: self.triviality_floor,
                subspace: self.subspace_options(),
                ode_tol: self.ode_tol,
                ..Default::default()
            },
            norm_cap: self.norm_cap,
            lambda_window: self.lambda_window,
            boundary_margin: self.boundary_margin,
            switch_amplitude: self.switch_amplitude,
            max_steps: self.max_steps,
            ..Default::default()
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        hombif_core::evans::uniform_grid(self.lambda_window.0, self.lambda_window.1, self.grid_step)
    }
}
