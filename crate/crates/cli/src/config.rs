//! Flat `key = value` run configuration. Blank lines and `#` comments are
//! ignored; unknown or repeated keys are errors.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fins_core::interp::Interpolant;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{0}` given twice")]
    Duplicate(String),
    #[error("key `{key}`: {msg}")]
    Value { key: String, msg: String },
    #[error("cannot read config: {0}")]
    Io(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum VelocityInit {
    Random { amplitude: f64, modes: (f64, f64) },
    /// `amplitude * cos(k0 (m1 x1 + m2 x2))` along the perpendicular direction.
    SingleMode { amplitude: f64, mode: (i64, i64) },
    Zero,
    Snapshot(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub enum DensityInit {
    Uniform,
    Bump { amplitude: f64, width: f64 },
    Random { amplitude: f64, modes: (f64, f64) },
    Patch,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PatchShape {
    Disk,
    Ellipse,
    Polygon,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchConfig {
    pub shape: PatchShape,
    pub center: (f64, f64),
    pub radius: f64,
    pub axes: (f64, f64),
    pub lobes: u32,
    pub delta: f64,
    pub sigma: f64,
    pub markers: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    pub box_length: f64,
    pub alpha: f64,
    pub nu: f64,
    pub dt: f64,
    pub t_final: f64,
    pub velocity: VelocityInit,
    pub density: DensityInit,
    pub patch: PatchConfig,
    pub interpolant: Interpolant,
    pub diag_every: usize,
    /// Steps between snapshots; 0 writes only the initial and final states.
    pub snapshot_every: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Largest accepted `||rho_0 - 1||_inf`.
    pub max_density_deviation: f64,
    pub gamma: f64,
    pub besov_s: f64,
    pub lebesgue_p: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 64,
            box_length: 2.0 * PI,
            alpha: 0.75,
            nu: 1.0,
            dt: 1e-3,
            t_final: 0.1,
            velocity: VelocityInit::Random {
                amplitude: 0.5,
                modes: (1.0, 4.0),
            },
            density: DensityInit::Uniform,
            patch: PatchConfig {
                shape: PatchShape::Disk,
                center: (PI, PI),
                radius: 1.0,
                axes: (1.2, 0.8),
                lobes: 5,
                delta: 0.1,
                sigma: 0.05,
                markers: 256,
            },
            interpolant: Interpolant::Bicubic,
            diag_every: 1,
            snapshot_every: 0,
            seed: 1,
            out_dir: PathBuf::from("out"),
            max_density_deviation: 0.5,
            gamma: 0.5,
            besov_s: 0.1,
            lebesgue_p: 8.0,
        }
    }
}

/// Every accepted key with a one-line description, in documentation order.
pub const KEYS: &[(&str, &str)] = &[
    ("n", "grid points per axis, power of two >= 8"),
    ("box_length", "side of the periodic box"),
    ("alpha", "fractional order, in (1/2, 1)"),
    ("nu", "viscosity, > 0"),
    ("dt", "time step, > 0"),
    ("t_final", "final time, >= 0"),
    ("velocity", "random | single-mode | zero | snapshot"),
    ("velocity_amplitude", "amplitude of the random or single-mode field"),
    ("velocity_modes", "lo,hi wavenumber band (in units of 2 pi / L) of the random field"),
    ("velocity_mode", "m1,m2 integer wave vector of the single mode"),
    ("snapshot_path", "snapshot file supplying u1 and u2 (and rho if density = patch is not set)"),
    ("density", "uniform | bump | random | patch"),
    ("density_amplitude", "amplitude of the bump or random density perturbation"),
    ("density_modes", "lo,hi wavenumber band of the random density"),
    ("bump_width", "Gaussian width of the bump"),
    ("patch_shape", "disk | ellipse | polygon"),
    ("patch_center", "x1,x2"),
    ("patch_radius", "disk and polygon radius"),
    ("patch_axes", "a,b ellipse semi-axes"),
    ("patch_lobes", "polygon lobe count"),
    ("patch_delta", "polygon radial modulation, |delta| < 1"),
    ("patch_sigma", "density jump across the patch boundary, |sigma| < 1"),
    ("patch_markers", "contour markers, >= 64"),
    ("interpolant", "bicubic | bilinear-clamped"),
    ("diag_every", "steps between diagnostics records, >= 1"),
    ("snapshot_every", "steps between snapshots; 0 for initial and final only"),
    ("seed", "64-bit seed of every random choice"),
    ("out_dir", "output directory"),
    ("max_density_deviation", "largest accepted ||rho_0 - 1||_inf"),
    ("gamma", "Holder exponent of the patch boundary, in (0, 1]"),
    ("besov_s", "extra regularity s of the data, in (0, 1)"),
    ("lebesgue_p", "Lebesgue exponent p of the maximal-regularity norms"),
];

fn bad(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Value {
        key: key.to_string(),
        msg: msg.into(),
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse::<T>().map_err(|_| bad(key, format!("cannot parse `{v}`")))
}

fn pair<T: FromStr>(key: &str, v: &str) -> Result<(T, T), ConfigError> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(bad(key, format!("expected two comma-separated values, got `{v}`")));
    }
    Ok((parse(key, parts[0])?, parse(key, parts[1])?))
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1 });
            }
            if !KEYS.iter().any(|(name, _)| *name == k) {
                return Err(ConfigError::UnknownKey(k.to_string()));
            }
            if kv.insert(k.to_string(), v.to_string()).is_some() {
                return Err(ConfigError::Duplicate(k.to_string()));
            }
        }
        let mut c = RunConfig::default();
        let get = |k: &str| kv.get(k).map(String::as_str);
        if let Some(v) = get("n") {
            c.n = parse("n", v)?;
        }
        if let Some(v) = get("box_length") {
            c.box_length = parse("box_length", v)?;
        }
        if let Some(v) = get("alpha") {
            c.alpha = parse("alpha", v)?;
        }
        if let Some(v) = get("nu") {
            c.nu = parse("nu", v)?;
        }
        if let Some(v) = get("dt") {
            c.dt = parse("dt", v)?;
        }
        if let Some(v) = get("t_final") {
            c.t_final = parse("t_final", v)?;
        }
        let amplitude = get("velocity_amplitude").map(|v| parse("velocity_amplitude", v)).transpose()?;
        c.velocity = match get("velocity").unwrap_or("random") {
            "random" => VelocityInit::Random {
                amplitude: amplitude.unwrap_or(0.5),
                modes: get("velocity_modes").map(|v| pair("velocity_modes", v)).transpose()?.unwrap_or((1.0, 4.0)),
            },
            "single-mode" => VelocityInit::SingleMode {
                amplitude: amplitude.unwrap_or(0.5),
                mode: get("velocity_mode").map(|v| pair("velocity_mode", v)).transpose()?.unwrap_or((0, 1)),
            },
            "zero" => VelocityInit::Zero,
            "snapshot" => VelocityInit::Snapshot(PathBuf::from(
                get("snapshot_path").ok_or_else(|| bad("snapshot_path", "required when velocity = snapshot"))?,
            )),
            other => return Err(bad("velocity", format!("unknown initial velocity `{other}`"))),
        };
        let damp = get("density_amplitude").map(|v| parse("density_amplitude", v)).transpose()?;
        c.density = match get("density").unwrap_or("uniform") {
            "uniform" => DensityInit::Uniform,
            "bump" => DensityInit::Bump {
                amplitude: damp.unwrap_or(0.05),
                width: get("bump_width").map(|v| parse("bump_width", v)).transpose()?.unwrap_or(0.5),
            },
            "random" => DensityInit::Random {
                amplitude: damp.unwrap_or(0.01),
                modes: get("density_modes").map(|v| pair("density_modes", v)).transpose()?.unwrap_or((1.0, 3.0)),
            },
            "patch" => DensityInit::Patch,
            other => return Err(bad("density", format!("unknown density `{other}`"))),
        };
        let p = &mut c.patch;
        if let Some(v) = get("patch_shape") {
            p.shape = match v {
                "disk" => PatchShape::Disk,
                "ellipse" => PatchShape::Ellipse,
                "polygon" => PatchShape::Polygon,
                other => return Err(bad("patch_shape", format!("unknown shape `{other}`"))),
            };
        }
        if let Some(v) = get("patch_center") {
            p.center = pair("patch_center", v)?;
        } else {
            p.center = (0.5 * c.box_length, 0.5 * c.box_length);
        }
        if let Some(v) = get("patch_radius") {
            p.radius = parse("patch_radius", v)?;
        }
        if let Some(v) = get("patch_axes") {
            p.axes = pair("patch_axes", v)?;
        }
        if let Some(v) = get("patch_lobes") {
            p.lobes = parse("patch_lobes", v)?;
        }
        if let Some(v) = get("patch_delta") {
            p.delta = parse("patch_delta", v)?;
        }
        if let Some(v) = get("patch_sigma") {
            p.sigma = parse("patch_sigma", v)?;
        }
        if let Some(v) = get("patch_markers") {
            p.markers = parse("patch_markers", v)?;
        }
        if let Some(v) = get("interpolant") {
            c.interpolant = v.parse().map_err(|_| bad("interpolant", format!("unknown interpolant `{v}`")))?;
        }
        if let Some(v) = get("diag_every") {
            c.diag_every = parse("diag_every", v)?;
        }
        if let Some(v) = get("snapshot_every") {
            c.snapshot_every = parse("snapshot_every", v)?;
        }
        if let Some(v) = get("seed") {
            c.seed = parse("seed", v)?;
        }
        if let Some(v) = get("out_dir") {
            c.out_dir = PathBuf::from(v);
        }
        if let Some(v) = get("max_density_deviation") {
            c.max_density_deviation = parse("max_density_deviation", v)?;
        }
        if let Some(v) = get("gamma") {
            c.gamma = parse("gamma", v)?;
        }
        if let Some(v) = get("besov_s") {
            c.besov_s = parse("besov_s", v)?;
        }
        if let Some(v) = get("lebesgue_p") {
            c.lebesgue_p = parse("lebesgue_p", v)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let pos = |k: &str, v: f64| if v > 0.0 && v.is_finite() { Ok(()) } else { Err(bad(k, "must be positive and finite")) };
        if self.n < 8 || !self.n.is_power_of_two() {
            return Err(bad("n", "must be a power of two >= 8"));
        }
        pos("box_length", self.box_length)?;
        if !(self.alpha > 0.5 && self.alpha < 1.0) {
            return Err(bad("alpha", "must lie in (1/2, 1)"));
        }
        pos("nu", self.nu)?;
        pos("dt", self.dt)?;
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(bad("t_final", "must be finite and >= 0"));
        }
        match &self.velocity {
            VelocityInit::Random { amplitude, modes } => {
                if !amplitude.is_finite() {
                    return Err(bad("velocity_amplitude", "must be finite"));
                }
                if !(modes.0 > 0.0 && modes.1 >= modes.0) {
                    return Err(bad("velocity_modes", "need 0 < lo <= hi"));
                }
            }
            VelocityInit::SingleMode { amplitude, mode } => {
                if !amplitude.is_finite() {
                    return Err(bad("velocity_amplitude", "must be finite"));
                }
                if *mode == (0, 0) {
                    return Err(bad("velocity_mode", "must be nonzero"));
                }
            }
            _ => {}
        }
        match &self.density {
            DensityInit::Bump { amplitude, width } => {
                if amplitude.abs() >= 1.0 {
                    return Err(bad("density_amplitude", "must satisfy |amplitude| < 1"));
                }
                pos("bump_width", *width)?;
            }
            DensityInit::Random { amplitude, modes } => {
                if !amplitude.is_finite() {
                    return Err(bad("density_amplitude", "must be finite"));
                }
                if !(modes.0 > 0.0 && modes.1 >= modes.0) {
                    return Err(bad("density_modes", "need 0 < lo <= hi"));
                }
            }
            _ => {}
        }
        let p = &self.patch;
        if p.sigma.abs() >= 1.0 {
            return Err(bad("patch_sigma", "must satisfy |sigma| < 1"));
        }
        if p.markers < fins_core::patch::MIN_MARKERS {
            return Err(bad("patch_markers", format!("must be >= {}", fins_core::patch::MIN_MARKERS)));
        }
        pos("patch_radius", p.radius)?;
        if !(p.axes.0 > 0.0 && p.axes.1 > 0.0) {
            return Err(bad("patch_axes", "must be positive"));
        }
        if p.delta.abs() >= 1.0 {
            return Err(bad("patch_delta", "must satisfy |delta| < 1"));
        }
        if self.diag_every == 0 {
            return Err(bad("diag_every", "must be >= 1"));
        }
        pos("max_density_deviation", self.max_density_deviation)?;
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(bad("gamma", "must lie in (0, 1]"));
        }
        if !(self.besov_s > 0.0 && self.besov_s < 1.0) {
            return Err(bad("besov_s", "must lie in (0, 1)"));
        }
        if !(self.lebesgue_p >= 1.0 && self.lebesgue_p.is_finite()) {
            return Err(bad("lebesgue_p", "must be finite and >= 1"));
        }
        Ok(())
    }

    /// Largest boundary Holder exponent for which regularity propagation is
    /// known for this `alpha`, `s` and `p`.
    pub fn admissible_gamma(&self) -> f64 {
        2.0 * self.alpha - 1.0 + self.besov_s - 2.0 / self.lebesgue_p
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    /// Canonical `key = value` text; parsing it gives back `self`.
    pub fn to_text(&self) -> String {
        let mut out = vec![];
        let mut put = |k: &str, v: String| out.push(format!("{k} = {v}"));
        put("n", self.n.to_string());
        put("box_length", format!("{:?}", self.box_length));
        put("alpha", format!("{:?}", self.alpha));
        put("nu", format!("{:?}", self.nu));
        put("dt", format!("{:?}", self.dt));
        put("t_final", format!("{:?}", self.t_final));
        match &self.velocity {
            VelocityInit::Random { amplitude, modes } => {
                put("velocity", "random".into());
                put("velocity_amplitude", format!("{amplitude:?}"));
                put("velocity_modes", format!("{:?},{:?}", modes.0, modes.1));
            }
            VelocityInit::SingleMode { amplitude, mode } => {
                put("velocity", "single-mode".into());
                put("velocity_amplitude", format!("{amplitude:?}"));
                put("velocity_mode", format!("{},{}", mode.0, mode.1));
            }
            VelocityInit::Zero => put("velocity", "zero".into()),
            VelocityInit::Snapshot(p) => {
                put("velocity", "snapshot".into());
                put("snapshot_path", p.display().to_string());
            }
        }
        match &self.density {
            DensityInit::Uniform => put("density", "uniform".into()),
            DensityInit::Bump { amplitude, width } => {
                put("density", "bump".into());
                put("density_amplitude", format!("{amplitude:?}"));
                put("bump_width", format!("{width:?}"));
            }
            DensityInit::Random { amplitude, modes } => {
                put("density", "random".into());
                put("density_amplitude", format!("{amplitude:?}"));
                put("density_modes", format!("{:?},{:?}", modes.0, modes.1));
            }
            DensityInit::Patch => put("density", "patch".into()),
        }
        let p = &self.patch;
        put(
            "patch_shape",
            match p.shape {
                PatchShape::Disk => "disk",
                PatchShape::Ellipse => "ellipse",
                PatchShape::Polygon => "polygon",
            }
            .into(),
        );
        put("patch_center", format!("{:?},{:?}", p.center.0, p.center.1));
        put("patch_radius", format!("{:?}", p.radius));
        put("patch_axes", format!("{:?},{:?}", p.axes.0, p.axes.1));
        put("patch_lobes", p.lobes.to_string());
        put("patch_delta", format!("{:?}", p.delta));
        put("patch_sigma", format!("{:?}", p.sigma));
        put("patch_markers", p.markers.to_string());
        put(
            "interpolant",
            match self.interpolant {
                Interpolant::Bicubic => "bicubic",
                Interpolant::BilinearClamped => "bilinear-clamped",
            }
            .into(),
        );
        put("diag_every", self.diag_every.to_string());
        put("snapshot_every", self.snapshot_every.to_string());
        put("seed", self.seed.to_string());
        put("out_dir", self.out_dir.display().to_string());
        put("max_density_deviation", format!("{:?}", self.max_density_deviation));
        put("gamma", format!("{:?}", self.gamma));
        put("besov_s", format!("{:?}", self.besov_s));
        put("lebesgue_p", format!("{:?}", self.lebesgue_p));
        out.join("\n") + "\n"
    }
}
