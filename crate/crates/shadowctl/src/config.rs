//! Flat `section.key = value` run configuration.

use std::collections::HashMap;
use std::fmt::{self, Display};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use shadow_core::hum::Krylov;
use shadow_core::nonlinear::{arctan_family, sigmoid_family, NonlinearityPair, Reaction};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("{}`{key}`: {message}", line_prefix(*.line))]
    Invalid {
        key: String,
        line: usize,
        message: String,
    },
}

fn line_prefix(line: usize) -> String {
    if line == 0 {
        String::new()
    } else {
        format!("line {line}: ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Linear,
    Semilinear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Zero,
    Sigmoid,
    Arctan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Cosine,
    Bump,
    Constant,
}

impl Profile {
    pub fn eval(self, amplitude: f64, x: f64) -> f64 {
        match self {
            Profile::Cosine => amplitude * (std::f64::consts::PI * x).cos(),
            Profile::Bump => amplitude * (-(x - 0.5).powi(2) / 0.01).exp(),
            Profile::Constant => amplitude,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Formats {
    pub csv: bool,
    pub binary: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n_cells: usize,
    pub omega: (f64, f64),
    pub horizon: f64,
    pub n_steps: usize,
    pub mode: Mode,
    pub sigma: f64,
    pub sigma_list: Vec<f64>,
    pub f: Family,
    pub f_k: f64,
    pub g: Family,
    pub g_k: f64,
    pub coeffs: [f64; 4],
    pub y_profile: Profile,
    pub y_amplitude: f64,
    pub z_profile: Profile,
    pub z_amplitude: f64,
    pub epsilon: f64,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
    pub method: Krylov,
    pub jacobi: bool,
    pub outer_tol: f64,
    pub max_outer: usize,
    pub damping: f64,
    pub quadrature_nodes: usize,
    pub t0_fraction: f64,
    pub epsilons: Vec<f64>,
    pub box_halfwidth: f64,
    pub hypothesis_samples: usize,
    pub deriv_tol: f64,
    /// `None` selects the smallest power of two passing the sampled checks.
    pub lambda: Option<f64>,
    pub weight_samples: usize,
    pub directory: PathBuf,
    pub formats: Formats,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_cells: 100,
            omega: (0.3, 0.7),
            horizon: 1.0,
            n_steps: 200,
            mode: Mode::Linear,
            sigma: 1.0,
            sigma_list: vec![1.0, 10.0, 100.0, 1000.0],
            f: Family::Sigmoid,
            f_k: 2.0,
            g: Family::Arctan,
            g_k: 1.0,
            coeffs: [1.0; 4],
            y_profile: Profile::Cosine,
            y_amplitude: 0.1,
            z_profile: Profile::Constant,
            z_amplitude: 0.1,
            epsilon: 1e-6,
            cg_tol: 1e-9,
            cg_max_iters: 500,
            method: Krylov::Cr,
            jacobi: false,
            outer_tol: 1e-6,
            max_outer: 30,
            damping: 1.0,
            quadrature_nodes: 16,
            t0_fraction: 0.1,
            epsilons: Vec::new(),
            box_halfwidth: 1.0,
            hypothesis_samples: 10_000,
            deriv_tol: 1e-6,
            lambda: None,
            weight_samples: 64,
            directory: PathBuf::from("out"),
            formats: Formats::default(),
        }
    }
}

fn parse_num<T: FromStr>(v: &str) -> Result<T, String>
where
    T::Err: Display,
{
    v.parse::<T>().map_err(|e| format!("cannot parse `{v}`: {e}"))
}

fn parse_list(v: &str) -> Result<Vec<f64>, String> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse_num(s.trim())).collect()
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected `true` or `false`, got `{v}`")),
    }
}

fn parse_family(v: &str) -> Result<Family, String> {
    match v {
        "zero" => Ok(Family::Zero),
        "sigmoid" => Ok(Family::Sigmoid),
        "arctan" => Ok(Family::Arctan),
        _ => Err(format!("expected zero, sigmoid or arctan, got `{v}`")),
    }
}

fn parse_profile(v: &str) -> Result<Profile, String> {
    match v {
        "cosine" => Ok(Profile::Cosine),
        "bump" => Ok(Profile::Bump),
        "constant" => Ok(Profile::Constant),
        _ => Err(format!("expected cosine, bump or constant, got `{v}`")),
    }
}

fn parse_formats(v: &str) -> Result<Formats, String> {
    let mut f = Formats::default();
    for item in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item {
            // JSON is always written
            "json" => {}
            "csv" => f.csv = true,
            "binary" => f.binary = true,
            _ => return Err(format!("unknown format `{item}` (json, csv, binary)")),
        }
    }
    Ok(f)
}

fn family_name(f: Family) -> &'static str {
    match f {
        Family::Zero => "zero",
        Family::Sigmoid => "sigmoid",
        Family::Arctan => "arctan",
    }
}

fn profile_name(p: Profile) -> &'static str {
    match p {
        Profile::Cosine => "cosine",
        Profile::Bump => "bump",
        Profile::Constant => "constant",
    }
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        text.parse()
    }

    fn set(&mut self, key: &str, v: &str) -> Result<bool, String> {
        match key {
            "grid.n_cells" => self.n_cells = parse_num(v)?,
            "grid.omega_a" => self.omega.0 = parse_num(v)?,
            "grid.omega_b" => self.omega.1 = parse_num(v)?,
            "time.T" => self.horizon = parse_num(v)?,
            "time.n_steps" => self.n_steps = parse_num(v)?,
            "problem.mode" => {
                self.mode = match v {
                    "linear" => Mode::Linear,
                    "semilinear" => Mode::Semilinear,
                    _ => return Err(format!("expected linear or semilinear, got `{v}`")),
                }
            }
            "problem.sigma" => self.sigma = parse_num(v)?,
            "problem.sigma_list" => self.sigma_list = parse_list(v)?,
            "problem.f" => self.f = parse_family(v)?,
            "problem.f_k" => self.f_k = parse_num(v)?,
            "problem.g" => self.g = parse_family(v)?,
            "problem.g_k" => self.g_k = parse_num(v)?,
            "problem.a" => self.coeffs[0] = parse_num(v)?,
            "problem.b" => self.coeffs[1] = parse_num(v)?,
            "problem.c" => self.coeffs[2] = parse_num(v)?,
            "problem.d" => self.coeffs[3] = parse_num(v)?,
            "initial_data.y_profile" => self.y_profile = parse_profile(v)?,
            "initial_data.y_amplitude" => self.y_amplitude = parse_num(v)?,
            "initial_data.z_profile" => self.z_profile = parse_profile(v)?,
            "initial_data.z_amplitude" => self.z_amplitude = parse_num(v)?,
            "hum.epsilon" => self.epsilon = parse_num(v)?,
            "hum.cg_tol" => self.cg_tol = parse_num(v)?,
            "hum.cg_max_iters" => self.cg_max_iters = parse_num(v)?,
            "hum.method" => {
                self.method = match v {
                    "cg" => Krylov::Cg,
                    "cr" => Krylov::Cr,
                    _ => return Err(format!("expected cg or cr, got `{v}`")),
                }
            }
            "hum.jacobi" => self.jacobi = parse_bool(v)?,
            "fixed_point.outer_tol" => self.outer_tol = parse_num(v)?,
            "fixed_point.max_outer" => self.max_outer = parse_num(v)?,
            "fixed_point.damping" => self.damping = parse_num(v)?,
            "fixed_point.quadrature_nodes" => self.quadrature_nodes = parse_num(v)?,
            "experiment.t0_fraction" => self.t0_fraction = parse_num(v)?,
            "experiment.epsilons" => self.epsilons = parse_list(v)?,
            "hypotheses.box_halfwidth" => self.box_halfwidth = parse_num(v)?,
            "hypotheses.n_samples" => self.hypothesis_samples = parse_num(v)?,
            "hypotheses.deriv_tol" => self.deriv_tol = parse_num(v)?,
            "weights.lambda" => {
                self.lambda = match v {
                    "auto" => None,
                    _ => Some(parse_num(v)?),
                }
            }
            "weights.n_samples" => self.weight_samples = parse_num(v)?,
            "output.directory" => self.directory = PathBuf::from(v),
            "output.formats" => self.formats = parse_formats(v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Every effective value, in file order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let mut formats = vec!["json"];
        if self.formats.csv {
            formats.push("csv");
        }
        if self.formats.binary {
            formats.push("binary");
        }
        vec![
            ("grid.n_cells", self.n_cells.to_string()),
            ("grid.omega_a", self.omega.0.to_string()),
            ("grid.omega_b", self.omega.1.to_string()),
            ("time.T", self.horizon.to_string()),
            ("time.n_steps", self.n_steps.to_string()),
            (
                "problem.mode",
                match self.mode {
                    Mode::Linear => "linear",
                    Mode::Semilinear => "semilinear",
                }
                .into(),
            ),
            ("problem.sigma", self.sigma.to_string()),
            ("problem.sigma_list", join(&self.sigma_list)),
            ("problem.f", family_name(self.f).into()),
            ("problem.f_k", self.f_k.to_string()),
            ("problem.g", family_name(self.g).into()),
            ("problem.g_k", self.g_k.to_string()),
            ("problem.a", self.coeffs[0].to_string()),
            ("problem.b", self.coeffs[1].to_string()),
            ("problem.c", self.coeffs[2].to_string()),
            ("problem.d", self.coeffs[3].to_string()),
            ("initial_data.y_profile", profile_name(self.y_profile).into()),
            ("initial_data.y_amplitude", self.y_amplitude.to_string()),
            ("initial_data.z_profile", profile_name(self.z_profile).into()),
            ("initial_data.z_amplitude", self.z_amplitude.to_string()),
            ("hum.epsilon", self.epsilon.to_string()),
            ("hum.cg_tol", self.cg_tol.to_string()),
            ("hum.cg_max_iters", self.cg_max_iters.to_string()),
            (
                "hum.method",
                match self.method {
                    Krylov::Cg => "cg",
                    Krylov::Cr => "cr",
                }
                .into(),
            ),
            ("hum.jacobi", self.jacobi.to_string()),
            ("fixed_point.outer_tol", self.outer_tol.to_string()),
            ("fixed_point.max_outer", self.max_outer.to_string()),
            ("fixed_point.damping", self.damping.to_string()),
            ("fixed_point.quadrature_nodes", self.quadrature_nodes.to_string()),
            ("experiment.t0_fraction", self.t0_fraction.to_string()),
            ("experiment.epsilons", join(&self.epsilons)),
            ("hypotheses.box_halfwidth", self.box_halfwidth.to_string()),
            ("hypotheses.n_samples", self.hypothesis_samples.to_string()),
            ("hypotheses.deriv_tol", self.deriv_tol.to_string()),
            (
                "weights.lambda",
                self.lambda.map_or_else(|| "auto".into(), |l| l.to_string()),
            ),
            ("weights.n_samples", self.weight_samples.to_string()),
            ("output.directory", self.directory.display().to_string()),
            ("output.formats", formats.join(",")),
        ]
    }

    fn validate(&self, lines: &HashMap<String, usize>) -> Result<(), ConfigError> {
        let fail = |key: &str, message: String| {
            Err(ConfigError::Invalid {
                key: key.into(),
                line: lines.get(key).copied().unwrap_or(0),
                message,
            })
        };
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if self.n_cells < 4 {
            return fail("grid.n_cells", format!("need at least 4 cells, got {}", self.n_cells));
        }
        let (a, b) = self.omega;
        if !(0.0 <= a && a < b && b <= 1.0) {
            let key = if lines.contains_key("grid.omega_b") { "grid.omega_b" } else { "grid.omega_a" };
            return fail(key, format!("need 0 <= omega_a < omega_b <= 1, got ({a}, {b})"));
        }
        if !positive(self.horizon) {
            return fail("time.T", "must be positive".into());
        }
        if self.n_steps == 0 {
            return fail("time.n_steps", "must be positive".into());
        }
        if !(self.sigma >= 1.0 && self.sigma.is_finite()) {
            return fail("problem.sigma", format!("must be >= 1, got {}", self.sigma));
        }
        if self.sigma_list.is_empty() || self.sigma_list.iter().any(|&s| !(s >= 1.0 && s.is_finite())) {
            return fail("problem.sigma_list", "needs values >= 1".into());
        }
        if self.sigma_list.windows(2).any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater)) {
            return fail("problem.sigma_list", "must be strictly increasing".into());
        }
        for (key, family, k) in [("problem.f_k", self.f, self.f_k), ("problem.g_k", self.g, self.g_k)] {
            if family != Family::Zero && !positive(k) {
                return fail(key, "must be positive".into());
            }
        }
        for (key, c) in ["problem.a", "problem.b", "problem.c", "problem.d"].iter().zip(self.coeffs) {
            if !c.is_finite() {
                return fail(key, "must be finite".into());
            }
        }
        for (key, v) in [
            ("initial_data.y_amplitude", self.y_amplitude),
            ("initial_data.z_amplitude", self.z_amplitude),
        ] {
            if !v.is_finite() {
                return fail(key, "must be finite".into());
            }
        }
        if !positive(self.epsilon) {
            return fail("hum.epsilon", "must be positive".into());
        }
        if !positive(self.cg_tol) {
            return fail("hum.cg_tol", "must be positive".into());
        }
        if self.cg_max_iters == 0 {
            return fail("hum.cg_max_iters", "must be positive".into());
        }
        if !positive(self.outer_tol) {
            return fail("fixed_point.outer_tol", "must be positive".into());
        }
        if self.max_outer == 0 {
            return fail("fixed_point.max_outer", "must be positive".into());
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return fail("fixed_point.damping", "must lie in (0, 1]".into());
        }
        if self.quadrature_nodes < 4 {
            return fail("fixed_point.quadrature_nodes", "need at least 4 nodes".into());
        }
        if !(self.t0_fraction > 0.0 && self.t0_fraction < 1.0) {
            return fail("experiment.t0_fraction", "must lie in (0, 1)".into());
        }
        if self.epsilons.iter().any(|&e| !positive(e)) || self.epsilons.windows(2).any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Less)) {
            return fail("experiment.epsilons", "must be positive and strictly decreasing".into());
        }
        if !positive(self.box_halfwidth) {
            return fail("hypotheses.box_halfwidth", "must be positive".into());
        }
        if self.hypothesis_samples < 1000 {
            return fail("hypotheses.n_samples", "need at least 1000 samples".into());
        }
        if !positive(self.deriv_tol) {
            return fail("hypotheses.deriv_tol", "must be positive".into());
        }
        if self.lambda.is_some_and(|l| !positive(l)) {
            return fail("weights.lambda", "must be positive or `auto`".into());
        }
        if self.weight_samples < 2 {
            return fail("weights.n_samples", "need at least 2 samples".into());
        }
        Ok(())
    }

    pub fn pair(&self) -> NonlinearityPair<f64> {
        match self.mode {
            Mode::Linear => {
                let [a, b, c, d] = self.coeffs;
                NonlinearityPair::new(Reaction::Linear { dy: a, dz: b }, Reaction::Linear { dy: c, dz: d })
            }
            Mode::Semilinear => NonlinearityPair::new(reaction(self.f, self.f_k), reaction(self.g, self.g_k)),
        }
    }

    pub fn initial_data(&self, centers: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (
            centers.iter().map(|&x| self.y_profile.eval(self.y_amplitude, x)).collect(),
            centers.iter().map(|&x| self.z_profile.eval(self.z_amplitude, x)).collect(),
        )
    }
}

fn reaction(family: Family, k: f64) -> Reaction<f64> {
    // k > 0 is checked at parse time
    match family {
        Family::Zero => Reaction::Zero,
        Family::Sigmoid => sigmoid_family(k).expect("validated k"),
        Family::Arctan => arctan_family(k).expect("validated k"),
    }
}

impl FromStr for RunConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if seen.insert(key.to_owned(), line).is_some() {
                return Err(ConfigError::Duplicate { line, key: key.into() });
            }
            match cfg.set(key, value) {
                Ok(true) => {}
                Ok(false) => return Err(ConfigError::UnknownKey { line, key: key.into() }),
                Err(message) => {
                    return Err(ConfigError::Invalid {
                        key: key.into(),
                        line,
                        message,
                    })
                }
            }
        }
        cfg.validate(&seen)?;
        Ok(cfg)
    }
}

impl Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (key, value) in self.entries() {
            writeln!(f, "{key} = {value}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_omitted_keys() {
        let cfg: RunConfig = "grid.n_cells = 100\n".parse().unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn comments_and_blank_lines() {
        let cfg: RunConfig = "# header\n\n  time.T = 2   # horizon\nproblem.mode=semilinear\n".parse().unwrap();
        assert_eq!(cfg.horizon, 2.0);
        assert_eq!(cfg.mode, Mode::Semilinear);
    }

    #[test]
    fn sigma_list_parses() {
        let cfg: RunConfig = "problem.sigma_list = 1,10,100,1000".parse().unwrap();
        assert_eq!(cfg.sigma_list, vec![1.0, 10.0, 100.0, 1000.0]);
    }

    #[test]
    fn omega_ordering_is_rejected_with_key_and_line() {
        let err = "grid.omega_a = 0.9\ngrid.omega_b = 0.3\n".parse::<RunConfig>().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("grid.omega_b") && msg.contains("line 2") && msg.contains("omega_a < omega_b"), "{msg}");
    }

    #[test]
    fn errors_name_key_and_line() {
        let err = "grid.n_cells = 100\ngrid.n_cels = 3\n".parse::<RunConfig>().unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey { line: 2, key: "grid.n_cels".into() });
        let err = "\nhum.epsilon = tiny\n".parse::<RunConfig>().unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { line: 2, ref key, .. } if key == "hum.epsilon"));
        let err = "time.T = 1\ntime.T = 2\n".parse::<RunConfig>().unwrap_err();
        assert!(matches!(err, ConfigError::Duplicate { line: 2, .. }));
        let err = "grid.n_cells 100\n".parse::<RunConfig>().unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 1, .. }));
        let err = "fixed_point.damping = 1.5".parse::<RunConfig>().unwrap_err();
        assert!(err.to_string().contains("fixed_point.damping"));
    }

    #[test]
    fn serialize_round_trips_every_value() {
        let text = "grid.n_cells = 64\nproblem.mode = semilinear\nproblem.sigma = 3.3\nweights.lambda = 8\n\
                    experiment.epsilons = 0.1,0.01\noutput.formats = csv,binary\nhum.method = cg\n";
        let cfg: RunConfig = text.parse().unwrap();
        let again: RunConfig = cfg.to_string().parse().unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.to_string(), again.to_string());
        let defaults = RunConfig::default().to_string();
        assert_eq!(defaults.parse::<RunConfig>().unwrap(), RunConfig::default());
        assert_eq!(defaults.lines().count(), RunConfig::default().entries().len());
    }

    proptest::proptest! {
        #[test]
        fn round_trip_holds_for_random_values(
            n in 4usize..1000,
            a in 0.0f64..0.5,
            w in 0.01f64..0.5,
            sigma in 1.0f64..1e6,
            eps in 1e-12f64..1.0,
            amp in -10.0f64..10.0,
            lambda in proptest::option::of(0.01f64..100.0),
        ) {
            let cfg = RunConfig {
                n_cells: n,
                omega: (a, a + w),
                sigma,
                epsilon: eps,
                y_amplitude: amp,
                lambda,
                ..RunConfig::default()
            };
            let back: RunConfig = cfg.to_string().parse().unwrap();
            proptest::prop_assert_eq!(back, cfg);
        }
    }
}
