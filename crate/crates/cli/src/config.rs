//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use bnncert_core::{synth_model, Activation, BnnModel, Image, InputDistribution, PerfFn, TemplateKind};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub n_samples: SampleCount,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub model: ModelSource,
    pub input: InputDistribution,
    pub perf: PerfFn,
    pub template: TemplateKind,
    pub scenario: ScenarioConfig,
    pub risk: RiskConfig,
    #[serde(default)]
    pub dro: DroConfig,
    #[serde(default)]
    pub validate: ValidateConfig,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SampleCount {
    Fixed(usize),
    #[default]
    #[serde(with = "plan_keyword")]
    Plan,
}

mod plan_keyword {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("plan")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        match String::deserialize(d)?.as_str() {
            "plan" => Ok(()),
            other => Err(de::Error::custom(format!("expected \"plan\" or an integer, got {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSource {
    /// JSON model file, relative to the config file.
    Path(PathBuf),
    Synth(SynthSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub arch: Vec<usize>,
    pub activation: Activation,
    #[serde(default = "one")]
    pub weight_scale: f64,
    pub std_scale: f64,
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub eps1: f64,
    pub beta1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskConfig {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// Target half-widths.
    pub h: Vec<f64>,
    #[serde(default)]
    pub rho: Rho,
    /// Overrides the Lipschitz constant of the performance function.
    #[serde(default)]
    pub lipschitz: Option<f64>,
    #[serde(default)]
    pub radius_space: RadiusSpace,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Rho {
    Fixed(f64),
    /// Estimated from the samples.
    #[default]
    #[serde(with = "auto_keyword")]
    Auto,
}

mod auto_keyword {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("auto")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        match String::deserialize(d)?.as_str() {
            "auto" => Ok(()),
            other => Err(de::Error::custom(format!("expected \"auto\" or a number, got {other:?}"))),
        }
    }
}

/// Where the CVaR radius is computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusSpace {
    /// On the scalar values `h(y)`: dimension 1, Lipschitz 1, and `rho` is
    /// the spread of `h`, estimated as `L0` times the output diameter.
    #[default]
    Perf,
    /// On the outputs `y`: the output dimension, `L0`, and the output
    /// diameter.
    Output,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DroConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    pub beta2: f64,
    /// Also report the `1 - max(beta1, beta2)` confidence.
    #[serde(default)]
    pub max_beta_confidence: bool,
}

fn yes() -> bool {
    true
}

impl Default for DroConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            beta2: 0.05,
            max_beta_confidence: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    pub trials: usize,
    /// Fresh samples used to estimate violation mass; 0 skips the estimate
    /// in `certify`.
    pub holdout: usize,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            holdout: 10_000,
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    /// Parses TOML. Relative paths are resolved against `base`, and an
    /// `input.base_image_csv` entry is replaced by the image it names.
    pub fn from_toml(text: &str, base: &Path) -> CliResult<Self> {
        let mut value: toml::Table = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        if let Some(toml::Value::Table(input)) = value.get_mut("input") {
            if let Some(csv) = input.remove("base_image_csv") {
                let path = csv.as_str().ok_or_else(|| config_err("input.base_image_csv must be a path"))?;
                let img = read_image_csv(&base.join(path))?;
                let img = toml::Value::try_from(img).map_err(|e| config_err(e.to_string()))?;
                input.insert("base_image".into(), img);
            }
        }
        let mut cfg: RunConfig = value.try_into().map_err(|e: toml::de::Error| config_err(e.to_string()))?;
        if let ModelSource::Path(p) = &cfg.model {
            cfg.model = ModelSource::Path(base.join(p));
        }
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> CliResult<()> {
        if let ModelSource::Path(p) = &self.model {
            if !p.is_file() {
                return Err(config_err(format!("model file {} not found", p.display())));
            }
        }
        if matches!(self.n_samples, SampleCount::Fixed(0)) {
            return Err(config_err("n_samples must be >= 1"));
        }
        self.input.validate()?;
        self.perf.validate()?;
        let ScenarioConfig { eps1, beta1 } = self.scenario;
        if !(eps1 > 0.0 && eps1 < 1.0 && beta1 > 0.0 && beta1 < 1.0) {
            return Err(config_err("scenario eps1 and beta1 must lie in (0, 1)"));
        }
        let r = &self.risk;
        if r.alphas.is_empty() || r.betas.is_empty() || r.h.is_empty() {
            return Err(config_err("risk needs at least one alpha, beta and h"));
        }
        if let Some(a) = r.alphas.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
            return Err(config_err(format!("alpha = {a} not in (0, 1]")));
        }
        if let Some(b) = r.betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(config_err(format!("beta = {b} not in (0, 1)")));
        }
        if r.h.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
            return Err(config_err("half-widths must be positive"));
        }
        if let Rho::Fixed(rho) = r.rho {
            if !(rho >= 0.0 && rho.is_finite()) {
                return Err(config_err("rho must be finite and >= 0"));
            }
        }
        if matches!(r.lipschitz, Some(l) if !(l >= 0.0 && l.is_finite())) {
            return Err(config_err("lipschitz override must be finite and >= 0"));
        }
        let b2 = self.dro.beta2;
        if !(b2 > 0.0 && b2 < 1.0 && beta1 + b2 < 1.0) {
            return Err(config_err("dro.beta2 must lie in (0, 1) with beta1 + beta2 < 1"));
        }
        if self.validate.trials == 0 {
            return Err(config_err("validate.trials must be >= 1"));
        }
        Ok(())
    }

    pub fn build_model(&self) -> CliResult<BnnModel> {
        Ok(match &self.model {
            ModelSource::Path(p) => BnnModel::load(p)?,
            ModelSource::Synth(s) => synth_model(&s.arch, s.activation, s.weight_scale, s.std_scale, s.seed)?,
        })
    }

    pub fn lipschitz(&self) -> f64 {
        self.risk.lipschitz.unwrap_or_else(|| self.perf.lipschitz_const())
    }

    /// Smallest configured half-width; the one the sample size is planned for.
    pub fn target_half_width(&self) -> f64 {
        self.risk.h.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Comma-separated pixel rows, no header.
fn read_image_csv(path: &Path) -> CliResult<Image> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let mut pixels = Vec::new();
    let mut height = 0;
    let mut width = None;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let row: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        if *width.get_or_insert(row.len()) != row.len() {
            return Err(config_err(format!("{}: ragged image rows", path.display())));
        }
        pixels.extend(row);
        height += 1;
    }
    Ok(Image::new(height, width.unwrap_or(0), pixels)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
seed = 3
[model.synth]
arch = [2, 2]
activation = "linear"
std_scale = 0.1
seed = 1
[input]
kind = "uniform_box"
center = [0.0, 0.0]
radius = 0.5
[perf]
kind = "affine"
a = [1.0, 0.0]
b = 0.0
[template]
kind = "box"
[scenario]
eps1 = 0.1
beta1 = 0.1
[risk]
alphas = [1.0, 0.5]
betas = [0.05]
h = [0.1]
"#;

    #[test]
    fn defaults_and_keywords() {
        let cfg = RunConfig::from_toml(BASE, Path::new("/tmp")).unwrap();
        assert_eq!(cfg.n_samples, SampleCount::Plan);
        assert_eq!(cfg.risk.rho, Rho::Auto);
        assert_eq!(cfg.out_dir, PathBuf::from("/tmp/out"));
        let fixed = format!("n_samples = 50\n{BASE}").replace("h = [0.1]", "h = [0.1]\nrho = 2.5");
        let cfg = RunConfig::from_toml(&fixed, Path::new(".")).unwrap();
        assert_eq!(cfg.n_samples, SampleCount::Fixed(50));
        assert_eq!(cfg.risk.rho, Rho::Fixed(2.5));
        // Echo round trip.
        let back: RunConfig = toml::from_str(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_values() {
        for (from, to) in [
            ("alphas = [1.0, 0.5]", "alphas = [0.0]"),
            ("eps1 = 0.1", "eps1 = 1.5"),
            ("seed = 3", "seed = 3\nn_samples = \"many\""),
            ("seed = 3", "seed = 3\nbogus = 1"),
        ] {
            let text = BASE.replace(from, to);
            assert!(matches!(RunConfig::from_toml(&text, Path::new(".")), Err(CliError::Config(_))), "{to}");
        }
        let missing = BASE.replace(
            "[model.synth]\narch = [2, 2]\nactivation = \"linear\"\nstd_scale = 0.1\nseed = 1",
            "[model]\npath = \"nope.json\"",
        );
        match RunConfig::from_toml(&missing, Path::new(".")) {
            Err(CliError::Config(msg)) => assert!(msg.contains("not found"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn image_csv_is_inlined() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("img.csv"), "0,0.5\n1,0.25\n").unwrap();
        let text = BASE
            .replace("kind = \"uniform_box\"\ncenter = [0.0, 0.0]\nradius = 0.5", "kind = \"contrast\"\nbase_image_csv = \"img.csv\"\nfactor_range = [0.5, 1.5]")
            .replace("arch = [2, 2]", "arch = [4, 2]");
        let cfg = RunConfig::from_toml(&text, dir.path()).unwrap();
        match cfg.input {
            InputDistribution::Contrast { base_image, .. } => {
                assert_eq!((base_image.height, base_image.width), (2, 2));
                assert_eq!(base_image.pixels, vec![0.0, 0.5, 1.0, 0.25]);
            }
            other => panic!("{other:?}"),
        }
    }
}
