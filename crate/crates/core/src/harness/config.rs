use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scheme::{gen_poisson_grid, gen_uniform_grid, ObservationGrid};
use crate::sde::DiffusionModel;

/// Observation scheme, written `poisson:λ1,λ2` or `uniform:r1,r2[,offset]`.
///
/// For a ladder value `n`, Poisson draws intensities `n·λk` on `[0, T]`;
/// uniform uses `round(n·rk)` intervals per side. Either way `b_n = n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SchemeSpec {
    Poisson { rate1: f64, rate2: f64 },
    Uniform { ratio1: f64, ratio2: f64, offset: f64 },
}

impl SchemeSpec {
    pub fn generate(&self, n: f64, horizon: f64, seed: u64) -> Result<ObservationGrid> {
        match *self {
            SchemeSpec::Poisson { rate1, rate2 } => gen_poisson_grid(rate1, rate2, horizon, n, seed),
            SchemeSpec::Uniform { ratio1, ratio2, offset } => {
                let n1 = (n * ratio1).round().max(1.0) as usize;
                let n2 = (n * ratio2).round().max(1.0) as usize;
                gen_uniform_grid(n1, n2, offset, horizon)?.with_bn(n)
            }
        }
    }
}

impl FromStr for SchemeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("scheme `{s}`: expected poisson:λ1,λ2 or uniform:r1,r2[,offset]"));
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        let nums: Vec<f64> =
            rest.split(',').map(|v| v.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
        if nums.iter().any(|v| !v.is_finite()) {
            return Err(bad());
        }
        let positive = |v: f64| if v > 0.0 { Ok(v) } else { Err(bad()) };
        match (kind.trim(), nums.as_slice()) {
            ("poisson", [a, b]) => Ok(SchemeSpec::Poisson { rate1: positive(*a)?, rate2: positive(*b)? }),
            ("uniform", [a, b]) => Ok(SchemeSpec::Uniform { ratio1: positive(*a)?, ratio2: positive(*b)?, offset: 0.0 }),
            ("uniform", [a, b, o]) if (0.0..1.0).contains(o) => {
                Ok(SchemeSpec::Uniform { ratio1: positive(*a)?, ratio2: positive(*b)?, offset: *o })
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for SchemeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemeSpec::Poisson { rate1, rate2 } => write!(f, "poisson:{rate1},{rate2}"),
            SchemeSpec::Uniform { ratio1, ratio2, offset } => write!(f, "uniform:{ratio1},{ratio2},{offset}"),
        }
    }
}

impl TryFrom<String> for SchemeSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SchemeSpec> for String {
    fn from(s: SchemeSpec) -> String {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Estimators {
    pub qmle: bool,
    pub bayes: bool,
    pub hy: bool,
}

impl Default for Estimators {
    fn default() -> Self {
        Self { qmle: true, bayes: true, hy: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: String,
    /// Defaults to the model's conventional truth.
    #[serde(default)]
    pub sigma_star: Option<Vec<f64>>,
    pub scheme: SchemeSpec,
    /// `b_n` values.
    pub n_ladder: Vec<f64>,
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub horizon: f64,
    #[serde(default)]
    pub estimators: Estimators,
    #[serde(default = "uniform")]
    pub prior: String,
    #[serde(default)]
    pub outputs: Outputs,
    /// Record per-replicate wall time (breaks byte-identical output).
    #[serde(default)]
    pub timing: bool,
}

fn one() -> f64 {
    1.0
}

fn uniform() -> String {
    "uniform".into()
}

impl ExperimentConfig {
    pub fn new(model: &str, scheme: SchemeSpec, n_ladder: Vec<f64>, replicates: usize, seed: u64) -> Self {
        Self {
            model: model.into(),
            sigma_star: None,
            scheme,
            n_ladder,
            replicates,
            seed,
            horizon: 1.0,
            estimators: Estimators::default(),
            prior: uniform(),
            outputs: Outputs::default(),
            timing: false,
        }
    }

    /// Reads JSON, or TOML when the extension is `.toml`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn model(&self) -> Result<DiffusionModel> {
        DiffusionModel::builtin(&self.model)
    }

    pub fn truth(&self) -> Result<Vec<f64>> {
        match &self.sigma_star {
            Some(s) => Ok(s.clone()),
            None => DiffusionModel::builtin_truth(&self.model),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let model = self.model()?;
        let truth = self.truth()?;
        if truth.len() != model.dim() || !model.param_box().contains_interior(&truth) {
            return Err(Error::InvalidArgument(format!("sigma* = {truth:?} is not interior to the parameter box")));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("replicates must be at least 1".into()));
        }
        if let Some(n) = self.n_ladder.iter().find(|n| !(**n > 0.0 && n.is_finite())) {
            return Err(Error::InvalidArgument(format!("n ladder entries must be positive, got {n}")));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.estimators.bayes && !self.estimators.qmle {
            return Err(Error::InvalidArgument("the Bayes-type estimator needs the QMLE enabled".into()));
        }
        crate::estimate::Prior::from_name(&self.prior)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheme_strings() {
        let p: SchemeSpec = "poisson:1,2.5".parse().unwrap();
        assert_eq!(p, SchemeSpec::Poisson { rate1: 1.0, rate2: 2.5 });
        assert_eq!(p.to_string().parse::<SchemeSpec>().unwrap(), p);
        let u: SchemeSpec = "uniform:1,1,0.5".parse().unwrap();
        assert_eq!(u.to_string().parse::<SchemeSpec>().unwrap(), u);
        for bad in ["poisson:1", "poisson:0,1", "gamma:1,1", "uniform:1,1,1.5", "poisson"] {
            assert!(bad.parse::<SchemeSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn uniform_scheme_sets_bn() {
        let g = SchemeSpec::Uniform { ratio1: 1.0, ratio2: 0.5, offset: 0.25 }.generate(40.0, 2.0, 0).unwrap();
        assert_eq!((g.l1(), g.l2(), g.bn()), (40, 20, 40.0));
    }

    #[test]
    fn json_and_toml_configs() {
        let dir = tempfile::tempdir().unwrap();
        let json = dir.path().join("c.json");
        std::fs::write(&json, r#"{"model":"bm","scheme":"poisson:1,1","n_ladder":[100],"replicates":3,"seed":5}"#)
            .unwrap();
        let c = ExperimentConfig::load(&json).unwrap();
        assert_eq!(c.horizon, 1.0);
        assert!(c.estimators.bayes);
        let toml_path = dir.path().join("c.toml");
        std::fs::write(
            &toml_path,
            "model = \"corr\"\nscheme = \"uniform:1,1\"\nn_ladder = [50.0, 100.0]\nreplicates = 2\n\n[estimators]\nbayes = false\n",
        )
        .unwrap();
        let t = ExperimentConfig::load(&toml_path).unwrap();
        assert!(!t.estimators.bayes && t.estimators.qmle);
        assert_eq!(t.truth().unwrap(), vec![1.0, 0.8, 0.6]);
        std::fs::write(&json, r#"{"model":"bm","scheme":"poisson:1,1","n_ladder":[100],"replicates":0}"#).unwrap();
        assert!(ExperimentConfig::load(&json).is_err());
    }
}
