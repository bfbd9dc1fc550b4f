//! TOML model and configuration files.
//!
//! A PDE model lists `A` row-major, `b`, the reaction `c(t, x, r)` and optional noise
//! fields; expressions use `t`, `x` (or `x1, x2, ...`) and `r`:
//!
//! ```toml
//! dim = 1
//! diffusion = ["0.125"]
//! drift = ["-x"]
//! reaction = "0.5*r"
//!
//! [noise]
//! sigma = [["0.2"]]
//! nu = ["sin(x)"]
//! g = ["cos(x)"]
//! ```
//!
//! Filtering models and experiment configurations are the serde forms of
//! [`FilteringModel`] and [`ExperimentConfig`].

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coeffs::{NoiseSpec, OperatorCoefficients};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::zakai::{ExperimentConfig, FilteringModel};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseFile {
    #[serde(default)]
    pub sigma: Vec<Vec<String>>,
    #[serde(default)]
    pub nu: Vec<String>,
    #[serde(default)]
    pub g: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeModel {
    pub dim: usize,
    /// `n x n` entries of `A`, row-major.
    pub diffusion: Vec<String>,
    pub drift: Vec<String>,
    #[serde(default = "zero")]
    pub reaction: String,
    /// Lower-Lipschitz constant of the reaction in `r`; sampled on the grid when absent.
    #[serde(default)]
    pub lower_lipschitz: Option<f64>,
    #[serde(default)]
    pub noise: NoiseFile,
}

fn zero() -> String {
    "0".into()
}

/// Values of `r` at which the reaction slope is sampled when no constant is given.
const R_SAMPLES: [f64; 9] = [-10.0, -5.0, -2.0, -1.0, 0.0, 1.0, 2.0, 5.0, 10.0];

impl PdeModel {
    pub fn noise(&self) -> Result<NoiseSpec> {
        let sigma: Vec<Vec<&str>> = self
            .noise
            .sigma
            .iter()
            .map(|c| c.iter().map(String::as_str).collect())
            .collect();
        let nu: Vec<&str> = self.noise.nu.iter().map(String::as_str).collect();
        let g: Vec<&str> = self.noise.g.iter().map(String::as_str).collect();
        NoiseSpec::parse(self.dim, &sigma, &nu, &g)
    }

    /// Coefficients; the lower-Lipschitz constant, if absent, is the smallest sampled
    /// `∂_r c` over the grid nodes at `t ∈ {0, T/2, T}`.
    pub fn operator(&self, grid: &Grid, horizon: f64) -> Result<OperatorCoefficients> {
        if self.drift.len() != self.dim {
            return Err(Error::Model(format!("drift needs {} components", self.dim)));
        }
        let diffusion: Vec<&str> = self.diffusion.iter().map(String::as_str).collect();
        let drift: Vec<&str> = self.drift.iter().map(String::as_str).collect();
        let op = OperatorCoefficients::parse(&diffusion, &drift, &self.reaction, 0.0)?;
        let c = match self.lower_lipschitz {
            Some(c) => c,
            None => {
                if grid.dim() != self.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        got: grid.dim(),
                        context: "model grid",
                    });
                }
                let mut worst = f64::INFINITY;
                let mut x = vec![0.0; self.dim];
                for t in [0.0, 0.5 * horizon, horizon] {
                    for i in 0..grid.len() {
                        grid.point(i, &mut x);
                        for r in R_SAMPLES {
                            worst = worst.min(op.reaction().d_r(t, &x, r));
                        }
                    }
                }
                if !worst.is_finite() {
                    return Err(Error::Model("reaction slope is not finite on the grid".into()));
                }
                worst
            }
        };
        Ok(op.with_lower_lipschitz(c))
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse<T: for<'de> Deserialize<'de>>(src: &str, what: &str) -> Result<T> {
    toml::from_str(src).map_err(|e| Error::Model(format!("{what}: {e}")))
}

pub fn parse_pde_model(src: &str) -> Result<PdeModel> {
    parse(src, "PDE model")
}

pub fn load_pde_model(path: impl AsRef<Path>) -> Result<PdeModel> {
    parse_pde_model(&read(path.as_ref())?)
}

pub fn parse_filtering_model(src: &str) -> Result<FilteringModel> {
    let m: FilteringModel = parse(src, "filtering model")?;
    m.validate()?;
    Ok(m)
}

pub fn load_filtering_model(path: impl AsRef<Path>) -> Result<FilteringModel> {
    parse_filtering_model(&read(path.as_ref())?)
}

pub fn parse_experiment_config(src: &str) -> Result<ExperimentConfig> {
    let c: ExperimentConfig = parse(src, "experiment config")?;
    c.validate()?;
    Ok(c)
}

pub fn load_experiment_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    parse_experiment_config(&read(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zakai::ExperimentKind;

    #[test]
    fn pde_model_round_trip() {
        let src = r#"
dim = 1
diffusion = ["0.125"]
drift = ["-x"]
reaction = "0.5*r - r^3"

[noise]
sigma = [["0.2"]]
nu = ["sin(x)"]
g = ["cos(x)"]
"#;
        let m = parse_pde_model(src).unwrap();
        let grid = Grid::uniform(-1.0, 1.0, 5, 1).unwrap();
        let op = m.operator(&grid, 1.0).unwrap();
        assert!((op.lower_lipschitz() - (0.5 - 300.0)).abs() < 1e-9);
        let noise = m.noise().unwrap();
        assert_eq!((noise.d1(), noise.d2(), noise.d3()), (1, 1, 1));
        let back = parse_pde_model(&toml::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse_pde_model("dim = 1\ndiffusion = [\"1\"]\ndrift = [\"0\"]\nspeed = 3").is_err());
        assert!(parse_filtering_model("dim = 1").is_err());
    }

    #[test]
    fn filtering_model_and_config_files() {
        let m = FilteringModel::two_channel();
        let back = parse_filtering_model(&toml::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);

        let c = parse_experiment_config("kind = \"oracle-compare\"\nseeds = [1, 2]\nparticles = 500").unwrap();
        assert_eq!(c.kind, ExperimentKind::OracleCompare);
        assert_eq!(c.seeds, vec![1, 2]);
        assert_eq!(c.levels, vec![6, 7, 8, 9]);
        assert!(parse_experiment_config("kind = \"stability\"\nlevels = [7, 6]").is_err());
    }
}
