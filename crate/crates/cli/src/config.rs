//! Experiment configuration: one TOML file per run, unknown keys rejected.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use twistkam_core::genfun::{Family, FourierTerm, GeneratingFunction};

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// One of: audit, orbit, conjugate-scan, green, minimize, f-profile,
    /// periodic, graph, alpha, mane, aubry, foliation, crosscheck.
    pub command: String,
    /// Mandatory: every stochastic multistart derives from it.
    pub seed: u64,
    pub genfun: GenfunConfig,
    #[serde(default)]
    pub params: Params,
    pub output: OutputConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenfunConfig {
    pub family: String,
    pub k: Option<f64>,
    pub eps: Option<f64>,
    /// Row-major symmetric positive definite matrix.
    pub m: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub terms: Vec<TermConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub index: Vec<i64>,
    #[serde(default)]
    pub cos_coeff: f64,
    #[serde(default)]
    pub sin_coeff: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub n: Option<usize>,
    pub r: Option<Vec<i64>>,
    pub grid: Option<Vec<usize>>,
    pub x: Option<Vec<f64>>,
    pub y: Option<Vec<f64>>,
    pub p: Option<Vec<f64>>,
    pub steps: Option<i64>,
    pub n_max: Option<usize>,
    pub r_max: Option<i64>,
    pub n_iter: Option<usize>,
    pub c: Option<Vec<f64>>,
    pub classes: Option<Vec<Vec<f64>>>,
    pub p_min: Option<Vec<f64>>,
    pub p_max: Option<Vec<f64>>,
    pub p_res: Option<usize>,
    pub threshold: Option<f64>,
    pub samples: Option<usize>,
    pub multistarts: Option<usize>,
    pub indicator_tol: Option<f64>,
    pub assert_gap_above: Option<f64>,
    pub assert_gap_below: Option<f64>,
    pub assert_degeneracy: Option<bool>,
    pub assert_match_below: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// csv | json (csv also writes the JSON audit summaries).
    pub format: Option<String>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        const COMMANDS: &[&str] = &[
            "audit",
            "orbit",
            "conjugate-scan",
            "green",
            "minimize",
            "f-profile",
            "periodic",
            "graph",
            "alpha",
            "mane",
            "aubry",
            "foliation",
            "crosscheck",
        ];
        if !COMMANDS.contains(&self.command.as_str()) {
            return Err(CliError::Config(format!("unknown command `{}`", self.command)));
        }
        if let Some(fmt) = &self.output.format {
            if fmt != "csv" && fmt != "json" {
                return Err(CliError::Config(format!("unknown output format `{fmt}`")));
            }
        }
        for (name, tol) in [
            ("threshold", self.params.threshold),
            ("indicator_tol", self.params.indicator_tol),
        ] {
            if let Some(t) = tol {
                if !(t > 0.0) {
                    return Err(CliError::Config(format!("{name} must be positive")));
                }
            }
        }
        Ok(())
    }

    pub fn build_genfun(&self) -> Result<GeneratingFunction, CliError> {
        let g = &self.genfun;
        let matrix = |rows: &Vec<Vec<f64>>| -> Result<DMatrix<f64>, CliError> {
            let n = rows.len();
            if rows.iter().any(|r| r.len() != n) {
                return Err(CliError::Config("matrix m must be square".into()));
            }
            Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
        };
        let terms: Vec<FourierTerm> = g
            .terms
            .iter()
            .map(|t| FourierTerm {
                index: t.index.clone(),
                cos_coeff: t.cos_coeff,
                sin_coeff: t.sin_coeff,
            })
            .collect();
        let family = match g.family.as_str() {
            "integrable_quadratic" => Family::IntegrableQuadratic {
                m: matrix(g.m.as_ref().ok_or_else(|| {
                    CliError::Config("integrable_quadratic needs m".into())
                })?)?,
            },
            "integrable_convex" => Family::IntegrableConvex {
                m: matrix(g.m.as_ref().ok_or_else(|| {
                    CliError::Config("integrable_convex needs m".into())
                })?)?,
                terms,
            },
            "standard" => Family::Standard {
                k: g.k.ok_or_else(|| CliError::Config("standard needs k".into()))?,
            },
            "coupled_standard" => Family::CoupledStandard {
                k: g.k.ok_or_else(|| CliError::Config("coupled_standard needs k".into()))?,
                eps: g
                    .eps
                    .ok_or_else(|| CliError::Config("coupled_standard needs eps".into()))?,
            },
            "custom_fourier" => Family::CustomFourier {
                m: matrix(g.m.as_ref().ok_or_else(|| {
                    CliError::Config("custom_fourier needs m".into())
                })?)?,
                terms,
            },
            other => return Err(CliError::Config(format!("unknown family `{other}`"))),
        };
        GeneratingFunction::make_family(family).map_err(CliError::from_core)
    }
}

pub fn vec_param(v: &Option<Vec<f64>>, name: &str) -> Result<DVector<f64>, CliError> {
    v.as_ref()
        .map(|v| DVector::from_row_slice(v))
        .ok_or_else(|| CliError::Config(format!("missing params.{name}")))
}
