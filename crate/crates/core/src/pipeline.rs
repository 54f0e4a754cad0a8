//! Detect, fit every factor, assemble.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::assemble::{assemble_and_validate, AssembleConfig, AssembleError, AssembledModel};
use crate::detect::{
    detect_structure, isolate_omega_data, isolate_psi_data, DetectConfig, DetectError, FactorData,
    GsStructure,
};
use crate::fit::{fit_factor, FactorModel, OptimizerConfig};
use crate::oracle::Oracle;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub seed: u64,
    pub detect: DetectConfig,
    pub optimizer: OptimizerConfig,
    pub assemble: AssembleConfig,
    /// Largest skeleton (in nodes) tried per factor.
    pub max_nodes: usize,
    /// Tabulated points per variable for each factor fit.
    pub fit_points_per_var: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            detect: DetectConfig::default(),
            optimizer: OptimizerConfig::default(),
            assemble: AssembleConfig::default(),
            max_nodes: 12,
            fit_points_per_var: 40,
        }
    }
}

impl PipelineConfig {
    /// Default settings with every stage seeded from `seed`.
    pub fn seeded(seed: u64) -> PipelineConfig {
        let mut cfg = PipelineConfig::default();
        cfg.set_seed(seed);
        cfg
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.detect.seed = seed::derive(seed, &[0xDE7E]);
        self.optimizer.seed = seed::derive(seed, &[0x0F17]);
    }

    pub fn validate(&self) -> Result<(), String> {
        self.optimizer.validate()?;
        if self.max_nodes < 3 {
            return Err("max_nodes must be at least 3".into());
        }
        if !(self.detect.tol > 0.0) || !(self.assemble.target > 0.0) {
            return Err("tolerances must be positive".into());
        }
        if self.fit_points_per_var < 4 || self.assemble.samples_per_var < 1 {
            return Err("sample counts are too small".into());
        }
        if self.detect.k_max < 1 {
            return Err("k_max must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Assemble(#[from] AssembleError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub structure: GsStructure,
    /// Per block, repeated-side factors first.
    pub factors: Vec<Vec<FactorModel>>,
    pub model: AssembledModel,
    /// Oracle evaluations over the whole run.
    pub evaluations: u64,
}

impl PipelineOutcome {
    pub fn to_json(&self) -> serde_json::Value {
        let factors: Vec<serde_json::Value> = self
            .factors
            .iter()
            .enumerate()
            .flat_map(|(b, fs)| {
                fs.iter().map(move |f| {
                    serde_json::json!({
                        "block": b + 1,
                        "role": f.role,
                        "vars": f.vars.iter().map(|v| v + 1).collect::<Vec<_>>(),
                        "skeleton": f.skeleton,
                        "expr": f.global_expr().to_string(),
                        "train_mse": f.train_mse,
                        "accepted": f.accepted,
                    })
                })
            })
            .collect();
        serde_json::json!({
            "structure": self.structure.to_json(),
            "factors": factors,
            "model": self.model,
            "evaluations": self.evaluations,
        })
    }
}

/// Where a factor's data comes from.
struct Job {
    block: usize,
    index: usize,
    vars: Vec<usize>,
    omega: bool,
}

fn jobs(s: &GsStructure) -> Vec<Job> {
    let mut out = Vec::new();
    for (b, block) in s.blocks.iter().enumerate() {
        let groups = block
            .omega_factors
            .iter()
            .map(|g| (g, true))
            .chain(block.psi_factors.iter().map(|g| (g, false)));
        for (index, (g, omega)) in groups.enumerate() {
            out.push(Job {
                block: b,
                index,
                vars: g.clone(),
                omega,
            });
        }
    }
    out
}

/// Tabulates one factor group, trying fresh anchors when the structure's
/// anchor happens to zero out the rest of the block.
fn factor_data(oracle: &Oracle, s: &GsStructure, job: &Job, cfg: &PipelineConfig, attempt: usize) -> Result<FactorData, DetectError> {
    let tol = cfg.detect.tol;
    let ppv = cfg.fit_points_per_var;
    let mut last = DetectError::EmptyBlock;
    for redraw in 0..4u64 {
        let tags = [0xF17D, job.block as u64, job.index as u64, attempt as u64, redraw];
        let data_seed = seed::derive(cfg.seed, &tags);
        let anchor = if redraw == 0 {
            s.anchor.clone()
        } else {
            let mut rng = seed::rng(data_seed, &[0xA1]);
            let d = oracle.domain();
            (0..oracle.arity()).map(|i| d.draw_central(i, &mut rng)).collect()
        };
        let data = if job.omega {
            let probe = s.blocks[job.block].omega_probe.as_ref().ok_or(DetectError::UnresolvableOmega {
                vars: s.blocks[job.block].vars.clone(),
            })?;
            isolate_omega_data(oracle, &job.vars, probe, &anchor, ppv, tol, data_seed)
        } else {
            isolate_psi_data(oracle, &job.vars, &anchor, ppv, tol, data_seed)
        };
        match data {
            Ok(d) => return Ok(d),
            Err(e) => last = e,
        }
    }
    Err(last)
}

fn fit_all(oracle: &Oracle, s: &GsStructure, cfg: &PipelineConfig, attempt: usize) -> Result<Vec<Vec<FactorModel>>, DetectError> {
    let jobs = jobs(s);
    let fitted: Vec<Result<(usize, FactorModel), DetectError>> = jobs
        .par_iter()
        .map(|job| {
            let data = factor_data(oracle, s, job, cfg, attempt)?;
            let opt = OptimizerConfig {
                seed: seed::derive(cfg.optimizer.seed, &[job.block as u64, job.index as u64, attempt as u64]),
                ..cfg.optimizer.clone()
            };
            Ok((job.block, fit_factor(&data, &opt, cfg.max_nodes)))
        })
        .collect();
    let mut out = vec![Vec::new(); s.blocks.len()];
    for r in fitted {
        let (b, m) = r?;
        out[b].push(m);
    }
    Ok(out)
}

/// Runs all four stages on `oracle`.
pub fn run(oracle: &Oracle, cfg: &PipelineConfig) -> Result<PipelineOutcome, PipelineError> {
    cfg.validate().map_err(PipelineError::Config)?;
    let start = oracle.evaluations();
    let structure = detect_structure(oracle, &cfg.detect)?;
    let factors = fit_all(oracle, &structure, cfg, 0)?;
    let (model, factors) = assemble_and_validate(
        &structure,
        factors,
        oracle,
        &cfg.assemble,
        seed::derive(cfg.seed, &[0xA55E]),
        |attempt| fit_all(oracle, &structure, cfg, attempt).ok(),
    )?;
    Ok(PipelineOutcome {
        structure,
        factors,
        model,
        evaluations: oracle.evaluations() - start,
    })
}
