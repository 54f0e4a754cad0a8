//! Structure detection: interaction graph, repeated variables, minimal
//! blocks, and factor partitions.
//!
//! Variable indices are zero-based in the API and one-based in JSON.

mod factor;
mod graph;
mod probe;
mod slice;

use rand::Rng;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::oracle::Oracle;
use crate::seed;

pub use factor::{factor_partition, split_is_separable};
pub use graph::{repeated_vars, InteractionGraph};
pub use probe::{interaction_graph, mixed_diff, mixed_difference};
pub use slice::{
    isolate_omega_data, isolate_psi_data, omega_probe, tabulate, AxisLine, FactorData, FactorRole,
    OmegaProbe, Slice, SliceKind,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectError {
    #[error("degenerate domain: the oracle is invalid at too many probes")]
    DegenerateDomain,
    #[error("structure unstable: two anchors disagree on the block partition")]
    StructureUnstable,
    #[error("empty block")]
    EmptyBlock,
    #[error("degenerate block over {vars:?}: all responses constant")]
    DegenerateBlock { vars: Vec<usize> },
    #[error("unresolvable omega for block {vars:?}: no probe pair separates the block")]
    UnresolvableOmega { vars: Vec<usize> },
    #[error("insufficient probes for factor test over {vars:?}")]
    InsufficientProbes { vars: Vec<usize> },
    #[error("not a GS system under current tolerances (reconstruction residual {residual:e})")]
    NotGsSystem { residual: f64 },
}

impl DetectError {
    /// Errors that a fresh anchor may cure.
    fn anchor_dependent(&self) -> bool {
        !matches!(self, DetectError::NotGsSystem { .. } | DetectError::DegenerateDomain)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectConfig {
    /// Relative tolerance of every zero test.
    pub tol: f64,
    /// Probe pairs per mixed difference and per factor test.
    pub probes: usize,
    /// Largest vertex cut considered when peeling repeated variables.
    pub k_max: usize,
    /// Fresh anchors tried after the first one fails.
    pub anchor_redraws: usize,
    /// Points used by the additive reconstruction check.
    pub reconstruction_points: usize,
    /// Tabulated points per variable in detection-time factor data.
    pub points_per_var: usize,
    pub seed: u64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            tol: 1e-8,
            probes: 8,
            k_max: 3,
            anchor_redraws: 3,
            reconstruction_points: 32,
            points_per_var: 20,
            seed: 0,
        }
    }
}

/// One minimal block of a GS system.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    /// Non-repeated variables, sorted.
    pub vars: Vec<usize>,
    /// Repeated variables the block depends on, sorted.
    pub repeated: Vec<usize>,
    pub psi_factors: Vec<Vec<usize>>,
    pub omega_factors: Vec<Vec<usize>>,
    /// Probe pair isolating the repeated side; present iff `repeated` is
    /// nonempty.
    pub omega_probe: Option<OmegaProbe>,
}

impl Block {
    pub fn factor_count(&self) -> usize {
        self.psi_factors.len() + self.omega_factors.len()
    }
}

/// A detected decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct GsStructure {
    pub arity: usize,
    pub repeated: Vec<usize>,
    pub blocks: Vec<Block>,
    /// Variables the target does not depend on.
    pub inactive: Vec<usize>,
    pub anchor: Vec<f64>,
    pub probes_used: u64,
}

impl GsStructure {
    pub fn factor_count(&self) -> usize {
        self.blocks.iter().map(Block::factor_count).sum()
    }

    /// Checks the partition rules of a GS system; returns the first
    /// violation found.
    pub fn validate(&self) -> Result<(), String> {
        let mut seen = vec![0usize; self.arity];
        for &v in self.repeated.iter().chain(&self.inactive) {
            seen[v] += 1;
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if b.vars.is_empty() {
                return Err(format!("block {i} has no non-repeated variables"));
            }
            for &v in &b.vars {
                seen[v] += 1;
            }
            if !b.repeated.iter().all(|v| self.repeated.contains(v)) {
                return Err(format!("block {i} uses a variable outside the repeated set"));
            }
            if !is_partition(&b.psi_factors, &b.vars) {
                return Err(format!("block {i}: psi factors do not partition its variables"));
            }
            if !is_partition(&b.omega_factors, &b.repeated) {
                return Err(format!("block {i}: omega factors do not partition its repeated set"));
            }
        }
        match seen.iter().position(|&c| c != 1) {
            Some(v) => Err(format!("variable x{} is covered {} times", v + 1, seen[v])),
            None => Ok(()),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("structure serializes")
    }
}

fn is_partition(parts: &[Vec<usize>], set: &[usize]) -> bool {
    let mut all: Vec<usize> = parts.iter().flatten().copied().collect();
    all.sort_unstable();
    let mut want = set.to_vec();
    want.sort_unstable();
    parts.iter().all(|p| !p.is_empty()) && all == want
}

fn one_based(v: &[usize]) -> Vec<usize> {
    v.iter().map(|i| i + 1).collect()
}

fn one_based_groups(g: &[Vec<usize>]) -> Vec<Vec<usize>> {
    g.iter().map(|p| one_based(p)).collect()
}

impl Serialize for Block {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Json {
            vars: Vec<usize>,
            repeated: Vec<usize>,
            psi_factors: Vec<Vec<usize>>,
            omega_factors: Vec<Vec<usize>>,
        }
        Json {
            vars: one_based(&self.vars),
            repeated: one_based(&self.repeated),
            psi_factors: one_based_groups(&self.psi_factors),
            omega_factors: one_based_groups(&self.omega_factors),
        }
        .serialize(s)
    }
}

impl Serialize for GsStructure {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Json<'a> {
            repeated: Vec<usize>,
            blocks: &'a [Block],
            inactive: Vec<usize>,
            anchor: &'a [f64],
            probes_used: u64,
        }
        Json {
            repeated: one_based(&self.repeated),
            blocks: &self.blocks,
            inactive: one_based(&self.inactive),
            anchor: &self.anchor,
            probes_used: self.probes_used,
        }
        .serialize(s)
    }
}

fn draw_anchor(oracle: &Oracle, seed: u64, tags: &[u64]) -> Vec<f64> {
    let mut rng = seed::rng(seed, tags);
    let d = oracle.domain();
    (0..d.arity()).map(|i| d.draw_central(i, &mut rng)).collect()
}

/// Block partition at an anchor without factor partitions.
///
/// Components of the interaction graph over the non-repeated variables
/// become blocks. An isolated variable whose slice is constant is
/// reported as inactive instead. Each repeated variable joins the blocks
/// whose isolating difference moves with it. The graph and repeated set
/// are recomputed at a second anchor and must agree.
pub fn minimal_blocks(
    oracle: &Oracle,
    graph: &InteractionGraph,
    repeated: &[usize],
    anchor: &[f64],
    cfg: &DetectConfig,
) -> Result<GsStructure, DetectError> {
    let n = oracle.arity();
    let free: Vec<usize> = (0..n).filter(|v| !repeated.contains(v)).collect();
    let comps = graph.components_within(&free);

    let second = draw_anchor(oracle, cfg.seed, &[0xA7C4, seed::mix64(anchor[0].to_bits())]);
    let graph2 = interaction_graph(oracle, &second, cfg)?;
    if repeated_vars(&graph2, cfg.k_max) != repeated || graph2.components_within(&free) != comps {
        return Err(DetectError::StructureUnstable);
    }

    let mut blocks = Vec::new();
    let mut inactive = Vec::new();
    for comp in comps {
        if comp.is_empty() {
            return Err(DetectError::EmptyBlock);
        }
        let isolated = comp.len() == 1 && repeated.iter().all(|&r| !graph.has_edge(comp[0], r));
        if isolated && slice_is_constant(oracle, comp[0], anchor, cfg) {
            inactive.push(comp[0]);
            continue;
        }
        blocks.push(Block {
            vars: comp,
            repeated: Vec::new(),
            psi_factors: Vec::new(),
            omega_factors: Vec::new(),
            omega_probe: None,
        });
    }
    if blocks.is_empty() && !repeated.is_empty() {
        return Err(DetectError::EmptyBlock);
    }

    if !repeated.is_empty() {
        for b in &mut blocks {
            let probe = omega_probe(oracle, &b.vars, anchor, cfg.tol, cfg.seed)?;
            let members: Vec<usize> = repeated
                .iter()
                .copied()
                .filter(|&r| omega_moves_with(oracle, &probe, r, anchor, cfg))
                .collect();
            if !members.is_empty() {
                b.repeated = members;
                b.omega_probe = Some(probe);
            }
        }
    }

    Ok(GsStructure {
        arity: n,
        repeated: repeated.to_vec(),
        blocks,
        inactive,
        anchor: anchor.to_vec(),
        probes_used: 0,
    })
}

fn slice_is_constant(oracle: &Oracle, v: usize, anchor: &[f64], cfg: &DetectConfig) -> bool {
    let mut rng = seed::rng(cfg.seed, &[0x1DA7, v as u64]);
    let mut p = anchor.to_vec();
    let f0 = oracle.eval_raw(anchor);
    let mut scale = 1.0f64.max(f0.abs());
    let mut spread = 0.0f64;
    for _ in 0..cfg.points_per_var {
        p[v] = oracle.domain().draw_coord(v, &mut rng);
        let y = oracle.eval_raw(&p);
        if y.is_finite() {
            scale = scale.max(y.abs());
            spread = spread.max((y - f0).abs());
        }
    }
    spread <= cfg.tol * scale
}

fn omega_moves_with(
    oracle: &Oracle,
    probe: &OmegaProbe,
    r: usize,
    anchor: &[f64],
    cfg: &DetectConfig,
) -> bool {
    let mut rng = seed::rng(cfg.seed, &[0x3E3B, r as u64, probe.block_vars[0] as u64]);
    let slice = Slice::omega(vec![r], anchor, probe.clone());
    let d0 = slice.eval(oracle, &[anchor[r]]);
    let mut scale = 1.0f64;
    let mut spread = 0.0f64;
    let (lo, hi) = slice.range(oracle, 0);
    for _ in 0..cfg.probes {
        let z = lo + (hi - lo) * rng.gen::<f64>();
        let d = slice.eval(oracle, &[z]);
        if d.is_finite() && d0.is_finite() {
            spread = spread.max((d - d0).abs());
        }
    }
    for b in [&probe.b1, &probe.b2] {
        let mut p = anchor.to_vec();
        for (&v, &x) in probe.block_vars.iter().zip(b) {
            p[v] = x;
        }
        let y = oracle.eval_raw(&p);
        if y.is_finite() {
            scale = scale.max(y.abs());
        }
    }
    spread > cfg.tol * scale
}

/// Detects the full structure: graph, repeated variables, blocks, and both
/// factor partitions of every block, then checks the additive
/// reconstruction at random points.
pub fn detect_structure(oracle: &Oracle, cfg: &DetectConfig) -> Result<GsStructure, DetectError> {
    let start = oracle.evaluations();
    let mut last = DetectError::StructureUnstable;
    for attempt in 0..=cfg.anchor_redraws {
        let anchor = draw_anchor(oracle, cfg.seed, &[0xA7C4, attempt as u64]);
        match detect_at(oracle, &anchor, cfg) {
            Ok(mut s) => {
                s.probes_used = oracle.evaluations() - start;
                return Ok(s);
            }
            Err(e) if e.anchor_dependent() => last = e,
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

fn detect_at(oracle: &Oracle, anchor: &[f64], cfg: &DetectConfig) -> Result<GsStructure, DetectError> {
    let graph = interaction_graph(oracle, anchor, cfg)?;
    let repeated = repeated_vars(&graph, cfg.k_max);
    let mut s = minimal_blocks(oracle, &graph, &repeated, anchor, cfg)?;
    let data_seed = seed::derive(cfg.seed, &[0xDA7A]);
    for b in &mut s.blocks {
        let psi = isolate_psi_data(oracle, &b.vars, anchor, cfg.points_per_var, cfg.tol, data_seed)?;
        b.psi_factors = factor_partition(oracle, &psi, cfg)?;
        if let Some(probe) = &b.omega_probe {
            let omega = isolate_omega_data(
                oracle,
                &b.repeated,
                probe,
                anchor,
                cfg.points_per_var,
                cfg.tol,
                data_seed,
            )?;
            b.omega_factors = factor_partition(oracle, &omega, cfg)?;
        }
    }
    check_reconstruction(oracle, &s, cfg)?;
    Ok(s)
}

fn check_reconstruction(oracle: &Oracle, s: &GsStructure, cfg: &DetectConfig) -> Result<(), DetectError> {
    let mut rng = seed::rng(cfg.seed, &[0x5EC0]);
    let anchor = &s.anchor;
    let f0 = oracle.eval_raw(anchor);
    let free: Vec<usize> = (0..s.arity).filter(|v| !s.repeated.contains(v)).collect();
    let mut worst = 0.0f64;
    let mut scale = 1.0f64.max(f0.abs());
    for _ in 0..cfg.reconstruction_points {
        for _ in 0..=10 {
            let mut x = anchor.clone();
            for &v in &free {
                x[v] = oracle.domain().draw_coord(v, &mut rng);
            }
            let fx = oracle.eval_raw(&x);
            let mut sum = 0.0;
            let mut ok = fx.is_finite();
            for b in &s.blocks {
                let mut p = anchor.clone();
                for &v in &b.vars {
                    p[v] = x[v];
                }
                let y = oracle.eval_raw(&p);
                ok &= y.is_finite();
                scale = scale.max(y.abs());
                sum += y - f0;
            }
            if ok {
                scale = scale.max(fx.abs());
                worst = worst.max((fx - f0 - sum).abs());
                break;
            }
        }
    }
    let residual = worst / scale;
    if residual > cfg.tol {
        return Err(DetectError::NotGsSystem { residual });
    }
    Ok(())
}
