//! JSON problem files.

use std::path::Path;

use anyhow::{anyhow, bail, Context};
use explicit_dpc::condense::{ConstraintSet, CostWeights, ReductionOptions};
use explicit_dpc::datamat::{generate_excitation, DataRecord, HorizonSpec};
use explicit_dpc::mpqp::Polyhedron;
use explicit_dpc::presets::default_dpc_domain;
use explicit_dpc::sysmodel::SystemModel;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::Failure;

/// Row-major nested array.
pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<GenerateBlock>,
    pub horizons: HorizonBlock,
    pub weights: WeightBlock,
    pub constraints: ConstraintBlock,
    #[serde(default)]
    pub options: OptionBlock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    #[serde(rename = "C")]
    pub c: Rows,
    #[serde(rename = "D")]
    pub d: Rows,
}

/// Signals as one entry per sample (`[[u1], [u2], ...]`) or, for a single
/// channel, as a flat list.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Signal {
    Flat(Vec<f64>),
    Samples(Rows),
}

impl Signal {
    fn flatten(&self, width: usize, what: &str) -> anyhow::Result<DVector<f64>> {
        match self {
            Signal::Flat(v) => Ok(DVector::from_column_slice(v)),
            Signal::Samples(rows) => {
                if let Some(bad) = rows.iter().position(|r| r.len() != width) {
                    bail!("{what}: sample {bad} has {} entries, expected {width}", rows[bad].len());
                }
                Ok(DVector::from_iterator(rows.len() * width, rows.iter().flatten().copied()))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataBlock {
    pub u: Signal,
    pub y: Signal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateBlock {
    #[serde(rename = "N_d")]
    pub n_d: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "unit")]
    pub amplitude: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonBlock {
    #[serde(rename = "N_p")]
    pub n_p: usize,
    #[serde(rename = "N_f")]
    pub n_f: usize,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightBlock {
    #[serde(rename = "Q")]
    pub q: Rows,
    #[serde(rename = "R")]
    pub r: Rows,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintBlock {
    #[serde(rename = "M_u")]
    pub m_u: Rows,
    pub v_u: Vec<f64>,
    #[serde(rename = "M_y")]
    pub m_y: Rows,
    pub v_y: Vec<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_rank: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_opt: Option<f64>,
    /// Symmetric box half-widths for the state parameter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mpc_domain: Option<Vec<f64>>,
    /// Symmetric box half-widths for the past window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dpc_domain: Option<Vec<f64>>,
    #[serde(default, rename = "Phi", skip_serializing_if = "Option::is_none")]
    pub phi: Option<Rows>,
    #[serde(default, rename = "V_p", skip_serializing_if = "Option::is_none")]
    pub v_p: Option<Rows>,
}

/// Command-line overrides of the option block.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub tol_rank: Option<f64>,
    pub tol_opt: Option<f64>,
    pub seed: Option<u64>,
    pub domain: Option<Vec<f64>>,
    pub phi: Option<f64>,
    pub v_p: Option<Rows>,
}

pub fn matrix(rows: &Rows, what: &str) -> anyhow::Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().position(|row| row.len() != c) {
        bail!("{what}: row {bad} has {} entries, expected {c}", rows[bad].len());
    }
    Ok(DMatrix::from_row_iterator(r, c, rows.iter().flatten().copied()))
}

pub fn rows_of(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn load(path: &Path) -> Result<ProblemFile, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Validation)?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::Validation(anyhow!("{}: {e}", path.display())))
}

/// A problem file resolved into library types.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub model: Option<SystemModel>,
    pub data: DataRecord,
    pub horizons: HorizonSpec,
    pub weights: CostWeights,
    pub constraints: ConstraintSet,
    pub reduction: ReductionOptions,
    pub tol_opt: Option<f64>,
    pub mpc_domain: Option<Polyhedron>,
    pub dpc_domain: Polyhedron,
}

impl Resolved {
    pub fn model(&self) -> Result<&SystemModel, Failure> {
        self.model
            .as_ref()
            .ok_or_else(|| Failure::Validation(anyhow!("this command needs a system block")))
    }

    pub fn mpc_domain(&self) -> Result<&Polyhedron, Failure> {
        self.mpc_domain.as_ref().ok_or_else(|| {
            Failure::Validation(anyhow!("no state domain: set options.mpc_domain or pass --domain"))
        })
    }
}

/// Which parameter a `--domain` flag refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainTarget {
    State,
    Window,
}

pub fn resolve(file: &ProblemFile, ov: &Overrides, target: DomainTarget) -> Result<Resolved, Failure> {
    resolve_inner(file, ov, target).map_err(|e| match e.downcast::<explicit_dpc::Error>() {
        Ok(lib) => Failure::from(lib),
        Err(other) => Failure::Validation(other),
    })
}

fn resolve_inner(file: &ProblemFile, ov: &Overrides, target: DomainTarget) -> anyhow::Result<Resolved> {
    let model = match &file.system {
        Some(s) => Some(SystemModel::new(
            matrix(&s.a, "system.A")?,
            matrix(&s.b, "system.B")?,
            matrix(&s.c, "system.C")?,
            matrix(&s.d, "system.D")?,
        )?),
        None => None,
    };
    let c = &file.constraints;
    let constraints = ConstraintSet::new(
        matrix(&c.m_u, "constraints.M_u")?,
        DVector::from_column_slice(&c.v_u),
        matrix(&c.m_y, "constraints.M_y")?,
        DVector::from_column_slice(&c.v_y),
    )?;
    let (m, p) = (constraints.m(), constraints.p());
    if let Some(model) = &model {
        if model.m() != m || model.p() != p {
            bail!("system has {} inputs and {} outputs but constraints have {m} and {p}", model.m(), model.p());
        }
    }
    let weights = CostWeights::new(matrix(&file.weights.q, "weights.Q")?, matrix(&file.weights.r, "weights.R")?)?;
    let h = &file.horizons;
    let horizons = HorizonSpec::new(h.n_p, h.n_f, h.n)?;

    let data = match (&file.data, &file.generate) {
        (Some(d), None) => DataRecord::new(d.u.flatten(m, "data.u")?, d.y.flatten(p, "data.y")?, m, p)?,
        (None, Some(g)) => {
            let model = model.as_ref().ok_or_else(|| anyhow!("a generate block needs a system block"))?;
            generate_excitation(model, g.n_d, ov.seed.unwrap_or(g.seed), g.amplitude)?
        }
        (Some(_), Some(_)) => bail!("give either a data block or a generate block, not both"),
        (None, None) => bail!("a data block or a generate block is required"),
    };

    let opts = &file.options;
    let tol_rank = ov.tol_rank.or(opts.tol_rank);
    let phi = match (ov.phi, &opts.phi) {
        (Some(s), _) => Some(DMatrix::identity(m * h.n_f, m * h.n_f) * s),
        (None, Some(rows)) => Some(matrix(rows, "options.Phi")?),
        (None, None) => None,
    };
    let v_p = match (&ov.v_p, &opts.v_p) {
        (Some(rows), _) | (None, Some(rows)) => Some(matrix(rows, "V_p")?),
        (None, None) => None,
    };

    let state_bounds = match target {
        DomainTarget::State => ov.domain.clone().or_else(|| opts.mpc_domain.clone()),
        DomainTarget::Window => opts.mpc_domain.clone(),
    };
    let window_bounds = match target {
        DomainTarget::Window => ov.domain.clone().or_else(|| opts.dpc_domain.clone()),
        DomainTarget::State => opts.dpc_domain.clone(),
    };
    let mpc_domain = state_bounds.map(|b| Polyhedron::symmetric_box(&b)).transpose()?;
    let dpc_domain = match window_bounds {
        Some(b) => Polyhedron::symmetric_box(&b)?,
        None => default_dpc_domain(&constraints, h.n_p)?,
    };
    if let (Some(dom), Some(model)) = (&mpc_domain, &model) {
        if dom.dim() != model.n() {
            bail!("state domain has {} bounds, expected {}", dom.dim(), model.n());
        }
    }
    if dpc_domain.dim() != (m + p) * h.n_p {
        bail!("past-window domain has {} bounds, expected {}", dpc_domain.dim(), (m + p) * h.n_p);
    }
    Ok(Resolved {
        model,
        data,
        horizons,
        weights,
        constraints,
        reduction: ReductionOptions { v_p, phi, tol_rank },
        tol_opt: ov.tol_opt.or(opts.tol_opt),
        mpc_domain,
        dpc_domain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{
            "data": {"u": [1, 0, 0, 2, -1, 1, 0.5], "y": [1, 1, 1, 3, 1, 2, 2]},
            "horizons": {"N_p": 1, "N_f": 2, "n": 1},
            "weights": {"Q": [[0.5]], "R": [[0.5]]},
            "constraints": {"M_u": [[1], [-1]], "v_u": [1, 1], "M_y": [[1], [-1]], "v_y": [4, 4]}
        }"#
    }

    #[test]
    fn data_only_problem_resolves() {
        let f: ProblemFile = serde_json::from_str(minimal()).unwrap();
        let r = resolve(&f, &Overrides::default(), DomainTarget::Window).unwrap();
        assert!(r.model.is_none());
        assert_eq!(r.data.len(), 7);
        assert_eq!(r.dpc_domain.dim(), 2);
        assert!(r.mpc_domain().is_err());
    }

    #[test]
    fn unknown_fields_are_rejected_with_position() {
        let text = minimal().replace("\"horizons\"", "\"horizon\"");
        let err = serde_json::from_str::<ProblemFile>(&text).unwrap_err();
        assert!(err.line() > 0);
    }

    #[test]
    fn ragged_matrices_are_rejected() {
        assert!(matrix(&vec![vec![1.0, 2.0], vec![3.0]], "X").is_err());
        let m = matrix(&vec![vec![1.0, 2.0], vec![3.0, 4.0]], "X").unwrap();
        assert_eq!(m[(0, 1)], 2.0);
        assert_eq!(rows_of(&m), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
    }

    #[test]
    fn sample_lists_are_flattened() {
        let s = Signal::Samples(vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(s.flatten(2, "u").unwrap().as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        assert!(s.flatten(3, "u").is_err());
    }
}
