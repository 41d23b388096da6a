//! JSON and CSV forms of explicit solutions.

use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use explicit_dpc::mpqp::{CriticalRegion, ExplicitSolution, Facet, Polyhedron, SolveStats};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::problem::{matrix, rows_of, Rows};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LawKind {
    /// Parameter is the state, decision is `u_f`.
    Mpc,
    /// Parameter is the past window, decision is `beta`.
    Dpc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FacetJson {
    Multiplier(usize),
    Constraint(usize),
    Domain(usize),
}

impl From<Facet> for FacetJson {
    fn from(f: Facet) -> Self {
        match f {
            Facet::Multiplier(i) => Self::Multiplier(i),
            Facet::Constraint(i) => Self::Constraint(i),
            Facet::Domain(i) => Self::Domain(i),
        }
    }
}

impl From<FacetJson> for Facet {
    fn from(f: FacetJson) -> Self {
        match f {
            FacetJson::Multiplier(i) => Self::Multiplier(i),
            FacetJson::Constraint(i) => Self::Constraint(i),
            FacetJson::Domain(i) => Self::Domain(i),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfspacesJson {
    #[serde(rename = "A")]
    pub a: Rows,
    pub b: Vec<f64>,
}

impl HalfspacesJson {
    fn from_poly(p: &Polyhedron) -> Self {
        Self { a: rows_of(&p.a), b: p.b.iter().copied().collect() }
    }

    fn to_poly(&self, dim: usize, what: &str) -> anyhow::Result<Polyhedron> {
        let a = if self.a.is_empty() { DMatrix::zeros(0, dim) } else { matrix(&self.a, what)? };
        Ok(Polyhedron::new(a, DVector::from_column_slice(&self.b))?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionJson {
    pub active_set: Vec<usize>,
    pub halfspaces: HalfspacesJson,
    pub facets: Vec<FacetJson>,
    pub gain: Rows,
    pub offset: Vec<f64>,
    pub lambda_gain: Rows,
    pub lambda_offset: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsJson {
    pub facets_crossed: usize,
    pub licq_skips: usize,
    pub jitter_retries: usize,
    pub unresolved_crossings: usize,
    pub domain_clipped: usize,
}

/// `u_f = uf_offset xi + uf_gain beta`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoveryJson {
    pub uf_offset: Rows,
    pub uf_gain: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionFile {
    pub kind: LawKind,
    pub d_theta: usize,
    pub d_z: usize,
    pub domain: HalfspacesJson,
    pub regions: Vec<RegionJson>,
    pub stats: StatsJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recovery: Option<RecoveryJson>,
}

/// Rows of an empty-row matrix lose their width, so it is restored here.
fn matrix_or_empty(rows: &Rows, r: usize, c: usize, what: &str) -> anyhow::Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Ok(DMatrix::zeros(r, c));
    }
    let m = matrix(rows, what)?;
    if m.shape() != (r, c) {
        bail!("{what} is {}x{}, expected {r}x{c}", m.nrows(), m.ncols());
    }
    Ok(m)
}

impl SolutionFile {
    pub fn new(kind: LawKind, sol: &ExplicitSolution, recovery: Option<RecoveryJson>) -> Self {
        let s = &sol.stats;
        Self {
            kind,
            d_theta: sol.d_theta,
            d_z: sol.d_z,
            domain: HalfspacesJson::from_poly(&sol.domain),
            regions: sol
                .regions
                .iter()
                .map(|r| RegionJson {
                    active_set: r.active_set.clone(),
                    halfspaces: HalfspacesJson::from_poly(&r.region),
                    facets: r.facets.iter().map(|&f| f.into()).collect(),
                    gain: rows_of(&r.gain),
                    offset: r.offset.iter().copied().collect(),
                    lambda_gain: rows_of(&r.lambda_gain),
                    lambda_offset: r.lambda_offset.iter().copied().collect(),
                })
                .collect(),
            stats: StatsJson {
                facets_crossed: s.facets_crossed,
                licq_skips: s.licq_skips,
                jitter_retries: s.jitter_retries,
                unresolved_crossings: s.unresolved_crossings,
                domain_clipped: s.domain_clipped,
            },
            recovery,
        }
    }

    pub fn to_solution(&self) -> anyhow::Result<ExplicitSolution> {
        let (dt, dz) = (self.d_theta, self.d_z);
        let regions = self
            .regions
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let what = |f: &str| format!("region {i} {f}");
                let region = r.halfspaces.to_poly(dt, &what("halfspaces"))?;
                if r.facets.len() != region.n_rows() {
                    bail!("{}: {} tags for {} rows", what("facets"), r.facets.len(), region.n_rows());
                }
                let k = r.active_set.len();
                Ok(CriticalRegion {
                    active_set: r.active_set.clone(),
                    gain: matrix_or_empty(&r.gain, dz, dt, &what("gain"))?,
                    offset: DVector::from_column_slice(&r.offset),
                    region,
                    facets: r.facets.iter().map(|&f| f.into()).collect(),
                    lambda_gain: matrix_or_empty(&r.lambda_gain, k, dt, &what("lambda_gain"))?,
                    lambda_offset: DVector::from_column_slice(&r.lambda_offset),
                })
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        if let Some(bad) = regions.iter().position(|r| r.offset.len() != dz) {
            bail!("region {bad} offset has length {}, expected {dz}", regions[bad].offset.len());
        }
        let s = &self.stats;
        Ok(ExplicitSolution {
            regions,
            d_theta: dt,
            d_z: dz,
            domain: self.domain.to_poly(dt, "domain")?,
            stats: SolveStats {
                facets_crossed: s.facets_crossed,
                licq_skips: s.licq_skips,
                jitter_retries: s.jitter_retries,
                unresolved_crossings: s.unresolved_crossings,
                domain_clipped: s.domain_clipped,
            },
        })
    }

    /// `u_f` from a past window and `beta` when recovery maps are present.
    pub fn recover(&self, xi: &DVector<f64>, beta: &DVector<f64>) -> anyhow::Result<Option<DVector<f64>>> {
        let Some(rec) = &self.recovery else { return Ok(None) };
        let offset = matrix(&rec.uf_offset, "recovery.uf_offset")?;
        let gain = matrix(&rec.uf_gain, "recovery.uf_gain")?;
        if offset.ncols() != xi.len() || gain.ncols() != beta.len() || offset.nrows() != gain.nrows() {
            bail!("recovery maps do not match the solution dimensions");
        }
        Ok(Some(offset * xi + gain * beta))
    }

    pub fn write_json(&self, path: &Path) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read_json(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| anyhow!("{}: {e}", path.display()))
    }
}

/// Long-format table with columns `region_id, kind, row, col, value`.
/// Halfspace rows carry `A` in columns `0..d_theta` and `b` in column `d_theta`;
/// offsets use column 0.
pub fn write_csv<W: Write>(sol: &ExplicitSolution, out: W) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["region_id", "kind", "row", "col", "value"])?;
    let mut put = |id: usize, kind: &str, r: usize, c: usize, v: f64| {
        w.write_record([id.to_string(), kind.to_string(), r.to_string(), c.to_string(), v.to_string()])
    };
    for (id, reg) in sol.regions.iter().enumerate() {
        let p = &reg.region;
        for i in 0..p.n_rows() {
            for j in 0..p.dim() {
                put(id, "halfspace", i, j, p.a[(i, j)])?;
            }
            put(id, "halfspace", i, p.dim(), p.b[i])?;
        }
        for i in 0..reg.gain.nrows() {
            for j in 0..reg.gain.ncols() {
                put(id, "gain", i, j, reg.gain[(i, j)])?;
            }
        }
        for (i, v) in reg.offset.iter().enumerate() {
            put(id, "offset", i, 0, *v)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(sol: &ExplicitSolution, path: &Path) -> anyhow::Result<()> {
    let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_csv(sol, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use explicit_dpc::mpqp::explicit_solve;
    use explicit_dpc::presets;

    fn solution() -> ExplicitSolution {
        let sc = presets::example1();
        let b = sc.build().unwrap();
        explicit_solve(&b.mpc, &sc.mpc_domain).unwrap()
    }

    #[test]
    fn json_round_trip_is_exact() {
        let sol = solution();
        let file = SolutionFile::new(LawKind::Mpc, &sol, None);
        let text = serde_json::to_string(&file).unwrap();
        let back: SolutionFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.to_solution().unwrap(), sol);
    }

    #[test]
    fn csv_has_one_line_per_entry() {
        let sol = solution();
        let mut buf = Vec::new();
        write_csv(&sol, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let expected: usize = sol
            .regions
            .iter()
            .map(|r| r.region.n_rows() * (r.region.dim() + 1) + r.gain.len() + r.offset.len())
            .sum();
        assert_eq!(text.lines().count(), expected + 1);
        assert!(text.starts_with("region_id,kind,row,col,value"));
    }

    #[test]
    fn mismatched_facets_are_rejected() {
        let mut file = SolutionFile::new(LawKind::Mpc, &solution(), None);
        file.regions[0].facets.pop();
        assert!(file.to_solution().is_err());
    }
}
