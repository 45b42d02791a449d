//! JSON persistence for HDMR models and staged model manifests.
//!
//! A model file is a single JSON document
//! `{"axis_sizes": [...], "g0": ..., "first_order": [[...], ...],
//!   "second_order": [{"m": ..., "n": ..., "table": [[...], ...]}, ...]}`
//! with axis labels printed 1-based; numbers round-trip at full f64
//! precision. A manifest lists the per-stage model files of a dynamic
//! program together with the horizon, the minimization precision the pass
//! was run with, and the role of each grid axis.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::hdmr::{GridDomain, HdmrModel};
use crate::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct PairTableFile {
    /// 1-based first axis label.
    m: usize,
    /// 1-based second axis label.
    n: usize,
    table: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    axis_sizes: Vec<usize>,
    g0: f64,
    first_order: Vec<Vec<f64>>,
    second_order: Vec<PairTableFile>,
}

/// Per-axis role in a staged model manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisRole {
    Action,
    State,
}

/// Index of the per-stage model files of one offline pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub horizon: usize,
    pub phi: f64,
    /// Relative stage file names, stage 1 first.
    pub stages: Vec<String>,
    pub axis_roles: Vec<AxisRole>,
}

fn model_to_file(model: &HdmrModel) -> ModelFile {
    let d = model.domain().dim();
    let mut second_order = Vec::new();
    for m in 0..d {
        for n in m + 1..d {
            let sn = model.domain().axis_size(n);
            let flat = &model.second_order_tables()[crate::hdmr::pair_index(d, m, n)];
            let table: Vec<Vec<f64>> = flat.chunks(sn).map(|row| row.to_vec()).collect();
            second_order.push(PairTableFile {
                m: m + 1,
                n: n + 1,
                table,
            });
        }
    }
    ModelFile {
        axis_sizes: model.domain().axis_sizes().to_vec(),
        g0: model.g0(),
        first_order: model.first_order_tables().to_vec(),
        second_order,
    }
}

fn model_from_file(file: ModelFile) -> Result<HdmrModel> {
    let domain = GridDomain::new(file.axis_sizes)?;
    let d = domain.dim();
    let expected_pairs = d * (d - 1) / 2;
    if file.second_order.len() != expected_pairs {
        return Err(Error::Format(format!(
            "expected {expected_pairs} pair tables, found {}",
            file.second_order.len()
        )));
    }
    let mut second_order: Vec<Option<Vec<f64>>> = vec![None; expected_pairs];
    for pt in file.second_order {
        if pt.m == 0 || pt.n == 0 || pt.m > d || pt.n > d || pt.m >= pt.n {
            return Err(Error::Format(format!("invalid pair labels ({}, {})", pt.m, pt.n)));
        }
        let (m, n) = (pt.m - 1, pt.n - 1);
        if pt.table.len() != domain.axis_size(m)
            || pt.table.iter().any(|row| row.len() != domain.axis_size(n))
        {
            return Err(Error::Format(format!(
                "pair table ({}, {}) has wrong shape",
                pt.m, pt.n
            )));
        }
        let idx = crate::hdmr::pair_index(d, m, n);
        if second_order[idx].is_some() {
            return Err(Error::Format(format!("duplicate pair table ({}, {})", pt.m, pt.n)));
        }
        second_order[idx] = Some(pt.table.into_iter().flatten().collect());
    }
    let second_order: Vec<Vec<f64>> = second_order.into_iter().map(Option::unwrap).collect();
    // from_tables validates shapes and rejects NaN/Inf.
    HdmrModel::from_tables(domain, file.g0, file.first_order, second_order)
}

pub fn save_model(model: &HdmrModel, path: &Path) -> Result<()> {
    let file = model_to_file(model);
    let json = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<HdmrModel> {
    let text = std::fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    model_from_file(file)
}

/// Writes the manifest and one model file per stage into `dir`.
pub fn save_stages(
    dir: &Path,
    horizon: usize,
    phi: f64,
    models: &[HdmrModel],
    axis_roles: &[AxisRole],
) -> Result<Manifest> {
    if models.len() != horizon {
        return Err(Error::DimensionMismatch {
            expected: horizon,
            got: models.len(),
        });
    }
    std::fs::create_dir_all(dir)?;
    let mut stages = Vec::with_capacity(models.len());
    for (i, model) in models.iter().enumerate() {
        let name = format!("stage_{:02}.json", i + 1);
        save_model(model, &dir.join(&name))?;
        stages.push(name);
    }
    let manifest = Manifest {
        horizon,
        phi,
        stages,
        axis_roles: axis_roles.to_vec(),
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(dir.join("manifest.json"), json)?;
    Ok(manifest)
}

/// Loads a manifest and every stage model it references; a missing or
/// malformed stage file is reported with its name.
pub fn load_stages(dir: &Path) -> Result<(Manifest, Vec<HdmrModel>)> {
    let path: PathBuf = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path)?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if manifest.stages.len() != manifest.horizon {
        return Err(Error::Format(format!(
            "manifest lists {} stages for horizon {}",
            manifest.stages.len(),
            manifest.horizon
        )));
    }
    let mut models = Vec::with_capacity(manifest.stages.len());
    for name in &manifest.stages {
        let model = load_model(&dir.join(name))
            .map_err(|e| Error::Format(format!("stage file {name}: {e}")))?;
        models.push(model);
    }
    Ok((manifest, models))
}
