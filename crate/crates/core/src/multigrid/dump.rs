use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::sparse::mtx;
use crate::Result;

use super::{Hierarchy, HierarchyKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelManifest {
    pub level: usize,
    pub n: usize,
    pub nnz: usize,
    pub operator: String,
    pub prolongation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyManifest {
    pub kind: HierarchyKind,
    pub orthonormal: bool,
    pub levels: Vec<LevelManifest>,
}

/// Writes `A_ℓ` and `P_ℓ` of every level as Matrix Market files plus a
/// `hierarchy.json` manifest into `dir`.
pub fn write_hierarchy(h: &Hierarchy, dir: impl AsRef<Path>) -> Result<HierarchyManifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut levels = Vec::with_capacity(h.num_levels());
    for (l, level) in h.levels().iter().enumerate() {
        let operator = format!("A_{l}.mtx");
        mtx::write_file(&level.a, dir.join(&operator))?;
        let prolongation = match &level.p {
            Some(p) => {
                let name = format!("P_{l}.mtx");
                mtx::write_file(p, dir.join(&name))?;
                Some(name)
            }
            None => None,
        };
        levels.push(LevelManifest {
            level: l,
            n: level.a.nrows(),
            nnz: level.a.nnz(),
            operator,
            prolongation,
        });
    }
    let manifest = HierarchyManifest {
        kind: h.kind(),
        orthonormal: h.is_orthonormal(),
        levels,
    };
    fs::write(dir.join("hierarchy.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::gen_laplace2d;
    use crate::multigrid::build_geometric_hierarchy;
    use crate::sparse::CostLedger;

    #[test]
    fn dump_round_trips() {
        let a = gen_laplace2d(7).unwrap();
        let h = build_geometric_hierarchy(&a, 7, 2, &mut CostLedger::new()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_hierarchy(&h, dir.path()).unwrap();
        assert_eq!(manifest.levels.len(), 2);
        let back = mtx::read_file(dir.path().join("A_1.mtx")).unwrap();
        assert!(back.max_abs_diff(h.operator(1)).unwrap() < 1e-15);
        let json: HierarchyManifest =
            serde_json::from_str(&fs::read_to_string(dir.path().join("hierarchy.json")).unwrap()).unwrap();
        assert_eq!(json, manifest);
    }
}
