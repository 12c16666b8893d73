//! Phantom cohorts and configs shared by the cli integration tests.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use radiomx::config::ExperimentConfig;
use radiomx_core::imgio::{to_2d_roi, write_mask, CohortManifest, Encoding, MaskKind, RoiMask};
use radiomx_core::phantom::{generate, PhantomSpec, MANIFEST_FILE};

/// Small, quick phantom: lesions of 5 to 7 voxels in-plane.
pub fn small_spec(n: usize, signal: f64, seed: u64) -> PhantomSpec {
    PhantomSpec {
        n_patients: n,
        seed,
        lesion_radius: (5.0, 7.0),
        signal: [signal; 3],
        ..PhantomSpec::default()
    }
}

pub fn make_cohort(dir: &Path, spec: &PhantomSpec) -> PathBuf {
    generate(spec, dir).expect("phantom generation");
    dir.to_path_buf()
}

/// Config for a cohort directory with a short bootstrap.
pub fn config_for(cohort: &Path, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        cohort: cohort.to_path_buf(),
        seed,
        bootstrap_resamples: 200,
        icc_subjects: 20,
        ..ExperimentConfig::default()
    }
}

/// Cut every mask of a cohort down to its largest slice, kept as a 3D mask.
pub fn flatten_masks(cohort: &Path) {
    let m = CohortManifest::load(cohort.join(MANIFEST_FILE)).unwrap();
    for row in &m.rows {
        let path = m.resolve(&row.mask);
        let mask = radiomx_core::imgio::read_mask(&path).unwrap();
        let flat = to_2d_roi(&mask).unwrap();
        let flat = RoiMask::new(*flat.geometry(), flat.voxels().to_vec(), MaskKind::Mask3D).unwrap();
        write_mask(&path, &flat, Encoding::Gzip).unwrap();
    }
}

/// `a` and `b` hold byte-identical copies of every listed file.
pub fn same_bytes(a: &Path, b: &Path, files: &[PathBuf]) -> Vec<String> {
    files
        .iter()
        .filter(|f| std::fs::read(a.join(f)).ok() != std::fs::read(b.join(f)).ok() || !a.join(f).exists())
        .map(|f| f.display().to_string())
        .collect()
}
