//! Experiment dispatch: resolves a run manifest into a configuration,
//! executes the experiment and writes the output set atomically.

use crate::config::{parse_config, serialize_config};
use crate::engine::{run_experiment, Experiment, SimConfig};
use crate::error::{Result, SimError};
use crate::materials::MaterialRegistry;
use crate::report;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct RunManifest {
    pub config_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub experiment: Option<Experiment>,
    pub seed_override: Option<u64>,
    /// 0 lets the thread pool size itself.
    pub jobs: usize,
    pub emit_plots: bool,
}

impl RunManifest {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        RunManifest {
            config_path: None,
            out_dir: out_dir.into(),
            experiment: None,
            seed_override: None,
            jobs: 0,
            emit_plots: true,
        }
    }
}

pub fn load_config(manifest: &RunManifest) -> Result<SimConfig> {
    let mut cfg = match &manifest.config_path {
        Some(p) => parse_config(p)?,
        None => SimConfig::default(),
    };
    if let Some(e) = manifest.experiment {
        cfg.experiment = e;
    }
    if let Some(s) = manifest.seed_override {
        cfg.master_seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn build_registry(cfg: &SimConfig) -> Result<MaterialRegistry> {
    let mut registry = MaterialRegistry::with_defaults();
    if let Some(csv) = &cfg.material_csv {
        registry.load_csv(Path::new(csv))?;
    }
    Ok(registry)
}

/// [OP] run — execute the manifest and write `results.csv`,
/// `provenance.txt` and (optionally) the figure SVGs. Outputs are staged in
/// memory and written only after the experiment succeeds, so failures leave
/// no partial files.
pub fn run(manifest: &RunManifest) -> Result<()> {
    let cfg = load_config(manifest)?;
    let registry = build_registry(&cfg)?;

    let result = if manifest.jobs > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(manifest.jobs)
            .build()
            .map_err(|e| SimError::Parse(e.to_string()))?;
        pool.install(|| run_experiment(&cfg, &registry))?
    } else {
        run_experiment(&cfg, &registry)?
    };

    let csv = report::results_csv(cfg.experiment, &result);
    let config_toml = serialize_config(&cfg)?;
    let prov = report::provenance(&config_toml, cfg.master_seed, cfg.experiment, manifest.jobs);
    let plot: Option<(&str, String)> = if manifest.emit_plots {
        match cfg.experiment {
            Experiment::Fig4 => Some(("fig4.svg", report::fig4_svg(&result))),
            Experiment::Fig5 => Some(("fig5.svg", report::fig5_svg(&result))),
            Experiment::Single => None,
        }
    } else {
        None
    };

    std::fs::create_dir_all(&manifest.out_dir)?;
    std::fs::write(manifest.out_dir.join("results.csv"), csv)?;
    std::fs::write(manifest.out_dir.join("provenance.txt"), prov)?;
    if let Some((name, svg)) = plot {
        std::fs::write(manifest.out_dir.join(name), svg)?;
    }
    Ok(())
}
