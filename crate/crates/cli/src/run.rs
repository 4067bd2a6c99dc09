use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use tempfile::NamedTempFile;

use uav_secrecy::evaluation::{
    evaluate_point, power_trace, scenario_hash, sweep, write_power_csv, write_sweep_csv, write_trajectory_csv,
    EvalOptions, SweepPoint, SweepResult,
};
use uav_secrecy::orchestrator::SolveOptions;

use crate::config::{preset_text, Layers, RunConfig, DESK_SLOT_S};
use crate::error::{ConfigParseError, RunError, SolverError, ValidationError};

pub const MANIFEST_FILE: &str = "manifest.conf";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const POWER_FILE: &str = "power.csv";

/// Command-line inputs before resolution.
#[derive(Debug, Clone, Default)]
pub struct Invocation {
    pub config_path: Option<PathBuf>,
    pub preset: Option<String>,
    /// `key=value` overrides in command-line order.
    pub overrides: Vec<String>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub schemes: Option<String>,
    pub desk_scale: bool,
}

/// Merges preset, config file, `--set` overrides and dedicated flags, in
/// increasing precedence.
pub fn resolve(inv: &Invocation) -> Result<RunConfig, ConfigParseError> {
    let mut layers = Layers::new();
    if let Some(name) = &inv.preset {
        layers.merge_text(&preset_text(name)?, &format!("preset {name}"))?;
    }
    if let Some(path) = &inv.config_path {
        let text = fs::read_to_string(path).map_err(|source| ConfigParseError::Read {
            path: path.clone(),
            source,
        })?;
        layers.merge_text(&text, &path.display().to_string())?;
    }
    for (i, o) in inv.overrides.iter().enumerate() {
        layers.merge_override(o, i + 1)?;
    }
    if let Some(dir) = &inv.out_dir {
        layers.set("out_dir", dir.display().to_string(), "--out");
    }
    if let Some(seed) = inv.seed {
        layers.set("seed", seed.to_string(), "--seed");
    }
    if let Some(s) = &inv.schemes {
        layers.set("schemes", s.clone(), "--schemes");
    }
    if inv.desk_scale {
        layers.set("slot_len_s", DESK_SLOT_S.to_string(), "--desk-scale");
    }
    RunConfig::from_layers(&layers)
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    let err = |source| RunError::Write { path: path.to_path_buf(), source };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(err)?;
    let mut tmp = NamedTempFile::new_in(dir).map_err(err)?;
    tmp.write_all(bytes).map_err(err)?;
    tmp.as_file().sync_all().map_err(err)?;
    tmp.persist(path).map_err(|e| err(e.error))?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    /// One row per scheme for the base scenario.
    pub base: Vec<SweepPoint>,
    pub sweep: Option<SweepResult>,
    pub files: Vec<PathBuf>,
}

fn validate(cfg: &RunConfig) -> Result<(), ValidationError> {
    let (base, _) = cfg.scenario();
    let mut violations = Vec::new();
    if let Err(e) = base.validate() {
        violations.push(("base scenario".to_string(), e));
    }
    if let Some((axis, values)) = &cfg.sweep {
        for &v in values {
            if let Err(e) = axis.apply(&base, v).0.validate() {
                violations.push((format!("{} = {v}", axis.name()), e));
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(ValidationError { violations })
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory");
    buf
}

/// Solves every configured scheme on the base scenario, runs the sweep if
/// one is configured and writes all outputs under the output directory.
pub fn execute(cfg: &RunConfig) -> Result<RunSummary, RunError> {
    let (base, rounded) = cfg.scenario();
    if rounded {
        warn!(
            "flight period {} s is not a multiple of the {} s slot; using {} slots",
            cfg.flight_period_s, cfg.slot_len_s, base.num_slots
        );
    }
    validate(cfg)?;
    let opts = EvalOptions {
        solve: SolveOptions {
            epsilon: cfg.epsilon,
            max_iter: cfg.max_iter,
            ..SolveOptions::default()
        },
        mc_samples: cfg.mc_samples,
        seed: cfg.seed,
    };
    let out = &cfg.out_dir;
    let mut files = Vec::new();
    let mut emit = |path: PathBuf, bytes: Vec<u8>| -> Result<(), RunError> {
        write_atomic(&path, &bytes)?;
        files.push(path);
        Ok(())
    };

    let mut base_rows = Vec::new();
    for &scheme in &cfg.schemes {
        info!("solving {scheme} on the base scenario");
        let (row, report) = evaluate_point(&base, scheme, cfg.flight_period_s, &opts)
            .map_err(|e| SolverError(wrap_scheme(e, scheme)))?;
        let dir = out.join(scheme.name());
        emit(
            dir.join(TRAJECTORY_FILE),
            csv_bytes(|b| write_trajectory_csv(&base, &report, b)),
        )?;
        emit(
            dir.join(POWER_FILE),
            csv_bytes(|b| write_power_csv(&power_trace(&base, &report), b)),
        )?;
        base_rows.push(row);
    }

    let sweep_result = match &cfg.sweep {
        Some((axis, values)) => {
            info!("sweeping {} over {} values", axis.name(), values.len());
            let r = sweep(&base, *axis, values, &cfg.schemes, &opts).map_err(SolverError)?;
            for v in &r.metadata.rounded {
                warn!("{} = {v}: slot count rounded", axis.name());
            }
            emit(out.join(SWEEP_FILE), csv_bytes(|b| write_sweep_csv(&r, b)))?;
            Some(r)
        }
        None => None,
    };

    let mut manifest = cfg.to_manifest();
    manifest.push_str(&format!(
        "# scenario_sha256: {}\n# num_slots: {}\n",
        scenario_hash(&base),
        base.num_slots
    ));
    emit(out.join(MANIFEST_FILE), manifest.into_bytes())?;

    Ok(RunSummary { base: base_rows, sweep: sweep_result, files })
}

fn wrap_scheme(e: uav_secrecy::Error, scheme: uav_secrecy::Scheme) -> uav_secrecy::Error {
    match e {
        e @ uav_secrecy::Error::AtIteration { .. } => e,
        other => uav_secrecy::Error::AtIteration {
            scheme,
            iteration: 0,
            source: Box::new(other),
        },
    }
}
