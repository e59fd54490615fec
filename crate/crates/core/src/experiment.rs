//! Experiment drivers shared by the command-line runner and the test suites.

use ndarray::ArrayView2;

use crate::baselines::Method;
use crate::error::{Result, UnmixError};
use crate::metrics::{evaluate, evaluate_run, EvalOptions, Evaluation};
use crate::model::{SolveReport, SolverConfig, SpectraMatrix};
use crate::synthgen::{builtin_library, generate_scene, Scene, SceneSpec};

/// One point of a noise sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub snr_db: f64,
    pub method: Method,
    pub repeat: usize,
}

#[derive(Debug, Clone)]
pub struct SweepSettings {
    pub z: usize,
    pub k: usize,
    pub bands: usize,
    pub snr_std_db: f64,
    pub seed_base: u64,
    pub solver: SolverConfig,
    pub eval: EvalOptions,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            z: 8,
            k: 6,
            bands: 200,
            snr_std_db: 5.0,
            seed_base: 0,
            solver: SolverConfig::default(),
            eval: EvalOptions::default(),
        }
    }
}

impl SweepSettings {
    /// Scene for a given SNR and repeat. Every method sees the same scene.
    pub fn scene(&self, snr_db: f64, repeat: usize) -> Result<Scene> {
        let lib = builtin_library(self.bands);
        if self.k > lib.count() {
            return Err(UnmixError::InvalidConfig(format!(
                "built-in library has {} endmembers, {} requested",
                lib.count(),
                self.k
            )));
        }
        let lib = crate::model::Endmembers::new(
            lib.as_array().slice(ndarray::s![.., ..self.k]).to_owned(),
        )?;
        let spec = SceneSpec {
            z: self.z,
            snr_std_db: self.snr_std_db,
            ..SceneSpec::new(lib, snr_db, self.seed_base + repeat as u64)
        };
        generate_scene(&spec)
    }

    pub fn solver_for(&self, repeat: usize) -> SolverConfig {
        SolverConfig {
            seed: self.seed_base + repeat as u64,
            ..self.solver.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: SweepCell,
    pub evaluation: Evaluation,
    pub report: SolveReport,
}

pub fn run_cell(settings: &SweepSettings, cell: SweepCell) -> Result<CellResult> {
    let scene = settings.scene(cell.snr_db, cell.repeat)?;
    let report = cell.method.solve(
        &scene.y_noisy,
        settings.k,
        &settings.solver_for(cell.repeat),
    )?;
    let evaluation = evaluate_run(&scene, &report, &settings.eval)?;
    Ok(CellResult {
        cell,
        evaluation,
        report,
    })
}

/// Cells in a fixed order: SNR, then method, then repeat.
pub fn sweep_cells(snrs: &[f64], methods: &[Method], repeats: usize) -> Vec<SweepCell> {
    let mut cells = Vec::with_capacity(snrs.len() * methods.len() * repeats);
    for &snr_db in snrs {
        for &method in methods {
            for repeat in 0..repeats {
                cells.push(SweepCell {
                    snr_db,
                    method,
                    repeat,
                });
            }
        }
    }
    cells
}

/// Mean SAD and RMSE over repeats for one (SNR, method), per endmember and overall.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAggregate {
    pub snr_db: f64,
    pub method: Method,
    pub repeats: usize,
    pub mean_sad: Vec<f64>,
    pub mean_rmse: Vec<f64>,
}

impl SweepAggregate {
    pub fn overall_sad(&self) -> f64 {
        self.mean_sad.iter().sum::<f64>() / self.mean_sad.len() as f64
    }

    pub fn overall_rmse(&self) -> f64 {
        self.mean_rmse.iter().sum::<f64>() / self.mean_rmse.len() as f64
    }
}

/// Groups results by (SNR, method) in first-seen order and averages over repeats.
pub fn aggregate(results: &[CellResult]) -> Vec<SweepAggregate> {
    let mut out: Vec<SweepAggregate> = Vec::new();
    for r in results {
        let k = r.evaluation.per_endmember.len();
        let pos = out
            .iter()
            .position(|a| a.snr_db == r.cell.snr_db && a.method == r.cell.method)
            .unwrap_or_else(|| {
                out.push(SweepAggregate {
                    snr_db: r.cell.snr_db,
                    method: r.cell.method,
                    repeats: 0,
                    mean_sad: vec![0.0; k],
                    mean_rmse: vec![0.0; k],
                });
                out.len() - 1
            });
        let agg = &mut out[pos];
        agg.repeats += 1;
        for s in &r.evaluation.per_endmember {
            agg.mean_sad[s.true_index] += s.sad;
            agg.mean_rmse[s.true_index] += s.rmse;
        }
    }
    for agg in &mut out {
        let n = agg.repeats as f64;
        agg.mean_sad.iter_mut().for_each(|v| *v /= n);
        agg.mean_rmse.iter_mut().for_each(|v| *v /= n);
    }
    out
}

/// Full-band and masked-band scores of one method.
#[derive(Debug, Clone)]
pub struct BandmaskResult {
    pub method: Method,
    pub full: Evaluation,
    pub masked: Evaluation,
}

/// Runs each method on all bands and on the bands left after removing
/// `mask`, scoring both on the kept bands.
#[allow(clippy::too_many_arguments)]
pub fn bandmask_compare(
    y: &SpectraMatrix,
    x_true: ArrayView2<f64>,
    w_true: ArrayView2<f64>,
    mask: &[usize],
    methods: &[Method],
    k: usize,
    cfg: &SolverConfig,
    eval: &EvalOptions,
) -> Result<Vec<BandmaskResult>> {
    let d = y.bands();
    if let Some(&bad) = mask.iter().find(|&&b| b >= d) {
        return Err(UnmixError::InvalidConfig(format!(
            "mask band {bad} out of range for {d} bands"
        )));
    }
    if x_true.nrows() != d {
        return Err(UnmixError::ShapeMismatch(format!(
            "ground truth has {} bands, data has {d}",
            x_true.nrows()
        )));
    }
    let keep: Vec<usize> = (0..d).filter(|b| !mask.contains(b)).collect();
    let y_masked = y.select_bands(&keep)?;
    let mut opts = eval.clone();
    opts.exclude_bands = mask.to_vec();
    let mut out = Vec::with_capacity(methods.len());
    for &method in methods {
        let full = method.solve(y, k, cfg)?;
        let masked = method.solve(&y_masked, k, cfg)?;
        out.push(BandmaskResult {
            method,
            full: evaluate(
                x_true,
                w_true,
                full.endmembers.view(),
                full.abundances.view(),
                &opts,
            )?,
            masked: evaluate(
                x_true,
                w_true,
                masked.endmembers.view(),
                masked.abundances.view(),
                &opts,
            )?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_order() {
        let cells = sweep_cells(&[50.0, 10.0], &[Method::Nmf, Method::Cenmf], 2);
        assert_eq!(cells.len(), 8);
        assert_eq!(
            cells[0],
            SweepCell {
                snr_db: 50.0,
                method: Method::Nmf,
                repeat: 0
            }
        );
        assert_eq!(
            cells[3],
            SweepCell {
                snr_db: 50.0,
                method: Method::Cenmf,
                repeat: 1
            }
        );
        assert_eq!(cells[7].snr_db, 10.0);
    }

    #[test]
    fn small_sweep_aggregates() {
        let settings = SweepSettings {
            z: 3,
            k: 3,
            bands: 30,
            solver: SolverConfig {
                max_outer: 3,
                max_inner: 5,
                ..Default::default()
            },
            ..Default::default()
        };
        let cells = sweep_cells(&[30.0], &[Method::Nmf], 2);
        let results: Vec<_> = cells
            .iter()
            .map(|&c| run_cell(&settings, c).unwrap())
            .collect();
        let agg = aggregate(&results);
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].repeats, 2);
        for k in 0..3 {
            let by_hand: f64 = results
                .iter()
                .map(|r| {
                    r.evaluation
                        .per_endmember
                        .iter()
                        .find(|s| s.true_index == k)
                        .unwrap()
                        .sad
                })
                .sum::<f64>()
                / 2.0;
            assert!((agg[0].mean_sad[k] - by_hand).abs() < 1e-15);
        }
    }
}
