//! Energy sweeps and the figure-data panels built on them.

use anyhow::Result;
use nalgebra::DMatrix;
use scatfluct::fluct::{first_sign_change, report, FluctuationReport};
use scatfluct::kraus::{eigenoperators, nudge_kinetic_energy, transition_probabilities, TransitionProbabilities};
use scatfluct::model::{gap_structure, thermal_state, GapStructure, ThermalState};
use scatfluct::parallel::par_map;
use scatfluct::solver::{Direction, Scatterer};
use serde::Serialize;

use crate::config::{grid, GridKind, RunConfig};
use crate::output::{fmt_f64, write_json, DataFile};

/// Per-direction tables whose entries differ by more than this are flagged on symmetric profiles.
const DIRECTION_TOLERANCE: f64 = 1e-8;

/// One row of a sweep: a kinetic energy and an incoming-direction label.
pub struct Row {
    pub kinetic_energy: f64,
    pub label: &'static str,
    pub outcome: Result<(FluctuationReport, DMatrix<f64>), String>,
}

/// The `+`, `-` and averaged rows at one kinetic energy.
pub fn evaluate_point(sc: &Scatterer, ep: f64, th: &ThermalState, gaps: &GapStructure) -> Vec<Row> {
    let tables = (|| -> scatfluct::Result<_> {
        let plus = transition_probabilities(&eigenoperators(sc, ep, Direction::Plus)?);
        let minus = transition_probabilities(&eigenoperators(sc, ep, Direction::Minus)?);
        let avg = TransitionProbabilities::mix(&plus, &minus, 0.5)?;
        Ok([plus, minus, avg])
    })();
    let labels = ["+", "-", "avg"];
    let tables = match tables {
        Ok(t) => t,
        Err(e) => {
            return labels
                .iter()
                .map(|&label| Row {
                    kinetic_energy: ep,
                    label,
                    outcome: Err(e.to_string()),
                })
                .collect()
        }
    };
    let asymmetry = (&tables[0].table - &tables[1].table).amax();
    let flagged = sc.spec().profile().is_symmetric() && asymmetry > DIRECTION_TOLERANCE;
    labels
        .iter()
        .zip(tables)
        .map(|(&label, tp)| {
            let outcome = if flagged {
                Err(format!("direction tables differ by {asymmetry:e} on a symmetric profile"))
            } else {
                report(&tp, th, gaps).map(|r| (r, tp.table)).map_err(|e| e.to_string())
            };
            Row {
                kinetic_energy: ep,
                label,
                outcome,
            }
        })
        .collect()
}

/// Evaluates every kinetic energy on the worker pool; rows come back in grid order.
pub fn evaluate_grid(sc: &Scatterer, energies: &[f64], th: &ThermalState, gaps: &GapStructure) -> Vec<Row> {
    let levels = sc.spec().levels();
    let eps = sc.settings().threshold_eps;
    let nudged: Vec<f64> = energies.iter().map(|&e| nudge_kinetic_energy(levels, e, eps)).collect();
    par_map(&nudged, |&ep| evaluate_point(sc, ep, th, gaps)).into_iter().flatten().collect()
}

fn probability_columns(n: usize) -> Vec<String> {
    let mut cols = Vec::with_capacity(n * n);
    for to in 0..n {
        for from in 0..n {
            cols.push(format!("P_{to}_{from}"));
        }
    }
    cols
}

fn probability_cells(table: &DMatrix<f64>) -> Vec<String> {
    let n = table.nrows();
    let mut cells = Vec::with_capacity(n * n);
    for to in 0..n {
        for from in 0..n {
            cells.push(fmt_f64(table[(to, from)]));
        }
    }
    cells
}

#[derive(Debug, Serialize)]
pub struct SweepSummary {
    pub command: &'static str,
    pub config_sha256: String,
    pub data_file: String,
    pub rows: usize,
    pub failed_rows: usize,
    pub min_bound_slack: Option<f64>,
    pub min_sigma: Option<f64>,
    /// First kinetic energy where the averaged `<W>` turns non-negative.
    pub extraction_edge: Option<f64>,
}

pub fn run_sweep(cfg: &RunConfig) -> Result<SweepSummary> {
    let spec = cfg.spec()?;
    let th = thermal_state(&spec, cfg.thermo.beta)?;
    let gaps = gap_structure(&spec, cfg.thermo.beta)?;
    let n = spec.dim();
    let sc = Scatterer::new(spec, cfg.solver_settings())?;
    let rows = evaluate_grid(&sc, &cfg.sweep_grid(), &th, &gaps);

    let mut columns: Vec<String> = ["E_p", "direction", "avg_W", "deltaF", "eta", "gamma", "sigma", "bound_slack"]
        .into_iter()
        .map(String::from)
        .collect();
    columns.extend(probability_columns(n));
    columns.push("error".into());
    let mut file = DataFile::new("sweep", cfg, columns);
    file.note(format!("levels = {}", join(sc.spec().levels())));

    let mut failed = 0;
    let mut min_slack: Option<f64> = None;
    let mut min_sigma: Option<f64> = None;
    let mut avg_grid = Vec::new();
    let mut avg_w = Vec::new();
    for row in &rows {
        let mut cells = vec![fmt_f64(row.kinetic_energy), row.label.to_string()];
        match &row.outcome {
            Ok((r, table)) => {
                cells.extend([r.avg_w, r.delta_f, r.eta, r.gamma, r.sigma, r.bound_slack].map(fmt_f64));
                cells.extend(probability_cells(table));
                cells.push(String::new());
                min_slack = Some(min_slack.map_or(r.bound_slack, |m| m.min(r.bound_slack)));
                min_sigma = Some(min_sigma.map_or(r.sigma, |m| m.min(r.sigma)));
                if row.label == "avg" {
                    avg_grid.push(row.kinetic_energy);
                    avg_w.push(r.avg_w);
                }
            }
            Err(e) => {
                failed += 1;
                cells.extend(std::iter::repeat_n(String::new(), 6 + n * n));
                cells.push(e.clone());
            }
        }
        file.push(cells);
    }
    let path = cfg.output_path("sweep.csv");
    file.write(&path)?;
    let summary = SweepSummary {
        command: "sweep",
        config_sha256: cfg.hash(),
        data_file: path.display().to_string(),
        rows: file.len(),
        failed_rows: failed,
        min_bound_slack: min_slack,
        min_sigma,
        extraction_edge: first_sign_change(&avg_grid, &avg_w),
    };
    write_json(&cfg.output_path("sweep.json"), &summary)?;
    Ok(summary)
}

/// Centered moving average over points within `half_width` of each grid point.
pub fn window_average(grid: &[f64], values: &[f64], half_width: f64) -> Vec<f64> {
    grid.iter()
        .map(|&x| {
            let (sum, count) = grid
                .iter()
                .zip(values)
                .filter(|(g, v)| (*g - x).abs() <= half_width && v.is_finite())
                .fold((0.0, 0usize), |(s, c), (_, v)| (s + v, c + 1));
            if count == 0 {
                f64::NAN
            } else {
                sum / count as f64
            }
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct PanelSummary {
    pub levels: usize,
    pub panel: &'static str,
    pub data_file: String,
    pub rows: usize,
    pub failed_rows: usize,
    pub gap_markers: Vec<f64>,
    pub max_avg_w: Option<f64>,
    pub min_avg_w_window: Option<f64>,
    pub max_abs_eta_window: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct Figure2Summary {
    pub command: &'static str,
    pub config_sha256: String,
    pub panels: Vec<PanelSummary>,
}

/// Low- and high-energy panels for ladders of 2, 3 and 4 levels, averaged
/// over incoming directions. The low panel spans `(0, N delta]`, where
/// energy can be extracted; the high panel spans `[5 N delta, sweep.max]`,
/// clear of the extraction region. Window averages use a half width of
/// `5 delta`.
pub fn run_figure2(cfg: &RunConfig) -> Result<Figure2Summary> {
    let mut panels = Vec::new();
    for n in 2..=4usize {
        let mut c = cfg.clone();
        c.system.levels.clear();
        c.system.n = n;
        c.system.coupling = crate::config::CouplingPattern::AllOnesOffdiag;
        let delta = c.system.delta;
        let spec = c.spec()?;
        let th = thermal_state(&spec, c.thermo.beta)?;
        let gaps = gap_structure(&spec, c.thermo.beta)?;
        let markers = gaps.gaps();
        let sc = Scatterer::new(spec, c.solver_settings())?;
        let top = n as f64 * delta;
        let count = c.sweep.count;
        let panel_grids = [
            ("low", grid(top / count as f64, top, count, GridKind::Linear)),
            ("high", grid(5.0 * top, cfg.sweep.max.max(10.0 * top), count, GridKind::Linear)),
        ];
        for (panel, energies) in panel_grids {
            let rows: Vec<Row> = evaluate_grid(&sc, &energies, &th, &gaps)
                .into_iter()
                .filter(|r| r.label == "avg")
                .collect();
            let xs: Vec<f64> = rows.iter().map(|r| r.kinetic_energy).collect();
            let pick = |f: fn(&FluctuationReport) -> f64| -> Vec<f64> {
                rows.iter()
                    .map(|r| r.outcome.as_ref().map_or(f64::NAN, |(rep, _)| f(rep)))
                    .collect()
            };
            let w = pick(|r| r.avg_w);
            let eta = pick(|r| r.eta);
            let w_win = window_average(&xs, &w, 5.0 * delta);
            let eta_win = window_average(&xs, &eta, 5.0 * delta);

            let mut columns: Vec<String> = ["E_p", "avg_W", "deltaF", "eta", "gamma", "bound_slack"]
                .into_iter()
                .map(String::from)
                .collect();
            columns.extend(probability_columns(n));
            columns.extend(["avg_W_window".into(), "eta_window".into(), "error".into()]);
            let mut file = DataFile::new(&format!("figure2 N={n} {panel}"), &c, columns);
            file.note(format!("gap_markers = {}", join(&markers)));
            file.note(format!("levels = {}", join(sc.spec().levels())));

            let mut failed = 0;
            for (i, row) in rows.iter().enumerate() {
                let mut cells = vec![fmt_f64(row.kinetic_energy)];
                match &row.outcome {
                    Ok((r, table)) => {
                        cells.extend([r.avg_w, r.delta_f, r.eta, r.gamma, r.bound_slack].map(fmt_f64));
                        cells.extend(probability_cells(table));
                        cells.extend([fmt_f64(w_win[i]), fmt_f64(eta_win[i]), String::new()]);
                    }
                    Err(e) => {
                        failed += 1;
                        cells.extend(std::iter::repeat_n(String::new(), 7 + n * n));
                        cells.push(e.clone());
                    }
                }
                file.push(cells);
            }
            let path = c.output_path(&format!("figure2_N{n}_{panel}.csv"));
            file.write(&path)?;
            let finite = |v: &[f64]| v.iter().copied().filter(|x| x.is_finite()).collect::<Vec<_>>();
            panels.push(PanelSummary {
                levels: n,
                panel,
                data_file: path.display().to_string(),
                rows: file.len(),
                failed_rows: failed,
                gap_markers: markers.clone(),
                max_avg_w: finite(&w).into_iter().reduce(f64::max),
                min_avg_w_window: finite(&w_win).into_iter().reduce(f64::min),
                max_abs_eta_window: finite(&eta_win).into_iter().map(f64::abs).reduce(f64::max),
            });
        }
    }
    let summary = Figure2Summary {
        command: "figure2",
        config_sha256: cfg.hash(),
        panels,
    };
    write_json(&cfg.output_path("figure2.json"), &summary)?;
    Ok(summary)
}

pub fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}
