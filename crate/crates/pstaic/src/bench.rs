//! Benchmark harness: manifest-driven dataset simulation, restoration jobs
//! with a regularization sweep, result rows, and report assembly.

use crate::error::{Error, Result};
use crate::grid::Volume2DT;
use crate::io::{read_json, read_volume_tiff, write_json, write_volume_tiff, DatasetSidecar};
use crate::metrics::{snr_db, ssim};
use crate::restore::{restore, Algorithm, RestoreConfig, RestoreReport};
use crate::sim::{degrade, make_phantom, make_psf, DegradeSpec, PhantomSpec};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Mutex};

/// A batch description: phantoms crossed with degradations, plus the sweep
/// grid and the execution width.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct JobManifest {
    pub phantoms: Vec<PhantomSpec>,
    pub degrades: Vec<DegradeSpec>,
    #[serde(default)]
    pub noise_seed: u64,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

/// Eight log-spaced points over [1e-3, 1], relative to the data-term scale.
pub fn default_lambda_grid() -> Vec<f64> {
    let n = 8;
    (0..n)
        .map(|i| 10f64.powf(-3.0 + 3.0 * i as f64 / (n - 1) as f64))
        .collect()
}

fn default_parallelism() -> usize {
    1
}

impl JobManifest {
    pub fn validate(&self) -> Result<()> {
        if self.phantoms.is_empty() || self.degrades.is_empty() {
            return Err(Error::Manifest("manifest needs phantoms and degradations".into()));
        }
        for p in &self.phantoms {
            p.validate()?;
            if p.id.is_empty()
                || !p.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return Err(Error::Manifest(format!(
                    "phantom id {:?} must be non-empty [A-Za-z0-9_-]",
                    p.id
                )));
            }
        }
        let mut ids: Vec<&str> = self.phantoms.iter().map(|p| p.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.phantoms.len() {
            return Err(Error::Manifest("phantom ids must be unique".into()));
        }
        for d in &self.degrades {
            d.validate()?;
        }
        if self.lambda_grid.is_empty() || self.lambda_grid.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::Manifest("lambda grid values must be positive".into()));
        }
        Ok(())
    }
}

/// Canonical dataset layout under an output root.
pub fn dataset_paths(root: &Path, phantom_id: &str, na: f64) -> (PathBuf, PathBuf, PathBuf) {
    let truth = root.join(phantom_id).join("truth.tiff");
    let cell = root.join(phantom_id).join(format!("na_{na:.2}"));
    (truth, cell.join("degraded.tiff"), cell.join("sidecar.json"))
}

/// Simulates every (phantom, degradation) cell: ground truth once per
/// phantom, a degraded volume and provenance sidecar per cell. Returns the
/// sidecar paths.
pub fn simulate_manifest(manifest: &JobManifest, out_dir: &Path) -> Result<Vec<PathBuf>> {
    manifest.validate()?;
    let mut sidecars = Vec::new();
    let mut truths: Vec<Volume2DT> = Vec::with_capacity(manifest.phantoms.len());
    for p in &manifest.phantoms {
        let unit = make_phantom(p)?;
        let truth = unit.map(|v| v * p.peak_intensity);
        let (truth_path, _, _) = dataset_paths(out_dir, &p.id, manifest.degrades[0].na);
        write_volume_tiff(&truth_path, &truth)?;
        truths.push(truth);
    }
    let mut tasks: Vec<Box<dyn FnOnce() -> Result<PathBuf> + Send>> = Vec::new();
    for (pi, p) in manifest.phantoms.iter().enumerate() {
        for (di, d) in manifest.degrades.iter().enumerate() {
            let seed = manifest
                .noise_seed
                .wrapping_add((pi * manifest.degrades.len() + di) as u64);
            let (_, degraded_path, sidecar_path) = dataset_paths(out_dir, &p.id, d.na);
            let truth = truths[pi].clone();
            let sidecar = DatasetSidecar {
                phantom: p.clone(),
                degrade: d.clone(),
                noise_seed: seed,
            };
            tasks.push(Box::new(move || {
                let m = degrade(&truth, &sidecar.degrade, seed)?;
                write_volume_tiff(&degraded_path, &m)?;
                write_json(&sidecar_path, &sidecar)?;
                Ok(sidecar_path)
            }));
        }
    }
    for result in run_parallel(tasks, manifest.parallelism) {
        sidecars.push(result?);
    }
    sidecars.sort();
    Ok(sidecars)
}

/// One line of the comparative table.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ResultRow {
    pub phantom_id: String,
    pub na: f64,
    pub algorithm: String,
    pub best_lambda: f64,
    pub snr_db: f64,
    pub ssim: f64,
    pub alpha_s_final: f64,
    pub runtime_seconds: f64,
}

pub const RESULT_HEADER: &str =
    "phantom_id,na,algorithm,best_lambda,snr_db,ssim,alpha_s_final,runtime_seconds";

impl ResultRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.phantom_id,
            self.na,
            self.algorithm,
            self.best_lambda,
            self.snr_db,
            self.ssim,
            self.alpha_s_final,
            self.runtime_seconds
        )
    }

    pub fn from_csv_line(line: &str) -> Result<Self> {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 8 {
            return Err(Error::Manifest(format!("bad result row: {line:?}")));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| Error::Manifest(format!("bad number {s:?}: {e}")))
        };
        Ok(ResultRow {
            phantom_id: parts[0].to_string(),
            na: num(parts[1])?,
            algorithm: parts[2].to_string(),
            best_lambda: num(parts[3])?,
            snr_db: num(parts[4])?,
            ssim: num(parts[5])?,
            alpha_s_final: num(parts[6])?,
            runtime_seconds: num(parts[7])?,
        })
    }
}

/// Outcome of a sweep: the winning report plus its metrics.
#[derive(Debug)]
pub struct SweepOutcome {
    pub best_lambda: f64,
    pub report: RestoreReport,
    pub metrics: crate::metrics::MetricPair,
    /// (lambda, snr) for every grid point.
    pub grid_points: Vec<(f64, f64)>,
    /// Scale the measurement was divided by before solving.
    pub scale: f64,
    /// Restored image rescaled to measurement units.
    pub restored: Volume2DT,
}

/// Restores at each grid value and keeps the best-SNR result.
///
/// The measurement is normalized by its peak before solving so the grid is
/// interpreted relative to the data-term scale; outputs are rescaled back.
pub fn sweep_restore(
    m: &Volume2DT,
    truth: &Volume2DT,
    h: &crate::linops::Kernel,
    base: &RestoreConfig,
    lambdas: &[f64],
) -> Result<SweepOutcome> {
    if lambdas.is_empty() {
        return Err(Error::Param("empty lambda grid".into()));
    }
    let scale = m.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(scale > 0.0) {
        return Err(Error::Param("measurement peak must be positive".into()));
    }
    let m_n = m.map(|v| v / scale);
    let mut best: Option<(f64, RestoreReport, f64)> = None;
    let mut grid_points = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let mut cfg = base.clone();
        cfg.lambda = lambda;
        let report = restore(&m_n, h.clone(), &cfg)?;
        let restored = report.f.g.map(|v| v * scale);
        let snr = snr_db(truth, &restored)?;
        grid_points.push((lambda, snr));
        if best.as_ref().map_or(true, |(_, _, s)| snr > *s) {
            best = Some((lambda, report, snr));
        }
    }
    let (best_lambda, report, best_snr) = best.expect("non-empty grid");
    let restored = report.f.g.map(|v| v * scale);
    let quality = crate::metrics::MetricPair {
        snr_db: best_snr,
        ssim: ssim(truth, &restored)?,
    };
    Ok(SweepOutcome {
        best_lambda,
        report,
        metrics: quality,
        grid_points,
        scale,
        restored,
    })
}

/// Runs one dataset cell end to end from files: loads the degraded volume
/// and sidecar, sweeps, and writes the restored volume, trajectories, and
/// the result row into `out_dir`.
pub fn run_restore_job(
    degraded_path: &Path,
    truth_path: Option<&Path>,
    out_dir: &Path,
    base: &RestoreConfig,
    lambdas: &[f64],
) -> Result<ResultRow> {
    let m = read_volume_tiff(degraded_path)?;
    let sidecar_path = degraded_path
        .parent()
        .map(|p| p.join("sidecar.json"))
        .filter(|p| p.exists());
    let sidecar: Option<DatasetSidecar> = match &sidecar_path {
        Some(p) => Some(read_json(p)?),
        None => None,
    };
    let degrade_spec = sidecar
        .as_ref()
        .map(|s| s.degrade.clone())
        .ok_or_else(|| Error::Manifest(format!(
            "no sidecar.json next to {}; cannot recover the PSF",
            degraded_path.display()
        )))?;
    let h = make_psf(&degrade_spec)?;

    let outcome = match truth_path {
        Some(tp) => {
            let truth = read_volume_tiff(tp)?;
            sweep_restore(&m, &truth, &h, base, lambdas)?
        }
        None => {
            if lambdas.len() != 1 {
                return Err(Error::Param(
                    "a sweep needs --truth to score candidates; give a single lambda instead".into(),
                ));
            }
            // no reference: run the single configuration and report NaN metrics
            let scale = m.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !(scale > 0.0) {
                return Err(Error::Param("measurement peak must be positive".into()));
            }
            let m_n = m.map(|v| v / scale);
            let mut cfg = base.clone();
            cfg.lambda = lambdas[0];
            let report = restore(&m_n, h.clone(), &cfg)?;
            let restored = report.f.g.map(|v| v * scale);
            SweepOutcome {
                best_lambda: lambdas[0],
                metrics: crate::metrics::MetricPair { snr_db: f64::NAN, ssim: f64::NAN },
                grid_points: vec![(lambdas[0], f64::NAN)],
                scale,
                restored,
                report,
            }
        }
    };

    std::fs::create_dir_all(out_dir)?;
    write_volume_tiff(&out_dir.join("restored.tiff"), &outcome.restored)?;
    write_volume_tiff(
        &out_dir.join("component_v.tiff"),
        &outcome.report.f.v.map(|v| v * outcome.scale),
    )?;
    let mut traj = String::from("step,alpha_s,c1,c2,tau,cost,inner_iters,final_residual\n");
    for (i, s) in outcome.report.steps.iter().enumerate() {
        let last = s.inner_residuals.last().copied().unwrap_or(0.0);
        traj.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            i,
            s.alpha_s,
            s.c1,
            s.c2,
            s.tau,
            s.cost,
            s.inner_residuals.len(),
            last
        ));
    }
    std::fs::write(out_dir.join("trajectory.csv"), traj)?;

    let row = ResultRow {
        phantom_id: sidecar
            .as_ref()
            .map(|s| s.phantom.id.clone())
            .unwrap_or_else(|| "unknown".into()),
        na: degrade_spec.na,
        algorithm: algorithm_name(&base.algorithm).to_string(),
        best_lambda: outcome.best_lambda,
        snr_db: outcome.metrics.snr_db,
        ssim: outcome.metrics.ssim,
        alpha_s_final: outcome
            .report
            .steps
            .last()
            .map(|s| s.alpha_s)
            .unwrap_or(f64::NAN),
        runtime_seconds: outcome.report.wall_seconds,
    };
    std::fs::write(
        out_dir.join("row.csv"),
        format!("{RESULT_HEADER}\n{}\n", row.to_csv_line()),
    )?;
    Ok(row)
}

pub fn algorithm_name(a: &Algorithm) -> &'static str {
    match a {
        Algorithm::Pstaic => "pstaic",
        Algorithm::Pictv { .. } => "pictv",
        Algorithm::StaicFixed { .. } => "staic",
    }
}

/// Recursively collects result rows under a directory.
pub fn collect_rows(dir: &Path) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    collect_rows_rec(dir, &mut rows)?;
    rows.sort_by(|a, b| {
        (&a.phantom_id, &a.algorithm)
            .cmp(&(&b.phantom_id, &b.algorithm))
            .then(a.na.partial_cmp(&b.na).unwrap())
    });
    Ok(rows)
}

fn collect_rows_rec(dir: &Path, rows: &mut Vec<ResultRow>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_rows_rec(&path, rows)?;
        } else if path.file_name().is_some_and(|n| n == "row.csv") {
            let text = std::fs::read_to_string(&path)?;
            for line in text.lines().skip(1) {
                if !line.trim().is_empty() {
                    rows.push(ResultRow::from_csv_line(line)?);
                }
            }
        }
    }
    Ok(())
}

/// Table output format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

/// Formats the comparative table: one line per (phantom, NA) cell with the
/// algorithms side by side and a winner mark on SNR.
pub fn format_report(rows: &[ResultRow], format: ReportFormat) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::Manifest("no result rows found".into()));
    }
    let mut algos: Vec<String> = rows.iter().map(|r| r.algorithm.clone()).collect();
    algos.sort();
    algos.dedup();
    let mut cells: Vec<(String, f64)> = rows
        .iter()
        .map(|r| (r.phantom_id.clone(), r.na))
        .collect();
    cells.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.partial_cmp(&b.1).unwrap()));
    cells.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);

    let find = |p: &str, na: f64, algo: &str| {
        rows.iter()
            .find(|r| r.phantom_id == p && r.na == na && r.algorithm == algo)
    };

    let mut wins: Vec<usize> = vec![0; algos.len()];
    let mut scored_cells = 0usize;
    let mut body_rows: Vec<Vec<String>> = Vec::new();
    for (p, na) in &cells {
        let mut row_cells = vec![p.clone(), format!("{na:.2}")];
        let snrs: Vec<Option<f64>> = algos
            .iter()
            .map(|a| find(p, *na, a).map(|r| r.snr_db))
            .collect();
        let winner = snrs
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.map(|v| (i, v)))
            .filter(|(_, v)| v.is_finite())
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .map(|(i, _)| i);
        if let Some(w) = winner {
            if snrs.iter().filter(|s| s.is_some()).count() > 1 {
                wins[w] += 1;
                scored_cells += 1;
            }
        }
        for (i, a) in algos.iter().enumerate() {
            match find(p, *na, a) {
                Some(r) => {
                    row_cells.push(format!("{:.4}", r.ssim));
                    let mark = if winner == Some(i) && algos.len() > 1 { " *" } else { "" };
                    row_cells.push(format!("{:.2}{mark}", r.snr_db));
                }
                None => {
                    row_cells.push(String::new());
                    row_cells.push(String::new());
                }
            }
        }
        body_rows.push(row_cells);
    }

    let mut header = vec!["phantom".to_string(), "na".to_string()];
    for a in &algos {
        header.push(format!("{a}_ssim"));
        header.push(format!("{a}_snr_db"));
    }
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            out.push_str(&header.join(","));
            out.push('\n');
            for r in body_rows {
                out.push_str(&r.join(","));
                out.push('\n');
            }
        }
        ReportFormat::Markdown => {
            out.push_str(&format!("| {} |\n", header.join(" | ")));
            out.push_str(&format!("|{}\n", "---|".repeat(header.len())));
            for r in body_rows {
                out.push_str(&format!("| {} |\n", r.join(" | ")));
            }
        }
    }
    if algos.len() > 1 && scored_cells > 0 {
        let tally: Vec<String> = algos
            .iter()
            .zip(&wins)
            .map(|(a, w)| format!("{a} {w}/{scored_cells}"))
            .collect();
        match format {
            ReportFormat::Csv => out.push_str(&format!("# snr wins: {}\n", tally.join(", "))),
            ReportFormat::Markdown => out.push_str(&format!("\nSNR wins: {}\n", tally.join(", "))),
        }
    }
    Ok(out)
}

/// Win counts per algorithm over cells where at least two algorithms ran.
pub fn win_tally(rows: &[ResultRow]) -> Vec<(String, usize)> {
    let mut algos: Vec<String> = rows.iter().map(|r| r.algorithm.clone()).collect();
    algos.sort();
    algos.dedup();
    let mut cells: Vec<(String, f64)> = rows.iter().map(|r| (r.phantom_id.clone(), r.na)).collect();
    cells.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.partial_cmp(&b.1).unwrap()));
    cells.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
    let mut wins = vec![0usize; algos.len()];
    for (p, na) in &cells {
        let scored: Vec<(usize, f64)> = algos
            .iter()
            .enumerate()
            .filter_map(|(i, a)| {
                rows.iter()
                    .find(|r| &r.phantom_id == p && r.na == *na && &r.algorithm == a)
                    .map(|r| (i, r.snr_db))
            })
            .collect();
        if scored.len() > 1 {
            let best = scored
                .iter()
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap()
                .0;
            wins[best] += 1;
        }
    }
    algos.into_iter().zip(wins).collect()
}

/// Renders one trajectory as a small standalone SVG polyline.
pub fn polyline_svg(values: &[f64], title: &str) -> String {
    let (w, h, pad) = (480.0, 280.0, 40.0);
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    let n = values.len().max(2) as f64;
    let points: Vec<String> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let x = pad + (w - 2.0 * pad) * i as f64 / (n - 1.0);
            let y = h - pad - (h - 2.0 * pad) * (v - lo) / span;
            format!("{x:.1},{y:.1}")
        })
        .collect();
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">",
            "<rect x=\"{pad}\" y=\"{pad}\" width=\"{iw}\" height=\"{ih}\" ",
            "fill=\"none\" stroke=\"#999\"/>",
            "<text x=\"{pad}\" y=\"24\" font-size=\"14\">{title}</text>",
            "<text x=\"{pad}\" y=\"{h2}\" font-size=\"11\">min {lo:.4e}  max {hi:.4e}</text>",
            "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"{pts}\"/>",
            "</svg>\n"
        ),
        w = w,
        h = h,
        pad = pad,
        iw = w - 2.0 * pad,
        ih = h - 2.0 * pad,
        title = title,
        h2 = h - 12.0,
        lo = lo,
        hi = hi,
        pts = points.join(" ")
    )
}

/// Writes alpha and cost plots next to every trajectory file under `dir`.
pub fn write_plots(dir: &Path) -> Result<usize> {
    let mut count = 0;
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == "trajectory.csv") {
                let text = std::fs::read_to_string(&path)?;
                let mut alphas = Vec::new();
                let mut costs = Vec::new();
                for line in text.lines().skip(1) {
                    let parts: Vec<&str> = line.split(',').collect();
                    if parts.len() >= 6 {
                        if let (Ok(a), Ok(c)) = (parts[1].parse(), parts[5].parse()) {
                            alphas.push(a);
                            costs.push(c);
                        }
                    }
                }
                if alphas.is_empty() {
                    continue;
                }
                let parent = path.parent().unwrap();
                std::fs::write(parent.join("alpha.svg"), polyline_svg(&alphas, "weight trajectory"))?;
                std::fs::write(parent.join("cost.svg"), polyline_svg(&costs, "cost decay"))?;
                count += 1;
            }
        }
    }
    Ok(count)
}

/// Runs closures on up to `degree` worker threads, preserving result order.
pub fn run_parallel<T, F>(tasks: Vec<F>, degree: usize) -> Vec<T>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    let n = tasks.len();
    let degree = degree.max(1).min(n.max(1));
    if degree <= 1 {
        return tasks.into_iter().map(|f| f()).collect();
    }
    let queue: Vec<Mutex<Option<F>>> = tasks.into_iter().map(|f| Mutex::new(Some(f))).collect();
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    std::thread::scope(|scope| {
        for _ in 0..degree {
            let tx = tx.clone();
            let queue = &queue;
            let next = &next;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let task = queue[i].lock().unwrap().take().unwrap();
                if tx.send((i, task())).is_err() {
                    break;
                }
            });
        }
        drop(tx);
    });
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    for (i, v) in rx {
        slots[i] = Some(v);
    }
    slots.into_iter().map(|s| s.expect("worker completed")).collect()
}
