//! Sweeps, simulated tomography runs and fidelity-model fits.
//!
//! Every command is deterministic given its configuration: sweep points run
//! concurrently but results are collected in c-then-α order, and each
//! simulated tomography point draws from its own ChaCha stream derived from
//! the configured seed.
//!
//! Curve CSV columns: `family, c, alpha, discord, classical_correlation,
//! mutual_information, fidelity, error`. Tomography summary CSV columns:
//! `family, c, fidelity, discord, ideal_discord, negative_eigenvalue_mass,
//! error`. Empty cells mean "not available"; `error` carries the error kind
//! and message of a point that failed without aborting the run.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discord::{discord, DiscordResult, MinimizerConfig};
use crate::error::{validation, Error, Result};
use crate::optics::{
    prepare_family_circuit, run_circuit, run_circuit_noisy, simulate_tomography,
    simulate_tomography_noisy, NoiseConfig,
};
use crate::par::{map_indices, map_slice, Execution};
use crate::qstate::{fidelity, DensityOperator};
use crate::states::{check_unit_interval, family, perturb, FamilyId};
use crate::tomography::{reconstruct_with, IntensityRecord, MarginalMode, TomographyReport};

/// The five experimentally prepared weights.
pub const DEFAULT_C_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
pub const DEFAULT_ALPHAS: [f64; 4] = [0.0, 0.1, 0.2, 0.3];
/// Step of the coarse α scan in [`cmd_fit`].
pub const FIT_ALPHA_STEP: f64 = 0.002;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => validation(format!("unknown format {other:?}, expected csv or json")),
        }
    }
}

/// One JSON document driving every command. Missing fields take defaults;
/// `"noise": null` selects a noiseless bench.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub family: FamilyId,
    pub c_grid: Vec<f64>,
    pub alpha_list: Vec<f64>,
    pub noise: Option<NoiseConfig>,
    pub minimizer: MinimizerConfig,
    pub output_path: Option<PathBuf>,
    pub format: OutputFormat,
    /// Total CCD intensity per setting in simulated tomography.
    pub total_intensity: f64,
    pub marginals: MarginalMode,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            family: FamilyId::Rho1,
            c_grid: DEFAULT_C_GRID.to_vec(),
            alpha_list: DEFAULT_ALPHAS.to_vec(),
            noise: Some(NoiseConfig::default()),
            minimizer: MinimizerConfig::default(),
            output_path: None,
            format: OutputFormat::Csv,
            total_intensity: 1.0,
            marginals: MarginalMode::Fixed,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_grid.is_empty() {
            return validation("c_grid is empty");
        }
        for &c in &self.c_grid {
            check_unit_interval("c", c)?;
        }
        if self.c_grid.windows(2).any(|w| w[0] > w[1]) {
            return validation("c_grid must be sorted ascending");
        }
        for &a in &self.alpha_list {
            check_unit_interval("alpha", a)?;
        }
        if !(self.total_intensity.is_finite() && self.total_intensity > 0.0) {
            return validation("total_intensity must be positive");
        }
        self.minimizer.validate()?;
        if let Some(noise) = &self.noise {
            noise.validate()?;
        }
        Ok(())
    }
}

fn error_cell(e: &Error) -> String {
    format!("{}: {e}", e.kind())
}

/// One `(c, α)` point of a discord curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub family: FamilyId,
    pub c: f64,
    pub alpha: f64,
    pub discord: Option<f64>,
    pub classical_correlation: Option<f64>,
    pub mutual_information: Option<f64>,
    /// Fidelity of the perturbed state with the unperturbed family member.
    pub fidelity: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFidelity {
    pub alpha: f64,
    pub mean_fidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveOutput {
    pub rows: Vec<CurveRow>,
    pub mean_fidelity: Vec<MeanFidelity>,
}

impl CurveOutput {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_csv_rows(&self.rows, out)
    }

    pub fn write<W: Write>(&self, format: OutputFormat, mut out: W) -> Result<()> {
        match format {
            OutputFormat::Csv => self.write_csv(out),
            OutputFormat::Json => {
                serde_json::to_writer_pretty(&mut out, self)?;
                writeln!(out)?;
                Ok(())
            }
        }
    }
}

fn write_csv_rows<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses curve CSV produced by [`CurveOutput::write_csv`].
pub fn read_curve_csv<R: Read>(input: R) -> Result<Vec<CurveRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Mean fidelity between each family member on `c_grid` and its perturbation.
pub fn mean_fidelity(id: FamilyId, c_grid: &[f64], alpha: f64) -> Result<f64> {
    if c_grid.is_empty() {
        return validation("empty c grid");
    }
    let mut sum = 0.0;
    for &c in c_grid {
        let rho = family(id, c)?;
        sum += fidelity(&rho, &perturb(&rho, alpha)?);
    }
    Ok(sum / c_grid.len() as f64)
}

pub fn cmd_curve(cfg: &ExperimentConfig) -> Result<CurveOutput> {
    cmd_curve_with(cfg, Execution::Parallel)
}

/// Discord of `perturb(family(c), α)` for every `c` and `α`, in c-then-α
/// order. Minimizer failures are recorded in the row instead of aborting.
pub fn cmd_curve_with(cfg: &ExperimentConfig, exec: Execution) -> Result<CurveOutput> {
    cfg.validate()?;
    let na = cfg.alpha_list.len();
    let rows = map_indices(exec, cfg.c_grid.len() * na, |k| {
        let (c, alpha) = (cfg.c_grid[k / na], cfg.alpha_list[k % na]);
        let rho = family(cfg.family, c)?;
        let perturbed = perturb(&rho, alpha)?;
        let fid = fidelity(&rho, &perturbed);
        let mut row = CurveRow {
            family: cfg.family,
            c,
            alpha,
            discord: None,
            classical_correlation: None,
            mutual_information: None,
            fidelity: fid,
            error: None,
        };
        match discord(&perturbed, &cfg.minimizer) {
            Ok(r) => {
                row.discord = Some(r.discord);
                row.classical_correlation = Some(r.classical_correlation);
                row.mutual_information = Some(r.mutual_information);
            }
            Err(e) => row.error = Some(error_cell(&e)),
        }
        Ok(row)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mean_fidelity = cfg
        .alpha_list
        .iter()
        .enumerate()
        .map(|(j, &alpha)| {
            let sum: f64 = rows.iter().skip(j).step_by(na).map(|r| r.fidelity).sum();
            MeanFidelity {
                alpha,
                mean_fidelity: sum / cfg.c_grid.len() as f64,
            }
        })
        .collect();
    Ok(CurveOutput {
        rows,
        mean_fidelity,
    })
}

/// Reconstruction of one set of nine records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomoPoint {
    pub family: Option<FamilyId>,
    pub c: Option<f64>,
    pub records: Vec<IntensityRecord>,
    pub report: TomographyReport,
    /// Discord of the reconstructed physical state.
    pub discord: Option<f64>,
    /// Discord of the analytic family member, when known.
    pub ideal_discord: Option<f64>,
    pub error: Option<String>,
}

/// Flat per-point line of the tomography summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomoSummaryRow {
    pub family: Option<FamilyId>,
    pub c: Option<f64>,
    pub fidelity: Option<f64>,
    pub discord: Option<f64>,
    pub ideal_discord: Option<f64>,
    pub negative_eigenvalue_mass: f64,
    pub error: Option<String>,
}

impl From<&TomoPoint> for TomoSummaryRow {
    fn from(p: &TomoPoint) -> Self {
        Self {
            family: p.family,
            c: p.c,
            fidelity: p.report.fidelity_vs_target,
            discord: p.discord,
            ideal_discord: p.ideal_discord,
            negative_eigenvalue_mass: p.report.negative_eigenvalue_mass,
            error: p.error.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomoRun {
    pub points: Vec<TomoPoint>,
    /// Mean fidelity over the points that have a target.
    pub mean_fidelity: Option<f64>,
}

impl TomoRun {
    fn new(points: Vec<TomoPoint>) -> Self {
        let fids: Vec<f64> = points
            .iter()
            .filter_map(|p| p.report.fidelity_vs_target)
            .collect();
        let mean_fidelity =
            (!fids.is_empty()).then(|| fids.iter().sum::<f64>() / fids.len() as f64);
        Self {
            points,
            mean_fidelity,
        }
    }

    pub fn summary(&self) -> Vec<TomoSummaryRow> {
        self.points.iter().map(TomoSummaryRow::from).collect()
    }

    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        write_csv_rows(&self.summary(), out)
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, self)?;
        writeln!(out)?;
        Ok(())
    }

    /// `(c, discord)` pairs of the reconstructed states, for [`cmd_fit`].
    pub fn discord_points(&self) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter_map(|p| Some((p.c?, p.discord?)))
            .collect()
    }
}

/// Reconstructs a record set and evaluates its discord. Shared by simulated
/// runs and ingestion of measured data.
pub fn analyze_records(
    records: Vec<IntensityRecord>,
    target: Option<(FamilyId, f64)>,
    minimizer: &MinimizerConfig,
    marginals: MarginalMode,
) -> Result<TomoPoint> {
    let target_state = target.map(|(id, c)| family(id, c)).transpose()?;
    let report = reconstruct_with(&records, target_state.as_ref(), marginals)?;
    let mut error = None;
    let mut flag = |r: Result<DiscordResult>| match r {
        Ok(r) => Some(r.discord),
        Err(e) => {
            error.get_or_insert_with(|| error_cell(&e));
            None
        }
    };
    let discord_value = flag(discord(&report.rho_physical, minimizer));
    let ideal_discord = target_state
        .as_ref()
        .and_then(|t| flag(discord(t, minimizer)));
    Ok(TomoPoint {
        family: target.map(|t| t.0),
        c: target.map(|t| t.1),
        records,
        report,
        discord: discord_value,
        ideal_discord,
        error,
    })
}

/// Random stream for the `k`-th point of a run.
pub fn point_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng
}

fn simulate_point(cfg: &ExperimentConfig, k: usize, c: f64) -> Result<TomoPoint> {
    let circuit = prepare_family_circuit(cfg.family, c)?;
    let records = match &cfg.noise {
        Some(noise) => {
            let mut rng = point_rng(noise.seed, k);
            let prepared = run_circuit_noisy(&circuit, noise, &mut rng)?;
            simulate_tomography_noisy(&prepared, cfg.total_intensity, noise, &mut rng)?
        }
        None => simulate_tomography(&run_circuit(&circuit)?, cfg.total_intensity)?,
    };
    analyze_records(
        records,
        Some((cfg.family, c)),
        &cfg.minimizer,
        cfg.marginals,
    )
}

pub fn cmd_tomo(cfg: &ExperimentConfig) -> Result<TomoRun> {
    cmd_tomo_with(cfg, Execution::Parallel)
}

/// Prepares, measures and reconstructs every `c` in the grid.
pub fn cmd_tomo_with(cfg: &ExperimentConfig, exec: Execution) -> Result<TomoRun> {
    cfg.validate()?;
    let points = map_indices(exec, cfg.c_grid.len(), |k| {
        simulate_point(cfg, k, cfg.c_grid[k])
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(TomoRun::new(points))
}

/// Reconstruction of measured records read from JSON.
pub fn tomo_from_records(
    records: Vec<IntensityRecord>,
    target: Option<(FamilyId, f64)>,
    cfg: &ExperimentConfig,
) -> Result<TomoRun> {
    cfg.validate()?;
    let point = analyze_records(records, target, &cfg.minimizer, cfg.marginals)?;
    Ok(TomoRun::new(vec![point]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub c: f64,
    pub discord_measured: f64,
    pub discord_model: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: FamilyId,
    pub alpha_hat: f64,
    /// Mean fidelity of the fitted model over the c values of the points.
    pub mean_fidelity: f64,
    pub residual_sse: f64,
    pub points: Vec<FitPoint>,
}

/// Flat CSV line of a fit; the scalar results repeat on every row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub family: FamilyId,
    pub c: f64,
    pub discord_measured: f64,
    pub discord_model: f64,
    pub alpha_hat: f64,
    pub mean_fidelity: f64,
    pub residual_sse: f64,
}

impl FitResult {
    pub fn rows(&self) -> Vec<FitRow> {
        self.points
            .iter()
            .map(|p| FitRow {
                family: self.family,
                c: p.c,
                discord_measured: p.discord_measured,
                discord_model: p.discord_model,
                alpha_hat: self.alpha_hat,
                mean_fidelity: self.mean_fidelity,
                residual_sse: self.residual_sse,
            })
            .collect()
    }

    pub fn write<W: Write>(&self, format: OutputFormat, mut out: W) -> Result<()> {
        match format {
            OutputFormat::Csv => write_csv_rows(&self.rows(), out),
            OutputFormat::Json => {
                serde_json::to_writer_pretty(&mut out, self)?;
                writeln!(out)?;
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct MatrixEntry {
    row: usize,
    col: usize,
    re: f64,
    im: f64,
}

/// Writes a density matrix as the JSON grid `[[[re, im]; 4]; 4]` or as CSV
/// with columns `row, col, re, im`.
pub fn write_density<W: Write>(
    rho: &DensityOperator,
    format: OutputFormat,
    mut out: W,
) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            let entries: Vec<MatrixEntry> = (0..16)
                .map(|k| {
                    let z = rho.get(k / 4, k % 4);
                    MatrixEntry {
                        row: k / 4,
                        col: k % 4,
                        re: z.re,
                        im: z.im,
                    }
                })
                .collect();
            write_csv_rows(&entries, out)
        }
        OutputFormat::Json => {
            serde_json::to_writer(&mut out, rho)?;
            writeln!(out)?;
            Ok(())
        }
    }
}

/// Reads `(c, discord)` pairs from CSV with `c` and `discord` columns. Other
/// columns are ignored and rows with an empty discord cell are skipped, so a
/// tomography summary can be fitted directly.
pub fn read_points_csv<R: Read>(input: R) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Validation(format!("missing column {name:?}")))
    };
    let (ci, di) = (column("c")?, column("discord")?);
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|e| Error::Validation(format!("bad number {s:?}: {e}")))
    };
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record?;
        let d = record.get(di).unwrap_or("").trim();
        if d.is_empty() {
            continue;
        }
        points.push((parse(record.get(ci).unwrap_or(""))?, parse(d)?));
    }
    Ok(points)
}

/// Reads `[[c, discord], ...]`.
pub fn read_points_json<R: Read>(input: R) -> Result<Vec<(f64, f64)>> {
    Ok(serde_json::from_reader(input)?)
}

fn fit_residual(
    models: &[DensityOperator],
    points: &[(f64, f64)],
    alpha: f64,
    cfg: &MinimizerConfig,
) -> Result<(f64, Vec<f64>)> {
    let mut sse = 0.0;
    let mut predicted = Vec::with_capacity(points.len());
    for (rho, &(_, measured)) in models.iter().zip(points) {
        let d = discord(&perturb(rho, alpha)?, cfg)?.discord;
        sse += (measured - d).powi(2);
        predicted.push(d);
    }
    Ok((sse, predicted))
}

pub fn cmd_fit(points: &[(f64, f64)], id: FamilyId, cfg: &MinimizerConfig) -> Result<FitResult> {
    cmd_fit_with(points, id, cfg, Execution::Parallel)
}

/// Least-squares identity admixture `α` for measured discord values: a scan
/// at step [`FIT_ALPHA_STEP`] followed by golden-section refinement around
/// the best grid point.
pub fn cmd_fit_with(
    points: &[(f64, f64)],
    id: FamilyId,
    cfg: &MinimizerConfig,
    exec: Execution,
) -> Result<FitResult> {
    cfg.validate()?;
    if points.len() < 3 {
        return validation(format!("fit needs at least 3 points, got {}", points.len()));
    }
    for &(c, d) in points {
        check_unit_interval("c", c)?;
        if !d.is_finite() {
            return validation("discord values must be finite");
        }
    }
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.1), hi.max(p.1))
        });
    if hi - lo < 1e-12 {
        return Err(Error::FitFailure(
            "all discord values are equal; the curve carries no information".into(),
        ));
    }
    let models = points
        .iter()
        .map(|&(c, _)| family(id, c))
        .collect::<Result<Vec<_>>>()?;

    let steps = (1.0 / FIT_ALPHA_STEP).round() as usize;
    let alphas: Vec<f64> = (0..=steps).map(|k| k as f64 / steps as f64).collect();
    let scan = map_slice(exec, &alphas, |&a| {
        fit_residual(&models, points, a, cfg).map(|r| r.0)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let best = (0..scan.len())
        .min_by(|&a, &b| scan[a].total_cmp(&scan[b]))
        .expect("nonempty scan");

    let sse = |a: f64| fit_residual(&models, points, a, cfg).map(|r| r.0);
    let (mut a, mut b) = (
        (alphas[best] - FIT_ALPHA_STEP).max(0.0),
        (alphas[best] + FIT_ALPHA_STEP).min(1.0),
    );
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let (mut f1, mut f2) = (sse(x1)?, sse(x2)?);
    while b - a > 1e-7 {
        if f1 <= f2 {
            b = x2;
            (x2, f2) = (x1, f1);
            x1 = b - ratio * (b - a);
            f1 = sse(x1)?;
        } else {
            a = x1;
            (x1, f1) = (x2, f2);
            x2 = a + ratio * (b - a);
            f2 = sse(x2)?;
        }
    }
    let (refined, refined_sse) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    let alpha_hat = if refined_sse <= scan[best] {
        refined
    } else {
        alphas[best]
    };

    let (residual_sse, predicted) = fit_residual(&models, points, alpha_hat, cfg)?;
    let cs: Vec<f64> = points.iter().map(|p| p.0).collect();
    Ok(FitResult {
        family: id,
        alpha_hat,
        mean_fidelity: mean_fidelity(id, &cs, alpha_hat)?,
        residual_sse,
        points: points
            .iter()
            .zip(predicted)
            .map(|(&(c, discord_measured), discord_model)| FitPoint {
                c,
                discord_measured,
                discord_model,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cfg(id: FamilyId) -> ExperimentConfig {
        ExperimentConfig {
            family: id,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = ExperimentConfig::from_json_str("{}").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        let c = ExperimentConfig::from_json_str(
            r#"{"family": "rho3", "noise": null, "format": "json"}"#,
        )
        .unwrap();
        assert_eq!(c.family, FamilyId::Rho3);
        assert!(c.noise.is_none());
        for bad in [
            r#"{"c_grid": []}"#,
            r#"{"c_grid": [0.5, 0.2]}"#,
            r#"{"c_grid": [1.5]}"#,
            r#"{"alpha_list": [-0.1]}"#,
            r#"{"family": "rho9"}"#,
            r#"{"minimizer": {"coarse_grid": [4, 4]}}"#,
        ] {
            assert!(ExperimentConfig::from_json_str(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn rho1_curve_endpoints() {
        let cfg = ExperimentConfig {
            alpha_list: vec![0.0],
            ..cfg(FamilyId::Rho1)
        };
        let out = cmd_curve(&cfg).unwrap();
        assert_abs_diff_eq!(out.rows[0].discord.unwrap(), 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(
            out.rows.last().unwrap().discord.unwrap(),
            1.0,
            epsilon = 1e-4
        );
        assert_abs_diff_eq!(out.mean_fidelity[0].mean_fidelity, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn rho2_null_point() {
        let cfg = ExperimentConfig {
            c_grid: vec![0.5],
            alpha_list: vec![0.0],
            ..cfg(FamilyId::Rho2)
        };
        let out = cmd_curve(&cfg).unwrap();
        assert_abs_diff_eq!(out.rows[0].discord.unwrap(), 0.0, epsilon = 1e-6);
    }

    #[test]
    fn rho3_mean_fidelity_at_alpha_0_3() {
        let out = cmd_curve(&ExperimentConfig {
            alpha_list: vec![0.3],
            ..cfg(FamilyId::Rho3)
        })
        .unwrap();
        assert_abs_diff_eq!(out.mean_fidelity[0].mean_fidelity, 0.89, epsilon = 0.02);
    }

    #[test]
    fn curve_rows_are_ordered_c_then_alpha() {
        let out = cmd_curve(&cfg(FamilyId::Rho2)).unwrap();
        let keys: Vec<(f64, f64)> = out.rows.iter().map(|r| (r.c, r.alpha)).collect();
        let expected: Vec<(f64, f64)> = DEFAULT_C_GRID
            .iter()
            .flat_map(|&c| DEFAULT_ALPHAS.iter().map(move |&a| (c, a)))
            .collect();
        assert_eq!(keys, expected);
    }

    #[test]
    fn curve_at_zero_alpha_matches_discord_module() {
        let cfg = ExperimentConfig {
            alpha_list: vec![0.0],
            ..cfg(FamilyId::Rho3)
        };
        for row in cmd_curve(&cfg).unwrap().rows {
            let direct = discord(&family(FamilyId::Rho3, row.c).unwrap(), &cfg.minimizer).unwrap();
            assert_eq!(row.discord.unwrap(), direct.discord);
            assert_eq!(
                row.classical_correlation.unwrap(),
                direct.classical_correlation
            );
        }
    }

    #[test]
    fn curve_csv_round_trip_and_determinism() {
        let cfg = cfg(FamilyId::Werner);
        let a = cmd_curve(&cfg).unwrap();
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let header = std::str::from_utf8(&buf)
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string();
        assert_eq!(
            header,
            "family,c,alpha,discord,classical_correlation,mutual_information,fidelity,error"
        );
        assert_eq!(read_curve_csv(buf.as_slice()).unwrap(), a.rows);

        let mut again = Vec::new();
        cmd_curve_with(&cfg, Execution::Sequential)
            .unwrap()
            .write_csv(&mut again)
            .unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn noiseless_tomography_is_exact() {
        for id in FamilyId::ALL {
            let run = cmd_tomo(&ExperimentConfig {
                noise: None,
                ..cfg(id)
            })
            .unwrap();
            for p in &run.points {
                assert!(p.report.fidelity_vs_target.unwrap() >= 1.0 - 1e-9);
                assert_abs_diff_eq!(p.discord.unwrap(), p.ideal_discord.unwrap(), epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn calibrated_noise_hits_the_fidelity_band() {
        let run = cmd_tomo(&cfg(FamilyId::Rho1)).unwrap();
        let f = run.mean_fidelity.unwrap();
        assert!((0.93..=0.97).contains(&f), "mean fidelity {f}");
        // reconstructed discord sits below the ideal curve once c > 0.5
        for p in run.points.iter().filter(|p| p.c.unwrap() > 0.5) {
            assert!(p.discord.unwrap() < p.ideal_discord.unwrap());
        }
    }

    #[test]
    fn tomography_runs_are_seeded() {
        let cfg = cfg(FamilyId::Rho2);
        let a = cmd_tomo(&cfg).unwrap();
        let b = cmd_tomo_with(&cfg, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        let other = ExperimentConfig {
            noise: Some(NoiseConfig {
                seed: 99,
                ..NoiseConfig::default()
            }),
            ..cfg
        };
        assert_ne!(cmd_tomo(&other).unwrap(), a);
    }

    #[test]
    fn ingested_records_share_the_report_schema() {
        let sim = cmd_tomo(&cfg(FamilyId::Rho1)).unwrap();
        let records = sim.points[2].records.clone();
        let json = serde_json::to_string(&records).unwrap();
        let parsed: Vec<IntensityRecord> = serde_json::from_str(&json).unwrap();
        let run =
            tomo_from_records(parsed, Some((FamilyId::Rho1, 0.5)), &cfg(FamilyId::Rho1)).unwrap();
        assert_eq!(run.points[0], sim.points[2]);
        let bare = tomo_from_records(records, None, &cfg(FamilyId::Rho1)).unwrap();
        let keys = |v: serde_json::Value| -> Vec<String> {
            v["points"][0]
                .as_object()
                .unwrap()
                .keys()
                .cloned()
                .collect()
        };
        assert_eq!(
            keys(serde_json::to_value(&bare).unwrap()),
            keys(serde_json::to_value(&run).unwrap())
        );
    }

    #[test]
    fn tomo_summary_feeds_the_fit_reader() {
        let run = cmd_tomo(&cfg(FamilyId::Rho1)).unwrap();
        let mut buf = Vec::new();
        run.write_summary_csv(&mut buf).unwrap();
        assert_eq!(
            read_points_csv(buf.as_slice()).unwrap(),
            run.discord_points()
        );
        let rows: Vec<TomoSummaryRow> = csv::Reader::from_reader(buf.as_slice())
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .unwrap();
        assert_eq!(rows, run.summary());
    }

    fn model_points(id: FamilyId, alpha: f64) -> Vec<(f64, f64)> {
        let m = MinimizerConfig::default();
        DEFAULT_C_GRID
            .iter()
            .map(|&c| {
                let rho = perturb(&family(id, c).unwrap(), alpha).unwrap();
                (c, discord(&rho, &m).unwrap().discord)
            })
            .collect()
    }

    #[test]
    fn fit_recovers_alpha() {
        let fit = cmd_fit(
            &model_points(FamilyId::Rho1, 0.1),
            FamilyId::Rho1,
            &MinimizerConfig::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(fit.alpha_hat, 0.1, epsilon = 0.005);
        assert!(fit.residual_sse < 1e-10);
        assert_eq!(fit.points.len(), 5);
    }

    #[test]
    fn fit_is_robust_to_small_noise() {
        let m = MinimizerConfig::default();
        let clean = model_points(FamilyId::Rho1, 0.2);
        let base = cmd_fit(&clean, FamilyId::Rho1, &m).unwrap();
        let jitter = [0.01, -0.01, 0.01, -0.01, 0.01];
        let noisy: Vec<(f64, f64)> = clean
            .iter()
            .zip(jitter)
            .map(|(&(c, d), j)| (c, d + j))
            .collect();
        let fit = cmd_fit(&noisy, FamilyId::Rho1, &m).unwrap();
        assert_abs_diff_eq!(fit.mean_fidelity, base.mean_fidelity, epsilon = 0.02);
    }

    #[test]
    fn degenerate_fits_fail() {
        let m = MinimizerConfig::default();
        let flat = [(0.0, 0.3), (0.5, 0.3), (1.0, 0.3)];
        assert!(matches!(
            cmd_fit(&flat, FamilyId::Rho1, &m),
            Err(Error::FitFailure(_))
        ));
        assert!(matches!(
            cmd_fit(&[(0.0, 0.0), (1.0, 1.0)], FamilyId::Rho1, &m),
            Err(Error::Validation(_))
        ));
        assert!(cmd_fit(&[(0.0, 0.0), (0.5, 0.1), (1.5, 1.0)], FamilyId::Rho1, &m).is_err());
    }

    #[test]
    fn fit_and_state_writers() {
        let fit = cmd_fit(
            &model_points(FamilyId::Rho2, 0.1),
            FamilyId::Rho2,
            &MinimizerConfig::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        fit.write(OutputFormat::Csv, &mut buf).unwrap();
        let rows: Vec<FitRow> = csv::Reader::from_reader(buf.as_slice())
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .unwrap();
        assert_eq!(rows, fit.rows());
        buf.clear();
        fit.write(OutputFormat::Json, &mut buf).unwrap();
        assert_eq!(serde_json::from_slice::<FitResult>(&buf).unwrap(), fit);

        let rho = family(FamilyId::Rho3, 0.5).unwrap();
        buf.clear();
        write_density(&rho, OutputFormat::Json, &mut buf).unwrap();
        assert_eq!(
            serde_json::from_slice::<DensityOperator>(&buf).unwrap(),
            rho
        );
        buf.clear();
        write_density(&rho, OutputFormat::Csv, &mut buf).unwrap();
        assert_eq!(std::str::from_utf8(&buf).unwrap().lines().count(), 17);
    }

    #[test]
    fn points_readers() {
        let csv = "c,discord\n0,0.0\n0.5,0.2\n1,\n";
        assert_eq!(
            read_points_csv(csv.as_bytes()).unwrap(),
            vec![(0.0, 0.0), (0.5, 0.2)]
        );
        assert!(read_points_csv("x,y\n1,2\n".as_bytes()).is_err());
        let json = "[[0, 0.1], [1, 0.9]]";
        assert_eq!(
            read_points_json(json.as_bytes()).unwrap(),
            vec![(0.0, 0.1), (1.0, 0.9)]
        );
    }
}
