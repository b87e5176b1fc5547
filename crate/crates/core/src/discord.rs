//! Entropic quantum discord with projective measurements on subsystem B.
//!
//! `Q(ρ) = I(ρ) − C(ρ)` where `I` is the quantum mutual information and
//! `C(ρ) = S(ρ_A) − min_{B} S(ρ | B)` is the classical correlation extracted
//! by the best von Neumann measurement `{B_0, B_1}` on the mode qubit.
//!
//! A measurement is parametrized by `|b⟩ = cos θ |0⟩ + e^{iφ} sin θ |1⟩`,
//! `B_0 = |b⟩⟨b|`, `B_1 = I − B_0`. The pair is unchanged under
//! `(θ, φ) → (π/2 − θ, φ + π)` up to relabeling, so `θ ∈ [0, π/2]` and
//! `φ ∈ [0, 2π)` cover every measurement.
//!
//! [`classical_correlation`] scans a coarse grid and then polishes the best
//! grid point with Nelder–Mead. [`discord_bruteforce`] is a pure grid scan
//! kept as an independent check on the minimizer.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::par::{map_indices, Execution};
use crate::qstate::{c, DensityOperator, Mat2, Subsystem, C64, EIGEN_SLACK};

/// Outcomes with lower probability contribute nothing.
const MIN_BRANCH_PROBABILITY: f64 = 1e-12;

/// Upper bound on `n_theta · n_phi` for [`discord_bruteforce`].
pub const MAX_BRUTEFORCE_POINTS: usize = 10_000_000;

/// Projective measurement `{|b⟩⟨b|, I − |b⟩⟨b|}` on the mode qubit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectivePair {
    pub theta: f64,
    pub phi: f64,
}

impl ProjectivePair {
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !(0.0..=FRAC_PI_2).contains(&theta) || !(0.0..TAU).contains(&phi) {
            return validation(format!(
                "measurement angles (theta={theta}, phi={phi}) outside [0, pi/2] x [0, 2pi)"
            ));
        }
        Ok(Self { theta, phi })
    }

    /// Folds arbitrary angles onto the canonical range describing the same
    /// measurement.
    pub fn canonical(theta: f64, phi: f64) -> Self {
        let (mut theta, mut phi) = (theta.rem_euclid(PI), phi);
        if theta > FRAC_PI_2 {
            // same Bloch direction: sin 2θ flips sign, compensated by φ + π
            theta = PI - theta;
            phi += PI;
        }
        Self {
            theta: theta.clamp(0.0, FRAC_PI_2),
            phi: phi.rem_euclid(TAU),
        }
    }

    /// `|b⟩` as `(⟨0|b⟩, ⟨1|b⟩)`.
    pub fn vector(&self) -> [C64; 2] {
        basis_vector(self.theta, self.phi)
    }

    /// `(B_0, B_1)`.
    pub fn projectors(&self) -> (Mat2, Mat2) {
        let [b0, b1] = self.vector();
        let p0 = Mat2::new(
            b0 * b0.conj(),
            b0 * b1.conj(),
            b1 * b0.conj(),
            b1 * b1.conj(),
        );
        (p0, Mat2::identity() - p0)
    }
}

#[inline]
fn basis_vector(theta: f64, phi: f64) -> [C64; 2] {
    let (s, co) = theta.sin_cos();
    [c(co, 0.0), C64::from_polar(s, phi)]
}

/// Grid and refinement settings for the measurement search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MinimizerConfig {
    /// `(n_theta, n_phi)` points of the coarse scan.
    pub coarse_grid: (usize, usize),
    pub refine_iterations: usize,
    /// Stop refining once the simplex values agree within this many bits.
    pub refine_tolerance: f64,
}

impl Default for MinimizerConfig {
    fn default() -> Self {
        Self {
            coarse_grid: (64, 128),
            refine_iterations: 200,
            refine_tolerance: 1e-9,
        }
    }
}

impl MinimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let (nt, np) = self.coarse_grid;
        if nt < 16 || np < 32 {
            return validation(format!("coarse grid {nt}x{np} below minimum 16x32"));
        }
        if self.refine_tolerance.is_nan() || self.refine_tolerance <= 0.0 {
            return validation("refine_tolerance must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscordResult {
    pub discord: f64,
    pub classical_correlation: f64,
    pub mutual_information: f64,
    pub argmin: ProjectivePair,
    pub minimizer_evals: usize,
}

/// Blocks of `ρ` needed to evaluate post-measurement states of A quickly.
struct Conditioner {
    /// `blocks[a][a']` is the 2×2 matrix over the mode indices `(b, b')`.
    blocks: [[[[C64; 2]; 2]; 2]; 2],
    marginal: [[C64; 2]; 2],
}

impl Conditioner {
    fn new(rho: &DensityOperator) -> Self {
        let m = rho.matrix();
        let blocks = std::array::from_fn(|a| {
            std::array::from_fn(|ap| {
                std::array::from_fn(|b| std::array::from_fn(|bp| m[(2 * a + b, 2 * ap + bp)]))
            })
        });
        let reduced = rho.reduce(Subsystem::A);
        let marginal =
            std::array::from_fn(|r| std::array::from_fn(|col| reduced.matrix()[(r, col)]));
        Self { blocks, marginal }
    }

    #[inline]
    fn form(&self, a: usize, ap: usize, v: &[C64; 2]) -> C64 {
        let blk = &self.blocks[a][ap];
        let mut acc = c(0.0, 0.0);
        for b in 0..2 {
            for bp in 0..2 {
                acc += v[b].conj() * blk[b][bp] * v[bp];
            }
        }
        acc
    }

    /// `p_0 S(ρ_0) + p_1 S(ρ_1)` for the measurement built on `v`.
    #[inline]
    fn evaluate(&self, v: &[C64; 2]) -> f64 {
        let d00 = self.form(0, 0, v).re;
        let d11 = self.form(1, 1, v).re;
        let off = self.form(0, 1, v);
        let first = weighted_entropy(d00, d11, off);
        let second = weighted_entropy(
            self.marginal[0][0].re - d00,
            self.marginal[1][1].re - d11,
            self.marginal[0][1] - off,
        );
        first + second
    }

    #[inline]
    fn at(&self, theta: f64, phi: f64) -> f64 {
        self.evaluate(&basis_vector(theta, phi))
    }
}

/// `p · S(M / p)` for an unnormalized 2×2 block `[[a, b], [b*, d]]`, `p = a + d`.
#[inline]
fn weighted_entropy(a: f64, d: f64, b: C64) -> f64 {
    let p = a + d;
    if p < MIN_BRANCH_PROBABILITY {
        return 0.0;
    }
    let half_gap = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
    let big = 0.5 * p + half_gap;
    let small = ((a * d - b.norm_sqr()) / big).max(0.0);
    let mut s = 0.0;
    for mu in [big, small] {
        if mu > 0.0 {
            s -= mu * (mu / p).log2();
        }
    }
    s.max(0.0)
}

/// Measurement-induced conditional entropy `S(ρ | {B_0, B_1})` in bits.
pub fn conditional_entropy(rho: &DensityOperator, m: &ProjectivePair) -> f64 {
    Conditioner::new(rho).evaluate(&m.vector())
}

/// `S(ρ_A) + S(ρ_B) − S(ρ)`.
pub fn mutual_information(rho: &DensityOperator) -> Result<f64> {
    let sa = rho.reduce(Subsystem::A).entropy()?;
    let sb = rho.reduce(Subsystem::B).entropy()?;
    let sab = rho.entropy()?;
    Ok((sa + sb - sab).max(0.0))
}

struct Minimum {
    value: f64,
    argmin: ProjectivePair,
    evals: usize,
}

fn minimize_conditional_entropy(rho: &DensityOperator, cfg: &MinimizerConfig) -> Result<Minimum> {
    cfg.validate()?;
    let cond = Conditioner::new(rho);
    let (nt, np) = cfg.coarse_grid;
    let dtheta = FRAC_PI_2 / (nt - 1) as f64;
    let dphi = TAU / np as f64;

    let mut best = (f64::INFINITY, 0usize, 0usize);
    for i in 0..nt {
        let theta = i as f64 * dtheta;
        for j in 0..np {
            let v = cond.at(theta, j as f64 * dphi);
            if v < best.0 {
                best = (v, i, j);
            }
        }
    }
    let start = [best.1 as f64 * dtheta, best.2 as f64 * dphi];
    let (point, value, refine_evals) = nelder_mead(
        |x| cond.at(x[0], x[1]),
        start,
        [dtheta, dphi],
        best.0,
        cfg.refine_iterations,
        cfg.refine_tolerance,
    );
    let (value, point) = if value < best.0 {
        (value, point)
    } else {
        (best.0, start)
    };
    Ok(Minimum {
        value,
        argmin: ProjectivePair::canonical(point[0], point[1]),
        evals: nt * np + refine_evals,
    })
}

/// Two-dimensional Nelder–Mead. Returns `(argmin, min, evaluations)`.
fn nelder_mead(
    f: impl Fn([f64; 2]) -> f64,
    start: [f64; 2],
    step: [f64; 2],
    start_value: f64,
    max_iter: usize,
    tol: f64,
) -> ([f64; 2], f64, usize) {
    let mut simplex = [
        (start, start_value),
        ([start[0] + step[0], start[1]], 0.0),
        ([start[0], start[1] + step[1]], 0.0),
    ];
    let mut evals = 0;
    for vertex in simplex.iter_mut().skip(1) {
        vertex.1 = f(vertex.0);
        evals += 1;
    }
    let lerp =
        |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];

    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        // equal values alone are not enough: symmetric or flat directions
        // can tie a wide simplex, so the vertices must also be close
        let spread = simplex[1..]
            .iter()
            .map(|v| {
                (v.0[0] - simplex[0].0[0])
                    .abs()
                    .max((v.0[1] - simplex[0].0[1]).abs())
            })
            .fold(0.0, f64::max);
        if simplex[2].1 - simplex[0].1 < tol && spread < tol.sqrt() {
            break;
        }
        let centroid = lerp(simplex[0].0, simplex[1].0, 0.5);
        let worst = simplex[2];

        let reflected = lerp(centroid, worst.0, -1.0);
        let fr = f(reflected);
        evals += 1;
        if fr < simplex[0].1 {
            let expanded = lerp(centroid, worst.0, -2.0);
            let fe = f(expanded);
            evals += 1;
            simplex[2] = if fe < fr {
                (expanded, fe)
            } else {
                (reflected, fr)
            };
            continue;
        }
        if fr < simplex[1].1 {
            simplex[2] = (reflected, fr);
            continue;
        }
        let (contracted, fc) = if fr < worst.1 {
            let p = lerp(centroid, reflected, 0.5);
            (p, f(p))
        } else {
            let p = lerp(centroid, worst.0, 0.5);
            (p, f(p))
        };
        evals += 1;
        if fc < worst.1.min(fr) {
            simplex[2] = (contracted, fc);
            continue;
        }
        // shrink toward the best vertex
        let best = simplex[0].0;
        for vertex in simplex.iter_mut().skip(1) {
            vertex.0 = lerp(best, vertex.0, 0.5);
            vertex.1 = f(vertex.0);
            evals += 1;
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    (simplex[0].0, simplex[0].1, evals)
}

/// Classical correlation `S(ρ_A) − min S(ρ | B)` and the optimal measurement.
pub fn classical_correlation(
    rho: &DensityOperator,
    cfg: &MinimizerConfig,
) -> Result<(f64, ProjectivePair)> {
    let (value, argmin, _) = classical_correlation_counted(rho, cfg)?;
    Ok((value, argmin))
}

fn classical_correlation_counted(
    rho: &DensityOperator,
    cfg: &MinimizerConfig,
) -> Result<(f64, ProjectivePair, usize)> {
    let sa = rho.reduce(Subsystem::A).entropy()?;
    let min = minimize_conditional_entropy(rho, cfg)?;
    let value = (sa - min.value).clamp(0.0, sa);
    Ok((value, min.argmin, min.evals))
}

/// Entropic discord of `ρ` with measurements on the mode qubit.
pub fn discord(rho: &DensityOperator, cfg: &MinimizerConfig) -> Result<DiscordResult> {
    let mutual_information = mutual_information(rho)?;
    let (classical_correlation, argmin, evals) = classical_correlation_counted(rho, cfg)?;
    let raw = mutual_information - classical_correlation;
    if raw < -EIGEN_SLACK {
        return Err(Error::MinimizerFailure { discord: raw });
    }
    let discord = raw.max(0.0);
    Ok(DiscordResult {
        discord,
        classical_correlation: mutual_information - discord,
        mutual_information,
        argmin,
        minimizer_evals: evals,
    })
}

/// Discord from a plain grid minimum over `θ_i = i·(π/2)/n_theta`,
/// `i = 0..=n_theta`, and `φ_j = 2πj/n_phi`. Doubling either count nests the
/// previous grid, so the result never increases with refinement.
pub fn discord_bruteforce(rho: &DensityOperator, n_theta: usize, n_phi: usize) -> Result<f64> {
    discord_bruteforce_with(rho, n_theta, n_phi, Execution::Parallel)
}

pub fn discord_bruteforce_with(
    rho: &DensityOperator,
    n_theta: usize,
    n_phi: usize,
    exec: Execution,
) -> Result<f64> {
    if n_theta == 0 || n_phi == 0 {
        return validation("brute-force grid needs at least one point per axis");
    }
    match n_theta.checked_mul(n_phi) {
        Some(n) if n <= MAX_BRUTEFORCE_POINTS => {}
        _ => {
            return Err(Error::Resource(format!(
                "grid {n_theta}x{n_phi} exceeds {MAX_BRUTEFORCE_POINTS} points"
            )))
        }
    }
    let cond = Conditioner::new(rho);
    let phases: Vec<C64> = (0..n_phi)
        .map(|j| C64::from_polar(1.0, TAU * j as f64 / n_phi as f64))
        .collect();
    let row_minima = map_indices(exec, n_theta + 1, |i| {
        let (s, co) = (FRAC_PI_2 * i as f64 / n_theta as f64).sin_cos();
        phases
            .iter()
            .map(|e| cond.evaluate(&[c(co, 0.0), e * s]))
            .fold(f64::INFINITY, f64::min)
    });
    let min = row_minima.into_iter().fold(f64::INFINITY, f64::min);
    let sa = rho.reduce(Subsystem::A).entropy()?;
    Ok(mutual_information(rho)? - sa + min)
}
