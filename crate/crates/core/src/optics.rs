//! Jones-calculus model of the preparation and analysis bench.
//!
//! Wave plates act on the polarization factor, Dove prisms and the π/2 mode
//! converter act on the transverse-mode factor with the same matrices (a Dove
//! prism at angle β behaves as a half-wave plate at β; the converter as a
//! quarter-wave plate at 90°). Independent lasers are combined incoherently,
//! so a circuit is a list of weighted branches whose density matrices add.
//!
//! Conventions: `HWP(θ) = R(−θ) diag(1, −1) R(θ)`, `QWP(θ) = R(−θ) diag(1, i) R(θ)`
//! with `R(θ) = [[cos θ, sin θ], [−sin θ, cos θ]]`; angles in degrees. Global
//! phases are dropped.
//!
//! Noise is drawn from a caller-supplied random stream in a fixed order:
//! angle jitter for every angled element of a chain (in listed order), then
//! the deterministic depolarizing channel after each astigmatic element, then
//! detector noise on the four outputs.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::qstate::{c, kron, pauli, DensityOperator, Mat2, Mat4, PureState, C64};
use crate::states::{check_unit_interval, FamilyId};
use crate::tomography::{forward_probabilities, IntensityRecord, MeasurementSetting};

/// Transverse mode label for holographic masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeLabel {
    /// `HG01`
    H,
    /// `HG10`
    V,
}

impl ModeLabel {
    fn vector(self) -> [C64; 2] {
        match self {
            ModeLabel::H => [c(1.0, 0.0), c(0.0, 0.0)],
            ModeLabel::V => [c(0.0, 0.0), c(1.0, 0.0)],
        }
    }
}

/// An optical element. Angles are in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Element {
    Hwp {
        angle: f64,
    },
    Qwp {
        angle: f64,
    },
    /// Dove prism, half-wave action on the mode.
    Dove {
        angle: f64,
    },
    /// π/2 cylindrical-lens converter, quarter-wave action on the mode.
    ModeConverter,
    /// S-wave plate.
    Swp {
        angle: f64,
    },
    /// Holographic mask preparing the given mode.
    Mask {
        mode: ModeLabel,
    },
    NeutralFilter {
        transmittance: f64,
    },
}

impl Element {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Element::Hwp { angle }
            | Element::Qwp { angle }
            | Element::Dove { angle }
            | Element::Swp { angle } => {
                if !angle.is_finite() {
                    return validation("element angle must be finite");
                }
            }
            Element::NeutralFilter { transmittance } => {
                check_unit_interval("transmittance", transmittance)?
            }
            Element::ModeConverter | Element::Mask { .. } => {}
        }
        Ok(())
    }

    pub fn angle(&self) -> Option<f64> {
        match *self {
            Element::Hwp { angle }
            | Element::Qwp { angle }
            | Element::Dove { angle }
            | Element::Swp { angle } => Some(angle),
            _ => None,
        }
    }

    fn with_angle_offset(self, delta: f64) -> Self {
        match self {
            Element::Hwp { angle } => Element::Hwp {
                angle: angle + delta,
            },
            Element::Qwp { angle } => Element::Qwp {
                angle: angle + delta,
            },
            Element::Dove { angle } => Element::Dove {
                angle: angle + delta,
            },
            Element::Swp { angle } => Element::Swp {
                angle: angle + delta,
            },
            other => other,
        }
    }

    /// Dove prisms and mode converters distort the wavefront.
    pub fn is_astigmatic(&self) -> bool {
        matches!(self, Element::Dove { .. } | Element::ModeConverter)
    }
}

fn rotation(deg: f64) -> Mat2 {
    let (s, co) = deg.to_radians().sin_cos();
    Mat2::new(c(co, 0.0), c(s, 0.0), c(-s, 0.0), c(co, 0.0))
}

fn retarder(deg: f64, slow_phase: C64) -> Mat2 {
    let r = rotation(deg);
    r.transpose() * Mat2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), slow_phase) * r
}

/// Half-wave Jones matrix with fast axis at `deg`.
pub fn half_wave(deg: f64) -> Mat2 {
    retarder(deg, c(-1.0, 0.0))
}

/// Quarter-wave Jones matrix with fast axis at `deg`.
pub fn quarter_wave(deg: f64) -> Mat2 {
    retarder(deg, c(0.0, 1.0))
}

/// Two-qubit S-wave plate.
///
/// Only the column for the `|V⟩|h⟩` laser input matters: it is
/// `cos γ |φ+⟩ + sin γ |ψ−⟩` for plate angle `γ`, so 0° yields `|φ+⟩` and 90°
/// yields `|ψ−⟩`. The remaining columns complete a real orthogonal matrix.
fn s_wave_plate(deg: f64) -> Mat4 {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let (s, co) = deg.to_radians().sin_cos();
    let columns = [
        [co, s, s, -co],
        [-s, co, co, s],
        [co, s, -s, co],
        [-s, co, -co, -s],
    ];
    Mat4::from_fn(|r, col| c(h * columns[col][r], 0.0))
}

/// 4×4 unitary of a unitary-type element.
pub fn element_unitary(e: &Element) -> Result<Mat4> {
    e.validate()?;
    let id = pauli(0);
    Ok(match *e {
        Element::Hwp { angle } => kron(&half_wave(angle), &id),
        Element::Qwp { angle } => kron(&quarter_wave(angle), &id),
        Element::Dove { angle } => kron(&id, &half_wave(angle)),
        Element::ModeConverter => kron(&id, &quarter_wave(90.0)),
        Element::Swp { angle } => s_wave_plate(angle),
        Element::Mask { .. } | Element::NeutralFilter { .. } => {
            return Err(Error::Type(format!("{e:?} is not a unitary element")))
        }
    })
}

/// One laser path: source power, element chain and input state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub source_weight: f64,
    pub elements: Vec<Element>,
    pub input: PureState,
}

/// Incoherent combination of independent beams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub branches: Vec<Branch>,
}

impl Circuit {
    pub fn validate(&self) -> Result<()> {
        if self.branches.is_empty() {
            return validation("circuit has no branches");
        }
        for b in &self.branches {
            if !(b.source_weight.is_finite() && b.source_weight >= 0.0) {
                return validation(format!(
                    "source weight {} must be nonnegative",
                    b.source_weight
                ));
            }
            for e in &b.elements {
                e.validate()?;
            }
        }
        Ok(())
    }
}

/// Parametric bench imperfections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Standard deviation of the zero-mean angle error per element, degrees.
    pub angle_jitter_sigma: f64,
    /// Depolarizing strength on the mode factor after each astigmatic element.
    pub depolarizing_strength: f64,
    /// Relative standard deviation of each CCD reading.
    pub intensity_noise_rel: f64,
    /// Additive offset on every CCD output.
    pub background_offset: f64,
    pub seed: u64,
}

impl NoiseConfig {
    /// No imperfections at all.
    pub fn ideal() -> Self {
        Self {
            angle_jitter_sigma: 0.0,
            depolarizing_strength: 0.0,
            intensity_noise_rel: 0.0,
            background_offset: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("angle_jitter_sigma", self.angle_jitter_sigma),
            ("intensity_noise_rel", self.intensity_noise_rel),
            ("background_offset", self.background_offset),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return validation(format!("{name} = {v} must be nonnegative"));
            }
        }
        check_unit_interval("depolarizing_strength", self.depolarizing_strength)
    }
}

impl Default for NoiseConfig {
    /// Calibrated so that simulated ρ1 tomography has mean fidelity ≈ 0.96
    /// and a discord fit of the reconstructions implies ≈ 0.945. The budget
    /// is dominated by the background offset, which acts like an identity
    /// admixture; anisotropic terms are kept small because discord reacts to
    /// them far more strongly than fidelity does.
    fn default() -> Self {
        Self {
            angle_jitter_sigma: 0.3,
            depolarizing_strength: 0.005,
            intensity_noise_rel: 0.005,
            background_offset: 0.018,
            seed: 2024,
        }
    }
}

fn replace_mode(rho: &Mat4, mode: ModeLabel) -> Mat4 {
    let pol = Mat2::from_fn(|r, col| rho[(2 * r, 2 * col)] + rho[(2 * r + 1, 2 * col + 1)]);
    let v = mode.vector();
    let proj = Mat2::from_fn(|r, col| v[r] * v[col].conj());
    kron(&pol, &proj)
}

fn depolarize_mode(rho: &Mat4, strength: f64) -> Mat4 {
    if strength == 0.0 {
        return *rho;
    }
    let pol = Mat2::from_fn(|r, col| rho[(2 * r, 2 * col)] + rho[(2 * r + 1, 2 * col + 1)]);
    rho * c(1.0 - strength, 0.0) + kron(&pol, &pauli(0)) * c(strength / 2.0, 0.0)
}

/// Propagates `rho` through a chain. Returns the intensity factor from
/// neutral filters and the output state (unnormalized only through filters).
fn propagate(rho: Mat4, elements: &[Element], depolarizing_strength: f64) -> Result<(f64, Mat4)> {
    let mut weight = 1.0;
    let mut m = rho;
    for e in elements {
        match *e {
            Element::NeutralFilter { transmittance } => weight *= transmittance,
            Element::Mask { mode } => m = replace_mode(&m, mode),
            _ => {
                let u = element_unitary(e)?;
                m = u * m * u.adjoint();
                if e.is_astigmatic() {
                    m = depolarize_mode(&m, depolarizing_strength);
                }
            }
        }
    }
    Ok((weight, (m + m.adjoint()) * c(0.5, 0.0)))
}

fn jittered<R: Rng + ?Sized>(
    elements: &[Element],
    sigma: f64,
    rng: &mut R,
) -> Result<Vec<Element>> {
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Validation(e.to_string()))?;
    Ok(elements
        .iter()
        .map(|e| match e.angle() {
            Some(_) => e.with_angle_offset(normal.sample(rng)),
            None => *e,
        })
        .collect())
}

fn combine(parts: Vec<(f64, Mat4)>) -> Result<DensityOperator> {
    let total: f64 = parts.iter().map(|(w, _)| w).sum();
    if total.is_nan() || total <= 0.0 {
        return validation("all circuit branch weights are zero");
    }
    let mut m = Mat4::zeros();
    for (w, rho) in parts {
        m += rho * c(w, 0.0);
    }
    DensityOperator::new(m / c(total, 0.0))
}

fn branch_input(b: &Branch) -> Mat4 {
    DensityOperator::from_pure(&b.input).matrix().to_owned()
}

/// Noiseless output `Σ w_k ρ_k / Σ w_k`.
pub fn run_circuit(circuit: &Circuit) -> Result<DensityOperator> {
    circuit.validate()?;
    let parts = circuit
        .branches
        .iter()
        .map(|b| {
            let (t, m) = propagate(branch_input(b), &b.elements, 0.0)?;
            Ok((b.source_weight * t, m))
        })
        .collect::<Result<Vec<_>>>()?;
    combine(parts)
}

/// Output with angle jitter and astigmatic depolarization drawn from `rng`.
pub fn run_circuit_noisy<R: Rng + ?Sized>(
    circuit: &Circuit,
    noise: &NoiseConfig,
    rng: &mut R,
) -> Result<DensityOperator> {
    circuit.validate()?;
    noise.validate()?;
    let mut parts = Vec::with_capacity(circuit.branches.len());
    for b in &circuit.branches {
        let elements = jittered(&b.elements, noise.angle_jitter_sigma, rng)?;
        let (t, m) = propagate(branch_input(b), &elements, noise.depolarizing_strength)?;
        parts.push((b.source_weight * t, m));
    }
    combine(parts)
}

/// Vertically polarized laser; the Gaussian profile is represented by the
/// `h` reference mode.
pub fn laser_input() -> PureState {
    PureState::basis(2)
}

fn branch(elements: Vec<Element>) -> Branch {
    Branch {
        source_weight: 1.0,
        elements,
        input: laser_input(),
    }
}

fn nf(transmittance: f64) -> Element {
    Element::NeutralFilter { transmittance }
}

/// Preparation circuit for a family member.
///
/// Every laser has unit power; neutral filters set the mixing weights.
pub fn prepare_family_circuit(id: FamilyId, weight: f64) -> Result<Circuit> {
    check_unit_interval("c", weight)?;
    let swp = |angle| Element::Swp { angle };
    let mask = |mode| Element::Mask { mode };
    let hwp45 = Element::Hwp { angle: 45.0 };
    let branches = match id {
        FamilyId::Rho1 => vec![
            branch(vec![swp(0.0), nf(weight)]),
            branch(vec![mask(ModeLabel::V), nf(1.0 - weight)]),
        ],
        FamilyId::Rho2 => vec![
            branch(vec![swp(0.0), nf(weight)]),
            branch(vec![nf(1.0 - weight), swp(90.0)]),
        ],
        FamilyId::Rho3 => vec![
            branch(vec![
                hwp45,
                mask(ModeLabel::H),
                nf(2.0 * (1.0 - weight) / 3.0),
            ]),
            branch(vec![mask(ModeLabel::V), nf(2.0 * weight / 3.0)]),
            branch(vec![swp(90.0), nf(1.0 / 3.0)]),
        ],
        FamilyId::Werner => {
            let q = (1.0 - weight) / 4.0;
            vec![
                branch(vec![swp(90.0), nf(weight)]),
                branch(vec![hwp45, mask(ModeLabel::H), nf(q)]),
                branch(vec![hwp45, mask(ModeLabel::V), nf(q)]),
                branch(vec![mask(ModeLabel::H), nf(q)]),
                branch(vec![mask(ModeLabel::V), nf(q)]),
            ]
        }
    };
    Ok(Circuit { branches })
}

/// Elements that rotate the requested eigenbases onto `{H, V} ⊗ {h, v}`.
pub fn analyzer_chain(setting: MeasurementSetting) -> Vec<Element> {
    let mut chain = Vec::new();
    match setting.pol_basis {
        1 => chain.push(Element::Hwp { angle: 22.5 }),
        2 => chain.extend([Element::Qwp { angle: 90.0 }, Element::Hwp { angle: 22.5 }]),
        _ => {}
    }
    match setting.mode_basis {
        1 => chain.push(Element::Dove { angle: 22.5 }),
        2 => chain.extend([Element::ModeConverter, Element::Dove { angle: 22.5 }]),
        _ => {}
    }
    chain
}

fn computational_intensities(m: &Mat4, total_intensity: f64) -> [f64; 4] {
    std::array::from_fn(|k| (m[(k, k)].re * total_intensity).max(0.0))
}

fn check_total(total_intensity: f64) -> Result<()> {
    if !(total_intensity.is_finite() && total_intensity > 0.0) {
        return validation(format!(
            "total intensity {total_intensity} must be positive"
        ));
    }
    Ok(())
}

/// Noiseless CCD readings for one setting.
pub fn simulate_ccd(
    rho: &DensityOperator,
    setting: MeasurementSetting,
    total_intensity: f64,
) -> Result<IntensityRecord> {
    setting.validate()?;
    check_total(total_intensity)?;
    let (_, m) = propagate(*rho.matrix(), &analyzer_chain(setting), 0.0)?;
    Ok(IntensityRecord {
        setting,
        intensities: computational_intensities(&m, total_intensity),
    })
}

/// CCD readings with analyzer imperfections and detector noise.
pub fn simulate_ccd_noisy<R: Rng + ?Sized>(
    rho: &DensityOperator,
    setting: MeasurementSetting,
    total_intensity: f64,
    noise: &NoiseConfig,
    rng: &mut R,
) -> Result<IntensityRecord> {
    setting.validate()?;
    check_total(total_intensity)?;
    noise.validate()?;
    let chain = jittered(&analyzer_chain(setting), noise.angle_jitter_sigma, rng)?;
    let (_, m) = propagate(*rho.matrix(), &chain, noise.depolarizing_strength)?;
    let detector = Normal::new(0.0, noise.intensity_noise_rel)
        .map_err(|e| Error::Validation(e.to_string()))?;
    let clean = computational_intensities(&m, total_intensity);
    let intensities = clean.map(|i| {
        let fluctuation = detector.sample(rng);
        (i * (1.0 + fluctuation) + noise.background_offset * total_intensity).max(0.0)
    });
    Ok(IntensityRecord {
        setting,
        intensities,
    })
}

/// All nine records, noiseless.
pub fn simulate_tomography(
    rho: &DensityOperator,
    total_intensity: f64,
) -> Result<Vec<IntensityRecord>> {
    MeasurementSetting::all()
        .into_iter()
        .map(|s| simulate_ccd(rho, s, total_intensity))
        .collect()
}

/// All nine records with noise, settings in [`MeasurementSetting::all`] order.
pub fn simulate_tomography_noisy<R: Rng + ?Sized>(
    rho: &DensityOperator,
    total_intensity: f64,
    noise: &NoiseConfig,
    rng: &mut R,
) -> Result<Vec<IntensityRecord>> {
    MeasurementSetting::all()
        .into_iter()
        .map(|s| simulate_ccd_noisy(rho, s, total_intensity, noise, rng))
        .collect()
}

/// Direct projector probabilities, kept for cross-checking the analyzer.
pub fn direct_probabilities(rho: &DensityOperator, setting: MeasurementSetting) -> [f64; 4] {
    forward_probabilities(rho, setting)
}
