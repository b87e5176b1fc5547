//! 36-intensity spin-orbit tomography.
//!
//! Each of the nine settings picks an eigenbasis for polarization (`D/A`,
//! `R/L` or `H/V`) and one for the mode (`d/a`, `r/l`, `h/v`) and records the
//! four joint outputs `++, +−, −+, −−`. Normalized intensities give the
//! Stokes tensor, which is inverted linearly and then clipped back onto the
//! set of physical states.

use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::qstate::{
    c, fidelity, hermitian_eigenvalues, kron, pauli, pauli_assemble, DensityOperator, Mat2, Mat4,
    RawDensity, StokesTensor,
};

/// Pauli indices of the measured polarization and mode eigenbases (1..=3).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MeasurementSetting {
    pub pol_basis: u8,
    pub mode_basis: u8,
}

impl MeasurementSetting {
    pub fn new(pol_basis: u8, mode_basis: u8) -> Result<Self> {
        let s = Self {
            pol_basis,
            mode_basis,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.pol_basis) || !(1..=3).contains(&self.mode_basis) {
            return validation(format!(
                "measurement setting ({}, {}) outside 1..=3",
                self.pol_basis, self.mode_basis
            ));
        }
        Ok(())
    }

    /// All nine settings, polarization index major.
    pub fn all() -> [MeasurementSetting; 9] {
        std::array::from_fn(|k| Self {
            pol_basis: (k / 3 + 1) as u8,
            mode_basis: (k % 3 + 1) as u8,
        })
    }

    /// The computational setting `{H, V} ⊗ {h, v}`.
    pub fn computational() -> Self {
        Self {
            pol_basis: 3,
            mode_basis: 3,
        }
    }

    fn slot(&self) -> usize {
        (self.pol_basis as usize - 1) * 3 + (self.mode_basis as usize - 1)
    }
}

/// Four simulated or measured CCD intensities for one setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityRecord {
    #[serde(flatten)]
    pub setting: MeasurementSetting,
    /// Outputs `++, +−, −+, −−` in arbitrary units.
    pub intensities: [f64; 4],
}

impl IntensityRecord {
    pub fn validate(&self) -> Result<()> {
        self.setting.validate()?;
        if self
            .intensities
            .iter()
            .any(|i| !(i.is_finite() && *i >= 0.0))
        {
            return validation(format!(
                "intensities {:?} must be finite and nonnegative",
                self.intensities
            ));
        }
        if self.total() <= 0.0 {
            return validation(format!(
                "record ({}, {}) has zero total intensity",
                self.setting.pol_basis, self.setting.mode_basis
            ));
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.intensities.iter().sum()
    }

    /// `P = I / I_T`.
    pub fn probabilities(&self) -> [f64; 4] {
        let total = self.total();
        self.intensities.map(|i| i / total)
    }
}

fn eigenprojector(pauli_index: u8, sign: f64) -> Mat2 {
    (pauli(0) + pauli(pauli_index as usize) * c(sign, 0.0)) * c(0.5, 0.0)
}

/// Probabilities of the four joint outcomes `++, +−, −+, −−`.
pub fn forward_probabilities(rho: &DensityOperator, setting: MeasurementSetting) -> [f64; 4] {
    let signs = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];
    signs.map(|(sp, sm)| {
        let proj = kron(
            &eigenprojector(setting.pol_basis, sp),
            &eigenprojector(setting.mode_basis, sm),
        );
        (rho.matrix() * proj).trace().re
    })
}

/// Source of the single-qubit marginals `s[i][0]` and `s[0][j]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarginalMode {
    /// `s[i][0]` from setting `(i, 3)`, `s[0][j]` from `(3, j)`.
    #[default]
    Fixed,
    /// Average over the three settings sharing the basis.
    Averaged,
}

fn ordered_records(records: &[IntensityRecord]) -> Result<[&IntensityRecord; 9]> {
    if records.len() != 9 {
        return validation(format!("expected 9 records, got {}", records.len()));
    }
    let mut slots: [Option<&IntensityRecord>; 9] = [None; 9];
    for r in records {
        r.validate()?;
        let slot = &mut slots[r.setting.slot()];
        if slot.is_some() {
            return validation(format!(
                "duplicate setting ({}, {})",
                r.setting.pol_basis, r.setting.mode_basis
            ));
        }
        *slot = Some(r);
    }
    // nine records, no duplicates: every slot is filled
    Ok(slots.map(|s| s.expect("all settings present")))
}

pub fn stokes_from_records(records: &[IntensityRecord]) -> Result<StokesTensor> {
    stokes_from_records_with(records, MarginalMode::Fixed)
}

#[allow(clippy::needless_range_loop)]
pub fn stokes_from_records_with(
    records: &[IntensityRecord],
    marginals: MarginalMode,
) -> Result<StokesTensor> {
    let ordered = ordered_records(records)?;
    let probs = |i: usize, j: usize| ordered[(i - 1) * 3 + (j - 1)].probabilities();
    let correlation = |p: [f64; 4]| p[0] - p[1] - p[2] + p[3];
    let pol_marginal = |p: [f64; 4]| p[0] + p[1] - p[2] - p[3];
    let mode_marginal = |p: [f64; 4]| p[0] - p[1] + p[2] - p[3];

    let mut s = [[0.0; 4]; 4];
    s[0][0] = 1.0;
    for i in 1..4 {
        for j in 1..4 {
            s[i][j] = correlation(probs(i, j));
        }
    }
    for k in 1..4 {
        match marginals {
            MarginalMode::Fixed => {
                s[k][0] = pol_marginal(probs(k, 3));
                s[0][k] = mode_marginal(probs(3, k));
            }
            MarginalMode::Averaged => {
                s[k][0] = (1..4).map(|j| pol_marginal(probs(k, j))).sum::<f64>() / 3.0;
                s[0][k] = (1..4).map(|i| mode_marginal(probs(i, k))).sum::<f64>() / 3.0;
            }
        }
    }
    Ok(StokesTensor { s })
}

/// Outcome of a reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyReport {
    /// Linear inversion, Hermitian with unit trace but possibly not PSD.
    pub rho_raw: RawDensity,
    pub rho_physical: DensityOperator,
    pub fidelity_vs_target: Option<f64>,
    /// Sum of the magnitudes of the clipped negative eigenvalues.
    pub negative_eigenvalue_mass: f64,
}

pub fn reconstruct(
    records: &[IntensityRecord],
    target: Option<&DensityOperator>,
) -> Result<TomographyReport> {
    reconstruct_with(records, target, MarginalMode::Fixed)
}

pub fn reconstruct_with(
    records: &[IntensityRecord],
    target: Option<&DensityOperator>,
    marginals: MarginalMode,
) -> Result<TomographyReport> {
    let stokes = stokes_from_records_with(records, marginals)?;
    let rho_raw = pauli_assemble(&stokes);
    let (rho_physical, negative_eigenvalue_mass) = clip_spectrum(&rho_raw);
    let fidelity_vs_target = target.map(|t| fidelity(&rho_physical, t));
    Ok(TomographyReport {
        rho_raw,
        rho_physical,
        fidelity_vs_target,
        negative_eigenvalue_mass,
    })
}

/// Nearest physical state by eigenvalue clipping and trace renormalization.
/// PSD inputs are returned unchanged.
pub fn project_physical(raw: &RawDensity) -> DensityOperator {
    clip_spectrum(raw).0
}

fn clip_spectrum(raw: &RawDensity) -> (DensityOperator, f64) {
    let m = (raw.matrix() + raw.matrix().adjoint()) * c(0.5, 0.0);
    if hermitian_eigenvalues(&m)[0] >= 0.0 {
        let tr = m.trace().re;
        return (DensityOperator::from_matrix_unchecked(m / c(tr, 0.0)), 0.0);
    }
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut negative_mass = 0.0;
    let mut kept = 0.0;
    let mut out = Mat4::zeros();
    for k in 0..4 {
        let lambda = eig.eigenvalues[k];
        if lambda <= 0.0 {
            negative_mass -= lambda;
            continue;
        }
        kept += lambda;
        let v = eig.eigenvectors.column(k);
        out += (v * v.adjoint()) * c(lambda, 0.0);
    }
    let out = out / c(kept, 0.0);
    let out = (out + out.adjoint()) * c(0.5, 0.0);
    (DensityOperator::from_matrix_unchecked(out), negative_mass)
}

/// Noiseless records for all nine settings straight from the projectors.
pub fn ideal_records(rho: &DensityOperator, total_intensity: f64) -> Vec<IntensityRecord> {
    MeasurementSetting::all()
        .into_iter()
        .map(|setting| IntensityRecord {
            setting,
            intensities: forward_probabilities(rho, setting)
                .map(|p| (p * total_intensity).max(0.0)),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{max_abs, PureState};
    use crate::states::{bell_density, family, BellKind, FamilyId};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn assert_probs(p: [f64; 4], expect: [f64; 4]) {
        for k in 0..4 {
            assert_abs_diff_eq!(p[k], expect[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn settings_enumerate_nine_distinct() {
        let all = MeasurementSetting::all();
        let mut sorted = all.to_vec();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 9);
        assert!(MeasurementSetting::new(0, 2).is_err());
        assert!(MeasurementSetting::new(3, 4).is_err());
    }

    #[test]
    fn forward_examples() {
        let hh = DensityOperator::from_pure(&PureState::basis(0));
        assert_probs(
            forward_probabilities(&hh, MeasurementSetting::computational()),
            [1.0, 0.0, 0.0, 0.0],
        );
        for s in MeasurementSetting::all() {
            assert_probs(
                forward_probabilities(&DensityOperator::maximally_mixed(), s),
                [0.25; 4],
            );
        }
        let bell = bell_density(BellKind::PhiPlus);
        assert_probs(
            forward_probabilities(&bell, MeasurementSetting::new(2, 2).unwrap()),
            [0.0, 0.5, 0.5, 0.0],
        );
    }

    #[test]
    fn stokes_examples() {
        let s =
            stokes_from_records(&ideal_records(&DensityOperator::maximally_mixed(), 1.0)).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let v = if i == 0 && j == 0 { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(s.s[i][j], v, epsilon = 1e-12);
            }
        }
        let s = stokes_from_records(&ideal_records(&bell_density(BellKind::PhiPlus), 1.0)).unwrap();
        assert_abs_diff_eq!(s.s[1][1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.s[2][2], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.s[3][3], 1.0, epsilon = 1e-12);

        // |Vv>: the Vv output carries all the light in the computational setting
        let vv = family(FamilyId::Rho1, 0.0).unwrap();
        let rec = ideal_records(&vv, 1.0);
        let comp = rec
            .iter()
            .find(|r| r.setting == MeasurementSetting::computational())
            .unwrap();
        assert_probs(comp.probabilities(), [0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn record_validation() {
        let rho = DensityOperator::maximally_mixed();
        let mut rec = ideal_records(&rho, 1.0);
        rec[4].intensities = [0.0; 4];
        assert!(stokes_from_records(&rec).is_err());

        let mut rec = ideal_records(&rho, 1.0);
        rec[3].setting = rec[2].setting;
        assert!(stokes_from_records(&rec).is_err());

        let rec = ideal_records(&rho, 1.0);
        assert!(stokes_from_records(&rec[..8]).is_err());

        let mut rec = ideal_records(&rho, 1.0);
        rec[0].intensities[1] = -0.1;
        assert!(reconstruct(&rec, None).is_err());
    }

    #[test]
    fn noiseless_reconstruction_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let rho = DensityOperator::random(&mut rng);
            let report = reconstruct(&ideal_records(&rho, 3.0), Some(&rho)).unwrap();
            assert!(report.fidelity_vs_target.unwrap() >= 1.0 - 1e-9);
            assert!(report.rho_physical.max_abs_diff(&rho) < 1e-10);
        }
    }

    #[test]
    fn perturbed_record_still_yields_physical_state() {
        let rho = bell_density(BellKind::PhiPlus);
        let mut rec = ideal_records(&rho, 1.0);
        rec[4].intensities[1] *= 1.05;
        let report = reconstruct(&rec, Some(&rho)).unwrap();
        assert!(DensityOperator::new(*report.rho_physical.matrix()).is_ok());
        assert!(report.negative_eigenvalue_mass > 0.0);
        assert!(report.fidelity_vs_target.unwrap() < 1.0);
    }

    #[test]
    fn projection_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho = DensityOperator::random(&mut rng);
        let raw = RawDensity::from(rho.clone());
        assert!(project_physical(&raw).max_abs_diff(&rho) < 1e-12);

        let diag =
            |d: [f64; 4]| Mat4::from_diagonal(&nalgebra::Vector4::from_fn(|k, _| c(d[k], 0.0)));
        let raw = RawDensity::new(diag([1.1, 0.2, -0.2, -0.1])).unwrap();
        let projected = project_physical(&raw);
        let expect = diag([1.1 / 1.3, 0.2 / 1.3, 0.0, 0.0]);
        assert!(max_abs(&(projected.matrix() - expect)) < 1e-12);
        let (_, mass) = clip_spectrum(&raw);
        assert_abs_diff_eq!(mass, 0.3, epsilon = 1e-12);
    }

    #[test]
    fn marginal_modes_agree_on_ideal_data() {
        let rho = family(FamilyId::Rho3, 0.3).unwrap();
        let rec = ideal_records(&rho, 1.0);
        let a = stokes_from_records_with(&rec, MarginalMode::Fixed).unwrap();
        let b = stokes_from_records_with(&rec, MarginalMode::Averaged).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_abs_diff_eq!(a.s[i][j], b.s[i][j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn records_json_schema() {
        let rec = ideal_records(&DensityOperator::maximally_mixed(), 1.0);
        let v = serde_json::to_value(&rec).unwrap();
        assert_eq!(v.as_array().unwrap().len(), 9);
        assert_eq!(v[0]["pol_basis"], 1);
        assert_eq!(v[0]["mode_basis"], 1);
        assert_eq!(v[0]["intensities"].as_array().unwrap().len(), 4);
        let back: Vec<IntensityRecord> = serde_json::from_value(v).unwrap();
        assert_eq!(back, rec);
    }

    fn random_state() -> impl Strategy<Value = DensityOperator> {
        (any::<u64>(), any::<bool>()).prop_map(|(seed, pure)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            if pure {
                DensityOperator::from_pure(&PureState::random(&mut rng))
            } else {
                DensityOperator::random(&mut rng)
            }
        })
    }

    proptest! {
        #[test]
        fn probabilities_sum_to_one(rho in random_state(), k in 0usize..9) {
            let p = forward_probabilities(&rho, MeasurementSetting::all()[k]);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn reconstruction_is_scale_invariant(rho in random_state(), scales in proptest::collection::vec(0.01..1e4f64, 9)) {
            let rec = ideal_records(&rho, 1.0);
            let scaled: Vec<_> = rec.iter().zip(&scales).map(|(r, s)| IntensityRecord {
                setting: r.setting,
                intensities: r.intensities.map(|i| i * s),
            }).collect();
            let a = reconstruct(&rec, None).unwrap();
            let b = reconstruct(&scaled, None).unwrap();
            prop_assert!(a.rho_physical.max_abs_diff(&b.rho_physical) < 1e-12);
        }

        #[test]
        fn projection_is_idempotent(rho in random_state(), noise in proptest::collection::vec(-0.05..0.05f64, 36)) {
            let mut rec = ideal_records(&rho, 1.0);
            for (k, r) in rec.iter_mut().enumerate() {
                for o in 0..4 {
                    r.intensities[o] = (r.intensities[o] + noise[4 * k + o]).max(0.0) + 1e-3;
                }
            }
            let once = reconstruct(&rec, None).unwrap().rho_physical;
            let twice = project_physical(&RawDensity::from(once.clone()));
            prop_assert!(once.max_abs_diff(&twice) < 1e-12);
            prop_assert!(DensityOperator::new(*once.matrix()).is_ok());
        }
    }
}
