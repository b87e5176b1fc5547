//! State families, Bell-like modes and the identity-admixture perturbation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::qstate::{c, DensityOperator, Mat4, PureState};

const S: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// The four maximally nonseparable spin-orbit modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BellKind {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

pub fn bell_like(kind: BellKind) -> PureState {
    let (o, z) = (c(S, 0.0), c(0.0, 0.0));
    let amps = match kind {
        BellKind::PhiPlus => [o, z, z, o],
        BellKind::PhiMinus => [o, z, z, -o],
        BellKind::PsiPlus => [z, o, o, z],
        BellKind::PsiMinus => [z, o, -o, z],
    };
    PureState::new(amps).expect("Bell amplitudes are normalized")
}

pub fn bell_density(kind: BellKind) -> DensityOperator {
    DensityOperator::from_pure(&bell_like(kind))
}

/// The studied families of mixed spin-orbit modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyId {
    /// `c|φ+⟩⟨φ+| + (1−c)|Vv⟩⟨Vv|`
    Rho1,
    /// `c|φ+⟩⟨φ+| + (1−c)|ψ−⟩⟨ψ−|`
    Rho2,
    /// `(2c/3)|Vv⟩⟨Vv| + (2(1−c)/3)|Hh⟩⟨Hh| + (1/3)|ψ−⟩⟨ψ−|`
    Rho3,
    /// `c|ψ−⟩⟨ψ−| + (1−c)I/4`
    Werner,
}

impl FamilyId {
    pub const ALL: [FamilyId; 4] = [
        FamilyId::Rho1,
        FamilyId::Rho2,
        FamilyId::Rho3,
        FamilyId::Werner,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FamilyId::Rho1 => "rho1",
            FamilyId::Rho2 => "rho2",
            FamilyId::Rho3 => "rho3",
            FamilyId::Werner => "werner",
        }
    }
}

impl fmt::Display for FamilyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FamilyId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rho1" => Ok(FamilyId::Rho1),
            "rho2" => Ok(FamilyId::Rho2),
            "rho3" => Ok(FamilyId::Rho3),
            "werner" => Ok(FamilyId::Werner),
            other => validation(format!("unknown family '{other}'")),
        }
    }
}

pub(crate) fn check_unit_interval(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        validation(format!("{name} = {x} outside [0, 1]"))
    }
}

/// Incoherent mixture of pure branches; weights sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    branches: Vec<(f64, PureState)>,
}

impl MixtureSpec {
    pub fn new(branches: Vec<(f64, PureState)>) -> Result<Self> {
        if branches.is_empty() {
            return validation("mixture has no branches");
        }
        for &(w, _) in &branches {
            check_unit_interval("branch weight", w)?;
        }
        let total: f64 = branches.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > 1e-10 {
            return validation(format!("branch weights sum to {total}, not 1"));
        }
        Ok(Self { branches })
    }

    pub fn branches(&self) -> &[(f64, PureState)] {
        &self.branches
    }

    pub fn density(&self) -> DensityOperator {
        let mut m = Mat4::zeros();
        for (w, psi) in &self.branches {
            m += DensityOperator::from_pure(psi).matrix() * c(*w, 0.0);
        }
        DensityOperator::from_matrix_unchecked(m)
    }
}

/// Pure-branch decomposition of a family member.
pub fn family_mixture(id: FamilyId, weight: f64) -> Result<MixtureSpec> {
    check_unit_interval("c", weight)?;
    let phi_plus = bell_like(BellKind::PhiPlus);
    let psi_minus = bell_like(BellKind::PsiMinus);
    let basis = PureState::basis;
    let branches = match id {
        FamilyId::Rho1 => vec![(weight, phi_plus), (1.0 - weight, basis(3))],
        FamilyId::Rho2 => vec![(weight, phi_plus), (1.0 - weight, psi_minus)],
        FamilyId::Rho3 => vec![
            (2.0 * weight / 3.0, basis(3)),
            (2.0 * (1.0 - weight) / 3.0, basis(0)),
            (1.0 / 3.0, psi_minus),
        ],
        FamilyId::Werner => {
            let q = (1.0 - weight) / 4.0;
            vec![
                (weight, psi_minus),
                (q, basis(0)),
                (q, basis(1)),
                (q, basis(2)),
                (q, basis(3)),
            ]
        }
    };
    MixtureSpec::new(branches)
}

/// Family member at weight `c ∈ [0, 1]`.
pub fn family(id: FamilyId, weight: f64) -> Result<DensityOperator> {
    Ok(family_mixture(id, weight)?.density())
}

/// `(1−α)ρ + α I/4`.
pub fn perturb(rho: &DensityOperator, alpha: f64) -> Result<DensityOperator> {
    check_unit_interval("alpha", alpha)?;
    let m = rho.matrix() * c(1.0 - alpha, 0.0) + Mat4::identity() * c(alpha / 4.0, 0.0);
    Ok(DensityOperator::from_matrix_unchecked(m))
}

/// True when every entry off the diagonal and anti-diagonal is within `tol`.
pub fn is_x_state(rho: &DensityOperator, tol: f64) -> bool {
    let m = rho.matrix();
    (0..4).all(|r| (0..4).all(|col| r == col || r + col == 3 || m[(r, col)].norm() <= tol))
}
