//! zCDP ↔ (ε, δ) accounting and sensitivity models.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::DpError;

/// Converts a ρ-zCDP guarantee into (ε, δ)-DP: `ε = ρ + 2√(ρ ln(1/δ))`.
pub fn eps_from_rho(rho: f64, delta: f64) -> Result<f64, DpError> {
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(DpError::InvalidRho(rho));
    }
    check_delta(delta)?;
    Ok(rho + 2.0 * (rho * (1.0 / delta).ln()).sqrt())
}

/// Inverse of [`eps_from_rho`]: the unique ρ > 0 meeting the target ε.
pub fn rho_from_eps_delta(epsilon: f64, delta: f64) -> Result<f64, DpError> {
    check_epsilon(epsilon)?;
    check_delta(delta)?;
    let log_inv = (1.0 / delta).ln();
    // (√(L+ε) − √L)² rewritten to avoid cancellation.
    let denom = (log_inv + epsilon).sqrt() + log_inv.sqrt();
    Ok((epsilon / denom).powi(2))
}

/// Threshold below which the stability histogram zeroes noisy counts:
/// `t = 1 + 2 ln(2/δ) / ε`.
pub fn stability_threshold(epsilon: f64, delta: f64) -> Result<f64, DpError> {
    check_epsilon(epsilon)?;
    check_delta(delta)?;
    Ok(1.0 + 2.0 * (2.0 / delta).ln() / epsilon)
}

fn check_epsilon(epsilon: f64) -> Result<(), DpError> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(DpError::InvalidEpsilon(epsilon))
    }
}

fn check_delta(delta: f64) -> Result<(), DpError> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(DpError::InvalidDelta(delta))
    }
}

/// Which side of the budget the caller supplied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetSource {
    Rho,
    EpsilonDelta,
}

/// A privacy budget holding both the zCDP ρ and the (ε, δ) it converts to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    rho: f64,
    epsilon: f64,
    delta: f64,
    source: BudgetSource,
}

impl PrivacyBudget {
    pub fn from_rho(rho: f64, delta: f64) -> Result<Self, DpError> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(DpError::InvalidRho(rho));
        }
        Ok(Self {
            rho,
            epsilon: eps_from_rho(rho, delta)?,
            delta,
            source: BudgetSource::Rho,
        })
    }

    pub fn from_epsilon_delta(epsilon: f64, delta: f64) -> Result<Self, DpError> {
        Ok(Self {
            rho: rho_from_eps_delta(epsilon, delta)?,
            epsilon,
            delta,
            source: BudgetSource::EpsilonDelta,
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn source(&self) -> BudgetSource {
        self.source
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PrivacyType {
    /// Neighbors differ by substituting one user.
    #[default]
    Bounded,
    /// Neighbors differ by adding or removing one user.
    Unbounded,
}

impl fmt::Display for PrivacyType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrivacyType::Bounded => f.write_str("bounded"),
            PrivacyType::Unbounded => f.write_str("unbounded"),
        }
    }
}

/// Neighboring relation plus per-user contribution bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensitivityModel {
    #[serde(rename = "type")]
    pub privacy: PrivacyType,
    /// Maximum number of trips a single user contributes.
    pub m: u32,
    /// Whether a user's trips are pairwise distinct O/D pairs.
    pub distinct: bool,
}

impl Default for SensitivityModel {
    fn default() -> Self {
        Self::bounded_single_trip()
    }
}

impl SensitivityModel {
    pub fn new(privacy: PrivacyType, m: u32, distinct: bool) -> Result<Self, DpError> {
        if m == 0 {
            return Err(DpError::InvalidContribution);
        }
        Ok(Self {
            privacy,
            m,
            distinct,
        })
    }

    /// One trip per user under bounded privacy, the setting of the experiments.
    pub fn bounded_single_trip() -> Self {
        Self {
            privacy: PrivacyType::Bounded,
            m: 1,
            distinct: true,
        }
    }

    /// Squared ℓ2 global sensitivity of one tree level.
    pub fn gs2_squared(&self) -> f64 {
        let m = f64::from(self.m);
        match (self.privacy, self.distinct) {
            (PrivacyType::Bounded, true) => 2.0 * m,
            (PrivacyType::Unbounded, true) => m,
            (PrivacyType::Bounded, false) => 2.0 * m * m,
            (PrivacyType::Unbounded, false) => m * m,
        }
    }

    pub fn gs2(&self) -> f64 {
        self.gs2_squared().sqrt()
    }

    /// ℓ1 sensitivity used by the stability histogram; only bounded `m = 1`.
    pub fn stability_gs1(&self) -> Result<f64, DpError> {
        if self.privacy == PrivacyType::Bounded && self.m == 1 {
            Ok(2.0)
        } else {
            Err(DpError::UnsupportedSensitivity(*self))
        }
    }
}

/// Per-level variance `GS₂² · T / (2ρ)`, so `T` levels compose to exactly ρ.
pub fn per_level_sigma2(
    budget: &PrivacyBudget,
    sensitivity: &SensitivityModel,
    depth: usize,
) -> Result<f64, DpError> {
    if depth == 0 {
        return Err(DpError::InvalidDepth);
    }
    Ok(sensitivity.gs2_squared() * depth as f64 / (2.0 * budget.rho()))
}

/// Variance used for the root and every level under unbounded privacy.
///
/// The root count changes by `m` between neighbors, so the root costs
/// `m²/(2σ²)` on top of the `T` levels; `σ² = (m² + T·GS₂²) / (2ρ)` makes
/// the whole release consume exactly ρ.
pub fn unbounded_sigma2(
    budget: &PrivacyBudget,
    sensitivity: &SensitivityModel,
    depth: usize,
) -> Result<f64, DpError> {
    if depth == 0 {
        return Err(DpError::InvalidDepth);
    }
    let m = f64::from(sensitivity.m);
    Ok((m * m + depth as f64 * sensitivity.gs2_squared()) / (2.0 * budget.rho()))
}

/// Tracks uniform per-level spending of a zCDP budget in whole level units.
#[derive(Debug, Clone)]
pub struct LevelAccountant {
    total_rho: f64,
    levels: u32,
    charged: u32,
}

impl LevelAccountant {
    pub fn new(total_rho: f64, levels: u32) -> Result<Self, DpError> {
        if levels == 0 {
            return Err(DpError::InvalidDepth);
        }
        Ok(Self {
            total_rho,
            levels,
            charged: 0,
        })
    }

    /// ρ charged per level.
    pub fn per_level_rho(&self) -> f64 {
        self.total_rho / f64::from(self.levels)
    }

    pub fn charge_level(&mut self) -> Result<(), DpError> {
        if self.charged == self.levels {
            return Err(DpError::BudgetExhausted);
        }
        self.charged += 1;
        Ok(())
    }

    /// Spent share of the budget as a reduced fraction `charged / levels`.
    pub fn spent_fraction(&self) -> (u32, u32) {
        let g = gcd(self.charged, self.levels);
        (self.charged / g, self.levels / g)
    }

    pub fn spent_rho(&self) -> f64 {
        match self.spent_fraction() {
            (0, _) => 0.0,
            (n, d) if n == d => self.total_rho,
            (n, d) => self.total_rho * f64::from(n) / f64::from(d),
        }
    }
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}
