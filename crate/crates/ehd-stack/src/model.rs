//! Forward performance model for stacked corona-discharge EHD accelerators.
//!
//! A single stage ejects ions from a corona plasma into a drift gap of
//! length `d`. Because the discharge is space-charge limited, the areal
//! force collapses to a closed form in the drift field alone:
//!
//! ```text
//! F0 = (9/8) * beta1 * eps0 * A * E^2
//! ```
//!
//! where `beta1` is an empirical force-transfer loss factor. Stacking `n`
//! stages with an inter-stage spacing of `gamma * d` multiplies force by
//! the stage count (degraded by the inter-stage loss `beta2`) while the
//! occupied height grows as `(n + (n-1) gamma) d`, giving the volumetric
//! force density and its large-`n` limit `beta2 / (1 + gamma)`.
//!
//! Air speeds up through the stack according to simple momentum theory,
//! `F = (1/2) rho A (v_out^2 - v_in^2)`, applied stage by stage; the rising
//! inlet velocity of later stages is what erodes the average thrust
//! efficiency `eta_ave` below the single-stage value `beta1 / (mu E)`.
//!
//! Everything here is a pure function of its inputs in strict SI units.
//! Identical inputs produce bit-identical outputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vacuum permittivity (F/m), CODATA 2018.
pub const VACUUM_PERMITTIVITY_F_PER_M: f64 = 8.854_187_812_8e-12;

/// Default air density (kg/m^3) at roughly room conditions.
pub const DEFAULT_AIR_DENSITY_KG_PER_M3: f64 = 1.20;

/// Default ion mobility in air (m^2/(V s)).
///
/// This is the mobility implied by the fitted effective ion drift speed of
/// 230.5 m/s at a 1 MV/m drift field (see
/// [`crate::calibration::fit_table1_drift_speed`]); it is a calibration
/// output, not a measured gas property, and callers with better knowledge
/// of their working gas should override it.
pub const DEFAULT_ION_MOBILITY_M2_PER_VS: f64 = 2.305e-4;

/// Spacing ratio below which neighboring stages are no longer
/// electrostatically shielded from each other.
pub const SHIELDING_SPACING_RATIO: f64 = 2.0;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidInput(msg()))
    }
}

// ---------- domain types ----------

/// Physical layout of a stacked device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageGeometry {
    /// Ion drift gap `d` (m), emitter to collector.
    pub drift_gap_m: f64,
    /// Inter-stage spacing `gamma` as a multiple of the drift gap
    /// (dimensionless). Two is enough to shield neighboring stages.
    pub spacing_ratio: f64,
    /// Active cross-section area `A` (m^2).
    pub area_m2: f64,
    /// Number of acceleration stages `n`.
    pub stage_count: u32,
}

impl StageGeometry {
    pub fn new(drift_gap_m: f64, spacing_ratio: f64, area_m2: f64, stage_count: u32) -> Self {
        Self {
            drift_gap_m,
            spacing_ratio,
            area_m2,
            stage_count,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(
            self.drift_gap_m.is_finite() && self.drift_gap_m > 0.0,
            || {
                format!(
                    "drift_gap_m must be positive and finite, got {}",
                    self.drift_gap_m
                )
            },
        )?;
        ensure(
            self.spacing_ratio.is_finite() && self.spacing_ratio >= 0.0,
            || {
                format!(
                    "spacing_ratio must be nonnegative and finite, got {}",
                    self.spacing_ratio
                )
            },
        )?;
        ensure(self.area_m2.is_finite() && self.area_m2 > 0.0, || {
            format!("area_m2 must be positive and finite, got {}", self.area_m2)
        })?;
        ensure(self.stage_count >= 1, || {
            "stage_count must be at least 1".to_string()
        })?;
        Ok(())
    }

    /// Total stacked height `(n + (n-1) gamma) d` (m), electrode thickness
    /// neglected.
    pub fn device_height_m(&self) -> f64 {
        let n = f64::from(self.stage_count);
        (n + (n - 1.0) * self.spacing_ratio) * self.drift_gap_m
    }

    /// Warning text when the spacing ratio is below the shielding threshold.
    pub fn shielding_warning(&self) -> Option<String> {
        (self.spacing_ratio < SHIELDING_SPACING_RATIO).then(|| {
            format!(
                "spacing_ratio {} is below {}; neighboring stages are not \
                 electrostatically shielded and the stacked-force scaling may not hold",
                self.spacing_ratio, SHIELDING_SPACING_RATIO
            )
        })
    }
}

/// Working-fluid properties and physical constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidEnvironment {
    /// Neutral air density `rho` (kg/m^3).
    pub air_density_kg_per_m3: f64,
    /// Ion mobility `mu` (m^2/(V s)); the ion drift speed is `mu E`.
    pub ion_mobility_m2_per_vs: f64,
    /// Vacuum permittivity (F/m). Fixed to the CODATA value unless
    /// explicitly overridden.
    pub permittivity_f_per_m: f64,
}

impl Default for FluidEnvironment {
    fn default() -> Self {
        Self {
            air_density_kg_per_m3: DEFAULT_AIR_DENSITY_KG_PER_M3,
            ion_mobility_m2_per_vs: DEFAULT_ION_MOBILITY_M2_PER_VS,
            permittivity_f_per_m: VACUUM_PERMITTIVITY_F_PER_M,
        }
    }
}

impl FluidEnvironment {
    pub fn validate(&self) -> Result<()> {
        ensure(
            self.air_density_kg_per_m3.is_finite() && self.air_density_kg_per_m3 > 0.0,
            || {
                format!(
                    "air_density must be positive and finite, got {}",
                    self.air_density_kg_per_m3
                )
            },
        )?;
        ensure(
            self.ion_mobility_m2_per_vs.is_finite() && self.ion_mobility_m2_per_vs > 0.0,
            || {
                format!(
                    "ion_mobility must be positive and finite, got {}",
                    self.ion_mobility_m2_per_vs
                )
            },
        )?;
        ensure(
            self.permittivity_f_per_m.is_finite() && self.permittivity_f_per_m > 0.0,
            || {
                format!(
                    "permittivity must be positive and finite, got {}",
                    self.permittivity_f_per_m
                )
            },
        )?;
        Ok(())
    }
}

/// How the inter-stage loss factor applies to a stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageLossConvention {
    /// `F_n = n beta2 F0`: every stage, including the first, delivers
    /// `beta2 F0`. This is the default.
    #[default]
    AllStages,
    /// `F_n = F0 (1 + (n-1) beta2)`: the first stage is exempt from the
    /// inter-stage loss.
    AfterFirstStage,
}

/// The two empirical loss factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossModel {
    /// Force-transfer loss `beta1` in (0, 1]: fraction of the Coulomb force
    /// on the ions that ends up as thrust on the neutral air.
    pub beta1: f64,
    /// Inter-stage loss `beta2` in (0, 1]: average force retention per
    /// stage from ducting losses between stages.
    pub beta2: f64,
    /// Which stages `beta2` applies to.
    #[serde(default)]
    pub convention: StageLossConvention,
}

impl Default for LossModel {
    fn default() -> Self {
        Self::ideal()
    }
}

impl LossModel {
    pub fn new(beta1: f64, beta2: f64) -> Self {
        Self {
            beta1,
            beta2,
            convention: StageLossConvention::AllStages,
        }
    }

    /// Lossless reference: `beta1 = beta2 = 1`.
    pub fn ideal() -> Self {
        Self::new(1.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(
            self.beta1.is_finite() && self.beta1 > 0.0 && self.beta1 <= 1.0,
            || format!("beta1 must lie in (0, 1], got {}", self.beta1),
        )?;
        ensure(
            self.beta2.is_finite() && self.beta2 > 0.0 && self.beta2 <= 1.0,
            || format!("beta2 must lie in (0, 1], got {}", self.beta2),
        )?;
        Ok(())
    }

    /// Force retention of stage `i` (1-based).
    fn stage_force_factor(&self, stage_index: u32) -> f64 {
        match self.convention {
            StageLossConvention::AllStages => self.beta2,
            StageLossConvention::AfterFirstStage => {
                if stage_index == 1 {
                    1.0
                } else {
                    self.beta2
                }
            }
        }
    }

    /// Sum of the per-stage factors: total force in units of `F0`.
    fn total_force_factor(&self, stage_count: u32) -> f64 {
        let n = f64::from(stage_count);
        match self.convention {
            StageLossConvention::AllStages => n * self.beta2,
            StageLossConvention::AfterFirstStage => 1.0 + (n - 1.0) * self.beta2,
        }
    }
}

/// Electrical operating point of a device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// Drift field magnitude `E` (V/m). The applied voltage maps to field
    /// as `E = V / d`.
    pub drift_field_v_per_m: f64,
    /// Neutral air velocity into the device (m/s); zero for a static device.
    #[serde(default)]
    pub inlet_velocity_m_per_s: f64,
}

impl OperatingPoint {
    pub fn new(drift_field_v_per_m: f64) -> Self {
        Self {
            drift_field_v_per_m,
            inlet_velocity_m_per_s: 0.0,
        }
    }

    pub fn with_inlet(drift_field_v_per_m: f64, inlet_velocity_m_per_s: f64) -> Self {
        Self {
            drift_field_v_per_m,
            inlet_velocity_m_per_s,
        }
    }

    /// Build an operating point from an applied voltage, using `E = V / d`.
    pub fn from_voltage(voltage_v: f64, drift_gap_m: f64) -> Self {
        Self::new(voltage_v / drift_gap_m)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(
            self.drift_field_v_per_m.is_finite() && self.drift_field_v_per_m > 0.0,
            || {
                format!(
                    "drift_field must be positive and finite, got {}",
                    self.drift_field_v_per_m
                )
            },
        )?;
        self.validate_inlet()
    }

    /// Like [`validate`](Self::validate) but admits `E = 0` so force-side
    /// operations can evaluate the zero-field limit.
    fn validate_allow_zero_field(&self) -> Result<()> {
        ensure(
            self.drift_field_v_per_m.is_finite() && self.drift_field_v_per_m >= 0.0,
            || {
                format!(
                    "drift_field must be nonnegative and finite, got {}",
                    self.drift_field_v_per_m
                )
            },
        )?;
        self.validate_inlet()
    }

    fn validate_inlet(&self) -> Result<()> {
        ensure(
            self.inlet_velocity_m_per_s.is_finite() && self.inlet_velocity_m_per_s >= 0.0,
            || {
                format!(
                    "inlet_velocity must be nonnegative and finite, got {}",
                    self.inlet_velocity_m_per_s
                )
            },
        )
    }
}

/// Derived outputs for one operating point of one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    /// Single-stage force `F0` (N).
    pub single_stage_force_newtons: f64,
    /// Total stacked force `F_n` (N).
    pub total_force_newtons: f64,
    /// Volumetric force density `Gamma` (N/m^3) over the stacked height.
    pub force_density_n_per_m3: f64,
    /// Force per unit cross-section (N/m^2).
    pub areal_thrust_n_per_m2: f64,
    /// Outlet air velocity after each stage (m/s), momentum-theory cascade.
    pub stage_outlet_velocities_m_per_s: Vec<f64>,
    /// Per-stage force efficiency (N/W) at each stage's inlet velocity.
    pub stage_efficiencies_n_per_w: Vec<f64>,
    /// Average thrust efficiency of the stack (N/W).
    pub average_efficiency_n_per_w: f64,
    /// Electrical power drawn (W), `F_n / eta_ave`.
    pub electrical_power_w: f64,
}

// ---------- operations ----------

/// Areal thrust of a single stage (N/m^2): `(9/8) beta1 eps0 E^2`.
///
/// Accepts `E = 0` (zero-field limit) and returns zero force there.
pub fn single_stage_areal_thrust(
    env: &FluidEnvironment,
    loss: &LossModel,
    op: &OperatingPoint,
) -> Result<f64> {
    env.validate()?;
    loss.validate()?;
    op.validate_allow_zero_field()?;
    let e = op.drift_field_v_per_m;
    Ok(1.125 * loss.beta1 * env.permittivity_f_per_m * e * e)
}

/// Single-stage force `F0 = (9/8) beta1 eps0 A E^2` (N).
pub fn single_stage_force(
    geom: &StageGeometry,
    env: &FluidEnvironment,
    loss: &LossModel,
    op: &OperatingPoint,
) -> Result<f64> {
    geom.validate()?;
    Ok(single_stage_areal_thrust(env, loss, op)? * geom.area_m2)
}

/// Total force of an `n`-stage stack (N).
///
/// Under the default [`StageLossConvention::AllStages`] this is the literal
/// `F_n = n beta2 F0`, so a single stage also carries `beta2`.
pub fn multistage_force(
    geom: &StageGeometry,
    env: &FluidEnvironment,
    loss: &LossModel,
    op: &OperatingPoint,
) -> Result<f64> {
    let f0 = single_stage_force(geom, env, loss, op)?;
    Ok(loss.total_force_factor(geom.stage_count) * f0)
}

/// Volumetric force density `Gamma = F_n / ((n + (n-1) gamma) d)` (N/m^3).
pub fn force_density(
    geom: &StageGeometry,
    env: &FluidEnvironment,
    loss: &LossModel,
    op: &OperatingPoint,
) -> Result<f64> {
    let fn_total = multistage_force(geom, env, loss, op)?;
    Ok(fn_total / (geom.device_height_m() * geom.area_m2))
}

/// Normalized force-density factor in the infinite-stack limit:
/// `beta2 / (1 + gamma)`.
///
/// `Gamma * d / (F0 / A)` converges to this value as the stage count grows.
pub fn force_density_limit(spacing_ratio: f64, beta2: f64) -> Result<f64> {
    ensure(spacing_ratio.is_finite() && spacing_ratio >= 0.0, || {
        format!("spacing_ratio must be nonnegative and finite, got {spacing_ratio}")
    })?;
    ensure(beta2.is_finite() && beta2 > 0.0 && beta2 <= 1.0, || {
        format!("beta2 must lie in (0, 1], got {beta2}")
    })?;
    Ok(beta2 / (1.0 + spacing_ratio))
}

/// Force efficiency of one stage (N/W): `eta = beta1 / (mu E + v_in)`.
///
/// The denominator is the ion drift speed plus the inlet air speed; both
/// cost electrical power without adding force.
pub fn stage_efficiency(
    env: &FluidEnvironment,
    loss: &LossModel,
    op: &OperatingPoint,
) -> Result<f64> {
    env.validate()?;
    loss.validate()?;
    op.validate_allow_zero_field()?;
    let denom = env.ion_mobility_m2_per_vs * op.drift_field_v_per_m + op.inlet_velocity_m_per_s;
    ensure(denom > 0.0, || {
        "stage efficiency undefined: mu*E + v_in must be positive".to_string()
    })?;
    Ok(loss.beta1 / denom)
}

/// Outlet air velocity after each stage (m/s).
///
/// Momentum theory applied stage by stage: each stage delivers its share of
/// the stacked force, raising the velocity-squared additively,
///
/// ```text
/// v_out(i)^2 = v_in(i)^2 + F_stage(i) / (0.5 rho A)
/// ```
///
/// with the outlet of one stage feeding the inlet of the next. The area
/// cancels between the force and the captured air mass, so the increment is
/// computed directly from the areal thrust. With `beta2 = 1` and zero inlet
/// velocity the final velocity follows the exact `sqrt(n)` law.
pub fn velocity_cascade(
    geom: &StageGeometry,
    env: &FluidEnvironment,
    loss: &LossModel,
    op: &OperatingPoint,
) -> Result<Vec<f64>> {
    geom.validate()?;
    let areal = single_stage_areal_thrust(env, loss, op)?;
    let dv2_unit = areal / (0.5 * env.air_density_kg_per_m3);
    let mut vsq = op.inlet_velocity_m_per_s * op.inlet_velocity_m_per_s;
    let mut out = Vec::with_capacity(geom.stage_count as usize);
    for i in 1..=geom.stage_count {
        vsq += loss.stage_force_factor(i) * dv2_unit;
        out.push(vsq.sqrt());
    }
    Ok(out)
}

/// Average thrust efficiency of an `n`-stage stack (N/W).
///
/// Each stage contributes a single-stage efficiency evaluated at that
/// stage's inlet air speed, weighted by its force-retention factor:
///
/// ```text
/// eta_ave = (1/n) sum_i c_i * beta1 / (mu E + v_in(i))
/// ```
///
/// The inlet-speed ladder uses the unattenuated per-stage increment
/// `F0 / (0.5 rho A)` (no `beta2`), which is the convention behind the
/// published efficiency-decrease table; the stacked-force retention enters
/// only through the `c_i` weights. At `n = 1` with zero inlet velocity this
/// reduces to `beta1 beta2 / (mu E)` under the default convention.
///
/// The cross-section area cancels and never enters the result.
pub fn average_efficiency(
    geom: &StageGeometry,
    env: &FluidEnvironment,
    loss: &LossModel,
    op: &OperatingPoint,
) -> Result<f64> {
    Ok(efficiency_ladder(geom, env, loss, op)?.1)
}

/// Per-stage efficiencies plus their weighted average. Shared by
/// [`average_efficiency`] and [`predict`].
fn efficiency_ladder(
    geom: &StageGeometry,
    env: &FluidEnvironment,
    loss: &LossModel,
    op: &OperatingPoint,
) -> Result<(Vec<f64>, f64)> {
    geom.validate()?;
    env.validate()?;
    loss.validate()?;
    op.validate()?;
    let drift_speed = env.ion_mobility_m2_per_vs * op.drift_field_v_per_m;
    let areal_lossless = 1.125
        * loss.beta1
        * env.permittivity_f_per_m
        * op.drift_field_v_per_m
        * op.drift_field_v_per_m;
    let dv2 = areal_lossless / (0.5 * env.air_density_kg_per_m3);

    let mut inlet_vsq = op.inlet_velocity_m_per_s * op.inlet_velocity_m_per_s;
    let mut per_stage = Vec::with_capacity(geom.stage_count as usize);
    let mut weighted_sum = 0.0;
    for i in 1..=geom.stage_count {
        let eta_i = loss.beta1 / (drift_speed + inlet_vsq.sqrt());
        per_stage.push(eta_i);
        weighted_sum += loss.stage_force_factor(i) * eta_i;
        inlet_vsq += dv2;
    }
    Ok((per_stage, weighted_sum / f64::from(geom.stage_count)))
}

/// Evaluate the full model at one operating point.
///
/// All report fields are mutually consistent: the areal thrust is
/// `F_n / A`, the force density follows the stacked-height formula, and the
/// final cascade velocity recovers the total force through the momentum
/// relation.
pub fn predict(
    geom: &StageGeometry,
    env: &FluidEnvironment,
    loss: &LossModel,
    op: &OperatingPoint,
) -> Result<PerformanceReport> {
    geom.validate()?;
    op.validate()?;
    let f0 = single_stage_force(geom, env, loss, op)?;
    let total = loss.total_force_factor(geom.stage_count) * f0;
    let gamma_density = total / (geom.device_height_m() * geom.area_m2);
    let velocities = velocity_cascade(geom, env, loss, op)?;
    let (per_stage_eff, eta_ave) = efficiency_ladder(geom, env, loss, op)?;
    Ok(PerformanceReport {
        single_stage_force_newtons: f0,
        total_force_newtons: total,
        force_density_n_per_m3: gamma_density,
        areal_thrust_n_per_m2: total / geom.area_m2,
        stage_outlet_velocities_m_per_s: velocities,
        stage_efficiencies_n_per_w: per_stage_eff,
        average_efficiency_n_per_w: eta_ave,
        electrical_power_w: total / eta_ave,
    })
}

// ---------- tests ----------
