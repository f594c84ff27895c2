//! Constrained design-space sweeps and Pareto-frontier extraction.
//!
//! The design space is the grid product of stage count, drift gap,
//! inter-stage spacing ratio, and drift field. Every grid point is
//! evaluated with the forward model, filtered by the voltage, field, force,
//! and height constraints, and reduced to the set of points where neither
//! volumetric force density nor average thrust efficiency can be improved
//! without giving up the other.
//!
//! The sweep is an exhaustive grid walk rather than a continuous optimizer:
//! the objectives are cheap closed forms, and a grid keeps dominance checks
//! exact and the result reproducible. Grid evaluation parallelizes over
//! rayon; the nondominated reduction is associative and order-independent,
//! so any partitioning yields the identical frontier.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    average_efficiency, multistage_force, FluidEnvironment, LossModel, OperatingPoint,
    StageGeometry,
};

/// Default cap on the number of grid points per sweep.
pub const DEFAULT_MAX_GRID_POINTS: usize = 10_000_000;

/// Default spacing-ratio grid: pinned at the shielding threshold of 2.
fn default_spacing_axis() -> GridAxis {
    GridAxis {
        min: 2.0,
        max: 2.0,
        points: 1,
    }
}

fn default_area_m2() -> f64 {
    1e-4
}

fn default_max_grid_points() -> usize {
    DEFAULT_MAX_GRID_POINTS
}

// ---------- design space ----------

/// A uniformly sampled closed interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub min: f64,
    pub max: f64,
    /// Number of grid points; 1 pins the axis at `min`.
    pub points: usize,
}

impl GridAxis {
    pub fn fixed(value: f64) -> Self {
        Self {
            min: value,
            max: value,
            points: 1,
        }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(Error::InvalidInput(format!(
                "{name}: range [{}, {}] must be finite and ordered",
                self.min, self.max
            )));
        }
        if self.points == 0 {
            return Err(Error::InvalidInput(format!(
                "{name}: resolution must be positive"
            )));
        }
        Ok(())
    }

    pub fn value_at(&self, index: usize) -> f64 {
        if self.points <= 1 {
            self.min
        } else {
            self.min + (self.max - self.min) * index as f64 / (self.points - 1) as f64
        }
    }
}

/// Inclusive stage-count interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCountRange {
    pub min: u32,
    pub max: u32,
}

impl StageCountRange {
    pub fn validate(&self) -> Result<()> {
        if self.min < 1 || self.min > self.max {
            return Err(Error::InvalidInput(format!(
                "stage_counts: [{}, {}] must satisfy 1 <= min <= max",
                self.min, self.max
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        (self.max - self.min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Feasibility constraints applied to every grid point. Absent fields are
/// unconstrained.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Constraints {
    /// Applied voltage ceiling, `E d <= max_voltage_v`.
    pub max_voltage_v: Option<f64>,
    /// Drift-field ceiling (breakdown margin), `E <= max_field_v_per_m`.
    pub max_field_v_per_m: Option<f64>,
    /// Total stacked force floor, `F_n >= min_total_force_n`.
    pub min_total_force_n: Option<f64>,
    /// Stacked height ceiling, `(n + (n-1) gamma) d <= max_device_height_m`.
    pub max_device_height_m: Option<f64>,
}

/// The grid to sweep. Accepted as a JSON document by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpace {
    pub stage_counts: StageCountRange,
    pub drift_gap_m: GridAxis,
    /// Defaults to a single point at the shielding threshold, gamma = 2.
    #[serde(default = "default_spacing_axis")]
    pub spacing_ratio: GridAxis,
    pub drift_field_v_per_m: GridAxis,
    /// Cross-section area is held fixed across the sweep.
    #[serde(default = "default_area_m2")]
    pub area_m2: f64,
    #[serde(default)]
    pub constraints: Constraints,
    #[serde(default = "default_max_grid_points")]
    pub max_grid_points: usize,
}

impl DesignSpace {
    pub fn validate(&self) -> Result<()> {
        self.stage_counts.validate()?;
        self.drift_gap_m.validate("drift_gap_m")?;
        self.spacing_ratio.validate("spacing_ratio")?;
        self.drift_field_v_per_m.validate("drift_field_v_per_m")?;
        if self.drift_gap_m.min <= 0.0 {
            return Err(Error::InvalidInput(
                "drift_gap_m range must be positive".into(),
            ));
        }
        if self.spacing_ratio.min < 0.0 {
            return Err(Error::InvalidInput(
                "spacing_ratio range must be nonnegative".into(),
            ));
        }
        if self.drift_field_v_per_m.min <= 0.0 {
            return Err(Error::InvalidInput(
                "drift_field_v_per_m range must be positive".into(),
            ));
        }
        if !(self.area_m2.is_finite() && self.area_m2 > 0.0) {
            return Err(Error::InvalidInput(format!(
                "area_m2 must be positive and finite, got {}",
                self.area_m2
            )));
        }
        if self.max_grid_points == 0 {
            return Err(Error::InvalidInput(
                "max_grid_points must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Total number of grid points.
    pub fn grid_len(&self) -> usize {
        self.stage_counts.len()
            * self.drift_gap_m.points
            * self.spacing_ratio.points
            * self.drift_field_v_per_m.points
    }

    /// Decode a flat grid index into `(n, d, gamma, E)`.
    fn decode(&self, index: usize) -> (u32, f64, f64, f64) {
        let fields = self.drift_field_v_per_m.points;
        let gammas = self.spacing_ratio.points;
        let gaps = self.drift_gap_m.points;
        let i_field = index % fields;
        let rest = index / fields;
        let i_gamma = rest % gammas;
        let rest = rest / gammas;
        let i_gap = rest % gaps;
        let i_n = rest / gaps;
        (
            self.stage_counts.min + i_n as u32,
            self.drift_gap_m.value_at(i_gap),
            self.spacing_ratio.value_at(i_gamma),
            self.drift_field_v_per_m.value_at(i_field),
        )
    }
}

// ---------- design points and the Pareto set ----------

/// One feasible, evaluated grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint {
    pub geometry: StageGeometry,
    pub operating: OperatingPoint,
    /// `E d`, the voltage the drift field requires at this gap (V).
    pub applied_voltage_v: f64,
    pub total_force_n: f64,
    pub force_density_n_per_m3: f64,
    pub average_efficiency_n_per_w: f64,
    pub feasible: bool,
    pub violated_constraints: Vec<ConstraintKind>,
}

/// Which constraint a grid point violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    MaxVoltage,
    MaxField,
    MinTotalForce,
    MaxDeviceHeight,
}

/// Counts of grid points rejected by each constraint during a sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintHistogram {
    pub max_voltage: usize,
    pub max_field: usize,
    pub min_total_force: usize,
    pub max_device_height: usize,
}

impl ConstraintHistogram {
    fn tally(&mut self, kind: ConstraintKind) {
        match kind {
            ConstraintKind::MaxVoltage => self.max_voltage += 1,
            ConstraintKind::MaxField => self.max_field += 1,
            ConstraintKind::MinTotalForce => self.min_total_force += 1,
            ConstraintKind::MaxDeviceHeight => self.max_device_height += 1,
        }
    }

    fn merge(&mut self, other: &Self) {
        self.max_voltage += other.max_voltage;
        self.max_field += other.max_field;
        self.min_total_force += other.min_total_force;
        self.max_device_height += other.max_device_height;
    }
}

impl fmt::Display for ConstraintHistogram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "max_voltage: {}, max_field: {}, min_total_force: {}, max_device_height: {}",
            self.max_voltage, self.max_field, self.min_total_force, self.max_device_height
        )
    }
}

/// Inputs a sweep was run with, echoed into its output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub design_space: DesignSpace,
    pub environment: FluidEnvironment,
    pub loss: LossModel,
    pub evaluated_points: usize,
    pub feasible_points: usize,
}

/// The nondominated set in (force density, average efficiency), both
/// maximized, in canonical order: force density descending, efficiency
/// descending, then stage count, gap, spacing, and field ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoSet {
    pub points: Vec<DesignPoint>,
    pub provenance: Provenance,
}

/// `a` dominates `b` when it is at least as good in both objectives and
/// strictly better in at least one.
fn dominates(a: &DesignPoint, b: &DesignPoint) -> bool {
    a.force_density_n_per_m3 >= b.force_density_n_per_m3
        && a.average_efficiency_n_per_w >= b.average_efficiency_n_per_w
        && (a.force_density_n_per_m3 > b.force_density_n_per_m3
            || a.average_efficiency_n_per_w > b.average_efficiency_n_per_w)
}

/// Insert `candidate` into a running nondominated front.
fn pareto_insert(front: &mut Vec<DesignPoint>, candidate: DesignPoint) {
    if front.iter().any(|p| dominates(p, &candidate)) {
        return;
    }
    front.retain(|p| !dominates(&candidate, p));
    front.push(candidate);
}

/// Reduce an arbitrary point collection to its nondominated subset in
/// canonical order. The output is independent of the input order.
pub fn nondominated(points: Vec<DesignPoint>) -> Vec<DesignPoint> {
    let mut front = Vec::new();
    for p in points {
        pareto_insert(&mut front, p);
    }
    canonical_sort(&mut front);
    front
}

fn canonical_sort(points: &mut [DesignPoint]) {
    points.sort_by(|a, b| {
        b.force_density_n_per_m3
            .partial_cmp(&a.force_density_n_per_m3)
            .unwrap()
            .then(
                b.average_efficiency_n_per_w
                    .partial_cmp(&a.average_efficiency_n_per_w)
                    .unwrap(),
            )
            .then(a.geometry.stage_count.cmp(&b.geometry.stage_count))
            .then(
                a.geometry
                    .drift_gap_m
                    .partial_cmp(&b.geometry.drift_gap_m)
                    .unwrap(),
            )
            .then(
                a.geometry
                    .spacing_ratio
                    .partial_cmp(&b.geometry.spacing_ratio)
                    .unwrap(),
            )
            .then(
                a.operating
                    .drift_field_v_per_m
                    .partial_cmp(&b.operating.drift_field_v_per_m)
                    .unwrap(),
            )
    });
}

// ---------- sweep ----------

enum Evaluation {
    Feasible(DesignPoint),
    Infeasible(Vec<ConstraintKind>),
}

fn evaluate_point(
    space: &DesignSpace,
    env: &FluidEnvironment,
    loss: &LossModel,
    index: usize,
) -> Result<Evaluation> {
    let (n, gap, gamma, field) = space.decode(index);
    let geometry = StageGeometry::new(gap, gamma, space.area_m2, n);
    let operating = OperatingPoint::new(field);
    let voltage = field * gap;
    let c = &space.constraints;

    let mut violated = Vec::new();
    if c.max_voltage_v.is_some_and(|lim| voltage > lim) {
        violated.push(ConstraintKind::MaxVoltage);
    }
    if c.max_field_v_per_m.is_some_and(|lim| field > lim) {
        violated.push(ConstraintKind::MaxField);
    }
    if c.max_device_height_m
        .is_some_and(|lim| geometry.device_height_m() > lim)
    {
        violated.push(ConstraintKind::MaxDeviceHeight);
    }
    let total_force = multistage_force(&geometry, env, loss, &operating)?;
    if c.min_total_force_n.is_some_and(|lim| total_force < lim) {
        violated.push(ConstraintKind::MinTotalForce);
    }
    if !violated.is_empty() {
        return Ok(Evaluation::Infeasible(violated));
    }

    let density = total_force / (geometry.device_height_m() * geometry.area_m2);
    let efficiency = average_efficiency(&geometry, env, loss, &operating)?;
    Ok(Evaluation::Feasible(DesignPoint {
        geometry,
        operating,
        applied_voltage_v: voltage,
        total_force_n: total_force,
        force_density_n_per_m3: density,
        average_efficiency_n_per_w: efficiency,
        feasible: true,
        violated_constraints: Vec::new(),
    }))
}

/// Evaluate every grid point, filter by the constraints, and return the
/// Pareto frontier between force density and average efficiency.
///
/// Fails with [`Error::GridTooLarge`] when the grid exceeds the cap and
/// with [`Error::EmptyFeasibleSet`] (carrying the per-constraint violation
/// histogram) when nothing survives the filter.
pub fn sweep(space: &DesignSpace, env: &FluidEnvironment, loss: &LossModel) -> Result<ParetoSet> {
    space.validate()?;
    env.validate()?;
    loss.validate()?;
    let total = space.grid_len();
    if total > space.max_grid_points {
        return Err(Error::GridTooLarge {
            points: total,
            cap: space.max_grid_points,
        });
    }

    type Accum = (Vec<DesignPoint>, ConstraintHistogram, usize);
    let (front, histogram, feasible_points) = (0..total)
        .into_par_iter()
        .map(|index| evaluate_point(space, env, loss, index))
        .try_fold(
            || (Vec::new(), ConstraintHistogram::default(), 0usize),
            |(mut front, mut hist, mut feasible): Accum, eval| -> Result<Accum> {
                match eval? {
                    Evaluation::Feasible(p) => {
                        feasible += 1;
                        pareto_insert(&mut front, p);
                    }
                    Evaluation::Infeasible(kinds) => {
                        for kind in kinds {
                            hist.tally(kind);
                        }
                    }
                }
                Ok((front, hist, feasible))
            },
        )
        .try_reduce(
            || (Vec::new(), ConstraintHistogram::default(), 0usize),
            |(mut front_a, mut hist_a, feas_a), (front_b, hist_b, feas_b)| {
                for p in front_b {
                    pareto_insert(&mut front_a, p);
                }
                hist_a.merge(&hist_b);
                Ok((front_a, hist_a, feas_a + feas_b))
            },
        )?;

    if feasible_points == 0 {
        return Err(Error::EmptyFeasibleSet { histogram });
    }
    let mut points = front;
    canonical_sort(&mut points);
    Ok(ParetoSet {
        points,
        provenance: Provenance {
            design_space: space.clone(),
            environment: *env,
            loss: *loss,
            evaluated_points: total,
            feasible_points,
        },
    })
}

// ---------- scalarized selection ----------

/// Pick one frontier point by maximizing `w * density + (1 - w) *
/// efficiency` over min-max normalized objectives (normalized over the
/// Pareto set itself, so the weight interpolates the frontier's extremes).
/// Ties break toward fewer stages, then a smaller gap.
pub fn select(pareto: &ParetoSet, weight_force_density: f64) -> Result<DesignPoint> {
    if pareto.points.is_empty() {
        return Err(Error::EmptyParetoSet);
    }
    if !(0.0..=1.0).contains(&weight_force_density) || !weight_force_density.is_finite() {
        return Err(Error::InvalidInput(format!(
            "weight must lie in [0, 1], got {weight_force_density}"
        )));
    }

    let (g_min, g_max) = min_max(pareto.points.iter().map(|p| p.force_density_n_per_m3));
    let (e_min, e_max) = min_max(pareto.points.iter().map(|p| p.average_efficiency_n_per_w));
    let normalize = |x: f64, lo: f64, hi: f64| if hi > lo { (x - lo) / (hi - lo) } else { 0.0 };

    let mut best: Option<(&DesignPoint, f64)> = None;
    for p in &pareto.points {
        let score = weight_force_density * normalize(p.force_density_n_per_m3, g_min, g_max)
            + (1.0 - weight_force_density) * normalize(p.average_efficiency_n_per_w, e_min, e_max);
        let better = match best {
            None => true,
            Some((b, best_score)) => {
                score > best_score
                    || (score == best_score
                        && (p.geometry.stage_count, p.geometry.drift_gap_m)
                            < (b.geometry.stage_count, b.geometry.drift_gap_m))
            }
        };
        if better {
            best = Some((p, score));
        }
    }
    Ok(best.expect("nonempty set").0.clone())
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        (lo.min(x), hi.max(x))
    })
}

// ---------- CSV emission ----------

/// Write a Pareto set as CSV, one row per point, units in the headers.
pub fn write_pareto_csv<W: Write>(pareto: &ParetoSet, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "stage_count",
        "drift_gap_m",
        "spacing_ratio",
        "area_m2",
        "drift_field_V_per_m",
        "applied_voltage_V",
        "total_force_N",
        "force_density_N_per_m3",
        "average_efficiency_N_per_W",
    ])
    .map_err(csv_io_error)?;
    for p in &pareto.points {
        w.write_record([
            p.geometry.stage_count.to_string(),
            p.geometry.drift_gap_m.to_string(),
            p.geometry.spacing_ratio.to_string(),
            p.geometry.area_m2.to_string(),
            p.operating.drift_field_v_per_m.to_string(),
            p.applied_voltage_v.to_string(),
            p.total_force_n.to_string(),
            p.force_density_n_per_m3.to_string(),
            p.average_efficiency_n_per_w.to_string(),
        ])
        .map_err(csv_io_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

// ---------- tests ----------
