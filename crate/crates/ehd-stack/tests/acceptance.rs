//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the measured numbers (visible under `--nocapture`).
//! Every tolerance is pinned here in code.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ehd_stack::calibration::{
    consistency_report, degradation_metric, fit_beta1, fit_beta2, fit_onset,
    fit_table1_drift_speed, synthesize_series, HeadlineFigures, MeasurementSeries, OnsetOptions,
    Sample, REFERENCE_ONSET_SPREAD_V, REFERENCE_ONSET_VOLTAGE_V, TABLE1_TOLERANCE_PP,
};
use ehd_stack::model::{
    average_efficiency, force_density, force_density_limit, multistage_force, single_stage_force,
    velocity_cascade, FluidEnvironment, LossModel, OperatingPoint, StageGeometry,
};
use ehd_stack::optimizer::{
    nondominated, select, sweep, Constraints, DesignPoint, DesignSpace, GridAxis, StageCountRange,
};

fn rel_err(actual: f64, expected: f64) -> f64 {
    if expected == 0.0 {
        actual.abs()
    } else {
        ((actual - expected) / expected).abs()
    }
}

fn pass(name: &str, details: &str) {
    println!("ACCEPTANCE {name}: PASS ({details})");
}

// ---------------------------------------------------------------------
// Criterion 1: efficiency-decrease table reproduction. With beta1 = 1,
// E = 1 MV/m, rho = 1.20 kg/m^3, and the single fitted drift speed, all
// six published cells reproduce within +-0.15 percentage points, in
// under a second.
// ---------------------------------------------------------------------
#[test]
fn criterion_table1_reproduction() {
    let start = Instant::now();
    let fit = fit_table1_drift_speed();
    let elapsed = start.elapsed();

    for cell in &fit.cells {
        assert!(
            cell.error_pp.abs() <= TABLE1_TOLERANCE_PP,
            "cell n={} beta2={}: model {:.4}% vs published {:.1}% (err {:+.4} pp)",
            cell.stage_count,
            cell.beta2,
            cell.modeled_pp,
            cell.published_pp,
            cell.error_pp,
        );
    }
    assert!(
        elapsed.as_secs_f64() < 1.0,
        "table fit took {:.3} s",
        elapsed.as_secs_f64()
    );
    pass(
        "table1-reproduction",
        &format!(
            "drift speed {:.1} m/s, max |err| {:.4} pp <= {} pp, {:.0} ms",
            fit.effective_drift_speed_m_per_s,
            fit.max_abs_error_pp,
            TABLE1_TOLERANCE_PP,
            elapsed.as_secs_f64() * 1e3,
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 2: infinite-stack asymptote. Over a (gamma, beta2) grid the
// normalized force density at n = 1000 is within 0.1% of
// beta2 / (1 + gamma), in under a second.
// ---------------------------------------------------------------------
#[test]
fn criterion_force_density_asymptote() {
    let start = Instant::now();
    let env = FluidEnvironment::default();
    let op = OperatingPoint::new(1e6);
    let mut worst = 0.0f64;
    let mut cases = 0usize;
    for gamma in [0.0, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0] {
        for beta2 in [0.1, 0.4, 0.8, 1.0] {
            let loss = LossModel::new(1.0, beta2);
            let geom = StageGeometry::new(1e-3, gamma, 1e-4, 1000);
            let gamma_density = force_density(&geom, &env, &loss, &op).unwrap();
            let f0 = single_stage_force(&geom, &env, &loss, &op).unwrap();
            let normalized = gamma_density * geom.drift_gap_m / (f0 / geom.area_m2);
            let limit = force_density_limit(gamma, beta2).unwrap();
            let err = rel_err(normalized, limit);
            assert!(
                err < 1e-3,
                "gamma={gamma} beta2={beta2}: normalized {normalized} vs limit {limit}"
            );
            worst = worst.max(err);
            cases += 1;
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0);
    pass(
        "force-density-asymptote",
        &format!(
            "{cases} (gamma, beta2) pairs at n = 1000, worst rel err {worst:.2e} < 1e-3, {:.0} ms",
            elapsed.as_secs_f64() * 1e3
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 3: sqrt(n) outlet-velocity law. For n in 1..=25 with
// beta2 = 1 and zero inlet velocity, the final cascade velocity equals
// sqrt(n) times the single-stage velocity within 1e-9 relative.
// ---------------------------------------------------------------------
#[test]
fn criterion_sqrt_n_velocity_scaling() {
    let env = FluidEnvironment::default();
    let loss = LossModel::ideal();
    let op = OperatingPoint::new(1e6);
    let v1 =
        velocity_cascade(&StageGeometry::new(1e-3, 2.0, 1e-4, 1), &env, &loss, &op).unwrap()[0];
    let mut worst = 0.0f64;
    for n in 1..=25u32 {
        let geom = StageGeometry::new(1e-3, 2.0, 1e-4, n);
        let cascade = velocity_cascade(&geom, &env, &loss, &op).unwrap();
        let expected = f64::from(n).sqrt() * v1;
        let err = rel_err(cascade[n as usize - 1], expected);
        assert!(
            err <= 1e-9,
            "n={n}: {} vs sqrt(n) v1 = {expected}",
            cascade[n as usize - 1]
        );
        worst = worst.max(err);
    }
    pass(
        "sqrt-n-velocity-law",
        &format!("n = 1..=25, worst rel err {worst:.2e} <= 1e-9"),
    );
}

// ---------------------------------------------------------------------
// Criterion 4: momentum round trip. Across >= 10^3 randomized valid
// inputs, the force recovered from the cascade's final velocity matches
// the stacked force within 1e-9 relative.
// ---------------------------------------------------------------------
#[test]
fn criterion_momentum_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let env = FluidEnvironment::default();
    let mut worst = 0.0f64;
    let cases = 2000usize;
    for _ in 0..cases {
        let geom = StageGeometry::new(
            rng.gen_range(1e-4..1e-2),
            rng.gen_range(0.0..5.0),
            rng.gen_range(1e-6..1e-2),
            rng.gen_range(1..=50),
        );
        let loss = LossModel::new(rng.gen_range(0.05..1.0), rng.gen_range(0.05..1.0));
        let op = OperatingPoint::with_inlet(rng.gen_range(5e4..3e6), rng.gen_range(0.0..10.0));
        let cascade = velocity_cascade(&geom, &env, &loss, &op).unwrap();
        let v_last = *cascade.last().unwrap();
        let recovered = 0.5
            * env.air_density_kg_per_m3
            * geom.area_m2
            * (v_last * v_last - op.inlet_velocity_m_per_s * op.inlet_velocity_m_per_s);
        let expected = multistage_force(&geom, &env, &loss, &op).unwrap();
        let err = rel_err(recovered, expected);
        assert!(
            err <= 1e-9,
            "recovered {recovered} vs {expected} (geom {geom:?})"
        );
        worst = worst.max(err);
    }
    pass(
        "momentum-round-trip",
        &format!("{cases} randomized cases, worst rel err {worst:.2e} <= 1e-9"),
    );
}

// ---------------------------------------------------------------------
// Criterion 5: area invariance of the average efficiency. Scaling the
// cross-section by 0.1, 10, and 1000 changes eta_ave by < 1e-12
// relative.
// ---------------------------------------------------------------------
#[test]
fn criterion_area_invariance() {
    let env = FluidEnvironment::default();
    let loss = LossModel::new(0.9, 0.85);
    let op = OperatingPoint::new(1.2e6);
    let base_geom = StageGeometry::new(1e-3, 2.0, 1e-4, 9);
    let base = average_efficiency(&base_geom, &env, &loss, &op).unwrap();
    let mut worst = 0.0f64;
    for factor in [0.1, 10.0, 1000.0] {
        let geom = StageGeometry {
            area_m2: base_geom.area_m2 * factor,
            ..base_geom
        };
        let eta = average_efficiency(&geom, &env, &loss, &op).unwrap();
        let err = rel_err(eta, base);
        assert!(err < 1e-12, "area x{factor}: {eta} vs {base}");
        worst = worst.max(err);
    }
    pass(
        "area-invariance",
        &format!("area factors 0.1/10/1000, worst rel change {worst:.2e} < 1e-12"),
    );
}

// ---------------------------------------------------------------------
// Criterion 6: fit recovery. Noiseless synthetic data generated by the
// forward model returns V0, C, beta1, beta2 within 0.5% of the
// generator values; with 5% multiplicative noise V0 stays within the
// published +-200 V device spread.
// ---------------------------------------------------------------------
#[test]
fn criterion_fit_recovery() {
    let geometry = StageGeometry::new(1.07e-3, 2.0, 1e-4, 1);
    let env = FluidEnvironment::default();
    let voltages: Vec<f64> = (0..60).map(|k| 500.0 + 50.0 * k as f64).collect();

    // onset + Townsend coefficient
    let series =
        synthesize_series(geometry, &env, &LossModel::ideal(), 1600.0, 1e-9, &voltages).unwrap();
    let onset = fit_onset(&series, &OnsetOptions::default()).unwrap();
    let v0 = onset.onset_voltage_v.unwrap();
    let c = onset.townsend_coefficient_a_per_v2.unwrap();
    assert!(rel_err(v0, 1600.0) < 0.005, "V0 = {v0}");
    assert!(rel_err(c, 1e-9) < 0.005, "C = {c}");

    // beta1
    let series_b1 = synthesize_series(
        geometry,
        &env,
        &LossModel::new(0.7, 1.0),
        1600.0,
        1e-9,
        &voltages,
    )
    .unwrap();
    let beta1 = fit_beta1(&series_b1, &env).unwrap().fitted_beta1.unwrap();
    assert!(rel_err(beta1, 0.7) < 0.005, "beta1 = {beta1}");

    // beta2 across 1/2/3-stage series
    let stacked: Vec<MeasurementSeries> = [1u32, 2, 3]
        .iter()
        .map(|&n| {
            synthesize_series(
                StageGeometry::new(1.07e-3, 2.0, 1e-4, n),
                &env,
                &LossModel::new(1.0, 0.9),
                1600.0,
                1e-9 * f64::from(n),
                &voltages,
            )
            .unwrap()
        })
        .collect();
    let beta2 = fit_beta2(&stacked, &env).unwrap().fitted_beta2.unwrap();
    assert!(rel_err(beta2, 0.9) < 0.005, "beta2 = {beta2}");

    // noisy onset stays within the published device-to-device spread
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut noisy = series.clone();
    for s in &mut noisy.samples {
        s.current_a *= 1.0 + 0.05 * rng.gen_range(-1.0..1.0);
    }
    let noisy_v0 = fit_onset(&noisy, &OnsetOptions::default())
        .unwrap()
        .onset_voltage_v
        .unwrap();
    assert!(
        (noisy_v0 - REFERENCE_ONSET_VOLTAGE_V).abs() <= REFERENCE_ONSET_SPREAD_V,
        "noisy V0 = {noisy_v0}"
    );

    pass(
        "fit-recovery",
        &format!(
            "V0 {:.2}% / C {:.2}% / beta1 {:.2}% / beta2 {:.2}% of generator values \
             (all < 0.5%), noisy V0 = {:.0} V within 1600 +- 200 V",
            rel_err(v0, 1600.0) * 100.0,
            rel_err(c, 1e-9) * 100.0,
            rel_err(beta1, 0.7) * 100.0,
            rel_err(beta2, 0.9) * 100.0,
            noisy_v0,
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 7: degradation metric. A 5%-per-100 s linear decay returns
// 0.05 +- 0.005; a 30% drop returns roughly 0.30, past the prior-work
// comparison threshold.
// ---------------------------------------------------------------------
#[test]
fn criterion_degradation_metric() {
    let decay = |total_drop: f64| {
        let samples: Vec<Sample> = (0..=200)
            .map(|k| {
                let t = 0.5 * k as f64;
                Sample {
                    time_s: t,
                    voltage_v: 2000.0,
                    current_a: 1e-5 * (1.0 - total_drop * t / 100.0),
                    velocity_m_per_s: None,
                }
            })
            .collect();
        MeasurementSeries::new(samples, StageGeometry::new(1.07e-3, 2.0, 1e-4, 1)).unwrap()
    };

    let five = degradation_metric(&decay(0.05), 100.0).unwrap();
    assert!((five - 0.05).abs() <= 0.005, "5% series returned {five}");
    let thirty = degradation_metric(&decay(0.30), 100.0).unwrap();
    assert!(
        (thirty - 0.30).abs() <= 0.015,
        "30% series returned {thirty}"
    );
    assert!(
        thirty > 0.25,
        "30% series must clear the prior-work threshold"
    );
    pass(
        "degradation-metric",
        &format!("5% decay -> {five:.4} (0.05 +- 0.005), 30% decay -> {thirty:.4} (~0.30)"),
    );
}

// ---------------------------------------------------------------------
// Criterion 8: headline consistency. Inverting the force-density formula
// at 15 N/m^2 and 2 kN/m^3 with n = 3, gamma = 2 implies a 1.07 +- 0.01
// mm gap, and the 0.5 bulk force/power ratio is emitted alongside the
// published 1.1 mN/W peak value as a flagged notice, not a failure.
// ---------------------------------------------------------------------
#[test]
fn criterion_headline_consistency() {
    let report = consistency_report(&HeadlineFigures::default()).unwrap();
    let gap_mm = report.implied_drift_gap_m * 1e3;
    assert!((gap_mm - 1.07).abs() <= 0.01, "implied gap {gap_mm} mm");
    assert!(
        rel_err(report.implied_bulk_efficiency_n_per_w, 0.5) < 1e-12,
        "bulk efficiency ratio {}",
        report.implied_bulk_efficiency_n_per_w
    );
    assert_eq!(report.reference_peak_efficiency_n_per_w, 1.1e-3);
    assert!(
        !report.notices.is_empty(),
        "the operating-point discrepancy must surface as a notice"
    );
    pass(
        "headline-consistency",
        &format!(
            "implied gap {gap_mm:.4} mm (1.07 +- 0.01), bulk ratio {} flagged against 1.1 mN/W \
             with {} notice(s)",
            report.implied_bulk_efficiency_n_per_w,
            report.notices.len(),
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 9: optimizer soundness. On a grid <= 10^4 points, an
// exhaustive dominance re-check (independent re-enumeration of the grid)
// finds zero violations, and permuted enumeration produces the identical
// Pareto set.
// ---------------------------------------------------------------------
#[test]
fn criterion_optimizer_soundness() {
    let space = DesignSpace {
        stage_counts: StageCountRange { min: 1, max: 8 },
        drift_gap_m: GridAxis {
            min: 4e-4,
            max: 2e-3,
            points: 5,
        },
        spacing_ratio: GridAxis {
            min: 2.0,
            max: 4.0,
            points: 3,
        },
        drift_field_v_per_m: GridAxis {
            min: 4e5,
            max: 2.4e6,
            points: 6,
        },
        area_m2: 1e-4,
        constraints: Constraints {
            max_voltage_v: Some(3500.0),
            ..Constraints::default()
        },
        max_grid_points: 10_000,
    };
    assert!(space.grid_len() <= 10_000);
    let env = FluidEnvironment::default();
    let loss = LossModel::new(0.9, 0.85);
    let pareto = sweep(&space, &env, &loss).unwrap();

    // Independent re-enumeration of every feasible grid point.
    let mut all: Vec<DesignPoint> = Vec::new();
    for n in space.stage_counts.min..=space.stage_counts.max {
        for i_gap in 0..space.drift_gap_m.points {
            for i_gamma in 0..space.spacing_ratio.points {
                for i_field in 0..space.drift_field_v_per_m.points {
                    let gap = space.drift_gap_m.value_at(i_gap);
                    let gamma = space.spacing_ratio.value_at(i_gamma);
                    let field = space.drift_field_v_per_m.value_at(i_field);
                    if field * gap > 3500.0 {
                        continue;
                    }
                    let geometry = StageGeometry::new(gap, gamma, space.area_m2, n);
                    let operating = OperatingPoint::new(field);
                    let force = multistage_force(&geometry, &env, &loss, &operating).unwrap();
                    all.push(DesignPoint {
                        geometry,
                        operating,
                        applied_voltage_v: field * gap,
                        total_force_n: force,
                        force_density_n_per_m3: force
                            / (geometry.device_height_m() * geometry.area_m2),
                        average_efficiency_n_per_w: average_efficiency(
                            &geometry, &env, &loss, &operating,
                        )
                        .unwrap(),
                        feasible: true,
                        violated_constraints: Vec::new(),
                    });
                }
            }
        }
    }
    assert_eq!(all.len(), pareto.provenance.feasible_points);

    let mut violations = 0usize;
    for member in &pareto.points {
        for other in &all {
            let dominates = other.force_density_n_per_m3 >= member.force_density_n_per_m3
                && other.average_efficiency_n_per_w >= member.average_efficiency_n_per_w
                && (other.force_density_n_per_m3 > member.force_density_n_per_m3
                    || other.average_efficiency_n_per_w > member.average_efficiency_n_per_w);
            if dominates {
                violations += 1;
            }
        }
    }
    assert_eq!(violations, 0, "dominated members on the frontier");

    // Permuted enumeration must give the identical set.
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..3 {
        all.shuffle(&mut rng);
        let front = nondominated(all.clone());
        assert_eq!(
            front, pareto.points,
            "frontier depends on enumeration order"
        );
    }

    // Corner selections agree with the frontier extremes.
    let densest = select(&pareto, 1.0).unwrap();
    assert!(pareto
        .points
        .iter()
        .all(|p| p.force_density_n_per_m3 <= densest.force_density_n_per_m3));

    pass(
        "optimizer-soundness",
        &format!(
            "{} grid points, {} feasible, frontier {} points, 0 dominance violations, \
             3 permutations identical",
            pareto.provenance.evaluated_points,
            pareto.provenance.feasible_points,
            pareto.points.len(),
        ),
    );
}
