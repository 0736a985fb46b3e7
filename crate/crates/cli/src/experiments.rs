use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use kac_core::analysis::*;
use kac_core::seeding::{substream, SimRng};
use kac_core::stats::RunningMean;
use kac_core::system::*;
use rand::Rng;
use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, InitialLaw, Kind};
use crate::output::{floats, write_json, Cell, Table};

/// Substream reserved for constants that do not belong to any replica.
pub const CONSTANTS_STREAM: u64 = u64::MAX;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("replica {replica}: {source}")]
    Invariant { replica: u64, source: SystemError },
    #[error("analysis: {0}")]
    Analysis(#[from] AnalysisError),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Io(_) => 2,
            RunError::Invariant { .. } | RunError::Analysis(_) => 1,
        }
    }
}

/// Named pass/fail checks of one run.
#[derive(Debug, Default)]
pub struct Summary {
    pub assertions: BTreeMap<String, bool>,
}

impl Summary {
    pub fn passed(&self) -> bool {
        self.assertions.values().all(|x| *x)
    }

    fn check(&mut self, name: &str, ok: bool) {
        *self.assertions.entry(name.to_string()).or_insert(true) &= ok;
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<Summary, RunError> {
    let out = cfg.output.as_path();
    fs::create_dir_all(out)?;
    let (summary, results) = match cfg.kind {
        Kind::Decay => decay(cfg, out)?,
        Kind::Inequalities => inequalities(cfg, out)?,
        Kind::Counterexample1 => heavy_tail(cfg, out)?,
        Kind::Counterexample2 => radial_band(cfg, out)?,
        Kind::Wishart => wishart(cfg, out)?,
        Kind::EquilibriumCheck => equilibrium(cfg, out)?,
    };
    let report = json!({
        "kind": cfg.kind,
        "seed": cfg.seed,
        "config": cfg,
        "results": results,
        "assertions": summary.assertions,
        "passed": summary.passed(),
    });
    write_json(&out.join("report.json"), &report)?;
    Ok(summary)
}

fn initial_pair(cfg: &ExperimentConfig, rng: &mut SimRng) -> Result<(Configuration, Configuration), SystemError> {
    let u = sample_equilibrium(cfg.n, cfg.d, rng)?;
    let v = match cfg.initial {
        InitialLaw::Copy => u.clone(),
        InitialLaw::Equilibrium => sample_equilibrium(cfg.n, cfg.d, rng)?,
        InitialLaw::TwoTemperature => {
            let cold = two_temperature_cold_energy(cfg.d, cfg.hot_energy, cfg.target_m4)?;
            sample_two_temperature(cfg.n, cfg.d, cfg.hot_energy, cold, rng)?
        }
    };
    Ok((u, v))
}

fn decay_replica(cfg: &ExperimentConfig, grid: &[f64], replica: u64) -> Result<Vec<TrajectoryRow>, SystemError> {
    let kernel = cfg.kernel();
    let mut rng = substream(cfg.seed, replica);
    let (u, v) = initial_pair(cfg, &mut rng)?;
    let mut state = CoupledState::with_optimal_pairing(u, v)?;
    let mut rows = Vec::with_capacity(grid.len());
    simulate(
        &mut state,
        &kernel,
        grid,
        |t, s| {
            let row = coupled_snapshot(t, s, Some((cfg.delta, cfg.p))).map_err(|e| SystemError::Observer(e.to_string()))?;
            rows.push(row);
            Ok(())
        },
        |_| {},
        &mut rng,
    )?;
    Ok(rows)
}

fn write_violation(out: &Path, replica: u64, err: &SystemError) -> io::Result<()> {
    let event = match err {
        SystemError::InvariantViolation { event_count, detail, event } => {
            json!({ "event_count": event_count, "detail": detail, "event": event })
        }
        other => json!({ "detail": other.to_string() }),
    };
    write_json(&out.join("violation.json"), &json!({ "replica": replica, "violation": event }))
}

const AGGREGATE_COLUMNS: [&str; 14] = [
    "time",
    "mean_sq_distance",
    "mean_sq_distance_stderr",
    "m2",
    "m4",
    "m4_stderr",
    "creation",
    "fund_lhs",
    "fund_rhs",
    "min_corr",
    "weak_lhs",
    "weak_rhs",
    "envelope",
    "m4_bound",
];

fn decay(cfg: &ExperimentConfig, out: &Path) -> Result<(Summary, Value), RunError> {
    let grid = time_grid(cfg.horizon, cfg.samples);
    let runs: Vec<(u64, Result<Vec<TrajectoryRow>, SystemError>)> = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|r| {
            let rows = decay_replica(cfg, &grid, r);
            if let Ok(rows) = &rows {
                let mut t = Table::new(&TRAJECTORY_COLUMNS);
                for row in rows {
                    t.push(&r.to_string(), &r.to_string(), &floats(&row.values()));
                }
                if let Err(e) = t.write(&out.join(format!("trajectory_{r}.csv"))) {
                    return (r, Err(SystemError::Observer(e.to_string())));
                }
            }
            (r, rows)
        })
        .collect();
    let mut replicas = Vec::with_capacity(runs.len());
    for (r, res) in runs {
        match res {
            Ok(rows) => replicas.push(rows),
            Err(e) => {
                write_violation(out, r, &e)?;
                return Err(RunError::Invariant { replica: r, source: e });
            }
        }
    }

    let mut crng = substream(cfg.seed, CONSTANTS_STREAM);
    let constants = k_main_estimate(cfg.delta, cfg.p, cfg.q, cfg.n, cfg.d, cfg.kmain_samples, &mut crng)?;
    let c = constants.c_delta_n.expect("filled by estimate");

    let k = grid.len();
    let mut dist = vec![RunningMean::new(); k];
    let mut m4 = vec![RunningMean::new(); k];
    let mut other = vec![[0.0; 6]; k];
    let mut min_corr = vec![f64::INFINITY; k];
    for rows in &replicas {
        for (i, row) in rows.iter().enumerate() {
            dist[i].push(row.mean_sq_distance);
            m4[i].push(row.m4);
            let add = [row.m2, row.creation, row.fund_lhs, row.fund_rhs, row.weak_lhs, row.weak_rhs];
            for (o, a) in other[i].iter_mut().zip(add) {
                *o += a / replicas.len() as f64;
            }
            min_corr[i] = min_corr[i].min(row.min_corr);
        }
    }

    // without replicas the envelope starts from a single initial draw
    let (d0, m4_0) = if replicas.is_empty() {
        let (u, v) = initial_pair(cfg, &mut crng).map_err(|e| RunError::Invariant { replica: CONSTANTS_STREAM, source: e })?;
        let s = CoupledState::with_optimal_pairing(u, v).map_err(|e| RunError::Invariant { replica: CONSTANTS_STREAM, source: e })?;
        (s.mean_sq_distance(), s.v_paired().m4())
    } else {
        (dist[0].mean(), m4[0].mean())
    };
    let (_, t_star) = order4_bound(m4_0, cfg.d, 0.0);
    let envelope: Vec<f64> = grid.iter().map(|&t| decay_envelope(d0, c, cfg.delta, t, t_star)).collect();

    let nan = f64::NAN;
    let mut agg = Table::new(&AGGREGATE_COLUMNS);
    for i in 0..k {
        let have = !replicas.is_empty();
        let pick = |x: f64| if have { x } else { nan };
        let o = other[i];
        agg.push(
            "all",
            "all",
            &floats(&[
                grid[i],
                pick(dist[i].mean()),
                pick(dist[i].stderr()),
                pick(o[0]),
                pick(m4[i].mean()),
                pick(m4[i].stderr()),
                pick(o[1]),
                pick(o[2]),
                pick(o[3]),
                pick(min_corr[i]),
                pick(o[4]),
                pick(o[5]),
                envelope[i],
                order4_bound(m4_0, cfg.d, grid[i]).0,
            ]),
        );
    }
    agg.write(&out.join("aggregate.csv"))?;

    let tol = cfg.tolerance;
    let mut summary = Summary::default();
    for rows in &replicas {
        for w in rows.windows(2) {
            summary.check("distance_non_increasing", w[1].mean_sq_distance <= w[0].mean_sq_distance + 1e-12);
        }
        for row in rows {
            summary.check("correlation_nonnegative", row.min_corr >= -1e-12);
            summary.check("fund_inequality", row.fund_lhs <= row.fund_rhs + tol * row.fund_rhs.abs().max(1.0));
            summary.check("weak_inequality", row.weak_lhs <= row.weak_rhs + tol * row.weak_rhs.abs().max(1.0));
        }
    }
    if !replicas.is_empty() {
        for i in 0..k {
            summary.check("envelope_dominance", dist[i].mean() <= envelope[i] + 3.0 * dist[i].stderr() + tol);
        }
    }

    let last = k - 1;
    let results = json!({
        "replicas": replicas.len(),
        "constants": constants,
        "d0": d0,
        "m4_0": m4_0,
        "t_star": t_star,
        "final_mean_sq_distance": if replicas.is_empty() { Value::Null } else { json!(dist[last].mean()) },
        "decay_factor": if replicas.is_empty() { Value::Null } else { json!(dist[0].mean() / dist[last].mean()) },
    });
    Ok((summary, results))
}

fn inequalities(cfg: &ExperimentConfig, out: &Path) -> Result<(Summary, Value), RunError> {
    let mut rng = substream(cfg.seed, 0);
    let names = ["fund", "trace", "area_sign", "area_identity", "weak"];
    let mut worst = [f64::INFINITY; 5];
    let mut vacuous = [0usize; 5];
    let mut worst_reports: BTreeMap<&str, InequalityReport> = BTreeMap::new();
    let mut keep = |name: &'static str, r: InequalityReport, worst: &mut f64| {
        if r.slack < *worst {
            *worst = r.slack;
            worst_reports.insert(name, r);
        }
    };

    for _ in 0..cfg.instances {
        let k = rng.random_range(2..=10);
        let dist = DiscreteCoupledDistribution::random(k, cfg.d, &mut rng);
        match fund_inequality_report(&dist) {
            Ok(r) => keep("fund", r, &mut worst[0]),
            Err(AnalysisError::RhsInfinite) => vacuous[0] += 1,
            Err(e) => return Err(e.into()),
        }
        let (cuu, cvv, cuv) = dist.covariances();
        match trace_inequality_report(&cuu, &cvv, &cuv) {
            Ok(r) => keep("trace", r, &mut worst[1]),
            Err(AnalysisError::RhsInfinite) => vacuous[1] += 1,
            Err(e) => return Err(e.into()),
        }
        let a = area_decomposition(&dist)?;
        worst[2] = worst[2].min(a.pointwise.min(a.antisymmetric));
        worst[3] = worst[3].min(-a.residual().abs() / a.lhs.abs().max(1.0));

        let u = sample_equilibrium(cfg.n, cfg.d, &mut rng).map_err(|e| RunError::Invariant { replica: 0, source: e })?;
        let v = sample_equilibrium(cfg.n, cfg.d, &mut rng).map_err(|e| RunError::Invariant { replica: 0, source: e })?;
        let s = CoupledState::with_optimal_pairing(u, v).map_err(|e| RunError::Invariant { replica: 0, source: e })?;
        keep("weak", pathwise_weak_inequality(&s.u, &s.v_paired(), cfg.delta, cfg.p)?, &mut worst[4]);
    }

    let mut equality = [f64::NAN; 5];
    let mut equality_cases = [0usize; 5];
    if cfg.instances > 0 {
        let d = cfg.d;
        let dist = identical_two_radius(d, (0.5, 1.7), (1.0, 0.3));
        let id = SymmetricMatrix::identity_over_d(d);
        let cases = [
            (0, fund_inequality_report(&dist)?.slack),
            (1, trace_inequality_report(&id, &id, id.as_matrix())?.slack),
            (1, trace_inequality_report(&id, &id, &SquareMatrix::zeros(d))?.slack),
            (2, area_decomposition(&dist)?.antisymmetric),
            (4, {
                let u = sample_equilibrium(cfg.n, d, &mut rng).map_err(|e| RunError::Invariant { replica: 0, source: e })?;
                pathwise_weak_inequality(&u, &u, cfg.delta, cfg.p)?.slack
            }),
        ];
        for (i, slack) in cases {
            equality_cases[i] += 1;
            equality[i] = if equality[i].is_nan() { slack.abs() } else { equality[i].max(slack.abs()) };
        }
    }

    let mut table = Table::new(&["inequality", "instances", "vacuous", "min_slack", "equality_cases", "max_equality_abs_slack"]);
    let mut summary = Summary::default();
    if cfg.instances > 0 {
        for i in 0..5 {
            table.push(
                "0",
                "0",
                &[
                    Cell::S(names[i].into()),
                    Cell::U(cfg.instances as u64),
                    Cell::U(vacuous[i] as u64),
                    Cell::F(worst[i]),
                    Cell::U(equality_cases[i] as u64),
                    Cell::F(equality[i]),
                ],
            );
            summary.check(&format!("{}_slack", names[i]), !(worst[i] < -cfg.tolerance));
            if equality_cases[i] > 0 {
                summary.check(&format!("{}_equality", names[i]), equality[i] <= cfg.tolerance);
            }
        }
    }
    table.write(&out.join("aggregate.csv"))?;

    let per: BTreeMap<&str, Value> = if cfg.instances == 0 {
        BTreeMap::new()
    } else {
        (0..5)
            .map(|i| {
                let entry = json!({
                    "min_slack": worst[i],
                    "vacuous": vacuous[i],
                    "equality_cases": equality_cases[i],
                    "max_equality_abs_slack": if equality[i].is_nan() { Value::Null } else { json!(equality[i]) },
                    "worst_instance": worst_reports.get(names[i]),
                });
                (names[i], entry)
            })
            .collect()
    };
    Ok((summary, json!({ "instances": cfg.instances, "inequalities": per })))
}

/// `a[k] < a[k-1]` up to three combined standard errors.
fn decreasing(values: &[(f64, f64)]) -> bool {
    values.windows(2).all(|w| w[1].0 <= w[0].0 + 3.0 * (w[0].1.powi(2) + w[1].1.powi(2)).sqrt())
}

fn heavy_tail(cfg: &ExperimentConfig, out: &Path) -> Result<(Summary, Value), RunError> {
    let mut rng = substream(cfg.seed, 0);
    let rows = counterexample_heavy_tail(&cfg.m_values, cfg.heavy_q, cfg.d, cfg.mc_samples, &mut rng)?;
    let mut table = Table::new(&[
        "m",
        "eps",
        "prob_large",
        "m_q",
        "mean_sq_distance",
        "mean_sq_distance_stderr",
        "creation",
        "creation_stderr",
    ]);
    for r in &rows {
        table.push(
            "0",
            "0",
            &floats(&[r.m, r.eps, r.prob_large, r.m_q, r.mean_sq_distance, r.mean_sq_distance_stderr, r.creation, r.creation_stderr]),
        );
    }
    table.write(&out.join("aggregate.csv"))?;
    let mut summary = Summary::default();
    summary.check("creation_decreasing", decreasing(&rows.iter().map(|r| (r.creation, r.creation_stderr)).collect::<Vec<_>>()));
    Ok((summary, json!({ "rows": rows })))
}

fn radial_band(cfg: &ExperimentConfig, out: &Path) -> Result<(Summary, Value), RunError> {
    let mut rng = substream(cfg.seed, 0);
    let rows = counterexample_radial_band(&cfg.r_minus_values, cfg.band_eps, cfg.d, cfg.mc_samples, &mut rng)?;
    let mut table = Table::new(&["r_minus", "r_plus", "band_probability", "r_bar", "ratio", "ratio_stderr"]);
    for r in &rows {
        table.push("0", "0", &floats(&[r.r_minus, r.r_plus, r.band_probability, r.r_bar, r.ratio, r.ratio_stderr]));
    }
    table.write(&out.join("aggregate.csv"))?;
    let slope = if rows.len() >= 2 && rows.iter().all(|r| r.ratio > 0.0) {
        let x: Vec<f64> = rows.iter().map(|r| r.r_minus).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
        json!(log_log_slope(&x, &y))
    } else {
        Value::Null
    };
    let mut summary = Summary::default();
    summary.check("ratio_decreasing", decreasing(&rows.iter().map(|r| (r.ratio, r.ratio_stderr)).collect::<Vec<_>>()));
    Ok((summary, json!({ "rows": rows, "log_log_slope": slope })))
}

fn wishart(cfg: &ExperimentConfig, out: &Path) -> Result<(Summary, Value), RunError> {
    let limit = (cfg.d as f64 - 1.0) / cfg.d as f64;
    let estimates: Vec<Result<Estimate, AnalysisError>> = cfg
        .n_values
        .par_iter()
        .enumerate()
        .map(|(i, &n)| wishart_kappa_moment(n, cfg.d, cfg.wishart_p, cfg.mc_samples, &mut substream(cfg.seed, i as u64)))
        .collect();
    let estimates = estimates.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut table = Table::new(&["n", "estimate", "stderr", "limit"]);
    let mut summary = Summary::default();
    for (i, (&n, e)) in cfg.n_values.iter().zip(&estimates).enumerate() {
        table.push("0", &i.to_string(), &[Cell::U(n as u64), Cell::F(e.value), Cell::F(e.stderr), Cell::F(limit)]);
        summary.check("below_limit", e.value <= limit + 3.0 * e.stderr);
    }
    let neg: Vec<(f64, f64)> = estimates.iter().map(|e| (-e.value, e.stderr)).collect();
    summary.check("monotone_in_n", decreasing(&neg));
    table.write(&out.join("aggregate.csv"))?;
    let rows: Vec<Value> = cfg.n_values.iter().zip(&estimates).map(|(n, e)| json!({ "n": n, "estimate": e })).collect();
    Ok((summary, json!({ "p": cfg.wishart_p, "limit": limit, "rows": rows })))
}

fn equilibrium(cfg: &ExperimentConfig, out: &Path) -> Result<(Summary, Value), RunError> {
    let mut rng = substream(cfg.seed, 0);
    let mut acc = RunningMean::new();
    for _ in 0..cfg.mc_samples {
        acc.push(sample_equilibrium(cfg.n, cfg.d, &mut rng).map_err(|e| RunError::Invariant { replica: 0, source: e })?.m4());
    }
    let exact = equilibrium_m4(cfg.n, cfg.d);
    let limit = (cfg.d as f64 + 2.0) / cfg.d as f64;
    let mut table = Table::new(&["n", "d", "samples", "m4", "m4_stderr", "exact", "limit"]);
    table.push(
        "0",
        "0",
        &[
            Cell::U(cfg.n as u64),
            Cell::U(cfg.d as u64),
            Cell::U(acc.count()),
            Cell::F(acc.mean()),
            Cell::F(acc.stderr()),
            Cell::F(exact),
            Cell::F(limit),
        ],
    );
    table.write(&out.join("aggregate.csv"))?;
    let mut summary = Summary::default();
    summary.check("matches_finite_n_value", (acc.mean() - exact).abs() <= 3.0 * acc.stderr() + 1e-12);
    Ok((
        summary,
        json!({ "m4": acc.mean(), "m4_stderr": acc.stderr(), "exact": exact, "limit": limit, "samples": acc.count() }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn violation_is_serialized_and_exits_1() {
        let dir = std::env::temp_dir().join(format!("kac-violation-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let err = SystemError::InvariantViolation {
            event_count: 17,
            detail: "residual 1e-3".into(),
            event: Box::new(CollisionEvent { time: 0.5, pair: (2, 5), theta: 1.0, phi: 0.3, l: vec![0.0, 1.0, 0.0] }),
        };
        write_violation(&dir, 4, &err).unwrap();
        let v: Value = serde_json::from_str(&fs::read_to_string(dir.join("violation.json")).unwrap()).unwrap();
        assert_eq!(v["replica"], 4);
        assert_eq!(v["violation"]["event"]["pair"], json!([2, 5]));
        assert_eq!(RunError::Invariant { replica: 4, source: err }.exit_code(), 1);
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn decreasing_allows_noise() {
        assert!(decreasing(&[(1.0, 0.1), (1.2, 0.1)]));
        assert!(!decreasing(&[(1.0, 0.01), (1.2, 0.01)]));
    }
}
