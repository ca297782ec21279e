use anyhow::Result;
use serde_json::{json, Value};
use structsel_core::grid::{fmt_num, Region};
use structsel_core::kernel::structural::write_catalog;
use structsel_core::kernel::{norm1_bound, norm2_bound};
use structsel_core::observation::Observation;
use structsel_core::oracle_bench::{
    contraction_check, ideal_case, make_test_function, rate_experiment, risk_sandwich, verify_oracle_inequality,
    KappaSource,
};
use structsel_core::report::fmt_p;
use structsel_core::rng::derive_seed;
use structsel_core::selection::{sample_suprema, select, KappaCalibration, KappaMode, ThetaGrid, CALIBRATION_STREAM};
use structsel_core::smoothing::convolve_kernels;

use crate::config::{Command, ExperimentConfig};

/// Experiment ids feeding the seed hierarchy.
const EXP_SELECT: u64 = 1;
const EXP_ORACLE: u64 = 2;
const EXP_RATE: u64 = 3;
const EXP_SANDWICH: u64 = 4;
const EXP_SYMMETRY: u64 = 5;

#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Value,
    pub tables: Vec<Table>,
    /// Extra files written next to the report.
    pub files: Vec<(String, String)>,
    /// Failed acceptance checks, each naming its inequality.
    pub failures: Vec<String>,
}

impl Outcome {
    fn new(report: Value) -> Self {
        Self {
            report,
            tables: Vec::new(),
            files: Vec::new(),
            failures: Vec::new(),
        }
    }
}

fn b(v: bool) -> String {
    v.to_string()
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    match cfg.command {
        Command::VerifyKernels => verify_kernels(cfg),
        Command::Calibrate => calibrate(cfg),
        Command::Select => run_select(cfg),
        Command::BenchOracle => bench_oracle(cfg),
        Command::BenchRate => bench_rate(cfg),
        Command::BenchSandwich => bench_sandwich(cfg),
    }
}

fn theta_grid(cfg: &ExperimentConfig, eps: f64) -> Result<ThetaGrid> {
    Ok(ThetaGrid::build(&cfg.theta_grid, eps, cfg.grid()?)?)
}

/// Monte Carlo or analytic kappa, per the configured mode.
pub fn calibration(cfg: &ExperimentConfig, tg: &ThetaGrid, eps: f64, p: f64) -> Result<KappaCalibration> {
    let delta = cfg.effective_delta(eps);
    Ok(match cfg.effective_kappa_mode() {
        KappaMode::Analytic => KappaCalibration::analytic(tg, p, delta, eps, cfg.c3)?,
        KappaMode::MonteCarlo => {
            structsel_core::selection::calibrate_kappa(tg, p, delta, cfg.n_cal, derive_seed(cfg.seed, 0, 0))?
        }
    })
}

fn verify_kernels(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tg = theta_grid(cfg, cfg.window_eps())?;
    let tol = &cfg.tolerances;
    let g = tg.kernel();
    let bank = tg.bank();
    let mut out = Outcome::new(Value::Null);

    let mut catalog = Vec::new();
    write_catalog(bank.kernels(), &mut catalog)?;
    out.files
        .push(("tables/kernel_catalog.csv".into(), String::from_utf8(catalog)?));

    let mut moments = Table::new("moments", &["k", "moment", "pass"]);
    for k in 1..=g.order() {
        let m = g.moment(k);
        let pass = m.abs() <= tol.moment;
        if !pass {
            out.failures
                .push(format!("|moment(g, {k})| = {m:e} > {:e}", tol.moment));
        }
        moments.rows.push(vec![k.to_string(), fmt_num(m), b(pass)]);
    }

    let mut checks = Table::new(
        "kernel_checks",
        &[
            "theta_id",
            "integral",
            "norm1",
            "norm1_bound",
            "norm2",
            "norm2_bound",
            "pass",
        ],
    );
    for (t, k) in bank.kernels().iter().enumerate() {
        let (b1, b2) = (norm1_bound(k.theta(), g), norm2_bound(k.theta(), g));
        let s = 1.0 + tol.norm_bound_slack;
        let ok_int = (k.integral() - 1.0).abs() <= tol.integral;
        let ok1 = k.norm1() <= b1 * s;
        let ok2 = k.norm2() <= b2 * s;
        if !ok_int {
            out.failures.push(format!(
                "theta {t}: |integral - 1| = {:e} > {:e}",
                (k.integral() - 1.0).abs(),
                tol.integral
            ));
        }
        if !ok1 {
            out.failures
                .push(format!("theta {t}: ||K||_1 = {} > (1+slack) bound {}", k.norm1(), b1));
        }
        if !ok2 {
            out.failures
                .push(format!("theta {t}: ||K||_2 = {} > (1+slack) bound {}", k.norm2(), b2));
        }
        checks.rows.push(vec![
            t.to_string(),
            fmt_num(k.integral()),
            fmt_num(k.norm1()),
            fmt_num(b1),
            fmt_num(k.norm2()),
            fmt_num(b2),
            b(ok_int && ok1 && ok2),
        ]);
    }

    let mut sym = Table::new("symmetry", &["theta_id", "nu_id", "relative_difference", "pass"]);
    let n = bank.len() as u64;
    let mut worst = 0.0f64;
    for i in 0..tol.symmetry_pairs as u64 {
        let t = (derive_seed(cfg.seed, EXP_SYMMETRY, 2 * i) % n) as usize;
        let v = (derive_seed(cfg.seed, EXP_SYMMETRY, 2 * i + 1) % n) as usize;
        let a = convolve_kernels(bank.kernel(t).values(), bank.kernel(v).values())?;
        let c = convolve_kernels(bank.kernel(v).values(), bank.kernel(t).values())?;
        let scale = a.values().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let diff = a
            .values()
            .iter()
            .zip(c.values())
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        let rel = diff / scale;
        worst = worst.max(rel);
        let pass = rel <= tol.symmetry;
        if !pass {
            out.failures.push(format!(
                "K_(theta,nu) symmetry for ({t},{v}): {rel:e} > {:e}",
                tol.symmetry
            ));
        }
        sym.rows.push(vec![t.to_string(), v.to_string(), fmt_num(rel), b(pass)]);
    }

    let c = tg.constants();
    out.report = json!({
        "grid_size": tg.len(),
        "grid_hash": tg.hash(),
        "kernel_order": g.order(),
        "h_min": tg.h_min(),
        "h_max": tg.h_max(),
        "m_of_k": c.m_of_k,
        "sigma_of_k": c.sigma_of_k,
        "worst_symmetry": worst,
        "pass": out.failures.is_empty(),
    });
    out.tables.extend([moments, checks, sym]);
    Ok(out)
}

fn calibrate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tg = theta_grid(cfg, cfg.window_eps())?;
    let mut samples = Table::new("calibration_samples", &["rep", "s1", "s2", "zeta"]);
    let cal = match cfg.effective_kappa_mode() {
        KappaMode::Analytic => calibration(cfg, &tg, cfg.eps, cfg.p)?,
        KappaMode::MonteCarlo => {
            let seed = derive_seed(cfg.seed, 0, 0);
            let s = sample_suprema(&tg, cfg.p, cfg.n_cal, seed, CALIBRATION_STREAM)?;
            for r in 0..s.len() {
                samples.rows.push(vec![
                    r.to_string(),
                    fmt_num(s.s1[r]),
                    fmt_num(s.s2[r]),
                    fmt_num(s.zeta[r]),
                ]);
            }
            KappaCalibration::from_sample(&s, cfg.effective_delta(cfg.eps))?
        }
    };
    let mut out = Outcome::new(json!({
        "calibration": cal,
        "grid_size": tg.len(),
        "grid_hash": tg.hash(),
    }));
    out.files.push(("calibration.json".into(), cal.to_json()?));
    out.tables.push(samples);
    Ok(out)
}

fn run_select(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tg = theta_grid(cfg, cfg.window_eps())?;
    let f = make_test_function(&cfg.function)?;
    let truth = f.sample(cfg.grid()?)?;
    let obs = Observation::simulate(&truth, cfg.eps, derive_seed(cfg.seed, EXP_SELECT, 0))?;
    let cal = calibration(cfg, &tg, cfg.window_eps(), cfg.p)?;
    let res = select(&tg, &obs, cfg.p, &cal)?;
    let bias = tg.bank().bias_field(res.theta_hat, &truth)?;
    let mut out = Outcome::new(json!({
        "theta_hat": res.theta_hat,
        "theta": res.theta,
        "objective": res.objective[res.theta_hat],
        "bhat": res.bhat[res.theta_hat],
        "sigma_sup": res.sigma_sup[res.theta_hat],
        "bias_norm": bias.lp_norm(cfg.p),
        "calibration": cal,
        "grid_size": tg.len(),
        "grid_hash": tg.hash(),
    }));
    let mut obj = Vec::new();
    res.write_objective_csv(&mut obj)?;
    out.files.push(("tables/objective.csv".into(), String::from_utf8(obj)?));
    let grid = *tg.grid();
    let mut est = Table::new("estimate", &["node", "value", "truth"]);
    for (j, v) in grid
        .region_indices(Region::Inner)
        .into_iter()
        .zip(res.estimate.values.values())
    {
        est.rows
            .push(vec![j.to_string(), fmt_num(*v), fmt_num(truth.values()[j])]);
    }
    out.tables.push(est);
    Ok(out)
}

fn bench_oracle(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tg = theta_grid(cfg, cfg.window_eps())?;
    let tol = &cfg.tolerances;
    let f = make_test_function(&cfg.function)?;
    let truth = f.sample(cfg.grid()?)?;
    let mut out = Outcome::new(Value::Null);

    let ideal = ideal_case(&tg, &truth, cfg.p)?;
    if !ideal.pass {
        out.failures.push(format!(
            "ideal case: ||B_thetahat|| = {} > (2M+1) min ||B|| = {}",
            ideal.bias_hat, ideal.bound
        ));
    }
    let contraction = contraction_check(&tg, &truth, cfg.p, 1.0 + tol.contraction_slack, tol.zero_bias_abs)?;
    let mut l1 = Table::new("contraction", &["theta_id", "bias_norm", "sup_pair", "bound", "pass"]);
    for r in &contraction {
        if !r.pass {
            out.failures.push(format!(
                "contraction at theta {}: sup ||B_(theta,nu) - B_nu|| = {} > M ||B_theta|| (1+slack) = {}",
                r.theta, r.sup_pair, r.bound
            ));
        }
        l1.rows.push(vec![
            r.theta.to_string(),
            fmt_num(r.bias_norm),
            fmt_num(r.sup_pair),
            fmt_num(r.bound),
            b(r.pass),
        ]);
    }

    let mut oracle = Table::new(
        "oracle",
        &[
            "eps",
            "p",
            "risk",
            "ci",
            "oracle_value",
            "remainder",
            "rhs",
            "ratio",
            "pass",
        ],
    );
    let mut rep = Value::Null;
    if cfg.eps > 0.0 {
        let cal = calibration(cfg, &tg, cfg.eps, cfg.p)?;
        let r = verify_oracle_inequality(&tg, &truth, cfg.eps, cfg.p, &cal, cfg.n_rep, cfg.seed, EXP_ORACLE)?;
        if !r.pass {
            out.failures.push(format!(
                "oracle inequality: risk {} - ci {} > (3+2M) inf + r(delta) = {}",
                r.lhs.risk, r.lhs.ci_halfwidth, r.rhs
            ));
        }
        oracle.rows.push(vec![
            fmt_num(cfg.eps),
            fmt_p(cfg.p),
            fmt_num(r.lhs.risk),
            fmt_num(r.lhs.ci_halfwidth),
            fmt_num(r.oracle_value),
            fmt_num(r.remainder),
            fmt_num(r.rhs),
            fmt_num(r.ratio),
            b(r.pass),
        ]);
        rep = serde_json::to_value(&r)?;
    }
    out.report = json!({
        "grid_size": tg.len(),
        "grid_hash": tg.hash(),
        "ideal_case": ideal,
        "contraction_pass": contraction.iter().all(|r| r.pass),
        "oracle_inequality": rep,
        "pass": out.failures.is_empty(),
    });
    out.tables.extend([l1, oracle]);
    Ok(out)
}

fn bench_rate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let f = make_test_function(&cfg.function)?;
    let source = match cfg.effective_kappa_mode() {
        KappaMode::MonteCarlo => KappaSource::MonteCarlo {
            delta: cfg.delta,
            n_cal: cfg.n_cal,
        },
        KappaMode::Analytic => KappaSource::Analytic {
            delta: cfg.effective_delta(cfg.eps_list[0]),
            c3: cfg.c3,
        },
    };
    let r = rate_experiment(
        &f,
        &cfg.eps_list,
        &cfg.theta_grid,
        cfg.grid()?,
        cfg.p,
        source,
        cfg.n_rep,
        cfg.seed,
        EXP_RATE,
    )?;
    let tol = &cfg.tolerances;
    let mut out = Outcome::new(Value::Null);
    let mut t = Table::new(
        "rate",
        &[
            "eps",
            "risk",
            "ci",
            "phi",
            "ratio",
            "oracle_risk",
            "oracle_ci",
            "kappa",
            "grid_size",
            "h_min",
            "h_max",
            "psi",
            "upper_constant",
        ],
    );
    for pt in &r.points {
        if pt.ratio > tol.rate_ratio {
            out.failures.push(format!(
                "eps {}: selected risk / oracle risk = {} > {}",
                pt.eps, pt.ratio, tol.rate_ratio
            ));
        }
        t.rows.push(vec![
            fmt_num(pt.eps),
            fmt_num(pt.selected.risk),
            fmt_num(pt.selected.ci_halfwidth),
            fmt_num(pt.phi),
            fmt_num(pt.ratio),
            fmt_num(pt.oracle.risk),
            fmt_num(pt.oracle.ci_halfwidth),
            fmt_num(pt.kappa),
            pt.grid_size.to_string(),
            fmt_num(pt.h_min),
            fmt_num(pt.h_max),
            fmt_num(pt.psi),
            fmt_num(pt.upper_constant),
        ]);
    }
    if (r.slope - r.target_exponent).abs() > tol.rate_slope {
        out.failures.push(format!(
            "fitted slope {} is outside {} +/- {}",
            r.slope, r.target_exponent, tol.rate_slope
        ));
    }
    out.report = json!({ "rate": r, "pass": out.failures.is_empty() });
    out.tables.push(t);
    Ok(out)
}

/// `n` indices spread evenly over `0..len`.
pub fn spread_indices(len: usize, n: usize) -> Vec<usize> {
    if n <= 1 || len == 1 {
        return vec![0];
    }
    let mut v: Vec<usize> = (0..n)
        .map(|k| ((k * (len - 1)) as f64 / (n - 1) as f64).round() as usize)
        .collect();
    v.dedup();
    v
}

fn bench_sandwich(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tg = theta_grid(cfg, cfg.window_eps())?;
    let f = make_test_function(&cfg.function)?;
    let truth = f.sample(cfg.grid()?)?;
    let thetas = spread_indices(tg.len(), cfg.n_fixed);
    let ps: Vec<f64> = cfg.p_list.iter().map(|p| p.0).collect();
    let rows = risk_sandwich(&tg, &thetas, &truth, cfg.eps, &ps, cfg.n_rep, cfg.seed, EXP_SANDWICH)?;
    let mut out = Outcome::new(Value::Null);
    let mut t = Table::new(
        "sandwich",
        &[
            "theta_id",
            "p",
            "bias_norm",
            "noise_norm",
            "risk",
            "ci",
            "lower",
            "upper",
            "pass",
        ],
    );
    for r in &rows {
        if !r.pass {
            out.failures.push(format!(
                "sandwich at theta {} p {}: {} <= {} <= {} fails",
                r.theta,
                fmt_p(r.p),
                r.lower,
                r.risk,
                r.upper
            ));
        }
        t.rows.push(vec![
            r.theta.to_string(),
            fmt_p(r.p),
            fmt_num(r.bias_norm),
            fmt_num(r.noise_norm),
            fmt_num(r.risk),
            fmt_num(r.risk_ci),
            fmt_num(r.lower),
            fmt_num(r.upper),
            b(r.pass),
        ]);
    }
    out.report = json!({ "rows": rows, "grid_hash": tg.hash(), "pass": out.failures.is_empty() });
    out.tables.push(t);
    Ok(out)
}
