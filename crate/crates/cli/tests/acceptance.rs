//! Acceptance gate: one line per criterion, `PASS` or `FAIL`.
//!
//! Run with `cargo test -p structsel-cli --test acceptance -- --nocapture`.

use std::f64::consts::FRAC_PI_4;
use std::path::Path;
use std::process::Command as Proc;
use std::time::Instant;

use structsel_cli::commands::run;
use structsel_cli::config::{Command, ExperimentConfig, PValue};
use structsel_core::oracle_bench::{kappa_scaling, lower_estimator_check, make_test_function, Family, FunctionSpec};
use structsel_core::rng::derive_seed;
use structsel_core::selection::{calibrate_kappa, calibration_exceedance, ThetaGrid, ThetaGridConfig};

const INF: f64 = f64::INFINITY;

struct Gate {
    lines: Vec<String>,
    failed: usize,
}

impl Gate {
    fn record(&mut self, id: usize, name: &str, pass: bool, detail: String, start: Instant) {
        let line = format!(
            "criterion {id:>2} {:<28} {}  {detail}  [{:.1} s]",
            name,
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        println!("{line}");
        self.lines.push(line);
        if !pass {
            self.failed += 1;
        }
    }
}

fn d1_grid_config(n_h: usize, floor: f64) -> ThetaGridConfig {
    ThetaGridConfig {
        dim: 1,
        n_angles: 1,
        n_h,
        h_floor_cells: Some(floor),
        ..Default::default()
    }
}

fn d2_grid_config(n_h: usize, floor: f64) -> ThetaGridConfig {
    ThetaGridConfig {
        dim: 2,
        n_angles: 2,
        n_h,
        h_floor_cells: Some(floor),
        ..Default::default()
    }
}

fn function(family: Family, dim: usize, angle: f64) -> FunctionSpec {
    let angles = if dim == 2 { vec![angle] } else { Vec::new() };
    FunctionSpec {
        family,
        dim,
        angles,
        ..Default::default()
    }
}

fn d1(cmd: Command) -> ExperimentConfig {
    ExperimentConfig {
        command: cmd,
        dim: 1,
        points_per_axis: 1001,
        theta_grid: d1_grid_config(8, 4.0),
        function: function(Family::SingleIndex, 1, 0.0),
        ..Default::default()
    }
}

fn d2(cmd: Command, n: usize) -> ExperimentConfig {
    ExperimentConfig {
        command: cmd,
        dim: 2,
        points_per_axis: n,
        theta_grid: d2_grid_config(4, 2.0),
        function: function(Family::SingleIndex, 2, FRAC_PI_4),
        ..Default::default()
    }
}

fn criterion_1(gate: &mut Gate) {
    let t = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for (dim, n) in [(1, 2001), (2, 257)] {
        for order in [0, 2] {
            let cfg = ExperimentConfig {
                command: Command::VerifyKernels,
                dim,
                points_per_axis: n,
                eps: 0.1,
                theta_grid: ThetaGridConfig {
                    dim,
                    kernel_order: order,
                    ..Default::default()
                },
                function: FunctionSpec {
                    dim,
                    ..Default::default()
                },
                ..Default::default()
            };
            let out = run(&cfg).expect("verify-kernels runs");
            for f in &out.failures {
                println!("    d={dim} order={order}: {f}");
            }
            ok &= out.failures.is_empty();
            parts.push(format!("d={dim},l={order}:{}θ", out.report["grid_size"]));
        }
    }
    gate.record(1, "kernel identities", ok, parts.join(" "), t);
}

fn contraction_grid(cmd: Command, family: Family, p: f64) -> ExperimentConfig {
    let angle = if family == Family::SingleIndex { FRAC_PI_4 } else { 0.0 };
    ExperimentConfig {
        eps: 0.0,
        p,
        theta_grid: ThetaGridConfig {
            h_min: Some(0.05),
            h_max: Some(0.4),
            ..d2_grid_config(5, 2.0)
        },
        function: function(family, 2, angle),
        ..d2(cmd, 161)
    }
}

fn criterion_2_3(gate: &mut Gate) {
    let t = Instant::now();
    let mut contraction_ok = true;
    let mut ideal_ok = true;
    let mut size = 0;
    let contraction_families = [Family::SingleIndex, Family::Additive, Family::Polynomial];
    let bench_families = [
        Family::SingleIndex,
        Family::Additive,
        Family::ProjectionPursuit,
        Family::MultiIndex,
        Family::Polynomial,
        Family::Zero,
    ];
    let mut worst_ideal = 0.0f64;
    for family in bench_families {
        for p in [2.0, INF] {
            let out = run(&contraction_grid(Command::BenchOracle, family, p)).expect("bench-oracle runs");
            size = out.report["grid_size"].as_u64().unwrap();
            let contraction = out.report["contraction_pass"].as_bool().unwrap();
            let ideal = out.report["ideal_case"]["pass"].as_bool().unwrap();
            let (bh, bd) = (
                out.report["ideal_case"]["bias_hat"].as_f64().unwrap(),
                out.report["ideal_case"]["bound"].as_f64().unwrap(),
            );
            if bd > 0.0 {
                worst_ideal = worst_ideal.max(bh / bd);
            }
            if contraction_families.contains(&family) && !contraction {
                contraction_ok = false;
                println!("    contraction fails for {family:?} p={p}");
            }
            if !ideal {
                ideal_ok = false;
                println!("    ideal case fails for {family:?} p={p}: {bh} > {bd}");
            }
        }
    }
    assert!(size >= 60, "grid has {size} points");
    gate.record(
        2,
        "bias contraction",
        contraction_ok,
        format!("{size} θ, 3 functions, p ∈ {{2, inf}}"),
        t,
    );
    gate.record(
        3,
        "ideal-case oracle constant",
        ideal_ok,
        format!("max ratio to bound {worst_ideal:.3}"),
        t,
    );
}

fn criterion_4(gate: &mut Gate) {
    let t = Instant::now();
    let cfg = d1(Command::Calibrate);
    let tg = ThetaGrid::build(&cfg.theta_grid, 0.1, cfg.grid().unwrap()).unwrap();
    let cal = calibrate_kappa(&tg, INF, 0.1, 400, derive_seed(cfg.seed, 0, 0)).unwrap();
    let ex = calibration_exceedance(&tg, &cal, 400, derive_seed(cfg.seed, 4, 0)).unwrap();
    let pass = ex.fraction <= ex.threshold;
    gate.record(
        4,
        "calibration validity",
        pass,
        format!(
            "kappa {:.3}, exceedance {:.4} <= {:.4}",
            cal.kappa, ex.fraction, ex.threshold
        ),
        t,
    );
}

fn criterion_5(gate: &mut Gate) {
    let t = Instant::now();
    let cfg = d1(Command::Select);
    let grid = cfg.grid().unwrap();
    let tg = ThetaGrid::build(&cfg.theta_grid, 0.1, grid).unwrap();
    let cal = calibrate_kappa(&tg, INF, 0.1, 200, derive_seed(cfg.seed, 0, 0)).unwrap();
    let truth = make_test_function(&cfg.function).unwrap().sample(grid).unwrap();
    let r = lower_estimator_check(&tg, &truth, 0.1, INF, &cal, 200, cfg.seed, 5).unwrap();
    gate.record(
        5,
        "lower-estimator property",
        r.pass,
        format!("{}/{} = {:.3} >= {:.3}", r.hits, r.n_rep, r.fraction, r.threshold),
        t,
    );
}

fn criterion_6(gate: &mut Gate) {
    let t = Instant::now();
    let configs = [
        ExperimentConfig {
            eps: 0.1,
            ..d1(Command::BenchOracle)
        },
        ExperimentConfig {
            eps: 0.05,
            ..d1(Command::BenchOracle)
        },
        ExperimentConfig {
            eps: 0.1,
            theta_grid: d2_grid_config(3, 2.0),
            ..d2(Command::BenchOracle, 129)
        },
    ];
    let mut ok = true;
    let mut ratios = Vec::new();
    for cfg in configs {
        let cfg = ExperimentConfig { n_rep: 100, ..cfg };
        let out = run(&cfg).expect("bench-oracle runs");
        let r = &out.report["oracle_inequality"];
        let pass = r["pass"].as_bool().unwrap();
        ok &= pass;
        ratios.push(format!(
            "d={} eps={}: {:.3} (lower {:.3})",
            cfg.dim,
            cfg.eps,
            r["ratio"].as_f64().unwrap(),
            r["ratio_lower"].as_f64().unwrap()
        ));
    }
    gate.record(6, "oracle inequality", ok, ratios.join("; "), t);
}

fn criterion_7(gate: &mut Gate) {
    let t = Instant::now();
    let cfg = ExperimentConfig {
        eps: 0.1,
        n_rep: 300,
        n_fixed: 5,
        p_list: vec![PValue(1.0), PValue(2.0), PValue(INF)],
        ..d2(Command::BenchSandwich, 161)
    };
    let out = run(&cfg).expect("bench-sandwich runs");
    let rows = out.report["rows"].as_array().unwrap().len();
    for f in &out.failures {
        println!("    {f}");
    }
    gate.record(
        7,
        "risk sandwich",
        out.failures.is_empty(),
        format!("{rows} (θ, p) rows"),
        t,
    );
}

fn criterion_8(gate: &mut Gate) {
    let t = Instant::now();
    let cfg = ExperimentConfig {
        p: INF,
        eps_list: vec![0.2, 0.1, 0.05, 0.025],
        delta: 0.2,
        n_cal: 100,
        n_rep: 50,
        ..d2(Command::BenchRate, 161)
    };
    let out = run(&cfg).expect("bench-rate runs");
    let r = &out.report["rate"];
    let ratios: Vec<String> = r["points"]
        .as_array()
        .unwrap()
        .iter()
        .map(|pt| format!("{:.2}", pt["ratio"].as_f64().unwrap()))
        .collect();
    for f in &out.failures {
        println!("    {f}");
    }
    gate.record(
        8,
        "adaptive rate",
        out.failures.is_empty(),
        format!(
            "slope {:.3} (target 0.667 ± 0.15), risk ratios [{}] <= 3",
            r["slope"].as_f64().unwrap(),
            ratios.join(", ")
        ),
        t,
    );
}

fn criterion_9(gate: &mut Gate) {
    let t = Instant::now();
    let cfg = ExperimentConfig {
        theta_grid: ThetaGridConfig {
            h_min: Some(0.01),
            h_max: Some(0.3),
            ..d1_grid_config(8, 4.0)
        },
        ..d1(Command::Calibrate)
    };
    let tg = ThetaGrid::build(&cfg.theta_grid, 0.1, cfg.grid().unwrap()).unwrap();
    let rows = kappa_scaling(&tg, &[0.2, 0.1, 0.05, 0.025], 800, derive_seed(cfg.seed, 9, 0)).unwrap();
    let scaled: Vec<f64> = rows.iter().map(|r| r.scaled).collect();
    let hi = scaled.iter().cloned().fold(f64::MIN, f64::max);
    let lo = scaled.iter().cloned().fold(f64::MAX, f64::min);
    let shown: Vec<String> = scaled.iter().map(|s| format!("{s:.3}")).collect();
    gate.record(
        9,
        "kappa scaling",
        hi / lo < 2.0,
        format!(
            "kappa/sqrt(ln 1/eps) = [{}], spread {:.3} < 2",
            shown.join(", "),
            hi / lo
        ),
        t,
    );
}

fn run_binary(config: &Path, out: &Path) {
    let status = Proc::new(env!("CARGO_BIN_EXE_structsel"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .status()
        .expect("binary runs");
    // exit 2 means a check failed; artifacts are still written
    assert!(matches!(status.code(), Some(0 | 2)), "structsel exited with {status}");
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir.join("tables"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn criterion_10(gate: &mut Gate) {
    let t = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let mut ok = true;
    let mut compared = 0;
    let configs = [
        ExperimentConfig {
            n_cal: 200,
            ..d1(Command::Select)
        },
        ExperimentConfig {
            n_cal: 200,
            n_rep: 40,
            ..d1(Command::BenchOracle)
        },
        ExperimentConfig {
            n_rep: 40,
            ..d1(Command::BenchSandwich)
        },
        d1(Command::Calibrate),
        ExperimentConfig {
            theta_grid: ThetaGridConfig {
                dim: 2,
                ..Default::default()
            },
            ..d2(Command::VerifyKernels, 129)
        },
    ];
    for (i, cfg) in configs.iter().enumerate() {
        let path = tmp.path().join(format!("config{i}.json"));
        std::fs::write(&path, cfg.to_json()).unwrap();
        let (a, b) = (tmp.path().join(format!("a{i}")), tmp.path().join(format!("b{i}")));
        run_binary(&path, &a);
        run_binary(&path, &b);
        let (fa, fb) = (csv_files(&a), csv_files(&b));
        ok &= !fa.is_empty() && fa == fb;
        compared += fa.len();
    }
    gate.record(
        10,
        "reproducibility",
        ok,
        format!("{compared} CSV files byte-identical"),
        t,
    );
}

#[test]
fn acceptance() {
    let mut gate = Gate {
        lines: Vec::new(),
        failed: 0,
    };
    criterion_1(&mut gate);
    criterion_2_3(&mut gate);
    criterion_4(&mut gate);
    criterion_5(&mut gate);
    criterion_6(&mut gate);
    criterion_7(&mut gate);
    criterion_8(&mut gate);
    criterion_9(&mut gate);
    criterion_10(&mut gate);
    println!("\nacceptance summary:");
    for l in &gate.lines {
        println!("{l}");
    }
    assert_eq!(gate.failed, 0, "{} acceptance criteria failed", gate.failed);
}
