//! Acceptance report: the full simulation study at its default settings plus
//! the property suites, one PASS/FAIL line per check.
//!
//! Numeric misses are reported, not asserted, so the rest of the report still
//! runs; set `ACCEPTANCE_STRICT=1` to turn any FAIL into a test failure. The
//! report is also written to `acceptance.txt` under cargo's test tmpdir.
//! Setup errors (a crashed fit, an unwritable directory) always fail.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::io::Write as _;
use std::path::Path;

use depmix_cli::replicate::{replicate, ExampleTable, Study};
use depmix_core::inference::McmcConfig;
use depmix_core::models::{LddpPriorKind, ModelFamily, ModelOptions, ModelSpec};
use depmix_core::predictive::{predictive_summary, y_grid, PredictOptions, DEFAULT_GRID_SIZE};
use depmix_core::simstudy::{self, Example, MetricsReport, DEFAULT_TEST_SEED, DEFAULT_TEST_SIZE};
use depmix_core::{fit, RngStream};

const SEED: u64 = 1;

struct Report {
    lines: Vec<String>,
    failed: usize,
}

impl Report {
    fn check(&mut self, id: &str, what: &str, pass: bool, detail: String) {
        let line = format!("{} [{id}] {what}: {detail}", if pass { "PASS" } else { "FAIL" });
        // straight to the handle so the line shows without --nocapture
        let _ = writeln!(std::io::stdout().lock(), "{line}");
        self.failed += usize::from(!pass);
        self.lines.push(line);
    }
}

fn metrics<'a>(t: &'a ExampleTable, label: &str) -> &'a MetricsReport {
    let row = t
        .rows
        .iter()
        .chain(&t.sensitivity)
        .find(|r| r.model == label)
        .unwrap_or_else(|| panic!("no row {label} in example {}", t.example));
    row.metrics
        .as_ref()
        .unwrap_or_else(|| panic!("example {} {label} failed: {:?}", t.example, row.error))
}

fn study(examples: Vec<Example>, mcmc: McmcConfig, n: Option<usize>, test_size: usize, jobs: usize) -> Study {
    Study {
        examples,
        models: ModelFamily::ALL.to_vec(),
        seed: SEED,
        mcmc,
        options: ModelOptions::default(),
        n,
        test_size,
        test_seed: DEFAULT_TEST_SEED,
        jobs,
        keep_chains: false,
    }
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn replication(r: &mut Report, tables: &[ExampleTable]) {
    let [t1, t2, t3] = tables else {
        panic!("expected three tables")
    };

    let bs = metrics(t1, "lddp-bs");
    let lddp = metrics(t1, "lddp");
    let joint = metrics(t1, "joint-dp");
    r.check(
        "1a",
        "ex1 lddp-bs regression error <= 0.03",
        bs.regression_err <= 0.03,
        format!("{:.4}", bs.regression_err),
    );
    r.check(
        "1b",
        "ex1 lddp-bs coverage in [0.85, 1]",
        (0.85..=1.0).contains(&bs.coverage),
        format!("{:.4}", bs.coverage),
    );
    r.check(
        "1c",
        "ex1 lddp regression error >= 2x lddp-bs",
        lddp.regression_err >= 2.0 * bs.regression_err,
        format!(
            "{:.4} vs {:.4} (ratio {:.2})",
            lddp.regression_err,
            bs.regression_err,
            lddp.regression_err / bs.regression_err
        ),
    );
    r.check(
        "1d",
        "ex1 lddp coverage <= 0.6",
        lddp.coverage <= 0.6,
        format!("{:.4}", lddp.coverage),
    );
    r.check(
        "1e",
        "ex1 joint-dp CI length >= 1.5x lddp-bs",
        joint.ci_length >= 1.5 * bs.ci_length,
        format!(
            "{:.4} vs {:.4} (ratio {:.2})",
            joint.ci_length,
            bs.ci_length,
            joint.ci_length / bs.ci_length
        ),
    );

    for m in ["lddp", "lddp-bs"] {
        let e = metrics(t2, m).regression_err;
        r.check(
            "2a",
            &format!("ex2 {m} regression error >= 0.3"),
            e >= 0.3,
            format!("{e:.4}"),
        );
    }
    for m in ["joint-dp", "nw", "lsbp"] {
        let e = metrics(t2, m).regression_err;
        r.check(
            "2b",
            &format!("ex2 {m} regression error <= 0.12"),
            e <= 0.12,
            format!("{e:.4}"),
        );
    }

    for m in ["lddp", "lddp-bs"] {
        let x = metrics(t3, m);
        r.check(
            "3a",
            &format!("ex3 {m} coverage <= 0.05"),
            x.coverage <= 0.05,
            format!("{:.4}", x.coverage),
        );
        r.check(
            "3b",
            &format!("ex3 {m} regression error in [0.8, 1.2]"),
            (0.8..=1.2).contains(&x.regression_err),
            format!("{:.4}", x.regression_err),
        );
    }
    let nw = metrics(t3, "nw").regression_err;
    r.check("3c", "ex3 nw regression error <= 0.55", nw <= 0.55, format!("{nw:.4}"));
    let p2 = metrics(t3, "lsbp-ns (P2)");
    r.check(
        "3d",
        "ex3 lsbp-ns P2 coverage >= 0.85",
        p2.coverage >= 0.85,
        format!("{:.4}", p2.coverage),
    );
    r.check(
        "3e",
        "ex3 lsbp-ns P2 regression error <= 0.45",
        p2.regression_err <= 0.45,
        format!("{:.4}", p2.regression_err),
    );
    let p3 = metrics(t3, "lsbp-ns (P3)");
    r.check(
        "3f",
        "ex3 lsbp-ns P3 coverage <= 0.1",
        p3.coverage <= 0.1,
        format!("{:.4}", p3.coverage),
    );
}

fn prior_sensitivity(r: &mut Report, t1: &ExampleTable) {
    let data = Example::One.generate(Example::One.default_n(), SEED).unwrap();
    let opts = ModelOptions {
        lddp_prior: LddpPriorKind::Noninformative,
        ..ModelOptions::default()
    };
    let spec = ModelSpec::build(ModelFamily::LddpBs, &data, &opts).unwrap();
    let cfg = McmcConfig {
        seed: SEED,
        stream: RngStream::new(SEED, 0).derive(90_001).stream,
        ..McmcConfig::default()
    };
    let chain = fit(&data, &spec, &cfg).unwrap();
    let points = Example::One.test_set(DEFAULT_TEST_SIZE, DEFAULT_TEST_SEED);
    let grid = y_grid(&data, DEFAULT_GRID_SIZE);
    let popts = PredictOptions {
        seed: cfg.stream,
        ..PredictOptions::default()
    };
    let summary = predictive_summary(&spec, &chain.draws, &points, &grid, &popts).unwrap();
    let flat = simstudy::evaluate(&summary, Example::One).unwrap();
    let informed = metrics(t1, "lddp-bs");
    r.check(
        "4a",
        "ex1 lddp-bs noninformative CI length >= 5x data-driven",
        flat.ci_length >= 5.0 * informed.ci_length,
        format!(
            "{:.4} vs {:.4} (ratio {:.2})",
            flat.ci_length,
            informed.ci_length,
            flat.ci_length / informed.ci_length
        ),
    );
    r.check(
        "4b",
        "ex1 lddp-bs noninformative density error >= 1.5x data-driven",
        flat.density_err >= 1.5 * informed.density_err,
        format!(
            "{:.4} vs {:.4} (ratio {:.2})",
            flat.density_err,
            informed.density_err,
            flat.density_err / informed.density_err
        ),
    );
}

fn properties(r: &mut Report) {
    let dev = oracles::simplex_deviation(1000);
    r.check(
        "5a",
        "weights sum to one at 1000 points, every construction",
        dev < 1e-12,
        format!("max |sum - 1| = {dev:.2e}"),
    );

    let z = oracles::pg_mean_z_scores(&[0.1, 1.0, 2.0, 5.0], 20_000);
    let detail = z
        .iter()
        .map(|(c, z)| format!("c={c}: {z:.2} se"))
        .collect::<Vec<_>>()
        .join(", ");
    r.check(
        "5b",
        "PG(1, c) sample means within 3 se",
        z.iter().all(|(_, z)| *z < 3.0),
        detail,
    );

    let nig = oracles::nig_quadrature_errors();
    let niw = oracles::niw_quadrature_errors();
    let worst = nig.iter().chain(&niw).copied().fold(0.0, f64::max);
    r.check(
        "5c",
        "NIG and NIW updates vs grid quadrature within 1e-3",
        worst < 1e-3,
        format!("max error {worst:.2e}"),
    );

    let (x, y, prior, alpha) = oracles::joint_prior_one_covariate();
    let e1 = oracles::joint_allocation_error(x, y, prior, alpha);
    let (x, y, prior, alpha) = oracles::joint_prior_two_covariates();
    let e2 = oracles::joint_allocation_error(x, y, prior, alpha);
    let worst = e1.max(e2);
    r.check(
        "5d",
        "joint-dp allocation vs enumeration at n=4 within 1e-8",
        worst < 1e-8,
        format!("max error {worst:.2e}"),
    );

    let p = oracles::lddp_geweke_p_values(5000);
    let min = p.iter().copied().fold(1.0, f64::min);
    r.check(
        "5e",
        "lddp Geweke test at n=20, KS p > 0.001",
        min > 0.001,
        format!("p-values {p:.3?}"),
    );

    let (err, at) = oracles::predictive_mass_error();
    r.check(
        "5f",
        "per-draw predictive densities integrate to 1 within 1e-3",
        err < 1e-3,
        format!("max |mass - 1| = {err:.2e} ({at})"),
    );

    let cases = oracles::binder_cases(200);
    let gap = cases
        .iter()
        .map(|c| (c.estimate_loss - c.oracle_loss).abs())
        .fold(0.0, f64::max);
    r.check(
        "5g",
        "binder estimate vs exhaustive search, 200 five-point cases",
        gap < 1e-12,
        format!("max loss gap {gap:.2e}"),
    );

    let l1 = oracles::l1_shifted_normals(0.5);
    let analytic = 2.0 * (2.0 * depmix_core::stats::special::normal_cdf(0.25) - 1.0);
    r.check(
        "5h",
        "l1 between N(0,1) and N(0.5,1) equals 0.3829 within 1e-3",
        (l1 - 0.3829).abs() < 1e-3,
        format!("{l1:.6} (closed form 2(2Phi(0.25)-1) = {analytic:.6})"),
    );
}

fn tables_identical(a: &Path, b: &Path) -> Result<usize, String> {
    let mut compared = 0;
    for ex in Example::ALL {
        for f in ["metrics.csv", "metrics.json", "metrics.txt", "prior_sensitivity.csv"] {
            let pa = a.join(format!("example{}", ex.id())).join(f);
            let pb = b.join(format!("example{}", ex.id())).join(f);
            match (std::fs::read(&pa), std::fs::read(&pb)) {
                (Ok(x), Ok(y)) if x == y => compared += 1,
                (Ok(_), Ok(_)) => return Err(format!("{} differs", pa.display())),
                (Err(_), Err(_)) => {}
                _ => return Err(format!("{f} written by only one run")),
            }
        }
    }
    Ok(compared)
}

fn determinism(r: &mut Report, root: &Path) {
    // shortened chains keep this cheap; the code path is the full study's
    let mcmc = McmcConfig::short(400, 200, 4, SEED);
    let a = root.join("determinism-a");
    let b = root.join("determinism-b");
    replicate(&study(Example::ALL.to_vec(), mcmc.clone(), Some(120), 40, 1), &a).unwrap();
    replicate(&study(Example::ALL.to_vec(), mcmc, Some(120), 40, 3), &b).unwrap();
    let outcome = tables_identical(&a, &b);
    r.check(
        "6",
        "replicate twice with the same seed gives byte-identical tables",
        matches!(outcome, Ok(n) if n > 0),
        match outcome {
            Ok(n) => format!("{n} table files identical (1 vs 3 worker threads)"),
            Err(e) => e,
        },
    );
}

#[test]
fn acceptance_report() {
    let root = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = std::fs::remove_dir_all(&root);
    let mut r = Report {
        lines: Vec::new(),
        failed: 0,
    };

    let full = study(
        Example::ALL.to_vec(),
        McmcConfig::default(),
        None,
        DEFAULT_TEST_SIZE,
        jobs(),
    );
    let (tables, all_ok) = replicate(&full, &root.join("study")).unwrap();
    assert!(all_ok, "a study cell failed");
    replication(&mut r, &tables);
    prior_sensitivity(&mut r, &tables[0]);
    properties(&mut r);
    determinism(&mut r, &root);

    let summary = format!("{} of {} checks passed", r.lines.len() - r.failed, r.lines.len());
    let _ = writeln!(std::io::stdout().lock(), "{summary}");
    r.lines.push(summary);
    std::fs::write(root.join("acceptance.txt"), r.lines.join("\n") + "\n").unwrap();

    if std::env::var_os("ACCEPTANCE_STRICT").is_some_and(|v| v != "0") {
        assert_eq!(r.failed, 0, "acceptance failures:\n{}", r.lines.join("\n"));
    }
}
