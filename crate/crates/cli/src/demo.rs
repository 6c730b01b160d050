use serde::Serialize;

use psrkit::derive::{derive_from_pomdp, find_core_tests};
use psrkit::examples::{self, random_markov, random_pomdp};
use psrkit::sysdyn::{build_matrix, rank_plateau, DEFAULT_ENTRY_BUDGET};
use psrkit::Step;

use crate::commands::print_json;
use crate::{DemoName, Failure, Format};

#[derive(Serialize)]
struct Check {
    name: String,
    pass: bool,
    detail: String,
}

#[derive(Serialize)]
struct DemoReport {
    demo: &'static str,
    pass: bool,
    checks: Vec<Check>,
}

fn check(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        pass,
        detail: detail.into(),
    }
}

fn float_reset(tol: f64) -> Result<Vec<Check>, Failure> {
    let mut checks = Vec::new();
    let series = examples::float_reset_series_check(20)?;
    let prefix: Vec<String> = series.reset_one.iter().take(9).map(|v| v.to_string()).collect();
    checks.push(check("series", series.pass, format!("p(r1|h) = {}, ...", prefix.join(", "))));

    let m = examples::float_reset();
    let derived = derive_from_pomdp(&m, Some(&examples::float_reset_core_tests()))?;
    let p0: Vec<f64> = derived.model.initial_prediction().iter().copied().collect();
    checks.push(check(
        "initial predictions",
        p0 == [1.0, 0.5, 0.5, 0.375, 0.375],
        format!("p(Q|eps) = {p0:?}"),
    ));
    let col: Vec<f64> = derived.model.extension_matrix(Step::new(0, 0)).column(4).iter().copied().collect();
    let expected = [0.0625, -0.0625, -0.75, 0.75, 1.0];
    let ok = col.iter().zip(expected).all(|(x, e)| (x - e).abs() <= 1e-9);
    let rounded: Vec<String> = col.iter().map(|x| format!("{x:.6}")).collect();
    checks.push(check("f0 extension of f0.f0.f0.f0.r1", ok, format!("m = [{}]", rounded.join(", "))));

    let p = rank_plateau(&m, 4, 4, DEFAULT_ENTRY_BUDGET, tol);
    let q = find_core_tests(&m);
    checks.push(check(
        "linear dimension",
        p.plateaued && p.rank == 5 && q.len() == 5,
        format!("plateau rank {}, {} core tests found", p.rank, q.len()),
    ));
    Ok(checks)
}

fn rotate_register(tol: f64) -> Result<Vec<Check>, Failure> {
    let mut checks = Vec::new();
    for (k, d) in [(2, 4), (3, 5)] {
        let m = examples::rotate_register(k)?;
        let r = build_matrix(&m, d, d).numerical_rank_with_tol(tol);
        checks.push(check(
            format!("k = {k}"),
            r == 1 << k,
            format!("rank {r} at depths ({d},{d}), 2^k = {}", 1 << k),
        ));
    }
    Ok(checks)
}

fn fig6() -> Vec<Check> {
    let r = examples::fig6_confound_check(3);
    let mut checks = vec![
        check(
            "tests starting with a agree on s2, s3",
            r.a_deviation_s2_s3 <= 1e-12,
            format!("max deviation {:e}", r.a_deviation_s2_s3),
        ),
        check(
            "tests starting with b agree on s1, s3",
            r.b_deviation_s1_s3 <= 1e-12,
            format!("max deviation {:e}", r.b_deviation_s1_s3),
        ),
    ];
    for e in &r.entries {
        let detail = match (&e.pair, &e.witness) {
            (Some((s, t)), Some(w)) => format!("{s} and {t} agree here but differ on {w}"),
            _ => "every pair separated".to_string(),
        };
        checks.push(check(format!("actions {}", e.actions), e.pair.is_some(), detail));
    }
    checks
}

fn markov_bound(seed: u64, tol: f64) -> Vec<Check> {
    (0..20u64)
        .map(|i| {
            let n = 1 + i as usize % 2;
            let m = random_markov(n, 2, 2, seed.wrapping_add(i));
            let bound = 4usize.pow(n as u32);
            let ranks: Vec<usize> = (1..=4).map(|d| build_matrix(&m, d, d).numerical_rank_with_tol(tol)).collect();
            check(
                format!("markov {i} (order {n})"),
                ranks.iter().all(|&r| r <= bound),
                format!("ranks {ranks:?} <= {bound}"),
            )
        })
        .collect()
}

fn pomdp_bound(seed: u64, tol: f64) -> Vec<Check> {
    (0..20u64)
        .map(|i| {
            let k = 2 + i as usize % 5;
            let m = random_pomdp(k, 2, 2, seed.wrapping_add(i));
            let ranks: Vec<usize> = (1..=4).map(|d| build_matrix(&m, d, d).numerical_rank_with_tol(tol)).collect();
            check(
                format!("pomdp {i} ({k} states)"),
                ranks.iter().all(|&r| r <= k),
                format!("ranks {ranks:?} <= {k}"),
            )
        })
        .collect()
}

pub fn run(name: DemoName, seed: u64, format: Format, tol: f64) -> Result<(), Failure> {
    let (demo, checks) = match name {
        DemoName::FloatReset => ("float-reset", float_reset(tol)?),
        DemoName::RotateRegister => ("rotate-register", rotate_register(tol)?),
        DemoName::Fig6 => ("fig6", fig6()),
        DemoName::Theorem1 => ("theorem1", markov_bound(seed, tol)),
        DemoName::Theorem2 => ("theorem2", pomdp_bound(seed, tol)),
    };
    let report = DemoReport {
        demo,
        pass: checks.iter().all(|c| c.pass),
        checks,
    };
    if format == Format::Json {
        print_json(&report);
    } else {
        for c in &report.checks {
            println!("[{}] {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        println!("{}", if report.pass { "PASS" } else { "FAIL" });
    }
    if report.pass {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        Err(Failure::Check(format!("failed checks: {}", failed.join(", "))))
    }
}
