use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use psrkit::derive::{derive_from_matrix, derive_from_pomdp};
use psrkit::examples::ExampleSpec;
use psrkit::models::{load_model, sample_history, write_model};
use psrkit::sequence::count_sequences;
use psrkit::sysdyn::{build_within, rank_plateau, DEFAULT_ENTRY_BUDGET};
use psrkit::{Alphabet, DynamicalModel, History, Model, Step, SysDynMatrix, Test, TAU_ZERO};

use crate::{Depths, Failure, Format};

/// Largest |Δp| accepted as equivalent.
const EQUIVALENCE_TOL: f64 = 1e-7;

pub fn load(spec: &str) -> Result<Model, Failure> {
    if let Some(name) = spec.strip_prefix('@') {
        let example: ExampleSpec = name.parse()?;
        return Ok(example.build()?.into());
    }
    load_model(spec).map_err(|e| Failure::Input(format!("{spec}: {e}")))
}

fn build<M: DynamicalModel>(model: &M, depths: Depths) -> Result<SysDynMatrix, Failure> {
    let budget = depths.budget();
    build_within(model, depths.hist_depth, depths.test_depth, budget).ok_or_else(|| {
        Failure::Budget(format!(
            "matrix at depths ({}, {}) exceeds the budget of {budget} entries",
            depths.hist_depth, depths.test_depth
        ))
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

pub fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("report serializes"));
}

#[derive(Serialize)]
struct Stage {
    hist_depth: usize,
    test_depth: usize,
    rows: usize,
    cols: usize,
    rank: usize,
}

#[derive(Serialize)]
struct RankOutput {
    rank: Option<usize>,
    /// Whether the rank plateaued; absent without --plateau.
    #[serde(skip_serializing_if = "Option::is_none")]
    plateau: Option<bool>,
    schedule: Vec<Stage>,
}

pub fn rank(spec: &str, depths: Depths, plateau: bool, format: Format, tol: f64) -> Result<(), Failure> {
    let model = load(spec)?;
    let out = if plateau {
        let budget = depths.budget.unwrap_or(DEFAULT_ENTRY_BUDGET);
        let p = rank_plateau(&model, depths.hist_depth, depths.test_depth, budget, tol);
        RankOutput {
            rank: (!p.schedule.is_empty()).then_some(p.rank),
            plateau: Some(p.plateaued),
            schedule: p
                .schedule
                .iter()
                .map(|&(hist_depth, test_depth, rows, cols, rank)| Stage {
                    hist_depth,
                    test_depth,
                    rows,
                    cols,
                    rank,
                })
                .collect(),
        }
    } else {
        let m = build(&model, depths)?;
        let rank = m.numerical_rank_with_tol(tol);
        RankOutput {
            rank: Some(rank),
            plateau: None,
            schedule: vec![Stage {
                hist_depth: depths.hist_depth,
                test_depth: depths.test_depth,
                rows: m.nrows(),
                cols: m.ncols(),
                rank,
            }],
        }
    };
    if format == Format::Json {
        print_json(&out);
    } else {
        for s in &out.schedule {
            println!("depths ({},{}): {} x {}, rank {}", s.hist_depth, s.test_depth, s.rows, s.cols, s.rank);
        }
        match out.plateau {
            Some(true) => println!("plateau: reached"),
            Some(false) => println!("plateau: not reached"),
            None => {}
        }
        if let Some(r) = out.rank {
            println!("rank {r}");
        }
    }
    if out.plateau == Some(false) {
        let budget = depths.budget.unwrap_or(DEFAULT_ENTRY_BUDGET);
        return Err(Failure::Budget(format!("rank did not plateau within {budget} entries")));
    }
    Ok(())
}

fn alphabet_from_flags(actions: Option<Vec<String>>, observations: Option<Vec<String>>) -> Result<Alphabet, Failure> {
    match (actions, observations) {
        (Some(a), Some(o)) => Ok(Alphabet::new(a, o)?),
        _ => Err(Failure::Input("matrix CSV input needs --actions and --observations".into())),
    }
}

pub fn derive(
    input: &str,
    out: &Path,
    core_tests: Option<Vec<String>>,
    actions: Option<Vec<String>>,
    observations: Option<Vec<String>>,
    depths: Depths,
) -> Result<(), Failure> {
    let start = Instant::now();
    let derivation = if input.ends_with(".csv") {
        if core_tests.is_some() {
            return Err(Failure::Input("--core-tests applies to POMDP input only".into()));
        }
        let alphabet = alphabet_from_flags(actions, observations)?;
        let text = std::fs::read_to_string(input).map_err(|e| Failure::Input(format!("{input}: {e}")))?;
        let matrix = SysDynMatrix::from_csv(&text, &alphabet).map_err(|e| Failure::Input(format!("{input}: {e}")))?;
        derive_from_matrix(&matrix)?
    } else {
        match load(input)? {
            Model::Pomdp(m) => {
                let over = core_tests
                    .map(|tests| {
                        tests
                            .iter()
                            .map(|t| m.alphabet().parse(t.trim()))
                            .collect::<psrkit::Result<Vec<Test>>>()
                    })
                    .transpose()?;
                derive_from_pomdp(&m, over.as_deref())?
            }
            other => {
                if core_tests.is_some() {
                    return Err(Failure::Input("--core-tests applies to POMDP input only".into()));
                }
                derive_from_matrix(&build(&other, depths)?)?
            }
        }
    };
    write_file(out, &write_model(&derivation.model.into()))?;
    print_json(&derivation.report);
    eprintln!("derived in {:.3}s", start.elapsed().as_secs_f64());
    Ok(())
}

#[derive(Serialize)]
struct CompareOutput {
    mode: &'static str,
    pairs: usize,
    max_deviation: f64,
    history: String,
    test: String,
    verdict: &'static str,
}

/// Tracks the first pair with the largest deviation.
struct Worst {
    dev: f64,
    history: History,
    test: Test,
}

impl Worst {
    fn offer(&mut self, dev: f64, history: &History, test: &Test) {
        if dev > self.dev {
            self.dev = dev;
            self.history = history.clone();
            self.test = test.clone();
        }
    }
}

fn replay_prob<M: DynamicalModel>(model: &M, history: &History) -> (M, f64) {
    let mut m = model.clone();
    m.reset();
    let p = m.replay(history).unwrap_or(0.0);
    (m, p)
}

pub fn compare(a_spec: &str, b_spec: &str, depths: Depths, samples: usize, seed: u64, format: Format) -> Result<(), Failure> {
    let a = load(a_spec)?;
    let b = load(b_spec)?;
    if a.alphabet() != b.alphabet() {
        println!("verdict: DIFFERENT (alphabets differ)");
        return Err(Failure::Check("alphabets differ".into()));
    }
    let alphabet = a.alphabet().clone();
    let branching = alphabet.num_steps();
    let (h, t) = (depths.hist_depth, depths.test_depth);
    let total = (count_sequences(branching, h) + 1).saturating_mul(count_sequences(branching, t));
    let mut worst = Worst {
        dev: -1.0,
        history: History::empty(),
        test: Test::empty(),
    };
    let (mode, pairs) = if total <= samples {
        let ma = build(&a, depths)?;
        let mb = build(&b, depths)?;
        let mut histories: Vec<&History> = ma.row_histories().iter().chain(mb.row_histories()).collect();
        histories.sort();
        histories.dedup();
        let mut pairs = 0;
        for hist in histories {
            match (ma.row_of(hist), mb.row_of(hist)) {
                (Some(i), Some(j)) => {
                    worst.offer((ma.history_probs()[i] - mb.history_probs()[j]).abs(), hist, &Test::empty());
                    for (c, test) in ma.col_tests().iter().enumerate() {
                        worst.offer((ma.entries()[(i, c)] - mb.entries()[(j, c)]).abs(), hist, test);
                        pairs += 1;
                    }
                }
                (Some(i), None) => worst.offer(ma.history_probs()[i], hist, &Test::empty()),
                (None, Some(j)) => worst.offer(mb.history_probs()[j], hist, &Test::empty()),
                (None, None) => unreachable!("history came from one of the matrices"),
            }
        }
        ("exhaustive", pairs)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..samples {
            let source = if i % 2 == 0 { &a } else { &b };
            let len = rng.random_range(0..=h);
            let hist = sample_history(&mut source.clone(), len, rng.random())?;
            let test = Test::from_steps(
                (0..rng.random_range(1..=t))
                    .map(|_| {
                        Step::new(
                            rng.random_range(0..alphabet.num_actions()),
                            rng.random_range(0..alphabet.num_observations()),
                        )
                    })
                    .collect(),
            );
            let (ca, pa) = replay_prob(&a, &hist);
            let (cb, pb) = replay_prob(&b, &hist);
            let mut dev = (pa - pb).abs();
            if pa > TAU_ZERO && pb > TAU_ZERO {
                dev = dev.max((ca.predict_raw(&test) - cb.predict_raw(&test)).abs());
            }
            worst.offer(dev, &hist, &test);
        }
        ("sampled", samples)
    };
    let out = CompareOutput {
        mode,
        pairs,
        max_deviation: worst.dev.max(0.0),
        history: alphabet.render(&worst.history),
        test: alphabet.render(&worst.test),
        verdict: if worst.dev <= EQUIVALENCE_TOL { "EQUIVALENT" } else { "DIFFERENT" },
    };
    if format == Format::Json {
        print_json(&out);
    } else {
        println!("compared {} pairs ({}, histories <= {h}, tests <= {t})", out.pairs, out.mode);
        println!("max |dp| = {:e} at history {}, test {}", out.max_deviation, out.history, out.test);
        println!("verdict: {}", out.verdict);
    }
    if out.verdict == "EQUIVALENT" {
        Ok(())
    } else {
        Err(Failure::Check(format!("models differ by {:e}", out.max_deviation)))
    }
}

#[derive(Serialize)]
struct ValidateOutput<'a> {
    valid: bool,
    #[serde(flatten)]
    report: &'a psrkit::sysdyn::ValidityReport,
}

pub fn validate(spec: &str, depths: Depths, format: Format) -> Result<(), Failure> {
    let model = load(spec)?;
    let report = build(&model, depths)?.check_validity();
    if format == Format::Json {
        print_json(&ValidateOutput {
            valid: report.is_valid(),
            report: &report,
        });
    } else if report.is_valid() {
        println!("valid");
    } else {
        for v in &report.violations {
            println!("{v}");
        }
    }
    if report.is_valid() {
        Ok(())
    } else {
        Err(Failure::Check(format!("{} violations", report.violations.len())))
    }
}

pub fn export_matrix(spec: &str, depths: Depths, out: Option<&Path>) -> Result<(), Failure> {
    let model = load(spec)?;
    let csv = build(&model, depths)?.to_csv();
    match out {
        Some(path) => write_file(path, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}
