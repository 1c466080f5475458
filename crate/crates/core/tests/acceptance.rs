//! Acceptance suite: each test runs one criterion at its stated tolerance
//! and prints a PASS line (visible with `--nocapture`). Statistical checks
//! use fixed seeds, so every run is reproducible. Expected values come from
//! independent oracles implemented here: exhaustive enumeration for the
//! paired test and rank correlation, closed-form balanced ANOVA for the
//! mixed model, and the planted-effect simulator for the pipeline.

use std::path::Path;

use persona_eval::catalog::{AnswerType, OrderingKind, OrderingSpec, TaskInstance};
use persona_eval::endpoint::{Client, EndpointConfig, ResponseCache};
use persona_eval::lmm::{fit_reml, RegressionFrame};
use persona_eval::metrics::{
    expertise_advantage, fidelity, kendall_tau, paired_significance, robustness,
    CorrectnessMatrix, Verdict,
};
use persona_eval::prompt::{
    build_prompt, generator_prompt, DemoRegistry, Strategy,
};
use persona_eval::run::{execute_run, RunSpec};
use persona_eval::synth::{
    simulate_matrix, synthetic_instances, synthetic_persona_set, AnswerBank, EffectSpec,
    EndpointScript, OrderingPlant, ScriptedEndpoint, BASELINE_ID,
};

// ---------------------------------------------------------------------------
// Independent oracles
// ---------------------------------------------------------------------------

/// Exact p-value by enumerating all 2^n equally likely sign assignments of
/// the discordant pairs.
fn enumerated_paired_p(wins_first: u32, wins_second: u32) -> f64 {
    let n = wins_first + wins_second;
    if n == 0 {
        return 1.0;
    }
    let m = wins_first.min(wins_second);
    let mut count: u64 = 0;
    for mask in 0..(1u64 << n) {
        if mask.count_ones() <= m {
            count += 1;
        }
    }
    (2.0 * count as f64 / (1u64 << n) as f64).min(1.0)
}

/// Kendall tau-b by direct concordant/discordant pair counting.
fn counted_tau(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    let mut tied_x = 0i64;
    let mut tied_y = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = (x[i] - x[j]).signum();
            let dy = (y[i] - y[j]).signum();
            if dx == 0.0 {
                tied_x += 1;
            }
            if dy == 0.0 {
                tied_y += 1;
            }
            if dx != 0.0 && dy != 0.0 {
                if dx == dy {
                    concordant += 1;
                } else {
                    discordant += 1;
                }
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    let denom = ((n0 - tied_x) as f64) * ((n0 - tied_y) as f64);
    if denom == 0.0 {
        return None;
    }
    Some((concordant - discordant) as f64 / denom.sqrt())
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn heap(values: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
        if k == 1 {
            out.push(values.clone());
            return;
        }
        for i in 0..k {
            heap(values, k - 1, out);
            if k % 2 == 0 {
                values.swap(i, k - 1);
            } else {
                values.swap(0, k - 1);
            }
        }
    }
    let mut values: Vec<usize> = (0..k).collect();
    let mut out = Vec::new();
    heap(&mut values, k, &mut out);
    out
}

fn singleton_spec(ids: &[&str]) -> OrderingSpec {
    OrderingSpec {
        ordering_kind: OrderingKind::Education,
        ranked_groups: ids.iter().map(|id| vec![id.to_string()]).collect(),
    }
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

#[test]
fn exact_test_matches_enumeration_up_to_n12() {
    let started = std::time::Instant::now();
    let mut cases = 0;
    for n in 0..=12u32 {
        for wins_first in 0..=n {
            let wins_second = n - wins_first;
            // realize the counts as paired columns, padded with concordant
            // pairs that must not affect the result
            for concordant_padding in [0u32, 5] {
                let mut a = Vec::new();
                let mut b = Vec::new();
                for _ in 0..wins_first {
                    a.push(true);
                    b.push(false);
                }
                for _ in 0..wins_second {
                    a.push(false);
                    b.push(true);
                }
                for i in 0..concordant_padding {
                    let both = i % 2 == 0;
                    a.push(both);
                    b.push(both);
                }
                let test = paired_significance(&a, &b).unwrap();
                let expected = enumerated_paired_p(wins_first, wins_second);
                assert_eq!(
                    test.p_value, expected,
                    "exact mismatch at w+={wins_first} w-={wins_second} pad={concordant_padding}"
                );
                cases += 1;
            }
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!("PASS exact-test oracle: {cases} (w+, w-) cases match enumeration exactly in {elapsed:?}");
}

#[test]
fn kendall_matches_exhaustive_pair_counting() {
    let started = std::time::Instant::now();
    let ids6 = ["g0", "g1", "g2", "g3", "g4", "g5"];
    let spec6 = singleton_spec(&ids6);
    let base_values = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
    let ranks6: Vec<f64> = (0..6).map(|i| i as f64).collect();
    let mut checked = 0;
    for perm in permutations(6) {
        let observed: Vec<f64> = perm.iter().map(|&i| base_values[i]).collect();
        let tau = kendall_tau(&spec6, &observed).unwrap();
        let expected = counted_tau(&ranks6, &observed).unwrap();
        assert_eq!(tau, expected, "permutation {perm:?}");
        checked += 1;
    }
    assert_eq!(checked, 720);

    // every tie pattern of 4 groups: all value tuples over a 4-point grid
    let ids4 = ["g0", "g1", "g2", "g3"];
    let spec4 = singleton_spec(&ids4);
    let ranks4: Vec<f64> = (0..4).map(|i| i as f64).collect();
    let grid = [0.0, 0.25, 0.5, 0.75];
    let mut tie_cases = 0;
    for a in grid {
        for b in grid {
            for c in grid {
                for d in grid {
                    let observed = vec![a, b, c, d];
                    let expected = counted_tau(&ranks4, &observed);
                    match (kendall_tau(&spec4, &observed), expected) {
                        (Ok(tau), Some(want)) => assert_eq!(tau, want, "values {observed:?}"),
                        (Err(persona_eval::Error::TauUndefined), None) => {}
                        (got, want) => panic!("mismatch for {observed:?}: {got:?} vs {want:?}"),
                    }
                    tie_cases += 1;
                }
            }
        }
    }
    assert_eq!(tie_cases, 256);
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!(
        "PASS kendall oracle: 720 permutations and {tie_cases} tie patterns match pair counting exactly in {elapsed:?}"
    );
}

fn planted_ordering_spec(n: usize, offsets: [f64; 3], seed: u64) -> EffectSpec {
    EffectSpec {
        ordering_plant: Some(OrderingPlant {
            spec: singleton_spec(&["g0", "g1", "g2"]),
            offsets: offsets.to_vec(),
        }),
        ..EffectSpec::new("calibration", n, 0.5, seed)
    }
}

#[test]
fn bootstrap_fidelity_gate_is_calibrated() {
    let started = std::time::Instant::now();
    let resamples = 2000;

    // Null: no planted effect over 500 replications; the 95% gate should
    // fire rarely, close to its nominal rate.
    let replications = 500;
    let mut false_positives = 0;
    for r in 0..replications {
        let spec = planted_ordering_spec(300, [0.0, 0.0, 0.0], 1000 + r);
        let sim = simulate_matrix(&spec).unwrap();
        let ordering = &spec.ordering_plant.as_ref().unwrap().spec;
        let result = fidelity(&sim.matrix, ordering, resamples, r).unwrap();
        if result.verdict != Verdict::NonSignificant {
            false_positives += 1;
        }
    }
    let fpr = false_positives as f64 / replications as f64;
    assert!(
        (0.02..=0.08).contains(&fpr),
        "false-positive rate {fpr} outside [0.02, 0.08]"
    );

    // Planted monotone ordering (0.3, 0.5, 0.7) at n=500: detected as
    // Positive in at least 99% of replications.
    let detection_reps = 200;
    let mut detected = 0;
    for r in 0..detection_reps {
        let spec = planted_ordering_spec(500, [-0.2, 0.0, 0.2], 2000 + r);
        let sim = simulate_matrix(&spec).unwrap();
        let ordering = &spec.ordering_plant.as_ref().unwrap().spec;
        let result = fidelity(&sim.matrix, ordering, resamples, r).unwrap();
        if result.verdict == Verdict::Positive {
            detected += 1;
        }
    }
    let detection = detected as f64 / detection_reps as f64;
    assert!(detection >= 0.99, "detection rate {detection} below 0.99");

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 300.0, "took {elapsed:?}");
    println!(
        "PASS bootstrap calibration: null FPR {:.1}% in [2%, 8%], detection {:.1}% >= 99%, {elapsed:?}",
        fpr * 100.0,
        detection * 100.0
    );
}

#[test]
fn planted_effects_are_recovered() {
    let started = std::time::Instant::now();

    // Advantage: +5 pp at n=10,000, recovered within +/-1.5 pp with a
    // Positive verdict in at least 95 of 100 replications.
    let replications = 100;
    let mut recovered = 0;
    for r in 0..replications {
        let spec = EffectSpec::new("recovery", 10_000, 0.5, 3000 + r).with_delta("expert", 0.05);
        let sim = simulate_matrix(&spec).unwrap();
        let result = expertise_advantage(&sim.matrix, "expert").unwrap();
        if (result.value - 5.0).abs() <= 1.5 && result.verdict == Verdict::Positive {
            recovered += 1;
        }
    }
    assert!(
        recovered >= 95,
        "advantage recovered in only {recovered}/100 replications"
    );

    // Robustness: one -5 pp persona among five irrelevant ones is named as
    // the witness in at least 99 of 100 replications.
    let mut witnessed = 0;
    for r in 0..replications {
        let spec = EffectSpec::new("witness", 10_000, 0.5, 4000 + r)
            .with_delta("name_a", 0.0)
            .with_delta("name_b", 0.0)
            .with_delta("name_c", -0.05)
            .with_delta("name_d", 0.0)
            .with_delta("name_e", 0.0);
        let sim = simulate_matrix(&spec).unwrap();
        let result = robustness(
            &sim.matrix,
            ["name_a", "name_b", "name_c", "name_d", "name_e"].into_iter(),
        )
        .unwrap();
        if result.witness.as_deref() == Some("name_c") {
            witnessed += 1;
        }
    }
    assert!(
        witnessed >= 99,
        "witness identified in only {witnessed}/100 replications"
    );

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 300.0, "took {elapsed:?}");
    println!(
        "PASS planted-effect recovery: advantage {recovered}/100 within tolerance, witness {witnessed}/100, {elapsed:?}"
    );
}

#[test]
fn reml_matches_balanced_anova_and_recovers_slope() {
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    let started = std::time::Instant::now();
    let n_groups = 10;
    let per_group = 20;
    let mut worst_gap: f64 = 0.0;
    for frame_index in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + frame_index);
        let sigma_g = 0.5 + rng.gen::<f64>() * 1.0;
        let sigma_e = 0.7 + rng.gen::<f64>() * 1.0;
        let mu = rng.gen_range(-5.0..5.0);
        let mut response = Vec::new();
        let mut groups = Vec::new();
        for g in 0..n_groups {
            let ug: f64 = rng.sample(StandardNormal);
            for _ in 0..per_group {
                let e: f64 = rng.sample(StandardNormal);
                response.push(mu + sigma_g * ug + sigma_e * e);
                groups.push(g);
            }
        }
        let frame = RegressionFrame {
            design: vec![1.0; response.len()],
            column_names: vec!["intercept".into()],
            group_names: (0..n_groups).map(|g| format!("g{g}")).collect(),
            response: response.clone(),
            groups: groups.clone(),
        };
        let fit = fit_reml(&frame).unwrap();

        // closed-form balanced one-way ANOVA REML
        let n = response.len() as f64;
        let grand = response.iter().sum::<f64>() / n;
        let mut group_means = vec![0.0; n_groups];
        for (y, &g) in response.iter().zip(&groups) {
            group_means[g] += y / per_group as f64;
        }
        let ssw: f64 = response
            .iter()
            .zip(&groups)
            .map(|(y, &g)| (y - group_means[g]).powi(2))
            .sum();
        let ssb: f64 = group_means
            .iter()
            .map(|m| per_group as f64 * (m - grand).powi(2))
            .sum();
        let msw = ssw / (n - n_groups as f64);
        let msb = ssb / (n_groups as f64 - 1.0);
        let anova_sigma2_g = ((msb - msw) / per_group as f64).max(0.0);

        worst_gap = worst_gap
            .max((fit.sigma2_residual - msw).abs())
            .max((fit.sigma2_group - anova_sigma2_g).abs())
            .max((fit.coefficients[0] - grand).abs());
        assert!(
            (fit.sigma2_residual - msw).abs() < 1e-6
                && (fit.sigma2_group - anova_sigma2_g).abs() < 1e-6,
            "frame {frame_index}: ({}, {}) vs ANOVA ({msw}, {anova_sigma2_g})",
            fit.sigma2_residual,
            fit.sigma2_group
        );
    }

    // planted ordinal slope of 0.8 pp, n=2000, 50 groups, within +/-0.15 pp
    let mut rng = ChaCha8Rng::seed_from_u64(6001);
    let n_groups = 50;
    let per_group = 40;
    let mut response = Vec::new();
    let mut design = Vec::new();
    let mut groups = Vec::new();
    for g in 0..n_groups {
        let ug: f64 = rng.sample(StandardNormal);
        for _ in 0..per_group {
            let level = rng.gen_range(0..6) as f64;
            let e: f64 = rng.sample(StandardNormal);
            response.push(40.0 + 0.8 * level + 1.5 * ug + 2.5 * e);
            design.extend([1.0, level]);
            groups.push(g);
        }
    }
    let frame = RegressionFrame {
        response,
        design,
        column_names: vec!["intercept".into(), "level".into()],
        groups,
        group_names: (0..n_groups).map(|g| format!("g{g}")).collect(),
    };
    let fit = fit_reml(&frame).unwrap();
    let slope = fit.coefficients[1];
    assert!(
        (slope - 0.8).abs() <= 0.15,
        "recovered slope {slope} outside 0.8 +/- 0.15"
    );

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!(
        "PASS reml oracle: 50 balanced frames within 1e-6 (worst gap {worst_gap:.2e}), slope {slope:.3} in 0.8 +/- 0.15, {elapsed:?}"
    );
}

#[test]
fn pipeline_verdicts_match_simulation_oracle() {
    let started = std::time::Instant::now();

    // 6 personas x 200 instances: an expert with a real advantage, an
    // education ordering planted monotone, and a harmful irrelevant name.
    let spec = EffectSpec {
        ordering_plant: Some(OrderingPlant {
            spec: singleton_spec(&["edu_low", "edu_mid", "edu_high"]),
            offsets: vec![-0.2, 0.0, 0.2],
        }),
        ..EffectSpec::new("suite", 200, 0.5, 77)
            .with_delta("expert_arith", 0.15)
            .with_delta("name_ada", -0.15)
    };
    let set = synthetic_persona_set(&spec).unwrap();
    assert_eq!(set.members.len(), 6);
    let instances = synthetic_instances("suite", spec.n_instances);
    let bank = AnswerBank::for_instances(&instances);

    let template = {
        let mut c = EndpointConfig::new("http://placeholder", "mock-model");
        c.timeout_secs = 30;
        c.parallelism_cap = 8;
        c
    };
    let script = EndpointScript::for_run(
        &spec,
        &bank,
        &template,
        &set.members,
        Strategy::Base,
        &instances,
    )
    .unwrap();
    let endpoint = ScriptedEndpoint::serve(script).unwrap();
    let config = EndpointConfig {
        base_url: endpoint.url(),
        ..template
    };

    let cache = tempfile::tempdir().unwrap();
    let client = Client::new(ResponseCache::new(cache.path())).unwrap();
    let rules = persona_eval::grader::ExtractionRules::default();
    let registry = DemoRegistry::bundled();
    let run = execute_run(
        &client,
        &RunSpec {
            config: &config,
            generator: None,
            set: &set,
            dataset_kind: "gsm8k",
            strategy: Strategy::Base,
            instances: &instances,
            rules: &rules,
            registry: &registry,
            persona_filter: None,
            dynamic_fallback: false,
            catalog_digest: "acceptance".into(),
            tasks_digest: "acceptance".into(),
            seed: spec.seed,
        },
    )
    .unwrap();

    let pipeline_matrix =
        CorrectnessMatrix::from_records(&run.records, "suite", BASELINE_ID).unwrap();
    let oracle_matrix = simulate_matrix(&spec).unwrap().matrix;
    assert_eq!(pipeline_matrix, oracle_matrix, "graded bits match the oracle cell for cell");

    let ordering = &spec.ordering_plant.as_ref().unwrap().spec;
    let mut verdicts = Vec::new();
    for (label, matrix) in [("pipeline", &pipeline_matrix), ("oracle", &oracle_matrix)] {
        let advantage = expertise_advantage(matrix, "expert_arith").unwrap();
        let names: Vec<&str> = vec!["name_ada"];
        let rob = robustness(matrix, names.into_iter()).unwrap();
        let fid = fidelity(matrix, ordering, 2000, spec.seed).unwrap();
        verdicts.push((label, advantage.verdict, rob.verdict, fid.verdict));
    }
    assert_eq!(
        (verdicts[0].1, verdicts[0].2, verdicts[0].3),
        (verdicts[1].1, verdicts[1].2, verdicts[1].3),
        "pipeline and oracle verdicts agree"
    );
    // with these planted sizes the expected classification is unambiguous
    assert_eq!(verdicts[0].1, Verdict::Positive);
    assert_eq!(verdicts[0].2, Verdict::Negative);
    assert_eq!(verdicts[0].3, Verdict::Positive);

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}");
    println!(
        "PASS pipeline equivalence: 6 personas x 200 instances, all verdicts agree with the oracle, {elapsed:?}"
    );
}

// ---------------------------------------------------------------------------
// Prompt golden files
// ---------------------------------------------------------------------------

fn check_golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data/golden")
        .join(name);
    if std::env::var_os("GOLDEN_REGEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("missing golden {name}: {e} (set GOLDEN_REGEN=1 to create)"));
    assert_eq!(actual, expected, "golden mismatch for {name} (set GOLDEN_REGEN=1 to update)");
}

fn numeric_instance() -> TaskInstance {
    TaskInstance {
        instance_id: "golden_numeric".into(),
        task_id: "gsm8k".into(),
        question: "A carton holds 12 eggs. A baker uses 30 eggs each day. How many cartons does the baker open over 4 days?".into(),
        choices: None,
        gold: "10".into(),
        answer_type: AnswerType::Numeric,
    }
}

fn choice_instance(task_id: &str) -> TaskInstance {
    TaskInstance {
        instance_id: format!("golden_{task_id}"),
        task_id: task_id.into(),
        question: "Which layer of Earth lies directly beneath the crust?".into(),
        choices: Some(vec![
            "The inner core".into(),
            "The mantle".into(),
            "The outer core".into(),
            "The lithosphere".into(),
        ]),
        gold: "B".into(),
        answer_type: AnswerType::MultipleChoice,
    }
}

fn math_instance() -> TaskInstance {
    TaskInstance {
        instance_id: "golden_math".into(),
        task_id: "math_algebra".into(),
        question: r"Simplify $\frac{3}{6}$.".into(),
        choices: None,
        gold: r"\frac{1}{2}".into(),
        answer_type: AnswerType::MathExpression,
    }
}

#[test]
fn prompt_rendering_matches_bundled_goldens() {
    let catalog = persona_eval::catalog::Catalog::bundled();
    let expert = catalog
        .persona_set("gsm8k")
        .unwrap()
        .static_expert()
        .unwrap()
        .clone();
    let instance = numeric_instance();
    let prior = "First answer: 10.\n#### 10";

    for strategy in Strategy::ALL {
        let prior_arg = strategy.is_refine().then_some(prior);
        let rendered = build_prompt(&expert, strategy, &instance, prior_arg)
            .unwrap()
            .canonical_text();
        check_golden(&format!("strategy_{}.txt", strategy.as_str().replace('-', "_")), &rendered);
    }

    let registry = DemoRegistry::bundled();
    let instances = [
        ("truthfulqa", choice_instance("truthfulqa")),
        ("gsm8k", numeric_instance()),
        ("math", math_instance()),
        ("big_bench", choice_instance("bb_strategyqa")),
        ("mmlu_pro", choice_instance("mmlu_pro_history")),
    ];
    for (kind, instance) in &instances {
        let rendered = generator_prompt(&registry, kind, instance)
            .unwrap()
            .canonical_text();
        check_golden(&format!("generator_{kind}.txt"), &rendered);
    }
    println!("PASS prompt fidelity: 4 strategy templates and 5 demonstration blocks are byte-exact");
}

// ---------------------------------------------------------------------------
// Optional network smoke test
// ---------------------------------------------------------------------------

/// Plumbing check against a live model. Point PERSONA_EVAL_SMOKE_ENDPOINT at
/// an endpoint TOML and PERSONA_EVAL_SMOKE_TASKS at a numeric-format task
/// slice (about 200 instances), then run with `--ignored`.
#[test]
#[ignore = "requires a live chat-completions endpoint; set PERSONA_EVAL_SMOKE_ENDPOINT and PERSONA_EVAL_SMOKE_TASKS"]
fn smoke_reproduction_against_live_endpoint() {
    let endpoint_path = std::env::var("PERSONA_EVAL_SMOKE_ENDPOINT")
        .expect("PERSONA_EVAL_SMOKE_ENDPOINT must name an endpoint TOML");
    let tasks_path = std::env::var("PERSONA_EVAL_SMOKE_TASKS")
        .expect("PERSONA_EVAL_SMOKE_TASKS must name a JSONL task slice");

    let file = persona_eval::endpoint::EndpointFile::load(&endpoint_path).unwrap();
    let config = file.resolve();
    let catalog = persona_eval::catalog::Catalog::bundled();
    let instances: Vec<TaskInstance> = persona_eval::catalog::load_tasks(&tasks_path)
        .unwrap()
        .into_iter()
        .take(200)
        .collect();
    let task_id = instances[0].task_id.clone();
    let set = catalog.persona_set(&task_id).expect("task in bundled catalog");

    let filter: Vec<String> = {
        let mut ids = vec![set.static_expert().unwrap().id.clone()];
        ids.extend(
            set.members
                .iter()
                .filter(|p| p.attribute_kind == persona_eval::catalog::AttributeKind::Name)
                .take(3)
                .map(|p| p.id.clone()),
        );
        ids
    };
    let cache = tempfile::tempdir().unwrap();
    let client = Client::new(ResponseCache::new(cache.path())).unwrap();
    let rules = persona_eval::grader::ExtractionRules::default();
    let registry = DemoRegistry::bundled();
    let run = execute_run(
        &client,
        &RunSpec {
            config: &config,
            generator: None,
            set,
            dataset_kind: catalog.dataset_kind(&task_id).unwrap(),
            strategy: Strategy::Base,
            instances: &instances,
            rules: &rules,
            registry: &registry,
            persona_filter: Some(&filter),
            dynamic_fallback: false,
            catalog_digest: catalog.digest(),
            tasks_digest: persona_eval::catalog::tasks_digest(&instances),
            seed: 0,
        },
    )
    .unwrap();

    let matrix = CorrectnessMatrix::from_records(&run.records, &task_id, &set.no_persona().id).unwrap();
    let advantage = expertise_advantage(&matrix, &set.static_expert().unwrap().id).unwrap();
    let names: Vec<String> = filter.iter().skip(1).cloned().collect();
    let rob = robustness(&matrix, names.iter().map(String::as_str)).unwrap();
    assert!(advantage.p_value.is_some());
    assert!(rob.witness.is_some());
    println!(
        "PASS smoke: advantage {:.1} pp ({:?}), robustness {:.1} pp ({:?}, witness {:?})",
        advantage.value, advantage.verdict, rob.value, rob.verdict, rob.witness
    );
}
