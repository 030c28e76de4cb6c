//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::process::ExitCode;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use common::*;
use kbprobe_core::cache::ResponseCache;
use kbprobe_core::client::{ChatBackend, ClientError};
use kbprobe_core::harness::{self, DemoPool, EvalModel, EvalSettings, MockModel, QUESTION};
use kbprobe_core::kb::{self, Entity, KnowledgeTriplet, Polarity, Schema};
use kbprobe_core::matrix::ScoreMatrix;
use kbprobe_core::metrics::{self, Fraction};
use kbprobe_core::pipeline;
use kbprobe_core::predicate::{label_for, Label, TransformKey};
use kbprobe_core::textgen::{self, PrototypePool, Rephraser, REPHRASE_INSTRUCTION};
use kbprobe_core::{extract_answer, Answer, TestSample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::tempdir;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took <= limit, format!("took {took:.2?}, limit {limit:?}"))
}

fn pool() -> PrototypePool {
    PrototypePool::load(&fixture("prototypes.tsv")).unwrap()
}

fn fixture_points() -> Vec<KnowledgeTriplet> {
    let schema = Schema::load(&fixture("schema.tsv")).unwrap();
    let full = kb::load_kb(&fixture("mini_kb.tsv"), &schema).unwrap();
    let subset = kb::sample_subset(&full, &schema, 13);
    let mut points = subset.clone();
    points.extend(kb::sample_negatives(&subset, &full, 17).negatives);
    points
}

/// Gold label worked out from first principles: a double negation flips the
/// truth of the underlying fact; inversion and instantiation preserve it.
fn oracle_label(key: TransformKey, polarity: Polarity) -> Label {
    let fact_holds = polarity == Polarity::Positive;
    if fact_holds != key.dn {
        Label::True
    } else {
        Label::False
    }
}

fn variants_and_labels() -> Check {
    let start = Instant::now();
    let pool = pool();
    let points = fixture_points();
    ensure(points.len() == 20, format!("expected 20 fixture points, got {}", points.len()))?;
    for p in &points {
        let samples = textgen::generate_pretexeval(p, &pool, None).map_err(|e| e.to_string())?;
        let keys: Vec<TransformKey> = samples.iter().map(|s| s.key).collect();
        ensure(keys == TransformKey::ALL, format!("{}: keys out of order", p.triplet_id))?;
        let trues = samples.iter().filter(|s| s.label == Label::True).count();
        ensure(trues == 4, format!("{}: {trues} true labels", p.triplet_id))?;
        for s in &samples {
            ensure(s.label == oracle_label(s.key, p.polarity), format!("{}: wrong label", s.sample_id))?;
            ensure(
                !s.final_text.contains("[X]") && !s.final_text.contains("[Y]"),
                format!("{}: placeholder left", s.sample_id),
            )?;
        }
    }
    within(start, Duration::from_secs(1))?;
    Ok(format!("{} points x 8 variants", points.len()))
}

fn truth_table() -> Check {
    let mut cases = 0;
    for key in TransformKey::ALL {
        for polarity in [Polarity::Positive, Polarity::Negative] {
            let got = label_for(key, polarity);
            ensure(got == oracle_label(key, polarity), format!("{key} / {polarity:?}: {got:?}"))?;
            cases += 1;
        }
    }
    Ok(format!("{cases} cases"))
}

/// Expected joint accuracy at size `i` by averaging over every size-`i`
/// column subset of every row.
fn enumerate_curve(rows: &[Vec<u8>]) -> Vec<Fraction> {
    let m = rows[0].len();
    let mut totals = vec![(0u64, 0u64); m + 1];
    for row in rows {
        for mask in 1u32..(1 << m) {
            let size = mask.count_ones() as usize;
            let all = (0..m).filter(|j| mask & (1 << j) != 0).all(|j| row[j] == 1);
            totals[size].0 += all as u64;
            totals[size].1 += 1;
        }
    }
    totals[1..].iter().map(|&(hit, all)| Fraction::new(hit, all)).collect()
}

fn curve_matches_enumeration() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..100 {
        let bias: f64 = rng.gen_range(0.05..0.95);
        let rows: Vec<Vec<u8>> = (0..20)
            .map(|_| (0..8).map(|_| rng.gen_bool(bias) as u8).collect())
            .collect();
        let matrix = ScoreMatrix::from_rows(rows.clone());
        let curve = metrics::expected_joint_curve(&matrix).map_err(|e| e.to_string())?;
        ensure(curve == enumerate_curve(&rows), format!("trial {trial}: curve differs"))?;
        let a_avg = metrics::average_accuracy(&matrix).unwrap();
        let a_joint = metrics::joint_accuracy(&matrix).unwrap();
        ensure(curve[0] == a_avg, format!("trial {trial}: curve(1) != a_avg"))?;
        ensure(curve[7] == a_joint, format!("trial {trial}: curve(m) != a_joint"))?;
        ensure(curve.windows(2).all(|w| w[1] <= w[0]), format!("trial {trial}: curve increases"))?;
        ensure(a_joint <= a_avg, format!("trial {trial}: joint above average"))?;
    }
    within(start, Duration::from_secs(10))?;
    Ok("100 random 20x8 matrices".into())
}

fn worked_numbers() -> Check {
    let gain = metrics::gain_vs_random(0.817);
    ensure((gain - 31.7).abs() < 1e-9, format!("gain {gain}"))?;
    let row = vec![1, 1, 1, 1, 1, 1, 0, 0];
    let enumerated = enumerate_curve(std::slice::from_ref(&row))[1];
    ensure(enumerated == Fraction::new(15, 28), format!("enumeration gives {enumerated}"))?;
    let closed = metrics::expected_joint_curve(&ScoreMatrix::from_rows(vec![row])).unwrap()[1];
    ensure(closed == Fraction::new(15, 28), format!("closed form gives {closed}"))?;
    Ok("gain(0.817) = +31.7, k=6 m=8 i=2 -> 15/28".into())
}

fn synthetic_points(n: usize, tag: &str) -> Vec<KnowledgeTriplet> {
    (0..n)
        .map(|i| {
            let polarity = if i % 2 == 0 { Polarity::Positive } else { Polarity::Negative };
            KnowledgeTriplet::new(
                Entity::new(&format!("drug {tag}{i}")).unwrap(),
                "may treat",
                Entity::new(&format!("disease {tag}{}", i / 2)).unwrap(),
                polarity,
                "synthetic",
            )
        })
        .collect()
}

fn render(points: &[KnowledgeTriplet], pool: &PrototypePool, direct: bool) -> Vec<TestSample> {
    let mut out = Vec::new();
    for p in points {
        if direct {
            out.push(textgen::generate_direct(p, pool).unwrap());
        } else {
            out.extend(textgen::generate_pretexeval(p, pool, None).unwrap());
        }
    }
    out
}

fn surface_form_gap() -> Check {
    let start = Instant::now();
    let pool = pool();
    let tests = synthetic_points(1200, "t");
    let demos = synthetic_points(10, "d");
    let model = EvalModel::Mock(MockModel::SurfaceFormKnower { seed: 7 });
    let settings = EvalSettings {
        shots: 5,
        demo_seed: 3,
        parallelism: 4,
    };

    let run = |direct: bool| {
        let samples = render(&tests, &pool, direct);
        let demo_pool = DemoPool::from_samples(&render(&demos, &pool, direct));
        let cache = ResponseCache::in_memory();
        harness::evaluate(&samples, &model, &demo_pool, settings, Some(&cache)).map_err(|e| e.to_string())
    };
    let direct = run(true)?;
    let full = run(false)?;
    let direct_avg = metrics::average_accuracy(&direct.matrix).unwrap();
    ensure(direct_avg == Fraction::new(1, 1), format!("direct a_avg {direct_avg}"))?;
    let joint = metrics::to_f64(metrics::joint_accuracy(&full.matrix).unwrap());
    let target = 1.0 / 128.0;
    ensure(
        (target - 0.01..=target + 0.02).contains(&joint),
        format!("a_joint {joint:.4} outside [{:.4}, {:.4}]", target - 0.01, target + 0.02),
    )?;
    let curve = metrics::expected_joint_curve(&full.matrix).unwrap();
    ensure(curve.windows(2).all(|w| w[1] < w[0]), "curve not strictly decreasing")?;
    within(start, Duration::from_secs(30))?;
    Ok(format!(
        "{} points: direct a_avg 1.0, a_joint {joint:.4}, a_avg {:.4}",
        full.matrix.n(),
        metrics::to_f64(metrics::average_accuracy(&full.matrix).unwrap())
    ))
}

struct Recorder {
    prompts: Mutex<Vec<String>>,
}

impl ChatBackend for Recorder {
    fn model_id(&self) -> &str {
        "recorder"
    }
    fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        self.prompts.lock().unwrap().push(prompt.to_string());
        Ok("A paraphrase.".into())
    }
}

fn prompt_shape() -> Check {
    let pool = pool();
    let points = synthetic_points(40, "p");
    let demos = synthetic_points(10, "q");
    let model = EvalModel::Mock(MockModel::PerfectKnower);
    let eval = harness::evaluate(
        &render(&points, &pool, false),
        &model,
        &DemoPool::from_samples(&render(&demos, &pool, false)),
        EvalSettings::default(),
        None,
    )
    .map_err(|e| e.to_string())?;
    for prompt in &eval.prompts {
        ensure(prompt.ends_with(QUESTION), "prompt does not end with the question")?;
        let blocks: Vec<&str> = prompt.split("\n\n").collect();
        ensure(blocks.len() == 6, format!("{} blocks", blocks.len()))?;
        for demo in &blocks[..5] {
            ensure(
                demo.ends_with(&format!("{QUESTION}\nTrue")) || demo.ends_with(&format!("{QUESTION}\nFalse")),
                "demo block without answer",
            )?;
        }
    }

    let recorder = Recorder {
        prompts: Mutex::new(Vec::new()),
    };
    let rephraser = Rephraser {
        backend: &recorder,
        cache: None,
    };
    let samples = textgen::generate_pretexeval(&points[0], &pool, Some(&rephraser)).map_err(|e| e.to_string())?;
    let sent = recorder.prompts.lock().unwrap().clone();
    ensure(sent.len() == 8, format!("{} rephrase requests", sent.len()))?;
    for (prompt, sample) in sent.iter().zip(&samples) {
        ensure(
            *prompt == REPHRASE_INSTRUCTION.replace("[prototype]", &sample.prototype_text),
            "rephrase prompt differs from the instruction",
        )?;
        ensure(sample.final_text == "A paraphrase." && sample.rephrased, "paraphrase not used")?;
    }
    Ok(format!("{} prompts with 5 demos; 8 rephrase requests", eval.prompts.len()))
}

fn answer_parsing() -> Check {
    let cases = [
        ("True", Answer::True),
        ("false.", Answer::False),
        ("YES, that is right", Answer::True),
        ("The statement is wrong.", Answer::False),
        ("Correct. It is not false.", Answer::True),
        ("No. It would be true otherwise.", Answer::False),
        ("contradicted", Answer::False),
        ("Entailed", Answer::True),
        ("Untrue claims abound", Answer::Unparsed),
        ("I cannot say.", Answer::Unparsed),
        ("", Answer::Unparsed),
    ];
    for (reply, want) in cases {
        let got = extract_answer(reply);
        ensure(got == want, format!("{reply:?} -> {got:?}, want {want:?}"))?;
    }
    ensure(!Answer::Unparsed.matches(Label::True) && !Answer::Unparsed.matches(Label::False), "unparsed scored")?;
    Ok(format!("{} replies", cases.len()))
}

fn determinism_and_resume() -> Check {
    let a = tempdir().unwrap();
    let b = tempdir().unwrap();
    let cfg_a = mock_config(a.path(), "ablation_sweep = true", "coin");
    let cfg_b = mock_config(b.path(), "ablation_sweep = true", "coin");
    pipeline::run(&cfg_a).map_err(|e| e.to_string())?;
    pipeline::run(&cfg_b).map_err(|e| e.to_string())?;
    let first = snapshot(&cfg_a.output_path());
    ensure(first == snapshot(&cfg_b.output_path()), "two runs differ")?;

    for name in [pipeline::REPORT, pipeline::RESPONSES, pipeline::MATRIX] {
        fs::remove_file(cfg_a.output_path().join(name)).unwrap();
    }
    let again = pipeline::run(&cfg_a).map_err(|e| e.to_string())?;
    ensure(again.eval.requests == 0, format!("{} new requests on resume", again.eval.requests))?;
    ensure(snapshot(&cfg_a.output_path()) == first, "resumed run differs")?;
    Ok(format!("{} artifacts identical; resume sent 0 requests", first.len()))
}

fn ablation_matches_restricted_runs() -> Check {
    let dir = tempdir().unwrap();
    let swept = mock_config(dir.path(), "ablation_sweep = true", "coin");
    let report = pipeline::run(&swept).map_err(|e| e.to_string())?.report;
    let steps = report.ablation.ok_or("no ablation in report")?;
    let by_name: BTreeMap<&str, _> = steps.iter().map(|s| (s.step.as_str(), &s.metrics)).collect();
    for (name, keys) in metrics::ablation_steps() {
        let sub = tempdir().unwrap();
        let list: Vec<String> = keys.iter().map(|k| format!("{:?}", k.to_string())).collect();
        let cfg = mock_config(sub.path(), &format!("keys = [{}]", list.join(", ")), "coin");
        let restricted = pipeline::run(&cfg).map_err(|e| e.to_string())?.report;
        let swept = by_name.get(name).ok_or(format!("missing step {name}"))?;
        ensure(
            restricted.metrics == **swept,
            format!("{name}: restricted a_avg {} vs swept {}", restricted.metrics.a_avg, swept.a_avg),
        )?;
    }
    Ok("4 steps equal restricted re-runs".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("variants: 8 per point, canonical order, 4 true / 4 false", variants_and_labels),
        ("labels: full truth table", truth_table),
        ("metrics: closed-form curve equals subset enumeration", curve_matches_enumeration),
        ("metrics: worked gain and curve values", worked_numbers),
        ("mocks: surface-form knower separates direct from transformed", surface_form_gap),
        ("prompts: question suffix, 5 demos, verbatim rephrase instruction", prompt_shape),
        ("answers: keyword parsing and unparsed scoring", answer_parsing),
        ("pipeline: deterministic artifacts and cache resume", determinism_and_resume),
        ("ablation: column subsets equal restricted runs", ablation_matches_restricted_runs),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {}. {name} ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {}. {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
