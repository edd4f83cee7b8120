//! Acceptance checks. One PASS/FAIL/SKIP line per criterion; exits
//! nonzero when any check fails.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use slicemine_classify::baseline::{mcnemar, rule_mechanism};
use slicemine_classify::eval::{binary_metrics, evaluate_ew, labelled_patterns, CvConfig, LabelledPattern};
use slicemine_classify::features::featurize;
use slicemine_classify::gbdt::{train_binary, GbdtParams};
use slicemine_classify::mechanism::evaluate_mechanism_cv;
use slicemine_core::cluster::StepCluster;
use slicemine_core::ingest::{Scenario, ScenarioKey, ScenarioStep, OwnerId};
use slicemine_core::io::read_patterns_csv;
use slicemine_core::labels::{agreement, aggregate_all, cohen_kappa, fleiss_kappa, read_labels, Extraction};
use slicemine_core::mine::{
    cluster_map, mine, scenario_slices, slices_in_run, spec_suite_fires, FileKey, PatternAccumulator, PatternStats,
    MAX_EXEMPLARS,
};
use slicemine_core::verify::ClosureIndex;
use slicemine_judge::{judge_agreement, parse_verdict, query_judge, JudgeConfig, JudgeError, JudgeVerdict};

enum Outcome {
    Pass(String),
    Skip(String),
}

type CheckResult = Result<Outcome, String>;

fn pass(detail: impl Into<String>) -> CheckResult {
    Ok(Outcome::Pass(detail.into()))
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn main() {
    let checks: Vec<(&str, fn() -> CheckResult)> = vec![
        ("slice combinatorics", slice_combinatorics),
        ("n-gram oracle equivalence", ngram_oracle),
        ("mcnemar", mcnemar_values),
        ("all-yes f1 closed form", all_yes_f1),
        ("fleiss and cohen kappa", kappas),
        ("closure oracle", closure_oracle),
        ("spec-suite detector boundaries", spec_boundaries),
        ("classifier sanity", classifier_sanity),
        ("determinism", determinism),
        ("released labelled pool", released_data),
        ("judge harness", judge_harness),
    ];
    let mut failed = 0;
    for (name, f) in checks {
        let started = Instant::now();
        let res = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match res {
            Ok(Outcome::Pass(d)) => println!("PASS  {name} ({secs:.2}s) {d}"),
            Ok(Outcome::Skip(d)) => println!("SKIP  {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.2}s): {d}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

// ------------------------------------------------------------ mining

fn key(repo: &str, file: &str, name: &str) -> ScenarioKey {
    ScenarioKey {
        repo_slug: repo.into(),
        file_path: file.into(),
        scenario: name.into(),
    }
}

fn slice_combinatorics() -> CheckResult {
    let started = Instant::now();
    let l_max = 18;
    for s in [2usize, 3, 10, 18, 25] {
        let sc = Scenario {
            key: key("o_r", "f.feature", "s"),
            steps: (0..s)
                .map(|i| ScenarioStep {
                    cluster: Some(format!("c{i}")),
                    text: format!("t{i}"),
                })
                .collect(),
        };
        let got = scenario_slices(&sc, l_max).len();
        let want: usize = (2..=s.min(l_max)).map(|l| s - l + 1).sum();
        ensure(got == want, || format!("S={s}: {got} slices, closed form {want}"))?;
        ensure(slices_in_run(s, l_max) == want, || format!("slices_in_run({s}) != {want}"))?;
    }
    ensure(slices_in_run(10, 18) == 45, || "S=10 should give 45".into())?;
    let el = started.elapsed();
    ensure(el < Duration::from_secs(1), || format!("took {el:?}"))?;
    pass("S=10 -> 45")
}

const REPOS: [&str; 5] = ["acme_a", "acme_b", "globex_a", "initech_a", "umbrella_x"];

struct RandomCorpus {
    scenarios: Vec<Scenario>,
    clusters: Vec<StepCluster>,
    l_max: usize,
    flagged: BTreeSet<FileKey>,
}

fn random_corpus(rng: &mut ChaCha8Rng) -> RandomCorpus {
    let alphabet = rng.gen_range(1..=8);
    let n = rng.gen_range(1..=30);
    let mut scenarios = Vec::new();
    for i in 0..n {
        let repo = REPOS[rng.gen_range(0..REPOS.len())];
        let file = format!("f{}.feature", rng.gen_range(0..3));
        let len = rng.gen_range(0..=15);
        let steps = (0..len)
            .map(|_| {
                if rng.gen_bool(0.08) {
                    ScenarioStep {
                        cluster: None,
                        text: "unclustered".into(),
                    }
                } else {
                    let c = rng.gen_range(0..alphabet);
                    ScenarioStep {
                        cluster: Some(format!("k{c}")),
                        text: format!("text {c} v{}", rng.gen_range(0..8)),
                    }
                }
            })
            .collect();
        scenarios.push(Scenario {
            key: key(repo, &file, &format!("s{i}")),
            steps,
        });
    }
    // some clusters have no table entry, exercising the exemplar fallback
    let mut clusters = Vec::new();
    for c in 0..alphabet {
        let (present, templated) = (rng.gen_bool(0.8), rng.gen_bool(0.3));
        if present {
            clusters.push(StepCluster {
                cluster_id: format!("k{c}"),
                canonical_text: format!("canonical {c}"),
                member_count: 1,
                has_adjacent_placeholders: templated,
            });
        }
    }
    let mut flagged = BTreeSet::new();
    for r in REPOS {
        for f in 0..3 {
            if rng.gen_bool(0.15) {
                flagged.insert((r.to_string(), format!("f{f}.feature")));
            }
        }
    }
    RandomCorpus {
        scenarios,
        clusters,
        l_max: rng.gen_range(2..=16),
        flagged,
    }
}

/// Direct enumeration of every contiguous window and every statistic.
fn brute_force(c: &RandomCorpus) -> Vec<PatternStats> {
    type Occ<'a> = (&'a ScenarioKey, Vec<&'a str>);
    let mut occ: BTreeMap<Vec<String>, Vec<Occ>> = BTreeMap::new();
    for s in &c.scenarios {
        let n = s.steps.len();
        for start in 0..n {
            for len in 2..=c.l_max {
                if start + len > n {
                    break;
                }
                let window = &s.steps[start..start + len];
                if window.iter().any(|st| st.cluster.is_none()) {
                    break;
                }
                let seq: Vec<String> = window.iter().map(|st| st.cluster.clone().unwrap()).collect();
                let texts = window.iter().map(|st| st.text.as_str()).collect();
                occ.entry(seq).or_default().push((&s.key, texts));
            }
        }
    }
    let cmap: HashMap<&str, &StepCluster> = c.clusters.iter().map(|k| (k.cluster_id.as_str(), k)).collect();
    let mut out = Vec::new();
    for (seq, list) in occ {
        if list.len() < 2 {
            continue;
        }
        let scen: BTreeSet<&ScenarioKey> = list.iter().map(|o| o.0).collect();
        let files: BTreeSet<(&str, &str)> = scen.iter().map(|k| (k.repo_slug.as_str(), k.file_path.as_str())).collect();
        let repos: BTreeSet<&str> = files.iter().map(|f| f.0).collect();
        let orgs: BTreeSet<OwnerId> = repos.iter().map(|r| OwnerId::from_repo_slug(r)).collect();
        let max_rec = files
            .iter()
            .map(|f| scen.iter().filter(|k| (k.repo_slug.as_str(), k.file_path.as_str()) == *f).count())
            .max()
            .unwrap();
        let max_files = repos.iter().map(|r| files.iter().filter(|f| f.0 == *r).count()).max().unwrap();
        let flagged = list
            .iter()
            .filter(|o| c.flagged.contains(&(o.0.repo_slug.clone(), o.0.file_path.clone())))
            .count();
        let exemplars: Vec<Vec<String>> = (0..seq.len())
            .map(|i| {
                let set: BTreeSet<&str> = list.iter().map(|o| o.1[i]).collect();
                set.into_iter().take(MAX_EXEMPLARS).map(String::from).collect()
            })
            .collect();
        out.push(PatternStats {
            len: seq.len(),
            support_total: list.len(),
            n_distinct_scenarios: scen.len(),
            n_distinct_files: files.len(),
            n_distinct_repos: repos.len(),
            n_distinct_orgs: orgs.len(),
            max_within_file_recurrence: max_rec,
            max_within_repo_files: max_files,
            outlier_fraction: flagged as f64 / list.len() as f64,
            has_template_structure: seq
                .iter()
                .any(|k| cmap.get(k.as_str()).is_some_and(|c| c.has_adjacent_placeholders)),
            canonical_texts: seq
                .iter()
                .zip(&exemplars)
                .map(|(k, ex)| match cmap.get(k.as_str()) {
                    Some(c) => c.canonical_text.clone(),
                    None => ex[0].clone(),
                })
                .collect(),
            exemplar_texts: exemplars,
            cluster_id_seq: seq,
        });
    }
    out.sort_by(|a, b| (a.len, &a.cluster_id_seq).cmp(&(b.len, &b.cluster_id_seq)));
    out
}

fn ngram_oracle() -> CheckResult {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut compared = 0;
    for trial in 0..100 {
        let c = random_corpus(&mut rng);
        let want = brute_force(&c);
        let acc = PatternAccumulator::from_scenarios(&c.scenarios, c.l_max);
        let got = acc.finish(&cluster_map(&c.clusters), &c.flagged);
        ensure(got.len() == want.len(), || {
            format!("trial {trial}: {} patterns, oracle {}", got.len(), want.len())
        })?;
        for (g, w) in got.iter().zip(&want) {
            ensure(g == w, || format!("trial {trial}: {g:?} != oracle {w:?}"))?;
        }
        // the two-pass entry point agrees with the oracle given its own flags
        let mined = mine(&c.scenarios, &c.clusters, c.l_max);
        let flags = slicemine_core::mine::flagged_files(&mined.spec_flags);
        let again = brute_force(&RandomCorpus {
            scenarios: c.scenarios.clone(),
            clusters: c.clusters.clone(),
            l_max: c.l_max,
            flagged: flags,
        });
        ensure(mined.patterns == again, || format!("trial {trial}: mine() differs from oracle"))?;
        compared += want.len();
    }
    let el = started.elapsed();
    ensure(el < Duration::from_secs(30), || format!("took {el:?}"))?;
    pass(format!("100 corpora, {compared} patterns"))
}

fn closure_oracle() -> CheckResult {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut closed_total = 0;
    for trial in 0..60 {
        let c = random_corpus(&mut rng);
        let all = PatternAccumulator::from_scenarios(&c.scenarios, c.l_max).finish(&cluster_map(&c.clusters), &BTreeSet::new());
        let contains = |outer: &[String], inner: &[String]| outer.windows(inner.len()).any(|w| w == inner);
        let brute: BTreeSet<&Vec<String>> = all
            .iter()
            .filter(|p| {
                !all.iter().any(|q| {
                    q.len > p.len && q.support_total == p.support_total && contains(&q.cluster_id_seq, &p.cluster_id_seq)
                })
            })
            .map(|p| &p.cluster_id_seq)
            .collect();
        let idx = ClosureIndex::new(&all);
        let survivors: BTreeSet<&Vec<String>> = all.iter().filter(|p| !idx.not_closed(p)).map(|p| &p.cluster_id_seq).collect();
        ensure(brute == survivors, || format!("trial {trial}: closed sets differ"))?;
        closed_total += brute.len();
    }
    let el = started.elapsed();
    ensure(el < Duration::from_secs(30), || format!("took {el:?}"))?;
    pass(format!("60 corpora, {closed_total} closed patterns"))
}

fn spec_boundaries() -> CheckResult {
    ensure(spec_suite_fires(51, 101, 0.0), || "51 patterns / top 101 should fire".into())?;
    ensure(!spec_suite_fires(200, 50, 0.10), || "200 / 50 / 0.10 should not fire".into())?;
    ensure(spec_suite_fires(51, 10, 0.30), || "51 / 10 / 0.30 should fire".into())?;
    ensure(!spec_suite_fires(50, 101, 0.9), || "50 patterns is not dense enough".into())?;
    ensure(!spec_suite_fires(51, 100, 0.0), || "top recurrence 100 is not above 100".into())?;
    pass("")
}

// ------------------------------------------------------------ statistics

fn mcnemar_values() -> CheckResult {
    let started = Instant::now();
    let m = mcnemar(31, 14);
    ensure(close(m.chi2, 5.69, 0.01), || format!("(31,14) chi2 {}", m.chi2))?;
    ensure(close(m.p_value, 0.017, 0.001), || format!("(31,14) p {}", m.p_value))?;
    let m = mcnemar(52, 19);
    ensure(close(m.chi2, 14.4, 0.1), || format!("(52,19) chi2 {}", m.chi2))?;
    let m = mcnemar(71, 17);
    ensure(close(m.chi2, 31.9, 0.1), || format!("(71,17) chi2 {}", m.chi2))?;
    ensure(started.elapsed() < Duration::from_secs(1), || "too slow".into())?;
    pass("")
}

fn all_yes_f1() -> CheckResult {
    let truth: Vec<bool> = (0..1000).map(|i| i < 726).collect();
    let pred = vec![true; truth.len()];
    let scores = vec![1.0; truth.len()];
    let m = binary_metrics(&pred, &scores, &truth);
    ensure(close(m.f1, 0.841, 0.001), || format!("f1 {}", m.f1))?;
    let r: f64 = 0.726;
    ensure(close(m.f1, 2.0 * r / (1.0 + r), 1e-12), || "not the closed form".into())?;
    pass(format!("f1 {:.4}", m.f1))
}

fn kappas() -> CheckResult {
    use Extraction::*;
    let perfect = vec![vec![Yes, Yes, Yes], vec![No, No, No], vec![Uncertain, Uncertain, Uncertain]];
    let k = fleiss_kappa(&perfect).map_err(|e| e.to_string())?;
    ensure(k == 1.0, || format!("perfect fleiss {k}"))?;

    let items = vec![vec![Yes, Yes, Yes], vec![Yes, Yes, No], vec![No, No, Uncertain], vec![Yes, No, Uncertain]];
    let cats = [Yes, No, Uncertain];
    let n = 3.0;
    let counts: Vec<Vec<f64>> = items
        .iter()
        .map(|r| cats.iter().map(|c| r.iter().filter(|x| *x == c).count() as f64).collect())
        .collect();
    let p_bar = counts
        .iter()
        .map(|row| (row.iter().map(|x| x * x).sum::<f64>() - n) / (n * (n - 1.0)))
        .sum::<f64>()
        / items.len() as f64;
    let p_e: f64 = (0..cats.len())
        .map(|j| {
            let pj = counts.iter().map(|r| r[j]).sum::<f64>() / (items.len() as f64 * n);
            pj * pj
        })
        .sum();
    let want = (p_bar - p_e) / (1.0 - p_e);
    let got = fleiss_kappa(&items).map_err(|e| e.to_string())?;
    ensure(close(got, want, 1e-9), || format!("fleiss {got} vs direct {want}"))?;

    let mut a = Vec::new();
    let mut b = Vec::new();
    for (x, y, count) in [(true, true, 20), (true, false, 5), (false, true, 5), (false, false, 20)] {
        for _ in 0..count {
            a.push(x);
            b.push(y);
        }
    }
    let c = cohen_kappa(&a, &b).map_err(|e| e.to_string())?;
    ensure(c == 0.6, || format!("cohen {c}"))?;
    pass(format!("hand case {got:.6}"))
}

// ------------------------------------------------------------ classifier

fn random_pattern(rng: &mut ChaCha8Rng, i: usize) -> PatternStats {
    let support = rng.gen_range(2..40);
    let files = rng.gen_range(1..6);
    let repos = rng.gen_range(1..4);
    let mut p = PatternStats {
        cluster_id_seq: vec![format!("a{i:04}"), format!("b{i:04}")],
        len: rng.gen_range(2..10),
        support_total: support,
        n_distinct_scenarios: rng.gen_range(1..=support),
        n_distinct_files: files,
        n_distinct_repos: repos,
        n_distinct_orgs: rng.gen_range(1..=repos),
        max_within_file_recurrence: rng.gen_range(1..8),
        max_within_repo_files: rng.gen_range(1..=files),
        outlier_fraction: rng.gen_range(0.0..1.0),
        has_template_structure: rng.gen_bool(0.2),
        canonical_texts: vec![],
        exemplar_texts: vec![],
    };
    if !p.scope_eligible() {
        p.max_within_file_recurrence = 2;
    }
    p
}

fn classifier_sanity() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let ps: Vec<PatternStats> = (0..150).map(|i| random_pattern(&mut rng, i)).collect();

    // separable: the label is a threshold on one feature
    let items: Vec<LabelledPattern> = ps
        .iter()
        .map(|p| LabelledPattern {
            pattern: p,
            label: p.outlier_fraction < 0.5,
        })
        .collect();
    let cfg = CvConfig {
        bootstrap: 100,
        ..CvConfig::default()
    };
    let report = evaluate_ew(&items, &cfg).map_err(|e| e.to_string())?;
    ensure(report.pooled.f1 >= 0.98, || format!("oof f1 {}", report.pooled.f1))?;

    // rule-generated mechanisms over a balanced scope mix
    let scoped: Vec<PatternStats> = (0..90)
        .map(|i| {
            let mut p = random_pattern(&mut rng, 1000 + i);
            match i % 3 {
                0 => p.max_within_file_recurrence = rng.gen_range(2..8),
                1 => {
                    p.max_within_file_recurrence = 1;
                    p.n_distinct_files = rng.gen_range(2..6);
                    p.max_within_repo_files = rng.gen_range(2..=p.n_distinct_files);
                }
                _ => {
                    p.max_within_file_recurrence = 1;
                    p.max_within_repo_files = 1;
                    p.n_distinct_repos = rng.gen_range(2..5);
                    p.n_distinct_orgs = rng.gen_range(2..=p.n_distinct_repos);
                }
            }
            p
        })
        .collect();
    let mech: Vec<_> = scoped.iter().map(|p| (p, rule_mechanism(p).unwrap())).collect();
    let mr = evaluate_mechanism_cv(&mech, &CvConfig::default()).map_err(|e| e.to_string())?;
    ensure(mr.learned.accuracy == 1.0, || format!("mechanism accuracy {}", mr.learned.accuracy))?;

    // monotone rescaling of any one feature leaves predictions bit-identical
    let x: Vec<Vec<f64>> = ps.iter().map(|p| featurize(p).unwrap().to_array().to_vec()).collect();
    let y: Vec<bool> = ps.iter().map(|p| p.support_total % 3 == 0 || p.outlier_fraction < 0.3).collect();
    let params = GbdtParams::default();
    let base = train_binary(&x, &y, &params).map_err(|e| e.to_string())?;
    for f in 0..x[0].len() {
        let scaled: Vec<Vec<f64>> = x
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r[f] = r[f] * 1000.0 + 7.0;
                r
            })
            .collect();
        let m = train_binary(&scaled, &y, &params).map_err(|e| e.to_string())?;
        for (a, b) in x.iter().zip(&scaled) {
            let (pa, pb) = (base.predict_proba(a), m.predict_proba(b));
            ensure(pa.to_bits() == pb.to_bits(), || format!("feature {f}: {pa} vs {pb}"))?;
        }
    }
    pass(format!("oof f1 {:.4}", report.pooled.f1))
}

// ------------------------------------------------------------ determinism

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

fn run_pipeline(out: &Path, workers: Option<usize>) -> Result<(), String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_slicemine"));
    if let Some(w) = workers {
        cmd.arg("--workers").arg(w.to_string());
    }
    cmd.arg("run")
        .arg("--features")
        .arg(fixtures().join("corpus"))
        .arg("--out-dir")
        .arg(out)
        .arg("--labels")
        .arg(fixtures().join("labels.jsonl"))
        .args(["--pool-size", "40", "--overlap", "12", "--spec-coverage", "0", "--slices"])
        .args(["--min-cluster-size", "3", "--min-samples", "3", "--bootstrap", "200"])
        .env("RUST_LOG", "warn");
    let o = cmd.output().map_err(|e| e.to_string())?;
    ensure(o.status.success(), || {
        format!("pipeline failed: {}", String::from_utf8_lossy(&o.stderr))
    })
}

fn digest_tree(root: &Path) -> BTreeMap<String, String> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<String, String>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                let bytes = std::fs::read(&p).unwrap();
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, format!("{:x}", Sha256::digest(&bytes)));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn determinism() -> CheckResult {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let runs = [("first", None), ("second", None), ("one-worker", Some(1)), ("eight-workers", Some(8))];
    let mut digests = Vec::new();
    for (name, workers) in runs {
        let dir = tmp.path().join(name);
        run_pipeline(&dir, workers)?;
        digests.push((name, digest_tree(&dir)));
    }
    let (ref_name, reference) = &digests[0];
    for expected in ["patterns.csv", "verdicts.csv", "filtered.csv", "prevalence.json", "model.bin", "pool.jsonl"] {
        ensure(reference.contains_key(expected), || format!("{expected} not produced"))?;
    }
    for (name, d) in &digests[1..] {
        for (file, h) in reference {
            ensure(d.get(file) == Some(h), || format!("{file} differs between {ref_name} and {name}"))?;
        }
        ensure(d.len() == reference.len(), || format!("{name} produced a different file set"))?;
    }
    pass(format!("{} files identical across 4 runs", reference.len()))
}

// ------------------------------------------------------------ released data

/// Set SLICEMINE_RELEASED_DATA to a directory holding the released
/// `labels.jsonl` (per-rater), `patterns.csv`, and optionally
/// `judge_verdicts.jsonl`.
fn released_data() -> CheckResult {
    let Some(dir) = std::env::var_os("SLICEMINE_RELEASED_DATA").map(PathBuf::from) else {
        return Ok(Outcome::Skip("SLICEMINE_RELEASED_DATA not set".into()));
    };
    let labels_path = dir.join("labels.jsonl");
    let patterns_path = dir.join("patterns.csv");
    if !labels_path.exists() || !patterns_path.exists() {
        return Ok(Outcome::Skip(format!("labels.jsonl or patterns.csv missing in {}", dir.display())));
    }
    let labels = read_labels(&labels_path).map_err(|e| e.to_string())?;
    let ag = agreement(&labels).map_err(|e| e.to_string())?;
    let fe = ag.fleiss_extraction.unwrap_or(f64::NAN);
    let fm = ag.fleiss_mechanism.unwrap_or(f64::NAN);
    ensure(close(fe, 0.560, 0.005), || format!("fleiss extraction {fe}"))?;
    ensure(close(fm, 0.788, 0.005), || format!("fleiss mechanism {fm}"))?;

    let patterns = read_patterns_csv(&patterns_path).map_err(|e| e.to_string())?;
    let agg = aggregate_all(&labels).map_err(|e| e.to_string())?;
    let items = labelled_patterns(&patterns, &agg);
    let report = evaluate_ew(&items, &CvConfig::default()).map_err(|e| e.to_string())?;
    let f1 = report.pooled.f1;
    ensure((0.852..=0.927).contains(&f1), || format!("oof f1 {f1}"))?;

    let judge_path = dir.join("judge_verdicts.jsonl");
    let mut detail = format!("fleiss {fe:.3}/{fm:.3}, oof f1 {f1:.3}");
    if judge_path.exists() {
        let verdicts: Vec<JudgeVerdict> = slicemine_core::io::read_jsonl(&judge_path).map_err(|e| e.to_string())?;
        let ja = judge_agreement(&verdicts, &agg);
        ensure(close(ja.f1_yes, 0.728, 0.005), || format!("judge f1(yes) {}", ja.f1_yes))?;
        detail.push_str(&format!(", judge f1 {:.3}", ja.f1_yes));
    } else {
        detail.push_str(", judge verdicts absent");
    }
    pass(detail)
}

// ------------------------------------------------------------ judge

fn stub(script: Vec<(u16, String)>) -> (String, Arc<Mutex<usize>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(Mutex::new(0));
    let hits2 = hits.clone();
    std::thread::spawn(move || {
        let mut script = script.into_iter();
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap() == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            *hits2.lock().unwrap() += 1;
            let (status, resp) = script.next().unwrap_or((500, "exhausted".into()));
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{resp}",
                resp.len()
            );
        }
    });
    (format!("http://{addr}/v1/chat/completions"), hits)
}

fn chat(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

fn judge_harness() -> CheckResult {
    use slicemine_core::labels::Mechanism;
    let responses = [
        "```json\n{\"extraction_worthy\":\"yes\",\"mechanism\":\"background\"}\n```".to_string(),
        "Looking at the slice, it is boilerplate.\n{\"extraction_worthy\": \"No\", \"mechanism\": \"n/a\"}".to_string(),
        "maybe".to_string(),
    ];
    let (url, _) = stub(responses.iter().map(|r| (200, chat(r))).collect());
    let mut cfg = JudgeConfig::new(&url, "tok", "stub");
    cfg.initial_backoff = Duration::from_millis(5);
    let mut parsed = Vec::new();
    for _ in 0..3 {
        let r = query_judge("prompt", &cfg).map_err(|e| e.to_string())?;
        parsed.push(parse_verdict("p", "stub", &r.content()));
    }
    ensure(
        parsed[0].parse_ok && parsed[0].extraction_worthy == Some(Extraction::Yes) && parsed[0].mechanism == Some(Mechanism::Background),
        || format!("fenced: {:?}", parsed[0]),
    )?;
    ensure(parsed[1].parse_ok && parsed[1].extraction_worthy == Some(Extraction::No), || {
        format!("prose: {:?}", parsed[1])
    })?;
    ensure(!parsed[2].parse_ok && parsed[2].extraction_worthy.is_none(), || format!("malformed: {:?}", parsed[2]))?;

    let ok = chat("{\"extraction_worthy\":\"yes\",\"mechanism\":\"background\"}");
    let (url, hits) = stub(vec![(429, "slow down".into()), (200, ok.clone())]);
    let mut c = cfg.clone();
    c.endpoint = url;
    let r = query_judge("p", &c).map_err(|e| e.to_string())?;
    ensure(r.attempts == 2 && *hits.lock().unwrap() == 2, || format!("429 then 200: {} attempts", r.attempts))?;

    let (url, hits) = stub(vec![(401, "no".into()), (200, ok)]);
    c.endpoint = url;
    let e = query_judge("p", &c);
    ensure(matches!(e, Err(JudgeError::Auth(401))), || format!("401: {e:?}"))?;
    ensure(*hits.lock().unwrap() == 1, || "401 was retried".into())?;

    let (url, hits) = stub(vec![(503, "a".into()), (503, "b".into()), (503, "c".into()), (503, "d".into())]);
    c.endpoint = url;
    let e = query_judge("p", &c);
    ensure(matches!(e, Err(JudgeError::Unavailable { attempts: 3, .. })), || format!("503s: {e:?}"))?;
    ensure(*hits.lock().unwrap() == 3, || "expected exactly three attempts".into())?;
    pass("")
}
