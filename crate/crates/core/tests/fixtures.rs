use std::path::PathBuf;

use tlaprove_core::corpus::{build_corpus, build_corpus_with_report, CorpusRecord, ExclusionSet};
use tlaprove_core::orchestrator::assemble;
use tlaprove_core::proof_ast::{extract_statements, parse_module, parse_proof_text, render_module, ProofStatus};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn read(rel: &str) -> String {
    std::fs::read_to_string(fixtures().join(rel)).unwrap()
}

const EVEN_LABELS: [&str; 6] = ["<1>1", "<1>2", "<2>1", "<2>2", "<2>. QED", "<1>. QED"];

const MAJORITY_LABELS: [&str; 21] = [
    "<1>1", "<1>2", "<1>3", "<2>1", "<2>2", "<3>1", "<3>2", "<3>3", "<3>. QED", "<2>3", "<3>10", "<4>1", "<4>2",
    "<4>3", "<4>. QED", "<3>20", "<3>30", "<3>. QED", "<2>4", "<2>. QED", "<1>. QED",
];

fn round_trip(rel: &str, labels: &[&str], depth: usize) {
    let first = parse_module(&read(rel)).unwrap();
    let rendered = render_module(&first).unwrap();
    let second = parse_module(&rendered).unwrap();
    assert_eq!(first, second, "{rel}");
    assert_eq!(render_module(&second).unwrap(), rendered);
    assert_eq!(first.theorems.len(), 1);
    assert_eq!(first.theorems[0].proof.depth(), depth);

    let got: Vec<String> = extract_statements(&first)
        .iter()
        .map(|s| s.label.as_ref().unwrap().to_string())
        .collect();
    assert_eq!(got, labels, "{rel}");
}

#[test]
fn even_module_round_trips() {
    round_trip("eval/EvenDouble.tla", &EVEN_LABELS, 2);
}

#[test]
fn majority_module_round_trips() {
    round_trip("eval/MajoritySimple.tla", &MAJORITY_LABELS, 4);
    let m = parse_module(&read("eval/MajoritySimple.tla")).unwrap();
    assert_eq!(m.declarations, ["CONSTANT Value", "VARIABLES seq, i, cand, cnt"]);
    assert_eq!(
        m.definitions.iter().map(|d| d.name.as_str()).collect::<Vec<_>>(),
        ["Init", "PositionsBefore", "OccurrencesBefore"]
    );
}

#[test]
fn assemble_parse_assemble_is_stable() {
    for rel in ["eval/EvenDouble.tla", "eval/MajoritySimple.tla"] {
        let mut tree = parse_module(&read(rel)).unwrap().theorems.remove(0).proof;
        tree.set_status_recursive(ProofStatus::Verified);
        let once = assemble(&tree).unwrap();
        let mut again = parse_proof_text(&once).unwrap();
        assert!(again.same_shape(&tree), "{rel}");
        again.set_status_recursive(ProofStatus::Verified);
        assert_eq!(assemble(&again).unwrap(), once);
    }
}

#[test]
fn expected_even_proof_matches_the_eval_module() {
    let expected = parse_module(&read("even/expected_proof.tla")).unwrap();
    let eval = parse_module(&read("eval/EvenDouble.tla")).unwrap();
    assert!(expected.theorems[0].proof.same_shape(&eval.theorems[0].proof));
    assert_eq!(
        expected.theorems[0].to_obligation(&expected).assumes,
        eval.theorems[0].to_obligation(&eval).assumes
    );
}

#[test]
fn corpus_tree_exercises_skips_and_duplicates() {
    let (records, report) =
        build_corpus_with_report::<f64>(&[fixtures().join("corpus")], &ExclusionSet::none()).unwrap();
    assert_eq!(report.files_skipped.len(), 1);
    assert!(report.files_skipped[0].0.ends_with("broken/Broken.tla"));
    assert!(report.duplicates > 0);
    let mut ids: Vec<&str> = records.iter().map(|r| r.id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    assert_eq!(ids.len(), records.len());
}

#[test]
fn evaluation_exclusions_prevent_leakage() {
    let roots = [fixtures().join("corpus")];
    let eval_files = ["EvenDouble.tla", "MajoritySimple.tla"];
    let eval_theorems = ["EvenDouble", "InitBound"];
    let leaks = |records: &[CorpusRecord]| {
        records
            .iter()
            .filter(|r| {
                let src = &r.statement.source;
                eval_files.iter().any(|f| src.path.ends_with(f))
                    || src.theorem.as_deref().is_some_and(|t| eval_theorems.contains(&t))
            })
            .count()
    };

    let open: Vec<CorpusRecord> = build_corpus(&roots, &ExclusionSet::none()).unwrap();
    assert!(leaks(&open) > 0, "the fixture tree should contain evaluation material");

    let exclusions = ExclusionSet::load(&fixtures().join("eval/exclusions.txt")).unwrap();
    let closed: Vec<CorpusRecord> = build_corpus(&roots, &exclusions).unwrap();
    assert_eq!(leaks(&closed), 0);
    assert!(!closed.is_empty());
}
