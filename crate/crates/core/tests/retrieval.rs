use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tlaprove_core::corpus::CorpusRecord;
use tlaprove_core::proof_ast::{ProofStatement, StatementSource};
use tlaprove_core::retrieval::{cosine_similarity, Embedder, Embedding, RetrievalIndex, TrigramEmbedder};

fn vector(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0f64..100.0, dim).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-6))
}

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..24).prop_flat_map(|d| (vector(d), vector(d)))
}

proptest! {
    #[test]
    fn cosine_is_symmetric_and_bounded((a, b) in pair()) {
        let (a, b) = (Embedding::new(a), Embedding::new(b));
        let ab = cosine_similarity(&a, &b).unwrap();
        let ba = cosine_similarity(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((-1.0..=1.0).contains(&ab));
    }

    #[test]
    fn cosine_ignores_positive_scale((a, b) in pair(), s in 0.01f64..1000.0) {
        let (a, b) = (Embedding::new(a), Embedding::new(b));
        let base = cosine_similarity(&a, &b).unwrap();
        prop_assert!((cosine_similarity(&a.scaled(s), &b).unwrap() - base).abs() <= 1e-9);
        prop_assert!((cosine_similarity(&a, &a.scaled(s)).unwrap() - 1.0).abs() <= 1e-9);
        prop_assert!((cosine_similarity(&a, &a.scaled(-s)).unwrap() + 1.0).abs() <= 1e-9);
    }

    #[test]
    fn smaller_k_is_a_prefix(seed in any::<u64>(), k in 1usize..30) {
        let index = RetrievalIndex::new(random_records(&mut ChaCha8Rng::seed_from_u64(seed), 40, 6)).unwrap();
        let q = Embedding::new(random_vector(&mut ChaCha8Rng::seed_from_u64(seed ^ 1), 6));
        let big = index.search(&q, k + 5).unwrap();
        let small = index.search(&q, k).unwrap();
        prop_assert_eq!(small.len(), k.min(40));
        for (s, b) in small.entries.iter().zip(&big.entries) {
            prop_assert_eq!(&s.record.id, &b.record.id);
        }
    }

    #[test]
    fn trigram_vectors_are_unit_length(text in "[ -~]{1,80}") {
        prop_assume!(!text.trim().is_empty());
        let e: Embedding<f64> = TrigramEmbedder::default().embed(&text).unwrap();
        prop_assert!((e.norm() - 1.0).abs() < 1e-12);
    }
}

fn random_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        // Coarse values make exact score ties common.
        let v: Vec<f64> = (0..dim).map(|_| f64::from(rng.gen_range(-3i32..=3))).collect();
        if v.iter().any(|x| *x != 0.0) {
            return v;
        }
    }
}

fn record(i: usize, v: Vec<f64>) -> CorpusRecord<f64> {
    let st = ProofStatement::new(
        format!("statement {i}"),
        None,
        StatementSource {
            path: format!("m{i}.tla"),
            theorem: None,
        },
    );
    CorpusRecord::new(st).with_embedding(Embedding::new(v))
}

fn random_records(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<CorpusRecord<f64>> {
    (0..n).map(|i| record(i, random_vector(rng, dim))).collect()
}

/// Full scan with a full sort: score descending, then corpus position.
fn brute_force(query: &[f64], corpus: &[Vec<f64>], k: usize) -> Vec<(usize, f64)> {
    let norm = |v: &[f64]| v.iter().fold(0.0, |acc, x| acc + x * x).sqrt();
    let qn = norm(query);
    let mut all: Vec<(usize, f64)> = corpus
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let dot = query.iter().zip(v).fold(0.0, |acc, (a, b)| acc + a * b);
            (i, (dot / (qn * norm(v))).clamp(-1.0, 1.0))
        })
        .collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

#[test]
fn index_matches_brute_force_including_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for round in 0..20 {
        let n = rng.gen_range(1..200);
        let dim = rng.gen_range(2..6);
        let vectors: Vec<Vec<f64>> = (0..n).map(|_| random_vector(&mut rng, dim)).collect();
        let records: Vec<_> = vectors.iter().cloned().enumerate().map(|(i, v)| record(i, v)).collect();
        let index = RetrievalIndex::new(records.clone()).unwrap();
        for k in [1, 3, 10, 500] {
            let q = random_vector(&mut rng, dim);
            let got = index.search(&Embedding::new(q.clone()), k).unwrap();
            let want = brute_force(&q, &vectors, k);
            let got: Vec<(String, f64)> = got.entries.iter().map(|e| (e.record.id.clone(), e.score)).collect();
            let want: Vec<(String, f64)> = want.iter().map(|(i, s)| (records[*i].id.clone(), *s)).collect();
            assert_eq!(got, want, "round {round}, n {n}, k {k}");
        }
    }
}

#[test]
fn f32_and_f64_rank_alike_on_well_separated_scores() {
    let vectors = [vec![1.0, 0.0, 0.0], vec![0.9, 0.4, 0.0], vec![0.0, 1.0, 0.0], vec![-1.0, 0.2, 0.1]];
    let recs64: Vec<_> = vectors.iter().cloned().enumerate().map(|(i, v)| record(i, v)).collect();
    let recs32: Vec<CorpusRecord<f32>> = recs64
        .iter()
        .map(|r| CorpusRecord::new(r.statement.clone()).with_embedding(r.embedding.as_ref().unwrap().cast()))
        .collect();
    let q = Embedding::new(vec![1.0, 0.1, 0.0]);
    let a = RetrievalIndex::new(recs64).unwrap().search(&q, 4).unwrap();
    let b = RetrievalIndex::new(recs32).unwrap().search(&q.cast(), 4).unwrap();
    let ids_a: Vec<&str> = a.entries.iter().map(|e| e.record.id.as_str()).collect();
    let ids_b: Vec<&str> = b.entries.iter().map(|e| e.record.id.as_str()).collect();
    assert_eq!(ids_a, ids_b);
}
