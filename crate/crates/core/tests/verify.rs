mod common;

use common::{affine_model, random_ids, random_model, sample_logits};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use zonofair::lm::argmax;
use zonofair::verify::{
    abstract_logits, brute_force_certify, certify_corpus, certify_sentence, count_combinations, fairness_score,
    max_verifiable_radius, radar_csv, verify_at_radius, FailureReason, FairnessReport,
    PerturbationSpec, PositionSelection, PropagationConfig, SearchConfig, SentenceRecord,
};
use zonofair::Error;

#[test]
fn affine_model_margins() {
    let m = affine_model();
    let c = verify_at_radius(&m, &[2], &PerturbationSpec::all(0.5)).unwrap();
    assert!(c.verified);
    assert_eq!(c.predicted_label, 0);
    let (lo, hi) = c.margin_interval.unwrap();
    assert!((lo - 3.0).abs() < 1e-12 && (hi - 5.0).abs() < 1e-12);
    let c = verify_at_radius(&m, &[2], &PerturbationSpec::all(2.5)).unwrap();
    assert!(!c.verified);
    assert_eq!(c.failure_reason, Some(FailureReason::MarginStraddlesZero));
    let (lo, hi) = c.margin_interval.unwrap();
    assert!((lo + 1.0).abs() < 1e-12 && (hi - 9.0).abs() < 1e-12);
}

#[test]
fn affine_model_radius_is_two() {
    let m = affine_model();
    let r = max_verifiable_radius(&m, &[2], None, &SearchConfig::default(), &PropagationConfig::default()).unwrap();
    assert!((r.eps_max - 2.0).abs() < 1e-6, "{r:?}");
    assert!(r.eps_max < 2.0);
    assert!(!r.cap_hit && !r.unverifiable);
    assert!(r.first_failure.unwrap() - r.eps_max <= 1e-7);
    let s = SearchConfig::default();
    assert!(certify_sentence(&m, &[2], 1.0, None, &s).unwrap().0);
    assert!(!certify_sentence(&m, &[2], 3.0, None, &s).unwrap().0);
    assert!(certify_sentence(&m, &[2], 0.0, None, &s).unwrap().0);
}

#[test]
fn unperturbed_set_matches_concrete_forward() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..5 {
        let m = random_model(seed, 2, 6);
        let ids = random_ids(&mut rng, 16, 4, 6);
        let z = abstract_logits(&m, &ids, &PerturbationSpec::all(0.0), &PropagationConfig::default()).unwrap();
        let concrete = m.logits(&ids).unwrap();
        let hull = z.interval_hull();
        for i in 0..2 {
            assert!((z.center()[i] - concrete[i]).abs() < 1e-9);
            assert!(hull.hi[i] - hull.lo[i] < 1e-9);
        }
        let c = verify_at_radius(&m, &ids, &PerturbationSpec::all(0.0)).unwrap();
        let (lo, hi) = c.margin_interval.unwrap();
        let p = argmax(concrete.as_slice().unwrap());
        let margin = concrete[p] - concrete[1 - p];
        assert!((lo - margin).abs() < 1e-9 && (hi - margin).abs() < 1e-9);
        assert!(c.verified);
    }
}

#[test]
fn verified_balls_contain_no_counterexample() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for seed in 0..4 {
        let m = random_model(seed + 10, 1, 5);
        let ids = random_ids(&mut rng, 16, 3, 5);
        let r = max_verifiable_radius(&m, &ids, None, &SearchConfig::default(), &PropagationConfig::default()).unwrap();
        let eps = r.eps_max;
        let cert = verify_at_radius(&m, &ids, &PerturbationSpec::all(eps)).unwrap();
        assert_eq!(cert.verified, eps > 0.0);
        assert!(verify_at_radius(&m, &ids, &PerturbationSpec::all(eps / 2.0)).unwrap().verified);
        for _ in 0..500 {
            let l = sample_logits(&m, &ids, &[0, 1, 2], eps, &mut rng);
            assert_eq!(argmax(&l), cert.predicted_label);
        }
    }
}

#[test]
fn subset_of_positions_verifies_at_least_as_far() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = random_model(21, 1, 5);
    let ids = random_ids(&mut rng, 16, 4, 5);
    let s = SearchConfig::default();
    let p = PropagationConfig::default();
    let all = max_verifiable_radius(&m, &ids, None, &s, &p).unwrap();
    let one = max_verifiable_radius(&m, &ids, Some(&[1]), &s, &p).unwrap();
    assert!(one.eps_max >= all.eps_max);
    assert!(verify_at_radius(&m, &ids, &PerturbationSpec::at(1.0, vec![])).unwrap().verified);
    assert!(matches!(
        verify_at_radius(&m, &ids, &PerturbationSpec::at(0.1, vec![4])),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn huge_radius_is_not_verified() {
    let m = random_model(5, 2, 4);
    let c = verify_at_radius(&m, &[3, 4, 5, 0], &PerturbationSpec::all(50.0)).unwrap();
    assert!(!c.verified);
    assert!(c.failure_reason.is_some());
}

#[test]
fn brute_force_basics() {
    let m = random_model(7, 1, 4);
    let ids = [3, 4, 5, 0];
    let none = vec![vec![]; 4];
    assert!(brute_force_certify(&m, &ids, &none, 10).unwrap());
    assert_eq!(count_combinations(&m, &ids, &none).unwrap(), 1);
    // Candidate equal to the original contributes nothing.
    let same = vec![vec![3], vec![], vec![], vec![]];
    assert_eq!(count_combinations(&m, &ids, &same).unwrap(), 1);
    let many = vec![vec![6, 7, 8], vec![6, 7, 8], vec![9, 10], vec![]];
    assert_eq!(count_combinations(&m, &ids, &many).unwrap(), 48);
    assert!(matches!(brute_force_certify(&m, &ids, &many, 47), Err(Error::Resource(_))));
    let on_pad = vec![vec![], vec![], vec![], vec![6]];
    assert!(brute_force_certify(&m, &ids, &on_pad, 10).is_err());
}

#[test]
fn fairness_arithmetic() {
    let mut flags = vec![false; 20];
    flags[..4].fill(true);
    assert_eq!(fairness_score(&flags).unwrap(), 0.20);
    assert_eq!(fairness_score(&[false; 3]).unwrap(), 0.0);
    assert!(fairness_score(&[]).is_err());
}

#[test]
fn report_formats() {
    let records = vec![
        SentenceRecord::from_radius(0, 4e-4, 3e-4),
        SentenceRecord::from_radius(1, 2e-4, 3e-4),
    ];
    let report = FairnessReport::from_records(3e-4, records).unwrap();
    assert_eq!(report.psi, 0.5);
    let csv = radar_csv(&report).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "sentence_index,eps_max,threshold_D,certified");
    assert_eq!(lines[1], "0,4e-4,3e-4,true");
    assert_eq!(lines[2], "1,2e-4,3e-4,false");
}

fn gender_table() -> zonofair::embed::EmbeddingTable {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    zonofair::embed::EmbeddingTable::load(&dir.join("gender_table.json")).unwrap()
}

#[test]
fn gender_fixture_threshold() {
    use zonofair::verify::compute_threshold;
    let t = gender_table();
    let anchors = vec!["female".to_string(), "male".to_string()];
    let r = compute_threshold(&t, &anchors, 50).unwrap();
    assert_eq!(r.threshold, 3e-4);
    let max_entry = r.anchors.iter().map(|a| a.max_distance).fold(0.0, f64::max);
    assert_eq!(r.threshold, max_entry);
    let female = &r.anchors[0];
    assert!(female.neighbors.iter().any(|(w, d)| w == "male" && *d == 3e-4));
    assert!(female.neighbors.iter().all(|(_, d)| *d <= 3e-4));
    let single = compute_threshold(&t, &["female".to_string()], 1).unwrap();
    assert!(single.threshold < 3e-4);
    assert!(matches!(
        compute_threshold(&t, &["nobody".to_string()], 1),
        Err(Error::NotFound(_))
    ));
}

#[test]
fn threshold_is_max_over_anchors() {
    use ndarray::array;
    use zonofair::embed::EmbeddingTable;
    use zonofair::verify::compute_threshold;
    use zonofair::vocab::Vocab;
    let vocab = Vocab::from_words(["a", "b", "c", "d"]);
    let t = EmbeddingTable::new(
        vocab,
        array![[0.0], [0.0], [0.0], [2e-4], [1.0], [1.0003]],
    )
    .unwrap();
    let r = compute_threshold(&t, &["a".to_string(), "c".to_string()], 1).unwrap();
    assert_eq!(r.anchors[0].max_distance, 2e-4);
    assert!((r.anchors[1].max_distance - 3e-4).abs() < 1e-15);
    assert_eq!(r.threshold, r.anchors[1].max_distance);
}

#[test]
fn corpus_records_keep_order_and_failures() {
    let m = random_model(3, 1, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let sentences: Vec<Vec<usize>> = (1..=4).map(|len| random_ids(&mut rng, 14, len, 5)).collect();
    let search = SearchConfig::default();
    let cfg = PropagationConfig::default();

    let all = certify_corpus(&m, &sentences, 1e-3, &PositionSelection::All, &search, &cfg).unwrap();
    assert_eq!(all.n, 4);
    for (i, s) in all.sentences.iter().enumerate() {
        assert_eq!(s.index, i);
        assert_eq!(s.tokens.len(), i + 1);
        let r = max_verifiable_radius(&m, &sentences[i], None, &search, &cfg).unwrap();
        assert_eq!(s.eps_max, r.eps_max);
        assert!(s.error.is_none() && s.margin_at_zero.unwrap() >= 0.0);
    }

    let none = certify_corpus(&m, &sentences, 1e-3, &PositionSelection::FirstN(0), &search, &cfg).unwrap();
    assert_eq!(none.psi, 1.0);
    assert!(none.sentences.iter().all(|s| s.cap_hit && s.eps_max == search.eps_cap));

    // Position 1 is padding in the first sentence only.
    let sel = PositionSelection::Explicit(vec![1]);
    let mixed = certify_corpus(&m, &sentences, 0.0, &sel, &search, &cfg).unwrap();
    let first = &mixed.sentences[0];
    assert!(!first.certified && first.error.as_deref().unwrap().contains("padding"));
    assert!(mixed.sentences[1..].iter().all(|s| s.error.is_none() && s.certified));
    assert_eq!(mixed.psi, 0.75);
}
