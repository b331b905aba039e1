//! End-to-end library flows: synthetic data through files, clustering,
//! cuts, and reports, plus the statistical contracts of the generator.

mod common;

use std::collections::BTreeMap;

use matchtree::dendro::{cut_k, export_dot, export_newick, load_partition, Dendrogram};
use matchtree::evaluate::{error_breakdown, per_subject_structure, purity, to_json};
use matchtree::linkage::cluster;
use matchtree::meta::{load_metadata, save_metadata, Ethnicity, Gender, LabelField};
use matchtree::score::io::{load_similarity, save_similarity};
use matchtree::synth::{generate, GroupProfile, SynthConfig};
use matchtree::{LinkageMethod, MatrixFormat, Symmetrize};

fn small_config(seed: u64) -> SynthConfig {
    SynthConfig {
        n_subjects: 12,
        images_per_subject: (4, 4),
        seed,
        ..SynthConfig::default()
    }
}

/// Two single-gender ethnic groups so that the only strong between-
/// subject structure is ethnicity.
fn two_group_config(bonus: f64, seed: u64) -> SynthConfig {
    SynthConfig {
        n_subjects: 30,
        images_per_subject: (6, 6),
        group_fractions: vec![
            GroupProfile {
                gender: Gender::Male,
                ethnicity: Ethnicity::White,
                fraction: 0.5,
            },
            GroupProfile {
                gender: Gender::Male,
                ethnicity: Ethnicity::Asian,
                fraction: 0.5,
            },
        ],
        same_group_bonus: bonus,
        seed,
        ..SynthConfig::default()
    }
}

#[test]
fn full_pipeline_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let (scores, meta) = generate(&small_config(3)).unwrap();

    // Scores survive both serialization formats.
    let tsv = dir.path().join("scores.tsv");
    let bin = dir.path().join("scores.bin");
    save_similarity(&scores, &tsv, MatrixFormat::Tsv).unwrap();
    save_similarity(&scores, &bin, MatrixFormat::Binary).unwrap();
    let from_tsv = load_similarity(&tsv, Symmetrize::Mean).unwrap();
    let from_bin = load_similarity(&bin, Symmetrize::Mean).unwrap();
    assert_eq!(from_tsv.condensed(), scores.condensed());
    assert_eq!(from_bin.condensed(), scores.condensed());
    assert_eq!(from_tsv.image_ids(), scores.image_ids());

    let meta_path = dir.path().join("metadata.csv");
    save_metadata(&meta, &meta_path).unwrap();
    let meta = load_metadata(&meta_path).unwrap();

    // Cluster, persist the tree, cut, persist the partition.
    let tree = cluster(from_bin.to_distance(), LinkageMethod::Ward);
    let tree_path = dir.path().join("tree.merges.tsv");
    tree.save(&tree_path).unwrap();
    let tree = Dendrogram::load(&tree_path).unwrap();

    let part = cut_k(&tree, 12).unwrap();
    let part_path = dir.path().join("partition.tsv");
    matchtree::dendro::save_partition(&part, &part_path).unwrap();
    let part = load_partition(&part_path).unwrap();
    assert_eq!(part.k(), 12);

    // Reports over the reloaded artifacts.
    let report = purity(&part, &meta, LabelField::Subject).unwrap();
    assert_eq!(report.k, 12);
    assert_eq!(report.total_images, 48);
    assert!(
        report.overall_purity > 0.9,
        "purity {}",
        report.overall_purity
    );

    let breakdown = error_breakdown(
        &part,
        &meta,
        LabelField::Subject,
        &[LabelField::Gender, LabelField::Ethnicity],
    )
    .unwrap();
    assert_eq!(breakdown.by_field.len(), 2);

    let json = to_json(&report).unwrap();
    let value: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(value["k"], 12);
    assert!(json.ends_with('\n'));

    // Exports render without error and mention every image id.
    let newick = export_newick(&tree);
    let dot = export_dot(&tree, Some((&meta, LabelField::Gender))).unwrap();
    for id in tree.leaf_ids() {
        assert!(newick.contains(id.as_str()));
        assert!(dot.contains(id.as_str()));
    }
}

#[test]
fn subset_preserves_scores_and_roundtrip() {
    let (scores, _) = generate(&small_config(11)).unwrap();
    let keep: Vec<&str> = scores
        .image_ids()
        .iter()
        .step_by(3)
        .map(String::as_str)
        .collect();
    let sub = scores.subset(|id| keep.contains(&id)).unwrap();
    assert_eq!(sub.n(), keep.len());
    for (a, ida) in keep.iter().enumerate() {
        for (b, idb) in keep.iter().enumerate().skip(a + 1) {
            let orig_a = scores.image_ids().iter().position(|x| x == ida).unwrap();
            let orig_b = scores.image_ids().iter().position(|x| x == idb).unwrap();
            assert_eq!(sub.score(a, b), scores.score(orig_a, orig_b));
        }
    }
}

#[test]
fn generation_is_thread_count_independent() {
    let cfg = small_config(21);
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| generate(&cfg).unwrap());
    let four = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(|| generate(&cfg).unwrap());
    assert_eq!(one.0.condensed(), four.0.condensed());
    assert_eq!(one.0.image_ids(), four.0.image_ids());
}

#[test]
fn same_group_bonus_never_hurts_ethnicity_purity() {
    let bonuses = [0.0, 0.08, 0.15];
    let mut means = Vec::new();
    for &bonus in &bonuses {
        let mut total = 0.0;
        for seed in 0..10 {
            let (scores, meta) = generate(&two_group_config(bonus, seed)).unwrap();
            let tree = cluster(scores.to_distance(), LinkageMethod::Ward);
            let part = cut_k(&tree, 2).unwrap();
            total += purity(&part, &meta, LabelField::Ethnicity)
                .unwrap()
                .overall_purity;
        }
        means.push(total / 10.0);
    }
    for w in means.windows(2) {
        assert!(
            w[1] >= w[0] - 0.01,
            "purity means decreased along bonuses: {means:?}"
        );
    }
    assert!(means[2] > means[0], "bonus had no effect at all: {means:?}");
}

#[test]
fn noisy_images_inflate_misassignment() {
    let misassigned_at = |fraction: f64| -> usize {
        let mut total = 0;
        for seed in 0..5 {
            let cfg = SynthConfig {
                noisy_image_fraction: fraction,
                seed,
                ..small_config(seed)
            };
            let (scores, meta) = generate(&cfg).unwrap();
            let tree = cluster(scores.to_distance(), LinkageMethod::Ward);
            let part = cut_k(&tree, cfg.n_subjects).unwrap();
            total += purity(&part, &meta, LabelField::Subject)
                .unwrap()
                .misassigned_images
                .len();
        }
        total
    };
    let clean = misassigned_at(0.0);
    let noisy = misassigned_at(0.2);
    assert!(
        noisy > clean,
        "noisy fraction did not raise misassignment ({clean} vs {noisy})"
    );
}

#[test]
fn per_subject_structure_separates_strong_factor() {
    // A visible illumination offset and no expression offset: within-
    // subject splits should track illumination far better than chance.
    let cfg = SynthConfig {
        illumination_offset: 0.12,
        expression_offset: 0.0,
        ..small_config(5)
    };
    let (scores, meta) = generate(&cfg).unwrap();
    let dist = scores.to_distance();
    let by_illum =
        per_subject_structure(&dist, &meta, LinkageMethod::Ward, LabelField::Illumination).unwrap();
    assert_eq!(by_illum.per_subject.len(), cfg.n_subjects);
    assert!(by_illum.skipped_subjects.is_empty());
    assert!(
        by_illum.mean_purity() > 0.9,
        "illumination purity {}",
        by_illum.mean_purity()
    );

    // Every per-subject report covers exactly that subject's images.
    let mut images_per_subject: BTreeMap<&str, usize> = BTreeMap::new();
    for rec in meta.records() {
        *images_per_subject
            .entry(rec.subject_id.as_str())
            .or_default() += 1;
    }
    for sp in &by_illum.per_subject {
        assert_eq!(images_per_subject[sp.subject_id.as_str()], sp.images);
    }
}
