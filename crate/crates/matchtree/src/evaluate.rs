/*!
Scoring partitions against metadata: purity, per-cluster composition,
misassignment breakdowns, and the per-subject sub-structure analysis.

Definitions, pinned here because the literature varies:

- A cluster's majority label is its most frequent label value under the
  chosen field; ties go to the lexicographically smallest value and are
  flagged.
- `overall_purity` is image-weighted: the sum of majority-label counts
  over clusters, divided by total images.
- A cluster is homogeneous when all its images share one label value.
- A misassigned image is one whose label differs from its cluster's
  majority label.

Reports serialize two ways: `Display` renders a human-readable table,
and every report is `serde::Serialize` for the machine-readable JSON
the CLI writes (deterministic key order, so byte-stable for regression
diffs).
*/

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::dendro::{cut_k, Partition};
use crate::error::{Error, Result};
use crate::linkage::{cluster, LinkageMethod};
use crate::meta::{LabelField, MetadataTable};
use crate::score::DistanceMatrix;

/// Purity of one cluster.
#[derive(Debug, Clone, Serialize)]
pub struct ClusterReport {
    pub cluster: u32,
    pub size: usize,
    pub majority_label: String,
    pub majority_count: usize,
    pub majority_fraction: f64,
    /// True when another label ties the majority count.
    pub tied: bool,
    pub histogram: BTreeMap<String, usize>,
}

/// Partition-level purity against one label field.
#[derive(Debug, Clone, Serialize)]
pub struct PurityReport {
    pub field: String,
    pub k: usize,
    pub total_images: usize,
    pub overall_purity: f64,
    pub homogeneous_clusters: usize,
    pub clusters: Vec<ClusterReport>,
    /// Images whose label is not their cluster's majority, in
    /// partition order.
    pub misassigned_images: Vec<String>,
}

/// Score a partition against one metadata field.
pub fn purity(p: &Partition, meta: &MetadataTable, by: LabelField) -> Result<PurityReport> {
    if p.is_empty() {
        return Err(Error::EmptyPartition);
    }
    let mut histograms: Vec<BTreeMap<String, usize>> = vec![BTreeMap::new(); p.k()];
    for (id, label) in p.iter() {
        let rec = meta
            .get(id)
            .ok_or_else(|| Error::MissingMetadata(id.to_string()))?;
        *histograms[label as usize]
            .entry(by.value_of(rec).to_string())
            .or_insert(0) += 1;
    }
    let clusters: Vec<ClusterReport> = histograms
        .into_iter()
        .enumerate()
        .map(|(cluster, histogram)| {
            let size: usize = histogram.values().sum();
            // BTreeMap iterates keys ascending, so on ties the first
            // maximal entry is the lexicographically smallest.
            let (majority_label, majority_count) = histogram
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(l, &c)| (l.clone(), c))
                .expect("every cluster label is used");
            let tied = histogram
                .iter()
                .filter(|(_, &c)| c == majority_count)
                .count()
                > 1;
            ClusterReport {
                cluster: cluster as u32,
                size,
                majority_label,
                majority_count,
                majority_fraction: majority_count as f64 / size as f64,
                tied,
                histogram,
            }
        })
        .collect();
    let misassigned_images: Vec<String> = p
        .iter()
        .filter(|(id, label)| {
            let rec = meta.get(id).expect("checked above");
            by.value_of(rec) != clusters[*label as usize].majority_label
        })
        .map(|(id, _)| id.to_string())
        .collect();
    let total_images = p.len();
    let majority_total: usize = clusters.iter().map(|c| c.majority_count).sum();
    Ok(PurityReport {
        field: by.as_str().to_string(),
        k: p.k(),
        total_images,
        overall_purity: majority_total as f64 / total_images as f64,
        homogeneous_clusters: clusters.iter().filter(|c| c.histogram.len() == 1).count(),
        clusters,
        misassigned_images,
    })
}

/// Per-cluster label histograms, ordered by cluster label.
pub fn composition(
    p: &Partition,
    meta: &MetadataTable,
    by: LabelField,
) -> Result<Vec<(u32, BTreeMap<String, usize>)>> {
    let report = purity(p, meta, by)?;
    Ok(report
        .clusters
        .into_iter()
        .map(|c| (c.cluster, c.histogram))
        .collect())
}

/// Cross-tabulation of misassigned images against secondary fields.
#[derive(Debug, Clone, Serialize)]
pub struct FieldBreakdown {
    pub field: String,
    /// Label counts among the misassigned images.
    pub misassigned_counts: BTreeMap<String, usize>,
    /// Label counts over the whole dataset, for ratio comparison.
    pub dataset_counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorBreakdown {
    pub primary_field: String,
    pub misassigned: usize,
    pub total_images: usize,
    pub by_field: Vec<FieldBreakdown>,
}

/// Break down the images misassigned under `primary` by each
/// `secondary` field, alongside the whole-dataset distribution.
pub fn error_breakdown(
    p: &Partition,
    meta: &MetadataTable,
    primary: LabelField,
    secondary: &[LabelField],
) -> Result<ErrorBreakdown> {
    let report = purity(p, meta, primary)?;
    let by_field = secondary
        .iter()
        .map(|&field| {
            let mut misassigned_counts = BTreeMap::new();
            for id in &report.misassigned_images {
                let rec = meta.get(id).expect("purity verified metadata");
                *misassigned_counts
                    .entry(field.value_of(rec).to_string())
                    .or_insert(0) += 1;
            }
            let mut dataset_counts = BTreeMap::new();
            for (id, _) in p.iter() {
                let rec = meta.get(id).expect("purity verified metadata");
                *dataset_counts
                    .entry(field.value_of(rec).to_string())
                    .or_insert(0) += 1;
            }
            FieldBreakdown {
                field: field.as_str().to_string(),
                misassigned_counts,
                dataset_counts,
            }
        })
        .collect();
    Ok(ErrorBreakdown {
        primary_field: primary.as_str().to_string(),
        misassigned: report.misassigned_images.len(),
        total_images: report.total_images,
        by_field,
    })
}

/// One subject's within-subject clustering outcome.
#[derive(Debug, Clone, Serialize)]
pub struct SubjectPurity {
    pub subject_id: String,
    pub images: usize,
    pub report: PurityReport,
}

/// Output of [`per_subject_structure`]: per-subject k=2 purity plus
/// the subjects too small to analyze.
#[derive(Debug, Clone, Serialize)]
pub struct SubjectStructure {
    pub field: String,
    pub method: String,
    pub per_subject: Vec<SubjectPurity>,
    pub skipped_subjects: Vec<String>,
}

impl SubjectStructure {
    /// Mean of the per-subject overall purities.
    pub fn mean_purity(&self) -> f64 {
        if self.per_subject.is_empty() {
            return f64::NAN;
        }
        let sum: f64 = self
            .per_subject
            .iter()
            .map(|s| s.report.overall_purity)
            .sum();
        sum / self.per_subject.len() as f64
    }
}

/// For every subject with at least two images: subset the matrix to
/// that subject, cluster, cut at k=2, and score against `by`. Subjects
/// run in parallel; output order is sorted by subject id regardless of
/// scheduling.
pub fn per_subject_structure(
    dist: &DistanceMatrix,
    meta: &MetadataTable,
    method: LinkageMethod,
    by: LabelField,
) -> Result<SubjectStructure> {
    // Group matrix images by subject, requiring metadata for each.
    let mut by_subject: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for id in dist.image_ids() {
        let rec = meta
            .get(id)
            .ok_or_else(|| Error::MissingMetadata(id.clone()))?;
        by_subject
            .entry(rec.subject_id.as_str())
            .or_default()
            .push(id.as_str());
    }
    let mut skipped_subjects = Vec::new();
    let mut eligible: Vec<&str> = Vec::new();
    for (subject, images) in &by_subject {
        if images.len() < 2 {
            skipped_subjects.push(subject.to_string());
        } else {
            eligible.push(subject);
        }
    }
    if eligible.is_empty() {
        return Err(Error::EmptySelection);
    }
    let per_subject: Result<Vec<SubjectPurity>> = eligible
        .par_iter()
        .map(|&subject| {
            let images = &by_subject[subject];
            let sub = dist.subset(|id| images.contains(&id))?;
            let n = sub.n();
            let dendro = cluster(sub, method);
            let p = cut_k(&dendro, 2)?;
            let report = purity(&p, meta, by)?;
            Ok(SubjectPurity {
                subject_id: subject.to_string(),
                images: n,
                report,
            })
        })
        .collect();
    Ok(SubjectStructure {
        field: by.as_str().to_string(),
        method: method.as_str().to_string(),
        per_subject: per_subject?,
        skipped_subjects,
    })
}

/// Serialize any report as pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(report: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)
        .map_err(|e| Error::InvalidConfig(format!("report serialization failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

impl fmt::Display for PurityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "purity by {}: {:.4} over {} images in {} clusters ({} homogeneous, {} misassigned)",
            self.field,
            self.overall_purity,
            self.total_images,
            self.k,
            self.homogeneous_clusters,
            self.misassigned_images.len()
        )?;
        writeln!(f, "cluster\tsize\tmajority\tfraction\thistogram")?;
        for c in &self.clusters {
            let histogram = c
                .histogram
                .iter()
                .map(|(l, n)| format!("{l}:{n}"))
                .collect::<Vec<_>>()
                .join(",");
            writeln!(
                f,
                "{}\t{}\t{}{}\t{:.4}\t{histogram}",
                c.cluster,
                c.size,
                c.majority_label,
                if c.tied { " (tied)" } else { "" },
                c.majority_fraction
            )?;
        }
        Ok(())
    }
}

impl fmt::Display for ErrorBreakdown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "misassigned by {}: {} of {} images",
            self.primary_field, self.misassigned, self.total_images
        )?;
        for fb in &self.by_field {
            writeln!(f, "  {}:", fb.field)?;
            for (value, count) in &fb.misassigned_counts {
                let total = fb.dataset_counts.get(value).copied().unwrap_or(0);
                writeln!(f, "    {value}: {count} misassigned / {total} overall")?;
            }
        }
        Ok(())
    }
}

impl fmt::Display for SubjectStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "per-subject k=2 purity by {} under {} linkage (mean {:.4})",
            self.field,
            self.method,
            self.mean_purity()
        )?;
        writeln!(f, "subject\timages\tpurity\tmajority")?;
        for s in &self.per_subject {
            writeln!(
                f,
                "{}\t{}\t{:.4}\t{}",
                s.subject_id,
                s.images,
                s.report.overall_purity,
                s.report
                    .clusters
                    .iter()
                    .map(|c| c.majority_label.as_str())
                    .collect::<Vec<_>>()
                    .join("|")
            )?;
        }
        if !self.skipped_subjects.is_empty() {
            writeln!(
                f,
                "skipped (fewer than 2 images): {}",
                self.skipped_subjects.join(", ")
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meta::{read_metadata, METADATA_HEADER};

    fn meta_for(rows: &[(&str, &str)]) -> MetadataTable {
        let mut text = format!("{METADATA_HEADER}\n");
        for (img, subject) in rows {
            text.push_str(&format!(
                "{img},{subject},male,white,neutral,controlled,false\n"
            ));
        }
        read_metadata(std::io::Cursor::new(text)).unwrap()
    }

    fn partition(assign: &[(&str, u32)]) -> Partition {
        Partition::new(
            assign.iter().map(|(id, _)| id.to_string()).collect(),
            assign.iter().map(|(_, l)| *l).collect(),
        )
        .unwrap()
    }

    /// Clusters {a,a,b},{b,b} by subject: purity (2+2)/5 = 0.8, one
    /// homogeneous cluster.
    #[test]
    fn purity_worked_example() {
        let meta = meta_for(&[
            ("i1", "a"),
            ("i2", "a"),
            ("i3", "b"),
            ("i4", "b"),
            ("i5", "b"),
        ]);
        let p = partition(&[("i1", 0), ("i2", 0), ("i3", 0), ("i4", 1), ("i5", 1)]);
        let r = purity(&p, &meta, LabelField::Subject).unwrap();
        assert_eq!(r.overall_purity, 0.8);
        assert_eq!(r.homogeneous_clusters, 1);
        assert_eq!(r.misassigned_images, vec!["i3".to_string()]);
        assert_eq!(r.clusters[0].majority_label, "a");
        assert!(!r.clusters[0].tied);
        assert_eq!(r.clusters[0].histogram["b"], 1);
    }

    #[test]
    fn singletons_are_pure() {
        let meta = meta_for(&[("i1", "a"), ("i2", "b"), ("i3", "c")]);
        let p = partition(&[("i1", 0), ("i2", 1), ("i3", 2)]);
        let r = purity(&p, &meta, LabelField::Subject).unwrap();
        assert_eq!(r.overall_purity, 1.0);
        assert_eq!(r.homogeneous_clusters, 3);
        assert!(r.misassigned_images.is_empty());
    }

    /// 1-1 tie: smallest label wins and the tie is flagged;
    /// misassigned is the other image.
    #[test]
    fn majority_tie_prefers_lexicographically_smallest() {
        let meta = meta_for(&[("i1", "zeta"), ("i2", "alpha")]);
        let p = partition(&[("i1", 0), ("i2", 0)]);
        let r = purity(&p, &meta, LabelField::Subject).unwrap();
        assert_eq!(r.clusters[0].majority_label, "alpha");
        assert!(r.clusters[0].tied);
        assert_eq!(r.overall_purity, 0.5);
        assert_eq!(r.misassigned_images, vec!["i1".to_string()]);
    }

    #[test]
    fn purity_errors() {
        let meta = meta_for(&[("i1", "a")]);
        let p = partition(&[("i1", 0), ("mystery", 0)]);
        assert!(matches!(
            purity(&p, &meta, LabelField::Subject),
            Err(Error::MissingMetadata(id)) if id == "mystery"
        ));
    }

    #[test]
    fn composition_histograms() {
        let mut text = format!("{METADATA_HEADER}\n");
        text.push_str("i1,s1,male,white,neutral,controlled,false\n");
        text.push_str("i2,s2,male,white,neutral,controlled,false\n");
        text.push_str("i3,s3,male,white,neutral,controlled,false\n");
        text.push_str("i4,s4,female,white,neutral,controlled,false\n");
        let meta = read_metadata(std::io::Cursor::new(text)).unwrap();
        let p = partition(&[("i1", 0), ("i2", 0), ("i3", 0), ("i4", 0)]);
        let hist = composition(&p, &meta, LabelField::Gender).unwrap();
        assert_eq!(hist.len(), 1);
        assert_eq!(hist[0].1["male"], 3);
        assert_eq!(hist[0].1["female"], 1);
    }

    #[test]
    fn error_breakdown_counts_match() {
        let mut text = format!("{METADATA_HEADER}\n");
        text.push_str("i1,a,male,white,neutral,controlled,false\n");
        text.push_str("i2,a,male,white,neutral,controlled,false\n");
        text.push_str("i3,b,male,white,neutral,controlled,false\n");
        text.push_str("i4,b,male,white,neutral,uncontrolled,false\n");
        let meta = read_metadata(std::io::Cursor::new(text)).unwrap();
        // One cluster: majority subject tie a/b -> a wins; i3, i4
        // misassigned, one per illumination value.
        let p = partition(&[("i1", 0), ("i2", 0), ("i3", 0), ("i4", 0)]);
        let eb = error_breakdown(
            &p,
            &meta,
            LabelField::Subject,
            &[LabelField::Illumination, LabelField::Expression],
        )
        .unwrap();
        assert_eq!(eb.misassigned, 2);
        assert_eq!(eb.by_field[0].misassigned_counts["controlled"], 1);
        assert_eq!(eb.by_field[0].misassigned_counts["uncontrolled"], 1);
        assert_eq!(eb.by_field[0].dataset_counts["controlled"], 3);
        for fb in &eb.by_field {
            let sum: usize = fb.misassigned_counts.values().sum();
            assert_eq!(sum, eb.misassigned);
        }
        // Zero misassigned -> empty count maps.
        let pure = partition(&[("i1", 0), ("i2", 0), ("i3", 1), ("i4", 1)]);
        let eb =
            error_breakdown(&pure, &meta, LabelField::Subject, &[LabelField::Glasses]).unwrap();
        assert_eq!(eb.misassigned, 0);
        assert!(eb.by_field[0].misassigned_counts.is_empty());
    }

    #[test]
    fn per_subject_structure_splits_by_illumination() {
        // Two subjects, 4 images each: controlled pairs near, cross-
        // illumination far; a fifth single-image subject is skipped.
        let mut text = format!("{METADATA_HEADER}\n");
        for (img, subj, illum) in [
            ("a1", "s1", "controlled"),
            ("a2", "s1", "controlled"),
            ("a3", "s1", "uncontrolled"),
            ("a4", "s1", "uncontrolled"),
            ("b1", "s2", "controlled"),
            ("b2", "s2", "controlled"),
            ("b3", "s2", "uncontrolled"),
            ("b4", "s2", "uncontrolled"),
            ("c1", "s3", "controlled"),
        ] {
            text.push_str(&format!("{img},{subj},male,white,neutral,{illum},false\n"));
        }
        let meta = read_metadata(std::io::Cursor::new(text)).unwrap();
        let ids: Vec<String> = ["a1", "a2", "a3", "a4", "b1", "b2", "b3", "b4", "c1"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let n = ids.len();
        let mut d = vec![0.5f64; n * (n - 1) / 2];
        let illum = |i: usize| i % 4 >= 2; // within each subject block
        for i in 0..n {
            for j in (i + 1)..n {
                // Same subject: 0.1 same illumination, 0.4 across.
                if i / 4 == j / 4 && i < 8 && j < 8 {
                    d[crate::score::condensed_index(n, i, j)] =
                        if illum(i) == illum(j) { 0.1 } else { 0.4 };
                }
            }
        }
        let dist = DistanceMatrix::from_condensed(ids, d).unwrap();
        let out = per_subject_structure(
            &dist,
            &meta,
            LinkageMethod::Complete,
            LabelField::Illumination,
        )
        .unwrap();
        assert_eq!(out.per_subject.len(), 2);
        assert_eq!(out.skipped_subjects, vec!["s3".to_string()]);
        assert_eq!(out.per_subject[0].subject_id, "s1");
        for s in &out.per_subject {
            assert_eq!(s.report.overall_purity, 1.0);
            assert_eq!(s.report.k, 2);
        }
        assert_eq!(out.mean_purity(), 1.0);
    }

    #[test]
    fn json_is_deterministic() {
        let meta = meta_for(&[("i1", "a"), ("i2", "b")]);
        let p = partition(&[("i1", 0), ("i2", 0)]);
        let r = purity(&p, &meta, LabelField::Subject).unwrap();
        let a = to_json(&r).unwrap();
        let b = to_json(&r).unwrap();
        assert_eq!(a, b);
        assert!(a.contains("\"overall_purity\""));
        assert!(a.ends_with('\n'));
    }
}
