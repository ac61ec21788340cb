//! Agreement statistics between coders: percentage difference and
//! similarity, shares, overlaps, presence matrices and Cohen's kappa.
//!
//! Every percentage here is a ratio of integers, so it is kept as an exact
//! fraction. Display values are rounded half away from zero to two decimals
//! from the exact fraction, which avoids binary floating-point surprises at
//! the `.xx5` boundary.

use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::codebook::{match_labels, Codebook, Matcher};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AgreementError {
    #[error("baseline count is zero")]
    ZeroBaseline,
    #[error("total is zero")]
    ZeroTotal,
    #[error("part {part} exceeds total {total}")]
    PartExceedsTotal { part: u64, total: u64 },
    #[error("own count is zero")]
    ZeroOwnCount,
    #[error("similar count {similar} exceeds own count {own}")]
    SimilarExceedsOwn { similar: u64, own: u64 },
    #[error("vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("vectors are empty")]
    EmptyVectors,
    #[error("codebook {0} has no codes")]
    EmptyCodebook(String),
    #[error("need at least two codebooks, got {0}")]
    TooFewCodebooks(usize),
}

/// A percentage held as the exact fraction `num / den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Percent {
    num: i128,
    den: i128,
}

impl Percent {
    fn new(num: i128, den: i128) -> Self {
        debug_assert!(den > 0);
        Percent { num, den }
    }

    /// `part / whole * 100`.
    pub fn of(part: i64, whole: i64) -> Self {
        Self::new(part as i128 * 100, whole as i128)
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Value in hundredths of a percent, rounded half away from zero.
    pub fn hundredths(&self) -> i64 {
        let n = self.num * 100;
        let q = (2 * n.abs() + self.den) / (2 * self.den);
        (if n < 0 { -q } else { q }) as i64
    }

    /// Value rounded to two decimals.
    pub fn rounded(&self) -> f64 {
        self.hundredths() as f64 / 100.0
    }

    pub fn is_negative(&self) -> bool {
        self.num < 0
    }

    /// `100 - self`, exactly.
    pub fn complement(&self) -> Self {
        Self::new(100 * self.den - self.num, self.den)
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let h = self.hundredths();
        let sign = if h < 0 { "-" } else { "" };
        write!(f, "{sign}{}.{:02}", h.abs() / 100, h.abs() % 100)
    }
}

impl Serialize for Percent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.rounded())
    }
}

/// `(a - b) / a * 100`. Negative when `b` exceeds the baseline.
pub fn percentage_difference(count_a: u64, count_b: u64) -> Result<Percent, AgreementError> {
    if count_a == 0 {
        return Err(AgreementError::ZeroBaseline);
    }
    Ok(Percent::of(count_a as i64 - count_b as i64, count_a as i64))
}

/// `100 - percentage_difference(a, b)`.
pub fn percentage_similarity(count_a: u64, count_b: u64) -> Result<Percent, AgreementError> {
    Ok(percentage_difference(count_a, count_b)?.complement())
}

pub fn share_percentage(part: u64, total: u64) -> Result<Percent, AgreementError> {
    if total == 0 {
        return Err(AgreementError::ZeroTotal);
    }
    if part > total {
        return Err(AgreementError::PartExceedsTotal { part, total });
    }
    Ok(Percent::of(part as i64, total as i64))
}

pub fn overlap_percentage(similar: u64, own_count: u64) -> Result<Percent, AgreementError> {
    if own_count == 0 {
        return Err(AgreementError::ZeroOwnCount);
    }
    if similar > own_count {
        return Err(AgreementError::SimilarExceedsOwn { similar, own: own_count });
    }
    Ok(Percent::of(similar as i64, own_count as i64))
}

/// Side-by-side code counts of two coders and the derived percentages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AgreementSummary {
    pub count_a: u64,
    pub count_b: u64,
    pub total_combined: u64,
    pub share_a: Percent,
    pub share_b: Percent,
    /// `count_a - count_b`.
    pub difference_count: i64,
    pub percentage_difference: Percent,
    /// `total_combined - difference_count`, the count printed next to the
    /// similarity percentage in published comparisons of this kind.
    pub similarity_count: i64,
    pub percentage_similarity: Percent,
    /// Whether `similarity_count / total_combined` rounds to the same value
    /// as `percentage_similarity`.
    pub similarity_count_consistent: bool,
}

impl AgreementSummary {
    pub fn negative_difference(&self) -> bool {
        self.percentage_difference.is_negative()
    }
}

pub fn build_agreement_summary(count_a: u64, count_b: u64) -> Result<AgreementSummary, AgreementError> {
    let total = count_a + count_b;
    let difference = percentage_difference(count_a, count_b)?;
    let similarity = difference.complement();
    let difference_count = count_a as i64 - count_b as i64;
    let similarity_count = total as i64 - difference_count;
    let consistent = Percent::of(similarity_count, total as i64).hundredths() == similarity.hundredths();
    Ok(AgreementSummary {
        count_a,
        count_b,
        total_combined: total,
        share_a: share_percentage(count_a, total)?,
        share_b: share_percentage(count_b, total)?,
        difference_count,
        percentage_difference: difference,
        similarity_count,
        percentage_similarity: similarity,
        similarity_count_consistent: consistent,
    })
}

/// Code presence per coder: one row per code in the union of the
/// codebooks under a matcher.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PresenceMatrix {
    pub coders: Vec<String>,
    pub rows: Vec<PresenceRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PresenceRow {
    pub label: String,
    pub cells: Vec<u8>,
}

impl PresenceMatrix {
    pub fn column_sum(&self, col: usize) -> usize {
        self.rows.iter().map(|r| r.cells[col] as usize).sum()
    }

    /// Rows marked present for every coder.
    pub fn shared_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.cells.iter().all(|&c| c == 1)).count()
    }

    pub fn column(&self, col: usize) -> Vec<bool> {
        self.rows.iter().map(|r| r.cells[col] == 1).collect()
    }
}

/// Builds the presence matrix. Rows appear in first-appearance order,
/// labelled with the first coder's spelling.
pub fn presence_matrix(codebooks: &[&Codebook], matcher: &Matcher) -> Result<PresenceMatrix, AgreementError> {
    if codebooks.len() < 2 {
        return Err(AgreementError::TooFewCodebooks(codebooks.len()));
    }
    if let Some(b) = codebooks.iter().find(|b| b.codes.is_empty()) {
        return Err(AgreementError::EmptyCodebook(b.coder_id.clone()));
    }
    let k = codebooks.len();
    let mut rows: Vec<PresenceRow> = Vec::new();
    for (col, book) in codebooks.iter().enumerate() {
        let existing: Vec<String> = rows.iter().map(|r| r.label.clone()).collect();
        let labels = book.labels();
        let m = match_labels(&existing, &labels, matcher);
        for (row_label, _) in &m.pairs {
            let row = rows
                .iter_mut()
                .find(|r| &r.label == row_label && r.cells[col] == 0)
                .expect("paired row exists");
            row.cells[col] = 1;
        }
        for l in m.outliers_b {
            let mut cells = vec![0; k];
            cells[col] = 1;
            rows.push(PresenceRow { label: l, cells });
        }
    }
    Ok(PresenceMatrix {
        coders: codebooks.iter().map(|b| b.coder_id.clone()).collect(),
        rows,
    })
}

/// Cohen's kappa for two binary raters. When both raters give the same
/// constant rating, chance agreement is 1 and the ratings are identical;
/// kappa is reported as 1.0.
pub fn cohens_kappa(x: &[bool], y: &[bool]) -> Result<f64, AgreementError> {
    if x.len() != y.len() {
        return Err(AgreementError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(AgreementError::EmptyVectors);
    }
    let n = x.len() as u64;
    let agree = x.iter().zip(y).filter(|(a, b)| a == b).count() as u64;
    let x1 = x.iter().filter(|v| **v).count() as u64;
    let y1 = y.iter().filter(|v| **v).count() as u64;
    let chance_num = x1 * y1 + (n - x1) * (n - y1);
    let n2 = n * n;
    if chance_num == n2 {
        return Ok(1.0);
    }
    let po = agree as f64 / n as f64;
    let pe = chance_num as f64 / n2 as f64;
    Ok((po - pe) / (1.0 - pe))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{match_codes, CodebookKind};
    use crate::parse::{CodeRecord, Provenance};
    use proptest::prelude::*;

    #[test]
    fn published_percentages() {
        assert_eq!(percentage_difference(67, 59).unwrap().to_string(), "11.94");
        assert_eq!(percentage_similarity(67, 59).unwrap().to_string(), "88.06");
        assert_eq!(share_percentage(4, 19).unwrap().to_string(), "21.05");
        assert_eq!(share_percentage(15, 19).unwrap().to_string(), "78.95");
        assert_eq!(overlap_percentage(15, 23).unwrap().to_string(), "65.22");
        assert_eq!(overlap_percentage(15, 26).unwrap().to_string(), "57.69");
    }

    #[test]
    fn formula_edge_cases() {
        assert_eq!(percentage_difference(5, 5).unwrap().to_string(), "0.00");
        assert_eq!(percentage_similarity(5, 5).unwrap().to_string(), "100.00");
        let neg = percentage_difference(10, 13).unwrap();
        assert!(neg.is_negative());
        assert_eq!(neg.to_string(), "-30.00");
        assert_eq!(percentage_similarity(100, 50).unwrap().to_string(), "50.00");
        assert_eq!(share_percentage(0, 7).unwrap().to_string(), "0.00");
        assert_eq!(overlap_percentage(9, 9).unwrap().to_string(), "100.00");
        assert_eq!(percentage_difference(0, 1), Err(AgreementError::ZeroBaseline));
        assert_eq!(share_percentage(1, 0), Err(AgreementError::ZeroTotal));
        assert_eq!(share_percentage(3, 2), Err(AgreementError::PartExceedsTotal { part: 3, total: 2 }));
        assert_eq!(overlap_percentage(1, 0), Err(AgreementError::ZeroOwnCount));
        assert!(overlap_percentage(4, 3).is_err());
    }

    #[test]
    fn half_rounds_away_from_zero() {
        // 1/8 = 12.5% exactly; 1/16 = 6.25%; 1/32 = 3.125% -> 3.13
        assert_eq!(Percent::of(1, 32).to_string(), "3.13");
        assert_eq!(Percent::of(-1, 32).to_string(), "-3.13");
        assert_eq!(Percent::of(1, 16).to_string(), "6.25");
    }

    #[test]
    fn summary_of_published_counts() {
        let s = build_agreement_summary(67, 59).unwrap();
        assert_eq!(s.total_combined, 126);
        assert_eq!(s.share_a.to_string(), "53.17");
        assert_eq!(s.share_b.to_string(), "46.83");
        assert_eq!(s.percentage_difference.to_string(), "11.94");
        assert_eq!(s.percentage_similarity.to_string(), "88.06");
        assert_eq!(s.difference_count, 8);
        assert_eq!(s.similarity_count, 118);
        assert!(!s.similarity_count_consistent);
        assert_eq!(Percent::of(118, 126).to_string(), "93.65");
        let one = build_agreement_summary(1, 1).unwrap();
        assert_eq!(one.total_combined, 2);
        assert_eq!(one.share_a.to_string(), "50.00");
        assert_eq!(one.percentage_difference.to_string(), "0.00");
        assert_eq!(one.percentage_similarity.to_string(), "100.00");
        assert!(one.similarity_count_consistent);
    }

    #[test]
    fn kappa_examples() {
        let x = [true, false, true, true, false];
        assert_eq!(cohens_kappa(&x, &x).unwrap(), 1.0);
        let a = [true, false, true, false];
        let b = [false, true, false, true];
        assert!((cohens_kappa(&a, &b).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(cohens_kappa(&[true; 3], &[true; 3]).unwrap(), 1.0);
        assert_eq!(cohens_kappa(&[true], &[true, false]), Err(AgreementError::LengthMismatch(1, 2)));
        assert_eq!(cohens_kappa(&[], &[]), Err(AgreementError::EmptyVectors));
    }

    /// Kappa from a 2x2 confusion table, written independently of the
    /// marginal-count form above.
    fn kappa_from_table(x: &[bool], y: &[bool]) -> f64 {
        let mut t = [[0f64; 2]; 2];
        for (a, b) in x.iter().zip(y) {
            t[*a as usize][*b as usize] += 1.0;
        }
        let n = x.len() as f64;
        let po = (t[0][0] + t[1][1]) / n;
        let row = [t[0][0] + t[0][1], t[1][0] + t[1][1]];
        let col = [t[0][0] + t[1][0], t[0][1] + t[1][1]];
        let pe = (row[0] * col[0] + row[1] * col[1]) / (n * n);
        (po - pe) / (1.0 - pe)
    }

    #[test]
    fn kappa_matches_confusion_table_on_random_vectors() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for _ in 0..50 {
            let x: Vec<bool> = (0..20).map(|_| rng.gen()).collect();
            let y: Vec<bool> = (0..20).map(|_| rng.gen()).collect();
            let want = kappa_from_table(&x, &y);
            if want.is_finite() {
                assert!((cohens_kappa(&x, &y).unwrap() - want).abs() < 1e-12);
            }
        }
    }

    fn book(id: &str, labels: &[String]) -> Codebook {
        let codes = labels
            .iter()
            .map(|l| CodeRecord::new(l.clone(), "", 0, Provenance::Human(id.into())))
            .collect();
        Codebook::new(id, CodebookKind::Human, codes, vec![]).unwrap()
    }

    #[test]
    fn presence_rows() {
        let a = book("merged", &["Accidental Career Discovery".into(), "Pay".into()]);
        let b = book("llm", &["Weather".into(), "accidental career discovery".into()]);
        let m = presence_matrix(&[&a, &b], &Matcher::exact()).unwrap();
        assert_eq!(m.rows[0].label, "Accidental Career Discovery");
        assert_eq!(m.rows[0].cells, vec![1, 1]);
        assert_eq!(m.rows[1].cells, vec![1, 0]);
        assert_eq!(m.rows[2].cells, vec![0, 1]);
        assert!(presence_matrix(&[&a], &Matcher::exact()).is_err());
    }

    fn labels() -> impl Strategy<Value = Vec<String>> {
        proptest::collection::hash_set("[a-f]{1,2}", 1..10).prop_map(|s| s.into_iter().collect())
    }

    proptest! {
        #[test]
        fn complement_is_exact(a in 1u64..10_000, b in 0u64..10_000) {
            let d = percentage_difference(a, b).unwrap();
            let s = percentage_similarity(a, b).unwrap();
            prop_assert_eq!(d.num * s.den + s.num * d.den, 100 * d.den * s.den);
        }

        #[test]
        fn difference_is_scale_invariant(a in 1u64..1000, b in 0u64..1000, k in 1u64..50) {
            prop_assert_eq!(percentage_difference(a, b).unwrap().value(), percentage_difference(k * a, k * b).unwrap().value());
        }

        #[test]
        fn shares_of_a_partition_sum_to_100(parts in proptest::collection::vec(0u64..50, 1..8)) {
            let total: u64 = parts.iter().sum();
            prop_assume!(total > 0);
            let sum: i64 = parts.iter().map(|p| share_percentage(*p, total).unwrap().hundredths()).sum();
            prop_assert!((sum - 10_000).abs() <= parts.len() as i64, "sum {}", sum);
        }

        #[test]
        fn kappa_bounds(v in proptest::collection::vec(any::<(bool, bool)>(), 1..40)) {
            let (x, y): (Vec<bool>, Vec<bool>) = v.into_iter().unzip();
            let k = cohens_kappa(&x, &y).unwrap();
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&k));
            prop_assert_eq!(cohens_kappa(&x, &x).unwrap(), 1.0);
        }

        #[test]
        fn presence_columns_match_membership(a in labels(), b in labels()) {
            let (ba, bb) = (book("a", &a), book("b", &b));
            let m = presence_matrix(&[&ba, &bb], &Matcher::exact()).unwrap();
            prop_assert_eq!(m.column_sum(0), a.len());
            prop_assert_eq!(m.column_sum(1), b.len());
            let both = a.iter().filter(|l| b.contains(l)).count();
            prop_assert_eq!(m.shared_rows(), both);
            prop_assert_eq!(both, match_codes(&ba, &bb, &Matcher::exact()).unwrap().pairs.len());
        }
    }
}
