//! Label schema for dermoscopic seven-point checklist data.
//!
//! Every example carries one class per category: a five-way diagnosis plus
//! the seven checklist criteria. Category order is fixed everywhere (label
//! files, model heads, metric reports) and matches [`Category::ALL`].

use crate::error::{Error, Result};

pub const NUM_CATEGORIES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Category {
    /// Diagnosis: basal cell carcinoma, nevus, melanoma, miscellaneous,
    /// seborrheic keratosis.
    Diag,
    /// Pigment network: absent, typical, atypical.
    Pn,
    /// Streaks: absent, regular, irregular.
    Str,
    /// Pigmentation: absent, regular, irregular.
    Pig,
    /// Regression structures: absent, present.
    Rs,
    /// Dots and globules: absent, regular, irregular.
    Dag,
    /// Blue whitish veil: absent, present.
    Bwv,
    /// Vascular structures: absent, regular, irregular.
    Vs,
}

impl Category {
    pub const ALL: [Category; NUM_CATEGORIES] = [
        Category::Diag,
        Category::Pn,
        Category::Str,
        Category::Pig,
        Category::Rs,
        Category::Dag,
        Category::Bwv,
        Category::Vs,
    ];

    pub fn index(self) -> usize {
        Category::ALL.iter().position(|&c| c == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Diag => "DIAG",
            Category::Pn => "PN",
            Category::Str => "STR",
            Category::Pig => "PIG",
            Category::Rs => "RS",
            Category::Dag => "DaG",
            Category::Bwv => "BWV",
            Category::Vs => "VS",
        }
    }

    pub fn from_name(name: &str) -> Option<Category> {
        Category::ALL.iter().copied().find(|c| c.name() == name)
    }

    pub fn class_names(self) -> &'static [&'static str] {
        match self {
            Category::Diag => &["BCC", "NEV", "MEL", "MISC", "SK"],
            Category::Pn => &["ABS", "TYP", "ATP"],
            Category::Str | Category::Pig | Category::Dag | Category::Vs => {
                &["ABS", "REG", "IR"]
            }
            Category::Rs | Category::Bwv => &["ABS", "PRS"],
        }
    }

    pub fn num_classes(self) -> usize {
        self.class_names().len()
    }

    /// Class whose presence argues for melanoma. The diagnosis category has
    /// none; for the others it is the last (most atypical) class.
    pub fn indicative_class(self) -> Option<usize> {
        match self {
            Category::Diag => None,
            other => Some(other.num_classes() - 1),
        }
    }
}

/// Melanoma class index within the diagnosis category.
pub const DIAG_MELANOMA: usize = 2;

/// One class index per category, in [`Category::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Labels(pub [usize; NUM_CATEGORIES]);

impl Labels {
    pub fn new(classes: [usize; NUM_CATEGORIES]) -> Result<Self> {
        for (cat, &class) in Category::ALL.iter().zip(&classes) {
            if class >= cat.num_classes() {
                return Err(Error::Index {
                    index: class,
                    len: cat.num_classes(),
                    context: format!("label for category {}", cat.name()),
                });
            }
        }
        Ok(Labels(classes))
    }

    pub fn class(&self, cat: Category) -> usize {
        self.0[cat.index()]
    }
}

/// Per-category points awarded when the indicative class is observed.
///
/// Defaults follow the classical rule: the three major criteria (atypical
/// pigment network, blue whitish veil, atypical vascular structures) score
/// two points, the four minor criteria one.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreWeights {
    points: [u32; NUM_CATEGORIES],
    pub threshold: u32,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        let mut points = [1; NUM_CATEGORIES];
        points[Category::Diag.index()] = 0;
        points[Category::Pn.index()] = 2;
        points[Category::Bwv.index()] = 2;
        points[Category::Vs.index()] = 2;
        ScoreWeights {
            points,
            threshold: 3,
        }
    }
}

impl ScoreWeights {
    pub fn points(&self, cat: Category) -> u32 {
        self.points[cat.index()]
    }

    pub fn set_points(&mut self, cat: Category, value: u32) -> Result<()> {
        if cat == Category::Diag {
            return Err(Error::Config(
                "the diagnosis category does not contribute points".into(),
            ));
        }
        self.points[cat.index()] = value;
        Ok(())
    }
}

/// Checklist total: sum of points over categories whose label is the
/// indicative class.
pub fn checklist_score(labels: &Labels, weights: &ScoreWeights) -> u32 {
    Category::ALL
        .iter()
        .filter_map(|&cat| {
            let ind = cat.indicative_class()?;
            (labels.class(cat) == ind).then(|| weights.points(cat))
        })
        .sum()
}

/// Melanoma suspected when the score reaches the threshold.
pub fn is_suspected(labels: &Labels, weights: &ScoreWeights) -> bool {
    checklist_score(labels, weights) >= weights.threshold
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn category_sizes() {
        let sizes: Vec<usize> = Category::ALL.iter().map(|c| c.num_classes()).collect();
        assert_eq!(sizes, [5, 3, 3, 3, 2, 3, 2, 3]);
        let total: usize = sizes.iter().sum();
        assert_eq!(total, 24);
    }

    #[test]
    fn indicative_classes() {
        assert_eq!(Category::Diag.indicative_class(), None);
        assert_eq!(Category::Pn.indicative_class(), Some(2));
        assert_eq!(Category::Rs.indicative_class(), Some(1));
        assert_eq!(Category::Bwv.indicative_class(), Some(1));
        assert_eq!(Category::Vs.indicative_class(), Some(2));
    }

    #[test]
    fn melanoma_is_class_two() {
        assert_eq!(Category::Diag.class_names()[DIAG_MELANOMA], "MEL");
    }

    #[test]
    fn label_validation_rejects_out_of_range() {
        let err = Labels::new([5, 0, 0, 0, 0, 0, 0, 0]).unwrap_err();
        assert!(matches!(err, Error::Index { len: 5, .. }));
        assert!(Labels::new([4, 2, 2, 2, 1, 2, 1, 2]).is_ok());
    }

    #[test]
    fn worked_case_scores_eight_and_flags() {
        // Melanoma with atypical network, irregular streaks and
        // pigmentation, regression, irregular dots, veil, no vessels.
        let labels = Labels::new([2, 2, 2, 2, 1, 2, 1, 0]).unwrap();
        let w = ScoreWeights::default();
        assert_eq!(checklist_score(&labels, &w), 8);
        assert!(is_suspected(&labels, &w));
    }

    #[test]
    fn all_absent_scores_zero() {
        let labels = Labels::new([1, 0, 0, 0, 0, 0, 0, 0]).unwrap();
        let w = ScoreWeights::default();
        assert_eq!(checklist_score(&labels, &w), 0);
        assert!(!is_suspected(&labels, &w));
    }

    #[test]
    fn threshold_boundary() {
        // Exactly three points: veil (2) plus streaks (1).
        let labels = Labels::new([0, 0, 2, 0, 0, 0, 1, 0]).unwrap();
        let w = ScoreWeights::default();
        assert_eq!(checklist_score(&labels, &w), 3);
        assert!(is_suspected(&labels, &w));
    }

    #[test]
    fn custom_weights_and_diag_rejection() {
        let mut w = ScoreWeights::default();
        w.set_points(Category::Str, 3).unwrap();
        let labels = Labels::new([0, 0, 2, 0, 0, 0, 0, 0]).unwrap();
        assert_eq!(checklist_score(&labels, &w), 3);
        assert!(w.set_points(Category::Diag, 1).is_err());
    }
}
