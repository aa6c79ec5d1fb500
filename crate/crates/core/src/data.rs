//! Shared data model: datasets, treatment declarations, interaction
//! specifications, the encoded treatment design, and its column metadata.
//!
//! Categorical treatments are dummy-encoded with the reference level
//! dropped, so coefficients read as effects relative to the reference.
//! Interaction columns are elementwise products of their factors'
//! raw/encoded columns; any interaction column that would involve a
//! reference level is dropped as well.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};

/// Type and values of one declared treatment.
#[derive(Debug, Clone, PartialEq)]
pub enum TreatmentData {
    /// 0/1 indicator.
    Binary { values: Vec<u8> },
    /// Level indices `0..n_levels`, with `reference` the omitted level.
    Categorical {
        values: Vec<usize>,
        n_levels: usize,
        reference: usize,
        /// Display labels per level; defaults to "0", "1", ...
        labels: Vec<String>,
    },
    /// Real-valued treatment.
    Continuous { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreatmentColumn {
    pub name: String,
    pub data: TreatmentData,
}

impl TreatmentColumn {
    pub fn binary(name: &str, values: Vec<u8>) -> Self {
        Self { name: name.to_string(), data: TreatmentData::Binary { values } }
    }

    pub fn continuous(name: &str, values: Vec<f64>) -> Self {
        Self { name: name.to_string(), data: TreatmentData::Continuous { values } }
    }

    /// Categorical treatment with level indices `0..n_levels` and default
    /// labels; reference level 0.
    pub fn categorical(name: &str, values: Vec<usize>, n_levels: usize) -> Self {
        let labels = (0..n_levels).map(|l| l.to_string()).collect();
        Self {
            name: name.to_string(),
            data: TreatmentData::Categorical { values, n_levels, reference: 0, labels },
        }
    }

    /// Categorical treatment with explicit labels and reference label.
    pub fn categorical_labeled(
        name: &str,
        values: Vec<usize>,
        labels: Vec<String>,
        reference: usize,
    ) -> Self {
        let n_levels = labels.len();
        Self {
            name: name.to_string(),
            data: TreatmentData::Categorical { values, n_levels, reference, labels },
        }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            TreatmentData::Binary { values } => values.len(),
            TreatmentData::Categorical { values, .. } => values.len(),
            TreatmentData::Continuous { values } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Raw numeric view of the column (level indices for categoricals).
    pub fn raw_values(&self) -> Vec<f64> {
        match &self.data {
            TreatmentData::Binary { values } => values.iter().map(|&v| v as f64).collect(),
            TreatmentData::Categorical { values, .. } => {
                values.iter().map(|&v| v as f64).collect()
            }
            TreatmentData::Continuous { values } => values.clone(),
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.len() != n {
            return Err(Error::Data(format!(
                "treatment '{}' has {} values, expected {}",
                self.name,
                self.len(),
                n
            )));
        }
        match &self.data {
            TreatmentData::Binary { values } => {
                if let Some(bad) = values.iter().find(|&&v| v > 1) {
                    return Err(Error::Data(format!(
                        "binary treatment '{}' contains value {} outside {{0,1}}",
                        self.name, bad
                    )));
                }
            }
            TreatmentData::Categorical { values, n_levels, reference, labels } => {
                if *n_levels < 2 {
                    return Err(Error::Invalid(format!(
                        "categorical treatment '{}' needs at least 2 levels",
                        self.name
                    )));
                }
                if *reference >= *n_levels {
                    return Err(Error::Invalid(format!(
                        "reference level {} out of range for treatment '{}'",
                        reference, self.name
                    )));
                }
                if labels.len() != *n_levels {
                    return Err(Error::Invalid(format!(
                        "treatment '{}' declares {} labels for {} levels",
                        self.name,
                        labels.len(),
                        n_levels
                    )));
                }
                let mut seen = vec![false; *n_levels];
                for &v in values {
                    if v >= *n_levels {
                        return Err(Error::Data(format!(
                            "categorical treatment '{}' contains level {} outside 0..{}",
                            self.name,
                            v,
                            n_levels - 1
                        )));
                    }
                    seen[v] = true;
                }
                if let Some(l) = seen.iter().position(|s| !s) {
                    return Err(Error::Data(format!(
                        "level '{}' of treatment '{}' is never observed",
                        labels[l], self.name
                    )));
                }
            }
            TreatmentData::Continuous { values } => {
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Data(format!(
                        "continuous treatment '{}' contains non-finite values",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A product of two or more declared treatments.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionSpec {
    pub factors: Vec<String>,
}

impl InteractionSpec {
    pub fn new<S: Into<String>>(factors: Vec<S>) -> Self {
        Self { factors: factors.into_iter().map(Into::into).collect() }
    }

    /// Derived identifier, e.g. `"a1*a2"`.
    pub fn name(&self) -> String {
        self.factors.join("*")
    }
}

/// Observations: covariates, outcome, declared treatments, optional
/// regimen indicator with values in `1..=n_regimens`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub covariate_names: Vec<String>,
    pub y: Array1<f64>,
    pub treatments: Vec<TreatmentColumn>,
    pub regimen: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(
        x: Array2<f64>,
        covariate_names: Vec<String>,
        y: Array1<f64>,
        treatments: Vec<TreatmentColumn>,
        regimen: Option<Vec<usize>>,
    ) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::Data("dataset has no rows".into()));
        }
        if covariate_names.len() != x.ncols() {
            return Err(Error::Data(format!(
                "{} covariate names for {} columns",
                covariate_names.len(),
                x.ncols()
            )));
        }
        if y.len() != n {
            return Err(Error::Data(format!("outcome has {} values, expected {}", y.len(), n)));
        }
        if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("covariates/outcome contain non-finite values".into()));
        }
        let mut names = std::collections::HashSet::new();
        for t in &treatments {
            t.validate(n)?;
            if !names.insert(t.name.clone()) {
                return Err(Error::Invalid(format!("duplicate treatment name '{}'", t.name)));
            }
        }
        if let Some(r) = &regimen {
            if r.len() != n {
                return Err(Error::Data(format!(
                    "regimen has {} values, expected {}",
                    r.len(),
                    n
                )));
            }
            let d = *r.iter().max().unwrap_or(&0);
            if r.iter().any(|&v| v == 0) {
                return Err(Error::Data("regimen values must lie in 1..=D".into()));
            }
            let mut seen = vec![false; d];
            for &v in r {
                seen[v - 1] = true;
            }
            if let Some(miss) = seen.iter().position(|s| !s) {
                return Err(Error::Data(format!("regimen category {} is never observed", miss + 1)));
            }
        }
        Ok(Self { x, covariate_names, y, treatments, regimen })
    }

    pub fn n_obs(&self) -> usize {
        self.x.nrows()
    }

    /// Number of regimen categories (max observed label).
    pub fn n_regimens(&self) -> Result<usize> {
        match &self.regimen {
            Some(r) => Ok(*r.iter().max().expect("validated non-empty")),
            None => Err(Error::Invalid("dataset has no regimen column".into())),
        }
    }

    pub fn treatment(&self, name: &str) -> Result<&TreatmentColumn> {
        self.treatments
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Invalid(format!("unknown treatment name '{}'", name)))
    }
}

/// Where an encoded column comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnSource {
    /// Main effect of a declared treatment; `level` set for categorical
    /// indicator columns.
    Treatment { index: usize, level: Option<usize> },
    /// Interaction product; one `(treatment index, Option<level>)` entry
    /// per factor.
    Interaction { index: usize, factors: Vec<(usize, Option<usize>)> },
}

/// Per-column record of the encoded design.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMeta {
    pub label: String,
    pub source: ColumnSource,
    /// True when a reference-level column of the same source was dropped.
    pub is_reference_dropped: bool,
}

/// Encoded treatment design: dummy indicators for non-reference
/// categorical levels, raw values for binary/continuous treatments and
/// products for interactions. Main-effect columns come first (declaration
/// order), then interaction columns.
#[derive(Debug, Clone)]
pub struct EncodedDesign {
    pub columns: Array2<f64>,
    pub meta: Vec<ColumnMeta>,
    /// Number of leading main-effect columns (`q`); the remaining columns
    /// are interactions.
    pub n_treatment_cols: usize,
}

impl EncodedDesign {
    pub fn n_cols(&self) -> usize {
        self.columns.ncols()
    }

    pub fn labels(&self) -> Vec<String> {
        self.meta.iter().map(|m| m.label.clone()).collect()
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.columns.column(j)
    }
}

/// Encoded pieces of one treatment's main effect: the columns it
/// contributes and their per-column (level, label) tags.
struct MainEffect {
    treatment_index: usize,
    /// (level index or None, display label, column values)
    cols: Vec<(Option<usize>, String, Vec<f64>)>,
    reference_dropped: bool,
}

fn main_effect(ds: &Dataset, ti: usize) -> MainEffect {
    let t = &ds.treatments[ti];
    match &t.data {
        TreatmentData::Binary { values } => MainEffect {
            treatment_index: ti,
            cols: vec![(
                None,
                t.name.clone(),
                values.iter().map(|&v| v as f64).collect(),
            )],
            reference_dropped: false,
        },
        TreatmentData::Continuous { values } => MainEffect {
            treatment_index: ti,
            cols: vec![(None, t.name.clone(), values.clone())],
            reference_dropped: false,
        },
        TreatmentData::Categorical { values, n_levels, reference, labels } => {
            let mut cols = Vec::new();
            for level in 0..*n_levels {
                if level == *reference {
                    continue;
                }
                let ind: Vec<f64> =
                    values.iter().map(|&v| if v == level { 1.0 } else { 0.0 }).collect();
                cols.push((Some(level), format!("{}={}", t.name, labels[level]), ind));
            }
            MainEffect { treatment_index: ti, cols, reference_dropped: true }
        }
    }
}

/// Encodes declared treatments and interactions into the design used by
/// the partial linear model.
///
/// Column order is deterministic: treatments in declaration order, then
/// interactions in declaration order, each categorical factor expanding
/// over its non-reference levels. Errors on unknown treatment names,
/// never-observed categorical levels, and duplicate interactions.
pub fn encode_treatments(ds: &Dataset, interactions: &[InteractionSpec]) -> Result<EncodedDesign> {
    let n = ds.n_obs();
    for t in &ds.treatments {
        t.validate(n)?;
    }

    let effects: Vec<MainEffect> =
        (0..ds.treatments.len()).map(|ti| main_effect(ds, ti)).collect();

    let mut labels: Vec<String> = Vec::new();
    let mut meta: Vec<ColumnMeta> = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();

    for e in &effects {
        for (level, label, values) in &e.cols {
            labels.push(label.clone());
            meta.push(ColumnMeta {
                label: label.clone(),
                source: ColumnSource::Treatment { index: e.treatment_index, level: *level },
                is_reference_dropped: e.reference_dropped,
            });
            cols.push(values.clone());
        }
    }
    let n_treatment_cols = cols.len();

    let mut seen_interactions: Vec<Vec<String>> = Vec::new();
    for (ii, spec) in interactions.iter().enumerate() {
        if spec.factors.len() < 2 {
            return Err(Error::Invalid(format!(
                "interaction '{}' needs at least 2 factors",
                spec.name()
            )));
        }
        let mut sorted = spec.factors.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Invalid(format!(
                "interaction '{}' repeats a factor",
                spec.name()
            )));
        }
        if seen_interactions.contains(&sorted) {
            return Err(Error::Invalid(format!("duplicate interaction '{}'", spec.name())));
        }
        seen_interactions.push(sorted);

        // indices into `effects` for each factor
        let mut factor_effects = Vec::new();
        for f in &spec.factors {
            let ti = ds
                .treatments
                .iter()
                .position(|t| &t.name == f)
                .ok_or_else(|| Error::Invalid(format!("unknown treatment name '{}'", f)))?;
            factor_effects.push(&effects[ti]);
        }

        // cartesian product over each factor's encoded columns, last
        // factor varying fastest
        let sizes: Vec<usize> = factor_effects.iter().map(|e| e.cols.len()).collect();
        let total: usize = sizes.iter().product();
        for combo in 0..total {
            let mut rem = combo;
            let mut pick = vec![0usize; sizes.len()];
            for k in (0..sizes.len()).rev() {
                pick[k] = rem % sizes[k];
                rem /= sizes[k];
            }
            let mut product = vec![1.0f64; n];
            let mut label_parts = Vec::new();
            let mut factor_meta = Vec::new();
            for (k, e) in factor_effects.iter().enumerate() {
                let (level, label, values) = &e.cols[pick[k]];
                for (p, v) in product.iter_mut().zip(values.iter()) {
                    *p *= v;
                }
                label_parts.push(label.clone());
                factor_meta.push((e.treatment_index, *level));
            }
            let any_ref_dropped = factor_effects.iter().any(|e| e.reference_dropped);
            let label = label_parts.join("*");
            labels.push(label.clone());
            meta.push(ColumnMeta {
                label,
                source: ColumnSource::Interaction { index: ii, factors: factor_meta },
                is_reference_dropped: any_ref_dropped,
            });
            cols.push(product);
        }
    }

    let mut columns = Array2::zeros((n, cols.len()));
    for (j, c) in cols.iter().enumerate() {
        for (i, &v) in c.iter().enumerate() {
            columns[[i, j]] = v;
        }
    }
    Ok(EncodedDesign { columns, meta, n_treatment_cols })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_dataset(treatments: Vec<TreatmentColumn>, n: usize) -> Dataset {
        let x = Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64);
        let y = Array1::from_shape_fn(n, |i| i as f64);
        Dataset::new(x, vec!["x1".into(), "x2".into()], y, treatments, None).unwrap()
    }

    #[test]
    fn binary_continuous_interaction_encodes_to_three_columns() {
        let ds = toy_dataset(
            vec![
                TreatmentColumn::binary("a1", vec![0, 1, 1, 0]),
                TreatmentColumn::continuous("a2", vec![0.5, 1.5, 2.5, 3.5]),
            ],
            4,
        );
        let design =
            encode_treatments(&ds, &[InteractionSpec::new(vec!["a1", "a2"])]).unwrap();
        assert_eq!(design.labels(), vec!["a1", "a2", "a1*a2"]);
        assert_eq!(design.n_treatment_cols, 2);
        assert_eq!(design.columns.column(2).to_vec(), vec![0.0, 1.5, 2.5, 0.0]);
    }

    #[test]
    fn categorical_encoding_matches_hand_dummies() {
        // levels {0,1,2}, values [0,1,2,1] -> level1=[0,1,0,1], level2=[0,0,1,0]
        let ds = toy_dataset(
            vec![TreatmentColumn::categorical("a", vec![0, 1, 2, 1], 3)],
            4,
        );
        let design = encode_treatments(&ds, &[]).unwrap();
        assert_eq!(design.labels(), vec!["a=1", "a=2"]);
        assert_eq!(design.columns.column(0).to_vec(), vec![0.0, 1.0, 0.0, 1.0]);
        assert_eq!(design.columns.column(1).to_vec(), vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn art_tdf_example_produces_expected_columns() {
        // 3-level ART (reference NNRTI) + binary TDF + ART*TDF
        let art = TreatmentColumn::categorical_labeled(
            "art",
            vec![0, 1, 2, 1, 2, 0],
            vec!["NNRTI".into(), "bPI".into(), "DTG".into()],
            0,
        );
        let tdf = TreatmentColumn::binary("tdf", vec![1, 0, 1, 1, 0, 0]);
        let ds = toy_dataset(vec![art, tdf], 6);
        let design =
            encode_treatments(&ds, &[InteractionSpec::new(vec!["art", "tdf"])]).unwrap();
        assert_eq!(
            design.labels(),
            vec!["art=bPI", "art=DTG", "tdf", "art=bPI*tdf", "art=DTG*tdf"]
        );
        assert_eq!(design.n_treatment_cols, 3);
        // interaction columns are products of the factor columns
        for i in 0..6 {
            assert_eq!(
                design.columns[[i, 3]],
                design.columns[[i, 0]] * design.columns[[i, 2]]
            );
            assert_eq!(
                design.columns[[i, 4]],
                design.columns[[i, 1]] * design.columns[[i, 2]]
            );
        }
        // no column references the NNRTI level
        assert!(design.meta.iter().all(|m| !m.label.contains("NNRTI")));
    }

    #[test]
    fn categorical_indicators_sum_to_one_with_reference() {
        let ds = toy_dataset(
            vec![TreatmentColumn::categorical("a", vec![0, 1, 2, 2, 1, 0], 3)],
            6,
        );
        let design = encode_treatments(&ds, &[]).unwrap();
        let raw = match &ds.treatments[0].data {
            TreatmentData::Categorical { values, reference, .. } => (values.clone(), *reference),
            _ => unreachable!(),
        };
        for i in 0..6 {
            let ref_ind = if raw.0[i] == raw.1 { 1.0 } else { 0.0 };
            let total: f64 = ref_ind + design.columns.row(i).sum();
            assert_eq!(total, 1.0);
        }
    }

    #[test]
    fn errors_on_bad_specs() {
        let ds = toy_dataset(vec![TreatmentColumn::binary("a1", vec![0, 1, 0, 1])], 4);
        // unknown treatment name
        assert!(encode_treatments(&ds, &[InteractionSpec::new(vec!["a1", "zz"])]).is_err());
        // single-factor interaction
        assert!(encode_treatments(&ds, &[InteractionSpec::new(vec!["a1"])]).is_err());
        // duplicate interaction (order-insensitive)
        let ds2 = toy_dataset(
            vec![
                TreatmentColumn::binary("a1", vec![0, 1, 0, 1]),
                TreatmentColumn::binary("a2", vec![1, 1, 0, 0]),
            ],
            4,
        );
        let dup = vec![
            InteractionSpec::new(vec!["a1", "a2"]),
            InteractionSpec::new(vec!["a2", "a1"]),
        ];
        assert!(encode_treatments(&ds2, &dup).is_err());
        // never-observed level
        let bad = Dataset::new(
            Array2::zeros((3, 1)),
            vec!["x".into()],
            Array1::zeros(3),
            vec![TreatmentColumn::categorical("a", vec![0, 1, 0], 3)],
            None,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn regimen_validation() {
        let x = Array2::zeros((4, 1));
        let y = Array1::zeros(4);
        assert!(Dataset::new(
            x.clone(),
            vec!["x".into()],
            y.clone(),
            vec![],
            Some(vec![1, 2, 3, 1])
        )
        .is_ok());
        // category 2 missing
        assert!(Dataset::new(
            x.clone(),
            vec!["x".into()],
            y.clone(),
            vec![],
            Some(vec![1, 3, 3, 1])
        )
        .is_err());
        // zero not allowed
        assert!(Dataset::new(x, vec!["x".into()], y, vec![], Some(vec![0, 1, 1, 1])).is_err());
    }

    #[test]
    fn encoding_is_pure() {
        let ds = toy_dataset(
            vec![
                TreatmentColumn::categorical("a", vec![0, 1, 2, 1], 3),
                TreatmentColumn::binary("b", vec![1, 0, 1, 0]),
            ],
            4,
        );
        let specs = vec![InteractionSpec::new(vec!["a", "b"])];
        let d1 = encode_treatments(&ds, &specs).unwrap();
        let d2 = encode_treatments(&ds, &specs).unwrap();
        assert_eq!(d1.columns, d2.columns);
        assert_eq!(d1.meta, d2.meta);
    }
}
