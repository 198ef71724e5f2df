//! Connectivity matrices: construction from ROI time series, validation,
//! and the template-augmentation primitive used by the classifier.

use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{check_dims, Error, Result};

/// T×M table of ROI signals, one column per region.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesTable {
    pub values: Array2<f64>,
    pub roi_names: Option<Vec<String>>,
}

impl TimeSeriesTable {
    pub fn new(values: Array2<f64>) -> Self {
        Self {
            values,
            roi_names: None,
        }
    }

    pub fn num_timepoints(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_rois(&self) -> usize {
        self.values.ncols()
    }
}

/// Symmetric M×M weighted graph of one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityMatrix {
    pub weights: Array2<f64>,
}

impl ConnectivityMatrix {
    /// Wraps a square matrix. Invariants are not checked here; see
    /// [`validate_connectivity`].
    pub fn new(weights: Array2<f64>) -> Result<Self> {
        check_dims(weights.nrows(), weights.ncols())?;
        Ok(Self { weights })
    }

    pub fn identity(m: usize) -> Self {
        Self {
            weights: Array2::eye(m),
        }
    }

    pub fn num_rois(&self) -> usize {
        self.weights.nrows()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.weights.view()
    }
}

/// Entrywise sum of all group templates.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalTemplate {
    pub weights: Array2<f64>,
}

impl GlobalTemplate {
    pub fn num_rois(&self) -> usize {
        self.weights.nrows()
    }
}

/// Pairwise Pearson correlation between the columns of `series`.
///
/// The result is symmetrized by averaging transposed pairs, clamped to
/// [-1, 1], and has an exact unit diagonal.
pub fn pearson_connectivity(series: &TimeSeriesTable) -> Result<ConnectivityMatrix> {
    let values = &series.values;
    let t = values.nrows();
    let m = values.ncols();
    if t < 3 {
        return Err(Error::TooFewTimepoints(t));
    }

    let mut centered = values.to_owned();
    let mut sumsq = vec![0.0; m];
    for (j, mut col) in centered.columns_mut().into_iter().enumerate() {
        let mean = col.sum() / t as f64;
        let raw_sq: f64 = col.iter().map(|v| v * v).sum();
        col.mapv_inplace(|v| v - mean);
        let ss: f64 = col.iter().map(|v| v * v).sum();
        // Rounding in the mean leaves ~eps residue on constant columns.
        let constant =
            col.iter().all(|v| *v == col[0]) || ss <= 1e-24 * raw_sq.max(f64::MIN_POSITIVE);
        if constant || !ss.is_finite() {
            return Err(Error::ConstantColumn(j));
        }
        sumsq[j] = ss;
    }

    let mut w = Array2::<f64>::eye(m);
    for i in 0..m {
        let ci = centered.column(i);
        for j in (i + 1)..m {
            let cj = centered.column(j);
            // sqrt of the product keeps identical columns at exactly 1.
            let denom = (sumsq[i] * sumsq[j]).sqrt();
            let rij = ci.dot(&cj) / denom;
            let rji = cj.dot(&ci) / denom;
            let r = (0.5 * (rij + rji)).clamp(-1.0, 1.0);
            w[[i, j]] = r;
            w[[j, i]] = r;
        }
    }
    Ok(ConnectivityMatrix { weights: w })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationMode {
    /// Symmetry, unit diagonal and entries in [-1, 1].
    StrictCorrelation,
    /// Symmetry and unit diagonal only.
    SymmetricOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NotSquare {
        rows: usize,
        cols: usize,
    },
    Asymmetric {
        i: usize,
        j: usize,
        upper: f64,
        lower: f64,
    },
    Diagonal {
        i: usize,
        value: f64,
    },
    OutOfRange {
        i: usize,
        j: usize,
        value: f64,
    },
    NonFinite {
        i: usize,
        j: usize,
    },
}

/// Lists every invariant violation of `m`. An empty list means valid.
pub fn validate_connectivity(m: &ConnectivityMatrix, mode: ValidationMode) -> Vec<Violation> {
    let w = &m.weights;
    let (rows, cols) = w.dim();
    if rows != cols {
        return vec![Violation::NotSquare { rows, cols }];
    }
    let mut out = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            let v = w[[i, j]];
            if !v.is_finite() {
                out.push(Violation::NonFinite { i, j });
                continue;
            }
            if i == j {
                if v != 1.0 {
                    out.push(Violation::Diagonal { i, value: v });
                }
                continue;
            }
            if i < j && v != w[[j, i]] {
                out.push(Violation::Asymmetric {
                    i,
                    j,
                    upper: v,
                    lower: w[[j, i]],
                });
            }
            if mode == ValidationMode::StrictCorrelation && !(-1.0..=1.0).contains(&v) {
                out.push(Violation::OutOfRange { i, j, value: v });
            }
        }
    }
    out
}

/// Entrywise sum of the group templates.
pub fn global_template(templates: &[Array2<f64>]) -> Result<GlobalTemplate> {
    let first = templates
        .first()
        .ok_or_else(|| Error::InvalidArgument("no templates to sum".into()))?;
    let mut sum = Array2::<f64>::zeros(first.raw_dim());
    for t in templates {
        check_dims(first.nrows(), t.nrows())?;
        check_dims(first.ncols(), t.ncols())?;
        sum += t;
    }
    Ok(GlobalTemplate { weights: sum })
}

/// Hadamard product `w ⊙ g`.
pub fn augment(w: &ConnectivityMatrix, g: &GlobalTemplate) -> Result<Array2<f64>> {
    check_dims(w.num_rois(), g.num_rois())?;
    check_dims(w.weights.ncols(), g.weights.ncols())?;
    let mut out = Array2::<f64>::zeros(w.weights.raw_dim());
    Zip::from(&mut out)
        .and(&w.weights)
        .and(&g.weights)
        .for_each(|o, &a, &b| *o = a * b);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identical_columns_correlate_to_one() {
        let t = TimeSeriesTable::new(array![[1.0, 1.0, 3.0], [2.0, 2.0, 2.0], [3.0, 3.0, 1.0]]);
        let c = pearson_connectivity(&t).unwrap();
        assert_eq!(c.weights[[0, 1]], 1.0);
        assert_eq!(c.weights[[0, 2]], -1.0);
        assert_eq!(c.weights[[1, 2]], -1.0);
    }

    #[test]
    fn pearson_error_paths() {
        let t = TimeSeriesTable::new(array![[1.0, 0.1], [2.0, 0.1], [3.0, 0.1]]);
        assert!(matches!(
            pearson_connectivity(&t),
            Err(Error::ConstantColumn(1))
        ));
        let t = TimeSeriesTable::new(array![[1.0, 2.0], [2.0, 1.0]]);
        assert!(matches!(
            pearson_connectivity(&t),
            Err(Error::TooFewTimepoints(2))
        ));
    }

    #[test]
    fn validation_reports() {
        let id = ConnectivityMatrix::identity(4);
        assert!(validate_connectivity(&id, ValidationMode::StrictCorrelation).is_empty());

        let mut w = Array2::<f64>::eye(3);
        w[[0, 1]] = 0.5;
        w[[1, 0]] = 0.4;
        let v = validate_connectivity(
            &ConnectivityMatrix { weights: w },
            ValidationMode::SymmetricOnly,
        );
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::Asymmetric { i: 0, j: 1, .. }));

        let mut w = Array2::<f64>::eye(3);
        w[[0, 2]] = 1.5;
        w[[2, 0]] = 1.5;
        let m = ConnectivityMatrix { weights: w };
        assert!(validate_connectivity(&m, ValidationMode::SymmetricOnly).is_empty());
        assert_eq!(
            validate_connectivity(&m, ValidationMode::StrictCorrelation).len(),
            2
        );

        let mut w = Array2::<f64>::eye(2);
        w[[1, 1]] = 0.9;
        let v = validate_connectivity(
            &ConnectivityMatrix { weights: w },
            ValidationMode::SymmetricOnly,
        );
        assert_eq!(v, vec![Violation::Diagonal { i: 1, value: 0.9 }]);
    }

    #[test]
    fn global_template_sums() {
        let z = Array2::<f64>::zeros((3, 3));
        assert_eq!(global_template(&[z.clone(), z.clone()]).unwrap().weights, z);

        let mut a = Array2::<f64>::zeros((2, 2));
        let mut b = Array2::<f64>::zeros((2, 2));
        a[[0, 1]] = 0.3;
        b[[0, 1]] = 0.2;
        let g = global_template(&[a, b]).unwrap();
        assert!((g.weights[[0, 1]] - 0.5).abs() < 1e-15);

        let c = Array2::<f64>::zeros((3, 3));
        assert!(matches!(
            global_template(&[Array2::zeros((2, 2)), c]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn augment_cases() {
        let mut w = Array2::<f64>::eye(3);
        w[[0, 1]] = 0.8;
        w[[1, 0]] = 0.8;
        let w = ConnectivityMatrix { weights: w };
        let ones = GlobalTemplate {
            weights: Array2::from_elem((3, 3), 1.0),
        };
        assert_eq!(augment(&w, &ones).unwrap(), w.weights);
        let zeros = GlobalTemplate {
            weights: Array2::zeros((3, 3)),
        };
        assert!(augment(&w, &zeros).unwrap().iter().all(|v| *v == 0.0));
        let mut g = Array2::<f64>::zeros((3, 3));
        g[[0, 1]] = 0.5;
        let out = augment(&w, &GlobalTemplate { weights: g }).unwrap();
        assert!((out[[0, 1]] - 0.4).abs() < 1e-15);
        let small = GlobalTemplate {
            weights: Array2::zeros((2, 2)),
        };
        assert!(augment(&w, &small).is_err());
    }
}
