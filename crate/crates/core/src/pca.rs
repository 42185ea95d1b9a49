//! Classical SVD-based PCA: the ground truth every quantum stage is checked
//! against.
//!
//! Principal components are fixed in sign against an *anchor* row so that
//! `⟨v_j|x_anchor⟩ ≥ 0` for every component. The simulated pipeline and the
//! oracle share this convention, which removes the `±v_j` ambiguity from
//! fidelity comparisons.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::thin_svd;
use crate::state::{qubits_for, StateVector, INDEX_REGISTER, ROW_REGISTER};

/// Default cumulative-variance threshold for choosing the target dimension.
pub const DEFAULT_THRESHOLD: f64 = 0.95;

/// An `N × D` real dataset, one data point per row.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    frobenius_norm: f64,
}

impl DataMatrix {
    /// Row-major constructor. Rejects empty shapes, non-finite entries and
    /// all-zero rows.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput(format!("empty {rows}x{cols} matrix")));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite entry at row {}, column {}",
                k / cols,
                k % cols
            )));
        }
        for i in 0..rows {
            if data[i * cols..(i + 1) * cols].iter().all(|&v| v == 0.0) {
                return Err(Error::InvalidInput(format!("row {i} is all zero")));
            }
        }
        let frobenius_norm = data.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(Self {
            rows,
            cols,
            data,
            frobenius_norm,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::InvalidInput(format!("row {i} has a different length")));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_norm(&self, i: usize) -> f64 {
        norm(self.row(i))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    /// Keeps only the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &i in rows {
            if i >= self.rows {
                return Err(Error::OutOfRange {
                    what: "row",
                    index: i,
                    len: self.rows,
                });
            }
            data.extend_from_slice(self.row(i));
        }
        Self::new(rows.len(), self.cols, data)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Full SVD of a data matrix together with the PCA quantities derived from it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralModel {
    singular_values: Vec<f64>,
    /// `D` orthonormal right singular vectors, descending `σ`.
    right_vectors: Vec<Vec<f64>>,
    /// Left singular vectors for the components with `σ_j > 0`.
    left_vectors: Vec<Vec<f64>>,
    variance_proportions: Vec<f64>,
    threshold: f64,
    selected_dim: usize,
    anchor_index: usize,
}

impl SpectralModel {
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn right_vectors(&self) -> &[Vec<f64>] {
        &self.right_vectors
    }

    pub fn right_vector(&self, j: usize) -> &[f64] {
        &self.right_vectors[j]
    }

    pub fn left_vectors(&self) -> &[Vec<f64>] {
        &self.left_vectors
    }

    pub fn variance_proportions(&self) -> &[f64] {
        &self.variance_proportions
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn selected_dim(&self) -> usize {
        self.selected_dim
    }

    pub fn anchor_index(&self) -> usize {
        self.anchor_index
    }

    /// Number of strictly positive singular values.
    pub fn rank(&self) -> usize {
        self.left_vectors.len()
    }

    /// Fraction of the total variance carried by the selected components.
    pub fn variance_captured(&self) -> f64 {
        self.variance_proportions[..self.selected_dim].iter().sum()
    }

    /// `β_j = ⟨v_j|x_anchor⟩ / ‖x_anchor‖` for every component.
    pub fn anchor_coefficients(&self, x: &DataMatrix) -> Vec<f64> {
        let row = x.row(self.anchor_index);
        let n = norm(row);
        self.right_vectors.iter().map(|v| dot(v, row) / n).collect()
    }

    /// Same decomposition with signs re-fixed against another anchor row.
    pub fn with_anchor(&self, x: &DataMatrix, anchor_index: usize) -> Result<Self> {
        check_anchor(x, anchor_index)?;
        let mut out = self.clone();
        out.anchor_index = anchor_index;
        out.orient(x);
        Ok(out)
    }

    /// Same decomposition with a different target dimension.
    pub fn with_selected_dim(&self, d: usize) -> Result<Self> {
        if d == 0 || d > self.right_vectors.len() {
            return Err(Error::InvalidInput(format!(
                "dimension {d} outside 1..={}",
                self.right_vectors.len()
            )));
        }
        let mut out = self.clone();
        out.selected_dim = d;
        Ok(out)
    }

    /// Fixes the basis against the anchor row: inside each degenerate
    /// eigenspace the basis is rotated so the anchor has equal coefficients
    /// on every vector, then each `v_j` is flipped so that `⟨v_j|x_a⟩ ≥ 0`.
    /// Left vectors are recomputed as `X v_j / σ_j`.
    fn orient(&mut self, x: &DataMatrix) {
        let anchor = x.row(self.anchor_index).to_vec();
        let rank = self.left_vectors.len();
        let tol = DEGENERACY_TOL * self.singular_values.first().copied().unwrap_or(0.0);
        let mut start = 0;
        while start < rank {
            let mut end = start + 1;
            while end < rank && self.singular_values[start] - self.singular_values[end] <= tol {
                end += 1;
            }
            if end - start > 1 {
                spread_anchor(&mut self.right_vectors[start..end], &anchor);
            }
            start = end;
        }
        for v in &mut self.right_vectors {
            if dot(v, &anchor) < 0.0 {
                v.iter_mut().for_each(|e| *e = -*e);
            }
        }
        for j in 0..rank {
            self.left_vectors[j] = (0..x.rows())
                .map(|i| dot(x.row(i), &self.right_vectors[j]) / self.singular_values[j])
                .collect();
        }
    }
}

/// Relative gap below which neighbouring singular values share an eigenspace.
const DEGENERACY_TOL: f64 = 1e-10;

/// Householder rotation of an orthonormal block so that `x` has the same
/// coefficient `‖a‖/sqrt(k)` on each of its `k` vectors.
fn spread_anchor(block: &mut [Vec<f64>], x: &[f64]) {
    let k = block.len();
    let a: Vec<f64> = block.iter().map(|b| dot(b, x)).collect();
    let na = norm(&a);
    if na == 0.0 {
        return;
    }
    let c = na / (k as f64).sqrt();
    let u: Vec<f64> = a.iter().map(|v| v - c).collect();
    let uu = dot(&u, &u);
    if uu <= f64::EPSILON * na * na {
        return;
    }
    // w_j = Σ_m H_jm b_m with H = I − 2uuᵀ/uᵀu
    let old = block.to_vec();
    for (j, w) in block.iter_mut().enumerate() {
        for (f, slot) in w.iter_mut().enumerate() {
            let proj: f64 = (0..k).map(|m| u[m] * old[m][f]).sum();
            *slot = old[j][f] - 2.0 * u[j] * proj / uu;
        }
    }
}

fn check_anchor(x: &DataMatrix, anchor_index: usize) -> Result<()> {
    if anchor_index >= x.rows() {
        return Err(Error::OutOfRange {
            what: "anchor row",
            index: anchor_index,
            len: x.rows(),
        });
    }
    Ok(())
}

/// Minimal `s` whose leading `s` proportions reach `threshold` of the total.
/// The comparison is an exact `≥` on the accumulated ratio.
pub fn select_dimension_from(proportions: &[f64], threshold: f64) -> usize {
    let total: f64 = proportions.iter().sum();
    let mut acc = 0.0;
    for (s, &l) in proportions.iter().enumerate() {
        acc += l;
        if acc / total >= threshold {
            return s + 1;
        }
    }
    proportions.len()
}

/// `d` for a spectral model at its own threshold.
pub fn select_dimension(model: &SpectralModel) -> usize {
    select_dimension_from(&model.variance_proportions, model.threshold)
}

/// Singular values this far below `σ_max` (relative, scaled by the matrix
/// size) are treated as exact zeros.
fn zero_cutoff(x: &DataMatrix, sigma_max: f64) -> f64 {
    sigma_max * (x.rows().max(x.cols()) as f64) * f64::EPSILON * 8.0
}

/// Full SVD with descending singular values and anchor-fixed signs.
pub fn svd_decompose(x: &DataMatrix, threshold: f64, anchor_index: usize) -> Result<SpectralModel> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidInput(format!("threshold {threshold} outside (0, 1]")));
    }
    check_anchor(x, anchor_index)?;
    let d = x.cols();

    let svd = thin_svd(x.rows(), d, |i, j| x.get(i, j))?;
    let sigma_max = svd.sigma.first().copied().unwrap_or(0.0);
    let cutoff = zero_cutoff(x, sigma_max);

    let mut singular_values = Vec::with_capacity(d);
    let mut right_vectors: Vec<Vec<f64>> = Vec::with_capacity(d);
    for (s, v) in svd.sigma.iter().zip(svd.v) {
        if *s > cutoff {
            singular_values.push(*s);
            right_vectors.push(v);
        }
    }
    let rank = singular_values.len();

    // Complete the null space from canonical axes.
    for axis in 0..d {
        if right_vectors.len() == d {
            break;
        }
        let mut e = vec![0.0; d];
        e[axis] = 1.0;
        for _ in 0..2 {
            for v in &right_vectors {
                let c = dot(v, &e);
                e.iter_mut().zip(v).for_each(|(a, b)| *a -= c * b);
            }
        }
        let n = norm(&e);
        if n > 1e-6 {
            e.iter_mut().for_each(|a| *a /= n);
            right_vectors.push(e);
        }
    }
    if right_vectors.len() != d {
        return Err(Error::NumericalFailure(
            "could not complete an orthonormal basis".into(),
        ));
    }
    singular_values.resize(d, 0.0);

    let left_vectors = (0..rank)
        .map(|j| {
            (0..x.rows())
                .map(|i| dot(x.row(i), &right_vectors[j]) / singular_values[j])
                .collect()
        })
        .collect();

    let total: f64 = singular_values.iter().map(|s| s * s).sum();
    let variance_proportions: Vec<f64> = singular_values.iter().map(|s| s * s / total).collect();
    let selected_dim = select_dimension_from(&variance_proportions, threshold);

    let mut model = SpectralModel {
        singular_values,
        right_vectors,
        left_vectors,
        variance_proportions,
        threshold,
        selected_dim,
        anchor_index,
    };
    model.orient(x);
    Ok(model)
}

/// The projected dataset `Y = X V_d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompressedMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    frobenius_norm: f64,
}

impl CompressedMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidInput("compressed matrix shape mismatch".into()));
        }
        let frobenius_norm = data.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(Self {
            rows,
            cols,
            data,
            frobenius_norm,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// `Y_ij = ⟨v_j|x_i⟩` for `j < d`.
pub fn project(x: &DataMatrix, model: &SpectralModel) -> Result<CompressedMatrix> {
    if model.right_vectors.first().map_or(0, Vec::len) != x.cols() {
        return Err(Error::InvalidInput(format!(
            "model has {}-dimensional components, data has {} columns",
            model.right_vectors.first().map_or(0, Vec::len),
            x.cols()
        )));
    }
    project_point_set(x, &model.right_vectors[..model.selected_dim])
}

pub(crate) fn project_point_set(x: &DataMatrix, basis: &[Vec<f64>]) -> Result<CompressedMatrix> {
    let d = basis.len();
    let mut data = Vec::with_capacity(x.rows() * d);
    for i in 0..x.rows() {
        let row = x.row(i);
        data.extend(basis.iter().map(|v| dot(v, row)));
    }
    CompressedMatrix::new(x.rows(), d, data)
}

/// `V_dᵀ x` for a single point outside the dataset.
pub fn project_point(model: &SpectralModel, point: &[f64]) -> Result<Vec<f64>> {
    if point.len() != model.right_vectors.len() {
        return Err(Error::InvalidInput(format!(
            "point has {} features, model expects {}",
            point.len(),
            model.right_vectors.len()
        )));
    }
    Ok(model.right_vectors[..model.selected_dim]
        .iter()
        .map(|v| dot(v, point))
        .collect())
}

/// `Σ_i Σ_j (y_ij / ‖Y‖_F) |i⟩|j⟩` with the index register labelled `1..=d`
/// (value 0 unused) and row `i` stored at basis value `i`.
pub fn expected_compressed_state(y: &CompressedMatrix) -> Result<StateVector> {
    let norm = y.frobenius_norm();
    if norm <= 0.0 {
        return Err(Error::InvalidInput("zero Frobenius norm".into()));
    }
    let row_q = qubits_for(y.rows());
    let idx_q = qubits_for(y.cols() + 1);
    let idx_dim = 1usize << idx_q;
    let mut amps = vec![0.0; (1 << row_q) * idx_dim];
    for i in 0..y.rows() {
        for j in 0..y.cols() {
            amps[i * idx_dim + j + 1] = y.get(i, j) / norm;
        }
    }
    StateVector::from_real(&[(ROW_REGISTER, row_q), (INDEX_REGISTER, idx_q)], &amps)
}

/// Deviation of one pair of unit-normalized overlaps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairDeviation {
    pub first: usize,
    pub second: usize,
    pub original: f64,
    pub compressed: Option<f64>,
    pub deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapReport {
    pub pairs: usize,
    pub tolerance: f64,
    pub max_deviation: f64,
    pub mean_deviation: f64,
    pub median_deviation: f64,
    pub p95_deviation: f64,
    pub within_tolerance: f64,
    /// Pairs involving a zero compressed row.
    pub flagged: Vec<(usize, usize)>,
}

/// Every pair `i1 < i2`, comparing `⟨y_i1|y_i2⟩` to `⟨x_i1|x_i2⟩`.
pub fn pairwise_deviations(x: &DataMatrix, y: &CompressedMatrix) -> Result<Vec<PairDeviation>> {
    if x.rows() != y.rows() {
        return Err(Error::InvalidInput("row counts differ".into()));
    }
    let xn: Vec<f64> = (0..x.rows()).map(|i| x.row_norm(i)).collect();
    let yn: Vec<f64> = (0..y.rows()).map(|i| norm(y.row(i))).collect();
    let mut out = Vec::with_capacity(x.rows() * x.rows().saturating_sub(1) / 2);
    for a in 0..x.rows() {
        for b in a + 1..x.rows() {
            let original = dot(x.row(a), x.row(b)) / (xn[a] * xn[b]);
            let compressed = (yn[a] > 0.0 && yn[b] > 0.0).then(|| dot(y.row(a), y.row(b)) / (yn[a] * yn[b]));
            out.push(PairDeviation {
                first: a,
                second: b,
                original,
                compressed,
                deviation: compressed.map(|c| (c - original).abs()),
            });
        }
    }
    Ok(out)
}

pub fn pairwise_overlap_report(x: &DataMatrix, y: &CompressedMatrix, tolerance: f64) -> Result<OverlapReport> {
    let pairs = pairwise_deviations(x, y)?;
    let flagged = pairs
        .iter()
        .filter(|p| p.deviation.is_none())
        .map(|p| (p.first, p.second))
        .collect();
    let mut devs: Vec<f64> = pairs.iter().filter_map(|p| p.deviation).collect();
    devs.sort_by(f64::total_cmp);
    let quantile = |q: f64| -> f64 {
        if devs.is_empty() {
            0.0
        } else {
            devs[((devs.len() - 1) as f64 * q).round() as usize]
        }
    };
    let within = if pairs.is_empty() {
        1.0
    } else {
        devs.iter().filter(|&&d| d <= tolerance).count() as f64 / pairs.len() as f64
    };
    Ok(OverlapReport {
        pairs: pairs.len(),
        tolerance,
        max_deviation: devs.last().copied().unwrap_or(0.0),
        mean_deviation: if devs.is_empty() {
            0.0
        } else {
            devs.iter().sum::<f64>() / devs.len() as f64
        },
        median_deviation: quantile(0.5),
        p95_deviation: quantile(0.95),
        within_tolerance: within,
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag21() -> DataMatrix {
        DataMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap()
    }

    #[test]
    fn rejects_zero_row_and_nan() {
        assert!(matches!(
            DataMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]),
            Err(Error::InvalidInput(_))
        ));
        assert!(DataMatrix::from_rows(&[vec![f64::NAN]]).is_err());
        assert!(DataMatrix::new(0, 3, vec![]).is_err());
    }

    #[test]
    fn diagonal_matrix_decomposition() {
        let m = svd_decompose(&diag21(), 0.95, 0).unwrap();
        assert!((m.singular_values()[0] - 2.0).abs() < 1e-14);
        assert!((m.singular_values()[1] - 1.0).abs() < 1e-14);
        assert!((m.right_vector(0)[0] - 1.0).abs() < 1e-14);
        // v_2 = ±e_2 and the anchor (row 0) has zero overlap, so either sign is allowed
        assert!((m.right_vector(1)[1].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rank_one_identical_rows() {
        let x = DataMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let m = svd_decompose(&x, 0.95, 0).unwrap();
        assert!((m.singular_values()[0] - 2f64.sqrt()).abs() < 1e-14);
        assert_eq!(m.singular_values()[1], 0.0);
        assert_eq!(m.variance_proportions(), &[1.0, 0.0]);
        assert!((m.right_vector(0)[0] - 1.0).abs() < 1e-14);
        assert_eq!(m.rank(), 1);
        assert_eq!(m.selected_dim(), 1);
    }

    #[test]
    fn wide_matrix_gets_full_right_basis() {
        let x = DataMatrix::from_rows(&[vec![1.0, 2.0, 3.0, 4.0]]).unwrap();
        let m = svd_decompose(&x, 0.95, 0).unwrap();
        assert_eq!(m.right_vectors().len(), 4);
        for a in 0..4 {
            for b in 0..4 {
                let e = if a == b { 1.0 } else { 0.0 };
                assert!((dot(m.right_vector(a), m.right_vector(b)) - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_selection_examples() {
        assert_eq!(select_dimension_from(&[0.90, 0.08, 0.02], 0.95), 2);
        assert_eq!(select_dimension_from(&[1.0, 0.0, 0.0, 0.0], 0.95), 1);
        assert_eq!(select_dimension_from(&[0.5, 0.5], 1.0), 2);
        assert_eq!(DEFAULT_THRESHOLD, 0.95);
    }

    #[test]
    fn bad_threshold_and_anchor() {
        assert!(svd_decompose(&diag21(), 0.0, 0).is_err());
        assert!(svd_decompose(&diag21(), 1.5, 0).is_err());
        assert!(matches!(
            svd_decompose(&diag21(), 0.9, 2),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn projection_of_diagonal() {
        let x = diag21();
        let m = svd_decompose(&x, 0.5, 0).unwrap();
        assert_eq!(m.selected_dim(), 1);
        let y = project(&x, &m).unwrap();
        assert_eq!((y.rows(), y.cols()), (2, 1));
        assert!((y.get(0, 0) - 2.0).abs() < 1e-14);
        assert!(y.get(1, 0).abs() < 1e-14);
    }

    #[test]
    fn projection_dimension_mismatch() {
        let m = svd_decompose(&diag21(), 0.5, 0).unwrap();
        let other = DataMatrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(project(&other, &m), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn expected_state_examples() {
        let y = CompressedMatrix::new(1, 1, vec![1.0]).unwrap();
        let s = expected_compressed_state(&y).unwrap();
        assert_eq!(s.layout(), vec![(ROW_REGISTER, 0), (INDEX_REGISTER, 1)]);
        assert_eq!(s.amplitude(&[(ROW_REGISTER, 0), (INDEX_REGISTER, 1)]).unwrap().re, 1.0);

        let y = CompressedMatrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let s = expected_compressed_state(&y).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s.amplitude(&[(ROW_REGISTER, 0), (INDEX_REGISTER, 1)]).unwrap().re - h).abs() < 1e-15);
        assert!((s.amplitude(&[(ROW_REGISTER, 1), (INDEX_REGISTER, 2)]).unwrap().re - h).abs() < 1e-15);

        let zero = CompressedMatrix::new(1, 1, vec![0.0]).unwrap();
        assert!(expected_compressed_state(&zero).is_err());
    }

    #[test]
    fn zero_compressed_rows_are_flagged() {
        let x = DataMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let y = CompressedMatrix::new(3, 1, vec![1.0, 0.0, 1.0]).unwrap();
        let r = pairwise_overlap_report(&x, &y, 1e-9).unwrap();
        assert_eq!(r.pairs, 3);
        assert_eq!(r.flagged, vec![(0, 1), (1, 2)]);
        assert!((r.within_tolerance - 0.0).abs() < 1e-15);
    }
}
