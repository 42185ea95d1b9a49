//! Downstream learners on original or compressed features: a least-squares
//! SVM with a linear kernel and least-squares linear regression, each with a
//! state-overlap demo that reproduces the classical decision value.
//!
//! The matrix inversions inside the quantum versions are replaced by exact
//! classical solves; only the final overlap estimate is shot-sampled.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::engine::{interference_test, OverlapEstimate};
use crate::error::{Error, Result};
use crate::linalg::thin_svd;
use crate::pca::{dot, norm, project, project_point, svd_decompose, DataMatrix, SpectralModel};
use crate::state::{qubits_for, StateVector, FEATURE_REGISTER, ROW_REGISTER};

pub const DEFAULT_GAMMA: f64 = 1.0;

/// Relative singular-value cutoff for the regression pseudoinverse.
pub const PINV_CUTOFF: f64 = 1e-10;

/// Agreement required between the two regression forms.
pub const FORM_AGREEMENT: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    points: DataMatrix,
    targets: Vec<f64>,
    gamma: f64,
}

impl LabeledDataset {
    /// Classification data: every label is `+1` or `-1`.
    pub fn classification(points: DataMatrix, labels: Vec<f64>, gamma: f64) -> Result<Self> {
        if let Some((i, z)) = labels.iter().enumerate().find(|(_, z)| **z != 1.0 && **z != -1.0) {
            return Err(Error::InvalidInput(format!("label {z} at row {i} is not ±1")));
        }
        Self::regression(points, labels, gamma)
    }

    /// Regression data with real targets.
    pub fn regression(points: DataMatrix, targets: Vec<f64>, gamma: f64) -> Result<Self> {
        if targets.len() != points.rows() {
            return Err(Error::InvalidInput(format!(
                "{} targets for {} points",
                targets.len(),
                points.rows()
            )));
        }
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput("targets must be finite".into()));
        }
        if !gamma.is_finite() {
            return Err(Error::InvalidInput(format!("γ = {gamma} is not finite")));
        }
        Ok(Self { points, targets, gamma })
    }

    pub fn points(&self) -> &DataMatrix {
        &self.points
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// Feature space a learner works in.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureSpace {
    Original,
    /// `y = V_dᵀ x` under the given model.
    Compressed(SpectralModel),
}

impl FeatureSpace {
    /// Compressed space at `theta`, with signs fixed against row 0.
    pub fn compressed(points: &DataMatrix, theta: f64) -> Result<Self> {
        Ok(FeatureSpace::Compressed(svd_decompose(points, theta, 0)?))
    }

    pub fn name(&self) -> &'static str {
        match self {
            FeatureSpace::Original => "original",
            FeatureSpace::Compressed(_) => "compressed",
        }
    }

    pub fn dim(&self, points: &DataMatrix) -> usize {
        match self {
            FeatureSpace::Original => points.cols(),
            FeatureSpace::Compressed(m) => m.selected_dim(),
        }
    }

    /// Rows of `points` expressed in this space.
    pub fn features(&self, points: &DataMatrix) -> Result<Vec<Vec<f64>>> {
        match self {
            FeatureSpace::Original => Ok((0..points.rows()).map(|i| points.row(i).to_vec()).collect()),
            FeatureSpace::Compressed(m) => {
                let y = project(points, m)?;
                Ok((0..y.rows()).map(|i| y.row(i).to_vec()).collect())
            }
        }
    }

    /// One original-space point expressed in this space.
    pub fn map_point(&self, point: &[f64]) -> Result<Vec<f64>> {
        match self {
            FeatureSpace::Original => Ok(point.to_vec()),
            FeatureSpace::Compressed(m) => project_point(m, point),
        }
    }

    fn input_dim(&self) -> Option<usize> {
        match self {
            FeatureSpace::Original => None,
            FeatureSpace::Compressed(m) => Some(m.right_vectors().len()),
        }
    }
}

/// `K_ij = f_iᵀ f_j`.
pub fn kernel_matrix(features: &[Vec<f64>]) -> DMatrix<f64> {
    let n = features.len();
    DMatrix::from_fn(n, n, |i, j| dot(&features[i], &features[j]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LssvmModel {
    pub bias: f64,
    pub coefficients: Vec<f64>,
    pub gamma: f64,
    pub space: &'static str,
    /// `‖F(a, b) − (0, z)‖ / ‖(0, z)‖`.
    pub residual: f64,
    #[serde(skip)]
    features: Vec<Vec<f64>>,
    #[serde(skip)]
    input_dim: usize,
}

impl LssvmModel {
    /// Training points in the model's feature space.
    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }
}

/// The bordered system `[[0, 1ᵀ], [1, K + γI]]`.
pub fn lssvm_system(kernel: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    let n = kernel.nrows();
    let mut f = DMatrix::zeros(n + 1, n + 1);
    for i in 0..n {
        f[(0, i + 1)] = 1.0;
        f[(i + 1, 0)] = 1.0;
        for j in 0..n {
            f[(i + 1, j + 1)] = kernel[(i, j)];
        }
        f[(i + 1, i + 1)] += gamma;
    }
    f
}

/// Solves the LS-SVM system by dense LU.
pub fn lssvm_train(data: &LabeledDataset, space: &FeatureSpace) -> Result<LssvmModel> {
    let features = space.features(&data.points)?;
    let f = lssvm_system(&kernel_matrix(&features), data.gamma);
    let mut rhs = DVector::zeros(features.len() + 1);
    for (i, z) in data.targets.iter().enumerate() {
        rhs[i + 1] = *z;
    }
    let solution = f
        .clone()
        .lu()
        .solve(&rhs)
        .filter(|s| s.iter().all(|v| v.is_finite()))
        .ok_or_else(|| {
            Error::SingularSystem(format!(
                "LS-SVM system is singular at γ = {}; try a larger γ",
                data.gamma
            ))
        })?;
    let residual = (&f * &solution - &rhs).norm() / rhs.norm().max(f64::MIN_POSITIVE);
    if residual > 1e-6 {
        return Err(Error::SingularSystem(format!(
            "LS-SVM solve residual {residual:e}; try a larger γ"
        )));
    }
    Ok(LssvmModel {
        bias: solution[0],
        coefficients: solution.iter().skip(1).copied().collect(),
        gamma: data.gamma,
        space: space.name(),
        residual,
        features,
        input_dim: space.input_dim().unwrap_or(data.points.cols()),
    })
}

/// `Σ_j b_j f_0ᵀ f_j + a` for a query already in the model's space.
pub fn decision_value(model: &LssvmModel, query: &[f64]) -> Result<f64> {
    Ok(decision_terms(model, query)?.0)
}

/// Decision value and the sum of the magnitudes of its terms.
fn decision_terms(model: &LssvmModel, query: &[f64]) -> Result<(f64, f64)> {
    let dim = model.features.first().map_or(0, Vec::len);
    if query.len() != dim {
        return Err(Error::InvalidInput(format!(
            "query has {} features, model expects {dim}",
            query.len()
        )));
    }
    let (mut value, mut scale) = (model.bias, model.bias.abs());
    for (f, b) in model.features.iter().zip(&model.coefficients) {
        let t = b * dot(f, query);
        value += t;
        scale += t.abs();
    }
    Ok((value, scale))
}

/// `sgn` with `sgn(0) = +1`.
pub fn sign(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Relative size below which a decision value counts as a tie.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Class for a query already in the model's space; values within rounding
/// of zero are ties and map to `+1`.
pub fn classify_mapped(model: &LssvmModel, query: &[f64]) -> Result<f64> {
    let (value, scale) = decision_terms(model, query)?;
    Ok(if value.abs() <= TIE_TOLERANCE * scale {
        1.0
    } else {
        sign(value)
    })
}

/// Class of an original-space query, mapped into the model's space first.
pub fn lssvm_classify(model: &LssvmModel, space: &FeatureSpace, query: &[f64]) -> Result<f64> {
    if query.len() != model.input_dim {
        return Err(Error::InvalidInput(format!(
            "query has {} features, data has {}",
            query.len(),
            model.input_dim
        )));
    }
    classify_mapped(model, &space.map_point(query)?)
}

/// Fraction of training points the model classifies correctly.
pub fn training_accuracy(model: &LssvmModel, labels: &[f64]) -> Result<f64> {
    let mut correct = 0;
    for (f, z) in model.features.iter().zip(labels) {
        if classify_mapped(model, f)? == *z {
            correct += 1;
        }
    }
    Ok(correct as f64 / labels.len() as f64)
}

/// Outcome of an overlap-based prediction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateDemo {
    /// Classical value the overlap is proportional to.
    pub classical: f64,
    pub overlap: OverlapEstimate,
    /// The overlap estimate multiplied back by the known normalizations.
    pub rescaled: f64,
    pub rescaled_error: f64,
    /// Estimate within three standard errors of zero.
    pub inconclusive: bool,
}

fn demo(classical: f64, overlap: OverlapEstimate, scale: f64) -> StateDemo {
    StateDemo {
        classical,
        rescaled: overlap.estimate * scale,
        rescaled_error: overlap.standard_error * scale,
        inconclusive: overlap.estimate.abs() <= 3.0 * overlap.standard_error + 1e-12,
        overlap,
    }
}

/// Two-register state `Σ_r |r⟩ ⊗ v_r` from rows that may be shorter than the
/// padded feature width.
fn block_state(blocks: &[Vec<f64>], width: usize) -> Result<(StateVector, f64)> {
    let rq = qubits_for(blocks.len());
    let fq = qubits_for(width);
    let fdim = 1 << fq;
    let mut amps = vec![0.0; (1 << rq) * fdim];
    for (r, b) in blocks.iter().enumerate() {
        amps[r * fdim..r * fdim + b.len()].copy_from_slice(b);
    }
    let n = norm(&amps);
    if n == 0.0 {
        return Err(Error::InvalidInput("state has zero norm".into()));
    }
    amps.iter_mut().for_each(|a| *a /= n);
    Ok((
        StateVector::from_real(&[(ROW_REGISTER, rq), (FEATURE_REGISTER, fq)], &amps)?,
        n,
    ))
}

/// Classifies `query` through `⟨ψ₁|ψ₂⟩` with
/// `|ψ₁⟩ ∝ a|0⟩|0⟩ + Σ_j b_j |j⟩ f_j` and `|ψ₂⟩ ∝ |0⟩|0⟩ + Σ_j |j⟩ f_0`,
/// whose overlap is the decision value over the two norms. `shots = None`
/// evaluates the overlap exactly.
pub fn qsvm_state_demo(
    model: &LssvmModel,
    space: &FeatureSpace,
    query: &[f64],
    shots: Option<u64>,
    seed: u64,
) -> Result<StateDemo> {
    let q = space.map_point(query)?;
    let classical = decision_value(model, &q)?;
    let width = q.len().max(1);
    let mut bias_row = vec![0.0; width];
    bias_row[0] = model.bias;
    let mut first: Vec<Vec<f64>> = vec![bias_row];
    first.extend(
        model
            .features
            .iter()
            .zip(&model.coefficients)
            .map(|(f, b)| f.iter().map(|v| b * v).collect()),
    );
    let mut unit = vec![0.0; width];
    unit[0] = 1.0;
    let mut second: Vec<Vec<f64>> = vec![unit];
    second.extend(std::iter::repeat_n(q.clone(), model.features.len()));
    let (psi1, n1) = block_state(&first, width)?;
    let (psi2, n2) = block_state(&second, width)?;
    let overlap = interference_test(&psi1, &psi2, shots, seed)?;
    Ok(demo(classical, overlap, n1 * n2))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionPrediction {
    pub space: &'static str,
    /// `f_0ᵀ (FᵀF)⁺ Fᵀ z`.
    pub normal_form: f64,
    /// `Σ_j σ_j⁻¹ (f_0ᵀ v_j)(u_jᵀ z)`.
    pub svd_form: f64,
    pub rank: usize,
    pub condition: f64,
    pub agree: bool,
}

struct Svd {
    sigma: Vec<f64>,
    u: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

/// Thin SVD of the feature matrix truncated at the pseudoinverse cutoff.
fn truncated_svd(features: &[Vec<f64>]) -> Result<Svd> {
    let n = features.len();
    let k = features.first().map_or(0, Vec::len);
    let svd = thin_svd(n, k, |i, j| features[i][j])?;
    let sigma_max = svd.sigma.first().copied().unwrap_or(0.0);
    let keep = svd.sigma.iter().filter(|&&s| s > PINV_CUTOFF * sigma_max).count();
    if keep == 0 {
        return Err(Error::DegenerateRegression(
            "feature matrix has no nonzero singular value".into(),
        ));
    }
    Ok(Svd {
        sigma: svd.sigma[..keep].to_vec(),
        u: svd.u.into_iter().take(keep).collect(),
        v: svd.v.into_iter().take(keep).collect(),
    })
}

/// Least-squares prediction for `query` in the requested space.
pub fn qlr_predict(data: &LabeledDataset, query: &[f64], space: &FeatureSpace) -> Result<RegressionPrediction> {
    if query.len() != data.points.cols() {
        return Err(Error::InvalidInput(format!(
            "query has {} features, data has {}",
            query.len(),
            data.points.cols()
        )));
    }
    let features = space.features(&data.points)?;
    let q = space.map_point(query)?;
    let z = &data.targets;
    let svd = truncated_svd(&features)?;
    let rank = svd.sigma.len();

    let svd_form: f64 = (0..rank)
        .map(|j| dot(&q, &svd.v[j]) * dot(&svd.u[j], z) / svd.sigma[j])
        .sum();

    // normal equations, inverted on the top-`rank` eigenpairs of FᵀF
    let k = q.len();
    let n = features.len();
    let fm = DMatrix::from_fn(n, k, |i, j| features[i][j]);
    let gram = fm.transpose() * &fm;
    let rhs = fm.transpose() * DVector::from_column_slice(z);
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut w = DVector::zeros(k);
    for &e in order.iter().take(rank) {
        let col = eig.eigenvectors.column(e);
        w += col * (col.dot(&rhs) / eig.eigenvalues[e]);
    }
    let normal_form = dot(w.as_slice(), &q);

    let scale = normal_form.abs().max(svd_form.abs()).max(1.0);
    Ok(RegressionPrediction {
        space: space.name(),
        normal_form,
        svd_form,
        rank,
        condition: svd.sigma[0] / svd.sigma[rank - 1],
        agree: (normal_form - svd_form).abs() <= FORM_AGREEMENT * scale,
    })
}

/// Regression through `⟨φ₁|φ₂⟩` with `|φ₁⟩ ∝ Σ_j σ_j⁻¹ |v_j⟩|u_j⟩` and
/// `|φ₂⟩ = |f_0⟩|z⟩`, rescaled by the normalizations of both states.
pub fn qlr_state_demo(
    data: &LabeledDataset,
    query: &[f64],
    space: &FeatureSpace,
    shots: Option<u64>,
    seed: u64,
) -> Result<StateDemo> {
    let classical = qlr_predict(data, query, space)?.svd_form;
    let features = space.features(&data.points)?;
    let q = space.map_point(query)?;
    let svd = truncated_svd(&features)?;
    // feature register holds v, row register holds u
    let mut phi1 = vec![vec![0.0; features.len()]; q.len()];
    for ((sigma, u), v) in svd.sigma.iter().zip(&svd.u).zip(&svd.v) {
        for (row, vf) in phi1.iter_mut().zip(v) {
            for (cell, ui) in row.iter_mut().zip(u) {
                *cell += vf * ui / sigma;
            }
        }
    }
    let phi2: Vec<Vec<f64>> = q.iter().map(|x| data.targets.iter().map(|z| x * z).collect()).collect();
    let (s1, n1) = block_state(&phi1, features.len())?;
    let (s2, n2) = block_state(&phi2, features.len())?;
    let overlap = interference_test(&s1, &s2, shots, seed)?;
    Ok(demo(classical, overlap, n1 * n2))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_points() -> LabeledDataset {
        let x = DataMatrix::from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
        LabeledDataset::classification(x, vec![1.0, -1.0], 1.0).unwrap()
    }

    #[test]
    fn two_point_symmetry() {
        let m = lssvm_train(&two_points(), &FeatureSpace::Original).unwrap();
        assert!(m.bias.abs() < 1e-15);
        assert!((m.coefficients[0] + m.coefficients[1]).abs() < 1e-15);
        assert!(m.residual < 1e-12);
        assert_eq!(lssvm_classify(&m, &FeatureSpace::Original, &[1.0]).unwrap(), 1.0);
        assert_eq!(lssvm_classify(&m, &FeatureSpace::Original, &[-1.0]).unwrap(), -1.0);
        assert!(decision_value(&m, &[0.0]).unwrap().abs() < 1e-15);
        assert_eq!(lssvm_classify(&m, &FeatureSpace::Original, &[0.0]).unwrap(), 1.0);
    }

    #[test]
    fn labels_must_be_signs() {
        let x = DataMatrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(LabeledDataset::classification(x.clone(), vec![0.5], 1.0).is_err());
        assert!(LabeledDataset::regression(x, vec![1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn singular_system_is_reported() {
        // identical points with γ = 0 make two rows of F equal
        let x = DataMatrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let data = LabeledDataset::classification(x, vec![1.0, -1.0], 0.0).unwrap();
        assert!(matches!(
            lssvm_train(&data, &FeatureSpace::Original),
            Err(Error::SingularSystem(_))
        ));
    }

    #[test]
    fn query_dimension_checked() {
        let m = lssvm_train(&two_points(), &FeatureSpace::Original).unwrap();
        assert!(lssvm_classify(&m, &FeatureSpace::Original, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn shot_free_qsvm_matches() {
        let data = two_points();
        let m = lssvm_train(&data, &FeatureSpace::Original).unwrap();
        for q in [[1.0], [-1.0]] {
            let d = qsvm_state_demo(&m, &FeatureSpace::Original, &q, None, 0).unwrap();
            assert!((d.rescaled - d.classical).abs() < 1e-12);
            assert!(!d.inconclusive);
        }
        let mid = qsvm_state_demo(&m, &FeatureSpace::Original, &[0.0], None, 0).unwrap();
        assert!(mid.inconclusive);
    }

    #[test]
    fn one_dimensional_regression() {
        let x = DataMatrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let data = LabeledDataset::regression(x, vec![2.0, 4.0, 6.0], DEFAULT_GAMMA).unwrap();
        let p = qlr_predict(&data, &[4.0], &FeatureSpace::Original).unwrap();
        assert!((p.normal_form - 8.0).abs() < 1e-12);
        assert!((p.svd_form - 8.0).abs() < 1e-12);
        assert!(p.agree);
    }

    #[test]
    fn identity_regression_demo() {
        let x = DataMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let data = LabeledDataset::regression(x, vec![1.0, 0.0], DEFAULT_GAMMA).unwrap();
        let d = qlr_state_demo(&data, &[1.0, 0.0], &FeatureSpace::Original, None, 0).unwrap();
        assert!((d.rescaled - 1.0).abs() < 1e-12);
        assert!(d.overlap.estimate > 0.0);
    }

    #[test]
    fn sampled_demo_is_seeded() {
        let data = two_points();
        let m = lssvm_train(&data, &FeatureSpace::Original).unwrap();
        let a = qsvm_state_demo(&m, &FeatureSpace::Original, &[1.0], Some(1000), 4).unwrap();
        let b = qsvm_state_demo(&m, &FeatureSpace::Original, &[1.0], Some(1000), 4).unwrap();
        assert_eq!(a, b);
    }
}
