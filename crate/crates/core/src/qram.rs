//! Binary-tree amplitude encoding of a dataset.
//!
//! Each data row is held in a tree whose leaves store `X_ij²` and the sign of
//! `X_ij`, and whose internal nodes store subtree sums. A second tree does the
//! same for the row norms `‖x_i‖²`. Walking a tree from the root, level by
//! level, with a rotation on one qubit controlled by the already-fixed prefix
//! qubits prepares the amplitude-encoded vector. Each level is a genuine
//! unitary (a uniformly controlled `R_y`), so the walk is defined on every
//! input, not only on `|0⟩`; the action away from `|0⟩` is just whatever
//! those rotations do and carries no further meaning.
//!
//! Rows and columns are zero-padded to powers of two. Padded leaves are zero
//! and padded rows get an identity walk.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pca::DataMatrix;
use crate::state::{qubits_for, StateVector, FEATURE_REGISTER, ROW_REGISTER};

/// Below this weight a register counts as `|0⟩` for the strict-domain check.
const DOMAIN_TOL: f64 = 1e-24;

/// Whether a preparation unitary may be fed inputs outside the domain on
/// which its action is specified.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// Reject inputs whose target register is not `|0⟩`.
    Strict,
    /// Apply the deterministic unitary completion to any input.
    Extended,
}

/// A perfect binary tree of partial sums in heap order: node 1 is the root,
/// node `k` has children `2k` and `2k + 1`, and the leaves occupy
/// `2^depth .. 2^(depth+1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinaryTree {
    depth: usize,
    nodes: Vec<f64>,
    negative: Vec<bool>,
    /// `angles[level][prefix]`, the `R_y` angle applied at that node.
    #[serde(skip)]
    angles: Vec<Vec<f64>>,
}

impl BinaryTree {
    /// Builds the tree over `values`, padded with zeros to `2^depth` leaves.
    pub fn from_values(values: &[f64], depth: usize) -> Self {
        let width = 1usize << depth;
        debug_assert!(values.len() <= width);
        let mut nodes = vec![0.0; 2 * width];
        let mut negative = vec![false; width];
        for (k, &v) in values.iter().enumerate() {
            nodes[width + k] = v * v;
            negative[k] = v < 0.0;
        }
        for k in (1..width).rev() {
            nodes[k] = nodes[2 * k] + nodes[2 * k + 1];
        }
        let mut tree = Self {
            depth,
            nodes,
            negative,
            angles: Vec::new(),
        };
        tree.angles = tree.compute_angles();
        tree
    }

    fn compute_angles(&self) -> Vec<Vec<f64>> {
        (0..self.depth)
            .map(|level| {
                let last = level + 1 == self.depth;
                (0..1usize << level)
                    .map(|prefix| {
                        let node = (1 << level) + prefix;
                        let (l, r) = (2 * node, 2 * node + 1);
                        let mut a = self.nodes[l].sqrt();
                        let mut b = self.nodes[r].sqrt();
                        if last {
                            let width = 1 << self.depth;
                            if self.negative[l - width] {
                                a = -a;
                            }
                            if self.negative[r - width] {
                                b = -b;
                            }
                        }
                        // atan2(0, 0) = 0 leaves empty subtrees untouched
                        2.0 * b.atan2(a)
                    })
                    .collect()
            })
            .collect()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn root(&self) -> f64 {
        self.nodes[1]
    }

    /// Stored value of heap node `k` (1-based).
    pub fn node(&self, k: usize) -> f64 {
        self.nodes[k]
    }

    pub fn leaves(&self) -> &[f64] {
        &self.nodes[1 << self.depth..]
    }

    pub fn leaf_sign(&self, k: usize) -> f64 {
        if self.negative[k] {
            -1.0
        } else {
            1.0
        }
    }

    /// Checks that every internal node equals the sum of its children.
    pub fn is_consistent(&self) -> bool {
        (1..1usize << self.depth).all(|k| self.nodes[k] == self.nodes[2 * k] + self.nodes[2 * k + 1])
    }

    /// The tree walk on a register fiber of length `2^depth`.
    pub fn walk(&self, fiber: &mut [Complex64]) {
        debug_assert_eq!(fiber.len(), 1 << self.depth);
        if self.depth == 0 {
            if self.negative[0] {
                fiber[0] = -fiber[0];
            }
            return;
        }
        for level in 0..self.depth {
            self.rotate_level(fiber, level, 1.0);
        }
    }

    /// Inverse of [`BinaryTree::walk`].
    pub fn unwalk(&self, fiber: &mut [Complex64]) {
        debug_assert_eq!(fiber.len(), 1 << self.depth);
        if self.depth == 0 {
            if self.negative[0] {
                fiber[0] = -fiber[0];
            }
            return;
        }
        for level in (0..self.depth).rev() {
            self.rotate_level(fiber, level, -1.0);
        }
    }

    fn rotate_level(&self, fiber: &mut [Complex64], level: usize, sign: f64) {
        let below = self.depth - level - 1;
        for (prefix, &theta) in self.angles[level].iter().enumerate() {
            if theta == 0.0 {
                continue;
            }
            let (s, c) = (sign * theta / 2.0).sin_cos();
            let base = prefix << (below + 1);
            for low in 0..1usize << below {
                let i0 = base | low;
                let i1 = i0 | (1 << below);
                let (a0, a1) = (fiber[i0], fiber[i1]);
                fiber[i0] = a0 * c - a1 * s;
                fiber[i1] = a0 * s + a1 * c;
            }
        }
    }
}

/// Dataset stored for amplitude-encoded state preparation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QramTree {
    rows: usize,
    cols: usize,
    padded_rows: usize,
    padded_cols: usize,
    row_trees: Vec<BinaryTree>,
    norm_tree: BinaryTree,
    #[serde(skip)]
    data: DataMatrix,
}

/// Builds the row trees and the norm tree, touching each entry once.
pub fn build_tree(x: &DataMatrix) -> Result<QramTree> {
    QramTree::build(x)
}

impl QramTree {
    pub fn build(x: &DataMatrix) -> Result<Self> {
        let row_q = qubits_for(x.rows());
        let col_q = qubits_for(x.cols());
        let mut row_trees = Vec::with_capacity(x.rows());
        let mut norms = Vec::with_capacity(x.rows());
        for i in 0..x.rows() {
            let tree = BinaryTree::from_values(x.row(i), col_q);
            if tree.root() == 0.0 {
                return Err(Error::InvalidInput(format!("row {i} is all zero")));
            }
            norms.push(tree.root().sqrt());
            row_trees.push(tree);
        }
        Ok(Self {
            rows: x.rows(),
            cols: x.cols(),
            padded_rows: 1 << row_q,
            padded_cols: 1 << col_q,
            row_trees,
            norm_tree: BinaryTree::from_values(&norms, row_q),
            data: x.clone(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn padded_rows(&self) -> usize {
        self.padded_rows
    }

    pub fn padded_cols(&self) -> usize {
        self.padded_cols
    }

    pub fn row_qubits(&self) -> usize {
        self.norm_tree.depth()
    }

    pub fn feature_qubits(&self) -> usize {
        qubits_for(self.padded_cols)
    }

    /// The dataset the trees were built from.
    pub fn data(&self) -> &DataMatrix {
        &self.data
    }

    pub fn row_tree(&self, i: usize) -> &BinaryTree {
        &self.row_trees[i]
    }

    pub fn norm_tree(&self) -> &BinaryTree {
        &self.norm_tree
    }

    /// `‖X‖_F²` as held at the norm-tree root.
    pub fn frobenius_norm_sqr(&self) -> f64 {
        self.norm_tree.root()
    }

    fn check_width(&self, state: &StateVector, reg: &str, qubits: usize) -> Result<()> {
        let have = state.register(reg)?.qubits;
        if have != qubits {
            return Err(Error::InvalidInput(format!(
                "register `{reg}` has {have} qubits, tree needs {qubits}"
            )));
        }
        Ok(())
    }

    fn check_zero(state: &StateVector, reg: &str, domain: Domain) -> Result<()> {
        if domain == Domain::Extended {
            return Ok(());
        }
        let m = state.marginal(reg)?;
        let off: f64 = m[1..].iter().sum();
        if off > DOMAIN_TOL.max(1e-20 * m[0]) {
            return Err(Error::ContractViolation(format!(
                "register `{reg}` is not |0⟩ (weight {off:e} elsewhere)"
            )));
        }
        Ok(())
    }

    /// `U_N : |0⟩|j⟩ ↦ Σ_i (‖x_i‖/‖X‖_F) |i⟩|j⟩` on register `row`.
    pub fn apply_un(&self, state: &mut StateVector, row: &str, domain: Domain) -> Result<()> {
        self.check_width(state, row, self.row_qubits())?;
        Self::check_zero(state, row, domain)?;
        state.apply_local(&[row], |f| {
            self.norm_tree.walk(f);
            Ok(())
        })
    }

    pub fn apply_un_inverse(&self, state: &mut StateVector, row: &str) -> Result<()> {
        self.check_width(state, row, self.row_qubits())?;
        state.apply_local(&[row], |f| {
            self.norm_tree.unwalk(f);
            Ok(())
        })
    }

    /// `U_M : |i⟩|0⟩ ↦ Σ_j (x_ij/‖x_i‖) |i⟩|j⟩`, controlled on `row`.
    pub fn apply_um(&self, state: &mut StateVector, row: &str, feature: &str, domain: Domain) -> Result<()> {
        self.check_width(state, row, self.row_qubits())?;
        self.check_width(state, feature, self.feature_qubits())?;
        Self::check_zero(state, feature, domain)?;
        state.apply_controlled(row, feature, |i, f| {
            if let Some(tree) = self.row_trees.get(i) {
                tree.walk(f);
            }
            Ok(())
        })
    }

    pub fn apply_um_inverse(&self, state: &mut StateVector, row: &str, feature: &str) -> Result<()> {
        self.check_width(state, row, self.row_qubits())?;
        self.check_width(state, feature, self.feature_qubits())?;
        state.apply_controlled(row, feature, |i, f| {
            if let Some(tree) = self.row_trees.get(i) {
                tree.unwalk(f);
            }
            Ok(())
        })
    }

    /// `|ψ_s⟩ = U_M U_N |0⟩|0⟩ = Σ_ij (x_ij/‖X‖_F) |i⟩|j⟩` on registers
    /// `row` and `feature`.
    pub fn prepare_psi_s(&self) -> Result<StateVector> {
        let mut s = StateVector::zero(&[
            (ROW_REGISTER, self.row_qubits()),
            (FEATURE_REGISTER, self.feature_qubits()),
        ])?;
        self.apply_un(&mut s, ROW_REGISTER, Domain::Strict)?;
        self.apply_um(&mut s, ROW_REGISTER, FEATURE_REGISTER, Domain::Strict)?;
        Ok(s)
    }

    /// `Σ_{i∈S} |i⟩ ⊗ x_i / sqrt(Σ_{i∈S} ‖x_i‖²)`, from a norm tree restricted
    /// to the subset.
    pub fn prepare_subset(&self, subset: &[usize]) -> Result<StateVector> {
        if subset.is_empty() {
            return Err(Error::InvalidInput("empty subset".into()));
        }
        let mut norms = vec![0.0; self.rows];
        for &i in subset {
            if i >= self.rows {
                return Err(Error::OutOfRange {
                    what: "subset row",
                    index: i,
                    len: self.rows,
                });
            }
            norms[i] = self.row_trees[i].root().sqrt();
        }
        let masked = BinaryTree::from_values(&norms, self.row_qubits());
        let mut s = StateVector::zero(&[
            (ROW_REGISTER, self.row_qubits()),
            (FEATURE_REGISTER, self.feature_qubits()),
        ])?;
        s.apply_local(&[ROW_REGISTER], |f| {
            masked.walk(f);
            Ok(())
        })?;
        self.apply_um(&mut s, ROW_REGISTER, FEATURE_REGISTER, Domain::Strict)?;
        Ok(s)
    }

    /// The preparation `U_x` of data row `index` on a lone feature register.
    pub fn anchor(&self, index: usize) -> Result<AnchorPrep<'_>> {
        let tree = self.row_trees.get(index).ok_or(Error::OutOfRange {
            what: "anchor row",
            index,
            len: self.rows,
        })?;
        Ok(AnchorPrep { index, tree })
    }

    /// `|x_a⟩` on the feature register alone.
    pub fn prepare_anchor(&self, index: usize) -> Result<StateVector> {
        self.anchor(index)?.prepare()
    }
}

/// `U_x : |0⟩ ↦ |x⟩` for one data row, and its inverse.
#[derive(Debug, Clone, Copy)]
pub struct AnchorPrep<'a> {
    index: usize,
    tree: &'a BinaryTree,
}

impl AnchorPrep<'_> {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn prepare(&self) -> Result<StateVector> {
        let mut s = StateVector::zero(&[(FEATURE_REGISTER, self.tree.depth())])?;
        self.apply(&mut s, FEATURE_REGISTER)?;
        Ok(s)
    }

    pub fn apply(&self, state: &mut StateVector, feature: &str) -> Result<()> {
        state.apply_local(&[feature], |f| {
            self.tree.walk(f);
            Ok(())
        })
    }

    /// `U_x⁻¹`, used before projecting the feature register onto `|0⟩`.
    pub fn apply_inverse(&self, state: &mut StateVector, feature: &str) -> Result<()> {
        state.apply_local(&[feature], |f| {
            self.tree.unwalk(f);
            Ok(())
        })
    }

    /// Amplitudes of `|x⟩` as a plain real vector of padded length.
    pub fn amplitudes(&self) -> Vec<f64> {
        let n = self.tree.root().sqrt();
        self.tree
            .leaves()
            .iter()
            .enumerate()
            .map(|(k, &l)| self.tree.leaf_sign(k) * l.sqrt() / n)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn re(s: &StateVector) -> Vec<f64> {
        s.amplitudes().iter().map(|a| a.re).collect()
    }

    #[test]
    fn three_four_five() {
        let x = DataMatrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        let t = build_tree(&x).unwrap();
        assert_eq!(t.row_tree(0).leaves(), &[9.0, 16.0]);
        assert_eq!(t.row_tree(0).root(), 25.0);
        assert_eq!(t.norm_tree().root(), 25.0);
        let a = re(&t.prepare_anchor(0).unwrap());
        assert!((a[0] - 0.6).abs() < 1e-15 && (a[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn identity_norm_tree() {
        let x = DataMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let t = build_tree(&x).unwrap();
        assert_eq!(t.norm_tree().leaves(), &[1.0, 1.0]);
        assert_eq!(t.norm_tree().root(), 2.0);
        assert!(t.norm_tree().is_consistent());
    }

    #[test]
    fn sign_leaf_is_applied() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let x = DataMatrix::from_rows(&[vec![h, -h]]).unwrap();
        let t = build_tree(&x).unwrap();
        let a = re(&t.prepare_anchor(0).unwrap());
        assert!((a[0] - h).abs() < 1e-15 && (a[1] + h).abs() < 1e-15);
    }

    #[test]
    fn single_column_signs_need_a_phase() {
        let x = DataMatrix::from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
        let s = build_tree(&x).unwrap().prepare_psi_s().unwrap();
        let a = re(&s);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((a[0] - h).abs() < 1e-15 && (a[1] + h).abs() < 1e-15);
    }

    #[test]
    fn un_rejects_nonzero_row_register_in_strict_mode() {
        let x = DataMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let t = build_tree(&x).unwrap();
        let mut s = StateVector::from_real(&[(ROW_REGISTER, 1), (FEATURE_REGISTER, 1)], &[0.0, 0.0, 1.0, 0.0]).unwrap();
        assert!(matches!(
            t.apply_un(&mut s, ROW_REGISTER, Domain::Strict),
            Err(Error::ContractViolation(_))
        ));
        // extended mode accepts it and stays unitary
        t.apply_un(&mut s, ROW_REGISTER, Domain::Extended).unwrap();
        assert!((s.norm_sqr() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn un_on_unequal_norms() {
        let x = DataMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let t = build_tree(&x).unwrap();
        let mut s = StateVector::zero(&[(ROW_REGISTER, 1)]).unwrap();
        t.apply_un(&mut s, ROW_REGISTER, Domain::Strict).unwrap();
        let a = re(&s);
        assert!((a[0] - 1.0 / 5f64.sqrt()).abs() < 1e-15);
        assert!((a[1] - 2.0 / 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn um_on_uniform_rows_gives_bell_like_state() {
        let x = DataMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let t = build_tree(&x).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut s = StateVector::from_real(&[(ROW_REGISTER, 1), (FEATURE_REGISTER, 1)], &[h, 0.0, h, 0.0]).unwrap();
        t.apply_um(&mut s, ROW_REGISTER, FEATURE_REGISTER, Domain::Strict)
            .unwrap();
        let a = re(&s);
        assert!((a[0] - h).abs() < 1e-15 && a[1].abs() < 1e-15);
        assert!(a[2].abs() < 1e-15 && (a[3] - h).abs() < 1e-15);
    }

    #[test]
    fn anchor_inverse_returns_to_zero() {
        let x = DataMatrix::from_rows(&[vec![0.0, 1.0], vec![3.0, 4.0]]).unwrap();
        let t = build_tree(&x).unwrap();
        let a = re(&t.prepare_anchor(0).unwrap());
        assert!(a[0].abs() < 1e-15 && (a[1] - 1.0).abs() < 1e-15);
        let prep = t.anchor(1).unwrap();
        let mut s = prep.prepare().unwrap();
        prep.apply_inverse(&mut s, FEATURE_REGISTER).unwrap();
        assert!((s.amplitudes()[0].re - 1.0).abs() < 1e-12);
        assert!(s.amplitudes()[1].norm() < 1e-12);
        assert!(matches!(t.anchor(2), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn padded_rows_and_columns() {
        let x = DataMatrix::from_rows(&[vec![1.0, 2.0, 2.0], vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 3.0]]).unwrap();
        let t = build_tree(&x).unwrap();
        assert_eq!((t.padded_rows(), t.padded_cols()), (4, 4));
        assert_eq!(t.row_tree(0).leaves()[3], 0.0);
        assert_eq!(t.norm_tree().leaves()[3], 0.0);
        assert_eq!(t.frobenius_norm_sqr(), 19.0);
    }
}
