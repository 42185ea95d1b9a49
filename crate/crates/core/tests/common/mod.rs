//! Independent oracles shared by the integration tests. None of these call
//! into the library's numerical code.
#![allow(dead_code, clippy::needless_range_loop)]

use num_complex::Complex64;

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// `XᵀX` for a row-major `rows × cols` slice.
pub fn gram(data: &[f64], rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..cols)
        .map(|i| {
            (0..cols)
                .map(|j| (0..rows).map(|r| data[r * cols + i] * data[r * cols + j]).sum())
                .collect()
        })
        .collect()
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        assert!(a[col][col].abs() > 1e-14, "singular system");
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// A bare qubit register simulator; qubit `k` is bit `k` of the flat index.
pub struct Circuit {
    pub amps: Vec<Complex64>,
}

impl Circuit {
    pub fn basis(qubits: usize, index: usize) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << qubits];
        amps[index] = Complex64::new(1.0, 0.0);
        Self { amps }
    }

    pub fn x(&mut self, q: usize) {
        self.mcx(&[], q);
    }

    /// NOT on `target` when every control qubit is 1.
    pub fn mcx(&mut self, controls: &[usize], target: usize) {
        let mask: usize = controls.iter().map(|c| 1 << c).sum();
        for i in 0..self.amps.len() {
            if i & mask == mask && i & (1 << target) == 0 {
                self.amps.swap(i, i | (1 << target));
            }
        }
    }

    pub fn h(&mut self, q: usize) {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        for i in 0..self.amps.len() {
            if i & (1 << q) == 0 {
                let (a, b) = (self.amps[i], self.amps[i | (1 << q)]);
                self.amps[i] = (a + b) * r;
                self.amps[i | (1 << q)] = (a - b) * r;
            }
        }
    }

    /// Swaps qubits `a` and `b` when `control` is 1.
    pub fn cswap(&mut self, control: usize, a: usize, b: usize) {
        for i in 0..self.amps.len() {
            let (ba, bb) = ((i >> a) & 1, (i >> b) & 1);
            if (i >> control) & 1 == 1 && ba == 1 && bb == 0 {
                let j = (i & !(1 << a)) | (1 << b);
                self.amps.swap(i, j);
            }
        }
    }

    pub fn prob(&self, q: usize, value: usize) -> f64 {
        self.amps
            .iter()
            .enumerate()
            .filter(|(i, _)| (i >> q) & 1 == value)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }
}

/// The gate-level `CU_j` ladder on an eigenvalue register at qubits
/// `index_bits..index_bits + label_bits` and an index register at
/// `0..index_bits`: `X` on every zero bit of the label, a fully controlled
/// NOT onto each set bit of `j`, then the `X` gates again.
pub fn cu_ladder(c: &mut Circuit, label_bits: usize, index_bits: usize, label: usize, j: usize) -> usize {
    let eigen: Vec<usize> = (0..label_bits).map(|b| index_bits + b).collect();
    let zeros: Vec<usize> = (0..label_bits)
        .filter(|b| label >> b & 1 == 0)
        .map(|b| index_bits + b)
        .collect();
    let mut gates = 0;
    for &q in &zeros {
        c.x(q);
        gates += 1;
    }
    for k in 0..index_bits {
        if j >> k & 1 == 1 {
            c.mcx(&eigen, k);
            gates += 1;
        }
    }
    for &q in &zeros {
        c.x(q);
        gates += 1;
    }
    gates
}

/// Swap-test `P(ancilla = 0)` from the circuit `H · CSWAP · H` on
/// `|0⟩|a⟩|b⟩` with `n`-qubit real registers.
pub fn swap_circuit_p0(a: &[f64], b: &[f64], n: usize) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    // ancilla at qubit 2n, a at n..2n, b at 0..n
    let mut amps = vec![Complex64::new(0.0, 0.0); 1 << (2 * n + 1)];
    for (ia, va) in a.iter().enumerate() {
        for (ib, vb) in b.iter().enumerate() {
            amps[(ia << n) | ib] = Complex64::new(va * vb / (na * nb), 0.0);
        }
    }
    let mut c = Circuit { amps };
    c.h(2 * n);
    for k in 0..n {
        c.cswap(2 * n, n + k, k);
    }
    c.h(2 * n);
    c.prob(2 * n, 0)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// All `k`-subsets of `0..n`, each ascending.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if n < k {
        return vec![];
    }
    let mut out = combinations(n - 1, k);
    for mut c in combinations(n - 1, k - 1) {
        c.push(n - 1);
        out.push(c);
    }
    out
}
