//! Dense statevectors over named qubit registers.
//!
//! Registers are laid out in declaration order with the first register in
//! the most significant bits of the basis index. A register may have zero
//! qubits, in which case it has the single basis value `0`. Callers address
//! registers by name; bit positions never leak through the public surface.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Register names shared by the oracle and the simulated pipeline.
pub const ROW_REGISTER: &str = "row";
pub const FEATURE_REGISTER: &str = "feature";
pub const EIGEN_REGISTER: &str = "eigen";
pub const INDEX_REGISTER: &str = "index";
pub const ANCILLA_REGISTER: &str = "ancilla";

/// Amplitudes below this squared magnitude are treated as absent when a
/// register is checked for being disentangled.
pub const DISCARD_TOL: f64 = 1e-20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Register {
    pub name: String,
    pub qubits: usize,
}

impl Register {
    pub fn dim(&self) -> usize {
        1 << self.qubits
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    registers: Vec<Register>,
    amps: Vec<Complex64>,
}

/// Number of qubits needed to hold `n` distinct basis values.
pub fn qubits_for(n: usize) -> usize {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    }
}

impl StateVector {
    /// All registers in `|0⟩`.
    pub fn zero(layout: &[(&str, usize)]) -> Result<Self> {
        let registers = Self::check_layout(layout)?;
        let total: usize = registers.iter().map(|r| r.qubits).sum();
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << total];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { registers, amps })
    }

    /// Wraps raw amplitudes. The vector is taken as-is, unnormalized input is
    /// allowed so that callers can build targets and normalize afterwards.
    pub fn from_amplitudes(layout: &[(&str, usize)], amps: Vec<Complex64>) -> Result<Self> {
        let registers = Self::check_layout(layout)?;
        let total: usize = registers.iter().map(|r| r.qubits).sum();
        if amps.len() != 1 << total {
            return Err(Error::InvalidInput(format!(
                "expected {} amplitudes for {total} qubits, got {}",
                1usize << total,
                amps.len()
            )));
        }
        Ok(Self { registers, amps })
    }

    /// Real amplitudes, convenient for oracle states.
    pub fn from_real(layout: &[(&str, usize)], amps: &[f64]) -> Result<Self> {
        Self::from_amplitudes(layout, amps.iter().map(|&a| Complex64::new(a, 0.0)).collect())
    }

    fn check_layout(layout: &[(&str, usize)]) -> Result<Vec<Register>> {
        let mut registers: Vec<Register> = Vec::with_capacity(layout.len());
        for &(name, qubits) in layout {
            if registers.iter().any(|r| r.name == name) {
                return Err(Error::InvalidInput(format!("duplicate register `{name}`")));
            }
            registers.push(Register {
                name: name.to_string(),
                qubits,
            });
        }
        let total: usize = registers.iter().map(|r| r.qubits).sum();
        if total > 30 {
            return Err(Error::InvalidInput(format!(
                "{total} qubits exceeds the dense simulator limit of 30"
            )));
        }
        Ok(registers)
    }

    pub fn registers(&self) -> &[Register] {
        &self.registers
    }

    pub fn layout(&self) -> Vec<(&str, usize)> {
        self.registers.iter().map(|r| (r.name.as_str(), r.qubits)).collect()
    }

    pub fn num_qubits(&self) -> usize {
        self.registers.iter().map(|r| r.qubits).sum()
    }

    pub fn has_register(&self, name: &str) -> bool {
        self.registers.iter().any(|r| r.name == name)
    }

    pub fn register(&self, name: &str) -> Result<&Register> {
        self.registers
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| Error::UnknownRegister(name.to_string()))
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    fn position(&self, name: &str) -> Result<usize> {
        self.registers
            .iter()
            .position(|r| r.name == name)
            .ok_or_else(|| Error::UnknownRegister(name.to_string()))
    }

    /// Bit offset of the register's least significant qubit.
    fn shift(&self, pos: usize) -> usize {
        self.registers[pos + 1..].iter().map(|r| r.qubits).sum()
    }

    fn shift_mask(&self, name: &str) -> Result<(usize, usize)> {
        let pos = self.position(name)?;
        Ok((self.shift(pos), self.registers[pos].dim() - 1))
    }

    /// Value of register `name` in basis index `index`.
    pub fn value_of(&self, name: &str, index: usize) -> Result<usize> {
        let (shift, mask) = self.shift_mask(name)?;
        Ok((index >> shift) & mask)
    }

    /// Basis index for a full assignment of register values.
    pub fn index_of(&self, values: &[(&str, usize)]) -> Result<usize> {
        if values.len() != self.registers.len() {
            return Err(Error::InvalidInput(format!(
                "expected values for {} registers, got {}",
                self.registers.len(),
                values.len()
            )));
        }
        let mut index = 0;
        for &(name, value) in values {
            let (shift, mask) = self.shift_mask(name)?;
            if value > mask {
                return Err(Error::OutOfRange {
                    what: "register value",
                    index: value,
                    len: mask + 1,
                });
            }
            index |= value << shift;
        }
        Ok(index)
    }

    pub fn amplitude(&self, values: &[(&str, usize)]) -> Result<Complex64> {
        Ok(self.amps[self.index_of(values)?])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Rescales to unit norm and returns the squared norm before rescaling.
    pub fn normalize(&mut self) -> Result<f64> {
        let n2 = self.norm_sqr();
        if n2 <= 0.0 || !n2.is_finite() {
            return Err(Error::InvalidInput("cannot normalize a zero state".into()));
        }
        let inv = 1.0 / n2.sqrt();
        for a in &mut self.amps {
            *a *= inv;
        }
        Ok(n2)
    }

    /// `⟨self|other⟩`. Layouts must match register for register.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        if self.registers != other.registers {
            return Err(Error::InvalidInput(
                "inner product between states with different layouts".into(),
            ));
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    /// `|⟨self|other⟩|`, insensitive to global phase.
    pub fn fidelity(&self, other: &StateVector) -> Result<f64> {
        Ok(self.inner(other)?.norm())
    }

    /// Largest absolute amplitude difference.
    pub fn max_deviation(&self, other: &StateVector) -> Result<f64> {
        if self.registers != other.registers {
            return Err(Error::InvalidInput("layouts differ".into()));
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// Appends a fresh register in `|0⟩` as the least significant register.
    pub fn append_register(&mut self, name: &str, qubits: usize) -> Result<()> {
        if self.has_register(name) {
            return Err(Error::InvalidInput(format!("duplicate register `{name}`")));
        }
        if self.num_qubits() + qubits > 30 {
            return Err(Error::InvalidInput("dense simulator limit of 30 qubits".into()));
        }
        let dim = 1usize << qubits;
        let mut amps = vec![Complex64::new(0.0, 0.0); self.amps.len() * dim];
        for (i, a) in self.amps.iter().enumerate() {
            amps[i * dim] = *a;
        }
        self.amps = amps;
        self.registers.push(Register {
            name: name.to_string(),
            qubits,
        });
        Ok(())
    }

    /// Drops a register that is in the basis state `|value⟩`. Fails if any
    /// amplitude outside that value survives, since dropping would then be a
    /// partial trace rather than a factorization.
    pub fn remove_register(&mut self, name: &str, value: usize) -> Result<()> {
        let pos = self.position(name)?;
        let shift = self.shift(pos);
        let dim = self.registers[pos].dim();
        if value >= dim {
            return Err(Error::OutOfRange {
                what: "register value",
                index: value,
                len: dim,
            });
        }
        let mask = dim - 1;
        let leaked: f64 = self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| (i >> shift) & mask != value)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        if leaked > DISCARD_TOL.max(1e-20 * self.norm_sqr()) {
            return Err(Error::ContractViolation(format!(
                "register `{name}` is not in |{value}⟩ (weight {leaked:e} elsewhere)"
            )));
        }
        let low = (1usize << shift) - 1;
        let mut amps = vec![Complex64::new(0.0, 0.0); self.amps.len() / dim];
        for (k, slot) in amps.iter_mut().enumerate() {
            let hi = k >> shift;
            let lo = k & low;
            let idx = (((hi * dim) | value) << shift) | lo;
            *slot = self.amps[idx];
        }
        self.amps = amps;
        self.registers.remove(pos);
        Ok(())
    }

    /// Zeroes every amplitude not matching the given register values and
    /// returns the squared norm of what remains (not renormalized).
    pub fn project(&mut self, values: &[(&str, usize)]) -> Result<f64> {
        let mut checks = Vec::with_capacity(values.len());
        for &(name, value) in values {
            let (shift, mask) = self.shift_mask(name)?;
            if value > mask {
                return Err(Error::OutOfRange {
                    what: "register value",
                    index: value,
                    len: mask + 1,
                });
            }
            checks.push((shift, mask, value));
        }
        let mut kept = 0.0;
        for (i, a) in self.amps.iter_mut().enumerate() {
            if checks.iter().all(|&(s, m, v)| (i >> s) & m == v) {
                kept += a.norm_sqr();
            } else {
                *a = Complex64::new(0.0, 0.0);
            }
        }
        Ok(kept)
    }

    /// Exact outcome distribution of one register.
    pub fn marginal(&self, name: &str) -> Result<Vec<f64>> {
        let (shift, mask) = self.shift_mask(name)?;
        let mut probs = vec![0.0; mask + 1];
        for (i, a) in self.amps.iter().enumerate() {
            probs[(i >> shift) & mask] += a.norm_sqr();
        }
        Ok(probs)
    }

    /// Applies `f` to every fiber of the listed registers. The slice handed
    /// to `f` is indexed row-major over the registers in the order given, so
    /// for `["a", "b"]` entry `va * dim_b + vb` holds `|va⟩|vb⟩`.
    pub fn apply_local<F>(&mut self, regs: &[&str], mut f: F) -> Result<()>
    where
        F: FnMut(&mut [Complex64]) -> Result<()>,
    {
        let mut geometry = Vec::with_capacity(regs.len());
        for name in regs {
            let pos = self.position(name)?;
            if geometry.iter().any(|&(p, _, _)| p == pos) {
                return Err(Error::InvalidInput(format!("register `{name}` listed twice")));
            }
            geometry.push((pos, self.shift(pos), self.registers[pos].dim()));
        }
        let fiber_len: usize = geometry.iter().map(|g| g.2).product();
        let mut offsets = vec![0usize; fiber_len];
        let mut target_mask = 0usize;
        for (k, off) in offsets.iter_mut().enumerate() {
            let mut rem = k;
            for &(_, shift, dim) in geometry.iter().rev() {
                *off |= (rem % dim) << shift;
                rem /= dim;
            }
        }
        for &(_, shift, dim) in &geometry {
            target_mask |= (dim - 1) << shift;
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); fiber_len];
        for base in 0..self.amps.len() {
            if base & target_mask != 0 {
                continue;
            }
            for (b, off) in buf.iter_mut().zip(&offsets) {
                *b = self.amps[base | off];
            }
            f(&mut buf)?;
            for (b, off) in buf.iter().zip(&offsets) {
                self.amps[base | off] = *b;
            }
        }
        Ok(())
    }

    /// Applies `f(control_value, target_fiber)` for each value of `control`.
    pub fn apply_controlled<F>(&mut self, control: &str, target: &str, mut f: F) -> Result<()>
    where
        F: FnMut(usize, &mut [Complex64]) -> Result<()>,
    {
        let tdim = self.register(target)?.dim();
        self.apply_local(&[control, target], |fiber| {
            for (c, chunk) in fiber.chunks_mut(tdim).enumerate() {
                f(c, chunk)?;
            }
            Ok(())
        })
    }

    /// Applies a dense matrix (row-major, `dim × dim`) to one register.
    pub fn apply_matrix(&mut self, name: &str, matrix: &[Complex64]) -> Result<()> {
        let dim = self.register(name)?.dim();
        if matrix.len() != dim * dim {
            return Err(Error::InvalidInput(format!(
                "matrix of {} entries does not fit register `{name}` of dimension {dim}",
                matrix.len()
            )));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); dim];
        self.apply_local(&[name], |fiber| {
            for (r, o) in out.iter_mut().enumerate() {
                *o = matrix[r * dim..(r + 1) * dim]
                    .iter()
                    .zip(fiber.iter())
                    .map(|(m, a)| m * a)
                    .sum();
            }
            fiber.copy_from_slice(&out);
            Ok(())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn qubit_counts() {
        assert_eq!(qubits_for(1), 0);
        assert_eq!(qubits_for(2), 1);
        assert_eq!(qubits_for(3), 2);
        assert_eq!(qubits_for(4), 2);
        assert_eq!(qubits_for(5), 3);
        assert_eq!(qubits_for(64), 6);
    }

    #[test]
    fn first_register_is_most_significant() {
        let s = StateVector::zero(&[("a", 1), ("b", 2)]).unwrap();
        assert_eq!(s.index_of(&[("a", 1), ("b", 2)]).unwrap(), 0b110);
        assert_eq!(s.value_of("b", 0b110).unwrap(), 2);
        assert_eq!(s.value_of("a", 0b110).unwrap(), 1);
    }

    #[test]
    fn append_then_remove_round_trips() {
        let amps = [0.6, 0.8];
        let mut s = StateVector::from_real(&[("a", 1)], &amps).unwrap();
        s.append_register("b", 2).unwrap();
        assert_eq!(s.amplitude(&[("a", 1), ("b", 0)]).unwrap(), c(0.8));
        s.remove_register("b", 0).unwrap();
        assert_eq!(s.amplitudes(), &[c(0.6), c(0.8)]);
    }

    #[test]
    fn remove_refuses_entangled_register() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut s = StateVector::from_real(&[("a", 1), ("b", 1)], &[h, 0.0, 0.0, h]).unwrap();
        assert!(matches!(s.remove_register("b", 0), Err(Error::ContractViolation(_))));
    }

    #[test]
    fn remove_middle_register_keeps_order() {
        // |a=1⟩|m=1⟩|z=0⟩ with m in |1⟩
        let mut s = StateVector::zero(&[("a", 1), ("m", 1), ("z", 1)]).unwrap();
        s.apply_matrix("a", &[c(0.0), c(1.0), c(1.0), c(0.0)]).unwrap();
        s.apply_matrix("m", &[c(0.0), c(1.0), c(1.0), c(0.0)]).unwrap();
        s.remove_register("m", 1).unwrap();
        assert_eq!(s.amplitude(&[("a", 1), ("z", 0)]).unwrap(), c(1.0));
    }

    #[test]
    fn marginal_of_uniform_pair() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = StateVector::from_real(&[("r", 1)], &[h, h]).unwrap();
        let m = s.marginal("r").unwrap();
        assert!((m[0] - 0.5).abs() < 1e-15 && (m[1] - 0.5).abs() < 1e-15);
        assert!(matches!(s.marginal("nope"), Err(Error::UnknownRegister(_))));
    }

    #[test]
    fn apply_local_orders_fiber_by_argument_order() {
        let mut s = StateVector::zero(&[("a", 1), ("b", 1)]).unwrap();
        // put amplitude on |a=0⟩|b=1⟩ by writing fiber index 1 when listed [b, a]
        s.apply_local(&["b", "a"], |f| {
            f.swap(0, 2); // |b=0,a=0⟩ -> |b=1,a=0⟩
            Ok(())
        })
        .unwrap();
        assert_eq!(s.amplitude(&[("a", 0), ("b", 1)]).unwrap(), c(1.0));
    }

    #[test]
    fn projection_reports_kept_weight() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut s = StateVector::from_real(&[("a", 1)], &[h, h]).unwrap();
        let p = s.project(&[("a", 1)]).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        assert_eq!(s.amplitudes()[0], c(0.0));
    }

    #[test]
    fn zero_qubit_register_has_one_value() {
        let mut s = StateVector::zero(&[("row", 0), ("f", 1)]).unwrap();
        assert_eq!(s.register("row").unwrap().dim(), 1);
        s.remove_register("row", 0).unwrap();
        assert_eq!(s.num_qubits(), 1);
    }
}
