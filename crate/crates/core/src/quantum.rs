//! Two-qubit channel model: Bell source, misalignment rotation on the transmitted
//! qubit, depolarization, and the exact joint statistics of BB84 measurements.
//!
//! Basis ordering is |00>, |01>, |10>, |11> with Alice's qubit first; Bob holds the
//! transmitted qubit.

use nalgebra::{Complex, DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Tolerance for identities that hold exactly in exact arithmetic.
pub const EXACT_TOL: f64 = 1e-12;

/// Dense complex matrix. Rectangular shapes are allowed (Kraus operators map 4 -> 16 dims).
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix(DMatrix<C64>);

/// Square, Hermitian, positive semidefinite matrix; trace 1 for states, less for
/// subnormalized outputs of a trace-non-increasing map.
pub type DensityOperator = ComplexMatrix;

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix(DMatrix::zeros(rows, cols))
    }

    pub fn identity(dim: usize) -> Self {
        ComplexMatrix(DMatrix::identity(dim, dim))
    }

    pub fn from_real(rows: usize, cols: usize, row_major: &[f64]) -> Self {
        assert_eq!(row_major.len(), rows * cols);
        ComplexMatrix(DMatrix::from_fn(rows, cols, |r, c| C64::new(row_major[r * cols + c], 0.0)))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        ComplexMatrix(DMatrix::from_fn(rows, cols, f))
    }

    /// Outer product |u><v|.
    pub fn outer(u: &[C64], v: &[C64]) -> Self {
        ComplexMatrix(DMatrix::from_fn(u.len(), v.len(), |r, c| u[r] * v[c].conj()))
    }

    pub fn inner(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<C64> {
        self.0
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    /// Side length of a square matrix.
    pub fn dim(&self) -> usize {
        debug_assert!(self.is_square());
        self.0.nrows()
    }

    pub fn is_square(&self) -> bool {
        self.0.is_square()
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.0[(r, c)]
    }

    pub fn set(&mut self, r: usize, c: usize, v: C64) {
        self.0[(r, c)] = v;
    }

    /// Row-major copy of all entries; length is rows * cols.
    pub fn entries(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for r in 0..self.rows() {
            for c in 0..self.cols() {
                out.push(self.0[(r, c)]);
            }
        }
        out
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn adjoint(&self) -> Self {
        ComplexMatrix(self.0.adjoint())
    }

    pub fn matmul(&self, other: &ComplexMatrix) -> Self {
        ComplexMatrix(&self.0 * &other.0)
    }

    pub fn kron(&self, other: &ComplexMatrix) -> Self {
        ComplexMatrix(self.0.kronecker(&other.0))
    }

    pub fn scale(&self, s: f64) -> Self {
        ComplexMatrix(self.0.map(|z| z * s))
    }

    pub fn add(&self, other: &ComplexMatrix) -> Self {
        ComplexMatrix(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &ComplexMatrix) -> Self {
        ComplexMatrix(&self.0 - &other.0)
    }

    /// A X A^dagger.
    pub fn conjugate_by(&self, a: &ComplexMatrix) -> Self {
        ComplexMatrix(&a.0 * &self.0 * a.0.adjoint())
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        (&self.0 - &other.0).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square() && self.max_abs_diff(&self.adjoint()) <= tol
    }

    /// Eigenvalues (ascending) of the Hermitian part of a square matrix.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigh().0
    }

    /// Eigendecomposition of the Hermitian part: ascending eigenvalues and matching
    /// eigenvector columns.
    pub fn eigh(&self) -> (Vec<f64>, ComplexMatrix) {
        let herm = (&self.0 + self.0.adjoint()) * C64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(herm);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let n = self.dim();
        let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        (values, ComplexMatrix(vectors))
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        self.is_hermitian(tol.max(EXACT_TOL))
            && self.eigenvalues().first().is_none_or(|&min| min >= -tol)
    }

    /// Principal square root of a PSD matrix (negative noise eigenvalues clipped to zero).
    pub fn psd_sqrt(&self) -> Self {
        let (values, vecs) = self.eigh();
        let n = values.len();
        let diag = DMatrix::from_fn(n, n, |r, c| {
            if r == c { C64::new(values[r].max(0.0).sqrt(), 0.0) } else { C64::new(0.0, 0.0) }
        });
        ComplexMatrix(&vecs.0 * diag * vecs.0.adjoint())
    }

    /// Traces out the second factor of a (d_a * d_b)-dimensional operator.
    pub fn partial_trace_second(&self, d_a: usize, d_b: usize) -> Result<Self> {
        if !self.is_square() || self.dim() != d_a * d_b {
            return Err(Error::DimensionMismatch { expected: d_a * d_b, actual: self.rows() });
        }
        Ok(ComplexMatrix::from_fn(d_a, d_a, |a, a2| {
            (0..d_b).map(|b| self.0[(a * d_b + b, a2 * d_b + b)]).sum()
        }))
    }

    /// Traces out the first factor of a (d_a * d_b)-dimensional operator.
    pub fn partial_trace_first(&self, d_a: usize, d_b: usize) -> Result<Self> {
        if !self.is_square() || self.dim() != d_a * d_b {
            return Err(Error::DimensionMismatch { expected: d_a * d_b, actual: self.rows() });
        }
        Ok(ComplexMatrix::from_fn(d_b, d_b, |b, b2| {
            (0..d_a).map(|a| self.0[(a * d_b + b, a * d_b + b2)]).sum()
        }))
    }
}

/// Misalignment angle and depolarization probability of the simulated channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub theta: f64,
    pub q: f64,
}

impl ChannelParams {
    pub fn new(theta: f64, q: f64) -> Result<Self> {
        let p = ChannelParams { theta, q };
        p.validate()?;
        Ok(p)
    }

    pub fn perfect() -> Self {
        ChannelParams { theta: 0.0, q: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=FRAC_PI_2).contains(&self.theta) {
            return Err(Error::param("theta", format!("{} not in [0, pi/2]", self.theta)));
        }
        if !(0.0..=1.0).contains(&self.q) {
            return Err(Error::param("q", format!("{} not in [0, 1]", self.q)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

impl Basis {
    pub const ALL: [Basis; 2] = [Basis::Z, Basis::X];

    pub fn index(self) -> usize {
        match self {
            Basis::Z => 0,
            Basis::X => 1,
        }
    }

    pub fn from_index(i: usize) -> Basis {
        if i == 0 { Basis::Z } else { Basis::X }
    }

    /// State vector of outcome `bit` in this basis.
    pub fn ket(self, bit: u8) -> [C64; 2] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match (self, bit) {
            (Basis::Z, 0) => [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
            (Basis::Z, _) => [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
            (Basis::X, 0) => [C64::new(h, 0.0), C64::new(h, 0.0)],
            (Basis::X, _) => [C64::new(h, 0.0), C64::new(-h, 0.0)],
        }
    }
}

#[derive(Clone, Debug)]
pub struct PovmElement {
    pub basis: Basis,
    pub outcome: u8,
    pub operator: ComplexMatrix,
}

/// Single-qubit BB84 measurement: basis choice with probability p_z / p_x, then a
/// projective measurement in that basis.
#[derive(Clone, Debug)]
pub struct PovmSet {
    pub elements: Vec<PovmElement>,
    pub p_z: f64,
    pub p_x: f64,
}

impl Default for PovmSet {
    fn default() -> Self {
        PovmSet::bb84(0.5, 0.5).expect("valid default basis probabilities")
    }
}

impl PovmSet {
    pub fn bb84(p_z: f64, p_x: f64) -> Result<Self> {
        if p_z < 0.0 || p_x < 0.0 || (p_z + p_x - 1.0).abs() > EXACT_TOL {
            return Err(Error::param("p_z/p_x", "basis probabilities must be non-negative and sum to 1"));
        }
        let mut elements = Vec::with_capacity(4);
        for basis in Basis::ALL {
            for outcome in 0..2u8 {
                let ket = basis.ket(outcome);
                elements.push(PovmElement {
                    basis,
                    outcome,
                    operator: ComplexMatrix::outer(&ket, &ket).scale(if basis == Basis::Z { p_z } else { p_x }),
                });
            }
        }
        Ok(PovmSet { elements, p_z, p_x })
    }

    pub fn basis_probability(&self, basis: Basis) -> f64 {
        match basis {
            Basis::Z => self.p_z,
            Basis::X => self.p_x,
        }
    }

    pub fn element(&self, basis: Basis, outcome: u8) -> &ComplexMatrix {
        &self
            .elements
            .iter()
            .find(|e| e.basis == basis && e.outcome == outcome)
            .expect("BB84 POVM has all four elements")
            .operator
    }

    /// Projector part of an element (element divided by its basis probability).
    pub fn projector(&self, basis: Basis, outcome: u8) -> ComplexMatrix {
        let p = self.basis_probability(basis);
        if p == 0.0 {
            let ket = basis.ket(outcome);
            return ComplexMatrix::outer(&ket, &ket);
        }
        self.element(basis, outcome).scale(1.0 / p)
    }

    /// Probability that both parties choose the same basis.
    pub fn p_pass(&self) -> f64 {
        self.p_z * self.p_z + self.p_x * self.p_x
    }

    pub fn completeness_error(&self) -> f64 {
        let sum = self
            .elements
            .iter()
            .fold(ComplexMatrix::zeros(2, 2), |acc, e| acc.add(&e.operator));
        sum.max_abs_diff(&ComplexMatrix::identity(2))
    }
}

/// Pr[alpha, beta, x, y] for Alice basis alpha, Bob basis beta, outcomes x, y.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointOutcomeDistribution {
    entries: [[[[f64; 2]; 2]; 2]; 2],
}

impl JointOutcomeDistribution {
    pub fn get(&self, alpha: Basis, beta: Basis, x: u8, y: u8) -> f64 {
        self.entries[alpha.index()][beta.index()][x as usize][y as usize]
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().flatten().flatten().flatten().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Basis, Basis, u8, u8, f64)> + '_ {
        (0..16).map(move |i| {
            let (a, b, x, y) = (i >> 3, (i >> 2) & 1, (i >> 1) & 1, i & 1);
            (Basis::from_index(a), Basis::from_index(b), x as u8, y as u8, self.entries[a][b][x][y])
        })
    }

    /// Pr[x != y | both parties measured in `basis`].
    pub fn conditional_error(&self, basis: Basis) -> f64 {
        let e = &self.entries[basis.index()][basis.index()];
        let total = e[0][0] + e[0][1] + e[1][0] + e[1][1];
        if total == 0.0 { 0.0 } else { (e[0][1] + e[1][0]) / total }
    }

    /// Pr[x != y | matched bases], pooled over both bases.
    pub fn matched_error(&self) -> f64 {
        let (mut err, mut total) = (0.0, 0.0);
        for b in 0..2 {
            let e = &self.entries[b][b];
            err += e[0][1] + e[1][0];
            total += e[0][0] + e[0][1] + e[1][0] + e[1][1];
        }
        if total == 0.0 { 0.0 } else { err / total }
    }

    /// Pr[y = 1 | alpha, beta, x].
    pub fn bob_one_given(&self, alpha: Basis, beta: Basis, x: u8) -> f64 {
        let row = &self.entries[alpha.index()][beta.index()][x as usize];
        let total = row[0] + row[1];
        if total == 0.0 { 0.5 } else { row[1] / total }
    }
}

/// |phi+><phi+| with |phi+> = (|00> + |11>)/sqrt 2.
pub fn bell_state() -> DensityOperator {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let z = C64::new(0.0, 0.0);
    let v = [C64::new(h, 0.0), z, z, C64::new(h, 0.0)];
    ComplexMatrix::outer(&v, &v)
}

fn check_two_qubit(rho: &ComplexMatrix) -> Result<()> {
    if !rho.is_square() || rho.rows() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, actual: rho.rows().max(rho.cols()) });
    }
    Ok(())
}

/// Rotation about the Y axis applied to the transmitted qubit.
pub fn rotation_y(theta: f64) -> ComplexMatrix {
    let (s, c) = theta.sin_cos();
    ComplexMatrix::from_real(2, 2, &[c, -s, s, c])
}

/// (I (x) U(theta)) rho (I (x) U(theta))^dagger.
pub fn misalign(rho: &DensityOperator, theta: f64) -> Result<DensityOperator> {
    check_two_qubit(rho)?;
    if !theta.is_finite() {
        return Err(Error::NonFinite("theta".into()));
    }
    let u = ComplexMatrix::identity(2).kron(&rotation_y(theta));
    Ok(rho.conjugate_by(&u))
}

/// (1 - q) rho + q Tr_B(rho) (x) I/2: the transmitted qubit is replaced by the maximally
/// mixed state with probability q.
pub fn depolarize(rho: &DensityOperator, q: f64) -> Result<DensityOperator> {
    check_two_qubit(rho)?;
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::param("q", format!("{q} not in [0, 1]")));
    }
    let alice = rho.partial_trace_second(2, 2)?;
    let replaced = alice.kron(&ComplexMatrix::identity(2).scale(0.5));
    Ok(rho.scale(1.0 - q).add(&replaced.scale(q)))
}

pub fn channel_state(params: ChannelParams) -> Result<DensityOperator> {
    params.validate()?;
    depolarize(&misalign(&bell_state(), params.theta)?, params.q)
}

/// Exact joint statistics: entry(alpha, beta, x, y) = Tr[(P_A(alpha,x) (x) P_B(beta,y)) rho].
pub fn outcome_distribution(rho: &DensityOperator, povm: &PovmSet) -> Result<JointOutcomeDistribution> {
    check_two_qubit(rho)?;
    let mut entries = [[[[0.0; 2]; 2]; 2]; 2];
    for alpha in Basis::ALL {
        for beta in Basis::ALL {
            for x in 0..2u8 {
                for y in 0..2u8 {
                    let op = povm.element(alpha, x).kron(povm.element(beta, y));
                    let p = op.matmul(rho).trace().re;
                    entries[alpha.index()][beta.index()][x as usize][y as usize] = p.max(0.0);
                }
            }
        }
    }
    Ok(JointOutcomeDistribution { entries })
}

/// Infinite-sample QBER: Pr[x != y | matched bases] of the channel state.
pub fn analytic_qber(params: ChannelParams) -> Result<f64> {
    let rho = channel_state(params)?;
    Ok(outcome_distribution(&rho, &PovmSet::default())?.matched_error())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid() -> impl Iterator<Item = ChannelParams> {
        (0..20).flat_map(|i| {
            (0..20).map(move |j| ChannelParams {
                theta: FRAC_PI_2 * i as f64 / 19.0,
                q: j as f64 / 19.0,
            })
        })
    }

    #[test]
    fn bell_state_entries() {
        let b = bell_state();
        for r in 0..4 {
            for c in 0..4 {
                let expected = if [0, 3].contains(&r) && [0, 3].contains(&c) { 0.5 } else { 0.0 };
                assert_abs_diff_eq!(b.get(r, c).re, expected, epsilon = 1e-15);
                assert_abs_diff_eq!(b.get(r, c).im, 0.0);
            }
        }
        assert_abs_diff_eq!(b.trace().re, 1.0, epsilon = 1e-15);
        let ev = b.eigenvalues();
        assert_abs_diff_eq!(ev[3], 1.0, epsilon = 1e-12);
        for v in &ev[..3] {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn misalign_zero_is_identity_and_preserves_spectrum() {
        let b = bell_state();
        assert!(misalign(&b, 0.0).unwrap().max_abs_diff(&b) < 1e-15);
        let rotated = misalign(&b, 0.3).unwrap();
        let (e0, e1) = (b.eigenvalues(), rotated.eigenvalues());
        for (a, c) in e0.iter().zip(&e1) {
            assert_abs_diff_eq!(a, c, epsilon = 1e-12);
        }
    }

    #[test]
    fn misalign_quarter_turn_has_no_correlated_z_outcomes() {
        let rho = misalign(&bell_state(), FRAC_PI_2).unwrap();
        let d = outcome_distribution(&rho, &PovmSet::default()).unwrap();
        let correlated = d.get(Basis::Z, Basis::Z, 0, 0) + d.get(Basis::Z, Basis::Z, 1, 1);
        assert_abs_diff_eq!(correlated, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn misalign_rejects_wrong_dimension() {
        assert!(misalign(&ComplexMatrix::identity(2), 0.1).is_err());
    }

    #[test]
    fn depolarize_limits() {
        let b = bell_state();
        assert!(depolarize(&b, 0.0).unwrap().max_abs_diff(&b) < 1e-15);
        let mixed = depolarize(&b, 1.0).unwrap();
        assert!(mixed.max_abs_diff(&ComplexMatrix::identity(4).scale(0.25)) < 1e-15);
        // Werner form 0.8 |phi+><phi+| + 0.05 I
        let werner = b.scale(0.8).add(&ComplexMatrix::identity(4).scale(0.05));
        assert!(depolarize(&b, 0.2).unwrap().max_abs_diff(&werner) < 1e-15);
        assert!(depolarize(&b, 1.5).is_err());
        assert!(depolarize(&b, -0.1).is_err());
    }

    #[test]
    fn channel_state_special_points() {
        assert!(channel_state(ChannelParams::perfect()).unwrap().max_abs_diff(&bell_state()) < 1e-15);
        let mixed = channel_state(ChannelParams::new(0.0, 1.0).unwrap()).unwrap();
        assert!(mixed.max_abs_diff(&ComplexMatrix::identity(4).scale(0.25)) < 1e-15);
        let rho = channel_state(ChannelParams::new(0.1, 0.1).unwrap()).unwrap();
        assert_abs_diff_eq!(rho.trace().re, 1.0, epsilon = 1e-12);
        assert!(ChannelParams::new(2.0, 0.1).is_err());
        assert!(ChannelParams::new(0.1, 1.1).is_err());
    }

    #[test]
    fn povm_is_complete_and_psd() {
        let povm = PovmSet::default();
        assert!(povm.completeness_error() < 1e-12);
        assert!(povm.elements.iter().all(|e| e.operator.is_psd(1e-12)));
        assert_eq!(povm.p_z, 0.5);
        assert_eq!(povm.p_x, 0.5);
    }

    #[test]
    fn perfect_channel_distribution() {
        let d = outcome_distribution(&bell_state(), &PovmSet::default()).unwrap();
        assert_abs_diff_eq!(d.get(Basis::Z, Basis::Z, 0, 0), 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(d.get(Basis::Z, Basis::Z, 0, 1), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.total(), 1.0, epsilon = 1e-12);
    }

    /// Independent route: build the 4x4 state by hand as a Werner/rotated mixture and
    /// sum |<x y|psi>|^2 terms directly from state vectors.
    fn brute_force_qber(theta: f64, q: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        // (I (x) U)|phi+> = (|0>(c|0> + s|1>) + |1>(-s|0> + c|1>)) / sqrt 2
        let psi = [h * c, h * s, -h * s, h * c];
        let mut err = 0.0;
        let mut tot = 0.0;
        for basis in Basis::ALL {
            for x in 0..2u8 {
                for y in 0..2u8 {
                    let ka = basis.ket(x);
                    let kb = basis.ket(y);
                    let mut amp = 0.0;
                    for a in 0..2 {
                        for b in 0..2 {
                            amp += ka[a].re * kb[b].re * psi[2 * a + b];
                        }
                    }
                    // Pure part weight (1 - q); mixed part contributes q/4 per outcome pair.
                    let p = 0.25 * ((1.0 - q) * amp * amp + q * 0.25);
                    tot += p;
                    if x != y {
                        err += p;
                    }
                }
            }
        }
        err / tot
    }

    #[test]
    fn analytic_qber_values() {
        assert_abs_diff_eq!(analytic_qber(ChannelParams::perfect()).unwrap(), 0.0, epsilon = 1e-15);
        for q in [0.1, 0.3, 0.77] {
            assert_abs_diff_eq!(analytic_qber(ChannelParams::new(0.0, q).unwrap()).unwrap(), q / 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn grid_invariants() {
        let povm = PovmSet::default();
        for p in grid() {
            let rho = channel_state(p).unwrap();
            assert!((rho.trace().re - 1.0).abs() < 1e-12);
            assert!(rho.eigenvalues()[0] >= -1e-12);
            let d = outcome_distribution(&rho, &povm).unwrap();
            assert!((d.total() - 1.0).abs() < 1e-12);
            assert!((d.conditional_error(Basis::Z) - d.conditional_error(Basis::X)).abs() < 1e-12);
            let closed = (1.0 - p.q) * p.theta.sin().powi(2) + p.q / 2.0;
            assert!((d.matched_error() - closed).abs() < 1e-12);
            assert!((brute_force_qber(p.theta, p.q) - closed).abs() < 1e-12);
        }
    }
}
