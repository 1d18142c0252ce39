//! Key-rate objectives.
//!
//! `f(rho) = D(G(rho) || Z(G(rho)))` where `G` applies the sifting/measurement Kraus
//! operators and `Z` pinches the key register. The primed objective adds the public
//! error syndrome `w = x xor y` as an announcement, which is what a two-way
//! reconciliation such as Cascade effectively reveals.
//!
//! `G(rho)` is stored as a direct sum over announcement labels. Each block lives on
//! `Z(2) (x) Y(2) (x) AB(4)`, so all matrices stay 16x16.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{Basis, ComplexMatrix, DensityOperator, PovmSet, C64};

/// Eigenvalues at or below this are treated as outside the support.
pub const EIGEN_CUTOFF: f64 = 1e-12;

const KEY_DIM: usize = 2;
const BLOCK_DIM: usize = 16;
const SECTOR: usize = BLOCK_DIM / KEY_DIM;

/// h(e) in bits, with 0 log 0 = 0.
pub fn binary_entropy(e: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&e) {
        return Err(Error::param("e", format!("{e} not in [0, 1]")));
    }
    let term = |p: f64| if p <= 0.0 { 0.0 } else { -p * p.log2() };
    Ok(term(e) + term(1.0 - e))
}

/// Analytic Alice-to-Bob leak per raw-key bit, `f_eff * h(e)`.
pub fn delta_leak_analytic(f_eff: f64, e: f64) -> Result<f64> {
    if !(f_eff >= 1.0) || !f_eff.is_finite() {
        return Err(Error::param("f_eff", format!("{f_eff} < 1 would beat the Shannon limit")));
    }
    if !(0.0..=0.5).contains(&e) {
        return Err(Error::param("e", format!("{e} not in [0, 0.5]")));
    }
    Ok(f_eff * binary_entropy(e)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Basis announcements only.
    F,
    /// Basis announcements plus the error syndrome w = x xor y.
    FPrime,
}

/// Public data attached to one Kraus operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Announcement {
    pub basis: Basis,
    pub syndrome: Option<u8>,
}

#[derive(Clone, Debug)]
pub struct KrausOperator {
    pub label: Announcement,
    /// 16 x 4 map from AB into Z (x) Y (x) AB.
    pub operator: ComplexMatrix,
}

#[derive(Clone, Debug)]
pub struct KrausSet {
    pub variant: Variant,
    pub blocks: Vec<KrausOperator>,
}

impl KrausSet {
    /// Sum of K^dagger K over all blocks.
    pub fn gram(&self) -> ComplexMatrix {
        self.blocks
            .iter()
            .fold(ComplexMatrix::zeros(4, 4), |acc, k| acc.add(&k.operator.adjoint().matmul(&k.operator)))
    }
}

/// Kraus operators for the matched-basis announcements, identity key map r(alpha, x) = x.
pub fn build_kraus(variant: Variant, povm: &PovmSet) -> KrausSet {
    let mut blocks = Vec::new();
    for basis in Basis::ALL {
        let sqrt_a: Vec<ComplexMatrix> = (0..2u8).map(|x| povm.element(basis, x).psd_sqrt()).collect();
        let sqrt_b = sqrt_a.clone();
        let syndromes: &[Option<u8>] = match variant {
            Variant::F => &[None],
            Variant::FPrime => &[Some(0), Some(1)],
        };
        for &syndrome in syndromes {
            let mut op = ComplexMatrix::zeros(BLOCK_DIM, 4);
            for x in 0..2u8 {
                for y in 0..2u8 {
                    if syndrome.is_some_and(|w| w != x ^ y) {
                        continue;
                    }
                    let local = sqrt_a[x as usize].kron(&sqrt_b[y as usize]);
                    let offset = x as usize * SECTOR + y as usize * 4;
                    for r in 0..4 {
                        for c in 0..4 {
                            op.set(offset + r, c, local.get(r, c));
                        }
                    }
                }
            }
            blocks.push(KrausOperator { label: Announcement { basis, syndrome }, operator: op });
        }
    }
    KrausSet { variant, blocks }
}

/// Direct sum of subnormalized blocks, one per announcement.
#[derive(Clone, Debug)]
pub struct BlockState {
    pub blocks: Vec<(Announcement, ComplexMatrix)>,
}

impl BlockState {
    pub fn trace(&self) -> f64 {
        self.blocks.iter().map(|(_, m)| m.trace().re).sum()
    }

    /// The full block-diagonal matrix.
    pub fn assemble(&self) -> ComplexMatrix {
        let n: usize = self.blocks.iter().map(|(_, m)| m.dim()).sum();
        let mut out = ComplexMatrix::zeros(n, n);
        let mut offset = 0;
        for (_, m) in &self.blocks {
            for r in 0..m.dim() {
                for c in 0..m.dim() {
                    out.set(offset + r, offset + c, m.get(r, c));
                }
            }
            offset += m.dim();
        }
        out
    }
}

pub fn g_map(rho: &DensityOperator, kraus: &KrausSet) -> Result<BlockState> {
    if !rho.is_square() || rho.dim() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, actual: rho.rows() });
    }
    Ok(BlockState {
        blocks: kraus.blocks.iter().map(|k| (k.label, rho.conjugate_by(&k.operator))).collect(),
    })
}

/// Pinching on the key register: drops coherences between the Z = 0 and Z = 1 sectors.
pub fn z_map(sigma: &BlockState) -> BlockState {
    BlockState {
        blocks: sigma
            .blocks
            .iter()
            .map(|(label, m)| {
                let sector = m.dim() / KEY_DIM;
                let pinched = ComplexMatrix::from_fn(m.dim(), m.dim(), |r, c| {
                    if r / sector == c / sector { m.get(r, c) } else { C64::new(0.0, 0.0) }
                });
                (*label, pinched)
            })
            .collect(),
    }
}

/// D(X || Y) = Tr X log2 X - Tr X log2 Y for PSD X, Y.
pub fn relative_entropy(x: &ComplexMatrix, y: &ComplexMatrix) -> Result<f64> {
    if !x.is_square() || !y.is_square() || x.dim() != y.dim() {
        return Err(Error::DimensionMismatch { expected: x.rows(), actual: y.rows() });
    }
    let (x_vals, _) = x.eigh();
    let x_log_x: f64 = x_vals.iter().filter(|&&v| v > EIGEN_CUTOFF).map(|&v| v * v.log2()).sum();

    let (y_vals, y_vecs) = y.eigh();
    let mut x_log_y = 0.0;
    for (j, &mu) in y_vals.iter().enumerate() {
        // <v_j| X |v_j>
        let mut overlap = C64::new(0.0, 0.0);
        for r in 0..x.dim() {
            let vr = y_vecs.get(r, j).conj();
            if vr.norm() == 0.0 {
                continue;
            }
            for c in 0..x.dim() {
                overlap += vr * x.get(r, c) * y_vecs.get(c, j);
            }
        }
        let overlap = overlap.re;
        if mu > EIGEN_CUTOFF {
            x_log_y += overlap * mu.log2();
        } else if overlap > 1e-10 {
            return Err(Error::SupportViolation { overlap });
        }
    }
    let d = x_log_x - x_log_y;
    if !d.is_finite() {
        return Err(Error::NonFinite("relative entropy".into()));
    }
    Ok(d)
}

/// f(rho) (variant F) or f'(rho) (variant FPrime), in bits per transmitted signal.
pub fn objective(rho: &DensityOperator, variant: Variant) -> Result<f64> {
    objective_with(rho, &build_kraus(variant, &PovmSet::default()))
}

pub fn objective_with(rho: &DensityOperator, kraus: &KrausSet) -> Result<f64> {
    let g = g_map(rho, kraus)?;
    let z = z_map(&g);
    g.blocks
        .iter()
        .zip(&z.blocks)
        .map(|((_, gb), (_, zb))| relative_entropy(gb, zb))
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyRateReport {
    pub qber: Option<f64>,
    pub binary_entropy: Option<f64>,
    /// f(rho): secret bits per transmitted signal before error correction.
    pub entropy_per_signal: f64,
    /// f(rho) / p_pass.
    pub entropy_per_sifted: f64,
    /// f'(rho), when evaluated.
    pub entropy_per_signal_prime: Option<f64>,
    pub p_pass: f64,
    pub delta_leak: f64,
    /// entropy_per_signal - p_pass * delta_leak.
    pub rate: f64,
    pub rate_per_sifted: f64,
    pub repetition_rate: f64,
    pub rate_bps: f64,
    /// f'(rho) - p_pass * delta_leak.
    pub rate_prime: Option<f64>,
    /// F - F'.
    pub gap: Option<f64>,
    pub gap_bps: Option<f64>,
}

pub fn key_rate(entropy_term: f64, p_pass: f64, delta_leak: f64, repetition_rate: f64) -> Result<KeyRateReport> {
    for (name, v) in [("entropy_term", entropy_term), ("delta_leak", delta_leak), ("repetition_rate", repetition_rate)] {
        if !v.is_finite() {
            return Err(Error::NonFinite(name.into()));
        }
    }
    if !(0.0..=1.0).contains(&p_pass) {
        return Err(Error::param("p_pass", format!("{p_pass} not in [0, 1]")));
    }
    let rate = entropy_term - p_pass * delta_leak;
    let per_sifted = |v: f64| if p_pass > 0.0 { v / p_pass } else { 0.0 };
    Ok(KeyRateReport {
        qber: None,
        binary_entropy: None,
        entropy_per_signal: entropy_term,
        entropy_per_sifted: per_sifted(entropy_term),
        entropy_per_signal_prime: None,
        p_pass,
        delta_leak,
        rate,
        rate_per_sifted: per_sifted(rate),
        repetition_rate,
        rate_bps: repetition_rate * rate,
        rate_prime: None,
        gap: None,
        gap_bps: None,
    })
}

impl KeyRateReport {
    /// Attaches the primed objective and the rate gap R_r (F - F').
    pub fn with_prime(mut self, f_prime: f64) -> Self {
        let gap = self.entropy_per_signal - f_prime;
        self.entropy_per_signal_prime = Some(f_prime);
        self.rate_prime = Some(f_prime - self.p_pass * self.delta_leak);
        self.gap = Some(gap);
        self.gap_bps = Some(self.repetition_rate * gap);
        self
    }
}

/// Full report for a simulated channel: QBER, both objectives, leak from `f_eff * h(e)`.
pub fn evaluate_channel(params: crate::quantum::ChannelParams, f_eff: f64, repetition_rate: f64) -> Result<KeyRateReport> {
    let rho = crate::quantum::channel_state(params)?;
    let povm = PovmSet::default();
    let e = crate::quantum::outcome_distribution(&rho, &povm)?.matched_error();
    let f = objective(&rho, Variant::F)?;
    let f_prime = objective(&rho, Variant::FPrime)?;
    let leak = delta_leak_analytic(f_eff, e.min(0.5))?;
    let mut report = key_rate(f, povm.p_pass(), leak, repetition_rate)?.with_prime(f_prime);
    report.qber = Some(e);
    report.binary_entropy = Some(binary_entropy(e)?);
    Ok(report)
}

/// Secret entropy per sifted bit, f(rho) / p_pass, at the given channel.
pub fn entropy_rate_per_sifted(params: crate::quantum::ChannelParams) -> Result<f64> {
    let rho = crate::quantum::channel_state(params)?;
    let f = objective(&rho, Variant::F)?;
    Ok((f / PovmSet::default().p_pass()).max(0.0))
}

/// Checks sum K^dagger K against p_pass * I.
pub fn completeness_error(kraus: &KrausSet, p_pass: f64) -> f64 {
    kraus.gram().max_abs_diff(&ComplexMatrix::identity(4).scale(p_pass))
}
