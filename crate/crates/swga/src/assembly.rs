//! Assembly of the Galerkin system: the diffusion matrix `A1`, the cost
//! projection `b1` and the control coupling family `M^gamma`, all from
//! closed-form Haar integrals.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::integrals::{pair_integral, CgTable, QuadratureRule, DEFAULT_BAND_LIMIT};
use crate::so3::{Mat3, Rotation, Vec3};
use crate::wigner::{lie_derivative_expansion, Basis, BasisEval, BasisId, Part};

/// Noise directions `sigma_k` stored as the rows of a 3x3 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    sigma: Mat3,
}

impl NoiseModel {
    pub fn new(sigma: Mat3) -> Self {
        NoiseModel { sigma }
    }

    /// `sigma = gamma I`: three orthogonal noise axes of equal strength.
    pub fn isotropic(gamma: f64) -> Self {
        NoiseModel { sigma: Mat3::identity() * gamma }
    }

    pub fn zero() -> Self {
        NoiseModel { sigma: Mat3::zeros() }
    }

    pub fn sigma(&self) -> &Mat3 {
        &self.sigma
    }

    /// `sigma_k` as a vector.
    pub fn direction(&self, k: usize) -> Vec3 {
        self.sigma.row(k).transpose()
    }

    /// The pinning matrix `Sigma = tr(sigma sigma^T) I - sigma sigma^T`,
    /// symmetric positive semidefinite; the Ito drift is `-1/2 R Sigma`.
    pub fn pinning_matrix(&self) -> Mat3 {
        let ss = self.sigma * self.sigma.transpose();
        Mat3::identity() * ss.trace() - ss
    }
}

/// Fourier coefficients `L_p` of a running cost, in expansion normalization:
/// `l(R) = sum_p L_p D_p(R)`, so `L_p = (2l+1) <l, D_p>`.
#[derive(Clone, Debug)]
pub struct CostSpectrum {
    l_max: u32,
    coeffs: Vec<Complex64>,
}

impl CostSpectrum {
    pub fn l_max(&self) -> u32 {
        self.l_max
    }

    pub fn get(&self, basis: &Basis, p: crate::wigner::WignerIndex) -> Complex64 {
        if p.l > self.l_max {
            return Complex64::new(0.0, 0.0);
        }
        self.coeffs[basis.rank(p)]
    }

    /// Partial sum `sum_p L_p D_p(R)`; real within truncation error for a
    /// real cost.
    pub fn reconstruct(&self, basis: &Basis, r: &Rotation) -> Result<Complex64> {
        let eval = BasisEval::new(basis, r)?;
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, p) in basis.indices().iter().enumerate() {
            let d = Complex64::new(eval.part_value(*p, Part::Re), -eval.part_value(*p, Part::Im));
            acc += self.coeffs[k] * d;
        }
        Ok(acc)
    }
}

/// Projects a running cost onto the Wigner-D basis by quadrature.
pub fn cost_spectrum<F>(mut l_fn: F, l_max: u32, rule: &QuadratureRule) -> Result<CostSpectrum>
where
    F: FnMut(&Rotation) -> f64,
{
    let basis = Basis::new(l_max);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); basis.n_pairs()];
    for (j, &z) in rule.z_nodes.iter().enumerate() {
        let beta = z.clamp(-1.0, 1.0).acos();
        let w = rule.node_weight(j);
        for &alpha in &rule.angle_nodes {
            for &gamma in &rule.angle_nodes {
                let r = crate::so3::from_zyz(crate::so3::EulerZyz::new(alpha, beta, gamma));
                let f = l_fn(&r) * w;
                let eval = BasisEval::at_angles(&basis, alpha, z, gamma)?;
                for (k, p) in basis.indices().iter().enumerate() {
                    // conj(D_p) accumulated against the sample
                    let conj_d = Complex64::new(
                        eval.part_value(*p, Part::Re),
                        eval.part_value(*p, Part::Im),
                    );
                    coeffs[k] += conj_d * f;
                }
            }
        }
    }
    for (k, p) in basis.indices().iter().enumerate() {
        coeffs[k] *= 2.0 * p.l as f64 + 1.0;
    }
    Ok(CostSpectrum { l_max, coeffs })
}

/// `[b1]_beta = -<l, phi_beta>` evaluated from the spectrum.
pub fn compute_b1(spectrum: &CostSpectrum, basis: &Basis, beta: BasisId) -> f64 {
    let (q, part) = basis.index_of(beta);
    let lq = spectrum.get(basis, q);
    let (qf, sign) = crate::wigner::flip(q);
    let lqf = spectrum.get(basis, qf);
    let scale = 0.5 / (2.0 * q.l as f64 + 1.0);
    // <l, phi> = (L_q + s L_qf) / (2(2l+1)) for real parts and the
    // -j (L_q - s L_qf) analogue for imaginary parts; real under the
    // spectrum's reality symmetry.
    let inner = match part {
        Part::Re => ((lq + lqf * sign) * scale).re,
        Part::Im => ((lq - lqf * sign) * Complex64::new(0.0, -1.0) * scale).re,
    };
    -inner
}

/// `<L_a phi_alpha, phi_beta>` from the symbolic expansion and the
/// closed-form pair integrals.
pub fn lie_inner(basis: &Basis, a: Vec3, alpha: BasisId, beta: BasisId) -> f64 {
    let (p, part_p) = basis.index_of(alpha);
    let (q, part_q) = basis.index_of(beta);
    let exp = lie_derivative_expansion(p, a, part_p);
    exp.terms
        .iter()
        .filter(|t| t.coeff != 0.0)
        .map(|t| t.coeff * pair_integral(t.index, t.part, q, part_q))
        .sum()
}

/// `[A1]_{beta,alpha} = -1/2 sum_k <L_{sigma_k} phi_alpha, L_{sigma_k} phi_beta>`.
pub fn compute_a1_entry(basis: &Basis, alpha: BasisId, beta: BasisId, noise: &NoiseModel) -> f64 {
    let (p, part_p) = basis.index_of(alpha);
    let (q, part_q) = basis.index_of(beta);
    a1_entry_inner(p, part_p, q, part_q, noise)
}

fn a1_entry_inner(
    p: crate::wigner::WignerIndex,
    part_p: Part,
    q: crate::wigner::WignerIndex,
    part_q: Part,
    noise: &NoiseModel,
) -> f64 {
    // Lie derivatives preserve the degree and the row index m, so
    // orthogonality forces zero unless the degrees match and m_p = +- m_q.
    if p.l != q.l || (p.m != q.m && p.m != -q.m) {
        return 0.0;
    }
    if (p.n - q.n).abs() > 2 && (p.n + q.n).abs() > 2 {
        return 0.0;
    }
    let mut acc = 0.0;
    for k in 0..3 {
        let dir = noise.direction(k);
        if dir == Vec3::zeros() {
            continue;
        }
        let ep = lie_derivative_expansion(p, dir, part_p);
        let eq = lie_derivative_expansion(q, dir, part_q);
        for tp in ep.terms.iter().filter(|t| t.coeff != 0.0) {
            for tq in eq.terms.iter().filter(|t| t.coeff != 0.0) {
                acc += tp.coeff * tq.coeff * pair_integral(tp.index, tp.part, tq.index, tq.part);
            }
        }
    }
    -0.5 * acc
}

/// Symmetric inverse square root of an SPD matrix.
///
/// Rejects matrices that are not symmetric positive definite or whose
/// condition number exceeds `1e12`.
pub fn w_inv_sqrt(w: &Mat3) -> Result<Mat3> {
    if (w - w.transpose()).norm() > 1e-12 * w.norm().max(1.0) {
        return Err(Error::NotSpd { what: "control weight is not symmetric".into() });
    }
    let eigen = SymmetricEigen::new(*w);
    let max = eigen.eigenvalues.max();
    let min = eigen.eigenvalues.min();
    if min <= 0.0 {
        return Err(Error::NotSpd {
            what: format!("control weight has eigenvalue {min:.3e} <= 0"),
        });
    }
    if max / min > 1e12 {
        return Err(Error::NotSpd {
            what: format!("control weight condition number {:.3e} too large", max / min),
        });
    }
    let mut d = Mat3::zeros();
    for i in 0..3 {
        d[(i, i)] = 1.0 / eigen.eigenvalues[i].sqrt();
    }
    Ok(eigen.eigenvectors * d * eigen.eigenvectors.transpose())
}

/// `[M^gamma]_{beta,alpha} = <grad phi_alpha^T W^{-1} grad phi_gamma, phi_beta>`.
pub fn compute_m_entry(
    basis: &Basis,
    alpha: BasisId,
    beta: BasisId,
    gamma: BasisId,
    w: &Mat3,
) -> Result<f64> {
    let wt = w_inv_sqrt(w)?;
    let cg = CgTable::new(basis.l_max());
    let rows = [wt.row(0).transpose(), wt.row(1).transpose(), wt.row(2).transpose()];
    Ok(m_entry_inner(basis, &cg, alpha, beta, gamma, &rows))
}

fn m_entry_inner(
    basis: &Basis,
    cg: &CgTable,
    alpha: BasisId,
    beta: BasisId,
    gamma: BasisId,
    wt_rows: &[Vec3; 3],
) -> f64 {
    let (p, part_p) = basis.index_of(alpha);
    let (q, part_q) = basis.index_of(beta);
    let (r, part_r) = basis.index_of(gamma);

    // Entry-level selection rules. The triple integral couples m indices
    // without shifts and n indices within the +-1 windows of the two
    // Lie-derivative expansions.
    if q.l + p.l.min(r.l) < p.l.max(r.l) || q.l > p.l + r.l {
        return 0.0;
    }
    let m_ok = q.m == p.m + r.m || -q.m == p.m + r.m || r.m == p.m + q.m || p.m == r.m + q.m;
    if !m_ok {
        return 0.0;
    }
    let n_ok = (q.n - (p.n + r.n)).abs() <= 2
        || (q.n + (p.n + r.n)).abs() <= 2
        || (q.n - (r.n - p.n)).abs() <= 2
        || (q.n - (p.n - r.n)).abs() <= 2;
    if !n_ok {
        return 0.0;
    }

    let mut acc = 0.0;
    for row in wt_rows {
        let ep = lie_derivative_expansion(p, *row, part_p);
        let er = lie_derivative_expansion(r, *row, part_r);
        for tp in ep.terms.iter().filter(|t| t.coeff != 0.0) {
            for tr in er.terms.iter().filter(|t| t.coeff != 0.0) {
                acc += tp.coeff
                    * tr.coeff
                    * cg.triple_parts(tp.index, tp.part, tr.index, tr.part, q, part_q);
            }
        }
    }
    acc
}

/// Pre-assembled matrices of the Galerkin policy iteration.
///
/// `a1` carries the `epsilon I` regularization already applied; `m` holds one
/// `2N x 2N` matrix per basis id gamma.
#[derive(Clone, Debug)]
pub struct GalerkinSystem {
    basis: Basis,
    sigma: Mat3,
    w: Mat3,
    epsilon: f64,
    a1: DMatrix<f64>,
    b1: DVector<f64>,
    m: Vec<DMatrix<f64>>,
}

impl GalerkinSystem {
    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn sigma(&self) -> &Mat3 {
        &self.sigma
    }

    pub fn w(&self) -> &Mat3 {
        &self.w
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Regularized diffusion matrix `A1 + epsilon I`.
    pub fn a1(&self) -> &DMatrix<f64> {
        &self.a1
    }

    pub fn b1(&self) -> &DVector<f64> {
        &self.b1
    }

    pub fn m(&self) -> &[DMatrix<f64>] {
        &self.m
    }

    pub fn dim(&self) -> usize {
        self.b1.len()
    }

    /// Restriction to the leading `2n` basis functions, used by the
    /// basis-truncation sweep.
    pub fn truncate(&self, n_pairs: usize) -> GalerkinSystem {
        let dim = (2 * n_pairs).min(self.dim());
        GalerkinSystem {
            basis: self.basis.clone(),
            sigma: self.sigma,
            w: self.w,
            epsilon: self.epsilon,
            a1: self.a1.view((0, 0), (dim, dim)).into_owned(),
            b1: self.b1.rows(0, dim).into_owned(),
            m: self.m[..dim].iter().map(|m| m.view((0, 0), (dim, dim)).into_owned()).collect(),
        }
    }
}

/// Assembles `A1` (pre-regularization) for the whole basis.
pub fn assemble_a1(basis: &Basis, noise: &NoiseModel) -> DMatrix<f64> {
    let dim = basis.len();
    let entries: Vec<Vec<f64>> = (0..dim)
        .into_par_iter()
        .map(|row| {
            let beta = BasisId::new(row + 1);
            (0..dim)
                .map(|col| compute_a1_entry(basis, BasisId::new(col + 1), beta, noise))
                .collect()
        })
        .collect();
    DMatrix::from_fn(dim, dim, |r, c| entries[r][c])
}

/// Assembles `b1` from a cost spectrum.
pub fn assemble_b1(basis: &Basis, spectrum: &CostSpectrum) -> DVector<f64> {
    DVector::from_fn(basis.len(), |row, _| {
        compute_b1(spectrum, basis, BasisId::new(row + 1))
    })
}

/// Assembles the full `M^gamma` family.
pub fn assemble_m(basis: &Basis, w: &Mat3) -> Result<Vec<DMatrix<f64>>> {
    let wt = w_inv_sqrt(w)?;
    let rows = [wt.row(0).transpose(), wt.row(1).transpose(), wt.row(2).transpose()];
    let cg = CgTable::new(basis.l_max());
    let dim = basis.len();
    Ok((0..dim)
        .into_par_iter()
        .map(|g| {
            let gamma = BasisId::new(g + 1);
            DMatrix::from_fn(dim, dim, |row, col| {
                m_entry_inner(basis, &cg, BasisId::new(col + 1), BasisId::new(row + 1), gamma, &rows)
            })
        })
        .collect())
}

/// Assembles the complete Galerkin system for a running cost given as a
/// plain function on the group.
pub fn assemble<F>(
    l_max: u32,
    noise: &NoiseModel,
    w: &Mat3,
    l_fn: F,
    epsilon: f64,
) -> Result<GalerkinSystem>
where
    F: FnMut(&Rotation) -> f64,
{
    if epsilon < 0.0 {
        return Err(Error::InvalidConfig(format!("epsilon = {epsilon} must be nonnegative")));
    }
    let basis = Basis::new(l_max);
    let rule = QuadratureRule::new(DEFAULT_BAND_LIMIT.max(l_max));
    let spectrum = cost_spectrum(l_fn, l_max, &rule)?;
    let mut a1 = assemble_a1(&basis, noise);
    for i in 0..a1.nrows() {
        a1[(i, i)] += epsilon;
    }
    let b1 = assemble_b1(&basis, &spectrum);
    let m = assemble_m(&basis, w)?;
    Ok(GalerkinSystem { basis, sigma: *noise.sigma(), w: *w, epsilon, a1, b1, m })
}

const SYSTEM_MAGIC: &[u8; 8] = b"SWGASYS\0";
const SYSTEM_VERSION: u32 = 1;

impl GalerkinSystem {
    /// Writes the system in the versioned little-endian binary layout; matrix
    /// payloads round-trip bit-exactly.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(SYSTEM_MAGIC)?;
        out.write_all(&SYSTEM_VERSION.to_le_bytes())?;
        out.write_all(&self.basis.l_max().to_le_bytes())?;
        out.write_all(&(self.dim() as u64).to_le_bytes())?;
        for v in self.sigma.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
        for v in self.w.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
        out.write_all(&self.epsilon.to_le_bytes())?;
        for v in self.b1.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
        for v in self.a1.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
        for m in &self.m {
            for v in m.iter() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<GalerkinSystem> {
        let mut inp = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        inp.read_exact(&mut magic)?;
        if &magic != SYSTEM_MAGIC {
            return Err(Error::Format("bad magic in system file".into()));
        }
        let version = read_u32(&mut inp)?;
        if version != SYSTEM_VERSION {
            return Err(Error::Format(format!("unsupported system version {version}")));
        }
        let l_max = read_u32(&mut inp)?;
        let dim = read_u64(&mut inp)? as usize;
        let basis = Basis::new(l_max);
        if dim != basis.len() {
            return Err(Error::Format(format!(
                "dimension {dim} does not match basis size {}",
                basis.len()
            )));
        }
        let mut sigma = Mat3::zeros();
        for i in 0..9 {
            sigma[i] = read_f64(&mut inp)?;
        }
        let mut w = Mat3::zeros();
        for i in 0..9 {
            w[i] = read_f64(&mut inp)?;
        }
        let epsilon = read_f64(&mut inp)?;
        let mut b1 = DVector::zeros(dim);
        for i in 0..dim {
            b1[i] = read_f64(&mut inp)?;
        }
        let mut a1 = DMatrix::zeros(dim, dim);
        for i in 0..dim * dim {
            a1[i] = read_f64(&mut inp)?;
        }
        let mut m = Vec::with_capacity(dim);
        for _ in 0..dim {
            let mut mg = DMatrix::zeros(dim, dim);
            for i in 0..dim * dim {
                mg[i] = read_f64(&mut inp)?;
            }
            m.push(mg);
        }
        Ok(GalerkinSystem { basis, sigma, w, epsilon, a1, b1, m })
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// The stabilization running cost `l(R) = 3 - tr(R)`.
pub fn trace_gap_cost(r: &Rotation) -> f64 {
    3.0 - r.trace()
}
