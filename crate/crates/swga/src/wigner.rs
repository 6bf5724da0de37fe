//! Wigner-D matrix elements, the real basis on SO(3), Clebsch-Gordan
//! coefficients and symbolic Lie derivatives of basis functions.
//!
//! # Conventions
//!
//! In ZYZ angles, `D^l_{m,n}(R(a, b, g)) = e^{-i m a} d^l_{m,n}(cos b) e^{-i n g}`.
//! The small-d function is pinned by `d = P` on the sector `m >= |n|`, where
//! `P` is the terminating hypergeometric form, and extended everywhere by the
//! symmetries `d_{-m,-n} = (-1)^{m-n} d_{m,n}` and `d_{m,n} = (-1)^{m-n} d_{n,m}`.
//! Equivalently, `d` here is the transpose of the convention that attaches a
//! `(-1)^{m-n}` phase to `P`. References disagree on that phase; this is the
//! unique choice under which the five-term Lie-derivative expansion of
//! [`lie_derivative_expansion`] is exact, which the finite-difference suite
//! checks directly.
//!
//! Complex matrix elements are split as `D_p = D_p^R - j D_p^I`, so the `Im`
//! part tracked throughout this crate is the *negated* imaginary part.

use std::f64::consts::LN_2;
use std::sync::LazyLock;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::so3::{to_zyz, Rotation, Vec3};

/// One matrix element `(l, m, n)` of an irreducible representation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WignerIndex {
    pub l: u32,
    pub m: i32,
    pub n: i32,
}

impl WignerIndex {
    pub fn new(l: u32, m: i32, n: i32) -> Self {
        WignerIndex { l, m, n }
    }

    pub fn is_valid(&self) -> bool {
        self.m.unsigned_abs() <= self.l && self.n.unsigned_abs() <= self.l
    }

    /// `(l, m, n+1)`, the raising partner.
    pub fn raised(&self) -> Self {
        WignerIndex::new(self.l, self.m, self.n + 1)
    }

    /// `(l, m, n-1)`, the lowering partner.
    pub fn lowered(&self) -> Self {
        WignerIndex::new(self.l, self.m, self.n - 1)
    }

    /// `(l, -m, -n)`.
    pub fn conjugate_partner(&self) -> Self {
        WignerIndex::new(self.l, -self.m, -self.n)
    }
}

/// Real or (negated) imaginary part of a Wigner-D function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Part {
    Re,
    Im,
}

impl Part {
    pub fn other(self) -> Part {
        match self {
            Part::Re => Part::Im,
            Part::Im => Part::Re,
        }
    }
}

/// Index of one real basis function, `1..=2N`.
///
/// Odd ids are real parts, even ids negated imaginary parts, of the
/// Wigner-D function whose lexicographic rank over `(l, m, n)` is
/// `ceil(id/2)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BasisId(usize);

impl BasisId {
    pub fn new(id: usize) -> Self {
        assert!(id >= 1, "basis ids are 1-based");
        BasisId(id)
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// Zero-based rank of the underlying complex index.
    pub fn pair_rank(self) -> usize {
        (self.0 - 1) / 2
    }

    pub fn part(self) -> Part {
        if self.0 % 2 == 1 {
            Part::Re
        } else {
            Part::Im
        }
    }
}

static LN_FACTORIAL: LazyLock<Vec<f64>> = LazyLock::new(|| {
    let mut t = vec![0.0f64; 256];
    for k in 2..t.len() {
        t[k] = t[k - 1] + (k as f64).ln();
    }
    t
});

fn ln_factorial(k: i64) -> f64 {
    debug_assert!(k >= 0, "negative factorial argument");
    LN_FACTORIAL[k as usize]
}

/// `sqrt((l-n)(l+n+1))`, the raising coefficient; zero when `n = l`.
pub fn raise_coeff(p: WignerIndex) -> f64 {
    let (l, n) = (p.l as f64, p.n as f64);
    ((l - n) * (l + n + 1.0)).max(0.0).sqrt()
}

/// `sqrt((l+n)(l-n+1))`, the lowering coefficient; zero when `n = -l`.
pub fn lower_coeff(p: WignerIndex) -> f64 {
    let (l, n) = (p.l as f64, p.n as f64);
    ((l + n) * (l - n + 1.0)).max(0.0).sqrt()
}

/// Maps `p` to `(l, -m, -n)` together with the sign `(-1)^{m-n}` relating the
/// two small-d values.
pub fn flip(p: WignerIndex) -> (WignerIndex, f64) {
    let sign = if (p.m - p.n).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    (p.conjugate_partner(), sign)
}

/// Terminating hypergeometric form, valid on the sector `m >= |n|`.
fn small_d_sector(l: i64, m: i64, n: i64, z: f64) -> f64 {
    debug_assert!(m >= n.abs() && m <= l);
    let ln_pref = 0.5
        * (ln_factorial(l - n) + ln_factorial(l + m)
            - ln_factorial(l - m)
            - ln_factorial(l + n))
        - m as f64 * LN_2
        - ln_factorial(m - n);
    let angular = (1.0 - z).powf(0.5 * (m - n) as f64) * (1.0 + z).powf(0.5 * (m + n) as f64);

    // 2F1(l+m+1, m-l; m-n+1; (1-z)/2) terminates after l-m+1 terms.
    let x = 0.5 * (1.0 - z);
    let (a, b, c) = ((l + m + 1) as f64, (m - l) as f64, (m - n + 1) as f64);
    let mut sum = 1.0;
    let mut term = 1.0;
    for k in 0..(l - m) {
        let kf = k as f64;
        term *= (a + kf) * (b + kf) * x / ((c + kf) * (kf + 1.0));
        sum += term;
    }
    ln_pref.exp() * angular * sum
}

/// Wigner small-d function `d^l_{m,n}(z)` for `z = cos(beta)`.
///
/// Rejects `|z| > 1 + 1e-12`; values inside the roundoff band are clamped.
pub fn little_d(p: WignerIndex, z: f64) -> Result<f64> {
    if z.abs() > 1.0 + 1e-12 {
        return Err(Error::OutOfRange {
            what: format!("little_d argument |z| = {} > 1", z.abs()),
        });
    }
    debug_assert!(p.is_valid(), "invalid Wigner index {p:?}");
    let z = z.clamp(-1.0, 1.0);
    let (l, m, n) = (p.l as i64, p.m as i64, p.n as i64);
    // Reduce to m >= |n| using the flip and exchange symmetries; the closed
    // form holds there with nonnegative half-integer exponents.
    let (mm, nn, sign) = if m.abs() >= n.abs() {
        if m >= 0 {
            (m, n, 1.0)
        } else {
            (-m, -n, parity(m - n))
        }
    } else if n >= 0 {
        (n, m, parity(m - n))
    } else {
        (-n, -m, 1.0)
    };
    Ok(sign * small_d_sector(l, mm, nn, z))
}

fn parity(k: i64) -> f64 {
    if k.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Full Wigner-D matrix element at a rotation.
pub fn wigner_d(p: WignerIndex, r: &Rotation) -> Result<Complex64> {
    let angles = to_zyz(r);
    let d = little_d(p, angles.beta.cos())?;
    let phase_m = Complex64::from_polar(1.0, -(p.m as f64) * angles.alpha);
    let phase_n = Complex64::from_polar(1.0, -(p.n as f64) * angles.gamma);
    Ok(phase_m * d * phase_n)
}

/// Clebsch-Gordan coefficient `C(l1 m1; l2 m2 | l3 m3)` by Racah's sum.
///
/// Returns zero outside the selection rules `m3 = m1 + m2` and
/// `|l1 - l2| <= l3 <= l1 + l2`.
pub fn clebsch_gordan(l1: u32, m1: i32, l2: u32, m2: i32, l3: u32, m3: i32) -> f64 {
    if m1.unsigned_abs() > l1 || m2.unsigned_abs() > l2 || m3.unsigned_abs() > l3 {
        return 0.0;
    }
    if m3 != m1 + m2 {
        return 0.0;
    }
    let (l1, m1) = (l1 as i64, m1 as i64);
    let (l2, m2) = (l2 as i64, m2 as i64);
    let (l3, m3) = (l3 as i64, m3 as i64);
    if l3 < (l1 - l2).abs() || l3 > l1 + l2 {
        return 0.0;
    }

    let ln_delta = ln_factorial(l1 + l2 - l3) + ln_factorial(l1 - l2 + l3)
        + ln_factorial(-l1 + l2 + l3)
        - ln_factorial(l1 + l2 + l3 + 1);
    let ln_norm = 0.5
        * (((2 * l3 + 1) as f64).ln()
            + ln_delta
            + ln_factorial(l3 + m3)
            + ln_factorial(l3 - m3)
            + ln_factorial(l1 - m1)
            + ln_factorial(l1 + m1)
            + ln_factorial(l2 - m2)
            + ln_factorial(l2 + m2));

    let k_min = 0.max(l2 - l3 - m1).max(l1 - l3 + m2);
    let k_max = (l1 + l2 - l3).min(l1 - m1).min(l2 + m2);
    let mut sum = 0.0;
    for k in k_min..=k_max {
        let ln_term = ln_factorial(k)
            + ln_factorial(l1 + l2 - l3 - k)
            + ln_factorial(l1 - m1 - k)
            + ln_factorial(l2 + m2 - k)
            + ln_factorial(l3 - l2 + m1 + k)
            + ln_factorial(l3 - l1 - m2 + k);
        sum += parity(k) * (ln_norm - ln_term).exp();
    }
    sum
}

/// One term of a symbolic Lie-derivative expansion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LieDerivTerm {
    pub index: WignerIndex,
    pub coeff: f64,
    pub part: Part,
}

/// The Lie derivative of a real basis function expanded over exactly five
/// terms in the same degree.
///
/// Terms whose index has `|n +- 1| > l` carry coefficient zero and are kept
/// as placeholders so the layout is fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct LieDerivExpansion {
    pub terms: [LieDerivTerm; 5],
}

impl LieDerivExpansion {
    /// Evaluates the expansion at a rotation.
    pub fn eval(&self, r: &Rotation) -> Result<f64> {
        let mut acc = 0.0;
        for t in &self.terms {
            if t.coeff == 0.0 {
                continue;
            }
            let d = wigner_d(t.index, r)?;
            let v = match t.part {
                Part::Re => d.re,
                Part::Im => -d.im,
            };
            acc += t.coeff * v;
        }
        Ok(acc)
    }
}

/// Expands `L_a D_p^{part}` over Wigner-D parts of the same degree.
///
/// With `cs = sqrt((l-n)(l+n+1))` and `cf = sqrt((l+n)(l-n+1))`:
///
/// ```text
/// L_a D_p^R = a1/2 (cs D_{p+}^I + cf D_{p-}^I) + a2/2 (cs D_{p+}^R - cf D_{p-}^R) - n a3 D_p^I
/// L_a D_p^I = -a1/2 (cs D_{p+}^R + cf D_{p-}^R) + a2/2 (cs D_{p+}^I - cf D_{p-}^I) + n a3 D_p^R
/// ```
pub fn lie_derivative_expansion(p: WignerIndex, a: Vec3, part: Part) -> LieDerivExpansion {
    let cs = raise_coeff(p);
    let cf = lower_coeff(p);
    let up = p.raised();
    let dn = p.lowered();
    let n = p.n as f64;
    let terms = match part {
        Part::Re => [
            LieDerivTerm { index: up, coeff: 0.5 * a.x * cs, part: Part::Im },
            LieDerivTerm { index: dn, coeff: 0.5 * a.x * cf, part: Part::Im },
            LieDerivTerm { index: up, coeff: 0.5 * a.y * cs, part: Part::Re },
            LieDerivTerm { index: dn, coeff: -0.5 * a.y * cf, part: Part::Re },
            LieDerivTerm { index: p, coeff: -n * a.z, part: Part::Im },
        ],
        Part::Im => [
            LieDerivTerm { index: up, coeff: -0.5 * a.x * cs, part: Part::Re },
            LieDerivTerm { index: dn, coeff: -0.5 * a.x * cf, part: Part::Re },
            LieDerivTerm { index: up, coeff: 0.5 * a.y * cs, part: Part::Im },
            LieDerivTerm { index: dn, coeff: -0.5 * a.y * cf, part: Part::Im },
            LieDerivTerm { index: p, coeff: n * a.z, part: Part::Re },
        ],
    };
    LieDerivExpansion { terms }
}

/// The registry of all Wigner indices with degree `l <= l_max` in
/// lexicographic order, together with the real basis bookkeeping.
///
/// `N = sum_{l <= l_max} (2l+1)^2` complex indices give `2N` real functions.
#[derive(Clone, Debug)]
pub struct Basis {
    l_max: u32,
    indices: Vec<WignerIndex>,
    degree_offsets: Vec<usize>,
    grad_expansions: Vec<[LieDerivExpansion; 3]>,
}

impl Basis {
    pub fn new(l_max: u32) -> Self {
        let mut indices = Vec::new();
        let mut degree_offsets = Vec::with_capacity(l_max as usize + 2);
        for l in 0..=l_max as i32 {
            degree_offsets.push(indices.len());
            for m in -l..=l {
                for n in -l..=l {
                    indices.push(WignerIndex::new(l as u32, m, n));
                }
            }
        }
        degree_offsets.push(indices.len());

        let mut grad_expansions = Vec::with_capacity(2 * indices.len());
        for p in &indices {
            for part in [Part::Re, Part::Im] {
                grad_expansions.push([
                    lie_derivative_expansion(*p, Vec3::x(), part),
                    lie_derivative_expansion(*p, Vec3::y(), part),
                    lie_derivative_expansion(*p, Vec3::z(), part),
                ]);
            }
        }
        Basis { l_max, indices, degree_offsets, grad_expansions }
    }

    pub fn l_max(&self) -> u32 {
        self.l_max
    }

    /// Number of complex indices `N`.
    pub fn n_pairs(&self) -> usize {
        self.indices.len()
    }

    /// Number of real basis functions `2N`.
    pub fn len(&self) -> usize {
        2 * self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[WignerIndex] {
        &self.indices
    }

    pub fn ids(&self) -> impl Iterator<Item = BasisId> {
        (1..=self.len()).map(BasisId::new)
    }

    /// Zero-based lexicographic rank of a valid index with `l <= l_max`.
    pub fn rank(&self, p: WignerIndex) -> usize {
        debug_assert!(p.is_valid() && p.l <= self.l_max);
        let l = p.l as usize;
        let width = 2 * l + 1;
        self.degree_offsets[l]
            + (p.m + p.l as i32) as usize * width
            + (p.n + p.l as i32) as usize
    }

    pub fn index_of(&self, id: BasisId) -> (WignerIndex, Part) {
        (self.indices[id.pair_rank()], id.part())
    }

    pub fn id_of(&self, p: WignerIndex, part: Part) -> BasisId {
        let rank = self.rank(p);
        BasisId::new(match part {
            Part::Re => 2 * rank + 1,
            Part::Im => 2 * rank + 2,
        })
    }

    pub fn degree_of(&self, id: BasisId) -> u32 {
        self.indices[id.pair_rank()].l
    }

    fn check_id(&self, id: BasisId) -> Result<()> {
        if id.get() > self.len() {
            return Err(Error::OutOfRange {
                what: format!("basis id {} exceeds 2N = {}", id.get(), self.len()),
            });
        }
        Ok(())
    }

    /// Real basis function value `phi_id(R)`.
    pub fn phi(&self, id: BasisId, r: &Rotation) -> Result<f64> {
        self.check_id(id)?;
        let (p, part) = self.index_of(id);
        let d = wigner_d(p, r)?;
        Ok(match part {
            Part::Re => d.re,
            Part::Im => -d.im,
        })
    }

    /// Lie gradient `[L_{e1} phi, L_{e2} phi, L_{e3} phi]` of a basis function.
    pub fn grad_phi(&self, id: BasisId, r: &Rotation) -> Result<Vec3> {
        self.check_id(id)?;
        let eval = BasisEval::new(self, r)?;
        Ok(eval.grad(id))
    }

    pub fn grad_expansion(&self, id: BasisId) -> &[LieDerivExpansion; 3] {
        &self.grad_expansions[id.get() - 1]
    }
}

/// All basis-function parts evaluated at one rotation.
///
/// Shares the small-d evaluations across the whole registry, which is what
/// the quadrature oracle and the simulator hot paths need.
pub struct BasisEval<'a> {
    basis: &'a Basis,
    re: Vec<f64>,
    im_neg: Vec<f64>,
}

impl<'a> BasisEval<'a> {
    pub fn new(basis: &'a Basis, r: &Rotation) -> Result<Self> {
        let angles = to_zyz(r);
        Self::at_angles(basis, angles.alpha, angles.beta.cos(), angles.gamma)
    }

    /// Evaluation from precomputed ZYZ data; `z = cos(beta)`.
    pub fn at_angles(basis: &'a Basis, alpha: f64, z: f64, gamma: f64) -> Result<Self> {
        let l = basis.l_max as i32;
        // phase tables e^{-i k alpha}, e^{-i k gamma} for k in [-l, l]
        let phases = |angle: f64| -> Vec<Complex64> {
            (-l..=l)
                .map(|k| Complex64::from_polar(1.0, -(k as f64) * angle))
                .collect()
        };
        let pa = phases(alpha);
        let pg = phases(gamma);
        let mut re = Vec::with_capacity(basis.n_pairs());
        let mut im_neg = Vec::with_capacity(basis.n_pairs());
        for p in &basis.indices {
            let d = little_d(*p, z)?;
            let v = pa[(p.m + l) as usize] * d * pg[(p.n + l) as usize];
            re.push(v.re);
            im_neg.push(-v.im);
        }
        Ok(BasisEval { basis, re, im_neg })
    }

    pub fn part_value(&self, p: WignerIndex, part: Part) -> f64 {
        let k = self.basis.rank(p);
        match part {
            Part::Re => self.re[k],
            Part::Im => self.im_neg[k],
        }
    }

    pub fn phi(&self, id: BasisId) -> f64 {
        let (p, part) = self.basis.index_of(id);
        self.part_value(p, part)
    }

    pub fn grad(&self, id: BasisId) -> Vec3 {
        let exps = self.basis.grad_expansion(id);
        let mut g = Vec3::zeros();
        for (i, exp) in exps.iter().enumerate() {
            let mut acc = 0.0;
            for t in &exp.terms {
                if t.coeff != 0.0 {
                    acc += t.coeff * self.part_value(t.index, t.part);
                }
            }
            g[i] = acc;
        }
        g
    }

    /// `sum_id theta_id phi_id(R)` over the whole basis.
    pub fn weighted_sum(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .enumerate()
            .map(|(k, t)| t * self.phi(BasisId::new(k + 1)))
            .sum()
    }

    /// `sum_id theta_id grad phi_id(R)` over the whole basis.
    pub fn weighted_grad(&self, theta: &[f64]) -> Vec3 {
        let mut g = Vec3::zeros();
        for (k, t) in theta.iter().enumerate() {
            if *t != 0.0 {
                g += self.grad(BasisId::new(k + 1)) * *t;
            }
        }
        g
    }
}
