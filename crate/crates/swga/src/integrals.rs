//! Closed-form Haar integrals of products of Wigner-D parts, plus an
//! independent Gauss-Legendre/trapezoid quadrature oracle.
//!
//! All integrals are against the normalized Haar measure, which in ZYZ
//! coordinates is `(1/8 pi^2) sin(beta) d alpha d beta d gamma`.

use std::f64::consts::{PI, TAU};

use crate::so3::{from_zyz, EulerZyz, Rotation};
use crate::wigner::{clebsch_gordan, Part, WignerIndex};

fn parity(k: i32) -> f64 {
    if k.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `int D_p^{t1} D_q^{t2} dR` in closed form.
///
/// Nonzero only for equal parts and `q in {p, p_flip}`; mixed real/imaginary
/// products integrate to zero.
pub fn pair_integral(p: WignerIndex, t1: Part, q: WignerIndex, t2: Part) -> f64 {
    if t1 != t2 {
        return 0.0;
    }
    let scale = 0.5 / (2.0 * p.l as f64 + 1.0);
    let mut acc = 0.0;
    if p == q {
        acc += scale;
    }
    if p == q.conjugate_partner() {
        let sign = parity(p.m - p.n);
        acc += match t1 {
            Part::Re => sign * scale,
            Part::Im => -sign * scale,
        };
    }
    acc
}

/// `int D_p^{tag} dR`: one for the trivial index's real part, zero otherwise.
pub fn constant_integral(p: WignerIndex, tag: Part) -> f64 {
    match tag {
        Part::Re if p == WignerIndex::new(0, 0, 0) => 1.0,
        _ => 0.0,
    }
}

/// Product coefficient `C_{p,q}^r = C(l,m; l',m' | l*,m*) C(l,n; l',n' | l*,n*)`.
pub fn cg_product_coefficient(p: WignerIndex, q: WignerIndex, r: WignerIndex) -> f64 {
    let first = clebsch_gordan(p.l, p.m, q.l, q.m, r.l, r.m);
    if first == 0.0 {
        return 0.0;
    }
    first * clebsch_gordan(p.l, p.n, q.l, q.n, r.l, r.n)
}

/// `int D_p D_q conj(D_r) dR` (with `conjugate_r`) or `int D_p D_q D_r dR`
/// (without); both are real in this convention.
pub fn triple_integral_complex(
    p: WignerIndex,
    q: WignerIndex,
    r: WignerIndex,
    conjugate_r: bool,
) -> f64 {
    let scale = 1.0 / (2.0 * r.l as f64 + 1.0);
    if conjugate_r {
        scale * cg_product_coefficient(p, q, r)
    } else {
        parity(r.m - r.n) * scale * cg_product_coefficient(p, q, r.conjugate_partner())
    }
}

/// `int D_p^{t1} D_q^{t2} D_r^{t3} dR` in closed form.
///
/// Zero for an odd number of imaginary parts; the even combinations are
/// signed quarter-sums of the four complex triple integrals.
pub fn triple_integral_parts(
    p: WignerIndex,
    t1: Part,
    q: WignerIndex,
    t2: Part,
    r: WignerIndex,
    t3: Part,
) -> f64 {
    let [a1, a2, a3, a4] = triple_alphas(p, q, r);
    combine_parts(a1, a2, a3, a4, t1, t2, t3)
}

/// Quarter-sum combination shared with the fault-injection path of the
/// verification suites.
pub(crate) fn combine_parts(
    a1: f64,
    a2: f64,
    a3: f64,
    a4: f64,
    t1: Part,
    t2: Part,
    t3: Part,
) -> f64 {
    match (t1, t2, t3) {
        (Part::Re, Part::Re, Part::Re) => 0.25 * (a1 + a2 + a3 + a4),
        (Part::Re, Part::Im, Part::Im) => 0.25 * (-a1 + a2 + a3 - a4),
        (Part::Im, Part::Re, Part::Im) => 0.25 * (-a1 + a2 - a3 + a4),
        (Part::Im, Part::Im, Part::Re) => 0.25 * (-a1 - a2 + a3 + a4),
        _ => 0.0,
    }
}

/// The four complex triple integrals feeding [`triple_integral_parts`]:
/// `int D_p D_q D_r`, `int D_p D_q conj(D_r)`, `int D_p conj(D_q) D_r` and
/// `int conj(D_p) D_q D_r`.
pub(crate) fn triple_alphas(p: WignerIndex, q: WignerIndex, r: WignerIndex) -> [f64; 4] {
    [
        triple_integral_complex(p, q, r, false),
        triple_integral_complex(p, q, r, true),
        cg_product_coefficient(p, r, q) / (2.0 * q.l as f64 + 1.0),
        cg_product_coefficient(q, r, p) / (2.0 * p.l as f64 + 1.0),
    ]
}

/// Dense lookup table of Clebsch-Gordan values for all arguments with
/// `l1, l2, l3 <= l_max`; assembly touches each coefficient many times.
///
/// The table is immutable after construction and shared across threads;
/// arguments outside the covered range fall back to direct evaluation.
#[derive(Clone, Debug)]
pub struct CgTable {
    l_max: u32,
    values: Vec<f64>,
}

impl CgTable {
    pub fn new(l_max: u32) -> Self {
        let l_dim = l_max as usize + 1;
        let m_dim = 2 * l_max as usize + 1;
        let len = l_dim * m_dim * l_dim * m_dim * l_dim * m_dim;
        let mut values = vec![0.0; len];
        for l1 in 0..=l_max {
            for m1 in -(l1 as i32)..=l1 as i32 {
                for l2 in 0..=l_max {
                    for m2 in -(l2 as i32)..=l2 as i32 {
                        for l3 in 0..=l_max {
                            for m3 in -(l3 as i32)..=l3 as i32 {
                                let idx = Self::index(l_max, l1, m1, l2, m2, l3, m3);
                                values[idx] = clebsch_gordan(l1, m1, l2, m2, l3, m3);
                            }
                        }
                    }
                }
            }
        }
        CgTable { l_max, values }
    }

    #[inline]
    fn index(l_max: u32, l1: u32, m1: i32, l2: u32, m2: i32, l3: u32, m3: i32) -> usize {
        let l_dim = l_max as usize + 1;
        let m_dim = 2 * l_max as usize + 1;
        let off = l_max as i32;
        ((((l1 as usize * m_dim + (m1 + off) as usize) * l_dim + l2 as usize) * m_dim
            + (m2 + off) as usize)
            * l_dim
            + l3 as usize)
            * m_dim
            + (m3 + off) as usize
    }

    #[inline]
    pub fn get(&self, l1: u32, m1: i32, l2: u32, m2: i32, l3: u32, m3: i32) -> f64 {
        if l1 > self.l_max || l2 > self.l_max || l3 > self.l_max {
            return clebsch_gordan(l1, m1, l2, m2, l3, m3);
        }
        if m1.unsigned_abs() > l1 || m2.unsigned_abs() > l2 || m3.unsigned_abs() > l3 {
            return 0.0;
        }
        self.values[Self::index(self.l_max, l1, m1, l2, m2, l3, m3)]
    }

    #[inline]
    pub fn product(&self, p: WignerIndex, q: WignerIndex, r: WignerIndex) -> f64 {
        let first = self.get(p.l, p.m, q.l, q.m, r.l, r.m);
        if first == 0.0 {
            return 0.0;
        }
        first * self.get(p.l, p.n, q.l, q.n, r.l, r.n)
    }

    /// Table-backed version of [`triple_integral_parts`].
    pub fn triple_parts(
        &self,
        p: WignerIndex,
        t1: Part,
        q: WignerIndex,
        t2: Part,
        r: WignerIndex,
        t3: Part,
    ) -> f64 {
        let rs = 1.0 / (2.0 * r.l as f64 + 1.0);
        let a1 = parity(r.m - r.n) * rs * self.product(p, q, r.conjugate_partner());
        let a2 = rs * self.product(p, q, r);
        let a3 = self.product(p, r, q) / (2.0 * q.l as f64 + 1.0);
        let a4 = self.product(q, r, p) / (2.0 * p.l as f64 + 1.0);
        combine_parts(a1, a2, a3, a4, t1, t2, t3)
    }
}

/// Tensor quadrature on SO(3): Gauss-Legendre in `cos(beta)` and uniform
/// trapezoid in `alpha` and `gamma`.
///
/// With band limit `L` the rule uses `2(L+1)` Legendre nodes and `2L+2`
/// angular nodes per axis, which integrates every trigonometric polynomial
/// generated by products of Wigner-D functions with total degree `<= 2L+1`
/// exactly.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    band_limit: u32,
    /// Gauss-Legendre nodes in `z = cos(beta)`, ascending.
    pub z_nodes: Vec<f64>,
    /// Gauss-Legendre weights matching `z_nodes` (sum to 2).
    pub z_weights: Vec<f64>,
    /// Uniform nodes in `[0, 2 pi)` shared by `alpha` and `gamma`.
    pub angle_nodes: Vec<f64>,
}

impl QuadratureRule {
    pub fn new(band_limit: u32) -> Self {
        let n_z = 2 * (band_limit as usize + 1);
        let n_angle = 2 * band_limit as usize + 2;
        let (z_nodes, z_weights) = gauss_legendre(n_z);
        let angle_nodes = (0..n_angle)
            .map(|k| TAU * k as f64 / n_angle as f64)
            .collect();
        QuadratureRule { band_limit, z_nodes, z_weights, angle_nodes }
    }

    pub fn band_limit(&self) -> u32 {
        self.band_limit
    }

    /// Haar weight carried by the node `(alpha_i, z_j, gamma_k)`.
    pub fn node_weight(&self, j: usize) -> f64 {
        let t = self.angle_nodes.len() as f64;
        self.z_weights[j] / (2.0 * t * t)
    }

    /// Integrates `f` against the Haar probability measure.
    pub fn integrate<F: FnMut(&Rotation) -> f64>(&self, mut f: F) -> f64 {
        let mut acc = 0.0;
        for (j, &z) in self.z_nodes.iter().enumerate() {
            let beta = z.clamp(-1.0, 1.0).acos();
            let w = self.node_weight(j);
            for &alpha in &self.angle_nodes {
                for &gamma in &self.angle_nodes {
                    let r = from_zyz(EulerZyz::new(alpha, beta, gamma));
                    acc += w * f(&r);
                }
            }
        }
        acc
    }
}

/// Default band limit: exact for triple products of degree-3 basis functions
/// with margin.
pub const DEFAULT_BAND_LIMIT: u32 = 8;

/// Integrates `f` over SO(3) with the given rule.
pub fn quadrature_integrate<F: FnMut(&Rotation) -> f64>(f: F, rule: &QuadratureRule) -> f64 {
    rule.integrate(f)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // evaluate P_n and P_n' by the three-term recurrence
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    // ascending order
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wigner::{wigner_d, Basis, BasisId};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(l: u32, m: i32, n: i32) -> WignerIndex {
        WignerIndex::new(l, m, n)
    }

    #[test]
    fn gauss_legendre_integrates_monomials() {
        let (nodes, weights) = gauss_legendre(8);
        for deg in 0..=15u32 {
            let acc: f64 = nodes
                .iter()
                .zip(&weights)
                .map(|(x, w)| w * x.powi(deg as i32))
                .sum();
            let exact = if deg % 2 == 0 { 2.0 / (deg as f64 + 1.0) } else { 0.0 };
            assert_abs_diff_eq!(acc, exact, epsilon = 1e-13);
        }
    }

    #[test]
    fn quadrature_normalization_and_orthogonality() {
        let rule = QuadratureRule::new(DEFAULT_BAND_LIMIT);
        assert_abs_diff_eq!(rule.integrate(|_| 1.0), 1.0, epsilon = 1e-13);

        let sq = rule.integrate(|r| {
            let d = wigner_d(p(1, 0, 0), r).unwrap();
            d.norm_sqr()
        });
        assert_abs_diff_eq!(sq, 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn pair_integral_reference_values() {
        assert_abs_diff_eq!(
            pair_integral(p(1, 0, 0), Part::Re, p(1, 0, 0), Part::Re),
            1.0 / 3.0
        );
        // p = p_flip makes the two delta terms cancel on the imaginary side
        assert_eq!(pair_integral(p(1, 0, 0), Part::Im, p(1, 0, 0), Part::Im), 0.0);
        assert_eq!(pair_integral(p(2, 1, -1), Part::Re, p(1, 1, -1), Part::Im), 0.0);
        assert_eq!(pair_integral(p(2, 1, -1), Part::Im, p(2, 1, -1), Part::Re), 0.0);
    }

    #[test]
    fn pair_integral_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..500 {
            let l1 = rng.random_range(0..=3u32);
            let l2 = rng.random_range(0..=3u32);
            let a = p(
                l1,
                rng.random_range(-(l1 as i32)..=l1 as i32),
                rng.random_range(-(l1 as i32)..=l1 as i32),
            );
            let b = p(
                l2,
                rng.random_range(-(l2 as i32)..=l2 as i32),
                rng.random_range(-(l2 as i32)..=l2 as i32),
            );
            for t1 in [Part::Re, Part::Im] {
                for t2 in [Part::Re, Part::Im] {
                    assert_eq!(pair_integral(a, t1, b, t2), pair_integral(b, t2, a, t1));
                }
            }
        }
    }

    #[test]
    fn pair_integral_matches_quadrature_for_random_pairs() {
        let rule = QuadratureRule::new(DEFAULT_BAND_LIMIT);
        let basis = Basis::new(3);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let a = BasisId::new(rng.random_range(1..=basis.len()));
            let b = BasisId::new(rng.random_range(1..=basis.len()));
            let (pa, ta) = basis.index_of(a);
            let (pb, tb) = basis.index_of(b);
            let closed = pair_integral(pa, ta, pb, tb);
            let quad =
                rule.integrate(|r| basis.phi(a, r).unwrap() * basis.phi(b, r).unwrap());
            assert_abs_diff_eq!(closed, quad, epsilon = 1e-10);
        }
    }

    #[test]
    fn constant_integral_cases() {
        assert_eq!(constant_integral(p(0, 0, 0), Part::Re), 1.0);
        assert_eq!(constant_integral(p(2, 1, -1), Part::Re), 0.0);
        assert_eq!(constant_integral(p(1, 0, 0), Part::Im), 0.0);
    }

    #[test]
    fn cg_product_reference_values() {
        assert_abs_diff_eq!(
            cg_product_coefficient(p(0, 0, 0), p(0, 0, 0), p(0, 0, 0)),
            1.0
        );
        assert_abs_diff_eq!(
            cg_product_coefficient(p(1, 0, 0), p(1, 0, 0), p(2, 0, 0)),
            2.0 / 3.0,
            epsilon = 1e-14
        );
        // selection rule on m*
        assert_eq!(cg_product_coefficient(p(1, 1, 0), p(1, 0, 0), p(2, 0, 0)), 0.0);
    }

    #[test]
    fn triple_integral_reference_values() {
        assert_abs_diff_eq!(
            triple_integral_complex(p(0, 0, 0), p(0, 0, 0), p(0, 0, 0), true),
            1.0
        );
        assert_abs_diff_eq!(
            triple_integral_complex(p(0, 0, 0), p(0, 0, 0), p(0, 0, 0), false),
            1.0
        );
        assert_abs_diff_eq!(
            triple_integral_complex(p(1, 0, 0), p(1, 0, 0), p(2, 0, 0), true),
            2.0 / 15.0,
            epsilon = 1e-14
        );
        assert_eq!(
            triple_integral_complex(p(1, 1, 0), p(1, 0, 0), p(2, 0, 0), true),
            0.0
        );
    }

    #[test]
    fn triple_parts_reference_values() {
        let zero = p(0, 0, 0);
        assert_abs_diff_eq!(
            triple_integral_parts(zero, Part::Re, zero, Part::Re, zero, Part::Re),
            1.0
        );
        // reduces to the pair integral when one factor is the constant
        assert_abs_diff_eq!(
            triple_integral_parts(p(1, 0, 0), Part::Re, p(1, 0, 0), Part::Re, zero, Part::Re),
            1.0 / 3.0,
            epsilon = 1e-14
        );
        // a single imaginary tag forces zero
        for (t1, t2, t3) in [
            (Part::Re, Part::Re, Part::Im),
            (Part::Re, Part::Im, Part::Re),
            (Part::Im, Part::Re, Part::Re),
        ] {
            assert_eq!(
                triple_integral_parts(p(1, 1, 0), t1, p(1, 0, 1), t2, p(2, 1, 1), t3),
                0.0
            );
        }
    }

    #[test]
    fn triple_parts_permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..200 {
            let mut pick = || {
                let l = rng.random_range(0..=2u32);
                (
                    p(
                        l,
                        rng.random_range(-(l as i32)..=l as i32),
                        rng.random_range(-(l as i32)..=l as i32),
                    ),
                    if rng.random_range(0..2) == 0 { Part::Re } else { Part::Im },
                )
            };
            let (a, ta) = pick();
            let (b, tb) = pick();
            let (c, tc) = pick();
            let base = triple_integral_parts(a, ta, b, tb, c, tc);
            let perms = [
                triple_integral_parts(a, ta, c, tc, b, tb),
                triple_integral_parts(b, tb, a, ta, c, tc),
                triple_integral_parts(b, tb, c, tc, a, ta),
                triple_integral_parts(c, tc, a, ta, b, tb),
                triple_integral_parts(c, tc, b, tb, a, ta),
            ];
            for v in perms {
                assert_abs_diff_eq!(base, v, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn cg_table_matches_direct_evaluation() {
        let table = CgTable::new(3);
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..300 {
            let mut pick = || {
                let l = rng.random_range(0..=3u32);
                (
                    p(
                        l,
                        rng.random_range(-(l as i32)..=l as i32),
                        rng.random_range(-(l as i32)..=l as i32),
                    ),
                    if rng.random_range(0..2) == 0 { Part::Re } else { Part::Im },
                )
            };
            let (a, ta) = pick();
            let (b, tb) = pick();
            let (c, tc) = pick();
            assert_eq!(
                table.triple_parts(a, ta, b, tb, c, tc),
                triple_integral_parts(a, ta, b, tb, c, tc)
            );
            assert_eq!(table.product(a, b, c), cg_product_coefficient(a, b, c));
        }
        // fallback outside the covered range
        assert_eq!(
            table.get(4, 0, 4, 0, 4, 0),
            clebsch_gordan(4, 0, 4, 0, 4, 0)
        );
    }
}
