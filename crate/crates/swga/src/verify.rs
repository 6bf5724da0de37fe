//! Oracle-equivalence and invariant suites: every closed form in the crate
//! checked against the independent quadrature, finite differences or its
//! defining algebraic property, with one machine-readable report per suite.

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{assemble_a1, cost_spectrum, trace_gap_cost, NoiseModel};
use crate::integrals::{
    combine_parts, pair_integral, triple_alphas, triple_integral_parts, QuadratureRule,
    DEFAULT_BAND_LIMIT,
};
use crate::so3::{geodesic_step, haar_sample, Mat3, Vec3};
use crate::wigner::{wigner_d, Basis, BasisEval, BasisId, WignerIndex};

/// Outcome of one verification suite.
#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub name: String,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

impl std::fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: {} ({} cases, max error {:.3e}, tolerance {:.1e})",
            self.name,
            if self.passed() { "pass" } else { "FAIL" },
            self.cases,
            self.max_error,
            self.tolerance
        )
    }
}

/// Basis-function part values tabulated on the quadrature grid.
struct GridTable {
    values: Vec<f64>,
    weights: Vec<f64>,
    stride: usize,
}

impl GridTable {
    fn new(basis: &Basis, rule: &QuadratureRule) -> Self {
        let stride = basis.len();
        let n_angle = rule.angle_nodes.len();
        let n_nodes = rule.z_nodes.len() * n_angle * n_angle;
        let mut values = Vec::with_capacity(n_nodes * stride);
        let mut weights = Vec::with_capacity(n_nodes);
        for (j, &z) in rule.z_nodes.iter().enumerate() {
            let w = rule.node_weight(j);
            for &alpha in &rule.angle_nodes {
                for &gamma in &rule.angle_nodes {
                    let eval = BasisEval::at_angles(basis, alpha, z, gamma)
                        .expect("grid node evaluation");
                    for id in basis.ids() {
                        values.push(eval.phi(id));
                    }
                    weights.push(w);
                }
            }
        }
        GridTable { values, weights, stride }
    }

    fn n_nodes(&self) -> usize {
        self.weights.len()
    }

    #[inline]
    fn value(&self, node: usize, id0: usize) -> f64 {
        self.values[node * self.stride + id0]
    }
}

/// Closed-form pair integrals against quadrature for every index pair with
/// degrees up to `l_max` and every part combination.
pub fn pair_integral_suite(l_max: u32) -> SuiteReport {
    let basis = Basis::new(l_max);
    let rule = QuadratureRule::new(DEFAULT_BAND_LIMIT.max(l_max));
    let table = GridTable::new(&basis, &rule);
    let dim = basis.len();

    let mut quad = vec![0.0f64; dim * dim];
    for node in 0..table.n_nodes() {
        let w = table.weights[node];
        for a in 0..dim {
            let va = table.value(node, a) * w;
            if va == 0.0 {
                continue;
            }
            for b in a..dim {
                quad[a * dim + b] += va * table.value(node, b);
            }
        }
    }

    let mut max_error = 0.0f64;
    let mut cases = 0;
    for a in 0..dim {
        let (pa, ta) = basis.index_of(BasisId::new(a + 1));
        for b in a..dim {
            let (pb, tb) = basis.index_of(BasisId::new(b + 1));
            let closed = pair_integral(pa, ta, pb, tb);
            max_error = max_error.max((closed - quad[a * dim + b]).abs());
            cases += 1;
        }
    }
    SuiteReport {
        name: "pair_integrals_vs_quadrature".into(),
        cases,
        max_error,
        tolerance: 1e-10,
    }
}

/// Closed-form triple integrals against quadrature on random index triples
/// with degrees up to `l_max`.
///
/// `cg_fault_bias` perturbs every Clebsch-Gordan product factor feeding the
/// closed form; nonzero values exist to prove the suite detects corruption.
pub fn triple_integral_suite(l_max: u32, n_triples: usize, seed: u64, cg_fault_bias: f64) -> SuiteReport {
    let basis = Basis::new(l_max);
    let rule = QuadratureRule::new(DEFAULT_BAND_LIMIT.max(l_max));
    let table = GridTable::new(&basis, &rule);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut max_error = 0.0f64;
    for _ in 0..n_triples {
        let mut pick = || BasisId::new(rng.random_range(1..=basis.len()));
        let (ia, ib, ic) = (pick(), pick(), pick());
        let (pa, ta) = basis.index_of(ia);
        let (pb, tb) = basis.index_of(ib);
        let (pc, tc) = basis.index_of(ic);

        let closed = if cg_fault_bias == 0.0 {
            triple_integral_parts(pa, ta, pb, tb, pc, tc)
        } else {
            let [a1, a2, a3, a4] = triple_alphas(pa, pb, pc);
            combine_parts(
                a1 + cg_fault_bias,
                a2 + cg_fault_bias,
                a3 + cg_fault_bias,
                a4 + cg_fault_bias,
                ta,
                tb,
                tc,
            )
        };

        let (a0, b0, c0) = (ia.get() - 1, ib.get() - 1, ic.get() - 1);
        let mut quad = 0.0;
        for node in 0..table.n_nodes() {
            quad += table.weights[node]
                * table.value(node, a0)
                * table.value(node, b0)
                * table.value(node, c0);
        }
        max_error = max_error.max((closed - quad).abs());
    }
    SuiteReport {
        name: "triple_integrals_vs_quadrature".into(),
        cases: n_triples,
        max_error,
        tolerance: 1e-9,
    }
}

/// Symbolic Lie-derivative expansions against central finite differences for
/// every basis function, at Haar-random rotations.
pub fn lie_derivative_fd_suite(l_max: u32, n_samples: usize, seed: u64) -> SuiteReport {
    let basis = Basis::new(l_max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let dirs = [Vec3::x(), Vec3::y(), Vec3::z()];

    let mut max_error = 0.0f64;
    let mut cases = 0;
    for _ in 0..n_samples {
        let r = haar_sample(&mut rng);
        let eval = BasisEval::new(&basis, &r).expect("basis evaluation");
        for (i, dir) in dirs.iter().enumerate() {
            let plus = BasisEval::new(&basis, &geodesic_step(&r, *dir, h)).unwrap();
            let minus = BasisEval::new(&basis, &geodesic_step(&r, *dir, -h)).unwrap();
            for id in basis.ids() {
                let symbolic = eval.grad(id)[i];
                let fd = (plus.phi(id) - minus.phi(id)) / (2.0 * h);
                // relative error with an absolute floor at scale one
                let err = (symbolic - fd).abs() / symbolic.abs().max(1.0);
                max_error = max_error.max(err);
                cases += 1;
            }
        }
    }
    SuiteReport {
        name: "lie_derivative_vs_finite_differences".into(),
        cases,
        max_error,
        tolerance: 1e-6,
    }
}

/// Antisymmetry of the Lie derivative under the pairing:
/// `<L_a f, g> + <f, L_a g> = 0`, from the closed forms.
pub fn integration_by_parts_suite(l_max: u32) -> SuiteReport {
    let basis = Basis::new(l_max);
    let dirs = [Vec3::x(), Vec3::y(), Vec3::z()];
    let mut max_error = 0.0f64;
    let mut cases = 0;
    for alpha in basis.ids() {
        for beta in basis.ids() {
            for dir in dirs {
                let forward = crate::assembly::lie_inner(&basis, dir, alpha, beta);
                let backward = crate::assembly::lie_inner(&basis, dir, beta, alpha);
                max_error = max_error.max((forward + backward).abs());
                cases += 1;
            }
        }
    }
    SuiteReport {
        name: "integration_by_parts_antisymmetry".into(),
        cases,
        max_error,
        tolerance: 1e-10,
    }
}

/// Symmetry of the pre-regularization diffusion matrix at isotropic noise.
pub fn a1_symmetry_suite(l_max: u32) -> SuiteReport {
    let basis = Basis::new(l_max);
    let a1 = assemble_a1(&basis, &NoiseModel::isotropic(1.0));
    let defect = (&a1 - a1.transpose()).amax();
    SuiteReport {
        name: "a1_symmetry".into(),
        cases: basis.len() * basis.len(),
        max_error: defect,
        tolerance: 1e-10,
    }
}

/// Negative semidefiniteness of the pre-regularization diffusion matrix.
pub fn a1_semidefinite_suite(l_max: u32) -> SuiteReport {
    let basis = Basis::new(l_max);
    let a1 = assemble_a1(&basis, &NoiseModel::isotropic(1.0));
    let eig = SymmetricEigen::new(a1);
    SuiteReport {
        name: "a1_negative_semidefinite".into(),
        cases: basis.len(),
        max_error: eig.eigenvalues.max().max(0.0),
        tolerance: 1e-8,
    }
}

/// Representation blocks against their defining unitarity at Haar samples.
pub fn unitarity_suite(l_max: u32, n_samples: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_error = 0.0f64;
    let mut cases = 0;
    for _ in 0..n_samples {
        let r = haar_sample(&mut rng);
        for l in 0..=l_max {
            for m in -(l as i32)..=l as i32 {
                for mp in -(l as i32)..=l as i32 {
                    let mut acc = num_complex::Complex64::new(0.0, 0.0);
                    for n in -(l as i32)..=l as i32 {
                        let a = wigner_d(WignerIndex::new(l, m, n), &r).unwrap();
                        let b = wigner_d(WignerIndex::new(l, mp, n), &r).unwrap();
                        acc += a * b.conj();
                    }
                    let expect = if m == mp { 1.0 } else { 0.0 };
                    max_error = max_error.max((acc - expect).norm());
                    cases += 1;
                }
            }
        }
    }
    SuiteReport { name: "block_unitarity".into(), cases, max_error, tolerance: 1e-10 }
}

/// Reconstruction reality of the quadrature-projected cost spectrum.
pub fn spectrum_reality_suite(l_max: u32, n_samples: usize, seed: u64) -> SuiteReport {
    let basis = Basis::new(l_max);
    let rule = QuadratureRule::new(DEFAULT_BAND_LIMIT.max(l_max));
    let spectrum = cost_spectrum(trace_gap_cost, l_max, &rule).expect("spectrum");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_error = 0.0f64;
    for _ in 0..n_samples {
        let r = haar_sample(&mut rng);
        let v = spectrum.reconstruct(&basis, &r).expect("reconstruction");
        max_error = max_error.max(v.im.abs());
    }
    SuiteReport {
        name: "cost_spectrum_reality".into(),
        cases: n_samples,
        max_error,
        tolerance: 1e-10,
    }
}

/// Random control-coupling entries against quadrature of the defining
/// integrand.
pub fn m_entry_suite(l_max: u32, n_entries: usize, seed: u64) -> SuiteReport {
    let basis = Basis::new(l_max);
    let rule = QuadratureRule::new(DEFAULT_BAND_LIMIT.max(l_max));
    let w = Mat3::identity() * 0.5;
    let w_inv = w.try_inverse().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_error = 0.0f64;
    for _ in 0..n_entries {
        let mut pick = || BasisId::new(rng.random_range(1..=basis.len()));
        let (a, b, g) = (pick(), pick(), pick());
        let closed = crate::assembly::compute_m_entry(&basis, a, b, g, &w).expect("m entry");
        let quad = rule.integrate(|r| {
            let eval = BasisEval::new(&basis, r).unwrap();
            let ga = eval.grad(a);
            let gg = eval.grad(g);
            (ga.transpose() * w_inv * gg)[(0, 0)] * eval.phi(b)
        });
        max_error = max_error.max((closed - quad).abs());
    }
    SuiteReport {
        name: "m_entries_vs_quadrature".into(),
        cases: n_entries,
        max_error,
        tolerance: 1e-9,
    }
}

/// The full battery with default sizes.
pub fn run_all(cg_fault_bias: f64) -> Vec<SuiteReport> {
    vec![
        pair_integral_suite(3),
        triple_integral_suite(2, 500, 2024, cg_fault_bias),
        lie_derivative_fd_suite(3, 50, 7),
        integration_by_parts_suite(2),
        a1_symmetry_suite(3),
        a1_semidefinite_suite(3),
        unitarity_suite(3, 10, 5),
        spectrum_reality_suite(3, 50, 6),
        m_entry_suite(2, 100, 8),
    ]
}
