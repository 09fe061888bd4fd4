//! Test-matrix families: the Dirichlet 2d Laplacian, the periodic gauge
//! Laplacian and the 2-spin Schwinger (2d Dirac) operator.
//!
//! Sites of an `N×N` lattice are numbered `i * N + j`, where `i` runs along
//! the direction carrying the `Θ` links and `j` along the `Φ` links.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::sparse::{vector, CostLedger, SparseMatrix, C64};
use crate::{Result, TraceError};

/// Random U(1) link phases on a periodic `N×N` lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeField {
    pub n: usize,
    pub beta: f64,
    pub seed: u64,
    /// `Θ_ij`, the phase of the link from site `(i,j)` to `(i+1,j)`.
    pub theta: Vec<f64>,
    /// `Φ_ij`, the phase of the link from site `(i,j)` to `(i,j+1)`.
    pub phi: Vec<f64>,
}

impl GaugeField {
    /// All links equal to one.
    pub fn trivial(n: usize) -> Self {
        Self {
            n,
            beta: 0.0,
            seed: 0,
            theta: vec![0.0; n * n],
            phi: vec![0.0; n * n],
        }
    }

    fn site(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchwingerParams {
    pub mass: f64,
    pub field: GaugeField,
}

/// The three operator families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Laplace2d,
    Gauge,
    Schwinger,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Laplace2d, Family::Gauge, Family::Schwinger];

    pub fn name(self) -> &'static str {
        match self {
            Family::Laplace2d => "laplace2d",
            Family::Gauge => "gauge",
            Family::Schwinger => "schwinger",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown family '{s}' (expected laplace2d, gauge or schwinger)"))
    }
}

/// Draws i.i.d. phases `Θ_ij, Φ_ij ~ N(0, (2πβ)²)`, deterministic in `seed`.
pub fn draw_gauge_field(n: usize, beta: f64, seed: u64) -> Result<GaugeField> {
    if n < 2 {
        return Err(TraceError::InvalidArgument(format!("lattice extent must be ≥ 2, got {n}")));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(TraceError::InvalidArgument(format!("beta must be finite and ≥ 0, got {beta}")));
    }
    let sd = 2.0 * PI * beta;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |count: usize| -> Vec<f64> {
        (0..count)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                if sd == 0.0 {
                    0.0
                } else {
                    sd * z
                }
            })
            .collect()
    };
    let theta = draw(n * n);
    let phi = draw(n * n);
    Ok(GaugeField {
        n,
        beta,
        seed,
        theta,
        phi,
    })
}

/// `L = B ⊗ I + I ⊗ B` with `B = tridiag(-1, 2, -1)`: the 5-point Dirichlet
/// Laplacian on an `N×N` grid.
pub fn gen_laplace2d(n: usize) -> Result<SparseMatrix> {
    if n < 2 {
        return Err(TraceError::InvalidArgument(format!("grid extent must be ≥ 2, got {n}")));
    }
    let size = n * n;
    let mut indptr = Vec::with_capacity(size + 1);
    let mut indices = Vec::with_capacity(5 * size);
    let mut values = Vec::with_capacity(5 * size);
    indptr.push(0);
    let minus_one = C64::new(-1.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            // columns in increasing order: (i-1,j), (i,j-1), (i,j), (i,j+1), (i+1,j)
            if i > 0 {
                indices.push(row - n);
                values.push(minus_one);
            }
            if j > 0 {
                indices.push(row - 1);
                values.push(minus_one);
            }
            indices.push(row);
            values.push(C64::new(4.0, 0.0));
            if j + 1 < n {
                indices.push(row + 1);
                values.push(minus_one);
            }
            if i + 1 < n {
                indices.push(row + n);
                values.push(minus_one);
            }
            indptr.push(indices.len());
        }
    }
    SparseMatrix::new(size, size, indptr, indices, values)
}

/// `tr((L^N)⁻¹) = Σ_{j,k} 1/(λ_j + λ_k)` with `λ_j = 2 − 2cos(jπ/(N+1))`.
pub fn exact_trace_inv_laplace2d(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(TraceError::InvalidArgument(format!("grid extent must be ≥ 2, got {n}")));
    }
    let lambda = laplace1d_eigenvalues(n);
    Ok(lambda
        .iter()
        .map(|a| lambda.iter().map(|b| 1.0 / (a + b)).sum::<f64>())
        .sum())
}

/// Eigenvalues `4 sin²(jπ / (2(N+1)))`, `j = 1..N`, of `tridiag(-1, 2, -1)`.
pub fn laplace1d_eigenvalues(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|j| {
            let s = (j as f64 * PI / (2.0 * (n as f64 + 1.0))).sin();
            4.0 * s * s
        })
        .collect()
}

/// Periodic gauge Laplacian. Row `(i,j)` reads
/// `4u_ij − e^{iΘ_ij}u_{i+1,j} − e^{iΦ_ij}u_{i,j+1} − e^{−iΘ_{i−1,j}}u_{i−1,j} − e^{−iΦ_{i,j−1}}u_{i,j−1}`.
///
/// For `N = 2` the forward and backward neighbours coincide and their
/// couplings are summed, so the `5N²` nonzero count holds for `N ≥ 3`.
pub fn gen_gauge_laplace(field: &GaugeField) -> Result<SparseMatrix> {
    let n = field.n;
    if n < 2 {
        return Err(TraceError::InvalidArgument(format!("lattice extent must be ≥ 2, got {n}")));
    }
    let mut triplets = Vec::with_capacity(5 * n * n);
    for_each_link(field, |site, nb, link| {
        triplets.push((site, nb, -link));
        triplets.push((nb, site, -link.conj()));
    });
    for s in 0..n * n {
        triplets.push((s, s, C64::new(4.0, 0.0)));
    }
    SparseMatrix::from_triplets(n * n, n * n, triplets)
}

/// Calls `f(site, forward_neighbour, link)` for both forward links of every site.
fn for_each_link(field: &GaugeField, mut f: impl FnMut(usize, usize, C64)) {
    let n = field.n;
    for i in 0..n {
        for j in 0..n {
            let s = field.site(i, j);
            let up_i = field.site((i + 1) % n, j);
            let up_j = field.site(i, (j + 1) % n);
            f(s, up_i, C64::from_polar(1.0, field.theta[s]));
            f(s, up_j, C64::from_polar(1.0, field.phi[s]));
        }
    }
}

/// Schwinger operator in spin-major order (all first spin components, then
/// all second ones):
/// `(4+m)u_ij − e^{iΘ_ij}(I−σ₁)u_{i+1,j} − e^{iΦ_ij}(I−σ₂)u_{i,j+1}
///  − e^{−iΘ_{i−1,j}}(I+σ₁)u_{i−1,j} − e^{−iΦ_{i,j−1}}(I+σ₂)u_{i,j−1}`
/// with `σ₁ = [[0,1],[1,0]]` and `σ₂ = [[0,i],[−i,0]]`.
///
/// The result satisfies `J S = S* J` for `J = diag(I, −I)` exactly, since
/// every backward coupling is built from the conjugate of the forward one.
/// The `18N²` nonzero count holds for `N ≥ 3`.
pub fn gen_schwinger(params: &SchwingerParams) -> Result<SparseMatrix> {
    let field = &params.field;
    let n = field.n;
    if n < 2 {
        return Err(TraceError::InvalidArgument(format!("lattice extent must be ≥ 2, got {n}")));
    }
    if !params.mass.is_finite() {
        return Err(TraceError::InvalidArgument("mass must be finite".into()));
    }
    let sites = n * n;
    let one = C64::new(1.0, 0.0);
    let i_unit = C64::new(0.0, 1.0);
    let zero = C64::new(0.0, 0.0);
    let sigma1 = [[zero, one], [one, zero]];
    let sigma2 = [[zero, i_unit], [-i_unit, zero]];
    let ident = [[one, zero], [zero, one]];
    let spin_block = |sign: f64, sigma: &[[C64; 2]; 2]| -> [[C64; 2]; 2] {
        let mut b = [[zero; 2]; 2];
        for a in 0..2 {
            for c in 0..2 {
                b[a][c] = ident[a][c] + sigma[a][c] * sign;
            }
        }
        b
    };
    let idx = |spin: usize, site: usize| spin * sites + site;

    let mut triplets = Vec::with_capacity(18 * sites);
    for i in 0..n {
        for j in 0..n {
            let s = field.site(i, j);
            for (nb, theta_or_phi, sigma) in [
                (field.site((i + 1) % n, j), field.theta[s], &sigma1),
                (field.site(i, (j + 1) % n), field.phi[s], &sigma2),
            ] {
                let link = C64::from_polar(1.0, theta_or_phi);
                let forward = spin_block(-1.0, sigma);
                let backward = spin_block(1.0, sigma);
                for a in 0..2 {
                    for c in 0..2 {
                        if forward[a][c] != zero {
                            triplets.push((idx(a, s), idx(c, nb), -(link * forward[a][c])));
                        }
                        if backward[a][c] != zero {
                            triplets.push((idx(a, nb), idx(c, s), -(link.conj() * backward[a][c])));
                        }
                    }
                }
            }
        }
    }
    let diag = C64::new(4.0 + params.mass, 0.0);
    for spin in 0..2 {
        for s in 0..sites {
            triplets.push((idx(spin, s), idx(spin, s), diag));
        }
    }
    let op = SparseMatrix::from_triplets(2 * sites, 2 * sites, triplets)?;
    let estimate = leftmost_eigenvalue_estimate(&op, 300, params.field.seed);
    if estimate.re <= 0.0 {
        log::warn!(
            "Schwinger operator (N={n}, m={}) has an eigenvalue estimate {estimate:.4} outside the right half plane",
            params.mass
        );
    }
    Ok(op)
}

/// Power iteration on `σI − A` with `σ = ‖A‖₁`, returning the Rayleigh
/// quotient of `A` at the dominant vector. This approximates the eigenvalue
/// of smallest real part and is only used as a diagnostic.
pub fn leftmost_eigenvalue_estimate(a: &SparseMatrix, iterations: usize, seed: u64) -> C64 {
    use rand::Rng;
    let n = a.nrows();
    let shift = C64::new(a.norm_one(), 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
    let mut x: Vec<C64> = (0..n)
        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let mut scratch = CostLedger::new();
    let mut rayleigh = C64::new(0.0, 0.0);
    for _ in 0..iterations {
        let nrm = vector::norm2(&x);
        vector::scale(C64::new(1.0 / nrm, 0.0), &mut x);
        let ax = a.spmv(&x, &mut scratch).expect("square operator");
        rayleigh = vector::dot(&x, &ax);
        x = x.iter().zip(&ax).map(|(xi, axi)| shift * xi - axi).collect();
    }
    rayleigh
}

/// Largest entrywise deviation of `J A − A* J` with `J = diag(I, −I)` split
/// at the midpoint of the index range.
pub fn spin_symmetry_defect(a: &SparseMatrix) -> Result<f64> {
    if !a.is_square() || a.nrows() % 2 != 0 {
        return Err(TraceError::InvalidArgument(
            "spin symmetry needs an even-dimensional square matrix".into(),
        ));
    }
    let half = a.nrows() / 2;
    let sign = |k: usize| if k < half { 1.0 } else { -1.0 };
    let ja = SparseMatrix::from_triplets(
        a.nrows(),
        a.ncols(),
        a.triplets().map(|(i, j, v)| (i, j, v * sign(i))).collect::<Vec<_>>(),
    )?;
    let ah = a.adjoint();
    let ahj = SparseMatrix::from_triplets(
        a.nrows(),
        a.ncols(),
        ah.triplets().map(|(i, j, v)| (i, j, v * sign(j))).collect::<Vec<_>>(),
    )?;
    ja.max_abs_diff(&ahj)
}
