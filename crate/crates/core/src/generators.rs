//! Generators and Dirichlet-form evaluators for the five process families.
//!
//! Every family is a block system `L = Σ_A α_A (P_A − I)`, where `P_A`
//! averages a function over the classes of a [`BlockPartition`]. Graph walks
//! enter through the pair embedding `α_xy = 2 c_xy`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{bregman, class_cov_flogf, class_entropy, class_var_sqrt, class_variance};
use crate::state_spaces::{
    build_space_with_caps, subsets_of_size, BlockPartition, HypergraphWeights, SpaceCaps,
    SpaceKind, StateSpace, VertexSet, WeightedGraph,
};

/// Largest state count handed to the dense symmetric eigensolver.
pub const EIGEN_STATE_CAP: usize = 2_500;

/// A weighted family of block partitions over one state space.
#[derive(Clone, Debug)]
pub struct BlockSystem {
    space: StateSpace,
    terms: Vec<(f64, BlockPartition)>,
}

impl BlockSystem {
    pub fn new(space: StateSpace, h: &HypergraphWeights) -> Result<Self> {
        if h.n() != space.n() {
            return Err(Error::domain(format!(
                "weights live on {} vertices but the space has {}",
                h.n(),
                space.n()
            )));
        }
        let terms = h
            .blocks()
            .map(|(set, w)| Ok((w, space.block_partition(set)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(BlockSystem { space, terms })
    }

    /// Raw weighted blocks without the connectivity requirement.
    pub(crate) fn from_blocks(space: StateSpace, blocks: &[(VertexSet, f64)]) -> Result<Self> {
        let terms = blocks
            .iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|&(set, w)| Ok((w, space.block_partition(set)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(BlockSystem { space, terms })
    }

    pub fn single_graph(g: &WeightedGraph) -> Result<Self> {
        Self::single_hypergraph(&HypergraphWeights::from_graph(g)?)
    }

    pub fn single_hypergraph(h: &HypergraphWeights) -> Result<Self> {
        Self::on(SpaceKind::SingleParticle { n: h.n() }, h, SpaceCaps::default())
    }

    /// `N` labeled particles updated synchronously inside each ringing block.
    pub fn synchronous(h: &HypergraphWeights, particles: usize) -> Result<Self> {
        Self::on(SpaceKind::Product { n: h.n(), particles }, h, SpaceCaps::default())
    }

    /// The α-shuffle on permutations.
    pub fn shuffle(h: &HypergraphWeights) -> Result<Self> {
        Self::on(SpaceKind::Permutations { n: h.n() }, h, SpaceCaps::default())
    }

    /// Block resampling on the slice of `r`-particle configurations.
    pub fn slice(h: &HypergraphWeights, r: usize) -> Result<Self> {
        Self::on(SpaceKind::Slice { n: h.n(), r }, h, SpaceCaps::default())
    }

    /// Pair swaps on `r`-subsets: `α_xy = 1` on every pair.
    pub fn bernoulli_laplace(n: usize, r: usize) -> Result<Self> {
        Self::slice(&pairs(n)?, r)
    }

    pub fn on(kind: SpaceKind, h: &HypergraphWeights, caps: SpaceCaps) -> Result<Self> {
        Self::new(build_space_with_caps(kind, caps)?, h)
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn n_states(&self) -> usize {
        self.space.len()
    }

    pub fn terms(&self) -> &[(f64, BlockPartition)] {
        &self.terms
    }

    pub fn generator(&self) -> Result<GeneratorMatrix> {
        let s = self.n_states();
        check_dense(s)?;
        let mut m = DMatrix::zeros(s, s);
        for (alpha, bp) in &self.terms {
            for class in bp.classes() {
                let k = class.len();
                if k < 2 {
                    continue;
                }
                let share = alpha / k as f64;
                for &i in class {
                    for &j in class {
                        m[(i as usize, j as usize)] += share;
                    }
                    m[(i as usize, i as usize)] -= alpha;
                }
            }
        }
        Ok(GeneratorMatrix {
            space: self.space.kind(),
            matrix: m,
        })
    }

    pub fn evaluator(&self) -> DirichletEvaluator {
        DirichletEvaluator::new(self)
    }
}

/// `α²`: unit weight on every pair.
pub fn pairs(n: usize) -> Result<HypergraphWeights> {
    HypergraphWeights::new(n, subsets_of_size(n, 2).into_iter().map(|s| (s, 1.0)))
}

fn check_dense(states: usize) -> Result<()> {
    const DENSE_CAP: usize = 50_000;
    if states > DENSE_CAP {
        return Err(Error::Size {
            what: "dense generator dimension",
            value: states as u128,
            cap: DENSE_CAP as u128,
        });
    }
    Ok(())
}

/// Dense generator, symmetric because all measures are uniform.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorMatrix {
    pub space: SpaceKind,
    pub matrix: DMatrix<f64>,
}

/// Structural checks on a generator.
#[derive(Clone, Debug, Serialize)]
pub struct GeneratorCheck {
    pub max_row_sum: f64,
    pub max_asymmetry: f64,
    pub min_off_diagonal: f64,
    pub scale: f64,
    pub ok: bool,
}

impl GeneratorMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(f)).as_slice().to_vec()
    }

    /// Largest absolute diagonal entry; sets the scale for tolerances.
    pub fn scale(&self) -> f64 {
        self.matrix.diagonal().amax().max(f64::MIN_POSITIVE)
    }

    pub fn check(&self) -> GeneratorCheck {
        let s = self.dim();
        let m = &self.matrix;
        let mut row = 0.0f64;
        let mut asym = 0.0f64;
        let mut off = f64::INFINITY;
        for i in 0..s {
            row = row.max(m.row(i).sum().abs());
            for j in 0..s {
                asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
                if i != j {
                    off = off.min(m[(i, j)]);
                }
            }
        }
        let scale = self.scale();
        GeneratorCheck {
            max_row_sum: row,
            max_asymmetry: asym,
            min_off_diagonal: if s > 1 { off } else { 0.0 },
            scale,
            ok: row <= 1e-12 * scale && asym <= 1e-12 * scale && (s < 2 || off >= 0.0),
        }
    }

    /// Eigendecomposition of `−L`, eigenvalues ascending.
    pub fn spectrum(&self) -> Result<Spectrum> {
        let s = self.dim();
        if s > EIGEN_STATE_CAP {
            return Err(Error::Size {
                what: "eigensolver dimension",
                value: s as u128,
                cap: EIGEN_STATE_CAP as u128,
            });
        }
        let neg = -&self.matrix;
        let sym = (&neg + neg.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let mut order: Vec<usize> = (0..s).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect::<Vec<_>>();
        let vectors = DMatrix::from_fn(s, s, |r, c| eig.eigenvectors[(r, order[c])]);
        Ok(Spectrum {
            values: DVector::from_vec(values),
            vectors,
        })
    }

    /// `exp(tL)`.
    pub fn exp(&self, t: f64) -> Result<DMatrix<f64>> {
        Ok(self.spectrum()?.semigroup(t))
    }
}

/// `−L = V diag(λ) Vᵀ` with orthonormal `V`.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn semigroup(&self, t: f64) -> DMatrix<f64> {
        let d = DVector::from_iterator(self.values.len(), self.values.iter().map(|l| (-t * l).exp()));
        &self.vectors * DMatrix::from_diagonal(&d) * self.vectors.transpose()
    }

    /// `exp(tL) f` without forming the matrix.
    pub fn evolve(&self, t: f64, f: &[f64]) -> Vec<f64> {
        let coeffs = self.vectors.tr_mul(&DVector::from_column_slice(f));
        let scaled = DVector::from_iterator(
            coeffs.len(),
            coeffs.iter().zip(self.values.iter()).map(|(c, l)| c * (-t * l).exp()),
        );
        (&self.vectors * scaled).as_slice().to_vec()
    }
}

pub fn gen_single_graph(g: &WeightedGraph) -> GeneratorMatrix {
    let n = g.n();
    let mut m = DMatrix::zeros(n, n);
    for x in 0..n {
        for y in 0..n {
            if x != y {
                m[(x, y)] = g.weight(x, y);
            }
        }
        m[(x, x)] = -g.degree(x);
    }
    GeneratorMatrix {
        space: SpaceKind::SingleParticle { n },
        matrix: m,
    }
}

pub fn gen_single_hypergraph(h: &HypergraphWeights) -> Result<GeneratorMatrix> {
    BlockSystem::single_hypergraph(h)?.generator()
}

pub fn gen_synchronous(h: &HypergraphWeights, particles: usize) -> Result<GeneratorMatrix> {
    BlockSystem::synchronous(h, particles)?.generator()
}

pub fn gen_shuffle(h: &HypergraphWeights) -> Result<GeneratorMatrix> {
    BlockSystem::shuffle(h)?.generator()
}

pub fn gen_bernoulli_laplace(n: usize, r: usize) -> Result<GeneratorMatrix> {
    BlockSystem::bernoulli_laplace(n, r)?.generator()
}

/// Local functional applied inside each block class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    Entropy,
    Variance,
    VarSqrt,
    CovFlogf,
}

impl Functional {
    fn on_class(self, v: &[f64]) -> f64 {
        match self {
            Functional::Entropy => class_entropy(v),
            Functional::Variance => class_variance(v),
            Functional::VarSqrt => class_var_sqrt(v),
            Functional::CovFlogf => class_cov_flogf(v),
        }
    }

    /// Class value at a Dirac (one entry 1, the other `k−1` zero).
    fn dirac_class(self, k: usize) -> f64 {
        let k = k as f64;
        match self {
            Functional::Entropy => k.ln(),
            Functional::Variance | Functional::VarSqrt => 1.0 - 1.0 / k,
            Functional::CovFlogf => f64::INFINITY,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct ClassRef {
    weight: f64,
    start: u32,
    len: u32,
}

/// `f ↦ Σ_A α_A μ[F_A f]` for a local functional `F`, flattened over all
/// non-trivial classes of all terms.
#[derive(Clone, Debug)]
pub struct DirichletEvaluator {
    n_states: usize,
    members: Vec<u32>,
    classes: Vec<ClassRef>,
}

impl DirichletEvaluator {
    pub fn new(system: &BlockSystem) -> Self {
        let mut members = Vec::new();
        let mut classes = Vec::new();
        for (alpha, bp) in system.terms() {
            for class in bp.classes() {
                if class.len() < 2 {
                    continue;
                }
                classes.push(ClassRef {
                    weight: *alpha,
                    start: members.len() as u32,
                    len: class.len() as u32,
                });
                members.extend_from_slice(class);
            }
        }
        DirichletEvaluator {
            n_states: system.n_states(),
            members,
            classes,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Total number of class memberships; the cost of one evaluation.
    pub fn work(&self) -> usize {
        self.members.len()
    }

    fn class(&self, c: &ClassRef) -> &[u32] {
        &self.members[c.start as usize..(c.start + c.len) as usize]
    }

    pub fn dirichlet(&self, functional: Functional, f: &[f64]) -> Result<f64> {
        if f.len() != self.n_states {
            return Err(Error::domain(format!(
                "function has {} entries, the evaluator expects {}",
                f.len(),
                self.n_states
            )));
        }
        Ok(self.eval(functional, f))
    }

    pub(crate) fn eval(&self, functional: Functional, f: &[f64]) -> f64 {
        let mut buf = Vec::new();
        let mut total = 0.0;
        for c in &self.classes {
            buf.clear();
            buf.extend(self.class(c).iter().map(|&i| f[i as usize]));
            total += c.weight * functional.on_class(&buf);
        }
        total / self.n_states as f64
    }

    /// Value of the form at the indicator of every state, in one pass.
    pub fn dirac_values(&self, functional: Functional) -> Vec<f64> {
        let mut out = vec![0.0; self.n_states];
        for c in &self.classes {
            let v = c.weight * functional.dirac_class(c.len as usize);
            for &i in self.class(c) {
                out[i as usize] += v;
            }
        }
        out.iter_mut().for_each(|v| *v /= self.n_states as f64);
        out
    }

    /// Value at `f = g²` and its gradient in `g`, accumulated into `grad`.
    pub(crate) fn eval_grad_square(&self, functional: Functional, g: &[f64], grad: &mut [f64]) -> f64 {
        let scale = 1.0 / self.n_states as f64;
        let mut total = 0.0;
        for c in &self.classes {
            let idx = self.class(c);
            let w = c.weight * scale;
            let k = idx.len() as f64;
            match functional {
                Functional::Entropy => {
                    let m = idx.iter().map(|&i| g[i as usize].powi(2)).sum::<f64>() / k;
                    if m == 0.0 {
                        continue;
                    }
                    for &i in idx {
                        let gi = g[i as usize];
                        let fi = gi * gi;
                        total += w * bregman(fi, m);
                        if gi != 0.0 {
                            grad[i as usize] += w * 2.0 * gi * (fi / m).ln();
                        }
                    }
                }
                Functional::Variance => {
                    let m = idx.iter().map(|&i| g[i as usize].powi(2)).sum::<f64>() / k;
                    for &i in idx {
                        let gi = g[i as usize];
                        let d = gi * gi - m;
                        total += w * d * d;
                        grad[i as usize] += w * 4.0 * gi * d;
                    }
                }
                Functional::VarSqrt => {
                    let m = idx.iter().map(|&i| g[i as usize].abs()).sum::<f64>() / k;
                    for &i in idx {
                        let gi = g[i as usize];
                        let d = gi.abs() - m;
                        total += w * d * d;
                        grad[i as usize] += w * 2.0 * d * gi.signum();
                    }
                }
                Functional::CovFlogf => {
                    let mut buf: Vec<f64> = idx.iter().map(|&i| g[i as usize].powi(2)).collect();
                    total += w * class_cov_flogf(&buf);
                    let m = buf.iter().sum::<f64>() / k;
                    let lbar = buf.iter().map(|x| x.ln()).sum::<f64>() / k;
                    for (x, &i) in buf.iter_mut().zip(idx) {
                        let d = x.ln() - lbar + 1.0 - m / *x;
                        grad[i as usize] += w * 2.0 * g[i as usize] * d;
                    }
                }
            }
        }
        total
    }
}

/// Generator of the same system as a sum of projectors, as an operator
/// on functions; avoids the dense matrix for larger spaces.
pub fn apply_block_system(system: &BlockSystem, f: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; f.len()];
    for (alpha, bp) in system.terms() {
        for class in bp.classes() {
            if class.len() < 2 {
                continue;
            }
            let m = class.iter().map(|&i| f[i as usize]).sum::<f64>() / class.len() as f64;
            for &i in class {
                out[i as usize] += alpha * (m - f[i as usize]);
            }
        }
    }
    out
}

/// Position of particle `label` in `state`.
pub fn vertex_of_label(space: &StateSpace, state: usize, label: usize) -> usize {
    match space.kind() {
        SpaceKind::SingleParticle { .. } => space.state(state)[0] as usize,
        SpaceKind::Product { .. } => space.state(state)[label] as usize,
        SpaceKind::Permutations { .. } => space
            .state(state)
            .iter()
            .position(|&l| l as usize == label)
            .expect("every label sits somewhere"),
        SpaceKind::Slice { .. } => panic!("slice particles are unlabeled"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::variance;
    use crate::state_spaces::{graph_from_hypergraph, mean_field_expand, MeanFieldWeights, VertexSet};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mat(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), rows.len(), |i, j| rows[i][j])
    }

    fn assert_mat_close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        assert!((a - b).amax() <= tol, "\n{a}\n{b}");
    }

    fn mf(n: usize, ell: usize, t: f64) -> HypergraphWeights {
        mean_field_expand(&MeanFieldWeights::single(n, ell, t).unwrap())
    }

    fn random_hypergraph(n: usize, rng: &mut ChaCha8Rng) -> HypergraphWeights {
        loop {
            let mut blocks = Vec::new();
            for m in (3u64..1 << n).filter(|m| m.count_ones() >= 2) {
                if rng.gen_bool(0.4) {
                    blocks.push((VertexSet::from_bits(m), rng.gen_range(0.1..2.0)));
                }
            }
            if let Ok(h) = HypergraphWeights::new(n, blocks) {
                return h;
            }
        }
    }

    #[test]
    fn single_graph_examples() {
        let l = gen_single_graph(&WeightedGraph::complete(2, 1.0).unwrap());
        assert_eq!(l.matrix, mat(&[&[-1.0, 1.0], &[1.0, -1.0]]));
        let l = gen_single_graph(&WeightedGraph::complete(3, 1.0).unwrap());
        assert_eq!(l.matrix, mat(&[&[-2.0, 1.0, 1.0], &[1.0, -2.0, 1.0], &[1.0, 1.0, -2.0]]));
        let l = gen_single_graph(&WeightedGraph::star(3, 0).unwrap());
        assert_eq!(l.matrix, mat(&[&[-2.0, 1.0, 1.0], &[1.0, -1.0, 0.0], &[1.0, 0.0, -1.0]]));
    }

    #[test]
    fn single_hypergraph_examples() {
        let h = HypergraphWeights::new(2, [(VertexSet::pair(0, 1), 1.0)]).unwrap();
        assert_mat_close(
            &gen_single_hypergraph(&h).unwrap().matrix,
            &mat(&[&[-0.5, 0.5], &[0.5, -0.5]]),
            1e-15,
        );
        let h = HypergraphWeights::new(3, [(VertexSet::full(3), 1.0)]).unwrap();
        let want = DMatrix::from_element(3, 3, 1.0 / 3.0) - DMatrix::identity(3, 3);
        assert_mat_close(&gen_single_hypergraph(&h).unwrap().matrix, &want, 1e-15);
        let g = WeightedGraph::complete(3, 0.5).unwrap();
        assert_mat_close(
            &gen_single_hypergraph(&mf(3, 2, 1.0)).unwrap().matrix,
            &gen_single_graph(&g).matrix,
            1e-15,
        );
    }

    #[test]
    fn hypergraph_generator_matches_projected_graph() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 2..7 {
            let h = random_hypergraph(n, &mut rng);
            let a = gen_single_hypergraph(&h).unwrap();
            let b = gen_single_graph(&graph_from_hypergraph(&h));
            assert_mat_close(&a.matrix, &b.matrix, 1e-13);
        }
    }

    #[test]
    fn synchronous_examples() {
        let h = mf(3, 2, 1.3);
        assert_mat_close(
            &gen_synchronous(&h, 1).unwrap().matrix,
            &gen_single_hypergraph(&h).unwrap().matrix,
            1e-15,
        );
        let h = HypergraphWeights::new(2, [(VertexSet::pair(0, 1), 1.0)]).unwrap();
        let want = DMatrix::from_element(4, 4, 0.25) - DMatrix::identity(4, 4);
        assert_mat_close(&gen_synchronous(&h, 2).unwrap().matrix, &want, 1e-15);
        let l = gen_synchronous(&mf(3, 2, 1.0), 2).unwrap();
        assert!(l.apply(&[2.5; 9]).iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn shuffle_examples() {
        let h = HypergraphWeights::new(2, [(VertexSet::pair(0, 1), 1.0)]).unwrap();
        assert_mat_close(
            &gen_shuffle(&h).unwrap().matrix,
            &mat(&[&[-0.5, 0.5], &[0.5, -0.5]]),
            1e-15,
        );
        let h = HypergraphWeights::new(4, [(VertexSet::full(4), 1.0)]).unwrap();
        let spec = gen_shuffle(&h).unwrap().spectrum().unwrap();
        assert!((spec.values[1] - 1.0).abs() < 1e-12);
        let l = gen_shuffle(&mf(3, 2, 2.0)).unwrap();
        assert!(l.check().ok);
        // interchange on K_3: each transposition at rate 1
        for i in 0..6 {
            let off: Vec<f64> = (0..6).filter(|&j| j != i).map(|j| l.matrix[(i, j)]).collect();
            assert_eq!(off.iter().filter(|&&v| v == 1.0).count(), 3);
        }
    }

    #[test]
    fn bernoulli_laplace_examples() {
        let l = gen_bernoulli_laplace(2, 1).unwrap();
        assert_mat_close(&l.matrix, &mat(&[&[-0.5, 0.5], &[0.5, -0.5]]), 1e-15);
        for n in 3..7 {
            let g1 = gen_bernoulli_laplace(n, 1).unwrap().spectrum().unwrap().values[1];
            let g2 = gen_single_hypergraph(&pairs(n).unwrap()).unwrap().spectrum().unwrap().values[1];
            assert!((g1 - g2).abs() < 1e-12);
            assert!((g1 - n as f64 / 2.0).abs() < 1e-12);
            for r in 1..n {
                let a = gen_bernoulli_laplace(n, r).unwrap().spectrum().unwrap();
                let b = gen_bernoulli_laplace(n, n - r).unwrap().spectrum().unwrap();
                assert!((&a.values - &b.values).amax() < 1e-11);
            }
        }
    }

    #[test]
    fn generators_are_valid_and_variance_form_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut systems = vec![
            BlockSystem::single_graph(&WeightedGraph::from_edges(4, &[(0, 1, 0.3), (1, 2, 2.0), (2, 3, 1.1), (0, 3, 0.7)]).unwrap()).unwrap(),
            BlockSystem::bernoulli_laplace(6, 2).unwrap(),
        ];
        for n in 2..5 {
            let h = random_hypergraph(n, &mut rng);
            systems.push(BlockSystem::single_hypergraph(&h).unwrap());
            systems.push(BlockSystem::synchronous(&h, 2).unwrap());
            systems.push(BlockSystem::shuffle(&h).unwrap());
            if n >= 3 {
                systems.push(BlockSystem::slice(&h, 1).unwrap());
            }
        }
        for sys in &systems {
            let l = sys.generator().unwrap();
            let check = l.check();
            assert!(check.ok, "{check:?}");
            let ev = sys.evaluator();
            for _ in 0..5 {
                let f: Vec<f64> = (0..sys.n_states()).map(|_| rng.gen_range(0.0..3.0)).collect();
                let lf = l.apply(&f);
                let form = -f.iter().zip(&lf).map(|(a, b)| a * b).sum::<f64>() / f.len() as f64;
                let d = ev.dirichlet(Functional::Variance, &f).unwrap();
                assert!((d - form).abs() <= 1e-10 * form.abs().max(1e-300), "{d} {form}");
                let op = apply_block_system(sys, &f);
                assert!(op.iter().zip(&lf).all(|(a, b)| (a - b).abs() < 1e-12));
            }
            assert!(ev.dirichlet(Functional::Entropy, &vec![1.7; sys.n_states()]).unwrap() < 1e-28);
        }
    }

    #[test]
    fn dirac_dirichlet_values() {
        fn binom(n: usize, k: usize) -> f64 {
            (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
        }
        for n in 2..7 {
            for ell in 2..=n {
                let ev = BlockSystem::single_hypergraph(&mf(n, ell, 1.0)).unwrap().evaluator();
                let mut f = vec![0.0; n];
                f[1] = 1.0;
                let want = binom(n - 1, ell - 1) * (ell as f64).ln() / n as f64;
                let got = ev.dirichlet(Functional::Entropy, &f).unwrap();
                assert!((got - want).abs() < 1e-14);
                assert!((ev.dirac_values(Functional::Entropy)[1] - want).abs() < 1e-14);

                if n <= 5 {
                    let ev = BlockSystem::shuffle(&mf(n, ell, 1.0)).unwrap().evaluator();
                    let s = ev.n_states();
                    let mut f = vec![0.0; s];
                    f[s / 2] = 1.0;
                    let lf: f64 = (2..=ell).map(|k| (k as f64).ln()).sum();
                    let want = binom(n, ell) * lf / s as f64;
                    assert!((ev.dirichlet(Functional::Entropy, &f).unwrap() - want).abs() < 1e-14);
                    assert!((ev.dirac_values(Functional::Entropy)[s / 2] - want).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sys = BlockSystem::shuffle(&random_hypergraph(4, &mut rng)).unwrap();
        let ev = sys.evaluator();
        let s = sys.n_states();
        let g: Vec<f64> = (0..s).map(|_| rng.gen_range(0.3..1.5)).collect();
        for func in [Functional::Entropy, Functional::Variance, Functional::VarSqrt, Functional::CovFlogf] {
            let mut grad = vec![0.0; s];
            let v = ev.eval_grad_square(func, &g, &mut grad);
            let f: Vec<f64> = g.iter().map(|x| x * x).collect();
            assert!((v - ev.eval(func, &f)).abs() < 1e-13);
            for i in [0, 5, 17] {
                let h = 1e-6;
                let mut gp = g.clone();
                gp[i] += h;
                let mut gm = g.clone();
                gm[i] -= h;
                let fd = (ev.eval(func, &gp.iter().map(|x| x * x).collect::<Vec<_>>())
                    - ev.eval(func, &gm.iter().map(|x| x * x).collect::<Vec<_>>()))
                    / (2.0 * h);
                assert!((fd - grad[i]).abs() < 1e-7, "{func:?} {fd} {}", grad[i]);
            }
        }
    }

    #[test]
    fn semigroup_is_stochastic() {
        let l = gen_shuffle(&mf(4, 3, 1.0)).unwrap();
        let spec = l.spectrum().unwrap();
        for t in [0.01, 0.3, 2.0, 10.0] {
            let p = spec.semigroup(t);
            assert!(p.min() >= -1e-12);
            for i in 0..p.nrows() {
                assert!((p.row(i).sum() - 1.0).abs() < 1e-12);
            }
        }
        let f: Vec<f64> = (0..24).map(|i| (i % 5) as f64).collect();
        let a = spec.evolve(0.7, &f);
        let b = &spec.semigroup(0.7) * DVector::from_vec(f.clone());
        assert!(a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < 1e-12));
        assert!((variance(&spec.evolve(50.0, &f))).abs() < 1e-12);
    }

    #[test]
    fn shuffle_projects_onto_single_particle_walk() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 3..6 {
            let h = random_hypergraph(n, &mut rng);
            let shuffle = BlockSystem::shuffle(&h).unwrap();
            let single = gen_single_graph(&graph_from_hypergraph(&h));
            let phi: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let label = rng.gen_range(0..n);
            let space = shuffle.space();
            let lifted: Vec<f64> = (0..space.len()).map(|s| phi[vertex_of_label(space, s, label)]).collect();
            let lphi = single.apply(&phi);
            let got = apply_block_system(&shuffle, &lifted);
            for s in 0..space.len() {
                assert!((got[s] - lphi[vertex_of_label(space, s, label)]).abs() < 1e-12);
            }
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn random_block_generators_are_valid(
            n in 2usize..=5,
            blocks in proptest::collection::vec((1u64..32, 0.05f64..2.0), 1..5),
        ) {
            let full = (1u64 << n) - 1;
            // a path keeps every draw connected
            let path = (0..n - 1).map(|i| (VertexSet::from_bits(0b11 << i), 0.5));
            let blocks: Vec<(VertexSet, f64)> = blocks
                .into_iter()
                .map(|(bits, w)| (VertexSet::from_bits(bits & full), w))
                .filter(|(s, _)| s.len() >= 2)
                .chain(path)
                .collect();
            let h = HypergraphWeights::new(n, blocks).unwrap();
            for g in [gen_single_hypergraph(&h), gen_synchronous(&h, 2), gen_shuffle(&h)] {
                let c = g.unwrap().check();
                proptest::prop_assert!(c.ok, "{c:?}");
            }
        }
    }
}
