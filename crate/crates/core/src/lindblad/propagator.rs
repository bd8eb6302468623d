//! Exact powers of the RK4 step on the reachable part of ρ.
//!
//! The generator maps each matrix unit `E_ij` to a sparse combination of
//! matrix units. Starting from the entries where ρ(0) is nonzero, only the
//! entries reachable through those columns ever become nonzero. The reachable
//! entries split into components that do not interact:
//!
//! * a component equal to its own transpose carries a Hermitian block and is
//!   propagated in real coordinates (diagonals and real/imaginary parts of the
//!   upper triangle);
//! * otherwise the transposed component is its complex conjugate, so only one
//!   of the pair is propagated, in complex coordinates.
//!
//! Optionally, groups of entries can be declared *sinks*: their internal
//! dynamics is not tracked and only the sum of their diagonal entries is
//! accumulated. This is exact for RK4 as long as the sink feeds nothing else
//! and its internal dynamics preserves its trace, which is verified.

use std::collections::BTreeMap;

use num_complex::Complex;
use num_traits::{NumAssign, Zero};

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::scalar::Real;

use super::LindbladGenerator;

type Column<T> = Vec<(usize, Complex<T>)>;

/// Sparse columns of the superoperator, built on demand.
struct Superoperator<T> {
    dim: usize,
    heff_cols: Vec<Column<T>>,
    jumps: Vec<(T, Vec<Column<T>>)>,
}

fn sparse_columns<T: Real>(m: &CMatrix<T>) -> Vec<Column<T>> {
    (0..m.cols())
        .map(|c| (0..m.rows()).filter(|&r| !m[(r, c)].is_zero()).map(|r| (r, m[(r, c)])).collect())
        .collect()
}

impl<T: Real> Superoperator<T> {
    fn new(gen: &LindbladGenerator<T>) -> Self {
        let dim = gen.space().dim();
        let heff_cols = sparse_columns(gen.minus_i_heff());
        let jumps = gen.jump_operators().iter().map(|(r, l)| (*r, sparse_columns(l))).collect();
        Self { dim, heff_cols, jumps }
    }

    /// Image of `E_ij` as (flat index, value) pairs with exact zeros removed.
    fn column(&self, i: usize, j: usize) -> Column<T> {
        let d = self.dim;
        let mut acc: BTreeMap<usize, Complex<T>> = BTreeMap::new();
        // K E_ij with K = −iH_eff
        for &(k, v) in &self.heff_cols[i] {
            *acc.entry(k * d + j).or_insert_with(Complex::zero) += v;
        }
        // E_ij K†
        for &(k, v) in &self.heff_cols[j] {
            *acc.entry(i * d + k).or_insert_with(Complex::zero) += v.conj();
        }
        for (rate, cols) in &self.jumps {
            for &(k, lk) in &cols[i] {
                for &(l, ll) in &cols[j] {
                    *acc.entry(k * d + l).or_insert_with(Complex::zero) += lk * ll.conj() * *rate;
                }
            }
        }
        acc.into_iter().filter(|(_, v)| !v.is_zero()).collect()
    }
}

#[derive(Clone, Debug)]
enum Kind {
    /// Hermitian block in real coordinates.
    Real { vars: Vec<RealVar>, sinks: Vec<usize> },
    /// One of a conjugate pair, in complex coordinates.
    Complex { entries: Vec<usize> },
}

#[derive(Clone, Copy, Debug)]
enum RealVar {
    Diag(usize),
    Re(usize),
    Im(usize),
}

#[derive(Clone, Debug)]
struct Component<T> {
    kind: Kind,
    // Row-major generator restricted to the component; for real components
    // the last `sinks.len()` rows accumulate sink traces.
    real_gen: Vec<T>,
    complex_gen: Vec<Complex<T>>,
}

impl<T> Component<T> {
    fn size(&self) -> usize {
        match &self.kind {
            Kind::Real { vars, sinks } => vars.len() + sinks.len(),
            Kind::Complex { entries } => entries.len(),
        }
    }
}

/// The reachable, decoupled pieces of a master equation for one initial
/// support pattern.
#[derive(Clone, Debug)]
pub struct ReducedSystem<T> {
    dim: usize,
    components: Vec<Component<T>>,
    sink_groups: Vec<Vec<usize>>,
}

/// State of a [`ReducedSystem`]: one coordinate vector per component.
#[derive(Clone, Debug)]
pub struct PackedState<T> {
    real: Vec<Vec<T>>,
    complex: Vec<Vec<Complex<T>>>,
}

/// Evolved matrix (untracked and sink entries zero) plus sink traces.
#[derive(Clone, Debug)]
pub struct ReducedState<T> {
    matrix: CMatrix<T>,
    sink_traces: Vec<T>,
}

impl<T: Real> ReducedState<T> {
    pub fn matrix(&self) -> &CMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix<T> {
        self.matrix
    }

    /// Summed diagonal of sink group `g`.
    pub fn sink_trace(&self, g: usize) -> T {
        self.sink_traces[g]
    }

    /// Trace of the tracked entries plus all sink traces.
    pub fn total_trace(&self) -> T {
        self.matrix.trace().re + self.sink_traces.iter().copied().sum::<T>()
    }
}

/// `P^steps` for every component.
#[derive(Clone, Debug)]
pub struct Propagator<T> {
    real: Vec<(usize, Vec<T>)>,
    complex: Vec<(usize, Vec<Complex<T>>)>,
}

impl<T: Real> Propagator<T> {
    pub fn apply(&self, state: &PackedState<T>) -> PackedState<T> {
        PackedState {
            real: self.real.iter().zip(&state.real).map(|((n, p), x)| matvec(*n, p, x)).collect(),
            complex: self.complex.iter().zip(&state.complex).map(|((n, p), x)| matvec(*n, p, x)).collect(),
        }
    }
}

impl<T: Real> ReducedSystem<T> {
    /// Builds the reduced system for initial states supported on the nonzero
    /// entries of `support`. Each sink group lists flat indices `i·d + j`.
    pub fn new(gen: &LindbladGenerator<T>, support: &CMatrix<T>, sinks: &[Vec<usize>]) -> Result<Self> {
        let d = gen.space().dim();
        if support.rows() != d || support.cols() != d {
            return Err(Error::SpaceMismatch);
        }
        let sup = Superoperator::new(gen);
        let n2 = d * d;
        for i in 0..d {
            for j in 0..i {
                if support[(i, j)].is_zero() != support[(j, i)].is_zero() {
                    return Err(Error::Subspace("initial support must be symmetric".into()));
                }
            }
        }

        let mut sink_of = vec![usize::MAX; n2];
        for (g, group) in sinks.iter().enumerate() {
            for &e in group {
                if e >= n2 || sink_of[e] != usize::MAX {
                    return Err(Error::Subspace(format!("sink entry {e} invalid or listed twice")));
                }
                sink_of[e] = g;
            }
        }

        // Reachability from the initial support.
        let mut columns: Vec<Option<Column<T>>> = vec![None; n2];
        let mut stack: Vec<usize> = (0..n2).filter(|&e| !support.as_slice()[e].is_zero()).collect();
        while let Some(e) = stack.pop() {
            if columns[e].is_some() {
                continue;
            }
            let col = sup.column(e / d, e % d);
            for &(f, _) in &col {
                if columns[f].is_none() {
                    stack.push(f);
                }
            }
            columns[e] = Some(col);
        }

        // Sinks must be closed and trace-neutral.
        for (e, col) in columns.iter().enumerate() {
            let (Some(col), g) = (col, sink_of[e]) else {
                continue;
            };
            if g == usize::MAX {
                continue;
            }
            let mut trace = Complex::<T>::zero();
            let mut scale = T::zero();
            for &(f, v) in col {
                if sink_of[f] != g {
                    return Err(Error::Subspace(format!("sink {g} feeds entry ({}, {})", f / d, f % d)));
                }
                if f / d == f % d {
                    trace += v;
                }
                scale = scale.max(v.norm());
            }
            if trace.norm() > T::lit(1e-10) * scale {
                return Err(Error::Subspace(format!("sink {g} does not conserve its trace")));
            }
        }

        // Undirected components of the tracked entries.
        let tracked = |e: usize| columns[e].is_some() && sink_of[e] == usize::MAX;
        let mut parent: Vec<usize> = (0..n2).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for (e, column) in columns.iter().enumerate() {
            let Some(column) = column.as_ref().filter(|_| tracked(e)) else {
                continue;
            };
            for &(f, _) in column {
                if tracked(f) {
                    let (a, b) = (find(&mut parent, e), find(&mut parent, f));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for e in 0..n2 {
            if tracked(e) {
                let r = find(&mut parent, e);
                groups.entry(r).or_default().push(e);
            }
        }

        let transpose = |e: usize| (e % d) * d + e / d;
        let mut components = Vec::new();
        let mut skip = vec![false; n2];
        for (root, entries) in &groups {
            if skip[*root] {
                continue;
            }
            let t_root = find(&mut parent, transpose(entries[0]));
            if t_root == *root {
                components.push(build_real(&columns, entries, &sink_of, sinks.len(), d)?);
            } else {
                skip[t_root] = true;
                for &e in entries {
                    if columns[e].as_ref().unwrap().iter().any(|&(f, _)| sink_of[f] != usize::MAX) {
                        return Err(Error::Subspace("a coherence block feeds a sink".into()));
                    }
                }
                components.push(build_complex(&columns, entries));
            }
        }

        Ok(Self { dim: d, components, sink_groups: sinks.to_vec() })
    }

    /// Real dimension of the propagated system (complex coordinates count twice).
    pub fn real_dimension(&self) -> usize {
        self.components
            .iter()
            .map(|c| match c.kind {
                Kind::Real { .. } => c.size(),
                Kind::Complex { .. } => 2 * c.size(),
            })
            .sum()
    }

    pub fn component_sizes(&self) -> Vec<usize> {
        self.components.iter().map(|c| c.size()).collect()
    }

    /// Coordinates of `rho` (entries outside the reachable set are ignored).
    pub fn pack(&self, rho: &CMatrix<T>) -> PackedState<T> {
        let at = |e: usize| rho.as_slice()[e];
        let mut real = Vec::new();
        let mut complex = Vec::new();
        for c in &self.components {
            match &c.kind {
                Kind::Real { vars, sinks } => {
                    let mut x: Vec<T> = vars
                        .iter()
                        .map(|v| match *v {
                            RealVar::Diag(e) | RealVar::Re(e) => at(e).re,
                            RealVar::Im(e) => at(e).im,
                        })
                        .collect();
                    x.extend(std::iter::repeat_n(T::zero(), sinks.len()));
                    real.push(x);
                }
                Kind::Complex { entries } => complex.push(entries.iter().map(|&e| at(e)).collect()),
            }
        }
        PackedState { real, complex }
    }

    /// Matrix and sink traces from coordinates. Sink traces include the
    /// initial sink content of `initial`, when given.
    fn unpack_with(&self, state: &PackedState<T>, initial: Option<&CMatrix<T>>) -> ReducedState<T> {
        let d = self.dim;
        let mut m = CMatrix::zeros(d, d);
        let mut sink_traces: Vec<T> = self
            .sink_groups
            .iter()
            .map(|g| match initial {
                Some(r) => g.iter().filter(|&&e| e / d == e % d).map(|&e| r.as_slice()[e].re).sum(),
                None => T::zero(),
            })
            .collect();
        let (mut ri, mut ci) = (0, 0);
        for c in &self.components {
            match &c.kind {
                Kind::Real { vars, sinks } => {
                    let x = &state.real[ri];
                    ri += 1;
                    let data = m.as_mut_slice();
                    for (v, &val) in vars.iter().zip(x) {
                        match *v {
                            RealVar::Diag(e) => data[e] = Complex::new(val, T::zero()),
                            RealVar::Re(e) => {
                                data[e].re = val;
                                let t = (e % d) * d + e / d;
                                data[t].re = val;
                            }
                            RealVar::Im(e) => {
                                data[e].im = val;
                                let t = (e % d) * d + e / d;
                                data[t].im = -val;
                            }
                        }
                    }
                    for (k, &g) in sinks.iter().enumerate() {
                        sink_traces[g] += x[vars.len() + k];
                    }
                }
                Kind::Complex { entries } => {
                    let x = &state.complex[ci];
                    ci += 1;
                    let data = m.as_mut_slice();
                    for (&e, &val) in entries.iter().zip(x) {
                        data[e] = val;
                        data[(e % d) * d + e / d] = val.conj();
                    }
                }
            }
        }
        ReducedState { matrix: m, sink_traces }
    }

    /// Matrix from coordinates; sink traces count only what flowed in.
    pub fn unpack(&self, state: &PackedState<T>) -> ReducedState<T> {
        self.unpack_with(state, None)
    }

    /// `steps` RK4 steps of size `h` applied to `rho0`.
    pub fn evolve(&self, rho0: &CMatrix<T>, h: T, steps: u64) -> Result<ReducedState<T>> {
        let x0 = self.pack(rho0);
        let mut real = Vec::with_capacity(x0.real.len());
        let mut complex = Vec::with_capacity(x0.complex.len());
        let (mut ri, mut ci) = (0, 0);
        for c in &self.components {
            match c.kind {
                Kind::Real { .. } => {
                    let p = rk4_matrix(c.size(), &c.real_gen, h, T::gemm);
                    real.push(power_apply(c.size(), p, steps, x0.real[ri].clone(), T::gemm));
                    ri += 1;
                }
                Kind::Complex { .. } => {
                    let hc = Complex::new(h, T::zero());
                    let p = rk4_matrix(c.size(), &c.complex_gen, hc, T::cgemm);
                    complex.push(power_apply(c.size(), p, steps, x0.complex[ci].clone(), T::cgemm));
                    ci += 1;
                }
            }
        }
        let out = self.unpack_with(&PackedState { real, complex }, Some(rho0));
        let finite = out.matrix.as_slice().iter().all(|z| z.re.is_finite() && z.im.is_finite())
            && out.sink_traces.iter().all(|t| t.is_finite());
        if !finite {
            return Err(Error::NonFinite("propagated state".into()));
        }
        Ok(out)
    }

    /// Explicit `P^steps` for repeated application.
    pub fn propagator(&self, h: T, steps: u64) -> Propagator<T> {
        let mut real = Vec::new();
        let mut complex = Vec::new();
        for c in &self.components {
            let n = c.size();
            match c.kind {
                Kind::Real { .. } => {
                    let p = rk4_matrix(n, &c.real_gen, h, T::gemm);
                    real.push((n, power_matrix(n, p, steps, T::gemm)));
                }
                Kind::Complex { .. } => {
                    let p = rk4_matrix(n, &c.complex_gen, Complex::new(h, T::zero()), T::cgemm);
                    complex.push((n, power_matrix(n, p, steps, T::cgemm)));
                }
            }
        }
        Propagator { real, complex }
    }
}

fn build_real<T: Real>(
    columns: &[Option<Column<T>>],
    entries: &[usize],
    sink_of: &[usize],
    n_sinks: usize,
    d: usize,
) -> Result<Component<T>> {
    // Coordinates: diagonal entries and the upper triangle.
    let mut vars = Vec::new();
    let mut index = BTreeMap::new();
    for &e in entries {
        let (i, j) = (e / d, e % d);
        if i == j {
            index.insert(e, (vars.len(), None));
            vars.push(RealVar::Diag(e));
        } else if i < j {
            index.insert(e, (vars.len(), Some(vars.len() + 1)));
            vars.push(RealVar::Re(e));
            vars.push(RealVar::Im(e));
        }
    }
    let mut fed = vec![false; n_sinks];
    for &e in entries {
        for &(f, _) in columns[e].as_ref().unwrap() {
            if sink_of[f] != usize::MAX && f / d == f % d {
                fed[sink_of[f]] = true;
            }
        }
    }
    let sinks: Vec<usize> = (0..n_sinks).filter(|&g| fed[g]).collect();
    let nv = vars.len();
    let n = nv + sinks.len();
    let mut a = vec![T::zero(); n * n];

    for &e in entries {
        let (i, j) = (e / d, e % d);
        // ρ_e = u + i·s·v in terms of the coordinates of the upper entry.
        let (upper, s) = if i <= j { (e, T::one()) } else { (j * d + i, -T::one()) };
        let (cu, cv) = index[&upper];
        for &(f, val) in columns[e].as_ref().unwrap() {
            let (ar, ai) = (val.re, val.im);
            let (k, l) = (f / d, f % d);
            if sink_of[f] != usize::MAX {
                if k == l {
                    let row = nv + sinks.iter().position(|&g| g == sink_of[f]).unwrap();
                    a[row * n + cu] += ar;
                    if let Some(cv) = cv {
                        a[row * n + cv] -= s * ai;
                    }
                }
                continue;
            }
            if k > l {
                continue;
            }
            let (ru, rv) = index[&f];
            a[ru * n + cu] += ar;
            if let Some(cv) = cv {
                a[ru * n + cv] -= s * ai;
            }
            if let Some(rv) = rv {
                a[rv * n + cu] += ai;
                if let Some(cv) = cv {
                    a[rv * n + cv] += s * ar;
                }
            }
        }
    }
    Ok(Component { kind: Kind::Real { vars, sinks }, real_gen: a, complex_gen: Vec::new() })
}

fn build_complex<T: Real>(columns: &[Option<Column<T>>], entries: &[usize]) -> Component<T> {
    let n = entries.len();
    let pos: BTreeMap<usize, usize> = entries.iter().enumerate().map(|(k, &e)| (e, k)).collect();
    let mut a = vec![Complex::zero(); n * n];
    for (col, &e) in entries.iter().enumerate() {
        for &(f, val) in columns[e].as_ref().unwrap() {
            let row = pos[&f];
            a[row * n + col] += val;
        }
    }
    Component { kind: Kind::Complex { entries: entries.to_vec() }, real_gen: Vec::new(), complex_gen: a }
}

type Gemm<E> = fn(usize, usize, usize, &[E], &[E], &mut [E]);

fn matmul<E: Copy + Zero>(n: usize, a: &[E], b: &[E], gemm: Gemm<E>) -> Vec<E> {
    let mut c = vec![E::zero(); n * n];
    gemm(n, n, n, a, b, &mut c);
    c
}

fn matvec<E: Copy + NumAssign>(n: usize, p: &[E], x: &[E]) -> Vec<E> {
    (0..n)
        .map(|i| {
            let mut acc = E::zero();
            for (&pij, &xj) in p[i * n..(i + 1) * n].iter().zip(x) {
                acc += pij * xj;
            }
            acc
        })
        .collect()
}

/// One RK4 step as a matrix: `I + B(I + B/2(I + B/3(I + B/4)))`, `B = hA`.
fn rk4_matrix<E: Copy + NumAssign>(n: usize, a: &[E], h: E, gemm: Gemm<E>) -> Vec<E> {
    let two = E::one() + E::one();
    let three = two + E::one();
    let four = two + two;
    let b: Vec<E> = a.iter().map(|&x| x * h).collect();
    let add_identity = |m: &mut Vec<E>| {
        for i in 0..n {
            m[i * n + i] += E::one();
        }
    };
    let mut m: Vec<E> = b.iter().map(|&x| x / four).collect();
    add_identity(&mut m);
    for k in [three, two] {
        let bk: Vec<E> = b.iter().map(|&x| x / k).collect();
        m = matmul(n, &bk, &m, gemm);
        add_identity(&mut m);
    }
    m = matmul(n, &b, &m, gemm);
    add_identity(&mut m);
    m
}

/// `P^steps · x` by binary exponentiation.
fn power_apply<E: Copy + NumAssign>(n: usize, mut p: Vec<E>, mut steps: u64, mut x: Vec<E>, gemm: Gemm<E>) -> Vec<E> {
    while steps > 0 {
        if steps & 1 == 1 {
            x = matvec(n, &p, &x);
        }
        steps >>= 1;
        if steps > 0 {
            p = matmul(n, &p, &p, gemm);
        }
    }
    x
}

/// `P^steps` by binary exponentiation.
fn power_matrix<E: Copy + NumAssign>(n: usize, mut p: Vec<E>, mut steps: u64, gemm: Gemm<E>) -> Vec<E> {
    let mut acc: Option<Vec<E>> = None;
    while steps > 0 {
        if steps & 1 == 1 {
            acc = Some(match acc {
                None => p.clone(),
                Some(a) => matmul(n, &a, &p, gemm),
            });
        }
        steps >>= 1;
        if steps > 0 {
            p = matmul(n, &p, &p, gemm);
        }
    }
    acc.unwrap_or_else(|| {
        let mut id = vec![E::zero(); n * n];
        for i in 0..n {
            id[i * n + i] = E::one();
        }
        id
    })
}
