//! Dense row-major matrices, element-wise activations, and seeded
//! initialization. Vectors are plain `[f64]` slices; batching is a loop over
//! samples, so `matvec` and its transposed/outer-product companions are the
//! whole kernel surface.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Panics if either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be >= 1, got {rows}x{cols}");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!("matrix dimensions must be >= 1, got {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::shape("Matrix::from_vec", format!("{rows}x{cols}"), format!("len {}", data.len())));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::shape("Matrix::from_rows", format!("row len {cols}"), format!("row len {}", bad.len())));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// An `n x 1` column, the storage used for bias and diagonal vectors.
    pub fn column(v: &[f64]) -> Result<Self> {
        Self::from_vec(v.len(), 1, v.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn shape_str(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }
}

/// `y = A x`.
pub fn matvec(a: &Matrix, x: &[f64]) -> Result<Vec<f64>> {
    if a.cols != x.len() {
        return Err(Error::shape("matvec", a.shape_str(), format!("vector of len {}", x.len())));
    }
    let mut y = vec![0.0; a.rows];
    matvec_acc(a, x, &mut y);
    Ok(y)
}

/// `y += A x`. Shapes are the caller's responsibility (debug-asserted).
#[inline]
pub fn matvec_acc(a: &Matrix, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(a.cols, x.len());
    debug_assert_eq!(a.rows, y.len());
    for (yi, row) in y.iter_mut().zip(a.data.chunks_exact(a.cols)) {
        *yi += dot(row, x);
    }
}

/// `y += Aᵀ g`.
#[inline]
pub fn matvec_t_acc(a: &Matrix, g: &[f64], y: &mut [f64]) {
    debug_assert_eq!(a.rows, g.len());
    debug_assert_eq!(a.cols, y.len());
    for (gi, row) in g.iter().zip(a.data.chunks_exact(a.cols)) {
        if *gi == 0.0 {
            continue;
        }
        axpy(*gi, row, y);
    }
}

/// `A += g xᵀ`.
#[inline]
pub fn outer_acc(a: &mut Matrix, g: &[f64], x: &[f64]) {
    debug_assert_eq!(a.rows, g.len());
    debug_assert_eq!(a.cols, x.len());
    let cols = a.cols;
    for (gi, row) in g.iter().zip(a.data.chunks_exact_mut(cols)) {
        if *gi == 0.0 {
            continue;
        }
        axpy(*gi, x, row);
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn add(u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    if u.len() != v.len() {
        return Err(Error::shape("add", u.len(), v.len()));
    }
    Ok(u.iter().zip(v).map(|(a, b)| a + b).collect())
}

/// Element-wise product `u ⊙ v`.
pub fn hadamard(u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    if u.len() != v.len() {
        return Err(Error::shape("hadamard", u.len(), v.len()));
    }
    Ok(u.iter().zip(v).map(|(a, b)| a * b).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::Sigmoid, Activation::Tanh, Activation::Relu];

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation's own output `y`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Activation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "activation",
                name: s.to_string(),
            })
    }
}

/// Logistic sigmoid; `exp` only ever sees a non-positive argument.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn activate(kind: Activation, x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| kind.apply(v)).collect()
}

/// Seeded ChaCha8 stream. Output depends only on the seed, never on the
/// platform.
#[derive(Clone, Debug)]
pub struct RngState {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform in `[0, 1)` from exactly one 64-bit draw.
    pub fn next_f64(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[-s, s]`.
    pub fn symmetric(&mut self, s: f64) -> f64 {
        (2.0 * self.next_f64() - 1.0) * s
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Glorot-uniform scale `sqrt(6 / (rows + cols))`.
pub fn glorot_scale(rows: usize, cols: usize) -> f64 {
    (6.0 / (rows + cols) as f64).sqrt()
}

/// Glorot-uniform matrix; consumes exactly `rows * cols` draws.
pub fn init_matrix(rng: &mut RngState, rows: usize, cols: usize) -> Matrix {
    let s = glorot_scale(rows, cols);
    let data = (0..rows * cols).map(|_| rng.symmetric(s)).collect();
    Matrix::from_vec(rows, cols, data).expect("rows and cols must be >= 1")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matvec_hand_sum() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(matvec(&a, &[1.0, 1.0]).unwrap(), vec![3.0, 7.0]);
    }

    #[test]
    fn matvec_identity() {
        let x = [5.0, -1.0, 0.0];
        assert_eq!(matvec(&Matrix::identity(3), &x).unwrap(), x.to_vec());
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn matvec_matches_naive_loop() {
        let mut rng = RngState::new(3);
        let a = init_matrix(&mut rng, 4, 3);
        let x: Vec<f64> = (0..3).map(|_| rng.symmetric(1.0)).collect();
        let mut naive = vec![0.0; 4];
        for i in 0..4 {
            let mut s = 0.0;
            for j in 0..3 {
                s += a.get(i, j) * x[j];
            }
            naive[i] = s;
        }
        // bit-exact: same summation order
        assert_eq!(matvec(&a, &x).unwrap(), naive);
    }

    #[test]
    fn matvec_rejects_mismatch() {
        let err = matvec(&Matrix::zeros(2, 3), &[1.0, 2.0]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("len 2"), "{msg}");
    }

    #[test]
    fn transposed_and_outer_kernels() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let mut y = vec![0.0; 3];
        matvec_t_acc(&a, &[1.0, -1.0], &mut y);
        assert_eq!(y, vec![-3.0, -3.0, -3.0]);
        let mut g = Matrix::zeros(2, 3);
        outer_acc(&mut g, &[1.0, 2.0], &[1.0, 0.0, -1.0]);
        assert_eq!(g.as_slice(), &[1.0, 0.0, -1.0, 2.0, 0.0, -2.0]);
    }

    #[test]
    fn hadamard_cases() {
        assert_eq!(hadamard(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), vec![3.0, 8.0]);
        let u = [0.3, -2.0, 7.5];
        assert_eq!(hadamard(&u, &[1.0; 3]).unwrap(), u.to_vec());
        assert_eq!(hadamard(&u, &[0.0; 3]).unwrap(), vec![0.0; 3]);
        assert!(hadamard(&u, &[1.0]).is_err());
    }

    #[test]
    fn activation_fixed_points() {
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
        assert_eq!(Activation::Tanh.apply(0.0), 0.0);
        assert_eq!(Activation::Relu.apply(-2.0), 0.0);
        assert_eq!(Activation::Relu.apply(3.0), 3.0);
    }

    #[test]
    fn sigmoid_does_not_overflow() {
        assert_eq!(sigmoid(800.0), 1.0);
        assert_eq!(sigmoid(-800.0), 0.0);
        assert!(sigmoid(-745.0).is_finite());
    }

    #[test]
    fn activation_parses() {
        for a in Activation::ALL {
            assert_eq!(a.name().parse::<Activation>().unwrap(), a);
        }
        assert!("gelu".parse::<Activation>().is_err());
    }

    #[test]
    fn derivatives_match_central_differences() {
        let h = 1e-6;
        for kind in [Activation::Sigmoid, Activation::Tanh, Activation::Relu] {
            let mut x: f64 = -10.0;
            while x <= 10.0 {
                if kind == Activation::Relu && x.abs() < 1e-3 {
                    x += 0.37;
                    continue;
                }
                let fd = (kind.apply(x + h) - kind.apply(x - h)) / (2.0 * h);
                let an = kind.derivative_from_output(kind.apply(x));
                assert!((fd - an).abs() <= 1e-8, "{kind} at {x}: fd {fd} vs {an}");
                x += 0.37;
            }
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_matrix(&mut RngState::new(42), 2, 2);
        let b = init_matrix(&mut RngState::new(42), 2, 2);
        assert_eq!(a, b);
    }

    #[test]
    fn init_respects_glorot_range() {
        let m = init_matrix(&mut RngState::new(1), 100, 100);
        let s = glorot_scale(100, 100);
        assert!(m.as_slice().iter().all(|v| v.abs() <= s));
    }

    #[test]
    fn init_consumes_exact_draw_count() {
        let mut a = RngState::new(9);
        let _ = init_matrix(&mut a, 3, 5);
        let mut b = RngState::new(9);
        for _ in 0..15 {
            b.next_f64();
        }
        assert_eq!(a.next_f64(), b.next_f64());
    }

    #[test]
    fn init_mean_is_near_zero() {
        let m = init_matrix(&mut RngState::new(2024), 1000, 1000);
        let mean = m.as_slice().iter().sum::<f64>() / m.len() as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn matrix_rejects_bad_shapes() {
        assert!(Matrix::from_vec(0, 3, vec![]).is_err());
        assert!(Matrix::from_vec(2, 2, vec![1.0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn matvec_distributes_over_addition(
            (rows, cols, a, x, y) in (1usize..=32, 1usize..=32).prop_flat_map(|(r, c)| (
                Just(r),
                Just(c),
                prop::collection::vec(-1.0f64..=1.0, r * c),
                prop::collection::vec(-1.0f64..=1.0, c),
                prop::collection::vec(-1.0f64..=1.0, c),
            ))
        ) {
            let a = Matrix::from_vec(rows, cols, a).unwrap();
            let lhs = matvec(&a, &add(&x, &y).unwrap()).unwrap();
            let rhs = add(&matvec(&a, &x).unwrap(), &matvec(&a, &y).unwrap()).unwrap();
            for (l, r) in lhs.iter().zip(&rhs) {
                prop_assert!((l - r).abs() <= 1e-12);
            }
        }

        #[test]
        fn sigmoid_is_point_symmetric(x in -50.0f64..50.0) {
            prop_assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() <= 1e-12);
        }
    }
}
