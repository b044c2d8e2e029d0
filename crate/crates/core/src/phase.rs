use alloc::vec;
use alloc::vec::Vec;

/// A point `(x, xi)` of phase space `R^n x R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
}

impl PhasePoint {
    pub fn new(x: Vec<f64>, xi: Vec<f64>) -> Self {
        assert_eq!(x.len(), xi.len(), "position and frequency dimensions differ");
        Self { x, xi }
    }

    /// One-dimensional point.
    pub fn new1(x: f64, xi: f64) -> Self {
        Self { x: vec![x], xi: vec![xi] }
    }

    pub fn origin(dim: usize) -> Self {
        Self { x: vec![0.0; dim], xi: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.xi).all(|v| v.is_finite())
    }

    /// Packs into `[x_1..x_n, xi_1..xi_n]`.
    pub fn to_state(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(2 * self.dim());
        s.extend_from_slice(&self.x);
        s.extend_from_slice(&self.xi);
        s
    }

    pub fn from_state(state: &[f64]) -> Self {
        let n = state.len() / 2;
        Self { x: state[..n].to_vec(), xi: state[n..2 * n].to_vec() }
    }

    /// ℓ¹ phase-space distance `|x - y| + |xi - eta|`, with Euclidean norms in each block.
    pub fn l1_distance(&self, other: &PhasePoint) -> f64 {
        euclid(&self.x, &other.x) + euclid(&self.xi, &other.xi)
    }

    pub fn euclidean_distance(&self, other: &PhasePoint) -> f64 {
        let dx = self.x.iter().zip(&other.x).map(|(a, b)| (a - b) * (a - b));
        let dxi = self.xi.iter().zip(&other.xi).map(|(a, b)| (a - b) * (a - b));
        libm::sqrt(dx.chain(dxi).sum())
    }

    pub fn sup_distance(&self, other: &PhasePoint) -> f64 {
        self.x
            .iter()
            .zip(&other.x)
            .chain(self.xi.iter().zip(&other.xi))
            .map(|(a, b)| libm::fabs(a - b))
            .fold(0.0, f64::max)
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum())
}
