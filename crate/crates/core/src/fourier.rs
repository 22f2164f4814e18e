//! Zero-mean trigonometric series on S¹, modes 1..=J.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrigSeries {
    /// cos[j-1] multiplies cos jθ
    pub cos: Vec<f64>,
    /// sin[j-1] multiplies sin jθ
    pub sin: Vec<f64>,
}

impl TrigSeries {
    pub fn zeros(j_max: usize) -> Self {
        TrigSeries {
            cos: vec![0.0; j_max],
            sin: vec![0.0; j_max],
        }
    }

    pub fn mode(j_max: usize, j: usize, a_cos: f64, a_sin: f64) -> Self {
        let mut t = Self::zeros(j_max.max(j));
        t.cos[j - 1] = a_cos;
        t.sin[j - 1] = a_sin;
        t
    }

    pub fn j_max(&self) -> usize {
        self.cos.len()
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let mut s = 0.0;
        for j in 0..self.cos.len() {
            let a = (j + 1) as f64 * theta;
            s += self.cos[j] * a.cos() + self.sin[j] * a.sin();
        }
        s
    }

    pub fn eval_deriv(&self, theta: f64) -> f64 {
        let mut s = 0.0;
        for j in 0..self.cos.len() {
            let k = (j + 1) as f64;
            let a = k * theta;
            s += k * (-self.cos[j] * a.sin() + self.sin[j] * a.cos());
        }
        s
    }

    /// Projection of equispaced samples onto modes 1..=j_max (discrete Fourier).
    pub fn from_samples(values: &[f64], j_max: usize) -> Self {
        let n = values.len();
        let mut t = Self::zeros(j_max);
        for j in 1..=j_max {
            let (mut c, mut s) = (0.0, 0.0);
            for (l, v) in values.iter().enumerate() {
                let a = 2.0 * std::f64::consts::PI * (j * l) as f64 / n as f64;
                c += v * a.cos();
                s += v * a.sin();
            }
            let scale = if 2 * j == n { 1.0 } else { 2.0 } / n as f64;
            t.cos[j - 1] = c * scale;
            t.sin[j - 1] = s * scale;
        }
        t
    }

    /// Coefficients as [c1, s1, c2, s2, ...].
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.cos.len());
        for j in 0..self.cos.len() {
            v.push(self.cos[j]);
            v.push(self.sin[j]);
        }
        v
    }

    pub fn from_vec(v: &[f64]) -> Self {
        let j = v.len() / 2;
        TrigSeries {
            cos: (0..j).map(|k| v[2 * k]).collect(),
            sin: (0..j).map(|k| v[2 * k + 1]).collect(),
        }
    }

    /// max |coefficient|
    pub fn max_abs(&self) -> f64 {
        self.cos
            .iter()
            .chain(&self.sin)
            .fold(0.0f64, |a, b| a.max(b.abs()))
    }

    /// L²(S¹, dθ/π) norm, i.e. the coefficient 2-norm.
    pub fn norm(&self) -> f64 {
        self.cos.iter().chain(&self.sin).map(|v| v * v).sum::<f64>().sqrt()
    }

    /// ∫ u w dθ over S¹
    pub fn inner(&self, other: &TrigSeries) -> f64 {
        let k = self.j_max().min(other.j_max());
        std::f64::consts::PI
            * (0..k)
                .map(|j| self.cos[j] * other.cos[j] + self.sin[j] * other.sin[j])
                .sum::<f64>()
    }

    pub fn scaled(&self, s: f64) -> Self {
        TrigSeries {
            cos: self.cos.iter().map(|v| v * s).collect(),
            sin: self.sin.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &TrigSeries) -> Self {
        let k = self.j_max().max(other.j_max());
        let get = |v: &Vec<f64>, j: usize| v.get(j).copied().unwrap_or(0.0);
        TrigSeries {
            cos: (0..k).map(|j| get(&self.cos, j) + get(&other.cos, j)).collect(),
            sin: (0..k).map(|j| get(&self.sin, j) + get(&other.sin, j)).collect(),
        }
    }

    pub fn truncated(&self, j_max: usize) -> Self {
        let mut t = Self::zeros(j_max);
        for j in 0..j_max.min(self.j_max()) {
            t.cos[j] = self.cos[j];
            t.sin[j] = self.sin[j];
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_round_trip() {
        let t = TrigSeries {
            cos: vec![0.1, -0.2, 0.0, 0.05],
            sin: vec![0.0, 0.3, -0.1, 0.0],
        };
        let n = 16;
        let vals: Vec<f64> = (0..n)
            .map(|l| t.eval(2.0 * std::f64::consts::PI * l as f64 / n as f64))
            .collect();
        let back = TrigSeries::from_samples(&vals, 4);
        for j in 0..4 {
            assert!((back.cos[j] - t.cos[j]).abs() < 1e-14);
            assert!((back.sin[j] - t.sin[j]).abs() < 1e-14);
        }
        assert_eq!(TrigSeries::from_vec(&t.to_vec()), t);
    }
}
